//! Depth refinement from normals: a sparse least-squares system whose
//! position terms pull toward the stereo depth and whose normal terms make
//! the surface tangents orthogonal to the given normals.
//!
//! With `P_i = ray_i z_i`, each valid right or down neighbor pair `(i, j)`
//! contributes `w_n (n_i . (P_j - P_i))^2`, linear in `(z_i, z_j)`.

mod bilateral;
mod cg;
mod ply;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::imaging::{Camera, DepthMap, NormalMap};

pub use bilateral::bilateral_smooth_depth;
pub use cg::{solve_fusion, FusionSolution, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
pub use ply::write_ply;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionWeights {
    pub w_z: f64,
    pub w_n: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights {
            w_z: 1.0,
            w_n: 10.0,
        }
    }
}

/// Symmetric sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(k, _)| k == c).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows()).map(|r| self.get(r, r)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.rows();
        let mut out = vec![vec![0.0; n]; n];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        out
    }

    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = vec![0];
        let (mut cols, mut values) = (Vec::new(), Vec::new());
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let start = cols.len();
            for (c, v) in row {
                if cols.len() > start && cols[cols.len() - 1] == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix {
            row_ptr,
            cols,
            values,
        }
    }
}

/// One squared residual `weight * (coeffs . z - target)^2` over unknowns.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Constraint {
    weight: f64,
    terms: [(usize, f64); 2],
    len: usize,
    target: f64,
}

/// Normal equations `A z = b` of the fusion energy over the pixels with valid
/// stereo depth.
#[derive(Debug, Clone)]
pub struct FusionSystem {
    width: usize,
    height: usize,
    /// Pixel index of each unknown.
    pixels: Vec<usize>,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Stereo depth of each unknown, the natural starting point.
    pub stereo: Vec<f64>,
    pub weights: FusionWeights,
    constraints: Vec<Constraint>,
}

pub fn build_fusion_system(
    stereo_depth: &DepthMap,
    normals: &NormalMap,
    camera: &Camera,
    weights: FusionWeights,
) -> Result<FusionSystem> {
    let (w, h) = (stereo_depth.width(), stereo_depth.height());
    ensure!(
        normals.width() == w && normals.height() == h && camera.width == w && camera.height == h,
        Error::Dimensions("depth, normals and camera must share dimensions".into())
    );
    let FusionWeights { w_z, w_n } = weights;
    ensure!(
        w_z >= 0.0 && w_n >= 0.0 && w_z.is_finite() && w_n.is_finite() && w_z + w_n > 0.0,
        Error::InvalidArgument(
            "fusion weights must be finite, nonnegative and not both zero".into()
        )
    );
    let mut unknown = vec![usize::MAX; w * h];
    let mut pixels = Vec::new();
    for i in (0..w * h).filter(|&i| stereo_depth.get_index(i).is_some()) {
        unknown[i] = pixels.len();
        pixels.push(i);
    }
    ensure!(!pixels.is_empty(), Error::EmptyMask("depth fusion"));
    let stereo: Vec<f64> = pixels.iter().map(|&i| stereo_depth.values()[i]).collect();
    let ray = |i: usize| camera.ray((i % w) as f64, (i / w) as f64);

    let mut constraints = Vec::new();
    for (u, &i) in pixels.iter().enumerate() {
        constraints.push(Constraint {
            weight: w_z,
            terms: [(u, 1.0), (u, 0.0)],
            len: 1,
            target: stereo[u],
        });
        let Some(n) = normals.get_index(i) else {
            continue;
        };
        let (x, y) = (i % w, i / w);
        let right = (x + 1 < w).then(|| i + 1);
        let down = (y + 1 < h).then(|| i + w);
        for j in [right, down].into_iter().flatten() {
            if unknown[j] == usize::MAX {
                continue;
            }
            constraints.push(Constraint {
                weight: w_n,
                terms: [(u, -n.dot(&ray(i))), (unknown[j], n.dot(&ray(j)))],
                len: 2,
                target: 0.0,
            });
        }
    }

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); pixels.len()];
    let mut rhs = vec![0.0; pixels.len()];
    for c in constraints.iter().filter(|c| c.weight > 0.0) {
        let terms = &c.terms[..c.len];
        for &(r, a) in terms {
            rhs[r] += c.weight * a * c.target;
            for &(k, b) in terms {
                rows[r].push((k, c.weight * (a * b)));
            }
        }
    }
    Ok(FusionSystem {
        width: w,
        height: h,
        pixels,
        matrix: CsrMatrix::from_rows(rows),
        rhs,
        stereo,
        weights,
        constraints,
    })
}

impl FusionSystem {
    pub fn unknowns(&self) -> usize {
        self.pixels.len()
    }

    /// Fusion energy at depths `z` (one per unknown).
    pub fn energy(&self, z: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| {
                let r: f64 =
                    c.terms[..c.len].iter().map(|&(k, a)| a * z[k]).sum::<f64>() - c.target;
                c.weight * r * r
            })
            .sum()
    }

    /// Scatters per-unknown depths back onto the pixel grid.
    pub fn to_depth_map(&self, z: &[f64]) -> Result<DepthMap> {
        let mut depth = vec![0.0; self.width * self.height];
        for (&i, &v) in self.pixels.iter().zip(z) {
            ensure!(
                v > 0.0,
                Error::Degenerate(format!(
                    "fused depth {v} at pixel {i} is not in front of the camera"
                ))
            );
            depth[i] = v;
        }
        DepthMap::new(self.width, self.height, depth)
    }
}

/// Root mean square depth difference over pixels in `mask` valid in both.
pub fn depth_rmse(depth: &DepthMap, reference: &DepthMap, mask: &[bool]) -> Result<f64> {
    ensure!(
        depth.width() == reference.width()
            && depth.height() == reference.height()
            && mask.len() == depth.width() * depth.height(),
        Error::Dimensions("depth maps and mask must share dimensions".into())
    );
    let (mut sum, mut count) = (0.0, 0usize);
    for i in (0..mask.len()).filter(|&i| mask[i]) {
        if let (Some(a), Some(b)) = (depth.get_index(i), reference.get_index(i)) {
            sum += (a - b) * (a - b);
            count += 1;
        }
    }
    ensure!(count > 0, Error::EmptyMask("depth rmse"));
    Ok((sum / count as f64).sqrt())
}
