//! Binary cast-shadow maps by ray marching toward a point light through the
//! depth map.
//!
//! For a surface point `P` and light position `Q`, the segment `P -> Q` is
//! clipped where it comes nearer to the camera than the closest valid depth
//! (nothing can occlude it past that point). The clipped segment is sampled
//! at `N = max(1, ceil(2 * projected_length_px))` evenly spaced points
//! `t_k = t_max * k / N`, `k = 1..=N`. A sample is occluded when it projects
//! inside the image onto a cell whose four corner depths are valid and its
//! own depth exceeds the bilinearly interpolated depth by more than
//! [`SHADOW_BIAS`]. Bilinear cells are half-open: `[x0, x0 + 1)` except the
//! last column and row, which are closed.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::Result;
use crate::imaging::{Camera, DepthMap, ImageGrid, PointLight};

/// Occlusion bias in meters.
pub const SHADOW_BIAS: f64 = 0.002;

/// Sample points along the shadow segment from `p` toward `light`.
pub fn shadow_samples(
    p: &Vector3<f64>,
    light: &Vector3<f64>,
    camera: &Camera,
    min_depth: f64,
) -> Vec<Vector3<f64>> {
    let dp = -p.z;
    let dl = -light.z;
    let t_max = if dl < min_depth {
        ((dp - min_depth) / (dp - dl)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    if t_max <= 0.0 {
        return Vec::new();
    }
    let end = p + (light - p) * t_max;
    let (Some(a), Some(b)) = (camera.project(p), camera.project(&end)) else {
        return Vec::new();
    };
    let length = (a.0 - b.0).hypot(a.1 - b.1);
    let n = ((2.0 * length).ceil() as usize).max(1);
    (1..=n)
        .map(|k| p + (light - p) * (t_max * k as f64 / n as f64))
        .collect()
}

/// Bilinear depth at fractional pixel `(u, v)`, if the enclosing cell has
/// four valid corners.
pub fn bilinear_depth(depth: &DepthMap, u: f64, v: f64) -> Option<f64> {
    let (w, h) = (depth.width(), depth.height());
    if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
        return None;
    }
    let x0 = (u.floor() as usize).min(w.saturating_sub(2));
    let y0 = (v.floor() as usize).min(h.saturating_sub(2));
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let (fx, fy) = (u - x0 as f64, v - y0 as f64);
    let d00 = depth.get(x0, y0)?;
    let d10 = depth.get(x1, y0)?;
    let d01 = depth.get(x0, y1)?;
    let d11 = depth.get(x1, y1)?;
    let top = d00 + (d10 - d00) * fx;
    let bottom = d01 + (d11 - d01) * fx;
    Some(top + (bottom - top) * fy)
}

fn occluded(depth: &DepthMap, camera: &Camera, q: &Vector3<f64>) -> bool {
    let Some((u, v)) = camera.project(q) else {
        return false;
    };
    bilinear_depth(depth, u, v).is_some_and(|stored| -q.z > stored + SHADOW_BIAS)
}

/// One-channel map: 1 where the light is visible from the surface, 0 where
/// it is occluded or the depth is invalid.
pub fn compute_shadow_map(
    depth: &DepthMap,
    camera: &Camera,
    light: &PointLight,
) -> Result<ImageGrid> {
    let (w, h) = (depth.width(), depth.height());
    let mut out = ImageGrid::zeros(w, h, 1);
    let Some(min_depth) = depth.min_valid() else {
        return Ok(out);
    };
    let lp = light.pos();
    let rows: Vec<Vec<f32>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let Some(d) = depth.get(x, y) else {
                        return 0.0;
                    };
                    let p = camera.ray(x as f64, y as f64) * d;
                    let blocked = shadow_samples(&p, &lp, camera, min_depth)
                        .iter()
                        .any(|q| occluded(depth, camera, q));
                    if blocked {
                        0.0
                    } else {
                        1.0
                    }
                })
                .collect()
        })
        .collect();
    for (y, row) in rows.into_iter().enumerate() {
        for (x, s) in row.into_iter().enumerate() {
            out.set(x, y, 0, s);
        }
    }
    Ok(out)
}
