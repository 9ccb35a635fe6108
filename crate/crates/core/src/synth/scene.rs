use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::brdf::{Surface, DEFAULT_EXPONENT};
use crate::error::{ensure, Error, Result};
use crate::imaging::{Camera, DepthMap, ImageGrid, Label, NormalMap, SegmentationMap, MIN_FACING};

/// Reflectance painted over one vertical stripe of the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialBand {
    pub albedo: [f64; 4],
    #[serde(default)]
    pub specular: f64,
}

impl MaterialBand {
    pub fn new(albedo: [f64; 4], specular: f64) -> Self {
        MaterialBand { albedo, specular }
    }
}

/// Synthetic ground truth for a scene seen by `camera`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    pub camera: Camera,
    pub depth: DepthMap,
    pub normals: NormalMap,
    /// Four-channel diffuse albedo.
    pub albedo: ImageGrid,
    /// One-channel specular intensity.
    pub specular: ImageGrid,
    pub segmentation: SegmentationMap,
    pub exponent: f64,
}

impl SceneTruth {
    pub fn surface(&self) -> Surface<'_> {
        Surface {
            normals: &self.normals,
            albedo: &self.albedo,
            specular: &self.specular,
            exponent: self.exponent,
        }
    }

    /// Pixels with both valid depth and a valid normal.
    pub fn valid_mask(&self) -> Vec<bool> {
        (0..self.camera.len_pixels())
            .map(|i| self.depth.get_index(i).is_some() && self.normals.is_valid(i))
            .collect()
    }
}

fn check_bands(bands: &[MaterialBand]) -> Result<()> {
    ensure!(
        !bands.is_empty(),
        Error::InvalidArgument("at least one material band is required".into())
    );
    for b in bands {
        ensure!(
            b.albedo.iter().all(|&a| a >= 0.0 && a.is_finite()) && b.specular >= 0.0,
            Error::InvalidArgument("material bands need nonnegative albedo and specular".into())
        );
    }
    Ok(())
}

fn band_at(bands: &[MaterialBand], x: usize, width: usize) -> &MaterialBand {
    &bands[(x * bands.len() / width).min(bands.len() - 1)]
}

fn paint(
    camera: &Camera,
    bands: &[MaterialBand],
    covered: impl Fn(usize) -> bool,
) -> (ImageGrid, ImageGrid) {
    let (w, h) = (camera.width, camera.height);
    let mut albedo = ImageGrid::zeros(w, h, 4);
    let mut specular = ImageGrid::zeros(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !covered(i) {
                continue;
            }
            let b = band_at(bands, x, w);
            for c in 0..4 {
                albedo.set(x, y, c, b.albedo[c] as f32);
            }
            specular.set(x, y, 0, b.specular as f32);
        }
    }
    (albedo, specular)
}

/// Sphere of `radius` meters centered at `center` (camera coordinates, so
/// `center[2] < 0`). Background pixels get invalid depth and the background
/// label; normals steeper than `n_z < 0.05` are marked invalid.
pub fn make_sphere_scene(
    camera: &Camera,
    radius: f64,
    center: [f64; 3],
    bands: &[MaterialBand],
) -> Result<SceneTruth> {
    camera.validate()?;
    check_bands(bands)?;
    ensure!(
        radius > 0.0,
        Error::InvalidArgument("radius must be positive".into())
    );
    let c = Vector3::from(center);
    ensure!(
        -c.z - radius > 0.0,
        Error::InvalidArgument("sphere must lie entirely in front of the camera".into())
    );
    let hit = |px: f64, py: f64| -> Option<f64> {
        let r = camera.ray(px, py);
        let rr = r.norm_squared();
        let rc = r.dot(&c);
        let disc = rc * rc - rr * (c.norm_squared() - radius * radius);
        (disc >= 0.0).then(|| (rc - disc.sqrt()) / rr)
    };
    let (w, h) = (camera.width, camera.height);
    // The silhouette may not touch the image border.
    let border_hit = (0..w)
        .any(|x| hit(x as f64, 0.0).is_some() || hit(x as f64, (h - 1) as f64).is_some())
        || (0..h).any(|y| hit(0.0, y as f64).is_some() || hit((w - 1) as f64, y as f64).is_some());
    ensure!(
        !border_hit,
        Error::InvalidArgument("sphere is clipped by the camera frustum".into())
    );

    let depth = DepthMap::from_fn(w, h, |x, y| hit(x as f64, y as f64).unwrap_or(0.0));
    let mut normals = NormalMap::from_fn(w, h, |x, y| {
        depth
            .get(x, y)
            .map(|d| (camera.ray(x as f64, y as f64) * d - c) / radius)
    });
    normals.restrict_facing(MIN_FACING);
    let segmentation = SegmentationMap::from_fn(w, h, |x, y| {
        if depth.get(x, y).is_some() {
            Label::Head
        } else {
            Label::Background
        }
    });
    let (albedo, specular) = paint(camera, bands, |i| depth.get_index(i).is_some());
    Ok(SceneTruth {
        camera: *camera,
        depth,
        normals,
        albedo,
        specular,
        segmentation,
        exponent: DEFAULT_EXPONENT,
    })
}

/// Closed-form height field: `base + amplitude * sum_k w_k sin(2 pi (d_k . p) / wavelength + phase_k)`
/// with `p` in pixels and seeded directions, phases and weights (summing to 1).
#[derive(Debug, Clone, PartialEq)]
pub struct BumpField {
    pub base_depth: f64,
    pub amplitude: f64,
    pub wavelength_px: f64,
    components: Vec<BumpComponent>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BumpComponent {
    dir: (f64, f64),
    phase: f64,
    weight: f64,
}

const BUMP_COMPONENTS: usize = 3;

impl BumpField {
    pub fn new(base_depth: f64, amplitude: f64, wavelength_px: f64, seed: u64) -> Result<Self> {
        ensure!(
            base_depth > 0.0,
            Error::InvalidArgument("base depth must be positive".into())
        );
        ensure!(
            amplitude >= 0.0 && amplitude < base_depth / 10.0,
            Error::InvalidArgument("bump amplitude must be below a tenth of the base depth".into())
        );
        ensure!(
            wavelength_px > 0.0,
            Error::InvalidArgument("bump wavelength must be positive".into())
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut components: Vec<BumpComponent> = (0..BUMP_COMPONENTS)
            .map(|_| {
                let theta = rng.random_range(0.0..PI);
                BumpComponent {
                    dir: (theta.cos(), theta.sin()),
                    phase: rng.random_range(0.0..2.0 * PI),
                    weight: rng.random_range(0.5..1.0),
                }
            })
            .collect();
        let total: f64 = components.iter().map(|c| c.weight).sum();
        for c in &mut components {
            c.weight /= total;
        }
        Ok(BumpField {
            base_depth,
            amplitude,
            wavelength_px,
            components,
        })
    }

    fn arg(&self, c: &BumpComponent, px: f64, py: f64) -> f64 {
        2.0 * PI * (c.dir.0 * px + c.dir.1 * py) / self.wavelength_px + c.phase
    }

    pub fn depth_at(&self, px: f64, py: f64) -> f64 {
        self.base_depth
            + self.amplitude
                * self
                    .components
                    .iter()
                    .map(|c| c.weight * self.arg(c, px, py).sin())
                    .sum::<f64>()
    }

    /// `(d depth / d px, d depth / d py)`.
    pub fn gradient_at(&self, px: f64, py: f64) -> (f64, f64) {
        let k = 2.0 * PI / self.wavelength_px;
        self.components.iter().fold((0.0, 0.0), |(gx, gy), c| {
            let s = self.amplitude * c.weight * k * self.arg(c, px, py).cos();
            (gx + s * c.dir.0, gy + s * c.dir.1)
        })
    }

    /// Surface normal of the unprojected height field at `(px, py)`.
    pub fn normal_at(&self, camera: &Camera, px: f64, py: f64) -> Vector3<f64> {
        let z = self.depth_at(px, py);
        let (zx, zy) = self.gradient_at(px, py);
        let r = camera.ray(px, py);
        let tangent_x = r * zx + Vector3::new(z / camera.fx, 0.0, 0.0);
        // Image rows grow downward, so the upward tangent is -dP/dpy.
        let tangent_up = -(r * zy + Vector3::new(0.0, -z / camera.fy, 0.0));
        tangent_x.cross(&tangent_up).normalize()
    }
}

/// Plane at `base_depth` covered in sinusoidal bumps. The left half of the
/// image is labeled head and the right half body.
pub fn make_bumpfield_scene(
    camera: &Camera,
    field: &BumpField,
    bands: &[MaterialBand],
) -> Result<SceneTruth> {
    camera.validate()?;
    check_bands(bands)?;
    let (w, h) = (camera.width, camera.height);
    let depth = DepthMap::from_fn(w, h, |x, y| field.depth_at(x as f64, y as f64));
    let mut normals = NormalMap::from_fn(w, h, |x, y| {
        Some(field.normal_at(camera, x as f64, y as f64))
    });
    normals.restrict_facing(MIN_FACING);
    let segmentation =
        SegmentationMap::from_fn(
            w,
            h,
            |x, _| {
                if 2 * x < w {
                    Label::Head
                } else {
                    Label::Body
                }
            },
        );
    let (albedo, specular) = paint(camera, bands, |_| true);
    Ok(SceneTruth {
        camera: *camera,
        depth,
        normals,
        albedo,
        specular,
        segmentation,
        exponent: DEFAULT_EXPONENT,
    })
}
