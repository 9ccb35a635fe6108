use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Pinhole intrinsics. No distortion model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let cam = Camera {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Square-pixel camera with the principal point at the image center.
    pub fn centered(width: usize, height: usize, focal: f64) -> Result<Self> {
        Camera::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite(),
            Error::InvalidArgument("focal lengths must be positive".into())
        );
        ensure!(
            self.width > 0 && self.height > 0,
            Error::InvalidArgument("camera resolution must be nonzero".into())
        );
        ensure!(
            (0.0..=self.width as f64).contains(&self.cx)
                && (0.0..=self.height as f64).contains(&self.cy),
            Error::InvalidArgument("principal point must lie inside the image".into())
        );
        Ok(())
    }

    /// Ray through pixel `(px, py)` scaled so its depth component is 1.
    #[inline]
    pub fn ray(&self, px: f64, py: f64) -> Vector3<f64> {
        Vector3::new((px - self.cx) / self.fx, -(py - self.cy) / self.fy, -1.0)
    }

    /// Camera-space point seen at `(px, py)` at the given depth.
    pub fn unproject(&self, px: f64, py: f64, depth: f64) -> Result<Vector3<f64>> {
        ensure!(
            depth > 0.0 && depth.is_finite(),
            Error::InvalidArgument(format!("cannot unproject nonpositive depth {depth}"))
        );
        Ok(self.ray(px, py) * depth)
    }

    /// Pixel coordinates of a point in front of the camera.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        let depth = -p.z;
        (depth > 0.0).then(|| {
            (
                self.cx + self.fx * p.x / depth,
                self.cy - self.fy * p.y / depth,
            )
        })
    }

    pub fn len_pixels(&self) -> usize {
        self.width * self.height
    }
}

/// Calibrated point light: position in camera coordinates (meters) and
/// per-channel intensity ordered R, G, B, NIR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointLight {
    pub position: [f64; 3],
    pub intensity: [f64; 4],
}

impl PointLight {
    pub fn new(position: [f64; 3], intensity: [f64; 4]) -> Result<Self> {
        ensure!(
            intensity.iter().all(|&v| v >= 0.0 && v.is_finite()),
            Error::InvalidArgument("light intensity must be nonnegative".into())
        );
        ensure!(
            position.iter().all(|v| v.is_finite()),
            Error::InvalidArgument("light position must be finite".into())
        );
        Ok(PointLight {
            position,
            intensity,
        })
    }

    pub fn pos(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    pub fn scaled(&self, factor: f64) -> PointLight {
        PointLight {
            position: self.position,
            intensity: self.intensity.map(|v| v * factor),
        }
    }

    pub fn is_dark(&self) -> bool {
        self.intensity.iter().all(|&v| v == 0.0)
    }
}

/// How light intensity varies with distance to the surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Falloff {
    /// Intensity scaled by `1 / r^2`.
    #[default]
    InverseSquare,
    /// Intensity used as calibrated, independent of distance.
    Constant,
}

impl Falloff {
    #[inline]
    pub fn factor(self, geometry: &LightGeometry) -> f64 {
        match self {
            Falloff::InverseSquare => geometry.falloff,
            Falloff::Constant => 1.0,
        }
    }
}

/// Shading geometry of one surface point under one light.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightGeometry {
    /// Unit vector from the surface toward the light.
    pub l: Vector3<f64>,
    /// Unit vector from the surface toward the camera.
    pub v: Vector3<f64>,
    /// `1 / r^2` with `r` the light-to-surface distance.
    pub falloff: f64,
}

/// Light and view directions for the surface point seen at `(px, py)`.
pub fn light_dir_and_view(
    camera: &Camera,
    px: f64,
    py: f64,
    depth: f64,
    light: &PointLight,
) -> Result<LightGeometry> {
    let p = camera.unproject(px, py, depth)?;
    geometry_at(&p, light)
}

pub(crate) fn geometry_at(p: &Vector3<f64>, light: &PointLight) -> Result<LightGeometry> {
    let to_light = light.pos() - p;
    let dist2 = to_light.norm_squared();
    ensure!(
        dist2 >= 1e-12,
        Error::Degenerate("light coincides with the surface point".into())
    );
    Ok(LightGeometry {
        l: to_light / dist2.sqrt(),
        v: -p.normalize(),
        falloff: 1.0 / dist2,
    })
}
