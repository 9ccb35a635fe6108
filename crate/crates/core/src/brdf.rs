//! Image formation: a Lambertian term plus a Blinn-Phong lobe under a point
//! light,
//!
//! ```text
//! f = a + rho * (m + 2) / (2 pi) * max(n.h, 0)^m
//! I = f * max(n.l, 0) * L
//! ```
//!
//! with analytic partial derivatives for the solver.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::imaging::{Camera, DepthMap, Falloff, ImageGrid, NormalMap, PointLight};

/// Specular exponent used everywhere unless overridden.
pub const DEFAULT_EXPONENT: f64 = 30.0;

const UNIT_TOLERANCE: f64 = 1e-4;

/// Which vector the highlight is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HalfVector {
    /// `h = (v + l) / |v + l|`.
    #[default]
    Blinn,
    /// `h = (n + l) / |n + l|`, the alternative reading of the lobe.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RenderOptions {
    pub falloff: Falloff,
    pub half_vector: HalfVector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    /// Diffuse albedo, R, G, B, NIR.
    pub albedo: [f64; 4],
    /// Specular intensity `rho`.
    pub specular: f64,
    /// Specular exponent `m`.
    pub exponent: f64,
}

impl Material {
    pub fn new(albedo: [f64; 4], specular: f64, exponent: f64) -> Result<Self> {
        ensure!(
            albedo.iter().all(|&a| a >= 0.0 && a.is_finite()),
            Error::InvalidArgument("albedo must be nonnegative".into())
        );
        ensure!(
            specular >= 0.0 && specular.is_finite(),
            Error::InvalidArgument("specular intensity must be nonnegative".into())
        );
        ensure!(
            exponent > 0.0 && exponent.is_finite(),
            Error::InvalidArgument("specular exponent must be positive".into())
        );
        Ok(Material {
            albedo,
            specular,
            exponent,
        })
    }

    pub fn lambertian(albedo: [f64; 4]) -> Result<Self> {
        Material::new(albedo, 0.0, DEFAULT_EXPONENT)
    }
}

/// Geometry and incident intensity at one surface point. `light` already
/// includes any distance falloff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadePoint {
    pub n: Vector3<f64>,
    pub l: Vector3<f64>,
    pub v: Vector3<f64>,
    pub light: [f64; 4],
}

fn check_unit(v: &Vector3<f64>, name: &str) -> Result<()> {
    ensure!(
        (v.norm() - 1.0).abs() <= UNIT_TOLERANCE,
        Error::InvalidArgument(format!(
            "{name} must be a unit vector, |{name}| = {}",
            v.norm()
        ))
    );
    Ok(())
}

pub fn half_vector(l: &Vector3<f64>, v: &Vector3<f64>) -> Result<Vector3<f64>> {
    (l + v)
        .try_normalize(1e-12)
        .ok_or_else(|| Error::Degenerate("light and view vectors are opposite".into()))
}

/// Normalization of the Blinn-Phong lobe, `(m + 2) / (2 pi)`.
#[inline]
pub fn lobe_scale(exponent: f64) -> f64 {
    (exponent + 2.0) / (2.0 * PI)
}

#[inline]
pub(crate) fn pow_exponent(x: f64, m: f64) -> f64 {
    if m.fract() == 0.0 && m <= 64.0 {
        x.powi(m as i32)
    } else {
        x.powf(m)
    }
}

fn highlight_axis(
    mode: HalfVector,
    n: &Vector3<f64>,
    l: &Vector3<f64>,
    v: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    match mode {
        HalfVector::Blinn => half_vector(l, v),
        HalfVector::PaperLiteral => (n + l)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Degenerate("normal and light vectors are opposite".into())),
    }
}

/// Reflectance ratio `f(l, v, n)` per channel.
pub fn reflectance(
    material: &Material,
    n: &Vector3<f64>,
    l: &Vector3<f64>,
    v: &Vector3<f64>,
    mode: HalfVector,
) -> Result<[f64; 4]> {
    check_unit(n, "n")?;
    check_unit(l, "l")?;
    check_unit(v, "v")?;
    let h = highlight_axis(mode, n, l, v)?;
    let lobe = material.specular
        * lobe_scale(material.exponent)
        * pow_exponent(n.dot(&h).max(0.0), material.exponent);
    Ok(material.albedo.map(|a| a + lobe))
}

/// Observed intensity `f * max(n.l, 0) * L`.
pub fn shade(material: &Material, point: &ShadePoint, mode: HalfVector) -> Result<[f64; 4]> {
    let f = reflectance(material, &point.n, &point.l, &point.v, mode)?;
    let cos = point.n.dot(&point.l).max(0.0);
    if cos == 0.0 {
        return Ok([0.0; 4]);
    }
    Ok(std::array::from_fn(|c| f[c] * cos * point.light[c]))
}

/// Partial derivatives of [`shade`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadeGradients {
    /// `d I_c / d n`, one row per channel, with respect to the unconstrained
    /// normal vector.
    pub d_normal: [[f64; 3]; 4],
    /// Diagonal of `d I / d a`; `d I_c / d a_k = 0` for `k != c`.
    pub d_albedo: [f64; 4],
    /// `d I_c / d log(rho)`.
    pub d_log_specular: [f64; 4],
}

impl ShadeGradients {
    pub const ZERO: ShadeGradients = ShadeGradients {
        d_normal: [[0.0; 3]; 4],
        d_albedo: [0.0; 4],
        d_log_specular: [0.0; 4],
    };
}

pub fn shade_gradients(
    material: &Material,
    point: &ShadePoint,
    mode: HalfVector,
) -> Result<ShadeGradients> {
    check_unit(&point.n, "n")?;
    check_unit(&point.l, "l")?;
    check_unit(&point.v, "v")?;
    let h = highlight_axis(mode, &point.n, &point.l, &point.v)?;
    let kernel = ShadeKernel::new(material.exponent, mode);
    let (_, grads) = kernel.eval(
        &point.n,
        &point.l,
        &h,
        &material.albedo,
        material.specular,
        &point.light,
        true,
    );
    Ok(grads)
}

/// Unchecked shading kernel shared by rendering, the solver and the gradient
/// tests. `h` is the Blinn half vector; in [`HalfVector::PaperLiteral`] mode
/// it is ignored and recomputed from `n`.
#[derive(Debug, Clone, Copy)]
pub struct ShadeKernel {
    pub exponent: f64,
    pub mode: HalfVector,
    scale: f64,
}

impl ShadeKernel {
    pub fn new(exponent: f64, mode: HalfVector) -> Self {
        ShadeKernel {
            exponent,
            mode,
            scale: lobe_scale(exponent),
        }
    }

    /// Returns the intensity and, when `with_gradients`, its partials. The
    /// normal need not be unit length.
    #[inline]
    #[allow(clippy::too_many_arguments)]
    pub fn eval(
        &self,
        n: &Vector3<f64>,
        l: &Vector3<f64>,
        h_blinn: &Vector3<f64>,
        albedo: &[f64; 4],
        specular: f64,
        light: &[f64; 4],
        with_gradients: bool,
    ) -> ([f64; 4], ShadeGradients) {
        let cos = n.dot(l);
        if cos <= 0.0 {
            return ([0.0; 4], ShadeGradients::ZERO);
        }
        let (ndh, d_ndh) = match self.mode {
            HalfVector::Blinn => (n.dot(h_blinn), *h_blinn),
            HalfVector::PaperLiteral => {
                let s = n + l;
                let len = s.norm();
                let h = s / len;
                let ndh = n.dot(&h);
                (ndh, h + (n - h * ndh) / len)
            }
        };
        let (lobe, d_lobe_d_ndh) = if ndh > 0.0 && specular > 0.0 {
            let p = pow_exponent(ndh, self.exponent - 1.0);
            let base = specular * self.scale;
            (base * p * ndh, base * self.exponent * p)
        } else {
            (0.0, 0.0)
        };
        let mut out = [0.0; 4];
        for c in 0..4 {
            out[c] = (albedo[c] + lobe) * cos * light[c];
        }
        if !with_gradients {
            return (out, ShadeGradients::ZERO);
        }
        let mut g = ShadeGradients::ZERO;
        for c in 0..4 {
            let f = albedo[c] + lobe;
            let dn = l * (f * light[c]) + d_ndh * (cos * d_lobe_d_ndh * light[c]);
            g.d_normal[c] = [dn.x, dn.y, dn.z];
            g.d_albedo[c] = cos * light[c];
            g.d_log_specular[c] = lobe * cos * light[c];
        }
        (out, g)
    }
}

/// Per-pixel maps describing a surface's shape and reflectance.
#[derive(Debug, Clone, Copy)]
pub struct Surface<'a> {
    pub normals: &'a NormalMap,
    /// Four-channel albedo.
    pub albedo: &'a ImageGrid,
    /// One-channel specular intensity `rho` (linear, not log).
    pub specular: &'a ImageGrid,
    pub exponent: f64,
}

impl Surface<'_> {
    fn check(&self, depth: &DepthMap, camera: &Camera) -> Result<()> {
        let (w, h) = (camera.width, camera.height);
        ensure!(
            self.normals.width() == w
                && self.normals.height() == h
                && depth.width() == w
                && depth.height() == h,
            Error::Dimensions(format!("surface maps must be {w}x{h}"))
        );
        self.albedo.expect_shape(w, h, "albedo")?;
        self.specular.expect_shape(w, h, "specular map")?;
        ensure!(
            self.albedo.channels() == 4 && self.specular.channels() == 1,
            Error::InvalidArgument("albedo needs 4 channels and specular 1".into())
        );
        Ok(())
    }
}

/// Renders a four-channel image of `surface` under one point light.
/// Pixels without valid depth or normal are black; `shadow`, when given, is a
/// one-channel binary mask multiplied into the result.
pub fn render(
    surface: &Surface,
    depth: &DepthMap,
    camera: &Camera,
    light: &PointLight,
    shadow: Option<&ImageGrid>,
    options: &RenderOptions,
) -> Result<ImageGrid> {
    surface.check(depth, camera)?;
    if let Some(s) = shadow {
        s.expect_shape(camera.width, camera.height, "shadow map")?;
        ensure!(
            s.channels() == 1,
            Error::InvalidArgument("shadow maps have 1 channel".into())
        );
    }
    let w = camera.width;
    let kernel = ShadeKernel::new(surface.exponent, options.half_vector);
    let mut data = vec![0f32; w * camera.height * 4];
    data.par_chunks_mut(w * 4)
        .enumerate()
        .try_for_each(|(y, row)| -> Result<()> {
            for x in 0..w {
                let i = y * w + x;
                if shadow.is_some_and(|s| s.pixel(i)[0] == 0.0) {
                    continue;
                }
                let (Some(d), Some(n)) = (depth.get_index(i), surface.normals.get_index(i)) else {
                    continue;
                };
                let g = crate::imaging::light_dir_and_view(camera, x as f64, y as f64, d, light)?;
                if n.dot(&g.l) <= 0.0 {
                    continue;
                }
                let h = match options.half_vector {
                    HalfVector::Blinn => half_vector(&g.l, &g.v)?,
                    HalfVector::PaperLiteral => Vector3::zeros(),
                };
                let scale = options.falloff.factor(&g);
                let l_eff = light.intensity.map(|v| v * scale);
                let a = surface.albedo.pixel(i);
                let albedo = [a[0] as f64, a[1] as f64, a[2] as f64, a[3] as f64];
                let rho = surface.specular.pixel(i)[0] as f64;
                let (out, _) = kernel.eval(&n, &g.l, &h, &albedo, rho, &l_eff, false);
                let s = shadow.map_or(1.0, |s| s.pixel(i)[0] as f64);
                for c in 0..4 {
                    row[x * 4 + c] = (out[c] * s) as f32;
                }
            }
            Ok(())
        })?;
    ImageGrid::from_vec(w, camera.height, 4, data)
}
