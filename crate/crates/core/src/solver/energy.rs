use nalgebra::Vector3;
use rayon::prelude::*;

use super::bundle::{DataBundle, Observation};
use super::{LossConfig, SceneEstimate};
use crate::brdf::{render, RenderOptions, ShadeKernel, Surface};
use crate::error::{ensure, Error, Result};
use crate::imaging::{Camera, DepthMap, ImageGrid, NormalMap, SegmentationMap, MIN_FACING};

/// Photometric residuals this small count as zero when choosing the L1
/// subgradient, so float32 rounding of the data cannot move a converged
/// pixel.
pub(crate) const RESIDUAL_DEADZONE: f64 = 1e-6;
const EXACT_DEADZONE: f64 = 1e-12;

#[inline]
fn sign(x: f64, deadzone: f64) -> f64 {
    if x > deadzone {
        1.0
    } else if x < -deadzone {
        -1.0
    } else {
        0.0
    }
}

/// Continuous orthonormal tangent basis of a unit normal with `n_z > 0`.
#[inline]
pub fn tangent_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let s = 1f64.copysign(n.z);
    let a = -1.0 / (s + n.z);
    let b = n.x * n.y * a;
    (
        Vector3::new(1.0 + s * n.x * n.x * a, s * b, -s * n.x),
        Vector3::new(b, s + n.y * n.y * a, -n.y),
    )
}

/// Float64 working copy of a [`SceneEstimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateState {
    width: usize,
    height: usize,
    pub normals: Vec<Vector3<f64>>,
    pub valid: Vec<bool>,
    pub albedo: Vec<[f64; 4]>,
    pub log_specular: Vec<f64>,
}

impl EstimateState {
    pub fn from_estimate(e: &SceneEstimate) -> Self {
        let n = e.width() * e.height();
        EstimateState {
            width: e.width(),
            height: e.height(),
            normals: (0..n)
                .map(|i| e.normals.get_index(i).unwrap_or_else(Vector3::z))
                .collect(),
            valid: e.normals.mask(),
            albedo: (0..n)
                .map(|i| std::array::from_fn(|c| e.albedo.pixel(i)[c] as f64))
                .collect(),
            log_specular: e.log_specular.data().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn to_estimate(&self) -> SceneEstimate {
        let (w, h) = (self.width, self.height);
        let mut normals = NormalMap::invalid(w, h);
        for i in 0..w * h {
            normals.set_index(i, self.valid[i].then_some(self.normals[i]));
        }
        let albedo = ImageGrid::from_fn(w, h, 4, |x, y, c| self.albedo[y * w + x][c] as f32);
        let log_specular =
            ImageGrid::from_fn(w, h, 1, |x, y, _| self.log_specular[y * w + x] as f32);
        SceneEstimate {
            normals,
            albedo,
            log_specular,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Moves normal `i` by `(du, dw)` in its tangent plane and renormalizes,
    /// keeping `n_z >= MIN_FACING`.
    pub fn step_normal(&mut self, i: usize, du: f64, dw: f64) {
        self.normals[i] = stepped_normal(&self.normals[i], du, dw);
    }
}

pub(crate) fn stepped_normal(n: &Vector3<f64>, du: f64, dw: f64) -> Vector3<f64> {
    let (t1, t2) = tangent_basis(n);
    let mut m = (n + t1 * du + t2 * dw).normalize();
    if m.z < MIN_FACING {
        let xy = (m.x * m.x + m.y * m.y).sqrt();
        let r = (1.0 - MIN_FACING * MIN_FACING).sqrt() / xy;
        m = Vector3::new(m.x * r, m.y * r, MIN_FACING);
    }
    m
}

/// One image row of the normal, albedo and log-specular gradients.
type GradientRow<'a> = (&'a mut [[f64; 2]], &'a mut [[f64; 4]], &'a mut [f64]);

/// Raw (unweighted) loss terms and the weighted total.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub stereo: f64,
    /// One mean absolute residual per observation.
    pub photometric: Vec<f64>,
    pub prior: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn photometric_sum(&self) -> f64 {
        self.photometric.iter().sum()
    }
}

/// Energy gradient: tangent-plane coordinates for normals (along the basis
/// of [`tangent_basis`]), albedo and `log(rho)`. Zero outside the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub normal: Vec<[f64; 2]>,
    pub albedo: Vec<[f64; 4]>,
    pub log_specular: Vec<f64>,
}

impl Gradient {
    fn zeros(n: usize) -> Self {
        Gradient {
            normal: vec![[0.0; 2]; n],
            albedo: vec![[0.0; 4]; n],
            log_specular: vec![0.0; n],
        }
    }

    /// Euclidean norm, ignoring albedo components held at the zero bound.
    pub fn projected_norm(&self, state: &EstimateState) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.normal.len() {
            sum += self.normal[i][0].powi(2) + self.normal[i][1].powi(2);
            sum += self.log_specular[i].powi(2);
            for c in 0..4 {
                let g = self.albedo[i][c];
                if !(state.albedo[i][c] <= 0.0 && g > 0.0) {
                    sum += g * g;
                }
            }
        }
        sum.sqrt()
    }
}

/// Per-term normalizers and weights shared by every evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Weights {
    pub stereo: f64,
    pub photometric: f64,
    pub prior: f64,
    pub lambda_p: f64,
    pub lambda_c: f64,
    /// Clothing pixels inside the mask.
    pub clothing: Vec<bool>,
    pub radius: usize,
    pub kernel: ShadeKernel,
}

impl Weights {
    pub fn new(bundle: &DataBundle, cfg: &LossConfig) -> Result<Self> {
        cfg.validate()?;
        let mask = bundle.mask();
        let n = mask.iter().filter(|&&m| m).count();
        ensure!(n > 0, Error::EmptyMask("energy"));
        let clothing: Vec<bool> = (0..mask.len())
            .map(|i| mask[i] && cfg.is_clothing(bundle.segmentation.get_index(i)))
            .collect();
        let nc = clothing.iter().filter(|&&c| c).count();
        Ok(Weights {
            stereo: 1.0 / n as f64,
            photometric: 1.0 / (4 * n) as f64,
            prior: if nc == 0 { 0.0 } else { 1.0 / nc as f64 },
            lambda_p: cfg.lambda_p,
            lambda_c: cfg.lambda_c,
            clothing,
            radius: cfg.neighborhood / 2,
            kernel: ShadeKernel::new(cfg.exponent, bundle.options.half_vector),
        })
    }
}

/// Per-pixel parameters.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PixelParams {
    pub n: Vector3<f64>,
    pub albedo: [f64; 4],
    pub log_specular: f64,
}

impl PixelParams {
    pub fn of(state: &EstimateState, i: usize) -> Self {
        PixelParams {
            n: state.normals[i],
            albedo: state.albedo[i],
            log_specular: state.log_specular[i],
        }
    }
}

/// Unweighted stereo and per-observation photometric sums at one pixel,
/// with the gradient of their weighted combination when requested.
#[derive(Debug, Clone, Default)]
struct LocalTerms {
    stereo: f64,
    photometric: Vec<f64>,
    d_n: Vector3<f64>,
    d_albedo: [f64; 4],
    d_log_specular: f64,
}

fn local_terms(
    bundle: &DataBundle,
    w: &Weights,
    i: usize,
    p: &PixelParams,
    with_gradient: bool,
) -> LocalTerms {
    let mut out = LocalTerms {
        photometric: vec![0.0; bundle.observations.len()],
        ..Default::default()
    };
    let s = bundle
        .stereo_normals
        .get_index(i)
        .expect("mask implies valid stereo normal");
    let d = p.n - s;
    out.stereo = d.abs().sum() - p.n.dot(&s);
    if with_gradient {
        let sg = d.map(|v| sign(v, EXACT_DEADZONE));
        out.d_n += (sg - s) * w.stereo;
    }

    let specular = p.log_specular.exp();
    for (o, obs) in bundle.observations.iter().enumerate() {
        let mut rendered = [0.0; 4];
        let mut d_n = [Vector3::zeros(); 4];
        let mut d_a = [0.0; 4];
        let mut d_ls = [0.0; 4];
        let mut lit = false;
        for g in bundle.sources(i, o).iter().filter(|g| g.lit) {
            lit = true;
            let (v, grads) = w.kernel.eval(
                &p.n,
                &g.l,
                &g.h,
                &p.albedo,
                specular,
                &g.radiance,
                with_gradient,
            );
            for c in 0..4 {
                rendered[c] += v[c];
                if with_gradient {
                    d_n[c] += Vector3::from(grads.d_normal[c]);
                    d_a[c] += grads.d_albedo[c];
                    d_ls[c] += grads.d_log_specular[c];
                }
            }
        }
        if !lit {
            continue;
        }
        let observed = obs.image.pixel(i);
        let scale = w.lambda_p * w.photometric;
        for c in 0..4 {
            let r = rendered[c] - observed[c] as f64;
            out.photometric[o] += r.abs();
            if with_gradient {
                let sg = sign(r, RESIDUAL_DEADZONE) * scale;
                if sg != 0.0 {
                    out.d_n += d_n[c] * sg;
                    out.d_albedo[c] += d_a[c] * sg;
                    out.d_log_specular += d_ls[c] * sg;
                }
            }
        }
    }
    out
}

/// `sum_{k in N(i) ∩ C} |a_i - a_k|_1` and, optionally, its subgradient
/// with respect to `a_i` (each unordered pair appears twice in the prior).
fn prior_terms(
    state: &EstimateState,
    w: &Weights,
    i: usize,
    a: &[f64; 4],
    grad: Option<&mut [f64; 4]>,
) -> f64 {
    if !w.clothing[i] {
        return 0.0;
    }
    let (width, height) = (state.width, state.height);
    let (x, y) = (i % width, i / width);
    let r = w.radius;
    let mut sum = 0.0;
    let mut g = [0.0; 4];
    for yy in y.saturating_sub(r)..=(y + r).min(height - 1) {
        for xx in x.saturating_sub(r)..=(x + r).min(width - 1) {
            let k = yy * width + xx;
            if k == i || !w.clothing[k] {
                continue;
            }
            let b = &state.albedo[k];
            for c in 0..4 {
                let d = a[c] - b[c];
                sum += d.abs();
                g[c] += sign(d, EXACT_DEADZONE);
            }
        }
    }
    if let Some(out) = grad {
        let scale = 2.0 * w.lambda_c * w.prior;
        for c in 0..4 {
            out[c] += g[c] * scale;
        }
    }
    sum
}

/// Energy change attributable to pixel `i` alone with parameters `p`, all
/// other pixels fixed at `state`. Differences of this quantity equal
/// differences of the total energy under single-pixel changes.
pub(crate) fn pixel_energy(
    bundle: &DataBundle,
    state: &EstimateState,
    w: &Weights,
    i: usize,
    p: &PixelParams,
) -> f64 {
    let t = local_terms(bundle, w, i, p, false);
    let photometric: f64 = t.photometric.iter().sum();
    w.stereo * t.stereo
        + w.lambda_p * w.photometric * photometric
        + 2.0 * w.lambda_c * w.prior * prior_terms(state, w, i, &p.albedo, None)
}

fn check_state(state: &EstimateState, bundle: &DataBundle) -> Result<()> {
    ensure!(
        state.width == bundle.width() && state.height == bundle.height(),
        Error::Dimensions("estimate and bundle differ in size".into())
    );
    for (i, &m) in bundle.mask().iter().enumerate() {
        ensure!(
            !m || state.valid[i],
            Error::InvalidArgument(format!(
                "estimate has no normal at masked pixel ({}, {})",
                i % state.width,
                i / state.width
            ))
        );
        ensure!(
            !m || (state.log_specular[i].is_finite()
                && state.albedo[i].iter().all(|a| a.is_finite())),
            Error::InvalidArgument("estimate has non-finite parameters".into())
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
struct RowSums {
    stereo: f64,
    photometric: Vec<f64>,
    prior: f64,
}

/// Energy and, when `with_gradient`, its gradient. Rows are processed in
/// parallel and their sums combined in row order, so results do not depend
/// on the thread count.
pub(crate) fn evaluate(
    state: &EstimateState,
    bundle: &DataBundle,
    w: &Weights,
    with_gradient: bool,
) -> Result<(LossBreakdown, Option<Gradient>)> {
    check_state(state, bundle)?;
    let width = bundle.width();
    let n_obs = bundle.observations.len();
    let mask = bundle.mask();
    let mut grad = Gradient::zeros(if with_gradient {
        width * bundle.height()
    } else {
        0
    });

    let row = |y: usize, mut out: Option<GradientRow>| {
        let mut sums = RowSums {
            photometric: vec![0.0; n_obs],
            ..Default::default()
        };
        for x in 0..width {
            let i = y * width + x;
            if !mask[i] {
                continue;
            }
            let p = PixelParams::of(state, i);
            let t = local_terms(bundle, w, i, &p, out.is_some());
            sums.stereo += t.stereo;
            for (s, v) in sums.photometric.iter_mut().zip(&t.photometric) {
                *s += v;
            }
            let mut d_a = t.d_albedo;
            sums.prior += prior_terms(state, w, i, &p.albedo, out.is_some().then_some(&mut d_a));
            if let Some((gn, ga, gl)) = out.as_mut() {
                let (t1, t2) = tangent_basis(&p.n);
                gn[x] = [t.d_n.dot(&t1), t.d_n.dot(&t2)];
                ga[x] = d_a;
                gl[x] = t.d_log_specular;
            }
        }
        sums
    };

    let rows: Vec<RowSums> = if with_gradient {
        grad.normal
            .par_chunks_mut(width)
            .zip(grad.albedo.par_chunks_mut(width))
            .zip(grad.log_specular.par_chunks_mut(width))
            .enumerate()
            .map(|(y, ((gn, ga), gl))| row(y, Some((gn, ga, gl))))
            .collect()
    } else {
        (0..bundle.height())
            .into_par_iter()
            .map(|y| row(y, None))
            .collect()
    };

    let mut stereo = 0.0;
    let mut photometric = vec![0.0; n_obs];
    let mut prior = 0.0;
    for r in &rows {
        stereo += r.stereo;
        for (p, v) in photometric.iter_mut().zip(&r.photometric) {
            *p += v;
        }
        prior += r.prior;
    }
    let stereo = stereo * w.stereo;
    let photometric: Vec<f64> = photometric.into_iter().map(|p| p * w.photometric).collect();
    let prior = prior * w.prior;
    let total = stereo + w.lambda_p * photometric.iter().sum::<f64>() + w.lambda_c * prior;
    let breakdown = LossBreakdown {
        stereo,
        photometric,
        prior,
        total,
    };
    Ok((breakdown, with_gradient.then_some(grad)))
}

/// Weighted energy of `estimate` with its per-term breakdown.
pub fn total_loss(
    estimate: &SceneEstimate,
    bundle: &DataBundle,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let w = Weights::new(bundle, cfg)?;
    Ok(evaluate(&EstimateState::from_estimate(estimate), bundle, &w, false)?.0)
}

pub fn total_gradient(
    estimate: &SceneEstimate,
    bundle: &DataBundle,
    cfg: &LossConfig,
) -> Result<Gradient> {
    let w = Weights::new(bundle, cfg)?;
    Ok(
        evaluate(&EstimateState::from_estimate(estimate), bundle, &w, true)?
            .1
            .expect("gradient requested"),
    )
}

impl EstimateState {
    /// Weighted energy of this state.
    pub fn energy(&self, bundle: &DataBundle, cfg: &LossConfig) -> Result<LossBreakdown> {
        Ok(evaluate(self, bundle, &Weights::new(bundle, cfg)?, false)?.0)
    }

    pub fn gradient(&self, bundle: &DataBundle, cfg: &LossConfig) -> Result<Gradient> {
        Ok(evaluate(self, bundle, &Weights::new(bundle, cfg)?, true)?
            .1
            .expect("gradient requested"))
    }
}

fn check_mask(mask: &[bool], width: usize, height: usize) -> Result<()> {
    ensure!(
        mask.len() == width * height,
        Error::Dimensions("mask size differs from the maps".into())
    );
    Ok(())
}

/// Mean of `|n - s|_1 - n . s` over masked pixels valid in both maps.
pub fn stereo_loss(estimate: &NormalMap, stereo: &NormalMap, mask: &[bool]) -> Result<f64> {
    ensure!(
        estimate.width() == stereo.width() && estimate.height() == stereo.height(),
        Error::Dimensions("normal maps differ in size".into())
    );
    check_mask(mask, estimate.width(), estimate.height())?;
    let (mut sum, mut count) = (0.0, 0usize);
    for i in (0..mask.len()).filter(|&i| mask[i]) {
        if let (Some(n), Some(s)) = (estimate.get_index(i), stereo.get_index(i)) {
            sum += (n - s).abs().sum() - n.dot(&s);
            count += 1;
        }
    }
    ensure!(count > 0, Error::EmptyMask("stereo loss"));
    Ok(sum / count as f64)
}

/// Mean over masked pixels and the four channels of the shadow-masked
/// absolute difference between the rendered estimate and `observation`.
/// Rendering goes through [`crate::brdf::render`], once per light source.
#[allow(clippy::too_many_arguments)]
pub fn photometric_loss(
    estimate: &SceneEstimate,
    observation: &Observation,
    depth: &DepthMap,
    camera: &Camera,
    mask: &[bool],
    exponent: f64,
    options: &RenderOptions,
) -> Result<f64> {
    let (w, h) = (camera.width, camera.height);
    check_mask(mask, w, h)?;
    observation.image.expect_shape(w, h, &observation.name)?;
    let specular = estimate.specular();
    let surface = Surface {
        normals: &estimate.normals,
        albedo: &estimate.albedo,
        specular: &specular,
        exponent,
    };
    let mut rendered = vec![0.0f64; w * h * 4];
    let mut lit = vec![false; w * h];
    for s in &observation.sources {
        let img = render(&surface, depth, camera, &s.light, Some(&s.shadow), options)?;
        for (r, v) in rendered.iter_mut().zip(img.data()) {
            *r += *v as f64;
        }
        for (l, v) in lit.iter_mut().zip(s.shadow.data()) {
            *l |= *v > 0.5;
        }
    }
    let count = mask.iter().filter(|&&m| m).count();
    ensure!(count > 0, Error::EmptyMask("photometric loss"));
    let mut sum = 0.0;
    for i in (0..w * h).filter(|&i| mask[i] && lit[i]) {
        let observed = observation.image.pixel(i);
        for c in 0..4 {
            sum += (rendered[i * 4 + c] - observed[c] as f64).abs();
        }
    }
    Ok(sum / (4 * count) as f64)
}

/// Mean over clothing pixels inside `mask` of the L1 albedo differences to
/// the clothing neighbors in the surrounding `cfg.neighborhood` square.
/// Zero when there are no clothing pixels.
pub fn albedo_prior(
    albedo: &ImageGrid,
    segmentation: &SegmentationMap,
    mask: &[bool],
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    let (w, h) = (segmentation.width(), segmentation.height());
    albedo.expect_shape(w, h, "albedo")?;
    check_mask(mask, w, h)?;
    let clothing: Vec<bool> = (0..w * h)
        .map(|i| mask[i] && cfg.is_clothing(segmentation.get_index(i)))
        .collect();
    let nc = clothing.iter().filter(|&&c| c).count();
    if nc == 0 {
        return Ok(0.0);
    }
    let r = cfg.neighborhood / 2;
    let ch = albedo.channels();
    let mut sum = 0.0;
    for i in (0..w * h).filter(|&i| clothing[i]) {
        let (x, y) = (i % w, i / w);
        let a = albedo.pixel(i);
        for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
            for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                let k = yy * w + xx;
                if k != i && clothing[k] {
                    let b = albedo.pixel(k);
                    sum += (0..ch)
                        .map(|c| (a[c] as f64 - b[c] as f64).abs())
                        .sum::<f64>();
                }
            }
        }
    }
    Ok(sum / nc as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tangent_basis_is_orthonormal() {
        for n in [
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.6, 0.0, 0.8),
            Vector3::new(-0.3, 0.7, 0.2).normalize(),
            Vector3::new(0.99, 0.0, 0.05).normalize(),
        ] {
            let (t1, t2) = tangent_basis(&n);
            assert!((t1.norm() - 1.0).abs() < 1e-12);
            assert!((t2.norm() - 1.0).abs() < 1e-12);
            assert!(
                t1.dot(&n).abs() < 1e-12 && t2.dot(&n).abs() < 1e-12 && t1.dot(&t2).abs() < 1e-12
            );
            assert!((t1.cross(&t2) - n).norm() < 1e-12);
        }
    }

    #[test]
    fn stepped_normal_stays_unit_and_facing() {
        let n = Vector3::new(0.0, 0.0, 1.0);
        let m = stepped_normal(&n, 50.0, 0.0);
        assert!((m.norm() - 1.0).abs() < 1e-12);
        assert!(m.z >= MIN_FACING - 1e-15);
    }

    #[test]
    fn stereo_loss_examples() {
        let z = NormalMap::from_fn(2, 2, |_, _| Some(Vector3::z()));
        let mask = [true; 4];
        assert!((stereo_loss(&z, &z, &mask).unwrap() + 1.0).abs() < 1e-15);
        let x = NormalMap::from_fn(2, 2, |_, _| Some(Vector3::new(1.0, 0.0, 1e-9)));
        assert!((stereo_loss(&x, &z, &mask).unwrap() - 2.0).abs() < 1e-8);
        assert!(stereo_loss(&z, &z, &[false; 4]).is_err());
    }

    #[test]
    fn stereo_loss_opposite_normals() {
        // n = -s cannot be stored in a camera-facing map; check the formula.
        let s = Vector3::new(0.0, 0.0, 1.0);
        let n = -s;
        assert_eq!((n - s).abs().sum() - n.dot(&s), 3.0);
    }
}
