//! Direct per-scene minimization of the stereo + photometric + albedo-prior
//! energy over normals, four-channel albedo and log specular intensity.
//!
//! Losses are per-pixel means rather than sums so the default weights mean
//! the same thing at every resolution:
//!
//! ```text
//! E = L_s + lambda_p * sum_j L_p^j + lambda_c * L_c
//! L_s   = mean_i ( |n_i - s_i|_1 - n_i . s_i )
//! L_p^j = mean_{i,c} | S_ij (I_ijc - Ihat_ijc) |
//! L_c   = (1 / |C|) sum_{i in C} sum_{k in N5(i) ∩ C} |a_i - a_k|_1
//! ```
//!
//! where `C` is the set of clothing pixels inside the solve mask.

mod bundle;
mod energy;
mod optimize;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::imaging::{ImageGrid, Label, NormalMap};
use crate::synth::SceneTruth;

pub use bundle::{init_image, DataBundle, GeometrySource, LightSource, Observation};
pub use energy::{
    albedo_prior, photometric_loss, stereo_loss, tangent_basis, total_gradient, total_loss,
    EstimateState, Gradient, LossBreakdown,
};
pub use optimize::{
    solve, solve_from, write_iteration_csv, IterationRecord, SolveReport, StopReason,
};

/// Smallest specular intensity representable in an estimate built from a
/// ground truth with `rho = 0`.
pub const MIN_SPECULAR: f64 = 1e-12;
/// Upper clamp on initial albedo.
pub const MAX_INIT_ALBEDO: f64 = 4.0;
/// Lower clamp on the foreshortening used to initialize albedo.
pub const MIN_INIT_SHADING: f64 = 0.2;

/// The unknowns: normals, four-channel albedo and `log(rho)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneEstimate {
    pub normals: NormalMap,
    pub albedo: ImageGrid,
    pub log_specular: ImageGrid,
}

impl SceneEstimate {
    pub fn new(normals: NormalMap, albedo: ImageGrid, log_specular: ImageGrid) -> Result<Self> {
        let (w, h) = (normals.width(), normals.height());
        albedo.expect_shape(w, h, "albedo")?;
        log_specular.expect_shape(w, h, "log specular")?;
        ensure!(
            albedo.channels() == 4 && log_specular.channels() == 1,
            Error::InvalidArgument("albedo needs 4 channels and log specular 1".into())
        );
        ensure!(
            albedo.data().iter().all(|&a| a >= 0.0),
            Error::InvalidArgument("albedo must be nonnegative".into())
        );
        Ok(SceneEstimate {
            normals,
            albedo,
            log_specular,
        })
    }

    /// The exact maps of a synthetic scene; `rho = 0` is floored at
    /// [`MIN_SPECULAR`] so its logarithm stays finite.
    pub fn from_truth(truth: &SceneTruth) -> Self {
        SceneEstimate {
            normals: truth.normals.clone(),
            albedo: truth.albedo.clone(),
            log_specular: truth
                .specular
                .map(|r| (r as f64).max(MIN_SPECULAR).ln() as f32),
        }
    }

    pub fn width(&self) -> usize {
        self.normals.width()
    }

    pub fn height(&self) -> usize {
        self.normals.height()
    }

    /// Linear specular intensity `rho`.
    pub fn specular(&self) -> ImageGrid {
        self.log_specular.map(|v| (v as f64).exp() as f32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_p: f64,
    pub lambda_c: f64,
    /// Specular exponent, held fixed.
    pub exponent: f64,
    /// Side of the square albedo-prior neighborhood.
    pub neighborhood: usize,
    pub clothing: Vec<Label>,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_p: 10.0,
            lambda_c: 50.0,
            exponent: crate::brdf::DEFAULT_EXPONENT,
            neighborhood: 5,
            clothing: vec![Label::Body, Label::UpperArm, Label::LowerArm],
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.lambda_p >= 0.0
                && self.lambda_c >= 0.0
                && self.lambda_p.is_finite()
                && self.lambda_c.is_finite(),
            Error::InvalidArgument("loss weights must be finite and nonnegative".into())
        );
        ensure!(
            self.exponent > 0.0 && self.exponent.is_finite(),
            Error::InvalidArgument("specular exponent must be positive".into())
        );
        ensure!(
            self.neighborhood % 2 == 1,
            Error::InvalidArgument("prior neighborhood must have odd size".into())
        );
        Ok(())
    }

    pub(crate) fn is_clothing(&self, label: Label) -> bool {
        self.clothing.contains(&label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlbedoInit {
    /// Per channel, the largest observation divided by the irradiance of its
    /// lights, i.e. the albedo a fully facing surface would need. Does not
    /// depend on the stereo normals.
    #[default]
    BrightestObservation,
    /// The initialization image divided by `max(n_s . l, 0.2)` toward the
    /// nearest light emitting in that channel.
    Shading,
}

/// Starting point of the solver. Normals always start at the stereo normals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub albedo: AlbedoInit,
    /// Initial specular intensity `rho`.
    pub specular: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            albedo: AlbedoInit::BrightestObservation,
            specular: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMode {
    /// Adam steps; returns the lowest-energy iterate seen.
    #[default]
    Adaptive,
    /// Adam directions with per-pixel backtracking and a global acceptance
    /// test, so the recorded energy never increases.
    Guarded,
}

impl std::str::FromStr for SolverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" | "adaptive-first-order" => Ok(SolverMode::Adaptive),
            "guarded" | "guarded-descent" => Ok(SolverMode::Guarded),
            _ => Err(Error::InvalidArgument(format!("unknown solver mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub step_size: f64,
    pub mode: SolverMode,
    /// Stop once the best energy improves by less than this fraction over a
    /// window of iterations.
    pub tolerance: f64,
    /// Iterations over which the relative decrease is measured.
    pub window: usize,
    /// Stop immediately when the projected gradient norm is below this.
    pub stationary_tolerance: f64,
    pub init: InitConfig,
    /// Recorded with the run. The optimizer itself draws no random numbers.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 5000,
            step_size: 1e-3,
            mode: SolverMode::Adaptive,
            tolerance: 1e-7,
            window: 100,
            stationary_tolerance: 1e-10,
            init: InitConfig::default(),
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.max_iterations > 0 && self.window > 0,
            Error::InvalidArgument("iteration counts must be positive".into())
        );
        ensure!(
            self.step_size > 0.0 && self.step_size.is_finite(),
            Error::InvalidArgument("step size must be positive".into())
        );
        ensure!(
            self.init.specular > 0.0 && self.init.specular.is_finite(),
            Error::InvalidArgument("initial specular intensity must be positive".into())
        );
        ensure!(
            self.tolerance >= 0.0 && self.stationary_tolerance >= 0.0,
            Error::InvalidArgument("tolerances must be nonnegative".into())
        );
        Ok(())
    }
}

/// Mean angle in degrees between two normal maps over `mask` pixels valid in
/// both.
pub fn mean_angular_error(a: &NormalMap, b: &NormalMap, mask: &[bool]) -> Result<f64> {
    ensure!(
        a.width() == b.width() && a.height() == b.height() && mask.len() == a.width() * a.height(),
        Error::Dimensions("normal maps and mask must share dimensions".into())
    );
    let (mut sum, mut count) = (0.0, 0usize);
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        if let (Some(x), Some(y)) = (a.get_index(i), b.get_index(i)) {
            sum += angle_degrees(&x, &y);
            count += 1;
        }
    }
    ensure!(count > 0, Error::EmptyMask("angular error"));
    Ok(sum / count as f64)
}

/// `atan2` form: exact for identical inputs and accurate for small angles,
/// unlike `acos` of the dot product.
pub(crate) fn angle_degrees(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}
