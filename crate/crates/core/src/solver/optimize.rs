use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bundle::DataBundle;
use super::energy::{
    evaluate, pixel_energy, stepped_normal, EstimateState, Gradient, LossBreakdown, PixelParams,
    Weights,
};
use super::{LossConfig, SceneEstimate, SolverConfig, SolverMode};
use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;
/// Backtracking halvings tried per pixel before its update is skipped.
pub const MAX_HALVINGS: usize = 20;
/// `log(rho)` is kept inside this range.
const LOG_SPECULAR_RANGE: (f64, f64) = (-30.0, 3.0);
/// Parameters per pixel: two normal offsets, four albedos, `log(rho)`.
const PARAMS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub total: f64,
    pub stereo: f64,
    /// Sum over observations, before weighting.
    pub photometric: f64,
    pub prior: f64,
    /// Step size used to reach this iterate (0 for the initial point).
    pub step: f64,
}

impl IterationRecord {
    fn new(iteration: usize, e: &LossBreakdown, step: f64) -> Self {
        IterationRecord {
            iteration,
            total: e.total,
            stereo: e.stereo,
            photometric: e.photometric_sum(),
            prior: e.prior,
            step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Projected gradient norm below the stationary tolerance.
    Stationary,
    /// Relative decrease over the window fell below the tolerance.
    Converged,
    MaxIterations,
    /// Guarded mode: no step passed the acceptance test.
    NoProgress,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Lowest-energy iterate.
    pub estimate: SceneEstimate,
    pub energy: LossBreakdown,
    pub best_iteration: usize,
    pub log: Vec<IterationRecord>,
    pub stop: StopReason,
}

struct Adam {
    m: Vec<[f64; PARAMS]>,
    v: Vec<[f64; PARAMS]>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![[0.0; PARAMS]; n],
            v: vec![[0.0; PARAMS]; n],
            t: 0,
        }
    }

    /// Folds in a gradient and returns the bias-corrected per-pixel
    /// directions `m_hat / (sqrt(v_hat) + eps)`.
    fn directions(&mut self, g: &Gradient, mask: &[bool]) -> Vec<[f64; PARAMS]> {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let mut dirs = vec![[0.0; PARAMS]; mask.len()];
        self.m
            .par_iter_mut()
            .zip(self.v.par_iter_mut())
            .zip(dirs.par_iter_mut())
            .enumerate()
            .filter(|(i, _)| mask[*i])
            .for_each(|(i, ((m, v), d))| {
                let gi = [
                    g.normal[i][0],
                    g.normal[i][1],
                    g.albedo[i][0],
                    g.albedo[i][1],
                    g.albedo[i][2],
                    g.albedo[i][3],
                    g.log_specular[i],
                ];
                for k in 0..PARAMS {
                    m[k] = BETA1 * m[k] + (1.0 - BETA1) * gi[k];
                    v[k] = BETA2 * v[k] + (1.0 - BETA2) * gi[k] * gi[k];
                    d[k] = (m[k] / c1) / ((v[k] / c2).sqrt() + EPSILON);
                }
            });
        dirs
    }
}

fn stepped(p: &PixelParams, d: &[f64; PARAMS], step: f64) -> PixelParams {
    PixelParams {
        n: stepped_normal(&p.n, -step * d[0], -step * d[1]),
        albedo: std::array::from_fn(|c| (p.albedo[c] - step * d[2 + c]).max(0.0)),
        log_specular: (p.log_specular - step * d[6])
            .clamp(LOG_SPECULAR_RANGE.0, LOG_SPECULAR_RANGE.1),
    }
}

fn store(state: &mut EstimateState, i: usize, p: &PixelParams) {
    state.normals[i] = p.n;
    state.albedo[i] = p.albedo;
    state.log_specular[i] = p.log_specular;
}

fn check_finite(e: &LossBreakdown, iteration: usize) -> Result<()> {
    if e.total.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            iteration,
            detail: format!(
                "energy {} (stereo {}, photometric {}, prior {})",
                e.total,
                e.stereo,
                e.photometric_sum(),
                e.prior
            ),
        })
    }
}

/// Minimizes the energy starting from [`DataBundle::initial_estimate`].
pub fn solve(bundle: &DataBundle, loss: &LossConfig, cfg: &SolverConfig) -> Result<SolveReport> {
    solve_from(bundle, &bundle.initial_estimate(&cfg.init), loss, cfg)
}

/// Minimizes the energy starting from `init`.
pub fn solve_from(
    bundle: &DataBundle,
    init: &SceneEstimate,
    loss: &LossConfig,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    let w = Weights::new(bundle, loss)?;
    let mask = bundle.mask();
    let mut state = EstimateState::from_estimate(init);
    let (mut energy, grad) = evaluate(&state, bundle, &w, true)?;
    check_finite(&energy, 0)?;
    let mut grad = grad.expect("gradient requested");
    let mut log = vec![IterationRecord::new(0, &energy, 0.0)];
    let mut best = (energy.clone(), state.clone(), 0usize);
    let mut best_history = vec![energy.total];
    let mut adam = Adam::new(mask.len());
    let mut step = cfg.step_size;

    let mut stop = StopReason::MaxIterations;
    if grad.projected_norm(&state) < cfg.stationary_tolerance {
        stop = StopReason::Stationary;
    } else {
        for k in 1..=cfg.max_iterations {
            let dirs = adam.directions(&grad, mask);
            match cfg.mode {
                SolverMode::Adaptive => {
                    for i in (0..mask.len()).filter(|&i| mask[i]) {
                        let p = stepped(&PixelParams::of(&state, i), &dirs[i], cfg.step_size);
                        store(&mut state, i, &p);
                    }
                    let (e, g) = evaluate(&state, bundle, &w, true)?;
                    check_finite(&e, k)?;
                    energy = e;
                    grad = g.expect("gradient requested");
                }
                SolverMode::Guarded => {
                    match guarded_step(bundle, &w, &state, &energy, &dirs, step)? {
                        Some((s, e, g, used)) => {
                            state = s;
                            energy = e;
                            grad = g;
                            step = used;
                        }
                        None => {
                            log.push(IterationRecord::new(k, &energy, 0.0));
                            stop = StopReason::NoProgress;
                            break;
                        }
                    }
                }
            }
            log.push(IterationRecord::new(
                k,
                &energy,
                if cfg.mode == SolverMode::Adaptive {
                    cfg.step_size
                } else {
                    step
                },
            ));
            if energy.total < best.0.total {
                best = (energy.clone(), state.clone(), k);
            }
            best_history.push(best.0.total);
            if grad.projected_norm(&state) < cfg.stationary_tolerance {
                stop = StopReason::Stationary;
                break;
            }
            if k >= cfg.window {
                let then = best_history[k - cfg.window];
                let now = best_history[k];
                if then - now <= cfg.tolerance * then.abs().max(f64::MIN_POSITIVE) {
                    stop = StopReason::Converged;
                    break;
                }
            }
            if cfg.mode == SolverMode::Guarded {
                // Let the step recover after backtracking.
                step = (step * 2.0).min(cfg.step_size);
            }
        }
    }
    let (energy, state, best_iteration) = best;
    Ok(SolveReport {
        estimate: state.to_estimate(),
        energy,
        best_iteration,
        log,
        stop,
    })
}

type Accepted = (EstimateState, LossBreakdown, Gradient, f64);

/// One guarded iteration: each pixel backtracks along its direction until its
/// own energy contribution decreases (or gives up after [`MAX_HALVINGS`]);
/// the combined update is kept only if the total energy does not increase,
/// otherwise the base step is halved and the pass repeated.
fn guarded_step(
    bundle: &DataBundle,
    w: &Weights,
    state: &EstimateState,
    energy: &LossBreakdown,
    dirs: &[[f64; PARAMS]],
    base_step: f64,
) -> Result<Option<Accepted>> {
    let mask = bundle.mask();
    let width = bundle.width();
    let mut step = base_step;
    for _ in 0..=MAX_HALVINGS {
        let proposals: Vec<Vec<(usize, PixelParams)>> = (0..bundle.height())
            .into_par_iter()
            .map(|y| {
                let mut out = Vec::new();
                for i in (y * width..(y + 1) * width).filter(|&i| mask[i]) {
                    let p = PixelParams::of(state, i);
                    let e0 = pixel_energy(bundle, state, w, i, &p);
                    let mut s = step;
                    for _ in 0..=MAX_HALVINGS {
                        let q = stepped(&p, &dirs[i], s);
                        if pixel_energy(bundle, state, w, i, &q) < e0 {
                            out.push((i, q));
                            break;
                        }
                        s *= 0.5;
                    }
                }
                out
            })
            .collect();
        if proposals.iter().all(|r| r.is_empty()) {
            return Ok(None);
        }
        let mut next = state.clone();
        for (i, p) in proposals.iter().flatten() {
            store(&mut next, *i, p);
        }
        let (e, g) = evaluate(&next, bundle, w, true)?;
        if e.total.is_finite() && e.total <= energy.total {
            return Ok(Some((next, e, g.expect("gradient requested"), step)));
        }
        step *= 0.5;
    }
    Ok(None)
}

/// Writes the iteration log as CSV.
pub fn write_iteration_csv(path: impl AsRef<Path>, log: &[IterationRecord]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(f, "iteration,total,stereo,photometric,prior,step").map_err(io)?;
    for r in log {
        writeln!(
            f,
            "{},{:e},{:e},{:e},{:e},{:e}",
            r.iteration, r.total, r.stereo, r.photometric, r.prior, r.step
        )
        .map_err(io)?;
    }
    f.flush().map_err(io)
}
