use rayon::prelude::*;

use super::FusionSystem;
use crate::error::{Error, Result};
use crate::imaging::DepthMap;

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

/// Partial sums are taken over fixed chunks and added in order so the result
/// does not depend on the thread count.
const CHUNK: usize = 4096;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

#[derive(Debug, Clone)]
pub struct FusionSolution {
    pub depth: DepthMap,
    pub iterations: usize,
    /// Achieved `|A z - b| / |b|`.
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradient from the stereo depth.
pub fn solve_fusion(
    system: &FusionSystem,
    tolerance: f64,
    max_iterations: usize,
) -> Result<FusionSolution> {
    let a = &system.matrix;
    let n = a.rows();
    let apply = |x: &[f64], out: &mut [f64]| {
        out.par_iter_mut()
            .enumerate()
            .for_each(|(r, o)| *o = a.row(r).map(|(c, v)| v * x[c]).sum());
    };
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let b_norm = dot(&system.rhs, &system.rhs).sqrt().max(f64::MIN_POSITIVE);

    let mut x = system.stereo.clone();
    let mut ax = vec![0.0; n];
    let mut iterations = 0;
    // Restart from the true residual whenever the recursive one claims
    // convergence, since the two drift apart in floating point.
    loop {
        apply(&x, &mut ax);
        let mut r: Vec<f64> = system.rhs.iter().zip(&ax).map(|(b, v)| b - v).collect();
        let mut residual = dot(&r, &r).sqrt() / b_norm;
        if residual <= tolerance {
            return Ok(FusionSolution {
                depth: system.to_depth_map(&x)?,
                iterations,
                residual,
            });
        }
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        while residual > tolerance {
            if iterations == max_iterations {
                return Err(Error::NotConverged {
                    iterations,
                    residual,
                });
            }
            iterations += 1;
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 || !pap.is_finite() {
                return Err(Error::NotConverged {
                    iterations,
                    residual,
                });
            }
            let alpha = rz / pap;
            x.par_iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
            r.par_iter_mut()
                .zip(&ap)
                .for_each(|(r, ap)| *r -= alpha * ap);
            residual = dot(&r, &r).sqrt() / b_norm;
            z.par_iter_mut()
                .zip(&r)
                .zip(&inv_diag)
                .for_each(|((z, r), d)| *z = r * d);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            p.par_iter_mut()
                .zip(&z)
                .for_each(|(p, z)| *p = z + beta * *p);
        }
    }
}
