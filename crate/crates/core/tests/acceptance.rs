//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Run with
//! `cargo test --release -p darkflash --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use darkflash::augment::{
    self, simulate, well_lit, ConditionKind, LightingCondition, LOW_LIGHT_SIGMA,
};
use darkflash::brdf::{
    shade_gradients, HalfVector, Material, RenderOptions, ShadePoint, DEFAULT_EXPONENT,
};
use darkflash::fusion::{
    bilateral_smooth_depth, build_fusion_system, depth_rmse, solve_fusion, FusionWeights,
    DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE,
};
use darkflash::imaging::{light_dir_and_view, Camera, DepthMap, ImageGrid, NormalMap, PointLight};
use darkflash::relight::{composite_fill, render_virtual_light, ReflectanceModel};
use darkflash::solver::{
    init_image, mean_angular_error, photometric_loss, solve, stereo_loss, DataBundle,
    EstimateState, GeometrySource, LossConfig, Observation, SceneEstimate, SolveReport,
    SolverConfig, SolverMode,
};
use darkflash::synth::{
    compute_shadow_map, default_rig, make_sphere_scene, normals_from_depth, Capture, MaterialBand,
    StereoParams, SHADOW_BIAS,
};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: &'static str,
    pass: bool,
}

fn outcome(id: &'static str, pass: bool, detail: String) -> Outcome {
    println!("{id} {}: {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { id, pass }
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

fn solve_timed(
    bundle: &DataBundle,
    loss: &LossConfig,
    cfg: &SolverConfig,
) -> (SolveReport, Duration) {
    let t = Instant::now();
    let r = solve(bundle, loss, cfg).unwrap();
    (r, t.elapsed())
}

fn non_increasing(r: &SolveReport) -> bool {
    r.log.windows(2).all(|w| w[1].total <= w[0].total)
}

fn guarded(iterations: usize) -> SolverConfig {
    SolverConfig {
        mode: SolverMode::Guarded,
        max_iterations: iterations,
        ..SolverConfig::default()
    }
}

/// Pixels lit by every OLAT with the true normal facing every light.
fn unshadowed(cap: &Capture, mask: &[bool]) -> Vec<bool> {
    let s = &cap.scene;
    let w = s.camera.width;
    (0..mask.len())
        .map(|i| {
            mask[i]
                && cap.olats.iter().all(|o| {
                    let (Some(n), Some(d)) = (s.normals.get_index(i), s.depth.get_index(i)) else {
                        return false;
                    };
                    let g =
                        light_dir_and_view(&s.camera, (i % w) as f64, (i / w) as f64, d, &o.light)
                            .unwrap();
                    o.shadow.pixel(i)[0] > 0.5 && n.dot(&g.l) > 0.0
                })
        })
        .collect()
}

fn a1(guarded_runs: &mut Vec<(&'static str, bool, usize)>) -> Outcome {
    let cap = sphere_capture(SIZE);
    let bundle = stereo_bundle(&cap);
    let mask = bundle.mask().to_vec();
    let truth = &cap.scene;
    let (r, elapsed) =
        single_threaded(|| solve_timed(&bundle, &LossConfig::default(), &SolverConfig::default()));
    let err = mean_angular_error(&r.estimate.normals, &truth.normals, &mask).unwrap();
    let err_s = mean_angular_error(&cap.stereo_normals, &truth.normals, &mask).unwrap();
    let lit = unshadowed(&cap, &mask);
    let (mut rel, mut count) = (0.0, 0usize);
    for i in (0..mask.len()).filter(|&i| lit[i]) {
        for c in 0..4 {
            let a = truth.albedo.pixel(i)[c] as f64;
            rel += (r.estimate.albedo.pixel(i)[c] as f64 - a).abs() / a;
            count += 1;
        }
    }
    let rel = rel / count as f64;
    let g = solve(&bundle, &LossConfig::default(), &guarded(300)).unwrap();
    guarded_runs.push(("sphere", non_increasing(&g), g.log.len() - 1));
    let pass = err < 2.0 && err < err_s && rel < 0.03 && elapsed < Duration::from_secs(120);
    outcome(
        "A1",
        pass,
        format!(
            "normals {err:.3} deg (stereo {err_s:.3}, need < 2.0), albedo rel err {:.2}% on {} px (need < 3%), \
             {:.1} s single-threaded (need < 120 s), {} iterations",
            100.0 * rel,
            count / 4,
            elapsed.as_secs_f64(),
            r.log.len() - 1
        ),
    )
}

struct BumpRun {
    cap: Capture,
    report: SolveReport,
}

/// Left-band pixels where some lit OLAT's lobe exceeds 5% of the diffuse
/// term in a channel that light emits.
fn highlight_pixels(cap: &Capture) -> Vec<bool> {
    let s = &cap.scene;
    let w = s.camera.width;
    let scale = (s.exponent + 2.0) / (2.0 * std::f64::consts::PI);
    (0..w * s.camera.height)
        .map(|i| {
            let rho = s.specular.pixel(i)[0] as f64;
            let (Some(n), Some(d)) = (s.normals.get_index(i), s.depth.get_index(i)) else {
                return false;
            };
            rho > 0.0
                && cap.olats.iter().any(|o| {
                    let g =
                        light_dir_and_view(&s.camera, (i % w) as f64, (i / w) as f64, d, &o.light)
                            .unwrap();
                    if o.shadow.pixel(i)[0] < 0.5 || n.dot(&g.l) <= 0.0 {
                        return false;
                    }
                    let h = (g.l + g.v).normalize();
                    let lobe = rho * scale * n.dot(&h).max(0.0).powf(s.exponent);
                    (0..4).any(|c| {
                        o.light.intensity[c] > 0.0 && lobe > 0.05 * s.albedo.pixel(i)[c] as f64
                    })
                })
        })
        .collect()
}

fn a2(guarded_runs: &mut Vec<(&'static str, bool, usize)>) -> (Outcome, BumpRun) {
    let cap = bump_capture(SIZE, StereoParams::default().smoothing_radius);
    let bundle = stereo_bundle(&cap);
    let mask = bundle.mask().to_vec();
    let report = solve(&bundle, &LossConfig::default(), &SolverConfig::default()).unwrap();
    let err = mean_angular_error(&report.estimate.normals, &cap.scene.normals, &mask).unwrap();
    let err_s = mean_angular_error(&cap.stereo_normals, &cap.scene.normals, &mask).unwrap();
    let rho = report.estimate.specular();
    let spots = highlight_pixels(&cap);
    let (mut rel, mut count) = (0.0, 0usize);
    for i in (0..mask.len()).filter(|&i| spots[i] && mask[i]) {
        let t = cap.scene.specular.pixel(i)[0] as f64;
        rel += (rho.pixel(i)[0] as f64 - t).abs() / t;
        count += 1;
    }
    let rel = rel / count.max(1) as f64;
    let g = solve(&bundle, &LossConfig::default(), &guarded(200)).unwrap();
    guarded_runs.push(("bumpfield", non_increasing(&g), g.log.len() - 1));
    let pass = count > 0 && rel < 0.25 && err < 3.0;
    (
        outcome(
            "A2",
            pass,
            format!(
                "rho rel err {:.2}% on {count} highlight px (need < 25%), normals {err:.3} deg (stereo {err_s:.3}, need < 3.0)",
                100.0 * rel
            ),
        ),
        BumpRun { cap, report },
    )
}

fn a3(guarded_runs: &mut Vec<(&'static str, bool, usize)>) -> Outcome {
    let cap = bump_capture(SIZE, 6.0);
    let bundle = stereo_bundle(&cap);
    let mask = bundle.mask().to_vec();
    let err_s = mean_angular_error(&cap.stereo_normals, &cap.scene.normals, &mask).unwrap();
    let full = solve(&bundle, &LossConfig::default(), &SolverConfig::default()).unwrap();
    let err = mean_angular_error(&full.estimate.normals, &cap.scene.normals, &mask).unwrap();
    let ablation = LossConfig {
        lambda_p: 0.0,
        ..LossConfig::default()
    };
    let none = solve(&bundle, &ablation, &SolverConfig::default()).unwrap();
    let err_0 = mean_angular_error(&none.estimate.normals, &cap.scene.normals, &mask).unwrap();
    let g = solve(&bundle, &LossConfig::default(), &guarded(200)).unwrap();
    guarded_runs.push((
        "bumpfield, smoothing 6 px",
        non_increasing(&g),
        g.log.len() - 1,
    ));
    let reduction = 1.0 - err / err_s;
    let drift = (err_0 - err_s).abs() / err_s;
    let pass = reduction >= 0.5 && drift <= 0.1;
    outcome(
        "A3",
        pass,
        format!(
            "stereo {err_s:.3} deg -> solved {err:.3} deg ({:.1}% reduction, need >= 50%); \
             without photometric term {err_0:.3} deg ({:.1}% from stereo, need <= 10%)",
            100.0 * reduction,
            100.0 * drift
        ),
    )
}

fn a4() -> Outcome {
    let cap = sphere_capture(SIZE);
    let base = stereo_bundle(&cap);
    let mask = base.mask().to_vec();
    let visible = cap.visible_images();
    let visible_lights: Vec<PointLight> = cap
        .olats
        .iter()
        .filter(|o| o.role.is_visible())
        .map(|o| o.light)
        .collect();
    let nir: Vec<Observation> = base.observations[visible.len()..].to_vec();
    let mut full_errors = Vec::new();
    let mut ratios = Vec::new();
    let mut lines = Vec::new();
    for kind in ConditionKind::ALL {
        let aug = simulate(kind, &visible, 3).unwrap();
        let lights = aug.condition.equivalent_lights(&visible_lights).unwrap();
        let input = base.observe(kind.name(), &aug.image, &lights).unwrap();
        let init = init_image(&aug.image, &cap.flash().image).unwrap();
        let mut all = nir.clone();
        all.push(input.clone());
        let full = base
            .with_observations(all)
            .unwrap()
            .with_init_image(&init)
            .unwrap();
        let rf = solve(&full, &LossConfig::default(), &SolverConfig::default()).unwrap();
        let ef = mean_angular_error(&rf.estimate.normals, &cap.scene.normals, &mask).unwrap();
        full_errors.push(ef);
        if matches!(kind, ConditionKind::Overexposure | ConditionKind::LowLight) {
            let rgb_only = base
                .with_observations(vec![input])
                .unwrap()
                .with_init_image(&init)
                .unwrap();
            let rd = solve(&rgb_only, &LossConfig::default(), &SolverConfig::default()).unwrap();
            let ed = mean_angular_error(&rd.estimate.normals, &cap.scene.normals, &mask).unwrap();
            ratios.push(ed / ef);
            lines.push(format!(
                "{} {ef:.3}/{ed:.3} deg (x{:.2})",
                kind.name(),
                ed / ef
            ));
        } else {
            lines.push(format!("{} {ef:.3} deg", kind.name()));
        }
    }
    let lo = full_errors.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = full_errors.iter().copied().fold(0.0, f64::max);
    let spread = (hi - lo) / lo;
    let pass = spread < 0.1 && ratios.iter().all(|&r| r >= 1.5);
    outcome(
        "A4",
        pass,
        format!(
            "{}; full-bundle spread {:.1}% (need < 10%), RGB-only ratios need >= 1.5",
            lines.join(", "),
            100.0 * spread
        ),
    )
}

/// Central difference, or `None` when a kink lies within the stencil. A
/// smooth function has the same second difference at steps `h` and `h / 2`;
/// a slope discontinuity makes it scale like `1 / h`.
fn central(f: impl Fn(f64) -> f64, h: f64) -> Option<f64> {
    let f0 = f(0.0);
    let (p1, m1, p2, m2) = (f(h), f(-h), f(h / 2.0), f(-h / 2.0));
    let d2a = (p1 - 2.0 * f0 + m1) / (h * h);
    let d2b = (p2 - 2.0 * f0 + m2) / (h * h / 4.0);
    let scale = [f0, p1, m1, p2, m2]
        .iter()
        .fold(0f64, |m, v| m.max(v.abs()));
    let noise = 1e3 * f64::EPSILON * scale * 4.0 / (h * h);
    ((d2a - d2b).abs() <= 0.1 * d2a.abs().max(d2b.abs()) + noise).then_some((p1 - m1) / (2.0 * h))
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm() > 0.1 && v.norm() < 1.0 {
            return v.normalize();
        }
    }
}

fn a5() -> Outcome {
    const H: f64 = 1e-4;
    const TOL: f64 = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut checked, mut skipped, mut failures, mut worst) = (0usize, 0usize, 0usize, 0f64);
    // `error` is None when the stencil straddles a kink.
    let mut record =
        |tag: String, error: Option<f64>, checked: &mut usize, skipped: &mut usize| match error {
            Some(e) => {
                *checked += 1;
                worst = worst.max(e);
                if e >= TOL {
                    eprintln!("A5 mismatch: {tag} rel err {e:e}");
                    failures += 1;
                }
            }
            None => *skipped += 1,
        };
    for k in 0..1000 {
        // Pointwise model.
        let paper_literal = k % 2 == 1;
        let mode = if paper_literal {
            HalfVector::PaperLiteral
        } else {
            HalfVector::Blinn
        };
        let n = random_facing(&mut rng, 0.05);
        let l = random_unit(&mut rng);
        let v = random_facing(&mut rng, 0.05);
        if (l + v).norm() < 1e-3 || (n + l).norm() < 1e-3 {
            skipped += 1;
            continue;
        }
        let albedo: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        let rho = rng.random_range(0.01..0.5);
        let m = [DEFAULT_EXPONENT, rng.random_range(2.0..60.0)][k % 3 / 2];
        let light: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.1..3.0));
        let mat = Material::new(albedo, rho, m).unwrap();
        let g = shade_gradients(&mat, &ShadePoint { n, l, v, light }, mode).unwrap();
        for c in 0..4 {
            let numeric: Vec<Option<f64>> = (0..3)
                .map(|j| {
                    central(
                        |t: f64| {
                            let mut nn = n;
                            nn[j] += t;
                            reference_shade(&nn, &l, &v, &albedo, rho, m, &light, paper_literal)[c]
                        },
                        H,
                    )
                })
                .collect();
            if numeric.iter().all(Option::is_some) {
                let a = Vector3::from(g.d_normal[c]);
                let d = Vector3::new(
                    numeric[0].unwrap(),
                    numeric[1].unwrap(),
                    numeric[2].unwrap(),
                );
                let e = (a - d).norm() / a.norm().max(d.norm()).max(1e-6);
                record(
                    format!("shade k{k} dn c{c}"),
                    Some(e),
                    &mut checked,
                    &mut skipped,
                );
            } else {
                skipped += 1;
            }
            let fa = |t: f64| {
                let mut a = albedo;
                a[c] += t;
                reference_shade(&n, &l, &v, &a, rho, m, &light, paper_literal)[c]
            };
            record(
                format!("shade k{k} a{c}"),
                central(fa, H).map(|d| rel_err(g.d_albedo[c], d)),
                &mut checked,
                &mut skipped,
            );
            let fs = |t: f64| {
                reference_shade(&n, &l, &v, &albedo, rho * t.exp(), m, &light, paper_literal)[c]
            };
            record(
                format!("shade k{k} s{c}"),
                central(fs, H).map(|d| rel_err(g.d_log_specular[c], d)),
                &mut checked,
                &mut skipped,
            );
        }

        // Whole energy on a small random scene.
        let cfg = random_config(k as u64, 6);
        let loss = LossConfig {
            lambda_p: rng.random_range(0.5..20.0),
            lambda_c: rng.random_range(0.0..60.0),
            neighborhood: [3, 5][k % 2],
            ..LossConfig::default()
        };
        let state = EstimateState::from_estimate(&cfg.estimate);
        let grad = state.gradient(&cfg.bundle, &loss).unwrap();
        let mask = cfg.bundle.mask();
        let pixels: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        for _ in 0..4 {
            let i = pixels[rng.random_range(0..pixels.len())];
            let p = rng.random_range(0..7);
            let energy = |t: f64| {
                let mut s = state.clone();
                match p {
                    0 => s.step_normal(i, t, 0.0),
                    1 => s.step_normal(i, 0.0, t),
                    2..=5 => s.albedo[i][p - 2] += t,
                    _ => s.log_specular[i] += t,
                }
                s.energy(&cfg.bundle, &loss).unwrap().total
            };
            let analytic = match p {
                0 | 1 => grad.normal[i][p],
                2..=5 => grad.albedo[i][p - 2],
                _ => grad.log_specular[i],
            };
            record(
                format!("energy k{k} px{i} p{p}"),
                central(energy, H).map(|d| rel_err(analytic, d)),
                &mut checked,
                &mut skipped,
            );
        }
    }
    outcome(
        "A5",
        failures == 0,
        format!("{checked} derivatives checked, {skipped} at kinks skipped, {failures} failures, worst rel err {worst:.2e} (need < 1e-3)"),
    )
}

/// Plane with random boxes, ridges and holes.
fn random_heightfield(seed: u64, cam: &Camera) -> DepthMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (cam.width, cam.height);
    let base = rng.random_range(0.9..1.3);
    let tilt = (
        rng.random_range(-0.002..0.002),
        rng.random_range(-0.002..0.002),
    );
    let mut d: Vec<f64> = (0..w * h)
        .map(|i| {
            base + tilt.0 * (i % w) as f64 + tilt.1 * (i / w) as f64 + rng.random_range(0.0..0.001)
        })
        .collect();
    for _ in 0..rng.random_range(2..7) {
        let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
        let (bw, bh) = (rng.random_range(1..16), rng.random_range(1..16));
        let lift = rng.random_range(0.005..0.15);
        for y in y0..(y0 + bh).min(h) {
            for x in x0..(x0 + bw).min(w) {
                d[y * w + x] -= lift;
            }
        }
    }
    for _ in 0..rng.random_range(0..20) {
        d[rng.random_range(0..w * h)] = 0.0;
    }
    DepthMap::new(w, h, d).unwrap()
}

fn a6() -> Outcome {
    let cam = Camera::centered(64, 64, 3.2 * 64.0).unwrap();
    let rig = default_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut mismatches, mut maps, mut shadowed) = (0usize, 0usize, 0usize);
    for seed in 0..25 {
        let depth = random_heightfield(seed, &cam);
        let mut lights: Vec<PointLight> = rig.lights().into_iter().map(|(_, l)| l).collect();
        lights.push(
            PointLight::new(
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.8..0.2),
                ],
                [1.0; 4],
            )
            .unwrap(),
        );
        for light in &lights {
            let s = compute_shadow_map(&depth, &cam, light).unwrap();
            let o = shadow_oracle(&depth, &cam, light, SHADOW_BIAS);
            mismatches += s.data().iter().zip(&o).filter(|(a, b)| a != b).count();
            shadowed += o
                .iter()
                .zip(depth.values())
                .filter(|(s, d)| **s == 0.0 && **d > 0.0)
                .count();
            maps += 1;
        }
    }
    outcome(
        "A6",
        mismatches == 0,
        format!("{maps} shadow maps on 25 heightfields, {shadowed} occluded px, {mismatches} mismatching px (need 0)"),
    )
}

fn a7(run: &BumpRun) -> Outcome {
    let cap = &run.cap;
    let s = &cap.scene;
    let (w, h) = (s.camera.width, s.camera.height);
    let system = build_fusion_system(
        &cap.stereo_depth,
        &run.report.estimate.normals,
        &s.camera,
        FusionWeights::default(),
    )
    .unwrap();
    let fused = solve_fusion(&system, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS).unwrap();
    let guide = well_lit(&cap.visible_images()).unwrap().image;
    let bilateral = bilateral_smooth_depth(&cap.stereo_depth, &guide, 3.0, 0.1).unwrap();
    let mask = interior_mask(w, h, 8);
    let rmse_f = depth_rmse(&fused.depth, &s.depth, &mask).unwrap();
    let rmse_b = depth_rmse(&bilateral, &s.depth, &mask).unwrap();
    let nf = normals_from_depth(&fused.depth, &s.camera, 0.0).unwrap();
    let nb = normals_from_depth(&bilateral, &s.camera, 0.0).unwrap();
    let ef = mean_angular_error(&nf, &s.normals, &mask).unwrap();
    let eb = mean_angular_error(&nb, &s.normals, &mask).unwrap();
    let reduction = 1.0 - ef / eb;

    // 8x8 instance against a dense direct solve.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cam = Camera::centered(8, 8, 20.0).unwrap();
    let stereo = DepthMap::from_fn(8, 8, |_, _| rng.random_range(0.8..1.2));
    let normals = NormalMap::from_fn(8, 8, |_, _| Some(random_facing(&mut rng, 0.4)));
    let small = build_fusion_system(
        &stereo,
        &normals,
        &cam,
        FusionWeights {
            w_z: 1.0,
            w_n: 10.0,
        },
    )
    .unwrap();
    let direct = dense_solve(small.matrix.to_dense(), small.rhs.clone());
    let cg = solve_fusion(&small, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS).unwrap();
    let gap = direct
        .iter()
        .enumerate()
        .map(|(i, z)| (cg.depth.values()[i] - z).abs())
        .fold(0.0, f64::max);

    let pass = rmse_f < rmse_b && reduction >= 0.3 && gap < 1e-6;
    outcome(
        "A7",
        pass,
        format!(
            "depth rmse fused {:.3} mm vs bilateral {:.3} mm (stereo {:.3} mm); normals fused {ef:.2} deg vs bilateral \
             {eb:.2} deg ({:.1}% lower, need >= 30%); 8x8 dense gap {gap:.1e} (need < 1e-6)",
            1e3 * rmse_f,
            1e3 * rmse_b,
            1e3 * depth_rmse(&cap.stereo_depth, &s.depth, &mask).unwrap(),
            100.0 * reduction
        ),
    )
}

fn a8(guarded_runs: &[(&'static str, bool, usize)]) -> Outcome {
    let mut worst_photometric = 0f64;
    let mut worst_stereo = 0f64;
    for cap in [sphere_capture(SIZE), bump_capture(SIZE, 4.0)] {
        let s = &cap.scene;
        let mask = s.valid_mask();
        worst_stereo =
            worst_stereo.max((stereo_loss(&s.normals, &s.normals, &mask).unwrap() + 1.0).abs());
        let wl = well_lit(&cap.visible_images()).unwrap();
        let bundle = DataBundle::from_capture(&cap, &wl.image, GeometrySource::Truth).unwrap();
        let truth = SceneEstimate::from_truth(s);
        for o in &bundle.observations {
            let p = photometric_loss(
                &truth,
                o,
                &bundle.depth,
                &s.camera,
                &mask,
                s.exponent,
                &bundle.options,
            )
            .unwrap();
            worst_photometric = worst_photometric.max(p);
        }
    }
    let monotone = guarded_runs.iter().all(|g| g.1);
    let runs: Vec<String> = guarded_runs
        .iter()
        .map(|(name, ok, n)| format!("{name} {n} it {}", if *ok { "ok" } else { "INCREASED" }))
        .collect();
    let pass =
        worst_stereo <= 1e-6 && worst_photometric < 1e-6 && monotone && !guarded_runs.is_empty();
    outcome(
        "A8",
        pass,
        format!(
            "stereo loss at truth off -1 by {worst_stereo:.1e} (need <= 1e-6), photometric at truth {worst_photometric:.1e} \
             (need < 1e-6), guarded logs non-increasing: {}",
            runs.join(", ")
        ),
    )
}

fn a9() -> Outcome {
    let mut problems = Vec::new();
    let cam = Camera::centered(48, 32, 100.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let olats: Vec<ImageGrid> = (0..4)
        .map(|_| {
            ImageGrid::from_fn(cam.width, cam.height, 4, |_, _, _| {
                rng.random_range(0.0..0.7)
            })
        })
        .collect();
    for seed in 0..200 {
        for kind in ConditionKind::ALL {
            let a = simulate(kind, &olats, seed).unwrap();
            let b = simulate(kind, &olats, seed).unwrap();
            let same = a.condition == b.condition
                && a.image
                    .data()
                    .iter()
                    .zip(b.image.data())
                    .all(|(x, y)| x.to_bits() == y.to_bits());
            if !same {
                problems.push(format!("{} seed {seed} not deterministic", kind.name()));
            }
            if a.image.data().iter().any(|v| !(0.0..=1.0).contains(v)) || a.image.channels() != 3 {
                problems.push(format!("{} seed {seed} outside [0, 1]", kind.name()));
            }
            let in_range = match a.condition {
                LightingCondition::MixedColors {
                    temperatures,
                    indices,
                    ..
                } => {
                    (1900.0..=2900.0).contains(&temperatures[0])
                        && (7000.0..=20000.0).contains(&temperatures[1])
                        && indices[0] != indices[1]
                }
                LightingCondition::Overexposure { scale, .. } => (1.8..=2.3).contains(&scale),
                LightingCondition::LowLight { sigma, .. } => sigma == 25.0 / 255.0,
                _ => true,
            };
            if !in_range {
                problems.push(format!(
                    "{} seed {seed} parameters {:?}",
                    kind.name(),
                    a.condition
                ));
            }
        }
    }
    let gray = vec![ImageGrid::from_fn(128, 128, 4, |_, _, _| 0.5); 4];
    let noisy = augment::low_light(&gray, 11).unwrap();
    let diffs: Vec<f64> = noisy.image.data().iter().map(|&v| v as f64 - 0.5).collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let sd =
        (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64).sqrt();
    if (sd - 0.098).abs() > 0.005 {
        problems.push(format!("low-light sample sigma {sd:.4}"));
    }
    outcome(
        "A9",
        problems.is_empty(),
        format!(
            "200 seeds x 5 conditions checked, low-light sigma {sd:.4} on {} samples (need 0.098 +- 0.005, nominal {:.4}){}",
            diffs.len(),
            LOW_LIGHT_SIGMA,
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    )
}

fn a10() -> Outcome {
    let cam = camera(SIZE);
    let bands = vec![
        MaterialBand::new([0.6, 0.45, 0.35, 0.7], 0.1),
        MaterialBand::new([0.3, 0.5, 0.6, 0.5], 0.0),
        MaterialBand::new([0.55, 0.3, 0.25, 0.65], 0.05),
    ];
    let scene = make_sphere_scene(&cam, 0.15, [0.0, 0.0, -1.25], &bands).unwrap();
    let cap = Capture::new(
        scene,
        default_rig(),
        RenderOptions::default(),
        &StereoParams::default(),
        7,
    )
    .unwrap();
    let s = &cap.scene;
    let visible = cap.visible_images();
    let mask = s.valid_mask();
    let truth = SceneEstimate::from_truth(s);
    let (mut diff, mut total, mut pixels) = (0.0, 0.0, 0usize);
    for seed in 0..4 {
        let input = augment::shadows(&visible, seed).unwrap();
        let LightingCondition::Shadows { index } = input.condition else {
            unreachable!()
        };
        for missing in (0..visible.len()).filter(|&j| j != index) {
            let light = cap.olats[missing].light;
            let fill = render_virtual_light(
                &truth,
                &s.depth,
                &s.camera,
                &light,
                ReflectanceModel::Full,
                s.exponent,
                &cap.options,
            )
            .unwrap();
            let out = composite_fill(&input.image, &fill, 1.0).unwrap();
            for i in (0..mask.len()).filter(|&i| mask[i]) {
                let gt: [f64; 3] = std::array::from_fn(|c| {
                    visible[index].pixel(i)[c] as f64 + visible[missing].pixel(i)[c] as f64
                });
                if gt.iter().any(|&v| v >= 1.0) {
                    continue;
                }
                for c in 0..3 {
                    diff += (out.pixel(i)[c] as f64 - gt[c]).abs();
                    total += gt[c];
                }
                pixels += 1;
            }
        }
    }
    let rel = diff / total;
    outcome(
        "A10",
        pixels > 0 && rel < 0.01,
        format!("relit vs two-light render: MAE {:.2e} of mean intensity on {pixels} unclipped px (need < 1%)", rel),
    )
}

fn main() -> ExitCode {
    let only: Option<String> = std::env::args().skip(1).find(|a| a.starts_with('A'));
    let want = |id: &str| only.as_deref().is_none_or(|o| o == id);
    let mut results = Vec::new();
    let mut guarded_runs = Vec::new();
    if want("A1") || want("A8") {
        results.push(a1(&mut guarded_runs));
    }
    let mut bump = None;
    if want("A2") || want("A7") || want("A8") {
        let (o, run) = a2(&mut guarded_runs);
        results.push(o);
        bump = Some(run);
    }
    if want("A3") || want("A8") {
        results.push(a3(&mut guarded_runs));
    }
    if want("A4") {
        results.push(a4());
    }
    if want("A5") {
        results.push(a5());
    }
    if want("A6") {
        results.push(a6());
    }
    if let Some(run) = bump.as_ref().filter(|_| want("A7")) {
        results.push(a7(run));
    }
    if want("A8") {
        results.push(a8(&guarded_runs));
    }
    if want("A9") {
        results.push(a9());
    }
    if want("A10") {
        results.push(a10());
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.pass).map(|r| r.id).collect();
    println!(
        "acceptance: {} of {} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(", failed {}", failed.join(" "))
        }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
