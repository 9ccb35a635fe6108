use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use super::config::{build_capture, load_config, stage_seed, Stage};
use super::manifest::{
    base_dir, load_estimate, read_json, relative_to, EstimateFiles, LightEntry, LoadedCapture,
    Manifest, StereoFiles, TruthFiles, Writer, MANIFEST_FORMAT,
};
use super::{AugmentArgs, EvalArgs, FuseArgs, ModelArgs, RelightArgs, SolveArgs, SynthArgs};
use crate::augment::{simulate, well_lit, ConditionKind, LightingCondition};
use crate::brdf::RenderOptions;
use crate::fusion::{
    bilateral_smooth_depth, build_fusion_system, depth_rmse, solve_fusion, write_ply, FusionWeights,
};
use crate::imaging::{read_pfm, DepthMap, ImageGrid, PointLight};
use crate::relight::{composite_fill, render_virtual_light};
use crate::solver::{
    init_image, mean_angular_error, solve as run_solver, total_loss, write_iteration_csv,
    DataBundle, LossBreakdown, LossConfig, Observation, SceneEstimate, SolverConfig, StopReason,
};
use crate::synth::{compute_shadow_map, normals_from_depth};

fn apply_overrides(mut options: RenderOptions, m: &ModelArgs) -> RenderOptions {
    if let Some(f) = m.falloff {
        options.falloff = f.into();
    }
    if let Some(h) = m.half_vector {
        options.half_vector = h.into();
    }
    options
}

/// Grayscale depth preview, nearest valid depth white and farthest black.
fn depth_preview(depth: &DepthMap) -> ImageGrid {
    let valid: Vec<f64> = depth
        .values()
        .iter()
        .copied()
        .filter(|&d| d > 0.0)
        .collect();
    let lo = valid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = valid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    ImageGrid::from_fn(depth.width(), depth.height(), 1, |x, y, _| {
        depth.get(x, y).map_or(0.0, |d| ((hi - d) / span) as f32)
    })
}

pub fn synth(a: &SynthArgs) -> anyhow::Result<()> {
    let cfg = load_config(&a.config)?;
    let seed = a.seed.unwrap_or(cfg.seed);
    let options = apply_overrides(cfg.render_options(), &a.model);
    let cap = build_capture(&cfg, seed, options)?;
    let camera = cfg.camera;

    let mut w = Writer::new(&a.out)?;
    let s = &cap.scene;
    let truth_estimate = SceneEstimate::from_truth(s);
    let est_files = w.estimate("truth/estimate_", &truth_estimate)?;
    // The sidecar lives next to its rasters.
    let local = |p: String| p.trim_start_matches("truth/").to_string();
    let est_files = EstimateFiles {
        normals: local(est_files.normals),
        albedo: local(est_files.albedo),
        log_specular: local(est_files.log_specular),
    };
    let estimate_sidecar = w.json(
        "truth/estimate.json",
        &serde_json::json!({ "estimate": est_files, "source": "ground truth" }),
        "truth-estimate",
    )?;
    let truth = TruthFiles {
        depth: w.pfm("truth/depth", &s.depth.to_grid(), "truth-depth")?,
        normals: w.normals("truth/normals", &s.normals, "truth-normals")?,
        albedo: w.pfm("truth/albedo", &s.albedo, "truth-albedo")?,
        specular: w.pfm("truth/specular", &s.specular, "truth-specular")?,
        segmentation: w.pfm(
            "truth/segmentation",
            &s.segmentation.to_grid(),
            "truth-segmentation",
        )?,
        estimate: relative_to(&estimate_sidecar, &a.out),
    };
    w.png(
        "truth/depth",
        &depth_preview(&s.depth),
        "truth-depth-preview",
        false,
    )?;
    let mut lights = Vec::new();
    for o in &cap.olats {
        let name = o.role.name();
        let image = w.pfm(&format!("olat/{name}"), &o.image, &format!("olat-{name}"))?;
        let preview = if o.role.is_visible() {
            o.image.clone()
        } else {
            o.image.select_channels(&[3])?
        };
        w.png(
            &format!("olat/{name}"),
            &preview,
            &format!("olat-{name}-preview"),
            false,
        )?;
        let shadow = w.pfm(
            &format!("shadow/{name}"),
            &o.shadow,
            &format!("shadow-{name}"),
        )?;
        lights.push(LightEntry {
            role: o.role,
            light: o.light,
            image,
            shadow,
        });
    }
    let stereo = StereoFiles {
        depth: w.pfm("stereo/depth", &cap.stereo_depth.to_grid(), "stereo-depth")?,
        normals: w.normals("stereo/normals", &cap.stereo_normals, "stereo-normals")?,
    };
    w.png(
        "stereo/depth",
        &depth_preview(&cap.stereo_depth),
        "stereo-depth-preview",
        false,
    )?;
    let stage_seeds: BTreeMap<String, u64> = Stage::ALL
        .iter()
        .map(|&st| (st.name().to_string(), stage_seed(seed, st)))
        .collect();
    let mut files = w.files.clone();
    files.push(super::manifest::FileEntry {
        path: "manifest.json".into(),
        role: "manifest".into(),
    });
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        seed,
        stage_seeds,
        config: cfg.clone(),
        camera,
        render: options,
        exponent: s.exponent,
        lights,
        truth,
        stereo,
        files,
    };
    w.json("manifest.json", &manifest, "manifest")?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionSidecar {
    pub manifest: String,
    pub kind: ConditionKind,
    pub seed: u64,
    /// Seed actually passed to the simulator.
    pub stage_seed: u64,
    pub condition: LightingCondition,
    /// Lights whose unclipped, noise-free sum the image depicts.
    pub lights: Vec<PointLight>,
    pub image: String,
}

pub fn augment(a: &AugmentArgs) -> anyhow::Result<()> {
    let cap = LoadedCapture::load(&a.manifest)?;
    let seed = a.seed.unwrap_or(cap.manifest.seed);
    let drawn = stage_seed(seed, Stage::Augment);
    let (images, lights) = cap.visible();
    let aug = simulate(a.kind, &images, drawn)?;
    let mut w = Writer::new(&a.out)?;
    let image = w.pfm("input", &aug.image, "augmented-input")?;
    w.png("input", &aug.image, "augmented-input-preview", false)?;
    let sidecar = ConditionSidecar {
        manifest: relative_to(&a.manifest, &a.out),
        kind: a.kind,
        seed,
        stage_seed: drawn,
        lights: aug.condition.equivalent_lights(&lights)?,
        condition: aug.condition,
        image,
    };
    w.json("condition.json", &sidecar, "condition")?;
    Ok(())
}

/// The nine OLAT observations, shadowed against the stereo depth.
fn capture_bundle(
    cap: &LoadedCapture,
    options: RenderOptions,
    init_rgb: &ImageGrid,
) -> anyhow::Result<DataBundle> {
    let camera = cap.manifest.camera;
    let observations = cap
        .olats
        .iter()
        .map(|(role, light, image)| {
            let shadow = compute_shadow_map(&cap.stereo_depth, &camera, light)?;
            Observation::single(role.name(), image, *light, shadow)
        })
        .collect::<crate::Result<Vec<_>>>()?;
    Ok(DataBundle::new(
        camera,
        cap.stereo_depth.clone(),
        cap.stereo_normals.clone(),
        cap.segmentation.clone(),
        observations,
        &init_image(init_rgb, cap.flash())?,
        options,
    )?)
}

/// The augmented input named by a condition sidecar, or the well-lit average
/// of the visible OLATs when there is none.
fn input_image(
    cap: &LoadedCapture,
    input: Option<&Path>,
) -> anyhow::Result<(ImageGrid, Option<ConditionSidecar>)> {
    match input {
        Some(path) => {
            let sidecar: ConditionSidecar = read_json(path)?;
            let image =
                read_pfm(base_dir(path).join(&sidecar.image)).context("loading augmented input")?;
            Ok((image, Some(sidecar)))
        }
        None => Ok((well_lit(&cap.visible().0)?.image, None)),
    }
}

#[derive(Debug, Serialize)]
struct SolveSidecar {
    estimate: EstimateFiles,
    manifest: String,
    input: Option<String>,
    loss: LossConfig,
    solver: SolverConfig,
    render: RenderOptions,
    stop: StopReason,
    iterations: usize,
    best_iteration: usize,
    energy: LossBreakdown,
    observations: Vec<String>,
    iteration_log: String,
}

pub fn solve(a: &SolveArgs) -> anyhow::Result<()> {
    let cap = LoadedCapture::load(&a.manifest)?;
    let options = apply_overrides(cap.manifest.render, &a.model);
    let (rgb, condition) = input_image(&cap, a.input.as_deref())?;
    let mut bundle = capture_bundle(&cap, options, &rgb)?;
    if let Some(c) = &condition {
        let extra = bundle.observe(format!("input-{}", c.kind.name()), &rgb, &c.lights)?;
        let mut observations = bundle.observations.clone();
        observations.push(extra);
        bundle = bundle.with_observations(observations)?;
    }
    let loss = LossConfig {
        lambda_p: a.lambda_p,
        lambda_c: a.lambda_c,
        exponent: a.exponent,
        ..LossConfig::default()
    };
    let solver = SolverConfig {
        max_iterations: a.iters,
        step_size: a.step,
        mode: a.mode,
        seed: stage_seed(a.seed.unwrap_or(cap.manifest.seed), Stage::Solve),
        ..SolverConfig::default()
    };
    let report = run_solver(&bundle, &loss, &solver)?;
    let mut w = Writer::new(&a.out)?;
    let estimate = w.estimate("", &report.estimate)?;
    let csv = w.other("iterations.csv", "iteration-log")?;
    write_iteration_csv(&csv, &report.log)?;
    let sidecar = SolveSidecar {
        estimate,
        manifest: relative_to(&a.manifest, &a.out),
        input: a.input.as_deref().map(|p| relative_to(p, &a.out)),
        loss,
        solver,
        render: options,
        stop: report.stop,
        iterations: report.log.len() - 1,
        best_iteration: report.best_iteration,
        energy: report.energy,
        observations: bundle.observations.iter().map(|o| o.name.clone()).collect(),
        iteration_log: "iterations.csv".into(),
    };
    w.json("estimate.json", &sidecar, "estimate")?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct FuseSidecar {
    manifest: String,
    estimate: String,
    weights: FusionWeights,
    tolerance: f64,
    iterations: usize,
    residual: f64,
    energy_stereo: f64,
    energy_fused: f64,
    depth: String,
    mesh: String,
    bilateral: BilateralRecord,
}

#[derive(Debug, Serialize)]
struct BilateralRecord {
    spatial_sigma: f64,
    range_sigma: f64,
    depth: String,
}

pub fn fuse(a: &FuseArgs) -> anyhow::Result<()> {
    let cap = LoadedCapture::load(&a.manifest)?;
    let estimate = load_estimate(&a.estimate)?;
    let camera = cap.manifest.camera;
    let weights = FusionWeights {
        w_z: a.wz,
        w_n: a.wn,
    };
    let system = build_fusion_system(&cap.stereo_depth, &estimate.normals, &camera, weights)?;
    let solution = solve_fusion(&system, a.tolerance, a.max_iters)?;
    let fused_z: Vec<f64> = (0..camera.width * camera.height)
        .filter_map(|i| {
            cap.stereo_depth
                .get_index(i)
                .map(|_| solution.depth.values()[i])
        })
        .collect();
    let guide = well_lit(&cap.visible().0)?.image;
    let bilateral =
        bilateral_smooth_depth(&cap.stereo_depth, &guide, a.spatial_sigma, a.range_sigma)?;

    let mut w = Writer::new(&a.out)?;
    let depth = w.pfm("fused_depth", &solution.depth.to_grid(), "fused-depth")?;
    w.png(
        "fused_depth",
        &depth_preview(&solution.depth),
        "fused-depth-preview",
        false,
    )?;
    w.normals(
        "fused_normals",
        &normals_from_depth(&solution.depth, &camera, 0.0)?,
        "fused-normals",
    )?;
    let bil = w.pfm("bilateral_depth", &bilateral.to_grid(), "bilateral-depth")?;
    w.png(
        "bilateral_depth",
        &depth_preview(&bilateral),
        "bilateral-depth-preview",
        false,
    )?;
    let mesh = w.other("fused_mesh.ply", "fused-mesh")?;
    write_ply(&mesh, &solution.depth, &camera)?;
    let sidecar = FuseSidecar {
        manifest: relative_to(&a.manifest, &a.out),
        estimate: relative_to(&a.estimate, &a.out),
        weights,
        tolerance: a.tolerance,
        iterations: solution.iterations,
        residual: solution.residual,
        energy_stereo: system.energy(&system.stereo),
        energy_fused: system.energy(&fused_z),
        depth,
        mesh: "fused_mesh.ply".into(),
        bilateral: BilateralRecord {
            spatial_sigma: a.spatial_sigma,
            range_sigma: a.range_sigma,
            depth: bil,
        },
    };
    w.json("fusion.json", &sidecar, "fusion")?;
    Ok(())
}

pub fn relight(a: &RelightArgs) -> anyhow::Result<()> {
    let cap = LoadedCapture::load(&a.manifest)?;
    let estimate = load_estimate(&a.estimate)?;
    let options = apply_overrides(cap.manifest.render, &a.model_overrides);
    let (input, _) = input_image(&cap, a.input.as_deref())?;
    let depth = match &a.depth {
        Some(p) => {
            DepthMap::from_grid(&read_pfm(p).with_context(|| format!("loading {}", p.display()))?)?
        }
        None => cap.stereo_depth.clone(),
    };
    let [r, g, b] = a.light_intensity;
    let light = PointLight::new(a.light_pos, [r, g, b, 0.0])?;
    let fill = render_virtual_light(
        &estimate,
        &depth,
        &cap.manifest.camera,
        &light,
        a.model,
        a.exponent,
        &options,
    )?;
    let relit = composite_fill(&input, &fill, a.blend)?;
    let mut w = Writer::new(&a.out)?;
    let fill_path = w.pfm("fill", &fill, "fill-contribution")?;
    w.png("fill", &fill, "fill-preview", false)?;
    let relit_path = w.pfm("relit", &relit, "relit")?;
    w.png("relit", &relit, "relit-preview", false)?;
    w.json(
        "relight.json",
        &serde_json::json!({
            "manifest": relative_to(&a.manifest, &a.out),
            "estimate": relative_to(&a.estimate, &a.out),
            "input": a.input.as_deref().map(|p| relative_to(p, &a.out)),
            "depth": a.depth.as_deref().map(|p| relative_to(p, &a.out)),
            "light": light,
            "model": a.model,
            "blend": a.blend,
            "exponent": a.exponent,
            "render": options,
            "fill": fill_path,
            "relit": relit_path,
        }),
        "relight",
    )?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Metrics {
    pub angular_error_deg: Option<f64>,
    pub depth_rmse_m: Option<f64>,
    /// Energy of the estimate under the capture's default bundle.
    pub energy: Option<LossBreakdown>,
}

pub fn eval(a: &EvalArgs) -> anyhow::Result<()> {
    anyhow::ensure!(
        a.estimate.is_some() || a.depth.is_some(),
        "eval needs --estimate, --depth or both"
    );
    let cap = LoadedCapture::load(&a.manifest)?;
    let mut metrics = Metrics {
        angular_error_deg: None,
        depth_rmse_m: None,
        energy: None,
    };
    if let Some(path) = &a.estimate {
        let estimate = load_estimate(path)?;
        let truth = cap.truth_normals()?;
        let all = vec![true; truth.width() * truth.height()];
        metrics.angular_error_deg = Some(mean_angular_error(&estimate.normals, &truth, &all)?);
        let loss: LossConfig = serde_json::from_value::<serde_json::Value>(read_json(path)?)?
            .get("loss")
            .map(|v| serde_json::from_value(v.clone()))
            .transpose()?
            .unwrap_or_default();
        let rgb = well_lit(&cap.visible().0)?.image;
        let bundle = capture_bundle(&cap, cap.manifest.render, &rgb)?;
        metrics.energy = Some(total_loss(&estimate, &bundle, &loss)?);
    }
    if let Some(path) = &a.depth {
        let depth = DepthMap::from_grid(
            &read_pfm(path).with_context(|| format!("loading {}", path.display()))?,
        )?;
        let truth = cap.truth_depth()?;
        let all = vec![true; truth.width() * truth.height()];
        metrics.depth_rmse_m = Some(depth_rmse(&depth, &truth, &all)?);
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    super::manifest::write_json(&a.out, &metrics)
}
