//! Experiment configuration and seed derivation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use anyhow::Context;

use crate::brdf::{HalfVector, RenderOptions};
use crate::imaging::{Camera, Falloff};
use crate::synth::{
    make_bumpfield_scene, make_sphere_scene, BumpField, Capture, LightRig, MaterialBand, RigParams,
    StereoParams,
};

/// One file reproduces one synthetic capture.
///
/// ```json
/// {
///   "scene": { "type": "sphere", "radius": 0.15, "center": [0, 0, -1.25],
///              "bands": [{ "albedo": [0.6, 0.45, 0.35, 0.7], "specular": 0.0 }] },
///   "camera": { "fx": 409.6, "fy": 409.6, "cx": 63.5, "cy": 63.5, "width": 128, "height": 128 },
///   "rig": { "visible_intensity": 2.0 },
///   "falloff": "inverse-square",
///   "half_vector": "blinn",
///   "stereo": { "smoothing_radius": 4.0, "noise_sigma": 0.001 },
///   "seed": 7
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub scene: SceneConfig,
    pub camera: Camera,
    #[serde(default)]
    pub rig: RigParams,
    #[serde(default)]
    pub falloff: Falloff,
    #[serde(default)]
    pub half_vector: HalfVector,
    #[serde(default)]
    pub stereo: StereoParams,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SceneConfig {
    Sphere {
        radius: f64,
        center: [f64; 3],
        bands: Vec<MaterialBand>,
    },
    Bumpfield {
        base_depth: f64,
        amplitude: f64,
        wavelength_px: f64,
        bands: Vec<MaterialBand>,
    },
}

/// Parses a config, reporting schema violations with the offending path
/// (e.g. `camera: missing field `fx``).
pub fn parse_config(text: &str) -> anyhow::Result<SynthConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow::anyhow!("invalid config at {path}: {}", e.into_inner())
    })
}

pub fn load_config(path: &Path) -> anyhow::Result<SynthConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    parse_config(&text)
}

/// Renders the capture `cfg` describes. `seed` replaces `cfg.seed` and
/// `options` the config's rendering model.
pub fn build_capture(
    cfg: &SynthConfig,
    seed: u64,
    options: RenderOptions,
) -> anyhow::Result<Capture> {
    let camera = cfg.camera;
    camera.validate().context("camera")?;
    let scene = match &cfg.scene {
        SceneConfig::Sphere {
            radius,
            center,
            bands,
        } => make_sphere_scene(&camera, *radius, *center, bands)?,
        SceneConfig::Bumpfield {
            base_depth,
            amplitude,
            wavelength_px,
            bands,
        } => {
            let field = BumpField::new(
                *base_depth,
                *amplitude,
                *wavelength_px,
                stage_seed(seed, Stage::Scene),
            )?;
            make_bumpfield_scene(&camera, &field, bands)?
        }
    };
    let rig = LightRig::from_params(&cfg.rig);
    Ok(Capture::new(
        scene,
        rig,
        options,
        &cfg.stereo,
        stage_seed(seed, Stage::Stereo),
    )?)
}

impl SynthConfig {
    pub fn render_options(&self) -> RenderOptions {
        RenderOptions {
            falloff: self.falloff,
            half_vector: self.half_vector,
        }
    }
}

/// Consumers of randomness. Each stage draws from its own seed so adding or
/// reordering stages never shifts the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Scene = 1,
    Stereo = 2,
    Augment = 3,
    Solve = 4,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Scene, Stage::Stereo, Stage::Augment, Stage::Solve];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Scene => "scene",
            Stage::Stereo => "stereo",
            Stage::Augment => "augment",
            Stage::Solve => "solve",
        }
    }
}

/// Seed of `stage`: output number `stage` of a SplitMix64 stream started at
/// `seed`, i.e. the SplitMix64 finalizer applied to
/// `seed + stage * 0x9E3779B97F4A7C15`.
pub fn stage_seed(seed: u64, stage: Stage) -> u64 {
    let mut z = seed.wrapping_add((stage as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
