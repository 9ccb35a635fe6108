use serde::{Deserialize, Serialize};

use super::olat::{render_olats, Olat};
use super::rig::LightRig;
use super::scene::SceneTruth;
use super::stereo::{normals_from_depth, simulate_stereo_depth};
use crate::brdf::RenderOptions;
use crate::error::Result;
use crate::imaging::{DepthMap, NormalMap};

/// How the stereo depth and stereo normals are degraded from the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StereoParams {
    /// Gaussian blur of the depth, pixels.
    pub smoothing_radius: f64,
    /// Additive depth noise, meters.
    pub noise_sigma: f64,
    /// Gaussian blur applied before differentiating for normals, pixels.
    pub normal_presmooth: f64,
}

impl Default for StereoParams {
    fn default() -> Self {
        StereoParams {
            smoothing_radius: 4.0,
            noise_sigma: 0.001,
            normal_presmooth: 2.0,
        }
    }
}

/// A synthetic capture: ground truth, the nine OLATs and simulated stereo.
#[derive(Debug, Clone)]
pub struct Capture {
    pub scene: SceneTruth,
    pub rig: LightRig,
    pub options: RenderOptions,
    pub olats: Vec<Olat>,
    pub stereo_depth: DepthMap,
    pub stereo_normals: NormalMap,
}

impl Capture {
    pub fn new(
        scene: SceneTruth,
        rig: LightRig,
        options: RenderOptions,
        stereo: &StereoParams,
        seed: u64,
    ) -> Result<Self> {
        let olats = render_olats(&scene, &rig, &options)?;
        let stereo_depth = simulate_stereo_depth(
            &scene.depth,
            stereo.smoothing_radius,
            stereo.noise_sigma,
            seed,
        )?;
        let stereo_normals =
            normals_from_depth(&stereo_depth, &scene.camera, stereo.normal_presmooth)?;
        Ok(Capture {
            scene,
            rig,
            options,
            olats,
            stereo_depth,
            stereo_normals,
        })
    }

    /// The four visible OLAT images.
    pub fn visible_images(&self) -> Vec<crate::imaging::ImageGrid> {
        self.olats
            .iter()
            .filter(|o| o.role.is_visible())
            .map(|o| o.image.clone())
            .collect()
    }

    pub fn flash(&self) -> &Olat {
        self.olats.last().expect("captures always hold the flash")
    }
}
