use rayon::prelude::*;

use super::rig::{LightRig, LightRole};
use super::scene::SceneTruth;
use super::shadow::compute_shadow_map;
use crate::brdf::{render, RenderOptions};
use crate::error::Result;
use crate::imaging::{ImageGrid, PointLight};

/// One-light-at-a-time capture: the light, its four-channel render and the
/// binary shadow map used to produce it.
#[derive(Debug, Clone, PartialEq)]
pub struct Olat {
    pub role: LightRole,
    pub light: PointLight,
    pub image: ImageGrid,
    pub shadow: ImageGrid,
}

/// Renders the scene under every rig light in turn (visible 0..4, NIR 0..4,
/// flash) with cast shadows from the true depth. Visible lights carry no NIR
/// intensity and NIR lights no RGB intensity, so each render only populates
/// its own band.
pub fn render_olats(
    scene: &SceneTruth,
    rig: &LightRig,
    options: &RenderOptions,
) -> Result<Vec<Olat>> {
    rig.lights()
        .into_par_iter()
        .map(|(role, light)| {
            let shadow = compute_shadow_map(&scene.depth, &scene.camera, &light)?;
            let image = render(
                &scene.surface(),
                &scene.depth,
                &scene.camera,
                &light,
                Some(&shadow),
                options,
            )?;
            Ok(Olat {
                role,
                light,
                image,
                shadow,
            })
        })
        .collect()
}
