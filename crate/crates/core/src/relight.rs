//! Fill-light relighting: render a virtual point light from the estimated
//! maps and add it to the input image.
//!
//! The virtual light casts no shadows; only the estimate is rendered.

use serde::{Deserialize, Serialize};

use crate::brdf::{render, RenderOptions, Surface};
use crate::error::{ensure, Error, Result};
use crate::imaging::{Camera, DepthMap, ImageGrid, PointLight};
use crate::solver::SceneEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReflectanceModel {
    /// Diffuse plus Blinn-Phong lobe.
    #[default]
    Full,
    /// Diffuse term only (`rho = 0`).
    LambertianOnly,
}

impl std::str::FromStr for ReflectanceModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ReflectanceModel::Full),
            "lambertian-only" | "lambertian" => Ok(ReflectanceModel::LambertianOnly),
            _ => Err(Error::InvalidArgument(format!(
                "unknown reflectance model {s:?}"
            ))),
        }
    }
}

/// RGB contribution of `light` to the estimated surface at `depth`.
pub fn render_virtual_light(
    estimate: &SceneEstimate,
    depth: &DepthMap,
    camera: &Camera,
    light: &PointLight,
    model: ReflectanceModel,
    exponent: f64,
    options: &RenderOptions,
) -> Result<ImageGrid> {
    let specular = match model {
        ReflectanceModel::Full => estimate.specular(),
        ReflectanceModel::LambertianOnly => {
            ImageGrid::zeros(estimate.width(), estimate.height(), 1)
        }
    };
    let surface = Surface {
        normals: &estimate.normals,
        albedo: &estimate.albedo,
        specular: &specular,
        exponent,
    };
    render(&surface, depth, camera, light, None, options)?.select_channels(&[0, 1, 2])
}

/// `clip(input + blend * contribution, 0, 1)` on the RGB channels.
pub fn composite_fill(
    input_rgb: &ImageGrid,
    contribution: &ImageGrid,
    blend: f64,
) -> Result<ImageGrid> {
    ensure!(
        (0.0..=1.0).contains(&blend),
        Error::InvalidArgument(format!("blend {blend} outside [0, 1]"))
    );
    ensure!(
        input_rgb.channels() >= 3 && contribution.channels() >= 3,
        Error::InvalidArgument("compositing needs RGB images".into())
    );
    contribution.expect_shape(input_rgb.width(), input_rgb.height(), "fill contribution")?;
    Ok(ImageGrid::from_fn(
        input_rgb.width(),
        input_rgb.height(),
        3,
        |x, y, c| {
            let v =
                input_rgb.get(x, y, c) as f64 + blend * contribution.get(x, y, c).max(0.0) as f64;
            v.clamp(0.0, 1.0) as f32
        },
    ))
}
