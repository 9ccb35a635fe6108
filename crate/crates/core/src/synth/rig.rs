use serde::{Deserialize, Serialize};

use crate::imaging::PointLight;

/// Geometry and intensities of the capture rig. Lengths in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigParams {
    /// Width of the rectangle whose corners hold the visible lights.
    pub width: f64,
    pub height: f64,
    /// Horizontal outward offset of each NIR light from its visible partner.
    pub nir_offset: f64,
    /// Horizontal offset of the flash from the camera center.
    pub flash_offset: f64,
    pub visible_intensity: f64,
    pub nir_intensity: f64,
    pub flash_intensity: f64,
}

impl Default for RigParams {
    fn default() -> Self {
        RigParams {
            width: 1.5,
            height: 0.8,
            nir_offset: 0.05,
            flash_offset: 0.02,
            visible_intensity: 2.0,
            nir_intensity: 2.0,
            flash_intensity: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LightRole {
    Visible(usize),
    Nir(usize),
    Flash,
}

impl LightRole {
    pub fn name(self) -> String {
        match self {
            LightRole::Visible(i) => format!("visible_{i}"),
            LightRole::Nir(i) => format!("nir_{i}"),
            LightRole::Flash => "flash".into(),
        }
    }

    pub fn is_visible(self) -> bool {
        matches!(self, LightRole::Visible(_))
    }
}

/// Four visible corner lights, four NIR lights next to them and a NIR flash
/// beside the camera. The camera sits at the origin looking down `-z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightRig {
    pub visible: [PointLight; 4],
    pub nir: [PointLight; 4],
    pub flash: PointLight,
}

/// Corner order: top-left, top-right, bottom-left, bottom-right.
const CORNERS: [(f64, f64); 4] = [(-1.0, 1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];

impl LightRig {
    pub fn from_params(p: &RigParams) -> Self {
        let (hx, hy) = (p.width / 2.0, p.height / 2.0);
        let visible = CORNERS.map(|(sx, sy)| PointLight {
            position: [sx * hx, sy * hy, 0.0],
            intensity: [
                p.visible_intensity,
                p.visible_intensity,
                p.visible_intensity,
                0.0,
            ],
        });
        let nir = CORNERS.map(|(sx, sy)| PointLight {
            position: [sx * (hx + p.nir_offset), sy * hy, 0.0],
            intensity: [0.0, 0.0, 0.0, p.nir_intensity],
        });
        let flash = PointLight {
            position: [p.flash_offset, 0.0, 0.0],
            intensity: [0.0, 0.0, 0.0, p.flash_intensity],
        };
        LightRig {
            visible,
            nir,
            flash,
        }
    }

    /// Every light in the fixed order visible 0..4, NIR 0..4, flash.
    pub fn lights(&self) -> Vec<(LightRole, PointLight)> {
        let mut out = Vec::with_capacity(9);
        out.extend(
            self.visible
                .iter()
                .enumerate()
                .map(|(i, l)| (LightRole::Visible(i), *l)),
        );
        out.extend(
            self.nir
                .iter()
                .enumerate()
                .map(|(i, l)| (LightRole::Nir(i), *l)),
        );
        out.push((LightRole::Flash, self.flash));
        out
    }
}

pub fn default_rig() -> LightRig {
    LightRig::from_params(&RigParams::default())
}
