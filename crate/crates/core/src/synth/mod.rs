//! Synthetic scenes with exact ground truth, the light rig, simulated stereo
//! depth and shadow maps.

mod capture;
mod olat;
mod rig;
mod scene;
mod shadow;
mod stereo;

pub use capture::{Capture, StereoParams};
pub use olat::{render_olats, Olat};
pub use rig::{default_rig, LightRig, LightRole, RigParams};
pub use scene::{make_bumpfield_scene, make_sphere_scene, BumpField, MaterialBand, SceneTruth};
pub use shadow::{bilinear_depth, compute_shadow_map, shadow_samples, SHADOW_BIAS};
pub use stereo::{blur_depth, normals_from_depth, simulate_stereo_depth, STEREO_QUANTUM};
