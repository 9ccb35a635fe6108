//! Visible lighting conditions synthesized from the four visible OLATs.
//!
//! Every simulator is a deterministic function of its inputs and seed and
//! reports the parameters it drew in a [`LightingCondition`]. Outputs are
//! three-channel RGB grids clipped to `[0, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::imaging::{ImageGrid, PointLight};

/// Color temperature range of the warm light in the mixed-colors condition, K.
pub const WARM_RANGE: (f64, f64) = (1900.0, 2900.0);
/// Color temperature range of the cool light, K.
pub const COOL_RANGE: (f64, f64) = (7000.0, 20000.0);
/// Exposure scale range of the overexposure condition.
pub const OVEREXPOSURE_RANGE: (f64, f64) = (1.8, 2.3);
/// Low-light noise: 25 gray levels of an 8-bit sensor.
pub const LOW_LIGHT_SIGMA: f64 = 25.0 / 255.0;
/// Well-lit exposure: this percentile of the averaged image maps to
/// [`WELL_LIT_TARGET`].
pub const WELL_LIT_PERCENTILE: f64 = 0.999;
pub const WELL_LIT_TARGET: f64 = 0.95;

/// Second radiation constant `c2 = h c / k_B`, m K.
const PLANCK_C2: f64 = 1.4388e-2;
/// Wavelengths sampled for R, G and B, meters.
const RGB_WAVELENGTHS: [f64; 3] = [600e-9, 550e-9, 450e-9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionKind {
    WellLit,
    Shadows,
    MixedColors,
    Overexposure,
    LowLight,
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 5] = [
        ConditionKind::WellLit,
        ConditionKind::Shadows,
        ConditionKind::MixedColors,
        ConditionKind::Overexposure,
        ConditionKind::LowLight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConditionKind::WellLit => "well-lit",
            ConditionKind::Shadows => "shadows",
            ConditionKind::MixedColors => "mixed-colors",
            ConditionKind::Overexposure => "overexposure",
            ConditionKind::LowLight => "low-light",
        }
    }
}

impl std::str::FromStr for ConditionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConditionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown lighting condition {s:?}")))
    }
}

/// Parameters drawn by a simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LightingCondition {
    WellLit {
        /// Global factor applied to the OLAT average.
        scale: f64,
    },
    Shadows {
        index: usize,
    },
    MixedColors {
        indices: [usize; 2],
        temperatures: [f64; 2],
        tints: [[f64; 3]; 2],
    },
    Overexposure {
        index: usize,
        scale: f64,
    },
    LowLight {
        index: usize,
        sigma: f64,
    },
}

impl LightingCondition {
    pub fn kind(&self) -> ConditionKind {
        match self {
            LightingCondition::WellLit { .. } => ConditionKind::WellLit,
            LightingCondition::Shadows { .. } => ConditionKind::Shadows,
            LightingCondition::MixedColors { .. } => ConditionKind::MixedColors,
            LightingCondition::Overexposure { .. } => ConditionKind::Overexposure,
            LightingCondition::LowLight { .. } => ConditionKind::LowLight,
        }
    }

    /// The point lights whose unclipped, noise-free sum the image depicts,
    /// given the lights behind the input OLATs (in the same order).
    pub fn equivalent_lights(&self, lights: &[PointLight]) -> Result<Vec<PointLight>> {
        let get = |i: usize| {
            lights.get(i).copied().ok_or_else(|| {
                Error::InvalidArgument(format!("condition refers to light {i} of {}", lights.len()))
            })
        };
        let tinted = |l: PointLight, tint: [f64; 3], factor: f64| {
            let mut out = l;
            for c in 0..3 {
                out.intensity[c] *= tint[c] * factor;
            }
            out
        };
        Ok(match self {
            LightingCondition::WellLit { scale } => lights
                .iter()
                .map(|l| l.scaled(scale / lights.len() as f64))
                .collect(),
            LightingCondition::Shadows { index } | LightingCondition::LowLight { index, .. } => {
                vec![get(*index)?]
            }
            LightingCondition::Overexposure { index, scale } => vec![get(*index)?.scaled(*scale)],
            LightingCondition::MixedColors { indices, tints, .. } => vec![
                tinted(get(indices[0])?, tints[0], 0.5),
                tinted(get(indices[1])?, tints[1], 0.5),
            ],
        })
    }
}

/// A simulated visible input and the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub image: ImageGrid,
    pub condition: LightingCondition,
    pub seed: u64,
}

fn check_olats(olats: &[ImageGrid], min: usize) -> Result<()> {
    ensure!(
        olats.len() >= min,
        Error::InvalidArgument(format!(
            "need at least {min} OLAT images, got {}",
            olats.len()
        ))
    );
    let first = &olats[0];
    for o in olats {
        ensure!(
            o.same_shape(first) && o.channels() >= 3,
            Error::Dimensions("OLAT images must share dimensions and carry RGB".into())
        );
    }
    Ok(())
}

fn rgb(img: &ImageGrid) -> ImageGrid {
    if img.channels() == 3 {
        img.clone()
    } else {
        img.select_channels(&[0, 1, 2]).expect("validated channels")
    }
}

fn clip(img: &ImageGrid) -> ImageGrid {
    img.map(|v| v.clamp(0.0, 1.0))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Nearest-rank percentile of all samples.
fn percentile(values: &[f32], q: f64) -> f32 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f32::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Equal-weight average of the OLATs under one global exposure scale. The
/// scale maps the 99.9th percentile to 0.95, reduced if needed so that no
/// sample exceeds 1.
pub fn well_lit(olats: &[ImageGrid]) -> Result<Augmented> {
    check_olats(olats, 1)?;
    let first = rgb(&olats[0]);
    let n = olats.len() as f64;
    let mut sum = vec![0f64; first.data().len()];
    for o in olats {
        for (s, v) in sum.iter_mut().zip(rgb(o).data()) {
            *s += *v as f64;
        }
    }
    let avg: Vec<f32> = sum.iter().map(|s| (s / n) as f32).collect();
    let max = avg.iter().copied().fold(0f32, f32::max) as f64;
    ensure!(
        max > 0.0,
        Error::InvalidArgument("cannot expose an all-black image".into())
    );
    let anchor = percentile(&avg, WELL_LIT_PERCENTILE) as f64;
    let scale = if anchor > 0.0 {
        (WELL_LIT_TARGET / anchor).min(1.0 / max)
    } else {
        1.0 / max
    };
    let image = ImageGrid::from_vec(
        first.width(),
        first.height(),
        3,
        avg.iter()
            .map(|&v| ((v as f64 * scale) as f32).clamp(0.0, 1.0))
            .collect(),
    )?;
    Ok(Augmented {
        image,
        condition: LightingCondition::WellLit { scale },
        seed: 0,
    })
}

/// One OLAT picked uniformly at random.
pub fn shadows(olats: &[ImageGrid], seed: u64) -> Result<Augmented> {
    check_olats(olats, 1)?;
    let index = rng(seed).random_range(0..olats.len());
    Ok(Augmented {
        image: clip(&rgb(&olats[index])),
        condition: LightingCondition::Shadows { index },
        seed,
    })
}

/// Relative RGB of a blackbody at `temperature` kelvin, sampled at 600, 550
/// and 450 nm and normalized to a maximum of 1.
pub fn blackbody_rgb(temperature: f64) -> Result<[f64; 3]> {
    ensure!(
        (1000.0..=25000.0).contains(&temperature),
        Error::InvalidArgument(format!("temperature {temperature} K outside [1000, 25000]"))
    );
    let radiance = RGB_WAVELENGTHS
        .map(|lambda| lambda.powi(-5) / ((PLANCK_C2 / (lambda * temperature)).exp_m1()));
    let max = radiance.iter().copied().fold(0.0, f64::max);
    Ok(radiance.map(|r| r / max))
}

/// Channelwise tint of two images, averaged and clipped.
pub fn mix_tinted(
    a: &ImageGrid,
    b: &ImageGrid,
    tint_a: [f64; 3],
    tint_b: [f64; 3],
) -> Result<ImageGrid> {
    check_olats(&[a.clone(), b.clone()], 2)?;
    let (a, b) = (rgb(a), rgb(b));
    let mut out = ImageGrid::zeros(a.width(), a.height(), 3);
    for i in 0..out.len_pixels() {
        let (pa, pb) = (a.pixel(i), b.pixel(i));
        for (c, o) in out.pixel_mut(i).iter_mut().enumerate() {
            let v = 0.5 * (pa[c] as f64 * tint_a[c] + pb[c] as f64 * tint_b[c]);
            *o = (v as f32).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Two distinct OLATs, one tinted warm and one cool, averaged.
pub fn mixed_colors(olats: &[ImageGrid], seed: u64) -> Result<Augmented> {
    check_olats(olats, 2)?;
    let mut r = rng(seed);
    let first = r.random_range(0..olats.len());
    let mut second = r.random_range(0..olats.len() - 1);
    if second >= first {
        second += 1;
    }
    let t_warm = r.random_range(WARM_RANGE.0..=WARM_RANGE.1);
    let t_cool = r.random_range(COOL_RANGE.0..=COOL_RANGE.1);
    let tints = [blackbody_rgb(t_warm)?, blackbody_rgb(t_cool)?];
    Ok(Augmented {
        image: mix_tinted(&olats[first], &olats[second], tints[0], tints[1])?,
        condition: LightingCondition::MixedColors {
            indices: [first, second],
            temperatures: [t_warm, t_cool],
            tints,
        },
        seed,
    })
}

/// One OLAT scaled by a random factor and clipped at 1.
pub fn overexpose(olats: &[ImageGrid], seed: u64) -> Result<Augmented> {
    check_olats(olats, 1)?;
    let mut r = rng(seed);
    let index = r.random_range(0..olats.len());
    let scale = r.random_range(OVEREXPOSURE_RANGE.0..=OVEREXPOSURE_RANGE.1);
    Ok(Augmented {
        image: scale_and_clip(&rgb(&olats[index]), scale),
        condition: LightingCondition::Overexposure { index, scale },
        seed,
    })
}

pub fn scale_and_clip(img: &ImageGrid, scale: f64) -> ImageGrid {
    img.map(|v| ((v as f64 * scale) as f32).clamp(0.0, 1.0))
}

/// One OLAT plus i.i.d. Gaussian noise of 25/255, clipped to `[0, 1]`.
pub fn low_light(olats: &[ImageGrid], seed: u64) -> Result<Augmented> {
    check_olats(olats, 1)?;
    let mut r = rng(seed);
    let index = r.random_range(0..olats.len());
    let noise = Normal::new(0.0, LOW_LIGHT_SIGMA).expect("positive sigma");
    let image =
        rgb(&olats[index]).map(|v| ((v as f64 + noise.sample(&mut r)) as f32).clamp(0.0, 1.0));
    Ok(Augmented {
        image,
        condition: LightingCondition::LowLight {
            index,
            sigma: LOW_LIGHT_SIGMA,
        },
        seed,
    })
}

/// Dispatches to the simulator for `kind`.
pub fn simulate(kind: ConditionKind, olats: &[ImageGrid], seed: u64) -> Result<Augmented> {
    match kind {
        ConditionKind::WellLit => well_lit(olats).map(|a| Augmented { seed, ..a }),
        ConditionKind::Shadows => shadows(olats, seed),
        ConditionKind::MixedColors => mixed_colors(olats, seed),
        ConditionKind::Overexposure => overexpose(olats, seed),
        ConditionKind::LowLight => low_light(olats, seed),
    }
}
