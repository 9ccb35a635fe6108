use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{AlbedoInit, InitConfig, SceneEstimate, MAX_INIT_ALBEDO, MIN_INIT_SHADING};
use crate::brdf::{half_vector, RenderOptions};
use crate::error::{ensure, Error, Result};
use crate::imaging::{
    geometry_at, Camera, DepthMap, ImageGrid, NormalMap, PointLight, SegmentationMap,
};
use crate::synth::{compute_shadow_map, Capture};

/// A light contributing to an observation, with its binary visibility map.
#[derive(Debug, Clone, PartialEq)]
pub struct LightSource {
    pub light: PointLight,
    pub shadow: ImageGrid,
}

/// An observed image and the lights that produced it. OLATs have a single
/// source; simulated lighting conditions may have several, in which case the
/// model is the shadow-masked sum of the per-light renders.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub name: String,
    /// Four channels; three-channel inputs are padded with a zero NIR plane.
    pub image: ImageGrid,
    pub sources: Vec<LightSource>,
}

impl Observation {
    pub fn new(
        name: impl Into<String>,
        image: &ImageGrid,
        sources: Vec<LightSource>,
    ) -> Result<Self> {
        let name = name.into();
        ensure!(
            !sources.is_empty(),
            Error::InvalidArgument(format!("observation {name} has no light"))
        );
        for s in &sources {
            s.shadow
                .expect_shape(image.width(), image.height(), "shadow map")?;
            ensure!(
                s.shadow.channels() == 1,
                Error::InvalidArgument("shadow maps have 1 channel".into())
            );
        }
        Ok(Observation {
            name,
            image: image.to_rgbn()?,
            sources,
        })
    }

    pub fn single(
        name: impl Into<String>,
        image: &ImageGrid,
        light: PointLight,
        shadow: ImageGrid,
    ) -> Result<Self> {
        Observation::new(name, image, vec![LightSource { light, shadow }])
    }
}

/// Shading geometry of one light at one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SourceGeom {
    pub l: Vector3<f64>,
    pub h: Vector3<f64>,
    /// Light intensity times distance falloff.
    pub radiance: [f64; 4],
    pub lit: bool,
}

impl SourceGeom {
    const DARK: SourceGeom = SourceGeom {
        l: Vector3::new(0.0, 0.0, 1.0),
        h: Vector3::new(0.0, 0.0, 1.0),
        radiance: [0.0; 4],
        lit: false,
    };
}

/// Everything the energy needs about one scene. Shading geometry (light and
/// half vectors, falloff, visibility) is precomputed from `depth`.
#[derive(Debug, Clone)]
pub struct DataBundle {
    pub camera: Camera,
    /// Depth used for light directions and falloff.
    pub depth: DepthMap,
    pub stereo_normals: NormalMap,
    pub segmentation: SegmentationMap,
    pub observations: Vec<Observation>,
    /// Four-channel image used to initialize albedo.
    pub init_image: ImageGrid,
    pub options: RenderOptions,
    mask: Vec<bool>,
    /// Start of each observation's sources in the per-pixel source list.
    source_offsets: Vec<usize>,
    sources_per_pixel: usize,
    geometry: Vec<SourceGeom>,
}

impl DataBundle {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        camera: Camera,
        depth: DepthMap,
        stereo_normals: NormalMap,
        segmentation: SegmentationMap,
        observations: Vec<Observation>,
        init_image: &ImageGrid,
        options: RenderOptions,
    ) -> Result<Self> {
        camera.validate()?;
        let (w, h) = (camera.width, camera.height);
        ensure!(
            depth.width() == w
                && depth.height() == h
                && stereo_normals.width() == w
                && stereo_normals.height() == h
                && segmentation.width() == w
                && segmentation.height() == h,
            Error::Dimensions(format!("bundle maps must be {w}x{h}"))
        );
        init_image.expect_shape(w, h, "initialization image")?;
        ensure!(
            !observations.is_empty(),
            Error::InvalidArgument("bundle needs at least one observation".into())
        );
        for o in &observations {
            o.image.expect_shape(w, h, &o.name)?;
        }
        let mask: Vec<bool> = (0..w * h)
            .map(|i| depth.get_index(i).is_some() && stereo_normals.is_valid(i))
            .collect();
        ensure!(mask.iter().any(|&m| m), Error::EmptyMask("solve"));

        let mut source_offsets = Vec::with_capacity(observations.len() + 1);
        let mut total = 0;
        for o in &observations {
            source_offsets.push(total);
            total += o.sources.len();
        }
        source_offsets.push(total);

        let lights: Vec<(&PointLight, &ImageGrid)> = observations
            .iter()
            .flat_map(|o| o.sources.iter().map(|s| (&s.light, &s.shadow)))
            .collect();
        let mut geometry = vec![SourceGeom::DARK; w * h * total];
        for (i, chunk) in geometry.chunks_mut(total).enumerate() {
            let Some(d) = depth.get_index(i) else {
                continue;
            };
            let p = camera.unproject((i % w) as f64, (i / w) as f64, d)?;
            for (slot, (light, shadow)) in chunk.iter_mut().zip(&lights) {
                let g = geometry_at(&p, light)?;
                let falloff = options.falloff.factor(&g);
                *slot = SourceGeom {
                    l: g.l,
                    h: half_vector(&g.l, &g.v)?,
                    radiance: light.intensity.map(|v| v * falloff),
                    lit: shadow.pixel(i)[0] > 0.5,
                };
            }
        }

        Ok(DataBundle {
            camera,
            depth,
            stereo_normals,
            segmentation,
            observations,
            init_image: init_image.to_rgbn()?,
            options,
            mask,
            source_offsets,
            sources_per_pixel: total,
            geometry,
        })
    }

    /// Same scene with a different set of observations.
    pub fn with_observations(&self, observations: Vec<Observation>) -> Result<Self> {
        let mut b = DataBundle::new(
            self.camera,
            self.depth.clone(),
            self.stereo_normals.clone(),
            self.segmentation.clone(),
            observations,
            &self.init_image,
            self.options,
        )?;
        b.restrict_mask(&self.mask)?;
        Ok(b)
    }

    pub fn with_init_image(mut self, init_image: &ImageGrid) -> Result<Self> {
        init_image.expect_shape(
            self.camera.width,
            self.camera.height,
            "initialization image",
        )?;
        self.init_image = init_image.to_rgbn()?;
        Ok(self)
    }

    /// An observation of this scene under `lights`, shadowed against the
    /// bundle's depth. Used for augmented inputs, whose lights come from
    /// [`crate::augment::LightingCondition::equivalent_lights`].
    pub fn observe(
        &self,
        name: impl Into<String>,
        image: &ImageGrid,
        lights: &[PointLight],
    ) -> Result<Observation> {
        let sources = lights
            .iter()
            .map(|l| {
                Ok(LightSource {
                    light: *l,
                    shadow: compute_shadow_map(&self.depth, &self.camera, l)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Observation::new(name, image, sources)
    }

    pub fn width(&self) -> usize {
        self.camera.width
    }

    pub fn height(&self) -> usize {
        self.camera.height
    }

    /// Pixels being solved for: valid depth and valid stereo normal, further
    /// narrowed by [`DataBundle::restrict_mask`].
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn restrict_mask(&mut self, keep: &[bool]) -> Result<()> {
        ensure!(
            keep.len() == self.mask.len(),
            Error::Dimensions("mask size differs from the bundle".into())
        );
        for (m, &k) in self.mask.iter_mut().zip(keep) {
            *m &= k;
        }
        ensure!(self.mask.iter().any(|&m| m), Error::EmptyMask("solve"));
        Ok(())
    }

    pub(crate) fn sources(&self, pixel: usize, observation: usize) -> &[SourceGeom] {
        let base = pixel * self.sources_per_pixel;
        &self.geometry
            [base + self.source_offsets[observation]..base + self.source_offsets[observation + 1]]
    }

    /// Starting point: stereo normals, albedo per `init.albedo` clamped to
    /// `[0, 4]`, and `rho = init.specular`.
    pub fn initial_estimate(&self, init: &InitConfig) -> SceneEstimate {
        let (w, h) = (self.width(), self.height());
        let mut normals = NormalMap::invalid(w, h);
        let mut albedo = ImageGrid::zeros(w, h, 4);
        let log_specular = ImageGrid::from_fn(w, h, 1, |_, _, _| init.specular.ln() as f32);
        let lights: Vec<PointLight> = self
            .observations
            .iter()
            .flat_map(|o| o.sources.iter().map(|s| s.light))
            .collect();
        for i in (0..w * h).filter(|&i| self.mask[i]) {
            let n = self
                .stereo_normals
                .get_index(i)
                .expect("mask implies valid stereo normal");
            normals.set_index(i, Some(n));
            let a = match init.albedo {
                AlbedoInit::BrightestObservation => self.brightest_albedo(i),
                AlbedoInit::Shading => {
                    let d = self.depth.get_index(i).expect("mask implies valid depth");
                    let p = self.camera.ray((i % w) as f64, (i / w) as f64) * d;
                    let observed = self.init_image.pixel(i);
                    std::array::from_fn(|c| {
                        let nearest = lights
                            .iter()
                            .filter(|l| l.intensity[c] > 0.0)
                            .min_by(|a, b| (a.pos() - p).norm().total_cmp(&(b.pos() - p).norm()));
                        let shading = nearest.map_or(1.0, |l| {
                            n.dot(&(l.pos() - p).normalize()).max(MIN_INIT_SHADING)
                        });
                        observed[c] as f64 / shading
                    })
                }
            };
            for (out, v) in albedo.pixel_mut(i).iter_mut().zip(a) {
                *out = v.clamp(0.0, MAX_INIT_ALBEDO) as f32;
            }
        }
        SceneEstimate {
            normals,
            albedo,
            log_specular,
        }
    }

    fn brightest_albedo(&self, i: usize) -> [f64; 4] {
        let mut best = [0.0f64; 4];
        for (o, obs) in self.observations.iter().enumerate() {
            let mut irradiance = [0.0; 4];
            for g in self.sources(i, o).iter().filter(|g| g.lit) {
                for c in 0..4 {
                    irradiance[c] += g.radiance[c];
                }
            }
            let observed = obs.image.pixel(i);
            for c in 0..4 {
                if irradiance[c] > 0.0 {
                    best[c] = best[c].max(observed[c] as f64 / irradiance[c]);
                }
            }
        }
        best
    }
}

/// Which depth a bundle built from a capture uses for shading geometry and
/// shadow maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometrySource {
    /// The simulated stereo depth, as a real capture would.
    #[default]
    Stereo,
    /// The exact depth, isolating the energy from geometry errors.
    Truth,
}

impl DataBundle {
    /// Bundle of all nine OLATs of a capture. Albedo is initialized from
    /// `init_rgb` (the lighting-condition input) and the flash NIR image.
    pub fn from_capture(
        capture: &Capture,
        init_rgb: &ImageGrid,
        geometry: GeometrySource,
    ) -> Result<Self> {
        let scene = &capture.scene;
        let depth = match geometry {
            GeometrySource::Stereo => capture.stereo_depth.clone(),
            GeometrySource::Truth => scene.depth.clone(),
        };
        let observations = capture
            .olats
            .iter()
            .map(|o| {
                let shadow = match geometry {
                    GeometrySource::Stereo => compute_shadow_map(&depth, &scene.camera, &o.light)?,
                    GeometrySource::Truth => o.shadow.clone(),
                };
                Observation::single(o.role.name(), &o.image, o.light, shadow)
            })
            .collect::<Result<Vec<_>>>()?;
        DataBundle::new(
            scene.camera,
            depth,
            capture.stereo_normals.clone(),
            scene.segmentation.clone(),
            observations,
            &init_image(init_rgb, &capture.flash().image)?,
            capture.options,
        )
    }
}

/// Four-channel initialization image: RGB from `rgb`, NIR from channel 3 of
/// `nir` (a four-channel image such as the dark-flash capture).
pub fn init_image(rgb: &ImageGrid, nir: &ImageGrid) -> Result<ImageGrid> {
    ensure!(
        rgb.width() == nir.width()
            && rgb.height() == nir.height()
            && rgb.channels() >= 3
            && nir.channels() == 4,
        Error::Dimensions("need an RGB image and a four-channel NIR image of equal size".into())
    );
    let mut out = ImageGrid::zeros(rgb.width(), rgb.height(), 4);
    for i in 0..out.len_pixels() {
        let p = out.pixel_mut(i);
        p[..3].copy_from_slice(&rgb.pixel(i)[..3]);
        p[3] = nir.pixel(i)[3];
    }
    Ok(out)
}
