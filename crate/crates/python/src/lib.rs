//! Python bindings: synthesize a capture, simulate a lighting condition,
//! solve, fuse depth and relight. Rasters cross the boundary as flat
//! row-major lists with their shape alongside.

use darkflash::augment::{simulate, well_lit, ConditionKind};
use darkflash::cli::config::{build_capture, parse_config, stage_seed, Stage};
use darkflash::fusion::{
    build_fusion_system, depth_rmse, solve_fusion, FusionWeights, DEFAULT_MAX_ITERATIONS,
    DEFAULT_TOLERANCE,
};
use darkflash::imaging::{DepthMap, ImageGrid, PointLight};
use darkflash::relight::{composite_fill, render_virtual_light, ReflectanceModel};
use darkflash::solver::{
    mean_angular_error, solve as run_solver, DataBundle, GeometrySource, LossConfig, SceneEstimate,
    SolverConfig, SolverMode,
};
use darkflash::synth::Capture as CoreCapture;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(frozen, skip_from_py_object, name = "Image")]
#[derive(Clone)]
pub struct Image {
    pub inner: ImageGrid,
}

#[pymethods]
impl Image {
    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    /// `(height, width, channels)`.
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (
            self.inner.height(),
            self.inner.width(),
            self.inner.channels(),
        )
    }

    fn pixel(&self, x: usize, y: usize) -> PyResult<Vec<f32>> {
        if x >= self.inner.width() || y >= self.inner.height() {
            return Err(err(format!("pixel ({x}, {y}) outside the image")));
        }
        Ok(self.inner.pixel(y * self.inner.width() + x).to_vec())
    }

    fn to_list(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "Image({}x{}x{})",
            self.inner.width(),
            self.inner.height(),
            self.inner.channels()
        )
    }
}

#[pyclass(frozen, skip_from_py_object, name = "Depth")]
#[derive(Clone)]
pub struct Depth {
    pub inner: DepthMap,
}

#[pymethods]
impl Depth {
    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.height(), self.inner.width())
    }

    /// Depth in meters, 0 where invalid.
    fn to_list(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    /// Root-mean-square difference over pixels valid in both maps.
    fn rmse(&self, other: &Depth) -> PyResult<f64> {
        let mask: Vec<bool> = self
            .inner
            .mask()
            .iter()
            .zip(other.inner.mask())
            .map(|(&a, b)| a && b)
            .collect();
        depth_rmse(&self.inner, &other.inner, &mask).map_err(err)
    }
}

#[pyclass(frozen, skip_from_py_object, name = "Estimate")]
#[derive(Clone)]
pub struct Estimate {
    pub inner: SceneEstimate,
}

#[pymethods]
impl Estimate {
    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.height(), self.inner.width())
    }

    /// Unit normals as `[x, y, z]`, `None` where invalid.
    fn normals(&self) -> Vec<Option<[f64; 3]>> {
        let n = &self.inner.normals;
        (0..n.width() * n.height())
            .map(|i| n.get_index(i).map(|v| [v.x, v.y, v.z]))
            .collect()
    }

    #[getter]
    fn albedo(&self) -> Image {
        Image {
            inner: self.inner.albedo.clone(),
        }
    }

    #[getter]
    fn specular(&self) -> Image {
        Image {
            inner: self.inner.specular(),
        }
    }

    /// Mean angle to `other`'s normals in degrees, over pixels valid in both.
    fn angular_error(&self, other: &Estimate) -> PyResult<f64> {
        let mask: Vec<bool> = self
            .inner
            .normals
            .mask()
            .iter()
            .zip(other.inner.normals.mask())
            .map(|(&a, b)| a && b)
            .collect();
        mean_angular_error(&self.inner.normals, &other.inner.normals, &mask).map_err(err)
    }
}

#[pyclass(frozen, skip_from_py_object, name = "Capture")]
pub struct Capture {
    pub inner: CoreCapture,
    seed: u64,
}

#[pymethods]
impl Capture {
    /// Renders the capture described by a JSON config string (the same
    /// schema as `darkflash synth --config`).
    #[staticmethod]
    #[pyo3(signature = (config, seed = None))]
    fn from_config(config: &str, seed: Option<u64>) -> PyResult<Self> {
        let cfg = parse_config(config).map_err(err)?;
        let seed = seed.unwrap_or(cfg.seed);
        let inner = build_capture(&cfg, seed, cfg.render_options()).map_err(err)?;
        Ok(Capture { inner, seed })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (
            self.inner.scene.camera.height,
            self.inner.scene.camera.width,
        )
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.seed
    }

    /// All nine renders: visible 0..4, NIR 0..4, flash.
    fn olats(&self) -> Vec<Image> {
        self.inner
            .olats
            .iter()
            .map(|o| Image {
                inner: o.image.clone(),
            })
            .collect()
    }

    #[getter]
    fn stereo_depth(&self) -> Depth {
        Depth {
            inner: self.inner.stereo_depth.clone(),
        }
    }

    #[getter]
    fn true_depth(&self) -> Depth {
        Depth {
            inner: self.inner.scene.depth.clone(),
        }
    }

    fn truth(&self) -> Estimate {
        Estimate {
            inner: SceneEstimate::from_truth(&self.inner.scene),
        }
    }

    /// RGB input under a lighting condition (`well-lit`, `shadows`,
    /// `mixed-colors`, `overexposure`, `low-light`).
    #[pyo3(signature = (kind, seed = None))]
    fn augment(&self, kind: &str, seed: Option<u64>) -> PyResult<Image> {
        let kind: ConditionKind = kind.parse().map_err(err)?;
        let seed = stage_seed(seed.unwrap_or(self.seed), Stage::Augment);
        let aug = simulate(kind, &self.inner.visible_images(), seed).map_err(err)?;
        Ok(Image { inner: aug.image })
    }

    /// Estimates normals, albedo and specular intensity from the nine OLATs,
    /// initializing albedo from `input` (the well-lit average by default).
    #[pyo3(signature = (input = None, iterations = 5000, lambda_p = 10.0, lambda_c = 50.0, mode = "adaptive", seed = None))]
    fn solve(
        &self,
        py: Python<'_>,
        input: Option<&Image>,
        iterations: usize,
        lambda_p: f64,
        lambda_c: f64,
        mode: &str,
        seed: Option<u64>,
    ) -> PyResult<(Estimate, f64)> {
        let mode: SolverMode = mode.parse().map_err(err)?;
        let rgb = match input {
            Some(i) => i.inner.clone(),
            None => well_lit(&self.inner.visible_images()).map_err(err)?.image,
        };
        let loss = LossConfig {
            lambda_p,
            lambda_c,
            ..LossConfig::default()
        };
        let cfg = SolverConfig {
            max_iterations: iterations,
            mode,
            seed: stage_seed(seed.unwrap_or(self.seed), Stage::Solve),
            ..SolverConfig::default()
        };
        let report = py
            .detach(|| {
                let bundle = DataBundle::from_capture(&self.inner, &rgb, GeometrySource::Stereo)?;
                run_solver(&bundle, &loss, &cfg)
            })
            .map_err(err)?;
        Ok((
            Estimate {
                inner: report.estimate,
            },
            report.energy.total,
        ))
    }

    /// Stereo depth refined with `estimate`'s normals.
    #[pyo3(signature = (estimate, wz = 1.0, wn = 10.0))]
    fn fuse(&self, py: Python<'_>, estimate: &Estimate, wz: f64, wn: f64) -> PyResult<Depth> {
        let solution = py
            .detach(|| {
                let system = build_fusion_system(
                    &self.inner.stereo_depth,
                    &estimate.inner.normals,
                    &self.inner.scene.camera,
                    FusionWeights { w_z: wz, w_n: wn },
                )?;
                solve_fusion(&system, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS)
            })
            .map_err(err)?;
        Ok(Depth {
            inner: solution.depth,
        })
    }

    /// Adds a virtual point light at `position` (camera coordinates, meters)
    /// to `input`, rendered from `estimate` at `depth`.
    #[pyo3(signature = (estimate, depth, input, position, intensity = [1.0, 1.0, 1.0], blend = 1.0, lambertian_only = false))]
    fn relight(
        &self,
        estimate: &Estimate,
        depth: &Depth,
        input: &Image,
        position: [f64; 3],
        intensity: [f64; 3],
        blend: f64,
        lambertian_only: bool,
    ) -> PyResult<Image> {
        let [r, g, b] = intensity;
        let light = PointLight::new(position, [r, g, b, 0.0]).map_err(err)?;
        let model = if lambertian_only {
            ReflectanceModel::LambertianOnly
        } else {
            ReflectanceModel::Full
        };
        let fill = render_virtual_light(
            &estimate.inner,
            &depth.inner,
            &self.inner.scene.camera,
            &light,
            model,
            LossConfig::default().exponent,
            &self.inner.options,
        )
        .map_err(err)?;
        let inner = composite_fill(&input.inner, &fill, blend).map_err(err)?;
        Ok(Image { inner })
    }
}

#[pymodule]
#[pyo3(name = "darkflash")]
fn darkflash_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Capture>()?;
    m.add_class::<Image>()?;
    m.add_class::<Depth>()?;
    m.add_class::<Estimate>()?;
    Ok(())
}
