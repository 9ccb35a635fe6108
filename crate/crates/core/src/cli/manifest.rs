//! On-disk layout shared by the commands. Every path stored in a manifest or
//! sidecar is relative to the directory of the JSON file that holds it.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::config::SynthConfig;
use crate::brdf::RenderOptions;
use crate::imaging::{
    read_pfm, write_normal_preview, write_pfm, write_png_preview, Camera, DepthMap, ImageGrid,
    NormalMap, PointLight, SegmentationMap, DEFAULT_GAMMA,
};
use crate::solver::SceneEstimate;
use crate::synth::LightRole;

pub const MANIFEST_FORMAT: &str = "darkflash-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightEntry {
    pub role: LightRole,
    pub light: PointLight,
    /// Four-channel render (stored as an RGB/NIR pair).
    pub image: String,
    /// Shadow map from the true depth.
    pub shadow: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFiles {
    pub depth: String,
    pub normals: String,
    pub albedo: String,
    pub specular: String,
    pub segmentation: String,
    /// Estimate sidecar holding the true maps, for evaluation and relighting.
    pub estimate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StereoFiles {
    pub depth: String,
    pub normals: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub stage_seeds: std::collections::BTreeMap<String, u64>,
    pub config: SynthConfig,
    pub camera: Camera,
    pub render: RenderOptions,
    pub exponent: f64,
    /// Visible 0..4, NIR 0..4, flash.
    pub lights: Vec<LightEntry>,
    pub truth: TruthFiles,
    pub stereo: StereoFiles,
    pub files: Vec<FileEntry>,
}

/// Paths of an estimate's rasters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateFiles {
    pub normals: String,
    pub albedo: String,
    pub log_specular: String,
}

/// Header of every estimate sidecar; commands add their own fields around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateHeader {
    pub estimate: EstimateFiles,
}

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        anyhow::anyhow!("{}: invalid at {at}: {}", path.display(), e.into_inner())
    })
}

/// Directory containing a JSON file, against which its paths resolve.
pub fn base_dir(json: &Path) -> PathBuf {
    json.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Path from `dir` to `target`, falling back to the absolute path when the two
/// share no prefix.
pub fn relative_to(target: &Path, dir: &Path) -> String {
    let abs = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let (t, d) = (abs(target), abs(dir));
    let common = t
        .components()
        .zip(d.components())
        .take_while(|(a, b)| a == b)
        .count();
    if common == 0 {
        return t.display().to_string();
    }
    let mut rel = PathBuf::new();
    for _ in d.components().skip(common) {
        rel.push("..");
    }
    for c in t.components().skip(common) {
        rel.push(c);
    }
    rel.display().to_string()
}

/// Writes rasters under one directory and records every file produced.
pub struct Writer {
    pub dir: PathBuf,
    pub files: Vec<FileEntry>,
}

impl Writer {
    pub fn new(dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn record(&mut self, rel: &str, role: &str) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
        self.files.push(FileEntry {
            path: rel.to_string(),
            role: role.to_string(),
        });
        Ok(path)
    }

    /// Writes `<stem>.pfm` (or its RGB/NIR pair) and returns the logical path.
    pub fn pfm(&mut self, stem: &str, grid: &ImageGrid, role: &str) -> anyhow::Result<String> {
        let rel = format!("{stem}.pfm");
        let path = self.dir.join(&rel);
        if grid.channels() == 4 {
            self.record(&format!("{stem}.rgb.pfm"), role)?;
            self.record(&format!("{stem}.nir.pfm"), role)?;
        } else {
            self.record(&rel, role)?;
        }
        write_pfm(&path, grid)?;
        Ok(rel)
    }

    /// `<stem>.png` preview. Four-channel grids show RGB, plus a grayscale
    /// `<stem>.nir.png` when `with_nir`.
    pub fn png(
        &mut self,
        stem: &str,
        grid: &ImageGrid,
        role: &str,
        with_nir: bool,
    ) -> anyhow::Result<()> {
        let path = self.record(&format!("{stem}.png"), role)?;
        write_png_preview(&path, grid, DEFAULT_GAMMA)?;
        if with_nir && grid.channels() == 4 {
            let path = self.record(&format!("{stem}.nir.png"), role)?;
            write_png_preview(&path, &grid.select_channels(&[3])?, DEFAULT_GAMMA)?;
        }
        Ok(())
    }

    pub fn normals(
        &mut self,
        stem: &str,
        normals: &NormalMap,
        role: &str,
    ) -> anyhow::Result<String> {
        let rel = self.pfm(stem, &normals.to_grid(), role)?;
        let path = self.record(&format!("{stem}.png"), role)?;
        write_normal_preview(&path, normals)?;
        Ok(rel)
    }

    /// Writes an estimate's rasters and previews under `prefix`.
    pub fn estimate(&mut self, prefix: &str, e: &SceneEstimate) -> anyhow::Result<EstimateFiles> {
        let normals = self.normals(&format!("{prefix}normals"), &e.normals, "estimate-normals")?;
        let albedo = self.pfm(&format!("{prefix}albedo"), &e.albedo, "estimate-albedo")?;
        self.png(
            &format!("{prefix}albedo"),
            &e.albedo,
            "estimate-albedo-preview",
            true,
        )?;
        let log_specular = self.pfm(
            &format!("{prefix}log_specular"),
            &e.log_specular,
            "estimate-log-specular",
        )?;
        self.png(
            &format!("{prefix}specular"),
            &e.specular(),
            "estimate-specular-preview",
            false,
        )?;
        Ok(EstimateFiles {
            normals,
            albedo,
            log_specular,
        })
    }

    pub fn json(
        &mut self,
        rel: &str,
        value: &impl Serialize,
        role: &str,
    ) -> anyhow::Result<PathBuf> {
        let path = self.record(rel, role)?;
        write_json(&path, value)?;
        Ok(path)
    }

    pub fn other(&mut self, rel: &str, role: &str) -> anyhow::Result<PathBuf> {
        self.record(rel, role)
    }
}

pub fn load_grid(base: &Path, rel: &str) -> anyhow::Result<ImageGrid> {
    read_pfm(base.join(rel)).with_context(|| format!("loading {rel}"))
}

pub fn load_estimate(sidecar: &Path) -> anyhow::Result<SceneEstimate> {
    let header: EstimateHeader = read_json(sidecar)?;
    let base = base_dir(sidecar);
    let f = &header.estimate;
    Ok(SceneEstimate::new(
        NormalMap::from_grid(&load_grid(&base, &f.normals)?)?,
        load_grid(&base, &f.albedo)?,
        load_grid(&base, &f.log_specular)?,
    )?)
}

/// Everything a downstream command reads from a manifest.
pub struct LoadedCapture {
    pub manifest: Manifest,
    pub base: PathBuf,
    pub olats: Vec<(LightRole, PointLight, ImageGrid)>,
    pub stereo_depth: DepthMap,
    pub stereo_normals: NormalMap,
    pub segmentation: SegmentationMap,
}

impl LoadedCapture {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let manifest: Manifest = read_json(path)?;
        anyhow::ensure!(
            manifest.format == MANIFEST_FORMAT,
            "{}: unsupported manifest format {:?}",
            path.display(),
            manifest.format
        );
        let base = base_dir(path);
        let olats = manifest
            .lights
            .iter()
            .map(|e| Ok((e.role, e.light, load_grid(&base, &e.image)?)))
            .collect::<anyhow::Result<Vec<_>>>()?;
        anyhow::ensure!(
            olats.iter().any(|o| o.0 == LightRole::Flash)
                && olats.iter().filter(|o| o.0.is_visible()).count() > 0,
            "manifest lists no flash or no visible light"
        );
        let stereo_depth = DepthMap::from_grid(&load_grid(&base, &manifest.stereo.depth)?)?;
        let stereo_normals = NormalMap::from_grid(&load_grid(&base, &manifest.stereo.normals)?)?;
        let segmentation =
            SegmentationMap::from_grid(&load_grid(&base, &manifest.truth.segmentation)?)?;
        let cam = manifest.camera;
        for (what, w, h) in [
            ("stereo depth", stereo_depth.width(), stereo_depth.height()),
            (
                "stereo normals",
                stereo_normals.width(),
                stereo_normals.height(),
            ),
            ("segmentation", segmentation.width(), segmentation.height()),
        ] {
            anyhow::ensure!(
                (w, h) == (cam.width, cam.height),
                "{what} is {w}x{h} but the camera is {}x{}",
                cam.width,
                cam.height
            );
        }
        for (role, _, img) in &olats {
            img.expect_shape(cam.width, cam.height, &role.name())?;
        }
        Ok(LoadedCapture {
            manifest,
            base,
            olats,
            stereo_depth,
            stereo_normals,
            segmentation,
        })
    }

    pub fn visible(&self) -> (Vec<ImageGrid>, Vec<PointLight>) {
        self.olats
            .iter()
            .filter(|o| o.0.is_visible())
            .map(|(_, l, img)| (img.clone(), *l))
            .unzip()
    }

    pub fn flash(&self) -> &ImageGrid {
        &self
            .olats
            .iter()
            .find(|o| o.0 == LightRole::Flash)
            .expect("checked on load")
            .2
    }

    pub fn truth_estimate(&self) -> anyhow::Result<SceneEstimate> {
        load_estimate(&self.base.join(&self.manifest.truth.estimate))
    }

    pub fn truth_normals(&self) -> anyhow::Result<NormalMap> {
        Ok(NormalMap::from_grid(&load_grid(
            &self.base,
            &self.manifest.truth.normals,
        )?)?)
    }

    pub fn truth_depth(&self) -> anyhow::Result<DepthMap> {
        Ok(DepthMap::from_grid(&load_grid(
            &self.base,
            &self.manifest.truth.depth,
        )?)?)
    }
}
