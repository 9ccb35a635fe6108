//! Raster and camera types shared by every stage of the pipeline, plus
//! PFM/PNG file I/O.
//!
//! Conventions used throughout the crate:
//! - camera coordinates are x right, y up, z toward the camera, so visible
//!   surface points have negative z and depth is `-z`;
//! - pixel `(px, py)` has its origin at the top-left, `py` grows downward and
//!   integer coordinates address pixel centers;
//! - four-channel rasters are ordered R, G, B, NIR.

mod geometry;
mod pfm;
mod preview;

pub(crate) use geometry::geometry_at;
pub use geometry::{light_dir_and_view, Camera, Falloff, LightGeometry, PointLight};
pub use pfm::{read_pfm, write_pfm};
pub use preview::{encode_byte, write_normal_preview, write_png_preview, DEFAULT_GAMMA};

use nalgebra::Vector3;

use crate::error::{ensure, Error, Result};

/// Index of the near-infrared channel in four-channel rasters.
pub const NIR: usize = 3;

/// Row-major, channel-interleaved raster of finite `f32` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

fn check_channels(channels: usize) -> Result<()> {
    ensure!(
        matches!(channels, 1 | 3 | 4),
        Error::InvalidArgument(format!("channel count must be 1, 3 or 4, got {channels}"))
    );
    Ok(())
}

impl ImageGrid {
    /// Zero-filled grid.
    ///
    /// Panics if `channels` is not 1, 3 or 4.
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        check_channels(channels).expect("unsupported channel count");
        ImageGrid {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        check_channels(channels)?;
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::Dimensions(format!("{width}x{height}x{channels} overflows")))?;
        ensure!(
            data.len() == expected,
            Error::Dimensions(format!(
                "{width}x{height}x{channels} grid needs {expected} samples, got {}",
                data.len()
            ))
        );
        ensure!(
            data.iter().all(|v| v.is_finite()),
            Error::InvalidArgument("grid samples must be finite".into())
        );
        Ok(ImageGrid {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut grid = ImageGrid::zeros(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    grid.set(x, y, c, f(x, y, c));
                }
            }
        }
        grid
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f32) {
        debug_assert!(value.is_finite());
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    /// All channels of the pixel with linear index `i = y * width + x`.
    #[inline]
    pub fn pixel(&self, i: usize) -> &[f32] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn expect_shape(&self, width: usize, height: usize, what: &str) -> Result<()> {
        ensure!(
            self.width == width && self.height == height,
            Error::Dimensions(format!(
                "{what} is {}x{}, expected {width}x{height}",
                self.width, self.height
            ))
        );
        Ok(())
    }

    /// New grid holding the listed channels, in the given order.
    pub fn select_channels(&self, channels: &[usize]) -> Result<ImageGrid> {
        check_channels(channels.len())?;
        ensure!(
            channels.iter().all(|&c| c < self.channels),
            Error::InvalidArgument(format!(
                "channel index out of range for a {}-channel grid",
                self.channels
            ))
        );
        let mut out = ImageGrid::zeros(self.width, self.height, channels.len());
        for i in 0..self.len_pixels() {
            let src = self.pixel(i);
            for (dst, &c) in out.pixel_mut(i).iter_mut().zip(channels) {
                *dst = src[c];
            }
        }
        Ok(out)
    }

    /// Four-channel copy of an RGB grid with a zero NIR channel; four-channel
    /// grids are cloned.
    pub fn to_rgbn(&self) -> Result<ImageGrid> {
        match self.channels {
            4 => Ok(self.clone()),
            3 => {
                let mut out = ImageGrid::zeros(self.width, self.height, 4);
                for i in 0..self.len_pixels() {
                    out.pixel_mut(i)[..3].copy_from_slice(self.pixel(i));
                }
                Ok(out)
            }
            c => Err(Error::InvalidArgument(format!(
                "cannot widen a {c}-channel grid to RGB+NIR"
            ))),
        }
    }

    pub fn map(&self, mut f: impl FnMut(f32) -> f32) -> ImageGrid {
        ImageGrid {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise sum. Panics on shape mismatch.
    pub fn add(&self, other: &ImageGrid) -> ImageGrid {
        assert!(self.same_shape(other) && self.channels == other.channels);
        ImageGrid {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }
}

/// Per-pixel unit normals with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    width: usize,
    height: usize,
    normals: Vec<Vector3<f64>>,
    valid: Vec<bool>,
}

/// Smallest `n_z` a normal may have and still count as camera-facing.
pub const MIN_FACING: f64 = 0.05;

impl NormalMap {
    /// Map with every pixel invalid.
    pub fn invalid(width: usize, height: usize) -> Self {
        NormalMap {
            width,
            height,
            normals: vec![Vector3::zeros(); width * height],
            valid: vec![false; width * height],
        }
    }

    /// Builds a map from a per-pixel closure; `None`, zero-length and
    /// non-camera-facing results are stored as invalid.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Option<Vector3<f64>>,
    ) -> Self {
        let mut map = NormalMap::invalid(width, height);
        for y in 0..height {
            for x in 0..width {
                map.set(x, y, f(x, y));
            }
        }
        map
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<Vector3<f64>> {
        self.get_index(y * self.width + x)
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> Option<Vector3<f64>> {
        self.valid[i].then(|| self.normals[i])
    }

    #[inline]
    pub fn is_valid(&self, i: usize) -> bool {
        self.valid[i]
    }

    /// Stores `n` normalized. Vectors that cannot be normalized or that face
    /// away from the camera (`n_z <= 0`) mark the pixel invalid.
    pub fn set(&mut self, x: usize, y: usize, n: Option<Vector3<f64>>) {
        let i = y * self.width + x;
        self.set_index(i, n);
    }

    pub fn set_index(&mut self, i: usize, n: Option<Vector3<f64>>) {
        match n.and_then(|n| n.try_normalize(1e-12)).filter(|n| n.z > 0.0) {
            Some(n) => {
                self.normals[i] = n;
                self.valid[i] = true;
            }
            None => {
                self.normals[i] = Vector3::zeros();
                self.valid[i] = false;
            }
        }
    }

    /// Invalidates pixels with `n_z` below `min_nz`.
    pub fn restrict_facing(&mut self, min_nz: f64) {
        for i in 0..self.valid.len() {
            if self.valid[i] && self.normals[i].z < min_nz {
                self.valid[i] = false;
                self.normals[i] = Vector3::zeros();
            }
        }
    }

    pub fn mask(&self) -> Vec<bool> {
        self.valid.clone()
    }

    /// Three-channel grid; invalid pixels are stored as zero vectors.
    pub fn to_grid(&self) -> ImageGrid {
        let mut g = ImageGrid::zeros(self.width, self.height, 3);
        for (i, n) in self.normals.iter().enumerate() {
            let p = g.pixel_mut(i);
            for c in 0..3 {
                p[c] = n[c] as f32;
            }
        }
        g
    }

    /// Inverse of [`NormalMap::to_grid`]: zero vectors become invalid pixels.
    pub fn from_grid(grid: &ImageGrid) -> Result<Self> {
        ensure!(
            grid.channels() == 3,
            Error::InvalidArgument("normal grids have 3 channels".into())
        );
        let mut map = NormalMap::invalid(grid.width(), grid.height());
        for i in 0..grid.len_pixels() {
            let p = grid.pixel(i);
            let n = Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64);
            map.set_index(i, (n.norm_squared() > 0.0).then_some(n));
        }
        Ok(map)
    }
}

/// Per-pixel depth along the optical axis in meters; values `<= 0` are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depth: Vec<f64>,
}

/// Largest depth accepted as valid, in meters.
pub const MAX_DEPTH: f64 = 100.0;

impl DepthMap {
    pub fn new(width: usize, height: usize, depth: Vec<f64>) -> Result<Self> {
        ensure!(
            depth.len() == width * height,
            Error::Dimensions(format!(
                "{width}x{height} depth map needs {} values, got {}",
                width * height,
                depth.len()
            ))
        );
        ensure!(
            depth.iter().all(|d| d.is_finite() && *d <= MAX_DEPTH),
            Error::InvalidArgument(format!("depths must be finite and at most {MAX_DEPTH} m"))
        );
        Ok(DepthMap {
            width,
            height,
            depth,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut depth = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let d = f(x, y);
                depth.push(if d.is_finite() && d > 0.0 && d <= MAX_DEPTH {
                    d
                } else {
                    0.0
                });
            }
        }
        DepthMap {
            width,
            height,
            depth,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.depth
    }

    /// Depth at `(x, y)` if valid.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.get_index(y * self.width + x)
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> Option<f64> {
        let d = self.depth[i];
        (d > 0.0).then_some(d)
    }

    pub fn mask(&self) -> Vec<bool> {
        self.depth.iter().map(|&d| d > 0.0).collect()
    }

    pub fn min_valid(&self) -> Option<f64> {
        self.depth
            .iter()
            .copied()
            .filter(|&d| d > 0.0)
            .min_by(f64::total_cmp)
    }

    pub fn to_grid(&self) -> ImageGrid {
        let data = self.depth.iter().map(|&d| d.max(0.0) as f32).collect();
        ImageGrid::from_vec(self.width, self.height, 1, data).expect("finite depths")
    }

    pub fn from_grid(grid: &ImageGrid) -> Result<Self> {
        ensure!(
            grid.channels() == 1,
            Error::InvalidArgument("depth grids have 1 channel".into())
        );
        DepthMap::new(
            grid.width(),
            grid.height(),
            grid.data().iter().map(|&d| d as f64).collect(),
        )
    }
}

/// Semantic class of a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Background = 0,
    Head = 1,
    Hair = 2,
    Body = 3,
    UpperArm = 4,
    LowerArm = 5,
}

impl Label {
    pub const ALL: [Label; 6] = [
        Label::Background,
        Label::Head,
        Label::Hair,
        Label::Body,
        Label::UpperArm,
        Label::LowerArm,
    ];

    /// Body and arm pixels, the only ones the albedo prior applies to.
    pub fn is_clothing(self) -> bool {
        matches!(self, Label::Body | Label::UpperArm | Label::LowerArm)
    }

    pub fn from_index(index: u8) -> Option<Label> {
        Label::ALL.get(index as usize).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMap {
    width: usize,
    height: usize,
    labels: Vec<Label>,
}

impl SegmentationMap {
    pub fn filled(width: usize, height: usize, label: Label) -> Self {
        SegmentationMap {
            width,
            height,
            labels: vec![label; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Label) -> Self {
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y));
            }
        }
        SegmentationMap {
            width,
            height,
            labels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Label {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn set(&mut self, x: usize, y: usize, label: Label) {
        self.labels[y * self.width + x] = label;
    }

    /// Labels stored as their class index in a one-channel grid.
    pub fn to_grid(&self) -> ImageGrid {
        let data = self.labels.iter().map(|&l| l as u8 as f32).collect();
        ImageGrid::from_vec(self.width, self.height, 1, data).expect("finite labels")
    }

    pub fn from_grid(grid: &ImageGrid) -> Result<Self> {
        ensure!(
            grid.channels() == 1,
            Error::InvalidArgument("segmentation grids have 1 channel".into())
        );
        let labels = grid
            .data()
            .iter()
            .map(|&v| {
                let idx = v.round();
                (idx == v && (0.0..=5.0).contains(&idx))
                    .then(|| Label::from_index(idx as u8))
                    .flatten()
                    .ok_or_else(|| Error::InvalidArgument(format!("{v} is not a class label")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SegmentationMap {
            width: grid.width(),
            height: grid.height(),
            labels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_length_is_checked() {
        assert!(ImageGrid::from_vec(2, 2, 3, vec![0.0; 11]).is_err());
        assert!(ImageGrid::from_vec(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(ImageGrid::from_vec(1, 1, 1, vec![f32::NAN]).is_err());
        assert!(ImageGrid::from_vec(2, 2, 3, vec![0.0; 12]).is_ok());
    }

    #[test]
    fn normal_map_normalizes_and_rejects_backfacing() {
        let mut m = NormalMap::invalid(2, 1);
        m.set(0, 0, Some(Vector3::new(0.0, 0.0, 2.0)));
        m.set(1, 0, Some(Vector3::new(0.0, 0.0, -1.0)));
        assert_eq!(m.get(0, 0), Some(Vector3::new(0.0, 0.0, 1.0)));
        assert_eq!(m.get(1, 0), None);
    }

    #[test]
    fn segmentation_grid_round_trip() {
        let seg = SegmentationMap::from_fn(6, 1, |x, _| Label::ALL[x]);
        assert_eq!(SegmentationMap::from_grid(&seg.to_grid()).unwrap(), seg);
        let bad = ImageGrid::from_vec(1, 1, 1, vec![7.0]).unwrap();
        assert!(SegmentationMap::from_grid(&bad).is_err());
    }

    #[test]
    fn depth_sentinel() {
        let d = DepthMap::from_fn(3, 1, |x, _| x as f64 - 1.0);
        assert_eq!(d.get(0, 0), None);
        assert_eq!(d.get(1, 0), None);
        assert_eq!(d.get(2, 0), Some(1.0));
        assert!(DepthMap::new(1, 1, vec![101.0]).is_err());
    }
}
