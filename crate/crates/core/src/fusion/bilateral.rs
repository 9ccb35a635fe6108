use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::imaging::{DepthMap, ImageGrid};

/// Guided bilateral filter: each valid depth becomes a weighted mean of valid
/// neighbors within `3 * spatial_sigma`, weighted by pixel distance and by
/// Euclidean distance between guide pixels (all channels).
/// `range_sigma = inf` gives a plain Gaussian blur over valid pixels.
pub fn bilateral_smooth_depth(
    depth: &DepthMap,
    guide: &ImageGrid,
    spatial_sigma: f64,
    range_sigma: f64,
) -> Result<DepthMap> {
    let (w, h) = (depth.width(), depth.height());
    guide.expect_shape(w, h, "guide image")?;
    ensure!(
        spatial_sigma > 0.0 && spatial_sigma.is_finite() && range_sigma > 0.0,
        Error::InvalidArgument("bilateral sigmas must be positive".into())
    );
    let radius = (3.0 * spatial_sigma).ceil() as isize;
    let spatial: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * spatial_sigma * spatial_sigma)).exp())
        .collect();
    let range_scale = 1.0 / (2.0 * range_sigma * range_sigma);
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let i = y * w + x;
            if depth.get_index(i).is_none() {
                continue;
            }
            let g0 = guide.pixel(i);
            let (mut sum, mut norm) = (0.0, 0.0);
            for dy in -radius..=radius {
                let yy = y as isize + dy;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                for dx in -radius..=radius {
                    let xx = x as isize + dx;
                    if xx < 0 || xx >= w as isize {
                        continue;
                    }
                    let j = yy as usize * w + xx as usize;
                    let Some(d) = depth.get_index(j) else {
                        continue;
                    };
                    let g2: f64 = g0
                        .iter()
                        .zip(guide.pixel(j))
                        .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
                        .sum();
                    let wt = spatial[(dy + radius) as usize]
                        * spatial[(dx + radius) as usize]
                        * (-g2 * range_scale).exp();
                    sum += wt * d;
                    norm += wt;
                }
            }
            *o = sum / norm;
        }
    });
    DepthMap::new(w, h, out)
}
