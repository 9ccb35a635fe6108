use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ensure, Error, Result};
use crate::imaging::{Camera, DepthMap, NormalMap, MIN_FACING};

/// Depth quantization step of simulated stereo, in meters.
pub const STEREO_QUANTUM: f64 = 0.001;

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

fn convolve_rows(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let xx = x as isize + k as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    acc += kv * src[y * w + xx as usize];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn convolve_cols(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, &kv) in kernel.iter().enumerate() {
            let yy = y as isize + k as isize - r;
            if yy < 0 || yy as usize >= h {
                continue;
            }
            let src_row = &src[yy as usize * w..(yy as usize + 1) * w];
            for (o, s) in out[y * w..(y + 1) * w].iter_mut().zip(src_row) {
                *o += kv * s;
            }
        }
    }
    out
}

/// Gaussian blur over valid pixels only (normalized convolution). Invalid
/// pixels stay invalid; `sigma == 0` returns a copy.
pub fn blur_depth(depth: &DepthMap, sigma: f64) -> Result<DepthMap> {
    ensure!(
        sigma >= 0.0 && sigma.is_finite(),
        Error::InvalidArgument("blur radius must be nonnegative".into())
    );
    if sigma == 0.0 {
        return Ok(depth.clone());
    }
    let (w, h) = (depth.width(), depth.height());
    let kernel = gaussian_kernel(sigma);
    let mask: Vec<f64> = depth
        .values()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let weighted: Vec<f64> = depth.values().iter().map(|&d| d.max(0.0)).collect();
    let num = convolve_cols(&convolve_rows(&weighted, w, h, &kernel), w, h, &kernel);
    let den = convolve_cols(&convolve_rows(&mask, w, h, &kernel), w, h, &kernel);
    let out = (0..w * h)
        .map(|i| {
            if mask[i] > 0.0 && den[i] > 0.0 {
                num[i] / den[i]
            } else {
                0.0
            }
        })
        .collect();
    DepthMap::new(w, h, out)
}

/// Degrades a depth map the way a stereo matcher would: Gaussian blur of
/// `smoothing_radius` pixels, additive Gaussian noise of `noise_sigma`
/// meters, then quantization to 1 mm.
pub fn simulate_stereo_depth(
    truth: &DepthMap,
    smoothing_radius: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<DepthMap> {
    ensure!(
        noise_sigma >= 0.0 && noise_sigma.is_finite(),
        Error::InvalidArgument("noise sigma must be nonnegative".into())
    );
    let blurred = blur_depth(truth, smoothing_radius)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma).expect("validated sigma");
    let out = blurred
        .values()
        .iter()
        .map(|&d| {
            if d <= 0.0 {
                return 0.0;
            }
            let noisy = if noise_sigma > 0.0 {
                d + noise.sample(&mut rng)
            } else {
                d
            };
            let q = (noisy / STEREO_QUANTUM).round() * STEREO_QUANTUM;
            q.max(0.0)
        })
        .collect();
    DepthMap::new(truth.width(), truth.height(), out)
}

/// Normals of the unprojected (optionally presmoothed) depth surface from
/// central differences. Pixels missing any of their four neighbors, and
/// normals with `n_z < 0.05`, are invalid.
pub fn normals_from_depth(
    depth: &DepthMap,
    camera: &Camera,
    presmooth_radius: f64,
) -> Result<NormalMap> {
    let (w, h) = (depth.width(), depth.height());
    ensure!(
        camera.width == w && camera.height == h,
        Error::Dimensions(format!(
            "depth is {w}x{h}, camera {}x{}",
            camera.width, camera.height
        ))
    );
    let smooth = blur_depth(depth, presmooth_radius)?;
    let point = |x: usize, y: usize| smooth.get(x, y).map(|d| camera.ray(x as f64, y as f64) * d);
    let mut normals = NormalMap::from_fn(w, h, |x, y| {
        if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
            return None;
        }
        point(x, y)?;
        let tx = point(x + 1, y)? - point(x - 1, y)?;
        let ty = point(x, y - 1)? - point(x, y + 1)?;
        Some(tx.cross(&ty))
    });
    normals.restrict_facing(MIN_FACING);
    Ok(normals)
}
