//! Fixtures shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use darkflash::augment::well_lit;
use darkflash::brdf::RenderOptions;
use darkflash::imaging::{
    Camera, DepthMap, ImageGrid, Label, NormalMap, PointLight, SegmentationMap,
};
use darkflash::solver::{DataBundle, GeometrySource, LightSource, Observation, SceneEstimate};
use darkflash::synth::{
    default_rig, make_bumpfield_scene, make_sphere_scene, BumpField, Capture, MaterialBand,
    StereoParams,
};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SIZE: usize = 128;

pub fn camera(size: usize) -> Camera {
    Camera::centered(size, size, 3.2 * size as f64).unwrap()
}

pub fn diffuse_bands() -> Vec<MaterialBand> {
    vec![
        MaterialBand::new([0.6, 0.45, 0.35, 0.7], 0.0),
        MaterialBand::new([0.3, 0.5, 0.6, 0.5], 0.0),
        MaterialBand::new([0.55, 0.3, 0.25, 0.65], 0.0),
    ]
}

/// Diffuse sphere seen at 128x128 with default stereo degradation.
pub fn sphere_capture(size: usize) -> Capture {
    let cam = camera(size);
    let scene = make_sphere_scene(&cam, 0.15, [0.0, 0.0, -1.25], &diffuse_bands()).unwrap();
    Capture::new(
        scene,
        default_rig(),
        RenderOptions::default(),
        &StereoParams::default(),
        7,
    )
    .unwrap()
}

/// Left half (head) shiny with `rho = 0.1`, right half (body, clothing)
/// diffuse. Bumps of 2 mm at 8 px wavelength.
pub fn bump_capture(size: usize, smoothing_radius: f64) -> Capture {
    let cam = camera(size);
    let field = BumpField::new(1.1, 0.002, 8.0, 11).unwrap();
    let bands = vec![
        MaterialBand::new([0.6, 0.45, 0.35, 0.7], 0.1),
        MaterialBand::new([0.3, 0.5, 0.6, 0.5], 0.0),
    ];
    let scene = make_bumpfield_scene(&cam, &field, &bands).unwrap();
    let stereo = StereoParams {
        smoothing_radius,
        ..StereoParams::default()
    };
    Capture::new(scene, default_rig(), RenderOptions::default(), &stereo, 7).unwrap()
}

/// The nine-OLAT bundle on stereo geometry, restricted to pixels where the
/// truth is defined, with the well-lit average as initialization image.
pub fn stereo_bundle(cap: &Capture) -> DataBundle {
    let wl = well_lit(&cap.visible_images()).unwrap();
    let mut b = DataBundle::from_capture(cap, &wl.image, GeometrySource::Stereo).unwrap();
    b.restrict_mask(&cap.scene.valid_mask()).unwrap();
    b
}

/// Noise-free bundle on true geometry whose stereo normals are the true ones,
/// so the ground truth is a global minimizer.
pub fn oracle_bundle(cap: &Capture) -> DataBundle {
    let s = &cap.scene;
    let observations = cap
        .olats
        .iter()
        .map(|o| Observation::single(o.role.name(), &o.image, o.light, o.shadow.clone()).unwrap())
        .collect();
    let wl = well_lit(&cap.visible_images()).unwrap();
    let init = darkflash::solver::init_image(&wl.image, &cap.flash().image).unwrap();
    DataBundle::new(
        s.camera,
        s.depth.clone(),
        s.normals.clone(),
        s.segmentation.clone(),
        observations,
        &init,
        cap.options,
    )
    .unwrap()
}

/// Small random scene for gradient checks: depths near 1 m, facing normals,
/// mixed clothing labels, two or three observations (one with two lights)
/// and random partial shadowing.
pub struct RandomConfig {
    pub bundle: DataBundle,
    pub estimate: SceneEstimate,
}

pub fn random_facing(rng: &mut ChaCha8Rng, min_z: f64) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(min_z..1.0),
        );
        if v.norm() > 0.2 {
            let n = v.normalize();
            if n.z >= min_z {
                return n;
            }
        }
    }
}

pub fn random_light(rng: &mut ChaCha8Rng) -> PointLight {
    PointLight::new(
        [
            rng.random_range(-0.8..0.8),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.2..0.1),
        ],
        [
            rng.random_range(0.5..2.0),
            rng.random_range(0.5..2.0),
            rng.random_range(0.5..2.0),
            rng.random_range(0.0..2.0),
        ],
    )
    .unwrap()
}

pub fn random_config(seed: u64, size: usize) -> RandomConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = Camera::centered(size, size, 2.0 * size as f64).unwrap();
    let depth = DepthMap::from_fn(size, size, |_, _| rng.random_range(0.9..1.1));
    let stereo = NormalMap::from_fn(size, size, |_, _| Some(random_facing(&mut rng, 0.3)));
    let labels = [Label::Head, Label::Body, Label::UpperArm, Label::Background];
    let seg =
        SegmentationMap::from_fn(size, size, |_, _| labels[rng.random_range(0..labels.len())]);
    let n_obs = rng.random_range(2..=3);
    let mut observations = Vec::new();
    for j in 0..n_obs {
        let n_lights = if j == 0 { 2 } else { 1 };
        let sources = (0..n_lights)
            .map(|_| LightSource {
                light: random_light(&mut rng),
                shadow: ImageGrid::from_fn(size, size, 1, |_, _, _| {
                    if rng.random_bool(0.85) {
                        1.0
                    } else {
                        0.0
                    }
                }),
            })
            .collect();
        let image = ImageGrid::from_fn(size, size, 4, |_, _, _| rng.random_range(0.0..1.5));
        observations.push(Observation::new(format!("obs{j}"), &image, sources).unwrap());
    }
    let init = ImageGrid::from_fn(size, size, 3, |_, _, _| rng.random_range(0.0..1.0));
    let bundle = DataBundle::new(
        cam,
        depth,
        stereo,
        seg,
        observations,
        &init,
        RenderOptions::default(),
    )
    .unwrap();
    let estimate = SceneEstimate::new(
        NormalMap::from_fn(size, size, |_, _| Some(random_facing(&mut rng, 0.3))),
        ImageGrid::from_fn(size, size, 4, |_, _, _| rng.random_range(0.05..1.0)),
        ImageGrid::from_fn(size, size, 1, |_, _, _| rng.random_range(-4.0f32..-0.5)),
    )
    .unwrap();
    RandomConfig { bundle, estimate }
}

/// Relative error with an absolute floor for tiny derivatives.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Brute-force occlusion test. Samples the clipped segment from each surface
/// point toward the light, then finds the enclosing depth cell by testing
/// every column interval and every row interval of the grid (cells form a
/// tensor grid, so this visits every cell's membership test).
pub fn shadow_oracle(depth: &DepthMap, cam: &Camera, light: &PointLight, bias: f64) -> Vec<f32> {
    let (w, h) = (depth.width(), depth.height());
    let d = |x: usize, y: usize| depth.values()[y * w + x];
    let valid: Vec<f64> = depth
        .values()
        .iter()
        .copied()
        .filter(|&v| v > 0.0)
        .collect();
    let Some(near) = valid.iter().copied().reduce(f64::min) else {
        return vec![0.0; w * h];
    };
    let project = |p: [f64; 3]| -> Option<(f64, f64)> {
        let z = -p[2];
        (z > 0.0).then(|| (cam.cx + cam.fx * p[0] / z, cam.cy - cam.fy * p[1] / z))
    };
    let interval = |t: f64, n: usize| -> Option<usize> {
        (0..n - 1)
            .find(|&c| (c as f64 <= t && t < (c + 1) as f64) || (c == n - 2 && t == (n - 1) as f64))
    };
    let q = light.position;
    let mut out = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let dp = d(x, y);
            if dp <= 0.0 {
                continue;
            }
            let p = [
                (x as f64 - cam.cx) / cam.fx * dp,
                -(y as f64 - cam.cy) / cam.fy * dp,
                -dp,
            ];
            let dl = -q[2];
            let t_max = if dl < near {
                ((dp - near) / (dp - dl)).clamp(0.0, 1.0)
            } else {
                1.0
            };
            let at = |t: f64| {
                [
                    p[0] + (q[0] - p[0]) * t,
                    p[1] + (q[1] - p[1]) * t,
                    p[2] + (q[2] - p[2]) * t,
                ]
            };
            let mut blocked = false;
            if t_max > 0.0 {
                if let (Some(a), Some(b)) = (project(p), project(at(t_max))) {
                    let n = ((2.0 * (a.0 - b.0).hypot(a.1 - b.1)).ceil() as usize).max(1);
                    for k in 1..=n {
                        let s = at(t_max * k as f64 / n as f64);
                        let Some((u, v)) = project(s) else { continue };
                        let (Some(cx), Some(cy)) = (interval(u, w), interval(v, h)) else {
                            continue;
                        };
                        let c = [d(cx, cy), d(cx + 1, cy), d(cx, cy + 1), d(cx + 1, cy + 1)];
                        if c.iter().any(|&v| v <= 0.0) {
                            continue;
                        }
                        let (fx, fy) = (u - cx as f64, v - cy as f64);
                        let top = c[0] + (c[1] - c[0]) * fx;
                        let bottom = c[2] + (c[3] - c[2]) * fx;
                        if -s[2] > top + (bottom - top) * fy + bias {
                            blocked = true;
                            break;
                        }
                    }
                }
            }
            out[y * w + x] = if blocked { 0.0 } else { 1.0 };
        }
    }
    out
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

/// Straight-line evaluation of the reflectance model: diffuse plus a
/// normalized Blinn-Phong lobe around `h`, times the clamped cosine.
pub fn reference_shade(
    n: &Vector3<f64>,
    l: &Vector3<f64>,
    v: &Vector3<f64>,
    albedo: &[f64; 4],
    rho: f64,
    exponent: f64,
    light: &[f64; 4],
    paper_literal: bool,
) -> [f64; 4] {
    let cos = n.dot(l);
    if cos <= 0.0 {
        return [0.0; 4];
    }
    let h = if paper_literal {
        (n + l).normalize()
    } else {
        (l + v).normalize()
    };
    let ndh = n.dot(&h).max(0.0);
    let lobe = rho * (exponent + 2.0) / (2.0 * std::f64::consts::PI) * ndh.powf(exponent);
    std::array::from_fn(|c| (albedo[c] + lobe) * cos * light[c])
}

pub fn interior_mask(w: usize, h: usize, margin: usize) -> Vec<bool> {
    (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            x >= margin && y >= margin && x + margin < w && y + margin < h
        })
        .collect()
}
