//! Synthetic camera with a known multiplicative PRNU, plus a simulated
//! stabilizer, for ground-truth checks of every estimator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{image_to_video_window, resample, window_overshoot, Affine, Border, SimilarityParams};
use crate::imaging::{gaussian_smooth, FrameSet};
use crate::plane::ImagePlane;
use crate::registration::frame_seed;

const MIN_SYNTH_SIDE: usize = 32;
const COMPRESSION_BLUR_SIGMA: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCamera {
    pub k_true_image: ImagePlane,
    pub sensor_dims: (usize, usize),
    /// True image-to-video conversion (`theta` is always 0).
    pub conversion: SimilarityParams,
    pub video_dims: (usize, usize),
    pub seed: u64,
}

impl SyntheticCamera {
    /// The PRNU as it appears in an unstabilized video frame.
    pub fn k_true_video(&self) -> ImagePlane {
        let c = &self.conversion;
        image_to_video_window(&self.k_true_image, c.s, (c.cx, c.cy), self.video_dims.0, self.video_dims.1)
            .expect("window validated at construction")
    }
}

pub fn generate_camera(
    seed: u64,
    sensor_dims: (usize, usize),
    video_dims: (usize, usize),
    conversion: SimilarityParams,
    sigma_k: f64,
) -> Result<SyntheticCamera> {
    let (sh, sw) = sensor_dims;
    let (vh, vw) = video_dims;
    if sh.min(sw).min(vh).min(vw) < MIN_SYNTH_SIDE {
        return Err(Error::Dimension(format!(
            "synthetic sensor {sh}x{sw} / video {vh}x{vw} below {MIN_SYNTH_SIDE}"
        )));
    }
    if !(sigma_k > 0.0 && sigma_k <= 0.1) {
        return Err(Error::Parameter(format!("sigma_k {sigma_k} outside (0, 0.1]")));
    }
    conversion.validate()?;
    if conversion.theta != 0.0 {
        return Err(Error::Parameter("image-to-video conversion must have theta = 0".into()));
    }
    let overshoot = window_overshoot(sensor_dims, conversion.s, conversion.cx, conversion.cy, vh, vw);
    if overshoot > 1e-6 {
        return Err(Error::Window {
            overshoot,
            context: format!(
                "{vh}x{vw} video window at ({}, {}) on {sh}x{sw} sensor scaled by {}",
                conversion.cx, conversion.cy, conversion.s
            ),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = ImagePlane::from_fn(sh, sw, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma_k * z
    });
    let m = k.mean();
    Ok(SyntheticCamera {
        k_true_image: k.map(|v| v - m),
        sensor_dims,
        conversion,
        video_dims,
        seed,
    })
}

/// `scene * (1 + K) + noise`, clipped to `[0, 255]`.
pub fn render_image(cam: &SyntheticCamera, scene: &ImagePlane, noise_sigma: f64, seed: u64) -> Result<ImagePlane> {
    scene.same_dims(&cam.k_true_image)?;
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Parameter(format!("noise sigma {noise_sigma} must be >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = scene.mul(&cam.k_true_image.map(|k| 1.0 + k))?;
    if noise_sigma > 0.0 {
        for v in out.data_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += noise_sigma * z;
        }
    }
    Ok(out.map(|v| v.clamp(0.0, 255.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionModel {
    Dof2,
    Dof4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Jitter {
    pub shift_sigma: f64,
    pub theta_sigma: f64,
    pub scale_sigma: f64,
    /// Fraction of frames (beyond the first) forced to pure translations.
    pub translation_only_fraction: f64,
    pub round_shifts: bool,
}

impl Default for Jitter {
    fn default() -> Self {
        Self {
            shift_sigma: 0.0,
            theta_sigma: 0.0,
            scale_sigma: 0.0,
            translation_only_fraction: 0.0,
            round_shifts: false,
        }
    }
}

/// Per-frame video-domain warps, entry `i` belonging to frame index `i + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizationTrace {
    pub params: Vec<SimilarityParams>,
    pub model: MotionModel,
    pub first_frame_identity: bool,
}

impl StabilizationTrace {
    pub fn identity(n: usize, model: MotionModel) -> Self {
        Self {
            params: vec![SimilarityParams::identity(); n],
            model,
            first_frame_identity: true,
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.params).expect("params serialize")
    }

    pub fn params_from_json(text: &str) -> Result<Vec<SimilarityParams>> {
        serde_json::from_str(text).map_err(|e| Error::Input(format!("bad trace JSON: {e}")))
    }
}

fn clipped(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let v = Normal::new(0.0, sigma).expect("sigma checked").sample(rng);
    v.clamp(-3.0 * sigma, 3.0 * sigma)
}

pub fn sample_trace(
    seed: u64,
    n_frames: usize,
    model: MotionModel,
    jitter: &Jitter,
    first_frame_identity: bool,
) -> Result<StabilizationTrace> {
    let sigmas = [jitter.shift_sigma, jitter.theta_sigma, jitter.scale_sigma];
    if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(Error::Parameter("jitter sigmas must be finite and >= 0".into()));
    }
    if !(0.0..=1.0).contains(&jitter.translation_only_fraction) {
        return Err(Error::Parameter("translation-only fraction outside [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = (0..n_frames)
        .map(|i| {
            let mut cx = clipped(&mut rng, jitter.shift_sigma);
            let mut cy = clipped(&mut rng, jitter.shift_sigma);
            let mut theta = clipped(&mut rng, jitter.theta_sigma);
            let mut ds = clipped(&mut rng, jitter.scale_sigma);
            let translation_only = rng.random::<f64>() < jitter.translation_only_fraction;
            if model == MotionModel::Dof2 || translation_only {
                theta = 0.0;
                ds = 0.0;
            }
            if jitter.round_shifts {
                cx = cx.round();
                cy = cy.round();
            }
            if i == 0 && first_frame_identity {
                cx = 0.0;
                cy = 0.0;
                theta = 0.0;
                ds = 0.0;
            }
            // avoid negative zero in serialized traces
            SimilarityParams {
                s: 1.0 + ds,
                theta: theta + 0.0,
                cx: cx + 0.0,
                cy: cy + 0.0,
            }
        })
        .collect();
    Ok(StabilizationTrace {
        params,
        model,
        first_frame_identity,
    })
}

/// Renders each scene through the sensor, converts the readout to video
/// resolution and applies the frame's stabilization warp in the video domain.
pub fn render_video(
    cam: &SyntheticCamera,
    scenes: &[ImagePlane],
    trace: &StabilizationTrace,
    noise_sigma: f64,
    smoothing: bool,
    seed: u64,
) -> Result<FrameSet> {
    if scenes.len() != trace.len() {
        return Err(Error::Input(format!(
            "{} scenes for a trace of {} frames",
            scenes.len(),
            trace.len()
        )));
    }
    if scenes.is_empty() {
        return Err(Error::Input("no scenes to render".into()));
    }
    let (vh, vw) = cam.video_dims;
    let (sh, sw) = cam.sensor_dims;
    let conv = &cam.conversion;
    let to_sensor = Affine::scale_crop(conv.s, conv.cx, conv.cy);
    let mut maps = Vec::with_capacity(trace.len());
    for (i, p) in trace.params.iter().enumerate() {
        p.validate()?;
        let map = Affine::similarity(p, (vh, vw), (vh, vw)).then(&to_sensor);
        for (x, y) in [(0.0, 0.0), ((vw - 1) as f64, 0.0), (0.0, (vh - 1) as f64), ((vw - 1) as f64, (vh - 1) as f64)] {
            let (sx, sy) = map.apply(x, y);
            let over = (-sx).max(-sy).max(sx - (sw - 1) as f64).max(sy - (sh - 1) as f64);
            if over > 1e-6 {
                return Err(Error::Window {
                    overshoot: over,
                    context: format!("frame {} leaves the sensor", i + 1),
                });
            }
        }
        maps.push(map);
    }
    let frames = scenes
        .par_iter()
        .zip(maps.par_iter())
        .enumerate()
        .map(|(i, (scene, map))| {
            let readout = render_image(cam, scene, noise_sigma, frame_seed(seed, i + 1))?;
            let frame = resample(&readout, map, vh, vw, Border::Clamp).plane;
            Ok(if smoothing {
                gaussian_smooth(&frame, COMPRESSION_BLUR_SIGMA)
            } else {
                frame
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSet::from_sequence(frames, format!("synthcam-{}", cam.seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SceneKind {
    Flat { level: f64 },
    /// Random low-frequency ramp.
    Gradient,
    /// Smoothed value noise; `cell` is the lattice spacing in pixels.
    Textured { cell: usize, contrast: f64 },
}

pub fn make_scene(kind: &SceneKind, (h, w): (usize, usize), seed: u64) -> ImagePlane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match *kind {
        SceneKind::Flat { level } => ImagePlane::filled(h, w, level.clamp(0.0, 255.0)),
        SceneKind::Gradient => {
            let base = rng.random_range(90.0..170.0);
            let gy = rng.random_range(-40.0..40.0);
            let gx = rng.random_range(-40.0..40.0);
            ImagePlane::from_fn(h, w, |r, c| {
                base + gy * (r as f64 / h as f64 - 0.5) + gx * (c as f64 / w as f64 - 0.5)
            })
        }
        SceneKind::Textured { cell, contrast } => {
            let cell = cell.max(1);
            let gh = h / cell + 2;
            let gw = w / cell + 2;
            let lattice: Vec<f64> = (0..gh * gw).map(|_| rng.random::<f64>() - 0.5).collect();
            let raw = ImagePlane::from_fn(h, w, |r, c| {
                let y = r as f64 / cell as f64;
                let x = c as f64 / cell as f64;
                let (y0, x0) = (y.floor() as usize, x.floor() as usize);
                let (fy, fx) = (y - y0 as f64, x - x0 as f64);
                let at = |yy: usize, xx: usize| lattice[yy * gw + xx];
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
                let bot = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
                top * (1.0 - fy) + bot * fy
            });
            gaussian_smooth(&raw, 1.0).map(|v| (128.0 + 2.0 * contrast * v).clamp(0.0, 255.0))
        }
    }
}

/// Everything needed to fabricate one camera's data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub sensor_dims: (usize, usize),
    pub video_dims: (usize, usize),
    pub conversion: SimilarityParams,
    pub sigma_k: f64,
    /// Flat-field still images for the image-domain fingerprint.
    pub images: usize,
    pub image_level: f64,
    pub image_noise_sigma: f64,
    pub videos: usize,
    pub frames_per_video: usize,
    pub scene: SceneKind,
    pub noise_sigma: f64,
    pub smoothing: bool,
    pub model: MotionModel,
    pub jitter: Jitter,
    pub first_frame_identity: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sensor_dims: (256, 256),
            video_dims: (96, 96),
            conversion: SimilarityParams {
                s: 0.6,
                theta: 0.0,
                cx: 28.0,
                cy: 30.0,
            },
            sigma_k: 0.02,
            images: 30,
            image_level: 128.0,
            image_noise_sigma: 2.0,
            videos: 1,
            frames_per_video: 20,
            scene: SceneKind::Gradient,
            noise_sigma: 2.0,
            smoothing: false,
            model: MotionModel::Dof4,
            jitter: Jitter {
                shift_sigma: 2.0,
                theta_sigma: 0.03,
                scale_sigma: 0.003,
                translation_only_fraction: 0.0,
                round_shifts: false,
            },
            first_frame_identity: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticVideo {
    pub frames: FrameSet,
    pub trace: StabilizationTrace,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub camera: SyntheticCamera,
    pub images: Option<FrameSet>,
    pub videos: Vec<SyntheticVideo>,
}

/// Sub-seeds for the independent random streams of a scenario.
fn sub_seed(seed: u64, stream: u64, item: usize) -> u64 {
    frame_seed(frame_seed(seed, stream as usize), item)
}

pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    let camera = generate_camera(cfg.seed, cfg.sensor_dims, cfg.video_dims, cfg.conversion, cfg.sigma_k)?;
    let images = if cfg.images > 0 {
        let flat = ImagePlane::filled(cfg.sensor_dims.0, cfg.sensor_dims.1, cfg.image_level);
        let frames = (0..cfg.images)
            .into_par_iter()
            .map(|i| render_image(&camera, &flat, cfg.image_noise_sigma, sub_seed(cfg.seed, 1, i)))
            .collect::<Result<Vec<_>>>()?;
        Some(FrameSet::from_sequence(frames, format!("synthcam-{}-images", cfg.seed))?)
    } else {
        None
    };
    let videos = (0..cfg.videos)
        .map(|v| {
            let trace = sample_trace(
                sub_seed(cfg.seed, 2, v),
                cfg.frames_per_video,
                cfg.model,
                &cfg.jitter,
                cfg.first_frame_identity,
            )?;
            let scenes: Vec<ImagePlane> = (0..cfg.frames_per_video)
                .map(|f| make_scene(&cfg.scene, cfg.sensor_dims, sub_seed(cfg.seed, 3 + v as u64, f)))
                .collect();
            let frames = render_video(&camera, &scenes, &trace, cfg.noise_sigma, cfg.smoothing, sub_seed(cfg.seed, 4, v))?
                .with_source_id(format!("synthcam-{}-video-{v}", cfg.seed));
            Ok(SyntheticVideo { frames, trace })
        })
        .collect::<Result<_>>()?;
    Ok(Scenario { camera, images, videos })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::ncc;

    fn cam(seed: u64) -> SyntheticCamera {
        generate_camera(seed, (96, 96), (48, 64), SimilarityParams::new(0.75, 0.0, 5.0, 7.0).unwrap(), 0.02).unwrap()
    }

    #[test]
    fn camera_is_deterministic_and_zero_mean() {
        let a = cam(3);
        assert_eq!(a, cam(3));
        assert!(a.k_true_image.mean().abs() < 1e-3);
        let big = generate_camera(1, (256, 256), (64, 64), SimilarityParams::identity(), 0.02).unwrap();
        assert!((big.k_true_image.std() - 0.02).abs() < 0.001);
    }

    #[test]
    fn distinct_seeds_are_independent() {
        let a = cam(1);
        let b = cam(2);
        assert!(ncc(&a.k_true_image, &b.k_true_image).unwrap().abs() < 0.05);
    }

    #[test]
    fn camera_validation() {
        let conv = SimilarityParams::new(0.75, 0.0, 40.0, 7.0).unwrap();
        assert!(matches!(
            generate_camera(1, (96, 96), (48, 64), conv, 0.02),
            Err(Error::Window { .. })
        ));
        assert!(generate_camera(1, (16, 96), (16, 16), SimilarityParams::identity(), 0.02).is_err());
        assert!(generate_camera(1, (96, 96), (48, 64), SimilarityParams::identity(), 0.2).is_err());
        assert!(generate_camera(1, (96, 96), (48, 64), SimilarityParams::identity(), 0.0).is_err());
    }

    #[test]
    fn render_without_prnu_or_noise_is_the_scene() {
        let mut c = cam(1);
        c.k_true_image = ImagePlane::zeros(96, 96);
        let scene = make_scene(&SceneKind::Gradient, (96, 96), 4);
        assert_eq!(render_image(&c, &scene, 0.0, 0).unwrap(), scene);
    }

    #[test]
    fn flat_render_is_stamped_by_prnu() {
        let c = cam(1);
        let out = render_image(&c, &ImagePlane::filled(96, 96, 128.0), 0.0, 0).unwrap();
        let expect = c.k_true_image.map(|k| 128.0 * (1.0 + k));
        assert_eq!(out, expect);
        // invisible stamp: a few gray levels on average, Gaussian tails aside
        let dev = out.map(|v| v - 128.0);
        assert!(dev.rms() < 6.0);
        let within = dev.data().iter().filter(|d| d.abs() < 6.0).count();
        assert!(within as f64 > 0.95 * dev.len() as f64);
    }

    #[test]
    fn renders_stay_in_range() {
        let c = cam(1);
        let scene = ImagePlane::from_fn(96, 96, |r, _| if r < 48 { 0.0 } else { 255.0 });
        let out = render_image(&c, &scene, 10.0, 5).unwrap();
        let (lo, hi) = out.min_max();
        assert!(lo >= 0.0 && hi <= 255.0);
    }

    #[test]
    fn zero_jitter_gives_identity_trace() {
        let t = sample_trace(1, 12, MotionModel::Dof4, &Jitter::default(), true).unwrap();
        assert!(t.params.iter().all(|p| p.is_identity()));
    }

    #[test]
    fn trace_respects_clip_and_model() {
        let j = Jitter {
            shift_sigma: 3.0,
            theta_sigma: 0.03,
            scale_sigma: 0.01,
            ..Jitter::default()
        };
        let t = sample_trace(9, 100, MotionModel::Dof4, &j, true).unwrap();
        assert!(t.params[0].is_identity());
        assert!(t.params.iter().all(|p| p.cx.abs() <= 9.0 && p.cy.abs() <= 9.0));
        assert!(t.params.iter().all(|p| p.theta.abs() <= 0.09));
        let t2 = sample_trace(9, 100, MotionModel::Dof2, &j, true).unwrap();
        assert!(t2.params.iter().all(|p| p.is_translation()));
    }

    #[test]
    fn translation_only_fraction_is_honored() {
        let j = Jitter {
            shift_sigma: 2.0,
            theta_sigma: 0.03,
            scale_sigma: 0.005,
            translation_only_fraction: 0.5,
            round_shifts: false,
        };
        let t = sample_trace(2, 200, MotionModel::Dof4, &j, true).unwrap();
        let n = t.params.iter().filter(|p| p.is_translation()).count();
        assert!((70..=130).contains(&n), "{n}");
    }

    #[test]
    fn trace_json_round_trip() {
        let j = Jitter {
            shift_sigma: 2.0,
            theta_sigma: 0.02,
            ..Jitter::default()
        };
        let t = sample_trace(4, 6, MotionModel::Dof4, &j, true).unwrap();
        assert_eq!(StabilizationTrace::params_from_json(&t.to_json()).unwrap(), t.params);
    }

    #[test]
    fn identity_video_carries_the_converted_prnu() {
        let c = cam(5);
        let scenes = vec![ImagePlane::filled(96, 96, 128.0); 2];
        let v = render_video(&c, &scenes, &StabilizationTrace::identity(2, MotionModel::Dof2), 0.0, false, 1).unwrap();
        let expect = c.k_true_video().map(|k| 128.0 * (1.0 + k));
        for f in v.frames() {
            let d = f.sub(&expect).unwrap().min_max();
            assert!(d.0.abs() < 1e-9 && d.1.abs() < 1e-9);
        }
        assert_eq!(v.indices(), &[1, 2]);
    }

    #[test]
    fn integer_trace_shift_moves_frame_content() {
        let c = cam(5);
        let scenes = vec![ImagePlane::filled(96, 96, 128.0); 2];
        let mut t = StabilizationTrace::identity(2, MotionModel::Dof2);
        t.params[1] = SimilarityParams::translation(3.0, -2.0);
        let v = render_video(&c, &scenes, &t, 0.0, false, 1).unwrap();
        let f1 = v.get(1).unwrap();
        let f2 = v.get(2).unwrap();
        assert!((f2[(10, 13)] - f1[(12, 10)]).abs() < 1e-9);
    }

    #[test]
    fn leaving_the_sensor_names_the_frame() {
        let c = cam(5);
        let scenes = vec![ImagePlane::filled(96, 96, 128.0); 3];
        let mut t = StabilizationTrace::identity(3, MotionModel::Dof2);
        t.params[2] = SimilarityParams::translation(30.0, 0.0);
        match render_video(&c, &scenes, &t, 0.0, false, 1) {
            Err(Error::Window { context, .. }) => assert!(context.contains("frame 3")),
            other => panic!("expected window error, got {other:?}"),
        }
    }

    #[test]
    fn rendering_is_seed_deterministic() {
        let c = cam(5);
        let scenes: Vec<_> = (0..3).map(|i| make_scene(&SceneKind::Textured { cell: 8, contrast: 60.0 }, (96, 96), i)).collect();
        let t = StabilizationTrace::identity(3, MotionModel::Dof2);
        let a = render_video(&c, &scenes, &t, 2.0, true, 11).unwrap();
        let b = render_video(&c, &scenes, &t, 2.0, true, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn residual_sees_prnu() {
        let c = generate_camera(8, (128, 128), (64, 64), SimilarityParams::identity(), 0.02).unwrap();
        let scene = make_scene(&SceneKind::Gradient, (128, 128), 1);
        let img = render_image(&c, &scene, 2.0, 3).unwrap();
        let w = crate::imaging::extract_residual(&img);
        let target = c.k_true_image.mul(&img).unwrap();
        assert!(ncc(&w, &target).unwrap() > 0.05);
    }
}
