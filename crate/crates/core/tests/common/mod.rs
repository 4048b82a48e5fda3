#![allow(dead_code)]

use prnu_core::fingerprint::{estimate_prnu_from_images, Fingerprint};
use prnu_core::geometry::SimilarityParams;
use prnu_core::imaging::{FrameSet, ResidualConfig};
use prnu_core::synthcam::{
    generate_camera, make_scene, render_image, render_video, MotionModel, SceneKind, StabilizationTrace,
    SyntheticCamera,
};
use prnu_core::ImagePlane;

pub const SENSOR: (usize, usize) = (256, 256);
pub const VIDEO: (usize, usize) = (96, 96);

pub fn conversion(s: f64, cx: f64, cy: f64) -> SimilarityParams {
    SimilarityParams::new(s, 0.0, cx, cy).unwrap()
}

pub fn camera(seed: u64, conv: SimilarityParams) -> SyntheticCamera {
    generate_camera(seed, SENSOR, VIDEO, conv, 0.02).unwrap()
}

pub fn default_camera(seed: u64) -> SyntheticCamera {
    camera(seed, conversion(0.6, 28.0, 30.0))
}

pub fn trace(params: Vec<SimilarityParams>, model: MotionModel) -> StabilizationTrace {
    let first_frame_identity = params.first().is_some_and(|p| p.is_identity());
    StabilizationTrace {
        params,
        model,
        first_frame_identity,
    }
}

/// Gradient-scene video through `trace`; frame 1 kept.
pub fn video(cam: &SyntheticCamera, trace: &StabilizationTrace, noise: f64, seed: u64) -> FrameSet {
    let scenes: Vec<ImagePlane> = (0..trace.len())
        .map(|i| make_scene(&SceneKind::Gradient, cam.sensor_dims, seed * 1000 + i as u64))
        .collect();
    render_video(cam, &scenes, trace, noise, false, seed).unwrap()
}

/// Image-domain fingerprint from `n` flat shots at noise 2.
pub fn image_fingerprint(cam: &SyntheticCamera, n: usize, seed: u64) -> Fingerprint {
    let flat = ImagePlane::filled(cam.sensor_dims.0, cam.sensor_dims.1, 128.0);
    let shots = (0..n)
        .map(|i| render_image(cam, &flat, 2.0, seed * 1000 + i as u64).unwrap())
        .collect();
    let set = FrameSet::from_sequence(shots, "flats").unwrap();
    estimate_prnu_from_images(&set, &ResidualConfig::default()).unwrap()
}
