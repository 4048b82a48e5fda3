//! Similarity warps and the image-to-video scale-then-crop window.
//!
//! Coordinates are `(x, y)` = (column, row). A similarity `(s, theta, cx, cy)`
//! maps an input location to the output as
//! `out - center_out = s * R(theta) * (in - center_in) + (cx, cy)`,
//! so rotation and scale pivot about the plane centers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plane::{ImagePlane, MIN_CORRELATION_SIDE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    pub s: f64,
    pub theta: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimilarityParams {
    pub const fn identity() -> Self {
        Self {
            s: 1.0,
            theta: 0.0,
            cx: 0.0,
            cy: 0.0,
        }
    }

    pub fn new(s: f64, theta: f64, cx: f64, cy: f64) -> Result<Self> {
        let p = Self { s, theta, cx, cy };
        p.validate()?;
        Ok(p)
    }

    pub const fn translation(cx: f64, cy: f64) -> Self {
        Self {
            s: 1.0,
            theta: 0.0,
            cx,
            cy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s <= 10.0) {
            return Err(Error::Parameter(format!("scale {} outside (0, 10]", self.s)));
        }
        if !(self.theta.abs() <= std::f64::consts::PI) {
            return Err(Error::Parameter(format!("rotation {} outside [-pi, pi]", self.theta)));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::Parameter("non-finite translation".into()));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    /// Translation-only (2 DOF) transform.
    pub fn is_translation(&self) -> bool {
        self.s == 1.0 && self.theta == 0.0
    }

    /// `self` applied after `first` (equal input and output dimensions).
    pub fn compose(&self, first: &SimilarityParams) -> SimilarityParams {
        let (sin, cos) = self.theta.sin_cos();
        SimilarityParams {
            s: self.s * first.s,
            theta: self.theta + first.theta,
            cx: self.s * (cos * first.cx - sin * first.cy) + self.cx,
            cy: self.s * (sin * first.cx + cos * first.cy) + self.cy,
        }
    }

    pub fn inverse(&self) -> SimilarityParams {
        let (sin, cos) = self.theta.sin_cos();
        // R(-theta) * t / s
        let rx = (cos * self.cx + sin * self.cy) / self.s;
        let ry = (-sin * self.cx + cos * self.cy) / self.s;
        SimilarityParams {
            s: 1.0 / self.s,
            theta: -self.theta,
            cx: -rx,
            cy: -ry,
        }
    }
}

/// Inclusive bounds for one search dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ShiftRange {
    /// Any displacement the correlation surface can express.
    Full,
    /// `|dx| <= max_dx` and `|dy| <= max_dy`.
    Bounded { max_dx: usize, max_dy: usize },
}

/// Search domain for scale, rotation (radians) and shift.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRanges {
    pub scale: Interval,
    pub theta: Interval,
    pub shift: ShiftRange,
}

impl SearchRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, iv) in [("scale", self.scale), ("theta", self.theta)] {
            if !(iv.lo <= iv.hi) || !iv.lo.is_finite() || !iv.hi.is_finite() {
                return Err(Error::Parameter(format!(
                    "{name} range [{}, {}] is invalid",
                    iv.lo, iv.hi
                )));
            }
        }
        if !(self.scale.lo > 0.0) {
            return Err(Error::Parameter("scale range must be positive".into()));
        }
        Ok(())
    }

    /// Image-to-video conversion search: scale in [0.3, 0.85], no rotation.
    pub fn image_to_video() -> Self {
        Self {
            scale: Interval::new(0.3, 0.85),
            theta: Interval::point(0.0),
            shift: ShiftRange::Full,
        }
    }

    /// Per-frame query registration: scale in [0.99, 1.01], rotation in
    /// [-0.15, 0.15] rad.
    pub fn query() -> Self {
        Self {
            scale: Interval::new(0.99, 1.01),
            theta: Interval::new(-0.15, 0.15),
            shift: ShiftRange::Full,
        }
    }

    pub fn allows_shift(&self, du: isize, dv: isize) -> bool {
        match self.shift {
            ShiftRange::Full => true,
            ShiftRange::Bounded { max_dx, max_dy } => {
                dv.unsigned_abs() <= max_dx && du.unsigned_abs() <= max_dy
            }
        }
    }
}

/// Map from output pixel coordinates to input coordinates:
/// `x_in = m[0] x + m[1] y + m[2]`, `y_in = m[3] x + m[4] y + m[5]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Affine {
    m: [f64; 6],
}

impl Affine {
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        (m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5])
    }

    /// `self` followed by `next` on the input side: output -> self -> next.
    pub fn then(&self, next: &Affine) -> Affine {
        let a = &self.m;
        let b = &next.m;
        Affine {
            m: [
                b[0] * a[0] + b[1] * a[3],
                b[0] * a[1] + b[1] * a[4],
                b[0] * a[2] + b[1] * a[5] + b[2],
                b[3] * a[0] + b[4] * a[3],
                b[3] * a[1] + b[4] * a[4],
                b[3] * a[2] + b[4] * a[5] + b[5],
            ],
        }
    }

    /// Inverse sampling map of a center-pivot similarity.
    pub fn similarity(p: &SimilarityParams, in_dims: (usize, usize), out_dims: (usize, usize)) -> Affine {
        let (cix, ciy) = center(in_dims);
        let (cox, coy) = center(out_dims);
        let (sin, cos) = p.theta.sin_cos();
        let k = 1.0 / p.s;
        // in = ci + R(-theta) (out - co - c) / s
        let (a, b, c, d) = (cos * k, sin * k, -sin * k, cos * k);
        let (ox, oy) = (cox + p.cx, coy + p.cy);
        Affine {
            m: [a, b, cix - a * ox - b * oy, c, d, ciy - c * ox - d * oy],
        }
    }

    /// Inverse sampling map of "scale by `s`, then crop at `(cx, cy)`".
    pub fn scale_crop(s: f64, cx: f64, cy: f64) -> Affine {
        let k = 1.0 / s;
        Affine {
            m: [k, 0.0, (cx + 0.5) * k - 0.5, 0.0, k, (cy + 0.5) * k - 0.5],
        }
    }
}

fn center((h, w): (usize, usize)) -> (f64, f64) {
    ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Border {
    /// Out-of-range samples are zero and flagged invalid.
    Zero,
    /// Out-of-range samples replicate the nearest edge.
    Clamp,
}

/// A warped plane plus a per-pixel flag telling whether the sample came from
/// inside the source.
#[derive(Clone, Debug)]
pub struct Warped {
    pub plane: ImagePlane,
    pub mask: Vec<bool>,
}

impl Warped {
    pub fn valid_fraction(&self) -> f64 {
        self.mask.iter().filter(|&&b| b).count() as f64 / self.mask.len() as f64
    }
}

const EDGE_EPS: f64 = 1e-9;

pub(crate) fn resample(img: &ImagePlane, map: &Affine, out_h: usize, out_w: usize, border: Border) -> Warped {
    let (h, w) = img.dims();
    let src = img.data();
    let (wf, hf) = ((w - 1) as f64, (h - 1) as f64);
    let mut data = Vec::with_capacity(out_h * out_w);
    let mut mask = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        for c in 0..out_w {
            let (mut x, mut y) = map.apply(c as f64, r as f64);
            let inside = x >= -EDGE_EPS && y >= -EDGE_EPS && x <= wf + EDGE_EPS && y <= hf + EDGE_EPS;
            if !inside && border == Border::Zero {
                data.push(0.0);
                mask.push(false);
                continue;
            }
            x = x.clamp(0.0, wf);
            y = y.clamp(0.0, hf);
            let x0 = x.floor();
            let y0 = y.floor();
            let fx = x - x0;
            let fy = y - y0;
            let (x0, y0) = (x0 as usize, y0 as usize);
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let v = if fx == 0.0 && fy == 0.0 {
                src[y0 * w + x0]
            } else {
                let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                top * (1.0 - fy) + bot * fy
            };
            data.push(v);
            mask.push(inside);
        }
    }
    Warped {
        plane: ImagePlane::from_raw(out_h, out_w, data),
        mask,
    }
}

fn check_out_dims(out_h: usize, out_w: usize) -> Result<()> {
    if out_h < MIN_CORRELATION_SIDE || out_w < MIN_CORRELATION_SIDE {
        return Err(Error::Dimension(format!(
            "warp output {out_h}x{out_w} below {MIN_CORRELATION_SIDE}x{MIN_CORRELATION_SIDE}"
        )));
    }
    Ok(())
}

/// Bilinear similarity warp with zero fill and a validity mask.
pub fn warp_with_mask(img: &ImagePlane, p: &SimilarityParams, out_h: usize, out_w: usize) -> Result<Warped> {
    p.validate()?;
    check_out_dims(out_h, out_w)?;
    let map = Affine::similarity(p, img.dims(), (out_h, out_w));
    Ok(resample(img, &map, out_h, out_w, Border::Zero))
}

pub fn warp(img: &ImagePlane, p: &SimilarityParams, out_h: usize, out_w: usize) -> Result<ImagePlane> {
    Ok(warp_with_mask(img, p, out_h, out_w)?.plane)
}

/// Same-size warp, the common case for video-domain registration.
pub fn warp_same(img: &ImagePlane, p: &SimilarityParams) -> Result<ImagePlane> {
    warp(img, p, img.height(), img.width())
}

/// How far a `vid_h x vid_w` window at `(cx, cy)` sticks out of a plane of
/// `dims` after scaling by `s`; zero when it fits.
pub fn window_overshoot(dims: (usize, usize), s: f64, cx: f64, cy: f64, vid_h: usize, vid_w: usize) -> f64 {
    let sw = s * dims.1 as f64;
    let sh = s * dims.0 as f64;
    [
        -cx,
        -cy,
        cx + vid_w as f64 - sw,
        cy + vid_h as f64 - sh,
    ]
    .into_iter()
    .fold(0.0_f64, |acc, v| acc.max(v))
}

/// Rescales `k` by `s` (bilinear) and crops a `vid_h x vid_w` window whose
/// upper-left corner sits at `(cx, cy)` in the rescaled plane.
pub fn image_to_video_window(
    k: &ImagePlane,
    s: f64,
    (cx, cy): (f64, f64),
    vid_h: usize,
    vid_w: usize,
) -> Result<ImagePlane> {
    if !(s > 0.0 && s <= 10.0) {
        return Err(Error::Parameter(format!("scale {s} outside (0, 10]")));
    }
    if vid_h == 0 || vid_w == 0 {
        return Err(Error::Dimension("empty video window".into()));
    }
    let overshoot = window_overshoot(k.dims(), s, cx, cy, vid_h, vid_w);
    if overshoot > 1e-6 {
        return Err(Error::Window {
            overshoot,
            context: format!(
                "{vid_h}x{vid_w} window at ({cx}, {cy}) in {}x{} plane scaled by {s}",
                k.height(),
                k.width()
            ),
        });
    }
    Ok(resample(k, &Affine::scale_crop(s, cx, cy), vid_h, vid_w, Border::Clamp).plane)
}

/// The whole plane rescaled by `s` and rotated by `theta` about the center of
/// the rescaled extent, written into the top-left of a `canvas_h x canvas_w`
/// canvas. Returns the canvas and the rescaled extent `(h, w)`; everything
/// beyond the extent is zero.
pub(crate) fn scaled_canvas(
    k: &ImagePlane,
    s: f64,
    theta: f64,
    canvas_h: usize,
    canvas_w: usize,
) -> (ImagePlane, (usize, usize)) {
    let eh = ((s * k.height() as f64).floor() as usize).min(canvas_h);
    let ew = ((s * k.width() as f64).floor() as usize).min(canvas_w);
    let mut map = Affine::scale_crop(s, 0.0, 0.0);
    if theta != 0.0 {
        let (px, py) = (s * k.width() as f64 / 2.0 - 0.5, s * k.height() as f64 / 2.0 - 0.5);
        let (sin, cos) = theta.sin_cos();
        let rot = Affine {
            m: [cos, sin, px - cos * px - sin * py, -sin, cos, py + sin * px - cos * py],
        };
        map = rot.then(&map);
    }
    let sub = resample(k, &map, eh, ew, Border::Zero).plane;
    let mut canvas = ImagePlane::zeros(canvas_h, canvas_w);
    for r in 0..eh {
        canvas.data_mut()[r * canvas_w..r * canvas_w + ew].copy_from_slice(sub.row(r));
    }
    (canvas, (eh, ew))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::cross_correlate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_plane(h: usize, w: usize, seed: u64) -> ImagePlane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImagePlane::from_fn(h, w, |_, _| StandardNormal.sample(&mut rng))
    }

    fn smooth_plane(h: usize, w: usize) -> ImagePlane {
        ImagePlane::from_fn(h, w, |r, c| {
            100.0 + 50.0 * ((r as f64) / 9.0).sin() * ((c as f64) / 11.0).cos()
        })
    }

    #[test]
    fn identity_warp_is_exact() {
        let p = random_plane(20, 30, 1);
        assert_eq!(warp_same(&p, &SimilarityParams::identity()).unwrap(), p);
    }

    #[test]
    fn horizontal_translation_moves_content_right() {
        let p = random_plane(32, 32, 2);
        let out = warp_same(&p, &SimilarityParams::translation(3.0, 0.0)).unwrap();
        assert_eq!(out[(5, 10)], p[(5, 7)]);
        assert_eq!(out[(5, 1)], 0.0);
        assert_eq!(cross_correlate(&p, &out).unwrap().peak_shift(), (0, 3));
    }

    #[test]
    fn integer_translation_matches_plane_translation() {
        let p = random_plane(16, 18, 3);
        let w = warp_same(&p, &SimilarityParams::translation(-2.0, 4.0)).unwrap();
        assert_eq!(w, p.translated(4, -2));
    }

    #[test]
    fn warp_then_inverse_recovers_smooth_plane() {
        let p = smooth_plane(64, 64);
        let params = SimilarityParams::new(1.04, 0.07, 2.5, -1.5).unwrap();
        let fwd = warp_same(&p, &params).unwrap();
        let back = warp_with_mask(&fwd, &params.inverse(), 64, 64).unwrap();
        // compare where the round trip never left the plane
        let fwd_mask = warp_with_mask(&p, &params, 64, 64).unwrap().mask;
        let fwd_mask_plane = ImagePlane::from_raw(64, 64, fwd_mask.iter().map(|&b| b as u8 as f64).collect());
        let ok = warp_with_mask(&fwd_mask_plane, &params.inverse(), 64, 64).unwrap();
        let (lo, hi) = p.min_max();
        let mut sq = 0.0;
        let mut n = 0;
        for i in 0..p.len() {
            if back.mask[i] && ok.plane.data()[i] > 0.999 {
                sq += (back.plane.data()[i] - p.data()[i]).powi(2);
                n += 1;
            }
        }
        assert!(n > 2000);
        let rms = (sq / n as f64).sqrt();
        assert!(rms < 0.01 * (hi - lo), "rms {rms}");
    }

    #[test]
    fn compose_and_inverse() {
        let a = SimilarityParams::new(1.01, 0.03, 1.0, -2.0).unwrap();
        let b = SimilarityParams::new(0.99, -0.05, -0.5, 0.25).unwrap();
        let id = a.compose(&a.inverse());
        assert!((id.s - 1.0).abs() < 1e-12 && id.theta.abs() < 1e-12);
        assert!(id.cx.abs() < 1e-12 && id.cy.abs() < 1e-12);
        // compose agrees with two successive warps on a smooth plane
        let p = smooth_plane(48, 48);
        let two = warp_same(&warp_same(&p, &a).unwrap(), &b).unwrap();
        let one = warp_with_mask(&p, &b.compose(&a), 48, 48).unwrap();
        let mut worst: f64 = 0.0;
        for r in 8..40 {
            for c in 8..40 {
                worst = worst.max((two[(r, c)] - one.plane[(r, c)]).abs());
            }
        }
        assert!(worst < 1.5, "max deviation {worst}");
    }

    #[test]
    fn params_are_validated() {
        assert!(SimilarityParams::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(SimilarityParams::new(11.0, 0.0, 0.0, 0.0).is_err());
        assert!(SimilarityParams::new(1.0, 4.0, 0.0, 0.0).is_err());
        let p = random_plane(16, 16, 4);
        assert!(warp_same(&p, &SimilarityParams { s: -1.0, ..Default::default() }).is_err());
        assert!(warp(&p, &SimilarityParams::identity(), 4, 16).is_err());
    }

    #[test]
    fn window_identity_and_exact_fit() {
        let k = random_plane(32, 40, 5);
        assert_eq!(image_to_video_window(&k, 1.0, (0.0, 0.0), 32, 40).unwrap(), k);
        let big = random_plane(256, 256, 6);
        let half = image_to_video_window(&big, 0.5, (0.0, 0.0), 128, 128).unwrap();
        // each output sample sits exactly between four input samples
        let expect = (big[(0, 0)] + big[(0, 1)] + big[(1, 0)] + big[(1, 1)]) / 4.0;
        assert!((half[(0, 0)] - expect).abs() < 1e-12);
        let expect = (big[(254, 254)] + big[(254, 255)] + big[(255, 254)] + big[(255, 255)]) / 4.0;
        assert!((half[(127, 127)] - expect).abs() < 1e-12);
    }

    #[test]
    fn window_overshoot_is_reported() {
        let k = random_plane(100, 100, 7);
        match image_to_video_window(&k, 0.5, (10.0, 0.0), 50, 45) {
            Err(Error::Window { overshoot, .. }) => assert!((overshoot - 5.0).abs() < 1e-9),
            other => panic!("expected window error, got {other:?}"),
        }
    }

    #[test]
    fn full_resolution_device_record_fits() {
        // a 1920x1080 window at s = 0.75, c = (270, 374) needs a sensor of at
        // least 2920 x 1939 once scaled back
        let (h, w) = (1940, 2920);
        let need = window_overshoot((h, w), 0.75, 270.0, 374.0, 1080, 1920);
        assert_eq!(need, 0.0);
        assert!(window_overshoot((1500, 2920), 0.75, 270.0, 374.0, 1080, 1920) > 0.0);
    }

    #[test]
    fn canvas_crop_matches_window() {
        let k = random_plane(120, 100, 8);
        let (canvas, extent) = scaled_canvas(&k, 0.6, 0.0, 80, 70);
        assert_eq!(extent, (72, 60));
        let win = image_to_video_window(&k, 0.6, (7.0, 11.0), 40, 30).unwrap();
        let crop = canvas.crop(11, 7, 40, 30).unwrap();
        let diff = win.sub(&crop).unwrap().min_max();
        assert!(diff.0.abs() < 1e-12 && diff.1.abs() < 1e-12);
        assert_eq!(canvas[(75, 65)], 0.0);
    }
}
