//! PCE-driven similarity registration: a swarm searches scale and rotation,
//! the correlation peak supplies the translation.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::correlation::{pce_from_surface, pce_within, Correlator, PceReport, Spectrum};
use crate::error::{Error, Result};
use crate::fft2::Fft2;
use crate::geometry::{scaled_canvas, warp_same, Interval, SearchRanges, ShiftRange, SimilarityParams};
use crate::optimizer::{maximize, SwarmConfig};
use crate::plane::ImagePlane;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    pub params: SimilarityParams,
    pub report: PceReport,
    pub evaluations: usize,
}

/// Derives an independent, order-free seed for one frame.
pub fn frame_seed(base: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn bounds(ranges: &SearchRanges) -> [Interval; 2] {
    [ranges.scale, ranges.theta]
}

const NEUTRAL: [f64; 2] = [1.0, 0.0];

/// Smallest `2^a 3^b 5^c` not below `n`.
fn fft_friendly(n: usize) -> usize {
    (n.max(1)..)
        .find(|&m| {
            let mut m = m;
            for p in [2, 3, 5] {
                while m % p == 0 {
                    m /= p;
                }
            }
            m == 1
        })
        .expect("smooth numbers are unbounded")
}

fn surface_pce(corr: &Correlator, a: &Spectrum, b: &ImagePlane, ranges: &SearchRanges) -> Result<PceReport> {
    let sb = corr.spectrum(b)?;
    let surface = corr.surface(a, &sb)?;
    match ranges.shift {
        ShiftRange::Full => pce_from_surface(&surface),
        ShiftRange::Bounded { max_dx, max_dy } => pce_within(&surface, max_dy, max_dx),
    }
}

/// Warps `moving` (and the intensity frame it came from, if any) onto the
/// fixed plane: maximizes `PCE(T(moving), T(frame) * fixed)`.
///
/// The returned translation registers the moving plane, i.e.
/// `warp(moving, params)` lines up with `fixed`.
pub fn register_onto(
    fixed: &ImagePlane,
    moving: &ImagePlane,
    moving_frame: Option<&ImagePlane>,
    ranges: &SearchRanges,
    cfg: &SwarmConfig,
) -> Result<Registration> {
    ranges.validate()?;
    fixed.same_dims(moving)?;
    if let Some(f) = moving_frame {
        f.same_dims(moving)?;
    }
    let corr = Correlator::for_plane(fixed);
    let evaluate = |s: f64, theta: f64| -> Result<PceReport> {
        let p = SimilarityParams {
            s,
            theta,
            cx: 0.0,
            cy: 0.0,
        };
        let a = warp_same(moving, &p)?;
        let b = match moving_frame {
            Some(f) => warp_same(f, &p)?.mul(fixed)?,
            None => fixed.clone(),
        };
        let sa = corr.spectrum(&a)?;
        surface_pce(&corr, &sa, &b, ranges)
    };
    let objective = |x: &[f64]| evaluate(x[0], x[1]).map(|r| r.pce).unwrap_or(0.0);
    let opt = maximize(objective, &bounds(ranges), Some(&NEUTRAL), cfg)?;
    let (s, theta) = (opt.best_point[0], opt.best_point[1]);
    let report = evaluate(s, theta)?;
    // b is displaced by p relative to a, so shifting a by p aligns it
    let (du, dv) = report.peak_shift;
    Ok(Registration {
        params: SimilarityParams {
            s,
            theta,
            cx: dv as f64,
            cy: du as f64,
        },
        report,
        evaluations: opt.evaluations,
    })
}

/// Warps a same-size fingerprint toward a frame: maximizes
/// `PCE(W, I * T(K))`. The translation is the one that, applied to `K`,
/// reproduces the frame's alignment.
pub fn register_fingerprint_same_size(
    k: &ImagePlane,
    frame: &ImagePlane,
    residual: &ImagePlane,
    ranges: &SearchRanges,
    cfg: &SwarmConfig,
) -> Result<Registration> {
    ranges.validate()?;
    k.same_dims(frame)?;
    frame.same_dims(residual)?;
    let corr = Correlator::for_plane(frame);
    let sw = corr.spectrum(residual)?;
    let evaluate = |s: f64, theta: f64| -> Result<PceReport> {
        let p = SimilarityParams {
            s,
            theta,
            cx: 0.0,
            cy: 0.0,
        };
        let b = frame.mul(&warp_same(k, &p)?)?;
        surface_pce(&corr, &sw, &b, ranges)
    };
    let objective = |x: &[f64]| evaluate(x[0], x[1]).map(|r| r.pce).unwrap_or(0.0);
    let opt = maximize(objective, &bounds(ranges), Some(&NEUTRAL), cfg)?;
    let (s, theta) = (opt.best_point[0], opt.best_point[1]);
    let report = evaluate(s, theta)?;
    let (du, dv) = report.peak_shift;
    Ok(Registration {
        params: SimilarityParams {
            s,
            theta,
            cx: -(dv as f64),
            cy: -(du as f64),
        },
        report,
        evaluations: opt.evaluations,
    })
}

/// Image-resolution fingerprint against a (smaller) video frame.
///
/// For each candidate scale and rotation the fingerprint is resampled onto a
/// canvas; the crop offset comes from the peak of the linear correlation of
/// `W * I` against that canvas, restricted to offsets where the whole frame
/// fits. The objective is then the ordinary PCE of the frame against the
/// cropped window. The translation returned is the crop's upper-left corner
/// in the rescaled plane.
pub fn register_fingerprint_to_frame_window(
    k: &ImagePlane,
    frame: &ImagePlane,
    residual: &ImagePlane,
    ranges: &SearchRanges,
    cfg: &SwarmConfig,
) -> Result<Registration> {
    ranges.validate()?;
    frame.same_dims(residual)?;
    let (h, w) = frame.dims();
    let ch = fft_friendly(((ranges.scale.hi * k.height() as f64).floor() as usize).max(h));
    let cw = fft_friendly(((ranges.scale.hi * k.width() as f64).floor() as usize).max(w));
    let canvas_fft = Fft2::new(ch, cw);
    let mut weighted = vec![Complex64::new(0.0, 0.0); ch * cw];
    for r in 0..h {
        for c in 0..w {
            weighted[r * cw + c] = Complex64::new(residual[(r, c)] * frame[(r, c)], 0.0);
        }
    }
    canvas_fft.forward(&mut weighted);
    let corr = Correlator::for_plane(frame);
    let sw = corr.spectrum(residual)?;

    let evaluate = |s: f64, theta: f64| -> Result<(PceReport, (usize, usize))> {
        let (canvas, (eh, ew)) = scaled_canvas(k, s, theta, ch, cw);
        if eh < h || ew < w {
            return Err(Error::Window {
                overshoot: (h as f64 - eh as f64).max(w as f64 - ew as f64),
                context: format!("frame {h}x{w} larger than fingerprint scaled by {s}"),
            });
        }
        let mut spectrum: Vec<Complex64> = canvas
            .data()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        canvas_fft.forward(&mut spectrum);
        for (y, x) in spectrum.iter_mut().zip(&weighted) {
            *y *= x.conj();
        }
        canvas_fft.inverse(&mut spectrum);
        let mut best = (0, 0);
        let mut best_val = f64::NEG_INFINITY;
        for r in 0..=(eh - h) {
            for c in 0..=(ew - w) {
                let v = spectrum[r * cw + c].re;
                if v > best_val {
                    best_val = v;
                    best = (r, c);
                }
            }
        }
        let window = canvas.crop(best.0, best.1, h, w)?;
        let b = frame.mul(&window)?;
        let sb = corr.spectrum(&b)?;
        let report = pce_from_surface(&corr.surface(&sw, &sb)?)?;
        Ok((report, best))
    };
    let objective = |x: &[f64]| evaluate(x[0], x[1]).map(|(r, _)| r.pce).unwrap_or(0.0);
    let neutral = [ranges.scale.clamp(1.0), 0.0];
    let opt = maximize(objective, &bounds(ranges), Some(&neutral), cfg)?;
    let (s, theta) = (opt.best_point[0], opt.best_point[1]);
    let (report, (row, col)) = evaluate(s, theta)?;
    Ok(Registration {
        params: SimilarityParams {
            s,
            theta,
            cx: col as f64,
            cy: row as f64,
        },
        report,
        evaluations: opt.evaluations,
    })
}
