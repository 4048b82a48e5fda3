//! Circular normalized cross-correlation, peak-to-correlation energy (PCE)
//! and zero-shift NCC.
//!
//! The correlation surface is defined as
//! `R[u, v] = sum_ij a'[i, j] * b'[i + u, j + v] / (m * n * sd_a * sd_b)`
//! with mean-subtracted inputs and circular indexing, so `R[0, 0]` is the
//! NCC and the peak location is the displacement of `b`'s content relative
//! to `a`'s.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft2::Fft2;
use crate::plane::{pairwise_sum, ImagePlane, MIN_CORRELATION_SIDE};

/// Half-width of the square neighborhood excluded around the peak (11x11).
pub const PEAK_HALF_WINDOW: usize = 5;

#[derive(Clone, Debug)]
pub struct CorrelationSurface {
    values: ImagePlane,
    peak: (usize, usize),
}

impl CorrelationSurface {
    pub fn values(&self) -> &ImagePlane {
        &self.values
    }

    /// Peak coordinates in `[0, m) x [0, n)`.
    pub fn peak(&self) -> (usize, usize) {
        self.peak
    }

    /// Peak as a signed shift in `(-m/2, m/2] x (-n/2, n/2]`.
    pub fn peak_shift(&self) -> (isize, isize) {
        let (m, n) = self.values.dims();
        (signed(self.peak.0, m), signed(self.peak.1, n))
    }

    pub fn peak_value(&self) -> f64 {
        self.values[self.peak]
    }

    /// Surface value at a signed shift.
    pub fn at_shift(&self, du: isize, dv: isize) -> f64 {
        let (m, n) = self.values.dims();
        self.values[(du.rem_euclid(m as isize) as usize, dv.rem_euclid(n as isize) as usize)]
    }
}

fn signed(u: usize, m: usize) -> isize {
    if u > m / 2 {
        u as isize - m as isize
    } else {
        u as isize
    }
}

/// Outcome of one PCE test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PceReport {
    pub pce: f64,
    /// `pce` carrying the sign of the correlation peak.
    pub signed_pce: f64,
    /// Signed (row, column) displacement at the peak.
    pub peak_shift: (isize, isize),
    pub peak_value: f64,
    pub offpeak_energy: f64,
    /// Number of samples excluded around the peak.
    pub neighborhood: usize,
}

/// Zero-mean, unit-variance spectrum of one operand.
#[derive(Clone)]
pub struct Spectrum {
    dims: (usize, usize),
    bins: Vec<Complex64>,
}

/// Reusable FFT plans for one plane size. Immutable after construction and
/// safe to share between threads.
#[derive(Clone)]
pub struct Correlator {
    fft: Fft2,
}

impl Correlator {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            fft: Fft2::new(height, width),
        }
    }

    pub fn for_plane(p: &ImagePlane) -> Self {
        Self::new(p.height(), p.width())
    }

    pub fn dims(&self) -> (usize, usize) {
        self.fft.dims()
    }

    pub fn spectrum(&self, p: &ImagePlane) -> Result<Spectrum> {
        if p.dims() != self.dims() {
            let (h, w) = self.dims();
            return Err(Error::ShapeMismatch {
                left_h: p.height(),
                left_w: p.width(),
                right_h: h,
                right_w: w,
            });
        }
        check_side(p)?;
        let (mean, sd) = mean_sd(p)?;
        let inv = 1.0 / sd;
        let mut bins: Vec<Complex64> = p
            .data()
            .iter()
            .map(|v| Complex64::new((v - mean) * inv, 0.0))
            .collect();
        self.fft.forward(&mut bins);
        Ok(Spectrum {
            dims: p.dims(),
            bins,
        })
    }

    pub fn surface(&self, a: &Spectrum, b: &Spectrum) -> Result<CorrelationSurface> {
        if a.dims != b.dims || a.dims != self.dims() {
            return Err(Error::ShapeMismatch {
                left_h: a.dims.0,
                left_w: a.dims.1,
                right_h: b.dims.0,
                right_w: b.dims.1,
            });
        }
        let mut prod: Vec<Complex64> = a
            .bins
            .iter()
            .zip(&b.bins)
            .map(|(x, y)| x.conj() * y)
            .collect();
        self.fft.inverse(&mut prod);
        let (m, n) = self.dims();
        let scale = 1.0 / (m * n) as f64;
        let values: Vec<f64> = prod.iter().map(|c| c.re * scale).collect();
        let mut best = 0;
        for (i, v) in values.iter().enumerate() {
            if v.abs() > values[best].abs() {
                best = i;
            }
        }
        Ok(CorrelationSurface {
            values: ImagePlane::from_raw(m, n, values),
            peak: (best / n, best % n),
        })
    }

    pub fn cross_correlate(&self, a: &ImagePlane, b: &ImagePlane) -> Result<CorrelationSurface> {
        a.same_dims(b)?;
        let sa = self.spectrum(a)?;
        let sb = self.spectrum(b)?;
        self.surface(&sa, &sb)
    }

    pub fn pce(&self, a: &ImagePlane, b: &ImagePlane) -> Result<PceReport> {
        let surface = self.cross_correlate(a, b)?;
        pce_from_surface(&surface)
    }

    pub fn pce_spectra(&self, a: &Spectrum, b: &Spectrum) -> Result<PceReport> {
        pce_from_surface(&self.surface(a, b)?)
    }
}

fn check_side(p: &ImagePlane) -> Result<()> {
    if p.height() < MIN_CORRELATION_SIDE || p.width() < MIN_CORRELATION_SIDE {
        return Err(Error::Dimension(format!(
            "correlation needs at least {MIN_CORRELATION_SIDE}x{MIN_CORRELATION_SIDE}, got {}x{}",
            p.height(),
            p.width()
        )));
    }
    Ok(())
}

fn mean_sd(p: &ImagePlane) -> Result<(f64, f64)> {
    let mean = p.mean();
    let sd = p.std();
    if !(sd > 1e-12 * (1.0 + mean.abs())) {
        return Err(Error::DegenerateInput("constant plane has no variance".into()));
    }
    Ok((mean, sd))
}

/// PCE of an already computed surface, excluding the 11x11 (circularly
/// wrapped) neighborhood of the peak from the energy estimate.
pub fn pce_from_surface(surface: &CorrelationSurface) -> Result<PceReport> {
    pce_at_peak(surface, surface.peak)
}

/// PCE with the peak searched only among shifts with `|du| <= max_du` and
/// `|dv| <= max_dv`.
pub fn pce_within(surface: &CorrelationSurface, max_du: usize, max_dv: usize) -> Result<PceReport> {
    let (m, n) = surface.values.dims();
    let vals = surface.values.data();
    let mut best: Option<(usize, usize)> = None;
    for r in 0..m {
        if signed(r, m).unsigned_abs() > max_du {
            continue;
        }
        for c in 0..n {
            if signed(c, n).unsigned_abs() > max_dv {
                continue;
            }
            let v = vals[r * n + c].abs();
            if best.is_none_or(|(br, bc)| v > vals[br * n + bc].abs()) {
                best = Some((r, c));
            }
        }
    }
    pce_at_peak(surface, best.expect("shift (0, 0) is always allowed"))
}

fn pce_at_peak(surface: &CorrelationSurface, peak: (usize, usize)) -> Result<PceReport> {
    let (m, n) = surface.values.dims();
    let (pu, pv) = peak;
    let mut in_rows = vec![false; m];
    let mut in_cols = vec![false; n];
    let hw = PEAK_HALF_WINDOW as isize;
    for k in -hw..=hw {
        in_rows[(pu as isize + k).rem_euclid(m as isize) as usize] = true;
        in_cols[(pv as isize + k).rem_euclid(n as isize) as usize] = true;
    }
    let rows_out = in_rows.iter().filter(|&&b| !b).count();
    let cols_out = in_cols.iter().filter(|&&b| !b).count();
    let excluded = (m - rows_out) * (n - cols_out);
    let count = m * n - excluded;
    if count == 0 {
        return Err(Error::DegenerateInput(
            "plane too small to leave an off-peak region".into(),
        ));
    }
    let vals = surface.values.data();
    let mut sq = Vec::with_capacity(count);
    for r in 0..m {
        for c in 0..n {
            if !(in_rows[r] && in_cols[c]) {
                let v = vals[r * n + c];
                sq.push(v * v);
            }
        }
    }
    let offpeak_energy = pairwise_sum(&sq) / count as f64;
    if !(offpeak_energy > 0.0) {
        return Err(Error::DegenerateInput("off-peak energy is zero".into()));
    }
    let peak_value = vals[pu * n + pv];
    let pce = peak_value * peak_value / offpeak_energy;
    Ok(PceReport {
        pce,
        signed_pce: pce.copysign(peak_value),
        peak_shift: (signed(pu, m), signed(pv, n)),
        peak_value,
        offpeak_energy,
        neighborhood: excluded,
    })
}

pub fn cross_correlate(a: &ImagePlane, b: &ImagePlane) -> Result<CorrelationSurface> {
    a.same_dims(b)?;
    Correlator::for_plane(a).cross_correlate(a, b)
}

pub fn pce(a: &ImagePlane, b: &ImagePlane) -> Result<PceReport> {
    a.same_dims(b)?;
    Correlator::for_plane(a).pce(a, b)
}

/// Zero-shift normalized correlation coefficient.
pub fn ncc(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    a.same_dims(b)?;
    let (ma, sa) = mean_sd(a)?;
    let (mb, sb) = mean_sd(b)?;
    let prod: Vec<f64> = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - ma) * (y - mb))
        .collect();
    let r = pairwise_sum(&prod) / (a.len() as f64 * sa * sb);
    Ok(r.clamp(-1.0, 1.0))
}
