//! The single-channel raster every stage of the pipeline passes around.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Smallest side accepted by the correlation routines.
pub const MIN_CORRELATION_SIDE: usize = 8;

/// Row-major 2D plane of real samples.
///
/// Frames hold intensities in `[0, 255]`; residuals and fingerprints are
/// small zero-mean values.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!("{height}x{width} plane is empty")));
        }
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "{height}x{width} plane needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite sample at row {}, col {}",
                pos / width,
                pos % width
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "empty plane");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "empty plane");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    /// Internal constructor for buffers already known to be well formed.
    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.width..(r + 1) * self.width]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_dims(&self, other: &ImagePlane) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::ShapeMismatch {
                left_h: self.height,
                left_w: self.width,
                right_h: other.height,
                right_w: other.width,
            });
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.data) / self.data.len() as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        let mean = self.mean();
        let sq: Vec<f64> = self.data.iter().map(|v| (v - mean) * (v - mean)).collect();
        (pairwise_sum(&sq) / self.data.len() as f64).sqrt()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImagePlane {
        Self::from_raw(self.height, self.width, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ImagePlane, f: impl Fn(f64, f64) -> f64) -> Result<ImagePlane> {
        self.same_dims(other)?;
        Ok(Self::from_raw(
            self.height,
            self.width,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    /// Pixel-wise product.
    pub fn mul(&self, other: &ImagePlane) -> Result<ImagePlane> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn sub(&self, other: &ImagePlane) -> Result<ImagePlane> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &ImagePlane) -> Result<ImagePlane> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, k: f64) -> ImagePlane {
        self.map(|v| v * k)
    }

    /// Integer translation: `out[r, c] = self[r - dr, c - dc]`, zero where
    /// the source falls outside the plane.
    pub fn translated(&self, dr: isize, dc: isize) -> ImagePlane {
        let (h, w) = (self.height as isize, self.width as isize);
        Self::from_fn(self.height, self.width, |r, c| {
            let (sr, sc) = (r as isize - dr, c as isize - dc);
            if sr < 0 || sc < 0 || sr >= h || sc >= w {
                0.0
            } else {
                self.data[(sr * w + sc) as usize]
            }
        })
    }

    /// Circular translation: `out[r, c] = self[(r - dr) mod h, (c - dc) mod w]`.
    pub fn circular_shift(&self, dr: isize, dc: isize) -> ImagePlane {
        let (h, w) = (self.height as isize, self.width as isize);
        Self::from_fn(self.height, self.width, |r, c| {
            let sr = (r as isize - dr).rem_euclid(h);
            let sc = (c as isize - dc).rem_euclid(w);
            self.data[(sr * w + sc) as usize]
        })
    }

    /// Rectangular sub-plane starting at `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<ImagePlane> {
        if row + height > self.height || col + width > self.width || height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "crop {height}x{width} at ({row},{col}) outside {}x{}",
                self.height, self.width
            )));
        }
        Ok(Self::from_fn(height, width, |r, c| {
            self.data[(row + r) * self.width + col + c]
        }))
    }

    /// Root-mean-square value.
    pub fn rms(&self) -> f64 {
        let sq: Vec<f64> = self.data.iter().map(|v| v * v).collect();
        (pairwise_sum(&sq) / self.data.len() as f64).sqrt()
    }
}

impl Index<(usize, usize)> for ImagePlane {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.width + c]
    }
}

impl IndexMut<(usize, usize)> for ImagePlane {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.width + c]
    }
}

/// Pairwise (cascade) summation; deterministic for a fixed element order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pixel-wise sum of equally sized planes, combined pairwise over the list.
pub fn sum_planes(planes: &[&ImagePlane]) -> Result<ImagePlane> {
    match planes {
        [] => Err(Error::Input("cannot sum an empty list of planes".into())),
        [only] => Ok((*only).clone()),
        _ => {
            let mid = planes.len() / 2;
            let left = sum_planes(&planes[..mid])?;
            let right = sum_planes(&planes[mid..])?;
            left.add(&right)
        }
    }
}

/// Pixel-wise arithmetic mean of equally sized planes.
pub fn mean_planes(planes: &[&ImagePlane]) -> Result<ImagePlane> {
    let sum = sum_planes(planes)?;
    Ok(sum.scale(1.0 / planes.len() as f64))
}
