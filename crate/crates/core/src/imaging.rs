//! Frame ingestion, denoising and noise-residual extraction.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, ImageReader, Luma};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft2::Fft2;
use crate::plane::ImagePlane;

const LUMA_R: f64 = 299.0;
const LUMA_G: f64 = 587.0;
const LUMA_B: f64 = 114.0;

fn luma(r: f64, g: f64, b: f64) -> f64 {
    (LUMA_R * r + LUMA_G * g + LUMA_B * b) / 1000.0
}

/// Loads a PNG or binary PGM file as a luminance plane in `[0, 255]`.
///
/// RGB input is reduced with Rec. 601 weights; 16-bit samples are rescaled.
pub fn load_plane(path: impl AsRef<Path>) -> Result<ImagePlane> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        other => {
            return Err(Error::format(
                path,
                format!("unsupported raster format {other:?}"),
            ))
        }
    }
    let img = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::Dimension(format!("{} is zero-sized", path.display())));
    }
    let k16 = 255.0 / 65535.0;
    let data: Vec<f64> = match &img {
        DynamicImage::ImageLuma8(b) => b.pixels().map(|p| p.0[0] as f64).collect(),
        DynamicImage::ImageLumaA8(b) => b.pixels().map(|p| p.0[0] as f64).collect(),
        DynamicImage::ImageLuma16(b) => b.pixels().map(|p| p.0[0] as f64 * k16).collect(),
        DynamicImage::ImageLumaA16(b) => b.pixels().map(|p| p.0[0] as f64 * k16).collect(),
        DynamicImage::ImageRgb8(b) => b
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64))
            .collect(),
        DynamicImage::ImageRgba8(b) => b
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64))
            .collect(),
        DynamicImage::ImageRgb16(b) => b
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64) * k16)
            .collect(),
        DynamicImage::ImageRgba16(b) => b
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64) * k16)
            .collect(),
        _ => return Err(Error::format(path, "floating-point rasters are not supported")),
    };
    ImagePlane::new(h, w, data)
}

/// Writes a plane as a 16-bit grayscale PNG, clamping to `[0, 255]`.
pub fn save_plane_png16(plane: &ImagePlane, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf: Vec<u16> = plane
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 255.0) / 255.0 * 65535.0).round() as u16)
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(plane.width() as u32, plane.height() as u32, buf)
            .expect("buffer length matches plane");
    img.save_with_format(path, ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })
}

/// Ordered frames of one video (or one image collection) sharing dimensions.
///
/// Indices are the original 1-based frame positions, so index 1 is the first
/// frame of the sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSet {
    frames: Vec<ImagePlane>,
    indices: Vec<usize>,
    source_id: String,
    first_frame_excluded: bool,
}

impl FrameSet {
    pub fn new(frames: Vec<ImagePlane>, indices: Vec<usize>, source_id: impl Into<String>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Input("frame set is empty".into()));
        }
        if frames.len() != indices.len() {
            return Err(Error::Input(format!(
                "{} frames but {} indices",
                frames.len(),
                indices.len()
            )));
        }
        let dims = frames[0].dims();
        if let Some(k) = frames.iter().position(|f| f.dims() != dims) {
            return Err(Error::Dimension(format!(
                "frame {} is {:?}, expected {:?}",
                indices[k],
                frames[k].dims(),
                dims
            )));
        }
        if indices.first() == Some(&0) || indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Input(
                "frame indices must be 1-based and strictly increasing".into(),
            ));
        }
        Ok(Self {
            frames,
            indices,
            source_id: source_id.into(),
            first_frame_excluded: false,
        })
    }

    /// Frames numbered consecutively from 1.
    pub fn from_sequence(frames: Vec<ImagePlane>, source_id: impl Into<String>) -> Result<Self> {
        let indices = (1..=frames.len()).collect();
        Self::new(frames, indices, source_id)
    }

    /// Drops frame 1 (if present) and marks the set as safe for the
    /// stabilized-video estimators.
    pub fn without_first_frame(mut self) -> Result<Self> {
        if self.indices.first() == Some(&1) {
            self.indices.remove(0);
            self.frames.remove(0);
        }
        if self.frames.is_empty() {
            return Err(Error::Input("no frames left after dropping frame 1".into()));
        }
        self.first_frame_excluded = true;
        Ok(self)
    }

    pub fn first_frame_excluded(&self) -> bool {
        self.first_frame_excluded
    }

    pub(crate) fn require_first_frame_excluded(&self) -> Result<()> {
        if !self.first_frame_excluded {
            return Err(Error::FirstFrameNotExcluded);
        }
        debug_assert!(self.indices.first() != Some(&1));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    pub fn frames(&self) -> &[ImagePlane] {
        &self.frames
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &ImagePlane)> {
        self.indices.iter().copied().zip(&self.frames)
    }

    pub fn get(&self, index: usize) -> Option<&ImagePlane> {
        self.indices
            .binary_search(&index)
            .ok()
            .map(|k| &self.frames[k])
    }

    /// Subset holding the given frame indices (in ascending order). The
    /// exclusion flag carries over.
    pub fn subset(&self, wanted: &[usize]) -> Result<Self> {
        let mut wanted = wanted.to_vec();
        wanted.sort_unstable();
        wanted.dedup();
        let mut frames = Vec::with_capacity(wanted.len());
        for &idx in &wanted {
            let f = self
                .get(idx)
                .ok_or_else(|| Error::Input(format!("frame {idx} not in set {}", self.source_id)))?;
            frames.push(f.clone());
        }
        let mut out = Self::new(frames, wanted, self.source_id.clone())?;
        out.first_frame_excluded = self.first_frame_excluded;
        Ok(out)
    }

    /// Reads every `frame_NNNNNN.{png,pgm}` in `dir`. Other files are ignored;
    /// gaps in the numbering are allowed. Any unreadable frame aborts the load.
    pub fn load_dir(dir: impl AsRef<Path>, source_id: impl Into<String>) -> Result<Self> {
        let dir = dir.as_ref();
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut found: Vec<(usize, PathBuf)> = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            if let Some(idx) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(parse_frame_name)
            {
                found.push((idx, path));
            }
        }
        if found.is_empty() {
            return Err(Error::Input(format!("no frame_NNNNNN images in {}", dir.display())));
        }
        found.sort();
        if let Some(w) = found.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Input(format!("duplicate frame index {}", w[0].0)));
        }
        let mut frames = Vec::with_capacity(found.len());
        for (_, path) in &found {
            frames.push(load_plane(path)?);
        }
        Self::new(frames, found.iter().map(|(i, _)| *i).collect(), source_id)
    }

    /// Writes the frames as 16-bit PNGs using the `frame_%06d.png` convention.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (idx, frame) in self.iter() {
            save_plane_png16(frame, dir.join(frame_file_name(idx)))?;
        }
        Ok(())
    }
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

fn parse_frame_name(name: &str) -> Option<usize> {
    let rest = name.strip_prefix("frame_")?;
    let (digits, ext) = rest.split_once('.')?;
    if !matches!(ext.to_ascii_lowercase().as_str(), "png" | "pgm") {
        return None;
    }
    if digits.len() < 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().filter(|&i| i > 0)
}

/// Denoising filter used to separate scene content from sensor noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Denoiser {
    /// Separable zero-phase Gaussian, truncated at 4 sigma, reflective borders.
    Gaussian { sigma: f64 },
    /// Per-block Wiener shrinkage of DFT coefficients.
    WienerBlocks { block: usize, noise_variance: f64 },
}

impl Default for Denoiser {
    fn default() -> Self {
        Denoiser::Gaussian { sigma: 1.0 }
    }
}

impl Denoiser {
    pub fn wiener() -> Self {
        Denoiser::WienerBlocks {
            block: 8,
            noise_variance: 9.0,
        }
    }

    /// Stable label recorded in fingerprint metadata.
    pub fn id(&self) -> String {
        match self {
            Denoiser::Gaussian { sigma } => format!("gaussian:sigma={sigma}"),
            Denoiser::WienerBlocks {
                block,
                noise_variance,
            } => format!("wiener-dft:block={block},var={noise_variance}"),
        }
    }

    pub fn apply(&self, img: &ImagePlane) -> ImagePlane {
        match *self {
            Denoiser::Gaussian { sigma } => gaussian_blur(img, sigma),
            Denoiser::WienerBlocks {
                block,
                noise_variance,
            } => wiener_blocks(img, block, noise_variance),
        }
    }
}

/// Residual extraction settings.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ResidualConfig {
    pub denoiser: Denoiser,
    /// Subtract row means, then column means, from the residual. Off by default.
    pub zero_mean_rows_cols: bool,
}

impl ResidualConfig {
    pub fn id(&self) -> String {
        if self.zero_mean_rows_cols {
            format!("{}+zero-mean", self.denoiser.id())
        } else {
            self.denoiser.id()
        }
    }

    pub fn extract(&self, img: &ImagePlane) -> ImagePlane {
        let den = self.denoiser.apply(img);
        let mut w = ImagePlane::from_raw(
            img.height(),
            img.width(),
            img.data().iter().zip(den.data()).map(|(a, b)| a - b).collect(),
        );
        if self.zero_mean_rows_cols {
            zero_mean_rows_cols(&mut w);
        }
        w
    }
}

/// Default denoiser (Gaussian, sigma 1).
pub fn denoise(img: &ImagePlane) -> ImagePlane {
    Denoiser::default().apply(img)
}

/// Noise residual `img - denoise(img)` with the default denoiser.
pub fn extract_residual(img: &ImagePlane) -> ImagePlane {
    ResidualConfig::default().extract(img)
}

/// Half-sample symmetric reflection: -1 -> 0, -2 -> 1, n -> n-1.
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn gaussian_blur(img: &ImagePlane, sigma: f64) -> ImagePlane {
    if sigma <= 0.0 {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (h, w) = img.dims();
    let src = img.data();
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        let row = &src[r * w..(r + 1) * w];
        for c in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * row[reflect_index(c as isize + k as isize - radius, w)];
            }
            tmp[r * w + c] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for (k, &kv) in kernel.iter().enumerate() {
            let sr = reflect_index(r as isize + k as isize - radius, h);
            let srow = &tmp[sr * w..(sr + 1) * w];
            let orow = &mut out[r * w..(r + 1) * w];
            for c in 0..w {
                orow[c] += kv * srow[c];
            }
        }
    }
    ImagePlane::from_raw(h, w, out)
}

/// Public handle on the Gaussian filter, used by the video simulator.
pub fn gaussian_smooth(img: &ImagePlane, sigma: f64) -> ImagePlane {
    gaussian_blur(img, sigma)
}

fn wiener_blocks(img: &ImagePlane, block: usize, noise_var: f64) -> ImagePlane {
    let block = block.max(2);
    let (h, w) = img.dims();
    let ph = h.div_ceil(block) * block;
    let pw = w.div_ceil(block) * block;
    let fft = Fft2::new(block, block);
    let n = (block * block) as f64;
    let mut out = vec![0.0; h * w];
    let mut buf = vec![Complex64::new(0.0, 0.0); block * block];
    for br in (0..ph).step_by(block) {
        for bc in (0..pw).step_by(block) {
            for r in 0..block {
                let sr = reflect_index((br + r) as isize, h);
                for c in 0..block {
                    let sc = reflect_index((bc + c) as isize, w);
                    buf[r * block + c] = Complex64::new(img[(sr, sc)], 0.0);
                }
            }
            fft.forward(&mut buf);
            for v in buf.iter_mut().skip(1) {
                let power = v.norm_sqr() / n;
                let signal = (power - noise_var).max(0.0);
                *v *= signal / (signal + noise_var);
            }
            fft.inverse(&mut buf);
            for r in 0..block {
                for c in 0..block {
                    let (y, x) = (br + r, bc + c);
                    if y < h && x < w {
                        out[y * w + x] = buf[r * block + c].re;
                    }
                }
            }
        }
    }
    ImagePlane::from_raw(h, w, out)
}

fn zero_mean_rows_cols(p: &mut ImagePlane) {
    let (h, w) = p.dims();
    for r in 0..h {
        let m = p.row(r).iter().sum::<f64>() / w as f64;
        for c in 0..w {
            p[(r, c)] -= m;
        }
    }
    for c in 0..w {
        let m = (0..h).map(|r| p[(r, c)]).sum::<f64>() / h as f64;
        for r in 0..h {
            p[(r, c)] -= m;
        }
    }
}
