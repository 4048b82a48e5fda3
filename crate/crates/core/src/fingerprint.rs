//! Reference fingerprints: from still images, converted to video resolution,
//! aggregated blindly from stabilized video, and the registered oracle.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::{ncc, Correlator, PceReport};
use crate::error::{Error, Result};
use crate::geometry::{image_to_video_window, warp_same, Interval, SearchRanges, ShiftRange, SimilarityParams};
use crate::imaging::{FrameSet, ResidualConfig};
use crate::optimizer::SwarmConfig;
use crate::plane::{mean_planes, sum_planes, ImagePlane};
use crate::registration::{
    frame_seed, register_fingerprint_same_size, register_fingerprint_to_frame_window, register_onto, Registration,
};

/// Replaces exactly-zero denominators of the image estimator.
pub const DENOMINATOR_EPS: f64 = 1e-6;
pub const DEFAULT_PCE_THRESHOLD: f64 = 60.0;

const MAGIC: &[u8; 4] = b"PRNF";
const FORMAT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Image,
    Video,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Images,
    Videos,
    Oracle,
    Baseline,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Image => "image",
            Domain::Video => "video",
        })
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Images => "images",
            Provenance::Videos => "videos",
            Provenance::Oracle => "oracle",
            Provenance::Baseline => "baseline",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fingerprint {
    pub plane: ImagePlane,
    pub domain: Domain,
    pub provenance: Provenance,
    pub frames_used: usize,
    /// Image-to-video conversion applied, if any.
    pub params: Option<SimilarityParams>,
    pub denoiser_id: String,
    pub label: String,
    /// Free-form extras persisted in the sidecar (thresholds, counts, flags).
    pub metadata: BTreeMap<String, String>,
}

impl Fingerprint {
    pub fn new(plane: ImagePlane, domain: Domain, provenance: Provenance, frames_used: usize, denoiser_id: impl Into<String>) -> Self {
        Self {
            plane,
            domain,
            provenance,
            frames_used,
            params: None,
            denoiser_id: denoiser_id.into(),
            label: format!("{provenance}-{domain}"),
            metadata: BTreeMap::new(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.plane.dims()
    }

    pub fn require_domain(&self, want: Domain) -> Result<()> {
        if self.domain != want {
            return Err(Error::Input(format!(
                "fingerprint '{}' is {}-domain, {want}-domain required",
                self.label, self.domain
            )));
        }
        Ok(())
    }

    /// The plane as it reads back from disk: stored samples are 32-bit.
    pub fn quantized(mut self) -> Self {
        self.plane = self.plane.map(|v| v as f32 as f64);
        self
    }

    fn sidecar_entries(&self) -> BTreeMap<String, String> {
        let mut m = self.metadata.clone();
        m.insert("domain".into(), self.domain.to_string());
        m.insert("provenance".into(), self.provenance.to_string());
        m.insert("frames_used".into(), self.frames_used.to_string());
        m.insert("denoiser_id".into(), self.denoiser_id.clone());
        m.insert("label".into(), self.label.clone());
        if let Some(p) = self.params {
            m.insert("params.s".into(), format!("{:?}", p.s));
            m.insert("params.theta".into(), format!("{:?}", p.theta));
            m.insert("params.cx".into(), format!("{:?}", p.cx));
            m.insert("params.cy".into(), format!("{:?}", p.cy));
        }
        m
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta");
        PathBuf::from(s)
    }

    /// Writes the PRNF file and its `.meta` sidecar. Both go through a
    /// temporary file and a rename; nothing is left behind on failure.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let (h, w) = self.dims();
        let mut bytes = Vec::with_capacity(14 + 4 * h * w);
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(h as u32).to_le_bytes());
        bytes.extend_from_slice(&(w as u32).to_le_bytes());
        for &v in self.plane.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        let mut meta = String::new();
        for (k, v) in self.sidecar_entries() {
            meta.push_str(&format!("{k}={v}\n"));
        }
        let side = Self::sidecar_path(path);
        write_atomic(path, &bytes)?;
        if let Err(e) = write_atomic(&side, meta.as_bytes()) {
            let _ = fs::remove_file(path);
            return Err(e);
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 14 || &bytes[..4] != MAGIC {
            return Err(Error::format(path, "not a PRNF file"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::format(path, format!("unsupported PRNF version {version}")));
        }
        let h = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
        let w = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
        let body = &bytes[14..];
        if h == 0 || w == 0 || body.len() != 4 * h * w {
            return Err(Error::format(path, format!("payload does not match {h}x{w}")));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        let plane = ImagePlane::new(h, w, data).map_err(|e| Error::format(path, e.to_string()))?;

        let side = Self::sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let mut m = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(&side, format!("bad line '{line}'")))?;
            m.insert(k.to_string(), v.to_string());
        }
        let mut take = |k: &str| {
            m.remove(k)
                .ok_or_else(|| Error::format(&side, format!("missing key '{k}'")))
        };
        let domain = match take("domain")?.as_str() {
            "image" => Domain::Image,
            "video" => Domain::Video,
            other => return Err(Error::format(&side, format!("unknown domain '{other}'"))),
        };
        let provenance = match take("provenance")?.as_str() {
            "images" => Provenance::Images,
            "videos" => Provenance::Videos,
            "oracle" => Provenance::Oracle,
            "baseline" => Provenance::Baseline,
            other => return Err(Error::format(&side, format!("unknown provenance '{other}'"))),
        };
        let frames_used = take("frames_used")?
            .parse()
            .map_err(|_| Error::format(&side, "frames_used is not a count"))?;
        let denoiser_id = take("denoiser_id")?;
        let label = take("label")?;
        let params = if m.contains_key("params.s") {
            let mut num = |k: &str| -> Result<f64> {
                m.remove(k)
                    .ok_or_else(|| Error::format(&side, format!("missing key '{k}'")))?
                    .parse()
                    .map_err(|_| Error::format(&side, format!("'{k}' is not a number")))
            };
            let (s, theta, cx, cy) = (num("params.s")?, num("params.theta")?, num("params.cx")?, num("params.cy")?);
            Some(SimilarityParams::new(s, theta, cx, cy).map_err(|e| Error::format(&side, e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            plane,
            domain,
            provenance,
            frames_used,
            params,
            denoiser_id,
            label,
            metadata: m,
        })
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn residuals(frames: &FrameSet, cfg: &ResidualConfig) -> Vec<ImagePlane> {
    frames.frames().par_iter().map(|f| cfg.extract(f)).collect()
}

/// `K = sum(W * I) / sum(I^2)` pixel by pixel.
pub fn estimate_prnu_from_images(images: &FrameSet, cfg: &ResidualConfig) -> Result<Fingerprint> {
    weighted_estimate(images, cfg, Domain::Image, Provenance::Images)
}

/// The same estimator applied straight to video frames, with no registration.
pub fn baseline_fingerprint(frames: &FrameSet, cfg: &ResidualConfig) -> Result<Fingerprint> {
    weighted_estimate(frames, cfg, Domain::Video, Provenance::Baseline)
}

fn weighted_estimate(set: &FrameSet, cfg: &ResidualConfig, domain: Domain, provenance: Provenance) -> Result<Fingerprint> {
    if set.is_empty() {
        return Err(Error::Input("no frames to estimate from".into()));
    }
    let res = residuals(set, cfg);
    let num: Vec<ImagePlane> = res
        .iter()
        .zip(set.frames())
        .map(|(w, i)| w.mul(i))
        .collect::<Result<_>>()?;
    let den: Vec<ImagePlane> = set.frames().iter().map(|i| i.map(|v| v * v)).collect();
    let num = sum_planes(&num.iter().collect::<Vec<_>>())?;
    let den = sum_planes(&den.iter().collect::<Vec<_>>())?;
    let zeros = den.data().iter().filter(|&&d| d == 0.0).count();
    let k = num.zip_map(&den, |n, d| n / if d == 0.0 { DENOMINATOR_EPS } else { d })?;
    if zeros > 0 {
        warn!("{zeros} pixels had a zero denominator; replaced by {DENOMINATOR_EPS}");
    }
    let mut fp = Fingerprint::new(k, domain, provenance, set.len(), cfg.id());
    fp.metadata.insert("zero_denominators".into(), zeros.to_string());
    Ok(fp)
}

/// Best similarity mapping `k` onto one frame:
/// `max PCE(W, I * T(K))`, shift from the correlation peak.
///
/// An image-domain `k` is searched as a scaled window (upper-left crop
/// offset in `cx, cy`); a video-domain `k` as a same-size warp.
pub fn estimate_frame_warp(
    k: &Fingerprint,
    frame: &ImagePlane,
    ranges: &SearchRanges,
    cfg: &SwarmConfig,
    residual: &ResidualConfig,
) -> Result<Registration> {
    let w = residual.extract(frame);
    match k.domain {
        Domain::Image => register_fingerprint_to_frame_window(&k.plane, frame, &w, ranges, cfg),
        Domain::Video => register_fingerprint_same_size(&k.plane, frame, &w, ranges, cfg),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameEstimate {
    pub index: usize,
    pub registration: Registration,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConversionEstimate {
    pub params: SimilarityParams,
    pub accepted: Vec<usize>,
    pub per_frame: Vec<FrameEstimate>,
}

/// Per-frame scale-and-crop search with rotation pinned to zero, averaged
/// over the frames whose PCE clears `pce_threshold`.
pub fn estimate_image_to_video_params(
    k: &Fingerprint,
    frames: &FrameSet,
    scale_range: Interval,
    pce_threshold: f64,
    cfg: &SwarmConfig,
    residual: &ResidualConfig,
) -> Result<ConversionEstimate> {
    frames.require_first_frame_excluded()?;
    k.require_domain(Domain::Image)?;
    let ranges = SearchRanges {
        scale: scale_range,
        theta: Interval::point(0.0),
        shift: ShiftRange::Full,
    };
    ranges.validate()?;
    cfg.validate()?;
    let per_frame: Vec<FrameEstimate> = frames
        .frames()
        .par_iter()
        .zip(frames.indices().par_iter())
        .map(|(f, &index)| {
            let reg = estimate_frame_warp(k, f, &ranges, &cfg.with_seed(frame_seed(cfg.seed, index)), residual)?;
            Ok(FrameEstimate {
                index,
                accepted: reg.report.pce > pce_threshold,
                registration: reg,
            })
        })
        .collect::<Result<_>>()?;
    let acc: Vec<&FrameEstimate> = per_frame.iter().filter(|e| e.accepted).collect();
    if acc.is_empty() {
        return Err(Error::NoConsensus(format!(
            "no frame of '{}' exceeds PCE {pce_threshold}",
            frames.source_id()
        )));
    }
    let n = acc.len() as f64;
    let mean = |f: fn(&SimilarityParams) -> f64| acc.iter().map(|e| f(&e.registration.params)).sum::<f64>() / n;
    let params = SimilarityParams {
        s: mean(|p| p.s),
        theta: 0.0,
        cx: mean(|p| p.cx),
        cy: mean(|p| p.cy),
    };
    Ok(ConversionEstimate {
        params,
        accepted: acc.iter().map(|e| e.index).collect(),
        per_frame,
    })
}

/// Scales and crops an image-domain fingerprint to video resolution.
pub fn convert_image_fingerprint(k: &Fingerprint, p: &SimilarityParams, vid_dims: (usize, usize)) -> Result<Fingerprint> {
    k.require_domain(Domain::Image)?;
    let plane = image_to_video_window(&k.plane, p.s, (p.cx, p.cy), vid_dims.0, vid_dims.1)?;
    let mut out = Fingerprint::new(plane, Domain::Video, Provenance::Images, k.frames_used, k.denoiser_id.clone());
    out.params = Some(*p);
    out.metadata = k.metadata.clone();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregationState {
    pub reference_index: usize,
    /// Admitted frame indices, in admission order.
    pub member_indices: Vec<usize>,
    /// Peak shift `(rows, cols)` each member's residual was translated by.
    pub shift_log: Vec<(isize, isize)>,
    /// Iteration at which each member was admitted (0 for the reference).
    pub admitted_at: Vec<usize>,
    pub iterations: usize,
    pub delta: usize,
    /// No pair of frames matched; the fingerprint is a single residual.
    pub degenerate: bool,
    /// Running fingerprint after each admitted frame.
    #[serde(skip)]
    pub snapshots: Option<Vec<ImagePlane>>,
}

fn within_delta(r: &PceReport, delta: usize) -> bool {
    r.signed_pce > 0.0 && r.peak_shift.0.unsigned_abs() <= delta && r.peak_shift.1.unsigned_abs() <= delta
}

/// Blind fingerprint from stabilized frames: seed with the residual that
/// matches most others within a `delta` box, then grow the set by admitting
/// frames whose residual matches the running mean, translating each by its
/// observed peak shift.
pub fn aggregate_video_fingerprint(
    frames: &FrameSet,
    delta: usize,
    keep_snapshots: bool,
    residual: &ResidualConfig,
) -> Result<(Fingerprint, AggregationState)> {
    frames.require_first_frame_excluded()?;
    let n = frames.len();
    if n < 2 {
        return Err(Error::Input(format!("aggregation needs at least 2 frames, got {n}")));
    }
    let corr = Correlator::new(frames.dims().0, frames.dims().1);
    let res = residuals(frames, residual);
    let specs: Vec<_> = res.iter().map(|w| corr.spectrum(w)).collect::<Result<_>>()?;
    let imgs = frames.frames();

    // all ordered pairs (l, f), l != f
    let counts: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|l| {
            (0..n)
                .filter(|&f| f != l)
                .map(|f| {
                    let b = imgs[l].mul(&res[f])?;
                    let r = match corr.spectrum(&b) {
                        Ok(sb) => corr.pce_spectra(&specs[l], &sb).ok(),
                        Err(_) => None,
                    };
                    Ok(r.is_some_and(|r| within_delta(&r, delta)) as usize)
                })
                .sum::<Result<usize>>()
        })
        .collect::<Result<_>>()?;
    let best = *counts.iter().max().expect("n >= 2");
    let r = counts.iter().position(|&c| c == best).expect("max exists");
    let degenerate = best == 0;

    let mut member_pos = vec![r];
    let mut shift_log = vec![(0isize, 0isize)];
    let mut admitted_at = vec![0];
    let mut aligned = vec![res[r].clone()];
    let mut snapshots = keep_snapshots.then(|| vec![res[r].clone()]);
    let mut k_v = res[r].clone();
    let mut iterations = 0;
    let mut remaining: Vec<usize> = if degenerate { Vec::new() } else { (0..n).filter(|&i| i != r).collect() };

    while !remaining.is_empty() {
        iterations += 1;
        let verdicts: Vec<Option<(isize, isize)>> = remaining
            .par_iter()
            .map(|&f| {
                let b = imgs[f].mul(&k_v).ok()?;
                let sb = corr.spectrum(&b).ok()?;
                let rep = corr.pce_spectra(&specs[f], &sb).ok()?;
                within_delta(&rep, delta).then_some(rep.peak_shift)
            })
            .collect();
        let mut admitted_any = false;
        let mut still = Vec::new();
        for (&f, v) in remaining.iter().zip(verdicts) {
            match v {
                Some(p) => {
                    admitted_any = true;
                    member_pos.push(f);
                    shift_log.push(p);
                    admitted_at.push(iterations);
                    aligned.push(res[f].translated(p.0, p.1));
                    if let Some(s) = snapshots.as_mut() {
                        s.push(mean_planes(&aligned.iter().collect::<Vec<_>>())?);
                    }
                }
                None => still.push(f),
            }
        }
        if !admitted_any {
            break;
        }
        k_v = mean_planes(&aligned.iter().collect::<Vec<_>>())?;
        remaining = still;
    }

    let idx = frames.indices();
    let mut fp = Fingerprint::new(k_v, Domain::Video, Provenance::Videos, aligned.len(), residual.id());
    fp.metadata.insert("delta".into(), delta.to_string());
    fp.metadata.insert("aggregation".into(), "unweighted-mean".into());
    fp.metadata.insert("reference_index".into(), idx[r].to_string());
    fp.metadata.insert("degenerate".into(), degenerate.to_string());
    if degenerate {
        warn!("no frame pair of '{}' matched within delta {delta}", frames.source_id());
    }
    let state = AggregationState {
        reference_index: idx[r],
        member_indices: member_pos.iter().map(|&p| idx[p]).collect(),
        shift_log,
        admitted_at,
        iterations,
        delta,
        degenerate,
        snapshots,
    };
    Ok((fp, state))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleFrame {
    pub index: usize,
    pub registration: Registration,
    pub admitted: bool,
}

/// Upper-bound fingerprint: every residual registered onto `k_iv` by a full
/// similarity search, then averaged over the frames reaching `pce_threshold`.
pub fn oracle_aggregate(
    frames: &FrameSet,
    k_iv: &Fingerprint,
    ranges: &SearchRanges,
    pce_threshold: f64,
    cfg: &SwarmConfig,
    residual: &ResidualConfig,
) -> Result<(Fingerprint, Vec<OracleFrame>)> {
    frames.require_first_frame_excluded()?;
    k_iv.require_domain(Domain::Video)?;
    let per: Vec<(OracleFrame, ImagePlane)> = frames
        .frames()
        .par_iter()
        .zip(frames.indices().par_iter())
        .map(|(img, &index)| {
            let w = residual.extract(img);
            let reg = register_onto(&k_iv.plane, &w, Some(img), ranges, &cfg.with_seed(frame_seed(cfg.seed, index)))?;
            let aligned = warp_same(&w, &reg.params)?;
            Ok((
                OracleFrame {
                    index,
                    admitted: reg.report.pce >= pce_threshold,
                    registration: reg,
                },
                aligned,
            ))
        })
        .collect::<Result<_>>()?;
    let kept: Vec<&ImagePlane> = per.iter().filter(|(o, _)| o.admitted).map(|(_, p)| p).collect();
    if kept.is_empty() {
        return Err(Error::NoConsensus(format!(
            "no frame of '{}' registers onto the reference above PCE {pce_threshold}",
            frames.source_id()
        )));
    }
    let mut fp = Fingerprint::new(mean_planes(&kept)?, Domain::Video, Provenance::Oracle, kept.len(), residual.id());
    fp.metadata.insert("pce_threshold".into(), format!("{pce_threshold:?}"));
    Ok((fp, per.into_iter().map(|(o, _)| o).collect()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RhoCurve {
    /// `(admitted frames, ncc)` per snapshot.
    pub points: Vec<(usize, f64)>,
    pub registration: Registration,
}

impl RhoCurve {
    /// True when no step drops by more than `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.points.windows(2).all(|w| w[1].1 >= w[0].1 - slack)
    }

    pub fn last(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.1)
    }
}

/// NCC between `k_iv` and every aggregation snapshot, after registering the
/// final aggregate onto `k_iv` once and applying that warp to all snapshots.
pub fn rho_curve(k_iv: &Fingerprint, state: &AggregationState, ranges: &SearchRanges, cfg: &SwarmConfig) -> Result<RhoCurve> {
    let snaps = state
        .snapshots
        .as_ref()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Input("aggregation ran without snapshots".into()))?;
    let last = snaps.last().expect("non-empty");
    let registration = register_onto(&k_iv.plane, last, None, ranges, cfg)?;
    let points = snaps
        .par_iter()
        .enumerate()
        .map(|(i, s)| Ok((i + 1, ncc(&k_iv.plane, &warp_same(s, &registration.params)?)?)))
        .collect::<Result<_>>()?;
    Ok(RhoCurve { points, registration })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Denoiser;

    fn flat_set(n: usize, level: f64) -> FrameSet {
        FrameSet::from_sequence(vec![ImagePlane::filled(16, 16, level); n], "flat").unwrap()
    }

    #[test]
    fn constant_frames_give_zero_fingerprint() {
        let fp = estimate_prnu_from_images(&flat_set(3, 100.0), &ResidualConfig::default()).unwrap();
        assert!(fp.plane.data().iter().all(|&v| v == 0.0));
        assert_eq!(fp.frames_used, 3);
        assert_eq!(fp.domain, Domain::Image);
        assert_eq!(fp.metadata["zero_denominators"], "0");
    }

    #[test]
    fn single_frame_is_residual_over_intensity() {
        let img = ImagePlane::from_fn(16, 16, |r, c| 50.0 + ((r * 7 + c * 13) % 11) as f64);
        let set = FrameSet::from_sequence(vec![img.clone()], "one").unwrap();
        let cfg = ResidualConfig::default();
        let fp = estimate_prnu_from_images(&set, &cfg).unwrap();
        let w = cfg.extract(&img);
        for i in 0..img.len() {
            let expect = w.data()[i] * img.data()[i] / (img.data()[i] * img.data()[i]);
            assert!((fp.plane.data()[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_denominators_are_guarded_and_counted() {
        let fp = baseline_fingerprint(&flat_set(2, 0.0), &ResidualConfig::default()).unwrap();
        assert_eq!(fp.metadata["zero_denominators"], "256");
        assert!(fp.plane.is_finite());
        assert_eq!(fp.provenance, Provenance::Baseline);
    }

    #[test]
    fn empty_set_is_rejected() {
        // FrameSet itself refuses to be empty
        assert!(FrameSet::from_sequence(vec![], "none").is_err());
    }

    #[test]
    fn prnf_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.prnf");
        let mut fp = Fingerprint::new(
            ImagePlane::from_fn(9, 13, |r, c| (r as f64 - c as f64) * 1e-3),
            Domain::Video,
            Provenance::Images,
            7,
            Denoiser::wiener().id(),
        );
        fp.params = Some(SimilarityParams::new(0.75, 0.0, 270.0, 374.0).unwrap());
        fp.metadata.insert("delta".into(), "10".into());
        fp.save(&path).unwrap();
        let back = Fingerprint::load(&path).unwrap();
        assert_eq!(back, fp.clone().quantized());
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 2);
    }

    #[test]
    fn prnf_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.prnf");
        fs::write(&path, b"PRNX\x01\x00").unwrap();
        assert!(matches!(Fingerprint::load(&path), Err(Error::Format { .. })));
        assert!(matches!(Fingerprint::load(dir.path().join("missing")), Err(Error::Io { .. })));
    }

    #[test]
    fn failed_save_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("no_such_dir").join("k.prnf");
        let fp = Fingerprint::new(ImagePlane::zeros(8, 8), Domain::Video, Provenance::Images, 1, "x");
        assert!(fp.save(&path).is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn identity_conversion_leaves_plane_unchanged() {
        let k = Fingerprint::new(
            ImagePlane::from_fn(32, 32, |r, c| ((r * 31 + c * 17) % 7) as f64),
            Domain::Image,
            Provenance::Images,
            1,
            "x",
        );
        let kiv = convert_image_fingerprint(&k, &SimilarityParams::identity(), (32, 32)).unwrap();
        assert_eq!(kiv.plane, k.plane);
        assert_eq!(kiv.domain, Domain::Video);
        assert!(convert_image_fingerprint(&kiv, &SimilarityParams::identity(), (32, 32)).is_err());
    }

    #[test]
    fn rho_requires_snapshots() {
        let state = AggregationState {
            reference_index: 2,
            member_indices: vec![2],
            shift_log: vec![(0, 0)],
            admitted_at: vec![0],
            iterations: 0,
            delta: 10,
            degenerate: true,
            snapshots: None,
        };
        let k = Fingerprint::new(ImagePlane::zeros(16, 16), Domain::Video, Provenance::Images, 1, "x");
        assert!(matches!(
            rho_curve(&k, &state, &SearchRanges::query(), &SwarmConfig::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn monotone_check_uses_slack() {
        let reg = Registration {
            params: SimilarityParams::identity(),
            report: PceReport {
                pce: 0.0,
                signed_pce: 0.0,
                peak_shift: (0, 0),
                peak_value: 0.0,
                offpeak_energy: 1.0,
                neighborhood: 121,
            },
            evaluations: 0,
        };
        let c = RhoCurve {
            points: vec![(1, 0.1), (2, 0.2), (3, 0.195), (4, 0.3)],
            registration: reg,
        };
        assert!(c.is_monotone(0.01));
        assert!(!c.is_monotone(0.001));
    }
}
