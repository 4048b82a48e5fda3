//! Query tests: is this video from the camera behind a fingerprint?

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::{pce, PceReport};
use crate::error::{Error, Result};
use crate::fingerprint::{Domain, Fingerprint};
use crate::geometry::{SearchRanges, SimilarityParams};
use crate::imaging::{FrameSet, ResidualConfig};
use crate::optimizer::SwarmConfig;
use crate::plane::ImagePlane;
use crate::registration::{frame_seed, register_onto, Registration};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Full similarity search per frame.
    Complete,
    /// Translation only, read off the PCE peak.
    Quick,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub index: usize,
    pub p_f: f64,
    pub params: Option<SimilarityParams>,
    pub peak_shift: (isize, isize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub strategy: Strategy,
    pub fingerprint_id: String,
    pub p_q: f64,
    pub per_frame: Vec<FrameScore>,
}

impl QueryResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("query result serializes")
    }

    fn from_scores(strategy: Strategy, k: &Fingerprint, per_frame: Vec<FrameScore>) -> Self {
        let p_q = per_frame.iter().map(|f| f.p_f).fold(f64::NEG_INFINITY, f64::max);
        Self {
            strategy,
            fingerprint_id: k.label.clone(),
            p_q,
            per_frame,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Attributed,
    Rejected,
}

/// `PCE(W, I * K)` for one frame.
pub fn test_frame_quick(k: &ImagePlane, frame: &ImagePlane, residual: &ResidualConfig) -> Result<PceReport> {
    let w = residual.extract(frame);
    pce(&w, &frame.mul(k)?)
}

/// `max PCE(T(W), T(I) * K)` over similarities `T`; the frame moves, the
/// fingerprint stays put. The residual is extracted before warping.
pub fn test_frame_complete(
    k: &ImagePlane,
    frame: &ImagePlane,
    ranges: &SearchRanges,
    cfg: &SwarmConfig,
    residual: &ResidualConfig,
) -> Result<Registration> {
    let w = residual.extract(frame);
    register_onto(k, &w, Some(frame), ranges, cfg)
}

fn check_query(k: &Fingerprint, frames: &FrameSet) -> Result<()> {
    frames.require_first_frame_excluded()?;
    k.require_domain(Domain::Video)?;
    k.plane.same_dims(&frames.frames()[0])
}

pub fn test_query_quick(k: &Fingerprint, frames: &FrameSet, residual: &ResidualConfig) -> Result<QueryResult> {
    check_query(k, frames)?;
    let per_frame = frames
        .frames()
        .par_iter()
        .zip(frames.indices().par_iter())
        .map(|(f, &index)| {
            let r = test_frame_quick(&k.plane, f, residual)?;
            Ok(FrameScore {
                index,
                p_f: r.pce,
                params: None,
                peak_shift: r.peak_shift,
            })
        })
        .collect::<Result<_>>()?;
    Ok(QueryResult::from_scores(Strategy::Quick, k, per_frame))
}

/// Every frame gets its own swarm seed derived from `cfg.seed` and the
/// frame index, so a frame scores the same whatever else is in the query.
pub fn test_query_complete(
    k: &Fingerprint,
    frames: &FrameSet,
    ranges: &SearchRanges,
    cfg: &SwarmConfig,
    residual: &ResidualConfig,
) -> Result<QueryResult> {
    check_query(k, frames)?;
    ranges.validate()?;
    cfg.validate()?;
    let per_frame = frames
        .frames()
        .par_iter()
        .zip(frames.indices().par_iter())
        .map(|(f, &index)| {
            let reg = test_frame_complete(&k.plane, f, ranges, &cfg.with_seed(frame_seed(cfg.seed, index)), residual)?;
            Ok(FrameScore {
                index,
                p_f: reg.report.pce,
                params: Some(reg.params),
                peak_shift: reg.report.peak_shift,
            })
        })
        .collect::<Result<_>>()?;
    Ok(QueryResult::from_scores(Strategy::Complete, k, per_frame))
}

/// Attributed iff `p_q` strictly exceeds `threshold`.
pub fn decide(result: &QueryResult, threshold: f64) -> Result<Decision> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::Parameter(format!("threshold {threshold} must be positive")));
    }
    Ok(if result.p_q > threshold {
        Decision::Attributed
    } else {
        Decision::Rejected
    })
}
