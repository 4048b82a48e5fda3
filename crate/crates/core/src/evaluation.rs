//! ROC curves, AUC, TPR at a fixed FPR, and seeded experiment runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{test_query_complete, test_query_quick, Strategy};
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::geometry::SearchRanges;
use crate::imaging::{FrameSet, ResidualConfig};
use crate::optimizer::SwarmConfig;
use crate::registration::frame_seed;

pub const AVERAGING_GRID_POINTS: usize = 1001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub score: f64,
    pub label: Label,
    pub query_id: String,
    /// Camera whose fingerprint produced the score.
    pub camera_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    /// Score cutoff of each point (`score >= t` is positive); the first is
    /// `+inf`.
    pub thresholds: Vec<f64>,
}

pub fn roc(scores: &[LabeledScore]) -> Result<RocCurve> {
    if let Some(s) = scores.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::Input(format!("score of '{}' is not finite", s.query_id)));
    }
    let pos = scores.iter().filter(|s| s.label == Label::Positive).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Class(format!("{pos} positives and {neg} negatives")));
    }
    let mut sorted: Vec<(f64, Label)> = scores.iter().map(|s| (s.score, s.label)).collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            match sorted[i].1 {
                Label::Positive => tp += 1,
                Label::Negative => fp += 1,
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        thresholds.push(t);
    }
    Ok(RocCurve { points, thresholds })
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    trapezoid(curve.points.iter().copied())
}

fn trapezoid(points: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut area = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for p in points {
        if let Some(q) = prev {
            area += (p.0 - q.0) * (p.1 + q.1) / 2.0;
        }
        prev = Some(p);
    }
    area
}

/// TPR at the largest curve FPR not above `target`; no interpolation.
pub fn tpr_at_fpr(curve: &RocCurve, target: f64) -> f64 {
    step_tpr(&curve.points, target)
}

fn step_tpr(points: &[(f64, f64)], target: f64) -> f64 {
    points
        .iter()
        .filter(|p| p.0 <= target)
        .map(|p| p.1)
        .fold(0.0, f64::max)
}

/// Mann-Whitney statistic `U / (n+ n-)`, ties counted as one half.
pub fn mann_whitney(scores: &[LabeledScore]) -> f64 {
    let pos: Vec<f64> = scores.iter().filter(|s| s.label == Label::Positive).map(|s| s.score).collect();
    let neg: Vec<f64> = scores.iter().filter(|s| s.label == Label::Negative).map(|s| s.score).collect();
    let mut u = 0.0;
    for p in &pos {
        for n in &neg {
            u += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    u / (pos.len() * neg.len()) as f64
}

/// Several curves resampled on a uniform FPR grid and averaged pointwise.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridCurve {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

impl GridCurve {
    pub fn auc(&self) -> f64 {
        trapezoid(self.fpr.iter().copied().zip(self.tpr.iter().copied()))
    }

    pub fn tpr_at_fpr(&self, target: f64) -> f64 {
        let pts: Vec<(f64, f64)> = self.fpr.iter().copied().zip(self.tpr.iter().copied()).collect();
        step_tpr(&pts, target)
    }
}

pub fn average_curves(curves: &[RocCurve]) -> Result<GridCurve> {
    if curves.is_empty() {
        return Err(Error::Input("no curves to average".into()));
    }
    let n = AVERAGING_GRID_POINTS;
    let fpr: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let tpr = fpr
        .iter()
        .map(|&x| curves.iter().map(|c| tpr_at_fpr(c, x)).sum::<f64>() / curves.len() as f64)
        .collect();
    Ok(GridCurve { fpr, tpr })
}

/// A reference fingerprint and the camera it stands for.
#[derive(Clone, Debug)]
pub struct CameraEntry {
    pub camera_id: String,
    pub fingerprint: Fingerprint,
}

#[derive(Clone, Debug)]
pub struct QueryEntry {
    pub query_id: String,
    /// Camera that actually recorded the query.
    pub camera_id: String,
    pub frames: FrameSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub strategy: Strategy,
    pub frames_per_query: usize,
    pub seed: u64,
    pub ranges: SearchRanges,
    pub swarm: SwarmConfig,
}

/// `count` frames drawn by a seeded shuffle (all when fewer are available).
/// For one seed, smaller counts give prefixes of larger ones.
pub fn sample_frames(frames: &FrameSet, count: usize, seed: u64) -> Result<FrameSet> {
    if count == 0 {
        return Err(Error::Parameter("frame count must be at least 1".into()));
    }
    let mut order: Vec<usize> = frames.indices().to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.truncate(count);
    frames.subset(&order)
}

fn stable_hash(s: &str) -> u64 {
    // FNV-1a, stable across runs and platforms
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Scores every camera against all of its own queries and an equal number of
/// foreign queries chosen by a seeded draw.
pub fn build_experiment(
    cameras: &[CameraEntry],
    queries: &[QueryEntry],
    cfg: &ExperimentConfig,
    residual: &ResidualConfig,
) -> Result<Vec<LabeledScore>> {
    if cfg.frames_per_query == 0 {
        return Err(Error::Parameter("frames_per_query must be at least 1".into()));
    }
    cfg.ranges.validate()?;
    cfg.swarm.validate()?;
    let mut jobs: Vec<(usize, usize, Label)> = Vec::new();
    for (ci, cam) in cameras.iter().enumerate() {
        let own: Vec<usize> = (0..queries.len()).filter(|&q| queries[q].camera_id == cam.camera_id).collect();
        let mut foreign: Vec<usize> = (0..queries.len()).filter(|&q| queries[q].camera_id != cam.camera_id).collect();
        if own.is_empty() || foreign.is_empty() {
            return Err(Error::Class(format!(
                "camera '{}' has {} own and {} foreign queries; both labels are needed",
                cam.camera_id,
                own.len(),
                foreign.len()
            )));
        }
        if foreign.len() < own.len() {
            return Err(Error::Sampling(format!(
                "camera '{}' has {} positives but only {} candidate negatives",
                cam.camera_id,
                own.len(),
                foreign.len()
            )));
        }
        foreign.shuffle(&mut ChaCha8Rng::seed_from_u64(frame_seed(cfg.seed ^ stable_hash(&cam.camera_id), ci)));
        foreign.truncate(own.len());
        foreign.sort_unstable();
        log::info!("camera '{}': negatives {:?}", cam.camera_id, foreign.iter().map(|&q| &queries[q].query_id).collect::<Vec<_>>());
        jobs.extend(own.into_iter().map(|q| (ci, q, Label::Positive)));
        jobs.extend(foreign.into_iter().map(|q| (ci, q, Label::Negative)));
    }
    let sampled: Vec<FrameSet> = queries
        .iter()
        .map(|q| sample_frames(&q.frames, cfg.frames_per_query, frame_seed(cfg.seed, stable_hash(&q.query_id) as usize)))
        .collect::<Result<_>>()?;
    jobs.par_iter()
        .map(|&(ci, qi, label)| {
            let k = &cameras[ci].fingerprint;
            let frames = &sampled[qi];
            let r = match cfg.strategy {
                Strategy::Quick => test_query_quick(k, frames, residual)?,
                Strategy::Complete => test_query_complete(k, frames, &cfg.ranges, &cfg.swarm, residual)?,
            };
            Ok(LabeledScore {
                score: r.p_q,
                label,
                query_id: queries[qi].query_id.clone(),
                camera_id: cameras[ci].camera_id.clone(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurveSummary {
    pub auc: f64,
    pub tpr_at_1pct_fpr: f64,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub per_camera: BTreeMap<String, CurveSummary>,
    /// Per-camera curves averaged on the FPR grid.
    pub averaged: CurveSummary,
}

/// Per-camera curves plus their grid average.
pub fn summarize(scores: &[LabeledScore]) -> Result<(ExperimentSummary, BTreeMap<String, RocCurve>, GridCurve)> {
    let mut by_cam: BTreeMap<String, Vec<LabeledScore>> = BTreeMap::new();
    for s in scores {
        by_cam.entry(s.camera_id.clone()).or_default().push(s.clone());
    }
    let mut per_camera = BTreeMap::new();
    let mut curves = BTreeMap::new();
    for (cam, list) in &by_cam {
        let c = roc(list)?;
        let pos = list.iter().filter(|s| s.label == Label::Positive).count();
        per_camera.insert(
            cam.clone(),
            CurveSummary {
                auc: auc(&c),
                tpr_at_1pct_fpr: tpr_at_fpr(&c, 0.01),
                positives: pos,
                negatives: list.len() - pos,
            },
        );
        curves.insert(cam.clone(), c);
    }
    let grid = average_curves(&curves.values().cloned().collect::<Vec<_>>())?;
    let pos = scores.iter().filter(|s| s.label == Label::Positive).count();
    let averaged = CurveSummary {
        auc: grid.auc(),
        tpr_at_1pct_fpr: grid.tpr_at_fpr(0.01),
        positives: pos,
        negatives: scores.len() - pos,
    };
    Ok((ExperimentSummary { per_camera, averaged }, curves, grid))
}

pub fn scores_csv(scores: &[LabeledScore]) -> String {
    let mut out = String::from("query_id,camera_id,label,score\n");
    for s in scores {
        let label = match s.label {
            Label::Positive => "positive",
            Label::Negative => "negative",
        };
        writeln!(out, "{},{},{},{:?}", s.query_id, s.camera_id, label, s.score).expect("string write");
    }
    out
}

pub fn curve_csv(curve: &RocCurve) -> String {
    let mut out = String::from("fpr,tpr,threshold\n");
    for (p, t) in curve.points.iter().zip(&curve.thresholds) {
        writeln!(out, "{:?},{:?},{}", p.0, p.1, if t.is_infinite() { "inf".to_string() } else { format!("{t:?}") })
            .expect("string write");
    }
    out
}

pub fn grid_csv(curve: &GridCurve) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (f, t) in curve.fpr.iter().zip(&curve.tpr) {
        writeln!(out, "{f:?},{t:?}").expect("string write");
    }
    out
}
