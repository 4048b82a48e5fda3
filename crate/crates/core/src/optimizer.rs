//! Bounded black-box maximization with a global-best particle swarm.

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Interval;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    /// Number of iterations the improvement is measured over.
    pub window: usize,
    /// Minimum relative gain of the running best over `window` iterations.
    pub min_rel_gain: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwarmConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
    pub early_stop: Option<EarlyStop>,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            particles: 24,
            iterations: 40,
            inertia: 0.729,
            cognitive: 1.494,
            social: 1.494,
            seed: 0,
            early_stop: Some(EarlyStop {
                window: 10,
                min_rel_gain: 1e-4,
            }),
        }
    }
}

impl SwarmConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles < 4 {
            return Err(Error::Parameter("swarm needs at least 4 particles".into()));
        }
        if self.iterations < 1 {
            return Err(Error::Parameter("swarm needs at least 1 iteration".into()));
        }
        if !(0.0..=1.0).contains(&self.inertia) {
            return Err(Error::Parameter(format!("inertia {} outside [0, 1]", self.inertia)));
        }
        if !(self.cognitive >= 0.0 && self.social >= 0.0) {
            return Err(Error::Parameter("acceleration constants must be >= 0".into()));
        }
        if let Some(es) = self.early_stop {
            if es.window == 0 || !(es.min_rel_gain >= 0.0) {
                return Err(Error::Parameter("invalid early-stop settings".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationResult {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    /// Running best after initialization and after every iteration.
    pub trace: Vec<f64>,
}

/// Maximizes `objective` over the box `bounds`.
///
/// Particles start on a Latin hypercube; when `neutral` is given, particle 0
/// is pinned there (clamped into the box). Evaluations within an iteration
/// run in parallel, but every random draw and every reduction happens in
/// particle order, so the result only depends on `cfg.seed`.
pub fn maximize<F>(
    objective: F,
    bounds: &[Interval],
    neutral: Option<&[f64]>,
    cfg: &SwarmConfig,
) -> Result<OptimizationResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    if bounds.is_empty() {
        return Err(Error::Parameter("no search dimensions".into()));
    }
    for b in bounds {
        if !(b.lo <= b.hi) || !b.lo.is_finite() || !b.hi.is_finite() {
            return Err(Error::Parameter(format!("bad bounds [{}, {}]", b.lo, b.hi)));
        }
    }
    if let Some(n) = neutral {
        if n.len() != bounds.len() {
            return Err(Error::Parameter("neutral point has wrong dimension".into()));
        }
    }

    let dim = bounds.len();
    let np = cfg.particles;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vmax: Vec<f64> = bounds.iter().map(|b| 0.5 * (b.hi - b.lo)).collect();

    let mut pos = vec![vec![0.0; dim]; np];
    for (d, b) in bounds.iter().enumerate() {
        let mut strata: Vec<usize> = (0..np).collect();
        strata.shuffle(&mut rng);
        for (i, p) in pos.iter_mut().enumerate() {
            let u: f64 = rng.random();
            p[d] = b.lo + (strata[i] as f64 + u) / np as f64 * (b.hi - b.lo);
        }
    }
    if let Some(n) = neutral {
        for (d, b) in bounds.iter().enumerate() {
            pos[0][d] = b.clamp(n[d]);
        }
    }
    let mut vel: Vec<Vec<f64>> = (0..np)
        .map(|_| {
            (0..dim)
                .map(|d| 0.1 * vmax[d] * rng.random_range(-1.0..=1.0))
                .collect()
        })
        .collect();

    let eval_all = |pos: &[Vec<f64>]| -> Result<Vec<f64>> {
        let vals: Vec<f64> = pos.par_iter().map(|p| objective(p)).collect();
        if let Some(k) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::Objective {
                point: pos[k].clone(),
                value: vals[k],
            });
        }
        Ok(vals)
    };

    let mut vals = eval_all(&pos)?;
    let mut evaluations = np;
    let mut pbest = pos.clone();
    let mut pbest_val = vals.clone();
    let mut g = 0;
    for i in 1..np {
        if pbest_val[i] > pbest_val[g] {
            g = i;
        }
    }
    let mut gbest = pbest[g].clone();
    let mut gbest_val = pbest_val[g];
    let mut trace = vec![gbest_val];

    for _ in 0..cfg.iterations {
        for i in 0..np {
            for d in 0..dim {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = cfg.inertia * vel[i][d]
                    + cfg.cognitive * r1 * (pbest[i][d] - pos[i][d])
                    + cfg.social * r2 * (gbest[d] - pos[i][d]);
                vel[i][d] = v.clamp(-vmax[d], vmax[d]);
                pos[i][d] = bounds[d].clamp(pos[i][d] + vel[i][d]);
            }
        }
        vals = eval_all(&pos)?;
        evaluations += np;
        for i in 0..np {
            if vals[i] > pbest_val[i] {
                pbest_val[i] = vals[i];
                pbest[i].clone_from(&pos[i]);
            }
        }
        for i in 0..np {
            if pbest_val[i] > gbest_val {
                gbest_val = pbest_val[i];
                gbest.clone_from(&pbest[i]);
            }
        }
        trace.push(gbest_val);

        if let Some(es) = cfg.early_stop {
            if trace.len() > es.window {
                let old = trace[trace.len() - 1 - es.window];
                let gain = gbest_val - old;
                if gain <= es.min_rel_gain * old.abs() {
                    break;
                }
            }
        }
    }

    Ok(OptimizationResult {
        best_point: gbest,
        best_value: gbest_val,
        evaluations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl(x: &[f64]) -> f64 {
        -((x[0] - 0.3).powi(2) + (x[1] - 0.7).powi(2))
    }

    fn unit_box() -> Vec<Interval> {
        vec![Interval::new(0.0, 1.0), Interval::new(0.0, 1.0)]
    }

    #[test]
    fn finds_analytic_optimum() {
        let cfg = SwarmConfig {
            particles: 30,
            iterations: 50,
            early_stop: None,
            ..SwarmConfig::default()
        };
        let r = maximize(bowl, &unit_box(), None, &cfg).unwrap();
        assert!((r.best_point[0] - 0.3).abs() < 1e-3);
        assert!((r.best_point[1] - 0.7).abs() < 1e-3);
        assert_eq!(r.best_value, bowl(&r.best_point));
        assert_eq!(r.evaluations, 30 * 51);
    }

    #[test]
    fn flat_landscape() {
        let r = maximize(|_| 5.0, &[Interval::new(-2.0, 3.0)], None, &SwarmConfig::default()).unwrap();
        assert_eq!(r.best_value, 5.0);
        assert!((-2.0..=3.0).contains(&r.best_point[0]));
        // no gain at all: stops after the first early-stop window
        assert_eq!(r.trace.len(), 11);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let cfg = SwarmConfig::default().with_seed(77);
        let a = maximize(bowl, &unit_box(), Some(&[0.5, 0.5]), &cfg).unwrap();
        let b = maximize(bowl, &unit_box(), Some(&[0.5, 0.5]), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn neutral_point_is_evaluated() {
        // needle at the neutral point, zero elsewhere
        let f = |x: &[f64]| if x[0] == 1.0 && x[1] == 0.0 { 10.0 } else { 0.0 };
        let bounds = vec![Interval::new(0.99, 1.01), Interval::new(-0.15, 0.15)];
        let r = maximize(f, &bounds, Some(&[1.0, 0.0]), &SwarmConfig::default()).unwrap();
        assert_eq!(r.best_value, 10.0);
        assert_eq!(r.best_point, vec![1.0, 0.0]);
    }

    #[test]
    fn degenerate_dimension_stays_fixed() {
        let bounds = vec![Interval::new(0.0, 1.0), Interval::point(0.0)];
        let r = maximize(|x| -(x[0] - 0.4).powi(2) - x[1].abs(), &bounds, None, &SwarmConfig::default()).unwrap();
        assert_eq!(r.best_point[1], 0.0);
        assert!((r.best_point[0] - 0.4).abs() < 1e-2);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let err = maximize(|x| if x[0] > 0.5 { f64::NAN } else { 0.0 }, &[Interval::new(0.0, 1.0)], None, &SwarmConfig::default());
        match err {
            Err(Error::Objective { point, .. }) => assert!(point[0] > 0.5),
            other => panic!("expected objective error, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let bad = SwarmConfig {
            particles: 3,
            ..SwarmConfig::default()
        };
        assert!(maximize(bowl, &unit_box(), None, &bad).is_err());
        let bad = SwarmConfig {
            inertia: 1.5,
            ..SwarmConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(maximize(bowl, &[Interval::new(1.0, 0.0), Interval::new(0.0, 1.0)], None, &SwarmConfig::default()).is_err());
    }
}
