//! Histogram filter over map viewpoints.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};
use crate::world::{Pose, Topology, World};

pub const DEFAULT_MARGIN: f64 = 0.1;

/// Score gaps within this distance of the margin count as equal to it, so
/// decimal boundaries such as `0.4 - 0.3` stay on the non-firing side.
pub const MARGIN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeliefConfig {
    /// Likelihood floor for places missing from a retrieval.
    pub epsilon: f64,
    /// Mass moved to the two neighbours on every motion update, split evenly.
    pub diffusion: f64,
}

impl Default for BeliefConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            diffusion: 0.5,
        }
    }
}

impl BeliefConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(ConfigError::new("epsilon", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.diffusion) {
            return Err(ConfigError::new("diffusion", "must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    scores: Vec<f64>,
}

impl BeliefState {
    pub fn uniform(n: usize) -> Self {
        Self {
            scores: vec![1.0 / n as f64; n],
        }
    }

    /// Wrap raw scores; they are renormalized to sum 1.
    pub fn from_scores(scores: Vec<f64>) -> Result<Self> {
        let mut b = Self { scores };
        b.normalize()?;
        Ok(b)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn normalize(&mut self) -> Result<()> {
        if self.scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Invariant("belief score negative or non-finite".into()));
        }
        let total: f64 = self.scores.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Invariant("belief mass vanished".into()));
        }
        for s in &mut self.scores {
            *s /= total;
        }
        Ok(())
    }

    /// Odometry update: shift by the commanded number of viewpoints, then
    /// blur with a `(d/2, 1-d, d/2)` kernel. Total mass is preserved.
    pub fn shift(&mut self, commanded_step: f64, spacing: f64, topology: Topology, diffusion: f64) {
        let n = self.scores.len();
        if n == 0 {
            return;
        }
        let cells = (commanded_step / spacing).round() as i64;
        let place = |i: i64| -> usize {
            match topology {
                Topology::Loop => i.rem_euclid(n as i64) as usize,
                Topology::Linear => i.clamp(0, n as i64 - 1) as usize,
            }
        };
        let side = diffusion / 2.0;
        let center = 1.0 - diffusion;
        let mut out = vec![0.0; n];
        for (i, &mass) in self.scores.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let target = i as i64 + cells;
            if diffusion == 0.0 {
                out[place(target)] += mass;
            } else {
                out[place(target - 1)] += side * mass;
                out[place(target)] += center * mass;
                out[place(target + 1)] += side * mass;
            }
        }
        self.scores = out;
    }

    /// Measurement update: weight retrieved places by `epsilon + similarity`
    /// and every other place by `epsilon`, then renormalize.
    pub fn measure(&mut self, retrieval: &[(u32, f64)], epsilon: f64) -> Result<()> {
        if retrieval.is_empty() {
            return Ok(());
        }
        let mut factor = vec![epsilon; self.scores.len()];
        for &(place, sim) in retrieval {
            if !(0.0..=1.0).contains(&sim) {
                return Err(Error::OutOfRange {
                    what: "similarity",
                    value: sim,
                });
            }
            let slot = factor.get_mut(place as usize).ok_or_else(|| {
                Error::Invariant(format!("retrieved place {place} outside belief"))
            })?;
            *slot = epsilon + sim;
        }
        for (s, f) in self.scores.iter_mut().zip(factor) {
            *s *= f;
        }
        self.normalize()
    }

    /// Highest-scoring viewpoint; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &s) in self.scores.iter().enumerate() {
            if s > self.scores[best] {
                best = i;
            }
        }
        best
    }

    pub fn top_two(&self) -> (f64, f64) {
        let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &s in &self.scores {
            if s > a {
                b = a;
                a = s;
            } else if s > b {
                b = s;
            }
        }
        (a, b)
    }

    /// The `n` best `(viewpoint, score)` pairs.
    pub fn top(&self, n: usize) -> Vec<(usize, f64)> {
        let mut idx: Vec<(usize, f64)> = self.scores.iter().copied().enumerate().collect();
        idx.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        idx.truncate(n);
        idx
    }

    /// 1 + number of viewpoints scoring strictly above `viewpoint`.
    pub fn rank_of(&self, viewpoint: usize) -> usize {
        let own = self.scores[viewpoint];
        1 + self.scores.iter().filter(|&&s| s > own).count()
    }
}

/// Motion then measurement, as one filter step.
pub fn update_belief(
    belief: &BeliefState,
    retrieval: &[(u32, f64)],
    commanded_step: f64,
    spacing: f64,
    topology: Topology,
    cfg: &BeliefConfig,
) -> Result<BeliefState> {
    let mut next = belief.clone();
    next.shift(commanded_step, spacing, topology, cfg.diffusion);
    next.measure(retrieval, cfg.epsilon)?;
    Ok(next)
}

/// True iff the best score beats the runner-up by strictly more than `margin`
/// (beyond [`MARGIN_TOLERANCE`]).
pub fn should_terminate(belief: &BeliefState, margin: f64) -> Result<bool, ConfigError> {
    if belief.len() < 2 {
        return Err(ConfigError::new(
            "viewpoints",
            "margin test needs at least two viewpoints",
        ));
    }
    let (a, b) = belief.top_two();
    Ok(a - b - margin > MARGIN_TOLERANCE)
}

pub fn ground_truth_rank(belief: &BeliefState, world: &World, true_pose: Pose) -> usize {
    belief.rank_of(world.nearest_viewpoint(true_pose.position))
}
