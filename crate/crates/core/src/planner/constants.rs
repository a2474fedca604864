use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detector::LandmarkDetector;
use crate::error::{ConfigError, Error, FormatError, Result};
use crate::rng;
use crate::world::{DomainView, Pose, World};

/// Step sizes used by the heuristic and constant baselines, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConstants {
    #[serde(rename = "C_short")]
    pub c_short: f64,
    #[serde(rename = "C_long")]
    pub c_long: f64,
    #[serde(rename = "C_all")]
    pub c_all: f64,
}

impl StepConstants {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, v) in [
            ("C_short", self.c_short),
            ("C_long", self.c_long),
            ("C_all", self.c_all),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::new(field, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("constants serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let c: StepConstants = serde_json::from_str(text)?;
        c.validate()
            .map_err(|e| FormatError::invalid("constants", e.to_string()))?;
        Ok(c)
    }
}

/// Pick, per training subset, the candidate step that most often lands on a
/// landmark view.
///
/// Viewpoints are split by whether their own view shows a detected landmark.
/// For each candidate step the success rate is averaged over `trials` noisy
/// moves from every viewpoint of the subset; the noise draws are shared
/// across candidates. Ties go to the smaller step.
pub fn learn_constants(
    world: &World,
    domain: &DomainView,
    detector: &LandmarkDetector,
    candidates: &[f64],
    trials: usize,
    seed: u64,
) -> Result<StepConstants> {
    if candidates.is_empty() {
        return Err(ConfigError::new("candidate_steps", "no candidates").into());
    }
    let trials = if world.config.motion_noise > 0.0 {
        trials.max(1)
    } else {
        1
    };
    let is_view = |position: f64| -> Result<bool> {
        let obs = domain.render(world, Pose::new(position));
        Ok(detector.detect(&obs)?.landmark_view)
    };

    let mut rng = rng::stream(seed);
    let mut with_view = Vec::new();
    let mut without_view = Vec::new();
    for (v, &position) in world.viewpoints.iter().enumerate() {
        if is_view(position)? {
            with_view.push(v);
        } else {
            without_view.push(v);
        }
    }
    // success[v][c] = fraction of trials from viewpoint v with candidate c landing on a view
    let mut success = vec![vec![0.0; candidates.len()]; world.n_viewpoints()];
    for (v, &position) in world.viewpoints.iter().enumerate() {
        for _ in 0..trials {
            let dd = if world.config.motion_noise > 0.0 {
                rng.random_range(-1.0..=1.0) * world.config.motion_noise
            } else {
                0.0
            };
            for (c, &step) in candidates.iter().enumerate() {
                let landing = world.move_with_noise(Pose::new(position), step, dd).pose;
                if is_view(landing.position)? {
                    success[v][c] += 1.0 / trials as f64;
                }
            }
        }
    }

    let best = |subset: &[usize], name: &'static str| -> Result<f64> {
        if subset.is_empty() {
            return Err(Error::EmptySubset(name));
        }
        let mut best = (0, f64::NEG_INFINITY);
        for c in 0..candidates.len() {
            let rate = subset.iter().map(|&v| success[v][c]).sum::<f64>() / subset.len() as f64;
            if rate > best.1 || (rate == best.1 && candidates[c] < candidates[best.0]) {
                best = (c, rate);
            }
        }
        Ok(candidates[best.0])
    };
    let all: Vec<usize> = (0..world.n_viewpoints()).collect();
    Ok(StepConstants {
        c_short: best(&with_view, "with-view")?,
        c_long: best(&without_view, "without-view")?,
        c_all: best(&all, "all")?,
    })
}
