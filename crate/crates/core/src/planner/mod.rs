//! Next-best-view planning.
//!
//! The learned planner is tabular Q-learning over the quantized landmark
//! code plus a clipped count of iterations since the last detection. Actions
//! are forward step sizes. Behaviour during training samples actions with
//! probability proportional to `exp(Q / T)`; evaluation is greedy.

mod constants;
pub mod mdp;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detector::CodewordId;
use crate::error::{ConfigError, FormatError};
use crate::rng::Stream;

pub use constants::{learn_constants, StepConstants};
pub use train::{train, TrainConfig, TrainOutcome};

pub const HISTORY_BINS: usize = 8;
pub const DEFAULT_ACTIONS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

/// Ordered forward step sizes, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionSet(Vec<f64>);

impl ActionSet {
    pub fn new(steps: Vec<f64>) -> Result<Self, ConfigError> {
        if steps.is_empty() {
            return Err(ConfigError::new("actions", "at least one step size required"));
        }
        if steps.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(ConfigError::new("actions", "step sizes must be positive"));
        }
        if steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::new("actions", "step sizes must be strictly increasing"));
        }
        Ok(Self(steps))
    }

    pub fn steps(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn step(&self, action: usize) -> f64 {
        self.0[action]
    }

    pub fn max_step(&self) -> f64 {
        *self.0.last().expect("nonempty action set")
    }
}

impl Default for ActionSet {
    fn default() -> Self {
        Self(DEFAULT_ACTIONS.to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PlannerState {
    pub code: CodewordId,
    /// Iterations since the last landmark detection, clipped to `HISTORY_BINS - 1`.
    pub steps_since_detection: usize,
}

impl PlannerState {
    pub fn new(code: CodewordId, steps_since_detection: usize) -> Self {
        Self {
            code,
            steps_since_detection: steps_since_detection.min(HISTORY_BINS - 1),
        }
    }

    /// Counter after an iteration with (`true`) or without a detection.
    pub fn next_counter(&self, detected: bool) -> usize {
        if detected {
            0
        } else {
            (self.steps_since_detection + 1).min(HISTORY_BINS - 1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QHyper {
    pub alpha: f64,
    pub gamma: f64,
    pub temperature: f64,
}

impl Default for QHyper {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.9,
            temperature: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub terminal: bool,
}

/// Dense `states x actions` value table, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QFunction {
    n_states: usize,
    n_actions: usize,
    table: Vec<f64>,
    pub hyper: QHyper,
}

impl QFunction {
    pub fn zeros(n_states: usize, n_actions: usize, hyper: QHyper) -> Self {
        Self {
            n_states,
            n_actions,
            table: vec![0.0; n_states * n_actions],
            hyper,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.table[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.table[state * self.n_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.table[state * self.n_actions + action] = value;
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action; ties go to the lowest index.
    pub fn greedy(&self, state: usize) -> usize {
        let row = self.row(state);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    /// One Q-learning backup on the transition's cell.
    pub fn td_update(&mut self, t: &Transition) {
        let bootstrap = if t.terminal {
            0.0
        } else {
            self.hyper.gamma * self.max_value(t.next_state)
        };
        let q = self.get(t.state, t.action);
        self.set(t.state, t.action, q + self.hyper.alpha * (t.reward + bootstrap - q));
    }
}

/// Index of a planner state in a table with `HISTORY_BINS` counter bins.
pub fn state_index(s: &PlannerState) -> usize {
    s.code.0 * HISTORY_BINS + s.steps_since_detection
}

/// Boltzmann probabilities `exp(q/T) / sum exp(q/T)`, shifted by the row max.
pub fn softmax_probabilities(row: &[f64], temperature: f64) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = row.iter().map(|q| ((q - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

pub fn select_action(row: &[f64], temperature: f64, rng: &mut Stream) -> usize {
    let probs = softmax_probabilities(row, temperature);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    probs.len() - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub detection: f64,
    /// Travel penalty weight; a maximal step costs exactly this much.
    pub travel_penalty: f64,
    pub terminal: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            detection: 1.0,
            travel_penalty: 0.1,
            terminal: 5.0,
        }
    }
}

/// How an iteration ended, as far as the reward is concerned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSignal {
    pub true_positive: bool,
    pub commanded_step: f64,
    /// `Some(rank == 1)` on the iteration that terminated the episode.
    pub terminated_correct: Option<bool>,
}

pub fn compute_reward(cfg: &RewardConfig, signal: &StepSignal, max_step: f64) -> f64 {
    let mut r = -cfg.travel_penalty * signal.commanded_step / max_step;
    if signal.true_positive {
        r += cfg.detection;
    }
    match signal.terminated_correct {
        Some(true) => r += cfg.terminal,
        Some(false) => r -= cfg.terminal,
        None => {}
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Learned,
    Heuristics,
    ConstantWithView,
    ConstantWithoutView,
    ConstantAll,
    Oracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Learned,
        PolicyKind::Heuristics,
        PolicyKind::ConstantWithView,
        PolicyKind::ConstantWithoutView,
        PolicyKind::ConstantAll,
        PolicyKind::Oracle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Learned => "learned",
            PolicyKind::Heuristics => "heuristics",
            PolicyKind::ConstantWithView => "constant_with_view",
            PolicyKind::ConstantWithoutView => "constant_without_view",
            PolicyKind::ConstantAll => "constant_all",
            PolicyKind::Oracle => "oracle",
        }
    }

    /// Human-readable legend label.
    pub fn label(&self) -> &'static str {
        match self {
            PolicyKind::Learned => "Learned",
            PolicyKind::Heuristics => "Heuristics",
            PolicyKind::ConstantWithView => "Constant (w/ view)",
            PolicyKind::ConstantWithoutView => "Constant (w/o view)",
            PolicyKind::ConstantAll => "Constant (all)",
            PolicyKind::Oracle => "Oracle",
        }
    }

    /// Step emitted by the non-learned, non-oracle baselines.
    pub fn baseline_step(&self, constants: &StepConstants, landmark_view: bool) -> Option<f64> {
        match self {
            PolicyKind::Heuristics if landmark_view => Some(constants.c_short),
            PolicyKind::Heuristics => Some(constants.c_long),
            PolicyKind::ConstantWithView => Some(constants.c_short),
            PolicyKind::ConstantWithoutView => Some(constants.c_long),
            PolicyKind::ConstantAll => Some(constants.c_all),
            PolicyKind::Learned | PolicyKind::Oracle => None,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ConfigError::new("policies", format!("unknown policy `{s}`")))
    }
}

/// A trained planner as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerModel {
    pub actions: ActionSet,
    pub k_codebook: usize,
    pub q: QFunction,
    pub constants: StepConstants,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlannerFile {
    actions: Vec<f64>,
    k_codebook: usize,
    history_bins: usize,
    alpha: f64,
    gamma: f64,
    temperature: f64,
    table: Vec<f64>,
    #[serde(rename = "C_short")]
    c_short: f64,
    #[serde(rename = "C_long")]
    c_long: f64,
    #[serde(rename = "C_all")]
    c_all: f64,
}

impl PlannerModel {
    pub fn zeros(actions: ActionSet, k_codebook: usize, hyper: QHyper, constants: StepConstants) -> Self {
        let q = QFunction::zeros(k_codebook * HISTORY_BINS, actions.len(), hyper);
        Self {
            actions,
            k_codebook,
            q,
            constants,
        }
    }

    pub fn to_json(&self) -> String {
        let file = PlannerFile {
            actions: self.actions.steps().to_vec(),
            k_codebook: self.k_codebook,
            history_bins: HISTORY_BINS,
            alpha: self.q.hyper.alpha,
            gamma: self.q.hyper.gamma,
            temperature: self.q.hyper.temperature,
            table: self.q.table.clone(),
            c_short: self.constants.c_short,
            c_long: self.constants.c_long,
            c_all: self.constants.c_all,
        };
        serde_json::to_string_pretty(&file).expect("planner serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let f: PlannerFile = serde_json::from_str(text)?;
        let actions =
            ActionSet::new(f.actions).map_err(|e| FormatError::invalid("planner", e.to_string()))?;
        if f.history_bins != HISTORY_BINS {
            return Err(FormatError::invalid(
                "planner",
                format!("history_bins must be {HISTORY_BINS}, got {}", f.history_bins),
            ));
        }
        if f.k_codebook == 0 {
            return Err(FormatError::invalid("planner", "k_codebook is zero"));
        }
        let expected = f
            .k_codebook
            .checked_mul(HISTORY_BINS * actions.len())
            .ok_or_else(|| FormatError::invalid("planner", "table dimensions overflow"))?;
        if f.table.len() != expected {
            return Err(FormatError::invalid(
                "planner",
                format!("table has {} entries, expected {expected}", f.table.len()),
            ));
        }
        if f.table.iter().any(|v| !v.is_finite()) {
            return Err(FormatError::invalid("planner", "non-finite Q value"));
        }
        let constants = StepConstants {
            c_short: f.c_short,
            c_long: f.c_long,
            c_all: f.c_all,
        };
        constants
            .validate()
            .map_err(|e| FormatError::invalid("planner", e.to_string()))?;
        Ok(Self {
            q: QFunction {
                n_states: f.k_codebook * HISTORY_BINS,
                n_actions: actions.len(),
                table: f.table,
                hyper: QHyper {
                    alpha: f.alpha,
                    gamma: f.gamma,
                    temperature: f.temperature,
                },
            },
            actions,
            k_codebook: f.k_codebook,
            constants,
        })
    }
}
