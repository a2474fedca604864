//! The active localization episode: plan a step, move, detect landmarks,
//! and (only when a landmark is in view) match against the map and fold the
//! retrieval into the belief. Episodes end when the belief is confidently
//! peaked or after `max_iterations` planning stages.

mod belief;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detector::{Detection, LandmarkDetector};
use crate::error::{ConfigError, Error, Result};
use crate::planner::{
    compute_reward, state_index, ActionSet, PlannerState, PolicyKind, QFunction, RewardConfig,
    StepConstants, StepSignal, HISTORY_BINS,
};
use crate::replay::LookupTable;
use crate::rng::{self, Stream};
use crate::sbow::{self, SBoWIndex};
use crate::world::{DomainView, Observation, Pose, Topology, World};

pub use belief::{
    ground_truth_rank, should_terminate, update_belief, BeliefConfig, BeliefState, DEFAULT_MARGIN,
    MARGIN_TOLERANCE,
};

pub const DEFAULT_MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    pub margin: f64,
    pub max_iterations: usize,
    #[serde(default)]
    pub belief: BeliefConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            belief: BeliefConfig::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(ConfigError::new("margin", "must be >= 0"));
        }
        self.belief.validate()
    }
}

/// Source of retrieval results for the matching stage.
#[derive(Debug, Clone, Copy)]
pub enum Matcher<'a> {
    /// Anchor the live observation and query the index.
    Live { index: &'a SBoWIndex, k: usize },
    /// Replay precomputed results keyed by the nearest query viewpoint.
    Table(&'a LookupTable),
}

impl Matcher<'_> {
    pub fn retrieve(&self, obs: &Observation, viewpoint: usize) -> Result<Vec<(u32, f64)>> {
        match self {
            Matcher::Live { index, k } => {
                if !obs.has_poles() {
                    return Ok(Vec::new());
                }
                let terms = sbow::anchor(obs, index.bin_width())?;
                Ok(index.query(&terms, *k).ranked)
            }
            Matcher::Table(table) => table.lookup(viewpoint as u32),
        }
    }
}

/// Everything an episode reads; shared immutably between episodes.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeEnv<'a> {
    pub world: &'a World,
    /// Domain the live observations come from.
    pub domain: &'a DomainView,
    pub detector: &'a LandmarkDetector,
    pub matcher: Matcher<'a>,
    pub actions: &'a ActionSet,
    pub constants: StepConstants,
    pub rewards: RewardConfig,
    pub config: LoopConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub iterations: usize,
    pub travel_distance: f64,
    pub final_rank: usize,
    pub terminated: bool,
    pub true_viewpoint: usize,
    pub estimated_viewpoint: usize,
    /// Undiscounted sum of rewards.
    pub episode_return: f64,
}

/// One line of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub policy: PolicyKind,
    /// Commanded step, meters.
    pub action: f64,
    pub pose: f64,
    pub displacement: f64,
    /// Detection result the step was planned on.
    pub view_at_plan: bool,
    /// Detection result after the move.
    pub landmark_view: bool,
    /// Whether the matching stage (and belief measurement) ran.
    pub matched: bool,
    pub top3: Vec<(usize, f64)>,
}

/// What happened during one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub landmark_view: bool,
    pub true_positive: bool,
    pub matched: bool,
    pub terminated: bool,
    pub displacement: f64,
    pub reward: f64,
}

/// A running episode.
pub struct Episode<'e, 'a> {
    env: &'e EpisodeEnv<'a>,
    pose: Pose,
    belief: BeliefState,
    detection: Detection,
    state: PlannerState,
    iterations: usize,
    travel: f64,
    terminated: bool,
    episode_return: f64,
    rng: Stream,
}

impl<'e, 'a> Episode<'e, 'a> {
    pub fn start(env: &'e EpisodeEnv<'a>, start: Pose, rng: Stream) -> Result<Self> {
        let n = env.world.n_viewpoints();
        if n < 2 {
            return Err(ConfigError::new("viewpoints", "need at least two").into());
        }
        let obs = env.domain.render(env.world, start);
        let detection = env.detector.detect(&obs)?;
        let counter = if detection.landmark_view { 0 } else { HISTORY_BINS - 1 };
        Ok(Self {
            env,
            pose: start,
            belief: BeliefState::uniform(n),
            detection,
            state: PlannerState::new(detection.code, counter),
            iterations: 0,
            travel: 0.0,
            terminated: false,
            episode_return: 0.0,
            rng,
        })
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn belief(&self) -> &BeliefState {
        &self.belief
    }

    pub fn detection(&self) -> &Detection {
        &self.detection
    }

    pub fn state(&self) -> PlannerState {
        self.state
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn rng(&mut self) -> &mut Stream {
        &mut self.rng
    }

    pub fn current_rank(&self) -> usize {
        ground_truth_rank(&self.belief, self.env.world, self.pose)
    }

    /// Execute action, detection and matching for a commanded step.
    pub fn step(&mut self, commanded: f64) -> Result<StepReport> {
        let env = self.env;
        let world = env.world;
        self.iterations += 1;

        let motion = world.move_pose(self.pose, commanded, &mut self.rng);
        self.pose = motion.pose;
        self.travel += motion.displacement;

        let obs = env.domain.render(world, self.pose);
        let detection = env.detector.detect(&obs)?;
        let true_positive =
            detection.landmark_view && world.has_true_pole_in_range(self.pose.position);

        self.belief
            .shift(commanded, world.spacing(), world.topology(), env.config.belief.diffusion);
        if detection.landmark_view {
            let viewpoint = world.nearest_viewpoint(self.pose.position);
            let retrieval = env.matcher.retrieve(&obs, viewpoint)?;
            self.belief.measure(&retrieval, env.config.belief.epsilon)?;
        }
        self.terminated = should_terminate(&self.belief, env.config.margin)?;

        let terminated_correct = self.terminated.then(|| self.current_rank() == 1);
        let reward = compute_reward(
            &env.rewards,
            &StepSignal {
                true_positive,
                commanded_step: commanded,
                terminated_correct,
            },
            env.actions.max_step(),
        );
        self.episode_return += reward;
        self.state = PlannerState::new(detection.code, self.state.next_counter(detection.landmark_view));
        self.detection = detection;
        Ok(StepReport {
            landmark_view: detection.landmark_view,
            true_positive,
            matched: detection.landmark_view,
            terminated: self.terminated,
            displacement: motion.displacement,
            reward,
        })
    }

    pub fn result(&self) -> EpisodeResult {
        EpisodeResult {
            iterations: self.iterations,
            travel_distance: self.travel,
            final_rank: self.current_rank(),
            terminated: self.terminated,
            true_viewpoint: self.env.world.nearest_viewpoint(self.pose.position),
            estimated_viewpoint: self.belief.argmax(),
            episode_return: self.episode_return,
        }
    }
}

/// Uniform random start pose on the route.
pub fn random_start(world: &World, rng: &mut Stream) -> Pose {
    let length = world.route_length();
    let position = match world.topology() {
        Topology::Loop => rng.random_range(0.0..length),
        Topology::Linear => rng.random_range(0.0..=length),
    };
    Pose::new(position)
}

/// Ground-truth lookahead: among candidate steps whose noise-free landing
/// is a true landmark view, take the one whose landing view retrieves its own
/// place with the highest similarity (ties: smallest step). Without such a
/// candidate, take the largest step that does not overshoot the next true
/// landmark view ahead.
pub fn oracle_step(env: &EpisodeEnv<'_>, pose: Pose) -> Result<f64> {
    let world = env.world;
    let is_true_view = |position: f64| -> Result<bool> {
        let obs = env.domain.render(world, Pose::new(position));
        Ok(env.detector.detect(&obs)?.landmark_view && world.has_true_pole_in_range(position))
    };
    let mut best: Option<(f64, f64)> = None;
    for &step in env.actions.steps() {
        let landing = world.move_with_noise(pose, step, 0.0).pose;
        if !is_true_view(landing.position)? {
            continue;
        }
        let obs = env.domain.render(world, landing);
        let v = world.nearest_viewpoint(landing.position);
        let sim = env
            .matcher
            .retrieve(&obs, v)?
            .into_iter()
            .find(|&(place, _)| place as usize == v)
            .map_or(0.0, |(_, s)| s);
        if best.is_none_or(|(_, s)| sim > s) {
            best = Some((step, sim));
        }
    }
    if let Some((step, _)) = best {
        return Ok(step);
    }
    // distance to the next true landmark view, scanned at viewpoint spacing
    let spacing = world.spacing();
    let horizon = (world.route_length() / spacing).ceil() as usize;
    let next_view = (1..=horizon)
        .map(|i| i as f64 * spacing)
        .find_map(|d| match is_true_view(world.move_with_noise(pose, d, 0.0).pose.position) {
            Ok(true) => Some(Ok(d)),
            Ok(false) => None,
            Err(e) => Some(Err(e)),
        })
        .transpose()?;
    let steps = env.actions.steps();
    Ok(match next_view {
        Some(d) => steps
            .iter()
            .copied()
            .filter(|&s| s <= d)
            .next_back()
            .unwrap_or(steps[0]),
        None => env.actions.max_step(),
    })
}

/// Commanded step for the current iteration. Only `Learned` draws from the
/// stream, and only when `temperature` is given; without it the greedy
/// action is used.
pub fn plan_step(
    kind: PolicyKind,
    q: Option<&QFunction>,
    temperature: Option<f64>,
    episode: &mut Episode<'_, '_>,
) -> Result<f64> {
    let env = episode.env;
    match kind {
        PolicyKind::Learned => {
            let q = q.ok_or_else(|| Error::Policy("Learned policy requires a trained Q table".into()))?;
            let s = state_index(&episode.state());
            if s >= q.n_states() || q.n_actions() != env.actions.len() {
                return Err(Error::Policy(
                    "Q table dimensions do not match codebook and action set".into(),
                ));
            }
            let a = match temperature {
                Some(t) => crate::planner::select_action(q.row(s), t, episode.rng()),
                None => q.greedy(s),
            };
            Ok(env.actions.step(a))
        }
        PolicyKind::Oracle => oracle_step(env, episode.pose()),
        baseline => Ok(baseline
            .baseline_step(&env.constants, episode.detection().landmark_view)
            .expect("baseline policies have a fixed step")),
    }
}

/// Run one evaluation episode from a seeded random start.
pub fn run_episode(
    env: &EpisodeEnv<'_>,
    kind: PolicyKind,
    q: Option<&QFunction>,
    seed: u64,
) -> Result<EpisodeResult> {
    let mut rng = rng::stream(seed);
    let start = random_start(env.world, &mut rng);
    run_episode_from(env, kind, q, start, rng, None)
}

/// Run an episode from a given start; optionally record a per-iteration trace.
pub fn run_episode_from(
    env: &EpisodeEnv<'_>,
    kind: PolicyKind,
    q: Option<&QFunction>,
    start: Pose,
    rng: Stream,
    mut trace: Option<&mut Vec<TraceRecord>>,
) -> Result<EpisodeResult> {
    let mut episode = Episode::start(env, start, rng)?;
    while episode.iterations() < env.config.max_iterations {
        let view_at_plan = episode.detection().landmark_view;
        let commanded = plan_step(kind, q, None, &mut episode)?;
        let report = episode.step(commanded)?;
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(TraceRecord {
                iteration: episode.iterations(),
                policy: kind,
                action: commanded,
                pose: episode.pose().position,
                displacement: report.displacement,
                view_at_plan,
                landmark_view: report.landmark_view,
                matched: report.matched,
                top3: episode.belief().top(3),
            });
        }
        if report.terminated {
            break;
        }
    }
    Ok(episode.result())
}

/// Line-delimited JSON, one record per iteration.
pub fn trace_to_jsonl(trace: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in trace {
        out.push_str(&serde_json::to_string(r).expect("trace serializes"));
        out.push('\n');
    }
    out
}
