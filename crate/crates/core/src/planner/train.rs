use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{state_index, QFunction, QHyper, Transition, HISTORY_BINS};
use crate::episode::{plan_step, random_start, Episode, EpisodeEnv};
use crate::error::Result;
use crate::planner::PolicyKind;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Learning rate of the first episode.
    pub alpha: f64,
    /// Learning rate of the last episode.
    pub alpha_end: f64,
    pub gamma: f64,
    /// Softmax temperature of the first training episode.
    pub temperature_start: f64,
    /// Softmax temperature of the last training episode.
    pub temperature_end: f64,
    /// Transitions replayed from memory after every online update.
    pub replay_batch: usize,
    /// Replay memory size; the oldest transitions are overwritten.
    pub replay_capacity: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            alpha_end: 0.001,
            gamma: 0.9,
            temperature_start: 1.0,
            temperature_end: 0.2,
            replay_batch: 32,
            replay_capacity: 20_000,
        }
    }
}

impl TrainConfig {
    /// Linearly annealed temperature for episode `e` of `episodes`.
    pub fn temperature(&self, e: usize, episodes: usize) -> f64 {
        anneal(self.temperature_start, self.temperature_end, e, episodes)
    }

    /// Linearly annealed learning rate for episode `e` of `episodes`.
    pub fn learning_rate(&self, e: usize, episodes: usize) -> f64 {
        anneal(self.alpha, self.alpha_end, e, episodes)
    }
}

fn anneal(start: f64, end: f64, e: usize, episodes: usize) -> f64 {
    if episodes <= 1 {
        return start;
    }
    start + (end - start) * (e as f64 / (episodes - 1) as f64)
}

/// Fixed-capacity ring buffer of transitions.
#[derive(Debug, Clone)]
struct ReplayMemory {
    items: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayMemory {
    fn new(capacity: usize) -> Self {
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            next: 0,
        }
    }

    fn push(&mut self, t: Transition) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    fn sample(&self, rng: &mut rng::Stream) -> Option<&Transition> {
        if self.items.is_empty() {
            return None;
        }
        self.items.get(rng.random_range(0..self.items.len()))
    }
}

/// Learned value table plus the per-episode training returns.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub q: QFunction,
    pub returns: Vec<f64>,
}

/// Q-learning over full localization episodes in `env` (which must be the
/// training domain, matched through its lookup table). Actions are sampled
/// from the softmax of the current values. Every iteration backs up its own
/// transition and then `replay_batch` transitions drawn uniformly from the
/// replay memory; temperature and learning rate anneal linearly.
pub fn train(
    env: &EpisodeEnv<'_>,
    k_codebook: usize,
    episodes: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let last = episodes.saturating_sub(1);
    let mut q = QFunction::zeros(
        k_codebook * HISTORY_BINS,
        env.actions.len(),
        QHyper {
            alpha: cfg.alpha,
            gamma: cfg.gamma,
            temperature: cfg.temperature(last, episodes),
        },
    );
    let mut visited = vec![false; q.n_states()];
    let mut memory = ReplayMemory::new(cfg.replay_capacity);
    let mut replay_rng = rng::stream(rng::derive_seed(seed, &[u64::MAX]));
    let mut returns = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let temperature = cfg.temperature(e, episodes);
        q.hyper.alpha = cfg.learning_rate(e, episodes);
        let mut stream = rng::stream(rng::derive_seed(seed, &[e as u64]));
        let start = random_start(env.world, &mut stream);
        let mut episode = Episode::start(env, start, stream)?;
        while episode.iterations() < env.config.max_iterations {
            let s = state_index(&episode.state());
            let commanded = plan_step(PolicyKind::Learned, Some(&q), Some(temperature), &mut episode)?;
            let action = env
                .actions
                .steps()
                .iter()
                .position(|&a| a == commanded)
                .expect("learned policy picks from the action set");
            let report = episode.step(commanded)?;
            let t = Transition {
                state: s,
                action,
                reward: report.reward,
                next_state: state_index(&episode.state()),
                terminal: report.terminated,
            };
            q.td_update(&t);
            visited[s] = true;
            memory.push(t);
            for _ in 0..cfg.replay_batch {
                if let Some(replayed) = memory.sample(&mut replay_rng) {
                    let replayed = *replayed;
                    q.td_update(&replayed);
                }
            }
            if report.terminated {
                break;
            }
        }
        returns.push(episode.result().episode_return);
    }
    q.hyper.alpha = cfg.learning_rate(last, episodes);
    fill_unvisited(&mut q, &visited);
    Ok(TrainOutcome { q, returns })
}

/// Give every never-visited state the values of the nearest visited counter
/// bin of the same codeword (lower bins first on equal distance). Codewords
/// never visited at all keep their zero rows.
pub fn fill_unvisited(q: &mut QFunction, visited: &[bool]) {
    let k_codebook = q.n_states() / HISTORY_BINS;
    for code in 0..k_codebook {
        let base = code * HISTORY_BINS;
        for h in 0..HISTORY_BINS {
            if visited[base + h] {
                continue;
            }
            let donor = (1..HISTORY_BINS).find_map(|d| {
                [h.checked_sub(d), Some(h + d)]
                    .into_iter()
                    .flatten()
                    .find(|&c| c < HISTORY_BINS && visited[base + c])
            });
            if let Some(c) = donor {
                for a in 0..q.n_actions() {
                    let v = q.get(base + c, a);
                    q.set(base + h, a, v);
                }
            }
        }
    }
}
