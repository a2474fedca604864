//! Q-learning on explicit finite MDPs, used to check the learner against
//! exact dynamic programming.

use rand::Rng;

use super::{select_action, QFunction, QHyper, Transition};
use crate::rng;

const RESTART_PROB: f64 = 0.05;

/// Finite MDP with deterministic transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicMdp {
    /// `outcomes[s][a] = (reward, next_state, terminal)`
    pub outcomes: Vec<Vec<(f64, usize, bool)>>,
}

impl DeterministicMdp {
    pub fn n_states(&self) -> usize {
        self.outcomes.len()
    }

    pub fn n_actions(&self) -> usize {
        self.outcomes.first().map_or(0, Vec::len)
    }

    /// Random MDP; roughly one transition in five is terminal.
    pub fn random(n_states: usize, n_actions: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed);
        let outcomes = (0..n_states)
            .map(|_| {
                (0..n_actions)
                    .map(|_| {
                        (
                            rng.random_range(-1.0..1.0),
                            rng.random_range(0..n_states),
                            rng.random::<f64>() < 0.2,
                        )
                    })
                    .collect()
            })
            .collect();
        Self { outcomes }
    }

    pub fn transition(&self, state: usize, action: usize) -> Transition {
        let (reward, next_state, terminal) = self.outcomes[state][action];
        Transition {
            state,
            action,
            reward,
            next_state,
            terminal,
        }
    }
}

/// Q-learning with uniform experience replay.
///
/// A behaviour walk samples actions from the softmax of the current values,
/// restarting at a random state after terminal transitions (and otherwise
/// with probability `RESTART_PROB`, so every state is reached). Each distinct
/// transition it meets enters the replay memory, and every update backs up
/// one transition drawn uniformly from memory. Returns after `updates`
/// backups.
pub fn q_learning_with_replay(
    mdp: &DeterministicMdp,
    hyper: QHyper,
    updates: usize,
    seed: u64,
) -> QFunction {
    let mut rng = rng::stream(seed);
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut q = QFunction::zeros(ns, na, hyper);
    let mut seen = vec![false; ns * na];
    let mut memory: Vec<Transition> = Vec::with_capacity(ns * na);
    let mut state = rng.random_range(0..ns);
    for _ in 0..updates {
        let action = select_action(q.row(state), hyper.temperature, &mut rng);
        let t = mdp.transition(state, action);
        if !seen[state * na + action] {
            seen[state * na + action] = true;
            memory.push(t);
        }
        state = if t.terminal || rng.random::<f64>() < RESTART_PROB {
            rng.random_range(0..ns)
        } else {
            t.next_state
        };
        let replay = memory[rng.random_range(0..memory.len())];
        q.td_update(&replay);
    }
    q
}
