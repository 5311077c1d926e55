//! Similarity-aware neighbor selection: per-relation top-p filtering plus the
//! Bernoulli multi-armed bandit that nudges each filtering threshold once per
//! epoch from a ±1 reward and freezes it at convergence.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Terminal rule window: converged when the last `TERMINAL_WINDOW` rewards
/// sum to at most `TERMINAL_BOUND` in absolute value.
const TERMINAL_WINDOW: usize = 10;
const TERMINAL_BOUND: i32 = 2;

/// Keeps the ⌈p·N⌉ highest-similarity neighbors. Ties break toward the lower
/// node id; the result is ordered by descending similarity. p = 0 discards
/// everything, p = 1 keeps everything.
pub fn top_p_select(neighbor_ids: &[usize], similarities: &[f64], p: f64) -> Result<Vec<usize>> {
    if neighbor_ids.len() != similarities.len() {
        return Err(Error::Shape(format!(
            "{} neighbor ids but {} similarity scores",
            neighbor_ids.len(),
            similarities.len()
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("threshold p must be in [0, 1], got {p}")));
    }
    let n = neighbor_ids.len();
    let keep = (p * n as f64).ceil() as usize;
    if keep == 0 {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        similarities[b]
            .total_cmp(&similarities[a])
            .then_with(|| neighbor_ids[a].cmp(&neighbor_ids[b]))
    });
    Ok(order[..keep].iter().map(|&i| neighbor_ids[i]).collect())
}

/// Reward: +1 when the average selected-neighbor distance did not increase
/// since the previous epoch, -1 otherwise. The boundary counts as +1.
pub fn rl_reward(g_prev: f64, g_curr: f64) -> i8 {
    if g_prev - g_curr >= 0.0 {
        1
    } else {
        -1
    }
}

/// Mean over contributing nodes of each node's mean selected-neighbor
/// distance. Nodes with no selected neighbors are excluded; returns `None`
/// when nothing contributes.
pub fn average_distance(per_node_distances: &[Vec<f64>]) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for dists in per_node_distances {
        if dists.is_empty() {
            continue;
        }
        sum += dists.iter().sum::<f64>() / dists.len() as f64;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// Converged when at least `TERMINAL_WINDOW` rewards exist and the last
/// window sums to within ±`TERMINAL_BOUND`.
pub fn is_terminated(rewards: &[i8]) -> bool {
    if rewards.len() < TERMINAL_WINDOW {
        return false;
    }
    let sum: i32 = rewards[rewards.len() - TERMINAL_WINDOW..]
        .iter()
        .map(|&r| i32::from(r))
        .sum();
    sum.abs() <= TERMINAL_BOUND
}

/// One (layer, relation) bandit arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerCell {
    pub p: f64,
    pub prev_distance: Option<f64>,
    pub rewards: Vec<i8>,
    pub terminated: bool,
}

/// What one epoch's update did at one (layer, relation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerEvent {
    pub layer: usize,
    pub relation: usize,
    /// Average selected-neighbor distance observed this epoch, if any.
    pub g: Option<f64>,
    /// Reward applied this epoch (the first action records its random sign).
    pub reward: Option<i8>,
    pub p: f64,
    pub terminated: bool,
}

/// Per-(layer, relation) filtering thresholds with their bandit state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdController {
    cells: Vec<Vec<ControllerCell>>,
    pub tau: f64,
    /// When false, cells never freeze (used to trace full trajectories).
    pub termination_enabled: bool,
    rng: ChaCha8Rng,
}

impl ThresholdController {
    /// All thresholds start at `initial_p` (0.5 in the standard setup).
    pub fn new(
        num_layers: usize,
        num_relations: usize,
        tau: f64,
        initial_p: f64,
        seed: u64,
        termination_enabled: bool,
    ) -> Self {
        let cell = ControllerCell {
            p: initial_p.clamp(0.0, 1.0),
            prev_distance: None,
            rewards: Vec::new(),
            terminated: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        ThresholdController {
            cells: vec![vec![cell; num_relations]; num_layers],
            tau,
            termination_enabled,
            rng,
        }
    }

    /// A controller whose thresholds are pinned at `p` and never move
    /// (the fixed-half / fixed-all baselines).
    pub fn fixed(num_layers: usize, num_relations: usize, p: f64) -> Self {
        let mut c = Self::new(num_layers, num_relations, 0.0, p, 0, true);
        for row in &mut c.cells {
            for cell in row {
                cell.terminated = true;
            }
        }
        c
    }

    pub fn num_layers(&self) -> usize {
        self.cells.len()
    }

    pub fn num_relations(&self) -> usize {
        self.cells[0].len()
    }

    pub fn threshold(&self, layer: usize, relation: usize) -> f64 {
        self.cells[layer][relation].p
    }

    pub fn thresholds(&self, layer: usize) -> Vec<f64> {
        self.cells[layer].iter().map(|c| c.p).collect()
    }

    pub fn cell(&self, layer: usize, relation: usize) -> &ControllerCell {
        &self.cells[layer][relation]
    }

    pub fn all_terminated(&self) -> bool {
        self.cells
            .iter()
            .all(|row| row.iter().all(|c| c.terminated))
    }

    /// Applies one reward step: p ← clamp(p + reward·τ, 0, 1), recording the
    /// reward. A no-op on a terminated cell.
    pub fn rl_step(&mut self, layer: usize, relation: usize, reward: i8) -> f64 {
        let tau = self.tau;
        let cell = &mut self.cells[layer][relation];
        if cell.terminated {
            eprintln!(
                "warning: rl_step on terminated controller (layer {layer}, relation {relation}) ignored"
            );
            return cell.p;
        }
        cell.p = (cell.p + f64::from(reward) * tau).clamp(0.0, 1.0);
        cell.rewards.push(reward);
        cell.p
    }

    /// One epoch-end update for one (layer, relation): check the terminal
    /// rule, then apply the reward derived from the epoch's average distance.
    /// The first observed epoch takes a random ±τ action since there is no
    /// reference distance yet; epochs with no observation are skipped.
    pub fn epoch_update(
        &mut self,
        layer: usize,
        relation: usize,
        avg_distance: Option<f64>,
    ) -> ControllerEvent {
        let event = |cell: &ControllerCell, g: Option<f64>, reward: Option<i8>| ControllerEvent {
            layer,
            relation,
            g,
            reward,
            p: cell.p,
            terminated: cell.terminated,
        };
        if self.cells[layer][relation].terminated {
            return event(&self.cells[layer][relation], avg_distance, None);
        }
        if self.termination_enabled && is_terminated(&self.cells[layer][relation].rewards) {
            self.cells[layer][relation].terminated = true;
            return event(&self.cells[layer][relation], avg_distance, None);
        }
        let Some(g) = avg_distance else {
            // nothing contributed this epoch; leave the reference untouched
            return event(&self.cells[layer][relation], None, None);
        };
        let reward = match self.cells[layer][relation].prev_distance {
            None => {
                if self.rng.random_bool(0.5) {
                    1
                } else {
                    -1
                }
            }
            Some(prev) => rl_reward(prev, g),
        };
        self.cells[layer][relation].prev_distance = Some(g);
        self.rl_step(layer, relation, reward);
        event(&self.cells[layer][relation], Some(g), Some(reward))
    }
}
