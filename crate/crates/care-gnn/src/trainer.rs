//! Training loop: under-sampled mini-batch epochs over the training
//! positives, forward/backward/Adam per batch, and one bandit update per
//! (layer, relation) at each epoch end. Sessions checkpoint to a tensor
//! container and resume exactly.

use crate::aggregation::AggregatorVariant;
use crate::checkpoint::TensorStore;
use crate::error::{Error, Result};
use crate::evaluation::{self, Head, MetricsReport};
use crate::graph::{DataSplit, MultiRelationGraph};
use crate::model::CareModel;
pub use crate::model::{compute_losses, Losses};
use crate::numeric::AdamState;
use crate::selector::{average_distance, ControllerEvent, ThresholdController};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// RNG stream offset for per-epoch batch sampling; the controller uses
/// stream 1 and model init uses stream 0 of the same seed.
const BATCH_STREAM_BASE: u64 = 0x100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborMode {
    /// Thresholds start at 0.5 and are steered by the bandit.
    Adaptive,
    /// Thresholds pinned at 0.5 (keep the top half).
    FixedHalf,
    /// Thresholds pinned at 1.0 (keep every neighbor).
    FixedAll,
}

impl std::str::FromStr for NeighborMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adaptive" => Ok(NeighborMode::Adaptive),
            "fixed-half" | "fixed_half" => Ok(NeighborMode::FixedHalf),
            "fixed-all" | "fixed_all" => Ok(NeighborMode::FixedAll),
            other => Err(Error::Config(format!(
                "unknown neighbor mode {other:?} (expected adaptive|fixed-half|fixed-all)"
            ))),
        }
    }
}

impl std::fmt::Display for NeighborMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            NeighborMode::Adaptive => "adaptive",
            NeighborMode::FixedHalf => "fixed-half",
            NeighborMode::FixedAll => "fixed-all",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub num_layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub embedding_dim: usize,
    pub learning_rate: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub tau: f64,
    /// Negatives sampled per positive in each batch.
    pub undersample_ratio: f64,
    pub variant: AggregatorVariant,
    pub seed: u64,
    pub eval_every: usize,
    pub neighbor_mode: NeighborMode,
    pub rl_termination: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_layers: 1,
            epochs: 30,
            batch_size: 256,
            embedding_dim: 64,
            learning_rate: 0.01,
            lambda1: 2.0,
            lambda2: 0.001,
            tau: 0.02,
            undersample_ratio: 1.0,
            variant: AggregatorVariant::Threshold,
            seed: 0,
            eval_every: 3,
            neighbor_mode: NeighborMode::Adaptive,
            rl_termination: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_layers < 1 {
            return bad("num_layers must be ≥ 1".into());
        }
        if self.epochs < 1 {
            return bad("epochs must be ≥ 1".into());
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive".into());
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return bad("lambda1 and lambda2 must be ≥ 0".into());
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau must be in [0, 1], got {}", self.tau));
        }
        if self.undersample_ratio <= 0.0 {
            return bad("undersample_ratio must be > 0".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every must be ≥ 1".into());
        }
        if (self.batch_size as f64) < 1.0 + self.undersample_ratio {
            return bad(format!(
                "batch_size {} is smaller than 1 + undersample_ratio {}",
                self.batch_size, self.undersample_ratio
            ));
        }
        Ok(())
    }
}

/// Splits the epoch's training positives into chunks of
/// ⌊batch_size/(1+ratio)⌋ and pairs each chunk with ratio-matched negatives
/// drawn without replacement (the pool reshuffles only if exhausted).
/// Every training positive appears exactly once per epoch.
pub fn undersample_batches(
    train_ids: &[usize],
    labels: &[u8],
    batch_size: usize,
    ratio: f64,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Vec<usize>>> {
    let per_batch_pos = ((batch_size as f64) / (1.0 + ratio)).floor() as usize;
    if per_batch_pos == 0 {
        return Err(Error::Config(format!(
            "batch_size {batch_size} is smaller than 1 + ratio {ratio}"
        )));
    }
    let mut positives: Vec<usize> = train_ids.iter().copied().filter(|&v| labels[v] == 1).collect();
    let mut pool: Vec<usize> = train_ids.iter().copied().filter(|&v| labels[v] == 0).collect();
    if positives.is_empty() || pool.is_empty() {
        return Err(Error::Graph(
            "training set must contain both classes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(BATCH_STREAM_BASE + epoch as u64);
    positives.shuffle(&mut rng);
    pool.shuffle(&mut rng);

    let mut batches = Vec::new();
    let mut cursor = 0usize;
    for chunk in positives.chunks(per_batch_pos) {
        let need = ((chunk.len() as f64) * ratio).round().max(1.0) as usize;
        let need = need.min(pool.len());
        if cursor + need > pool.len() {
            pool.shuffle(&mut rng);
            cursor = 0;
        }
        let mut batch = chunk.to_vec();
        batch.extend_from_slice(&pool[cursor..cursor + need]);
        cursor += need;
        batches.push(batch);
    }
    Ok(batches)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReports {
    pub gnn: MetricsReport,
    pub simi: MetricsReport,
}

/// Per-epoch record: mean losses, one controller event per (layer, relation),
/// and test metrics at the evaluation cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub loss_gnn: f64,
    pub loss_simi: f64,
    pub loss_care: f64,
    pub controllers: Vec<ControllerEvent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalReports>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    feature_dim: usize,
    embedding_dim: usize,
    num_layers: usize,
    num_relations: usize,
    variant: AggregatorVariant,
    config: TrainConfig,
    controller: ThresholdController,
    adam: AdamState,
    epochs_done: usize,
}

/// A training run: model, optimizer state, and progress. Checkpoints capture
/// all three, so a resumed session continues bit-identically.
#[derive(Debug, Clone)]
pub struct TrainSession {
    pub config: TrainConfig,
    pub model: CareModel,
    adam: AdamState,
    pub epochs_done: usize,
}

impl TrainSession {
    pub fn new(config: TrainConfig, graph: &MultiRelationGraph) -> Result<Self> {
        config.validate()?;
        let (layers, relations) = (config.num_layers, graph.num_relations());
        let controller = match config.neighbor_mode {
            NeighborMode::Adaptive => ThresholdController::new(
                layers,
                relations,
                config.tau,
                0.5,
                config.seed,
                config.rl_termination,
            ),
            NeighborMode::FixedHalf => ThresholdController::fixed(layers, relations, 0.5),
            NeighborMode::FixedAll => ThresholdController::fixed(layers, relations, 1.0),
        };
        let model = CareModel::new(
            graph.feature_dim(),
            config.embedding_dim,
            config.num_layers,
            relations,
            config.variant,
            controller,
            config.seed,
        );
        let adam = AdamState::new(&model.param_shapes());
        Ok(TrainSession {
            config,
            model,
            adam,
            epochs_done: 0,
        })
    }

    /// Runs the remaining epochs (`config.epochs - epochs_done`), returning
    /// one report per epoch run.
    pub fn train(
        &mut self,
        graph: &MultiRelationGraph,
        split: &DataSplit,
    ) -> Result<Vec<EpochReport>> {
        let cfg = self.config.clone();
        let labels = graph.labels();
        let num_layers = self.model.num_layers;
        let num_relations = self.model.num_relations;
        let mut reports = Vec::new();

        for epoch in (self.epochs_done + 1)..=cfg.epochs {
            let batches = undersample_batches(
                &split.train_ids,
                labels,
                cfg.batch_size,
                cfg.undersample_ratio,
                cfg.seed,
                epoch,
            )?;
            // per (layer, relation): one distance list per positive batch node
            let mut dist_acc: Vec<Vec<Vec<Vec<f64>>>> =
                vec![vec![Vec::new(); num_relations]; num_layers];
            let mut loss_sums = (0.0, 0.0, 0.0);

            for (batch_idx, batch) in batches.iter().enumerate() {
                let batch_labels: Vec<u8> = batch.iter().map(|&v| labels[v]).collect();
                let record = self.model.forward_batch(graph, batch)?;
                let losses = self
                    .model
                    .losses(&record, &batch_labels, cfg.lambda1, cfg.lambda2);
                if !losses.care.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "non-finite loss at epoch {epoch}, batch {batch_idx}"
                    )));
                }
                loss_sums.0 += losses.gnn;
                loss_sums.1 += losses.simi;
                loss_sums.2 += losses.care;

                for (l_idx, layer_rec) in record.layers.iter().enumerate() {
                    for (i, &v) in record.batch.iter().enumerate() {
                        if labels[v] != 1 {
                            continue;
                        }
                        let node_idx = if l_idx + 1 == num_layers { i } else { layer_rec.pos[&v] };
                        for r in 0..num_relations {
                            dist_acc[l_idx][r]
                                .push(layer_rec.nodes[node_idx].relations[r].distances.clone());
                        }
                    }
                }

                let grads = self
                    .model
                    .backward(graph, &record, &batch_labels, cfg.lambda1, cfg.lambda2)?;
                self.adam.step(
                    &mut self.model.param_groups_mut(),
                    &grads,
                    cfg.learning_rate,
                )?;
            }

            let mut controllers = Vec::with_capacity(num_layers * num_relations);
            for l in 0..num_layers {
                for r in 0..num_relations {
                    let g = average_distance(&dist_acc[l][r]);
                    controllers.push(self.model.controller.epoch_update(l, r, g));
                }
            }

            let eval = if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
                Some(EvalReports {
                    gnn: evaluation::evaluate(&self.model, graph, &split.test_ids, Head::Gnn)?,
                    simi: evaluation::evaluate(&self.model, graph, &split.test_ids, Head::Simi)?,
                })
            } else {
                None
            };

            let batch_count = batches.len().max(1) as f64;
            reports.push(EpochReport {
                epoch,
                loss_gnn: loss_sums.0 / batch_count,
                loss_simi: loss_sums.1 / batch_count,
                loss_care: loss_sums.2 / batch_count,
                controllers,
                eval,
            });
            self.epochs_done = epoch;
        }
        Ok(reports)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let manifest = Manifest {
            version: 1,
            feature_dim: self.model.feature_dim,
            embedding_dim: self.model.embedding_dim,
            num_layers: self.model.num_layers,
            num_relations: self.model.num_relations,
            variant: self.model.variant,
            config: self.config.clone(),
            controller: self.model.controller.clone(),
            adam: self.adam.clone(),
            epochs_done: self.epochs_done,
        };
        let manifest = serde_json::to_string(&manifest)
            .map_err(|e| Error::Checkpoint(format!("manifest serialization failed: {e}")))?;
        let mut store = TensorStore::new(manifest);
        for (name, shape, data) in self.model.tensor_entries() {
            store.insert(name, shape, data);
        }
        store.save(path)
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let store = TensorStore::load(path)?;
        let manifest: Manifest = serde_json::from_str(&store.manifest)
            .map_err(|e| Error::Checkpoint(format!("bad manifest: {e}")))?;
        let mut model = CareModel::zeros(
            manifest.feature_dim,
            manifest.embedding_dim,
            manifest.num_layers,
            manifest.num_relations,
            manifest.variant,
            manifest.controller,
        );
        for (name, param) in model.param_groups_mut() {
            let (_, data) = store.require(&name)?;
            if data.len() != param.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has {} entries, model expects {}",
                    data.len(),
                    param.len()
                )));
            }
            param.copy_from_slice(data);
        }
        Ok(TrainSession {
            config: manifest.config,
            model,
            adam: manifest.adam,
            epochs_done: manifest.epochs_done,
        })
    }
}

/// Trains a fresh model under `config`; convenience wrapper over a session.
pub fn train(
    graph: &MultiRelationGraph,
    split: &DataSplit,
    config: TrainConfig,
) -> Result<(CareModel, Vec<EpochReport>)> {
    let mut session = TrainSession::new(config, graph)?;
    let reports = session.train(graph, split)?;
    Ok((session.model, reports))
}
