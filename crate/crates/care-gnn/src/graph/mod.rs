//! Multi-relation graphs: immutable node features, binary labels, and one
//! undirected adjacency per relation.

mod io;
mod synthetic;

pub use io::{load_graph, save_graph, LoadStats, RelationLoadStats};
pub use synthetic::{generate_synthetic, RelationSpec, SyntheticConfig};

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Immutable multi-relation graph. Adjacency lists are symmetric, strictly
/// ascending, and never contain self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiRelationGraph {
    num_nodes: usize,
    feature_dim: usize,
    /// Row-major num_nodes × feature_dim.
    features: Vec<f64>,
    /// 0 = benign, 1 = suspicious.
    labels: Vec<u8>,
    /// relations[r][v] = sorted neighbor ids of v under relation r.
    relations: Vec<Vec<Vec<usize>>>,
    relation_names: Vec<String>,
}

/// Train/test node-id split, stratified by label.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub train_fraction: f64,
}

/// What construction removed from one relation's raw edge list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CleanStats {
    pub self_loops: usize,
    pub duplicates: usize,
}

impl MultiRelationGraph {
    /// Builds a graph from raw parts. Edge lists may be directed, contain
    /// duplicates or self-loops; they are symmetrized and cleaned here.
    /// Returns per-relation counts of dropped self-loops and duplicates.
    pub fn from_parts(
        features: Vec<f64>,
        feature_dim: usize,
        labels: Vec<u8>,
        edges: Vec<Vec<(usize, usize)>>,
        relation_names: Vec<String>,
    ) -> Result<(Self, Vec<CleanStats>)> {
        let num_nodes = labels.len();
        if feature_dim == 0 || features.len() != num_nodes * feature_dim {
            return Err(Error::Graph(format!(
                "feature buffer has {} entries, expected {} nodes × {} dims",
                features.len(),
                num_nodes,
                feature_dim
            )));
        }
        if let Some(bad) = labels.iter().position(|&l| l > 1) {
            return Err(Error::Graph(format!(
                "label of node {bad} is {}, expected 0 or 1",
                labels[bad]
            )));
        }
        if edges.len() != relation_names.len() || edges.is_empty() {
            return Err(Error::Graph(
                "need at least one relation, with one name per relation".into(),
            ));
        }
        let mut relations = Vec::with_capacity(edges.len());
        let mut stats = Vec::with_capacity(edges.len());
        for (r, list) in edges.iter().enumerate() {
            let mut adj = vec![Vec::new(); num_nodes];
            let mut self_loops = 0usize;
            for &(a, b) in list {
                if a >= num_nodes || b >= num_nodes {
                    return Err(Error::Graph(format!(
                        "relation {r} edge ({a}, {b}) references a node id ≥ {num_nodes}"
                    )));
                }
                if a == b {
                    self_loops += 1;
                    continue;
                }
                adj[a].push(b);
                adj[b].push(a);
            }
            let mut removed = 0usize;
            for list in &mut adj {
                let before = list.len();
                list.sort_unstable();
                list.dedup();
                removed += before - list.len();
            }
            relations.push(adj);
            stats.push(CleanStats {
                self_loops,
                // each duplicate undirected edge was pushed in both directions
                duplicates: removed / 2,
            });
        }
        Ok((
            MultiRelationGraph {
                num_nodes,
                feature_dim,
                features,
                labels,
                relations,
                relation_names,
            },
            stats,
        ))
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, node: usize) -> u8 {
        self.labels[node]
    }

    pub fn feature(&self, node: usize) -> &[f64] {
        &self.features[node * self.feature_dim..(node + 1) * self.feature_dim]
    }

    /// Sorted neighbor ids of `node` under relation `relation`.
    pub fn neighbors(&self, relation: usize, node: usize) -> Result<&[usize]> {
        if relation >= self.relations.len() {
            return Err(Error::Graph(format!(
                "relation index {relation} out of range (R = {})",
                self.relations.len()
            )));
        }
        if node >= self.num_nodes {
            return Err(Error::Graph(format!(
                "node id {node} out of range (n = {})",
                self.num_nodes
            )));
        }
        Ok(&self.relations[relation][node])
    }

    /// Iterates each undirected edge of a relation once, as (low, high) pairs.
    pub fn edges(&self, relation: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.relations[relation]
            .iter()
            .enumerate()
            .flat_map(|(v, adj)| {
                adj.iter()
                    .copied()
                    .filter(move |&u| u > v)
                    .map(move |u| (v, u))
            })
    }

    pub fn num_edges(&self, relation: usize) -> usize {
        self.edges(relation).count()
    }

    /// Union of all relations' edges as a single sorted adjacency (the merged
    /// homogeneous view used by camouflage analysis).
    pub fn merged_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for rel in &self.relations {
            for (v, list) in rel.iter().enumerate() {
                adj[v].extend_from_slice(list);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Fraction of edges whose endpoints share a label.
    pub fn label_similarity(&self, relation: usize) -> Result<f64> {
        let mut same = 0usize;
        let mut total = 0usize;
        for (v, u) in self.edges(relation) {
            total += 1;
            if self.labels[v] == self.labels[u] {
                same += 1;
            }
        }
        if total == 0 {
            return Err(Error::Graph(format!(
                "relation {relation} has no edges; label similarity is undefined"
            )));
        }
        Ok(same as f64 / total as f64)
    }

    /// Mean over edges of exp(-‖x_u - x_v‖² / d); in [0, 1].
    pub fn feature_similarity(&self, relation: usize) -> Result<f64> {
        let mut sum = 0.0;
        let mut total = 0usize;
        for (v, u) in self.edges(relation) {
            total += 1;
            sum += self.edge_feature_similarity(v, u);
        }
        if total == 0 {
            return Err(Error::Graph(format!(
                "relation {relation} has no edges; feature similarity is undefined"
            )));
        }
        Ok(sum / total as f64)
    }

    pub(crate) fn edge_feature_similarity(&self, v: usize, u: usize) -> f64 {
        let (xv, xu) = (self.feature(v), self.feature(u));
        let dist2: f64 = xv.iter().zip(xu).map(|(a, b)| (a - b) * (a - b)).sum();
        (-dist2 / self.feature_dim as f64).exp()
    }

    /// Stratified train/test split: both sides preserve the class ratio
    /// within rounding and the train side always contains both classes.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<DataSplit> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must be in (0, 1), got {train_fraction}"
            )));
        }
        let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (v, &l) in self.labels.iter().enumerate() {
            by_class[l as usize].push(v);
        }
        if by_class[0].is_empty() || by_class[1].is_empty() {
            return Err(Error::Graph(
                "both classes must be present to split the graph".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train_ids = Vec::new();
        let mut test_ids = Vec::new();
        for ids in &mut by_class {
            ids.shuffle(&mut rng);
            let take = ((train_fraction * ids.len() as f64).round() as usize)
                .max(1)
                .min(ids.len().saturating_sub(1).max(1));
            train_ids.extend_from_slice(&ids[..take]);
            test_ids.extend_from_slice(&ids[take..]);
        }
        train_ids.sort_unstable();
        test_ids.sort_unstable();
        Ok(DataSplit {
            train_ids,
            test_ids,
            train_fraction,
        })
    }
}
