//! Synthetic multi-relation fraud graphs with controllable label homophily
//! per relation and a feature-overlap knob for feature camouflage.

use super::MultiRelationGraph;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Class-conditional mean of an informative feature at overlap 0 is
/// ±FEATURE_SEPARATION (unit variance, so a mid-point threshold on one such
/// feature is right ~97.7% of the time).
const FEATURE_SEPARATION: f64 = 2.0;

/// One informative feature per this many dims (at least one). The rest are
/// pure noise, mimicking feature camouflage: most measurements look alike
/// across classes.
const DIMS_PER_INFORMATIVE: usize = 16;

/// Cross-label edges land on the most fraud-looking fraction of the benign
/// population (relation camouflage: fraudsters attach to look-alikes, so an
/// unfiltered neighborhood mean carries almost no benign signature).
const CAMOUFLAGE_POOL_FRACTION: f64 = 0.25;

/// Scale of the heavy-tailed (Cauchy) noise on informative dims. Heavy tails
/// mean neighborhood averages do not concentrate, so unfiltered aggregation
/// inherits the outliers instead of washing them out.
const CAUCHY_SCALE: f64 = 0.25;

/// In a camouflaged relation, the probability that a benign endpoint is
/// drawn from the look-alike pool rather than uniformly. Below 1.0 so every
/// benign node keeps some wiring (no give-away isolated nodes).
const CAMOUFLAGE_TARGETING: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub name: String,
    /// Target fraction of same-label edges, in [0, 1].
    pub homophily: f64,
    /// Mean undirected degree, ≥ 1.
    pub mean_degree: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_nodes: usize,
    pub fraud_fraction: f64,
    pub feature_dim: usize,
    pub relations: Vec<RelationSpec>,
    /// 0 = fully separable class features, 1 = identical distributions.
    pub feature_overlap: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_nodes < 2 {
            return bad("num_nodes must be at least 2".into());
        }
        if !(self.fraud_fraction > 0.0 && self.fraud_fraction < 1.0) {
            return bad(format!(
                "fraud_fraction must be in (0, 1), got {}",
                self.fraud_fraction
            ));
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.feature_overlap) {
            return bad(format!(
                "feature_overlap must be in [0, 1], got {}",
                self.feature_overlap
            ));
        }
        if self.relations.is_empty() {
            return bad("at least one relation is required".into());
        }
        for rel in &self.relations {
            if !(0.0..=1.0).contains(&rel.homophily) {
                return bad(format!(
                    "relation {}: homophily must be in [0, 1], got {}",
                    rel.name, rel.homophily
                ));
            }
            if rel.mean_degree < 1.0 {
                return bad(format!(
                    "relation {}: mean degree must be ≥ 1, got {}",
                    rel.name, rel.mean_degree
                ));
            }
        }
        Ok(())
    }
}

/// Generates a graph whose per-relation same-label edge fraction hits the
/// configured homophily (quota sampling, so the error is below one edge) and
/// whose class feature distributions are Gaussians with means interpolated
/// by `feature_overlap`. Deterministic given the seed.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<MultiRelationGraph> {
    config.validate()?;
    let n = config.num_nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // labels
    let num_fraud = ((n as f64) * config.fraud_fraction).round() as usize;
    if num_fraud == 0 || num_fraud == n {
        return Err(Error::Config(format!(
            "fraud_fraction {} rounds to an empty class on {n} nodes",
            config.fraud_fraction
        )));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    let mut labels = vec![0u8; n];
    for &v in &ids[..num_fraud] {
        labels[v] = 1;
    }
    let fraud: Vec<usize> = (0..n).filter(|&v| labels[v] == 1).collect();
    let benign: Vec<usize> = (0..n).filter(|&v| labels[v] == 0).collect();

    // Features: the first ceil(d / DIMS_PER_INFORMATIVE) dims carry a class
    // location of ±FEATURE_SEPARATION·(1 − overlap)² under heavy-tailed
    // noise; the rest are zero-mean Gaussian noise in both classes. The
    // quadratic ramp keeps mid-range overlaps genuinely hard while overlap 0
    // stays separable per informative dim.
    let sep = {
        let away = 1.0 - config.feature_overlap;
        FEATURE_SEPARATION * away * away
    };
    let informative = config.feature_dim.div_ceil(DIMS_PER_INFORMATIVE);
    let cauchy = Cauchy::new(0.0, CAUCHY_SCALE).expect("valid cauchy parameters");
    let mut features = Vec::with_capacity(n * config.feature_dim);
    for &label in &labels {
        let location = if label == 1 { sep } else { -sep };
        for dim in 0..config.feature_dim {
            if dim < informative {
                let z: f64 = rng.sample(cauchy);
                features.push(location + z);
            } else {
                let z: f64 = rng.sample(StandardNormal);
                features.push(z);
            }
        }
    }

    // Benign nodes ranked most-fraud-looking first on the informative dims;
    // cross-label edges draw their benign endpoint from the top fraction.
    let mut camouflage_pool: Vec<usize> = benign.clone();
    camouflage_pool.sort_by(|&a, &b| {
        let score = |v: usize| -> f64 {
            let row = &features[v * config.feature_dim..v * config.feature_dim + informative];
            row.iter().sum::<f64>()
        };
        score(b).total_cmp(&score(a)).then(a.cmp(&b))
    });
    let pool_len = (((benign.len() as f64) * CAMOUFLAGE_POOL_FRACTION).ceil() as usize)
        .clamp(1, benign.len());
    camouflage_pool.truncate(pool_len);

    // A relation whose same-label fraction falls below label-independent
    // wiring is a camouflaged one: most of its benign endpoints (cross-label
    // and benign-benign alike) are drawn from the look-alike pool, so
    // neighborhood composition no longer betrays the label.
    let fraud_share = fraud.len() as f64 / n as f64;
    let random_wiring = fraud_share * fraud_share + (1.0 - fraud_share) * (1.0 - fraud_share);

    let mut edge_lists = Vec::with_capacity(config.relations.len());
    for rel in &config.relations {
        let pool: Option<&[usize]> =
            (rel.homophily < random_wiring).then_some(camouflage_pool.as_slice());
        edge_lists.push(sample_relation_edges(rel, n, &fraud, &benign, pool, &mut rng)?);
    }

    let names = config.relations.iter().map(|r| r.name.clone()).collect();
    let (graph, _) =
        MultiRelationGraph::from_parts(features, config.feature_dim, labels, edge_lists, names)?;
    Ok(graph)
}

fn sample_relation_edges(
    rel: &RelationSpec,
    n: usize,
    fraud: &[usize],
    benign: &[usize],
    camouflage_pool: Option<&[usize]>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>> {
    let target_edges = ((n as f64 * rel.mean_degree) / 2.0).round().max(1.0) as usize;
    let num_same = ((target_edges as f64) * rel.homophily).round() as usize;
    let num_cross = target_edges - num_same;

    let pairs_within = |k: usize| k * k.saturating_sub(1) / 2;
    let same_capacity = pairs_within(fraud.len()) + pairs_within(benign.len());
    let cross_capacity = fraud.len() * benign.len();
    let infeasible = |msg: String| Err(Error::Config(format!("relation {}: {msg}", rel.name)));
    if rel.homophily == 1.0 && fraud.len().min(benign.len()) < 2 {
        return infeasible(format!(
            "homophily 1.0 needs ≥ 2 nodes in each class (got {} fraud, {} benign)",
            fraud.len(),
            benign.len()
        ));
    }
    if num_same > same_capacity {
        return infeasible(format!(
            "{num_same} same-label edges requested but only {same_capacity} pairs exist"
        ));
    }
    if num_cross > cross_capacity {
        return infeasible(format!(
            "{num_cross} cross-label edges requested but only {cross_capacity} pairs exist"
        ));
    }

    let fraud_share = fraud.len() as f64 / n as f64;
    let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(target_edges * 2);
    let mut edges = Vec::with_capacity(target_edges);
    let mut budget = 200 * target_edges + 1000;
    let pick = |ids: &[usize], rng: &mut ChaCha8Rng| ids[rng.random_range(0..ids.len())];
    let pick_benign = |rng: &mut ChaCha8Rng| match camouflage_pool {
        Some(pool) if !pool.is_empty() => {
            if rng.random_bool(CAMOUFLAGE_TARGETING) {
                pick(pool, rng)
            } else {
                pick(benign, rng)
            }
        }
        _ => pick(benign, rng),
    };

    let mut remaining_same = num_same;
    let mut remaining_cross = num_cross;
    while remaining_same + remaining_cross > 0 {
        if budget == 0 {
            return infeasible(
                "edge sampling budget exhausted; lower the mean degree or relax homophily".into(),
            );
        }
        budget -= 1;
        let want_same = if remaining_cross == 0 {
            true
        } else if remaining_same == 0 {
            false
        } else {
            // interleave so the RNG stream does not depend on quota order
            rng.random_bool(remaining_same as f64 / (remaining_same + remaining_cross) as f64)
        };
        let (a, b) = if want_same {
            let use_fraud = if fraud.len() < 2 {
                false
            } else if benign.len() < 2 {
                true
            } else {
                rng.random_bool(fraud_share)
            };
            if !use_fraud && benign.len() < 2 {
                return infeasible("no class has two nodes for a same-label edge".into());
            }
            let (a, b) = if use_fraud {
                (pick(fraud, rng), pick(fraud, rng))
            } else {
                (pick_benign(rng), pick_benign(rng))
            };
            if a == b {
                continue;
            }
            (a, b)
        } else {
            (pick(fraud, rng), pick_benign(rng))
        };
        let key = (a.min(b), a.max(b));
        if !seen.insert(key) {
            continue;
        }
        edges.push(key);
        if want_same {
            remaining_same -= 1;
        } else {
            remaining_cross -= 1;
        }
    }
    Ok(edges)
}
