//! Intra-relation aggregation of the selected neighbors (mean then affine
//! then ReLU) and inter-relation combination of the per-relation embeddings
//! with the center node's transformed self term. Four inter-relation
//! weighting strategies: filtering thresholds used verbatim, per-node
//! attention, learned scalars through a softmax, or a plain mean.

use crate::error::{Error, Result};
use crate::numeric::{relu, softmax, AffineParams};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggregatorVariant {
    /// Filtering thresholds p_r double as aggregation weights (not renormalized).
    Threshold,
    /// Per-node softmax attention over relations.
    Attention,
    /// Learned per-relation scalars through a softmax.
    Weight,
    /// Uniform 1/R.
    Mean,
}

impl std::str::FromStr for AggregatorVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "threshold" => Ok(AggregatorVariant::Threshold),
            "attention" | "att" => Ok(AggregatorVariant::Attention),
            "weight" => Ok(AggregatorVariant::Weight),
            "mean" => Ok(AggregatorVariant::Mean),
            other => Err(Error::Config(format!(
                "unknown aggregator variant {other:?} (expected threshold|attention|weight|mean)"
            ))),
        }
    }
}

impl std::fmt::Display for AggregatorVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AggregatorVariant::Threshold => "threshold",
            AggregatorVariant::Attention => "attention",
            AggregatorVariant::Weight => "weight",
            AggregatorVariant::Mean => "mean",
        };
        f.write_str(s)
    }
}

/// Context for computing the R inter-relation weights.
pub enum WeightContext<'a> {
    /// Threshold variant: this layer's current p values.
    Thresholds(&'a [f64]),
    /// Weight variant: uses the stored learned scalars.
    LearnedScalars,
    /// Mean variant.
    Uniform,
    /// Attention variant: the node's transformed self term and its
    /// per-relation embeddings.
    Attention {
        center: &'a [f64],
        relations: &'a [Vec<f64>],
    },
}

/// One layer's aggregation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorParams {
    /// Per-relation transform, in-dim → hidden.
    pub relation: Vec<AffineParams>,
    /// Self transform, in-dim → hidden (maps the center embedding into the
    /// hidden space so the summation in the combine step is well-typed).
    pub self_transform: AffineParams,
    /// Combine transform, hidden → hidden.
    pub combine: AffineParams,
    /// Attention vector of length 2·hidden (Attention variant only).
    pub attention: Option<Vec<f64>>,
    /// R learned scalars (Weight variant only).
    pub relation_scalars: Option<Vec<f64>>,
}

impl AggregatorParams {
    pub fn new(
        variant: AggregatorVariant,
        in_dim: usize,
        hidden_dim: usize,
        num_relations: usize,
        rng: &mut impl Rng,
    ) -> Self {
        AggregatorParams {
            relation: (0..num_relations)
                .map(|_| AffineParams::xavier(hidden_dim, in_dim, rng))
                .collect(),
            self_transform: AffineParams::xavier(hidden_dim, in_dim, rng),
            combine: AffineParams::xavier(hidden_dim, hidden_dim, rng),
            attention: matches!(variant, AggregatorVariant::Attention).then(|| {
                let s = (6.0 / (2 * hidden_dim) as f64).sqrt();
                (0..2 * hidden_dim).map(|_| rng.random_range(-s..s)).collect()
            }),
            relation_scalars: matches!(variant, AggregatorVariant::Weight)
                .then(|| vec![0.0; num_relations]),
        }
    }

    pub fn zeros(
        variant: AggregatorVariant,
        in_dim: usize,
        hidden_dim: usize,
        num_relations: usize,
    ) -> Self {
        AggregatorParams {
            relation: (0..num_relations)
                .map(|_| AffineParams::zeros(hidden_dim, in_dim))
                .collect(),
            self_transform: AffineParams::zeros(hidden_dim, in_dim),
            combine: AffineParams::zeros(hidden_dim, hidden_dim),
            attention: matches!(variant, AggregatorVariant::Attention)
                .then(|| vec![0.0; 2 * hidden_dim]),
            relation_scalars: matches!(variant, AggregatorVariant::Weight)
                .then(|| vec![0.0; num_relations]),
        }
    }

    pub fn num_relations(&self) -> usize {
        self.relation.len()
    }

    pub fn in_dim(&self) -> usize {
        self.self_transform.in_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.self_transform.out_dim()
    }

    /// Mean of the selected neighbors' embeddings; the zero vector when the
    /// selection is empty (keeps shapes static).
    pub fn neighbor_mean(&self, neighbors: &[&[f64]]) -> Vec<f64> {
        let dim = self.in_dim();
        let mut mean = vec![0.0; dim];
        if neighbors.is_empty() {
            return mean;
        }
        for h in neighbors {
            for (m, v) in mean.iter_mut().zip(*h) {
                *m += v;
            }
        }
        let k = neighbors.len() as f64;
        for m in &mut mean {
            *m /= k;
        }
        mean
    }

    /// Pre-activation and output of the intra-relation step for one node:
    /// ReLU(W_r·mean + b_r).
    pub fn intra_from_mean(&self, relation: usize, mean: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if relation >= self.relation.len() {
            return Err(Error::Shape(format!(
                "relation index {relation} out of range (R = {})",
                self.relation.len()
            )));
        }
        let pre = self.relation[relation].forward(mean)?;
        let out = pre.iter().map(|&v| relu(v)).collect();
        Ok((pre, out))
    }

    /// ReLU(W_r · mean(selected neighbors)), the intra-relation embedding.
    pub fn intra_relation_aggregate(
        &self,
        relation: usize,
        neighbors: &[&[f64]],
    ) -> Result<Vec<f64>> {
        for h in neighbors {
            if h.len() != self.in_dim() {
                return Err(Error::Shape(format!(
                    "neighbor embedding has dim {}, expected {}",
                    h.len(),
                    self.in_dim()
                )));
            }
        }
        let mean = self.neighbor_mean(neighbors);
        Ok(self.intra_from_mean(relation, &mean)?.1)
    }

    /// The transformed center term c_v = W_self·h_v + b_self.
    pub fn center_transform(&self, h_prev: &[f64]) -> Result<Vec<f64>> {
        self.self_transform.forward(h_prev)
    }

    /// The R inter-relation weights for the given variant.
    pub fn relation_weights(
        &self,
        variant: AggregatorVariant,
        context: WeightContext<'_>,
    ) -> Result<Vec<f64>> {
        let r = self.num_relations();
        match (variant, context) {
            (AggregatorVariant::Threshold, WeightContext::Thresholds(p)) => {
                if p.len() != r {
                    return Err(Error::Shape(format!("{} thresholds for R = {r}", p.len())));
                }
                Ok(p.to_vec())
            }
            (AggregatorVariant::Mean, WeightContext::Uniform) => Ok(vec![1.0 / r as f64; r]),
            (AggregatorVariant::Weight, WeightContext::LearnedScalars) => {
                let scalars = self
                    .relation_scalars
                    .as_ref()
                    .ok_or_else(|| Error::Shape("weight variant without learned scalars".into()))?;
                Ok(softmax(scalars))
            }
            (AggregatorVariant::Attention, WeightContext::Attention { center, relations }) => {
                Ok(softmax(&self.attention_logits(center, relations)?))
            }
            _ => Err(Error::Config(
                "relation-weight context does not match the aggregator variant".into(),
            )),
        }
    }

    /// Attention logits e_r = a · concat(center, h_{v,r}).
    pub fn attention_logits(&self, center: &[f64], relations: &[Vec<f64>]) -> Result<Vec<f64>> {
        let a = self
            .attention
            .as_ref()
            .ok_or_else(|| Error::Shape("attention variant without attention vector".into()))?;
        let hid = self.hidden_dim();
        if center.len() != hid || relations.iter().any(|h| h.len() != hid) {
            return Err(Error::Shape("attention inputs must have hidden dim".into()));
        }
        let (a_center, a_rel) = a.split_at(hid);
        let center_part: f64 = a_center.iter().zip(center).map(|(x, y)| x * y).sum();
        Ok(relations
            .iter()
            .map(|h| center_part + a_rel.iter().zip(h).map(|(x, y)| x * y).sum::<f64>())
            .collect())
    }

    /// Combine step pieces for one node, given the precomputed center term:
    /// s = c_v + Σ_r w_r·h_{v,r}; returns (s, pre, out) where
    /// out = ReLU(W_all·s + b_all).
    pub fn combine_from_center(
        &self,
        center: &[f64],
        relation_embs: &[Vec<f64>],
        weights: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let r = self.num_relations();
        if relation_embs.len() != r || weights.len() != r {
            return Err(Error::Shape(format!(
                "expected {r} relation embeddings and weights, got {} and {}",
                relation_embs.len(),
                weights.len()
            )));
        }
        let hid = self.hidden_dim();
        let mut s = center.to_vec();
        if s.len() != hid {
            return Err(Error::Shape("center term must have hidden dim".into()));
        }
        for (h, &w) in relation_embs.iter().zip(weights) {
            if h.len() != hid {
                return Err(Error::Shape("relation embedding must have hidden dim".into()));
            }
            for (sv, hv) in s.iter_mut().zip(h) {
                *sv += w * hv;
            }
        }
        let pre = self.combine.forward(&s)?;
        let out = pre.iter().map(|&v| relu(v)).collect();
        Ok((s, pre, out))
    }

    /// ReLU(W_all·(W_self·h_v + Σ_r w_r·h_{v,r})), the layer output.
    pub fn inter_relation_aggregate(
        &self,
        h_prev: &[f64],
        relation_embs: &[Vec<f64>],
        weights: &[f64],
    ) -> Result<Vec<f64>> {
        let center = self.center_transform(h_prev)?;
        Ok(self.combine_from_center(&center, relation_embs, weights)?.2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Mat;

    fn identity_affine(dim: usize) -> AffineParams {
        let mut m = Mat::zeros(dim, dim);
        for i in 0..dim {
            *m.at_mut(i, i) = 1.0;
        }
        AffineParams {
            weight: m,
            bias: vec![0.0; dim],
        }
    }

    fn identity_params(dim: usize, num_relations: usize) -> AggregatorParams {
        AggregatorParams {
            relation: (0..num_relations).map(|_| identity_affine(dim)).collect(),
            self_transform: identity_affine(dim),
            combine: identity_affine(dim),
            attention: None,
            relation_scalars: None,
        }
    }

    #[test]
    fn intra_single_neighbor_identity() {
        let p = identity_params(2, 1);
        let h = vec![0.5, -0.25];
        let out = p.intra_relation_aggregate(0, &[&h]).unwrap();
        assert_eq!(out, vec![0.5, 0.0]); // ReLU clips the negative entry
    }

    #[test]
    fn intra_opposite_neighbors_cancel_to_bias() {
        let mut p = identity_params(2, 1);
        p.relation[0].bias = vec![0.3, -0.2];
        let e = vec![1.0, 2.0];
        let ne = vec![-1.0, -2.0];
        let out = p.intra_relation_aggregate(0, &[&e, &ne]).unwrap();
        assert_eq!(out, vec![0.3, 0.0]);
    }

    #[test]
    fn intra_empty_selection_gives_relu_bias() {
        let mut p = identity_params(2, 1);
        p.relation[0].bias = vec![0.7, -0.4];
        let out = p.intra_relation_aggregate(0, &[]).unwrap();
        assert_eq!(out, vec![0.7, 0.0]);
    }

    #[test]
    fn intra_is_order_invariant() {
        let p = identity_params(3, 1);
        let a = vec![1.0, 2.0, 3.0];
        let b = vec![-1.0, 0.5, 2.0];
        let c = vec![0.0, 0.0, 1.0];
        let o1 = p.intra_relation_aggregate(0, &[&a, &b, &c]).unwrap();
        let o2 = p.intra_relation_aggregate(0, &[&c, &a, &b]).unwrap();
        for (x, y) in o1.iter().zip(&o2) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn mean_weights_are_uniform() {
        let p = identity_params(2, 3);
        let w = p
            .relation_weights(AggregatorVariant::Mean, WeightContext::Uniform)
            .unwrap();
        assert_eq!(w, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn threshold_weights_pass_through() {
        let p = identity_params(2, 3);
        let thresholds = [0.58, 0.30, 0.02];
        let w = p
            .relation_weights(
                AggregatorVariant::Threshold,
                WeightContext::Thresholds(&thresholds),
            )
            .unwrap();
        assert_eq!(w, thresholds.to_vec());
    }

    #[test]
    fn equal_scalars_give_uniform_weights() {
        let mut p = identity_params(2, 4);
        p.relation_scalars = Some(vec![0.7; 4]);
        let w = p
            .relation_weights(AggregatorVariant::Weight, WeightContext::LearnedScalars)
            .unwrap();
        for v in &w {
            assert!((v - 0.25).abs() < 1e-15);
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn attention_weights_sum_to_one() {
        let mut p = identity_params(2, 3);
        p.attention = Some(vec![0.3, -0.1, 0.2, 0.5]);
        let rels = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]];
        let w = p
            .relation_weights(
                AggregatorVariant::Attention,
                WeightContext::Attention {
                    center: &[0.2, 0.4],
                    relations: &rels,
                },
            )
            .unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn variant_context_mismatch_errors() {
        let p = identity_params(2, 2);
        assert!(p
            .relation_weights(AggregatorVariant::Mean, WeightContext::Thresholds(&[0.5, 0.5]))
            .is_err());
        assert!(p
            .relation_weights(AggregatorVariant::Weight, WeightContext::LearnedScalars)
            .is_err()); // scalars absent
    }

    #[test]
    fn inter_self_term_only() {
        let p = identity_params(2, 1);
        let h = vec![0.6, -0.1];
        let out = p
            .inter_relation_aggregate(&h, &[vec![0.0, 0.0]], &[0.9])
            .unwrap();
        assert_eq!(out, vec![0.6, 0.0]);
        // zero weights: relation embedding is ignored entirely
        let out = p
            .inter_relation_aggregate(&h, &[vec![5.0, 5.0]], &[0.0])
            .unwrap();
        assert_eq!(out, vec![0.6, 0.0]);
    }

    #[test]
    fn inter_matches_hand_computation() {
        // R = 2, 2-D, identity transforms: out = ReLU(h + w0·e0 + w1·e1)
        let p = identity_params(2, 2);
        let h = vec![0.1, 0.2];
        let e0 = vec![1.0, -1.0];
        let e1 = vec![0.5, 0.5];
        let out = p
            .inter_relation_aggregate(&h, &[e0, e1], &[0.6, 0.4])
            .unwrap();
        let want = [0.1 + 0.6 + 0.2, 0.2 - 0.6 + 0.2];
        assert!((out[0] - want[0]).abs() < 1e-15);
        assert!((out[1] - relu(want[1])).abs() < 1e-15);
    }

    #[test]
    fn inter_invariant_under_matched_relation_permutation() {
        let p = identity_params(2, 3);
        let h = vec![0.3, 0.3];
        let embs = vec![vec![1.0, 2.0], vec![-0.5, 0.25], vec![0.0, 1.0]];
        let w = [0.5, 0.3, 0.9];
        let out = p.inter_relation_aggregate(&h, &embs, &w).unwrap();
        let perm = [2usize, 0, 1];
        let embs_p: Vec<Vec<f64>> = perm.iter().map(|&i| embs[i].clone()).collect();
        let w_p: Vec<f64> = perm.iter().map(|&i| w[i]).collect();
        let out_p = p.inter_relation_aggregate(&h, &embs_p, &w_p).unwrap();
        for (x, y) in out.iter().zip(&out_p) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_errors() {
        let p = identity_params(2, 1);
        assert!(p.intra_relation_aggregate(0, &[&[1.0][..]]).is_err());
        assert!(p
            .inter_relation_aggregate(&[1.0, 2.0], &[vec![1.0]], &[0.5])
            .is_err());
        assert!(p
            .inter_relation_aggregate(&[1.0, 2.0], &[vec![1.0, 2.0]], &[0.5, 0.5])
            .is_err());
    }
}
