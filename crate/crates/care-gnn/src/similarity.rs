//! Label-aware similarity measure: one scalar predictor per layer, scored
//! through tanh; pairwise distance is the l1 difference of two scores and
//! similarity is one minus that. The measure is trained with a direct
//! cross-entropy loss against node labels (sigmoid path), so similar scores
//! mean similar predicted labels.

use crate::error::{Error, Result};
use crate::numeric::{bce_loss, sigmoid, AffineParams};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMeasure {
    /// One scalar predictor per layer; layer l maps that layer's input
    /// embedding (dimension of h^(l-1)) to a single score.
    layers: Vec<AffineParams>,
}

impl SimilarityMeasure {
    /// `input_dims[l]` is the embedding dimension entering layer l.
    pub fn new(input_dims: &[usize], rng: &mut impl Rng) -> Self {
        SimilarityMeasure {
            layers: input_dims
                .iter()
                .map(|&d| AffineParams::xavier(1, d, rng))
                .collect(),
        }
    }

    pub fn zeros(input_dims: &[usize]) -> Self {
        SimilarityMeasure {
            layers: input_dims.iter().map(|&d| AffineParams::zeros(1, d)).collect(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, layer: usize) -> &AffineParams {
        &self.layers[layer]
    }

    pub fn layer_mut(&mut self, layer: usize) -> &mut AffineParams {
        &mut self.layers[layer]
    }

    pub fn layers_mut(&mut self) -> &mut [AffineParams] {
        &mut self.layers
    }

    /// Raw affine output, before any squashing.
    pub fn logit(&self, layer: usize, h: &[f64]) -> Result<f64> {
        self.check_layer(layer)?;
        self.layers[layer].forward_scalar(h)
    }

    /// tanh-squashed label score in (-1, 1).
    pub fn node_score(&self, layer: usize, h: &[f64]) -> Result<f64> {
        Ok(self.logit(layer, h)?.tanh())
    }

    /// l1 distance of the two nodes' scores, in [0, 2].
    pub fn pair_distance(&self, layer: usize, h_a: &[f64], h_b: &[f64]) -> Result<f64> {
        Ok((self.node_score(layer, h_a)? - self.node_score(layer, h_b)?).abs())
    }

    /// 1 - distance, in [-1, 1]; equals 1 iff the scores coincide.
    pub fn pair_similarity(&self, layer: usize, h_a: &[f64], h_b: &[f64]) -> Result<f64> {
        Ok(1.0 - self.pair_distance(layer, h_a, h_b)?)
    }

    /// Mean binary cross-entropy of sigmoid(logit) against the labels.
    /// This is the supervised loss path; scoring keeps the tanh path.
    pub fn similarity_loss<E: AsRef<[f64]>>(
        &self,
        layer: usize,
        embeddings: &[E],
        labels: &[u8],
    ) -> Result<f64> {
        self.check_layer(layer)?;
        if embeddings.is_empty() {
            return Err(Error::Shape("similarity loss over an empty batch".into()));
        }
        if embeddings.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} embeddings but {} labels",
                embeddings.len(),
                labels.len()
            )));
        }
        let mut total = 0.0;
        for (h, &y) in embeddings.iter().zip(labels) {
            let p = sigmoid(self.logit(layer, h.as_ref())?);
            total += bce_loss(p, y);
        }
        Ok(total / embeddings.len() as f64)
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.layers.len() {
            return Err(Error::Shape(format!(
                "similarity measure has {} layers, layer {layer} requested",
                self.layers.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Mat;

    fn scalar_measure(weight: f64, bias: f64) -> SimilarityMeasure {
        SimilarityMeasure {
            layers: vec![AffineParams {
                weight: Mat {
                    rows: 1,
                    cols: 1,
                    data: vec![weight],
                },
                bias: vec![bias],
            }],
        }
    }

    #[test]
    fn zero_parameters_score_zero() {
        let m = SimilarityMeasure::zeros(&[3]);
        assert_eq!(m.node_score(0, &[4.0, -1.0, 0.3]).unwrap(), 0.0);
    }

    #[test]
    fn large_logit_saturates() {
        let m = scalar_measure(1.0, 0.0);
        let s = m.node_score(0, &[100.0]).unwrap();
        assert!(s > 0.999999 && s <= 1.0);
    }

    #[test]
    fn known_tanh_value() {
        let m = scalar_measure(0.5, 0.0);
        let s = m.node_score(0, &[1.0]).unwrap();
        assert!((s - 0.5f64.tanh()).abs() < 1e-15);
        assert!((s - 0.46211715726000974).abs() < 1e-12);
    }

    #[test]
    fn distance_identity_and_known_value() {
        let m = scalar_measure(0.5, 0.0);
        assert_eq!(m.pair_distance(0, &[1.0], &[1.0]).unwrap(), 0.0);
        let d = m.pair_distance(0, &[1.0], &[2.0]).unwrap();
        assert!((d - 0.29947699869575516).abs() < 1e-12);
        // symmetric
        let d2 = m.pair_distance(0, &[2.0], &[1.0]).unwrap();
        assert_eq!(d, d2);
    }

    #[test]
    fn distance_bound_is_two() {
        let m = scalar_measure(1.0, 0.0);
        let d = m.pair_distance(0, &[1e6], &[-1e6]).unwrap();
        assert!(d <= 2.0 && d > 1.999999);
    }

    #[test]
    fn similarity_values() {
        let m = scalar_measure(0.5, 0.0);
        assert_eq!(m.pair_similarity(0, &[3.0], &[3.0]).unwrap(), 1.0);
        let s = m.pair_similarity(0, &[1.0], &[2.0]).unwrap();
        assert!((s - 0.7005230013042448).abs() < 1e-12);
        let m = scalar_measure(1.0, 0.0);
        let s = m.pair_similarity(0, &[1e6], &[-1e6]).unwrap();
        assert!(s >= -1.0 && s < -0.999999);
    }

    #[test]
    fn distance_is_a_pseudometric() {
        let m = scalar_measure(0.7, 0.1);
        let pts: Vec<Vec<f64>> = vec![vec![-2.0], vec![0.3], vec![1.9], vec![0.3]];
        for a in &pts {
            assert_eq!(m.pair_distance(0, a, a).unwrap(), 0.0);
            for b in &pts {
                let dab = m.pair_distance(0, a, b).unwrap();
                assert!((dab - m.pair_distance(0, b, a).unwrap()).abs() < 1e-15);
                for c in &pts {
                    let dac = m.pair_distance(0, a, c).unwrap();
                    let dcb = m.pair_distance(0, c, b).unwrap();
                    assert!(dab <= dac + dcb + 1e-12);
                }
            }
        }
    }

    #[test]
    fn similarity_strictly_decreases_with_score_gap() {
        let m = scalar_measure(1.0, 0.0);
        let mut prev = f64::INFINITY;
        for x in [0.0, 0.2, 0.5, 1.0, 2.0] {
            let s = m.pair_similarity(0, &[0.0], &[x]).unwrap();
            assert!(s < prev || x == 0.0);
            prev = s;
        }
    }

    #[test]
    fn loss_zero_parameters_is_ln2() {
        let m = SimilarityMeasure::zeros(&[2]);
        let embs = vec![vec![1.0, 2.0], vec![-3.0, 0.0]];
        let loss = m.similarity_loss(0, &embs, &[1, 0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn loss_saturated_correct_logits_is_tiny() {
        let m = scalar_measure(10.0, 0.0);
        let embs = vec![vec![1.0], vec![-1.0]];
        let loss = m.similarity_loss(0, &embs, &[1, 0]).unwrap();
        assert!(loss < 1e-4);
    }

    #[test]
    fn loss_matches_hand_computation() {
        let m = scalar_measure(1.0, -0.5);
        let embs = vec![vec![0.5], vec![1.5], vec![-1.0]];
        let labels = [1u8, 0, 0];
        // logits: 0.0, 1.0, -1.5 → probs: 0.5, σ(1), σ(-1.5)
        let expected = (bce_loss(sigmoid(0.0), 1)
            + bce_loss(sigmoid(1.0), 0)
            + bce_loss(sigmoid(-1.5), 0))
            / 3.0;
        let loss = m.similarity_loss(0, &embs, &labels).unwrap();
        assert!((loss - expected).abs() < 1e-15);
        // fully explicit value
        let hand = (-(0.5f64.ln()) + -(1.0 - sigmoid(1.0)).ln() + -(1.0 - sigmoid(-1.5)).ln()) / 3.0;
        assert!((loss - hand).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_errors() {
        let m = SimilarityMeasure::zeros(&[2]);
        let embs: Vec<Vec<f64>> = vec![];
        assert!(m.similarity_loss(0, &embs, &[]).is_err());
    }

    #[test]
    fn dimension_mismatch_errors() {
        let m = SimilarityMeasure::zeros(&[2]);
        assert!(m.node_score(0, &[1.0]).is_err());
        assert!(m.node_score(1, &[1.0, 2.0]).is_err());
    }
}
