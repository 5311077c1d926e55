//! The full model: per-layer similarity scoring → top-p neighbor filtering →
//! intra/inter-relation aggregation → scalar classifier, with a recorded
//! forward pass and an exact hand-derived backward pass.
//!
//! Gradients do not flow through the discrete top-p selection or through the
//! threshold values used as aggregation weights: selections and thresholds
//! are constants within a batch. The similarity measure is trained only by
//! its own supervised loss at the first layer.

use crate::aggregation::{AggregatorParams, AggregatorVariant, WeightContext};
use crate::error::{Error, Result};
use crate::graph::MultiRelationGraph;
use crate::numeric::{
    bce_grad_logit, bce_loss, l2_grad, l2_penalty, relu_backward, sigmoid, softmax_backward,
    AffineParams, GradientSet,
};
use crate::selector::{top_p_select, ThresholdController};
use crate::similarity::SimilarityMeasure;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct CareModel {
    pub feature_dim: usize,
    pub embedding_dim: usize,
    pub num_layers: usize,
    pub num_relations: usize,
    pub variant: AggregatorVariant,
    pub similarity: SimilarityMeasure,
    pub layers: Vec<AggregatorParams>,
    pub classifier: AffineParams,
    pub controller: ThresholdController,
}

/// Intermediates for one (node, relation) at one layer.
#[derive(Debug, Clone)]
pub struct RelationRecord {
    /// Selected neighbor ids, descending similarity.
    pub selected: Vec<usize>,
    /// Distance to each selected neighbor (1 - similarity).
    pub distances: Vec<f64>,
    pub mean_in: Vec<f64>,
    pub intra_pre: Vec<f64>,
    pub intra_out: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NodeRecord {
    pub relations: Vec<RelationRecord>,
    /// c_v = W_self·h_in + b_self.
    pub center: Vec<f64>,
    pub weights: Vec<f64>,
    /// s = c_v + Σ_r w_r·h_{v,r}.
    pub combined: Vec<f64>,
    pub inter_pre: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerRecord {
    /// Nodes whose output embedding this layer computes. The last layer's
    /// list is exactly the batch, in batch order.
    pub ids: Vec<usize>,
    pub pos: HashMap<usize, usize>,
    pub nodes: Vec<NodeRecord>,
    pub h_out: Vec<Vec<f64>>,
}

/// Everything the backward pass and the bandit need from one batch.
#[derive(Debug, Clone)]
pub struct ForwardRecord {
    pub batch: Vec<usize>,
    pub layers: Vec<LayerRecord>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    /// Raw layer-1 similarity-measure outputs on the batch nodes' features.
    pub simi_logits: Vec<f64>,
}

/// Frozen top-p selections of one batch, used to re-run the differentiable
/// part of the forward pass with perturbed parameters (finite differences).
#[derive(Debug, Clone)]
pub struct BatchSelection {
    /// per layer → per frontier node → per relation → selected ids.
    pub per_layer: Vec<Vec<Vec<Vec<usize>>>>,
}

#[derive(Debug, Clone, Copy)]
pub struct Losses {
    pub gnn: f64,
    pub simi: f64,
    pub care: f64,
}

/// L_GNN (mean BCE of the classifier probabilities) and the total loss
/// L_GNN + λ₁·L_simi + λ₂·Σw².
pub fn compute_losses(
    probs: &[f64],
    simi_loss: f64,
    labels: &[u8],
    lambda1: f64,
    lambda2: f64,
    param_groups: &[(String, &[f64])],
) -> (f64, f64) {
    debug_assert_eq!(probs.len(), labels.len());
    let gnn = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| bce_loss(p, y))
        .sum::<f64>()
        / probs.len().max(1) as f64;
    let care = gnn + lambda1 * simi_loss + l2_penalty(param_groups, lambda2);
    (gnn, care)
}

impl ForwardRecord {
    pub fn selection(&self) -> BatchSelection {
        BatchSelection {
            per_layer: self
                .layers
                .iter()
                .map(|layer| {
                    layer
                        .nodes
                        .iter()
                        .map(|n| n.relations.iter().map(|r| r.selected.clone()).collect())
                        .collect()
                })
                .collect(),
        }
    }
}

impl CareModel {
    pub fn new(
        feature_dim: usize,
        embedding_dim: usize,
        num_layers: usize,
        num_relations: usize,
        variant: AggregatorVariant,
        controller: ThresholdController,
        seed: u64,
    ) -> Self {
        assert!(num_layers >= 1 && num_relations >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut input_dims = vec![feature_dim];
        input_dims.extend(std::iter::repeat(embedding_dim).take(num_layers - 1));
        let similarity = SimilarityMeasure::new(&input_dims, &mut rng);
        let layers = input_dims
            .iter()
            .map(|&d| AggregatorParams::new(variant, d, embedding_dim, num_relations, &mut rng))
            .collect();
        let classifier = AffineParams::xavier(1, embedding_dim, &mut rng);
        CareModel {
            feature_dim,
            embedding_dim,
            num_layers,
            num_relations,
            variant,
            similarity,
            layers,
            classifier,
            controller,
        }
    }

    /// All parameters zero; the classifier then outputs probability 0.5
    /// everywhere. Useful as a fixed starting point in tests.
    pub fn zeros(
        feature_dim: usize,
        embedding_dim: usize,
        num_layers: usize,
        num_relations: usize,
        variant: AggregatorVariant,
        controller: ThresholdController,
    ) -> Self {
        let mut input_dims = vec![feature_dim];
        input_dims.extend(std::iter::repeat(embedding_dim).take(num_layers - 1));
        CareModel {
            feature_dim,
            embedding_dim,
            num_layers,
            num_relations,
            variant,
            similarity: SimilarityMeasure::zeros(&input_dims),
            layers: input_dims
                .iter()
                .map(|&d| AggregatorParams::zeros(variant, d, embedding_dim, num_relations))
                .collect(),
            classifier: AffineParams::zeros(1, embedding_dim),
            controller,
        }
    }

    pub fn layer_input_dim(&self, layer_idx: usize) -> usize {
        if layer_idx == 0 {
            self.feature_dim
        } else {
            self.embedding_dim
        }
    }

    /// Named parameter groups in a fixed order (the optimizer, gradient set,
    /// and checkpoint all share it).
    pub fn param_groups(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (l, _) in self.layers.iter().enumerate() {
            let aff = self.similarity.layer(l);
            out.push((format!("simi.l{}.weight", l + 1), &aff.weight.data));
            out.push((format!("simi.l{}.bias", l + 1), &aff.bias));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            for (r, aff) in layer.relation.iter().enumerate() {
                out.push((format!("agg.l{}.rel{r}.weight", l + 1), &aff.weight.data));
                out.push((format!("agg.l{}.rel{r}.bias", l + 1), &aff.bias));
            }
            out.push((format!("agg.l{}.self.weight", l + 1), &layer.self_transform.weight.data));
            out.push((format!("agg.l{}.self.bias", l + 1), &layer.self_transform.bias));
            out.push((format!("agg.l{}.all.weight", l + 1), &layer.combine.weight.data));
            out.push((format!("agg.l{}.all.bias", l + 1), &layer.combine.bias));
            if let Some(att) = &layer.attention {
                out.push((format!("agg.l{}.att", l + 1), att));
            }
            if let Some(scalars) = &layer.relation_scalars {
                out.push((format!("agg.l{}.relw", l + 1), scalars));
            }
        }
        out.push(("clf.weight".to_string(), &self.classifier.weight.data));
        out.push(("clf.bias".to_string(), &self.classifier.bias));
        out
    }

    pub fn param_groups_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (l, aff) in self.similarity.layers_mut().iter_mut().enumerate() {
            let AffineParams { weight, bias } = aff;
            out.push((format!("simi.l{}.weight", l + 1), &mut weight.data));
            out.push((format!("simi.l{}.bias", l + 1), bias));
        }
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (r, aff) in layer.relation.iter_mut().enumerate() {
                let AffineParams { weight, bias } = aff;
                out.push((format!("agg.l{}.rel{r}.weight", l + 1), &mut weight.data));
                out.push((format!("agg.l{}.rel{r}.bias", l + 1), bias));
            }
            let AffineParams { weight, bias } = &mut layer.self_transform;
            out.push((format!("agg.l{}.self.weight", l + 1), &mut weight.data));
            out.push((format!("agg.l{}.self.bias", l + 1), bias));
            let AffineParams { weight, bias } = &mut layer.combine;
            out.push((format!("agg.l{}.all.weight", l + 1), &mut weight.data));
            out.push((format!("agg.l{}.all.bias", l + 1), bias));
            if let Some(att) = &mut layer.attention {
                out.push((format!("agg.l{}.att", l + 1), att));
            }
            if let Some(scalars) = &mut layer.relation_scalars {
                out.push((format!("agg.l{}.relw", l + 1), scalars));
            }
        }
        let AffineParams { weight, bias } = &mut self.classifier;
        out.push(("clf.weight".to_string(), &mut weight.data));
        out.push(("clf.bias".to_string(), bias));
        out
    }

    pub fn param_shapes(&self) -> Vec<(String, usize)> {
        self.param_groups()
            .into_iter()
            .map(|(n, g)| (n, g.len()))
            .collect()
    }

    /// Parameter tensors with their true shapes, for checkpointing.
    pub fn tensor_entries(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out = Vec::new();
        let affine = |name: String, aff: &AffineParams, out: &mut Vec<_>| {
            out.push((
                format!("{name}.weight"),
                vec![aff.out_dim(), aff.in_dim()],
                aff.weight.data.clone(),
            ));
            out.push((format!("{name}.bias"), vec![aff.out_dim()], aff.bias.clone()));
        };
        for l in 0..self.num_layers {
            affine(format!("simi.l{}", l + 1), self.similarity.layer(l), &mut out);
        }
        for (l, layer) in self.layers.iter().enumerate() {
            for (r, aff) in layer.relation.iter().enumerate() {
                affine(format!("agg.l{}.rel{r}", l + 1), aff, &mut out);
            }
            affine(format!("agg.l{}.self", l + 1), &layer.self_transform, &mut out);
            affine(format!("agg.l{}.all", l + 1), &layer.combine, &mut out);
            if let Some(att) = &layer.attention {
                out.push((format!("agg.l{}.att", l + 1), vec![att.len()], att.clone()));
            }
            if let Some(scalars) = &layer.relation_scalars {
                out.push((format!("agg.l{}.relw", l + 1), vec![scalars.len()], scalars.clone()));
            }
        }
        affine("clf".to_string(), &self.classifier, &mut out);
        out
    }

    fn check_graph(&self, graph: &MultiRelationGraph) -> Result<()> {
        if graph.feature_dim() != self.feature_dim {
            return Err(Error::Shape(format!(
                "model expects feature dim {}, graph has {}",
                self.feature_dim,
                graph.feature_dim()
            )));
        }
        if graph.num_relations() != self.num_relations {
            return Err(Error::Shape(format!(
                "model expects {} relations, graph has {}",
                self.num_relations,
                graph.num_relations()
            )));
        }
        Ok(())
    }

    /// Node sets whose output each layer computes: the last layer covers the
    /// batch; each earlier layer additionally covers all neighbors of the
    /// layer above (similarity ranking needs the full neighborhood).
    fn frontiers(&self, graph: &MultiRelationGraph, batch: &[usize]) -> Result<Vec<Vec<usize>>> {
        for &v in batch {
            if v >= graph.num_nodes() {
                return Err(Error::Graph(format!(
                    "batch node id {v} out of range (n = {})",
                    graph.num_nodes()
                )));
            }
        }
        let mut fronts = vec![Vec::new(); self.num_layers];
        fronts[self.num_layers - 1] = batch.to_vec();
        for l in (1..self.num_layers).rev() {
            let mut wider = fronts[l].clone();
            for &v in &fronts[l] {
                for r in 0..self.num_relations {
                    wider.extend_from_slice(graph.neighbors(r, v)?);
                }
            }
            wider.sort_unstable();
            wider.dedup();
            fronts[l - 1] = wider;
        }
        Ok(fronts)
    }

    /// Forward pass computing top-p selections from the current thresholds.
    pub fn forward_batch(
        &self,
        graph: &MultiRelationGraph,
        batch: &[usize],
    ) -> Result<ForwardRecord> {
        self.forward_internal(graph, batch, None)
    }

    /// Forward pass reusing frozen selections (the differentiable part only;
    /// this is what the analytic gradient differentiates).
    pub fn forward_with_selection(
        &self,
        graph: &MultiRelationGraph,
        batch: &[usize],
        selection: &BatchSelection,
    ) -> Result<ForwardRecord> {
        self.forward_internal(graph, batch, Some(selection))
    }

    fn forward_internal(
        &self,
        graph: &MultiRelationGraph,
        batch: &[usize],
        fixed: Option<&BatchSelection>,
    ) -> Result<ForwardRecord> {
        self.check_graph(graph)?;
        if batch.is_empty() {
            return Err(Error::Shape("forward pass over an empty batch".into()));
        }
        let fronts = self.frontiers(graph, batch)?;
        let mut layers: Vec<LayerRecord> = Vec::with_capacity(self.num_layers);

        for l_idx in 0..self.num_layers {
            let ids = fronts[l_idx].clone();
            let pos: HashMap<usize, usize> =
                ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            let params = &self.layers[l_idx];

            // each node's score is computed once per layer; an edge's
            // similarity combines two cached scores
            let mut scores: HashMap<usize, f64> = HashMap::new();
            let mut score_of = |node: usize, layers: &[LayerRecord]| -> Result<f64> {
                if let Some(&s) = scores.get(&node) {
                    return Ok(s);
                }
                let s = self
                    .similarity
                    .node_score(l_idx, self.input_embedding(graph, layers, l_idx, node))?;
                scores.insert(node, s);
                Ok(s)
            };

            // layer-uniform weights for the non-attention variants
            let shared_weights = match self.variant {
                AggregatorVariant::Threshold => Some(params.relation_weights(
                    self.variant,
                    WeightContext::Thresholds(&self.controller.thresholds(l_idx)),
                )?),
                AggregatorVariant::Mean => {
                    Some(params.relation_weights(self.variant, WeightContext::Uniform)?)
                }
                AggregatorVariant::Weight => {
                    Some(params.relation_weights(self.variant, WeightContext::LearnedScalars)?)
                }
                AggregatorVariant::Attention => None,
            };

            let mut nodes = Vec::with_capacity(ids.len());
            let mut h_out = Vec::with_capacity(ids.len());
            for (i, &v) in ids.iter().enumerate() {
                let score_v = score_of(v, &layers)?;
                let mut relations = Vec::with_capacity(self.num_relations);
                for r in 0..self.num_relations {
                    let nbrs = graph.neighbors(r, v)?;
                    let selected = match fixed {
                        Some(sel) => sel.per_layer[l_idx][i][r].clone(),
                        None => {
                            let mut sims = Vec::with_capacity(nbrs.len());
                            for &u in nbrs {
                                sims.push(1.0 - (score_v - score_of(u, &layers)?).abs());
                            }
                            top_p_select(nbrs, &sims, self.controller.threshold(l_idx, r))?
                        }
                    };
                    let mut distances = Vec::with_capacity(selected.len());
                    for &u in &selected {
                        distances.push((score_v - score_of(u, &layers)?).abs());
                    }
                    let neighbor_embs: Vec<&[f64]> = selected
                        .iter()
                        .map(|&u| self.input_embedding(graph, &layers, l_idx, u))
                        .collect();
                    let mean_in = params.neighbor_mean(&neighbor_embs);
                    let (intra_pre, intra_out) = params.intra_from_mean(r, &mean_in)?;
                    relations.push(RelationRecord {
                        selected,
                        distances,
                        mean_in,
                        intra_pre,
                        intra_out,
                    });
                }
                let h_in = self.input_embedding(graph, &layers, l_idx, v);
                let center = params.center_transform(h_in)?;
                let weights = match &shared_weights {
                    Some(w) => w.clone(),
                    None => {
                        let rel_embs: Vec<Vec<f64>> =
                            relations.iter().map(|r| r.intra_out.clone()).collect();
                        params.relation_weights(
                            self.variant,
                            WeightContext::Attention {
                                center: &center,
                                relations: &rel_embs,
                            },
                        )?
                    }
                };
                let rel_embs: Vec<Vec<f64>> =
                    relations.iter().map(|r| r.intra_out.clone()).collect();
                let (combined, inter_pre, out) =
                    params.combine_from_center(&center, &rel_embs, &weights)?;
                nodes.push(NodeRecord {
                    relations,
                    center,
                    weights,
                    combined,
                    inter_pre,
                });
                h_out.push(out);
            }
            layers.push(LayerRecord {
                ids,
                pos,
                nodes,
                h_out,
            });
        }

        let top = layers.last().unwrap();
        let mut logits = Vec::with_capacity(batch.len());
        let mut probs = Vec::with_capacity(batch.len());
        for z in &top.h_out {
            let logit = self.classifier.forward_scalar(z)?;
            logits.push(logit);
            probs.push(sigmoid(logit));
        }
        let mut simi_logits = Vec::with_capacity(batch.len());
        for &v in batch {
            simi_logits.push(self.similarity.logit(0, graph.feature(v))?);
        }
        Ok(ForwardRecord {
            batch: batch.to_vec(),
            layers,
            logits,
            probs,
            simi_logits,
        })
    }

    fn input_embedding<'a>(
        &self,
        graph: &'a MultiRelationGraph,
        layers: &'a [LayerRecord],
        layer_idx: usize,
        node: usize,
    ) -> &'a [f64] {
        if layer_idx == 0 {
            graph.feature(node)
        } else {
            let prev = &layers[layer_idx - 1];
            &prev.h_out[prev.pos[&node]]
        }
    }

    /// Loss triple for a recorded batch.
    pub fn losses(
        &self,
        record: &ForwardRecord,
        labels: &[u8],
        lambda1: f64,
        lambda2: f64,
    ) -> Losses {
        let simi = record
            .simi_logits
            .iter()
            .zip(labels)
            .map(|(&z, &y)| bce_loss(sigmoid(z), y))
            .sum::<f64>()
            / record.simi_logits.len().max(1) as f64;
        let (gnn, care) = compute_losses(
            &record.probs,
            simi,
            labels,
            lambda1,
            lambda2,
            &self.param_groups(),
        );
        Losses {
            gnn,
            simi,
            care,
        }
    }

    /// Total loss under frozen selections; the function of the parameters
    /// that `backward` differentiates.
    pub fn loss_with_selection(
        &self,
        graph: &MultiRelationGraph,
        batch: &[usize],
        selection: &BatchSelection,
        labels: &[u8],
        lambda1: f64,
        lambda2: f64,
    ) -> Result<f64> {
        let record = self.forward_with_selection(graph, batch, selection)?;
        Ok(self.losses(&record, labels, lambda1, lambda2).care)
    }

    /// Exact gradients of the batch loss with respect to every parameter
    /// group, treating selections and threshold weights as constants.
    pub fn backward(
        &self,
        graph: &MultiRelationGraph,
        record: &ForwardRecord,
        labels: &[u8],
        lambda1: f64,
        lambda2: f64,
    ) -> Result<GradientSet> {
        if labels.len() != record.batch.len() {
            return Err(Error::Shape(format!(
                "{} labels for a batch of {}",
                labels.len(),
                record.batch.len()
            )));
        }
        let mut grads = GradientSet::zeros(&self.param_shapes());
        let inv_batch = 1.0 / record.batch.len() as f64;

        // classifier head and the gradient flowing into the final embeddings
        let top = record.layers.last().unwrap();
        let mut d_out: Vec<Vec<f64>> = vec![vec![0.0; self.embedding_dim]; top.ids.len()];
        for (i, (&prob, &label)) in record.probs.iter().zip(labels).enumerate() {
            let dlogit = bce_grad_logit(prob, label) * inv_batch;
            let z = &top.h_out[i];
            let (dw, db) = grads.get2_mut("clf.weight", "clf.bias");
            let dz = self.classifier.backward(z, &[dlogit], dw, db);
            for (acc, d) in d_out[i].iter_mut().zip(&dz) {
                *acc += d;
            }
        }

        // similarity head: supervised loss at the first layer only
        if lambda1 != 0.0 {
            for (i, &v) in record.batch.iter().enumerate() {
                let p = sigmoid(record.simi_logits[i]);
                let dlogit = lambda1 * bce_grad_logit(p, labels[i]) * inv_batch;
                let x = graph.feature(v);
                let aff = self.similarity.layer(0);
                let (dw, db) = grads.get2_mut("simi.l1.weight", "simi.l1.bias");
                aff.backward(x, &[dlogit], dw, db);
            }
        }

        // aggregation layers, top down
        for l_idx in (0..self.num_layers).rev() {
            let layer_rec = &record.layers[l_idx];
            let params = &self.layers[l_idx];
            let lname = l_idx + 1;
            let hid = self.embedding_dim;
            let mut d_in: Vec<Vec<f64>> = if l_idx > 0 {
                vec![vec![0.0; hid]; record.layers[l_idx - 1].ids.len()]
            } else {
                Vec::new()
            };
            // Weight variant: the softmax input is shared across nodes, so
            // accumulate dL/dw over the layer and push through once.
            let mut dw_shared = vec![0.0; self.num_relations];

            for (i, &v) in layer_rec.ids.iter().enumerate() {
                let dh = &d_out[i];
                if dh.iter().all(|&x| x == 0.0) {
                    continue;
                }
                let node = &layer_rec.nodes[i];

                let mut du = dh.clone();
                relu_backward(&node.inter_pre, &mut du);
                let ds = {
                    let (dw, db) = grads.get2_mut(
                        &format!("agg.l{lname}.all.weight"),
                        &format!("agg.l{lname}.all.bias"),
                    );
                    params.combine.backward(&node.combined, &du, dw, db)
                };

                // dL/dw_r before any reparameterization
                let g_weights: Vec<f64> = node
                    .relations
                    .iter()
                    .map(|rel| ds.iter().zip(&rel.intra_out).map(|(a, b)| a * b).sum())
                    .collect();

                let mut dc = ds.clone();
                let mut d_rel: Vec<Vec<f64>> = node
                    .weights
                    .iter()
                    .map(|&w| ds.iter().map(|x| x * w).collect())
                    .collect();

                match self.variant {
                    AggregatorVariant::Threshold | AggregatorVariant::Mean => {}
                    AggregatorVariant::Weight => {
                        for (acc, g) in dw_shared.iter_mut().zip(&g_weights) {
                            *acc += g;
                        }
                    }
                    AggregatorVariant::Attention => {
                        let de = softmax_backward(&node.weights, &g_weights);
                        let de_sum: f64 = de.iter().sum();
                        let att = params.attention.as_ref().expect("attention params");
                        let (a_center, a_rel) = att.split_at(hid);
                        let datt = grads.get_mut(&format!("agg.l{lname}.att"));
                        for (k, c) in node.center.iter().enumerate() {
                            datt[k] += de_sum * c;
                        }
                        for (r, rel) in node.relations.iter().enumerate() {
                            for (k, h) in rel.intra_out.iter().enumerate() {
                                datt[hid + k] += de[r] * h;
                            }
                        }
                        for (d, a) in dc.iter_mut().zip(a_center) {
                            *d += de_sum * a;
                        }
                        for (r, dr) in d_rel.iter_mut().enumerate() {
                            for (d, a) in dr.iter_mut().zip(a_rel) {
                                *d += de[r] * a;
                            }
                        }
                    }
                }

                // self path: c_v = W_self·h_in + b_self
                let h_in = self.input_embedding(graph, &record.layers, l_idx, v);
                let dx_self = {
                    let (dw, db) = grads.get2_mut(
                        &format!("agg.l{lname}.self.weight"),
                        &format!("agg.l{lname}.self.bias"),
                    );
                    params.self_transform.backward(h_in, &dc, dw, db)
                };
                if l_idx > 0 {
                    let prev = &record.layers[l_idx - 1];
                    let acc = &mut d_in[prev.pos[&v]];
                    for (a, d) in acc.iter_mut().zip(&dx_self) {
                        *a += d;
                    }
                }

                // intra paths
                for (r, rel) in node.relations.iter().enumerate() {
                    let mut dq = d_rel[r].clone();
                    relu_backward(&rel.intra_pre, &mut dq);
                    let dmean = {
                        let (dw, db) = grads.get2_mut(
                            &format!("agg.l{lname}.rel{r}.weight"),
                            &format!("agg.l{lname}.rel{r}.bias"),
                        );
                        params.relation[r].backward(&rel.mean_in, &dq, dw, db)
                    };
                    if l_idx > 0 && !rel.selected.is_empty() {
                        let prev = &record.layers[l_idx - 1];
                        let scale = 1.0 / rel.selected.len() as f64;
                        for &u in &rel.selected {
                            let acc = &mut d_in[prev.pos[&u]];
                            for (a, d) in acc.iter_mut().zip(&dmean) {
                                *a += d * scale;
                            }
                        }
                    }
                }
            }

            if self.variant == AggregatorVariant::Weight {
                let weights =
                    params.relation_weights(self.variant, WeightContext::LearnedScalars)?;
                let dtheta = softmax_backward(&weights, &dw_shared);
                let g = grads.get_mut(&format!("agg.l{lname}.relw"));
                for (a, d) in g.iter_mut().zip(&dtheta) {
                    *a += d;
                }
            }
            d_out = d_in;
        }

        l2_grad(&mut grads, &self.param_groups(), lambda2);
        Ok(grads)
    }

    /// Suspiciousness probabilities for arbitrary nodes under the current
    /// (frozen or in-training) thresholds. Deterministic.
    pub fn predict(&self, graph: &MultiRelationGraph, node_ids: &[usize]) -> Result<Vec<f64>> {
        if node_ids.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.forward_batch(graph, node_ids)?.probs)
    }

    /// Raw layer-1 similarity-head probability for one node.
    pub fn simi_head_probability(&self, graph: &MultiRelationGraph, node: usize) -> Result<f64> {
        if node >= graph.num_nodes() {
            return Err(Error::Graph(format!(
                "node id {node} out of range (n = {})",
                graph.num_nodes()
            )));
        }
        Ok(sigmoid(self.similarity.logit(0, graph.feature(node))?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic, RelationSpec, SyntheticConfig};
    use crate::numeric::relu;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_graph(seed: u64) -> MultiRelationGraph {
        generate_synthetic(&SyntheticConfig {
            num_nodes: 40,
            fraud_fraction: 0.3,
            feature_dim: 5,
            relations: vec![
                RelationSpec {
                    name: "a".into(),
                    homophily: 0.7,
                    mean_degree: 3.0,
                },
                RelationSpec {
                    name: "b".into(),
                    homophily: 0.2,
                    mean_degree: 4.0,
                },
            ],
            feature_overlap: 0.4,
            seed,
        })
        .unwrap()
    }

    fn random_model(variant: AggregatorVariant, num_layers: usize, seed: u64) -> CareModel {
        let controller = ThresholdController::new(num_layers, 2, 0.02, 0.5, seed, true);
        CareModel::new(5, 8, num_layers, 2, variant, controller, seed)
    }

    fn random_batch(graph: &MultiRelationGraph, size: usize, seed: u64) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..graph.num_nodes()).collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        ids.truncate(size);
        ids
    }

    /// Max relative error between analytic gradients and central finite
    /// differences over every parameter entry.
    pub(crate) fn fd_max_rel_err(
        model: &CareModel,
        graph: &MultiRelationGraph,
        batch: &[usize],
        lambda1: f64,
        lambda2: f64,
    ) -> f64 {
        let labels: Vec<u8> = batch.iter().map(|&v| graph.label(v)).collect();
        let record = model.forward_batch(graph, batch).unwrap();
        let selection = record.selection();
        let grads = model.backward(graph, &record, &labels, lambda1, lambda2).unwrap();

        let loss_at = |name: &str, idx: usize, delta: f64| -> f64 {
            let mut m = model.clone();
            for (n, g) in m.param_groups_mut() {
                if n == name {
                    g[idx] += delta;
                }
            }
            m.loss_with_selection(graph, batch, &selection, &labels, lambda1, lambda2)
                .unwrap()
        };

        let h = 1e-5;
        let mut max_rel: f64 = 0.0;
        for (name, len) in model.param_shapes() {
            for i in 0..len {
                let fd = (loss_at(&name, i, h) - loss_at(&name, i, -h)) / (2.0 * h);
                let an = grads.get(&name)[i];
                let denom = fd.abs().max(an.abs());
                if denom < 1e-10 {
                    continue;
                }
                let rel = (fd - an).abs() / denom;
                if rel > max_rel {
                    max_rel = rel;
                }
            }
        }
        max_rel
    }

    #[test]
    fn zero_init_model_predicts_half() {
        let graph = small_graph(3);
        let controller = ThresholdController::new(1, 2, 0.02, 0.5, 0, true);
        let model = CareModel::zeros(5, 8, 1, 2, AggregatorVariant::Threshold, controller);
        let probs = model.predict(&graph, &[0, 5, 17]).unwrap();
        assert_eq!(probs, vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn zero_weights_classifier_bias_gradient_is_mean_residual() {
        let graph = small_graph(4);
        let controller = ThresholdController::new(1, 2, 0.02, 0.5, 0, true);
        let model = CareModel::zeros(5, 8, 1, 2, AggregatorVariant::Threshold, controller);
        let batch = vec![0, 1, 2, 3];
        let labels: Vec<u8> = batch.iter().map(|&v| graph.label(v)).collect();
        let record = model.forward_batch(&graph, &batch).unwrap();
        let grads = model.backward(&graph, &record, &labels, 0.0, 0.0).unwrap();
        let expected: f64 = labels.iter().map(|&y| 0.5 - f64::from(y)).sum::<f64>() / 4.0;
        let got = grads.get("clf.bias")[0];
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn gradients_match_finite_differences_all_variants() {
        let graph = small_graph(7);
        for variant in [
            AggregatorVariant::Threshold,
            AggregatorVariant::Mean,
            AggregatorVariant::Weight,
            AggregatorVariant::Attention,
        ] {
            let model = random_model(variant, 1, 11);
            let batch = random_batch(&graph, 7, 13);
            let err = fd_max_rel_err(&model, &graph, &batch, 2.0, 0.001);
            assert!(err < 1e-4, "variant {variant:?}: max rel err {err}");
        }
    }

    #[test]
    fn gradients_match_finite_differences_two_layers() {
        let graph = small_graph(9);
        for variant in [AggregatorVariant::Threshold, AggregatorVariant::Attention] {
            let model = random_model(variant, 2, 17);
            let batch = random_batch(&graph, 5, 19);
            let err = fd_max_rel_err(&model, &graph, &batch, 2.0, 0.001);
            assert!(err < 1e-4, "variant {variant:?} L=2: max rel err {err}");
        }
    }

    #[test]
    fn lambda1_zero_stops_similarity_gradient() {
        let graph = small_graph(5);
        let model = random_model(AggregatorVariant::Threshold, 1, 23);
        let batch = random_batch(&graph, 6, 29);
        let labels: Vec<u8> = batch.iter().map(|&v| graph.label(v)).collect();
        let record = model.forward_batch(&graph, &batch).unwrap();
        let grads = model.backward(&graph, &record, &labels, 0.0, 0.0).unwrap();
        assert!(grads.get("simi.l1.weight").iter().all(|&g| g == 0.0));
        assert!(grads.get("simi.l1.bias").iter().all(|&g| g == 0.0));
        // the classifier still gets a gradient
        assert!(grads.get("clf.weight").iter().any(|&g| g != 0.0));
    }

    #[test]
    fn forward_matches_plain_mean_gnn_reference() {
        // p = 1 everywhere + Mean variant collapses the model to an ordinary
        // mean-aggregation GNN; check against a from-scratch reference.
        let graph = small_graph(21);
        let controller = ThresholdController::fixed(1, 2, 1.0);
        let model = CareModel::new(5, 8, 1, 2, AggregatorVariant::Mean, controller, 31);
        let batch = vec![0, 3, 11, 25];
        let record = model.forward_batch(&graph, &batch).unwrap();

        for (i, &v) in batch.iter().enumerate() {
            // reference: straight loops over the raw parameter arrays
            let params = &model.layers[0];
            let mut rel_embs = Vec::new();
            for r in 0..2 {
                let nbrs = graph.neighbors(r, v).unwrap();
                let mut mean = vec![0.0; 5];
                for &u in nbrs {
                    for (m, x) in mean.iter_mut().zip(graph.feature(u)) {
                        *m += x;
                    }
                }
                if !nbrs.is_empty() {
                    for m in &mut mean {
                        *m /= nbrs.len() as f64;
                    }
                }
                let mut h = vec![0.0; 8];
                for (row, hv) in h.iter_mut().enumerate() {
                    let mut acc = params.relation[r].bias[row];
                    for (col, m) in mean.iter().enumerate() {
                        acc += params.relation[r].weight.at(row, col) * m;
                    }
                    *hv = relu(acc);
                }
                rel_embs.push(h);
            }
            let mut s = vec![0.0; 8];
            for (row, sv) in s.iter_mut().enumerate() {
                let mut acc = params.self_transform.bias[row];
                for (col, x) in graph.feature(v).iter().enumerate() {
                    acc += params.self_transform.weight.at(row, col) * x;
                }
                *sv = acc + 0.5 * rel_embs[0][row] + 0.5 * rel_embs[1][row];
            }
            let mut z = vec![0.0; 8];
            for (row, zv) in z.iter_mut().enumerate() {
                let mut acc = params.combine.bias[row];
                for (col, sv) in s.iter().enumerate() {
                    acc += params.combine.weight.at(row, col) * sv;
                }
                *zv = relu(acc);
            }
            let mut logit = model.classifier.bias[0];
            for (col, zv) in z.iter().enumerate() {
                logit += model.classifier.weight.at(0, col) * zv;
            }
            let want = sigmoid(logit);
            assert!(
                (record.probs[i] - want).abs() < 1e-12,
                "node {v}: {} vs {want}",
                record.probs[i]
            );
        }
    }

    #[test]
    fn batch_of_one_matches_row_of_larger_batch() {
        let graph = small_graph(33);
        for variant in [
            AggregatorVariant::Threshold,
            AggregatorVariant::Mean,
            AggregatorVariant::Weight,
            AggregatorVariant::Attention,
        ] {
            let model = random_model(variant, 1, 37);
            let big = model.predict(&graph, &[2, 8, 14, 30]).unwrap();
            let solo = model.predict(&graph, &[14]).unwrap();
            assert_eq!(big[2], solo[0], "variant {variant:?}");
        }
    }

    #[test]
    fn isolated_node_has_well_defined_prediction() {
        // an extra node with no edges at all
        let features = vec![0.0; 12];
        let (graph, _) = MultiRelationGraph::from_parts(
            features,
            3,
            vec![0, 1, 0, 1],
            vec![vec![(0, 1)], vec![(1, 2)]],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let model = random_model(AggregatorVariant::Threshold, 1, 41);
        // model expects feature_dim 5; rebuild for dim 3
        let controller = ThresholdController::new(1, 2, 0.02, 0.5, 41, true);
        let model = CareModel::new(3, 8, 1, 2, model.variant, controller, 41);
        let probs = model.predict(&graph, &[3]).unwrap();
        assert!(probs[0].is_finite() && probs[0] > 0.0 && probs[0] < 1.0);
    }

    #[test]
    fn predict_is_bitwise_deterministic() {
        let graph = small_graph(43);
        let model = random_model(AggregatorVariant::Threshold, 1, 47);
        let a = model.predict(&graph, &[1, 2, 3]).unwrap();
        let b = model.predict(&graph, &[1, 2, 3]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_node_id_errors() {
        let graph = small_graph(49);
        let model = random_model(AggregatorVariant::Threshold, 1, 53);
        assert!(model.predict(&graph, &[400]).is_err());
    }

    #[test]
    fn losses_compose_per_definition() {
        let graph = small_graph(51);
        let model = random_model(AggregatorVariant::Threshold, 1, 59);
        let batch = random_batch(&graph, 8, 61);
        let labels: Vec<u8> = batch.iter().map(|&v| graph.label(v)).collect();
        let record = model.forward_batch(&graph, &batch).unwrap();

        let l00 = model.losses(&record, &labels, 0.0, 0.0);
        assert!((l00.care - l00.gnn).abs() < 1e-15);

        let l1 = model.losses(&record, &labels, 1.0, 0.0);
        let l2 = model.losses(&record, &labels, 2.0, 0.0);
        let contribution1 = l1.care - l1.gnn;
        let contribution2 = l2.care - l2.gnn;
        assert!((contribution2 - 2.0 * contribution1).abs() < 1e-12);

        // all probabilities 0.5 under zero params: L_CARE = (1 + λ1)·ln 2
        let zero = CareModel::zeros(
            5,
            8,
            1,
            2,
            AggregatorVariant::Threshold,
            ThresholdController::new(1, 2, 0.02, 0.5, 0, true),
        );
        let record = zero.forward_batch(&graph, &batch).unwrap();
        let l = zero.losses(&record, &labels, 2.0, 0.0);
        assert!((l.care - 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let graph = small_graph(55);
        let model = random_model(AggregatorVariant::Threshold, 1, 67);
        assert!(model.forward_batch(&graph, &[]).is_err());
    }
}
