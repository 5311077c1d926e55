//! Classification metrics: ROC-AUC in the Mann–Whitney form (ties count one
//! half) and macro-averaged recall at a fixed threshold, plus head-level
//! evaluation of a trained model (classifier head vs. similarity head).

use crate::error::{Error, Result};
use crate::graph::MultiRelationGraph;
use crate::model::CareModel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Gnn,
    Simi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub recall_macro: f64,
    /// Recall of class 0 (benign) and class 1 (suspicious).
    pub recall_per_class: [f64; 2],
    pub count: usize,
    pub source: Head,
}

fn check_both_classes(labels: &[u8]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Graph(
            "metric needs both classes present in the evaluated set".into(),
        ));
    }
    Ok((pos, neg))
}

/// Probability that a random positive outranks a random negative, ties ½
/// (computed from average ranks, which is the Mann–Whitney statistic).
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let (pos, neg) = check_both_classes(labels)?;
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // average ranks over tie groups, 1-based
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        i = j;
    }
    let rank_sum_pos: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 1)
        .map(|(r, _)| r)
        .sum();
    let pos = pos as f64;
    let neg = neg as f64;
    Ok((rank_sum_pos - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

/// Per-class recalls with prediction = score ≥ threshold.
pub fn recall_per_class(scores: &[f64], labels: &[u8], threshold: f64) -> Result<[f64; 2]> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    check_both_classes(labels)?;
    let mut hit = [0usize; 2];
    let mut total = [0usize; 2];
    for (&s, &y) in scores.iter().zip(labels) {
        let pred = u8::from(s >= threshold);
        total[y as usize] += 1;
        if pred == y {
            hit[y as usize] += 1;
        }
    }
    Ok([
        hit[0] as f64 / total[0] as f64,
        hit[1] as f64 / total[1] as f64,
    ])
}

/// Mean of the per-class recalls; exactly 0.5 for any constant predictor.
pub fn recall_macro(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    let [r0, r1] = recall_per_class(scores, labels, threshold)?;
    Ok((r0 + r1) / 2.0)
}

/// Scores a node set with the chosen head and computes the metric report.
/// The gnn head uses the classifier probabilities; the simi head uses the
/// sigmoid of the layer-1 similarity-measure output.
pub fn evaluate(
    model: &CareModel,
    graph: &MultiRelationGraph,
    node_ids: &[usize],
    head: Head,
) -> Result<MetricsReport> {
    let labels: Vec<u8> = node_ids.iter().map(|&v| graph.label(v)).collect();
    check_both_classes(&labels)?;
    let scores = match head {
        Head::Gnn => model.predict(graph, node_ids)?,
        Head::Simi => node_ids
            .iter()
            .map(|&v| model.simi_head_probability(graph, v))
            .collect::<Result<Vec<f64>>>()?,
    };
    let auc = roc_auc(&scores, &labels)?;
    let recall_per_class = recall_per_class(&scores, &labels, 0.5)?;
    Ok(MetricsReport {
        auc,
        recall_macro: (recall_per_class[0] + recall_per_class[1]) / 2.0,
        recall_per_class,
        count: node_ids.len(),
        source: head,
    })
}
