//! TSV graph ingestion and byte-stable re-serialization.
//!
//! Nodes file: `id<TAB>label<TAB>f1,...,fd`, ids 0-based and dense.
//! Relation files: `src<TAB>dst` edge lists, one undirected edge per line
//! (directed or duplicated input is symmetrized and deduplicated on load).

use super::{CleanStats, MultiRelationGraph};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationLoadStats {
    pub name: String,
    pub input_edges: usize,
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
    pub undirected_edges: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadStats {
    pub relations: Vec<RelationLoadStats>,
}

/// Loads a multi-relation graph from a nodes TSV and one edge TSV per
/// relation. Relation names are the file stems.
pub fn load_graph(
    nodes_path: &Path,
    relation_paths: &[impl AsRef<Path>],
) -> Result<(MultiRelationGraph, LoadStats)> {
    if relation_paths.is_empty() {
        return Err(Error::Config("at least one relation file is required".into()));
    }
    let (features, feature_dim, labels) = parse_nodes(nodes_path)?;
    let num_nodes = labels.len();

    let mut edges = Vec::with_capacity(relation_paths.len());
    let mut names = Vec::with_capacity(relation_paths.len());
    let mut input_counts = Vec::with_capacity(relation_paths.len());
    for path in relation_paths {
        let path = path.as_ref();
        let list = parse_edges(path, num_nodes)?;
        input_counts.push(list.len());
        edges.push(list);
        names.push(
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
        );
    }

    let (graph, clean) = MultiRelationGraph::from_parts(features, feature_dim, labels, edges, names)?;
    let relations = clean
        .iter()
        .enumerate()
        .map(|(r, &CleanStats { self_loops, duplicates })| RelationLoadStats {
            name: graph.relation_names()[r].clone(),
            input_edges: input_counts[r],
            self_loops_dropped: self_loops,
            duplicates_dropped: duplicates,
            undirected_edges: graph.num_edges(r),
        })
        .collect();
    Ok((graph, LoadStats { relations }))
}

/// Writes the graph back out in the load format. Output is byte-stable:
/// nodes ascending by id, each undirected edge once as `low<TAB>high` in
/// ascending order, floats in shortest round-trip form.
pub fn save_graph(
    graph: &MultiRelationGraph,
    nodes_path: &Path,
    relation_paths: &[impl AsRef<Path>],
) -> Result<()> {
    if relation_paths.len() != graph.num_relations() {
        return Err(Error::Config(format!(
            "graph has {} relations but {} relation paths were given",
            graph.num_relations(),
            relation_paths.len()
        )));
    }
    let mut out = String::new();
    for v in 0..graph.num_nodes() {
        write!(out, "{}\t{}\t", v, graph.label(v)).unwrap();
        let feats = graph.feature(v);
        for (i, f) in feats.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{f}").unwrap();
        }
        out.push('\n');
    }
    std::fs::write(nodes_path, out).map_err(|e| Error::io(nodes_path, e))?;

    for (r, path) in relation_paths.iter().enumerate() {
        let path = path.as_ref();
        let mut out = String::new();
        for (v, u) in graph.edges(r) {
            writeln!(out, "{v}\t{u}").unwrap();
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn parse_nodes(path: &Path) -> Result<(Vec<f64>, usize, Vec<u8>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<(usize, u8, Vec<f64>)> = Vec::new();
    let mut feature_dim = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (id_s, label_s, feats_s) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                return Err(Error::parse(
                    path,
                    lineno,
                    "expected three tab-separated fields: id, label, features",
                ))
            }
        };
        if fields.next().is_some() {
            return Err(Error::parse(path, lineno, "too many fields"));
        }
        let id: usize = id_s
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad node id {id_s:?}")))?;
        let label: i64 = label_s
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad label {label_s:?}")))?;
        if label != 0 && label != 1 {
            return Err(Error::parse(
                path,
                lineno,
                format!("label must be 0 or 1, got {label}"),
            ));
        }
        let feats: Vec<f64> = feats_s
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(path, lineno, format!("bad feature value {f:?}")))
            })
            .collect::<Result<_>>()?;
        match feature_dim {
            None => feature_dim = Some(feats.len()),
            Some(d) if d != feats.len() => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("feature dimension {} does not match earlier {}", feats.len(), d),
                ))
            }
            _ => {}
        }
        rows.push((id, label as u8, feats));
    }
    if rows.is_empty() {
        return Err(Error::parse(path, 1, "nodes file is empty"));
    }
    let n = rows.len();
    rows.sort_unstable_by_key(|(id, _, _)| *id);
    for (expect, (id, _, _)) in rows.iter().enumerate() {
        if *id != expect {
            return Err(Error::Graph(format!(
                "{}: node ids must be dense 0..{} (missing or duplicate id near {id})",
                path.display(),
                n - 1
            )));
        }
    }
    let d = feature_dim.unwrap();
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (_, label, feats) in rows {
        features.extend_from_slice(&feats);
        labels.push(label);
    }
    Ok((features, d, labels))
}

fn parse_edges(path: &Path, num_nodes: usize) -> Result<Vec<(usize, usize)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (a_s, b_s) = match (fields.next(), fields.next()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::parse(path, lineno, "expected `src<TAB>dst`")),
        };
        if fields.next().is_some() {
            return Err(Error::parse(path, lineno, "too many fields"));
        }
        let a: usize = a_s
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad node id {a_s:?}")))?;
        let b: usize = b_s
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad node id {b_s:?}")))?;
        if a >= num_nodes || b >= num_nodes {
            return Err(Error::parse(
                path,
                lineno,
                format!("edge ({a}, {b}) references unknown node (n = {num_nodes})"),
            ));
        }
        edges.push((a, b));
    }
    Ok(edges)
}
