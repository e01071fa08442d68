//! Inspection exports: profile and graph CSVs.

use std::path::Path;

use super::dataset::write_atomic;
use super::DataError;
use crate::graph::CycleGraph;
use crate::profile::MatrixProfile;

/// Writes a matrix profile as `position,distance,match_index` rows.
pub fn write_profile_csv(mp: &MatrixProfile, path: &Path) -> Result<(), DataError> {
    let mut out = String::from("position,distance,match_index\n");
    for (q, (&d, &j)) in mp.distances.iter().zip(&mp.indices).enumerate() {
        out.push_str(&format!("{q},{d},{j}\n"));
    }
    write_atomic(path, out.as_bytes())
}

/// Writes a graph as a feature CSV (`cycle,x0..x{m-1}`) and an adjacency
/// CSV (square matrix, no header).
pub fn write_graph_csv(
    graph: &CycleGraph,
    features_path: &Path,
    adjacency_path: &Path,
) -> Result<(), DataError> {
    let mut features = String::from("cycle");
    for j in 0..graph.width() {
        features.push_str(&format!(",x{j}"));
    }
    features.push('\n');
    for (i, row) in graph.x.rows().into_iter().enumerate() {
        features.push_str(&graph.node_cycles[i].to_string());
        for v in row {
            features.push_str(&format!(",{v}"));
        }
        features.push('\n');
    }
    write_atomic(features_path, features.as_bytes())?;

    let mut adjacency = String::new();
    for row in graph.a.rows() {
        let mut first = true;
        for v in row {
            if !first {
                adjacency.push(',');
            }
            adjacency.push_str(&v.to_string());
            first = false;
        }
        adjacency.push('\n');
    }
    write_atomic(adjacency_path, adjacency.as_bytes())
}
