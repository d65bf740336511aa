//! Graph feature containers and the cell encoding.

use serde::{Deserialize, Serialize};

use crate::cell::{CellGraph, OperationKind};

/// One directed edge with its feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFeature {
    pub sender: usize,
    pub receiver: usize,
    pub feat: Vec<f64>,
}

/// Node, edge and global features of one graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFeatures {
    pub nodes: Vec<Vec<f64>>,
    pub edges: Vec<EdgeFeature>,
    pub global: Vec<f64>,
}

impl GraphFeatures {
    pub fn node_width(&self) -> usize {
        self.nodes.first().map_or(0, Vec::len)
    }

    pub fn edge_width(&self) -> usize {
        self.edges.first().map_or(0, |e| e.feat.len())
    }

    /// Structure-preserving map with all feature vectors zeroed; the
    /// shape gradients accumulate into.
    pub fn zeros_like(&self) -> GraphFeatures {
        GraphFeatures {
            nodes: self.nodes.iter().map(|n| vec![0.0; n.len()]).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeFeature {
                    sender: e.sender,
                    receiver: e.receiver,
                    feat: vec![0.0; e.feat.len()],
                })
                .collect(),
            global: vec![0.0; self.global.len()],
        }
    }

    /// Concatenate features element-wise (same topology on both sides).
    pub(crate) fn concat(&self, other: &GraphFeatures) -> GraphFeatures {
        debug_assert_eq!(self.nodes.len(), other.nodes.len());
        debug_assert_eq!(self.edges.len(), other.edges.len());
        GraphFeatures {
            nodes: self
                .nodes
                .iter()
                .zip(&other.nodes)
                .map(|(a, b)| a.iter().chain(b.iter()).copied().collect())
                .collect(),
            edges: self
                .edges
                .iter()
                .zip(&other.edges)
                .map(|(a, b)| EdgeFeature {
                    sender: a.sender,
                    receiver: a.receiver,
                    feat: a.feat.iter().chain(b.feat.iter()).copied().collect(),
                })
                .collect(),
            global: self
                .global
                .iter()
                .chain(other.global.iter())
                .copied()
                .collect(),
        }
    }
}

/// Scalar feature value per vertex label.
fn node_value(op: OperationKind) -> f64 {
    match op {
        OperationKind::Input => 1.0,
        OperationKind::Conv3x3 => 2.0,
        OperationKind::MaxPool3x3 => 3.0,
        OperationKind::Conv1x1 => 4.0,
        OperationKind::Output => 5.0,
    }
}

/// Encode a cell: one-float node features by label, every edge feature
/// [1.0], global feature [1.0]. Edges are emitted in row-major order.
pub fn encode_cell(cell: &CellGraph) -> GraphFeatures {
    let n = cell.vertex_count();
    let nodes = (0..n).map(|v| vec![node_value(cell.op(v))]).collect();
    let mut edges = Vec::with_capacity(cell.edge_count());
    for i in 0..n {
        for j in i + 1..n {
            if cell.has_edge(i, j) {
                edges.push(EdgeFeature {
                    sender: i,
                    receiver: j,
                    feat: vec![1.0],
                });
            }
        }
    }
    GraphFeatures {
        nodes,
        edges,
        global: vec![1.0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::OperationKind::*;

    #[test]
    fn minimal_cell_encoding() {
        let cell = CellGraph::new(vec![Input, Output], &[(0, 1)]).unwrap();
        let f = encode_cell(&cell);
        assert_eq!(f.nodes, vec![vec![1.0], vec![5.0]]);
        assert_eq!(f.edges.len(), 1);
        assert_eq!(f.edges[0].feat, vec![1.0]);
        assert_eq!((f.edges[0].sender, f.edges[0].receiver), (0, 1));
        assert_eq!(f.global, vec![1.0]);
    }

    #[test]
    fn interior_labels_map_to_documented_values() {
        let cell = CellGraph::new(
            vec![Input, Conv3x3, MaxPool3x3, Conv1x1, Output],
            &[(0, 1), (1, 2), (2, 3), (3, 4)],
        )
        .unwrap();
        let f = encode_cell(&cell);
        assert_eq!(f.nodes[1], vec![2.0]);
        assert_eq!(f.nodes[2], vec![3.0]);
        assert_eq!(f.nodes[3], vec![4.0]);
    }

    #[test]
    fn encoding_is_injective_on_distinct_cells() {
        let a = CellGraph::new(vec![Input, Conv3x3, Output], &[(0, 1), (1, 2)]).unwrap();
        let b = CellGraph::new(vec![Input, Conv1x1, Output], &[(0, 1), (1, 2)]).unwrap();
        let c =
            CellGraph::new(vec![Input, Conv3x3, Output], &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_ne!(encode_cell(&a), encode_cell(&b));
        assert_ne!(encode_cell(&a), encode_cell(&c));
    }
}
