//! Cell graphs: labeled DAGs of convolution/pooling operations.
//!
//! A cell is the repeated building block of the networks modeled by this
//! crate: a small directed acyclic graph whose first vertex is the cell
//! input, whose last vertex is the cell output, and whose interior
//! vertices carry one of three operations. The adjacency matrix is
//! strictly upper-triangular, so the vertex order is a topological order.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Maximum number of vertices in a cell.
pub const MAX_VERTICES: usize = 7;
/// Maximum number of edges in a cell.
pub const MAX_EDGES: usize = 9;

/// The five vertex labels a cell may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OperationKind {
    #[serde(rename = "input")]
    Input,
    #[serde(rename = "conv3x3")]
    Conv3x3,
    #[serde(rename = "conv1x1")]
    Conv1x1,
    #[serde(rename = "maxpool3x3")]
    MaxPool3x3,
    #[serde(rename = "output")]
    Output,
}

impl OperationKind {
    /// The three operations interior vertices may carry.
    pub const INTERIOR: [OperationKind; 3] = [
        OperationKind::Conv3x3,
        OperationKind::Conv1x1,
        OperationKind::MaxPool3x3,
    ];

    /// Stable byte tag, used by hashing and compact encodings.
    pub(crate) fn tag(self) -> u8 {
        match self {
            OperationKind::Input => 0,
            OperationKind::Conv3x3 => 1,
            OperationKind::Conv1x1 => 2,
            OperationKind::MaxPool3x3 => 3,
            OperationKind::Output => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OperationKind::Input => "input",
            OperationKind::Conv3x3 => "conv3x3",
            OperationKind::Conv1x1 => "conv1x1",
            OperationKind::MaxPool3x3 => "maxpool3x3",
            OperationKind::Output => "output",
        }
    }
}

impl fmt::Display for OperationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One violated cell invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    TooFewVertices { count: usize },
    TooManyVertices { count: usize },
    TooManyEdges { count: usize },
    NotUpperTriangular { from: usize, to: usize },
    FirstVertexNotInput,
    LastVertexNotOutput,
    MisplacedInput { vertex: usize },
    MisplacedOutput { vertex: usize },
    DanglingVertex { vertex: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewVertices { count } => {
                write!(f, "too few vertices ({count} < 2)")
            }
            Violation::TooManyVertices { count } => {
                write!(f, "too many vertices ({count} > {MAX_VERTICES})")
            }
            Violation::TooManyEdges { count } => {
                write!(f, "too many edges ({count} > {MAX_EDGES})")
            }
            Violation::NotUpperTriangular { from, to } => {
                write!(f, "edge {from}->{to} is not strictly upper-triangular")
            }
            Violation::FirstVertexNotInput => write!(f, "vertex 0 is not the input"),
            Violation::LastVertexNotOutput => write!(f, "last vertex is not the output"),
            Violation::MisplacedInput { vertex } => {
                write!(f, "interior vertex {vertex} is labeled input")
            }
            Violation::MisplacedOutput { vertex } => {
                write!(f, "interior vertex {vertex} is labeled output")
            }
            Violation::DanglingVertex { vertex } => {
                write!(f, "dangling vertex {vertex} (not on any input->output path)")
            }
        }
    }
}

/// Result of checking every cell invariant on an arbitrary candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CellGraphJson {
    ops: Vec<OperationKind>,
    adjacency: Vec<Vec<u8>>,
}

/// A labeled DAG over at most [`MAX_VERTICES`] vertices.
///
/// The structure is shape-checked at construction (square matrix, 0/1
/// entries, edges strictly above the diagonal); the semantic invariants
/// (vertex/edge limits, input/output placement, reachability) are
/// reported by [`CellGraph::validate`], so arbitrary candidates can be
/// inspected.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "CellGraphJson", into = "CellGraphJson")]
pub struct CellGraph {
    ops: Vec<OperationKind>,
    /// Row-major n*n adjacency; `adjacency[i*n + j]` is the edge i->j.
    adjacency: Vec<bool>,
}

impl TryFrom<CellGraphJson> for CellGraph {
    type Error = Error;

    fn try_from(json: CellGraphJson) -> Result<Self> {
        CellGraph::from_matrix(json.ops, &json.adjacency)
    }
}

impl From<CellGraph> for CellGraphJson {
    fn from(cell: CellGraph) -> Self {
        CellGraphJson {
            adjacency: cell.matrix(),
            ops: cell.ops,
        }
    }
}

impl CellGraph {
    /// Build a cell from ops and an explicit edge list.
    pub fn new(ops: Vec<OperationKind>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = ops.len();
        let mut adjacency = vec![false; n * n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::MalformedCell(format!(
                    "edge ({i}, {j}) out of range for {n} vertices"
                )));
            }
            if i >= j {
                return Err(Error::MalformedCell(format!(
                    "edge ({i}, {j}) is not strictly upper-triangular"
                )));
            }
            adjacency[i * n + j] = true;
        }
        Ok(CellGraph { ops, adjacency })
    }

    /// Build a cell from a full 0/1 adjacency matrix.
    ///
    /// Rejects non-square matrices, entries other than 0/1, and edges on
    /// or below the diagonal (the latter is what a 1-based index typo
    /// typically produces).
    pub fn from_matrix(ops: Vec<OperationKind>, matrix: &[Vec<u8>]) -> Result<Self> {
        let n = ops.len();
        if matrix.len() != n {
            return Err(Error::MalformedCell(format!(
                "adjacency has {} rows for {} ops",
                matrix.len(),
                n
            )));
        }
        let mut adjacency = vec![false; n * n];
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != n {
                return Err(Error::MalformedCell(format!(
                    "adjacency row {i} has {} columns, expected {n}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => {
                        if i >= j {
                            return Err(Error::MalformedCell(format!(
                                "edge ({i}, {j}) is not strictly upper-triangular"
                            )));
                        }
                        adjacency[i * n + j] = true;
                    }
                    other => {
                        return Err(Error::MalformedCell(format!(
                            "adjacency entry ({i}, {j}) is {other}, expected 0 or 1"
                        )));
                    }
                }
            }
        }
        Ok(CellGraph { ops, adjacency })
    }

    pub fn vertex_count(&self) -> usize {
        self.ops.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&e| e).count()
    }

    pub fn ops(&self) -> &[OperationKind] {
        &self.ops
    }

    pub fn op(&self, v: usize) -> OperationKind {
        self.ops[v]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adjacency[from * self.ops.len() + to]
    }

    /// Vertices with an edge into `v`, ascending.
    pub fn predecessors(&self, v: usize) -> Vec<usize> {
        (0..v).filter(|&u| self.has_edge(u, v)).collect()
    }

    /// Vertices `v` has an edge into, ascending.
    pub fn successors(&self, v: usize) -> Vec<usize> {
        (v + 1..self.vertex_count())
            .filter(|&w| self.has_edge(v, w))
            .collect()
    }

    /// Full adjacency matrix as 0/1 rows.
    pub fn matrix(&self) -> Vec<Vec<u8>> {
        let n = self.vertex_count();
        (0..n)
            .map(|i| (0..n).map(|j| u8::from(self.has_edge(i, j))).collect())
            .collect()
    }

    /// Check every cell invariant; never fails, reports instead.
    pub fn validate(&self) -> ValidationReport {
        let n = self.vertex_count();
        let mut violations = Vec::new();

        if n < 2 {
            violations.push(Violation::TooFewVertices { count: n });
            return ValidationReport {
                ok: false,
                violations,
            };
        }
        if n > MAX_VERTICES {
            violations.push(Violation::TooManyVertices { count: n });
        }
        let edges = self.edge_count();
        if edges > MAX_EDGES {
            violations.push(Violation::TooManyEdges { count: edges });
        }
        if self.ops[0] != OperationKind::Input {
            violations.push(Violation::FirstVertexNotInput);
        }
        if self.ops[n - 1] != OperationKind::Output {
            violations.push(Violation::LastVertexNotOutput);
        }
        for v in 1..n - 1 {
            match self.ops[v] {
                OperationKind::Input => violations.push(Violation::MisplacedInput { vertex: v }),
                OperationKind::Output => violations.push(Violation::MisplacedOutput { vertex: v }),
                _ => {}
            }
        }

        // Reachability: every vertex must lie on some input->output path.
        let from_input = self.reachable_from(0);
        let to_output = self.reaching(n - 1);
        for v in 0..n {
            let on_path = (v == 0 || from_input[v]) && (v == n - 1 || to_output[v]);
            if !on_path {
                violations.push(Violation::DanglingVertex { vertex: v });
            }
        }

        ValidationReport {
            ok: violations.is_empty(),
            violations,
        }
    }

    /// Validate and convert failures into an error.
    pub fn require_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.ok {
            Ok(())
        } else {
            Err(Error::InvalidCell(report))
        }
    }

    fn reachable_from(&self, start: usize) -> Vec<bool> {
        let n = self.vertex_count();
        let mut seen = vec![false; n];
        // Ascending order suffices: edges only go forward.
        for j in start + 1..n {
            seen[j] = self.has_edge(start, j) || (start..j).any(|i| seen[i] && self.has_edge(i, j));
        }
        seen
    }

    fn reaching(&self, target: usize) -> Vec<bool> {
        let n = self.vertex_count();
        let mut seen = vec![false; n];
        for i in (0..target).rev() {
            seen[i] =
                self.has_edge(i, target) || (i + 1..target).any(|j| seen[j] && self.has_edge(i, j));
        }
        let _ = n;
        seen
    }

    /// Number of edges on the longest input->output path.
    pub fn depth(&self) -> usize {
        let n = self.vertex_count();
        let mut longest: Vec<Option<usize>> = vec![None; n];
        longest[0] = Some(0);
        for j in 1..n {
            let mut best = None;
            for i in 0..j {
                if self.has_edge(i, j) {
                    if let Some(d) = longest[i] {
                        best = Some(best.map_or(d + 1, |b: usize| b.max(d + 1)));
                    }
                }
            }
            longest[j] = best;
        }
        longest[n - 1].unwrap_or(0)
    }

    /// Maximum directed cut: the largest number of edges crossing any
    /// topological prefix (a predecessor-closed vertex set containing
    /// the input and not the output) into its complement.
    pub fn width(&self) -> usize {
        let n = self.vertex_count();
        if n < 2 {
            return 0;
        }
        let interior = n - 2;
        let mut best = 0;
        for mask in 0..(1usize << interior) {
            let in_set =
                |v: usize| -> bool { v == 0 || (v < n - 1 && mask & (1 << (v - 1)) != 0) };
            // Prefix must be closed under predecessors.
            let closed = (1..n - 1).all(|v| {
                !in_set(v) || self.predecessors(v).iter().all(|&p| in_set(p))
            });
            if !closed {
                continue;
            }
            let mut cut = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if self.has_edge(i, j) && in_set(i) && !in_set(j) {
                        cut += 1;
                    }
                }
            }
            best = best.max(cut);
        }
        best
    }

    /// Counts of interior vertices by operation kind.
    pub fn op_counts(&self) -> OpCounts {
        let mut counts = OpCounts::default();
        let n = self.vertex_count();
        if n < 2 {
            return counts;
        }
        for v in 1..n - 1 {
            match self.ops[v] {
                OperationKind::Conv3x3 => counts.conv3x3 += 1,
                OperationKind::Conv1x1 => counts.conv1x1 += 1,
                OperationKind::MaxPool3x3 => counts.maxpool3x3 += 1,
                OperationKind::Input => counts.input += 1,
                OperationKind::Output => counts.output += 1,
            }
        }
        counts
    }
}

/// Interior-vertex counts per [`OperationKind`].
///
/// `input`/`output` count mislabeled interior vertices and are zero for
/// every valid cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub conv3x3: u32,
    pub conv1x1: u32,
    pub maxpool3x3: u32,
    pub input: u32,
    pub output: u32,
}

impl OpCounts {
    pub fn count(&self, kind: OperationKind) -> u32 {
        match kind {
            OperationKind::Conv3x3 => self.conv3x3,
            OperationKind::Conv1x1 => self.conv1x1,
            OperationKind::MaxPool3x3 => self.maxpool3x3,
            OperationKind::Input => self.input,
            OperationKind::Output => self.output,
        }
    }

    pub fn total(&self) -> u32 {
        self.conv3x3 + self.conv1x1 + self.maxpool3x3 + self.input + self.output
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use OperationKind::*;

    pub(crate) fn minimal() -> CellGraph {
        CellGraph::new(vec![Input, Output], &[(0, 1)]).unwrap()
    }

    fn diamond() -> CellGraph {
        CellGraph::new(
            vec![Input, Conv3x3, Conv1x1, Output],
            &[(0, 1), (0, 2), (1, 3), (2, 3)],
        )
        .unwrap()
    }

    fn chain7() -> CellGraph {
        let ops = vec![Input, Conv3x3, Conv1x1, MaxPool3x3, Conv3x3, Conv1x1, Output];
        let edges: Vec<_> = (0..6).map(|i| (i, i + 1)).collect();
        CellGraph::new(ops, &edges).unwrap()
    }

    #[test]
    fn minimal_cell_is_valid() {
        let report = minimal().validate();
        assert!(report.ok, "{report}");
    }

    #[test]
    fn eight_vertices_rejected() {
        let mut ops = vec![Input];
        ops.extend([Conv3x3; 6]);
        ops.push(Output);
        let edges: Vec<_> = (0..7).map(|i| (i, i + 1)).collect();
        let cell = CellGraph::new(ops, &edges).unwrap();
        let report = cell.validate();
        assert!(!report.ok);
        assert!(report
            .violations
            .contains(&Violation::TooManyVertices { count: 8 }));
    }

    #[test]
    fn ten_edges_rejected() {
        // Complete 5-vertex DAG: 10 upper-triangular edges.
        let ops = vec![Input, Conv3x3, Conv1x1, MaxPool3x3, Output];
        let mut edges = Vec::new();
        for i in 0..5 {
            for j in i + 1..5 {
                edges.push((i, j));
            }
        }
        let cell = CellGraph::new(ops, &edges).unwrap();
        let report = cell.validate();
        assert!(!report.ok);
        assert!(report
            .violations
            .contains(&Violation::TooManyEdges { count: 10 }));
    }

    #[test]
    fn dangling_vertex_detected() {
        // Vertex 2 has no outgoing edge: it cannot reach the output.
        let cell = CellGraph::new(
            vec![Input, Conv3x3, Conv1x1, MaxPool3x3, Output],
            &[(0, 1), (0, 2), (0, 3), (1, 4), (3, 4)],
        )
        .unwrap();
        let report = cell.validate();
        assert!(!report.ok);
        assert!(report
            .violations
            .contains(&Violation::DanglingVertex { vertex: 2 }));
    }

    #[test]
    fn misplaced_labels_detected() {
        let cell = CellGraph::new(vec![Conv3x3, Input, Output], &[(0, 1), (1, 2)]).unwrap();
        let report = cell.validate();
        assert!(!report.ok);
        assert!(report.violations.contains(&Violation::FirstVertexNotInput));
        assert!(report
            .violations
            .contains(&Violation::MisplacedInput { vertex: 1 }));
    }

    #[test]
    fn lower_triangular_matrix_rejected_at_construction() {
        let matrix = vec![vec![0, 0], vec![1, 0]];
        let err = CellGraph::from_matrix(vec![Input, Output], &matrix).unwrap_err();
        assert!(err.to_string().contains("upper-triangular"), "{err}");
    }

    #[test]
    fn non_binary_entry_rejected() {
        let matrix = vec![vec![0, 2], vec![0, 0]];
        let err = CellGraph::from_matrix(vec![Input, Output], &matrix).unwrap_err();
        assert!(err.to_string().contains("expected 0 or 1"), "{err}");
    }

    #[test]
    fn depth_examples() {
        assert_eq!(minimal().depth(), 1);
        assert_eq!(chain7().depth(), 6);
        assert_eq!(diamond().depth(), 2);
    }

    #[test]
    fn width_examples() {
        assert_eq!(minimal().width(), 1);
        assert_eq!(chain7().width(), 1);
        assert_eq!(diamond().width(), 2);

        // Input fanning out to 5 interior vertices all feeding output.
        let ops = vec![Input, Conv3x3, Conv3x3, Conv3x3, Conv3x3, Conv3x3, Output];
        let mut edges = Vec::new();
        for v in 1..=5 {
            edges.push((0, v));
            edges.push((v, 6));
        }
        let star = CellGraph::new(ops, &edges).unwrap();
        assert_eq!(star.width(), 5);
    }

    #[test]
    fn depth_and_width_bounds() {
        for cell in [minimal(), diamond(), chain7()] {
            assert!(cell.depth() <= cell.vertex_count() - 1);
            assert!(cell.width() <= cell.edge_count());
        }
    }

    #[test]
    fn op_counts_examples() {
        assert_eq!(minimal().op_counts().total(), 0);
        let counts = diamond().op_counts();
        assert_eq!(counts.conv3x3, 1);
        assert_eq!(counts.conv1x1, 1);
        assert_eq!(counts.maxpool3x3, 0);
        assert_eq!(counts.total() as usize, diamond().vertex_count() - 2);
    }

    #[test]
    fn json_round_trip() {
        let cell = diamond();
        let json = serde_json::to_string(&cell).unwrap();
        assert!(json.contains("\"conv3x3\""));
        let back: CellGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(cell, back);
    }

    #[test]
    fn json_rejects_bad_matrix() {
        let json = r#"{"ops":["input","output"],"adjacency":[[0,0],[1,0]]}"#;
        let err = serde_json::from_str::<CellGraph>(json).unwrap_err();
        assert!(err.to_string().contains("upper-triangular"));
    }
}
