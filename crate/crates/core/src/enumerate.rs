//! Enumeration and sampling of the valid cell space.
//!
//! Full mode walks every strictly-upper-triangular adjacency matrix per
//! vertex count, filters to structurally valid graphs, assigns all
//! interior op labelings and deduplicates isomorphic cells. Dedup keys
//! on the fast 64-bit neighborhood digest and confirms hits with the
//! exhaustive permutation check, so the emitted stream contains each
//! architecture exactly once, in a deterministic order (vertex count,
//! then adjacency bits, then op assignment).

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cell::{CellGraph, OperationKind, MAX_EDGES, MAX_VERTICES};
use crate::error::Error;
use crate::hash::{isomorphic_views, wl_digest64, GraphView};
use crate::Result;

/// How [`enumerate_cells`] produces cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnumerationMode {
    /// Every unique valid cell, exactly once.
    Full,
    /// `count` unique valid cells, reproducible for a given seed.
    Sample { count: usize, seed: u64 },
}

/// Compact cell encoding for the enumeration hot path.
#[derive(Debug, Clone, Copy)]
struct CompactCell {
    n: u8,
    ops: [u8; 7],
    bits: u32,
}

const OP_TAGS: [OperationKind; 4] = [
    OperationKind::Input, // placeholder for tag 0, unused in interiors
    OperationKind::Conv3x3,
    OperationKind::Conv1x1,
    OperationKind::MaxPool3x3,
];

fn slot_count(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Upper-triangular slots in row-major order: (0,1), (0,2), ... (n-2,n-1).
fn slots(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect()
}

impl CompactCell {
    fn view(&self) -> GraphView {
        let n = self.n as usize;
        let mut preds = [0u8; 7];
        let mut succs = [0u8; 7];
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                if self.bits & (1 << k) != 0 {
                    succs[i] |= 1 << j;
                    preds[j] |= 1 << i;
                }
                k += 1;
            }
        }
        GraphView {
            n,
            ops: self.ops,
            preds,
            succs,
        }
    }

    fn to_cell(self) -> CellGraph {
        let n = self.n as usize;
        let mut ops = Vec::with_capacity(n);
        ops.push(OperationKind::Input);
        for v in 1..n - 1 {
            ops.push(OP_TAGS[self.ops[v] as usize]);
        }
        ops.push(OperationKind::Output);
        let mut edges = Vec::new();
        for (k, (i, j)) in slots(n).into_iter().enumerate() {
            if self.bits & (1 << k) != 0 {
                edges.push((i, j));
            }
        }
        CellGraph::new(ops, &edges).expect("compact cells are structurally well-formed")
    }
}

/// Structural validity of an adjacency bitmask: every vertex must lie on
/// a directed path from vertex 0 to vertex n-1.
fn matrix_is_valid(n: usize, bits: u32) -> bool {
    let mut succs = [0u8; 7];
    let mut preds = [0u8; 7];
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            if bits & (1 << k) != 0 {
                succs[i] |= 1 << j;
                preds[j] |= 1 << i;
            }
            k += 1;
        }
    }
    // Forward reachability from 0 (ascending order is topological).
    let mut from_input: u8 = 1;
    for v in 1..n {
        if preds[v] & from_input != 0 {
            from_input |= 1 << v;
        }
    }
    if from_input.count_ones() as usize != n {
        return false;
    }
    // Backward reachability to n-1.
    let mut to_output: u8 = 1 << (n - 1);
    for v in (0..n - 1).rev() {
        if succs[v] & to_output != 0 {
            to_output |= 1 << v;
        }
    }
    to_output.count_ones() as usize == n
}

/// Deduplicating accumulator over compact cells.
struct Dedup {
    by_digest: HashMap<u64, Vec<u32>>,
    emitted: Vec<CompactCell>,
    views: Vec<GraphView>,
}

impl Dedup {
    fn new() -> Self {
        Dedup {
            by_digest: HashMap::new(),
            emitted: Vec::new(),
            views: Vec::new(),
        }
    }

    /// Returns true when the candidate is new.
    fn insert(&mut self, cell: CompactCell, digest: u64) -> bool {
        let view = cell.view();
        let ids = self.by_digest.entry(digest).or_default();
        for &id in ids.iter() {
            if isomorphic_views(&view, &self.views[id as usize]) {
                return false;
            }
        }
        let id = self.emitted.len() as u32;
        ids.push(id);
        self.emitted.push(cell);
        self.views.push(view);
        true
    }
}

/// Candidates (digest + compact cell) for one adjacency mask.
fn candidates_for_mask(n: usize, bits: u32, out: &mut Vec<(u64, CompactCell)>) {
    let interior = n - 2;
    let mut assignment = [1u8; 7]; // interior tags in 1..=3
    loop {
        let mut ops = [0u8; 7];
        ops[n - 1] = 4;
        ops[1..n - 1].copy_from_slice(&assignment[..interior]);
        let cell = CompactCell {
            n: n as u8,
            ops,
            bits,
        };
        out.push((wl_digest64(&cell.view()), cell));

        // Odometer with vertex 1 as the most significant digit, so the
        // assignment order is lexicographic in (vertex, tag).
        let mut pos = interior;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            if assignment[pos] < 3 {
                assignment[pos] += 1;
                for slot in assignment.iter_mut().take(interior).skip(pos + 1) {
                    *slot = 1;
                }
                break;
            }
        }
    }
}

fn enumerate_full(max_vertices: usize, max_edges: usize) -> Vec<CellGraph> {
    let mut dedup = Dedup::new();
    for n in 2..=max_vertices {
        let total_masks: u32 = 1 << slot_count(n);
        let masks: Vec<u32> = (0..total_masks)
            .filter(|&bits| {
                bits.count_ones() as usize <= max_edges && matrix_is_valid(n, bits)
            })
            .collect();

        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            // Process mask chunks in bounded groups so candidate buffers
            // stay small while the merge preserves the global order.
            const CHUNK: usize = 1024;
            const GROUP: usize = 16;
            let chunks: Vec<&[u32]> = masks.chunks(CHUNK).collect();
            for group in chunks.chunks(GROUP) {
                let produced: Vec<Vec<(u64, CompactCell)>> = group
                    .par_iter()
                    .map(|chunk| {
                        let mut out = Vec::new();
                        for &bits in *chunk {
                            candidates_for_mask(n, bits, &mut out);
                        }
                        out
                    })
                    .collect();
                for batch in produced {
                    for (digest, cell) in batch {
                        dedup.insert(cell, digest);
                    }
                }
            }
        }

        #[cfg(not(feature = "parallel"))]
        {
            let mut out = Vec::new();
            for &bits in &masks {
                candidates_for_mask(n, bits, &mut out);
                for (digest, cell) in out.drain(..) {
                    dedup.insert(cell, digest);
                }
            }
        }
    }
    dedup.emitted.iter().map(|c| c.to_cell()).collect()
}

fn sample_cells(
    max_vertices: usize,
    max_edges: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<CellGraph>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dedup = Dedup::new();
    let mut attempts: u64 = 0;
    let max_attempts = 20_000 + (count as u64) * 50_000;
    while dedup.emitted.len() < count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::SampleExhausted {
                requested: count,
                attempts,
            });
        }
        let n = rng.random_range(2..=max_vertices);
        let bits: u32 = rng.random_range(0..1u32 << slot_count(n));
        if bits.count_ones() as usize > max_edges || !matrix_is_valid(n, bits) {
            continue;
        }
        let mut ops = [0u8; 7];
        ops[n - 1] = 4;
        for slot in ops.iter_mut().take(n - 1).skip(1) {
            *slot = rng.random_range(1..=3);
        }
        let cell = CompactCell {
            n: n as u8,
            ops,
            bits,
        };
        let digest = wl_digest64(&cell.view());
        dedup.insert(cell, digest);
    }
    Ok(dedup.emitted.iter().map(|c| c.to_cell()).collect())
}

/// Enumerate unique valid cells within the given limits.
pub fn enumerate_cells(
    max_vertices: usize,
    max_edges: usize,
    mode: EnumerationMode,
) -> Result<Vec<CellGraph>> {
    if max_vertices > MAX_VERTICES || max_edges > MAX_EDGES {
        return Err(Error::LimitsTooLarge {
            vertices: max_vertices,
            edges: max_edges,
        });
    }
    if max_vertices < 2 {
        return Err(Error::LimitsTooLarge {
            vertices: max_vertices,
            edges: max_edges,
        });
    }
    match mode {
        EnumerationMode::Full => Ok(enumerate_full(max_vertices, max_edges)),
        EnumerationMode::Sample { count, seed } => {
            sample_cells(max_vertices, max_edges, count, seed)
        }
    }
}
