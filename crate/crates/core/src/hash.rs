//! Canonical hashing and exact isomorphism checks for cells.
//!
//! Two cells are considered the same architecture when one can be turned
//! into the other by relabeling interior vertices while preserving ops
//! and edges (input and output are pinned). The canonical hash is an
//! iterative neighborhood-label scheme: each vertex starts from its
//! (op, in-degree, out-degree) signature and absorbs the sorted label
//! multisets of its in- and out-neighbors for `n` rounds; the digest of
//! the sorted final labels is label-relabeling invariant by
//! construction. Collisions between non-isomorphic cells are possible in
//! principle, so enumeration backs the hash with [`isomorphic`], an
//! exhaustive interior-permutation check.

use sha2::{Digest, Sha256};

use crate::cell::CellGraph;
use crate::Result;

/// Compact adjacency view used by the hot hashing/isomorphism paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct GraphView {
    pub n: usize,
    pub ops: [u8; 7],
    /// Bitmask of predecessors per vertex.
    pub preds: [u8; 7],
    /// Bitmask of successors per vertex.
    pub succs: [u8; 7],
}

impl GraphView {
    pub fn from_cell(cell: &CellGraph) -> Self {
        let n = cell.vertex_count();
        debug_assert!(n <= 7);
        let mut ops = [0u8; 7];
        let mut preds = [0u8; 7];
        let mut succs = [0u8; 7];
        for v in 0..n {
            ops[v] = cell.op(v).tag();
            for w in v + 1..n {
                if cell.has_edge(v, w) {
                    succs[v] |= 1 << w;
                    preds[w] |= 1 << v;
                }
            }
        }
        GraphView { n, ops, preds, succs }
    }

    fn edge(&self, i: usize, j: usize) -> bool {
        self.succs[i] & (1 << j) != 0
    }

    fn edge_count(&self) -> u32 {
        self.succs.iter().map(|m| m.count_ones()).sum()
    }
}

/// Canonical hash of a valid cell: 64 hex characters, identical for
/// isomorphic cells, stable across runs and platforms.
pub fn canonical_hash(cell: &CellGraph) -> Result<String> {
    cell.require_valid()?;
    let digest = wl_sha(&GraphView::from_cell(cell));
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    Ok(out)
}

fn wl_sha(view: &GraphView) -> [u8; 32] {
    let n = view.n;
    let mut labels: Vec<[u8; 32]> = (0..n)
        .map(|v| {
            let mut h = Sha256::new();
            h.update([
                view.ops[v],
                view.preds[v].count_ones() as u8,
                view.succs[v].count_ones() as u8,
            ]);
            h.finalize().into()
        })
        .collect();

    let mut next = labels.clone();
    for _ in 0..n {
        for v in 0..n {
            let mut ins: Vec<[u8; 32]> = (0..n)
                .filter(|&u| view.edge(u, v))
                .map(|u| labels[u])
                .collect();
            ins.sort_unstable();
            let mut outs: Vec<[u8; 32]> = (0..n)
                .filter(|&w| view.edge(v, w))
                .map(|w| labels[w])
                .collect();
            outs.sort_unstable();

            let mut h = Sha256::new();
            h.update([0x01]);
            h.update(labels[v]);
            h.update([0x02]);
            for l in &ins {
                h.update(l);
            }
            h.update([0x03]);
            for l in &outs {
                h.update(l);
            }
            next[v] = h.finalize().into();
        }
        std::mem::swap(&mut labels, &mut next);
    }

    labels.sort_unstable();
    let mut h = Sha256::new();
    h.update([0xff]);
    for l in &labels {
        h.update(l);
    }
    h.finalize().into()
}

/// Fast 64-bit variant of the same label-iteration scheme, used as the
/// enumeration dedup key. Equal for isomorphic cells by the same
/// argument as the full hash; collisions are resolved by [`isomorphic`].
pub(crate) fn wl_digest64(view: &GraphView) -> u64 {
    #[inline]
    fn mix(mut x: u64) -> u64 {
        // splitmix64 finalizer
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
        x ^ (x >> 31)
    }
    #[inline]
    fn fold(acc: u64, value: u64) -> u64 {
        mix(acc.wrapping_mul(0x9e3779b97f4a7c15) ^ value)
    }

    let n = view.n;
    let mut labels = [0u64; 7];
    for v in 0..n {
        labels[v] = mix(
            0x5851f42d4c957f2d
                ^ (view.ops[v] as u64) << 16
                ^ (view.preds[v].count_ones() as u64) << 8
                ^ view.succs[v].count_ones() as u64,
        );
    }

    let mut next = [0u64; 7];
    let mut scratch = [0u64; 7];
    for _ in 0..n {
        for v in 0..n {
            let mut acc = fold(0x0102, labels[v]);

            let mut k = 0;
            for u in 0..n {
                if view.edge(u, v) {
                    scratch[k] = labels[u];
                    k += 1;
                }
            }
            scratch[..k].sort_unstable();
            acc = fold(acc, 0x0203);
            for &l in &scratch[..k] {
                acc = fold(acc, l);
            }

            let mut k = 0;
            for w in 0..n {
                if view.edge(v, w) {
                    scratch[k] = labels[w];
                    k += 1;
                }
            }
            scratch[..k].sort_unstable();
            acc = fold(acc, 0x0304);
            for &l in &scratch[..k] {
                acc = fold(acc, l);
            }

            next[v] = acc;
        }
        labels = next;
    }

    let mut finals = [0u64; 7];
    finals[..n].copy_from_slice(&labels[..n]);
    finals[..n].sort_unstable();
    let mut acc = 0xff00ff00ff00ff;
    for &l in &finals[..n] {
        acc = fold(acc, l);
    }
    acc
}

/// Exact isomorphism check: does some permutation of interior vertices
/// map `a`'s ops and edges onto `b`'s? Input and output stay fixed.
pub fn isomorphic(a: &CellGraph, b: &CellGraph) -> bool {
    isomorphic_views(&GraphView::from_cell(a), &GraphView::from_cell(b))
}

pub(crate) fn isomorphic_views(a: &GraphView, b: &GraphView) -> bool {
    if a.n != b.n || a.edge_count() != b.edge_count() {
        return false;
    }
    let n = a.n;
    if n == 0 {
        return true;
    }
    if a.ops[0] != b.ops[0] || a.ops[n - 1] != b.ops[n - 1] {
        return false;
    }
    // Degree/op signature multisets must match.
    let signature = |v: &GraphView| {
        let mut sig: Vec<(u8, u32, u32)> = (0..v.n)
            .map(|i| (v.ops[i], v.preds[i].count_ones(), v.succs[i].count_ones()))
            .collect();
        sig.sort_unstable();
        sig
    };
    if signature(a) != signature(b) {
        return false;
    }

    let mut mapping = [usize::MAX; 7];
    mapping[0] = 0;
    mapping[n - 1] = n - 1;
    let mut used = [false; 7];
    used[0] = true;
    used[n - 1] = true;

    fn assign(
        a: &GraphView,
        b: &GraphView,
        v: usize,
        mapping: &mut [usize; 7],
        used: &mut [bool; 7],
    ) -> bool {
        let n = a.n;
        if v == n - 1 {
            // Interior fully mapped; edges were checked incrementally,
            // including those touching input and output.
            return true;
        }
        for w in 1..n - 1 {
            if used[w] || a.ops[v] != b.ops[w] {
                continue;
            }
            // Consistency with every already-mapped vertex.
            let consistent = (0..n).all(|u| {
                let mu = mapping[u];
                if mu == usize::MAX {
                    return true;
                }
                a.edge(u, v) == b.edge(mu, w) && a.edge(v, u) == b.edge(w, mu)
            });
            if !consistent {
                continue;
            }
            mapping[v] = w;
            used[w] = true;
            if assign(a, b, v + 1, mapping, used) {
                return true;
            }
            mapping[v] = usize::MAX;
            used[w] = false;
        }
        false
    }

    if n == 2 {
        return a.edge(0, 1) == b.edge(0, 1);
    }
    assign(a, b, 1, &mut mapping, &mut used)
}
