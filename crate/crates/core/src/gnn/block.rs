//! Full graph-network block: edge, node and global updates with sum
//! aggregation, plus the exact backward pass.

use serde::{Deserialize, Serialize};

use super::features::{EdgeFeature, GraphFeatures};
use super::mlp::{MlpBlock, MlpCache};
use crate::error::Error;
use crate::Result;

/// The three neural models of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTriplet {
    pub edge: MlpBlock,
    pub node: MlpBlock,
    pub global: MlpBlock,
}

impl BlockTriplet {
    pub(crate) fn zeros_like(&self) -> BlockTriplet {
        BlockTriplet {
            edge: MlpBlock::new_zero(self.edge.in_width(), self.edge.out_width()),
            node: MlpBlock::new_zero(self.node.in_width(), self.node.out_width()),
            global: MlpBlock::new_zero(self.global.in_width(), self.global.out_width()),
        }
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut slices = self.edge.param_slices_mut();
        slices.extend(self.node.param_slices_mut());
        slices.extend(self.global.param_slices_mut());
        slices
    }

    pub(crate) fn param_slices(&self) -> Vec<&[f64]> {
        let mut slices = self.edge.param_slices();
        slices.extend(self.node.param_slices());
        slices.extend(self.global.param_slices());
        slices
    }
}

pub(crate) struct BlockCache {
    edge_caches: Vec<MlpCache>,
    node_caches: Vec<MlpCache>,
    global_cache: MlpCache,
    topology: Vec<(usize, usize)>,
    in_edge_width: usize,
    in_node_width: usize,
    in_global_width: usize,
}

fn concat_into(out: &mut Vec<f64>, parts: &[&[f64]]) {
    out.clear();
    for p in parts {
        out.extend_from_slice(p);
    }
}

fn add_assign(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// One message-passing round. Checks feature widths against the MLP
/// input widths before computing.
pub fn gn_block(features: &GraphFeatures, blocks: &BlockTriplet) -> Result<GraphFeatures> {
    let nw = features.node_width();
    let gw = features.global.len();
    let latent = blocks.edge.out_width();
    let mut expect = vec![
        ("node", blocks.node.in_width(), latent + nw + gw),
        (
            "global",
            blocks.global.in_width(),
            latent + blocks.node.out_width() + gw,
        ),
    ];
    if !features.edges.is_empty() {
        let ew = features.edge_width();
        expect.push(("edge", blocks.edge.in_width(), ew + 2 * nw + gw));
    }
    for (name, have, want) in expect {
        if have != want {
            return Err(Error::WidthMismatch(format!(
                "{name} block expects input width {have}, features imply {want}"
            )));
        }
    }
    Ok(gn_block_forward(features, blocks).0)
}

pub(crate) fn gn_block_forward(
    features: &GraphFeatures,
    blocks: &BlockTriplet,
) -> (GraphFeatures, BlockCache) {
    let latent = blocks.edge.out_width();
    let num_nodes = features.nodes.len();
    let mut x = Vec::new();

    // Edge update: MLP over (edge, receiver, sender, global).
    let mut new_edges = Vec::with_capacity(features.edges.len());
    let mut edge_caches = Vec::with_capacity(features.edges.len());
    for e in &features.edges {
        concat_into(
            &mut x,
            &[
                &e.feat,
                &features.nodes[e.receiver],
                &features.nodes[e.sender],
                &features.global,
            ],
        );
        let (y, cache) = blocks.edge.forward_cached(&x);
        new_edges.push(EdgeFeature {
            sender: e.sender,
            receiver: e.receiver,
            feat: y,
        });
        edge_caches.push(cache);
    }

    // Node update: MLP over (sum of updated incoming edges, node, global).
    let mut incoming_sum = vec![vec![0.0; latent]; num_nodes];
    for e in &new_edges {
        add_assign(&mut incoming_sum[e.receiver], &e.feat);
    }
    let mut new_nodes = Vec::with_capacity(num_nodes);
    let mut node_caches = Vec::with_capacity(num_nodes);
    for (v, node) in features.nodes.iter().enumerate() {
        concat_into(&mut x, &[&incoming_sum[v], node, &features.global]);
        let (y, cache) = blocks.node.forward_cached(&x);
        new_nodes.push(y);
        node_caches.push(cache);
    }

    // Global update: MLP over (sum of edges, sum of nodes, global).
    let mut edge_sum = vec![0.0; latent];
    for e in &new_edges {
        add_assign(&mut edge_sum, &e.feat);
    }
    let mut node_sum = vec![0.0; blocks.node.out_width()];
    for nd in &new_nodes {
        add_assign(&mut node_sum, nd);
    }
    concat_into(&mut x, &[&edge_sum, &node_sum, &features.global]);
    let (new_global, global_cache) = blocks.global.forward_cached(&x);

    let cache = BlockCache {
        edge_caches,
        node_caches,
        global_cache,
        topology: features
            .edges
            .iter()
            .map(|e| (e.sender, e.receiver))
            .collect(),
        in_edge_width: features.edge_width(),
        in_node_width: features.node_width(),
        in_global_width: features.global.len(),
    };
    (
        GraphFeatures {
            nodes: new_nodes,
            edges: new_edges,
            global: new_global,
        },
        cache,
    )
}

/// Backward through one block: accumulates parameter gradients and
/// returns the gradient with respect to the input features.
pub(crate) fn gn_block_backward(
    blocks: &BlockTriplet,
    cache: &BlockCache,
    d_out: &GraphFeatures,
    grads: &mut BlockTriplet,
) -> GraphFeatures {
    let latent = blocks.edge.out_width();
    let num_nodes = cache.node_caches.len();
    let (ew, nw, gw) = (
        cache.in_edge_width,
        cache.in_node_width,
        cache.in_global_width,
    );

    let mut d_nodes_in = vec![vec![0.0; nw]; num_nodes];
    let mut d_global_in = vec![0.0; gw];

    // Global update backward.
    let dx_g = blocks
        .global
        .backward(&cache.global_cache, &d_out.global, &mut grads.global);
    let (d_edge_sum, rest) = dx_g.split_at(latent);
    let (d_node_sum, d_g) = rest.split_at(blocks.node.out_width());
    add_assign(&mut d_global_in, d_g);

    // Node update backward. Each node's output gradient is its direct
    // gradient plus the broadcast share of the global node-sum.
    let mut d_incoming = vec![vec![0.0; latent]; num_nodes];
    let mut dy = Vec::new();
    for v in (0..num_nodes).rev() {
        concat_into(&mut dy, &[&d_out.nodes[v]]);
        add_assign(&mut dy, d_node_sum);
        let dx = blocks
            .node
            .backward(&cache.node_caches[v], &dy, &mut grads.node);
        let (d_in_sum, rest) = dx.split_at(latent);
        let (d_node, d_g) = rest.split_at(nw);
        add_assign(&mut d_incoming[v], d_in_sum);
        add_assign(&mut d_nodes_in[v], d_node);
        add_assign(&mut d_global_in, d_g);
    }

    // Edge update backward. Each edge's output gradient combines its
    // direct gradient, its receiver's aggregation, and the global
    // edge-sum.
    let mut d_edges_in = Vec::with_capacity(cache.edge_caches.len());
    for (e, ec) in cache.edge_caches.iter().enumerate().rev() {
        let (sender, receiver) = cache.topology[e];
        concat_into(&mut dy, &[&d_out.edges[e].feat]);
        add_assign(&mut dy, d_edge_sum);
        add_assign(&mut dy, &d_incoming[receiver]);
        let dx = blocks.edge.backward(ec, &dy, &mut grads.edge);
        let (d_edge, rest) = dx.split_at(ew);
        let (d_recv, rest) = rest.split_at(nw);
        let (d_send, d_g) = rest.split_at(nw);
        d_edges_in.push(EdgeFeature {
            sender,
            receiver,
            feat: d_edge.to_vec(),
        });
        add_assign(&mut d_nodes_in[receiver], d_recv);
        add_assign(&mut d_nodes_in[sender], d_send);
        add_assign(&mut d_global_in, d_g);
    }
    d_edges_in.reverse();

    GraphFeatures {
        nodes: d_nodes_in,
        edges: d_edges_in,
        global: d_global_in,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn triplet(ew: usize, nw: usize, gw: usize, latent: usize, seed: u64) -> BlockTriplet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BlockTriplet {
            edge: MlpBlock::init(ew + 2 * nw + gw, latent, &mut rng),
            node: MlpBlock::init(latent + nw + gw, latent, &mut rng),
            global: MlpBlock::init(2 * latent + gw, latent, &mut rng),
        }
    }

    fn random_features(
        num_nodes: usize,
        edges: &[(usize, usize)],
        width: usize,
        seed: u64,
    ) -> GraphFeatures {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GraphFeatures {
            nodes: (0..num_nodes)
                .map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
            edges: edges
                .iter()
                .map(|&(s, r)| EdgeFeature {
                    sender: s,
                    receiver: r,
                    feat: (0..width).map(|_| rng.random_range(-1.0..1.0)).collect(),
                })
                .collect(),
            global: (0..width).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn zero_edge_graph_aggregates_to_zero() {
        let blocks = triplet(2, 2, 2, 4, 1);
        let features = random_features(3, &[], 2, 2);
        let out = gn_block(&features, &blocks).unwrap();
        // With no edges the node update sees a zero aggregate: recompute
        // one node by hand with an explicit zero prefix.
        let mut x = vec![0.0; 4];
        x.extend_from_slice(&features.nodes[1]);
        x.extend_from_slice(&features.global);
        assert_eq!(out.nodes[1], blocks.node.forward(&x));
        assert!(out.edges.is_empty());
    }

    #[test]
    fn width_mismatch_is_reported() {
        let blocks = triplet(2, 2, 2, 4, 3);
        let features = random_features(3, &[(0, 1)], 3, 4);
        assert!(matches!(
            gn_block(&features, &blocks),
            Err(Error::WidthMismatch(_))
        ));
    }

    #[test]
    fn node_permutation_permutes_nodes_and_preserves_global() {
        let blocks = triplet(2, 2, 2, 8, 5);
        let features = random_features(4, &[(0, 1), (0, 2), (1, 3), (2, 3)], 2, 6);
        let out = gn_block(&features, &blocks).unwrap();

        // Swap nodes 1 and 2 (and remap edges).
        let perm = [0usize, 2, 1, 3];
        let permuted = GraphFeatures {
            nodes: perm.iter().map(|&p| features.nodes[p].clone()).collect(),
            edges: features
                .edges
                .iter()
                .map(|e| EdgeFeature {
                    sender: perm.iter().position(|&p| p == e.sender).unwrap(),
                    receiver: perm.iter().position(|&p| p == e.receiver).unwrap(),
                    feat: e.feat.clone(),
                })
                .collect(),
            global: features.global.clone(),
        };
        let out_p = gn_block(&permuted, &blocks).unwrap();

        for (v, &p) in perm.iter().enumerate() {
            for (a, b) in out_p.nodes[v].iter().zip(&out.nodes[p]) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        for (a, b) in out_p.global.iter().zip(&out.global) {
            assert!((a - b).abs() < 1e-9, "global must be permutation-invariant");
        }
    }

    /// Manual trace of the three update equations on a single-edge
    /// graph, written with independent inline arithmetic.
    #[test]
    fn single_edge_forward_matches_manual_trace() {
        let blocks = triplet(1, 1, 1, 2, 7);
        let features = random_features(2, &[(0, 1)], 1, 8);

        let manual_mlp = |b: &MlpBlock, x: &[f64]| -> Vec<f64> {
            use super::super::mlp::Matrix;
            let lin = |m: &Matrix, bias: &[f64], x: &[f64]| -> Vec<f64> {
                (0..m.rows)
                    .map(|r| {
                        let mut acc = bias[r];
                        for c in 0..m.cols {
                            acc += m.data[r * m.cols + c] * x[c];
                        }
                        acc.max(0.0)
                    })
                    .collect()
            };
            let a1 = lin(&b.w1, &b.b1, x);
            let a2 = lin(&b.w2, &b.b2, &a1);
            let n = a2.len() as f64;
            let mean = a2.iter().sum::<f64>() / n;
            let var = a2.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + 1e-8).sqrt();
            a2.iter()
                .enumerate()
                .map(|(i, v)| (v - mean) * inv * b.ln_scale[i] + b.ln_offset[i])
                .collect()
        };

        // Edge update: concat(edge, receiver, sender, global).
        let e_in = vec![
            features.edges[0].feat[0],
            features.nodes[1][0],
            features.nodes[0][0],
            features.global[0],
        ];
        let new_edge = manual_mlp(&blocks.edge, &e_in);

        // Node updates: concat(edge aggregate, node, global).
        let mut n0_in = vec![0.0, 0.0];
        n0_in.push(features.nodes[0][0]);
        n0_in.push(features.global[0]);
        let new_n0 = manual_mlp(&blocks.node, &n0_in);
        let mut n1_in = new_edge.clone();
        n1_in.push(features.nodes[1][0]);
        n1_in.push(features.global[0]);
        let new_n1 = manual_mlp(&blocks.node, &n1_in);

        // Global update: concat(edge sum, node sum, global).
        let mut g_in = new_edge.clone();
        g_in.push(new_n0[0] + new_n1[0]);
        g_in.push(new_n0[1] + new_n1[1]);
        g_in.push(features.global[0]);
        let new_global = manual_mlp(&blocks.global, &g_in);

        let out = gn_block(&features, &blocks).unwrap();
        for (a, b) in out.edges[0].feat.iter().zip(&new_edge) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in out.nodes[0].iter().zip(&new_n0) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in out.nodes[1].iter().zip(&new_n1) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in out.global.iter().zip(&new_global) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn block_backward_matches_finite_differences() {
        let blocks = triplet(2, 2, 2, 4, 9);
        let features = random_features(3, &[(0, 1), (1, 2), (0, 2)], 2, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let target: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();

        // Scalar objective touching edge, node and global outputs.
        let objective = |b: &BlockTriplet, f: &GraphFeatures| -> f64 {
            let out = gn_block_forward(f, b).0;
            let mut total = 0.0;
            for e in &out.edges {
                total += e.feat.iter().map(|v| v * v).sum::<f64>();
            }
            for nd in &out.nodes {
                total += nd.iter().map(|v| v * v * 0.5).sum::<f64>();
            }
            total += out
                .global
                .iter()
                .zip(&target)
                .map(|(v, t)| (v - t) * (v - t))
                .sum::<f64>();
            total
        };

        let (out, cache) = gn_block_forward(&features, &blocks);
        let d_out = GraphFeatures {
            nodes: out.nodes.iter().map(|nd| nd.to_vec()).collect(),
            edges: out
                .edges
                .iter()
                .map(|e| EdgeFeature {
                    sender: e.sender,
                    receiver: e.receiver,
                    feat: e.feat.iter().map(|v| 2.0 * v).collect(),
                })
                .collect(),
            global: out
                .global
                .iter()
                .zip(&target)
                .map(|(v, t)| 2.0 * (v - t))
                .collect(),
        };
        let mut grads = blocks.zeros_like();
        let d_in = gn_block_backward(&blocks, &cache, &d_out, &mut grads);

        let step = 1e-6;
        // Parameters.
        let mut probe = blocks.clone();
        let flat: Vec<f64> = grads
            .param_slices()
            .iter()
            .flat_map(|s| s.iter().copied())
            .collect();
        let mut k = 0;
        let n_slices = probe.param_slices_mut().len();
        for s in 0..n_slices {
            for i in 0..probe.param_slices_mut()[s].len() {
                let orig = probe.param_slices_mut()[s][i];
                probe.param_slices_mut()[s][i] = orig + step;
                let up = objective(&probe, &features);
                probe.param_slices_mut()[s][i] = orig - step;
                let down = objective(&probe, &features);
                probe.param_slices_mut()[s][i] = orig;
                let fd = (up - down) / (2.0 * step);
                let a = flat[k];
                assert!(
                    (fd - a).abs() / fd.abs().max(a.abs()).max(1e-5) < 1e-4,
                    "param {k}: fd {fd} analytic {a}"
                );
                k += 1;
            }
        }
        // Input features.
        let mut f2 = features.clone();
        for v in 0..f2.nodes.len() {
            for i in 0..f2.nodes[v].len() {
                let orig = f2.nodes[v][i];
                f2.nodes[v][i] = orig + step;
                let up = objective(&blocks, &f2);
                f2.nodes[v][i] = orig - step;
                let down = objective(&blocks, &f2);
                f2.nodes[v][i] = orig;
                let fd = (up - down) / (2.0 * step);
                let a = d_in.nodes[v][i];
                assert!(
                    (fd - a).abs() / fd.abs().max(a.abs()).max(1e-5) < 1e-4,
                    "node ({v},{i}): fd {fd} analytic {a}"
                );
            }
        }
    }
}
