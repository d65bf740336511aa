//! The full encoder/core/decoder model and its training loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::block::{gn_block_backward, gn_block_forward, BlockCache, BlockTriplet};
use super::features::{encode_cell, GraphFeatures};
use super::mlp::{MlpBlock, MlpCache};
use crate::cell::CellGraph;
use crate::error::Error;
use crate::Result;

/// Latent width of every edge/node/global feature and MLP layer.
pub const LATENT_WIDTH: usize = 16;

/// All trainable parameters of the learned performance model.
///
/// The same struct doubles as the gradient container: `backward`
/// returns a `GraphNetModel` whose entries are dL/dparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNetModel {
    pub encoder: BlockTriplet,
    pub core: BlockTriplet,
    pub decoder: BlockTriplet,
    /// Linear readout from the decoded global feature to the scalar
    /// prediction.
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
    pub num_message_passing_steps: usize,
}

pub(crate) struct StepTrace {
    core_cache: BlockCache,
    dec_cache: MlpCache,
    dec_out: Vec<f64>,
}

pub(crate) struct ForwardTrace {
    enc_edge_caches: Vec<MlpCache>,
    enc_node_caches: Vec<MlpCache>,
    enc_global_cache: MlpCache,
    enc_out: GraphFeatures,
    steps: Vec<StepTrace>,
    /// Decoder application when there are zero message-passing steps.
    direct_dec: Option<(MlpCache, Vec<f64>)>,
}

impl GraphNetModel {
    /// Fresh model with the documented widths: 1-wide raw features
    /// lifted to [`LATENT_WIDTH`], a core over the encoder-skip
    /// concatenation, and a 16->16 decoder with a linear readout.
    pub fn init(seed: u64, num_message_passing_steps: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = LATENT_WIDTH;
        let encoder = BlockTriplet {
            edge: MlpBlock::init(1, l, &mut rng),
            node: MlpBlock::init(1, l, &mut rng),
            global: MlpBlock::init(1, l, &mut rng),
        };
        // Core inputs are (encoder output | previous latent), so every
        // feature is 2l wide.
        let core = BlockTriplet {
            edge: MlpBlock::init(2 * l + 2 * (2 * l) + 2 * l, l, &mut rng),
            node: MlpBlock::init(l + 2 * l + 2 * l, l, &mut rng),
            global: MlpBlock::init(l + l + 2 * l, l, &mut rng),
        };
        let decoder = BlockTriplet {
            edge: MlpBlock::init(l, l, &mut rng),
            node: MlpBlock::init(l, l, &mut rng),
            global: MlpBlock::init(l, l, &mut rng),
        };
        let output_weights = super::mlp::Matrix::truncated_normal(1, l, &mut rng).data;
        GraphNetModel {
            encoder,
            core,
            decoder,
            output_weights,
            output_bias: 0.0,
            num_message_passing_steps,
        }
    }

    /// Structural sanity check for checkpoints.
    pub fn validate(&self) -> Result<()> {
        let l = self.encoder.edge.out_width();
        let checks = [
            (self.core.edge.in_width(), 8 * l, "core edge input"),
            (self.core.node.in_width(), 5 * l, "core node input"),
            (self.core.global.in_width(), 4 * l, "core global input"),
            (self.decoder.global.in_width(), l, "decoder global input"),
            (self.output_weights.len(), l, "output weights"),
        ];
        for (have, want, what) in checks {
            if have != want {
                return Err(Error::BadCheckpoint(format!(
                    "{what} width {have}, expected {want}"
                )));
            }
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> GraphNetModel {
        GraphNetModel {
            encoder: self.encoder.zeros_like(),
            core: self.core.zeros_like(),
            decoder: self.decoder.zeros_like(),
            output_weights: vec![0.0; self.output_weights.len()],
            output_bias: 0.0,
            num_message_passing_steps: self.num_message_passing_steps,
        }
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut slices = self.encoder.param_slices_mut();
        slices.extend(self.core.param_slices_mut());
        slices.extend(self.decoder.param_slices_mut());
        slices.push(&mut self.output_weights);
        slices.push(std::slice::from_mut(&mut self.output_bias));
        slices
    }

    pub(crate) fn param_slices(&self) -> Vec<&[f64]> {
        let mut slices = self.encoder.param_slices();
        slices.extend(self.core.param_slices());
        slices.extend(self.decoder.param_slices());
        slices.push(&self.output_weights);
        slices.push(std::slice::from_ref(&self.output_bias));
        slices
    }

    pub fn parameter_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn apply_encoder(
        &self,
        raw: &GraphFeatures,
    ) -> (GraphFeatures, Vec<MlpCache>, Vec<MlpCache>, MlpCache) {
        let mut edge_caches = Vec::with_capacity(raw.edges.len());
        let edges = raw
            .edges
            .iter()
            .map(|e| {
                let (y, c) = self.encoder.edge.forward_cached(&e.feat);
                edge_caches.push(c);
                super::features::EdgeFeature {
                    sender: e.sender,
                    receiver: e.receiver,
                    feat: y,
                }
            })
            .collect();
        let mut node_caches = Vec::with_capacity(raw.nodes.len());
        let nodes = raw
            .nodes
            .iter()
            .map(|n| {
                let (y, c) = self.encoder.node.forward_cached(n);
                node_caches.push(c);
                y
            })
            .collect();
        let (global, global_cache) = self.encoder.global.forward_cached(&raw.global);
        (
            GraphFeatures {
                nodes,
                edges,
                global,
            },
            edge_caches,
            node_caches,
            global_cache,
        )
    }

    /// Forward pass: one raw (normalized-scale) prediction per
    /// message-passing step.
    pub(crate) fn forward_traced(&self, cell: &CellGraph) -> (Vec<f64>, ForwardTrace) {
        let raw = encode_cell(cell);
        let (enc_out, enc_edge_caches, enc_node_caches, enc_global_cache) =
            self.apply_encoder(&raw);

        let mut predictions = Vec::new();
        let mut steps = Vec::new();
        let mut direct_dec = None;

        if self.num_message_passing_steps == 0 {
            // Without message passing only the encoded global feature
            // reaches the readout.
            let (dec_out, dec_cache) = self.decoder.global.forward_cached(&enc_out.global);
            predictions.push(self.readout(&dec_out));
            direct_dec = Some((dec_cache, dec_out));
        } else {
            let mut latent = enc_out.clone();
            for _ in 0..self.num_message_passing_steps {
                let core_in = enc_out.concat(&latent);
                let (next, core_cache) = gn_block_forward(&core_in, &self.core);
                latent = next;
                // Decoder runs on edge, node and global features; only
                // the decoded global feeds the readout, the rest is
                // discarded.
                for e in &latent.edges {
                    let _ = self.decoder.edge.forward(&e.feat);
                }
                for n in &latent.nodes {
                    let _ = self.decoder.node.forward(n);
                }
                let (dec_out, dec_cache) = self.decoder.global.forward_cached(&latent.global);
                predictions.push(self.readout(&dec_out));
                steps.push(StepTrace {
                    core_cache,
                    dec_cache,
                    dec_out,
                });
            }
        }

        (
            predictions,
            ForwardTrace {
                enc_edge_caches,
                enc_node_caches,
                enc_global_cache,
                enc_out,
                steps,
                direct_dec,
            },
        )
    }

    fn readout(&self, decoded_global: &[f64]) -> f64 {
        self.output_weights
            .iter()
            .zip(decoded_global)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + self.output_bias
    }

    /// Per-step raw predictions (normalized target scale).
    pub fn predictions(&self, cell: &CellGraph) -> Vec<f64> {
        self.forward_traced(cell).0
    }

    /// Final prediction in normalized target units.
    pub fn predict_normalized(&self, cell: &CellGraph) -> f64 {
        *self
            .predictions(cell)
            .last()
            .expect("at least one prediction per forward pass")
    }

    /// Final prediction in original target units.
    pub fn predict(&self, cell: &CellGraph, norm: &super::train::TargetNormalization) -> f64 {
        norm.denormalize(self.predict_normalized(cell))
    }

    /// Exact gradients of `d_per_step . predictions` with respect to
    /// every parameter, as a model-shaped structure.
    pub(crate) fn backward(&self, trace: &ForwardTrace, d_per_step: &[f64]) -> GraphNetModel {
        let mut grads = self.zeros_like();

        let mut d_enc = trace.enc_out.zeros_like();

        if let Some((dec_cache, dec_out)) = &trace.direct_dec {
            let dy = d_per_step[0];
            for (g, v) in grads.output_weights.iter_mut().zip(dec_out) {
                *g += dy * v;
            }
            grads.output_bias += dy;
            let d_dec: Vec<f64> = self.output_weights.iter().map(|w| w * dy).collect();
            let d_global =
                self.decoder
                    .global
                    .backward(dec_cache, &d_dec, &mut grads.decoder.global);
            for (a, b) in d_enc.global.iter_mut().zip(&d_global) {
                *a += b;
            }
        } else {
            debug_assert_eq!(d_per_step.len(), trace.steps.len());
            let mut d_latent = trace.enc_out.zeros_like();
            for (s, step) in trace.steps.iter().enumerate().rev() {
                let dy = d_per_step[s];
                for (g, v) in grads.output_weights.iter_mut().zip(&step.dec_out) {
                    *g += dy * v;
                }
                grads.output_bias += dy;
                let d_dec: Vec<f64> = self.output_weights.iter().map(|w| w * dy).collect();
                let d_global = self.decoder.global.backward(
                    &step.dec_cache,
                    &d_dec,
                    &mut grads.decoder.global,
                );
                for (a, b) in d_latent.global.iter_mut().zip(&d_global) {
                    *a += b;
                }

                let d_core_in =
                    gn_block_backward(&self.core, &step.core_cache, &d_latent, &mut grads.core);
                let (d_enc_part, d_prev) = split_features(&d_core_in, &trace.enc_out);
                accumulate(&mut d_enc, &d_enc_part);
                d_latent = d_prev;
            }
            // The step-0 "previous latent" is the encoder output itself.
            accumulate(&mut d_enc, &d_latent);
        }

        // Encoder backward; input features are constants.
        for (e, cache) in trace.enc_edge_caches.iter().enumerate() {
            self.encoder
                .edge
                .backward(cache, &d_enc.edges[e].feat, &mut grads.encoder.edge);
        }
        for (v, cache) in trace.enc_node_caches.iter().enumerate() {
            self.encoder
                .node
                .backward(cache, &d_enc.nodes[v], &mut grads.encoder.node);
        }
        self.encoder.global.backward(
            &trace.enc_global_cache,
            &d_enc.global,
            &mut grads.encoder.global,
        );

        grads
    }
}

fn accumulate(acc: &mut GraphFeatures, delta: &GraphFeatures) {
    for (a, d) in acc.nodes.iter_mut().zip(&delta.nodes) {
        for (x, y) in a.iter_mut().zip(d) {
            *x += y;
        }
    }
    for (a, d) in acc.edges.iter_mut().zip(&delta.edges) {
        for (x, y) in a.feat.iter_mut().zip(&d.feat) {
            *x += y;
        }
    }
    for (x, y) in acc.global.iter_mut().zip(&delta.global) {
        *x += y;
    }
}

/// Split gradients of a concatenated feature set back into the two
/// halves; `proto` gives the first half's widths.
fn split_features(
    concat: &GraphFeatures,
    proto: &GraphFeatures,
) -> (GraphFeatures, GraphFeatures) {
    let nw = proto.node_width();
    let ew = proto.edge_width();
    let gw = proto.global.len();
    let mut first = proto.zeros_like();
    let mut second = proto.zeros_like();
    for (v, node) in concat.nodes.iter().enumerate() {
        first.nodes[v].copy_from_slice(&node[..nw]);
        second.nodes[v].copy_from_slice(&node[nw..]);
    }
    for (e, edge) in concat.edges.iter().enumerate() {
        first.edges[e].feat.copy_from_slice(&edge.feat[..ew]);
        second.edges[e].feat.copy_from_slice(&edge.feat[ew..]);
    }
    first.global.copy_from_slice(&concat.global[..gw]);
    second.global.copy_from_slice(&concat.global[gw..]);
    (first, second)
}

/// Training loss: mean over message-passing steps of the squared error
/// against the normalized target.
pub fn loss(predictions_per_step: &[f64], normalized_target: f64) -> f64 {
    debug_assert!(!predictions_per_step.is_empty());
    predictions_per_step
        .iter()
        .map(|p| (p - normalized_target) * (p - normalized_target))
        .sum::<f64>()
        / predictions_per_step.len() as f64
}

/// dL/dprediction for every step.
pub(crate) fn loss_gradient(predictions_per_step: &[f64], normalized_target: f64) -> Vec<f64> {
    let n = predictions_per_step.len() as f64;
    predictions_per_step
        .iter()
        .map(|p| 2.0 * (p - normalized_target) / n)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::OperationKind::*;

    fn small_cell() -> CellGraph {
        CellGraph::new(vec![Input, Conv3x3, Output], &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss(&[3.0, 3.0, 3.0], 3.0), 0.0);
        // Steps predicting t+1 and t-1 give ((1)^2 + (1)^2) / 2 = 1.
        assert_eq!(loss(&[4.0, 2.0], 3.0), 1.0);
        assert!(loss(&[-7.0, 11.0], 1.5) >= 0.0);
    }

    #[test]
    fn forward_is_deterministic() {
        let model = GraphNetModel::init(42, 7);
        let cell = small_cell();
        let a = model.predictions(&cell);
        let b = model.predictions(&cell);
        assert_eq!(a, b);
        assert_eq!(a.len(), 7);
    }

    #[test]
    fn zero_steps_ignores_structure() {
        let model = GraphNetModel::init(1, 0);
        let a = model.predict_normalized(&small_cell());
        let chain = CellGraph::new(
            vec![Input, Conv1x1, MaxPool3x3, Output],
            &[(0, 1), (1, 2), (2, 3)],
        )
        .unwrap();
        let b = model.predict_normalized(&chain);
        assert_eq!(a, b, "no structural information has propagated");
    }

    #[test]
    fn predictions_are_finite_over_random_models_and_cells() {
        use crate::enumerate::{enumerate_cells, EnumerationMode};
        let cells = enumerate_cells(
            7,
            9,
            EnumerationMode::Sample {
                count: 100,
                seed: 21,
            },
        )
        .unwrap();
        for model_seed in 0..10 {
            let model = GraphNetModel::init(model_seed, 7);
            for cell in &cells {
                for p in model.predictions(cell) {
                    assert!(p.is_finite());
                }
            }
        }
    }

    #[test]
    fn prediction_is_invariant_under_vertex_relabeling() {
        let model = GraphNetModel::init(5, 7);
        // Diamond with two distinct interior ops, relabeled two ways.
        let a = CellGraph::new(
            vec![Input, Conv3x3, MaxPool3x3, Output],
            &[(0, 1), (0, 2), (1, 3), (2, 3)],
        )
        .unwrap();
        let b = CellGraph::new(
            vec![Input, MaxPool3x3, Conv3x3, Output],
            &[(0, 1), (0, 2), (1, 3), (2, 3)],
        )
        .unwrap();
        let pa = model.predict_normalized(&a);
        let pb = model.predict_normalized(&b);
        assert!(
            (pa - pb).abs() < 1e-9,
            "sum aggregation must be permutation-invariant: {pa} vs {pb}"
        );
    }

    #[test]
    fn unused_decoder_blocks_get_zero_gradient() {
        let model = GraphNetModel::init(3, 4);
        let cell = small_cell();
        let (preds, trace) = model.forward_traced(&cell);
        let grads = model.backward(&trace, &loss_gradient(&preds, 0.5));
        for slice in grads.decoder.edge.param_slices() {
            assert!(slice.iter().all(|&g| g == 0.0));
        }
        for slice in grads.decoder.node.param_slices() {
            assert!(slice.iter().all(|&g| g == 0.0));
        }
        // The used paths do receive gradient.
        assert!(grads
            .decoder
            .global
            .param_slices()
            .iter()
            .any(|s| s.iter().any(|&g| g != 0.0)));
        assert!(grads.output_weights.iter().any(|&g| g != 0.0));
    }

    #[test]
    fn model_gradients_match_finite_differences() {
        let model = GraphNetModel::init(7, 3);
        let cell = small_cell();
        let target = 0.37;

        let (preds, trace) = model.forward_traced(&cell);
        let grads = model.backward(&trace, &loss_gradient(&preds, target));
        let flat: Vec<f64> = grads
            .param_slices()
            .iter()
            .flat_map(|s| s.iter().copied())
            .collect();

        let mut probe = model.clone();
        let step = 1e-5;
        let mut k = 0;
        let mut max_rel = 0.0f64;
        let n_slices = probe.param_slices_mut().len();
        for s in 0..n_slices {
            let len = probe.param_slices_mut()[s].len();
            for i in 0..len {
                let orig = probe.param_slices_mut()[s][i];
                probe.param_slices_mut()[s][i] = orig + step;
                let up = loss(&probe.predictions(&cell), target);
                probe.param_slices_mut()[s][i] = orig - step;
                let down = loss(&probe.predictions(&cell), target);
                probe.param_slices_mut()[s][i] = orig;
                let fd = (up - down) / (2.0 * step);
                let a = flat[k];
                let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-6);
                max_rel = max_rel.max(rel);
                assert!(rel < 1e-4, "param {k} (slice {s}): fd {fd} analytic {a}");
                k += 1;
            }
        }
        assert_eq!(k, model.parameter_count());
        // Keep a record that the check was not vacuous.
        assert!(flat.iter().any(|&g| g != 0.0));
        println!("max relative gradient error: {max_rel:.3e}");
    }

    #[test]
    fn single_descent_step_reduces_loss() {
        let model = GraphNetModel::init(11, 3);
        let cells: Vec<CellGraph> = vec![small_cell()];
        let target = 1.25;

        let (preds, trace) = model.forward_traced(&cells[0]);
        let before = loss(&preds, target);
        let grads = model.backward(&trace, &loss_gradient(&preds, target));

        let mut stepped = model.clone();
        let lr = 1e-3;
        let gs = grads.param_slices();
        for (slice, g) in stepped.param_slices_mut().into_iter().zip(gs) {
            for (p, d) in slice.iter_mut().zip(g.iter()) {
                *p -= lr * d;
            }
        }
        let after = loss(&stepped.predictions(&cells[0]), target);
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn checkpoint_json_round_trips_bit_exactly() {
        let model = GraphNetModel::init(9, 7);
        let json = serde_json::to_string(&model).unwrap();
        let back: GraphNetModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
        let a = model.predict_normalized(&small_cell());
        let b = back.predict_normalized(&small_cell());
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
