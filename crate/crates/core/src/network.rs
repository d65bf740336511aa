//! Expansion of a cell into a full convolutional network with exact
//! per-layer MAC, parameter, and activation accounting.
//!
//! The skeleton follows the NASBench-101 convention: a 3x3 stem
//! convolution, `num_stacks` stacks of `cells_per_stack` cell instances
//! with a 2x2 stride-2 max-pool and channel doubling between stacks,
//! then global average pooling and a dense classifier.
//!
//! Channel allocation inside a cell also follows that convention: the
//! cell's output channel budget is split evenly across the interior
//! vertices feeding the output (remainder going one-by-one to the
//! earliest such vertices); vertices not feeding the output take the
//! maximum of their successors' channels; edges leaving the cell input
//! are 1x1 projection convolutions; an input->output edge projects to
//! the full output width. Every convolution carries two per-channel
//! normalization parameters and the classifier carries a bias.

use serde::{Deserialize, Serialize};

use crate::cell::{CellGraph, OperationKind};
use crate::error::Error;
use crate::Result;

/// Shape of the expanded network skeleton.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_height: u32,
    pub input_width: u32,
    pub input_channels: u32,
    pub stem_channels: u32,
    pub num_stacks: u32,
    pub cells_per_stack: u32,
    pub num_classes: u32,
    /// Weight quantization width; 1 byte for 8-bit inference.
    pub bytes_per_weight: u32,
    pub bytes_per_activation: u32,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            input_height: 32,
            input_width: 32,
            input_channels: 3,
            stem_channels: 128,
            num_stacks: 3,
            cells_per_stack: 3,
            num_classes: 10,
            bytes_per_weight: 1,
            bytes_per_activation: 1,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("input_height", self.input_height),
            ("input_width", self.input_width),
            ("input_channels", self.input_channels),
            ("stem_channels", self.stem_channels),
            ("num_stacks", self.num_stacks),
            ("cells_per_stack", self.cells_per_stack),
            ("num_classes", self.num_classes),
            ("bytes_per_weight", self.bytes_per_weight),
            ("bytes_per_activation", self.bytes_per_activation),
        ];
        for (name, value) in fields {
            if value == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Role of a layer in the expanded network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    #[serde(rename = "stem")]
    Stem,
    #[serde(rename = "projection")]
    Projection,
    #[serde(rename = "conv3x3")]
    Conv3x3,
    #[serde(rename = "conv1x1")]
    Conv1x1,
    #[serde(rename = "maxpool3x3")]
    MaxPool3x3,
    #[serde(rename = "downsample")]
    Downsample,
    #[serde(rename = "global_pool")]
    GlobalPool,
    #[serde(rename = "dense")]
    Dense,
}

impl LayerKind {
    /// Layers executed on the MAC arrays (as opposed to the SIMD lanes).
    pub fn is_mac_layer(self) -> bool {
        matches!(
            self,
            LayerKind::Stem
                | LayerKind::Projection
                | LayerKind::Conv3x3
                | LayerKind::Conv1x1
                | LayerKind::Dense
        )
    }
}

/// One layer of the expanded network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerWorkload {
    pub kind: LayerKind,
    pub out_height: u32,
    pub out_width: u32,
    pub in_channels: u32,
    pub out_channels: u32,
    pub kernel_h: u32,
    pub kernel_w: u32,
    pub macs: u64,
    /// Trainable parameter count (weights + normalization/bias).
    pub params: u64,
    pub param_bytes: u64,
    pub input_activation_bytes: u64,
    pub output_activation_bytes: u64,
    /// Topological position within the network.
    pub depth_rank: u32,
}

impl LayerWorkload {
    fn conv(
        kind: LayerKind,
        height: u32,
        width: u32,
        in_channels: u32,
        out_channels: u32,
        kernel: u32,
        spec: &NetworkSpec,
    ) -> Self {
        let macs = u64::from(height)
            * u64::from(width)
            * u64::from(kernel)
            * u64::from(kernel)
            * u64::from(in_channels)
            * u64::from(out_channels);
        // k*k*in*out weights plus two per-output-channel normalization
        // parameters.
        let params = u64::from(kernel) * u64::from(kernel) * u64::from(in_channels)
            * u64::from(out_channels)
            + 2 * u64::from(out_channels);
        let act = |c: u32| u64::from(height) * u64::from(width) * u64::from(c)
            * u64::from(spec.bytes_per_activation);
        LayerWorkload {
            kind,
            out_height: height,
            out_width: width,
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            macs,
            params,
            param_bytes: params * u64::from(spec.bytes_per_weight),
            input_activation_bytes: act(in_channels),
            output_activation_bytes: act(out_channels),
            depth_rank: 0,
        }
    }

    fn dense(in_channels: u32, num_classes: u32, spec: &NetworkSpec) -> Self {
        let macs = u64::from(in_channels) * u64::from(num_classes);
        let params = macs + u64::from(num_classes); // weights + bias
        LayerWorkload {
            kind: LayerKind::Dense,
            out_height: 1,
            out_width: 1,
            in_channels,
            out_channels: num_classes,
            kernel_h: 1,
            kernel_w: 1,
            macs,
            params,
            param_bytes: params * u64::from(spec.bytes_per_weight),
            input_activation_bytes: u64::from(in_channels)
                * u64::from(spec.bytes_per_activation),
            output_activation_bytes: u64::from(num_classes)
                * u64::from(spec.bytes_per_activation),
            depth_rank: 0,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn pool(
        kind: LayerKind,
        in_height: u32,
        in_width: u32,
        out_height: u32,
        out_width: u32,
        channels: u32,
        kernel_h: u32,
        kernel_w: u32,
        spec: &NetworkSpec,
    ) -> Self {
        LayerWorkload {
            kind,
            out_height,
            out_width,
            in_channels: channels,
            out_channels: channels,
            kernel_h,
            kernel_w,
            macs: 0,
            params: 0,
            param_bytes: 0,
            input_activation_bytes: u64::from(in_height)
                * u64::from(in_width)
                * u64::from(channels)
                * u64::from(spec.bytes_per_activation),
            output_activation_bytes: u64::from(out_height)
                * u64::from(out_width)
                * u64::from(channels)
                * u64::from(spec.bytes_per_activation),
            depth_rank: 0,
        }
    }

    /// Per-element operations for layers that run on the SIMD lanes
    /// rather than the MAC arrays (window comparisons/accumulations).
    pub fn element_ops(&self) -> u64 {
        if self.kind.is_mac_layer() {
            0
        } else {
            u64::from(self.out_height)
                * u64::from(self.out_width)
                * u64::from(self.out_channels)
                * u64::from(self.kernel_h)
                * u64::from(self.kernel_w)
        }
    }
}

/// A fully expanded network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkWorkload {
    pub layers: Vec<LayerWorkload>,
    pub total_params: u64,
    pub total_macs: u64,
    pub source_cell: CellGraph,
    pub spec: NetworkSpec,
}

/// Output channel count of every cell vertex under the even-split
/// convention described in the module docs.
pub fn vertex_channels(in_channels: u32, out_channels: u32, cell: &CellGraph) -> Vec<u32> {
    let n = cell.vertex_count();
    let mut vc = vec![0u32; n];
    vc[0] = in_channels;
    vc[n - 1] = out_channels;
    if n == 2 {
        return vc;
    }

    let feeders: Vec<usize> = (1..n - 1).filter(|&v| cell.has_edge(v, n - 1)).collect();
    if !feeders.is_empty() {
        let base = out_channels / feeders.len() as u32;
        let remainder = out_channels % feeders.len() as u32;
        for (idx, &v) in feeders.iter().enumerate() {
            vc[v] = base + u32::from((idx as u32) < remainder);
        }
    }
    // Vertices not feeding the output inherit the widest successor.
    for v in (1..n - 1).rev() {
        if !cell.has_edge(v, n - 1) {
            for w in v + 1..n - 1 {
                if cell.has_edge(v, w) {
                    vc[v] = vc[v].max(vc[w]);
                }
            }
        }
    }
    vc
}

/// Expand `cell` into the full network described by `spec`.
pub fn expand_network(cell: &CellGraph, spec: &NetworkSpec) -> Result<NetworkWorkload> {
    cell.require_valid()?;
    spec.validate()?;

    let mut layers: Vec<LayerWorkload> = Vec::new();
    let mut height = spec.input_height;
    let mut width = spec.input_width;

    layers.push(LayerWorkload::conv(
        LayerKind::Stem,
        height,
        width,
        spec.input_channels,
        spec.stem_channels,
        3,
        spec,
    ));

    let mut in_channels = spec.stem_channels;
    let mut stack_channels = spec.stem_channels;
    for stack in 0..spec.num_stacks {
        if stack > 0 {
            let out_h = height / 2;
            let out_w = width / 2;
            layers.push(LayerWorkload::pool(
                LayerKind::Downsample,
                height,
                width,
                out_h,
                out_w,
                in_channels,
                2,
                2,
                spec,
            ));
            height = out_h;
            width = out_w;
            stack_channels *= 2;
        }
        for _ in 0..spec.cells_per_stack {
            append_cell_layers(
                &mut layers,
                cell,
                in_channels,
                stack_channels,
                height,
                width,
                spec,
            )?;
            in_channels = stack_channels;
        }
    }

    layers.push(LayerWorkload::pool(
        LayerKind::GlobalPool,
        height,
        width,
        1,
        1,
        in_channels,
        height,
        width,
        spec,
    ));
    layers.push(LayerWorkload::dense(in_channels, spec.num_classes, spec));

    for (rank, layer) in layers.iter_mut().enumerate() {
        layer.depth_rank = rank as u32;
    }
    let total_params = layers.iter().map(|l| l.params).sum();
    let total_macs = layers.iter().map(|l| l.macs).sum();
    Ok(NetworkWorkload {
        layers,
        total_params,
        total_macs,
        source_cell: cell.clone(),
        spec: spec.clone(),
    })
}

fn append_cell_layers(
    layers: &mut Vec<LayerWorkload>,
    cell: &CellGraph,
    in_channels: u32,
    out_channels: u32,
    height: u32,
    width: u32,
    spec: &NetworkSpec,
) -> Result<()> {
    let n = cell.vertex_count();
    let vc = vertex_channels(in_channels, out_channels, cell);
    for (v, &c) in vc.iter().enumerate().take(n - 1).skip(1) {
        if c == 0 {
            return Err(Error::InvalidConfig(format!(
                "channel allocation infeasible: vertex {v} received 0 channels \
                 (output width {out_channels} too narrow for this cell)"
            )));
        }
    }

    for t in 1..n - 1 {
        if cell.has_edge(0, t) {
            layers.push(LayerWorkload::conv(
                LayerKind::Projection,
                height,
                width,
                in_channels,
                vc[t],
                1,
                spec,
            ));
        }
        let layer = match cell.op(t) {
            OperationKind::Conv3x3 => {
                LayerWorkload::conv(LayerKind::Conv3x3, height, width, vc[t], vc[t], 3, spec)
            }
            OperationKind::Conv1x1 => {
                LayerWorkload::conv(LayerKind::Conv1x1, height, width, vc[t], vc[t], 1, spec)
            }
            OperationKind::MaxPool3x3 => LayerWorkload::pool(
                LayerKind::MaxPool3x3,
                height,
                width,
                height,
                width,
                vc[t],
                3,
                3,
                spec,
            ),
            OperationKind::Input | OperationKind::Output => unreachable!("cell validated"),
        };
        layers.push(layer);
    }
    // Direct input->output edge: a projection to the full output width.
    // For the two-vertex cell this is the cell's only layer.
    if cell.has_edge(0, n - 1) {
        layers.push(LayerWorkload::conv(
            LayerKind::Projection,
            height,
            width,
            in_channels,
            out_channels,
            1,
            spec,
        ));
    }
    Ok(())
}
