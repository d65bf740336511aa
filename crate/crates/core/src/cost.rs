//! Analytical roofline latency/energy estimator with parameter caching.
//!
//! Each layer costs `max(compute_cycles, memory_cycles)`: compute from
//! the MAC arrays (or the SIMD lanes for pooling), memory from streaming
//! non-cached parameters plus any activation traffic that spills out of
//! PE memory. Parameters are cached greedily, biggest layers first,
//! into core memory plus a bounded slice of PE memory.

use serde::{Deserialize, Serialize};

use crate::accel::{AcceleratorConfig, EnergyCoefficients};
use crate::network::NetworkWorkload;

/// Tunables of the cost model that are not microarchitecture parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Fraction of PE memory that parameter caching may occupy beyond
    /// core memory. Capped so cached parameters never displace the
    /// network's peak activation working set.
    pub pe_cache_fraction: f64,
    /// Fixed cycles added to every layer's compute time.
    pub per_layer_overhead_cycles: u64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            pe_cache_fraction: 0.75,
            per_layer_overhead_cycles: 0,
        }
    }
}

/// Whether the weights are already resident on-chip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateMode {
    /// Consecutive-inference regime: cached parameters are reused.
    #[serde(rename = "steady")]
    SteadyState,
    /// First inference: every parameter streams from DRAM.
    #[serde(rename = "cold")]
    Cold,
}

impl std::str::FromStr for EstimateMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "steady" | "steady_state" => Ok(EstimateMode::SteadyState),
            "cold" => Ok(EstimateMode::Cold),
            other => Err(crate::Error::InvalidConfig(format!(
                "unknown estimate mode {other:?} (expected steady or cold)"
            ))),
        }
    }
}

/// Which parameters stay resident on-chip across inferences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachePlan {
    /// Per-layer cached flag, indexed like `NetworkWorkload::layers`.
    pub cached: Vec<bool>,
    pub cached_bytes: u64,
    pub streamed_bytes: u64,
    pub capacity: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundKind {
    Compute,
    Memory,
}

/// Cycle and traffic breakdown for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub compute_cycles: u64,
    pub memory_cycles: u64,
    pub bound: BoundKind,
    pub dram_bytes: u64,
    pub sram_bytes: u64,
}

/// Latency/energy estimate for one network on one accelerator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfEstimate {
    pub latency_s: f64,
    pub energy_j: f64,
    pub total_cycles: u64,
    pub per_layer: Vec<LayerCost>,
    pub cache_plan: CachePlan,
    pub total_macs: u64,
    pub total_dram_bytes: u64,
    pub total_sram_bytes: u64,
}

impl PerfEstimate {
    /// Fraction of total cycles spent in memory-bound layers.
    pub fn memory_bound_cycle_fraction(&self) -> f64 {
        if self.total_cycles == 0 {
            return 0.0;
        }
        let memory_cycles: u64 = self
            .per_layer
            .iter()
            .filter(|l| l.bound == BoundKind::Memory)
            .map(|l| l.compute_cycles.max(l.memory_cycles))
            .sum();
        memory_cycles as f64 / self.total_cycles as f64
    }
}

fn div_ceil(num: u64, den: u64) -> u64 {
    if den == 0 {
        return 0;
    }
    num.div_ceil(den)
}

/// Total parameter bytes the accelerator can keep resident.
fn cache_capacity(net: &NetworkWorkload, cfg: &AcceleratorConfig, params: &CostParams) -> u64 {
    let pe_total = cfg.total_pe_memory();
    let max_act = net
        .layers
        .iter()
        .map(|l| l.input_activation_bytes + l.output_activation_bytes)
        .max()
        .unwrap_or(0);
    let fraction_cap = (params.pe_cache_fraction * pe_total as f64) as u64;
    // Never let cached parameters evict the peak activation working set.
    let pe_budget = fraction_cap.min(pe_total.saturating_sub(max_act));
    cfg.total_core_memory() + pe_budget
}

/// Greedy cache plan: layers in descending parameter size are kept
/// resident until the next one no longer fits.
pub fn plan_cache(net: &NetworkWorkload, cfg: &AcceleratorConfig) -> CachePlan {
    plan_cache_with(net, cfg, &CostParams::default())
}

pub fn plan_cache_with(
    net: &NetworkWorkload,
    cfg: &AcceleratorConfig,
    params: &CostParams,
) -> CachePlan {
    let capacity = cache_capacity(net, cfg, params);
    let mut order: Vec<usize> = (0..net.layers.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(net.layers[i].param_bytes), i));

    let mut cached = vec![false; net.layers.len()];
    let mut cached_bytes = 0u64;
    for &i in &order {
        let bytes = net.layers[i].param_bytes;
        if cached_bytes + bytes > capacity {
            break;
        }
        cached[i] = true;
        cached_bytes += bytes;
    }
    let total: u64 = net.layers.iter().map(|l| l.param_bytes).sum();
    CachePlan {
        cached,
        cached_bytes,
        streamed_bytes: total - cached_bytes,
        capacity,
    }
}

/// Estimate latency and energy of one inference.
pub fn estimate(
    net: &NetworkWorkload,
    cfg: &AcceleratorConfig,
    mode: EstimateMode,
) -> PerfEstimate {
    estimate_with(net, cfg, mode, &CostParams::default())
}

pub fn estimate_with(
    net: &NetworkWorkload,
    cfg: &AcceleratorConfig,
    mode: EstimateMode,
    params: &CostParams,
) -> PerfEstimate {
    let plan = plan_cache_with(net, cfg, params);
    let macs_per_cycle = cfg.macs_per_cycle();
    let vector_ops_per_cycle = cfg.vector_ops_per_cycle();
    let bandwidth = cfg.effective_bandwidth();

    // Parameters resident beyond core memory occupy PE memory and
    // shrink the room activations have before spilling to DRAM.
    let params_in_pe = match mode {
        EstimateMode::SteadyState => plan.cached_bytes.saturating_sub(cfg.total_core_memory()),
        EstimateMode::Cold => 0,
    };
    let act_capacity = cfg.total_pe_memory().saturating_sub(params_in_pe);

    let mut per_layer = Vec::with_capacity(net.layers.len());
    let mut total_cycles = 0u64;
    let mut total_macs = 0u64;
    let mut total_dram = 0u64;
    let mut total_sram = 0u64;

    for (i, layer) in net.layers.iter().enumerate() {
        let compute_cycles = if layer.kind.is_mac_layer() {
            div_ceil(layer.macs, macs_per_cycle)
        } else {
            div_ceil(layer.element_ops(), vector_ops_per_cycle)
        } + params.per_layer_overhead_cycles;

        let streamed_params = match mode {
            EstimateMode::Cold => layer.param_bytes,
            EstimateMode::SteadyState if !plan.cached[i] => layer.param_bytes,
            EstimateMode::SteadyState => 0,
        };
        let act_bytes = layer.input_activation_bytes + layer.output_activation_bytes;
        let act_spill = act_bytes.saturating_sub(act_capacity);
        let dram_bytes = streamed_params + act_spill;
        let sram_bytes = (layer.param_bytes - streamed_params) + (act_bytes - act_spill);

        let memory_cycles = if dram_bytes == 0 {
            0
        } else {
            (dram_bytes as f64 * cfg.clock_hz / bandwidth).ceil() as u64
        };
        let bound = if memory_cycles > compute_cycles {
            BoundKind::Memory
        } else {
            BoundKind::Compute
        };

        total_cycles += compute_cycles.max(memory_cycles);
        total_macs += layer.macs;
        total_dram += dram_bytes;
        total_sram += sram_bytes;
        per_layer.push(LayerCost {
            compute_cycles,
            memory_cycles,
            bound,
            dram_bytes,
            sram_bytes,
        });
    }

    let latency_s = total_cycles as f64 / cfg.clock_hz;
    let energy_j = estimate_energy(total_macs, total_dram, total_sram, latency_s, &cfg.energy);
    PerfEstimate {
        latency_s,
        energy_j,
        total_cycles,
        per_layer,
        cache_plan: plan,
        total_macs,
        total_dram_bytes: total_dram,
        total_sram_bytes: total_sram,
    }
}

/// Energy from MACs, DRAM traffic, SRAM traffic, and static power.
pub fn estimate_energy(
    macs: u64,
    dram_bytes: u64,
    sram_bytes: u64,
    latency_s: f64,
    coeffs: &EnergyCoefficients,
) -> f64 {
    (macs as f64 * coeffs.pj_per_mac
        + dram_bytes as f64 * coeffs.pj_per_dram_byte
        + sram_bytes as f64 * coeffs.pj_per_sram_byte)
        * 1e-12
        + coeffs.static_mw * 1e-3 * latency_s
}
