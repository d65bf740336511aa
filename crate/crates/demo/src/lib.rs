//! Browser bindings: estimate cells on the three accelerator presets,
//! sample the design space for a latency-vs-parameters scatter, and
//! roll random cells to explore.
//!
//! Every function takes and returns JSON strings so the page needs no
//! generated glue beyond wasm-bindgen's.

use wasm_bindgen::prelude::*;

use edgeperf::accel::AcceleratorConfig;
use edgeperf::cell::CellGraph;
use edgeperf::cost::{estimate, EstimateMode};
use edgeperf::enumerate::{enumerate_cells, EnumerationMode};
use edgeperf::hash::canonical_hash;
use edgeperf::network::{expand_network, NetworkSpec};

fn cell_to_json(cell: &CellGraph) -> Result<serde_json::Value, String> {
    let counts = cell.op_counts();
    Ok(serde_json::json!({
        "hash": canonical_hash(cell).map_err(|e| e.to_string())?,
        "ops": cell.ops().iter().map(|o| o.name()).collect::<Vec<_>>(),
        "adjacency": cell.matrix(),
        "depth": cell.depth(),
        "width": cell.width(),
        "n_conv3x3": counts.conv3x3,
        "n_conv1x1": counts.conv1x1,
        "n_maxpool3x3": counts.maxpool3x3,
    }))
}

fn parse_cell(cell_json: &str) -> Result<CellGraph, String> {
    let cell: CellGraph = serde_json::from_str(cell_json).map_err(|e| e.to_string())?;
    cell.require_valid().map_err(|e| e.to_string())?;
    Ok(cell)
}

fn parse_mode(mode: &str) -> Result<EstimateMode, String> {
    mode.parse().map_err(|e: edgeperf::Error| e.to_string())
}

pub fn random_cell_impl(seed: u64) -> Result<String, String> {
    let cells = enumerate_cells(7, 9, EnumerationMode::Sample { count: 1, seed })
        .map_err(|e| e.to_string())?;
    serde_json::to_string(&cell_to_json(&cells[0])?).map_err(|e| e.to_string())
}

pub fn estimate_cell_impl(cell_json: &str, mode: &str) -> Result<String, String> {
    let cell = parse_cell(cell_json)?;
    let mode = parse_mode(mode)?;
    let spec = NetworkSpec::default();
    let net = expand_network(&cell, &spec).map_err(|e| e.to_string())?;

    let mut per_accel = Vec::new();
    for name in ["V1", "V2", "V3"] {
        let cfg = AcceleratorConfig::preset(name).map_err(|e| e.to_string())?;
        let est = estimate(&net, &cfg, mode);
        per_accel.push(serde_json::json!({
            "accel": name,
            "latency_ms": est.latency_s * 1e3,
            "energy_mj": est.energy_j * 1e3,
            "total_cycles": est.total_cycles,
            "bound_fraction_memory": est.memory_bound_cycle_fraction(),
            "cached_fraction": if net.total_params > 0 {
                est.cache_plan.cached_bytes as f64
                    / (est.cache_plan.cached_bytes + est.cache_plan.streamed_bytes) as f64
            } else {
                1.0
            },
        }));
    }
    let doc = serde_json::json!({
        "cell": cell_to_json(&cell)?,
        "total_params": net.total_params,
        "total_macs": net.total_macs,
        "layers": net.layers.len(),
        "estimates": per_accel,
    });
    serde_json::to_string(&doc).map_err(|e| e.to_string())
}

pub fn latency_sweep_impl(
    count: u32,
    seed: u64,
    accel: &str,
    mode: &str,
) -> Result<String, String> {
    let mode = parse_mode(mode)?;
    let cfg = AcceleratorConfig::preset(accel).map_err(|e| e.to_string())?;
    let cells = enumerate_cells(
        7,
        9,
        EnumerationMode::Sample {
            count: count as usize,
            seed,
        },
    )
    .map_err(|e| e.to_string())?;
    let spec = NetworkSpec::default();
    let points: Vec<serde_json::Value> = cells
        .iter()
        .map(|cell| -> Result<serde_json::Value, String> {
            let net = expand_network(cell, &spec).map_err(|e| e.to_string())?;
            let est = estimate(&net, &cfg, mode);
            Ok(serde_json::json!({
                "params": net.total_params,
                "latency_ms": est.latency_s * 1e3,
                "n_conv3x3": cell.op_counts().conv3x3,
            }))
        })
        .collect::<Result<Vec<_>, String>>()?;
    serde_json::to_string(&points).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn random_cell(seed: u32) -> Result<String, JsValue> {
    random_cell_impl(u64::from(seed)).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn estimate_cell(cell_json: &str, mode: &str) -> Result<String, JsValue> {
    estimate_cell_impl(cell_json, mode).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn latency_sweep(count: u32, seed: u32, accel: &str, mode: &str) -> Result<String, JsValue> {
    latency_sweep_impl(count, u64::from(seed), accel, mode).map_err(|e| JsValue::from_str(&e))
}
