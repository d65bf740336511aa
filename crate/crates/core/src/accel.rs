//! Accelerator configurations: a parameterized template of a 2D array
//! of processing elements (PEs), each holding cores with SIMD compute
//! lanes of multi-way MAC units, plus the three studied presets.
//!
//! PE memory holds activations, partial results and outputs; core
//! memory holds weight parameters. Memory sizes use binary units
//! (KB = 1024); I/O bandwidth is decimal bytes per second.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

const KIB: u64 = 1024;
const MIB: u64 = 1024 * 1024;

/// Coefficients of the energy model. The published measurements come
/// from an undisclosed model, so these defaults are order-of-magnitude
/// values for 8-bit edge inference and are explicitly uncalibrated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyCoefficients {
    pub pj_per_mac: f64,
    pub pj_per_dram_byte: f64,
    pub pj_per_sram_byte: f64,
    pub static_mw: f64,
}

impl Default for EnergyCoefficients {
    fn default() -> Self {
        EnergyCoefficients {
            pj_per_mac: 1.0,
            pj_per_dram_byte: 100.0,
            pj_per_sram_byte: 1.0,
            static_mw: 0.0,
        }
    }
}

/// Full microarchitecture parameter vector of one accelerator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceleratorConfig {
    pub name: String,
    pub clock_hz: f64,
    pub pes_x: u32,
    pub pes_y: u32,
    /// Activation/output storage per PE.
    pub pe_memory_bytes: u64,
    pub cores_per_pe: u32,
    /// Parameter storage per core.
    pub core_memory_bytes: u64,
    pub compute_lanes: u32,
    /// MACs each lane performs per cycle (multi-way MAC units).
    pub macs_per_lane: u32,
    pub instruction_memory_entries: u64,
    pub parameter_memory_entries: u64,
    pub activation_memory_entries: u64,
    pub io_bandwidth_bytes_per_s: f64,
    /// Fraction of peak I/O bandwidth sustained under load, in (0, 1].
    pub sustained_bw_fraction: f64,
    #[serde(default)]
    pub energy: EnergyCoefficients,
}

impl AcceleratorConfig {
    /// One of the three studied presets: V1, V2 or V3.
    pub fn preset(name: &str) -> Result<Self> {
        let base = |name: &str| AcceleratorConfig {
            name: name.to_string(),
            clock_hz: 0.0,
            pes_x: 0,
            pes_y: 0,
            pe_memory_bytes: 0,
            cores_per_pe: 0,
            core_memory_bytes: 0,
            compute_lanes: 0,
            macs_per_lane: 4,
            instruction_memory_entries: 16384,
            parameter_memory_entries: 16384,
            activation_memory_entries: 1024,
            io_bandwidth_bytes_per_s: 0.0,
            sustained_bw_fraction: 1.0,
            energy: EnergyCoefficients::default(),
        };
        let cfg = match name {
            "V1" => AcceleratorConfig {
                clock_hz: 800e6,
                pes_x: 4,
                pes_y: 4,
                pe_memory_bytes: 2 * MIB,
                cores_per_pe: 4,
                core_memory_bytes: 32 * KIB,
                compute_lanes: 64,
                io_bandwidth_bytes_per_s: 17e9,
                ..base("V1")
            },
            "V2" => AcceleratorConfig {
                clock_hz: 1066e6,
                pes_x: 4,
                pes_y: 4,
                pe_memory_bytes: 384 * KIB,
                cores_per_pe: 1,
                core_memory_bytes: 32 * KIB,
                compute_lanes: 64,
                parameter_memory_entries: 8192,
                io_bandwidth_bytes_per_s: 32e9,
                ..base("V2")
            },
            "V3" => AcceleratorConfig {
                clock_hz: 1066e6,
                pes_x: 4,
                pes_y: 1,
                pe_memory_bytes: 2 * MIB,
                cores_per_pe: 8,
                core_memory_bytes: 8 * KIB,
                compute_lanes: 32,
                parameter_memory_entries: 8192,
                io_bandwidth_bytes_per_s: 32e9,
                // A 4x1 array shares more resources per PE than a 4x4
                // array, so it sustains a lower fraction of peak I/O.
                sustained_bw_fraction: 0.85,
                ..base("V3")
            },
            other => return Err(Error::UnknownPreset(other.to_string())),
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("clock_hz", self.clock_hz),
            ("io_bandwidth_bytes_per_s", self.io_bandwidth_bytes_per_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        let counts = [
            ("pes_x", self.pes_x as u64),
            ("pes_y", self.pes_y as u64),
            ("pe_memory_bytes", self.pe_memory_bytes),
            ("cores_per_pe", self.cores_per_pe as u64),
            ("core_memory_bytes", self.core_memory_bytes),
            ("compute_lanes", self.compute_lanes as u64),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.sustained_bw_fraction > 0.0 && self.sustained_bw_fraction <= 1.0) {
            return Err(Error::InvalidConfig(
                "sustained_bw_fraction must be in (0, 1]".into(),
            ));
        }
        let energies = [
            self.energy.pj_per_mac,
            self.energy.pj_per_dram_byte,
            self.energy.pj_per_sram_byte,
            self.energy.static_mw,
        ];
        if energies.iter().any(|&e| e < 0.0) {
            return Err(Error::InvalidConfig(
                "energy coefficients must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn total_pes(&self) -> u64 {
        u64::from(self.pes_x) * u64::from(self.pes_y)
    }

    /// Total parameter storage: core memory x PEs x cores per PE.
    pub fn total_core_memory(&self) -> u64 {
        self.core_memory_bytes * self.total_pes() * u64::from(self.cores_per_pe)
    }

    /// Total activation storage: PE memory x PEs.
    pub fn total_pe_memory(&self) -> u64 {
        self.pe_memory_bytes * self.total_pes()
    }

    /// MACs retired per cycle across the whole array.
    pub fn macs_per_cycle(&self) -> u64 {
        self.total_pes()
            * u64::from(self.cores_per_pe)
            * u64::from(self.compute_lanes)
            * u64::from(self.macs_per_lane)
    }

    /// SIMD element operations per cycle (one per lane).
    pub fn vector_ops_per_cycle(&self) -> u64 {
        self.total_pes() * u64::from(self.cores_per_pe) * u64::from(self.compute_lanes)
    }

    /// Peak tera-ops per second; a MAC counts as two ops.
    pub fn peak_tops(&self) -> f64 {
        2.0 * self.macs_per_cycle() as f64 * self.clock_hz / 1e12
    }

    /// Effective sustained I/O bandwidth in bytes per second.
    pub fn effective_bandwidth(&self) -> f64 {
        self.io_bandwidth_bytes_per_s * self.sustained_bw_fraction
    }
}
