//! File formats: newline-delimited JSON cell records, the batch results
//! CSV, and JSON documents (accelerator configs, model checkpoints).
//!
//! All readers stream: memory use is bounded regardless of file size.
//! Paths ending in `.gz` are transparently (de)compressed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cell::CellGraph;
use crate::cost::PerfEstimate;
use crate::error::Error;
use crate::hash::canonical_hash;
use crate::network::{expand_network, NetworkSpec, NetworkWorkload};
use crate::Result;

/// Optional externally-sourced metadata attached to a cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellMetadata {
    /// Trainable-parameter count reported by an external source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trainable_params: Option<u64>,
    /// Mean validation accuracy at epoch 108, ingested, never computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_validation_accuracy: Option<f64>,
}

impl CellMetadata {
    pub fn is_empty(&self) -> bool {
        self.trainable_params.is_none() && self.mean_validation_accuracy.is_none()
    }
}

/// One line of a cell file.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub hash: String,
    pub cell: CellGraph,
    pub metadata: CellMetadata,
}

impl CellRecord {
    /// Wrap a valid cell, computing its canonical hash.
    pub fn from_cell(cell: CellGraph) -> Result<Self> {
        let hash = canonical_hash(&cell)?;
        Ok(CellRecord {
            hash,
            cell,
            metadata: CellMetadata::default(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CellRecordJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hash: Option<String>,
    ops: Vec<crate::cell::OperationKind>,
    adjacency: Vec<Vec<u8>>,
    #[serde(flatten)]
    metadata: CellMetadata,
}

/// Mismatch between ingested parameter metadata and our own counting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamMismatch {
    pub hash: String,
    pub stored: u64,
    pub computed: u64,
}

/// Cross-check an ingested parameter count against [`expand_network`].
/// A disagreement is reported, not an error.
pub fn verify_param_metadata(
    record: &CellRecord,
    spec: &NetworkSpec,
) -> Result<Option<ParamMismatch>> {
    let Some(stored) = record.metadata.trainable_params else {
        return Ok(None);
    };
    let computed = expand_network(&record.cell, spec)?.total_params;
    Ok(if stored == computed {
        None
    } else {
        Some(ParamMismatch {
            hash: record.hash.clone(),
            stored,
            computed,
        })
    })
}

fn open_reader(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path)?;
    Ok(if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    })
}

fn open_writer(path: &Path) -> Result<Box<dyn Write>> {
    let file = File::create(path)?;
    Ok(if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzEncoder::new(file, flate2::Compression::default()))
    } else {
        Box::new(file)
    })
}

/// Write cells as newline-delimited JSON, one record per line, no header.
pub fn write_cells<I>(path: impl AsRef<Path>, records: I) -> Result<()>
where
    I: IntoIterator<Item = CellRecord>,
{
    let mut w = BufWriter::new(open_writer(path.as_ref())?);
    for record in records {
        let json = CellRecordJson {
            hash: Some(record.hash),
            ops: record.cell.ops().to_vec(),
            adjacency: record.cell.matrix(),
            metadata: record.metadata,
        };
        serde_json::to_writer(&mut w, &json)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Streaming cell reader; verifies stored hashes against recomputation.
pub struct CellReader {
    lines: std::io::Lines<BufReader<Box<dyn Read>>>,
    path: String,
    line: u64,
}

impl Iterator for CellReader {
    type Item = Result<CellRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line += 1;
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(e.into())),
            };
            if text.trim().is_empty() {
                continue;
            }
            return Some(self.parse(&text));
        }
    }
}

impl CellReader {
    fn parse(&self, text: &str) -> Result<CellRecord> {
        let json: CellRecordJson =
            serde_json::from_str(text).map_err(|e| Error::ParseLine {
                path: self.path.clone(),
                line: self.line,
                msg: e.to_string(),
            })?;
        let cell =
            CellGraph::from_matrix(json.ops, &json.adjacency).map_err(|e| Error::ParseLine {
                path: self.path.clone(),
                line: self.line,
                msg: e.to_string(),
            })?;
        let computed = canonical_hash(&cell).map_err(|e| Error::ParseLine {
            path: self.path.clone(),
            line: self.line,
            msg: e.to_string(),
        })?;
        if let Some(stored) = json.hash {
            if stored != computed {
                return Err(Error::HashMismatch {
                    hash: stored,
                    computed,
                });
            }
        }
        Ok(CellRecord {
            hash: computed,
            cell,
            metadata: json.metadata,
        })
    }
}

/// Open a cell file for streaming reads.
pub fn read_cells(path: impl AsRef<Path>) -> Result<CellReader> {
    let path = path.as_ref();
    Ok(CellReader {
        lines: BufReader::new(open_reader(path)?).lines(),
        path: path.display().to_string(),
        line: 0,
    })
}

/// One row of the batch results CSV.
///
/// Latency and energy are stored in the file's units (milliseconds and
/// millijoules) so a round trip is conversion-free and bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub cell_hash: String,
    pub accel: String,
    pub latency_ms: f64,
    pub energy_mj: f64,
    pub total_params: u64,
    pub total_macs: u64,
    pub depth: u32,
    pub width: u32,
    pub n_conv3x3: u32,
    pub n_conv1x1: u32,
    pub n_maxpool3x3: u32,
    pub bound_fraction_memory: f64,
    /// Ingested metadata, populated by joining with a cell file.
    #[serde(skip)]
    pub mean_validation_accuracy: Option<f64>,
}

pub const RESULTS_COLUMNS: [&str; 12] = [
    "cell_hash",
    "accel",
    "latency_ms",
    "energy_mj",
    "total_params",
    "total_macs",
    "depth",
    "width",
    "n_conv3x3",
    "n_conv1x1",
    "n_maxpool3x3",
    "bound_fraction_memory",
];

impl ResultRow {
    pub fn from_estimate(
        hash: &str,
        accel: &str,
        net: &NetworkWorkload,
        estimate: &PerfEstimate,
    ) -> Self {
        let cell = &net.source_cell;
        let counts = cell.op_counts();
        ResultRow {
            cell_hash: hash.to_string(),
            accel: accel.to_string(),
            latency_ms: estimate.latency_s * 1e3,
            energy_mj: estimate.energy_j * 1e3,
            total_params: net.total_params,
            total_macs: net.total_macs,
            depth: cell.depth() as u32,
            width: cell.width() as u32,
            n_conv3x3: counts.conv3x3,
            n_conv1x1: counts.conv1x1,
            n_maxpool3x3: counts.maxpool3x3,
            bound_fraction_memory: estimate.memory_bound_cycle_fraction(),
            mean_validation_accuracy: None,
        }
    }

    pub fn latency_s(&self) -> f64 {
        self.latency_ms * 1e-3
    }

    pub fn energy_j(&self) -> f64 {
        self.energy_mj * 1e-3
    }
}

/// Write result rows as CSV with the canonical header.
pub fn write_results<I>(path: impl AsRef<Path>, rows: I) -> Result<()>
where
    I: IntoIterator<Item = ResultRow>,
{
    let mut w = csv::Writer::from_writer(open_writer(path.as_ref())?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Streaming results reader with strict header validation.
pub struct ResultReader {
    inner: csv::DeserializeRecordsIntoIter<Box<dyn Read>, ResultRow>,
    path: String,
}

impl Iterator for ResultReader {
    type Item = Result<ResultRow>;

    fn next(&mut self) -> Option<Self::Item> {
        let item = self.inner.next()?;
        Some(item.map_err(|e| match e.position() {
            Some(pos) => Error::ParseLine {
                path: self.path.clone(),
                line: pos.line(),
                msg: e.to_string(),
            },
            None => e.into(),
        }))
    }
}

/// Open a results CSV for streaming reads.
pub fn read_results(path: impl AsRef<Path>) -> Result<ResultReader> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_reader(open_reader(path)?);
    let headers = reader.headers()?.clone();
    let found: Vec<&str> = headers.iter().collect();
    for expected in RESULTS_COLUMNS {
        if !found.contains(&expected) {
            return Err(Error::MissingColumn(expected.to_string()));
        }
    }
    if found != RESULTS_COLUMNS {
        return Err(Error::HeaderMismatch {
            expected: RESULTS_COLUMNS.join(","),
            found: found.join(","),
        });
    }
    Ok(ResultReader {
        inner: reader.into_deserialize(),
        path: path.display().to_string(),
    })
}

/// Read all rows, propagating the first error.
pub fn read_results_vec(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    read_results(path)?.collect()
}

/// Write any serializable document as pretty JSON.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(open_writer(path.as_ref())?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Read a JSON document.
pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let reader = BufReader::new(open_reader(path.as_ref())?);
    Ok(serde_json::from_reader(reader)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::{enumerate_cells, EnumerationMode};

    fn sample_records(count: usize, seed: u64) -> Vec<CellRecord> {
        enumerate_cells(7, 9, EnumerationMode::Sample { count, seed })
            .unwrap()
            .into_iter()
            .map(|c| CellRecord::from_cell(c).unwrap())
            .collect()
    }

    #[test]
    fn cells_round_trip_losslessly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cells.jsonl");
        let records = sample_records(1000, 13);
        write_cells(&path, records.clone()).unwrap();
        let back: Vec<CellRecord> = read_cells(&path)
            .unwrap()
            .collect::<Result<Vec<_>>>()
            .unwrap();
        assert_eq!(records, back);
    }

    #[test]
    fn gzip_cells_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cells.jsonl.gz");
        let records = sample_records(50, 14);
        write_cells(&path, records.clone()).unwrap();
        let back: Vec<CellRecord> = read_cells(&path)
            .unwrap()
            .collect::<Result<Vec<_>>>()
            .unwrap();
        assert_eq!(records, back);
        // The file is genuinely compressed.
        let raw = std::fs::read(&path).unwrap();
        assert_eq!(&raw[..2], &[0x1f, 0x8b]);
    }

    #[test]
    fn malformed_line_error_carries_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cells.jsonl");
        let records = sample_records(2, 15);
        write_cells(&path, records).unwrap();
        // A 1-based adjacency typo puts an edge on the diagonal.
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str(
            r#"{"ops":["input","output"],"adjacency":[[1,1],[0,0]]}"#,
        );
        text.push('\n');
        std::fs::write(&path, text).unwrap();

        let results: Vec<Result<CellRecord>> = read_cells(&path).unwrap().collect();
        assert_eq!(results.len(), 3);
        assert!(results[0].is_ok() && results[1].is_ok());
        let err = results[2].as_ref().unwrap_err();
        assert!(
            matches!(err, Error::ParseLine { line: 3, .. }),
            "unexpected: {err}"
        );
    }

    #[test]
    fn hash_mismatch_names_the_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cells.jsonl");
        let line = format!(
            "{{\"hash\":\"{}\",\"ops\":[\"input\",\"output\"],\"adjacency\":[[0,1],[0,0]]}}\n",
            "0".repeat(64)
        );
        std::fs::write(&path, line).unwrap();
        let err = read_cells(&path)
            .unwrap()
            .next()
            .unwrap()
            .unwrap_err();
        assert!(matches!(err, Error::HashMismatch { .. }), "{err}");
    }

    #[test]
    fn param_metadata_discrepancy_is_flagged_not_fatal() {
        let spec = NetworkSpec::default();
        let mut record = sample_records(1, 16).remove(0);
        let truth = expand_network(&record.cell, &spec).unwrap().total_params;

        record.metadata.trainable_params = Some(truth);
        assert!(verify_param_metadata(&record, &spec).unwrap().is_none());

        record.metadata.trainable_params = Some(truth + 13);
        let mismatch = verify_param_metadata(&record, &spec).unwrap().unwrap();
        assert_eq!(mismatch.stored, truth + 13);
        assert_eq!(mismatch.computed, truth);
    }

    #[test]
    fn results_round_trip_bit_exactly() {
        use crate::accel::AcceleratorConfig;
        use crate::cost::{estimate, EstimateMode};
        use crate::network::expand_network;

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        let spec = NetworkSpec::default();
        let cfg = AcceleratorConfig::preset("V2").unwrap();
        let rows: Vec<ResultRow> = sample_records(200, 17)
            .into_iter()
            .map(|r| {
                let net = expand_network(&r.cell, &spec).unwrap();
                let est = estimate(&net, &cfg, EstimateMode::SteadyState);
                ResultRow::from_estimate(&r.hash, "V2", &net, &est)
            })
            .collect();
        write_results(&path, rows.clone()).unwrap();
        let back = read_results_vec(&path).unwrap();
        assert_eq!(rows.len(), back.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a, b);
            assert_eq!(a.latency_ms.to_bits(), b.latency_ms.to_bits());
            assert_eq!(a.energy_mj.to_bits(), b.energy_mj.to_bits());
            assert_eq!(
                a.bound_fraction_memory.to_bits(),
                b.bound_fraction_memory.to_bits()
            );
        }
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        std::fs::write(&path, "cell_hash,accel,latency_ms\nx,V1,1.0\n").unwrap();
        let Err(err) = read_results(&path) else {
            panic!("header must be rejected")
        };
        match err {
            Error::MissingColumn(col) => assert_eq!(col, "energy_mj"),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn reordered_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut cols = RESULTS_COLUMNS;
        cols.swap(0, 1);
        std::fs::write(&path, format!("{}\n", cols.join(","))).unwrap();
        assert!(matches!(
            read_results(&path),
            Err(Error::HeaderMismatch { .. })
        ));
    }

    #[cfg(target_os = "linux")]
    #[test]
    fn results_reader_streams_with_bounded_memory() {
        fn resident_bytes() -> u64 {
            let statm = std::fs::read_to_string("/proc/self/statm").unwrap();
            let pages: u64 = statm.split_whitespace().nth(1).unwrap().parse().unwrap();
            pages * 4096
        }

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("big.csv");
        {
            let mut w = csv::Writer::from_writer(File::create(&path).unwrap());
            let template = ResultRow {
                cell_hash: "h".repeat(64),
                accel: "V1".into(),
                latency_ms: 1.25,
                energy_mj: 2.5,
                total_params: 1_000_000,
                total_macs: 2_000_000,
                depth: 3,
                width: 4,
                n_conv3x3: 1,
                n_conv1x1: 2,
                n_maxpool3x3: 2,
                bound_fraction_memory: 0.5,
                mean_validation_accuracy: None,
            };
            for i in 0..150_000u64 {
                let mut row = template.clone();
                row.latency_ms = 1.0 + i as f64 * 1e-6;
                w.serialize(row).unwrap();
            }
            w.flush().unwrap();
        }
        let file_size = std::fs::metadata(&path).unwrap().len();
        assert!(file_size > 15_000_000, "fixture too small: {file_size}");

        let before = resident_bytes();
        let mut count = 0u64;
        for row in read_results(&path).unwrap() {
            let _ = row.unwrap();
            count += 1;
        }
        let after = resident_bytes();
        assert_eq!(count, 150_000);
        let growth = after.saturating_sub(before);
        assert!(
            growth < file_size / 2,
            "reader grew resident memory by {growth} bytes on a {file_size}-byte file"
        );
    }
}
