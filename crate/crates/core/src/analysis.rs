//! Batch-result analyses: correlation metrics, best-configuration
//! buckets, operation-swap impact, and structural latency trends.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::cell::{CellGraph, OperationKind};
use crate::error::Error;
use crate::hash::canonical_hash;
use crate::io::ResultRow;
use crate::Result;

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::DegenerateCorrelation(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::DegenerateCorrelation("fewer than 2 points".into()));
    }
    for (name, v) in [("xs", xs), ("ys", ys)] {
        if v.iter().all(|&x| x == v[0]) {
            return Err(Error::DegenerateCorrelation(format!("{name} is constant")));
        }
    }
    Ok(())
}

/// Pearson linear correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

/// Ranks with ties averaged (1-based).
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite values"));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Positions i..=j hold equal values; each gets the mean rank.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank-order correlation (average ranks for ties).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Per-accelerator aggregates over one winner bucket.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketStats {
    pub winner: String,
    pub count: u64,
    /// Mean latency of the bucket's models on every accelerator.
    pub mean_latency_ms: BTreeMap<String, f64>,
    pub mean_energy_mj: BTreeMap<String, f64>,
}

/// Assignment of every model to the accelerator where it runs fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketReport {
    pub accels: Vec<String>,
    pub buckets: Vec<BucketStats>,
    /// Cells whose minimum latency is shared; counted separately and
    /// excluded from the bucket means.
    pub ties: u64,
}

/// Bucket each cell by the accelerator with minimal latency.
/// Every cell must have a row for every accelerator.
pub fn best_config_buckets(rows: &[ResultRow]) -> Result<BucketReport> {
    let mut accels: Vec<String> = rows.iter().map(|r| r.accel.clone()).collect();
    accels.sort();
    accels.dedup();

    let mut by_cell: BTreeMap<&str, BTreeMap<&str, &ResultRow>> = BTreeMap::new();
    for row in rows {
        by_cell
            .entry(&row.cell_hash)
            .or_default()
            .insert(&row.accel, row);
    }

    let mut ties = 0u64;
    let mut members: BTreeMap<&str, Vec<&BTreeMap<&str, &ResultRow>>> = BTreeMap::new();
    for (hash, per_accel) in &by_cell {
        for accel in &accels {
            if !per_accel.contains_key(accel.as_str()) {
                return Err(Error::MissingAccelRow {
                    hash: (*hash).to_string(),
                    accel: accel.clone(),
                });
            }
        }
        let min = per_accel
            .values()
            .map(|r| r.latency_ms)
            .fold(f64::INFINITY, f64::min);
        let winners: Vec<&str> = accels
            .iter()
            .map(String::as_str)
            .filter(|a| per_accel[a].latency_ms == min)
            .collect();
        if winners.len() > 1 {
            ties += 1;
            continue;
        }
        members.entry(winners[0]).or_default().push(per_accel);
    }

    let buckets = accels
        .iter()
        .map(|winner| {
            let cells = members.get(winner.as_str()).map_or(&[][..], Vec::as_slice);
            let mut mean_latency = BTreeMap::new();
            let mut mean_energy = BTreeMap::new();
            for accel in &accels {
                let (mut lat, mut en) = (0.0, 0.0);
                for per_accel in cells {
                    lat += per_accel[accel.as_str()].latency_ms;
                    en += per_accel[accel.as_str()].energy_mj;
                }
                let n = cells.len().max(1) as f64;
                mean_latency.insert(accel.clone(), lat / n);
                mean_energy.insert(accel.clone(), en / n);
            }
            BucketStats {
                winner: winner.clone(),
                count: cells.len() as u64,
                mean_latency_ms: mean_latency,
                mean_energy_mj: mean_energy,
            }
        })
        .collect();

    Ok(BucketReport {
        accels,
        buckets,
        ties,
    })
}

/// The three interior operations, in matrix order.
pub const SWAP_KINDS: [OperationKind; 3] = [
    OperationKind::Conv3x3,
    OperationKind::Conv1x1,
    OperationKind::MaxPool3x3,
];

/// Mean latency change from replacing one interior operation with
/// another, over all cells where the swapped architecture exists in the
/// dataset. Rows are the original op, columns the replacement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwapImpactMatrix {
    pub mean_delta_ms: [[f64; 3]; 3],
    pub mean_pct_delta: [[f64; 3]; 3],
    pub counts: [[u64; 3]; 3],
    /// Matches found at identical vertex indices (same adjacency, same
    /// per-vertex ops).
    pub exact_matches: u64,
    /// Matches found only through canonical-hash lookup.
    pub fallback_matches: u64,
    /// Swap candidates attempted (matched or not).
    pub attempted: u64,
}

fn kind_index(op: OperationKind) -> Option<usize> {
    SWAP_KINDS.iter().position(|&k| k == op)
}

/// Compute the swap-impact matrix for one accelerator's latencies.
pub fn swap_impact(dataset: &[(CellGraph, f64)]) -> Result<SwapImpactMatrix> {
    // Exact representation lookup and canonical-class fallback.
    let mut exact: HashMap<&CellGraph, f64> = HashMap::new();
    let mut by_hash: HashMap<String, f64> = HashMap::new();
    for (cell, latency) in dataset {
        exact.insert(cell, *latency);
        by_hash.insert(canonical_hash(cell)?, *latency);
    }

    let mut sum_delta = [[0.0f64; 3]; 3];
    let mut sum_pct = [[0.0f64; 3]; 3];
    let mut counts = [[0u64; 3]; 3];
    let mut exact_matches = 0u64;
    let mut fallback_matches = 0u64;
    let mut attempted = 0u64;

    for (cell, latency) in dataset {
        let n = cell.vertex_count();
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| {
                (i + 1..n).filter_map(move |j| cell.has_edge(i, j).then_some((i, j)))
            })
            .collect();
        for v in 1..n.saturating_sub(1) {
            let Some(from) = kind_index(cell.op(v)) else {
                continue;
            };
            for (to, &replacement) in SWAP_KINDS.iter().enumerate() {
                if to == from {
                    continue;
                }
                attempted += 1;
                let mut ops = cell.ops().to_vec();
                ops[v] = replacement;
                let swapped = CellGraph::new(ops, &edges).expect("same shape as source");

                let matched = if let Some(&lat) = exact.get(&swapped) {
                    exact_matches += 1;
                    Some(lat)
                } else if let Some(&lat) = by_hash.get(&canonical_hash(&swapped)?) {
                    fallback_matches += 1;
                    Some(lat)
                } else {
                    None
                };
                if let Some(swapped_latency) = matched {
                    let delta = swapped_latency - latency;
                    sum_delta[from][to] += delta;
                    sum_pct[from][to] += 100.0 * delta / latency;
                    counts[from][to] += 1;
                }
            }
        }
    }

    let mut mean_delta_ms = [[0.0; 3]; 3];
    let mut mean_pct_delta = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            if counts[i][j] > 0 {
                mean_delta_ms[i][j] = sum_delta[i][j] / counts[i][j] as f64;
                mean_pct_delta[i][j] = sum_pct[i][j] / counts[i][j] as f64;
            }
        }
    }
    Ok(SwapImpactMatrix {
        mean_delta_ms,
        mean_pct_delta,
        counts,
        exact_matches,
        fallback_matches,
        attempted,
    })
}

/// Monotonicity verdict over group means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "monotone_increasing")]
    MonotoneIncreasing,
    #[serde(rename = "monotone_decreasing")]
    MonotoneDecreasing,
    #[serde(rename = "not_monotone")]
    NotMonotone,
    #[serde(rename = "single_group")]
    SingleGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStat {
    pub group: String,
    pub count: u64,
    pub min_latency_ms: f64,
    pub mean_latency_ms: f64,
    pub max_latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trend {
    /// Grouping key (e.g. n_conv3x3, depth, total_params_decile).
    pub key: String,
    pub groups: Vec<GroupStat>,
    pub verdict: Verdict,
}

/// Latency summaries grouped by structural properties.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendReport {
    pub trends: Vec<Trend>,
}

fn verdict_of(groups: &[GroupStat]) -> Verdict {
    if groups.len() < 2 {
        return Verdict::SingleGroup;
    }
    let means: Vec<f64> = groups.iter().map(|g| g.mean_latency_ms).collect();
    if means.windows(2).all(|w| w[1] > w[0]) {
        Verdict::MonotoneIncreasing
    } else if means.windows(2).all(|w| w[1] < w[0]) {
        Verdict::MonotoneDecreasing
    } else {
        Verdict::NotMonotone
    }
}

fn grouped_trend(key: &str, pairs: &[(u64, f64)]) -> Trend {
    let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for &(g, lat) in pairs {
        groups.entry(g).or_default().push(lat);
    }
    let groups: Vec<GroupStat> = groups
        .into_iter()
        .map(|(g, lats)| {
            let count = lats.len() as u64;
            let min = lats.iter().copied().fold(f64::INFINITY, f64::min);
            let max = lats.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = lats.iter().sum::<f64>() / count as f64;
            GroupStat {
                group: g.to_string(),
                count,
                min_latency_ms: min,
                mean_latency_ms: mean,
                max_latency_ms: max,
            }
        })
        .collect();
    let verdict = verdict_of(&groups);
    Trend {
        key: key.to_string(),
        groups,
        verdict,
    }
}

/// Latency-vs-structure summaries over one accelerator's rows.
pub fn trend_report(rows: &[ResultRow]) -> Result<TrendReport> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let by = |f: fn(&ResultRow) -> u64| -> Vec<(u64, f64)> {
        rows.iter().map(|r| (f(r), r.latency_ms)).collect()
    };

    let mut trends = vec![
        grouped_trend("n_conv3x3", &by(|r| u64::from(r.n_conv3x3))),
        grouped_trend("n_conv1x1", &by(|r| u64::from(r.n_conv1x1))),
        grouped_trend("n_maxpool3x3", &by(|r| u64::from(r.n_maxpool3x3))),
        grouped_trend("depth", &by(|r| u64::from(r.depth))),
        grouped_trend("width", &by(|r| u64::from(r.width))),
    ];

    // Parameter-count deciles (by rank, equal-count bins).
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by_key(|&i| (rows[i].total_params, i));
    let bins = 10usize.min(rows.len());
    let pairs: Vec<(u64, f64)> = order
        .iter()
        .enumerate()
        .map(|(pos, &i)| {
            let bin = pos * bins / rows.len();
            (bin as u64, rows[i].latency_ms)
        })
        .collect();
    trends.push(grouped_trend("total_params_decile", &pairs));

    Ok(TrendReport { trends })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn row(hash: &str, accel: &str, latency: f64, energy: f64) -> ResultRow {
        ResultRow {
            cell_hash: hash.into(),
            accel: accel.into(),
            latency_ms: latency,
            energy_mj: energy,
            total_params: 1,
            total_macs: 1,
            depth: 1,
            width: 1,
            n_conv3x3: 0,
            n_conv1x1: 0,
            n_maxpool3x3: 0,
            bound_fraction_memory: 0.0,
            mean_validation_accuracy: None,
        }
    }

    #[test]
    fn correlation_examples() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);

        let rev = [4.0, 3.0, 2.0, 1.0];
        assert!((spearman(&xs, &rev).unwrap() + 1.0).abs() < 1e-12);

        let ys = [1.0, 3.0, 2.0, 4.0];
        assert!((spearman(&xs, &ys).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn constant_inputs_are_rejected() {
        let xs = [1.0, 1.0, 1.0];
        let ys = [1.0, 2.0, 3.0];
        assert!(pearson(&xs, &ys).is_err());
        assert!(spearman(&ys, &xs).is_err());
        assert!(pearson(&ys[..2], &xs).is_err());
    }

    /// Brute-force oracle: explicit rank-sort plus the covariance
    /// formula, arranged differently from the implementation.
    fn oracle_pearson(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxy: f64 = xs.iter().zip(ys).map(|(a, b)| a * b).sum();
        let sxx: f64 = xs.iter().map(|a| a * a).sum();
        let syy: f64 = ys.iter().map(|b| b * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    fn oracle_rank(xs: &[f64]) -> Vec<f64> {
        // O(n^2) counting ranks: 1 + #less + (#equal - 1) / 2.
        xs.iter()
            .map(|&x| {
                let less = xs.iter().filter(|&&o| o < x).count() as f64;
                let equal = xs.iter().filter(|&&o| o == x).count() as f64;
                1.0 + less + (equal - 1.0) / 2.0
            })
            .collect()
    }

    #[test]
    fn correlations_match_brute_force_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..1000 {
            let n = rng.random_range(5..60);
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            // Mix continuous values and ties.
            let ys: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        rng.random_range(0..5) as f64
                    } else {
                        rng.random_range(-10.0..10.0)
                    }
                })
                .collect();
            let p = pearson(&xs, &ys).unwrap();
            let po = oracle_pearson(&xs, &ys);
            assert!((p - po).abs() < 1e-12, "trial {trial}: {p} vs {po}");

            let s = spearman(&xs, &ys).unwrap();
            let so = oracle_pearson(&oracle_rank(&xs), &oracle_rank(&ys));
            assert!((s - so).abs() < 1e-12, "trial {trial}: {s} vs {so}");
        }
    }

    #[test]
    fn single_cell_bucket() {
        let rows = vec![
            row("a", "V1", 2.0, 1.0),
            row("a", "V2", 1.0, 2.0),
            row("a", "V3", 3.0, 3.0),
        ];
        let report = best_config_buckets(&rows).unwrap();
        assert_eq!(report.ties, 0);
        let v2 = report.buckets.iter().find(|b| b.winner == "V2").unwrap();
        assert_eq!(v2.count, 1);
        assert!(report
            .buckets
            .iter()
            .filter(|b| b.winner != "V2")
            .all(|b| b.count == 0));
    }

    #[test]
    fn bucket_counts_partition_the_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut rows = Vec::new();
        let n_cells = 50;
        for i in 0..n_cells {
            for accel in ["V1", "V2", "V3"] {
                rows.push(row(
                    &format!("cell{i}"),
                    accel,
                    rng.random_range(1.0..10.0),
                    rng.random_range(1.0..10.0),
                ));
            }
        }
        // One deliberate tie.
        rows.push(row("tied", "V1", 1.0, 1.0));
        rows.push(row("tied", "V2", 1.0, 1.0));
        rows.push(row("tied", "V3", 5.0, 1.0));

        let report = best_config_buckets(&rows).unwrap();
        let total: u64 = report.buckets.iter().map(|b| b.count).sum();
        assert_eq!(total + report.ties, n_cells + 1);
        assert_eq!(report.ties, 1);
    }

    #[test]
    fn bucket_means_match_hand_computation() {
        // Two cells won by V1, with known latencies on both accelerators.
        let rows = vec![
            row("a", "V1", 1.0, 10.0),
            row("a", "V2", 4.0, 20.0),
            row("b", "V1", 2.0, 30.0),
            row("b", "V2", 3.0, 40.0),
            row("c", "V2", 1.0, 5.0),
            row("c", "V1", 9.0, 6.0),
        ];
        let report = best_config_buckets(&rows).unwrap();
        let v1 = report.buckets.iter().find(|b| b.winner == "V1").unwrap();
        assert_eq!(v1.count, 2);
        assert_eq!(v1.mean_latency_ms["V1"], 1.5); // (1+2)/2
        assert_eq!(v1.mean_latency_ms["V2"], 3.5); // (4+3)/2
        assert_eq!(v1.mean_energy_mj["V1"], 20.0);
        let v2 = report.buckets.iter().find(|b| b.winner == "V2").unwrap();
        assert_eq!(v2.count, 1);
        assert_eq!(v2.mean_latency_ms["V2"], 1.0);
    }

    #[test]
    fn missing_accelerator_row_is_an_error() {
        let rows = vec![
            row("a", "V1", 1.0, 1.0),
            row("a", "V2", 2.0, 1.0),
            row("b", "V1", 1.0, 1.0),
        ];
        assert!(matches!(
            best_config_buckets(&rows),
            Err(Error::MissingAccelRow { .. })
        ));
    }

    #[test]
    fn swap_impact_on_single_cell_has_no_matches() {
        use crate::cell::OperationKind::*;
        let cell =
            CellGraph::new(vec![Input, Conv3x3, Output], &[(0, 1), (1, 2)]).unwrap();
        let matrix = swap_impact(&[(cell, 1.0)]).unwrap();
        assert!(matrix.counts.iter().flatten().all(|&c| c == 0));
        assert!(matrix.attempted > 0);
    }

    #[test]
    fn swap_impact_two_cell_fixture() {
        use crate::cell::OperationKind::*;
        let a = CellGraph::new(vec![Input, Conv1x1, Output], &[(0, 1), (1, 2)]).unwrap();
        let b = CellGraph::new(vec![Input, Conv3x3, Output], &[(0, 1), (1, 2)]).unwrap();
        let matrix = swap_impact(&[(a, 2.0), (b, 5.0)]).unwrap();

        // conv1x1 -> conv3x3: 5 - 2 = +3 (and +150%).
        let c1 = kind_index(Conv1x1).unwrap();
        let c3 = kind_index(Conv3x3).unwrap();
        assert_eq!(matrix.counts[c1][c3], 1);
        assert_eq!(matrix.mean_delta_ms[c1][c3], 3.0);
        assert_eq!(matrix.mean_pct_delta[c1][c3], 150.0);
        // And the reverse direction.
        assert_eq!(matrix.counts[c3][c1], 1);
        assert_eq!(matrix.mean_delta_ms[c3][c1], -3.0);
        // Diagonal is identically zero.
        for i in 0..3 {
            assert_eq!(matrix.counts[i][i], 0);
            assert_eq!(matrix.mean_delta_ms[i][i], 0.0);
        }
        assert_eq!(matrix.exact_matches, 2);
    }

    #[test]
    fn trend_on_linear_latency_is_monotone() {
        let mut rows = Vec::new();
        for i in 0..100u64 {
            let mut r = row(&format!("c{i}"), "V1", 0.0, 0.0);
            r.total_params = 1000 + i * 50;
            r.n_conv3x3 = (i % 6) as u32;
            r.latency_ms = r.total_params as f64 * 0.001;
            rows.push(r);
        }
        let report = trend_report(&rows).unwrap();
        let params = report
            .trends
            .iter()
            .find(|t| t.key == "total_params_decile")
            .unwrap();
        assert_eq!(params.verdict, Verdict::MonotoneIncreasing);
        assert_eq!(params.groups.len(), 10);
    }

    #[test]
    fn trend_means_match_hand_computation() {
        let mut rows = vec![
            row("a", "V1", 1.0, 0.0),
            row("b", "V1", 3.0, 0.0),
            row("c", "V1", 5.0, 0.0),
        ];
        rows[0].n_conv3x3 = 0;
        rows[1].n_conv3x3 = 0;
        rows[2].n_conv3x3 = 2;
        let report = trend_report(&rows).unwrap();
        let t = report.trends.iter().find(|t| t.key == "n_conv3x3").unwrap();
        assert_eq!(t.groups.len(), 2);
        assert_eq!(t.groups[0].count, 2);
        assert_eq!(t.groups[0].mean_latency_ms, 2.0);
        assert_eq!(t.groups[0].min_latency_ms, 1.0);
        assert_eq!(t.groups[0].max_latency_ms, 3.0);
        assert_eq!(t.groups[1].mean_latency_ms, 5.0);
        assert_eq!(t.verdict, Verdict::MonotoneIncreasing);
    }

    #[test]
    fn single_group_yields_no_verdict() {
        let rows = vec![row("a", "V1", 1.0, 0.0), row("b", "V1", 2.0, 0.0)];
        let report = trend_report(&rows).unwrap();
        let t = report.trends.iter().find(|t| t.key == "depth").unwrap();
        assert_eq!(t.verdict, Verdict::SingleGroup);
    }
}
