//! Latency/throughput statistics and CSV emission.
//!
//! Tail quantiles use nearest-rank percentiles (never interpolated): the
//! worst tails of a heavy-tailed latency distribution should not be
//! synthesized between samples.

use crate::sim::{Mode, RunResult};
use crate::traffic::TrafficClass;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no latency samples for class {class}")]
    EmptySamples { class: String },
    #[error("empty sample set")]
    Empty,
    #[error("percentile fraction {0} outside (0, 1]")]
    BadFraction(f64),
    #[error("no results to aggregate")]
    NoResults,
    #[error("results from different configs or modes cannot be pooled")]
    MixedResults,
    #[error("malformed summary CSV at line {0}")]
    MalformedSummary(usize),
}

/// Nearest-rank percentile: sorted ascending, the value at 1-based index
/// `ceil(q·n)`.
pub fn percentile(samples: &[f64], q: f64) -> Result<f64, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(MetricsError::BadFraction(q));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("latencies are ordered"));
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.max(1) - 1])
}

/// Latency distribution summary of one traffic class.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyStats {
    pub class: TrafficClass,
    pub n_samples: u64,
    pub median_s: f64,
    pub p95_s: f64,
    pub p99_s: f64,
    pub p9999_s: f64,
    pub drop_rate: f64,
}

/// Mean delivered rate of one STA, bits/s, averaged across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputRow {
    pub sta_id: u32,
    pub class: TrafficClass,
    pub throughput_bps: f64,
}

/// Pooled statistics of one mode across paired seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mode: Mode,
    pub stats: Vec<LatencyStats>,
    pub throughput: Vec<ThroughputRow>,
    /// Mean per-STA throughput by class, Mbit/s.
    pub mean_throughput_mbps: BTreeMap<TrafficClass, f64>,
}

impl Aggregate {
    pub fn class_stats(&self, class: TrafficClass) -> Option<&LatencyStats> {
        self.stats.iter().find(|s| s.class == class)
    }
}

/// Pool per-run results of one `(config, mode)` across seeds: latency
/// samples concatenate before the percentile computation, throughput
/// averages per STA.
pub fn aggregate(results: &[RunResult]) -> Result<Aggregate, MetricsError> {
    let first = results.first().ok_or(MetricsError::NoResults)?;
    if results
        .iter()
        .any(|r| r.config_hash != first.config_hash || r.mode != first.mode)
    {
        return Err(MetricsError::MixedResults);
    }

    let mut stats = Vec::new();
    for class in [TrafficClass::Broadband, TrafficClass::AugmentedReality] {
        let pooled: Vec<f64> = results
            .iter()
            .flat_map(|r| r.samples.iter())
            .filter(|s| s.class == class)
            .map(|s| s.latency_s)
            .collect();
        let delivered: u64 = results.iter().map(|r| r.counts(class).delivered).sum();
        let dropped: u64 = results.iter().map(|r| r.counts(class).dropped).sum();
        let generated: u64 = results.iter().map(|r| r.counts(class).generated).sum();
        if pooled.is_empty() {
            if generated > 0 && delivered + dropped > 0 {
                return Err(MetricsError::EmptySamples {
                    class: class.to_string(),
                });
            }
            continue;
        }
        let completed = delivered + dropped;
        let stat = LatencyStats {
            class,
            n_samples: pooled.len() as u64,
            median_s: percentile(&pooled, 0.5)?,
            p95_s: percentile(&pooled, 0.95)?,
            p99_s: percentile(&pooled, 0.99)?,
            p9999_s: percentile(&pooled, 0.9999)?,
            drop_rate: if completed == 0 {
                0.0
            } else {
                dropped as f64 / completed as f64
            },
        };
        debug_assert!(
            stat.median_s <= stat.p95_s && stat.p95_s <= stat.p99_s && stat.p99_s <= stat.p9999_s
        );
        stats.push(stat);
    }

    // per-STA throughput averaged over runs
    let mut by_sta: BTreeMap<u32, (TrafficClass, f64)> = BTreeMap::new();
    for result in results {
        for row in &result.sta_throughput {
            let entry = by_sta
                .entry(row.sta_id.0)
                .or_insert((row.class, 0.0));
            entry.1 += row.throughput_bps / results.len() as f64;
        }
    }
    let throughput: Vec<ThroughputRow> = by_sta
        .iter()
        .map(|(&sta_id, &(class, bps))| ThroughputRow {
            sta_id,
            class,
            throughput_bps: bps,
        })
        .collect();

    let mut mean_throughput_mbps = BTreeMap::new();
    for class in [TrafficClass::Broadband, TrafficClass::AugmentedReality] {
        let rows: Vec<&ThroughputRow> = throughput.iter().filter(|r| r.class == class).collect();
        if !rows.is_empty() {
            let mean = rows.iter().map(|r| r.throughput_bps).sum::<f64>() / rows.len() as f64;
            mean_throughput_mbps.insert(class, mean / 1e6);
        }
    }

    Ok(Aggregate {
        mode: first.mode,
        stats,
        throughput,
        mean_throughput_mbps,
    })
}

/// `samples.csv`: one row per delivered packet.
pub fn emit_samples_csv(results: &[RunResult]) -> String {
    let mut out = String::from("run_id,seed,mode,sta_id,class,arrival_s,latency_s,retries\n");
    for result in results {
        let run_id = format!("{}-{}", result.mode, result.seed);
        for s in &result.samples {
            let _ = writeln!(
                out,
                "{run_id},{},{},{},{},{:.6},{:.6},{}",
                result.seed, result.mode, s.sta_id, s.class, s.arrival_s, s.latency_s, s.retries
            );
        }
    }
    out
}

/// `summary.csv`: one row per (mode, class).
pub fn emit_summary_csv(aggregates: &[Aggregate]) -> String {
    let mut out = String::from(
        "mode,class,n,median_ms,p95_ms,p99_ms,p9999_ms,drop_rate,mean_throughput_mbps\n",
    );
    for agg in aggregates {
        for stat in &agg.stats {
            let throughput = agg
                .mean_throughput_mbps
                .get(&stat.class)
                .copied()
                .unwrap_or(0.0);
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                agg.mode,
                stat.class,
                stat.n_samples,
                stat.median_s * 1e3,
                stat.p95_s * 1e3,
                stat.p99_s * 1e3,
                stat.p9999_s * 1e3,
                stat.drop_rate,
                throughput
            );
        }
    }
    out
}

/// One parsed `summary.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub mode: String,
    pub class: String,
    pub n: u64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub p9999_ms: f64,
    pub drop_rate: f64,
    pub mean_throughput_mbps: f64,
}

/// Parse a `summary.csv` produced by [`emit_summary_csv`].
pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>, MetricsError> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            continue; // header
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(MetricsError::MalformedSummary(lineno + 1));
        }
        let num = |i: usize| -> Result<f64, MetricsError> {
            fields[i]
                .parse()
                .map_err(|_| MetricsError::MalformedSummary(lineno + 1))
        };
        rows.push(SummaryRow {
            mode: fields[0].to_string(),
            class: fields[1].to_string(),
            n: fields[2]
                .parse()
                .map_err(|_| MetricsError::MalformedSummary(lineno + 1))?,
            median_ms: num(3)?,
            p95_ms: num(4)?,
            p99_ms: num(5)?,
            p9999_ms: num(6)?,
            drop_rate: num(7)?,
            mean_throughput_mbps: num(8)?,
        });
    }
    Ok(rows)
}

/// Re-emit parsed summary rows; byte-identical to the original emission.
pub fn emit_summary_rows(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "mode,class,n,median_ms,p95_ms,p99_ms,p9999_ms,drop_rate,mean_throughput_mbps\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.mode,
            r.class,
            r.n,
            r.median_ms,
            r.p95_ms,
            r.p99_ms,
            r.p9999_ms,
            r.drop_rate,
            r.mean_throughput_mbps
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_examples() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(), 2.0);
        let ten: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        assert_eq!(percentile(&ten, 0.9999).unwrap(), 10.0);
        assert_eq!(percentile(&ten, 1.0).unwrap(), 10.0);
        // unsorted input sorts first
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 0.5).unwrap(), 2.0);
    }

    #[test]
    fn percentile_rejects_bad_input() {
        assert_eq!(percentile(&[], 0.5), Err(MetricsError::Empty));
        assert_eq!(
            percentile(&[1.0], 0.0),
            Err(MetricsError::BadFraction(0.0))
        );
        assert_eq!(
            percentile(&[1.0], 1.5),
            Err(MetricsError::BadFraction(1.5))
        );
    }

    #[test]
    fn single_sample_is_every_percentile() {
        for q in [0.01, 0.5, 0.95, 0.9999, 1.0] {
            assert_eq!(percentile(&[42.0], q).unwrap(), 42.0);
        }
    }

    #[test]
    fn summary_round_trip_is_byte_identical() {
        let rows = vec![
            SummaryRow {
                mode: "no-sr".into(),
                class: "ar".into(),
                n: 192_000,
                median_ms: 2.731002,
                p95_ms: 14.5,
                p99_ms: 55.25,
                p9999_ms: 231.0,
                drop_rate: 0.000125,
                mean_throughput_mbps: 0.0256,
            },
            SummaryRow {
                mode: "cbf".into(),
                class: "broadband".into(),
                n: 11_900,
                median_ms: 40.0,
                p95_ms: 120.0,
                p99_ms: 300.0,
                p9999_ms: 900.0,
                drop_rate: 0.0,
                mean_throughput_mbps: 97.3,
            },
        ];
        let emitted = emit_summary_rows(&rows);
        let parsed = parse_summary_csv(&emitted).unwrap();
        assert_eq!(emit_summary_rows(&parsed), emitted);
    }

    #[test]
    fn malformed_summary_rejected() {
        let text = "mode,class,n,median_ms,p95_ms,p99_ms,p9999_ms,drop_rate,mean_throughput_mbps\nno-sr,ar,10\n";
        assert_eq!(
            parse_summary_csv(text),
            Err(MetricsError::MalformedSummary(2))
        );
    }
}
