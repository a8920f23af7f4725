//! Misfiring, stimulation-efficiency and stimulation ratios from a trace,
//! and their mean/std across replicates.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sim::{SimTrace, TraceCounts};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_mis: usize,
    pub n_covered: usize,
    pub n_spurious: usize,
    pub n_emissions: usize,
    pub total_spikes: usize,
    /// `None` when there are no spikes.
    pub gamma_mis: Option<f64>,
    pub eta_stim_pct: Option<f64>,
    pub gamma_stim: Option<f64>,
}

impl MetricsReport {
    pub fn from_counts(c: &TraceCounts) -> Self {
        let total = c.total_spikes;
        let ratio = |x: usize| (total > 0).then(|| x as f64 / total as f64);
        let gamma_mis = ratio(c.missed);
        MetricsReport {
            n_mis: c.missed,
            n_covered: c.covered,
            n_spurious: c.spurious,
            n_emissions: c.emissions,
            total_spikes: total,
            gamma_mis,
            eta_stim_pct: gamma_mis.map(|g| 100.0 - 100.0 * g),
            gamma_stim: ratio(c.emissions),
        }
    }
}

/// A spike is a misfire exactly when the trace classifies it missed.
pub fn compute_metrics(trace: &SimTrace) -> MetricsReport {
    MetricsReport::from_counts(&trace.counts())
}

/// Sample statistics of one metric. `std` is 0 and `std_defined` false for a
/// single sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub std_defined: bool,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Stat {
                n,
                mean: f64::NAN,
                std: f64::NAN,
                std_defined: false,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Stat {
                n,
                mean,
                std: 0.0,
                std_defined: false,
            };
        }
        let ss: f64 = values.iter().map(|x| (x - mean).powi(2)).sum();
        Stat {
            n,
            mean,
            std: (ss / (n - 1) as f64).sqrt(),
            std_defined: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub gamma_stim: Stat,
    pub eta_stim_pct: Stat,
    pub gamma_mis: Stat,
}

/// Mean and sample standard deviation (n−1) over the reports whose ratios
/// are defined.
pub fn aggregate(reports: &[MetricsReport]) -> Aggregate {
    let pick = |f: fn(&MetricsReport) -> Option<f64>| -> Vec<f64> { reports.iter().filter_map(f).collect() };
    Aggregate {
        runs: reports.len(),
        gamma_stim: Stat::of(&pick(|r| r.gamma_stim)),
        eta_stim_pct: Stat::of(&pick(|r| r.eta_stim_pct)),
        gamma_mis: Stat::of(&pick(|r| r.gamma_mis)),
    }
}

/// One row of the per-run metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub protocol: String,
    pub spike_rate_hz: f64,
    pub n_patterns: usize,
    pub device_count: usize,
    pub seed: u64,
    pub n_mis: usize,
    pub n_covered: usize,
    pub n_spurious: usize,
    pub n_emissions: usize,
    pub total_spikes: usize,
    pub gamma_mis: f64,
    pub eta_stim_pct: f64,
    pub gamma_stim: f64,
}

pub const METRICS_COLUMNS: [&str; 13] = [
    "protocol",
    "spike_rate_hz",
    "n_patterns",
    "device_count",
    "seed",
    "n_mis",
    "n_covered",
    "n_spurious",
    "n_emissions",
    "total_spikes",
    "gamma_mis",
    "eta_stim_pct",
    "gamma_stim",
];

impl MetricsRow {
    /// Undefined ratios become NaN.
    pub fn new(
        protocol: &str,
        spike_rate_hz: f64,
        n_patterns: usize,
        device_count: usize,
        seed: u64,
        m: &MetricsReport,
    ) -> Self {
        MetricsRow {
            protocol: protocol.to_string(),
            spike_rate_hz,
            n_patterns,
            device_count,
            seed,
            n_mis: m.n_mis,
            n_covered: m.n_covered,
            n_spurious: m.n_spurious,
            n_emissions: m.n_emissions,
            total_spikes: m.total_spikes,
            gamma_mis: m.gamma_mis.unwrap_or(f64::NAN),
            eta_stim_pct: m.eta_stim_pct.unwrap_or(f64::NAN),
            gamma_stim: m.gamma_stim.unwrap_or(f64::NAN),
        }
    }

    pub fn report(&self) -> MetricsReport {
        let opt = |x: f64| (!x.is_nan()).then_some(x);
        MetricsReport {
            n_mis: self.n_mis,
            n_covered: self.n_covered,
            n_spurious: self.n_spurious,
            n_emissions: self.n_emissions,
            total_spikes: self.total_spikes,
            gamma_mis: opt(self.gamma_mis),
            eta_stim_pct: opt(self.eta_stim_pct),
            gamma_stim: opt(self.gamma_stim),
        }
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(METRICS_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::error::Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|x| x.map_err(Into::into)).collect()
}
