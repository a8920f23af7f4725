//! Experiment plumbing: rasters and banks from a config, single runs with
//! their artifacts, replicate sweeps, named presets and plot data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{config_from_pairs, config_to_json, parse_pairs};
use crate::energy::{cycles_to_charge, cycles_to_discharge, energy_curve, EnergyParams, Phase};
use crate::error::{Error, Result, Violation};
use crate::metrics::{aggregate, compute_metrics, metrics_csv, Aggregate, MetricsReport, MetricsRow};
use crate::model::{ProtocolChoice, RasterPlot, RasterSource, SimConfig};
use crate::protocols::{build_markov_bank, random_pattern_bank, rank_layer_sequences, PatternBank, TransitionMatrix};
use crate::seed::{split, BANK_STREAM, RASTER_STREAM};
use crate::sim::{run, SimTrace};
use crate::spikegen::{direction_switch_scenario, generate_poisson_raster, keat_raster, KeatParams, SpikeRateProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Format(format!("unknown format '{other}' (csv|json)"))),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path.display(), e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))
}

pub fn raster_seed(cfg: &SimConfig) -> u64 {
    split(cfg.seed, RASTER_STREAM)
}

pub fn bank_seed(cfg: &SimConfig) -> u64 {
    split(cfg.seed, BANK_STREAM)
}

/// The demand raster described by `cfg.raster`.
pub fn generate_raster(cfg: &SimConfig) -> Result<RasterPlot> {
    let (n, dur, slot, seed) = (cfg.device_count, cfg.duration_s, cfg.slot_duration_ms, raster_seed(cfg));
    match &cfg.raster {
        RasterSource::Poisson { rate_hz } => {
            generate_poisson_raster(&SpikeRateProfile::uniform(n, *rate_hz), dur, slot, seed)
        }
        RasterSource::DirectionSwitch {
            rate_before_hz,
            rate_after_hz,
            switch_time_s,
        } => direction_switch_scenario(*rate_before_hz, *rate_after_hz, *switch_time_s, dur, n, slot, seed),
        RasterSource::Keat { amplitude, period_ms } => {
            keat_raster(n, dur, slot, *amplitude, *period_ms, &KeatParams::default(), seed)
        }
        RasterSource::File { path } => {
            let text = read_file(Path::new(path))?;
            let r = if path.ends_with(".json") {
                RasterPlot::from_json(&text)?
            } else {
                RasterPlot::from_csv(&text, n, cfg.slots(), slot)?
            };
            if r.devices() != n {
                return Err(Error::Mismatch(format!(
                    "{path}: raster has {} devices, config has {n}",
                    r.devices()
                )));
            }
            Ok(r)
        }
    }
}

/// The bank the configured protocol needs, if any.
pub fn build_bank(cfg: &SimConfig) -> Result<Option<PatternBank>> {
    match cfg.protocol {
        ProtocolChoice::ChargeAndFire => Ok(None),
        ProtocolChoice::PsdwRandom => {
            random_pattern_bank(cfg.frequency_count, cfg.window_width, cfg.device_count, bank_seed(cfg)).map(Some)
        }
        ProtocolChoice::PsdwMarkov => {
            let ranked = rank_layer_sequences(&TransitionMatrix::cortical_column());
            build_markov_bank(&ranked, cfg.frequency_count, &cfg.device_layers, cfg.window_width).map(Some)
        }
    }
}

/// Raster, bank and trace of one simulation.
pub struct RunOutcome {
    pub raster: RasterPlot,
    pub bank: Option<PatternBank>,
    pub trace: SimTrace,
    pub report: MetricsReport,
}

/// Generate inputs and simulate. `bank` replaces the generated bank.
pub fn simulate(cfg: &SimConfig, bank: Option<PatternBank>) -> Result<RunOutcome> {
    let v = crate::model::validate_config(cfg);
    if !v.is_empty() {
        return Err(Error::InvalidConfig(v));
    }
    let raster = generate_raster(cfg)?;
    let bank = match bank {
        Some(b) => Some(b),
        None => build_bank(cfg)?,
    };
    let trace = run(cfg, &raster, bank.as_ref())?;
    let report = compute_metrics(&trace);
    Ok(RunOutcome {
        raster,
        bank,
        trace,
        report,
    })
}

pub fn metrics_row(cfg: &SimConfig, report: &MetricsReport) -> MetricsRow {
    MetricsRow::new(
        cfg.protocol.as_str(),
        cfg.raster.nominal_rate_hz(),
        cfg.frequency_count,
        cfg.device_count,
        cfg.seed,
        report,
    )
}

fn sidecar(cfg: &SimConfig) -> String {
    let v = serde_json::json!({ "config": config_to_json(cfg) });
    let mut s = serde_json::to_string_pretty(&v).expect("sidecar serialises");
    s.push('\n');
    s
}

/// Run once and write `raster.csv|json`, `trace.jsonl`, `trace_summary.json`,
/// `metrics.csv|json`, `config.json` and, for window protocols, `bank.json`.
pub fn run_single(
    cfg: &SimConfig,
    out_dir: &Path,
    bank: Option<PatternBank>,
    format: OutputFormat,
) -> Result<RunOutcome> {
    let outcome = simulate(cfg, bank)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display(), e))?;
    let row = metrics_row(cfg, &outcome.report);
    match format {
        OutputFormat::Csv => {
            write_file(&out_dir.join("raster.csv"), &outcome.raster.to_csv())?;
            write_file(&out_dir.join("metrics.csv"), &metrics_csv(&[row])?)?;
        }
        OutputFormat::Json => {
            write_file(&out_dir.join("raster.json"), &outcome.raster.to_json())?;
            write_file(&out_dir.join("metrics.json"), &rows_json(&[row]))?;
        }
    }
    write_file(&out_dir.join("trace.jsonl"), &outcome.trace.to_jsonl())?;
    write_file(&out_dir.join("trace_summary.json"), &outcome.trace.summary_json())?;
    write_file(&out_dir.join("config.json"), &sidecar(cfg))?;
    if let Some(b) = &outcome.bank {
        let mut s = b.to_json();
        s.push('\n');
        write_file(&out_dir.join("bank.json"), &s)?;
    }
    Ok(outcome)
}

fn rows_json<T: Serialize>(rows: &[T]) -> String {
    // NaN is not JSON; undefined ratios become null
    let mut s = serde_json::to_string_pretty(&serde_json::to_value(rows).unwrap_or_default()).expect("rows serialise");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SpikeRate,
    NPatterns,
    DeviceCount,
    UltrasoundFrequency,
    HarvesterArea,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::SpikeRate => "spike_rate",
            SweepAxis::NPatterns => "n_patterns",
            SweepAxis::DeviceCount => "device_count",
            SweepAxis::UltrasoundFrequency => "ultrasound_frequency",
            SweepAxis::HarvesterArea => "harvester_area",
        }
    }

    /// Column name used for the x values in plot data.
    pub fn x_label(self) -> &'static str {
        match self {
            SweepAxis::SpikeRate => "rate_hz",
            SweepAxis::NPatterns => "n_patterns",
            SweepAxis::DeviceCount => "device_count",
            SweepAxis::UltrasoundFrequency => "f_us_hz",
            SweepAxis::HarvesterArea => "a_eh_cm2",
        }
    }

    fn is_integer(self) -> bool {
        matches!(self, SweepAxis::NPatterns | SweepAxis::DeviceCount)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SweepAxis::SpikeRate,
            SweepAxis::NPatterns,
            SweepAxis::DeviceCount,
            SweepAxis::UltrasoundFrequency,
            SweepAxis::HarvesterArea,
        ]
        .into_iter()
        .find(|a| a.as_str() == s.trim())
        .ok_or_else(|| Error::Format(format!("unknown sweep axis '{}'", s.trim())))
    }
}

/// One curve of a sweep: a protocol, optionally pinning the pattern or
/// device count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub protocol: ProtocolChoice,
    pub n_patterns: Option<usize>,
    pub device_count: Option<usize>,
}

impl SeriesSpec {
    pub fn new(protocol: ProtocolChoice) -> Self {
        SeriesSpec {
            protocol,
            n_patterns: None,
            device_count: None,
        }
    }

    pub fn patterns(mut self, n: usize) -> Self {
        self.n_patterns = Some(n);
        self
    }

    pub fn devices(mut self, m: usize) -> Self {
        self.device_count = Some(m);
        self
    }

    /// `protocol[:n=N][:m=M]`.
    pub fn label(&self) -> String {
        let mut s = self.protocol.as_str().to_string();
        if let Some(n) = self.n_patterns {
            let _ = write!(s, ":n={n}");
        }
        if let Some(m) = self.device_count {
            let _ = write!(s, ":m={m}");
        }
        s
    }
}

impl FromStr for SeriesSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let protocol: ProtocolChoice = parts.next().unwrap_or_default().parse()?;
        let mut spec = SeriesSpec::new(protocol);
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad series option '{p}'")))?;
            let v: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad series value '{v}'")))?;
            match k.trim() {
                "n" => spec.n_patterns = Some(v),
                "m" => spec.device_count = Some(v),
                other => return Err(Error::Format(format!("unknown series option '{other}'"))),
            }
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub name: String,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub replicates: usize,
    pub series: Vec<SeriesSpec>,
    pub base: SimConfig,
}

/// `a:step:b` (inclusive) or a comma list.
pub fn parse_values(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Format(format!("bad value list '{s}'"));
    let nums = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let (a, step, b) = (nums(parts[0])?, nums(parts[1])?, nums(parts[2])?);
        if !(step > 0.0) || b < a {
            return Err(bad());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| a + step * i as f64).collect());
    }
    s.split(',').filter(|t| !t.trim().is_empty()).map(nums).collect()
}

impl SweepSpec {
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.values.is_empty() {
            v.push(Violation::config("sweep.values", "must not be empty"));
        }
        if self.replicates == 0 {
            v.push(Violation::config("sweep.replicates", "must be >= 1"));
        }
        if self.series.is_empty() {
            v.push(Violation::config("sweep.series", "must name at least one protocol"));
        }
        if self.axis.is_integer() && self.values.iter().any(|x| x.fract() != 0.0 || *x < 1.0) {
            v.push(Violation::config(
                "sweep.values",
                "must be positive integers for this axis",
            ));
        }
        if self.axis == SweepAxis::SpikeRate
            && !matches!(
                self.base.raster,
                RasterSource::Poisson { .. } | RasterSource::DirectionSwitch { .. }
            )
        {
            v.push(Violation::config(
                "raster.kind",
                "spike_rate sweeps need a poisson or direction_switch raster",
            ));
        }
        v
    }

    /// Key=value text: `sweep.*` keys describe the sweep, everything else is
    /// the base config.
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let (sweep, base): (Vec<_>, Vec<_>) = pairs.into_iter().partition(|(k, _)| k.starts_with("sweep."));
        let mut spec = SweepSpec {
            name: "sweep".into(),
            axis: SweepAxis::SpikeRate,
            values: Vec::new(),
            replicates: 1,
            series: Vec::new(),
            base: config_from_pairs(&base)?,
        };
        for (k, v) in sweep {
            match k.as_str() {
                "sweep.name" => spec.name = v,
                "sweep.axis" => spec.axis = v.parse()?,
                "sweep.values" => spec.values = parse_values(&v)?,
                "sweep.replicates" => {
                    spec.replicates = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::Format(format!("bad replicate count '{v}'")))?
                }
                "sweep.series" => {
                    spec.series = v
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(str::parse)
                        .collect::<Result<_>>()?
                }
                other => {
                    return Err(Error::InvalidConfig(vec![Violation::config(
                        other,
                        "unknown sweep key",
                    )]))
                }
            }
        }
        Ok(spec)
    }

    /// Resolved config for one (series, axis value, replicate) cell.
    pub fn cell_config(&self, series: &SeriesSpec, value: f64, replicate: usize) -> SimConfig {
        let mut cfg = self.base.clone();
        cfg.protocol = series.protocol;
        if let Some(n) = series.n_patterns {
            cfg.frequency_count = n;
        }
        if let Some(m) = series.device_count {
            cfg.set_device_count(m);
        }
        match self.axis {
            SweepAxis::SpikeRate => match &mut cfg.raster {
                RasterSource::Poisson { rate_hz } => *rate_hz = value,
                RasterSource::DirectionSwitch { rate_after_hz, .. } => *rate_after_hz = value,
                _ => {}
            },
            SweepAxis::NPatterns => cfg.frequency_count = value as usize,
            SweepAxis::DeviceCount => cfg.set_device_count(value as usize),
            SweepAxis::UltrasoundFrequency => cfg.energy.f_us = value,
            SweepAxis::HarvesterArea => cfg.energy.a_eh = value,
        }
        if cfg.protocol == ProtocolChoice::ChargeAndFire {
            // one addressing frequency per device
            cfg.frequency_count = cfg.device_count;
        }
        cfg.seed = split(self.base.seed, replicate as u64);
        cfg
    }
}

/// Mean/std per (series, axis value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub series: String,
    pub protocol: String,
    pub axis: String,
    pub axis_value: f64,
    pub n_patterns: usize,
    pub device_count: usize,
    pub runs: usize,
    pub mean_gamma_stim: f64,
    pub std_gamma_stim: f64,
    pub mean_eta_stim_pct: f64,
    pub std_eta_stim_pct: f64,
    pub mean_gamma_mis: f64,
    pub std_gamma_mis: f64,
    pub std_defined: bool,
}

impl AggregateRow {
    fn new(series: &SeriesSpec, axis: SweepAxis, value: f64, cfg: &SimConfig, a: &Aggregate) -> Self {
        AggregateRow {
            series: series.label(),
            protocol: series.protocol.as_str().into(),
            axis: axis.as_str().into(),
            axis_value: value,
            n_patterns: cfg.frequency_count,
            device_count: cfg.device_count,
            runs: a.runs,
            mean_gamma_stim: a.gamma_stim.mean,
            std_gamma_stim: a.gamma_stim.std,
            mean_eta_stim_pct: a.eta_stim_pct.mean,
            std_eta_stim_pct: a.eta_stim_pct.std,
            mean_gamma_mis: a.gamma_mis.mean,
            std_gamma_mis: a.gamma_mis.std,
            std_defined: a.gamma_stim.std_defined,
        }
    }
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(AGGREGATE_COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub const AGGREGATE_COLUMNS: [&str; 14] = [
    "series",
    "protocol",
    "axis",
    "axis_value",
    "n_patterns",
    "device_count",
    "runs",
    "mean_gamma_stim",
    "std_gamma_stim",
    "mean_eta_stim_pct",
    "std_eta_stim_pct",
    "mean_gamma_mis",
    "std_gamma_mis",
    "std_defined",
];

pub fn parse_aggregate_csv(text: &str) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|x| x.map_err(Into::into)).collect()
}

pub struct SweepResult {
    pub rows: Vec<MetricsRow>,
    pub aggregate: Vec<AggregateRow>,
}

/// Simulate every (series, value, replicate) cell on up to `jobs` threads.
/// Row order is series-major, then value, then replicate, whatever `jobs`.
pub fn execute_sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepResult> {
    let v = spec.validate();
    if !v.is_empty() {
        return Err(Error::InvalidConfig(v));
    }
    let cells: Vec<(usize, usize, usize)> = (0..spec.series.len())
        .flat_map(|s| (0..spec.values.len()).flat_map(move |x| (0..spec.replicates).map(move |r| (s, x, r))))
        .collect();
    let work = |&(s, x, r): &(usize, usize, usize)| -> Result<MetricsRow> {
        let cfg = spec.cell_config(&spec.series[s], spec.values[x], r);
        let out = simulate(&cfg, None)?;
        Ok(metrics_row(&cfg, &out.report))
    };
    let rows: Vec<MetricsRow> = if jobs <= 1 {
        cells.iter().map(work).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::domain(format!("thread pool: {e}")))?;
        pool.install(|| cells.par_iter().map(work).collect::<Result<_>>())?
    };
    let mut agg = Vec::new();
    for (s, series) in spec.series.iter().enumerate() {
        for (x, &value) in spec.values.iter().enumerate() {
            let start = (s * spec.values.len() + x) * spec.replicates;
            let chunk = &rows[start..start + spec.replicates];
            let reports: Vec<MetricsReport> = chunk.iter().map(MetricsRow::report).collect();
            let cfg = spec.cell_config(series, value, 0);
            agg.push(AggregateRow::new(series, spec.axis, value, &cfg, &aggregate(&reports)));
        }
    }
    Ok(SweepResult { rows, aggregate: agg })
}

/// Run a sweep and write `metrics.csv`, `aggregate.csv` and `sweep.json`
/// (plus JSON copies when `format` is JSON).
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path, jobs: usize, format: OutputFormat) -> Result<SweepResult> {
    let res = execute_sweep(spec, jobs)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display(), e))?;
    write_file(&out_dir.join("metrics.csv"), &metrics_csv(&res.rows)?)?;
    write_file(&out_dir.join("aggregate.csv"), &aggregate_csv(&res.aggregate)?)?;
    if format == OutputFormat::Json {
        write_file(&out_dir.join("metrics.json"), &rows_json(&res.rows))?;
        write_file(&out_dir.join("aggregate.json"), &rows_json(&res.aggregate))?;
    }
    let side = serde_json::json!({
        "name": spec.name,
        "axis": spec.axis.as_str(),
        "values": spec.values,
        "replicates": spec.replicates,
        "series": spec.series.iter().map(SeriesSpec::label).collect::<Vec<_>>(),
        "config": config_to_json(&spec.base),
    });
    let mut s = serde_json::to_string_pretty(&side).expect("sidecar serialises");
    s.push('\n');
    write_file(&out_dir.join("sweep.json"), &s)?;
    Ok(res)
}

pub const PRESETS: [&str; 5] = ["fig14", "fig15", "fig18", "fig7", "fig8"];

/// Base for the protocol presets: four devices round-robin over the layers,
/// 10 s rasters, window 4, ten patterns.
pub fn protocol_base(seed: u64) -> SimConfig {
    let mut c = SimConfig::default();
    c.set_device_count(4);
    c.frequency_count = 10;
    c.window_width = 4;
    c.duration_s = 10.0;
    c.seed = seed;
    c
}

/// Protocol sweep presets. `None` for the energy-curve presets.
pub fn sweep_preset(name: &str, base: SimConfig, replicates: usize) -> Result<Option<SweepSpec>> {
    use ProtocolChoice::*;
    let rates = parse_values("100:5:130")?;
    let spec = match name {
        "fig14" => SweepSpec {
            name: name.into(),
            axis: SweepAxis::SpikeRate,
            values: rates,
            replicates,
            series: vec![SeriesSpec::new(ChargeAndFire), SeriesSpec::new(PsdwRandom)],
            base,
        },
        "fig15" => SweepSpec {
            name: name.into(),
            axis: SweepAxis::NPatterns,
            values: vec![5.0, 10.0, 20.0],
            replicates,
            series: [4, 8, 12]
                .into_iter()
                .map(|m| SeriesSpec::new(PsdwRandom).devices(m))
                .collect(),
            base,
        },
        "fig18" => SweepSpec {
            name: name.into(),
            axis: SweepAxis::SpikeRate,
            values: rates,
            replicates,
            series: std::iter::once(SeriesSpec::new(ChargeAndFire))
                .chain([5, 10, 20].into_iter().map(|n| SeriesSpec::new(PsdwMarkov).patterns(n)))
                .collect(),
            base,
        },
        "fig7" | "fig8" => return Ok(None),
        other => {
            return Err(Error::InvalidConfig(vec![Violation::config(
                "--preset",
                format!("unknown preset '{other}' (expected one of {})", PRESETS.join(", ")),
            )]))
        }
    };
    Ok(Some(spec))
}

/// Named energy parameter set for a curve family.
pub struct CurveSeries {
    pub label: String,
    pub params: EnergyParams,
}

/// Curve families: `fig7` varies the target light intensity and the
/// harvester area at 500 Hz; `fig8` varies the ultrasound frequency for two
/// harvester areas.
pub fn curve_preset(name: &str, cfg: &SimConfig) -> Result<Vec<CurveSeries>> {
    let with_target = |mw_mm2: f64| -> Result<EnergyParams> {
        let mut optics = cfg.optics;
        optics.target_intensity = mw_mm2;
        let mut p = cfg.energy;
        p.e_max = cfg.led.pulse_energy(&optics)?;
        Ok(p)
    };
    let mut out = Vec::new();
    match name {
        "fig7" => {
            for target in [8.0, 10.0, 12.0] {
                let mut p = with_target(target)?;
                p.f_us = 500.0;
                out.push(CurveSeries {
                    label: format!("intensity={target}mW/mm2"),
                    params: p,
                });
            }
            for area in [1.0e-4, 2.0e-4] {
                let mut p = with_target(10.0)?;
                p.f_us = 500.0;
                p.a_eh = area;
                out.push(CurveSeries {
                    label: format!("a_eh={area}cm2"),
                    params: p,
                });
            }
        }
        "fig8" => {
            for area in [1.0e-4, 2.0e-4] {
                for f in [500.0, 1.0e6, 3.0e6] {
                    let mut p = cfg.energy;
                    p.a_eh = area;
                    p.f_us = f;
                    out.push(CurveSeries {
                        label: format!("a_eh={area}cm2,f_us={f}Hz"),
                        params: p,
                    });
                }
            }
        }
        other => return Err(Error::Format(format!("'{other}' is not an energy-curve preset"))),
    }
    Ok(out)
}

/// Charging and discharging curves, long format:
/// `series,phase,t_ms,n_cycles,voltage_v,energy_j`. Each curve is thinned to
/// at most `max_points` + 1 samples.
pub fn curves_csv(series: &[CurveSeries], max_points: u64) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["series", "phase", "t_ms", "n_cycles", "voltage_v", "energy_j"])?;
    for s in series {
        for (phase, name, end) in [
            (Phase::Charging, "charging", cycles_to_charge(&s.params)?),
            (Phase::Discharging, "discharging", cycles_to_discharge(&s.params)?),
        ] {
            let stride = (end / max_points.max(1)).max(1);
            for pt in energy_curve(&s.params, phase, stride)? {
                w.write_record([
                    s.label.clone(),
                    name.to_string(),
                    pt.t_ms.to_string(),
                    pt.n_cycles.to_string(),
                    pt.voltage_v.to_string(),
                    pt.energy_j.to_string(),
                ])?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// Write `curves.csv` and the config sidecar for an energy-curve preset.
pub fn run_curve_preset(name: &str, cfg: &SimConfig, out_dir: &Path) -> Result<PathBuf> {
    let csv = curves_csv(&curve_preset(name, cfg)?, 400)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display(), e))?;
    let path = out_dir.join("curves.csv");
    write_file(&path, &csv)?;
    write_file(&out_dir.join("config.json"), &sidecar(cfg))?;
    Ok(path)
}

pub const PLOT_KINDS: [&str; 6] = ["fig14", "fig14b", "fig15", "fig15b", "fig18", "fig18b"];

/// Whitespace-separated columns for gnuplot: the axis value, then mean and
/// std of the chosen metric for every series, in order of first
/// appearance. The first line is a `#` header. Kinds ending in `b` plot
/// stimulation efficiency, the others the stimulation ratio.
pub fn emit_plot_data(aggregate: &[AggregateRow], kind: &str) -> Result<String> {
    if !PLOT_KINDS.contains(&kind) {
        return Err(Error::Format(format!(
            "unknown plot kind '{kind}' (expected one of {})",
            PLOT_KINDS.join(", ")
        )));
    }
    let efficiency = kind.ends_with('b');
    let metric = if efficiency { "eta_stim_pct" } else { "gamma_stim" };
    let x_label = match aggregate.first() {
        Some(r) => SweepAxis::from_str(&r.axis)?.x_label(),
        None if kind.starts_with("fig15") => SweepAxis::NPatterns.x_label(),
        None => SweepAxis::SpikeRate.x_label(),
    };
    let mut series: Vec<&str> = Vec::new();
    let mut xs: Vec<f64> = Vec::new();
    for r in aggregate {
        if !series.contains(&r.series.as_str()) {
            series.push(&r.series);
        }
        if !xs.contains(&r.axis_value) {
            xs.push(r.axis_value);
        }
    }
    let mut out = format!("# {x_label}");
    for s in &series {
        let _ = write!(out, " mean_{metric}[{s}] std_{metric}[{s}]");
    }
    out.push('\n');
    for &x in &xs {
        let _ = write!(out, "{x}");
        for s in &series {
            let cell = aggregate.iter().find(|r| r.series == *s && r.axis_value == x);
            let (m, sd) = match cell {
                Some(r) if efficiency => (r.mean_eta_stim_pct, r.std_eta_stim_pct),
                Some(r) => (r.mean_gamma_stim, r.std_gamma_stim),
                None => (f64::NAN, f64::NAN),
            };
            let _ = write!(out, " {m} {sd}");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Column names and numeric rows of plot data.
pub fn parse_plot_data(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .ok_or_else(|| Error::Format("plot data lacks a '#' header".into()))?;
    let cols: Vec<String> = header.split_whitespace().map(String::from).collect();
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v = l
                .split_whitespace()
                .map(|x| x.parse::<f64>().map_err(|_| Error::Format(format!("bad number '{x}'"))))
                .collect::<Result<Vec<_>>>()?;
            if v.len() != cols.len() {
                return Err(Error::Format(format!(
                    "row has {} fields, header {}",
                    v.len(),
                    cols.len()
                )));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((cols, rows))
}
