use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{debug, info};

use wioptnd::config::{config_from_pairs, load_pairs_str, parse_override};
use wioptnd::energy::{cycles_to_charge, cycles_to_discharge, energy_curve, Phase};
use wioptnd::error::{Error, Result};
use wioptnd::experiment::{
    emit_plot_data, parse_aggregate_csv, run_curve_preset, run_single, run_sweep, sweep_preset, OutputFormat, SweepSpec,
};
use wioptnd::model::{validate_config, SimConfig};
use wioptnd::photonics::{distance_grid, optics_table};
use wioptnd::protocols::{rank_layer_sequences, rank_table_csv, PatternBank, TransitionMatrix};
use wioptnd::sim::{replay, SimTrace};

#[derive(Parser)]
#[command(
    name = "wioptnd",
    version,
    about = "Ultrasound-charged optogenetic nanonetwork simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Config file (key = value text or a JSON sidecar).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set sim.device_count=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate once and write raster, trace, metrics and config sidecar.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        /// Use this pattern bank instead of generating one.
        #[arg(long)]
        bank: Option<PathBuf>,
    },
    /// Replicated parameter sweep from a sweep file or a preset.
    Sweep {
        /// Sweep file; `sweep.*` keys plus base config keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// fig14, fig15, fig18 (protocol sweeps) or fig7, fig8 (energy curves).
        #[arg(long)]
        preset: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Tissue optics table over a distance grid (mm).
    Optics {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        #[arg(long, default_value_t = 3.0)]
        to: f64,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Capacitor charging/discharging curve of the configured harvester.
    EnergyCurve {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// charging or discharging
        #[arg(long, default_value = "charging")]
        phase: String,
        /// Upper bound on samples per curve.
        #[arg(long, default_value_t = 400)]
        max_points: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ranked layer sequences of a transition matrix.
    RankTable {
        /// CSV matrix, rows presynaptic; defaults to the cortical column.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gnuplot columns from a sweep's aggregate.csv.
    PlotData {
        #[arg(long)]
        aggregate: PathBuf,
        /// fig14, fig14b, fig15, fig15b, fig18, fig18b
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recount a written trace and check it against its summary.
    Replay {
        /// Directory holding trace.jsonl and trace_summary.json.
        #[arg(long, default_value = "out")]
        dir: PathBuf,
    },
    /// Print every violated config invariant.
    Validate {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir.display(), e))?;
            }
            fs::write(p, text).map_err(|e| Error::io(p.display(), e))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// File pairs, then `--set` overrides, then `--seed`.
fn gather_pairs(
    file: Option<&Path>,
    overrides: &[String],
    seed: Option<u64>,
    mut pairs: Vec<(String, String)>,
) -> Result<Vec<(String, String)>> {
    if let Some(path) = file {
        pairs.extend(load_pairs_str(&read(path)?)?);
    }
    for o in overrides {
        pairs.push(parse_override(o)?);
    }
    if let Some(s) = seed {
        pairs.push(("sim.seed".into(), s.to_string()));
    }
    Ok(pairs)
}

fn resolve(a: &ConfigArgs) -> Result<SimConfig> {
    let pairs = gather_pairs(a.config.as_deref(), &a.overrides, a.seed, Vec::new())?;
    let cfg = config_from_pairs(&pairs)?;
    let v = validate_config(&cfg);
    if v.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::InvalidConfig(v))
    }
}

fn execute(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run { cfg, out, format, bank } => {
            let cfg = resolve(&cfg)?;
            let bank = bank.map(|p| PatternBank::from_json(&read(&p)?)).transpose()?;
            let o = run_single(&cfg, &out, bank, format.parse()?)?;
            let m = o.report;
            println!(
                "{}: spikes={} covered={} missed={} spurious={} emissions={} gamma_stim={} eta_stim_pct={}",
                cfg.protocol,
                m.total_spikes,
                m.n_covered,
                m.n_mis,
                m.n_spurious,
                m.n_emissions,
                m.gamma_stim.map_or("NaN".into(), |x| format!("{x:.4}")),
                m.eta_stim_pct.map_or("NaN".into(), |x| format!("{x:.2}")),
            );
            info!("artifacts written to {}", out.display());
        }
        Cmd::Sweep {
            config,
            preset,
            overrides,
            seed,
            replicates,
            jobs,
            out,
            format,
        } => {
            let format: OutputFormat = format.parse()?;
            let spec = match preset.as_deref() {
                Some(name) => {
                    let preset_pairs = vec![("sim.frequency_count".to_string(), "10".to_string())];
                    let pairs = gather_pairs(config.as_deref(), &overrides, seed, preset_pairs)?;
                    let base = config_from_pairs(&pairs)?;
                    match sweep_preset(name, base.clone(), replicates.unwrap_or(10))? {
                        Some(spec) => spec,
                        None => {
                            let v = validate_config(&base);
                            if !v.is_empty() {
                                return Err(Error::InvalidConfig(v));
                            }
                            let path = run_curve_preset(name, &base, &out)?;
                            println!("{name}: wrote {}", path.display());
                            return Ok(());
                        }
                    }
                }
                None => {
                    let path = config.ok_or_else(|| {
                        Error::InvalidConfig(vec![wioptnd::error::Violation::config(
                            "sweep",
                            "either --config or --preset is required",
                        )])
                    })?;
                    let mut text = read(&path)?;
                    for o in &overrides {
                        let (k, v) = parse_override(o)?;
                        text.push_str(&format!("\n{k} = {v}\n"));
                    }
                    if let Some(s) = seed {
                        text.push_str(&format!("\nsim.seed = {s}\n"));
                    }
                    let mut spec = SweepSpec::parse(&text)?;
                    if let Some(r) = replicates {
                        spec.replicates = r;
                    }
                    spec
                }
            };
            let v = validate_config(&spec.base);
            if !v.is_empty() {
                return Err(Error::InvalidConfig(v));
            }
            let res = run_sweep(&spec, &out, jobs.max(1), format)?;
            println!(
                "{}: {} runs, {} aggregate rows written to {}",
                spec.name,
                res.rows.len(),
                res.aggregate.len(),
                out.display()
            );
        }
        Cmd::Optics {
            cfg,
            from,
            to,
            step,
            format,
            out,
        } => {
            let cfg = resolve(&cfg)?;
            let rows = optics_table(&cfg.optics, &distance_grid(from, to, step)?)?;
            let text = match format.parse::<OutputFormat>()? {
                OutputFormat::Json => {
                    let mut s = serde_json::to_string_pretty(&rows)?;
                    s.push('\n');
                    s
                }
                OutputFormat::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    for r in &rows {
                        w.serialize(r)?;
                    }
                    String::from_utf8(w.into_inner().map_err(|e| Error::Format(e.to_string()))?).expect("csv is utf-8")
                }
            };
            emit(out.as_deref(), &text)?;
        }
        Cmd::EnergyCurve {
            cfg,
            phase,
            max_points,
            out,
        } => {
            let cfg = resolve(&cfg)?;
            let (phase, end) = match phase.as_str() {
                "charging" => (Phase::Charging, cycles_to_charge(&cfg.energy)?),
                "discharging" => (Phase::Discharging, cycles_to_discharge(&cfg.energy)?),
                other => return Err(Error::Format(format!("unknown phase '{other}'"))),
            };
            let stride = (end / max_points.max(1)).max(1);
            let mut w = csv::Writer::from_writer(Vec::new());
            for p in energy_curve(&cfg.energy, phase, stride)? {
                w.serialize(p)?;
            }
            let text =
                String::from_utf8(w.into_inner().map_err(|e| Error::Format(e.to_string()))?).expect("csv is utf-8");
            emit(out.as_deref(), &text)?;
        }
        Cmd::RankTable { matrix, out } => {
            let m = match matrix {
                Some(p) => TransitionMatrix::from_csv(&read(&p)?)?,
                None => TransitionMatrix::cortical_column(),
            };
            emit(out.as_deref(), &rank_table_csv(&rank_layer_sequences(&m)))?;
        }
        Cmd::PlotData { aggregate, kind, out } => {
            let rows = parse_aggregate_csv(&read(&aggregate)?)?;
            emit(out.as_deref(), &emit_plot_data(&rows, &kind)?)?;
        }
        Cmd::Replay { dir } => {
            let summary = read(&dir.join("trace_summary.json"))?;
            let path = dir.join("trace.jsonl");
            let file = fs::File::open(&path).map_err(|e| Error::io(path.display(), e))?;
            let trace = SimTrace::read(&summary, BufReader::new(file))?;
            let counts = replay(&trace)?;
            println!("{}", serde_json::to_string(&counts)?);
        }
        Cmd::Validate { cfg } => {
            let pairs = gather_pairs(cfg.config.as_deref(), &cfg.overrides, cfg.seed, Vec::new())?;
            let c = config_from_pairs(&pairs)?;
            let v = validate_config(&c);
            if !v.is_empty() {
                for x in &v {
                    println!("{x}");
                }
                return Err(Error::InvalidConfig(v));
            }
            println!("ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WIOPTND_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            debug!("exit code {}", e.exit_code());
            eprintln!("wioptnd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
