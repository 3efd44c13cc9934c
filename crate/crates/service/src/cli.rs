//! Command-line interface.

use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, ensure, Context};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fa_core::analytics::extract_features;
use fa_core::analytics::training::{dataset_features, fit, synthetic_features};
use fa_core::analytics::{evaluate, spatial_stats, MlpModel, TrainConfig};
use fa_core::equipment::{
    collect, serve as serve_equipment, simulate_into, CollectOptions, EquipmentScenario, ServeOptions,
};
use fa_core::index::{DefectCase, VectorIndex};
use fa_core::pipeline::cases::{builtin_scenario, scenario_inputs, seed_history, BUILTIN_SCENARIOS};
use fa_core::pipeline::latency::summarize;
use fa_core::pipeline::report::FAReport;
use fa_core::pipeline::{
    run_ablation, run_pipeline, severity_for, CorrelationTable, FAState, Inputs, MapInput, RunOptions,
};
use fa_core::synth::{write_dataset, DatasetSpec, GeneratorParams};
use fa_core::telemetry::TelemetryLog;
use fa_core::{DefectClass, Severity, WaferMap};
use serde_json::json;
use tracing::info;

use crate::api::{serve as serve_http, AppState};
use crate::config::ServiceConfig;
use crate::runtime::{build_registry, simulate_builtin_cases, HISTORY_SEED};

#[derive(Parser, Debug)]
#[command(
    name = "fa",
    version,
    about = "Wafer failure analysis: data, models, telemetry and reports"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a synthetic wafer-map dataset with annotations.
    GenerateDataset {
        #[arg(long, default_value = "paper-synthetic")]
        preset: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the defect classifier.
    Train {
        /// Generated dataset directory; renders the preset in memory when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "full-9class")]
        preset: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long)]
        out: PathBuf,
        /// Write per-epoch losses and validation metrics as JSON.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Evaluate a trained classifier on the validation split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "full-9class")]
        preset: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        report: Format,
    },
    /// Run an equipment simulator over HSMS, or write its telemetry to a log.
    Simulate {
        /// Scenario file, or the name of a shipped case scenario.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Listen for a host on this port (0 picks one).
        #[arg(long, conflicts_with = "store")]
        port: Option<u16>,
        /// Write the scenario's telemetry into this log directory.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Simulated seconds per wall second.
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
        /// Stop after the scenario's tick count.
        #[arg(long)]
        bounded: bool,
    },
    /// Telemetry log operations.
    #[command(subcommand)]
    Telemetry(TelemetryCmd),
    /// Case index operations.
    #[command(subcommand)]
    Index(IndexCmd),
    /// Run one inspection through the pipeline without the server.
    Run(RunArgs),
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[command(flatten)]
        resources: ResourceArgs,
    },
    /// Run the case scenarios under the four modality conditions.
    Ablate {
        /// Number of shipped case scenarios to use (1-5).
        #[arg(long, default_value_t = 5)]
        cases: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        resources: ResourceArgs,
    },
    /// Per-node latency medians and shares.
    LatencyReport {
        /// Summarize report JSON files in this directory instead of running cases.
        #[arg(long)]
        reports: Option<PathBuf>,
        /// Rounds over the shipped case scenarios.
        #[arg(long, default_value_t = 3)]
        runs: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[command(flatten)]
        resources: ResourceArgs,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum TelemetryCmd {
    /// Connect to an equipment simulator and store what it reports.
    Ingest {
        #[arg(long)]
        connect: String,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long)]
        max_reports: Option<u64>,
    },
    /// Print stored events as JSON lines.
    Dump {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        equipment: String,
        /// RFC 3339 time or epoch milliseconds.
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
pub enum IndexCmd {
    /// Add a wafer map as a case.
    Add {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        case_id: String,
        #[arg(long)]
        class: DefectClass,
        #[arg(long)]
        severity: Option<Severity>,
        #[arg(long)]
        mechanism: Option<String>,
        #[arg(long, default_value = "")]
        narrative: String,
        #[arg(long, default_value = "unknown")]
        equipment: String,
        #[arg(long)]
        time: Option<String>,
    },
    /// Nearest cases for a wafer map.
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Case counts and dimension.
    Stats {
        #[arg(long)]
        index: PathBuf,
        /// Rewrite the log without superseded records first.
        #[arg(long)]
        compact: bool,
    },
    /// Fill the index with synthetic past cases.
    Seed {
        #[arg(long)]
        index: PathBuf,
        #[arg(long, default_value_t = 12)]
        per_class: usize,
        #[arg(long, default_value_t = HISTORY_SEED)]
        seed: u64,
    },
}

/// Where the pipeline's shared resources come from.
#[derive(Args, Debug, Default, Clone)]
pub struct ResourceArgs {
    /// Configuration file; `FA_*` variables override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub telemetry: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub sidecar: Option<String>,
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
}

impl ResourceArgs {
    pub fn resolve(&self) -> anyhow::Result<ServiceConfig> {
        let mut cfg = ServiceConfig::resolve(self.config.as_deref())?;
        if let Some(p) = &self.telemetry {
            cfg.telemetry_dir = Some(p.clone());
        }
        if let Some(p) = &self.index {
            cfg.index_path = Some(p.clone());
        }
        if let Some(p) = &self.model {
            cfg.model_path = Some(p.clone());
        }
        if let Some(u) = &self.sidecar {
            cfg.sidecar_url = Some(u.clone());
        }
        if let Some(p) = &self.report_dir {
            cfg.pipeline.report_dir = Some(p.clone());
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Wafer map PNG.
    #[arg(long, conflicts_with = "scenario")]
    pub map: Option<PathBuf>,
    /// Scenario whose inspection supplies the map and identifiers.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub equipment: Option<String>,
    #[arg(long)]
    pub lot: Option<String>,
    #[arg(long)]
    pub wafer: Option<String>,
    /// Inspection time, RFC 3339 or epoch milliseconds.
    #[arg(long)]
    pub time: Option<String>,
    #[arg(long)]
    pub no_telemetry: bool,
    #[arg(long)]
    pub no_retrieval: bool,
    /// Print the Markdown report instead of a summary.
    #[arg(long)]
    pub markdown: bool,
    #[command(flatten)]
    pub resources: ResourceArgs,
}

pub fn parse_time(s: &str) -> anyhow::Result<i64> {
    if let Ok(ms) = s.parse::<i64>() {
        return Ok(ms);
    }
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.timestamp_millis())
        .with_context(|| format!("{s:?} is neither RFC 3339 nor epoch milliseconds"))
}

pub fn load_scenario(spec: &str) -> anyhow::Result<EquipmentScenario> {
    if let Some(sc) = builtin_scenario(spec) {
        return Ok(sc);
    }
    Ok(EquipmentScenario::load(Path::new(spec))?)
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenerateDataset { preset, seed, out } => generate_dataset(&preset, seed, &out),
        Command::Train {
            data,
            preset,
            seed,
            epochs,
            lr,
            batch,
            out,
            metrics,
        } => {
            let (tr, va) = features(data.as_deref(), &preset, seed)?;
            let config = TrainConfig {
                epochs,
                learning_rate: lr,
                batch_size: batch,
                ..TrainConfig::default()
            };
            let trained = fit(&tr, &va, &config)?;
            trained.model.save(&out)?;
            let v = &trained.validation;
            println!(
                "trained {} epochs on {} samples; validation accuracy {:.4}, macro F1 {:.4}; model written to {}",
                trained.report.epoch_losses.len(),
                tr.len(),
                v.accuracy,
                v.macro_f1,
                out.display()
            );
            if let Some(p) = metrics {
                let body = json!({ "train": trained.report, "validation": trained.validation });
                std::fs::write(&p, serde_json::to_string_pretty(&body)?)?;
            }
            Ok(())
        }
        Command::Eval {
            model,
            data,
            preset,
            seed,
            report,
        } => {
            let model = MlpModel::load(&model)?;
            let (_, va) = features(data.as_deref(), &preset, seed)?;
            ensure!(!va.is_empty(), "validation split is empty");
            let r = evaluate(&model, &va.features, &va.labels)?;
            match report {
                Format::Text => print!("{}", r.render_text()),
                Format::Json => print_json(&r)?,
            }
            Ok(())
        }
        Command::Simulate {
            scenario,
            seed,
            port,
            store,
            time_scale,
            bounded,
        } => {
            let mut sc = load_scenario(&scenario)?;
            if let Some(s) = seed {
                sc.seed = s;
            }
            match (port, store) {
                (Some(port), None) => {
                    let listener = TcpListener::bind(("127.0.0.1", port))?;
                    println!("listening on {}", listener.local_addr()?);
                    std::io::stdout().flush()?;
                    let opts = ServeOptions {
                        time_scale,
                        bounded,
                        ..ServeOptions::default()
                    };
                    serve_equipment(&sc, listener, &opts)?;
                    Ok(())
                }
                (None, Some(dir)) => {
                    let log = TelemetryLog::open(&dir)?;
                    let n = simulate_into(&sc, &log)?;
                    println!("{n} events for {} written to {}", sc.equipment_id, dir.display());
                    Ok(())
                }
                _ => bail!("give --port to serve over HSMS or --store to write a telemetry log"),
            }
        }
        Command::Telemetry(cmd) => telemetry(cmd),
        Command::Index(cmd) => index(cmd),
        Command::Run(args) => run_one(args),
        Command::Serve { host, port, resources } => {
            let mut cfg = resources.resolve()?;
            if let Some(h) = host {
                cfg.host = h;
            }
            if let Some(p) = port {
                cfg.port = p;
            }
            serve(cfg)
        }
        Command::Ablate { cases, out, resources } => ablate(cases, &out, &resources),
        Command::LatencyReport {
            reports,
            runs,
            format,
            resources,
        } => latency_report(reports.as_deref(), runs, format, &resources),
    }
}

fn generate_dataset(preset: &str, seed: u64, out: &Path) -> anyhow::Result<()> {
    let spec = DatasetSpec::preset(preset)?;
    let manifest = write_dataset(&spec, &GeneratorParams::default(), seed, out)?;
    println!(
        "{} images ({} train, {} val) written to {}",
        manifest.total,
        manifest.train.len(),
        manifest.val.len(),
        out.display()
    );
    for (class, counts) in &manifest.classes {
        println!("  {class:<24} {:>4} train {:>4} val", counts.train, counts.val);
    }
    Ok(())
}

fn features(
    data: Option<&Path>,
    preset: &str,
    seed: u64,
) -> anyhow::Result<(
    fa_core::analytics::training::FeatureSet,
    fa_core::analytics::training::FeatureSet,
)> {
    Ok(match data {
        Some(dir) => dataset_features(dir)?,
        None => synthetic_features(&DatasetSpec::preset(preset)?, &GeneratorParams::default(), seed),
    })
}

fn telemetry(cmd: TelemetryCmd) -> anyhow::Result<()> {
    match cmd {
        TelemetryCmd::Ingest {
            connect: addr,
            store,
            duration,
            max_reports,
        } => {
            let log = TelemetryLog::open(&store)?;
            let opts = CollectOptions {
                duration: Duration::from_secs_f64(duration),
                max_reports,
                ..CollectOptions::default()
            };
            let addr = addr
                .parse()
                .or_else(|_| std::net::ToSocketAddrs::to_socket_addrs(&addr.as_str()).map(|mut a| a.next().unwrap()))
                .with_context(|| format!("bad address {addr}"))?;
            let s = collect(addr, Some(&log), &opts)?;
            println!(
                "{}: {} reports, {} alarms, {} transitions stored in {}",
                s.equipment_id,
                s.reports,
                s.alarms,
                s.transitions,
                store.display()
            );
            Ok(())
        }
        TelemetryCmd::Dump {
            store,
            equipment,
            from,
            to,
        } => {
            let log = TelemetryLog::open(&store)?;
            let start = from.as_deref().map(parse_time).transpose()?.unwrap_or(i64::MIN);
            let end = to.as_deref().map(parse_time).transpose()?.unwrap_or(i64::MAX);
            let mut out = std::io::stdout().lock();
            for e in log.query_window(&equipment, start, end) {
                writeln!(out, "{}", serde_json::to_string(&e)?)?;
            }
            Ok(())
        }
    }
}

fn index(cmd: IndexCmd) -> anyhow::Result<()> {
    match cmd {
        IndexCmd::Add {
            index,
            map,
            case_id,
            class,
            severity,
            mechanism,
            narrative,
            equipment,
            time,
        } => {
            let idx = VectorIndex::open(&index)?;
            let m = WaferMap::load(&map)?;
            let severity = severity.unwrap_or_else(|| severity_for(Some(class), spatial_stats(&m).defect_density));
            let timestamp_ms = match time {
                Some(t) => parse_time(&t)?,
                None => Utc::now().timestamp_millis(),
            };
            idx.upsert(DefectCase {
                case_id: case_id.clone(),
                embedding: extract_features(&m),
                defect_class: class,
                severity,
                root_cause_narrative: narrative,
                equipment_id: equipment,
                timestamp_ms,
                mechanism,
            })?;
            println!("added {case_id} ({class}, {severity}); {} cases", idx.len());
            Ok(())
        }
        IndexCmd::Query { index, map, k } => {
            let idx = VectorIndex::open(&index)?;
            let m = WaferMap::load(&map)?;
            for hit in idx.query_top_k(&extract_features(&m), k)? {
                println!(
                    "{}",
                    serde_json::to_string(&json!({
                        "case_id": hit.case.case_id,
                        "similarity": hit.similarity,
                        "defect_class": hit.case.defect_class,
                        "severity": hit.case.severity,
                        "mechanism": hit.case.mechanism,
                        "equipment_id": hit.case.equipment_id,
                    }))?
                );
            }
            Ok(())
        }
        IndexCmd::Stats { index, compact } => {
            let idx = VectorIndex::open(&index)?;
            if compact {
                idx.compact()?;
            }
            print_json(&idx.stats())
        }
        IndexCmd::Seed { index, per_class, seed } => {
            let idx = VectorIndex::open(&index)?;
            let n = seed_history(&idx, &CorrelationTable::builtin(), per_class, seed)?;
            println!("seeded {n} cases; {} total", idx.len());
            Ok(())
        }
    }
}

fn run_inputs(args: &RunArgs) -> anyhow::Result<Inputs> {
    let mut inputs = match (&args.map, &args.scenario) {
        (Some(map), None) => {
            let equipment = args
                .equipment
                .as_deref()
                .context("--equipment is required with --map")?;
            let time = args.time.as_deref().context("--time is required with --map")?;
            Inputs::new(
                MapInput::Path(map.clone()),
                equipment,
                args.lot.as_deref().unwrap_or("LOT-UNKNOWN"),
                args.wafer.as_deref().unwrap_or("W00"),
                parse_time(time)?,
            )
        }
        (None, Some(sc)) => {
            let sc = load_scenario(sc)?;
            scenario_inputs(&sc).with_context(|| format!("scenario {} has no [inspection] table", sc.equipment_id))?
        }
        _ => bail!("give --map or --scenario"),
    };
    if args.scenario.is_some() {
        if let Some(e) = &args.equipment {
            inputs.equipment_id = e.clone();
        }
        if let Some(l) = &args.lot {
            inputs.lot_id = l.clone();
        }
        if let Some(w) = &args.wafer {
            inputs.wafer_id = w.clone();
        }
        if let Some(t) = &args.time {
            inputs.inspection_time_ms = parse_time(t)?;
            inputs.timestamp_ms = inputs.inspection_time_ms;
        }
    }
    Ok(inputs)
}

fn run_one(args: RunArgs) -> anyhow::Result<()> {
    let inputs = run_inputs(&args)?;
    let cfg = args.resources.resolve()?;
    let registry = build_registry(&cfg, None)?;
    let options = RunOptions {
        disable_telemetry: args.no_telemetry,
        disable_retrieval: args.no_retrieval,
    };
    let state = run_pipeline(FAState::new(inputs), &registry, options);
    let report = state.report.as_ref().context("pipeline produced no report")?;
    if args.markdown {
        print!("{}", report.to_markdown());
    } else {
        print_summary(report);
    }
    if let Some(paths) = &state.report_paths {
        println!("report: {}", paths.json.display());
        println!("markdown: {}", paths.markdown.display());
    }
    Ok(())
}

pub fn print_summary(r: &FAReport) {
    println!("report_id: {}", r.report_id);
    match &r.classification {
        Some(c) => println!("class: {} (confidence {:.3})", c.defect_class, c.confidence),
        None => println!("class: UNAVAILABLE"),
    }
    match &r.severity {
        Some(s) => println!("severity: {} (yield impact {:.2}%)", s.level, s.yield_impact_pct),
        None => println!("severity: UNAVAILABLE"),
    }
    for (i, h) in r.hypotheses.iter().flatten().enumerate() {
        println!("hypothesis {}: {} (score {:.3})", i + 1, h.mechanism, h.score);
        for e in &h.evidence {
            println!("  [{:?}] {}", e.kind, e.detail);
        }
    }
    for (k, v) in r.recommendations.iter().flatten() {
        println!("recommend: {k}: {v}");
    }
    for e in &r.errors {
        println!("error [{}]: {}", e.node, e.message);
    }
}

fn serve(cfg: ServiceConfig) -> anyhow::Result<()> {
    let registry = build_registry(&cfg, None)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((cfg.host.as_str(), cfg.port)).await?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        std::io::stdout().flush()?;
        info!(%addr, "serving");
        let state = AppState::new(registry);
        tokio::select! {
            r = serve_http(listener, state) => r?,
            _ = tokio::signal::ctrl_c() => info!("shutting down"),
        }
        Ok(())
    })
}

/// Registry for the shipped case scenarios. Without a telemetry directory
/// the scenarios are simulated into `scratch`.
fn case_registry(resources: &ResourceArgs, scratch: &Path) -> anyhow::Result<fa_core::pipeline::ResourceRegistry> {
    let mut cfg = resources.resolve()?;
    cfg.pipeline.upsert = false;
    let mut registry = build_registry(&cfg, None)?;
    if cfg.telemetry_dir.is_none() {
        registry = registry.with_telemetry(simulate_builtin_cases(scratch)?);
    }
    Ok(registry)
}

fn case_list(n: usize) -> anyhow::Result<Vec<(String, Inputs)>> {
    ensure!(
        (1..=BUILTIN_SCENARIOS.len()).contains(&n),
        "--cases must be 1-{}",
        BUILTIN_SCENARIOS.len()
    );
    Ok(BUILTIN_SCENARIOS[..n]
        .iter()
        .map(|(name, _)| {
            let sc = builtin_scenario(name).expect("shipped scenario");
            (
                name.to_string(),
                scenario_inputs(&sc).expect("shipped scenarios have inspections"),
            )
        })
        .collect())
}

fn scratch_dir() -> anyhow::Result<PathBuf> {
    let dir = std::env::temp_dir().join(format!(
        "fa-scratch-{}-{}",
        std::process::id(),
        Utc::now().timestamp_micros()
    ));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn ablate(n: usize, out: &Path, resources: &ResourceArgs) -> anyhow::Result<()> {
    let cases = case_list(n)?;
    let scratch = scratch_dir()?;
    let result = (|| {
        let registry = case_registry(resources, &scratch)?;
        let runs = run_ablation(&registry, &cases);
        std::fs::create_dir_all(out)?;
        for run in &runs {
            let path = out.join(format!("{}.json", run.condition.name()));
            std::fs::write(&path, serde_json::to_string_pretty(run)? + "\n")?;
        }
        let mut table = String::from("| case |");
        for run in &runs {
            table.push_str(&format!(" {} |", run.condition.name()));
        }
        table.push_str("\n|---|");
        table.push_str(&"---|".repeat(runs.len()));
        table.push('\n');
        for (i, (case_id, _)) in cases.iter().enumerate() {
            table.push_str(&format!("| {case_id} |"));
            for run in &runs {
                let top = run.cases[i]
                    .hypotheses
                    .first()
                    .map(|h| format!("{} ({:.2})", h.mechanism, h.score))
                    .unwrap_or_else(|| "-".into());
                table.push_str(&format!(" {top} |"));
            }
            table.push('\n');
        }
        std::fs::write(out.join("summary.md"), &table)?;
        print!("{table}");
        Ok(())
    })();
    let _ = std::fs::remove_dir_all(&scratch);
    result
}

fn latency_report(reports: Option<&Path>, runs: usize, format: Format, resources: &ResourceArgs) -> anyhow::Result<()> {
    let latencies = match reports {
        Some(dir) => {
            let mut v = Vec::new();
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            paths.sort();
            for p in paths {
                let text = std::fs::read_to_string(&p)?;
                let r: FAReport = serde_json::from_str(&text).with_context(|| format!("{}", p.display()))?;
                v.push(r.node_latencies);
            }
            ensure!(!v.is_empty(), "no report JSON files in {}", dir.display());
            v
        }
        None => {
            ensure!(runs > 0, "--runs must be positive");
            let cases = case_list(BUILTIN_SCENARIOS.len())?;
            let scratch = scratch_dir()?;
            let result = case_registry(resources, &scratch).map(|registry| {
                (0..runs)
                    .flat_map(|_| cases.iter())
                    .map(|(_, inputs)| {
                        run_pipeline(FAState::new(inputs.clone()), &registry, RunOptions::default()).node_latencies
                    })
                    .collect::<Vec<_>>()
            });
            let _ = std::fs::remove_dir_all(&scratch);
            result?
        }
    };
    let summary = summarize(&latencies);
    match format {
        Format::Text => print!("{}", summary.render_text()),
        Format::Json => print_json(&summary)?,
    }
    Ok(())
}
