//! Command-line frontend for the taint-graph forensics pipeline.
//!
//! Subcommands mirror the pipeline stages so each artifact can be produced
//! and inspected on its own: `graph`, `prune`, `ingest`, `match`,
//! `classify`, the end-to-end `analyze`, and the `gen-fixture` generator.
//! The exit code of `analyze`/`classify` encodes the concluded cause class.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pvota_core::builder::{build_graph, BuildOptions};
use pvota_core::config::RunConfig;
use pvota_core::deviation::fit_all;
use pvota_core::fixtures;
use pvota_core::frontend::{defuse_chains, parse_source, ParseConfig};
use pvota_core::graph::TaintGraph;
use pvota_core::pattern::{run_matching, MatchLedger};
use pvota_core::pipeline::{config_for_case, run_pipeline, write_artifacts};
use pvota_core::simplify::{simplify, PrunePolicy};
use pvota_core::telemetry::{
    align, channel_to_csv, load_applog, load_baseline, load_channel, load_event_sequence,
    variables, Channel,
};
use pvota_core::verdict::{classify, render_report, Verdict};

#[derive(Parser)]
#[command(
    name = "pvota",
    about = "Differentiates undetected physical faults from cyberattacks in DER systems by matching deviation patterns over a virtual-physical-variable taint graph",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigOverrides {
    /// Run configuration file (falls back to $PVOTA_CONFIG).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Analyzed application source file.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Comma-separated virtual physical variable names.
    #[arg(long, value_delimiter = ',')]
    p_vars: Vec<String>,
    /// Benign baseline CSV.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Field-measurement CSV (channel d).
    #[arg(long)]
    field: Option<PathBuf>,
    /// Network-record CSV (channel n).
    #[arg(long)]
    network: Option<PathBuf>,
    /// Application log (channel a).
    #[arg(long)]
    applog: Option<PathBuf>,
    /// Incident event-sequence CSV.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Histogram bin count.
    #[arg(long)]
    bins: Option<usize>,
    /// High-deviation occupancy threshold.
    #[arg(long)]
    tau_h: Option<f64>,
    /// Moderate-deviation occupancy threshold.
    #[arg(long)]
    tau_m: Option<f64>,
    /// Low-deviation occupancy threshold.
    #[arg(long)]
    tau_l: Option<f64>,
    /// Analyst path override: entities the selected path must contain.
    #[arg(long, value_delimiter = ',')]
    path: Vec<String>,
}

impl ConfigOverrides {
    fn apply(&self, mut cfg: RunConfig) -> RunConfig {
        if let Some(p) = &self.source {
            cfg.source = p.clone();
        }
        if !self.p_vars.is_empty() {
            cfg.p_vars = self.p_vars.clone();
        }
        if let Some(p) = &self.baseline {
            cfg.baseline = p.clone();
        }
        if let Some(p) = &self.field {
            cfg.field = p.clone();
        }
        if let Some(p) = &self.network {
            cfg.network = p.clone();
        }
        if let Some(p) = &self.applog {
            cfg.applog = p.clone();
        }
        if let Some(p) = &self.events {
            cfg.events = p.clone();
        }
        if let Some(b) = self.bins {
            cfg.bins = b;
        }
        if let Some(t) = self.tau_h {
            cfg.thresholds.tau_h = t;
        }
        if let Some(t) = self.tau_m {
            cfg.thresholds.tau_m = t;
        }
        if let Some(t) = self.tau_l {
            cfg.thresholds.tau_l = t;
        }
        if !self.path.is_empty() {
            cfg.path_override = Some(self.path.clone());
        }
        cfg
    }

    fn load(&self) -> Result<RunConfig, String> {
        let path = self
            .config
            .clone()
            .or_else(|| std::env::var_os("PVOTA_CONFIG").map(PathBuf::from));
        let cfg = match path {
            Some(p) => RunConfig::load(&p).map_err(|e| e.to_string())?,
            None => RunConfig::default(),
        };
        Ok(self.apply(cfg))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and conclude the root cause.
    Analyze {
        /// Case directory holding field.csv, network.csv, app.log,
        /// events.csv (config.json is searched beside it).
        #[arg(long)]
        case: Option<PathBuf>,
        /// Directory for stage artifacts.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Copy of the simplified graph in DOT form.
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Copy of the verdict JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Build the dependency graph for a source file.
    Graph {
        /// Write the (unpruned) graph as DOT.
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Write the (unpruned) graph as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Prune a graph JSON artifact.
    Prune {
        /// Input graph JSON.
        #[arg(long)]
        graph: PathBuf,
        /// Pruning policy JSON (all operations enabled by default).
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Output graph JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Output prune report JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Output DOT.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Load and align telemetry; write the normalized record store.
    Ingest {
        /// Output JSON (records, aligned triples, events, models).
        #[arg(long)]
        json: Option<PathBuf>,
        /// Echo the sorted channel records as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Match patterns against a pruned graph artifact.
    Match {
        /// Simplified graph JSON.
        #[arg(long)]
        graph: PathBuf,
        /// Output match ledger JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Conclude a verdict from a match ledger artifact.
    Classify {
        /// Match ledger JSON.
        #[arg(long)]
        matches: PathBuf,
        /// Graph JSON for the report rendering.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Output verdict JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Output report markdown.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate the shipped fixtures (program, baseline, config, cases).
    GenFixture {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Single case to (re)generate; all four plus shared files when
        /// omitted.
        #[arg(long)]
        case: Option<u8>,
        /// Baseline jitter seed.
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn write_out(path: &Path, content: &str) -> Result<(), String> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| format!("{}: {}", dir.display(), e))?;
        }
    }
    std::fs::write(path, content).map_err(|e| format!("{}: {}", path.display(), e))
}

fn print_verdict(verdict: &Verdict) {
    println!("cause: {}", verdict.cause.as_str());
    if let Some(g) = verdict.dominant_global {
        println!("global pattern: {}", g.as_str());
    }
    let seq: Vec<&str> = verdict
        .matched_event_sequence
        .iter()
        .map(|e| e.as_str())
        .collect();
    println!("event sequence: {}", seq.join("->"));
    for r in &verdict.reasoning {
        if r.fired {
            println!("rule {}: {}", r.rule, r.detail);
        }
    }
}

fn run() -> Result<ExitCode, String> {
    let cli = Cli::parse();
    match cli.command {
        Command::Analyze {
            case,
            out,
            dot,
            json,
            overrides,
        } => {
            let cfg = match &case {
                Some(dir) => {
                    let base = config_for_case(dir, overrides.config.as_deref())
                        .map_err(|e| e.to_string())?;
                    overrides.apply(base)
                }
                None => overrides.load()?,
            };
            let artifacts = run_pipeline(&cfg).map_err(|e| e.to_string())?;
            for w in &artifacts.graph.warnings {
                eprintln!("warning: {}", w);
            }
            if let Some(dir) = &out {
                write_artifacts(dir, &artifacts).map_err(|e| e.to_string())?;
                println!("artifacts written to {}", dir.display());
            }
            if let Some(p) = &dot {
                let numbering = artifacts.graph.display_numbering();
                write_out(p, &artifacts.graph.to_dot(&numbering))?;
            }
            if let Some(p) = &json {
                write_out(p, &artifacts.verdict.to_json())?;
            }
            print_verdict(&artifacts.verdict);
            Ok(ExitCode::from(artifacts.verdict.cause.exit_code() as u8))
        }
        Command::Graph {
            dot,
            json,
            overrides,
        } => {
            let cfg = overrides.load()?;
            let text = std::fs::read_to_string(&cfg.source)
                .map_err(|e| format!("{}: {}", cfg.source.display(), e))?;
            let program = parse_source(
                &text,
                &cfg.source.display().to_string(),
                &ParseConfig::default(),
            )
            .map_err(|e| e.to_string())?;
            let defuse = defuse_chains(&program);
            let opts = BuildOptions {
                p_vars: cfg.p_vars.clone(),
                source_catalog: cfg.source_catalog.clone(),
                sink_catalog: cfg.sink_catalog.clone(),
                callback_catalog: cfg.callback_catalog.clone(),
            };
            let (graph, trim) = build_graph(&program, &defuse, &opts).map_err(|e| e.to_string())?;
            for w in &trim.warnings {
                eprintln!("warning: {}", w);
            }
            println!(
                "graph: {} nodes, {} edges, {} sources, {} sinks",
                graph.nodes.len(),
                graph.edges.len(),
                graph.sources.len(),
                graph.sinks.len()
            );
            if let Some(p) = &dot {
                write_out(p, &graph.to_dot(&graph.display_numbering()))?;
            }
            if let Some(p) = &json {
                write_out(p, &graph.to_json())?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Prune {
            graph,
            policy,
            json,
            report,
            dot,
        } => {
            let text = std::fs::read_to_string(&graph)
                .map_err(|e| format!("{}: {}", graph.display(), e))?;
            let g = TaintGraph::from_json(&text).map_err(|e| e.to_string())?;
            let pol: PrunePolicy = match &policy {
                Some(p) => {
                    let t = std::fs::read_to_string(p)
                        .map_err(|e| format!("{}: {}", p.display(), e))?;
                    serde_json::from_str(&t).map_err(|e| e.to_string())?
                }
                None => PrunePolicy::default(),
            };
            let (pruned, rep) = simplify(&g, &pol).map_err(|e| e.to_string())?;
            println!(
                "pruned {} -> {} nodes ({:.2}% reduction)",
                rep.before_count,
                rep.after_count,
                rep.reduction_ratio * 100.0
            );
            if let Some(p) = &json {
                write_out(p, &pruned.to_json())?;
            }
            if let Some(p) = &report {
                write_out(p, &rep.to_json())?;
            }
            if let Some(p) = &dot {
                write_out(p, &pruned.to_dot(&pruned.display_numbering()))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Ingest {
            json,
            csv,
            overrides,
        } => {
            let cfg = overrides.load()?;
            let baseline = load_baseline(&cfg.baseline).map_err(|e| e.to_string())?;
            let models = fit_all(&baseline, cfg.bins, cfg.min_baseline);
            let mut records =
                load_channel(&cfg.field, Channel::D, &cfg.rename_map).map_err(|e| e.to_string())?;
            records.extend(
                load_channel(&cfg.network, Channel::N, &cfg.rename_map)
                    .map_err(|e| e.to_string())?,
            );
            records
                .extend(load_applog(&cfg.applog, &cfg.rename_map).map_err(|e| e.to_string())?);
            let mut triples = Vec::new();
            for v in variables(&records) {
                triples
                    .extend(align(&records, &v, cfg.align_window_ms).map_err(|e| e.to_string())?);
            }
            let events = load_event_sequence(&cfg.events).map_err(|e| e.to_string())?;
            println!(
                "ingested {} records, {} aligned triples, {} events, {} models",
                records.len(),
                triples.len(),
                events.events.len(),
                models.models.len()
            );
            if let Some(p) = &json {
                let doc = serde_json::json!({
                    "records": records,
                    "triples": triples,
                    "events": events,
                    "models": models,
                });
                write_out(p, &serde_json::to_string_pretty(&doc).expect("ingest json"))?;
            }
            if let Some(p) = &csv {
                write_out(p, &channel_to_csv(&records))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Match {
            graph,
            json,
            overrides,
        } => {
            let cfg = overrides.load()?;
            let text = std::fs::read_to_string(&graph)
                .map_err(|e| format!("{}: {}", graph.display(), e))?;
            let g = TaintGraph::from_json(&text).map_err(|e| e.to_string())?;
            let baseline = load_baseline(&cfg.baseline).map_err(|e| e.to_string())?;
            let models = fit_all(&baseline, cfg.bins, cfg.min_baseline);
            let mut records =
                load_channel(&cfg.field, Channel::D, &cfg.rename_map).map_err(|e| e.to_string())?;
            records.extend(
                load_channel(&cfg.network, Channel::N, &cfg.rename_map)
                    .map_err(|e| e.to_string())?,
            );
            let applog = load_applog(&cfg.applog, &cfg.rename_map).map_err(|e| e.to_string())?;
            records.extend(applog.clone());
            let mut triples = Vec::new();
            for v in variables(&records) {
                triples
                    .extend(align(&records, &v, cfg.align_window_ms).map_err(|e| e.to_string())?);
            }
            let events = load_event_sequence(&cfg.events).map_err(|e| e.to_string())?;
            let ledger = run_matching(&g, &triples, &events, &applog, &models, &cfg)
                .map_err(|e| e.to_string())?;
            println!(
                "{} global matches, {} local matches, sequence {}",
                ledger.globals.len(),
                ledger.locals.len(),
                ledger.sequence_display()
            );
            if let Some(p) = &json {
                write_out(p, &ledger.to_json())?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Classify {
            matches,
            graph,
            json,
            report,
        } => {
            let text = std::fs::read_to_string(&matches)
                .map_err(|e| format!("{}: {}", matches.display(), e))?;
            let ledger: MatchLedger = serde_json::from_str(&text).map_err(|e| e.to_string())?;
            let verdict = classify(&ledger);
            let g = match &graph {
                Some(p) => {
                    let t = std::fs::read_to_string(p)
                        .map_err(|e| format!("{}: {}", p.display(), e))?;
                    TaintGraph::from_json(&t).map_err(|e| e.to_string())?
                }
                None => TaintGraph::default(),
            };
            if let Some(p) = &json {
                write_out(p, &verdict.to_json())?;
            }
            if let Some(p) = &report {
                write_out(p, &render_report(&verdict, &g, &ledger))?;
            }
            print_verdict(&verdict);
            Ok(ExitCode::from(verdict.cause.exit_code() as u8))
        }
        Command::GenFixture { out, case, seed } => {
            match case {
                Some(c) => {
                    fixtures::write_case(&out.join(format!("case{c}")), c)
                        .map_err(|e| e.to_string())?;
                    println!("case {} written under {}", c, out.display());
                }
                None => {
                    fixtures::write_all(&out, seed).map_err(|e| e.to_string())?;
                    println!("fixtures written to {}", out.display());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
