//! End-to-end orchestration: parse -> build -> prune -> ingest -> deviation
//! models -> pattern matching -> verdict, with every stage artifact kept for
//! inspection.

use std::path::Path;

use crate::builder::{build_graph, BuildOptions, TrimOutcome};
use crate::config::RunConfig;
use crate::deviation::{fit_all, ModelStore};
use crate::error::{io_err, PipelineError};
use crate::frontend::{defuse_chains, parse_source, ParseConfig, ScriptProgram};
use crate::graph::TaintGraph;
use crate::pattern::{run_matching, MatchLedger};
use crate::simplify::{simplify, PruneReport, PrunePolicy};
use crate::telemetry::{
    align, load_applog, load_baseline, load_channel, load_event_sequence, variables,
    AlignedTriple, Channel, ChannelRecord, EventSequence,
};
use crate::verdict::{classify, render_report, Verdict};

/// Every stage output of one pipeline run.
pub struct PipelineArtifacts {
    pub program: ScriptProgram,
    /// The graph as built (before pruning).
    pub full_graph: TaintGraph,
    pub trim: TrimOutcome,
    /// The simplified graph the analysis runs on.
    pub graph: TaintGraph,
    pub prune_report: PruneReport,
    pub models: ModelStore,
    pub records: Vec<ChannelRecord>,
    pub triples: Vec<AlignedTriple>,
    pub events: EventSequence,
    pub ledger: MatchLedger,
    pub verdict: Verdict,
    pub report_md: String,
}

fn read(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path.display().to_string(), e))
}

/// Parse and build the simplified taint graph for a config.
pub fn build_stage(
    config: &RunConfig,
) -> Result<(ScriptProgram, TaintGraph, TrimOutcome, TaintGraph, PruneReport), PipelineError> {
    let source = read(&config.source)?;
    let program = parse_source(
        &source,
        &config.source.display().to_string(),
        &ParseConfig::default(),
    )?;
    let defuse = defuse_chains(&program);
    let opts = BuildOptions {
        p_vars: config.p_vars.clone(),
        source_catalog: config.source_catalog.clone(),
        sink_catalog: config.sink_catalog.clone(),
        callback_catalog: config.callback_catalog.clone(),
    };
    let (full_graph, trim) = build_graph(&program, &defuse, &opts)?;
    let (graph, prune_report) = simplify(&full_graph, &PrunePolicy::default())?;
    Ok((program, full_graph, trim, graph, prune_report))
}

/// Load all telemetry for a config: channel records (d, n, a), aligned
/// triples for every variable, the event sequence, and the baseline models.
pub fn ingest_stage(
    config: &RunConfig,
) -> Result<(ModelStore, Vec<ChannelRecord>, Vec<AlignedTriple>, EventSequence), PipelineError> {
    // the benign baseline must never mix with incident records
    for incident in [&config.field, &config.network, &config.applog] {
        if incident == &config.baseline {
            return Err(PipelineError::Config(format!(
                "baseline file {} is also an incident input",
                config.baseline.display()
            )));
        }
    }
    let baseline = load_baseline(&config.baseline)?;
    let models = fit_all(&baseline, config.bins, config.min_baseline);
    let mut records = load_channel(&config.field, Channel::D, &config.rename_map)?;
    records.extend(load_channel(&config.network, Channel::N, &config.rename_map)?);
    records.extend(load_applog(&config.applog, &config.rename_map)?);
    let mut triples = Vec::new();
    for variable in variables(&records) {
        triples.extend(align(&records, &variable, config.align_window_ms)?);
    }
    let events = load_event_sequence(&config.events)?;
    Ok((models, records, triples, events))
}

/// Run the whole pipeline.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineArtifacts, PipelineError> {
    config
        .thresholds
        .validate()
        .map_err(PipelineError::Config)?;
    let (program, full_graph, trim, graph, prune_report) = build_stage(config)?;
    let (models, records, triples, events) = ingest_stage(config)?;
    let applog: Vec<ChannelRecord> = records
        .iter()
        .filter(|r| r.channel == Channel::A)
        .cloned()
        .collect();
    let ledger = run_matching(&graph, &triples, &events, &applog, &models, config)?;
    let verdict = classify(&ledger);
    let report_md = render_report(&verdict, &graph, &ledger);
    Ok(PipelineArtifacts {
        program,
        full_graph,
        trim,
        graph,
        prune_report,
        models,
        records,
        triples,
        events,
        ledger,
        verdict,
        report_md,
    })
}

/// Write all stage artifacts into `dir`.
pub fn write_artifacts(dir: &Path, artifacts: &PipelineArtifacts) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir.display().to_string(), e))?;
    let numbering = artifacts.graph.display_numbering();
    let files: Vec<(&str, String)> = vec![
        ("program.json", artifacts.program.to_json()),
        ("graph_full.json", artifacts.full_graph.to_json()),
        ("graph.json", artifacts.graph.to_json()),
        ("graph.dot", artifacts.graph.to_dot(&numbering)),
        ("prune_report.json", artifacts.prune_report.to_json()),
        ("models.json", artifacts.models.to_json()),
        ("matches.json", artifacts.ledger.to_json()),
        ("verdict.json", artifacts.verdict.to_json()),
        ("report.md", artifacts.report_md.clone()),
    ];
    for (name, content) in files {
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(|e| io_err(path.display().to_string(), e))?;
    }
    Ok(())
}

/// Resolve the config for a case directory: an explicit path wins, then
/// `PVOTA_CONFIG`, then `config.json` in the case directory or its parent.
pub fn config_for_case(
    case_dir: &Path,
    explicit: Option<&Path>,
) -> Result<RunConfig, PipelineError> {
    let chosen: Option<std::path::PathBuf> = explicit
        .map(|p| p.to_path_buf())
        .or_else(|| std::env::var_os("PVOTA_CONFIG").map(std::path::PathBuf::from))
        .or_else(|| {
            let local = case_dir.join("config.json");
            if local.exists() {
                return Some(local);
            }
            let parent = case_dir.parent().map(|p| p.join("config.json"));
            parent.filter(|p| p.exists())
        });
    let path = chosen.ok_or_else(|| {
        PipelineError::Config(format!(
            "no config found for case directory {} (looked for config.json beside it; set PVOTA_CONFIG or pass --config)",
            case_dir.display()
        ))
    })?;
    let cfg = RunConfig::load(&path)?;
    Ok(cfg.with_case_dir(case_dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn fixture_pipeline_runs_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        fixtures::write_all(dir.path(), 42).unwrap();
        let config = config_for_case(&dir.path().join("case1"), None).unwrap();
        let artifacts = run_pipeline(&config).unwrap();
        assert_eq!(artifacts.prune_report.before_count, 57);
        assert_eq!(artifacts.prune_report.after_count, 41);
        assert_eq!(artifacts.graph.sources.len(), 2);
        assert_eq!(artifacts.graph.sinks.len(), 1);
    }
}
