//! Cross-module invariants that don't fit a single unit-test module:
//! taint monotonicity, trimming geometry, unexpected-deviation propagation,
//! matched-sequence order preservation, and pipeline determinism.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pvota_core::builder::{build_graph, build_lsg, BuildOptions};
use pvota_core::fixtures;
use pvota_core::frontend::{defuse_chains, parse_source, ParseConfig};
use pvota_core::graph::NodeKind;
use pvota_core::pattern::LocalPatternId;
use pvota_core::pipeline::{config_for_case, run_pipeline};

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture_opts() -> BuildOptions {
    let cfg = fixtures::fixture_config();
    BuildOptions {
        p_vars: cfg.p_vars.clone(),
        source_catalog: cfg.source_catalog.clone(),
        sink_catalog: cfg.sink_catalog.clone(),
        callback_catalog: cfg.callback_catalog.clone(),
    }
}

/// Random straight-line program over v0..vN with copies and sums.
fn random_program(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(4..=10);
    let mut lines = Vec::new();
    for i in 0..n {
        let rhs = if i == 0 || rng.gen_bool(0.3) {
            format!("{}.0", rng.gen_range(1..9))
        } else if rng.gen_bool(0.5) {
            format!("v{}", rng.gen_range(0..i))
        } else {
            format!("v{} + v{}", rng.gen_range(0..i), rng.gen_range(0..i))
        };
        lines.push(format!("v{i} = {rhs}"));
    }
    lines.join("\n") + "\n"
}

/// Adding a taint never removes a node or an edge from the forward graph.
#[test]
fn taint_monotonicity_superset() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..200 {
        let source = random_program(&mut rng);
        let prog = parse_source(&source, "gen.der", &ParseConfig::default()).expect("parse");
        let defuse = defuse_chains(&prog);
        let names: Vec<String> = prog.defined_names().into_iter().collect();
        let a = names[rng.gen_range(0..names.len())].clone();
        let b = names[rng.gen_range(0..names.len())].clone();
        let single = BuildOptions {
            p_vars: vec![a.clone()],
            ..Default::default()
        };
        let double = BuildOptions {
            p_vars: if a == b { vec![a.clone()] } else { vec![a.clone(), b.clone()] },
            ..Default::default()
        };
        let g1 = build_lsg(&prog, &defuse, &single).expect("lsg");
        let g2 = build_lsg(&prog, &defuse, &double).expect("lsg");
        let keys = |g: &pvota_core::graph::TaintGraph| -> BTreeSet<(String, Option<usize>)> {
            g.nodes
                .iter()
                .map(|n| (n.entity.name.clone(), n.stmt_id))
                .collect()
        };
        let edges = |g: &pvota_core::graph::TaintGraph| -> BTreeSet<(String, String)> {
            g.edges
                .iter()
                .map(|e| {
                    (
                        g.nodes[e.from].entity.name.clone(),
                        g.nodes[e.to].entity.name.clone(),
                    )
                })
                .collect()
        };
        assert!(
            keys(&g1).is_subset(&keys(&g2)),
            "node superset violated for taints {a}, {b} on\n{source}"
        );
        assert!(
            edges(&g1).is_subset(&edges(&g2)),
            "edge superset violated for taints {a}, {b} on\n{source}"
        );
    }
}

/// Every source satisfies both trimming conditions, and every retained USG
/// node lies on a directed source-to-p_var path.
#[test]
fn trimming_geometry_on_fixture() {
    let prog = parse_source(fixtures::PROGRAM_SOURCE, "program.der", &ParseConfig::default())
        .expect("parse");
    let defuse = defuse_chains(&prog);
    let (graph, _) = build_graph(&prog, &defuse, &fixture_opts()).expect("build");
    for &src in &graph.sources {
        assert!(
            graph.nodes[src].weight >= 1.0,
            "source {} has weight {}",
            graph.nodes[src].label,
            graph.nodes[src].weight
        );
        // every source reaches some virtual physical variable
        assert!(
            graph.p_vars.iter().any(|pv| graph.has_path(src, *pv)),
            "source {} reaches no p_var",
            graph.nodes[src].label
        );
    }
    // retained USG nodes sit between a source and a p_var (the two
    // p_vars assigned from planning constants are their own fragments)
    for n in &graph.nodes {
        if n.subgraph != pvota_core::graph::Subgraph::Usg {
            continue;
        }
        let from_source = graph.sources.iter().any(|s| graph.has_path(*s, n.id));
        let to_pvar = graph.p_vars.iter().any(|pv| graph.has_path(n.id, *pv));
        assert!(
            (from_source || graph.sources.contains(&n.id)) && to_pvar,
            "USG node {} is not on a source->p_var path",
            n.label
        );
    }
    // indirect connections: no USG edge enters a parameter of a function
    // that was never entered through a call on the backtrack walk
    assert!(graph.is_acyclic());
}

/// Downstream of an unexpected deviation, logged nodes keep reporting
/// evidence: LPTN2/LPTN3 when deviated, LPTN1 otherwise, never LPTN4.
#[test]
fn ued_propagation_never_drops_downstream_evidence() {
    let dir = fixtures_dir();
    for case in [3u8, 4] {
        let config = config_for_case(&dir.join(format!("case{case}")), None).expect("config");
        let artifacts = run_pipeline(&config).expect("pipeline");
        let ledger = &artifacts.ledger;
        let ued_nodes: Vec<usize> = ledger
            .locals
            .iter()
            .filter(|l| matches!(l.pattern, LocalPatternId::Lptn2 | LocalPatternId::Lptn3))
            .map(|l| l.node)
            .collect();
        assert!(!ued_nodes.is_empty(), "case {case} has unexpected nodes");
        let first_ued = ued_nodes[0];
        for l in &ledger.locals {
            if l.node == first_ued || !artifacts.graph.has_path(first_ued, l.node) {
                continue;
            }
            if l.observed.is_some() {
                assert_ne!(
                    l.pattern,
                    LocalPatternId::Lptn4,
                    "case {case}: logged node {} downstream of the unexpected deviation fell to LPTN4",
                    l.label
                );
            }
        }
    }
}

/// The matched instance ids are a strictly increasing subsequence of the
/// input event sequence, and local rows follow the display order.
#[test]
fn matched_sequence_order_preservation() {
    let dir = fixtures_dir();
    for case in 1..=4u8 {
        let config = config_for_case(&dir.join(format!("case{case}")), None).expect("config");
        let artifacts = run_pipeline(&config).expect("pipeline");
        let ids = &artifacts.ledger.matched_instance_ids;
        assert!(
            ids.windows(2).all(|w| w[0] < w[1]),
            "case {case}: ids {ids:?} not increasing"
        );
        let all_ids: BTreeSet<u64> = artifacts.events.events.iter().map(|e| e.id).collect();
        assert!(ids.iter().all(|i| all_ids.contains(i)));
        // local rows: numbered nodes first in ascending order
        let numbers: Vec<u32> = artifacts
            .ledger
            .locals
            .iter()
            .filter_map(|l| l.number)
            .collect();
        assert!(
            numbers.windows(2).all(|w| w[0] <= w[1]),
            "case {case}: rows out of order"
        );
    }
}

/// Identical config and fixtures produce identical verdict bytes.
#[test]
fn pipeline_determinism() {
    let dir = fixtures_dir();
    let config = config_for_case(&dir.join("case2"), None).expect("config");
    let a = run_pipeline(&config).expect("pipeline");
    let b = run_pipeline(&config).expect("pipeline");
    assert_eq!(a.verdict.to_json(), b.verdict.to_json());
    assert_eq!(a.ledger.to_json(), b.ledger.to_json());
    assert_eq!(a.graph.to_json(), b.graph.to_json());
}

/// The checked-in fixture tree matches regeneration with the default seed.
#[test]
fn shipped_fixtures_match_regeneration() {
    let dir = fixtures_dir();
    let fresh = tempfile::tempdir().unwrap();
    fixtures::write_all(fresh.path(), 42).unwrap();
    for rel in [
        "program.der",
        "baseline.csv",
        "config.json",
        "case1/field.csv",
        "case1/network.csv",
        "case1/app.log",
        "case1/events.csv",
        "case2/events.csv",
        "case3/app.log",
        "case4/events.csv",
    ] {
        let shipped = std::fs::read(dir.join(rel)).unwrap_or_else(|e| {
            panic!("shipped fixture {rel} unreadable: {e}");
        });
        let generated = std::fs::read(fresh.path().join(rel)).unwrap();
        assert_eq!(shipped, generated, "fixture {rel} drifted from the generator");
    }
}

/// The named virtual physical variables all appear in the fixture program,
/// and the graph carries exactly those ten as p_var nodes.
#[test]
fn fixture_p_var_inventory() {
    let prog = parse_source(fixtures::PROGRAM_SOURCE, "program.der", &ParseConfig::default())
        .expect("parse");
    let cfg = fixtures::fixture_config();
    let defined = prog.defined_names();
    for pv in &cfg.p_vars {
        assert!(defined.contains(pv), "{pv} missing from the fixture program");
    }
    let defuse = defuse_chains(&prog);
    let (graph, _) = build_graph(&prog, &defuse, &fixture_opts()).expect("build");
    let pv_labels: BTreeSet<String> = graph
        .p_vars
        .iter()
        .map(|id| graph.nodes[*id].label.clone())
        .collect();
    assert_eq!(pv_labels.len(), 10);
    assert_eq!(
        pv_labels,
        cfg.p_vars.iter().cloned().collect::<BTreeSet<_>>()
    );
    for &pv in &graph.p_vars {
        assert_eq!(graph.nodes[pv].kind, NodeKind::VirtualPhysical);
    }
}
