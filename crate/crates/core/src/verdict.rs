//! Root-cause synthesis from global and local pattern matches.
//!
//! Rule precedence, first match wins:
//! - R1: any unexpected local deviation (LPTN2/LPTN3) -> memory corruption.
//!   Program-side alteration outranks everything else.
//! - R2: field/network inconsistency (GPTN1/GPTN2) -> false data injection.
//! - R3: network/log inconsistency (GPTN3/GPTN4) -> suspected application
//!   log manipulation.
//! - R4: dispatch-side inconsistency (GPTN7/GPTN8) -> suspected dispatch
//!   manipulation.
//! - R5: consistent channels with deviation (GPTN5) and only benign local
//!   patterns -> system fault.
//! - R6: otherwise benign or inconclusive.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::deviation::Delta;
use crate::graph::TaintGraph;
use crate::pattern::{
    dominant_global, GlobalPatternId, LocalPatternId, MatchLedger,
};
use crate::telemetry::EventType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cause {
    SystemFault,
    Fdi,
    MemoryCorruption,
    SuspectedAppLogManipulation,
    SuspectedDispatchManipulation,
    BenignOrInconclusive,
}

impl Cause {
    pub fn as_str(&self) -> &'static str {
        match self {
            Cause::SystemFault => "SystemFault",
            Cause::Fdi => "FDI",
            Cause::MemoryCorruption => "MemoryCorruption",
            Cause::SuspectedAppLogManipulation => "SuspectedAppLogManipulation",
            Cause::SuspectedDispatchManipulation => "SuspectedDispatchManipulation",
            Cause::BenignOrInconclusive => "BenignOrInconclusive",
        }
    }

    /// Process exit code for scripting.
    pub fn exit_code(&self) -> i32 {
        match self {
            Cause::BenignOrInconclusive => 0,
            Cause::SystemFault => 10,
            Cause::Fdi => 20,
            Cause::MemoryCorruption => 30,
            Cause::SuspectedAppLogManipulation => 40,
            Cause::SuspectedDispatchManipulation => 41,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Confidence {
    Conclusive,
    Suspected,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleFiring {
    pub rule: String,
    pub fired: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub cause: Cause,
    pub confidence: Confidence,
    /// The reported (most severe) global pattern.
    pub dominant_global: Option<GlobalPatternId>,
    /// All matched global patterns with their variables.
    pub matched_global: Vec<(GlobalPatternId, String)>,
    /// Count per local pattern.
    pub local_summary: BTreeMap<String, usize>,
    pub matched_event_sequence: Vec<EventType>,
    /// Every rule, fired or suppressed, in precedence order.
    pub reasoning: Vec<RuleFiring>,
}

impl Verdict {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serialization")
    }
}

/// Apply the precedence rules to a match ledger.
pub fn classify(ledger: &MatchLedger) -> Verdict {
    let has_local = |p: LocalPatternId| ledger.locals.iter().any(|l| l.pattern == p);
    let has_global = |p: GlobalPatternId| ledger.globals.iter().any(|g| g.pattern == p);

    let ued = has_local(LocalPatternId::Lptn2) || has_local(LocalPatternId::Lptn3);
    let fdi = has_global(GlobalPatternId::Gptn1) || has_global(GlobalPatternId::Gptn2);
    let log_manip = has_global(GlobalPatternId::Gptn3) || has_global(GlobalPatternId::Gptn4);
    let dispatch_manip = has_global(GlobalPatternId::Gptn7) || has_global(GlobalPatternId::Gptn8);
    let gptn5 = has_global(GlobalPatternId::Gptn5);
    let locals_benign = ledger.locals.iter().all(|l| {
        matches!(
            l.pattern,
            LocalPatternId::Lptn1 | LocalPatternId::Lptn4 | LocalPatternId::Lptn5
        )
    });

    let mut reasoning = Vec::new();
    let mut decided: Option<(Cause, Confidence)> = None;
    let rule = |name: &'static str,
                    cond: bool,
                    cause: Cause,
                    conf: Confidence,
                    detail: String,
                    decided: &mut Option<(Cause, Confidence)>,
                    reasoning: &mut Vec<RuleFiring>| {
        let fires = cond && decided.is_none();
        if fires {
            *decided = Some((cause, conf));
        }
        reasoning.push(RuleFiring {
            rule: name.to_string(),
            fired: fires,
            detail: if cond && !fires {
                format!("{} (suppressed by an earlier rule)", detail)
            } else {
                detail
            },
        });
    };

    rule(
        "R1",
        ued,
        Cause::MemoryCorruption,
        Confidence::Conclusive,
        "an unexpected local deviation indicates program-side alteration".into(),
        &mut decided,
        &mut reasoning,
    );
    rule(
        "R2",
        fdi,
        Cause::Fdi,
        Confidence::Conclusive,
        "field/network inconsistency indicates injection on the communication path".into(),
        &mut decided,
        &mut reasoning,
    );
    rule(
        "R3",
        log_manip,
        Cause::SuspectedAppLogManipulation,
        Confidence::Suspected,
        "network/log inconsistency between cyberspace records".into(),
        &mut decided,
        &mut reasoning,
    );
    rule(
        "R4",
        dispatch_manip,
        Cause::SuspectedDispatchManipulation,
        Confidence::Suspected,
        "dispatch-side inconsistency between cyberspace records".into(),
        &mut decided,
        &mut reasoning,
    );
    rule(
        "R5",
        gptn5 && locals_benign,
        Cause::SystemFault,
        Confidence::Conclusive,
        "consistent channels with deviation and only benign local patterns".into(),
        &mut decided,
        &mut reasoning,
    );
    rule(
        "R6",
        true,
        Cause::BenignOrInconclusive,
        Confidence::Suspected,
        "no rule matched".into(),
        &mut decided,
        &mut reasoning,
    );

    let (cause, confidence) = decided.expect("R6 always fires");
    let mut local_summary: BTreeMap<String, usize> = BTreeMap::new();
    for l in &ledger.locals {
        *local_summary.entry(l.pattern.as_str().into()).or_insert(0) += 1;
    }
    Verdict {
        cause,
        confidence,
        dominant_global: dominant_global(&ledger.globals).map(|g| g.pattern),
        matched_global: ledger
            .globals
            .iter()
            .map(|g| (g.pattern, g.variable.clone()))
            .collect(),
        local_summary,
        matched_event_sequence: ledger.matched_sequence.clone(),
        reasoning,
    }
}

fn triple_text(p: GlobalPatternId) -> String {
    let (dn, na, dev, dispatch) = p.triple();
    format!(
        "<{}, {}, {}>{}",
        if dn { "C_dn" } else { "I_dn" },
        if na { "C_na" } else { "I_na" },
        if dev { "Y" } else { "N" },
        if dispatch { " (dispatch)" } else { "" }
    )
}

fn fmt_delta(d: Option<Delta>) -> String {
    d.map(|x| x.as_str().to_string()).unwrap_or_else(|| "?".into())
}

/// Render the human-readable analysis report.
pub fn render_report(verdict: &Verdict, graph: &TaintGraph, ledger: &MatchLedger) -> String {
    let mut s = String::new();
    s.push_str("# Root-cause analysis report\n\n");
    s.push_str(&format!(
        "Conclusion: **{}** ({})\n\n",
        verdict.cause.as_str(),
        match verdict.confidence {
            Confidence::Conclusive => "conclusive",
            Confidence::Suspected => "suspected",
        }
    ));
    if let Some(dom) = verdict.dominant_global {
        s.push_str(&format!(
            "Matched global pattern: {} = {}\n\n",
            dom.as_str(),
            triple_text(dom)
        ));
    } else {
        s.push_str("Matched global pattern: none (no complete channel triple)\n\n");
    }
    s.push_str(&format!(
        "Matched event sequence: {}\n\n",
        if ledger.matched_sequence.is_empty() {
            "none".to_string()
        } else {
            ledger.sequence_display()
        }
    ));

    s.push_str("## Global channel checks\n\n");
    if ledger.globals.is_empty() {
        s.push_str("No complete (field, network, log) triple was available.\n\n");
    } else {
        s.push_str("| variable | triple | direction | deviation |\n");
        s.push_str("|---|---|---|---|\n");
        for g in &ledger.globals {
            s.push_str(&format!(
                "| {} | {} | {:?} | {} |\n",
                g.variable,
                triple_text(g.pattern),
                g.direction,
                g.delta.as_str()
            ));
        }
        s.push('\n');
    }
    for inc in &ledger.incomplete_triples {
        s.push_str(&format!(
            "- incomplete triple for `{}` at t={} ({})\n",
            inc.variable, inc.t, inc.flag
        ));
    }
    if !ledger.incomplete_triples.is_empty() {
        s.push('\n');
    }

    if let Some(first_ued) = ledger.locals.iter().find(|l| {
        matches!(l.pattern, LocalPatternId::Lptn2 | LocalPatternId::Lptn3)
    }) {
        let num = first_ued
            .number
            .map(|k| format!("N{}", k))
            .unwrap_or_else(|| format!("#{}", first_ued.node));
        s.push_str(&format!(
            "First unexpected deviation: {} ({})\n\n",
            num, first_ued.label
        ));
    }
    s.push_str("## Node patterns along the selected paths\n\n");
    s.push_str("| node | entity | pattern | observed | expected | note |\n");
    s.push_str("|---|---|---|---|---|---|\n");
    if let Some(anchor) = ledger.globals.first().and_then(|g| g.node) {
        let num = ledger
            .numbering
            .get(&anchor)
            .map(|k| format!("N{}", k))
            .unwrap_or_else(|| format!("#{}", anchor));
        let dom = verdict
            .dominant_global
            .map(triple_text)
            .unwrap_or_else(|| "-".into());
        s.push_str(&format!(
            "| {} | {} | {} | - | - | response object; carries the global pattern |\n",
            num, graph.nodes[anchor].label, dom
        ));
    }
    for l in &ledger.locals {
        let num = l
            .number
            .map(|k| format!("N{}", k))
            .unwrap_or_else(|| format!("#{}", l.node));
        let note = match l.pattern {
            LocalPatternId::Lptn5 => "not applicable; call or object".to_string(),
            LocalPatternId::Lptn4 => "log not available; hard to estimate".to_string(),
            LocalPatternId::Lptn2 | LocalPatternId::Lptn3 => "unexpected deviation".to_string(),
            LocalPatternId::Lptn1 if l.estimated => "estimated through copy chain".to_string(),
            LocalPatternId::Lptn1 => "expected".to_string(),
        };
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            num,
            l.label,
            l.pattern.as_str(),
            fmt_delta(l.observed),
            fmt_delta(l.expected),
            note
        ));
    }
    s.push('\n');

    if !ledger.excluded_paths.is_empty() {
        s.push_str("## Excluded subpaths\n\n");
        let mut seen = std::collections::BTreeSet::new();
        for p in &ledger.excluded_paths {
            let label: Vec<String> = p
                .nodes
                .iter()
                .map(|n| {
                    ledger
                        .numbering
                        .get(n)
                        .map(|k| format!("N{}", k))
                        .unwrap_or_else(|| graph.nodes[*n].label.clone())
                })
                .collect();
            let line = format!(
                "- {} ({})\n",
                label.join(" -> "),
                p.reason.as_deref().unwrap_or("excluded")
            );
            if seen.insert(line.clone()) {
                s.push_str(&line);
            }
        }
        s.push('\n');
    }

    s.push_str("## Reasoning trace\n\n");
    for r in &verdict.reasoning {
        s.push_str(&format!(
            "- {} {}: {}\n",
            r.rule,
            if r.fired { "fired" } else { "not fired" },
            r.detail
        ));
    }
    s.push('\n');
    s.push_str(&format!(
        "Graph: {} nodes, {} edges, {} sources, {} sinks. DOT export accompanies this report.\n",
        graph.nodes.len(),
        graph.edges.len(),
        graph.sources.len(),
        graph.sinks.len()
    ));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::{Availability, GlobalMatch, LocalMatch, NodeClass};
    use crate::telemetry::Direction;

    fn global(p: GlobalPatternId, var: &str) -> GlobalMatch {
        GlobalMatch {
            pattern: p,
            variable: var.into(),
            t: 0,
            direction: Direction::Response,
            delta: Delta::None,
            dn_consistent: true,
            na_consistent: true,
            evidence: Vec::new(),
            node: None,
        }
    }

    fn local(p: LocalPatternId, node: usize) -> LocalMatch {
        LocalMatch {
            pattern: p,
            node,
            label: format!("n{node}"),
            number: None,
            class: NodeClass::Float,
            availability: Availability::Logged,
            observed: None,
            expected: None,
            estimated: false,
            unexpected: matches!(p, LocalPatternId::Lptn2 | LocalPatternId::Lptn3),
            evidence: Vec::new(),
            events: Vec::new(),
        }
    }

    fn ledger(globals: Vec<GlobalMatch>, locals: Vec<LocalMatch>) -> MatchLedger {
        MatchLedger {
            globals,
            incomplete_triples: Vec::new(),
            selected_paths: Vec::new(),
            excluded_paths: Vec::new(),
            locals,
            matched_instance_ids: Vec::new(),
            matched_sequence: Vec::new(),
            numbering: Default::default(),
            nothing_matched: false,
        }
    }

    #[test]
    fn gptn5_with_benign_locals_is_system_fault() {
        let l = ledger(
            vec![global(GlobalPatternId::Gptn5, "magnitude")],
            vec![
                local(LocalPatternId::Lptn1, 1),
                local(LocalPatternId::Lptn4, 2),
                local(LocalPatternId::Lptn5, 3),
            ],
        );
        let v = classify(&l);
        assert_eq!(v.cause, Cause::SystemFault);
        assert_eq!(v.confidence, Confidence::Conclusive);
        assert!(v.reasoning.iter().any(|r| r.rule == "R5" && r.fired));
        assert!(v.reasoning.iter().all(|r| r.rule != "R1" || !r.fired));
    }

    #[test]
    fn gptn1_is_fdi() {
        let l = ledger(
            vec![
                global(GlobalPatternId::Gptn6, "angle"),
                global(GlobalPatternId::Gptn1, "magnitude"),
            ],
            vec![local(LocalPatternId::Lptn1, 1)],
        );
        let v = classify(&l);
        assert_eq!(v.cause, Cause::Fdi);
        assert_eq!(v.dominant_global, Some(GlobalPatternId::Gptn1));
    }

    #[test]
    fn ued_local_is_memory_corruption() {
        let l = ledger(
            vec![global(GlobalPatternId::Gptn6, "angle")],
            vec![
                local(LocalPatternId::Lptn1, 1),
                local(LocalPatternId::Lptn2, 2),
                local(LocalPatternId::Lptn3, 3),
            ],
        );
        let v = classify(&l);
        assert_eq!(v.cause, Cause::MemoryCorruption);
    }

    #[test]
    fn r1_outranks_gptn5() {
        // a deviated-but-consistent global plus one unexpected local
        let l = ledger(
            vec![global(GlobalPatternId::Gptn5, "magnitude")],
            vec![local(LocalPatternId::Lptn2, 1)],
        );
        let v = classify(&l);
        assert_eq!(v.cause, Cause::MemoryCorruption);
        let r1 = v.reasoning.iter().find(|r| r.rule == "R1").unwrap();
        assert!(r1.fired);
        let r5 = v.reasoning.iter().find(|r| r.rule == "R5").unwrap();
        assert!(!r5.fired, "R5 cannot fire once an unexpected local exists");
    }

    #[test]
    fn gptn3_is_suspected_log_manipulation() {
        let l = ledger(vec![global(GlobalPatternId::Gptn3, "x")], vec![]);
        let v = classify(&l);
        assert_eq!(v.cause, Cause::SuspectedAppLogManipulation);
        assert_eq!(v.confidence, Confidence::Suspected);
    }

    #[test]
    fn gptn7_is_suspected_dispatch_manipulation() {
        let l = ledger(vec![global(GlobalPatternId::Gptn7, "x")], vec![]);
        assert_eq!(classify(&l).cause, Cause::SuspectedDispatchManipulation);
    }

    #[test]
    fn empty_matches_inconclusive() {
        let l = ledger(vec![], vec![]);
        let v = classify(&l);
        assert_eq!(v.cause, Cause::BenignOrInconclusive);
        assert_eq!(v.exit_code_check(), 0);
    }

    impl Verdict {
        fn exit_code_check(&self) -> i32 {
            self.cause.exit_code()
        }
    }

    #[test]
    fn permutation_invariant() {
        let globals = vec![
            global(GlobalPatternId::Gptn5, "a"),
            global(GlobalPatternId::Gptn1, "b"),
            global(GlobalPatternId::Gptn6, "c"),
        ];
        let locals = vec![
            local(LocalPatternId::Lptn1, 1),
            local(LocalPatternId::Lptn4, 2),
        ];
        let base = classify(&ledger(globals.clone(), locals.clone()));
        let mut g2 = globals.clone();
        g2.reverse();
        let mut l2 = locals.clone();
        l2.reverse();
        let permuted = classify(&ledger(g2, l2));
        assert_eq!(base.cause, permuted.cause);
        assert_eq!(base.dominant_global, permuted.dominant_global);
    }

    #[test]
    fn injecting_one_ued_flips_any_benign_set() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let benign_globals = [
            GlobalPatternId::Gptn5,
            GlobalPatternId::Gptn6,
        ];
        let benign_locals = [
            LocalPatternId::Lptn1,
            LocalPatternId::Lptn4,
            LocalPatternId::Lptn5,
        ];
        for _ in 0..200 {
            let globals: Vec<GlobalMatch> = (0..rng.gen_range(0..4))
                .map(|i| global(benign_globals[rng.gen_range(0..benign_globals.len())], &format!("v{i}")))
                .collect();
            let mut locals: Vec<LocalMatch> = (0..rng.gen_range(0..8))
                .map(|i| local(benign_locals[rng.gen_range(0..benign_locals.len())], i))
                .collect();
            let before = classify(&ledger(globals.clone(), locals.clone()));
            assert_ne!(before.cause, Cause::MemoryCorruption);
            let pos = if locals.is_empty() { 0 } else { rng.gen_range(0..=locals.len()) };
            locals.insert(pos.min(locals.len()), local(LocalPatternId::Lptn2, 1000));
            let after = classify(&ledger(globals, locals));
            assert_eq!(after.cause, Cause::MemoryCorruption);
        }
    }

    #[test]
    fn report_mentions_first_ued_node() {
        let mut lm = local(LocalPatternId::Lptn2, 17);
        lm.label = "reverse_value".into();
        lm.number = Some(17);
        let l = ledger(vec![global(GlobalPatternId::Gptn6, "angle")], vec![lm]);
        let v = classify(&l);
        let g = TaintGraph::default();
        let report = render_report(&v, &g, &l);
        assert!(report.contains("N17"));
        assert!(report.contains("reverse_value"));
        assert!(report.contains("unexpected deviation"));
    }
}
