//! Pattern matching: incident-path selection, the eight global patterns over
//! aligned channel triples, and the five local patterns over selected path
//! nodes.
//!
//! Global matching adjudicates field/network inconsistency first, then
//! network/log inconsistency (with the dispatch-specific rows), then
//! deviation presence. A triple's deviation is scored over every channel
//! value that has a model; the triple degree is the maximum.
//!
//! Local matching walks the analyzed nodes in order. Each value node gets an
//! observed degree (application log value scored against its baseline) and a
//! propagated expectation carried through unlogged nodes: copies,
//! projections, and array references inherit their predecessor's degree;
//! multi-input arithmetic takes the maximum. A string composed from any
//! deviated upstream value is expected to be a novel string, so its
//! expectation saturates at H. A node is an unexpected deviation when its
//! observed degree exceeds the carried expectation, or when it deviates at
//! all downstream of an unexpected node.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::config::{EventBinding, RunConfig, Thresholds};
use crate::deviation::{score, Delta, ModelKind, ModelStore};
use crate::error::GraphError;
use crate::frontend::EntityCategory;
use crate::graph::{NodeKind, TaintGraph, ValueType};
use crate::telemetry::{AlignedTriple, ChannelRecord, Direction, EventSequence, EventType};

// ---------------------------------------------------------------------------
// Pattern identifiers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GlobalPatternId {
    Gptn1,
    Gptn2,
    Gptn3,
    Gptn4,
    Gptn5,
    Gptn6,
    Gptn7,
    Gptn8,
}

impl GlobalPatternId {
    pub fn as_str(&self) -> &'static str {
        match self {
            GlobalPatternId::Gptn1 => "GPTN1",
            GlobalPatternId::Gptn2 => "GPTN2",
            GlobalPatternId::Gptn3 => "GPTN3",
            GlobalPatternId::Gptn4 => "GPTN4",
            GlobalPatternId::Gptn5 => "GPTN5",
            GlobalPatternId::Gptn6 => "GPTN6",
            GlobalPatternId::Gptn7 => "GPTN7",
            GlobalPatternId::Gptn8 => "GPTN8",
        }
    }

    /// (dn consistent, na consistent, deviation exists, dispatch marker)
    pub fn triple(&self) -> (bool, bool, bool, bool) {
        match self {
            GlobalPatternId::Gptn1 => (false, true, true, false),
            GlobalPatternId::Gptn2 => (false, true, false, false),
            GlobalPatternId::Gptn3 => (true, false, true, false),
            GlobalPatternId::Gptn4 => (true, false, false, false),
            GlobalPatternId::Gptn5 => (true, true, true, false),
            GlobalPatternId::Gptn6 => (true, true, false, false),
            GlobalPatternId::Gptn7 => (true, false, true, true),
            GlobalPatternId::Gptn8 => (true, false, false, true),
        }
    }

    /// Severity order for picking the reported (dominant) global pattern:
    /// field/network inconsistency, then log inconsistency, then the
    /// dispatch rows, then deviation-only, then all-quiet.
    pub fn severity(&self) -> u8 {
        match self {
            GlobalPatternId::Gptn1 => 0,
            GlobalPatternId::Gptn2 => 1,
            GlobalPatternId::Gptn3 => 2,
            GlobalPatternId::Gptn4 => 3,
            GlobalPatternId::Gptn7 => 4,
            GlobalPatternId::Gptn8 => 5,
            GlobalPatternId::Gptn5 => 6,
            GlobalPatternId::Gptn6 => 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LocalPatternId {
    Lptn1,
    Lptn2,
    Lptn3,
    Lptn4,
    Lptn5,
}

impl LocalPatternId {
    pub fn as_str(&self) -> &'static str {
        match self {
            LocalPatternId::Lptn1 => "LPTN1",
            LocalPatternId::Lptn2 => "LPTN2",
            LocalPatternId::Lptn3 => "LPTN3",
            LocalPatternId::Lptn4 => "LPTN4",
            LocalPatternId::Lptn5 => "LPTN5",
        }
    }
}

// ---------------------------------------------------------------------------
// Partition functions (total over their input spaces)
// ---------------------------------------------------------------------------

/// Map one aligned-triple observation to its unique global pattern.
pub fn classify_triple(
    dn_consistent: bool,
    na_consistent: bool,
    deviated: bool,
    direction: Direction,
) -> GlobalPatternId {
    if !dn_consistent {
        // field/network mismatch is adjudicated first
        if deviated {
            GlobalPatternId::Gptn1
        } else {
            GlobalPatternId::Gptn2
        }
    } else if !na_consistent {
        if direction == Direction::Dispatch {
            if deviated {
                GlobalPatternId::Gptn7
            } else {
                GlobalPatternId::Gptn8
            }
        } else if deviated {
            GlobalPatternId::Gptn3
        } else {
            GlobalPatternId::Gptn4
        }
    } else if deviated {
        GlobalPatternId::Gptn5
    } else {
        GlobalPatternId::Gptn6
    }
}

/// Node classification for local matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeClass {
    /// Function call or object: needed to maintain analytical flow.
    Others,
    Float,
    Str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Availability {
    Logged,
    /// No log, but a single-predecessor copy/projection chain makes the
    /// degree estimable.
    Estimable,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Expected,
    Unexpected,
}

/// Map one node observation to its unique local pattern.
pub fn classify_local(class: NodeClass, availability: Availability, relation: Relation) -> LocalPatternId {
    match class {
        NodeClass::Others => LocalPatternId::Lptn5,
        NodeClass::Float | NodeClass::Str => match availability {
            Availability::Unknown => LocalPatternId::Lptn4,
            Availability::Estimable => LocalPatternId::Lptn1,
            Availability::Logged => match relation {
                Relation::Expected => LocalPatternId::Lptn1,
                Relation::Unexpected => match class {
                    NodeClass::Float => LocalPatternId::Lptn2,
                    NodeClass::Str => LocalPatternId::Lptn3,
                    NodeClass::Others => unreachable!(),
                },
            },
        },
    }
}

// ---------------------------------------------------------------------------
// Global matching
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalMatch {
    pub pattern: GlobalPatternId,
    pub variable: String,
    pub t: i64,
    pub direction: Direction,
    pub delta: Delta,
    pub dn_consistent: bool,
    pub na_consistent: bool,
    pub evidence: Vec<ChannelRecord>,
    /// Response-object node the match is anchored to.
    pub node: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncompleteTriple {
    pub variable: String,
    pub t: i64,
    pub flag: String,
}

pub struct GlobalOutcome {
    pub matches: Vec<GlobalMatch>,
    pub incomplete: Vec<IncompleteTriple>,
}

/// Match every complete aligned triple against the global pattern table.
pub fn match_global(
    triples: &[AlignedTriple],
    models: &ModelStore,
    thresholds: &Thresholds,
    float_tol: f64,
    anchor_node: Option<usize>,
) -> GlobalOutcome {
    let mut out = GlobalOutcome {
        matches: Vec::new(),
        incomplete: Vec::new(),
    };
    for triple in triples {
        if !triple.complete() {
            out.incomplete.push(IncompleteTriple {
                variable: triple.variable.clone(),
                t: triple.t,
                flag: triple.flag.clone().unwrap_or_else(|| "incomplete".into()),
            });
            continue;
        }
        let d = triple.d.as_ref().expect("complete");
        let n = triple.n.as_ref().expect("complete");
        let a = triple.a.as_ref().expect("complete");
        let dn = d.v.consistent_with(&n.v, float_tol);
        let na = n.v.consistent_with(&a.v, float_tol);
        // deviation: every channel value with a model contributes; the
        // triple carries the maximum degree
        let mut delta = Delta::None;
        for rec in [d, n, a] {
            if let Some(model) = models.get(&rec.variable) {
                if let Ok(s) = score(model, &rec.v, thresholds) {
                    delta = delta.max(s.degree);
                }
            }
        }
        let pattern = classify_triple(dn, na, delta > Delta::None, triple.direction);
        out.matches.push(GlobalMatch {
            pattern,
            variable: triple.variable.clone(),
            t: triple.t,
            direction: triple.direction,
            delta,
            dn_consistent: dn,
            na_consistent: na,
            evidence: vec![d.clone(), n.clone(), a.clone()],
            node: anchor_node,
        });
    }
    out
}

/// The reported global pattern: most severe first, ties by variable name.
pub fn dominant_global(matches: &[GlobalMatch]) -> Option<&GlobalMatch> {
    matches
        .iter()
        .min_by_key(|m| (m.pattern.severity(), m.variable.clone()))
}

// ---------------------------------------------------------------------------
// Path selection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectedPath {
    pub nodes: Vec<usize>,
    pub score: usize,
    pub selected: bool,
    /// Exclusion reason for paths that were not selected.
    pub reason: Option<String>,
}

pub struct SelectionOutcome {
    pub selected: Vec<SelectedPath>,
    pub excluded: Vec<SelectedPath>,
    /// No path produced any event; all paths were retained.
    pub nothing_matched: bool,
}

/// Event types a node can produce under the configured binding map.
fn producible(
    graph: &TaintGraph,
    node: usize,
    map: &BTreeMap<String, EventBinding>,
) -> BTreeSet<EventType> {
    let n = &graph.nodes[node];
    let mut out = BTreeSet::new();
    for (ev, binding) in map {
        let Some(ty) = EventType::parse(ev) else { continue };
        let mut hit = false;
        for kind in &binding.kinds {
            hit |= match kind.as_str() {
                "source" => n.kind == NodeKind::Source,
                "sink" => n.kind == NodeKind::Sink,
                "p_var" => graph.p_vars.contains(&node),
                "call" => n.kind == NodeKind::FunctionCall,
                "object" => n.entity.category == EntityCategory::ObjectCtor,
                _ => false,
            };
        }
        for name in &binding.names {
            hit |= n.label == *name || n.entity.name == *name;
        }
        if hit {
            out.insert(ty);
        }
    }
    out
}

/// Longest order-preserving subsequence of the event instances producible
/// along an ordered node list (repeats on one node allowed). Returns the
/// score and the matched (event index, node) assignment.
fn sequence_match(
    events: &EventSequence,
    nodes: &[usize],
    produces: &BTreeMap<usize, BTreeSet<EventType>>,
) -> (usize, Vec<(usize, usize)>) {
    let k = events.events.len();
    let m = nodes.len();
    if k == 0 || m == 0 {
        return (0, Vec::new());
    }
    let mut dp = vec![vec![0usize; m + 1]; k + 1];
    for i in 1..=k {
        let ty = events.events[i - 1].ty;
        for j in 1..=m {
            let matched = produces
                .get(&nodes[j - 1])
                .map(|s| s.contains(&ty))
                .unwrap_or(false);
            let take = dp[i - 1][j] + usize::from(matched);
            dp[i][j] = dp[i][j - 1].max(take);
        }
    }
    // traceback, preferring matches at the latest frontier node
    let mut assignment = Vec::new();
    let (mut i, mut j) = (k, m);
    while i > 0 && j > 0 {
        let ty = events.events[i - 1].ty;
        let matched = produces
            .get(&nodes[j - 1])
            .map(|s| s.contains(&ty))
            .unwrap_or(false);
        if matched && dp[i][j] == dp[i - 1][j] + 1 {
            assignment.push((i - 1, nodes[j - 1]));
            i -= 1;
        } else if dp[i][j] == dp[i][j - 1] {
            j -= 1;
        } else {
            i -= 1;
        }
    }
    assignment.reverse();
    (dp[k][m], assignment)
}

/// Enumerate root-to-sink paths, score each against the event sequence, and
/// select the maximal-score set (ties all retained). An analyst override
/// replaces scoring: paths containing every named entity are selected.
pub fn select_paths(
    graph: &TaintGraph,
    events: &EventSequence,
    map: &BTreeMap<String, EventBinding>,
    path_override: Option<&[String]>,
    max_paths: usize,
) -> Result<SelectionOutcome, GraphError> {
    let mut produces = BTreeMap::new();
    for n in &graph.nodes {
        produces.insert(n.id, producible(graph, n.id, map));
    }
    let mut paths: Vec<Vec<usize>> = Vec::new();
    let mut stack: Vec<Vec<usize>> = graph.roots().into_iter().map(|r| vec![r]).collect();
    while let Some(path) = stack.pop() {
        let last = *path.last().expect("non-empty path");
        if graph.sinks.contains(&last) {
            paths.push(path);
            if paths.len() > max_paths {
                return Err(GraphError::PathExplosion(max_paths));
            }
            continue;
        }
        let succs: Vec<usize> = graph.successors(last).collect();
        if succs.is_empty() {
            continue; // dead end; not a root-to-sink path
        }
        for s in succs {
            let mut next = path.clone();
            next.push(s);
            stack.push(next);
        }
    }
    paths.sort();

    if let Some(required) = path_override {
        let mut selected = Vec::new();
        let mut excluded = Vec::new();
        for path in paths {
            let has_all = required.iter().all(|name| {
                path.iter().any(|&n| {
                    graph.nodes[n].label == *name || graph.nodes[n].entity.name == *name
                })
            });
            let (score, _) = sequence_match(events, &path, &produces);
            if has_all {
                selected.push(SelectedPath {
                    nodes: path,
                    score,
                    selected: true,
                    reason: None,
                });
            } else {
                excluded.push(SelectedPath {
                    nodes: path,
                    score,
                    selected: false,
                    reason: Some("analyst override: required entity not on path".into()),
                });
            }
        }
        let nothing = selected.is_empty();
        if nothing {
            // fall back to retaining everything, flagged
            for p in &mut excluded {
                p.selected = true;
            }
            return Ok(SelectionOutcome {
                selected: std::mem::take(&mut excluded),
                excluded: Vec::new(),
                nothing_matched: true,
            });
        }
        return Ok(SelectionOutcome {
            selected,
            excluded,
            nothing_matched: false,
        });
    }

    let scored: Vec<(usize, Vec<usize>)> = paths
        .into_iter()
        .map(|p| {
            let (s, _) = sequence_match(events, &p, &produces);
            (s, p)
        })
        .collect();
    let best = scored.iter().map(|(s, _)| *s).max().unwrap_or(0);
    let mut selected = Vec::new();
    let mut excluded = Vec::new();
    for (score, nodes) in scored {
        if score == best {
            selected.push(SelectedPath {
                nodes,
                score,
                selected: true,
                reason: None,
            });
        } else {
            excluded.push(SelectedPath {
                nodes,
                score,
                selected: false,
                reason: Some(format!(
                    "event-sequence score {} below the maximum {}",
                    score, best
                )),
            });
        }
    }
    Ok(SelectionOutcome {
        selected,
        excluded,
        nothing_matched: best == 0,
    })
}

// ---------------------------------------------------------------------------
// Local matching
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalMatch {
    pub pattern: LocalPatternId,
    pub node: usize,
    pub label: String,
    /// Display number in the simplified graph, when the node is numbered.
    pub number: Option<u32>,
    pub class: NodeClass,
    pub availability: Availability,
    pub observed: Option<Delta>,
    pub expected: Option<Delta>,
    /// Degree was estimated through a copy/projection chain.
    pub estimated: bool,
    pub unexpected: bool,
    pub evidence: Vec<ChannelRecord>,
    /// Event types bound to this node by the matched sequence.
    pub events: Vec<EventType>,
}

/// Everything the verdict stage needs from pattern matching.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchLedger {
    pub globals: Vec<GlobalMatch>,
    pub incomplete_triples: Vec<IncompleteTriple>,
    pub selected_paths: Vec<SelectedPath>,
    pub excluded_paths: Vec<SelectedPath>,
    pub locals: Vec<LocalMatch>,
    /// Matched event instance ids, in order.
    pub matched_instance_ids: Vec<u64>,
    /// Matched event types with adjacent duplicates collapsed.
    pub matched_sequence: Vec<EventType>,
    /// Display numbering of the simplified graph.
    pub numbering: BTreeMap<usize, u32>,
    pub nothing_matched: bool,
}

impl MatchLedger {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ledger serialization")
    }

    pub fn sequence_display(&self) -> String {
        self.matched_sequence
            .iter()
            .map(|t| t.as_str())
            .collect::<Vec<_>>()
            .join("->")
    }
}

/// Analyzed node set: union of selected paths plus bare side-effect calls
/// hanging off them (they maintain the analytical flow).
fn analyzed_nodes(graph: &TaintGraph, selected: &[SelectedPath]) -> BTreeSet<usize> {
    let mut set: BTreeSet<usize> = selected.iter().flat_map(|p| p.nodes.clone()).collect();
    let mut extra = Vec::new();
    for &n in &set {
        for s in graph.successors(n) {
            let node = &graph.nodes[s];
            if node.kind == NodeKind::FunctionCall && graph.out_degree(s) == 0 {
                extra.push(s);
            }
        }
    }
    set.extend(extra);
    set
}

struct DeltaCtx<'a> {
    graph: &'a TaintGraph,
    obs: BTreeMap<usize, Option<Delta>>,
    carry: BTreeMap<usize, Option<Delta>>,
    anchor: Option<(usize, Delta)>,
}

impl<'a> DeltaCtx<'a> {
    /// Effective degree: observed when known, else the carried expectation.
    fn eff(&mut self, n: usize) -> Option<Delta> {
        if let Some(o) = self.obs.get(&n).copied().flatten() {
            return Some(o);
        }
        self.carry(n)
    }

    /// Carried expectation: anchored at the response object, passed through
    /// unlogged nodes, max over known inputs.
    fn carry(&mut self, n: usize) -> Option<Delta> {
        if let Some(c) = self.carry.get(&n) {
            return *c;
        }
        self.carry.insert(n, None); // cycle guard; graph is acyclic
        if let Some((anchor, delta)) = self.anchor {
            if anchor == n {
                self.carry.insert(n, Some(delta));
                return Some(delta);
            }
        }
        let preds: Vec<usize> = self.graph.predecessors(n).collect();
        let mut best: Option<Delta> = None;
        for p in preds {
            if let Some(e) = self.eff(p) {
                best = Some(best.map_or(e, |b| b.max(e)));
            }
        }
        self.carry.insert(n, best);
        best
    }
}

/// Expectation used for the comparison at one node: a string composed from
/// any deviated upstream value is expected to be novel (H).
fn comparison_expectation(carry: Option<Delta>, class: NodeClass) -> Option<Delta> {
    match (carry, class) {
        (Some(Delta::None), _) | (None, _) => carry,
        (Some(_), NodeClass::Str) => Some(Delta::H),
        (Some(c), _) => Some(c),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn match_local(
    graph: &TaintGraph,
    selected: &[SelectedPath],
    applog: &[ChannelRecord],
    models: &ModelStore,
    thresholds: &Thresholds,
    response_node: Option<usize>,
    anchor_delta: Delta,
    numbering: &BTreeMap<usize, u32>,
) -> Vec<LocalMatch> {
    let analyzed = analyzed_nodes(graph, selected);

    // last application-log record per variable name
    let mut last_log: BTreeMap<&str, &ChannelRecord> = BTreeMap::new();
    for r in applog {
        last_log.insert(r.variable.as_str(), r);
    }

    // observed degree per analyzed node
    let mut obs: BTreeMap<usize, Option<Delta>> = BTreeMap::new();
    let mut evidence: BTreeMap<usize, Vec<ChannelRecord>> = BTreeMap::new();
    let mut class_of: BTreeMap<usize, NodeClass> = BTreeMap::new();
    for &id in &analyzed {
        let node = &graph.nodes[id];
        let is_others = node.kind == NodeKind::FunctionCall
            || node.kind == NodeKind::Sink
            || node.kind == NodeKind::Source
            || node.entity.category == EntityCategory::ObjectCtor;
        let record = last_log
            .get(node.label.as_str())
            .or_else(|| last_log.get(node.entity.name.as_str()))
            .copied();
        let model = models
            .get(&node.label)
            .or_else(|| models.get(&node.entity.name));
        let class = if is_others {
            NodeClass::Others
        } else {
            match model.map(|m| &m.kind) {
                Some(ModelKind::Float { .. }) => NodeClass::Float,
                Some(ModelKind::Str { .. }) => NodeClass::Str,
                None => match node.value_type {
                    ValueType::S => NodeClass::Str,
                    _ => NodeClass::Float,
                },
            }
        };
        class_of.insert(id, class);
        let observed = match (record, model) {
            (Some(r), Some(m)) => match score(m, &r.v, thresholds) {
                Ok(s) => {
                    evidence.entry(id).or_default().push(r.clone());
                    Some(s.degree)
                }
                Err(_) => None,
            },
            _ => None,
        };
        obs.insert(id, observed);
    }

    let mut ctx = DeltaCtx {
        graph,
        obs: obs.clone(),
        carry: BTreeMap::new(),
        anchor: response_node.map(|n| (n, anchor_delta)),
    };

    // walk in display order: numbered nodes first, then the rest by id
    let mut order: Vec<usize> = analyzed.iter().copied().collect();
    order.sort_by_key(|id| (numbering.get(id).copied().unwrap_or(u32::MAX), *id));

    let mut ued_nodes: BTreeSet<usize> = BTreeSet::new();
    let mut out = Vec::new();
    for id in order {
        if Some(id) == response_node {
            continue; // the response object carries the global pattern
        }
        let node = &graph.nodes[id];
        let class = class_of[&id];
        if class == NodeClass::Others {
            out.push(LocalMatch {
                pattern: LocalPatternId::Lptn5,
                node: id,
                label: node.label.clone(),
                number: numbering.get(&id).copied(),
                class,
                availability: Availability::Unknown,
                observed: None,
                expected: None,
                estimated: false,
                unexpected: false,
                evidence: Vec::new(),
                events: Vec::new(),
            });
            continue;
        }
        let observed = obs.get(&id).copied().flatten();
        let carry = ctx.carry(id);
        let expectation = comparison_expectation(carry, class);
        let (availability, relation, estimated, shown_obs) = match observed {
            Some(o) => {
                let ued_up = ued_nodes
                    .iter()
                    .any(|u| graph.has_path(*u, id));
                let exceeds = matches!(expectation, Some(e) if o > e);
                let unexpected = exceeds || (ued_up && o != Delta::None);
                (
                    Availability::Logged,
                    if unexpected {
                        Relation::Unexpected
                    } else {
                        Relation::Expected
                    },
                    false,
                    Some(o),
                )
            }
            None => {
                // estimation is attempted only for single-predecessor
                // copy/projection chains
                let single_pred = graph.in_degree(id) == 1;
                let projection = node.pure_copy
                    || matches!(
                        node.entity.category,
                        EntityCategory::AttributeRef | EntityCategory::SubscriptRef
                    );
                if single_pred && projection && carry.is_some() {
                    (Availability::Estimable, Relation::Expected, true, carry)
                } else {
                    (Availability::Unknown, Relation::Expected, false, None)
                }
            }
        };
        let pattern = classify_local(class, availability, relation);
        if pattern == LocalPatternId::Lptn2 || pattern == LocalPatternId::Lptn3 {
            ued_nodes.insert(id);
        }
        out.push(LocalMatch {
            pattern,
            node: id,
            label: node.label.clone(),
            number: numbering.get(&id).copied(),
            class,
            availability,
            observed: shown_obs,
            expected: expectation,
            estimated,
            unexpected: relation == Relation::Unexpected,
            evidence: evidence.get(&id).cloned().unwrap_or_default(),
            events: Vec::new(),
        });
    }
    out
}

// ---------------------------------------------------------------------------
// Whole-stage driver
// ---------------------------------------------------------------------------

/// Run selection, global matching, and local matching; compute the matched
/// event sequence over the union of selected paths.
#[allow(clippy::too_many_arguments)]
pub fn run_matching(
    graph: &TaintGraph,
    triples: &[AlignedTriple],
    events: &EventSequence,
    applog: &[ChannelRecord],
    models: &ModelStore,
    config: &RunConfig,
) -> Result<MatchLedger, GraphError> {
    let numbering = graph.display_numbering();
    let response_node = graph.find_by_entity(&config.response_object);

    let global = match_global(
        triples,
        models,
        &config.thresholds,
        config.float_tol,
        response_node,
    );
    let anchor_delta = global
        .matches
        .iter()
        .map(|m| m.delta)
        .max()
        .unwrap_or(Delta::None);

    let selection = select_paths(
        graph,
        events,
        &config.node_event_map,
        config.path_override.as_deref(),
        config.max_paths,
    )?;

    let mut locals = match_local(
        graph,
        &selection.selected,
        applog,
        models,
        &config.thresholds,
        response_node,
        anchor_delta,
        &numbering,
    );

    // matched sequence over the union subgraph, ordered by depth
    let analyzed = analyzed_nodes(graph, &selection.selected);
    let mut produces = BTreeMap::new();
    for &n in &analyzed {
        produces.insert(n, producible(graph, n, &config.node_event_map));
    }
    let depth = union_depths(graph, &analyzed);
    let mut ordered: Vec<usize> = analyzed.iter().copied().collect();
    ordered.sort_by_key(|n| (depth.get(n).copied().unwrap_or(0), *n));
    let (_, assignment) = sequence_match(events, &ordered, &produces);
    let matched_instance_ids: Vec<u64> = assignment
        .iter()
        .map(|(i, _)| events.events[*i].id)
        .collect();
    let mut matched_sequence: Vec<EventType> = Vec::new();
    for (i, node) in &assignment {
        let ty = events.events[*i].ty;
        if matched_sequence.last() != Some(&ty) {
            matched_sequence.push(ty);
        }
        for lm in locals.iter_mut() {
            if lm.node == *node && !lm.events.contains(&ty) {
                lm.events.push(ty);
            }
        }
    }

    Ok(MatchLedger {
        globals: global.matches,
        incomplete_triples: global.incomplete,
        selected_paths: selection.selected,
        excluded_paths: selection.excluded,
        locals,
        matched_instance_ids,
        matched_sequence,
        numbering,
        nothing_matched: selection.nothing_matched,
    })
}

/// Longest-path-from-root depth within the analyzed subgraph.
fn union_depths(graph: &TaintGraph, analyzed: &BTreeSet<usize>) -> BTreeMap<usize, usize> {
    let mut depth: BTreeMap<usize, usize> = BTreeMap::new();
    let mut indeg: BTreeMap<usize, usize> = BTreeMap::new();
    for &n in analyzed {
        let d = graph
            .predecessors(n)
            .filter(|p| analyzed.contains(p))
            .count();
        indeg.insert(n, d);
    }
    let mut queue: VecDeque<usize> = indeg
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(n, _)| *n)
        .collect();
    while let Some(n) = queue.pop_front() {
        let dn = depth.get(&n).copied().unwrap_or(0);
        for s in graph.successors(n).collect::<Vec<_>>() {
            if !analyzed.contains(&s) {
                continue;
            }
            let e = depth.entry(s).or_insert(0);
            if *e < dn + 1 {
                *e = dn + 1;
            }
            let d = indeg.get_mut(&s).expect("indeg computed");
            *d -= 1;
            if *d == 0 {
                queue.push_back(s);
            }
        }
    }
    depth
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{ChannelRecord, Channel, EventInstance, Value};

    #[test]
    fn global_partition_is_exact_on_table_rows() {
        // the defining combinations recover the table rows exactly
        let rows = [
            (false, true, true, Direction::Response, GlobalPatternId::Gptn1),
            (false, true, false, Direction::Response, GlobalPatternId::Gptn2),
            (true, false, true, Direction::Response, GlobalPatternId::Gptn3),
            (true, false, false, Direction::Response, GlobalPatternId::Gptn4),
            (true, true, true, Direction::Response, GlobalPatternId::Gptn5),
            (true, true, false, Direction::Response, GlobalPatternId::Gptn6),
            (true, false, true, Direction::Dispatch, GlobalPatternId::Gptn7),
            (true, false, false, Direction::Dispatch, GlobalPatternId::Gptn8),
        ];
        for (dn, na, dev, dir, expect) in rows {
            assert_eq!(classify_triple(dn, na, dev, dir), expect);
        }
    }

    #[test]
    fn global_partition_total_over_the_whole_space() {
        for dn in [false, true] {
            for na in [false, true] {
                for dev in [false, true] {
                    for dir in [Direction::Response, Direction::Dispatch] {
                        let p = classify_triple(dn, na, dev, dir);
                        // exactly one pattern per input by construction;
                        // dispatch markers only on dispatch triples
                        let (_, _, _, marker) = p.triple();
                        if marker {
                            assert_eq!(dir, Direction::Dispatch);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn local_partition_total_and_unique() {
        let classes = [NodeClass::Others, NodeClass::Float, NodeClass::Str];
        let avails = [
            Availability::Logged,
            Availability::Estimable,
            Availability::Unknown,
        ];
        let relations = [Relation::Expected, Relation::Unexpected];
        for c in classes {
            for a in avails {
                for r in relations {
                    let p = classify_local(c, a, r);
                    match c {
                        NodeClass::Others => assert_eq!(p, LocalPatternId::Lptn5),
                        _ => match (a, r) {
                            (Availability::Unknown, _) => assert_eq!(p, LocalPatternId::Lptn4),
                            (Availability::Estimable, _) => assert_eq!(p, LocalPatternId::Lptn1),
                            (Availability::Logged, Relation::Expected) => {
                                assert_eq!(p, LocalPatternId::Lptn1)
                            }
                            (Availability::Logged, Relation::Unexpected) => {
                                assert!(matches!(
                                    p,
                                    LocalPatternId::Lptn2 | LocalPatternId::Lptn3
                                ));
                                if c == NodeClass::Float {
                                    assert_eq!(p, LocalPatternId::Lptn2);
                                } else {
                                    assert_eq!(p, LocalPatternId::Lptn3);
                                }
                            }
                        },
                    }
                }
            }
        }
    }

    fn rec(channel: Channel, t: i64, v: f64) -> ChannelRecord {
        ChannelRecord {
            variable: "x".into(),
            channel,
            t,
            v: Value::F(v),
        }
    }

    #[test]
    fn dispatch_specific_rows_only_on_dispatch_triples() {
        use crate::deviation::fit;
        use crate::telemetry::AlignedTriple;
        let mut models = ModelStore::default();
        let base: Vec<Value> = (0..60).map(|i| Value::F(i as f64)).collect();
        models
            .models
            .insert("x".into(), fit("x", &base, 2, 30).unwrap());
        // dispatch direction, consistent d/n, inconsistent n/a, no deviation
        let triple = AlignedTriple {
            variable: "x".into(),
            t: 0,
            d: Some(rec(Channel::D, 300, 30.0)),
            n: Some(rec(Channel::N, 200, 30.0)),
            a: Some(rec(Channel::A, 100, 31.0)),
            direction: Direction::Dispatch,
            flag: None,
        };
        let out = match_global(&[triple], &models, &Thresholds::default(), 1e-9, None);
        assert_eq!(out.matches.len(), 1);
        assert_eq!(out.matches[0].pattern, GlobalPatternId::Gptn8);
    }

    #[test]
    fn incomplete_triples_recorded_not_matched() {
        let models = ModelStore::default();
        let triple = AlignedTriple {
            variable: "x".into(),
            t: 0,
            d: None,
            n: None,
            a: Some(rec(Channel::A, 100, 1.0)),
            direction: Direction::Unknown,
            flag: Some("missing channels: d,n".into()),
        };
        let out = match_global(&[triple], &models, &Thresholds::default(), 1e-9, None);
        assert!(out.matches.is_empty());
        assert_eq!(out.incomplete.len(), 1);
    }

    #[test]
    fn dominant_prefers_inconsistency_over_deviation() {
        let mk = |p: GlobalPatternId, var: &str| GlobalMatch {
            pattern: p,
            variable: var.into(),
            t: 0,
            direction: Direction::Response,
            delta: Delta::None,
            dn_consistent: true,
            na_consistent: true,
            evidence: Vec::new(),
            node: None,
        };
        let matches = vec![
            mk(GlobalPatternId::Gptn5, "a"),
            mk(GlobalPatternId::Gptn1, "b"),
            mk(GlobalPatternId::Gptn6, "c"),
        ];
        assert_eq!(
            dominant_global(&matches).unwrap().pattern,
            GlobalPatternId::Gptn1
        );
    }

    #[test]
    fn sequence_match_counts_and_assignment() {
        let events = EventSequence {
            events: vec![
                EventInstance { id: 1, ty: EventType::E1, value: None, description: String::new() },
                EventInstance { id: 2, ty: EventType::E1, value: None, description: String::new() },
                EventInstance { id: 3, ty: EventType::E5, value: None, description: String::new() },
                EventInstance { id: 4, ty: EventType::E15, value: None, description: String::new() },
            ],
        };
        let nodes = vec![0usize, 1, 2];
        let mut produces: BTreeMap<usize, BTreeSet<EventType>> = BTreeMap::new();
        produces.insert(0, BTreeSet::from([EventType::E1]));
        produces.insert(1, BTreeSet::from([EventType::E5]));
        produces.insert(2, BTreeSet::from([EventType::E15]));
        let (score, assignment) = sequence_match(&events, &nodes, &produces);
        assert_eq!(score, 4, "both E1 instances land on the source node");
        assert_eq!(assignment.len(), 4);
        assert_eq!(assignment[0].1, 0);
        assert_eq!(assignment[1].1, 0);
        // order preservation: node positions never decrease
        let mut last = 0usize;
        for (_, node) in &assignment {
            let pos = nodes.iter().position(|n| n == node).unwrap();
            assert!(pos >= last);
            last = pos;
        }
    }

    #[test]
    fn empty_event_sequence_retains_all_paths() {
        use crate::graph::{EdgeLabel, NodeKind, Subgraph, TaintGraph, TaintNode, ValueType};
        use crate::frontend::Entity;
        let mut g = TaintGraph::default();
        for (i, label) in ["src()", "a", "b", "snk()"].iter().enumerate() {
            g.nodes.push(TaintNode {
                id: i,
                entity: Entity::ident(label.to_string()),
                kind: match i {
                    0 => NodeKind::Source,
                    3 => NodeKind::Sink,
                    _ => NodeKind::Auxiliary,
                },
                subgraph: Subgraph::Lsg,
                weight: 1.0,
                value_type: ValueType::F,
                stmt_id: Some(i),
                label: label.to_string(),
                unterminated: false,
                external: false,
                pure_copy: false,
                literal_only: false,
            });
        }
        g.sources.insert(0);
        g.sinks.insert(3);
        g.add_edge(0, 1, EdgeLabel::Assign);
        g.add_edge(0, 2, EdgeLabel::Assign);
        g.add_edge(1, 3, EdgeLabel::ArgPass);
        g.add_edge(2, 3, EdgeLabel::ArgPass);
        let events = EventSequence::default();
        let out = select_paths(&g, &events, &BTreeMap::new(), None, 100).unwrap();
        assert_eq!(out.selected.len(), 2, "both paths retained at score 0");
        assert!(out.nothing_matched);
        assert!(out.selected.iter().all(|p| p.score == 0));
    }
}
