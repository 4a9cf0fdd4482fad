//! Context-dependent graph pruning.
//!
//! Four operations run to fixpoint in a fixed order, restarting from the
//! first whenever one changes the graph:
//!
//! 1. ChainCollapse — an auxiliary node with in-degree 1 and out-degree 1
//!    whose statement is a pure copy/rename is removed and its edges spliced;
//! 2. ConstantDrop — nodes fed only by literals that reach no virtual
//!    physical variable or sink;
//! 3. DuplicateMerge — nodes with identical (entity, subgraph) merged;
//! 4. DeadBranchDrop — unterminated LSG value branches trimmed leaf-first
//!    (statement-level calls are side effects and stay).
//!
//! Virtual physical variables, sources, and sinks are never removed, and
//! connectivity between every retained source/sink pair is preserved.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::SimplifyError;
use crate::graph::{NodeKind, Subgraph, TaintGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PruneOp {
    ChainCollapse,
    ConstantDrop,
    DuplicateMerge,
    DeadBranchDrop,
}

/// Enables or disables individual pruning operations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PrunePolicy {
    pub chain_collapse: bool,
    pub constant_drop: bool,
    pub duplicate_merge: bool,
    pub dead_branch_drop: bool,
}

impl Default for PrunePolicy {
    fn default() -> Self {
        Self {
            chain_collapse: true,
            constant_drop: true,
            duplicate_merge: true,
            dead_branch_drop: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Removal {
    /// Node id in the input graph.
    pub node_id: usize,
    pub label: String,
    pub operation: PruneOp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PruneReport {
    pub removed: Vec<Removal>,
    pub before_count: usize,
    pub after_count: usize,
    /// 1 - after/before.
    pub reduction_ratio: f64,
    pub op_counts: BTreeMap<String, usize>,
}

impl PruneReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("prune report serialization")
    }
}

fn protected(kind: NodeKind) -> bool {
    matches!(
        kind,
        NodeKind::VirtualPhysical | NodeKind::Source | NodeKind::Sink
    )
}

/// Prune the graph under `policy`; returns the simplified graph and the
/// removal report. The input is untouched.
pub fn simplify(
    graph: &TaintGraph,
    policy: &PrunePolicy,
) -> Result<(TaintGraph, PruneReport), SimplifyError> {
    let mut work = graph.clone();
    let before_count = work.nodes.len();
    let mut alive: BTreeSet<usize> = work.nodes.iter().map(|n| n.id).collect();
    let mut removed: Vec<Removal> = Vec::new();

    let remove = |work: &mut TaintGraph,
                      alive: &mut BTreeSet<usize>,
                      removed: &mut Vec<Removal>,
                      id: usize,
                      op: PruneOp,
                      splice: bool|
     -> Result<(), SimplifyError> {
        let node = &work.nodes[id];
        if protected(node.kind) {
            return Err(SimplifyError::PolicyViolation {
                label: node.label.clone(),
                kind: node.kind.as_str().into(),
            });
        }
        removed.push(Removal {
            node_id: id,
            label: node.label.clone(),
            operation: op,
        });
        if splice {
            work.splice_out(id);
        } else {
            work.edges.retain(|e| e.from != id && e.to != id);
        }
        alive.remove(&id);
        Ok(())
    };

    loop {
        let mut changed = false;

        // (1) ChainCollapse
        if policy.chain_collapse {
            loop {
                let candidate = alive.iter().copied().find(|&id| {
                    let n = &work.nodes[id];
                    if n.kind != NodeKind::Auxiliary
                        || !n.pure_copy
                        || work.in_degree(id) != 1
                        || work.out_degree(id) != 1
                    {
                        return false;
                    }
                    // splicing must not merge the copy route into an
                    // existing parallel edge, or a distinct path vanishes
                    let pred = work.predecessors(id).next().expect("in-degree 1");
                    let succ = work.successors(id).next().expect("out-degree 1");
                    !work.edges.iter().any(|e| e.from == pred && e.to == succ)
                });
                match candidate {
                    Some(id) => {
                        remove(&mut work, &mut alive, &mut removed, id, PruneOp::ChainCollapse, true)?;
                        changed = true;
                    }
                    None => break,
                }
            }
        }
        if changed {
            continue;
        }

        // (2) ConstantDrop
        if policy.constant_drop {
            let targets: BTreeSet<usize> = alive
                .iter()
                .copied()
                .filter(|&id| {
                    let n = &work.nodes[id];
                    !protected(n.kind) && n.literal_only && {
                        let desc = work.descendants(id);
                        !desc.iter().any(|d| {
                            *d != id
                                && alive.contains(d)
                                && matches!(
                                    work.nodes[*d].kind,
                                    NodeKind::VirtualPhysical | NodeKind::Sink
                                )
                        })
                    }
                })
                .collect();
            for id in targets {
                remove(&mut work, &mut alive, &mut removed, id, PruneOp::ConstantDrop, false)?;
                changed = true;
            }
        }
        if changed {
            continue;
        }

        // (3) DuplicateMerge
        if policy.duplicate_merge {
            let mut groups: BTreeMap<(String, Subgraph), Vec<usize>> = BTreeMap::new();
            for &id in &alive {
                let n = &work.nodes[id];
                groups
                    .entry((n.entity.name.clone(), n.subgraph))
                    .or_default()
                    .push(id);
            }
            for (_, mut ids) in groups {
                if ids.len() < 2 {
                    continue;
                }
                // keep a protected node when present, else the earliest
                ids.sort_by_key(|&id| (!protected(work.nodes[id].kind), id));
                let keep = ids[0];
                for &dup in &ids[1..] {
                    let incoming: Vec<_> = work
                        .edges
                        .iter()
                        .filter(|e| e.to == dup)
                        .copied()
                        .collect();
                    let outgoing: Vec<_> = work
                        .edges
                        .iter()
                        .filter(|e| e.from == dup)
                        .copied()
                        .collect();
                    for e in incoming {
                        work.add_edge(e.from, keep, e.label);
                    }
                    for e in outgoing {
                        work.add_edge(keep, e.to, e.label);
                    }
                    let w = work.nodes[dup].weight;
                    if w > work.nodes[keep].weight {
                        work.nodes[keep].weight = w;
                    }
                    let s = work.nodes[dup].stmt_id;
                    if work.nodes[keep].stmt_id.is_none()
                        || (s.is_some() && s < work.nodes[keep].stmt_id)
                    {
                        work.nodes[keep].stmt_id = s;
                    }
                    remove(&mut work, &mut alive, &mut removed, dup, PruneOp::DuplicateMerge, false)?;
                    changed = true;
                }
            }
        }
        if changed {
            continue;
        }

        // (4) DeadBranchDrop
        if policy.dead_branch_drop {
            loop {
                let candidate = alive.iter().copied().find(|&id| {
                    let n = &work.nodes[id];
                    !protected(n.kind)
                        && n.kind != NodeKind::FunctionCall
                        && matches!(n.subgraph, Subgraph::Lsg | Subgraph::Both)
                        && n.unterminated
                        && work.out_degree(id) == 0
                });
                match candidate {
                    Some(id) => {
                        remove(&mut work, &mut alive, &mut removed, id, PruneOp::DeadBranchDrop, false)?;
                        changed = true;
                    }
                    None => break,
                }
            }
        }
        if !changed {
            break;
        }
    }

    let (out, _) = work.retain_nodes(&alive);
    let after_count = out.nodes.len();
    let mut op_counts = BTreeMap::new();
    for r in &removed {
        *op_counts
            .entry(format!("{:?}", r.operation))
            .or_insert(0usize) += 1;
    }
    let report = PruneReport {
        removed,
        before_count,
        after_count,
        reduction_ratio: if before_count == 0 {
            0.0
        } else {
            1.0 - after_count as f64 / before_count as f64
        },
        op_counts,
    };
    Ok((out, report))
}
