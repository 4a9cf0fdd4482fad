//! The two-part dependency graph: node/edge model, queries, and DOT/JSON
//! export.
//!
//! Edges are directed in taint-flow order: `E(a, b)` means taint flows from
//! `a` to `b` during forward traversal and is explored `b -> a` while
//! backtracking.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::frontend::{Entity, StmtId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    /// P_var: holds a physical-side measurement.
    VirtualPhysical,
    /// T_src: where untrusted data enters.
    Source,
    /// T_snk: where tainted data exits to the physical side.
    Sink,
    /// V_s: neither a virtual physical variable, a function call, nor an
    /// array/object related variable.
    Auxiliary,
    FunctionCall,
    ArrayObjectRef,
    /// Reserved for compound expression entities kept for display.
    Expression,
}

impl NodeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::VirtualPhysical => "p_var",
            NodeKind::Source => "source",
            NodeKind::Sink => "sink",
            NodeKind::Auxiliary => "auxiliary",
            NodeKind::FunctionCall => "call",
            NodeKind::ArrayObjectRef => "array_object",
            NodeKind::Expression => "expression",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subgraph {
    Usg,
    Lsg,
    /// Virtual physical variables sit on both subgraph boundaries.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueType {
    F,
    S,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeLabel {
    Assign,
    ArgPass,
    Return,
    FieldRead,
    Callback,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaintNode {
    pub id: usize,
    pub entity: Entity,
    pub kind: NodeKind,
    pub subgraph: Subgraph,
    /// W_k, accumulated along the backward walk; halves are exact.
    pub weight: f64,
    pub value_type: ValueType,
    pub stmt_id: Option<StmtId>,
    /// Display text: entity name, or the full call text for call nodes.
    pub label: String,
    /// LSG node with no path to any sink.
    #[serde(default)]
    pub unterminated: bool,
    /// Name could not be resolved to a definition.
    #[serde(default)]
    pub external: bool,
    /// Defining statement is a pure copy/rename of a single entity.
    #[serde(default)]
    pub pure_copy: bool,
    /// Defining statement reads only literals.
    #[serde(default)]
    pub literal_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaintEdge {
    pub from: usize,
    pub to: usize,
    pub label: EdgeLabel,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TaintGraph {
    pub nodes: Vec<TaintNode>,
    pub edges: Vec<TaintEdge>,
    pub p_vars: BTreeSet<usize>,
    pub sources: BTreeSet<usize>,
    pub sinks: BTreeSet<usize>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl TaintGraph {
    pub fn node(&self, id: usize) -> &TaintNode {
        &self.nodes[id]
    }

    /// Adds an edge, collapsing parallels and refusing self-loops.
    pub fn add_edge(&mut self, from: usize, to: usize, label: EdgeLabel) {
        if from == to {
            return;
        }
        let e = TaintEdge { from, to, label };
        if !self.edges.iter().any(|x| x.from == from && x.to == to) {
            self.edges.push(e);
        }
    }

    pub fn successors(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .filter(move |e| e.from == id)
            .map(|e| e.to)
    }

    pub fn predecessors(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .filter(move |e| e.to == id)
            .map(|e| e.from)
    }

    pub fn out_degree(&self, id: usize) -> usize {
        self.successors(id).count()
    }

    pub fn in_degree(&self, id: usize) -> usize {
        self.predecessors(id).count()
    }

    /// Nodes reachable from `start` (inclusive) along edge direction.
    pub fn descendants(&self, start: usize) -> BTreeSet<usize> {
        self.closure([start], |g, n| g.successors(n).collect())
    }

    pub fn ancestors(&self, start: usize) -> BTreeSet<usize> {
        self.closure([start], |g, n| g.predecessors(n).collect())
    }

    fn closure(
        &self,
        start: impl IntoIterator<Item = usize>,
        step: fn(&Self, usize) -> Vec<usize>,
    ) -> BTreeSet<usize> {
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        let mut queue: VecDeque<usize> = start.into_iter().collect();
        while let Some(n) = queue.pop_front() {
            if !seen.insert(n) {
                continue;
            }
            for next in step(self, n) {
                if !seen.contains(&next) {
                    queue.push_back(next);
                }
            }
        }
        seen
    }

    pub fn has_path(&self, from: usize, to: usize) -> bool {
        self.descendants(from).contains(&to)
    }

    /// Topological order (stable: ties broken by node id). Panics on cycles;
    /// construction folds loop-carried dependencies so built graphs are
    /// acyclic.
    pub fn topo_order(&self) -> Vec<usize> {
        let ids: Vec<usize> = self.nodes.iter().map(|n| n.id).collect();
        let mut indeg: BTreeMap<usize, usize> = ids.iter().map(|&i| (i, 0)).collect();
        for e in &self.edges {
            *indeg.get_mut(&e.to).expect("edge target exists") += 1;
        }
        let mut ready: BTreeSet<usize> = indeg
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(i, _)| *i)
            .collect();
        let mut out = Vec::with_capacity(ids.len());
        while let Some(&n) = ready.iter().next() {
            ready.remove(&n);
            out.push(n);
            for s in self.successors(n).collect::<Vec<_>>() {
                let d = indeg.get_mut(&s).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.insert(s);
                }
            }
        }
        assert_eq!(out.len(), ids.len(), "taint graph must be acyclic");
        out
    }

    pub fn is_acyclic(&self) -> bool {
        let mut indeg: BTreeMap<usize, usize> =
            self.nodes.iter().map(|n| (n.id, 0)).collect();
        for e in &self.edges {
            *indeg.get_mut(&e.to).unwrap() += 1;
        }
        let mut ready: Vec<usize> = indeg
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(i, _)| *i)
            .collect();
        let mut count = 0;
        while let Some(n) = ready.pop() {
            count += 1;
            for s in self.successors(n).collect::<Vec<_>>() {
                let d = indeg.get_mut(&s).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(s);
                }
            }
        }
        count == self.nodes.len()
    }

    /// Root nodes (in-degree zero).
    pub fn roots(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .map(|n| n.id)
            .filter(|&id| self.in_degree(id) == 0)
            .collect()
    }

    pub fn find_by_label(&self, label: &str) -> Option<usize> {
        self.nodes.iter().find(|n| n.label == label).map(|n| n.id)
    }

    pub fn find_by_entity(&self, name: &str) -> Option<usize> {
        self.nodes
            .iter()
            .find(|n| n.entity.name == name)
            .map(|n| n.id)
    }

    /// Rebuild with a subset of nodes, renumbering ids densely and keeping
    /// order. Returns the old-id -> new-id map.
    pub fn retain_nodes(&self, keep: &BTreeSet<usize>) -> (TaintGraph, BTreeMap<usize, usize>) {
        let mut remap = BTreeMap::new();
        let mut g = TaintGraph::default();
        for n in &self.nodes {
            if keep.contains(&n.id) {
                let new_id = g.nodes.len();
                remap.insert(n.id, new_id);
                let mut cloned = n.clone();
                cloned.id = new_id;
                g.nodes.push(cloned);
            }
        }
        for e in &self.edges {
            if let (Some(&f), Some(&t)) = (remap.get(&e.from), remap.get(&e.to)) {
                g.add_edge(f, t, e.label);
            }
        }
        g.p_vars = self
            .p_vars
            .iter()
            .filter_map(|i| remap.get(i).copied())
            .collect();
        g.sources = self
            .sources
            .iter()
            .filter_map(|i| remap.get(i).copied())
            .collect();
        g.sinks = self
            .sinks
            .iter()
            .filter_map(|i| remap.get(i).copied())
            .collect();
        g.warnings = self.warnings.clone();
        (g, remap)
    }

    /// Splice `mid` out: connect each predecessor to each successor with the
    /// predecessor edge's label, then drop `mid`'s edges.
    pub fn splice_out(&mut self, mid: usize) {
        let preds: Vec<TaintEdge> = self.edges.iter().filter(|e| e.to == mid).copied().collect();
        let succs: Vec<TaintEdge> = self
            .edges
            .iter()
            .filter(|e| e.from == mid)
            .copied()
            .collect();
        self.edges.retain(|e| e.from != mid && e.to != mid);
        for p in &preds {
            for s in &succs {
                self.add_edge(p.from, s.to, p.label);
            }
        }
    }

    /// Display numbering: starts at the source nearest the virtual physical
    /// variables (the topologically deepest source) and numbers its
    /// descendants N0, N1, ... in statement order, call nodes before their
    /// results. Nodes outside that closure stay unnumbered.
    pub fn display_numbering(&self) -> BTreeMap<usize, u32> {
        if self.sources.is_empty() {
            return BTreeMap::new();
        }
        let order = self.topo_order();
        let pos: BTreeMap<usize, usize> =
            order.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let start = self
            .sources
            .iter()
            .max_by_key(|s| (pos.get(s).copied().unwrap_or(0), **s))
            .copied()
            .expect("sources non-empty");
        let mut nodes: Vec<usize> = self.descendants(start).into_iter().collect();
        nodes.sort_by_key(|&id| {
            let n = &self.nodes[id];
            let call_rank = usize::from(!matches!(
                n.kind,
                NodeKind::FunctionCall | NodeKind::Source | NodeKind::Sink
            ));
            (n.stmt_id.unwrap_or(usize::MAX), call_rank, id)
        });
        nodes
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i as u32))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialization")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// DOT export. USG nodes blue, LSG nodes red; virtual physical
    /// variables, sources, and sinks highlighted yellow.
    pub fn to_dot(&self, numbering: &BTreeMap<usize, u32>) -> String {
        let mut s = String::from("digraph taint {\n  rankdir=TB;\n  node [shape=box, style=filled];\n");
        for n in &self.nodes {
            let fill = if matches!(
                n.kind,
                NodeKind::VirtualPhysical | NodeKind::Source | NodeKind::Sink
            ) {
                "gold"
            } else {
                match n.subgraph {
                    Subgraph::Usg => "lightblue",
                    Subgraph::Lsg => "lightcoral",
                    Subgraph::Both => "gold",
                }
            };
            let prefix = numbering
                .get(&n.id)
                .map(|k| format!("N{} ", k))
                .unwrap_or_default();
            s.push_str(&format!(
                "  n{} [label=\"{}{}\", fillcolor={}];\n",
                n.id,
                prefix,
                n.label.replace('"', "\\\""),
                fill
            ));
        }
        for e in &self.edges {
            s.push_str(&format!("  n{} -> n{};\n", e.from, e.to));
        }
        s.push_str("}\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::Entity;

    fn mk(n: usize) -> TaintGraph {
        let mut g = TaintGraph::default();
        for i in 0..n {
            g.nodes.push(TaintNode {
                id: i,
                entity: Entity::ident(format!("v{i}")),
                kind: NodeKind::Auxiliary,
                subgraph: Subgraph::Lsg,
                weight: 0.0,
                value_type: ValueType::F,
                stmt_id: None,
                label: format!("v{i}"),
                unterminated: false,
                external: false,
                pure_copy: false,
                literal_only: false,
            });
        }
        g
    }

    #[test]
    fn no_self_loops_and_no_parallel_edges() {
        let mut g = mk(2);
        g.add_edge(0, 0, EdgeLabel::Assign);
        g.add_edge(0, 1, EdgeLabel::Assign);
        g.add_edge(0, 1, EdgeLabel::ArgPass);
        assert_eq!(g.edges.len(), 1);
    }

    #[test]
    fn reachability_and_topo() {
        let mut g = mk(4);
        g.add_edge(0, 1, EdgeLabel::Assign);
        g.add_edge(1, 2, EdgeLabel::Assign);
        g.add_edge(0, 3, EdgeLabel::Assign);
        assert!(g.has_path(0, 2));
        assert!(!g.has_path(2, 0));
        let order = g.topo_order();
        let pos: BTreeMap<usize, usize> =
            order.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        assert!(pos[&0] < pos[&1] && pos[&1] < pos[&2]);
    }

    #[test]
    fn splice_out_preserves_connectivity() {
        let mut g = mk(3);
        g.add_edge(0, 1, EdgeLabel::Assign);
        g.add_edge(1, 2, EdgeLabel::FieldRead);
        g.splice_out(1);
        assert!(g.edges.iter().any(|e| e.from == 0 && e.to == 2));
        assert_eq!(g.edges.len(), 1);
    }

    #[test]
    fn retain_renumbers_densely() {
        let mut g = mk(3);
        g.add_edge(0, 1, EdgeLabel::Assign);
        g.add_edge(1, 2, EdgeLabel::Assign);
        let keep = BTreeSet::from([0, 2]);
        let (h, remap) = g.retain_nodes(&keep);
        assert_eq!(h.nodes.len(), 2);
        assert_eq!(remap[&2], 1);
        assert!(h.edges.is_empty());
    }

    #[test]
    fn json_roundtrip() {
        let mut g = mk(2);
        g.add_edge(0, 1, EdgeLabel::Assign);
        g.p_vars.insert(1);
        let j = g.to_json();
        let back = TaintGraph::from_json(&j).unwrap();
        assert_eq!(back.nodes.len(), 2);
        assert!(back.p_vars.contains(&1));
    }
}
