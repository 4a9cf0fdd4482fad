//! Dependency-graph construction: backward tracking from virtual physical
//! variables (USG), node weighting, source trimming, forward tracking to
//! sinks (LSG), and callback attachment.
//!
//! Function-call handling:
//! - backtracking propagates from each argument, the bound object, and, for
//!   known callees, enters the callee at its `return` statements;
//! - forward tracking does not step into API/input/query callees: the call
//!   result carries on from the variables the arguments were assigned from;
//!   known callees are entered through their tainted parameters;
//! - callbacks are attached only during forward tracking, entering from the
//!   tainted member variables of the owning object.
//!
//! A traversed function reached from another function without an explicit
//! entry (an indirect connection) is never crossed: parameters bind only to
//! the call sites that actually entered the callee.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::config::catalog_matches;
use crate::error::GraphError;
use crate::frontend::{
    DefSite, DefUse, Entity, EntityCategory, FunctionDef, ScriptProgram, Stmt, StmtId, StmtKind,
};
use crate::graph::{EdgeLabel, NodeKind, Subgraph, TaintEdge, TaintGraph, TaintNode, ValueType};

/// Catalogs and variable lists driving a build.
#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    pub p_vars: Vec<String>,
    pub source_catalog: Vec<String>,
    pub sink_catalog: Vec<String>,
    pub callback_catalog: Vec<String>,
}

/// Outcome of source trimming.
#[derive(Debug, Clone, Default)]
pub struct TrimOutcome {
    pub removed: Vec<String>,
    pub warnings: Vec<String>,
    pub no_source: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum NodeKey {
    Def { name: String, stmt: StmtId },
    Param { funcdef: StmtId, param: String },
    Call { stmt: StmtId },
    External { name: String },
}

pub struct Builder<'a> {
    prog: &'a ScriptProgram,
    defuse: &'a DefUse,
    opts: &'a BuildOptions,
    graph: TaintGraph,
    index: BTreeMap<NodeKey, usize>,
    key_of: BTreeMap<usize, NodeKey>,
    /// var -> class name, from constructor assignments.
    instance_of: BTreeMap<String, String>,
    /// stmt -> (scope id, position) for program-order folding of back edges.
    scope_pos: BTreeMap<StmtId, (usize, usize)>,
    /// funcdef stmt -> call stmts that entered it during backtracking.
    entering_calls: BTreeMap<StmtId, BTreeSet<StmtId>>,
    /// funcdef stmt -> call stmts that passed taint in during forward tracking.
    lsg_entered: BTreeMap<StmtId, BTreeSet<StmtId>>,
    /// funcdef stmt -> instances whose method invocation was traversed.
    entered_instances: BTreeMap<StmtId, BTreeSet<String>>,
    /// inferred value type per definition.
    def_types: BTreeMap<(StmtId, String), ValueType>,
    /// inverted def-use: definition site -> (use stmt, entity name).
    use_index: BTreeMap<DefSite, Vec<(StmtId, String)>>,
    tainted: BTreeSet<usize>,
    worklist: VecDeque<usize>,
    entry_stack: Vec<StmtId>,
}

impl<'a> Builder<'a> {
    pub fn new(
        prog: &'a ScriptProgram,
        defuse: &'a DefUse,
        opts: &'a BuildOptions,
    ) -> Result<Self, GraphError> {
        let defined = prog.defined_names();
        for pv in &opts.p_vars {
            if !defined.contains(pv) {
                return Err(GraphError::PVarNotFound(pv.clone()));
            }
        }
        let mut b = Builder {
            prog,
            defuse,
            opts,
            graph: TaintGraph::default(),
            index: BTreeMap::new(),
            key_of: BTreeMap::new(),
            instance_of: BTreeMap::new(),
            scope_pos: BTreeMap::new(),
            entering_calls: BTreeMap::new(),
            lsg_entered: BTreeMap::new(),
            entered_instances: BTreeMap::new(),
            def_types: BTreeMap::new(),
            use_index: BTreeMap::new(),
            tainted: BTreeSet::new(),
            worklist: VecDeque::new(),
            entry_stack: Vec::new(),
        };
        b.compute_scope_positions();
        b.compute_instances();
        b.infer_types();
        b.invert_uses();
        Ok(b)
    }

    pub fn finish(self) -> TaintGraph {
        self.graph
    }

    pub fn graph(&self) -> &TaintGraph {
        &self.graph
    }

    // ---- precomputation ----

    fn compute_scope_positions(&mut self) {
        let mut scopes: Vec<Vec<StmtId>> = vec![self.prog.block_stmts(&self.prog.top_level)];
        for f in &self.prog.functions {
            scopes.push(self.prog.block_stmts(&f.body));
        }
        for (si, scope) in scopes.iter().enumerate() {
            for (pos, id) in scope.iter().enumerate() {
                self.scope_pos.insert(*id, (si, pos));
            }
        }
    }

    fn compute_instances(&mut self) {
        for stmt in &self.prog.stmts {
            if let (Some(call), Some(target)) = (&stmt.callee, stmt.targets.first()) {
                if self.prog.class(&call.callee).is_some() {
                    self.instance_of
                        .insert(target.name.clone(), call.callee.clone());
                }
            }
        }
    }

    /// Literal-flow type inference: string wins over float, float over
    /// unknown. Call results and parameters stay unknown.
    fn infer_types(&mut self) {
        fn lit_type(e: &Entity) -> Option<ValueType> {
            if e.category != EntityCategory::Literal {
                return None;
            }
            let n = &e.name;
            if n.starts_with('"') {
                Some(ValueType::S)
            } else if n.chars().next().map(|c| c.is_ascii_digit() || c == '-') == Some(true) {
                Some(ValueType::F)
            } else {
                None
            }
        }
        let mut changed = true;
        while changed {
            changed = false;
            for stmt in &self.prog.stmts {
                let Some(target) = stmt.targets.first() else { continue };
                let key = (stmt.id, target.name.clone());
                if stmt.callee.is_some() {
                    continue; // call results stay Other
                }
                let mut ty = ValueType::Other;
                for e in &stmt.sources {
                    let ety = lit_type(e).or_else(|| {
                        self.defuse.resolve(stmt.id, &e.name).and_then(|defs| {
                            let mut best = None;
                            for d in defs {
                                if let DefSite::Stmt(ds) = d {
                                    if let Some(t2) = self
                                        .prog
                                        .stmt(*ds)
                                        .targets
                                        .first()
                                        .and_then(|t| self.def_types.get(&(*ds, t.name.clone())))
                                    {
                                        best = Some(join(best.unwrap_or(ValueType::Other), *t2));
                                    }
                                }
                            }
                            best
                        })
                    });
                    if let Some(t2) = ety {
                        ty = join(ty, t2);
                    }
                }
                if self.def_types.get(&key) != Some(&ty) && ty != ValueType::Other {
                    self.def_types.insert(key, ty);
                    changed = true;
                }
            }
        }

        fn join(a: ValueType, b: ValueType) -> ValueType {
            match (a, b) {
                (ValueType::S, _) | (_, ValueType::S) => ValueType::S,
                (ValueType::F, _) | (_, ValueType::F) => ValueType::F,
                _ => ValueType::Other,
            }
        }
    }

    fn invert_uses(&mut self) {
        for ((stmt, name), sites) in &self.defuse.per_use {
            for site in sites {
                self.use_index
                    .entry(site.clone())
                    .or_default()
                    .push((*stmt, name.clone()));
            }
        }
        for uses in self.use_index.values_mut() {
            uses.sort();
            uses.dedup();
        }
    }

    // ---- node bookkeeping ----

    #[allow(clippy::too_many_arguments)]
    fn ensure_node(
        &mut self,
        key: NodeKey,
        entity: Entity,
        kind: NodeKind,
        subgraph: Subgraph,
        value_type: ValueType,
        stmt_id: Option<StmtId>,
        label: String,
        external: bool,
    ) -> (usize, bool) {
        if let Some(&id) = self.index.get(&key) {
            return (id, false);
        }
        let id = self.graph.nodes.len();
        let (pure_copy, literal_only) = stmt_id
            .map(|s| self.copy_flags(s))
            .unwrap_or((false, false));
        self.graph.nodes.push(TaintNode {
            id,
            entity,
            kind,
            subgraph,
            weight: 0.0,
            value_type,
            stmt_id,
            label,
            unterminated: false,
            external,
            pure_copy,
            literal_only,
        });
        self.index.insert(key.clone(), id);
        self.key_of.insert(id, key);
        if kind == NodeKind::VirtualPhysical {
            self.graph.p_vars.insert(id);
        }
        (id, true)
    }

    /// (pure copy/rename, literal-only) flags of a defining statement.
    fn copy_flags(&self, stmt_id: StmtId) -> (bool, bool) {
        let stmt = self.prog.stmt(stmt_id);
        if stmt.callee.is_some() || stmt.kind != StmtKind::Assign {
            return (false, stmt.callee.is_none() && stmt.literal_only());
        }
        let pure = stmt.sources.len() == 1
            && stmt.sources[0].category == EntityCategory::Identifier
            && stmt
                .targets
                .first()
                .map(|t| t.category == EntityCategory::Identifier)
                .unwrap_or(false);
        (pure, stmt.literal_only())
    }

    fn def_type(&self, stmt: StmtId, name: &str) -> ValueType {
        self.def_types
            .get(&(stmt, name.to_string()))
            .copied()
            .unwrap_or(ValueType::Other)
    }

    fn is_p_var(&self, name: &str) -> bool {
        self.opts.p_vars.iter().any(|p| p == name)
    }

    fn kind_for_target(&self, entity: &Entity) -> NodeKind {
        if self.is_p_var(&entity.name) {
            NodeKind::VirtualPhysical
        } else {
            match entity.category {
                EntityCategory::SubscriptRef
                | EntityCategory::AttributeRef
                | EntityCategory::ObjectCtor => NodeKind::ArrayObjectRef,
                _ => NodeKind::Auxiliary,
            }
        }
    }

    /// Display name of a definition: member writes get instance-qualified
    /// one level deep (`self.x` in a method entered on `listener` becomes
    /// `listener.x`).
    fn display_name(&self, stmt: &Stmt, entity: &Entity) -> String {
        if let Some(base) = &entity.base_object {
            if base == "self" {
                if let Some(f) = self.prog.enclosing_function(stmt.id) {
                    if let Some(instances) = self.entered_instances.get(&f.stmt_id) {
                        if let Some(o) = instances.iter().next() {
                            return format!("{}{}", o, &entity.name["self".len()..]);
                        }
                    }
                }
            }
        }
        entity.name.clone()
    }

    /// Program-order guard: fold loop back edges by only linking definitions
    /// at or before their use within the same scope.
    fn ordered(&self, def: StmtId, use_stmt: StmtId) -> bool {
        if def == use_stmt {
            return false;
        }
        match (self.scope_pos.get(&def), self.scope_pos.get(&use_stmt)) {
            (Some((sd, pd)), Some((su, pu))) if sd == su => pd < pu,
            _ => true, // cross-scope links are guarded by entry tracking
        }
    }

    fn resolve_callee(&self, stmt: &Stmt) -> Option<&'a FunctionDef> {
        let call = stmt.callee.as_ref()?;
        match &call.base_object {
            None => self.prog.function(&call.callee),
            Some(base) => {
                let method = call.callee.rsplit('.').next()?;
                let class = if base == "self" {
                    self.prog
                        .enclosing_function(stmt.id)
                        .and_then(|f| f.class.clone())
                } else {
                    self.instance_of.get(base).cloned()
                };
                class.and_then(|c| self.prog.function(&format!("{}.{}", c, method)))
            }
        }
    }

    fn is_ctor(&self, stmt: &Stmt) -> bool {
        stmt.callee
            .as_ref()
            .map(|c| c.base_object.is_none() && self.prog.class(&c.callee).is_some())
            .unwrap_or(false)
    }

    fn source_label(category: EntityCategory) -> EdgeLabel {
        match category {
            EntityCategory::AttributeRef | EntityCategory::SubscriptRef => EdgeLabel::FieldRead,
            _ => EdgeLabel::Assign,
        }
    }

    // ---- USG: backward tracking ----

    /// Build the upper subgraph by backtracking from every virtual physical
    /// variable definition.
    pub fn build_usg(&mut self) -> Result<(), GraphError> {
        let p_var_defs: Vec<(String, StmtId)> = self
            .prog
            .stmts
            .iter()
            .filter_map(|s| {
                s.targets
                    .first()
                    .filter(|t| self.is_p_var(&t.name))
                    .map(|t| (t.name.clone(), s.id))
            })
            .collect();
        for (name, stmt) in p_var_defs {
            self.backtrack(&DefSite::Stmt(stmt), &Entity::ident(name), Subgraph::Both);
        }
        Ok(())
    }

    /// Create the node for a definition site and recursively expand its
    /// backward dependency chains. Returns the node id.
    fn backtrack(&mut self, site: &DefSite, used_as: &Entity, subgraph: Subgraph) -> usize {
        match site {
            DefSite::External(_) => {
                let (id, _) = self.ensure_node(
                    NodeKey::External {
                        name: used_as.name.clone(),
                    },
                    used_as.clone(),
                    NodeKind::Auxiliary,
                    Subgraph::Usg,
                    ValueType::Other,
                    None,
                    used_as.name.clone(),
                    true,
                );
                id
            }
            DefSite::Param { funcdef, param } => {
                let key = NodeKey::Param {
                    funcdef: *funcdef,
                    param: param.clone(),
                };
                let (id, new) = self.ensure_node(
                    key,
                    Entity::ident(param.clone()),
                    NodeKind::Auxiliary,
                    Subgraph::Usg,
                    ValueType::Other,
                    Some(*funcdef),
                    param.clone(),
                    false,
                );
                if new {
                    let entries: Vec<StmtId> = self
                        .entering_calls
                        .get(funcdef)
                        .map(|s| s.iter().copied().collect())
                        .unwrap_or_default();
                    for call_stmt in entries {
                        self.wire_param_binding(*funcdef, param, id, call_stmt);
                    }
                }
                id
            }
            DefSite::Stmt(d) => {
                let stmt = self.prog.stmt(*d);
                let target = match stmt.targets.first() {
                    Some(t) => t.clone(),
                    None => used_as.clone(),
                };
                let display = self.display_name(stmt, &target);
                let key = NodeKey::Def {
                    name: display.clone(),
                    stmt: *d,
                };
                if let Some(&id) = self.index.get(&key) {
                    return id;
                }
                let folded_ctor = self.is_ctor(stmt);
                let mut entity = target.clone();
                if folded_ctor {
                    entity.category = EntityCategory::ObjectCtor;
                }
                let kind = if folded_ctor {
                    NodeKind::ArrayObjectRef
                } else {
                    self.kind_for_target(&entity)
                };
                let vt = self.def_type(*d, &target.name);
                let sg = if kind == NodeKind::VirtualPhysical {
                    Subgraph::Both
                } else {
                    subgraph
                };
                let (id, _) = self.ensure_node(
                    key,
                    entity,
                    kind,
                    if sg == Subgraph::Both { sg } else { Subgraph::Usg },
                    vt,
                    Some(*d),
                    display,
                    false,
                );
                self.expand_backward(*d, id);
                id
            }
        }
    }

    fn expand_backward(&mut self, d: StmtId, node: usize) {
        let stmt = self.prog.stmt(d).clone();
        if let Some(call) = &stmt.callee {
            if self.is_ctor(&stmt) {
                // constructor folds into the object node: arguments feed it
                for arg in call.args.iter().chain(call.kwargs.iter().map(|(_, v)| v)) {
                    if arg.is_literal() {
                        continue;
                    }
                    self.backward_edges_for(d, arg, node, EdgeLabel::ArgPass);
                }
                return;
            }
            let (call_node, _) = self.ensure_node(
                NodeKey::Call { stmt: d },
                Entity {
                    name: call.text.clone(),
                    category: EntityCategory::CallResult,
                    base_object: call.base_object.clone(),
                },
                NodeKind::FunctionCall,
                Subgraph::Usg,
                ValueType::Other,
                Some(d),
                call.text.clone(),
                false,
            );
            self.graph.add_edge(call_node, node, EdgeLabel::Assign);
            self.expand_call_backward(d, call_node);
        } else {
            for e in stmt.value_sources() {
                let label = Self::source_label(e.category);
                self.backward_edges_for(d, e, node, label);
            }
        }
    }

    /// Resolve `entity` at `use_stmt` and link each definition backward into
    /// `to`.
    fn backward_edges_for(&mut self, use_stmt: StmtId, entity: &Entity, to: usize, label: EdgeLabel) {
        let sites: Vec<DefSite> = self
            .defuse
            .resolve(use_stmt, &entity.name)
            .map(|s| s.iter().cloned().collect())
            .unwrap_or_else(|| vec![DefSite::External(entity.name.clone())]);
        for site in sites {
            if let DefSite::Stmt(ds) = &site {
                if !self.ordered(*ds, use_stmt) {
                    continue;
                }
            }
            if matches!(site, DefSite::External(_)) && entity.base_object.is_some() {
                // do not materialize external bases of reference arguments
                if self
                    .defuse
                    .resolve(use_stmt, &entity.name)
                    .map(|s| s.iter().all(|d| matches!(d, DefSite::External(_))))
                    .unwrap_or(true)
                {
                    let ext = self.backtrack(&site, entity, Subgraph::Usg);
                    self.graph.add_edge(ext, to, label);
                    continue;
                }
            }
            let from = self.backtrack(&site, entity, Subgraph::Usg);
            self.graph.add_edge(from, to, label);
        }
    }

    fn expand_call_backward(&mut self, d: StmtId, call_node: usize) {
        let stmt = self.prog.stmt(d).clone();
        let call = stmt.callee.clone().expect("call stmt");
        for arg in call.args.iter().chain(call.kwargs.iter().map(|(_, v)| v)) {
            if arg.is_literal() {
                continue;
            }
            self.backward_edges_for(d, arg, call_node, EdgeLabel::ArgPass);
            // an argument that references an object propagates the object too
            if let Some(base) = &arg.base_object {
                let base_ent = Entity::ident(base.clone());
                if let Some(defs) = self.defuse.resolve(d, base) {
                    if defs.iter().any(|s| !matches!(s, DefSite::External(_))) {
                        self.backward_edges_for(d, &base_ent, call_node, EdgeLabel::ArgPass);
                    }
                }
            }
        }
        if let Some(obj) = &call.base_object {
            let obj_ent = Entity::ident(obj.clone());
            if let Some(defs) = self.defuse.resolve(d, obj) {
                if defs.iter().any(|s| !matches!(s, DefSite::External(_))) {
                    self.backward_edges_for(d, &obj_ent, call_node, EdgeLabel::ArgPass);
                }
            }
        }
        // inter-procedural: enter the callee at its return statements
        if let Some(f) = self.resolve_callee(&stmt) {
            let fd = f.stmt_id;
            let fbody = f.body.clone();
            if self.entry_stack.contains(&fd) {
                return; // recursion is not traversed
            }
            let newly = self.entering_calls.entry(fd).or_default().insert(d);
            if newly {
                // bind already-materialized parameters to this call site
                let params: Vec<String> = self
                    .prog
                    .functions
                    .iter()
                    .find(|x| x.stmt_id == fd)
                    .map(|x| x.params.clone())
                    .unwrap_or_default();
                for p in params {
                    if let Some(&pid) = self.index.get(&NodeKey::Param {
                        funcdef: fd,
                        param: p.clone(),
                    }) {
                        self.wire_param_binding(fd, &p, pid, d);
                    }
                }
            }
            self.entry_stack.push(fd);
            for rid in self.prog.block_stmts(&fbody) {
                let rstmt = self.prog.stmt(rid);
                if rstmt.kind != StmtKind::Return {
                    continue;
                }
                let sources: Vec<Entity> = rstmt.value_sources().cloned().collect();
                for e in sources {
                    self.backward_edges_for(rid, &e, call_node, EdgeLabel::Return);
                }
            }
            self.entry_stack.pop();
        }
    }

    /// Link a parameter node to the argument definitions of one entering
    /// call site.
    fn wire_param_binding(&mut self, funcdef: StmtId, param: &str, param_node: usize, call_stmt: StmtId) {
        let f = self
            .prog
            .functions
            .iter()
            .find(|x| x.stmt_id == funcdef)
            .expect("function exists");
        let stmt = self.prog.stmt(call_stmt).clone();
        let Some(call) = &stmt.callee else { return };
        if param == "self" {
            if let Some(obj) = &call.base_object {
                let ent = Entity::ident(obj.clone());
                self.backward_edges_for(call_stmt, &ent, param_node, EdgeLabel::ArgPass);
            }
            return;
        }
        let pos = f.call_params().iter().position(|p| p == param);
        let arg = pos
            .and_then(|i| call.args.get(i))
            .cloned()
            .or_else(|| {
                call.kwargs
                    .iter()
                    .find(|(k, _)| k == param)
                    .map(|(_, v)| v.clone())
            });
        if let Some(arg) = arg {
            if !arg.is_literal() {
                self.backward_edges_for(call_stmt, &arg, param_node, EdgeLabel::ArgPass);
            }
        }
    }

    // ---- weights ----

    /// Walk upward from each virtual physical variable: a parent with
    /// taint-source features gains 1 over its heaviest child, anything else
    /// gains 1/2. P_var nodes are pinned at 1.
    pub fn assign_weights(&mut self) {
        let order = self.graph.topo_order();
        for &n in order.iter().rev() {
            if self.graph.p_vars.contains(&n) {
                self.graph.nodes[n].weight = 1.0;
                continue;
            }
            let child_max = self
                .graph
                .successors(n)
                .map(|c| self.graph.nodes[c].weight)
                .fold(f64::NEG_INFINITY, f64::max);
            if child_max.is_finite() && child_max > 0.0 {
                let inc = if self.has_source_feature(n) { 1.0 } else { 0.5 };
                self.graph.nodes[n].weight = child_max + inc;
            }
        }
    }

    fn has_source_feature(&self, n: usize) -> bool {
        let node = &self.graph.nodes[n];
        match node.kind {
            NodeKind::FunctionCall => {
                let callee = node
                    .stmt_id
                    .and_then(|s| self.prog.stmt(s).callee.as_ref())
                    .map(|c| c.callee.clone())
                    .unwrap_or_else(|| node.label.clone());
                // a user-defined function can never be a taint source
                if node
                    .stmt_id
                    .map(|s| self.resolve_callee(self.prog.stmt(s)).is_some())
                    .unwrap_or(false)
                {
                    return false;
                }
                if node
                    .stmt_id
                    .map(|s| self.is_ctor(self.prog.stmt(s)))
                    .unwrap_or(false)
                {
                    return false;
                }
                catalog_matches(&self.opts.source_catalog, &callee)
            }
            _ => node.external && catalog_matches(&self.opts.source_catalog, &node.label),
        }
    }

    // ---- trimming ----

    /// From every root-ward path end, drop leading nodes until the first
    /// node with weight >= 1 and a taint-source feature; mark those nodes as
    /// sources. Paths with no qualifying node are dropped entirely.
    pub fn trim_to_sources(&mut self) -> TrimOutcome {
        let mut outcome = TrimOutcome::default();
        let qualifies: BTreeSet<usize> = self
            .graph
            .nodes
            .iter()
            .map(|n| n.id)
            .filter(|&id| self.graph.nodes[id].weight >= 1.0 && self.has_source_feature(id))
            .collect();

        // nodes reachable from a root without passing a qualifying node
        let mut qualifier_free: BTreeSet<usize> = BTreeSet::new();
        let mut first_hits: BTreeSet<usize> = BTreeSet::new();
        let mut queue: VecDeque<usize> = self.graph.roots().into_iter().collect();
        while let Some(n) = queue.pop_front() {
            if qualifies.contains(&n) {
                first_hits.insert(n);
                continue; // the trim stops at the first qualifying node
            }
            if !qualifier_free.insert(n) {
                continue;
            }
            for s in self.graph.successors(n).collect::<Vec<_>>() {
                queue.push_back(s);
            }
        }

        // descendants of qualifying nodes are protected
        let mut protected: BTreeSet<usize> = BTreeSet::new();
        for &q in &qualifies {
            protected.extend(self.graph.descendants(q));
        }

        let removed: BTreeSet<usize> = qualifier_free
            .iter()
            .copied()
            .filter(|id| {
                !protected.contains(id) && !self.graph.p_vars.contains(id)
            })
            .collect();

        for &id in &removed {
            outcome.removed.push(self.graph.nodes[id].label.clone());
        }
        if !removed.is_empty() {
            for &pv in &self.graph.p_vars {
                let gone = self
                    .graph
                    .predecessors(pv)
                    .all(|p| removed.contains(&p));
                let had_preds = self.graph.in_degree(pv) > 0;
                if had_preds && gone {
                    outcome.warnings.push(format!(
                        "no taint source on any path above `{}`; path dropped",
                        self.graph.nodes[pv].label
                    ));
                }
            }
        }

        for &q in &first_hits {
            self.graph.nodes[q].kind = NodeKind::Source;
            self.graph.sources.insert(q);
        }

        let keep: BTreeSet<usize> = self
            .graph
            .nodes
            .iter()
            .map(|n| n.id)
            .filter(|id| !removed.contains(id))
            .collect();
        let (new_graph, remap) = self.graph.retain_nodes(&keep);
        self.graph = new_graph;
        let mut new_index = BTreeMap::new();
        let mut new_key_of = BTreeMap::new();
        for (key, old) in std::mem::take(&mut self.index) {
            if let Some(&new) = remap.get(&old) {
                new_index.insert(key.clone(), new);
                new_key_of.insert(new, key);
            }
        }
        self.index = new_index;
        self.key_of = new_key_of;

        if self.graph.sources.is_empty() {
            outcome.no_source = true;
            outcome
                .warnings
                .push("no taint source found on any path".into());
            self.graph
                .warnings
                .push("no taint source found on any path".into());
        }
        for w in &outcome.warnings {
            self.graph.warnings.push(w.clone());
        }
        outcome
    }

    // ---- LSG: forward tracking ----

    /// Forward taint closure from every virtual physical variable to the
    /// configured sinks.
    pub fn build_lsg(&mut self) -> Result<(), GraphError> {
        let p_var_defs: Vec<(String, StmtId)> = self
            .prog
            .stmts
            .iter()
            .filter_map(|s| {
                s.targets
                    .first()
                    .filter(|t| self.is_p_var(&t.name))
                    .map(|t| (t.name.clone(), s.id))
            })
            .collect();
        for (name, stmt) in p_var_defs {
            let key = NodeKey::Def {
                name: name.clone(),
                stmt,
            };
            let (id, _) = self.ensure_node(
                key,
                Entity::ident(name.clone()),
                NodeKind::VirtualPhysical,
                Subgraph::Both,
                self.def_type(stmt, &name),
                Some(stmt),
                name,
                false,
            );
            self.graph.nodes[id].subgraph = Subgraph::Both;
            self.taint(id);
        }
        self.run_worklist();
        if self.graph.sinks.is_empty() {
            self.graph
                .warnings
                .push("forward tracking reached no sink".into());
        }
        self.flag_unterminated();
        Ok(())
    }

    fn taint(&mut self, id: usize) {
        if self.tainted.insert(id) {
            self.worklist.push_back(id);
        }
    }

    fn run_worklist(&mut self) {
        while let Some(id) = self.worklist.pop_front() {
            let Some(key) = self.key_of.get(&id).cloned() else { continue };
            let uses: Vec<(StmtId, String)> = match &key {
                NodeKey::Def { name, stmt } => {
                    let mut u: Vec<(StmtId, String)> = self
                        .use_index
                        .get(&DefSite::Stmt(*stmt))
                        .cloned()
                        .unwrap_or_default();
                    u.extend(self.member_uses(name));
                    u
                }
                NodeKey::Param { funcdef, param } => self
                    .use_index
                    .get(&DefSite::Param {
                        funcdef: *funcdef,
                        param: param.clone(),
                    })
                    .cloned()
                    .unwrap_or_default(),
                NodeKey::Call { .. } | NodeKey::External { .. } => Vec::new(),
            };
            for (use_stmt, used_name) in uses {
                self.forward_use(id, use_stmt, &used_name);
            }
        }
    }

    /// Uses of an instance-qualified member (`listener.x`) are the `self.x`
    /// reads inside methods of the owning class entered on that instance.
    fn member_uses(&self, display: &str) -> Vec<(StmtId, String)> {
        let Some((instance, member)) = display.split_once('.') else {
            return Vec::new();
        };
        let Some(class) = self.instance_of.get(instance) else {
            return Vec::new();
        };
        let self_name = format!("self.{}", member);
        let mut out = Vec::new();
        for f in &self.prog.functions {
            if f.class.as_deref() != Some(class.as_str()) {
                continue;
            }
            let entered = self
                .entered_instances
                .get(&f.stmt_id)
                .map(|s| s.contains(instance))
                .unwrap_or(false);
            if !entered {
                continue;
            }
            for id in self.prog.block_stmts(&f.body) {
                let stmt = self.prog.stmt(id);
                let reads = stmt.value_sources().any(|e| e.name == self_name)
                    || stmt
                        .callee
                        .as_ref()
                        .map(|c| {
                            c.args.iter().any(|a| a.name == self_name)
                                || c.base_object.as_deref() == Some(self_name.as_str())
                        })
                        .unwrap_or(false);
                if reads {
                    out.push((id, self_name.clone()));
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    fn forward_use(&mut self, from: usize, use_stmt: StmtId, used_name: &str) {
        // program-order fold, mirroring the backward direction
        if let Some(NodeKey::Def { stmt, .. }) = self.key_of.get(&from) {
            if !self.ordered(*stmt, use_stmt) {
                return;
            }
        }
        let stmt = self.prog.stmt(use_stmt).clone();
        let used_category = stmt
            .sources
            .iter()
            .chain(stmt.callee.iter().flat_map(|c| c.args.iter()))
            .find(|e| e.name == used_name)
            .map(|e| e.category)
            .unwrap_or(EntityCategory::Identifier);

        if let Some(call) = &stmt.callee {
            let is_sink = catalog_matches(&self.opts.sink_catalog, &call.callee);
            if is_sink {
                let (snk, _) = self.ensure_node(
                    NodeKey::Call { stmt: use_stmt },
                    Entity {
                        name: call.text.clone(),
                        category: EntityCategory::CallResult,
                        base_object: call.base_object.clone(),
                    },
                    NodeKind::Sink,
                    Subgraph::Lsg,
                    ValueType::Other,
                    Some(use_stmt),
                    call.text.clone(),
                    false,
                );
                self.graph.nodes[snk].kind = NodeKind::Sink;
                self.graph.sinks.insert(snk);
                self.graph.add_edge(from, snk, EdgeLabel::ArgPass);
                return; // propagation stops at the sink
            }
            if self.is_ctor(&stmt) {
                if let Some(target) = stmt.targets.first().cloned() {
                    let node = self.forward_target_node(&stmt, &target, EntityCategory::ObjectCtor);
                    self.graph.add_edge(from, node, EdgeLabel::ArgPass);
                    self.taint(node);
                }
                return;
            }
            let (call_node, _) = self.ensure_node(
                NodeKey::Call { stmt: use_stmt },
                Entity {
                    name: call.text.clone(),
                    category: EntityCategory::CallResult,
                    base_object: call.base_object.clone(),
                },
                NodeKind::FunctionCall,
                Subgraph::Lsg,
                ValueType::Other,
                Some(use_stmt),
                call.text.clone(),
                false,
            );
            self.graph.add_edge(from, call_node, EdgeLabel::ArgPass);
            self.taint(call_node);

            if let Some(f) = self.resolve_callee(&stmt) {
                // known callee: continue through the tainted parameters
                let fd = f.stmt_id;
                let call_params: Vec<String> = f.call_params().to_vec();
                if let Some(base) = &call.base_object {
                    if self.instance_of.contains_key(base) {
                        self.entered_instances
                            .entry(fd)
                            .or_default()
                            .insert(base.clone());
                    }
                }
                let mut tainted_params: Vec<String> = Vec::new();
                for (i, a) in call.args.iter().enumerate() {
                    if a.name == used_name {
                        if let Some(p) = call_params.get(i) {
                            tainted_params.push(p.clone());
                        }
                    }
                }
                for (k, v) in &call.kwargs {
                    if v.name == used_name {
                        tainted_params.push(k.clone());
                    }
                }
                if call.base_object.as_deref() == Some(used_name) {
                    tainted_params.push("self".into());
                }
                for p in tainted_params {
                    let (pid, _) = self.ensure_node(
                        NodeKey::Param {
                            funcdef: fd,
                            param: p.clone(),
                        },
                        Entity::ident(p.clone()),
                        NodeKind::Auxiliary,
                        Subgraph::Lsg,
                        ValueType::Other,
                        Some(fd),
                        p.clone(),
                        false,
                    );
                    self.graph.add_edge(from, pid, EdgeLabel::ArgPass);
                    self.taint(pid);
                }
                let newly = self.lsg_entered.entry(fd).or_default().insert(use_stmt);
                if newly {
                    self.wire_tainted_returns(fd, use_stmt);
                }
            } else {
                // API/input/query call: do not propagate the argument into
                // the callee; continue from the assigned-to variables
                for target in stmt.targets.clone() {
                    let node = self.forward_target_node(&stmt, &target, target.category);
                    self.graph.add_edge(call_node, node, EdgeLabel::Assign);
                    self.taint(node);
                }
            }
            return;
        }

        match stmt.kind {
            StmtKind::Return => {
                let Some(f) = self.prog.enclosing_function(use_stmt) else {
                    return;
                };
                let fd = f.stmt_id;
                let entries: Vec<StmtId> = self
                    .lsg_entered
                    .get(&fd)
                    .map(|s| s.iter().copied().collect())
                    .unwrap_or_default();
                for call_stmt in entries {
                    self.wire_return_to_call(from, call_stmt);
                }
            }
            StmtKind::If => {
                // condition reads carry no data dependence
            }
            _ => {
                for target in stmt.targets.clone() {
                    let node = self.forward_target_node(&stmt, &target, target.category);
                    let label = Self::source_label(used_category);
                    self.graph.add_edge(from, node, label);
                    self.taint(node);
                }
            }
        }
    }

    fn forward_target_node(
        &mut self,
        stmt: &Stmt,
        target: &Entity,
        category: EntityCategory,
    ) -> usize {
        let display = self.display_name(stmt, target);
        let mut entity = target.clone();
        entity.category = category;
        let kind = if category == EntityCategory::ObjectCtor {
            NodeKind::ArrayObjectRef
        } else {
            self.kind_for_target(&entity)
        };
        let vt = self.def_type(stmt.id, &target.name);
        let (id, _) = self.ensure_node(
            NodeKey::Def {
                name: display.clone(),
                stmt: stmt.id,
            },
            entity,
            kind,
            Subgraph::Lsg,
            vt,
            Some(stmt.id),
            display,
            false,
        );
        if self.graph.p_vars.contains(&id) {
            self.graph.nodes[id].subgraph = Subgraph::Both;
        }
        id
    }

    /// When taint enters a callee whose return is already tainted, wire the
    /// return flow out to the entering call site's target.
    fn wire_tainted_returns(&mut self, funcdef: StmtId, call_stmt: StmtId) {
        let body = self
            .prog
            .functions
            .iter()
            .find(|f| f.stmt_id == funcdef)
            .map(|f| f.body.clone())
            .unwrap_or_default();
        for rid in self.prog.block_stmts(&body) {
            if self.prog.stmt(rid).kind != StmtKind::Return {
                continue;
            }
            let sources: Vec<Entity> = self.prog.stmt(rid).value_sources().cloned().collect();
            for e in sources {
                if let Some(defs) = self.defuse.resolve(rid, &e.name) {
                    for d in defs.clone() {
                        let key = match &d {
                            DefSite::Stmt(s) => {
                                let t = self.prog.stmt(*s).targets.first().cloned();
                                t.map(|t| NodeKey::Def {
                                    name: t.name,
                                    stmt: *s,
                                })
                            }
                            DefSite::Param { funcdef, param } => Some(NodeKey::Param {
                                funcdef: *funcdef,
                                param: param.clone(),
                            }),
                            DefSite::External(_) => None,
                        };
                        if let Some(key) = key {
                            if let Some(&nid) = self.index.get(&key) {
                                if self.tainted.contains(&nid) {
                                    self.wire_return_to_call(nid, call_stmt);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn wire_return_to_call(&mut self, ret_node: usize, call_stmt: StmtId) {
        let stmt = self.prog.stmt(call_stmt).clone();
        let Some(call) = &stmt.callee else { return };
        let (call_node, _) = self.ensure_node(
            NodeKey::Call { stmt: call_stmt },
            Entity {
                name: call.text.clone(),
                category: EntityCategory::CallResult,
                base_object: call.base_object.clone(),
            },
            NodeKind::FunctionCall,
            Subgraph::Lsg,
            ValueType::Other,
            Some(call_stmt),
            call.text.clone(),
            false,
        );
        self.graph.add_edge(ret_node, call_node, EdgeLabel::Return);
        self.taint(call_node);
        for target in stmt.targets.clone() {
            let node = self.forward_target_node(&stmt, &target, target.category);
            self.graph.add_edge(call_node, node, EdgeLabel::Assign);
            self.taint(node);
        }
    }

    // ---- callbacks ----

    /// Attach callback methods of classes whose instances carry tainted
    /// member variables: propagation enters the callback from those members.
    /// Deterministic order: instances, then callback names.
    pub fn attach_callbacks(&mut self) {
        let mut attachments: Vec<(String, StmtId, usize)> = Vec::new();
        let instances: Vec<(String, String)> = self
            .instance_of
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        for (instance, class) in instances {
            // tainted member nodes of this instance
            let prefix = format!("{}.", instance);
            let members: Vec<usize> = self
                .graph
                .nodes
                .iter()
                .filter(|n| {
                    n.label.starts_with(&prefix)
                        && self.tainted.contains(&n.id)
                })
                .map(|n| n.id)
                .collect();
            if members.is_empty() {
                continue;
            }
            let mut callbacks: Vec<&FunctionDef> = self
                .prog
                .functions
                .iter()
                .filter(|f| f.class.as_deref() == Some(class.as_str()))
                .filter(|f| {
                    let short = f.name.rsplit('.').next().unwrap_or(&f.name);
                    catalog_matches(&self.opts.callback_catalog, short)
                })
                .collect();
            callbacks.sort_by(|a, b| a.name.cmp(&b.name));
            for cb in callbacks {
                for &m in &members {
                    attachments.push((instance.clone(), cb.stmt_id, m));
                }
            }
        }
        for (instance, cb_stmt, member) in attachments {
            self.entered_instances
                .entry(cb_stmt)
                .or_default()
                .insert(instance.clone());
            // re-expose the member's uses now that the callback is entered
            let member_label = self.graph.nodes[member].label.clone();
            let uses = self.member_uses(&member_label);
            for (use_stmt, used_name) in uses {
                // only wire reads inside this callback
                let in_cb = self
                    .prog
                    .enclosing_function(use_stmt)
                    .map(|f| f.stmt_id == cb_stmt)
                    .unwrap_or(false);
                if !in_cb {
                    continue;
                }
                let before = self.graph.edges.len();
                self.forward_use(member, use_stmt, &used_name);
                // relabel the entry edges as callback edges
                for e in self.graph.edges[before..].iter_mut() {
                    if e.from == member {
                        *e = TaintEdge {
                            from: e.from,
                            to: e.to,
                            label: EdgeLabel::Callback,
                        };
                    }
                }
            }
        }
        self.run_worklist();
        self.flag_unterminated();
    }

    fn flag_unterminated(&mut self) {
        let mut to_sink: BTreeSet<usize> = BTreeSet::new();
        for &s in self.graph.sinks.clone().iter() {
            to_sink.extend(self.graph.ancestors(s));
        }
        for n in &mut self.graph.nodes {
            if matches!(n.subgraph, Subgraph::Lsg | Subgraph::Both) {
                n.unterminated = !to_sink.contains(&n.id);
            }
        }
    }
}

/// Build the upper subgraph only.
pub fn build_usg(
    prog: &ScriptProgram,
    defuse: &DefUse,
    opts: &BuildOptions,
) -> Result<TaintGraph, GraphError> {
    let mut b = Builder::new(prog, defuse, opts)?;
    b.build_usg()?;
    Ok(b.finish())
}

/// Build the lower subgraph only (callbacks attached).
pub fn build_lsg(
    prog: &ScriptProgram,
    defuse: &DefUse,
    opts: &BuildOptions,
) -> Result<TaintGraph, GraphError> {
    let mut b = Builder::new(prog, defuse, opts)?;
    b.build_lsg()?;
    b.attach_callbacks();
    Ok(b.finish())
}

/// Full construction: USG, weights, source trimming, LSG, callbacks.
pub fn build_graph(
    prog: &ScriptProgram,
    defuse: &DefUse,
    opts: &BuildOptions,
) -> Result<(TaintGraph, TrimOutcome), GraphError> {
    let mut b = Builder::new(prog, defuse, opts)?;
    b.build_usg()?;
    b.assign_weights();
    let trim = b.trim_to_sources();
    b.build_lsg()?;
    b.attach_callbacks();
    Ok((b.finish(), trim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{defuse_chains, parse_source, ParseConfig};

    fn setup(text: &str) -> (ScriptProgram, DefUse) {
        let p = parse_source(text, "t.der", &ParseConfig::default()).expect("parse");
        let d = defuse_chains(&p);
        (p, d)
    }

    fn opts(p_vars: &[&str]) -> BuildOptions {
        BuildOptions {
            p_vars: p_vars.iter().map(|s| s.to_string()).collect(),
            source_catalog: vec![
                "GridAPPSD".into(),
                "*.get_response".into(),
                "api_*".into(),
                "get_input".into(),
            ],
            sink_catalog: vec!["*.send".into()],
            callback_catalog: vec!["_on_*".into()],
        }
    }

    #[test]
    fn missing_p_var_is_an_error() {
        let (p, d) = setup("x = 1\n");
        let o = opts(&["nope"]);
        let err = Builder::new(&p, &d, &o).err().unwrap();
        assert!(matches!(err, GraphError::PVarNotFound(_)));
    }

    #[test]
    fn p_var_from_literal_is_single_node_usg() {
        let (p, d) = setup("pv = 310.0\n");
        let g = build_usg(&p, &d, &opts(&["pv"])).unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert_eq!(g.nodes[0].kind, NodeKind::VirtualPhysical);
    }

    #[test]
    fn backtrack_enters_callee_at_return() {
        // inter-procedural flow: z = f5(a, c) with f5 returning d
        let text = "def f5(x, y):\n    d = x + y\n    d = d + 1\n    return d\na = 1\nc = 2\nz = f5(a, c)\n";
        let (p, d) = setup(text);
        let g = build_usg(&p, &d, &opts(&["z"])).unwrap();
        let call = g.find_by_entity("f5(a, c)").expect("call node");
        // the second definition of d feeds the call through a return edge
        let f5 = p.function("f5").unwrap();
        let d2 = f5.body[1];
        let dnode = g
            .nodes
            .iter()
            .find(|n| n.entity.name == "d" && n.stmt_id == Some(d2))
            .expect("return-value node");
        assert!(g
            .edges
            .iter()
            .any(|e| e.from == dnode.id && e.to == call && e.label == EdgeLabel::Return));
        // d = d + 1 depends on the first definition of d
        let d1 = f5.body[0];
        let d1node = g
            .nodes
            .iter()
            .find(|n| n.entity.name == "d" && n.stmt_id == Some(d1))
            .expect("first d node");
        assert!(g.edges.iter().any(|e| e.from == d1node.id && e.to == dnode.id));
        // parameters bind to the entering call site's arguments
        let xparam = g.nodes.iter().find(|n| n.label == "x").expect("param x");
        let adef = g.nodes.iter().find(|n| n.entity.name == "a").expect("a def");
        assert!(g
            .edges
            .iter()
            .any(|e| e.from == adef.id && e.to == xparam.id && e.label == EdgeLabel::ArgPass));
        assert!(g.is_acyclic());
    }

    #[test]
    fn object_bound_call_propagates_object() {
        let text = "conn = GridAPPSD(u, p)\nresp = conn.get_response(q)\npv = resp\n";
        let (p, d) = setup(text);
        let g = build_usg(&p, &d, &opts(&["pv"])).unwrap();
        let call = g.find_by_entity("conn.get_response(q)").unwrap();
        let conn = g.find_by_entity("conn").unwrap();
        assert!(g.edges.iter().any(|e| e.from == conn && e.to == call));
    }

    #[test]
    fn weights_chain_one_onehalf_twohalf() {
        // P_var <- aux <- api_call: weights 1, 1.5, 2.5
        let text = "aux = api_read()\npv = aux\n";
        let (p, d) = setup(text);
        let o = opts(&["pv"]);
        let mut b = Builder::new(&p, &d, &o).unwrap();
        b.build_usg().unwrap();
        b.assign_weights();
        let g = b.finish();
        let pv = g.find_by_entity("pv").unwrap();
        let aux = g.find_by_entity("aux").unwrap();
        let call = g.find_by_entity("api_read()").unwrap();
        assert_eq!(g.nodes[pv].weight, 1.0);
        assert_eq!(g.nodes[aux].weight, 1.5);
        assert_eq!(g.nodes[call].weight, 2.5);
    }

    #[test]
    fn weight_join_takes_max() {
        // two children with different depths join at one parent
        let text = "root = api_read()\na = root\nb = a\npv1 = a\npv2 = b\n";
        let (p, d) = setup(text);
        let o = opts(&["pv1", "pv2"]);
        let mut b = Builder::new(&p, &d, &o).unwrap();
        b.build_usg().unwrap();
        b.assign_weights();
        let g = b.finish();
        let a = g.find_by_entity("a").unwrap();
        // a has children pv1 (w=1) and b (w=1.5): max is 1.5, a adds 0.5
        assert_eq!(g.nodes[a].weight, 2.0);
    }

    #[test]
    fn trim_marks_sources_and_drops_leadins() {
        let text = "u = \"user\"\nconn = GridAPPSD(u, u)\nresp = conn.get_response(q)\npv = resp\n";
        let (p, d) = setup(text);
        let o = opts(&["pv"]);
        let mut b = Builder::new(&p, &d, &o).unwrap();
        b.build_usg().unwrap();
        b.assign_weights();
        let out = b.trim_to_sources();
        let g = b.finish();
        assert_eq!(g.sources.len(), 2, "GridAPPSD and get_response are sources");
        assert!(out.removed.contains(&"u".to_string()));
        // q is an unresolved lead-in above get_response
        assert!(out.removed.contains(&"q".to_string()));
        assert!(g.find_by_entity("conn").is_some(), "conn sits between sources");
    }

    #[test]
    fn trim_keeps_nearest_qualifier_from_root_end() {
        // api_call <- wrapper_fn <- api_call <- ... <- pv: the root-most
        // qualifying call is the source; the deeper one stays unmarked.
        let text = "def wrap(v):\n    return v\nraw = api_read()\nmid = wrap(raw)\nout = api_fetch(mid)\npv = out\n";
        let (p, d) = setup(text);
        let o = opts(&["pv"]);
        let mut b = Builder::new(&p, &d, &o).unwrap();
        b.build_usg().unwrap();
        b.assign_weights();
        let _ = b.trim_to_sources();
        let g = b.finish();
        assert_eq!(g.sources.len(), 1);
        let src = *g.sources.iter().next().unwrap();
        assert_eq!(g.nodes[src].label, "api_read()");
        // the inner qualifying call is retained but not marked
        assert!(g.find_by_entity("api_fetch(mid)").is_some());
    }

    #[test]
    fn pure_aux_path_dropped_with_warning() {
        let text = "x = 5\ny = x\npv = y\n";
        let (p, d) = setup(text);
        let o = opts(&["pv"]);
        let mut b = Builder::new(&p, &d, &o).unwrap();
        b.build_usg().unwrap();
        b.assign_weights();
        let out = b.trim_to_sources();
        assert!(out.no_source);
        assert!(!out.warnings.is_empty());
        let g = b.finish();
        assert_eq!(g.nodes.len(), 1, "only the protected p_var remains");
    }

    #[test]
    fn lsg_stops_at_sink() {
        let text = "pv = 1.0\nmsg = pv * 2.0\nconn.send(topic, msg)\n";
        let (p, d) = setup(text);
        let g = build_lsg(&p, &d, &opts(&["pv"])).unwrap();
        assert_eq!(g.sinks.len(), 1);
        let snk = *g.sinks.iter().next().unwrap();
        assert_eq!(g.nodes[snk].label, "conn.send(topic, msg)");
        assert!(!g.nodes[snk].unterminated || g.sinks.contains(&snk));
        let msg = g.find_by_entity("msg").unwrap();
        assert!(g.edges.iter().any(|e| e.from == msg && e.to == snk));
    }

    #[test]
    fn lsg_unread_p_var_is_single_unterminated_node() {
        let text = "pv = 1.0\n";
        let (p, d) = setup(text);
        let g = build_lsg(&p, &d, &opts(&["pv"])).unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert!(g.nodes[0].unterminated);
        assert!(g.warnings.iter().any(|w| w.contains("no sink")));
    }

    #[test]
    fn forward_enters_known_callee_via_tainted_param_only() {
        // myFunc(x, y, z) with only x tainted: propagation continues
        // through x inside the definition.
        let text = "def myFunc(x, y, z):\n    w = x * 2\n    v = y * 2\n    return w\npv = 1.0\nb = 2.0\nc = 3.0\nr = myFunc(pv, b, c)\nconn.send(t, r)\n";
        let (p, d) = setup(text);
        let g = build_lsg(&p, &d, &opts(&["pv"])).unwrap();
        let f = p.function("myFunc").unwrap();
        let xparam = g
            .nodes
            .iter()
            .find(|n| n.label == "x" && n.stmt_id == Some(f.stmt_id));
        assert!(xparam.is_some(), "tainted parameter x is in the LSG");
        assert!(
            g.nodes.iter().all(|n| n.label != "y" && n.label != "v"),
            "untainted parameters stay out"
        );
        // return flow reaches the call target
        let r = g.find_by_entity("r").expect("call result tainted");
        assert!(g.sinks.len() == 1);
        let w = g.find_by_entity("w").unwrap();
        assert!(g.has_path(w, r));
    }

    #[test]
    fn api_call_propagates_arg_to_result_without_params() {
        let text = "pv = 1.0\nout = api_transform(pv)\nconn.send(t, out)\n";
        let (p, d) = setup(text);
        let g = build_lsg(&p, &d, &opts(&["pv"])).unwrap();
        let call = g.find_by_entity("api_transform(pv)").unwrap();
        let out = g.find_by_entity("out").unwrap();
        assert!(g.edges.iter().any(|e| e.from == call && e.to == out));
    }

    #[test]
    fn callback_joins_lsg_from_tainted_member() {
        let text = "class Listener:\n    def __init__(self, c):\n        self.c = c\n    def record(self, m):\n        self.last = m\n    def _on_message(self, h, b):\n        s = self.last + 1\n        self.ack = s\npv = 1.0\nl = Listener(0)\nl.record(pv)\nconn.send(t, pv)\n";
        let (p, d) = setup(text);
        let g = build_lsg(&p, &d, &opts(&["pv"])).unwrap();
        let member = g.find_by_label("l.last").expect("tainted member node");
        let s = g.find_by_label("s").expect("callback body joins LSG");
        assert!(g.has_path(member, s));
        assert!(g
            .edges
            .iter()
            .any(|e| e.label == EdgeLabel::Callback && e.from == member));
    }

    #[test]
    fn callback_without_tainted_member_not_attached() {
        let text = "class Listener:\n    def _on_message(self, h):\n        s = self.last + 1\n        self.ack = s\npv = 1.0\nl = Listener()\nconn.send(t, pv)\n";
        let (p, d) = setup(text);
        let g = build_lsg(&p, &d, &opts(&["pv"])).unwrap();
        assert!(g.find_by_entity("s").is_none());
    }

    #[test]
    fn two_callbacks_attached_in_name_order() {
        let text = "class L:\n    def record(self, m):\n        self.v = m\n    def _on_b(self, h):\n        x1 = self.v + 1\n    def _on_a(self, h):\n        x2 = self.v + 2\npv = 1.0\nl = L()\nl.record(pv)\nconn.send(t, pv)\n";
        let (p, d) = setup(text);
        let g = build_lsg(&p, &d, &opts(&["pv"])).unwrap();
        let x1 = g.find_by_entity("x1");
        let x2 = g.find_by_entity("x2");
        assert!(x1.is_some() && x2.is_some(), "both callbacks attach");
        // deterministic order by callback name: _on_a's body node precedes _on_b's
        assert!(x2.unwrap() < x1.unwrap());
    }

    #[test]
    fn indirect_connection_not_traversed() {
        // f7 holds the virtual physical variable region and is called by f6;
        // the f6 -> f7 argument binding is never crossed.
        let text = "def f7(a, b):\n    pv = a + b\n    out = pv * 2\n    return out\ndef f6(x, y, z):\n    f7(y, z)\nq = 1\nf6(q, q, q)\n";
        let (p, d) = setup(text);
        let g = build_usg(&p, &d, &opts(&["pv"])).unwrap();
        // parameters a, b are boundary nodes with no incoming edges
        for label in ["a", "b"] {
            let n = g.nodes.iter().find(|n| n.label == label).unwrap();
            assert_eq!(
                g.in_degree(n.id),
                0,
                "no edge crosses the indirect call boundary into {label}"
            );
        }
        assert!(g.find_by_entity("q").is_none());
    }

    #[test]
    fn p_var_nodes_sit_on_both_boundaries() {
        let text = "src = api_read()\npv = src\nout = pv + 1\nconn.send(t, out)\n";
        let (p, d) = setup(text);
        let (g, _) = build_graph(&p, &d, &opts(&["pv"])).unwrap();
        let pv = g.find_by_entity("pv").unwrap();
        assert_eq!(g.nodes[pv].subgraph, Subgraph::Both);
        assert!(g.is_acyclic());
    }
}
