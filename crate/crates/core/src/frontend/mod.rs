//! Frontend for the analyzed DERMS application source.
//!
//! Parses a fixed subset of a dynamically-typed scripting language
//! (assignments, augmented assignments, function/class definitions, calls
//! with positional and keyword arguments, attribute access, subscripts,
//! conditionals, for/while loops, return, literals) into a statement-level
//! intermediate form with definition/use information. Anything outside the
//! subset fails loudly with the offending construct and line.

mod defuse;
mod lexer;
mod parser;

pub use defuse::{defuse_chains, DefSite, DefUse};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::ParseError;

pub type StmtId = usize;

/// Syntactic category of a tainted entity: an identifier, a reference
/// expression, a call, a constructed object, or a literal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntityCategory {
    Identifier,
    AttributeRef,
    SubscriptRef,
    CallResult,
    ObjectCtor,
    Literal,
}

/// A named program entity as it appears in one statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    /// Qualified text, e.g. `response_obj`, `self.last_measure`,
    /// `nominalyvalues[i_equip]`.
    pub name: String,
    pub category: EntityCategory,
    /// Base identifier for attribute and subscript references.
    pub base_object: Option<String>,
}

impl Entity {
    pub fn ident(name: impl Into<String>) -> Self {
        Entity {
            name: name.into(),
            category: EntityCategory::Identifier,
            base_object: None,
        }
    }

    pub fn is_literal(&self) -> bool {
        self.category == EntityCategory::Literal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StmtKind {
    Assign,
    AugAssign,
    Return,
    ExprStmt,
    If,
    Loop,
    FuncDef,
    ClassDef,
}

/// A call site with positional-normalized arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallSite {
    /// Dotted callee text, e.g. `conn.get_response` or `build_query`.
    pub callee: String,
    /// Base object for method calls (`conn` in `conn.get_response`).
    pub base_object: Option<String>,
    pub args: Vec<Entity>,
    /// Keyword arguments that could not be normalized to positions.
    pub kwargs: Vec<(String, Entity)>,
    /// Rendered call text, e.g. `conn.get_response(t.TIMESERIES, message)`.
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stmt {
    pub id: StmtId,
    pub kind: StmtKind,
    pub targets: Vec<Entity>,
    pub sources: Vec<Entity>,
    pub callee: Option<CallSite>,
    /// Then-branch, loop body, function body, or class body.
    #[serde(default)]
    pub body: Vec<StmtId>,
    /// Else-branch of an `If`.
    #[serde(default)]
    pub orelse: Vec<StmtId>,
    pub line: u32,
}

impl Stmt {
    /// Non-literal source entities.
    pub fn value_sources(&self) -> impl Iterator<Item = &Entity> {
        self.sources.iter().filter(|e| !e.is_literal())
    }

    /// True when every source is a literal (and there is at least one).
    pub fn literal_only(&self) -> bool {
        !self.sources.is_empty() && self.sources.iter().all(|e| e.is_literal())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionDef {
    /// Qualified name; methods are `Class.method`.
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<StmtId>,
    pub class: Option<String>,
    pub stmt_id: StmtId,
    pub line: u32,
}

impl FunctionDef {
    pub fn is_method(&self) -> bool {
        self.class.is_some()
    }

    /// Parameters excluding a leading `self`.
    pub fn call_params(&self) -> &[String] {
        if self.is_method() && self.params.first().map(String::as_str) == Some("self") {
            &self.params[1..]
        } else {
            &self.params
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassDef {
    pub name: String,
    /// Qualified method names.
    pub methods: Vec<String>,
    pub stmt_id: StmtId,
    pub line: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParseWarning {
    pub line: u32,
    pub message: String,
}

/// The parsed program: a statement arena plus function/class tables and
/// the set of names bound by imports (resolved as `external`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptProgram {
    pub file: String,
    pub stmts: Vec<Stmt>,
    pub top_level: Vec<StmtId>,
    pub functions: Vec<FunctionDef>,
    pub classes: Vec<ClassDef>,
    pub externals: BTreeSet<String>,
    /// Statement id -> (file, line).
    pub source_map: BTreeMap<StmtId, (String, u32)>,
    pub warnings: Vec<ParseWarning>,
}

impl ScriptProgram {
    pub fn stmt(&self, id: StmtId) -> &Stmt {
        &self.stmts[id]
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn class(&self, name: &str) -> Option<&ClassDef> {
        self.classes.iter().find(|c| c.name == name)
    }

    /// The scope body containing `id`: a function body or the top level.
    pub fn enclosing_function(&self, id: StmtId) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| {
            let mut stack: Vec<StmtId> = f.body.clone();
            while let Some(s) = stack.pop() {
                if s == id {
                    return true;
                }
                stack.extend(&self.stmts[s].body);
                stack.extend(&self.stmts[s].orelse);
            }
            false
        })
    }

    /// Every statement id in a block, recursing through `If`/`Loop` bodies
    /// but not into nested function or class definitions.
    pub fn block_stmts(&self, block: &[StmtId]) -> Vec<StmtId> {
        let mut out = Vec::new();
        let mut stack: Vec<StmtId> = block.iter().rev().copied().collect();
        while let Some(id) = stack.pop() {
            out.push(id);
            let s = &self.stmts[id];
            if matches!(s.kind, StmtKind::FuncDef | StmtKind::ClassDef) {
                continue;
            }
            for child in s.orelse.iter().rev().chain(s.body.iter().rev()) {
                stack.push(*child);
            }
        }
        out
    }

    /// Names that occur as assignment targets or loop targets anywhere.
    pub fn defined_names(&self) -> BTreeSet<String> {
        let mut names = BTreeSet::new();
        for s in &self.stmts {
            for t in &s.targets {
                names.insert(t.name.clone());
            }
        }
        for f in &self.functions {
            for p in &f.params {
                names.insert(p.clone());
            }
        }
        names
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("program serialization")
    }
}

/// Grammar options for the subset parser.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParseConfig {
    /// Treat these names as known externals even without an import.
    #[serde(default)]
    pub extra_externals: Vec<String>,
}

/// Parse source text into the intermediate form, resolving def-use inputs
/// and rejecting constructs outside the subset.
pub fn parse_source(text: &str, file: &str, config: &ParseConfig) -> Result<ScriptProgram, ParseError> {
    let tokens = lexer::lex(text)?;
    let mut program = parser::parse(tokens, file)?;
    program
        .externals
        .extend(config.extra_externals.iter().cloned());
    parser::normalize_kwargs(&mut program);
    parser::mark_unresolved(&mut program);
    Ok(program)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ScriptProgram {
        parse_source(text, "test.der", &ParseConfig::default()).expect("parse")
    }

    #[test]
    fn two_line_def_use() {
        let p = parse("x = get_input()\nz = x\n");
        assert_eq!(p.top_level.len(), 2);
        let z = p.stmt(p.top_level[1]);
        assert_eq!(z.kind, StmtKind::Assign);
        let names: Vec<&str> = z.value_sources().map(|e| e.name.as_str()).collect();
        assert_eq!(names, vec!["x"]);
    }

    #[test]
    fn binary_sources() {
        let p = parse("y = 1\nz = 2\nw = y + z\n");
        let w = p.stmt(p.top_level[2]);
        let names: Vec<&str> = w.value_sources().map(|e| e.name.as_str()).collect();
        assert_eq!(names, vec!["y", "z"]);
    }

    #[test]
    fn assign_has_target_return_does_not() {
        let p = parse("def f(a):\n    return a\nx = f(1)\n");
        let f = p.function("f").unwrap();
        let ret = p.stmt(f.body[0]);
        assert_eq!(ret.kind, StmtKind::Return);
        assert!(ret.targets.is_empty());
        let x = p.stmt(*p.top_level.last().unwrap());
        assert_eq!(x.targets.len(), 1);
    }

    #[test]
    fn nested_call_is_hoisted() {
        let p = parse("x = outer(inner(y))\n");
        // inner(y) becomes a synthetic assignment preceding x's statement.
        assert_eq!(p.top_level.len(), 2);
        let hoisted = p.stmt(p.top_level[0]);
        assert_eq!(hoisted.kind, StmtKind::Assign);
        assert_eq!(hoisted.callee.as_ref().unwrap().callee, "inner");
        assert_eq!(
            hoisted.targets[0].category,
            EntityCategory::CallResult
        );
        let x = p.stmt(p.top_level[1]);
        assert_eq!(x.callee.as_ref().unwrap().callee, "outer");
    }

    #[test]
    fn subscript_and_attribute_carry_base() {
        let p = parse("v = obj.field\nw = arr[i]\n");
        let v = p.stmt(p.top_level[0]);
        let src = &v.sources[0];
        assert_eq!(src.category, EntityCategory::AttributeRef);
        assert_eq!(src.base_object.as_deref(), Some("obj"));
        let w = p.stmt(p.top_level[1]);
        let sub = w
            .sources
            .iter()
            .find(|e| e.category == EntityCategory::SubscriptRef)
            .unwrap();
        assert_eq!(sub.base_object.as_deref(), Some("arr"));
        assert_eq!(sub.name, "arr[i]");
    }

    #[test]
    fn comprehension_rejected() {
        let err =
            parse_source("xs = [a for a in b]\n", "t.der", &ParseConfig::default()).unwrap_err();
        assert!(matches!(err, ParseError::SyntaxOutsideSubset { .. }));
    }

    #[test]
    fn duplicate_function_rejected() {
        let err = parse_source(
            "def f():\n    pass\ndef f():\n    pass\n",
            "t.der",
            &ParseConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ParseError::DuplicateFunction { .. }));
    }

    #[test]
    fn unresolved_name_downgraded_to_warning() {
        let p = parse("x = mystery\n");
        assert!(!p.warnings.is_empty());
        assert!(p.externals.contains("mystery"));
    }

    #[test]
    fn imports_register_externals() {
        let p = parse("import json\nfrom gridappsd import GridAPPSD, topics as t\nx = 1\n");
        assert!(p.externals.contains("json"));
        assert!(p.externals.contains("GridAPPSD"));
        assert!(p.externals.contains("t"));
        assert_eq!(p.top_level.len(), 1);
    }

    #[test]
    fn keyword_args_normalized_for_known_callee() {
        let p = parse("def f(a, b):\n    return a\nx = f(b=2, a=1)\n");
        let x = p.stmt(*p.top_level.last().unwrap());
        let call = x.callee.as_ref().unwrap();
        assert!(call.kwargs.is_empty());
        assert_eq!(call.args.len(), 2);
        assert_eq!(call.args[0].name, "1");
        assert_eq!(call.args[1].name, "2");
    }

    #[test]
    fn keyword_args_kept_for_unknown_callee() {
        let p = parse("x = api(stamp=q)\n");
        let call = p.stmt(p.top_level[0]).callee.as_ref().unwrap();
        assert_eq!(call.kwargs.len(), 1);
        assert_eq!(call.kwargs[0].0, "stamp");
    }

    #[test]
    fn intermediate_form_json_roundtrip_is_stable() {
        let text = "def f(a):\n    d = a + 1\n    return d\nx = f(2)\ny = x\n";
        let p = parse(text);
        let json1 = p.to_json();
        let back: ScriptProgram = serde_json::from_str(&json1).unwrap();
        let json2 = back.to_json();
        assert_eq!(json1, json2);
    }

    #[test]
    fn every_source_is_defined_param_or_external() {
        let text = "import mod\ndef f(a):\n    b = a + mod.K\n    return b\nx = f(1)\ny = x + 2\n";
        let p = parse(text);
        let defined = p.defined_names();
        for s in &p.stmts {
            for e in s.value_sources() {
                let base = e.base_object.clone().unwrap_or_else(|| e.name.clone());
                let root = base.split('.').next().unwrap().to_string();
                assert!(
                    defined.contains(&e.name)
                        || defined.contains(&base)
                        || defined.contains(&root)
                        || p.externals.contains(&root),
                    "entity {} neither defined nor external",
                    e.name
                );
            }
        }
    }
}
