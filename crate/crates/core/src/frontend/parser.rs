//! Recursive-descent parser producing the statement-level IR.
//!
//! Expressions are parsed into a small AST and lowered immediately. Calls
//! nested inside larger expressions are hoisted into synthetic assignments to
//! `__tN` temporaries, so every statement carries at most one call site.

use std::collections::BTreeSet;

use super::lexer::{Tok, Token};
use super::{
    CallSite, ClassDef, Entity, EntityCategory, FunctionDef, ParseWarning, ScriptProgram, Stmt,
    StmtId, StmtKind,
};
use crate::error::ParseError;

#[derive(Debug, Clone)]
enum Expr {
    Name(String),
    Attr(Box<Expr>, String),
    Subscript(Box<Expr>, Box<Expr>),
    Call {
        func: Box<Expr>,
        args: Vec<Expr>,
        kwargs: Vec<(String, Expr)>,
    },
    Num(String),
    Str(String),
    Bool(bool),
    NoneLit,
    Bin(Box<Expr>, &'static str, Box<Expr>),
    Unary(&'static str, Box<Expr>),
    List(Vec<Expr>),
    Dict(Vec<(Expr, Expr)>),
    Tuple(Vec<Expr>),
}

fn expr_text(e: &Expr) -> String {
    match e {
        Expr::Name(n) => n.clone(),
        Expr::Attr(b, a) => format!("{}.{}", expr_text(b), a),
        Expr::Subscript(b, i) => format!("{}[{}]", expr_text(b), expr_text(i)),
        Expr::Call { func, args, kwargs } => {
            let mut parts: Vec<String> = args.iter().map(expr_text).collect();
            parts.extend(kwargs.iter().map(|(k, v)| format!("{}={}", k, expr_text(v))));
            format!("{}({})", expr_text(func), parts.join(", "))
        }
        Expr::Num(n) => n.clone(),
        Expr::Str(s) => format!("\"{}\"", s),
        Expr::Bool(b) => if *b { "True" } else { "False" }.into(),
        Expr::NoneLit => "None".into(),
        Expr::Bin(l, op, r) => format!("{} {} {}", expr_text(l), op, expr_text(r)),
        Expr::Unary(op, r) => format!("{}{}", op, expr_text(r)),
        Expr::List(xs) => format!(
            "[{}]",
            xs.iter().map(expr_text).collect::<Vec<_>>().join(", ")
        ),
        Expr::Dict(kvs) => format!(
            "{{{}}}",
            kvs.iter()
                .map(|(k, v)| format!("{}: {}", expr_text(k), expr_text(v)))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        Expr::Tuple(xs) => format!(
            "({})",
            xs.iter().map(expr_text).collect::<Vec<_>>().join(", ")
        ),
    }
}

/// True for expressions that form a stable reference path (usable as an
/// entity name without hoisting).
fn is_ref_path(e: &Expr) -> bool {
    match e {
        Expr::Name(_) => true,
        Expr::Attr(b, _) => is_ref_path(b),
        Expr::Subscript(b, i) => is_ref_path(b) && matches!(**i, Expr::Name(_) | Expr::Num(_) | Expr::Str(_)),
        _ => false,
    }
}

fn base_root(e: &Expr) -> Option<String> {
    match e {
        Expr::Name(n) => Some(n.clone()),
        Expr::Attr(b, _) => Some(expr_text(b)),
        Expr::Subscript(b, _) => Some(expr_text(b)),
        _ => None,
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    file: String,
    stmts: Vec<Stmt>,
    functions: Vec<FunctionDef>,
    classes: Vec<ClassDef>,
    externals: BTreeSet<String>,
    warnings: Vec<ParseWarning>,
    temp_counter: usize,
}

pub fn parse(toks: Vec<Token>, file: &str) -> Result<ScriptProgram, ParseError> {
    let mut p = Parser {
        toks,
        pos: 0,
        file: file.to_string(),
        stmts: Vec::new(),
        functions: Vec::new(),
        classes: Vec::new(),
        externals: BTreeSet::new(),
        warnings: Vec::new(),
        temp_counter: 0,
    };
    let mut top = Vec::new();
    while !p.at(&Tok::Eof) {
        p.skip_newlines();
        if p.at(&Tok::Eof) {
            break;
        }
        let ids = p.statement(None)?;
        top.extend(ids);
        p.skip_newlines();
    }
    let source_map = p
        .stmts
        .iter()
        .map(|s| (s.id, (p.file.clone(), s.line)))
        .collect();
    Ok(ScriptProgram {
        file: p.file,
        stmts: p.stmts,
        top_level: top,
        functions: p.functions,
        classes: p.classes,
        externals: p.externals,
        source_map,
        warnings: p.warnings,
    })
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn line(&self) -> u32 {
        self.toks[self.pos].line
    }

    fn at(&self, t: &Tok) -> bool {
        self.peek() == t
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<(), ParseError> {
        if self.at(t) {
            self.bump();
            Ok(())
        } else {
            Err(ParseError::Malformed {
                line: self.line(),
                detail: format!("expected {}, found {:?}", what, self.peek()),
            })
        }
    }

    fn skip_newlines(&mut self) {
        while self.at(&Tok::Newline) {
            self.bump();
        }
    }

    fn outside(&self, construct: &str) -> ParseError {
        ParseError::SyntaxOutsideSubset {
            line: self.line(),
            construct: construct.into(),
        }
    }

    fn new_stmt(&mut self, kind: StmtKind, line: u32) -> StmtId {
        let id = self.stmts.len();
        self.stmts.push(Stmt {
            id,
            kind,
            targets: Vec::new(),
            sources: Vec::new(),
            callee: None,
            body: Vec::new(),
            orelse: Vec::new(),
            line,
        });
        id
    }

    /// Parse one statement; returns the ids emitted (hoisted temporaries
    /// precede the main statement).
    fn statement(&mut self, class: Option<&str>) -> Result<Vec<StmtId>, ParseError> {
        let line = self.line();
        match self.peek().clone() {
            Tok::KwDef => self.funcdef(class).map(|id| vec![id]),
            Tok::KwClass => self.classdef().map(|id| vec![id]),
            Tok::KwIf => self.if_stmt().map(|v| v),
            Tok::KwFor => self.for_stmt(),
            Tok::KwWhile => self.while_stmt(),
            Tok::KwReturn => {
                self.bump();
                let mut pre = Vec::new();
                let sources = if self.at(&Tok::Newline) {
                    Vec::new()
                } else {
                    let e = self.expression()?;
                    self.lower_sources(&e, &mut pre)?
                };
                self.expect(&Tok::Newline, "newline")?;
                let id = self.new_stmt(StmtKind::Return, line);
                self.stmts[id].sources = sources;
                pre.push(id);
                Ok(pre)
            }
            Tok::KwPass => {
                self.bump();
                self.expect(&Tok::Newline, "newline")?;
                Ok(vec![])
            }
            Tok::KwBreak | Tok::KwContinue => {
                self.bump();
                self.expect(&Tok::Newline, "newline")?;
                // Control transfer only; no entities. Modeled as an empty
                // expression statement to keep ids stable.
                let id = self.new_stmt(StmtKind::ExprStmt, line);
                Ok(vec![id])
            }
            Tok::KwImport => {
                self.import_stmt()?;
                Ok(vec![])
            }
            Tok::KwFrom => {
                self.from_import_stmt()?;
                Ok(vec![])
            }
            _ => self.simple_stmt(),
        }
    }

    fn import_stmt(&mut self) -> Result<(), ParseError> {
        self.bump(); // import
        loop {
            let root = self.ident("module name")?;
            let mut last = root.clone();
            while self.at(&Tok::Dot) {
                self.bump();
                last = self.ident("module path")?;
            }
            if self.at(&Tok::KwAs) {
                self.bump();
                let alias = self.ident("import alias")?;
                self.externals.insert(alias);
            } else {
                let _ = last;
                self.externals.insert(root);
            }
            if self.at(&Tok::Comma) {
                self.bump();
            } else {
                break;
            }
        }
        self.expect(&Tok::Newline, "newline")
    }

    fn from_import_stmt(&mut self) -> Result<(), ParseError> {
        self.bump(); // from
        let _module = self.ident("module name")?;
        while self.at(&Tok::Dot) {
            self.bump();
            self.ident("module path")?;
        }
        if !self.at(&Tok::KwImport) {
            return Err(ParseError::Malformed {
                line: self.line(),
                detail: "expected `import` in from-import".into(),
            });
        }
        self.bump();
        if self.at(&Tok::Star) {
            return Err(self.outside("star import"));
        }
        loop {
            let name = self.ident("imported name")?;
            if self.at(&Tok::KwAs) {
                self.bump();
                let alias = self.ident("import alias")?;
                self.externals.insert(alias);
            } else {
                self.externals.insert(name);
            }
            if self.at(&Tok::Comma) {
                self.bump();
            } else {
                break;
            }
        }
        self.expect(&Tok::Newline, "newline")
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(n) => {
                self.bump();
                Ok(n)
            }
            other => Err(ParseError::Malformed {
                line: self.line(),
                detail: format!("expected {what}, found {other:?}"),
            }),
        }
    }

    fn funcdef(&mut self, class: Option<&str>) -> Result<StmtId, ParseError> {
        let line = self.line();
        self.bump(); // def
        let short = self.ident("function name")?;
        self.expect(&Tok::LParen, "(")?;
        let mut params = Vec::new();
        while !self.at(&Tok::RParen) {
            if self.at(&Tok::Star) || self.at(&Tok::DoubleStar) {
                return Err(self.outside("star parameters"));
            }
            let p = self.ident("parameter name")?;
            if self.at(&Tok::Assign) {
                return Err(self.outside("default parameter value"));
            }
            params.push(p);
            if self.at(&Tok::Comma) {
                self.bump();
            }
        }
        self.expect(&Tok::RParen, ")")?;
        self.expect(&Tok::Colon, ":")?;
        let body = self.block(class)?;
        let id = self.new_stmt(StmtKind::FuncDef, line);
        self.stmts[id].body = body.clone();
        let qualified = match class {
            Some(c) => format!("{}.{}", c, short),
            None => short.clone(),
        };
        if self.functions.iter().any(|f| f.name == qualified) {
            return Err(ParseError::DuplicateFunction {
                name: qualified,
                line,
            });
        }
        self.functions.push(FunctionDef {
            name: qualified,
            params,
            body,
            class: class.map(str::to_string),
            stmt_id: id,
            line,
        });
        Ok(id)
    }

    fn classdef(&mut self) -> Result<StmtId, ParseError> {
        let line = self.line();
        self.bump(); // class
        let name = self.ident("class name")?;
        if self.at(&Tok::LParen) {
            // base classes are accepted and ignored
            self.bump();
            while !self.at(&Tok::RParen) {
                self.bump();
            }
            self.expect(&Tok::RParen, ")")?;
        }
        self.expect(&Tok::Colon, ":")?;
        self.expect(&Tok::Newline, "newline")?;
        self.expect(&Tok::Indent, "indented class body")?;
        let mut body = Vec::new();
        let mut methods = Vec::new();
        while !self.at(&Tok::Dedent) && !self.at(&Tok::Eof) {
            self.skip_newlines();
            if self.at(&Tok::Dedent) {
                break;
            }
            match self.peek() {
                Tok::KwDef => {
                    let before = self.functions.len();
                    let id = self.funcdef(Some(&name))?;
                    body.push(id);
                    for f in &self.functions[before..] {
                        methods.push(f.name.clone());
                    }
                }
                Tok::KwPass => {
                    self.bump();
                    self.expect(&Tok::Newline, "newline")?;
                }
                Tok::Str(_) => {
                    // docstring
                    self.bump();
                    self.expect(&Tok::Newline, "newline")?;
                }
                _ => return Err(self.outside("class-level statement other than def")),
            }
            self.skip_newlines();
        }
        self.expect(&Tok::Dedent, "dedent")?;
        let id = self.new_stmt(StmtKind::ClassDef, line);
        self.stmts[id].body = body;
        self.classes.push(ClassDef {
            name,
            methods,
            stmt_id: id,
            line,
        });
        Ok(id)
    }

    fn block(&mut self, class: Option<&str>) -> Result<Vec<StmtId>, ParseError> {
        self.expect(&Tok::Newline, "newline")?;
        self.expect(&Tok::Indent, "indented block")?;
        let mut out = Vec::new();
        while !self.at(&Tok::Dedent) && !self.at(&Tok::Eof) {
            self.skip_newlines();
            if self.at(&Tok::Dedent) {
                break;
            }
            out.extend(self.statement(class)?);
            self.skip_newlines();
        }
        self.expect(&Tok::Dedent, "dedent")?;
        Ok(out)
    }

    fn if_stmt(&mut self) -> Result<Vec<StmtId>, ParseError> {
        let line = self.line();
        self.bump(); // if / elif
        let cond = self.expression()?;
        let mut pre = Vec::new();
        let cond_sources = self.lower_sources(&cond, &mut pre)?;
        self.expect(&Tok::Colon, ":")?;
        let body = self.block(None)?;
        let mut orelse = Vec::new();
        if self.at(&Tok::KwElif) {
            orelse = self.if_stmt()?;
        } else if self.at(&Tok::KwElse) {
            self.bump();
            self.expect(&Tok::Colon, ":")?;
            orelse = self.block(None)?;
        }
        let id = self.new_stmt(StmtKind::If, line);
        self.stmts[id].sources = cond_sources;
        self.stmts[id].body = body;
        self.stmts[id].orelse = orelse;
        pre.push(id);
        Ok(pre)
    }

    fn for_stmt(&mut self) -> Result<Vec<StmtId>, ParseError> {
        let line = self.line();
        self.bump(); // for
        let target = self.ident("loop variable")?;
        if self.at(&Tok::Comma) {
            return Err(self.outside("tuple loop target"));
        }
        if !self.at(&Tok::KwIn) {
            return Err(ParseError::Malformed {
                line: self.line(),
                detail: "expected `in`".into(),
            });
        }
        self.bump();
        let iter = self.expression()?;
        let mut pre = Vec::new();
        let sources = self.lower_sources(&iter, &mut pre)?;
        self.expect(&Tok::Colon, ":")?;
        let body = self.block(None)?;
        let id = self.new_stmt(StmtKind::Loop, line);
        self.stmts[id].targets = vec![Entity::ident(target)];
        self.stmts[id].sources = sources;
        self.stmts[id].body = body;
        pre.push(id);
        Ok(pre)
    }

    fn while_stmt(&mut self) -> Result<Vec<StmtId>, ParseError> {
        let line = self.line();
        self.bump();
        let cond = self.expression()?;
        let mut pre = Vec::new();
        let sources = self.lower_sources(&cond, &mut pre)?;
        self.expect(&Tok::Colon, ":")?;
        let body = self.block(None)?;
        let id = self.new_stmt(StmtKind::Loop, line);
        self.stmts[id].sources = sources;
        self.stmts[id].body = body;
        pre.push(id);
        Ok(pre)
    }

    /// Assignment, augmented assignment, or expression statement.
    fn simple_stmt(&mut self) -> Result<Vec<StmtId>, ParseError> {
        let line = self.line();
        let first = self.expression()?;

        let aug = match self.peek() {
            Tok::PlusEq => Some("+"),
            Tok::MinusEq => Some("-"),
            Tok::StarEq => Some("*"),
            Tok::SlashEq => Some("/"),
            _ => None,
        };
        if let Some(op) = aug {
            self.bump();
            let rhs = self.expression()?;
            self.expect(&Tok::Newline, "newline")?;
            let target = self.target_entity(&first)?;
            let mut pre = Vec::new();
            let mut sources = vec![self.read_entity_of(&first)?];
            let combined = Expr::Bin(Box::new(first), op, Box::new(rhs));
            // reuse source lowering on the RHS only; the Bin wrapper keeps
            // the target's own prior value in sources.
            if let Expr::Bin(_, _, r) = &combined {
                sources.extend(self.lower_sources(r, &mut pre)?);
            }
            let id = self.new_stmt(StmtKind::AugAssign, line);
            self.stmts[id].targets = vec![target];
            self.stmts[id].sources = sources;
            pre.push(id);
            return Ok(pre);
        }

        if self.at(&Tok::Assign) {
            self.bump();
            let rhs = self.expression()?;
            if self.at(&Tok::Assign) {
                return Err(self.outside("chained assignment"));
            }
            self.expect(&Tok::Newline, "newline")?;
            if matches!(first, Expr::Tuple(_)) {
                return Err(self.outside("tuple assignment"));
            }
            let target = self.target_entity(&first)?;
            let mut pre = Vec::new();
            // Index reads on a subscript target contribute as sources.
            let mut sources = Vec::new();
            if let Expr::Subscript(_, idx) = &first {
                sources.extend(self.lower_sources(idx, &mut pre)?);
            }
            let id_kind = StmtKind::Assign;
            // A call as the entire RHS stays on this statement.
            if let Expr::Call { .. } = &rhs {
                let (call, call_sources, mut hoisted) = self.lower_call(&rhs)?;
                pre.append(&mut hoisted);
                sources.extend(call_sources);
                let id = self.new_stmt(id_kind, line);
                self.stmts[id].targets = vec![target];
                self.stmts[id].sources = sources;
                self.stmts[id].callee = Some(call);
                pre.push(id);
                return Ok(pre);
            }
            sources.extend(self.lower_sources(&rhs, &mut pre)?);
            let id = self.new_stmt(id_kind, line);
            self.stmts[id].targets = vec![target];
            self.stmts[id].sources = sources;
            pre.push(id);
            return Ok(pre);
        }

        // expression statement
        self.expect(&Tok::Newline, "newline")?;
        let mut pre = Vec::new();
        match &first {
            Expr::Call { .. } => {
                let (call, sources, mut hoisted) = self.lower_call(&first)?;
                pre.append(&mut hoisted);
                let id = self.new_stmt(StmtKind::ExprStmt, line);
                self.stmts[id].sources = sources;
                self.stmts[id].callee = Some(call);
                pre.push(id);
            }
            Expr::Str(_) => {
                // docstring or free-standing string; keep as a literal-only
                // expression statement
                let id = self.new_stmt(StmtKind::ExprStmt, line);
                self.stmts[id].sources = vec![Entity {
                    name: expr_text(&first),
                    category: EntityCategory::Literal,
                    base_object: None,
                }];
                pre.push(id);
            }
            _ => {
                let sources = self.lower_sources(&first, &mut pre)?;
                let id = self.new_stmt(StmtKind::ExprStmt, line);
                self.stmts[id].sources = sources;
                pre.push(id);
            }
        }
        Ok(pre)
    }

    fn target_entity(&self, e: &Expr) -> Result<Entity, ParseError> {
        match e {
            Expr::Name(n) => Ok(Entity::ident(n.clone())),
            Expr::Attr(b, a) if is_ref_path(b) => Ok(Entity {
                name: format!("{}.{}", expr_text(b), a),
                category: EntityCategory::AttributeRef,
                base_object: Some(expr_text(b)),
            }),
            Expr::Subscript(b, i) if is_ref_path(b) => Ok(Entity {
                name: format!("{}[{}]", expr_text(b), expr_text(i)),
                category: EntityCategory::SubscriptRef,
                base_object: Some(expr_text(b)),
            }),
            _ => Err(ParseError::Malformed {
                line: 0,
                detail: format!("invalid assignment target `{}`", expr_text(e)),
            }),
        }
    }

    /// Entity for reading a reference-path expression.
    fn read_entity_of(&self, e: &Expr) -> Result<Entity, ParseError> {
        self.target_entity(e)
    }

    /// Lower an expression to its source entities, hoisting nested calls
    /// into synthetic assignments appended to `pre`.
    fn lower_sources(&mut self, e: &Expr, pre: &mut Vec<StmtId>) -> Result<Vec<Entity>, ParseError> {
        let mut out = Vec::new();
        self.lower_into(e, pre, &mut out)?;
        Ok(out)
    }

    fn lower_into(
        &mut self,
        e: &Expr,
        pre: &mut Vec<StmtId>,
        out: &mut Vec<Entity>,
    ) -> Result<(), ParseError> {
        match e {
            Expr::Name(n) => out.push(Entity::ident(n.clone())),
            Expr::Attr(..) | Expr::Subscript(..) if is_ref_path(e) => {
                let ent = self.target_entity(e)?;
                // an identifier index is itself a read
                if let Expr::Subscript(_, idx) = e {
                    if let Expr::Name(n) = &**idx {
                        out.push(Entity::ident(n.clone()));
                    }
                }
                out.push(ent);
            }
            Expr::Attr(b, _) | Expr::Subscript(b, _) => {
                // non-path base (e.g. f().x): hoist the base
                let tmp = self.hoist(b, pre)?;
                let rebuilt = match e {
                    Expr::Attr(_, a) => Expr::Attr(Box::new(Expr::Name(tmp)), a.clone()),
                    Expr::Subscript(_, i) => {
                        Expr::Subscript(Box::new(Expr::Name(tmp)), i.clone())
                    }
                    _ => unreachable!(),
                };
                self.lower_into(&rebuilt, pre, out)?;
            }
            Expr::Call { .. } => {
                let tmp = self.hoist(e, pre)?;
                out.push(Entity {
                    name: tmp,
                    category: EntityCategory::CallResult,
                    base_object: None,
                });
            }
            Expr::Num(n) => out.push(Entity {
                name: n.clone(),
                category: EntityCategory::Literal,
                base_object: None,
            }),
            Expr::Str(s) => out.push(Entity {
                name: format!("\"{}\"", s),
                category: EntityCategory::Literal,
                base_object: None,
            }),
            Expr::Bool(_) | Expr::NoneLit => out.push(Entity {
                name: expr_text(e),
                category: EntityCategory::Literal,
                base_object: None,
            }),
            Expr::Bin(l, _, r) => {
                self.lower_into(l, pre, out)?;
                self.lower_into(r, pre, out)?;
            }
            Expr::Unary(_, r) => self.lower_into(r, pre, out)?,
            Expr::List(xs) | Expr::Tuple(xs) => {
                for x in xs {
                    self.lower_into(x, pre, out)?;
                }
                if xs.iter().all(|x| matches!(x, Expr::Num(_) | Expr::Str(_) | Expr::Bool(_) | Expr::NoneLit)) {
                    out.push(Entity {
                        name: expr_text(e),
                        category: EntityCategory::Literal,
                        base_object: None,
                    });
                }
            }
            Expr::Dict(kvs) => {
                let mut all_literal = true;
                for (k, v) in kvs {
                    let before = out.len();
                    self.lower_into(k, pre, out)?;
                    self.lower_into(v, pre, out)?;
                    if out[before..].iter().any(|e| !e.is_literal()) {
                        all_literal = false;
                    }
                }
                if all_literal {
                    // collapse pure-literal dict entities into one literal
                    out.retain(|e| !e.is_literal());
                    out.push(Entity {
                        name: expr_text(e),
                        category: EntityCategory::Literal,
                        base_object: None,
                    });
                }
            }
        }
        Ok(())
    }

    /// Hoist a call (or call-base) expression into `__tN = expr`.
    fn hoist(&mut self, e: &Expr, pre: &mut Vec<StmtId>) -> Result<String, ParseError> {
        let name = format!("__t{}", self.temp_counter);
        self.temp_counter += 1;
        match e {
            Expr::Call { .. } => {
                let (call, sources, mut hoisted) = self.lower_call(e)?;
                pre.append(&mut hoisted);
                let id = self.new_stmt(StmtKind::Assign, call_line(&self.toks, self.pos));
                self.stmts[id].targets = vec![Entity {
                    name: name.clone(),
                    category: EntityCategory::CallResult,
                    base_object: None,
                }];
                self.stmts[id].sources = sources;
                self.stmts[id].callee = Some(call);
                pre.push(id);
            }
            other => {
                let mut inner = Vec::new();
                let sources = self.lower_sources(other, &mut inner)?;
                pre.append(&mut inner);
                let id = self.new_stmt(StmtKind::Assign, call_line(&self.toks, self.pos));
                self.stmts[id].targets = vec![Entity::ident(name.clone())];
                self.stmts[id].sources = sources;
                pre.push(id);
            }
        }
        Ok(name)
    }

    /// Lower a call expression to a CallSite plus its source entities
    /// (arguments, keyword values, and the bound object).
    fn lower_call(&mut self, e: &Expr) -> Result<(CallSite, Vec<Entity>, Vec<StmtId>), ParseError> {
        let Expr::Call { func, args, kwargs } = e else {
            unreachable!("lower_call on non-call");
        };
        if !is_ref_path(func) {
            return Err(self.outside("call on a computed callee"));
        }
        let callee = expr_text(func);
        let base_object = match &**func {
            Expr::Attr(b, _) => base_root(&Expr::Attr(b.clone(), String::new()))
                .map(|_| expr_text(b)),
            _ => None,
        };
        let mut pre = Vec::new();
        let mut sources = Vec::new();
        let mut arg_entities = Vec::new();
        for a in args {
            let ents = self.lower_sources(a, &mut pre)?;
            // the argument entity proper is the last lowered entity when the
            // argument is a single reference; compound arguments keep all
            // their reads as sources and pass a synthetic expression entity
            let arg_entity = if ents.len() == 1 {
                ents[0].clone()
            } else {
                match ents.iter().rfind(|e| !e.is_literal()) {
                    Some(ent) => ent.clone(),
                    None => Entity {
                        name: expr_text(a),
                        category: EntityCategory::Literal,
                        base_object: None,
                    },
                }
            };
            sources.extend(ents.clone());
            arg_entities.push(arg_entity);
        }
        let mut kw_entities = Vec::new();
        for (k, v) in kwargs {
            let ents = self.lower_sources(v, &mut pre)?;
            let ent = ents
                .iter()
                .rfind(|e| !e.is_literal())
                .cloned()
                .unwrap_or_else(|| Entity {
                    name: expr_text(v),
                    category: EntityCategory::Literal,
                    base_object: None,
                });
            sources.extend(ents);
            kw_entities.push((k.clone(), ent));
        }
        if let Some(obj) = &base_object {
            sources.push(Entity::ident(obj.clone()));
        }
        let call = CallSite {
            callee,
            base_object,
            args: arg_entities,
            kwargs: kw_entities,
            text: expr_text(e),
        };
        Ok((call, sources, pre))
    }

    // ---- expression grammar ----

    fn expression(&mut self) -> Result<Expr, ParseError> {
        let e = self.or_expr()?;
        if self.at(&Tok::KwIf) {
            return Err(self.outside("conditional expression"));
        }
        Ok(e)
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.and_expr()?;
        while self.at(&Tok::KwOr) {
            self.bump();
            let right = self.and_expr()?;
            left = Expr::Bin(Box::new(left), "or", Box::new(right));
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.not_expr()?;
        while self.at(&Tok::KwAnd) {
            self.bump();
            let right = self.not_expr()?;
            left = Expr::Bin(Box::new(left), "and", Box::new(right));
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if self.at(&Tok::KwNot) {
            self.bump();
            let inner = self.not_expr()?;
            return Ok(Expr::Unary("not ", Box::new(inner)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.arith()?;
        loop {
            let op = match self.peek() {
                Tok::EqEq => "==",
                Tok::NotEq => "!=",
                Tok::Lt => "<",
                Tok::Le => "<=",
                Tok::Gt => ">",
                Tok::Ge => ">=",
                Tok::KwIn => "in",
                Tok::KwIs => "is",
                _ => break,
            };
            self.bump();
            if op == "is" && self.at(&Tok::KwNot) {
                self.bump();
            }
            let right = self.arith()?;
            left = Expr::Bin(Box::new(left), op, Box::new(right));
        }
        Ok(left)
    }

    fn arith(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => "+",
                Tok::Minus => "-",
                _ => break,
            };
            self.bump();
            let right = self.term()?;
            left = Expr::Bin(Box::new(left), op, Box::new(right));
        }
        Ok(left)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => "*",
                Tok::Slash => "/",
                Tok::DoubleSlash => "//",
                Tok::Percent => "%",
                Tok::DoubleStar => "**",
                _ => break,
            };
            self.bump();
            let right = self.unary()?;
            left = Expr::Bin(Box::new(left), op, Box::new(right));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.at(&Tok::Minus) {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::Unary("-", Box::new(inner)));
        }
        if self.at(&Tok::Plus) {
            self.bump();
            return self.unary();
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.atom()?;
        loop {
            match self.peek() {
                Tok::Dot => {
                    self.bump();
                    let attr = self.ident("attribute name")?;
                    e = Expr::Attr(Box::new(e), attr);
                }
                Tok::LBracket => {
                    self.bump();
                    let idx = self.expression()?;
                    if self.at(&Tok::Colon) {
                        return Err(self.outside("slice expression"));
                    }
                    self.expect(&Tok::RBracket, "]")?;
                    e = Expr::Subscript(Box::new(e), Box::new(idx));
                }
                Tok::LParen => {
                    self.bump();
                    let mut args = Vec::new();
                    let mut kwargs = Vec::new();
                    while !self.at(&Tok::RParen) {
                        if self.at(&Tok::Star) || self.at(&Tok::DoubleStar) {
                            return Err(self.outside("star arguments"));
                        }
                        // keyword argument: IDENT '=' expr
                        let is_kw = matches!(self.peek(), Tok::Ident(_))
                            && self.toks.get(self.pos + 1).map(|t| &t.tok) == Some(&Tok::Assign);
                        if is_kw {
                            let k = self.ident("keyword name")?;
                            self.expect(&Tok::Assign, "=")?;
                            let v = self.expression()?;
                            kwargs.push((k, v));
                        } else {
                            if !kwargs.is_empty() {
                                return Err(ParseError::Malformed {
                                    line: self.line(),
                                    detail: "positional argument after keyword argument".into(),
                                });
                            }
                            args.push(self.expression()?);
                        }
                        if self.at(&Tok::Comma) {
                            self.bump();
                        }
                    }
                    self.expect(&Tok::RParen, ")")?;
                    e = Expr::Call {
                        func: Box::new(e),
                        args,
                        kwargs,
                    };
                }
                _ => break,
            }
        }
        Ok(e)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Ident(n) => {
                self.bump();
                Ok(Expr::Name(n))
            }
            Tok::Number(n) => {
                self.bump();
                Ok(Expr::Num(n))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Str(s))
            }
            Tok::KwTrue => {
                self.bump();
                Ok(Expr::Bool(true))
            }
            Tok::KwFalse => {
                self.bump();
                Ok(Expr::Bool(false))
            }
            Tok::KwNone => {
                self.bump();
                Ok(Expr::NoneLit)
            }
            Tok::LParen => {
                self.bump();
                let first = self.expression()?;
                if self.at(&Tok::Comma) {
                    let mut items = vec![first];
                    while self.at(&Tok::Comma) {
                        self.bump();
                        if self.at(&Tok::RParen) {
                            break;
                        }
                        items.push(self.expression()?);
                    }
                    self.expect(&Tok::RParen, ")")?;
                    Ok(Expr::Tuple(items))
                } else {
                    self.expect(&Tok::RParen, ")")?;
                    Ok(first)
                }
            }
            Tok::LBracket => {
                self.bump();
                let mut items = Vec::new();
                while !self.at(&Tok::RBracket) {
                    let item = self.expression()?;
                    if self.at(&Tok::KwFor) {
                        return Err(self.outside("comprehension"));
                    }
                    items.push(item);
                    if self.at(&Tok::Comma) {
                        self.bump();
                    }
                }
                self.expect(&Tok::RBracket, "]")?;
                Ok(Expr::List(items))
            }
            Tok::LBrace => {
                self.bump();
                let mut kvs = Vec::new();
                while !self.at(&Tok::RBrace) {
                    let k = self.expression()?;
                    if self.at(&Tok::KwFor) {
                        return Err(self.outside("comprehension"));
                    }
                    self.expect(&Tok::Colon, ":")?;
                    let v = self.expression()?;
                    if self.at(&Tok::KwFor) {
                        return Err(self.outside("comprehension"));
                    }
                    kvs.push((k, v));
                    if self.at(&Tok::Comma) {
                        self.bump();
                    }
                }
                self.expect(&Tok::RBrace, "}")?;
                Ok(Expr::Dict(kvs))
            }
            other => Err(ParseError::Malformed {
                line: self.line(),
                detail: format!("unexpected token {other:?}"),
            }),
        }
    }
}

fn call_line(toks: &[Token], pos: usize) -> u32 {
    toks[pos.min(toks.len() - 1)].line
}

/// Normalize keyword arguments to positional order when the callee is a
/// known free function; method calls and unknown callees keep keywords.
pub fn normalize_kwargs(program: &mut ScriptProgram) {
    let table: Vec<(String, Vec<String>)> = program
        .functions
        .iter()
        .map(|f| (f.name.clone(), f.params.clone()))
        .collect();
    for stmt in &mut program.stmts {
        let Some(call) = &mut stmt.callee else { continue };
        if call.kwargs.is_empty() {
            continue;
        }
        let Some((_, params)) = table.iter().find(|(n, _)| *n == call.callee) else {
            continue;
        };
        let mut slots: Vec<Option<Entity>> = params.iter().map(|_| None).collect();
        for (i, a) in call.args.iter().enumerate() {
            if i < slots.len() {
                slots[i] = Some(a.clone());
            }
        }
        let mut leftover = Vec::new();
        for (k, v) in call.kwargs.drain(..) {
            match params.iter().position(|p| *p == k) {
                Some(i) if slots[i].is_none() => slots[i] = Some(v),
                _ => leftover.push((k, v)),
            }
        }
        call.args = slots.into_iter().flatten().collect();
        call.kwargs = leftover;
    }
}

/// Flag source names that resolve to no definition, parameter, or import as
/// `external` (warning, not an error).
pub fn mark_unresolved(program: &mut ScriptProgram) {
    let defined = program.defined_names();
    let fn_names: BTreeSet<String> = program
        .functions
        .iter()
        .map(|f| f.name.clone())
        .collect();
    let class_names: BTreeSet<String> =
        program.classes.iter().map(|c| c.name.clone()).collect();
    let mut new_external = Vec::new();
    for stmt in &program.stmts {
        for e in stmt.value_sources() {
            let root = match &e.base_object {
                Some(b) => b.split('.').next().unwrap_or(b).to_string(),
                None => e.name.split('.').next().unwrap_or(&e.name).to_string(),
            };
            let root = root.split('[').next().unwrap_or(&root).to_string();
            if defined.contains(&root)
                || program.externals.contains(&root)
                || fn_names.contains(&root)
                || class_names.contains(&root)
                || root.starts_with("__t")
            {
                continue;
            }
            new_external.push((root, stmt.line));
        }
    }
    for (name, line) in new_external {
        if program.externals.insert(name.clone()) {
            program.warnings.push(ParseWarning {
                line,
                message: format!("unresolved name `{}` treated as external", name),
            });
        }
    }
}
