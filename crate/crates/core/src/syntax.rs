//! Process signatures, process expressions with recursion, free variables,
//! capture-avoiding substitution and alpha-canonical forms.

use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::label::{Env, Param, SetExpr};
use crate::{sym, Sym};

/// A process variable.
pub type Var = Sym;

/// Families with built-in concrete syntax.
pub mod family {
    pub const NIL: &str = "0";
    pub const PREFIX: &str = "pre";
    pub const SUM: &str = "+";
    pub const PAR: &str = "|";
    pub const RESTRICT: &str = "res";
    pub const RELABEL: &str = "rel";
    pub const SIGNAL: &str = "sig";
}

/// A concrete operator: a family plus its (optional) parameter, e.g. the
/// prefix `a._` is family `pre` with parameter `a`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Op {
    pub family: Sym,
    pub param: Option<Param>,
}

impl Op {
    pub fn new(family: &str, param: Option<Param>) -> Self {
        Op { family: sym(family), param }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParamSpec {
    None,
    /// One label drawn from a set (prefixes, signals).
    LabelIn(SetExpr),
    /// A finite subset of a set (restriction).
    SubsetOf(SetExpr),
    /// A declared relabelling.
    Relabelling,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperatorDecl {
    pub family: Sym,
    pub arity: usize,
    pub param: ParamSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Signature {
    decls: BTreeMap<Sym, OperatorDecl>,
}

impl Signature {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a declaration; symbols must be unique.
    pub fn declare(&mut self, decl: OperatorDecl) -> Result<()> {
        if self.decls.contains_key(&decl.family) {
            return Err(Error::InvalidParams(format!("operator {} declared twice", decl.family)));
        }
        self.decls.insert(decl.family.clone(), decl);
        Ok(())
    }

    pub fn get(&self, family: &str) -> Option<&OperatorDecl> {
        self.decls.get(family)
    }

    pub fn decls(&self) -> impl Iterator<Item = &OperatorDecl> {
        self.decls.values()
    }

    pub fn check_arity(&self, op: &Op, found: usize) -> Result<()> {
        let d = self.get(&op.family).ok_or_else(|| Error::UnknownOperator(op.family.to_string()))?;
        if d.arity != found {
            return Err(Error::ArityMismatch { op: op.family.to_string(), expected: d.arity, found });
        }
        Ok(())
    }
}

/// A recursive specification `{X = S_X | X in V_S}`; finite and non-empty.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecSpec(pub BTreeMap<Var, Expr>);

impl RecSpec {
    pub fn new(bindings: BTreeMap<Var, Expr>) -> Self {
        RecSpec(bindings)
    }

    pub fn vars(&self) -> impl Iterator<Item = &Var> {
        self.0.keys()
    }

    pub fn get(&self, x: &str) -> Option<&Expr> {
        self.0.get(x)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExprKind {
    Var(Var),
    App(Op, Vec<Expr>),
    Rec(Var, Arc<RecSpec>),
}

struct Node {
    hash: u64,
    closed: bool,
    depth: usize,
    kind: ExprKind,
}

/// An immutable, shareable process expression with a cached hash.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl Expr {
    pub fn new(kind: ExprKind) -> Self {
        let mut h = DefaultHasher::new();
        kind.hash(&mut h);
        let closed = match &kind {
            ExprKind::Var(_) => false,
            ExprKind::App(_, args) => args.iter().all(|a| a.is_closed()),
            ExprKind::Rec(..) => {
                let tmp = Node { hash: 0, closed: false, depth: 0, kind: kind.clone() };
                free_vars_kind(&tmp.kind).is_empty()
            }
        };
        let depth = 1 + match &kind {
            ExprKind::Var(_) => 0,
            ExprKind::App(_, args) => args.iter().map(Expr::depth).max().unwrap_or(0),
            ExprKind::Rec(_, s) => s.0.values().map(Expr::depth).max().unwrap_or(0),
        };
        Expr(Arc::new(Node { hash: h.finish(), closed, depth, kind }))
    }

    pub fn kind(&self) -> &ExprKind {
        &self.0.kind
    }

    pub fn var(name: &str) -> Self {
        Expr::new(ExprKind::Var(sym(name)))
    }

    pub fn app(op: Op, args: Vec<Expr>) -> Self {
        Expr::new(ExprKind::App(op, args))
    }

    pub fn rec(x: &str, spec: Arc<RecSpec>) -> Self {
        Expr::new(ExprKind::Rec(sym(x), spec))
    }

    pub fn nil() -> Self {
        Expr::app(Op::new(family::NIL, None), vec![])
    }

    pub fn prefix(l: crate::label::Label, p: Expr) -> Self {
        Expr::app(Op::new(family::PREFIX, Some(Param::Label(l))), vec![p])
    }

    pub fn sum(p: Expr, q: Expr) -> Self {
        Expr::app(Op::new(family::SUM, None), vec![p, q])
    }

    pub fn par(p: Expr, q: Expr) -> Self {
        Expr::app(Op::new(family::PAR, None), vec![p, q])
    }

    pub fn as_var(&self) -> Option<&Var> {
        match self.kind() {
            ExprKind::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// `var(p)`: variables with at least one free occurrence.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        if self.is_closed() {
            return BTreeSet::new();
        }
        free_vars_kind(self.kind())
    }

    pub fn is_closed(&self) -> bool {
        self.0.closed
    }

    /// Every variable name occurring anywhere (free, bound or binder).
    pub fn all_names(&self, out: &mut BTreeSet<Var>) {
        match self.kind() {
            ExprKind::Var(v) => {
                out.insert(v.clone());
            }
            ExprKind::App(_, args) => args.iter().for_each(|a| a.all_names(out)),
            ExprKind::Rec(x, s) => {
                out.insert(x.clone());
                for (y, b) in &s.0 {
                    out.insert(y.clone());
                    b.all_names(out);
                }
            }
        }
    }

    /// Nesting depth, counting specification bodies under recursion.
    pub fn depth(&self) -> usize {
        self.0.depth
    }

    /// Number of nodes, used to bound random generation.
    pub fn size(&self) -> usize {
        match self.kind() {
            ExprKind::Var(_) => 1,
            ExprKind::App(_, args) => 1 + args.iter().map(Expr::size).sum::<usize>(),
            ExprKind::Rec(_, s) => 1 + s.0.values().map(Expr::size).sum::<usize>(),
        }
    }

    /// Capture-avoiding simultaneous substitution.
    pub fn substitute(&self, sigma: &BTreeMap<Var, Expr>) -> Expr {
        if sigma.is_empty() || self.is_closed() {
            return self.clone();
        }
        let mut names = BTreeSet::new();
        self.all_names(&mut names);
        for (k, v) in sigma {
            names.insert(k.clone());
            v.all_names(&mut names);
        }
        subst(self, sigma, &mut names)
    }

    /// Replaces parameter variables inside operators (`alpha.x` with `alpha := a`).
    pub fn instantiate_params(&self, env: &Env) -> Expr {
        match self.kind() {
            ExprKind::Var(_) => self.clone(),
            ExprKind::App(op, args) => {
                let param = op.param.as_ref().map(|p| match p {
                    Param::Var(v) => env.get(v).cloned().unwrap_or_else(|| p.clone()),
                    _ => p.clone(),
                });
                Expr::app(Op { family: op.family.clone(), param }, args.iter().map(|a| a.instantiate_params(env)).collect())
            }
            ExprKind::Rec(..) => self.clone(),
        }
    }

    /// Whether any operator parameter is still a variable.
    pub fn has_param_vars(&self) -> bool {
        match self.kind() {
            ExprKind::Var(_) | ExprKind::Rec(..) => false,
            ExprKind::App(op, args) => {
                matches!(op.param, Some(Param::Var(_))) || args.iter().any(Expr::has_param_vars)
            }
        }
    }

    /// Alpha-canonical form: recursion binders renamed by nesting depth and
    /// discovery order. Two expressions are alpha-equivalent iff their
    /// canonical forms are equal (up to unreachable bindings' names).
    pub fn canonical(&self) -> Expr {
        canon(self, 0, &BTreeMap::new())
    }

    pub fn alpha_eq(&self, other: &Expr) -> bool {
        self == other || self.canonical() == other.canonical()
    }

    pub fn display_unicode(&self) -> String {
        let mut s = String::new();
        write_expr(&mut s, self, 0, true).expect("writing to a string");
        s
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || (self.0.hash == other.0.hash && self.0.kind == other.0.kind)
    }
}

impl Eq for Expr {}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        self.0.kind.cmp(&other.0.kind)
    }
}

fn free_vars_kind(k: &ExprKind) -> BTreeSet<Var> {
    match k {
        ExprKind::Var(v) => std::iter::once(v.clone()).collect(),
        ExprKind::App(_, args) => args.iter().flat_map(|a| a.free_vars()).collect(),
        ExprKind::Rec(_, s) => s
            .0
            .values()
            .flat_map(|b| b.free_vars())
            .filter(|v| !s.0.contains_key(v))
            .collect(),
    }
}

fn fresh_name(base: &str, taken: &BTreeSet<Var>) -> Var {
    let stem = base.trim_end_matches(|c: char| c.is_ascii_digit());
    let stem = if stem.is_empty() { base } else { stem };
    (1..)
        .map(|k| format!("{stem}{k}"))
        .find(|n| !taken.contains(n.as_str()))
        .map(|n| sym(&n))
        .expect("unbounded suffixes")
}

fn subst(e: &Expr, sigma: &BTreeMap<Var, Expr>, names: &mut BTreeSet<Var>) -> Expr {
    if e.is_closed() {
        return e.clone();
    }
    match e.kind() {
        ExprKind::Var(v) => sigma.get(v).cloned().unwrap_or_else(|| e.clone()),
        ExprKind::App(op, args) => Expr::app(op.clone(), args.iter().map(|a| subst(a, sigma, names)).collect()),
        ExprKind::Rec(x, s) => {
            let fv = e.free_vars();
            let inner: BTreeMap<Var, Expr> = sigma
                .iter()
                .filter(|(k, _)| fv.contains(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            if inner.is_empty() {
                return e.clone();
            }
            let incoming: BTreeSet<Var> = inner.values().flat_map(|v| v.free_vars()).collect();
            let mut renaming = BTreeMap::new();
            for y in s.0.keys() {
                if incoming.contains(y) {
                    let f = fresh_name(y, names);
                    names.insert(f.clone());
                    renaming.insert(y.clone(), f);
                }
            }
            let rn = |v: &Var| renaming.get(v).cloned().unwrap_or_else(|| v.clone());
            let rsub: BTreeMap<Var, Expr> =
                renaming.iter().map(|(k, v)| (k.clone(), Expr::new(ExprKind::Var(v.clone())))).collect();
            let mut bindings = BTreeMap::new();
            for (y, body) in &s.0 {
                let renamed = if rsub.is_empty() { body.clone() } else { subst(body, &rsub, names) };
                bindings.insert(rn(y), subst(&renamed, &inner, names));
            }
            Expr::new(ExprKind::Rec(rn(x), Arc::new(RecSpec(bindings))))
        }
    }
}

/// `<S_X|S>`: the body of `X` with every free `Y in V_S` replaced by `<Y|S>`.
pub fn unfold_rec(x: &str, spec: &Arc<RecSpec>) -> Result<Expr> {
    let body = spec.get(x).ok_or_else(|| Error::UnknownRecursionVariable(x.to_string()))?;
    let sigma: BTreeMap<Var, Expr> =
        spec.0.keys().map(|y| (y.clone(), Expr::new(ExprKind::Rec(y.clone(), spec.clone())))).collect();
    Ok(body.substitute(&sigma))
}

fn occurrence_order(e: &Expr, bound: &BTreeSet<Var>, out: &mut Vec<Var>) {
    match e.kind() {
        ExprKind::Var(v) => {
            if bound.contains(v) && !out.contains(v) {
                out.push(v.clone());
            }
        }
        ExprKind::App(_, args) => args.iter().for_each(|a| occurrence_order(a, bound, out)),
        ExprKind::Rec(_, s) => {
            let shadowed: BTreeSet<Var> = bound.iter().filter(|v| !s.0.contains_key(*v)).cloned().collect();
            s.0.values().for_each(|b| occurrence_order(b, &shadowed, out));
        }
    }
}

fn canon(e: &Expr, depth: usize, ren: &BTreeMap<Var, Var>) -> Expr {
    match e.kind() {
        ExprKind::Var(v) => match ren.get(v) {
            Some(n) => Expr::new(ExprKind::Var(n.clone())),
            None => e.clone(),
        },
        ExprKind::App(op, args) => Expr::app(op.clone(), args.iter().map(|a| canon(a, depth, ren)).collect()),
        ExprKind::Rec(x, s) => {
            let bound: BTreeSet<Var> = s.0.keys().cloned().collect();
            let mut order = vec![x.clone()];
            let mut queue = VecDeque::from([x.clone()]);
            while let Some(y) = queue.pop_front() {
                let mut found = Vec::new();
                occurrence_order(&s.0[&y], &bound, &mut found);
                for z in found {
                    if !order.contains(&z) {
                        order.push(z.clone());
                        queue.push_back(z);
                    }
                }
            }
            for y in s.0.keys() {
                if !order.contains(y) {
                    order.push(y.clone());
                }
            }
            let mut inner = ren.clone();
            for (i, y) in order.iter().enumerate() {
                let name = if depth == 0 { format!("X{i}") } else { format!("X{depth}_{i}") };
                inner.insert(y.clone(), sym(&name));
            }
            let bindings = s.0.iter().map(|(y, b)| (inner[y].clone(), canon(b, depth + 1, &inner))).collect();
            Expr::new(ExprKind::Rec(inner[x].clone(), Arc::new(RecSpec(bindings))))
        }
    }
}

// precedence levels
pub(crate) const SUM: u8 = 0;
pub(crate) const PAR: u8 = 1;
pub(crate) const PREFIX: u8 = 2;
pub(crate) const POSTFIX: u8 = 3;
pub(crate) const ATOM: u8 = 4;

fn level(e: &Expr) -> u8 {
    match e.kind() {
        ExprKind::App(op, args) => match (op.family.as_ref(), args.len()) {
            (family::SUM, 2) => SUM,
            (family::PAR, 2) => PAR,
            (family::PREFIX, 1) => PREFIX,
            (family::RESTRICT, 1) | (family::RELABEL, 1) | (family::SIGNAL, 1) => POSTFIX,
            _ => ATOM,
        },
        _ => ATOM,
    }
}

fn write_param(f: &mut dyn fmt::Write, p: &Param, unicode: bool) -> fmt::Result {
    match p {
        Param::Label(l) if unicode => write!(f, "{}", l.unicode()),
        _ => write!(f, "{p}"),
    }
}

pub(crate) fn write_spec(f: &mut dyn fmt::Write, s: &RecSpec, unicode: bool) -> fmt::Result {
    write!(f, "{{")?;
    for (i, (y, b)) in s.0.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        write!(f, "{y} = ")?;
        write_expr(f, b, SUM, unicode)?;
    }
    write!(f, "}}")
}

pub(crate) fn write_expr(f: &mut dyn fmt::Write, e: &Expr, min: u8, unicode: bool) -> fmt::Result {
    let own = level(e);
    if own < min {
        write!(f, "(")?;
        write_expr(f, e, SUM, unicode)?;
        return write!(f, ")");
    }
    match e.kind() {
        ExprKind::Var(v) => write!(f, "{v}"),
        ExprKind::Rec(x, s) => {
            write!(f, "{}{x}|", if unicode { "⟨" } else { "<" })?;
            write_spec(f, s, unicode)?;
            write!(f, "{}", if unicode { "⟩" } else { ">" })
        }
        ExprKind::App(op, args) => match (op.family.as_ref(), args.as_slice(), &op.param) {
            (family::NIL, [], None) => write!(f, "0"),
            (family::SUM, [a, b], None) => {
                write_expr(f, a, SUM, unicode)?;
                write!(f, " + ")?;
                write_expr(f, b, PAR, unicode)
            }
            (family::PAR, [a, b], None) => {
                write_expr(f, a, PAR, unicode)?;
                write!(f, "|")?;
                write_expr(f, b, PREFIX, unicode)
            }
            (family::PREFIX, [a], Some(p)) => {
                write_param(f, p, unicode)?;
                write!(f, ".")?;
                write_expr(f, a, PREFIX, unicode)
            }
            (family::RESTRICT, [a], Some(p)) => {
                write_expr(f, a, POSTFIX, unicode)?;
                write!(f, "\\")?;
                write_param(f, p, unicode)
            }
            (family::RELABEL, [a], Some(p)) => {
                write_expr(f, a, POSTFIX, unicode)?;
                write!(f, "[{p}]")
            }
            (family::SIGNAL, [a], Some(p)) => {
                write_expr(f, a, POSTFIX, unicode)?;
                write!(f, "^")?;
                write_param(f, p, unicode)
            }
            (fam, args, param) => {
                write!(f, "{fam}")?;
                if let Some(p) = param {
                    write!(f, "[")?;
                    write_param(f, p, unicode)?;
                    write!(f, "]")?;
                }
                write!(f, "(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write_expr(f, a, SUM, unicode)?;
                }
                write!(f, ")")
            }
        },
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self, SUM, false)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for RecSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_spec(f, self, false)
    }
}
