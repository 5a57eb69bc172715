//! Transition labels, label universes, and the closed-world side-condition
//! language used by rule templates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Serialize, Serializer};

use crate::Sym;

/// Decoration of a label's base name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LabelKind {
    /// `a`: a handshake name or a signal read.
    Name,
    /// `~a`: co-name or signal emission.
    CoName,
    /// `tau`, the internal action.
    Tau,
    /// `b!`
    Bang,
    /// `b?`
    Query,
    /// `b:`
    Colon,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    pub name: Sym,
    pub kind: LabelKind,
}

impl Label {
    pub fn new(kind: LabelKind, name: &str) -> Self {
        Label { name: Arc::from(name), kind }
    }

    pub fn name(name: &str) -> Self {
        Self::new(LabelKind::Name, name)
    }

    pub fn co(name: &str) -> Self {
        Self::new(LabelKind::CoName, name)
    }

    pub fn tau() -> Self {
        Self::new(LabelKind::Tau, "")
    }

    pub fn with_kind(&self, kind: LabelKind) -> Self {
        Label { name: self.name.clone(), kind }
    }

    /// Complement: `a <-> ~a`; undefined for every other kind.
    pub fn bar(&self) -> Option<Label> {
        match self.kind {
            LabelKind::Name => Some(self.with_kind(LabelKind::CoName)),
            LabelKind::CoName => Some(self.with_kind(LabelKind::Name)),
            _ => None,
        }
    }

    pub fn is_broadcast(&self) -> bool {
        matches!(self.kind, LabelKind::Bang | LabelKind::Query | LabelKind::Colon)
    }

    /// Renders with Unicode decorations (`τ`, combining overline).
    pub fn unicode(&self) -> String {
        match self.kind {
            LabelKind::Tau => "τ".to_string(),
            LabelKind::CoName => {
                let mut s = String::new();
                for c in self.name.chars() {
                    s.push(c);
                    s.push('\u{0304}');
                }
                s
            }
            _ => self.to_string(),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LabelKind::Name => write!(f, "{}", self.name),
            LabelKind::CoName => write!(f, "~{}", self.name),
            LabelKind::Tau => write!(f, "tau"),
            LabelKind::Bang => write!(f, "{}!", self.name),
            LabelKind::Query => write!(f, "{}?", self.name),
            LabelKind::Colon => write!(f, "{}:", self.name),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Broadcast composition of decorations; `None` is the undefined entry.
pub fn compose_broadcast(l: LabelKind, r: LabelKind) -> Option<LabelKind> {
    use LabelKind::*;
    match (l, r) {
        (Bang, Query) | (Bang, Colon) | (Query, Bang) | (Colon, Bang) => Some(Bang),
        (Query, Query) | (Query, Colon) | (Colon, Query) => Some(Query),
        (Colon, Colon) => Some(Colon),
        _ => None,
    }
}

/// Built-in decoration functions. Outer `None`: not a built-in; inner
/// `None`: undefined on this label.
fn structural(f: &str, l: &Label) -> Option<Option<Label>> {
    use LabelKind::*;
    let from_name = |k| (l.kind == Name).then(|| l.with_kind(k));
    let from_bc = |k| l.is_broadcast().then(|| l.with_kind(k));
    Some(match f {
        "bar" => l.bar(),
        "bang" => from_name(Bang),
        "query" => from_name(Query),
        "colon" => from_name(Colon),
        "bcast" => from_bc(Bang),
        "recv" => from_bc(Query),
        "disc" => from_bc(Colon),
        _ => return None,
    })
}

/// A parameter of an operator or rule name. `Var` only appears inside templates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Param {
    Label(Label),
    Set(BTreeSet<Label>),
    Fn(Sym),
    Var(Sym),
}

impl Param {
    pub fn as_label(&self) -> Option<&Label> {
        match self {
            Param::Label(l) => Some(l),
            _ => None,
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Param::Var(_))
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Label(l) => write!(f, "{l}"),
            Param::Set(s) => {
                write!(f, "{{")?;
                for (i, l) in s.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{l}")?;
                }
                write!(f, "}}")
            }
            Param::Fn(n) | Param::Var(n) => write!(f, "{n}"),
        }
    }
}

/// Variable bindings for label variables and operator parameters.
pub type Env = BTreeMap<Sym, Param>;

/// A label-valued term inside a rule template.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum LabelTerm {
    Const(Label),
    Var(Sym),
    App(Sym, Vec<LabelTerm>),
}

impl LabelTerm {
    pub fn vars(&self, out: &mut BTreeSet<Sym>) {
        match self {
            LabelTerm::Const(_) => {}
            LabelTerm::Var(v) => {
                out.insert(v.clone());
            }
            LabelTerm::App(f, args) => {
                // a relabelling parameter used in function position is a variable too
                out.insert(f.clone());
                for a in args {
                    a.vars(out);
                }
            }
        }
    }
}

impl fmt::Display for LabelTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelTerm::Const(l) => write!(f, "{l}"),
            LabelTerm::Var(v) => write!(f, "{v}"),
            LabelTerm::App(g, args) => {
                write!(f, "{g}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// A finite label set expression.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SetExpr {
    Named(Sym),
    Lit(Vec<LabelTerm>),
    Union(Box<SetExpr>, Box<SetExpr>),
    Inter(Box<SetExpr>, Box<SetExpr>),
    Diff(Box<SetExpr>, Box<SetExpr>),
    /// Pointwise image under a unary function (`bar`, `bang`, ...).
    Map(Sym, Box<SetExpr>),
}

impl fmt::Display for SetExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetExpr::Named(n) => write!(f, "{n}"),
            SetExpr::Lit(ts) => {
                write!(f, "{{")?;
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, "}}")
            }
            SetExpr::Union(a, b) => write!(f, "({a} | {b})"),
            SetExpr::Inter(a, b) => write!(f, "({a} & {b})"),
            SetExpr::Diff(a, b) => write!(f, "({a} - {b})"),
            SetExpr::Map(g, a) => write!(f, "{g}({a})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Cond {
    In(LabelTerm, SetExpr),
    NotIn(LabelTerm, SetExpr),
    Eq(LabelTerm, LabelTerm),
    Neq(LabelTerm, LabelTerm),
}

impl Cond {
    pub fn vars(&self, out: &mut BTreeSet<Sym>) {
        match self {
            Cond::In(t, s) | Cond::NotIn(t, s) => {
                t.vars(out);
                set_vars(s, out);
            }
            Cond::Eq(a, b) | Cond::Neq(a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }
}

fn set_vars(s: &SetExpr, out: &mut BTreeSet<Sym>) {
    match s {
        SetExpr::Named(n) => {
            out.insert(n.clone());
        }
        SetExpr::Lit(ts) => ts.iter().for_each(|t| t.vars(out)),
        SetExpr::Union(a, b) | SetExpr::Inter(a, b) | SetExpr::Diff(a, b) => {
            set_vars(a, out);
            set_vars(b, out);
        }
        SetExpr::Map(_, a) => set_vars(a, out),
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cond::In(t, s) => write!(f, "{t} in {s}"),
            Cond::NotIn(t, s) => write!(f, "{t} notin {s}"),
            Cond::Eq(a, b) => write!(f, "{a} == {b}"),
            Cond::Neq(a, b) => write!(f, "{a} != {b}"),
        }
    }
}

/// Unary functions that are built into every universe.
pub const BUILTIN_FUNCTIONS: &[&str] = &["bar", "bang", "query", "colon", "recv", "disc", "bcast"];

/// The finite label universe of a language: named label sets (including the
/// mandatory `Lab` and `Act`), relabelling tables, and user tables.
/// `bcomp` (broadcast composition) is the only binary function.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelUniverse {
    pub sets: BTreeMap<Sym, BTreeSet<Label>>,
    /// Relabellings act on base names; identity outside the table.
    pub relabellings: BTreeMap<Sym, BTreeMap<Sym, Sym>>,
    pub tables: BTreeMap<Sym, BTreeMap<Label, Label>>,
}

pub const UNIVERSE_SET: &str = "Lab";
pub const ACTION_SET: &str = "Act";

impl LabelUniverse {
    pub fn labels(&self) -> &BTreeSet<Label> {
        static EMPTY: BTreeSet<Label> = BTreeSet::new();
        self.sets.get(UNIVERSE_SET).unwrap_or(&EMPTY)
    }

    pub fn actions(&self) -> &BTreeSet<Label> {
        static EMPTY: BTreeSet<Label> = BTreeSet::new();
        self.sets.get(ACTION_SET).unwrap_or(&EMPTY)
    }

    pub fn is_action(&self, l: &Label) -> bool {
        self.actions().contains(l)
    }

    /// Indicator labels, `Lab \ Act`.
    pub fn indicators(&self) -> BTreeSet<Label> {
        self.labels().difference(self.actions()).cloned().collect()
    }

    pub fn contains(&self, l: &Label) -> bool {
        self.labels().contains(l)
    }

    fn in_universe(&self, l: Label) -> Option<Label> {
        if self.contains(&l) {
            Some(l)
        } else {
            None
        }
    }

    pub fn relabel(&self, f: &str, l: &Label) -> Option<Label> {
        let table = self.relabellings.get(f)?;
        if l.kind == LabelKind::Tau {
            return Some(l.clone());
        }
        let name = table.get(&l.name).cloned().unwrap_or_else(|| l.name.clone());
        self.in_universe(Label { name, kind: l.kind })
    }

    /// Applies a (built-in or tabled) unary function. `None` means undefined.
    pub fn apply1(&self, f: &str, l: &Label) -> Option<Label> {
        if let Some(out) = structural(f, l) {
            return self.in_universe(out?);
        }
        if let Some(t) = self.tables.get(f) {
            return t.get(l).cloned();
        }
        self.relabel(f, l)
    }

    pub fn apply2(&self, f: &str, a: &Label, b: &Label) -> Option<Label> {
        if f == "bcomp" {
            if a.name != b.name {
                return None;
            }
            let k = compose_broadcast(a.kind, b.kind)?;
            return self.in_universe(a.with_kind(k));
        }
        None
    }

    pub fn knows_function(&self, f: &str) -> bool {
        BUILTIN_FUNCTIONS.contains(&f)
            || f == "bcomp"
            || self.tables.contains_key(f)
            || self.relabellings.contains_key(f)
    }

    pub fn eval_term(&self, t: &LabelTerm, env: &Env) -> Option<Label> {
        match t {
            LabelTerm::Const(l) => Some(l.clone()),
            LabelTerm::Var(v) => match env.get(v)? {
                Param::Label(l) => Some(l.clone()),
                _ => None,
            },
            LabelTerm::App(f, args) => {
                let vals: Option<Vec<Label>> = args.iter().map(|a| self.eval_term(a, env)).collect();
                let vals = vals?;
                // a function symbol bound to a relabelling parameter
                if let Some(Param::Fn(g)) = env.get(f) {
                    return match vals.as_slice() {
                        [l] => self.relabel(g, l),
                        _ => None,
                    };
                }
                match vals.as_slice() {
                    [l] => self.apply1(f, l),
                    [a, b] => self.apply2(f, a, b),
                    _ => None,
                }
            }
        }
    }

    /// Evaluates a set expression. Undefined elements of literal sets are
    /// dropped; unknown names evaluate to `None`.
    pub fn eval_set(&self, s: &SetExpr, env: &Env) -> Option<BTreeSet<Label>> {
        Some(match s {
            SetExpr::Named(n) => match env.get(n) {
                Some(Param::Set(set)) => set.clone(),
                Some(Param::Label(l)) => std::iter::once(l.clone()).collect(),
                Some(_) => return None,
                None => self.sets.get(n)?.clone(),
            },
            SetExpr::Lit(ts) => ts.iter().filter_map(|t| self.eval_term(t, env)).collect(),
            SetExpr::Union(a, b) => {
                let mut x = self.eval_set(a, env)?;
                x.extend(self.eval_set(b, env)?);
                x
            }
            SetExpr::Inter(a, b) => {
                let y = self.eval_set(b, env)?;
                self.eval_set(a, env)?.into_iter().filter(|l| y.contains(l)).collect()
            }
            SetExpr::Diff(a, b) => {
                let y = self.eval_set(b, env)?;
                self.eval_set(a, env)?.into_iter().filter(|l| !y.contains(l)).collect()
            }
            SetExpr::Map(f, a) => {
                // mapping may leave the universe while building it, so skip the membership test
                let x = self.eval_set(a, env)?;
                x.iter()
                    .filter_map(|l| match structural(f, l) {
                        Some(r) => r,
                        None => self.apply1(f, l),
                    })
                    .collect()
            }
        })
    }

    /// `None` when the condition mentions an unbound variable or an unknown set.
    pub fn eval_cond(&self, c: &Cond, env: &Env) -> Option<bool> {
        Some(match c {
            Cond::In(t, s) => {
                let l = self.eval_term(t, env)?;
                self.eval_set(s, env)?.contains(&l)
            }
            Cond::NotIn(t, s) => {
                let l = self.eval_term(t, env)?;
                !self.eval_set(s, env)?.contains(&l)
            }
            Cond::Eq(a, b) => self.eval_term(a, env)? == self.eval_term(b, env)?,
            Cond::Neq(a, b) => self.eval_term(a, env)? != self.eval_term(b, env)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn universe() -> LabelUniverse {
        let mut u = LabelUniverse::default();
        let lab: BTreeSet<Label> = [
            Label::name("a"),
            Label::co("a"),
            Label::tau(),
            Label::new(LabelKind::Bang, "b"),
            Label::new(LabelKind::Query, "b"),
            Label::new(LabelKind::Colon, "b"),
        ]
        .into_iter()
        .collect();
        u.sets.insert(Arc::from(UNIVERSE_SET), lab.clone());
        u.sets.insert(
            Arc::from(ACTION_SET),
            lab.iter().filter(|l| l.kind != LabelKind::Colon).cloned().collect(),
        );
        u
    }

    #[test]
    fn broadcast_table_matches_composition() {
        use LabelKind::*;
        let kinds = [Bang, Query, Colon];
        let defined: Vec<_> = kinds
            .iter()
            .flat_map(|&a| kinds.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| compose_broadcast(a, b) == Some(Bang))
            .collect();
        assert_eq!(defined, vec![(Bang, Query), (Bang, Colon), (Query, Bang), (Colon, Bang)]);
        assert_eq!(compose_broadcast(Bang, Bang), None);
        assert_eq!(compose_broadcast(Colon, Colon), Some(Colon));
    }

    #[test]
    fn functions_respect_universe() {
        let u = universe();
        let a = Label::name("a");
        assert_eq!(u.apply1("bar", &a), Some(Label::co("a")));
        assert_eq!(u.apply1("bar", &Label::tau()), None);
        let bq = Label::new(LabelKind::Query, "b");
        assert_eq!(u.apply1("disc", &bq), Some(Label::new(LabelKind::Colon, "b")));
        assert_eq!(u.apply2("bcomp", &Label::new(LabelKind::Bang, "b"), &bq), Some(Label::new(LabelKind::Bang, "b")));
    }

    #[test]
    fn conditions_with_complement_closure() {
        let u = universe();
        let mut env = Env::new();
        env.insert(Arc::from("L"), Param::Set([Label::name("a")].into_iter().collect()));
        env.insert(Arc::from("l"), Param::Label(Label::co("a")));
        let s = SetExpr::Union(
            Box::new(SetExpr::Named(Arc::from("L"))),
            Box::new(SetExpr::Map(Arc::from("bar"), Box::new(SetExpr::Named(Arc::from("L"))))),
        );
        let c = Cond::NotIn(LabelTerm::Var(Arc::from("l")), s);
        assert_eq!(u.eval_cond(&c, &env), Some(false));
        env.insert(Arc::from("l"), Param::Label(Label::tau()));
        assert_eq!(u.eval_cond(&c, &env), Some(true));
    }
}
