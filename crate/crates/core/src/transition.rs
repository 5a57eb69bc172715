//! Transition expressions (names of proof trees), proof trees, binding
//! functions and transition substitution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::label::{Label, Param};
use crate::parse::{Parser, TermContext};
use crate::sos::{Literal, RuleName, Tss, REC_ACT, REC_IN};
use crate::syntax::{unfold_rec, write_expr, write_spec, Expr, ExprKind, RecSpec, POSTFIX, PREFIX};
use crate::{sym, Sym};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecKind {
    Act,
    In,
}

impl RecKind {
    pub fn token(self) -> &'static str {
        match self {
            RecKind::Act => REC_ACT,
            RecKind::In => REC_IN,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TArg {
    Trans(TExpr),
    Proc(Expr),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TExprKind {
    /// `(tx :: μ)`
    Var(Sym, Literal),
    Rec(RecKind, Sym, Arc<RecSpec>, TExpr),
    Ctor(RuleName, Vec<TArg>),
}

/// A transition expression. Structural equality is identity of transitions.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TExpr(Arc<TExprKind>);

impl TExpr {
    pub fn new(kind: TExprKind) -> Self {
        TExpr(Arc::new(kind))
    }

    pub fn kind(&self) -> &TExprKind {
        &self.0
    }

    pub fn var(tx: &str, lit: Literal) -> Self {
        Self::new(TExprKind::Var(sym(tx), lit))
    }

    pub fn rec(kind: RecKind, x: &str, spec: Arc<RecSpec>, inner: TExpr) -> Self {
        Self::new(TExprKind::Rec(kind, sym(x), spec, inner))
    }

    pub fn ctor(name: RuleName, args: Vec<TArg>) -> Self {
        Self::new(TExprKind::Ctor(name, args))
    }

    /// Head token: the constructor, `rec_Act`/`rec_In`, or `None` for a variable.
    pub fn head(&self) -> Option<&str> {
        match self.kind() {
            TExprKind::Var(..) => None,
            TExprKind::Rec(k, ..) => Some(k.token()),
            TExprKind::Ctor(n, _) => Some(&n.ctor),
        }
    }

    /// Source, label and target; validates every node against the rules.
    pub fn literal(&self, tss: &Tss) -> Result<Literal> {
        match self.kind() {
            TExprKind::Var(_, lit) => Ok(lit.clone()),
            TExprKind::Rec(kind, x, spec, inner) => {
                let lit = inner.literal(tss)?;
                let unfolded = unfold_rec(x, spec)?;
                if !lit.src.alpha_eq(&unfolded) {
                    return Err(Error::NoMatchingRule(format!("{}: premise source {} is not {}", kind.token(), lit.src, unfolded)));
                }
                let call = Expr::rec(x, spec.clone());
                match (kind, tss.is_action(&lit.label)) {
                    (RecKind::Act, true) => Ok(Literal::new(call, lit.label, lit.tgt)),
                    (RecKind::In, false) => Ok(Literal::new(call.clone(), lit.label, call)),
                    _ => Err(Error::NoMatchingRule(format!("{} does not apply to label {}", kind.token(), lit.label))),
                }
            }
            TExprKind::Ctor(name, args) => {
                let (arity, triggers) = tss
                    .declaration_of(name)
                    .ok_or_else(|| Error::NoMatchingRule(format!("no rule is named {name}")))?;
                if args.len() != arity {
                    return Err(Error::KindMismatch(format!("{name} takes {arity} argument(s), got {}", args.len())));
                }
                let mut srcs = Vec::with_capacity(arity);
                let mut tgts = Vec::with_capacity(arity);
                let mut trigger = Vec::with_capacity(arity);
                for (i, a) in args.iter().enumerate() {
                    match (a, triggers.contains(&i)) {
                        (TArg::Trans(t), true) => {
                            let l = t.literal(tss)?;
                            srcs.push(l.src);
                            tgts.push(Some(l.tgt));
                            trigger.push(Some(l.label));
                        }
                        (TArg::Proc(p), false) => {
                            srcs.push(p.clone());
                            tgts.push(None);
                            trigger.push(None);
                        }
                        (_, true) => return Err(Error::KindMismatch(format!("argument {} of {name} must be a transition", i + 1))),
                        (_, false) => return Err(Error::KindMismatch(format!("argument {} of {name} must be a process", i + 1))),
                    }
                }
                let rule = tss.find_instance(name, &trigger)?;
                let target = rule.target_for(&srcs, &tgts);
                Ok(Literal::new(Expr::app(rule.op.clone(), srcs), rule.label.clone(), target))
            }
        }
    }

    pub fn is_closed(&self) -> bool {
        match self.kind() {
            TExprKind::Var(..) => false,
            TExprKind::Rec(_, _, _, inner) => inner.is_closed(),
            TExprKind::Ctor(_, args) => args.iter().all(|a| match a {
                TArg::Trans(t) => t.is_closed(),
                TArg::Proc(p) => p.is_closed(),
            }),
        }
    }

    /// All embedded process expressions and recursive calls in canonical form.
    pub fn canonical(&self) -> TExpr {
        match self.kind() {
            TExprKind::Var(tx, lit) => TExpr::new(TExprKind::Var(
                tx.clone(),
                Literal::new(lit.src.canonical(), lit.label.clone(), lit.tgt.canonical()),
            )),
            TExprKind::Rec(kind, x, spec, inner) => {
                let call = Expr::rec(x, spec.clone()).canonical();
                let ExprKind::Rec(cx, cs) = call.kind() else { unreachable!("canonical form of a call is a call") };
                TExpr::new(TExprKind::Rec(*kind, cx.clone(), cs.clone(), inner.canonical()))
            }
            TExprKind::Ctor(name, args) => TExpr::ctor(
                name.clone(),
                args.iter()
                    .map(|a| match a {
                        TArg::Trans(t) => TArg::Trans(t.canonical()),
                        TArg::Proc(p) => TArg::Proc(p.canonical()),
                    })
                    .collect(),
            ),
        }
    }

    /// Variable nodes and their literals. Returns an error if a variable is
    /// used for two different literals.
    pub fn binding_function(&self) -> Result<BTreeMap<Sym, Literal>> {
        let mut out = BTreeMap::new();
        self.collect_bindings(&mut out)?;
        Ok(out)
    }

    fn collect_bindings(&self, out: &mut BTreeMap<Sym, Literal>) -> Result<()> {
        match self.kind() {
            TExprKind::Var(tx, lit) => match out.get(tx) {
                Some(prev) if prev != lit => Err(Error::NonTransitionResult(format!(
                    "transition variable {tx} is used for {prev} and {lit}"
                ))),
                _ => {
                    out.insert(tx.clone(), lit.clone());
                    Ok(())
                }
            },
            TExprKind::Rec(_, _, _, inner) => inner.collect_bindings(out),
            TExprKind::Ctor(_, args) => {
                for a in args {
                    if let TArg::Trans(t) = a {
                        t.collect_bindings(out)?;
                    }
                }
                Ok(())
            }
        }
    }

    /// Direct subtransitions in argument order.
    pub fn children(&self) -> Vec<&TExpr> {
        match self.kind() {
            TExprKind::Var(..) => vec![],
            TExprKind::Rec(_, _, _, inner) => vec![inner],
            TExprKind::Ctor(_, args) => args
                .iter()
                .filter_map(|a| match a {
                    TArg::Trans(t) => Some(t),
                    TArg::Proc(_) => None,
                })
                .collect(),
        }
    }

    /// Number of nodes in the proof tree.
    pub fn height(&self) -> usize {
        1 + self.children().iter().map(|c| c.height()).max().unwrap_or(0)
    }

    pub fn to_json(&self) -> Value {
        match self.kind() {
            TExprKind::Var(tx, lit) => json!({
                "var": tx.as_ref(),
                "literal": {"src": lit.src.to_string(), "label": lit.label.to_string(), "tgt": lit.tgt.to_string()},
            }),
            TExprKind::Rec(kind, x, spec, inner) => json!({
                "ctor": kind.token(),
                "labelParams": [],
                "recursion": {"var": x.as_ref(), "spec": spec.to_string()},
                "args": [inner.to_json()],
            }),
            TExprKind::Ctor(name, args) => json!({
                "ctor": name.ctor.as_ref(),
                "labelParams": name.params.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
                "args": args.iter().map(|a| match a {
                    TArg::Trans(t) => t.to_json(),
                    TArg::Proc(p) => Value::String(p.to_string()),
                }).collect::<Vec<_>>(),
            }),
        }
    }

    /// The parseable form `"ctor"[params](args)` used by the DSL.
    pub fn to_source(&self) -> String {
        match self.kind() {
            TExprKind::Var(tx, lit) => format!("({tx} :: {lit})"),
            TExprKind::Rec(kind, x, spec, inner) => format!("{}({x}, {spec}, {})", kind.token(), inner.to_source()),
            TExprKind::Ctor(name, args) => {
                let mut s = format!("{:?}", name.ctor.as_ref());
                if !name.params.is_empty() {
                    let ps: Vec<String> = name.params.iter().map(|p| p.to_string()).collect();
                    s.push_str(&format!("[{}]", ps.join(", ")));
                }
                if !args.is_empty() {
                    let xs: Vec<String> = args
                        .iter()
                        .map(|a| match a {
                            TArg::Trans(t) => t.to_source(),
                            TArg::Proc(p) => p.to_string(),
                        })
                        .collect();
                    s.push_str(&format!("({})", xs.join(", ")));
                }
                s
            }
        }
    }

    pub fn display_unicode(&self) -> String {
        let mut s = String::new();
        self.write(&mut s, true, false).expect("writing to a string");
        s
    }

    fn write(&self, f: &mut dyn fmt::Write, unicode: bool, nested: bool) -> fmt::Result {
        let proc = |f: &mut dyn fmt::Write, p: &Expr, min: u8| write_expr(f, p, min, unicode);
        match self.kind() {
            TExprKind::Var(tx, lit) => {
                write!(f, "({tx} :: ")?;
                proc(f, &lit.src, 0)?;
                if unicode {
                    write!(f, " -{}→ ", lit.label.unicode())?;
                } else {
                    write!(f, " -{}-> ", lit.label)?;
                }
                proc(f, &lit.tgt, 0)?;
                write!(f, ")")
            }
            TExprKind::Rec(kind, x, spec, inner) => {
                write!(f, "{}({x}, ", kind.token())?;
                write_spec(f, spec, unicode)?;
                write!(f, ", ")?;
                inner.write(f, unicode, false)?;
                write!(f, ")")
            }
            TExprKind::Ctor(name, args) => {
                let token = render_name(name, unicode);
                let open = nested && !args.is_empty();
                if open {
                    write!(f, "(")?;
                }
                let arg = |f: &mut dyn fmt::Write, a: &TArg, min: u8| match a {
                    TArg::Trans(t) => t.write(f, unicode, true),
                    TArg::Proc(p) => proc(f, p, min),
                };
                match (args.len(), fixity(&name.ctor)) {
                    (0, _) => write!(f, "{token}")?,
                    (1, Fixity::Prefix) => {
                        write!(f, "{token} ")?;
                        arg(f, &args[0], PREFIX)?;
                    }
                    (1, Fixity::Postfix) => {
                        arg(f, &args[0], POSTFIX)?;
                        write!(f, "{token}")?;
                    }
                    (2, Fixity::Infix) => {
                        arg(f, &args[0], PREFIX)?;
                        write!(f, " {token} ")?;
                        arg(f, &args[1], PREFIX)?;
                    }
                    _ => {
                        write!(f, "{token}(")?;
                        for (i, a) in args.iter().enumerate() {
                            if i > 0 {
                                write!(f, ", ")?;
                            }
                            arg(f, a, 0)?;
                        }
                        write!(f, ")")?;
                    }
                }
                if open {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

enum Fixity {
    Prefix,
    Postfix,
    Infix,
    Call,
}

fn fixity(ctor: &str) -> Fixity {
    if ctor.starts_with('\\') || ctor.starts_with('[') || ctor.starts_with('^') {
        Fixity::Postfix
    } else if ctor.starts_with("->") || ctor.starts_with("(->") || ctor.ends_with('.') {
        Fixity::Prefix
    } else if ctor.starts_with('+') || ctor.starts_with('|') {
        Fixity::Infix
    } else {
        Fixity::Call
    }
}

fn render_name(name: &RuleName, unicode: bool) -> String {
    let s = name.to_string();
    if unicode {
        s.replace("->", "→")
    } else {
        s
    }
}

impl fmt::Display for TExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, false, false)
    }
}

impl fmt::Debug for TExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// A proof tree. Children are ordered by argument position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpenTransition {
    pub literal: Literal,
    pub node: ProofNode,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProofNode {
    Var(Sym),
    Rule(RuleName, Vec<OpenTransition>),
}

impl OpenTransition {
    /// `(source, label, target)` of the root literal.
    pub fn src_tar_label(&self) -> (Expr, Label, Expr) {
        (self.literal.src.clone(), self.literal.label.clone(), self.literal.tgt.clone())
    }

    /// Builds the proof tree named by `e`, validating every node.
    pub fn interpret(tss: &Tss, e: &TExpr) -> Result<OpenTransition> {
        let literal = e.literal(tss)?;
        let node = match e.kind() {
            TExprKind::Var(tx, _) => ProofNode::Var(tx.clone()),
            TExprKind::Rec(kind, _, _, inner) => {
                ProofNode::Rule(RuleName::plain(kind.token()), vec![OpenTransition::interpret(tss, inner)?])
            }
            TExprKind::Ctor(name, _) => ProofNode::Rule(
                name.clone(),
                e.children().into_iter().map(|c| OpenTransition::interpret(tss, c)).collect::<Result<_>>()?,
            ),
        };
        let t = OpenTransition { literal, node };
        t.binding_function()?;
        Ok(t)
    }

    /// The unique transition expression naming this proof.
    pub fn name_of(&self, tss: &Tss) -> Result<TExpr> {
        match &self.node {
            ProofNode::Var(tx) => Ok(TExpr::new(TExprKind::Var(tx.clone(), self.literal.clone()))),
            ProofNode::Rule(name, children) => match self.literal.src.kind() {
                ExprKind::Rec(x, spec) => {
                    let kind = match name.ctor.as_ref() {
                        REC_ACT => RecKind::Act,
                        REC_IN => RecKind::In,
                        other => return Err(Error::NoMatchingRule(format!("{other} at a recursive call"))),
                    };
                    let [child] = children.as_slice() else {
                        return Err(Error::KindMismatch(format!("{} has one premise", kind.token())));
                    };
                    Ok(TExpr::rec(kind, x, spec.clone(), child.name_of(tss)?))
                }
                ExprKind::App(_, srcs) => {
                    let (_, triggers) = tss
                        .declaration_of(name)
                        .ok_or_else(|| Error::NoMatchingRule(format!("no rule is named {name}")))?;
                    if triggers.len() != children.len() {
                        return Err(Error::KindMismatch(format!("{name} has {} premise(s)", triggers.len())));
                    }
                    let mut kids = children.iter();
                    let mut args = Vec::with_capacity(srcs.len());
                    for (i, p) in srcs.iter().enumerate() {
                        if triggers.contains(&i) {
                            args.push(TArg::Trans(kids.next().expect("counted above").name_of(tss)?));
                        } else {
                            args.push(TArg::Proc(p.clone()));
                        }
                    }
                    Ok(TExpr::ctor(name.clone(), args))
                }
                ExprKind::Var(v) => Err(Error::KindMismatch(format!("rule node with variable source {v}"))),
            },
        }
    }

    pub fn binding_function(&self) -> Result<BTreeMap<Sym, Literal>> {
        let mut out = BTreeMap::new();
        self.collect(&mut out)?;
        Ok(out)
    }

    fn collect(&self, out: &mut BTreeMap<Sym, Literal>) -> Result<()> {
        match &self.node {
            ProofNode::Var(tx) => match out.get(tx) {
                Some(prev) if prev != &self.literal => {
                    Err(Error::NonTransitionResult(format!("transition variable {tx} is used for {prev} and {}", self.literal)))
                }
                _ => {
                    out.insert(tx.clone(), self.literal.clone());
                    Ok(())
                }
            },
            ProofNode::Rule(_, children) => children.iter().try_for_each(|c| c.collect(out)),
        }
    }
}

/// A process part and a transition part, applied simultaneously.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransitionSubstitution {
    pub procs: BTreeMap<Sym, Expr>,
    pub trans: BTreeMap<Sym, TExpr>,
}

impl TransitionSubstitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_closed(&self) -> bool {
        self.procs.values().all(|p| p.is_closed()) && self.trans.values().all(|t| t.is_closed())
    }

    /// Checks that every substituted variable node agrees with its image.
    pub fn matches(&self, tss: &Tss, e: &TExpr) -> Result<()> {
        for (tx, mu) in e.binding_function()? {
            if let Some(img) = self.trans.get(&tx) {
                let l = img.literal(tss)?;
                let want = mu.substitute(&self.procs);
                if l.label != want.label {
                    return Err(Error::MatchFailure(format!("{tx}: label {} is not {}", l.label, want.label)));
                }
                if !l.src.alpha_eq(&want.src) || !l.tgt.alpha_eq(&want.tgt) {
                    return Err(Error::MatchFailure(format!("{tx}: {l} does not instantiate {mu}")));
                }
            }
        }
        Ok(())
    }

    /// `e[σ]`. Fails if σ does not match `e`, or if the result is not a transition.
    pub fn apply(&self, tss: &Tss, e: &TExpr) -> Result<TExpr> {
        self.matches(tss, e)?;
        let out = self.replace(e);
        out.binding_function()?;
        out.literal(tss)?;
        Ok(out)
    }

    fn replace(&self, e: &TExpr) -> TExpr {
        match e.kind() {
            TExprKind::Var(tx, lit) => match self.trans.get(tx) {
                Some(img) => img.clone(),
                None => TExpr::new(TExprKind::Var(tx.clone(), lit.substitute(&self.procs))),
            },
            TExprKind::Rec(kind, x, spec, inner) => TExpr::new(TExprKind::Rec(*kind, x.clone(), spec.clone(), self.replace(inner))),
            TExprKind::Ctor(name, args) => TExpr::ctor(
                name.clone(),
                args.iter()
                    .map(|a| match a {
                        TArg::Trans(t) => TArg::Trans(self.replace(t)),
                        TArg::Proc(p) => TArg::Proc(p.substitute(&self.procs)),
                    })
                    .collect(),
            ),
        }
    }
}

/// Parses the source form of a transition expression:
/// `"ctor"[params](args)`, `rec_Act(X, {..}, t)`, or `(tx :: p -a-> q)`.
pub fn parse_transition(src: &str, tss: &Tss) -> Result<TExpr> {
    let none = BTreeSet::new();
    let cx = TermContext { signature: &tss.signature, universe: &tss.universe, param_vars: &none };
    let mut p = Parser::new(src)?;
    let t = texpr(&mut p, &cx, tss)?;
    p.expect_eof()?;
    Ok(t)
}

fn starts_transition(p: &Parser) -> bool {
    use crate::parse::Tok;
    match p.peek() {
        Tok::Str(_) => true,
        Tok::Ident(s) => s == REC_ACT || s == REC_IN,
        Tok::Punct("(") => matches!(p.peek_at(1), Tok::Ident(_)) && matches!(p.peek_at(2), Tok::Punct("::")),
        _ => false,
    }
}

fn texpr(p: &mut Parser, cx: &TermContext, tss: &Tss) -> Result<TExpr> {
    if p.at_ident(REC_ACT) || p.at_ident(REC_IN) {
        let kind = if p.at_ident(REC_ACT) { RecKind::Act } else { RecKind::In };
        p.bump();
        p.expect("(")?;
        let x = p.ident()?;
        p.expect(",")?;
        let spec = p.rec_spec(cx)?;
        p.expect(",")?;
        let inner = texpr(p, cx, tss)?;
        p.expect(")")?;
        if spec.get(&x).is_none() {
            return Err(Error::UnknownRecursionVariable(x));
        }
        return Ok(TExpr::rec(kind, &x, Arc::new(spec), inner));
    }
    if p.eat("(") {
        let tx = p.ident()?;
        p.expect("::")?;
        let src = p.expr(cx)?;
        p.expect("-")?;
        let label = p.label()?;
        p.expect("->")?;
        let tgt = p.expr(cx)?;
        p.expect(")")?;
        return Ok(TExpr::var(&tx, Literal::new(src, label, tgt)));
    }
    let ctor = p.string()?;
    let mut params = Vec::new();
    if p.eat("[") {
        loop {
            params.push(param(p, tss)?);
            if !p.eat(",") {
                break;
            }
        }
        p.expect("]")?;
    }
    let mut args = Vec::new();
    if p.eat("(") {
        if !p.at(")") {
            loop {
                if starts_transition(p) {
                    args.push(TArg::Trans(texpr(p, cx, tss)?));
                } else {
                    args.push(TArg::Proc(p.expr(cx)?));
                }
                if !p.eat(",") {
                    break;
                }
            }
        }
        p.expect(")")?;
    }
    Ok(TExpr::ctor(RuleName::new(&ctor, params), args))
}

fn param(p: &mut Parser, tss: &Tss) -> Result<Param> {
    use crate::parse::Tok;
    if p.eat("{") {
        let mut set = BTreeSet::new();
        if !p.at("}") {
            loop {
                set.insert(p.label()?);
                if !p.eat(",") {
                    break;
                }
            }
        }
        p.expect("}")?;
        return Ok(Param::Set(set));
    }
    if let Tok::Ident(s) = p.peek() {
        if tss.universe.relabellings.contains_key(s.as_str()) {
            let f = sym(s);
            p.bump();
            return Ok(Param::Fn(f));
        }
    }
    Ok(Param::Label(p.label()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixity_by_token() {
        assert!(matches!(fixity("->{}"), Fixity::Prefix));
        assert!(matches!(fixity("{}{}."), Fixity::Prefix));
        assert!(matches!(fixity("\\{}"), Fixity::Postfix));
        assert!(matches!(fixity("+_L"), Fixity::Infix));
        assert!(matches!(fixity("foo"), Fixity::Call));
    }

    #[test]
    fn variable_nodes_bind_their_literal() {
        let lit = Literal::new(Expr::var("x"), Label::name("c"), Expr::var("x'"));
        let t = TExpr::var("tx", lit.clone());
        assert_eq!(t.binding_function().unwrap().get("tx"), Some(&lit));
        assert!(!t.is_closed());
        assert_eq!(t.to_string(), "(tx :: x -c-> x')");
    }
}
