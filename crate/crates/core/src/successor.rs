//! Successor rules: schematic templates, transition system specifications
//! with successors, their format checker, the built-in recursion successor
//! rule and the indicator-identity expansion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::label::{Cond, Env, Label, LabelTerm, Param, SetExpr, ACTION_SET};
use crate::parse::Span;
use crate::sos::{ConcreteRule, Diagnostic, FormatReport, Literal, RuleName, Tss, REC_IN};
use crate::syntax::{unfold_rec, Expr, RecSpec};
use crate::transition::{RecKind, TArg, TExpr, TExprKind};
use crate::{sym, Sym};

/// Label variable bound to the label of the left transition while matching.
pub const LHS_LABEL: &str = "%t";
/// Label variable bound to the label of the right transition while matching.
pub const RHS_LABEL: &str = "%u";
/// Operator-type name used for recursive calls in expansion requests.
pub const REC_TYPE: &str = "rec";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SArg {
    Trans(STerm),
    Proc(Sym),
}

/// A schematic transition expression.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum STerm {
    Var(Sym),
    Rec(RecKind, Box<STerm>),
    Ctor { ctor: Sym, params: Vec<LabelTerm>, args: Vec<SArg> },
}

impl STerm {
    pub fn head(&self) -> Option<&str> {
        match self {
            STerm::Var(_) => None,
            STerm::Rec(k, _) => Some(k.token()),
            STerm::Ctor { ctor, .. } => Some(ctor),
        }
    }

    fn tvars(&self, out: &mut Vec<Sym>) {
        match self {
            STerm::Var(v) => out.push(v.clone()),
            STerm::Rec(_, inner) => inner.tvars(out),
            STerm::Ctor { args, .. } => args.iter().for_each(|a| {
                if let SArg::Trans(t) = a {
                    t.tvars(out)
                }
            }),
        }
    }

    fn pvars(&self, out: &mut Vec<Sym>) {
        match self {
            STerm::Var(_) => {}
            STerm::Rec(_, inner) => inner.pvars(out),
            STerm::Ctor { args, .. } => args.iter().for_each(|a| match a {
                SArg::Trans(t) => t.pvars(out),
                SArg::Proc(x) => out.push(x.clone()),
            }),
        }
    }
}

impl fmt::Display for STerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            STerm::Var(v) => write!(f, "{v}"),
            STerm::Rec(k, inner) => write!(f, "{}(X, S, {inner})", k.token()),
            STerm::Ctor { ctor, params, args } => {
                write!(f, "{ctor:?}")?;
                if !params.is_empty() {
                    let ps: Vec<String> = params.iter().map(|p| p.to_string()).collect();
                    write!(f, "[{}]", ps.join(", "))?;
                }
                if !args.is_empty() {
                    let xs: Vec<String> = args
                        .iter()
                        .map(|a| match a {
                            SArg::Trans(t) => t.to_string(),
                            SArg::Proc(x) => x.to_string(),
                        })
                        .collect();
                    write!(f, "({})", xs.join(", "))?;
                }
                Ok(())
            }
        }
    }
}

/// `(tx :: src -label-> tgt)` with process variables and a label term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TVarDecl {
    pub src: Sym,
    pub label: LabelTerm,
    pub tgt: Sym,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuccessorPremise {
    pub t: STerm,
    pub u: STerm,
    pub v: STerm,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuccessorTemplate {
    pub name: Sym,
    pub tvars: BTreeMap<Sym, TVarDecl>,
    pub premises: Vec<SuccessorPremise>,
    pub lhs: STerm,
    pub rhs: STerm,
    pub target: STerm,
    pub conditions: Vec<Cond>,
    pub span: Option<Span>,
    /// Operator type this template was generated for by the identity expansion.
    pub expanded_from: Option<Sym>,
}

impl fmt::Display for SuccessorTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: ", self.name.as_ref())?;
        let ps: Vec<String> = self.premises.iter().map(|p| format!("{} ~{}~> {}", p.t, p.u, p.v)).collect();
        write!(f, "{} => {} ~{}~> {}", ps.join(", "), self.lhs, self.rhs, self.target)?;
        if !self.conditions.is_empty() {
            let cs: Vec<String> = self.conditions.iter().map(|c| c.to_string()).collect();
            write!(f, " if {}", cs.join(" and "))?;
        }
        let ds: Vec<String> = self.tvars.iter().map(|(t, d)| format!("{t} :: {} -{}-> {}", d.src, d.label, d.tgt)).collect();
        write!(f, " where {}", ds.join(", "))
    }
}

/// A concrete successor rule: premises and conclusion as open transitions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuccessorRuleInstance {
    pub name: String,
    pub premises: Vec<(TExpr, TExpr, TExpr)>,
    pub conclusion: (TExpr, TExpr, TExpr),
}

/// Transition system specification with successors.
#[derive(Clone, Debug, PartialEq)]
pub struct Tsss {
    pub tss: Tss,
    pub templates: Vec<SuccessorTemplate>,
    index: BTreeMap<(Sym, Sym), Vec<usize>>,
}

/// Variable bindings built up while matching a template.
#[derive(Clone, Debug, Default)]
pub struct Binding {
    pub env: Env,
    pub procs: BTreeMap<Sym, Expr>,
    pub trans: BTreeMap<Sym, TExpr>,
    pub rec: Option<(Sym, Arc<RecSpec>)>,
    deferred: Vec<(LabelTerm, Param)>,
}

impl Binding {
    fn bind_proc(&mut self, x: &Sym, e: &Expr) -> bool {
        match self.procs.get(x) {
            Some(prev) => prev == e || prev.alpha_eq(e),
            None => {
                self.procs.insert(x.clone(), e.clone());
                true
            }
        }
    }

    fn bind_param(&mut self, t: &LabelTerm, p: &Param) -> bool {
        match t {
            LabelTerm::Var(v) => match self.env.get(v) {
                Some(prev) => prev == p,
                None => {
                    self.env.insert(v.clone(), p.clone());
                    true
                }
            },
            LabelTerm::Const(l) => p.as_label() == Some(l),
            LabelTerm::App(..) => {
                self.deferred.push((t.clone(), p.clone()));
                true
            }
        }
    }
}

fn label_vars_of(t: &LabelTerm, out: &mut BTreeSet<Sym>) {
    match t {
        LabelTerm::Const(_) => {}
        LabelTerm::Var(v) => {
            out.insert(v.clone());
        }
        LabelTerm::App(_, args) => args.iter().for_each(|a| label_vars_of(a, out)),
    }
}

impl Tsss {
    pub fn new(tss: Tss, templates: Vec<SuccessorTemplate>) -> Self {
        let mut index: BTreeMap<(Sym, Sym), Vec<usize>> = BTreeMap::new();
        for (i, t) in templates.iter().enumerate() {
            if let (Some(l), Some(r)) = (t.lhs.head(), t.rhs.head()) {
                index.entry((sym(l), sym(r))).or_default().push(i);
            }
        }
        Tsss { tss, templates, index }
    }

    /// Templates whose conclusion heads are `lhs` and `rhs`.
    pub fn candidates(&self, lhs: &str, rhs: &str) -> &[usize] {
        self.index.get(&(sym(lhs), sym(rhs))).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Runs both format checkers.
    pub fn check(&self) -> FormatReport {
        let mut r = self.tss.check_de_simone();
        r.merge(self.check_successor_format());
        r
    }

    /// Matches a schematic term against a transition, extending `b`.
    pub fn match_term(&self, tmpl: &SuccessorTemplate, pat: &STerm, t: &TExpr, b: &mut Binding) -> bool {
        match (pat, t.kind()) {
            (STerm::Var(tv), _) => {
                if let Some(prev) = b.trans.get(tv) {
                    return prev == t;
                }
                let Some(decl) = tmpl.tvars.get(tv) else { return false };
                let Ok(lit) = t.literal(&self.tss) else { return false };
                if !b.bind_proc(&decl.src, &lit.src) || !b.bind_proc(&decl.tgt, &lit.tgt) {
                    return false;
                }
                if !b.bind_param(&decl.label, &Param::Label(lit.label)) {
                    return false;
                }
                b.trans.insert(tv.clone(), t.clone());
                true
            }
            (STerm::Rec(k, inner), TExprKind::Rec(k2, x, s, ti)) => {
                if k != k2 {
                    return false;
                }
                match &b.rec {
                    Some((bx, bs)) if bx != x || bs != s => return false,
                    Some(_) => {}
                    None => b.rec = Some((x.clone(), s.clone())),
                }
                self.match_term(tmpl, inner, ti, b)
            }
            (STerm::Ctor { ctor, params, args }, TExprKind::Ctor(name, targs)) => {
                if *ctor != name.ctor || params.len() != name.params.len() || args.len() != targs.len() {
                    return false;
                }
                for (pt, p) in params.iter().zip(&name.params) {
                    if !b.bind_param(pt, p) {
                        return false;
                    }
                }
                for (a, ta) in args.iter().zip(targs) {
                    let ok = match (a, ta) {
                        (SArg::Trans(p), TArg::Trans(t)) => self.match_term(tmpl, p, t, b),
                        (SArg::Proc(x), TArg::Proc(e)) => b.bind_proc(x, e),
                        _ => false,
                    };
                    if !ok {
                        return false;
                    }
                }
                true
            }
            _ => false,
        }
    }

    /// Evaluates deferred parameter constraints and the side conditions.
    /// `None` when something is still unbound.
    pub fn conditions_hold(&self, tmpl: &SuccessorTemplate, b: &Binding) -> Option<bool> {
        let u = &self.tss.universe;
        for (t, p) in &b.deferred {
            let l = u.eval_term(t, &b.env)?;
            if p.as_label() != Some(&l) {
                return Some(false);
            }
        }
        for c in &tmpl.conditions {
            if !u.eval_cond(c, &b.env)? {
                return Some(false);
            }
        }
        Some(true)
    }

    /// Builds the transition expression for `pat` under a complete binding.
    pub fn instantiate(&self, pat: &STerm, b: &Binding) -> Result<TExpr> {
        let unbound = |what: &str| Error::MatchFailure(format!("unbound {what} in successor rule target"));
        match pat {
            STerm::Var(tv) => b.trans.get(tv).cloned().ok_or_else(|| unbound(tv)),
            STerm::Rec(k, inner) => {
                let (x, s) = b.rec.clone().ok_or_else(|| unbound("recursive call"))?;
                Ok(TExpr::new(TExprKind::Rec(*k, x, s, self.instantiate(inner, b)?)))
            }
            STerm::Ctor { ctor, params, args } => {
                let mut ps = Vec::with_capacity(params.len());
                for p in params {
                    ps.push(match p {
                        LabelTerm::Var(v) => b.env.get(v).cloned().ok_or_else(|| unbound(v))?,
                        LabelTerm::Const(l) => Param::Label(l.clone()),
                        t => Param::Label(self.tss.universe.eval_term(t, &b.env).ok_or_else(|| unbound(&t.to_string()))?),
                    });
                }
                let mut xs = Vec::with_capacity(args.len());
                for a in args {
                    xs.push(match a {
                        SArg::Trans(t) => TArg::Trans(self.instantiate(t, b)?),
                        SArg::Proc(x) => TArg::Proc(b.procs.get(x).cloned().ok_or_else(|| unbound(x))?),
                    });
                }
                Ok(TExpr::ctor(RuleName { ctor: ctor.clone(), params: ps }, xs))
            }
        }
    }

    /// All `v` derivable by template `idx` for `t ⇝_u v`. `succ` solves
    /// premises, `en` enumerates transitions for fresh target variables.
    #[allow(clippy::too_many_arguments)]
    pub fn apply_template(
        &self,
        idx: usize,
        t: &TExpr,
        t_lit: &Literal,
        u: &TExpr,
        u_lit: &Literal,
        succ: &mut dyn FnMut(&TExpr, &TExpr) -> Result<Vec<TExpr>>,
        en: &mut dyn FnMut(&Expr) -> Result<Vec<TExpr>>,
    ) -> Result<Vec<TExpr>> {
        let tmpl = &self.templates[idx];
        let mut b = Binding::default();
        b.env.insert(sym(LHS_LABEL), Param::Label(t_lit.label.clone()));
        b.env.insert(sym(RHS_LABEL), Param::Label(u_lit.label.clone()));
        if !self.match_term(tmpl, &tmpl.lhs, t, &mut b) || !self.match_term(tmpl, &tmpl.rhs, u, &mut b) {
            return Ok(vec![]);
        }
        // prune early on conditions that are already decided
        if self.conditions_hold(tmpl, &b) == Some(false) {
            return Ok(vec![]);
        }
        let mut partial = vec![b];
        for prem in &tmpl.premises {
            let (STerm::Var(pt), STerm::Var(pu)) = (&prem.t, &prem.u) else {
                return Err(Error::MatchFailure(format!("premise of {} is not over variables", tmpl.name)));
            };
            let mut next = Vec::new();
            for b in partial {
                let (Some(st), Some(su)) = (b.trans.get(pt), b.trans.get(pu)) else { continue };
                for v in succ(st, su)? {
                    let mut b2 = b.clone();
                    if self.match_term(tmpl, &prem.v, &v, &mut b2) {
                        next.push(b2);
                    }
                }
            }
            partial = next;
        }
        let mut fresh = Vec::new();
        tmpl.target.tvars(&mut fresh);
        fresh.dedup();
        for tv in &fresh {
            let mut next = Vec::new();
            for b in partial {
                if b.trans.contains_key(tv) {
                    next.push(b);
                    continue;
                }
                let Some(decl) = tmpl.tvars.get(tv) else { continue };
                let Some(src) = b.procs.get(&decl.src).cloned() else { continue };
                for cand in en(&src)? {
                    let mut b2 = b.clone();
                    if self.match_term(tmpl, &STerm::Var(tv.clone()), &cand, &mut b2) {
                        next.push(b2);
                    }
                }
            }
            partial = next;
        }
        let mut out = Vec::new();
        for b in partial {
            if self.conditions_hold(tmpl, &b) != Some(true) {
                continue;
            }
            let v = self.instantiate(&tmpl.target, &b)?;
            match v.literal(&self.tss) {
                Ok(l) if l.src.alpha_eq(&u_lit.tgt) => out.push(v),
                _ => {}
            }
        }
        Ok(out)
    }

    /// The built-in successor rule for `<X|S>` with the given labels.
    pub fn builtin_recursion_successor_rule(&self, x: &str, spec: &Arc<RecSpec>, xa: &Label, ya: &Label, za: &Label) -> Result<SuccessorRuleInstance> {
        let unfolded = unfold_rec(x, spec)?;
        let mut names = BTreeSet::new();
        Expr::rec(x, spec.clone()).all_names(&mut names);
        let fresh = |base: &str| {
            (0..).map(|k| if k == 0 { base.to_string() } else { format!("{base}{k}") }).find(|n| !names.contains(n.as_str())).expect("fresh name")
        };
        let (x1, y1, z1) = (Expr::var(&fresh("x'")), Expr::var(&fresh("y'")), Expr::var(&fresh("z'")));
        let tx = TExpr::var("tx", Literal::new(unfolded.clone(), xa.clone(), x1));
        let ty = TExpr::var("ty", Literal::new(unfolded, ya.clone(), y1.clone()));
        let tz = TExpr::var("tz", Literal::new(y1, za.clone(), z1));
        let chi = if self.tss.is_action(xa) { RecKind::Act } else { RecKind::In };
        let zeta = if self.tss.is_action(ya) { RecKind::Act } else { RecKind::In };
        let lhs = TExpr::rec(chi, x, spec.clone(), tx.clone());
        let rhs = TExpr::rec(zeta, x, spec.clone(), ty.clone());
        let target = if zeta == RecKind::Act { tz.clone() } else { lhs.clone() };
        Ok(SuccessorRuleInstance {
            name: format!("{}/{}", chi.token(), zeta.token()),
            premises: vec![(tx, ty, tz)],
            conclusion: (lhs, rhs, target),
        })
    }

    // ---------- format checking ----------

    pub fn check_successor_format(&self) -> FormatReport {
        let mut by_ctor: BTreeMap<Sym, Vec<ConcreteRule>> = BTreeMap::new();
        for r in self.tss.all_instances() {
            by_ctor.entry(r.name.ctor.clone()).or_default().push(r);
        }
        let mut report = FormatReport::default();
        for t in &self.templates {
            report.diagnostics.extend(self.check_template(t, &by_ctor));
        }
        report.diagnostics.sort();
        report.diagnostics.dedup();
        report
    }

    fn check_template(&self, t: &SuccessorTemplate, by_ctor: &BTreeMap<Sym, Vec<ConcreteRule>>) -> Vec<Diagnostic> {
        let d = |clause: &str, msg: String| Diagnostic {
            locator: format!("successor rule {:?}", t.name.as_ref()),
            span: t.span,
            clause: clause.into(),
            message: msg,
        };
        let mut out = Vec::new();
        // every transition variable must be declared
        let mut used = Vec::new();
        t.lhs.tvars(&mut used);
        t.rhs.tvars(&mut used);
        t.target.tvars(&mut used);
        for p in &t.premises {
            p.t.tvars(&mut used);
            p.u.tvars(&mut used);
            p.v.tvars(&mut used);
        }
        for v in &used {
            if !t.tvars.contains_key(v) {
                out.push(d("SF1", format!("transition variable {v} has no literal annotation")));
            }
        }
        if !out.is_empty() {
            return out;
        }
        match (&t.lhs, &t.rhs) {
            (STerm::Rec(k1, l), STerm::Rec(k2, r)) => {
                out.extend(self.check_positions(t, &[(**l).clone()].map(SArg::Trans), &[(**r).clone()].map(SArg::Trans), &d));
                if out.is_empty() {
                    out.extend(self.check_rec_shape(t, *k1, *k2, &d));
                }
            }
            (STerm::Ctor { ctor: rc, args: ra, .. }, STerm::Ctor { ctor: sc, args: sa, .. }) => {
                out.extend(self.check_positions(t, ra, sa, &d));
                let (Some(rs), Some(ss)) = (by_ctor.get(rc), by_ctor.get(sc)) else {
                    let missing = if by_ctor.contains_key(rc) { sc } else { rc };
                    out.push(d("SF5", format!("no transition rule is named {missing}")));
                    return out;
                };
                let (r0, s0) = (&rs[0], &ss[0]);
                if r0.op.family != s0.op.family || r0.xs.len() != s0.xs.len() {
                    out.push(d("SF5", format!("{rc} and {sc} belong to different operators ({} and {})", r0.op.family, s0.op.family)));
                    return out;
                }
                for (side, args, rule) in [("left", ra, r0), ("right", sa, s0)] {
                    if args.len() != rule.xs.len() {
                        out.push(d("SF4", format!("{side} constructor {} takes {} argument(s)", rule.name.ctor, rule.xs.len())));
                        continue;
                    }
                    for (i, a) in args.iter().enumerate() {
                        let is_t = matches!(a, SArg::Trans(_));
                        if is_t != rule.trigger[i].is_some() {
                            out.push(d("SF4", format!("argument {} of the {side} constructor {} has the wrong kind", i + 1, rule.name.ctor)));
                        }
                    }
                }
                if out.is_empty() {
                    out.extend(self.check_instances(t, rs, ss, by_ctor, &d));
                }
            }
            _ => out.push(d("SF4", "both sides of the conclusion must be constructor applications of the same kind".into())),
        }
        out
    }

    /// Premise shape, index sets, distinctness, argument shapes and the
    /// permitted variables of the target.
    fn check_positions(&self, t: &SuccessorTemplate, ra: &[SArg], sa: &[SArg], d: &dyn Fn(&str, String) -> Diagnostic) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        if ra.len() != sa.len() {
            out.push(d("SF5", format!("constructors have arities {} and {}", ra.len(), sa.len())));
            return out;
        }
        let n = ra.len();
        let var_of = |a: &SArg| -> Option<(Option<Sym>, Sym)> {
            match a {
                SArg::Proc(x) => Some((None, x.clone())),
                SArg::Trans(STerm::Var(tv)) => Some((Some(tv.clone()), t.tvars[tv].src.clone())),
                SArg::Trans(_) => None,
            }
        };
        let mut xs = Vec::with_capacity(n);
        let mut xe = Vec::with_capacity(n);
        let mut ye = Vec::with_capacity(n);
        for i in 0..n {
            let (Some((tx, x)), Some((ty, y))) = (var_of(&ra[i]), var_of(&sa[i])) else {
                out.push(d("SF4", format!("argument {} must be a process variable or an annotated transition variable", i + 1)));
                return out;
            };
            if x != y {
                out.push(d("SF4", format!("argument {} has sources {x} and {y} on the two sides", i + 1)));
                return out;
            }
            xs.push(x);
            xe.push(tx);
            ye.push(ty);
        }
        // premises
        let mut in_i = BTreeMap::new();
        for p in &t.premises {
            let (STerm::Var(pt), STerm::Var(pu), STerm::Var(pv)) = (&p.t, &p.u, &p.v) else {
                out.push(d("SF1", "premises must relate annotated transition variables".into()));
                continue;
            };
            let (dt, du, dv) = (&t.tvars[pt], &t.tvars[pu], &t.tvars[pv]);
            if dt.src != du.src || dv.src != du.tgt {
                out.push(d("SF1", format!("premise {pt} ~{pu}~> {pv} is not source/target coherent")));
                continue;
            }
            let Some(i) = (0..n).find(|&i| xe[i].as_ref() == Some(pt)) else {
                out.push(d("SF2", format!("premise variable {pt} is not an argument of the left constructor")));
                continue;
            };
            if ye[i].as_ref() != Some(pu) {
                out.push(d("SF2", format!("premise {pt} ~{pu}~> {pv} does not use argument {} of the right constructor", i + 1)));
                continue;
            }
            if in_i.insert(i, pv.clone()).is_some() {
                out.push(d("SF2", format!("two premises for argument {}", i + 1)));
            }
        }
        // distinctness
        let mut pvars: Vec<Sym> = xs.clone();
        let mut tvars: Vec<Sym> = Vec::new();
        for i in 0..n {
            if let Some(tx) = &xe[i] {
                pvars.push(t.tvars[tx].tgt.clone());
                tvars.push(tx.clone());
            }
            if let Some(ty) = &ye[i] {
                pvars.push(t.tvars[ty].tgt.clone());
                tvars.push(ty.clone());
            }
        }
        let mut fresh = Vec::new();
        t.target.tvars(&mut fresh);
        let mut tzs: Vec<Sym> = in_i.values().cloned().collect();
        for v in fresh {
            if !tvars.contains(&v) && !tzs.contains(&v) {
                tzs.push(v);
            }
        }
        for tz in &tzs {
            pvars.push(t.tvars[tz].tgt.clone());
            tvars.push(tz.clone());
        }
        if let Some(v) = first_duplicate(&pvars) {
            out.push(d("SF3", format!("process variable {v} is used in two roles")));
        }
        if let Some(v) = first_duplicate(&tvars) {
            out.push(d("SF3", format!("transition variable {v} is used in two roles")));
        }
        if !out.is_empty() {
            return out;
        }
        // permitted variable expressions in the target
        let mut allowed_p: BTreeMap<Sym, usize> = BTreeMap::new();
        let mut allowed_t: BTreeMap<Sym, usize> = BTreeMap::new();
        for i in 0..n {
            match (&xe[i], &ye[i], in_i.get(&i)) {
                (_, _, Some(tz)) => {
                    allowed_t.insert(tz.clone(), i);
                }
                (None, None, None) => {
                    allowed_p.insert(xs[i].clone(), i);
                    for tz in &tzs {
                        if t.tvars[tz].src == xs[i] {
                            allowed_t.insert(tz.clone(), i);
                        }
                    }
                }
                (Some(tx), None, None) => {
                    allowed_t.insert(tx.clone(), i);
                }
                (_, Some(ty), None) => {
                    let y = &t.tvars[ty].tgt;
                    allowed_p.insert(y.clone(), i);
                    for tz in &tzs {
                        if &t.tvars[tz].src == y {
                            allowed_t.insert(tz.clone(), i);
                        }
                    }
                }
            }
        }
        let mut occ_t = Vec::new();
        t.target.tvars(&mut occ_t);
        let mut occ_p = Vec::new();
        t.target.pvars(&mut occ_p);
        let mut per_index = vec![0usize; n];
        for v in &occ_t {
            match allowed_t.get(v) {
                Some(&i) => per_index[i] += 1,
                None => out.push(d("SF7", format!("target uses transition variable {v}, which is not permitted there"))),
            }
        }
        for v in &occ_p {
            match allowed_p.get(v) {
                Some(&i) => per_index[i] += 1,
                None => out.push(d("SF7", format!("target uses process variable {v}, which is not permitted there"))),
            }
        }
        if let Some(i) = per_index.iter().position(|&c| c > 1) {
            out.push(d("SF7", format!("target is not univariate: argument {} occurs {} times", i + 1, per_index[i])));
        }
        out
    }

    fn check_rec_shape(&self, t: &SuccessorTemplate, k1: RecKind, k2: RecKind, d: &dyn Fn(&str, String) -> Diagnostic) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let ty_tgt = match &t.rhs {
            STerm::Rec(_, inner) => match inner.as_ref() {
                STerm::Var(ty) => t.tvars[ty].tgt.clone(),
                _ => return out,
            },
            _ => return out,
        };
        match (k2, &t.target) {
            (RecKind::In, STerm::Rec(..)) => {}
            (RecKind::Act, STerm::Var(tz)) if t.tvars[tz].src == ty_tgt => {}
            _ => out.push(d("SF6", format!("target {} does not start where the right transition ends", t.target))),
        }
        if k2 == RecKind::In {
            let tz = t.premises.first().and_then(|p| match &p.v {
                STerm::Var(v) => Some(v.clone()),
                _ => None,
            });
            let expected = match tz {
                Some(tz) => STerm::Rec(k1, Box::new(STerm::Var(tz))),
                None => t.lhs.clone(),
            };
            if t.target != expected && t.target != t.lhs {
                out.push(d("SF8", format!("indicator on the right requires target {expected}")));
            }
        }
        out
    }

    /// Coherence and the indicator clause, checked on every instantiation
    /// of the two constructors.
    fn check_instances(
        &self,
        t: &SuccessorTemplate,
        rs: &[ConcreteRule],
        ss: &[ConcreteRule],
        by_ctor: &BTreeMap<Sym, Vec<ConcreteRule>>,
        d: &dyn Fn(&str, String) -> Diagnostic,
    ) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut target_labels = BTreeSet::new();
        let mut fresh = Vec::new();
        t.target.tvars(&mut fresh);
        for p in &t.premises {
            p.v.tvars(&mut fresh);
        }
        for tv in &fresh {
            if let Some(decl) = t.tvars.get(tv) {
                label_vars_of(&decl.label, &mut target_labels);
            }
        }
        let labels: Vec<Label> = self.tss.universe.labels().iter().cloned().collect();
        let mut groups = Vec::new();
        target_label_groups(t, &t.target, by_ctor, &mut groups);
        let rights: Vec<(TExpr, Literal)> = ss
            .iter()
            .filter_map(|s| open_instance(t, &t.rhs, s))
            .filter_map(|rhs| rhs.literal(&self.tss).ok().map(|rl| (rhs, rl)))
            .collect();
        for r in rs {
            let Some(lhs) = open_instance(t, &t.lhs, r) else { continue };
            let Ok(ll) = lhs.literal(&self.tss) else { continue };
            for (rhs, rl) in &rights {
                let mut b = Binding::default();
                b.env.insert(sym(LHS_LABEL), Param::Label(ll.label.clone()));
                b.env.insert(sym(RHS_LABEL), Param::Label(rl.label.clone()));
                if !self.match_term(t, &t.lhs, &lhs, &mut b) || !self.match_term(t, &t.rhs, rhs, &mut b) {
                    continue;
                }
                if self.conditions_hold(t, &b) == Some(false) {
                    continue;
                }
                if ll.src != rl.src {
                    out.push(d("SF6", format!("sources differ: {} vs {}", ll.src, rl.src)));
                    return out;
                }
                let free: Vec<Sym> = target_labels.iter().filter(|v| !b.env.contains_key(*v)).cloned().collect();
                let grouped: BTreeSet<&Sym> = groups.iter().flat_map(|(vs, _)| vs).collect();
                let rest: Vec<Sym> = free.iter().filter(|v| !grouped.contains(v)).cloned().collect();
                let mut feasible = false;
                for_each_grouped_assignment(&groups, &rest, &labels, &mut b.env.clone(), &mut |env| {
                    let mut b2 = b.clone();
                    b2.env = env.clone();
                    for tv in &fresh {
                        if b2.trans.contains_key(tv) {
                            continue;
                        }
                        let decl = &t.tvars[tv];
                        let Some(l) = self.tss.universe.eval_term(&decl.label, &b2.env) else { return };
                        let lit = Literal::new(Expr::var(&decl.src), l, Expr::var(&decl.tgt));
                        if !self.match_term(t, &STerm::Var(tv.clone()), &TExpr::var(tv, lit), &mut b2) {
                            return;
                        }
                    }
                    if self.conditions_hold(t, &b2) != Some(true) {
                        return;
                    }
                    feasible = true;
                    match self.instantiate(&t.target, &b2).map(|v| v.literal(&self.tss)) {
                        Ok(Ok(vl)) => {
                            if vl.src != rl.tgt {
                                out.push(d("SF6", format!("target starts at {} but the right transition ends at {}", vl.src, rl.tgt)));
                            }
                        }
                        Ok(Err(Error::KindMismatch(m))) | Err(Error::KindMismatch(m)) => {
                            out.push(d("SF6", format!("target is not well-kinded: {m}")));
                        }
                        _ => {}
                    }
                });
                if feasible && !self.tss.is_action(&rl.label) {
                    out.extend(self.check_indicator_clause(t, &b, d));
                }
                if !out.is_empty() {
                    out.truncate(1);
                    return out;
                }
            }
        }
        out
    }

    fn check_indicator_clause(&self, t: &SuccessorTemplate, b: &Binding, d: &dyn Fn(&str, String) -> Diagnostic) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let (STerm::Ctor { ctor, params, args: ra }, STerm::Ctor { args: sa, .. }) = (&t.lhs, &t.rhs) else { return out };
        let mut ze = Vec::with_capacity(ra.len());
        for (i, (xe, ye)) in ra.iter().zip(sa).enumerate() {
            let prem = t.premises.iter().find(|p| SArg::Trans(p.t.clone()) == *xe);
            match (prem, xe, ye) {
                (Some(p), _, _) => {
                    if let STerm::Var(ty) = &p.u {
                        if let Some(l) = self.tss.universe.eval_term(&t.tvars[ty].label, &b.env) {
                            if self.tss.is_action(&l) {
                                out.push(d("SF8", format!("right transition is an indicator but premise {ty} has action label {l}")));
                            }
                        }
                    }
                    ze.push(SArg::Trans(p.v.clone()));
                }
                (None, SArg::Trans(_), SArg::Trans(STerm::Var(ty))) => {
                    out.push(d("SF8", format!("right transition is an indicator but argument {} has no premise", i + 1)));
                    ze.push(SArg::Proc(t.tvars[ty].tgt.clone()));
                }
                (None, _, SArg::Proc(_)) => ze.push(xe.clone()),
                (None, _, SArg::Trans(STerm::Var(ty))) => ze.push(SArg::Proc(t.tvars[ty].tgt.clone())),
                _ => return out,
            }
        }
        let expected = STerm::Ctor { ctor: ctor.clone(), params: params.clone(), args: ze };
        if t.target != expected {
            out.push(d("SF8", format!("right transition is an indicator, so the target must be {expected}, not {}", t.target)));
        }
        out
    }
}

fn first_duplicate(v: &[Sym]) -> Option<&Sym> {
    let mut seen = BTreeSet::new();
    v.iter().find(|x| !seen.insert(*x))
}

type LabelGroup = (Vec<Sym>, Vec<Vec<Label>>);

/// Calls `f` once per assignment that picks, for each group, one of its
/// label tuples consistent with what is already bound, then gives every
/// variable in `rest` each label in turn.
fn for_each_grouped_assignment(groups: &[LabelGroup], rest: &[Sym], labels: &[Label], env: &mut Env, f: &mut dyn FnMut(&Env)) {
    let Some(((vars, tuples), more)) = groups.split_first() else {
        return for_each_assignment(rest, labels, env, f);
    };
    for tuple in tuples {
        let mut added = Vec::new();
        let mut consistent = true;
        for (v, l) in vars.iter().zip(tuple) {
            match env.get(v) {
                Some(Param::Label(bound)) if bound == l => {}
                Some(_) => consistent = false,
                None => {
                    env.insert(v.clone(), Param::Label(l.clone()));
                    added.push(v);
                }
            }
        }
        if consistent {
            for_each_grouped_assignment(more, rest, labels, env, f);
        }
        for v in added {
            env.remove(v);
        }
    }
}

fn for_each_assignment(vars: &[Sym], labels: &[Label], env: &mut Env, f: &mut dyn FnMut(&Env)) {
    match vars.split_first() {
        None => f(env),
        Some((v, rest)) => {
            for l in labels {
                env.insert(v.clone(), Param::Label(l.clone()));
                for_each_assignment(rest, labels, env, f);
            }
            env.remove(v);
        }
    }
}

/// For each constructor in a target pattern whose triggered arguments are
/// transition variables with variable labels: those label variables and
/// the premise-label tuples the constructor's instances accept there.
fn target_label_groups(t: &SuccessorTemplate, pat: &STerm, by_ctor: &BTreeMap<Sym, Vec<ConcreteRule>>, out: &mut Vec<LabelGroup>) {
    match pat {
        STerm::Var(_) => {}
        STerm::Rec(_, inner) => target_label_groups(t, inner, by_ctor, out),
        STerm::Ctor { ctor, args, .. } => {
            let mut positions = Vec::new();
            for (i, a) in args.iter().enumerate() {
                match a {
                    SArg::Trans(STerm::Var(tv)) => {
                        if let Some(LabelTerm::Var(lv)) = t.tvars.get(tv).map(|d| &d.label) {
                            positions.push((i, lv.clone()));
                        }
                    }
                    SArg::Trans(inner) => target_label_groups(t, inner, by_ctor, out),
                    SArg::Proc(_) => {}
                }
            }
            let tuples: BTreeSet<Vec<Label>> = by_ctor
                .get(ctor)
                .into_iter()
                .flatten()
                .filter_map(|r| positions.iter().map(|(i, _)| r.trigger.get(*i).cloned().flatten()).collect::<Option<Vec<_>>>())
                .collect();
            if !positions.is_empty() && !tuples.is_empty() {
                out.push((positions.into_iter().map(|(_, v)| v).collect(), tuples.into_iter().collect()));
            }
        }
    }
}

/// The open transition `R(xe)` for a concrete rule, using the template's own
/// variable names. `None` if the argument kinds do not fit.
fn open_instance(t: &SuccessorTemplate, pat: &STerm, r: &ConcreteRule) -> Option<TExpr> {
    let STerm::Ctor { args, .. } = pat else { return None };
    if args.len() != r.xs.len() {
        return None;
    }
    let mut xs = Vec::with_capacity(args.len());
    for (i, a) in args.iter().enumerate() {
        match (a, &r.trigger[i]) {
            (SArg::Proc(x), None) => xs.push(TArg::Proc(Expr::var(x))),
            (SArg::Trans(STerm::Var(tv)), Some(l)) => {
                let decl = t.tvars.get(tv)?;
                xs.push(TArg::Trans(TExpr::var(tv, Literal::new(Expr::var(&decl.src), l.clone(), Expr::var(&decl.tgt)))));
            }
            _ => return None,
        }
    }
    Some(TExpr::ctor(r.name.clone(), xs))
}

// ---------- indicator-identity expansion ----------

struct Schema {
    ctor: Sym,
    arity: usize,
    triggers: BTreeSet<usize>,
    name_params: Vec<Sym>,
    op_param: Option<Sym>,
    indicator: bool,
}

fn schemas_of(tss: &Tss, family: &str) -> Vec<Schema> {
    let mut out: BTreeMap<Sym, Schema> = BTreeMap::new();
    let all = tss.all_instances();
    for (idx, t) in tss.templates.iter().enumerate() {
        let Some(shape) = tss.shape(idx) else { continue };
        if shape.family.as_ref() != family || out.contains_key(&t.ctor) {
            continue;
        }
        let indicator = all.iter().any(|r| r.name.ctor == t.ctor && !tss.is_action(&r.label));
        let op_param = match &shape.op_param {
            Some(Param::Var(v)) if t.name_params.contains(v) => Some(v.clone()),
            _ => None,
        };
        out.insert(
            t.ctor.clone(),
            Schema { ctor: t.ctor.clone(), arity: shape.arity(), triggers: shape.trigger_set(), name_params: t.name_params.clone(), op_param, indicator },
        );
    }
    out.into_values().collect()
}

fn rename_params(s: &Schema, prefix: &str) -> Vec<LabelTerm> {
    s.name_params
        .iter()
        .enumerate()
        .map(|(k, v)| {
            if s.op_param.as_ref() == Some(v) {
                LabelTerm::Var(sym("p"))
            } else {
                LabelTerm::Var(sym(&format!("{prefix}{k}")))
            }
        })
        .collect()
}

fn indicator_condition() -> Cond {
    Cond::NotIn(LabelTerm::Var(sym(RHS_LABEL)), SetExpr::Named(sym(ACTION_SET)))
}

fn tvar(tvars: &mut BTreeMap<Sym, TVarDecl>, name: &str, src: &str, label: &str, tgt: &str) -> STerm {
    tvars.insert(sym(name), TVarDecl { src: sym(src), label: LabelTerm::Var(sym(label)), tgt: sym(tgt) });
    STerm::Var(sym(name))
}

/// Converts the indicator-identity rule into De Simone successor rules for
/// the listed operator types (`rec` for recursive calls), in (type, name,
/// name) order.
pub fn expand_indicator_identity(tss: &Tss, types: &[&str]) -> Result<Vec<SuccessorTemplate>> {
    let mut out = Vec::new();
    for &ty in types {
        if ty == REC_TYPE {
            for chi in [RecKind::Act, RecKind::In] {
                let mut tvars = BTreeMap::new();
                let tx = tvar(&mut tvars, "tx1", "x1", "xa1", "x1'");
                let ty_ = tvar(&mut tvars, "ty1", "x1", "ya1", "y1'");
                let tz = tvar(&mut tvars, "tz1", "y1'", "za1", "z1'");
                out.push(SuccessorTemplate {
                    name: sym(&format!("1[{}/{}]", chi.token(), REC_IN)),
                    premises: vec![SuccessorPremise { t: tx.clone(), u: ty_.clone(), v: tz.clone() }],
                    lhs: STerm::Rec(chi, Box::new(tx)),
                    rhs: STerm::Rec(RecKind::In, Box::new(ty_)),
                    target: STerm::Rec(chi, Box::new(tz)),
                    tvars,
                    conditions: vec![indicator_condition()],
                    span: None,
                    expanded_from: Some(sym(REC_TYPE)),
                });
            }
            continue;
        }
        if tss.signature.get(ty).is_none() {
            return Err(Error::UnknownOperatorType(ty.to_string()));
        }
        let schemas = schemas_of(tss, ty);
        if schemas.is_empty() {
            return Err(Error::UnknownOperatorType(format!("{ty} has no transition rules")));
        }
        for r in &schemas {
            for s in schemas.iter().filter(|s| s.indicator && s.arity == r.arity) {
                let mut tvars = BTreeMap::new();
                let mut premises = Vec::new();
                let (mut ra, mut sa, mut ze) = (Vec::new(), Vec::new(), Vec::new());
                for i in 0..r.arity {
                    let k = i + 1;
                    let x = format!("x{k}");
                    let in_r = r.triggers.contains(&i);
                    let in_s = s.triggers.contains(&i);
                    let xe = if in_r {
                        SArg::Trans(tvar(&mut tvars, &format!("tx{k}"), &x, &format!("xa{k}"), &format!("x{k}'")))
                    } else {
                        SArg::Proc(sym(&x))
                    };
                    let ye = if in_s {
                        SArg::Trans(tvar(&mut tvars, &format!("ty{k}"), &x, &format!("ya{k}"), &format!("y{k}'")))
                    } else {
                        SArg::Proc(sym(&x))
                    };
                    if in_r && in_s {
                        let (SArg::Trans(pt), SArg::Trans(pu)) = (&xe, &ye) else { unreachable!("both are transitions") };
                        let tz = tvar(&mut tvars, &format!("tz{k}"), &format!("y{k}'"), &format!("za{k}"), &format!("z{k}'"));
                        premises.push(SuccessorPremise { t: pt.clone(), u: pu.clone(), v: tz.clone() });
                        ze.push(SArg::Trans(tz));
                    } else if !in_s {
                        ze.push(xe.clone());
                    } else {
                        ze.push(SArg::Proc(sym(&format!("y{k}'"))));
                    }
                    ra.push(xe);
                    sa.push(ye);
                }
                let rp = rename_params(r, "r");
                out.push(SuccessorTemplate {
                    name: sym(&format!("1[{}/{}]", r.ctor, s.ctor)),
                    premises,
                    lhs: STerm::Ctor { ctor: r.ctor.clone(), params: rp.clone(), args: ra },
                    rhs: STerm::Ctor { ctor: s.ctor.clone(), params: rename_params(s, "s"), args: sa },
                    target: STerm::Ctor { ctor: r.ctor.clone(), params: rp, args: ze },
                    tvars,
                    conditions: vec![indicator_condition()],
                    span: None,
                    expanded_from: Some(sym(ty)),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_found() {
        let v = vec![sym("a"), sym("b"), sym("a")];
        assert_eq!(first_duplicate(&v).map(|s| s.as_ref()), Some("a"));
        assert_eq!(first_duplicate(&v[..2]), None);
    }

    #[test]
    fn assignments_cover_product() {
        let labels = vec![Label::name("a"), Label::name("b")];
        let mut n = 0;
        for_each_assignment(&[sym("x"), sym("y")], &labels, &mut Env::new(), &mut |_| n += 1);
        assert_eq!(n, 4);
    }

    #[test]
    fn grouped_assignments_follow_tuples() {
        let (a, b) = (Label::name("a"), Label::name("b"));
        let groups = vec![(vec![sym("x"), sym("y")], vec![vec![a.clone(), b.clone()], vec![b.clone(), a.clone()]])];
        let mut seen = Vec::new();
        for_each_grouped_assignment(&groups, &[sym("z")], &[a.clone(), b.clone()], &mut Env::new(), &mut |env| seen.push(env.clone()));
        assert_eq!(seen.len(), 4);
        let mut bound = Env::from([(sym("x"), Param::Label(b.clone()))]);
        let mut n = 0;
        for_each_grouped_assignment(&groups, &[], &[], &mut bound, &mut |env| {
            assert_eq!(env[&sym("y")], Param::Label(a.clone()));
            n += 1;
        });
        assert_eq!(n, 1);
    }
}
