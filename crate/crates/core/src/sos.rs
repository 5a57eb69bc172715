//! Schematic De Simone rules, their concrete instances, rule names, the
//! transition system specification and its format checker.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::label::{Cond, Env, Label, LabelTerm, LabelUniverse, Param, SetExpr};
use crate::parse::Span;
use crate::syntax::{unfold_rec, Expr, ExprKind, Op, ParamSpec, RecSpec, Signature};
use crate::{sym, Sym};

/// Reserved names of the built-in recursion rules.
pub const REC_ACT: &str = "rec_Act";
pub const REC_IN: &str = "rec_In";

/// Cap on the number of subsets enumerated for a subset-valued variable.
const MAX_SUBSET_CARRIER: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub src: Expr,
    pub label: Label,
    pub tgt: Expr,
}

impl Literal {
    pub fn new(src: Expr, label: Label, tgt: Expr) -> Self {
        Literal { src, label, tgt }
    }

    pub fn substitute(&self, sigma: &BTreeMap<Sym, Expr>) -> Literal {
        Literal { src: self.src.substitute(sigma), label: self.label.clone(), tgt: self.tgt.substitute(sigma) }
    }

    pub fn alpha_eq(&self, other: &Literal) -> bool {
        self.label == other.label && self.src.alpha_eq(&other.src) && self.tgt.alpha_eq(&other.tgt)
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -{}-> {}", self.src, self.label, self.tgt)
    }
}

/// A concrete rule name: a constructor token whose `{}` holes are filled by
/// the parameters, e.g. `->{}` with `a` is `->a`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RuleName {
    pub ctor: Sym,
    pub params: Vec<Param>,
}

impl RuleName {
    pub fn new(ctor: &str, params: Vec<Param>) -> Self {
        RuleName { ctor: sym(ctor), params }
    }

    pub fn plain(ctor: &str) -> Self {
        Self::new(ctor, vec![])
    }
}

impl fmt::Display for RuleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut params = self.params.iter();
        let mut rest = self.ctor.as_ref();
        while let Some(k) = rest.find("{}") {
            write!(f, "{}", &rest[..k])?;
            match params.next() {
                Some(p) => write!(f, "{p}")?,
                None => write!(f, "{{}}")?,
            }
            rest = &rest[k + 2..];
        }
        write!(f, "{rest}")?;
        let extra: Vec<String> = params.map(|p| p.to_string()).collect();
        if !extra.is_empty() {
            write!(f, "[{}]", extra.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VarDomain {
    /// A label drawn from a set.
    In(SetExpr),
    /// A subset of a set (restriction sets).
    Subset(SetExpr),
    /// Any declared relabelling.
    Relabelling,
}

/// A literal inside a template, with a schematic label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawLiteral {
    pub src: Expr,
    pub label: LabelTerm,
    pub tgt: Expr,
}

impl fmt::Display for RawLiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -{}-> {}", self.src, self.label, self.tgt)
    }
}

/// A schematic rule as written in a language definition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleTemplate {
    /// Constructor token, with `{}` holes for `name_params`.
    pub ctor: Sym,
    pub name_params: Vec<Sym>,
    pub vars: Vec<(Sym, VarDomain)>,
    pub premises: Vec<RawLiteral>,
    pub conclusion: RawLiteral,
    pub conditions: Vec<Cond>,
    pub span: Span,
}

/// The De Simone reading of a template, if it has one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shape {
    pub family: Sym,
    pub op_param: Option<Param>,
    pub xs: Vec<Sym>,
    /// Per argument: the premise target variable and label, if triggered.
    pub trigger: Vec<Option<(Sym, LabelTerm)>>,
    pub label: LabelTerm,
    pub target: Expr,
}

impl Shape {
    pub fn trigger_set(&self) -> BTreeSet<usize> {
        self.trigger.iter().enumerate().filter(|(_, t)| t.is_some()).map(|(i, _)| i).collect()
    }

    pub fn arity(&self) -> usize {
        self.xs.len()
    }
}

/// A concrete instance of a template.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ConcreteRule {
    pub name: RuleName,
    pub op: Op,
    pub xs: Vec<Sym>,
    pub ys: Vec<Option<Sym>>,
    pub trigger: Vec<Option<Label>>,
    pub label: Label,
    pub target: Expr,
    pub template: usize,
}

impl ConcreteRule {
    pub fn trigger_set(&self) -> BTreeSet<usize> {
        self.trigger.iter().enumerate().filter(|(_, t)| t.is_some()).map(|(i, _)| i).collect()
    }

    /// The conclusion target after plugging in argument sources and premise targets.
    pub fn target_for(&self, args: &[Expr], premise_targets: &[Option<Expr>]) -> Expr {
        let mut sigma = BTreeMap::new();
        for (i, x) in self.xs.iter().enumerate() {
            sigma.insert(x.clone(), args[i].clone());
            if let (Some(y), Some(t)) = (&self.ys[i], &premise_targets[i]) {
                sigma.insert(y.clone(), t.clone());
            }
        }
        self.target.substitute(&sigma)
    }

    /// Target with variables renamed positionally, so targets of different
    /// templates can be compared.
    fn normalized_target(&self) -> Expr {
        let mut sigma = BTreeMap::new();
        for (i, x) in self.xs.iter().enumerate() {
            sigma.insert(x.clone(), Expr::var(&format!("%x{i}")));
            if let Some(y) = &self.ys[i] {
                sigma.insert(y.clone(), Expr::var(&format!("%y{i}")));
            }
        }
        self.target.substitute(&sigma)
    }

    pub fn conclusion_source(&self) -> Expr {
        Expr::app(self.op.clone(), self.xs.iter().map(|x| Expr::new(ExprKind::Var(x.clone()))).collect())
    }
}

impl fmt::Display for ConcreteRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prem: Vec<String> = self
            .trigger
            .iter()
            .enumerate()
            .filter_map(|(i, t)| {
                t.as_ref().map(|l| format!("{} -{l}-> {}", self.xs[i], self.ys[i].as_deref().unwrap_or("?")))
            })
            .collect();
        write!(f, "{}: {} => {} -{}-> {}", self.name, prem.join(", "), self.conclusion_source(), self.label, self.target)
    }
}

/// A built-in recursion rule instance for one recursive call and label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecursionRule {
    pub name: RuleName,
    pub premise: Literal,
    pub conclusion: Literal,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Diagnostic {
    pub locator: String,
    pub span: Option<Span>,
    pub clause: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.span {
            Some(s) => write!(f, "[{}] {} at {}: {}", self.clause, self.locator, s, self.message),
            None => write!(f, "[{}] {}: {}", self.clause, self.locator, self.message),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FormatReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl FormatReport {
    pub fn passed(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn clauses(&self) -> BTreeSet<String> {
        self.diagnostics.iter().map(|d| d.clause.clone()).collect()
    }

    pub fn merge(&mut self, other: FormatReport) {
        self.diagnostics.extend(other.diagnostics);
    }

    pub fn into_result(self) -> Result<()> {
        if self.passed() {
            Ok(())
        } else {
            Err(Error::Format(self))
        }
    }
}

impl fmt::Display for FormatReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return write!(f, "pass");
        }
        writeln!(f, "fail ({} diagnostic(s))", self.diagnostics.len())?;
        for d in &self.diagnostics {
            writeln!(f, "  {d}")?;
        }
        Ok(())
    }
}

type RuleCache<K> = Mutex<HashMap<K, Arc<Vec<ConcreteRule>>>>;

/// A transition system specification: signature, label universe and
/// rule templates. Recursion rules are built in.
pub struct Tss {
    pub signature: Signature,
    pub universe: LabelUniverse,
    pub templates: Vec<RuleTemplate>,
    shapes: Vec<std::result::Result<Shape, Diagnostic>>,
    by_op: RuleCache<Op>,
    by_name: RuleCache<RuleName>,
}

impl Clone for Tss {
    fn clone(&self) -> Self {
        Tss::new(self.signature.clone(), self.universe.clone(), self.templates.clone())
    }
}

impl fmt::Debug for Tss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tss").field("templates", &self.templates.len()).finish()
    }
}

impl PartialEq for Tss {
    fn eq(&self, other: &Self) -> bool {
        self.signature == other.signature && self.universe == other.universe && self.templates == other.templates
    }
}

fn locator(t: &RuleTemplate) -> String {
    format!("rule \"{}\"", t.ctor)
}

fn diag(t: &RuleTemplate, clause: &str, message: impl Into<String>) -> Diagnostic {
    Diagnostic { locator: locator(t), span: Some(t.span), clause: clause.into(), message: message.into() }
}

fn analyze(t: &RuleTemplate, sig: &Signature) -> std::result::Result<Shape, Diagnostic> {
    let (op, args) = match t.conclusion.src.kind() {
        ExprKind::App(op, args) => (op, args),
        _ => return Err(diag(t, "DS1", "conclusion source must be an operator applied to variables")),
    };
    let decl = sig.get(&op.family).ok_or_else(|| diag(t, "DS1", format!("unknown operator {}", op.family)))?;
    if decl.arity != args.len() {
        return Err(diag(t, "DS1", format!("operator {} has arity {}", op.family, decl.arity)));
    }
    let mut xs = Vec::new();
    for a in args {
        match a.as_var() {
            Some(v) => xs.push(v.clone()),
            None => return Err(diag(t, "DS1", format!("argument {a} of the conclusion source is not a variable"))),
        }
    }
    let mut trigger: Vec<Option<(Sym, LabelTerm)>> = vec![None; xs.len()];
    for p in &t.premises {
        let (Some(x), Some(y)) = (p.src.as_var(), p.tgt.as_var()) else {
            return Err(diag(t, "DS1", format!("premise {p} is not of the form x -a-> y")));
        };
        let Some(i) = xs.iter().position(|v| v == x) else {
            return Err(diag(t, "DS1", format!("premise source {x} is not an argument of the conclusion")));
        };
        if trigger[i].is_some() {
            return Err(diag(t, "DS1", format!("argument {x} has two premises")));
        }
        trigger[i] = Some((y.clone(), p.label.clone()));
    }
    let declared: BTreeSet<&Sym> = t.vars.iter().map(|(v, _)| v).collect();
    let op_param = match (&decl.param, &op.param) {
        (ParamSpec::None, None) => None,
        (ParamSpec::None, Some(_)) => return Err(diag(t, "DS1", format!("operator {} takes no parameter", op.family))),
        (_, None) => return Err(diag(t, "DS1", format!("operator {} needs a parameter", op.family))),
        (_, Some(Param::Var(v))) if !declared.contains(v) => {
            return Err(diag(t, "DS1", format!("parameter variable {v} is not declared")))
        }
        (_, Some(p)) => Some(p.clone()),
    };
    let mut used = BTreeSet::new();
    t.conclusion.label.vars(&mut used);
    for p in &t.premises {
        p.label.vars(&mut used);
    }
    for c in &t.conditions {
        c.vars(&mut used);
    }
    for v in &used {
        if !declared.contains(v) && !is_known_name(v) {
            return Err(diag(t, "DS1", format!("label variable {v} is not declared")));
        }
    }
    for v in &t.name_params {
        if !declared.contains(v) {
            return Err(diag(t, "DS1", format!("name parameter {v} is not declared")));
        }
    }
    Ok(Shape { family: op.family.clone(), op_param, xs, trigger, label: t.conclusion.label.clone(), target: t.conclusion.tgt.clone() })
}

// functions and set names that may appear in label terms without declaration
fn is_known_name(v: &str) -> bool {
    crate::label::BUILTIN_FUNCTIONS.contains(&v) || v == "bcomp" || v.chars().next().is_some_and(|c| c.is_uppercase())
}

fn subsets(carrier: &BTreeSet<Label>) -> Vec<BTreeSet<Label>> {
    let items: Vec<&Label> = carrier.iter().collect();
    let n = items.len().min(MAX_SUBSET_CARRIER);
    (0u32..(1 << n))
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| items[i].clone()).collect())
        .collect()
}

impl Tss {
    pub fn new(signature: Signature, universe: LabelUniverse, templates: Vec<RuleTemplate>) -> Self {
        let shapes = templates.iter().map(|t| analyze(t, &signature)).collect();
        Tss { signature, universe, templates, shapes, by_op: Default::default(), by_name: Default::default() }
    }

    pub fn shape(&self, template: usize) -> Option<&Shape> {
        self.shapes.get(template).and_then(|s| s.as_ref().ok())
    }

    pub fn is_action(&self, l: &Label) -> bool {
        self.universe.is_action(l)
    }

    /// Distinct constructor tokens, in template order.
    pub fn constructors(&self) -> Vec<Sym> {
        let mut seen = Vec::new();
        for t in &self.templates {
            if !seen.contains(&t.ctor) {
                seen.push(t.ctor.clone());
            }
        }
        seen
    }

    fn domain_values(&self, d: &VarDomain, env: &Env) -> Option<Vec<Param>> {
        Some(match d {
            VarDomain::In(s) => self.universe.eval_set(s, env)?.into_iter().map(Param::Label).collect(),
            VarDomain::Subset(s) => subsets(&self.universe.eval_set(s, env)?).into_iter().map(Param::Set).collect(),
            VarDomain::Relabelling => self.universe.relabellings.keys().map(|f| Param::Fn(f.clone())).collect(),
        })
    }

    fn in_domain(&self, d: &VarDomain, p: &Param, env: &Env) -> bool {
        match (d, p) {
            (VarDomain::In(s), Param::Label(l)) => self.universe.eval_set(s, env).is_some_and(|x| x.contains(l)),
            (VarDomain::Subset(s), Param::Set(set)) => {
                self.universe.eval_set(s, env).is_some_and(|x| set.iter().all(|l| x.contains(l)))
            }
            (VarDomain::Relabelling, Param::Fn(f)) => self.universe.relabellings.contains_key(f),
            _ => false,
        }
    }

    /// All instances of template `idx` extending the pre-bound environment.
    pub fn instances_of(&self, idx: usize, seed: &Env) -> Vec<ConcreteRule> {
        let Some(shape) = self.shape(idx) else { return vec![] };
        let t = &self.templates[idx];
        for (v, d) in &t.vars {
            if let Some(p) = seed.get(v) {
                if !self.in_domain(d, p, seed) {
                    return vec![];
                }
            }
        }
        let free: Vec<&(Sym, VarDomain)> = t.vars.iter().filter(|(v, _)| !seed.contains_key(v)).collect();
        let mut out = Vec::new();
        let mut env = seed.clone();
        self.enumerate(idx, shape, &free, 0, &mut env, &mut out);
        out
    }

    fn enumerate(&self, idx: usize, shape: &Shape, free: &[&(Sym, VarDomain)], k: usize, env: &mut Env, out: &mut Vec<ConcreteRule>) {
        let t = &self.templates[idx];
        // prune on every condition that is already decided
        for c in &t.conditions {
            if self.universe.eval_cond(c, env) == Some(false) {
                return;
            }
        }
        if k == free.len() {
            if let Some(r) = self.build(idx, shape, env) {
                out.push(r);
            }
            return;
        }
        let (v, d) = free[k];
        let Some(values) = self.domain_values(d, env) else { return };
        for val in values {
            env.insert(v.clone(), val);
            self.enumerate(idx, shape, free, k + 1, env, out);
        }
        env.remove(v);
    }

    fn build(&self, idx: usize, shape: &Shape, env: &Env) -> Option<ConcreteRule> {
        let t = &self.templates[idx];
        for c in &t.conditions {
            if self.universe.eval_cond(c, env) != Some(true) {
                return None;
            }
        }
        let label = self.universe.eval_term(&shape.label, env)?;
        if !self.universe.contains(&label) {
            return None;
        }
        let mut trigger = Vec::with_capacity(shape.xs.len());
        let mut ys = Vec::with_capacity(shape.xs.len());
        for tr in &shape.trigger {
            match tr {
                Some((y, lt)) => {
                    let l = self.universe.eval_term(lt, env)?;
                    if !self.universe.contains(&l) {
                        return None;
                    }
                    trigger.push(Some(l));
                    ys.push(Some(y.clone()));
                }
                None => {
                    trigger.push(None);
                    ys.push(None);
                }
            }
        }
        let param = match &shape.op_param {
            Some(Param::Var(v)) => Some(env.get(v)?.clone()),
            p => p.clone(),
        };
        let params = t.name_params.iter().map(|v| env.get(v).cloned()).collect::<Option<Vec<_>>>()?;
        Some(ConcreteRule {
            name: RuleName { ctor: t.ctor.clone(), params },
            op: Op { family: shape.family.clone(), param },
            xs: shape.xs.clone(),
            ys,
            trigger,
            label,
            target: shape.target.instantiate_params(env),
            template: idx,
        })
    }

    /// Every instance of every template, with operator parameters ranging
    /// over their whole (finite) domains.
    pub fn all_instances(&self) -> Vec<ConcreteRule> {
        (0..self.templates.len()).flat_map(|i| self.instances_of(i, &Env::new())).collect()
    }

    /// Instances whose conclusion source has operator `op`.
    pub fn instances_for_op(&self, op: &Op) -> Arc<Vec<ConcreteRule>> {
        if let Some(r) = self.by_op.lock().expect("cache lock").get(op) {
            return r.clone();
        }
        let mut out = Vec::new();
        for (idx, s) in self.shapes.iter().enumerate() {
            let Ok(shape) = s else { continue };
            if shape.family != op.family {
                continue;
            }
            let mut seed = Env::new();
            match (&shape.op_param, &op.param) {
                (Some(Param::Var(v)), Some(p)) => {
                    seed.insert(v.clone(), p.clone());
                }
                (a, b) if a == b => {}
                _ => continue,
            }
            out.extend(self.instances_of(idx, &seed));
        }
        let out = Arc::new(out);
        self.by_op.lock().expect("cache lock").insert(op.clone(), out.clone());
        out
    }

    /// Instances carrying the given rule name.
    pub fn instances_for_name(&self, name: &RuleName) -> Arc<Vec<ConcreteRule>> {
        if let Some(r) = self.by_name.lock().expect("cache lock").get(name) {
            return r.clone();
        }
        let mut out = Vec::new();
        for (idx, t) in self.templates.iter().enumerate() {
            if t.ctor != name.ctor || t.name_params.len() != name.params.len() {
                continue;
            }
            let seed: Env = t.name_params.iter().cloned().zip(name.params.iter().cloned()).collect();
            out.extend(self.instances_of(idx, &seed));
        }
        let out = Arc::new(out);
        self.by_name.lock().expect("cache lock").insert(name.clone(), out.clone());
        out
    }

    /// The unique instance named `name` with the given trigger.
    pub fn find_instance(&self, name: &RuleName, trigger: &[Option<Label>]) -> Result<ConcreteRule> {
        let all = self.instances_for_name(name);
        all.iter().find(|r| r.trigger.as_slice() == trigger).cloned().ok_or_else(|| {
            let tr: Vec<String> = trigger.iter().map(|t| t.as_ref().map_or("*".into(), |l| l.to_string())).collect();
            Error::NoMatchingRule(format!("{name} with trigger ({})", tr.join(", ")))
        })
    }

    /// Arity and trigger set shared by all rules called `name`.
    pub fn declaration_of(&self, name: &RuleName) -> Option<(usize, BTreeSet<usize>)> {
        let all = self.instances_for_name(name);
        all.first().map(|r| (r.xs.len(), r.trigger_set()))
    }

    /// Instances for `op` whose conclusion label equals `label` (or any label).
    pub fn instantiate_rules(&self, op: &Op, label: Option<&Label>) -> Result<Vec<ConcreteRule>> {
        if self.signature.get(&op.family).is_none() {
            return Err(Error::UnknownOperator(op.family.to_string()));
        }
        Ok(self.instances_for_op(op).iter().filter(|r| label.is_none_or(|l| &r.label == l)).cloned().collect())
    }

    pub fn check_de_simone(&self) -> FormatReport {
        let mut report = FormatReport::default();
        for (idx, t) in self.templates.iter().enumerate() {
            if t.ctor.as_ref() == REC_ACT || t.ctor.as_ref() == REC_IN {
                report.diagnostics.push(diag(t, "DS7", format!("{} is reserved for the recursion rules", t.ctor)));
            }
            let shape = match &self.shapes[idx] {
                Ok(s) => s,
                Err(d) => {
                    report.diagnostics.push(d.clone());
                    continue;
                }
            };
            report.diagnostics.extend(self.check_shape(t, shape));
        }
        let mut groups: BTreeMap<RuleName, Vec<ConcreteRule>> = BTreeMap::new();
        for r in self.all_instances() {
            let t = &self.templates[r.template];
            let shape = self.shape(r.template).expect("instances come from shaped templates");
            if !self.is_action(&r.label) {
                if let Some(i) = r.trigger.iter().position(|l| l.as_ref().is_some_and(|l| self.is_action(l))) {
                    report.diagnostics.push(diag(
                        t,
                        "DS5",
                        format!("instance {} has indicator label {} but premise label {} is an action", r.name, r.label, r.trigger[i].as_ref().expect("position found")),
                    ));
                }
                let z: Vec<Expr> = (0..shape.arity())
                    .map(|i| Expr::new(ExprKind::Var(r.ys[i].clone().unwrap_or_else(|| r.xs[i].clone()))))
                    .collect();
                let expected = Expr::app(r.op.clone(), z);
                if r.target != expected {
                    report.diagnostics.push(diag(
                        t,
                        "DS5",
                        format!("instance {} has indicator label {} but target {} instead of {}", r.name, r.label, r.target, expected),
                    ));
                }
            }
            groups.entry(r.name.clone()).or_default().push(r);
        }
        let mut seen_ds6 = BTreeSet::new();
        for (name, rules) in &groups {
            let first = &rules[0];
            for (k, r) in rules.iter().enumerate().skip(1) {
                let problem = if r.op != first.op {
                    Some(format!("has types {} and {}", op_display(&first.op), op_display(&r.op)))
                } else if r.trigger_set() != first.trigger_set() {
                    Some("has different trigger sets".to_string())
                } else if r.normalized_target() != first.normalized_target() {
                    Some(format!("has different targets {} and {}", first.target, r.target))
                } else if rules[..k].iter().any(|o| o.trigger == r.trigger) {
                    Some("has two rules with the same trigger".to_string())
                } else {
                    None
                };
                if let Some(msg) = problem {
                    let t = &self.templates[r.template];
                    if seen_ds6.insert((r.template, msg.clone())) {
                        report.diagnostics.push(diag(t, "DS6", format!("name {name} {msg}")));
                    }
                }
            }
        }
        report.diagnostics.sort();
        report.diagnostics.dedup();
        report
    }

    fn check_shape(&self, t: &RuleTemplate, shape: &Shape) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        let ys = shape.trigger.iter().flatten().map(|(y, _)| y);
        for v in shape.xs.iter().chain(ys) {
            if !seen.insert(v.clone()) {
                out.push(diag(t, "DS2", format!("variable {v} occurs twice among the rule's variables")));
            }
        }
        let allowed: BTreeSet<Sym> = shape
            .trigger
            .iter()
            .enumerate()
            .map(|(i, tr)| match tr {
                Some((y, _)) => y.clone(),
                None => shape.xs[i].clone(),
            })
            .collect();
        let mut counts = BTreeMap::new();
        count_free(&shape.target, &mut counts);
        for (v, n) in &counts {
            if *n > 1 {
                out.push(diag(t, "DS3", format!("target {} is not univariate: {v} occurs {n} times", shape.target)));
            }
            if !allowed.contains(v) {
                out.push(diag(t, "DS3", format!("target {} mentions variable {v} that is not allowed", shape.target)));
            }
        }
        let mut recs = Vec::new();
        rec_subterms(&shape.target, &mut recs);
        for r in recs {
            if !r.is_closed() {
                out.push(diag(t, "DS4", format!("recursive call {r} in the target is not closed")));
            }
        }
        out
    }

    /// The built-in recursion rule for `<X|S>` and `label`.
    pub fn builtin_recursion_rules(&self, x: &str, spec: &Arc<RecSpec>, label: &Label) -> Result<RecursionRule> {
        let unfolded = unfold_rec(x, spec)?;
        let call = Expr::rec(x, spec.clone());
        let mut names = BTreeSet::new();
        call.all_names(&mut names);
        let y = (0..).map(|k| if k == 0 { "y".to_string() } else { format!("y{k}") }).find(|n| !names.contains(n.as_str())).expect("fresh name");
        let yv = Expr::var(&y);
        Ok(if self.is_action(label) {
            RecursionRule {
                name: RuleName::plain(REC_ACT),
                premise: Literal::new(unfolded, label.clone(), yv.clone()),
                conclusion: Literal::new(call, label.clone(), yv),
            }
        } else {
            RecursionRule {
                name: RuleName::plain(REC_IN),
                premise: Literal::new(unfolded, label.clone(), yv),
                conclusion: Literal::new(call.clone(), label.clone(), call),
            }
        })
    }
}

fn op_display(op: &Op) -> String {
    match &op.param {
        Some(p) => format!("{}[{p}]", op.family),
        None => op.family.to_string(),
    }
}

pub(crate) fn count_free(e: &Expr, counts: &mut BTreeMap<Sym, usize>) {
    count_free_under(e, &BTreeSet::new(), counts)
}

fn count_free_under(e: &Expr, bound: &BTreeSet<Sym>, counts: &mut BTreeMap<Sym, usize>) {
    match e.kind() {
        ExprKind::Var(v) => {
            if !bound.contains(v) {
                *counts.entry(v.clone()).or_default() += 1;
            }
        }
        ExprKind::App(_, args) => args.iter().for_each(|a| count_free_under(a, bound, counts)),
        ExprKind::Rec(_, s) => {
            let mut inner = bound.clone();
            inner.extend(s.0.keys().cloned());
            s.0.values().for_each(|b| count_free_under(b, &inner, counts));
        }
    }
}

fn rec_subterms(e: &Expr, out: &mut Vec<Expr>) {
    match e.kind() {
        ExprKind::Var(_) => {}
        ExprKind::App(_, args) => args.iter().for_each(|a| rec_subterms(a, out)),
        ExprKind::Rec(..) => out.push(e.clone()),
    }
}
