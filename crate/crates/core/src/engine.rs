//! Goal-directed derivation of enabled transitions and successor triples.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::successor::Tsss;
use crate::syntax::{unfold_rec, Expr, ExprKind};
use crate::transition::{RecKind, TArg, TExpr, TExprKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExploreLimits {
    pub max_states: usize,
    /// Bound on the goal stack, i.e. on proof height.
    pub max_derivation_depth: usize,
    pub max_transitions_per_state: usize,
}

pub const DEFAULT_MAX_STATES: usize = 10_000;

impl Default for ExploreLimits {
    fn default() -> Self {
        ExploreLimits { max_states: DEFAULT_MAX_STATES, max_derivation_depth: 256, max_transitions_per_state: 1_000 }
    }
}

impl ExploreLimits {
    pub fn validate(&self) -> Result<()> {
        if self.max_states == 0 || self.max_derivation_depth == 0 || self.max_transitions_per_state == 0 {
            return Err(Error::InvalidParams("limits must be positive".into()));
        }
        Ok(())
    }
}

/// A closed transition: its canonical name plus the cached root literal.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Transition {
    pub expr: TExpr,
    pub source: Expr,
    pub label: Label,
    pub target: Expr,
}

impl fmt::Debug for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} : {} -{}-> {}", self.expr, self.source, self.label, self.target)
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.expr)
    }
}

type EnSet = Arc<Vec<Transition>>;

/// Cycle bookkeeping for one `enabled` query.
#[derive(Default)]
struct Goals {
    stack: Vec<Expr>,
    approx: HashMap<Expr, Vec<Transition>>,
}

const FIXPOINT_ROUNDS: usize = 4;

/// Derives transitions and successors for a TSSS, memoizing per canonical
/// state and per transition pair.
type SuccMemo = HashMap<(TExpr, TExpr), Arc<Vec<TExpr>>>;

pub struct Engine {
    pub tsss: Arc<Tsss>,
    pub limits: ExploreLimits,
    en_memo: Mutex<HashMap<Expr, EnSet>>,
    succ_memo: Mutex<SuccMemo>,
}

impl Engine {
    pub fn new(tsss: Arc<Tsss>, limits: ExploreLimits) -> Self {
        Engine { tsss, limits, en_memo: Mutex::default(), succ_memo: Mutex::default() }
    }

    /// Builds a transition from a closed expression, validating it.
    pub fn transition(&self, e: &TExpr) -> Result<Transition> {
        if !e.is_closed() {
            return Err(Error::NonTransitionResult(format!("{e} is not closed")));
        }
        let expr = e.canonical();
        let lit = expr.literal(&self.tsss.tss)?;
        Ok(Transition { expr, source: lit.src.canonical(), label: lit.label, target: lit.tgt.canonical() })
    }

    /// `en(p)`, sorted by label then name.
    pub fn enabled(&self, p: &Expr) -> Result<EnSet> {
        if !p.is_closed() {
            return Err(Error::PremiseViolated(format!("{p} is not closed")));
        }
        let p = p.canonical();
        let mut goals = Goals::default();
        Ok(self.goal(&p, &mut goals)?.0)
    }

    fn memo_get(&self, p: &Expr) -> Option<EnSet> {
        self.en_memo.lock().expect("memo lock").get(p).cloned()
    }

    /// Solves `p`; also returns the lowest stack index the answer depended on.
    fn goal(&self, p: &Expr, g: &mut Goals) -> Result<(EnSet, usize)> {
        if let Some(r) = self.memo_get(p) {
            return Ok((r, usize::MAX));
        }
        if let Some(i) = g.stack.iter().position(|q| q == p) {
            return Ok((Arc::new(g.approx.get(p).cloned().unwrap_or_default()), i));
        }
        if g.stack.len() >= self.limits.max_derivation_depth {
            return Err(Error::DepthExceeded(self.limits.max_derivation_depth));
        }
        let me = g.stack.len();
        g.stack.push(p.clone());
        let mut rounds = 0;
        let out = loop {
            let (res, low) = match self.expand(p, g) {
                Ok(r) => r,
                Err(e) => {
                    g.stack.pop();
                    g.approx.remove(p);
                    return Err(e);
                }
            };
            if low < me {
                g.stack.pop();
                return Ok((Arc::new(res), low));
            }
            if low > me {
                break res;
            }
            // the goal depends on itself: iterate from the empty set
            if g.approx.get(p).is_some_and(|prev| *prev == res) || (res.is_empty() && !g.approx.contains_key(p)) {
                break res;
            }
            rounds += 1;
            if rounds >= FIXPOINT_ROUNDS {
                g.stack.pop();
                g.approx.remove(p);
                return Err(Error::UnguardedRecursion(p.to_string()));
            }
            g.approx.insert(p.clone(), res);
        };
        g.stack.pop();
        g.approx.remove(p);
        if out.len() > self.limits.max_transitions_per_state {
            return Err(Error::BudgetExceeded(format!("{} transitions enabled at {p}", out.len())));
        }
        let out = Arc::new(out);
        self.en_memo.lock().expect("memo lock").entry(p.clone()).or_insert_with(|| out.clone());
        Ok((out, usize::MAX))
    }

    fn expand(&self, p: &Expr, g: &mut Goals) -> Result<(Vec<Transition>, usize)> {
        let tss = &self.tsss.tss;
        let mut low = usize::MAX;
        let mut out = BTreeSet::new();
        match p.kind() {
            ExprKind::Var(v) => return Err(Error::PremiseViolated(format!("free variable {v}"))),
            ExprKind::Rec(x, spec) => {
                let body = unfold_rec(x, spec)?.canonical();
                let (inner, l) = self.goal(&body, g)?;
                low = low.min(l);
                for t in inner.iter() {
                    let (kind, target) = if tss.is_action(&t.label) { (RecKind::Act, t.target.clone()) } else { (RecKind::In, p.clone()) };
                    out.insert(Transition {
                        expr: TExpr::rec(kind, x, spec.clone(), t.expr.clone()),
                        source: p.clone(),
                        label: t.label.clone(),
                        target,
                    });
                }
            }
            ExprKind::App(op, args) => {
                let args: Vec<Expr> = args.iter().map(|a| a.canonical()).collect();
                let rules = tss.instances_for_op(op);
                let mut premises: HashMap<usize, EnSet> = HashMap::new();
                for i in rules.iter().flat_map(|r| r.trigger_set()).collect::<BTreeSet<_>>() {
                    let (r, lw) = self.goal(&args[i], g)?;
                    low = low.min(lw);
                    premises.insert(i, r);
                }
                for rule in rules.iter() {
                    // one list of candidate premise proofs per position
                    let mut choices: Vec<Vec<Option<&Transition>>> = Vec::with_capacity(args.len());
                    for (i, trig) in rule.trigger.iter().enumerate() {
                        match trig {
                            None => choices.push(vec![None]),
                            Some(l) => {
                                let c: Vec<Option<&Transition>> = premises[&i].iter().filter(|t| &t.label == l).map(Some).collect();
                                choices.push(c);
                            }
                        }
                    }
                    for_each_choice(&choices, &mut Vec::new(), &mut |picked| {
                        let tgts: Vec<Option<Expr>> = picked.iter().map(|t| t.map(|t| t.target.clone())).collect();
                        let targs = picked
                            .iter()
                            .zip(&args)
                            .map(|(t, a)| match t {
                                Some(t) => TArg::Trans(t.expr.clone()),
                                None => TArg::Proc(a.clone()),
                            })
                            .collect();
                        out.insert(Transition {
                            expr: TExpr::ctor(rule.name.clone(), targs),
                            source: p.clone(),
                            label: rule.label.clone(),
                            target: rule.target_for(&args, &tgts).canonical(),
                        });
                    });
                }
            }
        }
        let mut v: Vec<Transition> = out.into_iter().collect();
        v.sort_by(|a, b| (&a.label, &a.expr).cmp(&(&b.label, &b.expr)));
        Ok((v, low))
    }

    /// All `v` with `t ⇝_u v`, canonical and sorted.
    pub fn successors_of(&self, t: &Transition, u: &Transition) -> Result<Vec<Transition>> {
        if !t.source.alpha_eq(&u.source) {
            return Err(Error::PremiseViolated(format!("{} and {} have different sources", t.expr, u.expr)));
        }
        let vs = self.succ(&t.expr, &u.expr, 0)?;
        let mut out = Vec::with_capacity(vs.len());
        for v in vs.iter() {
            out.push(self.transition(v)?);
        }
        out.sort();
        out.dedup();
        Ok(out)
    }

    fn succ(&self, t: &TExpr, u: &TExpr, depth: usize) -> Result<Arc<Vec<TExpr>>> {
        let key = (t.clone(), u.clone());
        if let Some(r) = self.succ_memo.lock().expect("memo lock").get(&key) {
            return Ok(r.clone());
        }
        if depth >= self.limits.max_derivation_depth {
            return Err(Error::DepthExceeded(self.limits.max_derivation_depth));
        }
        let tsss = &self.tsss;
        let tss = &tsss.tss;
        let mut out: BTreeSet<TExpr> = BTreeSet::new();
        let (Some(th), Some(uh)) = (t.head(), u.head()) else {
            return Err(Error::NonTransitionResult("successors of open transitions".into()));
        };
        let t_lit = t.literal(tss)?;
        let u_lit = u.literal(tss)?;
        let cands = tsss.candidates(th, uh).to_vec();
        let mut err = None;
        {
            let mut sub = |a: &TExpr, b: &TExpr| -> Result<Vec<TExpr>> { Ok(self.succ(a, b, depth + 1)?.to_vec()) };
            let mut en = |p: &Expr| -> Result<Vec<TExpr>> { Ok(self.enabled(p)?.iter().map(|t| t.expr.clone()).collect()) };
            for idx in cands {
                match tsss.apply_template(idx, t, &t_lit, u, &u_lit, &mut sub, &mut en) {
                    Ok(vs) => out.extend(vs.into_iter().map(|v| v.canonical())),
                    Err(e) => {
                        err = Some(e);
                        break;
                    }
                }
            }
        }
        if let Some(e) = err {
            return Err(e);
        }
        if let (TExprKind::Rec(_, x1, s1, ti), TExprKind::Rec(zeta, x2, s2, ui)) = (t.kind(), u.kind()) {
            if x1 == x2 && s1 == s2 {
                for v in self.succ(ti, ui, depth + 1)?.iter() {
                    out.insert(if *zeta == RecKind::Act { v.clone() } else { t.clone() });
                }
            }
        }
        let out = Arc::new(out.into_iter().collect::<Vec<_>>());
        self.succ_memo.lock().expect("memo lock").entry(key).or_insert_with(|| out.clone());
        Ok(out)
    }
}

fn for_each_choice<'a>(choices: &[Vec<Option<&'a Transition>>], acc: &mut Vec<Option<&'a Transition>>, f: &mut dyn FnMut(&[Option<&'a Transition>])) {
    if acc.len() == choices.len() {
        f(acc);
        return;
    }
    for c in &choices[acc.len()] {
        acc.push(*c);
        for_each_choice(choices, acc, f);
        acc.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_term;
    use crate::stdlib::{abcde_default, ccs_default};

    fn en(lang: Arc<Tsss>, src: &str) -> Vec<Transition> {
        let p = parse_term(src, &lang.tss.signature, &lang.tss.universe).unwrap();
        Engine::new(lang, ExploreLimits::default()).enabled(&p).unwrap().to_vec()
    }

    #[test]
    fn nil_is_stuck_in_ccs() {
        assert!(en(ccs_default(), "0").is_empty());
    }

    #[test]
    fn nil_discards_in_abcde() {
        let ts = en(abcde_default(), "0");
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].label.to_string(), "b:");
        assert_eq!(ts[0].target, ts[0].source);
    }

    #[test]
    fn unguarded_empty_recursion_has_no_transitions() {
        assert!(en(ccs_default(), "<X | {X = X}>").is_empty());
    }

    #[test]
    fn unguarded_productive_recursion_is_reported() {
        let lang = ccs_default();
        let p = parse_term("<X | {X = X + a.0}>", &lang.tss.signature, &lang.tss.universe).unwrap();
        let r = Engine::new(lang, ExploreLimits::default()).enabled(&p);
        assert!(matches!(r, Err(Error::UnguardedRecursion(_))), "{r:?}");
    }

    #[test]
    fn sum_has_one_transition_per_side() {
        let ts = en(ccs_default(), "a.0 + a.0");
        assert_eq!(ts.len(), 2);
        assert_ne!(ts[0].expr, ts[1].expr);
    }
}
