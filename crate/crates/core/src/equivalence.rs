//! Strong bisimilarity, enabling-preserving bisimilarity, certificate
//! checking, and the harnesses built on them (recursion, congruence and
//! indicator probes).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde_json::{json, Value};

use crate::engine::{Engine, ExploreLimits};
use crate::error::{Error, Result};
use crate::ltss::{explore, Ltss};
use crate::successor::Tsss;
use crate::syntax::{unfold_rec, Expr, RecSpec, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    True,
    False,
    Unknown,
}

impl Verdict {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Verdict::True
        } else {
            Verdict::False
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::True => "true",
            Verdict::False => "false",
            Verdict::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

// ---------- strong bisimilarity ----------

/// Coarsest partition of the states compatible with the transitions,
/// as a block number per state. Unexpanded states only match each other
/// when identical.
type StateSignature = (usize, BTreeSet<(String, Option<usize>)>);

pub fn strong_partition(l: &Ltss) -> Vec<usize> {
    let n = l.states.len();
    let mut block = vec![0usize; n];
    loop {
        let mut sigs: BTreeMap<StateSignature, usize> = BTreeMap::new();
        let mut next = vec![0usize; n];
        for s in 0..n {
            let sig: BTreeSet<(String, Option<usize>)> = l
                .enabled(s)
                .iter()
                .map(|&t| (l.transitions[t].label.to_string(), l.tgt[t].map(|j| block[j])))
                .collect();
            let k = sigs.len();
            next[s] = *sigs.entry((block[s], sig)).or_insert(k);
        }
        let changed = sigs.len() != block.iter().collect::<BTreeSet<_>>().len();
        block = next;
        if !changed {
            return block;
        }
    }
}

pub fn strong_bisim(l: &Ltss, p: usize, q: usize) -> Verdict {
    if !l.complete {
        return Verdict::Unknown;
    }
    let b = strong_partition(l);
    Verdict::from_bool(b[p] == b[q])
}

// ---------- ep-bisimilarity ----------

/// A member `(p, q, R)` of an ep-bisimulation; `relation` holds transition ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EpTriple {
    pub p: usize,
    pub q: usize,
    pub relation: Vec<(usize, usize)>,
}

/// The shallowest obligation that could not be met.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Failure {
    pub depth: usize,
    pub p: usize,
    pub q: usize,
    /// `1.a`, `1.b`, `1.c`, `2.a` or `2.b`.
    pub clause: String,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "condition {} fails at depth {} for states s{} and s{}: {}", self.clause, self.depth, self.p, self.q, self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub triples_visited: usize,
    pub relations_enumerated: usize,
    pub duration_ms: u128,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpVerdict {
    pub result: Verdict,
    pub witness: Vec<EpTriple>,
    pub counterexample: Option<Failure>,
    pub stats: SearchStats,
}

impl EpVerdict {
    pub fn to_json(&self, l: &Ltss) -> Value {
        let mut v = json!({
            "result": self.result.as_str(),
            "stats": {
                "triplesVisited": self.stats.triples_visited,
                "relationsEnumerated": self.stats.relations_enumerated,
                "durationMs": self.stats.duration_ms as u64,
            }
        });
        if self.result == Verdict::True {
            v["witness"] = self
                .witness
                .iter()
                .map(|t| {
                    json!({
                        "p": l.states[t.p].to_string(),
                        "q": l.states[t.q].to_string(),
                        "relation": t.relation.iter().map(|(a, b)| json!([a, b])).collect::<Vec<_>>(),
                    })
                })
                .collect();
        }
        if let Some(c) = &self.counterexample {
            v["counterexample"] = json!([{
                "depth": c.depth,
                "p": l.states[c.p].to_string(),
                "q": l.states[c.q].to_string(),
                "clause": c.clause,
                "message": c.message,
            }]);
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchLimits {
    /// Search nodes spent enumerating relations for one pair of states.
    pub max_relation_nodes: usize,
    pub max_triples: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits { max_relation_nodes: 200_000, max_triples: 1_000_000 }
    }
}

type Pair = (usize, usize);
type Relations = std::result::Result<Arc<Vec<Vec<Pair>>>, (String, String)>;
/// A pair of states together with the extra constraints on its relation.
type Goal = (usize, usize, Vec<(&'static str, Vec<Pair>)>);

/// `succ[(t, u)]` = every `v` with `t ⇝_u v`.
fn successor_map(l: &Ltss) -> HashMap<Pair, Vec<usize>> {
    let mut m: HashMap<Pair, Vec<usize>> = HashMap::new();
    for &(t, u, v) in &l.successors {
        m.entry((t, u)).or_default().push(v);
    }
    m
}

/// At least one of `options` must be in the relation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Clause {
    clause: &'static str,
    options: Vec<Pair>,
    why: String,
}

struct Solver<'a> {
    l: &'a Ltss,
    succ: HashMap<Pair, Vec<usize>>,
    block: Vec<usize>,
}

impl Solver<'_> {
    fn concurrent(&self, t: usize, v: usize) -> bool {
        self.succ.contains_key(&(t, v))
    }

    /// Why `a` and `b` cannot both be in one relation: pairing them creates
    /// a transfer obligation with nothing on one side.
    fn clash(&self, (t, u): Pair, (v, w): Pair) -> Option<(&'static str, String)> {
        for ((t, u), (v, w)) in [((t, u), (v, w)), ((v, w), (t, u))] {
            match (self.concurrent(t, v), self.concurrent(u, w)) {
                (true, false) => return Some(("2.a", format!("t{t} ~t{v}~> t' with t{t} R t{u} and t{v} R t{w}, but t{u} has no successor under t{w}"))),
                (false, true) => return Some(("2.b", format!("t{u} ~t{w}~> u' with t{t} R t{u} and t{v} R t{w}, but t{t} has no successor under t{v}"))),
                _ => {}
            }
        }
        None
    }

    fn allowed(&self, t: usize, u: usize) -> bool {
        let l = self.l;
        l.transitions[t].label == l.transitions[u].label
            && matches!((l.tgt[t], l.tgt[u]), (Some(a), Some(b)) if self.block[a] == self.block[b])
            && self.clash((t, u), (t, u)).is_none()
    }

    /// The ⊆-minimal relations on `en(p) x en(q)` that satisfy condition 1,
    /// every clause in `extra`, and have no clashing pairs. Any relation in
    /// an ep-bisimulation can be shrunk to one of these.
    fn relations(&self, p: usize, q: usize, extra: &[Clause], limits: &SearchLimits) -> Result<Relations> {
        let l = self.l;
        let mut clauses: Vec<Clause> = Vec::new();
        for &t in l.enabled(p) {
            let options: Vec<Pair> = l.enabled(q).iter().filter(|&&u| self.allowed(t, u)).map(|&u| (t, u)).collect();
            clauses.push(Clause { clause: "1.a", options, why: format!("t{t} (label {}) has no counterpart with a bisimilar target", l.transitions[t].label) });
        }
        for &u in l.enabled(q) {
            let options: Vec<Pair> = l.enabled(p).iter().filter(|&&t| self.allowed(t, u)).map(|&t| (t, u)).collect();
            clauses.push(Clause { clause: "1.b", options, why: format!("t{u} (label {}) has no counterpart with a bisimilar target", l.transitions[u].label) });
        }
        for c in extra {
            let options = c.options.iter().copied().filter(|&(t, u)| self.allowed(t, u)).collect();
            clauses.push(Clause { options, ..c.clone() });
        }
        if let Some(c) = clauses.iter().find(|c| c.options.is_empty()) {
            return Ok(Err((c.clause.to_string(), c.why.clone())));
        }
        let mut st = Enum { found: BTreeSet::new(), nodes: 0, dead: None };
        self.extend(&clauses, &mut Vec::new(), &mut st, limits)?;
        if st.found.is_empty() {
            let (_, clause, why) = st.dead.expect("a failed enumeration records a dead end");
            return Ok(Err((clause.to_string(), why)));
        }
        let mut out: Vec<Vec<Pair>> = st.found.into_iter().collect();
        out.sort_by_key(|r| r.len());
        Ok(Ok(Arc::new(out)))
    }

    fn extend(&self, clauses: &[Clause], cur: &mut Vec<Pair>, st: &mut Enum, limits: &SearchLimits) -> Result<()> {
        st.nodes += 1;
        if st.nodes > limits.max_relation_nodes {
            return Err(Error::SearchBudgetExceeded(format!("more than {} relation search nodes", limits.max_relation_nodes)));
        }
        let mut best: Option<(Vec<Pair>, &Clause)> = None;
        for c in clauses {
            if c.options.iter().any(|o| cur.contains(o)) {
                continue;
            }
            let open: Vec<Pair> = c.options.iter().copied().filter(|&o| cur.iter().all(|&x| self.clash(x, o).is_none())).collect();
            if open.is_empty() {
                let o = c.options[0];
                let x = *cur.iter().find(|&&x| self.clash(x, o).is_some()).expect("an option was ruled out by a clash");
                let (clause, why) = self.clash(x, o).expect("clash");
                if st.dead.as_ref().is_none_or(|d| cur.len() < d.0) {
                    st.dead = Some((cur.len(), clause, why));
                }
                return Ok(());
            }
            if best.as_ref().is_none_or(|(b, _)| open.len() < b.len()) {
                best = Some((open, c));
            }
        }
        let Some((open, _)) = best else {
            let minimal = (0..cur.len()).all(|i| {
                let rest: Vec<Pair> = cur.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &x)| x).collect();
                clauses.iter().any(|c| !c.options.iter().any(|o| rest.contains(o)))
            });
            if minimal {
                let mut r = cur.clone();
                r.sort();
                st.found.insert(r);
            }
            return Ok(());
        };
        for o in open {
            cur.push(o);
            let r = self.extend(clauses, cur, st, limits);
            cur.pop();
            r?;
        }
        Ok(())
    }

    /// Transfer obligations that `R'` must meet at the targets of `v R w`.
    fn transfer_clauses(&self, rel: &[Pair], v: usize, w: usize) -> Vec<Clause> {
        const NONE: &[usize] = &[];
        let mut out = Vec::new();
        for &(t, u) in rel {
            let ts = self.succ.get(&(t, v)).map(|x| x.as_slice()).unwrap_or(NONE);
            let us = self.succ.get(&(u, w)).map(|x| x.as_slice()).unwrap_or(NONE);
            for &t2 in ts {
                out.push(Clause {
                    clause: "2.a",
                    options: us.iter().map(|&u2| (t2, u2)).collect(),
                    why: format!("t{t} ~t{v}~> t{t2} with t{t} R t{u}, but no u' with t{u} ~t{w}~> u' can be related to it"),
                });
            }
            for &u2 in us {
                out.push(Clause {
                    clause: "2.b",
                    options: ts.iter().map(|&t2| (t2, u2)).collect(),
                    why: format!("t{u} ~t{w}~> t{u2} with t{t} R t{u}, but no t' with t{t} ~t{v}~> t' can be related to it"),
                });
            }
        }
        out.sort_by(|a, b| (a.clause, &a.options).cmp(&(b.clause, &b.options)));
        out.dedup_by(|a, b| a.clause == b.clause && a.options == b.options);
        out
    }
}

struct Enum {
    found: BTreeSet<Vec<Pair>>,
    nodes: usize,
    dead: Option<(usize, &'static str, String)>,
}

/// Whether `next` meets 2.a and 2.b at the targets of `v R w`.
fn transfer_violation(succ: &HashMap<Pair, Vec<usize>>, rel: &[Pair], v: usize, w: usize, next: &HashSet<Pair>) -> Option<String> {
    const NONE: &[usize] = &[];
    for &(t, u) in rel {
        let ts = succ.get(&(t, v)).map(|x| x.as_slice()).unwrap_or(NONE);
        let us = succ.get(&(u, w)).map(|x| x.as_slice()).unwrap_or(NONE);
        for &t2 in ts {
            if !us.iter().any(|&u2| next.contains(&(t2, u2))) {
                return Some(format!("2.a: t{t} ~t{v}~> t{t2} is unmatched"));
            }
        }
        for &u2 in us {
            if !ts.iter().any(|&t2| next.contains(&(t2, u2))) {
                return Some(format!("2.b: t{u} ~t{w}~> t{u2} is unmatched"));
            }
        }
    }
    None
}

struct Search<'a> {
    solver: Solver<'a>,
    limits: SearchLimits,
    memo: HashMap<Goal, Relations>,
    assumed: HashSet<EpTriple>,
    log: Vec<EpTriple>,
    stats: SearchStats,
    failure: Option<Failure>,
}

impl Search<'_> {
    fn relations(&mut self, p: usize, q: usize, extra: &[Clause]) -> Result<Relations> {
        let key = (p, q, extra.iter().map(|c| (c.clause, c.options.clone())).collect::<Vec<_>>());
        if let Some(r) = self.memo.get(&key) {
            return Ok(r.clone());
        }
        let r = self.solver.relations(p, q, extra, &self.limits)?;
        if let Ok(rs) = &r {
            self.stats.relations_enumerated += rs.len();
        }
        self.memo.insert(key, r.clone());
        Ok(r)
    }

    fn fail(&mut self, depth: usize, p: usize, q: usize, clause: &str, message: String) {
        if self.failure.as_ref().is_none_or(|f| depth < f.depth) {
            self.failure = Some(Failure { depth, p, q, clause: clause.into(), message });
        }
    }

    fn truncate(&mut self, to: usize) {
        for t in self.log.drain(to..) {
            self.assumed.remove(&t);
        }
    }

    fn prove(&mut self, tr: EpTriple, depth: usize) -> Result<bool> {
        if self.assumed.contains(&tr) {
            return Ok(true);
        }
        self.stats.triples_visited += 1;
        if self.stats.triples_visited > self.limits.max_triples {
            return Err(Error::SearchBudgetExceeded(format!("more than {} triples visited", self.limits.max_triples)));
        }
        let mark = self.log.len();
        self.assumed.insert(tr.clone());
        self.log.push(tr.clone());
        for &(v, w) in &tr.relation {
            let (Some(pv), Some(qw)) = (self.solver.l.tgt[v], self.solver.l.tgt[w]) else {
                return Err(Error::IncompleteSystem);
            };
            let extra = self.solver.transfer_clauses(&tr.relation, v, w);
            let cands = match self.relations(pv, qw, &extra)? {
                Ok(c) => c,
                Err((clause, msg)) => {
                    self.fail(depth, tr.p, tr.q, &clause, format!("for t{v} R t{w}: {msg}"));
                    self.truncate(mark);
                    return Ok(false);
                }
            };
            let mut ok = false;
            for r2 in cands.iter() {
                let m2 = self.log.len();
                if self.prove(EpTriple { p: pv, q: qw, relation: r2.clone() }, depth + 1)? {
                    ok = true;
                    break;
                }
                self.truncate(m2);
            }
            if !ok {
                self.truncate(mark);
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn unknown() -> EpVerdict {
    EpVerdict { result: Verdict::Unknown, witness: vec![], counterexample: None, stats: SearchStats::default() }
}

/// Decides `p ↔ep q` by coinductive search with backtracking. A `True`
/// verdict carries an ep-bisimulation containing a triple for `(p, q)`.
pub fn ep_bisim(l: &Ltss, p: usize, q: usize, limits: &SearchLimits) -> Result<EpVerdict> {
    let start = Instant::now();
    if !l.complete {
        return Ok(unknown());
    }
    let mut s = Search {
        solver: Solver { l, succ: successor_map(l), block: strong_partition(l) },
        limits: *limits,
        memo: HashMap::new(),
        assumed: HashSet::new(),
        log: Vec::new(),
        stats: SearchStats::default(),
        failure: None,
    };
    let mut result = Verdict::False;
    match s.relations(p, q, &[])? {
        Err((clause, msg)) => s.fail(0, p, q, &clause, msg),
        Ok(cands) => {
            for r in cands.iter() {
                if s.prove(EpTriple { p, q, relation: r.clone() }, 0)? {
                    result = Verdict::True;
                    break;
                }
                s.truncate(0);
            }
        }
    }
    let mut witness = if result == Verdict::True { s.log.clone() } else { vec![] };
    witness.sort();
    witness.dedup();
    s.stats.duration_ms = start.elapsed().as_millis();
    Ok(EpVerdict {
        result,
        witness,
        counterexample: if result == Verdict::False { s.failure } else { None },
        stats: s.stats,
    })
}

/// Re-validates every clause of an ep-bisimulation, independently of the
/// search. Returns the first problem found.
pub fn check_witness(l: &Ltss, witness: &[EpTriple]) -> std::result::Result<(), String> {
    let set: HashSet<&EpTriple> = witness.iter().collect();
    let succ = successor_map(l);
    for tr in witness {
        let (en_p, en_q) = (l.enabled(tr.p), l.enabled(tr.q));
        for &(t, u) in &tr.relation {
            if !en_p.contains(&t) || !en_q.contains(&u) {
                return Err(format!("({t}, {u}) is not in en(s{}) x en(s{})", tr.p, tr.q));
            }
            if l.transitions[t].label != l.transitions[u].label {
                return Err(format!("1.c: t{t} and t{u} carry different labels"));
            }
        }
        if let Some(t) = en_p.iter().find(|t| !tr.relation.iter().any(|(a, _)| a == *t)) {
            return Err(format!("1.a: t{t} is unrelated in the triple for s{}, s{}", tr.p, tr.q));
        }
        if let Some(u) = en_q.iter().find(|u| !tr.relation.iter().any(|(_, b)| b == *u)) {
            return Err(format!("1.b: t{u} is unrelated in the triple for s{}, s{}", tr.p, tr.q));
        }
        for &(v, w) in &tr.relation {
            let (Some(pv), Some(qw)) = (l.tgt[v], l.tgt[w]) else {
                return Err(format!("targets of t{v}, t{w} were not explored"));
            };
            let found = set.iter().any(|t2| {
                t2.p == pv && t2.q == qw && {
                    let next: HashSet<(usize, usize)> = t2.relation.iter().copied().collect();
                    transfer_violation(&succ, &tr.relation, v, w, &next).is_none()
                }
            });
            if !found {
                return Err(format!("2: no triple for the targets of t{v} R t{w} satisfies 2.a and 2.b"));
            }
        }
    }
    Ok(())
}

// ---------- harnesses ----------

/// Explores `roots` together with a fresh engine.
pub fn explore_terms(tsss: &Arc<Tsss>, roots: &[Expr], limits: ExploreLimits) -> Result<Ltss> {
    explore(&Engine::new(tsss.clone(), limits), roots)
}

/// Strong and ep verdicts for two closed terms explored in one system.
pub fn compare(tsss: &Arc<Tsss>, p: &Expr, q: &Expr, limits: ExploreLimits) -> Result<(Ltss, Verdict, EpVerdict)> {
    let l = explore_terms(tsss, &[p.clone(), q.clone()], limits)?;
    let (ip, iq) = (l.state_id(p), l.state_id(q));
    let (Some(ip), Some(iq)) = (ip, iq) else {
        return Ok((l, Verdict::Unknown, unknown()));
    };
    let strong = strong_bisim(&l, ip, iq);
    let ep = ep_bisim(&l, ip, iq, &SearchLimits::default())?;
    Ok((l, strong, ep))
}

/// Checks `<X|S> ↔ep <S_X|S>`.
pub fn check_rdp(tsss: &Arc<Tsss>, spec: &Arc<RecSpec>, x: &str, limits: ExploreLimits) -> Result<EpVerdict> {
    let bound: BTreeSet<Var> = spec.vars().cloned().collect();
    for (y, body) in &spec.0 {
        if let Some(z) = body.free_vars().iter().find(|z| !bound.contains(*z)) {
            return Err(Error::PremiseViolated(format!("the equation for {y} mentions {z}, which no equation defines")));
        }
    }
    let call = Expr::rec(x, spec.clone());
    let body = unfold_rec(x, spec)?;
    Ok(compare(tsss, &call, &body, limits)?.2)
}

/// Soundness probe for the congruence property: requires `rho(x) ↔ep nu(x)`
/// for every free `x` of `context`, then compares the two instances.
pub fn congruence_probe(
    tsss: &Arc<Tsss>,
    context: &Expr,
    rho: &BTreeMap<Var, Expr>,
    nu: &BTreeMap<Var, Expr>,
    limits: ExploreLimits,
) -> Result<EpVerdict> {
    for x in context.free_vars() {
        let (Some(a), Some(b)) = (rho.get(&x), nu.get(&x)) else {
            return Err(Error::PremiseViolated(format!("{x} is not substituted on both sides")));
        };
        let pre = compare(tsss, a, b, limits)?.2;
        match pre.result {
            Verdict::True => {}
            Verdict::False => return Err(Error::PremiseViolated(format!("{a} and {b} are not ep-bisimilar"))),
            Verdict::Unknown => return Err(Error::IncompleteSystem),
        }
    }
    Ok(compare(tsss, &context.substitute(rho), &context.substitute(nu), limits)?.2)
}

/// Indicator sanity over an explored system: transitions with labels outside
/// `Act` are self-loops, and successors under them are the identity.
pub fn succ_closure_check(tsss: &Tsss, l: &Ltss) -> Vec<String> {
    let mut problems = Vec::new();
    let succ = successor_map(l);
    for (i, t) in l.transitions.iter().enumerate() {
        if !tsss.tss.is_action(&t.label) && l.tgt[i] != Some(l.src[i]) {
            problems.push(format!("indicator t{i} ({}) is not a self-loop", t.label));
        }
    }
    for s in 0..l.states.len() {
        for &u in l.enabled(s) {
            if tsss.tss.is_action(&l.transitions[u].label) {
                continue;
            }
            for &t in l.enabled(s) {
                let vs = succ.get(&(t, u)).cloned().unwrap_or_default();
                if vs != [t] {
                    problems.push(format!("at s{s}: successors of t{t} under indicator t{u} are {vs:?}, expected [{t}]"));
                }
            }
        }
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_term;
    use crate::stdlib::{ccs_default, fixture};
    use proptest::prelude::*;

    fn term(src: &str) -> Expr {
        let lang = ccs_default();
        parse_term(src, &lang.tss.signature, &lang.tss.universe).unwrap()
    }

    /// Greatest fixpoint over every triple that satisfies condition 1,
    /// removing triples whose transfer obligations cannot be met.
    fn gfp_oracle(l: &Ltss) -> HashSet<(usize, usize)> {
        let n = l.states.len();
        let mut triples: Vec<(usize, usize, Vec<Pair>)> = Vec::new();
        for p in 0..n {
            for q in 0..n {
                let pairs: Vec<(usize, usize)> = l
                    .enabled(p)
                    .iter()
                    .flat_map(|&t| l.enabled(q).iter().map(move |&u| (t, u)))
                    .filter(|&(t, u)| l.transitions[t].label == l.transitions[u].label)
                    .collect();
                for mask in 0u64..(1u64 << pairs.len()) {
                    let r: Vec<(usize, usize)> = (0..pairs.len()).filter(|i| mask >> i & 1 == 1).map(|i| pairs[i]).collect();
                    let total = l.enabled(p).iter().all(|t| r.iter().any(|x| x.0 == *t));
                    let onto = l.enabled(q).iter().all(|u| r.iter().any(|x| x.1 == *u));
                    if total && onto {
                        triples.push((p, q, r));
                    }
                }
            }
        }
        let succ = |t: usize, v: usize| -> Vec<usize> { l.successors.iter().filter(|x| x.0 == t && x.1 == v).map(|x| x.2).collect() };
        let mut alive = vec![true; triples.len()];
        loop {
            let mut changed = false;
            for i in 0..triples.len() {
                if !alive[i] {
                    continue;
                }
                let (_, _, r) = &triples[i];
                let ok = r.iter().all(|&(v, w)| {
                    let (pv, qw) = (l.tgt[v].unwrap(), l.tgt[w].unwrap());
                    (0..triples.len()).any(|j| {
                        alive[j] && triples[j].0 == pv && triples[j].1 == qw && {
                            let r2 = &triples[j].2;
                            r.iter().all(|&(t, u)| {
                                let (ts, us) = (succ(t, v), succ(u, w));
                                ts.iter().all(|t2| us.iter().any(|u2| r2.contains(&(*t2, *u2))))
                                    && us.iter().all(|u2| ts.iter().any(|t2| r2.contains(&(*t2, *u2))))
                            })
                        }
                    })
                });
                if !ok {
                    alive[i] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        triples.iter().zip(alive).filter(|(_, a)| *a).map(|(t, _)| (t.0, t.1)).collect()
    }

    /// Naive strong bisimilarity: shrink the full relation until stable.
    fn strong_oracle(l: &Ltss) -> HashSet<(usize, usize)> {
        let n = l.states.len();
        let mut rel: HashSet<(usize, usize)> = (0..n).flat_map(|p| (0..n).map(move |q| (p, q))).collect();
        loop {
            let next: HashSet<(usize, usize)> = rel
                .iter()
                .copied()
                .filter(|&(p, q)| {
                    let sim = |a: usize, b: usize, flip: bool| {
                        l.enabled(a).iter().all(|&t| {
                            l.enabled(b).iter().any(|&u| {
                                let pair = if flip { (l.tgt[u].unwrap(), l.tgt[t].unwrap()) } else { (l.tgt[t].unwrap(), l.tgt[u].unwrap()) };
                                l.transitions[t].label == l.transitions[u].label && rel.contains(&pair)
                            })
                        })
                    };
                    sim(p, q, false) && sim(q, p, true)
                })
                .collect();
            if next.len() == rel.len() {
                return rel;
            }
            rel = next;
        }
    }

    fn small_ltss(srcs: &[&str]) -> Ltss {
        let roots: Vec<Expr> = srcs.iter().map(|s| term(s)).collect();
        explore_terms(&ccs_default(), &roots, ExploreLimits::default()).unwrap()
    }

    #[test]
    fn ex31_separates_strong_from_ep() {
        let f = fixture("ex31").unwrap();
        let (l, strong, ep) = compare(&f.language, f.term("P").unwrap(), f.term("Q").unwrap(), ExploreLimits::default()).unwrap();
        assert_eq!(strong, Verdict::True);
        assert_eq!(ep.result, Verdict::False);
        let c = ep.counterexample.unwrap();
        assert_eq!(c.clause, "2.b", "{c}");
        assert_eq!(c.depth, 0);
        let oracle = gfp_oracle(&l);
        assert!(!oracle.contains(&(l.roots[0], l.roots[1])));
    }

    #[test]
    fn witness_is_accepted_and_tampering_is_caught() {
        let l = small_ltss(&["a.0 | b.0", "b.0 | a.0"]);
        let v = ep_bisim(&l, l.roots[0], l.roots[1], &SearchLimits::default()).unwrap();
        assert_eq!(v.result, Verdict::True);
        check_witness(&l, &v.witness).unwrap();
        let mut broken = v.witness.clone();
        broken[0].relation.pop();
        assert!(check_witness(&l, &broken).is_err());
        let json = v.to_json(&l);
        assert_eq!(json["result"], "true");
        assert!(!json["witness"].as_array().unwrap().is_empty());
    }

    #[test]
    fn label_mismatch_cites_condition_one() {
        let l = small_ltss(&["a.0", "b.0"]);
        let v = ep_bisim(&l, l.roots[0], l.roots[1], &SearchLimits::default()).unwrap();
        assert_eq!(v.result, Verdict::False);
        assert!(v.counterexample.unwrap().clause.starts_with('1'));
        assert_eq!(strong_bisim(&l, l.roots[0], l.roots[1]), Verdict::False);
    }

    #[test]
    fn truncated_systems_give_unknown() {
        let roots = [term("a.b.0"), term("a.b.0 + a.b.0")];
        let l = explore_terms(&ccs_default(), &roots, ExploreLimits { max_states: 2, ..Default::default() }).unwrap();
        assert!(!l.complete);
        assert_eq!(strong_bisim(&l, 0, 0), Verdict::Unknown);
        assert_eq!(ep_bisim(&l, 0, 0, &SearchLimits::default()).unwrap().result, Verdict::Unknown);
    }

    #[test]
    fn relation_budget_is_reported() {
        let l = small_ltss(&["a.0 + a.0 + a.0 + a.0 + a.0"]);
        let tight = SearchLimits { max_relation_nodes: 4, ..Default::default() };
        assert!(matches!(ep_bisim(&l, 0, 0, &tight), Err(Error::SearchBudgetExceeded(_))));
    }

    #[test]
    fn rdp_holds_for_a_looping_spec() {
        let lang = ccs_default();
        let e = term("<X | {X = a.X + c.X}>");
        let crate::syntax::ExprKind::Rec(x, spec) = e.kind() else { panic!() };
        let v = check_rdp(&lang, spec, x, ExploreLimits::default()).unwrap();
        assert_eq!(v.result, Verdict::True);
    }

    #[test]
    fn congruence_probe_checks_its_premise() {
        let lang = ccs_default();
        let ctx = term("x | c.0");
        let x: Var = crate::sym("x");
        let rho = BTreeMap::from([(x.clone(), term("a.0 | b.0"))]);
        let nu = BTreeMap::from([(x.clone(), term("a.b.0 + b.a.0"))]);
        assert!(matches!(congruence_probe(&lang, &ctx, &rho, &nu, ExploreLimits::default()), Err(Error::PremiseViolated(_))));
        let nu = BTreeMap::from([(x, term("b.0 | a.0"))]);
        assert_eq!(congruence_probe(&lang, &ctx, &rho, &nu, ExploreLimits::default()).unwrap().result, Verdict::True);
    }

    fn ccs_term() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            Just("0".to_string()),
            Just("<X | {X = a.X}>".to_string()),
            Just("<X | {X = a.X + b.X}>".to_string()),
            Just("<X | {X = b.Y, Y = a.X}>".to_string()),
        ];
        leaf.prop_recursive(3, 8, 2, |inner| {
            prop_oneof![
                (prop::sample::select(vec!["a", "b", "tau"]), inner.clone()).prop_map(|(l, p)| format!("{l}.({p})")),
                (inner.clone(), inner.clone()).prop_map(|(p, q)| format!("({p} + {q})")),
                (inner.clone(), inner).prop_map(|(p, q)| format!("({p} | {q})")),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ep_search_agrees_with_gfp_oracle(p in ccs_term(), q in ccs_term()) {
            let l = small_ltss(&[&p, &q]);
            let small = l.states.len() <= 6 && (0..l.states.len()).all(|s| l.enabled(s).len() <= 3);
            if small {
                let oracle = gfp_oracle(&l);
                for a in 0..l.states.len() {
                    for b in 0..l.states.len() {
                        let v = ep_bisim(&l, a, b, &SearchLimits::default()).unwrap();
                        prop_assert_eq!(v.result == Verdict::True, oracle.contains(&(a, b)), "s{} s{} in {:?}", a, b, l.states);
                        if v.result == Verdict::True {
                            prop_assert!(check_witness(&l, &v.witness).is_ok());
                        } else {
                            prop_assert!(v.counterexample.is_some());
                        }
                    }
                }
            }
        }

        #[test]
        fn strong_partition_agrees_with_naive_fixpoint(p in ccs_term(), q in ccs_term()) {
            let l = small_ltss(&[&p, &q]);
            let oracle = strong_oracle(&l);
            for a in 0..l.states.len() {
                for b in 0..l.states.len() {
                    prop_assert_eq!(strong_bisim(&l, a, b) == Verdict::True, oracle.contains(&(a, b)));
                }
            }
        }

        #[test]
        fn ep_implies_strong(p in ccs_term(), q in ccs_term()) {
            let l = small_ltss(&[&p, &q]);
            if l.states.len() <= 12 {
                let (a, b) = (l.roots[0], l.roots[l.roots.len() - 1]);
                if ep_bisim(&l, a, b, &SearchLimits::default()).unwrap().result == Verdict::True {
                    prop_assert_eq!(strong_bisim(&l, a, b), Verdict::True);
                }
            }
        }
    }
}
