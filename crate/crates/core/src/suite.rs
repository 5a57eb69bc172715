//! Seeded probe suites: random contexts for the congruence property and a
//! fixed set of recursive specifications.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::ExploreLimits;
use crate::equivalence::{check_rdp, congruence_probe, ep_bisim, explore_terms, strong_bisim, succ_closure_check, SearchLimits, Verdict};
use crate::ltss::Ltss;
use crate::error::{Error, Result};
use crate::parse::{parse_spec, parse_term};
use crate::stdlib::{abcde_default, ccs_default, fixture, FIXTURE_NAMES};
use crate::successor::Tsss;
use crate::syntax::{Expr, Var};
use crate::sym;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lang {
    Ccs,
    Abcde,
}

impl Lang {
    pub fn tsss(self) -> Arc<Tsss> {
        match self {
            Lang::Ccs => ccs_default(),
            Lang::Abcde => abcde_default(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Lang::Ccs => "ccs",
            Lang::Abcde => "abcde",
        }
    }

    fn prefixes(self) -> &'static [&'static str] {
        match self {
            Lang::Ccs => &["a", "b", "~a", "tau"],
            Lang::Abcde => &["c", "~c", "b!", "b?", "s", "tau"],
        }
    }

    pub fn parse(self, src: &str) -> Result<Expr> {
        let t = self.tsss();
        parse_term(src, &t.tss.signature, &t.tss.universe)
    }
}

/// Pairs of closed terms expected to be ep-bisimilar, used as substitutions.
pub fn substitution_pool(lang: Lang) -> Vec<(&'static str, &'static str)> {
    match lang {
        Lang::Ccs => vec![
            ("a.0 + a.0", "a.0"),
            ("<X | {X = a.X}>", "a.<X | {X = a.X}>"),
            ("(a.0 | b.0) + 0", "a.0 | b.0"),
            ("a.0 | 0", "a.0"),
            ("a.0 | b.0", "b.0 | a.0"),
        ],
        Lang::Abcde => vec![
            ("c.0 + c.0", "c.0"),
            ("b!.0 | 0", "b!.0"),
            ("c.0 | b?.0", "b?.0 | c.0"),
            ("0^s | 0", "0^s"),
            ("<X | {X = c.X}>", "c.<X | {X = c.X}>"),
        ],
    }
}

fn gen_context(lang: Lang, rng: &mut ChaCha8Rng, depth: usize, vars: &[&str]) -> String {
    let leaf = |rng: &mut ChaCha8Rng| -> String {
        match rng.gen_range(0..4) {
            0 | 1 => vars.choose(rng).unwrap().to_string(),
            2 => "0".into(),
            _ => format!("{}.0", lang.prefixes().choose(rng).unwrap()),
        }
    };
    if depth == 0 {
        return leaf(rng);
    }
    let sub = |rng: &mut ChaCha8Rng| gen_context(lang, rng, depth - 1, vars);
    let pick = rng.gen_range(0..8);
    match (lang, pick) {
        (_, 0) => leaf(rng),
        (_, 1) | (_, 2) => format!("{}.({})", lang.prefixes().choose(rng).unwrap(), sub(rng)),
        (_, 3) => format!("({} + {})", sub(rng), sub(rng)),
        (_, 4) => format!("({} | {})", sub(rng), sub(rng)),
        (Lang::Ccs, 5) => format!("({})\\{{a}}", sub(rng)),
        (Lang::Ccs, 6) => format!("({})[swap]", sub(rng)),
        (Lang::Abcde, 5) | (Lang::Abcde, 6) => format!("({})^s", sub(rng)),
        _ => {
            let head = lang.prefixes()[0];
            format!("<Z | {{Z = {head}.Z + {}}}>", sub(rng))
        }
    }
}

/// One random context with at least one free variable among `x`, `y`.
/// ABCdE contexts additionally contain both `^s` and `|`.
pub fn random_context(lang: Lang, rng: &mut ChaCha8Rng, max_depth: usize) -> Expr {
    let vars: &[&str] = if rng.gen_bool(0.5) { &["x"] } else { &["x", "y"] };
    loop {
        let src = gen_context(lang, rng, max_depth, vars);
        if lang == Lang::Abcde && !(src.contains('^') && src.contains('|')) {
            continue;
        }
        let e = lang.parse(&src).expect("generated contexts parse");
        if !e.is_closed() {
            return e;
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProbeOutcome {
    pub lang: Lang,
    pub context: Expr,
    pub rho: BTreeMap<Var, Expr>,
    pub nu: BTreeMap<Var, Expr>,
    pub result: std::result::Result<Verdict, Error>,
}

impl ProbeOutcome {
    pub fn passed(&self) -> bool {
        matches!(self.result, Ok(Verdict::True))
    }
}

/// Builds `trials` CCS probes and `abcde_trials` ABCdE probes from `seed`
/// and runs them in parallel. Output order follows generation order.
pub fn congruence_suite(trials: usize, abcde_trials: usize, seed: u64, limits: ExploreLimits) -> Vec<ProbeOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jobs = Vec::new();
    for (lang, n) in [(Lang::Ccs, trials), (Lang::Abcde, abcde_trials)] {
        let pool = substitution_pool(lang);
        for _ in 0..n {
            let context = random_context(lang, &mut rng, 3);
            let (mut rho, mut nu) = (BTreeMap::new(), BTreeMap::new());
            for x in context.free_vars() {
                let (a, b) = pool.choose(&mut rng).unwrap();
                let (a, b) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
                rho.insert(x.clone(), lang.parse(a).expect("pool terms parse"));
                nu.insert(x, lang.parse(b).expect("pool terms parse"));
            }
            jobs.push((lang, context, rho, nu));
        }
    }
    jobs.into_par_iter()
        .map(|(lang, context, rho, nu)| {
            let result = congruence_probe(&lang.tsss(), &context, &rho, &nu, limits).map(|v| v.result);
            ProbeOutcome { lang, context, rho, nu, result }
        })
        .collect()
}

/// `(language, variable, specification)` triples exercising recursion.
pub const RDP_SPECS: &[(Lang, &str, &str)] = &[
    (Lang::Ccs, "X", "{X = a.X + c.X}"),
    (Lang::Ccs, "X", "{X = a.X + b.Y, Y = a.Y}"),
    (Lang::Ccs, "X", "{X = a.Y + b.0, Y = c.X + tau.Y}"),
    (Lang::Abcde, "X", "{X = c.X}"),
    (Lang::Abcde, "X", "{X = c.X + b!.X}"),
    (Lang::Abcde, "X", "{X = (c.X)^s}"),
];

pub fn run_rdp(lang: Lang, x: &str, spec_src: &str, limits: ExploreLimits) -> Result<Verdict> {
    let t = lang.tsss();
    let spec = parse_spec(spec_src, &t.tss.signature, &t.tss.universe)?;
    if spec.get(x).is_none() {
        return Err(Error::UnknownRecursionVariable(x.to_string()));
    }
    Ok(check_rdp(&t, &Arc::new(spec), x, limits)?.result)
}

/// A variable name usable as a context hole.
pub fn hole(name: &str) -> Var {
    sym(name)
}

/// The outcome of exploring one named fixture and checking its expected shape.
#[derive(Clone, Debug)]
pub struct FixtureReport {
    pub name: &'static str,
    pub states: usize,
    pub transitions: usize,
    pub triples: usize,
    pub complete: bool,
    pub checks: Vec<(String, bool)>,
}

impl FixtureReport {
    pub fn passed(&self) -> bool {
        self.complete && self.checks.iter().all(|(_, ok)| *ok)
    }
}

/// Root transition at state `s` with the given rule head and label.
pub fn root_transition(l: &Ltss, s: usize, head: &str, label: &str) -> Option<usize> {
    l.enabled(s).iter().copied().find(|&t| l.transitions[t].expr.head() == Some(head) && l.transitions[t].label.to_string() == label)
}

fn concurrency_shape(l: &Ltss, checks: &mut Vec<(String, bool)>) {
    let s = l.roots[0];
    let (left, right, middle) = (root_transition(l, s, "|_L", "a"), root_transition(l, s, "|_R", "a"), root_transition(l, s, "|_L", "c"));
    let (Some(left), Some(right), Some(middle)) = (left, right, middle) else {
        checks.push(("leftmost, rightmost and middle transitions exist".into(), false));
        return;
    };
    let survives = |t: usize| l.successors_of(t).any(|(u, _)| u == middle);
    checks.push(("rightmost transition survives the middle one".into(), survives(right)));
    checks.push(("leftmost transition does not survive the middle one".into(), !survives(left)));
}

fn run_fixture(name: &'static str, limits: ExploreLimits) -> Result<FixtureReport> {
    let f = fixture(name)?;
    let roots: Vec<Expr> = f.terms.iter().map(|(_, e)| e.clone()).collect();
    let l = explore_terms(&f.language, &roots, limits)?;
    let mut checks = Vec::new();
    match name {
        "ex31" | "expansion_pair" => {
            let (a, b) = (l.roots[0], l.roots[1]);
            let strong = strong_bisim(&l, a, b);
            let ep = ep_bisim(&l, a, b, &SearchLimits::default())?;
            checks.push(("strongly bisimilar".into(), strong == Verdict::True));
            checks.push(("not ep-bisimilar".into(), ep.result == Verdict::False));
            let want = if name == "ex31" { "2.b" } else { "2.a" };
            let cited = ep.counterexample.as_ref().map(|c| c.clause.as_str());
            checks.push((format!("counterexample cites {want}"), cited == Some(want)));
        }
        "sec4_pq" => {
            checks.push(("three transitions from the root".into(), l.enabled(l.roots[0]).len() == 3));
            concurrency_shape(&l, &mut checks);
        }
        "sec4_pp" => concurrency_shape(&l, &mut checks),
        _ => {
            let problems = succ_closure_check(&f.language, &l);
            checks.push(("indicator transitions are idle self-loops".into(), problems.is_empty()));
        }
    }
    for s in 0..l.states.len() {
        let ok = ep_bisim(&l, s, s, &SearchLimits::default())?.result == Verdict::True;
        if !ok {
            checks.push((format!("s{s} is ep-bisimilar to itself"), false));
        }
    }
    Ok(FixtureReport { name, states: l.states.len(), transitions: l.transitions.len(), triples: l.successors.len(), complete: l.complete, checks })
}

/// Explores every named fixture in parallel and checks its expected shape.
pub fn run_fixtures(limits: ExploreLimits) -> Vec<Result<FixtureReport>> {
    FIXTURE_NAMES.par_iter().map(|n| run_fixture(n, limits)).collect()
}
