//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use epsos::dsl::parse_language_unchecked;
use epsos::equivalence::{ep_bisim, explore_terms, strong_bisim, SearchLimits, Verdict};
use epsos::stdlib::{abcde_default, ccs_default, fixture, ABCDE_SOURCE, CCS_SOURCE, FIXTURE_NAMES};
use epsos::successor::expand_indicator_identity;
use epsos::suite::{congruence_suite, root_transition, run_rdp, substitution_pool, Lang, RDP_SPECS};
use epsos::transition::OpenTransition;
use epsos::{Engine, ExploreLimits, Ltss, Tsss};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn explored_fixture(name: &str) -> (Arc<Tsss>, Ltss) {
    let f = fixture(name).unwrap();
    let roots: Vec<_> = f.terms.iter().map(|(_, e)| e.clone()).collect();
    let l = explore_terms(&f.language, &roots, ExploreLimits::default()).unwrap();
    assert!(l.complete, "{name} explored incompletely: {:?}", l.truncation);
    (f.language, l)
}

fn ep(l: &Ltss, p: usize, q: usize) -> Verdict {
    ep_bisim(l, p, q, &SearchLimits::default()).unwrap().result
}

/// `(language, text replaced, replacement, expected failing clauses)`
const MUTANTS: &[(&str, &str, &str, &[&str])] = &[
    ("ccs", "x + y -alpha-> x' for", "x + y -alpha-> x' | x' for", &["DS3", "SF6"]),
    ("ccs", "\"|_L\": x -eta-> x' => x | y -eta-> x' | y", "\"|_L\": x -eta-> x => x | y -eta-> x | y", &["DS2"]),
    ("ccs", "\"+_R\": y", "\"+_L\": y", &["DS6", "SF5"]),
    ("ccs", "\"+_L\": x -alpha-> x'", "\"+_L\": z -alpha-> x'", &["DS1", "SF5"]),
    ("ccs", "\"->{}\"[alpha]:", "\"rec_Act\"[alpha]:", &["DS7"]),
    ("abcde", "=> x^s -~s-> x^s for", "=> x^s -~s-> x for", &["DS5", "SF6"]),
    ("ccs", "~\"|_L\"(v, x2)~> \"|_L\"(t', x2);", "~\"|_L\"(v, x2)~> \"|_L\"(t', t');", &["SF7"]),
    ("ccs", "~\"|_L\"(v, x2)~> \"|_L\"(t', x2);", "~\"|_L\"(v, x2)~> \"|_L\"(t', y2');", &["SF7"]),
    (
        "abcde",
        "    \"11d\": t",
        "    \"bad\": t ~v~> t' => \"+_C\"(t, u) ~\"+_C\"(v, w)~> \"+_C\"(t', u');\n    \"11d\": t",
        &["SF8"],
    ),
    ("ccs", "\"4a\": u ~w~> u' => \"+_R\"(x1, u)", "\"4a\": u ~w~> u' => \"|_L\"(x1, u)", &["SF5"]),
    ("ccs", "\"10\": t ~v~> t', u ~w~> u'", "\"10\": t ~v~> t', t ~w~> u'", &["SF1"]),
    ("ccs", "\"7a\": =>", "\"7a\": t ~v~> t', t ~v~> t' =>", &["SF2"]),
];

fn format_conformance() -> Outcome {
    let start = Instant::now();
    for (name, t) in [("ccs", ccs_default()), ("abcde", abcde_default())] {
        let r = t.check();
        ensure(r.passed(), format!("{name} reports {:?}", r.clauses()))?;
    }
    for (lang, from, to, want) in MUTANTS {
        let src = if *lang == "ccs" { CCS_SOURCE } else { ABCDE_SOURCE };
        ensure(src.contains(from), format!("mutation site {from:?} not found"))?;
        let text = src.replacen(from, to, 1);
        let t = parse_language_unchecked(&text, &Default::default()).map_err(|e| format!("{to:?}: {e}"))?;
        let got = t.check().clauses();
        let want: BTreeSet<String> = want.iter().map(|s| s.to_string()).collect();
        ensure(got == want, format!("{to:?}: expected {want:?}, got {got:?}"))?;
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(1), format!("took {took:?}"))?;
    Ok(format!("2 clean languages, {} mutants rejected with the expected clauses in {took:?}", MUTANTS.len()))
}

fn expansion_count() -> Outcome {
    let t = abcde_default();
    let types = ["0", "pre", "+", "sig", "rec"];
    let out = expand_indicator_identity(&t.tss, &types).map_err(|e| e.to_string())?;
    let mut by_type: BTreeMap<String, usize> = BTreeMap::new();
    for tmpl in &out {
        *by_type.entry(tmpl.expanded_from.as_deref().unwrap_or("?").to_string()).or_default() += 1;
    }
    let split: Vec<usize> = types.iter().map(|ty| by_type.get(*ty).copied().unwrap_or(0)).collect();
    ensure(out.len() == 26 && split == [1, 2, 15, 6, 2], format!("{} templates split {split:?}", out.len()))?;
    Ok("26 templates split 1/2/15/6/2".into())
}

fn loop_versus_recursion() -> Outcome {
    let start = Instant::now();
    let (_, l) = explored_fixture("ex31");
    let (p, q) = (l.roots[0], l.roots[1]);
    ensure(strong_bisim(&l, p, q) == Verdict::True, "P and Q are not strongly bisimilar")?;
    let u = root_transition(&l, q, "|_R", "b").ok_or("Q has no b transition on the right")?;
    let t1 = root_transition(&l, q, "|_L", "a").ok_or("Q has no a transition on the left")?;
    ensure(l.successors.contains(&(u, t1, u)), "u does not survive t1 as itself")?;
    let v = ep_bisim(&l, p, q, &SearchLimits::default()).map_err(|e| e.to_string())?;
    ensure(v.result == Verdict::False, format!("ep verdict {}", v.result))?;
    let clause = v.counterexample.as_ref().map(|c| c.clause.clone());
    ensure(clause.as_deref() == Some("2.b"), format!("counterexample cites {clause:?}"))?;
    let took = start.elapsed();
    ensure(took < Duration::from_secs(5), format!("took {took:?}"))?;
    Ok(format!("strong true, ep false citing 2.b, u ~t1~> u derived, {took:?}"))
}

fn concurrency_shape(name: &str, expected_transitions: Option<usize>) -> Result<String, String> {
    let (_, l) = explored_fixture(name);
    let s = l.roots[0];
    let n = l.enabled(s).len();
    if let Some(want) = expected_transitions {
        ensure(n == want, format!("{name}: {n} transitions, expected {want}"))?;
    }
    let left = root_transition(&l, s, "|_L", "a").ok_or("no leftmost transition")?;
    let right = root_transition(&l, s, "|_R", "a").ok_or("no rightmost transition")?;
    let middle = root_transition(&l, s, "|_L", "c").ok_or("no middle transition")?;
    let under = |t: usize| l.successors_of(t).filter(|(u, _)| *u == middle).count();
    ensure(under(right) > 0, format!("{name}: rightmost does not survive middle"))?;
    ensure(under(left) == 0, format!("{name}: leftmost survives middle"))?;
    Ok(format!("{name}: {n} transitions"))
}

fn concurrency_shapes() -> Outcome {
    let a = concurrency_shape("sec4_pq", Some(3))?;
    let b = concurrency_shape("sec4_pp", None)?;
    Ok(format!("{a}; {b}"))
}

fn expansion_separation() -> Outcome {
    let (_, l) = explored_fixture("expansion_pair");
    let (p, q) = (l.roots[0], l.roots[1]);
    ensure(strong_bisim(&l, p, q) == Verdict::True, "not strongly bisimilar")?;
    let v = ep_bisim(&l, p, q, &SearchLimits::default()).map_err(|e| e.to_string())?;
    ensure(v.result == Verdict::False, format!("ep verdict {}", v.result))?;
    let oracle = common::exhaustive_ep(&l, p, q, 24).ok_or("triple universe too large for the oracle")?;
    ensure(!oracle, "oracle finds an ep-bisimulation")?;
    let clause = v.counterexample.as_ref().map(|c| c.clause.clone());
    ensure(clause.as_deref() == Some("2.a"), format!("counterexample cites {clause:?}"))?;
    Ok("strong true, ep false citing 2.a, oracle agrees".into())
}

fn equivalence_laws() -> Outcome {
    let (mut states, mut pairs, mut triples) = (0, 0, 0);
    for name in FIXTURE_NAMES {
        let (_, l) = explored_fixture(name);
        let n = l.states.len();
        let mut rel = vec![vec![Verdict::Unknown; n]; n];
        for (p, row) in rel.iter_mut().enumerate() {
            for (q, cell) in row.iter_mut().enumerate() {
                *cell = ep(&l, p, q);
                ensure(*cell != Verdict::Unknown, format!("{name}: s{p} vs s{q} unknown"))?;
            }
        }
        for p in 0..n {
            ensure(rel[p][p] == Verdict::True, format!("{name}: s{p} not related to itself"))?;
            for q in 0..n {
                ensure(rel[p][q] == rel[q][p], format!("{name}: asymmetric on s{p}, s{q}"))?;
                pairs += 1;
                for r in 0..n {
                    if rel[p][q] == Verdict::True && rel[q][r] == Verdict::True {
                        ensure(rel[p][r] == Verdict::True, format!("{name}: not transitive on s{p}, s{q}, s{r}"))?;
                        triples += 1;
                    }
                }
            }
        }
        states += n;
    }
    Ok(format!("{states} states, {pairs} pairs, {triples} transitivity premises"))
}

fn congruence() -> Outcome {
    let start = Instant::now();
    let out = congruence_suite(100, 20, 0, ExploreLimits::default());
    let failed: Vec<String> = out.iter().filter(|o| !o.passed()).map(|o| format!("{} {} [{:?} / {:?}]: {:?}", o.lang.name(), o.context, o.rho, o.nu, o.result)).collect();
    ensure(failed.is_empty(), failed.join("; "))?;
    let counts = (out.iter().filter(|o| o.lang == Lang::Ccs).count(), out.iter().filter(|o| o.lang == Lang::Abcde).count());
    ensure(counts == (100, 20), format!("ran {counts:?} probes"))?;
    let took = start.elapsed();
    ensure(took < Duration::from_secs(120), format!("took {took:?}"))?;
    Ok(format!("100 CCS + 20 ABCdE probes hold in {took:?}"))
}

fn recursion_principle() -> Outcome {
    for (lang, x, spec) in RDP_SPECS {
        let v = run_rdp(*lang, x, spec, ExploreLimits::default()).map_err(|e| format!("{spec}: {e}"))?;
        ensure(v == Verdict::True, format!("{} {spec}: {v}", lang.name()))?;
    }
    Ok(format!("{} specs hold", RDP_SPECS.len()))
}

/// Every ABCdE system the tests explore: the fixture, both sides of each
/// pool pair and each recursion spec.
fn abcde_systems() -> Vec<Ltss> {
    let t = abcde_default();
    let mut terms: Vec<String> = substitution_pool(Lang::Abcde).iter().flat_map(|(a, b)| [a.to_string(), b.to_string()]).collect();
    terms.extend(RDP_SPECS.iter().filter(|(l, ..)| *l == Lang::Abcde).map(|(_, x, s)| format!("<{x} | {s}>")));
    let mut out = vec![explored_fixture("abcde_signal").1];
    for src in terms {
        let p = Lang::Abcde.parse(&src).unwrap();
        out.push(explore_terms(&t, &[p], ExploreLimits::default()).unwrap());
    }
    out
}

fn indicator_invariants() -> Outcome {
    let t = abcde_default();
    let (mut loops, mut ids) = (0, 0);
    for l in abcde_systems() {
        for (i, tr) in l.transitions.iter().enumerate() {
            if t.tss.is_action(&tr.label) {
                continue;
            }
            ensure(l.tgt[i] == Some(l.src[i]), format!("{} is not a self-loop", tr.expr))?;
            loops += 1;
            for (a, u, v) in &l.successors {
                if *u == i {
                    ensure(a == v, format!("t{a} under indicator {} becomes t{v}", tr.expr))?;
                    ids += 1;
                }
            }
        }
    }
    ensure(loops > 0, "no indicator transitions explored")?;
    Ok(format!("{loops} self-loops, {ids} identity successors"))
}

fn oracles() -> Outcome {
    let (mut en_states, mut exhaustive, mut fixpoint, mut named) = (0, 0, 0, 0);
    for name in FIXTURE_NAMES {
        let (t, l) = explored_fixture(name);
        let engine = Engine::new(t.clone(), ExploreLimits::default());
        if l.states.len() <= 50 {
            for p in &l.states {
                let got: BTreeSet<_> = engine.enabled(p).map_err(|e| e.to_string())?.iter().map(|tr| tr.expr.canonical()).collect();
                let want = common::brute_en(&t.tss, p, 40);
                ensure(got == want, format!("{name}: en({p}) differs from proof enumeration: {got:?} vs {want:?}"))?;
                en_states += 1;
            }
        }
        for p in 0..l.states.len() {
            for q in 0..l.states.len() {
                let (want, how) = match common::exhaustive_ep(&l, p, q, 24) {
                    Some(b) => (b, &mut exhaustive),
                    None => (common::gfp_ep(&l, p, q), &mut fixpoint),
                };
                ensure(ep(&l, p, q) == Verdict::from_bool(want), format!("{name}: s{p} vs s{q} disagrees with the triple-set oracle"))?;
                *how += 1;
            }
        }
        for tr in &l.transitions {
            let back = OpenTransition::interpret(&t.tss, &tr.expr).and_then(|o| o.name_of(&t.tss)).map_err(|e| e.to_string())?;
            ensure(back == tr.expr, format!("{name}: {} renames to {back}", tr.expr))?;
            named += 1;
        }
    }
    ensure(exhaustive > 0, "no pair is small enough for subset enumeration")?;
    Ok(format!("en agrees on {en_states} states; ep agrees on {exhaustive} pairs by subset enumeration and {fixpoint} by fixpoint; {named} names round-trip"))
}

fn main() {
    let criteria: &[Criterion] = &[
        ("format conformance", format_conformance),
        ("indicator expansion count", expansion_count),
        ("parallel loop versus recursion example", loop_versus_recursion),
        ("concurrency shape", concurrency_shapes),
        ("expansion law separation", expansion_separation),
        ("equivalence laws", equivalence_laws),
        ("congruence suite", congruence),
        ("recursive definition principle", recursion_principle),
        ("indicator invariants", indicator_invariants),
        ("oracles", oracles),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(why) => {
                failures += 1;
                println!("FAIL criterion {}: {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
