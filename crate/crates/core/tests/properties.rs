mod common;

use std::collections::{BTreeMap, BTreeSet};

use epsos::equivalence::{check_witness, ep_bisim, explore_terms, strong_bisim, SearchLimits, Verdict};
use epsos::label::{Env, Param};
use epsos::sos::{ConcreteRule, VarDomain};
use epsos::stdlib::{abcde_default, ccs_default};
use epsos::successor::expand_indicator_identity;
use epsos::suite::Lang;
use epsos::syntax::{unfold_rec, ExprKind};
use epsos::transition::OpenTransition;
use epsos::{Engine, Expr, ExploreLimits, Tss, Tsss};
use proptest::prelude::*;

fn small() -> ExploreLimits {
    ExploreLimits { max_states: 200, ..Default::default() }
}

fn ccs_term(open: bool) -> impl Strategy<Value = String> {
    let mut leaves = vec!["0", "a.0", "<X | {X = a.X}>", "<X | {X = a.Y + b.0, Y = c.X}>"];
    if open {
        leaves.extend(["x", "y"]);
    }
    prop::sample::select(leaves).prop_map(str::to_string).prop_recursive(3, 10, 2, |inner| {
        prop_oneof![
            (prop::sample::select(vec!["a", "b", "c", "~a", "tau"]), inner.clone()).prop_map(|(l, p)| format!("{l}.({p})")),
            (inner.clone(), inner.clone()).prop_map(|(p, q)| format!("({p} + {q})")),
            (inner.clone(), inner.clone()).prop_map(|(p, q)| format!("({p} | {q})")),
            inner.clone().prop_map(|p| format!("({p})\\{{a}}")),
            inner.prop_map(|p| format!("({p})[swap]")),
        ]
    })
}

fn abcde_term() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["0", "b!.0", "b?.0", "0^s", "<X | {X = c.X}>"]).prop_map(str::to_string).prop_recursive(3, 8, 2, |inner| {
        prop_oneof![
            (prop::sample::select(vec!["c", "b!", "b?", "tau"]), inner.clone()).prop_map(|(l, p)| format!("{l}.({p})")),
            (inner.clone(), inner.clone()).prop_map(|(p, q)| format!("({p} + {q})")),
            (inner.clone(), inner.clone()).prop_map(|(p, q)| format!("({p} | {q})")),
            inner.prop_map(|p| format!("({p})^s")),
        ]
    })
}

fn ccs(src: &str) -> Expr {
    Lang::Ccs.parse(src).unwrap()
}

fn op_counts(p: &Expr, out: &mut BTreeMap<String, usize>) {
    match p.kind() {
        ExprKind::Var(_) => {}
        ExprKind::App(op, args) => {
            *out.entry(format!("{op:?}")).or_default() += 1;
            args.iter().for_each(|a| op_counts(a, out));
        }
        ExprKind::Rec(_, spec) => spec.vars().for_each(|v| op_counts(spec.get(v).unwrap(), out)),
    }
}

fn var_occurrences(p: &Expr, x: &str) -> usize {
    match p.kind() {
        ExprKind::Var(v) => usize::from(v.as_ref() == x),
        ExprKind::App(_, args) => args.iter().map(|a| var_occurrences(a, x)).sum(),
        ExprKind::Rec(_, spec) => spec.vars().map(|v| var_occurrences(spec.get(v).unwrap(), x)).sum(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn empty_substitution_is_identity(src in ccs_term(true)) {
        let p = ccs(&src);
        prop_assert_eq!(p.substitute(&BTreeMap::new()), p);
    }

    #[test]
    fn substitution_bounds_free_variables(src in ccs_term(true), sx in ccs_term(true), sy in ccs_term(false)) {
        let p = ccs(&src);
        let sigma: BTreeMap<_, _> = [("x", ccs(&sx)), ("y", ccs(&sy))].into_iter().map(|(k, v)| (epsos::sym(k), v)).collect();
        let got = p.substitute(&sigma).free_vars();
        let mut bound: BTreeSet<_> = p.free_vars().into_iter().filter(|v| !sigma.contains_key(v)).collect();
        for (x, e) in &sigma {
            if p.free_vars().contains(x) {
                bound.extend(e.free_vars());
            }
        }
        prop_assert!(got.is_subset(&bound), "{:?} not within {:?}", got, bound);
    }

    #[test]
    fn substitution_only_adds_operators_of_replacements(src in ccs_term(true), sx in ccs_term(false)) {
        let (p, e) = (ccs(&src), ccs(&sx));
        let sigma = BTreeMap::from([(epsos::sym("x"), e.clone())]);
        let mut want = BTreeMap::new();
        op_counts(&p, &mut want);
        for _ in 0..var_occurrences(&p, "x") {
            op_counts(&e, &mut want);
        }
        let mut got = BTreeMap::new();
        op_counts(&p.substitute(&sigma), &mut got);
        prop_assert_eq!(got, want);
    }

    #[test]
    fn printing_then_parsing_is_identity(src in ccs_term(true)) {
        let p = ccs(&src);
        prop_assert_eq!(ccs(&p.to_string()), p.clone());
        prop_assert_eq!(ccs(&p.canonical().to_string()), p.canonical());
    }

    #[test]
    fn canonical_form_is_idempotent_and_alpha_equal(src in ccs_term(true)) {
        let p = ccs(&src);
        let c = p.canonical();
        prop_assert_eq!(c.canonical(), c.clone());
        prop_assert!(p.alpha_eq(&c));
    }

    #[test]
    fn closed_specs_unfold_to_closed_terms(src in ccs_term(false)) {
        let p = ccs(&src);
        fn walk(p: &Expr) -> Result<(), TestCaseError> {
            match p.kind() {
                ExprKind::Var(_) => Ok(()),
                ExprKind::App(_, args) => args.iter().try_for_each(walk),
                ExprKind::Rec(x, spec) => {
                    prop_assert!(unfold_rec(x, spec).unwrap().is_closed());
                    Ok(())
                }
            }
        }
        walk(&p)?;
    }

    #[test]
    fn transition_names_round_trip(src in ccs_term(false)) {
        let t = ccs_default();
        let l = explore_terms(&t, &[ccs(&src)], small()).unwrap();
        for tr in &l.transitions {
            let open = OpenTransition::interpret(&t.tss, &tr.expr).unwrap();
            prop_assert_eq!(&open.name_of(&t.tss).unwrap(), &tr.expr);
            let lit = tr.expr.literal(&t.tss).unwrap();
            prop_assert_eq!((&lit.src, &lit.label, &lit.tgt), (&tr.source, &tr.label, &tr.target));
        }
    }

    #[test]
    fn successor_triples_are_coherent(src in ccs_term(false)) {
        let l = explore_terms(&ccs_default(), &[ccs(&src)], small()).unwrap();
        for &(t, u, v) in &l.successors {
            prop_assert_eq!(l.src[t], l.src[u]);
            prop_assert_eq!(Some(l.src[v]), l.tgt[u]);
        }
    }

    #[test]
    fn abcde_indicators_are_idle(src in abcde_term()) {
        let t = abcde_default();
        let l = explore_terms(&t, &[Lang::Abcde.parse(&src).unwrap()], small()).unwrap();
        for &(a, u, v) in &l.successors {
            prop_assert_eq!(l.src[a], l.src[u]);
            prop_assert_eq!(Some(l.src[v]), l.tgt[u]);
            if !t.tss.is_action(&l.transitions[u].label) {
                prop_assert_eq!(a, v);
            }
        }
        for (i, tr) in l.transitions.iter().enumerate() {
            if !t.tss.is_action(&tr.label) {
                prop_assert_eq!(l.tgt[i], Some(l.src[i]));
            }
        }
    }

    #[test]
    fn enabled_sets_match_proof_enumeration(src in ccs_term(false)) {
        let t = ccs_default();
        let engine = Engine::new(t.clone(), small());
        let p = ccs(&src);
        let got: BTreeSet<_> = engine.enabled(&p).unwrap().iter().map(|tr| tr.expr.canonical()).collect();
        prop_assert_eq!(got, common::brute_en(&t.tss, &p, 40));
    }

    #[test]
    fn exploration_output_is_deterministic(src in ccs_term(false), other in ccs_term(false)) {
        let t = ccs_default();
        let a = explore_terms(&t, &[ccs(&src)], small()).unwrap().to_json();
        let warm = Engine::new(t.clone(), small());
        warm.enabled(&ccs(&other)).unwrap();
        let b = epsos::explore(&warm, &[ccs(&src)]).unwrap().to_json();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn ep_is_symmetric_and_certified(p in ccs_term(false), q in ccs_term(false)) {
        let l = explore_terms(&ccs_default(), &[ccs(&p), ccs(&q)], small()).unwrap();
        prop_assume!(l.complete);
        let (a, b) = (l.roots[0], l.roots[1]);
        let ab = ep_bisim(&l, a, b, &SearchLimits::default()).unwrap();
        let ba = ep_bisim(&l, b, a, &SearchLimits::default()).unwrap();
        prop_assert_eq!(ab.result, ba.result);
        if ab.result == Verdict::True {
            prop_assert!(check_witness(&l, &ab.witness).is_ok());
            prop_assert_eq!(strong_bisim(&l, a, b), Verdict::True);
        }
    }
}

fn subsets(items: &[epsos::Label]) -> Vec<BTreeSet<epsos::Label>> {
    (0u32..1 << items.len()).map(|m| (0..items.len()).filter(|i| m >> i & 1 == 1).map(|i| items[i].clone()).collect()).collect()
}

/// Instances of template `idx` by trying every assignment of its variables
/// and keeping those that satisfy every condition.
fn brute_instances(tss: &Tss, idx: usize) -> BTreeSet<String> {
    let t = &tss.templates[idx];
    let shape = tss.shape(idx).unwrap();
    let u = &tss.universe;
    let labels: Vec<epsos::Label> = u.labels().iter().cloned().collect();
    let mut envs: Vec<Env> = vec![Env::new()];
    for (v, d) in &t.vars {
        let mut next = Vec::new();
        for env in &envs {
            let vals: Vec<Param> = match d {
                VarDomain::In(_) => labels.iter().cloned().map(Param::Label).collect(),
                VarDomain::Subset(s) => subsets(&u.eval_set(s, env).unwrap().into_iter().collect::<Vec<_>>()).into_iter().map(Param::Set).collect(),
                VarDomain::Relabelling => u.relabellings.keys().cloned().map(Param::Fn).collect(),
            };
            for val in vals {
                let mut e = env.clone();
                e.insert(v.clone(), val);
                next.push(e);
            }
        }
        envs = next;
    }
    let mut out = BTreeSet::new();
    for env in envs {
        let in_domain = t.vars.iter().all(|(v, d)| match (d, &env[v]) {
            (VarDomain::In(s), Param::Label(l)) => u.eval_set(s, &env).unwrap().contains(l),
            _ => true,
        });
        if !in_domain || !t.conditions.iter().all(|c| u.eval_cond(c, &env) == Some(true)) {
            continue;
        }
        let Some(label) = u.eval_term(&shape.label, &env).filter(|l| u.contains(l)) else { continue };
        let trig: Option<Vec<String>> = shape
            .trigger
            .iter()
            .map(|tr| match tr {
                None => Some("*".to_string()),
                Some((_, lt)) => u.eval_term(lt, &env).filter(|l| u.contains(l)).map(|l| l.to_string()),
            })
            .collect();
        let Some(trig) = trig else { continue };
        let params: Vec<String> = t.name_params.iter().map(|p| format!("{:?}", env[p])).collect();
        out.insert(format!("{}{params:?} ({}) -{label}->", t.ctor, trig.join(",")));
    }
    out
}

fn describe(r: &ConcreteRule) -> String {
    let trig: Vec<String> = r.trigger.iter().map(|t| t.as_ref().map_or("*".into(), |l| l.to_string())).collect();
    let params: Vec<String> = r.name.params.iter().map(|p| format!("{p:?}")).collect();
    format!("{}{params:?} ({}) -{}->", r.name.ctor, trig.join(","), r.label)
}

fn languages() -> Vec<(&'static str, std::sync::Arc<Tsss>)> {
    vec![("ccs", ccs_default()), ("abcde", abcde_default())]
}

#[test]
fn rule_instances_match_brute_force_assignment() {
    for (name, t) in languages() {
        for idx in 0..t.tss.templates.len() {
            let got: BTreeSet<String> = t.tss.instances_of(idx, &Env::new()).iter().map(describe).collect();
            assert_eq!(got, brute_instances(&t.tss, idx), "{name} rule {}", t.tss.templates[idx].ctor);
        }
    }
}

#[test]
fn triggers_are_unique_per_rule_name() {
    for (name, t) in languages() {
        let mut seen = BTreeMap::new();
        for r in t.tss.all_instances() {
            assert!(seen.insert((r.name.clone(), r.trigger.clone()), ()).is_none(), "{name}: {} repeats a trigger", r.name);
        }
    }
}

#[test]
fn indicator_rules_keep_their_operator() {
    for (name, t) in languages() {
        for r in t.tss.all_instances() {
            if t.tss.is_action(&r.label) {
                continue;
            }
            let args: Vec<Expr> = r.xs.iter().zip(&r.ys).map(|(x, y)| Expr::var(y.as_ref().unwrap_or(x))).collect();
            assert_eq!(r.target, Expr::app(r.op.clone(), args), "{name}: {}", r.name);
        }
    }
}

#[test]
fn expanded_identity_rules_pass_the_checker() {
    let t = abcde_default();
    let expanded = expand_indicator_identity(&t.tss, &["0", "pre", "+", "sig", "rec"]).unwrap();
    let report = Tsss::new(t.tss.clone(), expanded).check_successor_format();
    assert!(report.passed(), "{:?}", report.diagnostics);
}
