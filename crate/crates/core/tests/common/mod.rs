//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};

use epsos::syntax::{unfold_rec, ExprKind};
use epsos::transition::{RecKind, TArg};
use epsos::{Expr, Ltss, TExpr, Tss};

/// Every proof of a transition from `p`, built by trying each rule instance
/// on every combination of premise proofs, up to `depth` nested rules.
pub fn brute_en(tss: &Tss, p: &Expr, depth: usize) -> BTreeSet<TExpr> {
    proofs(tss, p, depth).iter().map(TExpr::canonical).collect()
}

fn proofs(tss: &Tss, p: &Expr, depth: usize) -> BTreeSet<TExpr> {
    let mut out = BTreeSet::new();
    if depth == 0 {
        return out;
    }
    match p.kind() {
        ExprKind::Var(_) => {}
        ExprKind::Rec(x, spec) => {
            let body = unfold_rec(x, spec).expect("bound recursion variable");
            for inner in proofs(tss, &body, depth - 1) {
                let label = inner.literal(tss).expect("valid proof").label;
                let kind = if tss.is_action(&label) { RecKind::Act } else { RecKind::In };
                let e = TExpr::rec(kind, x, spec.clone(), inner);
                if e.literal(tss).is_ok_and(|l| l.src == *p) {
                    out.insert(e);
                }
            }
        }
        ExprKind::App(op, args) => {
            let subs: Vec<BTreeSet<TExpr>> = args.iter().map(|a| proofs(tss, a, depth - 1)).collect();
            for rule in tss.instances_for_op(op).iter() {
                let mut partial: Vec<Vec<TArg>> = vec![vec![]];
                for (i, arg) in args.iter().enumerate() {
                    let choices: Vec<TArg> = match &rule.trigger[i] {
                        None => vec![TArg::Proc(arg.clone())],
                        Some(lab) => subs[i]
                            .iter()
                            .filter(|t| t.literal(tss).is_ok_and(|l| &l.label == lab))
                            .map(|t| TArg::Trans(t.clone()))
                            .collect(),
                    };
                    partial = partial
                        .into_iter()
                        .flat_map(|pre| {
                            choices.iter().map(move |c| {
                                let mut v = pre.clone();
                                v.push(c.clone());
                                v
                            })
                        })
                        .collect();
                }
                for targs in partial {
                    let e = TExpr::ctor(rule.name.clone(), targs);
                    if e.literal(tss).is_ok_and(|l| l.src == *p) {
                        out.insert(e);
                    }
                }
            }
        }
    }
    out
}

type Triple = (usize, usize, Vec<(usize, usize)>);

/// Every triple over the product reachable from `(p, q)` whose relation
/// satisfies condition 1 (total, surjective, label-preserving).
pub fn triple_universe(l: &Ltss, p: usize, q: usize) -> Vec<Triple> {
    let mut seen = BTreeSet::from([(p, q)]);
    let mut queue = VecDeque::from([(p, q)]);
    let mut out = Vec::new();
    while let Some((a, b)) = queue.pop_front() {
        let pairs: Vec<(usize, usize)> = l
            .enabled(a)
            .iter()
            .flat_map(|&t| l.enabled(b).iter().map(move |&u| (t, u)))
            .filter(|&(t, u)| l.transitions[t].label == l.transitions[u].label)
            .collect();
        assert!(pairs.len() <= 16, "too many label-matching pairs for brute force");
        for &(t, u) in &pairs {
            let next = (l.tgt[t].expect("explored"), l.tgt[u].expect("explored"));
            if seen.insert(next) {
                queue.push_back(next);
            }
        }
        for mask in 0u32..(1 << pairs.len()) {
            let r: Vec<(usize, usize)> = (0..pairs.len()).filter(|i| mask >> i & 1 == 1).map(|i| pairs[i]).collect();
            let total = l.enabled(a).iter().all(|t| r.iter().any(|x| x.0 == *t));
            let onto = l.enabled(b).iter().all(|u| r.iter().any(|x| x.1 == *u));
            if total && onto {
                out.push((a, b, r));
            }
        }
    }
    out
}

/// For triple `i` and its `k`-th related pair, the set of triples that can
/// serve as its condition-2 witness.
fn witnesses(l: &Ltss, uni: &[Triple]) -> Vec<Vec<Vec<usize>>> {
    let mut succ: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for &(t, u, v) in &l.successors {
        succ.entry((t, u)).or_default().push(v);
    }
    let get = |t: usize, v: usize| succ.get(&(t, v)).cloned().unwrap_or_default();
    uni.iter()
        .map(|(_, _, r)| {
            r.iter()
                .map(|&(v, w)| {
                    let (pv, qw) = (l.tgt[v].unwrap(), l.tgt[w].unwrap());
                    (0..uni.len())
                        .filter(|&j| {
                            let (a, b, r2) = &uni[j];
                            *a == pv
                                && *b == qw
                                && r.iter().all(|&(t, u)| {
                                    let (ts, us) = (get(t, v), get(u, w));
                                    ts.iter().all(|t2| us.iter().any(|u2| r2.contains(&(*t2, *u2))))
                                        && us.iter().all(|u2| ts.iter().any(|t2| r2.contains(&(*t2, *u2))))
                                })
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Whether some set of triples containing one for `(p, q)` is an
/// ep-bisimulation, found by trying every subset of the triple universe.
/// `None` if the universe is too large to enumerate.
pub fn exhaustive_ep(l: &Ltss, p: usize, q: usize, max_universe: usize) -> Option<bool> {
    let uni = triple_universe(l, p, q);
    if uni.len() > max_universe {
        return None;
    }
    let wit = witnesses(l, &uni);
    let masks: Vec<Vec<u64>> = wit.iter().map(|ks| ks.iter().map(|js| js.iter().fold(0u64, |m, &j| m | 1 << j)).collect()).collect();
    let roots: u64 = uni.iter().enumerate().filter(|(_, t)| t.0 == p && t.1 == q).fold(0, |m, (i, _)| m | 1 << i);
    for set in 1u64..(1u64 << uni.len()) {
        if set & roots == 0 {
            continue;
        }
        let closed = (0..uni.len()).filter(|i| set >> i & 1 == 1).all(|i| masks[i].iter().all(|&m| m & set != 0));
        if closed {
            return Some(true);
        }
    }
    Some(false)
}

/// Greatest fixpoint over the triple universe of `(p, q)`.
pub fn gfp_ep(l: &Ltss, p: usize, q: usize) -> bool {
    let uni = triple_universe(l, p, q);
    let wit = witnesses(l, &uni);
    let mut alive = vec![true; uni.len()];
    loop {
        let mut changed = false;
        for i in 0..uni.len() {
            if alive[i] && !wit[i].iter().all(|js| js.iter().any(|&j| alive[j])) {
                alive[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    uni.iter().zip(&alive).any(|(t, a)| *a && t.0 == p && t.1 == q)
}

/// Naive strong bisimilarity by shrinking the full relation.
pub fn naive_strong(l: &Ltss) -> BTreeSet<(usize, usize)> {
    let n = l.states.len();
    let mut rel: BTreeSet<(usize, usize)> = (0..n).flat_map(|p| (0..n).map(move |q| (p, q))).collect();
    loop {
        let keep = |&(p, q): &(usize, usize)| {
            let fwd = l.enabled(p).iter().all(|&t| {
                l.enabled(q).iter().any(|&u| l.transitions[t].label == l.transitions[u].label && rel.contains(&(l.tgt[t].unwrap(), l.tgt[u].unwrap())))
            });
            let back = l.enabled(q).iter().all(|&u| {
                l.enabled(p).iter().any(|&t| l.transitions[t].label == l.transitions[u].label && rel.contains(&(l.tgt[t].unwrap(), l.tgt[u].unwrap())))
            });
            fwd && back
        };
        let next: BTreeSet<(usize, usize)> = rel.iter().copied().filter(keep).collect();
        if next.len() == rel.len() {
            return rel;
        }
        rel = next;
    }
}
