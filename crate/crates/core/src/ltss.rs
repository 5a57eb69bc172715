//! Bounded breadth-first exploration into a labelled transition system with
//! successors, plus JSON and DOT output.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::engine::{Engine, Transition};
use crate::error::Result;
use crate::syntax::Expr;

#[derive(Clone, Debug, Default)]
pub struct Ltss {
    /// Canonical states in BFS order from the first root.
    pub states: Vec<Expr>,
    pub roots: Vec<usize>,
    pub transitions: Vec<Transition>,
    pub src: Vec<usize>,
    /// Target state id; `None` when the target was never reached.
    pub tgt: Vec<Option<usize>>,
    /// Outgoing transition ids per state, in `en` order; `None` if unexpanded.
    pub out: Vec<Option<Vec<usize>>>,
    /// `(t, u, v)` transition ids with `t ⇝_u v`.
    pub successors: Vec<(usize, usize, usize)>,
    pub complete: bool,
    pub truncation: Vec<String>,
}

impl Ltss {
    pub fn state_id(&self, p: &Expr) -> Option<usize> {
        let c = p.canonical();
        self.states.iter().position(|s| *s == c)
    }

    pub fn enabled(&self, s: usize) -> &[usize] {
        self.out[s].as_deref().unwrap_or(&[])
    }

    /// Successor triples `(u, v)` for a fixed `t`.
    pub fn successors_of(&self, t: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.successors.iter().filter(move |(a, _, _)| *a == t).map(|(_, u, v)| (*u, *v))
    }

    pub fn to_json(&self) -> Value {
        let states: Vec<Value> = self.states.iter().enumerate().map(|(i, s)| json!({"id": i, "term": s.to_string()})).collect();
        let transitions: Vec<Value> = self
            .transitions
            .iter()
            .enumerate()
            .map(|(i, t)| {
                json!({
                    "id": i,
                    "src": self.src[i],
                    "label": t.label.to_string(),
                    "tgt": self.tgt[i],
                    "expr": t.expr.to_string(),
                })
            })
            .collect();
        let succ: Vec<Value> = self.successors.iter().map(|(t, u, v)| json!([t, u, v])).collect();
        json!({"states": states, "transitions": transitions, "successors": succ, "complete": self.complete})
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph ltss {\n  node [shape=ellipse];\n");
        for (i, p) in self.states.iter().enumerate() {
            let shape = if self.roots.contains(&i) { ", peripheries=2" } else { "" };
            let _ = writeln!(s, "  s{i} [label={}{shape}];", dot_str(&p.to_string()));
        }
        for (i, t) in self.transitions.iter().enumerate() {
            if let Some(j) = self.tgt[i] {
                let _ = writeln!(s, "  s{} -> s{j} [label={}];", self.src[i], dot_str(&format!("t{i}: {}", t.label)));
            }
        }
        if !self.successors.is_empty() {
            let mut rows = String::new();
            for (t, u, v) in &self.successors {
                let _ = write!(rows, "t{t} ~t{u}~> t{v}\\l");
            }
            let _ = writeln!(s, "  successors [shape=note, label=\"{rows}\"];");
        }
        s.push_str("}\n");
        s
    }
}

fn dot_str(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Explores from `roots` within the engine's limits. Engine errors at a
/// state mark the system incomplete instead of failing.
pub fn explore(engine: &Engine, roots: &[Expr]) -> Result<Ltss> {
    let limits = engine.limits;
    limits.validate()?;
    let mut l = Ltss { complete: true, ..Default::default() };
    let mut index: HashMap<Expr, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    let mut add = |l: &mut Ltss, p: Expr, queue: &mut VecDeque<usize>| -> Option<usize> {
        if let Some(&i) = index.get(&p) {
            return Some(i);
        }
        if l.states.len() >= limits.max_states {
            return None;
        }
        if p.depth() > limits.max_derivation_depth {
            l.truncation.push(format!("a state nests deeper than {}", limits.max_derivation_depth));
            return None;
        }
        let i = l.states.len();
        l.states.push(p.clone());
        l.out.push(None);
        index.insert(p, i);
        queue.push_back(i);
        Some(i)
    };
    for r in roots {
        if !r.is_closed() {
            return Err(crate::error::Error::PremiseViolated(format!("{r} is not closed")));
        }
        match add(&mut l, r.canonical(), &mut queue) {
            Some(i) => l.roots.push(i),
            None => {
                l.complete = false;
                l.truncation.push(format!("root {r} exceeds the state budget"));
            }
        }
    }
    let mut by_expr: HashMap<usize, BTreeMap<crate::transition::TExpr, usize>> = HashMap::new();
    while let Some(s) = queue.pop_front() {
        let p = l.states[s].clone();
        let en = match engine.enabled(&p) {
            Ok(en) => en,
            Err(e) => {
                l.complete = false;
                l.truncation.push(format!("state {s}: {e}"));
                continue;
            }
        };
        let mut ids = Vec::with_capacity(en.len());
        for t in en.iter() {
            let id = l.transitions.len();
            let tgt = add(&mut l, t.target.clone(), &mut queue);
            if tgt.is_none() && l.complete {
                l.complete = false;
                if l.states.len() >= limits.max_states {
                    l.truncation.push(format!("state budget {} reached", limits.max_states));
                }
            }
            l.transitions.push(t.clone());
            l.src.push(s);
            l.tgt.push(tgt);
            by_expr.entry(s).or_default().insert(t.expr.clone(), id);
            ids.push(id);
        }
        l.out[s] = Some(ids);
    }
    for s in 0..l.states.len() {
        let Some(ids) = l.out[s].clone() else { continue };
        for &t in &ids {
            for &u in &ids {
                let vs = match engine.successors_of(&l.transitions[t], &l.transitions[u]) {
                    Ok(vs) => vs,
                    Err(e) => {
                        l.complete = false;
                        l.truncation.push(format!("successors of t{t} under t{u}: {e}"));
                        continue;
                    }
                };
                let Some(target) = l.tgt[u] else { continue };
                for v in vs {
                    match by_expr.get(&target).and_then(|m| m.get(&v.expr)) {
                        Some(&vid) => l.successors.push((t, u, vid)),
                        None if l.out[target].is_none() => {}
                        None => {
                            l.complete = false;
                            l.truncation.push(format!("successor {} of t{t} under t{u} is not enabled at its source", v.expr));
                        }
                    }
                }
            }
        }
    }
    l.successors.sort();
    l.successors.dedup();
    l.truncation.sort();
    l.truncation.dedup();
    Ok(l)
}
