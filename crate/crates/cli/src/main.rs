//! `epsos`: command-line front end for format checking, LTSS exploration and
//! bisimilarity checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use epsos::dsl::{parse_override, SortOverrides};
use epsos::equivalence::{check_rdp, ep_bisim, strong_bisim, SearchLimits, Verdict};
use epsos::parse::{parse_spec, parse_term};
use epsos::stdlib::{fixture, language, Fixture};
use epsos::suite::{congruence_suite, run_fixtures};
use epsos::{explore, Engine, Error, Expr, ExploreLimits, Ltss, Tsss};

const PASS: u8 = 0;
const FAIL: u8 = 1;
const UNKNOWN: u8 = 2;
const USAGE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "epsos", version, about = "SOS workbench: rule formats, transition systems with successors, ep-bisimilarity")]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Opts {
    /// `ccs`, `abcde`, or a path to a language definition file.
    #[arg(long, global = true, default_value = "ccs")]
    language: String,
    /// Sort override such as `C=a,b`; repeatable.
    #[arg(long = "param", global = true)]
    params: Vec<String>,
    /// Named example whose language and terms to use.
    #[arg(long, global = true)]
    fixture: Option<String>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Print terms and labels with Unicode symbols.
    #[arg(long, global = true)]
    unicode: bool,
    /// State budget; defaults to EPSOS_MAX_STATES or 10000.
    #[arg(long, global = true)]
    max_states: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Dot,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load a language and report rule-format diagnostics.
    CheckFormat,
    /// Explore the transition system of a closed term, or of every term of
    /// the fixture when none is given.
    Lts { term: Option<String> },
    /// List the successor triples of each explored state.
    Succ { term: Option<String> },
    /// Compare two terms for strong or ep-bisimilarity.
    Bisim {
        #[arg(long, conflicts_with = "ep")]
        strong: bool,
        #[arg(long)]
        ep: bool,
        left: String,
        right: String,
    },
    /// Check that a recursion variable is ep-bisimilar to its unfolding.
    Rdp { var: String, spec: String },
    /// Run seeded random congruence probes.
    CongruenceSuite {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 20)]
        abcde_trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Explore every named example and check its expected shape.
    Fixtures {
        #[arg(long)]
        run_all: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { PASS };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok((code, out)) => {
            print!("{out}");
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::IncompleteSystem
        | Error::SearchBudgetExceeded(_)
        | Error::BudgetExceeded(_)
        | Error::DepthExceeded(_)
        | Error::UnguardedRecursion(_) => UNKNOWN,
        Error::Format(_) => FAIL,
        _ => USAGE,
    }
}

fn limits(opts: &Opts) -> Result<ExploreLimits, Error> {
    let max_states = match opts.max_states {
        Some(n) => n,
        None => match std::env::var("EPSOS_MAX_STATES") {
            Ok(v) => v.trim().parse().map_err(|_| Error::InvalidParams(format!("EPSOS_MAX_STATES={v} is not a number")))?,
            Err(_) => epsos::engine::DEFAULT_MAX_STATES,
        },
    };
    let l = ExploreLimits { max_states, ..Default::default() };
    l.validate()?;
    Ok(l)
}

struct Session {
    lang: Arc<Tsss>,
    fixture: Option<Fixture>,
    limits: ExploreLimits,
    format: Format,
    unicode: bool,
}

impl Session {
    fn new(opts: &Opts) -> Result<Self, Error> {
        let mut overrides = SortOverrides::new();
        for p in &opts.params {
            let (k, v) = parse_override(p)?;
            overrides.insert(k, v);
        }
        let fixture = opts.fixture.as_deref().map(fixture).transpose()?;
        let lang = match &fixture {
            Some(f) if opts.params.is_empty() => f.language.clone(),
            _ => match opts.language.as_str() {
                "ccs" | "abcde" => language(&opts.language, &overrides)?,
                path => {
                    let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidParams(format!("cannot read {path}: {e}")))?;
                    language(&text, &overrides)?
                }
            },
        };
        Ok(Session { lang, fixture, limits: limits(opts)?, format: opts.format, unicode: opts.unicode })
    }

    /// A fixture term name, or a term in the language's syntax.
    fn term(&self, src: &str) -> Result<Expr, Error> {
        if let Some(e) = self.fixture.as_ref().and_then(|f| f.term(src)) {
            return Ok(e.clone());
        }
        let e = parse_term(src, &self.lang.tss.signature, &self.lang.tss.universe)?;
        if !e.is_closed() {
            return Err(Error::PremiseViolated(format!("{src} has free variables {:?}", e.free_vars())));
        }
        Ok(e)
    }

    fn roots(&self, term: Option<&str>) -> Result<Vec<Expr>, Error> {
        match (term, &self.fixture) {
            (Some(src), _) => Ok(vec![self.term(src)?]),
            (None, Some(f)) => Ok(f.terms.iter().map(|(_, e)| e.clone()).collect()),
            (None, None) => Err(Error::InvalidParams("give a term or --fixture".into())),
        }
    }

    fn explore(&self, roots: &[Expr]) -> Result<Ltss, Error> {
        explore(&Engine::new(self.lang.clone(), self.limits), roots)
    }

    fn show(&self, e: &Expr) -> String {
        if self.unicode {
            e.display_unicode()
        } else {
            e.to_string()
        }
    }

    fn label(&self, l: &Ltss, t: usize) -> String {
        let lab = &l.transitions[t].label;
        if self.unicode {
            lab.unicode()
        } else {
            lab.to_string()
        }
    }

    fn expr(&self, l: &Ltss, t: usize) -> String {
        let e = &l.transitions[t].expr;
        if self.unicode {
            e.display_unicode()
        } else {
            e.to_string()
        }
    }
}

fn completeness_code(l: &Ltss) -> u8 {
    if l.complete {
        PASS
    } else {
        UNKNOWN
    }
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::True => PASS,
        Verdict::False => FAIL,
        Verdict::Unknown => UNKNOWN,
    }
}

fn json_out(v: &Value) -> String {
    format!("{}\n", serde_json::to_string_pretty(v).expect("JSON values serialize"))
}

fn run(cli: &Cli) -> Result<(u8, String), Error> {
    let s = match Session::new(&cli.opts) {
        Err(Error::Format(report)) if matches!(cli.command, Command::CheckFormat) => {
            let out = match cli.opts.format {
                Format::Json => json_out(&report_json(&report)),
                _ => format!("{report}\n"),
            };
            return Ok((FAIL, out));
        }
        r => r?,
    };
    match &cli.command {
        Command::CheckFormat => check_format(&s),
        Command::Lts { term } => lts(&s, term.as_deref()),
        Command::Succ { term } => succ(&s, term.as_deref()),
        Command::Bisim { strong, ep, left, right } => {
            if !strong && !ep {
                return Err(Error::InvalidParams("pass --strong or --ep".into()));
            }
            bisim(&s, *strong, left, right)
        }
        Command::Rdp { var, spec } => rdp(&s, var, spec),
        Command::CongruenceSuite { trials, abcde_trials, seed } => suite(&s, *trials, *abcde_trials, *seed),
        Command::Fixtures { run_all } => {
            if !run_all {
                let mut out = String::new();
                for n in epsos::stdlib::FIXTURE_NAMES {
                    let f = fixture(n)?;
                    let terms: Vec<String> = f.terms.iter().map(|(k, e)| format!("{k} = {}", s.show(e))).collect();
                    let _ = writeln!(out, "{n}: {}", terms.join("; "));
                }
                return Ok((PASS, out));
            }
            fixtures(&s)
        }
    }
}

fn check_format(s: &Session) -> Result<(u8, String), Error> {
    let report = s.lang.check();
    let code = if report.passed() { PASS } else { FAIL };
    let out = match s.format {
        Format::Json => {
            let mut v = report_json(&report);
            v["rules"] = json!(s.lang.tss.templates.len());
            v["successorRules"] = json!(s.lang.templates.len());
            json_out(&v)
        }
        _ => format!("{} rules, {} successor rules: {report}\n", s.lang.tss.templates.len(), s.lang.templates.len()),
    };
    Ok((code, out))
}

fn report_json(report: &epsos::FormatReport) -> Value {
    json!({
        "result": if report.passed() { "pass" } else { "fail" },
        "diagnostics": report.diagnostics.iter().map(|d| json!({
            "clause": d.clause,
            "locator": d.locator,
            "span": d.span.map(|sp| sp.to_string()),
            "message": d.message,
        })).collect::<Vec<_>>(),
    })
}

fn lts(s: &Session, term: Option<&str>) -> Result<(u8, String), Error> {
    let l = s.explore(&s.roots(term)?)?;
    let out = match s.format {
        Format::Json => json_out(&l.to_json()),
        Format::Dot => l.to_dot(),
        Format::Text => {
            let mut out = String::new();
            for (i, p) in l.states.iter().enumerate() {
                let _ = writeln!(out, "s{i}: {}", s.show(p));
            }
            for t in 0..l.transitions.len() {
                let tgt = l.tgt[t].map_or("?".to_string(), |j| format!("s{j}"));
                let _ = writeln!(out, "t{t}: s{} -{}-> {tgt}  {}", l.src[t], s.label(&l, t), s.expr(&l, t));
            }
            truncation_note(&l, &mut out);
            out
        }
    };
    Ok((completeness_code(&l), out))
}

fn truncation_note(l: &Ltss, out: &mut String) {
    if !l.complete {
        let _ = writeln!(out, "incomplete: {}", l.truncation.join("; "));
    }
}

fn succ(s: &Session, term: Option<&str>) -> Result<(u8, String), Error> {
    let l = s.explore(&s.roots(term)?)?;
    let out = match s.format {
        Format::Json => json_out(&json!({
            "states": l.states.iter().enumerate().map(|(i, p)| json!({
                "id": i,
                "term": p.to_string(),
                "successors": l.successors.iter().filter(|(t, _, _)| l.src[*t] == i).map(|(t, u, v)| json!([t, u, v])).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "complete": l.complete,
        })),
        Format::Dot => l.to_dot(),
        Format::Text => {
            let mut out = String::new();
            for (i, p) in l.states.iter().enumerate() {
                let _ = writeln!(out, "s{i}: {}", s.show(p));
                for &(t, u, v) in l.successors.iter().filter(|(t, _, _)| l.src[*t] == i) {
                    let _ = writeln!(out, "  t{t} ~t{u}~> t{v}    ({} ~{}~> {})", s.expr(&l, t), s.expr(&l, u), s.expr(&l, v));
                }
            }
            truncation_note(&l, &mut out);
            out
        }
    };
    Ok((completeness_code(&l), out))
}

fn bisim(s: &Session, strong: bool, left: &str, right: &str) -> Result<(u8, String), Error> {
    let (p, q) = (s.term(left)?, s.term(right)?);
    let l = s.explore(&[p.clone(), q.clone()])?;
    let (Some(ip), Some(iq)) = (l.state_id(&p), l.state_id(&q)) else {
        return Ok((UNKNOWN, "unknown: a root exceeds the state budget\n".into()));
    };
    if strong {
        let v = strong_bisim(&l, ip, iq);
        let out = match s.format {
            Format::Json => json_out(&json!({"result": v.as_str(), "stats": {"states": l.states.len(), "transitions": l.transitions.len()}})),
            _ => {
                let mut out = format!("strong bisimilarity: {v}\n");
                truncation_note(&l, &mut out);
                out
            }
        };
        return Ok((verdict_code(v), out));
    }
    let v = ep_bisim(&l, ip, iq, &SearchLimits::default())?;
    let out = match s.format {
        Format::Json => json_out(&v.to_json(&l)),
        _ => {
            let mut out = format!("ep-bisimilarity: {}\n", v.result);
            if let Some(c) = &v.counterexample {
                let _ = writeln!(out, "{c}");
                let _ = writeln!(out, "  s{} = {}", c.p, s.show(&l.states[c.p]));
                let _ = writeln!(out, "  s{} = {}", c.q, s.show(&l.states[c.q]));
                for t in cited_transitions(&c.message) {
                    if t < l.transitions.len() {
                        let _ = writeln!(out, "  t{t} = {}", s.expr(&l, t));
                    }
                }
            }
            if v.result == Verdict::True {
                let _ = writeln!(out, "witness: {} triple(s)", v.witness.len());
            }
            let _ = writeln!(
                out,
                "({} triples visited, {} relations enumerated, {} ms)",
                v.stats.triples_visited, v.stats.relations_enumerated, v.stats.duration_ms
            );
            truncation_note(&l, &mut out);
            out
        }
    };
    Ok((verdict_code(v.result), out))
}

/// Transition ids of the form `t12` mentioned in a message, in order.
fn cited_transitions(msg: &str) -> Vec<usize> {
    let mut out = Vec::new();
    for word in msg.split(|c: char| !c.is_ascii_alphanumeric()) {
        if let Some(n) = word.strip_prefix('t').and_then(|d| d.parse().ok()) {
            if !out.contains(&n) {
                out.push(n);
            }
        }
    }
    out
}

fn rdp(s: &Session, var: &str, spec_src: &str) -> Result<(u8, String), Error> {
    let spec = parse_spec(spec_src, &s.lang.tss.signature, &s.lang.tss.universe)?;
    if spec.get(var).is_none() {
        return Err(Error::UnknownRecursionVariable(var.to_string()));
    }
    let v = check_rdp(&s.lang, &Arc::new(spec), var, s.limits)?;
    let out = match s.format {
        Format::Json => json_out(&json!({"result": v.result.as_str(), "counterexample": v.counterexample.as_ref().map(|c| c.to_string())})),
        _ => {
            let mut out = format!("<{var}|S> and its unfolding are ep-bisimilar: {}\n", v.result);
            if let Some(c) = &v.counterexample {
                let _ = writeln!(out, "{c}");
            }
            out
        }
    };
    Ok((verdict_code(v.result), out))
}

fn suite(s: &Session, trials: usize, abcde_trials: usize, seed: u64) -> Result<(u8, String), Error> {
    let outcomes = congruence_suite(trials, abcde_trials, seed, s.limits);
    let mut out = String::new();
    let mut rows = Vec::new();
    let (mut failed, mut unknown) = (0, 0);
    for (i, o) in outcomes.iter().enumerate() {
        let result = match &o.result {
            Ok(v) => v.to_string(),
            Err(e) => format!("error: {e}"),
        };
        match &o.result {
            Ok(Verdict::True) => {}
            Ok(Verdict::False) => failed += 1,
            _ => unknown += 1,
        }
        let subst = |m: &BTreeMap<epsos::syntax::Var, Expr>| m.iter().map(|(k, v)| format!("{k} := {}", s.show(v))).collect::<Vec<_>>().join(", ");
        rows.push(json!({"language": o.lang.name(), "context": o.context.to_string(), "rho": subst(&o.rho), "nu": subst(&o.nu), "result": result}));
        if s.format == Format::Text {
            let _ = writeln!(out, "{i:3} {:5} {}  [{}] vs [{}]: {result}", o.lang.name(), s.show(&o.context), subst(&o.rho), subst(&o.nu));
        }
    }
    let passed = outcomes.len() - failed - unknown;
    if s.format == Format::Json {
        out = json_out(&json!({"seed": seed, "passed": passed, "failed": failed, "unknown": unknown, "probes": rows}));
    } else {
        let _ = writeln!(out, "{passed}/{} probes passed, {failed} failed, {unknown} unknown", outcomes.len());
    }
    let code = if failed > 0 {
        FAIL
    } else if unknown > 0 {
        UNKNOWN
    } else {
        PASS
    };
    Ok((code, out))
}

fn fixtures(s: &Session) -> Result<(u8, String), Error> {
    let mut out = String::new();
    let mut rows = Vec::new();
    let mut code = PASS;
    for r in run_fixtures(s.limits) {
        let r = r?;
        if !r.passed() {
            code = if r.complete { FAIL } else { UNKNOWN.max(code) };
        }
        let checks: Vec<Value> = r.checks.iter().map(|(c, ok)| json!({"check": c, "ok": ok})).collect();
        rows.push(json!({"name": r.name, "states": r.states, "transitions": r.transitions, "successors": r.triples, "complete": r.complete, "checks": checks}));
        let _ = writeln!(
            out,
            "{}: {} states, {} transitions, {} successor triples{} -> {}",
            r.name,
            r.states,
            r.transitions,
            r.triples,
            if r.complete { "" } else { " (incomplete)" },
            if r.passed() { "pass" } else { "FAIL" }
        );
        for (c, ok) in &r.checks {
            let _ = writeln!(out, "  [{}] {c}", if *ok { "ok" } else { "!!" });
        }
    }
    if s.format == Format::Json {
        out = json_out(&json!({"fixtures": rows}));
    }
    Ok((code, out))
}
