//! Built-in languages (CCS and ABCdE) and named example terms.

use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

use crate::dsl::{parse_language_with, SortOverrides};
use crate::error::{Error, Result};
use crate::label::Label;
use crate::parse::parse_term;
use crate::successor::Tsss;
use crate::syntax::Expr;

pub const CCS_SOURCE: &str = include_str!("../languages/ccs.sos");
pub const ABCDE_SOURCE: &str = include_str!("../languages/abcde.sos");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CcsParams {
    /// Handshake communication names.
    pub handshake: Vec<String>,
}

impl Default for CcsParams {
    fn default() -> Self {
        CcsParams { handshake: names(&["a", "b", "c"]) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbcdeParams {
    pub handshake: Vec<String>,
    pub broadcast: Vec<String>,
    pub signals: Vec<String>,
}

impl Default for AbcdeParams {
    fn default() -> Self {
        AbcdeParams { handshake: names(&["c"]), broadcast: names(&["b"]), signals: names(&["s"]) }
    }
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn sort(name: &str, items: &[String]) -> Result<(String, Vec<Label>)> {
    if items.is_empty() {
        return Err(Error::InvalidParams(format!("sort {name} must not be empty")));
    }
    let mut out = Vec::new();
    for i in items {
        let ok = i.starts_with(|c: char| c.is_ascii_alphabetic()) && i.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') && i != "tau";
        if !ok {
            return Err(Error::InvalidParams(format!("{i:?} is not a valid name in sort {name}")));
        }
        out.push(Label::name(i));
    }
    Ok((name.to_string(), out))
}

fn disjoint(sorts: &[(String, Vec<Label>)]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (name, ls) in sorts {
        for l in ls {
            if !seen.insert(l.clone()) {
                return Err(Error::InvalidParams(format!("name {l} occurs twice (last in sort {name})")));
            }
        }
    }
    Ok(())
}

pub fn ccs(params: &CcsParams) -> Result<Tsss> {
    let sorts = vec![sort("C", &params.handshake)?];
    disjoint(&sorts)?;
    parse_language_with(CCS_SOURCE, &sorts.into_iter().collect())
}

pub fn abcde(params: &AbcdeParams) -> Result<Tsss> {
    let sorts = vec![sort("C", &params.handshake)?, sort("B", &params.broadcast)?, sort("S", &params.signals)?];
    disjoint(&sorts)?;
    parse_language_with(ABCDE_SOURCE, &sorts.into_iter().collect())
}

/// CCS over `{a, b, c}`, loaded once.
pub fn ccs_default() -> Arc<Tsss> {
    static CELL: OnceLock<Arc<Tsss>> = OnceLock::new();
    CELL.get_or_init(|| Arc::new(ccs(&CcsParams::default()).expect("built-in CCS definition is valid"))).clone()
}

/// ABCdE over `C = {c}`, `B = {b}`, `S = {s}`, loaded once.
pub fn abcde_default() -> Arc<Tsss> {
    static CELL: OnceLock<Arc<Tsss>> = OnceLock::new();
    CELL.get_or_init(|| Arc::new(abcde(&AbcdeParams::default()).expect("built-in ABCdE definition is valid"))).clone()
}

/// Loads `ccs`, `abcde` or a definition text, applying sort overrides.
pub fn language(name_or_text: &str, overrides: &SortOverrides) -> Result<Arc<Tsss>> {
    match name_or_text {
        "ccs" if overrides.is_empty() => Ok(ccs_default()),
        "abcde" if overrides.is_empty() => Ok(abcde_default()),
        "ccs" => Ok(Arc::new(parse_language_with(CCS_SOURCE, overrides)?)),
        "abcde" => Ok(Arc::new(parse_language_with(ABCDE_SOURCE, overrides)?)),
        text => Ok(Arc::new(parse_language_with(text, overrides)?)),
    }
}

/// A named example: a language and some closed terms in it.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub language: Arc<Tsss>,
    pub terms: Vec<(String, Expr)>,
}

impl Fixture {
    pub fn term(&self, name: &str) -> Option<&Expr> {
        self.terms.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }
}

pub const FIXTURE_NAMES: &[&str] = &["ex31", "sec4_pq", "sec4_pp", "expansion_pair", "abcde_signal"];

const P_SEC4: &str = "<X | {X = a.X + c.X}>";
const Q_SEC4: &str = "<Y | {Y = a.Y}>";

pub fn fixture(name: &str) -> Result<Fixture> {
    let (name, lang, terms): (&'static str, Arc<Tsss>, Vec<(&str, String)>) = match name {
        "ex31" => (
            "ex31",
            ccs_default(),
            vec![("P", "<X | {X = a.X + b.Y, Y = a.Y}>".into()), ("Q", "<Z | {Z = a.Z}> | b.0".into())],
        ),
        "sec4_pq" => ("sec4_pq", ccs_default(), vec![("pq", format!("{P_SEC4} | {Q_SEC4}"))]),
        "sec4_pp" => ("sec4_pp", ccs_default(), vec![("pp", format!("{P_SEC4} | {P_SEC4}"))]),
        "expansion_pair" => ("expansion_pair", ccs_default(), vec![("par", "a.0 | b.0".into()), ("seq", "a.b.0 + b.a.0".into())]),
        "abcde_signal" => ("abcde_signal", abcde_default(), vec![("signal", "0^s | s.0".into())]),
        other => return Err(Error::UnknownFixture(other.to_string())),
    };
    let mut parsed = Vec::new();
    for (n, src) in terms {
        parsed.push((n.to_string(), parse_term(&src, &lang.tss.signature, &lang.tss.universe)?));
    }
    Ok(Fixture { name, language: lang, terms: parsed })
}
