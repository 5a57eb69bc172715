//! Language definition files.
//!
//! A definition consists of named sections in any order:
//!
//! ```text
//! sorts     { C = {a, b}; }
//! labels    { Act = C | bar(C) | {tau}; Lab = Act; }
//! functions { relabel f { a -> b, b -> a } }
//! operators { 0 : 0; pre(alpha in Act) : 1; + : 2; }
//! rules     { "+_L": x -alpha-> x' => x + y -alpha-> x' for alpha in Act; }
//! successor-rules {
//!     let t = (tx1 :: x1 -xa1-> x1');
//!     "3a": t ~v~> t' => "+_L"(t, x2) ~"+_L"(v, x2)~> t';
//! }
//! expand identity over {0, pre, +};
//! ```
//!
//! `sorts` are evaluated before `labels`; both bind named label sets. The
//! sets `Lab` (all labels) and `Act` (actions) are required.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::label::{Label, LabelUniverse, SetExpr, ACTION_SET, UNIVERSE_SET};
use crate::parse::{Parser, Span, TermContext, Tok};
use crate::sos::{RawLiteral, RuleTemplate, Tss, VarDomain};
use crate::successor::{expand_indicator_identity, SArg, STerm, SuccessorPremise, SuccessorTemplate, TVarDecl, Tsss};
use crate::syntax::{OperatorDecl, ParamSpec, Signature};
use crate::transition::RecKind;
use crate::{sym, Sym};

/// Replacement contents for sorts, e.g. `C = a,b` from the command line.
pub type SortOverrides = BTreeMap<String, Vec<Label>>;

const SECTIONS: &[&str] = &["sorts", "labels", "functions", "operators", "rules", "successor-rules"];

/// Parses a language definition and runs both format checkers.
pub fn parse_language(text: &str) -> Result<Tsss> {
    parse_language_with(text, &SortOverrides::new())
}

/// As [`parse_language`], replacing the named sorts first.
pub fn parse_language_with(text: &str, overrides: &SortOverrides) -> Result<Tsss> {
    let tsss = parse_language_unchecked(text, overrides)?;
    tsss.check().into_result()?;
    Ok(tsss)
}

/// Parses without running the format checkers.
pub fn parse_language_unchecked(text: &str, overrides: &SortOverrides) -> Result<Tsss> {
    let mut p = Parser::new(text)?;
    if p.at_eof() {
        return p.error("empty language definition");
    }
    let doc = scan_sections(&mut p)?;
    let mut universe = LabelUniverse::default();
    if let Some(&pos) = doc.sections.get("functions") {
        p.reset(pos);
        parse_functions(&mut p, &mut universe)?;
    }
    let mut sets = Vec::new();
    for name in ["sorts", "labels"] {
        if let Some(&pos) = doc.sections.get(name) {
            p.reset(pos);
            sets.extend(parse_set_defs(&mut p)?);
        }
    }
    for name in overrides.keys() {
        if !doc.sections.contains_key("sorts") || !sets.iter().any(|(n, ..)| n.as_ref() == name) {
            return Err(Error::InvalidParams(format!("unknown sort {name}")));
        }
    }
    for (name, expr, span) in sets {
        let value = match overrides.get(name.as_ref()) {
            Some(ls) => ls.iter().cloned().collect(),
            None => universe.eval_set(&expr, &Default::default()).ok_or_else(|| parse_err(span, format!("cannot evaluate set {name}")))?,
        };
        universe.sets.insert(name, value);
    }
    for req in [UNIVERSE_SET, ACTION_SET] {
        if !universe.sets.contains_key(req) {
            return Err(parse_err(Span { line: 1, col: 1 }, format!("the label set {req} must be defined")));
        }
    }
    if let Some(l) = universe.actions().iter().find(|l| !universe.labels().contains(*l)) {
        return Err(Error::InvalidParams(format!("action {l} is not in {UNIVERSE_SET}")));
    }

    let mut signature = Signature::new();
    let Some(&pos) = doc.sections.get("operators") else {
        return p.error("missing operators section");
    };
    p.reset(pos);
    parse_operators(&mut p, &mut signature)?;

    let Some(&pos) = doc.sections.get("rules") else {
        return p.error("missing rules section");
    };
    p.reset(pos);
    let templates = parse_rules(&mut p, &signature, &universe)?;
    let tss = Tss::new(signature, universe, templates);

    let mut succ = Vec::new();
    if let Some(&pos) = doc.sections.get("successor-rules") {
        p.reset(pos);
        succ = parse_successor_rules(&mut p, &tss)?;
    }
    if let Some((types, span)) = &doc.expand {
        let types: Vec<&str> = types.iter().map(|s| s.as_str()).collect();
        succ.extend(expand_indicator_identity(&tss, &types)?.into_iter().map(|t| SuccessorTemplate { span: Some(*span), ..t }));
    }
    Ok(Tsss::new(tss, succ))
}

fn parse_err(span: Span, message: String) -> Error {
    Error::Parse { line: span.line, col: span.col, message }
}

struct Document {
    /// Token position just after each section's opening brace.
    sections: BTreeMap<String, usize>,
    expand: Option<(Vec<String>, Span)>,
}

fn section_name(p: &mut Parser) -> Result<String> {
    let mut name = p.ident()?;
    // `successor-rules` lexes as three tokens
    while p.at("-") && matches!(p.peek_at(1), Tok::Ident(_)) {
        p.bump();
        name.push('-');
        name.push_str(&p.ident()?);
    }
    Ok(name)
}

fn scan_sections(p: &mut Parser) -> Result<Document> {
    let mut doc = Document { sections: BTreeMap::new(), expand: None };
    while !p.at_eof() {
        let span = p.span();
        if p.at_ident("expand") {
            p.bump();
            p.expect_word("identity")?;
            p.expect_word("over")?;
            p.expect("{")?;
            let mut types = Vec::new();
            while !p.at("}") {
                types.push(operator_family(p)?);
                if !p.eat(",") {
                    break;
                }
            }
            p.expect("}")?;
            p.expect(";")?;
            if doc.expand.is_some() {
                return Err(parse_err(span, "duplicate expand pragma".into()));
            }
            doc.expand = Some((types, span));
            continue;
        }
        let name = section_name(p)?;
        if !SECTIONS.contains(&name.as_str()) {
            return Err(parse_err(span, format!("unknown section {name}")));
        }
        p.expect("{")?;
        if doc.sections.insert(name.clone(), p.pos()).is_some() {
            return Err(parse_err(span, format!("duplicate section {name}")));
        }
        skip_block(p)?;
    }
    Ok(doc)
}

/// Skips to just past the brace closing the current block.
fn skip_block(p: &mut Parser) -> Result<()> {
    let mut depth = 1;
    while depth > 0 {
        match p.bump() {
            Tok::Punct("{") => depth += 1,
            Tok::Punct("}") => depth -= 1,
            Tok::Eof => return p.error("unclosed section"),
            _ => {}
        }
    }
    Ok(())
}

fn operator_family(p: &mut Parser) -> Result<String> {
    match p.peek().clone() {
        Tok::Zero => {
            p.bump();
            Ok("0".into())
        }
        Tok::Punct(s @ ("+" | "|")) => {
            p.bump();
            Ok(s.into())
        }
        Tok::Ident(_) => p.ident(),
        t => p.error(format!("expected an operator, found {}", crate::parse::describe(&t))),
    }
}

fn parse_set_defs(p: &mut Parser) -> Result<Vec<(Sym, SetExpr, Span)>> {
    let mut out = Vec::new();
    while !p.eat("}") {
        let span = p.span();
        let name = p.ident()?;
        p.expect("=")?;
        let e = p.set_expr(&BTreeSet::new())?;
        p.expect(";")?;
        out.push((sym(&name), e, span));
    }
    Ok(out)
}

fn parse_functions(p: &mut Parser, u: &mut LabelUniverse) -> Result<()> {
    while !p.eat("}") {
        let kind = p.ident()?;
        let span = p.span();
        let name = p.ident()?;
        if u.relabellings.contains_key(name.as_str()) || u.tables.contains_key(name.as_str()) {
            return Err(parse_err(span, format!("function {name} defined twice")));
        }
        p.expect("{")?;
        match kind.as_str() {
            "relabel" => {
                let mut map = BTreeMap::new();
                while !p.eat("}") {
                    let a = p.ident()?;
                    p.expect("->")?;
                    let b = p.ident()?;
                    map.insert(sym(&a), sym(&b));
                    if !p.eat(",") && !p.eat(";") {
                        p.expect("}")?;
                        break;
                    }
                }
                u.relabellings.insert(sym(&name), map);
            }
            "table" => {
                let mut map = BTreeMap::new();
                while !p.eat("}") {
                    let a = p.label()?;
                    p.expect("->")?;
                    let b = p.label()?;
                    map.insert(a, b);
                    if !p.eat(",") && !p.eat(";") {
                        p.expect("}")?;
                        break;
                    }
                }
                u.tables.insert(sym(&name), map);
            }
            k => return Err(parse_err(span, format!("unknown function kind {k}"))),
        }
    }
    Ok(())
}

fn parse_operators(p: &mut Parser, sig: &mut Signature) -> Result<()> {
    while !p.eat("}") {
        let span = p.span();
        let family = operator_family(p)?;
        let mut param = ParamSpec::None;
        if p.eat("(") {
            p.ident()?;
            if p.at_ident("in") {
                p.bump();
                param = ParamSpec::LabelIn(p.set_expr(&BTreeSet::new())?);
            } else if p.at_ident("subset") {
                p.bump();
                param = ParamSpec::SubsetOf(p.set_expr(&BTreeSet::new())?);
            } else {
                p.expect_word("relabelling")?;
                param = ParamSpec::Relabelling;
            }
            p.expect(")")?;
        }
        p.expect(":")?;
        let arity = match p.bump() {
            Tok::Zero => 0,
            Tok::Num(n) => n,
            _ => return Err(parse_err(span, "expected an arity".into())),
        };
        p.expect(";")?;
        sig.declare(OperatorDecl { family: sym(&family), arity, param }).map_err(|e| parse_err(span, e.to_string()))?;
    }
    Ok(())
}

/// Positions of `for` and `if` in the rule starting at the cursor, plus the
/// terminating `;`.
fn rule_extent(p: &mut Parser) -> Result<(Option<usize>, Option<usize>, usize)> {
    let start = p.pos();
    let (mut for_at, mut if_at, mut depth) = (None, None, 0i32);
    loop {
        let here = p.pos();
        match p.peek().clone() {
            Tok::Eof => return p.error("unterminated rule"),
            Tok::Punct("(" | "{" | "[" | "<") => depth += 1,
            Tok::Punct(")" | "}" | "]" | ">") => depth -= 1,
            Tok::Punct(";") if depth == 0 => {
                p.reset(start);
                return Ok((for_at, if_at, here));
            }
            Tok::Ident(w) if depth == 0 && w == "for" && for_at.is_none() => for_at = Some(here),
            Tok::Ident(w) if depth == 0 && w == "if" && if_at.is_none() => if_at = Some(here),
            _ => {}
        }
        p.bump();
    }
}

fn parse_rules(p: &mut Parser, sig: &Signature, u: &LabelUniverse) -> Result<Vec<RuleTemplate>> {
    let mut out = Vec::new();
    while !p.eat("}") {
        let span = p.span();
        let start = p.pos();
        let (for_at, if_at, end) = rule_extent(p)?;
        let body_end = for_at.or(if_at).unwrap_or(end);

        let mut vars = Vec::new();
        if let Some(f) = for_at {
            p.reset(f + 1);
            loop {
                let v = p.ident()?;
                let dom = if p.at_ident("in") {
                    p.bump();
                    VarDomain::In(p.set_expr(&BTreeSet::new())?)
                } else if p.at_ident("subset") {
                    p.bump();
                    VarDomain::Subset(p.set_expr(&BTreeSet::new())?)
                } else {
                    p.expect_word("relabelling")?;
                    VarDomain::Relabelling
                };
                if vars.iter().any(|(w, _)| *w == sym(&v)) {
                    return p.error(format!("label variable {v} declared twice"));
                }
                vars.push((sym(&v), dom));
                if !p.eat(",") {
                    break;
                }
            }
            if p.pos() != if_at.unwrap_or(end) {
                return p.error(format!("unexpected {}", crate::parse::describe(p.peek())));
            }
        }
        let var_names: BTreeSet<Sym> = vars.iter().map(|(v, _)| v.clone()).collect();
        let cx = TermContext { signature: sig, universe: u, param_vars: &var_names };

        p.reset(start);
        let ctor = p.string()?;
        let mut name_params = Vec::new();
        if p.eat("[") {
            loop {
                let v = p.ident()?;
                if !var_names.contains(v.as_str()) {
                    return p.error(format!("name parameter {v} is not a declared label variable"));
                }
                name_params.push(sym(&v));
                if !p.eat(",") {
                    break;
                }
            }
            p.expect("]")?;
        }
        p.expect(":")?;
        let mut premises = Vec::new();
        if !p.at("=>") {
            premises.push(raw_literal(p, &cx)?);
            while p.eat(",") {
                premises.push(raw_literal(p, &cx)?);
            }
        }
        p.expect("=>")?;
        let conclusion = raw_literal(p, &cx)?;
        if p.pos() != body_end {
            return p.error(format!("unexpected {}", crate::parse::describe(p.peek())));
        }
        let mut conditions = Vec::new();
        if let Some(i) = if_at {
            p.reset(i + 1);
            conditions = p.conditions(&var_names)?;
            if p.pos() != end {
                return p.error(format!("unexpected {}", crate::parse::describe(p.peek())));
            }
        }
        p.reset(end + 1);
        out.push(RuleTemplate { ctor: sym(&ctor), name_params, vars, premises, conclusion, conditions, span });
    }
    Ok(out)
}

fn raw_literal(p: &mut Parser, cx: &TermContext) -> Result<RawLiteral> {
    let src = p.expr(cx)?;
    p.expect("-")?;
    let label = p.label_term(cx.param_vars)?;
    p.expect("->")?;
    let tgt = p.expr(cx)?;
    Ok(RawLiteral { src, label, tgt })
}

struct SuccessorScope<'a> {
    /// Identifiers read as label variables.
    label_vars: &'a BTreeSet<Sym>,
    aliases: &'a BTreeMap<Sym, (Sym, TVarDecl)>,
    tvars: BTreeMap<Sym, TVarDecl>,
}

impl SuccessorScope<'_> {
    fn declare(&mut self, p: &Parser, name: Sym, d: TVarDecl) -> Result<()> {
        match self.tvars.get(&name) {
            Some(prev) if *prev != d => p.error(format!("transition variable {name} declared with two literals")),
            _ => {
                self.tvars.insert(name, d);
                Ok(())
            }
        }
    }

    fn is_tvar(&self, name: &str) -> bool {
        self.aliases.contains_key(name) || self.tvars.contains_key(name)
    }
}

fn tvar_decl(p: &mut Parser, label_vars: &BTreeSet<Sym>) -> Result<(Sym, TVarDecl)> {
    let name = p.ident()?;
    p.expect("::")?;
    let src = p.ident()?;
    p.expect("-")?;
    let label = p.label_term(label_vars)?;
    p.expect("->")?;
    let tgt = p.ident()?;
    p.expect(")")?;
    Ok((sym(&name), TVarDecl { src: sym(&src), label, tgt: sym(&tgt) }))
}

fn sterm(p: &mut Parser, sc: &mut SuccessorScope) -> Result<STerm> {
    match p.peek().clone() {
        Tok::Punct("(") => {
            p.bump();
            if matches!(p.peek(), Tok::Ident(_)) && matches!(p.peek_at(1), Tok::Punct("::")) {
                let (name, d) = tvar_decl(p, sc.label_vars)?;
                sc.declare(p, name.clone(), d)?;
                return Ok(STerm::Var(name));
            }
            let t = sterm(p, sc)?;
            p.expect(")")?;
            Ok(t)
        }
        Tok::Ident(w) if (w == "rec_Act" || w == "rec_In") && matches!(p.peek_at(1), Tok::Punct("(")) => {
            p.bump();
            p.bump();
            let inner = sterm(p, sc)?;
            p.expect(")")?;
            let kind = if w == "rec_Act" { RecKind::Act } else { RecKind::In };
            Ok(STerm::Rec(kind, Box::new(inner)))
        }
        Tok::Ident(w) => {
            p.bump();
            if let Some((name, d)) = sc.aliases.get(w.as_str()).cloned() {
                sc.declare(p, name.clone(), d)?;
                return Ok(STerm::Var(name));
            }
            if sc.tvars.contains_key(w.as_str()) {
                return Ok(STerm::Var(sym(&w)));
            }
            p.reset(p.pos() - 1);
            p.error(format!("unknown transition variable {w}"))
        }
        Tok::Str(ctor) => {
            p.bump();
            let mut params = Vec::new();
            if p.eat("[") {
                loop {
                    params.push(p.label_term(sc.label_vars)?);
                    if !p.eat(",") {
                        break;
                    }
                }
                p.expect("]")?;
            }
            let mut args = Vec::new();
            if p.eat("(") {
                if !p.at(")") {
                    loop {
                        args.push(sarg(p, sc)?);
                        if !p.eat(",") {
                            break;
                        }
                    }
                }
                p.expect(")")?;
            }
            Ok(STerm::Ctor { ctor: sym(&ctor), params, args })
        }
        t => p.error(format!("expected a transition term, found {}", crate::parse::describe(&t))),
    }
}

fn sarg(p: &mut Parser, sc: &mut SuccessorScope) -> Result<SArg> {
    if let Tok::Ident(w) = p.peek().clone() {
        let rec_call = (w == "rec_Act" || w == "rec_In") && matches!(p.peek_at(1), Tok::Punct("("));
        if !rec_call && !sc.is_tvar(&w) {
            p.bump();
            return Ok(SArg::Proc(sym(&w)));
        }
    }
    Ok(SArg::Trans(sterm(p, sc)?))
}

fn parse_successor_rules(p: &mut Parser, tss: &Tss) -> Result<Vec<SuccessorTemplate>> {
    let base: BTreeSet<&str> = tss.universe.labels().iter().map(|l| l.name.as_ref()).collect();
    let mut aliases: BTreeMap<Sym, (Sym, TVarDecl)> = BTreeMap::new();
    let mut out = Vec::new();
    // every identifier that is not a base label name may serve as a label variable
    let label_vars = identifiers_after(p).into_iter().filter(|s| !base.contains(s.as_ref()) && s.as_ref() != "tau").collect::<BTreeSet<Sym>>();
    while !p.eat("}") {
        let span = p.span();
        if p.at_ident("let") {
            p.bump();
            let alias = p.ident()?;
            p.expect("=")?;
            p.expect("(")?;
            let decl = tvar_decl(p, &label_vars)?;
            p.expect(";")?;
            aliases.insert(sym(&alias), decl);
            continue;
        }
        let name = p.string()?;
        p.expect(":")?;
        let mut sc = SuccessorScope { label_vars: &label_vars, aliases: &aliases, tvars: BTreeMap::new() };
        let mut premises = Vec::new();
        if !p.at("=>") {
            loop {
                let t = sterm(p, &mut sc)?;
                p.expect("~")?;
                let u = sterm(p, &mut sc)?;
                p.expect("~>")?;
                let v = sterm(p, &mut sc)?;
                premises.push(SuccessorPremise { t, u, v });
                if !p.eat(",") {
                    break;
                }
            }
        }
        p.expect("=>")?;
        let lhs = sterm(p, &mut sc)?;
        p.expect("~")?;
        let rhs = sterm(p, &mut sc)?;
        p.expect("~>")?;
        let target = sterm(p, &mut sc)?;
        let mut conditions = Vec::new();
        if p.at_ident("if") {
            p.bump();
            conditions = p.conditions(&label_vars)?;
        }
        p.expect(";")?;
        if out.iter().any(|t: &SuccessorTemplate| t.name.as_ref() == name) {
            return Err(parse_err(span, format!("successor rule {name:?} defined twice")));
        }
        out.push(SuccessorTemplate {
            name: sym(&name),
            tvars: sc.tvars,
            premises,
            lhs,
            rhs,
            target,
            conditions,
            span: Some(span),
            expanded_from: None,
        });
    }
    Ok(out)
}

/// Identifiers from the cursor to the end of the current block.
fn identifiers_after(p: &mut Parser) -> BTreeSet<Sym> {
    let start = p.pos();
    let mut out = BTreeSet::new();
    let mut depth = 1;
    while depth > 0 {
        match p.bump() {
            Tok::Punct("{") => depth += 1,
            Tok::Punct("}") => depth -= 1,
            Tok::Ident(s) => {
                out.insert(sym(&s));
            }
            Tok::Eof => break,
            _ => {}
        }
    }
    p.reset(start);
    out
}

/// Parses `C=a,b` style sort overrides.
pub fn parse_override(s: &str) -> Result<(String, Vec<Label>)> {
    let (name, items) = s.split_once('=').ok_or_else(|| Error::InvalidParams(format!("expected NAME=a,b,... but found {s:?}")))?;
    let name = name.trim();
    if name.is_empty() {
        return Err(Error::InvalidParams(format!("missing sort name in {s:?}")));
    }
    let mut labels = Vec::new();
    for item in items.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        if !item.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') || !item.starts_with(|c: char| c.is_ascii_alphabetic()) {
            return Err(Error::InvalidParams(format!("bad name {item:?} in sort {name}")));
        }
        labels.push(Label::name(item));
    }
    if labels.is_empty() {
        return Err(Error::InvalidParams(format!("sort {name} must not be empty")));
    }
    Ok((name.to_string(), labels))
}
