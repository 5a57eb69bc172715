//! Tokenizer and recursive-descent parsers for process terms, labels,
//! label sets and side conditions.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::label::{Cond, Label, LabelKind, LabelTerm, LabelUniverse, Param, SetExpr};
use crate::syntax::{family, Expr, ExprKind, Op, ParamSpec, RecSpec, Signature};
use crate::{sym, Sym};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Zero,
    Num(usize),
    Punct(&'static str),
    Eof,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl std::fmt::Display for Span {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

const MULTI: &[&str] = &["::", "->", "=>", "==", "!=", "~>"];
const SINGLE: &[&str] = &[
    "(", ")", "{", "}", "[", "]", "<", ">", ",", ";", ":", ".", "+", "|", "&", "-", "~", "\\", "^", "!", "?", "=", "*",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let adv = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        if c.is_whitespace() {
            adv(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                { let c = chars[i]; adv(&mut i, &mut line, &mut col, c); }
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' || c == 'τ' {
            let mut s = String::new();
            if c == 'τ' {
                s.push_str("tau");
                adv(&mut i, &mut line, &mut col, c);
            }
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                s.push(chars[i]);
                { let c = chars[i]; adv(&mut i, &mut line, &mut col, c); }
            }
            out.push(Token { tok: Tok::Ident(s), span });
            continue;
        }
        if c.is_ascii_digit() && c != '0' {
            let mut n: usize = 0;
            while i < chars.len() && chars[i].is_ascii_digit() {
                n = n.saturating_mul(10).saturating_add(chars[i] as usize - '0' as usize);
                { let c = chars[i]; adv(&mut i, &mut line, &mut col, c); }
            }
            out.push(Token { tok: Tok::Num(n), span });
            continue;
        }
        if c == '0' {
            adv(&mut i, &mut line, &mut col, c);
            out.push(Token { tok: Tok::Zero, span });
            continue;
        }
        if c == '"' {
            adv(&mut i, &mut line, &mut col, c);
            let mut s = String::new();
            while i < chars.len() && chars[i] != '"' {
                s.push(chars[i]);
                { let c = chars[i]; adv(&mut i, &mut line, &mut col, c); }
            }
            if i >= chars.len() {
                return Err(Error::Parse { line: span.line, col: span.col, message: "unterminated string".into() });
            }
            adv(&mut i, &mut line, &mut col, '"');
            out.push(Token { tok: Tok::Str(s), span });
            continue;
        }
        let alias = match c {
            '⟨' => Some("<"),
            '⟩' => Some(">"),
            '→' => Some("->"),
            '⇝' => Some("~>"),
            _ => None,
        };
        if let Some(p) = alias {
            adv(&mut i, &mut line, &mut col, c);
            out.push(Token { tok: Tok::Punct(p), span });
            continue;
        }
        if i + 1 < chars.len() {
            let two: String = chars[i..i + 2].iter().collect();
            if let Some(p) = MULTI.iter().find(|p| **p == two) {
                adv(&mut i, &mut line, &mut col, c);
                { let c = chars[i]; adv(&mut i, &mut line, &mut col, c); }
                out.push(Token { tok: Tok::Punct(p), span });
                continue;
            }
        }
        let one = c.to_string();
        if let Some(p) = SINGLE.iter().find(|p| **p == one) {
            adv(&mut i, &mut line, &mut col, c);
            out.push(Token { tok: Tok::Punct(p), span });
            continue;
        }
        return Err(Error::Parse { line, col, message: format!("unexpected character {c:?}") });
    }
    out.push(Token { tok: Tok::Eof, span: Span { line, col } });
    Ok(out)
}

/// Names and sets that terms are resolved against.
#[derive(Clone, Copy)]
pub struct TermContext<'a> {
    pub signature: &'a Signature,
    pub universe: &'a LabelUniverse,
    /// Identifiers that stand for operator parameters inside rule templates.
    pub param_vars: &'a BTreeSet<Sym>,
}

pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    pub fn new(src: &str) -> Result<Self> {
        Ok(Parser { toks: tokenize(src)?, pos: 0 })
    }

    pub fn from_tokens(toks: Vec<Token>) -> Self {
        Parser { toks, pos: 0 }
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    pub fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn reset(&mut self, pos: usize) {
        self.pos = pos;
    }

    pub fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        let s = self.span();
        Err(Error::Parse { line: s.line, col: s.col, message: message.into() })
    }

    pub fn at(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    pub fn at_ident(&self, word: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == word)
    }

    pub fn eat(&mut self, p: &str) -> bool {
        if self.at(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, p: &str) -> Result<()> {
        if self.eat(p) {
            Ok(())
        } else {
            self.error(format!("expected `{p}`, found {}", describe(self.peek())))
        }
    }

    pub fn expect_word(&mut self, word: &str) -> Result<()> {
        if self.at_ident(word) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected `{word}`, found {}", describe(self.peek())))
        }
    }

    pub fn ident(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            t => self.error(format!("expected identifier, found {}", describe(&t))),
        }
    }

    pub fn string(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(s)
            }
            t => self.error(format!("expected string, found {}", describe(&t))),
        }
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub fn expect_eof(&self) -> Result<()> {
        if self.at_eof() {
            Ok(())
        } else {
            self.error(format!("unexpected {}", describe(self.peek())))
        }
    }

    // ---------- labels ----------

    /// A label term. Identifiers in `vars` are label variables.
    pub fn label_term(&mut self, vars: &BTreeSet<Sym>) -> Result<LabelTerm> {
        if self.eat("~") {
            let inner = self.label_term(vars)?;
            return Ok(match inner {
                LabelTerm::Const(l) => match l.bar() {
                    Some(b) => LabelTerm::Const(b),
                    None => return self.error(format!("label {l} has no complement")),
                },
                t => LabelTerm::App(sym("bar"), vec![t]),
            });
        }
        let name = self.ident()?;
        if name == "tau" {
            return Ok(LabelTerm::Const(Label::tau()));
        }
        if self.at("(") {
            self.bump();
            let mut args = vec![self.label_term(vars)?];
            while self.eat(",") {
                args.push(self.label_term(vars)?);
            }
            self.expect(")")?;
            return Ok(match (name.as_str(), args.as_slice()) {
                ("bar", [LabelTerm::Const(l)]) => match l.bar() {
                    Some(b) => LabelTerm::Const(b),
                    None => return self.error(format!("label {l} has no complement")),
                },
                _ => LabelTerm::App(sym(&name), args),
            });
        }
        let is_var = vars.contains(name.as_str());
        let decorate = |k: LabelKind, f: &str| {
            if is_var {
                LabelTerm::App(sym(f), vec![LabelTerm::Var(sym(&name))])
            } else {
                LabelTerm::Const(Label::new(k, &name))
            }
        };
        // `b:` must not swallow the first half of `::`
        if self.at("!") {
            self.bump();
            return Ok(decorate(LabelKind::Bang, "bang"));
        }
        if self.at("?") {
            self.bump();
            return Ok(decorate(LabelKind::Query, "query"));
        }
        if self.at(":") {
            self.bump();
            return Ok(decorate(LabelKind::Colon, "colon"));
        }
        Ok(if is_var { LabelTerm::Var(sym(&name)) } else { LabelTerm::Const(Label::name(&name)) })
    }

    pub fn label(&mut self) -> Result<Label> {
        match self.label_term(&BTreeSet::new())? {
            LabelTerm::Const(l) => Ok(l),
            t => self.error(format!("expected a concrete label, found {t}")),
        }
    }

    // ---------- sets and conditions ----------

    pub fn set_expr(&mut self, vars: &BTreeSet<Sym>) -> Result<SetExpr> {
        let mut lhs = self.set_inter(vars)?;
        loop {
            if self.eat("|") {
                let r = self.set_inter(vars)?;
                lhs = SetExpr::Union(Box::new(lhs), Box::new(r));
            } else if self.eat("-") {
                let r = self.set_inter(vars)?;
                lhs = SetExpr::Diff(Box::new(lhs), Box::new(r));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn set_inter(&mut self, vars: &BTreeSet<Sym>) -> Result<SetExpr> {
        let mut lhs = self.set_atom(vars)?;
        while self.eat("&") {
            let r = self.set_atom(vars)?;
            lhs = SetExpr::Inter(Box::new(lhs), Box::new(r));
        }
        Ok(lhs)
    }

    fn set_atom(&mut self, vars: &BTreeSet<Sym>) -> Result<SetExpr> {
        if self.eat("(") {
            let s = self.set_expr(vars)?;
            self.expect(")")?;
            return Ok(s);
        }
        if self.eat("{") {
            let mut items = Vec::new();
            if !self.at("}") {
                items.push(self.label_term(vars)?);
                while self.eat(",") {
                    items.push(self.label_term(vars)?);
                }
            }
            self.expect("}")?;
            return Ok(SetExpr::Lit(items));
        }
        let name = self.ident()?;
        if self.eat("(") {
            let inner = self.set_expr(vars)?;
            self.expect(")")?;
            return Ok(SetExpr::Map(sym(&name), Box::new(inner)));
        }
        Ok(SetExpr::Named(sym(&name)))
    }

    pub fn condition(&mut self, vars: &BTreeSet<Sym>) -> Result<Cond> {
        let t = self.label_term(vars)?;
        if self.at_ident("in") {
            self.bump();
            return Ok(Cond::In(t, self.set_expr(vars)?));
        }
        if self.at_ident("notin") {
            self.bump();
            return Ok(Cond::NotIn(t, self.set_expr(vars)?));
        }
        if self.eat("==") {
            return Ok(Cond::Eq(t, self.label_term(vars)?));
        }
        if self.eat("!=") {
            return Ok(Cond::Neq(t, self.label_term(vars)?));
        }
        self.error("expected `in`, `notin`, `==` or `!=`")
    }

    pub fn conditions(&mut self, vars: &BTreeSet<Sym>) -> Result<Vec<Cond>> {
        let mut out = vec![self.condition(vars)?];
        while self.at_ident("and") {
            self.bump();
            out.push(self.condition(vars)?);
        }
        Ok(out)
    }

    // ---------- process terms ----------

    pub fn expr(&mut self, cx: &TermContext) -> Result<Expr> {
        let mut lhs = self.par(cx)?;
        while self.at("+") {
            let span = self.span();
            self.bump();
            let rhs = self.par(cx)?;
            lhs = self.mk_app(cx, family::SUM, None, vec![lhs, rhs], span)?;
        }
        Ok(lhs)
    }

    fn par(&mut self, cx: &TermContext) -> Result<Expr> {
        let mut lhs = self.prefix(cx)?;
        while self.at("|") {
            let span = self.span();
            self.bump();
            let rhs = self.prefix(cx)?;
            lhs = self.mk_app(cx, family::PAR, None, vec![lhs, rhs], span)?;
        }
        Ok(lhs)
    }

    fn try_prefix_label(&mut self, cx: &TermContext) -> Option<Param> {
        let start = self.pos;
        let looks_like_label = match self.peek() {
            Tok::Punct("~") => true,
            Tok::Ident(_) => matches!(self.peek_at(1), Tok::Punct(".") | Tok::Punct("!") | Tok::Punct("?") | Tok::Punct("("))
                || matches!(self.peek_at(1), Tok::Punct(":")) && !matches!(self.peek_at(2), Tok::Punct(":")),
            _ => false,
        };
        if !looks_like_label {
            return None;
        }
        let parsed = self.label_term(cx.param_vars);
        if let Ok(t) = parsed {
            if self.at(".") {
                self.bump();
                let p = match t {
                    LabelTerm::Const(l) => Some(Param::Label(l)),
                    LabelTerm::Var(v) => Some(Param::Var(v)),
                    LabelTerm::App(..) => None,
                };
                if p.is_some() {
                    return p;
                }
            }
        }
        self.pos = start;
        None
    }

    fn prefix(&mut self, cx: &TermContext) -> Result<Expr> {
        let span = self.span();
        if let Some(p) = self.try_prefix_label(cx) {
            let body = self.prefix(cx)?;
            return self.mk_app(cx, family::PREFIX, Some(p), vec![body], span);
        }
        self.postfix(cx)
    }

    fn postfix(&mut self, cx: &TermContext) -> Result<Expr> {
        let mut e = self.atom(cx)?;
        loop {
            let span = self.span();
            if self.eat("\\") {
                let p = if self.eat("{") {
                    let mut set = BTreeSet::new();
                    if !self.at("}") {
                        set.insert(self.label()?);
                        while self.eat(",") {
                            set.insert(self.label()?);
                        }
                    }
                    self.expect("}")?;
                    Param::Set(set)
                } else {
                    let n = self.ident()?;
                    if cx.param_vars.contains(n.as_str()) {
                        Param::Var(sym(&n))
                    } else {
                        return self.error(format!("unknown restriction set {n}"));
                    }
                };
                e = self.mk_app(cx, family::RESTRICT, Some(p), vec![e], span)?;
            } else if self.at("[") {
                self.bump();
                let f = self.ident()?;
                self.expect("]")?;
                let p = if cx.param_vars.contains(f.as_str()) { Param::Var(sym(&f)) } else { Param::Fn(sym(&f)) };
                e = self.mk_app(cx, family::RELABEL, Some(p), vec![e], span)?;
            } else if self.eat("^") {
                let s = self.ident()?;
                let p = if cx.param_vars.contains(s.as_str()) { Param::Var(sym(&s)) } else { Param::Label(Label::name(&s)) };
                e = self.mk_app(cx, family::SIGNAL, Some(p), vec![e], span)?;
            } else {
                return Ok(e);
            }
        }
    }

    fn atom(&mut self, cx: &TermContext) -> Result<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Zero => {
                self.bump();
                self.mk_app(cx, family::NIL, None, vec![], span)
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr(cx)?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Punct("<") => {
                self.bump();
                let x = self.ident()?;
                self.expect("|")?;
                let spec = self.rec_spec(cx)?;
                self.expect(">")?;
                if spec.get(&x).is_none() {
                    return Err(Error::UnknownRecursionVariable(x));
                }
                Ok(Expr::rec(&x, Arc::new(spec)))
            }
            Tok::Ident(name) => {
                self.bump();
                let param = if self.at("[") && self.bracket_then_paren() {
                    self.bump();
                    let p = if cx.param_vars.contains(name.as_str()) {
                        Param::Var(sym(&self.ident()?))
                    } else {
                        match self.label_term(cx.param_vars)? {
                            LabelTerm::Const(l) => Param::Label(l),
                            LabelTerm::Var(v) => Param::Var(v),
                            t => return self.error(format!("unsupported parameter {t}")),
                        }
                    };
                    self.expect("]")?;
                    Some(p)
                } else {
                    None
                };
                if self.eat("(") {
                    let mut args = Vec::new();
                    if !self.at(")") {
                        args.push(self.expr(cx)?);
                        while self.eat(",") {
                            args.push(self.expr(cx)?);
                        }
                    }
                    self.expect(")")?;
                    return self.mk_app(cx, &name, param, args, span);
                }
                if param.is_some() || cx.signature.get(&name).is_some_and(|d| d.arity == 0) {
                    return self.mk_app(cx, &name, param, vec![], span);
                }
                Ok(Expr::var(&name))
            }
            t => self.error(format!("expected a process term, found {}", describe(&t))),
        }
    }

    /// Whether the `[` at the cursor closes and is followed by `(`.
    fn bracket_then_paren(&self) -> bool {
        let mut k = 1;
        loop {
            match self.peek_at(k) {
                Tok::Punct("]") => return matches!(self.peek_at(k + 1), Tok::Punct("(")),
                Tok::Eof | Tok::Punct("[") => return false,
                _ => k += 1,
            }
        }
    }

    /// `{X = p, Y = q}` or the same bindings without braces.
    pub fn rec_spec(&mut self, cx: &TermContext) -> Result<RecSpec> {
        let braced = self.eat("{");
        let mut bindings = BTreeMap::new();
        loop {
            let span = self.span();
            let y = self.ident()?;
            self.expect("=")?;
            let body = self.expr(cx)?;
            if bindings.insert(sym(&y), body).is_some() {
                return Err(Error::Parse { line: span.line, col: span.col, message: format!("{y} bound twice") });
            }
            if !(self.eat(",") || self.eat(";")) {
                break;
            }
            if braced && self.at("}") {
                break;
            }
        }
        if braced {
            self.expect("}")?;
        }
        Ok(RecSpec::new(bindings))
    }

    fn mk_app(&self, cx: &TermContext, fam: &str, param: Option<Param>, args: Vec<Expr>, span: Span) -> Result<Expr> {
        let decl = cx.signature.get(fam).ok_or_else(|| Error::UnknownOperator(fam.to_string()))?;
        let op = Op::new(fam, param);
        cx.signature.check_arity(&op, args.len())?;
        let bad = |m: String| Err(Error::Parse { line: span.line, col: span.col, message: m });
        match (&decl.param, &op.param) {
            (ParamSpec::None, None) | (_, Some(Param::Var(_))) => {}
            (ParamSpec::LabelIn(set), Some(Param::Label(l))) => {
                let allowed = cx.universe.eval_set(set, &Default::default()).unwrap_or_default();
                if !allowed.contains(l) {
                    return bad(format!("label {l} is not allowed for operator {fam}"));
                }
            }
            (ParamSpec::SubsetOf(set), Some(Param::Set(s))) => {
                let allowed = cx.universe.eval_set(set, &Default::default()).unwrap_or_default();
                if let Some(l) = s.iter().find(|l| !allowed.contains(*l)) {
                    return bad(format!("label {l} is not allowed in the set of operator {fam}"));
                }
            }
            (ParamSpec::Relabelling, Some(Param::Fn(f))) => {
                if !cx.universe.relabellings.contains_key(f) {
                    return bad(format!("unknown relabelling {f}"));
                }
            }
            _ => return bad(format!("wrong kind of parameter for operator {fam}")),
        }
        Ok(Expr::app(op, args))
    }
}

pub fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Str(s) => format!("\"{s}\""),
        Tok::Zero => "`0`".into(),
        Tok::Num(n) => format!("`{n}`"),
        Tok::Punct(p) => format!("`{p}`"),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses a complete closed-or-open process term.
pub fn parse_term(src: &str, signature: &Signature, universe: &LabelUniverse) -> Result<Expr> {
    let none = BTreeSet::new();
    let cx = TermContext { signature, universe, param_vars: &none };
    let mut p = Parser::new(src)?;
    let e = p.expr(&cx)?;
    p.expect_eof()?;
    Ok(e)
}

/// Parses a recursive specification such as `{X = a.X + b.Y, Y = a.Y}`.
pub fn parse_spec(src: &str, signature: &Signature, universe: &LabelUniverse) -> Result<RecSpec> {
    let none = BTreeSet::new();
    let cx = TermContext { signature, universe, param_vars: &none };
    let mut p = Parser::new(src)?;
    let s = p.rec_spec(&cx)?;
    p.expect_eof()?;
    Ok(s)
}

/// True when `e` uses only operators declared in `signature` with the right arities.
pub fn well_formed(e: &Expr, signature: &Signature) -> Result<()> {
    match e.kind() {
        ExprKind::Var(_) => Ok(()),
        ExprKind::App(op, args) => {
            signature.check_arity(op, args.len())?;
            args.iter().try_for_each(|a| well_formed(a, signature))
        }
        ExprKind::Rec(x, s) => {
            if s.get(x).is_none() {
                return Err(Error::UnknownRecursionVariable(x.to_string()));
            }
            s.0.values().try_for_each(|b| well_formed(b, signature))
        }
    }
}
