use std::collections::BTreeSet;

use epsos::dsl::{parse_language, parse_override};
use epsos::stdlib::{abcde, ccs, ccs_default, AbcdeParams, CcsParams, CCS_SOURCE};
use epsos::suite::Lang;
use epsos::{Engine, Error, ExploreLimits, Label};

#[test]
fn embedded_definition_equals_default_parameters() {
    let from_text = parse_language(CCS_SOURCE).unwrap();
    let from_params = ccs(&CcsParams::default()).unwrap();
    assert!(from_text.tss == from_params.tss);
    assert_eq!(format!("{:?}", from_text.templates), format!("{:?}", from_params.templates));
    assert!(ccs_default().tss == from_params.tss);
}

#[test]
fn empty_definition_is_a_parse_error() {
    assert!(matches!(parse_language(""), Err(Error::Parse { .. })));
    assert!(matches!(parse_language("   # only a comment\n"), Err(Error::Parse { .. })));
}

#[test]
fn duplicate_section_is_a_parse_error() {
    let text = CCS_SOURCE.replacen("functions {", "functions { }\nfunctions {", 1);
    match parse_language(&text) {
        Err(Error::Parse { line, .. }) => assert!(line > 1),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn sections_may_come_in_any_order() {
    let start = CCS_SOURCE.find("rules {").unwrap();
    let end = CCS_SOURCE.find("successor-rules {").unwrap();
    let rules = &CCS_SOURCE[start..end];
    let text = format!("{rules}\n{}", CCS_SOURCE.replacen(rules, "", 1));
    let (a, b) = (parse_language(&text).unwrap(), ccs_default());
    assert!(a.tss.signature == b.tss.signature && a.tss.universe == b.tss.universe);
    let instances = |t: &epsos::Tsss| t.tss.all_instances().iter().map(|r| format!("{:?}", (&r.name, &r.trigger, &r.label, &r.target))).collect::<BTreeSet<_>>();
    assert_eq!(instances(&a), instances(&b));
}

#[test]
fn checked_parse_reports_format_violations() {
    let text = CCS_SOURCE.replacen("x + y -alpha-> x' for", "x + y -alpha-> x' | x' for", 1);
    match parse_language(&text) {
        Err(Error::Format(report)) => {
            assert!(report.clauses().contains("DS3"));
            assert!(report.diagnostics.iter().all(|d| d.span.is_some()));
        }
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn sort_overrides_change_the_label_universe() {
    let t = ccs(&CcsParams { handshake: vec!["a".into(), "d".into()] }).unwrap();
    assert!(t.tss.universe.contains(&Label::name("d")));
    assert!(!t.tss.universe.contains(&Label::name("b")));
    assert!(matches!(ccs(&CcsParams { handshake: vec![] }), Err(Error::InvalidParams(_))));
    let clash = AbcdeParams { handshake: vec!["b".into()], ..Default::default() };
    assert!(matches!(abcde(&clash), Err(Error::InvalidParams(_))));
    let (name, labels) = parse_override("C=a,b").unwrap();
    assert_eq!((name.as_str(), labels.len()), ("C", 2));
}

#[test]
fn unguarded_recursion_is_pruned_or_rejected() {
    let t = ccs_default();
    let engine = Engine::new(t, ExploreLimits::default());
    assert!(engine.enabled(&Lang::Ccs.parse("<X | {X = X}>").unwrap()).unwrap().is_empty());
    let r = engine.enabled(&Lang::Ccs.parse("<X | {X = X + a.0}>").unwrap());
    assert!(matches!(r, Err(Error::UnguardedRecursion(_))), "{r:?}");
}

const TWIN: &str = r#"
sorts { C = {a}; }
labels { Act = C; Lab = Act; }
operators {
    0 : 0;
    pre(alpha in Act) : 1;
    + : 2;
    both : 2;
}
rules {
    "->{}"[alpha]: => alpha.x -alpha-> x for alpha in Act;
    "+_L": x -alpha-> x' => x + y -alpha-> x' for alpha in Act;
    "+_R": y -alpha-> y' => x + y -alpha-> y' for alpha in Act;
    "both": x -alpha-> x', y -alpha-> y' => both(x, y) -alpha-> both(x', y') for alpha in Act;
}
successor-rules { }
"#;

#[test]
fn proofs_differing_in_child_order_are_distinct() {
    let t = std::sync::Arc::new(parse_language(TWIN).unwrap());
    let p = epsos::parse::parse_term("both(a.0 + a.0, a.0 + a.0)", &t.tss.signature, &t.tss.universe).unwrap();
    let en = Engine::new(t, ExploreLimits::default()).enabled(&p).unwrap();
    let names: BTreeSet<String> = en.iter().map(|tr| tr.expr.to_string()).collect();
    assert_eq!(en.len(), 4);
    assert_eq!(names.len(), 4);
    assert!(en.iter().all(|tr| tr.target == en[0].target));
}
