use proptest::prelude::*;
use sqare_core::graph::{isomorphic, parse_ntriples, parse_turtle, write_ntriples, write_turtle, Graph, Term, Triple};
use sqare_core::vocab::standard_prefixes;

fn text() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[a-c\"\\\\\n\r\t\u{1}\u{7f}äß€😀 >]{0,8}").unwrap()
}

fn iri() -> impl Strategy<Value = Term> {
    proptest::string::string_regex("[a-cä/#]{0,6}").unwrap().prop_map(|s| Term::iri(format!("http://ex.org/{s}")).unwrap())
}

fn term() -> impl Strategy<Value = Term> {
    prop_oneof![
        iri(),
        "[a-c0-9]{1,4}".prop_map(|s| Term::blank(s).unwrap()),
        text().prop_map(Term::string),
        (text(), prop_oneof![Just("de"), Just("en"), Just("en-GB")])
            .prop_map(|(t, l)| Term::lang_string(t, l).unwrap()),
        (text(), prop_oneof![Just("http://ex.org/dt"), Just("http://ex.org/d")])
            .prop_map(|(t, d)| Term::typed(t, d).unwrap()),
    ]
}

fn subject() -> impl Strategy<Value = Term> {
    prop_oneof![iri(), "[a-c]{1,3}".prop_map(|s| Term::blank(s).unwrap())]
}

fn triples() -> impl Strategy<Value = Vec<Triple>> {
    proptest::collection::vec((subject(), iri(), term()), 0..40)
        .prop_map(|v| v.into_iter().map(|(s, p, o)| Triple::new(s, p, o).unwrap()).collect())
}

/// Relabels blank nodes deterministically so the result is isomorphic.
fn relabel(graph: &Graph) -> Graph {
    let rename = |t: &Term| match t {
        Term::BlankNode(id) => Term::blank(format!("x{id}")).unwrap(),
        other => other.clone(),
    };
    graph.iter().map(|t| Triple::new(rename(&t.subject), t.predicate.clone(), rename(&t.object)).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn term_order_is_canonical_string_order(a in term(), b in term()) {
        let by_kind = |t: &Term| match t {
            Term::Literal(_) => 0,
            Term::Iri(_) => 1,
            Term::BlankNode(_) => 2,
        };
        let expected = by_kind(&a).cmp(&by_kind(&b)).then_with(|| a.to_ntriples().cmp(&b.to_ntriples()));
        prop_assert_eq!(a.cmp(&b), expected);
    }

    #[test]
    fn ntriples_round_trip(triples in triples()) {
        let graph: Graph = triples.into_iter().collect();
        let text = write_ntriples(&graph);
        let parsed = parse_ntriples(&text).unwrap();
        prop_assert_eq!(&parsed, &graph);
        prop_assert_eq!(write_ntriples(&parsed), text);
    }

    #[test]
    fn turtle_round_trip(triples in triples()) {
        let graph: Graph = triples.into_iter().collect();
        let parsed = parse_turtle(&write_turtle(&graph, &standard_prefixes())).unwrap();
        prop_assert_eq!(parsed, graph);
    }

    #[test]
    fn isomorphic_under_blank_renaming(triples in triples()) {
        let graph: Graph = triples.into_iter().collect();
        prop_assert!(isomorphic(&graph, &relabel(&graph)).unwrap());
    }
}

#[test]
fn isomorphism_notices_structure() {
    let g = parse_ntriples("_:a <http://ex.org/p> _:b .\n_:b <http://ex.org/p> _:a .\n").unwrap();
    let h = parse_ntriples("_:a <http://ex.org/p> _:b .\n_:b <http://ex.org/p> _:c .\n").unwrap();
    assert!(!isomorphic(&g, &h).unwrap());
    assert!(isomorphic(&g, &relabel(&g)).unwrap());
}
