//! Fixed basic-graph-pattern plans: an ordered list of triple patterns with
//! variables, evaluated left to right as index nested-loop joins.

use std::collections::BTreeMap;

use super::{Graph, Term, TriplePattern};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Slot {
    Var(String),
    Const(Term),
}

pub fn var(name: &str) -> Slot {
    Slot::Var(name.to_string())
}

impl From<Term> for Slot {
    fn from(term: Term) -> Self {
        Slot::Const(term)
    }
}

impl From<&Term> for Slot {
    fn from(term: &Term) -> Self {
        Slot::Const(term.clone())
    }
}

pub type Bindings = BTreeMap<String, Term>;

#[derive(Debug, Clone, Default)]
pub struct Plan {
    steps: Vec<[Slot; 3]>,
}

fn resolve(slot: &Slot, row: &Bindings) -> Option<Term> {
    match slot {
        Slot::Const(t) => Some(t.clone()),
        Slot::Var(name) => row.get(name).cloned(),
    }
}

fn bind(slot: &Slot, value: &Term, row: &mut Bindings) -> bool {
    match slot {
        Slot::Const(t) => t == value,
        Slot::Var(name) => match row.get(name) {
            Some(existing) => existing == value,
            None => {
                row.insert(name.clone(), value.clone());
                true
            }
        },
    }
}

impl Plan {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a join step. Order matters: put selective patterns first.
    pub fn then(mut self, s: impl Into<Slot>, p: impl Into<Slot>, o: impl Into<Slot>) -> Self {
        self.steps.push([s.into(), p.into(), o.into()]);
        self
    }

    /// All solutions, in join order.
    pub fn execute(&self, graph: &Graph) -> Vec<Bindings> {
        let mut rows = vec![Bindings::new()];
        for [s, p, o] in &self.steps {
            let mut next = Vec::new();
            for row in &rows {
                let pattern = TriplePattern {
                    subject: resolve(s, row),
                    predicate: resolve(p, row),
                    object: resolve(o, row),
                };
                for triple in graph.match_pattern(&pattern) {
                    let mut extended = row.clone();
                    if bind(s, &triple.subject, &mut extended)
                        && bind(p, &triple.predicate, &mut extended)
                        && bind(o, &triple.object, &mut extended)
                    {
                        next.push(extended);
                    }
                }
            }
            rows = next;
            if rows.is_empty() {
                break;
            }
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_ntriples;

    #[test]
    fn joins_bind_shared_variables() {
        let g = parse_ntriples(
            "<urn:a1> <urn:for> <urn:q1> .\n<urn:a1> <urn:ok> \"true\"^^<http://www.w3.org/2001/XMLSchema#boolean> .\n\
             <urn:a2> <urn:for> <urn:q2> .\n<urn:a2> <urn:ok> \"false\"^^<http://www.w3.org/2001/XMLSchema#boolean> .\n",
        )
        .unwrap();
        let plan = Plan::new()
            .then(var("a"), Term::iri("urn:ok").unwrap(), Term::boolean(true))
            .then(var("a"), Term::iri("urn:for").unwrap(), var("q"));
        let rows = plan.execute(&g);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0]["q"].value(), "urn:q1");
    }

    #[test]
    fn repeated_variable_in_one_pattern() {
        let g = parse_ntriples("<urn:a> <urn:p> <urn:a> .\n<urn:a> <urn:p> <urn:b> .\n").unwrap();
        let rows = Plan::new().then(var("x"), Term::iri("urn:p").unwrap(), var("x")).execute(&g);
        assert_eq!(rows.len(), 1);
    }
}
