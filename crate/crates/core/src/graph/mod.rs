//! RDF term model, an indexed in-memory triple set, N-Triples and Turtle
//! serialization, and triple-pattern matching.
//!
//! Iteration and every serialization follow the canonical N-Triples ordering of
//! terms, so output is byte-reproducible for a given triple set.

mod iso;
mod ntriples;
pub mod query;
mod term;
mod turtle;

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

pub use iso::{isomorphic, MAX_BLANK_NODES};
pub use ntriples::{parse_ntriples, write_ntriples};
pub use term::*;
pub use turtle::{parse_turtle, write_turtle, PrefixMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid IRI: {0}")]
    InvalidIri(String),
    #[error("invalid language tag {0:?}")]
    InvalidLanguageTag(String),
    #[error("invalid blank node id {0:?}")]
    InvalidBlankNode(String),
    #[error("invalid literal: {0}")]
    InvalidLiteral(String),
    #[error("invalid triple: {0}")]
    InvalidTriple(String),
    #[error("parse error at line {line}, column {column} near {token:?}: {message}")]
    Parse { line: usize, column: usize, token: String, message: String },
    #[error("unsupported Turtle construct at line {line}, column {column}: {construct}")]
    Unsupported { line: usize, column: usize, construct: String },
    #[error("isomorphism check limited to {limit} blank nodes, got {count}")]
    BlankNodeBound { count: usize, limit: usize },
}

/// A triple pattern; `None` positions are wildcards.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TriplePattern {
    pub subject: Option<Term>,
    pub predicate: Option<Term>,
    pub object: Option<Term>,
}

impl TriplePattern {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn new(subject: Option<&Term>, predicate: Option<&Term>, object: Option<&Term>) -> Self {
        Self { subject: subject.cloned(), predicate: predicate.cloned(), object: object.cloned() }
    }

    pub fn matches(&self, triple: &Triple) -> bool {
        self.subject.as_ref().is_none_or(|s| *s == triple.subject)
            && self.predicate.as_ref().is_none_or(|p| *p == triple.predicate)
            && self.object.as_ref().is_none_or(|o| *o == triple.object)
    }
}

/// Set of triples with subject, predicate and object indexes.
///
/// Mutation takes `&mut self`; shared references may be read concurrently.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    triples: BTreeSet<Triple>,
    by_subject: HashMap<Term, BTreeSet<Triple>>,
    by_predicate: HashMap<Term, BTreeSet<Triple>>,
    by_object: HashMap<Term, BTreeSet<Triple>>,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.triples == other.triples
    }
}

impl Eq for Graph {}

fn index_insert(index: &mut HashMap<Term, BTreeSet<Triple>>, key: &Term, triple: &Triple) {
    index.entry(key.clone()).or_default().insert(triple.clone());
}

fn index_remove(index: &mut HashMap<Term, BTreeSet<Triple>>, key: &Term, triple: &Triple) {
    if let Some(set) = index.get_mut(key) {
        set.remove(triple);
        if set.is_empty() {
            index.remove(key);
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triples.contains(triple)
    }

    /// Returns `true` when the triple was not already present.
    pub fn insert(&mut self, triple: Triple) -> bool {
        if self.triples.contains(&triple) {
            return false;
        }
        index_insert(&mut self.by_subject, &triple.subject, &triple);
        index_insert(&mut self.by_predicate, &triple.predicate, &triple);
        index_insert(&mut self.by_object, &triple.object, &triple);
        self.triples.insert(triple)
    }

    /// Builds and inserts a triple from parts. Panics on a literal subject or
    /// non-IRI predicate, which only internal emitters call with.
    pub fn add(&mut self, subject: &Term, predicate: &Term, object: Term) -> bool {
        let triple = Triple::new(subject.clone(), predicate.clone(), object)
            .expect("emitters build well-formed triples");
        self.insert(triple)
    }

    /// Returns `true` when the triple was present.
    pub fn remove(&mut self, triple: &Triple) -> bool {
        if !self.triples.remove(triple) {
            return false;
        }
        index_remove(&mut self.by_subject, &triple.subject, triple);
        index_remove(&mut self.by_predicate, &triple.predicate, triple);
        index_remove(&mut self.by_object, &triple.object, triple);
        true
    }

    /// Removes every triple matching the pattern; returns how many went.
    pub fn remove_matching(&mut self, pattern: &TriplePattern) -> usize {
        let doomed: Vec<Triple> = self.match_pattern(pattern).into_iter().cloned().collect();
        for triple in &doomed {
            self.remove(triple);
        }
        doomed.len()
    }

    pub fn extend(&mut self, triples: impl IntoIterator<Item = Triple>) {
        for triple in triples {
            self.insert(triple);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    /// Matching triples in canonical order.
    pub fn match_pattern(&self, pattern: &TriplePattern) -> Vec<&Triple> {
        let candidates = [
            pattern.subject.as_ref().map(|s| self.by_subject.get(s)),
            pattern.predicate.as_ref().map(|p| self.by_predicate.get(p)),
            pattern.object.as_ref().map(|o| self.by_object.get(o)),
        ];
        let mut smallest: Option<&BTreeSet<Triple>> = None;
        for candidate in candidates.into_iter().flatten() {
            match candidate {
                None => return Vec::new(),
                Some(set) if smallest.is_none_or(|s| set.len() < s.len()) => smallest = Some(set),
                Some(_) => {}
            }
        }
        smallest
            .unwrap_or(&self.triples)
            .iter()
            .filter(|t| pattern.matches(t))
            .collect()
    }

    pub fn objects(&self, subject: &Term, predicate: &Term) -> Vec<&Term> {
        self.match_pattern(&TriplePattern::new(Some(subject), Some(predicate), None))
            .into_iter()
            .map(|t| &t.object)
            .collect()
    }

    /// The single object of `(subject, predicate, ?)`, if exactly one exists.
    pub fn object(&self, subject: &Term, predicate: &Term) -> Option<&Term> {
        match self.objects(subject, predicate).as_slice() {
            [only] => Some(only),
            _ => None,
        }
    }

    pub fn subjects(&self, predicate: &Term, object: &Term) -> Vec<&Term> {
        self.match_pattern(&TriplePattern::new(None, Some(predicate), Some(object)))
            .into_iter()
            .map(|t| &t.subject)
            .collect()
    }

    pub fn subjects_of_type(&self, class: &Term) -> Vec<&Term> {
        self.subjects(&Term::Iri(RDF_TYPE.to_string()), class)
    }

    pub fn has_subject(&self, subject: &Term) -> bool {
        self.by_subject.contains_key(subject)
    }

    pub fn has_node(&self, node: &Term) -> bool {
        self.by_subject.contains_key(node) || self.by_object.contains_key(node)
    }
}

impl FromIterator<Triple> for Graph {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        let mut graph = Graph::new();
        graph.extend(iter);
        graph
    }
}

impl<'a> IntoIterator for &'a Graph {
    type Item = &'a Triple;
    type IntoIter = std::collections::btree_set::Iter<'a, Triple>;

    fn into_iter(self) -> Self::IntoIter {
        self.triples.iter()
    }
}
