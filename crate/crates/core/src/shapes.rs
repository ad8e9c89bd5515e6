//! SHACL-style shape validation for evaluation graphs.
//!
//! Shapes target instances of a class and constrain property values. Most
//! constraints map to SHACL Core; three (language agreement with
//! `dcterms:language`, one text per study language, and conditional absence)
//! are exported as SHACL-SPARQL constraints.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::DateTime;

use crate::graph::{
    write_turtle, Graph, Term, Triple, TriplePattern, RDF_LANG_STRING, XSD_BOOLEAN, XSD_DATE_TIME,
    XSD_INTEGER, XSD_STRING,
};
use crate::studydef::ConditionKind;
use crate::vocab::{iri, node, standard_prefixes};

pub const SH_NS: &str = "http://www.w3.org/ns/shacl#";
pub const SHAPES_NS: &str = "http://purl.org/sqare/shapes#";

/// Pipeline stage a graph is validated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeStage {
    /// After `run`: answers exist, validation results may not.
    Collected,
    /// After `judge`: every answer has exactly one validation result.
    Judged,
}

impl std::str::FromStr for ShapeStage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "collected" => Ok(Self::Collected),
            "judged" => Ok(Self::Judged),
            other => Err(format!("unknown stage {other:?} (expected collected or judged)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Path {
    Predicate(String),
    /// Subjects pointing at the focus node through this predicate.
    Inverse(String),
}

impl Path {
    fn values<'g>(&self, graph: &'g Graph, focus: &Term) -> Vec<&'g Term> {
        match self {
            Path::Predicate(p) => graph.objects(focus, &node(p)),
            Path::Inverse(p) => graph.subjects(&node(p), focus),
        }
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Path::Predicate(p) => write!(f, "<{p}>"),
            Path::Inverse(p) => write!(f, "^<{p}>"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Iri,
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    MinCount(usize),
    MaxCount(usize),
    Datatype(String),
    NodeKind(NodeKind),
    /// Value is an IRI typed (rdf:type) with the class in the same graph.
    Class(String),
    LanguageIn(Vec<String>),
    In(Vec<Term>),
    /// Exactly one value per listed language tag.
    OnePerLanguage(Vec<String>),
    /// Language tag of every value equals the focus node's plain literal at
    /// `language_property`.
    LanguageMatches { language_property: String },
    /// Property must have no values when the focus links through `link` to a
    /// node whose `key` equals `value`.
    AbsentWhen { link: String, key: String, value: Term },
}

impl Constraint {
    pub fn component(&self) -> &'static str {
        match self {
            Constraint::MinCount(_) => "sh:MinCountConstraintComponent",
            Constraint::MaxCount(_) => "sh:MaxCountConstraintComponent",
            Constraint::Datatype(_) => "sh:DatatypeConstraintComponent",
            Constraint::NodeKind(_) => "sh:NodeKindConstraintComponent",
            Constraint::Class(_) => "sh:ClassConstraintComponent",
            Constraint::LanguageIn(_) => "sh:LanguageInConstraintComponent",
            Constraint::In(_) => "sh:InConstraintComponent",
            Constraint::OnePerLanguage(_) => "sh:QualifiedValueShapeConstraintComponent",
            Constraint::LanguageMatches { .. } => "sqare:LanguageMatchesConstraintComponent",
            Constraint::AbsentWhen { .. } => "sqare:AbsentWhenConstraintComponent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyShape {
    pub path: Path,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    pub name: String,
    pub target_class: String,
    pub properties: Vec<PropertyShape>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub focus: Term,
    pub path: Path,
    pub component: String,
    pub value: Option<Term>,
    pub shape: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} [{}]: {}", self.focus.to_ntriples(), self.path, self.component, self.shape, self.message)
    }
}

fn prop(path: &str, constraints: Vec<Constraint>) -> PropertyShape {
    PropertyShape { path: Path::Predicate(path.to_string()), constraints }
}

fn one() -> [Constraint; 2] {
    [Constraint::MinCount(1), Constraint::MaxCount(1)]
}

fn exactly_one(extra: impl IntoIterator<Item = Constraint>) -> Vec<Constraint> {
    one().into_iter().chain(extra).collect()
}

fn datatype(dt: &str) -> Constraint {
    Constraint::Datatype(dt.to_string())
}

fn class(c: &str) -> Constraint {
    Constraint::Class(c.to_string())
}

/// Built-in shapes for the default study languages `de` and `en`.
pub fn builtin_shapes(stage: ShapeStage) -> Vec<Shape> {
    builtin_shapes_for(stage, &["de".to_string(), "en".to_string()])
}

/// Built-in shapes parameterised by the study's languages.
pub fn builtin_shapes_for(stage: ShapeStage, languages: &[String]) -> Vec<Shape> {
    let languages: Vec<String> = languages.to_vec();
    let language_terms = languages.iter().map(|l| Term::string(l.clone())).collect();
    let mut validation_link = vec![class(iri::VALIDATION_RESULT), Constraint::MaxCount(1)];
    if stage == ShapeStage::Judged {
        validation_link.push(Constraint::MinCount(1));
    }
    let answer = Shape {
        name: "AnswerShape".into(),
        target_class: iri::ANSWER.into(),
        properties: vec![
            prop(iri::HAS_GIVEN_FOR, exactly_one([Constraint::NodeKind(NodeKind::Iri), class(iri::QUESTION)])),
            prop(
                iri::HAS_TEXT,
                exactly_one([
                    datatype(RDF_LANG_STRING),
                    Constraint::LanguageIn(languages.clone()),
                    Constraint::LanguageMatches { language_property: iri::DC_LANGUAGE.into() },
                ]),
            ),
            prop(iri::DC_LANGUAGE, exactly_one([datatype(XSD_STRING), Constraint::In(language_terms)])),
            prop(iri::HAS_CONTEXT_SETTING, exactly_one([class(iri::CONTEXT_SETTING)])),
            prop(
                iri::HAS_USED_MATERIAL,
                vec![
                    class(iri::MATERIAL),
                    Constraint::AbsentWhen {
                        link: iri::HAS_CONTEXT_SETTING.into(),
                        key: iri::CONDITION_NAME.into(),
                        value: Term::string(ConditionKind::NoContext.as_str()),
                    },
                ],
            ),
            prop(iri::HAS_VALIDATION_RESULT, validation_link),
            prop(iri::PROV_WAS_ATTRIBUTED_TO, exactly_one([class(iri::MODEL)])),
            prop(iri::PROV_GENERATED_AT_TIME, exactly_one([datatype(XSD_DATE_TIME)])),
            prop(iri::PART_OF_RUN, exactly_one([class(iri::EXPERIMENT_RUN)])),
            prop(iri::IS_ERROR_TRIAL, exactly_one([datatype(XSD_BOOLEAN)])),
            prop(iri::LATENCY_MS, vec![Constraint::MaxCount(1), datatype(XSD_INTEGER)]),
        ],
    };
    let validation = Shape {
        name: "ValidationResultShape".into(),
        target_class: iri::VALIDATION_RESULT.into(),
        properties: vec![
            PropertyShape {
                path: Path::Inverse(iri::HAS_VALIDATION_RESULT.into()),
                constraints: exactly_one([class(iri::ANSWER)]),
            },
            prop(iri::IS_VALID, exactly_one([datatype(XSD_BOOLEAN)])),
            prop(iri::MATCHES_FACTUAL, exactly_one([datatype(XSD_BOOLEAN)])),
            prop(iri::MATCHES_CONTEXT, vec![Constraint::MaxCount(1), datatype(XSD_BOOLEAN)]),
            prop(iri::SHOWS_KNOWLEDGE_LEAKAGE, vec![Constraint::MaxCount(1), datatype(XSD_BOOLEAN)]),
            prop(iri::ABSTAINED, vec![Constraint::MaxCount(1), datatype(XSD_BOOLEAN)]),
            prop(
                iri::VALIDATION_METHOD,
                exactly_one([Constraint::In(vec![Term::string("auto"), Term::string("human")])]),
            ),
            prop(iri::RATIONALE, vec![Constraint::MaxCount(1), datatype(XSD_STRING)]),
        ],
    };
    let question = Shape {
        name: "QuestionShape".into(),
        target_class: iri::QUESTION.into(),
        properties: vec![
            prop(iri::QUESTION_ID, exactly_one([datatype(XSD_STRING)])),
            prop(
                iri::HAS_TEXT,
                vec![
                    datatype(RDF_LANG_STRING),
                    Constraint::LanguageIn(languages.clone()),
                    Constraint::OnePerLanguage(languages.clone()),
                ],
            ),
            prop(iri::REFERENCES_MATERIAL, vec![class(iri::MATERIAL)]),
        ],
    };
    let material = Shape {
        name: "MaterialShape".into(),
        target_class: iri::MATERIAL.into(),
        properties: vec![
            prop(iri::MATERIAL_ID, exactly_one([datatype(XSD_STRING)])),
            prop(iri::HAS_TEXT, vec![Constraint::MinCount(1), datatype(RDF_LANG_STRING)]),
            prop(iri::HAS_TITLE, vec![datatype(RDF_LANG_STRING)]),
        ],
    };
    let model = Shape {
        name: "ModelShape".into(),
        target_class: iri::MODEL.into(),
        properties: vec![prop(iri::MODEL_NAME, exactly_one([datatype(XSD_STRING)]))],
    };
    let context = Shape {
        name: "ContextSettingShape".into(),
        target_class: iri::CONTEXT_SETTING.into(),
        properties: vec![prop(
            iri::CONDITION_NAME,
            exactly_one([Constraint::In(
                ConditionKind::ALL.iter().map(|c| Term::string(c.as_str())).collect(),
            )]),
        )],
    };
    let run = Shape {
        name: "ExperimentRunShape".into(),
        target_class: iri::EXPERIMENT_RUN.into(),
        properties: vec![
            prop(iri::RUN_ID, exactly_one([datatype(XSD_STRING)])),
            prop(iri::USES_MODEL, vec![Constraint::MinCount(1), class(iri::MODEL)]),
        ],
    };
    vec![answer, validation, question, material, model, context, run]
}

fn lexical_ok(literal: &crate::graph::Literal) -> bool {
    let lex = literal.lexical();
    match literal.datatype() {
        XSD_BOOLEAN => literal.as_bool().is_some(),
        XSD_INTEGER => {
            let digits = lex.strip_prefix(['+', '-']).unwrap_or(lex);
            !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
        }
        XSD_DATE_TIME => DateTime::parse_from_rfc3339(lex).is_ok(),
        _ => true,
    }
}

fn has_datatype(value: &Term, dt: &str) -> bool {
    match value.as_literal() {
        Some(lit) => lit.datatype() == dt && lexical_ok(lit),
        None => false,
    }
}

fn show(term: &Term) -> String {
    term.to_ntriples()
}

fn check(
    graph: &Graph,
    focus: &Term,
    shape: &Shape,
    property: &PropertyShape,
    constraint: &Constraint,
    values: &[&Term],
    out: &mut Vec<Violation>,
) {
    let mut report = |value: Option<&Term>, message: String| {
        out.push(Violation {
            focus: focus.clone(),
            path: property.path.clone(),
            component: constraint.component().to_string(),
            value: value.cloned(),
            shape: shape.name.clone(),
            message,
        })
    };
    let rdf_type = node(iri::RDF_TYPE);
    match constraint {
        Constraint::MinCount(min) if values.len() < *min => {
            report(None, format!("expected at least {min} value(s), found {}", values.len()))
        }
        Constraint::MaxCount(max) if values.len() > *max => {
            report(None, format!("expected at most {max} value(s), found {}", values.len()))
        }
        Constraint::MinCount(_) | Constraint::MaxCount(_) => {}
        Constraint::Datatype(dt) => {
            for v in values.iter().filter(|v| !has_datatype(v, dt)) {
                report(Some(v), format!("value {} is not a valid <{dt}>", show(v)));
            }
        }
        Constraint::NodeKind(kind) => {
            for v in values {
                let ok = match kind {
                    NodeKind::Iri => v.as_iri().is_some(),
                    NodeKind::Literal => v.as_literal().is_some(),
                };
                if !ok {
                    report(Some(v), format!("value {} has the wrong node kind", show(v)));
                }
            }
        }
        Constraint::Class(c) => {
            let class = node(c);
            for v in values {
                let typed = !matches!(v, Term::Literal(_))
                    && graph.contains(&Triple { subject: (*v).clone(), predicate: rdf_type.clone(), object: class.clone() });
                if !typed {
                    report(Some(v), format!("value {} is not an instance of <{c}>", show(v)));
                }
            }
        }
        Constraint::LanguageIn(tags) => {
            for v in values {
                let lang = v.as_literal().and_then(|l| l.language());
                if !lang.is_some_and(|l| tags.iter().any(|t| t == l)) {
                    report(Some(v), format!("language of {} not in {tags:?}", show(v)));
                }
            }
        }
        Constraint::In(allowed) => {
            for v in values.iter().filter(|v| !allowed.contains(v)) {
                report(Some(v), format!("value {} is not an allowed value", show(v)));
            }
        }
        Constraint::OnePerLanguage(tags) => {
            for tag in tags {
                let count =
                    values.iter().filter(|v| v.as_literal().and_then(|l| l.language()) == Some(tag)).count();
                if count != 1 {
                    report(None, format!("expected exactly one @{tag} value, found {count}"));
                }
            }
        }
        Constraint::LanguageMatches { language_property } => {
            let declared: Vec<&str> = graph
                .objects(focus, &node(language_property))
                .into_iter()
                .filter_map(|t| t.as_literal().map(|l| l.lexical()))
                .collect();
            let [declared] = declared.as_slice() else {
                return;
            };
            for v in values {
                let lang = v.as_literal().and_then(|l| l.language());
                if lang != Some(*declared) {
                    report(
                        Some(v),
                        format!("language tag of {} differs from declared language {declared:?}", show(v)),
                    );
                }
            }
        }
        Constraint::AbsentWhen { link, key, value } => {
            let triggered = graph
                .objects(focus, &node(link))
                .into_iter()
                .any(|target| graph.objects(target, &node(key)).contains(&value));
            if triggered {
                for v in values {
                    report(Some(v), format!("value {} must be absent when <{key}> is {}", show(v), show(value)));
                }
            }
        }
    }
}

/// All violations of `shapes` in `graph`, sorted by focus node, path and
/// component. An empty result means the graph conforms.
pub fn validate(graph: &Graph, shapes: &[Shape]) -> Vec<Violation> {
    let mut out = Vec::new();
    for shape in shapes {
        let focus_nodes: BTreeSet<&Term> = graph.subjects_of_type(&node(&shape.target_class)).into_iter().collect();
        for focus in focus_nodes {
            for property in &shape.properties {
                let values = property.path.values(graph, focus);
                for constraint in &property.constraints {
                    check(graph, focus, shape, property, constraint, &values, &mut out);
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

pub fn render_violations(violations: &[Violation]) -> String {
    violations.iter().map(|v| format!("{v}\n")).collect()
}

struct Export {
    graph: Graph,
    next_blank: usize,
}

impl Export {
    fn blank(&mut self) -> Term {
        self.next_blank += 1;
        Term::blank(format!("b{}", self.next_blank)).expect("valid blank id")
    }

    fn add(&mut self, s: &Term, p: &str, o: Term) {
        self.graph.add(s, &node(p), o);
    }

    fn list(&mut self, items: Vec<Term>) -> Term {
        let nil = node(&format!("{}nil", crate::graph::RDF_NS));
        let mut head = nil;
        for item in items.into_iter().rev() {
            let cell = self.blank();
            self.add(&cell, &format!("{}first", crate::graph::RDF_NS), item);
            self.add(&cell, &format!("{}rest", crate::graph::RDF_NS), head);
            head = cell;
        }
        head
    }

    fn sparql(&mut self, shape: &Term, message: &str, select: String) {
        let constraint = self.blank();
        self.add(shape, &format!("{SH_NS}sparql"), constraint.clone());
        self.add(&constraint, &format!("{SH_NS}message"), Term::string(message));
        self.add(&constraint, &format!("{SH_NS}select"), Term::string(select));
    }
}

fn sh(local: &str) -> String {
    format!("{SH_NS}{local}")
}

/// The shapes as a SHACL graph (Core plus SHACL-SPARQL for the three
/// non-core constraints).
pub fn shapes_graph(shapes: &[Shape]) -> Graph {
    let mut ex = Export { graph: Graph::new(), next_blank: 0 };
    for shape in shapes {
        let subject = node(&format!("{SHAPES_NS}{}", shape.name));
        ex.add(&subject, iri::RDF_TYPE, node(&sh("NodeShape")));
        ex.add(&subject, &sh("targetClass"), node(&shape.target_class));
        for property in &shape.properties {
            let ps = ex.blank();
            ex.add(&subject, &sh("property"), ps.clone());
            let predicate = match &property.path {
                Path::Predicate(p) => {
                    ex.add(&ps, &sh("path"), node(p));
                    p.clone()
                }
                Path::Inverse(p) => {
                    let inverse = ex.blank();
                    ex.add(&inverse, &sh("inversePath"), node(p));
                    ex.add(&ps, &sh("path"), inverse);
                    format!("^<{p}>")
                }
            };
            for constraint in &property.constraints {
                match constraint {
                    Constraint::MinCount(n) => ex.add(&ps, &sh("minCount"), Term::integer(*n as i64)),
                    Constraint::MaxCount(n) => ex.add(&ps, &sh("maxCount"), Term::integer(*n as i64)),
                    Constraint::Datatype(dt) => ex.add(&ps, &sh("datatype"), node(dt)),
                    Constraint::NodeKind(kind) => {
                        let k = match kind {
                            NodeKind::Iri => "IRI",
                            NodeKind::Literal => "Literal",
                        };
                        ex.add(&ps, &sh("nodeKind"), node(&sh(k)))
                    }
                    Constraint::Class(c) => ex.add(&ps, &sh("class"), node(c)),
                    Constraint::LanguageIn(tags) => {
                        let list = ex.list(tags.iter().map(|t| Term::string(t.clone())).collect());
                        ex.add(&ps, &sh("languageIn"), list);
                    }
                    Constraint::In(values) => {
                        let list = ex.list(values.clone());
                        ex.add(&ps, &sh("in"), list);
                    }
                    Constraint::OnePerLanguage(tags) => {
                        for tag in tags {
                            let qualified = ex.blank();
                            let value_shape = ex.blank();
                            let list = ex.list(vec![Term::string(tag.clone())]);
                            ex.add(&value_shape, &sh("languageIn"), list);
                            ex.add(&qualified, &sh("path"), node(&predicate));
                            ex.add(&qualified, &sh("qualifiedValueShape"), value_shape);
                            ex.add(&qualified, &sh("qualifiedMinCount"), Term::integer(1));
                            ex.add(&qualified, &sh("qualifiedMaxCount"), Term::integer(1));
                            ex.add(&subject, &sh("property"), qualified);
                        }
                    }
                    Constraint::LanguageMatches { language_property } => ex.sparql(
                        &subject,
                        "language tag differs from the declared language",
                        format!(
                            "SELECT $this ?value WHERE {{ $this <{predicate}> ?value ; <{language_property}> ?lang . \
                             FILTER (LANG(?value) != STR(?lang)) }}"
                        ),
                    ),
                    Constraint::AbsentWhen { link, key, value } => ex.sparql(
                        &subject,
                        "property must be absent for this condition",
                        format!(
                            "SELECT $this ?value WHERE {{ $this <{link}> ?setting ; <{predicate}> ?value . \
                             ?setting <{key}> {} }}",
                            value.to_ntriples()
                        ),
                    ),
                }
            }
        }
    }
    ex.graph
}

pub fn shapes_turtle(shapes: &[Shape]) -> String {
    let mut prefixes = standard_prefixes();
    prefixes.insert("sh".into(), SH_NS.into());
    prefixes.insert("shapes".into(), SHAPES_NS.into());
    write_turtle(&shapes_graph(shapes), &prefixes)
}

/// Counts of violations per shape and component, for summaries.
pub fn summarize(violations: &[Violation]) -> BTreeMap<(String, String), usize> {
    let mut counts = BTreeMap::new();
    for v in violations {
        *counts.entry((v.shape.clone(), v.component.clone())).or_insert(0) += 1;
    }
    counts
}

/// Removes every triple whose subject is `focus` and whose predicate is `predicate`.
pub fn strip(graph: &mut Graph, focus: &Term, predicate: &str) -> usize {
    graph.remove_matching(&TriplePattern::new(Some(focus), Some(&node(predicate)), None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_turtle, XSD_DATE_TIME};

    const VALID: &str = r#"
@prefix s: <http://purl.org/sqare#> .
@prefix prov: <http://www.w3.org/ns/prov#> .
@prefix dcterms: <http://purl.org/dc/terms/> .
@prefix xsd: <http://www.w3.org/2001/XMLSchema#> .
<urn:q1> a s:Question ; s:questionId "q1" ; s:hasText "Wie?"@de , "How?"@en ; s:referencesMaterial <urn:m1> .
<urn:m1> a s:Material ; s:materialId "m1" ; s:hasText "Text"@de .
<urn:gemini> a s:Model ; s:modelName "gemini" .
<urn:run> a s:ExperimentRun ; s:runId "r1" ; s:usesModel <urn:gemini> .
<urn:complete> a s:ContextSetting ; s:conditionName "complete" .
<urn:none> a s:ContextSetting ; s:conditionName "no_context" .
<urn:a1> a s:Answer ; s:hasGivenFor <urn:q1> ; s:hasText "112"@de ; dcterms:language "de" ;
    s:hasContextSetting <urn:complete> ; s:hasUsedMaterial <urn:m1> ; s:hasValidationResult <urn:a1v> ;
    prov:wasAttributedTo <urn:gemini> ; prov:generatedAtTime "2025-01-01T00:00:00Z"^^xsd:dateTime ;
    s:partOfRun <urn:run> ; s:isErrorTrial false ; s:latencyMs 5 .
<urn:a1v> a s:ValidationResult ; s:isValid true ; s:matchesFactual true ; s:matchesContext true ;
    s:validationMethod "auto" .
<urn:a2> a s:Answer ; s:hasGivenFor <urn:q1> ; s:hasText "911"@en ; dcterms:language "en" ;
    s:hasContextSetting <urn:none> ; s:hasValidationResult <urn:a2v> ;
    prov:wasAttributedTo <urn:gemini> ; prov:generatedAtTime "2025-01-01T00:00:00Z"^^xsd:dateTime ;
    s:partOfRun <urn:run> ; s:isErrorTrial false .
<urn:a2v> a s:ValidationResult ; s:isValid false ; s:matchesFactual false ; s:validationMethod "human" .
"#;

    fn graph() -> Graph {
        parse_turtle(VALID).unwrap()
    }

    fn judged(g: &Graph) -> Vec<Violation> {
        validate(g, &builtin_shapes(ShapeStage::Judged))
    }

    fn components(violations: &[Violation]) -> Vec<&str> {
        violations.iter().map(|v| v.component.as_str()).collect()
    }

    fn sq(local: &str) -> String {
        format!("http://purl.org/sqare#{local}")
    }

    #[test]
    fn valid_graph_conforms() {
        assert_eq!(judged(&graph()), vec![]);
    }

    #[test]
    fn missing_given_for() {
        let mut g = graph();
        strip(&mut g, &node("urn:a1"), &sq("hasGivenFor"));
        let v = judged(&g);
        assert_eq!(components(&v), ["sh:MinCountConstraintComponent"]);
        assert_eq!(v[0].focus, node("urn:a1"));
    }

    #[test]
    fn wrong_language_tag() {
        let mut g = graph();
        strip(&mut g, &node("urn:a1"), &sq("hasText"));
        g.add(&node("urn:a1"), &node(&sq("hasText")), Term::lang_string("112", "en").unwrap());
        let v = judged(&g);
        assert_eq!(components(&v), ["sqare:LanguageMatchesConstraintComponent"]);
    }

    #[test]
    fn validation_result_shared_by_two_answers() {
        let mut g = graph();
        strip(&mut g, &node("urn:a2"), &sq("hasValidationResult"));
        g.add(&node("urn:a2"), &node(&sq("hasValidationResult")), node("urn:a1v"));
        let v = judged(&g);
        let mine: Vec<_> = v.iter().filter(|v| v.focus == node("urn:a1v")).collect();
        assert_eq!(mine.len(), 1);
        assert_eq!(mine[0].component, "sh:MaxCountConstraintComponent");
        assert!(matches!(mine[0].path, Path::Inverse(_)));
    }

    #[test]
    fn material_under_no_context() {
        let mut g = graph();
        g.add(&node("urn:a2"), &node(&sq("hasUsedMaterial")), node("urn:m1"));
        let v = judged(&g);
        assert_eq!(components(&v), ["sqare:AbsentWhenConstraintComponent"]);
        assert_eq!(v[0].value, Some(node("urn:m1")));
    }

    #[test]
    fn non_boolean_is_valid() {
        let mut g = graph();
        strip(&mut g, &node("urn:a1v"), &sq("isValid"));
        g.add(&node("urn:a1v"), &node(&sq("isValid")), Term::string("yes"));
        assert_eq!(components(&judged(&g)), ["sh:DatatypeConstraintComponent"]);

        let mut g = graph();
        strip(&mut g, &node("urn:a1v"), &sq("isValid"));
        g.add(&node("urn:a1v"), &node(&sq("isValid")), Term::typed("maybe", XSD_BOOLEAN).unwrap());
        assert_eq!(components(&judged(&g)), ["sh:DatatypeConstraintComponent"]);
    }

    #[test]
    fn dangling_question_link() {
        let mut g = graph();
        strip(&mut g, &node("urn:a1"), &sq("hasGivenFor"));
        g.add(&node("urn:a1"), &node(&sq("hasGivenFor")), node("urn:q404"));
        assert_eq!(components(&judged(&g)), ["sh:ClassConstraintComponent"]);
    }

    #[test]
    fn deleted_validation_link_depends_on_stage() {
        let mut g = graph();
        strip(&mut g, &node("urn:a1"), &sq("hasValidationResult"));
        let v = judged(&g);
        assert_eq!(v.len(), 2);
        assert!(v.iter().any(|x| x.focus == node("urn:a1")));
        assert!(v.iter().any(|x| x.focus == node("urn:a1v")));

        let mut collected = graph();
        for a in ["urn:a1", "urn:a2"] {
            strip(&mut collected, &node(a), &sq("hasValidationResult"));
        }
        collected.remove_matching(&TriplePattern::new(None, None, Some(&node(&sq("ValidationResult")))));
        assert_eq!(validate(&collected, &builtin_shapes(ShapeStage::Collected)), vec![]);
        assert_eq!(validate(&collected, &builtin_shapes(ShapeStage::Judged)).len(), 2);
    }

    #[test]
    fn question_needs_one_text_per_language() {
        let mut g = graph();
        g.add(&node("urn:q1"), &node(&sq("hasText")), Term::lang_string("Wieso?", "de").unwrap());
        let v = judged(&g);
        assert_eq!(components(&v), ["sh:QualifiedValueShapeConstraintComponent"]);
        assert!(v[0].message.contains("@de"));
    }

    #[test]
    fn bad_date_time_detected() {
        let mut g = graph();
        strip(&mut g, &node("urn:a1"), iri::PROV_GENERATED_AT_TIME);
        g.add(&node("urn:a1"), &node(iri::PROV_GENERATED_AT_TIME), Term::typed("yesterday", XSD_DATE_TIME).unwrap());
        assert_eq!(components(&judged(&g)), ["sh:DatatypeConstraintComponent"]);
    }

    #[test]
    fn output_is_sorted_and_stable() {
        let mut g = graph();
        for a in ["urn:a1", "urn:a2"] {
            strip(&mut g, &node(a), &sq("partOfRun"));
            strip(&mut g, &node(a), &sq("isErrorTrial"));
        }
        let v = judged(&g);
        assert_eq!(v.len(), 4);
        let mut sorted = v.clone();
        sorted.sort();
        assert_eq!(v, sorted);
        assert_eq!(v, judged(&g));
    }

    #[test]
    fn shacl_export_parses_back() {
        let text = shapes_turtle(&builtin_shapes(ShapeStage::Judged));
        let g = parse_turtle(&text).unwrap();
        assert_eq!(g.subjects_of_type(&node(&sh("NodeShape"))).len(), 7);
        assert_eq!(g, shapes_graph(&builtin_shapes(ShapeStage::Judged)));
        assert_eq!(g.match_pattern(&TriplePattern::new(None, Some(&node(&sh("sparql"))), None)).len(), 2);
    }
}
