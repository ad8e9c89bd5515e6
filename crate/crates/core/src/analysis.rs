//! Metrics over a judged graph: accuracy, knowledge leakage, error
//! replication, cross-lingual consistency and paired contingency tables.
//!
//! The graph is validated once; every metric is then computed from the rows
//! of one fixed basic graph pattern.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use num_rational::BigRational;
use thiserror::Error;

use crate::graph::query::{var, Bindings, Plan};
use crate::graph::{Graph, Term};
use crate::shapes::{validate, Shape, Violation};
use crate::stats::{format_rational, ContingencyTable};
use crate::studydef::ConditionKind;
use crate::vocab::{iri, node};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("graph does not conform to the shapes ({} violation(s))", .0.len())]
    NonConforming(Vec<Violation>),
    #[error("unknown condition {0:?} in graph")]
    UnknownCondition(String),
    #[error("no answers for model {0:?}")]
    UnknownModel(String),
    #[error("question {question} ({language}, {condition}) has an answer from {present} but not from {missing}")]
    MissingPair { question: String, language: String, condition: ConditionKind, present: String, missing: String },
    #[error("more than one answer for {question}/{model}/{language}/{condition}")]
    DuplicateAnswer { question: String, model: String, language: String, condition: ConditionKind },
}

/// One judged answer, flattened.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Observation {
    pub question_id: String,
    pub model: String,
    pub language: String,
    pub condition: ConditionKind,
    pub is_valid: bool,
    pub matches_factual: bool,
    pub matches_context: Option<bool>,
    pub leakage: Option<bool>,
    pub is_error: bool,
}

/// `count` out of `total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Rate {
    pub count: u64,
    pub total: u64,
}

impl Rate {
    pub fn value(&self) -> Option<f64> {
        (self.total > 0).then(|| self.count as f64 / self.total as f64)
    }

    pub fn ratio(&self) -> Option<BigRational> {
        (self.total > 0).then(|| BigRational::new(self.count.into(), self.total.into()))
    }

    /// Percentage with one decimal, e.g. `92.9`; `NA` when empty.
    pub fn percent(&self) -> String {
        match self.ratio() {
            Some(r) => format_rational(&(r * BigRational::from_integer(100.into())), 1),
            None => "NA".into(),
        }
    }

    pub fn display(&self) -> String {
        match self.total {
            0 => "NA".into(),
            _ => format!("{}% ({}/{})", self.percent(), self.count, self.total),
        }
    }

    fn add(&mut self, hit: bool) {
        self.total += 1;
        if hit {
            self.count += 1;
        }
    }
}

fn observation_plan() -> Plan {
    Plan::new()
        .then(var("a"), node(iri::RDF_TYPE), node(iri::ANSWER))
        .then(var("a"), node(iri::HAS_GIVEN_FOR), var("q"))
        .then(var("q"), node(iri::QUESTION_ID), var("qid"))
        .then(var("a"), node(iri::PROV_WAS_ATTRIBUTED_TO), var("m"))
        .then(var("m"), node(iri::MODEL_NAME), var("model"))
        .then(var("a"), node(iri::DC_LANGUAGE), var("lang"))
        .then(var("a"), node(iri::HAS_CONTEXT_SETTING), var("c"))
        .then(var("c"), node(iri::CONDITION_NAME), var("cond"))
        .then(var("a"), node(iri::IS_ERROR_TRIAL), var("err"))
        .then(var("a"), node(iri::HAS_VALIDATION_RESULT), var("v"))
        .then(var("v"), node(iri::IS_VALID), var("valid"))
        .then(var("v"), node(iri::MATCHES_FACTUAL), var("factual"))
}

fn flag(graph: &Graph, subject: &Term, predicate: &str) -> Option<bool> {
    graph.object(subject, &node(predicate)).and_then(Term::as_bool)
}

fn text(row: &Bindings, name: &str) -> String {
    row[name].value().to_string()
}

pub struct Analyzer {
    observations: Vec<Observation>,
}

impl Analyzer {
    /// Validates `graph` against `shapes` and extracts observations.
    pub fn new(graph: &Graph, shapes: &[Shape]) -> Result<Self, AnalysisError> {
        let violations = validate(graph, shapes);
        if !violations.is_empty() {
            return Err(AnalysisError::NonConforming(violations));
        }
        let mut observations = Vec::new();
        for row in observation_plan().execute(graph) {
            let cond = text(&row, "cond");
            let condition = cond.parse().map_err(|_| AnalysisError::UnknownCondition(cond))?;
            let v = &row["v"];
            observations.push(Observation {
                question_id: text(&row, "qid"),
                model: text(&row, "model"),
                language: text(&row, "lang"),
                condition,
                is_valid: row["valid"].as_bool().unwrap_or(false),
                matches_factual: row["factual"].as_bool().unwrap_or(false),
                matches_context: flag(graph, v, iri::MATCHES_CONTEXT),
                leakage: flag(graph, v, iri::SHOWS_KNOWLEDGE_LEAKAGE),
                is_error: row["err"].as_bool().unwrap_or(false),
            });
        }
        observations.sort();
        Ok(Self { observations })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn models(&self) -> Vec<String> {
        self.observations.iter().map(|o| o.model.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn languages(&self) -> Vec<String> {
        self.observations.iter().map(|o| o.language.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Share of valid answers per (model, language, condition). Error trials
    /// count as invalid.
    pub fn accuracy_matrix(&self) -> BTreeMap<(String, String, ConditionKind), Rate> {
        let mut matrix: BTreeMap<_, Rate> = BTreeMap::new();
        for o in &self.observations {
            matrix.entry((o.model.clone(), o.language.clone(), o.condition)).or_default().add(o.is_valid);
        }
        matrix
    }

    fn conflicting_rate(&self, hit: impl Fn(&Observation) -> bool) -> BTreeMap<(String, String), Rate> {
        let mut rates: BTreeMap<_, Rate> = BTreeMap::new();
        for o in self.observations.iter().filter(|o| o.condition == ConditionKind::Conflicting) {
            rates.entry((o.model.clone(), o.language.clone())).or_default().add(hit(o));
        }
        rates
    }

    /// Under conflicting context: answers that state the fact and ignore the
    /// supplied claim.
    pub fn leakage_rate(&self) -> BTreeMap<(String, String), Rate> {
        self.conflicting_rate(|o| o.leakage == Some(true))
    }

    /// Under conflicting context: answers that repeat the supplied false claim.
    pub fn error_replication_rate(&self) -> BTreeMap<(String, String), Rate> {
        self.conflicting_rate(|o| o.matches_context == Some(true))
    }

    /// Per (model, condition): share of questions whose validity is the same
    /// in every study language. Questions missing a language are skipped.
    pub fn crosslingual_consistency(&self) -> BTreeMap<(String, ConditionKind), Rate> {
        let languages = self.languages();
        let mut by_question: BTreeMap<(String, ConditionKind, String), BTreeMap<String, bool>> = BTreeMap::new();
        for o in &self.observations {
            by_question
                .entry((o.model.clone(), o.condition, o.question_id.clone()))
                .or_default()
                .insert(o.language.clone(), o.is_valid);
        }
        let mut rates: BTreeMap<_, Rate> = BTreeMap::new();
        for ((model, condition, _), verdicts) in by_question {
            if languages.len() < 2 || verdicts.len() != languages.len() {
                continue;
            }
            let first = *verdicts.values().next().expect("non-empty");
            rates.entry((model, condition)).or_default().add(verdicts.values().all(|v| *v == first));
        }
        rates
    }

    /// Paired 2x2 tables per (language, condition): `a` both valid, `b` only
    /// `model_a` valid, `c` only `model_b` valid, `d` neither. Answers are
    /// paired by question id.
    pub fn build_contingency(
        &self,
        model_a: &str,
        model_b: &str,
    ) -> Result<BTreeMap<(String, ConditionKind), ContingencyTable>, AnalysisError> {
        for model in [model_a, model_b] {
            if !self.observations.iter().any(|o| o.model == model) {
                return Err(AnalysisError::UnknownModel(model.to_string()));
            }
        }
        let mut cells: BTreeMap<(String, ConditionKind, String), [Option<bool>; 2]> = BTreeMap::new();
        for o in self.observations.iter().filter(|o| o.model == model_a || o.model == model_b) {
            let slot = usize::from(o.model != model_a);
            let entry = cells.entry((o.language.clone(), o.condition, o.question_id.clone())).or_default();
            if entry[slot].replace(o.is_valid).is_some() {
                return Err(AnalysisError::DuplicateAnswer {
                    question: o.question_id.clone(),
                    model: o.model.clone(),
                    language: o.language.clone(),
                    condition: o.condition,
                });
            }
        }
        let mut tables: BTreeMap<(String, ConditionKind), [u64; 4]> = BTreeMap::new();
        for ((language, condition, question), pair) in cells {
            let (first, second) = match pair {
                [Some(x), Some(y)] => (x, y),
                [present, _] => {
                    let (present, missing) =
                        if present.is_some() { (model_a, model_b) } else { (model_b, model_a) };
                    return Err(AnalysisError::MissingPair {
                        question,
                        language,
                        condition,
                        present: present.to_string(),
                        missing: missing.to_string(),
                    });
                }
            };
            let counts = tables.entry((language, condition)).or_default();
            let index = match (first, second) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            counts[index] += 1;
        }
        Ok(tables
            .into_iter()
            .map(|(k, [a, b, c, d])| (k, ContingencyTable::new(a, b, c, d).expect("non-empty cell")))
            .collect())
    }

    pub fn report(&self) -> MetricReport {
        MetricReport {
            accuracy: self.accuracy_matrix(),
            leakage: self.leakage_rate(),
            replication: self.error_replication_rate(),
            consistency: self.crosslingual_consistency(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub accuracy: BTreeMap<(String, String, ConditionKind), Rate>,
    pub leakage: BTreeMap<(String, String), Rate>,
    pub replication: BTreeMap<(String, String), Rate>,
    pub consistency: BTreeMap<(String, ConditionKind), Rate>,
}

impl MetricReport {
    fn rows(&self) -> Vec<[String; 5]> {
        let mut rows = Vec::new();
        for ((model, language, condition), rate) in &self.accuracy {
            rows.push(["accuracy".into(), model.clone(), language.clone(), condition.as_str().into(), rate.display()]);
        }
        for ((model, language), rate) in &self.leakage {
            rows.push(["knowledge_leakage".into(), model.clone(), language.clone(), "conflicting".into(), rate.display()]);
        }
        for ((model, language), rate) in &self.replication {
            rows.push(["error_replication".into(), model.clone(), language.clone(), "conflicting".into(), rate.display()]);
        }
        for ((model, condition), rate) in &self.consistency {
            rows.push(["crosslingual_consistency".into(), model.clone(), "*".into(), condition.as_str().into(), rate.display()]);
        }
        rows
    }

    pub fn render_text(&self) -> String {
        let header = ["metric", "model", "language", "condition", "value"];
        let rows = self.rows();
        let mut widths = header.map(str::len);
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let padded: Vec<String> =
                cells.iter().zip(widths).map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count()))).collect();
            out.push_str(padded.join("  ").trim_end());
            out.push('\n');
        };
        line(&header.map(String::from));
        for row in &rows {
            line(row);
        }
        out
    }

    pub fn render_markdown(&self) -> String {
        let mut out = String::from("| Metric | Model | Language | Condition | Value |\n|---|---|---|---|---|\n");
        for row in self.rows() {
            writeln!(out, "| {} |", row.join(" | ")).unwrap();
        }
        out
    }

    /// Unrounded: `count`, `total` and the exact ratio as a float.
    pub fn render_tsv(&self) -> String {
        let mut out = String::from("metric\tmodel\tlanguage\tcondition\tcount\ttotal\tvalue\n");
        let mut push = |metric: &str, model: &str, language: &str, condition: &str, rate: &Rate| {
            let value = rate.value().map_or_else(|| "NA".to_string(), |v| v.to_string());
            writeln!(out, "{metric}\t{model}\t{language}\t{condition}\t{}\t{}\t{value}", rate.count, rate.total).unwrap();
        };
        for ((model, language, condition), rate) in &self.accuracy {
            push("accuracy", model, language, condition.as_str(), rate);
        }
        for ((model, language), rate) in &self.leakage {
            push("knowledge_leakage", model, language, "conflicting", rate);
        }
        for ((model, language), rate) in &self.replication {
            push("error_replication", model, language, "conflicting", rate);
        }
        for ((model, condition), rate) in &self.consistency {
            push("crosslingual_consistency", model, "*", condition.as_str(), rate);
        }
        out
    }
}

const PREFIXES: &str = "PREFIX sqare: <http://purl.org/sqare#>
PREFIX prov: <http://www.w3.org/ns/prov#>
PREFIX dcterms: <http://purl.org/dc/terms/>
";

const ACCURACY_RQ: &str = "
SELECT ?model ?lang ?cond (SUM(IF(?valid, 1, 0)) AS ?validCount) (COUNT(?a) AS ?total)
WHERE {
  ?a a sqare:Answer ;
     prov:wasAttributedTo/sqare:modelName ?model ;
     dcterms:language ?lang ;
     sqare:hasContextSetting/sqare:conditionName ?cond ;
     sqare:hasValidationResult/sqare:isValid ?valid .
}
GROUP BY ?model ?lang ?cond
ORDER BY ?model ?lang ?cond
";

const LEAKAGE_RQ: &str = "
SELECT ?model ?lang (SUM(IF(?leak, 1, 0)) AS ?leaked) (COUNT(?a) AS ?total)
WHERE {
  ?a a sqare:Answer ;
     prov:wasAttributedTo/sqare:modelName ?model ;
     dcterms:language ?lang ;
     sqare:hasContextSetting/sqare:conditionName \"conflicting\" ;
     sqare:hasValidationResult ?v .
  OPTIONAL { ?v sqare:showsKnowledgeLeakage ?l }
  BIND(COALESCE(?l, false) AS ?leak)
}
GROUP BY ?model ?lang
ORDER BY ?model ?lang
";

const REPLICATION_RQ: &str = "
SELECT ?model ?lang (SUM(IF(?repeat, 1, 0)) AS ?replicated) (COUNT(?a) AS ?total)
WHERE {
  ?a a sqare:Answer ;
     prov:wasAttributedTo/sqare:modelName ?model ;
     dcterms:language ?lang ;
     sqare:hasContextSetting/sqare:conditionName \"conflicting\" ;
     sqare:hasValidationResult ?v .
  OPTIONAL { ?v sqare:matchesContext ?m }
  BIND(COALESCE(?m, false) AS ?repeat)
}
GROUP BY ?model ?lang
ORDER BY ?model ?lang
";

const CONSISTENCY_RQ: &str = "
SELECT ?model ?cond (SUM(IF(?agree, 1, 0)) AS ?consistent) (COUNT(?qid) AS ?total)
WHERE {
  {
    SELECT ?model ?cond ?qid (MIN(?v) = MAX(?v) AS ?agree)
    WHERE {
      ?a a sqare:Answer ;
         prov:wasAttributedTo/sqare:modelName ?model ;
         sqare:hasGivenFor/sqare:questionId ?qid ;
         sqare:hasContextSetting/sqare:conditionName ?cond ;
         sqare:hasValidationResult/sqare:isValid ?valid .
      BIND(IF(?valid, 1, 0) AS ?v)
    }
    GROUP BY ?model ?cond ?qid
  }
}
GROUP BY ?model ?cond
ORDER BY ?model ?cond
";

const CONTINGENCY_RQ: &str = "
SELECT ?lang ?cond
       (SUM(IF(?va && ?vb, 1, 0)) AS ?a)
       (SUM(IF(?va && !?vb, 1, 0)) AS ?b)
       (SUM(IF(!?va && ?vb, 1, 0)) AS ?c)
       (SUM(IF(!?va && !?vb, 1, 0)) AS ?d)
WHERE {
  VALUES (?modelA ?modelB) { (\"MODEL_A\" \"MODEL_B\") }
  ?x a sqare:Answer ;
     prov:wasAttributedTo/sqare:modelName ?modelA ;
     sqare:hasGivenFor ?q ;
     dcterms:language ?lang ;
     sqare:hasContextSetting ?setting ;
     sqare:hasValidationResult/sqare:isValid ?va .
  ?y a sqare:Answer ;
     prov:wasAttributedTo/sqare:modelName ?modelB ;
     sqare:hasGivenFor ?q ;
     dcterms:language ?lang ;
     sqare:hasContextSetting ?setting ;
     sqare:hasValidationResult/sqare:isValid ?vb .
  ?setting sqare:conditionName ?cond .
}
GROUP BY ?lang ?cond
ORDER BY ?lang ?cond
";

fn sparql_string(value: &str) -> String {
    let mut out = String::from("\"");
    for c in value.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// SPARQL equivalents of the built-in metrics, for use with an external
/// triple store. The contingency query binds the two models with `VALUES`.
pub fn sparql_queries(model_a: &str, model_b: &str) -> Vec<(&'static str, String)> {
    let contingency = CONTINGENCY_RQ.replace(
        "(\"MODEL_A\" \"MODEL_B\")",
        &format!("({} {})", sparql_string(model_a), sparql_string(model_b)),
    );
    vec![
        ("accuracy.rq", format!("{PREFIXES}{ACCURACY_RQ}")),
        ("leakage_rate.rq", format!("{PREFIXES}{LEAKAGE_RQ}")),
        ("error_replication_rate.rq", format!("{PREFIXES}{REPLICATION_RQ}")),
        ("crosslingual_consistency.rq", format!("{PREFIXES}{CONSISTENCY_RQ}")),
        ("contingency.rq", format!("{PREFIXES}{contingency}")),
    ]
}

/// Writes the queries from [`sparql_queries`] into `dir`.
pub fn emit_sparql_queries(dir: &std::path::Path, model_a: &str, model_b: &str) -> std::io::Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, text) in sparql_queries(model_a, model_b) {
        let path = dir.join(name);
        std::fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{materialize_trials, TrialOutcome, TrialRecord};
    use crate::judge::{judge_graph, ValidityPolicy};
    use crate::shapes::{builtin_shapes, ShapeStage};
    use crate::studydef::{parse_study, tests::tiny_study_json, TrialKey};
    use chrono::{TimeZone, Utc};

    fn judged(answers: &[(&str, &str, ConditionKind, &str)]) -> Graph {
        let study = parse_study(&tiny_study_json().to_string()).unwrap();
        let at = Utc.with_ymd_and_hms(2025, 3, 1, 0, 0, 0).unwrap();
        let records: Vec<TrialRecord> = answers
            .iter()
            .map(|(model, language, condition, text)| TrialRecord {
                key: TrialKey { question_id: "q01".into(), model: model.to_string(), language: language.to_string(), condition: *condition },
                adapter: "scripted".into(),
                fingerprint: "fp".into(),
                outcome: TrialOutcome::Answered(text.to_string()),
                latency_ms: 0,
                attempts: 1,
                generated_at: at,
            })
            .collect();
        let mut graph = materialize_trials(&study, "r", &["m1".into(), "m2".into()], at, &records);
        judge_graph(&mut graph, &study, ValidityPolicy::Factual).unwrap();
        graph
    }

    #[test]
    fn rates_and_pairing() {
        use ConditionKind::*;
        let g = judged(&[
            ("m1", "de", Conflicting, "112"),
            ("m1", "en", Conflicting, "911"),
            ("m2", "de", Conflicting, "911"),
            ("m2", "en", Conflicting, "911"),
        ]);
        let analyzer = Analyzer::new(&g, &builtin_shapes(ShapeStage::Judged)).unwrap();
        let report = analyzer.report();
        let key = |m: &str, l: &str| (m.to_string(), l.to_string());
        assert_eq!(report.leakage[&key("m1", "de")], Rate { count: 1, total: 1 });
        assert_eq!(report.replication[&key("m1", "en")], Rate { count: 1, total: 1 });
        assert_eq!(report.consistency[&("m1".to_string(), Conflicting)], Rate { count: 0, total: 1 });
        assert_eq!(report.consistency[&("m2".to_string(), Conflicting)], Rate { count: 1, total: 1 });
        let tables = analyzer.build_contingency("m1", "m2").unwrap();
        assert_eq!(tables[&("de".to_string(), Conflicting)], ContingencyTable::new(0, 1, 0, 0).unwrap());
        assert_eq!(tables[&("en".to_string(), Conflicting)], ContingencyTable::new(0, 0, 0, 1).unwrap());
        assert!(matches!(analyzer.build_contingency("m1", "m3"), Err(AnalysisError::UnknownModel(_))));
    }

    #[test]
    fn missing_pair_is_an_error() {
        let g = judged(&[("m1", "de", ConditionKind::Complete, "112"), ("m2", "de", ConditionKind::Incomplete, "112")]);
        let analyzer = Analyzer::new(&g, &builtin_shapes(ShapeStage::Judged)).unwrap();
        let err = analyzer.build_contingency("m1", "m2").unwrap_err();
        assert!(
            matches!(&err, AnalysisError::MissingPair { missing, condition: ConditionKind::Complete, .. } if missing == "m2"),
            "{err}"
        );
    }

    #[test]
    fn non_conforming_graph_rejected() {
        let mut g = judged(&[("m1", "de", ConditionKind::Complete, "112")]);
        g.remove_matching(&crate::graph::TriplePattern::new(None, Some(&node(iri::IS_VALID)), None));
        assert!(matches!(Analyzer::new(&g, &builtin_shapes(ShapeStage::Judged)), Err(AnalysisError::NonConforming(v)) if v.len() == 1));
    }

    #[test]
    fn rate_formatting() {
        assert_eq!(Rate { count: 26, total: 28 }.display(), "92.9% (26/28)");
        assert_eq!(Rate { count: 1, total: 8 }.percent(), "12.5");
        assert_eq!(Rate { count: 0, total: 0 }.display(), "NA");
    }

    #[test]
    fn queries_substitute_models() {
        let queries = sparql_queries("gemini-2.0-flash", "say \"hi\"");
        assert_eq!(queries.len(), 5);
        let contingency = &queries[4].1;
        assert!(contingency.contains("VALUES (?modelA ?modelB) { (\"gemini-2.0-flash\" \"say \\\"hi\\\"\") }"));
        assert!(queries.iter().all(|(_, q)| q.starts_with("PREFIX sqare:")));
    }
}
