//! Judging answers: pattern-based auto-judging, human judgment ingestion, and
//! materialization of `ValidationResult` nodes.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::graph::{Graph, Term, TriplePattern};
use crate::studydef::{normalize_text, ConditionKind, Study, StudyError};
use crate::vocab::{iri, node};

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error("answer {answer}: {message}")]
    MalformedAnswer { answer: String, message: String },
    #[error("line {line}: {message}")]
    Tsv { line: usize, message: String },
    #[error("unknown validity policy {0:?} (expected factual or abstention-aware)")]
    UnknownPolicy(String),
}

/// How `isValid` is derived from the match flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidityPolicy {
    /// Valid iff the answer states the ground-truth fact.
    #[default]
    Factual,
    /// As `Factual`, but an abstention under incomplete context is also valid.
    AbstentionAware,
}

impl ValidityPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            ValidityPolicy::Factual => "factual",
            ValidityPolicy::AbstentionAware => "abstention-aware",
        }
    }

    pub fn is_valid(self, condition: ConditionKind, matches_factual: bool, abstained: bool) -> bool {
        match self {
            ValidityPolicy::Factual => matches_factual,
            ValidityPolicy::AbstentionAware => {
                matches_factual || (condition == ConditionKind::Incomplete && abstained)
            }
        }
    }
}

impl FromStr for ValidityPolicy {
    type Err = JudgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "factual" => Ok(Self::Factual),
            "abstention-aware" | "abstention" => Ok(Self::AbstentionAware),
            other => Err(JudgeError::UnknownPolicy(other.to_string())),
        }
    }
}

impl fmt::Display for ValidityPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JudgmentMethod {
    Auto,
    Human,
}

impl JudgmentMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            JudgmentMethod::Auto => "auto",
            JudgmentMethod::Human => "human",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Judgment {
    pub is_valid: bool,
    pub matches_factual: bool,
    /// Absent under no context.
    pub matches_context: Option<bool>,
    /// Present under conflicting context only.
    pub knowledge_leakage: Option<bool>,
    pub abstained: Option<bool>,
    pub method: JudgmentMethod,
    pub policy: ValidityPolicy,
    pub rationale: String,
}

/// Leakage: the answer states the fact while ignoring the conflicting claim.
pub fn leakage(condition: ConditionKind, matches_factual: bool, matches_context: Option<bool>) -> Option<bool> {
    (condition == ConditionKind::Conflicting).then(|| matches_factual && !matches_context.unwrap_or(false))
}

/// The facts auto-judging needs about one answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerFacts {
    pub answer: Term,
    pub question_id: String,
    pub language: String,
    pub condition: ConditionKind,
    pub text: String,
    pub is_error: bool,
}

pub fn auto_judge(study: &Study, facts: &AnswerFacts, policy: ValidityPolicy) -> Result<Judgment, JudgeError> {
    let question = study.question(&facts.question_id)?;
    if facts.is_error {
        return Ok(Judgment {
            is_valid: false,
            matches_factual: false,
            matches_context: facts.condition.has_context().then_some(false),
            knowledge_leakage: leakage(facts.condition, false, Some(false)),
            abstained: Some(false),
            method: JudgmentMethod::Auto,
            policy,
            rationale: "error trial".into(),
        });
    }
    let normalized = normalize_text(&facts.text);
    let fired = |rule: Option<&crate::studydef::MatchRule>| -> Vec<String> {
        rule.filter(|r| r.matches_normalized(&normalized)).map(|r| r.fired(&normalized)).unwrap_or_default()
    };
    let factual_rule = question.factual.get(&facts.language);
    let matches_factual = factual_rule.is_some_and(|r| r.matches_normalized(&normalized));
    let abstained = question.abstention.get(&facts.language).is_some_and(|r| r.matches_normalized(&normalized));
    let claim_rule = question.fragment(facts.condition, &facts.language).map(|f| &f.claim);
    let matches_context = facts
        .condition
        .has_context()
        .then(|| claim_rule.is_some_and(|r| r.matches_normalized(&normalized)));

    let mut rationale = vec![format!("factual {:?}", fired(factual_rule))];
    if matches_context.is_some() {
        rationale.push(format!("context {:?}", fired(claim_rule)));
    }
    if abstained {
        rationale.push(format!("abstention {:?}", fired(question.abstention.get(&facts.language))));
    }
    Ok(Judgment {
        is_valid: policy.is_valid(facts.condition, matches_factual, abstained),
        matches_factual,
        matches_context,
        knowledge_leakage: leakage(facts.condition, matches_factual, matches_context),
        abstained: Some(abstained),
        method: JudgmentMethod::Auto,
        policy,
        rationale: rationale.join("; "),
    })
}

pub fn validation_iri(answer: &Term) -> Term {
    node(&format!("{}/validation", answer.value()))
}

/// Replaces any validation result of `answer` with `judgment`.
pub fn materialize_judgment(graph: &mut Graph, answer: &Term, judgment: &Judgment) -> Term {
    let link = node(iri::HAS_VALIDATION_RESULT);
    let previous: Vec<Term> = graph.objects(answer, &link).into_iter().cloned().collect();
    for old in &previous {
        graph.remove_matching(&TriplePattern::new(Some(old), None, None));
    }
    graph.remove_matching(&TriplePattern::new(Some(answer), Some(&link), None));

    let vr = validation_iri(answer);
    graph.add(answer, &link, vr.clone());
    graph.add(&vr, &node(iri::RDF_TYPE), node(iri::VALIDATION_RESULT));
    graph.add(&vr, &node(iri::IS_VALID), Term::boolean(judgment.is_valid));
    graph.add(&vr, &node(iri::MATCHES_FACTUAL), Term::boolean(judgment.matches_factual));
    if let Some(context) = judgment.matches_context {
        graph.add(&vr, &node(iri::MATCHES_CONTEXT), Term::boolean(context));
    }
    if let Some(leak) = judgment.knowledge_leakage {
        graph.add(&vr, &node(iri::SHOWS_KNOWLEDGE_LEAKAGE), Term::boolean(leak));
    }
    if let Some(abstained) = judgment.abstained {
        graph.add(&vr, &node(iri::ABSTAINED), Term::boolean(abstained));
    }
    graph.add(&vr, &node(iri::VALIDATION_METHOD), Term::string(judgment.method.as_str()));
    graph.add(&vr, &node(iri::VALIDITY_POLICY), Term::string(judgment.policy.as_str()));
    if !judgment.rationale.is_empty() {
        graph.add(&vr, &node(iri::RATIONALE), Term::string(&judgment.rationale));
    }
    vr
}

/// Reads the validation result attached to `answer`, if any.
pub fn read_judgment(graph: &Graph, answer: &Term) -> Option<Judgment> {
    let vr = graph.object(answer, &node(iri::HAS_VALIDATION_RESULT))?;
    let flag = |p: &str| graph.object(vr, &node(p)).and_then(Term::as_bool);
    let text = |p: &str| graph.object(vr, &node(p)).map(|t| t.value().to_string());
    Some(Judgment {
        is_valid: flag(iri::IS_VALID)?,
        matches_factual: flag(iri::MATCHES_FACTUAL)?,
        matches_context: flag(iri::MATCHES_CONTEXT),
        knowledge_leakage: flag(iri::SHOWS_KNOWLEDGE_LEAKAGE),
        abstained: flag(iri::ABSTAINED),
        method: match text(iri::VALIDATION_METHOD).as_deref() {
            Some("human") => JudgmentMethod::Human,
            _ => JudgmentMethod::Auto,
        },
        policy: text(iri::VALIDITY_POLICY).and_then(|p| p.parse().ok()).unwrap_or_default(),
        rationale: text(iri::RATIONALE).unwrap_or_default(),
    })
}

fn single_literal(graph: &Graph, subject: &Term, predicate: &str) -> Result<String, JudgeError> {
    match graph.objects(subject, &node(predicate)).as_slice() {
        [Term::Literal(l)] => Ok(l.lexical().to_string()),
        values => Err(JudgeError::MalformedAnswer {
            answer: subject.value().to_string(),
            message: format!("expected one literal <{predicate}>, found {}", values.len()),
        }),
    }
}

fn single_node<'g>(graph: &'g Graph, subject: &Term, predicate: &str) -> Result<&'g Term, JudgeError> {
    graph.object(subject, &node(predicate)).ok_or_else(|| JudgeError::MalformedAnswer {
        answer: subject.value().to_string(),
        message: format!("expected exactly one <{predicate}>"),
    })
}

/// Reads back what auto-judging needs from an Answer node.
pub fn answer_facts(graph: &Graph, answer: &Term) -> Result<AnswerFacts, JudgeError> {
    let question = single_node(graph, answer, iri::HAS_GIVEN_FOR)?;
    let setting = single_node(graph, answer, iri::HAS_CONTEXT_SETTING)?;
    let condition_name = single_literal(graph, setting, iri::CONDITION_NAME)?;
    let condition = condition_name.parse::<ConditionKind>().map_err(|_| JudgeError::MalformedAnswer {
        answer: answer.value().to_string(),
        message: format!("unknown condition {condition_name:?}"),
    })?;
    let is_error = match graph.object(answer, &node(iri::IS_ERROR_TRIAL)) {
        Some(t) => t.as_bool().unwrap_or(false),
        None => false,
    };
    Ok(AnswerFacts {
        answer: answer.clone(),
        question_id: single_literal(graph, question, iri::QUESTION_ID)?,
        language: single_literal(graph, answer, iri::DC_LANGUAGE)?,
        condition,
        text: single_literal(graph, answer, iri::HAS_TEXT)?,
        is_error,
    })
}

pub fn answers(graph: &Graph) -> Vec<Term> {
    let mut answers: Vec<Term> = graph.subjects_of_type(&node(iri::ANSWER)).into_iter().cloned().collect();
    answers.sort();
    answers
}

/// Auto-judges every Answer in the graph, replacing earlier results.
pub fn judge_graph(graph: &mut Graph, study: &Study, policy: ValidityPolicy) -> Result<Vec<(Term, Judgment)>, JudgeError> {
    let mut results = Vec::new();
    for answer in answers(graph) {
        let facts = answer_facts(graph, &answer)?;
        let judgment = auto_judge(study, &facts, policy)?;
        results.push((answer, judgment));
    }
    for (answer, judgment) in &results {
        materialize_judgment(graph, answer, judgment);
    }
    Ok(results)
}

pub const REVIEW_COLUMNS: [&str; 5] = ["answer_iri", "is_valid", "matches_factual", "matches_context", "rationale"];

fn flag(value: &str, line: usize, column: &str) -> Result<Option<bool>, JudgeError> {
    match value.trim() {
        "-" => Ok(None),
        "true" => Ok(Some(true)),
        "false" => Ok(Some(false)),
        other => Err(JudgeError::Tsv { line, message: format!("{column}: expected true, false or -, got {other:?}") }),
    }
}

/// Applies human judgments from a TSV with columns
/// `answer_iri is_valid matches_factual matches_context rationale`; `-` marks
/// an absent value. Returns the number of answers updated.
pub fn ingest_judgments(graph: &mut Graph, tsv: &str, policy: ValidityPolicy) -> Result<usize, JudgeError> {
    let mut updates = Vec::new();
    let known: std::collections::BTreeSet<Term> = answers(graph).into_iter().collect();
    for (index, raw) in tsv.lines().enumerate() {
        let line = index + 1;
        if raw.trim().is_empty() || raw.starts_with('#') || (index == 0 && raw.starts_with("answer_iri")) {
            continue;
        }
        let cells: Vec<&str> = raw.split('\t').collect();
        if cells.len() != REVIEW_COLUMNS.len() {
            return Err(JudgeError::Tsv { line, message: format!("expected 5 columns, found {}", cells.len()) });
        }
        let answer = Term::iri(cells[0].trim()).map_err(|e| JudgeError::Tsv { line, message: e.to_string() })?;
        if !known.contains(&answer) {
            return Err(JudgeError::Tsv { line, message: format!("no Answer {}", answer.value()) });
        }
        let facts = answer_facts(graph, &answer)?;
        let matches_factual = flag(cells[2], line, "matches_factual")?
            .ok_or_else(|| JudgeError::Tsv { line, message: "matches_factual is required".into() })?;
        let matches_context = flag(cells[3], line, "matches_context")?;
        if matches_context.is_some() && !facts.condition.has_context() {
            return Err(JudgeError::Tsv { line, message: "matches_context must be - under no_context".into() });
        }
        let is_valid = match flag(cells[1], line, "is_valid")? {
            Some(v) => v,
            None => policy.is_valid(facts.condition, matches_factual, false),
        };
        let rationale = match cells[4].trim() {
            "-" => String::new(),
            text => text.to_string(),
        };
        updates.push((
            answer,
            Judgment {
                is_valid,
                matches_factual,
                matches_context,
                knowledge_leakage: leakage(facts.condition, matches_factual, matches_context),
                abstained: None,
                method: JudgmentMethod::Human,
                policy,
                rationale,
            },
        ));
    }
    for (answer, judgment) in &updates {
        materialize_judgment(graph, answer, judgment);
    }
    Ok(updates.len())
}

fn show(flag: Option<bool>) -> String {
    flag.map_or_else(|| "-".to_string(), |b| b.to_string())
}

/// Review sheet in the ingestion format, prefilled with the given judgments.
pub fn render_review_tsv(judgments: &[(Term, Judgment)]) -> String {
    let mut out = REVIEW_COLUMNS.join("\t");
    out.push('\n');
    for (answer, j) in judgments {
        let rationale = j.rationale.replace(['\t', '\n'], " ");
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            answer.value(),
            j.is_valid,
            j.matches_factual,
            show(j.matches_context),
            if rationale.is_empty() { "-".into() } else { rationale }
        ));
    }
    out
}
