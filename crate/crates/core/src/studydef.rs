//! Study definition: questions, materials, per-condition context fragments,
//! answer patterns and the prompt template.
//!
//! Studies are stored as UTF-8 JSON. Every text comparison (answer patterns,
//! probe checks) runs over [`normalize_text`] output so that study loading and
//! judging agree on what "matches" means.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("cannot read study file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("study JSON parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid study: {0}")]
    Invariant(String),
    #[error("question {question}: {message}")]
    Question { question: String, message: String },
    #[error(
        "question {question} ({language}): probe {probe:?} matches both the conflicting claim and the factual answer"
    )]
    ClaimOverlap { question: String, language: String, probe: String },
    #[error("unknown question id {0:?}")]
    UnknownQuestion(String),
    #[error("language {0:?} is not part of the study")]
    UnknownLanguage(String),
    #[error("unknown condition {0:?} (expected complete, incomplete, conflicting or no_context)")]
    UnknownCondition(String),
    #[error("at least one model is required")]
    NoModels,
    #[error("duplicate model name {0:?}")]
    DuplicateModel(String),
}

/// The four context regimes. `Ord` follows the reporting order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Complete,
    Incomplete,
    Conflicting,
    NoContext,
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 4] = [
        ConditionKind::Complete,
        ConditionKind::Incomplete,
        ConditionKind::Conflicting,
        ConditionKind::NoContext,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionKind::Complete => "complete",
            ConditionKind::Incomplete => "incomplete",
            ConditionKind::Conflicting => "conflicting",
            ConditionKind::NoContext => "no_context",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ConditionKind::Complete => "Complete",
            ConditionKind::Incomplete => "Incomplete",
            ConditionKind::Conflicting => "Conflicting",
            ConditionKind::NoContext => "No Context",
        }
    }

    pub fn has_context(self) -> bool {
        self != ConditionKind::NoContext
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditionKind {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "complete" => Ok(ConditionKind::Complete),
            "incomplete" => Ok(ConditionKind::Incomplete),
            "conflicting" => Ok(ConditionKind::Conflicting),
            "no_context" | "nocontext" => Ok(ConditionKind::NoContext),
            _ => Err(StudyError::UnknownCondition(s.to_string())),
        }
    }
}

/// Case-folds, NFC-normalizes and collapses runs of whitespace.
pub fn normalize_text(text: &str) -> String {
    let composed: String = text.nfc().collect();
    composed.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercased BCP47 tag.
pub fn normalize_language(tag: &str) -> String {
    tag.trim().to_lowercase()
}

/// JSON form of a match rule.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchRuleSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub any_of: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub all_of: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regex: Vec<String>,
}

/// A compiled answer pattern.
///
/// Matches when the rule has at least one clause and every non-empty clause
/// holds: some `any_of` phrase occurs, all `all_of` phrases occur, some
/// `regex` matches. Phrases are normalized like the text they are tested on;
/// regexes are case-insensitive.
#[derive(Debug, Clone, Default)]
pub struct MatchRule {
    any_of: Vec<String>,
    all_of: Vec<String>,
    regex: Vec<Regex>,
}

impl MatchRule {
    pub fn compile(spec: &MatchRuleSpec) -> Result<Self, regex::Error> {
        let regex = spec
            .regex
            .iter()
            .map(|r| RegexBuilder::new(r).case_insensitive(true).build())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            any_of: spec.any_of.iter().map(|p| normalize_text(p)).collect(),
            all_of: spec.all_of.iter().map(|p| normalize_text(p)).collect(),
            regex,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.any_of.is_empty() && self.all_of.is_empty() && self.regex.is_empty()
    }

    /// `normalized` must already be the output of [`normalize_text`].
    pub fn matches_normalized(&self, normalized: &str) -> bool {
        if self.is_empty() {
            return false;
        }
        (self.any_of.is_empty() || self.any_of.iter().any(|p| normalized.contains(p.as_str())))
            && self.all_of.iter().all(|p| normalized.contains(p.as_str()))
            && (self.regex.is_empty() || self.regex.iter().any(|r| r.is_match(normalized)))
    }

    pub fn matches(&self, text: &str) -> bool {
        self.matches_normalized(&normalize_text(text))
    }

    /// Every individual pattern that occurs in the text, for audit trails.
    pub fn fired(&self, normalized: &str) -> Vec<String> {
        let phrases = self
            .any_of
            .iter()
            .chain(self.all_of.iter())
            .filter(|p| normalized.contains(p.as_str()))
            .map(|p| format!("{p:?}"));
        let regexes = self
            .regex
            .iter()
            .filter(|r| r.is_match(normalized))
            .map(|r| format!("/{}/", r.as_str()));
        phrases.chain(regexes).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ContextFragment {
    pub body: String,
    /// Detects an answer that repeats this fragment's claim.
    pub claim: MatchRule,
}

#[derive(Debug, Clone)]
pub struct QuestionSpec {
    pub id: String,
    pub text: BTreeMap<String, String>,
    pub factual: BTreeMap<String, MatchRule>,
    pub abstention: BTreeMap<String, MatchRule>,
    pub contexts: BTreeMap<ConditionKind, BTreeMap<String, ContextFragment>>,
    pub material_ids: Vec<String>,
    pub probes: BTreeMap<String, Vec<String>>,
}

impl QuestionSpec {
    pub fn fragment(&self, condition: ConditionKind, language: &str) -> Option<&ContextFragment> {
        self.contexts.get(&condition).and_then(|m| m.get(language))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaterialSpec {
    pub id: String,
    #[serde(default)]
    pub title: BTreeMap<String, String>,
    #[serde(default)]
    pub body: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// Zero-shot, system-first template. `system` holds `{context}`, replaced by
/// `context_block` (which holds `{body}`) or by nothing for no_context;
/// `user` holds `{question}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub system: BTreeMap<String, String>,
    #[serde(default)]
    pub context_block: BTreeMap<String, String>,
    pub user: BTreeMap<String, String>,
}

const DEFAULT_CONTEXT_BLOCK_EN: &str = "\n\nContext:\n{body}";

impl Default for PromptTemplate {
    fn default() -> Self {
        let map = |pairs: [(&str, &str); 2]| {
            pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
        };
        Self {
            system: map([
                ("de", "Beantworte die Frage anhand des bereitgestellten Kontexts.{context}"),
                ("en", "Answer the question using the provided context.{context}"),
            ]),
            context_block: map([
                ("de", "\n\nKontext:\n{body}"),
                ("en", DEFAULT_CONTEXT_BLOCK_EN),
            ]),
            user: map([("de", "{question}"), ("en", "{question}")]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Study {
    pub id: String,
    pub base_iri: String,
    pub languages: Vec<String>,
    pub questions: Vec<QuestionSpec>,
    pub materials: Vec<MaterialSpec>,
    pub prompt_template: PromptTemplate,
    /// Append referenced material bodies to each context block.
    pub inline_materials: bool,
}

impl Study {
    pub fn question(&self, id: &str) -> Result<&QuestionSpec, StudyError> {
        self.questions
            .iter()
            .find(|q| q.id == id)
            .ok_or_else(|| StudyError::UnknownQuestion(id.to_string()))
    }

    pub fn material(&self, id: &str) -> Option<&MaterialSpec> {
        self.materials.iter().find(|m| m.id == id)
    }

    pub fn has_language(&self, language: &str) -> bool {
        self.languages.iter().any(|l| l == language)
    }

    fn require_language(&self, language: &str) -> Result<String, StudyError> {
        let language = normalize_language(language);
        if self.has_language(&language) {
            Ok(language)
        } else {
            Err(StudyError::UnknownLanguage(language))
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStudy {
    id: String,
    base_iri: String,
    languages: Vec<String>,
    #[serde(default)]
    prompt_template: Option<PromptTemplate>,
    #[serde(default)]
    materials: Vec<MaterialSpec>,
    questions: Vec<RawQuestion>,
    #[serde(default = "default_true")]
    inline_materials: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFragment {
    body: String,
    #[serde(default)]
    claim_patterns: MatchRuleSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuestion {
    id: String,
    #[serde(default)]
    text: BTreeMap<String, String>,
    #[serde(default)]
    factual_patterns: BTreeMap<String, MatchRuleSpec>,
    #[serde(default)]
    abstention_patterns: BTreeMap<String, MatchRuleSpec>,
    #[serde(default)]
    contexts: BTreeMap<String, BTreeMap<String, RawFragment>>,
    #[serde(default)]
    material_ids: Vec<String>,
    #[serde(default)]
    probes: BTreeMap<String, Vec<String>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
}

fn lower_keys<V>(map: BTreeMap<String, V>) -> BTreeMap<String, V> {
    map.into_iter().map(|(k, v)| (normalize_language(&k), v)).collect()
}

pub fn load_study(path: impl AsRef<Path>) -> Result<Study, StudyError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| StudyError::Io { path: path.display().to_string(), source })?;
    parse_study(&text)
}

pub fn parse_study(text: &str) -> Result<Study, StudyError> {
    let raw: RawStudy = serde_json::from_str(text).map_err(|e| StudyError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    build_study(raw)
}

fn build_study(raw: RawStudy) -> Result<Study, StudyError> {
    let id = raw.id.trim().to_string();
    if !valid_id(&id) {
        return Err(StudyError::Invariant(format!("study id {id:?} must match [A-Za-z0-9._-]+")));
    }
    let base_iri = raw.base_iri.trim().trim_end_matches('/').to_string();
    crate::graph::validate_iri(&base_iri)
        .map_err(|e| StudyError::Invariant(format!("base_iri: {e}")))?;

    let mut languages = Vec::new();
    for language in &raw.languages {
        let language = normalize_language(language);
        if language.is_empty() || languages.contains(&language) {
            return Err(StudyError::Invariant(format!("invalid or duplicate language {language:?}")));
        }
        languages.push(language);
    }
    if languages.is_empty() {
        return Err(StudyError::Invariant("a study needs at least one language".into()));
    }

    let prompt_template = raw.prompt_template.unwrap_or_default();
    let prompt_template = PromptTemplate {
        system: lower_keys(prompt_template.system),
        context_block: lower_keys(prompt_template.context_block),
        user: lower_keys(prompt_template.user),
    };
    check_template(&prompt_template, &languages)?;

    let mut material_ids = BTreeSet::new();
    let mut materials = Vec::new();
    for mut material in raw.materials {
        material.id = material.id.trim().to_string();
        if !valid_id(&material.id) || !material_ids.insert(material.id.clone()) {
            return Err(StudyError::Invariant(format!(
                "invalid or duplicate material id {:?}",
                material.id
            )));
        }
        material.title = lower_keys(material.title);
        material.body = lower_keys(material.body);
        if let Some(source) = &material.source {
            crate::graph::validate_iri(source).map_err(|e| {
                StudyError::Invariant(format!("material {}: source: {e}", material.id))
            })?;
        }
        if raw.inline_materials {
            for language in &languages {
                if material.body.get(language).is_none_or(|b| b.trim().is_empty()) {
                    return Err(StudyError::Invariant(format!(
                        "material {} has no body for language {language}",
                        material.id
                    )));
                }
            }
        }
        materials.push(material);
    }

    let mut question_ids = BTreeSet::new();
    let mut questions = Vec::new();
    for raw_question in raw.questions {
        let question = build_question(raw_question, &languages, &material_ids)?;
        if !question_ids.insert(question.id.clone()) {
            return Err(StudyError::Invariant(format!("duplicate question id {:?}", question.id)));
        }
        questions.push(question);
    }

    Ok(Study {
        id,
        base_iri,
        languages,
        questions,
        materials,
        prompt_template,
        inline_materials: raw.inline_materials,
    })
}

fn check_template(template: &PromptTemplate, languages: &[String]) -> Result<(), StudyError> {
    let once = |map: &BTreeMap<String, String>, part: &str, placeholder: &str, lang: &str| {
        let text = map.get(lang).ok_or_else(|| {
            StudyError::Invariant(format!("prompt_template.{part} has no {lang} text"))
        })?;
        if text.matches(placeholder).count() != 1 {
            return Err(StudyError::Invariant(format!(
                "prompt_template.{part}.{lang} must contain {placeholder} exactly once"
            )));
        }
        Ok(())
    };
    for lang in languages {
        once(&template.system, "system", "{context}", lang)?;
        once(&template.user, "user", "{question}", lang)?;
        if template.context_block.contains_key(lang) {
            once(&template.context_block, "context_block", "{body}", lang)?;
        }
    }
    Ok(())
}

fn build_question(
    raw: RawQuestion,
    languages: &[String],
    material_ids: &BTreeSet<String>,
) -> Result<QuestionSpec, StudyError> {
    let id = raw.id.trim().to_string();
    let fail = |message: String| StudyError::Question { question: id.clone(), message };
    if !valid_id(&id) {
        return Err(fail("id must match [A-Za-z0-9._-]+".into()));
    }
    let compile = |spec: &MatchRuleSpec, what: &str| {
        MatchRule::compile(spec)
            .map_err(|e| StudyError::Question { question: id.clone(), message: format!("{what}: {e}") })
    };

    let text = lower_keys(raw.text);
    let factual_specs = lower_keys(raw.factual_patterns);
    let abstention_specs = lower_keys(raw.abstention_patterns);
    let probes = lower_keys(raw.probes);

    let mut factual = BTreeMap::new();
    let mut abstention = BTreeMap::new();
    for lang in languages {
        if text.get(lang).is_none_or(|t| t.trim().is_empty()) {
            return Err(fail(format!("missing question text for language {lang}")));
        }
        let rule = compile(&factual_specs.get(lang).cloned().unwrap_or_default(), "factual_patterns")?;
        if rule.is_empty() {
            return Err(fail(format!("missing factual_patterns for language {lang}")));
        }
        factual.insert(lang.clone(), rule);
        let rule = compile(
            &abstention_specs.get(lang).cloned().unwrap_or_default(),
            "abstention_patterns",
        )?;
        abstention.insert(lang.clone(), rule);
    }

    let mut contexts = BTreeMap::new();
    for (name, fragments) in raw.contexts {
        let condition: ConditionKind = name.parse()?;
        if condition == ConditionKind::NoContext {
            return Err(fail("no_context must not define a context fragment".into()));
        }
        let mut by_lang = BTreeMap::new();
        for (lang, fragment) in lower_keys(fragments) {
            if fragment.body.trim().is_empty() {
                return Err(fail(format!("{condition}.{lang} has an empty body")));
            }
            let claim = compile(&fragment.claim_patterns, "claim_patterns")?;
            by_lang.insert(lang, ContextFragment { body: fragment.body, claim });
        }
        contexts.insert(condition, by_lang);
    }
    for condition in [ConditionKind::Complete, ConditionKind::Incomplete, ConditionKind::Conflicting] {
        for lang in languages {
            let fragment = contexts
                .get(&condition)
                .and_then(|m| m.get(lang))
                .ok_or_else(|| fail(format!("missing {condition} context for language {lang}")))?;
            if condition == ConditionKind::Conflicting && fragment.claim.is_empty() {
                return Err(fail(format!("conflicting context for {lang} needs claim_patterns")));
            }
        }
    }

    for material in &raw.material_ids {
        if !material_ids.contains(material.trim()) {
            return Err(fail(format!("references unknown material {material:?}")));
        }
    }

    for lang in languages {
        let conflicting = &contexts[&ConditionKind::Conflicting][lang];
        for probe in probes.get(lang).into_iter().flatten() {
            let normalized = normalize_text(probe);
            if conflicting.claim.matches_normalized(&normalized)
                && factual[lang].matches_normalized(&normalized)
            {
                return Err(StudyError::ClaimOverlap {
                    question: id.clone(),
                    language: lang.clone(),
                    probe: probe.clone(),
                });
            }
        }
    }

    Ok(QuestionSpec {
        id: id.clone(),
        text,
        factual,
        abstention,
        contexts,
        material_ids: raw.material_ids.iter().map(|m| m.trim().to_string()).collect(),
        probes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// Messages for one trial (system first, then user) plus the cell they
/// belong to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptInput {
    pub question_id: String,
    pub language: String,
    pub condition: ConditionKind,
    pub messages: Vec<ChatMessage>,
}

impl PromptInput {
    pub fn system(&self) -> &str {
        &self.messages[0].content
    }

    pub fn user(&self) -> &str {
        &self.messages[1].content
    }

    /// Stable rendering of every message, used for fingerprinting.
    pub fn full_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| format!("{}:\n{}", m.role.as_str(), m.content))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

/// Context text handed to the model for one condition, before templating.
pub fn context_body(
    study: &Study,
    question: &QuestionSpec,
    condition: ConditionKind,
    language: &str,
) -> Option<String> {
    let fragment = question.fragment(condition, language)?;
    let mut body = fragment.body.trim_end().to_string();
    if study.inline_materials {
        for material in question.material_ids.iter().filter_map(|id| study.material(id)) {
            if let Some(text) = material.body.get(language) {
                body.push_str("\n\n");
                body.push_str(text.trim_end());
            }
        }
    }
    Some(body)
}

pub fn build_prompt(
    study: &Study,
    question_id: &str,
    condition: ConditionKind,
    language: &str,
) -> Result<PromptInput, StudyError> {
    let question = study.question(question_id)?;
    let language = study.require_language(language)?;
    let template = &study.prompt_template;
    let context = match context_body(study, question, condition, &language) {
        Some(body) => {
            let block = template
                .context_block
                .get(&language)
                .map(String::as_str)
                .unwrap_or(DEFAULT_CONTEXT_BLOCK_EN);
            block.replace("{body}", &body)
        }
        None if condition.has_context() => {
            return Err(StudyError::Question {
                question: question.id.clone(),
                message: format!("missing {condition} context for language {language}"),
            })
        }
        None => String::new(),
    };
    let system = template.system[&language].replace("{context}", &context);
    let user = template.user[&language].replace("{question}", &question.text[&language]);
    Ok(PromptInput {
        question_id: question.id.clone(),
        language,
        condition,
        messages: vec![
            ChatMessage { role: Role::System, content: system },
            ChatMessage { role: Role::User, content: user },
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrialKey {
    pub question_id: String,
    pub model: String,
    pub language: String,
    pub condition: ConditionKind,
}

impl fmt::Display for TrialKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{}", self.question_id, self.model, self.language, self.condition)
    }
}

/// Cross product in (question, model, language, condition) order.
pub fn enumerate_trials(
    study: &Study,
    models: &[String],
    conditions: &[ConditionKind],
    languages: &[String],
) -> Result<Vec<TrialKey>, StudyError> {
    if models.is_empty() {
        return Err(StudyError::NoModels);
    }
    let mut seen = BTreeSet::new();
    for model in models {
        if !seen.insert(model) {
            return Err(StudyError::DuplicateModel(model.clone()));
        }
    }
    let languages =
        languages.iter().map(|l| study.require_language(l)).collect::<Result<Vec<_>, _>>()?;
    let mut keys =
        Vec::with_capacity(study.questions.len() * models.len() * languages.len() * conditions.len());
    for question in &study.questions {
        for model in models {
            for language in &languages {
                for &condition in conditions {
                    keys.push(TrialKey {
                        question_id: question.id.clone(),
                        model: model.clone(),
                        language: language.clone(),
                        condition,
                    });
                }
            }
        }
    }
    Ok(keys)
}
