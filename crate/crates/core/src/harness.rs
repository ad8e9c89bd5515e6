//! Trial execution: model adapters, record/replay cassettes, the bounded
//! worker pool with retries, and materialization of trials as RDF.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{Graph, Term};
use crate::studydef::{
    build_prompt, enumerate_trials, ConditionKind, PromptInput, Role, Study, StudyError, TrialKey,
};
use crate::vocab::{iri, node};

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("could not decode model response: {0}")]
    Decode(String),
    #[error("environment variable {0} is not set")]
    MissingCredential(String),
    #[error("no cassette entry for trial {trial} (fingerprint {fingerprint})")]
    CassetteMiss { trial: String, fingerprint: String },
    #[error("{0}")]
    Other(String),
}

impl AdapterError {
    /// Transport failures, rate limits and server errors are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            AdapterError::Transport(_) => true,
            AdapterError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }

    /// Errors that abort the whole run instead of producing an error trial.
    pub fn is_fatal(&self) -> bool {
        matches!(self, AdapterError::CassetteMiss { .. } | AdapterError::MissingCredential(_))
    }
}

#[derive(Debug, Error)]
pub enum CassetteError {
    #[error("cassette I/O on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("duplicate cassette entry for fingerprint {0}")]
    Duplicate(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error("trial {trial}: {source}")]
    Fatal { trial: String, source: AdapterError },
    #[error("parallelism must be at least 1")]
    ZeroParallelism,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResponse {
    pub text: String,
    pub latency_ms: u64,
    /// Provider metadata (token usage, finish reason) kept for debugging.
    pub metadata: Value,
}

pub trait ModelAdapter: Send + Sync {
    /// Model name as recorded in the graph.
    fn name(&self) -> &str;

    /// Adapter kind, e.g. `openai-chat`, `gemini`, `replay`.
    fn kind(&self) -> &str;

    fn invoke(&self, prompt: &PromptInput) -> Result<ModelResponse, AdapterError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApiStyle {
    OpenaiChat,
    Gemini,
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpAdapterConfig {
    pub model: String,
    pub api: ApiStyle,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

pub struct HttpAdapter {
    config: HttpAdapterConfig,
    agent: ureq::Agent,
}

impl HttpAdapter {
    pub fn new(config: HttpAdapterConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn url(&self) -> String {
        match (self.config.api, &self.config.endpoint) {
            (ApiStyle::OpenaiChat, Some(e)) => e.clone(),
            (ApiStyle::OpenaiChat, None) => "https://api.openai.com/v1/chat/completions".into(),
            (ApiStyle::Gemini, endpoint) => format!(
                "{}/models/{}:generateContent",
                endpoint.as_deref().unwrap_or("https://generativelanguage.googleapis.com/v1beta").trim_end_matches('/'),
                self.config.model
            ),
        }
    }

    fn body(&self, prompt: &PromptInput) -> Value {
        match self.config.api {
            ApiStyle::OpenaiChat => json!({
                "model": self.config.model,
                "temperature": self.config.temperature,
                "messages": prompt.messages.iter()
                    .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
                    .collect::<Vec<_>>(),
            }),
            ApiStyle::Gemini => {
                let system: Vec<&str> = prompt
                    .messages
                    .iter()
                    .filter(|m| m.role == Role::System)
                    .map(|m| m.content.as_str())
                    .collect();
                let contents: Vec<Value> = prompt
                    .messages
                    .iter()
                    .filter(|m| m.role == Role::User)
                    .map(|m| json!({"role": "user", "parts": [{"text": m.content}]}))
                    .collect();
                json!({
                    "systemInstruction": {"parts": [{"text": system.join("\n\n")}]},
                    "contents": contents,
                    "generationConfig": {"temperature": self.config.temperature},
                })
            }
        }
    }

    fn extract(&self, response: &Value) -> Result<(String, Value), AdapterError> {
        let missing = || AdapterError::Decode(format!("unexpected response shape: {response}"));
        match self.config.api {
            ApiStyle::OpenaiChat => {
                let choice = response.pointer("/choices/0").ok_or_else(missing)?;
                let text = choice.pointer("/message/content").and_then(Value::as_str).ok_or_else(missing)?;
                let meta = json!({
                    "finish_reason": choice.get("finish_reason"),
                    "usage": response.get("usage"),
                });
                Ok((text.to_string(), meta))
            }
            ApiStyle::Gemini => {
                let candidate = response.pointer("/candidates/0").ok_or_else(missing)?;
                let parts = candidate.pointer("/content/parts").and_then(Value::as_array).ok_or_else(missing)?;
                let text: String = parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect();
                let meta = json!({
                    "finish_reason": candidate.get("finishReason"),
                    "usage": response.get("usageMetadata"),
                });
                Ok((text, meta))
            }
        }
    }
}

impl ModelAdapter for HttpAdapter {
    fn name(&self) -> &str {
        &self.config.model
    }

    fn kind(&self) -> &str {
        match self.config.api {
            ApiStyle::OpenaiChat => "openai-chat",
            ApiStyle::Gemini => "gemini",
        }
    }

    fn invoke(&self, prompt: &PromptInput) -> Result<ModelResponse, AdapterError> {
        let key = match &self.config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| AdapterError::MissingCredential(var.clone()))?),
            None => None,
        };
        let mut request = self.agent.post(self.url()).header("Content-Type", "application/json");
        if let Some(key) = &key {
            request = match self.config.api {
                ApiStyle::OpenaiChat => request.header("Authorization", format!("Bearer {key}")),
                ApiStyle::Gemini => request.header("x-goog-api-key", key.as_str()),
            };
        }
        let started = Instant::now();
        let mut response =
            request.send_json(self.body(prompt)).map_err(|e| AdapterError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| AdapterError::Transport(e.to_string()))?;
        let latency_ms = started.elapsed().as_millis() as u64;
        if !(200..300).contains(&status) {
            return Err(AdapterError::Http { status, body: text.chars().take(500).collect() });
        }
        let parsed: Value = serde_json::from_str(&text).map_err(|e| AdapterError::Decode(e.to_string()))?;
        let (text, metadata) = self.extract(&parsed)?;
        Ok(ModelResponse { text, latency_ms, metadata })
    }
}

/// sha256 over model, language, condition, question id and the full prompt
/// text, separated by U+001F.
pub fn fingerprint(model: &str, prompt: &PromptInput) -> String {
    let material = [model, &prompt.language, prompt.condition.as_str(), &prompt.question_id, &prompt.full_text()]
        .join("\u{1f}");
    hex::encode(Sha256::digest(material.as_bytes()))
}

pub const CASSETTE_VERSION: u32 = 1;
pub const FINGERPRINT_ALGORITHM: &str = "sha256/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CassetteHeader {
    cassette_version: u32,
    fp_algo: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CassetteRecord {
    pub fp: String,
    pub model: String,
    pub lang: String,
    pub condition: ConditionKind,
    pub question: String,
    pub response: String,
    pub latency_ms: u64,
    pub recorded_at: String,
}

impl CassetteRecord {
    pub fn new(model: &str, prompt: &PromptInput, response: &str, latency_ms: u64, recorded_at: DateTime<Utc>) -> Self {
        Self {
            fp: fingerprint(model, prompt),
            model: model.to_string(),
            lang: prompt.language.clone(),
            condition: prompt.condition,
            question: prompt.question_id.clone(),
            response: response.to_string(),
            latency_ms,
            recorded_at: recorded_at.to_rfc3339_opts(SecondsFormat::Secs, true),
        }
    }
}

/// Append-only JSONL store of model responses keyed by prompt fingerprint.
pub struct Cassette {
    path: PathBuf,
    records: Mutex<HashMap<String, CassetteRecord>>,
}

impl Cassette {
    /// Opens an existing cassette, or creates one with a header line.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CassetteError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| CassetteError::Io { path: path.clone(), source };
        if !path.exists() {
            let mut file = File::create(&path).map_err(io)?;
            let header = CassetteHeader { cassette_version: CASSETTE_VERSION, fp_algo: FINGERPRINT_ALGORITHM.into() };
            writeln!(file, "{}", serde_json::to_string(&header).expect("header serializes")).map_err(io)?;
            return Ok(Self { path, records: Mutex::new(HashMap::new()) });
        }
        let records = Self::read(&path)?;
        Ok(Self { path, records: Mutex::new(records) })
    }

    /// Opens an existing cassette for lookups only.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CassetteError> {
        let path = path.as_ref().to_path_buf();
        let records = Self::read(&path)?;
        Ok(Self { path, records: Mutex::new(records) })
    }

    fn read(path: &Path) -> Result<HashMap<String, CassetteRecord>, CassetteError> {
        let file = File::open(path).map_err(|source| CassetteError::Io { path: path.into(), source })?;
        let format = |line: usize, message: String| CassetteError::Format { path: path.into(), line, message };
        let mut records = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| CassetteError::Io { path: path.into(), source })?;
            if i == 0 {
                let header: CassetteHeader =
                    serde_json::from_str(&line).map_err(|e| format(1, format!("bad header: {e}")))?;
                if header.cassette_version != CASSETTE_VERSION || header.fp_algo != FINGERPRINT_ALGORITHM {
                    return Err(format(1, format!("unsupported cassette {header:?}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let record: CassetteRecord = serde_json::from_str(&line).map_err(|e| format(i + 1, e.to_string()))?;
            if records.contains_key(&record.fp) {
                return Err(CassetteError::Duplicate(record.fp));
            }
            records.insert(record.fp.clone(), record);
        }
        if records.is_empty() && std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true) {
            return Err(format(1, "missing header".into()));
        }
        Ok(records)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("cassette lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Distinct model names with at least one recorded response, sorted.
    pub fn models(&self) -> Vec<String> {
        let records = self.records.lock().expect("cassette lock");
        let models: BTreeSet<String> = records.values().map(|r| r.model.clone()).collect();
        models.into_iter().collect()
    }

    pub fn get(&self, fp: &str) -> Option<CassetteRecord> {
        self.records.lock().expect("cassette lock").get(fp).cloned()
    }

    /// Appends one record; an existing fingerprint is rejected.
    pub fn append(&self, record: CassetteRecord) -> Result<(), CassetteError> {
        let mut records = self.records.lock().expect("cassette lock");
        if records.contains_key(&record.fp) {
            return Err(CassetteError::Duplicate(record.fp));
        }
        let io = |source| CassetteError::Io { path: self.path.clone(), source };
        let mut file = OpenOptions::new().append(true).open(&self.path).map_err(io)?;
        writeln!(file, "{}", serde_json::to_string(&record).expect("record serializes")).map_err(io)?;
        records.insert(record.fp.clone(), record);
        Ok(())
    }
}

/// Answers from a cassette; a miss names the trial.
pub struct ReplayAdapter {
    model: String,
    cassette: Arc<Cassette>,
}

impl ReplayAdapter {
    pub fn new(model: impl Into<String>, cassette: Arc<Cassette>) -> Self {
        Self { model: model.into(), cassette }
    }
}

impl ModelAdapter for ReplayAdapter {
    fn name(&self) -> &str {
        &self.model
    }

    fn kind(&self) -> &str {
        "replay"
    }

    fn invoke(&self, prompt: &PromptInput) -> Result<ModelResponse, AdapterError> {
        let fp = fingerprint(&self.model, prompt);
        match self.cassette.get(&fp) {
            Some(record) => Ok(ModelResponse {
                text: record.response,
                latency_ms: record.latency_ms,
                metadata: json!({"recorded_at": record.recorded_at}),
            }),
            None => Err(AdapterError::CassetteMiss {
                trial: TrialKey {
                    question_id: prompt.question_id.clone(),
                    model: self.model.clone(),
                    language: prompt.language.clone(),
                    condition: prompt.condition,
                }
                .to_string(),
                fingerprint: fp,
            }),
        }
    }
}

/// Forwards to a live adapter and appends every success to a cassette.
pub struct RecordingAdapter {
    inner: Arc<dyn ModelAdapter>,
    cassette: Arc<Cassette>,
    clock: Arc<dyn Clock>,
}

impl RecordingAdapter {
    pub fn new(inner: Arc<dyn ModelAdapter>, cassette: Arc<Cassette>, clock: Arc<dyn Clock>) -> Self {
        Self { inner, cassette, clock }
    }
}

impl ModelAdapter for RecordingAdapter {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn kind(&self) -> &str {
        self.inner.kind()
    }

    fn invoke(&self, prompt: &PromptInput) -> Result<ModelResponse, AdapterError> {
        let response = self.inner.invoke(prompt)?;
        let record = CassetteRecord::new(self.name(), prompt, &response.text, response.latency_ms, self.clock.now());
        match self.cassette.append(record) {
            Ok(()) | Err(CassetteError::Duplicate(_)) => Ok(response),
            Err(e) => Err(AdapterError::Other(e.to_string())),
        }
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
    fn sleep(&self, duration: Duration);
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration)
    }
}

/// Always reports the same instant; sleeps return immediately and are logged.
pub struct FixedClock {
    instant: DateTime<Utc>,
    slept: Mutex<Vec<Duration>>,
}

impl FixedClock {
    pub fn new(instant: DateTime<Utc>) -> Self {
        Self { instant, slept: Mutex::new(Vec::new()) }
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.slept.lock().expect("clock lock").clone()
    }
}

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.instant
    }

    fn sleep(&self, duration: Duration) {
        self.slept.lock().expect("clock lock").push(duration);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub run_id: String,
    pub conditions: Vec<ConditionKind>,
    /// Empty means every study language.
    pub languages: Vec<String>,
    pub parallelism: usize,
    pub max_retries: u32,
    pub base_backoff: Duration,
}

impl RunConfig {
    pub fn new(run_id: impl Into<String>) -> Self {
        Self {
            run_id: run_id.into(),
            conditions: ConditionKind::ALL.to_vec(),
            languages: Vec::new(),
            parallelism: 4,
            max_retries: 3,
            base_backoff: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrialOutcome {
    Answered(String),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRecord {
    pub key: TrialKey,
    pub adapter: String,
    pub fingerprint: String,
    pub outcome: TrialOutcome,
    pub latency_ms: u64,
    pub attempts: u32,
    pub generated_at: DateTime<Utc>,
}

impl TrialRecord {
    pub fn is_error(&self) -> bool {
        matches!(self.outcome, TrialOutcome::Failed(_))
    }

    pub fn text(&self) -> &str {
        match &self.outcome {
            TrialOutcome::Answered(text) => text,
            TrialOutcome::Failed(_) => "",
        }
    }
}

fn run_trial(
    study: &Study,
    key: &TrialKey,
    adapter: &dyn ModelAdapter,
    config: &RunConfig,
    clock: &dyn Clock,
) -> Result<TrialRecord, RunError> {
    let prompt = build_prompt(study, &key.question_id, key.condition, &key.language)?;
    let fp = fingerprint(&key.model, &prompt);
    let mut attempts = 0;
    let mut delay = config.base_backoff;
    let (outcome, latency_ms) = loop {
        attempts += 1;
        match adapter.invoke(&prompt) {
            Ok(response) => break (TrialOutcome::Answered(response.text), response.latency_ms),
            Err(e) if e.is_fatal() => return Err(RunError::Fatal { trial: key.to_string(), source: e }),
            Err(e) if e.is_retryable() && attempts <= config.max_retries => {
                clock.sleep(delay);
                delay *= 2;
            }
            Err(e) => break (TrialOutcome::Failed(e.to_string()), 0),
        }
    };
    Ok(TrialRecord {
        key: key.clone(),
        adapter: adapter.kind().to_string(),
        fingerprint: fp,
        outcome,
        latency_ms,
        attempts,
        generated_at: clock.now(),
    })
}

/// Runs every (question, model, language, condition) trial on a bounded pool
/// of worker threads. Records come back in enumeration order regardless of
/// completion order.
pub fn run_experiment(
    study: &Study,
    adapters: &[Arc<dyn ModelAdapter>],
    config: &RunConfig,
    clock: &dyn Clock,
) -> Result<Vec<TrialRecord>, RunError> {
    if config.parallelism == 0 {
        return Err(RunError::ZeroParallelism);
    }
    let models: Vec<String> = adapters.iter().map(|a| a.name().to_string()).collect();
    let by_name: HashMap<&str, &dyn ModelAdapter> = adapters.iter().map(|a| (a.name(), a.as_ref())).collect();
    let languages = if config.languages.is_empty() { study.languages.clone() } else { config.languages.clone() };
    let keys = enumerate_trials(study, &models, &config.conditions, &languages)?;
    for key in &keys {
        build_prompt(study, &key.question_id, key.condition, &key.language)?;
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<TrialRecord, RunError>>>> =
        Mutex::new((0..keys.len()).map(|_| None).collect());
    let failed = std::sync::atomic::AtomicBool::new(false);
    std::thread::scope(|scope| {
        for _ in 0..config.parallelism.min(keys.len().max(1)) {
            scope.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let index = next.fetch_add(1, Ordering::Relaxed);
                let Some(key) = keys.get(index) else { break };
                let adapter = by_name[key.model.as_str()];
                let result = run_trial(study, key, adapter, config, clock);
                if result.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                results.lock().expect("results lock")[index] = Some(result);
            });
        }
    });
    let results = results.into_inner().expect("results lock");
    let mut records = Vec::with_capacity(keys.len());
    for result in results.into_iter().flatten() {
        records.push(result?);
    }
    Ok(records)
}

fn tsv_escape(text: &str) -> String {
    text.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n").replace('\r', "\\r")
}

pub const TRIALS_TSV_COLUMNS: [&str; 10] = [
    "question_id",
    "model",
    "language",
    "condition",
    "status",
    "attempts",
    "latency_ms",
    "fingerprint",
    "generated_at",
    "text",
];

/// One row per trial; `text` holds the answer or the error message, with
/// tabs and line breaks backslash-escaped.
pub fn render_trials_tsv(records: &[TrialRecord]) -> String {
    let mut out = TRIALS_TSV_COLUMNS.join("\t");
    out.push('\n');
    for r in records {
        let (status, text) = match &r.outcome {
            TrialOutcome::Answered(t) => ("ok", t.as_str()),
            TrialOutcome::Failed(e) => ("error", e.as_str()),
        };
        let row = [
            r.key.question_id.clone(),
            r.key.model.clone(),
            r.key.language.clone(),
            r.key.condition.as_str().to_string(),
            status.to_string(),
            r.attempts.to_string(),
            r.latency_ms.to_string(),
            r.fingerprint.clone(),
            r.generated_at.to_rfc3339_opts(SecondsFormat::Secs, true),
            tsv_escape(text),
        ];
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

/// Lowercase model name with every non-alphanumeric run replaced by `-`.
pub fn model_slug(model: &str) -> String {
    let mut slug = String::new();
    for c in model.chars() {
        if c.is_ascii_alphanumeric() {
            slug.push(c.to_ascii_lowercase());
        } else if !slug.ends_with('-') {
            slug.push('-');
        }
    }
    slug.trim_matches('-').to_string()
}

/// IRI minting scheme shared by the harness, judge and analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Minter {
    base: String,
}

impl Minter {
    pub fn new(base_iri: &str) -> Self {
        Self { base: base_iri.trim_end_matches('/').to_string() }
    }

    fn mint(&self, path: &str) -> Term {
        node(&format!("{}/{path}", self.base))
    }

    pub fn study(&self, id: &str) -> Term {
        self.mint(&format!("study/{id}"))
    }

    pub fn question(&self, id: &str) -> Term {
        self.mint(&format!("question/{id}"))
    }

    pub fn material(&self, id: &str) -> Term {
        self.mint(&format!("material/{id}"))
    }

    pub fn model(&self, name: &str) -> Term {
        self.mint(&format!("model/{}", model_slug(name)))
    }

    pub fn condition(&self, condition: ConditionKind) -> Term {
        self.mint(&format!("condition/{}", condition.as_str()))
    }

    pub fn language(&self, tag: &str) -> Term {
        self.mint(&format!("language/{tag}"))
    }

    pub fn run(&self, run_id: &str) -> Term {
        self.mint(&format!("run/{run_id}"))
    }

    pub fn answer(&self, key: &TrialKey, run_id: &str) -> Term {
        self.mint(&format!(
            "answer/{}/{}/{}/{}/{}",
            key.question_id,
            model_slug(&key.model),
            key.language,
            key.condition.as_str(),
            run_id
        ))
    }
}

fn lang(text: &str, tag: &str) -> Term {
    Term::lang_string(text, tag).expect("study languages are valid tags")
}

/// Study-level nodes: study, language profiles, questions, materials and the
/// four context settings.
pub fn materialize_study(graph: &mut Graph, study: &Study) {
    let m = Minter::new(&study.base_iri);
    let a = node(iri::RDF_TYPE);
    let study_node = m.study(&study.id);
    graph.add(&study_node, &a, node(iri::STUDY));
    graph.add(&study_node, &node(iri::STUDY_ID), Term::string(&study.id));
    for language in &study.languages {
        let profile = m.language(language);
        graph.add(&profile, &a, node(iri::LANGUAGE_PROFILE));
        graph.add(&profile, &node(iri::LANGUAGE_TAG), Term::string(language));
        graph.add(&study_node, &node(iri::HAS_LANGUAGE_PROFILE), profile);
    }
    for condition in ConditionKind::ALL {
        let setting = m.condition(condition);
        graph.add(&setting, &a, node(iri::CONTEXT_SETTING));
        graph.add(&setting, &node(iri::CONDITION_NAME), Term::string(condition.as_str()));
    }
    for material in &study.materials {
        let subject = m.material(&material.id);
        graph.add(&subject, &a, node(iri::MATERIAL));
        graph.add(&subject, &node(iri::MATERIAL_ID), Term::string(&material.id));
        for (tag, title) in &material.title {
            graph.add(&subject, &node(iri::HAS_TITLE), lang(title, tag));
        }
        for (tag, body) in &material.body {
            graph.add(&subject, &node(iri::HAS_TEXT), lang(body, tag));
        }
        if let Some(source) = &material.source {
            graph.add(&subject, &node(iri::DC_SOURCE), Term::string(source));
        }
    }
    for question in &study.questions {
        let subject = m.question(&question.id);
        graph.add(&subject, &a, node(iri::QUESTION));
        graph.add(&subject, &node(iri::QUESTION_ID), Term::string(&question.id));
        for (tag, text) in &question.text {
            graph.add(&subject, &node(iri::HAS_TEXT), lang(text, tag));
        }
        for material in &question.material_ids {
            graph.add(&subject, &node(iri::REFERENCES_MATERIAL), m.material(material));
        }
    }
}

/// The run activity and the models it used.
pub fn materialize_run(graph: &mut Graph, study: &Study, run_id: &str, models: &[String], started: DateTime<Utc>) {
    let m = Minter::new(&study.base_iri);
    let a = node(iri::RDF_TYPE);
    let run = m.run(run_id);
    graph.add(&run, &a, node(iri::EXPERIMENT_RUN));
    graph.add(&run, &node(iri::RUN_ID), Term::string(run_id));
    graph.add(&run, &node(iri::RUN_OF_STUDY), m.study(&study.id));
    graph.add(&run, &node(iri::PROV_STARTED_AT_TIME), Term::date_time(started));
    for model in models {
        let subject = m.model(model);
        graph.add(&subject, &a, node(iri::MODEL));
        graph.add(&subject, &node(iri::MODEL_NAME), Term::string(model));
        graph.add(&run, &node(iri::USES_MODEL), subject.clone());
        graph.add(&run, &node(iri::PROV_WAS_ASSOCIATED_WITH), subject);
    }
}

/// Adds one Answer node and returns its IRI. Error trials get an empty
/// language-tagged text plus the error message.
pub fn materialize_answer(graph: &mut Graph, study: &Study, run_id: &str, record: &TrialRecord) -> Term {
    let m = Minter::new(&study.base_iri);
    let key = &record.key;
    let answer = m.answer(key, run_id);
    let run = m.run(run_id);
    graph.add(&answer, &node(iri::RDF_TYPE), node(iri::ANSWER));
    graph.add(&answer, &node(iri::HAS_GIVEN_FOR), m.question(&key.question_id));
    graph.add(&answer, &node(iri::HAS_TEXT), lang(record.text(), &key.language));
    graph.add(&answer, &node(iri::DC_LANGUAGE), Term::string(&key.language));
    graph.add(&answer, &node(iri::IN_LANGUAGE_PROFILE), m.language(&key.language));
    graph.add(&answer, &node(iri::HAS_CONTEXT_SETTING), m.condition(key.condition));
    graph.add(&answer, &node(iri::PART_OF_RUN), run.clone());
    graph.add(&answer, &node(iri::PROV_WAS_GENERATED_BY), run);
    graph.add(&answer, &node(iri::PROV_WAS_ATTRIBUTED_TO), m.model(&key.model));
    graph.add(&answer, &node(iri::PROV_GENERATED_AT_TIME), Term::date_time(record.generated_at));
    graph.add(&answer, &node(iri::PROMPT_FINGERPRINT), Term::string(&record.fingerprint));
    graph.add(&answer, &node(iri::ADAPTER_NAME), Term::string(&record.adapter));
    graph.add(&answer, &node(iri::ATTEMPT_COUNT), Term::integer(record.attempts as i64));
    graph.add(&answer, &node(iri::LATENCY_MS), Term::integer(record.latency_ms as i64));
    graph.add(&answer, &node(iri::IS_ERROR_TRIAL), Term::boolean(record.is_error()));
    if let TrialOutcome::Failed(message) = &record.outcome {
        graph.add(&answer, &node(iri::ERROR_MESSAGE), Term::string(message));
    }
    if key.condition.has_context() && study.inline_materials {
        if let Ok(question) = study.question(&key.question_id) {
            for material in &question.material_ids {
                graph.add(&answer, &node(iri::HAS_USED_MATERIAL), m.material(material));
            }
        }
    }
    answer
}

/// The complete collected-stage graph for one run.
pub fn materialize_trials(
    study: &Study,
    run_id: &str,
    models: &[String],
    started: DateTime<Utc>,
    records: &[TrialRecord],
) -> Graph {
    let mut graph = Graph::new();
    materialize_study(&mut graph, study);
    materialize_run(&mut graph, study, run_id, models, started);
    for record in records {
        materialize_answer(&mut graph, study, run_id, record);
    }
    graph
}

/// Per-model counts of answered and failed trials.
pub fn outcome_summary(records: &[TrialRecord]) -> BTreeMap<String, (usize, usize)> {
    let mut summary: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in records {
        let entry = summary.entry(r.key.model.clone()).or_default();
        if r.is_error() {
            entry.1 += 1;
        } else {
            entry.0 += 1;
        }
    }
    summary
}

impl fmt::Display for TrialOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrialOutcome::Answered(text) => write!(f, "answered: {text}"),
            TrialOutcome::Failed(error) => write!(f, "failed: {error}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{builtin_shapes, validate, ShapeStage};
    use crate::studydef::{parse_study, tests::tiny_study_json};
    use chrono::TimeZone;
    use std::io::Read;
    use std::net::TcpListener;

    fn clock() -> FixedClock {
        FixedClock::new(Utc.with_ymd_and_hms(2025, 3, 1, 12, 0, 0).unwrap())
    }

    struct Scripted {
        name: String,
        failures_before_success: usize,
        error: fn() -> AdapterError,
        calls: AtomicUsize,
    }

    impl Scripted {
        fn ok(name: &str) -> Self {
            Self { name: name.into(), failures_before_success: 0, error: || AdapterError::Other("x".into()), calls: AtomicUsize::new(0) }
        }
    }

    impl ModelAdapter for Scripted {
        fn name(&self) -> &str {
            &self.name
        }

        fn kind(&self) -> &str {
            "scripted"
        }

        fn invoke(&self, prompt: &PromptInput) -> Result<ModelResponse, AdapterError> {
            let call = self.calls.fetch_add(1, Ordering::SeqCst);
            if call < self.failures_before_success {
                return Err((self.error)());
            }
            Ok(ModelResponse {
                text: format!("{} {} {}", self.name, prompt.language, prompt.condition),
                latency_ms: 7,
                metadata: Value::Null,
            })
        }
    }

    #[test]
    fn slug_examples() {
        assert_eq!(model_slug("gemini-2.0-flash"), "gemini-2-0-flash");
        assert_eq!(model_slug("gpt-4o-mini"), "gpt-4o-mini");
        assert_eq!(model_slug("Org/Model_v1"), "org-model-v1");
    }

    #[test]
    fn fingerprint_depends_on_every_component() {
        let study = parse_study(&tiny_study_json().to_string()).unwrap();
        let p = build_prompt(&study, "q01", ConditionKind::Complete, "de").unwrap();
        let base = fingerprint("m", &p);
        assert_eq!(base.len(), 64);
        assert_eq!(base, fingerprint("m", &p));
        assert_ne!(base, fingerprint("n", &p));
        let en = build_prompt(&study, "q01", ConditionKind::Complete, "en").unwrap();
        assert_ne!(base, fingerprint("m", &en));
        let mut altered = p.clone();
        altered.messages[1].content.push(' ');
        assert_ne!(base, fingerprint("m", &altered));
    }

    #[test]
    fn run_is_ordered_and_complete() {
        let study = parse_study(&tiny_study_json().to_string()).unwrap();
        let adapters: Vec<Arc<dyn ModelAdapter>> = vec![Arc::new(Scripted::ok("b-model")), Arc::new(Scripted::ok("a-model"))];
        let mut config = RunConfig::new("r1");
        config.parallelism = 3;
        let records = run_experiment(&study, &adapters, &config, &clock()).unwrap();
        assert_eq!(records.len(), 2 * 2 * 4);
        assert_eq!(records[0].key.model, "b-model");
        assert_eq!(records[0].key.language, "de");
        assert_eq!(records[0].key.condition, ConditionKind::Complete);
        assert_eq!(records[15].key.model, "a-model");
        assert_eq!(records[15].key.condition, ConditionKind::NoContext);
        assert!(records.iter().all(|r| r.text() == format!("{} {} {}", r.key.model, r.key.language, r.key.condition)));
    }

    #[test]
    fn retries_with_doubling_backoff() {
        let study = parse_study(&tiny_study_json().to_string()).unwrap();
        let flaky = Scripted {
            name: "m".into(),
            failures_before_success: 2,
            error: || AdapterError::Http { status: 503, body: String::new() },
            calls: AtomicUsize::new(0),
        };
        let mut config = RunConfig::new("r");
        config.conditions = vec![ConditionKind::Complete];
        config.languages = vec!["de".into()];
        config.parallelism = 1;
        config.base_backoff = Duration::from_millis(100);
        let clock = clock();
        let records = run_experiment(&study, &[Arc::new(flaky) as Arc<dyn ModelAdapter>], &config, &clock).unwrap();
        assert_eq!(records[0].attempts, 3);
        assert!(!records[0].is_error());
        assert_eq!(clock.sleeps(), [Duration::from_millis(100), Duration::from_millis(200)]);
    }

    #[test]
    fn exhausted_retries_become_error_trials() {
        let study = parse_study(&tiny_study_json().to_string()).unwrap();
        let broken = Scripted {
            name: "m".into(),
            failures_before_success: usize::MAX,
            error: || AdapterError::Transport("connection reset".into()),
            calls: AtomicUsize::new(0),
        };
        let mut config = RunConfig::new("r");
        config.conditions = vec![ConditionKind::NoContext];
        config.max_retries = 2;
        let clock = clock();
        let records = run_experiment(&study, &[Arc::new(broken) as Arc<dyn ModelAdapter>], &config, &clock).unwrap();
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(|r| r.is_error() && r.attempts == 3));

        let graph = materialize_trials(&study, "r", &["m".into()], clock.now(), &records);
        assert!(validate(&graph, &builtin_shapes(ShapeStage::Collected)).is_empty());
        let answer = Minter::new(&study.base_iri).answer(&records[0].key, "r");
        assert_eq!(graph.object(&answer, &node(iri::IS_ERROR_TRIAL)), Some(&Term::boolean(true)));
        assert_eq!(graph.object(&answer, &node(iri::HAS_TEXT)), Some(&lang("", "de")));
    }

    #[test]
    fn cassette_record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let study = parse_study(&tiny_study_json().to_string()).unwrap();
        let clock = Arc::new(clock());
        let cassette = Arc::new(Cassette::open(&path).unwrap());
        let recorder: Arc<dyn ModelAdapter> =
            Arc::new(RecordingAdapter::new(Arc::new(Scripted::ok("m")), cassette.clone(), clock.clone()));
        let config = RunConfig::new("r");
        let recorded = run_experiment(&study, &[recorder], &config, clock.as_ref()).unwrap();
        assert_eq!(cassette.len(), 8);

        let replay_cassette = Arc::new(Cassette::load(&path).unwrap());
        assert_eq!(replay_cassette.models(), ["m"]);
        let replay: Arc<dyn ModelAdapter> = Arc::new(ReplayAdapter::new("m", replay_cassette.clone()));
        let replayed = run_experiment(&study, &[replay], &config, clock.as_ref()).unwrap();
        let texts = |rs: &[TrialRecord]| rs.iter().map(|r| r.text().to_string()).collect::<Vec<_>>();
        assert_eq!(texts(&recorded), texts(&replayed));

        let record = replay_cassette.get(&recorded[0].fingerprint).unwrap();
        assert!(matches!(replay_cassette.append(record), Err(CassetteError::Duplicate(_))));

        let other: Arc<dyn ModelAdapter> = Arc::new(ReplayAdapter::new("other", replay_cassette));
        let err = run_experiment(&study, &[other], &config, clock.as_ref()).unwrap_err();
        assert!(err.to_string().contains("q01/other/de/complete"), "{err}");
    }

    #[test]
    fn cassette_rejects_duplicates_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let study = parse_study(&tiny_study_json().to_string()).unwrap();
        let prompt = build_prompt(&study, "q01", ConditionKind::Complete, "de").unwrap();
        let record = CassetteRecord::new("m", &prompt, "112", 1, clock().now());
        let line = serde_json::to_string(&record).unwrap();
        std::fs::write(&path, format!("{{\"cassette_version\":1,\"fp_algo\":\"sha256/v1\"}}\n{line}\n{line}\n")).unwrap();
        assert!(matches!(Cassette::load(&path), Err(CassetteError::Duplicate(_))));
        std::fs::write(&path, format!("{{\"cassette_version\":2,\"fp_algo\":\"sha256/v1\"}}\n{line}\n")).unwrap();
        assert!(matches!(Cassette::load(&path), Err(CassetteError::Format { line: 1, .. })));
    }

    fn serve_once(status: &'static str, body: &'static str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut request = Vec::new();
            let mut buf = [0u8; 4096];
            loop {
                let n = stream.read(&mut buf).unwrap();
                request.extend_from_slice(&buf[..n]);
                let text = String::from_utf8_lossy(&request).to_string();
                if let Some(split) = text.find("\r\n\r\n") {
                    let length = text[..split]
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                        .unwrap_or(0);
                    let chunked = text[..split].to_ascii_lowercase().contains("transfer-encoding: chunked");
                    let done = if chunked { text.ends_with("0\r\n\r\n") } else { request.len() >= split + 4 + length };
                    if done {
                        break;
                    }
                }
                if n == 0 {
                    break;
                }
            }
            let reply = format!(
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
            String::from_utf8_lossy(&request).to_string()
        });
        (url, handle)
    }

    #[test]
    fn openai_chat_round_trip() {
        let (url, server) = serve_once(
            "200 OK",
            r#"{"choices":[{"message":{"role":"assistant","content":"Die Nummer ist 112."},"finish_reason":"stop"}],"usage":{"total_tokens":9}}"#,
        );
        std::env::set_var("SQARE_TEST_OPENAI_KEY", "secret-token");
        let adapter = HttpAdapter::new(HttpAdapterConfig {
            model: "gpt-4o-mini".into(),
            api: ApiStyle::OpenaiChat,
            endpoint: Some(format!("{url}/v1/chat/completions")),
            auth_env: Some("SQARE_TEST_OPENAI_KEY".into()),
            temperature: 0.0,
            timeout_secs: 10,
        });
        let study = parse_study(&tiny_study_json().to_string()).unwrap();
        let prompt = build_prompt(&study, "q01", ConditionKind::Complete, "de").unwrap();
        let response = adapter.invoke(&prompt).unwrap();
        assert_eq!(response.text, "Die Nummer ist 112.");
        assert_eq!(response.metadata["usage"]["total_tokens"], 9);
        let request = server.join().unwrap();
        assert!(request.starts_with("POST /v1/chat/completions"));
        assert!(request.contains("Bearer secret-token"));
        let body: Value = serde_json::from_str(request.split("\r\n\r\n").nth(1).unwrap()).unwrap();
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["model"], "gpt-4o-mini");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], prompt.user());
    }

    #[test]
    fn gemini_round_trip_and_server_error() {
        let (url, server) =
            serve_once("200 OK", r#"{"candidates":[{"content":{"parts":[{"text":"112"}]},"finishReason":"STOP"}]}"#);
        let config = HttpAdapterConfig {
            model: "gemini-2.0-flash".into(),
            api: ApiStyle::Gemini,
            endpoint: Some(url),
            auth_env: None,
            temperature: 0.0,
            timeout_secs: 10,
        };
        let study = parse_study(&tiny_study_json().to_string()).unwrap();
        let prompt = build_prompt(&study, "q01", ConditionKind::NoContext, "en").unwrap();
        assert_eq!(HttpAdapter::new(config.clone()).invoke(&prompt).unwrap().text, "112");
        let request = server.join().unwrap();
        assert!(request.starts_with("POST /models/gemini-2.0-flash:generateContent"));
        assert!(request.contains("systemInstruction"));

        let (url, server) = serve_once("503 Service Unavailable", r#"{"error":"busy"}"#);
        let err = HttpAdapter::new(HttpAdapterConfig { endpoint: Some(url), ..config }).invoke(&prompt).unwrap_err();
        server.join().unwrap();
        assert!(matches!(err, AdapterError::Http { status: 503, .. }));
        assert!(err.is_retryable());
    }

    #[test]
    fn missing_credential_is_fatal() {
        let adapter = HttpAdapter::new(HttpAdapterConfig {
            model: "m".into(),
            api: ApiStyle::OpenaiChat,
            endpoint: Some("http://127.0.0.1:9".into()),
            auth_env: Some("SQARE_TEST_UNSET_VARIABLE".into()),
            temperature: 0.0,
            timeout_secs: 1,
        });
        let study = parse_study(&tiny_study_json().to_string()).unwrap();
        let err = run_experiment(&study, &[Arc::new(adapter) as Arc<dyn ModelAdapter>], &RunConfig::new("r"), &clock())
            .unwrap_err();
        assert!(matches!(err, RunError::Fatal { source: AdapterError::MissingCredential(_), .. }));
    }

    #[test]
    fn no_context_answers_have_no_material() {
        let study = parse_study(&tiny_study_json().to_string()).unwrap();
        let adapters: Vec<Arc<dyn ModelAdapter>> = vec![Arc::new(Scripted::ok("m"))];
        let records = run_experiment(&study, &adapters, &RunConfig::new("r"), &clock()).unwrap();
        let graph = materialize_trials(&study, "r", &["m".into()], clock().now(), &records);
        let violations = validate(&graph, &builtin_shapes(ShapeStage::Collected));
        assert!(violations.is_empty(), "{violations:?}");
        let tsv = render_trials_tsv(&records);
        assert_eq!(tsv.lines().count(), 9);
        assert!(tsv.lines().nth(1).unwrap().starts_with("q01\tm\tde\tcomplete\tok\t1\t7\t"));
    }
}
