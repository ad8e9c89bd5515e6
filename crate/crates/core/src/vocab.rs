//! The evaluation vocabulary (`http://purl.org/sqare#`) and its T-Box.
//!
//! The registry holds 14 classes and 57 properties with German and English
//! labels. The classes `Question`, `Answer`, `ValidationResult` and `Material`
//! and the properties `hasText`, `hasGivenFor`, `hasUsedMaterial`,
//! `hasValidationResult`, `isValid` and `matchesFactual` are the published
//! core; the remaining terms cover what this toolkit records (provenance,
//! conditions, models, runs, metrics).

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::graph::{
    validate_iri, Graph, PrefixMap, Term, RDF_LANG_STRING, XSD_BOOLEAN, XSD_DECIMAL, XSD_INTEGER,
    XSD_STRING,
};

pub const SQARE_NS: &str = "http://purl.org/sqare#";
pub const ONTOLOGY_IRI: &str = "http://purl.org/sqare";
pub const PROV_NS: &str = "http://www.w3.org/ns/prov#";
pub const DCTERMS_NS: &str = "http://purl.org/dc/terms/";
pub const XSD_NS: &str = crate::graph::XSD_NS;
pub const RDF_NS: &str = crate::graph::RDF_NS;
pub const RDFS_NS: &str = "http://www.w3.org/2000/01/rdf-schema#";
pub const OWL_NS: &str = "http://www.w3.org/2002/07/owl#";

/// IRIs of vocabulary and external terms used by the emitters.
pub mod iri {
    macro_rules! terms {
        ($ns:literal: $($name:ident = $local:literal),* $(,)?) => {
            $(pub const $name: &str = concat!($ns, $local);)*
        };
    }

    terms! { "http://purl.org/sqare#":
        QUESTION = "Question",
        ANSWER = "Answer",
        VALIDATION_RESULT = "ValidationResult",
        MATERIAL = "Material",
        MODEL = "Model",
        EXPERIMENT_RUN = "ExperimentRun",
        CONTEXT_SETTING = "ContextSetting",
        STUDY = "Study",
        LANGUAGE_PROFILE = "LanguageProfile",

        HAS_GIVEN_FOR = "hasGivenFor",
        HAS_USED_MATERIAL = "hasUsedMaterial",
        HAS_VALIDATION_RESULT = "hasValidationResult",
        HAS_CONTEXT_SETTING = "hasContextSetting",
        PART_OF_RUN = "partOfRun",
        IN_LANGUAGE_PROFILE = "inLanguageProfile",
        USES_MODEL = "usesModel",
        RUN_OF_STUDY = "runOfStudy",
        REFERENCES_MATERIAL = "referencesMaterial",
        HAS_LANGUAGE_PROFILE = "hasLanguageProfile",

        HAS_TEXT = "hasText",
        HAS_TITLE = "hasTitle",
        IS_VALID = "isValid",
        MATCHES_FACTUAL = "matchesFactual",
        MATCHES_CONTEXT = "matchesContext",
        SHOWS_KNOWLEDGE_LEAKAGE = "showsKnowledgeLeakage",
        ABSTAINED = "abstained",
        VALIDATION_METHOD = "validationMethod",
        VALIDITY_POLICY = "validityPolicy",
        RATIONALE = "rationale",
        IS_ERROR_TRIAL = "isErrorTrial",
        ERROR_MESSAGE = "errorMessage",
        LATENCY_MS = "latencyMs",
        ADAPTER_NAME = "adapterName",
        PROMPT_FINGERPRINT = "promptFingerprint",
        ATTEMPT_COUNT = "attemptCount",
        RUN_ID = "runId",
        QUESTION_ID = "questionId",
        MATERIAL_ID = "materialId",
        CONDITION_NAME = "conditionName",
        MODEL_NAME = "modelName",
        LANGUAGE_TAG = "languageTag",
        STUDY_ID = "studyId",
    }

    terms! { "http://www.w3.org/ns/prov#":
        PROV_ENTITY = "Entity",
        PROV_ACTIVITY = "Activity",
        PROV_SOFTWARE_AGENT = "SoftwareAgent",
        PROV_GENERATED_AT_TIME = "generatedAtTime",
        PROV_WAS_ATTRIBUTED_TO = "wasAttributedTo",
        PROV_WAS_GENERATED_BY = "wasGeneratedBy",
        PROV_WAS_ASSOCIATED_WITH = "wasAssociatedWith",
        PROV_STARTED_AT_TIME = "startedAtTime",
    }

    terms! { "http://purl.org/dc/terms/":
        DC_LANGUAGE = "language",
        DC_TITLE = "title",
        DC_DESCRIPTION = "description",
        DC_CREATOR = "creator",
        DC_CREATED = "created",
        DC_LICENSE = "license",
        DC_SOURCE = "source",
    }

    terms! { "http://www.w3.org/2000/01/rdf-schema#":
        RDFS_LABEL = "label",
        RDFS_COMMENT = "comment",
        RDFS_DOMAIN = "domain",
        RDFS_RANGE = "range",
        RDFS_SUB_CLASS_OF = "subClassOf",
        RDFS_IS_DEFINED_BY = "isDefinedBy",
    }

    terms! { "http://www.w3.org/2002/07/owl#":
        OWL_ONTOLOGY = "Ontology",
        OWL_CLASS = "Class",
        OWL_OBJECT_PROPERTY = "ObjectProperty",
        OWL_DATATYPE_PROPERTY = "DatatypeProperty",
        OWL_VERSION_INFO = "versionInfo",
    }

    pub const RDF_TYPE: &str = crate::graph::RDF_TYPE;
}

/// Shorthand for a known-good IRI constant.
pub fn node(iri: &str) -> Term {
    Term::iri_unchecked(iri)
}

#[derive(Debug, Error, PartialEq)]
pub enum VocabError {
    #[error("unknown vocabulary term {0:?}")]
    UnknownTerm(String),
    #[error("invalid registry: {0}")]
    InvalidRegistry(String),
}

/// Absolute IRI of a vocabulary or standard-namespace term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermIri(String);

impl TermIri {
    pub fn new(iri: impl Into<String>) -> Result<Self, VocabError> {
        let iri = iri.into();
        validate_iri(&iri).map_err(|e| VocabError::InvalidRegistry(e.to_string()))?;
        Ok(Self(iri))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn local_name(&self) -> Option<&str> {
        self.0.strip_prefix(SQARE_NS)
    }

    pub fn to_term(&self) -> Term {
        Term::iri_unchecked(self.0.clone())
    }
}

impl fmt::Display for TermIri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    Class,
    ObjectProperty,
    DatatypeProperty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Text {
    pub de: String,
    pub en: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabTerm {
    pub iri: TermIri,
    pub kind: TermKind,
    pub label: Text,
    pub comment: Text,
    pub domain: Option<TermIri>,
    pub range: Option<TermIri>,
    /// PROV alignment for classes.
    pub sub_class_of: Option<TermIri>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabRegistry {
    terms: Vec<VocabTerm>,
    prefixes: PrefixMap,
}

/// Prefixes used for every Turtle rendering of our graphs.
pub fn standard_prefixes() -> PrefixMap {
    [
        ("sqare", SQARE_NS),
        ("prov", PROV_NS),
        ("dcterms", DCTERMS_NS),
        ("xsd", XSD_NS),
        ("rdf", RDF_NS),
        ("rdfs", RDFS_NS),
        ("owl", OWL_NS),
    ]
    .into_iter()
    .map(|(p, ns)| (p.to_string(), ns.to_string()))
    .collect()
}

type ClassRow = (&'static str, &'static str, &'static str, &'static str, &'static str, Option<&'static str>);
type PropertyRow = (
    &'static str,
    TermKind,
    &'static str,
    &'static str,
    &'static str,
    &'static str,
    Option<&'static str>,
    &'static str,
);

// (local, en label, de label, en comment, de comment, PROV superclass)
const CLASSES: [ClassRow; 14] = [
    ("Question", "Question", "Frage", "A question posed to a language model.", "Eine an ein Sprachmodell gestellte Frage.", Some("Entity")),
    ("Answer", "Answer", "Antwort", "A model response to one question under one context condition and language.", "Eine Modellantwort auf eine Frage unter einer Kontextbedingung und Sprache.", Some("Entity")),
    ("ValidationResult", "Validation result", "Validierungsergebnis", "Correctness and context-adherence flags for one answer.", "Korrektheits- und Kontexttreue-Merkmale einer Antwort.", Some("Entity")),
    ("Material", "Material", "Material", "Reference material that can be supplied as context.", "Referenzmaterial, das als Kontext bereitgestellt werden kann.", Some("Entity")),
    ("Model", "Model", "Modell", "A language model that produced answers.", "Ein Sprachmodell, das Antworten erzeugt hat.", Some("SoftwareAgent")),
    ("ExperimentRun", "Experiment run", "Experimentdurchlauf", "One execution of a study against one or more models.", "Eine Ausführung einer Studie mit einem oder mehreren Modellen.", Some("Activity")),
    ("ContextSetting", "Context setting", "Kontextbedingung", "A context condition: complete, incomplete, conflicting or no context.", "Eine Kontextbedingung: vollständig, unvollständig, widersprüchlich oder ohne Kontext.", None),
    ("PromptRecord", "Prompt record", "Prompt-Protokoll", "The exact messages sent to a model.", "Die genauen an ein Modell gesendeten Nachrichten.", Some("Entity")),
    ("Judgment", "Judgment", "Beurteilung", "A single assessment act by a person or an automatic judge.", "Eine einzelne Bewertung durch eine Person oder einen automatischen Prüfer.", Some("Activity")),
    ("Study", "Study", "Studie", "An evaluation design: questions, materials and conditions.", "Ein Evaluationsdesign aus Fragen, Materialien und Bedingungen.", Some("Entity")),
    ("QuestionSet", "Question set", "Fragenkatalog", "An ordered collection of questions.", "Eine geordnete Sammlung von Fragen.", Some("Entity")),
    ("MaterialCollection", "Material collection", "Materialsammlung", "A collection of reference materials.", "Eine Sammlung von Referenzmaterialien.", Some("Entity")),
    ("LanguageProfile", "Language profile", "Sprachprofil", "A study language identified by its BCP47 tag.", "Eine Studiensprache, identifiziert durch ihr BCP47-Kürzel.", None),
    ("MetricResult", "Metric result", "Metrikergebnis", "An aggregate metric computed from validation results.", "Eine aus Validierungsergebnissen berechnete aggregierte Kennzahl.", Some("Entity")),
];

use TermKind::{DatatypeProperty as D, ObjectProperty as O};

// (local, kind, en label, de label, en comment, de comment, domain, range)
const PROPERTIES: [PropertyRow; 57] = [
    ("hasGivenFor", O, "has been given for", "wurde gegeben für", "Links an answer to the question it answers.", "Verknüpft eine Antwort mit der beantworteten Frage.", Some("Answer"), "Question"),
    ("hasUsedMaterial", O, "has used material", "hat Material verwendet", "Material supplied in the prompt that produced the answer.", "Im Prompt bereitgestelltes Material, das zur Antwort führte.", Some("Answer"), "Material"),
    ("hasValidationResult", O, "has validation result", "hat Validierungsergebnis", "Links an answer to its validation result.", "Verknüpft eine Antwort mit ihrem Validierungsergebnis.", Some("Answer"), "ValidationResult"),
    ("hasContextSetting", O, "has context setting", "hat Kontextbedingung", "Context condition under which the answer was produced.", "Kontextbedingung, unter der die Antwort entstand.", Some("Answer"), "ContextSetting"),
    ("partOfRun", O, "part of run", "Teil des Durchlaufs", "Experiment run that produced the answer.", "Experimentdurchlauf, der die Antwort erzeugte.", Some("Answer"), "ExperimentRun"),
    ("hasPromptRecord", O, "has prompt record", "hat Prompt-Protokoll", "Messages that produced the answer.", "Nachrichten, die die Antwort erzeugten.", Some("Answer"), "PromptRecord"),
    ("inLanguageProfile", O, "in language profile", "im Sprachprofil", "Study language of the answer.", "Studiensprache der Antwort.", Some("Answer"), "LanguageProfile"),
    ("usesModel", O, "uses model", "verwendet Modell", "A model queried during the run.", "Ein im Durchlauf abgefragtes Modell.", Some("ExperimentRun"), "Model"),
    ("runOfStudy", O, "run of study", "Durchlauf der Studie", "Study executed by the run.", "Vom Durchlauf ausgeführte Studie.", Some("ExperimentRun"), "Study"),
    ("hasQuestionSet", O, "has question set", "hat Fragenkatalog", "Question set of a study.", "Fragenkatalog einer Studie.", Some("Study"), "QuestionSet"),
    ("containsQuestion", O, "contains question", "enthält Frage", "Member question of a question set.", "Frage eines Fragenkatalogs.", Some("QuestionSet"), "Question"),
    ("hasMaterialCollection", O, "has material collection", "hat Materialsammlung", "Material collection of a study.", "Materialsammlung einer Studie.", Some("Study"), "MaterialCollection"),
    ("containsMaterial", O, "contains material", "enthält Material", "Member material of a collection.", "Material einer Sammlung.", Some("MaterialCollection"), "Material"),
    ("referencesMaterial", O, "references material", "verweist auf Material", "Material relevant to a question.", "Für eine Frage relevantes Material.", Some("Question"), "Material"),
    ("hasLanguageProfile", O, "has language profile", "hat Sprachprofil", "A language of the study.", "Eine Sprache der Studie.", Some("Study"), "LanguageProfile"),
    ("hasJudgment", O, "has judgment", "hat Beurteilung", "Assessment act behind a validation result.", "Bewertung hinter einem Validierungsergebnis.", Some("ValidationResult"), "Judgment"),
    ("hasMetricResult", O, "has metric result", "hat Metrikergebnis", "Metric computed for the run.", "Für den Durchlauf berechnete Kennzahl.", Some("ExperimentRun"), "MetricResult"),
    ("metricForModel", O, "metric for model", "Metrik für Modell", "Model a metric describes.", "Modell, das eine Kennzahl beschreibt.", Some("MetricResult"), "Model"),
    ("comparedWithModel", O, "compared with model", "verglichen mit Modell", "Second model of a paired comparison.", "Zweites Modell eines gepaarten Vergleichs.", Some("MetricResult"), "Model"),
    ("metricForContextSetting", O, "metric for context setting", "Metrik für Kontextbedingung", "Context condition a metric describes.", "Kontextbedingung, die eine Kennzahl beschreibt.", Some("MetricResult"), "ContextSetting"),
    ("metricForLanguageProfile", O, "metric for language profile", "Metrik für Sprachprofil", "Language a metric describes.", "Sprache, die eine Kennzahl beschreibt.", Some("MetricResult"), "LanguageProfile"),
    ("hasText", D, "has text", "hat Text", "Language-tagged text of a question, answer or material.", "Sprachmarkierter Text einer Frage, Antwort oder eines Materials.", None, "langString"),
    ("hasTitle", D, "has title", "hat Titel", "Language-tagged title of a material.", "Sprachmarkierter Titel eines Materials.", Some("Material"), "langString"),
    ("isValid", D, "is valid", "ist gültig", "Whether the answer is judged correct.", "Ob die Antwort als korrekt beurteilt wird.", Some("ValidationResult"), "boolean"),
    ("matchesFactual", D, "matches factual", "entspricht Fakten", "Whether the answer states the ground-truth fact.", "Ob die Antwort die zutreffende Tatsache nennt.", Some("ValidationResult"), "boolean"),
    ("matchesContext", D, "matches context", "entspricht Kontext", "Whether the answer repeats the claim of the supplied context.", "Ob die Antwort die Aussage des gegebenen Kontexts wiederholt.", Some("ValidationResult"), "boolean"),
    ("showsKnowledgeLeakage", D, "shows knowledge leakage", "zeigt Wissensdurchsickern", "Under conflicting context: factual answer that ignores the supplied claim.", "Bei widersprüchlichem Kontext: faktische Antwort, die die gegebene Aussage ignoriert.", Some("ValidationResult"), "boolean"),
    ("abstained", D, "abstained", "enthielt sich", "Whether the answer declines to answer.", "Ob die Antwort eine Auskunft verweigert.", Some("ValidationResult"), "boolean"),
    ("validationMethod", D, "validation method", "Validierungsmethode", "auto or human.", "auto oder human.", Some("ValidationResult"), "string"),
    ("validityPolicy", D, "validity policy", "Gültigkeitsregel", "Rule that derived isValid from the other flags.", "Regel, nach der isValid aus den übrigen Merkmalen folgt.", Some("ValidationResult"), "string"),
    ("rationale", D, "rationale", "Begründung", "Why the flags were set.", "Warum die Merkmale gesetzt wurden.", Some("ValidationResult"), "string"),
    ("isErrorTrial", D, "is error trial", "ist Fehlversuch", "Whether the model call failed after all retries.", "Ob der Modellaufruf nach allen Wiederholungen fehlschlug.", Some("Answer"), "boolean"),
    ("errorMessage", D, "error message", "Fehlermeldung", "Failure description of an error trial.", "Fehlerbeschreibung eines Fehlversuchs.", Some("Answer"), "string"),
    ("latencyMs", D, "latency (ms)", "Latenz (ms)", "Model response time in milliseconds.", "Antwortzeit des Modells in Millisekunden.", Some("Answer"), "integer"),
    ("adapterName", D, "adapter name", "Adaptername", "Adapter that produced the answer.", "Adapter, der die Antwort erzeugte.", Some("Answer"), "string"),
    ("promptFingerprint", D, "prompt fingerprint", "Prompt-Fingerabdruck", "Hash identifying the exact request.", "Hash, der die genaue Anfrage identifiziert.", Some("Answer"), "string"),
    ("attemptCount", D, "attempt count", "Anzahl Versuche", "Number of model calls made for the trial.", "Anzahl der Modellaufrufe für den Versuch.", Some("Answer"), "integer"),
    ("runId", D, "run id", "Durchlauf-ID", "Identifier of an experiment run.", "Kennung eines Experimentdurchlaufs.", Some("ExperimentRun"), "string"),
    ("questionId", D, "question id", "Fragen-ID", "Study-local question identifier.", "Studienweite Kennung einer Frage.", Some("Question"), "string"),
    ("materialId", D, "material id", "Material-ID", "Study-local material identifier.", "Studienweite Kennung eines Materials.", Some("Material"), "string"),
    ("conditionName", D, "condition name", "Bedingungsname", "complete, incomplete, conflicting or no_context.", "complete, incomplete, conflicting oder no_context.", Some("ContextSetting"), "string"),
    ("modelName", D, "model name", "Modellname", "Provider name of a model.", "Anbietername eines Modells.", Some("Model"), "string"),
    ("languageTag", D, "language tag", "Sprachkürzel", "BCP47 tag of a language profile.", "BCP47-Kürzel eines Sprachprofils.", Some("LanguageProfile"), "string"),
    ("systemPrompt", D, "system prompt", "Systemprompt", "System message sent to the model.", "An das Modell gesendete Systemnachricht.", Some("PromptRecord"), "langString"),
    ("userPrompt", D, "user prompt", "Benutzerprompt", "User message sent to the model.", "An das Modell gesendete Benutzernachricht.", Some("PromptRecord"), "langString"),
    ("temperature", D, "temperature", "Temperatur", "Sampling temperature used for the run.", "Im Durchlauf verwendete Sampling-Temperatur.", Some("ExperimentRun"), "decimal"),
    ("studyId", D, "study id", "Studien-ID", "Identifier of a study.", "Kennung einer Studie.", Some("Study"), "string"),
    ("metricName", D, "metric name", "Metrikname", "Name of the computed metric.", "Name der berechneten Kennzahl.", Some("MetricResult"), "string"),
    ("validCount", D, "valid count", "Anzahl gültig", "Number of valid answers in the cell.", "Anzahl gültiger Antworten in der Zelle.", Some("MetricResult"), "integer"),
    ("totalCount", D, "total count", "Gesamtanzahl", "Number of answers in the cell.", "Anzahl der Antworten in der Zelle.", Some("MetricResult"), "integer"),
    ("rateValue", D, "rate value", "Rate", "A proportion in [0, 1].", "Ein Anteil in [0, 1].", Some("MetricResult"), "decimal"),
    ("discordantPairs", D, "discordant pairs", "diskordante Paare", "Questions on which exactly one model is correct.", "Fragen, bei denen genau ein Modell richtig liegt.", Some("MetricResult"), "integer"),
    ("pValue", D, "p-value", "p-Wert", "Exact two-sided McNemar p-value.", "Exakter zweiseitiger McNemar-p-Wert.", Some("MetricResult"), "decimal"),
    ("deltaAccuracy", D, "accuracy difference", "Genauigkeitsdifferenz", "Accuracy of the first minus the second model.", "Genauigkeit des ersten minus des zweiten Modells.", Some("MetricResult"), "decimal"),
    ("ciLower", D, "lower confidence bound", "untere Konfidenzgrenze", "Lower 95% bound of the accuracy difference.", "Untere 95%-Grenze der Genauigkeitsdifferenz.", Some("MetricResult"), "decimal"),
    ("ciUpper", D, "upper confidence bound", "obere Konfidenzgrenze", "Upper 95% bound of the accuracy difference.", "Obere 95%-Grenze der Genauigkeitsdifferenz.", Some("MetricResult"), "decimal"),
    ("kappaValue", D, "kappa", "Kappa", "Cohen's kappa between two models.", "Cohens Kappa zwischen zwei Modellen.", Some("MetricResult"), "decimal"),
];

fn datatype_iri(short: &str) -> String {
    match short {
        "langString" => RDF_LANG_STRING.to_string(),
        "boolean" => XSD_BOOLEAN.to_string(),
        "integer" => XSD_INTEGER.to_string(),
        "decimal" => XSD_DECIMAL.to_string(),
        "string" => XSD_STRING.to_string(),
        other => unreachable!("unknown datatype shorthand {other}"),
    }
}

fn sq(local: &str) -> TermIri {
    TermIri(format!("{SQARE_NS}{local}"))
}

fn text(en: &str, de: &str) -> Text {
    Text { de: de.to_string(), en: en.to_string() }
}

/// The shipped vocabulary: classes first, then properties, in fixed order.
pub fn builtin_registry() -> VocabRegistry {
    let classes = CLASSES.iter().map(|&(local, en, de, c_en, c_de, parent)| VocabTerm {
        iri: sq(local),
        kind: TermKind::Class,
        label: text(en, de),
        comment: text(c_en, c_de),
        domain: None,
        range: None,
        sub_class_of: parent.map(|p| TermIri(format!("{PROV_NS}{p}"))),
    });
    let properties =
        PROPERTIES.iter().map(|&(local, kind, en, de, c_en, c_de, domain, range)| VocabTerm {
            iri: sq(local),
            kind,
            label: text(en, de),
            comment: text(c_en, c_de),
            domain: domain.map(sq),
            range: Some(match kind {
                TermKind::ObjectProperty => sq(range),
                _ => TermIri(datatype_iri(range)),
            }),
            sub_class_of: None,
        });
    VocabRegistry::new(classes.chain(properties).collect()).expect("builtin registry is valid")
}

impl VocabRegistry {
    pub fn new(terms: Vec<VocabTerm>) -> Result<Self, VocabError> {
        let mut seen = BTreeSet::new();
        let classes: BTreeSet<&TermIri> =
            terms.iter().filter(|t| t.kind == TermKind::Class).map(|t| &t.iri).collect();
        for term in &terms {
            if !seen.insert(&term.iri) {
                return Err(VocabError::InvalidRegistry(format!("duplicate term {}", term.iri)));
            }
            if term.label.en.trim().is_empty() {
                return Err(VocabError::InvalidRegistry(format!("{} has no English label", term.iri)));
            }
            let range_is_datatype = term.range.as_ref().map(|r| r.as_str().starts_with(XSD_NS) || r.as_str() == RDF_LANG_STRING);
            match term.kind {
                TermKind::ObjectProperty if range_is_datatype == Some(true) => {
                    return Err(VocabError::InvalidRegistry(format!("{} has a datatype range", term.iri)))
                }
                TermKind::DatatypeProperty if range_is_datatype == Some(false) => {
                    return Err(VocabError::InvalidRegistry(format!("{} has a class range", term.iri)))
                }
                _ => {}
            }
            if term.kind == TermKind::ObjectProperty {
                if let Some(range) = &term.range {
                    if range.local_name().is_some() && !classes.contains(range) {
                        return Err(VocabError::InvalidRegistry(format!(
                            "{} ranges over undeclared class {range}",
                            term.iri
                        )));
                    }
                }
            }
        }
        Ok(Self { terms, prefixes: standard_prefixes() })
    }

    pub fn empty() -> Self {
        Self { terms: Vec::new(), prefixes: standard_prefixes() }
    }

    pub fn terms(&self) -> &[VocabTerm] {
        &self.terms
    }

    pub fn prefixes(&self) -> &PrefixMap {
        &self.prefixes
    }

    pub fn classes(&self) -> impl Iterator<Item = &VocabTerm> {
        self.terms.iter().filter(|t| t.kind == TermKind::Class)
    }

    pub fn properties(&self) -> impl Iterator<Item = &VocabTerm> {
        self.terms.iter().filter(|t| t.kind != TermKind::Class)
    }

    pub fn get(&self, local_name: &str) -> Option<&VocabTerm> {
        self.terms.iter().find(|t| t.iri.local_name() == Some(local_name))
    }

    pub fn contains_iri(&self, iri: &str) -> bool {
        self.terms.iter().any(|t| t.iri.as_str() == iri)
    }

    /// `http://purl.org/sqare#` + `name`, if registered.
    pub fn term(&self, name: &str) -> Result<TermIri, VocabError> {
        self.get(name).map(|t| t.iri.clone()).ok_or_else(|| VocabError::UnknownTerm(name.to_string()))
    }
}

/// Looks a local name up in the built-in registry.
pub fn term(name: &str) -> Result<TermIri, VocabError> {
    builtin_registry().term(name)
}

/// Fixed creation date of the shipped T-Box.
pub const TBOX_CREATED: &str = "2025-01-01";

/// Emits the T-Box: ontology header with Dublin Core metadata, then OWL
/// declarations, domains, ranges, PROV alignment and bilingual labels.
pub fn emit_tbox(registry: &VocabRegistry) -> Graph {
    use iri::*;
    let mut g = Graph::new();
    let ontology = node(ONTOLOGY_IRI);
    let a = node(RDF_TYPE);
    let lang = |value: &str, tag: &str| Term::lang_string(value, tag).expect("static tag");
    g.add(&ontology, &a, node(OWL_ONTOLOGY));
    g.add(&ontology, &node(DC_TITLE), lang("Vocabulary for multilingual LLM evaluation", "en"));
    g.add(&ontology, &node(DC_TITLE), lang("Vokabular für mehrsprachige LLM-Evaluation", "de"));
    g.add(&ontology, &node(DC_CREATOR), Term::string("sqare contributors"));
    g.add(
        &ontology,
        &node(DC_CREATED),
        Term::typed(TBOX_CREATED, crate::graph::XSD_DATE).expect("static datatype"),
    );
    g.add(&ontology, &node(DC_LICENSE), node("https://www.apache.org/licenses/LICENSE-2.0"));
    g.add(&ontology, &node(OWL_VERSION_INFO), Term::string(env!("CARGO_PKG_VERSION")));

    for term in registry.terms() {
        let subject = term.iri.to_term();
        let kind = match term.kind {
            TermKind::Class => OWL_CLASS,
            TermKind::ObjectProperty => OWL_OBJECT_PROPERTY,
            TermKind::DatatypeProperty => OWL_DATATYPE_PROPERTY,
        };
        g.add(&subject, &a, node(kind));
        g.add(&subject, &node(RDFS_IS_DEFINED_BY), ontology.clone());
        g.add(&subject, &node(RDFS_LABEL), lang(&term.label.en, "en"));
        g.add(&subject, &node(RDFS_LABEL), lang(&term.label.de, "de"));
        g.add(&subject, &node(RDFS_COMMENT), lang(&term.comment.en, "en"));
        g.add(&subject, &node(RDFS_COMMENT), lang(&term.comment.de, "de"));
        if let Some(domain) = &term.domain {
            g.add(&subject, &node(RDFS_DOMAIN), domain.to_term());
        }
        if let Some(range) = &term.range {
            g.add(&subject, &node(RDFS_RANGE), range.to_term());
        }
        if let Some(parent) = &term.sub_class_of {
            g.add(&subject, &node(RDFS_SUB_CLASS_OF), parent.to_term());
        }
    }
    g
}

pub fn tbox_turtle(registry: &VocabRegistry) -> String {
    crate::graph::write_turtle(&emit_tbox(registry), registry.prefixes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_turtle, Triple, TriplePattern};

    #[test]
    fn cardinalities() {
        let registry = builtin_registry();
        assert_eq!(registry.classes().count(), 14);
        assert_eq!(registry.properties().count(), 57);
    }

    #[test]
    fn published_core_terms_present() {
        let registry = builtin_registry();
        for class in ["Question", "Answer", "ValidationResult", "Material"] {
            assert_eq!(registry.get(class).unwrap().kind, TermKind::Class);
        }
        for property in [
            "hasText",
            "hasGivenFor",
            "hasUsedMaterial",
            "hasValidationResult",
            "isValid",
            "matchesFactual",
        ] {
            assert!(registry.get(property).is_some(), "{property}");
        }
        let is_valid = registry.get("isValid").unwrap();
        assert_eq!(is_valid.kind, TermKind::DatatypeProperty);
        assert_eq!(is_valid.range.as_ref().unwrap().as_str(), XSD_BOOLEAN);
        let given_for = registry.get("hasGivenFor").unwrap();
        assert_eq!(given_for.domain.as_ref().unwrap().as_str(), iri::ANSWER);
        assert_eq!(given_for.range.as_ref().unwrap().as_str(), iri::QUESTION);
    }

    #[test]
    fn deterministic() {
        assert_eq!(builtin_registry(), builtin_registry());
        assert_eq!(tbox_turtle(&builtin_registry()), tbox_turtle(&builtin_registry()));
    }

    #[test]
    fn term_lookup() {
        assert_eq!(term("Answer").unwrap().as_str(), "http://purl.org/sqare#Answer");
        assert_eq!(term("matchesFactual").unwrap().as_str(), "http://purl.org/sqare#matchesFactual");
        assert_eq!(term("NoSuchTerm"), Err(VocabError::UnknownTerm("NoSuchTerm".into())));
    }

    #[test]
    fn tbox_declarations() {
        let g = emit_tbox(&builtin_registry());
        let has = |s: &str, p: &str, o: Term| {
            g.contains(&Triple::new(node(s), node(p), o).unwrap())
        };
        assert!(has(iri::HAS_GIVEN_FOR, iri::RDF_TYPE, node(iri::OWL_OBJECT_PROPERTY)));
        assert!(has(iri::QUESTION, iri::RDFS_LABEL, Term::lang_string("Frage", "de").unwrap()));
        assert!(has(iri::IS_VALID, iri::RDFS_RANGE, node(XSD_BOOLEAN)));
        assert!(has(iri::ANSWER, iri::RDFS_SUB_CLASS_OF, node(iri::PROV_ENTITY)));
    }

    #[test]
    fn empty_registry_emits_header_only() {
        let g = emit_tbox(&VocabRegistry::empty());
        let ontology = node(ONTOLOGY_IRI);
        assert!(!g.is_empty());
        assert!(g.iter().all(|t| t.subject == ontology));
    }

    #[test]
    fn turtle_round_trip_is_exact() {
        let g = emit_tbox(&builtin_registry());
        let parsed = parse_turtle(&tbox_turtle(&builtin_registry())).unwrap();
        assert_eq!(parsed, g);
        assert_eq!(
            parsed.match_pattern(&TriplePattern::new(None, Some(&node(iri::RDF_TYPE)), Some(&node(iri::OWL_CLASS)))).len(),
            14
        );
    }

    #[test]
    fn invalid_registries_rejected() {
        let mut terms = builtin_registry().terms().to_vec();
        terms.push(terms[0].clone());
        assert!(VocabRegistry::new(terms).is_err());

        let mut terms = builtin_registry().terms().to_vec();
        let idx = terms.iter().position(|t| t.iri.as_str() == iri::HAS_GIVEN_FOR).unwrap();
        terms[idx].range = Some(TermIri(XSD_BOOLEAN.into()));
        assert!(VocabRegistry::new(terms).is_err());
    }

    #[test]
    fn emitter_constants_are_registered() {
        let registry = builtin_registry();
        for constant in [
            iri::HAS_GIVEN_FOR, iri::HAS_USED_MATERIAL, iri::HAS_VALIDATION_RESULT,
            iri::HAS_CONTEXT_SETTING, iri::PART_OF_RUN, iri::IN_LANGUAGE_PROFILE, iri::USES_MODEL,
            iri::RUN_OF_STUDY, iri::REFERENCES_MATERIAL, iri::HAS_LANGUAGE_PROFILE, iri::HAS_TEXT,
            iri::HAS_TITLE, iri::IS_VALID, iri::MATCHES_FACTUAL, iri::MATCHES_CONTEXT,
            iri::SHOWS_KNOWLEDGE_LEAKAGE, iri::ABSTAINED, iri::VALIDATION_METHOD,
            iri::VALIDITY_POLICY, iri::RATIONALE, iri::IS_ERROR_TRIAL, iri::ERROR_MESSAGE,
            iri::LATENCY_MS, iri::ADAPTER_NAME, iri::PROMPT_FINGERPRINT, iri::ATTEMPT_COUNT,
            iri::RUN_ID, iri::QUESTION_ID, iri::MATERIAL_ID, iri::CONDITION_NAME, iri::MODEL_NAME,
            iri::LANGUAGE_TAG, iri::STUDY_ID, iri::QUESTION, iri::ANSWER, iri::VALIDATION_RESULT,
            iri::MATERIAL, iri::MODEL, iri::EXPERIMENT_RUN, iri::CONTEXT_SETTING, iri::STUDY,
            iri::LANGUAGE_PROFILE,
        ] {
            assert!(registry.contains_iri(constant), "{constant}");
        }
    }
}
