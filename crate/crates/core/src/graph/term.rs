use std::cmp::Ordering;
use std::fmt;

use chrono::{DateTime, SecondsFormat, Utc};

use super::GraphError;

pub const RDF_NS: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema#";
pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const RDF_LANG_STRING: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#langString";
pub const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
pub const XSD_BOOLEAN: &str = "http://www.w3.org/2001/XMLSchema#boolean";
pub const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
pub const XSD_DECIMAL: &str = "http://www.w3.org/2001/XMLSchema#decimal";
pub const XSD_DOUBLE: &str = "http://www.w3.org/2001/XMLSchema#double";
pub const XSD_DATE: &str = "http://www.w3.org/2001/XMLSchema#date";
pub const XSD_DATE_TIME: &str = "http://www.w3.org/2001/XMLSchema#dateTime";

/// Checks that `iri` is absolute and free of characters N-Triples forbids.
pub fn validate_iri(iri: &str) -> Result<(), GraphError> {
    let bad = iri
        .chars()
        .find(|&c| c <= ' ' || c == '\u{7f}' || "<>\"{}|^`\\".contains(c));
    if let Some(c) = bad {
        return Err(GraphError::InvalidIri(format!("{iri:?} contains forbidden character {c:?}")));
    }
    let scheme_ok = iri.split_once(':').is_some_and(|(scheme, _)| {
        let mut chars = scheme.chars();
        chars.next().is_some_and(|c| c.is_ascii_alphabetic())
            && chars.all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c))
    });
    if !scheme_ok {
        return Err(GraphError::InvalidIri(format!("{iri:?} is not an absolute IRI")));
    }
    Ok(())
}

/// Validates a BCP47-shaped tag and returns it lowercased.
pub fn normalize_language_tag(tag: &str) -> Result<String, GraphError> {
    let mut parts = tag.split('-');
    let primary_ok = parts
        .next()
        .is_some_and(|p| !p.is_empty() && p.len() <= 8 && p.chars().all(|c| c.is_ascii_alphabetic()));
    let rest_ok = parts.all(|p| !p.is_empty() && p.len() <= 8 && p.chars().all(|c| c.is_ascii_alphanumeric()));
    if primary_ok && rest_ok {
        Ok(tag.to_ascii_lowercase())
    } else {
        Err(GraphError::InvalidLanguageTag(tag.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Literal {
    lexical: String,
    datatype: String,
    language: Option<String>,
}

impl Literal {
    pub fn lexical(&self) -> &str {
        &self.lexical
    }

    pub fn datatype(&self) -> &str {
        &self.datatype
    }

    pub fn language(&self) -> Option<&str> {
        self.language.as_deref()
    }

    pub fn as_bool(&self) -> Option<bool> {
        if self.datatype != XSD_BOOLEAN {
            return None;
        }
        match self.lexical.as_str() {
            "true" | "1" => Some(true),
            "false" | "0" => Some(false),
            _ => None,
        }
    }
}

/// An RDF term. Ordering follows the canonical N-Triples serialization.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Iri(String),
    Literal(Literal),
    BlankNode(String),
}

impl Term {
    pub fn iri(iri: impl Into<String>) -> Result<Term, GraphError> {
        let iri = iri.into();
        validate_iri(&iri)?;
        Ok(Term::Iri(iri))
    }

    /// For IRIs assembled from already validated parts.
    pub(crate) fn iri_unchecked(iri: impl Into<String>) -> Term {
        let iri = iri.into();
        debug_assert!(validate_iri(&iri).is_ok(), "invalid IRI {iri}");
        Term::Iri(iri)
    }

    pub fn blank(id: impl Into<String>) -> Result<Term, GraphError> {
        let id = id.into();
        let valid = !id.is_empty()
            && !id.ends_with('.')
            && id.chars().all(|c| c.is_alphanumeric() || "_-.".contains(c));
        if valid {
            Ok(Term::BlankNode(id))
        } else {
            Err(GraphError::InvalidBlankNode(id))
        }
    }

    pub fn string(value: impl Into<String>) -> Term {
        Term::Literal(Literal { lexical: value.into(), datatype: XSD_STRING.into(), language: None })
    }

    pub fn lang_string(value: impl Into<String>, language: &str) -> Result<Term, GraphError> {
        Ok(Term::Literal(Literal {
            lexical: value.into(),
            datatype: RDF_LANG_STRING.into(),
            language: Some(normalize_language_tag(language)?),
        }))
    }

    pub fn typed(value: impl Into<String>, datatype: impl Into<String>) -> Result<Term, GraphError> {
        let datatype = datatype.into();
        validate_iri(&datatype)?;
        if datatype == RDF_LANG_STRING {
            return Err(GraphError::InvalidLiteral("rdf:langString requires a language tag".into()));
        }
        Ok(Term::Literal(Literal { lexical: value.into(), datatype, language: None }))
    }

    pub fn boolean(value: bool) -> Term {
        Term::Literal(Literal {
            lexical: value.to_string(),
            datatype: XSD_BOOLEAN.into(),
            language: None,
        })
    }

    pub fn integer(value: i64) -> Term {
        Term::Literal(Literal {
            lexical: value.to_string(),
            datatype: XSD_INTEGER.into(),
            language: None,
        })
    }

    pub fn date_time(value: DateTime<Utc>) -> Term {
        Term::Literal(Literal {
            lexical: value.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            datatype: XSD_DATE_TIME.into(),
            language: None,
        })
    }

    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri(iri) => Some(iri),
            _ => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Term::Literal(l) => Some(l),
            _ => None,
        }
    }

    pub fn is_blank(&self) -> bool {
        matches!(self, Term::BlankNode(_))
    }

    /// Lexical form of a literal, IRI string, or blank-node id.
    pub fn value(&self) -> &str {
        match self {
            Term::Iri(iri) => iri,
            Term::Literal(l) => &l.lexical,
            Term::BlankNode(id) => id,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        self.as_literal().and_then(Literal::as_bool)
    }

    /// Canonical N-Triples form.
    pub fn to_ntriples(&self) -> String {
        let mut out = String::new();
        self.write_ntriples(&mut out);
        out
    }

    pub(crate) fn write_ntriples(&self, out: &mut String) {
        match self {
            Term::Iri(iri) => {
                out.push('<');
                out.push_str(iri);
                out.push('>');
            }
            Term::BlankNode(id) => {
                out.push_str("_:");
                out.push_str(id);
            }
            Term::Literal(l) => {
                write_quoted(&l.lexical, out);
                if let Some(lang) = &l.language {
                    out.push('@');
                    out.push_str(lang);
                } else if l.datatype != XSD_STRING {
                    out.push_str("^^<");
                    out.push_str(&l.datatype);
                    out.push('>');
                }
            }
        }
    }

    fn rank(&self) -> u8 {
        // Leading bytes of the serialization: '"' < '<' < '_'.
        match self {
            Term::Literal(_) => 0,
            Term::Iri(_) => 1,
            Term::BlankNode(_) => 2,
        }
    }
}

pub(crate) fn write_quoted(value: &str, out: &mut String) {
    out.push('"');
    for c in value.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            '\u{8}' => out.push_str("\\b"),
            '\u{c}' => out.push_str("\\f"),
            c if c < ' ' || c == '\u{7f}' => out.push_str(&format!("\\u{:04X}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

fn escaped(c: char) -> ([u8; 6], usize) {
    let mut buf = [0u8; 6];
    let short = |b: u8| ([b'\\', b, 0, 0, 0, 0], 2);
    match c {
        '"' => short(b'"'),
        '\\' => short(b'\\'),
        '\n' => short(b'n'),
        '\r' => short(b'r'),
        '\t' => short(b't'),
        '\u{8}' => short(b'b'),
        '\u{c}' => short(b'f'),
        c if c < ' ' || c == '\u{7f}' => {
            let hex = format!("\\u{:04X}", c as u32);
            buf.copy_from_slice(hex.as_bytes());
            (buf, 6)
        }
        c => {
            let n = c.encode_utf8(&mut buf).len();
            (buf, n)
        }
    }
}

/// N-Triples bytes of a literal from byte offset `from` of its lexical form,
/// without the opening quote.
fn literal_tail(l: &Literal, from: usize) -> impl Iterator<Item = u8> + '_ {
    let body = l.lexical[from..].chars().flat_map(|c| {
        let (buf, n) = escaped(c);
        buf.into_iter().take(n)
    });
    let (marker, suffix, close): (&[u8], &str, &[u8]) = match (&l.language, l.datatype.as_str()) {
        (Some(lang), _) => (b"@", lang, b""),
        (None, XSD_STRING) => (b"", "", b""),
        (None, dt) => (b"^^<", dt, b">"),
    };
    body.chain(std::iter::once(b'"'))
        .chain(marker.iter().copied())
        .chain(suffix.bytes())
        .chain(close.iter().copied())
}

fn common_prefix(a: &[u8], b: &[u8]) -> usize {
    let n = a.len().min(b.len());
    let mut i = 0;
    while i + 16 <= n && a[i..i + 16] == b[i..i + 16] {
        i += 16;
    }
    while i < n && a[i] == b[i] {
        i += 1;
    }
    i
}

/// Orders `a` followed by `end` against `b` followed by `end`.
fn cmp_terminated(a: &[u8], b: &[u8], end: u8) -> Ordering {
    let i = common_prefix(a, b);
    let x = a.get(i).copied().unwrap_or(end);
    let y = b.get(i).copied().unwrap_or(end);
    x.cmp(&y).then(a.len().cmp(&b.len()))
}

fn cmp_literals(a: &Literal, b: &Literal) -> Ordering {
    // Escaping maps characters one by one, so a shared raw prefix is a shared
    // escaped prefix and only the remainder needs escaping.
    let mut from = common_prefix(a.lexical.as_bytes(), b.lexical.as_bytes());
    while !a.lexical.is_char_boundary(from) {
        from -= 1;
    }
    literal_tail(a, from).cmp(literal_tail(b, from))
}

impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Term::Iri(a), Term::Iri(b)) => cmp_terminated(a.as_bytes(), b.as_bytes(), b'>'),
            (Term::BlankNode(a), Term::BlankNode(b)) => a.cmp(b),
            (Term::Literal(a), Term::Literal(b)) => cmp_literals(a, b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_ntriples())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: Term, predicate: Term, object: Term) -> Result<Triple, GraphError> {
        if matches!(subject, Term::Literal(_)) {
            return Err(GraphError::InvalidTriple(format!("literal subject {subject}")));
        }
        if !matches!(predicate, Term::Iri(_)) {
            return Err(GraphError::InvalidTriple(format!("non-IRI predicate {predicate}")));
        }
        Ok(Triple { subject, predicate, object })
    }

    pub fn to_ntriples(&self) -> String {
        let mut out = String::new();
        self.subject.write_ntriples(&mut out);
        out.push(' ');
        self.predicate.write_ntriples(&mut out);
        out.push(' ');
        self.object.write_ntriples(&mut out);
        out.push_str(" .");
        out
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_ntriples())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn language_tags_are_lowercased() {
        let t = Term::lang_string("Feuer", "DE").unwrap();
        assert_eq!(t.to_ntriples(), "\"Feuer\"@de");
        assert_eq!(t, Term::lang_string("Feuer", "de").unwrap());
        assert!(Term::lang_string("x", "d e").is_err());
    }

    #[test]
    fn iri_validation() {
        assert!(Term::iri("http://purl.org/sqare#Answer").is_ok());
        assert!(Term::iri("urn:a").is_ok());
        assert!(Term::iri("http://a b").is_err());
        assert!(Term::iri("relative/path").is_err());
        assert!(Term::iri("http://x/\u{1}").is_err());
    }

    #[test]
    fn ordering_matches_serialization() {
        let terms = vec![
            Term::iri("urn:a").unwrap(),
            Term::iri("urn:a/b").unwrap(),
            Term::iri("urn:ab").unwrap(),
            Term::string("x"),
            Term::lang_string("x", "de").unwrap(),
            Term::blank("b1").unwrap(),
            Term::boolean(true),
        ];
        let mut by_ord = terms.clone();
        by_ord.sort();
        let mut by_text = terms;
        by_text.sort_by_key(|t| t.to_ntriples());
        assert_eq!(by_ord, by_text);
    }

    #[test]
    fn escapes_control_characters() {
        let t = Term::string("a\"b\\c\nd\u{1}");
        assert_eq!(t.to_ntriples(), r#""a\"b\\c\nd\u0001""#);
    }

    #[test]
    fn literal_subject_rejected() {
        let p = Term::iri("urn:p").unwrap();
        assert!(Triple::new(Term::string("s"), p.clone(), p.clone()).is_err());
        assert!(Triple::new(p.clone(), Term::blank("b").unwrap(), p).is_err());
    }
}
