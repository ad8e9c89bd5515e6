use super::term::{normalize_language_tag, validate_iri, Term, Triple, XSD_STRING};
use super::{Graph, GraphError};

/// Character cursor with line/column tracking, shared with the Turtle reader.
pub(super) struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    pub line: usize,
    pub column: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(text: &'a str) -> Self {
        Self { text, pos: 0, line: 1, column: 1 }
    }

    pub fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    pub fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    pub fn peek_nth(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    pub fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    pub fn eat(&mut self, expected: char) -> bool {
        if self.peek() == Some(expected) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn error(&mut self, message: impl Into<String>) -> GraphError {
        let token: String = self.rest().chars().take_while(|c| !c.is_whitespace()).take(24).collect();
        GraphError::Parse { line: self.line, column: self.column, token, message: message.into() }
    }

    /// Skips spaces and tabs only.
    pub fn skip_inline_space(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t')) {
            self.bump();
        }
    }

    pub fn skip_comment(&mut self) {
        if self.peek() == Some('#') {
            while !matches!(self.peek(), None | Some('\n')) {
                self.bump();
            }
        }
    }

    fn hex(&mut self, digits: usize) -> Result<char, GraphError> {
        let mut value = 0u32;
        for _ in 0..digits {
            let d = self
                .peek()
                .and_then(|c| c.to_digit(16))
                .ok_or_else(|| self.error("expected hex digit in \\u escape"))?;
            self.bump();
            value = value * 16 + d;
        }
        char::from_u32(value).ok_or_else(|| self.error("escape is not a Unicode scalar value"))
    }

    /// After a backslash inside an IRI.
    fn uchar(&mut self) -> Result<char, GraphError> {
        match self.bump() {
            Some('u') => self.hex(4),
            Some('U') => self.hex(8),
            _ => Err(self.error("invalid escape in IRI")),
        }
    }

    /// `<...>` with UCHAR escapes; the result must be an absolute IRI.
    pub fn iri_ref(&mut self) -> Result<String, GraphError> {
        if !self.eat('<') {
            return Err(self.error("expected '<'"));
        }
        let mut iri = String::new();
        loop {
            match self.bump() {
                Some('>') => break,
                Some('\\') => iri.push(self.uchar()?),
                Some(c) if c <= ' ' || "<\"{}|^`".contains(c) => {
                    return Err(self.error(format!("character {c:?} not allowed in IRI")))
                }
                Some(c) => iri.push(c),
                None => return Err(self.error("unterminated IRI")),
            }
        }
        validate_iri(&iri).map_err(|e| self.error(e.to_string()))?;
        Ok(iri)
    }

    /// `_:label`; a trailing '.' is left for the statement terminator.
    pub fn blank_label(&mut self) -> Result<String, GraphError> {
        if !(self.eat('_') && self.eat(':')) {
            return Err(self.error("expected blank node label"));
        }
        let allowed = |c: char| c.is_alphanumeric() || c == '_' || c == '-';
        let mut label = String::new();
        while let Some(c) = self.peek() {
            let inner_dot = c == '.'
                && !label.is_empty()
                && self.peek_nth(1).is_some_and(|n| allowed(n) || n == '.');
            if allowed(c) || inner_dot {
                label.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if label.is_empty() || label.ends_with('.') {
            return Err(self.error("malformed blank node label"));
        }
        Ok(label)
    }

    /// Body of a quoted string; the opening quote has been consumed.
    /// `long` strings end at three consecutive quotes.
    pub fn string_body(&mut self, quote: char, long: bool) -> Result<String, GraphError> {
        let mut value = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error("unterminated string literal")),
                Some('\\') => {
                    let escaped = match self.bump() {
                        Some('t') => '\t',
                        Some('b') => '\u{8}',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('f') => '\u{c}',
                        Some('"') => '"',
                        Some('\'') => '\'',
                        Some('\\') => '\\',
                        Some('u') => self.hex(4)?,
                        Some('U') => self.hex(8)?,
                        _ => return Err(self.error("invalid string escape")),
                    };
                    value.push(escaped);
                }
                Some(c) if c == quote => {
                    if !long {
                        return Ok(value);
                    }
                    if self.eat(quote) {
                        if self.eat(quote) {
                            return Ok(value);
                        }
                        value.push(quote);
                    }
                    value.push(quote);
                }
                Some('\n' | '\r') if !long => {
                    return Err(self.error("line break inside a short string literal"))
                }
                Some(c) => value.push(c),
            }
        }
    }

    /// `@tag`, lowercased.
    pub fn lang_tag(&mut self) -> Result<String, GraphError> {
        let mut tag = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '-' {
                tag.push(c);
                self.bump();
            } else {
                break;
            }
        }
        normalize_language_tag(&tag).map_err(|e| self.error(e.to_string()))
    }
}

fn subject(cursor: &mut Cursor) -> Result<Term, GraphError> {
    match cursor.peek() {
        Some('<') => Ok(Term::Iri(cursor.iri_ref()?)),
        Some('_') => Ok(Term::BlankNode(cursor.blank_label()?)),
        _ => Err(cursor.error("expected IRI or blank node as subject")),
    }
}

fn object(cursor: &mut Cursor) -> Result<Term, GraphError> {
    match cursor.peek() {
        Some('<') => Ok(Term::Iri(cursor.iri_ref()?)),
        Some('_') => Ok(Term::BlankNode(cursor.blank_label()?)),
        Some('"') => {
            cursor.bump();
            let lexical = cursor.string_body('"', false)?;
            if cursor.eat('@') {
                let tag = cursor.lang_tag()?;
                Term::lang_string(lexical, &tag).map_err(|e| cursor.error(e.to_string()))
            } else if cursor.eat('^') {
                if !cursor.eat('^') {
                    return Err(cursor.error("expected '^^'"));
                }
                let datatype = cursor.iri_ref()?;
                if datatype == XSD_STRING {
                    Ok(Term::string(lexical))
                } else {
                    Term::typed(lexical, datatype).map_err(|e| cursor.error(e.to_string()))
                }
            } else {
                Ok(Term::string(lexical))
            }
        }
        _ => Err(cursor.error("expected IRI, blank node or literal as object")),
    }
}

/// Parses a complete N-Triples document.
pub fn parse_ntriples(text: &str) -> Result<Graph, GraphError> {
    let mut graph = Graph::new();
    let mut cursor = Cursor::new(text.strip_prefix('\u{feff}').unwrap_or(text));
    loop {
        cursor.skip_inline_space();
        cursor.skip_comment();
        match cursor.peek() {
            None => break,
            Some('\n' | '\r') => {
                cursor.bump();
                continue;
            }
            _ => {}
        }
        let s = subject(&mut cursor)?;
        cursor.skip_inline_space();
        if cursor.peek() != Some('<') {
            return Err(cursor.error("expected IRI as predicate"));
        }
        let p = Term::Iri(cursor.iri_ref()?);
        cursor.skip_inline_space();
        let o = object(&mut cursor)?;
        cursor.skip_inline_space();
        if !cursor.eat('.') {
            return Err(cursor.error("expected '.' at end of triple"));
        }
        cursor.skip_inline_space();
        cursor.skip_comment();
        match cursor.peek() {
            None | Some('\n' | '\r') => {}
            _ => return Err(cursor.error("unexpected content after '.'")),
        }
        graph.insert(Triple { subject: s, predicate: p, object: o });
    }
    Ok(graph)
}

/// Canonical N-Triples: one triple per line, lines in sorted order.
pub fn write_ntriples(graph: &Graph) -> String {
    let mut out = String::new();
    for triple in graph.iter() {
        triple.subject.write_ntriples(&mut out);
        out.push(' ');
        triple.predicate.write_ntriples(&mut out);
        out.push(' ');
        triple.object.write_ntriples(&mut out);
        out.push_str(" .\n");
    }
    out
}
