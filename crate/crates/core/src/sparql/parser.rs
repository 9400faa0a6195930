use super::{
    CompareOp, Filter, Iri, OrderBy, PatternTerm, Query, QueryForm, SparqlError, TriplePattern, FIXTURE_NAMESPACE,
    XSD_NAMESPACE,
};
use crate::kg::{Literal, LiteralKind};

/// Keywords of full SPARQL that this subset rejects by name.
const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "OPTIONAL", "UNION", "MINUS", "GRAPH", "SERVICE", "BIND", "VALUES", "GROUP", "HAVING", "OFFSET", "CONSTRUCT",
    "ASK", "DESCRIBE", "INSERT", "DELETE", "FROM", "NOT", "EXISTS", "BASE", "LOAD", "CLEAR", "DROP", "CREATE",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Var(String),
    Prefixed(String, String),
    IriRef(String),
    Str { value: String, lang: bool },
    Number(String),
    Word(String),
    Punct(&'static str),
    DataTypeMark,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Var(v) => format!("?{v}"),
            Tok::Prefixed(p, l) => format!("{p}:{l}"),
            Tok::IriRef(i) => format!("<{i}>"),
            Tok::Str { value, .. } => format!("{value:?}"),
            Tok::Number(n) => n.clone(),
            Tok::Word(w) => w.clone(),
            Tok::Punct(p) => format!("'{p}'"),
            Tok::DataTypeMark => "'^^'".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek_char()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek_char() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('#') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        while self.peek_char().is_some_and(&f) {
            self.bump();
        }
        &self.src[start..self.pos]
    }

    fn syntax(&self, expected: &str, found: String) -> SparqlError {
        SparqlError::Syntax { position: self.pos, expected: vec![expected.into()], found }
    }

    fn tokenize(mut self) -> Result<Vec<(usize, Tok)>, SparqlError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia();
            let start = self.pos;
            let Some(c) = self.peek_char() else {
                out.push((start, Tok::Eof));
                return Ok(out);
            };
            let tok = match c {
                '?' | '$' => {
                    self.bump();
                    let name = self.take_while(|c| c.is_alphanumeric() || c == '_');
                    if name.is_empty() {
                        return Err(self.syntax("variable name", "nothing".into()));
                    }
                    Tok::Var(name.to_string())
                }
                '<' => self.angle()?,
                '"' | '\'' => self.string(c)?,
                '{' | '}' | '(' | ')' | '.' | ',' | ';' | '*' | '/' | '|' | '+' => {
                    self.bump();
                    if c == '.' && self.peek_char().is_some_and(|d| d.is_ascii_digit()) {
                        self.pos = start;
                        self.number()
                    } else {
                        Tok::Punct(match c {
                            '{' => "{",
                            '}' => "}",
                            '(' => "(",
                            ')' => ")",
                            '.' => ".",
                            ',' => ",",
                            ';' => ";",
                            '*' => "*",
                            '/' => "/",
                            '|' => "|",
                            _ => "+",
                        })
                    }
                }
                '=' => {
                    self.bump();
                    Tok::Punct("=")
                }
                '!' => {
                    self.bump();
                    if self.peek_char() == Some('=') {
                        self.bump();
                        Tok::Punct("!=")
                    } else {
                        Tok::Punct("!")
                    }
                }
                '>' => {
                    self.bump();
                    if self.peek_char() == Some('=') {
                        self.bump();
                        Tok::Punct(">=")
                    } else {
                        Tok::Punct(">")
                    }
                }
                '&' if self.rest().starts_with("&&") => {
                    self.pos += 2;
                    Tok::Punct("&&")
                }
                '^' if self.rest().starts_with("^^") => {
                    self.pos += 2;
                    Tok::DataTypeMark
                }
                '^' => {
                    self.bump();
                    Tok::Punct("^")
                }
                '@' => {
                    // Language tags only appear right after a string and are dropped.
                    self.bump();
                    self.take_while(|c| c.is_alphanumeric() || c == '-');
                    continue;
                }
                '-' if self.rest()[1..].starts_with(|d: char| d.is_ascii_digit() || d == '.') => self.number(),
                c if c.is_ascii_digit() => self.number(),
                c if c.is_alphabetic() || c == '_' => self.word(),
                other => return Err(self.syntax("a token", format!("{other:?}"))),
            };
            out.push((start, tok));
        }
    }

    fn angle(&mut self) -> Result<Tok, SparqlError> {
        let rest = self.rest();
        let after = &rest[1..];
        let iri_end = after.find(|c: char| c == '>' || c.is_whitespace() || c == '<' || c == '"');
        if let Some(end) = iri_end {
            if after[end..].starts_with('>') && end > 0 && !after.starts_with(['=', '?', '$']) {
                let iri = after[..end].to_string();
                self.pos += end + 2;
                return Ok(Tok::IriRef(iri));
            }
        }
        self.bump();
        if self.peek_char() == Some('=') {
            self.bump();
            Ok(Tok::Punct("<="))
        } else {
            Ok(Tok::Punct("<"))
        }
    }

    fn string(&mut self, quote: char) -> Result<Tok, SparqlError> {
        let start = self.pos;
        self.bump();
        let mut value = String::new();
        loop {
            match self.bump() {
                None => {
                    self.pos = start;
                    return Err(self.syntax("closing quote", "end of input".into()));
                }
                Some(c) if c == quote => break,
                Some('\\') => match self.bump() {
                    Some('n') => value.push('\n'),
                    Some('t') => value.push('\t'),
                    Some('r') => value.push('\r'),
                    Some(c @ ('"' | '\'' | '\\')) => value.push(c),
                    other => {
                        return Err(self.syntax("escape sequence", format!("{other:?}")));
                    }
                },
                Some(c) => value.push(c),
            }
        }
        let lang = self.peek_char() == Some('@');
        Ok(Tok::Str { value, lang })
    }

    fn number(&mut self) -> Tok {
        let start = self.pos;
        if matches!(self.peek_char(), Some('-' | '+')) {
            self.bump();
        }
        self.take_while(|c| c.is_ascii_digit());
        if self.peek_char() == Some('.') && self.rest()[1..].starts_with(|c: char| c.is_ascii_digit()) {
            self.bump();
            self.take_while(|c| c.is_ascii_digit());
        }
        if matches!(self.peek_char(), Some('e' | 'E')) {
            let save = self.pos;
            self.bump();
            if matches!(self.peek_char(), Some('-' | '+')) {
                self.bump();
            }
            if self.take_while(|c| c.is_ascii_digit()).is_empty() {
                self.pos = save;
            }
        }
        Tok::Number(self.src[start..self.pos].to_string())
    }

    fn word(&mut self) -> Tok {
        let name = self.take_while(|c| c.is_alphanumeric() || c == '_' || c == '-');
        if self.peek_char() == Some(':') {
            self.bump();
            let local_start = self.pos;
            let mut local = self.take_while(|c| c.is_alphanumeric() || matches!(c, '_' | '.' | '-'));
            // A trailing dot terminates the triple, it is not part of the name.
            while local.ends_with('.') {
                local = &local[..local.len() - 1];
            }
            self.pos = local_start + local.len();
            Tok::Prefixed(name.to_string(), local.to_string())
        } else {
            Tok::Word(name.to_string())
        }
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
    prefixes: Vec<(String, String)>,
}

fn is_kw(tok: &Tok, kw: &str) -> bool {
    matches!(tok, Tok::Word(w) if w.eq_ignore_ascii_case(kw))
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.idx].1
    }

    fn pos(&self) -> usize {
        self.toks[self.idx].0
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.idx].1.clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> SparqlError {
        if let Tok::Word(w) = self.peek() {
            let upper = w.to_ascii_uppercase();
            if UNSUPPORTED_KEYWORDS.contains(&upper.as_str()) {
                return SparqlError::Unsupported { position: self.pos(), feature: upper };
            }
        }
        SparqlError::Syntax {
            position: self.pos(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        }
    }

    fn unsupported(&self, feature: &str) -> SparqlError {
        SparqlError::Unsupported { position: self.pos(), feature: feature.into() }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if is_kw(self.peek(), kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SparqlError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(&[kw]))
        }
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if matches!(self.peek(), Tok::Punct(q) if *q == p) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), SparqlError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.error(&[&format!("'{p}'")]))
        }
    }

    fn expect_var(&mut self) -> Result<String, SparqlError> {
        match self.peek().clone() {
            Tok::Var(v) => {
                self.advance();
                Ok(v)
            }
            _ => Err(self.error(&["variable"])),
        }
    }

    fn resolve_prefixed(&self, prefix: &str, local: &str) -> Result<Iri, SparqlError> {
        let base = self
            .prefixes
            .iter()
            .rev()
            .find(|(p, _)| p == prefix)
            .map(|(_, iri)| iri.as_str())
            .or(match prefix {
                "ns" => Some(FIXTURE_NAMESPACE),
                "xsd" => Some(XSD_NAMESPACE),
                _ => None,
            })
            .ok_or_else(|| SparqlError::UnknownPrefix(prefix.to_string()))?;
        Ok(resolve_iri(format!("{base}{local}")))
    }

    fn query(&mut self) -> Result<Query, SparqlError> {
        while self.eat_kw("PREFIX") {
            let prefix = match self.advance() {
                Tok::Prefixed(p, l) if l.is_empty() => p,
                _ => {
                    self.idx -= 1;
                    return Err(self.error(&["prefix name"]));
                }
            };
            let iri = match self.advance() {
                Tok::IriRef(i) => i,
                _ => {
                    self.idx -= 1;
                    return Err(self.error(&["<iri>"]));
                }
            };
            self.prefixes.push((prefix, iri));
        }

        if !self.eat_kw("SELECT") {
            return Err(self.error(&["PREFIX", "SELECT"]));
        }
        let mut distinct = self.eat_kw("DISTINCT");
        if is_kw(self.peek(), "REDUCED") {
            return Err(self.unsupported("REDUCED"));
        }
        let (form, projection) = if self.eat_kw("COUNT") {
            self.expect_punct("(")?;
            if self.eat_kw("DISTINCT") {
                distinct = true;
            }
            if matches!(self.peek(), Tok::Punct("*")) {
                return Err(self.unsupported("COUNT(*)"));
            }
            let v = self.expect_var()?;
            self.expect_punct(")")?;
            if is_kw(self.peek(), "AS") {
                return Err(self.unsupported("projection alias (AS)"));
            }
            (QueryForm::Count, vec![v])
        } else {
            let mut vars = Vec::new();
            loop {
                match self.peek() {
                    Tok::Var(v) => {
                        vars.push(v.clone());
                        self.advance();
                    }
                    Tok::Punct("*") if vars.is_empty() => return Err(self.unsupported("SELECT *")),
                    Tok::Punct("(") => return Err(self.unsupported("projection expression")),
                    _ => break,
                }
            }
            if vars.is_empty() {
                return Err(self.error(&["variable", "COUNT("]));
            }
            (QueryForm::Select, vars)
        };

        if !self.eat_kw("WHERE") && !matches!(self.peek(), Tok::Punct("{")) {
            return Err(self.error(&["WHERE"]));
        }
        self.expect_punct("{")?;
        let (patterns, filters) = self.group()?;

        let mut order = None;
        if self.eat_kw("ORDER") {
            self.expect_kw("BY")?;
            let descending = if self.eat_kw("DESC") {
                true
            } else if self.eat_kw("ASC") {
                false
            } else if matches!(self.peek(), Tok::Var(_)) {
                let var = self.expect_var()?;
                order = Some(OrderBy { var, descending: false });
                false
            } else {
                return Err(self.error(&["ASC", "DESC", "variable"]));
            };
            if order.is_none() {
                self.expect_punct("(")?;
                let var = self.expect_var()?;
                self.expect_punct(")")?;
                order = Some(OrderBy { var, descending });
            }
            if matches!(self.peek(), Tok::Var(_)) || is_kw(self.peek(), "ASC") || is_kw(self.peek(), "DESC") {
                return Err(self.unsupported("multiple ORDER BY keys"));
            }
        }

        let mut limit = None;
        if self.eat_kw("LIMIT") {
            match self.advance() {
                Tok::Number(n) if n.chars().all(|c| c.is_ascii_digit()) => {
                    let n: usize =
                        n.parse().map_err(|_| SparqlError::Invalid(format!("LIMIT {n} out of range")))?;
                    limit = Some(n);
                }
                _ => {
                    self.idx -= 1;
                    return Err(self.error(&["integer"]));
                }
            }
        }
        if !matches!(self.peek(), Tok::Eof) {
            return Err(self.error(&["ORDER BY", "LIMIT", "end of input"]));
        }

        let query = Query {
            prefixes: std::mem::take(&mut self.prefixes),
            form,
            distinct,
            projection,
            patterns,
            filters,
            order,
            limit,
        };
        query.validate()?;
        Ok(query)
    }

    fn group(&mut self) -> Result<(Vec<TriplePattern>, Vec<Filter>), SparqlError> {
        let mut patterns = Vec::new();
        let mut filters = Vec::new();
        // true once a triple has been read and not yet closed with '.'
        let mut open_triple = false;
        loop {
            match self.peek() {
                Tok::Punct("}") => {
                    self.advance();
                    return Ok((patterns, filters));
                }
                Tok::Punct(".") if open_triple => {
                    self.advance();
                    open_triple = false;
                }
                Tok::Punct("{") => return Err(self.unsupported("nested group")),
                Tok::Word(w) if w.eq_ignore_ascii_case("FILTER") => {
                    self.advance();
                    filters.push(self.filter()?);
                }
                _ if open_triple => return Err(self.error(&["'.'", "FILTER", "'}'"])),
                _ => {
                    patterns.push(self.triple()?);
                    open_triple = true;
                }
            }
        }
    }

    fn triple(&mut self) -> Result<TriplePattern, SparqlError> {
        let subject = self.term("subject")?;
        if is_kw(self.peek(), "a") {
            return Err(self.unsupported("'a' shorthand for rdf:type"));
        }
        let predicate = self.term("predicate")?;
        if matches!(self.peek(), Tok::Punct("/" | "|" | "^" | "*" | "+")) {
            return Err(self.unsupported("property path"));
        }
        let object = self.term("object")?;
        match self.peek() {
            Tok::Punct(";") | Tok::Punct(",") => Err(self.unsupported("predicate-object list")),
            Tok::Punct("/" | "|" | "*" | "+") => Err(self.unsupported("property path")),
            _ => Ok(TriplePattern { subject, predicate, object }),
        }
    }

    fn term(&mut self, what: &str) -> Result<PatternTerm, SparqlError> {
        match self.peek().clone() {
            Tok::Var(v) => {
                self.advance();
                Ok(PatternTerm::Var(v))
            }
            Tok::Prefixed(p, l) => {
                self.advance();
                Ok(PatternTerm::Iri(self.resolve_prefixed(&p, &l)?))
            }
            Tok::IriRef(i) => {
                self.advance();
                Ok(PatternTerm::Iri(resolve_iri(i)))
            }
            Tok::Str { value, lang } => {
                let pos = self.pos();
                self.advance();
                if lang || !matches!(self.peek(), Tok::DataTypeMark) {
                    return Ok(PatternTerm::Literal(Literal::text(value)));
                }
                self.advance();
                let datatype = match self.advance() {
                    Tok::Prefixed(p, l) => match self.resolve_prefixed(&p, &l)? {
                        Iri::Full(i) | Iri::Local(i) => i,
                    },
                    Tok::IriRef(i) => i,
                    _ => {
                        self.idx -= 1;
                        return Err(self.error(&["datatype IRI"]));
                    }
                };
                let kind = datatype_kind(&datatype);
                Literal::new(value.clone(), kind).map(PatternTerm::Literal).map_err(|_| SparqlError::Syntax {
                    position: pos,
                    expected: vec![format!("valid {kind:?} literal")],
                    found: format!("{value:?}"),
                })
            }
            Tok::Number(n) => {
                self.advance();
                let kind = if n.contains(['.', 'e', 'E']) { LiteralKind::Float } else { LiteralKind::Integer };
                Literal::new(n.clone(), kind)
                    .map(PatternTerm::Literal)
                    .map_err(|_| SparqlError::Invalid(format!("numeric literal {n} out of range")))
            }
            Tok::Word(w) if w == "true" || w == "false" => {
                self.advance();
                Ok(PatternTerm::Literal(Literal::text(w)))
            }
            _ => Err(self.error(&[what])),
        }
    }

    fn filter(&mut self) -> Result<Filter, SparqlError> {
        match self.peek() {
            Tok::Word(w) if !w.eq_ignore_ascii_case("NOT") => {
                return Err(self.unsupported(&format!("FILTER function {w}")));
            }
            _ => {}
        }
        self.expect_punct("(")?;
        if matches!(self.peek(), Tok::Punct("!")) {
            return Err(self.unsupported("FILTER negation"));
        }
        if let Tok::Word(w) = self.peek() {
            if !UNSUPPORTED_KEYWORDS.contains(&w.to_ascii_uppercase().as_str()) && w != "true" && w != "false" {
                let w = w.clone();
                return Err(self.unsupported(&format!("FILTER function {w}")));
            }
        }
        if matches!(self.peek(), Tok::Punct("(")) {
            return Err(self.unsupported("nested FILTER expression"));
        }
        let var = self.expect_var()?;
        let op = match self.peek() {
            Tok::Punct("=") => CompareOp::Eq,
            Tok::Punct("!=") => CompareOp::Ne,
            Tok::Punct("<") => CompareOp::Lt,
            Tok::Punct("<=") => CompareOp::Le,
            Tok::Punct(">") => CompareOp::Gt,
            Tok::Punct(">=") => CompareOp::Ge,
            _ => return Err(self.error(&["=", "!=", "<", "<=", ">", ">="])),
        };
        self.advance();
        let operand = self.term("comparison operand")?;
        if matches!(self.peek(), Tok::Punct("&&" | "|")) || is_kw(self.peek(), "||") {
            return Err(self.unsupported("FILTER boolean connective"));
        }
        self.expect_punct(")")?;
        Ok(Filter { var, op, operand })
    }
}

fn resolve_iri(iri: String) -> Iri {
    match iri.strip_prefix(FIXTURE_NAMESPACE) {
        Some(local) if !local.is_empty() => Iri::Local(local.to_string()),
        _ => Iri::Full(iri),
    }
}

fn datatype_kind(iri: &str) -> LiteralKind {
    let local = iri.strip_prefix(XSD_NAMESPACE).unwrap_or(iri);
    match local {
        "integer" | "int" | "long" | "short" | "nonNegativeInteger" | "positiveInteger" | "negativeInteger"
        | "nonPositiveInteger" | "unsignedInt" | "unsignedLong" => LiteralKind::Integer,
        "decimal" | "float" | "double" => LiteralKind::Float,
        "dateTime" | "date" | "gYear" | "gYearMonth" => LiteralKind::Datetime,
        _ => LiteralKind::Text,
    }
}

/// Parses a query of the supported subset.
///
/// PREFIX declarations are applied while parsing; `ns:` and `xsd:` are
/// predeclared. Anything outside the subset is rejected, with constructs
/// from full SPARQL reported as [`SparqlError::Unsupported`].
pub fn parse(text: &str) -> Result<Query, SparqlError> {
    let toks = Lexer { src: text, pos: 0 }.tokenize()?;
    Parser { toks, idx: 0, prefixes: Vec::new() }.query()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_query() {
        let q = parse("SELECT ?x WHERE { ns:m.01 ns:p.q ?x }").unwrap();
        assert_eq!(q.patterns.len(), 1);
        assert_eq!(q.projection, ["x"]);
        assert_eq!(q.patterns[0].subject, PatternTerm::Iri(Iri::Local("m.01".into())));
        assert_eq!(q.patterns[0].predicate, PatternTerm::Iri(Iri::Local("p.q".into())));
    }

    #[test]
    fn chain_with_filter_order_limit() {
        let q = parse("SELECT ?x WHERE { ?x ns:a ?y . ?y ns:b ?z FILTER(?z > 5) } ORDER BY DESC(?z) LIMIT 1")
            .unwrap();
        assert_eq!(q.patterns.len(), 2);
        assert_eq!(q.filters.len(), 1);
        assert_eq!(q.filters[0].op, CompareOp::Gt);
        assert_eq!(q.filters[0].operand, PatternTerm::Literal(Literal::integer(5)));
        assert_eq!(q.order, Some(OrderBy { var: "z".into(), descending: true }));
        assert_eq!(q.limit, Some(1));
    }

    #[test]
    fn optional_is_unsupported() {
        let err = parse("SELECT ?x WHERE { OPTIONAL { ?x ns:a ?y } }").unwrap_err();
        assert!(matches!(err, SparqlError::Unsupported { ref feature, .. } if feature == "OPTIONAL"), "{err:?}");
    }

    #[test]
    fn other_unsupported_features() {
        for (q, feature) in [
            ("SELECT ?x WHERE { { ?x ns:a ?y } UNION { ?x ns:b ?y } }", "nested group"),
            ("SELECT * WHERE { ?x ns:a ?y }", "SELECT *"),
            ("SELECT ?x WHERE { ?x ns:a/ns:b ?y }", "property path"),
            ("SELECT ?x WHERE { ?x ns:a ?y ; ns:b ?z }", "predicate-object list"),
            ("SELECT ?x WHERE { ?x ns:a ?y FILTER(regex(?y, \"a\")) }", "FILTER function regex"),
            ("SELECT ?x WHERE { ?x ns:a ?y FILTER(?y > 1 && ?y < 3) }", "FILTER boolean connective"),
            ("SELECT ?x WHERE { ?x ns:a ?y } GROUP BY ?x", "GROUP"),
            ("SELECT ?x WHERE { ?x ns:a ?y } OFFSET 2", "OFFSET"),
        ] {
            match parse(q) {
                Err(SparqlError::Unsupported { feature: f, .. }) => assert_eq!(f, feature, "{q}"),
                other => panic!("{q}: {other:?}"),
            }
        }
    }

    #[test]
    fn syntax_errors_carry_position_and_expectations() {
        let err = parse("SELECT ?x WHERE { ?x ns:a }").unwrap_err();
        match err {
            SparqlError::Syntax { position, expected, .. } => {
                assert_eq!(position, 26);
                assert_eq!(expected, ["object"]);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("SELEKT ?x"), Err(SparqlError::Syntax { position: 0, .. })));
        assert!(matches!(parse("SELECT ?x WHERE { ?x ns:a ?y } LIMIT x"), Err(SparqlError::Syntax { .. })));
    }

    #[test]
    fn unbound_projection_rejected() {
        assert!(matches!(parse("SELECT ?q WHERE { ?x ns:a ?y }"), Err(SparqlError::Invalid(_))));
        assert!(matches!(parse("SELECT ?x WHERE { }"), Err(SparqlError::Invalid(_))));
        assert!(matches!(parse("SELECT ?x WHERE { ?x ns:a ?y } LIMIT 0"), Err(SparqlError::Invalid(_))));
    }

    #[test]
    fn prefixes_and_literals() {
        let q = parse(
            "PREFIX ns: <http://rdf.freebase.com/ns/>\n\
             SELECT DISTINCT ?x WHERE { ?x <http://rdf.freebase.com/ns/people.person.date_of_birth> ?d . \
             ?x ns:type.object.name \"Alice Walker\"@en . \
             FILTER(?d < \"1950-01-01\"^^xsd:dateTime) }",
        )
        .unwrap();
        assert!(q.distinct);
        assert_eq!(q.prefixes.len(), 1);
        assert_eq!(q.patterns[0].predicate, PatternTerm::Iri(Iri::Local("people.person.date_of_birth".into())));
        assert_eq!(q.patterns[1].object, PatternTerm::Literal(Literal::text("Alice Walker")));
        assert_eq!(
            q.filters[0].operand,
            PatternTerm::Literal(Literal::new("1950-01-01", LiteralKind::Datetime).unwrap())
        );
        assert!(matches!(parse("SELECT ?x WHERE { ?x foo:a ?y }"), Err(SparqlError::UnknownPrefix(_))));
    }

    #[test]
    fn count_form_and_trailing_dot() {
        let q = parse("select count(distinct ?x) where { ns:m.01 ns:a ?x . }").unwrap();
        assert_eq!(q.form, QueryForm::Count);
        assert!(q.distinct);
        assert_eq!(q.projection, ["x"]);
        let q = parse("SELECT ?x WHERE { ns:m.01 ns:a ?x.}").unwrap();
        assert_eq!(q.patterns[0].subject, PatternTerm::Iri(Iri::Local("m.01".into())));
    }

    #[test]
    fn print_round_trip_examples() {
        for text in [
            "SELECT ?x WHERE { ns:m.01 ns:p.q ?x }",
            "SELECT ?x WHERE { ?x ns:a ?y . ?y ns:b ?z FILTER(?z > 5) } ORDER BY DESC(?z) LIMIT 1",
            "PREFIX ns: <http://example.org/> SELECT ?x WHERE { ?x ns:a <http://rdf.freebase.com/ns/m.01> }",
            "SELECT COUNT(?x) WHERE { ?x ns:a \"quoted \\\" text\" FILTER(?x != ?x) }",
            "SELECT ?x WHERE { ?x ns:a ?y FILTER(?y >= \"2001-01-01\"^^xsd:date) FILTER(?y < 1.5e3) }",
        ] {
            let q = parse(text).unwrap();
            let printed = q.to_string();
            assert_eq!(parse(&printed).unwrap(), q, "{printed}");
        }
    }
}
