//! In-memory triple store with entity metadata.
//!
//! Triples are kept once, sorted, and addressed through subject, predicate
//! and object indexes. Entity metadata (names, descriptions, popularity, CVT
//! flag) is loaded from a separate JSON Lines file; every entity that shows
//! up in a triple but not in the metadata gets a minimal record.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("unknown entity: {0}")]
    UnknownEntity(String),
    #[error("invalid value: {0}")]
    Invalid(String),
}

/// Freebase-style entity identifier (`m.0abc`, `g.11x`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Result<Self, KgError> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(KgError::Invalid("empty entity id".into()));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Whether a bare token names an entity rather than a literal.
    pub fn looks_like_id(token: &str) -> bool {
        (token.starts_with("m.") || token.starts_with("g.")) && token.len() > 2
    }
}

impl TryFrom<String> for EntityId {
    type Error = KgError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<EntityId> for String {
    fn from(value: EntityId) -> Self {
        value.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiteralKind {
    Text,
    Integer,
    Float,
    Datetime,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Literal {
    value: String,
    kind: LiteralKind,
}

impl Literal {
    /// Builds a literal, checking that `value` parses under `kind`.
    pub fn new(value: impl Into<String>, kind: LiteralKind) -> Result<Self, KgError> {
        let value = value.into();
        let ok = match kind {
            LiteralKind::Text => true,
            LiteralKind::Integer => value.parse::<i64>().is_ok(),
            LiteralKind::Float => value.parse::<f64>().map(f64::is_finite).unwrap_or(false),
            LiteralKind::Datetime => parse_datetime(&value).is_some(),
        };
        if !ok {
            return Err(KgError::Invalid(format!("{value:?} is not a valid {kind:?}")));
        }
        Ok(Self { value, kind })
    }

    pub fn text(value: impl Into<String>) -> Self {
        Self { value: value.into(), kind: LiteralKind::Text }
    }

    pub fn integer(value: i64) -> Self {
        Self { value: value.to_string(), kind: LiteralKind::Integer }
    }

    /// Kind inference used by the triples file: integer, float, ISO-8601
    /// datetime, falling back to text.
    pub fn infer(raw: &str) -> Self {
        if raw.parse::<i64>().is_ok() {
            return Self { value: raw.to_string(), kind: LiteralKind::Integer };
        }
        if looks_numeric(raw) && raw.parse::<f64>().map(f64::is_finite).unwrap_or(false) {
            return Self { value: raw.to_string(), kind: LiteralKind::Float };
        }
        if raw.contains('-') && parse_datetime(raw).is_some() {
            return Self { value: raw.to_string(), kind: LiteralKind::Datetime };
        }
        Self::text(raw)
    }

    pub fn value(&self) -> &str {
        &self.value
    }

    pub fn kind(&self) -> LiteralKind {
        self.kind
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self.kind {
            LiteralKind::Integer | LiteralKind::Float => self.value.parse().ok(),
            _ => None,
        }
    }

    pub fn as_datetime(&self) -> Option<chrono::NaiveDateTime> {
        match self.kind {
            LiteralKind::Datetime => parse_datetime(&self.value),
            _ => None,
        }
    }

    /// Canonical string used when comparing answer sets: numbers are
    /// re-rendered so `5`, `5.0` and `05` agree, datetimes are normalized.
    pub fn canonical(&self) -> String {
        match self.kind {
            LiteralKind::Text => self.value.clone(),
            LiteralKind::Integer | LiteralKind::Float => {
                let x: f64 = self.value.parse().unwrap_or(f64::NAN);
                if x.fract() == 0.0 && x.abs() < 1e15 {
                    format!("{}", x as i64)
                } else {
                    format!("{x}")
                }
            }
            LiteralKind::Datetime => parse_datetime(&self.value)
                .map(|dt| dt.format("%Y-%m-%dT%H:%M:%S").to_string())
                .unwrap_or_else(|| self.value.clone()),
        }
    }
}

fn looks_numeric(raw: &str) -> bool {
    let body = raw.strip_prefix(['-', '+']).unwrap_or(raw);
    !body.is_empty()
        && body.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '-' | '+'))
        && body.chars().next().is_some_and(|c| c.is_ascii_digit() || c == '.')
}

/// Accepts `YYYY`, `YYYY-MM`, `YYYY-MM-DD` and full date-times with an
/// optional `Z` or numeric offset (the offset is dropped).
pub(crate) fn parse_datetime(raw: &str) -> Option<chrono::NaiveDateTime> {
    use chrono::{NaiveDate, NaiveDateTime};
    let s = raw.trim();
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    let s = s.strip_suffix('Z').unwrap_or(s);
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt);
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return d.and_hms_opt(0, 0, 0);
    }
    let parts: Vec<&str> = s.split('-').collect();
    let year_ok = |y: &str| y.len() == 4 && y.chars().all(|c| c.is_ascii_digit());
    match parts.as_slice() {
        [y] if year_ok(y) => NaiveDate::from_ymd_opt(y.parse().ok()?, 1, 1)?.and_hms_opt(0, 0, 0),
        [y, m] if year_ok(y) && m.len() == 2 => {
            NaiveDate::from_ymd_opt(y.parse().ok()?, m.parse().ok()?, 1)?.and_hms_opt(0, 0, 0)
        }
        _ => None,
    }
}

/// A node value in object position: an entity or a literal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Term {
    Entity(EntityId),
    Literal(Literal),
}

impl Term {
    pub fn entity(id: &str) -> Self {
        Term::Entity(EntityId(id.to_string()))
    }

    pub fn as_entity(&self) -> Option<&EntityId> {
        match self {
            Term::Entity(e) => Some(e),
            Term::Literal(_) => None,
        }
    }

    /// Raw string form: the id for entities, the lexical value for literals.
    pub fn lexical(&self) -> &str {
        match self {
            Term::Entity(e) => e.as_str(),
            Term::Literal(l) => l.value(),
        }
    }

    pub fn canonical(&self) -> String {
        match self {
            Term::Entity(e) => e.0.clone(),
            Term::Literal(l) => l.canonical(),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Term::Entity(_) => 0,
            Term::Literal(_) => 1,
        }
    }
}

// Lexicographic on the lexical form first so listings read naturally.
impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        self.lexical()
            .cmp(other.lexical())
            .then_with(|| self.rank().cmp(&other.rank()))
            .then_with(|| match (self, other) {
                (Term::Literal(a), Term::Literal(b)) => a.kind.cmp(&b.kind),
                _ => Ordering::Equal,
            })
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.lexical())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityId,
    pub predicate: String,
    pub object: Term,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: EntityId,
    #[serde(rename = "name", default)]
    pub canonical_name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub types: Vec<String>,
    #[serde(default)]
    pub popularity: u64,
    #[serde(default)]
    pub is_cvt: bool,
}

impl EntityRecord {
    /// Record created for an id that only appears in the triples.
    pub fn minimal(id: EntityId) -> Self {
        Self {
            canonical_name: id.as_str().to_string(),
            id,
            aliases: Vec::new(),
            description: String::new(),
            types: Vec::new(),
            popularity: 0,
            is_cvt: false,
        }
    }

    /// Display label: the canonical name, or the id for unnamed nodes.
    pub fn label(&self) -> &str {
        if self.canonical_name.is_empty() {
            self.id.as_str()
        } else {
            &self.canonical_name
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Outgoing,
    Incoming,
    Both,
}

/// Lowercase, strip punctuation, collapse whitespace.
pub fn normalize_name(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
enum MatchTier {
    Exact = 0,
    Tokens = 1,
    Edit = 2,
}

/// Minimum edit similarity for a fuzzy name match.
const EDIT_SIMILARITY_CUTOFF: f64 = 0.75;

/// A `find_entities` hit with its name-match score in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct NameMatch<'g> {
    pub record: &'g EntityRecord,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    triples: Vec<Triple>,
    by_subject: HashMap<EntityId, Vec<usize>>,
    by_predicate: HashMap<String, Vec<usize>>,
    by_object: HashMap<Term, Vec<usize>>,
    entities: BTreeMap<EntityId, EntityRecord>,
    name_index: BTreeMap<String, Vec<EntityId>>,
}

impl KnowledgeGraph {
    /// Builds and indexes a graph. Duplicate triples are dropped and any
    /// entity id without a record gets [`EntityRecord::minimal`].
    pub fn from_parts(
        triples: impl IntoIterator<Item = Triple>,
        records: impl IntoIterator<Item = EntityRecord>,
    ) -> Self {
        let triples: Vec<Triple> = triples.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let mut entities: BTreeMap<EntityId, EntityRecord> =
            records.into_iter().map(|r| (r.id.clone(), r)).collect();

        let mut by_subject: HashMap<EntityId, Vec<usize>> = HashMap::new();
        let mut by_predicate: HashMap<String, Vec<usize>> = HashMap::new();
        let mut by_object: HashMap<Term, Vec<usize>> = HashMap::new();
        for (i, t) in triples.iter().enumerate() {
            by_subject.entry(t.subject.clone()).or_default().push(i);
            by_predicate.entry(t.predicate.clone()).or_default().push(i);
            by_object.entry(t.object.clone()).or_default().push(i);
            for id in std::iter::once(&t.subject).chain(t.object.as_entity()) {
                entities
                    .entry(id.clone())
                    .or_insert_with(|| EntityRecord::minimal(id.clone()));
            }
        }

        let mut name_index: BTreeMap<String, Vec<EntityId>> = BTreeMap::new();
        for record in entities.values().filter(|r| !r.is_cvt) {
            let names: BTreeSet<String> = std::iter::once(&record.canonical_name)
                .chain(&record.aliases)
                .map(|n| normalize_name(n))
                .filter(|n| !n.is_empty())
                .collect();
            for name in names {
                name_index.entry(name).or_default().push(record.id.clone());
            }
        }

        Self { triples, by_subject, by_predicate, by_object, entities, name_index }
    }

    /// Loads the tab-separated triples file and the JSON Lines entity file.
    /// A leading `ns:` on any triple field is dropped, so `ns:m.01` and
    /// `m.01` name the same node.
    pub fn load(triples_path: &Path, entities_path: &Path) -> Result<Self, KgError> {
        let triples = read_triples(triples_path)?;
        let records = read_entities(entities_path)?;
        Ok(Self::from_parts(triples, records))
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityRecord> {
        self.entities.values()
    }

    pub fn entity(&self, id: &EntityId) -> Option<&EntityRecord> {
        self.entities.get(id)
    }

    pub fn entity_by_str(&self, id: &str) -> Option<&EntityRecord> {
        self.entities.get(&EntityId(id.to_string()))
    }

    pub fn name_index_len(&self) -> usize {
        self.name_index.len()
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triples.binary_search(triple).is_ok()
    }

    pub fn by_subject(&self, s: &EntityId) -> impl Iterator<Item = &Triple> {
        self.lookup(self.by_subject.get(s))
    }

    pub fn by_predicate(&self, p: &str) -> impl Iterator<Item = &Triple> {
        self.lookup(self.by_predicate.get(p))
    }

    pub fn by_object(&self, o: &Term) -> impl Iterator<Item = &Triple> {
        self.lookup(self.by_object.get(o))
    }

    fn lookup<'a>(&'a self, idx: Option<&'a Vec<usize>>) -> impl Iterator<Item = &'a Triple> + 'a {
        idx.into_iter().flatten().map(move |&i| &self.triples[i])
    }

    /// Number of triples using `predicate`.
    pub fn predicate_frequency(&self, predicate: &str) -> usize {
        self.by_predicate.get(predicate).map_or(0, Vec::len)
    }

    pub fn predicates(&self) -> impl Iterator<Item = &str> {
        let set: BTreeSet<&str> = self.by_predicate.keys().map(String::as_str).collect();
        set.into_iter()
    }

    /// Human-readable label for a term: entity name, or the literal value.
    pub fn label(&self, term: &Term) -> String {
        match term {
            Term::Entity(id) => self
                .entities
                .get(id)
                .map(|r| r.label().to_string())
                .unwrap_or_else(|| id.to_string()),
            Term::Literal(l) => l.value().to_string(),
        }
    }

    /// Surface-name search. Exact normalized matches rank first, then token
    /// overlap, then edit similarity; ties go to the more popular entity,
    /// then to the smaller id.
    pub fn find_entities(&self, surface_name: &str, limit: usize) -> Vec<NameMatch<'_>> {
        let query = normalize_name(surface_name);
        if query.is_empty() || limit == 0 {
            return Vec::new();
        }
        let query_tokens: BTreeSet<&str> = query.split(' ').collect();

        let mut hits: Vec<(MatchTier, f64, &EntityRecord)> = Vec::new();
        for record in self.entities.values().filter(|r| !r.is_cvt) {
            let best = std::iter::once(&record.canonical_name)
                .chain(&record.aliases)
                .map(|n| normalize_name(n))
                .filter(|n| !n.is_empty())
                .filter_map(|name| {
                    if name == query {
                        return Some((MatchTier::Exact, 1.0));
                    }
                    let tokens: BTreeSet<&str> = name.split(' ').collect();
                    let inter = tokens.intersection(&query_tokens).count();
                    if inter > 0 {
                        let union = tokens.union(&query_tokens).count();
                        return Some((MatchTier::Tokens, inter as f64 / union as f64));
                    }
                    let sim = strsim::normalized_levenshtein(&name, &query);
                    (sim >= EDIT_SIMILARITY_CUTOFF).then_some((MatchTier::Edit, sim))
                })
                .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(b.1.total_cmp(&a.1)));
            if let Some((tier, score)) = best {
                hits.push((tier, score, record));
            }
        }

        hits.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then(b.1.total_cmp(&a.1))
                .then(b.2.popularity.cmp(&a.2.popularity))
                .then(a.2.id.cmp(&b.2.id))
        });
        hits.truncate(limit);
        hits.into_iter().map(|(_, score, record)| NameMatch { record, score }).collect()
    }

    /// One-hop neighbourhood, sorted by predicate then neighbour.
    /// `Both` lists outgoing edges before incoming ones.
    pub fn neighbors(&self, node: &EntityId, direction: Direction) -> Result<Vec<(String, Term)>, KgError> {
        if !self.entities.contains_key(node) {
            return Err(KgError::UnknownEntity(node.to_string()));
        }
        let outgoing = || {
            let mut v: Vec<(String, Term)> =
                self.by_subject(node).map(|t| (t.predicate.clone(), t.object.clone())).collect();
            v.sort();
            v
        };
        let incoming = || {
            let mut v: Vec<(String, Term)> = self
                .by_object(&Term::Entity(node.clone()))
                .map(|t| (t.predicate.clone(), Term::Entity(t.subject.clone())))
                .collect();
            v.sort();
            v
        };
        Ok(match direction {
            Direction::Outgoing => outgoing(),
            Direction::Incoming => incoming(),
            Direction::Both => {
                let mut v = outgoing();
                v.extend(incoming());
                v
            }
        })
    }

    pub fn write_triples(&self, mut out: impl Write) -> io::Result<()> {
        for t in &self.triples {
            writeln!(out, "{}\t{}\t{}", t.subject, t.predicate, t.object.lexical())?;
        }
        Ok(())
    }

    pub fn write_entities(&self, mut out: impl Write) -> io::Result<()> {
        for record in self.entities.values() {
            let line = serde_json::to_string(record).map_err(io::Error::other)?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Writes both files in the load format.
    pub fn save(&self, triples_path: &Path, entities_path: &Path) -> Result<(), KgError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| KgError::Io { path, source }
        };
        let mut buf = Vec::new();
        self.write_triples(&mut buf).map_err(io_err(triples_path))?;
        fs::write(triples_path, buf).map_err(io_err(triples_path))?;
        let mut buf = Vec::new();
        self.write_entities(&mut buf).map_err(io_err(entities_path))?;
        fs::write(entities_path, buf).map_err(io_err(entities_path))
    }
}

fn read_text(path: &Path) -> Result<String, KgError> {
    fs::read_to_string(path).map_err(|source| match source.kind() {
        io::ErrorKind::NotFound => KgError::NotFound(path.to_path_buf()),
        _ => KgError::Io { path: path.to_path_buf(), source },
    })
}

pub fn parse_triples(path: &Path, text: &str) -> Result<Vec<Triple>, KgError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |reason: String| KgError::Malformed { path: path.to_path_buf(), line: i + 1, reason };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(malformed(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let strip = |f: &'_ str| f.strip_prefix("ns:").unwrap_or(f).to_string();
        let (s, p, o) = (strip(fields[0].trim()), strip(fields[1].trim()), strip(fields[2]));
        if s.is_empty() || p.is_empty() {
            return Err(malformed("empty subject or predicate".into()));
        }
        let object = if EntityId::looks_like_id(&o) {
            Term::Entity(EntityId(o))
        } else {
            Term::Literal(Literal::infer(&o))
        };
        out.push(Triple { subject: EntityId(s), predicate: p, object });
    }
    Ok(out)
}

pub fn parse_entities(path: &Path, text: &str) -> Result<Vec<EntityRecord>, KgError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| KgError::Malformed { path: path.to_path_buf(), line: i + 1, reason };
        let record: EntityRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if !record.is_cvt && record.canonical_name.trim().is_empty() {
            return Err(malformed(format!("entity {} has no name", record.id)));
        }
        if !seen.insert(record.id.clone()) {
            return Err(malformed(format!("duplicate entity {}", record.id)));
        }
        out.push(record);
    }
    Ok(out)
}

fn read_triples(path: &Path) -> Result<Vec<Triple>, KgError> {
    parse_triples(path, &read_text(path)?)
}

fn read_entities(path: &Path) -> Result<Vec<EntityRecord>, KgError> {
    parse_entities(path, &read_text(path)?)
}
