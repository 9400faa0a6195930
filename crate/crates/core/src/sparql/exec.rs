use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use super::{CompareOp, Iri, PatternTerm, Query, QueryForm, ResultTable, TriplePattern};
use crate::kg::{EntityId, KnowledgeGraph, Literal, LiteralKind, Term, Triple};

type Binding = Vec<Option<Term>>;

/// Position of a pattern term once the current binding is applied.
enum Slot {
    Bound(Term),
    Free(usize),
    /// A constant that cannot occur in this position of any triple.
    Impossible,
}

struct Compiled<'q> {
    vars: Vec<&'q str>,
    index: HashMap<&'q str, usize>,
}

impl<'q> Compiled<'q> {
    fn new(query: &'q Query) -> Self {
        let vars = query.pattern_vars();
        let index = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        Self { vars, index }
    }

    fn slot(&self, term: &PatternTerm, position: usize, binding: &Binding) -> Slot {
        match term {
            PatternTerm::Var(v) => {
                let i = self.index[v.as_str()];
                match &binding[i] {
                    Some(t) => Slot::Bound(t.clone()),
                    None => Slot::Free(i),
                }
            }
            constant => constant_term(constant, position).map_or(Slot::Impossible, Slot::Bound),
        }
    }
}

/// Graph value a constant denotes in a given triple position
/// (0 subject, 1 predicate, 2 object). Predicates are represented as text
/// literals so predicate variables can be projected like any other value.
pub(crate) fn constant_term(term: &PatternTerm, position: usize) -> Option<Term> {
    match (term, position) {
        (PatternTerm::Var(_), _) => None,
        (PatternTerm::Iri(Iri::Full(_)), _) => None,
        (PatternTerm::Iri(Iri::Local(id)), 0) => EntityId::new(id.clone()).ok().map(Term::Entity),
        (PatternTerm::Iri(Iri::Local(p)), 1) => Some(Term::Literal(Literal::text(p.clone()))),
        (PatternTerm::Iri(Iri::Local(id)), _) => Some(if EntityId::looks_like_id(id) {
            Term::entity(id)
        } else {
            Term::Literal(Literal::text(id.clone()))
        }),
        (PatternTerm::Literal(l), _) => Some(Term::Literal(l.clone())),
    }
}

fn triple_value(t: &Triple, position: usize) -> Term {
    match position {
        0 => Term::Entity(t.subject.clone()),
        1 => Term::Literal(Literal::text(t.predicate.clone())),
        _ => t.object.clone(),
    }
}

fn candidates<'g>(graph: &'g KnowledgeGraph, slots: &[Slot; 3]) -> Box<dyn Iterator<Item = &'g Triple> + 'g> {
    match slots {
        [Slot::Bound(Term::Entity(s)), _, _] => Box::new(graph.by_subject(s)),
        [Slot::Bound(Term::Literal(_)), _, _] => Box::new(std::iter::empty()),
        [_, _, Slot::Bound(o)] => Box::new(graph.by_object(o)),
        [_, Slot::Bound(Term::Literal(p)), _] if p.kind() == LiteralKind::Text => {
            Box::new(graph.by_predicate(p.value()))
        }
        [_, Slot::Bound(_), _] => Box::new(std::iter::empty()),
        _ => Box::new(graph.triples().iter()),
    }
}

fn extend(pattern: &TriplePattern, compiled: &Compiled, graph: &KnowledgeGraph, binding: &Binding, out: &mut Vec<Binding>) {
    let slots = [
        compiled.slot(&pattern.subject, 0, binding),
        compiled.slot(&pattern.predicate, 1, binding),
        compiled.slot(&pattern.object, 2, binding),
    ];
    if slots.iter().any(|s| matches!(s, Slot::Impossible)) {
        return;
    }
    'triples: for t in candidates(graph, &slots) {
        let mut next = binding.clone();
        for (position, slot) in slots.iter().enumerate() {
            let value = triple_value(t, position);
            match slot {
                Slot::Bound(b) => {
                    if *b != value {
                        continue 'triples;
                    }
                }
                Slot::Free(i) => match &next[*i] {
                    // same variable twice in one pattern
                    Some(prev) if *prev != value => continue 'triples,
                    Some(_) => {}
                    None => next[*i] = Some(value),
                },
                Slot::Impossible => unreachable!(),
            }
        }
        out.push(next);
    }
}

#[derive(PartialEq, PartialOrd)]
enum Comparable<'a> {
    Number(f64),
    Time(chrono::NaiveDateTime),
    Text(&'a str),
    Entity(&'a str),
}

impl Comparable<'_> {
    fn of(term: &Term) -> Option<Comparable<'_>> {
        Some(match term {
            Term::Entity(e) => Comparable::Entity(e.as_str()),
            Term::Literal(l) => match l.kind() {
                LiteralKind::Integer | LiteralKind::Float => Comparable::Number(l.as_f64()?),
                LiteralKind::Datetime => Comparable::Time(l.as_datetime()?),
                LiteralKind::Text => Comparable::Text(l.value()),
            },
        })
    }

    fn rank(&self) -> u8 {
        match self {
            Comparable::Number(_) => 0,
            Comparable::Time(_) => 1,
            Comparable::Text(_) => 2,
            Comparable::Entity(_) => 3,
        }
    }
}

/// Compares two values of the same kind: numbers numerically, datetimes
/// chronologically, text and entity ids lexicographically. Values of
/// different kinds are incomparable (`None`).
pub fn compare_terms(a: &Term, b: &Term) -> Option<Ordering> {
    let (a, b) = (Comparable::of(a)?, Comparable::of(b)?);
    if a.rank() != b.rank() {
        return None;
    }
    a.partial_cmp(&b)
}

fn filter_holds(op: CompareOp, lhs: &Term, rhs: &Term) -> bool {
    let Some(ord) = compare_terms(lhs, rhs) else {
        return false;
    };
    match op {
        CompareOp::Eq => ord == Ordering::Equal,
        CompareOp::Ne => ord != Ordering::Equal,
        CompareOp::Lt => ord == Ordering::Less,
        CompareOp::Le => ord != Ordering::Greater,
        CompareOp::Gt => ord == Ordering::Greater,
        CompareOp::Ge => ord != Ordering::Less,
    }
}

/// Total order used by ORDER BY: kind first, then value.
fn order_key_cmp(a: &Term, b: &Term) -> Ordering {
    match (Comparable::of(a), Comparable::of(b)) {
        (Some(x), Some(y)) if x.rank() == y.rank() => match (&x, &y) {
            (Comparable::Number(p), Comparable::Number(q)) => p.total_cmp(q),
            _ => x.partial_cmp(&y).unwrap_or(Ordering::Equal),
        },
        (Some(x), Some(y)) => x.rank().cmp(&y.rank()),
        _ => a.cmp(b),
    }
}

/// Evaluates a parsed query against the graph.
///
/// Patterns are joined left to right, each one scanning whichever index its
/// already-bound positions allow. Constants absent from the graph simply
/// produce no rows.
pub fn execute(query: &Query, graph: &KnowledgeGraph) -> ResultTable {
    let compiled = Compiled::new(query);
    let mut solutions: Vec<Binding> = vec![vec![None; compiled.vars.len()]];
    for pattern in &query.patterns {
        let mut next = Vec::new();
        for binding in &solutions {
            extend(pattern, &compiled, graph, binding, &mut next);
        }
        solutions = next;
        if solutions.is_empty() {
            break;
        }
    }

    let value = |b: &Binding, var: &str| -> Term {
        b[compiled.index[var]].clone().expect("pattern variables are bound in every solution")
    };

    solutions.retain(|b| {
        query.filters.iter().all(|f| {
            let lhs = value(b, &f.var);
            let rhs = match &f.operand {
                PatternTerm::Var(v) => Some(value(b, v)),
                constant => constant_term(constant, 2),
            };
            rhs.is_some_and(|rhs| filter_holds(f.op, &lhs, &rhs))
        })
    });

    if query.form == QueryForm::Count {
        let var = &query.projection[0];
        let n = if query.distinct {
            solutions.iter().map(|b| value(b, var)).collect::<BTreeSet<_>>().len()
        } else {
            solutions.len()
        };
        return ResultTable { columns: vec!["count".into()], rows: vec![vec![Term::Literal(Literal::integer(n as i64))]] };
    }

    let project = |b: &Binding| -> Vec<Term> { query.projection.iter().map(|v| value(b, v)).collect() };
    let mut rows: Vec<Vec<Term>> = match &query.order {
        Some(order) => {
            let mut keyed: Vec<(Term, Vec<Term>)> =
                solutions.iter().map(|b| (value(b, &order.var), project(b))).collect();
            keyed.sort_by(|(ka, ra), (kb, rb)| {
                let by_key = order_key_cmp(ka, kb);
                let by_key = if order.descending { by_key.reverse() } else { by_key };
                by_key.then_with(|| ra.cmp(rb))
            });
            keyed.into_iter().map(|(_, r)| r).collect()
        }
        None => {
            let mut rows: Vec<Vec<Term>> = solutions.iter().map(project).collect();
            rows.sort();
            rows
        }
    };
    if query.distinct {
        let mut seen = BTreeSet::new();
        rows.retain(|r| seen.insert(r.clone()));
    }
    if let Some(limit) = query.limit {
        rows.truncate(limit);
    }
    ResultTable { columns: query.projection.clone(), rows }
}
