//! Brute-force reference evaluator: tries every assignment of the query's
//! variables over every value in the graph and keeps those that satisfy
//! all patterns and filters.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use kgqa_core::kg::{EntityId, KnowledgeGraph, Literal, LiteralKind, Term, Triple};
use kgqa_core::sparql::{CompareOp, Iri, PatternTerm, Query, QueryForm, TriplePattern};

/// Every value that can fill a variable: subjects, predicates (as text)
/// and objects.
pub fn domain(graph: &KnowledgeGraph) -> Vec<Term> {
    let mut all = BTreeSet::new();
    for t in graph.triples() {
        all.insert(Term::Entity(t.subject.clone()));
        all.insert(Term::Literal(Literal::text(t.predicate.clone())));
        all.insert(t.object.clone());
    }
    all.into_iter().collect()
}

fn vars(query: &Query) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for p in &query.patterns {
        for t in [&p.subject, &p.predicate, &p.object] {
            if let PatternTerm::Var(v) = t {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
        }
    }
    out
}

fn constant(term: &PatternTerm, position: usize) -> Option<Term> {
    match term {
        PatternTerm::Var(_) | PatternTerm::Iri(Iri::Full(_)) => None,
        PatternTerm::Literal(l) => Some(Term::Literal(l.clone())),
        PatternTerm::Iri(Iri::Local(s)) => Some(if position == 1 {
            Term::Literal(Literal::text(s.clone()))
        } else if s.starts_with("m.") || s.starts_with("g.") {
            Term::entity(s)
        } else {
            Term::Literal(Literal::text(s.clone()))
        }),
    }
}

fn resolve(term: &PatternTerm, position: usize, names: &[String], values: &[Term]) -> Option<Option<Term>> {
    match term {
        PatternTerm::Var(v) => {
            let i = names.iter().position(|n| n == v).unwrap();
            Some(values.get(i).cloned())
        }
        c => constant(c, position).map(Some),
    }
}

/// `None`: not all positions bound yet. `Some(b)`: whether the pattern holds.
fn pattern_holds(p: &TriplePattern, graph: &KnowledgeGraph, names: &[String], values: &[Term]) -> Option<bool> {
    let s = resolve(&p.subject, 0, names, values);
    let pr = resolve(&p.predicate, 1, names, values);
    let o = resolve(&p.object, 2, names, values);
    let (Some(s), Some(pr), Some(o)) = (s, pr, o) else {
        return Some(false);
    };
    let (Some(s), Some(pr), Some(o)) = (s, pr, o) else {
        return None;
    };
    let (Term::Entity(subject), Term::Literal(pred)) = (s, pr) else {
        return Some(false);
    };
    if pred.kind() != LiteralKind::Text {
        return Some(false);
    }
    Some(graph.contains(&Triple { subject: EntityId::new(subject.as_str()).unwrap(), predicate: pred.value().to_string(), object: o }))
}

#[derive(PartialEq, PartialOrd)]
enum Key {
    Num(f64),
    Time(i64),
    Text(String),
    Id(String),
}

fn key(t: &Term) -> Key {
    match t {
        Term::Entity(e) => Key::Id(e.as_str().to_string()),
        Term::Literal(l) => match l.kind() {
            LiteralKind::Integer | LiteralKind::Float => Key::Num(l.value().parse().unwrap()),
            LiteralKind::Datetime => Key::Time(l.as_datetime().unwrap().and_utc().timestamp()),
            LiteralKind::Text => Key::Text(l.value().to_string()),
        },
    }
}

fn rank(k: &Key) -> u8 {
    match k {
        Key::Num(_) => 0,
        Key::Time(_) => 1,
        Key::Text(_) => 2,
        Key::Id(_) => 3,
    }
}

fn compare(a: &Term, b: &Term) -> Option<Ordering> {
    let (a, b) = (key(a), key(b));
    if rank(&a) != rank(&b) {
        return None;
    }
    a.partial_cmp(&b)
}

fn filter_ok(op: CompareOp, a: &Term, b: &Term) -> bool {
    let Some(o) = compare(a, b) else { return false };
    match op {
        CompareOp::Eq => o.is_eq(),
        CompareOp::Ne => o.is_ne(),
        CompareOp::Lt => o.is_lt(),
        CompareOp::Le => o.is_le(),
        CompareOp::Gt => o.is_gt(),
        CompareOp::Ge => o.is_ge(),
    }
}

fn search(
    query: &Query,
    graph: &KnowledgeGraph,
    domain: &[Term],
    names: &[String],
    values: &mut Vec<Term>,
    out: &mut Vec<Vec<Term>>,
) {
    for p in &query.patterns {
        if pattern_holds(p, graph, names, values) == Some(false) {
            return;
        }
    }
    if values.len() == names.len() {
        out.push(values.clone());
        return;
    }
    for v in domain {
        values.push(v.clone());
        search(query, graph, domain, names, values, out);
        values.pop();
    }
}

/// Expected result rows. Unordered results are sorted; ordered results use
/// the ORDER BY key with ties broken by the projected row.
pub fn evaluate(query: &Query, graph: &KnowledgeGraph) -> Vec<Vec<Term>> {
    let names = vars(query);
    let dom = domain(graph);
    let mut solutions = Vec::new();
    search(query, graph, &dom, &names, &mut Vec::new(), &mut solutions);
    let get = |s: &Vec<Term>, v: &str| s[names.iter().position(|n| n == v).unwrap()].clone();
    solutions.retain(|s| {
        query.filters.iter().all(|f| {
            let rhs = match &f.operand {
                PatternTerm::Var(v) => Some(get(s, v)),
                c => constant(c, 2),
            };
            rhs.is_some_and(|r| filter_ok(f.op, &get(s, &f.var), &r))
        })
    });
    if query.form == QueryForm::Count {
        let v = &query.projection[0];
        let n = if query.distinct {
            solutions.iter().map(|s| get(s, v)).collect::<BTreeSet<_>>().len()
        } else {
            solutions.len()
        };
        return vec![vec![Term::Literal(Literal::integer(n as i64))]];
    }
    let project = |s: &Vec<Term>| query.projection.iter().map(|v| get(s, v)).collect::<Vec<_>>();
    let mut rows: Vec<(Option<Term>, Vec<Term>)> =
        solutions.iter().map(|s| (query.order.as_ref().map(|o| get(s, &o.var)), project(s))).collect();
    rows.sort_by(|(ka, ra), (kb, rb)| {
        let by_key = match (ka, kb) {
            (Some(a), Some(b)) => {
                let o = compare(a, b).unwrap_or_else(|| rank(&key(a)).cmp(&rank(&key(b))));
                if query.order.as_ref().unwrap().descending { o.reverse() } else { o }
            }
            _ => Ordering::Equal,
        };
        by_key.then_with(|| ra.cmp(rb))
    });
    let mut rows: Vec<Vec<Term>> = rows.into_iter().map(|(_, r)| r).collect();
    if query.distinct {
        let mut seen = BTreeSet::new();
        rows.retain(|r| seen.insert(r.clone()));
    }
    if let Some(k) = query.limit {
        rows.truncate(k);
    }
    rows
}
