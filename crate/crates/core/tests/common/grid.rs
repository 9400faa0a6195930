//! Scripted fixture for threshold sweeps: two items that look up an
//! ambiguous name and two that list predicates around one anchor.

use std::sync::Arc;

use kgqa_core::pipeline::{Category, EvalItem};

use super::ReactiveAgent;

pub fn item(id: &str, question: &str, sparql: &str, category: Category) -> EvalItem {
    EvalItem { id: id.into(), question: question.into(), golden_sparql: sparql.into(), category }
}

pub const PROFESSION: &str = "SELECT ?x WHERE { ns:m.0aw1 ns:people.person.profession ?x }";
pub const GEORGIA_CITIES: &str = "SELECT ?c WHERE { ?c ns:location.location.containedby ns:m.0gas }";
pub const BIRTHPLACE: &str = "SELECT ?x WHERE { ns:m.0aw1 ns:people.person.place_of_birth ?x }";
pub const MERIDIAN_AUTHOR: &str = "SELECT ?x WHERE { ns:m.0mer ns:book.written_work.author ?x }";

pub fn entity_items() -> Vec<EvalItem> {
    vec![
        item("g1", "What is Alice Walker's profession?", PROFESSION, Category::OneHop),
        item("g2", "Which cities are in Georgia?", GEORGIA_CITIES, Category::OneHop),
    ]
}

pub fn intent_items() -> Vec<EvalItem> {
    vec![
        item("g3", "Where was the Eatonton native born?", BIRTHPLACE, Category::OneHop),
        item("g4", "Who is behind Meridian?", MERIDIAN_AUTHOR, Category::OneHop),
    ]
}

/// Each item looks something up once, then answers.
pub fn agent() -> Arc<ReactiveAgent> {
    let done = |q: &str| format!("Done: {q}");
    Arc::new(ReactiveAgent::new([
        ("What is Alice Walker's profession?", vec!["Action: SearchNodes(\"Alice Walker\")".to_string(), done(PROFESSION)]),
        ("Which cities are in Georgia?", vec!["Action: SearchNodes(\"Georgia\")".into(), done(GEORGIA_CITIES)]),
        (
            "Where was the Eatonton native born?",
            vec![
                "Action: SearchGraphPattern(\"SELECT ?e WHERE { ?e ns:people.person.place_of_birth ns:m.0eat }\", \"born\")"
                    .into(),
                done(BIRTHPLACE),
            ],
        ),
        (
            "Who is behind Meridian?",
            vec![
                "Action: SearchGraphPattern(\"SELECT ?e WHERE { ns:m.0mer ns:book.written_work.author ?e }\", \"behind\")".into(),
                done(MERIDIAN_AUTHOR),
            ],
        ),
    ]))
}
