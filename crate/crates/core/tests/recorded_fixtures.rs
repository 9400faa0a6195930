//! Recorded fixtures: cassettes and golden transcripts under `fixtures/`.
//!
//! With `KGQA_REGENERATE=1` the scripted agents below are run against the
//! fixture graphs and every model call is recorded. Without it the tests
//! replay the cassettes and compare against the stored transcripts.

mod common;

use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use common::*;
use kgqa_core::dialogue::{run_session, Clarifier, LlmUser, PromptSet};
use kgqa_core::llm::{
    Cassette, CassetteWriter, ChatBackend, MockPerplexity, PerplexityProvider, Recorder, ReplayBackend,
    ScriptedPerplexity, SequenceBackend,
};
use kgqa_core::pipeline::{
    build_unambiguous_item, dataset_stats, evaluate_dataset, io, ItemTranscript, UnAmbItem, UserSource,
};

const NOVELIST_OR_FENCER: &str = r#"Action: AskForClarification("Do you mean the American novelist or the British fencer?")"#;

fn demo_script(id: &str) -> Vec<&'static str> {
    match id {
        "d01" => vec![
            "Thought: Look up the person first.\nAction: SearchNodes(\"Alice Walker\")",
            NOVELIST_OR_FENCER,
            "Thought: The user means the novelist, m.0aw1.\nDone: SELECT ?x WHERE { ns:m.0aw1 ns:people.person.profession ?x }",
        ],
        "d02" => vec![
            "Action: SearchNodes(\"Meridian\")",
            "Thought: Find the author and the predicates around them.\nAction: SearchGraphPattern(\"SELECT ?e WHERE { ns:m.0mer ns:book.written_work.author ?e }\", \"place of birth\")",
            "Done: SELECT ?p WHERE { ns:m.0mer ns:book.written_work.author ?a . ?a ns:people.person.place_of_birth ?p }",
        ],
        "d03" => vec![
            "Action: SearchNodes(\"Pulitzer Prize\")",
            "Thought: Check which works the prize honored.\nAction: ExecuteSPARQL(\"SELECT ?b WHERE { ?h ns:award.award_honor.award ns:m.0pul . ?h ns:award.award_honor.honored_for ?b }\")",
            "Thought: The Color Purple was written by Alice Walker.\nDone: SELECT ?b WHERE { ?h ns:award.award_honor.award ns:m.0pul . ?h ns:award.award_honor.honored_for ?b . ?b ns:book.written_work.author ?a }",
        ],
        "d04" => vec![
            "Action: SearchNodes(\"Georgia\")",
            "Thought: Georgia could be the state or the country.\nAction: AskForClarification(\"Do you mean the U.S. state or the country in the Caucasus?\")",
            "Action: SearchGraphPattern(\"SELECT ?c WHERE { ?c ns:location.location.containedby ns:m.0gas }\", \"population\")",
            "Done: SELECT ?c WHERE { ?c ns:location.location.containedby ns:m.0gas . ?c ns:location.citytown.population ?n FILTER(?n > 150000) }",
        ],
        "d05" => vec![
            "Action: SearchNodes(\"Georgia\")",
            "Thought: The question says country, so it is m.0gac.\nDone: SELECT ?c WHERE { ?c ns:location.location.containedby ns:m.0gac . ?c ns:location.citytown.population ?n } ORDER BY DESC(?n) LIMIT 1",
        ],
        "d06" => vec![
            "Action: SearchNodes(\"National Book Award for Fiction\")",
            "Action: SearchGraphPattern(\"SELECT ?e WHERE { ?e ns:type.object.name \\\"National Book Award for Fiction\\\" }\", \"honored for\")",
            "Thought: The award went to Alice Walker, so list the publication dates of her books.\nDone: SELECT ?d WHERE { ns:m.0aw1 ns:book.author.works_written ?b . ?b ns:book.written_work.date_published ?d }",
        ],
        "d07" => vec![
            "Action: SearchNodes(\"Alice Walker\")",
            NOVELIST_OR_FENCER,
            "Action: SearchGraphPattern(\"SELECT ?e WHERE { ?e ns:people.person.place_of_birth ns:m.0eat }\", \"famous for\")",
            "Thought: Famous for could mean her work or her honors.\nAction: AskForClarification(\"Do you want her profession or the awards she won?\")",
            "Done: SELECT ?x WHERE { ns:m.0aw1 ns:people.person.profession ?x }",
        ],
        other => panic!("no script for {other}"),
    }
}

const DEMO_GEN: [&str; 3] = [
    "What is the profession of Alice Walker, the American novelist?",
    "Which cities in the U.S. state of Georgia have more than 150000 inhabitants?",
    "What professions did Alice Walker, the American novelist, have?",
];

const ALICE_SCRIPT: [&str; 3] = [
    "Thought: Find the entity named Alice Walker.\nAction: SearchNodes(\"Alice Walker\")",
    "Thought: Two entities share the name and the hint says the question is ambiguous.\nAction: AskForClarification(\"Which Alice Walker do you mean: the fencer or the author?\")",
    "Thought: The author is m.0aw1.\nDone: SELECT ?x WHERE { ns:m.0aw1 ns:people.person.profession ?x }",
];

struct Unamb {
    id: &'static str,
    question: &'static str,
    sparql: &'static str,
    script: &'static [&'static str],
    replies: &'static [&'static str],
}

const UNAMB: [Unamb; 4] = [
    Unamb {
        id: "u1",
        question: "What was Alice Walker famous for?",
        sparql: "SELECT ?x WHERE { ns:m.0aw1 ns:people.person.profession ?x }",
        script: &[
            "Action: SearchNodes(\"Alice Walker\")",
            NOVELIST_OR_FENCER,
            "Action: SearchGraphPattern(\"SELECT ?e WHERE { ?e ns:people.person.place_of_birth ns:m.0eat }\", \"famous for\")",
            "Action: AskForClarification(\"Do you want her profession or the awards she won?\")",
            "Action: AskForClarification(\"All of her professions, or only the main one?\")",
            "Done: SELECT ?x WHERE { ns:m.0aw1 ns:people.person.profession ?x }",
        ],
        replies: &["The novelist.", "Her profession.", "All of them."],
    },
    Unamb {
        id: "u2",
        question: "Where was the author of Meridian born?",
        sparql: "SELECT ?p WHERE { ns:m.0mer ns:book.written_work.author ?a . ?a ns:people.person.place_of_birth ?p }",
        script: &["Done: SELECT ?p WHERE { ns:m.0mer ns:book.written_work.author ?a . ?a ns:people.person.place_of_birth ?p }"],
        replies: &[],
    },
    Unamb {
        id: "u3",
        question: "What is the capital of Georgia?",
        sparql: "SELECT ?x WHERE { ns:m.0gas ns:location.administrative_division.capital ?x }",
        script: &[
            "Action: SearchNodes(\"Georgia\")",
            "Action: AskForClarification(\"The U.S. state or the country?\")",
            "Done: SELECT ?x WHERE { ns:m.0gas ns:location.administrative_division.capital ?x }",
        ],
        replies: &["The U.S. state."],
    },
    Unamb {
        id: "u4",
        question: "When was Meridian published?",
        sparql: "SELECT ?d WHERE { ns:m.0mer ns:book.written_work.date_published ?d }",
        script: &[
            "Action: SearchNodes(\"Meridian\")",
            "Done: SELECT ?d WHERE { ns:m.0mer ns:book.written_work.date_published ?d }",
        ],
        replies: &[],
    },
];

const UNAMB_GEN: [&str; 2] = [
    "Which professions did Alice Walker, the American novelist, have?",
    "What is the capital of the U.S. state of Georgia?",
];

struct ScriptedClarifier(std::vec::IntoIter<String>);

impl Clarifier for ScriptedClarifier {
    fn respond(&mut self, _request: &str) -> Result<String, String> {
        self.0.next().ok_or_else(|| "no scripted reply left".to_string())
    }
}

fn fresh_writer(path: &Path) -> Arc<CassetteWriter> {
    let _ = fs::remove_file(path);
    CassetteWriter::open(path).unwrap()
}

fn reset_dir(dir: &Path) {
    let _ = fs::remove_dir_all(dir);
    fs::create_dir_all(dir).unwrap();
}

fn regenerate_demo() {
    let root = fixtures();
    let graph = main_graph();
    let prompts = PromptSet::builtin();
    let writer = fresh_writer(&root.join("cassette.jsonl"));
    let ppl: Arc<dyn PerplexityProvider> = Arc::new(Recorder::new(PPL, Arc::new(MockPerplexity), writer.clone()));
    let user: Arc<dyn ChatBackend> = Arc::new(Recorder::new(USER, Arc::new(RuleUserBackend { graph: graph.clone() }), writer.clone()));
    let mut transcripts = Vec::new();
    for item in dataset("dataset.jsonl") {
        let agent = Recorder::new(AGENT, Arc::new(SequenceBackend::new(AGENT, demo_script(&item.id))), writer.clone());
        let env = bayesian_env(graph.clone(), Arc::new(agent), ppl.clone());
        let mut clarifier = LlmUser {
            backend: user.clone(),
            instruction: prompts.user_instruction.clone(),
            golden_sparql: item.golden_sparql.clone(),
        };
        let transcript = run_session(&item.question, &env, &mut clarifier, Some(item.golden_sparql.clone()), None);
        transcripts.push(ItemTranscript { id: item.id, category: item.category, question: item.question, transcript });
    }
    let gen = Recorder::new(GEN, Arc::new(SequenceBackend::new(GEN, DEMO_GEN)), writer);
    let items: Vec<UnAmbItem> = transcripts
        .iter()
        .map(|t| build_unambiguous_item(&t.id, &t.transcript, &gen, &prompts).unwrap())
        .collect();
    let dir = root.join("transcripts");
    reset_dir(&dir);
    io::save_transcripts(&dir, &transcripts).unwrap();
    io::write_jsonl(&root.join("unamb.jsonl"), &items).unwrap();
}

fn regenerate_alice() {
    let root = fixtures().join("alice");
    let item = dataset("alice/dataset.jsonl").remove(0);
    let writer = fresh_writer(&root.join("cassette.jsonl"));
    let ppl = Recorder::new(PPL, Arc::new(ScriptedPerplexity::constant(4.0)), writer.clone());
    let agent = Recorder::new(AGENT, Arc::new(SequenceBackend::new(AGENT, ALICE_SCRIPT)), writer.clone());
    let user = Recorder::new(USER, Arc::new(SequenceBackend::new(USER, ["The American author."])), writer);
    let env = bayesian_env(alice_graph(), Arc::new(agent), Arc::new(ppl));
    let mut clarifier = LlmUser {
        backend: Arc::new(user),
        instruction: PromptSet::builtin().user_instruction,
        golden_sparql: item.golden_sparql.clone(),
    };
    let transcript = run_session(&item.question, &env, &mut clarifier, Some(item.golden_sparql.clone()), None);
    io::write_json(&root.join("transcript.json"), &transcript).unwrap();
}

fn regenerate_unamb() {
    let root = fixtures().join("unamb");
    reset_dir(&root.join("transcripts"));
    let writer = fresh_writer(&root.join("cassette.jsonl"));
    let graph = main_graph();
    let mut transcripts = Vec::new();
    for u in &UNAMB {
        let env = bayesian_env(graph.clone(), Arc::new(SequenceBackend::new(AGENT, u.script.iter().copied())), Arc::new(MockPerplexity));
        let mut clarifier = ScriptedClarifier(u.replies.iter().map(|s| s.to_string()).collect::<Vec<_>>().into_iter());
        let transcript = run_session(u.question, &env, &mut clarifier, Some(u.sparql.to_string()), None);
        transcripts.push(ItemTranscript {
            id: u.id.to_string(),
            category: kgqa_core::pipeline::Category::OneHop,
            question: u.question.to_string(),
            transcript,
        });
    }
    io::save_transcripts(&root.join("transcripts"), &transcripts).unwrap();
    let gen = Recorder::new(GEN, Arc::new(SequenceBackend::new(GEN, UNAMB_GEN)), writer);
    for t in &transcripts {
        build_unambiguous_item(&t.id, &t.transcript, &gen, &PromptSet::builtin()).unwrap();
    }
}

/// Regenerates everything once per test binary when requested.
fn ensure_fixtures() {
    static DONE: OnceLock<Mutex<()>> = OnceLock::new();
    let lock = DONE.get_or_init(|| {
        if regenerating() {
            regenerate_demo();
            regenerate_alice();
            regenerate_unamb();
        }
        Mutex::new(())
    });
    drop(lock.lock());
}

fn replay(path: &Path) -> Arc<Cassette> {
    Arc::new(Cassette::load(path).unwrap())
}

fn strip(ts: &[ItemTranscript]) -> Vec<ItemTranscript> {
    ts.iter()
        .map(|t| ItemTranscript { transcript: t.transcript.without_timestamps(), ..t.clone() })
        .collect()
}

#[test]
fn demo_dataset_replays_to_stored_transcripts() {
    ensure_fixtures();
    let root = fixtures();
    let cassette = replay(&root.join("cassette.jsonl"));
    let env = bayesian_env(
        main_graph(),
        Arc::new(ReplayBackend::new(AGENT, cassette.clone())),
        Arc::new(ReplayBackend::new(PPL, cassette.clone())),
    );
    let users = UserSource::Llm {
        backend: Arc::new(ReplayBackend::new(USER, cassette)),
        instruction: PromptSet::builtin().user_instruction,
    };
    let items = dataset("dataset.jsonl");
    let run = evaluate_dataset(&items, &env, &users, 4);
    let stored = io::load_transcripts(&root.join("transcripts")).unwrap();
    assert_eq!(strip(&run.transcripts), strip(&stored));

    let report = &run.report;
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    let f1: Vec<f64> = report.per_item.iter().map(|r| r.f1).collect();
    assert_eq!(f1, [1.0, 1.0, 1.0, 1.0, 1.0, 0.4, 1.0]);
    assert_eq!(report.per_item[6].entity_clarifications, 1);
    assert_eq!(report.per_item[6].intent_clarifications, 1);
}

#[test]
fn mock_mode_matches_replay() {
    ensure_fixtures();
    let root = fixtures();
    let cassette = replay(&root.join("cassette.jsonl"));
    let graph = main_graph();
    let env = bayesian_env(graph.clone(), Arc::new(ReplayBackend::new(AGENT, cassette)), Arc::new(MockPerplexity));
    let run = evaluate_dataset(&dataset("dataset.jsonl"), &env, &UserSource::RuleBased(graph), 1);
    let stored = io::load_transcripts(&root.join("transcripts")).unwrap();
    assert_eq!(strip(&run.transcripts), strip(&stored));
}

#[test]
fn demo_unamb_rows_replay() {
    ensure_fixtures();
    let root = fixtures();
    let gen = ReplayBackend::new(GEN, replay(&root.join("cassette.jsonl")));
    let prompts = PromptSet::builtin();
    let rows: Vec<UnAmbItem> = io::load_transcripts(&root.join("transcripts"))
        .unwrap()
        .iter()
        .map(|t| build_unambiguous_item(&t.id, &t.transcript, &gen, &prompts).unwrap())
        .collect();
    let stored: Vec<UnAmbItem> = io::read_jsonl(&root.join("unamb.jsonl")).unwrap();
    assert_eq!(rows, stored);
    assert_eq!(rows.iter().filter(|r| r.regenerated).count(), 3);
}

#[test]
fn alice_scenario_replays_to_stored_transcript() {
    ensure_fixtures();
    let root = fixtures().join("alice");
    let cassette = replay(&root.join("cassette.jsonl"));
    let item = dataset("alice/dataset.jsonl").remove(0);
    let env = bayesian_env(
        alice_graph(),
        Arc::new(ReplayBackend::new(AGENT, cassette.clone())),
        Arc::new(ReplayBackend::new(PPL, cassette.clone())),
    );
    let mut user = LlmUser {
        backend: Arc::new(ReplayBackend::new(USER, cassette)),
        instruction: PromptSet::builtin().user_instruction,
        golden_sparql: item.golden_sparql.clone(),
    };
    let t = run_session(&item.question, &env, &mut user, Some(item.golden_sparql), None);
    let stored: kgqa_core::Transcript = serde_json::from_str(&fs::read_to_string(root.join("transcript.json")).unwrap()).unwrap();
    assert_eq!(t.without_timestamps(), stored.without_timestamps());
}

#[test]
fn unamb_fixture_counts() {
    ensure_fixtures();
    let root = fixtures().join("unamb");
    let transcripts = io::load_transcripts(&root.join("transcripts")).unwrap();
    let counts: Vec<(usize, usize)> = transcripts
        .iter()
        .map(|t| (t.transcript.session.clarification_count_entity, t.transcript.session.clarification_count_intent))
        .collect();
    assert_eq!(counts, [(1, 2), (0, 0), (1, 0), (0, 0)]);
    let gen = ReplayBackend::new(GEN, replay(&root.join("cassette.jsonl")));
    let items: Vec<UnAmbItem> = transcripts
        .iter()
        .map(|t| build_unambiguous_item(&t.id, &t.transcript, &gen, &PromptSet::builtin()).unwrap())
        .collect();
    assert_eq!(items[0].refined_question, UNAMB_GEN[0]);
    assert_eq!(items[1].refined_question, items[1].original_question);
    assert_eq!(dataset_stats(&items).unwrap().csv_row(), "0.50,0.50,2,50.00");
}
