use std::path::Path;

use advneg_core::corpus::{alternating_context, DialogueRecord, Source};
use advneg_core::generator::{
    detect_errors, generate_negatives, parse_numbered_list, ErrorReport, GenerationSettings,
    GeneratorError,
};
use advneg_core::jsonl::read_jsonl;
use advneg_core::llm::{GenerationConfig, LlmClient, ScriptedBackend};
use advneg_core::prompt::ExampleSet;
use serde::Deserialize;

#[derive(Deserialize)]
struct Labeled {
    label: String,
    completion: String,
}

fn classify(report: &ErrorReport) -> &'static str {
    if report.numbering_violation {
        "numbering"
    } else if report.responses.iter().any(|r| r.repetition) {
        "repetition"
    } else if report.responses.iter().any(|r| r.underscore_junk) {
        "underscore"
    } else {
        "clean"
    }
}

#[test]
fn labeled_fixture_is_classified_exactly() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/error_filter.jsonl");
    let cases: Vec<Labeled> = read_jsonl(&path).unwrap();
    assert_eq!(cases.len(), 12);
    for case in &cases {
        let report = detect_errors(&parse_numbered_list(&case.completion));
        assert_eq!(classify(&report), case.label, "{:?}", case.completion);
        assert_eq!(report.clean, case.label == "clean");
    }
}

fn record(id: &str, negatives: usize) -> DialogueRecord {
    DialogueRecord {
        id: id.into(),
        context: alternating_context(&["Paul, a company called me for an interview.", "How?"]),
        persona: None,
        positives: vec!["Be confident and prepare answers.".into()],
        adversarial_negatives: (0..negatives).map(|i| format!("negative {id} {i}")).collect(),
        source: Source::Synthetic,
    }
}

fn examples() -> ExampleSet {
    ExampleSet::new((0..4).map(|i| record(&format!("ex{i}"), 5)).collect(), false).unwrap()
}

const DIRTY: &str = " I went to the the the the store.\n2. b\n3. c\n4. d\n5. e\n";
const CLEAN: &str = " Paul bought a company car.\n2. The interview hall was cold.\n3. Prepare the soup.\n4. How tall is Paul?\n5. Great weather today.\n";

fn client(script: &[&str]) -> LlmClient {
    LlmClient::new(
        Box::new(ScriptedBackend::new(script.iter().copied())),
        GenerationConfig::default(),
    )
    .unwrap()
}

#[test]
fn dirty_then_clean_takes_two_attempts() {
    let client = client(&[DIRTY, CLEAN]);
    let mut set = examples();
    let result =
        generate_negatives(&record("t", 0), &mut set, &GenerationSettings::default(), &client).unwrap();
    assert_eq!(result.attempts, 2);
    assert_eq!(result.negatives.len(), 5);
    assert_eq!(result.negatives[0], "Paul bought a company car.");
    assert_eq!(client.ledger().len(), 2);
    assert_eq!(result.prompts_used.len(), 2);
}

#[test]
fn cap_exhaustion_reports_every_attempt() {
    let client = client(&[DIRTY, DIRTY, CLEAN]);
    let settings = GenerationSettings {
        attempt_cap: 2,
        ..Default::default()
    };
    let err = generate_negatives(&record("t", 0), &mut examples(), &settings, &client).unwrap_err();
    match err {
        GeneratorError::CapExhausted { target_id, reports } => {
            assert_eq!(target_id, "t");
            assert_eq!(reports.len(), 2);
            assert!(reports.iter().all(|r| !r.clean));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn reuse_grows_example_set_by_one_per_target() {
    let client = client(&[CLEAN, CLEAN, CLEAN]);
    let mut set = ExampleSet::new((0..3).map(|i| record(&format!("ex{i}"), 5)).collect(), true).unwrap();
    for (i, id) in ["t0", "t1", "ex0"].iter().enumerate() {
        generate_negatives(&record(id, 0), &mut set, &GenerationSettings::default(), &client).unwrap();
        assert_eq!(set.len(), 4 + i);
    }
    assert!(set.contains("ex0#reuse"));
}
