use advneg_core::corpus::{alternating_context, DialogueRecord, Source};
use advneg_core::prompt::{render_prompt, InstructionType, PromptSpec};

const FIXTURE: &str = include_str!("fixtures/interview_prompt.txt");

fn record(id: &str, turns: &[&str], negatives: &[&str]) -> DialogueRecord {
    DialogueRecord {
        id: id.into(),
        context: alternating_context(turns),
        persona: None,
        positives: vec!["placeholder positive".into()],
        adversarial_negatives: negatives.iter().map(|s| s.to_string()).collect(),
        source: Source::DailyDialogPP,
    }
}

fn interview_spec() -> PromptSpec {
    let price = record(
        "ex-price",
        &[
            "How about taking the damaged portion at a lower price?",
            "What kind of price did you want?",
            "I was thinking of 30% off.",
        ],
        &[
            "I have not completed the portions of the children, ...",
            "Shall I inquire about the price of the plane tickets ...",
            "I have been thinking up new ways of supplying money ...",
            "My car roof was not damaged in the accident.",
            "I purchased a different kind of dress in the shopping mall ...",
        ],
    );
    let random = record(
        "ex-random",
        &[
            "No, but that was a random change of subject.",
            "It may have been random, but have you?",
            "I haven't lately.",
        ],
        &[
            "Yeah, Our society is annoying. They keep on changing ...",
            "I am not sure which subject I am going to take. Lately, ...",
            "I don't know that day Prof. Lesley was randomly picking up ...",
            "Today In college some random guy came and started talking ...",
            "Have you seen Tina lately? I am feeling weird as ...",
        ],
    );
    let target = record(
        "target-interview",
        &[
            "Paul, a company called me for an interview.",
            "That's great! You need to prepare for it.",
            "How?",
        ],
        &[],
    );
    PromptSpec::new(InstructionType::Direct, vec![price, random], target)
}

#[test]
fn interview_prompt_is_byte_identical() {
    let rendered = render_prompt(&interview_spec()).unwrap();
    assert_eq!(rendered.text.as_bytes(), FIXTURE.as_bytes());
    assert_eq!(rendered.target_id, "target-interview");
}

#[test]
fn rendering_is_stable_and_hash_tracks_spec() {
    let spec = interview_spec();
    let a = render_prompt(&spec).unwrap();
    assert_eq!(a, render_prompt(&spec).unwrap());
    let mut changed = spec.clone();
    changed.examples.swap(0, 1);
    let b = render_prompt(&changed).unwrap();
    assert_ne!(a.spec_hash, b.spec_hash);
    assert_ne!(a.text, b.text);
}

#[test]
fn target_negatives_never_leak_into_prompt() {
    let mut spec = interview_spec();
    spec.target.adversarial_negatives = vec!["SECRET negative".into(); 5];
    let text = render_prompt(&spec).unwrap().text;
    assert!(!text.contains("SECRET"));
}
