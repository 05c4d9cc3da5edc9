//! Dataset loaders that normalize into [`DialogueRecord`]s.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{alternating_context, Corpus, CorpusError, DialogueRecord, Source, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    /// DailyDialog++ release: objects with `context`, `positive_responses`,
    /// and optionally `adversarial_negative_responses`; JSON array or JSON lines.
    DailydialogppJson,
    /// PersonaChat in the `{"train": [{"personality", "utterances"}], ...}` layout.
    PersonachatJson,
    /// One serialized [`DialogueRecord`] per line.
    JsonlNative,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dailydialogpp_json" | "dailydialogpp" => Ok(Self::DailydialogppJson),
            "personachat_json" | "personachat" => Ok(Self::PersonachatJson),
            "jsonl_native" | "jsonl" => Ok(Self::JsonlNative),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat, split: Split) -> Result<Corpus, CorpusError> {
    let raw = std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let records = match format {
        CorpusFormat::DailydialogppJson => parse_dailydialogpp(&raw)?,
        CorpusFormat::PersonachatJson => parse_personachat(&raw, split)?,
        CorpusFormat::JsonlNative => parse_native(&raw)?,
    };
    Corpus::new(split, records)
}

/// Split a payload into per-record JSON values, accepting either a JSON array
/// or JSON lines.
fn json_items(raw: &str) -> Result<Vec<Value>, CorpusError> {
    let trimmed = raw.trim_start();
    if trimmed.starts_with('[') {
        let value: Value = serde_json::from_str(trimmed).map_err(|e| CorpusError::Parse {
            index: 0,
            message: e.to_string(),
        })?;
        match value {
            Value::Array(items) => Ok(items),
            _ => unreachable!("payload starts with '['"),
        }
    } else {
        raw.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(index, line)| {
                serde_json::from_str(line).map_err(|e| CorpusError::Parse {
                    index,
                    message: e.to_string(),
                })
            })
            .collect()
    }
}

#[derive(Deserialize)]
struct DailyDialogPPItem {
    #[serde(default)]
    id: Option<Value>,
    context: Vec<String>,
    positive_responses: Vec<String>,
    #[serde(default)]
    adversarial_negative_responses: Vec<String>,
}

fn parse_dailydialogpp(raw: &str) -> Result<Vec<DialogueRecord>, CorpusError> {
    json_items(raw)?
        .into_iter()
        .enumerate()
        .map(|(index, value)| {
            let item: DailyDialogPPItem =
                serde_json::from_value(value).map_err(|e| CorpusError::Parse {
                    index,
                    message: e.to_string(),
                })?;
            let id = match item.id {
                Some(Value::String(s)) => s,
                Some(Value::Number(n)) => n.to_string(),
                _ => format!("ddpp-{index}"),
            };
            Ok(DialogueRecord {
                id,
                context: alternating_context(&item.context),
                persona: None,
                positives: trim_all(item.positive_responses),
                adversarial_negatives: trim_all(item.adversarial_negative_responses),
                source: Source::DailyDialogPP,
            })
        })
        .collect()
}

#[derive(Deserialize)]
struct PersonaChatDialog {
    #[serde(default)]
    personality: Vec<String>,
    utterances: Vec<PersonaChatTurn>,
}

#[derive(Deserialize)]
struct PersonaChatTurn {
    candidates: Vec<String>,
    history: Vec<String>,
}

/// One record per dialogue, taken from its final turn: the history is the
/// context and the last candidate is the gold response.
fn parse_personachat(raw: &str, split: Split) -> Result<Vec<DialogueRecord>, CorpusError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| CorpusError::Parse {
        index: 0,
        message: e.to_string(),
    })?;
    let key = match split {
        Split::Train => "train",
        Split::Validation => "valid",
        Split::Test => "test",
    };
    let dialogs = match value {
        Value::Array(items) => items,
        Value::Object(mut map) => match map.remove(key) {
            Some(Value::Array(items)) => items,
            _ => Vec::new(),
        },
        _ => {
            return Err(CorpusError::Parse {
                index: 0,
                message: "expected an array or an object keyed by split".into(),
            })
        }
    };
    dialogs
        .into_iter()
        .enumerate()
        .map(|(index, value)| {
            let dialog: PersonaChatDialog =
                serde_json::from_value(value).map_err(|e| CorpusError::Parse {
                    index,
                    message: e.to_string(),
                })?;
            let last = dialog.utterances.last().ok_or_else(|| CorpusError::Parse {
                index,
                message: "dialogue has no utterances".into(),
            })?;
            let positive = last.candidates.last().ok_or_else(|| CorpusError::Parse {
                index,
                message: "final turn has no candidates".into(),
            })?;
            Ok(DialogueRecord {
                id: format!("personachat-{key}-{index}"),
                context: alternating_context(&last.history),
                persona: Some(trim_all(dialog.personality)),
                positives: vec![positive.trim().to_owned()],
                adversarial_negatives: Vec::new(),
                source: Source::PersonaChat,
            })
        })
        .collect()
}

fn parse_native(raw: &str) -> Result<Vec<DialogueRecord>, CorpusError> {
    raw.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(index, line)| {
            serde_json::from_str(line).map_err(|e| CorpusError::Parse {
                index,
                message: e.to_string(),
            })
        })
        .collect()
}

fn trim_all(items: Vec<String>) -> Vec<String> {
    items
        .into_iter()
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_list_is_an_error() {
        let f = write_tmp("[]");
        let err = load_corpus(f.path(), CorpusFormat::DailydialogppJson, Split::Train).unwrap_err();
        assert_eq!(err.to_string(), "empty corpus");
    }

    #[test]
    fn malformed_record_reports_index() {
        let f = write_tmp(
            r#"[{"context":["hi"],"positive_responses":["hey"]},{"context":"oops"}]"#,
        );
        let err = load_corpus(f.path(), CorpusFormat::DailydialogppJson, Split::Train).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { index: 1, .. }), "{err}");
    }

    #[test]
    fn personachat_takes_final_turn() {
        let f = write_tmp(
            r#"{"train":[{"personality":["i like dogs."],"utterances":[
                {"candidates":["x","hello"],"history":["hi"]},
                {"candidates":["y","me too"],"history":["hi","hello","i have a dog"]}]}],
               "valid":[]}"#,
        );
        let corpus = load_corpus(f.path(), CorpusFormat::PersonachatJson, Split::Train).unwrap();
        let r = &corpus.records[0];
        assert_eq!(r.context.len(), 3);
        assert_eq!(r.positives, vec!["me too"]);
        assert_eq!(r.persona.as_deref(), Some(&["i like dogs.".to_owned()][..]));
        assert_eq!(r.source, Source::PersonaChat);
    }

    #[test]
    fn dailydialogpp_accepts_json_lines() {
        let f = write_tmp(concat!(
            r#"{"id":"a","context":["hi","hey"],"positive_responses":["ok"],"adversarial_negative_responses":["1","2","3","4","5"]}"#,
            "\n",
            r#"{"id":"b","context":["yo"],"positive_responses":["sup"]}"#,
            "\n"
        ));
        let corpus = load_corpus(f.path(), CorpusFormat::DailydialogppJson, Split::Test).unwrap();
        assert_eq!(corpus.summary().adversarial_bearing, 1);
        assert_eq!(corpus.split, Split::Test);
    }
}
