//! Hand-written CHAT fixtures against hand-computed expectations.

use std::fs;
use std::path::{Path, PathBuf};

use dementia_mm::chat::{label_sentences, parse_transcript, Label, SpeakerRole};
use dementia_mm::Error;
use serde_json::{json, Value};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/chat")
}

fn fixtures() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(fixture_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "cha"))
        .collect();
    v.sort();
    v
}

fn observed(path: &Path) -> Value {
    let id = path.file_stem().unwrap().to_string_lossy().to_string();
    let t = match parse_transcript(&fs::read(path).unwrap(), &id) {
        Ok(t) => t,
        Err(Error::Parse { line, message, .. }) => {
            return json!({ "error": { "line": line, "message": message } })
        }
        Err(e) => panic!("{id}: unexpected error kind {e}"),
    };
    let records: Vec<Value> = label_sentences(&t)
        .unwrap()
        .iter()
        .map(|r| {
            json!({
                "index": r.index,
                "role": format!("{:?}", r.speaker_role),
                "label": format!("{:?}", r.label),
                "tokens": r.tokens.iter().map(|k| json!([k.surface, k.start_ms, k.end_ms])).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "group": t.group.map(|g| format!("{g:?}")),
        "utterances": t.utterances.len(),
        "timing_dropped": t.timing_dropped,
        "records": records,
    })
}

#[test]
fn at_least_ten_fixtures() {
    assert!(fixtures().len() >= 10);
}

#[test]
fn fixtures_match_golden() {
    for path in fixtures() {
        let golden: Value =
            serde_json::from_str(&fs::read_to_string(path.with_extension("json")).unwrap())
                .unwrap();
        let got = observed(&path);
        let name = path.file_name().unwrap().to_string_lossy();
        match golden.get("error") {
            Some(want) => {
                let err = got.get("error").unwrap_or_else(|| panic!("{name}: parsed"));
                assert_eq!(err["line"], want["line"], "{name}: {err}");
                let msg = err["message"].as_str().unwrap();
                assert!(
                    msg.contains(want["contains"].as_str().unwrap()),
                    "{name}: {msg}"
                );
            }
            None => assert_eq!(got, golden, "{name}"),
        }
    }
}

#[test]
fn malformed_fixtures_exit_with_data_code() {
    for path in fixtures() {
        let id = path.file_stem().unwrap().to_string_lossy().to_string();
        if let Err(e) = parse_transcript(&fs::read(&path).unwrap(), &id) {
            assert_eq!(e.exit_code(), 2, "{id}");
        }
    }
}

#[test]
fn investigators_are_never_dementia() {
    for path in fixtures() {
        let id = path.file_stem().unwrap().to_string_lossy().to_string();
        let Ok(t) = parse_transcript(&fs::read(&path).unwrap(), &id) else {
            continue;
        };
        for r in label_sentences(&t).unwrap() {
            if r.speaker_role == SpeakerRole::Investigator {
                assert_eq!(r.label, Label::Control, "{}", r.id());
            } else {
                assert_eq!(Some(r.label), t.group, "{}", r.id());
            }
        }
    }
}

#[test]
fn round_trip_keeps_utterances() {
    for path in fixtures() {
        let id = path.file_stem().unwrap().to_string_lossy().to_string();
        let Ok(t) = parse_transcript(&fs::read(&path).unwrap(), &id) else {
            continue;
        };
        let back = parse_transcript(t.to_chat().as_bytes(), &id).unwrap();
        assert_eq!(back.utterances.len(), t.utterances.len(), "{id}");
        let words = |t: &dementia_mm::chat::Transcript| {
            t.utterances
                .iter()
                .map(|u| {
                    u.tokens
                        .iter()
                        .map(|k| k.surface.clone())
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(words(&back), words(&t), "{id}");
    }
}
