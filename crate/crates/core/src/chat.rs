//! CHAT (TalkBank) transcript parsing and sentence labeling.
//!
//! Only the subset of CHAT needed for word-level timed picture descriptions
//! is understood: `@` headers, `*` speaker tiers (with tab continuation
//! lines) and 0x15-delimited millisecond bullets. Dependent `%` tiers are
//! skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BULLET: char = '\u{15}';

/// Diagnosis group of a transcript, and the binary label of a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Control,
    Dementia,
}

impl Label {
    /// Control = 0, Dementia = 1.
    pub fn as_target(self) -> f64 {
        match self {
            Label::Control => 0.0,
            Label::Dementia => 1.0,
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dementia" => Some(Label::Dementia),
            "control" => Some(Label::Control),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Control => "control",
            Label::Dementia => "dementia",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SpeakerRole {
    Participant,
    Investigator,
}

impl SpeakerRole {
    /// `PAR*` codes are participants and `INV*` codes investigators; anything
    /// else (relatives, unidentified speakers) has no role.
    pub fn from_code(code: &str) -> Option<SpeakerRole> {
        if code.starts_with("PAR") {
            Some(SpeakerRole::Participant)
        } else if code.starts_with("INV") {
            Some(SpeakerRole::Investigator)
        } else {
            None
        }
    }
}

impl fmt::Display for SpeakerRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpeakerRole::Participant => "participant",
            SpeakerRole::Investigator => "investigator",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub start_ms: Option<u64>,
    pub end_ms: Option<u64>,
    /// True when the interval is an equal share of a bullet spanning several words.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub interpolated: bool,
}

impl Token {
    pub fn untimed(surface: impl Into<String>) -> Self {
        Token {
            surface: surface.into(),
            start_ms: None,
            end_ms: None,
            interpolated: false,
        }
    }

    pub fn timed(surface: impl Into<String>, start_ms: u64, end_ms: u64) -> Self {
        Token {
            surface: surface.into(),
            start_ms: Some(start_ms),
            end_ms: Some(end_ms),
            interpolated: false,
        }
    }

    pub fn span(&self) -> Option<(u64, u64)> {
        Some((self.start_ms?, self.end_ms?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: String,
    pub tokens: Vec<Token>,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub id: String,
    /// Group from the participant `@ID` header; the corpus index may supply it instead.
    pub group: Option<Label>,
    pub utterances: Vec<Utterance>,
    pub header_meta: BTreeMap<String, Vec<String>>,
    /// Utterances whose bullets went backwards in time and had their timing cleared.
    #[serde(default)]
    pub timing_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Original,
    Augmented {
        parent_index: usize,
        position: usize,
        original_word: String,
        synonym: String,
    },
}

impl Provenance {
    pub fn is_augmented(&self) -> bool {
        matches!(self, Provenance::Augmented { .. })
    }
}

/// One labeled data point. Augmented records share `index` with their parent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub transcript_id: String,
    pub index: usize,
    pub tokens: Vec<Token>,
    pub label: Label,
    pub speaker_role: SpeakerRole,
    pub provenance: Provenance,
}

impl SentenceRecord {
    pub fn id(&self) -> String {
        match &self.provenance {
            Provenance::Original => format!("{}/{}", self.transcript_id, self.index),
            Provenance::Augmented {
                position, synonym, ..
            } => format!(
                "{}/{}+{}:{}",
                self.transcript_id, self.index, position, synonym
            ),
        }
    }

    pub fn parent_id(&self) -> String {
        format!("{}/{}", self.transcript_id, self.index)
    }

    pub fn text(&self) -> String {
        let words: Vec<&str> = self.tokens.iter().map(|t| t.surface.as_str()).collect();
        words.join(" ")
    }

    pub fn has_timestamps(&self) -> bool {
        self.tokens.iter().all(|t| t.span().is_some())
    }
}

fn parse_err(id: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: id.to_string(),
        line,
        message: message.into(),
    }
}

/// Parses one CHAT file. `id` names the transcript and is used in error messages.
pub fn parse_transcript(bytes: &[u8], id: &str) -> Result<Transcript> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = 1 + bytes[..e.valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count();
        parse_err(id, line, "invalid UTF-8")
    })?;

    // Fold tab-initiated continuation lines into their logical line.
    let mut logical: Vec<(usize, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.starts_with('\t') && !logical.is_empty() {
            let last = logical.last_mut().unwrap();
            last.1.push(' ');
            last.1.push_str(line.trim_start());
        } else if !line.trim().is_empty() {
            logical.push((i + 1, line.to_string()));
        }
    }

    let mut header_meta: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut utterances = Vec::new();
    let mut begun = false;
    let mut timing_dropped = 0;

    for (lineno, line) in &logical {
        let lineno = *lineno;
        if let Some(rest) = line.strip_prefix('@') {
            let (key, value) = match rest.split_once(':') {
                Some((k, v)) => (k.trim(), v.trim()),
                None => (rest.trim(), ""),
            };
            match key {
                "Begin" => begun = true,
                "End" | "UTF8" => {}
                _ => {
                    if !begun {
                        return Err(parse_err(
                            id,
                            lineno,
                            format!("header @{key} before @Begin"),
                        ));
                    }
                    header_meta
                        .entry(key.to_string())
                        .or_default()
                        .push(value.to_string());
                }
            }
        } else if let Some(rest) = line.strip_prefix('*') {
            if !begun {
                return Err(parse_err(id, lineno, "speaker tier before @Begin"));
            }
            let (code, body) = rest
                .split_once(':')
                .ok_or_else(|| parse_err(id, lineno, "tier line with no speaker code"))?;
            if code.is_empty()
                || !code
                    .chars()
                    .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit())
            {
                return Err(parse_err(
                    id,
                    lineno,
                    format!("tier line with no speaker code: {code:?}"),
                ));
            }
            let body = body.trim();
            let mut tokens = tokenize_tier(body).map_err(|m| parse_err(id, lineno, m))?;
            let ordered = tokens
                .iter()
                .filter_map(|t| t.start_ms)
                .collect::<Vec<_>>()
                .windows(2)
                .all(|w| w[0] <= w[1]);
            if !ordered {
                log::warn!("{id}: line {lineno}: bullets out of order, timing cleared");
                timing_dropped += 1;
                for t in &mut tokens {
                    t.start_ms = None;
                    t.end_ms = None;
                    t.interpolated = false;
                }
            }
            utterances.push(Utterance {
                speaker: code.to_string(),
                tokens,
                raw: body.to_string(),
            });
        } else if line.starts_with('%') {
            // dependent tiers are not used by any model
        } else {
            return Err(parse_err(
                id,
                lineno,
                "line is not a header, speaker tier, or dependent tier",
            ));
        }
    }

    if !begun {
        return Err(parse_err(id, 1, "malformed header: missing @Begin"));
    }

    let group = header_meta.get("ID").and_then(|ids| {
        ids.iter().find_map(|v| {
            let fields: Vec<&str> = v.split('|').collect();
            if fields.len() > 5 && fields[2].trim().starts_with("PAR") {
                let g = fields[5].trim();
                if g.is_empty() {
                    None
                } else if g.eq_ignore_ascii_case("control") {
                    Some(Label::Control)
                } else {
                    Some(Label::Dementia)
                }
            } else {
                None
            }
        })
    });

    Ok(Transcript {
        id: id.to_string(),
        group,
        utterances,
        header_meta,
        timing_dropped,
    })
}

/// Splits a main-tier body into timed tokens. Bullets bind to the words since
/// the previous bullet; a bullet covering k words is divided into k equal parts.
fn tokenize_tier(body: &str) -> std::result::Result<Vec<Token>, String> {
    let mut tokens = Vec::new();
    let mut rest = body;
    loop {
        let Some(open) = rest.find(BULLET) else {
            tokens.extend(words(rest).into_iter().map(Token::untimed));
            break;
        };
        let pending = words(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find(BULLET)
            .ok_or_else(|| "unterminated timestamp bullet".to_string())?;
        let (start, end) = parse_bullet(&after[..close])?;
        let k = pending.len() as u64;
        for (j, w) in pending.into_iter().enumerate() {
            let j = j as u64;
            tokens.push(Token {
                surface: w,
                start_ms: Some(start + (end - start) * j / k),
                end_ms: Some(start + (end - start) * (j + 1) / k),
                interpolated: k > 1,
            });
        }
        rest = &after[close + 1..];
    }
    Ok(tokens)
}

fn parse_bullet(body: &str) -> std::result::Result<(u64, u64), String> {
    let bad = || format!("timestamp bullet with non-numeric bounds: {body:?}");
    let (s, e) = body.trim().split_once('_').ok_or_else(bad)?;
    let start: u64 = s.parse().map_err(|_| bad())?;
    let end: u64 = e.parse().map_err(|_| bad())?;
    if start > end {
        return Err(format!("timestamp bullet ends before it starts: {body:?}"));
    }
    Ok((start, end))
}

fn strip_brackets(segment: &str) -> String {
    let mut out = String::with_capacity(segment.len());
    let mut depth = 0usize;
    for c in segment.chars() {
        match c {
            '[' => depth += 1,
            ']' if depth > 0 => {
                depth -= 1;
                out.push(' ');
            }
            _ if depth == 0 => out.push(c),
            _ => {}
        }
    }
    out
}

fn words(segment: &str) -> Vec<String> {
    strip_brackets(segment)
        .split_whitespace()
        .filter_map(clean_word)
        .collect()
}

fn is_pause(w: &str) -> bool {
    w.len() >= 3
        && w.starts_with('(')
        && w.ends_with(')')
        && w[1..w.len() - 1]
            .chars()
            .all(|c| c == '.' || c == ':' || c.is_ascii_digit())
}

fn clean_word(raw: &str) -> Option<String> {
    let w: String = raw.chars().filter(|&c| c != '<' && c != '>').collect();
    if w.is_empty() || is_pause(&w) {
        return None;
    }
    if w.starts_with("&=") || w.starts_with("&+") || w.starts_with('+') || w.starts_with('0') {
        return None;
    }
    let w = w
        .strip_prefix("&-")
        .or_else(|| w.strip_prefix('&'))
        .unwrap_or(&w);
    let w = match w.find('@') {
        Some(i) => &w[..i],
        None => w,
    };
    let cleaned: String = w
        .chars()
        .map(|c| match c {
            '’' => '\'',
            '+' => '_',
            c => c,
        })
        .filter(|&c| c.is_alphanumeric() || c == '\'' || c == '_' || c == '-')
        .collect::<String>()
        .trim_matches(|c| c == '\'' || c == '-' || c == '_')
        .to_lowercase();
    match cleaned.as_str() {
        "" | "xxx" | "yyy" | "www" => None,
        _ => Some(cleaned),
    }
}

impl Transcript {
    /// Renders back to CHAT with one bullet per timed token.
    pub fn to_chat(&self) -> String {
        let mut out = String::from("@UTF8\n@Begin\n");
        for (k, vs) in &self.header_meta {
            for v in vs {
                out.push_str(&format!("@{k}:\t{v}\n"));
            }
        }
        for u in &self.utterances {
            out.push_str(&format!("*{}:\t", u.speaker));
            for t in &u.tokens {
                out.push_str(&t.surface);
                out.push(' ');
                if let Some((s, e)) = t.span() {
                    out.push_str(&format!("{BULLET}{s}_{e}{BULLET} "));
                }
            }
            out.push_str(".\n");
        }
        out.push_str("@End\n");
        out
    }
}

/// One record per utterance that has a known role and at least one token.
pub fn label_sentences(t: &Transcript) -> Result<Vec<SentenceRecord>> {
    let group = t
        .group
        .ok_or_else(|| Error::Data(format!("transcript {} has no diagnosis group", t.id)))?;
    Ok(t.utterances
        .iter()
        .enumerate()
        .filter(|(_, u)| !u.tokens.is_empty())
        .filter_map(|(index, u)| {
            let role = SpeakerRole::from_code(&u.speaker)?;
            let label = match role {
                SpeakerRole::Investigator => Label::Control,
                SpeakerRole::Participant => group,
            };
            Some(SentenceRecord {
                transcript_id: t.id.clone(),
                index,
                tokens: u.tokens.clone(),
                label,
                speaker_role: role,
                provenance: Provenance::Original,
            })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub transcript_id: String,
    pub group: Label,
    pub transcript_path: PathBuf,
    pub audio_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TranscriptInfo {
    pub id: String,
    pub group: Label,
    pub audio_dir: Option<PathBuf>,
    pub utterances: usize,
    pub timing_dropped: usize,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub records: Vec<SentenceRecord>,
    pub transcripts: Vec<TranscriptInfo>,
}

pub const INDEX_FILE: &str = "index.tsv";

/// Reads `index.tsv`: `transcript_id<TAB>group<TAB>transcript path<TAB>audio dir`,
/// paths relative to the index. An audio dir of `-` means no audio.
pub fn read_index(root: &Path) -> Result<Vec<IndexEntry>> {
    let path = root.join(INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let err = |m: &str| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: m.to_string(),
        };
        if fields.len() != 4 {
            return Err(err("expected 4 tab-separated fields"));
        }
        let group =
            Label::parse(fields[1]).ok_or_else(|| err("group must be dementia or control"))?;
        let audio = fields[3].trim();
        out.push(IndexEntry {
            transcript_id: fields[0].trim().to_string(),
            group,
            transcript_path: PathBuf::from(fields[2].trim()),
            audio_dir: (!audio.is_empty() && audio != "-").then(|| PathBuf::from(audio)),
        });
    }
    Ok(out)
}

fn collect_cha(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        if p.is_dir() {
            collect_cha(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "cha") {
            out.push(p);
        }
    }
    Ok(())
}

/// Loads every indexed transcript under `root`, ordered by transcript id then
/// utterance index.
pub fn load_corpus(root: &Path) -> Result<Corpus> {
    let mut index = read_index(root)?;
    index.sort_by(|a, b| a.transcript_id.cmp(&b.transcript_id));

    let mut problems = Vec::new();
    let mut seen = BTreeSet::new();
    for e in &index {
        if !seen.insert(e.transcript_id.clone()) {
            problems.push(format!("duplicate index entry {}", e.transcript_id));
        }
        let tp = root.join(&e.transcript_path);
        if !tp.is_file() {
            problems.push(format!("missing transcript {}", tp.display()));
        }
        if let Some(a) = &e.audio_dir {
            let ap = root.join(a);
            if !ap.is_dir() {
                problems.push(format!("dangling audio reference {}", ap.display()));
            }
        }
    }
    let indexed: BTreeSet<PathBuf> = index
        .iter()
        .filter_map(|e| root.join(&e.transcript_path).canonicalize().ok())
        .collect();
    let mut on_disk = Vec::new();
    collect_cha(root, &mut on_disk)?;
    on_disk.sort();
    for p in on_disk {
        if p.canonicalize()
            .map(|c| !indexed.contains(&c))
            .unwrap_or(true)
        {
            problems.push(format!("missing index entry for {}", p.display()));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Corpus(problems.join("; ")));
    }

    let parsed: Vec<Result<Transcript>> = index
        .par_iter()
        .map(|e| {
            let path = root.join(&e.transcript_path);
            let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
            parse_transcript(&bytes, &e.transcript_id)
        })
        .collect();

    let mut records = Vec::new();
    let mut transcripts = Vec::new();
    for (entry, t) in index.iter().zip(parsed) {
        let mut t = t?;
        if let Some(g) = t.group {
            if g != entry.group {
                problems.push(format!(
                    "{}: index says {} but @ID header says {}",
                    entry.transcript_id, entry.group, g
                ));
                continue;
            }
        }
        t.group = Some(entry.group);
        records.extend(label_sentences(&t)?);
        transcripts.push(TranscriptInfo {
            id: t.id.clone(),
            group: entry.group,
            audio_dir: entry.audio_dir.as_ref().map(|a| root.join(a)),
            utterances: t.utterances.len(),
            timing_dropped: t.timing_dropped,
        });
    }
    if !problems.is_empty() {
        return Err(Error::Corpus(problems.join("; ")));
    }

    let corpus = Corpus {
        records,
        transcripts,
    };
    let (d, c) = corpus.label_counts();
    log::info!(
        "loaded {} transcripts, {} sentences ({} dementia, {} control)",
        corpus.transcripts.len(),
        corpus.records.len(),
        d,
        c
    );
    Ok(corpus)
}

impl Corpus {
    /// (dementia, control) record counts.
    pub fn label_counts(&self) -> (usize, usize) {
        label_counts(&self.records)
    }

    pub fn audio_dir(&self, transcript_id: &str) -> Option<&Path> {
        self.transcripts
            .binary_search_by(|t| t.id.as_str().cmp(transcript_id))
            .ok()
            .and_then(|i| self.transcripts[i].audio_dir.as_deref())
    }

    pub fn summary(&self) -> BTreeMap<(Label, SpeakerRole), usize> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            *m.entry((r.label, r.speaker_role)).or_insert(0) += 1;
        }
        m
    }

    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["label", "speaker_role", "count"])?;
        for ((label, role), n) in self.summary() {
            wtr.write_record([label.to_string(), role.to_string(), n.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("summary", e))?;
        Ok(())
    }
}

pub fn label_counts(records: &[SentenceRecord]) -> (usize, usize) {
    let d = records
        .iter()
        .filter(|r| r.label == Label::Dementia)
        .count();
    (d, records.len() - d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tier(body: &str) -> Vec<Token> {
        let t = parse_transcript(format!("@Begin\n*PAR:\t{body}\n@End\n").as_bytes(), "t").unwrap();
        t.utterances[0].tokens.clone()
    }

    #[test]
    fn empty_transcript() {
        let t = parse_transcript(b"@Begin\n@End", "t").unwrap();
        assert!(t.utterances.is_empty());
    }

    #[test]
    fn multi_word_bullet_is_divided() {
        let toks = tier("the boy \u{15}0_400\u{15} is \u{15}400_600\u{15} .");
        let spans: Vec<_> = toks
            .iter()
            .map(|t| (t.surface.as_str(), t.span().unwrap()))
            .collect();
        assert_eq!(
            spans,
            vec![("the", (0, 200)), ("boy", (200, 400)), ("is", (400, 600))]
        );
        assert!(toks[0].interpolated && !toks[2].interpolated);
    }

    #[test]
    fn untimed_tier() {
        let t = parse_transcript(b"@Begin\n*INV:\tokay .\n@End\n", "t").unwrap();
        assert_eq!(t.utterances[0].speaker, "INV");
        assert_eq!(t.utterances[0].tokens, vec![Token::untimed("okay")]);
    }

    #[test]
    fn strips_codes_and_events() {
        let toks = tier("<the boy> [/] the boy &=laughs (.) is &-uh takin(g) cookie@o [: cookies] mother's +...");
        let s: Vec<_> = toks.iter().map(|t| t.surface.as_str()).collect();
        assert_eq!(
            s,
            vec!["the", "boy", "the", "boy", "is", "uh", "taking", "cookie", "mother's"]
        );
    }

    #[test]
    fn lowercases() {
        assert_eq!(tier("The Boy .")[0].surface, "the");
    }

    #[test]
    fn errors_name_lines() {
        let e = parse_transcript(b"*PAR:\thi .\n", "x")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 1"), "{e}");
        let e = parse_transcript(b"@Begin\n*:\thi .\n", "x")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 2") && e.contains("speaker code"), "{e}");
        let e = parse_transcript(b"@Begin\n@PID:\tx\n*PAR:\thi \x15a_b\x15 .\n", "x")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 3") && e.contains("non-numeric"), "{e}");
        let e = parse_transcript(b"@UTF8\n@Languages:\teng\n", "x")
            .unwrap_err()
            .to_string();
        assert!(e.contains("@Begin"), "{e}");
    }

    #[test]
    fn continuation_lines_join() {
        let t = parse_transcript(b"@Begin\n*PAR:\tthe boy\n\tis here .\n@End\n", "t").unwrap();
        assert_eq!(t.utterances[0].tokens.len(), 4);
    }

    #[test]
    fn labeling_rule() {
        let mut t = parse_transcript(
            b"@Begin\n*INV:\twhat do you see ?\n*PAR:\ta boy .\n*REL:\thm .\n@End\n",
            "t",
        )
        .unwrap();
        assert!(label_sentences(&t).is_err());
        t.group = Some(Label::Dementia);
        let recs = label_sentences(&t).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(
            (recs[0].speaker_role, recs[0].label),
            (SpeakerRole::Investigator, Label::Control)
        );
        assert_eq!(
            (recs[1].speaker_role, recs[1].label),
            (SpeakerRole::Participant, Label::Dementia)
        );
        t.group = Some(Label::Control);
        assert_eq!(label_sentences(&t).unwrap()[1].label, Label::Control);
    }

    #[test]
    fn group_from_id_header() {
        let t = parse_transcript(
            b"@Begin\n@ID:\teng|Pitt|PAR|57;|female|ProbableAD||Participant|18||\n@End\n",
            "t",
        )
        .unwrap();
        assert_eq!(t.group, Some(Label::Dementia));
    }

    #[test]
    fn chat_round_trip() {
        let src = "@Begin\n*PAR:\tthe boy \u{15}0_400\u{15} is \u{15}400_600\u{15} up .\n*INV:\tokay .\n@End\n";
        let a = parse_transcript(src.as_bytes(), "t").unwrap();
        let b = parse_transcript(a.to_chat().as_bytes(), "t").unwrap();
        assert_eq!(a.utterances.len(), b.utterances.len());
        for (x, y) in a.utterances.iter().zip(&b.utterances) {
            let xs: Vec<_> = x.tokens.iter().map(|t| (&t.surface, t.span())).collect();
            let ys: Vec<_> = y.tokens.iter().map(|t| (&t.surface, t.span())).collect();
            assert_eq!(xs, ys);
        }
    }
}
