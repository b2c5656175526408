//! Synonym-replacement augmentation.
//!
//! Every word position with synonyms yields up to `replacements_per_word`
//! copies of the sentence, each with exactly that one word swapped.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chat::{Provenance, SentenceRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    entries: BTreeMap<String, Vec<String>>,
    /// When set, each word's list is permuted with a seed derived from the word.
    pub shuffled: bool,
    pub dropped_multiword: usize,
}

impl SynonymLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds synonyms for `word`, enforcing lowercase, no self-synonyms, no
    /// duplicates and single-token synonyms.
    pub fn add(&mut self, word: &str, synonyms: impl IntoIterator<Item = impl AsRef<str>>) {
        let word = word.trim().to_lowercase();
        let mut dropped = 0;
        let list = self.entries.entry(word.clone()).or_default();
        for s in synonyms {
            let s = s.as_ref().trim().to_lowercase();
            if s.is_empty() {
                continue;
            }
            if s.contains(char::is_whitespace) {
                dropped += 1;
                continue;
            }
            if s != word && !list.contains(&s) {
                list.push(s);
            }
        }
        self.dropped_multiword += dropped;
    }

    pub fn synonyms(&self, word: &str) -> &[String] {
        self.entries.get(word).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn entries(&self) -> &BTreeMap<String, Vec<String>> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        if self.shuffled {
            out.push_str("#shuffled\n");
        }
        for (w, syns) in &self.entries {
            out.push_str(&format!("{w}\t{}\n", syns.join(",")));
        }
        out
    }
}

/// Parses `word<TAB>syn1,syn2,...` lines. A `#shuffled` line marks the lexicon
/// as unordered; other `#` lines are comments.
pub fn parse_lexicon(text: &str, name: &str) -> Result<SynonymLexicon> {
    let mut lex = SynonymLexicon::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim() == "#shuffled" {
            lex.shuffled = true;
            continue;
        }
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (word, syns) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: name.to_string(),
            line: i + 1,
            message: "expected word<TAB>synonyms".into(),
        })?;
        if word.trim().is_empty() || word.trim().contains(char::is_whitespace) {
            return Err(Error::Parse {
                path: name.to_string(),
                line: i + 1,
                message: format!("bad headword {word:?}"),
            });
        }
        lex.add(word, syns.split(','));
    }
    if lex.dropped_multiword > 0 {
        log::info!(
            "{name}: dropped {} multi-word synonyms",
            lex.dropped_multiword
        );
    }
    Ok(lex)
}

pub fn load_lexicon(path: &Path) -> Result<SynonymLexicon> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(&text, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentStage {
    BeforeSplit,
    AfterSplit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    pub replacements_per_word: usize,
    pub seed: u64,
    pub stage: AugmentStage,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            replacements_per_word: 1,
            seed: 0,
            stage: AugmentStage::BeforeSplit,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replacements_per_word == 0 {
            return Err(Error::config(
                "augmentation.replacements_per_word",
                "must be at least 1",
            ));
        }
        Ok(())
    }
}

fn word_seed(seed: u64, word: &str) -> u64 {
    // FNV-1a, stable across platforms and runs.
    let mut h: u64 = 0xcbf29ce484222325 ^ seed;
    for b in word.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn candidates<'a>(lex: &'a SynonymLexicon, word: &str, cfg: &AugmentationConfig) -> Vec<&'a str> {
    let mut syns: Vec<&str> = lex.synonyms(word).iter().map(String::as_str).collect();
    if lex.shuffled {
        syns.shuffle(&mut ChaCha8Rng::seed_from_u64(word_seed(cfg.seed, word)));
    }
    syns.truncate(cfg.replacements_per_word);
    syns
}

/// Single-replacement variants of an original record, ordered by position then
/// synonym rank. Records that are already augmented produce nothing.
pub fn augment_sentence(
    rec: &SentenceRecord,
    lex: &SynonymLexicon,
    cfg: &AugmentationConfig,
) -> Vec<SentenceRecord> {
    if rec.provenance.is_augmented() {
        return Vec::new();
    }
    let original: Vec<&str> = rec.tokens.iter().map(|t| t.surface.as_str()).collect();
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut out = Vec::new();
    for (p, tok) in rec.tokens.iter().enumerate() {
        for syn in candidates(lex, &tok.surface, cfg) {
            let mut tokens = rec.tokens.clone();
            tokens[p].surface = syn.to_string();
            let surfaces: Vec<String> = tokens.iter().map(|t| t.surface.clone()).collect();
            if surfaces == original || !seen.insert(surfaces) {
                continue;
            }
            out.push(SentenceRecord {
                transcript_id: rec.transcript_id.clone(),
                index: rec.index,
                tokens,
                label: rec.label,
                speaker_role: rec.speaker_role,
                provenance: Provenance::Augmented {
                    parent_index: rec.index,
                    position: p,
                    original_word: tok.surface.clone(),
                    synonym: syn.to_string(),
                },
            });
        }
    }
    out
}

/// Each original followed by its augmentations, in input order.
pub fn augment_dataset(
    records: &[SentenceRecord],
    lex: &SynonymLexicon,
    cfg: &AugmentationConfig,
) -> Vec<SentenceRecord> {
    let groups: Vec<Vec<SentenceRecord>> = records
        .par_iter()
        .map(|r| {
            let mut g = vec![r.clone()];
            g.extend(augment_sentence(r, lex, cfg));
            g
        })
        .collect();
    groups.into_iter().flatten().collect()
}

/// `parent_id,position,original_word,synonym` for every augmented record.
pub fn write_augmentation_report<W: Write>(records: &[SentenceRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["parent_id", "position", "original_word", "synonym"])?;
    for r in records {
        if let Provenance::Augmented {
            position,
            original_word,
            synonym,
            ..
        } = &r.provenance
        {
            wtr.write_record([
                r.parent_id(),
                position.to_string(),
                original_word.clone(),
                synonym.clone(),
            ])?;
        }
    }
    wtr.flush()
        .map_err(|e| Error::io("augmentation report", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chat::{Label, SpeakerRole, Token};

    fn rec(words: &[&str]) -> SentenceRecord {
        SentenceRecord {
            transcript_id: "t".into(),
            index: 3,
            tokens: words
                .iter()
                .enumerate()
                .map(|(i, w)| Token::timed(*w, i as u64 * 100, i as u64 * 100 + 90))
                .collect(),
            label: Label::Dementia,
            speaker_role: SpeakerRole::Participant,
            provenance: Provenance::Original,
        }
    }

    #[test]
    fn lexicon_parsing_rules() {
        let l = parse_lexicon(
            "girl\tmiss,lass\ntape\ttape\nrecorder\tvideotape recorder\n",
            "x",
        )
        .unwrap();
        assert_eq!(
            l.synonyms("girl"),
            &["miss".to_string(), "lass".to_string()]
        );
        assert!(l.synonyms("tape").is_empty());
        assert!(l.synonyms("recorder").is_empty());
        assert_eq!(l.dropped_multiword, 1);
        let e = parse_lexicon("ok\ta\nbroken line\n", "x")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn lexicon_dedupes_and_lowercases() {
        let l = parse_lexicon("Boy\tLad,lad,boy,male_child\n", "x").unwrap();
        assert_eq!(
            l.synonyms("boy"),
            &["lad".to_string(), "male_child".to_string()]
        );
    }

    #[test]
    fn worked_example_five_words() {
        let words = ["the", "girl", "is", "washing", "dishes"];
        let mut lex = SynonymLexicon::new();
        for w in words {
            lex.add(w, [format!("{w}x"), format!("{w}y")]);
        }
        let cfg = AugmentationConfig::default();
        let out = augment_sentence(&rec(&words), &lex, &cfg);
        assert_eq!(out.len(), 5);
        for (p, child) in out.iter().enumerate() {
            let diff = child
                .tokens
                .iter()
                .zip(&words)
                .filter(|(a, b)| a.surface != **b)
                .count();
            assert_eq!(diff, 1);
            assert_eq!(child.tokens[p].surface, format!("{}x", words[p]));
            assert_eq!(child.tokens[p].span(), rec(&words).tokens[p].span());
        }
    }

    #[test]
    fn enumerates_position_then_rank() {
        let lex = parse_lexicon("w1\ta,b\nw2\tc\n", "x").unwrap();
        let cfg = AugmentationConfig {
            replacements_per_word: 2,
            ..Default::default()
        };
        let out = augment_sentence(&rec(&["w1", "w2"]), &lex, &cfg);
        let got: Vec<(usize, String)> = out
            .iter()
            .map(|r| match &r.provenance {
                Provenance::Augmented {
                    position, synonym, ..
                } => (*position, synonym.clone()),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(got, vec![(0, "a".into()), (0, "b".into()), (1, "c".into())]);
    }

    #[test]
    fn no_synonyms_no_output() {
        assert!(augment_sentence(
            &rec(&["a", "b"]),
            &SynonymLexicon::new(),
            &AugmentationConfig::default()
        )
        .is_empty());
    }

    #[test]
    fn dataset_keeps_originals_first() {
        let lex = parse_lexicon("a\tx,y\n", "x").unwrap();
        let recs = vec![rec(&["a", "b"]), rec(&["a", "b"])];
        let out = augment_dataset(&recs, &lex, &AugmentationConfig::default());
        assert_eq!(out.len(), 4);
        assert_eq!(out[0], recs[0]);
        assert_eq!(out[1].tokens, out[3].tokens);
        let mut buf = Vec::new();
        write_augmentation_report(&out, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "parent_id,position,original_word,synonym\nt/3,0,a,x\nt/3,0,a,x\n"
        );
    }

    #[test]
    fn shuffled_lexicon_is_seeded() {
        let mut lex = parse_lexicon("a\tb,c,d,e,f,g\n", "x").unwrap();
        lex.shuffled = true;
        let cfg = AugmentationConfig {
            replacements_per_word: 6,
            ..Default::default()
        };
        let a = augment_sentence(&rec(&["a"]), &lex, &cfg);
        let b = augment_sentence(&rec(&["a"]), &lex, &cfg);
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
    }
}
