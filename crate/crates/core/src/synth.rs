//! Deterministic synthetic corpus for exercising the pipeline without the
//! restricted recordings. One knob, `delta`, moves the two diagnosis groups
//! apart: at 0 their generative distributions are identical.
//!
//! Dementia participants draw more class-specific words, shorter sentences
//! and immediate repetitions; their embeddings and audio frames are shifted
//! along fixed class directions. Investigators always speak like controls.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::augment::SynonymLexicon;
use crate::chat::{label_sentences, Label, SentenceRecord, Token, Transcript, Utterance};
use crate::dataset::AudioStore;
use crate::embeddings::{AudioFeatureSequence, WordEmbeddingTable};
use crate::error::{Error, Result};
use crate::seed::rng_for;

pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const LEXICON_FILE: &str = "lexicon.tsv";
pub const SUMMARY_FILE: &str = "synth_summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub transcripts_per_group: usize,
    pub utterances_per_transcript: usize,
    /// Probability that an utterance is an investigator prompt.
    pub investigator_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
    /// Dementia sentences are drawn from `min_len..=short_max_len` with probability `delta * short_rate`.
    pub short_max_len: usize,
    pub short_rate: f64,
    /// Per-word probability (times `delta`) of repeating the previous word.
    pub repeat_rate: f64,
    pub shared_vocab: usize,
    pub class_vocab: usize,
    /// Per-word probability (times `delta`) of drawing from the speaker's class vocabulary.
    pub class_word_rate: f64,
    pub delta: f64,
    pub embedding_dim: usize,
    pub embedding_shift: f64,
    pub embedding_noise: f64,
    pub audio_dim: usize,
    pub audio_shift: f64,
    pub frames_per_word: usize,
    /// Fraction of vocabulary words that get lexicon synonyms.
    pub synonym_coverage: f64,
    pub synonyms_per_word: usize,
    /// Fraction of utterances written without time bullets.
    pub untimed_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            transcripts_per_group: 20,
            utterances_per_transcript: 50,
            investigator_rate: 0.1,
            min_len: 1,
            max_len: 10,
            short_max_len: 3,
            short_rate: 0.5,
            repeat_rate: 0.3,
            shared_vocab: 200,
            class_vocab: 60,
            class_word_rate: 1.0,
            delta: 1.0,
            embedding_dim: 16,
            embedding_shift: 1.0,
            embedding_noise: 0.5,
            audio_dim: 8,
            audio_shift: 0.5,
            frames_per_word: 2,
            synonym_coverage: 0.5,
            synonyms_per_word: 1,
            untimed_rate: 0.02,
            seed: 0,
        }
    }
}

fn unit(field: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(
            format!("synth.{field}"),
            format!("must be in [0, 1], got {v}"),
        ))
    }
}

fn positive(field: &str, v: usize) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        Err(Error::config(
            format!("synth.{field}"),
            "must be at least 1",
        ))
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        positive("transcripts_per_group", self.transcripts_per_group)?;
        positive("utterances_per_transcript", self.utterances_per_transcript)?;
        positive("min_len", self.min_len)?;
        positive("shared_vocab", self.shared_vocab)?;
        positive("class_vocab", self.class_vocab)?;
        positive("embedding_dim", self.embedding_dim)?;
        positive("audio_dim", self.audio_dim)?;
        positive("frames_per_word", self.frames_per_word)?;
        if self.max_len < self.min_len {
            return Err(Error::config("synth.max_len", "must be at least min_len"));
        }
        if !(self.min_len..=self.max_len).contains(&self.short_max_len) {
            return Err(Error::config(
                "synth.short_max_len",
                "must lie between min_len and max_len",
            ));
        }
        if self.shared_vocab.max(self.class_vocab) > 1000 {
            return Err(Error::config(
                "synth.shared_vocab",
                "vocabularies are capped at 1000 words",
            ));
        }
        unit("investigator_rate", self.investigator_rate)?;
        unit("short_rate", self.short_rate)?;
        unit("repeat_rate", self.repeat_rate)?;
        unit("class_word_rate", self.class_word_rate)?;
        unit("delta", self.delta)?;
        unit("synonym_coverage", self.synonym_coverage)?;
        unit("untimed_rate", self.untimed_rate)?;
        for (f, v) in [
            ("embedding_shift", self.embedding_shift),
            ("embedding_noise", self.embedding_noise),
            ("audio_shift", self.audio_shift),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(
                    format!("synth.{f}"),
                    "must be finite and non-negative",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Vocab {
    Shared,
    Control,
    Dementia,
    Synonym,
}

const SYLLABLES: [&str; 10] = ["ba", "ko", "mi", "tu", "ne", "ra", "lo", "pe", "di", "su"];

/// Pronounceable, collision-free surface form.
fn word(v: Vocab, i: usize) -> String {
    let prefix = match v {
        Vocab::Shared => "sa",
        Vocab::Control => "ka",
        Vocab::Dementia => "da",
        Vocab::Synonym => "va",
    };
    format!(
        "{prefix}{}{}{}",
        SYLLABLES[i / 100 % 10],
        SYLLABLES[i / 10 % 10],
        SYLLABLES[i % 10]
    )
}

fn gaussian<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

fn direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let v = gaussian(n, 1.0, rng);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / norm).collect()
}

/// Generated-corpus totals, for checking downstream conservation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub transcripts: usize,
    pub sentences: usize,
    pub control_sentences: usize,
    pub dementia_sentences: usize,
    pub single_token_sentences: usize,
    pub untimed_sentences: usize,
    pub vocabulary: usize,
}

pub struct SynthCorpus {
    pub transcripts: Vec<Transcript>,
    pub audio: BTreeMap<(String, usize), AudioFeatureSequence>,
    pub embeddings: WordEmbeddingTable,
    pub lexicon: SynonymLexicon,
    pub summary: SynthSummary,
}

impl SynthCorpus {
    /// Labeled sentence records of every transcript, in transcript order.
    pub fn records(&self) -> Result<Vec<SentenceRecord>> {
        let mut out = Vec::new();
        for t in &self.transcripts {
            out.extend(label_sentences(t)?);
        }
        Ok(out)
    }

    pub fn audio_store(&self) -> Result<AudioStore> {
        let mut store = AudioStore::new();
        for ((id, index), seq) in &self.audio {
            store.insert(id, *index, seq.clone())?;
        }
        Ok(store)
    }
}

fn sign(label: Label) -> f64 {
    match label {
        Label::Control => -1.0,
        Label::Dementia => 1.0,
    }
}

/// Builds the corpus in memory. Fully determined by the spec.
pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let d = spec.delta;
    let mut rng = rng_for(spec.seed, &[0x5e7]);
    let text_dir = direction(spec.embedding_dim, &mut rng);
    let audio_dir = direction(spec.audio_dim, &mut rng);

    let mut embeddings = WordEmbeddingTable::new(spec.embedding_dim);
    let mut lexicon = SynonymLexicon::new();
    let vocabs = [
        (Vocab::Shared, spec.shared_vocab, 0.0),
        (Vocab::Control, spec.class_vocab, sign(Label::Control)),
        (Vocab::Dementia, spec.class_vocab, sign(Label::Dementia)),
    ];
    let mut n_syn = 0;
    for (v, n, s) in vocabs {
        for i in 0..n {
            let mut vec = gaussian(spec.embedding_dim, spec.embedding_noise, &mut rng);
            for (x, u) in vec.iter_mut().zip(&text_dir) {
                *x += s * d * spec.embedding_shift * u;
            }
            let head = word(v, i);
            embeddings.insert(&head, &vec);
            if rng.random::<f64>() < spec.synonym_coverage {
                let mut syns = Vec::new();
                for _ in 0..spec.synonyms_per_word {
                    let syn = word(Vocab::Synonym, n_syn);
                    n_syn += 1;
                    let jitter = gaussian(spec.embedding_dim, 0.1 * spec.embedding_noise, &mut rng);
                    let near: Vec<f64> = vec.iter().zip(&jitter).map(|(x, j)| x + j).collect();
                    embeddings.insert(&syn, &near);
                    syns.push(syn);
                }
                lexicon.add(&head, syns.iter().map(String::as_str));
            }
        }
    }
    if n_syn > 1000 {
        return Err(Error::config(
            "synth.synonym_coverage",
            "more than 1000 synonyms would be generated",
        ));
    }

    let mut transcripts = Vec::new();
    let mut audio = BTreeMap::new();
    let mut summary = SynthSummary {
        transcripts: 0,
        sentences: 0,
        control_sentences: 0,
        dementia_sentences: 0,
        single_token_sentences: 0,
        untimed_sentences: 0,
        vocabulary: embeddings.len(),
    };
    for (g, group) in [Label::Control, Label::Dementia].into_iter().enumerate() {
        for k in 0..spec.transcripts_per_group {
            let id = format!("{}{:03}", if g == 0 { "c" } else { "d" }, k + 1);
            let mut rng = rng_for(spec.seed, &[g as u64, k as u64]);
            let mut header = BTreeMap::new();
            header.insert("Languages".to_string(), vec!["eng".to_string()]);
            header.insert(
                "Participants".to_string(),
                vec!["PAR Participant, INV Investigator".to_string()],
            );
            let diagnosis = if group == Label::Control {
                "Control"
            } else {
                "ProbableAD"
            };
            header.insert(
                "ID".to_string(),
                vec![
                    format!(
                        "eng|Synth|PAR|{}|female|{diagnosis}||Participant|||",
                        60 + k % 20
                    ),
                    "eng|Synth|INV|||||Investigator|||".to_string(),
                ],
            );
            let mut utterances = Vec::new();
            let mut clock: u64 = 0;
            for idx in 0..spec.utterances_per_transcript {
                let investigator = rng.random::<f64>() < spec.investigator_rate;
                let label = if investigator { Label::Control } else { group };
                let dem = label == Label::Dementia;
                let len = if dem && rng.random::<f64>() < d * spec.short_rate {
                    rng.random_range(spec.min_len..=spec.short_max_len)
                } else {
                    rng.random_range(spec.min_len..=spec.max_len)
                };
                let own = if dem { Vocab::Dementia } else { Vocab::Control };
                let mut words: Vec<String> = Vec::with_capacity(len);
                for _ in 0..len {
                    let repeat =
                        dem && !words.is_empty() && rng.random::<f64>() < d * spec.repeat_rate;
                    let w = if repeat {
                        words.last().cloned().unwrap()
                    } else if rng.random::<f64>() < d * spec.class_word_rate {
                        word(own, rng.random_range(0..spec.class_vocab))
                    } else {
                        word(Vocab::Shared, rng.random_range(0..spec.shared_vocab))
                    };
                    words.push(w);
                }
                let timed = rng.random::<f64>() >= spec.untimed_rate;
                clock += rng.random_range(300..1500);
                let tokens: Vec<Token> = words
                    .into_iter()
                    .map(|w| {
                        let start = clock;
                        let end = start + rng.random_range(200..=600);
                        clock = end + rng.random_range(0..150);
                        if timed {
                            Token::timed(w, start, end)
                        } else {
                            Token::untimed(w)
                        }
                    })
                    .collect();

                let frames_n = spec.frames_per_word * tokens.len();
                let mut frames = gaussian(frames_n * spec.audio_dim, 1.0, &mut rng);
                for f in frames.chunks_mut(spec.audio_dim) {
                    for (x, u) in f.iter_mut().zip(&audio_dir) {
                        *x += sign(label) * d * spec.audio_shift * u;
                    }
                }
                audio.insert(
                    (id.clone(), idx),
                    AudioFeatureSequence {
                        dim: spec.audio_dim,
                        frames,
                        sentence_key: format!("{id}/{idx}"),
                    },
                );

                summary.sentences += 1;
                match label {
                    Label::Control => summary.control_sentences += 1,
                    Label::Dementia => summary.dementia_sentences += 1,
                }
                summary.single_token_sentences += usize::from(tokens.len() == 1);
                summary.untimed_sentences += usize::from(!timed);
                utterances.push(Utterance {
                    speaker: if investigator { "INV" } else { "PAR" }.to_string(),
                    tokens,
                    raw: String::new(),
                });
            }
            summary.transcripts += 1;
            transcripts.push(Transcript {
                id,
                group: Some(group),
                utterances,
                header_meta: header,
                timing_dropped: 0,
            });
        }
    }
    Ok(SynthCorpus {
        transcripts,
        audio,
        embeddings,
        lexicon,
        summary,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `index.tsv`, `transcripts/*.cha`, `audio/<id>/<utterance>.aemb`,
/// the binary embedding table, the lexicon and a JSON summary under `out`.
pub fn write_corpus(corpus: &SynthCorpus, out: &Path) -> Result<()> {
    for sub in ["transcripts", "audio"] {
        let p = out.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut index = String::from("# id\tgroup\ttranscript\taudio_dir\n");
    for t in &corpus.transcripts {
        let group = t.group.expect("synthetic transcripts carry a group");
        index.push_str(&format!(
            "{}\t{group}\ttranscripts/{}.cha\taudio/{}\n",
            t.id, t.id, t.id
        ));
        write(
            &out.join("transcripts").join(format!("{}.cha", t.id)),
            t.to_chat().as_bytes(),
        )?;
        let dir = out.join("audio").join(&t.id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    write(&out.join(crate::chat::INDEX_FILE), index.as_bytes())?;
    for ((id, idx), seq) in &corpus.audio {
        write(
            &crate::embeddings::audio_path(&out.join("audio").join(id), *idx),
            &seq.to_bytes(),
        )?;
    }
    let mut emb = Vec::new();
    corpus
        .embeddings
        .write_binary(&mut emb)
        .map_err(|e| Error::io(out.join(EMBEDDINGS_FILE), e))?;
    write(&out.join(EMBEDDINGS_FILE), &emb)?;
    write(&out.join(LEXICON_FILE), corpus.lexicon.to_tsv().as_bytes())?;
    let json = serde_json::to_string_pretty(&corpus.summary).expect("summary serializes");
    write(&out.join(SUMMARY_FILE), format!("{json}\n").as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(delta: f64) -> SynthSpec {
        SynthSpec {
            transcripts_per_group: 2,
            utterances_per_transcript: 6,
            delta,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn words_are_distinct_per_vocabulary() {
        assert_eq!(word(Vocab::Shared, 0), "sabababa");
        assert_eq!(word(Vocab::Dementia, 123), "dakomitu");
        assert_ne!(word(Vocab::Control, 7), word(Vocab::Dementia, 7));
    }

    #[test]
    fn deterministic() {
        let a = generate(&small(0.7)).unwrap();
        let b = generate(&small(0.7)).unwrap();
        assert_eq!(a.transcripts, b.transcripts);
        assert_eq!(a.audio, b.audio);
        assert_eq!(a.embeddings, b.embeddings);
    }

    #[test]
    fn no_class_vocabulary_at_zero_delta() {
        let c = generate(&small(0.0)).unwrap();
        for t in &c.transcripts {
            for u in &t.utterances {
                assert!(u.tokens.iter().all(|tok| tok.surface.starts_with("sa")));
            }
        }
    }

    #[test]
    fn transcripts_round_trip_through_parser() {
        let c = generate(&small(1.0)).unwrap();
        for t in &c.transcripts {
            let back = crate::chat::parse_transcript(t.to_chat().as_bytes(), &t.id).unwrap();
            assert_eq!(back.group, t.group);
            let toks = |x: &Transcript| -> Vec<Vec<Token>> {
                x.utterances.iter().map(|u| u.tokens.clone()).collect()
            };
            assert_eq!(toks(&back), toks(t));
        }
    }

    #[test]
    fn rejects_out_of_range() {
        let bad = SynthSpec {
            delta: 1.5,
            ..SynthSpec::default()
        };
        assert!(bad
            .validate()
            .unwrap_err()
            .to_string()
            .contains("synth.delta"));
    }
}
