//! Dataset conditions, train/validation/test splitting, and padded batches.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_dataset, AugmentStage, AugmentationConfig, SynonymLexicon};
use crate::chat::{label_counts, Corpus, Label, SentenceRecord};
use crate::embeddings::{
    audio_path, embed_tokens, load_audio_features, normalize_timestamps, AudioFeatureSequence,
    WordEmbeddingTable,
};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Original,
    ShortsRemoved,
    OriginalAugmented,
    ShortsAugmented,
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 4] = [
        ConditionKind::Original,
        ConditionKind::ShortsRemoved,
        ConditionKind::OriginalAugmented,
        ConditionKind::ShortsAugmented,
    ];

    pub fn is_augmented(self) -> bool {
        matches!(
            self,
            ConditionKind::OriginalAugmented | ConditionKind::ShortsAugmented
        )
    }

    pub fn removes_shorts(self) -> bool {
        matches!(
            self,
            ConditionKind::ShortsRemoved | ConditionKind::ShortsAugmented
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ConditionKind::Original => "original",
            ConditionKind::ShortsRemoved => "shorts_removed",
            ConditionKind::OriginalAugmented => "original_augmented",
            ConditionKind::ShortsAugmented => "shorts_augmented",
        }
    }

    /// Results-table caption.
    pub fn title(self) -> &'static str {
        match self {
            ConditionKind::Original => "Original",
            ConditionKind::ShortsRemoved => "Shorts-removed",
            ConditionKind::OriginalAugmented => "Original-augmented",
            ConditionKind::ShortsAugmented => "Shorts-augmented",
        }
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConditionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ConditionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("condition", format!("unknown condition {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionSpec {
    pub kind: ConditionKind,
    pub augmentation: Option<AugmentationConfig>,
}

impl ConditionSpec {
    /// Attaches `augmentation` only for the augmented kinds.
    pub fn new(kind: ConditionKind, augmentation: AugmentationConfig) -> Self {
        ConditionSpec {
            kind,
            augmentation: kind.is_augmented().then_some(augmentation),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.is_augmented() != self.augmentation.is_some() {
            return Err(Error::config(
                "augmentation",
                format!(
                    "augmentation must be present exactly for augmented conditions ({})",
                    self.kind
                ),
            ));
        }
        if let Some(a) = &self.augmentation {
            a.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub kind: ConditionKind,
    pub records: Vec<SentenceRecord>,
    /// Augmentation to apply per split (`AfterSplit` stage) instead of up front.
    pub deferred: Option<(AugmentationConfig, SynonymLexicon)>,
}

impl LabeledDataset {
    pub fn label_counts(&self) -> (usize, usize) {
        label_counts(&self.records)
    }
}

pub fn build_condition(
    records: &[SentenceRecord],
    spec: &ConditionSpec,
    lexicon: Option<&SynonymLexicon>,
) -> Result<LabeledDataset> {
    spec.validate()?;
    let base: Vec<SentenceRecord> = records
        .iter()
        .filter(|r| !spec.kind.removes_shorts() || r.tokens.len() >= 2)
        .cloned()
        .collect();
    let mut ds = LabeledDataset {
        kind: spec.kind,
        records: base,
        deferred: None,
    };
    if let Some(cfg) = &spec.augmentation {
        let lex = lexicon.ok_or_else(|| {
            Error::config("lexicon", "augmented condition needs a synonym lexicon")
        })?;
        match cfg.stage {
            AugmentStage::BeforeSplit => ds.records = augment_dataset(&ds.records, lex, cfg),
            AugmentStage::AfterSplit => ds.deferred = Some((cfg.clone(), lex.clone())),
        }
    }
    if ds.records.is_empty() {
        return Err(Error::Data(format!(
            "condition {} has no records",
            spec.kind
        )));
    }
    let (d, c) = ds.label_counts();
    log::info!(
        "condition {}: {} records ({} dementia, {} control)",
        spec.kind,
        ds.records.len(),
        d,
        c
    );
    Ok(ds)
}

/// A proper fraction `num/den`, written as `"1/5"` in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub const FIFTH: Fraction = Fraction { num: 1, den: 5 };

    pub fn of(self, n: usize) -> usize {
        (n as u64 * self.num / self.den) as usize
    }
}

impl TryFrom<String> for Fraction {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        let (a, b) = s
            .split_once('/')
            .ok_or_else(|| format!("expected num/den, got {s:?}"))?;
        let num = a
            .trim()
            .parse()
            .map_err(|_| format!("bad numerator in {s:?}"))?;
        let den = b
            .trim()
            .parse()
            .map_err(|_| format!("bad denominator in {s:?}"))?;
        Ok(Fraction { num, den })
    }
}

impl From<Fraction> for String {
    fn from(f: Fraction) -> String {
        format!("{}/{}", f.num, f.den)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitUnit {
    Sentence,
    /// Keeps every sentence of a transcript in one split; sizes become approximate.
    Transcript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResplitMode {
    /// Each run reshuffles and redraws test, validation and train.
    Independent,
    /// Test is drawn once; run `k` uses fold `k` of the remainder as validation.
    KFold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitPlan {
    pub test_fraction: Fraction,
    pub val_fraction: Fraction,
    pub n_runs: usize,
    pub seed: u64,
    pub stratified: bool,
    pub unit: SplitUnit,
    pub mode: ResplitMode,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            test_fraction: Fraction::FIFTH,
            val_fraction: Fraction::FIFTH,
            n_runs: 5,
            seed: 0,
            stratified: true,
            unit: SplitUnit::Sentence,
            mode: ResplitMode::Independent,
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("split.test_fraction", self.test_fraction),
            ("split.val_fraction", self.val_fraction),
        ] {
            if f.num == 0 || f.num >= f.den {
                return Err(Error::config(name, "must lie strictly between 0 and 1"));
            }
        }
        if self.n_runs == 0 {
            return Err(Error::config("split.n_runs", "must be at least 1"));
        }
        Ok(())
    }
}

/// Record indices of each part. Every list is sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Draws `k` items from shuffled index lists so the positive count tracks the
/// global rate: positives = round(k * P / N).
fn take_stratified(
    pos: &mut Vec<usize>,
    neg: &mut Vec<usize>,
    k: usize,
    p_total: usize,
    n_total: usize,
) -> Vec<usize> {
    let want_pos = ((2 * k * p_total + n_total) / (2 * n_total))
        .min(pos.len())
        .min(k);
    let want_pos = want_pos.max(k.saturating_sub(neg.len()));
    let mut out: Vec<usize> = pos.drain(..want_pos).collect();
    out.extend(neg.drain(..k - want_pos));
    out
}

pub fn split(ds: &LabeledDataset, plan: &SplitPlan, run_index: usize) -> Result<Split> {
    plan.validate()?;
    if run_index >= plan.n_runs {
        return Err(Error::config(
            "run_index",
            format!("{run_index} >= n_runs {}", plan.n_runs),
        ));
    }
    let n = ds.records.len();
    if n < 5 {
        return Err(Error::Data(format!(
            "dataset has {n} records; splitting needs at least 5"
        )));
    }
    let labels: Vec<bool> = ds
        .records
        .iter()
        .map(|r| r.label == Label::Dementia)
        .collect();

    let mut out = match plan.unit {
        SplitUnit::Sentence => split_sentences(&labels, plan, run_index),
        SplitUnit::Transcript => split_transcripts(ds, plan, run_index),
    };
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

fn split_sentences(labels: &[bool], plan: &SplitPlan, run_index: usize) -> Split {
    let n = labels.len();
    let p_total = labels.iter().filter(|&&l| l).count();
    let n_test = plan.test_fraction.of(n);
    let rest = n - n_test;

    let shuffle_key = match plan.mode {
        ResplitMode::Independent => run_index as u64,
        ResplitMode::KFold => 0,
    };
    let mut rng = rng_for(plan.seed, &[0x5e11, shuffle_key]);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let (test, remainder) = if plan.stratified {
        let mut pos: Vec<usize> = order.iter().copied().filter(|&i| labels[i]).collect();
        let mut neg: Vec<usize> = order.iter().copied().filter(|&i| !labels[i]).collect();
        let test = take_stratified(&mut pos, &mut neg, n_test, p_total, n);
        (test, (pos, neg))
    } else {
        let test = order[..n_test].to_vec();
        (test, (order[n_test..].to_vec(), Vec::new()))
    };

    match plan.mode {
        ResplitMode::Independent => {
            let n_val = plan.val_fraction.of(rest);
            let (mut pos, mut neg) = remainder;
            let val = if plan.stratified {
                take_stratified(&mut pos, &mut neg, n_val, p_total, n)
            } else {
                pos.drain(..n_val).collect()
            };
            pos.extend(neg);
            Split {
                train: pos,
                val,
                test,
            }
        }
        ResplitMode::KFold => {
            // interleave classes so contiguous folds stay balanced
            let (pos, neg) = remainder;
            let mut pool: Vec<usize> = Vec::with_capacity(rest);
            if plan.stratified {
                let (mut i, mut j) = (0, 0);
                while i < pos.len() || j < neg.len() {
                    // keep the running positive share close to pos.len()/rest
                    if j >= neg.len() || (i < pos.len() && i * rest <= (i + j) * pos.len()) {
                        pool.push(pos[i]);
                        i += 1;
                    } else {
                        pool.push(neg[j]);
                        j += 1;
                    }
                }
            } else {
                pool = pos;
            }
            let folds = plan.n_runs.max(2);
            let lo = rest * run_index / folds;
            let hi = rest * (run_index + 1) / folds;
            let val = pool[lo..hi].to_vec();
            let train = pool[..lo].iter().chain(&pool[hi..]).copied().collect();
            Split { train, val, test }
        }
    }
}

fn split_transcripts(ds: &LabeledDataset, plan: &SplitPlan, run_index: usize) -> Split {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in ds.records.iter().enumerate() {
        groups.entry(r.transcript_id.as_str()).or_default().push(i);
    }
    let mut ids: Vec<&str> = groups.keys().copied().collect();
    ids.shuffle(&mut rng_for(plan.seed, &[0x7a5c, run_index as u64]));
    let n = ds.records.len();
    let n_test = plan.test_fraction.of(n);
    let n_val = plan.val_fraction.of(n - n_test);
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for id in ids {
        let g = &groups[id];
        if split.test.len() < n_test {
            split.test.extend(g);
        } else if split.val.len() < n_val {
            split.val.extend(g);
        } else {
            split.train.extend(g);
        }
    }
    split
}

#[derive(Debug, Clone)]
pub struct SplitRecords {
    pub train: Vec<SentenceRecord>,
    pub val: Vec<SentenceRecord>,
    pub test: Vec<SentenceRecord>,
}

/// Copies the records of each part, applying deferred augmentation within each part.
pub fn materialize(ds: &LabeledDataset, split: &Split) -> SplitRecords {
    let take = |idx: &[usize]| -> Vec<SentenceRecord> {
        let recs: Vec<SentenceRecord> = idx.iter().map(|&i| ds.records[i].clone()).collect();
        match &ds.deferred {
            Some((cfg, lex)) => augment_dataset(&recs, lex, cfg),
            None => recs,
        }
    };
    SplitRecords {
        train: take(&split.train),
        val: take(&split.val),
        test: take(&split.test),
    }
}

/// Number of augmented records whose parent sentence also appears (as itself or
/// another variant) in a different part.
pub fn cross_split_leakage(parts: &SplitRecords) -> usize {
    let sets: Vec<BTreeSet<String>> = [&parts.train, &parts.val, &parts.test]
        .iter()
        .map(|p| p.iter().map(|r| r.parent_id()).collect())
        .collect();
    [&parts.train, &parts.val, &parts.test]
        .iter()
        .enumerate()
        .map(|(k, part)| {
            part.iter()
                .filter(|r| r.provenance.is_augmented())
                .filter(|r| {
                    let pid = r.parent_id();
                    sets.iter()
                        .enumerate()
                        .any(|(j, s)| j != k && s.contains(&pid))
                })
                .count()
        })
        .sum()
}

/// `record_id,label,split,run_index,provenance` rows.
pub fn write_manifest<W: Write>(
    ds: &LabeledDataset,
    splits: &[(usize, Split)],
    w: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["record_id", "label", "split", "run_index", "provenance"])?;
    for (run, s) in splits {
        let parts = materialize(ds, s);
        for (name, recs) in [
            ("train", &parts.train),
            ("val", &parts.val),
            ("test", &parts.test),
        ] {
            for r in recs.iter() {
                let prov = if r.provenance.is_augmented() {
                    "augmented"
                } else {
                    "original"
                };
                wtr.write_record([
                    r.id(),
                    r.label.to_string(),
                    name.to_string(),
                    run.to_string(),
                    prov.to_string(),
                ])?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::io("manifest", e))?;
    Ok(())
}

/// Frozen audio features keyed by `(transcript_id, utterance index)`; augmented
/// records resolve to their parent's audio.
#[derive(Debug, Clone, Default)]
pub struct AudioStore {
    dim: usize,
    map: HashMap<(String, usize), Arc<AudioFeatureSequence>>,
}

impl AudioStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        transcript_id: &str,
        index: usize,
        seq: AudioFeatureSequence,
    ) -> Result<()> {
        if self.map.is_empty() {
            self.dim = seq.dim;
        } else if seq.dim != self.dim {
            return Err(Error::Data(format!(
                "audio dimension {} for {transcript_id}/{index} differs from {}",
                seq.dim, self.dim
            )));
        }
        self.map
            .insert((transcript_id.to_string(), index), Arc::new(seq));
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, rec: &SentenceRecord) -> Option<&AudioFeatureSequence> {
        self.map
            .get(&(rec.transcript_id.clone(), rec.index))
            .map(|a| a.as_ref())
    }

    /// Loads features for every distinct sentence in `records`; fails listing all
    /// records whose audio cannot be resolved.
    pub fn load(corpus: &Corpus, records: &[SentenceRecord]) -> Result<Self> {
        let keys: BTreeSet<(&str, usize)> = records
            .iter()
            .map(|r| (r.transcript_id.as_str(), r.index))
            .collect();
        let loaded: Vec<std::result::Result<(String, usize, AudioFeatureSequence), String>> = keys
            .into_par_iter()
            .map(|(tid, index)| {
                let dir = corpus
                    .audio_dir(tid)
                    .ok_or_else(|| format!("{tid}/{index} (no audio directory)"))?;
                let path = audio_path(dir, index);
                load_audio_features(&path)
                    .map(|a| (tid.to_string(), index, a))
                    .map_err(|e| format!("{tid}/{index} ({e})"))
            })
            .collect();
        let mut store = AudioStore::new();
        let mut missing = Vec::new();
        for item in loaded {
            match item {
                Ok((tid, index, a)) => store.insert(&tid, index, a)?,
                Err(m) => missing.push(m),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Data(format!(
                "unresolvable audio for records: {}",
                missing.join(", ")
            )));
        }
        Ok(store)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Channels {
    pub word: bool,
    pub time: bool,
    pub audio: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct InputSource<'a> {
    pub words: Option<&'a WordEmbeddingTable>,
    pub audio: Option<&'a AudioStore>,
}

/// Padded mini-batch. Sequence tensors are `B x L x d` with zero rows at pads.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Indices of the batch's records in the slice it was assembled from.
    pub rows: Vec<usize>,
    pub labels: Vec<f64>,
    pub seq_len: usize,
    pub seq_mask: Vec<bool>,
    pub word: Option<Tensor>,
    pub time: Option<Tensor>,
    pub audio_len: usize,
    pub audio_mask: Vec<bool>,
    pub audio: Option<Tensor>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    /// Re-pads to longer sequence and audio lengths.
    pub fn pad_to(&self, seq_len: usize, audio_len: usize) -> Batch {
        assert!(seq_len >= self.seq_len && audio_len >= self.audio_len);
        let b = self.size();
        let grow = |t: &Tensor, old: usize, new: usize| {
            let d = t.shape()[2];
            let mut out = Tensor::zeros(&[b, new, d]);
            for i in 0..b {
                out.row_mut(i)[..old * d].copy_from_slice(t.row(i));
            }
            out
        };
        let grow_mask = |m: &[bool], old: usize, new: usize| {
            let mut out = vec![false; b * new];
            for i in 0..b {
                out[i * new..i * new + old].copy_from_slice(&m[i * old..(i + 1) * old]);
            }
            out
        };
        Batch {
            rows: self.rows.clone(),
            labels: self.labels.clone(),
            seq_len,
            seq_mask: grow_mask(&self.seq_mask, self.seq_len, seq_len),
            word: self.word.as_ref().map(|t| grow(t, self.seq_len, seq_len)),
            time: self.time.as_ref().map(|t| grow(t, self.seq_len, seq_len)),
            audio_len,
            audio_mask: grow_mask(&self.audio_mask, self.audio_len, audio_len),
            audio: self
                .audio
                .as_ref()
                .map(|t| grow(t, self.audio_len, audio_len)),
        }
    }
}

/// Index groups of at most `batch_size`; shuffled per `(seed, epoch)` when a seed is given.
pub fn batch_order(n: usize, batch_size: usize, shuffle: Option<(u64, u64)>) -> Vec<Vec<usize>> {
    assert!(batch_size > 0);
    let mut idx: Vec<usize> = (0..n).collect();
    if let Some((seed, epoch)) = shuffle {
        idx.shuffle(&mut rng_for(seed, &[0xba7c, epoch]));
    }
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

pub fn assemble_batch(
    records: &[SentenceRecord],
    rows: &[usize],
    src: &InputSource,
    ch: Channels,
) -> Result<Batch> {
    let b = rows.len();
    let recs: Vec<&SentenceRecord> = rows.iter().map(|&i| &records[i]).collect();
    let seq_len = recs.iter().map(|r| r.tokens.len()).max().unwrap_or(0);
    let mut seq_mask = vec![false; b * seq_len];
    for (i, r) in recs.iter().enumerate() {
        seq_mask[i * seq_len..i * seq_len + r.tokens.len()].fill(true);
    }

    let word = if ch.word {
        let table = src.words.ok_or_else(|| {
            Error::Data("word channel requested without an embedding table".into())
        })?;
        let d = table.dim();
        let mut t = Tensor::zeros(&[b, seq_len, d]);
        for (i, r) in recs.iter().enumerate() {
            let (m, _) = embed_tokens(r.tokens.iter().map(|t| t.surface.as_str()), table);
            t.row_mut(i)[..m.len()].copy_from_slice(&m);
        }
        Some(t)
    } else {
        None
    };

    let time = if ch.time {
        let mut t = Tensor::zeros(&[b, seq_len, 2]);
        let mut missing = Vec::new();
        for (i, r) in recs.iter().enumerate() {
            match normalize_timestamps(&r.tokens) {
                Ok(ts) => {
                    for (k, pair) in ts.iter().enumerate() {
                        t.row_mut(i)[2 * k..2 * k + 2].copy_from_slice(pair);
                    }
                }
                Err(_) => missing.push(r.id()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Data(format!(
                "records without timestamps: {}",
                missing.join(", ")
            )));
        }
        Some(t)
    } else {
        None
    };

    let (audio, audio_len, audio_mask) = if ch.audio {
        let store = src
            .audio
            .ok_or_else(|| Error::Data("audio channel requested without audio features".into()))?;
        let mut seqs = Vec::with_capacity(b);
        let mut missing = Vec::new();
        for r in &recs {
            match store.get(r) {
                Some(a) => seqs.push(a),
                None => missing.push(r.id()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Data(format!(
                "unresolvable audio for records: {}",
                missing.join(", ")
            )));
        }
        let t_max = seqs.iter().map(|a| a.len()).max().unwrap_or(0);
        let d = store.dim();
        let mut t = Tensor::zeros(&[b, t_max, d]);
        let mut mask = vec![false; b * t_max];
        for (i, a) in seqs.iter().enumerate() {
            t.row_mut(i)[..a.frames.len()].copy_from_slice(&a.frames);
            mask[i * t_max..i * t_max + a.len()].fill(true);
        }
        (Some(t), t_max, mask)
    } else {
        (None, 0, Vec::new())
    };

    Ok(Batch {
        rows: rows.to_vec(),
        labels: recs.iter().map(|r| r.label.as_target()).collect(),
        seq_len,
        seq_mask,
        word,
        time,
        audio_len,
        audio_mask,
        audio,
    })
}

pub fn make_batches(
    records: &[SentenceRecord],
    src: &InputSource,
    ch: Channels,
    batch_size: usize,
    shuffle: Option<(u64, u64)>,
) -> Result<Vec<Batch>> {
    batch_order(records.len(), batch_size, shuffle)
        .iter()
        .map(|rows| assemble_batch(records, rows, src, ch))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chat::{Provenance, SpeakerRole, Token};

    fn rec(id: &str, index: usize, n_tokens: usize, label: Label) -> SentenceRecord {
        SentenceRecord {
            transcript_id: id.into(),
            index,
            tokens: (0..n_tokens)
                .map(|i| Token::timed(format!("w{i}"), 100 * i as u64 + 50, 100 * i as u64 + 120))
                .collect(),
            label,
            speaker_role: SpeakerRole::Participant,
            provenance: Provenance::Original,
        }
    }

    fn dataset(n: usize, positives: usize) -> LabeledDataset {
        LabeledDataset {
            kind: ConditionKind::Original,
            records: (0..n)
                .map(|i| {
                    rec(
                        &format!("t{}", i / 3),
                        i,
                        1 + i % 4,
                        if i < positives {
                            Label::Dementia
                        } else {
                            Label::Control
                        },
                    )
                })
                .collect(),
            deferred: None,
        }
    }

    #[test]
    fn shorts_removed_threshold() {
        let recs = vec![
            rec("a", 0, 1, Label::Control),
            rec("a", 1, 2, Label::Control),
            rec("a", 2, 3, Label::Control),
        ];
        let spec = ConditionSpec::new(ConditionKind::ShortsRemoved, AugmentationConfig::default());
        assert_eq!(
            build_condition(&recs, &spec, None).unwrap().records.len(),
            2
        );
        let spec = ConditionSpec::new(ConditionKind::Original, AugmentationConfig::default());
        assert_eq!(
            build_condition(&recs, &spec, None).unwrap().records.len(),
            3
        );
    }

    #[test]
    fn empty_condition_is_error() {
        let recs = vec![rec("a", 0, 1, Label::Control)];
        let spec = ConditionSpec::new(ConditionKind::ShortsRemoved, AugmentationConfig::default());
        assert!(build_condition(&recs, &spec, None).is_err());
    }

    #[test]
    fn augmentation_spec_invariant() {
        let bad = ConditionSpec {
            kind: ConditionKind::Original,
            augmentation: Some(AugmentationConfig::default()),
        };
        assert!(bad.validate().is_err());
        let spec = ConditionSpec::new(
            ConditionKind::OriginalAugmented,
            AugmentationConfig::default(),
        );
        assert!(build_condition(&[rec("a", 0, 2, Label::Control)], &spec, None).is_err());
    }

    #[test]
    fn hundred_records_sizes() {
        let ds = dataset(100, 40);
        let s = split(&ds, &SplitPlan::default(), 0).unwrap();
        assert_eq!((s.test.len(), s.train.len(), s.val.len()), (20, 64, 16));
        assert_eq!(s, split(&ds, &SplitPlan::default(), 0).unwrap());
        assert_ne!(s, split(&ds, &SplitPlan::default(), 1).unwrap());
    }

    #[test]
    fn stratified_balanced() {
        let ds = dataset(50, 25);
        let s = split(&ds, &SplitPlan::default(), 2).unwrap();
        for part in [&s.train, &s.val, &s.test] {
            let pos = part
                .iter()
                .filter(|&&i| ds.records[i].label == Label::Dementia)
                .count() as f64;
            assert!((pos - part.len() as f64 * 0.5).abs() <= 1.0);
        }
    }

    #[test]
    fn too_small_and_bad_run_index() {
        assert!(split(&dataset(4, 2), &SplitPlan::default(), 0).is_err());
        assert!(split(&dataset(10, 2), &SplitPlan::default(), 5).is_err());
    }

    #[test]
    fn kfold_folds_cover_remainder() {
        let ds = dataset(60, 20);
        let plan = SplitPlan {
            mode: ResplitMode::KFold,
            ..Default::default()
        };
        let splits: Vec<Split> = (0..5).map(|k| split(&ds, &plan, k).unwrap()).collect();
        let mut vals: Vec<usize> = splits.iter().flat_map(|s| s.val.clone()).collect();
        vals.sort_unstable();
        let mut rest: Vec<usize> = splits[0]
            .train
            .iter()
            .chain(&splits[0].val)
            .copied()
            .collect();
        rest.sort_unstable();
        assert_eq!(vals, rest);
        assert!(splits.iter().all(|s| s.test == splits[0].test));
    }

    #[test]
    fn transcript_unit_keeps_transcripts_together() {
        let ds = dataset(60, 20);
        let plan = SplitPlan {
            unit: SplitUnit::Transcript,
            ..Default::default()
        };
        let s = split(&ds, &plan, 0).unwrap();
        let ids = |p: &[usize]| {
            p.iter()
                .map(|&i| ds.records[i].transcript_id.clone())
                .collect::<BTreeSet<_>>()
        };
        assert!(ids(&s.train).is_disjoint(&ids(&s.test)));
        assert!(ids(&s.val).is_disjoint(&ids(&s.test)));
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 60);
    }

    #[test]
    fn after_split_augmentation_has_no_leakage() {
        let mut ds = dataset(40, 10);
        let lex = crate::augment::parse_lexicon("w0\tz0,y0\nw1\tz1\n", "x").unwrap();
        let cfg = AugmentationConfig {
            replacements_per_word: 2,
            stage: AugmentStage::AfterSplit,
            ..Default::default()
        };
        ds.deferred = Some((cfg.clone(), lex.clone()));
        let parts = materialize(&ds, &split(&ds, &SplitPlan::default(), 0).unwrap());
        assert!(parts.train.iter().any(|r| r.provenance.is_augmented()));
        assert_eq!(cross_split_leakage(&parts), 0);

        let before = LabeledDataset {
            records: augment_dataset(&dataset(40, 10).records, &lex, &cfg),
            ..dataset(40, 10)
        };
        let parts = materialize(&before, &split(&before, &SplitPlan::default(), 0).unwrap());
        assert!(cross_split_leakage(&parts) > 0);
    }

    #[test]
    fn batch_sizes_and_padding() {
        let order = batch_order(33, 16, None);
        assert_eq!(
            order.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![16, 16, 1]
        );
        assert_eq!(
            batch_order(33, 16, Some((4, 1))),
            batch_order(33, 16, Some((4, 1)))
        );
        assert_ne!(
            batch_order(33, 16, Some((4, 1))),
            batch_order(33, 16, Some((4, 2)))
        );

        let recs = vec![
            rec("a", 0, 2, Label::Control),
            rec("a", 1, 5, Label::Dementia),
        ];
        let table =
            crate::embeddings::read_text_embeddings(b"w0 1 1\nw1 2 2\nw4 3 3\n", "x").unwrap();
        let src = InputSource {
            words: Some(&table),
            audio: None,
        };
        let ch = Channels {
            word: true,
            time: true,
            audio: false,
        };
        let b = assemble_batch(&recs, &[0, 1], &src, ch).unwrap();
        assert_eq!(b.seq_len, 5);
        assert_eq!(&b.seq_mask[..5], &[true, true, false, false, false]);
        assert!(b.seq_mask[5..].iter().all(|&m| m));
        let w = b.word.as_ref().unwrap();
        assert_eq!(&w.row(0)[..4], &[1.0, 1.0, 2.0, 2.0]);
        assert!(w.row(0)[4..].iter().all(|&v| v == 0.0));
        assert_eq!(&w.row(1)[8..], &[3.0, 3.0]);
        let t = b.time.as_ref().unwrap();
        assert_eq!(&t.row(0)[..4], &[0.0, 0.07, 0.1, 0.17]);
        assert_eq!(b.labels, vec![0.0, 1.0]);
    }

    #[test]
    fn missing_audio_lists_records() {
        let recs = vec![rec("a", 0, 2, Label::Control)];
        let store = AudioStore::new();
        let src = InputSource {
            words: None,
            audio: Some(&store),
        };
        let ch = Channels {
            audio: true,
            ..Default::default()
        };
        let e = assemble_batch(&recs, &[0], &src, ch)
            .unwrap_err()
            .to_string();
        assert!(e.contains("a/0"), "{e}");
    }
}
