//! Loading and conditioning shared by `prepare`, `train` and `evaluate`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use dementia_mm::augment::{load_lexicon, write_augmentation_report, SynonymLexicon};
use dementia_mm::chat::{load_corpus, Corpus, Label};
use dementia_mm::dataset::{
    build_condition, split, AudioStore, ConditionSpec, InputSource, LabeledDataset,
};
use dementia_mm::embeddings::{load_word_embeddings, WordEmbeddingTable};
use dementia_mm::{Error, Result};

use crate::config::Resolved;

pub struct Prepared {
    pub corpus: Corpus,
    pub dataset: LabeledDataset,
    pub words: Option<WordEmbeddingTable>,
    pub audio: Option<AudioStore>,
    pub lexicon: Option<SynonymLexicon>,
}

impl Prepared {
    pub fn source(&self) -> InputSource<'_> {
        InputSource {
            words: self.words.as_ref(),
            audio: self.audio.as_ref(),
        }
    }
}

fn ctx(stage: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Corpus(m) => Error::Corpus(format!("{stage}: {m}")),
        Error::Data(m) => Error::Data(format!("{stage}: {m}")),
        other => other,
    }
}

pub fn prepare(cfg: &Resolved) -> Result<Prepared> {
    let paths = &cfg.raw.paths;
    let corpus = load_corpus(&paths.corpus).map_err(ctx("chat_corpus"))?;
    let words = match (&paths.embeddings, cfg.needs_words()) {
        (Some(p), true) => {
            Some(load_word_embeddings(p, cfg.embedding_format).map_err(ctx("embeddings"))?)
        }
        _ => None,
    };
    let lexicon = match (&paths.lexicon, cfg.condition.is_augmented()) {
        (Some(p), true) => Some(load_lexicon(p).map_err(ctx("augment"))?),
        _ => None,
    };
    let spec = ConditionSpec::new(cfg.condition, cfg.raw.augmentation.clone());
    let dataset =
        build_condition(&corpus.records, &spec, lexicon.as_ref()).map_err(ctx("dataset"))?;
    let audio = if cfg.needs_audio() {
        Some(AudioStore::load(&corpus, &dataset.records).map_err(ctx("embeddings"))?)
    } else {
        None
    };
    Ok(Prepared {
        corpus,
        dataset,
        words,
        audio,
        lexicon,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes `manifest.csv`, `counts.csv`, `corpus_summary.csv` and, for augmented
/// conditions, `augmentation.csv` into `out`.
pub fn write_prepared(p: &Prepared, cfg: &Resolved, out: &Path) -> Result<()> {
    let plan = &cfg.raw.split;
    let splits = (0..plan.n_runs)
        .map(|r| split(&p.dataset, plan, r).map(|s| (r, s)))
        .collect::<Result<Vec<_>>>()?;
    dementia_mm::dataset::write_manifest(&p.dataset, &splits, create(&out.join("manifest.csv"))?)?;
    p.corpus
        .write_summary_csv(create(&out.join("corpus_summary.csv"))?)?;
    if cfg.condition.is_augmented() {
        write_augmentation_report(&p.dataset.records, create(&out.join("augmentation.csv"))?)?;
    }

    let mut wtr = csv::Writer::from_writer(create(&out.join("counts.csv"))?);
    wtr.write_record(["condition", "label", "provenance", "count"])?;
    for label in [Label::Control, Label::Dementia] {
        for augmented in [false, true] {
            let n = p
                .dataset
                .records
                .iter()
                .filter(|r| r.label == label && r.provenance.is_augmented() == augmented)
                .count();
            wtr.write_record([
                cfg.condition.name(),
                &label.to_string(),
                if augmented { "augmented" } else { "original" },
                &n.to_string(),
            ])?;
        }
    }
    wtr.flush()
        .map_err(|e| Error::io(out.join("counts.csv"), e))?;
    Ok(())
}
