//! The six classifier graphs.
//!
//! Every graph ends in a single sigmoid unit. Sequence branches (words,
//! words with timestamps, or timestamps alone) go through one LSTM and
//! contribute its final hidden state; the audio branch is masked mean
//! pooling followed by dropout. Branch outputs are concatenated (LSTM first)
//! before the dense head.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Batch, Channels};
use crate::error::{Error, Result};
use crate::nn::{
    concat, concat_backward, dense_backward, dense_forward, dropout, lstm_backward, lstm_forward,
    mean_pool_time, Activation, DenseCache, DenseGrads, DenseParams, LstmCache, LstmGrads,
    LstmParams, Tensor,
};
use crate::seed::rng_for;

pub const LSTM_UNITS: usize = 16;
pub const DROPOUT_RATE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Audio,
    Text,
    AudioTime,
    TextTime,
    AudioText,
    AudioTextTime,
}

impl ModelKind {
    /// Table row order.
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Audio,
        ModelKind::Text,
        ModelKind::AudioTime,
        ModelKind::TextTime,
        ModelKind::AudioText,
        ModelKind::AudioTextTime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Audio => "audio",
            ModelKind::Text => "text",
            ModelKind::AudioTime => "audio_time",
            ModelKind::TextTime => "text_time",
            ModelKind::AudioText => "audio_text",
            ModelKind::AudioTextTime => "audio_text_time",
        }
    }

    /// Display label used in result tables.
    pub fn title(self) -> &'static str {
        match self {
            ModelKind::Audio => "Audio",
            ModelKind::Text => "Text",
            ModelKind::AudioTime => "Audio+Time",
            ModelKind::TextTime => "Text+Time",
            ModelKind::AudioText => "Audio+Text",
            ModelKind::AudioTextTime => "Audio+Text+Time",
        }
    }

    pub fn channels(self) -> Channels {
        use ModelKind::*;
        Channels {
            word: matches!(self, Text | TextTime | AudioText | AudioTextTime),
            time: matches!(self, AudioTime | TextTime | AudioTextTime),
            audio: matches!(self, Audio | AudioTime | AudioText | AudioTextTime),
        }
    }

    fn sequence_input(self) -> Option<SeqInput> {
        let ch = self.channels();
        match (ch.word, ch.time) {
            (true, true) => Some(SeqInput::WordTime),
            (true, false) => Some(SeqInput::Word),
            (false, true) => Some(SeqInput::Time),
            (false, false) => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['+', '-'], "_");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| {
                let valid: Vec<&str> = ModelKind::ALL.iter().map(|k| k.name()).collect();
                Error::config(
                    "models",
                    format!(
                        "unknown model kind {s:?}; valid kinds: {}",
                        valid.join(", ")
                    ),
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SeqInput {
    Word,
    WordTime,
    Time,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub kind: ModelKind,
    pub dim_w: usize,
    pub dim_a: usize,
    pub seed: u64,
    pub lstm: Option<LstmParams>,
    pub audio_dropout: Option<f64>,
    pub dense: DenseParams,
    version: u64,
}

pub fn build_model(kind: ModelKind, dim_w: usize, dim_a: usize, seed: u64) -> Result<ModelGraph> {
    build_model_with(kind, dim_w, dim_a, seed, LSTM_UNITS, DROPOUT_RATE)
}

/// Same wiring as [`build_model`] with a custom LSTM width and dropout rate.
pub fn build_model_with(
    kind: ModelKind,
    dim_w: usize,
    dim_a: usize,
    seed: u64,
    units: usize,
    dropout_rate: f64,
) -> Result<ModelGraph> {
    let ch = kind.channels();
    if ch.word && dim_w == 0 {
        return Err(Error::config(
            "dim_w",
            format!("{kind} needs a positive word dimension"),
        ));
    }
    if ch.audio && dim_a == 0 {
        return Err(Error::config(
            "dim_a",
            format!("{kind} needs a positive audio dimension"),
        ));
    }
    if units == 0 || !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::config(
            "model",
            "units must be positive and dropout in [0, 1)",
        ));
    }
    let mut rng = rng_for(seed, &[0x1417]);
    let lstm = kind.sequence_input().map(|s| {
        let input = match s {
            SeqInput::Word => dim_w,
            SeqInput::WordTime => dim_w + 2,
            SeqInput::Time => 2,
        };
        LstmParams::new(input, units, dropout_rate, dropout_rate, &mut rng)
    });
    let head_in = lstm.as_ref().map_or(0, |l| l.units) + if ch.audio { dim_a } else { 0 };
    let dense = DenseParams::new(head_in, 1, Activation::Sigmoid, &mut rng);
    Ok(ModelGraph {
        kind,
        dim_w: if ch.word { dim_w } else { 0 },
        dim_a: if ch.audio { dim_a } else { 0 },
        seed,
        lstm,
        audio_dropout: ch.audio.then_some(dropout_rate),
        dense,
        version: 0,
    })
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    lstm: Option<LstmCache>,
    widths: Vec<usize>,
    dense: DenseCache,
    batch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub lstm: Option<LstmGrads>,
    pub dense: DenseGrads,
}

impl Gradients {
    /// Same order as [`ModelGraph::named_params`].
    pub fn flat(&self) -> Vec<&[f64]> {
        let mut v = Vec::new();
        if let Some(l) = &self.lstm {
            v.extend([l.w.data(), l.u.data(), l.b.data()]);
        }
        v.extend([self.dense.w.data(), self.dense.b.data()]);
        v
    }
}

fn sequence_tensor(batch: &Batch, input: SeqInput) -> Result<Tensor> {
    let missing = |c: &str| Error::Data(format!("batch lacks the {c} channel"));
    match input {
        SeqInput::Word => batch.word.clone().ok_or_else(|| missing("word")),
        SeqInput::Time => batch.time.clone().ok_or_else(|| missing("time")),
        SeqInput::WordTime => {
            let w = batch.word.as_ref().ok_or_else(|| missing("word"))?;
            let t = batch.time.as_ref().ok_or_else(|| missing("time"))?;
            let (b, l, dw) = (w.shape()[0], w.shape()[1], w.shape()[2]);
            let mut x = Tensor::zeros(&[b, l, dw + 2]);
            for i in 0..b {
                let (wr, tr) = (w.row(i), t.row(i));
                let xr = x.row_mut(i);
                for s in 0..l {
                    xr[s * (dw + 2)..s * (dw + 2) + dw].copy_from_slice(&wr[s * dw..(s + 1) * dw]);
                    xr[s * (dw + 2) + dw..(s + 1) * (dw + 2)]
                        .copy_from_slice(&tr[s * 2..s * 2 + 2]);
                }
            }
            Ok(x)
        }
    }
}

impl ModelGraph {
    /// `(name, tensor)` pairs in a fixed order.
    pub fn named_params(&self) -> Vec<(&'static str, &Tensor)> {
        let mut v = Vec::new();
        if let Some(l) = &self.lstm {
            v.extend([
                ("lstm.kernel", &l.w),
                ("lstm.recurrent_kernel", &l.u),
                ("lstm.bias", &l.b),
            ]);
        }
        v.extend([
            ("dense.kernel", &self.dense.w),
            ("dense.bias", &self.dense.b),
        ]);
        v
    }

    /// Mutable parameter slices; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        let mut v = Vec::new();
        if let Some(l) = &mut self.lstm {
            v.push(l.w.data_mut());
            v.push(l.u.data_mut());
            v.push(l.b.data_mut());
        }
        v.push(self.dense.w.data_mut());
        v.push(self.dense.b.data_mut());
        v
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.named_params().iter().map(|(_, t)| t.len()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_sizes().iter().sum()
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        batch: &Batch,
        training: bool,
        rng: &mut R,
    ) -> Result<(Vec<f64>, ForwardCache)> {
        let mut pieces: Vec<Tensor> = Vec::new();
        let lstm_cache = match (&self.lstm, self.kind.sequence_input()) {
            (Some(p), Some(input)) => {
                let x = sequence_tensor(batch, input)?;
                let (out, cache) = lstm_forward(&x, &batch.seq_mask, p, training, rng)?;
                pieces.push(out.h_last);
                Some(cache)
            }
            _ => None,
        };
        if let Some(rate) = self.audio_dropout {
            let a = batch
                .audio
                .as_ref()
                .ok_or_else(|| Error::Data("batch lacks the audio channel".into()))?;
            if a.shape()[2] != self.dim_a {
                return Err(Error::shape(
                    "forward",
                    format!("audio dim {} vs model {}", a.shape()[2], self.dim_a),
                ));
            }
            let pooled = mean_pool_time(a, &batch.audio_mask)?;
            let (dropped, _) = dropout(&pooled, rate, training, rng);
            pieces.push(dropped);
        }
        let refs: Vec<&Tensor> = pieces.iter().collect();
        let features = concat(&refs)?;
        let (y, dense_cache) = dense_forward(&features, &self.dense)?;
        let probs = y.into_data();
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("non-finite model output".into()));
        }
        Ok((
            probs,
            ForwardCache {
                version: self.version,
                lstm: lstm_cache,
                widths: pieces.iter().map(|t| t.shape()[1]).collect(),
                dense: dense_cache,
                batch: batch.size(),
            },
        ))
    }

    /// Parameter gradients given `dL/dprob` for each example.
    pub fn backward(&self, cache: &ForwardCache, dprobs: &[f64]) -> Result<Gradients> {
        if cache.version != self.version {
            return Err(Error::Numerical(
                "stale forward cache: parameters changed since forward".into(),
            ));
        }
        if dprobs.len() != cache.batch {
            return Err(Error::shape(
                "backward",
                format!("{} upstream values for batch {}", dprobs.len(), cache.batch),
            ));
        }
        let dy = Tensor::from_vec(&[cache.batch, 1], dprobs.to_vec())?;
        let (dfeat, dense) = dense_backward(&self.dense, &cache.dense, &dy)?;
        let mut parts = concat_backward(&dfeat, &cache.widths).into_iter();
        let lstm = match (&self.lstm, &cache.lstm) {
            (Some(p), Some(c)) => {
                let dh_last = parts.next().expect("lstm slice");
                Some(lstm_backward(p, c, None, &dh_last)?.1)
            }
            _ => None,
        };
        // the audio branch has no parameters and its inputs are frozen features
        Ok(Gradients { lstm, dense })
    }

    /// Text listing of layers, shapes and parameter counts.
    pub fn describe(&self) -> String {
        let mut out = format!("model {} ({})\n", self.kind.name(), self.kind.title());
        let mut widths = Vec::new();
        if let (Some(l), Some(input)) = (&self.lstm, self.kind.sequence_input()) {
            let src = match input {
                SeqInput::Word => format!("word[{}]", self.dim_w),
                SeqInput::WordTime => format!("concat(word[{}], time[2])", self.dim_w),
                SeqInput::Time => "time[2]".to_string(),
            };
            out.push_str(&format!("  sequence input {src} -> {}\n", l.input_dim()));
            out.push_str(&format!(
                "  lstm units={} dropout={} recurrent_dropout={} params={} -> h_last[{}]\n",
                l.units,
                l.dropout,
                l.recurrent_dropout,
                l.param_count(),
                l.units
            ));
            widths.push(l.units);
        }
        if let Some(rate) = self.audio_dropout {
            out.push_str(&format!("  audio input frames[{}]\n", self.dim_a));
            out.push_str(&format!("  mean_pool_time -> [{}]\n", self.dim_a));
            out.push_str(&format!("  dropout rate={rate}\n"));
            widths.push(self.dim_a);
        }
        if widths.len() > 1 {
            let w: Vec<String> = widths.iter().map(usize::to_string).collect();
            out.push_str(&format!(
                "  concat [{}] -> {}\n",
                w.join(", "),
                widths.iter().sum::<usize>()
            ));
        }
        out.push_str(&format!(
            "  dense {}->{} sigmoid params={}\n",
            self.dense.in_dim(),
            self.dense.out_dim(),
            self.dense.param_count()
        ));
        out.push_str(&format!("  total params {}\n", self.param_count()));
        out
    }
}

/// Label 1 iff probability ≥ threshold.
pub fn predict(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p >= threshold)).collect()
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"DMMCKPT\0";
const CHECKPOINT_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format {
                path: "checkpoint".into(),
                offset: self.pos as u64,
                message: "truncated checkpoint".into(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let at = self.pos;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format {
            path: "checkpoint".into(),
            offset: at as u64,
            message: "name is not UTF-8".into(),
        })
    }
}

impl ModelGraph {
    /// Writes the checkpoint layout documented in `docs/checkpoint.md`.
    pub fn save<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        put_u32(&mut w, CHECKPOINT_VERSION)?;
        put_str(&mut w, self.kind.name())?;
        put_u64(&mut w, self.dim_w as u64)?;
        put_u64(&mut w, self.dim_a as u64)?;
        put_u64(&mut w, self.seed)?;
        let (units, rd) = self
            .lstm
            .as_ref()
            .map_or((0, 0.0), |l| (l.units, l.recurrent_dropout));
        let id = self.lstm.as_ref().map_or(0.0, |l| l.dropout);
        put_u32(&mut w, units as u32)?;
        w.write_all(&id.to_le_bytes())?;
        w.write_all(&rd.to_le_bytes())?;
        w.write_all(&self.audio_dropout.unwrap_or(0.0).to_le_bytes())?;
        let params = self.named_params();
        put_u32(&mut w, params.len() as u32)?;
        for (name, t) in params {
            put_str(&mut w, name)?;
            put_u32(&mut w, t.shape().len() as u32)?;
            for &d in t.shape() {
                put_u64(&mut w, d as u64)?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<ModelGraph> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| Error::io("checkpoint", e))?;
        let mut rd = Reader { buf: &buf, pos: 0 };
        let bad = |offset: usize, m: &str| Error::Format {
            path: "checkpoint".into(),
            offset: offset as u64,
            message: m.to_string(),
        };
        if rd.take(8)? != CHECKPOINT_MAGIC {
            return Err(bad(0, "bad magic"));
        }
        if rd.u32()? != CHECKPOINT_VERSION {
            return Err(bad(8, "unsupported checkpoint version"));
        }
        let kind: ModelKind = rd.string()?.parse()?;
        let dim_w = rd.u64()? as usize;
        let dim_a = rd.u64()? as usize;
        let seed = rd.u64()?;
        let units = rd.u32()? as usize;
        let in_drop = rd.f64()?;
        let rec_drop = rd.f64()?;
        let audio_drop = rd.f64()?;
        let mut g = build_model_with(kind, dim_w, dim_a, seed, units.max(1), in_drop)?;
        if let Some(l) = &mut g.lstm {
            l.recurrent_dropout = rec_drop;
        }
        if g.audio_dropout.is_some() {
            g.audio_dropout = Some(audio_drop);
        }
        let n = rd.u32()? as usize;
        let expected: Vec<(&'static str, Vec<usize>)> = g
            .named_params()
            .iter()
            .map(|(name, t)| (*name, t.shape().to_vec()))
            .collect();
        if n != expected.len() {
            return Err(bad(rd.pos, "parameter count does not match model kind"));
        }
        let mut tensors = Vec::with_capacity(n);
        for (name, shape) in &expected {
            let at = rd.pos;
            if rd.string()? != *name {
                return Err(bad(at, &format!("expected tensor {name}")));
            }
            let ndim = rd.u32()? as usize;
            let dims = (0..ndim)
                .map(|_| rd.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if &dims != shape {
                return Err(bad(
                    at,
                    &format!("{name}: shape {dims:?}, expected {shape:?}"),
                ));
            }
            let data = (0..shape.iter().product::<usize>())
                .map(|_| rd.f64())
                .collect::<Result<Vec<_>>>()?;
            tensors.push(data);
        }
        if rd.pos != buf.len() {
            return Err(bad(rd.pos, "trailing bytes"));
        }
        for (dst, src) in g.params_mut().into_iter().zip(tensors) {
            dst.copy_from_slice(&src);
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::sigmoid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_batch(lens: &[usize], dim_w: usize, dim_a: usize, frames: &[usize]) -> Batch {
        let b = lens.len();
        let l = *lens.iter().max().unwrap();
        let t = *frames.iter().max().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut word = Tensor::zeros(&[b, l, dim_w]);
        let mut time = Tensor::zeros(&[b, l, 2]);
        let mut audio = Tensor::zeros(&[b, t, dim_a]);
        let mut seq_mask = vec![false; b * l];
        let mut audio_mask = vec![false; b * t];
        for i in 0..b {
            for s in 0..lens[i] {
                seq_mask[i * l + s] = true;
                for k in 0..dim_w {
                    word.row_mut(i)[s * dim_w + k] = rng.random_range(-1.0..1.0);
                }
                time.row_mut(i)[2 * s] = 0.3 * s as f64;
                time.row_mut(i)[2 * s + 1] = 0.3 * s as f64 + 0.25;
            }
            for s in 0..frames[i] {
                audio_mask[i * t + s] = true;
                for k in 0..dim_a {
                    audio.row_mut(i)[s * dim_a + k] = rng.random_range(-1.0..1.0);
                }
            }
        }
        Batch {
            rows: (0..b).collect(),
            labels: (0..b).map(|i| (i % 2) as f64).collect(),
            seq_len: l,
            seq_mask,
            word: Some(word),
            time: Some(time),
            audio_len: t,
            audio_mask,
            audio: Some(audio),
        }
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(
            build_model(ModelKind::Text, 300, 768, 0)
                .unwrap()
                .param_count(),
            20_305
        );
        assert_eq!(
            build_model(ModelKind::TextTime, 300, 768, 0)
                .unwrap()
                .param_count(),
            20_416 + 17
        );
        let audio = build_model(ModelKind::Audio, 300, 768, 0).unwrap();
        assert!(audio.lstm.is_none());
        assert_eq!(audio.param_count(), 769);
        let at = build_model(ModelKind::AudioTime, 300, 768, 0).unwrap();
        assert_eq!(at.lstm.as_ref().unwrap().input_dim(), 2);
        assert_eq!(at.dense.in_dim(), 16 + 768);
    }

    #[test]
    fn unknown_kind_lists_valid() {
        let e = "audio_video".parse::<ModelKind>().unwrap_err().to_string();
        assert!(e.contains("audio_text_time"), "{e}");
        assert_eq!(
            "Audio+Text+Time".parse::<ModelKind>().unwrap(),
            ModelKind::AudioTextTime
        );
    }

    #[test]
    fn zero_params_give_half() {
        for kind in ModelKind::ALL {
            let mut g = build_model(kind, 4, 3, 1).unwrap();
            for p in g.params_mut() {
                p.fill(0.0);
            }
            let (probs, _) = g
                .forward(
                    &toy_batch(&[2, 3], 4, 3, &[2, 1]),
                    false,
                    &mut ChaCha8Rng::seed_from_u64(0),
                )
                .unwrap();
            assert!(probs.iter().all(|&p| p == 0.5), "{kind}");
        }
    }

    #[test]
    fn missing_channel_is_error() {
        let g = build_model(ModelKind::AudioText, 4, 3, 1).unwrap();
        let mut b = toy_batch(&[2], 4, 3, &[2]);
        b.audio = None;
        assert!(g
            .forward(&b, false, &mut ChaCha8Rng::seed_from_u64(0))
            .is_err());
    }

    #[test]
    fn one_unit_text_graph_matches_scalar_transcription() {
        let mut g = build_model_with(ModelKind::Text, 1, 0, 0, 1, 0.0).unwrap();
        let (wi, wf, wg, wo) = (0.5, -0.3, 0.8, 0.1);
        let (ui, uf, ug, uo) = (0.2, 0.4, -0.6, 0.9);
        let (bi, bf, bg, bo) = (0.05, 1.0, -0.1, 0.2);
        let (dw, db) = (1.7, -0.4);
        {
            let ps = g.params_mut();
            let mut it = ps.into_iter();
            it.next().unwrap().copy_from_slice(&[wi, wf, wg, wo]);
            it.next().unwrap().copy_from_slice(&[ui, uf, ug, uo]);
            it.next().unwrap().copy_from_slice(&[bi, bf, bg, bo]);
            it.next().unwrap().copy_from_slice(&[dw]);
            it.next().unwrap().copy_from_slice(&[db]);
        }
        let xs = [0.7, -1.3];
        let mut b = toy_batch(&[2], 1, 1, &[1]);
        b.word = Some(Tensor::from_vec(&[1, 2, 1], xs.to_vec()).unwrap());
        let (probs, _) = g
            .forward(&b, false, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();

        let (mut h, mut c) = (0.0f64, 0.0f64);
        for x in xs {
            let i = sigmoid(wi * x + ui * h + bi);
            let f = sigmoid(wf * x + uf * h + bf);
            let gg = (wg * x + ug * h + bg).tanh();
            let o = sigmoid(wo * x + uo * h + bo);
            c = f * c + i * gg;
            h = o * c.tanh();
        }
        let expect = sigmoid(dw * h + db);
        assert!((probs[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn stale_cache_rejected() {
        let mut g = build_model(ModelKind::Text, 4, 3, 1).unwrap();
        let (_, cache) = g
            .forward(
                &toy_batch(&[2], 4, 3, &[1]),
                false,
                &mut ChaCha8Rng::seed_from_u64(0),
            )
            .unwrap();
        g.params_mut();
        assert!(g.backward(&cache, &[1.0]).is_err());
    }

    #[test]
    fn inference_is_deterministic() {
        let g = build_model(ModelKind::AudioTextTime, 4, 3, 1).unwrap();
        let b = toy_batch(&[2, 3], 4, 3, &[2, 1]);
        let a = g
            .forward(&b, false, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap()
            .0;
        let c = g
            .forward(&b, false, &mut ChaCha8Rng::seed_from_u64(99))
            .unwrap()
            .0;
        assert_eq!(a, c);
        assert!(a.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_identical() {
        for kind in ModelKind::ALL {
            let g = build_model(kind, 4, 3, 7).unwrap();
            let mut buf = Vec::new();
            g.save(&mut buf).unwrap();
            let h = ModelGraph::load(&buf[..]).unwrap();
            let b = toy_batch(&[3, 1], 4, 3, &[2, 2]);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let pa = g.forward(&b, false, &mut rng).unwrap().0;
            let pb = h.forward(&b, false, &mut rng).unwrap().0;
            assert_eq!(
                pa.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                pb.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            let mut buf2 = Vec::new();
            h.save(&mut buf2).unwrap();
            assert_eq!(buf, buf2);
        }
        assert!(ModelGraph::load(&b"NOTACKPT"[..]).is_err());
    }

    #[test]
    fn predict_threshold() {
        assert_eq!(predict(&[0.5, 0.49], 0.5), vec![1, 0]);
        assert_eq!(predict(&[0.6], 0.7), vec![0]);
    }

    #[test]
    fn describe_lists_layers() {
        let d = build_model(ModelKind::AudioTextTime, 300, 768, 0)
            .unwrap()
            .describe();
        assert!(
            d.contains("lstm units=16 dropout=0.2 recurrent_dropout=0.2"),
            "{d}"
        );
        assert!(d.contains("mean_pool_time -> [768]"));
        assert!(d.contains("concat [16, 768] -> 784"));
        assert!(d.contains("dense 784->1 sigmoid"));
    }
}
