//! Frozen pretrained inputs: word-embedding tables, audio feature sequences
//! (the AEMB container), and the conversion of sentence tokens into matrices.
//!
//! Files store 32-bit floats; everything is widened to `f64` on load.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::chat::Token;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Binary,
    Text,
}

impl EmbeddingFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "binary" | "bin" => Some(EmbeddingFormat::Binary),
            "text" | "txt" => Some(EmbeddingFormat::Text),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddingTable {
    dim: usize,
    vocab: HashMap<String, usize>,
    words: Vec<String>,
    vectors: Vec<f64>,
    /// Number of repeated words overwritten while loading.
    pub duplicates: usize,
}

impl WordEmbeddingTable {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        WordEmbeddingTable {
            dim,
            vocab: HashMap::new(),
            words: Vec::new(),
            vectors: Vec::new(),
            duplicates: 0,
        }
    }

    /// Inserts or overwrites a word. Returns true when the word was already present.
    pub fn insert(&mut self, word: &str, vector: &[f64]) -> bool {
        assert_eq!(vector.len(), self.dim);
        if let Some(&i) = self.vocab.get(word) {
            self.vectors[i * self.dim..(i + 1) * self.dim].copy_from_slice(vector);
            self.duplicates += 1;
            true
        } else {
            self.vocab.insert(word.to_string(), self.words.len());
            self.words.push(word.to_string());
            self.vectors.extend_from_slice(vector);
            false
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vocab
            .get(word)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vocab.contains_key(word)
    }

    /// Words in insertion order.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for (i, word) in self.words.iter().enumerate() {
            w.write_all(word.as_bytes())?;
            w.write_all(b" ")?;
            for &v in &self.vectors[i * self.dim..(i + 1) * self.dim] {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, word) in self.words.iter().enumerate() {
            write!(w, "{word}")?;
            for &v in &self.vectors[i * self.dim..(i + 1) * self.dim] {
                write!(w, " {}", v as f32)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn fmt_err(name: &str, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: name.to_string(),
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn load_word_embeddings(path: &Path, format: EmbeddingFormat) -> Result<WordEmbeddingTable> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let table = match format {
        EmbeddingFormat::Binary => read_binary_embeddings(&bytes, &name)?,
        EmbeddingFormat::Text => read_text_embeddings(&bytes, &name)?,
    };
    if table.duplicates > 0 {
        log::warn!(
            "{name}: {} duplicate words, last occurrence kept",
            table.duplicates
        );
    }
    Ok(table)
}

/// word2vec binary layout: `"V D\n"` then V records of `word`, a space, and D
/// little-endian f32 values. A newline before a word (as written by the
/// reference tool) is tolerated.
pub fn read_binary_embeddings(bytes: &[u8], name: &str) -> Result<WordEmbeddingTable> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| fmt_err(name, 0, "missing header line"))?;
    let header =
        std::str::from_utf8(&bytes[..nl]).map_err(|_| fmt_err(name, 0, "header is not UTF-8"))?;
    let mut parts = header.split_whitespace();
    let mut field = |what: &str| -> Result<usize> {
        parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fmt_err(name, 0, format!("header: bad {what}")))
    };
    let n_words = field("vocabulary size")?;
    let dim = field("dimension")?;
    if dim == 0 {
        return Err(fmt_err(name, 0, "dimension must be positive"));
    }

    let mut table = WordEmbeddingTable::new(dim);
    let mut pos = nl + 1;
    let mut row = vec![0.0; dim];
    for _ in 0..n_words {
        while pos < bytes.len() && (bytes[pos] == b'\n' || bytes[pos] == b'\r') {
            pos += 1;
        }
        let word_start = pos;
        let sp = bytes[pos..]
            .iter()
            .position(|&b| b == b' ')
            .ok_or_else(|| fmt_err(name, word_start, "truncated file: expected word"))?;
        let word = std::str::from_utf8(&bytes[pos..pos + sp])
            .map_err(|_| fmt_err(name, word_start, "word is not valid UTF-8"))?;
        pos += sp + 1;
        let need = dim * 4;
        if bytes.len() - pos < need {
            return Err(fmt_err(
                name,
                pos,
                format!(
                    "truncated file: word {word:?} needs {need} bytes, {} remain",
                    bytes.len() - pos
                ),
            ));
        }
        for (j, chunk) in bytes[pos..pos + need].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(fmt_err(
                    name,
                    pos + 4 * j,
                    format!("non-finite value in {word:?}"),
                ));
            }
            row[j] = v as f64;
        }
        pos += need;
        table.insert(word, &row);
    }
    Ok(table)
}

/// One `word f1 ... fD` line per entry. An optional leading `V D` header line is skipped.
pub fn read_text_embeddings(bytes: &[u8], name: &str) -> Result<WordEmbeddingTable> {
    let mut table: Option<WordEmbeddingTable> = None;
    let mut offset = 0usize;
    let mut first = true;
    for line in bytes.split_inclusive(|&b| b == b'\n') {
        let line_offset = offset;
        offset += line.len();
        let text = std::str::from_utf8(line)
            .map_err(|_| fmt_err(name, line_offset, "line is not valid UTF-8"))?
            .trim_end();
        if text.is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split(' ').filter(|s| !s.is_empty()).collect();
        if first {
            first = false;
            if fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
                continue;
            }
        }
        if fields.len() < 2 {
            return Err(fmt_err(
                name,
                line_offset,
                "expected a word followed by values",
            ));
        }
        let values = fields[1..]
            .iter()
            .map(|f| match f.parse::<f32>() {
                Ok(v) if v.is_finite() => Ok(v as f64),
                _ => Err(fmt_err(name, line_offset, format!("bad value {f:?}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        let t = table.get_or_insert_with(|| WordEmbeddingTable::new(values.len()));
        if values.len() != t.dim() {
            return Err(fmt_err(
                name,
                line_offset,
                format!(
                    "dimension mismatch: expected {}, found {}",
                    t.dim(),
                    values.len()
                ),
            ));
        }
        t.insert(fields[0], &values);
    }
    table.ok_or_else(|| fmt_err(name, 0, "empty embedding file"))
}

/// Looks up each token; out-of-vocabulary tokens keep their position as a zero row.
/// Returns the row-major `L x dim` matrix and the OOV mask.
pub fn embed_tokens<'a, I>(tokens: I, table: &WordEmbeddingTable) -> (Vec<f64>, Vec<bool>)
where
    I: IntoIterator<Item = &'a str>,
{
    let mut matrix = Vec::new();
    let mut oov = Vec::new();
    for tok in tokens {
        match table.get(tok) {
            Some(v) => {
                matrix.extend_from_slice(v);
                oov.push(false);
            }
            None => {
                matrix.extend(std::iter::repeat_n(0.0, table.dim()));
                oov.push(true);
            }
        }
    }
    (matrix, oov)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoTimestamps;

impl std::fmt::Display for NoTimestamps {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("sentence has tokens without timestamps")
    }
}

/// Per-word `(start_s, end_s)` relative to the first word's start.
pub fn normalize_timestamps(tokens: &[Token]) -> std::result::Result<Vec<[f64; 2]>, NoTimestamps> {
    let spans: Vec<(u64, u64)> = tokens
        .iter()
        .map(|t| t.span())
        .collect::<Option<_>>()
        .ok_or(NoTimestamps)?;
    let origin = spans.first().ok_or(NoTimestamps)?.0 as i64;
    Ok(spans
        .iter()
        .map(|&(s, e)| {
            [
                (s as i64 - origin) as f64 / 1000.0,
                (e as i64 - origin) as f64 / 1000.0,
            ]
        })
        .collect())
}

pub const AEMB_MAGIC: &[u8; 4] = b"AEMB";
pub const AEMB_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioFeatureSequence {
    pub dim: usize,
    /// Row-major `T x dim`.
    pub frames: Vec<f64>,
    pub sentence_key: String,
}

impl AudioFeatureSequence {
    pub fn len(&self) -> usize {
        self.frames.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t * self.dim..(t + 1) * self.dim]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.frames.len() * 4);
        out.extend_from_slice(AEMB_MAGIC);
        out.extend_from_slice(&AEMB_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for &v in &self.frames {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }
}

/// Parses an AEMB container: magic, version, dim, frame count (all u32 LE), then f32 LE frames.
pub fn read_audio_features(bytes: &[u8], key: &str) -> Result<AudioFeatureSequence> {
    if bytes.len() < 16 {
        return Err(fmt_err(key, bytes.len(), "truncated header"));
    }
    if &bytes[..4] != AEMB_MAGIC {
        return Err(fmt_err(key, 0, "bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != AEMB_VERSION {
        return Err(fmt_err(key, 4, format!("unsupported version {version}")));
    }
    let dim = u32_at(8) as usize;
    let frames = u32_at(12) as usize;
    if dim == 0 {
        return Err(fmt_err(key, 8, "dimension must be positive"));
    }
    if frames == 0 {
        return Err(fmt_err(key, 12, "empty feature sequence"));
    }
    let expected = dim * frames * 4;
    if bytes.len() - 16 != expected {
        return Err(fmt_err(
            key,
            16,
            format!(
                "payload length mismatch: expected {expected} bytes, found {}",
                bytes.len() - 16
            ),
        ));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let v = f32::from_le_bytes(c.try_into().unwrap());
            if v.is_finite() {
                Ok(v as f64)
            } else {
                Err(fmt_err(key, 16 + 4 * i, "non-finite value"))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(AudioFeatureSequence {
        dim,
        frames: data,
        sentence_key: key.to_string(),
    })
}

pub fn load_audio_features(path: &Path) -> Result<AudioFeatureSequence> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_audio_features(&bytes, &path.display().to_string())
}

/// Location of the features for utterance `index` inside a transcript's audio directory.
pub fn audio_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("{index}.aemb"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_fixture() -> Vec<u8> {
        let mut b = b"2 3\n".to_vec();
        b.extend_from_slice(b"the ");
        for v in [0.1f32, 0.2, 0.3] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(b"boy ");
        for v in [1.0f32, 0.0, 0.0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn hand_encoded_binary() {
        let t = read_binary_embeddings(&binary_fixture(), "x").unwrap();
        assert_eq!((t.dim(), t.len()), (3, 2));
        assert_eq!(
            t.get("the").unwrap(),
            &[0.1f32 as f64, 0.2f32 as f64, 0.3f32 as f64]
        );
        assert_eq!(t.get("boy").unwrap(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn binary_truncated() {
        let mut b = b"1 3\nthe ".to_vec();
        b.extend_from_slice(&1.0f32.to_le_bytes());
        b.extend_from_slice(&2.0f32.to_le_bytes());
        let e = read_binary_embeddings(&b, "x").unwrap_err().to_string();
        assert!(
            e.contains("truncated") && e.contains("byte offset 8"),
            "{e}"
        );
    }

    #[test]
    fn binary_non_utf8_and_nan() {
        let mut b = b"1 1\n\xff\xfe ".to_vec();
        b.extend_from_slice(&1.0f32.to_le_bytes());
        assert!(read_binary_embeddings(&b, "x")
            .unwrap_err()
            .to_string()
            .contains("UTF-8"));
        let mut b = b"1 1\na ".to_vec();
        b.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(read_binary_embeddings(&b, "x")
            .unwrap_err()
            .to_string()
            .contains("non-finite"));
    }

    #[test]
    fn text_single_entry() {
        let t = read_text_embeddings(b"a 1.0 2.0\n", "x").unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.get("a").unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn text_dim_mismatch_and_duplicates() {
        let e = read_text_embeddings(b"a 1 2\nb 1\n", "x")
            .unwrap_err()
            .to_string();
        assert!(e.contains("byte offset 6") && e.contains("mismatch"), "{e}");
        let t = read_text_embeddings(b"2 1\na 1\na 5\n", "x").unwrap();
        assert_eq!((t.len(), t.duplicates), (1, 1));
        assert_eq!(t.get("a").unwrap(), &[5.0]);
    }

    #[test]
    fn oov_rows_are_zero() {
        let t = read_text_embeddings(b"a 1.0 2.0\n", "x").unwrap();
        assert_eq!(embed_tokens(["a"], &t), (vec![1.0, 2.0], vec![false]));
        assert_eq!(embed_tokens(["zzzq"], &t), (vec![0.0, 0.0], vec![true]));
        assert_eq!(
            embed_tokens(["a", "zzzq"], &t),
            (vec![1.0, 2.0, 0.0, 0.0], vec![false, true])
        );
    }

    #[test]
    fn timestamps_normalized() {
        let toks = [Token::timed("a", 1200, 1500), Token::timed("b", 1500, 2100)];
        assert_eq!(
            normalize_timestamps(&toks).unwrap(),
            vec![[0.0, 0.3], [0.3, 0.9]]
        );
        assert_eq!(
            normalize_timestamps(&[Token::timed("a", 500, 900)]).unwrap(),
            vec![[0.0, 0.4]]
        );
        assert_eq!(
            normalize_timestamps(&[Token::untimed("a")]),
            Err(NoTimestamps)
        );
    }

    #[test]
    fn aemb_hand_encoded() {
        let mut b = b"AEMB".to_vec();
        for v in [1u32, 2, 2] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for v in [1.0f32, 3.0, 3.0, 5.0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        let a = read_audio_features(&b, "k").unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a.frame(0), &[1.0, 3.0]);
        assert_eq!(a.frame(1), &[3.0, 5.0]);
        assert_eq!(a.to_bytes(), b);
    }

    #[test]
    fn aemb_errors() {
        let mut b = b"AEMB".to_vec();
        for v in [1u32, 2, 0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        assert!(read_audio_features(&b, "k")
            .unwrap_err()
            .to_string()
            .contains("empty feature sequence"));
        b[..4].copy_from_slice(b"XXXX");
        assert!(read_audio_features(&b, "k")
            .unwrap_err()
            .to_string()
            .contains("bad magic"));
        let mut b = b"AEMB".to_vec();
        for v in [2u32, 1, 1] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        assert!(read_audio_features(&b, "k")
            .unwrap_err()
            .to_string()
            .contains("version"));
        let mut b = b"AEMB".to_vec();
        for v in [1u32, 1, 2] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&1.0f32.to_le_bytes());
        assert!(read_audio_features(&b, "k")
            .unwrap_err()
            .to_string()
            .contains("mismatch"));
    }
}
