//! Per-utterance input representation: text, speaker, position and
//! semantic-type segments concatenated in that order.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::corpus::Conversation;
use crate::error::{Error, Result};
use crate::extract::{mentions_to_semantic_types, ConceptDictionary};
use crate::nn::Tensor;
use crate::rng::SplitMix64;
use crate::text::tokenize;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| (h ^ *b as u64).wrapping_mul(FNV_PRIME))
}

fn hash_into(out: &mut [f64], feature: &str) {
    let h = fnv1a64(feature.as_bytes());
    let bucket = (h % out.len() as u64) as usize;
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    out[bucket] += sign;
}

/// Signed feature hashing of tokens and their character trigrams, mean
/// pooled over tokens and L2-normalized. Empty text maps to zeros.
pub fn encode_text_hashed(text: &str, dim: usize) -> Vec<f64> {
    assert!(dim >= 1, "hashed encoder dimension must be positive");
    let mut out = vec![0.0; dim];
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return out;
    }
    let mut buf = String::new();
    for token in &tokens {
        hash_into(&mut out, token);
        let chars: Vec<char> = token.chars().collect();
        for tri in chars.windows(3) {
            buf.clear();
            buf.extend(tri);
            hash_into(&mut out, &buf);
        }
    }
    let n = tokens.len() as f64;
    out.iter_mut().for_each(|x| *x /= n);
    let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|x| *x /= norm);
    }
    out
}

/// Bin of utterance `index` when `n` utterances are cut into `k` equal parts.
pub fn position_bin(index: usize, n: usize, k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::invalid("number of position bins must be positive"));
    }
    if index >= n {
        return Err(Error::invalid(format!("utterance index {index} outside conversation of {n}")));
    }
    Ok(((k * index) / n).min(k - 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub text_dim: usize,
    pub speaker_dim: usize,
    pub position_dim: usize,
    pub position_bins: usize,
    pub semantic_dim: usize,
    /// Rows of the semantic-type table.
    pub semantic_types: usize,
    /// Candidate threshold for semantic-type mentions.
    pub jaccard_min: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            text_dim: 64,
            speaker_dim: 8,
            position_dim: 4,
            position_bins: 4,
            semantic_dim: 8,
            semantic_types: 127,
            jaccard_min: crate::extract::DEFAULT_JACCARD_MIN,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.text_dim,
            self.speaker_dim,
            self.position_dim,
            self.position_bins,
            self.semantic_dim,
            self.semantic_types,
        ];
        if dims.iter().any(|d| *d == 0) {
            return Err(Error::Config("feature dimensions and bin count must be >= 1".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout::new(self.text_dim, self.speaker_dim, self.position_dim, self.semantic_dim)
    }

    pub fn feature_dim(&self) -> usize {
        self.layout().total
    }
}

/// Offsets of the four contiguous segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub text: usize,
    pub speaker: usize,
    pub position: usize,
    pub semantic: usize,
    pub total: usize,
}

impl FeatureLayout {
    pub fn new(text_dim: usize, speaker_dim: usize, position_dim: usize, semantic_dim: usize) -> Self {
        Self {
            text: 0,
            speaker: text_dim,
            position: text_dim + speaker_dim,
            semantic: text_dim + speaker_dim + position_dim,
            total: text_dim + speaker_dim + position_dim + semantic_dim,
        }
    }
}

/// A lookup table of trainable row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub weights: Tensor,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            weights: Tensor::zeros(&[rows, dim]),
        }
    }

    /// Uniform in [-0.1, 0.1].
    pub fn random(rows: usize, dim: usize, rng: &mut SplitMix64) -> Self {
        Self {
            weights: Tensor::uniform(&[rows, dim], 0.1, rng),
        }
    }

    pub fn rows(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn row(&self, i: usize) -> Result<&[f64]> {
        if i >= self.rows() {
            return Err(Error::invalid(format!("embedding index {i} >= {} rows", self.rows())));
        }
        Ok(self.weights.row(i))
    }
}

/// Mean of the mentioned semantic-type rows; zeros when nothing is mentioned.
pub fn semantic_type_vector(mentions: &[usize], table: &EmbeddingTable) -> Result<Vec<f64>> {
    let mut out = vec![0.0; table.dim()];
    if mentions.is_empty() {
        return Ok(out);
    }
    for &t in mentions {
        for (o, w) in out.iter_mut().zip(table.row(t)?) {
            *o += w;
        }
    }
    let n = mentions.len() as f64;
    out.iter_mut().for_each(|x| *x /= n);
    Ok(out)
}

/// Trainable categorical tables for the context segments.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTables {
    pub speaker: EmbeddingTable,
    pub position: EmbeddingTable,
    pub semantic: EmbeddingTable,
}

impl FeatureTables {
    pub fn random(cfg: &FeatureConfig, rng: &mut SplitMix64) -> Self {
        Self {
            speaker: EmbeddingTable::random(3, cfg.speaker_dim, rng),
            position: EmbeddingTable::random(cfg.position_bins, cfg.position_dim, rng),
            semantic: EmbeddingTable::random(cfg.semantic_types, cfg.semantic_dim, rng),
        }
    }

    pub fn zeros(cfg: &FeatureConfig) -> Self {
        Self {
            speaker: EmbeddingTable::zeros(3, cfg.speaker_dim),
            position: EmbeddingTable::zeros(cfg.position_bins, cfg.position_dim),
            semantic: EmbeddingTable::zeros(cfg.semantic_types, cfg.semantic_dim),
        }
    }
}

/// Where utterance text vectors come from.
#[derive(Debug, Clone, Copy)]
pub enum TextSource<'a> {
    Hashed { dim: usize },
    Precomputed(&'a PrecomputedEmbeddings),
}

/// Everything about a conversation the features need that does not depend
/// on trainable weights.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceInputs {
    pub text: Vec<Vec<f64>>,
    pub speakers: Vec<usize>,
    pub bins: Vec<usize>,
    pub mentions: Vec<Vec<usize>>,
}

impl UtteranceInputs {
    pub fn prepare(
        conv: &Conversation,
        cfg: &FeatureConfig,
        text: TextSource<'_>,
        dict: &ConceptDictionary,
    ) -> Result<Self> {
        let n = conv.len();
        let text_vectors = conv
            .utterances
            .iter()
            .map(|u| match text {
                TextSource::Hashed { dim } => Ok(encode_text_hashed(&u.text, dim)),
                TextSource::Precomputed(p) => p.get(&conv.id, u.index).map(<[f64]>::to_vec),
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(v) = text_vectors.iter().find(|v| v.len() != cfg.text_dim) {
            return Err(Error::shape(format!(
                "text vector of length {} but text_dim is {}",
                v.len(),
                cfg.text_dim
            )));
        }
        let mentions = mentions_to_semantic_types(conv, dict, cfg.jaccard_min);
        if let Some(t) = mentions.iter().flatten().find(|t| **t >= cfg.semantic_types) {
            return Err(Error::invalid(format!(
                "semantic type {t} outside table of {} rows",
                cfg.semantic_types
            )));
        }
        Ok(Self {
            text: text_vectors,
            speakers: conv.utterances.iter().map(|u| u.speaker.index()).collect(),
            bins: (0..n)
                .map(|i| position_bin(i, n, cfg.position_bins))
                .collect::<Result<_>>()?,
            mentions,
        })
    }

    pub fn len(&self) -> usize {
        self.text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }

    /// Sub-range of utterances (used for windowing).
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            text: self.text[start..end].to_vec(),
            speakers: self.speakers[start..end].to_vec(),
            bins: self.bins[start..end].to_vec(),
            mentions: self.mentions[start..end].to_vec(),
        }
    }

    /// Assembles the feature vectors. With `no_context` the speaker,
    /// position and semantic segments are zero.
    pub fn features(&self, tables: &FeatureTables, no_context: bool) -> Result<Vec<FeatureBundle>> {
        let layout = FeatureLayout::new(
            self.text.first().map_or(0, Vec::len),
            tables.speaker.dim(),
            tables.position.dim(),
            tables.semantic.dim(),
        );
        (0..self.len())
            .map(|i| {
                let mut v = vec![0.0; layout.total];
                v[..layout.speaker].copy_from_slice(&self.text[i]);
                if !no_context {
                    v[layout.speaker..layout.position].copy_from_slice(tables.speaker.row(self.speakers[i])?);
                    v[layout.position..layout.semantic].copy_from_slice(tables.position.row(self.bins[i])?);
                    v[layout.semantic..].copy_from_slice(&semantic_type_vector(&self.mentions[i], &tables.semantic)?);
                }
                Ok(FeatureBundle { vector: v, layout })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub vector: Vec<f64>,
    pub layout: FeatureLayout,
}

impl FeatureBundle {
    pub fn text(&self) -> &[f64] {
        &self.vector[..self.layout.speaker]
    }
    pub fn speaker(&self) -> &[f64] {
        &self.vector[self.layout.speaker..self.layout.position]
    }
    pub fn position(&self) -> &[f64] {
        &self.vector[self.layout.position..self.layout.semantic]
    }
    pub fn semantic(&self) -> &[f64] {
        &self.vector[self.layout.semantic..]
    }
}

/// One bundle per utterance of `conv`.
pub fn build_features(
    conv: &Conversation,
    cfg: &FeatureConfig,
    tables: &FeatureTables,
    text: TextSource<'_>,
    dict: &ConceptDictionary,
    no_context: bool,
) -> Result<Vec<FeatureBundle>> {
    UtteranceInputs::prepare(conv, cfg, text, dict)?.features(tables, no_context)
}

/// Externally produced utterance embeddings keyed by (conversation id, index).
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedEmbeddings {
    dim: usize,
    vectors: HashMap<(String, usize), Vec<f64>>,
}

impl PrecomputedEmbeddings {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, conv_id: &str, index: usize) -> Result<&[f64]> {
        self.vectors
            .get(&(conv_id.to_string(), index))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::invalid(format!("no embedding for ({conv_id}, {index})")))
    }

    /// Errors on the first utterance of `convs` without a vector.
    pub fn check_covers(&self, convs: &[Conversation]) -> Result<()> {
        for conv in convs {
            for u in &conv.utterances {
                self.get(&conv.id, u.index)?;
            }
        }
        Ok(())
    }

    /// Parses the TSV format `conv_id, utt_idx, d0..d{D-1}` with header.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: "<embeddings>".into(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let header: Vec<&str> = match lines.next() {
            Some((_, h)) => h.trim_end_matches('\r').split('\t').collect(),
            None => return Err(err(1, "missing header".into())),
        };
        if header.len() < 3 || header[0] != "conv_id" || header[1] != "utt_idx" {
            return Err(err(1, "header must start with conv_id\tutt_idx".into()));
        }
        for (j, h) in header[2..].iter().enumerate() {
            if *h != format!("d{j}") {
                return Err(err(1, format!("expected column d{j}, found {h:?}")));
            }
        }
        let dim = header.len() - 2;
        let mut vectors = HashMap::new();
        for (i, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != dim + 2 {
                return Err(err(
                    i + 1,
                    format!("dimension mismatch: expected {dim} values, found {}", cols.len().saturating_sub(2)),
                ));
            }
            let idx: usize = cols[1]
                .parse()
                .map_err(|_| err(i + 1, format!("bad utterance index {:?}", cols[1])))?;
            let v = cols[2..]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|_| err(i + 1, format!("bad value {c:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if vectors.insert((cols[0].to_string(), idx), v).is_some() {
                return Err(err(i + 1, format!("duplicate key ({}, {idx})", cols[0])));
            }
        }
        Ok(Self { dim, vectors })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    /// Writes the TSV format; rows sorted by key.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("conv_id\tutt_idx");
        for j in 0..self.dim {
            out.push_str(&format!("\td{j}"));
        }
        out.push('\n');
        let mut keys: Vec<_> = self.vectors.keys().collect();
        keys.sort();
        for k in keys {
            out.push_str(&format!("{}\t{}", k.0, k.1));
            for x in &self.vectors[k] {
                out.push_str(&format!("\t{x}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_map(vectors: HashMap<(String, usize), Vec<f64>>) -> Result<Self> {
        let dim = vectors.values().next().map_or(0, Vec::len);
        if vectors.values().any(|v| v.len() != dim) {
            return Err(Error::shape("embeddings of mixed lengths".to_string()));
        }
        Ok(Self { dim, vectors })
    }
}

/// Loads precomputed embeddings and checks they cover `convs`.
pub fn load_precomputed_embeddings(
    path: impl AsRef<Path>,
    convs: &[Conversation],
) -> Result<PrecomputedEmbeddings> {
    let emb = PrecomputedEmbeddings::load(path)?;
    emb.check_covers(convs)?;
    Ok(emb)
}
