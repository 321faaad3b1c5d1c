//! Embedding vectors, labeled image datasets, prompt sets and the
//! image-by-prompt cosine similarity matrix.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};

/// Relative deviation from unit norm tolerated at ingestion. Inputs inside
/// the band are re-normalized, inputs outside it are rejected.
pub const NORM_TOLERANCE: f64 = 0.01;

/// Vectors this close to unit norm are stored as given, so a vector read
/// back from a 9-digit file keeps its digits.
const UNIT_SLACK: f64 = 1e-8;

/// A unit-normalized vector in the joint image/text embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Validates and re-normalizes a vector that is already close to unit
    /// length (within [`NORM_TOLERANCE`]).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let norm = checked_norm(&values)?;
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::invalid_embedding(format!(
                "norm {norm:.6} deviates from 1 by more than {NORM_TOLERANCE}"
            )));
        }
        if (norm - 1.0).abs() <= UNIT_SLACK {
            return Ok(EmbeddingVector(values));
        }
        Ok(Self::scaled(values, norm))
    }

    /// Normalizes any finite, non-zero vector to unit length.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let norm = checked_norm(&values)?;
        if norm == 0.0 {
            return Err(Error::invalid_embedding("zero vector"));
        }
        Ok(Self::scaled(values, norm))
    }

    fn scaled(mut values: Vec<f64>, norm: f64) -> Self {
        values.iter_mut().for_each(|x| *x /= norm);
        EmbeddingVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

fn checked_norm(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid_embedding("empty vector"));
    }
    if let Some(i) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::invalid_embedding(format!(
            "component {i} is not finite"
        )));
    }
    Ok(values.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Binary state label. `Positive` is the state the recognizer reports with
/// a score above threshold (e.g. "open").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn from_sign(value: i64) -> Result<Self> {
        match value {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(Error::InvalidLabel(other)),
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.sign())
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.sign())
    }
}

/// Fails unless both classes occur at least `min_each` times.
pub fn require_classes(labels: &[Label], min_each: usize) -> Result<()> {
    let pos = labels.iter().filter(|l| **l == Label::Positive).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    for (label, found) in [(Label::Positive, pos), (Label::Negative, neg)] {
        if found < min_each {
            return Err(Error::InsufficientClass {
                label: label.sign(),
                needed: min_each,
                found,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub id: String,
    pub label: Label,
    pub embedding: EmbeddingVector,
}

/// Image embeddings with binary state labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    items: Vec<DatasetItem>,
}

impl LabeledDataset {
    pub fn new(dim: usize, items: Vec<DatasetItem>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("dim must be positive".into()));
        }
        if items.len() < 2 {
            return Err(Error::Empty("dataset needs at least 2 items"));
        }
        let mut seen = HashSet::new();
        for item in &items {
            if !seen.insert(item.id.as_str()) {
                return Err(Error::Duplicate {
                    kind: "item id",
                    value: item.id.clone(),
                });
            }
            check_dim(dim, &item.embedding).map_err(|e| e.for_item(&item.id))?;
        }
        Ok(Self { dim, items })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[DatasetItem] {
        &self.items
    }

    pub fn labels(&self) -> Vec<Label> {
        self.items.iter().map(|it| it.label).collect()
    }

    pub fn embeddings(&self) -> Vec<&EmbeddingVector> {
        self.items.iter().map(|it| &it.embedding).collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.items.iter().filter(|it| it.label == label).count()
    }

    pub fn item(&self, id: &str) -> Option<&DatasetItem> {
        self.items.iter().find(|it| it.id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub text: String,
    pub polarity: Label,
    pub embedding: EmbeddingVector,
}

/// Prompt texts tagged with the state they describe, plus their embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    dim: usize,
    prompts: Vec<Prompt>,
}

impl PromptSet {
    pub fn new(dim: usize, prompts: Vec<Prompt>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("dim must be positive".into()));
        }
        if prompts.is_empty() {
            return Err(Error::Empty("prompt set"));
        }
        let mut seen = HashSet::new();
        for p in &prompts {
            if !seen.insert(p.text.as_str()) {
                return Err(Error::Duplicate {
                    kind: "prompt text",
                    value: p.text.clone(),
                });
            }
            check_dim(dim, &p.embedding).map_err(|e| e.for_item(&p.text))?;
        }
        Ok(Self { dim, prompts })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    pub fn prompts(&self) -> &[Prompt] {
        &self.prompts
    }

    pub fn texts(&self) -> Vec<&str> {
        self.prompts.iter().map(|p| p.text.as_str()).collect()
    }

    pub fn polarities(&self) -> Vec<Label> {
        self.prompts.iter().map(|p| p.polarity).collect()
    }

    pub fn embeddings(&self) -> Vec<&EmbeddingVector> {
        self.prompts.iter().map(|p| &p.embedding).collect()
    }
}

fn check_dim(dim: usize, v: &EmbeddingVector) -> Result<()> {
    if v.dim() != dim {
        return Err(Error::invalid_embedding(format!(
            "dimension {} does not match declared dim {dim}",
            v.dim()
        )));
    }
    Ok(())
}

/// Row-major `T x N_P` matrix of image/prompt cosine similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Entries must be finite and lie in [-1, 1] (with 1e-6 slack).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("similarity matrix rows"));
        }
        let cols = rows[0].len();
        if cols == 0 {
            return Err(Error::Empty("similarity matrix columns"));
        }
        let n_rows = rows.len();
        let mut values = Vec::with_capacity(n_rows * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::LengthMismatch {
                    what: "similarity row",
                    left: row.len(),
                    right: cols,
                });
            }
            if let Some(x) = row.iter().find(|x| !(x.abs() <= 1.0 + 1e-6)) {
                return Err(Error::InvalidConfig(format!(
                    "similarity {x} outside [-1, 1]"
                )));
            }
            values.extend(row);
        }
        Ok(Self {
            rows: n_rows,
            cols,
            values,
        })
    }

    /// Cosine similarity of every image against every prompt.
    pub fn from_embeddings(
        images: &[&EmbeddingVector],
        prompts: &[&EmbeddingVector],
    ) -> Result<Self> {
        if prompts.is_empty() {
            return Err(Error::Empty("prompt embeddings"));
        }
        if images.is_empty() {
            return Err(Error::Empty("image embeddings"));
        }
        let mut values = Vec::with_capacity(images.len() * prompts.len());
        for v in images {
            for p in prompts {
                values.push(cosine_similarity(v, p)?);
            }
        }
        Ok(Self {
            rows: images.len(),
            cols: prompts.len(),
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.cols..(t + 1) * self.cols]
    }

    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.values[t * self.cols + i]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols)
    }
}

/// Dot product of two unit vectors.
pub fn cosine_similarity(v: &EmbeddingVector, p: &EmbeddingVector) -> Result<f64> {
    if v.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: v.dim(),
            found: p.dim(),
        });
    }
    Ok(v.as_slice()
        .iter()
        .zip(p.as_slice())
        .map(|(a, b)| a * b)
        .sum())
}

pub fn similarity_matrix(dataset: &LabeledDataset, prompts: &PromptSet) -> Result<SimilarityMatrix> {
    if dataset.dim() != prompts.dim() {
        return Err(Error::DimensionMismatch {
            expected: prompts.dim(),
            found: dataset.dim(),
        });
    }
    SimilarityMatrix::from_embeddings(&dataset.embeddings(), &prompts.embeddings())
}

const ARTICLES: [&str; 4] = ["an", "the", "this", "that"];

/// Article variants of a noun phrase: "a/an", "the", "this", "that".
///
/// The indefinite article is "an" when the phrase starts with a vowel
/// letter and "a" otherwise; no phonetic lookup is attempted.
pub fn expand_prompt_variants(base: &str) -> Result<Vec<String>> {
    let base = base.trim();
    let first = base
        .chars()
        .next()
        .ok_or(Error::Empty("base phrase"))?
        .to_ascii_lowercase();
    let vowel = matches!(first, 'a' | 'e' | 'i' | 'o' | 'u');
    Ok(ARTICLES
        .iter()
        .map(|&article| {
            let article = if article == "an" && !vowel { "a" } else { article };
            format!("{article} {base}")
        })
        .collect())
}
