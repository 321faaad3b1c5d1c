//! Versioned JSON documents for datasets, prompt sets and recognizers.
//!
//! Reals are written with 9 significant digits. Loaders check the
//! `format_version` first and then validate every domain invariant.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::{json, Value};

use crate::embedding::{DatasetItem, EmbeddingVector, Label, LabeledDataset, Prompt, PromptSet};
use crate::error::{Error, Result};
use crate::recognition::WeightVector;
use crate::suite::{Metadata, Method, Recognizer};

pub const FORMAT_VERSION: u64 = 1;

/// Metadata key holding the prompt embeddings a recognizer was built with.
pub const PROMPT_EMBEDDINGS_KEY: &str = "prompt_embeddings";
pub const PROMPT_POLARITIES_KEY: &str = "prompt_polarities";

/// Rounds to 9 significant decimal digits.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn ser_reals<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|&x| round_sig9(x)))
}

fn ser_real<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(round_sig9(*x))
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u64,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format_version: u64,
    dim: usize,
    items: Vec<ItemRecord>,
}

#[derive(Serialize, Deserialize)]
struct ItemRecord {
    id: String,
    label: i64,
    #[serde(serialize_with = "ser_reals")]
    embedding: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PromptsFile {
    format_version: u64,
    dim: usize,
    prompts: Vec<PromptRecord>,
}

#[derive(Serialize, Deserialize)]
struct PromptRecord {
    text: String,
    polarity: i64,
    #[serde(serialize_with = "ser_reals")]
    embedding: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RecognizerFile {
    format_version: u64,
    prompts: Vec<String>,
    #[serde(serialize_with = "ser_reals")]
    weights: Vec<f64>,
    #[serde(serialize_with = "ser_real")]
    threshold: f64,
    objective: String,
    #[serde(default)]
    metadata: Metadata,
}

fn parse_versioned<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T> {
    let probe: VersionProbe = serde_json::from_str(text)?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(probe.format_version));
    }
    Ok(serde_json::from_str(text)?)
}

fn to_document<T: Serialize>(doc: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    Ok(text)
}

fn check_declared_dim(dim: usize, len: usize) -> Result<()> {
    if dim != len {
        return Err(Error::invalid_embedding(format!(
            "dimension {len} does not match declared dim {dim}"
        )));
    }
    Ok(())
}

pub fn dataset_from_str(text: &str) -> Result<LabeledDataset> {
    let file: DatasetFile = parse_versioned(text)?;
    let items = file
        .items
        .into_iter()
        .map(|rec| {
            let build = || -> Result<DatasetItem> {
                check_declared_dim(file.dim, rec.embedding.len())?;
                Ok(DatasetItem {
                    label: Label::from_sign(rec.label)?,
                    embedding: EmbeddingVector::new(rec.embedding.clone())?,
                    id: rec.id.clone(),
                })
            };
            build().map_err(|e| e.in_item(&rec.id))
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(file.dim, items)
}

pub fn dataset_to_string(d: &LabeledDataset) -> Result<String> {
    to_document(&DatasetFile {
        format_version: FORMAT_VERSION,
        dim: d.dim(),
        items: d
            .items()
            .iter()
            .map(|it| ItemRecord {
                id: it.id.clone(),
                label: i64::from(it.label.sign()),
                embedding: it.embedding.as_slice().to_vec(),
            })
            .collect(),
    })
}

pub fn prompts_from_str(text: &str) -> Result<PromptSet> {
    let file: PromptsFile = parse_versioned(text)?;
    let prompts = file
        .prompts
        .into_iter()
        .map(|rec| {
            let build = || -> Result<Prompt> {
                check_declared_dim(file.dim, rec.embedding.len())?;
                Ok(Prompt {
                    polarity: Label::from_sign(rec.polarity)?,
                    embedding: EmbeddingVector::new(rec.embedding.clone())?,
                    text: rec.text.clone(),
                })
            };
            build().map_err(|e| e.in_item(&rec.text))
        })
        .collect::<Result<Vec<_>>>()?;
    PromptSet::new(file.dim, prompts)
}

pub fn prompts_to_string(ps: &PromptSet) -> Result<String> {
    to_document(&PromptsFile {
        format_version: FORMAT_VERSION,
        dim: ps.dim(),
        prompts: ps
            .prompts()
            .iter()
            .map(|p| PromptRecord {
                text: p.text.clone(),
                polarity: i64::from(p.polarity.sign()),
                embedding: p.embedding.as_slice().to_vec(),
            })
            .collect(),
    })
}

pub fn recognizer_from_str(text: &str) -> Result<Recognizer> {
    let file: RecognizerFile = parse_versioned(text)?;
    Recognizer::new(
        file.prompts,
        WeightVector::new(file.weights)?,
        file.threshold,
        file.objective.parse::<Method>()?,
        file.metadata,
    )
}

pub fn recognizer_to_string(r: &Recognizer) -> Result<String> {
    to_document(&RecognizerFile {
        format_version: FORMAT_VERSION,
        prompts: r.prompt_texts.clone(),
        weights: r.weights.as_slice().to_vec(),
        threshold: r.threshold,
        objective: r.method.file_tag().to_string(),
        metadata: r.metadata.clone(),
    })
}

/// Stores the prompt embeddings and polarities in the recognizer metadata
/// so it can be evaluated without a separate prompts file.
pub fn attach_prompt_embeddings(r: &mut Recognizer, ps: &PromptSet) -> Result<()> {
    r.check_prompts(ps)?;
    let vectors: Vec<Value> = ps
        .embeddings()
        .iter()
        .map(|v| json!(v.as_slice().iter().map(|&x| round_sig9(x)).collect::<Vec<_>>()))
        .collect();
    let polarities: Vec<i8> = ps.polarities().iter().map(|p| p.sign()).collect();
    r.metadata.insert(PROMPT_EMBEDDINGS_KEY.into(), Value::Array(vectors));
    r.metadata.insert(PROMPT_POLARITIES_KEY.into(), json!(polarities));
    Ok(())
}

/// Prompt set rebuilt from recognizer metadata, if it carries one.
pub fn embedded_prompt_set(r: &Recognizer) -> Result<Option<PromptSet>> {
    let Some(vectors) = r.metadata.get(PROMPT_EMBEDDINGS_KEY) else {
        return Ok(None);
    };
    let malformed = |what: &str| Error::InvalidConfig(format!("recognizer metadata: malformed {what}"));
    let vectors: Vec<Vec<f64>> =
        serde_json::from_value(vectors.clone()).map_err(|_| malformed(PROMPT_EMBEDDINGS_KEY))?;
    let polarities: Vec<i64> = match r.metadata.get(PROMPT_POLARITIES_KEY) {
        Some(v) => serde_json::from_value(v.clone()).map_err(|_| malformed(PROMPT_POLARITIES_KEY))?,
        None => r
            .weights
            .as_slice()
            .iter()
            .map(|w| if *w < 0.0 { -1 } else { 1 })
            .collect(),
    };
    if vectors.len() != r.prompt_texts.len() || polarities.len() != r.prompt_texts.len() {
        return Err(malformed("prompt table length"));
    }
    let dim = vectors.first().map_or(0, Vec::len);
    let prompts = r
        .prompt_texts
        .iter()
        .zip(vectors)
        .zip(polarities)
        .map(|((text, v), pol)| {
            Ok(Prompt {
                text: text.clone(),
                polarity: Label::from_sign(pol)?,
                embedding: EmbeddingVector::new(v).map_err(|e| e.for_item(text))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PromptSet::new(dim, prompts).map(Some)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    dataset_from_str(&fs::read_to_string(path)?)
}

pub fn save_dataset(path: impl AsRef<Path>, d: &LabeledDataset) -> Result<()> {
    Ok(fs::write(path, dataset_to_string(d)?)?)
}

pub fn load_prompts(path: impl AsRef<Path>) -> Result<PromptSet> {
    prompts_from_str(&fs::read_to_string(path)?)
}

pub fn save_prompts(path: impl AsRef<Path>, ps: &PromptSet) -> Result<()> {
    Ok(fs::write(path, prompts_to_string(ps)?)?)
}

pub fn load_recognizer(path: impl AsRef<Path>) -> Result<Recognizer> {
    recognizer_from_str(&fs::read_to_string(path)?)
}

pub fn save_recognizer(path: impl AsRef<Path>, r: &Recognizer) -> Result<()> {
    Ok(fs::write(path, recognizer_to_string(r)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DATASET: &str = r#"{
  "format_version": 1,
  "dim": 2,
  "items": [
    { "id": "a", "label": 1, "embedding": [1.0, 0.0] },
    { "id": "b", "label": -1, "embedding": [0.0, 1.0] }
  ]
}"#;

    #[test]
    fn parses_minimal_dataset() {
        let d = dataset_from_str(DATASET).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.items()[1].label, Label::Negative);
    }

    #[test]
    fn zero_label_names_item() {
        let text = DATASET.replace("\"label\": -1", "\"label\": 0");
        let err = dataset_from_str(&text).unwrap_err();
        assert!(matches!(&err, Error::Item { id, .. } if id == "b"), "{err}");
        assert!(err.to_string().contains("invalid label 0"));
    }

    #[test]
    fn short_norm_names_item() {
        let text = DATASET.replace("[0.0, 1.0]", "[0.0, 0.5]");
        let err = dataset_from_str(&text).unwrap_err();
        assert!(
            matches!(&err, Error::InvalidEmbedding { item: Some(id), .. } if id == "b"),
            "{err}"
        );
    }

    #[test]
    fn wrong_dim_names_item() {
        let text = DATASET.replace("[1.0, 0.0]", "[1.0, 0.0, 0.0]");
        let err = dataset_from_str(&text).unwrap_err();
        assert!(err.to_string().contains("'a'"), "{err}");
    }

    #[test]
    fn malformed_document_reports_position() {
        let text = DATASET.replace("\"items\": [", "\"items\": [,");
        match dataset_from_str(&text) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 4);
                assert!(column > 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_version_rejected() {
        let text = DATASET.replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(dataset_from_str(&text), Err(Error::UnsupportedVersion(2))));
    }

    #[test]
    fn sig9_rounding() {
        assert_eq!(round_sig9(0.123456789123), 0.123456789);
        assert_eq!(round_sig9(-1.0), -1.0);
        assert_eq!(round_sig9(0.0), 0.0);
        assert_eq!(serde_json::to_string(&round_sig9(1.0 / 3.0)).unwrap(), "0.333333333");
    }

    #[test]
    fn recognizer_document_shape() {
        let r = Recognizer::new(
            vec!["an open door".into(), "a closed door".into()],
            WeightVector::new(vec![0.25, -1.0]).unwrap(),
            0.0123456789012,
            Method::Opt2,
            Metadata::new(),
        )
        .unwrap();
        let text = recognizer_to_string(&r).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["format_version"], json!(1));
        assert_eq!(v["objective"], json!("E2"));
        assert_eq!(v["threshold"], json!(0.0123456789));
        let back = recognizer_from_str(&text).unwrap();
        assert_eq!(back.method, Method::Opt2);
        assert_eq!(back.prompt_texts, r.prompt_texts);
        assert!(recognizer_from_str(&text.replace("\"E2\"", "\"E9\"")).is_err());
    }
}
