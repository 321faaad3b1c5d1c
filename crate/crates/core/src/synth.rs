//! Synthetic embedding datasets with controllable separability.
//!
//! Two nearly antipodal unit class centers are drawn. Images are the class
//! center plus isotropic Gaussian noise (per-coordinate standard deviation
//! `image_noise`), re-normalized. Polarity prompts are built the same way
//! around their class center with `prompt_noise`. Distractor prompts are
//! random unit vectors tagged with alternating polarity.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::embedding::{DatasetItem, EmbeddingVector, Label, LabeledDataset, Prompt, PromptSet};
use crate::error::{Error, Result};
use crate::optimizer::rng_from_seed;

/// Per-coordinate jitter that keeps the negative center off the exact
/// antipode of the positive one.
const CENTER_JITTER: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub dim: usize,
    pub n_per_class_opt: usize,
    pub n_per_class_eval: usize,
    pub n_prompts_per_polarity: usize,
    pub n_distractor_prompts: usize,
    pub image_noise: f64,
    pub prompt_noise: f64,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dim: 512,
            n_per_class_opt: 10,
            n_per_class_eval: 10,
            n_prompts_per_polarity: 2,
            n_distractor_prompts: 0,
            image_noise: 0.0,
            prompt_noise: 0.0,
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.dim < 2 {
            return bad("dim must be at least 2");
        }
        if self.n_per_class_opt < 1 || self.n_per_class_eval < 1 || self.n_prompts_per_polarity < 1
        {
            return bad("counts must be at least 1");
        }
        for noise in [self.image_noise, self.prompt_noise] {
            if !(noise.is_finite() && noise >= 0.0) {
                return bad("noise levels must be finite and non-negative");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub d_opt: LabeledDataset,
    pub d_eval: LabeledDataset,
    pub prompts: PromptSet,
}

fn gaussian<R: Rng>(dim: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn perturbed<R: Rng>(center: &EmbeddingVector, noise: f64, rng: &mut R) -> Result<EmbeddingVector> {
    let g = gaussian(center.dim(), noise, rng);
    EmbeddingVector::normalized(center.as_slice().iter().zip(g).map(|(c, n)| c + n).collect())
}

fn random_unit<R: Rng>(dim: usize, rng: &mut R) -> Result<EmbeddingVector> {
    EmbeddingVector::normalized(gaussian(dim, 1.0, rng))
}

fn sample_dataset<R: Rng>(
    tag: &str,
    n_per_class: usize,
    centers: &[(Label, &EmbeddingVector); 2],
    noise: f64,
    dim: usize,
    rng: &mut R,
) -> Result<LabeledDataset> {
    let mut items = Vec::with_capacity(2 * n_per_class);
    for k in 0..n_per_class {
        for (label, center) in centers {
            let side = if *label == Label::Positive { "pos" } else { "neg" };
            items.push(DatasetItem {
                id: format!("{tag}-{side}-{k:03}"),
                label: *label,
                embedding: perturbed(center, noise, rng)?,
            });
        }
    }
    LabeledDataset::new(dim, items)
}

/// Deterministic under `cfg.rng_seed`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.rng_seed);
    let dim = cfg.dim;

    let positive = random_unit(dim, &mut rng)?;
    let jitter = gaussian(dim, CENTER_JITTER, &mut rng);
    let negative = EmbeddingVector::normalized(
        positive.as_slice().iter().zip(jitter).map(|(p, j)| -p + j).collect(),
    )?;
    let centers = [(Label::Positive, &positive), (Label::Negative, &negative)];

    let mut prompts = Vec::new();
    for (label, center) in &centers {
        let state = if *label == Label::Positive { "positive" } else { "negative" };
        for k in 0..cfg.n_prompts_per_polarity {
            prompts.push(Prompt {
                text: format!("{state} state prompt {k}"),
                polarity: *label,
                embedding: perturbed(center, cfg.prompt_noise, &mut rng)?,
            });
        }
    }
    for k in 0..cfg.n_distractor_prompts {
        let polarity = if k % 2 == 0 { Label::Positive } else { Label::Negative };
        prompts.push(Prompt {
            text: format!("distractor prompt {k}"),
            polarity,
            embedding: random_unit(dim, &mut rng)?,
        });
    }

    // datasets last, so their sizes do not shift the prompt draws
    let d_opt = sample_dataset("opt", cfg.n_per_class_opt, &centers, cfg.image_noise, dim, &mut rng)?;
    let d_eval =
        sample_dataset("eval", cfg.n_per_class_eval, &centers, cfg.image_noise, dim, &mut rng)?;

    Ok(SyntheticData {
        d_opt,
        d_eval,
        prompts: PromptSet::new(dim, prompts)?,
    })
}
