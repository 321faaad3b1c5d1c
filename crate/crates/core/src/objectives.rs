//! Fitness functions for a weight vector, each evaluated at the optimal
//! threshold for the scores it induces.
//!
//! * `E1`: number of items on the correct side of the threshold.
//! * `E2`: `E1 + alpha2 * mu`, where `mu` is the summed positive-class
//!   margin minus the summed negative-class margin.
//! * `E3`: `E1 + alpha3 * mu / sigma`, where `sigma` is the product of the
//!   class-wise (population) standard deviations of the margins.

use std::fmt;
use std::str::FromStr;

use crate::embedding::{require_classes, Label, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::recognition::{calc_cthre, weighted_score, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectiveKind {
    E1,
    E2,
    E3,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 3] = [ObjectiveKind::E1, ObjectiveKind::E2, ObjectiveKind::E3];

    /// Minimum number of items each class must have.
    pub fn min_per_class(self) -> usize {
        match self {
            ObjectiveKind::E1 | ObjectiveKind::E2 => 1,
            ObjectiveKind::E3 => 2,
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveKind::E1 => "E1",
            ObjectiveKind::E2 => "E2",
            ObjectiveKind::E3 => "E3",
        })
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "e1" => Ok(ObjectiveKind::E1),
            "e2" => Ok(ObjectiveKind::E2),
            "e3" => Ok(ObjectiveKind::E3),
            other => Err(Error::InvalidConfig(format!("unknown objective '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    pub alpha2: f64,
    pub alpha3: f64,
    pub sigma_floor: f64,
}

impl ObjectiveConfig {
    pub const DEFAULT_ALPHA2: f64 = 1.0;
    pub const DEFAULT_ALPHA3: f64 = 0.00001;
    pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-12;

    pub fn new(kind: ObjectiveKind) -> Self {
        Self {
            kind,
            alpha2: Self::DEFAULT_ALPHA2,
            alpha3: Self::DEFAULT_ALPHA3,
            sigma_floor: Self::DEFAULT_SIGMA_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha2 >= 0.0 && self.alpha2.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha2 = {}", self.alpha2)));
        }
        if !(self.alpha3 >= 0.0 && self.alpha3.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha3 = {}", self.alpha3)));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma_floor = {}",
                self.sigma_floor
            )));
        }
        Ok(())
    }
}

/// An objective evaluation together with the statistics behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub fitness: f64,
    /// Correctly classified items at `threshold`.
    pub e1: usize,
    pub mu1: f64,
    pub mu_neg1: f64,
    pub mu: f64,
    pub sigma1: f64,
    pub sigma_neg1: f64,
    pub sigma: f64,
    pub threshold: f64,
}

impl ObjectiveValue {
    /// Value assigned to weight vectors that cannot be scored.
    pub fn degenerate() -> Self {
        Self {
            fitness: f64::NEG_INFINITY,
            e1: 0,
            mu1: 0.0,
            mu_neg1: 0.0,
            mu: 0.0,
            sigma1: 0.0,
            sigma_neg1: 0.0,
            sigma: 0.0,
            threshold: 0.0,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.fitness == f64::NEG_INFINITY
    }
}

fn check_lengths(scores: &[f64], labels: &[Label]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "scores vs labels",
            left: scores.len(),
            right: labels.len(),
        });
    }
    Ok(())
}

/// Count of items with `label * (score - threshold) > 0`.
pub fn accuracy_e1(scores: &[f64], labels: &[Label], c_thre: f64) -> Result<usize> {
    check_lengths(scores, labels)?;
    Ok(scores
        .iter()
        .zip(labels)
        .filter(|(e, l)| l.as_f64() * (**e - c_thre) > 0.0)
        .count())
}

#[derive(Debug, Default)]
struct ClassMargins {
    sum: f64,
    std: f64,
}

fn class_margins(scores: &[f64], labels: &[Label], c_thre: f64, class: Label) -> ClassMargins {
    let margins: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l == class)
        .map(|(e, _)| e - c_thre)
        .collect();
    if margins.is_empty() {
        return ClassMargins::default();
    }
    let n = margins.len() as f64;
    let sum: f64 = margins.iter().sum();
    let mean = sum / n;
    let var = margins.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n;
    ClassMargins {
        sum,
        std: var.sqrt(),
    }
}

/// Objective of the configured kind at a given threshold.
pub fn objective_at(
    scores: &[f64],
    labels: &[Label],
    c_thre: f64,
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveValue> {
    check_lengths(scores, labels)?;
    if cfg.kind != ObjectiveKind::E1 {
        require_classes(labels, cfg.kind.min_per_class())?;
    }
    let e1 = accuracy_e1(scores, labels, c_thre)?;
    let pos = class_margins(scores, labels, c_thre, Label::Positive);
    let neg = class_margins(scores, labels, c_thre, Label::Negative);
    let mu = pos.sum - neg.sum;
    let sigma = pos.std * neg.std;
    let fitness = match cfg.kind {
        ObjectiveKind::E1 => e1 as f64,
        ObjectiveKind::E2 => e1 as f64 + cfg.alpha2 * mu,
        ObjectiveKind::E3 => e1 as f64 + cfg.alpha3 * mu / sigma.max(cfg.sigma_floor),
    };
    Ok(ObjectiveValue {
        fitness,
        e1,
        mu1: pos.sum,
        mu_neg1: neg.sum,
        mu,
        sigma1: pos.std,
        sigma_neg1: neg.std,
        sigma,
        threshold: c_thre,
    })
}

/// `E2` at a given threshold. Requires both classes.
pub fn objective_e2(
    scores: &[f64],
    labels: &[Label],
    c_thre: f64,
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveValue> {
    objective_at(scores, labels, c_thre, &ObjectiveConfig { kind: ObjectiveKind::E2, ..*cfg })
}

/// `E3` at a given threshold. Requires two items per class.
pub fn objective_e3(
    scores: &[f64],
    labels: &[Label],
    c_thre: f64,
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveValue> {
    objective_at(scores, labels, c_thre, &ObjectiveConfig { kind: ObjectiveKind::E3, ..*cfg })
}

/// Scores the weights, finds their optimal threshold and evaluates the
/// configured objective there. Weights with (near) zero mass evaluate to
/// [`ObjectiveValue::degenerate`].
pub fn evaluate_objective(
    w: &WeightVector,
    m: &SimilarityMatrix,
    labels: &[Label],
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveValue> {
    if labels.len() != m.rows() {
        return Err(Error::LengthMismatch {
            what: "labels vs similarity rows",
            left: labels.len(),
            right: m.rows(),
        });
    }
    let scores = match weighted_score(m, w) {
        Ok(s) => s,
        Err(Error::DegenerateWeights(_)) => return Ok(ObjectiveValue::degenerate()),
        Err(e) => return Err(e),
    };
    let c_thre = calc_cthre(&scores, labels)?;
    objective_at(&scores, labels, c_thre, cfg)
}
