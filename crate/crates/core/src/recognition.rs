//! Weighted ensemble scoring, optimal threshold search and binary
//! prediction, plus the two-prompt softmax baseline.

use crate::embedding::{Label, SimilarityMatrix};
use crate::error::{Error, Result};

/// Smallest admissible `sum |w_i|` for a weight vector used in scoring.
pub const MIN_WEIGHT_MASS: f64 = 1e-9;

/// Prompt weights, each in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        for (index, &value) in w.iter().enumerate() {
            if !value.is_finite() || !(-1.0..=1.0).contains(&value) {
                return Err(Error::WeightOutOfRange { index, value });
            }
        }
        if w.is_empty() {
            return Err(Error::Empty("weight vector"));
        }
        Ok(WeightVector(w))
    }

    /// Clamps every gene into [-1, 1]. NaN genes become 0.
    pub fn clamped(mut w: Vec<f64>) -> Self {
        for x in &mut w {
            *x = if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
        }
        WeightVector(w)
    }

    /// +1 for prompts describing the positive state, -1 otherwise.
    pub fn from_polarities(polarities: &[Label]) -> Self {
        WeightVector(polarities.iter().map(|p| p.as_f64()).collect())
    }

    /// Single-prompt vector: `sign` at `index`, zero elsewhere.
    pub fn unit(len: usize, index: usize, sign: Label) -> Self {
        let mut w = vec![0.0; len];
        w[index] = sign.as_f64();
        WeightVector(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|x| x.abs()).sum()
    }
}

/// Normalized weighted sum of similarities for every image:
/// `e_t = sum_i w_i a_ti / sum_i |w_i|`.
pub fn weighted_score(m: &SimilarityMatrix, w: &WeightVector) -> Result<Vec<f64>> {
    if w.len() != m.cols() {
        return Err(Error::LengthMismatch {
            what: "weights vs prompts",
            left: w.len(),
            right: m.cols(),
        });
    }
    let mass = w.l1_norm();
    if mass < MIN_WEIGHT_MASS {
        return Err(Error::DegenerateWeights(mass));
    }
    Ok(m.iter_rows()
        .map(|row| {
            row.iter()
                .zip(w.as_slice())
                .map(|(a, w)| a * w)
                .sum::<f64>()
                / mass
        })
        .collect())
}

/// Running state of the threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSearchState {
    /// Signed label sum of the items above the current cut.
    pub b: i64,
    /// Best `b` seen; the correct count at the chosen cut is
    /// `negatives + b_max`.
    pub b_max: i64,
    pub c_thre: f64,
}

/// Offset used for thresholds beyond the extreme scores.
pub fn sentinel_offset(scores: &[f64]) -> f64 {
    let (lo, hi) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    (1e-6 * (hi - lo)).max(1e-6)
}

/// Sweeps the scores in descending order and returns the threshold that
/// maximizes the number of correctly classified items.
pub fn calc_cthre(scores: &[f64], labels: &[Label]) -> Result<f64> {
    threshold_search(scores, labels).map(|st| st.c_thre)
}

/// Full sweep state after processing every item.
///
/// The cut starts above the highest score (everything negative). After
/// each item the cut may move to the midpoint with the next lower score;
/// after the last item it moves below the lowest score. Items sharing a
/// score cannot be separated, so no cut is placed between them.
pub fn threshold_search(scores: &[f64], labels: &[Label]) -> Result<ThresholdSearchState> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "scores vs labels",
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidConfig("non-finite score".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let delta = sentinel_offset(scores);

    let mut st = ThresholdSearchState {
        b: 0,
        b_max: 0,
        c_thre: scores[order[0]] + delta,
    };
    for (k, &i) in order.iter().enumerate() {
        st.b += i64::from(labels[i].sign());
        let current = scores[i];
        let next = order.get(k + 1).map(|&j| scores[j]);
        if next == Some(current) {
            continue;
        }
        if st.b >= st.b_max {
            st.b_max = st.b;
            st.c_thre = match next {
                Some(lower) => {
                    let mid = 0.5 * (current + lower);
                    if mid < current {
                        mid
                    } else {
                        lower
                    }
                }
                None => current - delta,
            };
        }
    }
    Ok(st)
}

/// Positive iff the score is strictly above the threshold.
pub fn predict(e: f64, c_thre: f64) -> Label {
    if e > c_thre {
        Label::Positive
    } else {
        Label::Negative
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseDecision {
    /// Softmax probabilities of the two prompts.
    pub s: [f64; 2],
    pub predicted: Label,
}

/// Two-prompt baseline: softmax over the similarities to a positive and a
/// negative prompt, positive when the first probability is at least the
/// second.
pub fn softmax_pair_predict(a1: f64, a2: f64) -> PairwiseDecision {
    let m = a1.max(a2);
    let e1 = (a1 - m).exp();
    let e2 = (a2 - m).exp();
    let z = e1 + e2;
    // softmax is monotone, so the raw comparison decides even where the
    // probabilities round to equal values
    let predicted = if a1 >= a2 {
        Label::Positive
    } else {
        Label::Negative
    };
    PairwiseDecision {
        s: [e1 / z, e2 / z],
        predicted,
    }
}
