//! Recognizer builders (ALL, ONE, OPT-k, pairwise), evaluation, the
//! five-method comparison grid and per-item margin reports.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde_json::{json, Value};

use crate::embedding::{
    require_classes, similarity_matrix, EmbeddingVector, Label, LabeledDataset, PromptSet,
    SimilarityMatrix,
};
use crate::error::{Error, Result};
use crate::objectives::{evaluate_objective, ObjectiveConfig, ObjectiveKind, ObjectiveValue};
use crate::optimizer::{optimize_weights, standard_seeds, GaConfig, OptimizationResult};
use crate::recognition::{
    calc_cthre, predict, softmax_pair_predict, weighted_score, WeightVector, MIN_WEIGHT_MASS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Opt1,
    Opt2,
    Opt3,
    All,
    One,
    Pairwise,
}

impl Method {
    /// Column order of the comparison grid.
    pub const GRID: [Method; 5] = [Method::Opt1, Method::Opt2, Method::Opt3, Method::All, Method::One];

    pub fn for_objective(kind: ObjectiveKind) -> Self {
        match kind {
            ObjectiveKind::E1 => Method::Opt1,
            ObjectiveKind::E2 => Method::Opt2,
            ObjectiveKind::E3 => Method::Opt3,
        }
    }

    /// Tag stored in recognizer files.
    pub fn file_tag(self) -> &'static str {
        match self {
            Method::Opt1 => "E1",
            Method::Opt2 => "E2",
            Method::Opt3 => "E3",
            Method::All => "ALL",
            Method::One => "ONE",
            Method::Pairwise => "PAIRWISE",
        }
    }

    /// Name used in reports.
    pub fn report_name(self) -> &'static str {
        match self {
            Method::Opt1 => "OPT-1",
            Method::Opt2 => "OPT-2",
            Method::Opt3 => "OPT-3",
            Method::All => "ALL",
            Method::One => "ONE",
            Method::Pairwise => "PAIRWISE",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.report_name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "E1" | "OPT1" | "OPT-1" => Method::Opt1,
            "E2" | "OPT2" | "OPT-2" => Method::Opt2,
            "E3" | "OPT3" | "OPT-3" => Method::Opt3,
            "ALL" => Method::All,
            "ONE" => Method::One,
            "PAIRWISE" => Method::Pairwise,
            other => return Err(Error::InvalidConfig(format!("unknown objective tag '{other}'"))),
        })
    }
}

pub type Metadata = BTreeMap<String, Value>;

/// Deployable recognizer: prompt texts, their weights and a threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Recognizer {
    pub prompt_texts: Vec<String>,
    pub weights: WeightVector,
    pub threshold: f64,
    pub method: Method,
    pub metadata: Metadata,
}

impl Recognizer {
    pub fn new(
        prompt_texts: Vec<String>,
        weights: WeightVector,
        threshold: f64,
        method: Method,
        metadata: Metadata,
    ) -> Result<Self> {
        if prompt_texts.len() != weights.len() {
            return Err(Error::LengthMismatch {
                what: "prompts vs weights",
                left: prompt_texts.len(),
                right: weights.len(),
            });
        }
        if weights.l1_norm() < MIN_WEIGHT_MASS {
            return Err(Error::DegenerateWeights(weights.l1_norm()));
        }
        if !threshold.is_finite() {
            return Err(Error::InvalidConfig(format!("threshold {threshold}")));
        }
        if method == Method::Pairwise && prompt_texts.len() != 2 {
            return Err(Error::InvalidConfig("pairwise recognizer needs exactly 2 prompts".into()));
        }
        Ok(Self {
            prompt_texts,
            weights,
            threshold,
            method,
            metadata,
        })
    }

    /// Fails with the first index where the prompt texts diverge.
    pub fn check_prompts(&self, ps: &PromptSet) -> Result<()> {
        let theirs = ps.texts();
        let n = self.prompt_texts.len().max(theirs.len());
        for index in 0..n {
            let expected = self.prompt_texts.get(index).map(String::as_str);
            let found = theirs.get(index).copied();
            if expected != found {
                return Err(Error::PromptMismatch {
                    index,
                    expected: expected.unwrap_or("<none>").to_string(),
                    found: found.unwrap_or("<none>").to_string(),
                });
            }
        }
        Ok(())
    }

    /// Score and predicted label for each image; the margin is
    /// `score - threshold`.
    pub fn classify(
        &self,
        images: &[&EmbeddingVector],
        prompt_embeddings: &[&EmbeddingVector],
    ) -> Result<Vec<Classification>> {
        if prompt_embeddings.len() != self.prompt_texts.len() {
            return Err(Error::LengthMismatch {
                what: "recognizer prompts vs prompt embeddings",
                left: self.prompt_texts.len(),
                right: prompt_embeddings.len(),
            });
        }
        let m = SimilarityMatrix::from_embeddings(images, prompt_embeddings)?;
        self.classify_matrix(&m)
    }

    pub fn classify_matrix(&self, m: &SimilarityMatrix) -> Result<Vec<Classification>> {
        let scores = weighted_score(m, &self.weights)?;
        Ok(scores
            .into_iter()
            .zip(m.iter_rows())
            .map(|(score, row)| {
                let label = match self.method {
                    Method::Pairwise => {
                        // weights carry the prompt polarities
                        let (a_pos, a_neg) = if self.weights.as_slice()[0] >= 0.0 {
                            (row[0], row[1])
                        } else {
                            (row[1], row[0])
                        };
                        softmax_pair_predict(a_pos, a_neg).predicted
                    }
                    _ => predict(score, self.threshold),
                };
                Classification {
                    label,
                    score,
                    margin: score - self.threshold,
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub label: Label,
    pub score: f64,
    pub margin: f64,
}

fn texts(ps: &PromptSet) -> Vec<String> {
    ps.texts().into_iter().map(String::from).collect()
}

fn check_shapes(ps: &PromptSet, m: &SimilarityMatrix, labels: &[Label]) -> Result<()> {
    if m.cols() != ps.len() {
        return Err(Error::LengthMismatch {
            what: "similarity columns vs prompts",
            left: m.cols(),
            right: ps.len(),
        });
    }
    if m.rows() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "similarity rows vs labels",
            left: m.rows(),
            right: labels.len(),
        });
    }
    Ok(())
}

fn objective_metadata(v: &ObjectiveValue) -> Metadata {
    let mut md = Metadata::new();
    md.insert("e1".into(), json!(v.e1));
    md.insert("fitness".into(), json!(v.fitness));
    md.insert("threshold_rule".into(), json!("optimal threshold on optimization set"));
    md
}

/// Every prompt at its polarity weight (+1 / -1), with the optimal
/// threshold on the given data.
pub fn build_all_recognizer(ps: &PromptSet, m: &SimilarityMatrix, labels: &[Label]) -> Result<Recognizer> {
    check_shapes(ps, m, labels)?;
    require_classes(labels, 1)?;
    let weights = WeightVector::from_polarities(&ps.polarities());
    let scores = weighted_score(m, &weights)?;
    let threshold = calc_cthre(&scores, labels)?;
    let v = evaluate_objective(&weights, m, labels, &ObjectiveConfig::new(ObjectiveKind::E1))?;
    Recognizer::new(texts(ps), weights, threshold, Method::All, objective_metadata(&v))
}

/// Best single prompt: tries `+e_i` and `-e_i` for every prompt and keeps
/// the first maximizer (lowest index, positive sign first).
pub fn build_one_recognizer(
    ps: &PromptSet,
    m: &SimilarityMatrix,
    labels: &[Label],
    obj_cfg: &ObjectiveConfig,
) -> Result<Recognizer> {
    check_shapes(ps, m, labels)?;
    require_classes(labels, obj_cfg.kind.min_per_class())?;
    obj_cfg.validate()?;
    let mut best: Option<(WeightVector, ObjectiveValue)> = None;
    for i in 0..ps.len() {
        for sign in [Label::Positive, Label::Negative] {
            let w = WeightVector::unit(ps.len(), i, sign);
            let v = evaluate_objective(&w, m, labels, obj_cfg)?;
            if best.as_ref().is_none_or(|(_, b)| v.fitness > b.fitness) {
                best = Some((w, v));
            }
        }
    }
    let (weights, v) = best.expect("prompt set is non-empty");
    let mut md = objective_metadata(&v);
    md.insert("selection_objective".into(), json!(obj_cfg.kind.to_string()));
    Recognizer::new(texts(ps), weights, v.threshold, Method::One, md)
}

/// Genetic-algorithm weights under `obj_cfg`, seeded with the ALL vector
/// and every single-prompt vector.
pub fn build_opt_recognizer(
    ps: &PromptSet,
    m: &SimilarityMatrix,
    labels: &[Label],
    obj_cfg: &ObjectiveConfig,
    ga_cfg: &GaConfig,
) -> Result<(Recognizer, OptimizationResult)> {
    check_shapes(ps, m, labels)?;
    let seeds = standard_seeds(&ps.polarities());
    let result = optimize_weights(m, labels, obj_cfg, ga_cfg, &seeds)?;
    let mut md = objective_metadata(&result.best_objective);
    md.insert("objective".into(), json!(obj_cfg.kind.to_string()));
    md.insert("alpha2".into(), json!(obj_cfg.alpha2));
    md.insert("alpha3".into(), json!(obj_cfg.alpha3));
    md.insert("rng_seed".into(), json!(ga_cfg.rng_seed));
    md.insert("population_size".into(), json!(ga_cfg.population_size));
    md.insert("generations".into(), json!(ga_cfg.generations));
    let rec = Recognizer::new(
        texts(ps),
        result.best.weights.clone(),
        result.best_objective.threshold,
        Method::for_objective(obj_cfg.kind),
        md,
    )?;
    Ok((rec, result))
}

/// Softmax baseline over a two-prompt set: one positive, one negative
/// prompt.
pub fn build_pairwise_recognizer(ps: &PromptSet) -> Result<Recognizer> {
    let pols = ps.polarities();
    if pols.len() != 2 || pols[0] == pols[1] {
        return Err(Error::InvalidConfig(
            "pairwise recognizer needs one positive and one negative prompt".into(),
        ));
    }
    Recognizer::new(
        texts(ps),
        WeightVector::from_polarities(&pols),
        0.0,
        Method::Pairwise,
        Metadata::new(),
    )
}

fn classify_dataset(r: &Recognizer, d: &LabeledDataset, ps: &PromptSet) -> Result<Vec<Classification>> {
    r.check_prompts(ps)?;
    let m = similarity_matrix(d, ps)?;
    r.classify_matrix(&m)
}

/// Percentage of items whose predicted label matches.
pub fn evaluate_recognizer(r: &Recognizer, d: &LabeledDataset, ps: &PromptSet) -> Result<f64> {
    let preds = classify_dataset(r, d, ps)?;
    let correct = preds
        .iter()
        .zip(d.items())
        .filter(|(p, it)| p.label == it.label)
        .count();
    Ok(percentage(correct, d.len()))
}

pub fn percentage(correct: usize, total: usize) -> f64 {
    100.0 * correct as f64 / total as f64
}

/// Whole numbers print without decimals, anything else with one.
pub fn format_percent(p: f64) -> String {
    if (p - p.round()).abs() < 1e-9 {
        format!("{}", p.round() as i64)
    } else {
        format!("{p:.1}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: Method,
    pub r_opt: f64,
    pub r_eval: f64,
}

/// Accuracy on the optimization and evaluation sets per method.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub t_opt: usize,
    pub t_eval: usize,
}

impl EvalReport {
    pub fn row(&self, method: Method) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Methods as columns, `R_opt` / `R_eval` as rows.
    pub fn render_table(&self) -> String {
        let label_width = 12;
        let mut out = format!("{:label_width$}", "");
        for row in &self.rows {
            write!(out, " {:>6}", row.method.report_name()).unwrap();
        }
        out.push('\n');
        for (name, pick) in [
            ("R_opt [%]", (|r: &ReportRow| r.r_opt) as fn(&ReportRow) -> f64),
            ("R_eval [%]", |r: &ReportRow| r.r_eval),
        ] {
            write!(out, "{name:label_width$}").unwrap();
            for row in &self.rows {
                write!(out, " {:>6}", format_percent(pick(row))).unwrap();
            }
            out.push('\n');
        }
        writeln!(out, "(T_opt = {}, T_eval = {})", self.t_opt, self.t_eval).unwrap();
        out
    }

    /// CSV with header `method,R_opt,R_eval`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,R_opt,R_eval\n");
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{}",
                row.method.report_name(),
                format_percent(row.r_opt),
                format_percent(row.r_eval)
            )
            .unwrap();
        }
        out
    }
}

/// Objectives for OPT-1..3 and the objective used to pick ONE.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub objectives: [ObjectiveConfig; 3],
    pub one_objective: ObjectiveConfig,
    pub ga: GaConfig,
}

impl ExperimentConfig {
    pub fn new(ga: GaConfig) -> Self {
        Self {
            objectives: ObjectiveKind::ALL.map(ObjectiveConfig::new),
            one_objective: ObjectiveConfig::new(ObjectiveKind::E1),
            ga,
        }
    }

    /// Same alpha values for every objective.
    pub fn with_alphas(mut self, alpha2: f64, alpha3: f64) -> Self {
        for cfg in self.objectives.iter_mut().chain([&mut self.one_objective]) {
            cfg.alpha2 = alpha2;
            cfg.alpha3 = alpha3;
        }
        self
    }
}

/// Builds the five recognizers in grid order on the optimization set.
pub fn build_suite(d_opt: &LabeledDataset, ps: &PromptSet, cfg: &ExperimentConfig) -> Result<Vec<Recognizer>> {
    let m = similarity_matrix(d_opt, ps)?;
    let labels = d_opt.labels();
    let mut recognizers = Vec::with_capacity(5);
    for obj in &cfg.objectives {
        recognizers.push(build_opt_recognizer(ps, &m, &labels, obj, &cfg.ga)?.0);
    }
    recognizers.push(build_all_recognizer(ps, &m, &labels)?);
    recognizers.push(build_one_recognizer(ps, &m, &labels, &cfg.one_objective)?);
    Ok(recognizers)
}

pub fn report_for(
    recognizers: &[Recognizer],
    d_opt: &LabeledDataset,
    d_eval: &LabeledDataset,
    ps: &PromptSet,
) -> Result<EvalReport> {
    let rows = recognizers
        .iter()
        .map(|r| {
            Ok(ReportRow {
                method: r.method,
                r_opt: evaluate_recognizer(r, d_opt, ps)?,
                r_eval: evaluate_recognizer(r, d_eval, ps)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        rows,
        t_opt: d_opt.len(),
        t_eval: d_eval.len(),
    })
}

/// OPT-1, OPT-2, OPT-3, ALL and ONE built on `d_opt`, each scored on both
/// datasets.
pub fn run_experiment(
    d_opt: &LabeledDataset,
    d_eval: &LabeledDataset,
    ps: &PromptSet,
    cfg: &ExperimentConfig,
) -> Result<EvalReport> {
    if d_eval.dim() != ps.dim() {
        return Err(Error::DimensionMismatch {
            expected: ps.dim(),
            found: d_eval.dim(),
        });
    }
    let recognizers = build_suite(d_opt, ps, cfg)?;
    report_for(&recognizers, d_opt, d_eval, ps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginEntry {
    pub id: String,
    pub label: Label,
    pub margin: f64,
}

/// Items sorted by `score - threshold`, largest first.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginReport {
    pub entries: Vec<MarginEntry>,
}

impl MarginReport {
    /// CSV with header `id,label,margin`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,label,margin\n");
        for e in &self.entries {
            writeln!(out, "{},{},{:.9e}", e.id, e.label.sign(), e.margin).unwrap();
        }
        out
    }
}

pub fn margin_report(r: &Recognizer, d: &LabeledDataset, ps: &PromptSet) -> Result<MarginReport> {
    let preds = classify_dataset(r, d, ps)?;
    let mut entries: Vec<MarginEntry> = preds
        .iter()
        .zip(d.items())
        .map(|(p, it)| MarginEntry {
            id: it.id.clone(),
            label: it.label,
            margin: p.margin,
        })
        .collect();
    entries.sort_by(|a, b| b.margin.total_cmp(&a.margin));
    Ok(MarginReport { entries })
}
