//! Binary state recognition from weighted prompt-embedding ensembles.
//!
//! Images and prompts live in a shared embedding space. A recognizer scores
//! an image by the normalized weighted sum of its cosine similarities to a
//! set of prompts and compares that score to a threshold. Weights are
//! either fixed by prompt polarity (`ALL`), restricted to the single best
//! prompt (`ONE`), or tuned by a genetic algorithm under one of three
//! objectives (`OPT1`..`OPT3`).

pub mod embedding;
pub mod error;
pub mod io;
pub mod objectives;
pub mod optimizer;
pub mod recognition;
pub mod suite;
pub mod synth;

pub use embedding::{
    cosine_similarity, expand_prompt_variants, similarity_matrix, DatasetItem, EmbeddingVector,
    Label, LabeledDataset, Prompt, PromptSet, SimilarityMatrix,
};
pub use error::{Error, Result};
pub use objectives::{evaluate_objective, ObjectiveConfig, ObjectiveKind, ObjectiveValue};
pub use optimizer::{optimize_weights, GaConfig, OptimizationResult};
pub use recognition::{calc_cthre, predict, softmax_pair_predict, weighted_score, WeightVector};
pub use suite::{
    build_all_recognizer, build_one_recognizer, build_opt_recognizer, evaluate_recognizer,
    margin_report, run_experiment, EvalReport, ExperimentConfig, MarginReport, Method, Recognizer,
};
pub use synth::{generate_synthetic, SynthConfig, SyntheticData};
