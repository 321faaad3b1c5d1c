use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use stateprompt::io::{
    attach_prompt_embeddings, embedded_prompt_set, load_dataset, load_prompts, load_recognizer,
    save_dataset, save_prompts, save_recognizer,
};
use stateprompt::optimizer::grid_search_oracle;
use stateprompt::suite::{build_pairwise_recognizer, format_percent};
use stateprompt::{
    build_all_recognizer, build_one_recognizer, build_opt_recognizer, evaluate_recognizer,
    expand_prompt_variants, generate_synthetic, margin_report, run_experiment, similarity_matrix,
    EmbeddingVector, ExperimentConfig, GaConfig, ObjectiveConfig, ObjectiveKind, PromptSet,
    Recognizer, SynthConfig,
};
use stateprompt_cli::embedder::{EmbedderClient, EmbedderEndpoint};
use stateprompt_cli::{CliError, Result};

#[derive(Parser)]
#[command(name = "stateprompt", version, about = "Binary state recognition with weighted prompt ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic d_opt.json, d_eval.json and prompts.json
    Synth(SynthArgs),
    /// Build a recognizer from an optimization dataset and prompts
    Optimize(OptimizeArgs),
    /// Accuracy of a recognizer on a dataset
    Evaluate(EvaluateArgs),
    /// OPT-1/2/3, ALL and ONE on both datasets, as a table
    Experiment(ExperimentArgs),
    /// Classify a single embedding or image
    Recognize(RecognizeArgs),
    /// Per-item margins as CSV (id,label,margin), largest first
    Margins(MarginsArgs),
    /// Article variants of a prompt ("a", "the", "this", "that")
    Variants { base: String },
    /// Exhaustive lattice search over weights (at most 4 prompts)
    Gridsearch(GridArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 512)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    opt_per_class: usize,
    #[arg(long, default_value_t = 10)]
    eval_per_class: usize,
    #[arg(long, default_value_t = 2)]
    prompts_per_polarity: usize,
    #[arg(long, default_value_t = 0)]
    distractors: usize,
    #[arg(long, default_value_t = 0.0)]
    image_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    prompt_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GaArgs {
    #[arg(long, default_value_t = 300)]
    pop: usize,
    #[arg(long, default_value_t = 300)]
    gens: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluation threads (0 = all cores); results do not depend on it
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl GaArgs {
    fn config(&self) -> GaConfig {
        GaConfig {
            population_size: self.pop,
            generations: self.gens,
            rng_seed: self.seed,
            workers: self.workers,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct AlphaArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha2: f64,
    #[arg(long, default_value_t = 1e-5)]
    alpha3: f64,
}

impl AlphaArgs {
    fn objective(&self, kind: ObjectiveKind) -> ObjectiveConfig {
        ObjectiveConfig {
            alpha2: self.alpha2,
            alpha3: self.alpha3,
            ..ObjectiveConfig::new(kind)
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Objective {
    E1,
    E2,
    E3,
}

impl From<Objective> for ObjectiveKind {
    fn from(o: Objective) -> Self {
        match o {
            Objective::E1 => ObjectiveKind::E1,
            Objective::E2 => ObjectiveKind::E2,
            Objective::E3 => ObjectiveKind::E3,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RecognizerKind {
    E1,
    E2,
    E3,
    /// every prompt at its polarity weight
    All,
    /// best single prompt by E1
    One,
    /// softmax over one positive and one negative prompt
    Pairwise,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    prompts: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "e2")]
    objective: RecognizerKind,
    #[command(flatten)]
    ga: GaArgs,
    #[command(flatten)]
    alphas: AlphaArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    recognizer: PathBuf,
    dataset: PathBuf,
    /// Prompt embeddings; defaults to the ones stored in the recognizer
    #[arg(long)]
    prompts: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    opt: PathBuf,
    #[arg(long)]
    eval: PathBuf,
    #[arg(long)]
    prompts: PathBuf,
    /// Also write the table as CSV (method,R_opt,R_eval)
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    ga: GaArgs,
    #[command(flatten)]
    alphas: AlphaArgs,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["embedding", "item", "image"]))]
struct RecognizeArgs {
    recognizer: PathBuf,
    /// JSON file holding one embedding (a bare array or {"embedding": [...]})
    #[arg(long)]
    embedding: Option<PathBuf>,
    /// Item id inside --dataset
    #[arg(long, requires = "dataset")]
    item: Option<String>,
    #[arg(long, requires = "item")]
    dataset: Option<PathBuf>,
    /// Image file, embedded by the service at --embedder-url
    #[arg(long, requires = "embedder_url")]
    image: Option<PathBuf>,
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Embedding service; prompt texts are embedded there too unless
    /// --prompts is given
    #[arg(long)]
    embedder_url: Option<String>,
    #[arg(long, default_value_t = 30.0)]
    timeout_secs: f64,
    #[arg(long, default_value_t = 2)]
    retries: u32,
}

#[derive(Args)]
struct MarginsArgs {
    recognizer: PathBuf,
    dataset: PathBuf,
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    prompts: PathBuf,
    #[arg(long, value_enum, default_value = "e1")]
    objective: Objective,
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    #[command(flatten)]
    alphas: AlphaArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(args) => synth(args),
        Command::Optimize(args) => optimize(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Experiment(args) => experiment(args),
        Command::Recognize(args) => recognize(args),
        Command::Margins(args) => margins(args),
        Command::Variants { base } => {
            for v in expand_prompt_variants(&base)? {
                println!("{v}");
            }
            Ok(())
        }
        Command::Gridsearch(args) => gridsearch(args),
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let data = generate_synthetic(&SynthConfig {
        dim: args.dim,
        n_per_class_opt: args.opt_per_class,
        n_per_class_eval: args.eval_per_class,
        n_prompts_per_polarity: args.prompts_per_polarity,
        n_distractor_prompts: args.distractors,
        image_noise: args.image_noise,
        prompt_noise: args.prompt_noise,
        rng_seed: args.seed,
    })?;
    fs::create_dir_all(&args.out_dir)?;
    let dir = &args.out_dir;
    save_dataset(dir.join("d_opt.json"), &data.d_opt)?;
    save_dataset(dir.join("d_eval.json"), &data.d_eval)?;
    save_prompts(dir.join("prompts.json"), &data.prompts)?;
    println!(
        "wrote {} (d_opt {} items, d_eval {} items, {} prompts)",
        dir.display(),
        data.d_opt.len(),
        data.d_eval.len(),
        data.prompts.len()
    );
    Ok(())
}

fn optimize(args: OptimizeArgs) -> Result<()> {
    let d = load_dataset(&args.dataset)?;
    let ps = load_prompts(&args.prompts)?;
    let m = similarity_matrix(&d, &ps)?;
    let labels = d.labels();
    let mut rec = match args.objective {
        RecognizerKind::E1 | RecognizerKind::E2 | RecognizerKind::E3 => {
            let kind = match args.objective {
                RecognizerKind::E1 => ObjectiveKind::E1,
                RecognizerKind::E2 => ObjectiveKind::E2,
                _ => ObjectiveKind::E3,
            };
            build_opt_recognizer(&ps, &m, &labels, &args.alphas.objective(kind), &args.ga.config())?.0
        }
        RecognizerKind::All => build_all_recognizer(&ps, &m, &labels)?,
        RecognizerKind::One => {
            build_one_recognizer(&ps, &m, &labels, &args.alphas.objective(ObjectiveKind::E1))?
        }
        RecognizerKind::Pairwise => build_pairwise_recognizer(&ps)?,
    };
    attach_prompt_embeddings(&mut rec, &ps)?;
    save_recognizer(&args.out, &rec)?;
    println!(
        "wrote {} ({}, threshold {:.6}, R_opt {}%)",
        args.out.display(),
        rec.method.report_name(),
        rec.threshold,
        format_percent(evaluate_recognizer(&rec, &d, &ps)?)
    );
    Ok(())
}

/// Prompt set from `--prompts`, or the one stored in the recognizer.
fn prompts_for(rec: &Recognizer, path: Option<&Path>) -> Result<PromptSet> {
    let ps = match path {
        Some(p) => load_prompts(p)?,
        None => embedded_prompt_set(rec)?.ok_or_else(|| {
            CliError::Usage("recognizer carries no prompt embeddings; pass --prompts".into())
        })?,
    };
    rec.check_prompts(&ps)?;
    Ok(ps)
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let rec = load_recognizer(&args.recognizer)?;
    let ps = prompts_for(&rec, args.prompts.as_deref())?;
    let d = load_dataset(&args.dataset)?;
    let pct = evaluate_recognizer(&rec, &d, &ps)?;
    let correct = (pct * d.len() as f64 / 100.0).round() as usize;
    println!("accuracy {}% ({correct}/{})", format_percent(pct), d.len());
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let d_opt = load_dataset(&args.opt)?;
    let d_eval = load_dataset(&args.eval)?;
    let ps = load_prompts(&args.prompts)?;
    let cfg = ExperimentConfig::new(args.ga.config()).with_alphas(args.alphas.alpha2, args.alphas.alpha3);
    let report = run_experiment(&d_opt, &d_eval, &ps, &cfg)?;
    print!("{}", report.render_table());
    if let Some(path) = &args.csv {
        fs::write(path, report.to_csv())?;
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EmbeddingDoc {
    Bare(Vec<f64>),
    Wrapped { embedding: Vec<f64> },
}

fn read_embedding(path: &Path) -> Result<EmbeddingVector> {
    let text = fs::read_to_string(path)?;
    let doc: EmbeddingDoc = serde_json::from_str(&text).map_err(stateprompt::Error::from)?;
    let values = match doc {
        EmbeddingDoc::Bare(v) | EmbeddingDoc::Wrapped { embedding: v } => v,
    };
    Ok(EmbeddingVector::new(values)?)
}

fn recognize(args: RecognizeArgs) -> Result<()> {
    let rec = load_recognizer(&args.recognizer)?;
    let mut client = match &args.embedder_url {
        Some(url) => {
            let mut ep = EmbedderEndpoint::new(url)?;
            if !(args.timeout_secs > 0.0 && args.timeout_secs.is_finite()) {
                return Err(CliError::Usage(format!("timeout {} s", args.timeout_secs)));
            }
            ep.timeout = Duration::from_secs_f64(args.timeout_secs);
            ep.retries = args.retries;
            Some(EmbedderClient::new(ep))
        }
        None => None,
    };

    let image = if let Some(path) = &args.embedding {
        read_embedding(path)?
    } else if let (Some(dataset), Some(id)) = (&args.dataset, &args.item) {
        let d = load_dataset(dataset)?;
        d.item(id)
            .ok_or_else(|| CliError::Usage(format!("no item '{id}' in {}", dataset.display())))?
            .embedding
            .clone()
    } else {
        let path = args.image.as_ref().expect("clap enforces one input");
        let bytes = fs::read(path)?;
        client.as_mut().expect("clap requires --embedder-url").embed_image(&bytes)?
    };

    let prompts: Vec<EmbeddingVector> = match (&args.prompts, client.as_mut()) {
        (None, Some(client)) => client.embed_texts(&rec.prompt_texts)?,
        (path, _) => prompts_for(&rec, path.as_deref())?
            .embeddings()
            .into_iter()
            .cloned()
            .collect(),
    };
    let refs: Vec<&EmbeddingVector> = prompts.iter().collect();
    let c = rec.classify(&[&image], &refs)?[0];
    println!("label {} margin {:.9e} score {:.9e}", c.label, c.margin, c.score);
    Ok(())
}

fn margins(args: MarginsArgs) -> Result<()> {
    let rec = load_recognizer(&args.recognizer)?;
    let ps = prompts_for(&rec, args.prompts.as_deref())?;
    let d = load_dataset(&args.dataset)?;
    let csv = margin_report(&rec, &d, &ps)?.to_csv();
    match &args.out {
        Some(path) => fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn gridsearch(args: GridArgs) -> Result<()> {
    let d = load_dataset(&args.dataset)?;
    let ps = load_prompts(&args.prompts)?;
    let m = similarity_matrix(&d, &ps)?;
    let cfg = args.alphas.objective(args.objective.into());
    let g = grid_search_oracle(&m, &d.labels(), &cfg, args.step)?;
    let weights: Vec<String> = g.weights.as_slice().iter().map(|w| format!("{w:.3}")).collect();
    println!("weights [{}]", weights.join(", "));
    println!(
        "{} fitness {} (E1 {}/{}, threshold {:.6}, {} lattice points)",
        cfg.kind,
        g.objective.fitness,
        g.objective.e1,
        d.len(),
        g.objective.threshold,
        g.evaluations
    );
    Ok(())
}
