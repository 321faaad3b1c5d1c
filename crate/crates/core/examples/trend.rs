//! Mean R_opt / R_eval per method over a range of synthetic seeds.
//!
//! usage: trend [image_noise] [prompt_noise] [distractors] [seeds] [prompts_per_polarity]
//!              [first_seed] [eval_per_class]

use stateprompt::{generate_synthetic, run_experiment, ExperimentConfig, GaConfig, Method, SynthConfig};

fn main() -> stateprompt::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let image_noise = arg(0, 0.8);
    let prompt_noise = arg(1, 0.05);
    let distractors = arg(2, 8.0) as usize;
    let seeds = arg(3, 20.0) as u64;
    let per_polarity = arg(4, 2.0) as usize;
    let first_seed = arg(5, 0.0) as u64;
    let eval_per_class = arg(6, 50.0) as usize;

    let mut sums = [(0.0, 0.0); 5];
    let mut dominance_violations = 0;
    for seed in first_seed..first_seed + seeds {
        let data = generate_synthetic(&SynthConfig {
            image_noise,
            prompt_noise,
            n_distractor_prompts: distractors,
            n_prompts_per_polarity: per_polarity,
            n_per_class_eval: eval_per_class,
            rng_seed: seed,
            ..Default::default()
        })?;
        let cfg = ExperimentConfig::new(GaConfig { rng_seed: seed, ..Default::default() });
        let report = run_experiment(&data.d_opt, &data.d_eval, &data.prompts, &cfg)?;
        let baseline = [Method::All, Method::One]
            .iter()
            .map(|m| report.row(*m).expect("grid row").r_opt)
            .fold(f64::MIN, f64::max);
        for method in &Method::GRID[..3] {
            let r_opt = report.row(*method).expect("grid row").r_opt;
            if r_opt < baseline {
                dominance_violations += 1;
                println!("seed {seed}: {method} R_opt {r_opt} below baseline {baseline}");
            }
        }
        for (k, method) in Method::GRID.iter().enumerate() {
            let row = report.row(*method).expect("grid row");
            sums[k].0 += row.r_opt;
            sums[k].1 += row.r_eval;
        }
    }
    for (k, method) in Method::GRID.iter().enumerate() {
        println!(
            "{:>6}  R_opt {:6.2}  R_eval {:6.2}",
            method.report_name(),
            sums[k].0 / seeds as f64,
            sums[k].1 / seeds as f64
        );
    }
    println!("runs where an OPT method trails ALL/ONE on D_opt: {dominance_violations}");
    Ok(())
}
