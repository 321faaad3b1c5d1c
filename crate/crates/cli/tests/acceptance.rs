//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use stateprompt::objectives::objective_at;
use stateprompt::optimizer::{
    blend_crossover, gaussian_mutate, grid_search_oracle, rng_from_seed, standard_seeds, GaRng,
};
use stateprompt::recognition::sentinel_offset;
use stateprompt::{
    calc_cthre, evaluate_objective, generate_synthetic, optimize_weights, predict, run_experiment,
    weighted_score, EvalReport, ExperimentConfig, GaConfig, Label, Method, ObjectiveConfig,
    ObjectiveKind, SimilarityMatrix, SynthConfig, WeightVector,
};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn labels_balanced(t: usize, rng: &mut GaRng) -> Vec<Label> {
    let mut labels: Vec<Label> = (0..t)
        .map(|k| if k % 2 == 0 { Label::Positive } else { Label::Negative })
        .collect();
    labels.shuffle(rng);
    labels
}

fn correct_at(scores: &[f64], labels: &[Label], c: f64) -> usize {
    scores
        .iter()
        .zip(labels)
        .filter(|(e, l)| l.as_f64() * (**e - c) > 0.0)
        .count()
}

fn brute_force_e1(scores: &[f64], labels: &[Label]) -> usize {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let delta = sentinel_offset(scores);
    let mut candidates = vec![sorted[0] - delta, sorted[sorted.len() - 1] + delta];
    candidates.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates
        .into_iter()
        .map(|c| correct_at(scores, labels, c))
        .max()
        .unwrap()
}

fn threshold_optimality() -> Check {
    let mut rng = rng_from_seed(2024);
    let mut instances = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let t = 2 * rng.random_range(1..=32);
        let scores: Vec<f64> = (0..t).map(|_| rng.random::<f64>()).collect();
        instances.push((scores, labels_balanced(t, &mut rng)));
    }
    let start = Instant::now();
    let thresholds: Vec<f64> = instances
        .iter()
        .map(|(s, l)| calc_cthre(s, l).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let elapsed = start.elapsed();
    let mut optimal = 0;
    for ((scores, labels), c) in instances.iter().zip(&thresholds) {
        if correct_at(scores, labels, *c) == brute_force_e1(scores, labels) {
            optimal += 1;
        }
    }
    ensure(optimal == 1000, || format!("{optimal}/1000 optimal"))?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("1000/1000 instances match brute force, {:.3} s", elapsed.as_secs_f64()))
}

fn objective_correctness() -> Check {
    use Label::{Negative as N, Positive as P};
    let scores = [0.9, 0.7, 0.4, 0.2];
    let labels = [P, P, N, N];
    let c = calc_cthre(&scores, &labels).map_err(|e| e.to_string())?;
    ensure((c - 0.55).abs() <= 1e-12 * 0.55, || format!("threshold {c}"))?;
    let mut got = Vec::new();
    for (kind, expected) in [(ObjectiveKind::E1, 4.0), (ObjectiveKind::E2, 5.0), (ObjectiveKind::E3, 4.001)] {
        let v = objective_at(&scores, &labels, 0.55, &ObjectiveConfig::new(kind)).map_err(|e| e.to_string())?;
        ensure((v.fitness - expected).abs() <= 1e-12 * expected, || {
            format!("{kind} = {} (expected {expected})", v.fitness)
        })?;
        got.push(format!("{kind}={}", v.fitness));
    }
    Ok(got.join(", "))
}

fn ga_vs_grid() -> Check {
    let cfg = ObjectiveConfig::new(ObjectiveKind::E1);
    let polarities = [Label::Positive, Label::Negative, Label::Positive];
    let mut hits = 0;
    let mut slowest = Duration::ZERO;
    let mut misses = Vec::new();
    for run in 0..50u64 {
        let mut rng = rng_from_seed(7000 + run);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels = labels_balanced(20, &mut rng);
        let m = SimilarityMatrix::from_rows(rows).map_err(|e| e.to_string())?;
        let grid = grid_search_oracle(&m, &labels, &cfg, 0.1).map_err(|e| e.to_string())?;
        let ga = GaConfig { rng_seed: run, ..Default::default() };
        let start = Instant::now();
        let r = optimize_weights(&m, &labels, &cfg, &ga, &standard_seeds(&polarities))
            .map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        if r.best_objective.e1 >= grid.objective.e1 {
            hits += 1;
        } else {
            misses.push(format!("run {run}: {} < {}", r.best_objective.e1, grid.objective.e1));
        }
    }
    ensure(hits >= 48, || format!("{hits}/50 runs reach the grid optimum; {}", misses.join("; ")))?;
    ensure(slowest < Duration::from_secs(10), || format!("slowest run {slowest:?}"))?;
    Ok(format!(
        "{hits}/50 runs reach the grid optimum (need 48), slowest GA run {:.2} s",
        slowest.as_secs_f64()
    ))
}

struct TrendRuns {
    noisy: Vec<EvalReport>,
    clean: Vec<EvalReport>,
    elapsed: Duration,
}

/// image_noise 0.8, 8 distractors, seeds 0..20; D_eval has 50 images per
/// class so that the mean R_eval is not dominated by sampling noise.
fn trend_runs() -> Result<TrendRuns, String> {
    let start = Instant::now();
    let mut noisy = Vec::new();
    let mut clean = Vec::new();
    for seed in 0..20u64 {
        let cfg = ExperimentConfig::new(GaConfig { rng_seed: seed, ..Default::default() });
        let base = SynthConfig {
            n_prompts_per_polarity: 2,
            n_distractor_prompts: 8,
            n_per_class_eval: 50,
            rng_seed: seed,
            ..Default::default()
        };
        let data = generate_synthetic(&SynthConfig { image_noise: 0.8, prompt_noise: 0.05, ..base.clone() })
            .map_err(|e| e.to_string())?;
        noisy.push(run_experiment(&data.d_opt, &data.d_eval, &data.prompts, &cfg).map_err(|e| e.to_string())?);
        if seed < 3 {
            let data = generate_synthetic(&base).map_err(|e| e.to_string())?;
            clean.push(run_experiment(&data.d_opt, &data.d_eval, &data.prompts, &cfg).map_err(|e| e.to_string())?);
        }
    }
    Ok(TrendRuns {
        noisy,
        clean,
        elapsed: start.elapsed(),
    })
}

fn r(report: &EvalReport, m: Method) -> (f64, f64) {
    let row = report.row(m).expect("every method is reported");
    (row.r_opt, row.r_eval)
}

fn seeding_dominance(runs: &TrendRuns) -> Check {
    let mut checked = 0;
    let mut violations = Vec::new();
    for (k, report) in runs.noisy.iter().chain(&runs.clean).enumerate() {
        let floor = r(report, Method::All).0.max(r(report, Method::One).0);
        for m in [Method::Opt1, Method::Opt2, Method::Opt3] {
            checked += 1;
            if r(report, m).0 < floor {
                violations.push(format!("run {k} {m}: {} < {floor}", r(report, m).0));
            }
        }
    }
    ensure(violations.is_empty(), || violations.join("; "))?;
    Ok(format!("{checked}/{checked} (run, objective) pairs satisfy R_opt(OPT-k) >= max(ALL, ONE)"))
}

fn trend(runs: &TrendRuns) -> Check {
    let mean = |m: Method| runs.noisy.iter().map(|rep| r(rep, m).1).sum::<f64>() / runs.noisy.len() as f64;
    let (opt2, all, one) = (mean(Method::Opt2), mean(Method::All), mean(Method::One));
    ensure(opt2 > all && opt2 > one, || {
        format!("mean R_eval OPT-2 {opt2:.2}, ALL {all:.2}, ONE {one:.2}")
    })?;
    for report in &runs.clean {
        for row in &report.rows {
            ensure(row.r_opt == 100.0 && row.r_eval == 100.0, || {
                format!("zero noise: {} R_opt {} R_eval {}", row.method, row.r_opt, row.r_eval)
            })?;
        }
    }
    ensure(runs.elapsed < Duration::from_secs(300), || format!("took {:?}", runs.elapsed))?;
    Ok(format!(
        "mean R_eval OPT-2 {opt2:.2} > ALL {all:.2}, ONE {one:.2}; zero noise all 100 ({} runs); {:.1} s",
        runs.clean.len(),
        runs.elapsed.as_secs_f64()
    ))
}

fn invariance() -> Check {
    let mut rng = rng_from_seed(99);
    let e1_cfg = ObjectiveConfig::new(ObjectiveKind::E1);
    for case in 0..1000 {
        let t = rng.random_range(2..=40);
        let n_p = rng.random_range(1..=6);
        let rows: Vec<Vec<f64>> = (0..t)
            .map(|_| (0..n_p).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let m = SimilarityMatrix::from_rows(rows).map_err(|e| e.to_string())?;
        let labels: Vec<Label> = (0..t)
            .map(|_| if rng.random::<bool>() { Label::Positive } else { Label::Negative })
            .collect();
        let genes: Vec<f64> = (0..n_p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = WeightVector::new(genes.clone()).map_err(|e| e.to_string())?;
        let c = rng.random_range(0.01..=1.0);
        let scaled = WeightVector::new(genes.iter().map(|g| g * c).collect()).map_err(|e| e.to_string())?;

        let predictions = |w: &WeightVector| -> Result<Vec<Label>, String> {
            let e = weighted_score(&m, w).map_err(|e| e.to_string())?;
            let thr = calc_cthre(&e, &labels).map_err(|e| e.to_string())?;
            Ok(e.iter().map(|&x| predict(x, thr)).collect())
        };
        ensure(predictions(&w)? == predictions(&scaled)?, || format!("scaling changed predictions in case {case}"))?;

        let negated = WeightVector::new(genes.iter().map(|g| -g).collect()).map_err(|e| e.to_string())?;
        let flipped: Vec<Label> = labels.iter().map(|l| l.flipped()).collect();
        let a = evaluate_objective(&w, &m, &labels, &e1_cfg).map_err(|e| e.to_string())?;
        let b = evaluate_objective(&negated, &m, &flipped, &e1_cfg).map_err(|e| e.to_string())?;
        ensure(a.e1 == b.e1, || format!("sign flip changed E1 in case {case}: {} vs {}", a.e1, b.e1))?;
    }

    let edge = [-1.0, 1.0, 0.0, 0.999, -0.999];
    let draw = |rng: &mut GaRng| {
        let genes = (0..5)
            .map(|_| {
                if rng.random::<f64>() < 0.3 {
                    edge[rng.random_range(0..edge.len())]
                } else {
                    rng.random_range(-1.0..=1.0)
                }
            })
            .collect();
        WeightVector::new(genes).expect("genes in range")
    };
    let in_bounds = |w: &WeightVector| w.as_slice().iter().all(|g| (-1.0..=1.0).contains(g));
    let mut ops = 0;
    while ops < 1_000_000 {
        let (x, y) = (draw(&mut rng), draw(&mut rng));
        let (c1, c2) = blend_crossover(&x, &y, 0.5, &mut rng);
        let mutant = gaussian_mutate(&x, 0.5, 0.2, &mut rng);
        let wild = gaussian_mutate(&y, 3.0, 1.0, &mut rng);
        ops += 3;
        ensure(in_bounds(&c1) && in_bounds(&c2) && in_bounds(&mutant) && in_bounds(&wild), || {
            format!("gene out of bounds after {ops} operations")
        })?;
    }
    Ok(format!(
        "1000 scaling and 1000 sign-flip cases exact; {ops} genetic operations in [-1, 1]"
    ))
}

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_stateprompt"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn synth_dir(noise: &str) -> Result<tempfile::TempDir, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    cli(&[
        "synth", "--out-dir", path(dir.path()), "--image-noise", noise, "--prompt-noise", "0.05",
        "--distractors", "8", "--seed", "11",
    ])?;
    Ok(dir)
}

fn determinism() -> Check {
    let dir = synth_dir("0.8")?;
    let d = dir.path();
    let run = |out: &str, workers: &str| -> Result<Vec<u8>, String> {
        cli(&[
            "optimize", "--dataset", path(&d.join("d_opt.json")), "--prompts", path(&d.join("prompts.json")),
            "--out", path(&d.join(out)), "--objective", "e2", "--seed", "7", "--workers", workers,
        ])?;
        fs::read(d.join(out)).map_err(|e| e.to_string())
    };
    let first = run("a.json", "0")?;
    let second = run("b.json", "0")?;
    ensure(first == second, || "two runs with --seed 7 differ".into())?;
    let n = std::thread::available_parallelism().map_or(4, |n| n.get()).max(4);
    let single = run("c.json", "1")?;
    let many = run("d.json", &n.to_string())?;
    ensure(single == many && single == first, || format!("1 vs {n} workers differ"))?;
    Ok(format!("optimize --seed 7 byte-identical twice and at 1 vs {n} workers ({} bytes)", first.len()))
}

fn report_structure() -> Check {
    let dir = synth_dir("0.8")?;
    let d = dir.path();
    let csv = d.join("table.csv");
    let out = cli(&[
        "experiment", "--opt", path(&d.join("d_opt.json")), "--eval", path(&d.join("d_eval.json")),
        "--prompts", path(&d.join("prompts.json")), "--csv", path(&csv),
    ])?;
    let lines: Vec<&str> = out.lines().collect();
    let expected = ["OPT-1", "OPT-2", "OPT-3", "ALL", "ONE"];
    ensure(lines.len() >= 3, || format!("table too short:\n{out}"))?;
    ensure(lines[0].split_whitespace().eq(expected), || format!("header: {}", lines[0]))?;
    for (line, label) in lines[1..3].iter().zip(["R_opt [%]", "R_eval [%]"]) {
        let cells = line.strip_prefix(label).ok_or_else(|| format!("row label: {line}"))?;
        let values: Vec<f64> = cells
            .split_whitespace()
            .map(|c| c.parse::<f64>().map_err(|_| format!("cell '{c}' in: {line}")))
            .collect::<Result<_, _>>()?;
        ensure(values.len() == 5 && values.iter().all(|v| (0.0..=100.0).contains(v)), || {
            format!("row: {line}")
        })?;
    }
    let csv = fs::read_to_string(&csv).map_err(|e| e.to_string())?;
    let csv_methods: Vec<&str> = csv.lines().skip(1).filter_map(|l| l.split(',').next()).collect();
    ensure(csv.starts_with("method,R_opt,R_eval\n") && csv_methods == expected, || format!("csv:\n{csv}"))?;
    Ok("columns OPT-1 OPT-2 OPT-3 ALL ONE; rows R_opt, R_eval; CSV in the same order".into())
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, outcome: Check| {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    };
    report("threshold optimality", threshold_optimality());
    report("objective correctness", objective_correctness());
    report("GA vs grid oracle", ga_vs_grid());
    match trend_runs() {
        Ok(runs) => {
            report("seeding dominance", seeding_dominance(&runs));
            report("trend reproduction", trend(&runs));
        }
        Err(e) => {
            report("seeding dominance", Err(e.clone()));
            report("trend reproduction", Err(e));
        }
    }
    report("invariance suite", invariance());
    report("determinism", determinism());
    report("report structure", report_structure());
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    }
}
