//! Generational genetic algorithm over prompt weight vectors in
//! `[-1, 1]^N`, and an exhaustive lattice search used to check it.
//!
//! One generation: tournament-select a full offspring population, blend
//! consecutive pairs with probability `crossover_prob`, Gaussian-mutate
//! each offspring with probability `mutation_prob`, clamp, then evaluate
//! the offspring that changed. A size-one hall of fame tracks the best
//! individual ever evaluated.
//!
//! All randomness comes from one ChaCha stream consumed by the sequential
//! select/vary loop. Fitness evaluation is pure and may run on any number
//! of worker threads without changing the result.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::embedding::{require_classes, Label, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::objectives::{evaluate_objective, ObjectiveConfig, ObjectiveValue};
use crate::recognition::WeightVector;

pub type GaRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> GaRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    /// Probability that a consecutive parent pair is blended.
    pub crossover_prob: f64,
    /// Probability that an offspring is mutated at all.
    pub mutation_prob: f64,
    pub mutation_sigma: f64,
    /// Per-gene probability of noise inside a mutated offspring.
    pub mutation_gene_prob: f64,
    pub blend_alpha: f64,
    pub tournament_size: usize,
    pub rng_seed: u64,
    /// Evaluation threads; 0 uses the global rayon pool, 1 runs inline.
    pub workers: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 300,
            generations: 300,
            crossover_prob: 0.5,
            mutation_prob: 0.2,
            mutation_sigma: 0.5,
            mutation_gene_prob: 0.2,
            blend_alpha: 0.5,
            tournament_size: 3,
            rng_seed: 0,
            workers: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.population_size < 2 {
            return bad(format!("population_size {} < 2", self.population_size));
        }
        if self.tournament_size < 1 {
            return bad("tournament_size must be at least 1".into());
        }
        for (name, p) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
            ("mutation_gene_prob", self.mutation_gene_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if !(self.mutation_sigma >= 0.0 && self.mutation_sigma.is_finite()) {
            return bad(format!("mutation_sigma = {}", self.mutation_sigma));
        }
        if !(self.blend_alpha >= 0.0 && self.blend_alpha.is_finite()) {
            return bad(format!("blend_alpha = {}", self.blend_alpha));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub weights: WeightVector,
    /// `None` until evaluated; reset whenever the genes change.
    pub fitness: Option<f64>,
}

impl Individual {
    pub fn new(weights: WeightVector) -> Self {
        Self {
            weights,
            fitness: None,
        }
    }

    fn fitness_or_worst(&self) -> f64 {
        self.fitness.unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    /// Hall-of-fame individual: the best ever evaluated.
    pub best: Individual,
    pub best_objective: ObjectiveValue,
    /// Best-so-far fitness after the initial evaluation and after each
    /// generation (`generations + 1` entries).
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Seed vectors: the polarity vector followed by `+e_i, -e_i` for each
/// prompt.
pub fn standard_seeds(polarities: &[Label]) -> Vec<WeightVector> {
    let n = polarities.len();
    let mut seeds = Vec::with_capacity(2 * n + 1);
    seeds.push(WeightVector::from_polarities(polarities));
    for i in 0..n {
        seeds.push(WeightVector::unit(n, i, Label::Positive));
        seeds.push(WeightVector::unit(n, i, Label::Negative));
    }
    seeds
}

/// Seeds first (truncated to `n`), the rest uniform on `[-1, 1]^n_p`.
pub fn init_population<R: Rng>(
    n: usize,
    n_p: usize,
    seeds: &[WeightVector],
    rng: &mut R,
) -> Result<Vec<Individual>> {
    if n < 1 {
        return Err(Error::InvalidConfig("population size must be at least 1".into()));
    }
    if n_p < 1 {
        return Err(Error::Empty("weight dimension"));
    }
    if let Some(s) = seeds.iter().find(|s| s.len() != n_p) {
        return Err(Error::LengthMismatch {
            what: "seed vs prompts",
            left: s.len(),
            right: n_p,
        });
    }
    let mut pop: Vec<Individual> = seeds.iter().take(n).cloned().map(Individual::new).collect();
    while pop.len() < n {
        let genes = (0..n_p).map(|_| rng.random_range(-1.0..=1.0)).collect();
        pop.push(Individual::new(WeightVector::clamped(genes)));
    }
    Ok(pop)
}

/// Draws `k` contestants with replacement and returns the fittest; the
/// earliest drawn wins ties.
pub fn tournament_select<'a, R: Rng>(
    pop: &'a [Individual],
    k: usize,
    rng: &mut R,
) -> Result<&'a Individual> {
    if pop.is_empty() {
        return Err(Error::Empty("population"));
    }
    if k < 1 {
        return Err(Error::InvalidConfig("tournament size must be at least 1".into()));
    }
    if pop.iter().any(|ind| ind.fitness.is_none()) {
        return Err(Error::InvalidConfig("tournament over unevaluated individuals".into()));
    }
    let mut best = &pop[rng.random_range(0..pop.len())];
    for _ in 1..k {
        let contender = &pop[rng.random_range(0..pop.len())];
        if contender.fitness_or_worst() > best.fitness_or_worst() {
            best = contender;
        }
    }
    Ok(best)
}

/// Blend crossover with an explicit source of the per-gene uniform draw.
pub fn blend_with(
    x: &WeightVector,
    y: &WeightVector,
    alpha: f64,
    mut draw_u: impl FnMut() -> f64,
) -> (WeightVector, WeightVector) {
    let (c1, c2) = x
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(&a, &b)| {
            let gamma = (1.0 + 2.0 * alpha) * draw_u() - alpha;
            ((1.0 - gamma) * a + gamma * b, gamma * a + (1.0 - gamma) * b)
        })
        .unzip();
    (WeightVector::clamped(c1), WeightVector::clamped(c2))
}

/// Per gene: `gamma = (1 + 2 alpha) u - alpha` with `u ~ U(0, 1)`; the
/// children are `(1 - gamma) x + gamma y` and `gamma x + (1 - gamma) y`,
/// clamped to `[-1, 1]`.
pub fn blend_crossover<R: Rng>(
    x: &WeightVector,
    y: &WeightVector,
    alpha: f64,
    rng: &mut R,
) -> (WeightVector, WeightVector) {
    blend_with(x, y, alpha, || rng.random::<f64>())
}

/// Adds `N(0, sigma)` noise to each gene with probability `gene_prob`.
/// No clamping.
pub fn perturb_genes<R: Rng>(genes: &[f64], sigma: f64, gene_prob: f64, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    genes
        .iter()
        .map(|&g| {
            if rng.random::<f64>() < gene_prob {
                g + normal.sample(rng)
            } else {
                g
            }
        })
        .collect()
}

pub fn gaussian_mutate<R: Rng>(
    x: &WeightVector,
    sigma: f64,
    gene_prob: f64,
    rng: &mut R,
) -> WeightVector {
    WeightVector::clamped(perturb_genes(x.as_slice(), sigma, gene_prob, rng))
}

struct Evaluator<'a> {
    m: &'a SimilarityMatrix,
    labels: &'a [Label],
    cfg: &'a ObjectiveConfig,
    pool: Option<rayon::ThreadPool>,
    parallel: bool,
}

impl Evaluator<'_> {
    fn fitness(&self, w: &WeightVector) -> Result<f64> {
        let v = evaluate_objective(w, self.m, self.labels, self.cfg)?;
        Ok(if v.fitness.is_nan() {
            f64::NEG_INFINITY
        } else {
            v.fitness
        })
    }

    /// Evaluates every individual without a fitness; returns how many.
    fn evaluate(&self, pop: &mut [Individual]) -> Result<usize> {
        let pending: Vec<&mut Individual> =
            pop.iter_mut().filter(|ind| ind.fitness.is_none()).collect();
        let count = pending.len();
        let run = |pending: Vec<&mut Individual>| -> Result<()> {
            if self.parallel {
                pending.into_par_iter().try_for_each(|ind| {
                    ind.fitness = Some(self.fitness(&ind.weights)?);
                    Ok(())
                })
            } else {
                pending.into_iter().try_for_each(|ind| {
                    ind.fitness = Some(self.fitness(&ind.weights)?);
                    Ok(())
                })
            }
        };
        match &self.pool {
            Some(pool) => pool.install(|| run(pending))?,
            None => run(pending)?,
        }
        Ok(count)
    }
}

fn update_hall_of_fame(hof: &mut Option<Individual>, pop: &[Individual]) {
    for ind in pop {
        let better = match hof {
            Some(best) => ind.fitness_or_worst() > best.fitness_or_worst(),
            None => true,
        };
        if better {
            *hof = Some(ind.clone());
        }
    }
}

/// Maximizes the configured objective over weight vectors.
///
/// `seeds` are placed at the front of the initial population, so the
/// returned best is never worse than any of them.
pub fn optimize_weights(
    m: &SimilarityMatrix,
    labels: &[Label],
    obj_cfg: &ObjectiveConfig,
    ga_cfg: &GaConfig,
    seeds: &[WeightVector],
) -> Result<OptimizationResult> {
    ga_cfg.validate()?;
    obj_cfg.validate()?;
    if labels.len() != m.rows() {
        return Err(Error::LengthMismatch {
            what: "labels vs similarity rows",
            left: labels.len(),
            right: m.rows(),
        });
    }
    require_classes(labels, obj_cfg.kind.min_per_class())?;

    let pool = match ga_cfg.workers {
        0 | 1 => None,
        n => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?,
        ),
    };
    let evaluator = Evaluator {
        m,
        labels,
        cfg: obj_cfg,
        pool,
        parallel: ga_cfg.workers != 1,
    };

    let mut rng = rng_from_seed(ga_cfg.rng_seed);
    let n_p = m.cols();
    let mut pop = init_population(ga_cfg.population_size, n_p, seeds, &mut rng)?;
    let mut evaluations = evaluator.evaluate(&mut pop)?;
    let mut hof = None;
    update_hall_of_fame(&mut hof, &pop);
    let mut history = Vec::with_capacity(ga_cfg.generations + 1);
    history.push(hof.as_ref().map_or(f64::NEG_INFINITY, Individual::fitness_or_worst));

    for _ in 0..ga_cfg.generations {
        let mut offspring = Vec::with_capacity(pop.len());
        for _ in 0..pop.len() {
            offspring.push(tournament_select(&pop, ga_cfg.tournament_size, &mut rng)?.clone());
        }
        for pair in offspring.chunks_exact_mut(2) {
            if rng.random::<f64>() < ga_cfg.crossover_prob {
                let (c1, c2) =
                    blend_crossover(&pair[0].weights, &pair[1].weights, ga_cfg.blend_alpha, &mut rng);
                pair[0] = Individual::new(c1);
                pair[1] = Individual::new(c2);
            }
        }
        for ind in &mut offspring {
            if rng.random::<f64>() < ga_cfg.mutation_prob {
                let w = gaussian_mutate(
                    &ind.weights,
                    ga_cfg.mutation_sigma,
                    ga_cfg.mutation_gene_prob,
                    &mut rng,
                );
                *ind = Individual::new(w);
            }
        }
        debug_assert!(offspring
            .iter()
            .all(|ind| ind.weights.as_slice().iter().all(|g| (-1.0..=1.0).contains(g))));
        evaluations += evaluator.evaluate(&mut offspring)?;
        update_hall_of_fame(&mut hof, &offspring);
        history.push(hof.as_ref().map_or(f64::NEG_INFINITY, Individual::fitness_or_worst));
        pop = offspring;
    }

    let best = hof.expect("population is non-empty");
    let best_objective = evaluate_objective(&best.weights, m, labels, obj_cfg)?;
    Ok(OptimizationResult {
        best,
        best_objective,
        history,
        evaluations,
    })
}

/// Largest prompt count accepted by [`grid_search_oracle`].
pub const GRID_MAX_PROMPTS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub weights: WeightVector,
    pub objective: ObjectiveValue,
    pub evaluations: usize,
}

/// Lattice values `-1, -1 + step, ...` up to 1.
pub fn grid_axis(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidConfig(format!("grid step {step}")));
    }
    let intervals = (2.0 / step + 1e-9).floor() as usize;
    Ok((0..=intervals)
        .map(|k| {
            let v = -1.0 + k as f64 * step;
            if v.abs() < 1e-12 {
                0.0
            } else {
                v.clamp(-1.0, 1.0)
            }
        })
        .collect())
}

/// Exhaustive search over the lattice `{-1, -1 + step, ..., 1}^N_P`
/// (all-zero point excluded). The first maximizer in lexicographic order
/// wins.
pub fn grid_search_oracle(
    m: &SimilarityMatrix,
    labels: &[Label],
    obj_cfg: &ObjectiveConfig,
    step: f64,
) -> Result<GridSearchResult> {
    let n_p = m.cols();
    if n_p > GRID_MAX_PROMPTS {
        return Err(Error::GridTooLarge(n_p));
    }
    obj_cfg.validate()?;
    let axis = grid_axis(step)?;
    let mut idx = vec![0usize; n_p];
    let mut best: Option<(WeightVector, ObjectiveValue)> = None;
    let mut evaluations = 0;
    loop {
        let genes: Vec<f64> = idx.iter().map(|&k| axis[k]).collect();
        if genes.iter().any(|&g| g != 0.0) {
            let w = WeightVector::new(genes)?;
            let v = evaluate_objective(&w, m, labels, obj_cfg)?;
            evaluations += 1;
            if best.as_ref().is_none_or(|(_, b)| v.fitness > b.fitness) {
                best = Some((w, v));
            }
        }
        // odometer, last coordinate fastest
        let mut pos = n_p;
        loop {
            if pos == 0 {
                let (weights, objective) = best.expect("lattice has a non-zero point");
                return Ok(GridSearchResult {
                    weights,
                    objective,
                    evaluations,
                });
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < axis.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}
