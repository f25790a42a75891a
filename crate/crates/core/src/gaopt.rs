//! Elitist genetic search over distance-weight vectors. An individual's
//! fitness is the inverse Davies-Bouldin index of the k-means clustering its
//! weights induce, with k held fixed for the whole run.

use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans_fit, FeatureMatrix, KMeansConfig, WeightVector};
use crate::error::{Error, Result};
use crate::{exec, seed};

/// Fitness assigned when the Davies-Bouldin index is (numerically) zero.
pub const FITNESS_CAP: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub crossover_prob: f64,
    pub blend_alpha: f64,
    pub mutation_sigma: f64,
    pub gene_mutation_prob: f64,
    pub elites: usize,
    pub seed: u64,
    /// Evaluate fitness on a fixed random subset of at most this many rows.
    pub fitness_sample: Option<usize>,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 52,
            generations: 30,
            tournament_size: 3,
            crossover_prob: 0.7,
            blend_alpha: 0.5,
            mutation_sigma: 0.2,
            gene_mutation_prob: 0.2,
            elites: 1,
            seed: 0,
            fitness_sample: None,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::config("population must be at least 2"));
        }
        if self.tournament_size == 0 {
            return Err(Error::config("tournament_size must be at least 1"));
        }
        if self.elites >= self.population {
            return Err(Error::config("elites must be smaller than the population"));
        }
        for (name, p) in [
            ("crossover_prob", self.crossover_prob),
            ("gene_mutation_prob", self.gene_mutation_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.blend_alpha >= 0.0) || !self.blend_alpha.is_finite() {
            return Err(Error::config("blend_alpha must be finite and non-negative"));
        }
        if !(self.mutation_sigma >= 0.0) || !self.mutation_sigma.is_finite() {
            return Err(Error::config("mutation_sigma must be finite and non-negative"));
        }
        if self.fitness_sample == Some(0) {
            return Err(Error::config("fitness_sample must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: WeightVector,
    /// `None` until evaluated.
    pub fitness: Option<f64>,
}

impl Individual {
    fn new(genome: WeightVector) -> Self {
        Self {
            genome,
            fitness: None,
        }
    }

    fn score(&self) -> f64 {
        self.fitness.unwrap_or(0.0)
    }
}

/// Per-generation statistics; entry 0 is the initial population.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GaTrace {
    pub best: Vec<f64>,
    pub mean: Vec<f64>,
    pub best_genome: Vec<Vec<f64>>,
}

impl GaTrace {
    pub fn len(&self) -> usize {
        self.best.len()
    }

    pub fn is_empty(&self) -> bool {
        self.best.is_empty()
    }

    fn record(&mut self, population: &[Individual]) {
        let (bi, best) = best_of(population);
        let mean = population.iter().map(Individual::score).sum::<f64>() / population.len() as f64;
        self.best.push(best.score());
        self.mean.push(mean);
        self.best_genome.push(population[bi].genome.as_slice().to_vec());
    }

    /// `generation,best,mean` rows.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("generation,best,mean\n");
        for (g, (b, m)) in self.best.iter().zip(&self.mean).enumerate() {
            out.push_str(&format!("{g},{b},{m}\n"));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv_string().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaOutcome {
    pub best: WeightVector,
    pub best_fitness: f64,
    pub trace: GaTrace,
}

pub fn repair(genome: &[f64]) -> WeightVector {
    WeightVector::repair(genome)
}

/// Slot 0 holds `seed_individual` when given; every other genome is drawn
/// uniformly on `[0, 1]^d` and repaired.
pub fn init_population(
    d: usize,
    seed_individual: Option<&WeightVector>,
    cfg: &GaConfig,
) -> Result<Vec<Individual>> {
    cfg.validate()?;
    if d == 0 {
        return Err(Error::contract("genome dimension must be at least 1"));
    }
    if let Some(s) = seed_individual {
        if s.dim() != d {
            return Err(Error::contract(format!(
                "seed individual has dimension {}, expected {d}",
                s.dim()
            )));
        }
    }
    let mut rng = seed::rng_for(cfg.seed, &[0x1417]);
    let mut population = Vec::with_capacity(cfg.population);
    if let Some(s) = seed_individual {
        population.push(Individual::new(s.clone()));
    }
    while population.len() < cfg.population {
        let genome: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        population.push(Individual::new(repair(&genome)));
    }
    Ok(population)
}

/// Maps a Davies-Bouldin index to fitness.
pub fn fitness_from_db(db: Option<f64>) -> f64 {
    match db {
        Some(db) if db.is_finite() && db >= 0.0 => {
            if db < 1e-12 {
                FITNESS_CAP
            } else {
                1.0 / db
            }
        }
        _ => 0.0,
    }
}

/// `1 / DB` of the k-means clustering under `w`.
pub fn evaluate_fitness(
    w: &WeightVector,
    x: &FeatureMatrix,
    k: usize,
    kmeans_cfg: &KMeansConfig,
) -> Result<f64> {
    let cfg = KMeansConfig {
        k,
        ..kmeans_cfg.clone()
    };
    let model = kmeans_fit(x, w, &cfg)?;
    Ok(fitness_from_db(model.db_score))
}

/// Highest fitness among `drawn`, in draw order; ties go to the first drawn.
pub fn tournament_winner(population: &[Individual], drawn: &[usize]) -> usize {
    let mut winner = drawn[0];
    for &i in &drawn[1..] {
        if population[i].score() > population[winner].score() {
            winner = i;
        }
    }
    winner
}

/// Draws `tournament_size` contestants with replacement and returns the
/// index of the winner.
pub fn tournament_select(population: &[Individual], cfg: &GaConfig, rng: &mut seed::Rng) -> usize {
    assert!(!population.is_empty(), "tournament needs a population");
    let drawn: Vec<usize> = (0..cfg.tournament_size.max(1))
        .map(|_| rng.random_range(0..population.len()))
        .collect();
    tournament_winner(population, &drawn)
}

/// One gene of a blend crossover at a fixed uniform draw `u`.
pub fn blend_gene(a: f64, b: f64, u: f64, alpha: f64) -> (f64, f64) {
    let gamma = (1.0 + 2.0 * alpha) * u - alpha;
    ((1.0 - gamma) * a + gamma * b, gamma * a + (1.0 - gamma) * b)
}

/// Blend crossover applied with probability `crossover_prob`; otherwise the
/// children are copies of the parents. Children are not repaired here.
pub fn blend_crossover(
    p1: &[f64],
    p2: &[f64],
    cfg: &GaConfig,
    rng: &mut seed::Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if p1.len() != p2.len() {
        return Err(Error::contract(format!(
            "parents differ in dimension: {} vs {}",
            p1.len(),
            p2.len()
        )));
    }
    if rng.random::<f64>() >= cfg.crossover_prob {
        return Ok((p1.to_vec(), p2.to_vec()));
    }
    let (c1, c2) = p1
        .iter()
        .zip(p2)
        .map(|(&a, &b)| blend_gene(a, b, rng.random::<f64>(), cfg.blend_alpha))
        .unzip();
    Ok((c1, c2))
}

/// Adds `N(0, σ²)` to each gene with probability `gene_mutation_prob`, then
/// repairs onto the simplex.
pub fn gaussian_mutate(genome: &[f64], cfg: &GaConfig, rng: &mut seed::Rng) -> WeightVector {
    let mut out = genome.to_vec();
    if cfg.gene_mutation_prob > 0.0 && cfg.mutation_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.mutation_sigma).expect("sigma validated");
        for g in &mut out {
            if rng.random::<f64>() < cfg.gene_mutation_prob {
                *g += noise.sample(rng);
            }
        }
    }
    repair(&out)
}

fn best_of(population: &[Individual]) -> (usize, &Individual) {
    let mut bi = 0;
    for (i, ind) in population.iter().enumerate() {
        if ind.score() > population[bi].score() {
            bi = i;
        }
    }
    (bi, &population[bi])
}

fn evaluate_all(
    population: &mut [Individual],
    x: &FeatureMatrix,
    k: usize,
    kmeans_cfg: &KMeansConfig,
    ga_seed: u64,
    generation: usize,
) -> Result<()> {
    let pending: Vec<usize> = (0..population.len())
        .filter(|&i| population[i].fitness.is_none())
        .collect();
    let pop: &[Individual] = population;
    let scores = exec::try_map_indexed(pending.len(), |j| {
        let i = pending[j];
        let cfg = KMeansConfig {
            seed: seed::derive(ga_seed, &[generation as u64, i as u64]),
            ..kmeans_cfg.clone()
        };
        evaluate_fitness(&pop[i].genome, x, k, &cfg)
    })?;
    for (i, s) in pending.into_iter().zip(scores) {
        population[i].fitness = Some(s);
    }
    Ok(())
}

/// Runs the generational loop and returns the best individual found with
/// the per-generation trace (`generations + 1` entries).
///
/// Elites keep their cached fitness instead of being re-evaluated with a
/// fresh k-means seed, so the best fitness never decreases.
pub fn run_ga(
    x: &FeatureMatrix,
    k: usize,
    seed_individual: Option<&WeightVector>,
    cfg: &GaConfig,
    kmeans_cfg: &KMeansConfig,
) -> Result<GaOutcome> {
    let sampled;
    let x = match cfg.fitness_sample {
        Some(m) if m < x.n_rows() => {
            let mut rng = seed::rng_for(cfg.seed, &[0x5A]);
            let mut rows = sample(&mut rng, x.n_rows(), m).into_vec();
            rows.sort_unstable();
            sampled = x.take_rows(&rows);
            &sampled
        }
        _ => x,
    };

    let mut population = init_population(x.dim(), seed_individual, cfg)?;
    let mut trace = GaTrace::default();
    evaluate_all(&mut population, x, k, kmeans_cfg, cfg.seed, 0)?;
    trace.record(&population);

    for generation in 1..=cfg.generations {
        let mut rng = seed::rng_for(cfg.seed, &[0x6E, generation as u64]);
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| population[b].score().total_cmp(&population[a].score()));

        let mut next: Vec<Individual> = order[..cfg.elites]
            .iter()
            .map(|&i| population[i].clone())
            .collect();
        while next.len() < cfg.population {
            let a = tournament_select(&population, cfg, &mut rng);
            let b = tournament_select(&population, cfg, &mut rng);
            let (c1, c2) = blend_crossover(
                population[a].genome.as_slice(),
                population[b].genome.as_slice(),
                cfg,
                &mut rng,
            )?;
            for child in [c1, c2] {
                if next.len() < cfg.population {
                    next.push(Individual::new(gaussian_mutate(&child, cfg, &mut rng)));
                }
            }
        }
        population = next;
        evaluate_all(&mut population, x, k, kmeans_cfg, cfg.seed, generation)?;
        trace.record(&population);
    }

    let (_, best) = best_of(&population);
    Ok(GaOutcome {
        best: best.genome.clone(),
        best_fitness: best.score(),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::davies_bouldin;
    use rand_distr::StandardNormal;

    fn assert_close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn repair_examples() {
        assert_close(
            repair(&[-0.2, 0.5, 0.7]).as_slice(),
            &[0.0, 5.0 / 12.0, 7.0 / 12.0],
        );
        assert_close(repair(&[0.0, 0.0, 0.0]).as_slice(), &[1.0 / 3.0; 3]);
        let valid = [0.6, 0.3, 0.1];
        assert_eq!(repair(&valid).as_slice(), &valid);
    }

    #[test]
    fn initial_population() {
        let cfg = GaConfig::default();
        let pop = init_population(3, None, &cfg).unwrap();
        assert_eq!(pop.len(), 52);
        for ind in &pop {
            WeightVector::new(ind.genome.as_slice().to_vec()).unwrap();
        }
        assert_eq!(pop, init_population(3, None, &cfg).unwrap());

        let s = WeightVector::new(vec![0.6, 0.3, 0.1]).unwrap();
        let pop = init_population(3, Some(&s), &cfg).unwrap();
        assert_eq!(pop[0].genome.as_slice(), &[0.6, 0.3, 0.1]);
        assert!(init_population(2, Some(&s), &cfg).is_err());
        assert!(init_population(0, None, &cfg).is_err());
    }

    #[test]
    fn fitness_mapping() {
        assert_eq!(fitness_from_db(Some(0.5)), 2.0);
        assert_eq!(fitness_from_db(Some(f64::INFINITY)), 0.0);
        assert_eq!(fitness_from_db(None), 0.0);
        assert_eq!(fitness_from_db(Some(0.0)), FITNESS_CAP);
    }

    #[test]
    fn coincident_centroids_score_zero() {
        // Two distinct values only in a dimension with zero weight.
        let x = FeatureMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]])
            .unwrap();
        let w = WeightVector::new(vec![1.0, 0.0]).unwrap();
        let f = evaluate_fitness(&w, &x, 2, &KMeansConfig::default()).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn fitness_times_db_is_one() {
        let x = FeatureMatrix::from_rows(&[
            vec![0.0, 0.1],
            vec![0.1, 0.0],
            vec![1.0, 0.9],
            vec![0.9, 1.0],
            vec![0.5, 0.4],
        ])
        .unwrap();
        let w = WeightVector::new(vec![0.7, 0.3]).unwrap();
        let cfg = KMeansConfig::with_k(2);
        let f = evaluate_fitness(&w, &x, 2, &cfg).unwrap();
        let model = kmeans_fit(&x, &w, &cfg).unwrap();
        let db = davies_bouldin(&x, &model, &w).unwrap();
        assert!((f * db - 1.0).abs() < 1e-9);
    }

    fn with_fitness(values: &[f64]) -> Vec<Individual> {
        values
            .iter()
            .map(|&f| Individual {
                genome: WeightVector::uniform(2),
                fitness: Some(f),
            })
            .collect()
    }

    #[test]
    fn tournament_rules() {
        let pop = with_fitness(&[0.1, 0.9, 0.5]);
        assert_eq!(tournament_winner(&pop, &[0, 1, 2]), 1);
        let flat = with_fitness(&[0.4, 0.4, 0.4]);
        assert_eq!(tournament_winner(&flat, &[2, 0, 1]), 2);
        let single = with_fitness(&[0.3]);
        let mut rng = seed::rng(1);
        assert_eq!(tournament_select(&single, &GaConfig::default(), &mut rng), 0);
    }

    #[test]
    fn blend_examples() {
        let (c1, c2) = blend_gene(0.2, 0.6, 0.5, 0.5);
        assert!((c1 - 0.4).abs() < 1e-15 && (c2 - 0.4).abs() < 1e-15);
        let (lo, _) = blend_gene(0.2, 0.6, 0.0, 0.5);
        let (hi, _) = blend_gene(0.2, 0.6, 1.0, 0.5);
        assert!((lo - 0.0).abs() < 1e-15 && (hi - 0.8).abs() < 1e-15, "{lo} {hi}");

        let never = GaConfig {
            crossover_prob: 0.0,
            ..GaConfig::default()
        };
        let mut rng = seed::rng(3);
        let (a, b) = blend_crossover(&[0.2, 0.8], &[0.5, 0.5], &never, &mut rng).unwrap();
        assert_eq!((a, b), (vec![0.2, 0.8], vec![0.5, 0.5]));
        assert!(blend_crossover(&[1.0], &[0.5, 0.5], &never, &mut rng).is_err());
    }

    #[test]
    fn mutation_limits() {
        let mut rng = seed::rng(4);
        let g = [0.25, 0.25, 0.5];
        let off = GaConfig {
            gene_mutation_prob: 0.0,
            ..GaConfig::default()
        };
        assert_eq!(gaussian_mutate(&g, &off, &mut rng).as_slice(), &g);
        let quiet = GaConfig {
            mutation_sigma: 0.0,
            gene_mutation_prob: 1.0,
            ..GaConfig::default()
        };
        assert_eq!(gaussian_mutate(&g, &quiet, &mut rng).as_slice(), &g);
        let wild = GaConfig {
            mutation_sigma: 5.0,
            gene_mutation_prob: 1.0,
            ..GaConfig::default()
        };
        for _ in 0..200 {
            let m = gaussian_mutate(&g, &wild, &mut rng);
            WeightVector::new(m.into_vec()).unwrap();
        }
    }

    /// Three clusters separated along dims 0 and 1; the rest is noise.
    fn planted(n: usize, noise_dims: usize, seed_: u64) -> FeatureMatrix {
        let mut rng = seed::rng(seed_);
        let centres = [[0.2, 0.2], [0.8, 0.3], [0.5, 0.8]];
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let c = centres[i % 3];
                let mut r: Vec<f64> = c
                    .iter()
                    .map(|&m| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + 0.04 * z
                    })
                    .collect();
                r.extend((0..noise_dims).map(|_| rng.random::<f64>()));
                r
            })
            .collect();
        FeatureMatrix::from_rows(&rows).unwrap()
    }

    fn small_cfg(seed_: u64) -> (GaConfig, KMeansConfig) {
        (
            GaConfig {
                population: 16,
                generations: 8,
                seed: seed_,
                ..GaConfig::default()
            },
            KMeansConfig {
                n_init: 2,
                ..KMeansConfig::default()
            },
        )
    }

    #[test]
    fn oracle_weights_beat_uniform() {
        let x = planted(300, 1, 2);
        let km = KMeansConfig::default();
        let oracle = WeightVector::new(vec![0.5, 0.5, 0.0]).unwrap();
        let f_oracle = evaluate_fitness(&oracle, &x, 3, &km).unwrap();
        let f_uniform = evaluate_fitness(&WeightVector::uniform(3), &x, 3, &km).unwrap();
        assert!(f_oracle > f_uniform, "{f_oracle} vs {f_uniform}");
    }

    #[test]
    fn trace_is_monotone_and_deterministic() {
        let x = planted(240, 2, 7);
        let (cfg, km) = small_cfg(11);
        let a = run_ga(&x, 3, None, &cfg, &km).unwrap();
        assert_eq!(a.trace.len(), cfg.generations + 1);
        assert!(
            a.trace.best.windows(2).all(|w| w[1] >= w[0]),
            "{:?}",
            a.trace.best
        );
        assert_eq!(a.best_fitness, *a.trace.best.last().unwrap());
        let b = run_ga(&x, 3, None, &cfg, &km).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.to_csv_string().starts_with("generation,best,mean\n0,"));
    }

    #[test]
    fn zero_generations_returns_initial_best() {
        let x = planted(90, 1, 3);
        let (cfg, km) = small_cfg(5);
        let cfg = GaConfig {
            generations: 0,
            ..cfg
        };
        let out = run_ga(&x, 3, None, &cfg, &km).unwrap();
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.best_fitness, out.trace.best[0]);
        assert_eq!(out.best.as_slice(), out.trace.best_genome[0].as_slice());
    }

    #[test]
    fn seed_individual_survives_when_best() {
        let x = planted(150, 2, 9);
        let (cfg, km) = small_cfg(1);
        let seed_w = WeightVector::new(vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let out = run_ga(&x, 3, Some(&seed_w), &cfg, &km).unwrap();
        assert!(out.best_fitness >= out.trace.best[0]);
        let noise: f64 = out.best.as_slice()[2..].iter().sum();
        assert!(noise < 0.1, "{:?}", out.best);
    }

    #[test]
    fn learns_to_ignore_noise() {
        let x = planted(600, 1, 21);
        let cfg = GaConfig {
            seed: 4,
            ..GaConfig::default()
        };
        let km = KMeansConfig {
            n_init: 2,
            ..KMeansConfig::default()
        };
        let out = run_ga(&x, 3, None, &cfg, &km).unwrap();
        assert!(out.best.as_slice()[2] < 0.1, "{:?}", out.best);
        let uniform = WeightVector::uniform(3);
        let db = |w: &WeightVector| {
            let m = kmeans_fit(&x, w, &KMeansConfig::with_k(3)).unwrap();
            davies_bouldin(&x, &m, w).unwrap()
        };
        assert!(db(&out.best) <= 0.8 * db(&uniform));
    }

    #[test]
    fn config_validation() {
        let bad = [
            GaConfig {
                population: 1,
                ..GaConfig::default()
            },
            GaConfig {
                elites: 52,
                ..GaConfig::default()
            },
            GaConfig {
                crossover_prob: 1.5,
                ..GaConfig::default()
            },
            GaConfig {
                gene_mutation_prob: -0.1,
                ..GaConfig::default()
            },
            GaConfig {
                tournament_size: 0,
                ..GaConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
