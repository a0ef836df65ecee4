//! Differential evolution over gridded boxes: candidates evolve in the
//! continuous box, but every fitness call sees the snapped, clipped
//! point. One difference pair plus the incumbent best forms each mutant.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One search coordinate: a closed range walked in fixed steps. The step
/// must divide the range exactly so snapped values land on the grid ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDim {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl GridDim {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && step.is_finite()) || max < min {
            return Err(Error::InvalidArgument(format!(
                "grid range [{min}, {max}] invalid"
            )));
        }
        if step <= 0.0 {
            return Err(Error::InvalidArgument(format!("grid step {step} must be positive")));
        }
        let span = (max - min) / step;
        if (span - span.round()).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "step {step} does not divide range [{min}, {max}]"
            )));
        }
        Ok(Self { min, max, step })
    }

    /// Nearest grid point, never outside the range.
    pub fn snap(&self, x: f64) -> f64 {
        let clipped = x.clamp(self.min, self.max);
        let k = ((clipped - self.min) / self.step).round();
        (self.min + k * self.step).min(self.max)
    }

    pub fn clip(&self, x: f64) -> f64 {
        x.clamp(self.min, self.max)
    }

    pub fn n_points(&self) -> usize {
        ((self.max - self.min) / self.step).round() as usize + 1
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.max > self.min {
            rng.gen_range(self.min..self.max)
        } else {
            self.min
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeConfig {
    pub population: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub crossover: f64,
    pub mutation: f64,
    pub rng_seed: u64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            population: 100,
            max_iterations: 5,
            tolerance: 0.001,
            crossover: 0.7,
            mutation: 0.8,
            rng_seed: 0,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 5 {
            return Err(Error::InvalidArgument(format!(
                "population {} must be at least 5",
                self.population
            )));
        }
        if !(self.crossover > 0.0 && self.crossover <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "crossover {} must be in (0, 1]",
                self.crossover
            )));
        }
        if !(self.mutation > 0.0 && self.mutation < 2.0) {
            return Err(Error::InvalidArgument(format!(
                "mutation {} must be in (0, 2)",
                self.mutation
            )));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance {} must be non-negative",
                self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeOutcome {
    /// Best point seen, snapped to the grid.
    pub best: Vec<f64>,
    pub best_fitness: f64,
    /// Best fitness after initialization and after each generation.
    pub trace: Vec<f64>,
    /// Fitness evaluations performed: population x (1 + generations run).
    pub invocations: usize,
    pub generations_run: usize,
    pub converged: bool,
}

/// Maximize `fitness` over the gridded box. Candidates live in the
/// continuous box; each is snapped and clipped before evaluation. Per
/// generation every member j gets a trial built from the generation-start
/// best plus a scaled difference of two distinct members, crossed over
/// coordinate-wise (one coordinate always comes from the mutant); the
/// trial replaces j only if its fitness is strictly higher. Stops after
/// `max_iterations` generations or once the population's fitness standard
/// deviation drops below `tolerance`. Randomness is drawn sequentially
/// from a seeded stream; only fitness evaluation runs in parallel, so
/// results are reproducible for a fixed seed.
pub fn differential_evolution<F>(fitness: F, dims: &[GridDim], cfg: &DeConfig) -> Result<DeOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    if dims.is_empty() {
        return Err(Error::InvalidArgument("search space has no dimensions".into()));
    }
    let n = cfg.population;
    let snap_point = |x: &[f64]| -> Vec<f64> {
        x.iter().zip(dims).map(|(&v, d)| d.snap(v)).collect()
    };
    let evaluate = |points: &[Vec<f64>]| -> Vec<f64> {
        points
            .par_iter()
            .map(|x| {
                let value = fitness(&snap_point(x));
                if value.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    value
                }
            })
            .collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut population: Vec<Vec<f64>> = (0..n)
        .map(|_| dims.iter().map(|d| d.sample(&mut rng)).collect())
        .collect();
    let mut fitnesses = evaluate(&population);
    let mut invocations = n;

    let best_index = |fits: &[f64]| {
        (0..fits.len())
            .max_by(|&a, &b| fits[a].partial_cmp(&fits[b]).expect("no NaN fitness"))
            .expect("non-empty population")
    };
    let mut trace = vec![fitnesses[best_index(&fitnesses)]];

    let mut generations_run = 0;
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        let best = population[best_index(&fitnesses)].clone();
        let mut trials: Vec<Vec<f64>> = Vec::with_capacity(n);
        for j in 0..n {
            let r1 = rng.gen_range(0..n);
            let mut r2 = rng.gen_range(0..n);
            while r2 == r1 {
                r2 = rng.gen_range(0..n);
            }
            let forced = rng.gen_range(0..dims.len());
            let trial: Vec<f64> = (0..dims.len())
                .map(|k| {
                    let from_mutant = rng.gen::<f64>() < cfg.crossover;
                    let value = if from_mutant || k == forced {
                        best[k] + cfg.mutation * (population[r1][k] - population[r2][k])
                    } else {
                        population[j][k]
                    };
                    dims[k].clip(value)
                })
                .collect();
            trials.push(trial);
        }
        let trial_fitnesses = evaluate(&trials);
        invocations += n;
        for (j, (trial, trial_fitness)) in trials.into_iter().zip(trial_fitnesses).enumerate() {
            if trial_fitness > fitnesses[j] {
                population[j] = trial;
                fitnesses[j] = trial_fitness;
            }
        }
        generations_run += 1;
        trace.push(fitnesses[best_index(&fitnesses)]);

        let mean = fitnesses.iter().sum::<f64>() / n as f64;
        let variance =
            fitnesses.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / n as f64;
        if variance.sqrt() < cfg.tolerance {
            converged = true;
            break;
        }
    }

    let winner = best_index(&fitnesses);
    Ok(DeOutcome {
        best: snap_point(&population[winner]),
        best_fitness: fitnesses[winner],
        trace,
        invocations,
        generations_run,
        converged,
    })
}
