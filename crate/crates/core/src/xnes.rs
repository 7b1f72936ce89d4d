//! Exponential natural evolution strategies (xNES), minimization.
//!
//! The search distribution is `N(mean, σ² B Bᵀ)` with `det(B) = 1`. Each
//! generation follows a strict ask → evaluate → tell protocol: [`SearchState::ask`]
//! is a pure function of the state (its noise stream is derived from the
//! state's seed and generation), and [`SearchState::tell`] is the only place
//! the state changes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Tolerance on `|det(B) - 1|`.
pub const DETERMINANT_TOLERANCE: f64 = 1e-6;

/// Default population size `4 + ⌊3 ln d⌋`.
pub fn population_size(dimension: usize) -> usize {
    assert!(dimension >= 1, "dimension must be at least 1");
    4 + (3.0 * (dimension as f64).ln()).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    pub mean: f64,
    pub sigma: f64,
    pub shape: f64,
}

impl LearningRates {
    /// Published xNES defaults: η_μ = 1, η_σ = η_B = (9 + 3 ln d) / (5 d √d).
    pub fn default_for(dimension: usize) -> Self {
        let d = dimension as f64;
        let rate = (9.0 + 3.0 * d.ln()) / (5.0 * d * d.sqrt());
        Self {
            mean: 1.0,
            sigma: rate,
            shape: rate,
        }
    }
}

/// Rank-based fitness shaping weights for a population of `lambda`.
///
/// `utilities()[r]` is the weight of the candidate ranked `r` (0 = best).
/// They are non-increasing in rank and sum to zero.
pub fn utilities(lambda: usize) -> Vec<f64> {
    let top = (lambda as f64 / 2.0 + 1.0).ln();
    let raw: Vec<f64> = (1..=lambda)
        .map(|rank| (top - (rank as f64).ln()).max(0.0))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter()
        .map(|u| u / total - 1.0 / lambda as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    mean: DVector<f64>,
    sigma: f64,
    shape: DMatrix<f64>,
    generation: u64,
    evaluations: u64,
    rng_seed: u64,
    population_size: usize,
    rates: LearningRates,
}

impl SearchState {
    /// Starts a search at `mean` with isotropic shape `B = I`.
    pub fn new(mean: Vec<f64>, sigma: f64, rng_seed: u64) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::SearchState("dimension must be at least 1".into()));
        }
        Self::with_settings(
            mean,
            sigma,
            rng_seed,
            population_size(d),
            LearningRates::default_for(d),
        )
    }

    pub fn with_settings(
        mean: Vec<f64>,
        sigma: f64,
        rng_seed: u64,
        population_size: usize,
        rates: LearningRates,
    ) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::SearchState("dimension must be at least 1".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::SearchState(format!(
                "step size must be positive and finite, got {sigma}"
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("search mean"));
        }
        if population_size < 2 {
            return Err(Error::SearchState(
                "population size must be at least 2".into(),
            ));
        }
        Ok(Self {
            mean: DVector::from_vec(mean),
            sigma,
            shape: DMatrix::identity(d, d),
            generation: 0,
            evaluations: 0,
            rng_seed,
            population_size,
            rates,
        })
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn shape_determinant(&self) -> f64 {
        self.shape.determinant()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn population_size(&self) -> usize {
        self.population_size
    }

    pub fn rates(&self) -> LearningRates {
        self.rates
    }

    /// Samples the population for the current generation.
    pub fn ask(&self) -> Population {
        let d = self.dimension();
        let mut rng = seed::rng(seed::derive_path(
            self.rng_seed,
            &[seed::purpose::SAMPLING, self.generation],
        ));
        let scaled = &self.shape * self.sigma;
        let mut noise = Vec::with_capacity(self.population_size);
        let mut candidates = Vec::with_capacity(self.population_size);
        for _ in 0..self.population_size {
            let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let x = &self.mean + &scaled * &z;
            candidates.push(x.as_slice().to_vec());
            noise.push(z.as_slice().to_vec());
        }
        Population {
            generation: self.generation,
            rng_seed: self.rng_seed,
            candidates,
            noise,
            fitnesses: None,
        }
    }

    /// Natural-gradient update from an evaluated population.
    pub fn tell(&mut self, population: &Population) -> Result<()> {
        let fitnesses = self.check_population(population)?;
        let d = self.dimension();
        let lambda = self.population_size;

        let mut order: Vec<usize> = (0..lambda).collect();
        // stable: ties keep candidate index order
        order.sort_by(|&a, &b| fitnesses[a].total_cmp(&fitnesses[b]));
        let weights = utilities(lambda);

        let mut grad_mean = DVector::zeros(d);
        let mut grad_shape = DMatrix::zeros(d, d);
        for (&k, &u) in order.iter().zip(&weights) {
            let z = DVector::from_column_slice(&population.noise[k]);
            grad_mean.axpy(u, &z, 1.0);
            grad_shape.ger(u, &z, &z, 1.0);
        }
        // G_M = Σ u_k (z_k z_kᵀ - I)
        let weight_sum: f64 = weights.iter().sum();
        for i in 0..d {
            grad_shape[(i, i)] -= weight_sum;
        }
        let grad_sigma = grad_shape.trace() / d as f64;
        let mut traceless = grad_shape;
        for i in 0..d {
            traceless[(i, i)] -= grad_sigma;
        }
        // symmetrize against accumulated rounding before the eigensolver
        let traceless = (&traceless + traceless.transpose()) * 0.5;

        let step = (&self.shape * grad_mean) * (self.rates.mean * self.sigma);
        let mean = &self.mean + step;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("updated search mean"));
        }
        let sigma = self.sigma * (0.5 * self.rates.sigma * grad_sigma).exp();
        let shape = &self.shape * expm_symmetric(&(traceless * (0.5 * self.rates.shape)));

        self.mean = mean;
        self.sigma = sigma;
        self.shape = shape;
        self.generation += 1;
        self.evaluations += lambda as u64;
        Ok(())
    }

    fn check_population<'p>(&self, population: &'p Population) -> Result<&'p [f64]> {
        if population.generation != self.generation || population.rng_seed != self.rng_seed {
            return Err(Error::Population(format!(
                "sampled at generation {} (seed {}), state is at generation {} (seed {})",
                population.generation, population.rng_seed, self.generation, self.rng_seed
            )));
        }
        if population.noise.len() != self.population_size
            || population.noise.iter().any(|z| z.len() != self.dimension())
        {
            return Err(Error::Population("population shape mismatch".into()));
        }
        let fitnesses = population
            .fitnesses
            .as_deref()
            .ok_or_else(|| Error::Population("fitnesses have not been set".into()))?;
        if fitnesses.iter().any(|f| !f.is_finite()) {
            return Err(Error::NonFinite("fitness"));
        }
        Ok(fitnesses)
    }
}

/// `exp(S)` for a symmetric matrix via its eigendecomposition.
pub fn expm_symmetric(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    let eigen = SymmetricEigen::new(matrix.clone());
    let exp_values = eigen.eigenvalues.map(f64::exp);
    let vectors = &eigen.eigenvectors;
    vectors * DMatrix::from_diagonal(&exp_values) * vectors.transpose()
}

/// Candidates sampled by [`SearchState::ask`], plus the noise that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    generation: u64,
    rng_seed: u64,
    candidates: Vec<Vec<f64>>,
    noise: Vec<Vec<f64>>,
    fitnesses: Option<Vec<f64>>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidates(&self) -> &[Vec<f64>] {
        &self.candidates
    }

    pub fn noise(&self) -> &[Vec<f64>] {
        &self.noise
    }

    pub fn fitnesses(&self) -> Option<&[f64]> {
        self.fitnesses.as_deref()
    }

    pub fn set_fitnesses(&mut self, fitnesses: Vec<f64>) -> Result<()> {
        if fitnesses.len() != self.candidates.len() {
            return Err(Error::Dimension {
                what: "fitness list",
                expected: self.candidates.len(),
                got: fitnesses.len(),
            });
        }
        self.fitnesses = Some(fitnesses);
        Ok(())
    }

    /// Index of the best (lowest) fitness; ties resolve to the lowest index.
    pub fn best_index(&self) -> Option<usize> {
        let f = self.fitnesses.as_ref()?;
        (0..f.len()).min_by(|&a, &b| f[a].total_cmp(&f[b]))
    }
}
