//! Variational Bayesian inference over the simplex parameter `u`.

mod dirichlet;
mod estimators;
mod fit;
mod likelihood;
mod predictive;

pub use dirichlet::{log_prior, posterior_variance, BoundaryPolicy, DirichletParams, INTERIOR_FLOOR};
pub use estimators::{
    draw_dirichlet_samples, draw_noise, elbo_estimate, rt_gradient, rt_gradient_from_noise, rt_jacobian, rt_objective,
    rt_transform, score_gradient, score_gradient_from_samples, score_surrogate, PhiVector,
};
pub use fit::{fit_posterior, Estimator, FitResult, OptimizerConfig, PosteriorExport, PHI_FLOOR};
pub use likelihood::{log_likelihood, log_sigmoid, sigmoid, Evidence};
pub use predictive::{
    posterior_predictive, predictive_from_samples, sample_posterior, PairwiseCounts, PosteriorSamples,
};

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Design, PerformanceTable, PreferenceSet};
use crate::rng::EngineRng;

/// Everything needed to fit and query posteriors for one decision problem.
#[derive(Debug, Clone)]
pub struct InferenceContext {
    pub design: Design,
    pub alpha: DirichletParams,
    pub settings: InferenceSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceSettings {
    pub full: OptimizerConfig,
    pub rollout: OptimizerConfig,
    pub estimator: Estimator,
    /// Posterior draws used for predictive probabilities and metrics.
    pub predictive_samples: usize,
}

impl Default for InferenceSettings {
    fn default() -> Self {
        InferenceSettings {
            full: OptimizerConfig::default(),
            rollout: OptimizerConfig::rollout(),
            estimator: Estimator::Rt,
            predictive_samples: 10_000,
        }
    }
}

impl InferenceContext {
    pub fn new(table: &PerformanceTable, settings: InferenceSettings) -> Self {
        let design = Design::new(table);
        let alpha = DirichletParams::uniform(design.dimension());
        InferenceContext {
            design,
            alpha,
            settings,
        }
    }

    pub fn dimension(&self) -> usize {
        self.design.dimension()
    }

    pub fn n_alternatives(&self) -> usize {
        self.design.n_alternatives()
    }

    pub fn evidence(&self, q: &PreferenceSet) -> Result<Evidence> {
        Evidence::new(&self.design, q)
    }

    /// Round-final fit with the full budget.
    pub fn fit(&self, q: &PreferenceSet, seed: u64, init: Option<&DirichletParams>) -> Result<FitResult> {
        let cfg = self.settings.full.with_seed(seed);
        fit_posterior(&self.evidence(q)?, &self.alpha, &cfg, self.settings.estimator, init)
    }

    /// Reduced-budget fit for simulations.
    pub fn fit_rollout(&self, q: &PreferenceSet, seed: u64, init: Option<&DirichletParams>) -> Result<FitResult> {
        let cfg = self.settings.rollout.with_seed(seed);
        fit_posterior(&self.evidence(q)?, &self.alpha, &cfg, self.settings.estimator, init)
    }

    pub fn samples(&self, theta: &DirichletParams, seed: u64) -> Result<PosteriorSamples> {
        let mut rng = EngineRng::seed_from_u64(seed);
        sample_posterior(theta, self.settings.predictive_samples, &mut rng)
    }

    pub fn counts(&self, theta: &DirichletParams, seed: u64) -> Result<PairwiseCounts> {
        Ok(PairwiseCounts::from_samples(&self.design, &self.samples(theta, seed)?))
    }
}
