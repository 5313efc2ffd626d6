use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dirichlet::{draw_into, DirichletParams};
use crate::error::{Error, Result};
use crate::model::{Design, PerformanceTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    samples: Vec<Vec<f64>>,
    source_params: DirichletParams,
}

impl PosteriorSamples {
    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn source_params(&self) -> &DirichletParams {
        &self.source_params
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `values[w][i] = U^(w)(a_i)`.
    pub fn values(&self, design: &Design) -> Vec<Vec<f64>> {
        self.samples
            .iter()
            .map(|u| {
                let mut v = vec![0.0; design.n_alternatives()];
                design.values_into(u, &mut v);
                v
            })
            .collect()
    }
}

pub fn sample_posterior<R: Rng + ?Sized>(theta: &DirichletParams, w: usize, rng: &mut R) -> Result<PosteriorSamples> {
    if w == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let gammas = theta.gammas();
    let samples = (0..w)
        .map(|_| {
            let mut u = vec![0.0; theta.dim()];
            draw_into(&gammas, rng, &mut u);
            u
        })
        .collect();
    Ok(PosteriorSamples {
        samples,
        source_params: theta.clone(),
    })
}

/// Per-pair outcome counts over a sample set: `greater[i][j]` counts samples
/// with `U(a_i) > U(a_j)`, `ties[i][j]` those with equality.
#[derive(Debug, Clone)]
pub struct PairwiseCounts {
    n: usize,
    draws: usize,
    greater: Vec<u32>,
    ties: Vec<u32>,
}

impl PairwiseCounts {
    pub fn from_values(values: &[Vec<f64>], n: usize) -> Self {
        let mut greater = vec![0u32; n * n];
        let mut ties = vec![0u32; n * n];
        for v in values {
            for i in 0..n {
                for j in (i + 1)..n {
                    if v[i] > v[j] {
                        greater[i * n + j] += 1;
                    } else if v[j] > v[i] {
                        greater[j * n + i] += 1;
                    } else {
                        ties[i * n + j] += 1;
                        ties[j * n + i] += 1;
                    }
                }
            }
        }
        PairwiseCounts {
            n,
            draws: values.len(),
            greater,
            ties,
        }
    }

    pub fn from_samples(design: &Design, samples: &PosteriorSamples) -> Self {
        Self::from_values(&samples.values(design), design.n_alternatives())
    }

    pub fn n_alternatives(&self) -> usize {
        self.n
    }

    /// Strict probability with ties split evenly; `pwi(i,j) + pwi(j,i) = 1`.
    pub fn pwi(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.5;
        }
        let k = i * self.n + j;
        (self.greater[k] as f64 + 0.5 * self.ties[k] as f64) / self.draws as f64
    }

    /// Non-strict probability `P(U(a_i) ≥ U(a_j))`.
    pub fn poi(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        let k = i * self.n + j;
        (self.greater[k] + self.ties[k]) as f64 / self.draws as f64
    }

    pub fn pwi_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.pwi(i, j)).collect())
            .collect()
    }

    pub fn poi_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.poi(i, j)).collect())
            .collect()
    }
}

/// `P(a_i ≻ a_j)` on a fixed sample set, ties split evenly.
pub fn predictive_from_samples(design: &Design, samples: &PosteriorSamples, i: usize, j: usize) -> Result<f64> {
    let n = design.n_alternatives();
    if i >= n || j >= n {
        return Err(Error::InvalidInput(format!("alternative index out of range (n = {n})")));
    }
    if i == j {
        return Err(Error::InvalidInput(
            "predictive probability needs two distinct alternatives".into(),
        ));
    }
    let mut acc = 0.0;
    for u in samples.samples() {
        let (ui, uj) = (design.value(u, i), design.value(u, j));
        acc += if ui > uj {
            1.0
        } else if ui == uj {
            0.5
        } else {
            0.0
        };
    }
    Ok(acc / samples.len() as f64)
}

/// Monte Carlo posterior predictive `P(a_i ≻ a_j | Q)` with `W` fresh draws.
pub fn posterior_predictive<R: Rng + ?Sized>(
    theta: &DirichletParams,
    table: &PerformanceTable,
    i: usize,
    j: usize,
    w: usize,
    rng: &mut R,
) -> Result<f64> {
    let design = Design::new(table);
    if theta.dim() != design.dimension() {
        return Err(Error::DimensionMismatch {
            expected: design.dimension(),
            found: theta.dim(),
        });
    }
    let samples = sample_posterior(theta, w, rng)?;
    predictive_from_samples(&design, &samples, i, j)
}
