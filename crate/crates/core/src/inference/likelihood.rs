use crate::error::Result;
use crate::model::{Design, PerformanceTable, PreferenceSet};

/// `log σ(x)` without overflow.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Bradley-Terry evidence for a preference set: one difference vector
/// `V(preferred) − V(other)` per statement.
#[derive(Debug, Clone)]
pub struct Evidence {
    dim: usize,
    diffs: Vec<f64>,
}

impl Evidence {
    pub fn new(design: &Design, q: &PreferenceSet) -> Result<Self> {
        let dim = design.dimension();
        let mut diffs = Vec::with_capacity(q.len() * dim);
        for s in q.iter() {
            for alt in [s.preferred, s.other] {
                if alt >= design.n_alternatives() {
                    return Err(crate::Error::InvalidInput(format!(
                        "alternative index {alt} out of range"
                    )));
                }
            }
            let (a, b) = (design.vector(s.preferred), design.vector(s.other));
            diffs.extend(a.iter().zip(b).map(|(x, y)| x - y));
        }
        Ok(Evidence { dim, diffs })
    }

    pub fn empty(dim: usize) -> Self {
        Evidence { dim, diffs: Vec::new() }
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.diffs.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.diffs.is_empty()
    }

    pub fn log_likelihood(&self, u: &[f64]) -> f64 {
        self.diffs
            .chunks_exact(self.dim)
            .map(|d| log_sigmoid(crate::model::dot(u, d)))
            .sum()
    }

    /// Log-likelihood; adds `∇_u log p(Q|u)` into `grad`.
    pub fn log_likelihood_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let mut ll = 0.0;
        for d in self.diffs.chunks_exact(self.dim) {
            let x = crate::model::dot(u, d);
            ll += log_sigmoid(x);
            // d/dx log σ(x) = σ(−x)
            let w = sigmoid(-x);
            for (g, &dk) in grad.iter_mut().zip(d) {
                *g += w * dk;
            }
        }
        ll
    }
}

/// `log p(Q | u)` under Bradley-Terry with `U = u · V(a)`.
pub fn log_likelihood(q: &PreferenceSet, u: &[f64], table: &PerformanceTable) -> Result<f64> {
    let design = Design::new(table);
    if u.len() != design.dimension() {
        return Err(crate::Error::DimensionMismatch {
            expected: design.dimension(),
            found: u.len(),
        });
    }
    Ok(Evidence::new(&design, q)?.log_likelihood(u))
}
