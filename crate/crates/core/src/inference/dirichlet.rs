use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

/// Samples closer than this to the simplex boundary are nudged inward before
/// any log-density evaluation.
pub const INTERIOR_FLOOR: f64 = 1e-12;

/// Parameters of a Dirichlet distribution (prior α or variational θ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DirichletParams(Vec<f64>);

impl TryFrom<Vec<f64>> for DirichletParams {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        DirichletParams::new(v)
    }
}

impl From<DirichletParams> for Vec<f64> {
    fn from(d: DirichletParams) -> Self {
        d.0
    }
}

impl DirichletParams {
    pub fn new(params: Vec<f64>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::InvalidInput("Dirichlet needs at least one parameter".into()));
        }
        if let Some(k) = params.iter().position(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "Dirichlet parameter {k} must be finite and positive, got {}",
                params[k]
            )));
        }
        Ok(DirichletParams(params))
    }

    /// The flat prior α = (1, …, 1).
    pub fn uniform(dim: usize) -> Self {
        DirichletParams(vec![1.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn concentration(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        let s = self.concentration();
        self.0.iter().map(|p| p / s).collect()
    }

    /// `ln Γ(Σθ) − Σ ln Γ(θ_k)`.
    pub fn log_normalizer(&self) -> f64 {
        ln_gamma(self.concentration()) - self.0.iter().map(|&p| ln_gamma(p)).sum::<f64>()
    }

    /// `∂/∂θ_k log Dir(u|θ)` without the `ln u_k` term: `ψ(θ₀) − ψ(θ_k)`.
    pub(crate) fn digamma_offsets(&self) -> Vec<f64> {
        let d0 = digamma(self.concentration());
        self.0.iter().map(|&p| d0 - digamma(p)).collect()
    }

    /// Log-density at an interior point; no boundary checks.
    pub(crate) fn log_density_interior(&self, log_norm: f64, u: &[f64]) -> f64 {
        log_norm + self.0.iter().zip(u).map(|(&p, &x)| (p - 1.0) * x.ln()).sum::<f64>()
    }

    pub(crate) fn gammas(&self) -> Vec<Gamma<f64>> {
        self.0
            .iter()
            .map(|&p| Gamma::new(p, 1.0).expect("validated positive shape"))
            .collect()
    }
}

/// How to treat a point with a zero coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPolicy {
    /// Return `f64::NEG_INFINITY` (or `+∞` where the density diverges).
    Sentinel,
    Error,
}

/// Dirichlet log-density `log Dir(u | α)`.
pub fn log_prior(u: &[f64], alpha: &DirichletParams, on_boundary: BoundaryPolicy) -> Result<f64> {
    if u.len() != alpha.dim() {
        return Err(Error::DimensionMismatch {
            expected: alpha.dim(),
            found: u.len(),
        });
    }
    if u.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidInput(
            "point has negative or non-finite coordinates".into(),
        ));
    }
    if u.iter().any(|&x| x == 0.0) {
        return match on_boundary {
            BoundaryPolicy::Error => Err(Error::InvalidInput("point lies on the simplex boundary".into())),
            BoundaryPolicy::Sentinel => {
                // (α_k − 1) ln 0 is −∞ for α_k > 1, +∞ for α_k < 1, 0 for α_k = 1
                let mut neg = false;
                let mut pos = false;
                for (&x, &a) in u.iter().zip(alpha.as_slice()) {
                    if x == 0.0 {
                        neg |= a > 1.0;
                        pos |= a < 1.0;
                    }
                }
                Ok(if neg {
                    f64::NEG_INFINITY
                } else if pos {
                    f64::INFINITY
                } else {
                    alpha.log_normalizer()
                        + alpha
                            .as_slice()
                            .iter()
                            .zip(u)
                            .filter(|(_, &x)| x > 0.0)
                            .map(|(&a, &x)| (a - 1.0) * x.ln())
                            .sum::<f64>()
                })
            }
        };
    }
    Ok(alpha.log_density_interior(alpha.log_normalizer(), u))
}

/// Nudges coordinates below [`INTERIOR_FLOOR`] inward and renormalizes.
pub(crate) fn make_interior(u: &mut [f64]) {
    if u.iter().any(|&x| x < INTERIOR_FLOOR) {
        for x in u.iter_mut() {
            *x = x.max(INTERIOR_FLOOR);
        }
        let s: f64 = u.iter().sum();
        for x in u.iter_mut() {
            *x /= s;
        }
    }
}

/// One Dirichlet draw via normalized Gamma variates, written into `out`.
pub(crate) fn draw_into<R: Rng + ?Sized>(gammas: &[Gamma<f64>], rng: &mut R, out: &mut [f64]) {
    let mut s = 0.0;
    for (o, g) in out.iter_mut().zip(gammas) {
        *o = g.sample(rng).max(f64::MIN_POSITIVE);
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

/// Trace of the Dirichlet covariance: `Σ θ_k(θ₀−θ_k) / (θ₀²(θ₀+1))`.
pub fn posterior_variance(theta: &DirichletParams) -> f64 {
    let t0 = theta.concentration();
    theta.as_slice().iter().map(|&t| t * (t0 - t)).sum::<f64>() / (t0 * t0 * (t0 + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn flat_prior_is_constant() {
        let a = DirichletParams::uniform(5);
        let u1 = [0.1, 0.2, 0.3, 0.2, 0.2];
        let u2 = [0.6, 0.1, 0.1, 0.1, 0.1];
        let l1 = log_prior(&u1, &a, BoundaryPolicy::Error).unwrap();
        assert_abs_diff_eq!(l1, ln_gamma(5.0), epsilon = 1e-12);
        assert_abs_diff_eq!(l1, log_prior(&u2, &a, BoundaryPolicy::Error).unwrap(), epsilon = 1e-12);
        let a2 = DirichletParams::uniform(2);
        assert_abs_diff_eq!(
            log_prior(&[0.3, 0.7], &a2, BoundaryPolicy::Error).unwrap(),
            log_prior(&[0.9, 0.1], &a2, BoundaryPolicy::Error).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn closed_form_density() {
        let a = DirichletParams::new(vec![2.0, 2.0]).unwrap();
        assert_abs_diff_eq!(
            log_prior(&[0.5, 0.5], &a, BoundaryPolicy::Error).unwrap(),
            1.5f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn boundary_policies() {
        let a = DirichletParams::new(vec![2.0, 2.0]).unwrap();
        assert!(log_prior(&[0.0, 1.0], &a, BoundaryPolicy::Error).is_err());
        assert_eq!(
            log_prior(&[0.0, 1.0], &a, BoundaryPolicy::Sentinel).unwrap(),
            f64::NEG_INFINITY
        );
        let flat = DirichletParams::uniform(2);
        assert_abs_diff_eq!(
            log_prior(&[0.0, 1.0], &flat, BoundaryPolicy::Sentinel).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn variance_examples() {
        let t = DirichletParams::new(vec![1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(posterior_variance(&t), 1.0 / 6.0, epsilon = 1e-15);
        let big = DirichletParams::new(vec![1e9, 1e9, 1e9]).unwrap();
        assert!(posterior_variance(&big) < 1e-9);
        let p1 = DirichletParams::new(vec![0.5, 2.0, 7.0]).unwrap();
        let p2 = DirichletParams::new(vec![7.0, 0.5, 2.0]).unwrap();
        assert_abs_diff_eq!(posterior_variance(&p1), posterior_variance(&p2), epsilon = 1e-15);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(DirichletParams::new(vec![1.0, 0.0]).is_err());
        assert!(DirichletParams::new(vec![f64::NAN]).is_err());
        assert!(serde_json::from_str::<DirichletParams>("[1.0, -2.0]").is_err());
    }

    #[test]
    fn interior_nudge_keeps_simplex() {
        let mut u = [0.0, 0.25, 0.75];
        make_interior(&mut u);
        assert!(u.iter().all(|&x| x >= INTERIOR_FLOOR * 0.99));
        assert_abs_diff_eq!(u.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }
}
