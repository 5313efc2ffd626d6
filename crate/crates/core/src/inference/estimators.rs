//! Monte Carlo ELBO and its two gradient estimators.
//!
//! The ELBO integrand is `f(u) = log p(Q|u) + log Dir(u|α) − log Dir(u|θ)`.
//!
//! * Score function: `(1/W) Σ ∇_θ log q(u_w|θ) · f(u_w)`, `u_w ~ Dir(θ)`.
//! * Reparameterized: `u = softmax(μ + √Σ ⊙ ε)`, `ε ~ N(0, I)`, with `θ = φ²`
//!   (softmax-Gaussian approximation of the Dirichlet). The gradient is
//!   pathwise: it flows through `u` only, with the parameters of `log q`
//!   held at the current `θ`. Because the transform only approximates the
//!   Dirichlet, the explicit `∂ log q / ∂θ` term would not vanish in
//!   expectation and would bias the fit away from the prior.

use rand::Rng;
use rand_distr::StandardNormal;

use super::dirichlet::{draw_into, make_interior, DirichletParams};
use super::likelihood::Evidence;
use crate::error::{Error, Result};

/// Auxiliary parameters with `θ_k = φ_k²`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiVector(Vec<f64>);

impl PhiVector {
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        if phi.is_empty() || phi.iter().any(|&p| p == 0.0 || !p.is_finite()) {
            return Err(Error::InvalidInput("φ entries must be finite and nonzero".into()));
        }
        Ok(PhiVector(phi))
    }

    pub fn from_theta(theta: &DirichletParams) -> Self {
        PhiVector(theta.as_slice().iter().map(|t| t.sqrt()).collect())
    }

    pub fn theta(&self) -> DirichletParams {
        DirichletParams::new(self.0.iter().map(|p| p * p).collect()).expect("nonzero φ gives positive θ")
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// `log p(Q, u | α)` with its gradient in `u`.
struct LogJoint<'a> {
    evidence: &'a Evidence,
    alpha: &'a DirichletParams,
    alpha_norm: f64,
}

impl<'a> LogJoint<'a> {
    fn new(evidence: &'a Evidence, alpha: &'a DirichletParams) -> Self {
        LogJoint {
            evidence,
            alpha,
            alpha_norm: alpha.log_normalizer(),
        }
    }

    fn value(&self, u: &[f64]) -> f64 {
        self.evidence.log_likelihood(u) + self.alpha.log_density_interior(self.alpha_norm, u)
    }

    fn value_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let ll = self.evidence.log_likelihood_grad(u, grad);
        for ((g, &a), &x) in grad.iter_mut().zip(self.alpha.as_slice()).zip(u) {
            *g += (a - 1.0) / x;
        }
        ll + self.alpha.log_density_interior(self.alpha_norm, u)
    }
}

fn check_dims(theta_dim: usize, evidence: &Evidence, alpha: &DirichletParams) -> Result<()> {
    for found in [evidence.dimension(), alpha.dim()] {
        if found != theta_dim {
            return Err(Error::DimensionMismatch {
                expected: theta_dim,
                found,
            });
        }
    }
    Ok(())
}

/// `W` interior-safe draws from `Dir(θ)`.
pub fn draw_dirichlet_samples<R: Rng + ?Sized>(theta: &DirichletParams, w: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let gammas = theta.gammas();
    (0..w)
        .map(|_| {
            let mut u = vec![0.0; theta.dim()];
            draw_into(&gammas, rng, &mut u);
            make_interior(&mut u);
            u
        })
        .collect()
}

/// Monte Carlo ELBO estimate with `u_w ~ Dir(θ)`.
pub fn elbo_estimate<R: Rng + ?Sized>(
    theta: &DirichletParams,
    evidence: &Evidence,
    alpha: &DirichletParams,
    w: usize,
    rng: &mut R,
) -> Result<f64> {
    check_dims(theta.dim(), evidence, alpha)?;
    if w == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let joint = LogJoint::new(evidence, alpha);
    let theta_norm = theta.log_normalizer();
    let gammas = theta.gammas();
    let mut u = vec![0.0; theta.dim()];
    let mut acc = 0.0;
    for _ in 0..w {
        draw_into(&gammas, rng, &mut u);
        make_interior(&mut u);
        acc += joint.value(&u) - theta.log_density_interior(theta_norm, &u);
    }
    Ok(acc / w as f64)
}

struct ScoreTerms {
    offsets: Vec<f64>,
    theta_norm: f64,
}

impl ScoreTerms {
    fn new(theta: &DirichletParams) -> Self {
        ScoreTerms {
            offsets: theta.digamma_offsets(),
            theta_norm: theta.log_normalizer(),
        }
    }

    /// Adds `∇_θ log q(u|θ) · f(u)` into `grad`; returns `f(u)`.
    fn accumulate(&self, theta: &DirichletParams, joint: &LogJoint<'_>, u: &[f64], grad: &mut [f64]) -> f64 {
        let f = joint.value(u) - theta.log_density_interior(self.theta_norm, u);
        for ((g, &o), &x) in grad.iter_mut().zip(&self.offsets).zip(u) {
            *g += (o + x.ln()) * f;
        }
        f
    }
}

/// Score-function gradient of the ELBO w.r.t. `θ`, averaged over `W` samples.
pub fn score_gradient<R: Rng + ?Sized>(
    theta: &DirichletParams,
    evidence: &Evidence,
    alpha: &DirichletParams,
    w: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(score_gradient_and_elbo(theta, evidence, alpha, w, rng)?.0)
}

pub(crate) fn score_gradient_and_elbo<R: Rng + ?Sized>(
    theta: &DirichletParams,
    evidence: &Evidence,
    alpha: &DirichletParams,
    w: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    check_dims(theta.dim(), evidence, alpha)?;
    if w < 2 {
        return Err(Error::InvalidInput(
            "score-function estimator needs at least two samples".into(),
        ));
    }
    let joint = LogJoint::new(evidence, alpha);
    let terms = ScoreTerms::new(theta);
    let gammas = theta.gammas();
    let mut u = vec![0.0; theta.dim()];
    let mut grad = vec![0.0; theta.dim()];
    let mut elbo = 0.0;
    for _ in 0..w {
        draw_into(&gammas, rng, &mut u);
        make_interior(&mut u);
        elbo += terms.accumulate(theta, &joint, &u, &mut grad);
    }
    let inv = 1.0 / w as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((grad, elbo * inv))
}

/// Score-function gradient on a fixed sample set (drawn from `Dir(θ)`).
pub fn score_gradient_from_samples(
    theta: &DirichletParams,
    samples: &[Vec<f64>],
    evidence: &Evidence,
    alpha: &DirichletParams,
) -> Result<Vec<f64>> {
    check_dims(theta.dim(), evidence, alpha)?;
    let joint = LogJoint::new(evidence, alpha);
    let terms = ScoreTerms::new(theta);
    let mut grad = vec![0.0; theta.dim()];
    for u in samples {
        terms.accumulate(theta, &joint, u, &mut grad);
    }
    let inv = 1.0 / samples.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok(grad)
}

/// Importance-weighted surrogate whose `θ_eval`-gradient at `θ_eval = θ_ref`
/// equals the score-function estimate on the same samples:
/// `(1/W) Σ q(u_w|θ_eval)/q(u_w|θ_ref) · f_ref(u_w)`, with `f_ref` held fixed.
pub fn score_surrogate(
    theta_eval: &DirichletParams,
    theta_ref: &DirichletParams,
    samples: &[Vec<f64>],
    evidence: &Evidence,
    alpha: &DirichletParams,
) -> Result<f64> {
    check_dims(theta_ref.dim(), evidence, alpha)?;
    let joint = LogJoint::new(evidence, alpha);
    let (ne, nr) = (theta_eval.log_normalizer(), theta_ref.log_normalizer());
    let mut acc = 0.0;
    for u in samples {
        let lr = theta_ref.log_density_interior(nr, u);
        let le = theta_eval.log_density_interior(ne, u);
        acc += (le - lr).exp() * (joint.value(u) - lr);
    }
    Ok(acc / samples.len() as f64)
}

/// Precomputed quantities of the softmax-Gaussian transform for one `φ`.
struct RtTransform {
    dim: usize,
    phi: Vec<f64>,
    theta: DirichletParams,
    mu: Vec<f64>,
    // elementwise standard deviation √Σ_k
    sd: Vec<f64>,
    theta_norm: f64,
}

impl RtTransform {
    fn new(phi: &PhiVector) -> Self {
        let dim = phi.dim();
        let g = dim as f64;
        let theta = phi.theta();
        let t = theta.as_slice();
        let log_t: Vec<f64> = t.iter().map(|x| x.ln()).collect();
        let mean_log = log_t.iter().sum::<f64>() / g;
        let mu = log_t.iter().map(|l| l - mean_log).collect();
        let inv_sum: f64 = t.iter().map(|x| 1.0 / x).sum();
        let sd = t
            .iter()
            .map(|x| ((1.0 / x) * (1.0 - 2.0 / g) + inv_sum / (g * g)).max(0.0).sqrt())
            .collect();
        RtTransform {
            dim,
            phi: phi.as_slice().to_vec(),
            theta_norm: theta.log_normalizer(),
            theta,
            mu,
            sd,
        }
    }

    /// Softmax of `μ + sd ⊙ ε` into `u` (no interior nudge).
    fn forward(&self, eps: &[f64], u: &mut [f64]) {
        let mut max = f64::NEG_INFINITY;
        for k in 0..self.dim {
            u[k] = self.mu[k] + self.sd[k] * eps[k];
            max = max.max(u[k]);
        }
        let mut s = 0.0;
        for x in u.iter_mut() {
            *x = (*x - max).exp();
            s += *x;
        }
        for x in u.iter_mut() {
            *x /= s;
        }
    }

    /// Objective value at one noise draw; adds its `φ`-gradient into `grad`.
    fn sample_grad(&self, joint: &LogJoint<'_>, eps: &[f64], scratch: &mut RtScratch, grad: &mut [f64]) -> f64 {
        let g = self.dim as f64;
        let RtScratch { u, gu, gz } = scratch;
        self.forward(eps, u);
        make_interior(u);
        gu.iter_mut().for_each(|x| *x = 0.0);
        let lj = joint.value_grad(u, gu);
        let t = self.theta.as_slice();
        for k in 0..self.dim {
            gu[k] -= (t[k] - 1.0) / u[k];
        }
        let f = lj - self.theta.log_density_interior(self.theta_norm, u);
        // through the softmax: g_z = u ⊙ (g_u − u·g_u)
        let su: f64 = u.iter().zip(gu.iter()).map(|(a, b)| a * b).sum();
        for k in 0..self.dim {
            gz[k] = u[k] * (gu[k] - su);
        }
        let mut s2 = 0.0;
        for k in 0..self.dim {
            if self.sd[k] > 0.0 {
                s2 += gz[k] * eps[k] / (2.0 * self.sd[k]);
            }
        }
        let a = 1.0 - 2.0 / g;
        for j in 0..self.dim {
            let own = if self.sd[j] > 0.0 {
                gz[j] * eps[j] * a / (2.0 * self.sd[j])
            } else {
                0.0
            };
            let path = gz[j] / t[j] - (own + s2 / (g * g)) / (t[j] * t[j]);
            grad[j] += 2.0 * self.phi[j] * path;
        }
        f
    }
}

struct RtScratch {
    u: Vec<f64>,
    gu: Vec<f64>,
    gz: Vec<f64>,
}

impl RtScratch {
    fn new(dim: usize) -> Self {
        RtScratch {
            u: vec![0.0; dim],
            gu: vec![0.0; dim],
            gz: vec![0.0; dim],
        }
    }
}

/// `softmax(μ + √Σ ⊙ ε)` with `μ_k = log φ_k² − mean(log φ²)` and
/// `Σ_k = (1/φ_k²)(1 − 2/γ) + (1/γ²) Σ_i 1/φ_i²`.
pub fn rt_transform(phi: &PhiVector, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != phi.dim() {
        return Err(Error::DimensionMismatch {
            expected: phi.dim(),
            found: eps.len(),
        });
    }
    let tr = RtTransform::new(phi);
    let mut u = vec![0.0; phi.dim()];
    tr.forward(eps, &mut u);
    Ok(u)
}

/// Analytic Jacobian `J[k][j] = ∂u_k/∂φ_j` of [`rt_transform`].
pub fn rt_jacobian(phi: &PhiVector, eps: &[f64]) -> Result<Vec<Vec<f64>>> {
    let u = rt_transform(phi, eps)?;
    let tr = RtTransform::new(phi);
    let n = phi.dim();
    let g = n as f64;
    let t = tr.theta.as_slice();
    // dz_l/dφ_j
    let mut dz = vec![vec![0.0; n]; n];
    for (l, row) in dz.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let delta = if l == j { 1.0 } else { 0.0 };
            let dmu = (delta - 1.0 / g) / t[j];
            let dsd = if tr.sd[l] > 0.0 {
                -(delta * (1.0 - 2.0 / g) + 1.0 / (g * g)) / (2.0 * tr.sd[l] * t[j] * t[j])
            } else {
                0.0
            };
            *v = (dmu + eps[l] * dsd) * 2.0 * tr.phi[j];
        }
    }
    let mut jac = vec![vec![0.0; n]; n];
    for k in 0..n {
        for j in 0..n {
            jac[k][j] = (0..n)
                .map(|l| {
                    let d = if k == l { u[k] } else { 0.0 } - u[k] * u[l];
                    d * dz[l][j]
                })
                .sum();
        }
    }
    Ok(jac)
}

/// Sample-average reparameterized objective on fixed noise draws, with
/// samples from `φ_eval` and `log q` parameterized by `φ_ref²`. Its
/// `φ_eval`-gradient at `φ_eval = φ_ref` is the pathwise estimate.
pub fn rt_objective(
    phi_eval: &PhiVector,
    phi_ref: &PhiVector,
    noise: &[Vec<f64>],
    evidence: &Evidence,
    alpha: &DirichletParams,
) -> Result<f64> {
    check_dims(phi_eval.dim(), evidence, alpha)?;
    check_dims(phi_ref.dim(), evidence, alpha)?;
    let tr = RtTransform::new(phi_eval);
    let q = phi_ref.theta();
    let q_norm = q.log_normalizer();
    let joint = LogJoint::new(evidence, alpha);
    let mut u = vec![0.0; phi_eval.dim()];
    let mut acc = 0.0;
    for eps in noise {
        tr.forward(eps, &mut u);
        make_interior(&mut u);
        acc += joint.value(&u) - q.log_density_interior(q_norm, &u);
    }
    Ok(acc / noise.len() as f64)
}

/// Pathwise `φ`-gradient on the given noise draws.
pub fn rt_gradient_from_noise(
    phi: &PhiVector,
    noise: &[Vec<f64>],
    evidence: &Evidence,
    alpha: &DirichletParams,
) -> Result<Vec<f64>> {
    check_dims(phi.dim(), evidence, alpha)?;
    let tr = RtTransform::new(phi);
    let joint = LogJoint::new(evidence, alpha);
    let mut scratch = RtScratch::new(phi.dim());
    let mut grad = vec![0.0; phi.dim()];
    for eps in noise {
        tr.sample_grad(&joint, eps, &mut scratch, &mut grad);
    }
    let inv = 1.0 / noise.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok(grad)
}

/// Reparameterization-trick gradient w.r.t. `φ` with `W` fresh noise draws.
pub fn rt_gradient<R: Rng + ?Sized>(
    phi: &PhiVector,
    evidence: &Evidence,
    alpha: &DirichletParams,
    w: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(rt_gradient_and_objective(phi, evidence, alpha, w, rng)?.0)
}

pub(crate) fn rt_gradient_and_objective<R: Rng + ?Sized>(
    phi: &PhiVector,
    evidence: &Evidence,
    alpha: &DirichletParams,
    w: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    check_dims(phi.dim(), evidence, alpha)?;
    if w == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let tr = RtTransform::new(phi);
    let joint = LogJoint::new(evidence, alpha);
    let mut scratch = RtScratch::new(phi.dim());
    let mut eps = vec![0.0; phi.dim()];
    let mut grad = vec![0.0; phi.dim()];
    let mut obj = 0.0;
    for _ in 0..w {
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        obj += tr.sample_grad(&joint, &eps, &mut scratch, &mut grad);
    }
    let inv = 1.0 / w as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((grad, obj * inv))
}

/// Standard-normal noise batch for the reparameterized estimator.
pub fn draw_noise<R: Rng + ?Sized>(dim: usize, w: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..w)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}
