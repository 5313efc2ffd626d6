//! Stochastic ordinal regression: uniform sampling of the value functions
//! compatible with the stated preferences.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::lp::{Constraint, LinearProgram, Relation};
use crate::error::{Error, Result};
use crate::inference::PairwiseCounts;
use crate::metrics::{poi_from_counts, PwiMatrix};
use crate::model::{Design, PreferenceSet, PreferenceStatement};

pub const DEFAULT_MARGIN: f64 = 1e-4;

/// Chebyshev radii below this count as an empty interior.
const MIN_RADIUS: f64 = 1e-10;

/// `{u : Σu = 1, a_i·u ≥ b_i}` in `γ` dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeSpec {
    dim: usize,
    inequalities: Vec<(Vec<f64>, f64)>,
}

impl PolytopeSpec {
    /// The simplex with no preference constraints.
    pub fn simplex(dim: usize) -> Self {
        let inequalities = (0..dim)
            .map(|k| {
                let mut a = vec![0.0; dim];
                a[k] = 1.0;
                (a, 0.0)
            })
            .collect();
        PolytopeSpec { dim, inequalities }
    }

    /// Simplex plus `U(preferred) − U(other) ≥ δ` per statement.
    pub fn from_preferences(design: &Design, q: &PreferenceSet, margin: f64) -> Self {
        let mut p = Self::simplex(design.dimension());
        for s in q.iter() {
            p.push(statement_row(design, s), margin);
        }
        p
    }

    pub fn push(&mut self, a: Vec<f64>, b: f64) {
        assert_eq!(a.len(), self.dim);
        self.inequalities.push((a, b));
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inequalities(&self) -> &[(Vec<f64>, f64)] {
        &self.inequalities
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        (u.iter().sum::<f64>() - 1.0).abs() <= tol && self.inequalities.iter().all(|(a, b)| dot(a, u) >= b - tol)
    }

    /// Center and radius of the largest ball inside the polytope within the
    /// hyperplane `Σu = 1`.
    pub fn chebyshev_center(&self) -> Result<(Vec<f64>, f64)> {
        let g = self.dim;
        // variables: u (γ), r
        let mut constraints = Vec::with_capacity(self.inequalities.len() + 2);
        let mut eq = vec![1.0; g + 1];
        eq[g] = 0.0;
        constraints.push(Constraint {
            coeffs: eq,
            relation: Relation::Eq,
            rhs: 1.0,
        });
        for (a, b) in &self.inequalities {
            let mean = a.iter().sum::<f64>() / g as f64;
            // norm of a projected onto the zero-sum subspace
            let norm = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>().sqrt();
            let mut row = a.clone();
            row.push(-norm);
            constraints.push(Constraint {
                coeffs: row,
                relation: Relation::Ge,
                rhs: *b,
            });
        }
        let mut cap = vec![0.0; g + 1];
        cap[g] = 1.0;
        constraints.push(Constraint {
            coeffs: cap,
            relation: Relation::Le,
            rhs: 1.0,
        });
        let mut objective = vec![0.0; g + 1];
        objective[g] = -1.0;
        let sol = LinearProgram { objective, constraints }.solve()?;
        let r = sol.x[g];
        if r <= MIN_RADIUS {
            return Err(Error::Infeasible);
        }
        Ok((sol.x[..g].to_vec(), r))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn statement_row(design: &Design, s: &PreferenceStatement) -> Vec<f64> {
    design
        .vector(s.preferred)
        .iter()
        .zip(design.vector(s.other))
        .map(|(a, b)| a - b)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitAndRunConfig {
    pub burn_in: usize,
    pub thinning: usize,
}

impl Default for HitAndRunConfig {
    fn default() -> Self {
        HitAndRunConfig {
            burn_in: 1000,
            thinning: 5,
        }
    }
}

/// `W` approximately uniform draws from a non-empty polytope.
pub fn hit_and_run<R: Rng + ?Sized>(
    poly: &PolytopeSpec,
    w: usize,
    rng: &mut R,
    config: HitAndRunConfig,
) -> Result<Vec<Vec<f64>>> {
    let (mut x, _) = poly.chebyshev_center()?;
    let g = poly.dim();
    let thinning = config.thinning.max(1);
    let mut out = Vec::with_capacity(w);
    let mut d = vec![0.0; g];
    let mut step = 0usize;
    while out.len() < w {
        for v in d.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mean = d.iter().sum::<f64>() / g as f64;
        d.iter_mut().for_each(|v| *v -= mean);
        let norm = dot(&d, &d).sqrt();
        if norm == 0.0 {
            continue;
        }
        d.iter_mut().for_each(|v| *v /= norm);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (a, b) in poly.inequalities() {
            let ad = dot(a, &d);
            let slack = b - dot(a, &x);
            if ad > 1e-15 {
                lo = lo.max(slack / ad);
            } else if ad < -1e-15 {
                hi = hi.min(slack / ad);
            }
        }
        let t = if hi > lo { rng.random_range(lo..=hi) } else { 0.0 };
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += t * di;
        }
        step += 1;
        if step > config.burn_in && (step - config.burn_in) % thinning == 0 {
            out.push(x.clone());
        }
    }
    Ok(out)
}

fn total_slack(design: &Design, statements: &[PreferenceStatement], margin: f64) -> Result<(f64, Vec<f64>)> {
    let g = design.dimension();
    let k = statements.len();
    let width = g + k;
    let mut constraints = Vec::with_capacity(k + 1);
    let mut eq = vec![0.0; width];
    eq[..g].iter_mut().for_each(|x| *x = 1.0);
    constraints.push(Constraint {
        coeffs: eq,
        relation: Relation::Eq,
        rhs: 1.0,
    });
    for (d, s) in statements.iter().enumerate() {
        let mut row = statement_row(design, s);
        row.resize(width, 0.0);
        row[g + d] = 1.0;
        constraints.push(Constraint {
            coeffs: row,
            relation: Relation::Ge,
            rhs: margin,
        });
    }
    let mut objective = vec![0.0; width];
    objective[g..].iter_mut().for_each(|x| *x = 1.0);
    let sol = LinearProgram { objective, constraints }.solve()?;
    Ok((sol.objective, sol.x[g..].to_vec()))
}

fn is_consistent(design: &Design, statements: &[PreferenceStatement], margin: f64) -> Result<bool> {
    Ok(total_slack(design, statements, margin)?.0 <= 1e-9)
}

/// An inclusion-maximal consistent subset of `Q`: repeatedly drop the
/// statement with the largest optimal slack, then try to re-add each dropped
/// statement in original order.
pub fn resolve_inconsistency(design: &Design, q: &PreferenceSet, margin: f64) -> Result<PreferenceSet> {
    let all = q.statements();
    let mut kept: Vec<usize> = (0..all.len()).collect();
    let mut dropped = Vec::new();
    loop {
        let stmts: Vec<PreferenceStatement> = kept.iter().map(|&k| all[k]).collect();
        let (total, slack) = total_slack(design, &stmts, margin)?;
        if total <= 1e-9 {
            break;
        }
        // first index among the largest slacks
        let worst = slack
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (i, &s)| if s > best.1 + 1e-12 { (i, s) } else { best },
            )
            .0;
        dropped.push(kept.remove(worst));
    }
    dropped.sort_unstable();
    for d in dropped {
        let mut trial = kept.clone();
        trial.push(d);
        trial.sort_unstable();
        let stmts: Vec<PreferenceStatement> = trial.iter().map(|&k| all[k]).collect();
        if is_consistent(design, &stmts, margin)? {
            kept = trial;
        }
    }
    kept.sort_unstable();
    PreferenceSet::from_statements(kept.into_iter().map(|k| all[k]))
}

/// Pairwise outranking indices from uniform samples of the compatible set.
/// Inconsistent input is first reduced by [`resolve_inconsistency`].
pub fn sor_poi<R: Rng + ?Sized>(
    q: &PreferenceSet,
    design: &Design,
    w: usize,
    rng: &mut R,
    margin: f64,
    config: HitAndRunConfig,
) -> Result<PwiMatrix> {
    let consistent = resolve_inconsistency(design, q, margin)?;
    let poly = PolytopeSpec::from_preferences(design, &consistent, margin);
    let samples = hit_and_run(&poly, w, rng, config)?;
    let values: Vec<Vec<f64>> = samples
        .iter()
        .map(|u| {
            let mut v = vec![0.0; design.n_alternatives()];
            design.values_into(u, &mut v);
            v
        })
        .collect();
    Ok(poi_from_counts(&PairwiseCounts::from_values(
        &values,
        design.n_alternatives(),
    )))
}
