//! Synthetic decision makers and their answers.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::sigmoid;
use crate::model::{all_pairs, Pair, PerformanceTable, PreferenceSet, PreferenceStatement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Linear,
    Concave,
    Convex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeSetting {
    Linear,
    Concave,
    Convex,
    Mixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub weights: Vec<f64>,
    /// Zero for linear criteria.
    pub curvatures: Vec<f64>,
    pub shapes: Vec<Shape>,
}

impl TrueModel {
    pub fn new(weights: Vec<f64>, curvatures: Vec<f64>, shapes: Vec<Shape>) -> Result<Self> {
        let m = weights.len();
        if m == 0 || curvatures.len() != m || shapes.len() != m {
            return Err(Error::InvalidInput(
                "true model needs equal-length, non-empty fields".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > crate::model::SIMPLEX_TOL {
            return Err(Error::InvalidInput("true weights must lie on the simplex".into()));
        }
        for (&c, &s) in curvatures.iter().zip(&shapes) {
            let ok = match s {
                Shape::Linear => true,
                Shape::Concave => c > 0.0,
                Shape::Convex => c < 0.0,
            };
            if !ok || !c.is_finite() {
                return Err(Error::InvalidInput(format!("curvature {c} does not match shape {s:?}")));
            }
        }
        Ok(TrueModel {
            weights,
            curvatures,
            shapes,
        })
    }

    pub fn n_criteria(&self) -> usize {
        self.weights.len()
    }

    /// Marginal value of criterion `j` at normalized performance `x`.
    pub fn marginal(&self, j: usize, x: f64) -> f64 {
        let w = self.weights[j];
        match self.shapes[j] {
            Shape::Linear => w * x,
            _ => {
                let c = self.curvatures[j];
                w * (-(-c * x).exp_m1()) / (-(-c).exp_m1())
            }
        }
    }
}

pub fn gen_true_model<R: Rng + ?Sized>(m: usize, setting: ShapeSetting, rng: &mut R) -> Result<TrueModel> {
    if m == 0 {
        return Err(Error::InvalidInput("need at least one criterion".into()));
    }
    // Dirichlet(1, …, 1) via normalized exponentials
    let e: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    let weights: Vec<f64> = e.iter().map(|x| x / s).collect();
    let mut shapes = Vec::with_capacity(m);
    let mut curvatures = Vec::with_capacity(m);
    for _ in 0..m {
        let shape = match setting {
            ShapeSetting::Linear => Shape::Linear,
            ShapeSetting::Concave => Shape::Concave,
            ShapeSetting::Convex => Shape::Convex,
            ShapeSetting::Mixture => [Shape::Linear, Shape::Concave, Shape::Convex][rng.random_range(0..3)],
        };
        let c = loop {
            let c: f64 = rng.random_range(-10.0..=10.0);
            if c.abs() >= 1e-6 {
                break c;
            }
        };
        curvatures.push(match shape {
            Shape::Linear => 0.0,
            Shape::Concave => c.abs(),
            Shape::Convex => -c.abs(),
        });
        shapes.push(shape);
    }
    TrueModel::new(weights, curvatures, shapes)
}

pub fn true_value(model: &TrueModel, table: &PerformanceTable, alt: usize) -> Result<f64> {
    if model.n_criteria() != table.n_criteria() {
        return Err(Error::DimensionMismatch {
            expected: table.n_criteria(),
            found: model.n_criteria(),
        });
    }
    table.check_alternative(alt)?;
    Ok(table
        .criteria()
        .iter()
        .enumerate()
        .map(|(j, c)| model.marginal(j, c.normalize(table.performance(alt, j))))
        .sum())
}

pub fn true_values(model: &TrueModel, table: &PerformanceTable) -> Result<Vec<f64>> {
    (0..table.n_alternatives())
        .map(|i| true_value(model, table, i))
        .collect()
}

/// `count` distinct pairs drawn uniformly, oriented by the true values.
/// Pairs with exactly equal values are skipped.
pub fn gen_comparisons<R: Rng + ?Sized>(
    model: &TrueModel,
    table: &PerformanceTable,
    count: usize,
    rng: &mut R,
) -> Result<PreferenceSet> {
    let values = true_values(model, table)?;
    let mut pairs = all_pairs(table.n_alternatives());
    pairs.shuffle(rng);
    let mut q = PreferenceSet::new();
    for p in pairs {
        if q.len() == count {
            break;
        }
        let (a, b) = (values[p.first], values[p.second]);
        if a > b {
            q.push(PreferenceStatement::new(p.first, p.second)?)?;
        } else if b > a {
            q.push(PreferenceStatement::new(p.second, p.first)?)?;
        }
    }
    if q.len() < count {
        return Err(Error::InvalidInput(format!(
            "only {} distinct non-tied pairs available, {count} requested",
            q.len()
        )));
    }
    Ok(q)
}

/// Flips the `⌊proportion·|Q|⌋` statements with the smallest true value gaps.
pub fn inject_bias(
    q: &PreferenceSet,
    model: &TrueModel,
    table: &PerformanceTable,
    proportion: f64,
) -> Result<PreferenceSet> {
    if !(0.0..=1.0).contains(&proportion) {
        return Err(Error::InvalidInput(format!(
            "bias proportion {proportion} outside [0, 1]"
        )));
    }
    let values = true_values(model, table)?;
    let stmts = q.statements();
    let mut order: Vec<usize> = (0..stmts.len()).collect();
    let gap = |k: usize| (values[stmts[k].preferred] - values[stmts[k].other]).abs();
    order.sort_by(|&a, &b| gap(a).total_cmp(&gap(b)));
    // guard against 0.3·10 = 2.9999…
    let flips = ((proportion * stmts.len() as f64) + 1e-9).floor() as usize;
    let mut out: Vec<PreferenceStatement> = stmts.to_vec();
    for &k in order.iter().take(flips) {
        out[k] = out[k].flipped();
    }
    PreferenceSet::from_statements(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    #[default]
    Deterministic,
    BradleyTerry,
}

pub fn simulated_answer<R: Rng + ?Sized>(
    model: &TrueModel,
    table: &PerformanceTable,
    pair: Pair,
    rng: &mut R,
    mode: AnswerMode,
) -> Result<PreferenceStatement> {
    let a = true_value(model, table, pair.first)?;
    let b = true_value(model, table, pair.second)?;
    let first_wins = match mode {
        AnswerMode::Deterministic => {
            if a == b {
                log::warn!("exact true-value tie on {pair}; answering by index");
            }
            a >= b
        }
        AnswerMode::BradleyTerry => rng.random::<f64>() < sigmoid(a - b),
    };
    if first_wins {
        PreferenceStatement::new(pair.first, pair.second)
    } else {
        PreferenceStatement::new(pair.second, pair.first)
    }
}

/// `n × m` iid uniform performances on unit scales.
pub fn gen_performance_table<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    subintervals: usize,
    rng: &mut R,
) -> Result<PerformanceTable> {
    if n < 2 || m == 0 {
        return Err(Error::InvalidInput(
            "need n >= 2 alternatives and m >= 1 criteria".into(),
        ));
    }
    let rows = (0..n).map(|_| (0..m).map(|_| rng.random::<f64>()).collect()).collect();
    PerformanceTable::from_unit_rows(rows, subintervals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use approx::assert_abs_diff_eq;

    fn table() -> PerformanceTable {
        PerformanceTable::from_unit_rows(vec![vec![1.0, 1.0], vec![0.0, 0.0], vec![0.5, 0.2]], 2).unwrap()
    }

    #[test]
    fn linear_marginals_and_extremes() {
        let mut rng = rng_from(1, &[]);
        let m = gen_true_model(2, ShapeSetting::Linear, &mut rng).unwrap();
        assert_abs_diff_eq!(m.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let t = table();
        assert_abs_diff_eq!(true_value(&m, &t, 0).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(true_value(&m, &t, 1).unwrap(), 0.0);
        assert_abs_diff_eq!(
            true_value(&m, &t, 2).unwrap(),
            0.5 * m.weights[0] + 0.2 * m.weights[1],
            epsilon = 1e-12
        );
    }

    #[test]
    fn curved_marginal() {
        let m = TrueModel::new(vec![1.0], vec![10.0], vec![Shape::Concave]).unwrap();
        let expected = (1.0 - (-5f64).exp()) / (1.0 - (-10f64).exp());
        assert_abs_diff_eq!(m.marginal(0, 0.5), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(m.marginal(0, 0.5), 0.99330, epsilon = 1e-5);
        assert!(TrueModel::new(vec![1.0], vec![-1.0], vec![Shape::Concave]).is_err());
    }

    #[test]
    fn sign_forcing() {
        let mut rng = rng_from(2, &[]);
        for _ in 0..20 {
            let m = gen_true_model(4, ShapeSetting::Concave, &mut rng).unwrap();
            assert!(m.curvatures.iter().all(|&c| c > 0.0));
            let m = gen_true_model(4, ShapeSetting::Convex, &mut rng).unwrap();
            assert!(m.curvatures.iter().all(|&c| c < 0.0));
        }
    }

    #[test]
    fn comparisons_follow_truth() {
        let mut rng = rng_from(3, &[]);
        let t = gen_performance_table(8, 3, 2, &mut rng).unwrap();
        let m = gen_true_model(3, ShapeSetting::Mixture, &mut rng).unwrap();
        assert!(gen_comparisons(&m, &t, 0, &mut rng).unwrap().is_empty());
        let q = gen_comparisons(&m, &t, 20, &mut rng).unwrap();
        assert_eq!(q.len(), 20);
        for s in q.iter() {
            assert!(true_value(&m, &t, s.preferred).unwrap() > true_value(&m, &t, s.other).unwrap());
        }
        assert!(gen_comparisons(&m, &t, 29, &mut rng).is_err());
    }

    #[test]
    fn bias_flips_smallest_gaps() {
        let m = TrueModel::new(vec![1.0], vec![0.0], vec![Shape::Linear]).unwrap();
        let t = PerformanceTable::from_unit_rows(vec![vec![0.0], vec![0.1], vec![0.5], vec![1.0]], 1).unwrap();
        let q = PreferenceSet::from_pairs(&[(3, 0), (1, 0), (2, 1), (3, 2)]).unwrap();
        assert_eq!(inject_bias(&q, &m, &t, 0.0).unwrap(), q);
        let b = inject_bias(&q, &m, &t, 0.5).unwrap();
        // gaps: 1.0, 0.1, 0.4, 0.5 → flip (1,0) and (2,1)
        assert_eq!(b, PreferenceSet::from_pairs(&[(3, 0), (0, 1), (1, 2), (3, 2)]).unwrap());
        let all = inject_bias(&q, &m, &t, 1.0).unwrap();
        assert!(all.iter().zip(q.iter()).all(|(a, b)| *a == b.flipped()));
    }

    #[test]
    fn answers() {
        let t = table();
        let m = TrueModel::new(vec![0.5, 0.5], vec![0.0, 0.0], vec![Shape::Linear, Shape::Linear]).unwrap();
        let mut rng = rng_from(4, &[]);
        let s = simulated_answer(&m, &t, Pair::new(1, 0), &mut rng, AnswerMode::Deterministic).unwrap();
        assert_eq!((s.preferred, s.other), (0, 1));

        let one = TrueModel::new(vec![1.0], vec![0.0], vec![Shape::Linear]).unwrap();
        let t1 = PerformanceTable::from_unit_rows(vec![vec![1.0], vec![0.0], vec![1.0]], 1).unwrap();
        let (mut wins, mut ties) = (0, 0);
        for _ in 0..10_000 {
            wins += (simulated_answer(&one, &t1, Pair::new(0, 1), &mut rng, AnswerMode::BradleyTerry)
                .unwrap()
                .preferred
                == 0) as u32;
            ties += (simulated_answer(&one, &t1, Pair::new(0, 2), &mut rng, AnswerMode::BradleyTerry)
                .unwrap()
                .preferred
                == 0) as u32;
        }
        assert_abs_diff_eq!(wins as f64 / 1e4, sigmoid(1.0), epsilon = 0.02);
        assert_abs_diff_eq!(ties as f64 / 1e4, 0.5, epsilon = 0.02);
    }

    #[test]
    fn uniform_tables() {
        let mut a = rng_from(5, &[]);
        let mut b = rng_from(5, &[]);
        let t1 = gen_performance_table(50, 4, 2, &mut a).unwrap();
        assert_eq!(t1, gen_performance_table(50, 4, 2, &mut b).unwrap());
        assert!((0..50).all(|i| t1.row(i).iter().all(|x| (0.0..=1.0).contains(x))));
    }
}
