//! Posterior summaries used to score questioning policies and inference
//! variants: pairwise winning indices, rank acceptability, their entropies,
//! and average support against a known true order.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{posterior_variance, DirichletParams, PairwiseCounts, PosteriorSamples};
use crate::model::Design;

/// Square matrix of pairwise probabilities. Holds PWI (strict, ties split)
/// or POI (non-strict) values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwiMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl PwiMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n < 2 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("pairwise matrix must be square with n >= 2".into()));
        }
        if rows.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInput("pairwise probabilities must lie in [0, 1]".into()));
        }
        Ok(PwiMatrix {
            n,
            entries: rows.concat(),
        })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(f(i, j));
            }
        }
        PwiMatrix { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// CSV with alternative ids as header row and first column.
    pub fn write_csv<W: Write>(&self, ids: &[String], out: W) -> Result<()> {
        if ids.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: ids.len(),
            });
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(std::iter::once("").chain(ids.iter().map(String::as_str)))?;
        for (i, id) in ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend((0..self.n).map(|j| self.get(i, j).to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `RAI[i][k]`: probability that alternative `i` takes rank `k` (0 = best).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaiMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl RaiMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n < 2 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput(
                "rank acceptability matrix must be square with n >= 2".into(),
            ));
        }
        Ok(RaiMatrix {
            n,
            entries: rows.concat(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.entries[i * self.n + k]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(<[f64]>::to_vec).collect()
    }
}

pub fn compute_pwi(samples: &PosteriorSamples, design: &Design) -> PwiMatrix {
    pwi_from_counts(&PairwiseCounts::from_samples(design, samples))
}

pub fn compute_poi(samples: &PosteriorSamples, design: &Design) -> PwiMatrix {
    poi_from_counts(&PairwiseCounts::from_samples(design, samples))
}

pub fn pwi_from_counts(c: &PairwiseCounts) -> PwiMatrix {
    PwiMatrix::from_fn(c.n_alternatives(), |i, j| c.pwi(i, j))
}

pub fn poi_from_counts(c: &PairwiseCounts) -> PwiMatrix {
    PwiMatrix::from_fn(c.n_alternatives(), |i, j| c.poi(i, j))
}

/// Rank frequencies over per-sample value vectors; ties go to the lower index.
pub fn rai_from_values(values: &[Vec<f64>], n: usize) -> RaiMatrix {
    let mut entries = vec![0.0; n * n];
    let mut order: Vec<usize> = (0..n).collect();
    for v in values {
        order.iter_mut().enumerate().for_each(|(k, o)| *o = k);
        // stable sort keeps index order among equal values
        order.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
        for (rank, &alt) in order.iter().enumerate() {
            entries[alt * n + rank] += 1.0;
        }
    }
    let w = values.len() as f64;
    entries.iter_mut().for_each(|e| *e /= w);
    RaiMatrix { n, entries }
}

pub fn compute_rai(samples: &PosteriorSamples, design: &Design) -> RaiMatrix {
    rai_from_values(&samples.values(design), design.n_alternatives())
}

/// Average support of pairwise indices for the true order.
pub fn asp(poi: &PwiMatrix, true_values: &[f64]) -> Result<f64> {
    let n = poi.n();
    if true_values.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: true_values.len(),
        });
    }
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && true_values[i] >= true_values[j] {
                acc += poi.get(i, j);
            }
        }
    }
    Ok(2.0 * acc / (n * (n - 1)) as f64)
}

pub fn f_var(theta: &DirichletParams) -> f64 {
    posterior_variance(theta)
}

fn entropy_term(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

/// Mean binary-entropy contribution over ordered pairs.
pub fn f_pwi(pwi: &PwiMatrix) -> f64 {
    let n = pwi.n();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += entropy_term(pwi.get(i, j));
            }
        }
    }
    acc / (n * (n - 1)) as f64
}

/// Mean rank entropy per alternative.
pub fn f_rai(rai: &RaiMatrix) -> f64 {
    rai.entries.iter().map(|&p| entropy_term(p)).sum::<f64>() / rai.n() as f64
}

/// One row of a policy study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub instance_id: usize,
    pub policy: String,
    pub round: usize,
    pub f_var: f64,
    pub f_pwi: f64,
    pub f_rai: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pwi_entropy_examples() {
        let half = PwiMatrix::from_fn(4, |_, _| 0.5);
        assert_eq!(f_pwi(&half), 0.5);
        let sure = PwiMatrix::from_fn(3, |i, j| if i < j { 1.0 } else { 0.0 });
        assert_eq!(f_pwi(&sure), 0.0);
        let p = PwiMatrix::from_rows(vec![vec![0.5, 0.25], vec![0.75, 0.5]]).unwrap();
        let expected = (-0.25 * 0.25f64.log2() - 0.75 * 0.75f64.log2()) / 2.0;
        assert_abs_diff_eq!(f_pwi(&p), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(f_pwi(&p), 0.4056, epsilon = 1e-4);
    }

    #[test]
    fn rai_entropy_examples() {
        let uniform = RaiMatrix::from_rows(vec![vec![0.2; 5]; 5]).unwrap();
        assert_abs_diff_eq!(f_rai(&uniform), 5f64.log2(), epsilon = 1e-12);
        let det = RaiMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(f_rai(&det), 0.0);
        let p = RaiMatrix::from_rows(vec![vec![0.25, 0.75], vec![0.75, 0.25]]).unwrap();
        assert_abs_diff_eq!(f_rai(&p), 0.8113, epsilon = 1e-4);
    }

    #[test]
    fn rai_tie_rule() {
        let values = vec![vec![0.4; 3]; 10];
        let r = rai_from_values(&values, 3);
        for i in 0..3 {
            for k in 0..3 {
                assert_eq!(r.get(i, k), if i == k { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn asp_examples() {
        let truth = [3.0, 2.0, 1.0];
        let perfect = PwiMatrix::from_fn(3, |i, j| if truth[i] >= truth[j] { 1.0 } else { 0.0 });
        assert_eq!(asp(&perfect, &truth).unwrap(), 1.0);
        let half = PwiMatrix::from_fn(3, |_, _| 0.5);
        assert_eq!(asp(&half, &truth).unwrap(), 0.5);
        assert!(asp(&half, &[1.0]).is_err());
    }

    #[test]
    fn csv_export() {
        let m = PwiMatrix::from_rows(vec![vec![1.0, 0.25], vec![0.75, 1.0]]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&["a".into(), "b".into()], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), ",a,b\na,1,0.25\nb,0.75,1\n");
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(PwiMatrix::from_rows(vec![vec![0.5]]).is_err());
        assert!(PwiMatrix::from_rows(vec![vec![0.5, 1.5], vec![0.5, 0.5]]).is_err());
        assert!(RaiMatrix::from_rows(vec![vec![1.0, 0.0]]).is_err());
    }
}
