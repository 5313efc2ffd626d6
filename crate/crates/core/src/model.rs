//! Alternatives, criteria, and the piecewise-linear additive value model.
//!
//! Each criterion scale `[scale_min, scale_max]` is split into equal-length
//! sub-intervals. An alternative is encoded as a characteristic vector whose
//! entries are the fractions of each sub-interval it covers, so that the
//! comprehensive value is the inner product `u · V(a)` with `u` on the simplex.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a parameter vector lies on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub scale_min: f64,
    pub scale_max: f64,
    pub subintervals: usize,
}

impl Criterion {
    pub fn new(name: impl Into<String>, scale_min: f64, scale_max: f64, subintervals: usize) -> Result<Self> {
        let c = Criterion {
            name: name.into(),
            scale_min,
            scale_max,
            subintervals,
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if !(self.scale_min.is_finite() && self.scale_max.is_finite()) {
            return Err(Error::InvalidTable(format!(
                "criterion `{}`: scale bounds must be finite",
                self.name
            )));
        }
        if self.scale_min >= self.scale_max {
            return Err(Error::InvalidTable(format!(
                "criterion `{}`: scale_min ({}) must be below scale_max ({})",
                self.name, self.scale_min, self.scale_max
            )));
        }
        if self.subintervals == 0 {
            return Err(Error::InvalidTable(format!(
                "criterion `{}`: subintervals must be at least 1",
                self.name
            )));
        }
        Ok(())
    }

    /// Knots `x^k = min + (k / γ)(max − min)` for `k = 0..=γ`.
    pub fn knots(&self) -> Vec<f64> {
        let g = self.subintervals as f64;
        (0..=self.subintervals)
            .map(|k| {
                if k == self.subintervals {
                    self.scale_max
                } else {
                    self.scale_min + (k as f64 / g) * (self.scale_max - self.scale_min)
                }
            })
            .collect()
    }

    /// Maps a raw performance to `[0, 1]` along this criterion's scale.
    pub fn normalize(&self, g: f64) -> f64 {
        ((g - self.scale_min) / (self.scale_max - self.scale_min)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct PerformanceTable {
    ids: Vec<String>,
    criteria: Vec<Criterion>,
    // row-major n × m
    performances: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    alternatives: Vec<String>,
    criteria: Vec<Criterion>,
    performances: Vec<Vec<f64>>,
}

impl TryFrom<RawTable> for PerformanceTable {
    type Error = Error;
    fn try_from(raw: RawTable) -> Result<Self> {
        PerformanceTable::new(raw.alternatives, raw.criteria, raw.performances)
    }
}

impl From<PerformanceTable> for RawTable {
    fn from(t: PerformanceTable) -> Self {
        RawTable {
            performances: (0..t.n_alternatives()).map(|i| t.row(i).to_vec()).collect(),
            alternatives: t.ids,
            criteria: t.criteria,
        }
    }
}

impl PerformanceTable {
    pub fn new(ids: Vec<String>, criteria: Vec<Criterion>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = ids.len();
        let m = criteria.len();
        if n < 2 {
            return Err(Error::InvalidTable(format!("need at least 2 alternatives, got {n}")));
        }
        if m == 0 {
            return Err(Error::InvalidTable("need at least 1 criterion".into()));
        }
        if rows.len() != n {
            return Err(Error::InvalidTable(format!(
                "{} performance rows for {} alternatives",
                rows.len(),
                n
            )));
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidTable(format!("duplicate alternative id `{id}`")));
            }
        }
        for c in &criteria {
            c.validate()?;
        }
        let mut performances = Vec::with_capacity(n * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidTable(format!(
                    "alternative `{}` has {} performances, expected {}",
                    ids[i],
                    row.len(),
                    m
                )));
            }
            for (j, &g) in row.iter().enumerate() {
                let c = &criteria[j];
                if !g.is_finite() || g < c.scale_min || g > c.scale_max {
                    return Err(Error::InvalidTable(format!(
                        "alternative `{}`: performance {} on `{}` lies outside [{}, {}]",
                        ids[i], g, c.name, c.scale_min, c.scale_max
                    )));
                }
                performances.push(g);
            }
        }
        Ok(PerformanceTable {
            ids,
            criteria,
            performances,
        })
    }

    /// Table on unit scales `[0, 1]` with generated ids `a1..an` and criteria `g1..gm`.
    pub fn from_unit_rows(rows: Vec<Vec<f64>>, subintervals: usize) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        let ids = (1..=rows.len()).map(|i| format!("a{i}")).collect();
        let criteria = (1..=m)
            .map(|j| Criterion::new(format!("g{j}"), 0.0, 1.0, subintervals))
            .collect::<Result<Vec<_>>>()?;
        PerformanceTable::new(ids, criteria, rows)
    }

    pub fn n_alternatives(&self) -> usize {
        self.ids.len()
    }

    pub fn n_criteria(&self) -> usize {
        self.criteria.len()
    }

    /// Total number of sub-intervals γ = Σ_j γ_j.
    pub fn dimension(&self) -> usize {
        self.criteria.iter().map(|c| c.subintervals).sum()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn criteria(&self) -> &[Criterion] {
        &self.criteria
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.n_criteria();
        &self.performances[i * m..(i + 1) * m]
    }

    pub fn performance(&self, i: usize, j: usize) -> f64 {
        self.performances[i * self.n_criteria() + j]
    }

    /// Copy of this table with every criterion split into `subintervals` pieces.
    pub fn with_subintervals(&self, subintervals: usize) -> Result<Self> {
        let mut t = self.clone();
        for c in &mut t.criteria {
            c.subintervals = subintervals;
            c.validate()?;
        }
        Ok(t)
    }

    pub fn check_alternative(&self, i: usize) -> Result<()> {
        if i < self.n_alternatives() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "alternative index {i} out of range (n = {})",
                self.n_alternatives()
            )))
        }
    }
}

/// Per-criterion knot lists.
pub fn build_grid(table: &PerformanceTable) -> Vec<Vec<f64>> {
    table.criteria().iter().map(Criterion::knots).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicVector(Vec<f64>);

impl CharacteristicVector {
    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn encode_criterion(g: f64, knots: &[f64], out: &mut Vec<f64>) {
    for k in 1..knots.len() {
        let (lo, hi) = (knots[k - 1], knots[k]);
        let v = if g > hi {
            1.0
        } else if lo <= g {
            (g - lo) / (hi - lo)
        } else {
            0.0
        };
        out.push(v);
    }
}

pub fn characteristic_vector(table: &PerformanceTable, alt: usize) -> CharacteristicVector {
    let mut out = Vec::with_capacity(table.dimension());
    for (j, c) in table.criteria().iter().enumerate() {
        encode_criterion(table.performance(alt, j), &c.knots(), &mut out);
    }
    CharacteristicVector(out)
}

/// A validated point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams(Vec<f64>);

impl ModelParams {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::InvalidInput("empty parameter vector".into()));
        }
        if u.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidInput(
                "parameter vector has negative or NaN entries".into(),
            ));
        }
        let s: f64 = u.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidInput(format!("parameter vector sums to {s}, not 1")));
        }
        Ok(ModelParams(u))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `U(a) = u · V(a)`.
pub fn comprehensive_value(u: &ModelParams, v: &CharacteristicVector) -> Result<f64> {
    if u.0.len() != v.0.len() {
        return Err(Error::DimensionMismatch {
            expected: u.0.len(),
            found: v.0.len(),
        });
    }
    Ok(dot(&u.0, &v.0))
}

/// Pareto dominance on raw performances.
pub fn dominates(table: &PerformanceTable, a: usize, b: usize) -> bool {
    let (ra, rb) = (table.row(a), table.row(b));
    let mut strict = false;
    for (x, y) in ra.iter().zip(rb) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// An unordered pair of alternatives, stored with `first < second`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair {
    pub first: usize,
    pub second: usize,
}

impl Pair {
    pub fn new(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "a question needs two distinct alternatives");
        Pair {
            first: a.min(b),
            second: a.max(b),
        }
    }

    pub fn contains(&self, a: usize) -> bool {
        self.first == a || self.second == a
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} ? {})", self.first, self.second)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreferenceStatement {
    pub preferred: usize,
    pub other: usize,
}

impl PreferenceStatement {
    pub fn new(preferred: usize, other: usize) -> Result<Self> {
        if preferred == other {
            return Err(Error::InvalidInput(format!(
                "alternative {preferred} cannot be compared with itself"
            )));
        }
        Ok(PreferenceStatement { preferred, other })
    }

    pub fn pair(&self) -> Pair {
        Pair::new(self.preferred, self.other)
    }

    pub fn flipped(&self) -> Self {
        PreferenceStatement {
            preferred: self.other,
            other: self.preferred,
        }
    }
}

/// Ordered strict comparisons; an unordered pair appears at most once.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PreferenceStatement>", into = "Vec<PreferenceStatement>")]
pub struct PreferenceSet {
    statements: Vec<PreferenceStatement>,
}

impl TryFrom<Vec<PreferenceStatement>> for PreferenceSet {
    type Error = Error;
    fn try_from(v: Vec<PreferenceStatement>) -> Result<Self> {
        PreferenceSet::from_statements(v)
    }
}

impl From<PreferenceSet> for Vec<PreferenceStatement> {
    fn from(s: PreferenceSet) -> Self {
        s.statements
    }
}

impl PreferenceSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_statements(statements: impl IntoIterator<Item = PreferenceStatement>) -> Result<Self> {
        let mut set = PreferenceSet::new();
        for s in statements {
            set.push(s)?;
        }
        Ok(set)
    }

    /// Convenience constructor from `(preferred, other)` tuples.
    pub fn from_pairs(pairs: &[(usize, usize)]) -> Result<Self> {
        Self::from_statements(
            pairs
                .iter()
                .map(|&(a, b)| PreferenceStatement::new(a, b))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn push(&mut self, s: PreferenceStatement) -> Result<()> {
        if s.preferred == s.other {
            return Err(Error::InvalidInput("self-comparison".into()));
        }
        if self.contains_pair(s.pair()) {
            return Err(Error::DuplicatePair(s.pair().first, s.pair().second));
        }
        self.statements.push(s);
        Ok(())
    }

    /// Returns a copy extended by one statement.
    pub fn with(&self, s: PreferenceStatement) -> Result<Self> {
        let mut out = self.clone();
        out.push(s)?;
        Ok(out)
    }

    pub fn contains_pair(&self, p: Pair) -> bool {
        self.statements.iter().any(|s| s.pair() == p)
    }

    pub fn statements(&self) -> &[PreferenceStatement] {
        &self.statements
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PreferenceStatement> {
        self.statements.iter()
    }

    pub fn validate_against(&self, table: &PerformanceTable) -> Result<()> {
        for s in &self.statements {
            table.check_alternative(s.preferred)?;
            table.check_alternative(s.other)?;
        }
        Ok(())
    }
}

/// All unordered pairs over `n` alternatives in lexicographic order.
pub fn all_pairs(n: usize) -> Vec<Pair> {
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(Pair::new(i, j));
        }
    }
    out
}

/// Pairs that have not been asked yet, in lexicographic order.
pub fn candidate_pairs(n: usize, asked: &PreferenceSet) -> Vec<Pair> {
    let asked: HashSet<Pair> = asked.iter().map(PreferenceStatement::pair).collect();
    all_pairs(n).into_iter().filter(|p| !asked.contains(p)).collect()
}

/// Characteristic vectors of every alternative, precomputed for inference.
#[derive(Debug, Clone)]
pub struct Design {
    n: usize,
    dim: usize,
    // row-major n × γ
    vectors: Vec<f64>,
}

impl Design {
    pub fn new(table: &PerformanceTable) -> Self {
        let n = table.n_alternatives();
        let dim = table.dimension();
        let mut vectors = Vec::with_capacity(n * dim);
        for i in 0..n {
            vectors.extend(characteristic_vector(table, i).into_inner());
        }
        Design { n, dim, vectors }
    }

    /// Design from raw characteristic vectors (rows must have equal length).
    pub fn from_vectors(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.len() < 2 || dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput(
                "design needs ≥2 rows of equal, non-zero length".into(),
            ));
        }
        Ok(Design {
            n: rows.len(),
            dim,
            vectors: rows.concat(),
        })
    }

    pub fn n_alternatives(&self) -> usize {
        self.n
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn value(&self, u: &[f64], i: usize) -> f64 {
        dot(u, self.vector(i))
    }

    /// Values of all alternatives under `u`, written into `out`.
    pub fn values_into(&self, u: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.value(u, i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn crit(lo: f64, hi: f64, g: usize) -> Criterion {
        Criterion::new("c", lo, hi, g).unwrap()
    }

    #[test]
    fn grid_examples() {
        assert_eq!(crit(0.0, 1.0, 2).knots(), vec![0.0, 0.5, 1.0]);
        assert_eq!(crit(2.0, 6.0, 4).knots(), vec![2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(crit(-3.0, 7.5, 1).knots(), vec![-3.0, 7.5]);
    }

    #[test]
    fn criterion_invariants() {
        assert!(Criterion::new("x", 1.0, 1.0, 2).is_err());
        assert!(Criterion::new("x", 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn table_validation() {
        let c = vec![crit(0.0, 1.0, 2)];
        assert!(PerformanceTable::new(vec!["a".into()], c.clone(), vec![vec![0.5]]).is_err());
        assert!(PerformanceTable::new(vec!["a".into(), "a".into()], c.clone(), vec![vec![0.5], vec![0.1]]).is_err());
        assert!(PerformanceTable::new(vec!["a".into(), "b".into()], c.clone(), vec![vec![0.5], vec![1.1]]).is_err());
        assert!(PerformanceTable::new(vec!["a".into(), "b".into()], c, vec![vec![0.5], vec![1.0]]).is_ok());
    }

    #[test]
    fn characteristic_vector_examples() {
        let t = PerformanceTable::from_unit_rows(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.75, 0.25]], 2).unwrap();
        assert_eq!(characteristic_vector(&t, 0).entries(), &[0.0; 4]);
        assert_eq!(characteristic_vector(&t, 1).entries(), &[1.0; 4]);
        assert_eq!(characteristic_vector(&t, 2).entries(), &[1.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn value_examples() {
        let v = CharacteristicVector(vec![1.0, 0.5]);
        let u = ModelParams::new(vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(comprehensive_value(&u, &v).unwrap(), 0.75);
        let u = ModelParams::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_abs_diff_eq!(
            comprehensive_value(&u, &CharacteristicVector(vec![1.0; 3])).unwrap(),
            1.0
        );
        assert_abs_diff_eq!(
            comprehensive_value(&u, &CharacteristicVector(vec![0.0; 3])).unwrap(),
            0.0
        );
        assert!(matches!(
            comprehensive_value(&u, &v),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn model_params_rejects_off_simplex() {
        assert!(ModelParams::new(vec![0.5, 0.6]).is_err());
        assert!(ModelParams::new(vec![-0.1, 1.1]).is_err());
        assert!(ModelParams::new(vec![0.5, 0.5 + 1e-12]).is_ok());
    }

    #[test]
    fn dominance_examples() {
        let t =
            PerformanceTable::from_unit_rows(vec![vec![1.0, 1.0], vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]], 2)
                .unwrap();
        assert!(dominates(&t, 0, 1));
        assert!(!dominates(&t, 0, 0));
        assert!(!dominates(&t, 2, 3));
        assert!(!dominates(&t, 3, 2));
        assert!(dominates(&t, 2, 1));
    }

    #[test]
    fn preference_set_rejects_repeated_pair() {
        let mut q = PreferenceSet::from_pairs(&[(0, 1)]).unwrap();
        assert!(matches!(
            q.push(PreferenceStatement::new(1, 0).unwrap()),
            Err(Error::DuplicatePair(0, 1))
        ));
        assert!(PreferenceStatement::new(2, 2).is_err());
        assert_eq!(candidate_pairs(3, &q), vec![Pair::new(0, 2), Pair::new(1, 2)]);
    }

    #[test]
    fn preference_set_serde_revalidates() {
        let bad = r#"[{"preferred":0,"other":1},{"preferred":1,"other":0}]"#;
        assert!(serde_json::from_str::<PreferenceSet>(bad).is_err());
    }
}
