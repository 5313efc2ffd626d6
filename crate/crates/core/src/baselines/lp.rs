//! Dense two-phase simplex with Bland's rule. Sized for the small programs
//! the SOR baseline needs (tens of variables and rows).

use crate::error::{Error, Result};

const EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `min c·x` subject to the constraints and `x ≥ 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    // reduced-cost row; last entry is −objective
    cost: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|x| *x /= p);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    row.iter_mut().zip(&pivot_row).for_each(|(x, p)| *x -= f * p);
                }
            }
        }
        let f = self.cost[c];
        if f != 0.0 {
            self.cost.iter_mut().zip(&pivot_row).for_each(|(x, p)| *x -= f * p);
        }
        self.basis[r] = c;
    }

    /// Sets the reduced-cost row for objective `c` given the current basis.
    fn price(&mut self, c: &[f64]) {
        self.cost = c.to_vec();
        self.cost.push(0.0);
        for r in 0..self.rows.len() {
            let f = self.cost[self.basis[r]];
            if f != 0.0 {
                for (x, p) in self.cost.iter_mut().zip(&self.rows[r]) {
                    *x -= f * p;
                }
            }
        }
    }

    /// Runs Bland's-rule pivots over the allowed columns.
    fn optimize(&mut self, allowed: usize) -> Result<()> {
        let max_pivots = 50_000;
        for _ in 0..max_pivots {
            let Some(enter) = (0..allowed).find(|&c| self.cost[c] < -EPS) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][enter];
                if a > EPS {
                    let ratio = self.rhs(r) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - EPS || (ratio <= lratio + EPS && self.basis[r] < self.basis[lr]) {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::Lp("objective is unbounded".into()));
            };
            self.pivot(r, enter);
        }
        Err(Error::Lp("pivot limit reached".into()))
    }
}

impl LinearProgram {
    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.objective.len();
        if self.constraints.iter().any(|c| c.coeffs.len() != n) {
            return Err(Error::Lp("constraint width does not match objective".into()));
        }
        // normalize to non-negative right-hand sides
        let cons: Vec<Constraint> = self
            .constraints
            .iter()
            .map(|c| {
                if c.rhs < 0.0 {
                    Constraint {
                        coeffs: c.coeffs.iter().map(|x| -x).collect(),
                        relation: match c.relation {
                            Relation::Le => Relation::Ge,
                            Relation::Ge => Relation::Le,
                            Relation::Eq => Relation::Eq,
                        },
                        rhs: -c.rhs,
                    }
                } else {
                    c.clone()
                }
            })
            .collect();
        let m = cons.len();
        let n_slack = cons.iter().filter(|c| c.relation != Relation::Eq).count();
        let n_art = cons.iter().filter(|c| c.relation != Relation::Le).count();
        let art_start = n + n_slack;
        let width = art_start + n_art;

        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let (mut s, mut a) = (n, art_start);
        for c in &cons {
            let mut row = vec![0.0; width + 1];
            row[..n].copy_from_slice(&c.coeffs);
            row[width] = c.rhs;
            match c.relation {
                Relation::Le => {
                    row[s] = 1.0;
                    basis.push(s);
                    s += 1;
                }
                Relation::Ge => {
                    row[s] = -1.0;
                    s += 1;
                    row[a] = 1.0;
                    basis.push(a);
                    a += 1;
                }
                Relation::Eq => {
                    row[a] = 1.0;
                    basis.push(a);
                    a += 1;
                }
            }
            rows.push(row);
        }
        let mut t = Tableau {
            rows,
            cost: Vec::new(),
            basis,
            width,
        };

        if n_art > 0 {
            let mut phase1 = vec![0.0; width];
            phase1[art_start..].iter_mut().for_each(|x| *x = 1.0);
            t.price(&phase1);
            t.optimize(width)?;
            let infeasibility = -t.cost[width];
            let scale = 1.0 + cons.iter().map(|c| c.rhs.abs()).fold(0.0, f64::max);
            if infeasibility > 1e-9 * scale {
                return Err(Error::Infeasible);
            }
            // drive remaining artificials out of the basis
            let mut r = 0;
            while r < t.rows.len() {
                if t.basis[r] >= art_start {
                    match (0..art_start).find(|&c| t.rows[r][c].abs() > EPS) {
                        Some(c) => t.pivot(r, c),
                        None => {
                            t.rows.remove(r);
                            t.basis.remove(r);
                            continue;
                        }
                    }
                }
                r += 1;
            }
            for row in t.rows.iter_mut() {
                row[art_start..width].iter_mut().for_each(|x| *x = 0.0);
            }
        }

        let mut phase2 = self.objective.clone();
        phase2.resize(width, 0.0);
        t.price(&phase2);
        t.optimize(art_start)?;

        let mut x = vec![0.0; n];
        for (r, &b) in t.basis.iter().enumerate() {
            if b < n {
                x[b] = t.rhs(r).max(0.0);
            }
        }
        let objective = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution { x, objective })
    }
}
