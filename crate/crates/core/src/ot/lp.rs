//! Dense two-phase simplex with Bland's rule.
//!
//! Sized for the small exact problems of the oracle module; the tableau is
//! dense and every pivot is O(rows · cols).

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;
const FEAS_EPS: f64 = 1e-9;
const MAX_PIVOTS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Relation {
    LessEq,
    Equal,
}

#[derive(Clone, Debug)]
pub(crate) struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct LpSolution {
    pub x: Vec<f64>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub objective: f64,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let p = self.rows[r][e];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[e];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[e] = 0.0;
            }
        }
        let f = self.obj[e];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[e] = 0.0;
        }
        self.basis[r] = e;
    }

    /// Loads reduced costs for maximizing `cost · x` under the current basis.
    fn set_objective(&mut self, cost: &[f64]) {
        self.obj = vec![0.0; self.width + 1];
        self.obj[..cost.len()].copy_from_slice(cost);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = self.obj[b];
            if cb != 0.0 {
                for (v, rv) in self.obj.iter_mut().zip(&self.rows[i]) {
                    *v -= cb * rv;
                }
            }
        }
    }

    fn run(&mut self, allowed: usize) -> Result<()> {
        for _ in 0..MAX_PIVOTS {
            let Some(e) = (0..allowed).find(|&j| self.obj[j] > PIVOT_EPS) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][e];
                if a > PIVOT_EPS {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - PIVOT_EPS
                                || ((ratio - lr).abs() <= PIVOT_EPS && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, e),
                None => return Err(Error::LinearProgram("objective is unbounded".into())),
            }
        }
        Err(Error::LinearProgram("pivot limit reached".into()))
    }
}

/// Maximizes `cost · x` subject to the constraints and `x ≥ 0`.
pub(crate) fn maximize(cost: &[f64], constraints: &[Constraint]) -> Result<LpSolution> {
    let n = cost.len();
    let m = constraints.len();
    if constraints.iter().any(|c| c.coeffs.len() != n) {
        return Err(Error::LinearProgram("constraint width differs from cost length".into()));
    }
    if constraints.iter().any(|c| c.relation == Relation::LessEq && c.rhs < 0.0) {
        return Err(Error::LinearProgram("inequality with negative right-hand side".into()));
    }

    let n_slack = constraints.iter().filter(|c| c.relation == Relation::LessEq).count();
    let n_art = m - n_slack;
    let width = n + n_slack + n_art;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let (mut next_slack, mut next_art) = (n, n + n_slack);
    for c in constraints {
        let mut row = vec![0.0; width + 1];
        let sign = if c.relation == Relation::Equal && c.rhs < 0.0 { -1.0 } else { 1.0 };
        for (v, &a) in row.iter_mut().zip(&c.coeffs) {
            *v = sign * a;
        }
        row[width] = sign * c.rhs;
        match c.relation {
            Relation::LessEq => {
                row[next_slack] = 1.0;
                basis.push(next_slack);
                next_slack += 1;
            }
            Relation::Equal => {
                row[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
        }
        rows.push(row);
    }

    let mut t = Tableau { rows, obj: Vec::new(), basis, width };
    let art_start = n + n_slack;

    if n_art > 0 {
        let mut phase1 = vec![0.0; width];
        for v in phase1.iter_mut().skip(art_start) {
            *v = -1.0;
        }
        t.set_objective(&phase1);
        t.run(width)?;
        let infeasibility: f64 = t
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= art_start)
            .map(|(i, _)| t.rhs(i))
            .sum();
        if infeasibility > FEAS_EPS {
            return Err(Error::LinearProgram(format!("infeasible (residual {infeasibility:.3e})")));
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < t.rows.len() {
            if t.basis[i] >= art_start {
                match (0..art_start).find(|&j| t.rows[i][j].abs() > 1e-9) {
                    Some(j) => {
                        t.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        t.rows.remove(i);
                        t.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    t.set_objective(cost);
    t.run(art_start)?;

    let mut x = vec![0.0; n];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rhs(i).max(0.0);
        }
    }
    let objective = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { x, objective })
}
