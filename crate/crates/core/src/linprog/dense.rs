//! Dense two-phase tableau simplex, used when the sparse solver gives up on a
//! nearly singular basis. Variables are mapped onto nonnegative columns
//! (shift, mirror or split), rows are normalized to a nonnegative right-hand
//! side and the slack/surplus/artificial tableau is pivoted with Bland's rule.

use super::{LinearProgram, LpOutcome, Relation};
use crate::data::TOL_FEAS;
use crate::error::{Error, Result};

/// Smallest pivot element accepted in the ratio test.
const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-10;
const MAX_PIVOTS: usize = 100_000;

pub(super) fn solve(lp: &LinearProgram) -> Result<LpOutcome> {
    let sf = StandardForm::build(lp);
    let mut tab = sf.tableau();
    if !tab.phase_one()? {
        return Ok(LpOutcome::Infeasible);
    }
    if !tab.phase_two()? {
        return Ok(LpOutcome::Unbounded);
    }
    let point = sf.recover(&tab.structural_values(sf.n_cols));
    let value = lp.objective.iter().zip(&point).map(|(c, x)| c * x).sum();
    Ok(LpOutcome::Optimal { value, point })
}

#[derive(Clone, Copy, Debug)]
enum VarMap {
    /// x = lo + col
    Shift { col: usize, lo: f64 },
    /// x = hi − col
    Mirror { col: usize, hi: f64 },
    /// x = pos − neg
    Split { pos: usize, neg: usize },
    Fixed(f64),
}

struct Row {
    coeffs: Vec<f64>,
    relation: Relation,
    rhs: f64,
}

struct StandardForm {
    maps: Vec<VarMap>,
    n_cols: usize,
    rows: Vec<Row>,
    cost: Vec<f64>,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let mut maps = Vec::with_capacity(lp.n_vars());
        let mut n_cols = 0;
        for &(lo, hi) in &lp.bounds {
            let map = if lo == hi {
                VarMap::Fixed(lo)
            } else if lo.is_finite() {
                n_cols += 1;
                VarMap::Shift { col: n_cols - 1, lo }
            } else if hi.is_finite() {
                n_cols += 1;
                VarMap::Mirror { col: n_cols - 1, hi }
            } else {
                n_cols += 2;
                VarMap::Split { pos: n_cols - 2, neg: n_cols - 1 }
            };
            maps.push(map);
        }

        let transform = |coeffs: &[f64], rhs: f64| -> (Vec<f64>, f64) {
            let mut row = vec![0.0; n_cols];
            let mut rhs = rhs;
            for (a, map) in coeffs.iter().zip(&maps) {
                if *a == 0.0 {
                    continue;
                }
                match *map {
                    VarMap::Shift { col, lo } => {
                        row[col] += a;
                        rhs -= a * lo;
                    }
                    VarMap::Mirror { col, hi } => {
                        row[col] -= a;
                        rhs -= a * hi;
                    }
                    VarMap::Split { pos, neg } => {
                        row[pos] += a;
                        row[neg] -= a;
                    }
                    VarMap::Fixed(v) => rhs -= a * v,
                }
            }
            (row, rhs)
        };

        let mut rows = Vec::with_capacity(lp.constraints.len() + lp.n_vars());
        for c in &lp.constraints {
            let (coeffs, rhs) = transform(&c.coeffs, c.rhs);
            rows.push(Row { coeffs, relation: c.relation, rhs });
        }
        for (map, &(lo, hi)) in maps.iter().zip(&lp.bounds) {
            if let VarMap::Shift { col, .. } = *map {
                if hi.is_finite() {
                    let mut coeffs = vec![0.0; n_cols];
                    coeffs[col] = 1.0;
                    rows.push(Row { coeffs, relation: Relation::Le, rhs: hi - lo });
                }
            }
        }
        for row in &mut rows {
            if row.rhs < 0.0 {
                row.rhs = -row.rhs;
                row.coeffs.iter_mut().for_each(|v| *v = -*v);
                row.relation = match row.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
        }
        let (cost, _) = transform(&lp.objective, 0.0);
        Self { maps, n_cols, rows, cost }
    }

    fn tableau(&self) -> Tableau {
        let m = self.rows.len();
        let n_slack = self.rows.iter().filter(|r| r.relation != Relation::Eq).count();
        let n_art = self.rows.iter().filter(|r| r.relation != Relation::Le).count();
        let art_start = self.n_cols + n_slack;
        let width = art_start + n_art + 1;
        let mut tab = Tableau {
            m,
            width,
            art_start,
            data: vec![0.0; (m + 2) * width],
            basis: vec![0; m],
        };
        let (mut slack, mut art) = (self.n_cols, art_start);
        for (r, row) in self.rows.iter().enumerate() {
            let base = r * width;
            tab.data[base..base + self.n_cols].copy_from_slice(&row.coeffs);
            tab.data[base + width - 1] = row.rhs;
            match row.relation {
                Relation::Le => {
                    tab.data[base + slack] = 1.0;
                    tab.basis[r] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    tab.data[base + slack] = -1.0;
                    slack += 1;
                    tab.data[base + art] = 1.0;
                    tab.basis[r] = art;
                    art += 1;
                }
                Relation::Eq => {
                    tab.data[base + art] = 1.0;
                    tab.basis[r] = art;
                    art += 1;
                }
            }
        }
        // Phase-two cost row (basis starts with zero-cost columns).
        let cost_base = m * width;
        tab.data[cost_base..cost_base + self.n_cols].copy_from_slice(&self.cost);
        // Phase-one row: minimize the sum of artificials, priced out.
        let p1 = (m + 1) * width;
        for j in art_start..width - 1 {
            tab.data[p1 + j] = 1.0;
        }
        for r in 0..m {
            if tab.basis[r] >= art_start {
                for j in 0..width {
                    tab.data[p1 + j] -= tab.data[r * width + j];
                }
            }
        }
        tab
    }

    fn recover(&self, cols: &[f64]) -> Vec<f64> {
        self.maps
            .iter()
            .map(|map| match *map {
                VarMap::Shift { col, lo } => lo + cols[col],
                VarMap::Mirror { col, hi } => hi - cols[col],
                VarMap::Split { pos, neg } => cols[pos] - cols[neg],
                VarMap::Fixed(v) => v,
            })
            .collect()
    }
}

struct Tableau {
    m: usize,
    width: usize,
    art_start: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
}

enum Status {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.data[r * self.width + self.width - 1]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let inv = 1.0 / self.at(r, c);
        let (before, rest) = self.data.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        prow.iter_mut().for_each(|v| *v *= inv);
        prow[c] = 1.0;
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (x, p) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * p;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Bland's rule: lowest-index improving column, lowest-index leaving basic.
    fn run(&mut self, cost_row: usize, allowed: usize) -> Result<Status> {
        for _ in 0..MAX_PIVOTS {
            let Some(col) = (0..allowed).find(|&j| self.at(cost_row, j) < -COST_TOL) else {
                return Ok(Status::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.at(r, col);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((br, best)) => {
                            if ratio < best - 1e-12
                                || (ratio <= best + 1e-12 && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, best))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, col),
                None => return Ok(Status::Unbounded),
            }
        }
        Err(Error::Solver(format!("simplex exceeded {MAX_PIVOTS} pivots")))
    }

    /// Returns `false` when the rows are infeasible.
    fn phase_one(&mut self) -> Result<bool> {
        if self.art_start == self.width - 1 {
            return Ok(true);
        }
        let p1 = self.m + 1;
        self.run(p1, self.width - 1)?;
        let scale = (0..self.m).map(|r| self.rhs(r).abs()).fold(1.0, f64::max);
        let infeasibility = -self.rhs(p1);
        if infeasibility > TOL_FEAS * scale {
            return Ok(false);
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..self.m {
            if self.basis[r] >= self.art_start {
                let best = (0..self.art_start)
                    .map(|j| (j, self.at(r, j).abs()))
                    .filter(|&(_, a)| a > PIVOT_TOL)
                    .max_by(|a, b| a.1.total_cmp(&b.1));
                if let Some((j, _)) = best {
                    self.pivot(r, j);
                }
            }
        }
        Ok(true)
    }

    /// Returns `false` when the objective is unbounded below.
    fn phase_two(&mut self) -> Result<bool> {
        Ok(matches!(self.run(self.m, self.art_start)?, Status::Optimal))
    }

    fn structural_values(&self, n_cols: usize) -> Vec<f64> {
        let mut x = vec![0.0; n_cols];
        for r in 0..self.m {
            if self.basis[r] < n_cols {
                x[self.basis[r]] = self.rhs(r).max(0.0);
            }
        }
        x
    }
}

