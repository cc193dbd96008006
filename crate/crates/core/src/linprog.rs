//! Small linear programs: a dense row/bound description in the shape the rest
//! of the crate builds, solved with the `microlp` sparse simplex. Solver
//! failures, unbounded verdicts and answers that violate the rows fall back
//! to a dense tableau.

mod dense;

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{dim_err, input_err, Error, Result};

/// Largest row or bound violation accepted from the sparse solver, relative to `max(1, ‖x‖∞)`.
const ACCEPT_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn le(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, relation: Relation::Le, rhs }
    }

    pub fn ge(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, relation: Relation::Ge, rhs }
    }

    pub fn eq(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, relation: Relation::Eq, rhs }
    }

    /// Amount by which `x` violates this row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs: f64 = self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// `minimize objectiveᵀx` subject to the rows and per-variable bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// New program with every variable bounded to `[0, ∞)`.
    pub fn minimize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self { objective, constraints: Vec::new(), bounds: vec![(0.0, f64::INFINITY); n] }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) -> &mut Self {
        self.bounds[var] = (lo, hi);
        self
    }

    pub fn free(&mut self, var: usize) -> &mut Self {
        self.set_bounds(var, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn push(&mut self, c: Constraint) -> &mut Self {
        self.constraints.push(c);
        self
    }

    /// Largest row or bound violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.violation(x));
        let bounds = self
            .bounds
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &v)| (lo - v).max(v - hi).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.bounds.len() != n {
            return Err(dim_err(format!("{} bounds for {n} variables", self.bounds.len())));
        }
        for (k, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(dim_err(format!("row {k} has {} coefficients, expected {n}", c.coeffs.len())));
            }
            if c.coeffs.iter().any(|v| !v.is_finite()) || !c.rhs.is_finite() {
                return Err(input_err(format!("row {k} has a non-finite entry")));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(input_err("objective has a non-finite entry"));
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(input_err(format!("variable {j} has invalid bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, point: Vec<f64> },
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Feasibility {
    Feasible(Vec<f64>),
    Infeasible,
}

impl Feasibility {
    pub fn witness(self) -> Option<Vec<f64>> {
        match self {
            Feasibility::Feasible(x) => Some(x),
            Feasibility::Infeasible => None,
        }
    }
}

fn to_problem(lp: &LinearProgram) -> (Problem, Vec<microlp::Variable>) {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = lp.objective.iter().zip(&lp.bounds).map(|(&c, &b)| p.add_var(c, b)).collect();
    for c in &lp.constraints {
        let expr: Vec<_> = c.coeffs.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(j, &a)| (vars[j], a)).collect();
        let op = match c.relation {
            Relation::Le => ComparisonOp::Le,
            Relation::Ge => ComparisonOp::Ge,
            Relation::Eq => ComparisonOp::Eq,
        };
        p.add_constraint(expr.as_slice(), op, c.rhs);
    }
    (p, vars)
}

/// Solves `lp` to optimality, or reports infeasibility / unboundedness.
pub fn solve(lp: &LinearProgram) -> Result<LpOutcome> {
    lp.validate()?;
    match solve_once(lp) {
        Ok(outcome) => Ok(outcome),
        // Both backends can stall on heavily degenerate systems (many zero
        // right-hand sides, near-duplicate rows). Retry once on equilibrated rows
        // relaxed by distinct tiny amounts; infeasibility of the relaxation is
        // still conclusive and a relaxed optimum violates by at most PERTURB.
        Err(e) => match solve_once(&perturbed(lp)).map_err(|_| e)? {
            LpOutcome::Optimal { point, .. } => {
                let value = lp.objective.iter().zip(&point).map(|(c, x)| c * x).sum();
                Ok(LpOutcome::Optimal { value, point })
            }
            other => Ok(other),
        },
    }
}

const PERTURB: f64 = 1e-9;

/// Rows divided by their largest coefficient, then loosened by distinct
/// multiples of [`PERTURB`] in `(0.5, 1.5)`.
fn perturbed(lp: &LinearProgram) -> LinearProgram {
    let mut out = lp.clone();
    for (k, c) in out.constraints.iter_mut().enumerate() {
        let s = c.coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if s > 0.0 {
            c.coeffs.iter_mut().for_each(|a| *a /= s);
            c.rhs /= s;
        }
        let delta = PERTURB * (0.5 + (k as f64 * 0.618_033_988_749_895).fract());
        match c.relation {
            Relation::Le => c.rhs += delta,
            Relation::Ge => c.rhs -= delta,
            Relation::Eq => {}
        }
    }
    out
}

fn solve_once(lp: &LinearProgram) -> Result<LpOutcome> {
    let (p, vars) = to_problem(lp);
    let outcome = match p.solve() {
        Ok(outcome) => {
            let sol = outcome.into_solution().map_err(|_| Error::Solver("LP solve interrupted".into()))?;
            let point: Vec<f64> = vars.iter().map(|&v| sol.var_value_raw(v)).collect();
            let value = lp.objective.iter().zip(&point).map(|(c, x)| c * x).sum();
            LpOutcome::Optimal { value, point }
        }
        Err(microlp::Error::Infeasible) => LpOutcome::Infeasible,
        // Spurious rays have been seen on badly scaled rows; confirm before reporting.
        Err(microlp::Error::Unbounded) => return dense::solve(lp),
        Err(_) => return dense::solve(lp),
    };
    match &outcome {
        LpOutcome::Optimal { point, .. } if lp.max_violation(point) > ACCEPT_TOL * point.iter().fold(1.0f64, |m, v| m.max(v.abs())) => {
            dense::solve(lp)
        }
        _ => Ok(outcome),
    }
}

/// Finds any point satisfying the rows and bounds.
pub fn check_feasible(n_vars: usize, constraints: &[Constraint], bounds: &[(f64, f64)]) -> Result<Feasibility> {
    let lp = LinearProgram { objective: vec![0.0; n_vars], constraints: constraints.to_vec(), bounds: bounds.to_vec() };
    Ok(match solve(&lp)? {
        LpOutcome::Optimal { point, .. } => Feasibility::Feasible(point),
        LpOutcome::Infeasible => Feasibility::Infeasible,
        LpOutcome::Unbounded => unreachable!("zero objective is bounded"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TOL_FEAS;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn perturbation_only_loosens() {
        let mut lp = LinearProgram::minimize(vec![0.0, 0.0]);
        lp.push(Constraint::le(vec![4.0, -2.0], 0.0)).push(Constraint::ge(vec![1e-8, 3.0], 0.0));
        let loose = perturbed(&lp);
        for x in [[0.0, 0.0], [0.5, 1.0], [-1.0, 0.0]] {
            if lp.max_violation(&x) == 0.0 {
                assert_eq!(loose.max_violation(&x), 0.0);
            }
        }
        assert!(loose.max_violation(&[1e-10, 0.0]) == 0.0);
    }

    #[test]
    fn lower_bounded_minimum() {
        let mut lp = LinearProgram::minimize(vec![1.0]);
        lp.free(0);
        lp.push(Constraint::ge(vec![1.0], 3.0)).push(Constraint::le(vec![1.0], 10.0));
        match solve(&lp).unwrap() {
            LpOutcome::Optimal { value, point } => {
                assert!((value - 3.0).abs() < 1e-12);
                assert!((point[0] - 3.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut lp = LinearProgram::minimize(vec![0.0]);
        lp.free(0);
        lp.push(Constraint::le(vec![1.0], 1.0)).push(Constraint::ge(vec![1.0], 2.0));
        assert_eq!(solve(&lp).unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn unbounded_is_distinct() {
        let mut lp = LinearProgram::minimize(vec![-1.0]);
        lp.free(0);
        lp.push(Constraint::ge(vec![1.0], 0.0));
        assert_eq!(solve(&lp).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn feasibility_examples() {
        let rows = [Constraint::le(vec![1.0, 1.0], 1.0)];
        let x = check_feasible(2, &rows, &[(0.0, INF), (0.0, INF)]).unwrap().witness().unwrap();
        assert!(x[0] + x[1] <= 1.0 + TOL_FEAS && x.iter().all(|v| *v >= 0.0));

        let rows = [Constraint::le(vec![1.0], -1.0)];
        assert_eq!(check_feasible(1, &rows, &[(0.0, INF)]).unwrap(), Feasibility::Infeasible);

        let x = check_feasible(2, &[], &[(1.0, 2.0), (-3.0, -1.0)]).unwrap().witness().unwrap();
        assert!((1.0..=2.0).contains(&x[0]) && (-3.0..=-1.0).contains(&x[1]));
    }

    #[test]
    fn mirrored_and_fixed_bounds() {
        // max x + y with x ≤ 4 (no lower bound), y fixed at 2, x + y ≤ 5
        let mut lp = LinearProgram::minimize(vec![-1.0, -1.0]);
        lp.set_bounds(0, f64::NEG_INFINITY, 4.0).set_bounds(1, 2.0, 2.0);
        lp.push(Constraint::le(vec![1.0, 1.0], 5.0));
        let LpOutcome::Optimal { value, point } = solve(&lp).unwrap() else { panic!() };
        assert!((value + 5.0).abs() < 1e-12, "{point:?}");
        assert!((point[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn equality_rows_and_redundancy() {
        // x + y = 1 twice (redundant), minimize x − y over the box [0, 1]².
        let mut lp = LinearProgram::minimize(vec![1.0, -1.0]);
        lp.set_bounds(0, 0.0, 1.0).set_bounds(1, 0.0, 1.0);
        lp.push(Constraint::eq(vec![1.0, 1.0], 1.0)).push(Constraint::eq(vec![2.0, 2.0], 2.0));
        let LpOutcome::Optimal { value, point } = solve(&lp).unwrap() else { panic!() };
        assert!((value + 1.0).abs() < 1e-12);
        assert!(lp.max_violation(&point) <= TOL_FEAS);
    }

    #[test]
    fn shape_errors() {
        let mut lp = LinearProgram::minimize(vec![1.0, 1.0]);
        lp.push(Constraint::le(vec![1.0], 1.0));
        assert!(matches!(solve(&lp), Err(Error::Dimension(_))));
        let mut lp = LinearProgram::minimize(vec![1.0]);
        lp.set_bounds(0, 2.0, 1.0);
        assert!(solve(&lp).is_err());
    }
}
