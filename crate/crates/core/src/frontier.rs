//! Weighted-sum solvers, Pareto-frontier tracing, dominance and Hausdorff distance.
//!
//! The feasible set is always `{β^i ≥ 0 : αᵀ Σ_i β^i ≤ 1}`. Its vertices are the
//! origin and `e_(i,n) / α_n`, which is what makes the Frank–Wolfe oracle trivial.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::afriat::PiecewiseLinearUtility;
use crate::data::{dot, Probe, TOL_FEAS};
use crate::error::{dim_err, input_err, Error, Result};
use crate::linprog::{solve, Constraint, LinearProgram, LpOutcome};
use crate::utility::{SmoothUtility, Utility};

/// Agent-major allocation: `allocation[i][n]`.
pub type Allocation = Vec<Vec<f64>>;

/// Smallest weight component used when sampling the open simplex.
pub const MU_MIN: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() || mu.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(input_err("weights must be nonnegative and finite"));
        }
        let sum: f64 = mu.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(input_err(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self(mu))
    }

    /// Rescales nonnegative weights onto the simplex.
    pub fn normalized(mu: Vec<f64>) -> Result<Self> {
        let sum: f64 = mu.iter().sum();
        if !(sum > 0.0) {
            return Err(input_err("weights must have a positive sum"));
        }
        Self::new(mu.into_iter().map(|m| m / sum).collect())
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.0.iter().all(|m| *m > 0.0)
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

/// Every `μ` with components `k/density`, each clipped to `≥ min` and renormalized.
/// Ordered lexicographically in the integer compositions.
pub fn weight_grid(m: usize, density: usize, min: f64) -> Vec<WeightVector> {
    fn rec(m: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == m {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(m, left - k, prefix, out);
            prefix.pop();
        }
    }
    if m == 0 {
        return Vec::new();
    }
    let density = density.max(1);
    let mut comps = Vec::new();
    rec(m, density, &mut Vec::with_capacity(m), &mut comps);
    comps
        .into_iter()
        .map(|c| {
            let raw: Vec<f64> = c.iter().map(|k| (*k as f64 / density as f64).max(min)).collect();
            WeightVector::normalized(raw).expect("positive weights")
        })
        .collect()
}

fn check_agents(m: usize, mu: &WeightVector, dims: impl Iterator<Item = usize>, probe: &Probe) -> Result<()> {
    if m == 0 {
        return Err(input_err("need at least one agent"));
    }
    if mu.len() != m {
        return Err(dim_err(format!("{} weights for {m} agents", mu.len())));
    }
    for (i, n) in dims.enumerate() {
        if n != probe.dim() {
            return Err(dim_err(format!("agent {i} utility has dimension {n}, probe has {}", probe.dim())));
        }
    }
    Ok(())
}

/// Budget spent by an allocation.
pub fn spend(probe: &Probe, allocation: &Allocation) -> f64 {
    allocation.iter().map(|b| dot(probe.values(), b)).sum()
}

/// Is the allocation inside the budget polytope (within `TOL_FEAS`)?
pub fn is_feasible(probe: &Probe, allocation: &Allocation) -> bool {
    spend(probe, allocation) <= 1.0 + TOL_FEAS && allocation.iter().flatten().all(|b| *b >= -TOL_FEAS)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSolution {
    pub allocation: Allocation,
    pub value: f64,
}

/// Exact weighted-sum optimum for piecewise-linear utilities, via the epigraph LP
/// `max Σ μ_i z_i` s.t. `z_i ≤ piece_t(β^i)`, `αᵀΣβ ≤ 1`, `β ≥ 0`.
pub fn solve_weighted_sum_pwl(
    utils: &[PiecewiseLinearUtility],
    mu: &WeightVector,
    probe: &Probe,
) -> Result<WeightedSolution> {
    let m = utils.len();
    check_agents(m, mu, utils.iter().map(|u| u.dim()), probe)?;
    let n = probe.dim();
    let nv = m * n + m;
    // The epigraph variable of agent i is stored as u_i / scale_i so that
    // utilities with very large levels or slopes keep an O(1) constraint matrix.
    let scale: Vec<f64> = utils
        .iter()
        .map(|u| {
            u.pieces().iter().fold(1.0f64, |s, p| {
                p.gradient().iter().fold(s.max(p.intercept().abs()), |s, g| s.max(g.abs()))
            })
        })
        .collect();
    let mut objective = vec![0.0; nv];
    for i in 0..m {
        objective[m * n + i] = -mu.values()[i] * scale[i];
    }
    let mut lp = LinearProgram::minimize(objective);
    for i in 0..m {
        for k in 0..n {
            lp.set_bounds(i * n + k, 0.0, 1.0 / probe.values()[k]);
        }
        lp.free(m * n + i);
        for p in utils[i].pieces() {
            let mut row = vec![0.0; nv];
            row[m * n + i] = 1.0;
            for (k, g) in p.gradient().into_iter().enumerate() {
                row[i * n + k] = -g / scale[i];
            }
            lp.push(Constraint::le(row, p.intercept() / scale[i]));
        }
    }
    let mut budget = vec![0.0; nv];
    for i in 0..m {
        budget[i * n..(i + 1) * n].copy_from_slice(probe.values());
    }
    lp.push(Constraint::le(budget, 1.0));
    match solve(&lp)? {
        LpOutcome::Optimal { point, .. } => {
            let allocation: Allocation = (0..m).map(|i| point[i * n..(i + 1) * n].iter().map(|b| b.max(0.0)).collect()).collect();
            let value = weighted_value(utils, mu, &allocation);
            Ok(WeightedSolution { allocation, value })
        }
        LpOutcome::Unbounded => Err(Error::Solver("weighted-sum LP unbounded".into())),
        LpOutcome::Infeasible => Err(Error::Solver("weighted-sum LP infeasible".into())),
    }
}

/// `Σ_i μ_i f_i(β^i)`.
pub fn weighted_value<U: Utility>(utils: &[U], mu: &WeightVector, allocation: &Allocation) -> f64 {
    utils.iter().zip(mu.values()).zip(allocation).map(|((u, m), b)| m * u.value(b)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Classic open-loop step `2/(k+2)` toward the oracle vertex.
    Harmonic,
    /// Pairwise step (mass moved from the worst active vertex to the oracle
    /// vertex) with a golden-section line search.
    Pairwise,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FwOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub step: StepRule,
}

impl Default for FwOptions {
    fn default() -> Self {
        Self { max_iters: 2000, tol: 1e-5, step: StepRule::Pairwise }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FwResult {
    pub allocation: Allocation,
    pub value: f64,
    /// Final Frank–Wolfe duality gap.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Vertex-weight representation: `w[0]` on the origin, `w[1 + i·N + n]` on `e_(i,n)/α_n`.
struct Simplex<'a> {
    alpha: &'a [f64],
    m: usize,
}

impl Simplex<'_> {
    fn n(&self) -> usize {
        self.alpha.len()
    }

    fn point(&self, w: &[f64]) -> Allocation {
        let n = self.n();
        (0..self.m).map(|i| (0..n).map(|k| w[1 + i * n + k] / self.alpha[k]).collect()).collect()
    }

    /// Linear functional `⟨g, vertex_v⟩` for each vertex, given gradient in β-space.
    fn vertex_scores(&self, grad: &Allocation, out: &mut [f64]) {
        let n = self.n();
        out[0] = 0.0;
        for i in 0..self.m {
            for k in 0..n {
                out[1 + i * n + k] = grad[i][k] / self.alpha[k];
            }
        }
    }
}

fn gradient<S: SmoothUtility>(objs: &[S], mu: &WeightVector, x: &Allocation) -> Result<Allocation> {
    let mut g: Allocation = x.iter().map(|b| vec![0.0; b.len()]).collect();
    for (i, (f, gi)) in objs.iter().zip(g.iter_mut()).enumerate() {
        f.gradient(&x[i], gi);
        for v in gi.iter_mut() {
            *v *= mu.values()[i];
        }
        if gi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver(format!("non-finite gradient for agent {i}")));
        }
    }
    Ok(g)
}

fn golden_max(f: impl Fn(f64) -> f64, hi: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if b - a <= 1e-14 * hi.max(1.0) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // The objective need not be concave along the segment; keep the endpoints in play.
    [(0.0, f(0.0)), (hi, f(hi)), (mid, f(mid))]
        .into_iter()
        .fold((0.0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
        .0
}

fn frank_wolfe_from<S: SmoothUtility>(
    objs: &[S],
    mu: &WeightVector,
    probe: &Probe,
    mut w: Vec<f64>,
    opts: &FwOptions,
) -> Result<FwResult> {
    let sx = Simplex { alpha: probe.values(), m: objs.len() };
    let nv = w.len();
    let mut scores = vec![0.0; nv];
    let mut x = sx.point(&w);
    let mut gap = f64::INFINITY;
    let mut k = 0;
    while k < opts.max_iters {
        let g = gradient(objs, mu, &x)?;
        sx.vertex_scores(&g, &mut scores);
        let current: f64 = w.iter().zip(&scores).map(|(w, s)| w * s).sum();
        let (s, best) = scores.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
        gap = best - current;
        if gap < opts.tol {
            break;
        }
        match opts.step {
            StepRule::Harmonic => {
                let gamma = 2.0 / (k as f64 + 2.0);
                w.iter_mut().for_each(|v| *v *= 1.0 - gamma);
                w[s] += gamma;
            }
            StepRule::Pairwise => {
                let a = (0..nv)
                    .filter(|&v| w[v] > 0.0 && v != s)
                    .min_by(|&p, &q| scores[p].total_cmp(&scores[q]))
                    .unwrap_or(s);
                if a == s {
                    break;
                }
                let cap = w[a];
                let eval = |gamma: f64| {
                    let mut trial = w.clone();
                    trial[a] -= gamma;
                    trial[s] += gamma;
                    weighted_value(objs, mu, &sx.point(&trial))
                };
                let gamma = golden_max(eval, cap);
                w[a] -= gamma;
                w[s] += gamma;
                if gamma >= cap {
                    w[a] = 0.0;
                }
            }
        }
        x = sx.point(&w);
        k += 1;
    }
    if k == opts.max_iters {
        let g = gradient(objs, mu, &x)?;
        sx.vertex_scores(&g, &mut scores);
        let current: f64 = w.iter().zip(&scores).map(|(w, s)| w * s).sum();
        gap = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max) - current;
    }
    Ok(FwResult { value: weighted_value(objs, mu, &x), allocation: x, gap, iterations: k, converged: gap < opts.tol })
}

/// Conditional-gradient maximization of `Σ_i μ_i f_i(β^i)` over the budget polytope.
///
/// The objectives need not be jointly concave, so the solver is restarted from
/// the equal split and from each single-agent face; the best stationary point wins.
pub fn solve_weighted_sum_smooth<S: SmoothUtility>(
    objs: &[S],
    mu: &WeightVector,
    probe: &Probe,
    opts: &FwOptions,
) -> Result<FwResult> {
    let m = objs.len();
    check_agents(m, mu, objs.iter().map(|f| f.dim()), probe)?;
    let n = probe.dim();
    let nv = 1 + m * n;
    let mut starts = Vec::with_capacity(m + 1);
    let active: Vec<usize> = (0..m).filter(|&i| mu.values()[i] > 0.0).collect();
    let mut w = vec![0.0; nv];
    for &i in &active {
        for k in 0..n {
            w[1 + i * n + k] = 1.0 / (active.len() * n) as f64;
        }
    }
    starts.push(w);
    if active.len() > 1 {
        for &i in &active {
            let mut w = vec![0.0; nv];
            for k in 0..n {
                w[1 + i * n + k] = 1.0 / n as f64;
            }
            starts.push(w);
        }
    }
    let mut best: Option<FwResult> = None;
    for w in starts {
        let r = frank_wolfe_from(objs, mu, probe, w, opts)?;
        // Prefer higher value; among near-ties prefer a converged run.
        let better = match &best {
            None => true,
            Some(b) => r.value > b.value + 1e-12 || (r.value > b.value - 1e-12 && r.converged && !b.converged),
        };
        if better {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one start"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub mu: WeightVector,
    pub allocation: Allocation,
    pub values: Vec<f64>,
}

impl FrontierPoint {
    pub fn flat_allocation(&self) -> Vec<f64> {
        self.allocation.iter().flatten().copied().collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrontierSample {
    pub points: Vec<FrontierPoint>,
}

impl FrontierSample {
    /// Allocations flattened agent-major, for set distances.
    pub fn allocation_set(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(FrontierPoint::flat_allocation).collect()
    }

    /// CSV with header `mu_1..mu_M, beta_1_1..beta_M_N, f_1..f_M`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if let Some(p) = self.points.first() {
            let m = p.mu.len();
            let n = p.allocation.first().map_or(0, Vec::len);
            let mut header: Vec<String> = (1..=m).map(|i| format!("mu_{i}")).collect();
            for i in 1..=m {
                header.extend((1..=n).map(|k| format!("beta_{i}_{k}")));
            }
            header.extend((1..=m).map(|i| format!("f_{i}")));
            w.write_record(&header)?;
        }
        for p in &self.points {
            let row = p.mu.values().iter().chain(p.allocation.iter().flatten()).chain(&p.values).map(|v| v.to_string());
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn point_from<U: Utility>(utils: &[U], mu: WeightVector, allocation: Allocation) -> FrontierPoint {
    let values = utils.iter().zip(&allocation).map(|(u, b)| u.value(b)).collect();
    FrontierPoint { mu, allocation, values }
}

/// Weighted-sum optima of piecewise-linear utilities over the clipped weight grid.
pub fn trace_frontier(utils: &[PiecewiseLinearUtility], probe: &Probe, grid_density: usize) -> Result<FrontierSample> {
    let points = weight_grid(utils.len(), grid_density, MU_MIN)
        .into_par_iter()
        .map(|mu| solve_weighted_sum_pwl(utils, &mu, probe).map(|s| point_from(utils, mu, s.allocation)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrontierSample { points })
}

/// Same grid as [`trace_frontier`], solved with Frank–Wolfe.
pub fn trace_frontier_smooth<S: SmoothUtility>(
    objs: &[S],
    probe: &Probe,
    grid_density: usize,
    opts: &FwOptions,
) -> Result<FrontierSample> {
    let points = weight_grid(objs.len(), grid_density, MU_MIN)
        .into_par_iter()
        .map(|mu| solve_weighted_sum_smooth(objs, &mu, probe, opts).map(|s| point_from(objs, mu, s.allocation)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrontierSample { points })
}

/// Strictness margin for dominance.
pub const DOMINANCE_MARGIN: f64 = 1e-9;

/// Does objective vector `a` weakly improve on `b` everywhere and strictly somewhere?
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| *x >= *y - DOMINANCE_MARGIN) && a.iter().zip(b).any(|(x, y)| *x > *y + DOMINANCE_MARGIN)
}

/// Is `point` dominated by any candidate allocation under `utils`?
pub fn is_dominated<U: Utility>(point: &Allocation, candidates: &[Allocation], utils: &[U]) -> bool {
    let values = |a: &Allocation| -> Vec<f64> { utils.iter().zip(a).map(|(u, b)| u.value(b)).collect() };
    let base = values(point);
    candidates.iter().any(|c| dominates(&values(c), &base))
}

/// Symmetric Hausdorff distance between finite point sets under the Euclidean metric.
pub fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(input_err("hausdorff distance needs nonempty sets"));
    }
    let dim = a[0].len();
    if a.iter().chain(b).any(|p| p.len() != dim) {
        return Err(dim_err("points of unequal dimension"));
    }
    let dist2 = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let directed = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        a.iter().map(|p| b.iter().map(|q| dist2(p, q)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    Ok(directed(a, b).max(directed(b, a)).sqrt())
}
