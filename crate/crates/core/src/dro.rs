//! Wasserstein distributionally robust estimation of the utility parameters.
//!
//! The robust problem is solved as a semi-infinite program by an exchange method:
//! a finite master problem over a growing support set alternates with an oracle
//! that finds the most violated constraint over the whole ambiguity support.
//!
//! For fixed `(v1, v2)` the master is an LP in `(u, λ)` and every constraint with
//! the same `(s, t, i)` shares the left-hand side `u_s − u_t`, so all support
//! points collapse into one gap matrix per agent:
//!
//! ```text
//! u_s − u_t ≤ λ_t·(c_ts + v1),   c_ts = min_j [α_tᵀ(β_s,j − β_t,j) + v2·D_j]
//! ```
//!
//! The feasible `(v1, v2)` region is upward closed, so the master reduces to a
//! one-dimensional search over `v2` with a bisection for the smallest `v1`.

use serde::{Deserialize, Serialize};

use crate::afriat::{minimal_slack_tol, reconstruct_utilities, AgentParams, ParamBox, PiecewiseLinearUtility};
use crate::data::{dot, norm, AfriatCertificate, CertificateKind, Dataset, GapMatrix, NoisyDataset, Response, ResponseGrid};
use crate::error::{dim_err, input_err, Error, Result};

/// Bisection tolerance on `v1`.
pub const V1_TOL: f64 = 1e-6;

/// Golden-section steps of the `v2` refinement.
const REFINE_STEPS: usize = 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroConfig {
    /// Wasserstein radius `ε`.
    pub epsilon: f64,
    /// Exchange stopping tolerance `δ` on the constraint violation.
    pub delta: f64,
    /// Radius `R` of each response block's support around the observation.
    #[serde(default = "default_radius")]
    pub support_radius: f64,
    /// Lower bound `λ̂` on the multipliers.
    #[serde(default = "default_lambda_floor")]
    pub lambda_floor: f64,
    #[serde(default = "default_grid")]
    pub v2_grid: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

fn default_radius() -> f64 {
    1.0
}

fn default_lambda_floor() -> f64 {
    0.5
}

fn default_grid() -> usize {
    64
}

fn default_max_iters() -> usize {
    200
}

impl DroConfig {
    pub fn new(epsilon: f64, delta: f64) -> Self {
        Self {
            epsilon,
            delta,
            support_radius: default_radius(),
            lambda_floor: default_lambda_floor(),
            v2_grid: default_grid(),
            max_iters: default_max_iters(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.epsilon, self.delta, self.support_radius].iter().all(|x| *x > 0.0 && x.is_finite());
        if !positive {
            return Err(input_err("epsilon, delta and support_radius must be positive and finite"));
        }
        if !(self.lambda_floor > 0.0 && self.lambda_floor <= 1.0) {
            return Err(input_err("lambda_floor must lie in (0, 1]"));
        }
        if self.v2_grid < 2 || self.max_iters == 0 {
            return Err(input_err("v2_grid must be >= 2 and max_iters >= 1"));
        }
        Ok(())
    }

    /// `V = 2(1 + R) + 2`.
    pub fn v_bound(&self) -> f64 {
        2.0 * (1.0 + self.support_radius) + 2.0
    }

    pub fn v1_max(&self) -> f64 {
        2.0 * self.v_bound()
    }

    pub fn v2_max(&self) -> f64 {
        self.v_bound() / self.epsilon
    }

    fn param_box(&self) -> ParamBox {
        ParamBox::unit(self.lambda_floor)
    }
}

/// Boxed parameters `u ∈ [−1, 1]`, `λ ∈ [λ̂, 1]`, agent-major `[i][t]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub u: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
}

impl ParameterVector {
    /// `u = 0`, `λ = 1`.
    pub fn neutral(m: usize, t_len: usize) -> Self {
        Self { u: vec![vec![0.0; t_len]; m], lambda: vec![vec![1.0; t_len]; m] }
    }

    fn from_agents(agents: Vec<AgentParams>) -> Self {
        let (u, lambda) = agents.into_iter().map(|a| (a.u, a.lambda)).unzip();
        Self { u, lambda }
    }

    fn check(&self, d: &Dataset, lambda_floor: f64) -> Result<()> {
        let (m, t_len) = (d.n_agents(), d.horizon());
        let shape_ok = self.u.len() == m
            && self.lambda.len() == m
            && self.u.iter().chain(&self.lambda).all(|r| r.len() == t_len);
        if !shape_ok {
            return Err(dim_err(format!("parameter vector does not match dataset (M={m}, T={t_len})")));
        }
        if let Some(l) = self.lambda.iter().flatten().find(|l| !(**l >= lambda_floor - 1e-12)) {
            return Err(input_err(format!("multiplier {l} is below the floor {lambda_floor}")));
        }
        Ok(())
    }

    pub fn certificate(&self, slack: f64) -> AfriatCertificate {
        AfriatCertificate { u: self.u.clone(), lambda: self.lambda.clone(), kind: CertificateKind::Relaxed(slack) }
    }
}

/// `h(ψ, Φ) = max_{s,t,i} [u_s − u_t − λ_t·α_tᵀ(β_s − β_t)] / λ_t`, including `s = t`.
pub fn eval_h(psi: &ParameterVector, d: &Dataset, lambda_floor: f64) -> Result<f64> {
    psi.check(d, lambda_floor)?;
    let mut h = 0.0f64;
    for i in 0..d.n_agents() {
        let g = d.expenditure_gaps(i);
        for t in 0..d.horizon() {
            for s in 0..d.horizon() {
                h = h.max((psi.u[i][s] - psi.u[i][t]) / psi.lambda[i][t] - g.get(t, s));
            }
        }
    }
    Ok(h)
}

/// `Σ_{t,i} ‖β_t^i − β̂_t^i‖₂`.
pub fn transport_cost(d: &Dataset, base: &Dataset) -> f64 {
    let mut total = 0.0;
    for t in 0..d.horizon() {
        for i in 0..d.n_agents() {
            let diff: Vec<f64> = d.response(t, i).iter().zip(base.response(t, i)).map(|(a, b)| a - b).collect();
            total += norm(&diff);
        }
    }
    total
}

/// One support point, cached as per-agent gap matrices and its transport cost.
#[derive(Clone, Debug)]
struct SupportPoint {
    gaps: Vec<GapMatrix>,
    cost: f64,
}

impl SupportPoint {
    fn new(d: &Dataset, base: &Dataset) -> Self {
        Self { gaps: (0..d.n_agents()).map(|i| d.expenditure_gaps(i)).collect(), cost: transport_cost(d, base) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasterSolution {
    pub psi: ParameterVector,
    pub v1: f64,
    pub v2: f64,
    pub objective: f64,
}

struct Master<'a> {
    points: &'a [SupportPoint],
    m: usize,
    t_len: usize,
    cfg: &'a DroConfig,
}

impl Master<'_> {
    fn collapsed(&self, agent: usize, v2: f64) -> GapMatrix {
        GapMatrix::from_fn(self.t_len, |t, s| {
            self.points.iter().map(|p| p.gaps[agent].get(t, s) + v2 * p.cost).fold(f64::INFINITY, f64::min)
        })
    }

    /// Smallest feasible `v1 ∈ [0, 2V]` at this `v2` with witnesses; `None` outside the box.
    fn min_v1(&self, v2: f64) -> Result<Option<(f64, Vec<AgentParams>)>> {
        let bx = self.cfg.param_box();
        let hi = self.cfg.v1_max();
        let mut v1 = 0.0;
        let mut witnesses = Vec::with_capacity(self.m);
        for i in 0..self.m {
            let c = self.collapsed(i, v2);
            // Earlier witnesses stay valid: feasibility is monotone in v1.
            match minimal_slack_tol(&c, bx, v1, hi, V1_TOL)? {
                Some((r, w)) => {
                    v1 = r;
                    witnesses.push(w);
                }
                None => return Ok(None),
            }
        }
        Ok(Some((v1, witnesses)))
    }

    fn objective(&self, v2: f64) -> Result<Option<(f64, f64, Vec<AgentParams>)>> {
        Ok(self.min_v1(v2)?.map(|(v1, w)| (self.cfg.epsilon * v2 + v1, v1, w)))
    }

    fn solve(&self) -> Result<MasterSolution> {
        let cfg = self.cfg;
        let v2_max = cfg.v2_max();
        if self.min_v1(v2_max)?.is_none() {
            return Err(Error::OutsideAmbiguity);
        }
        let step = v2_max / (cfg.v2_grid - 1) as f64;
        let mut best: Option<(f64, f64, f64, Vec<AgentParams>)> = None;
        let mut best_k = 0;
        for k in 0..cfg.v2_grid {
            let v2 = k as f64 * step;
            if let Some((obj, ..)) = &best {
                if cfg.epsilon * v2 >= *obj {
                    break;
                }
            }
            if let Some((obj, v1, w)) = self.objective(v2)? {
                if best.as_ref().is_none_or(|b| obj < b.0) {
                    best = Some((obj, v1, v2, w));
                    best_k = k;
                }
                if v1 == 0.0 {
                    break;
                }
            }
        }
        let mut best = best.expect("corner is feasible");
        // Golden-section refinement between the grid neighbours of the minimum.
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let mut a = best_k.saturating_sub(1) as f64 * step;
        let mut b = ((best_k + 1).min(cfg.v2_grid - 1)) as f64 * step;
        let eval = |v2: f64| -> Result<(f64, Option<(f64, f64, f64, Vec<AgentParams>)>)> {
            Ok(match self.objective(v2)? {
                Some((obj, v1, w)) => (obj, Some((obj, v1, v2, w))),
                None => (f64::INFINITY, None),
            })
        };
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let (mut fc, mut sc) = eval(c)?;
        let (mut fd, mut sd) = eval(d)?;
        for _ in 0..REFINE_STEPS {
            for cand in [sc.take(), sd.take()].into_iter().flatten() {
                if cand.0 < best.0 {
                    best = cand;
                }
            }
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                (fc, sc) = eval(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                (fd, sd) = eval(d)?;
            }
        }
        for cand in [sc, sd].into_iter().flatten() {
            if cand.0 < best.0 {
                best = cand;
            }
        }
        let (objective, v1, v2, w) = best;
        Ok(MasterSolution { psi: ParameterVector::from_agents(w), v1, v2, objective })
    }
}

fn check_support(support: &[Dataset], noisy: &Dataset) -> Result<()> {
    for (j, d) in support.iter().enumerate() {
        if d.horizon() != noisy.horizon() || d.n_agents() != noisy.n_agents() || d.n_dims() != noisy.n_dims() {
            return Err(dim_err(format!("support point {j} does not match the observed dataset shape")));
        }
    }
    Ok(())
}

/// Finite master problem over the support set.
pub fn solve_master(support: &[Dataset], noisy: &NoisyDataset, cfg: &DroConfig) -> Result<MasterSolution> {
    cfg.validate()?;
    check_support(support, noisy)?;
    let points: Vec<SupportPoint> = support.iter().map(|d| SupportPoint::new(d, noisy)).collect();
    master_on(&points, noisy, cfg)
}

fn master_on(points: &[SupportPoint], noisy: &Dataset, cfg: &DroConfig) -> Result<MasterSolution> {
    let (m, t_len) = (noisy.n_agents(), noisy.horizon());
    if points.is_empty() {
        return Ok(MasterSolution { psi: ParameterVector::neutral(m, t_len), v1: 0.0, v2: 0.0, objective: 0.0 });
    }
    Master { points, m, t_len, cfg }.solve()
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    /// `max_Φ G(ψ, v, Φ)` as evaluated at the returned point.
    pub cv: f64,
    pub worst: Dataset,
    /// Whether the orthant bound is active at the maximizing perturbation.
    pub clipped: bool,
}

/// `max_d cᵀd − v2‖d‖` over `‖d‖ ≤ R`, `base + d ≥ 0`.
///
/// The maximizer fixes some components at `−base` and moves the rest along
/// `c`; every such active set is tried, so the cost is `2^N` per call.
pub fn block_step(c: &[f64], base: &[f64], v2: f64, radius: f64) -> Vec<f64> {
    let n = c.len();
    let mut best = (0.0, vec![0.0; n]);
    for mask in 0u32..(1u32 << n) {
        let fixed = |k: usize| mask & (1 << k) != 0;
        let kappa: f64 = (0..n).filter(|&k| fixed(k)).map(|k| base[k] * base[k]).sum();
        if kappa > radius * radius {
            continue;
        }
        let cf: Vec<f64> = (0..n).map(|k| if fixed(k) { 0.0 } else { c[k] }).collect();
        let nc = norm(&cf);
        let rho_max = (radius * radius - kappa).sqrt();
        // Maximize ‖c_F‖ρ − v2·√(ρ² + κ) over ρ ∈ [0, ρ_max]; concave in ρ.
        let rho = if nc == 0.0 {
            0.0
        } else if nc >= v2 {
            rho_max
        } else {
            let q = nc / v2;
            (kappa.sqrt() * q / (1.0 - q * q).sqrt()).min(rho_max)
        };
        let d: Vec<f64> =
            (0..n).map(|k| if fixed(k) { -base[k] } else if nc > 0.0 { rho * cf[k] / nc } else { 0.0 }).collect();
        if (0..n).any(|k| !fixed(k) && base[k] + d[k] < 0.0) {
            continue;
        }
        let val = dot(c, &d) - v2 * norm(&d);
        if val > best.0 + 1e-15 {
            best = (val, d);
        }
    }
    best.1
}

/// Maximum constraint violation over `Γ = Π {β ≥ 0 : ‖β − β̂‖ ≤ R}`.
///
/// For each triple `(s, t, i)` only blocks `(s, i)` and `(t, i)` enter `h`, and
/// they separate; each block is maximized exactly by [`block_step`] and the
/// candidate is then re-evaluated against the full `h`.
pub fn violation_oracle(psi: &ParameterVector, v: (f64, f64), noisy: &NoisyDataset, cfg: &DroConfig) -> Result<OracleResult> {
    cfg.validate()?;
    let base: &Dataset = noisy;
    let (v1, v2) = v;
    let g_of = |d: &Dataset| -> Result<f64> { Ok(eval_h(psi, d, cfg.lambda_floor)? - v2 * transport_cost(d, base) - v1) };
    let mut best = OracleResult { cv: g_of(base)?, worst: base.clone(), clipped: false };
    let r = cfg.support_radius;
    let shift = |b: &[f64], d: &[f64]| -> (Response, bool) {
        let moved: Vec<f64> = b.iter().zip(d).map(|(b, d)| (b + d).max(0.0)).collect();
        let active = moved.iter().any(|x| *x <= 0.0);
        (Response::new(moved).expect("kept in the orthant"), active)
    };
    for i in 0..base.n_agents() {
        for t in 0..base.horizon() {
            let alpha = base.probe(t).values();
            let neg: Vec<f64> = alpha.iter().map(|a| -a).collect();
            let (up_resp, up_clip) = shift(base.response(t, i), &block_step(alpha, base.response(t, i), v2, r));
            for s in 0..base.horizon() {
                if s == t {
                    continue;
                }
                let (down_resp, down_clip) = shift(base.response(s, i), &block_step(&neg, base.response(s, i), v2, r));
                let mut grid: ResponseGrid = base.responses().clone();
                grid[s][i] = down_resp;
                grid[t][i] = up_resp.clone();
                let cand = base.with_responses(grid)?;
                let cv = g_of(&cand)?;
                if cv > best.cv {
                    best = OracleResult { cv, worst: cand, clipped: up_clip || down_clip };
                }
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroSolution {
    pub psi: ParameterVector,
    pub v: (f64, f64),
    pub objective: f64,
    pub cv_trace: Vec<f64>,
    pub converged: bool,
    /// Master objective after each solve.
    #[serde(skip)]
    pub master_trace: Vec<f64>,
    /// Whether the orthant clip was active at any appended support point.
    #[serde(default)]
    pub clipped: bool,
    #[serde(skip)]
    pub support: Vec<Dataset>,
}

/// Exchange method: oracle, append the violating point, re-solve the master, until `CV < δ`.
///
/// Deterministic: neither the oracle nor the master draws random numbers.
pub fn run_exchange(noisy: &NoisyDataset, cfg: &DroConfig) -> Result<DroSolution> {
    cfg.validate()?;
    let base: &Dataset = noisy;
    let mut psi = ParameterVector::neutral(base.n_agents(), base.horizon());
    let (mut v, mut objective) = ((0.0, 0.0), 0.0);
    let mut points = Vec::new();
    let mut support = Vec::new();
    let mut cv_trace = Vec::new();
    let mut master_trace = Vec::new();
    let mut clipped = false;
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let o = violation_oracle(&psi, v, noisy, cfg)?;
        cv_trace.push(o.cv);
        if o.cv < cfg.delta {
            converged = true;
            break;
        }
        if o.cv > 0.0 {
            clipped |= o.clipped;
            points.push(SupportPoint::new(&o.worst, base));
            support.push(o.worst);
        }
        let ms = master_on(&points, base, cfg)?;
        psi = ms.psi;
        v = (ms.v1, ms.v2);
        objective = ms.objective;
        master_trace.push(objective);
    }
    Ok(DroSolution { psi, v, objective, cv_trace, converged, master_trace, clipped, support })
}

/// Piecewise-linear utilities from the robust parameters, anchored at the noisy responses.
pub fn robust_utilities(sol: &DroSolution, noisy: &NoisyDataset) -> Result<Vec<PiecewiseLinearUtility>> {
    reconstruct_utilities(&sol.psi.certificate(sol.v.0), noisy)
}
