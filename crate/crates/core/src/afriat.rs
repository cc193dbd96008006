//! Rationalizability test, proximity to efficiency and utility reconstruction.
//!
//! Everything decomposes per agent: the inequality system
//!
//! ```text
//! u_s − u_t − λ_t·α_tᵀ(β_s − β_t) ≤ λ_t·r      for all s ≠ t
//! ```
//!
//! couples only one agent's `(u, λ)`. For a fixed slack `r` it is an LP
//! feasibility problem; feasibility is monotone in `r` because `λ > 0`, so the
//! minimal slack is found by bisection.

use serde::{Deserialize, Serialize};

use crate::data::{dot, AfriatCertificate, CertificateKind, Dataset, GapMatrix, TOL_FEAS};
use crate::error::{dim_err, Error, Result};
use crate::linprog::{check_feasible, solve, Constraint, Feasibility, LinearProgram, LpOutcome};
use crate::utility::Utility;

/// Bisection tolerance for the minimal slack.
pub const SLACK_TOL: f64 = 1e-7;

/// Bounds on one agent's `(u, λ)` variables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamBox {
    pub u: (f64, f64),
    pub lambda: (f64, f64),
}

impl ParamBox {
    /// `u` free, `λ ≥ 1`. The floor is lossless: certificates scale by any `c > 0`.
    pub const UNBOXED: ParamBox =
        ParamBox { u: (f64::NEG_INFINITY, f64::INFINITY), lambda: (1.0, f64::INFINITY) };

    /// `u ∈ [−1, 1]`, `λ ∈ [floor, 1]`.
    pub fn unit(lambda_floor: f64) -> Self {
        ParamBox { u: (-1.0, 1.0), lambda: (lambda_floor, 1.0) }
    }

    fn is_translation_invariant(&self) -> bool {
        self.u.0 == f64::NEG_INFINITY && self.u.1 == f64::INFINITY
    }
}

/// One agent's utility levels and multipliers.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentParams {
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl AgentParams {
    pub fn uniform(t_len: usize, u: f64, lambda: f64) -> Self {
        Self { u: vec![u; t_len], lambda: vec![lambda; t_len] }
    }
}

fn relaxed_system(gaps: &GapMatrix, r: f64, bx: ParamBox) -> (Vec<Constraint>, Vec<(f64, f64)>) {
    let t_len = gaps.size();
    let n = 2 * t_len;
    let mut rows = Vec::with_capacity(t_len * t_len.saturating_sub(1));
    for t in 0..t_len {
        for s in 0..t_len {
            if s == t {
                continue;
            }
            let mut coeffs = vec![0.0; n];
            coeffs[s] = 1.0;
            coeffs[t] = -1.0;
            coeffs[t_len + t] = -(gaps.get(t, s) + r);
            rows.push(Constraint::le(coeffs, 0.0));
        }
    }
    let mut bounds = vec![bx.u; t_len];
    bounds.extend(std::iter::repeat_n(bx.lambda, t_len));
    if bx.is_translation_invariant() {
        bounds[0] = (0.0, 0.0);
    }
    (rows, bounds)
}

fn split_params(x: &[f64], t_len: usize) -> AgentParams {
    let (u, lambda) = x.split_at(t_len);
    AgentParams { u: u.to_vec(), lambda: lambda.to_vec() }
}

/// Is `u_s − u_t ≤ λ_t·(gaps(t, s) + r)` feasible for all `s ≠ t` within `bx`?
pub fn relaxed_feasible(gaps: &GapMatrix, r: f64, bx: ParamBox) -> Result<Option<AgentParams>> {
    let (rows, bounds) = relaxed_system(gaps, r, bx);
    Ok(match check_feasible(bounds.len(), &rows, &bounds)? {
        Feasibility::Feasible(x) => Some(split_params(&x, gaps.size())),
        Feasibility::Infeasible => None,
    })
}

/// Feasible point at slack `r` minimizing `Σ_t λ_t`. A bare feasibility witness
/// can carry arbitrarily large multipliers, which makes the reconstructed
/// utility numerically useless; this picks the tightest one instead.
/// `None` when the system is infeasible or too ill-conditioned at `r` to bound.
pub fn canonical_params(gaps: &GapMatrix, r: f64, bx: ParamBox) -> Result<Option<AgentParams>> {
    let t_len = gaps.size();
    let (rows, bounds) = relaxed_system(gaps, r, bx);
    let mut objective = vec![0.0; 2 * t_len];
    objective[t_len..].iter_mut().for_each(|c| *c = 1.0);
    let mut lp = LinearProgram::minimize(objective);
    for (j, (lo, hi)) in bounds.into_iter().enumerate() {
        lp.set_bounds(j, lo, hi);
    }
    for c in rows {
        lp.push(c);
    }
    Ok(match solve(&lp)? {
        LpOutcome::Optimal { point, .. } => Some(split_params(&point, t_len)),
        LpOutcome::Infeasible | LpOutcome::Unbounded => None,
    })
}

/// Smallest `r` in `[lo, hi]` (to [`SLACK_TOL`]) at which [`relaxed_feasible`] holds,
/// with its witness; `None` when even `hi` is infeasible. `lo` itself is tried
/// first, then `0` when it lies inside the bracket, so boundary cases are exact.
pub fn minimal_slack(gaps: &GapMatrix, bx: ParamBox, lo: f64, hi: f64) -> Result<Option<(f64, AgentParams)>> {
    minimal_slack_tol(gaps, bx, lo, hi, SLACK_TOL)
}

/// [`minimal_slack`] with an explicit bisection tolerance.
pub fn minimal_slack_tol(
    gaps: &GapMatrix,
    bx: ParamBox,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<Option<(f64, AgentParams)>> {
    if let Some(w) = relaxed_feasible(gaps, lo, bx)? {
        return Ok(Some((lo, w)));
    }
    let Some(mut witness) = relaxed_feasible(gaps, hi, bx)? else {
        return Ok(None);
    };
    let (mut lo, mut hi) = (lo, hi);
    if lo < 0.0 && hi > 0.0 {
        match relaxed_feasible(gaps, 0.0, bx)? {
            Some(w) => {
                hi = 0.0;
                witness = w;
            }
            None => lo = 0.0,
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match relaxed_feasible(gaps, mid, bx)? {
            Some(w) => {
                hi = mid;
                witness = w;
            }
            None => lo = mid,
        }
    }
    Ok(Some((hi, witness)))
}

/// Symmetric bisection bracket `2 + max |gap|` for the unboxed system.
pub fn slack_bracket(gaps: &[GapMatrix]) -> f64 {
    2.0 + gaps.iter().map(GapMatrix::max_abs).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Rationalizability {
    Rationalizable(AfriatCertificate),
    NotRationalizable,
}

impl Rationalizability {
    pub fn is_rationalizable(&self) -> bool {
        matches!(self, Rationalizability::Rationalizable(_))
    }
}

/// Exact test: the full inequality system at zero slack, one LP per agent.
pub fn test_feasibility(d: &Dataset) -> Result<Rationalizability> {
    let mut cert = AfriatCertificate { u: Vec::new(), lambda: Vec::new(), kind: CertificateKind::Exact };
    for i in 0..d.n_agents() {
        let g = d.expenditure_gaps(i);
        match relaxed_feasible(&g, 0.0, ParamBox::UNBOXED)? {
            Some(w) => {
                let p = canonical_params(&g, 0.0, ParamBox::UNBOXED)?.unwrap_or(w);
                cert.u.push(p.u);
                cert.lambda.push(p.lambda);
            }
            None => return Ok(Rationalizability::NotRationalizable),
        }
    }
    Ok(Rationalizability::Rationalizable(cert))
}

/// Deviation from efficiency with a certificate that attains it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProximityResult {
    pub phi: f64,
    pub per_agent_phi: Vec<f64>,
    pub certificate: AfriatCertificate,
}

/// Minimal relaxation slack per agent. `phi` is the max over agents, clamped at 0
/// when `clamp_nonnegative` is set; the raw (possibly negative) values feed the detector.
pub fn proximity(d: &Dataset, clamp_nonnegative: bool) -> Result<ProximityResult> {
    let gaps: Vec<GapMatrix> = (0..d.n_agents()).map(|i| d.expenditure_gaps(i)).collect();
    let r_max = slack_bracket(&gaps);
    let mut per_agent_phi = Vec::with_capacity(gaps.len());
    let mut witnesses = Vec::with_capacity(gaps.len());
    for g in &gaps {
        let (r, p) = minimal_slack(g, ParamBox::UNBOXED, -r_max, r_max)?
            .ok_or_else(|| Error::Solver(format!("slack bracket {r_max} is infeasible")))?;
        per_agent_phi.push(r);
        witnesses.push(p);
    }
    let raw = per_agent_phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let phi = if clamp_nonnegative { raw.max(0.0) } else { raw };
    // Every agent is re-solved at the common slack, which is never below its own.
    let mut cert = AfriatCertificate { u: Vec::new(), lambda: Vec::new(), kind: CertificateKind::Relaxed(phi) };
    for (g, w) in gaps.iter().zip(witnesses) {
        let p = canonical_params(g, phi, ParamBox::UNBOXED)?.unwrap_or(w);
        cert.u.push(p.u);
        cert.lambda.push(p.lambda);
    }
    Ok(ProximityResult { phi, per_agent_phi, certificate: cert })
}

/// One affine piece `level + slope·probeᵀ(x − anchor)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub level: f64,
    pub slope: f64,
    pub probe: Vec<f64>,
    pub anchor: Vec<f64>,
}

impl Piece {
    pub fn gradient(&self) -> Vec<f64> {
        self.probe.iter().map(|a| self.slope * a).collect()
    }

    /// Constant term `c` in `c + gradientᵀx`.
    pub fn intercept(&self) -> f64 {
        self.level - self.slope * dot(&self.probe, &self.anchor)
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.probe.iter().zip(x.iter().zip(&self.anchor)).map(|(a, (x, b))| a * (x - b)).sum();
        self.level + self.slope * lin
    }
}

/// Concave, monotone utility `U(x) = min_t [u_t + λ_t·α_tᵀ(x − β_t)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PiecesFile", into = "PiecesFile")]
pub struct PiecewiseLinearUtility {
    pieces: Vec<Piece>,
}

#[derive(Serialize, Deserialize)]
struct PiecesFile {
    pieces: Vec<Piece>,
}

impl TryFrom<PiecesFile> for PiecewiseLinearUtility {
    type Error = Error;
    fn try_from(f: PiecesFile) -> Result<Self> {
        PiecewiseLinearUtility::new(f.pieces)
    }
}

impl From<PiecewiseLinearUtility> for PiecesFile {
    fn from(u: PiecewiseLinearUtility) -> Self {
        PiecesFile { pieces: u.pieces }
    }
}

impl PiecewiseLinearUtility {
    pub fn new(pieces: Vec<Piece>) -> Result<Self> {
        let Some(first) = pieces.first() else {
            return Err(crate::error::input_err("utility needs at least one piece"));
        };
        let n = first.probe.len();
        for (k, p) in pieces.iter().enumerate() {
            if p.probe.len() != n || p.anchor.len() != n {
                return Err(dim_err(format!("piece {k} has inconsistent dimension")));
            }
            if !(p.slope > 0.0) || p.probe.iter().any(|a| *a < 0.0) {
                return Err(crate::error::input_err(format!("piece {k} is not monotone (slope and probe must be positive)")));
            }
        }
        Ok(Self { pieces })
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].probe.len()
    }

    /// Index of the active (minimizing) piece at `x`.
    pub fn active_piece(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (k, p) in self.pieces.iter().enumerate() {
            let v = p.eval(x);
            if v < best.1 {
                best = (k, v);
            }
        }
        best.0
    }
}

impl Utility for PiecewiseLinearUtility {
    fn dim(&self) -> usize {
        PiecewiseLinearUtility::dim(self)
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.pieces.iter().map(|p| p.eval(x)).fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates `U(x)`, checking dimensions.
pub fn eval_utility(u: &PiecewiseLinearUtility, x: &[f64]) -> Result<f64> {
    if x.len() != u.dim() {
        return Err(dim_err(format!("point has dimension {}, utility expects {}", x.len(), u.dim())));
    }
    Ok(u.value(x))
}

/// One utility per agent, anchored at the dataset's responses.
pub fn reconstruct_utilities(cert: &AfriatCertificate, d: &Dataset) -> Result<Vec<PiecewiseLinearUtility>> {
    cert.check_shape(d)?;
    if cert.lambda.iter().flatten().any(|l| !(*l > 0.0)) {
        return Err(crate::error::input_err("certificate multipliers must be > 0"));
    }
    (0..d.n_agents())
        .map(|i| {
            let pieces = (0..d.horizon())
                .map(|t| Piece {
                    level: cert.u[i][t],
                    slope: cert.lambda[i][t],
                    probe: d.probe(t).values().to_vec(),
                    anchor: d.response(t, i).to_vec(),
                })
                .collect();
            PiecewiseLinearUtility::new(pieces)
        })
        .collect()
}

/// Checks a certificate against the dataset at its own slack.
pub fn verify_certificate(cert: &AfriatCertificate, d: &Dataset) -> Result<bool> {
    Ok(cert.max_violation(d)? <= TOL_FEAS)
}
