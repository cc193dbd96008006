//! Probe/response datasets, certificates and the seeding contract.
//!
//! A dataset holds `T` probes `α_t ∈ R^N_{>0}` and a `T × M` grid of agent
//! responses `β_t^i ∈ R^N_{≥0}`. Everything here is an immutable value once
//! constructed; validation happens at the boundary (`Dataset::new` or the raw
//! [`DatasetFile`] form used for JSON).

use std::fmt;
use std::ops::Deref;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, input_err, Result};

/// Absolute tolerance used for every inequality check in the crate.
pub const TOL_FEAS: f64 = 1e-9;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A constraint price vector issued by the sensor. Every component is > 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Probe(Vec<f64>);

impl Probe {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(input_err("probe must have at least one component"));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(input_err(format!("probe component must be > 0 (got {v})")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        dot(&self.0, x)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl TryFrom<Vec<f64>> for Probe {
    type Error = crate::Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Probe::new(v)
    }
}

impl From<Probe> for Vec<f64> {
    fn from(p: Probe) -> Self {
        p.0
    }
}

/// An agent's chosen parameter vector. Every component is ≥ 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Response(Vec<f64>);

impl Response {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(input_err(format!("response component must be >= 0 (got {v})")));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for Response {
    type Error = crate::Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Response::new(v)
    }
}

impl From<Response> for Vec<f64> {
    fn from(r: Response) -> Self {
        r.0
    }
}

/// `responses[t][i]` is agent `i`'s response to probe `t`.
pub type ResponseGrid = Vec<Vec<Response>>;

/// Observed probe/response pairs for `T` rounds and `M` agents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetFile", into = "DatasetFile")]
pub struct Dataset {
    probes: Vec<Probe>,
    responses: ResponseGrid,
}

impl Dataset {
    pub fn new(probes: Vec<Probe>, responses: ResponseGrid) -> Result<Self> {
        if probes.is_empty() {
            return Err(input_err("dataset needs at least one probe"));
        }
        if responses.len() != probes.len() {
            return Err(dim_err(format!(
                "shape mismatch: {} probes but {} response rows",
                probes.len(),
                responses.len()
            )));
        }
        let n = probes[0].dim();
        let m = responses[0].len();
        if m == 0 {
            return Err(input_err("dataset needs at least one agent"));
        }
        for (t, (p, row)) in probes.iter().zip(&responses).enumerate() {
            if p.dim() != n {
                return Err(dim_err(format!("probe {t} has dimension {} (expected {n})", p.dim())));
            }
            if row.len() != m {
                return Err(dim_err(format!(
                    "shape mismatch: response row {t} has {} agents (expected {m})",
                    row.len()
                )));
            }
            if let Some((i, r)) = row.iter().enumerate().find(|(_, r)| r.dim() != n) {
                return Err(dim_err(format!(
                    "response ({t},{i}) has dimension {} (expected {n})",
                    r.dim()
                )));
            }
        }
        Ok(Self { probes, responses })
    }

    pub fn horizon(&self) -> usize {
        self.probes.len()
    }

    pub fn n_agents(&self) -> usize {
        self.responses[0].len()
    }

    pub fn n_dims(&self) -> usize {
        self.probes[0].dim()
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn probe(&self, t: usize) -> &Probe {
        &self.probes[t]
    }

    pub fn responses(&self) -> &ResponseGrid {
        &self.responses
    }

    pub fn response(&self, t: usize, agent: usize) -> &[f64] {
        self.responses[t][agent].values()
    }

    /// Same probes, different responses (shape-checked).
    pub fn with_responses(&self, responses: ResponseGrid) -> Result<Self> {
        Self::new(self.probes.clone(), responses)
    }

    /// Restriction to a single agent, keeping every probe.
    pub fn single_agent(&self, agent: usize) -> Self {
        let responses = self.responses.iter().map(|row| vec![row[agent].clone()]).collect();
        Self { probes: self.probes.clone(), responses }
    }

    /// Row-major `T × T` matrix with entry `(t, s) = α_tᵀ(β_s − β_t)` for one agent.
    pub fn expenditure_gaps(&self, agent: usize) -> GapMatrix {
        expenditure_gaps(&self.probes, |t| self.response(t, agent))
    }
}

pub(crate) fn expenditure_gaps<'a>(
    probes: &[Probe],
    response: impl Fn(usize) -> &'a [f64],
) -> GapMatrix {
    let t_len = probes.len();
    let mut data = vec![0.0; t_len * t_len];
    for t in 0..t_len {
        let own = probes[t].dot(response(t));
        for s in 0..t_len {
            if s != t {
                data[t * t_len + s] = probes[t].dot(response(s)) - own;
            }
        }
    }
    GapMatrix { size: t_len, data }
}

/// Square matrix of expenditure gaps `α_tᵀ(β_s − β_t)`, indexed `(t, s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GapMatrix {
    size: usize,
    data: Vec<f64>,
}

impl GapMatrix {
    pub fn from_fn(size: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; size * size];
        for t in 0..size {
            for s in 0..size {
                data[t * size + s] = f(t, s);
            }
        }
        Self { size, data }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, t: usize, s: usize) -> f64 {
        self.data[t * self.size + s]
    }

    /// Largest `|gap|` over off-diagonal entries.
    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for t in 0..self.size {
            for s in 0..self.size {
                if s != t {
                    m = m.max(self.get(t, s).abs());
                }
            }
        }
        m
    }
}

/// A dataset whose responses were observed in noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoisyDataset(Dataset);

impl NoisyDataset {
    pub fn new(data: Dataset) -> Self {
        Self(data)
    }

    pub fn as_dataset(&self) -> &Dataset {
        &self.0
    }

    pub fn into_inner(self) -> Dataset {
        self.0
    }
}

impl Deref for NoisyDataset {
    type Target = Dataset;
    fn deref(&self) -> &Dataset {
        &self.0
    }
}

/// Raw on-disk dataset layout. May be malformed; see [`validate_dataset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub n_dims: usize,
    pub n_agents: usize,
    pub horizon: usize,
    pub probes: Vec<Vec<f64>>,
    pub responses: Vec<Vec<Vec<f64>>>,
}

impl From<Dataset> for DatasetFile {
    fn from(d: Dataset) -> Self {
        Self {
            n_dims: d.n_dims(),
            n_agents: d.n_agents(),
            horizon: d.horizon(),
            probes: d.probes.into_iter().map(Vec::from).collect(),
            responses: d
                .responses
                .into_iter()
                .map(|row| row.into_iter().map(Vec::from).collect())
                .collect(),
        }
    }
}

impl TryFrom<DatasetFile> for Dataset {
    type Error = crate::Error;

    fn try_from(raw: DatasetFile) -> Result<Self> {
        let report = validate_dataset(&raw);
        if !report.is_ok() {
            return Err(input_err(report.to_string()));
        }
        let probes = raw.probes.into_iter().map(Probe::new).collect::<Result<Vec<_>>>()?;
        let responses = raw
            .responses
            .into_iter()
            .map(|row| row.into_iter().map(Response::new).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(probes, responses)
    }
}

/// One problem found by [`validate_dataset`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { location: location.into(), message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{}: {}", v.location, v.message)?;
        }
        Ok(())
    }
}

/// Checks shapes and sign constraints of a raw dataset and reports every problem found.
pub fn validate_dataset(raw: &DatasetFile) -> ValidationReport {
    validate_dataset_with(raw, 0.0)
}

/// Like [`validate_dataset`], additionally requiring `‖α_t‖ ≥ min_probe_norm`.
pub fn validate_dataset_with(raw: &DatasetFile, min_probe_norm: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let (n, m, t_len) = (raw.n_dims, raw.n_agents, raw.horizon);
    if t_len == 0 {
        report.push("horizon", "horizon must be >= 1");
    }
    if m == 0 {
        report.push("n_agents", "n_agents must be >= 1");
    }
    if n == 0 {
        report.push("n_dims", "n_dims must be >= 1");
    }
    if raw.probes.len() != t_len {
        report.push(
            "probes",
            format!("shape mismatch: {} probes, horizon {t_len}", raw.probes.len()),
        );
    }
    if raw.responses.len() != t_len {
        report.push(
            "responses",
            format!("shape mismatch: {} response rows, horizon {t_len}", raw.responses.len()),
        );
    }
    for (t, p) in raw.probes.iter().enumerate() {
        if p.len() != n {
            report.push(format!("probes[{t}]"), format!("shape mismatch: dimension {}, expected {n}", p.len()));
        }
        for (k, v) in p.iter().enumerate() {
            if !(v.is_finite() && *v > 0.0) {
                report.push(format!("probes[{t}][{k}]"), "probe component must be > 0");
            }
        }
        if min_probe_norm > 0.0 && norm(p) < min_probe_norm {
            report.push(format!("probes[{t}]"), format!("probe norm below {min_probe_norm}"));
        }
    }
    for (t, row) in raw.responses.iter().enumerate() {
        if row.len() != m {
            report.push(format!("responses[{t}]"), format!("shape mismatch: {} agents, expected {m}", row.len()));
        }
        for (i, r) in row.iter().enumerate() {
            if r.len() != n {
                report.push(format!("responses[{t}][{i}]"), format!("shape mismatch: dimension {}, expected {n}", r.len()));
            }
            for (k, v) in r.iter().enumerate() {
                if !(v.is_finite() && *v >= 0.0) {
                    report.push(format!("responses[{t}][{i}][{k}]"), "response component must be >= 0");
                }
            }
        }
    }
    report
}

/// Whether a certificate solves the exact or the relaxed inequality system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "slack")]
pub enum CertificateKind {
    Exact,
    Relaxed(f64),
}

impl CertificateKind {
    pub fn slack(self) -> f64 {
        match self {
            CertificateKind::Exact => 0.0,
            CertificateKind::Relaxed(r) => r,
        }
    }
}

/// Utility levels `u` and multipliers `λ > 0`, stored agent-major: `u[i][t]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AfriatCertificate {
    pub u: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    #[serde(default = "exact_kind")]
    pub kind: CertificateKind,
}

fn exact_kind() -> CertificateKind {
    CertificateKind::Exact
}

impl AfriatCertificate {
    pub fn n_agents(&self) -> usize {
        self.u.len()
    }

    pub fn check_shape(&self, d: &Dataset) -> Result<()> {
        let (m, t_len) = (d.n_agents(), d.horizon());
        let ok = self.u.len() == m
            && self.lambda.len() == m
            && self.u.iter().all(|r| r.len() == t_len)
            && self.lambda.iter().all(|r| r.len() == t_len);
        if ok {
            Ok(())
        } else {
            Err(dim_err(format!("certificate shape does not match dataset (M={m}, T={t_len})")))
        }
    }

    /// Largest value of `u_s − u_t − λ_t(α_tᵀ(β_s − β_t) + r)` over all `(s, t, i)`,
    /// where `r` is the certificate slack. Non-positive means the certificate holds.
    pub fn max_violation(&self, d: &Dataset) -> Result<f64> {
        self.check_shape(d)?;
        let r = self.kind.slack();
        let mut worst = f64::NEG_INFINITY;
        for i in 0..d.n_agents() {
            let gaps = d.expenditure_gaps(i);
            let (u, lam) = (&self.u[i], &self.lambda[i]);
            for t in 0..d.horizon() {
                for s in 0..d.horizon() {
                    worst = worst.max(u[s] - u[t] - lam[t] * (gaps.get(t, s) + r));
                }
            }
        }
        Ok(worst)
    }

    /// `(c·u, c·λ)` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        let scale = |g: &Vec<Vec<f64>>| g.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
        Self { u: scale(&self.u), lambda: scale(&self.lambda), kind: self.kind }
    }
}

/// Independent random streams used within one seeded run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Probes = 1,
    Responses = 2,
    Noise = 3,
    Psi = 4,
    Aux = 5,
}

/// Master seed for every stochastic operation. Trial `k` uses `master + k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn trial(self, index: u64) -> Self {
        RngSeed(self.0.wrapping_add(index))
    }

    pub fn rng(self, stream: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(stream as u64);
        rng
    }
}

impl From<u64> for RngSeed {
    fn from(v: u64) -> Self {
        RngSeed(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(probes: Vec<Vec<f64>>, responses: Vec<Vec<Vec<f64>>>) -> DatasetFile {
        DatasetFile {
            n_dims: probes.first().map_or(0, |p| p.len()),
            n_agents: responses.first().map_or(0, |r| r.len()),
            horizon: probes.len(),
            probes,
            responses,
        }
    }

    #[test]
    fn minimal_dataset_is_ok() {
        let r = raw(vec![vec![1.0], vec![1.0]], vec![vec![vec![0.4]], vec![vec![0.6]]]);
        assert!(validate_dataset(&r).is_ok());
        let d = Dataset::try_from(r).unwrap();
        assert_eq!((d.horizon(), d.n_agents(), d.n_dims()), (2, 1, 1));
    }

    #[test]
    fn zero_probe_component_is_reported() {
        let r = raw(vec![vec![0.0], vec![1.0]], vec![vec![vec![0.4]], vec![vec![0.6]]]);
        let rep = validate_dataset(&r);
        assert!(rep.violations.iter().any(|v| v.message == "probe component must be > 0"));
        assert!(Dataset::try_from(r).is_err());
    }

    #[test]
    fn short_response_row_is_shape_mismatch() {
        let mut r = raw(
            vec![vec![1.0], vec![1.0]],
            vec![vec![vec![0.4], vec![0.1]], vec![vec![0.6], vec![0.1]]],
        );
        r.responses[1].pop();
        let rep = validate_dataset(&r);
        assert!(rep.violations.iter().any(|v| v.message.contains("shape mismatch")));
    }

    #[test]
    fn negative_response_and_probe_norm() {
        let r = raw(vec![vec![0.1, 0.1]], vec![vec![vec![-0.5, 0.0]]]);
        let rep = validate_dataset_with(&r, 1.0);
        assert_eq!(rep.violations.len(), 2, "{rep}");
    }

    #[test]
    fn zero_responses_are_accepted() {
        assert!(Response::new(vec![0.0, 0.0]).is_ok());
        assert!(Response::new(vec![-1e-12]).is_err());
    }

    #[test]
    fn gaps_match_definition() {
        let d = Dataset::new(
            vec![Probe::new(vec![1.0, 2.0]).unwrap(), Probe::new(vec![2.0, 1.0]).unwrap()],
            vec![
                vec![Response::new(vec![0.0, 0.5]).unwrap()],
                vec![Response::new(vec![0.5, 0.0]).unwrap()],
            ],
        )
        .unwrap();
        let g = d.expenditure_gaps(0);
        assert_eq!(g.get(0, 1), 0.5 - 1.0);
        assert_eq!(g.get(1, 0), 0.5 - 1.0);
        assert_eq!(g.get(0, 0), 0.0);
    }

    #[test]
    fn seeds_are_reproducible_and_streams_differ() {
        use rand::Rng;
        let a: u64 = RngSeed(7).rng(Stream::Noise).random();
        let b: u64 = RngSeed(7).rng(Stream::Noise).random();
        let c: u64 = RngSeed(7).rng(Stream::Psi).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(RngSeed(u64::MAX).trial(1), RngSeed(0));
    }
}
