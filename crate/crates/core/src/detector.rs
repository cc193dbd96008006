//! Hypothesis test for coordination under measurement noise.
//!
//! The statistic is the raw (unclamped) proximity of the noisy data. It is compared
//! with the simulated distribution of `Ψ = max_i max_{t≠s} α_tᵀ(ε_t^i − ε_s^i)`,
//! which dominates the statistic whenever the noise-free data are rationalizable.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::afriat::{proximity, reconstruct_utilities, PiecewiseLinearUtility};
use crate::data::{dot, AfriatCertificate, NoisyDataset, Probe, RngSeed, Stream};
use crate::error::{input_err, Result};

/// Zero-mean noise on each response component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Independent `N(0, σ²)` per component.
    Gaussian { sigma2: f64 },
}

impl NoiseModel {
    pub fn gaussian(sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(input_err(format!("noise variance must be >= 0, got {sigma2}")));
        }
        Ok(NoiseModel::Gaussian { sigma2 })
    }

    /// Fills `out` with one draw per component.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match *self {
            NoiseModel::Gaussian { sigma2 } => {
                let normal = Normal::new(0.0, sigma2.sqrt()).expect("validated variance");
                out.iter_mut().for_each(|e| *e = normal.sample(rng));
            }
        }
    }
}

/// `max_{t≠s} α_tᵀ(ε_t − ε_s)` for one agent's noise sequence.
pub fn psi_agent(probes: &[Probe], eps: &[Vec<f64>]) -> f64 {
    let own: Vec<f64> = probes.iter().zip(eps).map(|(a, e)| a.dot(e)).collect();
    let mut best = f64::NEG_INFINITY;
    for (t, a) in probes.iter().enumerate() {
        for (s, e) in eps.iter().enumerate() {
            if s != t {
                best = best.max(own[t] - dot(a.values(), e));
            }
        }
    }
    best
}

/// Per-agent `Ψ^i` for a realized noise grid `eps[t][i]`.
pub fn psi_per_agent(probes: &[Probe], eps: &[Vec<Vec<f64>>]) -> Vec<f64> {
    let m = eps.first().map_or(0, Vec::len);
    (0..m)
        .map(|i| {
            let seq: Vec<Vec<f64>> = eps.iter().map(|row| row[i].clone()).collect();
            psi_agent(probes, &seq)
        })
        .collect()
}

/// Simulated draws of `Ψ`, kept sorted for tail queries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiSample {
    sorted: Vec<f64>,
}

impl PsiSample {
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(input_err("need at least one simulated value"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(input_err("simulated values must not be NaN"));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// `#{Ψ > x} / L`.
    pub fn tail(&self, x: f64) -> f64 {
        let at_most = self.sorted.partition_point(|v| *v <= x);
        (self.sorted.len() - at_most) as f64 / self.sorted.len() as f64
    }
}

/// Draws `L` values of `Ψ` for `M` agents under the given probes.
pub fn sample_psi(probes: &[Probe], noise: &NoiseModel, l: usize, m: usize, seed: RngSeed) -> Result<PsiSample> {
    if probes.len() < 2 {
        return Err(input_err("need at least two probes to simulate the noise statistic"));
    }
    if l == 0 || m == 0 {
        return Err(input_err("sample size and agent count must be >= 1"));
    }
    let n = probes[0].dim();
    let mut rng = seed.rng(Stream::Psi);
    let mut eps = vec![vec![0.0; n]; probes.len()];
    let values = (0..l)
        .map(|_| {
            (0..m)
                .map(|_| {
                    eps.iter_mut().for_each(|e| noise.fill(&mut rng, e));
                    psi_agent(probes, &eps)
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    PsiSample::from_values(values)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Statistic {
    pub phi_star: f64,
    pub per_agent: Vec<f64>,
    pub certificate: AfriatCertificate,
}

/// Raw per-agent proximities of the noisy data and their maximum.
pub fn compute_statistic(nd: &NoisyDataset) -> Result<Statistic> {
    let p = proximity(nd, false)?;
    Ok(Statistic { phi_star: p.phi, per_agent: p.per_agent_phi, certificate: p.certificate })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    /// Consistent with coordination.
    H0,
    /// Coordination rejected.
    H1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorResult {
    pub statistic: f64,
    pub tail: f64,
    pub gamma: f64,
    pub decision: Decision,
    #[serde(skip)]
    pub certificate: Option<AfriatCertificate>,
}

/// Compares the statistic with the simulated tail: `H0` iff `tail > γ`.
pub fn decide(phi_star: f64, psi: &PsiSample, gamma: f64) -> Result<DetectorResult> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(input_err(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let tail = psi.tail(phi_star);
    let decision = if tail > gamma { Decision::H0 } else { Decision::H1 };
    Ok(DetectorResult { statistic: phi_star, tail, gamma, decision, certificate: None })
}

#[derive(Clone, Debug)]
pub struct DetectorOutcome {
    pub result: DetectorResult,
    /// Utilities built from the relaxed certificate; present only under `H0`.
    pub utilities: Option<Vec<PiecewiseLinearUtility>>,
}

/// Simulate `Ψ`, compute the statistic, decide, and reconstruct utilities on `H0`.
pub fn run_detector(nd: &NoisyDataset, noise: &NoiseModel, l: usize, gamma: f64, seed: RngSeed) -> Result<DetectorOutcome> {
    let psi = sample_psi(nd.probes(), noise, l, nd.n_agents(), seed)?;
    let stat = compute_statistic(nd)?;
    let mut result = decide(stat.phi_star, &psi, gamma)?;
    let utilities = match result.decision {
        Decision::H0 => Some(reconstruct_utilities(&stat.certificate, nd)?),
        Decision::H1 => None,
    };
    result.certificate = Some(stat.certificate);
    Ok(DetectorOutcome { result, utilities })
}
