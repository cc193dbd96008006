//! Synthetic scenarios: coordinating agents solving a weighted-sum problem under
//! random probes, independent uniform responses as a baseline, and additive noise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NoisyDataset, Probe, Response, RngSeed, Stream};
use crate::detector::NoiseModel;
use crate::error::{input_err, Error, Result};
use crate::frontier::{solve_weighted_sum_smooth, FwOptions, WeightVector};
use crate::utility::SmoothObjective;

/// Lower floor applied to noisy response components.
pub const NOISE_FLOOR: f64 = 0.01;

/// Probe redraws allowed per time step before giving up.
const MAX_REDRAWS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_agents: usize,
    pub horizon: usize,
    pub n_dims: usize,
    pub utilities: Vec<SmoothObjective>,
    pub mu: Vec<f64>,
    #[serde(default = "default_probe_range")]
    pub probe_range: (f64, f64),
    #[serde(default)]
    pub sigma2: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: FwOptions,
}

fn default_probe_range() -> (f64, f64) {
    (0.1, 1.1)
}

impl ScenarioConfig {
    /// Three agents with the product, sum and root-product objectives, equal weights, `N = 2`.
    pub fn reference(horizon: usize, seed: u64) -> Self {
        Self {
            n_agents: 3,
            horizon,
            n_dims: 2,
            utilities: SmoothObjective::reference_trio(),
            mu: vec![1.0 / 3.0; 3],
            probe_range: default_probe_range(),
            sigma2: 0.0,
            seed,
            solver: FwOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 || self.horizon == 0 || self.n_dims == 0 {
            return Err(input_err("n_agents, horizon and n_dims must be >= 1"));
        }
        if self.utilities.len() != self.n_agents {
            return Err(input_err(format!("{} utilities for {} agents", self.utilities.len(), self.n_agents)));
        }
        if self.mu.len() != self.n_agents {
            return Err(input_err(format!("{} weights for {} agents", self.mu.len(), self.n_agents)));
        }
        WeightVector::new(self.mu.clone())?;
        for u in &self.utilities {
            u.check(self.n_dims)?;
        }
        let (lo, hi) = self.probe_range;
        if !(lo > 0.0 && hi > lo) {
            return Err(input_err("probe range must satisfy 0 < lo < hi"));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(input_err("sigma2 must be >= 0"));
        }
        Ok(())
    }

    fn draw_probe<R: Rng>(&self, rng: &mut R) -> Probe {
        let (lo, hi) = self.probe_range;
        Probe::new((0..self.n_dims).map(|_| rng.random_range(lo..hi)).collect()).expect("positive range")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub dataset: Dataset,
    /// Probes discarded because the forward solver did not certify its gap.
    pub redrawn_probes: usize,
}

/// Responses of agents jointly maximizing `Σ μ_i f_i` under each random probe.
pub fn gen_coordinating(cfg: &ScenarioConfig) -> Result<Generated> {
    cfg.validate()?;
    let mu = WeightVector::new(cfg.mu.clone())?;
    let mut rng = RngSeed(cfg.seed).rng(Stream::Probes);
    let mut probes = Vec::with_capacity(cfg.horizon);
    let mut responses = Vec::with_capacity(cfg.horizon);
    let mut redrawn = 0;
    for t in 0..cfg.horizon {
        let mut attempts = 0;
        loop {
            let probe = cfg.draw_probe(&mut rng);
            let r = solve_weighted_sum_smooth(&cfg.utilities, &mu, &probe, &cfg.solver)?;
            if r.converged {
                let row = r.allocation.into_iter().map(|b| Response::new(b.into_iter().map(|x| x.max(0.0)).collect()));
                responses.push(row.collect::<Result<Vec<_>>>()?);
                probes.push(probe);
                break;
            }
            redrawn += 1;
            attempts += 1;
            if attempts >= MAX_REDRAWS {
                return Err(Error::Solver(format!(
                    "time step {t}: forward solver left gap {:.3e} after {MAX_REDRAWS} probe draws",
                    r.gap
                )));
            }
        }
    }
    Ok(Generated { dataset: Dataset::new(probes, responses)?, redrawn_probes: redrawn })
}

/// Random probes with responses drawn i.i.d. uniform on `[0, 1]^N`, ignoring the budget.
pub fn gen_noncoordinating(cfg: &ScenarioConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut probe_rng = RngSeed(cfg.seed).rng(Stream::Probes);
    let mut resp_rng = RngSeed(cfg.seed).rng(Stream::Responses);
    let probes: Vec<Probe> = (0..cfg.horizon).map(|_| cfg.draw_probe(&mut probe_rng)).collect();
    let responses = (0..cfg.horizon)
        .map(|_| {
            (0..cfg.n_agents)
                .map(|_| Response::new((0..cfg.n_dims).map(|_| resp_rng.random::<f64>()).collect()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(probes, responses)
}

/// `max(β + ε, 0.01)` componentwise with `ε ~ N(0, σ²I)`.
pub fn add_noise(d: &Dataset, sigma2: f64, seed: RngSeed) -> Result<NoisyDataset> {
    add_noise_with(d, &NoiseModel::gaussian(sigma2)?, seed)
}

pub fn add_noise_with(d: &Dataset, noise: &NoiseModel, seed: RngSeed) -> Result<NoisyDataset> {
    let mut rng = seed.rng(Stream::Noise);
    let mut eps = vec![0.0; d.n_dims()];
    let responses = (0..d.horizon())
        .map(|t| {
            (0..d.n_agents())
                .map(|i| {
                    noise.fill(&mut rng, &mut eps);
                    let v = d.response(t, i).iter().zip(&eps).map(|(b, e)| (b + e).max(NOISE_FLOOR)).collect();
                    Response::new(v)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NoisyDataset::new(d.with_responses(responses)?))
}
