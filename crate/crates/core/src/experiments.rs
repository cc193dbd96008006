//! Monte-Carlo studies: detector tail versus noise, robust versus naive frontier
//! error, and exchange-method convergence. Every run is a pure function of its
//! config and seed; trial `k` uses seed `master + k`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::afriat::{proximity, reconstruct_utilities, PiecewiseLinearUtility};
use crate::data::{Probe, RngSeed};
use crate::detector::{compute_statistic, sample_psi, NoiseModel};
use crate::dro::{robust_utilities, run_exchange, DroConfig};
use crate::error::{input_err, Result};
use crate::frontier::{hausdorff, trace_frontier, trace_frontier_smooth, FwOptions};
use crate::simgen::{add_noise, gen_coordinating, gen_noncoordinating, ScenarioConfig};

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Coordinating,
    NonCoordinating,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Coordinating => "coordinating",
            Regime::NonCoordinating => "non_coordinating",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig4Config {
    pub sigma_grid: Vec<f64>,
    pub trials: usize,
    /// Simulated `Ψ` draws per trial.
    pub mc_samples: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for Fig4Config {
    fn default() -> Self {
        Self { sigma_grid: vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1], trials: 300, mc_samples: 500, horizon: 10, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig4Row {
    pub sigma2: f64,
    pub regime: Regime,
    pub mean_tail: f64,
    pub std_tail: f64,
}

/// Detector tail `1 − F̂_Ψ(Φ*)` for one noisy trial.
pub fn detector_tail(regime: Regime, horizon: usize, sigma2: f64, mc_samples: usize, seed: RngSeed) -> Result<f64> {
    let cfg = ScenarioConfig::reference(horizon, seed.0);
    let clean = match regime {
        Regime::Coordinating => gen_coordinating(&cfg)?.dataset,
        Regime::NonCoordinating => gen_noncoordinating(&cfg)?,
    };
    let noisy = add_noise(&clean, sigma2, seed)?;
    let psi = sample_psi(noisy.probes(), &NoiseModel::gaussian(sigma2)?, mc_samples, noisy.n_agents(), seed)?;
    Ok(psi.tail(compute_statistic(&noisy)?.phi_star))
}

pub fn run_fig4(cfg: &Fig4Config) -> Result<Vec<Fig4Row>> {
    if cfg.trials == 0 || cfg.sigma_grid.is_empty() {
        return Err(input_err("need at least one trial and one noise level"));
    }
    let master = RngSeed(cfg.seed);
    let mut rows = Vec::new();
    for (si, &sigma2) in cfg.sigma_grid.iter().enumerate() {
        for regime in [Regime::Coordinating, Regime::NonCoordinating] {
            let tails = (0..cfg.trials)
                .into_par_iter()
                .map(|k| detector_tail(regime, cfg.horizon, sigma2, cfg.mc_samples, master.trial((si * cfg.trials + k) as u64)))
                .collect::<Result<Vec<_>>>()?;
            let (mean_tail, std_tail) = mean_std(&tails);
            rows.push(Fig4Row { sigma2, regime, mean_tail, std_tail });
        }
    }
    Ok(rows)
}

pub fn write_fig4_csv<W: Write>(rows: &[Fig4Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sigma2", "regime", "mean_tail", "std_tail"])?;
    for r in rows {
        w.write_record([r.sigma2.to_string(), r.regime.label().to_string(), r.mean_tail.to_string(), r.std_tail.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table1Config {
    pub sigma_grid: Vec<f64>,
    pub trials: usize,
    /// Trials per worst-case block.
    pub block: usize,
    pub horizon: usize,
    pub dro: DroConfig,
    /// Evaluation probe shared by the true and reconstructed frontiers.
    pub probe: Vec<f64>,
    /// Weight grid density (step `1/density`).
    pub mu_density: usize,
    pub seed: u64,
}

impl Default for Table1Config {
    fn default() -> Self {
        Self {
            sigma_grid: vec![0.5, 1.0, 2.0, 3.0],
            trials: 100,
            block: 10,
            horizon: 5,
            dro: DroConfig::new(0.2, 0.1),
            probe: vec![0.5, 0.5],
            mu_density: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub regime: String,
    pub sigma2: f64,
    pub avg_mean: f64,
    pub avg_std: f64,
    pub worst_mean: f64,
    pub worst_std: f64,
    pub trials_used: usize,
    /// Trials dropped because the exchange method hit its iteration cap.
    pub excluded: usize,
}

/// Frontier errors `(naive, robust)` for one trial; `robust` is `None` when the exchange did not converge.
pub fn frontier_errors(cfg: &Table1Config, truth: &[Vec<f64>], sigma2: f64, seed: RngSeed) -> Result<(f64, Option<f64>)> {
    let probe = Probe::new(cfg.probe.clone())?;
    let clean = gen_coordinating(&ScenarioConfig::reference(cfg.horizon, seed.0))?.dataset;
    let noisy = add_noise(&clean, sigma2, seed)?;
    let err = |utils: &[PiecewiseLinearUtility]| -> Result<f64> {
        hausdorff(truth, &trace_frontier(utils, &probe, cfg.mu_density)?.allocation_set())
    };
    let naive = reconstruct_utilities(&proximity(&noisy, true)?.certificate, &noisy)?;
    let sol = run_exchange(&noisy, &cfg.dro)?;
    let robust = if sol.converged { Some(err(&robust_utilities(&sol, &noisy)?)?) } else { None };
    Ok((err(&naive)?, robust))
}

/// True frontier allocations of the reference objectives at the evaluation probe.
pub fn true_frontier(cfg: &Table1Config) -> Result<Vec<Vec<f64>>> {
    let probe = Probe::new(cfg.probe.clone())?;
    let objs = ScenarioConfig::reference(1, 0).utilities;
    Ok(trace_frontier_smooth(&objs, &probe, cfg.mu_density, &FwOptions::default())?.allocation_set())
}

fn aggregate(regime: &str, sigma2: f64, errors: &[f64], block: usize, excluded: usize) -> Table1Row {
    let (avg_mean, avg_std) = mean_std(errors);
    let worst: Vec<f64> = errors.chunks(block.max(1)).map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    let (worst_mean, worst_std) = mean_std(&worst);
    Table1Row { regime: regime.into(), sigma2, avg_mean, avg_std, worst_mean, worst_std, trials_used: errors.len(), excluded }
}

pub fn run_table1(cfg: &Table1Config) -> Result<Vec<Table1Row>> {
    if cfg.trials == 0 || cfg.block == 0 {
        return Err(input_err("trials and block must be >= 1"));
    }
    cfg.dro.validate()?;
    let truth = true_frontier(cfg)?;
    let master = RngSeed(cfg.seed);
    let mut rows = Vec::new();
    for (si, &sigma2) in cfg.sigma_grid.iter().enumerate() {
        let results = (0..cfg.trials)
            .into_par_iter()
            .map(|k| frontier_errors(cfg, &truth, sigma2, master.trial((si * cfg.trials + k) as u64)))
            .collect::<Result<Vec<_>>>()?;
        // Non-converged trials are dropped from both regimes so the comparison stays paired.
        let kept: Vec<(f64, f64)> = results.iter().filter_map(|(n, r)| r.map(|r| (*n, r))).collect();
        let excluded = results.len() - kept.len();
        let naive: Vec<f64> = kept.iter().map(|p| p.0).collect();
        let robust: Vec<f64> = kept.iter().map(|p| p.1).collect();
        rows.push(aggregate("naive", sigma2, &naive, cfg.block, excluded));
        rows.push(aggregate("robust", sigma2, &robust, cfg.block, excluded));
    }
    Ok(rows)
}

pub fn write_table1_csv<W: Write>(rows: &[Table1Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig5Config {
    pub epsilon_grid: Vec<f64>,
    pub trials: usize,
    pub sigma2: f64,
    pub horizon: usize,
    pub dro: DroConfig,
    pub seed: u64,
}

impl Default for Fig5Config {
    fn default() -> Self {
        Self { epsilon_grid: vec![0.1, 0.2, 0.4], trials: 100, sigma2: 1.0, horizon: 5, dro: DroConfig::new(0.2, 0.1), seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig5Row {
    pub epsilon: f64,
    pub iter: usize,
    pub mean_cv: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig5Summary {
    pub epsilon: f64,
    /// Mean number of oracle calls until `CV < δ` over converged trials.
    pub mean_iterations: f64,
    pub converged: usize,
    pub trials: usize,
    /// Converged trials whose last recorded CV is below `δ`.
    pub final_below_delta: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig5Result {
    pub rows: Vec<Fig5Row>,
    pub summaries: Vec<Fig5Summary>,
}

pub fn run_fig5(cfg: &Fig5Config) -> Result<Fig5Result> {
    if cfg.trials == 0 || cfg.epsilon_grid.is_empty() {
        return Err(input_err("need at least one trial and one radius"));
    }
    let master = RngSeed(cfg.seed);
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (ei, &epsilon) in cfg.epsilon_grid.iter().enumerate() {
        let dro = DroConfig { epsilon, ..cfg.dro.clone() };
        dro.validate()?;
        let sols = (0..cfg.trials)
            .into_par_iter()
            .map(|k| {
                let seed = master.trial((ei * cfg.trials + k) as u64);
                let clean = gen_coordinating(&ScenarioConfig::reference(cfg.horizon, seed.0))?.dataset;
                run_exchange(&add_noise(&clean, cfg.sigma2, seed)?, &dro)
            })
            .collect::<Result<Vec<_>>>()?;
        let len = sols.iter().map(|s| s.cv_trace.len()).max().unwrap_or(0);
        for it in 0..len {
            // Shorter traces are padded with their final value.
            let cv: Vec<f64> = sols.iter().map(|s| s.cv_trace[it.min(s.cv_trace.len() - 1)]).collect();
            rows.push(Fig5Row { epsilon, iter: it + 1, mean_cv: mean_std(&cv).0 });
        }
        let conv: Vec<_> = sols.iter().filter(|s| s.converged).collect();
        let iters: Vec<f64> = conv.iter().map(|s| s.cv_trace.len() as f64).collect();
        summaries.push(Fig5Summary {
            epsilon,
            mean_iterations: mean_std(&iters).0,
            converged: conv.len(),
            trials: sols.len(),
            final_below_delta: conv.iter().filter(|s| s.cv_trace.last().is_some_and(|c| *c < dro.delta)).count(),
        });
    }
    Ok(Fig5Result { rows, summaries })
}

pub fn write_fig5_csv<W: Write>(rows: &[Fig5Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epsilon", "iter", "mean_cv"])?;
    for r in rows {
        w.write_record([r.epsilon.to_string(), r.iter.to_string(), r.mean_cv.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Full configuration and seed of one experiment run.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub experiment: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub config: &'a C,
}

pub fn write_manifest<C: Serialize>(dir: &Path, experiment: &str, seed: u64, config: &C) -> Result<()> {
    fs::create_dir_all(dir)?;
    let m = Manifest { experiment, version: env!("CARGO_PKG_VERSION"), seed, config };
    let f = fs::File::create(dir.join(format!("{experiment}_manifest.json")))?;
    serde_json::to_writer_pretty(f, &m)?;
    Ok(())
}
