use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use pareto_witness::afriat::verify_certificate;
use pareto_witness::detector::{run_detector, NoiseModel};
use pareto_witness::dro::{robust_utilities, run_exchange, DroConfig};
use pareto_witness::experiments::{
    run_fig4, run_fig5, run_table1, write_fig4_csv, write_fig5_csv, write_manifest, write_table1_csv, Fig4Config, Fig5Config,
    Table1Config,
};
use pareto_witness::frontier::{Allocation, WeightVector};
use pareto_witness::io::{load_dataset, save_dataset};
use pareto_witness::predictor::{estimate_weights, predict, Target};
use pareto_witness::simgen::{add_noise, gen_coordinating, ScenarioConfig};
use pareto_witness::uavsim::{check_precision_monotonicity, random_ordered_pairs, waveform_covariance, LinearGaussianModel, ModelFile, WaveformParams};
use pareto_witness::{
    proximity, reconstruct_utilities, test_feasibility, NoisyDataset, PiecewiseLinearUtility, Probe, Rationalizability, RngSeed,
};

#[derive(Parser)]
#[command(name = "pareto-witness", version, about = "Revealed-preference tests for coordinated multi-agent systems")]
struct Cli {
    /// Worker thread cap for parallel sections.
    #[arg(long, global = true, env = "PARETO_WITNESS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact rationalizability test, optionally with the proximity measure.
    TestEfficiency {
        #[arg(long)]
        input: PathBuf,
        /// Also report the minimal relaxation slack when the data is rationalizable.
        #[arg(long)]
        proximity: bool,
    },
    /// Coordination detector on noisy data.
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        sigma2: f64,
        #[arg(long, default_value_t = 0.95)]
        gamma: f64,
        #[arg(long, default_value_t = 1000)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Reconstruct per-agent utilities, classically or robustly.
    Reconstruct {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        robust: bool,
        #[arg(long, default_value_t = 0.2)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        support_radius: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict allocations for a probe from reconstructed utilities.
    Predict {
        #[arg(long)]
        utils: PathBuf,
        /// Probe as a JSON array or a one-row CSV.
        #[arg(long)]
        probe: PathBuf,
        #[arg(long, value_delimiter = ',', conflicts_with = "frontier")]
        mu: Option<Vec<f64>>,
        /// Weight grid density for the full frontier.
        #[arg(long)]
        frontier: Option<usize>,
        /// Observed allocation (JSON, one vector per agent) to recover weights from.
        #[arg(long, conflicts_with_all = ["mu", "frontier"])]
        observed: Option<PathBuf>,
    },
    /// Generate a synthetic coordinating dataset.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Gaussian response noise variance.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Monte-Carlo experiments; writes CSV plus a manifest into `--out`.
    Experiment {
        #[arg(value_enum)]
        which: Experiment,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the number of trials.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Precision monotonicity of the steady-state filter for a linear Gaussian model.
    UavCheck {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.2, 5.0])]
        range: Vec<f64>,
        /// Waveform parameters whose measurement covariance is also reported.
        #[arg(long)]
        waveform: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Fig4,
    Table1,
    Fig5,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).with_context(|| format!("parsing {what} {}", path.display()))
}

fn emit<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn read_probe(path: &Path) -> Result<Probe> {
    let values: Vec<f64> = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).with_context(|| format!("reading probe {}", path.display()))?;
        let mut found = None;
        for rec in r.records() {
            let rec = rec?;
            // Skip a header row if present.
            if let Ok(v) = rec.iter().map(|s| s.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>() {
                found = Some(v);
                break;
            }
        }
        found.with_context(|| format!("probe {} has no numeric row", path.display()))?
    } else {
        read_json(path, "probe")?
    };
    Ok(Probe::new(values)?)
}

fn test_efficiency(input: &Path, want_phi: bool) -> Result<()> {
    let d = load_dataset(input).with_context(|| format!("loading dataset {}", input.display()))?;
    let rational = test_feasibility(&d)?.is_rationalizable();
    let prox = if want_phi || !rational { Some(proximity(&d, true)?) } else { None };
    let verdict = if rational { "rationalizable" } else { "not rationalizable" };
    match &prox {
        Some(p) => eprintln!("{verdict}, phi = {}", p.phi),
        None => eprintln!("{verdict}"),
    }
    emit(&json!({
        "rationalizable": rational,
        "phi": prox.as_ref().map(|p| p.phi),
        "per_agent_phi": prox.as_ref().map(|p| &p.per_agent_phi),
    }))
}

fn detect(input: &Path, sigma2: f64, gamma: f64, mc_samples: usize, seed: u64) -> Result<()> {
    let d = load_dataset(input).with_context(|| format!("loading dataset {}", input.display()))?;
    let noise = NoiseModel::gaussian(sigma2)?;
    let out = run_detector(&NoisyDataset::new(d), &noise, mc_samples, gamma, RngSeed(seed))?;
    let r = &out.result;
    eprintln!("decision {:?}: statistic {:.6}, tail {:.4} vs gamma {}", r.decision, r.statistic, r.tail, r.gamma);
    emit(r)
}

fn reconstruct(input: &Path, robust: Option<DroConfig>, out: &Path) -> Result<()> {
    let d = load_dataset(input).with_context(|| format!("loading dataset {}", input.display()))?;
    let (utils, summary) = match robust {
        Some(cfg) => {
            let nd = NoisyDataset::new(d);
            let sol = run_exchange(&nd, &cfg)?;
            eprintln!("exchange {} after {} iterations, final CV {:.3e}", if sol.converged { "converged" } else { "stopped" }, sol.cv_trace.len(), sol.cv_trace.last().copied().unwrap_or(0.0));
            let utils = robust_utilities(&sol, &nd)?;
            let summary = json!({
                "method": "robust",
                "converged": sol.converged,
                "iterations": sol.cv_trace.len(),
                "objective": sol.objective,
                "cv_trace": sol.cv_trace,
                "clipped": sol.clipped,
            });
            (utils, summary)
        }
        None => {
            let (cert, slack) = match test_feasibility(&d)? {
                Rationalizability::Rationalizable(c) => (c, 0.0),
                Rationalizability::NotRationalizable => {
                    let p = proximity(&d, true)?;
                    (p.certificate, p.phi)
                }
            };
            eprintln!("certificate at slack {slack} (verified: {})", verify_certificate(&cert, &d)?);
            (reconstruct_utilities(&cert, &d)?, json!({ "method": "classical", "slack": slack }))
        }
    };
    fs::write(out, serde_json::to_string_pretty(&utils)?).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("wrote {} utilities to {}", utils.len(), out.display());
    emit(&summary)
}

fn predict_cmd(utils: &Path, probe: &Path, mu: Option<Vec<f64>>, frontier: Option<usize>, observed: Option<PathBuf>) -> Result<()> {
    let utils: Vec<PiecewiseLinearUtility> = read_json(utils, "utilities")?;
    let probe = read_probe(probe)?;
    if let Some(path) = observed {
        let obs: Allocation = read_json(&path, "observed allocation")?;
        let est = estimate_weights(&utils, &probe, &obs)?;
        eprintln!("recovered mu {:?} at distance {:.3e}", est.mu.values(), est.distance);
        return emit(&est);
    }
    let target = match (mu, frontier) {
        (Some(mu), _) => Target::Weights(WeightVector::new(mu)?),
        (None, Some(density)) => Target::Frontier(density),
        (None, None) => Target::Weights(WeightVector::uniform(utils.len())),
    };
    emit(&predict(&utils, &probe, &target)?)
}

fn simulate(scenario: &Path, out: &Path, noise: Option<f64>) -> Result<()> {
    let cfg: ScenarioConfig = read_json(scenario, "scenario")?;
    let g = gen_coordinating(&cfg)?;
    let d = match noise {
        Some(s) => add_noise(&g.dataset, s, RngSeed(cfg.seed))?.into_inner(),
        None => g.dataset,
    };
    save_dataset(&d, out).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("wrote T={} M={} N={} to {} ({} probes redrawn)", d.horizon(), d.n_agents(), d.n_dims(), out.display(), g.redrawn_probes);
    emit(&json!({ "horizon": d.horizon(), "agents": d.n_agents(), "dims": d.n_dims(), "redrawn_probes": g.redrawn_probes, "out": out }))
}

fn experiment(which: Experiment, dir: &Path, seed: u64, trials: Option<usize>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let file = |name: &str| fs::File::create(dir.join(name)).with_context(|| format!("creating {name}"));
    let (name, rows) = match which {
        Experiment::Fig4 => {
            let mut cfg = Fig4Config { seed, ..Fig4Config::default() };
            cfg.trials = trials.unwrap_or(cfg.trials);
            let rows = run_fig4(&cfg)?;
            write_fig4_csv(&rows, file("fig4.csv")?)?;
            write_manifest(dir, "fig4", seed, &cfg)?;
            ("fig4", serde_json::to_value(&rows)?)
        }
        Experiment::Table1 => {
            let mut cfg = Table1Config { seed, ..Table1Config::default() };
            cfg.trials = trials.unwrap_or(cfg.trials);
            cfg.block = cfg.block.min(cfg.trials);
            let rows = run_table1(&cfg)?;
            write_table1_csv(&rows, file("table1.csv")?)?;
            write_manifest(dir, "table1", seed, &cfg)?;
            ("table1", serde_json::to_value(&rows)?)
        }
        Experiment::Fig5 => {
            let mut cfg = Fig5Config { seed, ..Fig5Config::default() };
            cfg.trials = trials.unwrap_or(cfg.trials);
            let res = run_fig5(&cfg)?;
            write_fig5_csv(&res.rows, file("fig5.csv")?)?;
            write_manifest(dir, "fig5", seed, &cfg)?;
            ("fig5", serde_json::to_value(&res.summaries)?)
        }
    };
    eprintln!("wrote {name}.csv and {name}_manifest.json to {}", dir.display());
    emit(&json!({ "experiment": name, "out": dir, "results": rows }))
}

fn uav_check(model: &Path, pairs: usize, seed: u64, range: &[f64], waveform: Option<PathBuf>) -> Result<()> {
    let file: ModelFile = read_json(model, "model")?;
    let model = LinearGaussianModel::try_from(file)?;
    let (lo, hi) = (range[0], range[1]);
    if !(lo > 0.0 && hi > lo) {
        bail!("--range must satisfy 0 < lo < hi, got {lo},{hi}");
    }
    let mid = 0.5 * (lo + hi);
    let alpha0 = vec![mid; model.n_meas()];
    let beta0 = vec![mid; model.n_states()];
    let alpha_pairs = random_ordered_pairs(model.n_meas(), pairs, (lo, hi), RngSeed(seed));
    let beta_pairs = random_ordered_pairs(model.n_states(), pairs, (lo, hi), RngSeed(seed).trial(1));
    let report = check_precision_monotonicity(&model, (&alpha0, &beta0), &alpha_pairs, &beta_pairs)?;
    eprintln!(
        "{} pairs checked, {} violations, worst margin {:.3e}",
        report.checked,
        report.violations.len(),
        report.worst_margin
    );
    let cov = match waveform {
        Some(path) => {
            let p: WaveformParams = read_json(&path, "waveform")?;
            let m = waveform_covariance(&p)?;
            Some([[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]])
        }
        None => None,
    };
    emit(&json!({ "passed": report.passed(), "report": report, "waveform_covariance": cov }))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::TestEfficiency { input, proximity } => test_efficiency(&input, proximity),
        Command::Detect { input, sigma2, gamma, mc_samples, seed } => detect(&input, sigma2, gamma, mc_samples, seed),
        Command::Reconstruct { input, robust, epsilon, delta, support_radius, out } => {
            let cfg = robust.then(|| DroConfig { support_radius, ..DroConfig::new(epsilon, delta) });
            reconstruct(&input, cfg, &out)
        }
        Command::Predict { utils, probe, mu, frontier, observed } => predict_cmd(&utils, &probe, mu, frontier, observed),
        Command::Simulate { scenario, out, noise } => simulate(&scenario, &out, noise),
        Command::Experiment { which, out, seed, trials } => experiment(which, &out, seed, trials),
        Command::UavCheck { model, pairs, seed, range, waveform } => uav_check(&model, pairs, seed, &range, waveform),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
