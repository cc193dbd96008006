//! Forecasting responses to new probes and recovering the weight vector behind an observation.

use serde::{Deserialize, Serialize};

use crate::afriat::PiecewiseLinearUtility;
use crate::data::Probe;
use crate::error::{dim_err, Result};
use crate::frontier::{solve_weighted_sum_pwl, trace_frontier, weight_grid, Allocation, FrontierSample, WeightVector, MU_MIN};

/// Grid density for weight recovery (step 0.02).
pub const WEIGHT_GRID_DENSITY: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    /// A single known weight vector.
    Weights(WeightVector),
    /// The whole frontier at the given grid density.
    Frontier(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Prediction {
    Allocation(Allocation),
    Frontier(FrontierSample),
}

pub fn predict(utils: &[PiecewiseLinearUtility], probe: &Probe, target: &Target) -> Result<Prediction> {
    Ok(match target {
        Target::Weights(mu) => Prediction::Allocation(solve_weighted_sum_pwl(utils, mu, probe)?.allocation),
        Target::Frontier(density) => Prediction::Frontier(trace_frontier(utils, probe, *density)?),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightEstimate {
    pub mu: WeightVector,
    /// `‖predict(μ) − observed‖₂` at the returned `μ`.
    pub distance: f64,
}

/// Grid search for the weights whose prediction is closest to `observed`.
/// Ties go to the lexicographically first grid point.
pub fn estimate_weights(utils: &[PiecewiseLinearUtility], probe: &Probe, observed: &Allocation) -> Result<WeightEstimate> {
    if observed.len() != utils.len() || observed.iter().any(|b| b.len() != probe.dim()) {
        return Err(dim_err("observed allocation does not match agents and probe dimension"));
    }
    let mut best: Option<WeightEstimate> = None;
    for mu in weight_grid(utils.len(), WEIGHT_GRID_DENSITY, MU_MIN) {
        let pred = solve_weighted_sum_pwl(utils, &mu, probe)?.allocation;
        let distance = pred
            .iter()
            .flatten()
            .zip(observed.iter().flatten())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if best.as_ref().is_none_or(|b| distance < b.distance) {
            best = Some(WeightEstimate { mu, distance });
        }
    }
    Ok(best.expect("nonempty weight grid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afriat::Piece;
    use crate::frontier::spend;

    fn linear(w: &[f64]) -> PiecewiseLinearUtility {
        PiecewiseLinearUtility::new(vec![Piece { level: 0.0, slope: 1.0, probe: w.to_vec(), anchor: vec![0.0; w.len()] }])
            .unwrap()
    }

    /// Tangent lines of `√x` at many points: a finely kinked concave utility in one good.
    fn root_tangents() -> PiecewiseLinearUtility {
        let pieces = (1..=200)
            .map(|k| {
                let x = k as f64 * 0.01;
                Piece { level: x.sqrt(), slope: 0.5 / x.sqrt(), probe: vec![1.0], anchor: vec![x] }
            })
            .collect();
        PiecewiseLinearUtility::new(pieces).unwrap()
    }

    #[test]
    fn single_agent_weight_is_one() {
        let probe = Probe::new(vec![1.0, 1.0]).unwrap();
        let est = estimate_weights(&[linear(&[1.0, 2.0])], &probe, &vec![vec![0.0, 1.0]]).unwrap();
        assert_eq!(est.mu.values(), [1.0]);
    }

    #[test]
    fn closed_loop_weight_recovery() {
        let utils = [root_tangents(), root_tangents()];
        let probe = Probe::new(vec![0.5]).unwrap();
        for k in [10usize, 17, 25, 33, 40] {
            let mu_star = WeightVector::new(vec![k as f64 / 50.0, 1.0 - k as f64 / 50.0]).unwrap();
            let Prediction::Allocation(obs) = predict(&utils, &probe, &Target::Weights(mu_star.clone())).unwrap() else {
                panic!()
            };
            let est = estimate_weights(&utils, &probe, &obs).unwrap();
            let linf = est.mu.values().iter().zip(mu_star.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(linf <= 0.02 + 1e-9, "mu* {:?} recovered {:?}", mu_star.values(), est.mu.values());
        }
    }

    #[test]
    fn symmetric_agents_give_symmetric_weights() {
        let utils = [root_tangents(), root_tangents()];
        let probe = Probe::new(vec![1.0]).unwrap();
        let est = estimate_weights(&utils, &probe, &vec![vec![0.5], vec![0.5]]).unwrap();
        assert!((est.mu.values()[0] - est.mu.values()[1]).abs() <= 0.02 + 1e-9, "{:?}", est.mu.values());
    }

    #[test]
    fn near_vertex_weight_concentrates_budget() {
        let utils = [linear(&[1.0, 3.0]), linear(&[2.0, 1.0])];
        let probe = Probe::new(vec![0.5, 1.0]).unwrap();
        let mu = weight_grid(2, 1, MU_MIN).into_iter().next().unwrap();
        assert!(mu.values()[1] > 0.99);
        let Prediction::Allocation(a) = predict(&utils, &probe, &Target::Weights(mu)).unwrap() else { panic!() };
        let alone = solve_weighted_sum_pwl(&utils[1..], &WeightVector::uniform(1), &probe).unwrap();
        assert!(a[0].iter().all(|b| b.abs() < 1e-9));
        assert!(a[1].iter().zip(&alone.allocation[0]).all(|(x, y)| (x - y).abs() < 1e-9));
        assert!(spend(&probe, &a) >= 1.0 - 1e-6);
    }

    #[test]
    fn frontier_target() {
        let utils = [linear(&[1.0, 3.0]), linear(&[2.0, 1.0])];
        let probe = Probe::new(vec![0.5, 1.0]).unwrap();
        let Prediction::Frontier(f) = predict(&utils, &probe, &Target::Frontier(10)).unwrap() else { panic!() };
        assert_eq!(f.points.len(), 11);
    }
}
