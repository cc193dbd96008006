#![allow(dead_code)]

use pareto_witness::{Dataset, Probe, Response};

pub fn dataset(probes: &[&[f64]], responses: &[&[&[f64]]]) -> Dataset {
    Dataset::new(
        probes.iter().map(|p| Probe::new(p.to_vec()).unwrap()).collect(),
        responses.iter().map(|row| row.iter().map(|r| Response::new(r.to_vec()).unwrap()).collect()).collect(),
    )
    .unwrap()
}

/// Two observations that violate WARP; minimal slack is exactly 1/2.
pub fn warp_violation() -> Dataset {
    dataset(&[&[1.0, 2.0], &[2.0, 1.0]], &[&[&[0.0, 0.5]], &[&[0.5, 0.0]]])
}

/// Effective noise `noisy − clean`, indexed `[i][t]`.
pub fn effective_noise(clean: &Dataset, noisy: &Dataset) -> Vec<Vec<Vec<f64>>> {
    (0..clean.n_agents())
        .map(|i| {
            (0..clean.horizon())
                .map(|t| noisy.response(t, i).iter().zip(clean.response(t, i)).map(|(a, b)| a - b).collect())
                .collect()
        })
        .collect()
}
