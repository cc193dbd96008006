//! Randomized invariants checked against brute-force or algebraic oracles.

mod common;

use proptest::prelude::*;

use pareto_witness::afriat::{Piece, SLACK_TOL};
use pareto_witness::detector::{decide, psi_agent, Decision, PsiSample};
use pareto_witness::frontier::{hausdorff, solve_weighted_sum_pwl, weighted_value, WeightVector};
use pareto_witness::io::{read_dataset_csv, read_dataset_json, write_dataset_csv, write_dataset_json};
use pareto_witness::linprog::{solve, Constraint, LinearProgram, LpOutcome};
use pareto_witness::simgen::{add_noise, gen_coordinating, ScenarioConfig};
use pareto_witness::{
    proximity, reconstruct_utilities, test_feasibility, Dataset, PiecewiseLinearUtility, Probe, Response, RngSeed, Utility,
};

fn config() -> ProptestConfig {
    ProptestConfig { cases: 64, ..ProptestConfig::default() }
}

/// `T` probes and `T × M` responses in two dimensions.
fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (2usize..=5, 1usize..=2).prop_flat_map(|(t_len, m)| {
        (
            prop::collection::vec(prop::collection::vec(0.1f64..2.0, 2), t_len),
            prop::collection::vec(prop::collection::vec(prop::collection::vec(0.0f64..2.0, 2), m), t_len),
        )
            .prop_map(|(probes, responses)| {
                Dataset::new(
                    probes.into_iter().map(|p| Probe::new(p).unwrap()).collect(),
                    responses
                        .into_iter()
                        .map(|row| row.into_iter().map(|r| Response::new(r).unwrap()).collect())
                        .collect(),
                )
                .unwrap()
            })
    })
}

fn scale_responses(d: &Dataset, c: f64) -> Dataset {
    let grid = (0..d.horizon())
        .map(|t| (0..d.n_agents()).map(|i| Response::new(d.response(t, i).iter().map(|v| v * c).collect()).unwrap()).collect())
        .collect();
    d.with_responses(grid).unwrap()
}

/// Minimum of `c·x` over a 2-D polygon by enumerating all pairwise line intersections.
fn vertex_minimum(c: [f64; 2], rows: &[([f64; 2], f64)]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (a, (p, r)) in rows.iter().enumerate() {
        for (q, s) in &rows[a + 1..] {
            let det = p[0] * q[1] - p[1] * q[0];
            if det.abs() < 1e-9 {
                continue;
            }
            let x = [(r * q[1] - p[1] * s) / det, (p[0] * s - r * q[0]) / det];
            if rows.iter().all(|(g, h)| g[0] * x[0] + g[1] * x[1] <= h + 1e-9) {
                let v = c[0] * x[0] + c[1] * x[1];
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn lp_matches_vertex_enumeration(
        c in prop::array::uniform2(-3.0f64..3.0),
        cuts in prop::collection::vec((prop::array::uniform2(-2.0f64..2.0), -1.0f64..4.0), 1..5),
    ) {
        let mut lp = LinearProgram::minimize(c.to_vec());
        lp.set_bounds(0, 0.0, 5.0).set_bounds(1, 0.0, 5.0);
        let mut rows: Vec<([f64; 2], f64)> = vec![([-1.0, 0.0], 0.0), ([0.0, -1.0], 0.0), ([1.0, 0.0], 5.0), ([0.0, 1.0], 5.0)];
        for (a, b) in &cuts {
            lp.push(Constraint::le(a.to_vec(), *b));
            rows.push((*a, *b));
        }
        match (solve(&lp).unwrap(), vertex_minimum(c, &rows)) {
            (LpOutcome::Optimal { value, point }, Some(v)) => {
                prop_assert!((value - v).abs() <= 1e-6, "lp {value} vs vertices {v}");
                prop_assert!(lp.max_violation(&point) <= 1e-7);
            }
            (LpOutcome::Infeasible, None) => {}
            (out, v) => prop_assert!(false, "lp {out:?} vs vertices {v:?}"),
        }
    }

    #[test]
    fn exact_test_agrees_with_proximity(d in dataset_strategy()) {
        let rational = test_feasibility(&d).unwrap().is_rationalizable();
        let phi = proximity(&d, false).unwrap().phi;
        if rational {
            prop_assert!(phi <= SLACK_TOL, "rationalizable but phi = {phi}");
        } else {
            prop_assert!(phi > 0.0, "not rationalizable but phi = {phi}");
        }
    }

    #[test]
    fn proximity_scales_with_responses(d in dataset_strategy(), c in 0.2f64..5.0) {
        let base = proximity(&d, false).unwrap().phi;
        let scaled = proximity(&scale_responses(&d, c), false).unwrap().phi;
        prop_assert!((scaled - c * base).abs() <= 2.0 * (1.0 + c) * SLACK_TOL, "{scaled} vs {c} * {base}");
        prop_assert_eq!(
            test_feasibility(&d).unwrap().is_rationalizable(),
            test_feasibility(&scale_responses(&d, c)).unwrap().is_rationalizable()
        );
    }

    #[test]
    fn proximity_decomposes_by_agent(d in dataset_strategy()) {
        let joint = proximity(&d, false).unwrap();
        for i in 0..d.n_agents() {
            let alone = proximity(&d.single_agent(i), false).unwrap().phi;
            // The bisection bracket depends on every agent, so results agree to its tolerance.
            prop_assert!((joint.per_agent_phi[i] - alone).abs() <= SLACK_TOL);
        }
        let max = joint.per_agent_phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(joint.phi, max);
    }

    #[test]
    fn certificate_holds_at_reported_slack(d in dataset_strategy()) {
        let p = proximity(&d, true).unwrap();
        let scale = p.certificate.lambda.iter().flatten().fold(1.0f64, |m, v| m.max(*v));
        prop_assert!(p.certificate.max_violation(&d).unwrap() <= 1e-7 * scale);
    }

    #[test]
    fn reconstructed_utilities_are_concave_and_monotone(
        seed in 0u64..10_000,
        pts in prop::collection::vec((prop::array::uniform2(0.0f64..3.0), prop::array::uniform2(0.0f64..3.0), 0.0f64..1.0), 20),
    ) {
        let d = gen_coordinating(&ScenarioConfig::reference(5, seed)).unwrap().dataset;
        let cert = match test_feasibility(&d).unwrap() {
            pareto_witness::Rationalizability::Rationalizable(c) => c,
            pareto_witness::Rationalizability::NotRationalizable => return Ok(()),
        };
        for u in reconstruct_utilities(&cert, &d).unwrap() {
            for (x, y, w) in &pts {
                let mix = [w * x[0] + (1.0 - w) * y[0], w * x[1] + (1.0 - w) * y[1]];
                let chord = w * u.value(x) + (1.0 - w) * u.value(y);
                prop_assert!(u.value(&mix) >= chord - 1e-9 * (1.0 + chord.abs()));
                let up = [x[0].max(y[0]), x[1].max(y[1])];
                prop_assert!(u.value(&up) >= u.value(x) - 1e-12);
            }
        }
    }

    #[test]
    fn tail_is_nonincreasing(values in prop::collection::vec(-5.0f64..5.0, 1..50), a in -6.0f64..6.0, b in -6.0f64..6.0) {
        let psi = PsiSample::from_values(values).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(psi.tail(lo) >= psi.tail(hi));
        prop_assert!((0.0..=1.0).contains(&psi.tail(lo)));
    }

    #[test]
    fn decision_is_monotone_in_statistic(
        values in prop::collection::vec(-2.0f64..2.0, 1..50),
        phi in -3.0f64..3.0,
        c in 0.0f64..2.0,
        gamma in 0.01f64..0.99,
    ) {
        let psi = PsiSample::from_values(values).unwrap();
        let at = decide(phi, &psi, gamma).unwrap();
        prop_assert_eq!(at.decision == Decision::H0, at.tail > gamma);
        if at.decision == Decision::H1 {
            prop_assert_eq!(decide(phi + c, &psi, gamma).unwrap().decision, Decision::H1);
        }
    }

    #[test]
    fn hausdorff_is_a_metric(
        a in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..8),
        b in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..8),
        c in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..8),
    ) {
        let ab = hausdorff(&a, &b).unwrap();
        prop_assert_eq!(ab, hausdorff(&b, &a).unwrap());
        prop_assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        prop_assert!(hausdorff(&a, &c).unwrap() <= ab + hausdorff(&b, &c).unwrap() + 1e-12);
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>()) {
        let cfg = ScenarioConfig::reference(4, seed);
        prop_assert_eq!(gen_coordinating(&cfg).unwrap().dataset, gen_coordinating(&cfg).unwrap().dataset);
        let d = gen_coordinating(&cfg).unwrap().dataset;
        prop_assert_eq!(add_noise(&d, 0.1, RngSeed(seed)).unwrap(), add_noise(&d, 0.1, RngSeed(seed)).unwrap());
    }

    #[test]
    fn dataset_round_trips(d in dataset_strategy()) {
        let mut csv = Vec::new();
        write_dataset_csv(&d, &mut csv).unwrap();
        prop_assert_eq!(&read_dataset_csv(csv.as_slice()).unwrap(), &d);
        let mut json = Vec::new();
        write_dataset_json(&d, &mut json).unwrap();
        prop_assert_eq!(&read_dataset_json(json.as_slice()).unwrap(), &d);
    }

    #[test]
    fn weighted_sum_beats_allocation_grid(
        pieces in prop::collection::vec(prop::collection::vec((0.0f64..2.0, 0.1f64..3.0, 0.0f64..2.0), 1..4), 2),
        alpha in 0.5f64..2.0,
        mu in prop::array::uniform2(0.05f64..1.0),
    ) {
        let utils: Vec<PiecewiseLinearUtility> = pieces
            .iter()
            .map(|ps| {
                PiecewiseLinearUtility::new(
                    ps.iter().map(|&(level, slope, anchor)| Piece { level, slope, probe: vec![1.0], anchor: vec![anchor] }).collect(),
                )
                .unwrap()
            })
            .collect();
        let probe = Probe::new(vec![alpha]).unwrap();
        let w = WeightVector::normalized(mu.to_vec()).unwrap();
        let sol = solve_weighted_sum_pwl(&utils, &w, &probe).unwrap();
        let spent: f64 = sol.allocation.iter().map(|b| alpha * b[0]).sum();
        prop_assert!(spent <= 1.0 + 1e-7 && sol.allocation.iter().all(|b| b[0] >= -1e-9));
        let got = weighted_value(&utils, &w, &sol.allocation);
        let step = 0.01 / alpha;
        let mut grid_best = f64::NEG_INFINITY;
        for k in 0..=100 {
            for l in 0..=(100 - k) {
                let alloc = vec![vec![k as f64 * step], vec![l as f64 * step]];
                grid_best = grid_best.max(weighted_value(&utils, &w, &alloc));
            }
        }
        prop_assert!(got >= grid_best - 1e-7, "lp {got} below grid {grid_best}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn statistic_bounded_by_true_noise_psi(seed in 0u64..100_000, sigma2 in 0.005f64..0.5) {
        let clean = gen_coordinating(&ScenarioConfig::reference(6, seed)).unwrap().dataset;
        prop_assume!(test_feasibility(&clean).unwrap().is_rationalizable());
        let noisy = add_noise(&clean, sigma2, RngSeed(seed)).unwrap();
        let p = proximity(&noisy, false).unwrap();
        let eps = common::effective_noise(&clean, &noisy);
        for (phi, e) in p.per_agent_phi.iter().zip(&eps) {
            let psi = psi_agent(noisy.probes(), e);
            prop_assert!(*phi <= psi + 1e-6, "phi {phi} above psi {psi}");
        }
    }
}

/// Under coordination, shifting the statistic up never lowers the empirical Type-I rate.
#[test]
fn shifted_statistic_has_no_smaller_type_one_rate() {
    use pareto_witness::detector::{compute_statistic, sample_psi, NoiseModel};
    let (sigma2, gamma, trials) = (0.05, 0.95, 100u64);
    let noise = NoiseModel::gaussian(sigma2).unwrap();
    let mut alarms = [0usize; 3];
    for k in 0..trials {
        let seed = RngSeed(60_000 + k);
        let clean = gen_coordinating(&ScenarioConfig::reference(10, seed.0)).unwrap().dataset;
        let noisy = add_noise(&clean, sigma2, seed).unwrap();
        let phi = compute_statistic(&noisy).unwrap().phi_star;
        let psi = sample_psi(noisy.probes(), &noise, 500, noisy.n_agents(), seed).unwrap();
        for (slot, c) in [0.0, 0.1, 0.5].into_iter().enumerate() {
            alarms[slot] += usize::from(decide(phi + c, &psi, gamma).unwrap().decision == Decision::H1);
        }
    }
    assert!(alarms[0] <= alarms[1] && alarms[0] <= alarms[2], "alarms {alarms:?}");
    assert!(alarms[2] > alarms[0], "shift by 0.5 should raise false alarms: {alarms:?}");
}
