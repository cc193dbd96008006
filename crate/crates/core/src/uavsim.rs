//! Steady-state Kalman covariance under spectrally parametrized noise, and the
//! radar waveform to measurement-covariance maps.
//!
//! `Q(β) = U_Q diag(β) U_Qᵀ` and `R(α) = U_R diag(1/α) U_Rᵀ`, so raising `α` raises
//! measurement precision and raising `β` raises process noise.

use nalgebra::{Complex, DMatrix, Matrix2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{RngSeed, Stream};
use crate::error::{dim_err, input_err, Error, Result};

pub const ARE_TOL: f64 = 1e-10;
pub const ARE_MAX_ITER: usize = 100_000;
/// Loewner-order slack allowed in monotonicity checks.
pub const MONOTONE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussianModel {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub u_q: DMatrix<f64>,
    pub u_r: DMatrix<f64>,
}

/// Row-major JSON form of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub a: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    #[serde(default)]
    pub u_q: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub u_r: Option<Vec<Vec<f64>>>,
}

fn matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(dim_err(format!("matrix {name} must be a nonempty rectangular array")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl TryFrom<ModelFile> for LinearGaussianModel {
    type Error = Error;
    fn try_from(f: ModelFile) -> Result<Self> {
        let a = matrix(&f.a, "a")?;
        let c = matrix(&f.c, "c")?;
        let u_q = f.u_q.as_deref().map(|r| matrix(r, "u_q")).transpose()?.unwrap_or_else(|| DMatrix::identity(a.nrows(), a.nrows()));
        let u_r = f.u_r.as_deref().map(|r| matrix(r, "u_r")).transpose()?.unwrap_or_else(|| DMatrix::identity(c.nrows(), c.nrows()));
        LinearGaussianModel::new(a, c, u_q, u_r)
    }
}

impl From<&LinearGaussianModel> for ModelFile {
    fn from(m: &LinearGaussianModel) -> Self {
        ModelFile { a: rows_of(&m.a), c: rows_of(&m.c), u_q: Some(rows_of(&m.u_q)), u_r: Some(rows_of(&m.u_r)) }
    }
}

fn is_orthonormal(u: &DMatrix<f64>) -> bool {
    u.is_square() && (u.transpose() * u - DMatrix::identity(u.nrows(), u.nrows())).norm() < 1e-9
}

impl LinearGaussianModel {
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>, u_q: DMatrix<f64>, u_r: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || c.ncols() != n || u_q.nrows() != n || u_r.nrows() != c.nrows() {
            return Err(dim_err("inconsistent model dimensions"));
        }
        if !is_orthonormal(&u_q) || !is_orthonormal(&u_r) {
            return Err(input_err("spectral bases must be orthonormal"));
        }
        Ok(Self { a, c, u_q, u_r })
    }

    /// Identity spectral bases.
    pub fn diagonal(a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let (n, m) = (a.nrows(), c.nrows());
        Self::new(a, c, DMatrix::identity(n, n), DMatrix::identity(m, m))
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_meas(&self) -> usize {
        self.c.nrows()
    }

    pub fn q(&self, beta: &[f64]) -> Result<DMatrix<f64>> {
        if beta.len() != self.n_states() || beta.iter().any(|b| !(*b >= 0.0)) {
            return Err(input_err("beta must have one nonnegative entry per state"));
        }
        Ok(&self.u_q * DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(beta)) * self.u_q.transpose())
    }

    pub fn r(&self, alpha: &[f64]) -> Result<DMatrix<f64>> {
        if alpha.len() != self.n_meas() || alpha.iter().any(|a| !(*a > 0.0)) {
            return Err(input_err("alpha must have one positive entry per measurement"));
        }
        let inv: Vec<f64> = alpha.iter().map(|a| 1.0 / a).collect();
        Ok(&self.u_r * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(inv)) * self.u_r.transpose())
    }
}

fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    a.clone().complex_eigenvalues().iter().copied().collect()
}

fn complex_rank(m: &DMatrix<Complex<f64>>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let tol = 1e-9 * sv.iter().copied().fold(1.0, f64::max);
    sv.iter().filter(|s| **s > tol).count()
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    m.map(|x| Complex::new(x, 0.0))
}

/// PBH test: `rank [A − λI; C] = n` for every eigenvalue with `|λ| ≥ 1`.
pub fn is_detectable(a: &DMatrix<f64>, c: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    eigenvalues(a).into_iter().filter(|l| l.norm() >= 1.0 - 1e-12).all(|l| {
        let mut stacked = DMatrix::zeros(n + c.nrows(), n);
        stacked.view_mut((0, 0), (n, n)).copy_from(&(to_complex(a) - DMatrix::identity(n, n) * l));
        stacked.view_mut((n, 0), (c.nrows(), n)).copy_from(&to_complex(c));
        complex_rank(&stacked) == n
    })
}

/// PBH test: `rank [A − λI, B] = n` for every eigenvalue with `|λ| ≥ 1`.
pub fn is_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    eigenvalues(a).into_iter().filter(|l| l.norm() >= 1.0 - 1e-12).all(|l| {
        let mut wide = DMatrix::zeros(n, n + b.ncols());
        wide.view_mut((0, 0), (n, n)).copy_from(&(to_complex(a) - DMatrix::identity(n, n) * l));
        wide.view_mut((0, n), (n, b.ncols())).copy_from(&to_complex(b));
        complex_rank(&wide) == n
    })
}

/// One Riccati step `A(Σ − ΣCᵀ(CΣCᵀ + R)⁻¹CΣ)Aᵀ + Q`.
fn riccati_step(m: &LinearGaussianModel, sigma: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = &m.c * sigma * m.c.transpose() + r;
    let gain_t = s
        .cholesky()
        .ok_or_else(|| Error::Solver("innovation covariance is not positive definite".into()))?
        .solve(&(&m.c * sigma));
    let next = &m.a * (sigma - sigma * m.c.transpose() * gain_t) * m.a.transpose() + q;
    Ok(0.5 * (&next + next.transpose()))
}

/// Steady-state predicted covariance by fixed-point iteration from `Σ₀ = Q`.
pub fn solve_are(model: &LinearGaussianModel, alpha: &[f64], beta: &[f64], tol: f64, max_iter: usize) -> Result<DMatrix<f64>> {
    let q = model.q(beta)?;
    let r = model.r(alpha)?;
    if !is_detectable(&model.a, &model.c) {
        return Err(input_err("(A, C) is not detectable"));
    }
    let sqrt_q = &model.u_q * DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(beta.len(), beta.iter().map(|b| b.sqrt())));
    if !is_stabilizable(&model.a, &sqrt_q) {
        return Err(input_err("(A, Q^1/2) is not stabilizable"));
    }
    let mut sigma = q.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = riccati_step(model, &sigma, &q, &r)?;
        residual = (&next - &sigma).norm();
        sigma = next;
        if residual < tol {
            return Ok(sigma);
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, residual })
}

/// `‖Σ − Ricc(Σ)‖_F`.
pub fn are_residual(model: &LinearGaussianModel, alpha: &[f64], beta: &[f64], sigma: &DMatrix<f64>) -> Result<f64> {
    let next = riccati_step(model, sigma, &model.q(beta)?, &model.r(alpha)?)?;
    Ok((next - sigma).norm())
}

/// Asymptotic precision `Σ*⁻¹`.
pub fn precision(model: &LinearGaussianModel, alpha: &[f64], beta: &[f64]) -> Result<DMatrix<f64>> {
    let sigma = solve_are(model, alpha, beta, ARE_TOL, ARE_MAX_ITER)?;
    sigma.try_inverse().ok_or_else(|| Error::Solver("steady-state covariance is singular".into()))
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = 0.5 * (m + m.transpose());
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub kind: String,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub checked: usize,
    /// Smallest `λ_min` of the precision difference seen.
    pub worst_margin: f64,
    pub violations: Vec<MonotonicityViolation>,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// For each `(α, α′)` with `α ≤ α′`: `P(α′, β₀) ⪰ P(α, β₀)`. For each `(β, β′)` with
/// `β ≤ β′`: `P(α₀, β) ⪰ P(α₀, β′)`.
pub fn check_precision_monotonicity(
    model: &LinearGaussianModel,
    base: (&[f64], &[f64]),
    alpha_pairs: &[(Vec<f64>, Vec<f64>)],
    beta_pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<MonotonicityReport> {
    let (alpha0, beta0) = base;
    let mut report = MonotonicityReport { worst_margin: f64::INFINITY, ..Default::default() };
    let ordered = |lo: &[f64], hi: &[f64]| lo.len() == hi.len() && lo.iter().zip(hi).all(|(a, b)| a <= b);
    let mut record = |kind: &str, lo: &[f64], hi: &[f64], diff: DMatrix<f64>| {
        let e = min_eigenvalue(&diff);
        report.checked += 1;
        report.worst_margin = report.worst_margin.min(e);
        if e < -MONOTONE_TOL {
            report.violations.push(MonotonicityViolation { kind: kind.into(), low: lo.to_vec(), high: hi.to_vec(), min_eigenvalue: e });
        }
    };
    for (lo, hi) in alpha_pairs {
        if !ordered(lo, hi) {
            return Err(input_err("alpha pairs must be componentwise ordered"));
        }
        let diff = precision(model, hi, beta0)? - precision(model, lo, beta0)?;
        record("alpha", lo, hi, diff);
    }
    for (lo, hi) in beta_pairs {
        if !ordered(lo, hi) {
            return Err(input_err("beta pairs must be componentwise ordered"));
        }
        let diff = precision(model, alpha0, lo)? - precision(model, alpha0, hi)?;
        record("beta", lo, hi, diff);
    }
    Ok(report)
}

/// Random componentwise-ordered pairs in `[lo, hi]^n`.
pub fn random_ordered_pairs(n: usize, count: usize, range: (f64, f64), seed: RngSeed) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = seed.rng(Stream::Aux);
    (0..count)
        .map(|_| {
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(range.0..range.1)).collect();
            let b = a.iter().map(|x| rng.random_range(*x..=range.1)).collect();
            (a, b)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum WaveformParams {
    TriangularCw { c: f64, omega_c: f64, theta: f64, eta: f64 },
    GaussianCw { c: f64, omega_c: f64, theta: f64, eta: f64 },
    GaussianLfm { c: f64, omega_c: f64, theta1: f64, theta2: f64, eta: f64 },
}

/// Range/range-rate measurement covariance induced by a waveform.
pub fn waveform_covariance(p: &WaveformParams) -> Result<Matrix2<f64>> {
    let positive = |xs: &[f64]| xs.iter().all(|x| *x > 0.0 && x.is_finite());
    match *p {
        WaveformParams::TriangularCw { c, omega_c, theta, eta } => {
            if !positive(&[c, omega_c, theta, eta]) {
                return Err(input_err("waveform parameters must be positive"));
            }
            let (c2, t2) = (c * c, theta * theta);
            Ok(Matrix2::new(c2 * t2 / (12.0 * eta), 0.0, 0.0, 5.0 * c2 / (2.0 * omega_c * omega_c * t2 * eta)))
        }
        WaveformParams::GaussianCw { c, omega_c, theta, eta } => {
            if !positive(&[c, omega_c, theta, eta]) {
                return Err(input_err("waveform parameters must be positive"));
            }
            let (c2, t2) = (c * c, theta * theta);
            Ok(Matrix2::new(c2 * t2 / (2.0 * eta), 0.0, 0.0, c2 / (2.0 * omega_c * omega_c * t2 * eta)))
        }
        WaveformParams::GaussianLfm { c, omega_c, theta1, theta2, eta } => {
            if !positive(&[c, omega_c, theta1, eta]) || !(theta2 >= 0.0 && theta2.is_finite()) {
                return Err(input_err("waveform parameters must be positive (chirp rate nonnegative)"));
            }
            let (c2, t1s) = (c * c, theta1 * theta1);
            let off = -c2 * theta2 * t1s / (omega_c * eta);
            let range = c2 * t1s / (2.0 * eta);
            let doppler = c2 / (omega_c * omega_c * eta) * (1.0 / (2.0 * t1s) + 2.0 * theta2 * theta2 * t1s);
            Ok(Matrix2::new(range, off, off, doppler))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64) -> LinearGaussianModel {
        LinearGaussianModel::diagonal(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, 1.0)).unwrap()
    }

    fn constant_velocity() -> LinearGaussianModel {
        LinearGaussianModel::diagonal(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]), DMatrix::identity(2, 2)).unwrap()
    }

    #[test]
    fn scalar_are_is_golden_ratio() {
        let s = solve_are(&scalar(1.0), &[1.0], &[1.0], ARE_TOL, ARE_MAX_ITER).unwrap();
        assert!((s[(0, 0)] - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-8);
        assert!(are_residual(&scalar(1.0), &[1.0], &[1.0], &s).unwrap() < 1e-8);
    }

    #[test]
    fn no_process_noise_stable_model() {
        let s = solve_are(&scalar(0.5), &[3.0], &[0.0], ARE_TOL, ARE_MAX_ITER).unwrap();
        assert_eq!(s[(0, 0)], 0.0);
    }

    #[test]
    fn scalar_precision_increases_with_alpha() {
        let m = scalar(1.0);
        let p1 = precision(&m, &[1.0], &[1.0]).unwrap()[(0, 0)];
        let p2 = precision(&m, &[2.0], &[1.0]).unwrap()[(0, 0)];
        // Closed form: P² − P·q − q·r = 0 with q = 1, r = 1/α.
        let closed = |r: f64| 2.0 / (1.0 + (1.0 + 4.0 * r).sqrt());
        assert!((p1 - closed(1.0)).abs() < 1e-8 && (p2 - closed(0.5)).abs() < 1e-8);
        assert!(p2 > p1);
    }

    #[test]
    fn equal_pair_has_zero_difference() {
        let m = constant_velocity();
        let rep = check_precision_monotonicity(&m, (&[1.0, 1.0], &[0.5, 0.5]), &[(vec![1.0, 2.0], vec![1.0, 2.0])], &[]).unwrap();
        assert!(rep.passed() && rep.worst_margin.abs() < 1e-8);
    }

    #[test]
    fn random_pairs_are_monotone() {
        let m = constant_velocity();
        let ap = random_ordered_pairs(2, 30, (0.2, 5.0), RngSeed(1));
        let bp = random_ordered_pairs(2, 30, (0.05, 2.0), RngSeed(2));
        let rep = check_precision_monotonicity(&m, (&[1.0, 1.0], &[0.5, 0.5]), &ap, &bp).unwrap();
        assert!(rep.passed(), "{:?}", rep.violations);
        assert_eq!(rep.checked, 60);
    }

    #[test]
    fn pbh_tests() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(is_detectable(&a, &DMatrix::from_row_slice(1, 2, &[1.0, 0.0])));
        assert!(!is_detectable(&a, &DMatrix::from_row_slice(1, 2, &[0.0, 1.0])));
        assert!(is_stabilizable(&a, &DMatrix::from_row_slice(2, 1, &[0.0, 1.0])));
        assert!(!is_stabilizable(&a, &DMatrix::from_row_slice(2, 1, &[1.0, 0.0])));
    }

    #[test]
    fn waveform_examples() {
        let tri = waveform_covariance(&WaveformParams::TriangularCw { c: 1.0, omega_c: 1.0, theta: 1.0, eta: 1.0 }).unwrap();
        assert_eq!(tri, Matrix2::new(1.0 / 12.0, 0.0, 0.0, 2.5));
        let cw = waveform_covariance(&WaveformParams::GaussianCw { c: 3.0, omega_c: 2.0, theta: 0.7, eta: 5.0 }).unwrap();
        let lfm = waveform_covariance(&WaveformParams::GaussianLfm { c: 3.0, omega_c: 2.0, theta1: 0.7, theta2: 0.0, eta: 5.0 })
            .unwrap();
        assert!((cw - lfm).norm() < 1e-12);
        assert!(waveform_covariance(&WaveformParams::GaussianCw { c: 0.0, omega_c: 1.0, theta: 1.0, eta: 1.0 }).is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let m = constant_velocity();
        let f = ModelFile::from(&m);
        let text = serde_json::to_string(&f).unwrap();
        let back = LinearGaussianModel::try_from(serde_json::from_str::<ModelFile>(&text).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
