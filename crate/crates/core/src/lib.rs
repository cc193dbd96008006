//! Tests whether multi-agent probe/response data is consistent with
//! Pareto-efficient coordination, measures how far it is from efficiency,
//! detects coordination under noise, and reconstructs agent utilities
//! (classically and with Wasserstein distributionally robust estimation).

pub mod afriat;
pub mod data;
pub mod detector;
pub mod dro;
pub mod error;
pub mod experiments;
pub mod frontier;
pub mod io;
pub mod linprog;
pub mod predictor;
pub mod simgen;
pub mod uavsim;
pub mod utility;

pub use afriat::{
    eval_utility, proximity, reconstruct_utilities, test_feasibility, PiecewiseLinearUtility, ProximityResult,
    Rationalizability,
};
pub use data::{
    validate_dataset, AfriatCertificate, CertificateKind, Dataset, NoisyDataset, Probe, Response, RngSeed, Stream,
    ValidationReport, TOL_FEAS,
};
pub use error::{Error, Result};
pub use utility::{SmoothObjective, SmoothUtility, Utility};
