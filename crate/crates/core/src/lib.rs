//! Numerical laboratory for recurrent planar Markov random walks.
//!
//! A walk here is a finite-state driving chain plus a lattice-valued step law
//! on each edge. The crate computes, side by side:
//!
//! - exact distributions of the walk by transfer-operator convolution
//!   ([`exactdist`]), the ground truth everything else is checked against;
//! - spectral data of the Fourier matrices `Q(t)` ([`spectral`]): dominant
//!   eigenvalue, covariance by eigenvalue perturbation, the quadratic
//!   expansion near zero, and an arithmeticity scan over the dual group's
//!   fundamental domain;
//! - local-limit ratios `n P(S_n = s) -> D_S` and their bivariate analogue;
//! - Kochen-Stone second-moment certificates that lower-bound return
//!   probabilities and amplify to an everywhere-recurrence verdict
//!   ([`recurrence`]);
//! - Monte Carlo batches for models with no exact representation, including
//!   the critical affine recursion with its `sqrt(n log n)` normalization
//!   ([`montecarlo`]).

pub mod chain;
pub mod error;
pub mod exactdist;
pub mod fixtures;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod montecarlo;
pub mod recurrence;
pub mod spectral;

pub use chain::{EdgeStep, FiniteMRW, InitialLaw, ModelSpec, StationaryLaw, StepAtom};
pub use error::{Error, Result};
pub use exactdist::{
    ball_mass, bivariate_llt, evolve, kochen_series, llt_series, BivariateReport, Evolver,
    LatticeDistribution, LltSeries, OracleSeries, Weight, WindowPolicy,
};
pub use lattice::{LatticeSpec, LatticeVariant};
pub use montecarlo::{
    empirical_clt, empirical_hits, simulate, AffineRecursion, CltReport, ContractiveIfs,
    HitSeries, SimConfig, SimModel, SimStart, TrajectoryBatch,
};
pub use recurrence::{
    amplify, kochen_stone, kochen_stone_from_hits, recurrence_report, AmplifyReport,
    AmplifyVerdict, JointSeries, KochenStoneCertificate, KochenStoneOutcome, McCertificate,
    RecurrenceReport, TransienceReport,
};
pub use spectral::{
    arithmeticity_scan, covariance, expansion_check, extract_witness, fourier_matrix,
    spectral_summary, ArithmeticWitness, Covariance, ExpansionReport, FourierMatrix,
    NormalizerKind, ScanOptions, ScanReport, ScanVerdict, SpectralSummary,
};
