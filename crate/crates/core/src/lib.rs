//! Adaptive detection of subspace signals in unknown Gaussian noise and
//! subspace interference, by projecting test and training data onto the
//! orthogonal complement of the interference subspace before detection.
//!
//! Modules, bottom-up:
//! - [`linalg`]: dense complex linear algebra (square roots, projectors, complements)
//! - [`scenario`]: data model, covariance, trial synthesis and eSNR control
//! - [`detectors`]: projected (ICBD) and conventional detector statistics
//! - [`perf`]: complex F / Beta laws, theoretical PFA, PD and thresholds
//! - [`mc`]: reproducible parallel Monte Carlo calibration and PD sweeps
//! - [`verify`]: randomized residual checks of the algebraic identities

pub mod detectors;
pub mod error;
pub mod linalg;
pub mod mc;
pub mod perf;
pub mod rng;
pub mod scenario;
pub mod verify;

pub use detectors::{DetectorKind, IcbdWorkspace, Projection, Statistics};
pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, ComplexVector, NumericPolicy, C64};
pub use mc::{McConfig, PerformancePoint};
pub use perf::{BetaDistSpec, Dims, FDistSpec};
pub use scenario::{Environment, Hypothesis, Scenario, ScenarioBuilder, TrialData};
pub use verify::IdentityReport;
