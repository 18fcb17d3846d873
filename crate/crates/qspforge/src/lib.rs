//! Evaluation, analysis, and synthesis of quantum-signal-processing (QSP)
//! protocols and the polynomial states they produce.
//!
//! A QSP protocol alternates a fixed signal-dependent diagonal unitary with
//! arbitrary signal-independent processing operators; multiplying the
//! sequence out yields a vector-valued polynomial in the signal variables
//! whose pointwise norm is identically 1 on the torus. This crate implements
//! both directions for three protocol families:
//!
//! - **Univariate** protocols over diag(z⁻¹, z) or diag(1, z), in the W_z or
//!   W_x basis, with full-SU(2), X-rotation, or Z-rotation processing
//!   ([`univariate`]): evaluation, convention classification, synthesis, and
//!   the Laurent↔analytic correspondence.
//! - **Classical-choice bivariate** protocols that pick a variable per step
//!   ([`multivariate`]): evaluation and the necessary-condition checker.
//! - **Three-dimensional** protocols over diag(1, a, b) ([`multivariate`]):
//!   evaluation, single-step extraction, full decomposition for states with
//!   non-vanishing corner coefficients, the embedding of choice protocols,
//!   the span-based unimplementability test, and the inapproximability
//!   quantity q(γ) with its q/4 sup-norm radius.
//!
//! States are sparse coefficient lattices ([`state::PolynomialState`]);
//! normalization is checked through autocorrelation sums, never assumed.
//! Everything is plain double precision with explicit tolerances.
//!
//! # Example
//!
//! ```
//! use qspforge::linalg::haar_random_unitary;
//! use qspforge::multivariate::{decompose_3d, evaluate_protocol_3d, Protocol3D};
//!
//! let ops = (0..5).map(|k| haar_random_unitary(3, k).unwrap()).collect();
//! let protocol = Protocol3D::new(ops).unwrap();
//! let state = evaluate_protocol_3d(&protocol).unwrap();
//! assert!(state.normalization_residual() < 1e-10);
//!
//! let rebuilt = decompose_3d(&state).unwrap();
//! let state2 = evaluate_protocol_3d(&rebuilt).unwrap();
//! assert!(state.l2_distance(&state2).unwrap() < 1e-8);
//! ```

pub mod cli;
pub(crate) mod dd;
pub mod error;
pub mod io;
pub(crate) mod manifold;
pub mod linalg;
pub mod multivariate;
pub mod report;
pub mod state;
pub mod univariate;

pub use error::{Error, Result};
pub use linalg::{CVector, Complex64, UnitaryMatrix};
pub use report::{ConditionVerdict, DiagnosticReport, Witness};
pub use state::{Kind, MultiIndex, PolynomialState, TorusPoint};
