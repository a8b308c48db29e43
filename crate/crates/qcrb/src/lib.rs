//! Multi-parameter quantum estimation bounds on finite-dimensional models.
//!
//! The crate computes and cross-checks the precision bounds of local quantum
//! estimation: SLD and RLD Cramér-Rao bounds, the Holevo bound (HCRB), the
//! Nagaoka-Hayashi bound (NHCRB), the Gill-Massar bound (GMCRB) and a feasible
//! point of the most-informative bound (MICRB). The HCRB and NHCRB are
//! semidefinite programs solved by the interior-point method in [`sdp`].
//!
//! Parameters follow the Gell-Mann convention `Tr(λ_j λ_k) = δ_jk`, so a qudit
//! state is `ρ = 1/d + Σ θ_j λ_j`.
//!
//! ```
//! use qcrb::{bounds, model};
//! let m = model::gmm_model(2, &[0.0; 3]).unwrap();
//! let h = bounds::hcrb(&m, &Default::default()).unwrap();
//! assert!((h.value - 1.5).abs() < 1e-6);
//! ```

#![forbid(unsafe_code)]

pub mod bounds;
pub mod error;
pub mod experiments;
pub mod gellmann;
pub mod linalg;
pub mod model;
pub mod povm;
pub mod sdp;

pub use error::{Error, Result};
pub use linalg::{CqMatrix, HermMatrix, C64};
pub use model::StatModel;
