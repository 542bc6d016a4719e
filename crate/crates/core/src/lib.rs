//! First-passage matrix `G` of a Markov-modulated Lévy process with positive
//! jumps, obtained from the matrix equation `F(G) = 0`.
//!
//! Solvers:
//! - [`qsolve::fi_solve`], [`qsolve::u_based_solve`] and
//!   [`qsolve::qme_outer_solve`] work with `W = I + τG`;
//! - [`rsolve::nare_outer_solve`] works with `S = G + Δ_b`;
//! - [`baselines::simon_solve`] and [`baselines::breuer_solve`] are the
//!   reference algorithms they are compared with.
//!
//! ```
//! use mmlevy::{model, qsolve, Matrix, SolveOptions};
//!
//! let m = model::preset_example2(&model::Example2::default()).unwrap();
//! let tau = qsolve::tau_opt(&m).unwrap();
//! let r = qsolve::qme_outer_solve(&m, tau, &Matrix::zeros(3, 3), &SolveOptions::default()).unwrap();
//! assert!(r.converged() && r.residual < 1e-12);
//! ```

pub mod analysis;
pub mod baselines;
pub mod error;
pub mod matcore;
pub mod model;
pub mod qsolve;
pub mod quad;
pub mod report;
pub mod rsolve;

pub use error::{Error, Result};
pub use matcore::{Matrix, Vector};
pub use model::{JumpDensity, MmLevyModel};
pub use quad::QuadSettings;
pub use report::{SolveOptions, SolveReport, Status};
