//! Numerics for the critical Choquard equation
//! `-Δu = (|x|^{-μ} * |u|^p)|u|^{p-2}u + λu` on bounded domains,
//! with `p = (2N-μ)/(N-2)` the upper critical exponent.
//!
//! The crate is organised bottom-up:
//!
//! * [`constants`]: sharp constants `C(N,μ)`, `S`, `S_HL` and the compactness threshold.
//! * [`field`]: tensor grids, domain masks and discrete calculus.
//! * [`riesz`]: the Riesz potential by padded FFT convolution, with a direct reference.
//! * [`spectral`]: Dirichlet eigenpairs and the `Y_j ⊕ E_{j+1}` splitting.
//! * [`energy`]: the functional `J_λ`, its gradient, the nonlocal norm and the quotient.
//! * [`bubbles`]: truncated Talenti bubbles and their energy asymptotics.
//! * [`varsolve`]: mountain-pass and linking levels, critical points, Pohozaev.
//!
//! ```
//! use choquard::constants::SharpConstants;
//!
//! let c = SharpConstants::compute(3, 1.0).unwrap();
//! assert!((c.nonlocal_s_hl - 4.639758).abs() < 1e-5);
//! ```

pub mod bubbles;
pub mod constants;
pub mod energy;
pub mod error;
pub mod field;
pub mod parallel;
pub mod poisson;
pub mod riesz;
pub mod snapshot;
pub mod spectral;
pub mod varsolve;

pub use error::{Error, Result};
