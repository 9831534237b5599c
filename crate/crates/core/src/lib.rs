//! Exact solver for master equations on p-adic transition networks.
//!
//! Inside each basin `a + pZ_p` the dynamics is a radial jump process, and
//! between basins transitions happen at constant rates. Restricted to
//! functions constant on depth-`N` cells, the master equation is a finite
//! linear ODE that this crate solves three ways: in closed form over the
//! wavelet basis ([`spectral`]), by dense matrix exponential on the cell tree
//! ([`oracle`]), and by simulating the jump process ([`montecarlo`]).

pub mod binary;
pub mod error;
pub mod expm;
pub mod kernels;
pub mod montecarlo;
pub mod network;
pub mod oracle;
pub mod padic;
pub mod spectral;
pub mod wavelets;

pub use error::{Error, Result};
pub use kernels::RadialKernel;
pub use network::{Basin, Classification, Convention, NetworkSpec};
pub use padic::{CellAddress, Prime};
pub use spectral::{SpectralSolver, SpectralState};
pub use wavelets::{CellFunction, WaveletIndex};
