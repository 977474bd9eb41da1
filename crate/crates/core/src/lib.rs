//! Pseudo-spectral evolution of the modified dust-Einstein system with a
//! positive cosmological constant on T³, in wave coordinates around an FLRW
//! background, together with the norm and energy diagnostics used to monitor
//! its stability.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod background;
pub mod checkpoint;
pub mod diagnostics;
pub mod elliptic;
pub mod evolution;
pub mod grid;
pub mod initial_data;
pub mod linear_oracle;
pub mod lorentz;
pub mod ode;
pub mod rhs;
pub mod sampling;
pub mod snapshot;
pub mod state;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
