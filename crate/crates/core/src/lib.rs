//! Biphoton propagation through Fabry–Perot cavities with a time-varying
//! input mirror.
//!
//! Time is measured in roundtrips (`T_R = 1`), so the free spectral range is
//! `2pi` rad per unit time. Public frequency axes are in FSR units.

pub mod cavity;
pub mod error;
pub mod experiments;
pub mod gridio;
pub mod metrics;
pub mod propagate;
pub mod quadrature;
pub mod render;
pub mod spectrum;

#[cfg(feature = "cli")]
pub mod cli;

pub use cavity::{CavityParams, ReplicaKernel, ReplicaSum, SwitchingProfile};
pub use error::{Error, Result};
pub use spectrum::{BiphotonDoubleSinc, FrequencyAxis, FrequencyGrid, JointAmplitudeGrid, Provenance};

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on.
/// Output order is always index order.
#[cfg(feature = "parallel")]
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
