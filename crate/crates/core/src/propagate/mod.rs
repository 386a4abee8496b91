//! Engines that carry a joint spectral amplitude through the cavity.
//!
//! * [`analytic`]: `F(ws) F(wi) psi_in`, valid only for inputs that fit inside
//!   the capture window of an instantaneous switch.
//! * [`time_domain`]: quadrature over the input's time-domain box against the
//!   replica train. Exact for any profile, including clipped inputs.
//! * [`monte_carlo`]: uniform sampling of the frequency-domain double integral.
//! * [`ltv`]: the single-photon (or classical) 1-D input-output relation.

pub mod analytic;
pub mod ltv;
pub mod monte_carlo;
pub mod time_domain;

pub use analytic::{propagate_analytic, AnalyticEngine};
pub use ltv::{apply_ltv_1d, SampledSignal};
pub use monte_carlo::{propagate_mc, MonteCarloReport, MonteCarloSpec, PointEstimate};
pub use time_domain::{propagate_time_domain, TimeDomainEngine};

use num_complex::Complex64;

use crate::error::Result;
use crate::spectrum::{FrequencyGrid, JointAmplitudeGrid};

/// Something that can produce an output amplitude grid.
pub trait JsaEngine: Sync {
    fn evaluate(&self, grid: &FrequencyGrid) -> Result<JointAmplitudeGrid>;

    /// Output amplitude at a single point, frequencies in FSR units.
    fn amplitude(&self, nu_s: f64, nu_i: f64) -> Result<Complex64> {
        Ok(self.evaluate(&FrequencyGrid::point(nu_s, nu_i))?.values[[0, 0]])
    }
}
