//! Uniform-sampling estimate of
//! `psi_out(ws, wi) = int int H(ws, ws') H(wi, wi') psi_in(ws', wi') dws' dwi'`
//! over the truncated square `[-Omega, Omega]^2`.
//!
//! Every `(point, batch)` pair draws from its own ChaCha stream derived from
//! the master seed, so results do not depend on scheduling.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cavity::CavityParams;
use crate::error::{Error, Result};
use crate::spectrum::{to_angular, JointSpectralAmplitude, FSR};

pub const MIN_BATCHES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSpec {
    pub samples_per_point: usize,
    pub batches: usize,
    /// Truncation half-width `Omega` in FSR units.
    pub half_width_fsr: f64,
    pub seed: u64,
}

impl Default for MonteCarloSpec {
    fn default() -> Self {
        Self {
            samples_per_point: 1 << 16,
            batches: 16,
            half_width_fsr: 20.0,
            seed: 0,
        }
    }
}

impl MonteCarloSpec {
    pub fn validate(&self) -> Result<()> {
        if self.batches < MIN_BATCHES {
            return Err(Error::invalid("batches", format!("need at least {MIN_BATCHES}, got {}", self.batches)));
        }
        if self.samples_per_point < self.batches {
            return Err(Error::invalid("samples_per_point", "fewer samples than batches"));
        }
        if !(self.half_width_fsr.is_finite() && self.half_width_fsr > 0.0) {
            return Err(Error::invalid("half_width_fsr", "must be finite and > 0"));
        }
        Ok(())
    }

    pub fn samples_per_batch(&self) -> usize {
        self.samples_per_point.div_ceil(self.batches)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub nu_s: f64,
    pub nu_i: f64,
    pub value: Complex64,
    /// Two-sided 95% half-widths of the real and imaginary parts.
    pub ci_re: f64,
    pub ci_im: f64,
}

impl PointEstimate {
    pub fn within(&self, exact: Complex64, k: f64) -> bool {
        (self.value.re - exact.re).abs() <= k * self.ci_re && (self.value.im - exact.im).abs() <= k * self.ci_im
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub spec: MonteCarloSpec,
    pub estimates: Vec<PointEstimate>,
    pub warnings: Vec<String>,
}

pub fn propagate_mc<J: JointSpectralAmplitude>(
    input: &J,
    cavity: &CavityParams,
    points: &[(f64, f64)],
    spec: &MonteCarloSpec,
) -> Result<MonteCarloReport> {
    spec.validate()?;
    let omega = spec.half_width_fsr * FSR;
    let mut warnings = Vec::new();
    if let Some(bw) = input.bandwidth_hint() {
        if omega <= bw {
            warnings.push(format!(
                "truncation half-width {:.3} FSR does not exceed the input bandwidth {:.3} FSR",
                spec.half_width_fsr,
                bw / FSR
            ));
        }
    }
    let per_batch = spec.samples_per_batch();
    let volume = (2.0 * omega) * (2.0 * omega);
    let nb = spec.batches;
    let crit = StudentsT::new(0.0, 1.0, (nb - 1) as f64)
        .expect("degrees of freedom are positive")
        .inverse_cdf(0.975);

    let estimates = crate::par_map(points.len(), |p| {
        let (nu_s, nu_i) = points[p];
        let (ws, wi) = (to_angular(nu_s), to_angular(nu_i));
        let batch_means: Vec<Complex64> = (0..nb)
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream((p * nb + b) as u64);
                let mut acc = Complex64::new(0.0, 0.0);
                for _ in 0..per_batch {
                    let xs = rng.random_range(-omega..omega);
                    let xi = rng.random_range(-omega..omega);
                    acc += cavity.kernel(ws, xs) * cavity.kernel(wi, xi) * input.amplitude(xs, xi);
                }
                acc * (volume / per_batch as f64)
            })
            .collect();
        let mean = batch_means.iter().sum::<Complex64>() / nb as f64;
        let var = |part: fn(&Complex64) -> f64| {
            let m = part(&mean);
            batch_means.iter().map(|v| (part(v) - m).powi(2)).sum::<f64>() / (nb - 1) as f64
        };
        let scale = crit / (nb as f64).sqrt();
        PointEstimate {
            nu_s,
            nu_i,
            value: mean,
            ci_re: scale * var(|c| c.re).sqrt(),
            ci_im: scale * var(|c| c.im).sqrt(),
        }
    });
    Ok(MonteCarloReport {
        spec: *spec,
        estimates,
        warnings,
    })
}
