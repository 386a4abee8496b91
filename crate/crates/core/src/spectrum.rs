//! Units, frequency grids and the analytic input biphoton.
//!
//! Time is measured in cavity roundtrips (`T_R = 1`). Public frequency axes are
//! in free-spectral-range units `nu = omega / FSR`; everything internal works in
//! angular frequency.

use std::f64::consts::TAU;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cavity roundtrip time; the time unit.
pub const ROUNDTRIP_TIME: f64 = 1.0;

/// Free spectral range in angular frequency, `2 pi / T_R`.
pub const FSR: f64 = TAU / ROUNDTRIP_TIME;

#[inline]
pub fn to_angular(nu: f64) -> f64 {
    nu * FSR
}

#[inline]
pub fn to_fsr(omega: f64) -> f64 {
    omega / FSR
}

/// Unnormalized `sin(x)/x`, with a series branch near the removable singularity.
#[inline]
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Anything that can be evaluated as a joint spectral amplitude in angular frequency.
pub trait JointSpectralAmplitude: Sync {
    fn amplitude(&self, omega_s: f64, omega_i: f64) -> Complex64;

    /// Angular half-width beyond which the amplitude is considered tail.
    fn bandwidth_hint(&self) -> Option<f64> {
        None
    }
}

/// Double-sinc biphoton, time-limited to a rotated box of mean time
/// `tau_s +- tau1/2` and time difference `+- tau2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBiphoton")]
pub struct BiphotonDoubleSinc {
    tau1: f64,
    tau2: f64,
    tau_s: f64,
}

#[derive(Deserialize)]
struct RawBiphoton {
    tau1: f64,
    tau2: f64,
    tau_s: f64,
}

impl TryFrom<RawBiphoton> for BiphotonDoubleSinc {
    type Error = Error;

    fn try_from(raw: RawBiphoton) -> Result<Self> {
        Self::new(raw.tau1, raw.tau2, raw.tau_s)
    }
}

impl BiphotonDoubleSinc {
    pub fn new(tau1: f64, tau2: f64, tau_s: f64) -> Result<Self> {
        if !(tau1.is_finite() && tau1 > 0.0) {
            return Err(Error::invalid("tau1", format!("must be finite and > 0, got {tau1}")));
        }
        if !(tau2.is_finite() && tau2 > 0.0) {
            return Err(Error::invalid("tau2", format!("must be finite and > 0, got {tau2}")));
        }
        if !tau_s.is_finite() {
            return Err(Error::invalid("tau_s", "must be finite"));
        }
        Ok(Self { tau1, tau2, tau_s })
    }

    pub fn tau1(&self) -> f64 {
        self.tau1
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    pub fn tau_s(&self) -> f64 {
        self.tau_s
    }

    pub fn with_tau_s(&self, tau_s: f64) -> Result<Self> {
        Self::new(self.tau1, self.tau2, tau_s)
    }

    /// `sinc[(ws+wi) tau1/2] sinc[(ws-wi) tau2/2] exp(-i (ws+wi) tau_s)`.
    pub fn freq_amplitude(&self, omega_s: f64, omega_i: f64) -> Complex64 {
        let sum = omega_s + omega_i;
        let diff = omega_s - omega_i;
        let magnitude = sinc(0.5 * sum * self.tau1) * sinc(0.5 * diff * self.tau2);
        Complex64::from_polar(1.0, -sum * self.tau_s) * magnitude
    }

    /// Height of the time-domain indicator box, `1 / (2 tau1 tau2)`.
    pub fn time_density(&self) -> f64 {
        1.0 / (2.0 * self.tau1 * self.tau2)
    }

    pub fn time_amplitude(&self, t_s: f64, t_i: f64) -> f64 {
        let mean = 0.5 * (t_s + t_i);
        let diff = t_s - t_i;
        if (mean - self.tau_s).abs() <= 0.5 * self.tau1 && diff.abs() <= self.tau2 {
            self.time_density()
        } else {
            0.0
        }
    }

    /// Range of the mean time `(t_s + t_i) / 2`.
    pub fn mean_range(&self) -> (f64, f64) {
        (self.tau_s - 0.5 * self.tau1, self.tau_s + 0.5 * self.tau1)
    }

    /// Range of the time difference `t_s - t_i`.
    pub fn diff_range(&self) -> (f64, f64) {
        (-self.tau2, self.tau2)
    }

    /// Range of either photon's arrival time.
    pub fn time_support(&self) -> (f64, f64) {
        let half = 0.5 * (self.tau1 + self.tau2);
        (self.tau_s - half, self.tau_s + half)
    }

    /// `int int |psi_t|^2 dt_s dt_i`, equal to the box height.
    pub fn energy(&self) -> f64 {
        self.time_density()
    }

    pub fn is_contained_in(&self, start: f64, end: f64) -> bool {
        let (lo, hi) = self.time_support();
        lo >= start && hi <= end
    }
}

impl JointSpectralAmplitude for BiphotonDoubleSinc {
    fn amplitude(&self, omega_s: f64, omega_i: f64) -> Complex64 {
        self.freq_amplitude(omega_s, omega_i)
    }

    fn bandwidth_hint(&self) -> Option<f64> {
        Some(TAU * (1.0 / self.tau1).max(1.0 / self.tau2))
    }
}

/// A strictly increasing set of sample positions in FSR units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyAxis {
    positions: Vec<f64>,
    spacing: Option<f64>,
}

impl FrequencyAxis {
    /// `n` samples symmetric about `center`. With `n` odd and integer `center`,
    /// the bin center is sampled exactly. Positions are computed directly from
    /// the index so they carry no accumulated drift.
    pub fn uniform(center: f64, half_width: f64, n: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::invalid("half_width", format!("must be > 0, got {half_width}")));
        }
        if n < 2 {
            return Err(Error::invalid("samples", "need at least two samples"));
        }
        if !center.is_finite() {
            return Err(Error::invalid("center", "must be finite"));
        }
        let span = 2.0 * half_width;
        let denom = (n - 1) as f64;
        let positions = (0..n)
            .map(|k| {
                let offset = 2.0 * k as f64 - denom;
                center + offset * half_width / denom
            })
            .collect();
        Ok(Self {
            positions,
            spacing: Some(span / denom),
        })
    }

    pub fn single(position: f64) -> Self {
        Self {
            positions: vec![position],
            spacing: None,
        }
    }

    pub fn from_positions(positions: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("positions", "axis is empty"));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("positions", "non-finite position"));
        }
        if positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("positions", "must be strictly increasing"));
        }
        let spacing = if positions.len() >= 2 {
            let h = positions[1] - positions[0];
            let uniform = positions
                .windows(2)
                .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-12 * h.abs().max(1.0));
            uniform.then_some(h)
        } else {
            None
        };
        Ok(Self { positions, spacing })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn spacing(&self) -> Option<f64> {
        self.spacing
    }

    pub fn is_uniform(&self) -> bool {
        self.spacing.is_some()
    }

    pub fn angular(&self) -> Vec<f64> {
        self.positions.iter().map(|&nu| to_angular(nu)).collect()
    }

    /// Index of an exact sample, if present.
    pub fn index_of(&self, nu: f64) -> Option<usize> {
        let tol = 1e-9 * self.spacing.unwrap_or(1.0);
        self.positions.iter().position(|&p| (p - nu).abs() <= tol)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub signal: FrequencyAxis,
    pub idler: FrequencyAxis,
}

impl FrequencyGrid {
    pub fn new(signal: FrequencyAxis, idler: FrequencyAxis) -> Self {
        Self { signal, idler }
    }

    /// Square grid of `n x n` samples centered on `(center_s, center_i)`.
    pub fn square(center_s: f64, center_i: f64, half_width: f64, n: usize) -> Result<Self> {
        Ok(Self {
            signal: FrequencyAxis::uniform(center_s, half_width, n)?,
            idler: FrequencyAxis::uniform(center_i, half_width, n)?,
        })
    }

    pub fn point(nu_s: f64, nu_i: f64) -> Self {
        Self {
            signal: FrequencyAxis::single(nu_s),
            idler: FrequencyAxis::single(nu_i),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.signal.len(), self.idler.len())
    }

    pub fn is_uniform(&self) -> bool {
        self.signal.is_uniform() && self.idler.is_uniform()
    }
}

/// Which engine produced a grid and with what settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case")]
pub enum Provenance {
    Input {
        model: BiphotonDoubleSinc,
    },
    Analytic {
        model: BiphotonDoubleSinc,
        r2: f64,
        loss_db: f64,
    },
    TimeDomain {
        model: BiphotonDoubleSinc,
        r2: f64,
        loss_db: f64,
        profile: String,
        replica_sum: String,
        nodes_mean: usize,
        nodes_diff: usize,
        truncation_bound: f64,
        convergence_delta: Option<f64>,
    },
    MonteCarlo {
        model: BiphotonDoubleSinc,
        r2: f64,
        loss_db: f64,
        samples_per_point: usize,
        batches: usize,
        half_width_fsr: f64,
        seed: u64,
    },
    Synthetic,
}

/// Complex amplitudes on a frequency grid, indexed `[signal, idler]`.
#[derive(Clone, Debug)]
pub struct JointAmplitudeGrid {
    pub grid: FrequencyGrid,
    pub values: Array2<Complex64>,
    pub provenance: Provenance,
}

impl JointAmplitudeGrid {
    pub fn new(grid: FrequencyGrid, values: Array2<Complex64>, provenance: Provenance) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(Error::invalid(
                "values",
                format!("shape {:?} does not match grid {:?}", values.dim(), grid.shape()),
            ));
        }
        Ok(Self {
            grid,
            values,
            provenance,
        })
    }

    pub fn from_fn<F>(grid: FrequencyGrid, provenance: Provenance, f: F) -> Self
    where
        F: Fn(f64, f64) -> Complex64,
    {
        let ws = grid.signal.angular();
        let wi = grid.idler.angular();
        let values = Array2::from_shape_fn(grid.shape(), |(s, i)| f(ws[s], wi[i]));
        Self {
            grid,
            values,
            provenance,
        }
    }

    pub fn jsi(&self) -> Array2<f64> {
        self.values.mapv(|v| v.norm_sqr())
    }

    pub fn at(&self, nu_s: f64, nu_i: f64) -> Option<Complex64> {
        let s = self.grid.signal.index_of(nu_s)?;
        let i = self.grid.idler.index_of(nu_i)?;
        Some(self.values[[s, i]])
    }

    /// Largest `|psi(s, i) - psi(i, s)|` over the overlapping square part of the grid.
    pub fn swap_asymmetry(&self) -> f64 {
        let (ns, ni) = self.values.dim();
        let n = ns.min(ni);
        let mut worst: f64 = 0.0;
        for s in 0..n {
            for i in 0..n {
                worst = worst.max((self.values[[s, i]] - self.values[[i, s]]).norm());
            }
        }
        worst
    }
}

/// The input biphoton sampled on `grid`.
pub fn input_grid(model: &BiphotonDoubleSinc, grid: &FrequencyGrid) -> JointAmplitudeGrid {
    JointAmplitudeGrid::from_fn(grid.clone(), Provenance::Input { model: *model }, |ws, wi| {
        model.freq_amplitude(ws, wi)
    })
}

fn trapezoid_weights(n: usize) -> Vec<f64> {
    let mut w = vec![1.0; n];
    if n > 1 {
        w[0] = 0.5;
        w[n - 1] = 0.5;
    }
    w
}

/// Time-domain energy through Parseval: `(1/2pi)^2 sum |psi|^2 dws dwi` with
/// trapezoid edge weights.
pub fn grid_energy(jsa: &JointAmplitudeGrid) -> Result<f64> {
    let (Some(hs), Some(hi)) = (jsa.grid.signal.spacing(), jsa.grid.idler.spacing()) else {
        return Err(Error::UnsupportedQuadrature(
            "grid energy needs uniform axes with at least two samples".into(),
        ));
    };
    let ws = trapezoid_weights(jsa.grid.signal.len());
    let wi = trapezoid_weights(jsa.grid.idler.len());
    let mut total = 0.0;
    for (s, row) in jsa.values.outer_iter().enumerate() {
        let row_sum: f64 = row.iter().zip(&wi).map(|(v, w)| w * v.norm_sqr()).sum();
        total += ws[s] * row_sum;
    }
    // d(omega) = FSR * d(nu) and FSR / 2pi = 1 / T_R.
    let scale = (FSR * hs / TAU) * (FSR * hi / TAU);
    Ok(total * scale)
}

/// [`grid_energy`] of `grid` without holding it in memory: `eval` is called
/// on strips of at most `strip` signal rows.
pub fn streamed_energy<F>(grid: &FrequencyGrid, strip: usize, mut eval: F) -> Result<f64>
where
    F: FnMut(&FrequencyGrid) -> Result<Array2<Complex64>>,
{
    let (Some(hs), Some(hi)) = (grid.signal.spacing(), grid.idler.spacing()) else {
        return Err(Error::UnsupportedQuadrature(
            "grid energy needs uniform axes with at least two samples".into(),
        ));
    };
    let ws = trapezoid_weights(grid.signal.len());
    let wi = trapezoid_weights(grid.idler.len());
    let mut total = 0.0;
    for (chunk, weights) in grid.signal.positions().chunks(strip.max(1)).zip(ws.chunks(strip.max(1))) {
        let part = FrequencyGrid::new(FrequencyAxis::from_positions(chunk.to_vec())?, grid.idler.clone());
        let values = eval(&part)?;
        for (row, w) in values.outer_iter().zip(weights) {
            total += w * row.iter().zip(&wi).map(|(v, w)| w * v.norm_sqr()).sum::<f64>();
        }
    }
    Ok(total * (FSR * hs / TAU) * (FSR * hi / TAU))
}
