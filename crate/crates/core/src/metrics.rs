//! Figures of merit for frequency-bin combs.
//!
//! A bin `(j, k)` is the square of half-width `w` around `(nu_s, nu_i) = (j, k)`.
//! Its "peak" is the JSI at the exact bin center, and CAR compares the
//! `(0, 0)` and `(0, 1)` centers.

use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cavity::ReplicaKernel;
use crate::error::{Error, Result};
use crate::propagate::JsaEngine;
use crate::quadrature::{BoxRegion, QuadratureSpec, RuleCache};
use crate::spectrum::{BiphotonDoubleSinc, FrequencyAxis, FrequencyGrid, JointAmplitudeGrid, ROUNDTRIP_TIME};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Purity {
    pub purity: f64,
    pub schmidt_number: f64,
}

/// `P = sum s^4 / (sum s^2)^2` over the singular values of `m`.
pub fn purity(m: &Array2<Complex64>) -> Result<Purity> {
    let (rows, cols) = m.dim();
    let mat = DMatrix::from_fn(rows, cols, |r, c| m[[r, c]]);
    let sv = mat.singular_values();
    let norm2: f64 = sv.iter().map(|s| s * s).sum();
    if norm2 == 0.0 || !norm2.is_finite() {
        return Err(Error::ZeroMatrix);
    }
    let p: f64 = sv.iter().map(|s| (s * s / norm2).powi(2)).sum();
    Ok(Purity {
        purity: p,
        schmidt_number: 1.0 / p,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinWindow {
    pub signal_bin: i32,
    pub idler_bin: i32,
    pub half_width: f64,
    pub samples: usize,
}

impl BinWindow {
    pub fn new(signal_bin: i32, idler_bin: i32, half_width: f64, samples: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width <= 0.5) {
            return Err(Error::invalid("half_width", format!("must lie in (0, 0.5], got {half_width}")));
        }
        if samples < 3 || samples.is_multiple_of(2) {
            return Err(Error::invalid("samples", format!("must be odd and >= 3, got {samples}")));
        }
        Ok(Self {
            signal_bin,
            idler_bin,
            half_width,
            samples,
        })
    }

    pub fn centered(signal_bin: i32, idler_bin: i32) -> Self {
        Self {
            signal_bin,
            idler_bin,
            half_width: 0.5,
            samples: 257,
        }
    }

    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::square(self.signal_bin as f64, self.idler_bin as f64, self.half_width, self.samples)
    }

    /// Same window at roughly twice the sampling density.
    pub fn refined(&self) -> Self {
        Self {
            samples: 2 * self.samples - 1,
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Car {
    pub value: f64,
    pub infinite: bool,
    pub center_jsi: f64,
    pub sideband_jsi: f64,
}

pub fn car_from(center_jsi: f64, sideband_jsi: f64) -> Car {
    let infinite = sideband_jsi == 0.0;
    Car {
        value: if infinite { f64::INFINITY } else { center_jsi / sideband_jsi },
        infinite,
        center_jsi,
        sideband_jsi,
    }
}

pub fn car(engine: &dyn JsaEngine) -> Result<Car> {
    let grid = FrequencyGrid::new(FrequencyAxis::single(0.0), FrequencyAxis::from_positions(vec![0.0, 1.0])?);
    let jsi = engine.evaluate(&grid)?.jsi();
    Ok(car_from(jsi[[0, 0]], jsi[[0, 1]]))
}

pub fn peak_jsi(engine: &dyn JsaEngine, signal_bin: i32, idler_bin: i32) -> Result<f64> {
    Ok(engine.amplitude(signal_bin as f64, idler_bin as f64)?.norm_sqr())
}

/// Full width at half maximum of sampled `y(x)`, crossings found by linear
/// interpolation.
pub fn fwhm_of_samples(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = y.len();
    if n < 3 || x.len() != n {
        return Err(Error::invalid("samples", "need at least three matching samples"));
    }
    let peak = (0..n).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap();
    if peak == 0 || peak == n - 1 {
        return Err(Error::NoHalfMaxCrossing("maximum lies on the window edge"));
    }
    let half = 0.5 * y[peak];
    let cross = |a: usize, b: usize| x[a] + (half - y[a]) / (y[b] - y[a]) * (x[b] - x[a]);
    let left = (0..peak)
        .rev()
        .find(|&j| y[j] <= half)
        .map(|j| cross(j, j + 1))
        .ok_or(Error::NoHalfMaxCrossing("left"))?;
    let right = (peak + 1..n)
        .find(|&j| y[j] <= half)
        .map(|j| cross(j - 1, j))
        .ok_or(Error::NoHalfMaxCrossing("right"))?;
    Ok(right - left)
}

/// Signal marginal `M(nu_s) = int |psi|^2 dnu_i` (trapezoid over the idler axis).
pub fn signal_marginal(jsa: &JointAmplitudeGrid) -> Vec<f64> {
    let idler = jsa.grid.idler.positions();
    jsa.values
        .outer_iter()
        .map(|row| {
            if idler.len() == 1 {
                return row[0].norm_sqr();
            }
            idler
                .windows(2)
                .zip(row.iter().zip(row.iter().skip(1)))
                .map(|(x, (a, b))| 0.5 * (x[1] - x[0]) * (a.norm_sqr() + b.norm_sqr()))
                .sum()
        })
        .collect()
}

/// FWHM of the signal marginal, in FSR units.
pub fn marginal_fwhm(jsa: &JointAmplitudeGrid) -> Result<f64> {
    fwhm_of_samples(jsa.grid.signal.positions(), &signal_marginal(jsa))
}

/// Resolution of bin metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub half_width: f64,
    pub samples: usize,
    /// Signal half-width and sample count of the FWHM zoom grid.
    pub zoom_half_width: f64,
    pub zoom_samples: usize,
    /// Recompute at doubled resolution and report the change.
    pub convergence: bool,
}

impl Default for BinSpec {
    fn default() -> Self {
        Self {
            half_width: 0.5,
            samples: 257,
            zoom_half_width: 0.1,
            zoom_samples: 401,
            convergence: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinMetrics {
    pub signal_bin: i32,
    pub idler_bin: i32,
    pub purity: f64,
    pub schmidt_number: f64,
    pub fwhm_fsr: f64,
    pub peak_jsi: f64,
    pub purity_delta: Option<f64>,
    pub fwhm_delta: Option<f64>,
}

fn zoom_grid(window: &BinWindow, half_width: f64, samples: usize) -> Result<FrequencyGrid> {
    Ok(FrequencyGrid::new(
        FrequencyAxis::uniform(window.signal_bin as f64, half_width, samples)?,
        window.grid()?.idler,
    ))
}

fn bin_purity(engine: &dyn JsaEngine, window: &BinWindow) -> Result<f64> {
    Ok(purity(&engine.evaluate(&window.grid()?)?.values)?.purity)
}

fn bin_fwhm(engine: &dyn JsaEngine, window: &BinWindow, spec: &BinSpec, samples: usize) -> Result<f64> {
    marginal_fwhm(&engine.evaluate(&zoom_grid(window, spec.zoom_half_width, samples)?)?)
}

pub fn bin_metrics(engine: &dyn JsaEngine, signal_bin: i32, idler_bin: i32, spec: &BinSpec) -> Result<BinMetrics> {
    let window = BinWindow::new(signal_bin, idler_bin, spec.half_width, spec.samples)?;
    let p = bin_purity(engine, &window)?;
    let fwhm = bin_fwhm(engine, &window, spec, spec.zoom_samples)?;
    let (purity_delta, fwhm_delta) = if spec.convergence {
        let fine = window.refined();
        let p2 = bin_purity(engine, &fine)?;
        let f2 = bin_fwhm(engine, &fine, spec, 2 * spec.zoom_samples - 1)?;
        (Some((p2 - p).abs()), Some((f2 - fwhm).abs()))
    } else {
        (None, None)
    };
    Ok(BinMetrics {
        signal_bin,
        idler_bin,
        purity: p,
        schmidt_number: 1.0 / p,
        fwhm_fsr: fwhm,
        peak_jsi: peak_jsi(engine, signal_bin, idler_bin)?,
        purity_delta,
        fwhm_delta,
    })
}

/// How output energy is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluxPath {
    /// Per-entry survival only; ignores interference between replica trains
    /// launched one or more roundtrips apart.
    Fast,
    /// Adds those cross terms, which makes it exact.
    ReplicaOverlap,
}

fn flux_term(
    model: &BiphotonDoubleSinc,
    kernel: &ReplicaKernel,
    spec: &QuadratureSpec,
    rules: &mut RuleCache,
    shift: (i64, i64),
) -> f64 {
    let (ds, di) = (shift.0 as f64, shift.1 as f64);
    let (m0, m1) = model.mean_range();
    let (d0, d1) = model.diff_range();
    let dm = 0.5 * (ds + di);
    let dd = ds - di;
    let mean = (m0.max(m0 - dm), m1.min(m1 - dm));
    let diff = (d0.max(d0 - dd), d1.min(d1 - dd));
    let (lo, hi) = model.time_support();
    let mut breakpoints = kernel.entry_breakpoints(lo - 2.0, hi + 2.0);
    let base = breakpoints.clone();
    for b in base {
        breakpoints.push(b - ds);
        breakpoints.push(b - di);
    }
    let region = BoxRegion {
        mean,
        diff,
        window: (0.0, kernel.profile.capture_end().unwrap_or(f64::INFINITY)),
        breakpoints,
    };
    if region.is_empty() {
        return 0.0;
    }
    let density = model.time_density();
    region
        .nodes(spec, rules)
        .integrate(|ts, ti| kernel.overlap(ts, shift.0) * kernel.overlap(ti, shift.1))
        * density
        * density
}

/// Output-port energy `int int |psi_out^t|^2`.
pub fn total_flux(model: &BiphotonDoubleSinc, kernel: &ReplicaKernel, path: FluxPath, spec: &QuadratureSpec) -> f64 {
    let mut rules = RuleCache::default();
    let reach = match path {
        FluxPath::Fast => 0,
        FluxPath::ReplicaOverlap => (model.tau1() + model.tau2()).ceil() as i64 + 1,
    };
    let mut total = 0.0;
    for ds in -reach..=reach {
        for di in -reach..=reach {
            total += flux_term(model, kernel, spec, &mut rules, (ds, di));
        }
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxReport {
    pub fast: f64,
    pub exact: f64,
    pub relative_discrepancy: f64,
}

pub fn flux_report(model: &BiphotonDoubleSinc, kernel: &ReplicaKernel, spec: &QuadratureSpec) -> FluxReport {
    let fast = total_flux(model, kernel, FluxPath::Fast, spec);
    let exact = total_flux(model, kernel, FluxPath::ReplicaOverlap, spec);
    FluxReport {
        fast,
        exact,
        relative_discrepancy: if exact == 0.0 { 0.0 } else { (fast - exact).abs() / exact },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauOptimum {
    pub tau_s: f64,
    pub flux: f64,
    pub bracket: f64,
    pub evaluations: usize,
    /// Flat-top interval when the maximum is a plateau.
    pub plateau: Option<(f64, f64)>,
}

const GOLDEN_TOL: f64 = 1e-4;
const PLATEAU_REL: f64 = 1e-9;

/// Golden-section search for the `tau_s` that maximizes output flux. When
/// the maximum is a plateau wider than the bracket, its midpoint is returned.
pub fn optimize_tau_s(
    model: &BiphotonDoubleSinc,
    kernel: &ReplicaKernel,
    bounds: (f64, f64),
    path: FluxPath,
    spec: &QuadratureSpec,
) -> Result<TauOptimum> {
    let (lo, hi) = bounds;
    let max_shift = 1.5 * ROUNDTRIP_TIME;
    if !(lo >= 0.0 && hi <= max_shift && lo < hi) {
        return Err(Error::invalid(
            "bounds",
            format!("need 0 <= lo < hi <= {max_shift}, got ({lo}, {hi})"),
        ));
    }
    let mut evaluations = 0usize;
    let mut flux = |tau_s: f64| -> Result<f64> {
        evaluations += 1;
        let v = total_flux(&model.with_tau_s(tau_s)?, kernel, path, spec);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteObjective(tau_s))
        }
    };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (flux(c)?, flux(d)?);
    while b - a > GOLDEN_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = flux(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = flux(d)?;
        }
    }
    let bracket = b - a;
    let (best, f_best) = if fc >= fd { (c, fc) } else { (d, fd) };

    let threshold = f_best - PLATEAU_REL * f_best.abs();
    let mut edge = |inside: f64, outside: f64| -> Result<f64> {
        if flux(outside)? >= threshold {
            return Ok(outside);
        }
        let (mut i, mut o) = (inside, outside);
        while (i - o).abs() > 1e-7 {
            let mid = 0.5 * (i + o);
            if flux(mid)? >= threshold {
                i = mid;
            } else {
                o = mid;
            }
        }
        Ok(i)
    };
    let left = edge(best, lo)?;
    let right = edge(best, hi)?;
    let (tau_s, flux_at, plateau) = if right - left > GOLDEN_TOL {
        let mid = 0.5 * (left + right);
        (mid, flux(mid)?, Some((left, right)))
    } else {
        (best, f_best, None)
    };
    Ok(TauOptimum {
        tau_s,
        flux: flux_at,
        bracket,
        evaluations,
        plateau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::{CavityParams, ReplicaSum, SwitchingProfile};
    use approx::assert_relative_eq;

    fn instantaneous(r2: f64) -> ReplicaKernel {
        ReplicaKernel::new(
            CavityParams::lossless(r2).unwrap(),
            SwitchingProfile::instantaneous(),
            ReplicaSum::Resummed,
        )
        .unwrap()
    }

    #[test]
    fn purity_examples() {
        let u = [1.0, -2.0, 0.5];
        let v = [0.3, 1.0, 2.0, -1.0];
        let rank1 = Array2::from_shape_fn((3, 4), |(r, c)| Complex64::new(u[r] * v[c], 0.5 * u[r] * v[c]));
        assert!((purity(&rank1).unwrap().purity - 1.0).abs() < 1e-10);

        let mut two = Array2::zeros((2, 2));
        two[[0, 0]] = Complex64::new(1.0 / 2f64.sqrt(), 0.0);
        two[[1, 1]] = Complex64::new(1.0 / 2f64.sqrt(), 0.0);
        let p = purity(&two).unwrap();
        assert_relative_eq!(p.purity, 0.5, epsilon = 1e-14);
        assert_relative_eq!(p.schmidt_number, 2.0, epsilon = 1e-12);

        assert!(matches!(purity(&Array2::zeros((3, 3))), Err(Error::ZeroMatrix)));
    }

    #[test]
    fn car_definition() {
        let c = car_from(5.0, 5.0);
        assert_eq!(c.value, 1.0);
        let c = car_from(5.0, 0.0);
        assert!(c.infinite && c.value.is_infinite());
    }

    #[test]
    fn lorentzian_fwhm() {
        let gamma = 0.013;
        for n in [201usize, 401, 801] {
            let x: Vec<f64> = (0..n).map(|k| -0.1 + 0.2 * k as f64 / (n - 1) as f64).collect();
            let y: Vec<f64> = x.iter().map(|x| 1.0 / (x * x + gamma * gamma)).collect();
            let w = fwhm_of_samples(&x, &y).unwrap();
            assert!((w - 2.0 * gamma).abs() <= 0.2 / (n - 1) as f64);
        }
        let x = [0.0, 1.0, 2.0, 3.0];
        assert!(fwhm_of_samples(&x, &[1.0, 2.0, 3.0, 4.0]).is_err());
        assert!(fwhm_of_samples(&x, &[3.0, 4.0, 3.9, 3.8]).is_err());
    }

    #[test]
    fn bin_window_validation() {
        assert!(BinWindow::new(0, 0, 0.6, 257).is_err());
        assert!(BinWindow::new(0, 0, 0.5, 256).is_err());
        let w = BinWindow::centered(1, -1);
        let g = w.grid().unwrap();
        assert_eq!(g.signal.index_of(1.0), Some(128));
        assert_eq!(g.idler.index_of(-1.0), Some(128));
    }

    #[test]
    fn contained_flux_is_conserved() {
        let model = BiphotonDoubleSinc::new(0.7, 0.1, 0.5).unwrap();
        let spec = QuadratureSpec::default();
        let report = flux_report(&model, &instantaneous(0.95), &spec);
        assert_relative_eq!(report.fast, model.energy(), max_relative = 1e-12);
        assert_relative_eq!(report.exact, model.energy(), max_relative = 1e-12);
    }

    #[test]
    fn open_mirror_passes_single_transit() {
        let model = BiphotonDoubleSinc::new(0.7, 0.1, 0.5).unwrap();
        let kernel = ReplicaKernel::new(
            CavityParams::lossless(0.9).unwrap(),
            SwitchingProfile::open(),
            ReplicaSum::Resummed,
        )
        .unwrap();
        let t2sq = 1.0 - 0.81;
        let flux = total_flux(&model, &kernel, FluxPath::ReplicaOverlap, &QuadratureSpec::default());
        // each photon leaves with probability t2^2
        assert_relative_eq!(flux, t2sq * t2sq * model.energy(), max_relative = 1e-12);
    }

    #[test]
    fn plateau_midpoint() {
        let model = BiphotonDoubleSinc::new(0.7, 0.1, 0.5).unwrap();
        let opt = optimize_tau_s(
            &model,
            &instantaneous(0.95),
            (0.0, 1.5),
            FluxPath::Fast,
            &QuadratureSpec::default(),
        )
        .unwrap();
        let (l, r) = opt.plateau.unwrap();
        assert!((l - 0.4).abs() < 1e-5 && (r - 0.6).abs() < 1e-5, "{l} {r}");
        assert!((opt.tau_s - 0.5).abs() < 1e-5);
        assert!(opt.bracket <= 1e-3);
        assert!(optimize_tau_s(&model, &instantaneous(0.95), (0.0, 2.0), FluxPath::Fast, &QuadratureSpec::default()).is_err());
    }
}
