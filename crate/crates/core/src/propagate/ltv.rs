//! Single-field input-output relation `Y(w) = int G(w, tau) x(tau) dtau`,
//! the one-photon counterpart of the biphoton engines.

use num_complex::Complex64;

use crate::cavity::ReplicaKernel;
use crate::error::{Error, Result};
use crate::quadrature::{panel_edges, QuadratureRule, RuleCache};
use crate::spectrum::FrequencyAxis;

const NODES_PER_PANEL: usize = 8;

/// Piecewise-constant signal: cell `k` covers `[start + k dt, start + (k+1) dt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledSignal {
    pub start: f64,
    pub step: f64,
    pub values: Vec<Complex64>,
}

impl SampledSignal {
    pub fn new(start: f64, step: f64, values: Vec<Complex64>) -> Result<Self> {
        if !(start.is_finite() && step.is_finite() && step > 0.0) {
            return Err(Error::invalid("step", "need a finite start and a positive step"));
        }
        Ok(Self { start, step, values })
    }

    // negated so NaN endpoints are rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn from_fn(start: f64, end: f64, cells: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        if cells == 0 || !(end > start) {
            return Err(Error::invalid("cells", "need at least one cell on a non-empty interval"));
        }
        let step = (end - start) / cells as f64;
        let values = (0..cells).map(|k| f(start + (k as f64 + 0.5) * step)).collect();
        Self::new(start, step, values)
    }

    pub fn end(&self) -> f64 {
        self.start + self.step * self.values.len() as f64
    }

    /// `X(w) = int x(t) e^(-i w t) dt`, exact for the piecewise-constant cells.
    pub fn spectrum(&self, omega: f64) -> Complex64 {
        self.values
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let a = self.start + k as f64 * self.step;
                x * cell_exp(omega, a, a + self.step)
            })
            .sum()
    }
}

/// `int_a^b e^(-i w t) dt`.
fn cell_exp(omega: f64, a: f64, b: f64) -> Complex64 {
    let h = b - a;
    let half = 0.5 * omega * h;
    Complex64::from_polar(h * crate::spectrum::sinc(half), -omega * (a + 0.5 * h))
}

pub fn apply_ltv_1d(x: &SampledSignal, kernel: &ReplicaKernel, freqs: &FrequencyAxis) -> Result<Vec<Complex64>> {
    let window_end = kernel.profile.capture_end().unwrap_or(f64::INFINITY);
    for (k, v) in x.values.iter().enumerate() {
        if *v == Complex64::new(0.0, 0.0) {
            continue;
        }
        let a = x.start + k as f64 * x.step;
        let b = a + x.step;
        if a < -1e-12 || b > window_end + 1e-12 {
            let time = if a < 0.0 { a } else { b };
            return Err(Error::SupportViolation { time, window_end });
        }
    }

    let mut cuts: Vec<f64> = (0..=x.values.len()).map(|k| x.start + k as f64 * x.step).collect();
    cuts.extend(kernel.entry_breakpoints(x.start, x.end()));
    let edges = panel_edges(x.start, x.end(), cuts);
    let mut rules = RuleCache::default();
    let mut nodes = Vec::new();
    for pair in edges.windows(2) {
        rules.push_panel(QuadratureRule::GaussLegendre, pair[0], pair[1], NODES_PER_PANEL, &mut nodes);
    }
    let weighted: Vec<(f64, Complex64, _)> = nodes
        .iter()
        .map(|&(t, w)| {
            let cell = (((t - x.start) / x.step).floor() as usize).min(x.values.len() - 1);
            (t, x.values[cell] * w, kernel.entry(t))
        })
        .collect();

    let omegas = freqs.angular();
    Ok(crate::par_map(omegas.len(), |o| {
        let f = kernel.factor(omegas[o]);
        weighted.iter().map(|(t, xw, e)| kernel.response(&f, *t, e) * xw).sum()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::{CavityParams, ReplicaSum, SwitchingProfile};
    use approx::assert_relative_eq;

    fn kernel(r2: f64) -> ReplicaKernel {
        ReplicaKernel::new(
            CavityParams::lossless(r2).unwrap(),
            SwitchingProfile::instantaneous(),
            ReplicaSum::Resummed,
        )
        .unwrap()
    }

    #[test]
    fn open_cavity_delays_the_input() {
        let x = SampledSignal::from_fn(0.1, 0.9, 40, |t| Complex64::new(t.sin(), t * t)).unwrap();
        let axis = FrequencyAxis::uniform(0.0, 3.0, 13).unwrap();
        let y = apply_ltv_1d(&x, &kernel(0.0), &axis).unwrap();
        for (w, yv) in axis.angular().iter().zip(&y) {
            let expected = x.spectrum(*w) * Complex64::from_polar(1.0, -0.5 * w);
            assert!((yv - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn rectangular_pulse_is_enhanced_on_resonance() {
        let x = SampledSignal::new(0.0, 0.01, vec![Complex64::new(1.0, 0.0); 100]).unwrap();
        let axis = FrequencyAxis::from_positions(vec![-1.0, 0.0, 0.5, 1.0]).unwrap();
        let y = apply_ltv_1d(&x, &kernel(0.95), &axis).unwrap();
        // |F(0)|^2 T_R^2 = 39
        assert_relative_eq!(y[1].norm_sqr(), 39.0, max_relative = 1e-12);
        assert!(y[0].norm_sqr() < 1e-20 && y[3].norm_sqr() < 1e-20);
        assert!(y[2].norm_sqr() < 1.0);
    }

    #[test]
    fn short_pulse_traces_the_airy_envelope() {
        let cav = CavityParams::lossless(0.9).unwrap();
        let dt = 1e-4;
        let x = SampledSignal::new(0.4, dt, vec![Complex64::new(1.0 / dt, 0.0)]).unwrap();
        let axis = FrequencyAxis::uniform(0.0, 1.0, 21).unwrap();
        let y = apply_ltv_1d(&x, &kernel(0.9), &axis).unwrap();
        for (w, yv) in axis.angular().iter().zip(&y) {
            let expected = cav.t2() / (Complex64::new(1.0, 0.0) - Complex64::from_polar(0.9, -w)).norm();
            assert_relative_eq!(yv.norm(), expected, max_relative = 1e-6);
        }
    }

    #[test]
    fn support_outside_window_is_rejected() {
        let x = SampledSignal::new(0.5, 0.1, vec![Complex64::new(1.0, 0.0); 8]).unwrap();
        let axis = FrequencyAxis::single(0.0);
        assert!(matches!(
            apply_ltv_1d(&x, &kernel(0.9), &axis),
            Err(Error::SupportViolation { .. })
        ));
    }
}
