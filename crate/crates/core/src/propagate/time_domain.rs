//! `psi_out(ws, wi) = int int psi_in^t(ts, ti) G(ws, ts) G(wi, ti) dts dti`
//! where `G(w, tau)` is the spectrum of the replica train launched at `tau`.
//! The box integral is iterated so that, for each outer node `p`, the idler
//! factor collapses to `V[i, p] = sum_q w_q G(wi, ti_pq)`; the grid is then a
//! single product `U V^T`.

use ndarray::Array2;
use num_complex::Complex64;

use super::JsaEngine;
use crate::cavity::{EntryResponse, ReplicaKernel, ReplicaSum};
use crate::error::Result;
use crate::quadrature::{BoxNodes, BoxRegion, QuadratureSpec, RuleCache};
use crate::spectrum::{streamed_energy, BiphotonDoubleSinc, FrequencyAxis, FrequencyGrid, JointAmplitudeGrid, Provenance};

pub struct TimeDomainEngine {
    model: BiphotonDoubleSinc,
    kernel: ReplicaKernel,
    spec: QuadratureSpec,
    nodes: BoxNodes,
    outer_entries: Vec<EntryResponse>,
    inner_entries: Vec<EntryResponse>,
}

impl TimeDomainEngine {
    pub fn new(model: BiphotonDoubleSinc, kernel: ReplicaKernel, spec: QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        kernel.profile.validate()?;
        let (lo, hi) = model.time_support();
        let window = (0.0, kernel.profile.capture_end().unwrap_or(f64::INFINITY));
        let region = BoxRegion {
            mean: model.mean_range(),
            diff: model.diff_range(),
            window,
            breakpoints: kernel.entry_breakpoints(lo, hi),
        };
        let nodes = region.nodes(&spec, &mut RuleCache::default());
        let outer_entries = nodes.outer.iter().map(|o| kernel.entry(o.t)).collect();
        let inner_entries = nodes.inner.iter().map(|&(t, _)| kernel.entry(t)).collect();
        Ok(Self {
            model,
            kernel,
            spec,
            nodes,
            outer_entries,
            inner_entries,
        })
    }

    pub fn model(&self) -> &BiphotonDoubleSinc {
        &self.model
    }

    pub fn kernel(&self) -> &ReplicaKernel {
        &self.kernel
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    /// Neglected replica amplitude relative to `t2`; zero when resummed.
    pub fn truncation_bound(&self) -> f64 {
        match self.kernel.sum {
            ReplicaSum::Resummed => 0.0,
            ReplicaSum::Truncated { max_bounce } => self.kernel.cavity.tail_bound(max_bounce),
        }
    }

    fn signal_rows(&self, axis: &FrequencyAxis) -> Array2<Complex64> {
        let w = axis.angular();
        let rows = crate::par_map(w.len(), |s| {
            let f = self.kernel.factor(w[s]);
            self.nodes
                .outer
                .iter()
                .zip(&self.outer_entries)
                .map(|(o, e)| self.kernel.response(&f, o.t, e))
                .collect()
        });
        stack_rows(rows, self.nodes.outer.len())
    }

    fn idler_rows(&self, axis: &FrequencyAxis) -> Array2<Complex64> {
        let density = self.model.time_density();
        let w = axis.angular();
        let rows = crate::par_map(w.len(), |i| {
            let f = self.kernel.factor(w[i]);
            self.nodes
                .outer
                .iter()
                .map(|o| {
                    let inner: Complex64 = self.nodes.inner[o.inner.clone()]
                        .iter()
                        .zip(&self.inner_entries[o.inner.clone()])
                        .map(|(&(t, wq), e)| self.kernel.response(&f, t, e) * wq)
                        .sum();
                    inner * (o.weight * density)
                })
                .collect()
        });
        stack_rows(rows, self.nodes.outer.len())
    }

    pub fn values(&self, grid: &FrequencyGrid) -> Array2<Complex64> {
        let v = self.idler_rows(&grid.idler);
        self.values_with(&grid.signal, &v)
    }

    fn values_with(&self, signal: &FrequencyAxis, idler_rows: &Array2<Complex64>) -> Array2<Complex64> {
        self.signal_rows(signal).dot(&idler_rows.t())
    }

    /// Same as `grid_energy(&self.evaluate(grid)?)` but evaluated in strips
    /// of `strip` signal rows, so wide grids never sit in memory at once.
    pub fn energy(&self, grid: &FrequencyGrid, strip: usize) -> Result<f64> {
        let v = self.idler_rows(&grid.idler);
        streamed_energy(grid, strip, |part| Ok(self.values_with(&part.signal, &v)))
    }

    fn provenance(&self, convergence_delta: Option<f64>) -> Provenance {
        Provenance::TimeDomain {
            model: self.model,
            r2: self.kernel.cavity.r2(),
            loss_db: self.kernel.cavity.loss_db(),
            profile: self.kernel.profile.label(),
            replica_sum: self.kernel.sum.label(),
            nodes_mean: self.spec.nodes_mean,
            nodes_diff: self.spec.nodes_diff,
            truncation_bound: self.truncation_bound(),
            convergence_delta,
        }
    }

    /// Largest change of `psi_out` relative to its largest magnitude when
    /// both node counts are doubled, probed on a 5 x 5 subset of `grid` plus
    /// the point nearest the origin.
    pub fn convergence_delta(&self, grid: &FrequencyGrid) -> Result<f64> {
        let probe = FrequencyGrid::new(probe_axis(&grid.signal)?, probe_axis(&grid.idler)?);
        let fine = TimeDomainEngine::new(self.model, self.kernel.clone(), self.spec.doubled())?;
        let a = self.values(&probe);
        let b = fine.values(&probe);
        let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Ok(0.0);
        }
        let worst = a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        Ok(worst / scale)
    }
}

fn stack_rows(rows: Vec<Vec<Complex64>>, width: usize) -> Array2<Complex64> {
    let n = rows.len();
    Array2::from_shape_vec((n, width), rows.concat()).expect("every row has one entry per outer node")
}

fn probe_axis(axis: &FrequencyAxis) -> Result<FrequencyAxis> {
    let pos = axis.positions();
    let n = pos.len();
    let mut picks: Vec<f64> = (0..5).map(|k| pos[k * (n - 1) / 4]).collect();
    let nearest = pos.iter().copied().min_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
    picks.push(nearest);
    picks.sort_by(f64::total_cmp);
    picks.dedup();
    FrequencyAxis::from_positions(picks)
}

impl JsaEngine for TimeDomainEngine {
    fn evaluate(&self, grid: &FrequencyGrid) -> Result<JointAmplitudeGrid> {
        JointAmplitudeGrid::new(grid.clone(), self.values(grid), self.provenance(None))
    }
}

/// Evaluates `grid` and records the quadrature convergence delta.
pub fn propagate_time_domain(
    model: &BiphotonDoubleSinc,
    kernel: &ReplicaKernel,
    grid: &FrequencyGrid,
    spec: &QuadratureSpec,
) -> Result<JointAmplitudeGrid> {
    let engine = TimeDomainEngine::new(*model, kernel.clone(), *spec)?;
    let delta = engine.convergence_delta(grid)?;
    JointAmplitudeGrid::new(grid.clone(), engine.values(grid), engine.provenance(Some(delta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::{CavityParams, SwitchingProfile};
    use crate::spectrum::to_angular;
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
    fn open_cavity_returns_delayed_input() {
        let model = BiphotonDoubleSinc::new(0.7, 0.1, 0.5).unwrap();
        let e = TimeDomainEngine::new(model, instantaneous(0.0), QuadratureSpec::default()).unwrap();
        let grid = FrequencyGrid::square(0.0, 0.0, 2.0, 9).unwrap();
        let out = e.values(&grid);
        for (s, &ns) in grid.signal.positions().iter().enumerate() {
            for (i, &ni) in grid.idler.positions().iter().enumerate() {
                let (ws, wi) = (to_angular(ns), to_angular(ni));
                let delay = Complex64::from_polar(1.0, -0.5 * (ws + wi));
                let expected = model.freq_amplitude(ws, wi) * delay;
                assert!((out[[s, i]] - expected).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn case_a_center_matches_clipped_mass() {
        // corner clipping removes tau2 / (2 tau1) of the box
        let model = BiphotonDoubleSinc::new(1.0, 0.1, 0.5).unwrap();
        let e = TimeDomainEngine::new(model, instantaneous(0.95), QuadratureSpec::default()).unwrap();
        let jsi = e.amplitude(0.0, 0.0).unwrap().norm_sqr();
        assert_relative_eq!(jsi, 1521.0 * 0.95f64.powi(2), max_relative = 1e-10);
    }

    #[test]
    fn convergence_delta_is_small_for_contained_input() {
        let model = BiphotonDoubleSinc::new(0.7, 0.1, 0.5).unwrap();
        let e = TimeDomainEngine::new(model, instantaneous(0.95), QuadratureSpec::default()).unwrap();
        let grid = FrequencyGrid::square(0.0, 0.0, 3.0, 31).unwrap();
        assert!(e.convergence_delta(&grid).unwrap() < 1e-10);
    }
}
