use num_complex::Complex64;

use super::JsaEngine;
use crate::cavity::CavityParams;
use crate::error::{Error, Result};
use crate::spectrum::{to_angular, BiphotonDoubleSinc, FrequencyGrid, JointAmplitudeGrid, Provenance, ROUNDTRIP_TIME};

/// Product formula for a contained input and a switch at `T_R`.
#[derive(Clone, Debug)]
pub struct AnalyticEngine {
    model: BiphotonDoubleSinc,
    cavity: CavityParams,
}

impl AnalyticEngine {
    /// Refuses inputs that leak outside `[0, T_R]`: the product formula would
    /// silently ignore the clipping.
    pub fn new(model: BiphotonDoubleSinc, cavity: CavityParams) -> Result<Self> {
        if !model.is_contained_in(0.0, ROUNDTRIP_TIME) {
            let (start, end) = model.time_support();
            return Err(Error::NotContained { start, end });
        }
        Ok(Self { model, cavity })
    }

    fn value(&self, ws: f64, wi: f64) -> Complex64 {
        self.cavity.transfer(ws) * self.cavity.transfer(wi) * self.model.freq_amplitude(ws, wi)
    }
}

impl JsaEngine for AnalyticEngine {
    fn evaluate(&self, grid: &FrequencyGrid) -> Result<JointAmplitudeGrid> {
        let provenance = Provenance::Analytic {
            model: self.model,
            r2: self.cavity.r2(),
            loss_db: self.cavity.loss_db(),
        };
        Ok(JointAmplitudeGrid::from_fn(grid.clone(), provenance, |ws, wi| self.value(ws, wi)))
    }

    fn amplitude(&self, nu_s: f64, nu_i: f64) -> Result<Complex64> {
        Ok(self.value(to_angular(nu_s), to_angular(nu_i)))
    }
}

pub fn propagate_analytic(
    model: &BiphotonDoubleSinc,
    cavity: &CavityParams,
    grid: &FrequencyGrid,
) -> Result<JointAmplitudeGrid> {
    AnalyticEngine::new(*model, *cavity)?.evaluate(grid)
}
