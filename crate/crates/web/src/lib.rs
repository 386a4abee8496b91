//! Browser bindings: JSI heatmaps for the instantaneous and raised-cosine
//! switch, and the Airy peak-enhancement curve.

use tvcavity::metrics::{self, BinWindow};
use tvcavity::propagate::{JsaEngine, TimeDomainEngine};
use tvcavity::quadrature::{QuadratureRule, QuadratureSpec};
use tvcavity::render::{heatmap, Scale};
use tvcavity::{BiphotonDoubleSinc, CavityParams, FrequencyGrid, ReplicaKernel, ReplicaSum, SwitchingProfile};
use wasm_bindgen::prelude::*;

/// Lighter than the CLI default; still well converged for the demo grids.
const DEMO_QUADRATURE: QuadratureSpec = QuadratureSpec {
    nodes_mean: 96,
    nodes_diff: 24,
    rule: QuadratureRule::GaussLegendre,
};

#[wasm_bindgen]
pub struct JsiView {
    width: usize,
    height: usize,
    rgba: Vec<u8>,
    peak_jsi: f64,
    car: f64,
    purity: f64,
    max_jsi: f64,
}

#[wasm_bindgen]
impl JsiView {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major RGBA, top row at the highest idler frequency.
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn peak_jsi(&self) -> f64 {
        self.peak_jsi
    }

    /// Infinite when the first sideband is dark.
    #[wasm_bindgen(getter)]
    pub fn car(&self) -> f64 {
        self.car
    }

    /// Purity of the central bin.
    #[wasm_bindgen(getter)]
    pub fn purity(&self) -> f64 {
        self.purity
    }

    #[wasm_bindgen(getter)]
    pub fn max_jsi(&self) -> f64 {
        self.max_jsi
    }
}

fn js(e: tvcavity::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn view(engine: &TimeDomainEngine, span: f64, n: usize, log: bool) -> Result<JsiView, JsError> {
    let grid = FrequencyGrid::square(0.0, 0.0, span, n.clamp(16, 400)).map_err(js)?;
    let jsa = engine.evaluate(&grid).map_err(js)?;
    let jsi = jsa.jsi();
    let map = heatmap(&jsi, if log { Scale::Log } else { Scale::Linear });
    let window = BinWindow::new(0, 0, 0.5, 81).map_err(js)?;
    let center = engine.evaluate(&window.grid().map_err(js)?).map_err(js)?;
    let car = metrics::car(engine).map_err(js)?;
    Ok(JsiView {
        width: map.width,
        height: map.height,
        rgba: map.to_rgba(),
        peak_jsi: metrics::peak_jsi(engine, 0, 0).map_err(js)?,
        car: if car.infinite { f64::INFINITY } else { car.value },
        purity: metrics::purity(&center.values).map_err(js)?.purity,
        max_jsi: jsi.iter().copied().fold(0.0, f64::max),
    })
}

fn engine(
    tau1: f64,
    tau2: f64,
    tau_s: f64,
    r2: f64,
    loss_db: f64,
    profile: SwitchingProfile,
) -> Result<TimeDomainEngine, JsError> {
    let model = BiphotonDoubleSinc::new(tau1, tau2, tau_s).map_err(js)?;
    let kernel = ReplicaKernel::new(CavityParams::new(r2, loss_db).map_err(js)?, profile, ReplicaSum::Resummed)
        .map_err(js)?;
    TimeDomainEngine::new(model, kernel, DEMO_QUADRATURE).map_err(js)
}

/// Output JSI behind a mirror that closes the instant the photons are in.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn compress_jsi(
    tau1: f64,
    tau2: f64,
    tau_s: f64,
    r2: f64,
    loss_db: f64,
    span: f64,
    n: usize,
    log: bool,
) -> Result<JsiView, JsError> {
    let e = engine(tau1, tau2, tau_s, r2, loss_db, SwitchingProfile::instantaneous())?;
    view(&e, span, n, log)
}

/// Same, with the input mirror closing along a raised-cosine ramp
/// starting at `t_on` and lasting `beta` roundtrips.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn rise_time_jsi(
    tau1: f64,
    tau2: f64,
    tau_s: f64,
    r2: f64,
    t_on: f64,
    beta: f64,
    span: f64,
    n: usize,
    log: bool,
) -> Result<JsiView, JsError> {
    let profile = SwitchingProfile::raised_cosine(t_on, beta).map_err(js)?;
    let e = engine(tau1, tau2, tau_s, r2, 0.0, profile)?;
    view(&e, span, n, log)
}

/// Single-photon intensity enhancement `|F(0)|^2` at each `r2` in `r2s`.
#[wasm_bindgen]
pub fn airy_peak(r2s: &[f64], loss_db: f64) -> Result<Vec<f64>, JsError> {
    r2s.iter()
        .map(|&r2| Ok(CavityParams::new(r2, loss_db).map_err(js)?.transfer(0.0).norm_sqr()))
        .collect()
}

/// `|F|^2` across `[-span, span]` FSR.
#[wasm_bindgen]
pub fn airy_curve(r2: f64, loss_db: f64, span: f64, n: usize) -> Result<Vec<f64>, JsError> {
    let cav = CavityParams::new(r2, loss_db).map_err(js)?;
    let n = n.max(2);
    Ok((0..n)
        .map(|k| {
            let nu = -span + 2.0 * span * k as f64 / (n - 1) as f64;
            cav.transfer(tvcavity::spectrum::to_angular(nu)).norm_sqr()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compress_reports_case_b_peak() {
        let v = compress_jsi(0.7, 0.1, 0.5, 0.95, 0.0, 2.0, 41, false).ok().unwrap();
        assert!((v.peak_jsi() - 1521.0).abs() < 1e-6);
        assert_eq!(v.rgba().len(), 41 * 41 * 4);
    }

    #[test]
    fn airy_peak_lossless() {
        let p = airy_peak(&[0.95], 0.0).ok().unwrap();
        assert!((p[0] - 39.0).abs() < 1e-9);
    }
}
