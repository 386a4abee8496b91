//! The three studies the CLI reproduces: comb formation for three input
//! shapes, the `r2` sweep, and the finite rise-time switch.

use serde::{Deserialize, Serialize};

use crate::cavity::{CavityParams, ReplicaKernel, ReplicaSum, SwitchingProfile};
use crate::error::{Error, Result};
use crate::metrics::{self, BinMetrics, BinSpec, Car, FluxPath, FluxReport, TauOptimum};
use crate::propagate::{JsaEngine, TimeDomainEngine};
use crate::quadrature::QuadratureSpec;
use crate::spectrum::BiphotonDoubleSinc;

/// Diagonal bins reported for every comb.
pub const DIAGONAL_BINS: [(i32, i32); 3] = [(0, 0), (1, -1), (2, -2)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    A,
    B,
    C,
}

impl Case {
    pub fn model(self) -> BiphotonDoubleSinc {
        let (tau1, tau2) = match self {
            Case::A => (1.0, 0.1),
            Case::B => (0.7, 0.1),
            Case::C => (1.0, 0.2),
        };
        BiphotonDoubleSinc::new(tau1, tau2, 0.5).expect("built-in cases are valid")
    }
}

impl std::str::FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Case::A),
            "b" => Ok(Case::B),
            "c" => Ok(Case::C),
            other => Err(Error::invalid("case", format!("expected a, b or c, got `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinPurity {
    pub signal_bin: i32,
    pub idler_bin: i32,
    pub purity: f64,
    pub schmidt_number: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombSummary {
    pub peak_jsi: f64,
    pub car: Car,
    pub bins: Vec<BinPurity>,
}

pub fn comb_summary(engine: &dyn JsaEngine, spec: &BinSpec) -> Result<CombSummary> {
    let bins = DIAGONAL_BINS
        .iter()
        .map(|&(j, k)| {
            let window = metrics::BinWindow::new(j, k, spec.half_width, spec.samples)?;
            let p = metrics::purity(&engine.evaluate(&window.grid()?)?.values)?;
            Ok(BinPurity {
                signal_bin: j,
                idler_bin: k,
                purity: p.purity,
                schmidt_number: p.schmidt_number,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CombSummary {
        peak_jsi: metrics::peak_jsi(engine, 0, 0)?,
        car: metrics::car(engine)?,
        bins,
    })
}

pub fn instantaneous_engine(
    model: BiphotonDoubleSinc,
    cavity: CavityParams,
    sum: ReplicaSum,
    quad: QuadratureSpec,
) -> Result<TimeDomainEngine> {
    TimeDomainEngine::new(model, ReplicaKernel::new(cavity, SwitchingProfile::instantaneous(), sum)?, quad)
}

pub const DEFAULT_R2_LIST: [f64; 8] = [0.90, 0.92, 0.94, 0.95, 0.96, 0.97, 0.98, 0.99];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub r2: f64,
    /// Purity of each of [`DIAGONAL_BINS`].
    pub purity: [f64; 3],
    pub fwhm_fsr: f64,
    pub peak_jsi: f64,
    pub purity_delta: Option<f64>,
    pub fwhm_delta: Option<f64>,
}

/// Central-bin metrics and diagonal purities as a function of `r2`.
pub fn sweep_r2(
    model: BiphotonDoubleSinc,
    loss_db: f64,
    r2_list: &[f64],
    sum: ReplicaSum,
    quad: QuadratureSpec,
    spec: &BinSpec,
) -> Result<Vec<SweepRow>> {
    r2_list
        .iter()
        .map(|&r2| {
            let engine = instantaneous_engine(model, CavityParams::new(r2, loss_db)?, sum, quad)?;
            let center = metrics::bin_metrics(&engine, 0, 0, spec)?;
            let mut purity = [center.purity, 0.0, 0.0];
            for (slot, &(j, k)) in DIAGONAL_BINS.iter().enumerate().skip(1) {
                let window = metrics::BinWindow::new(j, k, spec.half_width, spec.samples)?;
                purity[slot] = metrics::purity(&engine.evaluate(&window.grid()?)?.values)?.purity;
            }
            Ok(SweepRow {
                r2,
                purity,
                fwhm_fsr: center.fwhm_fsr,
                peak_jsi: center.peak_jsi,
                purity_delta: center.purity_delta,
                fwhm_delta: center.fwhm_delta,
            })
        })
        .collect()
}

/// Largest `peak_jsi` in a sweep, with its `r2`.
pub fn sweep_maximum(rows: &[SweepRow]) -> Option<(f64, f64)> {
    rows.iter()
        .max_by(|a, b| a.peak_jsi.total_cmp(&b.peak_jsi))
        .map(|r| (r.r2, r.peak_jsi))
}

/// Shaping of the signal-entry center for the rise-time study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum TauChoice {
    Fixed { tau_s: f64 },
    Optimize { lo: f64, hi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiseTimeSummary {
    pub beta: f64,
    pub t_on: f64,
    pub tau_s: f64,
    pub optimum: Option<TauOptimum>,
    pub flux: FluxReport,
    pub flux_path: FluxPath,
    pub center: BinMetrics,
    pub car: Car,
}

/// Fast flux is used unless it misses the exact value by more than this.
pub const FAST_FLUX_TOLERANCE: f64 = 0.02;

/// Picks the flux path for `kernel`: the fast path when its discrepancy
/// against the exact path at `model` is within [`FAST_FLUX_TOLERANCE`].
pub fn choose_flux_path(model: &BiphotonDoubleSinc, kernel: &ReplicaKernel, quad: &QuadratureSpec) -> (FluxPath, FluxReport) {
    let report = metrics::flux_report(model, kernel, quad);
    let path = if report.relative_discrepancy <= FAST_FLUX_TOLERANCE {
        FluxPath::Fast
    } else {
        FluxPath::ReplicaOverlap
    };
    (path, report)
}

pub fn rise_time(
    template: BiphotonDoubleSinc,
    cavity: CavityParams,
    profile: SwitchingProfile,
    tau: TauChoice,
    sum: ReplicaSum,
    quad: QuadratureSpec,
    spec: &BinSpec,
) -> Result<(RiseTimeSummary, TimeDomainEngine)> {
    let (beta, t_on) = match profile {
        SwitchingProfile::RaisedCosine { t_on, beta } => (beta, t_on),
        _ => (0.0, f64::NAN),
    };
    let kernel = ReplicaKernel::new(cavity, profile, sum)?;
    if kernel.profile.capture_end().is_none() {
        let (settle, level) = kernel.profile.settles();
        return Err(Error::ProfileNotSettled { settle, level });
    }
    let (path, _) = choose_flux_path(&template, &kernel, &quad);
    let (tau_s, optimum) = match tau {
        TauChoice::Fixed { tau_s } => (tau_s, None),
        TauChoice::Optimize { lo, hi } => {
            let opt = metrics::optimize_tau_s(&template, &kernel, (lo, hi), path, &quad)?;
            (opt.tau_s, Some(opt))
        }
    };
    let model = template.with_tau_s(tau_s)?;
    let (flux_path, flux) = choose_flux_path(&model, &kernel, &quad);
    let engine = TimeDomainEngine::new(model, kernel, quad)?;
    let center = metrics::bin_metrics(&engine, 0, 0, spec)?;
    let car = metrics::car(&engine)?;
    Ok((
        RiseTimeSummary {
            beta,
            t_on,
            tau_s,
            optimum,
            flux,
            flux_path,
            center,
            car,
        },
        engine,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub t_on: f64,
    pub tau_s: f64,
    pub target: f64,
    /// `(t_on, optimal tau_s)` at each scanned ramp start.
    pub scan: Vec<(f64, f64)>,
}

/// Finds the ramp start `t_on` whose flux-optimal `tau_s` equals `target`,
/// scanning `t_on_range` and refining by bisection between the bracketing
/// scan points. When no scan point brackets the target, the closest scan
/// point is returned.
pub fn calibrate_t_on(
    template: BiphotonDoubleSinc,
    cavity: CavityParams,
    beta: f64,
    target: f64,
    t_on_range: (f64, f64),
    quad: QuadratureSpec,
) -> Result<Calibration> {
    let optimum_at = |t_on: f64| -> Result<f64> {
        let kernel = ReplicaKernel::new(cavity, SwitchingProfile::raised_cosine(t_on, beta)?, ReplicaSum::Resummed)?;
        Ok(metrics::optimize_tau_s(&template, &kernel, (0.0, 1.5), FluxPath::Fast, &quad)?.tau_s)
    };
    let (lo, hi) = t_on_range;
    let steps = 20;
    let mut scan = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t_on = lo + (hi - lo) * k as f64 / steps as f64;
        scan.push((t_on, optimum_at(t_on)?));
    }
    let bracket = scan
        .windows(2)
        .find(|w| (w[0].1 - target) * (w[1].1 - target) <= 0.0)
        .map(|w| (w[0], w[1]));
    let (t_on, tau_s) = match bracket {
        Some((mut a, mut b)) => {
            while b.0 - a.0 > 1e-4 {
                let mid = 0.5 * (a.0 + b.0);
                let m = (mid, optimum_at(mid)?);
                if (a.1 - target) * (m.1 - target) <= 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            if (a.1 - target).abs() <= (b.1 - target).abs() {
                a
            } else {
                b
            }
        }
        None => *scan
            .iter()
            .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
            .unwrap(),
    };
    Ok(Calibration {
        t_on,
        tau_s,
        target,
        scan,
    })
}
