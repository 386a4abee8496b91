use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::output::{write_bytes, write_grid, write_json, Manifest};
use super::{CliResult, EngineKind, Failure, GlobalArgs, ReplicaMode, Settings, Truncation, DEFAULT_MMAX_EPS};
use crate::cavity::{CavityParams, ReplicaKernel, SwitchingProfile};
use crate::experiments::{self, Case, CombSummary, RiseTimeSummary, SweepRow, TauChoice};
use crate::gridio::read_grid_csv;
use crate::metrics::{self, BinSpec, Car, FluxPath};
use crate::propagate::{propagate_mc, AnalyticEngine, JsaEngine, MonteCarloSpec, TimeDomainEngine};
use crate::quadrature::QuadratureSpec;
use crate::render::{heatmap, Scale};
use crate::spectrum::{input_grid, BiphotonDoubleSinc, FrequencyGrid, JointAmplitudeGrid};

/// Settings shared by every command.
#[derive(Clone, Debug)]
pub struct Context {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub resolution: Option<usize>,
    pub mmax_eps: f64,
    pub replica: ReplicaMode,
    pub quadrature: QuadratureSpec,
}

impl Context {
    pub fn new(g: &GlobalArgs, s: &Settings) -> CliResult<Self> {
        let defaults = QuadratureSpec::default();
        let quadrature = QuadratureSpec {
            nodes_mean: s.pick(g.nodes_mean, "nodes_mean", defaults.nodes_mean)?,
            nodes_diff: s.pick(g.nodes_diff, "nodes_diff", defaults.nodes_diff)?,
            rule: defaults.rule,
        };
        quadrature.validate()?;
        let mmax_eps = s.pick(g.mmax_eps, "mmax_eps", DEFAULT_MMAX_EPS)?;
        if !(mmax_eps > 0.0 && mmax_eps < 1.0) {
            return Err(Failure::Usage(format!("--mmax-eps must lie in (0, 1), got {mmax_eps}")));
        }
        Ok(Self {
            seed: s.pick(g.seed, "seed", 0)?,
            out_dir: s.pick(g.out_dir.clone(), "out_dir", PathBuf::from("out"))?,
            resolution: s.pick_opt(g.resolution, "resolution")?,
            mmax_eps,
            replica: s.pick(g.replica_sum, "replica_sum", ReplicaMode::Resummed)?,
            quadrature,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn truncation(&self, cavity: &CavityParams) -> CliResult<Truncation> {
        Truncation::resolve(self.replica, self.mmax_eps, cavity)
    }
}

fn to_value<T: Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| Failure::Runtime(e.to_string()))
}

fn odd_resolution(n: usize) -> CliResult<usize> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(Failure::Usage(format!(
            "resolution must be odd and >= 3 so bin centers are sampled, got {n}"
        )));
    }
    Ok(n)
}

fn finish(ctx: &Context, mut manifest: Manifest, stem: &str, outputs: Vec<PathBuf>) -> CliResult<()> {
    manifest.outputs = outputs
        .iter()
        .map(|p| p.strip_prefix(&ctx.out_dir).unwrap_or(p).to_path_buf())
        .collect();
    let path = ctx.path(&format!("{stem}_manifest.json"));
    write_json(&path, &manifest)?;
    println!("wrote {}", path.display());
    Ok(())
}

// ----------------------------------------------------------------------------
// fig2

#[derive(Args, Debug, Clone, Default)]
pub struct Fig2Args {
    /// Built-in input shape: a, b or c.
    #[arg(long)]
    pub case: Option<String>,
    #[arg(long)]
    pub tau1: Option<f64>,
    #[arg(long)]
    pub tau2: Option<f64>,
    #[arg(long)]
    pub tau_s: Option<f64>,
    #[arg(long)]
    pub r2: Option<f64>,
    /// Roundtrip power loss in dB.
    #[arg(long)]
    pub loss_db: Option<f64>,
    /// Half-width of the output grid in FSR units.
    #[arg(long)]
    pub span: Option<f64>,
    #[arg(long, value_enum)]
    pub engine: Option<EngineKind>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub mc_batches: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Fig2Params {
    pub label: String,
    pub model: BiphotonDoubleSinc,
    pub cavity: CavityParams,
    pub loss_retention: f64,
    pub span: f64,
    pub resolution: usize,
    pub engine: EngineKind,
    pub truncation: Truncation,
    pub quadrature: QuadratureSpec,
    pub bins: BinSpec,
    pub monte_carlo: Option<MonteCarloSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Fig2Summary {
    pub label: String,
    pub peak_jsi: f64,
    pub car: Car,
    /// Empty for the Monte Carlo engine.
    pub bins: Vec<experiments::BinPurity>,
    pub convergence_delta: Option<f64>,
    pub monte_carlo_ci: Option<[f64; 2]>,
}

pub(super) struct Fig2Outcome {
    pub input: JointAmplitudeGrid,
    pub output: JointAmplitudeGrid,
    pub summary: Fig2Summary,
    pub warnings: Vec<String>,
}

pub(super) fn resolve_fig2(ctx: &Context, s: &Settings, a: &Fig2Args) -> CliResult<Fig2Params> {
    let case: Option<String> = s.pick_opt(a.case.clone(), "case")?;
    let tau1: Option<f64> = s.pick_opt(a.tau1, "tau1")?;
    let tau2: Option<f64> = s.pick_opt(a.tau2, "tau2")?;
    let tau_s: Option<f64> = s.pick_opt(a.tau_s, "tau_s")?;
    let (label, base) = match (&case, tau1, tau2) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            return Err(Failure::Usage("--case conflicts with explicit --tau1/--tau2".into()));
        }
        (Some(c), None, None) => {
            let c: Case = c.parse()?;
            (format!("case-{}", format!("{c:?}").to_lowercase()), c.model())
        }
        (None, None, None) => ("case-a".to_string(), Case::A.model()),
        (None, t1, t2) => {
            let a = Case::A.model();
            let model = BiphotonDoubleSinc::new(t1.unwrap_or(a.tau1()), t2.unwrap_or(a.tau2()), 0.5)?;
            ("custom".to_string(), model)
        }
    };
    let model = match tau_s {
        Some(t) => base.with_tau_s(t)?,
        None => base,
    };
    let cavity = CavityParams::new(s.pick(a.r2, "r2", 0.95)?, s.pick(a.loss_db, "loss_db", 0.0)?)?;
    let engine = s.pick(a.engine, "engine", EngineKind::TimeDomain)?;
    let default_res = if engine == EngineKind::Mc { 27 } else { 1301 };
    let span: f64 = s.pick(a.span, "span", 6.5)?;
    if !(span.is_finite() && span > 0.0) {
        return Err(Failure::Usage("--span must be positive".into()));
    }
    let monte_carlo = if engine == EngineKind::Mc {
        let d = MonteCarloSpec::default();
        let spec = MonteCarloSpec {
            samples_per_point: s.pick(a.mc_samples, "mc_samples", d.samples_per_point)?,
            batches: s.pick(a.mc_batches, "mc_batches", d.batches)?,
            half_width_fsr: d.half_width_fsr,
            seed: ctx.seed,
        };
        spec.validate()?;
        Some(spec)
    } else {
        None
    };
    Ok(Fig2Params {
        label,
        model,
        cavity,
        loss_retention: cavity.retention(),
        span,
        resolution: odd_resolution(ctx.resolution.unwrap_or(default_res))?,
        engine,
        truncation: ctx.truncation(&cavity)?,
        quadrature: ctx.quadrature,
        bins: BinSpec::default(),
        monte_carlo,
    })
}

pub(super) fn compute_fig2(p: &Fig2Params) -> CliResult<Fig2Outcome> {
    let grid = FrequencyGrid::square(0.0, 0.0, p.span, p.resolution)?;
    let input = input_grid(&p.model, &grid);
    let mut warnings = Vec::new();
    let (output, summary) = match p.engine {
        EngineKind::TimeDomain | EngineKind::Analytic => {
            let (engine, convergence_delta): (Box<dyn JsaEngine>, Option<f64>) = match p.engine {
                EngineKind::Analytic => (Box::new(AnalyticEngine::new(p.model, p.cavity)?), None),
                _ => {
                    let kernel = ReplicaKernel::new(p.cavity, SwitchingProfile::instantaneous(), p.truncation.sum())?;
                    let e = TimeDomainEngine::new(p.model, kernel, p.quadrature)?;
                    let delta = e.convergence_delta(&grid)?;
                    (Box::new(e), Some(delta))
                }
            };
            let output = engine.evaluate(&grid)?;
            let CombSummary { peak_jsi, car, bins } = experiments::comb_summary(engine.as_ref(), &p.bins)?;
            let summary = Fig2Summary {
                label: p.label.clone(),
                peak_jsi,
                car,
                bins,
                convergence_delta,
                monte_carlo_ci: None,
            };
            (output, summary)
        }
        EngineKind::Mc => {
            let spec = p.monte_carlo.ok_or_else(|| Failure::Usage("missing Monte Carlo settings".into()))?;
            let points: Vec<(f64, f64)> = grid
                .signal
                .positions()
                .iter()
                .flat_map(|&s| grid.idler.positions().iter().map(move |&i| (s, i)))
                .collect();
            let report = propagate_mc(&p.model, &p.cavity, &points, &spec)?;
            warnings.extend(report.warnings.iter().cloned());
            let ni = grid.idler.len();
            let values = ndarray::Array2::from_shape_fn(grid.shape(), |(s, i)| report.estimates[s * ni + i].value);
            let provenance = crate::spectrum::Provenance::MonteCarlo {
                model: p.model,
                r2: p.cavity.r2(),
                loss_db: p.cavity.loss_db(),
                samples_per_point: spec.samples_per_point,
                batches: spec.batches,
                half_width_fsr: spec.half_width_fsr,
                seed: spec.seed,
            };
            let output = JointAmplitudeGrid::new(grid.clone(), values, provenance)?;
            let centers = propagate_mc(&p.model, &p.cavity, &[(0.0, 0.0), (0.0, 1.0)], &spec)?;
            let c0 = centers.estimates[0];
            let c1 = centers.estimates[1];
            let summary = Fig2Summary {
                label: p.label.clone(),
                peak_jsi: c0.value.norm_sqr(),
                car: metrics::car_from(c0.value.norm_sqr(), c1.value.norm_sqr()),
                bins: Vec::new(),
                convergence_delta: None,
                monte_carlo_ci: Some([c0.ci_re, c0.ci_im]),
            };
            (output, summary)
        }
    };
    Ok(Fig2Outcome {
        input,
        output,
        summary,
        warnings,
    })
}

pub fn fig2(ctx: &Context, s: &Settings, a: Fig2Args) -> CliResult<()> {
    let params = resolve_fig2(ctx, s, &a)?;
    let out = compute_fig2(&params)?;
    let stem = format!("fig2_{}", params.label);
    let files = [
        ctx.path(&format!("{stem}_input.csv")),
        ctx.path(&format!("{stem}_output.csv")),
        ctx.path(&format!("{stem}_summary.json")),
    ];
    write_grid(&files[0], &out.input)?;
    write_grid(&files[1], &out.output)?;
    write_json(&files[2], &out.summary)?;
    print_comb(&out.summary);
    let summary = to_value(&out.summary)?;
    let mut manifest = Manifest::new("fig2", ctx.seed, to_value(&params)?, &summary);
    manifest.warnings = out.warnings;
    finish(ctx, manifest, &stem, files.to_vec())
}

fn print_comb(s: &Fig2Summary) {
    println!("{}: peak JSI {:.4}, CAR {:.4}", s.label, s.peak_jsi, s.car.value);
    for b in &s.bins {
        println!("  purity ({}, {}) = {:.4}", b.signal_bin, b.idler_bin, b.purity);
    }
}

// ----------------------------------------------------------------------------
// fig3

#[derive(Args, Debug, Clone, Default)]
pub struct Fig3Args {
    #[arg(long)]
    pub loss_db: Option<f64>,
    /// Comma-separated output mirror reflectivities.
    #[arg(long, value_delimiter = ',')]
    pub r2_list: Option<Vec<f64>>,
    #[arg(long)]
    pub tau1: Option<f64>,
    #[arg(long)]
    pub tau2: Option<f64>,
    #[arg(long)]
    pub tau_s: Option<f64>,
    /// Skip the doubled-resolution convergence pass.
    #[arg(long)]
    pub no_convergence: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Fig3Params {
    pub model: BiphotonDoubleSinc,
    pub loss_db: f64,
    pub loss_retention: f64,
    pub r2_list: Vec<f64>,
    pub truncation: Vec<Truncation>,
    pub replica: ReplicaMode,
    pub quadrature: QuadratureSpec,
    pub bins: BinSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Fig3Summary {
    pub rows: Vec<SweepRow>,
    pub peak_maximum: Option<[f64; 2]>,
    pub fwhm_monotone_decreasing: bool,
}

pub(super) fn resolve_fig3(ctx: &Context, s: &Settings, a: &Fig3Args) -> CliResult<Fig3Params> {
    let base = Case::A.model();
    let model = BiphotonDoubleSinc::new(
        s.pick(a.tau1, "tau1", base.tau1())?,
        s.pick(a.tau2, "tau2", base.tau2())?,
        s.pick(a.tau_s, "tau_s", base.tau_s())?,
    )?;
    let loss_db = s.pick(a.loss_db, "loss_db", 0.0)?;
    let r2_list = s.pick(a.r2_list.clone(), "r2_list", experiments::DEFAULT_R2_LIST.to_vec())?;
    if r2_list.is_empty() {
        return Err(Failure::Usage("--r2-list is empty".into()));
    }
    let truncation = r2_list
        .iter()
        .map(|&r2| ctx.truncation(&CavityParams::new(r2, loss_db)?))
        .collect::<CliResult<Vec<_>>>()?;
    let convergence = !(a.no_convergence || s.pick(None, "no_convergence", false)?);
    Ok(Fig3Params {
        model,
        loss_db,
        loss_retention: 10f64.powf(-loss_db / 20.0),
        r2_list,
        truncation,
        replica: ctx.replica,
        quadrature: ctx.quadrature,
        bins: BinSpec {
            convergence,
            ..BinSpec::default()
        },
    })
}

pub(super) fn compute_fig3(p: &Fig3Params) -> CliResult<Fig3Summary> {
    let mut rows = Vec::with_capacity(p.r2_list.len());
    for (r2, t) in p.r2_list.iter().zip(&p.truncation) {
        rows.extend(experiments::sweep_r2(p.model, p.loss_db, &[*r2], t.sum(), p.quadrature, &p.bins)?);
    }
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.r2.total_cmp(&b.r2));
    let fwhm_monotone_decreasing = sorted.windows(2).all(|w| w[1].fwhm_fsr < w[0].fwhm_fsr);
    Ok(Fig3Summary {
        peak_maximum: experiments::sweep_maximum(&rows).map(|(r, v)| [r, v]),
        rows,
        fwhm_monotone_decreasing,
    })
}

pub const FIG3_HEADER: [&str; 6] = ["r2", "purity_0_0", "purity_1_-1", "purity_2_-2", "fwhm_fsr", "peak_jsi"];

pub fn fig3(ctx: &Context, s: &Settings, a: Fig3Args) -> CliResult<()> {
    let params = resolve_fig3(ctx, s, &a)?;
    let summary = compute_fig3(&params)?;
    let stem = format!("fig3_loss{}", params.loss_db);
    let csv_path = ctx.path(&format!("{stem}.csv"));
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Failure::Runtime(e.to_string());
    w.write_record(FIG3_HEADER).map_err(csv_err)?;
    for r in &summary.rows {
        let fields = [r.r2, r.purity[0], r.purity[1], r.purity[2], r.fwhm_fsr, r.peak_jsi];
        w.write_record(fields.iter().map(|v| v.to_string())).map_err(csv_err)?;
        println!(
            "r2 {:.2}: purity {:.4} {:.4} {:.4}, fwhm {:.5} FSR, peak {:.2}",
            r.r2, r.purity[0], r.purity[1], r.purity[2], r.fwhm_fsr, r.peak_jsi
        );
    }
    let bytes = w.into_inner().map_err(|e| Failure::Runtime(e.to_string()))?;
    write_bytes(&csv_path, &bytes)?;
    let summary_path = ctx.path(&format!("{stem}_summary.json"));
    write_json(&summary_path, &summary)?;
    let manifest = Manifest::new("fig3", ctx.seed, to_value(&params)?, &to_value(&summary)?);
    finish(ctx, manifest, &stem, vec![csv_path, summary_path])
}

// ----------------------------------------------------------------------------
// fig4

#[derive(Args, Debug, Clone, Default)]
pub struct Fig4Args {
    /// Rise time in roundtrips.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Ramp start; defaults to a ramp centered on one roundtrip.
    #[arg(long)]
    pub t_on: Option<f64>,
    /// Find `t_on` whose flux-optimal entry center equals this value.
    #[arg(long)]
    pub calibrate_to: Option<f64>,
    #[arg(long)]
    pub tau_s: Option<f64>,
    #[arg(long)]
    pub optimize_ts: bool,
    #[arg(long)]
    pub tau1: Option<f64>,
    #[arg(long)]
    pub tau2: Option<f64>,
    #[arg(long)]
    pub r2: Option<f64>,
    #[arg(long)]
    pub loss_db: Option<f64>,
    #[arg(long)]
    pub span: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Fig4Params {
    pub template: BiphotonDoubleSinc,
    pub cavity: CavityParams,
    pub loss_retention: f64,
    pub beta: f64,
    pub t_on: f64,
    pub calibration: Option<experiments::Calibration>,
    pub tau: TauChoice,
    pub span: f64,
    pub resolution: usize,
    pub zoom_half_width: f64,
    pub zoom_samples: usize,
    pub truncation: Truncation,
    pub quadrature: QuadratureSpec,
    pub bins: BinSpec,
}

pub(super) fn resolve_fig4(ctx: &Context, s: &Settings, a: &Fig4Args) -> CliResult<Fig4Params> {
    let base = Case::A.model();
    let template = BiphotonDoubleSinc::new(s.pick(a.tau1, "tau1", base.tau1())?, s.pick(a.tau2, "tau2", base.tau2())?, 0.5)?;
    let cavity = CavityParams::new(s.pick(a.r2, "r2", 0.95)?, s.pick(a.loss_db, "loss_db", 0.0)?)?;
    let beta: f64 = s.pick(a.beta, "beta", 0.75)?;
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Failure::Usage(format!("--beta must be > 0, got {beta}")));
    }
    let explicit_t_on: Option<f64> = s.pick_opt(a.t_on, "t_on")?;
    let calibrate_to: Option<f64> = s.pick_opt(a.calibrate_to, "calibrate_to")?;
    let (t_on, calibration) = match (explicit_t_on, calibrate_to) {
        (Some(_), Some(_)) => return Err(Failure::Usage("--t-on conflicts with --calibrate-to".into())),
        (Some(t), None) => (t, None),
        (None, Some(target)) => {
            let c = experiments::calibrate_t_on(template, cavity, beta, target, (0.3, 0.8), ctx.quadrature)?;
            (c.t_on, Some(c))
        }
        (None, None) => (1.0 - 0.5 * beta, None),
    };
    let optimize = a.optimize_ts || s.pick(None, "optimize_ts", false)?;
    let tau_s: Option<f64> = s.pick_opt(a.tau_s, "tau_s")?;
    let tau = match (optimize, tau_s) {
        (true, Some(_)) => return Err(Failure::Usage("--tau-s conflicts with --optimize-ts".into())),
        (true, None) => TauChoice::Optimize { lo: 0.0, hi: 1.5 },
        (false, t) => TauChoice::Fixed {
            tau_s: t.unwrap_or(0.59),
        },
    };
    let bins = BinSpec::default();
    Ok(Fig4Params {
        template,
        cavity,
        loss_retention: cavity.retention(),
        beta,
        t_on,
        calibration,
        tau,
        span: s.pick(a.span, "span", 6.5)?,
        resolution: odd_resolution(ctx.resolution.unwrap_or(1301))?,
        zoom_half_width: bins.zoom_half_width,
        zoom_samples: bins.zoom_samples,
        truncation: ctx.truncation(&cavity)?,
        quadrature: ctx.quadrature,
        bins,
    })
}

pub(super) fn compute_fig4(p: &Fig4Params) -> CliResult<(RiseTimeSummary, TimeDomainEngine)> {
    let profile = SwitchingProfile::raised_cosine(p.t_on, p.beta)?;
    Ok(experiments::rise_time(
        p.template,
        p.cavity,
        profile,
        p.tau,
        p.truncation.sum(),
        p.quadrature,
        &p.bins,
    )?)
}

pub fn fig4(ctx: &Context, s: &Settings, a: Fig4Args) -> CliResult<()> {
    let params = resolve_fig4(ctx, s, &a)?;
    let (summary, engine) = compute_fig4(&params)?;
    let stem = "fig4";
    let grid = FrequencyGrid::square(0.0, 0.0, params.span, params.resolution)?;
    let zoom = FrequencyGrid::square(0.0, 0.0, params.zoom_half_width, params.zoom_samples)?;
    let files = [
        ctx.path(&format!("{stem}_output.csv")),
        ctx.path(&format!("{stem}_zoom.csv")),
        ctx.path(&format!("{stem}_summary.json")),
    ];
    write_grid(&files[0], &engine.evaluate(&grid)?)?;
    write_grid(&files[1], &engine.evaluate(&zoom)?)?;
    write_json(&files[2], &summary)?;
    if let Some(opt) = &summary.optimum {
        println!("tau_s* = {:.4} (bracket {:.1e}, flux {:.6})", opt.tau_s, opt.bracket, opt.flux);
    }
    println!(
        "beta {:.3}, t_on {:.4}, tau_s {:.4}: peak JSI {:.2}, purity {:.4}, FWHM {:.5} FSR, CAR {:.2}",
        summary.beta,
        summary.t_on,
        summary.tau_s,
        summary.center.peak_jsi,
        summary.center.purity,
        summary.center.fwhm_fsr,
        summary.car.value
    );
    let manifest = Manifest::new("fig4", ctx.seed, to_value(&params)?, &to_value(&summary)?);
    finish(ctx, manifest, stem, files.to_vec())
}

// ----------------------------------------------------------------------------
// optimize-ts

#[derive(Args, Debug, Clone, Default)]
pub struct OptimizeArgs {
    /// Rise time; omit for an instantaneous switch at one roundtrip.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub t_on: Option<f64>,
    #[arg(long)]
    pub tau1: Option<f64>,
    #[arg(long)]
    pub tau2: Option<f64>,
    #[arg(long)]
    pub r2: Option<f64>,
    #[arg(long)]
    pub loss_db: Option<f64>,
    #[arg(long)]
    pub lo: Option<f64>,
    #[arg(long)]
    pub hi: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizeParams {
    pub template: BiphotonDoubleSinc,
    pub cavity: CavityParams,
    pub profile: SwitchingProfile,
    pub bounds: (f64, f64),
    pub truncation: Truncation,
    pub quadrature: QuadratureSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizeSummary {
    pub optimum: metrics::TauOptimum,
    pub flux_path: FluxPath,
    pub input_energy: f64,
}

pub(super) fn resolve_optimize(ctx: &Context, s: &Settings, a: &OptimizeArgs) -> CliResult<OptimizeParams> {
    let base = Case::B.model();
    let template = BiphotonDoubleSinc::new(s.pick(a.tau1, "tau1", base.tau1())?, s.pick(a.tau2, "tau2", base.tau2())?, 0.5)?;
    let cavity = CavityParams::new(s.pick(a.r2, "r2", 0.95)?, s.pick(a.loss_db, "loss_db", 0.0)?)?;
    let profile = match s.pick_opt(a.beta, "beta")? {
        None => SwitchingProfile::instantaneous(),
        Some(beta) => {
            let t_on = s.pick(a.t_on, "t_on", 1.0 - 0.5 * beta)?;
            SwitchingProfile::raised_cosine(t_on, beta)?
        }
    };
    Ok(OptimizeParams {
        template,
        cavity,
        profile,
        bounds: (s.pick(a.lo, "lo", 0.0)?, s.pick(a.hi, "hi", 1.5)?),
        truncation: ctx.truncation(&cavity)?,
        quadrature: ctx.quadrature,
    })
}

pub(super) fn compute_optimize(p: &OptimizeParams) -> CliResult<OptimizeSummary> {
    let kernel = ReplicaKernel::new(p.cavity, p.profile.clone(), p.truncation.sum())?;
    let (path, _) = experiments::choose_flux_path(&p.template, &kernel, &p.quadrature);
    let optimum = metrics::optimize_tau_s(&p.template, &kernel, p.bounds, path, &p.quadrature)?;
    Ok(OptimizeSummary {
        optimum,
        flux_path: path,
        input_energy: p.template.energy(),
    })
}

pub fn optimize_ts(ctx: &Context, s: &Settings, a: OptimizeArgs) -> CliResult<()> {
    let params = resolve_optimize(ctx, s, &a)?;
    let summary = compute_optimize(&params)?;
    let o = &summary.optimum;
    println!(
        "tau_s* = {:.6} (bracket {:.1e}, flux {:.6} of {:.6}){}",
        o.tau_s,
        o.bracket,
        o.flux,
        summary.input_energy,
        o.plateau
            .map(|(l, r)| format!(", plateau [{l:.4}, {r:.4}]"))
            .unwrap_or_default()
    );
    let path = ctx.path("optimize_ts_summary.json");
    write_json(&path, &summary)?;
    let manifest = Manifest::new("optimize-ts", ctx.seed, to_value(&params)?, &to_value(&summary)?);
    finish(ctx, manifest, "optimize_ts", vec![path])
}

// ----------------------------------------------------------------------------
// render

#[derive(Args, Debug, Clone, Default)]
pub struct RenderArgs {
    /// Grid CSV with columns nu_s,nu_i,re,im.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "linear")]
    pub scale: String,
    /// Output image; defaults to the input path with a .ppm extension.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn render_file(input: &Path, scale: Scale, output: &Path) -> CliResult<()> {
    let file = std::fs::File::open(input).map_err(|e| Failure::Usage(format!("{}: {e}", input.display())))?;
    let grid = read_grid_csv(std::io::BufReader::new(file))?;
    let map = heatmap(&grid.jsi(), scale);
    write_bytes(output, &map.to_ppm())
}

pub fn render(_ctx: &Context, _s: &Settings, a: RenderArgs) -> CliResult<()> {
    let scale: Scale = a.scale.parse()?;
    let output = a.output.clone().unwrap_or_else(|| a.input.with_extension("ppm"));
    render_file(&a.input, scale, &output)?;
    println!("wrote {}", output.display());
    Ok(())
}
