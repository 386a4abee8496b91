use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use num_complex::Complex64;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::commands::{self, Context};
use super::output::{flatten_numbers, write_json, Manifest};
use super::{CliResult, Failure, Settings};
use crate::cavity::{replica_coeff, CavityParams, ReplicaSum, SwitchingProfile};
use crate::experiments::{instantaneous_engine, Case};
use crate::metrics::purity;
use crate::propagate::{propagate_mc, AnalyticEngine, JsaEngine, MonteCarloSpec};
use crate::quadrature::QuadratureSpec;
use crate::spectrum::{input_grid, streamed_energy, to_angular, FrequencyGrid, FSR};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    #[default]
    Quick,
    Full,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ValidateArgs {
    #[arg(long, value_enum)]
    pub level: Option<Level>,
    /// Recompute three metrics of this manifest and compare them exactly.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub level: Level,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn run_check(checks: &mut Vec<Check>, name: &str, f: impl FnOnce() -> CliResult<(bool, String)>) {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {}", e.message())),
    };
    let seconds = start.elapsed().as_secs_f64();
    println!("{} {name}: {detail} ({seconds:.2} s)", if passed { "PASS" } else { "FAIL" });
    checks.push(Check {
        name: name.into(),
        passed,
        detail,
        seconds,
    });
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> Vec<(f64, f64)> {
    (0..n)
        .map(|_| (rng.random_range(-half_width..half_width), rng.random_range(-half_width..half_width)))
        .collect()
}

fn engine_triangle(ctx: &Context) -> CliResult<(bool, String)> {
    let model = Case::B.model();
    let cav = CavityParams::lossless(0.95)?;
    let analytic = AnalyticEngine::new(model, cav)?;
    let exact = instantaneous_engine(model, cav, ReplicaSum::Resummed, ctx.quadrature)?;
    let grid = FrequencyGrid::square(0.0, 0.0, 3.0, 61)?;
    let a = analytic.evaluate(&grid)?.values;
    let b = exact.evaluate(&grid)?.values;
    let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let err = a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale;
    Ok((err <= 1e-6, format!("analytic vs time-domain relative error {err:.2e}")))
}

fn monte_carlo_agreement(ctx: &Context, seeds: u64, points: usize) -> CliResult<(bool, String)> {
    let model = Case::B.model();
    let cav = CavityParams::lossless(0.95)?;
    let exact = instantaneous_engine(model, cav, ReplicaSum::Resummed, ctx.quadrature)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let pts = random_points(&mut rng, points, 2.0);
    let truth: Vec<Complex64> = pts
        .iter()
        .map(|&(s, i)| exact.amplitude(s, i))
        .collect::<crate::error::Result<_>>()?;
    let mut inside = 0usize;
    let mut total = 0usize;
    for k in 0..seeds {
        let spec = MonteCarloSpec {
            samples_per_point: 1 << 15,
            batches: 16,
            half_width_fsr: 20.0,
            seed: ctx.seed.wrapping_add(k),
        };
        let report = propagate_mc(&model, &cav, &pts, &spec)?;
        for (e, t) in report.estimates.iter().zip(&truth) {
            total += 1;
            inside += e.within(*t, 3.0) as usize;
        }
    }
    let frac = inside as f64 / total as f64;
    let needed = if seeds >= 10 { 0.99 } else { 0.9 };
    Ok((frac >= needed, format!("{inside}/{total} estimates within 3 CI (need {needed})")))
}

fn monte_carlo_scaling(ctx: &Context) -> CliResult<(bool, String)> {
    let model = Case::B.model();
    let cav = CavityParams::lossless(0.95)?;
    let pts = [(0.1, -0.2)];
    let ci = |n: usize| -> CliResult<f64> {
        let spec = MonteCarloSpec {
            samples_per_point: n,
            batches: 64,
            half_width_fsr: 20.0,
            seed: ctx.seed,
        };
        let e = propagate_mc(&model, &cav, &pts, &spec)?.estimates[0];
        Ok(e.ci_re.hypot(e.ci_im))
    };
    let sizes = [1usize << 14, 1 << 16, 1 << 18];
    let cis = sizes.iter().map(|&n| ci(n)).collect::<CliResult<Vec<_>>>()?;
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = cis.iter().map(|c| c.ln()).collect();
    let slope = least_squares_slope(&xs, &ys);
    Ok(((slope + 0.5).abs() <= 0.1, format!("log-log CI slope {slope:.3}")))
}

pub(crate) fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Window half-widths (FSR) for the energy check. Both sit where the
/// windowed in/out mismatch from cut Lorentzian tails is well below 1e-3.
pub const ENERGY_SPAN_QUICK: f64 = 12.0;
pub const ENERGY_SPAN_FULL: f64 = 16.0;

pub fn energy_conservation(quad: QuadratureSpec, half_width: f64) -> CliResult<(bool, String)> {
    let model = Case::B.model();
    let cav = CavityParams::lossless(0.95)?;
    let n = (2.0 * half_width / 0.005).round() as usize + 1;
    let grid = FrequencyGrid::square(0.0, 0.0, half_width, n)?;
    let exact = instantaneous_engine(model, cav, ReplicaSum::Resummed, quad)?;
    let e_out = exact.energy(&grid, 256)?;
    let e_in = streamed_energy(&grid, 256, |g| Ok(input_grid(&model, g).values))?;
    let rel = (e_out - e_in).abs() / e_in;
    Ok((
        rel <= 1e-3,
        format!("span +-{half_width} FSR, step 0.005: in {e_in:.6}, out {e_out:.6}, relative {rel:.2e}"),
    ))
}

fn periodicity(ctx: &Context) -> CliResult<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut worst: f64 = 0.0;
    for &r2 in &[0.5, 0.9, 0.95, 0.99] {
        let c = CavityParams::new(r2, 0.1)?;
        for _ in 0..200 {
            let w = rng.random_range(-50.0..50.0);
            let (f0, f1) = (c.transfer(w), c.transfer(w + FSR));
            worst = worst.max((f1.norm() - f0.norm()).abs() / f0.norm());
            worst = worst.max((f1 + f0).norm() / f0.norm());
        }
    }
    Ok((worst <= 1e-12, format!("worst relative deviation {worst:.2e}")))
}

fn reduction(_: &Context) -> CliResult<(bool, String)> {
    let c = CavityParams::lossless(0.95)?;
    let p = SwitchingProfile::instantaneous();
    let mut worst: f64 = 0.0;
    for m in 0..60 {
        for k in 0..20 {
            let tau = k as f64 / 20.0;
            let expected = 0.95f64.powi(m) * c.t2();
            worst = worst.max((replica_coeff(m as usize, tau, &c, &p) - expected).abs());
        }
    }
    Ok((worst <= 1e-14, format!("max deviation from r2^m t2: {worst:.2e}")))
}

fn purity_oracles(ctx: &Context) -> CliResult<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let u: Vec<Complex64> = (0..17).map(|_| Complex64::new(rng.random(), rng.random())).collect();
    let v: Vec<Complex64> = (0..23).map(|_| Complex64::new(rng.random(), rng.random())).collect();
    let rank1 = ndarray::Array2::from_shape_fn((17, 23), |(r, c)| u[r] * v[c]);
    let p1 = purity(&rank1)?.purity;
    let mut two = ndarray::Array2::zeros((2, 2));
    two[[0, 0]] = Complex64::new(0.5f64.sqrt(), 0.0);
    two[[1, 1]] = Complex64::new(0.5f64.sqrt(), 0.0);
    let p2 = purity(&two)?.purity;
    let scaled = rank1.mapv(|x| x * Complex64::new(-3.0, 0.7)) + ndarray::Array2::from_shape_fn((17, 23), |(r, c)| {
        Complex64::new(((r * 7 + c) % 5) as f64 * 0.01, 0.0)
    });
    let p3 = purity(&scaled)?.purity;
    let p3s = purity(&scaled.mapv(|x| x * Complex64::new(0.0, 2.5)))?.purity;
    let ok = (p1 - 1.0).abs() <= 1e-10 && (p2 - 0.5).abs() <= 1e-12 && (p3 - p3s).abs() <= 1e-12;
    Ok((ok, format!("rank-1 {p1:.12}, two-mode {p2:.12}, scalar change {:.1e}", (p3 - p3s).abs())))
}

fn case_b_oracle(ctx: &Context) -> CliResult<(bool, String)> {
    let exact = instantaneous_engine(Case::B.model(), CavityParams::lossless(0.95)?, ReplicaSum::Resummed, ctx.quadrature)?;
    let peak = exact.amplitude(0.0, 0.0)?.norm_sqr();
    let w = to_angular(1.0);
    let side = Case::B.model().freq_amplitude(0.0, w).norm_sqr() * 1521.0;
    let got = exact.amplitude(0.0, 1.0)?.norm_sqr();
    let ok = (peak - 1521.0).abs() / 1521.0 <= 1e-6 && (got - side).abs() / side <= 1e-6;
    Ok((ok, format!("peak {peak:.6}, first sideband {got:.6} (closed form {side:.6})")))
}

fn manifest_recompute(ctx: &Context, path: &PathBuf) -> CliResult<(bool, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let recomputed = recompute(&manifest)?;
    let keys: Vec<&String> = manifest.metrics.keys().collect();
    if keys.is_empty() {
        return Ok((false, "manifest has no metrics".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let picks: Vec<&&String> = keys.choose_multiple(&mut rng, 3.min(keys.len())).collect();
    let mut mismatches = Vec::new();
    for key in &picks {
        let want = manifest.metrics[**key];
        match recomputed.get(**key) {
            Some(got) if got.to_bits() == want.to_bits() => {}
            other => mismatches.push(format!("{key}: manifest {want}, recomputed {other:?}")),
        }
    }
    let names: Vec<&str> = picks.iter().map(|k| k.as_str()).collect();
    if mismatches.is_empty() {
        Ok((true, format!("{} matched exactly: {}", names.len(), names.join(", "))))
    } else {
        Ok((false, mismatches.join("; ")))
    }
}

fn recompute(m: &Manifest) -> CliResult<std::collections::BTreeMap<String, f64>> {
    let param = |_: ()| m.parameters.clone();
    let bad = |e: serde_json::Error| Failure::Usage(format!("manifest parameters: {e}"));
    let summary: Value = match m.command.as_str() {
        "fig2" => {
            let p: commands::Fig2Params = serde_json::from_value(param(())).map_err(bad)?;
            serde_json::to_value(commands::compute_fig2(&p)?.summary)
        }
        "fig3" => {
            let p: commands::Fig3Params = serde_json::from_value(param(())).map_err(bad)?;
            serde_json::to_value(commands::compute_fig3(&p)?)
        }
        "fig4" => {
            let p: commands::Fig4Params = serde_json::from_value(param(())).map_err(bad)?;
            serde_json::to_value(commands::compute_fig4(&p)?.0)
        }
        "optimize-ts" => {
            let p: commands::OptimizeParams = serde_json::from_value(param(())).map_err(bad)?;
            serde_json::to_value(commands::compute_optimize(&p)?)
        }
        other => return Err(Failure::Usage(format!("cannot recompute command `{other}`"))),
    }
    .map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(flatten_numbers(&summary))
}

pub fn validate(ctx: &Context, s: &Settings, a: ValidateArgs) -> CliResult<()> {
    let level = s.pick(a.level, "level", Level::Quick)?;
    let manifest: Option<PathBuf> = s.pick_opt(a.manifest.clone(), "manifest")?;
    let mut checks = Vec::new();
    run_check(&mut checks, "case-b oracle", || case_b_oracle(ctx));
    run_check(&mut checks, "engine triangle", || engine_triangle(ctx));
    run_check(&mut checks, "FSR periodicity", || periodicity(ctx));
    run_check(&mut checks, "switched replica weights", || reduction(ctx));
    run_check(&mut checks, "purity oracles", || purity_oracles(ctx));
    let span = if level == Level::Full { ENERGY_SPAN_FULL } else { ENERGY_SPAN_QUICK };
    run_check(&mut checks, "energy conservation", || energy_conservation(ctx.quadrature, span));
    run_check(&mut checks, "Monte Carlo CI scaling", || monte_carlo_scaling(ctx));
    match level {
        Level::Quick => run_check(&mut checks, "Monte Carlo agreement", || monte_carlo_agreement(ctx, 1, 10)),
        Level::Full => run_check(&mut checks, "Monte Carlo seed sweep", || monte_carlo_agreement(ctx, 10, 25)),
    }
    if let Some(path) = &manifest {
        run_check(&mut checks, "manifest recompute", || manifest_recompute(ctx, path));
    }
    let passed = checks.iter().all(|c| c.passed);
    let report = Report {
        level,
        seed: ctx.seed,
        passed,
        checks,
    };
    let path = ctx.out_dir.join("validate_report.json");
    write_json(&path, &report)?;
    println!("wrote {}", path.display());
    if passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(Failure::Validation(format!("failed checks: {}", failed.join(", "))))
    }
}
