use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvcavity::cavity::{numeric_kernel, EntryTimeSpec};
use tvcavity::experiments::{choose_flux_path, instantaneous_engine, Case};
use tvcavity::metrics::{bin_metrics, flux_report, optimize_tau_s, peak_jsi, BinSpec, FluxPath};
use tvcavity::propagate::{propagate_mc, AnalyticEngine, JsaEngine, MonteCarloSpec, TimeDomainEngine};
use tvcavity::quadrature::QuadratureSpec;
use tvcavity::spectrum::{input_grid, streamed_energy};
use tvcavity::{BiphotonDoubleSinc, CavityParams, FrequencyAxis, FrequencyGrid, ReplicaKernel, ReplicaSum, SwitchingProfile};

fn quad() -> QuadratureSpec {
    QuadratureSpec::default()
}

fn lossless(r2: f64) -> CavityParams {
    CavityParams::lossless(r2).unwrap()
}

fn max_norm<'a>(v: impl Iterator<Item = &'a Complex64>) -> f64 {
    v.map(|x| x.norm()).fold(0.0, f64::max)
}

#[test]
fn time_domain_matches_analytic_on_contained_input() {
    let model = Case::B.model();
    let exact = instantaneous_engine(model, lossless(0.95), ReplicaSum::Resummed, quad()).unwrap();
    let analytic = AnalyticEngine::new(model, lossless(0.95)).unwrap();
    let grid = FrequencyGrid::square(0.0, 0.0, 3.0, 121).unwrap();
    let a = analytic.evaluate(&grid).unwrap().values;
    let b = exact.evaluate(&grid).unwrap().values;
    let err = max_norm((&a - &b).iter());
    assert!(err <= 1e-6 * max_norm(a.iter()), "{err}");
}

#[test]
fn monte_carlo_brackets_the_exact_value() {
    let model = Case::B.model();
    let exact = instantaneous_engine(model, lossless(0.95), ReplicaSum::Resummed, quad()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let points: Vec<(f64, f64)> = (0..25).map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))).collect();
    let mut inside = 0;
    let mut total = 0;
    for seed in 0..4 {
        let spec = MonteCarloSpec { samples_per_point: 1 << 15, batches: 16, half_width_fsr: 20.0, seed };
        let report = propagate_mc(&model, &lossless(0.95), &points, &spec).unwrap();
        for (e, &(s, i)) in report.estimates.iter().zip(&points) {
            total += 1;
            inside += e.within(exact.amplitude(s, i).unwrap(), 3.0) as usize;
        }
    }
    // 3 CI per component; a handful of misses in 100 would already be suspicious
    assert!(inside as f64 >= 0.97 * total as f64, "{inside}/{total}");
}

#[test]
fn monte_carlo_ci_shrinks_as_inverse_root_samples() {
    let model = Case::B.model();
    let sizes = [1usize << 13, 1 << 15, 1 << 17];
    let ci: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            let spec = MonteCarloSpec { samples_per_point: n, batches: 64, half_width_fsr: 20.0, seed: 3 };
            let e = propagate_mc(&model, &lossless(0.95), &[(0.2, 0.1)], &spec).unwrap().estimates[0];
            e.ci_re.hypot(e.ci_im)
        })
        .collect();
    let slope = (ci[2].ln() - ci[0].ln()) / ((sizes[2] as f64).ln() - (sizes[0] as f64).ln());
    assert!((slope + 0.5).abs() <= 0.1, "slope {slope}");
}

#[test]
fn monte_carlo_is_independent_of_thread_count() {
    let model = Case::B.model();
    let spec = MonteCarloSpec { samples_per_point: 4096, batches: 8, half_width_fsr: 20.0, seed: 11 };
    let pts = [(0.0, 0.0), (0.5, -1.0)];
    let a = propagate_mc(&model, &lossless(0.95), &pts, &spec).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| propagate_mc(&model, &lossless(0.95), &pts, &spec).unwrap());
    for (x, y) in a.estimates.iter().zip(&b.estimates) {
        assert_eq!(x.value, y.value);
        assert_eq!(x.ci_re.to_bits(), y.ci_re.to_bits());
    }
}

#[test]
fn resummed_series_agrees_with_direct_sum_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cav = CavityParams::new(0.95, 0.1).unwrap();
    for profile in [SwitchingProfile::instantaneous(), SwitchingProfile::raised_cosine(0.62, 0.75).unwrap()] {
        let long = ReplicaSum::Truncated { max_bounce: cav.max_bounce_for_tolerance(1e-14).unwrap() };
        let fast = TimeDomainEngine::new(Case::A.model(), ReplicaKernel::new(cav, profile.clone(), ReplicaSum::Resummed).unwrap(), quad()).unwrap();
        let slow = TimeDomainEngine::new(Case::A.model(), ReplicaKernel::new(cav, profile, long).unwrap(), quad()).unwrap();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for _ in 0..100 {
            let (s, i) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let (a, b) = (fast.amplitude(s, i).unwrap(), slow.amplitude(s, i).unwrap());
            worst = worst.max((a - b).norm());
            scale = scale.max(a.norm());
        }
        assert!(worst <= 1e-9 * scale.max(1.0), "{worst}");
    }
}

#[test]
fn fifty_more_replicas_stay_inside_the_tail_bound() {
    let cav = lossless(0.95);
    let m = cav.max_bounce_for_tolerance(1e-6).unwrap();
    let engine = |max_bounce| {
        let k = ReplicaKernel::new(cav, SwitchingProfile::instantaneous(), ReplicaSum::Truncated { max_bounce }).unwrap();
        TimeDomainEngine::new(Case::A.model(), k, quad()).unwrap()
    };
    let (short, long) = (engine(m), engine(m + 50));
    let bound = short.truncation_bound();
    assert!(bound > 0.0 && bound <= 1e-6);
    let grid = FrequencyGrid::square(0.0, 0.0, 1.5, 31).unwrap();
    let (a, b) = (short.evaluate(&grid).unwrap().values, long.evaluate(&grid).unwrap().values);
    // a relative bound per photon; the pair amplitude picks it up twice
    let scale = max_norm(b.iter());
    let worst = max_norm((&a - &b).iter());
    assert!(worst <= 2.0 * bound * scale, "{worst} vs {}", 2.0 * bound * scale);
}

#[test]
fn numeric_kernel_reproduces_the_switched_kernel() {
    let cav = lossless(0.95);
    let m = cav.max_bounce_for_tolerance(1e-8).unwrap();
    let kernel = ReplicaKernel::new(cav, SwitchingProfile::instantaneous(), ReplicaSum::Truncated { max_bounce: m }).unwrap();
    let axis = FrequencyAxis::uniform(0.0, 1.5, 31).unwrap();
    let time = EntryTimeSpec { start: -0.2, end: 1.2, nodes: 64 };
    let samples = numeric_kernel(&kernel, &time, &axis, &axis).unwrap();
    let bound = 2.0 * 0.95f64.powi(m as i32 + 1) / 0.05;
    let mut worst: f64 = 0.0;
    for (o, &w) in axis.angular().iter().enumerate() {
        for (i, &wp) in axis.angular().iter().enumerate() {
            let exact = cav.kernel(w, wp);
            worst = worst.max((samples.values[[o, i]] - exact).norm() / cav.kernel(w, w).norm());
        }
    }
    assert!(worst <= bound, "{worst} vs {bound}");
}

#[test]
fn numeric_kernel_of_an_open_mirror_is_a_single_pass() {
    let cav = CavityParams::new(0.9, 0.3).unwrap();
    let kernel = ReplicaKernel::new(cav, SwitchingProfile::open(), ReplicaSum::Resummed).unwrap();
    let axis = FrequencyAxis::uniform(0.0, 1.0, 9).unwrap();
    // an open mirror admits light at every time; integrate a unit window
    let time = EntryTimeSpec { start: 0.0, end: 1.0, nodes: 32 };
    let samples = numeric_kernel(&kernel, &time, &axis, &axis).unwrap();
    for (o, &w) in axis.angular().iter().enumerate() {
        for (i, &wp) in axis.angular().iter().enumerate() {
            let d = w - wp;
            let window = if d == 0.0 { Complex64::new(1.0, 0.0) } else { (Complex64::from_polar(1.0, -d) - 1.0) / Complex64::new(0.0, -d) };
            let expected = cav.exit_prefactor(w) * window / TAU;
            assert!((samples.values[[o, i]] - expected).norm() <= 1e-12, "{o} {i}");
        }
    }
}

#[test]
fn ramped_kernel_is_not_translation_invariant() {
    let cav = lossless(0.95);
    let kernel = ReplicaKernel::new(cav, SwitchingProfile::raised_cosine(0.625, 0.75).unwrap(), ReplicaSum::Resummed).unwrap();
    let axis = FrequencyAxis::uniform(0.0, 1.0, 21).unwrap();
    let time = EntryTimeSpec { start: -0.5, end: 2.0, nodes: 48 };
    let h = numeric_kernel(&kernel, &time, &axis, &axis).unwrap().values;
    let step = kernel_with(&SwitchingProfile::instantaneous(), &axis);
    // along each line w - w' = const, the ramp kernel varies far more than
    // the instantaneous one (which only varies through F(w))
    let spread = |m: &ndarray::Array2<Complex64>, shift: usize| {
        let line: Vec<f64> = (0..axis.len() - shift).map(|k| (m[[k + shift, k]] / cav.transfer(axis.angular()[k + shift])).norm()).collect();
        line.iter().cloned().fold(0.0, f64::max) - line.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    for shift in [0, 3, 7] {
        assert!(spread(&step, shift) < 1e-10, "{}", spread(&step, shift));
        assert!(spread(&h, shift) > 1e-4, "{}", spread(&h, shift));
    }
}

fn kernel_with(profile: &SwitchingProfile, axis: &FrequencyAxis) -> ndarray::Array2<Complex64> {
    let k = ReplicaKernel::new(lossless(0.95), profile.clone(), ReplicaSum::Resummed).unwrap();
    numeric_kernel(&k, &EntryTimeSpec { start: -0.5, end: 2.0, nodes: 48 }, axis, axis).unwrap().values
}

#[test]
fn more_clipping_means_a_lower_peak() {
    let peaks: Vec<f64> = [0.05, 0.1, 0.2, 0.3]
        .iter()
        .map(|&tau2| {
            let model = BiphotonDoubleSinc::new(1.0, tau2, 0.5).unwrap();
            let e = instantaneous_engine(model, lossless(0.95), ReplicaSum::Resummed, quad()).unwrap();
            peak_jsi(&e, 0, 0).unwrap()
        })
        .collect();
    assert!(peaks.windows(2).all(|w| w[1] < w[0]), "{peaks:?}");
    for (tau2, p) in [0.05, 0.1, 0.2, 0.3].iter().zip(&peaks) {
        let expected = 1521.0 * (1.0 - tau2 / 2.0f64).powi(2);
        assert!((p - expected).abs() <= 1e-6 * expected, "{tau2}: {p} vs {expected}");
    }
}

#[test]
fn a_very_fast_ramp_behaves_like_a_step() {
    let spec = BinSpec::default();
    let step = instantaneous_engine(Case::A.model(), lossless(0.95), ReplicaSum::Resummed, quad()).unwrap();
    let ramp_kernel = ReplicaKernel::new(lossless(0.95), SwitchingProfile::raised_cosine(0.99, 0.01).unwrap(), ReplicaSum::Resummed).unwrap();
    let ramp = TimeDomainEngine::new(Case::A.model(), ramp_kernel, quad()).unwrap();
    let a = bin_metrics(&step, 0, 0, &spec).unwrap();
    let b = bin_metrics(&ramp, 0, 0, &spec).unwrap();
    for (x, y, what) in [(a.peak_jsi, b.peak_jsi, "peak"), (a.purity, b.purity, "purity"), (a.fwhm_fsr, b.fwhm_fsr, "fwhm")] {
        assert!((x - y).abs() <= 0.01 * x, "{what}: {x} vs {y}");
    }
}

#[test]
fn lossless_contained_output_keeps_its_energy() {
    let model = Case::B.model();
    let engine = instantaneous_engine(model, lossless(0.95), ReplicaSum::Resummed, quad()).unwrap();
    let span = 12.0;
    let grid = FrequencyGrid::square(0.0, 0.0, span, (2.0 * span / 0.005) as usize + 1).unwrap();
    let e_out = engine.energy(&grid, 256).unwrap();
    let e_in = streamed_energy(&grid, 256, |g| Ok(input_grid(&model, g).values)).unwrap();
    assert!((e_out - e_in).abs() <= 1e-3 * e_in, "{e_in} vs {e_out}");
}

#[test]
fn fast_flux_is_exact_when_support_fits_one_roundtrip() {
    let kernel = ReplicaKernel::new(lossless(0.95), SwitchingProfile::raised_cosine(0.625, 0.75).unwrap(), ReplicaSum::Resummed).unwrap();
    let model = Case::A.model().with_tau_s(0.59).unwrap();
    let report = flux_report(&model, &kernel, &quad());
    assert!(report.relative_discrepancy < 0.02);
    assert_eq!(choose_flux_path(&model, &kernel, &quad()).0, FluxPath::Fast);
    // longer than a roundtrip: entries one roundtrip apart share output slots
    let long = BiphotonDoubleSinc::new(1.3, 0.1, 0.75).unwrap();
    let r = flux_report(&long, &kernel, &quad());
    assert!(r.relative_discrepancy > 0.0);
}

#[test]
fn step_switch_flux_has_a_plateau_of_contained_centers() {
    let kernel = ReplicaKernel::new(lossless(0.95), SwitchingProfile::instantaneous(), ReplicaSum::Resummed).unwrap();
    let opt = optimize_tau_s(&Case::B.model(), &kernel, (0.0, 1.5), FluxPath::Fast, &quad()).unwrap();
    let (lo, hi) = opt.plateau.expect("contained centers all capture everything");
    // clipping grows quadratically past an edge, so edges resolve to ~sqrt(1e-9)
    assert!((lo - 0.4).abs() < 1e-4 && (hi - 0.6).abs() < 1e-4, "{lo} {hi}");
    assert!((opt.tau_s - 0.5).abs() < 1e-6);
    assert!((opt.flux - Case::B.model().energy()).abs() < 1e-9 * opt.flux);
}
