//! Fabry–Perot cavity with a switchable input mirror.
//!
//! A photon entering at time `tau` leaves through the output mirror as a train
//! of replicas at `tau + (m + 1/2) T_R` with real weights
//!
//! ```text
//! c_m(tau) = t1(tau) t2 r2^m a^(m + 1/2) prod_{k=1..m} r1(tau + k T_R)
//! ```
//!
//! where `a` is the roundtrip amplitude retention. Once the input mirror has
//! settled at a constant reflectivity the product becomes geometric, so the
//! replica sum can be resummed in closed form.

use std::f64::consts::TAU;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{panel_edges, QuadratureRule, RuleCache};
use crate::spectrum::{sinc, to_angular, FrequencyAxis, ROUNDTRIP_TIME};

/// Output mirror and intracavity loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCavity", into = "RawCavity")]
pub struct CavityParams {
    r2: f64,
    t2: f64,
    loss_db: f64,
    retention: f64,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
struct RawCavity {
    r2: f64,
    loss_db_roundtrip: f64,
}

impl TryFrom<RawCavity> for CavityParams {
    type Error = Error;

    fn try_from(raw: RawCavity) -> Result<Self> {
        Self::new(raw.r2, raw.loss_db_roundtrip)
    }
}

impl From<CavityParams> for RawCavity {
    fn from(c: CavityParams) -> Self {
        RawCavity {
            r2: c.r2,
            loss_db_roundtrip: c.loss_db,
        }
    }
}

impl CavityParams {
    /// `r2` is the output mirror field reflectivity, `loss_db` the roundtrip
    /// power loss in dB.
    pub fn new(r2: f64, loss_db: f64) -> Result<Self> {
        if !(r2.is_finite() && (0.0..1.0).contains(&r2)) {
            return Err(Error::invalid("r2", format!("must lie in [0, 1), got {r2}")));
        }
        if !(loss_db.is_finite() && loss_db >= 0.0) {
            return Err(Error::invalid("loss_db", format!("must be finite and >= 0, got {loss_db}")));
        }
        let retention = 10f64.powf(-loss_db / 20.0);
        if r2 * retention >= 1.0 {
            return Err(Error::invalid("r2", "r2 * a must be < 1"));
        }
        Ok(Self {
            r2,
            t2: (1.0 - r2 * r2).sqrt(),
            loss_db,
            retention,
        })
    }

    pub fn lossless(r2: f64) -> Result<Self> {
        Self::new(r2, 0.0)
    }

    pub fn r2(&self) -> f64 {
        self.r2
    }

    pub fn t2(&self) -> f64 {
        self.t2
    }

    pub fn loss_db(&self) -> f64 {
        self.loss_db
    }

    /// Roundtrip amplitude retention `a = 10^(-loss_db/20)`.
    pub fn retention(&self) -> f64 {
        self.retention
    }

    /// Roundtrip amplitude feedback `r2 * a`.
    pub fn feedback(&self) -> f64 {
        self.r2 * self.retention
    }

    /// `F(w) = t2 a^(1/2) e^(-i w T/2) / (1 - r2 a e^(-i w T))`.
    pub fn transfer(&self, omega: f64) -> Complex64 {
        let z = Complex64::from_polar(self.feedback(), -omega * ROUNDTRIP_TIME);
        self.exit_prefactor(omega) / (1.0 - z)
    }

    /// Single-transit factor `t2 a^(1/2) e^(-i w T/2)`.
    pub fn exit_prefactor(&self, omega: f64) -> Complex64 {
        Complex64::from_polar(self.t2 * self.retention.sqrt(), -0.5 * omega * ROUNDTRIP_TIME)
    }

    /// Two-frequency kernel of the cavity switched shut at `T_R`:
    /// `H(w, w') = (T/2pi) F(w) e^(-i (w - w') T/2) sinc[(w - w') T/2]`.
    pub fn kernel(&self, omega: f64, omega_in: f64) -> Complex64 {
        let half = 0.5 * (omega - omega_in) * ROUNDTRIP_TIME;
        self.transfer(omega) * Complex64::from_polar(ROUNDTRIP_TIME / TAU * sinc(half), -half)
    }

    /// Closed-form FWHM of `|F|^2` in FSR units.
    pub fn linewidth_fsr(&self) -> f64 {
        let rho = self.feedback();
        4.0 * ((1.0 - rho) / (2.0 * rho.sqrt())).asin() / TAU
    }

    /// Smallest `M` with `(r2 a)^(M+1) / (1 - r2 a) <= eps`.
    pub fn max_bounce_for_tolerance(&self, eps: f64) -> Result<usize> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid("eps", format!("must lie in (0, 1), got {eps}")));
        }
        let rho = self.feedback();
        let mut m = 0usize;
        let mut tail = rho;
        while tail / (1.0 - rho) > eps {
            tail *= rho;
            m += 1;
        }
        Ok(m)
    }

    /// Replica tail bound `(r2 a)^(M+1) / (1 - r2 a)`.
    pub fn tail_bound(&self, max_bounce: usize) -> f64 {
        let rho = self.feedback();
        rho.powi(max_bounce as i32 + 1) / (1.0 - rho)
    }
}

/// Input mirror field reflectivity `r1(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SwitchingProfile {
    /// `r1 = 0` before `t_switch`, `1` from then on.
    Instantaneous { t_switch: f64 },
    /// Raised-cosine ramp from 0 to 1 over `[t_on, t_on + beta T_R]`.
    RaisedCosine { t_on: f64, beta: f64 },
    /// Piecewise-linear through `(times, values)`, held constant outside.
    Sampled { times: Vec<f64>, values: Vec<f64> },
}

impl SwitchingProfile {
    /// Switch shut exactly one roundtrip after the window opens.
    pub fn instantaneous() -> Self {
        SwitchingProfile::Instantaneous { t_switch: ROUNDTRIP_TIME }
    }

    pub fn raised_cosine(t_on: f64, beta: f64) -> Result<Self> {
        let p = SwitchingProfile::RaisedCosine { t_on, beta };
        p.validate()?;
        Ok(p)
    }

    /// Ramp centered on `T_R`.
    pub fn centered_raised_cosine(beta: f64) -> Result<Self> {
        Self::raised_cosine(ROUNDTRIP_TIME * (1.0 - 0.5 * beta), beta)
    }

    /// Input mirror that never closes.
    pub fn open() -> Self {
        SwitchingProfile::Sampled {
            times: vec![0.0],
            values: vec![0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SwitchingProfile::Instantaneous { t_switch } => {
                if !t_switch.is_finite() {
                    return Err(Error::invalid("t_switch", "must be finite"));
                }
            }
            SwitchingProfile::RaisedCosine { t_on, beta } => {
                if !t_on.is_finite() {
                    return Err(Error::invalid("t_on", "must be finite"));
                }
                if !(beta.is_finite() && *beta > 0.0) {
                    return Err(Error::invalid("beta", format!("must be > 0, got {beta}")));
                }
            }
            SwitchingProfile::Sampled { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::invalid("profile", "times and values must be non-empty and of equal length"));
                }
                if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::invalid("profile", "times must be finite and strictly increasing"));
                }
                if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::invalid("profile", "reflectivity values must lie in [0, 1]"));
                }
            }
        }
        Ok(())
    }

    pub fn r1(&self, t: f64) -> f64 {
        match self {
            SwitchingProfile::Instantaneous { t_switch } => {
                if t < *t_switch {
                    0.0
                } else {
                    1.0
                }
            }
            SwitchingProfile::RaisedCosine { t_on, beta } => {
                let ramp = beta * ROUNDTRIP_TIME;
                if t < *t_on {
                    0.0
                } else if t >= t_on + ramp {
                    1.0
                } else {
                    0.5 * (1.0 - (std::f64::consts::PI * (t - t_on) / ramp).cos())
                }
            }
            SwitchingProfile::Sampled { times, values } => {
                let k = times.partition_point(|&x| x <= t);
                if k == 0 {
                    values[0]
                } else if k == times.len() {
                    values[k - 1]
                } else {
                    let f = (t - times[k - 1]) / (times[k] - times[k - 1]);
                    values[k - 1] + f * (values[k] - values[k - 1])
                }
            }
        }
    }

    pub fn t1(&self, t: f64) -> f64 {
        let r = self.r1(t);
        (1.0 - r * r).max(0.0).sqrt()
    }

    /// Input transmission seen by a photon entering at `tau`. The mirror is
    /// held shut before `t = 0`, so nothing enters earlier.
    pub fn entry_transmission(&self, tau: f64) -> f64 {
        if tau < 0.0 {
            0.0
        } else {
            self.t1(tau)
        }
    }

    /// Times at which `r1` or its derivative jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            SwitchingProfile::Instantaneous { t_switch } => vec![*t_switch],
            SwitchingProfile::RaisedCosine { t_on, beta } => vec![*t_on, t_on + beta * ROUNDTRIP_TIME],
            SwitchingProfile::Sampled { times, .. } => times.clone(),
        }
    }

    /// Time after which `r1` is constant, and that constant.
    pub fn settles(&self) -> (f64, f64) {
        match self {
            SwitchingProfile::Instantaneous { t_switch } => (*t_switch, 1.0),
            SwitchingProfile::RaisedCosine { t_on, beta } => (t_on + beta * ROUNDTRIP_TIME, 1.0),
            SwitchingProfile::Sampled { times, values } => (*times.last().unwrap(), *values.last().unwrap()),
        }
    }

    /// End of the entry window, if the mirror eventually closes fully.
    pub fn capture_end(&self) -> Option<f64> {
        let (t, level) = self.settles();
        (level >= 1.0).then_some(t.max(0.0))
    }

    pub fn label(&self) -> String {
        match self {
            SwitchingProfile::Instantaneous { t_switch } => format!("instantaneous(t_switch={t_switch})"),
            SwitchingProfile::RaisedCosine { t_on, beta } => format!("raised-cosine(t_on={t_on}, beta={beta})"),
            SwitchingProfile::Sampled { times, .. } => format!("sampled({} points)", times.len()),
        }
    }
}

/// How the infinite replica sum is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ReplicaSum {
    /// Explicit terms until the mirror settles, then a closed-form geometric tail.
    Resummed,
    /// Explicit terms `m = 0..=max_bounce`.
    Truncated { max_bounce: usize },
}

impl ReplicaSum {
    pub fn label(&self) -> String {
        match self {
            ReplicaSum::Resummed => "resummed".into(),
            ReplicaSum::Truncated { max_bounce } => format!("truncated(M={max_bounce})"),
        }
    }
}

/// `c_m(tau)` by direct evaluation of the bounce product.
pub fn replica_coeff(m: usize, tau: f64, cav: &CavityParams, prof: &SwitchingProfile) -> f64 {
    let mut product = 1.0;
    for k in 1..=m {
        product *= prof.r1(tau + k as f64 * ROUNDTRIP_TIME);
    }
    let a = cav.retention();
    prof.entry_transmission(tau) * cav.t2() * cav.r2().powi(m as i32) * a.powf(m as f64 + 0.5) * product
}

/// Bounce products `p_m = prod_{k<=m} r1(tau + k)` for one entry time, stored
/// up to the point where the mirror has settled.
#[derive(Clone, Debug)]
pub struct EntryResponse {
    pub t1: f64,
    head: Vec<f64>,
    level: f64,
}

impl EntryResponse {
    pub fn new(prof: &SwitchingProfile, tau: f64) -> Self {
        let t1 = prof.entry_transmission(tau);
        let (settle, level) = prof.settles();
        let explicit = ((settle - tau) / ROUNDTRIP_TIME).ceil().max(1.0) as usize;
        let mut head = Vec::with_capacity(explicit);
        let mut p = 1.0;
        head.push(p);
        for k in 1..explicit {
            p *= prof.r1(tau + k as f64 * ROUNDTRIP_TIME);
            head.push(p);
        }
        Self { t1, head, level }
    }

    pub fn product(&self, m: usize) -> f64 {
        match self.head.get(m) {
            Some(&p) => p,
            None => {
                let last = self.head.len() - 1;
                self.head[last] * self.level.powi((m - last) as i32)
            }
        }
    }

    /// `sum_m z^m p_m`.
    pub fn series(&self, z: Complex64, sum: ReplicaSum) -> Complex64 {
        match sum {
            ReplicaSum::Resummed => {
                let mut acc = Complex64::new(0.0, 0.0);
                let mut zm = Complex64::new(1.0, 0.0);
                for &p in &self.head {
                    acc += zm * p;
                    zm *= z;
                }
                // zm is now z^K; tail = p_{K-1} z^{K-1} (level z) / (1 - level z)
                let last = *self.head.last().unwrap();
                acc + zm * (last * self.level) / (1.0 - z * self.level)
            }
            ReplicaSum::Truncated { max_bounce } => {
                let mut acc = Complex64::new(0.0, 0.0);
                let mut zm = Complex64::new(1.0, 0.0);
                for m in 0..=max_bounce {
                    acc += zm * self.product(m);
                    zm *= z;
                }
                acc
            }
        }
    }

    /// `sum_m x^m p_m^2` for real `x`, used for output energy.
    pub fn series_sq(&self, x: f64, sum: ReplicaSum) -> f64 {
        match sum {
            ReplicaSum::Resummed => {
                let mut acc = 0.0;
                let mut xm = 1.0;
                for &p in &self.head {
                    acc += xm * p * p;
                    xm *= x;
                }
                let last = *self.head.last().unwrap();
                let l2 = self.level * self.level;
                acc + xm * last * last * l2 / (1.0 - x * l2)
            }
            ReplicaSum::Truncated { max_bounce } => (0..=max_bounce)
                .map(|m| x.powi(m as i32) * self.product(m).powi(2))
                .sum(),
        }
    }
}

/// Replica-train response of a given cavity and profile.
#[derive(Clone, Debug)]
pub struct ReplicaKernel {
    pub cavity: CavityParams,
    pub profile: SwitchingProfile,
    pub sum: ReplicaSum,
}

/// Per-frequency constants of the replica sum.
#[derive(Clone, Copy, Debug)]
pub struct FrequencyFactor {
    pub omega: f64,
    prefactor: Complex64,
    z: Complex64,
}

impl ReplicaKernel {
    pub fn new(cavity: CavityParams, profile: SwitchingProfile, sum: ReplicaSum) -> Result<Self> {
        profile.validate()?;
        Ok(Self { cavity, profile, sum })
    }

    pub fn factor(&self, omega: f64) -> FrequencyFactor {
        FrequencyFactor {
            omega,
            prefactor: self.cavity.exit_prefactor(omega),
            z: Complex64::from_polar(self.cavity.feedback(), -omega * ROUNDTRIP_TIME),
        }
    }

    pub fn entry(&self, tau: f64) -> EntryResponse {
        EntryResponse::new(&self.profile, tau)
    }

    /// `G(w, tau) = sum_m c_m(tau) e^(-i w (tau + (m + 1/2) T))`: the output
    /// spectrum produced by a unit impulse entering at `tau`.
    pub fn response(&self, f: &FrequencyFactor, tau: f64, entry: &EntryResponse) -> Complex64 {
        if entry.t1 == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::from_polar(entry.t1, -f.omega * tau) * f.prefactor * entry.series(f.z, self.sum)
    }

    /// Entry-time discontinuities inside `[lo, hi]`: the profile breakpoints
    /// shifted back by whole roundtrips, and the opening of the window at 0.
    pub fn entry_breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out = vec![0.0];
        for b in self.profile.breakpoints() {
            let mut k = 0.0;
            while b - k * ROUNDTRIP_TIME >= lo {
                let t = b - k * ROUNDTRIP_TIME;
                if t <= hi {
                    out.push(t);
                }
                k += 1.0;
            }
        }
        out.retain(|&t| t >= lo && t <= hi);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Output-port energy per unit entering energy at `tau`:
    /// `L(tau) = sum_m c_m(tau)^2`.
    pub fn survival(&self, entry: &EntryResponse) -> f64 {
        let c = &self.cavity;
        let rho = c.feedback();
        entry.t1 * entry.t1 * c.t2() * c.t2() * c.retention() * entry.series_sq(rho * rho, self.sum)
    }

    /// `C(tau, delta) = sum_m c_m(tau) c_(m - delta)(tau + delta)`: overlap of
    /// the replica trains launched at `tau` and at `tau + delta`, which land
    /// on the same output times. `delta = 0` gives [`Self::survival`].
    pub fn overlap(&self, tau: f64, delta: i64) -> f64 {
        if delta < 0 {
            return self.overlap(tau + delta as f64 * ROUNDTRIP_TIME, -delta);
        }
        let first = self.entry(tau);
        let shift = delta as usize;
        let later = self.entry(tau + delta as f64 * ROUNDTRIP_TIME);
        if first.t1 == 0.0 || later.t1 == 0.0 {
            return 0.0;
        }
        // p_m(tau) = p_delta(tau) p_(m - delta)(tau + delta)
        let rest = match self.sum {
            ReplicaSum::Resummed => ReplicaSum::Resummed,
            ReplicaSum::Truncated { max_bounce } if max_bounce >= shift => ReplicaSum::Truncated {
                max_bounce: max_bounce - shift,
            },
            ReplicaSum::Truncated { .. } => return 0.0,
        };
        let c = &self.cavity;
        let rho = c.feedback();
        first.t1
            * later.t1
            * c.t2()
            * c.t2()
            * c.retention()
            * rho.powi(delta as i32)
            * first.product(shift)
            * later.series_sq(rho * rho, rest)
    }

    /// `c_m(tau)` from the stored bounce products.
    pub fn coeff(&self, m: usize, entry: &EntryResponse) -> f64 {
        let c = &self.cavity;
        entry.t1 * c.t2() * c.retention().sqrt() * c.feedback().powi(m as i32) * entry.product(m)
    }
}

/// Entry-time integration range for [`numeric_kernel`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryTimeSpec {
    pub start: f64,
    pub end: f64,
    pub nodes: usize,
}

#[derive(Clone, Debug)]
pub struct KernelSamples {
    pub output: FrequencyAxis,
    pub input: FrequencyAxis,
    /// `H(w, w')` indexed `[output, input]`.
    pub values: Array2<Complex64>,
}

/// Two-frequency kernel from the impulse response,
/// `H(w, w') = (1/2pi) int int h(t, tau) e^(-i (w t - w' tau)) dtau dt`,
/// with `h` a weighted delta train in `t` for each entry time.
pub fn numeric_kernel(
    kernel: &ReplicaKernel,
    time: &EntryTimeSpec,
    output: &FrequencyAxis,
    input: &FrequencyAxis,
) -> Result<KernelSamples> {
    if !(time.start.is_finite() && time.end.is_finite() && time.end > time.start) {
        return Err(Error::invalid("time", "need a finite, non-empty entry-time range"));
    }
    if time.nodes < crate::quadrature::MIN_NODES {
        return Err(Error::invalid("time.nodes", "too few nodes"));
    }
    let required = kernel.profile.capture_end().unwrap_or(0.0);
    if time.start > 0.0 || time.end < required {
        return Err(Error::InsufficientTimeRange {
            start: time.start,
            end: time.end,
            required,
        });
    }
    let lo = time.start.max(0.0);
    let hi = match kernel.profile.capture_end() {
        Some(end) => time.end.min(end),
        None => time.end,
    };
    let edges = panel_edges(lo, hi, kernel.entry_breakpoints(lo, hi));
    let mut nodes = Vec::new();
    RuleCache::default().panels(QuadratureRule::GaussLegendre, &edges, time.nodes, &mut nodes);
    let entries: Vec<EntryResponse> = nodes.iter().map(|&(t, _)| kernel.entry(t)).collect();

    let w_out = output.angular();
    let w_in = input.angular();
    let rows = crate::par_map(w_out.len(), |o| {
        let f = kernel.factor(w_out[o]);
        let g: Vec<Complex64> = nodes
            .iter()
            .zip(&entries)
            .map(|(&(t, w), e)| kernel.response(&f, t, e) * w)
            .collect();
        w_in
            .iter()
            .map(|&wp| {
                let acc: Complex64 = nodes
                    .iter()
                    .zip(&g)
                    .map(|(&(t, _), gv)| gv * Complex64::from_polar(1.0, wp * t))
                    .sum();
                acc / TAU
            })
            .collect::<Vec<_>>()
    });
    let values = Array2::from_shape_fn((w_out.len(), w_in.len()), |(o, i)| rows[o][i]);
    Ok(KernelSamples {
        output: output.clone(),
        input: input.clone(),
        values,
    })
}

/// Convenience: `F(w)` at a frequency in FSR units.
pub fn transfer_fsr(cav: &CavityParams, nu: f64) -> Complex64 {
    cav.transfer(to_angular(nu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn cav95() -> CavityParams {
        CavityParams::lossless(0.95).unwrap()
    }

    #[test]
    fn cavity_invariants() {
        for &r2 in &[0.0, 0.5, 0.95, 0.99, 0.999] {
            let c = CavityParams::new(r2, 0.2).unwrap();
            assert!((c.t2() * c.t2() + c.r2() * c.r2() - 1.0).abs() < 1e-14);
            assert!(c.retention() > 0.0 && c.retention() < 1.0);
            assert!(c.feedback() < 1.0);
        }
        assert_eq!(CavityParams::lossless(0.9).unwrap().retention(), 1.0);
        assert!(CavityParams::new(1.0, 0.0).is_err());
        assert!(CavityParams::new(-0.1, 0.0).is_err());
        assert!(CavityParams::new(0.9, -1.0).is_err());
        assert!(serde_json::from_str::<CavityParams>(r#"{"r2":1.0,"loss_db_roundtrip":0}"#).is_err());
    }

    #[test]
    fn transfer_examples() {
        let c = cav95();
        assert_relative_eq!(c.transfer(0.0).norm_sqr(), 0.0975 / 0.0025, max_relative = 1e-12);
        assert_relative_eq!(c.transfer(0.0).norm_sqr(), 39.0, max_relative = 1e-12);
        assert_relative_eq!(c.transfer(PI).norm_sqr(), 0.0975 / (1.95 * 1.95), max_relative = 1e-12);
        assert_relative_eq!(c.transfer(PI).norm_sqr(), 0.025641, epsilon = 1e-6);

        let lossy = CavityParams::new(0.95, 0.2).unwrap();
        let a = 10f64.powf(-0.01);
        let expected = 0.0975 * a / (1.0 - 0.95 * a).powi(2);
        assert_relative_eq!(lossy.transfer(0.0).norm_sqr(), expected, max_relative = 1e-12);
        assert_relative_eq!(lossy.transfer(0.0).norm_sqr(), 18.58, epsilon = 0.01);
    }

    #[test]
    fn kernel_examples() {
        let c = cav95();
        let w = 0.37;
        assert_relative_eq!((c.kernel(w, w) - c.transfer(w) / TAU).norm(), 0.0, epsilon = 1e-15);
        assert!(c.kernel(w + TAU, w).norm() < 1e-15);
        assert!(c.kernel(w - 3.0 * TAU, w).norm() < 1e-15);
    }

    #[test]
    fn linewidth_closed_form() {
        assert_relative_eq!(cav95().linewidth_fsr(), 0.01633, epsilon = 1e-5);
    }

    #[test]
    fn max_bounce_examples() {
        let c = cav95();
        let m = c.max_bounce_for_tolerance(1e-4).unwrap();
        // brute-force scan of the defining inequality
        let brute = (0..10_000)
            .find(|&m| 0.95f64.powi(m as i32 + 1) / 0.05 <= 1e-4)
            .unwrap();
        assert_eq!(m, brute);
        assert_eq!(m, 237);
        assert_eq!(CavityParams::lossless(0.0).unwrap().max_bounce_for_tolerance(1e-9).unwrap(), 0);

        let lossy = CavityParams::new(0.98, 0.2).unwrap();
        let mut prev = 0;
        for eps in [1e-1, 1e-2, 1e-4, 1e-6, 1e-8] {
            let m = lossy.max_bounce_for_tolerance(eps).unwrap();
            assert!(m >= prev);
            assert!(lossy.tail_bound(m) <= eps);
            if m > 0 {
                assert!(lossy.tail_bound(m - 1) > eps);
            }
            prev = m;
        }
        assert!(c.max_bounce_for_tolerance(0.0).is_err());
        assert!(c.max_bounce_for_tolerance(1.0).is_err());
    }

    #[test]
    fn replica_coeff_examples() {
        let c = cav95();
        let p = SwitchingProfile::instantaneous();
        assert_relative_eq!(replica_coeff(2, 0.3, &c, &p), 0.95 * 0.95 * c.t2(), max_relative = 1e-14);
        assert_relative_eq!(replica_coeff(2, 0.3, &c, &p), 0.28181, epsilon = 1e-5);

        // raised cosine, second bounce inside the ramp
        let (t_on, beta) = (0.9, 0.75);
        let rc = SwitchingProfile::raised_cosine(t_on, beta).unwrap();
        let lossy = CavityParams::new(0.95, 0.2).unwrap();
        let tau = 0.2;
        let ramp = |t: f64| 0.5 * (1.0 - (PI * (t - t_on) / beta).cos());
        // hand-unrolled: enter at tau (r1 = 0), bounce once at tau + 1 (inside ramp), exit
        let r1_bounce = ramp(tau + 1.0);
        assert!(r1_bounce > 0.0 && r1_bounce < 1.0);
        let a = lossy.retention();
        let by_hand = 1.0 * r1_bounce * 0.95 * lossy.t2() * a.powf(1.5);
        assert_relative_eq!(replica_coeff(1, tau, &lossy, &rc), by_hand, max_relative = 1e-14);
    }

    #[test]
    fn replica_bound_and_reduction() {
        let lossy = CavityParams::new(0.95, 0.2).unwrap();
        let profiles = [
            SwitchingProfile::instantaneous(),
            SwitchingProfile::raised_cosine(0.625, 0.75).unwrap(),
            SwitchingProfile::open(),
        ];
        for prof in &profiles {
            for m in 0..20 {
                for k in 0..50 {
                    let tau = -0.2 + 1.6 * k as f64 / 49.0;
                    let bound = lossy.t2() * lossy.feedback().powi(m as i32) * lossy.retention().sqrt();
                    assert!(replica_coeff(m, tau, &lossy, prof).abs() <= bound * (1.0 + 1e-14));
                }
            }
        }
        // switched at T_R, entering inside [0, T_R): weight is r2^m t2 a^(m+1/2)
        let p = SwitchingProfile::instantaneous();
        let a = lossy.retention();
        for m in 0..30 {
            for tau in [0.0, 0.25, 0.5, 0.999] {
                let expected = 0.95f64.powi(m as i32) * lossy.t2() * a.powf(m as f64 + 0.5);
                assert_relative_eq!(replica_coeff(m, tau, &lossy, &p), expected, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn lossless_replica_energy_sums_to_one() {
        let c = cav95();
        let m_max = c.max_bounce_for_tolerance(1e-8).unwrap();
        let total: f64 = (0..=m_max)
            .map(|m| replica_coeff(m, 0.5, &c, &SwitchingProfile::instantaneous()).powi(2))
            .sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn entry_response_matches_direct_products() {
        let c = CavityParams::new(0.9, 0.1).unwrap();
        let profiles = [
            SwitchingProfile::instantaneous(),
            SwitchingProfile::raised_cosine(0.3, 1.7).unwrap(),
            SwitchingProfile::Sampled {
                times: vec![0.0, 0.5, 2.5],
                values: vec![0.0, 0.4, 0.9],
            },
        ];
        for prof in &profiles {
            let kernel = ReplicaKernel::new(c, prof.clone(), ReplicaSum::Resummed).unwrap();
            for tau in [0.05, 0.4, 0.95, 1.3] {
                let e = kernel.entry(tau);
                for m in 0..40 {
                    assert_relative_eq!(kernel.coeff(m, &e), replica_coeff(m, tau, &c, prof), epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn overlap_matches_explicit_replica_sum() {
        let c = CavityParams::new(0.9, 0.1).unwrap();
        let prof = SwitchingProfile::raised_cosine(0.4, 1.3).unwrap();
        let kernel = ReplicaKernel::new(c, prof.clone(), ReplicaSum::Resummed).unwrap();
        for tau in [0.05, 0.6, 1.2] {
            for delta in [-1i64, 0, 1, 2] {
                let brute: f64 = (0..400usize)
                    .filter(|&m| m as i64 - delta >= 0)
                    .map(|m| {
                        replica_coeff(m, tau, &c, &prof)
                            * replica_coeff((m as i64 - delta) as usize, tau + delta as f64, &c, &prof)
                    })
                    .sum();
                assert_relative_eq!(kernel.overlap(tau, delta), brute, epsilon = 1e-14);
            }
            let e = kernel.entry(tau);
            assert_relative_eq!(kernel.overlap(tau, 0), kernel.survival(&e), max_relative = 1e-14);
        }
    }

    #[test]
    fn profile_invariants() {
        let profiles = [
            SwitchingProfile::instantaneous(),
            SwitchingProfile::raised_cosine(0.625, 0.75).unwrap(),
        ];
        for p in &profiles {
            let mut prev = 0.0;
            for k in 0..4000 {
                let t = -1.0 + 4.0 * k as f64 / 3999.0;
                let r = p.r1(t);
                assert!((0.0..=1.0).contains(&r));
                assert!(r >= prev);
                prev = r;
                let t1 = p.t1(t);
                assert!((r * r + t1 * t1 - 1.0).abs() < 1e-14);
            }
        }
        assert!(SwitchingProfile::raised_cosine(0.5, 0.0).is_err());
        let bad = SwitchingProfile::Sampled {
            times: vec![0.0, 0.0],
            values: vec![0.0, 1.0],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn resummed_series_matches_long_truncation() {
        let c = cav95();
        let kernel = ReplicaKernel::new(c, SwitchingProfile::raised_cosine(0.625, 0.75).unwrap(), ReplicaSum::Resummed)
            .unwrap();
        let m = c.max_bounce_for_tolerance(1e-15).unwrap();
        let truncated = ReplicaSum::Truncated { max_bounce: m };
        for tau in [0.1, 0.7, 1.1] {
            let e = kernel.entry(tau);
            for w in [0.0, 0.3, 2.0, -5.0] {
                let z = Complex64::from_polar(c.feedback(), -w);
                let a = e.series(z, ReplicaSum::Resummed);
                let b = e.series(z, truncated);
                assert!((a - b).norm() < 1e-12 * a.norm().max(1.0));
            }
            assert_relative_eq!(e.series_sq(0.9025, ReplicaSum::Resummed), e.series_sq(0.9025, truncated), max_relative = 1e-12);
        }
    }

    #[test]
    fn numeric_kernel_range_checks() {
        let kernel = ReplicaKernel::new(cav95(), SwitchingProfile::instantaneous(), ReplicaSum::Resummed).unwrap();
        let axis = FrequencyAxis::uniform(0.0, 1.0, 5).unwrap();
        let short = EntryTimeSpec {
            start: 0.0,
            end: 0.8,
            nodes: 64,
        };
        assert!(matches!(
            numeric_kernel(&kernel, &short, &axis, &axis),
            Err(Error::InsufficientTimeRange { .. })
        ));
        let late = EntryTimeSpec {
            start: 0.1,
            end: 1.0,
            nodes: 64,
        };
        assert!(numeric_kernel(&kernel, &late, &axis, &axis).is_err());
    }
}
