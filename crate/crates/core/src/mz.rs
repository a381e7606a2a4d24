//! Merle–Zaag type trichotomy for (x, y, ζ): simulation of extremal systems,
//! terminal-window classification, checks of the growth, persistence and decay claims, decay-rate fits,
//! and the variation-of-constants modal integrator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::ModeTrack;
use crate::numerics::{fornberg_weights, gauss_legendre, line_fit, median};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseTag {
    Unstable,
    Neutral,
    Stable,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Simulated,
    Extracted { source: String },
}

/// Coupling schedule ε(τ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EpsSchedule {
    Constant(f64),
    /// ε₀·exp(−r(τ − τ₀))
    Exponential {
        eps0: f64,
        rate: f64,
    },
    /// ε₀/(1 + τ − τ₀)
    Inverse {
        eps0: f64,
    },
}

impl EpsSchedule {
    pub fn at(&self, tau: f64, tau0: f64) -> f64 {
        match *self {
            EpsSchedule::Constant(e) => e,
            EpsSchedule::Exponential { eps0, rate } => eps0 * (-rate * (tau - tau0)).exp(),
            EpsSchedule::Inverse { eps0 } => eps0 / (1.0 + tau - tau0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MZTrajectory {
    pub tau: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub zeta: Vec<f64>,
    /// ε(τ) at each sample (zeros when unknown)
    pub eps: Vec<f64>,
    pub big_b: f64,
    pub b: f64,
    pub provenance: Provenance,
}

impl MZTrajectory {
    pub fn new(tau: Vec<f64>, x: Vec<f64>, y: Vec<f64>, zeta: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let eps = vec![0.0; tau.len()];
        let t = MZTrajectory { tau, x, y, zeta, eps, big_b: 0.0, b: 0.0, provenance };
        t.validate()?;
        Ok(t)
    }

    pub fn from_track(track: &ModeTrack, source: &str) -> Result<Self> {
        Self::new(track.taus(), track.series(|s| s.x), track.series(|s| s.y), track.series(|s| s.zeta), Provenance::Extracted { source: source.to_string() })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tau.len();
        if [self.x.len(), self.y.len(), self.zeta.len(), self.eps.len()].iter().any(|l| *l != n) {
            return Err(Error::InsufficientData("trajectory series lengths differ".into()));
        }
        if self.tau.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("τ must be strictly increasing".into()));
        }
        if self.x.iter().chain(&self.y).chain(&self.zeta).any(|v| !(*v >= 0.0)) {
            return Err(Error::Domain("x, y, ζ must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut t = self.clone();
        for v in t.x.iter_mut().chain(t.y.iter_mut()).chain(t.zeta.iter_mut()) {
            *v *= k;
        }
        t
    }
}

/// Extremal system: x′ = ½x + s_x·g, y′ = s_y·g, ζ′ = −½ζ + s_z·g with
/// g = ε(τ)(x + y + ζ) + B·exp(−bτ) and each sign ±1. Components are clamped
/// at zero, which keeps every differential inequality of the trichotomy satisfied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MzSpec {
    pub eps: EpsSchedule,
    pub big_b: f64,
    pub b: f64,
    pub signs: [f64; 3],
    pub start: [f64; 3],
    pub tau0: f64,
    pub tau1: f64,
    pub dt: f64,
}

impl MzSpec {
    pub fn new(eps: EpsSchedule, big_b: f64, b: f64, signs: [f64; 3], start: [f64; 3]) -> Self {
        MzSpec { eps, big_b, b, signs, start, tau0: 0.0, tau1: 20.0, dt: 0.01 }
    }
}

pub fn simulate_mz(spec: &MzSpec) -> MZTrajectory {
    let rhs = |tau: f64, v: [f64; 3]| {
        let g = spec.eps.at(tau, spec.tau0) * (v[0] + v[1] + v[2]) + spec.big_b * (-spec.b * tau).exp();
        [0.5 * v[0] + spec.signs[0] * g, spec.signs[1] * g, -0.5 * v[2] + spec.signs[2] * g]
    };
    let steps = ((spec.tau1 - spec.tau0) / spec.dt).round().max(1.0) as usize;
    let h = (spec.tau1 - spec.tau0) / steps as f64;
    let mut v = spec.start.map(|c| c.max(0.0));
    let mut out = MZTrajectory {
        tau: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        zeta: Vec::with_capacity(steps + 1),
        eps: Vec::with_capacity(steps + 1),
        big_b: spec.big_b,
        b: spec.b,
        provenance: Provenance::Simulated,
    };
    let add = |a: [f64; 3], k: [f64; 3], s: f64| [a[0] + s * k[0], a[1] + s * k[1], a[2] + s * k[2]];
    for i in 0..=steps {
        let tau = spec.tau0 + i as f64 * h;
        out.tau.push(tau);
        out.x.push(v[0]);
        out.y.push(v[1]);
        out.zeta.push(v[2]);
        out.eps.push(spec.eps.at(tau, spec.tau0));
        if i == steps {
            break;
        }
        let k1 = rhs(tau, v);
        let k2 = rhs(tau + 0.5 * h, add(v, k1, 0.5 * h));
        let k3 = rhs(tau + 0.5 * h, add(v, k2, 0.5 * h));
        let k4 = rhs(tau + h, add(v, k3, h));
        for c in 0..3 {
            v[c] = (v[c] + h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])).max(0.0);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    /// Half-width of the residual band of log v, converted to a slope.
    pub confidence: f64,
    pub points: usize,
    /// v changed sign on the window and |v| was fitted instead.
    pub used_abs: bool,
}

/// Least-squares slope of −log v over samples with τ in [lo, hi].
pub fn decay_rate_fit(tau: &[f64], v: &[f64], window: (f64, f64)) -> Result<RateFit> {
    let (lo, hi) = window;
    let mut ts = Vec::new();
    let mut ls = Vec::new();
    let mut used_abs = false;
    let first_sign = v.iter().zip(tau).find(|(_, t)| **t >= lo && **t <= hi).map(|(v, _)| v.signum());
    for (t, val) in tau.iter().zip(v) {
        if *t < lo || *t > hi {
            continue;
        }
        if Some(val.signum()) != first_sign {
            used_abs = true;
        }
        if *val == 0.0 || !val.is_finite() {
            return Err(Error::Domain(format!("series vanishes or is not finite at τ = {t}")));
        }
        ts.push(*t);
        ls.push(val.abs().ln());
    }
    if ts.len() < 3 {
        return Err(Error::InsufficientData(format!("rate fit needs 3 samples in [{lo}, {hi}], got {}", ts.len())));
    }
    let fit = line_fit(&ts, &ls)?;
    let span = ts[ts.len() - 1] - ts[0];
    Ok(RateFit { rate: -fit.slope, confidence: 2.0 * fit.max_residual / span, points: ts.len(), used_abs })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    /// Terminal window length in τ.
    pub span: f64,
    /// Minimal growth rate of x for Unstable.
    pub delta_min: f64,
    /// Stable needs a decay rate of x + y + ζ of at least ½ − delta_class.
    pub delta_class: f64,
    /// Neutral needs median max(x, ζ)/y on the last third below this, or
    /// the ratio decaying at log-rate at least `ratio_decay_min`.
    pub neutral_ratio: f64,
    pub ratio_decay_min: f64,
    /// Neutral needs |d log y/dτ| below this.
    pub slow_bound: f64,
    /// Stable needs median (x + y)/ζ on the last third below this.
    pub stable_ratio: f64,
    /// x is ignored when below this fraction of x + y + ζ at the end.
    pub x_floor: f64,
    /// x + y + ζ at or below this on the whole window counts as identically
    /// zero (round-off level for profiles with f = O(1)).
    pub vacuous_floor: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            span: 10.0,
            delta_min: 0.05,
            delta_class: 0.1,
            neutral_ratio: 0.5,
            ratio_decay_min: 0.02,
            slow_bound: 0.25,
            stable_ratio: 10.0,
            x_floor: 1e-8,
            vacuous_floor: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub tag: CaseTag,
    pub window: (f64, f64),
    /// Fitted growth rate of x (−∞ when x is negligible or vanishes).
    pub x_growth: f64,
    /// Decay fit of x + y + ζ.
    pub decay: Option<RateFit>,
    /// Slope of log y on the window.
    pub y_rate: Option<f64>,
    /// Running median of max(x, ζ)/y on the last third.
    pub neutral_ratio: f64,
    /// Slope of log(max(x, ζ)/y) on the window (−∞ if the ratio vanishes).
    pub neutral_ratio_slope: f64,
    /// Running median of (x + y)/ζ on the last third.
    pub stable_ratio: f64,
    /// x, y, ζ vanish (to `vacuous_floor`) on the whole window.
    pub vacuous: bool,
}

pub fn classify(traj: &MZTrajectory, cfg: &ClassifyConfig) -> Result<Classification> {
    traj.validate()?;
    let n = traj.tau.len();
    if n < 6 {
        return Err(Error::InsufficientData(format!("{n} samples are too few to classify")));
    }
    let end = traj.tau[n - 1];
    let lo = end - cfg.span;
    if traj.tau[0] > lo + 1e-12 * cfg.span.max(1.0) {
        return Err(Error::InsufficientData(format!("trajectory covers {:.3} τ-units, window needs {}", end - traj.tau[0], cfg.span)));
    }
    let idx: Vec<usize> = (0..n).filter(|&i| traj.tau[i] >= lo).collect();
    let third: Vec<usize> = idx[idx.len() * 2 / 3..].to_vec();
    let total = |i: usize| traj.x[i] + traj.y[i] + traj.zeta[i];
    let mut out = Classification {
        tag: CaseTag::Undetermined,
        window: (lo, end),
        x_growth: f64::NEG_INFINITY,
        decay: None,
        y_rate: None,
        neutral_ratio: f64::INFINITY,
        neutral_ratio_slope: f64::INFINITY,
        stable_ratio: f64::INFINITY,
        vacuous: idx.iter().all(|&i| total(i) <= cfg.vacuous_floor),
    };
    if out.vacuous {
        return Ok(out);
    }
    let ts: Vec<f64> = idx.iter().map(|&i| traj.tau[i]).collect();
    let series = |f: &dyn Fn(usize) -> f64| idx.iter().map(|&i| f(i)).collect::<Vec<_>>();

    if idx.iter().all(|&i| traj.x[i] > 0.0) && traj.x[n - 1] > cfg.x_floor * total(n - 1) {
        let lx = series(&|i| traj.x[i].ln());
        out.x_growth = line_fit(&ts, &lx)?.slope;
    }
    if idx.iter().all(|&i| total(i) > 0.0) {
        out.decay = decay_rate_fit(&ts, &series(&|i| total(i)), (lo, end)).ok();
    }
    if idx.iter().all(|&i| traj.y[i] > 0.0) {
        out.y_rate = Some(line_fit(&ts, &series(&|i| traj.y[i].ln()))?.slope);
        out.neutral_ratio = median(&third.iter().map(|&i| traj.x[i].max(traj.zeta[i]) / traj.y[i]).collect::<Vec<_>>());
        out.neutral_ratio_slope = if idx.iter().all(|&i| traj.x[i].max(traj.zeta[i]) > 0.0) {
            line_fit(&ts, &series(&|i| (traj.x[i].max(traj.zeta[i]) / traj.y[i]).ln()))?.slope
        } else {
            f64::NEG_INFINITY
        };
    }
    if third.iter().all(|&i| traj.zeta[i] > 0.0) {
        out.stable_ratio = median(&third.iter().map(|&i| (traj.x[i] + traj.y[i]) / traj.zeta[i]).collect::<Vec<_>>());
    }

    out.tag = if out.x_growth >= cfg.delta_min {
        CaseTag::Unstable
    } else if out.stable_ratio <= cfg.stable_ratio && out.decay.is_some_and(|d| d.rate >= 0.5 - cfg.delta_class) {
        CaseTag::Stable
    } else if (out.neutral_ratio <= cfg.neutral_ratio || out.neutral_ratio_slope <= -cfg.ratio_decay_min)
        && out.y_rate.is_some_and(|r| r.abs() <= cfg.slow_bound)
    {
        CaseTag::Neutral
    } else {
        CaseTag::Undetermined
    };
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaimCheck {
    /// τ at which the claim's hypothesis first holds.
    pub triggered_at: Option<f64>,
    pub holds: bool,
    pub first_violation: Option<f64>,
}

impl ClaimCheck {
    fn idle() -> Self {
        ClaimCheck { triggered_at: None, holds: true, first_violation: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixReport {
    pub eps: f64,
    pub alpha: f64,
    /// first τ from which ε(τ) ≤ eps
    pub tau_eps: Option<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub claim1: ClaimCheck,
    pub claim2: ClaimCheck,
    pub claim3: ClaimCheck,
}

impl AppendixReport {
    pub fn all_hold(&self) -> bool {
        self.claim1.holds && self.claim2.holds && self.claim3.holds
    }
}

/// β = x − 4ε(y + ζ) and γ = αεy − ζ − (10B/b)e^{−bτ}, with the claim checks
/// applied from the first τ at which the trajectory's ε(τ) is at most `eps`.
/// Claims 2 and 3 are only checked when claim 1 did not trigger.
pub fn appendix_quantities(traj: &MZTrajectory, eps: f64, alpha: f64) -> Result<AppendixReport> {
    traj.validate()?;
    if !(alpha > 10.0 && eps > 0.0 && alpha * eps < 0.01) {
        return Err(Error::Parameter(format!("need α > 10 and 0 < αε < 1/100, got α = {alpha}, ε = {eps}")));
    }
    let (bb, b) = (traj.big_b, traj.b);
    if bb > 0.0 && !(b > 1.0) {
        return Err(Error::Parameter(format!("forcing rate b = {b} must be large")));
    }
    let forcing = |t: f64| if bb == 0.0 { 0.0 } else { bb * (-b * t).exp() };
    let n = traj.tau.len();
    let beta: Vec<f64> = (0..n).map(|i| traj.x[i] - 4.0 * eps * (traj.y[i] + traj.zeta[i])).collect();
    let gamma: Vec<f64> = (0..n).map(|i| alpha * eps * traj.y[i] - traj.zeta[i] - if bb == 0.0 { 0.0 } else { 10.0 * forcing(traj.tau[i]) / b }).collect();
    let start = (0..n).find(|&i| traj.eps[i] <= eps);
    let mut rep = AppendixReport {
        eps,
        alpha,
        tau_eps: start.map(|i| traj.tau[i]),
        beta,
        gamma,
        claim1: ClaimCheck::idle(),
        claim2: ClaimCheck::idle(),
        claim3: ClaimCheck::idle(),
    };
    let Some(s0) = start else { return Ok(rep) };
    let slack = 1e-9;

    if let Some(k) = (s0..n).find(|&i| rep.beta[i] > 0.0 && traj.x[i] > 20.0 * forcing(traj.tau[i])) {
        let (t0, x0) = (traj.tau[k], traj.x[k]);
        rep.claim1.triggered_at = Some(t0);
        if let Some(i) = (k..n).find(|&i| traj.x[i] < x0 * ((traj.tau[i] - t0) / 8.0).exp() * (1.0 - slack)) {
            rep.claim1.holds = false;
            rep.claim1.first_violation = Some(traj.tau[i]);
        }
        return Ok(rep);
    }

    let scale = |i: usize| slack * (traj.x[i] + traj.y[i] + traj.zeta[i]).max(f64::MIN_POSITIVE);
    if let Some(k) = (s0..n).find(|&i| rep.gamma[i] > 0.0) {
        let (t1, y1) = (traj.tau[k], traj.y[k]);
        rep.claim2.triggered_at = Some(t1);
        let tail = 4.0 * forcing(t1);
        for i in k..n {
            let d = traj.tau[i] - t1;
            let upper = (4.0 * eps * d).exp() * (y1 + tail / (b + 4.0 * eps));
            let lower = (-4.0 * eps * d).exp() * (y1 - if tail == 0.0 { 0.0 } else { tail / (b - 4.0 * eps) });
            let ok = rep.gamma[i] >= -scale(i) && traj.y[i] <= upper * (1.0 + slack) && traj.y[i] >= lower * (1.0 - slack);
            if !ok {
                rep.claim2.holds = false;
                rep.claim2.first_violation = Some(traj.tau[i]);
                break;
            }
        }
    } else {
        let r = 0.5 - 2.0 * eps - 2.0 / alpha;
        let (t0, z0) = (traj.tau[s0], traj.zeta[s0]);
        rep.claim3.triggered_at = Some(t0);
        let c = z0 + if bb == 0.0 { 0.0 } else { 4.0 * forcing(t0) / (b - r) };
        if let Some(i) = (s0..n).find(|&i| traj.zeta[i] > c * (-r * (traj.tau[i] - t0)).exp() * (1.0 + slack)) {
            rep.claim3.holds = false;
            rep.claim3.first_violation = Some(traj.tau[i]);
        }
    }
    Ok(rep)
}

/// a_k(τ) = e^{−λ_k(τ−τ₀)}a_k(τ₀) + ∫_{τ₀}^{τ} e^{−λ_k(τ−s)} F_k(s) ds on the
/// sample grid `taus`, with each F_k interpolated by local degree-5
/// polynomials and integrated against the exact exponential.
/// Returns `a[k][i]` at `taus[i]`.
pub fn variation_of_constants(a0: &[f64], taus: &[f64], forcing: &[Vec<f64>], lambdas: &[f64]) -> Result<Vec<Vec<f64>>> {
    let modes = a0.len();
    if forcing.len() != modes || lambdas.len() != modes {
        return Err(Error::InsufficientData("a0, forcing and λ must cover the same modes".into()));
    }
    let n = taus.len();
    if n < 6 {
        return Err(Error::InsufficientData("forcing needs at least 6 samples".into()));
    }
    if taus.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("τ samples must be strictly increasing".into()));
    }
    if forcing.iter().any(|f| f.len() != n) {
        return Err(Error::InsufficientData("forcing series length differs from τ".into()));
    }
    let (gx, gw) = gauss_legendre(8);
    // per interval: GL nodes mapped into it, and Lagrange weights of a 6-point stencil
    let stencils: Vec<(usize, Vec<f64>, Vec<Vec<f64>>)> = (0..n - 1)
        .map(|i| {
            let lo = i.saturating_sub(2).min(n.saturating_sub(6));
            let hi = (lo + 6).min(n);
            let half = 0.5 * (taus[i + 1] - taus[i]);
            let mid = 0.5 * (taus[i] + taus[i + 1]);
            let nodes: Vec<f64> = gx.iter().map(|x| mid + half * x).collect();
            let weights = nodes.iter().map(|s| fornberg_weights(*s, &taus[lo..hi], 0)[0].clone()).collect();
            (lo, nodes, weights)
        })
        .collect();
    let mut out = Vec::with_capacity(modes);
    for k in 0..modes {
        let f = &forcing[k];
        let lam = lambdas[k];
        let mut a = Vec::with_capacity(n);
        a.push(a0[k]);
        for i in 0..n - 1 {
            let t1 = taus[i + 1];
            let half = 0.5 * (t1 - taus[i]);
            let (lo, nodes, weights) = &stencils[i];
            let mut integral = 0.0;
            for ((s, w), lw) in nodes.iter().zip(&gw).zip(weights) {
                let fs: f64 = lw.iter().zip(&f[*lo..]).map(|(c, v)| c * v).sum();
                integral += w * half * (-lam * (t1 - s)).exp() * fs;
            }
            let prev = a[i];
            a.push((-lam * (t1 - taus[i])).exp() * prev + integral);
        }
        out.push(a);
    }
    Ok(out)
}

/// Labeled extremal trajectories spanning the three cases, several ε
/// schedules (including values near the edge of the small-ε regime), and
/// forcing on/off.
pub fn synthetic_suite() -> Vec<(MzSpec, CaseTag)> {
    let schedules = [
        EpsSchedule::Constant(0.0),
        EpsSchedule::Constant(1e-3),
        EpsSchedule::Constant(0.01),
        EpsSchedule::Constant(0.05),
        EpsSchedule::Exponential { eps0: 0.05, rate: 0.2 },
        EpsSchedule::Inverse { eps0: 0.1 },
    ];
    let cases: [([f64; 3], [f64; 3], CaseTag); 6] = [
        ([-1.0, 1.0, 1.0], [1.0, 1.0, 1.0], CaseTag::Unstable),
        ([1.0, -1.0, 1.0], [0.5, 0.1, 2.0], CaseTag::Unstable),
        ([-1.0, 1.0, 1.0], [0.0, 1.0, 1.0], CaseTag::Neutral),
        ([-1.0, -1.0, 1.0], [0.0, 1.0, 0.0], CaseTag::Neutral),
        ([-1.0, -1.0, 1.0], [0.0, 0.0, 1.0], CaseTag::Stable),
        ([-1.0, -1.0, -1.0], [0.0, 0.0, 3.0], CaseTag::Stable),
    ];
    let mut out = Vec::new();
    for (j, eps) in schedules.iter().enumerate() {
        for (signs, start, tag) in cases.iter() {
            let big_b = if j % 2 == 0 { 0.0 } else { 1.0 };
            out.push((MzSpec::new(*eps, big_b, 20.0, *signs, *start), *tag));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(spec: &MzSpec) -> CaseTag {
        classify(&simulate_mz(spec), &ClassifyConfig::default()).unwrap().tag
    }

    #[test]
    fn decoupled_systems() {
        let n = simulate_mz(&MzSpec::new(EpsSchedule::Constant(0.0), 0.0, 20.0, [1.0; 3], [0.0, 1.0, 1.0]));
        let last = n.tau.len() - 1;
        assert_eq!(n.y[last], 1.0);
        assert!((n.zeta[last] / (-10.0f64).exp() - 1.0).abs() < 1e-9);
        assert_eq!(tag(&MzSpec::new(EpsSchedule::Constant(0.0), 0.0, 20.0, [1.0; 3], [0.0, 1.0, 1.0])), CaseTag::Neutral);
        let u = simulate_mz(&MzSpec::new(EpsSchedule::Constant(0.0), 0.0, 20.0, [1.0; 3], [1.0, 0.0, 0.0]));
        assert!((u.x[last] / 10.0f64.exp() - 1.0).abs() < 1e-9);
        assert_eq!(classify(&u, &ClassifyConfig::default()).unwrap().tag, CaseTag::Unstable);
    }

    #[test]
    fn stable_rate_with_forcing() {
        let spec = MzSpec::new(EpsSchedule::Constant(1e-3), 1.0, 20.0, [-1.0, -1.0, 1.0], [0.0, 0.0, 1.0]);
        let c = classify(&simulate_mz(&spec), &ClassifyConfig::default()).unwrap();
        assert_eq!(c.tag, CaseTag::Stable);
        assert!(c.decay.unwrap().rate >= 0.45);
    }

    #[test]
    fn synthetic_suite_is_classified() {
        let suite = synthetic_suite();
        assert!(suite.len() >= 30);
        for (spec, want) in &suite {
            assert_eq!(tag(spec), *want, "{spec:?}");
        }
    }

    #[test]
    fn classification_is_scale_invariant() {
        for (spec, _) in synthetic_suite().iter().step_by(5) {
            let t = simulate_mz(spec);
            let a = classify(&t, &ClassifyConfig::default()).unwrap();
            let b = classify(&t.scaled(37.0), &ClassifyConfig::default()).unwrap();
            assert_eq!(a.tag, b.tag);
            if let (Some(x), Some(y)) = (a.decay, b.decay) {
                assert!((x.rate - y.rate).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn short_window_is_rejected() {
        let mut spec = MzSpec::new(EpsSchedule::Constant(0.0), 0.0, 20.0, [1.0; 3], [0.0, 1.0, 1.0]);
        spec.tau1 = 5.0;
        assert!(matches!(classify(&simulate_mz(&spec), &ClassifyConfig::default()), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn rate_fits() {
        let tau: Vec<f64> = (0..200).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = tau.iter().map(|t| 5.0 * (-0.5 * t).exp()).collect();
        let f = decay_rate_fit(&tau, &v, (0.0, 20.0)).unwrap();
        assert!((f.rate - 0.5).abs() < 1e-10 && !f.used_abs);
        let tau: Vec<f64> = (10..4000).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = tau.iter().map(|t| (-0.5 * t).exp() * (1.0 + 1.0 / t)).collect();
        let early = decay_rate_fit(&tau, &v, (1.0, 11.0)).unwrap().rate;
        let late = decay_rate_fit(&tau, &v, (300.0, 310.0)).unwrap().rate;
        assert!((late - 0.5).abs() < (early - 0.5).abs() && (late - 0.5).abs() < 1e-4);
        let inv: Vec<f64> = tau.iter().map(|t| 1.0 / t).collect();
        assert!(decay_rate_fit(&tau, &inv, (300.0, 390.0)).unwrap().rate < 0.004);
        let osc: Vec<f64> = tau.iter().map(|t| (-t).exp() * if *t < 5.0 { 1.0 } else { -1.0 }).collect();
        let f = decay_rate_fit(&tau, &osc, (2.0, 8.0)).unwrap();
        assert!(f.used_abs && (f.rate - 1.0).abs() < 1e-9);
    }

    #[test]
    fn growth_persistence_and_decay_claims() {
        let eps = 5e-4;
        let alpha = 15.0;
        let u = simulate_mz(&MzSpec::new(EpsSchedule::Constant(eps), 1.0, 20.0, [-1.0, 1.0, 1.0], [1.0, 1.0, 1.0]));
        let r = appendix_quantities(&u, eps, alpha).unwrap();
        assert!(r.claim1.triggered_at.is_some() && r.claim1.holds);
        let n = simulate_mz(&MzSpec::new(EpsSchedule::Constant(eps), 1.0, 20.0, [-1.0, 1.0, 1.0], [0.0, 1.0, 1.0]));
        let r = appendix_quantities(&n, eps, alpha).unwrap();
        assert!(r.claim1.triggered_at.is_none());
        assert!(r.claim2.triggered_at.is_some() && r.claim2.holds, "{:?}", r.claim2);
        let s = simulate_mz(&MzSpec::new(EpsSchedule::Constant(eps), 1.0, 20.0, [-1.0, -1.0, 1.0], [0.0, 0.0, 1.0]));
        let r = appendix_quantities(&s, eps, alpha).unwrap();
        assert!(r.gamma.iter().all(|g| *g <= 0.0));
        assert!(r.claim3.triggered_at.is_some() && r.claim3.holds);
        assert!(appendix_quantities(&s, 1e-3, 10.5).is_err());
        assert!(appendix_quantities(&s, 1e-4, 9.0).is_err());
    }

    fn rk4_modes(a0: f64, lam: f64, f: &dyn Fn(f64) -> f64, t0: f64, t1: f64, steps: usize) -> f64 {
        let h = (t1 - t0) / steps as f64;
        let mut a = a0;
        for i in 0..steps {
            let t = t0 + i as f64 * h;
            let g = |t: f64, a: f64| -lam * a + f(t);
            let k1 = g(t, a);
            let k2 = g(t + h / 2.0, a + h / 2.0 * k1);
            let k3 = g(t + h / 2.0, a + h / 2.0 * k2);
            let k4 = g(t + h, a + h * k3);
            a += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        a
    }

    #[test]
    fn variation_of_constants_cases() {
        let taus: Vec<f64> = (0..=400).map(|i| 1.0 + i as f64 * 0.025).collect();
        let lams = [-0.5, 0.0, 0.5, 1.0, 3.0];
        let a0 = [0.3, -1.0, 2.0, 0.5, 1.0];
        let zero = vec![vec![0.0; taus.len()]; 5];
        let a = variation_of_constants(&a0, &taus, &zero, &lams).unwrap();
        for k in 0..5 {
            let want = (lams[k] * (1.0 - 11.0)).exp() * a0[k];
            assert!((a[k][400] - want).abs() < 1e-12 * want.abs().max(1.0));
        }
        let konst = vec![vec![2.0; taus.len()]; 5];
        let a = variation_of_constants(&[0.0; 5], &taus, &konst, &lams).unwrap();
        assert!((a[4][400] - 2.0 / 3.0).abs() < 1e-10);
        let forcing = |k: usize, t: f64| (k as f64 + 1.0) * (-1.2 * t).exp() * (3.0 * t).cos();
        let series: Vec<Vec<f64>> = (0..5).map(|k| taus.iter().map(|t| forcing(k, *t)).collect()).collect();
        let a = variation_of_constants(&a0, &taus, &series, &lams).unwrap();
        for k in 0..5 {
            let direct = rk4_modes(a0[k], lams[k], &|t| forcing(k, t), 1.0, 11.0, 20000);
            assert!((a[k][400] - direct).abs() < 1e-8 * direct.abs().max(1.0), "mode {k}: {} vs {direct}", a[k][400]);
        }
    }
}
