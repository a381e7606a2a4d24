//! Fits of the terminal behaviors: the neutral law a₁ ≈ π^{1/4}/(2τ) with the
//! profile u ≈ 1 + (σ² − 2)/(8τ), single-mode exponential decay, and the
//! faster-than-exponential alternative, plus the monitors tying u − 1 to ‖fη‖.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{lambda, HermiteBasis, ModeTrack, QuadratureRule};
use crate::mz::{decay_rate_fit, CaseTag, Classification, RateFit};
use crate::numerics::{centered_derivative, line_fit, median, CubicHermite};
use crate::selfsimilar::RescaledProfile;

/// π^{1/4}/2, the limit of τ·a₁(τ) in the neutral case.
pub fn neutral_limit() -> f64 {
    PI.powf(0.25) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MainCase {
    /// |u − 1| decays faster than any exponential.
    FastDecay,
    /// u = 1 + (σ² − 2)/(8τ) + o(1/τ)
    Neutral,
    /// u = 1 + C e^{(2−m)τ/2} h_m + …
    Exponential,
    Undetermined,
}

fn window_indices(taus: &[f64], window: (f64, f64)) -> Vec<usize> {
    (0..taus.len()).filter(|&i| taus[i] >= window.0 && taus[i] <= window.1).collect()
}

fn safe_ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeutralFit {
    /// Least-squares q in a₁ ≈ q/τ.
    pub q: f64,
    /// Half the spread of τ·a₁ on the window.
    pub band: f64,
    /// (τ, τ·a₁)
    pub tau_a: Vec<(f64, f64)>,
    /// |τ·a₁ − π^{1/4}/2| never increases along the window.
    pub monotone_approach: bool,
    /// Terminal |τ·a₁ − π^{1/4}/2| relative to π^{1/4}/2.
    pub terminal_rel_gap: f64,
    /// (τ, (a₁′ + (2/π^{1/4})a₁²)/((2/π^{1/4})a₁²)) at interior samples.
    pub ode_deviation: Vec<(f64, f64)>,
}

pub fn neutral_coefficient_fit(track: &ModeTrack, window: (f64, f64)) -> Result<NeutralFit> {
    let taus = track.taus();
    let idx = window_indices(&taus, window);
    if idx.len() < 3 {
        return Err(Error::InsufficientData(format!("{} samples in the neutral window", idx.len())));
    }
    let a1: Vec<f64> = track.series(|s| s.a.get(1).copied().unwrap_or(0.0));
    if idx.iter().any(|&i| !(a1[i] > 0.0)) {
        return Err(Error::Domain("a₁ is not positive on the window; not in the neutral regime".into()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &i in &idx {
        num += a1[i] / taus[i];
        den += 1.0 / (taus[i] * taus[i]);
    }
    let tau_a: Vec<(f64, f64)> = idx.iter().map(|&i| (taus[i], taus[i] * a1[i])).collect();
    let (lo, hi) = tau_a.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), (_, v)| (l.min(*v), h.max(*v)));
    let target = neutral_limit();
    let gaps: Vec<f64> = tau_a.iter().map(|(_, v)| (v - target).abs()).collect();
    let k = 2.0 / PI.powf(0.25);
    let ode_deviation = (1..idx.len() - 1)
        .map(|j| {
            let (p, c, n) = (idx[j - 1], idx[j], idx[j + 1]);
            let d = centered_derivative([taus[p], taus[c], taus[n]], [a1[p], a1[c], a1[n]]);
            (taus[c], (d + k * a1[c] * a1[c]) / (k * a1[c] * a1[c]))
        })
        .collect();
    Ok(NeutralFit {
        q: num / den,
        band: 0.5 * (hi - lo),
        monotone_approach: gaps.windows(2).all(|w| w[1] <= w[0]),
        terminal_rel_gap: gaps[gaps.len() - 1] / target,
        tau_a,
        ode_deviation,
    })
}

/// ⟨(∫₀^σ f²) f η, h₂⟩ / a₁² per sample; the nonlocal cubic term should be o(a₁²).
pub fn nonlocal_cubic_ratio(seq: &[RescaledProfile], track: &ModeTrack) -> Result<Vec<(f64, f64)>> {
    aligned(seq, track)?;
    let basis = HermiteBasis::new(2);
    let mut out = Vec::with_capacity(seq.len());
    for (r, s) in seq.iter().zip(&track.samples) {
        let g: Vec<f64> = r.j.iter().zip(&r.f).map(|(j, f)| j - f).collect();
        let g2: Vec<f64> = r.f.iter().map(|f| f * f).collect();
        let g = CubicHermite::exact(&r.sigma, &g, &g2);
        let f = r.f_interp();
        let ext = track.cutoff.quadrature_extent(r.tau).min(r.sigma_max());
        let rule = QuadratureRule::auto(ext)?;
        let cutoff = track.cutoff;
        let val = rule.integrate(|x| {
            let ax = x.abs();
            g.eval(ax) * f.eval(ax) * cutoff.eta(r.tau, x) * basis.eval(2, x).unwrap_or(0.0)
        });
        let a1 = s.a.get(1).copied().unwrap_or(0.0);
        out.push((r.tau, safe_ratio(val, a1 * a1)));
    }
    Ok(out)
}

fn aligned(seq: &[RescaledProfile], track: &ModeTrack) -> Result<()> {
    if seq.len() != track.samples.len() || seq.iter().zip(&track.samples).any(|(r, s)| r.tau != s.tau) {
        return Err(Error::InsufficientData("profile sequence and mode track are not aligned in τ".into()));
    }
    Ok(())
}

/// e(τ) = ‖(u − 1) − (σ² − 2)/(8τ)‖ / ‖(σ² − 2)/(8τ)‖ in L²(ρ) on |σ| ≤ R.
pub fn profile_fit(seq: &[RescaledProfile], r_max: f64) -> Result<Vec<(f64, f64)>> {
    let rule = QuadratureRule::new(r_max, 8, 16);
    seq.iter()
        .map(|r| {
            if r.sigma_max() < r_max {
                return Err(Error::Domain(format!("R = {r_max} exceeds the σ-extent {} at τ = {}", r.sigma_max(), r.tau)));
            }
            let u = r.u_interp();
            let model = |s: f64| (s * s - 2.0) / (8.0 * r.tau);
            let num = rule.integrate(|s| (u.eval(s.abs()) - 1.0 - model(s)).powi(2));
            let den = rule.integrate(|s| model(s).powi(2));
            Ok((r.tau, (num / den).sqrt()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub m: usize,
    pub rate: RateFit,
    /// λ_j nearest to the fitted rate.
    pub snapped: f64,
    pub snapped_mode: usize,
    pub snap_distance: f64,
    /// Median of a_m·e^{λ_m τ} on the window.
    pub c_hat: f64,
    /// (τ, Σ_{k≠m} a_k² / a_m²)
    pub dominance: Vec<(f64, f64)>,
    pub dominance_decreasing: bool,
    /// max |b_{m+1} − √(2/(m+1))·a_m| / |a_m| on the window (None if m is the top mode).
    pub relation_gap: Option<f64>,
}

pub fn exponential_fit(track: &ModeTrack, window: (f64, f64)) -> Result<ExponentialFit> {
    let taus = track.taus();
    let idx = window_indices(&taus, window);
    if idx.len() < 3 {
        return Err(Error::InsufficientData(format!("{} samples in the exponential window", idx.len())));
    }
    let last = &track.samples[idx[idx.len() - 1]];
    let m = (0..last.a.len()).max_by(|&i, &j| last.a[i].abs().total_cmp(&last.a[j].abs())).unwrap_or(0);
    let am: Vec<f64> = track.series(|s| s.a[m]);
    let rate = decay_rate_fit(&taus, &am, window)?;
    let snapped_mode = (2.0 * rate.rate + 1.0).round().max(0.0) as usize;
    let snapped = lambda(snapped_mode);
    let lam = lambda(m);
    let c_hat = median(&idx.iter().map(|&i| am[i] * (lam * taus[i]).exp()).collect::<Vec<_>>());
    let dominance: Vec<(f64, f64)> = idx
        .iter()
        .map(|&i| {
            let s = &track.samples[i];
            let other: f64 = s.a.iter().enumerate().filter(|(k, _)| *k != m).map(|(_, v)| v * v).sum();
            (s.tau, other / (s.a[m] * s.a[m]))
        })
        .collect();
    let third = dominance.len() / 3;
    let head = median(&dominance[..third.max(1)].iter().map(|d| d.1).collect::<Vec<_>>());
    let tail = median(&dominance[dominance.len() - third.max(1)..].iter().map(|d| d.1).collect::<Vec<_>>());
    let dominance_decreasing = tail < head || tail == 0.0;
    let relation_gap = (m < track.max_mode).then(|| idx.iter().map(|&i| track.samples[i].relation_gap[m].abs() / am[i].abs()).fold(0.0, f64::max));
    Ok(ExponentialFit { m, snap_distance: (rate.rate - snapped).abs(), rate, snapped, snapped_mode, c_hat, dominance, dominance_decreasing, relation_gap })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayVerdict {
    pub a: Vec<f64>,
    /// Decay rate of ‖fη‖ on the last sub-window, per A.
    pub lambda: Vec<f64>,
    /// Decay rates on consecutive sub-windows, per A.
    pub local_rates: Vec<Vec<f64>>,
    pub holds: bool,
    pub case1_flag: bool,
}

/// Rates of ‖fη‖ on `windows` consecutive sub-windows for each track. Rates
/// that keep growing along τ flag super-exponential decay.
pub fn decay_condition_monitor(tracks: &[ModeTrack], windows: usize) -> Result<DecayVerdict> {
    if tracks.len() < 2 {
        return Err(Error::InsufficientData("decay condition needs tracks for at least two A".into()));
    }
    let windows = windows.max(2);
    let mut out = DecayVerdict { a: Vec::new(), lambda: Vec::new(), local_rates: Vec::new(), holds: true, case1_flag: false };
    for t in tracks {
        let taus = t.taus();
        let norms = t.series(|s| s.f_eta_norm);
        if taus.len() < 3 * windows {
            return Err(Error::InsufficientData(format!("{} samples are too few for {windows} windows", taus.len())));
        }
        let (t0, t1) = (taus[0], taus[taus.len() - 1]);
        let w = (t1 - t0) / windows as f64;
        let rates =
            (0..windows).map(|k| decay_rate_fit(&taus, &norms, (t0 + k as f64 * w, t0 + (k + 1) as f64 * w)).map(|f| f.rate)).collect::<Result<Vec<_>>>()?;
        out.a.push(t.cutoff.a);
        out.lambda.push(rates[rates.len() - 1]);
        out.local_rates.push(rates);
    }
    let top = &out.local_rates[out.local_rates.len() - 1];
    let growing = top.windows(2).all(|p| p[1] > p[0]);
    let gain = top[top.len() - 1] - top[0];
    out.case1_flag = growing && gain > 0.5 * top[0].abs().max(1.0);
    let (lo, hi) = out.lambda.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    out.holds = !out.case1_flag && hi - lo <= 0.1 * hi.abs().max(1.0);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UMonitors {
    pub tau: Vec<f64>,
    /// b(τ)²/‖fη‖² with b the zero mode of Uη.
    pub b_ratio: Vec<f64>,
    /// sup_{|σ|≤R} |u − 1| / ‖fη‖
    pub sup_ratio: Vec<f64>,
    /// τ·u_σσ at the neck
    pub neck_curvature: Vec<f64>,
    /// τ·(1 − u) at the neck
    pub neck_gap: Vec<f64>,
    pub max_b_ratio: f64,
    pub max_sup_ratio: f64,
    /// max of τ·u_σσ(neck) and τ·(1 − u(neck)) over the window
    pub c0: f64,
}

pub fn u_minus_one_monitors(seq: &[RescaledProfile], track: &ModeTrack, r_max: f64) -> Result<UMonitors> {
    aligned(seq, track)?;
    let mut m = UMonitors {
        tau: Vec::new(),
        b_ratio: Vec::new(),
        sup_ratio: Vec::new(),
        neck_curvature: Vec::new(),
        neck_gap: Vec::new(),
        max_b_ratio: 0.0,
        max_sup_ratio: 0.0,
        c0: 0.0,
    };
    for (r, s) in seq.iter().zip(&track.samples) {
        let norm = s.f_eta_norm;
        let sup = r.sigma.iter().zip(&r.u).filter(|(x, _)| **x <= r_max).map(|(_, u)| (u - 1.0).abs()).fold(0.0, f64::max);
        let k0 = r.sigma.iter().position(|x| *x >= 0.0).unwrap_or(0);
        m.tau.push(r.tau);
        m.b_ratio.push(safe_ratio(s.b_mode * s.b_mode, norm * norm));
        m.sup_ratio.push(safe_ratio(sup, norm));
        m.neck_curvature.push(r.tau * r.u_sigmasigma[k0]);
        m.neck_gap.push(r.tau * (1.0 - r.u[k0]));
    }
    m.max_b_ratio = m.b_ratio.iter().cloned().fold(0.0, f64::max);
    m.max_sup_ratio = m.sup_ratio.iter().cloned().fold(0.0, f64::max);
    m.c0 = m.neck_curvature.iter().chain(&m.neck_gap).cloned().fold(0.0, f64::max);
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileMonitors {
    pub tau: Vec<f64>,
    /// √τ · sup_{|σ|≤A√τ} |u_σ|
    pub gradient: Vec<f64>,
    /// min u over |σ| ≤ 4A√τ (clipped to the grid)
    pub u_min: Vec<f64>,
    /// u at the outermost bump
    pub bump_u: Vec<f64>,
    /// slope of log u_bump against τ
    pub bump_exponent: f64,
}

pub fn profile_monitors(seq: &[RescaledProfile], a: f64) -> Result<ProfileMonitors> {
    let mut m = ProfileMonitors { tau: Vec::new(), gradient: Vec::new(), u_min: Vec::new(), bump_u: Vec::new(), bump_exponent: f64::NAN };
    for r in seq {
        let reach = a * r.tau.max(0.0).sqrt();
        let grad = r.sigma.iter().zip(&r.u_sigma).filter(|(x, _)| **x <= reach).map(|(_, v)| v.abs()).fold(0.0, f64::max);
        let u_min = r.sigma.iter().zip(&r.u).filter(|(x, _)| **x <= 4.0 * reach).map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
        let bump = (1..r.u.len().saturating_sub(1)).rfind(|&k| r.u[k] >= r.u[k - 1] && r.u[k] > r.u[k + 1]).map(|k| r.u[k]);
        m.tau.push(r.tau);
        m.gradient.push(r.tau.max(0.0).sqrt() * grad);
        m.u_min.push(u_min);
        m.bump_u.push(bump.unwrap_or(f64::NAN));
    }
    let pts: Vec<(f64, f64)> = m.tau.iter().zip(&m.bump_u).filter(|(_, b)| b.is_finite() && **b > 0.0).map(|(t, b)| (*t, b.ln())).collect();
    if pts.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        m.bump_exponent = line_fit(&x, &y)?.slope;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub case: MainCase,
    pub neutral: Option<NeutralFit>,
    pub profile: Option<Vec<(f64, f64)>>,
    pub exponential: Option<ExponentialFit>,
    /// (τ, b(τ)/‖fη‖)
    pub b_mode_monitor: Vec<(f64, f64)>,
    /// (τ, sup_{|σ|≤R}|u − 1|/‖fη‖), empty without profiles
    pub pointwise_monitor: Vec<(f64, f64)>,
}

/// Case selection from a classification: Neutral → neutral fits, Stable →
/// exponential fit (or fast decay when the decay condition is flagged).
pub fn assemble_report(
    class: &Classification,
    track: &ModeTrack,
    seq: Option<&[RescaledProfile]>,
    r_max: f64,
    decay: Option<&DecayVerdict>,
) -> Result<AsymptoticsReport> {
    let window = class.window;
    let mut rep = AsymptoticsReport {
        case: MainCase::Undetermined,
        neutral: None,
        profile: None,
        exponential: None,
        b_mode_monitor: track.samples.iter().map(|s| (s.tau, safe_ratio(s.b_mode.abs(), s.f_eta_norm))).collect(),
        pointwise_monitor: Vec::new(),
    };
    if let Some(seq) = seq {
        let mon = u_minus_one_monitors(seq, track, r_max)?;
        rep.pointwise_monitor = mon.tau.iter().cloned().zip(mon.sup_ratio.iter().cloned()).collect();
    }
    match class.tag {
        CaseTag::Neutral => {
            rep.neutral = Some(neutral_coefficient_fit(track, window)?);
            if let Some(seq) = seq {
                rep.profile = Some(profile_fit(seq, r_max)?.into_iter().filter(|(t, _)| *t >= window.0).collect());
            }
            rep.case = MainCase::Neutral;
        }
        CaseTag::Stable => {
            if decay.is_some_and(|d| d.case1_flag) {
                rep.case = MainCase::FastDecay;
            } else {
                let fit = exponential_fit(track, window)?;
                rep.case = if fit.dominance_decreasing || fit.dominance.iter().all(|d| d.1 < 1e-12) { MainCase::Exponential } else { MainCase::Undetermined };
                rep.exponential = Some(fit);
            }
        }
        CaseTag::Unstable | CaseTag::Undetermined => {}
    }
    Ok(rep)
}

/// The case tag the classifier tag corresponds to, for cross-checking.
pub fn expected_case(tag: CaseTag) -> MainCase {
    match tag {
        CaseTag::Neutral => MainCase::Neutral,
        CaseTag::Stable => MainCase::Exponential,
        CaseTag::Unstable | CaseTag::Undetermined => MainCase::Undetermined,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::{spectral_sample, CutoffSpec, ModeSample};
    use crate::mz::{classify, ClassifyConfig, MZTrajectory};

    fn manufactured<F: Fn(f64) -> (Vec<f64>, Vec<f64>)>(taus: &[f64], max_mode: usize, coeffs: F) -> ModeTrack {
        let rule = QuadratureRule::auto(40.0).unwrap();
        let basis = HermiteBasis::new(max_mode);
        let samples: Vec<ModeSample> = taus
            .iter()
            .map(|t| {
                let (a, b) = coeffs(*t);
                spectral_sample(&rule, &basis, *t, a, b, 8).unwrap()
            })
            .collect();
        ModeTrack { cutoff: CutoffSpec { a: 4.0 }, k_w: 8, max_mode, samples }
    }

    fn taus(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    fn neutral_profile(tau: f64) -> RescaledProfile {
        let sigma: Vec<f64> = (0..=400).map(|i| i as f64 * 0.025).collect();
        let u = sigma.iter().map(|s| 1.0 + (s * s - 2.0) / (8.0 * tau)).collect();
        let us = sigma.iter().map(|s| s / (4.0 * tau)).collect();
        let uss = sigma.iter().map(|_| 1.0 / (4.0 * tau)).collect();
        let mut r = RescaledProfile::from_fields(2, 0.0, 1.0, sigma, u, us, uss);
        r.tau = tau;
        r
    }

    #[test]
    fn exact_neutral_coefficient() {
        let ts = taus(10.0, 30.0, 401);
        let q = neutral_limit();
        assert!((q - 0.665_7).abs() < 1e-4);
        let t = manufactured(&ts, 4, |t| (vec![0.0, q / t, 0.0, 0.0, 0.0], vec![0.0; 5]));
        let f = neutral_coefficient_fit(&t, (10.0, 30.0)).unwrap();
        assert!((f.q - q).abs() < 1e-8);
        assert!(f.band < 1e-12);
        assert!(f.ode_deviation.iter().all(|(_, d)| d.abs() < 1e-3));
    }

    #[test]
    fn neutral_ode_converges() {
        // a' = −(2/π^{1/4})a², a(10) = 0.05
        let k = 2.0 / PI.powf(0.25);
        let exact = |t: f64| 1.0 / (1.0 / 0.05 + k * (t - 10.0));
        let ts = taus(10.0, 1000.0, 200);
        let t = manufactured(&ts, 2, |t| (vec![0.0, exact(t), 0.0], vec![0.0; 3]));
        let f = neutral_coefficient_fit(&t, (10.0, 1000.0)).unwrap();
        assert!(f.monotone_approach);
        assert!(f.terminal_rel_gap < 0.02);
        let late = neutral_coefficient_fit(&t, (500.0, 1000.0)).unwrap();
        assert!((late.q - neutral_limit()).abs() < (f.q - neutral_limit()).abs());
    }

    #[test]
    fn exact_profile_and_mode_relation() {
        let seq: Vec<RescaledProfile> = [5.0, 8.0, 12.0].iter().map(|t| neutral_profile(*t)).collect();
        for (_, e) in profile_fit(&seq, 3.0).unwrap() {
            assert!(e < 1e-12);
        }
        let rule = QuadratureRule::auto(40.0).unwrap();
        let basis = HermiteBasis::new(4);
        let tau = 8.0;
        let p = crate::hermite::project(&rule, &basis, |s| (s * s - 2.0) / (8.0 * tau));
        assert!((p.coeffs[2] - PI.powf(0.25) / (2.0 * tau)).abs() < 1e-12);
        let m = u_minus_one_monitors(
            &[neutral_profile(8.0)],
            &ModeTrack {
                cutoff: CutoffSpec { a: 4.0 },
                k_w: 8,
                max_mode: 1,
                samples: vec![spectral_sample(&rule, &HermiteBasis::new(1), 8.0, vec![0.0, 0.1], vec![0.0, 0.0], 8).unwrap()],
            },
            3.0,
        )
        .unwrap();
        assert!((m.neck_gap[0] - 0.25).abs() < 1e-12);
        assert!((m.neck_curvature[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn single_mode_exponential() {
        let ts = taus(2.0, 12.0, 101);
        let t = manufactured(&ts, 6, |t| {
            let mut a = vec![0.0; 7];
            a[3] = 3.0 * (-t).exp();
            a[5] = 0.01 * (-1.5 * t).exp();
            (a, vec![0.0; 7])
        });
        let f = exponential_fit(&t, (2.0, 12.0)).unwrap();
        assert_eq!(f.m, 3);
        assert!((f.rate.rate - 1.0).abs() < 1e-6 && f.snapped_mode == 3);
        assert!((f.c_hat - 3.0).abs() < 1e-9);
        assert!(f.dominance_decreasing);
        let t = manufactured(&ts, 4, |t| (vec![0.0, 0.0, (-0.5 * t).exp(), 0.0, 0.0], vec![0.0; 5]));
        let f = exponential_fit(&t, (2.0, 12.0)).unwrap();
        assert_eq!(f.m, 2);
        assert!((f.snapped - 0.5).abs() < 1e-15 && f.snap_distance < 1e-6);
        let t = manufactured(&ts, 4, |t| (vec![0.0, 0.0, 0.0, (-1.05 * t).exp(), 0.0], vec![0.0; 5]));
        assert!(exponential_fit(&t, (2.0, 12.0)).unwrap().snap_distance > 0.02);
    }

    #[test]
    fn decay_condition_cases() {
        let ts = taus(1.0, 9.0, 161);
        let mk = |g: &dyn Fn(f64) -> f64, a: f64| {
            let mut t = manufactured(&ts, 2, |t| (vec![0.0, 0.0, g(t)], vec![0.0; 3]));
            t.cutoff = CutoffSpec { a };
            t
        };
        let exp2 = |t: f64| (-2.0 * t).exp();
        let v = decay_condition_monitor(&[mk(&exp2, 3.0), mk(&exp2, 4.0)], 4).unwrap();
        assert!(v.holds && !v.case1_flag);
        assert!(v.lambda.iter().all(|l| (l - 2.0).abs() < 1e-9));
        let gauss = |t: f64| (-t * t).exp();
        let v = decay_condition_monitor(&[mk(&gauss, 3.0), mk(&gauss, 4.0)], 4).unwrap();
        assert!(v.case1_flag && !v.holds);
        let inv = |t: f64| 1.0 / t;
        let v = decay_condition_monitor(&[mk(&inv, 3.0), mk(&inv, 4.0)], 4).unwrap();
        assert!(v.holds && v.lambda[1] < 0.2);
    }

    #[test]
    fn case_tags_agree_on_manufactured_data() {
        let ts = taus(0.0, 20.0, 201);
        let cases: Vec<(ModeTrack, MainCase)> = vec![
            (manufactured(&ts, 4, |t| (vec![0.0, 0.6657 / (t + 5.0), 0.0, 1e-3 / (t + 5.0).powi(2), 0.0], vec![0.0; 5])), MainCase::Neutral),
            (manufactured(&ts, 4, |t| (vec![0.0, 0.0, 0.0, 3.0 * (-t).exp(), 0.0], vec![0.0; 5])), MainCase::Exponential),
            (manufactured(&ts, 4, |t| (vec![0.0, 0.0, (-0.5 * t).exp(), 0.0, 0.01 * (-1.5 * t).exp()], vec![0.0; 5])), MainCase::Exponential),
        ];
        for (track, want) in cases {
            let traj = MZTrajectory::from_track(&track, "manufactured").unwrap();
            let class = classify(&traj, &ClassifyConfig::default()).unwrap();
            let rep = assemble_report(&class, &track, None, 3.0, None).unwrap();
            assert_eq!(rep.case, want);
            assert_eq!(expected_case(class.tag), rep.case);
        }
    }
}
