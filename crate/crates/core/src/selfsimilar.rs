//! Self-similar variables around the equator neck.
//!
//! With T the singular time, τ = −log(T−t), σ = s/√(T−t) and
//! u = ψ/√(2(n−1)(T−t)), the rescaled radius obeys
//!
//!   u_τ = u_σσ − (σ/2)u_σ − nJu_σ + ½(u − 1/u) + (n−1)u_σ²/u,
//!   J = ∫₀^σ u_σσ/u dσ = u_σ/u + ∫₀^σ (u_σ/u)² dσ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{centered_derivative, fornberg_weights, CubicHermite, CumulativeRule};
use crate::profile::{derivatives, DiffOps, FlowProfile, OuterBoundary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledProfile {
    pub n: usize,
    pub t: f64,
    pub t_est: f64,
    pub tau: f64,
    /// Image of the arclength grid, starting at the equator.
    pub sigma: Vec<f64>,
    pub u: Vec<f64>,
    pub u_sigma: Vec<f64>,
    pub u_sigmasigma: Vec<f64>,
    /// log u
    pub big_u: Vec<f64>,
    /// u_σ/u
    pub f: Vec<f64>,
    pub j: Vec<f64>,
    /// Largest gap between the two forms of J.
    pub j_discrepancy: f64,
}

pub fn rescale(profile: &FlowProfile, t_est: f64) -> Result<RescaledProfile> {
    let ops = DiffOps::new(&profile.x_grid, profile.outer);
    rescale_with(profile, &ops, t_est)
}

pub fn rescale_with(profile: &FlowProfile, ops: &DiffOps, t_est: f64) -> Result<RescaledProfile> {
    profile.validate()?;
    if !(profile.t < t_est) {
        return Err(Error::Domain(format!("t = {} is not before T_est = {t_est}", profile.t)));
    }
    let d = derivatives(profile, ops);
    let end = match profile.outer {
        OuterBoundary::Pole => profile.len() - 1,
        OuterBoundary::Mirror => profile.len(),
    };
    let rem = t_est - profile.t;
    let sq = rem.sqrt();
    let norm = (2.0 * (profile.n as f64 - 1.0)).sqrt();
    let sigma: Vec<f64> = d.s[..end].iter().map(|s| s / sq).collect();
    let u: Vec<f64> = profile.psi[..end].iter().map(|p| p / (norm * sq)).collect();
    let u_sigma: Vec<f64> = d.psi_s[..end].iter().map(|p| p / norm).collect();
    let u_sigmasigma: Vec<f64> = d.psi_ss[..end].iter().map(|p| p * sq / norm).collect();
    Ok(RescaledProfile::from_fields(profile.n, profile.t, t_est, sigma, u, u_sigma, u_sigmasigma))
}

impl RescaledProfile {
    /// Builds the derived fields from u and its first two σ-derivatives.
    pub fn from_fields(n: usize, t: f64, t_est: f64, sigma: Vec<f64>, u: Vec<f64>, u_sigma: Vec<f64>, u_sigmasigma: Vec<f64>) -> Self {
        let big_u = u.iter().map(|v| v.ln()).collect();
        let f: Vec<f64> = u.iter().zip(&u_sigma).map(|(a, b)| b / a).collect();
        let (j, j_discrepancy) = j_forms(&sigma, &u, &f, &u_sigmasigma);
        RescaledProfile { n, t, t_est, tau: -(t_est - t).ln(), sigma, u, u_sigma, u_sigmasigma, big_u, f, j, j_discrepancy }
    }

    pub fn sigma_max(&self) -> f64 {
        *self.sigma.last().unwrap_or(&0.0)
    }

    pub fn u_interp(&self) -> CubicHermite {
        CubicHermite::exact(&self.sigma, &self.u, &self.u_sigma)
    }

    pub fn u_sigma_interp(&self) -> CubicHermite {
        CubicHermite::exact(&self.sigma, &self.u_sigma, &self.u_sigmasigma)
    }

    pub fn f_interp(&self) -> CubicHermite {
        let df: Vec<f64> = (0..self.u.len()).map(|k| self.u_sigmasigma[k] / self.u[k] - self.f[k] * self.f[k]).collect();
        CubicHermite::exact(&self.sigma, &self.f, &df)
    }

    pub fn big_u_interp(&self) -> CubicHermite {
        CubicHermite::exact(&self.sigma, &self.big_u, &self.f)
    }

    pub fn j_interp(&self) -> CubicHermite {
        let dj: Vec<f64> = (0..self.u.len()).map(|k| self.u_sigmasigma[k] / self.u[k]).collect();
        CubicHermite::exact(&self.sigma, &self.j, &dj)
    }

    /// u_σσ has no exact slope available; a monotone cubic is used.
    pub fn u_sigmasigma_interp(&self) -> CubicHermite {
        CubicHermite::pchip(&self.sigma, &self.u_sigmasigma)
    }
}

/// J by the integration-by-parts form, and the largest gap to the direct form.
pub fn compute_j(r: &RescaledProfile) -> (Vec<f64>, f64) {
    j_forms(&r.sigma, &r.u, &r.f, &r.u_sigmasigma)
}

fn j_forms(sigma: &[f64], u: &[f64], f: &[f64], u_ss: &[f64]) -> (Vec<f64>, f64) {
    let m = sigma.len();
    if m == 0 {
        return (Vec::new(), 0.0);
    }
    let rule = CumulativeRule::new(sigma);
    let f2: Vec<f64> = f.iter().map(|v| v * v).collect();
    let direct_integrand: Vec<f64> = (0..m).map(|k| u_ss[k] / u[k]).collect();
    let mut a = vec![0.0; m];
    let mut b = vec![0.0; m];
    rule.apply(&f2, &mut a);
    rule.apply(&direct_integrand, &mut b);
    // integrals are anchored at σ = 0, which need not be the first node
    let k0 = sigma.iter().position(|s| *s >= 0.0).unwrap_or(0);
    let (a0, b0, f0) = (a[k0], b[k0], f[k0]);
    let mut gap: f64 = 0.0;
    let j: Vec<f64> = (0..m)
        .map(|k| {
            let by_parts = f[k] - f0 + a[k] - a0;
            gap = gap.max((by_parts - (b[k] - b0)).abs());
            by_parts
        })
        .collect();
    (j, gap)
}

/// Right side of the u-equation at one point.
pub fn u_equation_rhs(n: usize, sigma: f64, u: f64, u_s: f64, u_ss: f64, j: f64) -> f64 {
    let nf = n as f64;
    u_ss - 0.5 * sigma * u_s - nf * j * u_s + 0.5 * (u - 1.0 / u) + (nf - 1.0) * u_s * u_s / u
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UResidual {
    /// τ of each interior slice.
    pub tau: Vec<f64>,
    pub max: Vec<f64>,
    /// Gaussian-weighted L² norm, normalized by ∫ρ over the window.
    pub weighted_l2: Vec<f64>,
    pub overall_max: f64,
    pub overall_weighted_l2: f64,
}

/// Pointwise residual of the u-equation on 0 ≤ σ ≤ `sigma_max`, with u_τ from
/// centered differences of consecutive slices resampled at fixed σ.
pub fn residual_u_equation(seq: &[RescaledProfile], sigma_max: f64, points: usize) -> Result<UResidual> {
    if seq.len() < 3 {
        return Err(Error::InsufficientData(format!("{} slices, need at least 3", seq.len())));
    }
    if points < 2 || !(sigma_max > 0.0) {
        return Err(Error::InsufficientData("empty σ-window".into()));
    }
    if let Some(r) = seq.iter().find(|r| r.sigma_max() < sigma_max) {
        return Err(Error::InsufficientData(format!("slice at τ = {} covers σ ≤ {}, window needs {sigma_max}", r.tau, r.sigma_max())));
    }
    let grid: Vec<f64> = (0..points).map(|k| sigma_max * k as f64 / (points - 1) as f64).collect();
    let h = grid[1] - grid[0];
    let interps: Vec<CubicHermite> = seq.iter().map(|r| r.u_interp()).collect();
    let mut out = UResidual { tau: Vec::new(), max: Vec::new(), weighted_l2: Vec::new(), overall_max: 0.0, overall_weighted_l2: 0.0 };
    for i in 1..seq.len() - 1 {
        let mid = &seq[i];
        let taus = [seq[i - 1].tau, mid.tau, seq[i + 1].tau];
        let (u_i, us_i, uss_i, j_i) = (mid.u_interp(), mid.u_sigma_interp(), mid.u_sigmasigma_interp(), mid.j_interp());
        let mut mx: f64 = 0.0;
        let (mut num, mut den) = (0.0, 0.0);
        for (k, &s) in grid.iter().enumerate() {
            let ut = centered_derivative(taus, [interps[i - 1].eval(s), interps[i].eval(s), interps[i + 1].eval(s)]);
            let res = ut - u_equation_rhs(mid.n, s, u_i.eval(s), us_i.eval(s), uss_i.eval(s), j_i.eval(s));
            mx = mx.max(res.abs());
            let w = (-s * s / 4.0).exp() * if k == 0 || k == points - 1 { 0.5 * h } else { h };
            num += w * res * res;
            den += w;
        }
        let l2 = (num / den).sqrt();
        out.tau.push(mid.tau);
        out.max.push(mx);
        out.weighted_l2.push(l2);
        out.overall_max = out.overall_max.max(mx);
        out.overall_weighted_l2 = out.overall_weighted_l2.max(l2);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SigmaSolution {
    pub sigma: Vec<f64>,
    pub tau: Vec<f64>,
    /// u on `sigma` at each requested τ.
    pub u: Vec<Vec<f64>>,
}

/// Evolves u directly by the u-equation on 0 ≤ σ ≤ `sigma_max` (even at σ = 0,
/// Dirichlet data `boundary(τ)` at σ_max), starting from `initial` resampled
/// onto `points` uniform nodes. Returns u at each τ in `outputs` (increasing,
/// not before the initial τ).
pub fn sigma_integrate<B: Fn(f64) -> f64>(initial: &RescaledProfile, sigma_max: f64, points: usize, boundary: B, outputs: &[f64]) -> Result<SigmaSolution> {
    if points < 6 {
        return Err(Error::InsufficientData("σ-integrator needs at least 6 nodes".into()));
    }
    if initial.sigma_max() < sigma_max {
        return Err(Error::InsufficientData(format!("initial slice covers σ ≤ {}, window needs {sigma_max}", initial.sigma_max())));
    }
    if outputs.windows(2).any(|w| w[1] < w[0]) || outputs.first().is_some_and(|t| *t < initial.tau) {
        return Err(Error::Domain("output times must be increasing and not before the initial τ".into()));
    }
    let last = points - 1;
    let h = sigma_max / last as f64;
    let sigma: Vec<f64> = (0..points).map(|k| k as f64 * h).collect();
    let ui = initial.u_interp();
    let mut u: Vec<f64> = sigma.iter().map(|s| ui.eval(*s)).collect();
    let ops = SigmaOps::new(&sigma);
    let mut tau = initial.tau;
    let dt0 = 0.25 * h * h;
    let mut sol = SigmaSolution { sigma: sigma.clone(), tau: Vec::new(), u: Vec::new() };
    let mut ks: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; points]);
    let mut tmp = vec![0.0; points];
    for &target in outputs {
        while tau < target {
            let dt = dt0.min(target - tau);
            let stages = [0.0, 0.5, 0.5, 1.0];
            for st in 0..4 {
                for k in 0..points {
                    tmp[k] = if st == 0 { u[k] } else { u[k] + stages[st] * dt * ks[st - 1][k] };
                }
                tmp[last] = boundary(tau + stages[st] * dt);
                ops.rhs(initial.n, &tmp, &mut ks[st]);
            }
            for k in 0..last {
                u[k] += dt / 6.0 * (ks[0][k] + 2.0 * ks[1][k] + 2.0 * ks[2][k] + ks[3][k]);
            }
            tau += dt;
            u[last] = boundary(tau);
            if let Some(k) = u.iter().position(|v| !(*v > 0.0)) {
                return Err(Error::BlowUpPassed { t: tau, detail: format!("u[{k}] = {:e} in the σ-integrator", u[k]) });
            }
        }
        sol.tau.push(target);
        sol.u.push(u.clone());
    }
    Ok(sol)
}

struct SigmaOps {
    sigma: Vec<f64>,
    rule: CumulativeRule,
    // (first index into the even-extended array, d1 weights, d2 weights)
    stencils: Vec<(isize, [f64; 5], [f64; 5])>,
}

impl SigmaOps {
    fn new(sigma: &[f64]) -> Self {
        let m = sigma.len() as isize;
        let mut stencils = Vec::new();
        for k in 0..m - 1 {
            let lo = (k - 2).min(m - 5);
            let pos: Vec<f64> = (lo..lo + 5).map(|q| if q < 0 { -sigma[(-q) as usize] } else { sigma[q as usize] }).collect();
            let w = fornberg_weights(sigma[k as usize], &pos, 2);
            let mut d1 = [0.0; 5];
            let mut d2 = [0.0; 5];
            d1.copy_from_slice(&w[1]);
            d2.copy_from_slice(&w[2]);
            stencils.push((lo, d1, d2));
        }
        SigmaOps { sigma: sigma.to_vec(), rule: CumulativeRule::new(sigma), stencils }
    }

    fn rhs(&self, n: usize, u: &[f64], out: &mut [f64]) {
        let m = u.len();
        let mut us = vec![0.0; m];
        let mut uss = vec![0.0; m];
        for (k, (lo, d1, d2)) in self.stencils.iter().enumerate() {
            for q in 0..5 {
                let v = u[(lo + q as isize).unsigned_abs()];
                us[k] += d1[q] * v;
                uss[k] += d2[q] * v;
            }
        }
        us[0] = 0.0;
        let f2: Vec<f64> = (0..m).map(|k| (us[k] / u[k]).powi(2)).collect();
        let mut j = vec![0.0; m];
        self.rule.apply(&f2, &mut j);
        for k in 0..m - 1 {
            let jk = us[k] / u[k] + j[k];
            out[k] = u_equation_rhs(n, self.sigma[k], u[k], us[k], uss[k], jk);
        }
        out[m - 1] = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{cylinder, round_sphere, GridSpec};
    use crate::numerics::adaptive_simpson;
    use std::f64::consts::FRAC_PI_2;

    /// Exact shrinking sphere of radius √(2n(T−t)) on a uniform grid.
    fn sphere_at(n: usize, t_sing: f64, t: f64, nodes: usize) -> FlowProfile {
        let r = (2.0 * n as f64 * (t_sing - t)).sqrt();
        let x: Vec<f64> = (0..nodes).map(|k| k as f64 / (nodes - 1) as f64).collect();
        let psi: Vec<f64> = x.iter().map(|x| if *x == 1.0 { 0.0 } else { r * (FRAC_PI_2 * x).cos() }).collect();
        let phi = vec![r * FRAC_PI_2; nodes];
        FlowProfile::new(n, t, x, psi, phi, OuterBoundary::Pole).unwrap()
    }

    #[test]
    fn cylinder_is_stationary() {
        let n = 3;
        let psi0: f64 = 2.0;
        let t_sing = psi0 * psi0 / (2.0 * (n as f64 - 1.0));
        let p = cylinder(n, psi0, 5.0, 41).unwrap();
        let r = rescale(&p, t_sing).unwrap();
        for k in 0..r.u.len() {
            assert!((r.u[k] - 1.0).abs() < 1e-14);
            assert!(r.f[k].abs() < 1e-12);
            assert!(r.j[k].abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_equator_tends_to_root_two() {
        let p = round_sphere(2, 2.0, GridSpec::default()).unwrap();
        let r = rescale(&p, 1.0).unwrap();
        assert!((r.u[0] - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn later_t_est_shifts_tau() {
        let p = sphere_at(2, 1.0, 0.3, 41);
        let a = rescale(&p, 1.0).unwrap();
        let b = rescale(&p, 1.2).unwrap();
        assert!((b.tau - a.tau + (0.9f64 / 0.7).ln()).abs() < 1e-14);
        assert!(rescale(&p, 0.3).is_err());
    }

    fn manufactured(sigma: Vec<f64>) -> RescaledProfile {
        let u: Vec<f64> = sigma.iter().map(|s| (s * s / 10.0).exp()).collect();
        let us: Vec<f64> = sigma.iter().zip(&u).map(|(s, u)| s / 5.0 * u).collect();
        let uss: Vec<f64> = sigma.iter().zip(&u).map(|(s, u)| (0.2 + s * s / 25.0) * u).collect();
        RescaledProfile::from_fields(2, 0.0, 1.0, sigma, u, us, uss)
    }

    #[test]
    fn j_forms_agree_on_a_manufactured_profile() {
        let sigma: Vec<f64> = (0..=400).map(|k| k as f64 * 0.01).collect();
        let r = manufactured(sigma);
        assert!(r.j_discrepancy < 1e-8, "{}", r.j_discrepancy);
        let direct = adaptive_simpson(&|s: f64| 0.2 + s * s / 25.0, 0.0, 1.0, 1e-13);
        assert!((r.j[100] - direct).abs() < 1e-8);
    }

    #[test]
    fn j_is_odd() {
        let sigma: Vec<f64> = (-200..=200).map(|k| k as f64 * 0.01).collect();
        let r = manufactured(sigma);
        for k in 0..=200 {
            assert!((r.j[200 + k] + r.j[200 - k]).abs() < 1e-10);
        }
    }

    #[test]
    fn sphere_sequence_has_small_residual() {
        // the rescaled sphere is a stationary solution of the u-equation
        let seq: Vec<RescaledProfile> = (0..5).map(|k| rescale(&sphere_at(2, 1.0, 0.5 + 0.05 * k as f64, 161), 1.0).unwrap()).collect();
        let res = residual_u_equation(&seq, 2.0, 41).unwrap();
        assert!(res.overall_max < 1e-5, "{}", res.overall_max);
        let wrong: Vec<RescaledProfile> = (0..5).map(|k| rescale(&sphere_at(2, 1.0, 0.5 + 0.05 * k as f64, 161), 1.05).unwrap()).collect();
        let bad = residual_u_equation(&wrong, 2.0, 41).unwrap();
        assert!(bad.overall_max > 1e3 * res.overall_max, "{} vs {}", bad.overall_max, res.overall_max);
    }

    #[test]
    fn sigma_integrator_keeps_stationary_solutions() {
        let r = rescale(&sphere_at(2, 1.0, 0.5, 161), 1.0).unwrap();
        let edge = r.u_interp().eval(2.0);
        let sol = sigma_integrate(&r, 2.0, 41, |_| edge, &[r.tau + 0.5, r.tau + 1.0]).unwrap();
        let ui = r.u_interp();
        for (k, s) in sol.sigma.iter().enumerate() {
            assert!((sol.u[1][k] - ui.eval(*s)).abs() < 1e-5);
        }
        let c = rescale(&cylinder(2, 1.0, 40.0, 41).unwrap(), 0.5).unwrap();
        let sol = sigma_integrate(&c, 5.0, 41, |_| 1.0, &[c.tau + 1.0]).unwrap();
        assert!(sol.u[0].iter().all(|v| (v - 1.0).abs() < 1e-13));
    }
}
