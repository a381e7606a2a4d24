//! Neck-region equation for Z(τ,u) = ψ_s² written against u, its explicit
//! super-solution Z̄ = (B/τ)(1 − (u + c/τ)⁻²), and comparison against runs.
//!
//! F[z] = (n−1)𝓓[z] + 𝓠[z] − 2(n−1)z_τ with
//!   𝓓[z] = 2z/u² + (1/u − u)z_u,
//!   𝓠[z] = z z_uu − ½z_u² − z z_u/u − 2(n−1)z²/u².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selfsimilar::RescaledProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub b: f64,
    pub c: f64,
    pub l: f64,
    pub tau0: f64,
    pub n: usize,
}

impl BarrierParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.c > 0.0 && self.l > 1.0 && self.n >= 2) {
            return Err(Error::Parameter(format!(
                "barrier needs B > 0, c > 0, L > 1, n ≥ 2 (got B = {}, c = {}, L = {}, n = {})",
                self.b, self.c, self.l, self.n
            )));
        }
        Ok(())
    }
}

pub fn d_part(z: f64, z_u: f64, u: f64) -> f64 {
    2.0 * z / (u * u) + (1.0 / u - u) * z_u
}

pub fn q_part(n: usize, z: f64, z_u: f64, z_uu: f64, u: f64) -> f64 {
    let nf = n as f64;
    z * z_uu - 0.5 * z_u * z_u - z * z_u / u - 2.0 * (nf - 1.0) * z * z / (u * u)
}

pub fn f_pointwise(n: usize, z: f64, z_u: f64, z_uu: f64, z_tau: f64, u: f64) -> f64 {
    let nf = n as f64;
    (nf - 1.0) * d_part(z, z_u, u) + q_part(n, z, z_u, z_uu, u) - 2.0 * (nf - 1.0) * z_tau
}

/// Z̄ and its exact derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierValue {
    pub z: f64,
    pub z_u: f64,
    pub z_uu: f64,
    pub z_tau: f64,
}

pub fn supersolution_eval(p: &BarrierParams, tau: f64, u: f64) -> Result<f64> {
    Ok(supersolution_derivs(p, tau, u)?.z)
}

pub fn supersolution_derivs(p: &BarrierParams, tau: f64, u: f64) -> Result<BarrierValue> {
    let v = u + p.c / tau;
    if !(v > 0.0) {
        return Err(Error::Domain(format!("u + c/τ = {v} must be positive")));
    }
    let k = p.b / tau;
    let v2 = v * v;
    let v3 = v2 * v;
    Ok(BarrierValue {
        z: k * (1.0 - 1.0 / v2),
        z_u: 2.0 * k / v3,
        z_uu: -6.0 * k / (v3 * v),
        z_tau: -(p.b / (tau * tau)) * (1.0 - 1.0 / v2) - 2.0 * p.b * p.c / (tau * tau * tau * v3),
    })
}

/// F[Z̄] from the closed-form derivatives.
pub fn f_of_barrier(p: &BarrierParams, tau: f64, u: f64) -> Result<f64> {
    let z = supersolution_derivs(p, tau, u)?;
    Ok(f_pointwise(p.n, z.z, z.z_u, z.z_uu, z.z_tau, u))
}

/// Z sampled on a tensor (τ, u) grid; `values[i][k]` is at (taus[i], us[k]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZGrid {
    pub taus: Vec<f64>,
    pub us: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ZGrid {
    pub fn from_fn<F: Fn(f64, f64) -> f64>(taus: Vec<f64>, us: Vec<f64>, f: F) -> Self {
        let values = taus.iter().map(|t| us.iter().map(|u| f(*t, *u)).collect()).collect();
        ZGrid { taus, us, values }
    }
}

/// F[Z] on the interior of a grid, with its parts, by second-order differences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FResidual {
    pub taus: Vec<f64>,
    pub us: Vec<f64>,
    pub f: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub z_tau: Vec<Vec<f64>>,
}

fn three_point(x: [f64; 3], y: [f64; 3]) -> (f64, f64) {
    let (h0, h1) = (x[1] - x[0], x[2] - x[1]);
    let d1 = -h1 / (h0 * (h0 + h1)) * y[0] + (h1 - h0) / (h0 * h1) * y[1] + h0 / (h1 * (h0 + h1)) * y[2];
    let d2 = 2.0 * (y[0] / (h0 * (h0 + h1)) - y[1] / (h0 * h1) + y[2] / (h1 * (h0 + h1)));
    (d1, d2)
}

pub fn f_operator_raw(grid: &ZGrid, n: usize) -> Result<FResidual> {
    let (nt, nu) = (grid.taus.len(), grid.us.len());
    if nt < 3 || nu < 3 {
        return Err(Error::InsufficientData("F needs at least 3×3 grid points".into()));
    }
    let nf = n as f64;
    let mut out = FResidual { taus: grid.taus[1..nt - 1].to_vec(), us: grid.us[1..nu - 1].to_vec(), f: vec![], d: vec![], q: vec![], z_tau: vec![] };
    for i in 1..nt - 1 {
        let (mut fr, mut dr, mut qr, mut tr) = (vec![], vec![], vec![], vec![]);
        for k in 1..nu - 1 {
            let u = grid.us[k];
            let z = grid.values[i][k];
            let (z_u, z_uu) = three_point([grid.us[k - 1], u, grid.us[k + 1]], [grid.values[i][k - 1], z, grid.values[i][k + 1]]);
            let (z_t, _) = three_point([grid.taus[i - 1], grid.taus[i], grid.taus[i + 1]], [grid.values[i - 1][k], z, grid.values[i + 1][k]]);
            let d = d_part(z, z_u, u);
            let q = q_part(n, z, z_u, z_uu, u);
            dr.push(d);
            qr.push(q);
            tr.push(z_t);
            fr.push((nf - 1.0) * d + q - 2.0 * (nf - 1.0) * z_t);
        }
        out.f.push(fr);
        out.d.push(dr);
        out.q.push(qr);
        out.z_tau.push(tr);
    }
    Ok(out)
}

/// F[Z] by differencing, after checking on the same grid that differencing
/// reproduces the closed-form F[Z̄] for a reference barrier to 1%.
pub fn f_operator(grid: &ZGrid, n: usize) -> Result<FResidual> {
    let reference = BarrierParams { b: 1.0, c: 1.0, l: 2.0, tau0: 1.0, n };
    let probe = ZGrid::from_fn(grid.taus.clone(), grid.us.clone(), |t, u| supersolution_eval(&reference, t, u).unwrap_or(f64::NAN));
    let fd = f_operator_raw(&probe, n)?;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (i, t) in fd.taus.iter().enumerate() {
        for (k, u) in fd.us.iter().enumerate() {
            let exact = f_of_barrier(&reference, *t, *u)?;
            worst = worst.max((fd.f[i][k] - exact).abs());
            scale = scale.max(exact.abs());
        }
    }
    if !(worst <= 1e-2 * scale) {
        return Err(Error::Domain(format!("grid too coarse: differencing error {worst:e} against |F| up to {scale:e} on the reference barrier")));
    }
    f_operator_raw(grid, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    /// min of −F[Z̄] over the grid
    pub min: f64,
    pub tau_at_min: f64,
    pub u_at_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertGrid {
    pub tau_min: f64,
    pub tau_max: f64,
    pub tau_points: usize,
    pub u_points: usize,
}

impl Default for CertGrid {
    fn default() -> Self {
        CertGrid { tau_min: 50.0, tau_max: 500.0, tau_points: 120, u_points: 400 }
    }
}

/// Minimum of −F[Z̄] over τ log-spaced in the range and 1 − c/τ ≤ u ≤ L.
pub fn verify_supersolution(p: &BarrierParams, g: &CertGrid) -> Result<Margin> {
    p.validate()?;
    if !(g.tau_min > 0.0 && g.tau_max >= g.tau_min && g.tau_points >= 1 && g.u_points >= 2) {
        return Err(Error::Parameter("certification grid is empty".into()));
    }
    let mut best = Margin { min: f64::INFINITY, tau_at_min: f64::NAN, u_at_min: f64::NAN };
    for i in 0..g.tau_points {
        let frac = if g.tau_points == 1 { 0.0 } else { i as f64 / (g.tau_points - 1) as f64 };
        let tau = g.tau_min * (g.tau_max / g.tau_min).powf(frac);
        let lo = 1.0 - p.c / tau;
        for k in 0..g.u_points {
            let u = lo + (p.l - lo) * k as f64 / (g.u_points - 1) as f64;
            let m = -f_of_barrier(p, tau, u)?;
            if m < best.min {
                best = Margin { min: m, tau_at_min: tau, u_at_min: u };
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct B0Search {
    pub b0: f64,
    /// margin at B = b0 (≥ 0)
    pub margin: f64,
    /// margin at the lower bisection bracket (< 0)
    pub margin_below: f64,
    pub below: f64,
}

/// Smallest B (to relative 10⁻¹⁰) with −F[Z̄] ≥ 0 on the grid.
pub fn find_b0(n: usize, c: f64, l: f64, g: &CertGrid) -> Result<B0Search> {
    let params = |b: f64| BarrierParams { b, c, l, tau0: g.tau_min, n };
    let margin = |b: f64| verify_supersolution(&params(b), g).map(|m| m.min);
    let mut hi = 1.0;
    let mut guard = 0;
    while margin(hi)? < 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Parameter(format!("no finite B₀ for c = {c}, L = {l}")));
        }
    }
    let mut lo = hi / 2.0;
    while margin(lo)? >= 0.0 {
        hi = lo;
        lo /= 2.0;
        if lo < 1e-300 {
            return Ok(B0Search { b0: 0.0, margin: margin(hi)?, margin_below: f64::NAN, below: 0.0 });
        }
    }
    while (hi - lo) > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if margin(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(B0Search { b0: hi, margin: margin(hi)?, margin_below: margin(lo)?, below: lo })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZSlice {
    pub tau: f64,
    pub u: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZField {
    pub slices: Vec<ZSlice>,
    /// τ-slices skipped because u was not strictly monotone on the stretch
    pub skipped: usize,
    pub source: String,
}

/// Z = ψ_s² = 2(n−1)u_σ² against u on the stretch from the equator neck to the
/// first bump. Slices without that structure are skipped and counted.
pub fn extract_zfield(seq: &[RescaledProfile], source: &str) -> ZField {
    let mut out = ZField { slices: Vec::new(), skipped: 0, source: source.to_string() };
    for r in seq {
        match neck_to_bump(r) {
            Some(end) => {
                let nf = r.n as f64;
                let u = r.u[..=end].to_vec();
                if u.windows(2).all(|w| w[1] > w[0]) {
                    let z = r.u_sigma[..=end].iter().map(|v| 2.0 * (nf - 1.0) * v * v).collect();
                    out.slices.push(ZSlice { tau: r.tau, u, z });
                } else {
                    out.skipped += 1;
                }
            }
            None => out.skipped += 1,
        }
    }
    out
}

/// Index of the first bump past the equator neck.
fn neck_to_bump(r: &RescaledProfile) -> Option<usize> {
    if r.u.len() < 3 || !(r.u_sigmasigma[0] > 0.0) {
        return None;
    }
    let k = (1..r.u.len()).find(|&k| r.u_sigma[k] <= 0.0)?;
    Some(if r.u[k - 1] > r.u[k] { k - 1 } else { k })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub samples: usize,
    /// samples with u > L, outside the barrier's domain
    pub outside: usize,
    pub violations: usize,
    pub fraction: f64,
    /// Smallest B with no violations (∞ if a sample sits where Z̄ ≤ 0 with Z > 0).
    pub b_min: f64,
    /// min of Z̄ − Z over the samples
    pub margin: f64,
}

/// Z ≤ Z̄ at every sample with u ≤ L.
pub fn comparison_check(zf: &ZField, p: &BarrierParams) -> Result<ComparisonReport> {
    p.validate()?;
    let mut rep = ComparisonReport { samples: 0, outside: 0, violations: 0, fraction: 0.0, b_min: 0.0, margin: f64::INFINITY };
    for s in &zf.slices {
        for (u, z) in s.u.iter().zip(&s.z) {
            if *u > p.l {
                rep.outside += 1;
                continue;
            }
            let v = u + p.c / s.tau;
            rep.samples += 1;
            let bar = supersolution_eval(p, s.tau, *u)?;
            if *z > bar {
                rep.violations += 1;
            }
            rep.margin = rep.margin.min(bar - z);
            let shape = 1.0 - 1.0 / (v * v);
            if *z > 0.0 {
                rep.b_min = rep.b_min.max(if shape > 0.0 { z * s.tau / shape } else { f64::INFINITY });
            }
        }
    }
    rep.fraction = if rep.samples > 0 { rep.violations as f64 / rep.samples as f64 } else { 0.0 };
    Ok(rep)
}

/// Comparison on a τ-window of a run. `fitted` uses the smallest B that
/// dominates every slice in the window; `halved` repeats the check at half
/// that B. `predictive` fits B on the first slice only and checks the later
/// slices against it, which is the comparison principle's order of quantifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowComparison {
    pub window: (f64, f64),
    pub slices: usize,
    pub params: BarrierParams,
    pub fitted: ComparisonReport,
    pub halved: ComparisonReport,
    pub predictive_b: f64,
    pub predictive: ComparisonReport,
}

pub fn window_comparison(zf: &ZField, n: usize, c: f64, l: f64, window: (f64, f64)) -> Result<WindowComparison> {
    let slices: Vec<ZSlice> = zf.slices.iter().filter(|s| s.tau >= window.0 && s.tau <= window.1).cloned().collect();
    if slices.len() < 2 {
        return Err(Error::InsufficientData(format!("{} Z-slices in the window ({:.3}, {:.3})", slices.len(), window.0, window.1)));
    }
    let sub = |v: &[ZSlice]| ZField { slices: v.to_vec(), skipped: 0, source: zf.source.clone() };
    let probe = BarrierParams { b: 1.0, c, l, tau0: slices[0].tau, n };
    let fit = |f: &ZField| -> Result<f64> {
        let b = comparison_check(f, &probe)?.b_min;
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::Domain(format!("no finite B dominates Z on ({:.3}, {:.3})", window.0, window.1)));
        }
        // one part in 10¹² above the fit so the fitted samples are not violated by rounding
        Ok(b * (1.0 + 1e-12))
    };
    let all = sub(&slices);
    let b = fit(&all)?;
    let params = BarrierParams { b, ..probe };
    let pb = fit(&sub(&slices[..1]))?;
    Ok(WindowComparison {
        window,
        slices: slices.len(),
        params,
        fitted: comparison_check(&all, &params)?,
        halved: comparison_check(&all, &BarrierParams { b: 0.5 * b, ..probe })?,
        predictive_b: pb,
        predictive: comparison_check(&sub(&slices[1..]), &BarrierParams { b: pb, ..probe })?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_is_a_solution() {
        let g = ZGrid::from_fn(vec![10.0, 11.0, 12.0], vec![1.0, 1.5, 2.0, 2.5], |_, _| 0.0);
        let r = f_operator_raw(&g, 2).unwrap();
        assert!(r.f.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn d_vanishes_on_z1() {
        for n in 2..6 {
            let p = BarrierParams { b: 7.0, c: 0.0 + 1e-300, l: 3.0, tau0: 1.0, n };
            for u in [1.0, 1.3, 2.0, 2.9] {
                let z = supersolution_derivs(&p, 20.0, u).unwrap();
                assert!(d_part(z.z, z.z_u, u).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn q_on_z1_matches_closed_form() {
        let (b, tau) = (3.0, 7.0);
        for n in 2..6 {
            let nf = n as f64;
            let p = BarrierParams { b, c: 1e-300, l: 3.0, tau0: 1.0, n };
            for u in [1.0, 1.4, 2.2] {
                let z = supersolution_derivs(&p, tau, u).unwrap();
                let q = q_part(n, z.z, z.z_u, z.z_uu, u);
                let want = b * b / (tau * tau) * (2.0 * (1.0 - nf) / u.powi(2) + 4.0 * (nf - 3.0) / u.powi(4) + 2.0 * (4.0 - nf) / u.powi(6));
                assert!((q - want).abs() < 1e-14);
            }
        }
        let p = BarrierParams { b, c: 1e-300, l: 3.0, tau0: 1.0, n: 2 };
        let z = supersolution_derivs(&p, tau, 1.0).unwrap();
        assert!((q_part(2, z.z, z.z_u, z.z_uu, 1.0) + 2.0 * b * b / (tau * tau)).abs() < 1e-14);
    }

    #[test]
    fn barrier_values() {
        let p = BarrierParams { b: 10.0, c: 1.0, l: 3.0, tau0: 1.0, n: 2 };
        assert!(supersolution_eval(&p, 100.0, 1.0 - 0.01).unwrap().abs() < 1e-15);
        assert!((supersolution_eval(&p, 100.0, 1e9).unwrap() - 0.1).abs() < 1e-12);
        let want = 0.1 * (1.0 - 1.0 / (1.01f64 * 1.01));
        assert!((supersolution_eval(&p, 100.0, 1.0).unwrap() - want).abs() < 1e-16);
        assert!(supersolution_eval(&p, 1.0, -2.0).is_err());
    }

    #[test]
    fn closed_form_derivatives_match_differences() {
        let p = BarrierParams { b: 4.0, c: 1.5, l: 3.0, tau0: 1.0, n: 3 };
        let (t, u) = (30.0, 1.7);
        let z = supersolution_derivs(&p, t, u).unwrap();
        let e = |t: f64, u: f64| supersolution_eval(&p, t, u).unwrap();
        let h = 1e-4;
        assert!((z.z_u - (e(t, u + h) - e(t, u - h)) / (2.0 * h)).abs() < 1e-9);
        assert!((z.z_uu - (e(t, u + h) - 2.0 * e(t, u) + e(t, u - h)) / (h * h)).abs() < 1e-6);
        assert!((z.z_tau - (e(t + h, u) - e(t - h, u)) / (2.0 * h)).abs() < 1e-10);
    }

    #[test]
    fn differencing_converges_at_second_order() {
        let p = BarrierParams { b: 2.0, c: 1.0, l: 3.0, tau0: 1.0, n: 2 };
        let err = |h: f64| {
            let (t0, u0) = (20.0, 1.8);
            let g = ZGrid::from_fn(vec![t0 - 10.0 * h, t0, t0 + 10.0 * h], vec![u0 - h, u0, u0 + h], |t, u| supersolution_eval(&p, t, u).unwrap());
            let r = f_operator_raw(&g, 2).unwrap();
            (r.f[0][0] - f_of_barrier(&p, t0, u0).unwrap()).abs()
        };
        let order = (err(0.02) / err(0.01)).log2();
        assert!(order >= 1.9, "{order}");
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let g = ZGrid::from_fn(vec![1.0, 5.0, 9.0], vec![1.0, 2.0, 3.0], |_, _| 0.0);
        assert!(matches!(f_operator(&g, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn b0_search_is_tight() {
        let g = CertGrid { tau_points: 30, u_points: 80, ..CertGrid::default() };
        let s = find_b0(2, 1.0, 3.0, &g).unwrap();
        assert!(s.b0.is_finite() && s.b0 > 0.0);
        assert!(s.margin >= 0.0);
        assert!(s.margin_below < 0.0);
        let p2 = BarrierParams { b: 2.0 * s.b0, c: 1.0, l: 3.0, tau0: 50.0, n: 2 };
        assert!(verify_supersolution(&p2, &g).unwrap().min >= 0.0);
    }

    #[test]
    fn cylinder_satisfies_comparison() {
        let zf = ZField { slices: vec![ZSlice { tau: 10.0, u: vec![1.0, 1.0], z: vec![0.0, 0.0] }], skipped: 0, source: "cylinder".into() };
        let p = BarrierParams { b: 1.0, c: 1.0, l: 2.0, tau0: 1.0, n: 2 };
        assert_eq!(comparison_check(&zf, &p).unwrap().violations, 0);
    }
}
