//! Gaussian-weighted L² space with weight ρ(σ) = exp(−σ²/4), the normalized
//! Hermite basis h_m(σ) = c_m H_m(σ/2), cutoffs and the tracked quantities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use rayon::prelude::*;

use crate::numerics::{centered_derivative, gauss_legendre, CubicHermite};
use crate::selfsimilar::RescaledProfile;

pub fn weight(sigma: f64) -> f64 {
    (-0.25 * sigma * sigma).exp()
}

/// Decay rate λ_m = (m−1)/2 of mode m under the linearized flow.
pub fn lambda(m: usize) -> f64 {
    (m as f64 - 1.0) / 2.0
}

#[derive(Debug, Clone)]
pub struct HermiteBasis {
    max_mode: usize,
}

impl HermiteBasis {
    pub fn new(max_mode: usize) -> Self {
        HermiteBasis { max_mode }
    }

    pub fn max_mode(&self) -> usize {
        self.max_mode
    }

    /// c_m = (2^m √(4π) m!)^{−1/2}
    pub fn norm_const(m: usize) -> f64 {
        let mut log = 0.5 * (4.0 * std::f64::consts::PI).ln();
        for k in 1..=m {
            log += (2.0 * k as f64).ln();
        }
        (-0.5 * log).exp()
    }

    pub fn eval(&self, m: usize, sigma: f64) -> Result<f64> {
        if m > self.max_mode {
            return Err(Error::ModeRange { m, max: self.max_mode });
        }
        let mut v = vec![0.0; m + 1];
        fill(sigma, &mut v);
        Ok(v[m])
    }

    pub fn eval_derivative(&self, m: usize, sigma: f64) -> Result<f64> {
        if m > self.max_mode {
            return Err(Error::ModeRange { m, max: self.max_mode });
        }
        if m == 0 {
            return Ok(0.0);
        }
        Ok((m as f64 / 2.0).sqrt() * self.eval(m - 1, sigma)?)
    }

    /// h_0..h_M at `sigma`.
    pub fn eval_all(&self, sigma: f64, out: &mut [f64]) {
        fill(sigma, &mut out[..=self.max_mode]);
    }
}

// h_{m+1} = (σ h_m − √(2m) h_{m−1}) / √(2m+2), stable upward in the scaled variable
fn fill(sigma: f64, out: &mut [f64]) {
    out[0] = (4.0 * std::f64::consts::PI).powf(-0.25);
    if out.len() > 1 {
        out[1] = sigma * out[0] / 2f64.sqrt();
    }
    for m in 1..out.len().saturating_sub(1) {
        let mf = m as f64;
        out[m + 1] = (sigma * out[m] - (2.0 * mf).sqrt() * out[m - 1]) / (2.0 * mf + 2.0).sqrt();
    }
}

/// Composite Gauss–Legendre rule on [−L, L] with the Gaussian weight folded
/// into the weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub half_width: f64,
    pub panels: usize,
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Orthonormality defect of h_0..h_12 measured at construction.
    pub tolerance: f64,
}

const SELF_TEST_MODES: usize = 12;

impl QuadratureRule {
    pub fn new(half_width: f64, panels: usize, order: usize) -> Self {
        let (gx, gw) = gauss_legendre(order);
        let h = 2.0 * half_width / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let mid = -half_width + (p as f64 + 0.5) * h;
            for k in 0..order {
                let s = mid + 0.5 * h * gx[k];
                nodes.push(s);
                weights.push(0.5 * h * gw[k] * weight(s));
            }
        }
        let mut rule = QuadratureRule { half_width, panels, order, nodes, weights, tolerance: 0.0 };
        rule.tolerance = rule.orthonormality_defect(SELF_TEST_MODES);
        rule
    }

    /// Doubles the panel count from unit-width panels until the Gram matrix of
    /// h_0..h_12 agrees with the doubled rule to 10⁻¹². On wide domains this is
    /// orthonormality; on cut-off domains it certifies the panel density while
    /// `tolerance` still reports the truncation defect.
    pub fn auto(half_width: f64) -> Result<Self> {
        let mut panels = (2.0 * half_width).ceil().max(2.0) as usize;
        let mut rule = QuadratureRule::new(half_width, panels, 16);
        let mut gram = rule.gram(SELF_TEST_MODES);
        for _ in 0..8 {
            panels *= 2;
            let finer = QuadratureRule::new(half_width, panels, 16);
            let finer_gram = finer.gram(SELF_TEST_MODES);
            let gap = gram.iter().flatten().zip(finer_gram.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if gap <= 1e-12 {
                return Ok(rule);
            }
            rule = finer;
            gram = finer_gram;
        }
        Err(Error::Truncation(format!("panel refinement did not converge on [−{half_width}, {half_width}]")))
    }

    /// Lower triangle of ⟨h_i, h_j⟩ under this rule.
    pub fn gram(&self, modes: usize) -> Vec<Vec<f64>> {
        let mut g: Vec<Vec<f64>> = (0..=modes).map(|i| vec![0.0; i + 1]).collect();
        let mut h = vec![0.0; modes + 1];
        for (s, w) in self.nodes.iter().zip(&self.weights) {
            fill(*s, &mut h);
            for i in 0..=modes {
                for j in 0..=i {
                    g[i][j] += w * h[i] * h[j];
                }
            }
        }
        g
    }

    pub fn orthonormality_defect(&self, modes: usize) -> f64 {
        let g = self.gram(modes);
        let mut worst: f64 = 0.0;
        for (i, row) in g.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }

    /// ∫ g ρ dσ.
    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(s, w)| w * g(*s)).sum()
    }

    /// ⟨g₁, g₂⟩ with a truncation check: the weighted integrand on the outermost
    /// panels must be negligible against the total.
    pub fn inner<F: Fn(f64) -> f64, G: Fn(f64) -> f64>(&self, g1: F, g2: G) -> Result<f64> {
        let mut total = 0.0;
        let mut scale = 0.0;
        let mut edge: f64 = 0.0;
        let per = self.order;
        let count = self.nodes.len();
        for (k, (s, w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let v = w * g1(*s) * g2(*s);
            total += v;
            scale += v.abs();
            if k < per || k >= count - per {
                edge = edge.max(v.abs());
            }
        }
        if edge > 1e-12 * scale.max(f64::MIN_POSITIVE) && edge > 1e-300 {
            return Err(Error::Truncation(format!("integrand mass {edge:e} at |σ| = {}", self.half_width)));
        }
        Ok(total)
    }
}

/// g = Σ a_k h_k (k ≤ M) with the reconstruction residual ‖g − Σ a_k h_k‖.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Projection {
    pub coeffs: Vec<f64>,
    pub norm: f64,
    pub residual: f64,
}

pub fn project<F: Fn(f64) -> f64>(rule: &QuadratureRule, basis: &HermiteBasis, g: F) -> Projection {
    let mm = basis.max_mode();
    let mut coeffs = vec![0.0; mm + 1];
    let mut h = vec![0.0; mm + 1];
    let vals: Vec<f64> = rule.nodes.iter().map(|s| g(*s)).collect();
    let mut norm2 = 0.0;
    for (k, s) in rule.nodes.iter().enumerate() {
        fill(*s, &mut h);
        let wv = rule.weights[k] * vals[k];
        norm2 += wv * vals[k];
        for m in 0..=mm {
            coeffs[m] += wv * h[m];
        }
    }
    let mut res2 = 0.0;
    for (k, s) in rule.nodes.iter().enumerate() {
        fill(*s, &mut h);
        let rec: f64 = (0..=mm).map(|m| coeffs[m] * h[m]).sum();
        res2 += rule.weights[k] * (vals[k] - rec).powi(2);
    }
    Projection { coeffs, norm: norm2.sqrt(), residual: res2.sqrt() }
}

/// |⟨g′, h_{m−1}⟩ − √(m/2)⟨g, h_m⟩| for m ≥ 1.
pub fn derivative_mode_identity_check<F: Fn(f64) -> f64, D: Fn(f64) -> f64>(rule: &QuadratureRule, basis: &HermiteBasis, g: F, dg: D, m: usize) -> Result<f64> {
    if m == 0 || m > basis.max_mode() {
        return Err(Error::ModeRange { m, max: basis.max_mode() });
    }
    let lhs = rule.integrate(|s| dg(s) * basis.eval(m - 1, s).unwrap());
    let rhs = rule.integrate(|s| g(s) * basis.eval(m, s).unwrap());
    Ok((lhs - (m as f64 / 2.0).sqrt() * rhs).abs())
}

/// Smooth cutoff χ: 1 on |r| ≤ 1, 0 on |r| ≥ 2, quintic smoothstep between (C²).
pub fn chi(r: f64) -> f64 {
    let a = r.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        let x = a - 1.0;
        1.0 - x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
    }
}

pub fn chi_derivative(r: f64) -> f64 {
    let a = r.abs();
    if a <= 1.0 || a >= 2.0 {
        0.0
    } else {
        let x = a - 1.0;
        -30.0 * x * x * (1.0 - x) * (1.0 - x) * r.signum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub a: f64,
}

impl CutoffSpec {
    pub fn eta(&self, tau: f64, sigma: f64) -> f64 {
        chi(sigma / (self.a * tau.sqrt()))
    }

    pub fn eta_sigma(&self, tau: f64, sigma: f64) -> f64 {
        let l = self.a * tau.sqrt();
        chi_derivative(sigma / l) / l
    }

    pub fn theta(&self, tau: f64, sigma: f64) -> f64 {
        chi(sigma / (2.0 * self.a * tau.sqrt()))
    }

    /// σ beyond which every tracked integrand vanishes or is below ρ-underflow.
    pub fn quadrature_extent(&self, tau: f64) -> f64 {
        2.0 * self.a * tau.sqrt() + 6.0
    }
}

/// Parity-extended evaluators for f (odd) and U (even) on the whole line.
pub struct SymmetricFields {
    f: CubicHermite,
    big_u: CubicHermite,
    extent: f64,
}

impl SymmetricFields {
    pub fn new(r: &RescaledProfile) -> Self {
        SymmetricFields { f: r.f_interp(), big_u: r.big_u_interp(), extent: r.sigma_max() }
    }

    pub fn f(&self, sigma: f64) -> f64 {
        sigma.signum() * self.f.eval(sigma.abs())
    }

    pub fn big_u(&self, sigma: f64) -> f64 {
        self.big_u.eval(sigma.abs())
    }

    /// σ-derivative of the U interpolant; equals f only up to interpolation error.
    pub fn big_u_sigma(&self, sigma: f64) -> f64 {
        sigma.signum() * self.big_u.derivative(sigma.abs())
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSample {
    pub tau: f64,
    /// a_k = ⟨fη, h_k⟩
    pub a: Vec<f64>,
    /// b_k = ⟨Uη, h_k⟩
    pub b: Vec<f64>,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub i: f64,
    pub zeta: f64,
    pub p: f64,
    pub b_mode: f64,
    pub f_eta_norm: f64,
    pub f_theta_norm: f64,
    /// ‖fη‖² − Σ a_k², nonnegative up to quadrature error.
    pub parseval_gap: f64,
    /// b_{k+1} − √(2/(k+1)) a_k for k = 0..M−1.
    pub relation_gap: Vec<f64>,
    /// ‖(U_σ − f)η‖ between the two interpolants.
    pub interp_defect: f64,
    /// √(2/(k+1)) (|⟨Uη_σ, h_k⟩| + `interp_defect`) plus twice the quadrature
    /// error estimates of the gap and of ⟨Uη_σ, h_k⟩, a bound on `relation_gap`.
    pub relation_envelope: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTrack {
    pub cutoff: CutoffSpec,
    pub k_w: u32,
    pub max_mode: usize,
    pub samples: Vec<ModeSample>,
}

impl ModeTrack {
    pub fn taus(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.tau).collect()
    }

    pub fn series<F: Fn(&ModeSample) -> f64>(&self, f: F) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }
}

pub fn mode_sample(r: &RescaledProfile, basis: &HermiteBasis, cutoff: &CutoffSpec, k_w: u32) -> Result<ModeSample> {
    if k_w < 4 || !k_w.is_multiple_of(2) {
        return Err(Error::Parameter(format!("k_w = {k_w} must be even and at least 4")));
    }
    let tau = r.tau;
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("τ = {tau} must be positive for the cutoffs")));
    }
    let fields = SymmetricFields::new(r);
    let reach = 2.0 * cutoff.a * tau.sqrt();
    if reach > fields.extent() {
        return Err(Error::WindowExceeded(format!("2A√τ = {reach:.3} exceeds the σ-extent {:.3} at τ = {tau:.4}", fields.extent())));
    }
    let rule = QuadratureRule::auto(cutoff.quadrature_extent(tau).min(fields.extent()))?;
    let mm = basis.max_mode();
    let mut a = vec![0.0; mm + 1];
    let mut b = vec![0.0; mm + 1];
    let mut corr = vec![0.0; mm + 1];
    let mut h = vec![0.0; mm + 1];
    let (mut fe2, mut ft2, mut i2, mut p2, mut dd2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (s, w) in rule.nodes.iter().zip(&rule.weights) {
        let s = *s;
        let eta = cutoff.eta(tau, s);
        dd2 += w * ((fields.big_u_sigma(s) - fields.f(s)) * eta).powi(2);
        let theta = cutoff.theta(tau, s);
        let f = fields.f(s);
        let big_u = fields.big_u(s);
        let eta_s = cutoff.eta_sigma(tau, s);
        basis.eval_all(s, &mut h);
        for k in 0..=mm {
            a[k] += w * f * eta * h[k];
            b[k] += w * big_u * eta * h[k];
            corr[k] += w * big_u * eta_s * h[k];
        }
        fe2 += w * (f * eta).powi(2);
        ft2 += w * (f * theta).powi(2);
        let q = (f * theta).powi(4);
        i2 += w * q * s.powi(k_w as i32);
        p2 += w * q * s.powi(k_w as i32 - 2);
    }
    let x = a[0].abs();
    let y = a.get(1).map_or(0.0, |v| v.abs());
    let z = a.iter().skip(2).map(|v| v * v).sum::<f64>().sqrt();
    let i = i2.max(0.0).sqrt();
    let parseval_gap = fe2 - a.iter().map(|v| v * v).sum::<f64>();
    let relation_gap = (0..mm).map(|k| b[k + 1] - (2.0 / (k as f64 + 1.0)).sqrt() * a[k]).collect();
    let interp_defect = dd2.sqrt();
    // the integrands are only piecewise smooth in σ, so the quadrature error of
    // the gap is estimated by repeating it on twice as many panels
    let fine = QuadratureRule::new(rule.half_width, 2 * rule.panels, rule.order);
    let mut af = vec![0.0; mm + 1];
    let mut bf = vec![0.0; mm + 1];
    let mut corrf = vec![0.0; mm + 1];
    for (s, w) in fine.nodes.iter().zip(&fine.weights) {
        let eta = cutoff.eta(tau, *s);
        let eta_s = cutoff.eta_sigma(tau, *s);
        let (f, big_u) = (fields.f(*s), fields.big_u(*s));
        basis.eval_all(*s, &mut h);
        for k in 0..=mm {
            af[k] += w * f * eta * h[k];
            bf[k] += w * big_u * eta * h[k];
            corrf[k] += w * big_u * eta_s * h[k];
        }
    }
    let gap = |a: &[f64], b: &[f64], k: usize| b[k + 1] - (2.0 / (k as f64 + 1.0)).sqrt() * a[k];
    let relation_envelope = (0..mm)
        .map(|k| {
            (2.0 / (k as f64 + 1.0)).sqrt() * (corr[k].abs() + 2.0 * (corr[k] - corrf[k]).abs() + interp_defect)
                + 2.0 * (gap(&a, &b, k) - gap(&af, &bf, k)).abs()
        })
        .collect();
    Ok(ModeSample {
        tau,
        b_mode: b[0],
        a,
        b,
        x,
        y,
        z,
        i,
        zeta: z + i,
        p: p2.max(0.0).sqrt(),
        f_eta_norm: fe2.sqrt(),
        f_theta_norm: ft2.sqrt(),
        parseval_gap,
        relation_gap,
        interp_defect,
        relation_envelope,
    })
}

/// Sample for manufactured spectral data f = Σ a_k h_k, U = Σ b_k h_k with no
/// cutoff; I and P are integrated from the synthesized f.
pub fn spectral_sample(rule: &QuadratureRule, basis: &HermiteBasis, tau: f64, a: Vec<f64>, b: Vec<f64>, k_w: u32) -> Result<ModeSample> {
    let mm = basis.max_mode();
    if a.len() != mm + 1 || b.len() != mm + 1 {
        return Err(Error::ModeRange { m: a.len().max(b.len()).saturating_sub(1), max: mm });
    }
    let mut h = vec![0.0; mm + 1];
    let (mut i2, mut p2) = (0.0, 0.0);
    for (s, w) in rule.nodes.iter().zip(&rule.weights) {
        basis.eval_all(*s, &mut h);
        let f: f64 = a.iter().zip(&h).map(|(c, v)| c * v).sum();
        let q = f.powi(4);
        i2 += w * q * s.powi(k_w as i32);
        p2 += w * q * s.powi(k_w as i32 - 2);
    }
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let z = a.iter().skip(2).map(|v| v * v).sum::<f64>().sqrt();
    let i = i2.max(0.0).sqrt();
    Ok(ModeSample {
        tau,
        x: a[0].abs(),
        y: a.get(1).map_or(0.0, |v| v.abs()),
        z,
        i,
        zeta: z + i,
        p: p2.max(0.0).sqrt(),
        b_mode: b[0],
        f_eta_norm: norm,
        f_theta_norm: norm,
        parseval_gap: 0.0,
        relation_gap: (0..mm).map(|k| b[k + 1] - (2.0 / (k as f64 + 1.0)).sqrt() * a[k]).collect(),
        interp_defect: 0.0,
        relation_envelope: vec![0.0; mm],
        a,
        b,
    })
}

pub fn mode_track(seq: &[RescaledProfile], cutoff: CutoffSpec, k_w: u32, max_mode: usize) -> Result<ModeTrack> {
    let basis = HermiteBasis::new(max_mode);
    let samples = seq.par_iter().map(|r| mode_sample(r, &basis, &cutoff, k_w)).collect::<Result<Vec<_>>>()?;
    Ok(ModeTrack { cutoff, k_w, max_mode, samples })
}

/// Residuals of the linearized mode system, normalized by x + y + ζ:
/// (x′ − x/2, y′, z′ + z/2) at interior samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemCheck {
    pub tau: Vec<f64>,
    pub rx: Vec<f64>,
    pub ry: Vec<f64>,
    pub rz: Vec<f64>,
}

pub fn system_check(track: &ModeTrack) -> Result<SystemCheck> {
    let s = &track.samples;
    if s.len() < 3 {
        return Err(Error::InsufficientData("system check needs 3 samples".into()));
    }
    let mut out = SystemCheck { tau: Vec::new(), rx: Vec::new(), ry: Vec::new(), rz: Vec::new() };
    for k in 1..s.len() - 1 {
        let t = [s[k - 1].tau, s[k].tau, s[k + 1].tau];
        let d = |g: &dyn Fn(&ModeSample) -> f64| centered_derivative(t, [g(&s[k - 1]), g(&s[k]), g(&s[k + 1])]);
        let scale = (s[k].x + s[k].y + s[k].zeta).max(f64::MIN_POSITIVE);
        out.tau.push(t[1]);
        out.rx.push((d(&|m| m.x) - 0.5 * s[k].x) / scale);
        out.ry.push(d(&|m| m.y) / scale);
        out.rz.push((d(&|m| m.z) + 0.5 * s[k].z) / scale);
    }
    Ok(out)
}

/// (dI/dτ + a·I)/‖fθ‖ at interior samples; the differential inequality for I
/// predicts this stays below a small ε̂.
pub fn i_inequality_ratio(track: &ModeTrack, a: f64) -> Vec<(f64, f64)> {
    let s = &track.samples;
    (1..s.len().saturating_sub(1))
        .map(|k| {
            let di = centered_derivative([s[k - 1].tau, s[k].tau, s[k + 1].tau], [s[k - 1].i, s[k].i, s[k + 1].i]);
            (s[k].tau, (di + a * s[k].i) / s[k].f_theta_norm.max(f64::MIN_POSITIVE))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::adaptive_simpson;
    use std::f64::consts::PI;

    fn rule() -> QuadratureRule {
        QuadratureRule::auto(40.0).unwrap()
    }

    #[test]
    fn low_modes_match_closed_forms() {
        let b = HermiteBasis::new(12);
        let q = PI.powf(0.25);
        for s in [-3.0, -0.5, 0.0, 1.7, 6.0] {
            assert!((b.eval(0, s).unwrap() - (4.0 * PI).powf(-0.25)).abs() < 1e-15);
            assert!((b.eval(1, s).unwrap() - s / (2.0 * q)).abs() < 1e-14);
            assert!((b.eval(2, s).unwrap() - (s * s - 2.0) / (4.0 * q)).abs() < 1e-13);
        }
        assert!((b.eval(0, 0.0).unwrap() - 0.531_126).abs() < 1e-6);
        assert!((HermiteBasis::norm_const(2) - 1.0 / (4.0 * q)).abs() < 1e-15);
        assert!(matches!(b.eval(13, 0.0), Err(Error::ModeRange { m: 13, max: 12 })));
    }

    #[test]
    fn orthonormal_and_recurrent() {
        let r = rule();
        assert!(r.orthonormality_defect(12) < 1e-10);
        let b = HermiteBasis::new(13);
        for m in 0..12 {
            for s in [-4.0, -1.0, 0.3, 2.5, 7.0] {
                // h_{m+1} = (σh_m − 2h_m′)/√(2m+2)
                let lhs = b.eval(m + 1, s).unwrap();
                let rhs = (s * b.eval(m, s).unwrap() - 2.0 * b.eval_derivative(m, s).unwrap()) / (2.0 * m as f64 + 2.0).sqrt();
                assert!((lhs - rhs).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn projections_of_known_functions() {
        let r = rule();
        let b = HermiteBasis::new(12);
        let p = project(&r, &b, |s| 3.0 * b.eval(5, s).unwrap());
        for (k, c) in p.coeffs.iter().enumerate() {
            let want = if k == 5 { 3.0 } else { 0.0 };
            assert!((c - want).abs() < 1e-10);
        }
        let p = project(&r, &b, |s| s * s - 2.0);
        assert!((p.coeffs[2] - 4.0 * PI.powf(0.25)).abs() < 1e-8);
        assert!(p.coeffs[0].abs() < 1e-10 && p.coeffs[1].abs() < 1e-10);
        let p = project(&r, &b, |s| s.sin() * (-s * s / 20.0).exp());
        for k in (0..=12).step_by(2) {
            assert!(p.coeffs[k].abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_identity_on_a_gaussian() {
        let r = rule();
        let b = HermiteBasis::new(12);
        for m in 1..=8 {
            let d = derivative_mode_identity_check(&r, &b, |s| (-s * s / 8.0).exp(), |s| -s / 4.0 * (-s * s / 8.0).exp(), m).unwrap();
            assert!(d < 1e-8, "m = {m}: {d}");
        }
    }

    #[test]
    fn i_matches_brute_force() {
        let r = rule();
        let b = HermiteBasis::new(2);
        let i2 = r.integrate(|s| b.eval(1, s).unwrap().powi(4) * s.powi(8));
        let direct = 2.0 * adaptive_simpson(&|s: f64| (s / (2.0 * PI.powf(0.25))).powi(4) * s.powi(8) * weight(s), 0.0, 30.0, 1e-9);
        assert!((i2 - direct).abs() < 1e-8 * direct);
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(chi(0.5), 1.0);
        assert_eq!(chi(2.5), 0.0);
        let c = CutoffSpec { a: 3.0 };
        for k in 0..400 {
            let s = k as f64 * 0.1;
            assert!(chi(s / 10.0 + 0.001) <= chi(s / 10.0));
            // θ = 1 wherever η > 0
            if c.eta(4.0, s) > 0.0 {
                assert_eq!(c.theta(4.0, s), 1.0);
            }
        }
        let h = 1e-6;
        for r in [1.2, 1.5, 1.9, -1.3] {
            assert!((chi_derivative(r) - (chi(r + h) - chi(r - h)) / (2.0 * h)).abs() < 1e-6);
        }
    }

    #[test]
    fn truncation_is_flagged() {
        let r = QuadratureRule::new(3.0, 6, 16);
        assert!(matches!(r.inner(|_| 1.0, |_| 1.0), Err(Error::Truncation(_))));
        assert!(rule().inner(|_| 1.0, |_| 1.0).is_ok());
    }
}
