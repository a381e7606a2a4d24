//! Warped-product profiles `g = φ²dx² + ψ²g_{S^n}` on the half-domain
//! x ∈ [0, 1] (equator at 0, pole or mirror at 1), with curvatures, neck and
//! bump detection, and pointwise pinching monitors.
//!
//! Derivatives use five-point stencils whose out-of-range points are ghost
//! nodes obtained by reflection: every field is even across the equator, and
//! across the pole ψ is odd while φ is even.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cumulative_integral, fornberg_weights};

/// Boundary condition at x = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OuterBoundary {
    /// Smooth tip: ψ(1) = 0, ψ odd and φ even across x = 1.
    #[default]
    Pole,
    /// Second reflection plane: ψ and φ even across x = 1 (cylinders).
    Mirror,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowProfile {
    pub n: usize,
    pub t: f64,
    pub x_grid: Vec<f64>,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    #[serde(default)]
    pub outer: OuterBoundary,
}

impl FlowProfile {
    pub fn new(n: usize, t: f64, x_grid: Vec<f64>, psi: Vec<f64>, phi: Vec<f64>, outer: OuterBoundary) -> Result<Self> {
        let p = FlowProfile { n, t, x_grid, psi, phi, outer };
        p.validate()?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.x_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_grid.is_empty()
    }

    /// Index of the last node with ψ > 0 required (the pole node is excluded).
    pub fn last_positive(&self) -> usize {
        match self.outer {
            OuterBoundary::Pole => self.len() - 2,
            OuterBoundary::Mirror => self.len() - 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.len();
        if self.n < 2 {
            return Err(Error::InvalidProfile(format!("fiber dimension n = {} must be >= 2", self.n)));
        }
        if m < 5 || self.psi.len() != m || self.phi.len() != m {
            return Err(Error::InvalidProfile("need >= 5 nodes and matching field lengths".into()));
        }
        if self.x_grid[0] != 0.0 || self.x_grid[m - 1] != 1.0 {
            return Err(Error::InvalidProfile("grid must span [0, 1]".into()));
        }
        if self.x_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidProfile("grid not strictly increasing".into()));
        }
        for j in 0..=self.last_positive() {
            if !(self.psi[j] > 0.0) || !self.psi[j].is_finite() {
                return Err(Error::InvalidProfile(format!("psi[{j}] = {} is not positive", self.psi[j])));
            }
        }
        if self.outer == OuterBoundary::Pole && self.psi[m - 1] != 0.0 {
            return Err(Error::InvalidProfile("psi must vanish at the pole".into()));
        }
        if let Some(j) = self.phi.iter().position(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidProfile(format!("phi[{j}] = {} is not positive", self.phi[j])));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// Five-point derivative stencils with reflected ghost nodes, precomputed for
/// a fixed grid.
#[derive(Debug, Clone)]
pub struct DiffOps {
    idx: Vec<[usize; 5]>,
    beyond_outer: Vec<[bool; 5]>,
    d1: Vec<[f64; 5]>,
    d2: Vec<[f64; 5]>,
    pub outer: OuterBoundary,
}

impl DiffOps {
    pub fn new(x: &[f64], outer: OuterBoundary) -> Self {
        let m = x.len();
        let last = m as isize - 1;
        let mut idx = Vec::with_capacity(m);
        let mut beyond = Vec::with_capacity(m);
        let mut d1 = Vec::with_capacity(m);
        let mut d2 = Vec::with_capacity(m);
        for j in 0..m as isize {
            let mut ii = [0usize; 5];
            let mut bb = [false; 5];
            let mut pos = [0.0; 5];
            for (k, off) in (-2..=2).enumerate() {
                let q = j + off;
                if q < 0 {
                    ii[k] = (-q) as usize;
                    pos[k] = -x[ii[k]];
                } else if q > last {
                    ii[k] = (2 * last - q) as usize;
                    pos[k] = 2.0 - x[ii[k]];
                    bb[k] = true;
                } else {
                    ii[k] = q as usize;
                    pos[k] = x[ii[k]];
                }
            }
            let w = fornberg_weights(x[j as usize], &pos, 2);
            idx.push(ii);
            beyond.push(bb);
            // constants must be annihilated exactly
            let mut a = [w[1][0], w[1][1], 0.0, w[1][3], w[1][4]];
            a[2] = -(a[0] + a[1] + a[3] + a[4]);
            let mut b = [w[2][0], w[2][1], 0.0, w[2][3], w[2][4]];
            b[2] = -(b[0] + b[1] + b[3] + b[4]);
            d1.push(a);
            d2.push(b);
        }
        DiffOps { idx, beyond_outer: beyond, d1, d2, outer }
    }

    #[inline]
    fn apply(&self, w: &[f64; 5], f: &[f64], j: usize, outer_parity: Parity) -> f64 {
        let ii = &self.idx[j];
        let bb = &self.beyond_outer[j];
        let mut acc = 0.0;
        for k in 0..5 {
            let v = f[ii[k]];
            let v = if bb[k] && outer_parity == Parity::Odd { -v } else { v };
            acc += w[k] * v;
        }
        acc
    }

    #[inline]
    pub fn dx(&self, f: &[f64], j: usize, outer_parity: Parity) -> f64 {
        self.apply(&self.d1[j], f, j, outer_parity)
    }

    #[inline]
    pub fn dxx(&self, f: &[f64], j: usize, outer_parity: Parity) -> f64 {
        self.apply(&self.d2[j], f, j, outer_parity)
    }

    /// Parity of ψ across x = 1.
    pub fn psi_parity(&self) -> Parity {
        match self.outer {
            OuterBoundary::Pole => Parity::Odd,
            OuterBoundary::Mirror => Parity::Even,
        }
    }
}

/// Arclength derivatives of ψ and related node fields.
#[derive(Debug, Clone)]
pub struct Derived {
    pub s: Vec<f64>,
    pub psi_s: Vec<f64>,
    pub psi_ss: Vec<f64>,
    /// Pole value of ψ_ss/ψ (= -∂_s ψ_ss/ψ_s there), when the outer end is a pole.
    pub pole_ratio: Option<f64>,
}

pub fn derivatives(p: &FlowProfile, ops: &DiffOps) -> Derived {
    let m = p.len();
    let par = ops.psi_parity();
    let mut psi_s = vec![0.0; m];
    let mut psi_ss = vec![0.0; m];
    for j in 0..m {
        let px = ops.dx(&p.psi, j, par);
        let pxx = ops.dxx(&p.psi, j, par);
        let fx = ops.dx(&p.phi, j, Parity::Even);
        let f = p.phi[j];
        psi_s[j] = px / f;
        psi_ss[j] = (pxx - px * fx / f) / (f * f);
    }
    psi_s[0] = 0.0;
    let pole_ratio = match p.outer {
        OuterBoundary::Pole => {
            psi_ss[m - 1] = 0.0;
            let d = ops.dx(&psi_ss, m - 1, Parity::Odd);
            let px = ops.dx(&p.psi, m - 1, Parity::Odd);
            Some(d / px)
        }
        OuterBoundary::Mirror => {
            psi_s[m - 1] = 0.0;
            None
        }
    };
    Derived { s: arclength(p), psi_s, psi_ss, pole_ratio }
}

/// Arclength from the equator, s(x) = ∫₀ˣ φ.
pub fn arclength(p: &FlowProfile) -> Vec<f64> {
    cumulative_integral(&p.x_grid, &p.phi)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvatureField {
    pub s_grid: Vec<f64>,
    pub k_rad: Vec<f64>,
    pub k_sph: Vec<f64>,
    pub lambda: Vec<f64>,
    pub nu: Vec<f64>,
    pub r: Vec<f64>,
    pub rm_sup: f64,
}

pub fn curvatures(p: &FlowProfile) -> Result<CurvatureField> {
    let ops = DiffOps::new(&p.x_grid, p.outer);
    curvatures_with(p, &ops)
}

pub fn curvatures_with(p: &FlowProfile, ops: &DiffOps) -> Result<CurvatureField> {
    p.validate()?;
    let d = derivatives(p, ops);
    Ok(curvatures_from(p, &d))
}

pub(crate) fn curvatures_from(p: &FlowProfile, d: &Derived) -> CurvatureField {
    let m = p.len();
    let nf = p.n as f64;
    let mut k_rad = vec![0.0; m];
    let mut k_sph = vec![0.0; m];
    for j in 0..m {
        if p.psi[j] > 0.0 {
            k_rad[j] = -d.psi_ss[j] / p.psi[j];
            k_sph[j] = (1.0 - d.psi_s[j] * d.psi_s[j]) / (p.psi[j] * p.psi[j]);
        } else if let Some(q) = d.pole_ratio {
            k_rad[j] = -q;
            k_sph[j] = -q;
        }
    }
    let lambda: Vec<f64> = (0..m).map(|j| k_rad[j] + (nf - 1.0) * k_sph[j]).collect();
    let nu: Vec<f64> = (0..m).map(|j| nf * k_rad[j]).collect();
    let r: Vec<f64> = (0..m).map(|j| nu[j] + nf * lambda[j]).collect();
    let rm_sup = (0..m).map(|j| k_rad[j].abs().max(k_sph[j].abs())).fold(0.0, f64::max);
    CurvatureField { s_grid: d.s.clone(), k_rad, k_sph, lambda, nu, r, rm_sup }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub x: f64,
    pub s: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquatorKind {
    Neck,
    Bump,
    Degenerate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSet {
    pub equator: EquatorKind,
    /// Interior necks, ordered from the equator outward (equator excluded).
    pub necks: Vec<Feature>,
    pub bumps: Vec<Feature>,
    pub degenerate: bool,
}

impl FeatureSet {
    /// Total feature count including the equator when it is a strict extremum.
    pub fn count(&self) -> usize {
        self.necks.len() + self.bumps.len() + usize::from(self.equator != EquatorKind::Degenerate)
    }

    pub fn neck_count(&self) -> usize {
        self.necks.len() + usize::from(self.equator == EquatorKind::Neck)
    }

    /// Outermost bump, whether interior or at the equator.
    pub fn outermost_bump(&self, equator_radius: f64) -> Option<Feature> {
        self.bumps.last().copied().or(if self.equator == EquatorKind::Bump { Some(Feature { x: 0.0, s: 0.0, radius: equator_radius }) } else { None })
    }

    /// Necks and bumps alternate along the half-domain.
    pub fn alternates(&self) -> bool {
        let mut all: Vec<(f64, bool)> = self.necks.iter().map(|f| (f.x, true)).chain(self.bumps.iter().map(|f| (f.x, false))).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut prev = match self.equator {
            EquatorKind::Neck => Some(true),
            EquatorKind::Bump => Some(false),
            EquatorKind::Degenerate => None,
        };
        for (_, is_neck) in all {
            if prev == Some(is_neck) {
                return false;
            }
            prev = Some(is_neck);
        }
        true
    }
}

const ROOT_THRESHOLD: f64 = 1e-12;

pub fn detect_features(p: &FlowProfile) -> Result<FeatureSet> {
    let ops = DiffOps::new(&p.x_grid, p.outer);
    p.validate()?;
    Ok(detect_features_from(p, &derivatives(p, &ops)))
}

pub(crate) fn detect_features_from(p: &FlowProfile, d: &Derived) -> FeatureSet {
    let end = p.last_positive();
    let curv0 = d.psi_ss[0] * p.psi[0];
    let equator = if curv0 > 1e-10 {
        EquatorKind::Neck
    } else if curv0 < -1e-10 {
        EquatorKind::Bump
    } else {
        EquatorKind::Degenerate
    };
    let mut necks = Vec::new();
    let mut bumps = Vec::new();
    let mut last: Option<(usize, f64)> = None;
    let mut any_sign = false;
    for j in 1..=end {
        let v = d.psi_s[j];
        if v.abs() <= ROOT_THRESHOLD {
            continue;
        }
        any_sign = true;
        if let Some((k, pv)) = last {
            if pv.signum() != v.signum() {
                // zero between node k and node j by linear interpolation
                let a = pv.abs() / (pv.abs() + v.abs());
                let feat = Feature {
                    x: p.x_grid[k] + a * (p.x_grid[j] - p.x_grid[k]),
                    s: d.s[k] + a * (d.s[j] - d.s[k]),
                    radius: p.psi[k] + a * (p.psi[j] - p.psi[k]),
                };
                if pv < 0.0 {
                    necks.push(feat);
                } else {
                    bumps.push(feat);
                }
            }
        }
        last = Some((j, v));
    }
    let degenerate = !any_sign && equator == EquatorKind::Degenerate;
    FeatureSet { equator, necks, bumps, degenerate }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HivReport {
    /// min over nodes with ν < 0 of R + ν(log(-ν) + log(1+t) - 3); +∞ when vacuous.
    pub margin: f64,
    pub min_lambda: f64,
    pub min_nu: f64,
}

pub fn hamilton_ivey_report(p: &FlowProfile, t: f64) -> Result<HivReport> {
    let c = curvatures(p)?;
    Ok(hamilton_ivey_from(&c, t))
}

pub(crate) fn hamilton_ivey_from(c: &CurvatureField, t: f64) -> HivReport {
    let mut margin = f64::INFINITY;
    // negative ν at round-off level is treated as zero
    let floor = 1e-12 * (1.0 + c.rm_sup);
    for j in 0..c.nu.len() {
        let nu = c.nu[j];
        if nu < -floor {
            let m = c.r[j] + nu * ((-nu).ln() + (1.0 + t).ln() - 3.0);
            margin = margin.min(m);
        }
    }
    HivReport { margin, min_lambda: c.lambda.iter().copied().fold(f64::INFINITY, f64::min), min_nu: c.nu.iter().copied().fold(f64::INFINITY, f64::min) }
}

/// The pinching estimate is only available for data with λ, ν ≥ -1 whose
/// singular time satisfies log(1 + T) > 3.
pub fn check_hiv_normalization(initial: &FlowProfile, t_sing_lower: f64) -> Result<()> {
    let c = curvatures(initial)?;
    let r = hamilton_ivey_from(&c, initial.t);
    if r.min_lambda < -1.0 || r.min_nu < -1.0 {
        return Err(Error::Config(format!("initial Ricci eigenvalues below -1 (min lambda {:.3e}, min nu {:.3e})", r.min_lambda, r.min_nu)));
    }
    if (1.0 + t_sing_lower).ln() <= 3.0 {
        return Err(Error::Config(format!("singular time bound {t_sing_lower:.4} gives log(1+T) <= 3")));
    }
    Ok(())
}

/// (sup|v|, sup|a|) with v = ψ_s and a = ψψ_ss - ψ_s² + 1 over all nodes.
pub fn va_monitor(p: &FlowProfile) -> Result<(f64, f64)> {
    let ops = DiffOps::new(&p.x_grid, p.outer);
    p.validate()?;
    Ok(va_from(p, &derivatives(p, &ops)))
}

pub(crate) fn va_from(p: &FlowProfile, d: &Derived) -> (f64, f64) {
    let mut sv: f64 = 0.0;
    let mut sa: f64 = 0.0;
    for j in 0..p.len() {
        sv = sv.max(d.psi_s[j].abs());
        let a = p.psi[j] * d.psi_ss[j] - d.psi_s[j] * d.psi_s[j] + 1.0;
        sa = sa.max(a.abs());
    }
    (sv, sa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn uniform(m: usize) -> Vec<f64> {
        (0..m).map(|i| i as f64 / (m - 1) as f64).collect()
    }

    fn round(m: usize, radius: f64) -> FlowProfile {
        let x = uniform(m);
        let mut psi: Vec<f64> = x.iter().map(|x| radius * (FRAC_PI_2 * x).cos()).collect();
        psi[m - 1] = 0.0;
        let phi = vec![radius * FRAC_PI_2; m];
        FlowProfile::new(2, 0.0, x, psi, phi, OuterBoundary::Pole).unwrap()
    }

    #[test]
    fn arclength_of_constant_and_linear_weights() {
        let x = uniform(11);
        let mut p = FlowProfile { n: 2, t: 0.0, x_grid: x.clone(), psi: vec![1.0; 11], phi: vec![2.0; 11], outer: OuterBoundary::Mirror };
        let s = arclength(&p);
        for (s, x) in s.iter().zip(&x) {
            assert!((s - 2.0 * x).abs() < 1e-14);
        }
        p.phi = x.iter().map(|x| 1.0 + x).collect();
        assert!((arclength(&p)[10] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn unit_sphere_has_unit_sectional_curvature() {
        let c = curvatures(&round(81, 1.0)).unwrap();
        for j in 0..81 {
            assert!((c.k_rad[j] - 1.0).abs() < 1e-4, "k_rad[{j}] = {}", c.k_rad[j]);
            assert!((c.k_sph[j] - 1.0).abs() < 1e-4, "k_sph[{j}] = {}", c.k_sph[j]);
            assert!((c.r[j] - 6.0).abs() < 1e-4);
        }
    }

    #[test]
    fn halving_the_sphere_quadruples_curvature() {
        let a = curvatures(&round(41, 1.0)).unwrap();
        let b = curvatures(&round(41, 0.5)).unwrap();
        for j in 0..41 {
            assert!((b.k_rad[j] - 4.0 * a.k_rad[j]).abs() < 1e-10);
            assert!((b.k_sph[j] - 4.0 * a.k_sph[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn cylinder_curvatures_and_features() {
        let x = uniform(21);
        let p = FlowProfile::new(2, 0.0, x, vec![2.0; 21], vec![1.0; 21], OuterBoundary::Mirror).unwrap();
        let c = curvatures(&p).unwrap();
        assert!(c.k_rad.iter().all(|k| k.abs() < 1e-12));
        assert!(c.r.iter().all(|r| (r - 0.5).abs() < 1e-12), "{:?}", c.r);
        let f = detect_features(&p).unwrap();
        assert!(f.degenerate && f.count() == 0);
        let (v, a) = va_monitor(&p).unwrap();
        assert!(v < 1e-14 && (a - 1.0).abs() < 1e-12);
        assert!(hamilton_ivey_report(&p, 0.0).unwrap().margin.is_infinite());
    }

    #[test]
    fn round_sphere_equator_is_a_bump() {
        let p = round(41, 1.0);
        let f = detect_features(&p).unwrap();
        assert_eq!(f.equator, EquatorKind::Bump);
        assert!(f.necks.is_empty() && f.bumps.is_empty());
        let (v, a) = va_monitor(&p).unwrap();
        assert!((v - 1.0).abs() < 1e-5 && a < 1e-5, "v = {v}, a = {a}");
        assert!(hamilton_ivey_report(&p, 0.0).unwrap().margin.is_infinite());
    }

    #[test]
    fn invalid_profiles_are_rejected() {
        let mut p = round(11, 1.0);
        p.psi[3] = -0.1;
        assert!(matches!(curvatures(&p), Err(Error::InvalidProfile(_))));
    }
}
