//! Rotationally symmetric Ricci flow on a fixed x-grid,
//!
//!   ψ_t = ψ_ss − (n−1)(1−ψ_s²)/ψ,   φ_t = n (ψ_ss/ψ) φ,
//!
//! integrated by the method of lines with classical RK4 in a gauge where φ
//! stays proportional to its initial shape. The step size is recomputed from
//! the current arclength spacing, curvature and gauge velocity.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::numerics::{adaptive_simpson, line_fit, CumulativeRule};
use crate::profile::{
    curvatures_from, derivatives, detect_features_from, hamilton_ivey_from, va_from, DiffOps, EquatorKind, FlowProfile, OuterBoundary, Parity,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub cfl: f64,
    pub stop_rm: f64,
    pub stop_radius: f64,
    /// Snapshot every this many steps (0 disables step-based output).
    pub snapshot_stride: u64,
    /// Snapshot whenever the equator radius has dropped by exp(-snapshot_dtau/2),
    /// i.e. roughly every `snapshot_dtau` in τ (0 disables).
    pub snapshot_dtau: f64,
    /// Record the equator radius every this many steps.
    pub neck_stride: u64,
    /// Integrate exactly up to this time, if set.
    pub t_end: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { cfl: 0.9, stop_rm: 1e6, stop_radius: 1e-3, snapshot_stride: 0, snapshot_dtau: 0.1, neck_stride: 50, t_end: None }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(Error::Config("cfl must be in (0,1)".into()));
        }
        if !(self.stop_rm > 0.0) {
            return Err(Error::Config("stop_rm must be positive".into()));
        }
        if !(self.stop_radius >= 0.0) {
            return Err(Error::Config("stop_radius must be non-negative".into()));
        }
        if !(self.snapshot_dtau >= 0.0) {
            return Err(Error::Config("snapshot_dtau must be non-negative".into()));
        }
        if self.neck_stride == 0 {
            return Err(Error::Config("neck_stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSummary {
    pub step: u64,
    pub rm_sup: f64,
    pub equator_radius: f64,
    pub feature_count: usize,
    pub neck_count: usize,
    /// None when no node has ν < 0
    pub hiv_margin: Option<f64>,
    pub sup_v: f64,
    pub sup_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub profile: FlowProfile,
    pub summary: SnapshotSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    CurvatureThreshold,
    RadiusThreshold,
    EndTime,
    StepBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub snapshots: Vec<Snapshot>,
    /// (t, ψ at the equator) sampled every `neck_stride` steps and at snapshots.
    pub neck: Vec<(f64, f64)>,
    pub steps: u64,
    pub stop: Option<StopReason>,
}

impl FlowTrajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory has at least the initial snapshot")
    }
}

pub fn summarize(p: &FlowProfile, ops: &DiffOps, step: u64) -> SnapshotSummary {
    let d = derivatives(p, ops);
    let c = curvatures_from(p, &d);
    let f = detect_features_from(p, &d);
    let h = hamilton_ivey_from(&c, p.t);
    let (sup_v, sup_a) = va_from(p, &d);
    SnapshotSummary {
        step,
        rm_sup: c.rm_sup,
        equator_radius: p.psi[0],
        feature_count: f.count(),
        neck_count: f.neck_count(),
        hiv_margin: h.margin.is_finite().then_some(h.margin),
        sup_v,
        sup_a,
    }
}

/// Right-hand side in the arclength gauge φ = S(t)μ(x). Returns (sup|Rm|, sup|advection|).
///
/// ψ_t = ψ_ss − (n−1)(1−ψ_s²)/ψ + (s V(S)/S − V(s)) ψ_s and φ_t = (V(S)/S) φ,
/// where V(s) = n ∫₀^s ψ_ss/ψ ds. This is the same Ricci flow as the plain
/// system, reparametrized so the x-grid stays proportional to arclength.
fn rhs(n: usize, psi: &[f64], phi: &[f64], ops: &DiffOps, w: &mut Work, dpsi: &mut [f64], dphi: &mut [f64]) -> (f64, f64) {
    let m = psi.len();
    let nf = n as f64;
    let par = ops.psi_parity();
    let pole = ops.outer == OuterBoundary::Pole;
    let end = if pole { m - 1 } else { m };
    let mut rm: f64 = 0.0;
    let mut psi_x_pole = 0.0;
    for j in 0..m {
        let px = ops.dx(psi, j, par);
        let pxx = ops.dxx(psi, j, par);
        let fx = ops.dx(phi, j, Parity::Even);
        let f = phi[j];
        let ps = if j == 0 { 0.0 } else { px / f };
        let pss = (pxx - px * fx / f) / (f * f);
        w.psi_s[j] = ps;
        w.psi_ss[j] = pss;
        if j < end {
            let inv = 1.0 / psi[j];
            let ksph = (1.0 - ps * ps) * inv * inv;
            let krad = -pss * inv;
            dpsi[j] = pss - (nf - 1.0) * (1.0 - ps * ps) * inv;
            w.ratio[j] = nf * pss * inv * f;
            rm = rm.max(krad.abs()).max(ksph.abs());
        } else {
            psi_x_pole = px;
        }
    }
    if pole {
        w.psi_ss[m - 1] = 0.0;
        let q = ops.dx(&w.psi_ss, m - 1, Parity::Odd) / psi_x_pole;
        dpsi[m - 1] = 0.0;
        w.ratio[m - 1] = nf * q * phi[m - 1];
        rm = rm.max(q.abs());
    }
    w.rule.apply(&w.ratio, &mut w.v);
    w.rule.apply(phi, &mut w.s);
    let (s, v) = (&w.s, &w.v);
    let rate = v[m - 1] / s[m - 1];
    let mut adv: f64 = 0.0;
    for j in 0..end {
        let a = s[j] * rate - v[j];
        dpsi[j] += a * w.psi_s[j];
        adv = adv.max(a.abs());
    }
    for j in 0..m {
        dphi[j] = rate * phi[j];
    }
    (rm, adv)
}

#[derive(Debug, Clone)]
struct Work {
    rule: CumulativeRule,
    s: Vec<f64>,
    v: Vec<f64>,
    psi_s: Vec<f64>,
    psi_ss: Vec<f64>,
    ratio: Vec<f64>,
}

fn min_ds(x: &[f64], phi: &[f64]) -> f64 {
    let mut h = f64::INFINITY;
    for j in 0..x.len() - 1 {
        h = h.min((x[j + 1] - x[j]) * 0.5 * (phi[j] + phi[j + 1]));
    }
    h
}

/// Stepper with preallocated stage buffers.
#[derive(Debug, Clone)]
pub struct Stepper {
    ops: DiffOps,
    k: [Vec<f64>; 8],
    tmp_psi: Vec<f64>,
    tmp_phi: Vec<f64>,
    work: Work,
    // dψ_x(pole)/dψ[m−2]; nonzero only with a pole
    pole_weight: f64,
}

impl Stepper {
    pub fn new(p: &FlowProfile) -> Self {
        let m = p.len();
        let ops = DiffOps::new(&p.x_grid, p.outer);
        let pole_weight = if p.outer == OuterBoundary::Pole && m >= 3 {
            let mut e = vec![0.0; m];
            e[m - 2] = 1.0;
            ops.dx(&e, m - 1, Parity::Odd)
        } else {
            0.0
        };
        Stepper {
            ops,
            k: std::array::from_fn(|_| vec![0.0; m]),
            tmp_psi: vec![0.0; m],
            tmp_phi: vec![0.0; m],
            work: Work {
                rule: CumulativeRule::new(&p.x_grid),
                s: vec![0.0; m],
                v: vec![0.0; m],
                psi_s: vec![0.0; m],
                psi_ss: vec![0.0; m],
                ratio: vec![0.0; m],
            },
            pole_weight,
        }
    }

    pub fn ops(&self) -> &DiffOps {
        &self.ops
    }

    /// Sets the node next to the pole so that ψ_s = −1 holds exactly there.
    /// Without this the discrete system carries a cone mode that grows like 1/Δs².
    fn regularize_pole(ops: &DiffOps, weight: f64, psi: &mut [f64], phi: &[f64]) {
        if weight == 0.0 {
            return;
        }
        let m = psi.len();
        psi[m - 1] = 0.0;
        let err = ops.dx(psi, m - 1, Parity::Odd) + phi[m - 1];
        psi[m - 2] -= err / weight;
    }

    /// Projects a profile onto the regular pole constraint used by the stepper.
    pub fn regularize(&self, p: &mut FlowProfile) {
        Self::regularize_pole(&self.ops, self.pole_weight, &mut p.psi, &p.phi);
    }

    /// sup|Rm| and the admissible step cfl·min(Δs_min²/2, 1/(4(n−1)sup|Rm|), Δs_min/sup|a|).
    pub fn stable_dt(&mut self, p: &FlowProfile, cfl: f64) -> (f64, f64) {
        let [k0, k1, ..] = &mut self.k;
        let (rm, adv) = rhs(p.n, &p.psi, &p.phi, &self.ops, &mut self.work, k0, k1);
        let h = min_ds(&p.x_grid, &p.phi);
        // ψ² falls by 2(n−1)dt on a cylinder, so this caps the drop per step below half
        let mut dt = (0.5 * h * h).min(1.0 / (4.0 * (p.n as f64 - 1.0) * rm));
        if adv > 0.0 {
            dt = dt.min(h / adv);
        }
        (rm, cfl * dt)
    }

    /// One classical RK4 step in place. The state is left untouched on error.
    pub fn step_in_place(&mut self, p: &mut FlowProfile, dt: f64) -> Result<()> {
        if dt == 0.0 {
            return Ok(());
        }
        let m = p.len();
        let n = p.n;
        let Stepper { ops, k, tmp_psi, tmp_phi, work, pole_weight } = self;
        let wgt = *pole_weight;
        let [a1, b1, a2, b2, a3, b3, a4, b4] = k;
        tmp_psi.copy_from_slice(&p.psi);
        Self::regularize_pole(ops, wgt, tmp_psi, &p.phi);
        rhs(n, tmp_psi, &p.phi, ops, work, a1, b1);
        let base = tmp_psi.clone();
        for j in 0..m {
            tmp_psi[j] = base[j] + 0.5 * dt * a1[j];
            tmp_phi[j] = p.phi[j] + 0.5 * dt * b1[j];
        }
        Self::regularize_pole(ops, wgt, tmp_psi, tmp_phi);
        rhs(n, tmp_psi, tmp_phi, ops, work, a2, b2);
        for j in 0..m {
            tmp_psi[j] = base[j] + 0.5 * dt * a2[j];
            tmp_phi[j] = p.phi[j] + 0.5 * dt * b2[j];
        }
        Self::regularize_pole(ops, wgt, tmp_psi, tmp_phi);
        rhs(n, tmp_psi, tmp_phi, ops, work, a3, b3);
        for j in 0..m {
            tmp_psi[j] = base[j] + dt * a3[j];
            tmp_phi[j] = p.phi[j] + dt * b3[j];
        }
        Self::regularize_pole(ops, wgt, tmp_psi, tmp_phi);
        rhs(n, tmp_psi, tmp_phi, ops, work, a4, b4);
        let sixth = dt / 6.0;
        for j in 0..m {
            tmp_psi[j] = base[j] + sixth * (a1[j] + 2.0 * a2[j] + 2.0 * a3[j] + a4[j]);
            tmp_phi[j] = p.phi[j] + sixth * (b1[j] + 2.0 * b2[j] + 2.0 * b3[j] + b4[j]);
        }
        Self::regularize_pole(ops, wgt, tmp_psi, tmp_phi);
        let end = p.last_positive();
        if let Some(j) = (0..=end).find(|&j| !(tmp_psi[j] > 0.0)) {
            let t = p.t + dt;
            return Err(if tmp_psi[j].is_nan() {
                Error::Instability { t, detail: format!("psi[{j}] is NaN") }
            } else {
                Error::BlowUpPassed { t, detail: format!("psi[{j}] = {:e}", tmp_psi[j]) }
            });
        }
        if let Some(j) = tmp_phi.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Instability { t: p.t + dt, detail: format!("phi[{j}] = {:e}", tmp_phi[j]) });
        }
        p.psi.copy_from_slice(tmp_psi);
        p.phi.copy_from_slice(tmp_phi);
        p.t += dt;
        Ok(())
    }
}

/// One RK4 step of size `dt`.
pub fn step(profile: &FlowProfile, dt: f64) -> Result<FlowProfile> {
    profile.validate()?;
    let mut out = profile.clone();
    if dt == 0.0 {
        return Ok(out);
    }
    Stepper::new(profile).step_in_place(&mut out, dt)?;
    Ok(out)
}

/// Resumable driver that owns the state and the growing trajectory.
#[derive(Debug, Clone)]
pub struct Integrator {
    cfg: IntegratorConfig,
    stepper: Stepper,
    state: FlowProfile,
    traj: FlowTrajectory,
    last_snap_r: f64,
    last_snap_step: u64,
}

impl Integrator {
    pub fn new(initial: FlowProfile, cfg: IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        initial.validate()?;
        let stepper = Stepper::new(&initial);
        let summary = summarize(&initial, stepper.ops(), 0);
        if summary.rm_sup >= cfg.stop_rm {
            return Err(Error::Config(format!("stop_rm {} does not exceed initial sup|Rm| {}", cfg.stop_rm, summary.rm_sup)));
        }
        let traj =
            FlowTrajectory { snapshots: vec![Snapshot { profile: initial.clone(), summary }], neck: vec![(initial.t, initial.psi[0])], steps: 0, stop: None };
        let r = initial.psi[0];
        Ok(Integrator { cfg, stepper, state: initial, traj, last_snap_r: r, last_snap_step: 0 })
    }

    /// Continue from the last snapshot of a persisted trajectory. Neck samples
    /// after that snapshot are discarded so the continuation reproduces an
    /// uninterrupted run exactly.
    pub fn resume(mut traj: FlowTrajectory, cfg: IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        let last = traj.last().clone();
        last.profile.validate()?;
        traj.neck.retain(|(t, _)| *t <= last.profile.t);
        traj.steps = last.summary.step;
        traj.stop = None;
        let stepper = Stepper::new(&last.profile);
        Ok(Integrator { cfg, stepper, state: last.profile, traj, last_snap_r: last.summary.equator_radius, last_snap_step: last.summary.step })
    }

    pub fn state(&self) -> &FlowProfile {
        &self.state
    }

    pub fn trajectory(&self) -> &FlowTrajectory {
        &self.traj
    }

    pub fn into_trajectory(self) -> FlowTrajectory {
        self.traj
    }

    pub(crate) fn snapshot(&mut self) {
        let steps = self.traj.steps;
        if self.traj.last().summary.step == steps {
            return;
        }
        let summary = summarize(&self.state, self.stepper.ops(), steps);
        self.traj.snapshots.push(Snapshot { profile: self.state.clone(), summary });
        if self.traj.neck.last().map(|(t, _)| *t) != Some(self.state.t) {
            self.traj.neck.push((self.state.t, self.state.psi[0]));
        }
        self.last_snap_r = self.state.psi[0];
        self.last_snap_step = steps;
    }

    /// Integrate until a stop criterion holds or `budget` more steps were taken.
    pub fn advance(&mut self, budget: Option<u64>) -> Result<StopReason> {
        Ok(self.advance_inner(budget, false)?.expect("runs to a stop"))
    }

    /// Integrate until the next scheduled snapshot (`None`) or a stop. The
    /// snapshot schedule is the same as for `advance`, so a caller persisting
    /// each snapshot can resume from any of them and reproduce the run.
    pub fn advance_to_snapshot(&mut self) -> Result<Option<StopReason>> {
        self.advance_inner(None, true)
    }

    fn advance_inner(&mut self, budget: Option<u64>, yield_on_snapshot: bool) -> Result<Option<StopReason>> {
        let start = self.traj.steps;
        let drop = (-0.5 * self.cfg.snapshot_dtau).exp();
        loop {
            if self.state.psi[0] <= self.cfg.stop_radius {
                return Ok(Some(self.stop(StopReason::RadiusThreshold)));
            }
            if let Some(te) = self.cfg.t_end {
                if self.state.t >= te {
                    return Ok(Some(self.stop(StopReason::EndTime)));
                }
            }
            if let Some(b) = budget {
                if self.traj.steps - start >= b {
                    self.snapshot();
                    return Ok(Some(StopReason::StepBudget));
                }
            }
            let (rm, mut dt) = self.stepper.stable_dt(&self.state, self.cfg.cfl);
            if !rm.is_finite() {
                return Err(Error::Instability { t: self.state.t, detail: "non-finite curvature".into() });
            }
            if rm >= self.cfg.stop_rm {
                return Ok(Some(self.stop(StopReason::CurvatureThreshold)));
            }
            if let Some(te) = self.cfg.t_end {
                if self.state.t + dt > te {
                    dt = te - self.state.t;
                }
            }
            self.stepper.step_in_place(&mut self.state, dt)?;
            if let Some(te) = self.cfg.t_end {
                if (self.state.t - te).abs() <= 4.0 * f64::EPSILON * te.abs() {
                    self.state.t = te;
                }
            }
            self.traj.steps += 1;
            let steps = self.traj.steps;
            if steps.is_multiple_of(self.cfg.neck_stride) {
                self.traj.neck.push((self.state.t, self.state.psi[0]));
            }
            let by_stride = self.cfg.snapshot_stride > 0 && steps - self.last_snap_step >= self.cfg.snapshot_stride;
            let by_radius = self.cfg.snapshot_dtau > 0.0 && self.state.psi[0] <= self.last_snap_r * drop;
            if by_stride || by_radius {
                self.snapshot();
                if yield_on_snapshot {
                    return Ok(None);
                }
            }
        }
    }

    fn stop(&mut self, reason: StopReason) -> StopReason {
        self.snapshot();
        self.traj.stop = Some(reason);
        reason
    }
}

/// Failure of a run, carrying everything up to the last good state.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: FlowTrajectory,
}

pub fn run(initial: FlowProfile, cfg: IntegratorConfig) -> std::result::Result<FlowTrajectory, Box<RunFailure>> {
    let mut it = match Integrator::new(initial, cfg) {
        Ok(it) => it,
        Err(error) => return Err(Box::new(RunFailure { error, partial: FlowTrajectory { snapshots: vec![], neck: vec![], steps: 0, stop: None } })),
    };
    match it.advance(None) {
        Ok(_) => Ok(it.into_trajectory()),
        Err(error) => {
            it.snapshot();
            Err(Box::new(RunFailure { error, partial: it.into_trajectory() }))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TEstimate {
    pub t_est: f64,
    /// Rigorous lower bracket t + r²/(2(n−1)) at the last sample.
    pub t_lo: f64,
    /// Upper bracket from the empirical neck deficit 1 − u_neck.
    pub t_hi: f64,
    /// Fitted −d(r²)/dt on the terminal window (2(n−1) for an exact neckpinch).
    pub slope: f64,
    pub window_start: f64,
    pub window_points: usize,
}

impl TEstimate {
    pub fn nested(&self) -> bool {
        self.t_lo <= self.t_est && self.t_est <= self.t_hi
    }
}

/// Linear fit of r² against t on the samples with r² ≤ `window_factor`·r_f².
pub fn fit_extinction(series: &[(f64, f64)], window_factor: f64) -> Result<(f64, f64, usize)> {
    let (_, rf) = *series.last().ok_or_else(|| Error::InsufficientData("empty radius series".into()))?;
    let cut = window_factor * rf * rf;
    let mut first = series.len();
    while first > 0 && series[first - 1].1 * series[first - 1].1 <= cut {
        first -= 1;
    }
    let first = first.min(series.len().saturating_sub(5));
    let w = &series[first..];
    if w.len() < 3 {
        return Err(Error::InsufficientData("fewer than 3 samples in terminal window".into()));
    }
    let t: Vec<f64> = w.iter().map(|p| p.0).collect();
    let r2: Vec<f64> = w.iter().map(|p| p.1 * p.1).collect();
    let fit = line_fit(&t, &r2)?;
    if !(fit.slope < 0.0) {
        return Err(Error::NotANeckpinch("radius is not decreasing on the terminal window".into()));
    }
    Ok((-fit.intercept / fit.slope, -fit.slope, first))
}

/// Singular-time estimate from the equator radius series.
pub fn estimate_t(traj: &FlowTrajectory) -> Result<TEstimate> {
    let last = traj.last();
    let n = last.profile.n;
    let ops = DiffOps::new(&last.profile.x_grid, last.profile.outer);
    let feats = detect_features_from(&last.profile, &derivatives(&last.profile, &ops));
    if feats.equator != EquatorKind::Neck {
        return Err(Error::NotANeckpinch(format!("equator is {:?}, not a neck", feats.equator)));
    }
    estimate_t_from_series(&traj.neck, n)
}

pub fn estimate_t_from_series(series: &[(f64, f64)], n: usize) -> Result<TEstimate> {
    let c = 2.0 * (n as f64 - 1.0);
    let (t_est, slope, first) = fit_extinction(series, 4.0)?;
    if slope > 1.25 * c {
        return Err(Error::NotANeckpinch(format!("radius shrinks at rate {slope:.4} > 2(n-1); shrinking bump, not a neck")));
    }
    let (tf, rf) = *series.last().unwrap();
    let t_lo = tf + rf * rf / c;
    let deficit = if t_est > tf { (1.0 - rf / (c * (t_est - tf)).sqrt()).max(0.0) } else { 0.0 };
    let delta = (1.5 * deficit).min(0.5);
    let t_hi = tf + rf * rf / (c * (1.0 - delta) * (1.0 - delta));
    Ok(TEstimate { t_est, t_lo, t_hi, slope, window_start: series[first].0, window_points: series.len() - first })
}

/// Node placement shared by the initial-data families: a uniform x-grid and a
/// parametrization whose speed φ is reduced near the equator by `refine_factor`,
/// φ ∝ ε + (1−ε)·sin^{2q}(πx/2), which is even across both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub nodes: usize,
    pub refine_factor: f64,
    pub refine_power: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { nodes: 201, refine_factor: 1.0, refine_power: 1 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 9 {
            return Err(Error::Config("grid nodes must be at least 9".into()));
        }
        if !(self.refine_factor > 0.0 && self.refine_factor <= 1.0) {
            return Err(Error::Config("refine_factor must be in (0,1]".into()));
        }
        if self.refine_power == 0 {
            return Err(Error::Config("refine_power must be at least 1".into()));
        }
        Ok(())
    }

    /// Uniform nodes, the speed φ and the arclength s at each node for a total
    /// length `total`.
    pub fn parametrize(&self, total: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let m = self.nodes;
        let x: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
        let eps = self.refine_factor;
        let q = self.refine_power as i32;
        let shape = move |x: f64| eps + (1.0 - eps) * (FRAC_PI_2 * x).sin().powi(2 * q);
        // ∫₀¹ sin^{2q}(πx/2) dx = (2q−1)!!/(2q)!!
        let mut iq = 1.0;
        for k in 1..=q {
            iq *= (2 * k - 1) as f64 / (2 * k) as f64;
        }
        let scale = total / (eps + (1.0 - eps) * iq);
        let phi: Vec<f64> = x.iter().map(|&x| scale * shape(x)).collect();
        let mut s = vec![0.0; m];
        for j in 1..m {
            s[j] = s[j - 1] + scale * adaptive_simpson(&shape, x[j - 1], x[j], 1e-15);
        }
        s[m - 1] = total;
        (x, phi, s)
    }
}

/// Round cylinder of radius `psi0` and half-length `length` (mirror at both ends).
pub fn cylinder(n: usize, psi0: f64, length: f64, nodes: usize) -> Result<FlowProfile> {
    let x: Vec<f64> = (0..nodes).map(|i| i as f64 / (nodes - 1) as f64).collect();
    FlowProfile::new(n, 0.0, x, vec![psi0; nodes], vec![length; nodes], OuterBoundary::Mirror)
}

/// Round sphere of radius `radius`: ψ = R cos(s/R) on s ∈ [0, πR/2].
pub fn round_sphere(n: usize, radius: f64, grid: GridSpec) -> Result<FlowProfile> {
    dumbbell(&DumbbellParams { n, neck_width: 1.0, sharpness: 1, scale: radius, grid })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DumbbellParams {
    pub n: usize,
    /// Equator radius relative to the scale.
    pub neck_width: f64,
    /// Exponent p in ψ = R cos ϑ (1 − (1−w) cos^{2p} ϑ); larger p gives a shorter neck.
    pub sharpness: u32,
    /// Overall radius R (the arclength from equator to pole is πR/2).
    pub scale: f64,
    pub grid: GridSpec,
}

/// Smallest scale for which the cylinder comparison bound on the neck
/// extinction time, (Rw)²/(2(n−1)), exceeds `t_min`.
pub fn scale_for_extinction_bound(n: usize, neck_width: f64, t_min: f64) -> f64 {
    (2.0 * (n as f64 - 1.0) * t_min).sqrt() / neck_width
}

/// Reflection-symmetric dumbbell: ψ(ϑ) = R cos ϑ (1 − (1−w) cos^{2p} ϑ) with
/// ϑ = s/R. The factor cos^{2p} ϑ is even about the pole, so ψ stays odd
/// there and the tip is smooth for every parameter choice.
pub fn dumbbell(p: &DumbbellParams) -> Result<FlowProfile> {
    p.grid.validate()?;
    let w = p.neck_width;
    if !(w > 0.0 && w <= 1.0) {
        return Err(Error::Parameter(format!("neck width {w} must be in (0,1]")));
    }
    if p.sharpness == 0 || !(p.scale > 0.0) {
        return Err(Error::Parameter("sharpness must be >= 1 and scale positive".into()));
    }
    let r = p.scale;
    let (x, phi, s) = p.grid.parametrize(FRAC_PI_2 * r);
    let e = 2 * p.sharpness as i32;
    let mut psi: Vec<f64> = s
        .iter()
        .map(|s| {
            let c = (s / r).cos();
            r * c * (1.0 - (1.0 - w) * c.powi(e))
        })
        .collect();
    let m = psi.len();
    psi[m - 1] = 0.0;
    let prof = FlowProfile::new(p.n, 0.0, x, psi, phi, OuterBoundary::Pole)?;
    let ops = DiffOps::new(&prof.x_grid, prof.outer);
    let d = derivatives(&prof, &ops);
    let tip = d.psi_s[m - 1];
    if (tip + 1.0).abs() > 1e-4 {
        return Err(Error::Parameter(format!("pole slope {tip} differs from -1; grid too coarse")));
    }
    let f = detect_features_from(&prof, &d);
    let expect_neck = w < 1.0 && (1.0 - w) * (e as f64 + 1.0) > 1.0;
    if expect_neck {
        if f.equator != EquatorKind::Neck || !f.necks.is_empty() || f.bumps.len() != 1 {
            return Err(Error::Parameter(format!(
                "expected an equator neck and one bump, found {:?} with {} necks, {} bumps",
                f.equator,
                f.necks.len(),
                f.bumps.len()
            )));
        }
    } else if f.equator != EquatorKind::Bump || !f.necks.is_empty() || !f.bumps.is_empty() {
        return Err(Error::Parameter("parameters give neither a dumbbell nor a convex profile".into()));
    }
    Ok(prof)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_step_is_identity() {
        let p = dumbbell(&DumbbellParams { n: 2, neck_width: 0.3, sharpness: 2, scale: 1.0, grid: GridSpec::default() }).unwrap();
        assert_eq!(step(&p, 0.0).unwrap(), p);
    }

    #[test]
    fn cylinder_follows_the_ode() {
        let p = cylinder(2, 1.0, 1.0, 21).unwrap();
        let cfg = IntegratorConfig { t_end: Some(0.18), stop_radius: 0.0, ..Default::default() };
        let tr = run(p, cfg).unwrap();
        let last = &tr.last().profile;
        assert_eq!(last.t, 0.18);
        for v in &last.psi {
            assert!((v - 0.8).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_series_gives_exact_extinction_time() {
        let series: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let t = 0.3 * i as f64 / 200.0;
                (t, (2.0 * (0.3 - t)).sqrt())
            })
            .collect();
        let e = estimate_t_from_series(&series, 2).unwrap();
        assert!((e.t_est - 0.3).abs() < 1e-10);
        assert!(e.nested());
    }

    #[test]
    fn dumbbell_features_and_symmetry() {
        let p =
            dumbbell(&DumbbellParams { n: 2, neck_width: 0.2, sharpness: 2, scale: 1.0, grid: GridSpec { nodes: 101, refine_factor: 0.2, refine_power: 1 } })
                .unwrap();
        let f = crate::profile::detect_features(&p).unwrap();
        assert_eq!(f.equator, EquatorKind::Neck);
        assert_eq!(f.bumps.len(), 1);
        assert!((p.psi[0] - 0.2).abs() < 1e-14);
        let round = dumbbell(&DumbbellParams { n: 2, neck_width: 1.0, sharpness: 3, scale: 1.0, grid: GridSpec::default() }).unwrap();
        let g = crate::profile::detect_features(&round).unwrap();
        assert_eq!(g.neck_count(), 0);
    }
}
