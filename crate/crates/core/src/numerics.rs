//! Small numerical kernels shared by the flow and analysis modules: finite
//! difference weights on arbitrary nodes, cumulative quadrature, Gauss–Legendre
//! rules, cubic Hermite resampling and least-squares line fits.

use crate::error::{Error, Result};

/// Fornberg's algorithm. Returns `w[k][j]`, the weight of `x[j]` in the
/// k-th derivative at `z`, for k = 0..=m.
pub fn fornberg_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Lagrange interpolation through the given points, evaluated at `z`.
fn lagrange_eval(xs: &[f64], ys: &[f64], z: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..xs.len() {
        let mut l = 1.0;
        for j in 0..xs.len() {
            if i != j {
                l *= (z - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += l * ys[i];
    }
    acc
}

/// Precomputed weights for [`cumulative_integral`] on a fixed grid.
#[derive(Debug, Clone)]
pub struct CumulativeRule {
    start: Vec<usize>,
    weights: Vec<[f64; 4]>,
    trapezoid: bool,
    x: Vec<f64>,
}

impl CumulativeRule {
    pub fn new(x: &[f64]) -> Self {
        let n = x.len();
        let trapezoid = n < 4;
        let mut start = Vec::new();
        let mut weights = Vec::new();
        if !trapezoid {
            // two-point Gauss rule integrates the cubic exactly
            let g = 0.5 / 3f64.sqrt();
            for i in 0..n - 1 {
                let lo = i.saturating_sub(1).min(n - 4);
                let xs = &x[lo..lo + 4];
                let h = x[i + 1] - x[i];
                let mid = 0.5 * (x[i] + x[i + 1]);
                let mut w = [0.0; 4];
                for (k, wk) in w.iter_mut().enumerate() {
                    let mut e = [0.0; 4];
                    e[k] = 1.0;
                    *wk = 0.5 * h * (lagrange_eval(xs, &e, mid - g * h) + lagrange_eval(xs, &e, mid + g * h));
                }
                start.push(lo);
                weights.push(w);
            }
        }
        CumulativeRule { start, weights, trapezoid, x: x.to_vec() }
    }

    pub fn apply(&self, y: &[f64], out: &mut [f64]) {
        let n = self.x.len();
        if n == 0 {
            return;
        }
        out[0] = 0.0;
        if self.trapezoid {
            for i in 1..n {
                out[i] = out[i - 1] + 0.5 * (self.x[i] - self.x[i - 1]) * (y[i] + y[i - 1]);
            }
            return;
        }
        for i in 0..n - 1 {
            let lo = self.start[i];
            let w = &self.weights[i];
            out[i + 1] = out[i] + w[0] * y[lo] + w[1] * y[lo + 1] + w[2] * y[lo + 2] + w[3] * y[lo + 3];
        }
    }
}

/// Running integral of `y` over `x` starting at zero, using the local cubic
/// through four neighbouring nodes on each interval (fourth order).
pub fn cumulative_integral(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    CumulativeRule::new(x).apply(y, &mut out);
    out
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Ordinary least-squares line `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual.
    pub max_residual: f64,
    /// Standard error of the slope (zero for two points or exact data).
    pub slope_stderr: f64,
}

pub fn line_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InsufficientData(format!("line fit needs >= 2 points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData("degenerate abscissae in line fit".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut max_residual: f64 = 0.0;
    let mut ss = 0.0;
    for i in 0..n {
        let r = y[i] - intercept - slope * x[i];
        max_residual = max_residual.max(r.abs());
        ss += r * r;
    }
    let slope_stderr = if n > 2 { (ss / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(LineFit { slope, intercept, max_residual, slope_stderr })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Derivative at the middle of three (possibly unequally spaced) samples.
pub fn centered_derivative(t: [f64; 3], v: [f64; 3]) -> f64 {
    let w = fornberg_weights(t[1], &t, 1);
    w[1][0] * v[0] + w[1][1] * v[1] + w[1][2] * v[2]
}

/// Piecewise cubic Hermite interpolant on strictly increasing nodes.
#[derive(Debug, Clone)]
pub struct CubicHermite {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl CubicHermite {
    /// Monotone piecewise cubic with slopes from the Fritsch–Butland harmonic
    /// mean (the usual PCHIP construction).
    pub fn pchip(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        let mut d = vec![0.0; n];
        if n == 2 {
            let s = (y[1] - y[0]) / (x[1] - x[0]);
            d[0] = s;
            d[1] = s;
        } else if n > 2 {
            let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
            let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
            for k in 1..n - 1 {
                if del[k - 1] * del[k] <= 0.0 {
                    d[k] = 0.0;
                } else {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
                }
            }
            d[0] = pchip_end(h[0], h[1], del[0], del[1]);
            d[n - 1] = pchip_end(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
        }
        CubicHermite { x: x.to_vec(), y: y.to_vec(), d }
    }

    /// Cubic Hermite with known derivative values, with the Fritsch–Carlson
    /// rescaling applied where both slopes agree in sign with the secant.
    pub fn with_slopes(x: &[f64], y: &[f64], slopes: &[f64]) -> Self {
        let n = x.len();
        let mut d = slopes.to_vec();
        for i in 0..n.saturating_sub(1) {
            let del = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
            if del == 0.0 {
                continue;
            }
            let a = d[i] / del;
            let b = d[i + 1] / del;
            let r = a * a + b * b;
            if a >= 0.0 && b >= 0.0 && r > 9.0 {
                let s = 3.0 / r.sqrt();
                d[i] = s * a * del;
                d[i + 1] = s * b * del;
            }
        }
        CubicHermite { x: x.to_vec(), y: y.to_vec(), d }
    }

    /// Plain cubic Hermite through exact derivative values, no limiting.
    pub fn exact(x: &[f64], y: &[f64], slopes: &[f64]) -> Self {
        CubicHermite { x: x.to_vec(), y: y.to_vec(), d: slopes.to_vec() }
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.x.last().unwrap()
    }

    /// Value at `z`; outside the node range the end value is held constant.
    pub fn eval(&self, z: f64) -> f64 {
        let n = self.x.len();
        if n == 1 || z <= self.x[0] {
            return self.y[0];
        }
        if z >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = match self.x.binary_search_by(|p| p.total_cmp(&z)) {
            Ok(i) => return self.y[i],
            Err(i) => i - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let t = (z - self.x[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }
    /// Derivative of the interpolant at `z`; zero outside the node range.
    pub fn derivative(&self, z: f64) -> f64 {
        let n = self.x.len();
        if n == 1 || z < self.x[0] || z > self.x[n - 1] {
            return 0.0;
        }
        let i = match self.x.binary_search_by(|p| p.total_cmp(&z)) {
            Ok(i) => return self.d[i],
            Err(i) => i - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let t = (z - self.x[i]) / h;
        let t2 = t * t;
        let d00 = 6.0 * t2 - 6.0 * t;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = -d00;
        let d11 = 3.0 * t2 - 2.0 * t;
        (d00 * self.y[i] + d01 * self.y[i + 1]) / h + d10 * self.d[i] + d11 * self.d[i + 1]
    }
}

fn pchip_end(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

/// Adaptive Simpson quadrature of a closure; used for reference values.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        // below roundoff the halving tolerance can never be met
        if depth == 0 || delta.abs() <= 15.0 * tol.max(1e-15 * (left.abs() + right.abs())) {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_weights_on_uniform_nodes() {
        let x = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let w = fornberg_weights(0.0, &x, 2);
        let d1 = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        let d2 = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
        for j in 0..5 {
            assert!((w[1][j] - d1[j]).abs() < 1e-14);
            assert!((w[2][j] - d2[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn gauss_legendre_integrates_high_degree_polynomials() {
        let (x, w) = gauss_legendre(10);
        // exact through degree 19
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((v - 2.0 / 19.0).abs() < 1e-14);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn cumulative_integral_is_fourth_order() {
        let err = |n: usize| {
            let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
            let y: Vec<f64> = x.iter().map(|x| (3.0 * x).cos()).collect();
            let s = cumulative_integral(&x, &y);
            (s[n - 1] - 3f64.sin() / 3.0).abs()
        };
        let order = (err(21) / err(41)).log2();
        assert!(order > 3.7, "order {order}");
    }

    #[test]
    fn cubic_hermite_reproduces_cubics_with_exact_slopes() {
        let x: Vec<f64> = (0..7).map(|i| (i as f64 * 0.3).powf(1.2)).collect();
        let y: Vec<f64> = x.iter().map(|x| x * x * x - x).collect();
        let d: Vec<f64> = x.iter().map(|x| 3.0 * x * x - 1.0).collect();
        let c = CubicHermite::with_slopes(&x, &y, &d);
        for z in [0.05, 0.4, 0.77, 1.3] {
            assert!((c.eval(z) - (z * z * z - z)).abs() < 1e-12);
        }
    }

    #[test]
    fn pchip_keeps_monotone_data_monotone() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [0.0, 0.1, 0.2, 5.0, 5.1];
        let c = CubicHermite::pchip(&x, &y);
        let mut prev = c.eval(0.0);
        for i in 1..=400 {
            let v = c.eval(i as f64 * 0.01);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|x| 2.5 - 0.5 * x).collect();
        let f = line_fit(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 2.5).abs() < 1e-14);
    }
}
