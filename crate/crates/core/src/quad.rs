//! Gauss-Legendre quadrature and product-integration helpers for the
//! logarithmic kernel.
//!
//! Everything here is plain 1D machinery on the reference interval `[-1, 1]`:
//! node/weight generation by Newton iteration on Legendre polynomials, and the
//! moment integrals `int P_m(x) ln|t - x| dx` used for panelwise product
//! integration of the single-layer kernel.

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
///
/// Exact for polynomials of degree `<= 2n - 1`. Supported range is
/// `1 <= n <= 64`; outside it the request is a programming error.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!((1..=64).contains(&n), "gauss_legendre: n = {n} out of range 1..=64");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        // One polishing step keeps nodes at the 1-ulp level.
        let (p, d) = legendre_with_derivative(n, x);
        x -= p / d;
        let dp = legendre_with_derivative(n, x).1;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        let (_, d) = legendre_with_derivative(n, 0.0);
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

/// Cached nodes and weights of the `n`-point rule.
///
/// Rules are generated once per distinct order and leaked; the distinct orders
/// in use are few and small, so the footprint is negligible.
pub fn gauss_legendre_cached(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    use std::collections::HashMap;
    use std::sync::{Mutex, OnceLock};
    type Rule = &'static (Vec<f64>, Vec<f64>);
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    if let Some(rule) = guard.get(&n) {
        return rule;
    }
    let rule: &'static (Vec<f64>, Vec<f64>) = Box::leak(Box::new(gauss_legendre(n)));
    guard.insert(n, rule);
    rule
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Values of `P_0..=P_max` at `x` (three-term recurrence).
pub fn legendre_values(max: usize, x: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(max + 1);
    p.push(1.0);
    if max == 0 {
        return p;
    }
    p.push(x);
    for k in 2..=max {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf;
        p.push(next);
    }
    p
}

/// Moments `q_m = int_{-1}^{1} P_m(x) ln|t - x| dx` for `m = 0..q`.
///
/// `t` may lie inside `[-1, 1]` (improper but integrable) or outside it
/// (near-singular evaluation); both are needed when a panel is hit by one of
/// its own or a parametrically nearby node. Uses the Legendre function of the
/// second kind via `q_m = (r_{m+1} - r_{m-1}) / (2m + 1)` with
/// `r_m = p.v. int P_m(x)/(t - x) dx`; the `r` recurrence runs forward inside
/// the interval (oscillatory, stable) and backward outside it (Miller's
/// algorithm, since the decaying solution is wanted there).
pub fn log_moments(q: usize, t: f64) -> Vec<f64> {
    let r = second_kind_integrals(q + 1, t);
    let mut out = Vec::with_capacity(q + 1);
    // q_0 directly: int ln|t-x| dx = (t+1) ln|t+1| - (t-1) ln|t-1| - 2.
    out.push(xlnx(t + 1.0) - xlnx(t - 1.0) - 2.0);
    for m in 1..=q {
        out.push((r[m + 1] - r[m - 1]) / (2.0 * m as f64 + 1.0));
    }
    out
}

fn xlnx(u: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u * u.abs().ln()
    }
}

/// `r_m = p.v. int_{-1}^{1} P_m(x) / (t - x) dx` for `m = 0..=max`.
fn second_kind_integrals(max: usize, t: f64) -> Vec<f64> {
    let r0 = (t + 1.0).abs().ln() - (t - 1.0).abs().ln();
    if t.abs() <= 1.0 {
        // Forward recurrence; both fundamental solutions stay O(1) inside the
        // interval, so this is stable.
        let mut r = Vec::with_capacity(max + 1);
        r.push(r0);
        if max >= 1 {
            r.push(t * r0 - 2.0);
            for m in 1..max {
                let mf = m as f64;
                let next = ((2.0 * mf + 1.0) * t * r[m] - mf * r[m - 1]) / (mf + 1.0);
                r.push(next);
            }
        }
        r
    } else {
        // Outside the interval the wanted solution decays like rho^-m while
        // the companion grows like rho^m, so forward recursion is unstable.
        // Miller's algorithm: seed a trial tail far enough above `max` that
        // the contaminating component is suppressed below roundoff by the
        // time it reaches `max`, run downward, rescale by the known r_0.
        let rho = t.abs() + (t * t - 1.0).sqrt();
        let extra = ((40.0 / (rho * rho).ln()).ceil() as usize).clamp(20, 2000);
        let start = max + extra;
        let mut hi = 0.0_f64; // r_{m+1} (unnormalized)
        let mut lo = 1e-280_f64; // r_m (unnormalized)
        let mut r = vec![0.0; max + 1];
        for m in (1..=start).rev() {
            let mf = m as f64;
            // Downward form of (m+1) r_{m+1} = (2m+1) t r_m - m r_{m-1}.
            let prev = ((2.0 * mf + 1.0) * t * lo - (mf + 1.0) * hi) / mf;
            if m - 1 <= max {
                r[m - 1] = prev;
            }
            hi = lo;
            lo = prev;
            if lo.abs() > 1e285 {
                let s = 1e-285;
                hi *= s;
                lo *= s;
                for v in r.iter_mut() {
                    *v *= s;
                }
            }
        }
        let scale = r0 / r[0];
        for v in r.iter_mut() {
            *v *= scale;
        }
        r
    }
}
