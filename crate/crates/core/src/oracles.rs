//! Closed-form reference data for validating the numerical spectral pipeline.
//!
//! Everything here is a pure formula or a frozen constant: ellipse spectra,
//! the ellipse polarization tensor, the analytic resonance profile of the
//! intersecting disks in bipolar coordinates, and converged eigenvalue tables
//! used as regression targets. Nothing in this module calls the Nystrom
//! solver, so a disagreement between an oracle and a solver result localizes
//! the failure unambiguously.

use crate::error::{Error, Result};
use crate::geometry::V2;
use nalgebra::Matrix2;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Eigenvalues of the Neumann-Poincare operator on an ellipse of aspect `r`
/// (semi-axes `r` and `1`): the pairs `+-(1/2) ((r-1)/(r+1))^n` for
/// `n = 1..=n_max`, sorted by descending magnitude with the positive member
/// of each pair first.
///
/// Requires `r >= 1`; a circle (`r = 1`) yields all zeros.
pub fn ellipse_eigenvalues(r: f64, n_max: usize) -> Result<Vec<f64>> {
    if !(r.is_finite() && r >= 1.0) {
        return Err(Error::InvalidGeometry(format!("aspect r = {r} must be >= 1")));
    }
    let q = (r - 1.0) / (r + 1.0);
    let mut out = Vec::with_capacity(2 * n_max);
    let mut p = 0.5;
    for _ in 1..=n_max {
        p *= q;
        out.push(p);
        out.push(-p);
    }
    Ok(out)
}

/// The two poles of the ellipse polarization tensor, `+-(a-b)/(2(a+b))`.
///
/// They coincide with the largest-magnitude eigenvalue pair of the ellipse
/// (and only with that pair).
pub fn polarization_poles(a: f64, b: f64) -> [f64; 2] {
    let p = (a - b) / (2.0 * (a + b));
    [p, -p]
}

/// Polarization tensor of the ellipse with semi-axes `a`, `b` at spectral
/// parameter `lambda`: the diagonal matrix with entries
///
/// ```text
/// 2 pi a b (a+b) / ((2 lambda - 1) a + (2 lambda + 1) b)
/// 2 pi a b (a+b) / ((2 lambda - 1) b + (2 lambda + 1) a)
/// ```
///
/// Errors if `lambda` sits on (or within roundoff of) one of the two poles
/// `+-(a-b)/(2(a+b))`.
pub fn ellipse_polarization_tensor(
    lambda: Complex64,
    a: f64,
    b: f64,
) -> Result<Matrix2<Complex64>> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidGeometry(format!("semi-axes ({a}, {b}) must be positive")));
    }
    let two_l = 2.0 * lambda;
    let den = [
        (two_l - 1.0) * a + (two_l + 1.0) * b,
        (two_l - 1.0) * b + (two_l + 1.0) * a,
    ];
    // Pole detection is relative to the natural scale of the denominator
    // coefficients, so a lambda within roundoff of a pole is rejected rather
    // than silently amplified.
    let scale = (a + b) * (1.0 + lambda.norm());
    for d in den {
        if d.norm() <= 1e-12 * scale {
            return Err(Error::Unsupported(format!(
                "polarization tensor evaluated at a pole: lambda = {lambda}"
            )));
        }
    }
    let num = Complex64::new(2.0 * PI * a * b * (a + b), 0.0);
    let zero = Complex64::new(0.0, 0.0);
    Ok(Matrix2::new(num / den[0], zero, zero, num / den[1]))
}

/// Bipolar coordinates of a point with respect to foci at `(+-c, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BipolarPoint {
    pub psi1: f64,
    /// Angular coordinate; always in `[-pi, pi]`.
    pub psi2: f64,
}

/// Bipolar coordinates of `z` with respect to foci `(+-c, 0)`:
/// `psi1 + i psi2 = Log((z + c)/(z - c))` with the principal branch of the
/// logarithm, reading `z` as a complex number.
///
/// `psi2` is the signed angle subtended at `z` by the segment between the
/// foci; its level sets are circular arcs through both foci.
pub fn bipolar(z: V2, c: f64) -> Result<BipolarPoint> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidGeometry(format!("focus half-distance c = {c} must be positive")));
    }
    let zc = Complex64::new(z.x, z.y);
    if (zc - c).norm() == 0.0 || (zc + c).norm() == 0.0 {
        return Err(Error::InvalidSource(format!(
            "bipolar coordinates are singular at the focus ({}, {})",
            z.x, z.y
        )));
    }
    let w = ((zc + c) / (zc - c)).ln();
    Ok(BipolarPoint { psi1: w.re, psi2: w.im })
}

/// Analytic limit of the resonance indicator for the intersecting disks of
/// radius `a` and half-opening `theta0`, driven by a dipole at `z` with a
/// suitably chosen orientation:
///
/// ```text
/// alpha(t) = 0                            for |t| > b
///            1/2                          for 0 < |t| < b
///            3/4                          at  |t| = b
///            (1 + |psi2(z)| / theta0) / 2 at   t  = 0
/// ```
///
/// where `b = 1/2 - theta0 / pi` is the essential-spectrum radius of the
/// corner pair (the two boundary circles cross at the reentrant interior
/// angle `2 pi - 2 theta0`) and `psi2` is taken with respect to foci at the corners `(+-c, 0)`,
/// `c = a sin(theta0)`.
///
/// Branch selection is exact: `t` must equal `0.0` or `+-b` bit-for-bit to
/// hit those cases. Requires `0 < theta0 < pi/2` and `z` strictly outside
/// the closed region (which keeps it away from both foci); the value at
/// `t = 0` increases toward (but never reaches) one as `z` approaches the
/// boundary arcs.
pub fn disks_indicator(t: f64, z: V2, a: f64, theta0: f64) -> Result<f64> {
    if !(theta0 > 0.0 && theta0 < 0.5 * PI) {
        return Err(Error::InvalidGeometry(format!(
            "half-opening theta0 = {theta0} outside (0, pi/2)"
        )));
    }
    let b = 0.5 - theta0 / PI;
    if t == 0.0 {
        let c = a * theta0.sin();
        let psi2 = bipolar(z, c)?.psi2;
        Ok(0.5 * (1.0 + psi2.abs() / theta0))
    } else if t.abs() == b {
        Ok(0.75)
    } else if t.abs() < b {
        Ok(0.5)
    } else {
        Ok(0.0)
    }
}

/// Limits as `delta -> 0` of `delta * ||phi_{t,delta}||_*^2` for the
/// intersecting disks with `a = 2`, `theta0 = pi/4`, driven by a dipole at
/// `z = (3, 2)` with direction `(1, 1)/sqrt(2)`, at four points inside the
/// continuous band. Obtained from the closed-form spectral resolution of the
/// double-disk in bipolar coordinates; correct to the digits shown. Outside
/// the band (`|t| > 1/4`) the limit is zero.
pub const DISKS_DIPOLE_ENERGY_LIMITS: [(f64, f64); 4] = [
    (-0.2, 0.018710399304385),
    (-0.1, 0.022245420816273),
    (0.1, 0.007687535353992),
    (0.2, 0.003180101918936),
];

/// Largest eight eigenvalues of the Neumann-Poincare operator on the
/// superellipse `|x/30|^10 + |y|^10 = 1`, correct to the digits shown.
/// Regression reference for smooth-domain eigensolves.
pub const SUPERELLIPSE_R30_K10_TOP: [f64; 8] = [
    0.4641820097578,
    0.4184312731794,
    0.3780806619486,
    0.3413081257441,
    0.3082509222763,
    0.2782621209976,
    0.2512202243804,
    0.2267447370526,
];

/// Largest seven eigenvalues of the Neumann-Poincare operator on the
/// rectangle of aspect ratio 30, correct to the digits shown. The first six
/// lie outside the essential band `[-1/4, 1/4]`; the seventh sits just
/// inside its edge. Regression reference for corner-compressed eigenvalue
/// detection.
pub const RECTANGLE_R30_TOP: [f64; 7] = [
    0.46440817528139,
    0.41875518162132,
    0.37830131456136,
    0.34137309903240,
    0.30825666494214,
    0.27842565462101,
    0.25234907781210,
];
