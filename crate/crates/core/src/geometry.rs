//! Piecewise-smooth closed boundary curves and the domain generators used
//! throughout the crate.
//!
//! A curve is an ordered chain of parametric arcs, each mapping `u in [0, 1]`
//! into the plane with two continuous derivatives. Arcs are chained head to
//! tail with positive (counterclockwise) orientation, so the outward normal is
//! the unit tangent rotated a quarter turn clockwise. Junctions listed in
//! `corners` carry an interior angle different from pi; every other junction
//! must be tangent-continuous.
//!
//! The generators place each domain in a canonical pose (centroid symmetry
//! axes on the coordinate axes); `rigid_motion` produces moved copies when a
//! different pose is needed.

use crate::error::{Error, Result};
use crate::quad::gauss_legendre_cached;
use std::f64::consts::PI;

pub type V2 = nalgebra::Vector2<f64>;

/// Parameter band near an arc endpoint inside which superellipse evaluators
/// switch to exact limit values; quadrature nodes never fall inside it.
const EDGE_BAND: f64 = 1e-7;

fn rot90(v: V2) -> V2 {
    V2::new(-v.y, v.x)
}

fn unit(v: V2) -> V2 {
    v / v.norm()
}

/// One smooth parametric arc, `u in [0, 1]`.
#[derive(Clone, Debug)]
pub enum ArcKind {
    /// Straight segment from `a` to `b`.
    Segment { a: V2, b: V2 },
    /// Circular arc, angles in radians, traversed from `angle0` to `angle1`.
    CircleArc { center: V2, radius: f64, angle0: f64, angle1: f64 },
    /// Full ellipse `(a cos 2 pi u, b sin 2 pi u)`; the only periodic kind.
    ClosedEllipse { a: f64, b: f64 },
    /// Elliptic arc between two parameter angles.
    EllipseArc { a: f64, b: f64, t0: f64, t1: f64 },
    /// One quadrant of `|x/r|^k + |y|^k = 1`, reparametrized so that the
    /// parameter speed stays bounded away from zero and infinity.
    ///
    /// The polar angle is warped through a regularized incomplete beta
    /// function of symmetric index `m = k/2`, which exactly cancels the
    /// `|cos|^(2/k - 1)` speed degeneracy of the naive trigonometric
    /// parametrization at the axes. `b_beta` and `lam` are the cached
    /// normalization and endpoint speed factor.
    SuperellipseQuadrant { r: f64, k: f64, m: f64, b_beta: f64, lam: f64, quadrant: u8 },
    /// Quintic polynomial arc, coefficients in increasing degree.
    Quintic { cx: [f64; 6], cy: [f64; 6] },
    /// A base arc under a rotation plus translation.
    Mapped { base: Box<ArcKind>, cos_t: f64, sin_t: f64, shift: V2 },
}

#[derive(Clone, Copy)]
struct QuadrantMap {
    /// Whether `|cos theta|` is the locally vanishing-at-`u=1` factor.
    a_is_c: bool,
    eps_c: f64,
    eps_s: f64,
}

/// Sign/swap bookkeeping: within quadrant `q` the local angle `phi` runs over
/// `[0, pi/2]` and `(|cos theta|, |sin theta|)` is a permutation of
/// `(cos phi, sin phi)` with quadrant-dependent signs.
fn quadrant_map(q: u8) -> QuadrantMap {
    match q {
        0 => QuadrantMap { a_is_c: true, eps_c: 1.0, eps_s: 1.0 },
        1 => QuadrantMap { a_is_c: false, eps_c: -1.0, eps_s: 1.0 },
        2 => QuadrantMap { a_is_c: true, eps_c: -1.0, eps_s: -1.0 },
        3 => QuadrantMap { a_is_c: false, eps_c: 1.0, eps_s: -1.0 },
        _ => unreachable!("quadrant index out of range"),
    }
}

/// `int_0^upper t^(m-1) (1-t)^(m-1) dt` by 32-point Gauss-Legendre.
///
/// Integer `m <= 32` integrates the polynomial directly (exact). Otherwise
/// the substitution `t = (1 - cos(pi v)) / 2` maps the integrand to
/// `(pi/2) 4^(1-m) sin(pi v)^(2m-1)`, analytic whenever `2m` is an integer,
/// which keeps odd exponents `k = 2m` at quadrature accuracy as well; truly
/// fractional indices retain a mild endpoint singularity and land near 1e-8.
fn beta_kernel_integral(m: f64, upper: f64) -> f64 {
    if upper <= 0.0 {
        return 0.0;
    }
    let upper = upper.min(1.0);
    let (x, w) = gauss_legendre_cached(32);
    let mut acc = 0.0;
    if (m - m.round()).abs() < 1e-12 {
        let h = 0.5 * upper;
        for (&xi, &wi) in x.iter().zip(w.iter()) {
            let t = h * (xi + 1.0);
            acc += wi * (t.powf(m - 1.0) * (1.0 - t).powf(m - 1.0));
        }
        acc * h
    } else {
        let v_up = (1.0 - 2.0 * upper).clamp(-1.0, 1.0).acos() / PI;
        let h = 0.5 * v_up;
        let scale = 0.5 * PI * 4.0f64.powf(1.0 - m);
        for (&xi, &wi) in x.iter().zip(w.iter()) {
            let v = h * (xi + 1.0);
            acc += wi * (PI * v).sin().powf(2.0 * m - 1.0);
        }
        acc * h * scale
    }
}

impl ArcKind {
    pub fn point(&self, u: f64) -> V2 {
        match self {
            ArcKind::Segment { a, b } => a + (b - a) * u,
            ArcKind::CircleArc { center, radius, angle0, angle1 } => {
                let t = angle0 + u * (angle1 - angle0);
                center + V2::new(t.cos(), t.sin()) * *radius
            }
            ArcKind::ClosedEllipse { a, b } => {
                let t = 2.0 * PI * u;
                V2::new(a * t.cos(), b * t.sin())
            }
            ArcKind::EllipseArc { a, b, t0, t1 } => {
                let t = t0 + u * (t1 - t0);
                V2::new(a * t.cos(), b * t.sin())
            }
            ArcKind::SuperellipseQuadrant { r, k, m, b_beta, quadrant, .. } => {
                let (s, c) = se_trig(*m, *b_beta, u);
                let qm = quadrant_map(*quadrant);
                let (aa, bb) = if qm.a_is_c { (c, s) } else { (s, c) };
                V2::new(r * qm.eps_c * aa.powf(2.0 / k), qm.eps_s * bb.powf(2.0 / k))
            }
            ArcKind::Quintic { cx, cy } => V2::new(horner(cx, u), horner(cy, u)),
            ArcKind::Mapped { base, cos_t, sin_t, shift } => {
                let p = base.point(u);
                V2::new(cos_t * p.x - sin_t * p.y, sin_t * p.x + cos_t * p.y) + shift
            }
        }
    }

    /// First parameter derivative `d gamma / d u`.
    pub fn d1(&self, u: f64) -> V2 {
        match self {
            ArcKind::Segment { a, b } => b - a,
            ArcKind::CircleArc { center: _, radius, angle0, angle1 } => {
                let dt = angle1 - angle0;
                let t = angle0 + u * dt;
                V2::new(-t.sin(), t.cos()) * (*radius * dt)
            }
            ArcKind::ClosedEllipse { a, b } => {
                let t = 2.0 * PI * u;
                V2::new(-a * t.sin(), b * t.cos()) * (2.0 * PI)
            }
            ArcKind::EllipseArc { a, b, t0, t1 } => {
                let dt = t1 - t0;
                let t = t0 + u * dt;
                V2::new(-a * t.sin(), b * t.cos()) * dt
            }
            ArcKind::SuperellipseQuadrant { r, k, m, b_beta, lam, quadrant } => {
                se_d1(*r, *k, *m, *b_beta, *lam, *quadrant, u)
            }
            ArcKind::Quintic { cx, cy } => V2::new(horner_d1(cx, u), horner_d1(cy, u)),
            ArcKind::Mapped { base, cos_t, sin_t, .. } => {
                let v = base.d1(u);
                V2::new(cos_t * v.x - sin_t * v.y, sin_t * v.x + cos_t * v.y)
            }
        }
    }

    /// Second parameter derivative `d^2 gamma / d u^2`.
    pub fn d2(&self, u: f64) -> V2 {
        match self {
            ArcKind::Segment { .. } => V2::zeros(),
            ArcKind::CircleArc { center: _, radius, angle0, angle1 } => {
                let dt = angle1 - angle0;
                let t = angle0 + u * dt;
                V2::new(-t.cos(), -t.sin()) * (*radius * dt * dt)
            }
            ArcKind::ClosedEllipse { a, b } => {
                let t = 2.0 * PI * u;
                V2::new(-a * t.cos(), -b * t.sin()) * (4.0 * PI * PI)
            }
            ArcKind::EllipseArc { a, b, t0, t1 } => {
                let dt = t1 - t0;
                let t = t0 + u * dt;
                V2::new(-a * t.cos(), -b * t.sin()) * (dt * dt)
            }
            ArcKind::SuperellipseQuadrant { r, k, m, b_beta, lam, quadrant } => {
                if u <= EDGE_BAND || u >= 1.0 - EDGE_BAND {
                    // One-sided second-order difference of d1; the interior
                    // formula is a 0 * inf product exactly at the endpoints.
                    let h = 1e-5;
                    let d1 = |v: f64| se_d1(*r, *k, *m, *b_beta, *lam, *quadrant, v);
                    if u <= EDGE_BAND {
                        (d1(0.0) * -3.0 + d1(h) * 4.0 - d1(2.0 * h)) / (2.0 * h)
                    } else {
                        (d1(1.0) * 3.0 - d1(1.0 - h) * 4.0 + d1(1.0 - 2.0 * h)) / (2.0 * h)
                    }
                } else {
                    se_d2_interior(*r, *k, *m, *b_beta, *quadrant, u)
                }
            }
            ArcKind::Quintic { cx, cy } => V2::new(horner_d2(cx, u), horner_d2(cy, u)),
            ArcKind::Mapped { base, cos_t, sin_t, .. } => {
                let v = base.d2(u);
                V2::new(cos_t * v.x - sin_t * v.y, sin_t * v.x + cos_t * v.y)
            }
        }
    }

    pub fn is_straight(&self) -> bool {
        match self {
            ArcKind::Segment { .. } => true,
            ArcKind::Mapped { base, .. } => base.is_straight(),
            _ => false,
        }
    }

    /// Whether `u` and `u + 1` describe the same point (single-arc closed curves).
    pub fn is_periodic(&self) -> bool {
        match self {
            ArcKind::ClosedEllipse { .. } => true,
            ArcKind::Mapped { base, .. } => base.is_periodic(),
            _ => false,
        }
    }
}

/// `(|sin phi|, |cos phi|)` of the warped local angle, each computed from its
/// own endpoint so both stay relatively accurate all the way into the axes.
fn se_trig(m: f64, b_beta: f64, u: f64) -> (f64, f64) {
    if u <= EDGE_BAND {
        (0.0, 1.0)
    } else if u >= 1.0 - EDGE_BAND {
        (1.0, 0.0)
    } else {
        let w = beta_kernel_integral(m, u) / b_beta;
        let wc = beta_kernel_integral(m, 1.0 - u) / b_beta;
        ((0.5 * PI * w).sin(), (0.5 * PI * wc).sin())
    }
}

/// Warp derivative `d theta / d u`.
fn se_theta_d1(m: f64, b_beta: f64, u: f64) -> f64 {
    0.5 * PI * u.powf(m - 1.0) * (1.0 - u).powf(m - 1.0) / b_beta
}

/// Warp second derivative; vanishes identically for `m = 1`.
fn se_theta_d2(m: f64, b_beta: f64, u: f64) -> f64 {
    if m == 1.0 {
        0.0
    } else {
        0.5 * PI * (m - 1.0) / b_beta
            * (u.powf(m - 2.0) * (1.0 - u).powf(m - 1.0) - u.powf(m - 1.0) * (1.0 - u).powf(m - 2.0))
    }
}

fn se_d1(r: f64, k: f64, m: f64, b_beta: f64, lam: f64, quadrant: u8, u: f64) -> V2 {
    let qm = quadrant_map(quadrant);
    let e = 2.0 / k;
    if u <= EDGE_BAND || u >= 1.0 - EDGE_BAND {
        // Exact limits: the vanishing trig factor and the vanishing warp
        // derivative combine to the finite speed factor `lam`.
        let van_a = if u <= EDGE_BAND { !qm.a_is_c } else { qm.a_is_c };
        return if van_a {
            V2::new(-r * e * lam * qm.eps_s, 0.0)
        } else {
            V2::new(0.0, e * lam * qm.eps_c)
        };
    }
    let (s, c) = se_trig(m, b_beta, u);
    let (aa, bb) = if qm.a_is_c { (c, s) } else { (s, c) };
    let tp = se_theta_d1(m, b_beta, u);
    let dxdt = -r * e * aa.powf(e - 1.0) * qm.eps_s * bb;
    let dydt = e * bb.powf(e - 1.0) * qm.eps_c * aa;
    V2::new(dxdt * tp, dydt * tp)
}

fn se_d2_interior(r: f64, k: f64, m: f64, b_beta: f64, quadrant: u8, u: f64) -> V2 {
    let qm = quadrant_map(quadrant);
    let e = 2.0 / k;
    let (s, c) = se_trig(m, b_beta, u);
    let (aa, bb) = if qm.a_is_c { (c, s) } else { (s, c) };
    let tp = se_theta_d1(m, b_beta, u);
    let ts = se_theta_d2(m, b_beta, u);
    let dxdt = -r * e * aa.powf(e - 1.0) * qm.eps_s * bb;
    let dydt = e * bb.powf(e - 1.0) * qm.eps_c * aa;
    let d2xdt2 = r * e * qm.eps_c * ((e - 1.0) * aa.powf(e - 2.0) * bb * bb - aa.powf(e));
    let d2ydt2 = e * qm.eps_s * ((e - 1.0) * bb.powf(e - 2.0) * aa * aa - bb.powf(e));
    V2::new(d2xdt2 * tp * tp + dxdt * ts, d2ydt2 * tp * tp + dydt * ts)
}

fn horner(c: &[f64; 6], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * u + ci)
}

fn horner_d1(c: &[f64; 6], u: f64) -> f64 {
    (1..6).rev().fold(0.0, |acc, i| acc * u + i as f64 * c[i])
}

fn horner_d2(c: &[f64; 6], u: f64) -> f64 {
    (2..6).rev().fold(0.0, |acc, i| acc * u + (i * (i - 1)) as f64 * c[i])
}

/// A smooth arc plus evaluation metadata.
#[derive(Clone, Debug)]
pub struct SmoothArc {
    pub kind: ArcKind,
    /// Whether the evaluators deliver the arc to machine accuracy. False only
    /// for fractional superellipse exponents, where the angular warp integral
    /// retains a mild endpoint singularity and caps out near 1e-8.
    pub analytic_speed: bool,
}

impl SmoothArc {
    pub fn new(kind: ArcKind) -> Self {
        SmoothArc { kind, analytic_speed: true }
    }

    pub fn point(&self, u: f64) -> V2 {
        self.kind.point(u)
    }

    pub fn d1(&self, u: f64) -> V2 {
        self.kind.d1(u)
    }

    pub fn d2(&self, u: f64) -> V2 {
        self.kind.d2(u)
    }

    pub fn speed(&self, u: f64) -> f64 {
        self.d1(u).norm()
    }

    pub fn unit_tangent(&self, u: f64) -> V2 {
        unit(self.d1(u))
    }

    /// Outward normal for counterclockwise orientation.
    pub fn outward_normal(&self, u: f64) -> V2 {
        let t = self.unit_tangent(u);
        V2::new(t.y, -t.x)
    }

    /// Signed curvature; positive where the curve bends toward the interior.
    pub fn curvature(&self, u: f64) -> f64 {
        let d1 = self.d1(u);
        let d2 = self.d2(u);
        (d1.x * d2.y - d1.y * d2.x) / d1.norm().powi(3)
    }

    pub fn is_straight(&self) -> bool {
        self.kind.is_straight()
    }

    pub fn is_periodic(&self) -> bool {
        self.kind.is_periodic()
    }
}

/// Corner at the junction between `arcs[junction]` and the next arc.
#[derive(Clone, Debug)]
pub struct CornerInfo {
    pub junction: usize,
    pub vertex: V2,
    /// Interior angle in `(0, 2 pi) \ {pi}`, measured inside the domain.
    pub interior_angle: f64,
}

/// Closed, positively oriented, piecewise-smooth boundary.
#[derive(Clone, Debug)]
pub struct BoundaryCurve {
    pub arcs: Vec<SmoothArc>,
    pub corners: Vec<CornerInfo>,
}

/// Signed turning angle from `t_in` to `t_out`, in `(-pi, pi]`.
pub fn turning_angle(t_in: V2, t_out: V2) -> f64 {
    let cross = t_in.x * t_out.y - t_in.y * t_out.x;
    let dot = t_in.dot(&t_out);
    cross.atan2(dot)
}

/// Subpanels per arc and rule size for the fixed validation quadratures
/// (area, perimeter, turning, winding). All integrands are piecewise analytic,
/// so this is far past the accuracy of anything compared against it.
const FINE_SUB: usize = 48;
const FINE_GL: usize = 16;

impl BoundaryCurve {
    pub fn n_arcs(&self) -> usize {
        self.arcs.len()
    }

    /// Whether the whole boundary is one periodic arc (no junctions at all).
    pub fn single_periodic_arc(&self) -> bool {
        self.arcs.len() == 1 && self.arcs[0].is_periodic()
    }

    fn coordinate_scale(&self) -> f64 {
        let mut s: f64 = 1.0;
        for arc in &self.arcs {
            for &u in &[0.0, 0.5, 1.0] {
                let p = arc.point(u);
                s = s.max(p.x.abs()).max(p.y.abs());
            }
        }
        s
    }

    /// Structural checks: closure of the chain, tangent continuity away from
    /// corners, and consistency of the stored corner data with the tangent
    /// geometry. Generators run this before returning.
    pub fn validate(&self) -> Result<()> {
        let n = self.arcs.len();
        if n == 0 {
            return Err(Error::InvalidGeometry("empty arc list".into()));
        }
        if self.arcs.iter().any(|a| a.is_periodic()) && n > 1 {
            return Err(Error::InvalidGeometry(
                "periodic arcs can only appear as a single-arc curve".into(),
            ));
        }
        let scale = self.coordinate_scale();
        if self.single_periodic_arc() {
            if !self.corners.is_empty() {
                return Err(Error::InvalidGeometry("corner list on a smooth closed arc".into()));
            }
            return Ok(());
        }
        for j in 0..n {
            let jn = (j + 1) % n;
            let gap = (self.arcs[j].point(1.0) - self.arcs[jn].point(0.0)).norm();
            if gap > 1e-12 * scale {
                return Err(Error::InvalidGeometry(format!(
                    "arcs {j} and {jn} leave a gap of {gap:.3e}"
                )));
            }
            if self.arcs[j].speed(1.0) == 0.0 || self.arcs[jn].speed(0.0) == 0.0 {
                return Err(Error::InvalidGeometry(format!("vanishing speed at junction {j}")));
            }
        }
        let mut seen = vec![false; n];
        for c in &self.corners {
            if c.junction >= n {
                return Err(Error::InvalidGeometry(format!(
                    "corner junction {} out of range", c.junction
                )));
            }
            if std::mem::replace(&mut seen[c.junction], true) {
                return Err(Error::InvalidGeometry(format!(
                    "duplicate corner at junction {}", c.junction
                )));
            }
            let vertex = self.arcs[c.junction].point(1.0);
            if (vertex - c.vertex).norm() > 1e-12 * scale {
                return Err(Error::InvalidGeometry(format!(
                    "corner vertex at junction {} does not sit on the curve", c.junction
                )));
            }
            let measured = self.junction_interior_angle(c.junction);
            if (measured - c.interior_angle).abs() > 1e-8 {
                return Err(Error::InvalidGeometry(format!(
                    "corner angle at junction {}: stored {:.12} vs tangents {:.12}",
                    c.junction, c.interior_angle, measured
                )));
            }
            if !(c.interior_angle > 0.0 && c.interior_angle < 2.0 * PI)
                || (c.interior_angle - PI).abs() < 1e-6
            {
                return Err(Error::InvalidGeometry(format!(
                    "interior angle {:.12} outside (0, 2 pi) \\ {{pi}}", c.interior_angle
                )));
            }
        }
        for (j, &declared) in seen.iter().enumerate() {
            if declared {
                continue;
            }
            let t_in = self.arcs[j].unit_tangent(1.0);
            let t_out = self.arcs[(j + 1) % n].unit_tangent(0.0);
            let cross = (t_in.x * t_out.y - t_in.y * t_out.x).abs();
            if cross > 1e-10 || t_in.dot(&t_out) < 0.0 {
                return Err(Error::InvalidGeometry(format!(
                    "tangent break of {cross:.3e} at junction {j} not declared as a corner"
                )));
            }
        }
        Ok(())
    }

    /// Interior angle at junction `j` as measured from the arc tangents.
    pub fn junction_interior_angle(&self, j: usize) -> f64 {
        let t_in = self.arcs[j].unit_tangent(1.0);
        let t_out = self.arcs[(j + 1) % self.arcs.len()].unit_tangent(0.0);
        PI - turning_angle(t_in, t_out)
    }

    /// Half the largest deviation of a corner angle from pi, in units of pi.
    ///
    /// This bounds the radius of the essential spectrum contributed by the
    /// corner set; it is zero for smooth boundaries.
    pub fn essential_bound(&self) -> f64 {
        self.corners
            .iter()
            .map(|c| 0.5 * (1.0 - c.interior_angle / PI).abs())
            .fold(0.0, f64::max)
    }

    fn fine_quadrature<F: FnMut(&SmoothArc, f64, f64)>(&self, mut visit: F) {
        let (x, w) = gauss_legendre_cached(FINE_GL);
        for arc in &self.arcs {
            let h = 0.5 / FINE_SUB as f64;
            for p in 0..FINE_SUB {
                let mid = (2 * p + 1) as f64 * h;
                for (&xi, &wi) in x.iter().zip(w.iter()) {
                    visit(arc, mid + h * xi, wi * h);
                }
            }
        }
    }

    /// Enclosed area via the divergence identity `A = \oint x dy`.
    pub fn area(&self) -> f64 {
        let mut a = 0.0;
        self.fine_quadrature(|arc, u, w| {
            a += w * arc.point(u).x * arc.d1(u).y;
        });
        a
    }

    pub fn perimeter(&self) -> f64 {
        let mut l = 0.0;
        self.fine_quadrature(|arc, u, w| {
            l += w * arc.speed(u);
        });
        l
    }

    /// Total turning (curvature integral plus corner turns); `2 pi` for any
    /// simple positively oriented curve.
    pub fn total_turning(&self) -> f64 {
        let mut t = 0.0;
        self.fine_quadrature(|arc, u, w| {
            let d1 = arc.d1(u);
            let d2 = arc.d2(u);
            t += w * (d1.x * d2.y - d1.y * d2.x) / d1.norm_squared();
        });
        if !self.single_periodic_arc() {
            let n = self.arcs.len();
            for j in 0..n {
                t += turning_angle(
                    self.arcs[j].unit_tangent(1.0),
                    self.arcs[(j + 1) % n].unit_tangent(0.0),
                );
            }
        }
        t
    }

    /// Winding number of the boundary around `p`; close to 1 inside and 0
    /// outside. Intended for points at least a small distance from the
    /// boundary, where the fixed quadrature fully resolves the integrand.
    pub fn winding_number(&self, p: V2) -> f64 {
        let mut wind = 0.0;
        self.fine_quadrature(|arc, u, w| {
            let r = arc.point(u) - p;
            let d1 = arc.d1(u);
            wind += w * (r.x * d1.y - r.y * d1.x) / r.norm_squared();
        });
        wind / (2.0 * PI)
    }

    pub fn point_inside(&self, p: V2) -> bool {
        (self.winding_number(p) - 1.0).abs() < 0.5
    }

    /// The curve rotated by `angle` and translated by `shift`.
    pub fn rigid_motion(&self, angle: f64, shift: V2) -> BoundaryCurve {
        let (sin_t, cos_t) = angle.sin_cos();
        let map_point =
            |p: V2| V2::new(cos_t * p.x - sin_t * p.y, sin_t * p.x + cos_t * p.y) + shift;
        BoundaryCurve {
            arcs: self
                .arcs
                .iter()
                .map(|arc| SmoothArc {
                    kind: ArcKind::Mapped {
                        base: Box::new(arc.kind.clone()),
                        cos_t,
                        sin_t,
                        shift,
                    },
                    analytic_speed: arc.analytic_speed,
                })
                .collect(),
            corners: self
                .corners
                .iter()
                .map(|c| CornerInfo {
                    junction: c.junction,
                    vertex: map_point(c.vertex),
                    interior_angle: c.interior_angle,
                })
                .collect(),
        }
    }

    /// Build `CornerInfo` for a junction from the measured tangent geometry.
    fn corner_at(&self, junction: usize) -> CornerInfo {
        CornerInfo {
            junction,
            vertex: self.arcs[junction].point(1.0),
            interior_angle: self.junction_interior_angle(junction),
        }
    }
}

fn ensure_positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidGeometry(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

/// Ellipse with semi-axes `a`, `b`.
pub fn make_ellipse(a: f64, b: f64) -> Result<BoundaryCurve> {
    ensure_positive("semi-axis a", a)?;
    ensure_positive("semi-axis b", b)?;
    let curve = BoundaryCurve {
        arcs: vec![SmoothArc::new(ArcKind::ClosedEllipse { a, b })],
        corners: vec![],
    };
    curve.validate()?;
    Ok(curve)
}

/// Superellipse `|x/r|^k + |y|^k = 1`, one warped arc per quadrant.
///
/// Supported exponent range is `2 <= k <= 64`: the angular warp is evaluated
/// by fixed quadratures that are exact (or spectrally accurate) for integer
/// exponents in that range, and accurate to roughly 1e-8 for fractional ones.
/// Far larger exponents flatten the sides to machine precision anyway, at
/// which point the rectangle generator is the honest model.
pub fn make_superellipse(r: f64, k: f64) -> Result<BoundaryCurve> {
    ensure_positive("aspect r", r)?;
    if !(2.0..=64.0).contains(&k) {
        return Err(Error::Unsupported(format!(
            "superellipse exponent k = {k} outside the supported range [2, 64]"
        )));
    }
    let m = 0.5 * k;
    let b_beta = beta_kernel_integral(m, 1.0);
    let lam = ((0.5 * PI) / (m * b_beta)).powf(2.0 / k - 1.0) * (0.5 * PI) / b_beta;
    let analytic = (k - k.round()).abs() < 1e-12;
    let arcs = (0..4u8)
        .map(|quadrant| SmoothArc {
            kind: ArcKind::SuperellipseQuadrant { r, k, m, b_beta, lam, quadrant },
            analytic_speed: analytic,
        })
        .collect();
    let curve = BoundaryCurve { arcs, corners: vec![] };
    curve.validate()?;
    Ok(curve)
}

/// Axis-aligned rectangle of unit area and aspect ratio `r` (width over
/// height), corners at the four right angles.
pub fn make_rectangle(r: f64) -> Result<BoundaryCurve> {
    ensure_positive("aspect r", r)?;
    let wx = 0.5 * r.sqrt();
    let wy = 0.25 / wx;
    let v = [
        V2::new(wx, -wy),
        V2::new(wx, wy),
        V2::new(-wx, wy),
        V2::new(-wx, -wy),
    ];
    let arcs = (0..4)
        .map(|j| SmoothArc::new(ArcKind::Segment { a: v[j], b: v[(j + 1) % 4] }))
        .collect();
    let mut curve = BoundaryCurve { arcs, corners: vec![] };
    curve.corners = (0..4).map(|j| curve.corner_at(j)).collect();
    curve.validate()?;
    Ok(curve)
}

/// Isosceles triangle with base `s1` on the x-axis and equal sides `s2`.
pub fn make_isosceles_triangle(s1: f64, s2: f64) -> Result<BoundaryCurve> {
    ensure_positive("base s1", s1)?;
    ensure_positive("side s2", s2)?;
    if s2 <= 0.5 * s1 {
        return Err(Error::InvalidGeometry(format!(
            "sides s2 = {s2} too short to close a triangle over base s1 = {s1}"
        )));
    }
    let h = (s2 * s2 - 0.25 * s1 * s1).sqrt();
    let a = V2::new(-0.5 * s1, 0.0);
    let b = V2::new(0.5 * s1, 0.0);
    let c = V2::new(0.0, h);
    let arcs = vec![
        SmoothArc::new(ArcKind::Segment { a, b }),
        SmoothArc::new(ArcKind::Segment { a: b, b: c }),
        SmoothArc::new(ArcKind::Segment { a: c, b: a }),
    ];
    let mut curve = BoundaryCurve { arcs, corners: vec![] };
    curve.corners = (0..3).map(|j| curve.corner_at(j)).collect();
    curve.validate()?;
    Ok(curve)
}

/// Union of two overlapping disks of radius `a`, centers on the y-axis,
/// meeting the x-axis at the corner points `(+-a sin theta0, 0)`.
///
/// `theta0` in `(0, pi/2)` is the half-opening: the centers sit at
/// `(0, +-a cos theta0)` and both corners have the reflex interior angle
/// `2 pi - 2 theta0`.
pub fn make_intersecting_disks(a: f64, theta0: f64) -> Result<BoundaryCurve> {
    ensure_positive("radius a", a)?;
    if !(theta0 > 0.0 && theta0 < 0.5 * PI) {
        return Err(Error::InvalidGeometry(format!(
            "half-opening theta0 = {theta0} outside (0, pi/2)"
        )));
    }
    let y0 = a * theta0.cos();
    let arcs = vec![
        SmoothArc::new(ArcKind::CircleArc {
            center: V2::new(0.0, y0),
            radius: a,
            angle0: theta0 - 0.5 * PI,
            angle1: 1.5 * PI - theta0,
        }),
        SmoothArc::new(ArcKind::CircleArc {
            center: V2::new(0.0, -y0),
            radius: a,
            angle0: 0.5 * PI + theta0,
            angle1: 2.5 * PI - theta0,
        }),
    ];
    let mut curve = BoundaryCurve { arcs, corners: vec![] };
    curve.corners = (0..2).map(|j| curve.corner_at(j)).collect();
    curve.validate()?;
    Ok(curve)
}

/// Ellipse of aspect `r` (semi-axes `r` and 1) with a window of parameter
/// half-width `w` cut out around the rightmost point and replaced by two
/// quintic arcs meeting in a single corner of interior angle `theta_c` on the
/// x-axis.
///
/// The quintics match position, tangent direction and curvature of the
/// ellipse at the cut points and arrive at the corner along straight rays
/// with zero curvature, so the only singularity of the composite boundary is
/// the corner itself.
pub fn make_perturbed_ellipse(r: f64, theta_c: f64, w: f64) -> Result<BoundaryCurve> {
    if !(r.is_finite() && r >= 1.0) {
        return Err(Error::InvalidGeometry(format!("aspect r = {r} must be >= 1")));
    }
    if !(0.01..=PI - 0.01).contains(&theta_c) {
        return Err(Error::InvalidGeometry(format!(
            "corner angle theta_c = {theta_c} outside (0, pi) with safety margins"
        )));
    }
    if !(1e-3..=0.2).contains(&w) {
        return Err(Error::InvalidGeometry(format!(
            "window half-width w = {w} outside [1e-3, 0.2]"
        )));
    }
    let (a, b) = (r, 1.0);
    let ellipse = ArcKind::EllipseArc { a, b, t0: 2.0 * PI * w, t1: 2.0 * PI * (1.0 - w) };
    let p_plus = ellipse.point(0.0);
    let p_minus = ellipse.point(1.0);
    // Corner vertex on the axis: the chords from both cut points meet it at
    // half the interior angle, which realizes exactly theta_c at the tip.
    let vx = p_plus.x + p_plus.y / (0.5 * theta_c).tan();
    let vert = V2::new(vx, 0.0);
    let kappa = |theta: f64| {
        let (s, c) = theta.sin_cos();
        a * b / (a * a * s * s + b * b * c * c).powf(1.5)
    };
    // Lower wing: from the lower cut point to the vertex.
    let t_minus = unit(ellipse.d1(1.0));
    let chord_lo = vert - p_minus;
    let len_lo = chord_lo.norm();
    let wing_lo = quintic_from_hermite(
        p_minus,
        t_minus * len_lo,
        rot90(t_minus) * (kappa(2.0 * PI * (1.0 - w)) * len_lo * len_lo),
        vert,
        chord_lo / len_lo * len_lo,
        V2::zeros(),
    );
    // Upper wing: from the vertex back up to the upper cut point.
    let t_plus = unit(ellipse.d1(0.0));
    let chord_up = p_plus - vert;
    let len_up = chord_up.norm();
    let wing_up = quintic_from_hermite(
        vert,
        chord_up / len_up * len_up,
        V2::zeros(),
        p_plus,
        t_plus * len_up,
        rot90(t_plus) * (kappa(2.0 * PI * w) * len_up * len_up),
    );
    let arcs = vec![
        SmoothArc::new(ellipse),
        SmoothArc::new(wing_lo),
        SmoothArc::new(wing_up),
    ];
    let mut curve = BoundaryCurve { arcs, corners: vec![] };
    curve.corners = vec![curve.corner_at(1)];
    curve.validate()?;
    Ok(curve)
}

/// Quintic arc with prescribed endpoint position, velocity and acceleration.
fn quintic_from_hermite(p0: V2, v0: V2, a0: V2, p1: V2, v1: V2, a1: V2) -> ArcKind {
    let coeffs = |p0: f64, v0: f64, a0: f64, p1: f64, v1: f64, a1: f64| -> [f64; 6] {
        let c0 = p0;
        let c1 = v0;
        let c2 = 0.5 * a0;
        let ra = p1 - c0 - c1 - c2;
        let rb = v1 - c1 - 2.0 * c2;
        let rc = a1 - 2.0 * c2;
        [
            c0,
            c1,
            c2,
            10.0 * ra - 4.0 * rb + 0.5 * rc,
            -15.0 * ra + 7.0 * rb - rc,
            6.0 * ra - 3.0 * rb + 0.5 * rc,
        ]
    };
    ArcKind::Quintic {
        cx: coeffs(p0.x, v0.x, a0.x, p1.x, v1.x, a1.x),
        cy: coeffs(p0.y, v0.y, a0.y, p1.y, v1.y, a1.y),
    }
}
