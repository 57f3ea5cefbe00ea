//! Pointwise evaluation and Nystrom assembly of the Neumann-Poincare kernel
//! `(x - y) . n(x) / (2 pi |x - y|^2)`.
//!
//! The kernel is smooth along a smooth boundary but its naive evaluation
//! collapses numerically long before the analytic difficulty kicks in: for
//! nearby same-arc nodes the numerator loses all relative accuracy to the
//! `O(|x-y|^2)` cancellation, and for nodes buried 50+ dyadic levels deep in
//! a corner ladder the positions themselves carry only absolute accuracy.
//! Assembly therefore dispatches per node pair:
//!
//! * same straight arc: identically zero, emitted exactly;
//! * same arc, same or adjacent panel, or same corner wing: a double-integral
//!   form in which the parameter difference cancels analytically, leaving
//!   integrals of the tangent and curvature vectors over the (exactly
//!   representable) parameter gap;
//! * different arcs meeting at a shared corner, both nodes inside its wings:
//!   the difference of the precomputed vertex offsets, which is exact in the
//!   corner-relative frame;
//! * everything else: the plain formula, which is safe once the separation
//!   is bounded away from zero on the scale of the coordinates.

use crate::geometry::{BoundaryCurve, V2};
use crate::mesh::PanelMesh;
use crate::quad::gauss_legendre_cached;
use ndarray::Array2;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Inner quadrature order for the cancellation-free same-arc form.
const NEAR_GL: usize = 12;

/// Assemble the Nystrom matrix `A[i, j] = k(x_i, y_j) w_j` of the adjoint
/// NP operator on `mesh`; row sums approximate `1/2`.
pub fn assemble_np(curve: &BoundaryCurve, mesh: &PanelMesh) -> Array2<f64> {
    let n = mesh.n_nodes();
    let mut data = vec![0.0; n * n];
    data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = kernel_times_weight(curve, mesh, i, j);
        }
    });
    Array2::from_shape_vec((n, n), data).expect("row-major assembly")
}

/// `k(x_i, y_j) w_j`, with the diagonal taken in the curvature limit.
pub fn kernel_times_weight(curve: &BoundaryCurve, mesh: &PanelMesh, i: usize, j: usize) -> f64 {
    if i == j {
        return mesh.curvature[i] / (4.0 * PI) * mesh.weight[i];
    }
    let arc_i = mesh.arc_of_node[i];
    let arc_j = mesh.arc_of_node[j];
    if arc_i == arc_j {
        let arc = &curve.arcs[arc_i];
        if arc.is_straight() {
            return 0.0;
        }
        if same_arc_needs_gap_form(mesh, i, j) {
            return gap_form(curve, mesh, i, j) * mesh.weight[j];
        }
    } else if let (Some((ci, oi)), Some((cj, oj))) = (mesh.corner_offset[i], mesh.corner_offset[j])
    {
        if ci == cj {
            let r = oi - oj;
            return r.dot(&mesh.normal[i]) / (2.0 * PI * r.norm_squared()) * mesh.weight[j];
        }
    }
    let r = mesh.pos[i] - mesh.pos[j];
    r.dot(&mesh.normal[i]) / (2.0 * PI * r.norm_squared()) * mesh.weight[j]
}

/// Same or adjacent panel (including the periodic wrap), or two nodes of one
/// corner wing at arbitrary depth separation.
fn same_arc_needs_gap_form(mesh: &PanelMesh, i: usize, j: usize) -> bool {
    let pi = mesh.panel_of_node[i] as usize;
    let pj = mesh.panel_of_node[j] as usize;
    if pi.abs_diff(pj) <= 1 {
        return true;
    }
    if let (Some((ci, _)), Some((cj, _))) = (mesh.corner_offset[i], mesh.corner_offset[j]) {
        if ci == cj {
            return true;
        }
    }
    // First and last panel of a single closed arc meet across the wrap.
    let arc_panels = mesh.n_panels();
    pi.abs_diff(pj) == arc_panels - 1
}

/// Cancellation-free kernel value for nearby same-arc nodes.
///
/// With `x = gamma(s)`, `y = gamma(t)`, `d = s - t` and `n` the exact normal
/// at `x`, the tangent term of `(x - y) . n` vanishes identically and
///
/// `k = -int_0^1 sigma G(sigma) . n dsigma / (2 pi |M|^2)`,
///
/// where `G(sigma)` averages the second derivative over `[s, s - sigma d]`
/// and `M` averages the first derivative over `[t, s]`; the power of `d`
/// cancels between numerator and denominator, so only smooth quantities are
/// integrated and the value stays relatively accurate for arbitrarily small
/// (exactly represented) parameter gaps.
fn gap_form(curve: &BoundaryCurve, mesh: &PanelMesh, i: usize, j: usize) -> f64 {
    let arc = &curve.arcs[mesh.arc_of_node[i]];
    let (delta, at) = same_arc_gap(curve, mesh, i, j);
    // Unnormalized perpendicular of d1: exactly orthogonal to d1 in floating
    // point, so the tangent term drops out with no residue; the normalization
    // is applied once at the end.
    let d1_i = mesh.d1[i];
    let perp = V2::new(d1_i.y, -d1_i.x);
    let (glx, glw) = gauss_legendre_cached(NEAR_GL);
    let mut m1 = V2::zeros();
    let mut num = 0.0;
    for (&xs, &ws) in glx.iter().zip(glw.iter()) {
        let sigma = 0.5 * (xs + 1.0);
        let wsig = 0.5 * ws;
        m1 += arc.d1(at.offset(sigma * delta)) * wsig;
        let mut g = V2::zeros();
        for (&xm, &wm) in glx.iter().zip(glw.iter()) {
            let mu = 0.5 * (xm + 1.0);
            g += arc.d2(at.offset(mu * sigma * delta)) * (0.5 * wm);
        }
        num += sigma * g.dot(&perp) * wsig;
    }
    -num / (2.0 * PI * m1.norm_squared() * d1_i.norm())
}

/// Parameter gap `delta = u_i - u_j` for two nodes of one arc, exact in
/// whichever end-relative representation the pair shares, together with an
/// evaluator for intermediate parameters `u_i - xi`.
pub(crate) fn same_arc_gap(
    curve: &BoundaryCurve,
    mesh: &PanelMesh,
    i: usize,
    j: usize,
) -> (f64, Param) {
    let arc = &curve.arcs[mesh.arc_of_node[i]];
    let pi_panel = &mesh.panels[mesh.panel_of_node[i] as usize];
    let pj_panel = &mesh.panels[mesh.panel_of_node[j] as usize];
    if pi_panel.from_end && pj_panel.from_end {
        let di = mesh.edge_dist[i];
        (mesh.edge_dist[j] - di, Param::FromEnd(di))
    } else if !pi_panel.from_end && !pj_panel.from_end {
        let mut d = mesh.u[i] - mesh.u[j];
        if arc.is_periodic() {
            // Shift the source across the wrap when that is the short way.
            if d > 0.5 {
                d -= 1.0;
            } else if d < -0.5 {
                d += 1.0;
            }
        }
        (d, Param::Direct(mesh.u[i]))
    } else {
        // Mixed representations only meet at shallow depth, where plain
        // parameter arithmetic is accurate.
        (mesh.u[i] - mesh.u[j], Param::Direct(mesh.u[i]))
    }
}

/// Mean of the tangent vector over the parameter interval between the pair,
/// `M = (x_i - x_j) / (u_i - u_j)` evaluated without forming the difference.
/// Degenerates smoothly to `gamma'(u_i)` at zero gap.
pub(crate) fn mean_tangent(curve: &BoundaryCurve, mesh: &PanelMesh, i: usize, j: usize) -> V2 {
    let arc = &curve.arcs[mesh.arc_of_node[i]];
    let (delta, at) = same_arc_gap(curve, mesh, i, j);
    let (glx, glw) = gauss_legendre_cached(NEAR_GL);
    let mut m1 = V2::zeros();
    for (&xs, &ws) in glx.iter().zip(glw.iter()) {
        let sigma = 0.5 * (xs + 1.0);
        m1 += arc.d1(at.offset(sigma * delta)) * (0.5 * ws);
    }
    m1
}

#[derive(Clone, Copy)]
pub(crate) enum Param {
    /// `u = base - xi`.
    Direct(f64),
    /// `u = 1 - (dist + xi)`: distances from the arc end stay exact.
    FromEnd(f64),
}

impl Param {
    pub(crate) fn offset(self, xi: f64) -> f64 {
        match self {
            Param::Direct(base) => base - xi,
            Param::FromEnd(dist) => 1.0 - (dist + xi),
        }
    }
}
