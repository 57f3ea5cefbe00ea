//! Single-layer potential on a panel mesh and the energy inner product it
//! induces.
//!
//! `S[phi](x) = (1/2 pi) int ln|x - y| phi(y) dsigma(y)` has a logarithmic
//! singularity on the diagonal, so plain Nystrom quadrature is only usable
//! for well-separated panels. Assembly dispatches per (target, source panel):
//!
//! * source panel on the target's own arc, target parameter within a few
//!   panel half-widths: product integration. The log splits as
//!   `ln|x - gamma(tau)| = ln|tau' - tau| + rho(tau)` in panel coordinates;
//!   the singular part is integrated exactly against the Legendre expansion
//!   of the interpolated density (log moments in closed form), the smooth
//!   remainder `rho = ln(half |M|)` by the native rule, with the mean tangent
//!   `M` evaluated cancellation-free so the split survives 50+ dyadic levels
//!   of corner grading;
//! * source panel on another arc but physically close (corner regions,
//!   junctions of adjacent arcs): adaptive dyadic subdivision of the panel,
//!   integrating the log against the panel's Lagrange basis, with distances
//!   formed from corner-relative offsets whenever target and panel hang off
//!   the same vertex;
//! * everything else: the plain rule on the native nodes.
//!
//! The assembled matrix maps nodal density values to nodal potential values.
//! A note on symmetry: the continuous kernel is symmetric, and the weighted
//! form `phi^T W G psi` reproduces `<phi, S psi> = <S phi, psi>` to near
//! machine precision on resolved densities, because both sides are then
//! spectrally accurate quadratures of the same number. The matrix `W G` is
//! NOT entrywise symmetric to that accuracy, and cannot be: the `(i, j)` and
//! `(j, i)` entries come from product integration against two different
//! basis functions, and near the diagonal those functionals genuinely differ
//! at the 1e-4 level. Averaging them away would replace an exact functional
//! by a corrupted one and costs six digits in the applied operator (the
//! transposed functional integrates a target-direction function with a log
//! branch point at the panel edge, which the plain rule cannot see). The
//! matrix is therefore left as assembled; symmetry is a property of the form,
//! and is tested as such.
//!
//! On mean-zero densities the single layer is negative definite, so
//! `(phi, psi)_* = -<phi, S[psi]>` is a genuine inner product; `star_inner`
//! and `star_norm` implement it as quadrature sums.

use crate::error::{Error, Result};
use crate::geometry::BoundaryCurve;
use crate::kernels::mean_tangent;
use crate::mesh::{vertex_offset, PanelMesh};
use crate::quad::{gauss_legendre_cached, legendre_values, log_moments};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Parameter-space reach of the product-integration path, in panel
/// half-widths from the panel center.
const TAU_NEAR: f64 = 3.0;
/// A cross-arc panel is integrated adaptively when the target is closer than
/// this many panel lengths.
const NEAR_FACTOR: f64 = 2.0;
/// A subpanel is accepted once the target is farther than this multiple of
/// its own length.
const SPLIT_SAFE: f64 = 1.8;
/// Quadrature order on accepted subpanels.
const SUB_GL: usize = 12;
const MAX_DEPTH: u32 = 48;

/// Assemble the single-layer matrix `G` with `(G phi)_i ~ S[phi](x_i)`.
pub fn assemble_slp(curve: &BoundaryCurve, mesh: &PanelMesh) -> Array2<f64> {
    let n = mesh.n_nodes();
    let q = mesh.nodes_per_panel;
    let (glx, glw) = gauss_legendre_cached(q);
    // Legendre coefficients of the Lagrange basis: c[m*q + j] multiplies the
    // m-th log moment in the product rule for density value j.
    let mut cmat = vec![0.0; q * q];
    for j in 0..q {
        let pj = legendre_values(q - 1, glx[j]);
        for m in 0..q {
            cmat[m * q + j] = (m as f64 + 0.5) * glw[j] * pj[m];
        }
    }
    // Barycentric weights of the panel nodes, for off-node basis evaluation.
    let mut bary = vec![1.0; q];
    for j in 0..q {
        for k in 0..q {
            if k != j {
                bary[j] /= glx[j] - glx[k];
            }
        }
    }
    let plen: Vec<f64> = (0..mesh.n_panels())
        .map(|p| mesh.node_range(p).map(|k| mesh.weight[k]).sum())
        .collect();
    let ctx = Ctx { curve, mesh, cmat: &cmat, bary: &bary, plen: &plen, glx, glw };
    let mut data = vec![0.0; n * n];
    data.par_chunks_mut(n).enumerate().for_each(|(i, row)| slp_row(&ctx, i, row));
    Array2::from_shape_vec((n, n), data).expect("row-major assembly")
}

struct Ctx<'a> {
    curve: &'a BoundaryCurve,
    mesh: &'a PanelMesh,
    cmat: &'a [f64],
    bary: &'a [f64],
    plen: &'a [f64],
    glx: &'a [f64],
    glw: &'a [f64],
}

fn slp_row(ctx: &Ctx, i: usize, row: &mut [f64]) {
    let mesh = ctx.mesh;
    let q = mesh.nodes_per_panel;
    let c = 1.0 / (2.0 * PI);
    let mut buf = vec![0.0; q];
    for p in 0..mesh.n_panels() {
        let panel = &mesh.panels[p];
        let first = panel.first_node;
        if panel.arc == mesh.arc_of_node[i] {
            let taup = panel_coordinate(ctx, i, p);
            if taup.abs() <= TAU_NEAR {
                product_block(ctx, i, p, taup, &mut buf);
                for j in 0..q {
                    row[first + j] += c * buf[j];
                }
                continue;
            }
        } else {
            let mut dmin = f64::INFINITY;
            for (j, slot) in buf.iter_mut().enumerate() {
                *slot = robust_dist(mesh, i, first + j);
                dmin = dmin.min(*slot);
            }
            if dmin <= NEAR_FACTOR * ctx.plen[p] {
                let half = 0.5 * (panel.hi - panel.lo);
                lagrange_block(ctx, i, p, &mut buf);
                for j in 0..q {
                    row[first + j] += c * half * mesh.speed[first + j] * buf[j];
                }
                continue;
            }
            for j in 0..q {
                row[first + j] += c * buf[j].ln() * mesh.weight[first + j];
            }
            continue;
        }
        // Same arc, parametrically far: the plain rule on robust distances.
        for j in 0..q {
            let gj = first + j;
            row[gj] += c * robust_dist(mesh, i, gj).ln() * mesh.weight[gj];
        }
    }
}

/// Target parameter in the local coordinate of panel `p` (same arc only),
/// exact in the shared end-relative representation and wrapped across the
/// period of a closed single-arc curve.
fn panel_coordinate(ctx: &Ctx, i: usize, p: usize) -> f64 {
    let mesh = ctx.mesh;
    let panel = &mesh.panels[p];
    let half = 0.5 * (panel.hi - panel.lo);
    let mid = 0.5 * (panel.lo + panel.hi);
    if panel.from_end {
        let di = if mesh.panels[mesh.panel_of_node[i] as usize].from_end {
            mesh.edge_dist[i]
        } else {
            1.0 - mesh.u[i]
        };
        (mid - di) / half
    } else {
        let mut d = mesh.u[i] - mid;
        if ctx.curve.arcs[panel.arc].is_periodic() {
            d -= d.round();
        }
        d / half
    }
}

/// Distance between two nodes, formed from corner-relative offsets when both
/// hang off the same vertex (positions lose all relative accuracy there).
fn robust_dist(mesh: &PanelMesh, i: usize, j: usize) -> f64 {
    if let (Some((ci, oi)), Some((cj, oj))) = (mesh.corner_offset[i], mesh.corner_offset[j]) {
        if ci == cj {
            return (oi - oj).norm().max(f64::MIN_POSITIVE);
        }
    }
    (mesh.pos[i] - mesh.pos[j]).norm().max(f64::MIN_POSITIVE)
}

/// Product integration of the log kernel over the target's own arc.
///
/// Writes `half * speed_j * (w_j rho_j + sum_m c_mj q_m(tau'))` into `out`,
/// where `q_m` are the exact log moments and `rho_j = ln(half |M_ij|)` is the
/// smooth remainder, expressed through the mean tangent so that nothing is
/// lost when the parameter gap is tiny.
fn product_block(ctx: &Ctx, i: usize, p: usize, taup: f64, out: &mut [f64]) {
    let mesh = ctx.mesh;
    let q = mesh.nodes_per_panel;
    let panel = &mesh.panels[p];
    let half = 0.5 * (panel.hi - panel.lo);
    let moments = log_moments(q - 1, taup);
    for (j, slot) in out.iter_mut().enumerate().take(q) {
        let gj = panel.first_node + j;
        let m1 = mean_tangent(ctx.curve, mesh, i, gj).norm();
        let rho = (half * m1).ln();
        let mut acc = ctx.glw[j] * rho;
        for (m, &qm) in moments.iter().enumerate() {
            acc += ctx.cmat[m * q + j] * qm;
        }
        *slot = half * mesh.speed[gj] * acc;
    }
}

/// Adaptive integration of the log kernel against the Lagrange basis of a
/// nearby panel on another arc. Fills `out[j] = int L_j(tau) ln|x - gamma|`.
fn lagrange_block(ctx: &Ctx, i: usize, p: usize, out: &mut [f64]) {
    let mesh = ctx.mesh;
    let q = mesh.nodes_per_panel;
    out[..q].fill(0.0);
    let panel = &mesh.panels[p];
    let arc = &ctx.curve.arcs[panel.arc];
    let half = 0.5 * (panel.hi - panel.lo);
    let mid = 0.5 * (panel.lo + panel.hi);
    // Corner-relative evaluation when target and panel share a vertex.
    let target_off = match (mesh.corner_offset[i], panel.zone) {
        (Some((c, o)), Some(z)) if z.corner == c => Some(o),
        _ => None,
    };
    let x = mesh.pos[i];
    let dist_at = |tau: f64| -> f64 {
        // `end_dist` is measured from whichever arc end the panel grades
        // toward; for direct panels that is the arc start.
        let end_dist = if panel.from_end { mid - half * tau } else { mid + half * tau };
        let d = match target_off {
            Some(o) => (vertex_offset(arc, panel.from_end, end_dist) - o).norm(),
            None => {
                let u = if panel.from_end { 1.0 - end_dist } else { end_dist };
                (arc.point(u) - x).norm()
            }
        };
        d.max(f64::MIN_POSITIVE)
    };
    let (sx, sw) = gauss_legendre_cached(SUB_GL);
    let mut lag = vec![0.0; q];
    let mut stack: Vec<(f64, f64, u32)> = vec![(-1.0, 1.0, 0)];
    while let Some((a, b, depth)) = stack.pop() {
        let tc = 0.5 * (a + b);
        let uc = if panel.from_end { 1.0 - (mid - half * tc) } else { mid + half * tc };
        let sublen = (b - a) * half * arc.d1(uc).norm();
        let ok = dist_at(tc) >= SPLIT_SAFE * sublen || depth >= MAX_DEPTH || (b - a) < 1e-13;
        if !ok {
            stack.push((a, tc, depth + 1));
            stack.push((tc, b, depth + 1));
            continue;
        }
        for (&xt, &wt) in sx.iter().zip(sw.iter()) {
            let tau = tc + 0.5 * (b - a) * xt;
            let val = dist_at(tau).ln();
            lagrange_at(ctx.bary, ctx.glx, tau, &mut lag);
            let w = 0.5 * (b - a) * wt * val;
            for j in 0..q {
                out[j] += w * lag[j];
            }
        }
    }
}

/// Lagrange basis values at `tau` by the barycentric formula.
fn lagrange_at(bary: &[f64], glx: &[f64], tau: f64, out: &mut [f64]) {
    for (j, &xj) in glx.iter().enumerate() {
        if (tau - xj).abs() < 1e-14 {
            out.fill(0.0);
            out[j] = 1.0;
            return;
        }
    }
    let mut sum = 0.0;
    for j in 0..glx.len() {
        out[j] = bary[j] / (tau - glx[j]);
        sum += out[j];
    }
    for v in out.iter_mut() {
        *v /= sum;
    }
}

/// `G phi` for a real matrix and a complex density.
pub fn apply_slp(g: &Array2<f64>, phi: &[Complex64]) -> Vec<Complex64> {
    let re: Array1<f64> = phi.iter().map(|z| z.re).collect();
    let im: Array1<f64> = phi.iter().map(|z| z.im).collect();
    let gre = g.dot(&re);
    let gim = g.dot(&im);
    gre.iter().zip(gim.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect()
}

/// Remove the weighted mean: `phi - (sum w phi / sum w)`.
pub fn project_mean_zero(mesh: &PanelMesh, phi: &[Complex64]) -> Vec<Complex64> {
    let total: f64 = mesh.weight.iter().sum();
    let mass: Complex64 = mesh.weight.iter().zip(phi.iter()).map(|(&w, &z)| w * z).sum();
    let mean = mass / total;
    phi.iter().map(|&z| z - mean).collect()
}

fn ensure_mean_zero(mesh: &PanelMesh, phi: &[Complex64], which: &str) -> Option<Vec<Complex64>> {
    let mass: Complex64 = mesh.weight.iter().zip(phi.iter()).map(|(&w, &z)| w * z).sum();
    let scale: f64 = mesh.weight.iter().zip(phi.iter()).map(|(&w, &z)| w * z.norm()).sum();
    if mass.norm() > 1e-12 * scale && scale > 0.0 {
        log::warn!(
            "star_inner: {which} argument has weighted mean {:.3e} (relative); projecting",
            mass.norm() / scale
        );
        Some(project_mean_zero(mesh, phi))
    } else {
        None
    }
}

/// Energy inner product `(phi, psi)_* = -<phi, S[psi]>`, evaluated as the
/// quadrature sum `-sum_j w_j phi_j conj((G psi)_j)`.
///
/// Linear in `phi`, conjugate-linear in `psi`. Arguments are projected onto
/// mean-zero (with a logged warning) if they are not already, since the
/// single layer is only definite there.
pub fn star_inner(
    mesh: &PanelMesh,
    g: &Array2<f64>,
    phi: &[Complex64],
    psi: &[Complex64],
) -> Result<Complex64> {
    let n = mesh.n_nodes();
    if phi.len() != n || psi.len() != n || g.nrows() != n || g.ncols() != n {
        return Err(Error::InvalidSource(format!(
            "star_inner: size mismatch (mesh {n}, matrix {}x{}, phi {}, psi {})",
            g.nrows(),
            g.ncols(),
            phi.len(),
            psi.len()
        )));
    }
    let phi_p = ensure_mean_zero(mesh, phi, "first");
    let psi_p = ensure_mean_zero(mesh, psi, "second");
    let phi = phi_p.as_deref().unwrap_or(phi);
    let psi = psi_p.as_deref().unwrap_or(psi);
    let spsi = apply_slp(g, psi);
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..n {
        acc += mesh.weight[j] * phi[j] * spsi[j].conj();
    }
    Ok(-acc)
}

/// Energy norm `sqrt((phi, phi)_*)`.
///
/// The imaginary part of the quadratic form is a pure quadrature artifact:
/// it vanishes to roundoff on densities the mesh resolves, but the one-sided
/// product integration is not exactly self-adjoint, so near-resonant corner
/// densities can leak an imaginary part at the level of their own quadrature
/// error (~1e-6 relative at delta = 1e-6 on a square). The real part is the
/// norm estimate either way and the tolerance below only catches actual
/// conjugation mistakes.
pub fn star_norm(mesh: &PanelMesh, g: &Array2<f64>, phi: &[Complex64]) -> Result<f64> {
    let v = star_inner(mesh, g, phi, phi)?;
    debug_assert!(
        v.im.abs() <= 1e-3 * v.re.abs().max(1e-300),
        "star_inner(phi, phi) should be near-real, got {v}"
    );
    Ok(v.re.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_ellipse, make_isosceles_triangle, make_rectangle};
    use crate::mesh::{build_mesh, Grading, MeshConfig};

    fn smooth_cfg(panels: usize) -> MeshConfig {
        MeshConfig { panels_per_arc: panels, nodes_per_panel: 16, grading: Grading::None }
    }

    #[test]
    fn circle_slp_of_constant() {
        // On a circle of radius a the single layer of the unit density is the
        // constant a ln a (perimeter 2 pi a, mean log distance ln a).
        for a in [1.37, 0.52] {
            let curve = make_ellipse(a, a).unwrap();
            let mesh = build_mesh(&curve, &smooth_cfg(12)).unwrap();
            let g = assemble_slp(&curve, &mesh);
            let ones = Array1::from_elem(mesh.n_nodes(), 1.0);
            let pot = g.dot(&ones);
            let expect = a * a.ln();
            for &v in pot.iter() {
                assert!((v - expect).abs() < 1e-12, "radius {a}: {v} vs {expect}");
            }
        }
        // Radius 1: the potential vanishes identically.
        let curve = make_ellipse(1.0, 1.0).unwrap();
        let mesh = build_mesh(&curve, &smooth_cfg(12)).unwrap();
        let g = assemble_slp(&curve, &mesh);
        let ones = Array1::from_elem(mesh.n_nodes(), 1.0);
        for &v in g.dot(&ones).iter() {
            assert!(v.abs() < 1e-13);
        }
    }

    #[test]
    fn circle_slp_of_first_harmonic() {
        // S[cos theta] = -cos(theta)/2 on the unit circle.
        let curve = make_ellipse(1.0, 1.0).unwrap();
        let mesh = build_mesh(&curve, &smooth_cfg(12)).unwrap();
        let g = assemble_slp(&curve, &mesh);
        let phi: Array1<f64> = mesh.pos.iter().map(|p| p.x).collect();
        let pot = g.dot(&phi);
        for (i, &v) in pot.iter().enumerate() {
            let expect = -0.5 * mesh.pos[i].x;
            assert!((v - expect).abs() < 1e-11, "node {i}: {v} vs {expect}");
        }
    }

    #[test]
    fn star_norm_of_first_harmonic() {
        // (cos, cos)_* = (1/2) int cos^2 dsigma = pi/2 on the unit circle.
        let curve = make_ellipse(1.0, 1.0).unwrap();
        let mesh = build_mesh(&curve, &smooth_cfg(10)).unwrap();
        let g = assemble_slp(&curve, &mesh);
        let phi: Vec<Complex64> =
            mesh.pos.iter().map(|p| Complex64::new(p.x, 0.0)).collect();
        let v = star_inner(&mesh, &g, &phi, &phi).unwrap();
        assert!((v.re - PI / 2.0).abs() < 1e-11, "{v}");
        assert!(v.im.abs() < 1e-13);
        let nrm = star_norm(&mesh, &g, &phi).unwrap();
        assert!((nrm - (PI / 2.0).sqrt()).abs() < 1e-11);
    }

    #[test]
    fn star_inner_projects_constants_and_scales() {
        let curve = make_ellipse(1.0, 1.0).unwrap();
        let mesh = build_mesh(&curve, &smooth_cfg(10)).unwrap();
        let g = assemble_slp(&curve, &mesh);
        let phi: Vec<Complex64> =
            mesh.pos.iter().map(|p| Complex64::new(p.x, 0.0)).collect();
        // Adding a constant changes nothing once projected.
        let shifted: Vec<Complex64> =
            phi.iter().map(|&z| z + Complex64::new(0.7, -0.3)).collect();
        let a = star_inner(&mesh, &g, &phi, &phi).unwrap();
        let b = star_inner(&mesh, &g, &shifted, &shifted).unwrap();
        assert!((a - b).norm() < 1e-11 * a.norm());
        // Homogeneity: |c| comes out of the norm.
        let c = Complex64::new(2.0, -3.0);
        let scaled: Vec<Complex64> = phi.iter().map(|&z| c * z).collect();
        let n1 = star_norm(&mesh, &g, &scaled).unwrap();
        let n0 = star_norm(&mesh, &g, &phi).unwrap();
        assert!((n1 - c.norm() * n0).abs() < 1e-12 * n1);
        // Mismatched sizes are a contract error.
        assert!(star_inner(&mesh, &g, &phi[..5], &phi).is_err());
    }

    #[test]
    fn star_inner_positive_on_mean_zero() {
        let curve = make_ellipse(2.0, 1.0).unwrap();
        let mesh = build_mesh(&curve, &smooth_cfg(10)).unwrap();
        let g = assemble_slp(&curve, &mesh);
        // A handful of deterministic mean-zero densities.
        for k in 1..6 {
            let phi: Vec<Complex64> = mesh
                .pos
                .iter()
                .map(|p| {
                    let t = p.y.atan2(p.x) * k as f64;
                    Complex64::new(t.cos(), 0.3 * t.sin())
                })
                .collect();
            let phi = project_mean_zero(&mesh, &phi);
            let v = star_inner(&mesh, &g, &phi, &phi).unwrap();
            assert!(v.re > 0.0, "harmonic {k}: {v}");
            assert!(v.im.abs() < 1e-12 * v.re);
        }
    }

    /// `<phi, S psi> = <S phi, psi>` through the weighted form, on densities
    /// the mesh resolves. This is the sense in which the discretization
    /// inherits the symmetry of the log kernel; see the module docs for why
    /// entrywise symmetry is not (and should not be) enforced.
    fn form_symmetry_defect(
        mesh: &PanelMesh,
        g: &Array2<f64>,
        probes: &[Vec<Complex64>],
    ) -> f64 {
        let mut worst = 0.0f64;
        for a in probes {
            for b in probes {
                let lhs = star_inner(mesh, g, a, b).unwrap();
                let rhs = star_inner(mesh, g, b, a).unwrap().conj();
                // Cauchy-Schwarz scale: pairs that are orthogonal by parity
                // have tiny products, but the asymmetry still has to be small
                // against the probe norms.
                let scale = star_norm(mesh, g, a).unwrap() * star_norm(mesh, g, b).unwrap();
                worst = worst.max((lhs - rhs).norm() / scale.max(1e-300));
            }
        }
        worst
    }

    /// Mean-zero traces of low-order polynomials: analytic along every arc,
    /// so every mesh in these tests resolves them.
    fn polynomial_probes(mesh: &PanelMesh) -> Vec<Vec<Complex64>> {
        let fns: [&dyn Fn(f64, f64) -> Complex64; 4] = [
            &|x, _| Complex64::new(x, 0.0),
            &|_, y| Complex64::new(0.0, y),
            &|x, y| Complex64::new(x * x - y * y, x * y),
            &|x, y| Complex64::new(y, 0.3 * x),
        ];
        fns.iter()
            .map(|f| {
                let phi: Vec<Complex64> = mesh.pos.iter().map(|p| f(p.x, p.y)).collect();
                project_mean_zero(mesh, &phi)
            })
            .collect()
    }

    #[test]
    fn form_symmetry_on_resolved_densities() {
        let curve = make_ellipse(3.0, 1.0).unwrap();
        let mesh = build_mesh(&curve, &smooth_cfg(10)).unwrap();
        let g = assemble_slp(&curve, &mesh);
        let d = form_symmetry_defect(&mesh, &g, &polynomial_probes(&mesh));
        assert!(d < 1e-13, "ellipse form defect {d:.3e}");

        let curve = make_isosceles_triangle(1.0, 2.0).unwrap();
        let cfg = MeshConfig {
            panels_per_arc: 6,
            nodes_per_panel: 16,
            grading: Grading::Dyadic { levels: 12, include_terminal: true },
        };
        let mesh = build_mesh(&curve, &cfg).unwrap();
        let g = assemble_slp(&curve, &mesh);
        let d = form_symmetry_defect(&mesh, &g, &polynomial_probes(&mesh));
        assert!(d < 1e-12, "triangle form defect {d:.3e}");
    }

    /// Reference value by tolerance-driven adaptive quadrature.
    fn adaptive_ref(f: &dyn Fn(f64) -> f64, a: f64, b: f64, depth: u32) -> f64 {
        let (glx, glw) = gauss_legendre_cached(20);
        let gl = |lo: f64, hi: f64| -> f64 {
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (lo + hi);
            glx.iter().zip(glw.iter()).map(|(&x, &w)| half * w * f(mid + half * x)).sum()
        };
        let coarse = gl(a, b);
        let m = 0.5 * (a + b);
        let fine = gl(a, m) + gl(m, b);
        if (coarse - fine).abs() <= 1e-14 * (1.0 + fine.abs()) || depth >= 40 {
            fine
        } else {
            adaptive_ref(f, a, m, depth + 1) + adaptive_ref(f, m, b, depth + 1)
        }
    }

    #[test]
    fn product_rule_matches_adaptive_reference() {
        // Near-panel targets exercise the product path in both directions
        // around a panel boundary; compare every matrix entry of the block
        // with a brute-force integral of the log kernel against the panel's
        // Lagrange basis.
        let curve = make_ellipse(2.0, 1.0).unwrap();
        let mesh = build_mesh(&curve, &smooth_cfg(8)).unwrap();
        let g = assemble_slp(&curve, &mesh);
        let q = mesh.nodes_per_panel;
        let (glx, _) = gauss_legendre_cached(q);
        let mut bary = vec![1.0; q];
        for j in 0..q {
            for k in 0..q {
                if k != j {
                    bary[j] /= glx[j] - glx[k];
                }
            }
        }
        // (target node, source panel): panel 0 hit from its neighbor on each
        // side, including across the periodic wrap.
        for (i, p) in [(3usize, 1usize), (mesh.node_range(1).start + 2, 0), (5, 7)] {
            let panel = &mesh.panels[p];
            let half = 0.5 * (panel.hi - panel.lo);
            let mid = 0.5 * (panel.lo + panel.hi);
            let arc = &curve.arcs[panel.arc];
            let x = mesh.pos[i];
            for j in 0..q {
                let gj = panel.first_node + j;
                let integrand = |tau: f64| -> f64 {
                    let y = arc.point(mid + half * tau);
                    let mut l = vec![0.0; q];
                    lagrange_at(&bary, glx, tau, &mut l);
                    l[j] * (y - x).norm().ln()
                };
                let reference =
                    0.5 / PI * half * mesh.speed[gj] * adaptive_ref(&integrand, -1.0, 1.0, 0);
                let got = g[[i, gj]];
                assert!(
                    (got - reference).abs() < 1e-12,
                    "target {i} panel {p} entry {j}: {got} vs {reference}"
                );
            }
        }
    }

    #[test]
    fn deep_rectangle_assembly_is_finite_and_definite() {
        let curve = make_rectangle(3.0).unwrap();
        let cfg = MeshConfig {
            panels_per_arc: 4,
            nodes_per_panel: 16,
            grading: Grading::Dyadic { levels: 30, include_terminal: true },
        };
        let mesh = build_mesh(&curve, &cfg).unwrap();
        let g = assemble_slp(&curve, &mesh);
        assert!(g.iter().all(|v| v.is_finite()));
        let d = form_symmetry_defect(&mesh, &g, &polynomial_probes(&mesh));
        assert!(d < 1e-11, "form defect {d:.3e}");
        let phi: Vec<Complex64> =
            mesh.pos.iter().map(|p| Complex64::new(p.x, 0.2 * p.y)).collect();
        let phi = project_mean_zero(&mesh, &phi);
        let v = star_inner(&mesh, &g, &phi, &phi).unwrap();
        assert!(v.re > 0.0 && v.re.is_finite(), "{v}");
    }
}
