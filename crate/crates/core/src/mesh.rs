//! Composite Gauss-Legendre panel meshes over piecewise-smooth boundaries,
//! with dyadic grading toward corners.
//!
//! Each arc gets `panels_per_arc` equal parameter panels; the panel touching
//! a corner (the "wing root") is replaced by a geometric ladder of panels
//! halving in width toward the vertex, plus one terminal sliver completing
//! the coverage. Nodes never sit on a vertex.
//!
//! Two representational details matter for deeply graded meshes. Panels on
//! the `u = 1` side of an arc are stored as exact distances from the end,
//! because at depth `~2^-52` the interval endpoints `1 - eps` cease to be
//! distinct floating-point numbers while the distances themselves stay exact.
//! And every node in a corner zone carries the vector from the vertex to the
//! node, computed by integrating the arc tangent over the (tiny) parameter
//! gap rather than subtracting two nearby points, so the vector keeps full
//! relative accuracy at any depth.

use crate::error::{Error, Result};
use crate::geometry::{BoundaryCurve, V2};
use crate::quad::gauss_legendre_cached;

/// Refinement strategy at corners.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Grading {
    /// Plain base panels everywhere; adequate only for smooth boundaries.
    None,
    /// `levels` dyadic halvings toward every corner. With `include_terminal`
    /// the innermost sliver next to the vertex is kept as one final panel,
    /// otherwise the mesh stops one level short of the vertex.
    Dyadic { levels: usize, include_terminal: bool },
}

#[derive(Clone, Copy, Debug)]
pub struct MeshConfig {
    pub panels_per_arc: usize,
    pub nodes_per_panel: usize,
    pub grading: Grading,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig { panels_per_arc: 8, nodes_per_panel: 16, grading: Grading::None }
    }
}

/// Corner-zone membership of a refined panel.
#[derive(Clone, Copy, Debug)]
pub struct ZoneTag {
    /// Index into `curve.corners`.
    pub corner: usize,
    /// True on the incoming side of the vertex (arc end), false outgoing.
    pub incoming: bool,
    /// Dyadic depth: ladder panels carry 1..=levels; the terminal sliver
    /// repeats `levels` with `terminal` set.
    pub level: usize,
    pub terminal: bool,
}

/// Parameter interval on one arc, before node placement.
#[derive(Clone, Copy, Debug)]
pub struct PanelSpec {
    pub arc: usize,
    /// With `from_end` unset the panel covers `[lo, hi]`; set, it covers
    /// `[1 - hi, 1 - lo]` with `lo < hi` exact distances from the arc end.
    pub lo: f64,
    pub hi: f64,
    pub from_end: bool,
    pub zone: Option<ZoneTag>,
}

#[derive(Clone, Copy, Debug)]
pub struct Panel {
    pub arc: usize,
    pub lo: f64,
    pub hi: f64,
    pub from_end: bool,
    pub zone: Option<ZoneTag>,
    pub first_node: usize,
}

/// Panel mesh with per-node geometry cached for operator assembly.
#[derive(Clone, Debug)]
pub struct PanelMesh {
    pub panels: Vec<Panel>,
    pub nodes_per_panel: usize,
    pub pos: Vec<V2>,
    pub d1: Vec<V2>,
    pub d2: Vec<V2>,
    /// Unit outward normal.
    pub normal: Vec<V2>,
    pub speed: Vec<f64>,
    pub curvature: Vec<f64>,
    /// Quadrature weight including parameter half-width and speed, so that
    /// plain weighted sums integrate over arc length.
    pub weight: Vec<f64>,
    /// Parameter of the node on its arc (rounded; see `edge_dist`).
    pub u: Vec<f64>,
    pub arc_of_node: Vec<usize>,
    pub panel_of_node: Vec<u32>,
    /// Exact distance to the adjacent arc end for corner-zone nodes, NaN
    /// elsewhere; paired with `Panel::from_end` of the owning panel.
    pub edge_dist: Vec<f64>,
    /// `(corner index, node - vertex)` for corner-zone nodes.
    pub corner_offset: Vec<Option<(usize, V2)>>,
}

impl PanelMesh {
    pub fn n_nodes(&self) -> usize {
        self.pos.len()
    }

    pub fn n_panels(&self) -> usize {
        self.panels.len()
    }

    pub fn node_range(&self, panel: usize) -> std::ops::Range<usize> {
        let first = self.panels[panel].first_node;
        first..first + self.nodes_per_panel
    }

    pub fn perimeter(&self) -> f64 {
        self.weight.iter().sum()
    }
}

/// Build the global mesh for `curve` under `cfg`.
pub fn build_mesh(curve: &BoundaryCurve, cfg: &MeshConfig) -> Result<PanelMesh> {
    let specs = panel_specs(curve, cfg)?;
    mesh_from_specs(curve, &specs, cfg.nodes_per_panel)
}

/// The panel layout `build_mesh` would use, without placing nodes.
pub fn panel_specs(curve: &BoundaryCurve, cfg: &MeshConfig) -> Result<Vec<PanelSpec>> {
    let nb = cfg.panels_per_arc;
    if nb == 0 {
        return Err(Error::InvalidMesh("panels_per_arc must be at least 1".into()));
    }
    let (levels, include_terminal) = match cfg.grading {
        Grading::None => (0, false),
        Grading::Dyadic { levels, include_terminal } => {
            if levels == 0 {
                return Err(Error::InvalidMesh("dyadic grading needs at least one level".into()));
            }
            if levels > 120 {
                return Err(Error::InvalidMesh(format!(
                    "dyadic depth {levels} exceeds the supported 120 levels"
                )));
            }
            (levels, include_terminal)
        }
    };
    let n = curve.arcs.len();
    // Corner adjacency per arc: a corner at junction j refines the end of
    // arc j and the start of arc j + 1.
    let mut start_corner = vec![None; n];
    let mut end_corner = vec![None; n];
    if levels > 0 {
        for (ci, c) in curve.corners.iter().enumerate() {
            end_corner[c.junction] = Some(ci);
            start_corner[(c.junction + 1) % n] = Some(ci);
        }
    }
    let mut specs = Vec::new();
    for arc in 0..n {
        let wings = usize::from(start_corner[arc].is_some()) + usize::from(end_corner[arc].is_some());
        if nb < wings {
            return Err(Error::InvalidMesh(format!(
                "arc {arc} touches {wings} corners but has only {nb} base panels"
            )));
        }
        let h2 = 1.0 / nb as f64; // wing root width (one base panel)
        if let Some(ci) = start_corner[arc] {
            let zone = |level, terminal| Some(ZoneTag { corner: ci, incoming: false, level, terminal });
            let deepest = h2 * 0.5f64.powi(levels as i32);
            if include_terminal {
                specs.push(PanelSpec { arc, lo: 0.0, hi: deepest, from_end: false, zone: zone(levels, true) });
            }
            for l in (1..=levels).rev() {
                let lo = h2 * 0.5f64.powi(l as i32);
                specs.push(PanelSpec { arc, lo, hi: 2.0 * lo, from_end: false, zone: zone(l, false) });
            }
        }
        let first = usize::from(start_corner[arc].is_some());
        let last = nb - usize::from(end_corner[arc].is_some());
        for i in first..last {
            specs.push(PanelSpec {
                arc,
                lo: i as f64 * h2,
                hi: (i + 1) as f64 * h2,
                from_end: false,
                zone: None,
            });
        }
        if let Some(ci) = end_corner[arc] {
            let zone = |level, terminal| Some(ZoneTag { corner: ci, incoming: true, level, terminal });
            for l in 1..=levels {
                let lo = h2 * 0.5f64.powi(l as i32);
                specs.push(PanelSpec { arc, lo, hi: 2.0 * lo, from_end: true, zone: zone(l, false) });
            }
            if include_terminal {
                let deepest = h2 * 0.5f64.powi(levels as i32);
                specs.push(PanelSpec { arc, lo: 0.0, hi: deepest, from_end: true, zone: zone(levels, true) });
            }
        }
    }
    Ok(specs)
}

/// Place `q`-point Gauss-Legendre nodes on every panel of `specs`.
pub fn mesh_from_specs(curve: &BoundaryCurve, specs: &[PanelSpec], q: usize) -> Result<PanelMesh> {
    if !(2..=64).contains(&q) {
        return Err(Error::InvalidMesh(format!("nodes_per_panel = {q} outside 2..=64")));
    }
    let (glx, glw) = gauss_legendre_cached(q);
    let n_nodes = specs.len() * q;
    let mut mesh = PanelMesh {
        panels: Vec::with_capacity(specs.len()),
        nodes_per_panel: q,
        pos: Vec::with_capacity(n_nodes),
        d1: Vec::with_capacity(n_nodes),
        d2: Vec::with_capacity(n_nodes),
        normal: Vec::with_capacity(n_nodes),
        speed: Vec::with_capacity(n_nodes),
        curvature: Vec::with_capacity(n_nodes),
        weight: Vec::with_capacity(n_nodes),
        u: Vec::with_capacity(n_nodes),
        arc_of_node: Vec::with_capacity(n_nodes),
        panel_of_node: Vec::with_capacity(n_nodes),
        edge_dist: Vec::with_capacity(n_nodes),
        corner_offset: Vec::with_capacity(n_nodes),
    };
    for (pi, spec) in specs.iter().enumerate() {
        // Positive form so that NaN endpoints fail the check too.
        let proper = spec.hi > spec.lo && spec.lo >= 0.0 && spec.hi <= 1.0;
        if !proper {
            return Err(Error::InvalidMesh(format!(
                "panel {pi} has degenerate interval [{}, {}]",
                spec.lo, spec.hi
            )));
        }
        let arc = &curve.arcs[spec.arc];
        let mid = 0.5 * (spec.lo + spec.hi);
        let half = 0.5 * (spec.hi - spec.lo);
        mesh.panels.push(Panel {
            arc: spec.arc,
            lo: spec.lo,
            hi: spec.hi,
            from_end: spec.from_end,
            zone: spec.zone,
            first_node: mesh.pos.len(),
        });
        for i in 0..q {
            // Ascending global parameter in both representations.
            let (u, dist) = if spec.from_end {
                let d = mid - half * glx[i];
                (1.0 - d, d)
            } else {
                let u = mid + half * glx[i];
                (u, u)
            };
            let d1 = arc.d1(u);
            let speed = d1.norm();
            let t = d1 / speed;
            mesh.pos.push(arc.point(u));
            mesh.d1.push(d1);
            mesh.d2.push(arc.d2(u));
            mesh.normal.push(V2::new(t.y, -t.x));
            mesh.speed.push(speed);
            mesh.curvature.push(arc.curvature(u));
            mesh.weight.push(glw[i] * half * speed);
            mesh.u.push(u);
            mesh.arc_of_node.push(spec.arc);
            mesh.panel_of_node.push(pi as u32);
            if let Some(tag) = spec.zone {
                mesh.edge_dist.push(dist);
                mesh.corner_offset.push(Some((tag.corner, vertex_offset(arc, spec.from_end, dist))));
            } else {
                mesh.edge_dist.push(f64::NAN);
                mesh.corner_offset.push(None);
            }
        }
    }
    Ok(mesh)
}

/// Split every panel of `mesh` into `factor` equal parameter sub-panels and
/// rebuild the node data on `curve`.
///
/// Corner-zone tags are copied to all children, so the refined mesh keeps the
/// same zone bookkeeping as its parent. `from_end` panels are split in the
/// distance-from-end representation, which keeps deeply graded intervals
/// exact. Requires `factor >= 2`.
pub fn refine_mesh(curve: &BoundaryCurve, mesh: &PanelMesh, factor: usize) -> Result<PanelMesh> {
    if factor < 2 {
        return Err(Error::InvalidMesh(format!("refinement factor {factor} must be at least 2")));
    }
    let mut specs = Vec::with_capacity(mesh.n_panels() * factor);
    for p in &mesh.panels {
        let h = (p.hi - p.lo) / factor as f64;
        let cut = |k: usize| -> f64 {
            if k == 0 {
                p.lo
            } else if k == factor {
                p.hi
            } else {
                p.lo + k as f64 * h
            }
        };
        // Children in ascending global parameter: ascending `lo` for direct
        // panels, descending distance for from-end panels.
        let order: Box<dyn Iterator<Item = usize>> =
            if p.from_end { Box::new((0..factor).rev()) } else { Box::new(0..factor) };
        for k in order {
            specs.push(PanelSpec {
                arc: p.arc,
                lo: cut(k),
                hi: cut(k + 1),
                from_end: p.from_end,
                zone: p.zone,
            });
        }
    }
    mesh_from_specs(curve, &specs, mesh.nodes_per_panel)
}

/// Vector from the corner vertex to the point at distance `dist` from the arc
/// end, as the integral of the tangent over the gap.
pub(crate) fn vertex_offset(arc: &crate::geometry::SmoothArc, from_end: bool, dist: f64) -> V2 {
    let (glx, glw) = gauss_legendre_cached(12);
    let half = 0.5 * dist;
    let mut acc = V2::zeros();
    for (&x, &w) in glx.iter().zip(glw.iter()) {
        let tau = half * (x + 1.0);
        let u = if from_end { 1.0 - tau } else { tau };
        acc += arc.d1(u) * w;
    }
    acc *= half;
    if from_end {
        -acc
    } else {
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{
        make_ellipse, make_intersecting_disks, make_isosceles_triangle, make_rectangle,
    };
    use std::f64::consts::PI;

    #[test]
    fn circle_mesh_integrates_exactly() {
        let curve = make_ellipse(1.0, 1.0).unwrap();
        let cfg = MeshConfig { panels_per_arc: 12, nodes_per_panel: 16, grading: Grading::None };
        let mesh = build_mesh(&curve, &cfg).unwrap();
        assert_eq!(mesh.n_nodes(), 12 * 16);
        assert!((mesh.perimeter() - 2.0 * PI).abs() < 1e-12);
        for i in 0..mesh.n_nodes() {
            assert!((mesh.curvature[i] - 1.0).abs() < 1e-12);
            assert!(mesh.normal[i].dot(&mesh.pos[i]) > 0.99);
            assert!(mesh.corner_offset[i].is_none());
            assert!(mesh.edge_dist[i].is_nan());
        }
    }

    #[test]
    fn triangle_ladder_counts_and_coverage() {
        let curve = make_isosceles_triangle(1.0, 2.0).unwrap();
        let levels = 8;
        let cfg = MeshConfig {
            panels_per_arc: 6,
            nodes_per_panel: 16,
            grading: Grading::Dyadic { levels, include_terminal: true },
        };
        let mesh = build_mesh(&curve, &cfg).unwrap();
        // Every arc: 4 middle panels plus two wings of levels + 1 panels.
        assert_eq!(mesh.n_panels(), 3 * (4 + 2 * (levels + 1)));
        assert!((mesh.perimeter() - 5.0).abs() < 1e-12);
        // Contiguous coverage of each arc's parameter interval.
        for arc in 0..3 {
            let mut spans: Vec<(f64, f64)> = mesh
                .panels
                .iter()
                .filter(|p| p.arc == arc)
                .map(|p| if p.from_end { (1.0 - p.hi, 1.0 - p.lo) } else { (p.lo, p.hi) })
                .collect();
            spans.sort_by(|a, b| a.0.total_cmp(&b.0));
            assert_eq!(spans.first().unwrap().0, 0.0);
            assert_eq!(spans.last().unwrap().1, 1.0);
            for w in spans.windows(2) {
                assert!((w[0].1 - w[1].0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn deep_grading_stays_representable() {
        let curve = make_rectangle(1.0).unwrap();
        let levels = 60;
        let cfg = MeshConfig {
            panels_per_arc: 4,
            nodes_per_panel: 16,
            grading: Grading::Dyadic { levels, include_terminal: true },
        };
        let mesh = build_mesh(&curve, &cfg).unwrap();
        let deepest_width = 0.25 * 0.5f64.powi(levels as i32);
        // Terminal panels at both representations keep exact tiny widths.
        for p in &mesh.panels {
            let tag = match p.zone {
                Some(t) if t.terminal => t,
                _ => continue,
            };
            assert_eq!(p.hi - p.lo, deepest_width);
            assert_eq!(tag.level, levels);
            for i in mesh.node_range(mesh.panel_of_node[p.first_node] as usize) {
                let d = mesh.edge_dist[i];
                assert!(d > 0.0 && d < deepest_width);
                // Offset magnitude equals arc-length distance on a straight side.
                let (_, off) = mesh.corner_offset[i].unwrap();
                assert!((off.norm() - d * mesh.speed[i]).abs() < 1e-30);
            }
        }
        // Weights on a side sum to the side length even with 60 levels.
        assert!((mesh.perimeter() - 4.0).abs() < 1e-13);
    }

    #[test]
    fn offsets_match_plain_subtraction_at_shallow_depth() {
        let curve = make_intersecting_disks(1.0, 0.25 * PI).unwrap();
        let cfg = MeshConfig {
            panels_per_arc: 8,
            nodes_per_panel: 16,
            grading: Grading::Dyadic { levels: 6, include_terminal: true },
        };
        let mesh = build_mesh(&curve, &cfg).unwrap();
        let mut zone_nodes = 0;
        for i in 0..mesh.n_nodes() {
            let Some((ci, off)) = mesh.corner_offset[i] else { continue };
            zone_nodes += 1;
            // Plain subtraction carries ~1e-16 absolute roundoff from the
            // O(1) endpoint coordinates, hence the absolute floor.
            let plain = mesh.pos[i] - curve.corners[ci].vertex;
            assert!((off - plain).norm() < 1e-14 + 1e-13 * off.norm());
        }
        // Two corners, two wings each, 7 panels per wing.
        assert_eq!(zone_nodes, 2 * 2 * 7 * 16);
    }

    #[test]
    fn coarse_split_is_one_level() {
        let curve = make_rectangle(3.0).unwrap();
        let cfg = MeshConfig {
            panels_per_arc: 6,
            nodes_per_panel: 16,
            grading: Grading::Dyadic { levels: 1, include_terminal: true },
        };
        let mesh = build_mesh(&curve, &cfg).unwrap();
        // Each wing root splits into exactly two panels of width h.
        assert_eq!(mesh.n_panels(), 4 * (4 + 2 * 2));
        let h = 1.0 / 12.0;
        let wing: Vec<_> = mesh.panels.iter().filter(|p| p.zone.is_some()).collect();
        assert_eq!(wing.len(), 4 * 4);
        for p in &wing {
            assert!((p.hi - p.lo - h).abs() < 1e-16);
        }
    }

    #[test]
    fn dropping_the_terminal_panel_leaves_a_gap_at_the_vertex() {
        let curve = make_rectangle(1.0).unwrap();
        let cfg = MeshConfig {
            panels_per_arc: 4,
            nodes_per_panel: 16,
            grading: Grading::Dyadic { levels: 5, include_terminal: false },
        };
        let mesh = build_mesh(&curve, &cfg).unwrap();
        assert_eq!(mesh.n_panels(), 4 * (2 + 2 * 5));
        let closest = mesh
            .panels
            .iter()
            .filter(|p| p.zone.is_some())
            .map(|p| p.lo)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(closest, 0.25 * 0.5f64.powi(5));
    }

    #[test]
    fn construction_is_deterministic() {
        let curve = make_isosceles_triangle(1.0, 2.0).unwrap();
        let cfg = MeshConfig {
            panels_per_arc: 5,
            nodes_per_panel: 12,
            grading: Grading::Dyadic { levels: 10, include_terminal: true },
        };
        let a = build_mesh(&curve, &cfg).unwrap();
        let b = build_mesh(&curve, &cfg).unwrap();
        assert_eq!(a.pos, b.pos);
        assert_eq!(a.weight, b.weight);
        assert_eq!(a.u, b.u);
    }

    #[test]
    fn rejects_overcommitted_arcs() {
        let curve = make_rectangle(1.0).unwrap();
        let cfg = MeshConfig {
            panels_per_arc: 1,
            nodes_per_panel: 16,
            grading: Grading::Dyadic { levels: 3, include_terminal: true },
        };
        assert!(build_mesh(&curve, &cfg).is_err());
    }

    #[test]
    fn refinement_doubles_a_circle_mesh() {
        let curve = make_ellipse(1.37, 1.37).unwrap();
        let cfg = MeshConfig { panels_per_arc: 8, nodes_per_panel: 12, grading: Grading::None };
        let mesh = build_mesh(&curve, &cfg).unwrap();
        let fine = refine_mesh(&curve, &mesh, 2).unwrap();
        assert_eq!(fine.n_panels(), 2 * mesh.n_panels());
        assert_eq!(fine.n_nodes(), 2 * mesh.n_nodes());
        assert!((fine.perimeter() - mesh.perimeter()).abs() < 1e-13 * mesh.perimeter());
        assert!((fine.perimeter() - 2.0 * PI * 1.37).abs() < 1e-13);
        let finer = refine_mesh(&curve, &fine, 3).unwrap();
        assert_eq!(finer.n_nodes(), 6 * mesh.n_nodes());
        assert!(refine_mesh(&curve, &mesh, 1).is_err());
        assert!(refine_mesh(&curve, &mesh, 0).is_err());
    }

    #[test]
    fn refinement_preserves_grading_structure() {
        let curve = make_rectangle(3.0).unwrap();
        let levels = 40;
        let cfg = MeshConfig {
            panels_per_arc: 4,
            nodes_per_panel: 10,
            grading: Grading::Dyadic { levels, include_terminal: true },
        };
        let mesh = build_mesh(&curve, &cfg).unwrap();
        let fine = refine_mesh(&curve, &mesh, 2).unwrap();
        assert_eq!(fine.n_panels(), 2 * mesh.n_panels());
        for (pi, p) in mesh.panels.iter().enumerate() {
            let (a, b) = (&fine.panels[2 * pi], &fine.panels[2 * pi + 1]);
            for c in [a, b] {
                assert_eq!(c.arc, p.arc);
                assert_eq!(c.from_end, p.from_end);
                match (c.zone, p.zone) {
                    (None, None) => {}
                    (Some(cz), Some(pz)) => {
                        assert_eq!(cz.corner, pz.corner);
                        assert_eq!(cz.incoming, pz.incoming);
                        assert_eq!(cz.level, pz.level);
                        assert_eq!(cz.terminal, pz.terminal);
                    }
                    _ => panic!("zone tag lost in refinement"),
                }
            }
            // Children tile the parent exactly, splitting at the midpoint.
            let (first, second) = if p.from_end { (b, a) } else { (a, b) };
            assert_eq!(first.lo, p.lo);
            assert_eq!(second.hi, p.hi);
            assert_eq!(first.hi, second.lo);
            assert_eq!(first.hi - p.lo, 0.5 * (p.hi - p.lo));
        }
        // Exact dyadic widths survive: the terminal panels are still the
        // original width over two, with fully representable intervals.
        let w0 = 0.25 * 0.5f64.powi(levels as i32);
        for p in fine.panels.iter().filter(|p| p.zone.is_some_and(|z| z.terminal)) {
            assert_eq!(p.hi - p.lo, 0.5 * w0);
        }
        assert!((fine.perimeter() - mesh.perimeter()).abs() < 1e-13 * mesh.perimeter());
    }

    #[test]
    fn refinement_keeps_quadrature_exactness() {
        // Arc-length integrals of smooth fields agree before and after
        // refinement to spectral accuracy.
        let curve = make_ellipse(2.0, 1.0).unwrap();
        let cfg = MeshConfig { panels_per_arc: 10, nodes_per_panel: 16, grading: Grading::None };
        let mesh = build_mesh(&curve, &cfg).unwrap();
        let fine = refine_mesh(&curve, &mesh, 2).unwrap();
        let integ = |m: &PanelMesh| -> f64 {
            (0..m.n_nodes()).map(|i| (m.pos[i].x * m.pos[i].y).powi(2) * m.weight[i]).sum()
        };
        assert!((integ(&mesh) - integ(&fine)).abs() < 1e-12 * integ(&mesh).abs());
    }
}
