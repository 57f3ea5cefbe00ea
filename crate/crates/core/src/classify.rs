//! Spectrum classification on top of an indicator sweep.
//!
//! The grid pass ([`classify`]) works purely on an [`IndicatorProfile`]:
//! extrapolated exponents are binned into resolvent set, continuous bands,
//! and peak candidates, and every ambiguous cell is listed rather than
//! silently dropped. The refinement pass ([`build_report`]) re-solves near
//! each candidate with a shrinking-bracket search and confirms or rejects
//! the point-spectrum claim from a fresh ladder at the refined location.
//!
//! Invariants kept here:
//! - a cell belongs to at most one band, and bands are disjoint maximal
//!   runs in grid order;
//! - every grid cell is accounted for: in a band, a peak candidate, below
//!   the resolvent threshold, or listed in `unclassified`;
//! - refined claims carry their own ladder evidence, never grid samples
//!   from a neighboring cell.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::resolvent::{
    alpha_of, prepare_sources, prepared_norm, IndicatorProfile, SourceSpec, SpectralSolver,
};

/// Decision thresholds for binning indicator exponents.
///
/// All fields are plain data so a run configuration can override any of
/// them; [`Thresholds::default`] matches the values used throughout the
/// test suite.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Thresholds {
    /// Refined exponent at or above which a peak counts as point spectrum.
    pub pure_point: f64,
    /// Exponent window `(lo, hi)` for continuous-band cells.
    pub band: (f64, f64),
    /// Exponent at or below which a cell is resolvent set.
    pub resolvent: f64,
    /// Raw-exponent ceiling for the cells flanking an isolated eigenvalue.
    pub isolation: f64,
    /// Minimum number of in-window cells backing a band claim.
    pub min_band_cells: usize,
    /// Half-width, in grid cells, of the exclusion window around `t = 0`,
    /// where the indicator grows for reasons unrelated to spectrum.
    pub zero_window: usize,
    /// Ladder rungs used for the extrapolated exponent (clamped to the
    /// ladder length).
    pub rungs: usize,
    /// A peak cell must exceed this multiple of the median norm over an
    /// 11-cell window around it.
    pub prominence: f64,
    /// Cap on refined peaks per report, largest norms first.
    pub max_peaks: usize,
    /// Bracket width at which peak refinement stops.
    pub refine_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            pure_point: 0.9,
            band: (0.35, 0.85),
            resolvent: 0.1,
            isolation: 0.25,
            min_band_cells: 3,
            zero_window: 2,
            rungs: 3,
            prominence: 2.0,
            max_peaks: 16,
            refine_tol: 1e-9,
        }
    }
}

/// A maximal run of band-exponent cells.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Band {
    pub lo_idx: usize,
    pub hi_idx: usize,
    /// Grid value at `lo_idx`.
    pub lo: f64,
    /// Grid value at `hi_idx`.
    pub hi: f64,
}

impl Band {
    fn contains(&self, idx: usize) -> bool {
        (self.lo_idx..=self.hi_idx).contains(&idx)
    }
}

/// A local norm maximum worth refining.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PeakCandidate {
    pub grid_idx: usize,
    pub t: f64,
    /// Peak norm at the detection rung.
    pub norm_star: f64,
    /// True when the cell lies inside a detected band.
    pub in_band: bool,
}

/// Output of the solver-free grid pass.
#[derive(Clone, Debug, Serialize)]
pub struct GridClassification {
    pub thresholds: Thresholds,
    /// Extrapolated exponent per grid cell.
    pub alpha: Vec<f64>,
    pub bands: Vec<Band>,
    /// Norm peaks outside every band: isolated-eigenvalue candidates.
    pub eigenvalue_candidates: Vec<PeakCandidate>,
    /// Norm peaks inside a band: embedded-resonance candidates.
    pub embedded_candidates: Vec<PeakCandidate>,
    /// Cells whose exponent fits no class. Never silently dropped.
    pub unclassified: Vec<usize>,
}

/// One rung of the confirmation ladder at a refined location.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LadderPoint {
    pub delta: f64,
    pub norm_star: f64,
    /// `-log(norm)/log(delta)` at this rung.
    pub alpha: f64,
}

/// A refined point-spectrum claim (or a refinement that failed to confirm).
#[derive(Clone, Debug, Serialize)]
pub struct Resonance {
    pub t: f64,
    /// Extrapolated exponent from the confirmation ladder at `t`.
    pub alpha: f64,
    /// Peak norm at the smallest ladder rung.
    pub norm_star: f64,
    /// True when the location lies inside a detected band.
    pub embedded: bool,
    /// Raw exponents of the two grid cells flanking the location; `None`
    /// when a flank falls off the grid.
    pub flank_alpha: Option<(f64, f64)>,
    /// True for non-embedded claims whose flanking cells stay below the
    /// isolation threshold.
    pub isolated: bool,
    /// Fresh ladder solves at the refined location.
    pub evidence: Vec<LadderPoint>,
    /// Shift factorizations spent on the bracket search.
    pub evaluations: usize,
}

/// Full classification: grid pass plus refined and confirmed claims.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub thresholds: Thresholds,
    pub t_grid: Vec<f64>,
    /// Extrapolated exponent per grid cell.
    pub alpha: Vec<f64>,
    /// Raw exponent at the smallest rung per grid cell.
    pub alpha_sharp: Vec<f64>,
    pub bands: Vec<Band>,
    /// Confirmed isolated eigenvalues, outside every band.
    pub eigenvalues: Vec<Resonance>,
    /// Confirmed embedded resonances, inside a band.
    pub embedded: Vec<Resonance>,
    /// Refined peaks whose ladder stayed below the pure-point threshold.
    pub rejected: Vec<Resonance>,
    pub unclassified: Vec<usize>,
    /// Max over `t` of `|alpha_sharp(t) - alpha_sharp(-t)|` when the grid
    /// is symmetric; `NaN` otherwise.
    pub symmetry_defect: f64,
}

fn grid_step(t_grid: &[f64]) -> f64 {
    t_grid
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

/// Local norm maxima over `norm`, excluding cells where `skip` holds and
/// requiring `prominence` contrast against the median norm in an 11-cell
/// window (a median floor stays put when a second peak sits a few cells
/// away, where a min- or mean-based floor would not).
fn local_maxima(norm: &[f64], prominence: f64, skip: impl Fn(usize) -> bool) -> Vec<usize> {
    let n = norm.len();
    let mut out = Vec::new();
    for i in 1..n.saturating_sub(1) {
        if skip(i) || !norm[i].is_finite() {
            continue;
        }
        if !(norm[i] > norm[i - 1] && norm[i] >= norm[i + 1]) {
            continue;
        }
        let mut window: Vec<f64> = (i.saturating_sub(5)..(i + 6).min(n))
            .map(|j| norm[j])
            .filter(|v| v.is_finite())
            .collect();
        window.sort_by(f64::total_cmp);
        let floor = window[window.len() / 2];
        if norm[i] >= prominence * floor {
            out.push(i);
        }
    }
    out
}

/// Bin a sweep into bands, peak candidates, and leftovers, with no further
/// solves.
pub fn classify(profile: &IndicatorProfile, th: &Thresholds) -> GridClassification {
    let nt = profile.t_grid.len();
    let rungs = th.rungs.clamp(2, profile.deltas.len());
    let alpha = profile.alpha_extrapolated(rungs);
    let step = grid_step(&profile.t_grid);
    let in_zero_window = |i: usize| profile.t_grid[i].abs() < th.zero_window as f64 * step;

    // Bands: maximal runs of alpha >= band.0. Cells above band.1 inside a
    // run (embedded resonances, the zero cell) do not break it, but the
    // claim must be backed by at least min_band_cells cells that actually
    // sit in the band window.
    let mut bands = Vec::new();
    let mut run_start: Option<usize> = None;
    for i in 0..=nt {
        let in_run = i < nt && alpha[i] >= th.band.0;
        match (run_start, in_run) {
            (None, true) => run_start = Some(i),
            (Some(s), false) => {
                let backing = (s..i)
                    .filter(|&j| alpha[j] >= th.band.0 && alpha[j] <= th.band.1)
                    .count();
                if backing >= th.min_band_cells {
                    bands.push(Band {
                        lo_idx: s,
                        hi_idx: i - 1,
                        lo: profile.t_grid[s],
                        hi: profile.t_grid[i - 1],
                    });
                }
                run_start = None;
            }
            _ => {}
        }
    }

    let in_band = |i: usize| bands.iter().any(|b| b.contains(i));

    // Isolated candidates: local maxima of the smallest-rung norm outside
    // every band. Embedded candidates: local maxima of the widest-rung
    // norm inside a band, where the finite shift smears a resonance over
    // enough cells to register even off-grid.
    let norm_sharp: Vec<f64> = (0..nt).map(|ti| profile.peak_norm(ti)).collect();
    let norm_wide: Vec<f64> = (0..nt)
        .map(|ti| {
            (0..profile.n_sources)
                .filter_map(|s| profile.sample(ti, 0, s))
                .map(|smp| smp.norm_star)
                .fold(f64::NAN, f64::max)
        })
        .collect();

    let eigenvalue_candidates: Vec<PeakCandidate> =
        local_maxima(&norm_sharp, th.prominence, |i| in_zero_window(i) || in_band(i))
            .into_iter()
            .map(|i| PeakCandidate {
                grid_idx: i,
                t: profile.t_grid[i],
                norm_star: norm_sharp[i],
                in_band: false,
            })
            .collect();
    let embedded_candidates: Vec<PeakCandidate> =
        local_maxima(&norm_wide, th.prominence, |i| in_zero_window(i) || !in_band(i))
            .into_iter()
            .map(|i| PeakCandidate {
                grid_idx: i,
                t: profile.t_grid[i],
                norm_star: norm_wide[i],
                in_band: true,
            })
            .collect();

    let is_candidate = |i: usize| {
        eigenvalue_candidates.iter().chain(&embedded_candidates).any(|c| c.grid_idx == i)
    };

    // Everything must land in a bin; what does not is reported, not
    // dropped: NaN cells, out-of-band cells between the resolvent and
    // band thresholds or above the band window, and in-band cells above
    // the band window that no candidate or zero window explains.
    let mut unclassified = Vec::new();
    for i in 0..nt {
        if is_candidate(i) || in_zero_window(i) {
            continue;
        }
        let a = alpha[i];
        let odd = if a.is_nan() {
            true
        } else if in_band(i) {
            a > th.band.1
        } else {
            a > th.resolvent && a < th.band.0 || a > th.band.1
        };
        if odd {
            unclassified.push(i);
        }
    }

    GridClassification {
        thresholds: *th,
        alpha,
        bands,
        eigenvalue_candidates,
        embedded_candidates,
        unclassified,
    }
}

/// A bracket-search result at a single peak.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RefinedPeak {
    pub t: f64,
    /// Peak norm at `delta_min`.
    pub norm_star: f64,
    /// Shift factorizations spent.
    pub evaluations: usize,
}

/// Locate the norm maximum inside `[lo, hi]` by golden-section search.
///
/// The shift used for each probe shrinks with the bracket
/// (`delta = clamp(w^2/4, delta_min, 1e-2)`), so a peak that sits between
/// grid points is first seen through a wide shift that smears it across
/// the bracket, then pinned down sharply. Both interior points are
/// re-evaluated whenever the shift changes, so comparisons always use a
/// common shift.
pub fn refine_peak(
    solver: &SpectralSolver,
    sources: &[SourceSpec],
    lo: f64,
    hi: f64,
    delta_min: f64,
    tol: f64,
) -> Result<RefinedPeak> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Unsupported(format!("bad bracket [{lo}, {hi}]")));
    }
    if !(delta_min > 0.0 && delta_min < 1.0) || !(tol > 0.0) {
        return Err(Error::Unsupported(format!(
            "bad refinement parameters delta_min = {delta_min}, tol = {tol}"
        )));
    }
    let prepared = prepare_sources(solver.source_mesh(), sources)?;
    if prepared.is_empty() {
        return Err(Error::Unsupported("no sources to refine with".into()));
    }
    let mut evals = 0usize;
    let mut eval = |t: f64, delta: f64| -> Result<f64> {
        let shifted = solver.shifted(t, delta)?;
        evals += 1;
        prepared
            .iter()
            .map(|src| prepared_norm(solver, &shifted, src))
            .try_fold(f64::NEG_INFINITY, |acc, n| Ok(acc.max(n?)))
    };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let w = b - a;
        let delta = (0.25 * w * w).clamp(delta_min, 1e-2);
        let c = b - inv_phi * w;
        let d = a + inv_phi * w;
        if eval(c, delta)? < eval(d, delta)? {
            a = c;
        } else {
            b = d;
        }
    }
    let t = 0.5 * (a + b);
    let norm_star = eval(t, delta_min)?;
    Ok(RefinedPeak { t, norm_star, evaluations: evals })
}

/// Refine every grid candidate and assemble the final report.
///
/// Each candidate is bracketed by its neighboring grid cells, refined with
/// [`refine_peak`], and then confirmed (or not) by a fresh solve ladder at
/// the refined location: the claim stands when the extrapolated exponent
/// over `thresholds.rungs` tail rungs reaches `pure_point`. Refinements
/// that converge onto an already-accepted location are merged.
pub fn build_report(
    solver: &SpectralSolver,
    profile: &IndicatorProfile,
    th: &Thresholds,
    sources: &[SourceSpec],
) -> Result<SpectrumReport> {
    let grid = classify(profile, th);
    let nt = profile.t_grid.len();
    let prepared = prepare_sources(solver.source_mesh(), sources)?;
    if prepared.is_empty() {
        return Err(Error::Unsupported("no sources to refine with".into()));
    }
    let delta_min = *profile.deltas.last().expect("sweep ladders are nonempty");
    let rungs = th.rungs.clamp(2, profile.deltas.len());

    let mut candidates: Vec<&PeakCandidate> = grid
        .eigenvalue_candidates
        .iter()
        .chain(&grid.embedded_candidates)
        .collect();
    candidates.sort_by(|x, y| y.norm_star.total_cmp(&x.norm_star));
    candidates.truncate(th.max_peaks);

    let mut eigenvalues: Vec<Resonance> = Vec::new();
    let mut embedded: Vec<Resonance> = Vec::new();
    let mut rejected: Vec<Resonance> = Vec::new();
    for cand in candidates {
        let i = cand.grid_idx;
        let lo = profile.t_grid[i.saturating_sub(1)];
        let hi = profile.t_grid[(i + 1).min(nt - 1)];
        let peak = refine_peak(solver, sources, lo, hi, delta_min, th.refine_tol)?;
        let mut known = eigenvalues.iter().chain(&embedded).chain(&rejected);
        if known.any(|r| (r.t - peak.t).abs() < 10.0 * th.refine_tol) {
            continue;
        }

        // Confirmation ladder at the refined location, reusing the sweep's
        // rungs so the exponent extrapolation matches the grid pass.
        let mut evidence = Vec::with_capacity(profile.deltas.len());
        for &delta in &profile.deltas {
            let shifted = solver.shifted(peak.t, delta)?;
            let norm = prepared
                .iter()
                .map(|src| prepared_norm(solver, &shifted, src))
                .try_fold(f64::NEG_INFINITY, |acc, n: Result<f64>| -> Result<f64> {
                    Ok(acc.max(n?))
                })?;
            let (alpha, _) = alpha_of(norm, delta);
            evidence.push(LadderPoint { delta, norm_star: norm, alpha });
        }
        let tail = &evidence[evidence.len() - rungs..];
        let ds: Vec<f64> = tail.iter().map(|p| p.delta).collect();
        let ns: Vec<f64> = tail.iter().map(|p| p.norm_star).collect();
        let alpha = if ns.iter().all(|&n| n > 0.0) {
            -crate::resolvent::loglog_slope(&ds, &ns)
        } else {
            0.0
        };

        let flank_alpha = (i > 0 && i + 1 < nt)
            .then(|| (profile.alpha_sharp[i - 1], profile.alpha_sharp[i + 1]));
        let isolated = !cand.in_band
            && flank_alpha.is_some_and(|(l, r)| l < th.isolation && r < th.isolation);
        let res = Resonance {
            t: peak.t,
            alpha,
            norm_star: peak.norm_star,
            embedded: cand.in_band,
            flank_alpha,
            isolated,
            evidence,
            evaluations: peak.evaluations,
        };
        if alpha < th.pure_point {
            rejected.push(res);
        } else if cand.in_band {
            embedded.push(res);
        } else {
            eigenvalues.push(res);
        }
    }
    eigenvalues.sort_by(|x, y| x.t.total_cmp(&y.t));
    embedded.sort_by(|x, y| x.t.total_cmp(&y.t));

    let scale = profile.t_grid.iter().fold(1.0f64, |m, t| m.max(t.abs()));
    let symmetric = (0..nt)
        .all(|i| (profile.t_grid[i] + profile.t_grid[nt - 1 - i]).abs() <= 1e-12 * scale);
    let symmetry_defect = if symmetric {
        crate::resolvent::symmetry_defect(profile)
    } else {
        f64::NAN
    };

    Ok(SpectrumReport {
        thresholds: *th,
        t_grid: profile.t_grid.clone(),
        alpha: grid.alpha,
        alpha_sharp: profile.alpha_sharp.clone(),
        bands: grid.bands,
        eigenvalues,
        embedded,
        rejected,
        unclassified: grid.unclassified,
        symmetry_defect,
    })
}
