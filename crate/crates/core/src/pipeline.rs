//! End-to-end assembly: critical windows, parity tables, the three complex
//! flavors, and continuation along a subdivided homotopy.

use serde::{Deserialize, Serialize};

use crate::complex::{
    build_plain_complex, build_s1_complex, build_z2_complex, continuation_map, homology, induced_ranks,
    ChainComplexGF2, ContinuationMap, HomologyTable, ParityEntry,
};
use crate::critical::{
    canonical_representative, continue_branch, newton_solve, orbit_distance, window_scan, CritWindow,
    CriticalPoint, NewtonOptions, OrbitType, ScanOptions,
};
use crate::error::{Error, Result};
use crate::flow::{
    connecting_orbits, continuation_count, z2_class_count, ClassCount, ContinuationControls, OrbitCount,
    ShootingControls,
};
use crate::functional::energy;
use crate::gf2::MatGF2;
use crate::hamiltonian::{Hamiltonian, HamiltonianSpec};
use crate::spectral::{PointZ, SpectrumSpec};

/// Phases at which `broken`, restricted to the circle through `z`, has a
/// local extremum, located on a mesh of `n` rotations and refined by a
/// parabola through the three nearest samples.
fn circle_extrema(model: &SpectrumSpec, broken: &Hamiltonian, z: &PointZ, n: usize) -> Result<Vec<f64>> {
    let step = 2.0 * std::f64::consts::PI / n as f64;
    let e: Vec<f64> =
        (0..n).map(|j| energy(model, broken, &z.rotated(step * j as f64))).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for j in 0..n {
        let (l, c, r) = (e[(j + n - 1) % n], e[j], e[(j + 1) % n]);
        if (c > l && c >= r) || (c < l && c <= r) {
            let curv = l - 2.0 * c + r;
            let shift = if curv != 0.0 { 0.5 * (l - r) / curv } else { 0.0 };
            out.push(step * (j as f64 + shift.clamp(-1.0, 1.0)));
        }
    }
    Ok(out)
}

/// Breaks each critical circle of `circles` under `broken` by Newton from
/// the extrema of `broken` along the circle and from `phases` uniform
/// rotations of its representative. Returns the distinct broken points
/// (sorted by energy) and, for each, the circle it came from.
pub fn break_circles(
    model: &SpectrumSpec,
    broken: &Hamiltonian,
    circles: &CritWindow,
    phases: usize,
    opts: &NewtonOptions,
) -> Result<(CritWindow, Vec<usize>)> {
    let kind = OrbitType::of(broken);
    let n = phases.max(1);
    let mut found: Vec<(usize, CriticalPoint)> = Vec::new();
    // A seed may land on a neighboring circle, so each point is assigned to
    // the circle it is closest to.
    let nearest = |z: &PointZ| {
        (0..circles.len())
            .min_by(|&i, &j| {
                let di = orbit_distance(model, &circles.points[i].z, z, OrbitType::Circle);
                let dj = orbit_distance(model, &circles.points[j].z, z, OrbitType::Circle);
                di.total_cmp(&dj)
            })
            .unwrap_or(0)
    };
    for c in &circles.points {
        let mut angles = circle_extrema(model, broken, &c.z, 64)?;
        angles.extend((0..n).map(|j| 2.0 * std::f64::consts::PI * j as f64 / n as f64));
        for angle in angles {
            let Ok(mut cp) = newton_solve(model, broken, &c.z.rotated(angle), opts) else {
                continue;
            };
            cp.z = canonical_representative(&cp.z, kind);
            if found.iter().any(|(_, q)| orbit_distance(model, &q.z, &cp.z, kind) < 1e-6) {
                continue;
            }
            found.push((nearest(&cp.z), cp));
        }
    }
    found.sort_by(|x, y| x.1.energy.total_cmp(&y.1.energy).then(x.1.rel_index.cmp(&y.1.rel_index)));
    let origin = found.iter().map(|(c, _)| *c).collect();
    let points = found.into_iter().map(|(_, p)| p).collect();
    Ok((CritWindow { a: circles.a, b: circles.b, points }, origin))
}

/// Critical points of `spec` with energy in `[a, b]`. When `spec` breaks a
/// phase-invariant base, the circles of the base are found first and then
/// broken, which is more reliable than scanning the broken functional.
pub fn critical_window(
    model: &SpectrumSpec,
    spec: &HamiltonianSpec,
    a: f64,
    b: f64,
    scan: &ScanOptions,
    opts: &NewtonOptions,
) -> Result<CritWindow> {
    let ham = spec.bind(model)?;
    let base_spec = spec.without_breaks();
    let base = base_spec.bind(model)?;
    if ham.is_s1_invariant() || !base.is_s1_invariant() {
        return window_scan(model, &ham, a, b, scan, opts);
    }
    let circles = window_scan(model, &base, a, b, scan, opts)?;
    let (mut broken, _) = break_circles(model, &ham, &circles, scan.phases.max(4), opts)?;
    broken.points.retain(|p| p.energy >= a && p.energy <= b);
    Ok(broken)
}

/// Everything produced while assembling one complex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexReport {
    pub window: CritWindow,
    pub entries: Vec<ParityEntry>,
    pub orbit_counts: Vec<OrbitCount>,
    pub class_counts: Vec<ClassCount>,
    pub complex: Option<ChainComplexGF2>,
    pub homology: Option<HomologyTable>,
    /// Why the complex could not be assembled.
    pub error: Option<String>,
}

impl ComplexReport {
    fn finish(mut self, built: Result<ChainComplexGF2>) -> Result<Self> {
        match built {
            Ok(cx) => {
                self.homology = Some(homology(&cx));
                self.complex = Some(cx);
            }
            Err(e @ Error::Undecided(_)) => self.error = Some(e.to_string()),
            Err(e) => return Err(e),
        }
        Ok(self)
    }

    pub fn undecided(&self) -> Vec<&ParityEntry> {
        self.entries.iter().filter(|e| e.parity.is_none()).collect()
    }
}

/// Index pairs `(from, to)` of window points whose degrees differ by one.
fn adjacent_pairs(window: &CritWindow) -> Vec<(usize, usize)> {
    let pts = &window.points;
    let mut out = Vec::new();
    for i in 0..pts.len() {
        for j in 0..pts.len() {
            if pts[i].rel_index - pts[j].rel_index == 1 {
                out.push((i, j));
            }
        }
    }
    out
}

fn entry_of(from: usize, to: usize, c: &OrbitCount) -> ParityEntry {
    ParityEntry { from, to, parity: c.parity, note: c.confidence.note.clone() }
}

/// Parities for every adjacent pair of the window.
pub fn plain_parities(
    model: &SpectrumSpec,
    ham: &Hamiltonian,
    window: &CritWindow,
    controls: &ShootingControls,
) -> Result<(Vec<ParityEntry>, Vec<OrbitCount>)> {
    let mut entries = Vec::new();
    let mut counts = Vec::new();
    for (i, j) in adjacent_pairs(window) {
        let c = connecting_orbits(model, ham, &window.points[i], &window.points[j], controls)?;
        entries.push(entry_of(i, j, &c));
        counts.push(c);
    }
    Ok((entries, counts))
}

/// Plain complex of a Hamiltonian whose critical points are isolated.
pub fn plain_complex(
    model: &SpectrumSpec,
    ham: &Hamiltonian,
    window: &CritWindow,
    controls: &ShootingControls,
) -> Result<ComplexReport> {
    if ham.is_s1_invariant() {
        return Err(Error::Config(
            "the plain complex needs isolated critical points; add a symmetry-breaking term".into(),
        ));
    }
    let (entries, counts) = plain_parities(model, ham, window, controls)?;
    let report = ComplexReport {
        window: window.clone(),
        entries,
        orbit_counts: counts,
        class_counts: Vec::new(),
        complex: None,
        homology: None,
        error: None,
    };
    let built = build_plain_complex(&report.window, &report.entries);
    report.finish(built)
}

/// Complex of phase circles. `circles` are critical circles of a
/// phase-invariant Hamiltonian; `broken` splits each into a minimum and a
/// maximum, and entries count orbits between the maxima.
pub fn s1_complex(
    model: &SpectrumSpec,
    broken: &Hamiltonian,
    circles: &CritWindow,
    controls: &ShootingControls,
    phases: usize,
    opts: &NewtonOptions,
) -> Result<ComplexReport> {
    let (split, origin) = break_circles(model, broken, circles, phases, opts)?;
    let mut maxima = Vec::with_capacity(circles.len());
    for (ci, c) in circles.points.iter().enumerate() {
        let top = split
            .points
            .iter()
            .zip(&origin)
            .filter(|(p, o)| **o == ci && p.rel_index == c.rel_index + 1)
            .map(|(p, _)| p.clone())
            .next();
        match top {
            Some(p) => maxima.push(p),
            None => {
                return Err(Error::Undecided(format!(
                    "circle at energy {:.6} did not split into a maximum of index {}",
                    c.energy,
                    c.rel_index + 1
                )))
            }
        }
    }
    let mut entries = Vec::new();
    let mut counts = Vec::new();
    for (i, j) in adjacent_pairs(circles) {
        let c = connecting_orbits(model, broken, &maxima[i], &maxima[j], controls)?;
        entries.push(entry_of(i, j, &c));
        counts.push(c);
    }
    let report = ComplexReport {
        window: circles.clone(),
        entries,
        orbit_counts: counts,
        class_counts: Vec::new(),
        complex: None,
        homology: None,
        error: None,
    };
    let built = build_s1_complex(&report.window, &report.entries);
    report.finish(built)
}

/// Complex of `{z, -z}` classes for an even Hamiltonian; `classes` holds
/// one representative per class.
pub fn z2_complex(
    model: &SpectrumSpec,
    even: &Hamiltonian,
    classes: &CritWindow,
    controls: &ShootingControls,
) -> Result<ComplexReport> {
    if !even.is_even() || even.is_s1_invariant() {
        return Err(Error::Config("the pair complex needs an even Hamiltonian without phase symmetry".into()));
    }
    let mut entries = Vec::new();
    let mut counts = Vec::new();
    for (i, j) in adjacent_pairs(classes) {
        let c = z2_class_count(model, even, &classes.points[i], &classes.points[j], controls)?;
        entries.push(ParityEntry { from: i, to: j, parity: c.parity, note: format!("{:?}", c.method) });
        counts.push(c);
    }
    let report = ComplexReport {
        window: classes.clone(),
        entries,
        orbit_counts: Vec::new(),
        class_counts: counts,
        complex: None,
        homology: None,
        error: None,
    };
    let built = build_z2_complex(&report.window, &report.entries);
    report.finish(built)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomotopyStep {
    pub t0: f64,
    pub t1: f64,
    pub entries: Vec<ParityEntry>,
    pub counts: Vec<OrbitCount>,
    pub map: Option<ContinuationMap>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationReport {
    pub ts: Vec<f64>,
    pub complexes: Vec<ComplexReport>,
    pub steps: Vec<HomotopyStep>,
    /// Composite map from the first to the last complex, per degree.
    pub composite: Option<ContinuationMap>,
    /// Rank of the composite on homology, per degree.
    pub induced: Vec<(i64, usize)>,
    /// Whether the composite is an isomorphism at every degree that is
    /// interior in both end complexes.
    pub interior_isomorphism: Option<bool>,
}

/// Follows the window of `path(0)` along `path` in `steps` equal steps,
/// assembles the plain complex at every node and the continuation map
/// across every step, and composes them.
pub fn continuation_pipeline(
    model: &SpectrumSpec,
    path: &(dyn Fn(f64) -> HamiltonianSpec + Sync),
    start: &CritWindow,
    steps: usize,
    shooting: &ShootingControls,
    cont: &ContinuationControls,
    opts: &NewtonOptions,
) -> Result<ContinuationReport> {
    if steps == 0 {
        return Err(Error::Config("homotopy needs at least one step".into()));
    }
    let ts: Vec<f64> = (0..=steps).map(|j| j as f64 / steps as f64).collect();
    let mut windows = vec![start.clone()];
    for j in 1..=steps {
        let (t0, t1) = (ts[j - 1], ts[j]);
        let sub = |s: f64| path(t0 + s * (t1 - t0));
        let prev = &windows[j - 1];
        let mut pts = Vec::with_capacity(prev.len());
        for p in &prev.points {
            let br = continue_branch(model, &sub, p, 2, opts, None)?;
            pts.push(br.endpoint().clone());
        }
        windows.push(CritWindow { a: start.a, b: start.b, points: pts });
    }

    let hams: Vec<Hamiltonian> = ts.iter().map(|&t| path(t).bind(model)).collect::<Result<_>>()?;
    let mut complexes = Vec::new();
    for (w, h) in windows.iter().zip(&hams) {
        complexes.push(plain_complex(model, h, w, shooting)?);
    }

    let mut step_reports = Vec::new();
    for j in 1..=steps {
        let (w1, w2) = (&windows[j - 1], &windows[j]);
        let mut entries = Vec::new();
        let mut counts = Vec::new();
        for (i, x1) in w1.points.iter().enumerate() {
            for (k, x2) in w2.points.iter().enumerate() {
                if x1.rel_index != x2.rel_index {
                    continue;
                }
                let c = continuation_count(model, &hams[j - 1], &hams[j], x1, x2, cont)?;
                entries.push(entry_of(i, k, &c));
                counts.push(c);
            }
        }
        let mut step = HomotopyStep { t0: ts[j - 1], t1: ts[j], entries, counts, map: None, error: None };
        match (&complexes[j - 1].complex, &complexes[j].complex) {
            (Some(c1), Some(c2)) => match continuation_map(c1, c2, &step.entries) {
                Ok(m) => step.map = Some(m),
                Err(e @ Error::Undecided(_)) => step.error = Some(e.to_string()),
                Err(e) => return Err(e),
            },
            _ => step.error = Some("an end complex could not be assembled".into()),
        }
        step_reports.push(step);
    }

    let mut report = ContinuationReport {
        ts,
        complexes,
        steps: step_reports,
        composite: None,
        induced: Vec::new(),
        interior_isomorphism: None,
    };
    let maps: Option<Vec<&ContinuationMap>> = report.steps.iter().map(|s| s.map.as_ref()).collect();
    let (Some(maps), Some(first), Some(last)) =
        (maps, report.complexes[0].complex.as_ref(), report.complexes[steps].complex.as_ref())
    else {
        return Ok(report);
    };
    let composite = compose(first, last, &maps)?;
    report.induced = induced_ranks(first, last, &composite)?;
    let (h1, h2) = (homology(first), homology(last));
    report.interior_isomorphism = Some(report.induced.iter().all(|&(d, r)| {
        first.is_edge(d) || last.is_edge(d) || (r == h1.dim(d) && r == h2.dim(d))
    }));
    report.composite = Some(composite);
    Ok(report)
}

fn compose(first: &ChainComplexGF2, last: &ChainComplexGF2, maps: &[&ContinuationMap]) -> Result<ContinuationMap> {
    let degrees = maps[0].degrees.clone();
    let mut out = Vec::new();
    for &d in &degrees {
        let mut acc = MatGF2::identity(first.rank_at(d));
        for m in maps {
            let step = m.at(d).cloned().ok_or_else(|| Error::Complex(format!("degree {d} missing from a step")))?;
            acc = step.mul(&acc)?;
        }
        out.push(acc);
    }
    let mut cm = ContinuationMap { degrees, maps: out, chain_map_failures: Vec::new() };
    for &d in &cm.degrees {
        let left = last.boundary_at(d).mul(cm.at(d).expect("present"))?;
        let below = cm.at(d - 1).cloned().unwrap_or_else(|| MatGF2::zeros(last.rank_at(d - 1), first.rank_at(d - 1)));
        let right = below.mul(&first.boundary_at(d))?;
        if !left.add(&right)?.is_zero() {
            cm.chain_map_failures.push(d);
        }
    }
    Ok(cm)
}
