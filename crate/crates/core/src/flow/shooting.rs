//! Mod-2 counts of connecting orbits between critical points whose indices
//! differ by one.
//!
//! The count is first reduced to the fixed subspace of a symmetry that fixes
//! both ends (see [`super::symmetry`]). Inside that subspace the relevant
//! index difference decides the method:
//!
//! * difference `<= 0`: no orbit for dimension reasons, parity 0;
//! * difference `1`: shoot from the smaller of the two spheres, forward from
//!   the unstable sphere of `from` or backward from the stable sphere of
//!   `to`, and count the directions that hit the other end;
//! * otherwise the count is reported as undecided.
//!
//! On a one-dimensional sphere the target has exactly one repelling
//! direction, and the signed component along it where the trajectory passes
//! the target energy level changes sign across each orbit. Away from orbits
//! it is continuous except across trajectories that break at a third
//! critical point. When expansion rates differ, orbits hide in very thin
//! arcs next to such jumps, so mesh intervals with a large jump are split
//! recursively before sign changes are bisected. A root is accepted only if
//! the trajectory actually comes within `accept_dist` of the target. The mesh is doubled until the count
//! is stable over two levels, then re-checked at half the offset radius.

use std::ops::ControlFlow;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::symmetry::{candidate_involutions, Involution};
use super::{Field, FlowControls, Run, Trajectory};
use crate::critical::{orbit_distance, CriticalPoint, OrbitType};
use crate::error::{Error, Result};
use crate::functional::{hessian_unchecked, Pencil};
use crate::hamiltonian::Hamiltonian;
use crate::spectral::{PointZ, SpectrumSpec};

/// Narrowest mesh interval, in radians, that is still split or bisected.
const MIN_WIDTH: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShootingControls {
    /// Offset radius of the shooting sphere.
    pub radius: f64,
    /// Initial number of mesh points on a one-dimensional sphere.
    pub mesh0: usize,
    /// Maximum number of mesh doublings.
    pub max_refine: usize,
    pub dt: f64,
    pub t_max: f64,
    pub conv_tol: f64,
    pub escape: f64,
    /// A root counts only if the trajectory comes this close to the target.
    pub accept_dist: f64,
    pub bisect_iters: usize,
    pub kernel_tol: f64,
    /// Tolerance for deciding that a symmetry fixes a point.
    pub symmetry_tol: f64,
    /// Energy margin past the target level at which the residual is read.
    pub level_gap: f64,
    /// Mesh intervals whose residual changes by more than this fraction of
    /// its range are split.
    pub jump_fraction: f64,
    /// Cap on extra shots spent splitting intervals, per mesh.
    pub max_splits: usize,
    /// Slack in the energy interlacing check of representatives.
    pub energy_tol: f64,
}

impl Default for ShootingControls {
    fn default() -> Self {
        ShootingControls {
            radius: 1e-1,
            mesh0: 16,
            max_refine: 4,
            dt: 1e-2,
            t_max: 80.0,
            conv_tol: 1e-8,
            escape: 1e3,
            accept_dist: 1e-2,
            bisect_iters: 60,
            kernel_tol: 1e-7,
            symmetry_tol: 1e-8,
            level_gap: 1e-4,
            jump_fraction: 0.05,
            max_splits: 4000,
            energy_tol: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMethod {
    SamePoint,
    EnergyBarrier,
    DimensionCount,
    Shooting,
    PairSymmetry,
    Continuation,
    Undecided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementLevel {
    pub mesh: usize,
    pub brackets: usize,
    pub roots: usize,
}

/// How a count was obtained, with enough detail to audit it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Confidence {
    pub method: CountMethod,
    pub symmetry: Option<String>,
    pub fixed_index_diff: Option<i64>,
    pub sphere_dim: Option<usize>,
    pub backward: bool,
    pub radius: f64,
    pub levels: Vec<RefinementLevel>,
    pub half_radius_roots: Option<usize>,
    /// Closest approach to the target for each accepted root.
    pub root_distances: Vec<f64>,
    /// Sign changes whose bisection did not approach the target.
    pub rejected_brackets: usize,
    pub note: String,
}

impl Confidence {
    pub(crate) fn new_for(method: CountMethod, note: impl Into<String>) -> Self {
        Confidence {
            method,
            symmetry: None,
            fixed_index_diff: None,
            sphere_dim: None,
            backward: false,
            radius: 0.0,
            levels: Vec::new(),
            half_radius_roots: None,
            root_distances: Vec::new(),
            rejected_brackets: 0,
            note: note.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitCount {
    pub from: CriticalPoint,
    pub to: CriticalPoint,
    pub index_diff: i64,
    /// Number of orbits counted in the reduced problem; `None` if undecided.
    pub count: Option<usize>,
    pub parity: Option<u8>,
    pub representatives: Vec<Trajectory>,
    pub confidence: Confidence,
}

impl OrbitCount {
    pub(crate) fn resolved(from: &CriticalPoint, to: &CriticalPoint, count: usize, confidence: Confidence) -> Self {
        OrbitCount {
            from: from.clone(),
            to: to.clone(),
            index_diff: from.rel_index - to.rel_index,
            count: Some(count),
            parity: Some((count % 2) as u8),
            representatives: Vec::new(),
            confidence,
        }
    }

    pub(crate) fn undecided(from: &CriticalPoint, to: &CriticalPoint, confidence: Confidence) -> Self {
        OrbitCount {
            from: from.clone(),
            to: to.clone(),
            index_diff: from.rel_index - to.rel_index,
            count: None,
            parity: None,
            representatives: Vec::new(),
            confidence,
        }
    }
}

/// Pencil of `(B, G)` restricted to a coordinate subspace, with frames
/// embedded back into full coordinates.
pub(crate) struct Restricted {
    pub neg: Vec<DVector<f64>>,
    pub pos: Vec<DVector<f64>>,
    pub kernel: usize,
}

pub(crate) fn restricted_pencil(
    model: &SpectrumSpec,
    ham: &Hamiltonian,
    z: &PointZ,
    coords: &[usize],
    kernel_tol: f64,
) -> Restricted {
    let form = hessian_unchecked(model, ham, &z.u.0, z.lambda);
    let k = coords.len();
    let b = DMatrix::from_fn(k, k, |i, j| form.b[(coords[i], coords[j])]);
    let g = DVector::from_iterator(k, coords.iter().map(|&c| form.g[c]));
    let pencil = Pencil::new(&b, &g);
    let n = model.real_dim();
    let embed = |v: DVector<f64>| {
        let mut full = DVector::zeros(n);
        for (i, &c) in coords.iter().enumerate() {
            full[c] = v[i];
        }
        full
    };
    let (_, kernel, _) = pencil.inertia(kernel_tol);
    Restricted {
        neg: pencil.negative_frame(kernel_tol).into_iter().map(embed).collect(),
        pos: pencil.positive_frame(kernel_tol).into_iter().map(embed).collect(),
        kernel,
    }
}

/// Involutions preserving every Hamiltonian in `hams`, identity last.
pub(crate) fn symmetric_involutions(model: &SpectrumSpec, hams: &[&Hamiltonian]) -> Vec<Involution> {
    candidate_involutions(model.n_modes())
        .into_iter()
        .filter(|inv| hams.iter().all(|h| inv.is_symmetry_of(model, h, 4, 7)))
        .collect()
}

/// Coordinates kept and zeroed for an optional involution.
pub(crate) fn subspace(model: &SpectrumSpec, inv: Option<&Involution>) -> (Vec<usize>, Vec<usize>) {
    match inv {
        Some(i) => (i.fixed_coords(), i.moved_coords()),
        None => ((0..model.real_dim()).collect(), Vec::new()),
    }
}

struct Plan {
    inv: Option<Involution>,
    from: Restricted,
    to: Restricted,
}

impl Plan {
    fn index_diff(&self) -> i64 {
        self.from.neg.len() as i64 - self.to.neg.len() as i64
    }

    fn sphere_dim(&self) -> usize {
        let fwd = self.from.neg.len().saturating_sub(1);
        let bwd = self.to.pos.len().saturating_sub(1);
        fwd.min(bwd)
    }
}

/// Mod-2 count of descending orbits from `from` to `to` (index difference 1).
pub fn connecting_orbits(
    model: &SpectrumSpec,
    ham: &Hamiltonian,
    from: &CriticalPoint,
    to: &CriticalPoint,
    controls: &ShootingControls,
) -> Result<OrbitCount> {
    if orbit_distance(model, &from.z, &to.z, OrbitType::Isolated) < 1e-9 {
        return Ok(OrbitCount::resolved(from, to, 0, Confidence::new_for(CountMethod::SamePoint, "identical endpoints")));
    }
    let diff = from.rel_index - to.rel_index;
    if diff != 1 {
        return Err(Error::Config(format!("orbit counting needs index difference 1, got {diff}")));
    }
    if to.energy >= from.energy {
        return Ok(OrbitCount::resolved(
            from,
            to,
            0,
            Confidence::new_for(CountMethod::EnergyBarrier, "target energy is not below source energy"),
        ));
    }

    let mut plans = Vec::new();
    let mut options: Vec<Option<Involution>> =
        symmetric_involutions(model, &[ham]).into_iter().map(Some).collect();
    options.push(None);
    for inv in options {
        if let Some(i) = &inv {
            if !(i.fixes(model, &from.z, controls.symmetry_tol) && i.fixes(model, &to.z, controls.symmetry_tol)) {
                continue;
            }
        }
        let (keep, _) = subspace(model, inv.as_ref());
        let rf = restricted_pencil(model, ham, &from.z, &keep, controls.kernel_tol);
        let rt = restricted_pencil(model, ham, &to.z, &keep, controls.kernel_tol);
        if rf.kernel > 0 || rt.kernel > 0 {
            continue;
        }
        plans.push(Plan { inv, from: rf, to: rt });
    }

    if let Some(p) = plans.iter().find(|p| p.index_diff() <= 0) {
        let mut conf = Confidence::new_for(
            CountMethod::DimensionCount,
            "index difference in the fixed subspace leaves no room for orbits",
        );
        conf.symmetry = p.inv.as_ref().map(|i| i.name.clone());
        conf.fixed_index_diff = Some(p.index_diff());
        return Ok(OrbitCount::resolved(from, to, 0, conf));
    }
    let best = plans.into_iter().filter(|p| p.index_diff() == 1).min_by_key(|p| p.sphere_dim());
    let Some(plan) = best else {
        return Ok(OrbitCount::undecided(
            from,
            to,
            Confidence::new_for(CountMethod::Undecided, "no reduction with a resolvable index difference"),
        ));
    };
    shoot_count(model, ham, from, to, plan, controls)
}

/// One shot: closest approach to the target, and the component along the
/// target's repelling direction where the trajectory first passes the
/// target's energy level by `level_gap`. That crossing is unique because
/// energy is monotone along the flow, so the residual is continuous on the
/// sphere except at orbits into the target, where it changes sign.
#[derive(Clone, Debug)]
struct Shot {
    d_min: f64,
    g: f64,
    t_min: f64,
}

struct Shooter<'a> {
    model: &'a SpectrumSpec,
    ham: &'a Hamiltonian,
    base: DVector<f64>,
    frame: Vec<DVector<f64>>,
    target: DVector<f64>,
    target_energy: f64,
    repel: Option<DVector<f64>>,
    backward: bool,
    zero: Vec<usize>,
    controls: &'a ShootingControls,
}

impl Shooter<'_> {
    fn offset(&self, phi: f64, radius: f64) -> DVector<f64> {
        match self.frame.len() {
            1 => self.frame[0].clone() * (radius * phi.cos().signum()),
            _ => &self.frame[0] * (radius * phi.cos()) + &self.frame[1] * (radius * phi.sin()),
        }
    }

    fn flow_controls(&self, t_max: f64, radius: f64, record_every: usize) -> FlowControls {
        FlowControls {
            dt: self.controls.dt,
            t_max,
            // The start point is within `radius` of a critical point; the
            // convergence test must not fire there.
            conv_tol: self.controls.conv_tol.min(1e-3 * radius),
            escape: self.controls.escape,
            backward: self.backward,
            freeze_lambda: false,
            record_every,
            energy_floor: None,
        }
    }

    fn run(&self, phi: f64, radius: f64, t_max: f64, record_every: usize) -> Result<(Shot, Trajectory)> {
        let x0 = &self.base + self.offset(phi, radius);
        let fc = self.flow_controls(t_max, radius, record_every);
        let run = Run {
            model: self.model,
            field: Field::Autonomous(self.ham),
            t0: 0.0,
            controls: &fc,
            zero_coords: &self.zero,
            bound: None,
            kernel_tol: self.controls.kernel_tol,
        };
        let metric = self.model.metric_diag();
        let mut best = (f64::INFINITY, 0.0);
        let mut crossing: Option<Vec<f64>> = None;
        let mut prev: Option<(Vec<f64>, f64)> = None;
        let gap = self.controls.level_gap;
        let level = if self.backward { self.target_energy + gap } else { self.target_energy - gap };
        let traj = run.integrate(x0.as_slice(), |t, x| {
            let d = x
                .iter()
                .zip(self.target.iter())
                .zip(&metric)
                .map(|((a, b), g)| g * (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if d < best.0 {
                best = (d, t);
            }
            let e = Field::Autonomous(self.ham).energy(self.model, t, x);
            let passed = if self.backward { e > level } else { e < level };
            if passed {
                // Linear interpolation to the level keeps the residual
                // continuous in the shooting direction.
                let point = match &prev {
                    Some((xp, ep)) if (e - ep).abs() > 0.0 => {
                        let s = (level - ep) / (e - ep);
                        xp.iter().zip(x).map(|(a, b)| a + s * (b - a)).collect()
                    }
                    _ => x.to_vec(),
                };
                crossing = Some(point);
                return ControlFlow::Break(());
            }
            prev = Some((x.to_vec(), e));
            ControlFlow::Continue(())
        })?;
        let g = match (&self.repel, &crossing) {
            (Some(w), Some(x)) => (0..x0.len()).map(|k| w[k] * metric[k] * (x[k] - self.target[k])).sum(),
            _ => f64::NAN,
        };
        Ok((Shot { d_min: best.0, g, t_min: best.1 }, traj))
    }

    fn shot(&self, phi: f64, radius: f64) -> Shot {
        match self.run(phi, radius, self.controls.t_max, 0) {
            Ok((s, _)) => s,
            Err(_) => Shot { d_min: f64::INFINITY, g: f64::NAN, t_min: 0.0 },
        }
    }

    /// Accepted roots on the sphere at the given mesh size: `(phi, shot)`.
    fn roots(&self, mesh: usize, radius: f64) -> (Vec<(f64, Shot)>, usize, usize) {
        let c = self.controls;
        if self.frame.len() == 1 {
            // Zero-dimensional sphere: the two directions +-v.
            let shots: Vec<(f64, Shot)> =
                [0.0, std::f64::consts::PI].par_iter().map(|&p| (p, self.shot(p, radius))).collect();
            let roots: Vec<(f64, Shot)> = shots.into_iter().filter(|(_, s)| s.d_min < c.accept_dist).collect();
            return (roots, 0, 0);
        }
        let tau = 2.0 * std::f64::consts::PI;
        let phis: Vec<f64> = (0..mesh).map(|j| tau * j as f64 / mesh as f64).collect();
        let shots: Vec<Shot> = phis.par_iter().map(|&p| self.shot(p, radius)).collect();
        let mut pts: Vec<(f64, Shot)> = phis.into_iter().zip(shots).collect();
        let first = pts[0].1.clone();
        pts.push((tau, first));
        self.split_jumps(&mut pts, radius);

        let brackets: Vec<usize> = (0..pts.len() - 1)
            .filter(|&j| {
                let (a, b) = (pts[j].1.g, pts[j + 1].1.g);
                a.is_finite() && b.is_finite() && (a >= 0.0) != (b >= 0.0)
            })
            .collect();
        let refined: Vec<(f64, Shot)> = brackets
            .par_iter()
            .map(|&j| {
                let (lo, lo_shot) = &pts[j];
                let (hi, hi_shot) = &pts[j + 1];
                self.bisect(*lo, lo_shot.clone(), *hi, hi_shot.clone(), radius)
            })
            .collect();
        let n_brackets = brackets.len();
        let roots: Vec<(f64, Shot)> = refined.into_iter().filter(|(_, s)| s.d_min < c.accept_dist).collect();
        let rejected = n_brackets - roots.len();
        (roots, n_brackets, rejected)
    }

    /// Splits mesh intervals whose residual jumps by more than a fixed
    /// fraction of its range, until they are narrower than `MIN_WIDTH`.
    fn split_jumps(&self, pts: &mut Vec<(f64, Shot)>, radius: f64) {
        let c = self.controls;
        let range = pts.iter().map(|(_, s)| s.g).filter(|g| g.is_finite()).fold(0.0, |m: f64, g| m.max(g.abs()));
        let jump = c.jump_fraction * range;
        let mut evals = 0;
        loop {
            let mids: Vec<f64> = pts
                .windows(2)
                .filter(|w| {
                    let (a, b) = (w[0].1.g, w[1].1.g);
                    let wide = w[1].0 - w[0].0 > MIN_WIDTH;
                    let jumps = match (a.is_finite(), b.is_finite()) {
                        (true, true) => (a - b).abs() > jump,
                        (false, false) => false,
                        _ => true,
                    };
                    wide && jumps
                })
                .map(|w| 0.5 * (w[0].0 + w[1].0))
                .collect();
            if mids.is_empty() || evals + mids.len() > c.max_splits {
                break;
            }
            evals += mids.len();
            let new: Vec<(f64, Shot)> = mids.par_iter().map(|&p| (p, self.shot(p, radius))).collect();
            pts.extend(new);
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
    }

    fn bisect(&self, mut lo: f64, lo_shot: Shot, mut hi: f64, hi_shot: Shot, radius: f64) -> (f64, Shot) {
        let lo_sign = lo_shot.g >= 0.0;
        let mut best = if hi_shot.d_min < lo_shot.d_min { (hi, hi_shot) } else { (lo, lo_shot) };
        for _ in 0..self.controls.bisect_iters {
            if hi - lo < MIN_WIDTH {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let s = self.shot(mid, radius);
            if !s.g.is_finite() {
                break;
            }
            let sign = s.g >= 0.0;
            if s.d_min < best.1.d_min {
                best = (mid, s);
            }
            if sign == lo_sign {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        best
    }
}

fn shoot_count(
    model: &SpectrumSpec,
    ham: &Hamiltonian,
    from: &CriticalPoint,
    to: &CriticalPoint,
    plan: Plan,
    c: &ShootingControls,
) -> Result<OrbitCount> {
    let (_, zero) = subspace(model, plan.inv.as_ref());
    let forward = plan.from.neg.len() <= plan.to.pos.len();
    let (base, frame, target, target_energy, repel_frame) = if forward {
        (&from.z, plan.from.neg.clone(), &to.z, to.energy, plan.to.neg.clone())
    } else {
        (&to.z, plan.to.pos.clone(), &from.z, from.energy, plan.from.pos.clone())
    };
    let sphere_dim = frame.len() - 1;
    let mut conf = Confidence::new_for(CountMethod::Shooting, "");
    conf.symmetry = plan.inv.as_ref().map(|i| i.name.clone());
    conf.fixed_index_diff = Some(plan.index_diff());
    conf.sphere_dim = Some(sphere_dim);
    conf.backward = !forward;
    conf.radius = c.radius;
    if sphere_dim > 1 {
        conf.method = CountMethod::Undecided;
        conf.note = format!("shooting sphere of dimension {sphere_dim} is not supported");
        return Ok(OrbitCount::undecided(from, to, conf));
    }
    let shooter = Shooter {
        model,
        ham,
        base: base.to_real(),
        frame,
        target: target.to_real(),
        target_energy,
        repel: if repel_frame.len() == 1 { Some(repel_frame[0].clone()) } else { None },
        backward: !forward,
        zero,
        controls: c,
    };

    let mut mesh = c.mesh0.max(4);
    let mut prev: Option<usize> = None;
    let mut stable = false;
    let mut roots = Vec::new();
    for level in 0..=c.max_refine {
        let (r, brackets, rejected) = shooter.roots(mesh, c.radius);
        conf.levels.push(RefinementLevel { mesh, brackets, roots: r.len() });
        conf.rejected_brackets = rejected;
        let count = r.len();
        roots = r;
        if sphere_dim == 0 || (level > 0 && prev == Some(count)) {
            stable = true;
            break;
        }
        prev = Some(count);
        mesh *= 2;
    }
    if !stable {
        conf.method = CountMethod::Undecided;
        conf.note = "root count did not stabilize under mesh refinement".into();
        return Ok(OrbitCount::undecided(from, to, conf));
    }
    let (half, _, _) = shooter.roots(mesh, 0.5 * c.radius);
    conf.half_radius_roots = Some(half.len());
    if half.len() != roots.len() {
        conf.method = CountMethod::Undecided;
        conf.note = format!("{} roots at radius r but {} at r/2", roots.len(), half.len());
        return Ok(OrbitCount::undecided(from, to, conf));
    }

    let mut representatives = Vec::new();
    for (phi, shot) in &roots {
        conf.root_distances.push(shot.d_min);
        let (_, mut traj) = shooter.run(*phi, c.radius, shot.t_min.abs().max(c.dt), 5)?;
        if !forward {
            traj.times.reverse();
            traj.states.reverse();
            traj.energies.reverse();
        }
        let ok = traj
            .energies
            .iter()
            .all(|e| *e <= from.energy + c.energy_tol && *e >= to.energy - c.energy_tol);
        if !ok {
            conf.method = CountMethod::Undecided;
            conf.note = "a representative violates energy interlacing".into();
            return Ok(OrbitCount::undecided(from, to, conf));
        }
        representatives.push(traj);
    }
    conf.note = format!(
        "{} orbit(s) in the fixed subspace, shooting {} on a sphere of dimension {sphere_dim}",
        roots.len(),
        if forward { "forward" } else { "backward" }
    );
    let mut out = OrbitCount::resolved(from, to, roots.len(), conf);
    out.representatives = representatives;
    Ok(out)
}

/// Count entering the boundary of the pair-quotient complex:
/// `<x, y> + <x, -y>` mod 2 for representatives `x`, `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub from: CriticalPoint,
    pub to: CriticalPoint,
    pub parity: Option<u8>,
    pub method: CountMethod,
    pub symmetry: Option<String>,
    pub parts: Vec<OrbitCount>,
}

pub fn z2_class_count(
    model: &SpectrumSpec,
    ham: &Hamiltonian,
    x: &CriticalPoint,
    y: &CriticalPoint,
    controls: &ShootingControls,
) -> Result<ClassCount> {
    let diff = x.rel_index - y.rel_index;
    if diff != 1 {
        return Err(Error::Config(format!("orbit counting needs index difference 1, got {diff}")));
    }
    let mut out = ClassCount {
        from: x.clone(),
        to: y.clone(),
        parity: None,
        method: CountMethod::Undecided,
        symmetry: None,
        parts: Vec::new(),
    };
    if y.energy >= x.energy {
        out.parity = Some(0);
        out.method = CountMethod::EnergyBarrier;
        return Ok(out);
    }
    let mut neg_y = y.clone();
    neg_y.z = y.z.negated_field();
    let tol = controls.symmetry_tol;
    let invs = symmetric_involutions(model, &[ham]);

    if invs.iter().any(|i| i.fixes(model, &x.z, tol) && i.fixes(model, &y.z, tol)) {
        let a = connecting_orbits(model, ham, x, y, controls)?;
        let b = connecting_orbits(model, ham, x, &neg_y, controls)?;
        if let (Some(pa), Some(pb)) = (a.parity, b.parity) {
            out.parity = Some((pa + pb) % 2);
            out.method = CountMethod::Shooting;
        }
        out.parts = vec![a, b];
        return Ok(out);
    }
    // A symmetry fixing one end and negating the other swaps the orbits
    // counted by <x, y> and <x, -y> (using evenness for the second case).
    let swap = invs.iter().find(|i| {
        let fx = i.fixes(model, &x.z, tol);
        let fy = i.fixes(model, &y.z, tol);
        let nx = model.g_distance(&i.apply(&x.z), &x.z.negated_field()) < tol;
        let ny = model.g_distance(&i.apply(&y.z), &neg_y.z) < tol;
        (fx && ny) || (nx && fy)
    });
    if let Some(i) = swap {
        out.parity = Some(0);
        out.method = CountMethod::PairSymmetry;
        out.symmetry = Some(i.name.clone());
        return Ok(out);
    }
    let a = connecting_orbits(model, ham, x, y, controls)?;
    let b = connecting_orbits(model, ham, x, &neg_y, controls)?;
    if let (Some(pa), Some(pb)) = (a.parity, b.parity) {
        out.parity = Some((pa + pb) % 2);
        out.method = CountMethod::Shooting;
    }
    out.parts = vec![a, b];
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::{NewtonOptions, ScanOptions};
    use crate::hamiltonian::HamiltonianSpec;
    use crate::pipeline::critical_window;

    fn broken_window() -> (SpectrumSpec, Hamiltonian, Vec<CriticalPoint>) {
        let m = SpectrumSpec::circle(2, 32).unwrap();
        let spec = HamiltonianSpec::linear_break(1e-3, HamiltonianSpec::Quadratic);
        let w = critical_window(&m, &spec, 0.0, 2.0, &ScanOptions::default(), &NewtonOptions::default()).unwrap();
        (m.clone(), spec.bind(&m).unwrap(), w.points)
    }

    #[test]
    fn degenerate_requests_are_resolved_without_shooting() {
        let (m, h, pts) = broken_window();
        let c = ShootingControls::default();
        let same = connecting_orbits(&m, &h, &pts[1], &pts[1], &c).unwrap();
        assert_eq!((same.parity, same.confidence.method), (Some(0), CountMethod::SamePoint));
        assert!(connecting_orbits(&m, &h, &pts[3], &pts[0], &c).is_err());
    }

    #[test]
    fn in_circle_orbits_cancel() {
        let (m, h, pts) = broken_window();
        assert_eq!(pts.iter().map(|p| p.rel_index).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        let c = connecting_orbits(&m, &h, &pts[1], &pts[0], &ShootingControls::default()).unwrap();
        assert_eq!(c.parity, Some(0), "{:?}", c.confidence);
        assert_eq!(c.count.map(|n| n % 2), Some(0));
    }

    #[test]
    fn cross_circle_orbit_is_unique() {
        let (m, h, pts) = broken_window();
        let c = connecting_orbits(&m, &h, &pts[2], &pts[1], &ShootingControls::default()).unwrap();
        assert_eq!(c.parity, Some(1), "{:?}", c.confidence);
        for tr in &c.representatives {
            assert!(tr.max_energy_increase() <= 1e-8);
        }
    }
}
