//! Counts of nonautonomous orbits for the continuation map between two
//! Hamiltonians, for critical points of equal index.
//!
//! Orbits run from `x1` (critical for `H1` at `t -> -inf`) to `x2` (critical
//! for `H2` at `t -> +inf`) through a smoothstep ramp on `[0, ramp]`. The
//! orbit is truncated to `[-t_before, ramp + t_after]` and solved as a
//! boundary value problem by multiple shooting inside a symmetry-fixed
//! subspace:
//!
//! * the start is `x1` plus a combination of its unstable frame;
//! * short segments are glued by continuity equations;
//! * the end has no component along the unstable frame of `x2`.
//!
//! With equal fixed-subspace indices the system is square. It is solved by
//! Newton with a finite-difference Jacobian from several starts, at two
//! start-set sizes, and distinct converged solutions are counted.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::shooting::{restricted_pencil, subspace, symmetric_involutions, Confidence, CountMethod, OrbitCount};
use super::symmetry::Involution;
use super::{Field, Limit, Trajectory};
use crate::critical::CriticalPoint;
use crate::error::{Error, Result};
use crate::hamiltonian::{smoothstep, Hamiltonian};
use crate::spectral::{PointZ, SpectrumSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationControls {
    /// Duration of the smoothstep ramp from `H1` to `H2`.
    pub ramp: f64,
    /// Time spent in pure `H1` before the ramp.
    pub t_before: f64,
    /// Time spent in pure `H2` after the ramp.
    pub t_after: f64,
    pub dt: f64,
    /// Length of one shooting segment; bounds the growth inside a segment.
    pub segment: f64,
    /// Size of the Newton start offsets along the unstable frame of `x1`.
    pub start_scale: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Accept a solution only if both ends are this close to `x1` and `x2`.
    pub verify_dist: f64,
    pub kernel_tol: f64,
    pub symmetry_tol: f64,
}

impl Default for ContinuationControls {
    fn default() -> Self {
        ContinuationControls {
            ramp: 1.0,
            t_before: 6.0,
            t_after: 6.0,
            dt: 2.5e-2,
            segment: 0.25,
            start_scale: 0.05,
            newton_tol: 1e-9,
            max_newton: 30,
            verify_dist: 0.05,
            kernel_tol: 1e-7,
            symmetry_tol: 1e-8,
        }
    }
}

impl ContinuationControls {
    fn validate(&self) -> Result<()> {
        let positive = [self.ramp, self.dt, self.segment, self.start_scale, self.newton_tol, self.verify_dist];
        if !(positive.iter().all(|v| v.is_finite() && *v > 0.0) && self.t_before >= 0.0 && self.t_after >= 0.0) {
            return Err(Error::Config("continuation times, steps and tolerances must be positive".into()));
        }
        if self.max_newton == 0 {
            return Err(Error::Config("continuation needs at least one Newton iteration".into()));
        }
        Ok(())
    }
}

struct Problem<'a> {
    model: &'a SpectrumSpec,
    field: Field<'a>,
    metric: Vec<f64>,
    x1: DVector<f64>,
    x2: DVector<f64>,
    /// Unstable frame of `x1`; its coefficients are the first unknowns.
    u1: Vec<DVector<f64>>,
    /// Unstable frame of `x2`; the end conditions.
    u2: Vec<DVector<f64>>,
    /// Coordinates of the fixed subspace.
    keep: Vec<usize>,
    /// Segment start times; the last entry is the final time.
    nodes: Vec<f64>,
    steps: usize,
    c: &'a ContinuationControls,
}

impl Problem<'_> {
    fn segments(&self) -> usize {
        self.nodes.len() - 1
    }

    fn unknowns(&self) -> usize {
        self.u1.len() + self.keep.len() * (self.segments() - 1)
    }

    /// RK4 over segment `j` from the full state `x`, with `steps` equal steps.
    fn flow(&self, j: usize, x: &DVector<f64>, record: Option<&mut Vec<(f64, DVector<f64>)>>) -> DVector<f64> {
        let (t0, t1) = (self.nodes[j], self.nodes[j + 1]);
        let h = (t1 - t0) / self.steps as f64;
        let n = x.len();
        let mut d = vec![0.0; n];
        let mut vel = |t: f64, y: &DVector<f64>| -> DVector<f64> {
            self.field.differential(self.model, t, y.as_slice(), &mut d);
            let mut v = DVector::zeros(n);
            for &k in &self.keep {
                v[k] = -d[k] / self.metric[k];
            }
            v
        };
        let mut y = x.clone();
        let mut out = record;
        for s in 0..self.steps {
            let t = t0 + s as f64 * h;
            let k1 = vel(t, &y);
            let k2 = vel(t + 0.5 * h, &(&y + &k1 * (0.5 * h)));
            let k3 = vel(t + 0.5 * h, &(&y + &k2 * (0.5 * h)));
            let k4 = vel(t + h, &(&y + &k3 * h));
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            if let Some(rec) = out.as_deref_mut() {
                rec.push((t + h, y.clone()));
            }
        }
        y
    }

    /// Full state at node `j` from the unknown vector.
    fn node(&self, unknowns: &[f64], j: usize) -> DVector<f64> {
        if j == 0 {
            let mut x = self.x1.clone();
            for (a, u) in unknowns.iter().zip(&self.u1) {
                x += u * *a;
            }
            x
        } else {
            let m = self.keep.len();
            let off = self.u1.len() + m * (j - 1);
            let mut x = DVector::zeros(self.x1.len());
            for (i, &k) in self.keep.iter().enumerate() {
                x[k] = unknowns[off + i];
            }
            x
        }
    }

    fn end_condition(&self, end: &DVector<f64>) -> Vec<f64> {
        let diff = end - &self.x2;
        self.u2.iter().map(|u| (0..diff.len()).map(|k| u[k] * self.metric[k] * diff[k]).sum()).collect()
    }

    /// Segment ends for every segment, then the residual.
    fn residual(&self, unknowns: &[f64]) -> Option<(DVector<f64>, Vec<DVector<f64>>)> {
        let k = self.segments();
        let m = self.keep.len();
        let ends: Vec<DVector<f64>> = (0..k).into_par_iter().map(|j| self.flow(j, &self.node(unknowns, j), None)).collect();
        if ends.iter().any(|e| !e.iter().all(|v| v.is_finite())) {
            return None;
        }
        let mut f = DVector::zeros(self.unknowns());
        for j in 0..k - 1 {
            let next = self.node(unknowns, j + 1);
            for (i, &c) in self.keep.iter().enumerate() {
                f[j * m + i] = next[c] - ends[j][c];
            }
        }
        for (i, v) in self.end_condition(&ends[k - 1]).into_iter().enumerate() {
            f[(k - 1) * m + i] = v;
        }
        Some((f, ends))
    }

    /// Finite-difference Jacobian, one segment at a time.
    fn jacobian(&self, unknowns: &[f64], ends: &[DVector<f64>]) -> DMatrix<f64> {
        let k = self.segments();
        let m = self.keep.len();
        let k1 = self.u1.len();
        let n = self.unknowns();
        // Directions of the unknowns that feed segment j, in full coordinates.
        let inputs = |j: usize| -> Vec<DVector<f64>> {
            if j == 0 {
                self.u1.clone()
            } else {
                self.keep
                    .iter()
                    .map(|&c| {
                        let mut e = DVector::zeros(self.x1.len());
                        e[c] = 1.0;
                        e
                    })
                    .collect()
            }
        };
        let blocks: Vec<Vec<DVector<f64>>> = (0..k)
            .into_par_iter()
            .map(|j| {
                let x = self.node(unknowns, j);
                let scale = 1e-7 * (1.0 + x.amax());
                inputs(j).iter().map(|dir| (self.flow(j, &(&x + dir * scale), None) - &ends[j]) / scale).collect()
            })
            .collect();
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..k {
            let col0 = if j == 0 { 0 } else { k1 + m * (j - 1) };
            for (ci, dphi) in blocks[j].iter().enumerate() {
                if j + 1 < k {
                    for (i, &c) in self.keep.iter().enumerate() {
                        jac[(j * m + i, col0 + ci)] = -dphi[c];
                    }
                } else {
                    for (i, u) in self.u2.iter().enumerate() {
                        let v: f64 = (0..dphi.len()).map(|q| u[q] * self.metric[q] * dphi[q]).sum();
                        jac[((k - 1) * m + i, col0 + ci)] = v;
                    }
                }
            }
            if j >= 1 {
                for i in 0..m {
                    jac[((j - 1) * m + i, k1 + m * (j - 1) + i)] = 1.0;
                }
            }
        }
        jac
    }

    fn newton(&self, start: Vec<f64>) -> Option<Vec<f64>> {
        let mut xi = start;
        let (mut f, mut ends) = self.residual(&xi)?;
        let mut slow = 0;
        for _ in 0..self.c.max_newton {
            if f.amax() < self.c.newton_tol {
                return Some(xi);
            }
            let step = self.jacobian(&xi, &ends).lu().solve(&(-&f))?;
            let mut alpha = 1.0;
            loop {
                let trial: Vec<f64> = xi.iter().zip(step.iter()).map(|(a, d)| a + alpha * d).collect();
                if let Some((ft, et)) = self.residual(&trial) {
                    if ft.norm() < f.norm() || alpha == 1.0 && ft.norm() < 10.0 * f.norm() {
                        // Give up on starts that stop contracting.
                        slow = if ft.norm() > 0.5 * f.norm() { slow + 1 } else { 0 };
                        if slow > 4 {
                            return None;
                        }
                        xi = trial;
                        f = ft;
                        ends = et;
                        break;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-4 {
                    return None;
                }
            }
        }
        (f.amax() < self.c.newton_tol).then_some(xi)
    }

    /// Start offsets along the unstable frame of `x1`.
    fn starts(&self, level: usize) -> Vec<Vec<f64>> {
        let n = self.u1.len();
        let s = self.c.start_scale;
        let mut out = vec![vec![0.0; n]];
        let scales: &[f64] = if level == 0 { &[1.0] } else { &[0.5, 1.0, 2.0] };
        for &k in scales {
            for j in 0..n {
                for sign in [1.0, -1.0] {
                    let mut p = vec![0.0; n];
                    p[j] = sign * k * s;
                    out.push(p);
                }
            }
        }
        if level > 0 {
            let r = s / 2f64.sqrt();
            for i in 0..n {
                for j in i + 1..n {
                    for (a, b) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                        let mut p = vec![0.0; n];
                        p[i] = a * r;
                        p[j] = b * r;
                        out.push(p);
                    }
                }
            }
        }
        out
    }

    /// Initial guess: `x1` before the ramp, `x2` after it, blended by the
    /// ramp in between.
    fn guess(&self, a: &[f64]) -> Vec<f64> {
        let mut out = a.to_vec();
        for &t in &self.nodes[1..self.segments()] {
            let eta = smoothstep(t / self.c.ramp);
            out.extend(self.keep.iter().map(|&c| (1.0 - eta) * self.x1[c] + eta * self.x2[c]));
        }
        out
    }

    fn accepted(&self, xi: &[f64]) -> bool {
        let Some((_, ends)) = self.residual(xi) else {
            return false;
        };
        let start = self.node(xi, 0);
        let d1 = self.model.g_norm((start - &self.x1).as_slice());
        let d2 = self.model.g_norm((&ends[self.segments() - 1] - &self.x2).as_slice());
        d1 < self.c.verify_dist && d2 < self.c.verify_dist
    }

    /// Accepted Newton solutions from the given start offsets.
    fn solve(&self, starts: &[Vec<f64>]) -> Vec<Vec<f64>> {
        starts.iter().filter_map(|a| self.newton(self.guess(a))).filter(|r| self.accepted(r)).collect()
    }

    fn distinct(found: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let mut roots: Vec<Vec<f64>> = Vec::new();
        for r in found {
            let dup = roots.iter().any(|q| q.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) < 1e-6);
            if !dup {
                roots.push(r);
            }
        }
        roots
    }

    fn trajectory(&self, xi: &[f64]) -> Trajectory {
        let mut rec = vec![(self.nodes[0], self.node(xi, 0))];
        for j in 0..self.segments() {
            let x = self.node(xi, j);
            self.flow(j, &x, Some(&mut rec));
        }
        let mut traj = Trajectory {
            times: Vec::new(),
            states: Vec::new(),
            energies: Vec::new(),
            action: 0.0,
            max_norm: 0.0,
            limit: Limit::Undecided,
        };
        for (i, (t, x)) in rec.iter().enumerate() {
            traj.max_norm = traj.max_norm.max(self.model.g_norm(x.as_slice()));
            if i % 5 == 0 || i + 1 == rec.len() {
                traj.times.push(*t);
                traj.states.push(PointZ::from_real(x.as_slice()));
                traj.energies.push(self.field.energy(self.model, *t, x.as_slice()));
            }
        }
        traj.action = rec
            .windows(2)
            .map(|w| {
                let dt = w[1].0 - w[0].0;
                let dx = &w[1].1 - &w[0].1;
                (0..dx.len()).map(|k| self.metric[k] * dx[k] * dx[k]).sum::<f64>() / dt
            })
            .sum();
        traj
    }
}

/// Mod-2 count of orbits of the ramped flow from `x1` (for `ham1`) to `x2`
/// (for `ham2`); the two points must have equal relative index.
pub fn continuation_count(
    model: &SpectrumSpec,
    ham1: &Hamiltonian,
    ham2: &Hamiltonian,
    x1: &CriticalPoint,
    x2: &CriticalPoint,
    c: &ContinuationControls,
) -> Result<OrbitCount> {
    if x1.rel_index != x2.rel_index {
        return Err(Error::Config(format!(
            "continuation counts need equal indices, got {} and {}",
            x1.rel_index, x2.rel_index
        )));
    }
    c.validate()?;
    let mut options: Vec<Option<Involution>> =
        symmetric_involutions(model, &[ham1, ham2]).into_iter().map(Some).collect();
    options.push(None);

    let mut best: Option<(Option<Involution>, Vec<usize>, _, _)> = None;
    for inv in options {
        if let Some(i) = &inv {
            if !(i.fixes(model, &x1.z, c.symmetry_tol) && i.fixes(model, &x2.z, c.symmetry_tol)) {
                continue;
            }
        }
        let (keep, _) = subspace(model, inv.as_ref());
        let r1 = restricted_pencil(model, ham1, &x1.z, &keep, c.kernel_tol);
        let r2 = restricted_pencil(model, ham2, &x2.z, &keep, c.kernel_tol);
        if r1.kernel > 0 || r2.kernel > 0 {
            continue;
        }
        let d = r1.neg.len() as i64 - r2.neg.len() as i64;
        if d < 0 {
            let mut conf = Confidence::new_for(CountMethod::DimensionCount, "fixed-subspace index of x1 is below that of x2");
            conf.symmetry = inv.as_ref().map(|i| i.name.clone());
            conf.fixed_index_diff = Some(d);
            return Ok(OrbitCount::resolved(x1, x2, 0, conf));
        }
        if d == 0 && best.as_ref().is_none_or(|(_, k, _, _)| keep.len() < k.len()) {
            best = Some((inv, keep, r1, r2));
        }
    }
    let Some((inv, keep, r1, r2)) = best else {
        return Ok(OrbitCount::undecided(
            x1,
            x2,
            Confidence::new_for(CountMethod::Undecided, "no reduction with equal fixed-subspace indices"),
        ));
    };

    let total = c.t_before + c.ramp + c.t_after;
    let segments = ((total / c.segment).round() as usize).max(2);
    let nodes = (0..=segments).map(|j| -c.t_before + total * j as f64 / segments as f64).collect();
    let steps = ((total / segments as f64) / c.dt).round().max(1.0) as usize;
    let problem = Problem {
        model,
        field: Field::Ramp { h1: ham1, h2: ham2, ramp: c.ramp },
        metric: model.metric_diag(),
        x1: x1.z.to_real(),
        x2: x2.z.to_real(),
        u1: r1.neg,
        u2: r2.neg,
        keep,
        nodes,
        steps,
        c,
    };
    let mut conf = Confidence::new_for(CountMethod::Continuation, "");
    conf.symmetry = inv.as_ref().map(|i| i.name.clone());
    conf.fixed_index_diff = Some(0);
    conf.sphere_dim = Some(problem.u1.len());
    conf.radius = c.start_scale;

    let small = problem.starts(0);
    let extra: Vec<Vec<f64>> = problem.starts(1).into_iter().filter(|p| !small.contains(p)).collect();
    let mut found = problem.solve(&small);
    let coarse = Problem::distinct(found.clone());
    found.extend(problem.solve(&extra));
    let fine = Problem::distinct(found);
    conf.levels.push(super::RefinementLevel { mesh: problem.starts(0).len(), brackets: 0, roots: coarse.len() });
    conf.levels.push(super::RefinementLevel { mesh: problem.starts(1).len(), brackets: 0, roots: fine.len() });
    if coarse.len() != fine.len() {
        conf.method = CountMethod::Undecided;
        conf.note = format!("{} solutions from the small start set, {} from the large one", coarse.len(), fine.len());
        return Ok(OrbitCount::undecided(x1, x2, conf));
    }
    let mut reps = Vec::new();
    for r in &fine {
        let traj = problem.trajectory(r);
        let start = traj.states.first().map(|z| z.to_real()).expect("nonempty");
        let end = traj.final_state().to_real();
        conf.root_distances.push(
            model.g_norm((start - &problem.x1).as_slice()).max(model.g_norm((end - &problem.x2).as_slice())),
        );
        reps.push(traj);
    }
    conf.note = format!("{} orbit(s) of the ramped flow in the fixed subspace", fine.len());
    let mut out = OrbitCount::resolved(x1, x2, fine.len(), conf);
    out.representatives = reps;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::{NewtonOptions, ScanOptions};
    use crate::hamiltonian::HamiltonianSpec;
    use crate::pipeline::critical_window;

    #[test]
    fn constant_homotopy_counts_identity() {
        let m = SpectrumSpec::circle(2, 32).unwrap();
        let spec = HamiltonianSpec::linear_break(1e-3, HamiltonianSpec::Quadratic);
        let h = spec.bind(&m).unwrap();
        let w = critical_window(&m, &spec, 0.0, 2.0, &ScanOptions::default(), &NewtonOptions::default()).unwrap();
        let c = ContinuationControls::default();
        let x = &w.points[1];
        let same = continuation_count(&m, &h, &h, x, x, &c).unwrap();
        assert_eq!(same.parity, Some(1), "{:?}", same.confidence);
        assert!(continuation_count(&m, &h, &h, &w.points[0], &w.points[1], &c).is_err());
    }

    #[test]
    fn invalid_controls_are_rejected() {
        let c = ContinuationControls { segment: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
        let c: ContinuationControls = serde_json::from_str(r#"{"ramp": 2.0}"#).unwrap();
        assert_eq!(c.ramp, 2.0);
        assert!(serde_json::from_str::<ContinuationControls>(r#"{"rmap": 2.0}"#).is_err());
    }
}
