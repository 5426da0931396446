//! Gradient flow of `E` in the `H^{1/2} x R` metric.
//!
//! The descending field in coefficient form is
//! `a_i' = -sign(mu_i) a_i + lambda h_i / |mu_i|`, `lambda' = int H - 1`.
//! Integration is classical fourth-order Runge-Kutta with a fixed step; the
//! action `int |z'|^2 dt` is integrated alongside as an extra component.

mod continuation;
mod shooting;
mod symmetry;

pub use continuation::{continuation_count, ContinuationControls};
pub use shooting::{
    connecting_orbits, z2_class_count, ClassCount, Confidence, CountMethod, OrbitCount, RefinementLevel,
    ShootingControls,
};
pub use symmetry::{candidate_involutions, Involution};

use std::ops::ControlFlow;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::critical::CriticalPoint;
use crate::error::{Error, Result};
use crate::functional::{differential_real, energy_unchecked, Pencil, hessian_form};
use crate::hamiltonian::{smoothstep, Hamiltonian};
use crate::spectral::{FieldCoeffs, PointZ, SpectrumSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowControls {
    pub dt: f64,
    pub t_max: f64,
    /// Stop once the gradient norm drops below this value.
    pub conv_tol: f64,
    /// Stop once the metric norm of the state exceeds this value.
    pub escape: f64,
    /// Integrate backward in time (the ascending flow for autonomous fields).
    pub backward: bool,
    /// Hold `lambda` fixed; used for closed-form comparisons.
    pub freeze_lambda: bool,
    /// Keep every `record_every`-th state (the final state is always kept).
    /// Zero disables recording.
    pub record_every: usize,
    /// Stop once the energy drops below this value, i.e. the run leaves a
    /// window from below.
    pub energy_floor: Option<f64>,
}

impl Default for FlowControls {
    fn default() -> Self {
        FlowControls {
            dt: 1e-2,
            t_max: 50.0,
            conv_tol: 1e-8,
            escape: 1e3,
            backward: false,
            freeze_lambda: false,
            record_every: 1,
            energy_floor: None,
        }
    }
}

impl FlowControls {
    fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config("flow dt must be positive".into()));
        }
        if self.dt < 1e-14 {
            return Err(Error::StepUnderflow { t: 0.0 });
        }
        if !(self.t_max > 0.0 && self.conv_tol > 0.0 && self.escape > 0.0) {
            return Err(Error::Config("flow t_max, conv_tol and escape must be positive".into()));
        }
        Ok(())
    }
}

/// How a trajectory ended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Limit {
    ConvergedTo { point: Box<CriticalPoint> },
    Escaped,
    BoundExceeded { max_norm: f64 },
    BelowFloor,
    Undecided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PointZ>,
    pub energies: Vec<f64>,
    /// `int |z'|^2 dt` in the metric.
    pub action: f64,
    pub max_norm: f64,
    pub limit: Limit,
}

impl Trajectory {
    pub fn final_state(&self) -> &PointZ {
        self.states.last().expect("trajectories record their final state")
    }

    /// Largest increase of energy between consecutive records.
    pub fn max_energy_increase(&self) -> f64 {
        self.energies.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Comma-separated table: `t, Re a_i, Im a_i ..., lambda, E`.
    pub fn to_csv(&self) -> String {
        let m = self.states.first().map_or(0, |s| s.u.len());
        let mut out = String::from("t");
        for i in 0..m {
            out.push_str(&format!(",re_a{i},im_a{i}"));
        }
        out.push_str(",lambda,energy\n");
        for ((t, z), e) in self.times.iter().zip(&self.states).zip(&self.energies) {
            out.push_str(&format!("{t:.10e}"));
            for a in &z.u.0 {
                out.push_str(&format!(",{:.16e},{:.16e}", a.re, a.im));
            }
            out.push_str(&format!(",{:.16e},{:.16e}\n", z.lambda, e));
        }
        out
    }
}

/// Autonomous field or a smoothstep ramp from `h1` to `h2` over `[0, ramp]`.
#[derive(Clone, Copy)]
pub(crate) enum Field<'a> {
    Autonomous(&'a Hamiltonian),
    Ramp { h1: &'a Hamiltonian, h2: &'a Hamiltonian, ramp: f64 },
}

impl Field<'_> {
    fn eta(&self, t: f64) -> f64 {
        match self {
            Field::Autonomous(_) => 0.0,
            Field::Ramp { ramp, .. } => smoothstep(t / ramp),
        }
    }

    pub(crate) fn differential(&self, model: &SpectrumSpec, t: f64, x: &[f64], out: &mut [f64]) {
        match self {
            Field::Autonomous(h) => differential_real(model, h, x, out),
            Field::Ramp { h1, h2, .. } => {
                let eta = self.eta(t);
                if eta == 0.0 {
                    differential_real(model, h1, x, out);
                } else if eta == 1.0 {
                    differential_real(model, h2, x, out);
                } else {
                    let mut other = vec![0.0; out.len()];
                    differential_real(model, h1, x, out);
                    differential_real(model, h2, x, &mut other);
                    for (o, v) in out.iter_mut().zip(&other) {
                        *o = (1.0 - eta) * *o + eta * v;
                    }
                }
            }
        }
    }

    pub(crate) fn energy(&self, model: &SpectrumSpec, t: f64, x: &[f64]) -> f64 {
        let z = PointZ::from_real(x);
        match self {
            Field::Autonomous(h) => energy_unchecked(model, h, &z.u.0, z.lambda),
            Field::Ramp { h1, h2, .. } => {
                let eta = self.eta(t);
                let e1 = || energy_unchecked(model, h1, &z.u.0, z.lambda);
                let e2 = || energy_unchecked(model, h2, &z.u.0, z.lambda);
                if eta == 0.0 {
                    e1()
                } else if eta == 1.0 {
                    e2()
                } else {
                    (1.0 - eta) * e1() + eta * e2()
                }
            }
        }
    }

    /// The Hamiltonian when the field no longer changes in the direction of
    /// integration after time `t`.
    fn frozen(&self, t: f64, backward: bool) -> Option<&Hamiltonian> {
        match self {
            Field::Autonomous(h) => Some(h),
            Field::Ramp { h1, h2, ramp } => {
                if backward && t <= 0.0 {
                    Some(h1)
                } else if !backward && t >= *ramp {
                    Some(h2)
                } else {
                    None
                }
            }
        }
    }
}

/// Integration request shared by the public entry points and the shooting code.
pub(crate) struct Run<'a> {
    pub model: &'a SpectrumSpec,
    pub field: Field<'a>,
    pub t0: f64,
    pub controls: &'a FlowControls,
    /// Coordinates held at zero (a symmetry-fixed subspace).
    pub zero_coords: &'a [usize],
    pub bound: Option<f64>,
    pub kernel_tol: f64,
}

impl Run<'_> {
    /// Integrates from `x0`; `observe(t, x)` may stop the run early.
    pub fn integrate(
        &self,
        x0: &[f64],
        mut observe: impl FnMut(f64, &[f64]) -> ControlFlow<()>,
    ) -> Result<Trajectory> {
        self.controls.validate()?;
        let model = self.model;
        let c = self.controls;
        let n = x0.len();
        let metric = model.metric_diag();
        let h = if c.backward { -c.dt } else { c.dt };
        let steps = (c.t_max / c.dt).ceil() as usize;

        let mut x = x0.to_vec();
        for &k in self.zero_coords {
            x[k] = 0.0;
        }
        let mut t = self.t0;
        let mut action = 0.0;
        let mut max_norm = model.g_norm(&x);
        let mut traj = Trajectory {
            times: Vec::new(),
            states: Vec::new(),
            energies: Vec::new(),
            action: 0.0,
            max_norm,
            limit: Limit::Undecided,
        };
        let record = |traj: &mut Trajectory, t: f64, x: &[f64]| {
            traj.times.push(t);
            traj.states.push(PointZ::from_real(x));
            traj.energies.push(self.field.energy(model, t, x));
        };
        if c.record_every > 0 {
            record(&mut traj, t, &x);
        }

        // Velocity of the descending field and its squared metric norm.
        let velocity = |t: f64, x: &[f64], d: &mut Vec<f64>, v: &mut Vec<f64>| -> f64 {
            self.field.differential(model, t, x, d);
            let mut nrm = 0.0;
            for k in 0..n {
                v[k] = -d[k] / metric[k];
                if c.freeze_lambda && k == n - 1 {
                    v[k] = 0.0;
                }
                nrm += metric[k] * v[k] * v[k];
            }
            for &k in self.zero_coords {
                v[k] = 0.0;
            }
            nrm
        };

        let mut d = vec![0.0; n];
        let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut tmp = vec![0.0; n];
        let mut limit = Limit::Undecided;
        let mut stopped_at = None;
        for step in 0..steps {
            let n1 = velocity(t, &x, &mut d, &mut k1);
            if let Some(ham) = self.field.frozen(t, c.backward) {
                let defect = d.iter().zip(&metric).map(|(v, g)| v * v / g).sum::<f64>().sqrt();
                if defect < c.conv_tol {
                    let point = crate::critical::CriticalPoint::classify_lenient(
                        model,
                        ham,
                        &PointZ::from_real(&x),
                        self.kernel_tol,
                    );
                    limit = Limit::ConvergedTo { point: Box::new(point) };
                    stopped_at = Some(step);
                    break;
                }
            }
            if observe(t, &x).is_break() {
                stopped_at = Some(step);
                break;
            }
            for k in 0..n {
                tmp[k] = x[k] + 0.5 * h * k1[k];
            }
            let n2 = velocity(t + 0.5 * h, &tmp, &mut d, &mut k2);
            for k in 0..n {
                tmp[k] = x[k] + 0.5 * h * k2[k];
            }
            let n3 = velocity(t + 0.5 * h, &tmp, &mut d, &mut k3);
            for k in 0..n {
                tmp[k] = x[k] + h * k3[k];
            }
            let n4 = velocity(t + h, &tmp, &mut d, &mut k4);
            for k in 0..n {
                x[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
            }
            action += h.abs() / 6.0 * (n1 + 2.0 * n2 + 2.0 * n3 + n4);
            t += h;

            let norm = model.g_norm(&x);
            if !norm.is_finite() {
                limit = Limit::Escaped;
                stopped_at = Some(step);
                break;
            }
            max_norm = max_norm.max(norm);
            if c.record_every > 0 && (step + 1) % c.record_every == 0 && step + 1 < steps {
                record(&mut traj, t, &x);
            }
            if let Some(bound) = self.bound {
                if norm > bound {
                    limit = Limit::BoundExceeded { max_norm };
                    stopped_at = Some(step);
                    break;
                }
            }
            if norm > c.escape {
                limit = Limit::Escaped;
                stopped_at = Some(step);
                break;
            }
            if let Some(floor) = c.energy_floor {
                if self.field.energy(model, t, &x) < floor {
                    limit = Limit::BelowFloor;
                    stopped_at = Some(step);
                    break;
                }
            }
        }
        if stopped_at.is_none() {
            let _ = observe(t, &x);
        }
        if x.iter().all(|v| v.is_finite()) && traj.times.last() != Some(&t) {
            if c.record_every > 0 {
                record(&mut traj, t, &x);
            } else {
                traj.times.push(t);
                traj.states.push(PointZ::from_real(&x));
                traj.energies.push(self.field.energy(model, t, &x));
            }
        }
        traj.action = action;
        traj.max_norm = max_norm;
        traj.limit = limit;
        Ok(traj)
    }
}

/// Descending (or, with `controls.backward`, ascending) autonomous flow.
pub fn integrate_descending(
    model: &SpectrumSpec,
    ham: &Hamiltonian,
    z0: &PointZ,
    controls: &FlowControls,
) -> Result<Trajectory> {
    model.check_len(&z0.u)?;
    let run = Run {
        model,
        field: Field::Autonomous(ham),
        t0: 0.0,
        controls,
        zero_coords: &[],
        bound: None,
        kernel_tol: 1e-7,
    };
    run.integrate(z0.to_real().as_slice(), |_, _| ControlFlow::Continue(()))
}

/// Nonautonomous flow of `E_{H_t}` with `H_t = (1 - eta) H_1 + eta H_2`,
/// `eta = smoothstep((t - t0) / ramp)`, started at time `t0`. The run stops
/// with [`Limit::BoundExceeded`] once `|z|` passes `bound`.
pub fn integrate_nonautonomous(
    model: &SpectrumSpec,
    ham1: &Hamiltonian,
    ham2: &Hamiltonian,
    z0: &PointZ,
    controls: &FlowControls,
    ramp: f64,
    bound: f64,
) -> Result<Trajectory> {
    model.check_len(&z0.u)?;
    if ramp.is_nan() || ramp <= 0.0 {
        return Err(Error::Config("ramp duration must be positive".into()));
    }
    let run = Run {
        model,
        field: Field::Ramp { h1: ham1, h2: ham2, ramp },
        t0: 0.0,
        controls,
        zero_coords: &[],
        bound: Some(bound),
        kernel_tol: 1e-7,
    };
    run.integrate(z0.to_real().as_slice(), |_, _| ControlFlow::Continue(()))
}

/// Closed-form flow of the quadratic case for a prescribed multiplier path:
/// `a_i(t) = a_i(0) exp(int_0^t (lambda(s) - mu_i) / |mu_i| ds)`.
pub fn linear_closed_form_flow(
    model: &SpectrumSpec,
    a0: &FieldCoeffs,
    lambda_path: &dyn Fn(f64) -> f64,
    t: f64,
) -> Result<FieldCoeffs> {
    model.check_len(a0)?;
    // Composite Simpson rule for int_0^t lambda; exact for polynomial paths of degree <= 3.
    let n = 2000;
    let h = t / n as f64;
    let mut integral = lambda_path(0.0) + lambda_path(t);
    for j in 1..n {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        integral += w * lambda_path(j as f64 * h);
    }
    integral *= h / 3.0;
    Ok(FieldCoeffs(
        a0.0.iter()
            .zip(model.eigenvalues())
            .map(|(a, mu)| a * ((integral - mu * t) / mu.abs()).exp())
            .collect(),
    ))
}

/// `G`-orthonormal basis of the negative space of the Hessian pencil.
pub fn unstable_frame(
    model: &SpectrumSpec,
    ham: &Hamiltonian,
    cp: &CriticalPoint,
    kernel_tol: f64,
) -> Result<Vec<DVector<f64>>> {
    let form = hessian_form(model, ham, &cp.z)?;
    let pencil = Pencil::of(&form);
    let (_, zero, _) = pencil.inertia(kernel_tol);
    if zero > usize::from(ham.is_s1_invariant()) {
        return Err(Error::NotMorse(format!("kernel of dimension {zero} beyond the symmetry direction")));
    }
    Ok(pencil.negative_frame(kernel_tol))
}

/// Per-mode multiplier of the fundamental solution of the linear system
/// `a' = -sign(mu) a + f`: the bounded solution is `a = int K(t - s) f(s) ds`
/// with `K(tau) = e^{-tau}` on positive modes for `tau >= 0` and
/// `K(tau) = -e^{tau}` on negative modes for `tau < 0`.
pub fn fundamental_kernel(model: &SpectrumSpec, tau: f64) -> Vec<f64> {
    model
        .eigenvalues()
        .iter()
        .map(|&mu| {
            if mu > 0.0 && tau >= 0.0 {
                (-tau).exp()
            } else if mu < 0.0 && tau < 0.0 {
                -(tau.exp())
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::{linear_point, CriticalPoint};
    use crate::functional::energy;
    use crate::hamiltonian::HamiltonianSpec;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn model() -> SpectrumSpec {
        SpectrumSpec::circle(2, 32).unwrap()
    }

    #[test]
    fn critical_point_is_stationary() {
        let m = model();
        let h = HamiltonianSpec::Quadratic.bind(&m).unwrap();
        let z = linear_point(&m, 3);
        // Short horizon: rounding errors grow along the unstable directions.
        let c = FlowControls { t_max: 3.0, conv_tol: 1e-20, ..Default::default() };
        let tr = integrate_descending(&m, &h, &z, &c).unwrap();
        for s in &tr.states {
            let d = m.g_distance(s, &z);
            assert!(d < 1e-10, "{d}");
        }
    }

    #[test]
    fn frozen_multiplier_single_mode() {
        let m = model();
        let h = HamiltonianSpec::Quadratic.bind(&m).unwrap();
        let z = PointZ::new(FieldCoeffs::basis(4, 3, Complex64::new(0.3, 0.0)), 0.5);
        let c = FlowControls { dt: 1e-3, t_max: 3.0, freeze_lambda: true, record_every: 0, ..Default::default() };
        let tr = integrate_descending(&m, &h, &z, &c).unwrap();
        let expected = 0.3 * (-2.0f64).exp();
        assert_abs_diff_eq!(tr.final_state().u.0[3].re, expected, epsilon = 1e-6);
        let closed = linear_closed_form_flow(&m, &z.u, &|_| 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(closed.0[3].re, 0.3 * (-2.0f64 / 3.0).exp(), epsilon = 1e-14);
        let still = linear_closed_form_flow(&m, &z.u, &|_| 1.5, 2.0).unwrap();
        assert_abs_diff_eq!(still.0[3].re, 0.3, epsilon = 1e-14);
    }

    #[test]
    fn energy_decreases_and_action_is_bounded() {
        let m = model();
        let h = HamiltonianSpec::power(3.0, 1.0).bind(&m).unwrap();
        let z = PointZ::new(FieldCoeffs(vec![Complex64::new(0.1, 0.2), Complex64::new(-0.3, 0.1), Complex64::new(0.9, 0.0), Complex64::new(0.2, -0.4)]), 0.7);
        let c = FlowControls { dt: 1e-2, t_max: 3.0, ..Default::default() };
        let tr = integrate_descending(&m, &h, &z, &c).unwrap();
        assert!(tr.max_energy_increase() <= 1e-8);
        let de = tr.energies[0] - tr.energies[tr.energies.len() - 1];
        assert!(tr.action <= de + 1e-6);
        assert_abs_diff_eq!(tr.energies[0], energy(&m, &h, &z).unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn identical_ramp_matches_autonomous_flow() {
        let m = model();
        let h = HamiltonianSpec::power(3.0, 1.0).bind(&m).unwrap();
        let z = PointZ::new(FieldCoeffs::from_real(&[0.1, 0.2, 0.8, 0.1]), 0.4);
        let c = FlowControls { dt: 1e-2, t_max: 2.0, ..Default::default() };
        let a = integrate_descending(&m, &h, &z, &c).unwrap();
        let b = integrate_nonautonomous(&m, &h, &h, &z, &c, 1.0, 1e3).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!(m.g_distance(x, y) < 1e-13);
        }
    }

    #[test]
    fn bound_monitor_triggers() {
        let m = model();
        let h1 = HamiltonianSpec::Quadratic.bind(&m).unwrap();
        let h2 = HamiltonianSpec::power(3.0, 1e-6).bind(&m).unwrap();
        let z = CriticalPoint::classify(&m, &h1, &linear_point(&m, 2), 1e-7).unwrap().z;
        let c = FlowControls { dt: 1e-2, t_max: 30.0, ..Default::default() };
        let tr = integrate_nonautonomous(&m, &h1, &h2, &z, &c, 1.0, 5.0).unwrap();
        assert!(matches!(tr.limit, Limit::BoundExceeded { .. }), "{:?} {}", tr.limit, tr.max_norm);
    }

    #[test]
    fn unstable_frame_dimension() {
        let m = model();
        let h = HamiltonianSpec::Quadratic.bind(&m).unwrap();
        let cp = CriticalPoint::classify(&m, &h, &linear_point(&m, 2), 1e-7).unwrap();
        assert_eq!(unstable_frame(&m, &h, &cp, 1e-7).unwrap().len(), 5);
    }

    #[test]
    fn fundamental_kernel_reconstructs_bounded_solution() {
        // a' = -sign(mu) a + f with f(s) = exp(-s^2): the convolution with the
        // kernel must satisfy the equation pointwise.
        let m = model();
        let f = |s: f64| (-s * s).exp();
        // Midpoint rule on each side of s = t, so the jump of K at 0 is never sampled.
        let conv = |t: f64| -> Vec<f64> {
            let n = 20000;
            let h = 12.0 / n as f64;
            let mut acc = vec![0.0; 4];
            for j in 0..n {
                let off = (j as f64 + 0.5) * h;
                for s in [t - off, t + off] {
                    for (a, k) in acc.iter_mut().zip(fundamental_kernel(&m, t - s)) {
                        *a += h * k * f(s);
                    }
                }
            }
            acc
        };
        let t = 0.3;
        let e = 1e-3;
        let (up, mid, down) = (conv(t + e), conv(t), conv(t - e));
        for i in 0..4 {
            let deriv = (up[i] - down[i]) / (2.0 * e);
            let sign = m.eigenvalues()[i].signum();
            assert_abs_diff_eq!(deriv, -sign * mid[i] + f(t), epsilon = 1e-3);
        }
    }
}
