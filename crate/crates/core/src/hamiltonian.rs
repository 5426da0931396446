//! Nonlinearities `H(x, s)`, their spinor gradient `h = dH/ds` and the
//! Jacobian of `h`, plus an empirical checker for the growth hypotheses.
//!
//! A [`HamiltonianSpec`] is a plain description; [`HamiltonianSpec::bind`]
//! samples everything that depends on the grid (weights, perturbation
//! profiles) and returns a [`Hamiltonian`] that evaluates per node.
//!
//! Spinor values are real 2-vectors for the purpose of differentiation, so
//! `h` is the Euclidean gradient and the Jacobian is a real 2x2 matrix.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{FieldCoeffs, SpectrumSpec};

/// Real 2x2 matrix, row-major.
pub type Mat2 = [[f64; 2]; 2];

/// Power coefficient: one value for every node, or one per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weights {
    Uniform(f64),
    PerNode(Vec<f64>),
}

impl Default for Weights {
    fn default() -> Self {
        Weights::Uniform(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HamiltonianSpec {
    /// `|s|^2 / 2`.
    Quadratic,
    /// `c(x) |s|^{p+1} / (p+1)`.
    Power {
        p: f64,
        #[serde(default)]
        c: Weights,
    },
    /// `(1 - eta(t)) left + eta(t) right` with `eta` the clamped smoothstep.
    Mixture {
        t: f64,
        left: Box<HamiltonianSpec>,
        right: Box<HamiltonianSpec>,
    },
    /// `base + delta Re(conj(chi(x)) s)`. `chi` defaults to the field whose
    /// coefficients are all one.
    LinearBreak {
        delta: f64,
        #[serde(default)]
        chi: Option<FieldCoeffs>,
        base: Box<HamiltonianSpec>,
    },
    /// `base + delta Re(conj(omega(x)) s^2)` with
    /// `omega = sum_m exp(2 i f_m x)` over all modes, or only `axis` if set.
    /// Invariant under `s -> -s` but not under general phase rotations.
    EvenBreak {
        delta: f64,
        #[serde(default)]
        axis: Option<usize>,
        base: Box<HamiltonianSpec>,
    },
}

/// Clamped smoothstep `3t^2 - 2t^3`.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Largest admissible power for a synthetic base dimension `n`
/// (`(n+1)/(n-1)`, infinite for `n <= 1`).
pub fn subcritical_bound(n: usize) -> f64 {
    if n <= 1 {
        f64::INFINITY
    } else {
        (n as f64 + 1.0) / (n as f64 - 1.0)
    }
}

impl HamiltonianSpec {
    pub fn power(p: f64, c: f64) -> Self {
        HamiltonianSpec::Power { p, c: Weights::Uniform(c) }
    }

    pub fn mixture(t: f64, left: HamiltonianSpec, right: HamiltonianSpec) -> Self {
        HamiltonianSpec::Mixture { t, left: Box::new(left), right: Box::new(right) }
    }

    pub fn linear_break(delta: f64, base: HamiltonianSpec) -> Self {
        HamiltonianSpec::LinearBreak { delta, chi: None, base: Box::new(base) }
    }

    pub fn even_break(delta: f64, axis: Option<usize>, base: HamiltonianSpec) -> Self {
        HamiltonianSpec::EvenBreak { delta, axis, base: Box::new(base) }
    }

    /// Drops every symmetry-breaking wrapper.
    pub fn without_breaks(&self) -> HamiltonianSpec {
        match self {
            HamiltonianSpec::LinearBreak { base, .. } | HamiltonianSpec::EvenBreak { base, .. } => {
                base.without_breaks()
            }
            HamiltonianSpec::Mixture { t, left, right } => HamiltonianSpec::Mixture {
                t: *t,
                left: Box::new(left.without_breaks()),
                right: Box::new(right.without_breaks()),
            },
            other => other.clone(),
        }
    }

    /// True when the unbroken part is exactly `|s|^2/2`.
    pub fn is_quadratic_base(&self) -> bool {
        match self.without_breaks() {
            HamiltonianSpec::Quadratic => true,
            HamiltonianSpec::Mixture { t, left, right } => {
                let eta = smoothstep(t);
                (eta == 0.0 || right.is_quadratic_base()) && (eta == 1.0 || left.is_quadratic_base())
            }
            _ => false,
        }
    }

    /// Rejects power exponents at or above the subcritical bound of a
    /// synthetic dimension `n`.
    pub fn validate_for_dimension(&self, n: usize) -> Result<()> {
        let bound = subcritical_bound(n);
        match self {
            HamiltonianSpec::Power { p, .. } if *p >= bound => Err(Error::Config(format!(
                "power p = {p} is not subcritical for dimension {n} (need p < {bound})"
            ))),
            HamiltonianSpec::Mixture { left, right, .. } => {
                left.validate_for_dimension(n)?;
                right.validate_for_dimension(n)
            }
            HamiltonianSpec::LinearBreak { base, .. } | HamiltonianSpec::EvenBreak { base, .. } => {
                base.validate_for_dimension(n)
            }
            _ => Ok(()),
        }
    }

    /// Samples the description on the grid of `model`.
    pub fn bind(&self, model: &SpectrumSpec) -> Result<Hamiltonian> {
        let kind = self.bind_kind(model)?;
        Ok(Hamiltonian { spec: self.clone(), kind, n_nodes: model.grid_size() })
    }

    fn bind_kind(&self, model: &SpectrumSpec) -> Result<Kind> {
        let q = model.grid_size();
        Ok(match self {
            HamiltonianSpec::Quadratic => Kind::Quadratic,
            HamiltonianSpec::Power { p, c } => {
                if !(p.is_finite() && *p > 1.0) {
                    return Err(Error::Config(format!("power exponent must satisfy p > 1, got {p}")));
                }
                let c = match c {
                    Weights::Uniform(v) => vec![*v; q],
                    Weights::PerNode(v) => {
                        if v.len() != q {
                            return Err(Error::Config(format!(
                                "per-node weights have length {}, grid has {q} nodes",
                                v.len()
                            )));
                        }
                        v.clone()
                    }
                };
                if c.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::Config("power weights must be finite and strictly positive".into()));
                }
                Kind::Power { p: *p, c }
            }
            HamiltonianSpec::Mixture { t, left, right } => {
                if !(0.0..=1.0).contains(t) {
                    return Err(Error::Config(format!("mixture parameter t = {t} is outside [0, 1]")));
                }
                Kind::Mixture {
                    eta: smoothstep(*t),
                    left: Box::new(left.bind_kind(model)?),
                    right: Box::new(right.bind_kind(model)?),
                }
            }
            HamiltonianSpec::LinearBreak { delta, chi, base } => {
                check_delta(*delta)?;
                let coeffs = match chi {
                    Some(c) => {
                        model.check_len(c)?;
                        if !c.is_finite() {
                            return Err(Error::NonFinite("break profile".into()));
                        }
                        c.clone()
                    }
                    None => FieldCoeffs::from_real(&vec![1.0; model.n_modes()]),
                };
                Kind::LinearBreak {
                    delta: *delta,
                    chi: model.evaluate_on_grid(&coeffs)?,
                    base: Box::new(base.bind_kind(model)?),
                }
            }
            HamiltonianSpec::EvenBreak { delta, axis, base } => {
                check_delta(*delta)?;
                let freqs: Vec<f64> = match axis {
                    Some(m) if *m >= model.n_modes() => {
                        return Err(Error::Config(format!(
                            "break axis mode {m} out of range (model has {} modes)",
                            model.n_modes()
                        )))
                    }
                    Some(m) => vec![model.frequencies()[*m]],
                    None => model.frequencies().to_vec(),
                };
                let omega = model
                    .nodes()
                    .iter()
                    .map(|&x| freqs.iter().map(|f| Complex64::from_polar(1.0, 2.0 * f * x)).sum())
                    .collect();
                Kind::EvenBreak { delta: *delta, omega, base: Box::new(base.bind_kind(model)?) }
            }
        })
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() {
        Ok(())
    } else {
        Err(Error::Config("perturbation strength must be finite".into()))
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Quadratic,
    Power { p: f64, c: Vec<f64> },
    Mixture { eta: f64, left: Box<Kind>, right: Box<Kind> },
    LinearBreak { delta: f64, chi: Vec<Complex64>, base: Box<Kind> },
    EvenBreak { delta: f64, omega: Vec<Complex64>, base: Box<Kind> },
}

impl Kind {
    fn value(&self, s: Complex64, q: usize) -> f64 {
        match self {
            Kind::Quadratic => 0.5 * s.norm_sqr(),
            Kind::Power { p, c } => c[q] * s.norm().powf(p + 1.0) / (p + 1.0),
            Kind::Mixture { eta, left, right } => mix(*eta, || left.value(s, q), || right.value(s, q)),
            Kind::LinearBreak { delta, chi, base } => base.value(s, q) + delta * (chi[q].conj() * s).re,
            Kind::EvenBreak { delta, omega, base } => base.value(s, q) + delta * (omega[q].conj() * s * s).re,
        }
    }

    fn grad(&self, s: Complex64, q: usize) -> Complex64 {
        match self {
            Kind::Quadratic => s,
            Kind::Power { p, c } => {
                let r = s.norm();
                if r == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    s * (c[q] * r.powf(p - 1.0))
                }
            }
            Kind::Mixture { eta, left, right } => {
                if *eta == 0.0 {
                    left.grad(s, q)
                } else if *eta == 1.0 {
                    right.grad(s, q)
                } else {
                    left.grad(s, q) * (1.0 - eta) + right.grad(s, q) * *eta
                }
            }
            Kind::LinearBreak { delta, chi, base } => base.grad(s, q) + chi[q] * *delta,
            Kind::EvenBreak { delta, omega, base } => base.grad(s, q) + omega[q] * s.conj() * (2.0 * delta),
        }
    }

    fn jacobian(&self, s: Complex64, q: usize) -> Mat2 {
        match self {
            Kind::Quadratic => [[1.0, 0.0], [0.0, 1.0]],
            Kind::Power { p, c } => {
                let r = s.norm();
                if r == 0.0 {
                    return [[0.0; 2]; 2];
                }
                let k = c[q] * r.powf(p - 1.0);
                let (x, y) = (s.re / r, s.im / r);
                let w = p - 1.0;
                [[k * (1.0 + w * x * x), k * w * x * y], [k * w * x * y, k * (1.0 + w * y * y)]]
            }
            Kind::Mixture { eta, left, right } => {
                if *eta == 0.0 {
                    left.jacobian(s, q)
                } else if *eta == 1.0 {
                    right.jacobian(s, q)
                } else {
                    let (l, r) = (left.jacobian(s, q), right.jacobian(s, q));
                    let mut out = [[0.0; 2]; 2];
                    for i in 0..2 {
                        for j in 0..2 {
                            out[i][j] = (1.0 - eta) * l[i][j] + eta * r[i][j];
                        }
                    }
                    out
                }
            }
            Kind::LinearBreak { base, .. } => base.jacobian(s, q),
            Kind::EvenBreak { delta, omega, base } => {
                let mut j = base.jacobian(s, q);
                let (a, b) = (omega[q].re, omega[q].im);
                j[0][0] += 2.0 * delta * a;
                j[0][1] += 2.0 * delta * b;
                j[1][0] += 2.0 * delta * b;
                j[1][1] -= 2.0 * delta * a;
                j
            }
        }
    }

    fn growth_exponent(&self) -> f64 {
        match self {
            Kind::Quadratic => 1.0,
            Kind::Power { p, .. } => *p,
            Kind::Mixture { eta, left, right } => {
                if *eta == 0.0 {
                    left.growth_exponent()
                } else if *eta == 1.0 {
                    right.growth_exponent()
                } else {
                    left.growth_exponent().max(right.growth_exponent())
                }
            }
            Kind::LinearBreak { base, .. } | Kind::EvenBreak { base, .. } => base.growth_exponent(),
        }
    }

    fn is_s1_invariant(&self) -> bool {
        match self {
            Kind::Quadratic | Kind::Power { .. } => true,
            Kind::Mixture { left, right, .. } => left.is_s1_invariant() && right.is_s1_invariant(),
            Kind::LinearBreak { delta, base, .. } | Kind::EvenBreak { delta, base, .. } => {
                *delta == 0.0 && base.is_s1_invariant()
            }
        }
    }

    fn is_even(&self) -> bool {
        match self {
            Kind::Quadratic | Kind::Power { .. } => true,
            Kind::Mixture { left, right, .. } => left.is_even() && right.is_even(),
            Kind::LinearBreak { delta, base, .. } => *delta == 0.0 && base.is_even(),
            Kind::EvenBreak { base, .. } => base.is_even(),
        }
    }
}

/// Affine combination that returns the pure endpoint exactly when `eta` is 0 or 1.
fn mix(eta: f64, left: impl Fn() -> f64, right: impl Fn() -> f64) -> f64 {
    if eta == 0.0 {
        left()
    } else if eta == 1.0 {
        right()
    } else {
        (1.0 - eta) * left() + eta * right()
    }
}

/// A Hamiltonian sampled on a specific grid.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    spec: HamiltonianSpec,
    kind: Kind,
    n_nodes: usize,
}

impl Hamiltonian {
    pub fn spec(&self) -> &HamiltonianSpec {
        &self.spec
    }

    fn check(s: Complex64) -> Result<()> {
        if s.re.is_finite() && s.im.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("spinor value {s}")))
        }
    }

    /// `H(x_q, s)`.
    pub fn h_value(&self, s: Complex64, q: usize) -> Result<f64> {
        Self::check(s)?;
        Ok(self.kind.value(s, q))
    }

    /// `h(x_q, s)`, the gradient of `H` in the real components of `s`.
    pub fn h_grad(&self, s: Complex64, q: usize) -> Result<Complex64> {
        Self::check(s)?;
        Ok(self.kind.grad(s, q))
    }

    /// Derivative of `h` as a real 2x2 matrix.
    pub fn h_jacobian(&self, s: Complex64, q: usize) -> Result<Mat2> {
        Self::check(s)?;
        Ok(self.kind.jacobian(s, q))
    }

    pub(crate) fn value_unchecked(&self, s: Complex64, q: usize) -> f64 {
        self.kind.value(s, q)
    }

    pub(crate) fn grad_unchecked(&self, s: Complex64, q: usize) -> Complex64 {
        self.kind.grad(s, q)
    }

    pub(crate) fn jacobian_unchecked(&self, s: Complex64, q: usize) -> Mat2 {
        self.kind.jacobian(s, q)
    }

    /// `int H(x, u)` by quadrature.
    pub fn total_h(&self, model: &SpectrumSpec, u: &FieldCoeffs) -> Result<f64> {
        let vals = model.evaluate_on_grid(u)?;
        if vals.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite("field values".into()));
        }
        Ok(vals
            .iter()
            .zip(model.quad_weights())
            .enumerate()
            .map(|(q, (s, w))| w * self.kind.value(*s, q))
            .sum())
    }

    /// Invariant under `s -> e^{i theta} s` at every node.
    pub fn is_s1_invariant(&self) -> bool {
        self.kind.is_s1_invariant()
    }

    /// Invariant under `s -> -s`.
    pub fn is_even(&self) -> bool {
        self.kind.is_even()
    }

    /// Nominal growth exponent `p` of the dominant term.
    pub fn growth_exponent(&self) -> f64 {
        self.kind.growth_exponent()
    }

    /// Samples `|s|` on a logarithmic grid up to `sample_range` (over all
    /// nodes and eight phases) and fits the constants of the growth
    /// hypotheses
    ///
    /// * `|dh/ds| <= C (1 + |s|^{p-1})`,
    /// * `<h, s> - H >= c1 |s|^{p+1} - c2`.
    ///
    /// The second check also requires `p > 1` and a log-log tail slope of
    /// `<h, s> - H` of at least `p + 1`; the quadratic case fails it.
    pub fn verify_growth(&self, sample_range: f64) -> Result<GrowthReport> {
        let n_nodes = self.n_nodes;
        if !(sample_range.is_finite() && sample_range > 0.0) {
            return Err(Error::Config("sample_range must be positive".into()));
        }
        const RADII: usize = 200;
        const PHASES: usize = 8;
        let p = self.kind.growth_exponent();
        let r_min = sample_range * 1e-4;
        let r0 = sample_range * 1e-2;
        let radii: Vec<f64> = (0..RADII)
            .map(|k| r_min * (sample_range / r_min).powf(k as f64 / (RADII - 1) as f64))
            .collect();

        // g(r) minimized over nodes and phases, and the H1 ratio maximized.
        let mut g_min = vec![f64::INFINITY; RADII];
        let mut big_c: f64 = 0.0;
        for (k, &r) in radii.iter().enumerate() {
            for q in 0..n_nodes {
                for j in 0..PHASES {
                    let s = Complex64::from_polar(r, 2.0 * std::f64::consts::PI * j as f64 / PHASES as f64);
                    let h = self.kind.grad(s, q);
                    let g = h.re * s.re + h.im * s.im - self.kind.value(s, q);
                    g_min[k] = g_min[k].min(g);
                    let jac = self.kind.jacobian(s, q);
                    big_c = big_c.max(spectral_norm(&jac) / (1.0 + r.powf(p - 1.0)));
                }
            }
        }

        let tail = RADII - RADII / 10;
        let tail_slope = if g_min[tail] > 0.0 && g_min[RADII - 1] > 0.0 {
            (g_min[RADII - 1] / g_min[tail]).ln() / (radii[RADII - 1] / radii[tail]).ln()
        } else {
            f64::NEG_INFINITY
        };
        let exponent_ok = p > 1.0 && tail_slope >= p + 1.0 - 1e-6;

        let (c1, c2) = if exponent_ok {
            let c1 = radii
                .iter()
                .zip(&g_min)
                .filter(|(r, _)| **r >= r0)
                .map(|(r, g)| g / r.powf(p + 1.0))
                .fold(f64::INFINITY, f64::min)
                .max(0.0);
            let c2 = radii
                .iter()
                .zip(&g_min)
                .map(|(r, g)| c1 * r.powf(p + 1.0) - g)
                .fold(0.0, f64::max);
            (c1, c2)
        } else {
            (0.0, g_min.iter().map(|g| -g).fold(0.0, f64::max))
        };

        Ok(GrowthReport {
            p,
            c1,
            c2,
            big_c,
            r0,
            sample_range,
            tail_slope,
            h1_holds: big_c.is_finite(),
            h2_holds: exponent_ok && c1 > 0.0,
        })
    }
}

fn spectral_norm(m: &Mat2) -> f64 {
    // Largest singular value of a 2x2 matrix.
    let a = m[0][0] * m[0][0] + m[1][0] * m[1][0];
    let d = m[0][1] * m[0][1] + m[1][1] * m[1][1];
    let b = m[0][0] * m[0][1] + m[1][0] * m[1][1];
    let tr = a + d;
    let disc = ((a - d) * (a - d) + 4.0 * b * b).sqrt();
    (0.5 * (tr + disc)).sqrt()
}

/// Outcome of [`Hamiltonian::verify_growth`]. A failed hypothesis is a
/// report, not an error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub p: f64,
    pub c1: f64,
    pub c2: f64,
    pub big_c: f64,
    pub r0: f64,
    pub sample_range: f64,
    pub tail_slope: f64,
    pub h1_holds: bool,
    pub h2_holds: bool,
}

impl GrowthReport {
    pub fn conforming(&self) -> bool {
        self.h1_holds && self.h2_holds
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn model() -> SpectrumSpec {
        SpectrumSpec::circle(2, 32).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn quadratic_values() {
        let h = HamiltonianSpec::Quadratic.bind(&model()).unwrap();
        assert_eq!(h.h_value(c(3.0, 4.0), 0).unwrap(), 12.5);
        assert_eq!(h.h_grad(c(3.0, 4.0), 0).unwrap(), c(3.0, 4.0));
        assert_eq!(h.h_jacobian(c(3.0, 4.0), 0).unwrap(), [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn power_values_at_one() {
        let h = HamiltonianSpec::power(3.0, 1.0).bind(&model()).unwrap();
        assert_abs_diff_eq!(h.h_value(c(1.0, 0.0), 3).unwrap(), 0.25, epsilon = 1e-15);
        assert_eq!(h.h_grad(c(1.0, 0.0), 3).unwrap(), c(1.0, 0.0));
        let j = h.h_jacobian(c(1.0, 0.0), 3).unwrap();
        assert_abs_diff_eq!(j[0][0], 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(j[1][1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(j[0][1], 0.0, epsilon = 1e-15);
        assert_eq!(h.h_jacobian(c(0.0, 0.0), 0).unwrap(), [[0.0; 2]; 2]);
    }

    #[test]
    fn mixture_endpoints_are_exact() {
        let m = model();
        let left = HamiltonianSpec::Quadratic;
        let right = HamiltonianSpec::power(3.0, 2.0);
        let h0 = HamiltonianSpec::mixture(0.0, left.clone(), right.clone()).bind(&m).unwrap();
        let h1 = HamiltonianSpec::mixture(1.0, left.clone(), right.clone()).bind(&m).unwrap();
        let l = left.bind(&m).unwrap();
        let r = right.bind(&m).unwrap();
        for s in [c(0.3, -1.2), c(2.0, 0.5)] {
            assert_eq!(h0.h_value(s, 1).unwrap(), l.h_value(s, 1).unwrap());
            assert_eq!(h0.h_grad(s, 1).unwrap(), l.h_grad(s, 1).unwrap());
            assert_eq!(h1.h_value(s, 1).unwrap(), r.h_value(s, 1).unwrap());
            assert_eq!(h1.h_jacobian(s, 1).unwrap(), r.h_jacobian(s, 1).unwrap());
        }
        assert_eq!(smoothstep(0.5), 0.5);
        assert_eq!(smoothstep(-1.0), 0.0);
        assert_eq!(smoothstep(2.0), 1.0);
    }

    #[test]
    fn nan_input_is_rejected() {
        let h = HamiltonianSpec::Quadratic.bind(&model()).unwrap();
        assert!(matches!(h.h_value(c(f64::NAN, 0.0), 0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let m = model();
        assert!(HamiltonianSpec::power(1.0, 1.0).bind(&m).is_err());
        assert!(HamiltonianSpec::power(3.0, -1.0).bind(&m).is_err());
        let bad_len = HamiltonianSpec::Power { p: 3.0, c: Weights::PerNode(vec![1.0; 5]) };
        assert!(bad_len.bind(&m).is_err());
        assert!(HamiltonianSpec::mixture(1.5, HamiltonianSpec::Quadratic, HamiltonianSpec::Quadratic)
            .bind(&m)
            .is_err());
        assert!(HamiltonianSpec::even_break(0.1, Some(9), HamiltonianSpec::Quadratic).bind(&m).is_err());
        assert!(HamiltonianSpec::power(3.0, 1.0).validate_for_dimension(1).is_ok());
        assert!(HamiltonianSpec::power(3.0, 1.0).validate_for_dimension(3).is_err());
        assert!(HamiltonianSpec::power(1.5, 1.0).validate_for_dimension(3).is_ok());
    }

    #[test]
    fn total_h_examples() {
        let m = model();
        let quad = HamiltonianSpec::Quadratic.bind(&m).unwrap();
        assert_eq!(quad.total_h(&m, &FieldCoeffs::zeros(4)).unwrap(), 0.0);
        let u = FieldCoeffs::basis(4, 2, c(2f64.sqrt(), 0.0));
        assert_abs_diff_eq!(quad.total_h(&m, &u).unwrap(), 1.0, epsilon = 1e-12);

        // |u|^2 = 2/(2 pi) everywhere, so int |u|^4/4 = 2 pi (1/pi^2)/4 = 1/(2 pi).
        let pow = HamiltonianSpec::power(3.0, 1.0).bind(&m).unwrap();
        assert_abs_diff_eq!(pow.total_h(&m, &u).unwrap(), 1.0 / (2.0 * PI), epsilon = 1e-12);
    }

    #[test]
    fn symmetry_flags() {
        let m = model();
        let quad = HamiltonianSpec::Quadratic;
        assert!(quad.bind(&m).unwrap().is_s1_invariant());
        let lin = HamiltonianSpec::linear_break(1e-3, quad.clone()).bind(&m).unwrap();
        assert!(!lin.is_s1_invariant() && !lin.is_even());
        let even = HamiltonianSpec::even_break(1e-3, None, quad.clone()).bind(&m).unwrap();
        assert!(!even.is_s1_invariant() && even.is_even());
        let s = c(0.7, -0.4);
        for q in 0..m.grid_size() {
            assert_abs_diff_eq!(even.h_value(-s, q).unwrap(), even.h_value(s, q).unwrap(), epsilon = 1e-15);
        }
        let mixed = HamiltonianSpec::mixture(0.3, quad, HamiltonianSpec::power(3.0, 1.0)).bind(&m).unwrap();
        assert!(mixed.is_s1_invariant());
    }

    #[test]
    fn growth_report_for_power() {
        let h = HamiltonianSpec::power(3.0, 1.0).bind(&model()).unwrap();
        let rep = h.verify_growth(10.0).unwrap();
        assert!(rep.h2_holds && rep.h1_holds);
        assert_abs_diff_eq!(rep.c1, 0.75, epsilon = 1e-12);
        assert!(rep.c2.abs() < 1e-9);
        assert!(rep.big_c <= 3.0 + 1e-12);
    }

    #[test]
    fn growth_report_for_quadratic_is_nonconforming() {
        let h = HamiltonianSpec::Quadratic.bind(&model()).unwrap();
        let rep = h.verify_growth(10.0).unwrap();
        assert!(!rep.h2_holds);
        assert!(!rep.conforming());
        assert_eq!(rep.c1, 0.0);
    }

    #[test]
    fn growth_report_mixture_at_one_matches_power() {
        let m = model();
        let pow = HamiltonianSpec::power(3.0, 1.0).bind(&m).unwrap();
        let mix = HamiltonianSpec::mixture(1.0, HamiltonianSpec::Quadratic, HamiltonianSpec::power(3.0, 1.0))
            .bind(&m)
            .unwrap();
        assert_eq!(pow.verify_growth(5.0).unwrap(), mix.verify_growth(5.0).unwrap());
    }
}
