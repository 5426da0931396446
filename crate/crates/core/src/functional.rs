//! The constrained energy, its gradient in the `H^{1/2} x R` metric, the
//! Hessian bilinear form and the relative index.
//!
//! Real coordinates of a point are `[Re a_0, Im a_0, ..., Re a_{M-1},
//! Im a_{M-1}, lambda]`. The metric `G` is diagonal with `|mu_i|` on both
//! components of mode `i` and `1` on `lambda`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::spectral::{FieldCoeffs, PointZ, SpectrumSpec};

/// `int H(x,u)` and the mode coefficients of the pointwise `h(x,u)`.
pub(crate) struct FieldTerms {
    pub total_h: f64,
    pub h_coeffs: Vec<Complex64>,
}

pub(crate) fn field_terms(model: &SpectrumSpec, ham: &Hamiltonian, coeffs: &[Complex64]) -> FieldTerms {
    let mut vals = vec![Complex64::new(0.0, 0.0); model.grid_size()];
    model.evaluate_into(coeffs, &mut vals);
    let mut total_h = 0.0;
    for (q, (v, w)) in vals.iter_mut().zip(model.quad_weights()).enumerate() {
        total_h += w * ham.value_unchecked(*v, q);
        *v = ham.grad_unchecked(*v, q);
    }
    let mut h_coeffs = vec![Complex64::new(0.0, 0.0); model.n_modes()];
    model.project_into(&vals, &mut h_coeffs);
    FieldTerms { total_h, h_coeffs }
}

fn check_point(model: &SpectrumSpec, z: &PointZ) -> Result<()> {
    model.check_len(&z.u)?;
    if !z.is_finite() {
        return Err(Error::NonFinite("point".into()));
    }
    Ok(())
}

/// `E(u, lambda) = 1/2 Re <Du, u> - lambda (int H(x,u) - 1)`.
pub fn energy(model: &SpectrumSpec, ham: &Hamiltonian, z: &PointZ) -> Result<f64> {
    check_point(model, z)?;
    Ok(energy_unchecked(model, ham, &z.u.0, z.lambda))
}

pub(crate) fn energy_unchecked(model: &SpectrumSpec, ham: &Hamiltonian, u: &[Complex64], lambda: f64) -> f64 {
    let quad: f64 = u.iter().zip(model.eigenvalues()).map(|(a, mu)| mu * a.norm_sqr()).sum();
    let mut vals = vec![Complex64::new(0.0, 0.0); model.grid_size()];
    model.evaluate_into(u, &mut vals);
    let total: f64 = vals
        .iter()
        .zip(model.quad_weights())
        .enumerate()
        .map(|(q, (v, w))| w * ham.value_unchecked(*v, q))
        .sum();
    0.5 * quad - lambda * (total - 1.0)
}

/// The differential `dE` in real coordinates (the gradient lowered by `G`).
pub(crate) fn differential_real(model: &SpectrumSpec, ham: &Hamiltonian, x: &[f64], out: &mut [f64]) {
    let m = model.n_modes();
    let coeffs: Vec<Complex64> = (0..m).map(|i| Complex64::new(x[2 * i], x[2 * i + 1])).collect();
    let lambda = x[2 * m];
    let terms = field_terms(model, ham, &coeffs);
    for (i, (a, mu)) in coeffs.iter().zip(model.eigenvalues()).enumerate() {
        let d = a * *mu - terms.h_coeffs[i] * lambda;
        out[2 * i] = d.re;
        out[2 * i + 1] = d.im;
    }
    out[2 * m] = -(terms.total_h - 1.0);
}

/// `G`-gradient as a tangent vector shaped like a point: mode `i` carries
/// `sign(mu_i) a_i - lambda h_i / |mu_i|`, the `lambda` slot `-(int H - 1)`.
pub fn gradient(model: &SpectrumSpec, ham: &Hamiltonian, z: &PointZ) -> Result<PointZ> {
    check_point(model, z)?;
    let mut d = vec![0.0; model.real_dim()];
    differential_real(model, ham, z.to_real().as_slice(), &mut d);
    for (v, g) in d.iter_mut().zip(model.metric_diag()) {
        *v /= g;
    }
    Ok(PointZ::from_real(&d))
}

/// Metric norm of the gradient; vanishes exactly at critical points.
pub fn ps_defect(model: &SpectrumSpec, ham: &Hamiltonian, z: &PointZ) -> Result<f64> {
    check_point(model, z)?;
    let mut d = vec![0.0; model.real_dim()];
    differential_real(model, ham, z.to_real().as_slice(), &mut d);
    Ok(dual_norm(model, &d))
}

/// `G^{-1}`-norm of a covector, equal to the metric norm of its raised vector.
pub(crate) fn dual_norm(model: &SpectrumSpec, d: &[f64]) -> f64 {
    d.iter().zip(model.metric_diag()).map(|(v, g)| v * v / g).sum::<f64>().sqrt()
}

/// The Hessian as a bilinear form in real coordinates together with the metric.
#[derive(Clone, Debug)]
pub struct HessianForm {
    pub b: DMatrix<f64>,
    pub g: DVector<f64>,
}

/// Assembles `B((v,nu),(w,omega)) = Re<Dv,w> - lambda int v^T (d^2 H)(u) w
/// - nu int Re<h(u),w> - omega int Re<h(u),v>` in real coordinates.
pub fn hessian_form(model: &SpectrumSpec, ham: &Hamiltonian, z: &PointZ) -> Result<HessianForm> {
    check_point(model, z)?;
    Ok(hessian_unchecked(model, ham, &z.u.0, z.lambda))
}

pub(crate) fn hessian_unchecked(model: &SpectrumSpec, ham: &Hamiltonian, u: &[Complex64], lambda: f64) -> HessianForm {
    let m = model.n_modes();
    let n = 2 * m + 1;
    let mut b = DMatrix::zeros(n, n);
    let mut vals = vec![Complex64::new(0.0, 0.0); model.grid_size()];
    model.evaluate_into(u, &mut vals);

    // Real 2-vectors of psi_i and i psi_i at each node.
    let basis = |k: usize, q: usize| -> [f64; 2] {
        let psi = model.mode(k / 2)[q];
        if k.is_multiple_of(2) {
            [psi.re, psi.im]
        } else {
            [-psi.im, psi.re]
        }
    };

    let mut hvals = vec![Complex64::new(0.0, 0.0); model.grid_size()];
    for (q, w) in model.quad_weights().iter().enumerate() {
        let j = ham.jacobian_unchecked(vals[q], q);
        hvals[q] = ham.grad_unchecked(vals[q], q);
        let cols: Vec<[f64; 2]> = (0..2 * m).map(|k| basis(k, q)).collect();
        let jcols: Vec<[f64; 2]> = cols
            .iter()
            .map(|e| [j[0][0] * e[0] + j[0][1] * e[1], j[1][0] * e[0] + j[1][1] * e[1]])
            .collect();
        for r in 0..2 * m {
            for c in r..2 * m {
                let v = cols[r][0] * jcols[c][0] + cols[r][1] * jcols[c][1];
                b[(r, c)] -= lambda * w * v;
            }
        }
    }
    for r in 0..2 * m {
        for c in 0..r {
            b[(r, c)] = b[(c, r)];
        }
    }
    for (i, mu) in model.eigenvalues().iter().enumerate() {
        b[(2 * i, 2 * i)] += mu;
        b[(2 * i + 1, 2 * i + 1)] += mu;
    }
    let mut h_coeffs = vec![Complex64::new(0.0, 0.0); m];
    model.project_into(&hvals, &mut h_coeffs);
    for (i, h) in h_coeffs.iter().enumerate() {
        b[(2 * i, n - 1)] = -h.re;
        b[(n - 1, 2 * i)] = -h.re;
        b[(2 * i + 1, n - 1)] = -h.im;
        b[(n - 1, 2 * i + 1)] = -h.im;
    }
    HessianForm { b, g: DVector::from_vec(model.metric_diag()) }
}

/// Eigen-decomposition of the pencil `(B, G)`: `B v = sigma G v`.
#[derive(Clone, Debug)]
pub struct Pencil {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Matching `G`-orthonormal eigenvectors as columns.
    pub vectors: DMatrix<f64>,
}

impl Pencil {
    pub fn new(b: &DMatrix<f64>, g: &DVector<f64>) -> Self {
        let n = b.nrows();
        let s: Vec<f64> = g.iter().map(|v| 1.0 / v.sqrt()).collect();
        let mut c = DMatrix::from_fn(n, n, |i, j| b[(i, j)] * s[i] * s[j]);
        c = (&c + c.transpose()) * 0.5;
        let eig = SymmetricEigen::new(c);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])] * s[i]);
        Pencil { values, vectors }
    }

    pub fn of(form: &HessianForm) -> Self {
        Self::new(&form.b, &form.g)
    }

    /// `(negative, kernel, positive)` counts with `|sigma| <= tol` as kernel.
    pub fn inertia(&self, tol: f64) -> (usize, usize, usize) {
        let neg = self.values.iter().filter(|&&v| v < -tol).count();
        let zero = self.values.iter().filter(|&&v| v.abs() <= tol).count();
        (neg, zero, self.values.len() - neg - zero)
    }

    /// Columns with eigenvalue below `-tol`.
    pub fn negative_frame(&self, tol: f64) -> Vec<DVector<f64>> {
        self.frame(|v| v < -tol)
    }

    /// Columns with eigenvalue above `tol`.
    pub fn positive_frame(&self, tol: f64) -> Vec<DVector<f64>> {
        self.frame(|v| v > tol)
    }

    fn frame(&self, keep: impl Fn(f64) -> bool) -> Vec<DVector<f64>> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| keep(**v))
            .map(|(k, _)| self.vectors.column(k).into_owned())
            .collect()
    }
}

/// Index data of a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexData {
    pub rel_index: i64,
    pub kernel_dim: usize,
    pub n_neg: usize,
}

/// Counts negative pencil eigenvalues against the reference dimension
/// `2 N_neg + 1` without any kernel policy.
pub fn index_data(model: &SpectrumSpec, form: &HessianForm, kernel_tol: f64) -> IndexData {
    let (neg, zero, _) = Pencil::of(form).inertia(kernel_tol);
    IndexData { rel_index: neg as i64 - model.gamma_dim() as i64, kernel_dim: zero, n_neg: neg }
}

/// Relative index and kernel dimension. A kernel larger than the symmetry
/// allows (one phase direction for phase-invariant Hamiltonians, none
/// otherwise) is reported as a non-Morse point.
pub fn relative_index(model: &SpectrumSpec, ham: &Hamiltonian, z: &PointZ, kernel_tol: f64) -> Result<(i64, usize)> {
    let form = hessian_form(model, ham, z)?;
    let data = index_data(model, &form, kernel_tol);
    let allowed = usize::from(ham.is_s1_invariant());
    if data.kernel_dim > allowed {
        return Err(Error::NotMorse(format!(
            "kernel of dimension {} exceeds the symmetry allowance {allowed}",
            data.kernel_dim
        )));
    }
    Ok((data.rel_index, data.kernel_dim))
}

/// Convenience wrapper for coefficient vectors without a multiplier.
pub fn constraint_defect(model: &SpectrumSpec, ham: &Hamiltonian, u: &FieldCoeffs) -> Result<f64> {
    Ok(ham.total_h(model, u)? - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::HamiltonianSpec;
    use approx::assert_abs_diff_eq;

    fn setup() -> (SpectrumSpec, Hamiltonian) {
        let m = SpectrumSpec::circle(2, 32).unwrap();
        let h = HamiltonianSpec::Quadratic.bind(&m).unwrap();
        (m, h)
    }

    fn linear_point(model: &SpectrumSpec, k: usize) -> PointZ {
        let mu = model.eigenvalues()[k];
        PointZ::new(FieldCoeffs::basis(model.n_modes(), k, Complex64::new(2f64.sqrt(), 0.0)), mu)
    }

    #[test]
    fn energy_examples() {
        let (m, h) = setup();
        assert_eq!(energy(&m, &h, &PointZ::new(FieldCoeffs::zeros(4), 0.0)).unwrap(), 0.0);
        assert_abs_diff_eq!(energy(&m, &h, &linear_point(&m, 2)).unwrap(), 0.5, epsilon = 1e-12);
        let z = PointZ::new(FieldCoeffs::basis(4, 2, Complex64::new(1.0, 0.0)), 1.0);
        assert_abs_diff_eq!(energy(&m, &h, &z).unwrap(), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn gradient_examples() {
        let (m, h) = setup();
        let g = gradient(&m, &h, &PointZ::new(FieldCoeffs::zeros(4), 0.3)).unwrap();
        assert_eq!(g.lambda, 1.0);
        for k in 0..4 {
            let g = gradient(&m, &h, &linear_point(&m, k)).unwrap();
            assert!(g.to_real().amax() < 1e-12);
        }
    }

    #[test]
    fn ps_defect_pure_multiplier() {
        let (m, h) = setup();
        let d = ps_defect(&m, &h, &PointZ::new(FieldCoeffs::zeros(4), 1.0)).unwrap();
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-15);
        assert!(ps_defect(&m, &h, &linear_point(&m, 1)).unwrap() < 1e-12);
    }

    #[test]
    fn hessian_at_origin_is_block_diagonal() {
        let (m, h) = setup();
        let form = hessian_form(&m, &h, &PointZ::new(FieldCoeffs::zeros(4), 0.0)).unwrap();
        for (i, mu) in m.eigenvalues().iter().enumerate() {
            assert_eq!(form.b[(2 * i, 2 * i)], *mu);
            assert_eq!(form.b[(2 * i + 1, 2 * i + 1)], *mu);
            assert_eq!(form.b[(2 * i, 8)], 0.0);
        }
        assert_eq!(form.b[(8, 8)], 0.0);
    }

    #[test]
    fn hessian_at_linear_point() {
        let (m, h) = setup();
        let k = 2;
        let form = hessian_form(&m, &h, &linear_point(&m, k)).unwrap();
        let muk = m.eigenvalues()[k];
        for (i, mu) in m.eigenvalues().iter().enumerate() {
            assert_abs_diff_eq!(form.b[(2 * i, 2 * i)], mu - muk, epsilon = 1e-12);
            assert_abs_diff_eq!(form.b[(2 * i + 1, 2 * i + 1)], mu - muk, epsilon = 1e-12);
            assert_abs_diff_eq!(form.b[(2 * i, 2 * i + 1)], 0.0, epsilon = 1e-12);
        }
        // Coupling to lambda is -Re(a_k) on the radial direction only.
        assert_abs_diff_eq!(form.b[(2 * k, 8)], -(2f64.sqrt()), epsilon = 1e-12);
        assert_abs_diff_eq!(form.b[(2 * k + 1, 8)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn index_law_for_two_modes() {
        let (m, h) = setup();
        assert_eq!(relative_index(&m, &h, &linear_point(&m, 2), 1e-7).unwrap(), (0, 1));
        assert_eq!(relative_index(&m, &h, &linear_point(&m, 3), 1e-7).unwrap(), (2, 1));
        assert_eq!(relative_index(&m, &h, &linear_point(&m, 1), 1e-7).unwrap(), (-2, 1));
    }

    #[test]
    fn pencil_frames_are_g_orthonormal() {
        let (m, h) = setup();
        let form = hessian_form(&m, &h, &linear_point(&m, 2)).unwrap();
        let pencil = Pencil::of(&form);
        let frame = pencil.negative_frame(1e-7);
        assert_eq!(frame.len(), 5);
        let g = DMatrix::from_diagonal(&form.g);
        for (i, a) in frame.iter().enumerate() {
            for (j, b) in frame.iter().enumerate() {
                let ip = (a.transpose() * &g * b)[(0, 0)];
                assert_abs_diff_eq!(ip, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-10);
            }
            assert!((a.transpose() * &form.b * a)[(0, 0)] < 0.0);
        }
    }

    #[test]
    fn non_morse_is_reported_for_broken_symmetry() {
        let m = SpectrumSpec::circle(2, 32).unwrap();
        let h = HamiltonianSpec::linear_break(0.0, HamiltonianSpec::Quadratic).bind(&m).unwrap();
        // delta = 0 keeps the phase symmetry, so the kernel is allowed.
        assert!(relative_index(&m, &h, &linear_point(&m, 2), 1e-7).is_ok());
        let h = HamiltonianSpec::Quadratic.bind(&m).unwrap();
        let z = PointZ::new(FieldCoeffs::zeros(4), 0.5);
        assert!(matches!(relative_index(&m, &h, &z, 1e-7), Err(Error::NotMorse(_))));
    }
}
