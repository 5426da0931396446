//! Truncated Dirac-type operator with simple, nonzero spectrum.
//!
//! Fields are stored as complex coefficients in the eigenbasis. The mode
//! functions are sampled on a uniform periodic grid with trapezoid weights,
//! which integrates trigonometric polynomials exactly, so the Gram matrix of
//! the sampled modes is the identity up to rounding.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-12;

/// Complex mode coefficients `a_i` of a spinor field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldCoeffs(pub Vec<Complex64>);

impl FieldCoeffs {
    pub fn zeros(len: usize) -> Self {
        FieldCoeffs(vec![Complex64::new(0.0, 0.0); len])
    }

    /// Unit coefficient vector `scale * e_i`.
    pub fn basis(len: usize, i: usize, scale: Complex64) -> Self {
        let mut c = Self::zeros(len);
        c.0[i] = scale;
        c
    }

    pub fn from_real(values: &[f64]) -> Self {
        FieldCoeffs(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        FieldCoeffs(self.0.iter().map(|a| a * s).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        FieldCoeffs(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        FieldCoeffs(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// Global phase rotation `u -> e^{i theta} u`.
    pub fn rotated(&self, theta: f64) -> Self {
        self.scaled(Complex64::from_polar(1.0, theta))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// A point `z = (u, lambda)` of the extended phase space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointZ {
    pub u: FieldCoeffs,
    pub lambda: f64,
}

impl PointZ {
    pub fn new(u: FieldCoeffs, lambda: f64) -> Self {
        PointZ { u, lambda }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.lambda.is_finite()
    }

    /// Real coordinates `[Re a_0, Im a_0, Re a_1, ..., lambda]`.
    pub fn to_real(&self) -> DVector<f64> {
        let m = self.u.len();
        let mut v = DVector::zeros(2 * m + 1);
        for (i, a) in self.u.0.iter().enumerate() {
            v[2 * i] = a.re;
            v[2 * i + 1] = a.im;
        }
        v[2 * m] = self.lambda;
        v
    }

    pub fn from_real(x: &[f64]) -> Self {
        let m = (x.len() - 1) / 2;
        let u = (0..m).map(|i| Complex64::new(x[2 * i], x[2 * i + 1])).collect();
        PointZ { u: FieldCoeffs(u), lambda: x[2 * m] }
    }

    pub fn rotated(&self, theta: f64) -> Self {
        PointZ { u: self.u.rotated(theta), lambda: self.lambda }
    }

    pub fn negated_field(&self) -> Self {
        PointZ { u: self.u.scaled(Complex64::new(-1.0, 0.0)), lambda: self.lambda }
    }
}

/// How the mode functions were generated; kept for reporting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Circle,
    Explicit,
}

/// The truncated operator: eigenvalues, sampled orthonormal modes, quadrature.
#[derive(Clone, Debug)]
pub struct SpectrumSpec {
    kind: ModelKind,
    eigenvalues: Vec<f64>,
    n_neg: usize,
    frequencies: Vec<f64>,
    nodes: Vec<f64>,
    quad_weights: Vec<f64>,
    /// `mode_table[i * Q + q] = psi_i(x_q)`.
    mode_table: Vec<Complex64>,
}

impl SpectrumSpec {
    /// Antiperiodic circle spectrum `{k + 1/2 : k = -N..N-1}` with modes
    /// `e^{i(k+1/2)theta} / sqrt(2 pi)`.
    pub fn circle(n: usize, q: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("circle model needs N >= 1".into()));
        }
        if q < 8 * n {
            return Err(Error::Config(format!(
                "grid size Q = {q} is too small for N = {n} (need Q >= 8N = {})",
                8 * n
            )));
        }
        let freqs: Vec<f64> = (-(n as i64)..n as i64).map(|k| k as f64 + 0.5).collect();
        Self::build(ModelKind::Circle, freqs.clone(), freqs, q)
    }

    /// Arbitrary simple nonzero spectrum; modes are assigned half-integer
    /// Fourier frequencies in ascending order.
    pub fn explicit(eigs: &[f64], q: usize) -> Result<Self> {
        if eigs.is_empty() {
            return Err(Error::Config("explicit model needs at least one eigenvalue".into()));
        }
        if eigs.iter().any(|e| !e.is_finite()) {
            return Err(Error::Config("eigenvalues must be finite".into()));
        }
        if eigs.contains(&0.0) {
            return Err(Error::Config("zero eigenvalue: harmonic modes are not allowed".into()));
        }
        let mut sorted = eigs.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("repeated eigenvalue: spectrum must be simple".into()));
        }
        let m = sorted.len();
        if q < 4 * m {
            return Err(Error::Config(format!(
                "grid size Q = {q} is too small for {m} modes (need Q >= {})",
                4 * m
            )));
        }
        let n_neg = sorted.iter().filter(|&&e| e < 0.0).count();
        let freqs = (0..m).map(|j| j as f64 - n_neg as f64 + 0.5).collect();
        Self::build(ModelKind::Explicit, sorted, freqs, q)
    }

    fn build(kind: ModelKind, eigenvalues: Vec<f64>, frequencies: Vec<f64>, q: usize) -> Result<Self> {
        let n_neg = eigenvalues.iter().filter(|&&e| e < 0.0).count();
        let h = 2.0 * PI / q as f64;
        let nodes: Vec<f64> = (0..q).map(|j| j as f64 * h).collect();
        let quad_weights = vec![h; q];
        let norm = 1.0 / (2.0 * PI).sqrt();
        let mut mode_table = Vec::with_capacity(eigenvalues.len() * q);
        for &f in &frequencies {
            for &x in &nodes {
                mode_table.push(Complex64::from_polar(norm, f * x));
            }
        }
        let spec = SpectrumSpec { kind, eigenvalues, n_neg, frequencies, nodes, quad_weights, mode_table };
        let err = spec.orthonormality_error();
        if err > ORTHONORMAL_TOL {
            return Err(Error::Config(format!("sampled modes are not orthonormal (error {err:.3e})")));
        }
        Ok(spec)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn n_neg(&self) -> usize {
        self.n_neg
    }

    /// Number of modes (`2N` for the circle model).
    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Real dimension of the phase space, `2 * modes + 1`.
    pub fn real_dim(&self) -> usize {
        2 * self.n_modes() + 1
    }

    /// Dimension of the reference space `H^- x R` in real coordinates.
    pub fn gamma_dim(&self) -> usize {
        2 * self.n_neg + 1
    }

    pub fn grid_size(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn mode(&self, i: usize) -> &[Complex64] {
        let q = self.grid_size();
        &self.mode_table[i * q..(i + 1) * q]
    }

    /// Quadrature Gram matrix entry `sum_q w_q psi_i conj(psi_j)`.
    pub fn gram(&self, i: usize, j: usize) -> Complex64 {
        self.mode(i)
            .iter()
            .zip(self.mode(j))
            .zip(&self.quad_weights)
            .map(|((a, b), w)| a * b.conj() * *w)
            .sum()
    }

    pub fn orthonormality_error(&self) -> f64 {
        let m = self.n_modes();
        let mut err: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((self.gram(i, j) - target).norm());
            }
        }
        err
    }

    pub(crate) fn check_len(&self, u: &FieldCoeffs) -> Result<()> {
        if u.len() != self.n_modes() {
            return Err(Error::SizeMismatch { expected: self.n_modes(), found: u.len() });
        }
        Ok(())
    }

    /// Pointwise values `sum_i a_i psi_i(x_q)`.
    pub fn evaluate_on_grid(&self, u: &FieldCoeffs) -> Result<Vec<Complex64>> {
        self.check_len(u)?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid_size()];
        self.evaluate_into(&u.0, &mut out);
        Ok(out)
    }

    pub(crate) fn evaluate_into(&self, coeffs: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (i, a) in coeffs.iter().enumerate() {
            if *a == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (v, psi) in out.iter_mut().zip(self.mode(i)) {
                *v += a * psi;
            }
        }
    }

    /// Quadrature adjoint of [`evaluate_on_grid`](Self::evaluate_on_grid).
    pub fn project_from_grid(&self, values: &[Complex64]) -> Result<FieldCoeffs> {
        if values.len() != self.grid_size() {
            return Err(Error::SizeMismatch { expected: self.grid_size(), found: values.len() });
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_modes()];
        self.project_into(values, &mut out);
        Ok(FieldCoeffs(out))
    }

    pub(crate) fn project_into(&self, values: &[Complex64], out: &mut [Complex64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self
                .mode(i)
                .iter()
                .zip(values)
                .zip(&self.quad_weights)
                .map(|((psi, v), w)| v * psi.conj() * *w)
                .sum();
        }
    }

    pub fn apply_d(&self, u: &FieldCoeffs) -> Result<FieldCoeffs> {
        self.check_len(u)?;
        Ok(FieldCoeffs(u.0.iter().zip(&self.eigenvalues).map(|(a, mu)| a * *mu).collect()))
    }

    /// `|D|^s u`: multiplies mode `i` by `|mu_i|^s`.
    pub fn apply_abs_d_power(&self, u: &FieldCoeffs, s: f64) -> Result<FieldCoeffs> {
        self.check_len(u)?;
        Ok(FieldCoeffs(
            u.0.iter().zip(&self.eigenvalues).map(|(a, mu)| a * mu.abs().powf(s)).collect(),
        ))
    }

    /// Splits `u` into its positive- and negative-spectrum parts `(u+, u-)`.
    pub fn split_pm(&self, u: &FieldCoeffs) -> Result<(FieldCoeffs, FieldCoeffs)> {
        self.check_len(u)?;
        let zero = Complex64::new(0.0, 0.0);
        let plus = u.0.iter().zip(&self.eigenvalues).map(|(a, &mu)| if mu > 0.0 { *a } else { zero });
        let minus = u.0.iter().zip(&self.eigenvalues).map(|(a, &mu)| if mu < 0.0 { *a } else { zero });
        Ok((FieldCoeffs(plus.collect()), FieldCoeffs(minus.collect())))
    }

    /// `sum_i a_i conj(b_i)`.
    pub fn inner_l2(&self, u: &FieldCoeffs, v: &FieldCoeffs) -> Result<Complex64> {
        self.check_len(u)?;
        self.check_len(v)?;
        Ok(u.0.iter().zip(&v.0).map(|(a, b)| a * b.conj()).sum())
    }

    /// `H^{1/2}` norm: `sqrt(sum_i |mu_i| |a_i|^2)`.
    pub fn norm_h_half(&self, u: &FieldCoeffs) -> Result<f64> {
        self.check_len(u)?;
        Ok(u.0
            .iter()
            .zip(&self.eigenvalues)
            .map(|(a, mu)| mu.abs() * a.norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    /// Diagonal of the `H^{1/2} x R` metric in real coordinates.
    pub fn metric_diag(&self) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.real_dim());
        for mu in &self.eigenvalues {
            g.push(mu.abs());
            g.push(mu.abs());
        }
        g.push(1.0);
        g
    }

    /// Metric norm of a real tangent vector.
    pub fn g_norm(&self, v: &[f64]) -> f64 {
        let m = self.n_modes();
        let mut s = v[2 * m] * v[2 * m];
        for (i, mu) in self.eigenvalues.iter().enumerate() {
            s += mu.abs() * (v[2 * i] * v[2 * i] + v[2 * i + 1] * v[2 * i + 1]);
        }
        s.sqrt()
    }

    pub fn g_distance(&self, a: &PointZ, b: &PointZ) -> f64 {
        let d: Vec<f64> = a.to_real().iter().zip(b.to_real().iter()).map(|(x, y)| x - y).collect();
        self.g_norm(&d)
    }

    /// Index of the mode with eigenvalue closest to `mu`.
    pub fn mode_index_of(&self, mu: f64) -> Option<usize> {
        self.eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - mu).abs().total_cmp(&(b.1 - mu).abs()))
            .map(|(i, _)| i)
    }
}
