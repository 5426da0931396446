//! Python bindings: spectra, Hamiltonians, the functional, critical-point
//! scans, descending flows and the plain complex.

use dirac_floer_core::complex::Flavor;
use dirac_floer_core::critical::{NewtonOptions, ScanOptions};
use dirac_floer_core::flow::{integrate_descending, FlowControls, ShootingControls};
use dirac_floer_core::hamiltonian::HamiltonianSpec;
use dirac_floer_core::spectral::{FieldCoeffs, PointZ, SpectrumSpec};
use dirac_floer_core::{functional, pipeline, Complex64, Error};

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn point(coeffs: Vec<Complex64>, lam: f64) -> PointZ {
    PointZ::new(FieldCoeffs(coeffs), lam)
}

/// Truncated operator with simple nonzero spectrum.
#[pyclass(name = "Spectrum", frozen)]
struct PySpectrum(SpectrumSpec);

#[pymethods]
impl PySpectrum {
    /// Antiperiodic circle spectrum `{k + 1/2 : k = -N..N-1}` on `Q` nodes.
    #[staticmethod]
    fn circle(n: usize, q: usize) -> PyResult<Self> {
        SpectrumSpec::circle(n, q).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn explicit(eigenvalues: Vec<f64>, q: usize) -> PyResult<Self> {
        SpectrumSpec::explicit(&eigenvalues, q).map(Self).map_err(py_err)
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.0.eigenvalues().to_vec()
    }

    #[getter]
    fn n_neg(&self) -> usize {
        self.0.n_neg()
    }

    #[getter]
    fn n_modes(&self) -> usize {
        self.0.n_modes()
    }

    #[getter]
    fn grid_size(&self) -> usize {
        self.0.grid_size()
    }

    fn orthonormality_error(&self) -> f64 {
        self.0.orthonormality_error()
    }

    fn evaluate_on_grid(&self, coeffs: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        self.0.evaluate_on_grid(&FieldCoeffs(coeffs)).map_err(py_err)
    }

    fn project_from_grid(&self, values: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        self.0.project_from_grid(&values).map(|c| c.0).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Spectrum(eigenvalues={:?}, grid_size={})", self.0.eigenvalues(), self.0.grid_size())
    }
}

/// Description of the nonlinearity `H(x, s)`.
#[pyclass(name = "Hamiltonian", frozen)]
struct PyHamiltonian(HamiltonianSpec);

#[pymethods]
impl PyHamiltonian {
    #[staticmethod]
    fn quadratic() -> Self {
        Self(HamiltonianSpec::Quadratic)
    }

    #[staticmethod]
    fn power(p: f64, c: f64) -> Self {
        Self(HamiltonianSpec::power(p, c))
    }

    /// `(1 - eta(t)) left + eta(t) right` with a smoothstep `eta`.
    #[staticmethod]
    fn mixture(t: f64, left: &PyHamiltonian, right: &PyHamiltonian) -> Self {
        Self(HamiltonianSpec::mixture(t, left.0.clone(), right.0.clone()))
    }

    #[staticmethod]
    fn linear_break(delta: f64, base: &PyHamiltonian) -> Self {
        Self(HamiltonianSpec::linear_break(delta, base.0.clone()))
    }

    #[staticmethod]
    fn even_break(delta: f64, base: &PyHamiltonian) -> Self {
        Self(HamiltonianSpec::even_break(delta, None, base.0.clone()))
    }

    /// Growth constants of the hypothesis checker, as a dict.
    fn verify_growth<'py>(&self, py: Python<'py>, model: &PySpectrum, sample_range: f64) -> PyResult<Bound<'py, PyDict>> {
        let r = self.0.bind(&model.0).and_then(|h| h.verify_growth(sample_range)).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("p", r.p)?;
        d.set_item("c1", r.c1)?;
        d.set_item("c2", r.c2)?;
        d.set_item("C", r.big_c)?;
        d.set_item("r0", r.r0)?;
        d.set_item("conforming", r.conforming())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Hamiltonian({:?})", self.0)
    }
}

#[pyclass(name = "CriticalPoint", frozen, get_all)]
struct PyCriticalPoint {
    energy: f64,
    rel_index: i64,
    kernel_dim: usize,
    orbit_type: String,
    coeffs: Vec<Complex64>,
    lam: f64,
    residual: f64,
}

#[pymethods]
impl PyCriticalPoint {
    fn __repr__(&self) -> String {
        format!("CriticalPoint(energy={:.10}, rel_index={}, orbit_type={})", self.energy, self.rel_index, self.orbit_type)
    }
}

#[pyfunction]
fn energy(model: &PySpectrum, ham: &PyHamiltonian, coeffs: Vec<Complex64>, lam: f64) -> PyResult<f64> {
    let h = ham.0.bind(&model.0).map_err(py_err)?;
    functional::energy(&model.0, &h, &point(coeffs, lam)).map_err(py_err)
}

/// Metric gradient as `(coeffs, lambda component)`.
#[pyfunction]
fn gradient(model: &PySpectrum, ham: &PyHamiltonian, coeffs: Vec<Complex64>, lam: f64) -> PyResult<(Vec<Complex64>, f64)> {
    let h = ham.0.bind(&model.0).map_err(py_err)?;
    let g = functional::gradient(&model.0, &h, &point(coeffs, lam)).map_err(py_err)?;
    Ok((g.u.0, g.lambda))
}

/// `(relative index, kernel dimension)`.
#[pyfunction]
#[pyo3(signature = (model, ham, coeffs, lam, kernel_tol = 1e-7))]
fn relative_index(
    model: &PySpectrum,
    ham: &PyHamiltonian,
    coeffs: Vec<Complex64>,
    lam: f64,
    kernel_tol: f64,
) -> PyResult<(i64, usize)> {
    let h = ham.0.bind(&model.0).map_err(py_err)?;
    functional::relative_index(&model.0, &h, &point(coeffs, lam), kernel_tol).map_err(py_err)
}

#[pyfunction]
fn critical_window(model: &PySpectrum, ham: &PyHamiltonian, a: f64, b: f64) -> PyResult<Vec<PyCriticalPoint>> {
    let w = pipeline::critical_window(&model.0, &ham.0, a, b, &ScanOptions::default(), &NewtonOptions::default())
        .map_err(py_err)?;
    Ok(w.points
        .into_iter()
        .map(|p| PyCriticalPoint {
            energy: p.energy,
            rel_index: p.rel_index,
            kernel_dim: p.kernel_dim,
            orbit_type: format!("{:?}", p.orbit_type).to_lowercase(),
            coeffs: p.z.u.0,
            lam: p.z.lambda,
            residual: p.residual,
        })
        .collect())
}

/// Descending trajectory; returns times, energies, action and how it ended.
#[pyfunction]
#[pyo3(signature = (model, ham, coeffs, lam, dt = 1e-2, t_max = 10.0))]
fn flow<'py>(
    py: Python<'py>,
    model: &PySpectrum,
    ham: &PyHamiltonian,
    coeffs: Vec<Complex64>,
    lam: f64,
    dt: f64,
    t_max: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let h = ham.0.bind(&model.0).map_err(py_err)?;
    let c = FlowControls { dt, t_max, ..FlowControls::default() };
    let tr = integrate_descending(&model.0, &h, &point(coeffs, lam), &c).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("times", tr.times.clone())?;
    d.set_item("energies", tr.energies.clone())?;
    d.set_item("action", tr.action)?;
    d.set_item("limit", serde_json::to_string(&tr.limit).map_err(|e| PyValueError::new_err(e.to_string()))?)?;
    Ok(d)
}

/// Plain complex of a Hamiltonian with isolated critical points on the
/// window `[a, b]`: parities `(from, to, parity)` and homology `(degree, dim)`.
#[pyfunction]
fn plain_homology<'py>(py: Python<'py>, model: &PySpectrum, ham: &PyHamiltonian, a: f64, b: f64) -> PyResult<Bound<'py, PyDict>> {
    let h = ham.0.bind(&model.0).map_err(py_err)?;
    let w = pipeline::critical_window(&model.0, &ham.0, a, b, &ScanOptions::default(), &NewtonOptions::default())
        .map_err(py_err)?;
    let rep = pipeline::plain_complex(&model.0, &h, &w, &ShootingControls::default()).map_err(py_err)?;
    let d = PyDict::new(py);
    let parities: Vec<(usize, usize, Option<u8>)> = rep.entries.iter().map(|e| (e.from, e.to, e.parity)).collect();
    d.set_item("parities", parities)?;
    match (&rep.complex, &rep.homology) {
        (Some(cx), Some(hom)) => {
            debug_assert_eq!(hom.flavor, Flavor::Plain);
            let dims: Vec<(i64, usize)> = hom.degrees.iter().map(|&k| (k, hom.dim(k))).collect();
            d.set_item("homology", dims)?;
            d.set_item("d_squared_zero", cx.d_squared_failures().is_empty())?;
        }
        _ => {
            d.set_item("homology", py.None())?;
            d.set_item("error", rep.error.clone())?;
        }
    }
    Ok(d)
}

#[pymodule]
fn dirac_floer(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpectrum>()?;
    m.add_class::<PyHamiltonian>()?;
    m.add_class::<PyCriticalPoint>()?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(gradient, m)?)?;
    m.add_function(wrap_pyfunction!(relative_index, m)?)?;
    m.add_function(wrap_pyfunction!(critical_window, m)?)?;
    m.add_function(wrap_pyfunction!(flow, m)?)?;
    m.add_function(wrap_pyfunction!(plain_homology, m)?)?;
    Ok(())
}
