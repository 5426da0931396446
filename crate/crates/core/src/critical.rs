//! Critical points: the closed-form linear case, a damped Newton solver with
//! an optional phase-fixed chart, continuation along Hamiltonian paths, and a
//! deduplicating multistart scan of an energy window.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{
    differential_real, dual_norm, energy_unchecked, field_terms, hessian_unchecked, index_data, HessianForm,
};
use crate::hamiltonian::{Hamiltonian, HamiltonianSpec};
use crate::spectral::{FieldCoeffs, PointZ, SpectrumSpec};

/// Symmetry type of a critical point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrbitType {
    /// No symmetry relates it to other critical points.
    Isolated,
    /// A representative of a phase circle `e^{i theta} z`.
    Circle,
    /// A representative of the pair `{z, -z}`.
    Pair,
}

impl OrbitType {
    pub fn of(ham: &Hamiltonian) -> Self {
        if ham.is_s1_invariant() {
            OrbitType::Circle
        } else if ham.is_even() {
            OrbitType::Pair
        } else {
            OrbitType::Isolated
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub z: PointZ,
    pub energy: f64,
    pub rel_index: i64,
    pub kernel_dim: usize,
    pub orbit_type: OrbitType,
    pub residual: f64,
}

impl CriticalPoint {
    /// Classifies `z` without enforcing the kernel policy.
    pub fn classify_lenient(model: &SpectrumSpec, ham: &Hamiltonian, z: &PointZ, kernel_tol: f64) -> Self {
        let x = z.to_real();
        let mut d = vec![0.0; x.len()];
        differential_real(model, ham, x.as_slice(), &mut d);
        let form = hessian_unchecked(model, ham, &z.u.0, z.lambda);
        let idx = index_data(model, &form, kernel_tol);
        CriticalPoint {
            z: z.clone(),
            energy: energy_unchecked(model, ham, &z.u.0, z.lambda),
            rel_index: idx.rel_index,
            kernel_dim: idx.kernel_dim,
            orbit_type: OrbitType::of(ham),
            residual: dual_norm(model, &d),
        }
    }

    /// Classifies `z` and rejects kernels beyond the symmetry allowance.
    pub fn classify(model: &SpectrumSpec, ham: &Hamiltonian, z: &PointZ, kernel_tol: f64) -> Result<Self> {
        let cp = Self::classify_lenient(model, ham, z, kernel_tol);
        let allowed = usize::from(ham.is_s1_invariant());
        if cp.kernel_dim > allowed {
            return Err(Error::NotMorse(format!(
                "kernel of dimension {} at energy {:.6}",
                cp.kernel_dim, cp.energy
            )));
        }
        Ok(cp)
    }
}

/// Critical points with energy in `[a, b]`, sorted by energy then index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CritWindow {
    pub a: f64,
    pub b: f64,
    pub points: Vec<CriticalPoint>,
}

impl CritWindow {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_window(a: f64, b: f64) -> Result<()> {
    if a.is_finite() && b.is_finite() && a < b {
        Ok(())
    } else {
        Err(Error::Config(format!("invalid energy window [{a}, {b}]")))
    }
}

/// The circle `(sqrt(2) e^{i theta} psi_k, mu_k)` at `theta = 0`.
pub fn linear_point(model: &SpectrumSpec, k: usize) -> PointZ {
    PointZ::new(
        FieldCoeffs::basis(model.n_modes(), k, Complex64::new(2f64.sqrt(), 0.0)),
        model.eigenvalues()[k],
    )
}

/// Closed-form critical circles of the quadratic Hamiltonian with eigenvalue
/// in the open window `(a, b)`.
pub fn linear_critical_points(model: &SpectrumSpec, a: f64, b: f64, kernel_tol: f64) -> Result<CritWindow> {
    check_window(a, b)?;
    let ham = HamiltonianSpec::Quadratic.bind(model)?;
    let mut points = Vec::new();
    for (k, &mu) in model.eigenvalues().iter().enumerate() {
        if mu > a && mu < b {
            points.push(CriticalPoint::classify(model, &ham, &linear_point(model, k), kernel_tol)?);
        }
    }
    Ok(CritWindow { a, b, points })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Solve in the chart `Im a_ref = 0` for phase-invariant Hamiltonians.
    pub phase_fix: bool,
    /// Retry with a backtracking line search on the residual norm when
    /// plain Newton fails.
    pub damping: bool,
    pub grad_tol: f64,
    pub kernel_tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { phase_fix: true, damping: true, grad_tol: 1e-10, kernel_tol: 1e-7, max_iter: 60 }
    }
}

/// Newton iteration on `dE = 0` with Jacobian `B`. Returns the converged
/// and classified point.
pub fn newton_solve(
    model: &SpectrumSpec,
    ham: &Hamiltonian,
    guess: &PointZ,
    opts: &NewtonOptions,
) -> Result<CriticalPoint> {
    let z = newton_point(model, ham, guess, opts)?;
    CriticalPoint::classify(model, ham, &z, opts.kernel_tol)
}

/// Plain Newton first; the damped iteration only if that fails, since the
/// line search crawls next to nearly singular directions.
fn newton_point(model: &SpectrumSpec, ham: &Hamiltonian, guess: &PointZ, opts: &NewtonOptions) -> Result<PointZ> {
    let plain = NewtonOptions { damping: false, ..opts.clone() };
    match newton_iterate(model, ham, guess, &plain) {
        Ok(z) => Ok(z),
        Err(_) if opts.damping => newton_iterate(model, ham, guess, opts),
        Err(e) => Err(e),
    }
}

fn newton_iterate(model: &SpectrumSpec, ham: &Hamiltonian, guess: &PointZ, opts: &NewtonOptions) -> Result<PointZ> {
    model.check_len(&guess.u)?;
    if !guess.is_finite() {
        return Err(Error::NonFinite("Newton guess".into()));
    }
    let (r_ref, a_ref) = guess
        .u
        .0
        .iter()
        .enumerate()
        .map(|(i, a)| (i, a.norm()))
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap_or((0, 0.0));
    if a_ref < 1e-12 {
        return Err(Error::NotMorse("zero field: h(0) = 0 makes the point degenerate".into()));
    }
    let phase_fix = opts.phase_fix && ham.is_s1_invariant();
    let start = if phase_fix { guess.rotated(-guess.u.0[r_ref].arg()) } else { guess.clone() };

    let n = model.real_dim();
    let keep: Vec<usize> = (0..n).filter(|&k| !(phase_fix && k == 2 * r_ref + 1)).collect();
    let metric = model.metric_diag();
    let merit = |d: &[f64]| -> f64 { keep.iter().map(|&k| d[k] * d[k] / metric[k]).sum::<f64>().sqrt() };

    let mut x = start.to_real();
    if phase_fix {
        x[2 * r_ref + 1] = 0.0;
    }
    let mut d = vec![0.0; n];
    differential_real(model, ham, x.as_slice(), &mut d);
    let mut res = merit(&d);
    for _ in 0..opts.max_iter {
        if res < opts.grad_tol && dual_norm(model, &d) < opts.grad_tol {
            return Ok(PointZ::from_real(x.as_slice()));
        }
        let z = PointZ::from_real(x.as_slice());
        let HessianForm { b, .. } = hessian_unchecked(model, ham, &z.u.0, z.lambda);
        let jac = DMatrix::from_fn(keep.len(), keep.len(), |i, j| b[(keep[i], keep[j])]);
        let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&k| -d[k]));
        // Seeds on an unbroken circle make the Jacobian singular along the
        // circle while the residual has no component there; the minimum-norm
        // step then moves off the degenerate point.
        let limit = 1e4 * (1.0 + x.norm());
        let step = match jac.clone().lu().solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) && s.norm() <= limit => s,
            _ => {
                let svd = jac.svd(true, true);
                let eps = 1e-8 * svd.singular_values.max();
                svd.solve(&rhs, eps)
                    .ok()
                    .filter(|s| s.iter().all(|v| v.is_finite()))
                    .ok_or_else(|| Error::NotMorse("singular Hessian in the Newton chart".into()))?
            }
        };

        let mut alpha = 1.0;
        loop {
            let mut trial = x.clone();
            for (s, &k) in step.iter().zip(&keep) {
                trial[k] += alpha * s;
            }
            let mut dt = vec![0.0; n];
            differential_real(model, ham, trial.as_slice(), &mut dt);
            let rt = merit(&dt);
            if !opts.damping || (rt.is_finite() && rt < (1.0 - 1e-4 * alpha) * res) {
                x = trial;
                d = dt;
                res = rt;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-10 {
                return Err(Error::NoConvergence { iterations: opts.max_iter, residual: res });
            }
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Newton iterate".into()));
        }
    }
    if res < opts.grad_tol && dual_norm(model, &d) < opts.grad_tol {
        return Ok(PointZ::from_real(x.as_slice()));
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: dual_norm(model, &d) })
}

/// Branch of critical points along a Hamiltonian path.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Branch {
    pub ts: Vec<f64>,
    pub points: Vec<CriticalPoint>,
    /// Positions `j` where the index differs from position `j - 1`.
    pub index_jumps: Vec<usize>,
}

impl Branch {
    pub fn endpoint(&self) -> &CriticalPoint {
        self.points.last().expect("a branch has at least its start point")
    }
}

/// Natural-parameter continuation on `t_j = j / steps` with a secant
/// predictor, Newton corrector and step halving on corrector failure.
pub fn continue_branch(
    model: &SpectrumSpec,
    path: &dyn Fn(f64) -> HamiltonianSpec,
    start: &CriticalPoint,
    steps: usize,
    opts: &NewtonOptions,
    energy_window: Option<(f64, f64)>,
) -> Result<Branch> {
    if steps == 0 {
        return Err(Error::Config("continuation needs at least one step".into()));
    }
    let ham0 = path(0.0).bind(model)?;
    let first = newton_solve(model, &ham0, &start.z, opts)?;
    let mut ts = vec![0.0];
    let mut points = vec![first];
    let mut index_jumps = Vec::new();
    // Most recent two solved states, for the secant predictor.
    let mut hist: Vec<(f64, DVector<f64>)> = vec![(0.0, points[0].z.to_real())];

    for j in 1..=steps {
        let target = j as f64 / steps as f64;
        let mut t = ts[ts.len() - 1];
        let mut h = target - t;
        let mut last = points[points.len() - 1].clone();
        while t < target - 1e-15 {
            let t_next = (t + h).min(target);
            let guess = predict(&hist, t_next);
            let ham = path(t_next).bind(model)?;
            match newton_solve(model, &ham, &PointZ::from_real(guess.as_slice()), opts) {
                Ok(cp) => {
                    let x = cp.z.to_real();
                    hist.push((t_next, x));
                    if hist.len() > 2 {
                        hist.remove(0);
                    }
                    t = t_next;
                    last = cp;
                }
                Err(e) => {
                    h *= 0.5;
                    if h < 1e-4 / steps as f64 {
                        return Err(Error::Continuation { t: t_next, reason: e.to_string() });
                    }
                }
            }
        }
        if let Some((a, b)) = energy_window {
            if last.energy < a || last.energy > b {
                return Err(Error::Continuation {
                    t: target,
                    reason: format!("energy {:.6} left the safety window [{a}, {b}]", last.energy),
                });
            }
        }
        if last.rel_index != points[points.len() - 1].rel_index {
            index_jumps.push(points.len());
        }
        ts.push(target);
        points.push(last);
    }
    Ok(Branch { ts, points, index_jumps })
}

fn predict(hist: &[(f64, DVector<f64>)], t: f64) -> DVector<f64> {
    match hist {
        [(t0, x0), (t1, x1)] if t1 > t0 => x1 + (x1 - x0) * ((t - t1) / (t1 - t0)),
        _ => hist[hist.len() - 1].1.clone(),
    }
}

/// Metric distance between the symmetry orbits of two points: optimal
/// phase for circles, the nearer sign for pairs.
pub fn orbit_distance(model: &SpectrumSpec, a: &PointZ, b: &PointZ, kind: OrbitType) -> f64 {
    match kind {
        OrbitType::Isolated => model.g_distance(a, b),
        OrbitType::Pair => model.g_distance(a, b).min(model.g_distance(&a.negated_field(), b)),
        OrbitType::Circle => {
            let mut na = 0.0;
            let mut nb = 0.0;
            let mut cross = Complex64::new(0.0, 0.0);
            for ((x, y), mu) in a.u.0.iter().zip(&b.u.0).zip(model.eigenvalues()) {
                na += mu.abs() * x.norm_sqr();
                nb += mu.abs() * y.norm_sqr();
                cross += x * y.conj() * mu.abs();
            }
            let dl = a.lambda - b.lambda;
            ((na + nb - 2.0 * cross.norm()).max(0.0) + dl * dl).sqrt()
        }
    }
}

/// Puts a representative into canonical form: dominant coefficient real
/// and positive for circles, dominant component positive for pairs.
pub fn canonical_representative(z: &PointZ, kind: OrbitType) -> PointZ {
    let Some((_, dom)) = z.u.0.iter().enumerate().max_by(|x, y| x.1.norm().total_cmp(&y.1.norm())) else {
        return z.clone();
    };
    match kind {
        OrbitType::Isolated => z.clone(),
        OrbitType::Circle => {
            let mut r = z.rotated(-dom.arg());
            let k = r.u.0.iter().enumerate().max_by(|x, y| x.1.norm().total_cmp(&y.1.norm())).unwrap().0;
            r.u.0[k].im = 0.0;
            r
        }
        OrbitType::Pair => {
            let lead = if dom.re.abs() >= dom.im.abs() { dom.re } else { dom.im };
            if lead < 0.0 {
                z.negated_field()
            } else {
                z.clone()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Linear circles with eigenvalue in `[a - M, b + M]` seed the scan.
    pub enlarge_m: f64,
    pub random_seeds: usize,
    pub rng_seed: u64,
    /// Continuation steps from the quadratic case to a nonlinear base.
    pub continuation_steps: usize,
    /// Phases tried per seed when the phase symmetry is broken.
    pub phases: usize,
    pub merge_tol: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            enlarge_m: 0.5,
            random_seeds: 16,
            rng_seed: 0,
            continuation_steps: 8,
            phases: 8,
            merge_tol: 1e-6,
        }
    }
}

/// Best-effort enumeration of critical points with energy in `[a, b]`.
pub fn window_scan(
    model: &SpectrumSpec,
    ham: &Hamiltonian,
    a: f64,
    b: f64,
    scan: &ScanOptions,
    opts: &NewtonOptions,
) -> Result<CritWindow> {
    check_window(a, b)?;
    let kind = OrbitType::of(ham);
    let mut seeds = circle_seeds(model, ham, a - scan.enlarge_m, b + scan.enlarge_m, scan, opts);
    seeds.extend(random_seeds(model, ham, scan));

    let solved: Vec<Option<CriticalPoint>> =
        seeds.par_iter().map(|s| newton_solve(model, ham, s, opts).ok()).collect();

    let mut kept: Vec<CriticalPoint> = Vec::new();
    for mut cp in solved.into_iter().flatten() {
        cp.z = canonical_representative(&cp.z, kind);
        if cp.residual >= 1e-8 || cp.energy < a || cp.energy > b {
            continue;
        }
        if kept.iter().any(|k| orbit_distance(model, &k.z, &cp.z, kind) < scan.merge_tol) {
            continue;
        }
        kept.push(cp);
    }
    kept.sort_by(|x, y| x.energy.total_cmp(&y.energy).then(x.rel_index.cmp(&y.rel_index)));
    Ok(CritWindow { a, b, points: kept })
}

fn circle_seeds(
    model: &SpectrumSpec,
    ham: &Hamiltonian,
    lo: f64,
    hi: f64,
    scan: &ScanOptions,
    opts: &NewtonOptions,
) -> Vec<PointZ> {
    let spec = ham.spec().clone();
    let base = spec.without_breaks();
    let quadratic = spec.is_quadratic_base();
    let ks: Vec<usize> = (0..model.n_modes()).filter(|&k| (lo..=hi).contains(&model.eigenvalues()[k])).collect();
    let starts: Vec<Option<PointZ>> = ks
        .par_iter()
        .map(|&k| {
            let z = linear_point(model, k);
            if quadratic {
                return Some(z);
            }
            let quad = HamiltonianSpec::Quadratic.bind(model).ok()?;
            let start = CriticalPoint::classify_lenient(model, &quad, &z, opts.kernel_tol);
            let path = |t: f64| HamiltonianSpec::mixture(t, HamiltonianSpec::Quadratic, base.clone());
            continue_branch(model, &path, &start, scan.continuation_steps.max(1), opts, None)
                .ok()
                .map(|br| br.endpoint().z.clone())
        })
        .collect();
    let phases = if ham.is_s1_invariant() { 1 } else { scan.phases.max(1) };
    let mut out = Vec::new();
    for z in starts.into_iter().flatten() {
        for j in 0..phases {
            out.push(z.rotated(2.0 * std::f64::consts::PI * j as f64 / phases as f64));
        }
    }
    out
}

fn random_seeds(model: &SpectrumSpec, ham: &Hamiltonian, scan: &ScanOptions) -> Vec<PointZ> {
    let mut rng = ChaCha8Rng::seed_from_u64(scan.rng_seed);
    let m = model.n_modes();
    let mut out = Vec::with_capacity(scan.random_seeds);
    for _ in 0..scan.random_seeds {
        let coeffs: Vec<Complex64> = (0..m)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im)
            })
            .collect();
        let u = scale_to_constraint(model, ham, FieldCoeffs(coeffs));
        let terms = field_terms(model, ham, &u.0);
        let num: f64 = u.0.iter().zip(model.eigenvalues()).map(|(a, mu)| mu * a.norm_sqr()).sum();
        let den: f64 = u.0.iter().zip(&terms.h_coeffs).map(|(a, h)| (h * a.conj()).re).sum();
        let lambda = if den.abs() > 1e-12 { num / den } else { 1.0 };
        out.push(PointZ::new(u, lambda));
    }
    out
}

/// Rescales `u` so that `int H(x, s u) = 1` by bisection on `s`.
fn scale_to_constraint(model: &SpectrumSpec, ham: &Hamiltonian, u: FieldCoeffs) -> FieldCoeffs {
    let f = |s: f64| field_terms(model, ham, &u.scaled(Complex64::new(s, 0.0)).0).total_h - 1.0;
    let (mut lo, mut hi) = (1e-6, 1e6);
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return u;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-14 {
            break;
        }
    }
    u.scaled(Complex64::new(lo, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn model() -> SpectrumSpec {
        SpectrumSpec::circle(2, 32).unwrap()
    }

    #[test]
    fn linear_window_examples() {
        let m = model();
        let w = linear_critical_points(&m, 0.0, 2.0, 1e-7).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!((w.points[0].rel_index, w.points[1].rel_index), (0, 2));
        assert!(w.points.iter().all(|p| p.residual < 1e-12 && p.orbit_type == OrbitType::Circle));
        assert!(linear_critical_points(&m, 10.0, 11.0, 1e-7).unwrap().is_empty());
        assert!(linear_critical_points(&m, 1.0, 0.0, 1e-7).is_err());
    }

    #[test]
    fn newton_fixed_point_is_unchanged() {
        let m = model();
        let h = HamiltonianSpec::Quadratic.bind(&m).unwrap();
        let z = linear_point(&m, 3);
        let cp = newton_solve(&m, &h, &z, &NewtonOptions::default()).unwrap();
        assert_eq!(cp.z, z);
    }

    #[test]
    fn newton_recovers_perturbed_circle() {
        let m = model();
        let h = HamiltonianSpec::Quadratic.bind(&m).unwrap();
        for k in [2usize, 3] {
            let exact = linear_point(&m, k);
            let mut guess = exact.clone();
            guess.u = guess.u.scaled(Complex64::new(1.1, 0.0));
            guess.lambda += 0.05;
            let cp = newton_solve(&m, &h, &guess, &NewtonOptions::default()).unwrap();
            assert!(cp.z.u.max_abs_diff(&exact.u) < 1e-10);
            assert_abs_diff_eq!(cp.z.lambda, exact.lambda, epsilon = 1e-10);
        }
    }

    #[test]
    fn newton_rejects_zero_field() {
        let m = model();
        let h = HamiltonianSpec::Quadratic.bind(&m).unwrap();
        let z = PointZ::new(FieldCoeffs::zeros(4), 0.5);
        assert!(matches!(newton_solve(&m, &h, &z, &NewtonOptions::default()), Err(Error::NotMorse(_))));
    }

    #[test]
    fn constant_path_branch() {
        let m = model();
        let h = HamiltonianSpec::Quadratic.bind(&m).unwrap();
        let start = CriticalPoint::classify(&m, &h, &linear_point(&m, 2), 1e-7).unwrap();
        let br = continue_branch(&m, &|_| HamiltonianSpec::Quadratic, &start, 4, &NewtonOptions::default(), None)
            .unwrap();
        assert_eq!(br.points.len(), 5);
        assert!(br.points.iter().all(|p| p.z == start.z));
        assert!(br.index_jumps.is_empty());
    }

    #[test]
    fn distances_respect_symmetry() {
        let m = model();
        let z = linear_point(&m, 2);
        let rotated = z.rotated(1.3);
        assert!(orbit_distance(&m, &z, &rotated, OrbitType::Circle) < 1e-12);
        assert!(orbit_distance(&m, &z, &rotated, OrbitType::Isolated) > 0.1);
        assert!(orbit_distance(&m, &z, &z.negated_field(), OrbitType::Pair) < 1e-15);
        let c = canonical_representative(&rotated, OrbitType::Circle);
        assert!(c.u.max_abs_diff(&z.u) < 1e-14);
        let p = canonical_representative(&z.negated_field(), OrbitType::Pair);
        assert_eq!(p, z);
    }

    #[test]
    fn scan_reproduces_linear_set() {
        let m = model();
        let h = HamiltonianSpec::Quadratic.bind(&m).unwrap();
        let w = window_scan(&m, &h, 0.0, 2.0, &ScanOptions::default(), &NewtonOptions::default()).unwrap();
        let lin = linear_critical_points(&m, 0.0, 2.0, 1e-7).unwrap();
        assert_eq!(w.points, lin.points);
        let empty = window_scan(&m, &h, 10.0, 11.0, &ScanOptions::default(), &NewtonOptions::default()).unwrap();
        assert!(empty.is_empty());
    }
}
