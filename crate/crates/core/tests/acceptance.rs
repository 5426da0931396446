//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use dirac_floer_core::complex::homology;
use dirac_floer_core::critical::{linear_point, window_scan, CritWindow, NewtonOptions, OrbitType, ScanOptions};
use dirac_floer_core::flow::{integrate_descending, ContinuationControls, FlowControls, Limit, ShootingControls};
use dirac_floer_core::functional::{energy, gradient, hessian_form, index_data, Pencil};
use dirac_floer_core::hamiltonian::{Hamiltonian, HamiltonianSpec};
use dirac_floer_core::pipeline::{continuation_pipeline, critical_window, plain_complex, s1_complex, z2_complex};
use dirac_floer_core::spectral::{FieldCoeffs, PointZ, SpectrumSpec};
use dirac_floer_core::Complex64;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run(id: &str, title: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let in_time = took <= budget;
    let pass = out.pass && in_time;
    let timing = format!("{:.2}s of {}s", took.as_secs_f64(), budget.as_secs());
    println!(
        "{} {id} {title} [{timing}{}] {}",
        if pass { "PASS" } else { "FAIL" },
        if in_time { "" } else { ", over budget" },
        out.detail
    );
    pass
}

fn windows_opts() -> (ScanOptions, NewtonOptions) {
    (ScanOptions::default(), NewtonOptions::default())
}

/// Index of a linear circle at eigenvalue `mu`: two real directions per
/// positive eigenvalue below it.
fn linear_index_oracle(eigs: &[f64], mu: f64) -> i64 {
    2 * eigs.iter().filter(|&&e| e > 0.0 && e < mu).count() as i64
}

fn c1_linear_structure() -> Outcome {
    let m = SpectrumSpec::circle(4, 64).unwrap();
    let h = HamiltonianSpec::Quadratic.bind(&m).unwrap();
    let (scan, opts) = windows_opts();
    let w = match window_scan(&m, &h, 0.0, 3.6, &scan, &opts) {
        Ok(w) => w,
        Err(e) => return outcome(false, format!("scan failed: {e}")),
    };
    let expected = [0.5, 1.5, 2.5, 3.5];
    let mut ok = w.len() == expected.len();
    let mut worst = 0.0f64;
    for (p, &mu) in w.points.iter().zip(&expected) {
        worst = worst.max((p.energy - mu).abs());
        ok &= p.orbit_type == OrbitType::Circle;
        ok &= p.rel_index == linear_index_oracle(m.eigenvalues(), mu);
        // Linear circles live in a single mode with |a|^2 = 2 and lambda = mu.
        let k = m.mode_index_of(mu).unwrap();
        ok &= (p.z.u.0[k].norm_sqr() - 2.0).abs() < 1e-10 && (p.z.lambda - mu).abs() < 1e-10;
    }
    ok &= worst < 1e-10;
    let idx: Vec<i64> = w.points.iter().map(|p| p.rel_index).collect();
    let en: Vec<String> = w.points.iter().map(|p| format!("{:.12}", p.energy)).collect();
    outcome(ok, format!("circles={} energies=[{}] indices={idx:?} max|E-mu|={worst:.1e}", w.len(), en.join(", ")))
}

/// Sup-norm error against `a_i(0) exp((lambda - mu_i) t / |mu_i|)` over all
/// recorded states, and the final-time error.
fn frozen_flow_errors(m: &SpectrumSpec, z0: &PointZ, dt: f64, t_max: f64) -> (f64, f64) {
    let h = HamiltonianSpec::Quadratic.bind(m).unwrap();
    let c = FlowControls { dt, t_max, freeze_lambda: true, record_every: 1, escape: 1e6, ..Default::default() };
    let tr = integrate_descending(m, &h, z0, &c).unwrap();
    assert!((tr.times.last().unwrap() - t_max).abs() < 1e-9, "integration stopped early");
    let mut sup = 0.0f64;
    let mut last = 0.0;
    for (t, z) in tr.times.iter().zip(&tr.states) {
        let mut err = 0.0f64;
        for ((a, a0), mu) in z.u.0.iter().zip(&z0.u.0).zip(m.eigenvalues()) {
            let exact = a0 * ((z0.lambda - mu) * t / mu.abs()).exp();
            err = err.max((a - exact).norm());
        }
        sup = sup.max(err);
        last = err;
    }
    (sup, last)
}

fn c2_closed_form() -> Outcome {
    let m = SpectrumSpec::circle(2, 32).unwrap();
    let u = FieldCoeffs(vec![
        Complex64::new(0.02, -0.01),
        Complex64::new(-0.03, 0.02),
        Complex64::new(0.04, 0.01),
        Complex64::new(0.01, 0.03),
    ]);
    let z0 = PointZ::new(u, 0.25);
    let (sup, _) = frozen_flow_errors(&m, &z0, 1e-3, 5.0);
    let (_, e1) = frozen_flow_errors(&m, &z0, 0.1, 5.0);
    let (_, e2) = frozen_flow_errors(&m, &z0, 0.05, 5.0);
    let ratio = e1 / e2;
    let ok = sup < 1e-6 && (ratio - 16.0).abs() <= 3.0;
    outcome(ok, format!("sup error at dt=1e-3: {sup:.2e}; error ratio dt 0.1 -> 0.05: {ratio:.3}"))
}

fn random_point(rng: &mut ChaCha8Rng, m: &SpectrumSpec, scale: f64) -> PointZ {
    let u = (0..m.n_modes())
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * scale, im * scale)
        })
        .collect();
    PointZ::new(FieldCoeffs(u), rng.random_range(-2.0..2.0))
}

fn test_hamiltonians() -> Vec<HamiltonianSpec> {
    vec![
        HamiltonianSpec::Quadratic,
        HamiltonianSpec::power(3.0, 1.0),
        HamiltonianSpec::mixture(0.5, HamiltonianSpec::Quadratic, HamiltonianSpec::power(3.0, 2.0 * PI)),
        HamiltonianSpec::linear_break(1e-2, HamiltonianSpec::power(3.0, 1.0)),
        HamiltonianSpec::even_break(1e-2, None, HamiltonianSpec::Quadratic),
    ]
}

fn c3_action_bound() -> Outcome {
    let m = SpectrumSpec::circle(2, 32).unwrap();
    let hams: Vec<Hamiltonian> = test_hamiltonians().iter().map(|s| s.bind(&m).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // The functional is unbounded below; runs stop once they leave the
    // window [E(0) - 5, E(0)].
    let base = FlowControls { dt: 1e-3, t_max: 4.0, ..Default::default() };
    let mut worst_rise = f64::NEG_INFINITY;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut escaped = 0;
    let mut ok = true;
    for k in 0..50 {
        let h = &hams[k % hams.len()];
        // Alternate between starts near a linear circle and fully random starts.
        let z0 = if k % 2 == 0 {
            let base = linear_point(&m, m.mode_index_of(if k % 4 == 0 { 0.5 } else { 1.5 }).unwrap());
            let kick = random_point(&mut rng, &m, 0.1);
            PointZ::new(base.u.add(&kick.u), base.lambda + 0.1 * kick.lambda)
        } else {
            random_point(&mut rng, &m, 0.4)
        };
        let c = FlowControls { energy_floor: Some(energy(&m, h, &z0).unwrap() - 5.0), ..base.clone() };
        let tr = match integrate_descending(&m, h, &z0, &c) {
            Ok(t) => t,
            Err(e) => return outcome(false, format!("trajectory {k} failed: {e}")),
        };
        escaped += usize::from(matches!(tr.limit, Limit::Escaped | Limit::BelowFloor));
        let rise = tr.max_energy_increase();
        let de = tr.energies[0] - tr.energies[tr.energies.len() - 1];
        let excess = tr.action - de;
        worst_rise = worst_rise.max(rise);
        worst_excess = worst_excess.max(excess);
        ok &= rise <= 1e-8 && excess <= 1e-6;
    }
    outcome(
        ok,
        format!("50 trajectories ({escaped} left the window); max energy rise {worst_rise:.2e}; max action - dE {worst_excess:.2e}"),
    )
}

fn c4_boundary_operator() -> Outcome {
    let m = SpectrumSpec::circle(2, 32).unwrap();
    let spec = HamiltonianSpec::linear_break(1e-3, HamiltonianSpec::Quadratic);
    let h = spec.bind(&m).unwrap();
    let (scan, opts) = windows_opts();
    let w = match critical_window(&m, &spec, 0.0, 2.0, &scan, &opts) {
        Ok(w) => w,
        Err(e) => return outcome(false, format!("window failed: {e}")),
    };
    let rep = match plain_complex(&m, &h, &w, &ShootingControls::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("complex failed: {e}")),
    };
    // Broken points stay within O(delta) of their circle's energy.
    let circle_of = |i: usize| (w.points[i].energy - 0.5).round() as i64;
    let mut ok = w.len() == 4;
    let mut in_circle = Vec::new();
    let mut cross = Vec::new();
    for e in &rep.entries {
        if circle_of(e.from) == circle_of(e.to) {
            in_circle.push(e.parity);
            ok &= e.parity == Some(0);
        } else {
            cross.push(e.parity);
            ok &= e.parity == Some(1);
        }
    }
    ok &= !in_circle.is_empty() && !cross.is_empty();
    let (d2, dims) = match &rep.complex {
        Some(cx) => {
            let hom = homology(cx);
            let dims: Vec<usize> = (0..4).map(|d| hom.dim(d)).collect();
            (cx.d_squared_failures(), dims)
        }
        None => return outcome(false, format!("complex not assembled: {:?}", rep.error)),
    };
    ok &= d2.is_empty() && dims == vec![1, 0, 0, 1];
    outcome(
        ok,
        format!("in-circle parities {in_circle:?}; cross-circle parities {cross:?}; d^2 failures {d2:?}; homology {dims:?}"),
    )
}

fn c5_equivariant() -> Outcome {
    let m = SpectrumSpec::circle(2, 32).unwrap();
    let (scan, opts) = windows_opts();
    let quad = HamiltonianSpec::Quadratic.bind(&m).unwrap();
    let circles = match window_scan(&m, &quad, 0.0, 2.0, &scan, &opts) {
        Ok(w) => w,
        Err(e) => return outcome(false, format!("scan failed: {e}")),
    };
    let lb = HamiltonianSpec::linear_break(1e-3, HamiltonianSpec::Quadratic).bind(&m).unwrap();
    let c = ShootingControls::default();
    let s1 = match s1_complex(&m, &lb, &circles, &c, 8, &opts) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("circle complex failed: {e}")),
    };
    let Some(s1_cx) = &s1.complex else {
        return outcome(false, format!("circle complex not assembled: {:?}", s1.error));
    };
    let s1_hom = homology(s1_cx);
    let top = s1_hom.degrees.iter().copied().max().unwrap_or(0);
    let s1_dims: Vec<usize> = (0..=top).map(|d| s1_hom.dim(d)).collect();
    let mut ok = s1_cx.d_squared_failures().is_empty() && !s1_dims.is_empty();
    for (d, &n) in s1_dims.iter().enumerate() {
        ok &= n == usize::from(d % 2 == 0);
    }

    let even_spec = HamiltonianSpec::even_break(1e-3, None, HamiltonianSpec::Quadratic);
    let even = even_spec.bind(&m).unwrap();
    let classes = match critical_window(&m, &even_spec, 0.0, 2.0, &scan, &opts) {
        Ok(w) => w,
        Err(e) => return outcome(false, format!("pair window failed: {e}")),
    };
    let z2 = match z2_complex(&m, &even, &classes, &c) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("pair complex failed: {e}")),
    };
    let Some(z2_cx) = &z2.complex else {
        return outcome(false, format!("pair complex not assembled: {:?}", z2.error));
    };
    let z2_hom = homology(z2_cx);
    let z2_dims: Vec<(i64, usize)> = z2_hom.degrees.iter().map(|&d| (d, z2_hom.dim(d))).collect();
    ok &= z2_cx.d_squared_failures().is_empty() && !z2_dims.is_empty();
    ok &= z2_dims.iter().all(|&(_, n)| n == 1);
    outcome(ok, format!("circle homology by degree {s1_dims:?}; pair homology {z2_dims:?}"))
}

fn c6_stability() -> Outcome {
    let m = SpectrumSpec::circle(2, 32).unwrap();
    let (scan, opts) = windows_opts();
    let target = HamiltonianSpec::power(3.0, 2.0 * PI);
    let path = |s: f64| {
        HamiltonianSpec::linear_break(1e-3, HamiltonianSpec::mixture(s, HamiltonianSpec::Quadratic, target.clone()))
    };
    let start: CritWindow = match critical_window(&m, &path(0.0), 0.0, 2.0, &scan, &opts) {
        Ok(w) => w,
        Err(e) => return outcome(false, format!("start window failed: {e}")),
    };
    let steps = 4;
    let rep = match continuation_pipeline(
        &m,
        &path,
        &start,
        steps,
        &ShootingControls::default(),
        &ContinuationControls::default(),
        &opts,
    ) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("continuation failed: {e}")),
    };
    let mut ok = true;
    let mut step_failures = Vec::new();
    for s in &rep.steps {
        match &s.map {
            Some(map) => {
                if !map.is_chain_map() {
                    step_failures.push(format!("{}..{}: {:?}", s.t0, s.t1, map.chain_map_failures));
                }
            }
            None => step_failures.push(format!("{}..{}: {:?}", s.t0, s.t1, s.error)),
        }
    }
    ok &= step_failures.is_empty();
    let composite_chain = rep.composite.as_ref().is_some_and(|c| c.is_chain_map());
    ok &= composite_chain && rep.interior_isomorphism == Some(true);

    let power = target.bind(&m).unwrap();
    let nonlinear = window_scan(&m, &power, 0.0, 2.0, &scan, &opts).map(|w| w.len()).unwrap_or(0);
    ok &= nonlinear > 0;
    outcome(
        ok,
        format!(
            "{steps} steps; step failures {step_failures:?}; composite chain map {composite_chain}; \
             induced ranks {:?}; interior isomorphism {:?}; nonlinear window points {nonlinear}",
            rep.induced, rep.interior_isomorphism
        ),
    )
}

fn real_energy(m: &SpectrumSpec, h: &Hamiltonian, x: &DVector<f64>) -> f64 {
    energy(m, h, &PointZ::from_real(x.as_slice())).unwrap()
}

/// `dE` in real coordinates: the gradient lowered by the metric.
fn real_differential(m: &SpectrumSpec, h: &Hamiltonian, x: &DVector<f64>) -> DVector<f64> {
    let g = gradient(m, h, &PointZ::from_real(x.as_slice())).unwrap().to_real();
    g.component_mul(&DVector::from_vec(m.metric_diag()))
}

fn c7_calculus() -> Outcome {
    let m = SpectrumSpec::circle(2, 32).unwrap();
    let hams: Vec<Hamiltonian> = test_hamiltonians().iter().map(|s| s.bind(&m).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = m.real_dim();
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    let mut index_mismatch = 0;
    for k in 0..100 {
        let h = &hams[k % hams.len()];
        let z = random_point(&mut rng, &m, 0.5);
        let x = z.to_real();
        let d = real_differential(&m, h, &x);
        let form = hessian_form(&m, h, &z).unwrap();

        let mut fd_g = DVector::zeros(n);
        let mut fd_h = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            let hg = 1e-5;
            fd_g[j] = (real_energy(&m, h, &(&x + &e * hg)) - real_energy(&m, h, &(&x - &e * hg))) / (2.0 * hg);
            let hh = 1e-5;
            let col = (real_differential(&m, h, &(&x + &e * hh)) - real_differential(&m, h, &(&x - &e * hh))) / (2.0 * hh);
            fd_h.set_column(j, &col);
        }
        worst_g = worst_g.max((&fd_g - &d).amax() / d.amax().max(1.0));
        worst_h = worst_h.max((&fd_h - &form.b).amax() / form.b.amax().max(1.0));

        // Sylvester: the inertia of (B, G) equals that of (B, I).
        let with_g = index_data(&m, &form, 1e-9);
        let (neg_id, zero_id, _) = Pencil::new(&form.b, &DVector::from_element(n, 1.0)).inertia(1e-9);
        if with_g.n_neg != neg_id || with_g.kernel_dim != zero_id {
            index_mismatch += 1;
        }
    }
    let ok = worst_g < 1e-6 && worst_h < 1e-5 && index_mismatch == 0;
    outcome(
        ok,
        format!("100 points; gradient rel err {worst_g:.2e}; Hessian rel err {worst_h:.2e}; index mismatches {index_mismatch}"),
    )
}

fn c8_growth() -> Outcome {
    let m = SpectrumSpec::circle(2, 32).unwrap();
    let power = HamiltonianSpec::power(3.0, 1.0).bind(&m).unwrap().verify_growth(10.0).unwrap();
    let quad = HamiltonianSpec::Quadratic.bind(&m).unwrap().verify_growth(10.0).unwrap();
    let ok = power.conforming() && (power.c1 - 0.75).abs() < 1e-9 && power.c2.abs() < 1e-9 && !quad.conforming();
    outcome(
        ok,
        format!(
            "power p=3: c1={:.12} c2={:.2e} conforming={}; quadratic conforming={}",
            power.c1,
            power.c2,
            power.conforming(),
            quad.conforming()
        ),
    )
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        run("C1", "linear critical structure", secs(10), c1_linear_structure),
        run("C2", "integrator vs closed-form flow", secs(5), c2_closed_form),
        run("C3", "action bound and monotonicity", secs(60), c3_action_bound),
        run("C4", "boundary operator, broken linear case", secs(600), c4_boundary_operator),
        run("C5", "equivariant homology tables", secs(600), c5_equivariant),
        run("C6", "stability under homotopy", secs(900), c6_stability),
        run("C7", "calculus consistency", secs(30), c7_calculus),
        run("C8", "growth hypothesis checker", secs(1), c8_growth),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
