//! One function per subcommand. Every artifact is written from this
//! (the calling) thread; parallel work happens inside the core pipeline.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dirac_floer_core::complex::ParityEntry;
use dirac_floer_core::config::{ComplexFlavor, RunConfig};
use dirac_floer_core::critical::{window_scan, CritWindow};
use dirac_floer_core::flow::{integrate_descending, ContinuationControls, FlowControls, OrbitCount};
use dirac_floer_core::functional::{energy, gradient, hessian_form, index_data, Pencil};
use dirac_floer_core::hamiltonian::HamiltonianSpec;
use dirac_floer_core::pipeline::{
    continuation_pipeline, critical_window, plain_complex, s1_complex, z2_complex, ComplexReport,
};
use dirac_floer_core::spectral::{PointZ, SpectrumSpec};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::Stage;

pub enum Status {
    Done,
    /// The stage ran but could not decide its result; carries the message
    /// for stderr.
    Failed(String),
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    model: SpectrumSpec,
    spec: HamiltonianSpec,
    hash: String,
}

pub fn run(stage: Stage, cfg: &RunConfig, out: &Path) -> Result<Status> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let canonical = serde_json::to_string(cfg)?;
    let ctx = Ctx {
        cfg,
        out,
        model: cfg.spectrum()?,
        spec: cfg.ham_spec()?,
        hash: hex::encode(Sha256::digest(canonical.as_bytes())),
    };
    match stage {
        Stage::Spectrum => spectrum(&ctx),
        Stage::Crit => crit(&ctx),
        Stage::Flow => flow(&ctx),
        Stage::Orbits => orbits(&ctx),
        Stage::Complex => complex(&ctx),
        Stage::Continue => continuation(&ctx),
        Stage::Verify => verify(&ctx),
    }
}

fn write_json(ctx: &Ctx, name: &str, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(ctx, name, &text)
}

fn write_text(ctx: &Ctx, name: &str, text: &str) -> Result<()> {
    let path = ctx.out.join(name);
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn spectrum(ctx: &Ctx) -> Result<Status> {
    let m = &ctx.model;
    let modes: Vec<Vec<[f64; 2]>> =
        (0..m.n_modes()).map(|i| m.mode(i).iter().map(|c| [c.re, c.im]).collect()).collect();
    let doc = json!({
        "config_hash": ctx.hash,
        "kind": m.kind(),
        "eigenvalues": m.eigenvalues(),
        "n_neg": m.n_neg(),
        "grid_size": m.grid_size(),
        "frequencies": m.frequencies(),
        "nodes": m.nodes(),
        "quad_weights": m.quad_weights(),
        "orthonormality_error": m.orthonormality_error(),
        "modes": modes,
    });
    write_json(ctx, "spectrum.json", &doc)?;
    println!("{} modes, {} negative, grid {}", m.n_modes(), m.n_neg(), m.grid_size());
    Ok(Status::Done)
}

fn scan_window(ctx: &Ctx) -> Result<CritWindow> {
    let c = ctx.cfg;
    Ok(critical_window(&ctx.model, &ctx.spec, c.window.a, c.window.b, &c.scan_options(), &c.newton_options())?)
}

fn write_window(ctx: &Ctx, w: &CritWindow) -> Result<()> {
    write_json(ctx, "critical_points.json", &json!({ "config_hash": ctx.hash, "window": w }))
}

fn crit(ctx: &Ctx) -> Result<Status> {
    let w = scan_window(ctx)?;
    write_window(ctx, &w)?;
    for p in &w.points {
        println!("E = {:.12}  index {:>3}  kernel {}  {:?}", p.energy, p.rel_index, p.kernel_dim, p.orbit_type);
    }
    Ok(Status::Done)
}

fn flow(ctx: &Ctx) -> Result<Status> {
    let z = ctx.cfg.start_point(&ctx.model)?;
    let ham = ctx.spec.bind(&ctx.model)?;
    let tr = integrate_descending(&ctx.model, &ham, &z, &ctx.cfg.flow_controls())?;
    write_text(ctx, "trajectory.csv", &tr.to_csv())?;
    let last = tr.energies.last().copied().unwrap_or(f64::NAN);
    println!(
        "{} records, t = {:.4}, energy {:.12} -> {:.12}, action {:.6e}, limit {}",
        tr.states.len(),
        tr.times.last().copied().unwrap_or(0.0),
        tr.energies[0],
        last,
        tr.action,
        serde_json::to_string(&tr.limit)?
    );
    Ok(Status::Done)
}

fn compute_report(ctx: &Ctx) -> Result<ComplexReport> {
    let c = ctx.cfg;
    let (m, opts, shooting) = (&ctx.model, c.newton_options(), c.shooting_controls());
    let ham = ctx.spec.bind(m)?;
    Ok(match c.complex.flavor {
        ComplexFlavor::Plain => plain_complex(m, &ham, &scan_window(ctx)?, &shooting)?,
        ComplexFlavor::S1 => {
            let base = c.hamiltonian.base_spec("hamiltonian")?.bind(m)?;
            if !base.is_s1_invariant() || ham.is_s1_invariant() {
                bail!("the circle complex needs a phase-invariant Hamiltonian with a break term");
            }
            let circles = window_scan(m, &base, c.window.a, c.window.b, &c.scan_options(), &opts)?;
            s1_complex(m, &ham, &circles, &shooting, c.scan.phases, &opts)?
        }
        ComplexFlavor::Z2 => z2_complex(m, &ham, &scan_window(ctx)?, &shooting)?,
    })
}

/// The parity table for this config, from `parities.json` when its hash
/// matches and computed (and cached) otherwise.
fn report(ctx: &Ctx) -> Result<ComplexReport> {
    let path = ctx.out.join("parities.json");
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(doc) = serde_json::from_str::<Value>(&text) {
            if doc["config_hash"] == ctx.hash.as_str() {
                if let Ok(r) = serde_json::from_value::<ComplexReport>(doc["report"].clone()) {
                    eprintln!("using cached parities from {}", path.display());
                    return Ok(r);
                }
            }
        }
    }
    let r = compute_report(ctx)?;
    write_json(ctx, "parities.json", &json!({ "config_hash": ctx.hash, "report": r }))?;
    Ok(r)
}

fn describe_count(c: &OrbitCount) -> String {
    let levels: Vec<String> =
        c.confidence.levels.iter().map(|l| format!("mesh {} brackets {} roots {}", l.mesh, l.brackets, l.roots)).collect();
    format!(
        "  {:.8} (index {}) -> {:.8} (index {}): count {:?}, method {:?}, symmetry {:?}, radius {:.1e}, \
         half-radius roots {:?}, rejected brackets {}\n    levels: {}\n    note: {}\n",
        c.from.energy,
        c.from.rel_index,
        c.to.energy,
        c.to.rel_index,
        c.count,
        c.confidence.method,
        c.confidence.symmetry,
        c.confidence.radius,
        c.confidence.half_radius_roots,
        c.confidence.rejected_brackets,
        levels.join("; "),
        c.confidence.note
    )
}

/// Writes `transcript.txt` for every undecided entry; returns the failure
/// status when there is one.
fn transcript(ctx: &Ctx, r: &ComplexReport) -> Result<Option<Status>> {
    let undecided: Vec<&ParityEntry> = r.undecided();
    if undecided.is_empty() && r.error.is_none() {
        return Ok(None);
    }
    let mut t = String::new();
    writeln!(t, "undecided parities: {}", undecided.len())?;
    if let Some(e) = &r.error {
        writeln!(t, "assembly: {e}")?;
    }
    for c in r.orbit_counts.iter().filter(|c| c.parity.is_none()) {
        t.push_str(&describe_count(c));
    }
    for c in r.class_counts.iter().filter(|c| c.parity.is_none()) {
        writeln!(t, "  class {:.8} -> {:.8}: method {:?}", c.from.energy, c.to.energy, c.method)?;
        for p in &c.parts {
            t.push_str(&describe_count(p));
        }
    }
    write_text(ctx, "transcript.txt", &t)?;
    Ok(Some(Status::Failed(format!("{t}transcript written to {}", ctx.out.join("transcript.txt").display()))))
}

fn print_entries(r: &ComplexReport) {
    for e in &r.entries {
        let (a, b) = (&r.window.points[e.from], &r.window.points[e.to]);
        let p = e.parity.map_or("?".to_string(), |p| p.to_string());
        println!("{:.8} (index {}) -> {:.8} (index {}): parity {p}", a.energy, a.rel_index, b.energy, b.rel_index);
    }
}

fn orbits(ctx: &Ctx) -> Result<Status> {
    let r = report(ctx)?;
    write_window(ctx, &r.window)?;
    print_entries(&r);
    Ok(transcript(ctx, &r)?.unwrap_or(Status::Done))
}

/// Writes the boundary matrices and the homology table. Returns the
/// homology dimensions by degree.
fn write_complex(ctx: &Ctx, r: &ComplexReport) -> Result<Option<Vec<(i64, usize)>>> {
    let (Some(cx), Some(h)) = (&r.complex, &r.homology) else {
        return Ok(None);
    };
    for d in cx.degrees() {
        write_text(ctx, &format!("boundary_{d}.txt"), &cx.boundary_text(d))?;
    }
    let dims: Vec<(i64, usize)> = h.degrees.iter().map(|&d| (d, h.dim(d))).collect();
    write_json(
        ctx,
        "homology.json",
        &json!({
            "config_hash": ctx.hash,
            "flavor": h.flavor,
            "window": cx.window,
            "d_squared_failures": cx.d_squared_failures(),
            "homology": h,
        }),
    )?;
    Ok(Some(dims))
}

fn complex(ctx: &Ctx) -> Result<Status> {
    let r = report(ctx)?;
    write_window(ctx, &r.window)?;
    if let Some(s) = transcript(ctx, &r)? {
        return Ok(s);
    }
    let Some(dims) = write_complex(ctx, &r)? else {
        bail!("complex was not assembled");
    };
    for (d, n) in dims {
        println!("H_{d} = {}", if n == 0 { "0".to_string() } else { format!("Z2^{n}") });
    }
    Ok(Status::Done)
}

fn continuation(ctx: &Ctx) -> Result<Status> {
    let c = ctx.cfg;
    let Some(h) = &c.homotopy else {
        bail!("homotopy: section required for this subcommand");
    };
    if c.complex.flavor != ComplexFlavor::Plain {
        bail!("complex.flavor: continuation maps are built for the plain complex only");
    }
    let base = c.hamiltonian.base_spec("hamiltonian")?;
    let target = h.target.spec("homotopy.target")?;
    let path = |s: f64| {
        c.with_break(HamiltonianSpec::mixture(s, base.clone(), target.clone())).expect("break validated at load")
    };
    let start = critical_window(&ctx.model, &path(0.0), c.window.a, c.window.b, &c.scan_options(), &c.newton_options())?;
    let controls = h.continuation.clone().unwrap_or_else(ContinuationControls::default);
    let rep = continuation_pipeline(
        &ctx.model,
        &path,
        &start,
        h.steps,
        &c.shooting_controls(),
        &controls,
        &c.newton_options(),
    )?;
    write_json(ctx, "continuation.json", &json!({ "config_hash": ctx.hash, "report": rep }))?;
    let mut problems = Vec::new();
    for (t, cx) in rep.ts.iter().zip(&rep.complexes) {
        if cx.complex.is_none() {
            problems.push(format!("complex at t = {t}: {}", cx.error.clone().unwrap_or_default()));
        }
    }
    for s in &rep.steps {
        match &s.map {
            Some(m) if !m.is_chain_map() => {
                problems.push(format!("step {}..{}: not a chain map at degrees {:?}", s.t0, s.t1, m.chain_map_failures))
            }
            Some(_) => {}
            None => problems.push(format!("step {}..{}: {}", s.t0, s.t1, s.error.clone().unwrap_or_default())),
        }
    }
    println!("induced ranks {:?}", rep.induced);
    println!("isomorphism on interior homology: {:?}", rep.interior_isomorphism);
    if problems.is_empty() {
        Ok(Status::Done)
    } else {
        let t = problems.join("\n") + "\n";
        write_text(ctx, "transcript.txt", &t)?;
        Ok(Status::Failed(t))
    }
}

#[derive(Serialize)]
struct Check {
    name: String,
    pass: bool,
    detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check { name: name.to_string(), pass, detail }
}

/// Largest relative deviation of the analytic differential from central
/// differences of the energy.
fn gradient_deviation(m: &SpectrumSpec, ham: &dirac_floer_core::hamiltonian::Hamiltonian, z: &PointZ) -> Result<f64> {
    let x = z.to_real();
    let metric = DVector::from_vec(m.metric_diag());
    let d = gradient(m, ham, z)?.to_real().component_mul(&metric);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for j in 0..x.len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[j] += h;
        xm[j] -= h;
        let fd = (energy(m, ham, &PointZ::from_real(xp.as_slice()))? - energy(m, ham, &PointZ::from_real(xm.as_slice()))?)
            / (2.0 * h);
        worst = worst.max((fd - d[j]).abs());
    }
    Ok(worst / d.amax().max(1.0))
}

fn verify(ctx: &Ctx) -> Result<Status> {
    let (m, c) = (&ctx.model, ctx.cfg);
    let ham = ctx.spec.bind(m)?;
    let mut checks = Vec::new();

    let orth = m.orthonormality_error();
    checks.push(check("modes orthonormal", orth < 1e-12, format!("max Gram deviation {orth:.2e}")));

    let r = report(ctx)?;
    write_window(ctx, &r.window)?;
    let w = &r.window;
    let worst_res = w.points.iter().map(|p| p.residual).fold(0.0, f64::max);
    checks.push(check(
        "critical window",
        !w.is_empty() && worst_res < 1e-8,
        format!("{} points, max residual {worst_res:.2e}", w.len()),
    ));

    // Circle windows are critical for the unbroken base, not for `ham`.
    let point_ham = match c.complex.flavor {
        ComplexFlavor::S1 => c.hamiltonian.base_spec("hamiltonian")?.bind(m)?,
        _ => ham.clone(),
    };
    let mut mismatched = 0;
    for p in &w.points {
        let form = hessian_form(m, &point_ham, &p.z)?;
        let tol = c.tolerances.kernel_tol;
        let with_g = index_data(m, &form, tol);
        let (neg, _, _) = Pencil::new(&form.b, &DVector::from_element(m.real_dim(), 1.0)).inertia(tol);
        mismatched += usize::from(with_g.n_neg != neg || with_g.rel_index != p.rel_index);
    }
    checks.push(check("index independent of the metric", mismatched == 0, format!("{mismatched} mismatches")));

    let mut rng = ChaCha8Rng::seed_from_u64(c.rng_seed);
    let mut random = |scale: f64| -> Vec<f64> { (0..m.real_dim()).map(|_| rng.random_range(-scale..scale)).collect() };
    let mut worst_fd = 0.0f64;
    for _ in 0..20 {
        let z = PointZ::from_real(&random(1.0));
        worst_fd = worst_fd.max(gradient_deviation(m, &ham, &z)?);
    }
    checks.push(check("gradient against finite differences", worst_fd < 1e-6, format!("max relative error {worst_fd:.2e}")));

    let (mut rise, mut excess) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &w.points {
        let kick = random(0.05);
        let x: Vec<f64> = p.z.to_real().iter().zip(&kick).map(|(a, b)| a + b).collect();
        let z = PointZ::from_real(&x);
        let e0 = energy(m, &ham, &z)?;
        let fc = FlowControls { dt: 1e-3, t_max: 2.0, energy_floor: Some(e0 - 5.0), ..FlowControls::default() };
        let tr = integrate_descending(m, &ham, &z, &fc)?;
        rise = rise.max(tr.max_energy_increase());
        excess = excess.max(tr.action - (tr.energies[0] - tr.energies[tr.energies.len() - 1]));
    }
    checks.push(check(
        "energy descends and action is bounded",
        rise <= 1e-8 && excess <= 1e-6,
        format!("max energy rise {rise:.2e}, max action - dE {excess:.2e}"),
    ));

    let growth = c.hamiltonian.base_spec("hamiltonian")?.bind(m)?.verify_growth(10.0)?;

    let undecided = r.undecided().len();
    checks.push(check("parities decided", undecided == 0 && r.error.is_none(), format!("{undecided} undecided")));
    let dims = write_complex(ctx, &r)?;
    let d2 = r.complex.as_ref().map(|cx| cx.d_squared_failures());
    checks.push(check("boundary squares to zero", d2.as_ref().is_some_and(|v| v.is_empty()), format!("{d2:?}")));
    if let (ComplexFlavor::Plain, Some(h)) = (c.complex.flavor, &r.homology) {
        let interior = h.interior();
        checks.push(check(
            "interior homology vanishes",
            interior.iter().all(|&(_, n)| n == 0),
            format!("interior {interior:?}"),
        ));
    }

    let all = checks.iter().all(|ch| ch.pass);
    write_json(
        ctx,
        "verify.json",
        &json!({ "config_hash": ctx.hash, "pass": all, "checks": checks, "homology": dims, "growth": growth }),
    )?;
    for ch in &checks {
        println!("{} {}: {}", if ch.pass { "PASS" } else { "FAIL" }, ch.name, ch.detail);
    }
    if let Some(d) = &dims {
        println!("homology {:?}", d.iter().map(|(_, n)| *n).collect::<Vec<_>>());
    }
    if all {
        return Ok(Status::Done);
    }
    if let Some(s) = transcript(ctx, &r)? {
        return Ok(s);
    }
    Ok(Status::Failed("verification failed".into()))
}
