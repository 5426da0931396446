//! JSON run configuration.
//!
//! ```json
//! {
//!   "model": {"type": "circle", "N": 2, "Q": 32},
//!   "hamiltonian": {"type": "quadratic", "break": {"kind": "linear", "delta": 1e-3}},
//!   "window": {"a": 0.0, "b": 2.0, "enlarge_M": 0.5},
//!   "rng_seed": 0
//! }
//! ```
//!
//! Every section except `model`, `hamiltonian` and `window` is optional.
//! Parse errors carry the path of the offending field; numeric checks run
//! at load time and report the same kind of path.

use serde::{Deserialize, Serialize};

use crate::critical::{NewtonOptions, ScanOptions};
use crate::error::{Error, Result};
use crate::flow::{ContinuationControls, FlowControls, ShootingControls};
use crate::hamiltonian::{HamiltonianSpec, Weights};
use crate::spectral::{FieldCoeffs, PointZ, SpectrumSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(rename = "type")]
    pub kind: ModelType,
    #[serde(rename = "N", default)]
    pub n: Option<usize>,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(default)]
    pub eigenvalues: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelType {
    Circle,
    Explicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamType {
    Quadratic,
    Power,
    Mixture,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakKind {
    Linear,
    Even,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BreakSection {
    pub kind: BreakKind,
    pub delta: f64,
    /// Linear break: profile supported on this mode only. Even break: use
    /// only this mode's frequency.
    #[serde(default)]
    pub mode: Option<usize>,
}

/// Flat Hamiltonian description. A mixture interpolates from `left`
/// (default quadratic) to `right` (default the power term given by `p`, `c`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamSection {
    #[serde(rename = "type")]
    pub kind: HamType,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub c: Option<Weights>,
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default)]
    pub left: Option<Box<HamSection>>,
    #[serde(default)]
    pub right: Option<Box<HamSection>>,
    #[serde(rename = "break", default)]
    pub brk: Option<BreakSection>,
}

impl HamSection {
    /// The Hamiltonian without its break.
    pub fn base_spec(&self, path: &str) -> Result<HamiltonianSpec> {
        let power = || -> Result<HamiltonianSpec> {
            let p = self.p.ok_or_else(|| field_err(path, "p", "required for power terms"))?;
            Ok(HamiltonianSpec::Power { p, c: self.c.clone().unwrap_or_default() })
        };
        Ok(match self.kind {
            HamType::Quadratic => HamiltonianSpec::Quadratic,
            HamType::Power => power()?,
            HamType::Mixture => {
                let t = self.t.ok_or_else(|| field_err(path, "t", "required for mixtures"))?;
                let left = match &self.left {
                    Some(l) => l.spec(&format!("{path}.left"))?,
                    None => HamiltonianSpec::Quadratic,
                };
                let right = match &self.right {
                    Some(r) => r.spec(&format!("{path}.right"))?,
                    None => power()?,
                };
                HamiltonianSpec::mixture(t, left, right)
            }
        })
    }

    /// Full description including the break, if any.
    pub fn spec(&self, path: &str) -> Result<HamiltonianSpec> {
        let base = self.base_spec(path)?;
        Ok(match &self.brk {
            None => base,
            Some(b) => wrap_break(b, base),
        })
    }
}

fn wrap_break(b: &BreakSection, base: HamiltonianSpec) -> HamiltonianSpec {
    match b.kind {
        BreakKind::Linear => HamiltonianSpec::LinearBreak {
            delta: b.delta,
            chi: None,
            base: Box::new(base),
        },
        BreakKind::Even => HamiltonianSpec::even_break(b.delta, b.mode, base),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub a: f64,
    pub b: f64,
    #[serde(rename = "enlarge_M", default = "default_enlarge")]
    pub enlarge_m: f64,
}

fn default_enlarge() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub random_seeds: usize,
    pub rng_seed: Option<u64>,
    pub continuation_steps: usize,
    pub phases: usize,
}

impl Default for ScanSection {
    fn default() -> Self {
        let d = ScanOptions::default();
        ScanSection {
            random_seeds: d.random_seeds,
            rng_seed: None,
            continuation_steps: d.continuation_steps,
            phases: d.phases,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub kernel_tol: f64,
    pub grad_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let d = NewtonOptions::default();
        Tolerances { kernel_tol: d.kernel_tol, grad_tol: d.grad_tol }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexFlavor {
    #[default]
    Plain,
    S1,
    Z2,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComplexSection {
    pub flavor: ComplexFlavor,
}

/// Homotopy from the configured Hamiltonian to `target`, subdivided into
/// `steps` mixtures. The break of the source Hamiltonian is applied along
/// the whole path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomotopySection {
    pub target: HamSection,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub continuation: Option<ContinuationControls>,
}

fn default_steps() -> usize {
    4
}

/// Starting point for the `flow` subcommand: a linear critical point
/// (optionally displaced) or explicit coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSection {
    #[serde(default)]
    pub mode: Option<usize>,
    #[serde(default)]
    pub re: Option<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<f64>>,
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Added to `Re a_mode` when starting from a linear critical point.
    #[serde(default)]
    pub displacement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub hamiltonian: HamSection,
    pub window: WindowSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub shooting: ShootingSection,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub complex: ComplexSection,
    #[serde(default)]
    pub homotopy: Option<HomotopySection>,
    #[serde(default)]
    pub start: Option<StartSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub dt: f64,
    pub t_max: f64,
    pub conv_tol: f64,
    pub escape: f64,
    pub backward: bool,
    pub record_every: usize,
    pub energy_floor: Option<f64>,
}

impl Default for FlowSection {
    fn default() -> Self {
        let d = FlowControls::default();
        FlowSection {
            dt: d.dt,
            t_max: d.t_max,
            conv_tol: d.conv_tol,
            escape: d.escape,
            backward: d.backward,
            record_every: d.record_every,
            energy_floor: d.energy_floor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShootingSection {
    pub radius: f64,
    pub mesh0: usize,
    pub max_refine: usize,
    pub dt: f64,
    pub t_max: f64,
}

impl Default for ShootingSection {
    fn default() -> Self {
        let d = ShootingControls::default();
        ShootingSection { radius: d.radius, mesh0: d.mesh0, max_refine: d.max_refine, dt: d.dt, t_max: d.t_max }
    }
}

fn field_err(path: &str, field: &str, msg: &str) -> Error {
    Error::Config(format!("{path}.{field}: {msg}"))
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{path}: must be finite and positive, got {v}")))
    }
}

impl RunConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        // The inner message already ends with the line and column.
        let cfg: RunConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Config(format!("{}: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.spectrum()?;
        let ham = self.ham_spec()?;
        ham.bind(&model).map_err(|e| Error::Config(format!("hamiltonian: {e}")))?;
        if let Some(b) = &self.hamiltonian.brk {
            if !(b.delta.is_finite() && b.delta != 0.0) {
                return Err(field_err("hamiltonian.break", "delta", "must be finite and nonzero"));
            }
            if let Some(m) = b.mode {
                if m >= model.n_modes() {
                    return Err(field_err("hamiltonian.break", "mode", "out of range"));
                }
            }
        }
        let w = &self.window;
        if !(w.a.is_finite() && w.b.is_finite() && w.a < w.b) {
            return Err(Error::Config(format!("window: need finite a < b, got [{}, {}]", w.a, w.b)));
        }
        if !(w.enlarge_m.is_finite() && w.enlarge_m >= 0.0) {
            return Err(field_err("window", "enlarge_M", "must be finite and nonnegative"));
        }
        positive("tolerances.kernel_tol", self.tolerances.kernel_tol)?;
        positive("tolerances.grad_tol", self.tolerances.grad_tol)?;
        positive("flow.dt", self.flow.dt)?;
        positive("flow.t_max", self.flow.t_max)?;
        positive("flow.conv_tol", self.flow.conv_tol)?;
        positive("flow.escape", self.flow.escape)?;
        positive("shooting.radius", self.shooting.radius)?;
        positive("shooting.dt", self.shooting.dt)?;
        positive("shooting.t_max", self.shooting.t_max)?;
        if self.shooting.mesh0 < 4 {
            return Err(field_err("shooting", "mesh0", "must be at least 4"));
        }
        if let Some(h) = &self.homotopy {
            let target = h.target.spec("homotopy.target")?;
            target.bind(&model).map_err(|e| Error::Config(format!("homotopy.target: {e}")))?;
            if h.steps == 0 {
                return Err(field_err("homotopy", "steps", "must be at least 1"));
            }
        }
        if let Some(s) = &self.start {
            self.start_point_from(&model, s)?;
        }
        Ok(())
    }

    pub fn spectrum(&self) -> Result<SpectrumSpec> {
        let m = &self.model;
        let res = match m.kind {
            ModelType::Circle => {
                let n = m.n.ok_or_else(|| field_err("model", "N", "required for circle models"))?;
                SpectrumSpec::circle(n, m.q)
            }
            ModelType::Explicit => {
                let e = m
                    .eigenvalues
                    .as_ref()
                    .ok_or_else(|| field_err("model", "eigenvalues", "required for explicit models"))?;
                SpectrumSpec::explicit(e, m.q)
            }
        };
        res.map_err(|e| Error::Config(format!("model: {e}")))
    }

    pub fn ham_spec(&self) -> Result<HamiltonianSpec> {
        let spec = self.hamiltonian.spec("hamiltonian")?;
        if let Some(b) = &self.hamiltonian.brk {
            if let (BreakKind::Linear, Some(mode)) = (b.kind, b.mode) {
                let n = self.spectrum()?.n_modes();
                let chi = FieldCoeffs::basis(n, mode, 1.0.into());
                return Ok(HamiltonianSpec::LinearBreak {
                    delta: b.delta,
                    chi: Some(chi),
                    base: Box::new(self.hamiltonian.base_spec("hamiltonian")?),
                });
            }
        }
        Ok(spec)
    }

    /// The configured break applied to another base Hamiltonian.
    pub fn with_break(&self, base: HamiltonianSpec) -> Result<HamiltonianSpec> {
        Ok(match &self.hamiltonian.brk {
            None => base,
            Some(b) => match (b.kind, b.mode) {
                (BreakKind::Linear, Some(mode)) => HamiltonianSpec::LinearBreak {
                    delta: b.delta,
                    chi: Some(FieldCoeffs::basis(self.spectrum()?.n_modes(), mode, 1.0.into())),
                    base: Box::new(base),
                },
                _ => wrap_break(b, base),
            },
        })
    }

    pub fn newton_options(&self) -> NewtonOptions {
        NewtonOptions {
            grad_tol: self.tolerances.grad_tol,
            kernel_tol: self.tolerances.kernel_tol,
            ..NewtonOptions::default()
        }
    }

    pub fn scan_options(&self) -> ScanOptions {
        ScanOptions {
            enlarge_m: self.window.enlarge_m,
            random_seeds: self.scan.random_seeds,
            rng_seed: self.scan.rng_seed.unwrap_or(self.rng_seed),
            continuation_steps: self.scan.continuation_steps,
            phases: self.scan.phases,
            ..ScanOptions::default()
        }
    }

    pub fn flow_controls(&self) -> FlowControls {
        FlowControls {
            dt: self.flow.dt,
            t_max: self.flow.t_max,
            conv_tol: self.flow.conv_tol,
            escape: self.flow.escape,
            backward: self.flow.backward,
            freeze_lambda: false,
            record_every: self.flow.record_every,
            energy_floor: self.flow.energy_floor,
        }
    }

    pub fn shooting_controls(&self) -> ShootingControls {
        ShootingControls {
            radius: self.shooting.radius,
            mesh0: self.shooting.mesh0,
            max_refine: self.shooting.max_refine,
            dt: self.shooting.dt,
            t_max: self.shooting.t_max,
            conv_tol: self.flow.conv_tol,
            escape: self.flow.escape,
            kernel_tol: self.tolerances.kernel_tol,
            ..ShootingControls::default()
        }
    }

    pub fn start_point(&self, model: &SpectrumSpec) -> Result<PointZ> {
        match &self.start {
            Some(s) => self.start_point_from(model, s),
            None => Err(Error::Config("start: section required for this subcommand".into())),
        }
    }

    fn start_point_from(&self, model: &SpectrumSpec, s: &StartSection) -> Result<PointZ> {
        let n = model.n_modes();
        if let Some(k) = s.mode {
            if k >= n {
                return Err(field_err("start", "mode", "out of range"));
            }
            let mut z = crate::critical::linear_point(model, k);
            z.u.0[k].re += s.displacement;
            if let Some(l) = s.lambda {
                z.lambda = l;
            }
            return Ok(z);
        }
        let re = s.re.as_ref().ok_or_else(|| field_err("start", "re", "required without start.mode"))?;
        if re.len() != n {
            return Err(field_err("start", "re", &format!("expected {n} entries, got {}", re.len())));
        }
        let im = s.im.clone().unwrap_or_else(|| vec![0.0; n]);
        if im.len() != n {
            return Err(field_err("start", "im", &format!("expected {n} entries, got {}", im.len())));
        }
        let lambda = s.lambda.ok_or_else(|| field_err("start", "lambda", "required without start.mode"))?;
        let z = PointZ::new(
            FieldCoeffs(re.iter().zip(&im).map(|(a, b)| crate::Complex64::new(*a, *b)).collect()),
            lambda,
        );
        if !z.is_finite() {
            return Err(Error::Config("start: coordinates must be finite".into()));
        }
        Ok(z)
    }
}
