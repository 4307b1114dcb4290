//! Run configuration read from TOML.
//!
//! ```toml
//! [problem]
//! kind = "manufactured"      # or "heterogeneous"
//! storativity = 1.0
//!
//! [mesh]
//! nx = 16
//! ny = 16
//! px = 2
//! py = 2
//! [mesh.perturbation]
//! fraction = 0.25
//! quadrants = [0, 3]
//!
//! [time]
//! dt = 1e-3
//! steps = 100
//!
//! [solver]
//! scheme = "monolithic"      # "ds", "fs"
//! tol = 1e-12
//!
//! [output]
//! directory = "out"
//!
//! [sweep]                    # optional; one run per combination
//! n = [4, 8, 16, 32, 64]
//! schemes = ["monolithic", "ds", "fs"]
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::GeneratorSpec;
use crate::mesh::{BoundaryConditions, FlowBc, MechanicsBc, Perturbation, SideCondition};
use crate::schemes::{SchemeKind, SolverSettings};

/// Complete description of one run, or of a family of runs with `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub mesh: MeshConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Boundary condition types; defaults depend on the problem kind.
    #[serde(default)]
    pub boundary: Option<BoundaryConditions>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemConfig {
    /// Closed-form solution with derived sources and boundary data.
    Manufactured(ManufacturedConfig),
    /// Zero sources, pressure drop from left to right, per-cell materials.
    Heterogeneous(HeterogeneousConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManufacturedConfig {
    #[serde(default = "hundred")]
    pub lambda: f64,
    #[serde(default = "hundred")]
    pub mu: f64,
    #[serde(default = "one")]
    pub permeability: f64,
    #[serde(default = "one")]
    pub storativity: f64,
    #[serde(default = "one")]
    pub alpha: f64,
}

impl Default for ManufacturedConfig {
    fn default() -> Self {
        Self {
            lambda: 100.0,
            mu: 100.0,
            permeability: 1.0,
            storativity: 1.0,
            alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeterogeneousConfig {
    #[serde(default = "one")]
    pub storativity: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "default_poisson")]
    pub poisson_ratio: f64,
    pub fields: FieldSource,
}

/// Where porosity and permeability come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum FieldSource {
    Generated(GeneratedFields),
    Files(FieldFiles),
}

/// Synthetic fields; the grid defaults to the mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedFields {
    pub seed: u64,
    #[serde(default)]
    pub cells: Option<(usize, usize)>,
    #[serde(default = "default_span")]
    pub span_decades: f64,
    #[serde(default)]
    pub log10_center: f64,
    #[serde(default = "default_smoothing")]
    pub smoothing: usize,
    #[serde(default = "default_porosity_range")]
    pub porosity_range: (f64, f64),
}

impl GeneratedFields {
    pub fn spec(&self, nx: usize, ny: usize) -> GeneratorSpec {
        let (gx, gy) = self.cells.unwrap_or((nx, ny));
        GeneratorSpec {
            nx: gx,
            ny: gy,
            seed: self.seed,
            span_decades: self.span_decades,
            log10_center: self.log10_center,
            smoothing: self.smoothing,
            porosity_range: self.porosity_range,
        }
    }
}

/// Field files in the plain-text cell format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldFiles {
    pub permeability: PathBuf,
    pub porosity: PathBuf,
    /// Grid of the files; must divide the mesh.
    pub cells: (usize, usize),
}

fn hundred() -> f64 {
    100.0
}

fn one() -> f64 {
    1.0
}

fn default_poisson() -> f64 {
    0.2
}

fn default_span() -> f64 {
    7.0
}

fn default_smoothing() -> usize {
    2
}

fn default_porosity_range() -> (f64, f64) {
    (0.05, 0.35)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "two")]
    pub px: usize,
    #[serde(default = "two")]
    pub py: usize,
    #[serde(default)]
    pub perturbation: Option<PerturbationConfig>,
}

fn two() -> usize {
    2
}

/// Random displacement of vertices inside subdomains.
///
/// Vertices are moved on a coarse grid with two cells per subdomain in each
/// direction and carried to the mesh by bilinear refinement, so refined
/// meshes share the geometry of the coarsest one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    /// Maximum displacement per coordinate relative to the coarse spacing.
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Quadrants of the unit square whose subdomains are perturbed:
    /// 0 bottom-left, 1 bottom-right, 2 top-left, 3 top-right.
    #[serde(default)]
    pub quadrants: Option<Vec<usize>>,
}

fn default_fraction() -> f64 {
    Perturbation::DEFAULT_FRACTION
}

fn default_seed() -> u64 {
    Perturbation::DEFAULT_SEED
}

impl PerturbationConfig {
    /// Perturbation for an `nx x ny` mesh split into `px x py` subdomains.
    pub fn resolve(&self, nx: usize, ny: usize, px: usize, py: usize) -> Result<Perturbation> {
        if let Some(q) = &self.quadrants {
            if let Some(bad) = q.iter().find(|&&k| k > 3) {
                return Err(Error::config("mesh.perturbation.quadrants", format!("quadrant {bad} not in 0..=3")));
            }
        }
        let base = |n: usize, p: usize| if n % (2 * p) == 0 { 2 * p } else { n };
        let subdomains = self.quadrants.as_ref().map(|q| {
            (0..px * py)
                .filter(|s| {
                    let (sx, sy) = (s % px, s / px);
                    let right = 2 * sx + 1 > px;
                    let top = 2 * sy + 1 > py;
                    q.contains(&(2 * top as usize + right as usize))
                })
                .collect()
        });
        Ok(Perturbation {
            fraction: self.fraction,
            seed: self.seed,
            base: Some((base(nx, px), base(ny, py))),
            layout: (px, py),
            subdomains,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub final_time: Option<f64>,
}

impl TimeConfig {
    /// Number of steps; `steps * dt` must equal `final_time` when both are
    /// given.
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("time.dt", format!("must be positive, got {}", self.dt)));
        }
        match (self.steps, self.final_time) {
            (None, None) => Err(Error::config("time", "one of steps or final_time is required")),
            (Some(n), None) => Ok(n),
            (steps, Some(t)) => {
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(Error::config("time.final_time", format!("must be non-negative, got {t}")));
                }
                let n = steps.unwrap_or((t / self.dt).round() as usize);
                if (n as f64 * self.dt - t).abs() > 1e-12 * t.max(1.0) {
                    return Err(Error::config(
                        "time.final_time",
                        format!("{n} steps of {} do not reach {t}", self.dt),
                    ));
                }
                Ok(n)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_scheme")]
    pub scheme: SchemeKind,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub star_history: bool,
}

fn default_scheme() -> SchemeKind {
    SchemeKind::Monolithic
}

fn default_tol() -> f64 {
    1e-12
}

fn default_max_iter() -> usize {
    5000
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            scheme: default_scheme(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            star_history: false,
        }
    }
}

impl SolverConfig {
    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            tol: self.tol,
            max_iter: self.max_iter,
            star_history: self.star_history,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub directory: Option<PathBuf>,
    /// Write fields every this many steps; 0 writes only the final state.
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default = "yes")]
    pub vtk: bool,
    /// Raw degrees of freedom as CSV, reloadable bit for bit.
    #[serde(default)]
    pub dofs: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: None,
            snapshot_every: 0,
            vtk: true,
            dofs: false,
        }
    }
}

/// Lists of values to combine; an empty list keeps the base value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Cells per direction.
    #[serde(default)]
    pub n: Vec<usize>,
    /// Subdomains per direction.
    #[serde(default)]
    pub subdomains: Vec<usize>,
    #[serde(default)]
    pub dt: Vec<f64>,
    #[serde(default)]
    pub storativity: Vec<f64>,
    #[serde(default)]
    pub schemes: Vec<SchemeKind>,
    /// Stop each run after this many steps, keeping `dt`.
    #[serde(default)]
    pub steps: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::config("toml", e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config file, resolving relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            config.resolve_paths(dir);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let ProblemConfig::Heterogeneous(h) = &mut self.problem {
            if let FieldSource::Files(f) = &mut h.fields {
                fix(&mut f.permeability);
                fix(&mut f.porosity);
            }
        }
        if let Some(d) = &mut self.output.directory {
            fix(d);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.mesh;
        if m.nx == 0 || m.ny == 0 {
            return Err(Error::config("mesh", "nx and ny must be positive"));
        }
        if m.px == 0 || m.nx % m.px != 0 {
            return Err(Error::config("mesh.px", format!("{} does not divide nx = {}", m.px, m.nx)));
        }
        if m.py == 0 || m.ny % m.py != 0 {
            return Err(Error::config("mesh.py", format!("{} does not divide ny = {}", m.py, m.ny)));
        }
        if let Some(p) = &m.perturbation {
            if !(0.0..=0.3).contains(&p.fraction) {
                return Err(Error::config("mesh.perturbation.fraction", "must lie in [0, 0.3]"));
            }
            p.resolve(m.nx, m.ny, m.px, m.py)?;
        }
        self.time.n_steps()?;
        let s = &self.solver;
        if !(s.tol > 0.0 && s.tol < 1.0) {
            return Err(Error::config("solver.tol", format!("must lie in (0, 1), got {}", s.tol)));
        }
        if s.max_iter == 0 {
            return Err(Error::config("solver.max_iter", "must be positive"));
        }
        match &self.problem {
            ProblemConfig::Manufactured(c) => {
                if !(c.mu > 0.0 && c.lambda >= 0.0 && c.permeability > 0.0 && c.storativity >= 0.0) {
                    return Err(Error::config("problem", "need mu > 0, lambda >= 0, permeability > 0, storativity >= 0"));
                }
                if !(c.alpha > 0.0 && c.alpha <= 1.0) {
                    return Err(Error::config("problem.alpha", "must lie in (0, 1]"));
                }
            }
            ProblemConfig::Heterogeneous(c) => {
                if !(0.0..0.5).contains(&c.poisson_ratio) {
                    return Err(Error::config("problem.poisson_ratio", "must lie in [0, 0.5)"));
                }
                if !(c.alpha > 0.0 && c.alpha <= 1.0) {
                    return Err(Error::config("problem.alpha", "must lie in (0, 1]"));
                }
                if !(c.storativity >= 0.0) {
                    return Err(Error::config("problem.storativity", "must be non-negative"));
                }
                let (gx, gy) = match &c.fields {
                    FieldSource::Generated(g) => {
                        g.spec(m.nx, m.ny).validate()?;
                        g.cells.unwrap_or((m.nx, m.ny))
                    }
                    FieldSource::Files(f) => f.cells,
                };
                if gx == 0 || gy == 0 || m.nx % gx != 0 || m.ny % gy != 0 || m.nx / gx != m.ny / gy {
                    return Err(Error::config(
                        "problem.fields.cells",
                        format!("field grid {gx} x {gy} must evenly refine to {} x {}", m.nx, m.ny),
                    ));
                }
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.n.iter().chain(&sw.subdomains).any(|&v| v == 0) {
                return Err(Error::config("sweep", "sizes must be positive"));
            }
            if sw.dt.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::config("sweep.dt", "time steps must be positive"));
            }
            for &n in if sw.n.is_empty() { std::slice::from_ref(&m.nx) } else { &sw.n } {
                for &p in if sw.subdomains.is_empty() { std::slice::from_ref(&m.px) } else { &sw.subdomains } {
                    if n % p != 0 {
                        return Err(Error::config("sweep", format!("{p} subdomains do not divide {n} cells")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Boundary condition types in effect.
    pub fn boundary_conditions(&self) -> BoundaryConditions {
        if let Some(b) = self.boundary {
            return b;
        }
        match self.problem {
            ProblemConfig::Manufactured(_) => BoundaryConditions::all_dirichlet(),
            ProblemConfig::Heterogeneous(_) => pressure_drop_conditions(),
        }
    }

    /// Mesh perturbation in effect.
    pub fn perturbation(&self) -> Result<Option<Perturbation>> {
        let m = &self.mesh;
        m.perturbation
            .as_ref()
            .filter(|p| p.fraction > 0.0)
            .map(|p| p.resolve(m.nx, m.ny, m.px, m.py))
            .transpose()
    }

    pub fn n_steps(&self) -> Result<usize> {
        self.time.n_steps()
    }

    /// Single-run configs of the sweep in row order: scheme, storativity,
    /// time step, subdomains, then cells.
    pub fn expand_sweep(&self) -> Vec<RunConfig> {
        let Some(sw) = &self.sweep else {
            return vec![self.clone()];
        };
        let or = |v: &Vec<usize>, d: usize| if v.is_empty() { vec![d] } else { v.clone() };
        let schemes = if sw.schemes.is_empty() { vec![self.solver.scheme] } else { sw.schemes.clone() };
        let dts = if sw.dt.is_empty() { vec![self.time.dt] } else { sw.dt.clone() };
        let c0s: Vec<Option<f64>> = if sw.storativity.is_empty() {
            vec![None]
        } else {
            sw.storativity.iter().map(|&c| Some(c)).collect()
        };
        let mut out = Vec::new();
        for &scheme in &schemes {
            for &c0 in &c0s {
                for &dt in &dts {
                    for p in or(&sw.subdomains, self.mesh.px) {
                        for n in or(&sw.n, self.mesh.nx) {
                            let mut c = self.clone();
                            c.sweep = None;
                            c.solver.scheme = scheme;
                            c.mesh.nx = n;
                            c.mesh.ny = n;
                            c.mesh.px = p;
                            c.mesh.py = p;
                            c.time = TimeConfig {
                                dt,
                                steps: Some(sw.steps.unwrap_or_else(|| self.n_steps().unwrap_or(0))),
                                final_time: None,
                            };
                            if let Some(c0) = c0 {
                                match &mut c.problem {
                                    ProblemConfig::Manufactured(m) => m.storativity = c0,
                                    ProblemConfig::Heterogeneous(h) => h.storativity = c0,
                                }
                            }
                            out.push(c);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Left: traction and unit pressure; right: fixed and zero pressure;
/// bottom and top: traction free and no flow.
pub fn pressure_drop_conditions() -> BoundaryConditions {
    let side = |mechanics, flow| SideCondition { mechanics, flow };
    BoundaryConditions {
        left: side(MechanicsBc::Traction, FlowBc::Pressure),
        right: side(MechanicsBc::Displacement, FlowBc::Pressure),
        bottom: side(MechanicsBc::Traction, FlowBc::Flux),
        top: side(MechanicsBc::Traction, FlowBc::Flux),
    }
}
