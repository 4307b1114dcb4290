//! Running configured experiments and writing their artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::Serialize;

use crate::assembly::{Material, MaterialField, ProblemData};
use crate::config::{FieldSource, ProblemConfig, RunConfig};
use crate::error::{Error, Result};
use crate::ingest::{generate_field, heterogeneous_material, CellField};
use crate::interface::Physics;
use crate::mesh::{build_grid, partition};
use crate::output::{write_csv, write_dofs, write_vtk};
use crate::schemes::{RunSummary, Scheme, SchemeKind, SchemeState, StepRecord};
use crate::subdomain::Discretization;
use crate::verify::{rates, ErrorEvaluator, LinfErrors, ManufacturedCase};

/// Zero sources; pressure `1 - x` on pressure sides and as initial data;
/// traction `-α n` (unit pressure) on the left side, zero elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureDrop {
    pub alpha: f64,
}

impl ProblemData for PressureDrop {
    fn pressure(&self, x: [f64; 2], _t: f64) -> f64 {
        1.0 - x[0]
    }

    fn traction(&self, x: [f64; 2], _t: f64, n: [f64; 2]) -> [f64; 2] {
        if x[0] <= 1e-12 {
            [-self.alpha * n[0], -self.alpha * n[1]]
        } else {
            [0.0; 2]
        }
    }

    fn initial_pressure(&self, x: [f64; 2]) -> f64 {
        1.0 - x[0]
    }
}

/// Data of a configured problem.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemInstance {
    Manufactured(ManufacturedCase),
    PressureDrop(PressureDrop),
}

impl ProblemInstance {
    pub fn data(&self) -> &dyn ProblemData {
        match self {
            ProblemInstance::Manufactured(c) => c,
            ProblemInstance::PressureDrop(p) => p,
        }
    }

    pub fn exact(&self) -> Option<&ManufacturedCase> {
        match self {
            ProblemInstance::Manufactured(c) => Some(c),
            ProblemInstance::PressureDrop(_) => None,
        }
    }
}

/// Everything needed to run one configuration.
pub struct Setup {
    pub config: RunConfig,
    pub disc: Discretization,
    pub problem: ProblemInstance,
    pub steps: usize,
}

fn load_or_generate(source: &FieldSource, nx: usize, ny: usize) -> Result<(CellField, CellField)> {
    let (perm, poro) = match source {
        FieldSource::Generated(g) => {
            let f = generate_field(&g.spec(nx, ny))?;
            (f.permeability, f.porosity)
        }
        FieldSource::Files(f) => {
            let (gx, gy) = f.cells;
            (CellField::load(&f.permeability, gx, gy)?, CellField::load(&f.porosity, gx, gy)?)
        }
    };
    let factor = nx / perm.nx();
    Ok((perm.refine(factor), poro.refine(factor)))
}

impl Setup {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let m = &config.mesh;
        let mesh = build_grid(m.nx, m.ny, config.perturbation()?.as_ref())?;
        let decomposition = partition(&mesh, m.px, m.py, config.boundary_conditions())?;
        let (material, problem) = match &config.problem {
            ProblemConfig::Manufactured(c) => {
                let case = ManufacturedCase {
                    lambda: c.lambda,
                    mu: c.mu,
                    permeability: c.permeability,
                    storativity: c.storativity,
                    alpha: c.alpha,
                };
                let mat = Material::isotropic(c.lambda, c.mu, c.permeability, c.storativity, c.alpha);
                (MaterialField::Uniform(mat), ProblemInstance::Manufactured(case))
            }
            ProblemConfig::Heterogeneous(c) => {
                let (perm, poro) = load_or_generate(&c.fields, m.nx, m.ny)?;
                let mat = heterogeneous_material(&poro, &perm, c.poisson_ratio, c.storativity, c.alpha)?;
                (mat, ProblemInstance::PressureDrop(PressureDrop { alpha: c.alpha }))
            }
        };
        let disc = Discretization::new(mesh, decomposition, &material)?;
        Ok(Self {
            steps: config.n_steps()?,
            config: config.clone(),
            disc,
            problem,
        })
    }

    pub fn scheme(&self) -> Result<Scheme<'_>> {
        Scheme::new(
            self.config.solver.scheme,
            &self.disc,
            self.problem.data(),
            self.config.time.dt,
            self.config.solver.settings(),
        )
    }
}

/// Outcome of one configured run.
#[derive(Debug, Clone)]
pub struct CaseResult {
    pub scheme: SchemeKind,
    pub n: usize,
    pub subdomains: usize,
    pub dt: f64,
    pub storativity: f64,
    pub summary: RunSummary,
    pub records: Vec<StepRecord>,
    /// Relative `L∞` errors `[z, p, σ, u]` over steps `1..=N` for
    /// manufactured problems.
    pub errors: Option<[f64; 4]>,
    pub final_state: SchemeState,
    pub seconds: f64,
}

impl CaseResult {
    pub fn mean(&self, physics: Physics) -> Option<f64> {
        self.summary.mean(physics)
    }
}

fn storativity(config: &RunConfig) -> f64 {
    match &config.problem {
        ProblemConfig::Manufactured(c) => c.storativity,
        ProblemConfig::Heterogeneous(c) => c.storativity,
    }
}

/// Runs one configuration; `on_state` sees the initial state and every
/// step.
pub fn run_case(
    setup: &Setup,
    mut on_state: impl FnMut(&SchemeState, &StepRecord) -> Result<()>,
) -> Result<CaseResult> {
    let start = Instant::now();
    let scheme = setup.scheme()?;
    let evaluator = setup.problem.exact().map(|_| ErrorEvaluator::new(&setup.disc)).transpose()?;
    let mut linf = LinfErrors::default();
    let mut records = Vec::with_capacity(setup.steps + 1);
    let (final_state, summary) = scheme.run(setup.steps, |state, record| {
        if let (Some(ev), Some(exact)) = (&evaluator, setup.problem.exact()) {
            if state.step > 0 {
                linf.push(&ev.evaluate(&setup.disc, &state.fields, exact, state.t)?);
            }
        }
        records.push(record.clone());
        on_state(state, record)
    })?;
    let errors = if evaluator.is_some() && linf.steps() > 0 {
        Some(linf.relative()?)
    } else {
        None
    };
    let c = &setup.config;
    Ok(CaseResult {
        scheme: c.solver.scheme,
        n: c.mesh.nx,
        subdomains: c.mesh.px,
        dt: c.time.dt,
        storativity: storativity(c),
        summary,
        records,
        errors,
        final_state,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Per-step iteration report row.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRow {
    pub step: usize,
    pub t: f64,
    pub solver: &'static str,
    pub iterations: usize,
    pub relative_residual: f64,
    pub relative_jump: f64,
}

pub fn solver_name(physics: Physics) -> &'static str {
    match physics {
        Physics::Monolithic => "gmres",
        Physics::Elasticity => "cg_elast",
        Physics::Darcy => "cg_darcy",
    }
}

pub fn iteration_rows(records: &[StepRecord]) -> Vec<IterationRow> {
    records
        .iter()
        .flat_map(|r| {
            r.phases.iter().map(move |p| IterationRow {
                step: r.step,
                t: r.t,
                solver: solver_name(p.physics),
                iterations: p.report.iterations,
                relative_residual: p.report.final_residual(),
                relative_jump: p.relative_jump,
            })
        })
        .collect()
}

/// One row of a results table: the run parameters, average iterations per
/// solver, relative errors with rates against the previous row of the same
/// group, and stability monitor values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub scheme: SchemeKind,
    pub h: f64,
    pub subdomains: usize,
    pub dt: f64,
    pub c0: f64,
    pub steps: usize,
    pub gmres: Option<f64>,
    pub gmres_rate: Option<f64>,
    pub cg_elast: Option<f64>,
    pub cg_elast_rate: Option<f64>,
    pub cg_darcy: Option<f64>,
    pub cg_darcy_rate: Option<f64>,
    pub z_error: Option<f64>,
    pub z_rate: Option<f64>,
    pub p_error: Option<f64>,
    pub p_rate: Option<f64>,
    pub sigma_error: Option<f64>,
    pub sigma_rate: Option<f64>,
    pub u_error: Option<f64>,
    pub u_rate: Option<f64>,
    pub monitor_left_side: f64,
    pub monitor_ratio: f64,
}

fn pair_rate(prev: Option<f64>, next: Option<f64>) -> Option<f64> {
    match (prev, next) {
        (Some(a), Some(b)) => rates(&[a, b])[0],
        _ => None,
    }
}

/// Table rows; consecutive results with equal scheme, subdomains, time step
/// and storativity form a refinement group for the rates.
pub fn table_rows(results: &[CaseResult]) -> Vec<TableRow> {
    let mut rows: Vec<TableRow> = Vec::with_capacity(results.len());
    for (i, r) in results.iter().enumerate() {
        let prev = i
            .checked_sub(1)
            .map(|j| &results[j])
            .filter(|p| p.scheme == r.scheme && p.subdomains == r.subdomains && p.dt == r.dt && p.storativity == r.storativity && p.n < r.n);
        let err = |k: usize| r.errors.map(|e| e[k]);
        let perr = |k: usize| prev.and_then(|p| p.errors.map(|e| e[k]));
        let it = |ph: Physics| r.mean(ph);
        let pit = |ph: Physics| prev.and_then(|p| p.mean(ph));
        rows.push(TableRow {
            scheme: r.scheme,
            h: 1.0 / r.n as f64,
            subdomains: r.subdomains,
            dt: r.dt,
            c0: r.storativity,
            steps: r.summary.steps,
            gmres: it(Physics::Monolithic),
            gmres_rate: pair_rate(pit(Physics::Monolithic), it(Physics::Monolithic)),
            cg_elast: it(Physics::Elasticity),
            cg_elast_rate: pair_rate(pit(Physics::Elasticity), it(Physics::Elasticity)),
            cg_darcy: it(Physics::Darcy),
            cg_darcy_rate: pair_rate(pit(Physics::Darcy), it(Physics::Darcy)),
            z_error: err(0),
            z_rate: pair_rate(perr(0), err(0)),
            p_error: err(1),
            p_rate: pair_rate(perr(1), err(1)),
            sigma_error: err(2),
            sigma_rate: pair_rate(perr(2), err(2)),
            u_error: err(3),
            u_rate: pair_rate(perr(3), err(3)),
            monitor_left_side: r.summary.monitor.left_side(),
            monitor_ratio: r.summary.monitor.ratio(r.scheme),
        });
    }
    rows
}

fn output_dir(config: &RunConfig, override_dir: Option<&Path>) -> Option<PathBuf> {
    override_dir.map(Path::to_path_buf).or_else(|| config.output.directory.clone())
}

/// Runs one configuration and writes `summary.csv`, `iterations.csv` and
/// field snapshots to the output directory, if any.
pub fn run_experiment(config: &RunConfig, out: Option<&Path>) -> Result<CaseResult> {
    let setup = Setup::new(config)?;
    let dir = output_dir(config, out);
    if let Some(d) = &dir {
        std::fs::create_dir_all(d)?;
    }
    let every = config.output.snapshot_every;
    let last = setup.steps;
    info!(
        "{} on {}x{} cells, {}x{} subdomains, {} steps of {}",
        config.solver.scheme, config.mesh.nx, config.mesh.ny, config.mesh.px, config.mesh.py, setup.steps, config.time.dt
    );
    let result = run_case(&setup, |state, record| {
        for p in &record.phases {
            info!(
                "step {} {}: {} iterations, residual {:.3e}",
                record.step,
                solver_name(p.physics),
                p.report.iterations,
                p.report.final_residual()
            );
        }
        let Some(d) = &dir else { return Ok(()) };
        let due = state.step == last || (every > 0 && state.step % every == 0);
        if !due {
            return Ok(());
        }
        if config.output.vtk {
            let title = format!("{} step {} t={}", config.solver.scheme, state.step, state.t);
            write_vtk(&d.join(format!("fields_{:05}.vtk", state.step)), &setup.disc, &state.fields, &title)?;
        }
        if config.output.dofs {
            let f = std::fs::File::create(d.join(format!("dofs_{:05}.csv", state.step)))?;
            write_dofs(std::io::BufWriter::new(f), &state.fields)?;
        }
        Ok(())
    })?;
    if let Some(d) = &dir {
        write_csv(std::fs::File::create(d.join("summary.csv"))?, &table_rows(std::slice::from_ref(&result)))?;
        write_csv(std::fs::File::create(d.join("iterations.csv"))?, &iteration_rows(&result.records))?;
    }
    Ok(result)
}

/// Runs every configuration of the sweep and writes `table.csv`.
pub fn run_sweep(config: &RunConfig, out: Option<&Path>) -> Result<Vec<TableRow>> {
    let mut results = Vec::new();
    for c in config.expand_sweep() {
        let setup = Setup::new(&c)?;
        let r = run_case(&setup, |_, _| Ok(()))?;
        info!(
            "{} h=1/{} {}x{} dt={} c0={}: {:?} errors {:?} in {:.1}s",
            r.scheme, r.n, r.subdomains, r.subdomains, r.dt, r.storativity, r.summary.mean_iterations, r.errors, r.seconds
        );
        results.push(r);
    }
    let rows = table_rows(&results);
    if let Some(d) = output_dir(config, out) {
        std::fs::create_dir_all(&d)?;
        write_csv(std::fs::File::create(d.join("table.csv"))?, &rows)?;
    }
    Ok(rows)
}

/// Rejects rows with non-finite numbers.
pub fn check_finite(rows: &[TableRow]) -> Result<()> {
    for (i, r) in rows.iter().enumerate() {
        let values = [
            r.gmres, r.gmres_rate, r.cg_elast, r.cg_elast_rate, r.cg_darcy, r.cg_darcy_rate, r.z_error, r.z_rate,
            r.p_error, r.p_rate, r.sigma_error, r.sigma_rate, r.u_error, r.u_rate,
        ];
        if values.iter().flatten().any(|v| !v.is_finite()) || !r.monitor_left_side.is_finite() {
            return Err(Error::Degenerate(format!("row {i} of the results table has a non-finite value")));
        }
    }
    Ok(())
}
