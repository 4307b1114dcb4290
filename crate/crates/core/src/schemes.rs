//! Time stepping for the three domain decomposition schemes: the
//! monolithic interface method on the time-differentiated coupled system,
//! the drained split (mechanics first) and the fixed stress split (flow
//! first). Also initialization, displacement recovery and the stability
//! monitor.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_rhs, project_cellwise, ProblemData, RhsKind};
use crate::error::{Error, Result};
use crate::global::GlobalProblem;
use crate::interface::{inject, interface_rhs, trace_jumps, InterfaceOperator, Physics};
use crate::krylov::{cg, gmres, KrylovReport, LinearOperator};
use crate::subdomain::{factorize, Discretization, Fields, Subdomain, SubdomainOperator, Variant};

/// Time stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Monolithic,
    Ds,
    Fs,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::Monolithic, SchemeKind::Ds, SchemeKind::Fs];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Monolithic => "monolithic",
            SchemeKind::Ds => "ds",
            SchemeKind::Fs => "fs",
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "monolithic" => Ok(SchemeKind::Monolithic),
            "ds" => Ok(SchemeKind::Ds),
            "fs" => Ok(SchemeKind::Fs),
            other => Err(Error::config(
                "scheme",
                format!("unknown scheme {other:?}, expected monolithic, ds or fs"),
            )),
        }
    }
}

/// Interface Krylov settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Relative Euclidean residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Record the weighted residual history of GMRES.
    pub star_history: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 2000,
            star_history: false,
        }
    }
}

/// Outcome of one interface solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReport {
    pub physics: Physics,
    pub report: KrylovReport,
    /// Largest interface jump of the final subdomain solutions relative to
    /// the interface right-hand side norm.
    pub relative_jump: f64,
}

/// Interface solves of one time step; step 0 is initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub phases: Vec<PhaseReport>,
}

impl StepRecord {
    pub fn iterations(&self, physics: Physics) -> Option<usize> {
        self.phases
            .iter()
            .find(|p| p.physics == physics)
            .map(|p| p.report.iterations)
    }
}

/// Squared norms of one state: `[z, p, A^½σ, u, γ]`.
pub type FieldNorms = [f64; 5];

/// Squared norms summed over subdomains.
pub fn field_norms(disc: &Discretization, fields: &[Fields]) -> FieldNorms {
    let mut out = [0.0; 5];
    for (sub, f) in disc.subdomains.iter().zip(fields) {
        let d = &sub.dofmap;
        let b = &sub.blocks;
        for (lc, cv) in sub.cells.iter().enumerate() {
            let dofs = d.cell_bdm_dofs(lc);
            for q in 0..cv.points.len() {
                let mut z = [0.0; 2];
                for (a, &dof) in dofs.iter().enumerate() {
                    z[0] += f.z[dof] * cv.basis[q][a][0];
                    z[1] += f.z[dof] * cv.basis[q][a][1];
                }
                out[0] += cv.jxw[q] * (z[0] * z[0] + z[1] * z[1]);
            }
            let area = b.area[lc];
            out[1] += area * f.p[lc] * f.p[lc];
            out[3] += area * (f.u[2 * lc].powi(2) + f.u[2 * lc + 1].powi(2));
            out[4] += area * f.gamma[lc] * f.gamma[lc];
        }
        out[2] += crate::krylov::dot(&f.sigma, &b.a_ss.mul(&f.sigma));
    }
    out
}

/// Running quantities bounded by the split-scheme stability estimates:
/// `Σ c0/Δt |p^{n+1} - p^n|² + max_n (|z|² + |p|² + |A^½σ|² + |u|² + |γ|²)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StabilityMonitor {
    pub storage_sum: f64,
    pub max_z: f64,
    pub max_p: f64,
    pub max_stress: f64,
    pub max_u: f64,
    pub max_gamma: f64,
    pub max_total: f64,
    pub p0: f64,
    pub z0: f64,
}

impl StabilityMonitor {
    pub fn new(initial: &FieldNorms) -> Self {
        Self {
            p0: initial[1],
            z0: initial[0],
            ..Self::default()
        }
    }

    pub fn update(&mut self, storage_increment: f64, norms: &FieldNorms) {
        self.storage_sum += storage_increment;
        self.max_z = self.max_z.max(norms[0]);
        self.max_p = self.max_p.max(norms[1]);
        self.max_stress = self.max_stress.max(norms[2]);
        self.max_u = self.max_u.max(norms[3]);
        self.max_gamma = self.max_gamma.max(norms[4]);
        self.max_total = self.max_total.max(norms.iter().sum());
    }

    pub fn left_side(&self) -> f64 {
        self.storage_sum + self.max_total
    }

    /// Left side over the initial-data bound of `kind`: `|p⁰|² + |z⁰|²`
    /// for the drained split and the monolithic scheme, `|z⁰|²` for fixed
    /// stress.
    pub fn ratio(&self, kind: SchemeKind) -> f64 {
        let reference = match kind {
            SchemeKind::Fs => self.z0,
            _ => self.p0 + self.z0,
        };
        let lhs = self.left_side();
        if reference > 0.0 {
            lhs / reference
        } else if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.storage_sum,
            self.max_z,
            self.max_p,
            self.max_stress,
            self.max_u,
            self.max_gamma,
            self.max_total,
            self.p0,
            self.z0,
        ]
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Fields of all subdomains at one time level plus what the schemes carry
/// between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState {
    pub step: usize,
    pub t: f64,
    pub fields: Vec<Fields>,
    /// Stress one level back (`σ^{-1} = σ^0`).
    pub sigma_before: Vec<Vec<f64>>,
    /// Displacement trace on the interface in the elasticity layout.
    pub lambda_u: Vec<f64>,
    pub monitor: StabilityMonitor,
    u0: Vec<Vec<f64>>,
    gamma0: Vec<Vec<f64>>,
    lambda_u0: Vec<f64>,
    u_rate_sum: Vec<Vec<f64>>,
    gamma_rate_sum: Vec<Vec<f64>>,
    lambda_rate_sum: Vec<f64>,
}

/// Krylov method of an interface phase.
#[derive(Debug, Clone, Copy)]
enum Method {
    Gmres,
    Cg,
}

/// Aggregated results of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub kind: SchemeKind,
    pub steps: usize,
    /// Average iterations per time step for each interface problem,
    /// excluding initialization.
    pub mean_iterations: Vec<(Physics, f64)>,
    pub initialization: StepRecord,
    pub monitor: StabilityMonitor,
}

impl RunSummary {
    pub fn mean(&self, physics: Physics) -> Option<f64> {
        self.mean_iterations
            .iter()
            .find(|(p, _)| *p == physics)
            .map(|(_, v)| *v)
    }
}

/// A factorized scheme ready to step.
pub struct Scheme<'a> {
    kind: SchemeKind,
    disc: &'a Discretization,
    data: &'a dyn ProblemData,
    dt: f64,
    settings: SolverSettings,
    elasticity: InterfaceOperator,
    coupled: Option<InterfaceOperator>,
    darcy: Option<InterfaceOperator>,
}

fn factorize_all(subs: &[Subdomain], variant: Variant) -> Result<Vec<SubdomainOperator>> {
    subs.par_iter().map(|s| factorize(s, variant)).collect()
}

impl<'a> Scheme<'a> {
    /// Factorizes every subdomain system the scheme needs and precomputes
    /// the local interface matrices.
    pub fn new(
        kind: SchemeKind,
        disc: &'a Discretization,
        data: &'a dyn ProblemData,
        dt: f64,
        settings: SolverSettings,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config("dt", format!("time step must be positive, got {dt}")));
        }
        if !(settings.tol > 0.0 && settings.tol < 1.0) {
            return Err(Error::config("tol", "tolerance must lie in (0, 1)"));
        }
        let subs = &disc.subdomains;
        let ne = disc.n_interface_edges();
        let elasticity =
            InterfaceOperator::assembled(factorize_all(subs, Variant::Elasticity)?, subs, ne)?;
        let (coupled, darcy) = match kind {
            SchemeKind::Monolithic => (
                Some(InterfaceOperator::assembled(
                    factorize_all(subs, Variant::Biot { dt })?,
                    subs,
                    ne,
                )?),
                None,
            ),
            SchemeKind::Ds | SchemeKind::Fs => (
                None,
                Some(InterfaceOperator::assembled(
                    factorize_all(subs, Variant::Darcy { dt })?,
                    subs,
                    ne,
                )?),
            ),
        };
        Ok(Self {
            kind,
            disc,
            data,
            dt,
            settings,
            elasticity,
            coupled,
            darcy,
        })
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn discretization(&self) -> &Discretization {
        self.disc
    }

    /// Interface operator of `physics`, if the scheme uses it.
    pub fn interface_operator(&self, physics: Physics) -> Option<&InterfaceOperator> {
        match physics {
            Physics::Elasticity => Some(&self.elasticity),
            Physics::Monolithic => self.coupled.as_ref(),
            Physics::Darcy => self.darcy.as_ref(),
        }
    }

    fn rhs<'r>(&self, t: f64, kind: impl Fn(usize) -> RhsKind<'r> + Sync) -> Result<Vec<Vec<f64>>> {
        (0..self.disc.n_subdomains())
            .into_par_iter()
            .map(|i| assemble_rhs(&self.disc.context(i), self.data, t, kind(i)))
            .collect()
    }

    /// Bar solves, interface Krylov solve, final superposed solves.
    fn phase(
        &self,
        op: &InterfaceOperator,
        rhs: Vec<Vec<f64>>,
        method: Method,
        step: usize,
    ) -> Result<(Vec<Vec<f64>>, Vec<f64>, PhaseReport)> {
        let ops = op.ops();
        let bars = rhs
            .par_iter()
            .zip(ops)
            .map(|(r, o)| {
                let mut x = r.clone();
                o.solve(&mut x)?;
                Ok(x)
            })
            .collect::<Result<Vec<_>>>()?;
        let g = interface_rhs(op.dim(), op.slots(), &bars)?;
        let s = &self.settings;
        let (lambda, report) = match method {
            Method::Gmres => {
                let w = s.star_history.then(|| op.weights());
                gmres(op, &g, s.tol, s.max_iter, w.as_deref())?
            }
            Method::Cg => cg(op, &g, s.tol, s.max_iter)?,
        };
        if !report.converged {
            return Err(Error::NoConvergence {
                solver: match (method, op.physics()) {
                    (Method::Gmres, _) => "GMRES",
                    (Method::Cg, Physics::Darcy) => "Darcy CG",
                    (Method::Cg, _) => "elasticity CG",
                },
                step,
                iterations: report.iterations,
                residual: report.final_residual(),
            });
        }
        let solutions = rhs
            .into_par_iter()
            .zip(ops.par_iter().zip(op.slots()))
            .map(|(mut r, (o, sl))| {
                inject(sl, &lambda, &mut r);
                o.solve(&mut r)?;
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        let jumps = trace_jumps(op.dim(), op.slots(), &solutions)?;
        let gnorm = crate::krylov::norm(&g);
        let jnorm = jumps.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let relative_jump = if gnorm > 0.0 { jnorm / gnorm } else { jnorm };
        Ok((
            solutions,
            lambda,
            PhaseReport {
                physics: op.physics(),
                report,
                relative_jump,
            },
        ))
    }

    fn elasticity_phase(
        &self,
        t: f64,
        pressure: &[Vec<f64>],
        step: usize,
    ) -> Result<(Vec<Vec<f64>>, Vec<f64>, PhaseReport)> {
        let rhs = self.rhs(t, |i| RhsKind::Elasticity {
            pressure: &pressure[i],
        })?;
        self.phase(&self.elasticity, rhs, Method::Cg, step)
    }

    fn darcy_phase(
        &self,
        t: f64,
        p_prev: &[Vec<f64>],
        coupling: &[Vec<f64>],
        step: usize,
    ) -> Result<(Vec<Vec<f64>>, PhaseReport)> {
        let op = self.darcy.as_ref().expect("split schemes own a Darcy operator");
        let dt = self.dt;
        let rhs = self.rhs(t, |i| RhsKind::Darcy {
            dt,
            p_prev: &p_prev[i],
            coupling: &coupling[i],
        })?;
        let (x, _, rep) = self.phase(op, rhs, Method::Cg, step)?;
        Ok((x, rep))
    }

    /// Initial state: projected pressure, elasticity solve at `t = 0`
    /// through the elasticity interface problem, Darcy velocity of the
    /// projected pressure.
    pub fn initialize(&self) -> Result<(SchemeState, StepRecord)> {
        let disc = self.disc;
        let data = self.data;
        let p0: Vec<Vec<f64>> = disc
            .subdomains
            .iter()
            .map(|s| project_cellwise(&s.cells, |x| data.initial_pressure(x)))
            .collect();
        let (mech, lambda_u0, rep) = self.elasticity_phase(0.0, &p0, 0)?;
        let z0 = initial_velocity(disc, data, &p0)?;
        let mut fields = Vec::with_capacity(disc.n_subdomains());
        for (i, sub) in disc.subdomains.iter().enumerate() {
            let d = &sub.dofmap;
            let mut f = Fields::zeros(d);
            f.set_mechanics(d, &mech[i]);
            f.z = z0[i].clone();
            f.p = p0[i].clone();
            fields.push(f);
        }
        let norms = field_norms(disc, &fields);
        let state = SchemeState {
            step: 0,
            t: 0.0,
            sigma_before: fields.iter().map(|f| f.sigma.clone()).collect(),
            u0: fields.iter().map(|f| f.u.clone()).collect(),
            gamma0: fields.iter().map(|f| f.gamma.clone()).collect(),
            u_rate_sum: fields.iter().map(|f| vec![0.0; f.u.len()]).collect(),
            gamma_rate_sum: fields.iter().map(|f| vec![0.0; f.gamma.len()]).collect(),
            lambda_rate_sum: vec![0.0; lambda_u0.len()],
            lambda_u: lambda_u0.clone(),
            lambda_u0,
            fields,
            monitor: StabilityMonitor::new(&norms),
        };
        Ok((
            state,
            StepRecord {
                step: 0,
                t: 0.0,
                phases: vec![rep],
            },
        ))
    }

    /// Advances `state` by one time step.
    pub fn step(&self, state: &mut SchemeState) -> Result<StepRecord> {
        let step = state.step + 1;
        let t = step as f64 * self.dt;
        let previous = state.fields.clone();
        let phases = match self.kind {
            SchemeKind::Monolithic => self.step_monolithic(state, t, step),
            SchemeKind::Ds => self.step_drained_split(state, t, step),
            SchemeKind::Fs => self.step_fixed_stress(state, t, step),
        }
        .map_err(|e| match e {
            e @ Error::NoConvergence { .. } => e,
            other => Error::Step {
                step,
                source: Box::new(other),
            },
        })?;
        state.sigma_before = previous.iter().map(|f| f.sigma.clone()).collect();
        state.step = step;
        state.t = t;
        let mut storage = 0.0;
        for ((sub, now), before) in self.disc.subdomains.iter().zip(&state.fields).zip(&previous) {
            for c in 0..now.p.len() {
                storage += sub.blocks.m_p[c] * (now.p[c] - before.p[c]).powi(2) / self.dt;
            }
        }
        let norms = field_norms(self.disc, &state.fields);
        state.monitor.update(storage, &norms);
        Ok(StepRecord { step, t, phases })
    }

    fn step_monolithic(&self, state: &mut SchemeState, t: f64, step: usize) -> Result<Vec<PhaseReport>> {
        let op = self.coupled.as_ref().expect("monolithic scheme owns a coupled operator");
        let dt = self.dt;
        let fields = &state.fields;
        let rhs = self.rhs(t, |i| RhsKind::BiotBar {
            dt,
            sigma_prev: &fields[i].sigma,
            p_prev: &fields[i].p,
        })?;
        let (solutions, lambda, rep) = self.phase(op, rhs, Method::Gmres, step)?;
        for (i, x) in solutions.iter().enumerate() {
            let d = &self.disc.subdomains[i].dofmap;
            let rates = Fields::from_full(d, x);
            let f = &mut state.fields[i];
            f.sigma = rates.sigma;
            f.z = rates.z;
            f.p = rates.p;
            for (k, v) in rates.u.iter().enumerate() {
                state.u_rate_sum[i][k] += v;
                f.u[k] = state.u0[i][k] + dt * state.u_rate_sum[i][k];
            }
            for (k, v) in rates.gamma.iter().enumerate() {
                state.gamma_rate_sum[i][k] += v;
                f.gamma[k] = state.gamma0[i][k] + dt * state.gamma_rate_sum[i][k];
            }
        }
        for e in 0..state.lambda_u.len() / 4 {
            for j in 0..4 {
                let k = 4 * e + j;
                state.lambda_rate_sum[k] += lambda[6 * e + j];
                state.lambda_u[k] = state.lambda_u0[k] + dt * state.lambda_rate_sum[k];
            }
        }
        Ok(vec![rep])
    }

    fn set_mechanics(&self, state: &mut SchemeState, solutions: &[Vec<f64>]) {
        for (i, x) in solutions.iter().enumerate() {
            state.fields[i].set_mechanics(&self.disc.subdomains[i].dofmap, x);
        }
    }

    fn set_flow(&self, state: &mut SchemeState, solutions: &[Vec<f64>]) {
        for (i, x) in solutions.iter().enumerate() {
            state.fields[i].set_flow(&self.disc.subdomains[i].dofmap, x);
        }
    }

    /// `A_σp^T (σ_new - σ_old)` per subdomain.
    fn coupling(&self, new: &[&Vec<f64>], old: &[&Vec<f64>]) -> Vec<Vec<f64>> {
        self.disc
            .subdomains
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let diff: Vec<f64> = new[i].iter().zip(old[i]).map(|(a, b)| a - b).collect();
                s.blocks.a_sp.mul_transpose(&diff)
            })
            .collect()
    }

    fn step_drained_split(&self, state: &mut SchemeState, t: f64, step: usize) -> Result<Vec<PhaseReport>> {
        let p_old: Vec<Vec<f64>> = state.fields.iter().map(|f| f.p.clone()).collect();
        let sigma_old: Vec<Vec<f64>> = state.fields.iter().map(|f| f.sigma.clone()).collect();
        let (mech, lambda_u, rep_e) = self.elasticity_phase(t, &p_old, step)?;
        self.set_mechanics(state, &mech);
        state.lambda_u = lambda_u;
        let new: Vec<&Vec<f64>> = state.fields.iter().map(|f| &f.sigma).collect();
        let coupling = self.coupling(&new, &sigma_old.iter().collect::<Vec<_>>());
        let (flow, rep_d) = self.darcy_phase(t, &p_old, &coupling, step)?;
        self.set_flow(state, &flow);
        Ok(vec![rep_e, rep_d])
    }

    fn step_fixed_stress(&self, state: &mut SchemeState, t: f64, step: usize) -> Result<Vec<PhaseReport>> {
        let p_old: Vec<Vec<f64>> = state.fields.iter().map(|f| f.p.clone()).collect();
        let now: Vec<&Vec<f64>> = state.fields.iter().map(|f| &f.sigma).collect();
        let before: Vec<&Vec<f64>> = state.sigma_before.iter().collect();
        let coupling = self.coupling(&now, &before);
        let (flow, rep_d) = self.darcy_phase(t, &p_old, &coupling, step)?;
        self.set_flow(state, &flow);
        let p_new: Vec<Vec<f64>> = state.fields.iter().map(|f| f.p.clone()).collect();
        let (mech, lambda_u, rep_e) = self.elasticity_phase(t, &p_new, step)?;
        self.set_mechanics(state, &mech);
        state.lambda_u = lambda_u;
        Ok(vec![rep_d, rep_e])
    }

    /// Initializes and takes `n_steps` steps, calling `observer` after
    /// initialization and after every step.
    pub fn run(
        &self,
        n_steps: usize,
        mut observer: impl FnMut(&SchemeState, &StepRecord) -> Result<()>,
    ) -> Result<(SchemeState, RunSummary)> {
        let (mut state, init) = self.initialize()?;
        observer(&state, &init)?;
        let physics: Vec<Physics> = match self.kind {
            SchemeKind::Monolithic => vec![Physics::Monolithic],
            SchemeKind::Ds => vec![Physics::Elasticity, Physics::Darcy],
            SchemeKind::Fs => vec![Physics::Darcy, Physics::Elasticity],
        };
        let mut totals = vec![0usize; physics.len()];
        for _ in 0..n_steps {
            let record = self.step(&mut state)?;
            for (k, p) in physics.iter().enumerate() {
                totals[k] += record.iterations(*p).unwrap_or(0);
            }
            observer(&state, &record)?;
        }
        let mean_iterations = physics
            .iter()
            .zip(&totals)
            .map(|(p, &n)| (*p, if n_steps > 0 { n as f64 / n_steps as f64 } else { 0.0 }))
            .collect();
        let monitor = state.monitor;
        Ok((
            state,
            RunSummary {
                kind: self.kind,
                steps: n_steps,
                mean_iterations,
                initialization: init,
                monitor,
            },
        ))
    }
}

/// Darcy velocity of the initial pressure from a whole-domain mass solve,
/// restricted to every subdomain.
pub fn initial_velocity(
    disc: &Discretization,
    data: &dyn ProblemData,
    p0: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let global = GlobalProblem::new(
        &disc.mesh,
        disc.decomposition.boundary_conditions().clone(),
        &disc.material,
    )?;
    let gd = &global.subdomain().dofmap;
    // Gather the pressure into the whole-domain numbering.
    let mut gp = vec![0.0; gd.n_p()];
    let index: std::collections::HashMap<usize, usize> =
        gd.cells().iter().enumerate().map(|(l, &c)| (c, l)).collect();
    for (sub, p) in disc.subdomains.iter().zip(p0) {
        for (lc, c) in sub.dofmap.cells().iter().enumerate() {
            gp[index[c]] = p[lc];
        }
    }
    let z = global.darcy_velocity(data, 0.0, &gp)?;
    let mut whole = Fields::zeros(gd);
    whole.z = z;
    Ok(disc
        .subdomains
        .iter()
        .map(|s| global.restrict(s, &whole).z)
        .collect())
}
