//! Per-subdomain saddle-point systems: assembly into one sparse matrix,
//! sparse LU factorization and the bar, star and single-physics solves.

use crate::assembly::{
    assemble_blocks, assemble_rhs, cell_values, AssemblyContext, MaterialField, ProblemData,
    RhsKind, SubdomainMatrixBlocks,
};
use crate::error::{Error, Result};
use crate::mesh::{Decomposition, Mesh};
use crate::quadrature::QuadratureRule;
use crate::spaces::{build_dofmap, CellValues, DofMap, ReferenceBdm1};
use crate::sparse::{CsrMatrix, SparseLu};
use rayon::prelude::*;

/// Which system a subdomain operator represents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    /// Coupled time-differentiated system in `(σ, u̇, γ̇, z, p)`.
    Biot { dt: f64 },
    /// Mixed elasticity in `(σ, u, γ)`.
    Elasticity,
    /// Mixed Darcy with storage in `(z, p)`.
    Darcy { dt: f64 },
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Biot { .. } => "biot",
            Variant::Elasticity => "elasticity",
            Variant::Darcy { .. } => "darcy",
        }
    }

    pub fn dim(&self, dofmap: &DofMap) -> usize {
        match self {
            Variant::Biot { .. } => dofmap.total(),
            Variant::Elasticity => dofmap.n_mechanics(),
            Variant::Darcy { .. } => dofmap.n_flow(),
        }
    }
}

/// Static data of one subdomain: numbering, mapped basis values and
/// assembled blocks.
#[derive(Debug, Clone)]
pub struct Subdomain {
    pub dofmap: DofMap,
    pub cells: Vec<CellValues>,
    pub blocks: SubdomainMatrixBlocks,
}

impl Subdomain {
    pub fn new(
        mesh: &Mesh,
        dofmap: DofMap,
        material: &MaterialField,
        rule: &QuadratureRule,
        reference: &ReferenceBdm1,
    ) -> Result<Self> {
        let cells = cell_values(mesh, &dofmap, rule, reference)?;
        let blocks = assemble_blocks(&dofmap, &cells, material)?;
        Ok(Self {
            dofmap,
            cells,
            blocks,
        })
    }

    pub fn context<'a>(&'a self, mesh: &'a Mesh, line: &'a QuadratureRule) -> AssemblyContext<'a> {
        AssemblyContext {
            mesh,
            dofmap: &self.dofmap,
            blocks: &self.blocks,
            cells: &self.cells,
            line,
        }
    }
}

/// Mesh, decomposition and every subdomain's static data.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub decomposition: Decomposition,
    pub subdomains: Vec<Subdomain>,
    pub material: MaterialField,
    /// Edge rule for boundary functionals.
    pub line: QuadratureRule,
}

impl Discretization {
    pub fn new(mesh: Mesh, decomposition: Decomposition, material: &MaterialField) -> Result<Self> {
        material.validate(mesh.n_cells())?;
        let rule = QuadratureRule::assembly();
        let reference = ReferenceBdm1::new();
        let subdomains = build_dofmap(&mesh, &decomposition)
            .into_par_iter()
            .map(|d| Subdomain::new(&mesh, d, material, &rule, &reference))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            mesh,
            decomposition,
            subdomains,
            material: material.clone(),
            line: rule,
        })
    }

    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn n_interface_edges(&self) -> usize {
        self.decomposition.interface_edges().len()
    }

    pub fn context(&self, i: usize) -> AssemblyContext<'_> {
        self.subdomains[i].context(&self.mesh, &self.line)
    }
}

/// All five fields on one subdomain. For the coupled variant the `u` and
/// `gamma` slots hold rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Fields {
    pub sigma: Vec<f64>,
    pub u: Vec<f64>,
    pub gamma: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
}

impl Fields {
    pub fn zeros(d: &DofMap) -> Self {
        Self {
            sigma: vec![0.0; d.n_sigma()],
            u: vec![0.0; d.n_u()],
            gamma: vec![0.0; d.n_gamma()],
            z: vec![0.0; d.n_z()],
            p: vec![0.0; d.n_p()],
        }
    }

    /// Splits a vector in the full layout.
    pub fn from_full(d: &DofMap, x: &[f64]) -> Self {
        Self {
            sigma: x[..d.u_offset()].to_vec(),
            u: x[d.u_offset()..d.gamma_offset()].to_vec(),
            gamma: x[d.gamma_offset()..d.z_offset()].to_vec(),
            z: x[d.z_offset()..d.p_offset()].to_vec(),
            p: x[d.p_offset()..].to_vec(),
        }
    }

    /// Stores a mechanics solution `(σ, u, γ)`.
    pub fn set_mechanics(&mut self, d: &DofMap, x: &[f64]) {
        self.sigma.copy_from_slice(&x[..d.u_offset()]);
        self.u.copy_from_slice(&x[d.u_offset()..d.gamma_offset()]);
        self.gamma.copy_from_slice(&x[d.gamma_offset()..d.z_offset()]);
    }

    /// Stores a flow solution `(z, p)`.
    pub fn set_flow(&mut self, d: &DofMap, x: &[f64]) {
        let nz = d.n_z();
        self.z.copy_from_slice(&x[..nz]);
        self.p.copy_from_slice(&x[nz..]);
    }

    pub fn to_full(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(
            self.sigma.len() + self.u.len() + self.gamma.len() + self.z.len() + self.p.len(),
        );
        v.extend_from_slice(&self.sigma);
        v.extend_from_slice(&self.u);
        v.extend_from_slice(&self.gamma);
        v.extend_from_slice(&self.z);
        v.extend_from_slice(&self.p);
        v
    }
}

/// Assembled and factorized subdomain system.
#[derive(Debug)]
pub struct SubdomainOperator {
    variant: Variant,
    subdomain: usize,
    matrix: CsrMatrix,
    lu: SparseLu,
}

/// Assembles the system matrix of `variant`; rows of essential DOFs are
/// replaced by identity rows.
pub fn system_matrix(sub: &Subdomain, variant: Variant) -> CsrMatrix {
    let d = &sub.dofmap;
    let b = &sub.blocks;
    let mut t: Vec<(usize, usize, f64)> = Vec::new();
    let mut essential = Vec::new();
    match variant {
        Variant::Biot { .. } | Variant::Elasticity => {
            let scale = match variant {
                Variant::Biot { dt } => dt,
                _ => 1.0,
            };
            t.extend(b.a_ss.triplets());
            for (r, c, v) in b.b_u.triplets() {
                t.push((d.u_offset() + r, c, v));
                t.push((c, d.u_offset() + r, scale * v));
            }
            for (r, c, v) in b.b_g.triplets() {
                t.push((d.gamma_offset() + r, c, v));
                t.push((c, d.gamma_offset() + r, scale * v));
            }
            essential.extend(d.essential_sigma());
            if let Variant::Biot { dt } = variant {
                for (r, c, v) in b.a_sp.triplets() {
                    t.push((r, d.p_offset() + c, v));
                    t.push((d.p_offset() + c, r, v));
                }
                for (r, c, v) in b.m_z.triplets() {
                    t.push((d.z_offset() + r, d.z_offset() + c, v));
                }
                for (r, c, v) in b.b_p.triplets() {
                    t.push((d.z_offset() + c, d.p_offset() + r, -v));
                    t.push((d.p_offset() + r, d.z_offset() + c, dt * v));
                }
                for (c, s) in b.storage().into_iter().enumerate() {
                    t.push((d.p_offset() + c, d.p_offset() + c, s));
                }
                essential.extend(d.essential_z());
            }
        }
        Variant::Darcy { dt } => {
            let nz = d.n_z();
            t.extend(b.m_z.triplets());
            for (r, c, v) in b.b_p.triplets() {
                t.push((c, nz + r, -v));
                t.push((nz + r, c, dt * v));
            }
            for (c, s) in b.storage().into_iter().enumerate() {
                t.push((nz + c, nz + c, s));
            }
            essential.extend(d.essential_z().into_iter().map(|i| i - d.z_offset()));
        }
    }
    let n = variant.dim(d);
    if !essential.is_empty() {
        let mut is_essential = vec![false; n];
        for &i in &essential {
            is_essential[i] = true;
        }
        t.retain(|&(r, _, _)| !is_essential[r]);
        t.extend(essential.iter().map(|&i| (i, i, 1.0)));
    }
    CsrMatrix::from_triplets(n, n, &t)
}

fn dt_of(variant: Variant) -> Option<f64> {
    match variant {
        Variant::Biot { dt } | Variant::Darcy { dt } => Some(dt),
        Variant::Elasticity => None,
    }
}

/// Assembles and factorizes the system of `variant` on `sub`.
pub fn factorize(sub: &Subdomain, variant: Variant) -> Result<SubdomainOperator> {
    if let Some(dt) = dt_of(variant) {
        if !(dt > 0.0) {
            return Err(Error::config("dt", format!("time step must be positive, got {dt}")));
        }
    }
    let subdomain = sub.dofmap.subdomain();
    let singular = |reason: String| Error::Singular {
        subdomain,
        variant: variant.name(),
        reason,
    };
    let matrix = system_matrix(sub, variant);
    let lu = SparseLu::new(&matrix).map_err(singular)?;
    // Pivot breakdown in a singular system shows up as a non-finite or
    // inaccurate solve.
    let ones = vec![1.0; matrix.nrows()];
    let b = matrix.mul(&ones);
    let mut x = b.clone();
    lu.solve(&mut x);
    let mut r = b.clone();
    matrix.mul_add(&x, -1.0, &mut r);
    let rnorm = norm(&r);
    let bnorm = norm(&b).max(f64::MIN_POSITIVE);
    let err = x.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    if !x.iter().all(|v| v.is_finite()) || rnorm > 1e-8 * bnorm || err > 1e-4 {
        return Err(singular(format!(
            "probe solve residual {:.3e}, error {:.3e}",
            rnorm / bnorm,
            err
        )));
    }
    Ok(SubdomainOperator {
        variant,
        subdomain,
        matrix,
        lu,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl SubdomainOperator {
    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn subdomain(&self) -> usize {
        self.subdomain
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn lu(&self) -> &SparseLu {
        &self.lu
    }

    /// Solves in place.
    pub fn solve(&self, rhs: &mut [f64]) -> Result<()> {
        if rhs.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "subdomain right-hand side",
                expected: self.dim(),
                got: rhs.len(),
            });
        }
        self.lu.solve(rhs);
        Ok(())
    }

    /// Relative residual `|b - A x| / |b|`.
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut r = b.to_vec();
        self.matrix.mul_add(x, -1.0, &mut r);
        norm(&r) / norm(b).max(f64::MIN_POSITIVE)
    }
}

fn expect_variant(op: &SubdomainOperator, want: &str) -> Result<()> {
    if op.variant.name() == want {
        Ok(())
    } else {
        Err(Error::Degenerate(format!(
            "subdomain {} operator is {}, expected {want}",
            op.subdomain,
            op.variant.name()
        )))
    }
}

/// Star problem of the coupled system: interface data only. `lambda` is the
/// full monolithic interface vector.
pub fn solve_star(
    op: &SubdomainOperator,
    sub: &Subdomain,
    mesh: &Mesh,
    line: &QuadratureRule,
    lambda: &[f64],
) -> Result<Fields> {
    expect_variant(op, "biot")?;
    let Variant::Biot { dt } = op.variant else {
        unreachable!()
    };
    let ctx = sub.context(mesh, line);
    let mut x = assemble_rhs(&ctx, &crate::assembly::ZeroData, 0.0, RhsKind::BiotStar { dt, lambda })?;
    op.solve(&mut x)?;
    Ok(Fields::from_full(&sub.dofmap, &x))
}

/// Bar problem of the coupled system at `t` with previous state.
pub fn solve_bar(
    op: &SubdomainOperator,
    sub: &Subdomain,
    mesh: &Mesh,
    line: &QuadratureRule,
    data: &dyn ProblemData,
    t: f64,
    sigma_prev: &[f64],
    p_prev: &[f64],
) -> Result<Fields> {
    expect_variant(op, "biot")?;
    let Variant::Biot { dt } = op.variant else {
        unreachable!()
    };
    let ctx = sub.context(mesh, line);
    let mut x = assemble_rhs(
        &ctx,
        data,
        t,
        RhsKind::BiotBar {
            dt,
            sigma_prev,
            p_prev,
        },
    )?;
    op.solve(&mut x)?;
    Ok(Fields::from_full(&sub.dofmap, &x))
}

/// Single-physics solve with an already assembled right-hand side in the
/// operator's layout; returns the solution vector.
pub fn solve_single_physics(op: &SubdomainOperator, rhs: &[f64]) -> Result<Vec<f64>> {
    if matches!(op.variant, Variant::Biot { .. }) {
        return Err(Error::Degenerate(format!(
            "subdomain {} operator is coupled, expected a single-physics operator",
            op.subdomain
        )));
    }
    let mut x = rhs.to_vec();
    op.solve(&mut x)?;
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{Material, ZeroData};
    use crate::mesh::{build_grid, partition, BoundaryConditions, MechanicsBc, FlowBc, SideCondition};
    use crate::spaces::build_dofmap;
    use rand::{Rng, SeedableRng};

    fn subdomains(n: usize, p: usize, bc: BoundaryConditions) -> (Mesh, Vec<Subdomain>) {
        let mesh = build_grid(n, n, None).unwrap();
        let d = partition(&mesh, p, p, bc).unwrap();
        let rule = QuadratureRule::assembly();
        let r = ReferenceBdm1::new();
        let mat = MaterialField::Uniform(Material::isotropic(100.0, 100.0, 1.0, 1.0, 1.0));
        let subs = build_dofmap(&mesh, &d)
            .into_iter()
            .map(|m| Subdomain::new(&mesh, m, &mat, &rule, &r).unwrap())
            .collect();
        (mesh, subs)
    }

    #[test]
    fn one_cell_darcy_is_nine_by_nine() {
        let (_, subs) = subdomains(1, 1, BoundaryConditions::all_dirichlet());
        let op = factorize(&subs[0], Variant::Darcy { dt: 1.0 }).unwrap();
        assert_eq!(op.dim(), 9);
        let x = solve_single_physics(&op, &vec![0.0; 9]).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn biot_random_rhs_residual() {
        let (_, subs) = subdomains(4, 2, BoundaryConditions::all_dirichlet());
        let op = factorize(&subs[0], Variant::Biot { dt: 1e-3 }).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let b: Vec<f64> = (0..op.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut x = b.clone();
        op.solve(&mut x).unwrap();
        assert!(op.relative_residual(&x, &b) < 1e-10);
    }

    #[test]
    fn mixed_boundary_conditions_are_nonsingular() {
        let traction = SideCondition { mechanics: MechanicsBc::Traction, flow: FlowBc::Flux };
        let mut bc = BoundaryConditions::all_dirichlet();
        bc.top = traction;
        bc.bottom = traction;
        bc.left = SideCondition { mechanics: MechanicsBc::Traction, flow: FlowBc::Pressure };
        let (_, subs) = subdomains(4, 2, bc);
        for s in &subs {
            factorize(s, Variant::Elasticity).unwrap();
            factorize(s, Variant::Darcy { dt: 0.01 }).unwrap();
            factorize(s, Variant::Biot { dt: 0.01 }).unwrap();
        }
    }

    #[test]
    fn all_traction_single_domain_is_singular() {
        let t = SideCondition { mechanics: MechanicsBc::Traction, flow: FlowBc::Pressure };
        let bc = BoundaryConditions { left: t, right: t, bottom: t, top: t };
        let (_, subs) = subdomains(2, 1, bc);
        match factorize(&subs[0], Variant::Elasticity) {
            Err(Error::Singular { subdomain, variant, .. }) => {
                assert_eq!(subdomain, 0);
                assert_eq!(variant, "elasticity");
            }
            other => panic!("expected singular, got {other:?}"),
        }
    }

    #[test]
    fn star_is_zero_for_zero_lambda_and_linear() {
        let (mesh, subs) = subdomains(4, 2, BoundaryConditions::all_dirichlet());
        let line = QuadratureRule::assembly();
        let op = factorize(&subs[3], Variant::Biot { dt: 1e-2 }).unwrap();
        let zero = vec![0.0; 6 * 8];
        let f = solve_star(&op, &subs[3], &mesh, &line, &zero).unwrap();
        assert!(f.to_full().iter().all(|&v| v == 0.0));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let l: Vec<f64> = (0..48).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let l3: Vec<f64> = l.iter().map(|v| 3.0 * v).collect();
        let a = solve_star(&op, &subs[3], &mesh, &line, &l).unwrap().to_full();
        let b = solve_star(&op, &subs[3], &mesh, &line, &l3).unwrap().to_full();
        for (x, y) in a.iter().zip(&b) {
            assert!((3.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn bar_with_zero_everything_is_zero() {
        let (mesh, subs) = subdomains(4, 2, BoundaryConditions::all_dirichlet());
        let line = QuadratureRule::assembly();
        let op = factorize(&subs[0], Variant::Biot { dt: 1e-2 }).unwrap();
        let d = &subs[0].dofmap;
        let f = solve_bar(&op, &subs[0], &mesh, &line, &ZeroData, 0.01, &vec![0.0; d.n_sigma()], &vec![0.0; d.n_p()]).unwrap();
        assert!(f.to_full().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn repeated_solves_are_bit_identical() {
        let (_, subs) = subdomains(4, 2, BoundaryConditions::all_dirichlet());
        let op = factorize(&subs[1], Variant::Elasticity).unwrap();
        let b: Vec<f64> = (0..op.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let x1 = solve_single_physics(&op, &b).unwrap();
        let x2 = solve_single_physics(&op, &b).unwrap();
        assert_eq!(x1, x2);
    }
}
