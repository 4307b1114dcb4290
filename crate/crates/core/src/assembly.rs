//! Bilinear forms and right-hand-side functionals of the mixed Biot system
//! on one subdomain.

use crate::error::{Error, Result};
use crate::mesh::{FlowBc, MechanicsBc, Mesh};
use crate::quadrature::QuadratureRule;
use crate::spaces::{edge_poly, CellValues, DofMap, ReferenceBdm1};
use crate::sparse::CsrMatrix;

/// Spatial dimension.
pub const DIM: f64 = 2.0;

/// Material parameters of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    /// Lamé coefficient λ.
    pub lambda: f64,
    /// Shear modulus μ.
    pub mu: f64,
    /// Permeability tensor K.
    pub permeability: [[f64; 2]; 2],
    /// Mass storativity c0.
    pub storativity: f64,
    /// Biot-Willis constant α.
    pub alpha: f64,
}

impl Material {
    pub fn isotropic(lambda: f64, mu: f64, k: f64, storativity: f64, alpha: f64) -> Self {
        Self {
            lambda,
            mu,
            permeability: [[k, 0.0], [0.0, k]],
            storativity,
            alpha,
        }
    }

    pub fn validate(&self, cell: usize) -> Result<()> {
        let bad = |field: &'static str, value: f64| Error::InvalidMaterial { cell, field, value };
        if !(self.mu > 0.0) {
            return Err(bad("mu", self.mu));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(bad("lambda", self.lambda));
        }
        if !(self.storativity >= 0.0) || !self.storativity.is_finite() {
            return Err(bad("storativity", self.storativity));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(bad("alpha", self.alpha));
        }
        let k = self.permeability;
        if (k[0][1] - k[1][0]).abs() > 1e-12 * (k[0][1].abs() + k[1][0].abs()).max(f64::MIN_POSITIVE)
        {
            return Err(bad("permeability_xy", k[0][1]));
        }
        if !(k[0][0] > 0.0) {
            return Err(bad("permeability_xx", k[0][0]));
        }
        let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
        if !(det > 0.0) || !det.is_finite() {
            return Err(bad("permeability_det", det));
        }
        Ok(())
    }

    /// `2μ + dλ`
    pub fn bulk_like(&self) -> f64 {
        2.0 * self.mu + DIM * self.lambda
    }

    /// `λ / (2μ + dλ)`
    pub fn kappa(&self) -> f64 {
        self.lambda / self.bulk_like()
    }

    pub fn inverse_permeability(&self) -> [[f64; 2]; 2] {
        let k = self.permeability;
        let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
        [[k[1][1] / det, -k[0][1] / det], [-k[1][0] / det, k[0][0] / det]]
    }

    /// Compliance `A τ = (τ - κ tr(τ) I) / 2μ` of a 2x2 tensor.
    pub fn compliance(&self, tau: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let tr = tau[0][0] + tau[1][1];
        let k = self.kappa();
        let s = 1.0 / (2.0 * self.mu);
        [
            [s * (tau[0][0] - k * tr), s * tau[0][1]],
            [s * tau[1][0], s * (tau[1][1] - k * tr)],
        ]
    }
}

/// Per-cell material parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum MaterialField {
    Uniform(Material),
    PerCell(Vec<Material>),
}

impl MaterialField {
    pub fn get(&self, cell: usize) -> &Material {
        match self {
            MaterialField::Uniform(m) => m,
            MaterialField::PerCell(v) => &v[cell],
        }
    }

    pub fn validate(&self, n_cells: usize) -> Result<()> {
        match self {
            MaterialField::Uniform(m) => m.validate(0),
            MaterialField::PerCell(v) => {
                if v.len() != n_cells {
                    return Err(Error::DimensionMismatch {
                        what: "material field",
                        expected: n_cells,
                        got: v.len(),
                    });
                }
                v.iter().enumerate().try_for_each(|(c, m)| m.validate(c))
            }
        }
    }
}

/// Assembled blocks on one subdomain, indexed within each field.
#[derive(Debug, Clone)]
pub struct SubdomainMatrixBlocks {
    /// `(A σ, τ)`
    pub a_ss: CsrMatrix,
    /// `(A α p I, τ)`: stress rows, pressure columns.
    pub a_sp: CsrMatrix,
    /// `(v, div τ)`: displacement rows.
    pub b_u: CsrMatrix,
    /// `(ξ, τ)`: rotation rows.
    pub b_g: CsrMatrix,
    /// `(K^{-1} z, q)`
    pub m_z: CsrMatrix,
    /// `(w, div q)`: pressure rows.
    pub b_p: CsrMatrix,
    /// Diagonal of `c0 (p, w)`.
    pub m_p: Vec<f64>,
    /// Diagonal of `(A α p I, α w I)`.
    pub s_pp: Vec<f64>,
    /// Cell areas.
    pub area: Vec<f64>,
}

impl SubdomainMatrixBlocks {
    /// Diagonal of `c0 M + S`.
    pub fn storage(&self) -> Vec<f64> {
        self.m_p.iter().zip(&self.s_pp).map(|(a, b)| a + b).collect()
    }
}

/// Precomputes mapped basis values for every cell of a subdomain.
pub fn cell_values(
    mesh: &Mesh,
    dofmap: &DofMap,
    rule: &QuadratureRule,
    reference: &ReferenceBdm1,
) -> Result<Vec<CellValues>> {
    dofmap
        .cells()
        .iter()
        .map(|&c| CellValues::new(mesh, c, rule, reference))
        .collect()
}

/// Assembles all bilinear forms of the subdomain.
pub fn assemble_blocks(
    dofmap: &DofMap,
    cells: &[CellValues],
    material: &MaterialField,
) -> Result<SubdomainMatrixBlocks> {
    let nb = dofmap.n_bdm();
    let nc = dofmap.n_cells();
    let mut a_ss = Vec::with_capacity(nc * 256);
    let mut a_sp = Vec::with_capacity(nc * 16);
    let mut b_u = Vec::with_capacity(nc * 16);
    let mut b_g = Vec::with_capacity(nc * 16);
    let mut m_z = Vec::with_capacity(nc * 64);
    let mut b_p = Vec::with_capacity(nc * 8);
    let mut m_p = vec![0.0; nc];
    let mut s_pp = vec![0.0; nc];
    let mut area = vec![0.0; nc];

    for (lc, (&gc, cv)) in dofmap.cells().iter().zip(cells).enumerate() {
        let mat = material.get(gc);
        mat.validate(gc)?;
        let dofs = dofmap.cell_bdm_dofs(lc);
        let inv_2mu = 1.0 / (2.0 * mat.mu);
        let kappa = mat.kappa();
        let kinv = mat.inverse_permeability();

        let mut mass = [[0.0; 8]; 8];
        let mut mass_k = [[0.0; 8]; 8];
        // comp[a][r][s] = ∫ φ_a[r] φ_b[s] is needed for the trace term.
        let mut cross = [[[[0.0; 2]; 2]; 8]; 8];
        let mut integral = [[0.0; 2]; 8];
        let mut div = [0.0; 8];
        for q in 0..cv.jxw.len() {
            let w = cv.jxw[q];
            let phi = &cv.basis[q];
            for a in 0..8 {
                integral[a][0] += w * phi[a][0];
                integral[a][1] += w * phi[a][1];
                div[a] += w * cv.divergences[q][a];
                let kp = [
                    kinv[0][0] * phi[a][0] + kinv[0][1] * phi[a][1],
                    kinv[1][0] * phi[a][0] + kinv[1][1] * phi[a][1],
                ];
                for b in 0..8 {
                    mass[a][b] += w * (phi[a][0] * phi[b][0] + phi[a][1] * phi[b][1]);
                    mass_k[a][b] += w * (kp[0] * phi[b][0] + kp[1] * phi[b][1]);
                    for r in 0..2 {
                        for s in 0..2 {
                            cross[a][b][r][s] += w * phi[a][r] * phi[b][s];
                        }
                    }
                }
            }
        }

        for r in 0..2 {
            for a in 0..8 {
                let i = dofmap.sigma(r, dofs[a]);
                for s in 0..2 {
                    for b in 0..8 {
                        let j = dofmap.sigma(s, dofs[b]);
                        let delta = if r == s { mass[a][b] } else { 0.0 };
                        a_ss.push((i, j, inv_2mu * (delta - kappa * cross[a][b][r][s])));
                    }
                }
                a_sp.push((i, lc, mat.alpha / mat.bulk_like() * integral[a][r]));
                b_u.push((2 * lc + r, i, div[a]));
            }
        }
        for a in 0..8 {
            // ξ = γ [[0, 1], [-1, 0]]: ξ : τ = γ (τ_01 - τ_10).
            b_g.push((lc, dofmap.sigma(0, dofs[a]), integral[a][1]));
            b_g.push((lc, dofmap.sigma(1, dofs[a]), -integral[a][0]));
            b_p.push((lc, dofs[a], div[a]));
            for b in 0..8 {
                m_z.push((dofs[a], dofs[b], mass_k[a][b]));
            }
        }
        area[lc] = cv.area;
        m_p[lc] = mat.storativity * cv.area;
        s_pp[lc] = mat.alpha * mat.alpha * DIM / mat.bulk_like() * cv.area;
    }

    let ns = 2 * nb;
    Ok(SubdomainMatrixBlocks {
        a_ss: CsrMatrix::from_triplets(ns, ns, &a_ss),
        a_sp: CsrMatrix::from_triplets(ns, nc, &a_sp),
        b_u: CsrMatrix::from_triplets(2 * nc, ns, &b_u),
        b_g: CsrMatrix::from_triplets(nc, ns, &b_g),
        m_z: CsrMatrix::from_triplets(nb, nb, &m_z),
        b_p: CsrMatrix::from_triplets(nc, nb, &b_p),
        m_p,
        s_pp,
        area,
    })
}

/// Source terms and boundary data of the Biot system. All methods default
/// to zero.
pub trait ProblemData: Send + Sync {
    /// Body force `f`.
    fn body_force(&self, _x: [f64; 2], _t: f64) -> [f64; 2] {
        [0.0; 2]
    }
    /// Mass source `g`.
    fn source(&self, _x: [f64; 2], _t: f64) -> f64 {
        0.0
    }
    /// Displacement on displacement sides.
    fn displacement(&self, _x: [f64; 2], _t: f64) -> [f64; 2] {
        [0.0; 2]
    }
    /// Pressure on pressure sides.
    fn pressure(&self, _x: [f64; 2], _t: f64) -> f64 {
        0.0
    }
    /// Prescribed `σ n` on traction sides, `n` the outward normal.
    fn traction(&self, _x: [f64; 2], _t: f64, _n: [f64; 2]) -> [f64; 2] {
        [0.0; 2]
    }
    /// Prescribed `z · n` on flux sides.
    fn normal_flux(&self, _x: [f64; 2], _t: f64, _n: [f64; 2]) -> f64 {
        0.0
    }
    /// Initial pressure `p0`.
    fn initial_pressure(&self, _x: [f64; 2]) -> f64 {
        0.0
    }
}

/// Homogeneous data.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroData;

impl ProblemData for ZeroData {}

/// Load vectors of one subdomain at one time.
#[derive(Debug, Clone)]
pub struct Functionals {
    /// `(f, v)` per displacement unknown.
    pub f: Vec<f64>,
    /// `(g, w)` per pressure unknown.
    pub g: Vec<f64>,
    /// `<g_u, τ n>` on displacement sides, per stress unknown.
    pub g_u: Vec<f64>,
    /// `<g_p, q · n>` on pressure sides, per velocity unknown.
    pub g_p: Vec<f64>,
    /// Prescribed stress DOF values on traction sides (stress index, value).
    pub traction: Vec<(usize, f64)>,
    /// Prescribed velocity DOF values on flux sides (velocity index, value).
    pub flux: Vec<(usize, f64)>,
}

/// Integrates data functionals; `line` is the edge rule.
pub fn assemble_functionals(
    mesh: &Mesh,
    dofmap: &DofMap,
    cells: &[CellValues],
    data: &dyn ProblemData,
    t: f64,
    line: &QuadratureRule,
) -> Functionals {
    let nc = dofmap.n_cells();
    let mut f = vec![0.0; 2 * nc];
    let mut g = vec![0.0; nc];
    for (lc, cv) in cells.iter().enumerate() {
        for (x, w) in cv.points.iter().zip(&cv.jxw) {
            let fv = data.body_force(*x, t);
            f[2 * lc] += w * fv[0];
            f[2 * lc + 1] += w * fv[1];
            g[lc] += w * data.source(*x, t);
        }
    }
    let mut g_u = vec![0.0; dofmap.n_sigma()];
    let mut g_p = vec![0.0; dofmap.n_z()];
    let mut traction = Vec::new();
    let mut flux = Vec::new();
    for b in dofmap.boundary_edges() {
        let [p0, p1] = mesh.edge_coords(b.global);
        let len = mesh.edge_length(b.global);
        let o = b.side.positive_is_outward();
        let n_out = b.side.outward_normal();
        let at = |s: f64| [p0[0] + s * (p1[0] - p0[0]), p0[1] + s * (p1[1] - p0[1])];
        for k in 0..2 {
            let dof = 2 * b.local + k;
            match b.condition.mechanics {
                MechanicsBc::Displacement => {
                    for r in 0..2 {
                        let v: f64 = line
                            .line()
                            .map(|(s, w)| w * data.displacement(at(s), t)[r] * edge_poly(k, s))
                            .sum();
                        g_u[dofmap.sigma(r, dof)] += o * v;
                    }
                }
                MechanicsBc::Traction => {
                    for r in 0..2 {
                        let v: f64 = line
                            .line()
                            .map(|(s, w)| w * data.traction(at(s), t, n_out)[r] * edge_poly(k, s))
                            .sum();
                        traction.push((dofmap.sigma(r, dof), o * len * v));
                    }
                }
            }
            match b.condition.flow {
                FlowBc::Pressure => {
                    let v: f64 = line
                        .line()
                        .map(|(s, w)| w * data.pressure(at(s), t) * edge_poly(k, s))
                        .sum();
                    g_p[dof] += o * v;
                }
                FlowBc::Flux => {
                    let v: f64 = line
                        .line()
                        .map(|(s, w)| w * data.normal_flux(at(s), t, n_out) * edge_poly(k, s))
                        .sum();
                    flux.push((dof, o * len * v));
                }
            }
        }
    }
    Functionals {
        f,
        g,
        g_u,
        g_p,
        traction,
        flux,
    }
}

/// Cell averages of `f`: the L2 projection onto piecewise constants.
pub fn project_cellwise(cells: &[CellValues], f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    cells
        .iter()
        .map(|cv| {
            let integral: f64 = cv.points.iter().zip(&cv.jxw).map(|(x, w)| w * f(*x)).sum();
            integral / cv.area
        })
        .collect()
}

/// Everything `assemble_rhs` needs about a subdomain.
#[derive(Clone, Copy)]
pub struct AssemblyContext<'a> {
    pub mesh: &'a Mesh,
    pub dofmap: &'a DofMap,
    pub blocks: &'a SubdomainMatrixBlocks,
    pub cells: &'a [CellValues],
    pub line: &'a QuadratureRule,
}

/// Right-hand-side variants.
///
/// Interface vectors hold two moments per component per interface edge:
/// the monolithic layout is `[u0 m0, u0 m1, u1 m0, u1 m1, p m0, p m1]`
/// per edge, the elasticity layout its first four and the Darcy layout its
/// last two entries.
pub enum RhsKind<'a> {
    /// Coupled time-differentiated system with true data, zero interface
    /// data and previous state `(σⁿ, pⁿ)` at `t_prev = t - dt`.
    BiotBar {
        dt: f64,
        sigma_prev: &'a [f64],
        p_prev: &'a [f64],
    },
    /// Coupled system with only interface data.
    BiotStar { dt: f64, lambda: &'a [f64] },
    /// Elasticity with true data and a frozen pressure for the coupling.
    Elasticity { pressure: &'a [f64] },
    /// Elasticity with only interface data.
    ElasticityStar { lambda: &'a [f64] },
    /// Darcy with true data, previous pressure and the coupling load
    /// `A_σp^T (σ - σ_prev)` subtracted from the mass balance.
    Darcy {
        dt: f64,
        p_prev: &'a [f64],
        coupling: &'a [f64],
    },
    /// Darcy with only interface data.
    DarcyStar { lambda: &'a [f64] },
}

/// Assembles a right-hand side in the unknown layout of the matching
/// operator: all five fields for the coupled variants, `(σ, u, γ)` for
/// elasticity and `(z, p)` for Darcy. Rows of essential DOFs carry the
/// prescribed value.
pub fn assemble_rhs(
    ctx: &AssemblyContext<'_>,
    data: &dyn ProblemData,
    t: f64,
    kind: RhsKind<'_>,
) -> Result<Vec<f64>> {
    let d = ctx.dofmap;
    let b = ctx.blocks;
    let check = |what: &'static str, expected: usize, got: usize| {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what,
                expected,
                got,
            })
        }
    };
    let n_iface = d
        .interface_traces()
        .iter()
        .map(|t| t.interface + 1)
        .max()
        .unwrap_or(0);
    let functionals = |t| assemble_functionals(ctx.mesh, d, ctx.cells, data, t, ctx.line);
    match kind {
        RhsKind::BiotBar {
            dt,
            sigma_prev,
            p_prev,
        } => {
            check("previous stress", d.n_sigma(), sigma_prev.len())?;
            check("previous pressure", d.n_p(), p_prev.len())?;
            let now = functionals(t);
            let before = functionals(t - dt);
            let mut rhs = vec![0.0; d.total()];
            for i in 0..d.n_sigma() {
                rhs[i] = now.g_u[i] - before.g_u[i];
            }
            b.a_ss.mul_add(sigma_prev, 1.0, &mut rhs[..d.n_sigma()]);
            b.a_sp.mul_add(p_prev, 1.0, &mut rhs[..d.n_sigma()]);
            for i in 0..d.n_u() {
                rhs[d.u_offset() + i] = -now.f[i];
            }
            for i in 0..d.n_z() {
                rhs[d.z_offset() + i] = -now.g_p[i];
            }
            let storage = b.storage();
            let p_rows = &mut rhs[d.p_offset()..];
            for c in 0..d.n_p() {
                p_rows[c] = dt * now.g[c] + storage[c] * p_prev[c];
            }
            b.a_sp.mul_transpose_add(sigma_prev, 1.0, p_rows);
            for &(i, v) in &now.traction {
                rhs[i] = v;
            }
            for &(i, v) in &now.flux {
                rhs[d.z_offset() + i] = v;
            }
            Ok(rhs)
        }
        RhsKind::BiotStar { dt, lambda } => {
            if lambda.len() < 6 * n_iface {
                check("interface vector", 6 * n_iface, lambda.len())?;
            }
            let mut rhs = vec![0.0; d.total()];
            for tr in d.interface_traces() {
                let l = &lambda[6 * tr.interface..6 * tr.interface + 6];
                for k in 0..2 {
                    let dof = 2 * tr.local + k;
                    for r in 0..2 {
                        rhs[d.sigma(r, dof)] = dt * tr.sign * l[2 * r + k];
                    }
                    rhs[d.z(dof)] = -tr.sign * l[4 + k];
                }
            }
            Ok(rhs)
        }
        RhsKind::Elasticity { pressure } => {
            check("coupling pressure", d.n_p(), pressure.len())?;
            let now = functionals(t);
            let mut rhs = vec![0.0; d.n_mechanics()];
            rhs[..d.n_sigma()].copy_from_slice(&now.g_u);
            b.a_sp.mul_add(pressure, -1.0, &mut rhs[..d.n_sigma()]);
            for i in 0..d.n_u() {
                rhs[d.u_offset() + i] = -now.f[i];
            }
            for &(i, v) in &now.traction {
                rhs[i] = v;
            }
            Ok(rhs)
        }
        RhsKind::ElasticityStar { lambda } => {
            if lambda.len() < 4 * n_iface {
                check("interface vector", 4 * n_iface, lambda.len())?;
            }
            let mut rhs = vec![0.0; d.n_mechanics()];
            for tr in d.interface_traces() {
                for r in 0..2 {
                    for k in 0..2 {
                        rhs[d.sigma(r, 2 * tr.local + k)] =
                            tr.sign * lambda[4 * tr.interface + 2 * r + k];
                    }
                }
            }
            Ok(rhs)
        }
        RhsKind::Darcy {
            dt,
            p_prev,
            coupling,
        } => {
            check("previous pressure", d.n_p(), p_prev.len())?;
            check("coupling load", d.n_p(), coupling.len())?;
            let now = functionals(t);
            let nz = d.n_z();
            let mut rhs = vec![0.0; d.n_flow()];
            for i in 0..nz {
                rhs[i] = -now.g_p[i];
            }
            let storage = b.storage();
            for c in 0..d.n_p() {
                rhs[nz + c] = dt * now.g[c] + storage[c] * p_prev[c] - coupling[c];
            }
            for &(i, v) in &now.flux {
                rhs[i] = v;
            }
            Ok(rhs)
        }
        RhsKind::DarcyStar { lambda } => {
            if lambda.len() < 2 * n_iface {
                check("interface vector", 2 * n_iface, lambda.len())?;
            }
            let mut rhs = vec![0.0; d.n_flow()];
            for tr in d.interface_traces() {
                for k in 0..2 {
                    rhs[2 * tr.local + k] = -tr.sign * lambda[2 * tr.interface + k];
                }
            }
            Ok(rhs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_grid, partition, BoundaryConditions, Perturbation};
    use crate::spaces::build_dofmap;

    fn setup(n: usize, px: usize, perturb: bool) -> (Mesh, Vec<DofMap>, Vec<Vec<CellValues>>) {
        let spec = perturb.then(|| {
            let mut s = Perturbation::new(0.2, 3);
            s.layout = (px, px);
            s
        });
        let mesh = build_grid(n, n, spec.as_ref()).unwrap();
        let d = partition(&mesh, px, px, BoundaryConditions::all_dirichlet()).unwrap();
        let maps = build_dofmap(&mesh, &d);
        let rule = QuadratureRule::assembly();
        let r = ReferenceBdm1::new();
        let cells = maps
            .iter()
            .map(|m| cell_values(&mesh, m, &rule, &r).unwrap())
            .collect();
        (mesh, maps, cells)
    }

    fn quad(a: &CsrMatrix, x: &[f64], y: &[f64]) -> f64 {
        a.mul(y).iter().zip(x).map(|(u, v)| u * v).sum()
    }

    /// Coefficients of a constant stress field in a BDM1 row space: the
    /// normal moment of a constant vector c is (c · n_e) |e| for moment 0.
    fn constant_row(mesh: &Mesh, map: &DofMap, c: [f64; 2]) -> Vec<f64> {
        let mut x = vec![0.0; map.n_bdm()];
        for (le, &e) in map.edges().iter().enumerate() {
            let n = mesh.edge_normal(e);
            x[2 * le] = (c[0] * n[0] + c[1] * n[1]) * mesh.edge_length(e);
        }
        x
    }

    #[test]
    fn unit_compliance_reduces_to_mass() {
        let (mesh, maps, cells) = setup(4, 1, false);
        let mat = MaterialField::Uniform(Material::isotropic(0.0, 0.5, 1.0, 1.0, 1.0));
        let b = assemble_blocks(&maps[0], &cells[0], &mat).unwrap();
        let row = constant_row(&mesh, &maps[0], [0.3, -1.2]);
        let mut tau = vec![0.0; maps[0].n_sigma()];
        tau[..maps[0].n_bdm()].copy_from_slice(&row);
        let energy = quad(&b.a_ss, &tau, &tau);
        // (τ, τ) over the unit square for the constant first row.
        assert!((energy - (0.09 + 1.44)).abs() < 1e-12, "{energy}");
    }

    #[test]
    fn identity_tensor_compliance() {
        let (mesh, maps, cells) = setup(4, 1, true);
        let mat = MaterialField::Uniform(Material::isotropic(100.0, 100.0, 1.0, 1.0, 1.0));
        let m = &maps[0];
        let b = assemble_blocks(m, &cells[0], &mat).unwrap();
        let mut tau = vec![0.0; m.n_sigma()];
        tau[..m.n_bdm()].copy_from_slice(&constant_row(&mesh, m, [1.0, 0.0]));
        tau[m.n_bdm()..].copy_from_slice(&constant_row(&mesh, m, [0.0, 1.0]));
        let energy = quad(&b.a_ss, &tau, &tau);
        assert!((energy - 2.0 / 400.0).abs() < 1e-14, "{energy}");
    }

    #[test]
    fn unit_permeability_gives_vector_mass() {
        let (_, maps, cells) = setup(3, 1, true);
        let m = &maps[0];
        let b = assemble_blocks(m, &cells[0], &MaterialField::Uniform(Material::isotropic(1.0, 1.0, 1.0, 1.0, 1.0))).unwrap();
        let mut mass = vec![];
        for (lc, cv) in cells[0].iter().enumerate() {
            let dofs = m.cell_bdm_dofs(lc);
            for a in 0..8 {
                for bb in 0..8 {
                    let v: f64 = (0..cv.jxw.len())
                        .map(|q| cv.jxw[q] * (cv.basis[q][a][0] * cv.basis[q][bb][0] + cv.basis[q][a][1] * cv.basis[q][bb][1]))
                        .sum();
                    mass.push((dofs[a], dofs[bb], v));
                }
            }
        }
        let mass = CsrMatrix::from_triplets(m.n_bdm(), m.n_bdm(), &mass);
        for (r, c, v) in b.m_z.triplets() {
            assert!((v - mass.get(r, c)).abs() < 1e-14);
        }
    }

    #[test]
    fn blocks_are_symmetric_and_definite() {
        let (_, maps, cells) = setup(4, 2, true);
        let mat = MaterialField::Uniform(Material::isotropic(100.0, 100.0, 1.0, 1.0, 1.0));
        for (m, cv) in maps.iter().zip(&cells) {
            let b = assemble_blocks(m, cv, &mat).unwrap();
            assert!(b.a_ss.asymmetry() < 1e-14);
            assert!(b.m_z.asymmetry() < 1e-14);
            for seed in 0..5u64 {
                let x: Vec<f64> = (0..m.n_sigma()).map(|i| ((i as u64 * 7919 + seed * 31) % 17) as f64 - 8.0).collect();
                assert!(quad(&b.a_ss, &x, &x) > 0.0);
                let y: Vec<f64> = x[..m.n_bdm()].to_vec();
                assert!(quad(&b.m_z, &y, &y) > 0.0);
            }
        }
    }

    #[test]
    fn material_violations_name_the_field() {
        let (_, maps, cells) = setup(2, 1, false);
        let mut bad = Material::isotropic(1.0, 1.0, 1.0, 1.0, 1.0);
        bad.mu = -1.0;
        let mut field = vec![Material::isotropic(1.0, 1.0, 1.0, 1.0, 1.0); 4];
        field[2] = bad;
        match assemble_blocks(&maps[0], &cells[0], &MaterialField::PerCell(field)) {
            Err(Error::InvalidMaterial { cell, field, .. }) => {
                assert_eq!(cell, 2);
                assert_eq!(field, "mu");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_data_gives_zero_rhs() {
        let (mesh, maps, cells) = setup(4, 2, false);
        let mat = MaterialField::Uniform(Material::isotropic(1.0, 1.0, 1.0, 1.0, 1.0));
        let line = QuadratureRule::assembly();
        for (m, cv) in maps.iter().zip(&cells) {
            let b = assemble_blocks(m, cv, &mat).unwrap();
            let ctx = AssemblyContext { mesh: &mesh, dofmap: m, blocks: &b, cells: cv, line: &line };
            let zs = vec![0.0; m.n_sigma()];
            let zp = vec![0.0; m.n_p()];
            let rhs = assemble_rhs(&ctx, &ZeroData, 0.5, RhsKind::BiotBar { dt: 0.1, sigma_prev: &zs, p_prev: &zp }).unwrap();
            assert!(rhs.iter().all(|&v| v == 0.0));
        }
    }
}
