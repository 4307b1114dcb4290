//! Undecomposed solves on the whole domain: the reference backward-Euler
//! solution of the coupled system in `(σ, u, γ, z, p)` and the initial
//! Darcy velocity.

use std::collections::HashMap;

use crate::assembly::{
    assemble_functionals, assemble_rhs, project_cellwise, MaterialField, ProblemData, RhsKind,
};
use crate::error::{Error, Result};
use crate::mesh::{partition, BoundaryConditions, Mesh};
use crate::sparse::{CsrMatrix, SparseLu};
use crate::subdomain::{factorize, Discretization, Fields, Subdomain, Variant};

/// The whole domain treated as one subdomain.
#[derive(Debug, Clone)]
pub struct GlobalProblem {
    disc: Discretization,
    edge_index: HashMap<usize, usize>,
    cell_index: HashMap<usize, usize>,
}

fn lu_error(what: &'static str) -> impl Fn(String) -> Error {
    move |reason| Error::Singular {
        subdomain: 0,
        variant: what,
        reason,
    }
}

impl GlobalProblem {
    pub fn new(mesh: &Mesh, bc: BoundaryConditions, material: &MaterialField) -> Result<Self> {
        let decomposition = partition(mesh, 1, 1, bc)?;
        let disc = Discretization::new(mesh.clone(), decomposition, material)?;
        let d = &disc.subdomains[0].dofmap;
        let edge_index = d.edges().iter().enumerate().map(|(l, &g)| (g, l)).collect();
        let cell_index = d.cells().iter().enumerate().map(|(l, &g)| (g, l)).collect();
        Ok(Self {
            disc,
            edge_index,
            cell_index,
        })
    }

    pub fn subdomain(&self) -> &Subdomain {
        &self.disc.subdomains[0]
    }

    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    /// Cell averages of the initial pressure.
    pub fn initial_pressure(&self, data: &dyn ProblemData) -> Vec<f64> {
        project_cellwise(&self.subdomain().cells, |x| data.initial_pressure(x))
    }

    /// Mixed elasticity with a frozen pressure; returns `(σ, u, γ)`.
    pub fn elasticity(&self, data: &dyn ProblemData, t: f64, pressure: &[f64]) -> Result<Vec<f64>> {
        let op = factorize(self.subdomain(), Variant::Elasticity)?;
        let mut x = assemble_rhs(&self.disc.context(0), data, t, RhsKind::Elasticity { pressure })?;
        op.solve(&mut x)?;
        Ok(x)
    }

    /// Darcy law `(K^{-1} z, q) - (p, div q) = -<g_p, q n>` for a given
    /// pressure, with prescribed flux on no-flow sides.
    pub fn darcy_velocity(&self, data: &dyn ProblemData, t: f64, pressure: &[f64]) -> Result<Vec<f64>> {
        let sub = self.subdomain();
        let d = &sub.dofmap;
        let b = &sub.blocks;
        if pressure.len() != d.n_p() {
            return Err(Error::DimensionMismatch {
                what: "pressure",
                expected: d.n_p(),
                got: pressure.len(),
            });
        }
        let fun = assemble_functionals(&self.disc.mesh, d, &sub.cells, data, t, &self.disc.line);
        let mut rhs = b.b_p.mul_transpose(pressure);
        for (r, g) in rhs.iter_mut().zip(&fun.g_p) {
            *r -= g;
        }
        let essential: Vec<usize> = d.essential_z().iter().map(|i| i - d.z_offset()).collect();
        let mut is_essential = vec![false; d.n_z()];
        for &i in &essential {
            is_essential[i] = true;
        }
        let mut t: Vec<_> = b.m_z.triplets().filter(|&(r, _, _)| !is_essential[r]).collect();
        t.extend(essential.iter().map(|&i| (i, i, 1.0)));
        for &(i, v) in &fun.flux {
            rhs[i] = v;
        }
        let m = CsrMatrix::from_triplets(d.n_z(), d.n_z(), &t);
        let lu = SparseLu::new(&m).map_err(lu_error("velocity mass"))?;
        lu.solve(&mut rhs);
        Ok(rhs)
    }

    /// Backward-Euler matrix of the coupled system in `(σ, u, γ, z, p)`
    /// with the pressure equation multiplied by `dt`.
    pub fn coupled_matrix(&self, dt: f64) -> CsrMatrix {
        let sub = self.subdomain();
        let d = &sub.dofmap;
        let b = &sub.blocks;
        let (uo, go, zo, po) = (d.u_offset(), d.gamma_offset(), d.z_offset(), d.p_offset());
        let mut t: Vec<(usize, usize, f64)> = b.a_ss.triplets().collect();
        for (r, c, v) in b.b_u.triplets() {
            t.push((c, uo + r, v));
            t.push((uo + r, c, v));
        }
        for (r, c, v) in b.b_g.triplets() {
            t.push((c, go + r, v));
            t.push((go + r, c, v));
        }
        for (r, c, v) in b.a_sp.triplets() {
            t.push((r, po + c, v));
            t.push((po + c, r, v));
        }
        for (r, c, v) in b.m_z.triplets() {
            t.push((zo + r, zo + c, v));
        }
        for (r, c, v) in b.b_p.triplets() {
            t.push((zo + c, po + r, -v));
            t.push((po + r, zo + c, dt * v));
        }
        for (c, s) in b.storage().into_iter().enumerate() {
            t.push((po + c, po + c, s));
        }
        let mut essential = d.essential_sigma();
        essential.extend(d.essential_z());
        let mut is_essential = vec![false; d.total()];
        for &i in &essential {
            is_essential[i] = true;
        }
        t.retain(|&(r, _, _)| !is_essential[r]);
        t.extend(essential.iter().map(|&i| (i, i, 1.0)));
        CsrMatrix::from_triplets(d.total(), d.total(), &t)
    }

    /// Right-hand side of one backward-Euler step to `t` from `prev`.
    pub fn coupled_rhs(&self, data: &dyn ProblemData, t: f64, dt: f64, prev: &Fields) -> Vec<f64> {
        let sub = self.subdomain();
        let d = &sub.dofmap;
        let b = &sub.blocks;
        let fun = assemble_functionals(&self.disc.mesh, d, &sub.cells, data, t, &self.disc.line);
        let mut rhs = vec![0.0; d.total()];
        rhs[..d.n_sigma()].copy_from_slice(&fun.g_u);
        for (i, f) in fun.f.iter().enumerate() {
            rhs[d.u_offset() + i] = -f;
        }
        for (i, g) in fun.g_p.iter().enumerate() {
            rhs[d.z_offset() + i] = -g;
        }
        let storage = b.storage();
        {
            let p_rows = &mut rhs[d.p_offset()..];
            for c in 0..d.n_p() {
                p_rows[c] = dt * fun.g[c] + storage[c] * prev.p[c];
            }
            b.a_sp.mul_transpose_add(&prev.sigma, 1.0, p_rows);
        }
        for &(i, v) in &fun.traction {
            rhs[i] = v;
        }
        for &(i, v) in &fun.flux {
            rhs[d.z_offset() + i] = v;
        }
        rhs
    }

    /// Initial state: projected pressure, elasticity at `t = 0` and the
    /// matching Darcy velocity.
    pub fn initial_state(&self, data: &dyn ProblemData) -> Result<Fields> {
        let d = &self.subdomain().dofmap;
        let p = self.initial_pressure(data);
        let mech = self.elasticity(data, 0.0, &p)?;
        let z = self.darcy_velocity(data, 0.0, &p)?;
        let mut f = Fields::zeros(d);
        f.set_mechanics(d, &mech);
        f.z = z;
        f.p = p;
        Ok(f)
    }

    /// States `0..=n_steps` of the backward-Euler scheme.
    pub fn backward_euler(&self, data: &dyn ProblemData, dt: f64, n_steps: usize) -> Result<Vec<Fields>> {
        if !(dt > 0.0) {
            return Err(Error::config("dt", format!("time step must be positive, got {dt}")));
        }
        let d = &self.subdomain().dofmap;
        let m = self.coupled_matrix(dt);
        let lu = SparseLu::new(&m).map_err(lu_error("coupled"))?;
        let mut states = vec![self.initial_state(data)?];
        for n in 0..n_steps {
            let t = (n + 1) as f64 * dt;
            let mut x = self.coupled_rhs(data, t, dt, &states[n]);
            lu.solve(&mut x);
            states.push(Fields::from_full(d, &x));
        }
        Ok(states)
    }

    /// Restriction of global fields to one subdomain's numbering. Edge
    /// DOFs on interfaces are copied to both sides.
    pub fn restrict(&self, target: &Subdomain, global: &Fields) -> Fields {
        let g = &self.subdomain().dofmap;
        let d = &target.dofmap;
        let mut out = Fields::zeros(d);
        for (le, ge) in d.edges().iter().enumerate() {
            let gl = self.edge_index[ge];
            for k in 0..2 {
                for r in 0..2 {
                    out.sigma[d.sigma(r, 2 * le + k)] = global.sigma[g.sigma(r, 2 * gl + k)];
                }
                out.z[2 * le + k] = global.z[2 * gl + k];
            }
        }
        for (lc, gc) in d.cells().iter().enumerate() {
            let gl = self.cell_index[gc];
            for comp in 0..2 {
                out.u[2 * lc + comp] = global.u[2 * gl + comp];
            }
            out.gamma[lc] = global.gamma[gl];
            out.p[lc] = global.p[gl];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{Material, ZeroData};
    use crate::mesh::build_grid;

    #[test]
    fn zero_data_gives_zero_states() {
        let mesh = build_grid(3, 3, None).unwrap();
        let mat = MaterialField::Uniform(Material::isotropic(1.0, 1.0, 1.0, 1.0, 1.0));
        let g = GlobalProblem::new(&mesh, BoundaryConditions::all_dirichlet(), &mat).unwrap();
        let states = g.backward_euler(&ZeroData, 0.1, 2).unwrap();
        assert_eq!(states.len(), 3);
        for s in &states {
            assert!(s.to_full().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn restriction_to_the_whole_domain_is_identity() {
        let mesh = build_grid(2, 2, None).unwrap();
        let mat = MaterialField::Uniform(Material::isotropic(1.0, 1.0, 1.0, 1.0, 1.0));
        let g = GlobalProblem::new(&mesh, BoundaryConditions::all_dirichlet(), &mat).unwrap();
        let d = &g.subdomain().dofmap;
        let x: Vec<f64> = (0..d.total()).map(|i| i as f64).collect();
        let f = Fields::from_full(d, &x);
        assert_eq!(g.restrict(g.subdomain(), &f), f);
    }
}
