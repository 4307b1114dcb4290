//! Interface problems: Lagrange multiplier layout, Steklov-Poincaré
//! operators built from subdomain star solves, and field-of-values probes.
//!
//! Interface vectors hold, per interface edge, the two normal moments of
//! each multiplier component. The coupled layout is
//! `[u0 m0, u0 m1, u1 m0, u1 m1, p m0, p m1]`; the elasticity and Darcy
//! layouts keep the first four and the last two entries respectively.

use faer::Mat;
use rayon::prelude::*;

use crate::assembly::{assemble_rhs, ProblemData, RhsKind, ZeroData};
use crate::error::{Error, Result};
use crate::krylov::{arnoldi_projection, LinearOperator};
use crate::mesh::Mesh;
use crate::quadrature::QuadratureRule;
use crate::spaces::DofMap;
use crate::subdomain::{Subdomain, SubdomainOperator, Variant};

/// Which interface problem a multiplier belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Physics {
    Monolithic,
    Elasticity,
    Darcy,
}

impl Physics {
    pub fn per_edge(self) -> usize {
        match self {
            Physics::Monolithic => 6,
            Physics::Elasticity => 4,
            Physics::Darcy => 2,
        }
    }

    pub fn of(variant: Variant) -> Self {
        match variant {
            Variant::Biot { .. } => Physics::Monolithic,
            Variant::Elasticity => Physics::Elasticity,
            Variant::Darcy { .. } => Physics::Darcy,
        }
    }

    /// Star-norm weight of slot `j` within an edge: `dt` on the
    /// displacement-rate slots of the coupled problem, 1 elsewhere.
    pub fn weight(self, j: usize, dt: f64) -> f64 {
        match self {
            Physics::Monolithic if j < 4 => dt,
            _ => 1.0,
        }
    }
}

/// One interface unknown seen from a subdomain: where its data enters the
/// local right-hand side and how the matching trace is read back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    /// Index into the global interface vector.
    pub global: usize,
    /// Unknown index in the operator layout.
    pub index: usize,
    /// Right-hand-side coefficient multiplying the multiplier value.
    pub inject: f64,
    /// Coefficient turning the local solution entry into the residual
    /// contribution.
    pub extract: f64,
}

/// Interface slots of one subdomain for `variant`, ordered by interface
/// edge then slot.
pub fn slots(dofmap: &DofMap, variant: Variant) -> Vec<Slot> {
    let physics = Physics::of(variant);
    let per = physics.per_edge();
    let mut out = Vec::with_capacity(per * dofmap.interface_traces().len());
    for tr in dofmap.interface_traces() {
        let s = tr.sign;
        for j in 0..per {
            let k = j % 2;
            let dof = 2 * tr.local + k;
            let (index, inject, extract) = match variant {
                Variant::Biot { dt } if j < 4 => (dofmap.sigma(j / 2, dof), dt * s, s),
                Variant::Biot { .. } => (dofmap.z(dof), -s, -s),
                Variant::Elasticity => (dofmap.sigma(j / 2, dof), s, s),
                Variant::Darcy { .. } => (dof, -s, -s),
            };
            out.push(Slot {
                global: per * tr.interface + j,
                index,
                inject,
                extract,
            });
        }
    }
    out
}

/// Adds the interface data `lambda` to a local right-hand side.
pub fn inject(slots: &[Slot], lambda: &[f64], rhs: &mut [f64]) {
    for s in slots {
        rhs[s.index] += s.inject * lambda[s.global];
    }
}

/// Adds the trace contribution of a local solution to an interface vector.
pub fn extract_add(slots: &[Slot], solution: &[f64], scale: f64, out: &mut [f64]) {
    for s in slots {
        out[s.global] += scale * s.extract * solution[s.index];
    }
}

/// Sum over subdomains of the trace contributions, in subdomain order.
/// For converged solutions this is the jump across each interface edge.
pub fn trace_jumps(n: usize, slots: &[Vec<Slot>], solutions: &[Vec<f64>]) -> Result<Vec<f64>> {
    if slots.len() != solutions.len() {
        return Err(Error::DimensionMismatch {
            what: "subdomain solutions",
            expected: slots.len(),
            got: solutions.len(),
        });
    }
    let mut g = vec![0.0; n];
    for (s, x) in slots.iter().zip(solutions) {
        extract_add(s, x, 1.0, &mut g);
    }
    Ok(g)
}

/// Interface right-hand side `g = -Σ traces(bar)`.
pub fn interface_rhs(n: usize, slots: &[Vec<Slot>], bar_solutions: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut g = trace_jumps(n, slots, bar_solutions)?;
    for v in &mut g {
        *v = -*v;
    }
    Ok(g)
}

/// Per-subdomain action: either a dense local Steklov-Poincaré matrix or a
/// direct star solve.
enum LocalAction {
    Dense(Mat<f64>),
    Solve,
}

/// Interface operator `λ ↦ Σ_i traces(star_i(λ))`.
pub struct InterfaceOperator {
    physics: Physics,
    dim: usize,
    dt: f64,
    ops: Vec<SubdomainOperator>,
    slots: Vec<Vec<Slot>>,
    local: Vec<LocalAction>,
}

/// Number of right-hand sides per block when building local matrices.
const BLOCK: usize = 96;

fn dense_local(op: &SubdomainOperator, slots: &[Slot]) -> Mat<f64> {
    let m = slots.len();
    let n = op.dim();
    let mut s = Mat::<f64>::zeros(m, m);
    let mut start = 0;
    while start < m {
        let cols = BLOCK.min(m - start);
        let mut rhs = Mat::<f64>::zeros(n, cols);
        for c in 0..cols {
            let sl = slots[start + c];
            rhs[(sl.index, c)] = sl.inject;
        }
        op.lu().solve_mat(rhs.as_mut());
        for c in 0..cols {
            for (r, sl) in slots.iter().enumerate() {
                s[(r, start + c)] = sl.extract * rhs[(sl.index, c)];
            }
        }
        start += cols;
    }
    s
}

impl InterfaceOperator {
    fn build(
        ops: Vec<SubdomainOperator>,
        dofmaps: &[&DofMap],
        n_interface_edges: usize,
        assembled: bool,
    ) -> Result<Self> {
        let first = ops
            .first()
            .ok_or_else(|| Error::Degenerate("no subdomain operators".into()))?;
        let variant = first.variant();
        if ops.iter().any(|o| o.variant() != variant) || dofmaps.len() != ops.len() {
            return Err(Error::Degenerate(
                "interface operator needs one operator of the same variant per subdomain".into(),
            ));
        }
        let physics = Physics::of(variant);
        let dt = match variant {
            Variant::Biot { dt } | Variant::Darcy { dt } => dt,
            Variant::Elasticity => 1.0,
        };
        let slots: Vec<Vec<Slot>> = dofmaps.iter().map(|d| slots(d, variant)).collect();
        let local = if assembled {
            ops.par_iter()
                .zip(slots.par_iter())
                .map(|(op, s)| LocalAction::Dense(dense_local(op, s)))
                .collect()
        } else {
            ops.iter().map(|_| LocalAction::Solve).collect()
        };
        Ok(Self {
            physics,
            dim: physics.per_edge() * n_interface_edges,
            dt,
            ops,
            slots,
            local,
        })
    }

    /// Precomputes the dense local matrices from unit-slot star solves.
    pub fn assembled(
        ops: Vec<SubdomainOperator>,
        subs: &[Subdomain],
        n_interface_edges: usize,
    ) -> Result<Self> {
        let maps: Vec<&DofMap> = subs.iter().map(|s| &s.dofmap).collect();
        Self::build(ops, &maps, n_interface_edges, true)
    }

    /// Applies the operator with one star solve per subdomain per call.
    pub fn matrix_free(
        ops: Vec<SubdomainOperator>,
        subs: &[Subdomain],
        n_interface_edges: usize,
    ) -> Result<Self> {
        let maps: Vec<&DofMap> = subs.iter().map(|s| &s.dofmap).collect();
        Self::build(ops, &maps, n_interface_edges, false)
    }

    pub fn physics(&self) -> Physics {
        self.physics
    }

    pub fn slots(&self) -> &[Vec<Slot>] {
        &self.slots
    }

    pub fn ops(&self) -> &[SubdomainOperator] {
        &self.ops
    }

    /// Star-norm weights of every interface unknown.
    pub fn weights(&self) -> Vec<f64> {
        let per = self.physics.per_edge();
        (0..self.dim)
            .map(|i| self.physics.weight(i % per, self.dt))
            .collect()
    }

    /// Local star solution (in the operator layout) for interface data
    /// `lambda` on subdomain `i`.
    pub fn star_solution(&self, i: usize, lambda: &[f64]) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.ops[i].dim()];
        inject(&self.slots[i], lambda, &mut x);
        self.ops[i].solve(&mut x)?;
        Ok(x)
    }

    /// Dense matrix of the whole interface operator (small problems only).
    pub fn to_dense(&self) -> Result<Mat<f64>> {
        let n = self.dim;
        let mut a = Mat::<f64>::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply(&e)?;
            e[j] = 0.0;
            for i in 0..n {
                a[(i, j)] = col[i];
            }
        }
        Ok(a)
    }
}

impl LinearOperator for InterfaceOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        if lambda.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "interface vector",
                expected: self.dim,
                got: lambda.len(),
            });
        }
        let contributions: Vec<Vec<f64>> = (0..self.ops.len())
            .into_par_iter()
            .map(|i| -> Result<Vec<f64>> {
                let slots = &self.slots[i];
                match &self.local[i] {
                    LocalAction::Dense(s) => {
                        let x: Vec<f64> = slots.iter().map(|sl| lambda[sl.global]).collect();
                        let m = slots.len();
                        let mut y = vec![0.0; m];
                        for c in 0..m {
                            let xc = x[c];
                            if xc != 0.0 {
                                let col = s.col(c);
                                for r in 0..m {
                                    y[r] += col[r] * xc;
                                }
                            }
                        }
                        Ok(y)
                    }
                    LocalAction::Solve => {
                        let x = self.star_solution(i, lambda)?;
                        Ok(slots.iter().map(|sl| sl.extract * x[sl.index]).collect())
                    }
                }
            })
            .collect::<Result<_>>()?;
        // Ordered reduction keeps the result independent of scheduling.
        let mut out = vec![0.0; self.dim];
        for (slots, y) in self.slots.iter().zip(&contributions) {
            for (sl, v) in slots.iter().zip(y) {
                out[sl.global] += v;
            }
        }
        Ok(out)
    }
}

/// Star solution of the coupled system assembled through the generic
/// right-hand-side path; used to cross-check the slot bookkeeping.
pub fn coupled_star_via_rhs(
    op: &SubdomainOperator,
    sub: &Subdomain,
    mesh: &Mesh,
    line: &QuadratureRule,
    lambda: &[f64],
) -> Result<Vec<f64>> {
    let ctx = sub.context(mesh, line);
    let kind = match op.variant() {
        Variant::Biot { dt } => RhsKind::BiotStar { dt, lambda },
        Variant::Elasticity => RhsKind::ElasticityStar { lambda },
        Variant::Darcy { .. } => RhsKind::DarcyStar { lambda },
    };
    let data: &dyn ProblemData = &ZeroData;
    let mut x = assemble_rhs(&ctx, data, 0.0, kind)?;
    op.solve(&mut x)?;
    Ok(x)
}

/// Energy of a coupled star solution:
/// `(1/Δt)[|A^½(σ + αpI)|² + c0|p|² + Δt|K^-½ z|²]`.
pub fn star_energy(sub: &Subdomain, solution: &[f64], dt: f64) -> f64 {
    let d = &sub.dofmap;
    let b = &sub.blocks;
    let sigma = &solution[..d.n_sigma()];
    let z = &solution[d.z_offset()..d.p_offset()];
    let p = &solution[d.p_offset()..];
    let dot = crate::krylov::dot;
    let stress = dot(sigma, &b.a_ss.mul(sigma))
        + 2.0 * dot(sigma, &b.a_sp.mul(p))
        + p.iter().zip(&b.s_pp).map(|(v, s)| s * v * v).sum::<f64>();
    let storage = p.iter().zip(&b.m_p).map(|(v, m)| m * v * v).sum::<f64>();
    let flow = dot(z, &b.m_z.mul(z));
    (stress + storage + dt * flow) / dt
}

/// Extreme Rayleigh quotients `⟨Aλ, λ⟩ / ⟨λ, λ⟩_*` found on a Krylov
/// subspace of dimension `steps` of the weighted operator
/// `W^{-1/2} A W^{-1/2}`. With `steps` equal to the interface dimension
/// the values are the exact field-of-values bounds on the real line.
pub fn estimate_field_of_values(
    op: &InterfaceOperator,
    steps: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    use rand::{Rng, SeedableRng};
    let n = op.dim();
    if n == 0 {
        return Err(Error::Degenerate(
            "no interface unknowns: a single subdomain has an empty spectrum".into(),
        ));
    }
    if steps == 0 {
        return Err(Error::config("steps", "need at least one Krylov step"));
    }
    let inv_sqrt: Vec<f64> = op.weights().iter().map(|w| 1.0 / w.sqrt()).collect();
    struct Weighted<'b> {
        op: &'b InterfaceOperator,
        scale: &'b [f64],
    }
    impl LinearOperator for Weighted<'_> {
        fn dim(&self) -> usize {
            self.op.dim()
        }
        fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
            let y: Vec<f64> = x.iter().zip(self.scale).map(|(a, s)| a * s).collect();
            let mut ay = self.op.apply(&y)?;
            for (a, s) in ay.iter_mut().zip(self.scale) {
                *a *= s;
            }
            Ok(ay)
        }
    }
    let weighted = Weighted {
        op,
        scale: &inv_sqrt,
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (m, h) = arnoldi_projection(&weighted, &start, steps)?;
    let sym = Mat::<f64>::from_fn(m, m, |i, j| 0.5 * (h[i * m + j] + h[j * m + i]));
    let eig = sym
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::Degenerate(format!("eigenvalue solve failed: {e:?}")))?;
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// Rayleigh quotients `⟨Aλ, λ⟩ / ⟨λ, λ⟩_*` of random probes.
pub fn probe_rayleigh_quotients(
    op: &InterfaceOperator,
    n_probes: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let n = op.dim();
    if n == 0 {
        return Err(Error::Degenerate("no interface unknowns".into()));
    }
    let w = op.weights();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n_probes)
        .map(|_| {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ax = op.apply(&x)?;
            let num = crate::krylov::dot(&ax, &x);
            let den: f64 = x.iter().zip(&w).map(|(v, w)| w * v * v).sum();
            Ok(num / den)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{Material, MaterialField};
    use crate::krylov::{cg, dot, gmres};
    use crate::mesh::{build_grid, partition, BoundaryConditions, Decomposition};
    use crate::spaces::{build_dofmap, ReferenceBdm1};
    use crate::subdomain::factorize;
    use rand::{Rng, SeedableRng};

    struct Setup {
        mesh: Mesh,
        decomp: Decomposition,
        subs: Vec<Subdomain>,
    }

    fn setup(n: usize, px: usize, py: usize, c0: f64) -> Setup {
        let mesh = build_grid(n, n, None).unwrap();
        let decomp = partition(&mesh, px, py, BoundaryConditions::all_dirichlet()).unwrap();
        let rule = QuadratureRule::assembly();
        let r = ReferenceBdm1::new();
        let mat = MaterialField::Uniform(Material::isotropic(100.0, 100.0, 1.0, c0, 1.0));
        let subs = build_dofmap(&mesh, &decomp)
            .into_iter()
            .map(|m| Subdomain::new(&mesh, m, &mat, &rule, &r).unwrap())
            .collect();
        Setup { mesh, decomp, subs }
    }

    fn ops(s: &Setup, v: Variant) -> Vec<SubdomainOperator> {
        s.subs.iter().map(|x| factorize(x, v).unwrap()).collect()
    }

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn assembled_matches_matrix_free_and_rhs_path() {
        let s = setup(4, 2, 2, 1.0);
        let line = QuadratureRule::assembly();
        let ne = s.decomp.interface_edges().len();
        for v in [Variant::Biot { dt: 1e-2 }, Variant::Elasticity, Variant::Darcy { dt: 1e-2 }] {
            let a = InterfaceOperator::assembled(ops(&s, v), &s.subs, ne).unwrap();
            let b = InterfaceOperator::matrix_free(ops(&s, v), &s.subs, ne).unwrap();
            let l = random(a.dim(), 3);
            let ya = a.apply(&l).unwrap();
            let yb = b.apply(&l).unwrap();
            let scale = ya.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (x, y) in ya.iter().zip(&yb) {
                assert!((x - y).abs() <= 1e-10 * scale);
            }
            for i in 0..s.subs.len() {
                let direct = a.star_solution(i, &l).unwrap();
                let via = coupled_star_via_rhs(&a.ops()[i], &s.subs[i], &s.mesh, &line, &l).unwrap();
                assert_eq!(direct.len(), via.len());
                for (x, y) in direct.iter().zip(&via) {
                    assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
                }
            }
        }
    }

    #[test]
    fn zero_maps_to_zero_and_linear() {
        let s = setup(4, 2, 1, 1.0);
        let o = ops(&s, Variant::Biot { dt: 1e-3 });
        let a = InterfaceOperator::matrix_free(o, &s.subs, s.decomp.interface_edges().len()).unwrap();
        assert!(a.apply(&vec![0.0; a.dim()]).unwrap().iter().all(|&v| v == 0.0));
        let (l1, l2) = (random(a.dim(), 1), random(a.dim(), 2));
        let (ca, cb) = (0.7, -2.3);
        let comb: Vec<f64> = l1.iter().zip(&l2).map(|(x, y)| ca * x + cb * y).collect();
        let lhs = a.apply(&comb).unwrap();
        let (y1, y2) = (a.apply(&l1).unwrap(), a.apply(&l2).unwrap());
        let scale = lhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..lhs.len() {
            assert!((lhs[i] - ca * y1[i] - cb * y2[i]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn energy_identity_and_positivity() {
        for (px, py) in [(2, 1), (2, 2)] {
            let s = setup(4, px, py, 1.0);
            let dt = 1e-2;
            let o = ops(&s, Variant::Biot { dt });
            let a = InterfaceOperator::assembled(o, &s.subs, s.decomp.interface_edges().len()).unwrap();
            for seed in 0..5 {
                let l = random(a.dim(), seed);
                let q = dot(&a.apply(&l).unwrap(), &l);
                let e: f64 = (0..s.subs.len())
                    .map(|i| star_energy(&s.subs[i], &a.star_solution(i, &l).unwrap(), dt))
                    .sum();
                assert!(q > 0.0);
                assert!((q - e).abs() <= 1e-8 * e, "q = {q}, energy = {e}");
            }
        }
    }

    #[test]
    fn split_operators_are_symmetric_and_cg_matches_dense() {
        let s = setup(4, 2, 2, 1.0);
        let ne = s.decomp.interface_edges().len();
        for v in [Variant::Elasticity, Variant::Darcy { dt: 1e-2 }] {
            let o = ops(&s, v);
            let a = InterfaceOperator::assembled(o, &s.subs, ne).unwrap();
            let m = a.to_dense().unwrap();
            let n = a.dim();
            let mut asym = 0.0f64;
            let mut big = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
                    big = big.max(m[(i, j)].abs());
                }
            }
            assert!(asym <= 1e-10 * big, "{v:?}: asymmetry {asym}");
            let b = random(n, 9);
            let (x, rep) = cg(&a, &b, 1e-13, 500).unwrap();
            assert!(rep.converged);
            use faer::linalg::solvers::Solve;
            let xd = m.partial_piv_lu().solve(Mat::from_fn(n, 1, |i, _| b[i]));
            for i in 0..n {
                assert!((x[i] - xd[(i, 0)]).abs() <= 1e-10 * (1.0 + xd[(i, 0)].abs()));
            }
        }
    }

    #[test]
    fn gmres_on_monolithic_converges() {
        let s = setup(4, 2, 2, 1.0);
        let o = ops(&s, Variant::Biot { dt: 1e-3 });
        let a = InterfaceOperator::assembled(o, &s.subs, s.decomp.interface_edges().len()).unwrap();
        let b = random(a.dim(), 5);
        let w = a.weights();
        let (x, rep) = gmres(&a, &b, 1e-12, 500, Some(&w)).unwrap();
        assert!(rep.converged);
        let r: Vec<f64> = a.apply(&x).unwrap().iter().zip(&b).map(|(u, v)| u - v).collect();
        assert!(crate::krylov::norm(&r) <= 1e-11 * crate::krylov::norm(&b));
    }

    #[test]
    fn field_of_values_bounds_contain_probes() {
        let s = setup(4, 2, 2, 1.0);
        let o = ops(&s, Variant::Biot { dt: 1e-2 });
        let a = InterfaceOperator::assembled(o, &s.subs, s.decomp.interface_edges().len()).unwrap();
        let (lo, hi) = estimate_field_of_values(&a, a.dim(), 1).unwrap();
        assert!(lo > 0.0 && hi >= lo);
        for q in probe_rayleigh_quotients(&a, 50, 2).unwrap() {
            assert!(q >= lo * (1.0 - 1e-9) && q <= hi * (1.0 + 1e-9));
        }
    }

    #[test]
    fn single_subdomain_is_degenerate() {
        let s = setup(2, 1, 1, 1.0);
        let o = ops(&s, Variant::Biot { dt: 1e-2 });
        let a = InterfaceOperator::assembled(o, &s.subs, 0).unwrap();
        assert_eq!(a.dim(), 0);
        assert!(matches!(estimate_field_of_values(&a, 10, 0), Err(Error::Degenerate(_))));
        assert_eq!(interface_rhs(0, a.slots(), &[vec![0.0; a.ops()[0].dim()]]).unwrap(), Vec::<f64>::new());
    }
}
