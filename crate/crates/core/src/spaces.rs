//! Reference elements, the contravariant Piola map and per-subdomain degree
//! of freedom numbering for the five-field mixed spaces.
//!
//! BDM1 degrees of freedom on an edge are normal moments against
//! `psi_0 = 1` and `psi_1 = sqrt(3) (2s - 1)`, where `s` runs over `[0,1]`
//! from the edge's start vertex and the normal is the edge's positive
//! normal (see [`crate::mesh`]). On the physical edge the normal trace of
//! the basis function for moment `k` is `psi_k(s) / |e|`.

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;

use crate::error::{Error, Result};
use crate::mesh::{Decomposition, Mesh, Side, SideCondition};
use crate::quadrature::QuadratureRule;

/// Orthonormal edge polynomials on `[0,1]`.
#[inline]
pub fn edge_poly(k: usize, s: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => 3f64.sqrt() * (2.0 * s - 1.0),
        _ => unreachable!("edge moments are 0 and 1"),
    }
}

/// Families of reference bases used by the method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Bdm1Vector,
    Q0Scalar,
    Q0Vector,
    Q0Skew,
}

impl Family {
    pub fn dofs_per_cell(self) -> usize {
        match self {
            Family::Bdm1Vector => 8,
            Family::Q0Scalar | Family::Q0Skew => 1,
            Family::Q0Vector => 2,
        }
    }

    pub fn dofs_per_edge(self) -> usize {
        match self {
            Family::Bdm1Vector => 2,
            _ => 0,
        }
    }
}

/// Local edges of the reference square: bottom, right, top, left. Each
/// entry is (start point, direction, reference normal).
const REF_EDGES: [([f64; 2], [f64; 2], [f64; 2]); 4] = [
    ([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]),
    ([1.0, 0.0], [0.0, 1.0], [1.0, 0.0]),
    ([0.0, 1.0], [1.0, 0.0], [0.0, 1.0]),
    ([0.0, 0.0], [0.0, 1.0], [1.0, 0.0]),
];

/// Reference point on local edge `edge` at parameter `s`.
pub fn reference_edge_point(edge: usize, s: f64) -> [f64; 2] {
    let (a, d, _) = REF_EDGES[edge];
    [a[0] + s * d[0], a[1] + s * d[1]]
}

/// BDM1 basis on `[0,1]^2`: `P1^2 + span{(x^2, -2xy), (2xy, -y^2)}`.
#[derive(Debug, Clone)]
pub struct ReferenceBdm1 {
    /// `coeffs[i][j]`: weight of spanning field `j` in basis function `i`.
    coeffs: [[f64; 8]; 8],
}

fn spanning_field(j: usize, x: f64, y: f64) -> [f64; 2] {
    match j {
        0 => [1.0, 0.0],
        1 => [x, 0.0],
        2 => [y, 0.0],
        3 => [0.0, 1.0],
        4 => [0.0, x],
        5 => [0.0, y],
        6 => [x * x, -2.0 * x * y],
        7 => [2.0 * x * y, -y * y],
        _ => unreachable!(),
    }
}

/// Divergence of spanning field `j`; the two quadratic fields are
/// divergence free.
fn spanning_div(j: usize) -> f64 {
    match j {
        1 | 5 => 1.0,
        _ => 0.0,
    }
}

impl Default for ReferenceBdm1 {
    fn default() -> Self {
        Self::new()
    }
}

impl ReferenceBdm1 {
    pub fn new() -> Self {
        let (sp, sw) = crate::quadrature::gauss_legendre_unit(3);
        // dofs[k][j] = DOF_k(spanning field j)
        let mut dofs = Mat::<f64>::zeros(8, 8);
        for e in 0..4 {
            let (_, _, nu) = REF_EDGES[e];
            for k in 0..2 {
                for j in 0..8 {
                    let mut v = 0.0;
                    for (&s, &w) in sp.iter().zip(&sw) {
                        let [x, y] = reference_edge_point(e, s);
                        let f = spanning_field(j, x, y);
                        v += w * (f[0] * nu[0] + f[1] * nu[1]) * edge_poly(k, s);
                    }
                    dofs[(2 * e + k, j)] = v;
                }
            }
        }
        // Basis i = sum_j C[i][j] m_j with DOF_k(basis i) = delta_ik,
        // i.e. C = (dofs^T)^{-1}.
        let inv = dofs.transpose().to_owned().partial_piv_lu().inverse();
        let coeffs = std::array::from_fn(|i| std::array::from_fn(|j| inv[(i, j)]));
        Self { coeffs }
    }

    /// Values of all eight basis functions at a reference point.
    pub fn values(&self, p: [f64; 2]) -> [[f64; 2]; 8] {
        let m: [[f64; 2]; 8] = std::array::from_fn(|j| spanning_field(j, p[0], p[1]));
        std::array::from_fn(|i| {
            let mut v = [0.0; 2];
            for j in 0..8 {
                v[0] += self.coeffs[i][j] * m[j][0];
                v[1] += self.coeffs[i][j] * m[j][1];
            }
            v
        })
    }

    /// Reference divergences (constant on the cell).
    pub fn divergences(&self) -> [f64; 8] {
        std::array::from_fn(|i| {
            (0..8)
                .map(|j| self.coeffs[i][j] * spanning_div(j))
                .sum()
        })
    }
}

/// Geometry of a bilinear quadrilateral given counter-clockwise vertices.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub cell: usize,
    pub vertices: [[f64; 2]; 4],
}

impl CellGeometry {
    pub fn new(mesh: &Mesh, cell: usize) -> Self {
        Self {
            cell,
            vertices: mesh.cell_coords(cell),
        }
    }

    pub fn map(&self, p: [f64; 2]) -> [f64; 2] {
        let [xi, eta] = p;
        let w = [
            (1.0 - xi) * (1.0 - eta),
            xi * (1.0 - eta),
            xi * eta,
            (1.0 - xi) * eta,
        ];
        let mut x = [0.0; 2];
        for k in 0..4 {
            x[0] += w[k] * self.vertices[k][0];
            x[1] += w[k] * self.vertices[k][1];
        }
        x
    }

    /// Jacobian `J[i][j] = d x_i / d xi_j` and its determinant.
    pub fn jacobian(&self, p: [f64; 2]) -> ([[f64; 2]; 2], f64) {
        let [xi, eta] = p;
        let v = &self.vertices;
        let dxi = [-(1.0 - eta), 1.0 - eta, eta, -eta];
        let deta = [-(1.0 - xi), -xi, xi, 1.0 - xi];
        let mut j = [[0.0; 2]; 2];
        for k in 0..4 {
            for d in 0..2 {
                j[d][0] += dxi[k] * v[k][d];
                j[d][1] += deta[k] * v[k][d];
            }
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        (j, det)
    }
}

/// Physical H(div) basis values at one point.
#[derive(Debug, Clone, Copy)]
pub struct PhysicalBasis {
    pub values: [[f64; 2]; 8],
    pub divergences: [f64; 8],
    pub det: f64,
}

/// Contravariant Piola transform of reference values at reference point `p`.
pub fn map_hdiv_basis(
    geometry: &CellGeometry,
    p: [f64; 2],
    values: &[[f64; 2]; 8],
    divergences: &[f64; 8],
) -> Result<PhysicalBasis> {
    let (j, det) = geometry.jacobian(p);
    if det <= 0.0 {
        return Err(Error::NonPositiveJacobian {
            cell: geometry.cell,
            det,
        });
    }
    let values = values.map(|v| {
        [
            (j[0][0] * v[0] + j[0][1] * v[1]) / det,
            (j[1][0] * v[0] + j[1][1] * v[1]) / det,
        ]
    });
    let divergences = divergences.map(|d| d / det);
    Ok(PhysicalBasis {
        values,
        divergences,
        det,
    })
}

/// Quadrature data for one cell: physical points, `weight * det J`, and
/// the mapped BDM1 basis.
#[derive(Debug, Clone)]
pub struct CellValues {
    pub points: Vec<[f64; 2]>,
    pub jxw: Vec<f64>,
    pub basis: Vec<[[f64; 2]; 8]>,
    pub divergences: Vec<[f64; 8]>,
    pub area: f64,
}

impl CellValues {
    pub fn new(
        mesh: &Mesh,
        cell: usize,
        rule: &QuadratureRule,
        reference: &ReferenceBdm1,
    ) -> Result<Self> {
        let geom = CellGeometry::new(mesh, cell);
        let rdiv = reference.divergences();
        let n = rule.points().len();
        let mut out = CellValues {
            points: Vec::with_capacity(n),
            jxw: Vec::with_capacity(n),
            basis: Vec::with_capacity(n),
            divergences: Vec::with_capacity(n),
            area: 0.0,
        };
        for (p, w) in rule.iter() {
            let phys = map_hdiv_basis(&geom, p, &reference.values(p), &rdiv)?;
            out.points.push(geom.map(p));
            out.jxw.push(w * phys.det);
            out.basis.push(phys.values);
            out.divergences.push(phys.divergences);
            out.area += w * phys.det;
        }
        Ok(out)
    }
}

/// A boundary edge of a subdomain with its tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub local: usize,
    pub global: usize,
    pub side: Side,
    pub condition: SideCondition,
}

/// An interface edge seen from one subdomain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceTrace {
    pub local: usize,
    /// Position in the decomposition's interface edge list.
    pub interface: usize,
    /// `+1` if the positive edge normal is outward for this subdomain.
    pub sign: f64,
}

/// Degree of freedom numbering on one subdomain.
///
/// Unknowns are ordered stress row 0, stress row 1, displacement
/// (two components per cell), rotation, velocity, pressure. BDM1 fields
/// use local DOF `2 * local_edge + moment`.
#[derive(Debug, Clone)]
pub struct DofMap {
    subdomain: usize,
    cx: usize,
    cy: usize,
    cells: Vec<usize>,
    edges: Vec<usize>,
    boundary: Vec<BoundaryEdge>,
    interface: Vec<InterfaceTrace>,
}

impl DofMap {
    pub fn subdomain(&self) -> usize {
        self.subdomain
    }

    /// Global cell indices in local order.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Global edge index of each local edge.
    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Dimension of one BDM1 field.
    pub fn n_bdm(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn n_sigma(&self) -> usize {
        2 * self.n_bdm()
    }

    pub fn n_u(&self) -> usize {
        2 * self.n_cells()
    }

    pub fn n_gamma(&self) -> usize {
        self.n_cells()
    }

    pub fn n_z(&self) -> usize {
        self.n_bdm()
    }

    pub fn n_p(&self) -> usize {
        self.n_cells()
    }

    pub fn u_offset(&self) -> usize {
        self.n_sigma()
    }

    pub fn gamma_offset(&self) -> usize {
        self.u_offset() + self.n_u()
    }

    pub fn z_offset(&self) -> usize {
        self.gamma_offset() + self.n_gamma()
    }

    pub fn p_offset(&self) -> usize {
        self.z_offset() + self.n_z()
    }

    pub fn total(&self) -> usize {
        self.p_offset() + self.n_p()
    }

    /// Number of mechanics unknowns (stress, displacement, rotation).
    pub fn n_mechanics(&self) -> usize {
        self.z_offset()
    }

    /// Number of flow unknowns (velocity, pressure).
    pub fn n_flow(&self) -> usize {
        self.n_z() + self.n_p()
    }

    /// Index of stress row `row`, BDM1 DOF `dof`.
    pub fn sigma(&self, row: usize, dof: usize) -> usize {
        row * self.n_bdm() + dof
    }

    pub fn u(&self, cell: usize, component: usize) -> usize {
        self.u_offset() + 2 * cell + component
    }

    pub fn gamma(&self, cell: usize) -> usize {
        self.gamma_offset() + cell
    }

    pub fn z(&self, dof: usize) -> usize {
        self.z_offset() + dof
    }

    pub fn p(&self, cell: usize) -> usize {
        self.p_offset() + cell
    }

    /// Local edges of local cell `c` in order bottom, right, top, left.
    pub fn cell_edges(&self, c: usize) -> [usize; 4] {
        let (i, j) = (c % self.cx, c / self.cx);
        let h = |i: usize, j: usize| j * self.cx + i;
        let nh = self.cx * (self.cy + 1);
        let v = |i: usize, j: usize| nh + j * (self.cx + 1) + i;
        [h(i, j), v(i + 1, j), h(i, j + 1), v(i, j)]
    }

    /// Local BDM1 DOFs of local cell `c` in reference-basis order.
    pub fn cell_bdm_dofs(&self, c: usize) -> [usize; 8] {
        let e = self.cell_edges(c);
        std::array::from_fn(|i| 2 * e[i / 2] + i % 2)
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn interface_traces(&self) -> &[InterfaceTrace] {
        &self.interface
    }

    /// Stress DOFs with prescribed normal traction (traction sides).
    pub fn essential_sigma(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for b in &self.boundary {
            if b.condition.mechanics == crate::mesh::MechanicsBc::Traction {
                for row in 0..2 {
                    for k in 0..2 {
                        out.push(self.sigma(row, 2 * b.local + k));
                    }
                }
            }
        }
        out
    }

    /// Velocity DOFs with prescribed normal flux (no-flow sides).
    pub fn essential_z(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for b in &self.boundary {
            if b.condition.flow == crate::mesh::FlowBc::Flux {
                for k in 0..2 {
                    out.push(self.z(2 * b.local + k));
                }
            }
        }
        out
    }
}

/// Builds the DOF map of every subdomain.
pub fn build_dofmap(mesh: &Mesh, decomposition: &Decomposition) -> Vec<DofMap> {
    let (cx, cy) = decomposition.block();
    let mut iface_lookup = std::collections::HashMap::new();
    for (k, ie) in decomposition.interface_edges().iter().enumerate() {
        iface_lookup.insert(ie.edge, (k, ie.lower));
    }
    (0..decomposition.n_subdomains())
        .map(|sub| {
            let (i0, j0) = decomposition.origin(sub);
            let cells = decomposition.cells_of(mesh, sub);
            let mut edges = Vec::with_capacity(cx * (cy + 1) + cy * (cx + 1));
            for j in 0..=cy {
                for i in 0..cx {
                    edges.push(mesh.horizontal_edge(i0 + i, j0 + j));
                }
            }
            for j in 0..cy {
                for i in 0..=cx {
                    edges.push(mesh.vertical_edge(i0 + i, j0 + j));
                }
            }
            let mut boundary = Vec::new();
            let mut interface = Vec::new();
            for (local, &global) in edges.iter().enumerate() {
                if let Some((side, condition)) = decomposition.boundary_tag(mesh, global) {
                    boundary.push(BoundaryEdge {
                        local,
                        global,
                        side,
                        condition,
                    });
                } else if let Some(&(k, lower)) = iface_lookup.get(&global) {
                    interface.push(InterfaceTrace {
                        local,
                        interface: k,
                        sign: if lower == sub { 1.0 } else { -1.0 },
                    });
                }
            }
            interface.sort_by_key(|t| t.interface);
            DofMap {
                subdomain: sub,
                cx,
                cy,
                cells,
                edges,
                boundary,
                interface,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_grid, partition, BoundaryConditions, Perturbation};

    fn line_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
        crate::quadrature::gauss_legendre_unit(n)
    }

    #[test]
    fn reference_basis_is_dual_to_edge_moments() {
        let r = ReferenceBdm1::new();
        let (sp, sw) = line_rule(4);
        for e in 0..4 {
            let nu = REF_EDGES[e].2;
            for k in 0..2 {
                for i in 0..8 {
                    let mut m = 0.0;
                    for (&s, &w) in sp.iter().zip(&sw) {
                        let v = r.values(reference_edge_point(e, s))[i];
                        m += w * (v[0] * nu[0] + v[1] * nu[1]) * edge_poly(k, s);
                    }
                    let expect = if i == 2 * e + k { 1.0 } else { 0.0 };
                    assert!((m - expect).abs() < 1e-13, "edge {e} moment {k} basis {i}: {m}");
                }
            }
        }
    }

    #[test]
    fn identity_cell_preserves_reference_values() {
        let mesh = build_grid(1, 1, None).unwrap();
        let g = CellGeometry::new(&mesh, 0);
        let r = ReferenceBdm1::new();
        let p = [0.3, 0.7];
        let phys = map_hdiv_basis(&g, p, &r.values(p), &r.divergences()).unwrap();
        assert!((phys.det - 1.0).abs() < 1e-15);
        for i in 0..8 {
            assert_eq!(phys.values[i], r.values(p)[i]);
            assert_eq!(phys.divergences[i], r.divergences()[i]);
        }
    }

    #[test]
    fn uniform_cell_scales_divergence_by_inverse_area() {
        let mesh = build_grid(4, 4, None).unwrap();
        let g = CellGeometry::new(&mesh, 5);
        let r = ReferenceBdm1::new();
        let p = [0.5, 0.5];
        let phys = map_hdiv_basis(&g, p, &r.values(p), &r.divergences()).unwrap();
        let h2 = 1.0 / 16.0;
        assert!((phys.det - h2).abs() < 1e-15);
        for i in 0..8 {
            assert!((phys.divergences[i] - r.divergences()[i] / h2).abs() < 1e-12);
        }
    }

    #[test]
    fn non_positive_jacobian_names_cell() {
        let g = CellGeometry {
            cell: 3,
            vertices: [[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]],
        };
        let r = ReferenceBdm1::new();
        let p = [0.5, 0.5];
        match map_hdiv_basis(&g, p, &r.values(p), &r.divergences()) {
            Err(Error::NonPositiveJacobian { cell, .. }) => assert_eq!(cell, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    /// Edge flux moments of the mapped basis on a perturbed quadrilateral,
    /// computed by direct physical line integration.
    #[test]
    fn perturbed_cell_edge_moments_match_dofs() {
        let mut spec = Perturbation::new(0.25, 11);
        spec.layout = (1, 1);
        let mesh = build_grid(4, 4, Some(&spec)).unwrap();
        let r = ReferenceBdm1::new();
        let rdiv = r.divergences();
        let (sp, sw) = line_rule(6);
        for cell in 0..mesh.n_cells() {
            let g = CellGeometry::new(&mesh, cell);
            let edges = mesh.cell_edges(cell);
            for (le, &e) in edges.iter().enumerate() {
                let n = mesh.edge_normal(e);
                let len = mesh.edge_length(e);
                for i in 0..8 {
                    for k in 0..2 {
                        let mut m = 0.0;
                        for (&s, &w) in sp.iter().zip(&sw) {
                            let p = reference_edge_point(le, s);
                            let phys = map_hdiv_basis(&g, p, &r.values(p), &rdiv).unwrap();
                            let v = phys.values[i];
                            m += w * len * (v[0] * n[0] + v[1] * n[1]) * edge_poly(k, s);
                        }
                        let expect = if i == 2 * le + k { 1.0 } else { 0.0 };
                        assert!((m - expect).abs() < 1e-12, "cell {cell} edge {le}: {m}");
                    }
                }
            }
        }
    }

    #[test]
    fn divergence_theorem_per_cell() {
        let mut spec = Perturbation::new(0.2, 5);
        spec.layout = (1, 1);
        let mesh = build_grid(3, 3, Some(&spec)).unwrap();
        let r = ReferenceBdm1::new();
        let rule = QuadratureRule::assembly();
        let (sp, sw) = line_rule(5);
        for cell in 0..mesh.n_cells() {
            let cv = CellValues::new(&mesh, cell, &rule, &r).unwrap();
            let g = CellGeometry::new(&mesh, cell);
            let edges = mesh.cell_edges(cell);
            let centroid = mesh.cell_centroid(cell);
            for i in 0..8 {
                let vol: f64 = (0..cv.jxw.len()).map(|q| cv.jxw[q] * cv.divergences[q][i]).sum();
                let mut flux = 0.0;
                for (le, &e) in edges.iter().enumerate() {
                    let n = mesh.edge_normal(e);
                    let mid = {
                        let [a, b] = mesh.edge_coords(e);
                        [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]
                    };
                    let outward = if (mid[0] - centroid[0]) * n[0] + (mid[1] - centroid[1]) * n[1] > 0.0 {
                        1.0
                    } else {
                        -1.0
                    };
                    for (&s, &w) in sp.iter().zip(&sw) {
                        let p = reference_edge_point(le, s);
                        let phys = map_hdiv_basis(&g, p, &r.values(p), &r.divergences()).unwrap();
                        let v = phys.values[i];
                        flux += outward * w * mesh.edge_length(e) * (v[0] * n[0] + v[1] * n[1]);
                    }
                }
                assert!((vol - flux).abs() < 1e-12, "cell {cell} basis {i}: {vol} vs {flux}");
            }
        }
    }

    #[test]
    fn dofmap_counts() {
        let bc = BoundaryConditions::all_dirichlet();
        let mesh = build_grid(1, 1, None).unwrap();
        let d = partition(&mesh, 1, 1, bc).unwrap();
        let maps = build_dofmap(&mesh, &d);
        let m = &maps[0];
        assert_eq!(
            (m.n_sigma(), m.n_u(), m.n_gamma(), m.n_z(), m.n_p()),
            (16, 2, 1, 8, 1)
        );
        assert_eq!(m.total(), 28);

        let mesh = build_grid(4, 4, None).unwrap();
        let d = partition(&mesh, 2, 2, bc).unwrap();
        for m in build_dofmap(&mesh, &d) {
            assert_eq!(m.n_z(), 24);
            assert_eq!(m.n_gamma(), m.n_cells());
            assert_eq!(m.interface_traces().len(), 4);
            assert_eq!(m.boundary_edges().len(), 4);
        }
    }

    #[test]
    fn interface_signs_are_opposite() {
        let bc = BoundaryConditions::all_dirichlet();
        let mesh = build_grid(4, 4, None).unwrap();
        let d = partition(&mesh, 2, 2, bc).unwrap();
        let maps = build_dofmap(&mesh, &d);
        let mut total = vec![0.0; d.interface_edges().len()];
        let mut count = vec![0; d.interface_edges().len()];
        for m in &maps {
            for t in m.interface_traces() {
                assert_eq!(m.edges()[t.local], d.interface_edges()[t.interface].edge);
                total[t.interface] += t.sign;
                count[t.interface] += 1;
            }
        }
        assert!(total.iter().all(|&s| s == 0.0));
        assert!(count.iter().all(|&c| c == 2));
    }

    #[test]
    fn cell_dofs_follow_global_edges() {
        let bc = BoundaryConditions::all_dirichlet();
        let mesh = build_grid(6, 4, None).unwrap();
        let d = partition(&mesh, 3, 2, bc).unwrap();
        for m in build_dofmap(&mesh, &d) {
            for (lc, &gc) in m.cells().iter().enumerate() {
                let global = mesh.cell_edges(gc);
                let local = m.cell_edges(lc);
                for k in 0..4 {
                    assert_eq!(m.edges()[local[k]], global[k]);
                }
            }
        }
    }
}
