//! Logically structured quadrilateral meshes of the unit square and their
//! partition into rectangular subdomains.
//!
//! Vertices are numbered `j * (nx + 1) + i`, cells `j * nx + i` with
//! counter-clockwise vertices `(i,j), (i+1,j), (i+1,j+1), (i,j+1)`.
//! Horizontal edges come first (`j * nx + i`, `j` in `0..=ny`), then vertical
//! edges (`nx * (ny + 1) + j * (nx + 1) + i`).
//!
//! Every edge carries a fixed "positive" unit normal: the left normal of a
//! horizontal edge traversed in `+x`, the right normal of a vertical edge
//! traversed in `+y`. On interior edges this points from the lower-indexed
//! cell to the higher-indexed one, and across subdomain interfaces from the
//! lower-indexed subdomain to the higher-indexed one.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sides of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    /// Outward unit normal of the side.
    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            Side::Left => [-1.0, 0.0],
            Side::Right => [1.0, 0.0],
            Side::Bottom => [0.0, -1.0],
            Side::Top => [0.0, 1.0],
        }
    }

    /// `+1` when the positive edge normal on this side points outward.
    pub fn positive_is_outward(self) -> f64 {
        match self {
            Side::Left | Side::Bottom => -1.0,
            Side::Right | Side::Top => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeDirection {
    Horizontal,
    Vertical,
}

/// Random interior-vertex perturbation.
///
/// The displacement is drawn on a `base_nx x base_ny` grid and carried to the
/// requested resolution by bilinear refinement of each base cell, so a
/// perturbed coarse grid and its uniform refinements describe the same
/// geometry. With the default base equal to the target resolution every
/// interior vertex is displaced independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Maximum displacement per coordinate as a fraction of the base spacing.
    pub fraction: f64,
    pub seed: u64,
    /// Resolution of the grid on which vertices are displaced.
    #[serde(default)]
    pub base: Option<(usize, usize)>,
    /// Subdomain layout `(px, py)` that must stay matching; interface
    /// vertices of this layout are never moved.
    #[serde(default = "default_layout")]
    pub layout: (usize, usize),
    /// Subdomains (indexed `sy * px + sx`) whose interior vertices move.
    /// `None` selects all subdomains.
    #[serde(default)]
    pub subdomains: Option<Vec<usize>>,
}

fn default_layout() -> (usize, usize) {
    (1, 1)
}

impl Perturbation {
    pub const DEFAULT_FRACTION: f64 = 0.25;
    pub const DEFAULT_SEED: u64 = 7;

    pub fn new(fraction: f64, seed: u64) -> Self {
        Self {
            fraction,
            seed,
            base: None,
            layout: (1, 1),
            subdomains: None,
        }
    }
}

/// Structured quadrilateral mesh of `(0,1)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nx: usize,
    ny: usize,
    vertices: Vec<[f64; 2]>,
}

impl Mesh {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Nominal mesh size `1/nx`.
    pub fn h(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_horizontal_edges(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    pub fn n_edges(&self) -> usize {
        self.n_horizontal_edges() + self.ny * (self.nx + 1)
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_ij(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    pub fn cell_vertices(&self, cell: usize) -> [usize; 4] {
        let (i, j) = self.cell_ij(cell);
        [
            self.vertex(i, j),
            self.vertex(i + 1, j),
            self.vertex(i + 1, j + 1),
            self.vertex(i, j + 1),
        ]
    }

    pub fn cell_coords(&self, cell: usize) -> [[f64; 2]; 4] {
        self.cell_vertices(cell).map(|v| self.vertices[v])
    }

    pub fn horizontal_edge(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn vertical_edge(&self, i: usize, j: usize) -> usize {
        self.n_horizontal_edges() + j * (self.nx + 1) + i
    }

    /// Edges of a cell in local order bottom, right, top, left.
    pub fn cell_edges(&self, cell: usize) -> [usize; 4] {
        let (i, j) = self.cell_ij(cell);
        [
            self.horizontal_edge(i, j),
            self.vertical_edge(i + 1, j),
            self.horizontal_edge(i, j + 1),
            self.vertical_edge(i, j),
        ]
    }

    pub fn edge_direction(&self, edge: usize) -> EdgeDirection {
        if edge < self.n_horizontal_edges() {
            EdgeDirection::Horizontal
        } else {
            EdgeDirection::Vertical
        }
    }

    /// Start and end vertex; edges run in `+x` or `+y` index direction.
    pub fn edge_vertices(&self, edge: usize) -> [usize; 2] {
        match self.edge_direction(edge) {
            EdgeDirection::Horizontal => {
                let (i, j) = (edge % self.nx, edge / self.nx);
                [self.vertex(i, j), self.vertex(i + 1, j)]
            }
            EdgeDirection::Vertical => {
                let k = edge - self.n_horizontal_edges();
                let (i, j) = (k % (self.nx + 1), k / (self.nx + 1));
                [self.vertex(i, j), self.vertex(i, j + 1)]
            }
        }
    }

    pub fn edge_coords(&self, edge: usize) -> [[f64; 2]; 2] {
        self.edge_vertices(edge).map(|v| self.vertices[v])
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        let [a, b] = self.edge_coords(edge);
        (b[0] - a[0]).hypot(b[1] - a[1])
    }

    /// Positive unit normal (see module docs).
    pub fn edge_normal(&self, edge: usize) -> [f64; 2] {
        let [a, b] = self.edge_coords(edge);
        let (tx, ty) = (b[0] - a[0], b[1] - a[1]);
        let len = tx.hypot(ty);
        match self.edge_direction(edge) {
            EdgeDirection::Horizontal => [-ty / len, tx / len],
            EdgeDirection::Vertical => [ty / len, -tx / len],
        }
    }

    /// Adjacent cells `[below/left, above/right]`; `None` outside the domain.
    pub fn edge_cells(&self, edge: usize) -> [Option<usize>; 2] {
        match self.edge_direction(edge) {
            EdgeDirection::Horizontal => {
                let (i, j) = (edge % self.nx, edge / self.nx);
                [
                    (j > 0).then(|| self.cell(i, j - 1)),
                    (j < self.ny).then(|| self.cell(i, j)),
                ]
            }
            EdgeDirection::Vertical => {
                let k = edge - self.n_horizontal_edges();
                let (i, j) = (k % (self.nx + 1), k / (self.nx + 1));
                [
                    (i > 0).then(|| self.cell(i - 1, j)),
                    (i < self.nx).then(|| self.cell(i, j)),
                ]
            }
        }
    }

    /// Side of the unit square a boundary edge lies on.
    pub fn boundary_side(&self, edge: usize) -> Option<Side> {
        match self.edge_direction(edge) {
            EdgeDirection::Horizontal => {
                let j = edge / self.nx;
                if j == 0 {
                    Some(Side::Bottom)
                } else if j == self.ny {
                    Some(Side::Top)
                } else {
                    None
                }
            }
            EdgeDirection::Vertical => {
                let i = (edge - self.n_horizontal_edges()) % (self.nx + 1);
                if i == 0 {
                    Some(Side::Left)
                } else if i == self.nx {
                    Some(Side::Right)
                } else {
                    None
                }
            }
        }
    }

    /// Jacobian determinants of the bilinear cell map at the four corners.
    /// The determinant is affine in each reference coordinate, so positivity
    /// at the corners implies positivity on the whole cell.
    pub fn corner_jacobians(&self, cell: usize) -> [f64; 4] {
        let x = self.cell_coords(cell);
        let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
            (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
        };
        [
            cross(x[0], x[1], x[3]),
            cross(x[1], x[2], x[0]),
            cross(x[2], x[3], x[1]),
            cross(x[3], x[0], x[2]),
        ]
    }

    /// Area of a cell (shoelace formula).
    pub fn cell_area(&self, cell: usize) -> f64 {
        let x = self.cell_coords(cell);
        let mut a = 0.0;
        for k in 0..4 {
            let p = x[k];
            let q = x[(k + 1) % 4];
            a += p[0] * q[1] - q[0] * p[1];
        }
        0.5 * a
    }

    pub fn cell_centroid(&self, cell: usize) -> [f64; 2] {
        let x = self.cell_coords(cell);
        [
            0.25 * (x[0][0] + x[1][0] + x[2][0] + x[3][0]),
            0.25 * (x[0][1] + x[1][1] + x[2][1] + x[3][1]),
        ]
    }
}

/// Builds an `nx x ny` mesh of the unit square, optionally perturbed.
pub fn build_grid(nx: usize, ny: usize, perturbation: Option<&Perturbation>) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidMesh(format!(
            "cell counts must be positive, got {nx} x {ny}"
        )));
    }
    let uniform = |nx: usize, ny: usize| {
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([i as f64 / nx as f64, j as f64 / ny as f64]);
            }
        }
        Mesh { nx, ny, vertices }
    };

    let Some(spec) = perturbation.filter(|p| p.fraction > 0.0) else {
        return Ok(uniform(nx, ny));
    };
    if !(0.0..=0.3).contains(&spec.fraction) {
        return Err(Error::InvalidMesh(format!(
            "perturbation fraction {} outside [0, 0.3]",
            spec.fraction
        )));
    }
    let (bnx, bny) = spec.base.unwrap_or((nx, ny));
    let (px, py) = spec.layout;
    if bnx == 0 || bny == 0 || nx % bnx != 0 || ny % bny != 0 {
        return Err(Error::InvalidMesh(format!(
            "perturbation base {bnx} x {bny} must divide {nx} x {ny}"
        )));
    }
    if px == 0 || py == 0 || bnx % px != 0 || bny % py != 0 {
        return Err(Error::InvalidMesh(format!(
            "subdomain layout {px} x {py} must divide the perturbation base {bnx} x {bny}"
        )));
    }
    let selected: Option<BTreeSet<usize>> = spec
        .subdomains
        .as_ref()
        .map(|s| s.iter().copied().collect());

    let mut base = uniform(bnx, bny);
    let (sx, sy) = (bnx / px, bny / py);
    let hx = 1.0 / bnx as f64;
    let hy = 1.0 / bny as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for j in 0..=bny {
        for i in 0..=bnx {
            // Draw for every vertex so the sequence does not depend on the
            // selection.
            let dx: f64 = rng.gen_range(-1.0..=1.0);
            let dy: f64 = rng.gen_range(-1.0..=1.0);
            if i % sx == 0 || j % sy == 0 {
                continue;
            }
            let sub = (j / sy) * px + i / sx;
            if selected.as_ref().is_some_and(|s| !s.contains(&sub)) {
                continue;
            }
            let v = base.vertex(i, j);
            base.vertices[v][0] += spec.fraction * hx * dx;
            base.vertices[v][1] += spec.fraction * hy * dy;
        }
    }

    let (rx, ry) = (nx / bnx, ny / bny);
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let bi = (i / rx).min(bnx - 1);
            let bj = (j / ry).min(bny - 1);
            let xi = (i - bi * rx) as f64 / rx as f64;
            let eta = (j - bj * ry) as f64 / ry as f64;
            let c = base.cell_coords(base.cell(bi, bj));
            let w = [
                (1.0 - xi) * (1.0 - eta),
                xi * (1.0 - eta),
                xi * eta,
                (1.0 - xi) * eta,
            ];
            let mut p = [0.0; 2];
            for k in 0..4 {
                p[0] += w[k] * c[k][0];
                p[1] += w[k] * c[k][1];
            }
            vertices.push(p);
        }
    }
    // Boundary and base-grid lines stay exact.
    for j in 0..=ny {
        for i in 0..=nx {
            let v = j * (nx + 1) + i;
            if i == 0 || i == nx {
                vertices[v][0] = i as f64 / nx as f64;
            }
            if j == 0 || j == ny {
                vertices[v][1] = j as f64 / ny as f64;
            }
        }
    }
    let mesh = Mesh { nx, ny, vertices };
    for cell in 0..mesh.n_cells() {
        let min = mesh
            .corner_jacobians(cell)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            return Err(Error::DegenerateCell {
                cell,
                min_jacobian: min,
            });
        }
    }
    Ok(mesh)
}

/// Mechanical boundary condition type on a side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanicsBc {
    /// Prescribed displacement (natural in the mixed form).
    Displacement,
    /// Prescribed normal stress (essential in the mixed form).
    Traction,
}

/// Flow boundary condition type on a side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowBc {
    /// Prescribed pressure (natural).
    Pressure,
    /// Prescribed normal flux (essential).
    Flux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideCondition {
    pub mechanics: MechanicsBc,
    pub flow: FlowBc,
}

/// Boundary condition types for the four sides of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub left: SideCondition,
    pub right: SideCondition,
    pub bottom: SideCondition,
    pub top: SideCondition,
}

impl BoundaryConditions {
    pub fn all_dirichlet() -> Self {
        let c = SideCondition {
            mechanics: MechanicsBc::Displacement,
            flow: FlowBc::Pressure,
        };
        Self {
            left: c,
            right: c,
            bottom: c,
            top: c,
        }
    }

    pub fn side(&self, side: Side) -> SideCondition {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
            Side::Bottom => self.bottom,
            Side::Top => self.top,
        }
    }
}

/// An edge shared by two subdomains; the positive edge normal points from
/// `lower` to `upper`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterfaceEdge {
    pub edge: usize,
    pub lower: usize,
    pub upper: usize,
}

/// Partition of a mesh into `px x py` rectangular blocks of cells.
#[derive(Debug, Clone)]
pub struct Decomposition {
    px: usize,
    py: usize,
    cells_x: usize,
    cells_y: usize,
    subdomain_of_cell: Vec<usize>,
    interface_edges: Vec<InterfaceEdge>,
    bc: BoundaryConditions,
}

impl Decomposition {
    pub fn px(&self) -> usize {
        self.px
    }

    pub fn py(&self) -> usize {
        self.py
    }

    pub fn n_subdomains(&self) -> usize {
        self.px * self.py
    }

    /// Cells per subdomain in each direction.
    pub fn block(&self) -> (usize, usize) {
        (self.cells_x, self.cells_y)
    }

    /// Subdomain diameter in units of the domain side (`1/px` for squares).
    pub fn subdomain_size(&self) -> f64 {
        1.0 / self.px.max(self.py) as f64
    }

    pub fn subdomain_of_cell(&self, cell: usize) -> usize {
        self.subdomain_of_cell[cell]
    }

    /// Lower-left cell indices of a subdomain.
    pub fn origin(&self, sub: usize) -> (usize, usize) {
        ((sub % self.px) * self.cells_x, (sub / self.px) * self.cells_y)
    }

    pub fn interface_edges(&self) -> &[InterfaceEdge] {
        &self.interface_edges
    }

    pub fn boundary_conditions(&self) -> &BoundaryConditions {
        &self.bc
    }

    /// Boundary condition on a boundary edge, `None` for interior edges.
    pub fn boundary_tag(&self, mesh: &Mesh, edge: usize) -> Option<(Side, SideCondition)> {
        mesh.boundary_side(edge).map(|s| (s, self.bc.side(s)))
    }

    /// Cells of a subdomain in local row-major order.
    pub fn cells_of(&self, mesh: &Mesh, sub: usize) -> Vec<usize> {
        let (i0, j0) = self.origin(sub);
        (0..self.cells_y)
            .flat_map(|j| (0..self.cells_x).map(move |i| mesh.cell(i0 + i, j0 + j)))
            .collect()
    }
}

/// Splits `mesh` into `px x py` subdomains; subdomain `sy * px + sx`.
pub fn partition(
    mesh: &Mesh,
    px: usize,
    py: usize,
    bc: BoundaryConditions,
) -> Result<Decomposition> {
    if px == 0 || mesh.nx % px != 0 {
        return Err(Error::NonDivisiblePartition {
            direction: "x",
            cells: mesh.nx,
            parts: px,
        });
    }
    if py == 0 || mesh.ny % py != 0 {
        return Err(Error::NonDivisiblePartition {
            direction: "y",
            cells: mesh.ny,
            parts: py,
        });
    }
    let (cx, cy) = (mesh.nx / px, mesh.ny / py);
    let subdomain_of_cell = (0..mesh.n_cells())
        .map(|c| {
            let (i, j) = mesh.cell_ij(c);
            (j / cy) * px + i / cx
        })
        .collect::<Vec<_>>();
    let mut interface_edges = Vec::new();
    for edge in 0..mesh.n_edges() {
        if let [Some(a), Some(b)] = mesh.edge_cells(edge) {
            let (sa, sb) = (subdomain_of_cell[a], subdomain_of_cell[b]);
            if sa != sb {
                interface_edges.push(InterfaceEdge {
                    edge,
                    lower: sa.min(sb),
                    upper: sa.max(sb),
                });
            }
        }
    }
    Ok(Decomposition {
        px,
        py,
        cells_x: cx,
        cells_y: cy,
        subdomain_of_cell,
        interface_edges,
        bc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bc() -> BoundaryConditions {
        BoundaryConditions::all_dirichlet()
    }

    #[test]
    fn single_cell_mesh() {
        let m = build_grid(1, 1, None).unwrap();
        assert_eq!(m.n_cells(), 1);
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_edges(), 4);
        assert!((0..4).all(|e| m.boundary_side(e).is_some()));
    }

    #[test]
    fn structured_counts() {
        let m = build_grid(4, 4, None).unwrap();
        assert_eq!(m.n_cells(), 16);
        assert_eq!(m.n_vertices(), 25);
        assert_eq!(m.n_edges(), 40);
    }

    #[test]
    fn edge_adjacency_counts() {
        let m = build_grid(3, 5, None).unwrap();
        for e in 0..m.n_edges() {
            let n = m.edge_cells(e).iter().flatten().count();
            if m.boundary_side(e).is_some() {
                assert_eq!(n, 1);
            } else {
                assert_eq!(n, 2);
            }
        }
    }

    #[test]
    fn positive_normals_point_from_lower_to_higher_cell() {
        let m = build_grid(3, 3, None).unwrap();
        for e in 0..m.n_edges() {
            if let [Some(a), Some(b)] = m.edge_cells(e) {
                assert!(a < b);
                let (ca, cb) = (m.cell_centroid(a), m.cell_centroid(b));
                let n = m.edge_normal(e);
                assert!(n[0] * (cb[0] - ca[0]) + n[1] * (cb[1] - ca[1]) > 0.0);
            }
        }
    }

    #[test]
    fn cell_edges_are_consistent_with_edge_cells() {
        let m = build_grid(4, 3, None).unwrap();
        for c in 0..m.n_cells() {
            for e in m.cell_edges(c) {
                assert!(m.edge_cells(e).contains(&Some(c)));
            }
        }
    }

    #[test]
    fn partition_counts() {
        let m = build_grid(4, 4, None).unwrap();
        let d = partition(&m, 2, 2, bc()).unwrap();
        assert_eq!(d.n_subdomains(), 4);
        for s in 0..4 {
            assert_eq!(d.cells_of(&m, s).len(), 4);
        }
        assert_eq!(d.interface_edges().len(), 8);
        let vertical = d
            .interface_edges()
            .iter()
            .filter(|ie| m.edge_direction(ie.edge) == EdgeDirection::Vertical)
            .count();
        assert_eq!(vertical, 4);
        assert!(d.interface_edges().iter().all(|ie| ie.lower < ie.upper));

        let m8 = build_grid(8, 8, None).unwrap();
        let d1 = partition(&m8, 1, 1, bc()).unwrap();
        assert_eq!(d1.n_subdomains(), 1);
        assert!(d1.interface_edges().is_empty());
    }

    #[test]
    fn large_partition() {
        let m = build_grid(128, 128, None).unwrap();
        let d = partition(&m, 4, 4, bc()).unwrap();
        assert_eq!(d.n_subdomains(), 16);
        assert_eq!(d.block(), (32, 32));
        for s in 0..16 {
            assert_eq!(d.cells_of(&m, s).len(), 32 * 32);
        }
    }

    #[test]
    fn partition_rejects_non_divisible() {
        let m = build_grid(6, 4, None).unwrap();
        match partition(&m, 4, 2, bc()) {
            Err(Error::NonDivisiblePartition { direction, .. }) => assert_eq!(direction, "x"),
            other => panic!("unexpected {other:?}"),
        }
        match partition(&m, 2, 3, bc()) {
            Err(Error::NonDivisiblePartition { direction, .. }) => assert_eq!(direction, "y"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn every_cell_in_exactly_one_subdomain() {
        let m = build_grid(6, 4, None).unwrap();
        let d = partition(&m, 3, 2, bc()).unwrap();
        let mut seen = vec![0usize; m.n_cells()];
        for s in 0..d.n_subdomains() {
            for c in d.cells_of(&m, s) {
                assert_eq!(d.subdomain_of_cell(c), s);
                seen[c] += 1;
            }
        }
        assert!(seen.iter().all(|&n| n == 1));
    }

    fn example_perturbation() -> Perturbation {
        Perturbation {
            fraction: 0.25,
            seed: 7,
            base: None,
            layout: (2, 2),
            subdomains: Some(vec![0, 3]),
        }
    }

    #[test]
    fn perturbed_grid_keeps_interfaces_and_boundary() {
        let spec = example_perturbation();
        let m = build_grid(64, 64, Some(&spec)).unwrap();
        let u = build_grid(64, 64, None).unwrap();
        for c in 0..m.n_cells() {
            assert!(m.corner_jacobians(c).iter().all(|&d| d > 0.0));
        }
        let mut moved = 0;
        for j in 0..=64 {
            for i in 0..=64 {
                let v = m.vertex(i, j);
                let on_line = i % 32 == 0 || j % 32 == 0;
                let in_unselected = (i > 32 && j < 32) || (i < 32 && j > 32);
                if on_line || in_unselected {
                    assert_eq!(m.vertices()[v], u.vertices()[v], "vertex ({i},{j}) moved");
                } else if m.vertices()[v] != u.vertices()[v] {
                    moved += 1;
                    let d = [
                        (m.vertices()[v][0] - u.vertices()[v][0]).abs(),
                        (m.vertices()[v][1] - u.vertices()[v][1]).abs(),
                    ];
                    assert!(d[0] <= 0.25 / 64.0 + 1e-15 && d[1] <= 0.25 / 64.0 + 1e-15);
                }
            }
        }
        assert!(moved > 1000);
    }

    #[test]
    fn perturbation_is_reproducible() {
        let spec = example_perturbation();
        let a = build_grid(16, 16, Some(&spec)).unwrap();
        let b = build_grid(16, 16, Some(&spec)).unwrap();
        assert_eq!(a, b);
        let mut other = spec.clone();
        other.seed = 8;
        let c = build_grid(16, 16, Some(&other)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn coarse_base_refines_into_matching_geometry() {
        let mut spec = example_perturbation();
        spec.base = Some((4, 4));
        let coarse = build_grid(4, 4, Some(&spec)).unwrap();
        let fine = build_grid(16, 16, Some(&spec)).unwrap();
        for j in 0..=4 {
            for i in 0..=4 {
                let a = coarse.vertices()[coarse.vertex(i, j)];
                let b = fine.vertices()[fine.vertex(4 * i, 4 * j)];
                assert!((a[0] - b[0]).abs() < 1e-15 && (a[1] - b[1]).abs() < 1e-15);
            }
        }
        // Interior subdomain vertex of the bottom-left block moved.
        assert_ne!(coarse.vertices()[coarse.vertex(1, 1)], [0.25, 0.25]);
    }

    #[test]
    fn oversized_perturbation_is_rejected() {
        let spec = Perturbation::new(0.5, 1);
        assert!(matches!(
            build_grid(4, 4, Some(&spec)),
            Err(Error::InvalidMesh(_))
        ));
    }

    #[test]
    fn interface_traces_match_between_neighbours() {
        let spec = example_perturbation();
        let m = build_grid(8, 8, Some(&spec)).unwrap();
        let d = partition(&m, 2, 2, bc()).unwrap();
        for ie in d.interface_edges() {
            let [a, b] = m.edge_cells(ie.edge);
            let (a, b) = (a.unwrap(), b.unwrap());
            let from_a = m.cell_edges(a);
            let from_b = m.cell_edges(b);
            assert!(from_a.contains(&ie.edge) && from_b.contains(&ie.edge));
            assert_eq!(d.subdomain_of_cell(a), ie.lower);
            assert_eq!(d.subdomain_of_cell(b), ie.upper);
        }
    }
}
