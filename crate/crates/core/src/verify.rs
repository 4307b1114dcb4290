//! Manufactured solutions, discrete error norms, convergence rates and
//! iteration-growth fits.

use std::f64::consts::PI;

use crate::assembly::{cell_values, ProblemData};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::QuadratureRule;
use crate::spaces::{edge_poly, CellValues, ReferenceBdm1};
use crate::subdomain::{Discretization, Fields};

/// Closed-form solution fields.
pub trait ExactSolution: Sync {
    fn pressure(&self, x: [f64; 2], t: f64) -> f64;
    fn velocity(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn velocity_div(&self, x: [f64; 2], t: f64) -> f64;
    /// Rows of the poroelastic stress.
    fn stress(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2];
    fn stress_div(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn displacement(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn rotation(&self, x: [f64; 2], t: f64) -> f64;
}

/// Displacement `u` with first and second derivatives at one point.
#[derive(Debug, Clone, Copy, Default)]
struct Jet {
    u: [f64; 2],
    /// `du[i][j] = ∂_j u_i`
    du: [[f64; 2]; 2],
    /// `d2u[i] = [∂xx, ∂xy, ∂yy]`
    d2u: [[f64; 3]; 2],
}

/// Example-1 manufactured solution:
/// `p = e^t (sin πx cos πy + 10)`, `u = e^t (x³y⁴ + x² + sin((1-x)(1-y)) cos(1-y),
/// (1-x)⁴(1-y)³ + (1-y)² + cos(xy) sin x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedCase {
    pub lambda: f64,
    pub mu: f64,
    /// Scalar permeability (`K = k I`).
    pub permeability: f64,
    pub storativity: f64,
    pub alpha: f64,
}

impl ManufacturedCase {
    /// Parameters of Example 1 with storativity `c0`.
    pub fn example1(c0: f64) -> Self {
        Self {
            lambda: 100.0,
            mu: 100.0,
            permeability: 1.0,
            storativity: c0,
            alpha: 1.0,
        }
    }

    fn jet(&self, [x, y]: [f64; 2], t: f64) -> Jet {
        let e = t.exp();
        let (a, b) = ((1.0 - x) * (1.0 - y), 1.0 - y);
        let (sa, ca, sb, cb) = (a.sin(), a.cos(), b.sin(), b.cos());
        let (sxy, cxy, sx, cx) = ((x * y).sin(), (x * y).cos(), x.sin(), x.cos());
        let (mx, my) = (1.0 - x, 1.0 - y);
        let u1 = x.powi(3) * y.powi(4) + x * x + sa * cb;
        let u2 = mx.powi(4) * my.powi(3) + my * my + cxy * sx;
        let u1x = 3.0 * x * x * y.powi(4) + 2.0 * x - my * ca * cb;
        let u1y = 4.0 * x.powi(3) * y.powi(3) - mx * ca * cb + sa * sb;
        let u2x = -4.0 * mx.powi(3) * my.powi(3) - y * sxy * sx + cxy * cx;
        let u2y = -3.0 * mx.powi(4) * my * my - 2.0 * my - x * sxy * sx;
        let u1xx = 6.0 * x * y.powi(4) + 2.0 - my * my * sa * cb;
        let u1xy = 12.0 * x * x * y.powi(3) + ca * cb - my * (mx * sa * cb + ca * sb);
        let u1yy = 12.0 * x.powi(3) * y * y - mx * mx * sa * cb - 2.0 * mx * ca * sb - sa * cb;
        let u2xx = 12.0 * mx * mx * my.powi(3) - y * y * cxy * sx - 2.0 * y * sxy * cx - cxy * sx;
        let u2xy = 12.0 * mx.powi(3) * my * my - sxy * sx - x * y * cxy * sx - x * sxy * cx;
        let u2yy = 6.0 * mx.powi(4) * my + 2.0 - x * x * cxy * sx;
        Jet {
            u: [e * u1, e * u2],
            du: [[e * u1x, e * u1y], [e * u2x, e * u2y]],
            d2u: [[e * u1xx, e * u1xy, e * u1yy], [e * u2xx, e * u2xy, e * u2yy]],
        }
    }

    fn pressure_gradient(&self, [x, y]: [f64; 2], t: f64) -> [f64; 2] {
        let e = t.exp();
        [
            e * PI * (PI * x).cos() * (PI * y).cos(),
            -e * PI * (PI * x).sin() * (PI * y).sin(),
        ]
    }

    fn pressure_laplacian(&self, [x, y]: [f64; 2], t: f64) -> f64 {
        -2.0 * PI * PI * t.exp() * (PI * x).sin() * (PI * y).cos()
    }
}

impl ExactSolution for ManufacturedCase {
    fn pressure(&self, [x, y]: [f64; 2], t: f64) -> f64 {
        t.exp() * ((PI * x).sin() * (PI * y).cos() + 10.0)
    }

    fn velocity(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let g = self.pressure_gradient(x, t);
        [-self.permeability * g[0], -self.permeability * g[1]]
    }

    fn velocity_div(&self, x: [f64; 2], t: f64) -> f64 {
        -self.permeability * self.pressure_laplacian(x, t)
    }

    fn stress(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        let j = self.jet(x, t);
        let div = j.du[0][0] + j.du[1][1];
        let ap = self.alpha * ExactSolution::pressure(self, x, t);
        let shear = self.mu * (j.du[0][1] + j.du[1][0]);
        [
            [2.0 * self.mu * j.du[0][0] + self.lambda * div - ap, shear],
            [shear, 2.0 * self.mu * j.du[1][1] + self.lambda * div - ap],
        ]
    }

    fn stress_div(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let j = self.jet(x, t);
        let [[u1xx, u1xy, u1yy], [u2xx, u2xy, u2yy]] = j.d2u;
        let gp = self.pressure_gradient(x, t);
        let (mu, la, al) = (self.mu, self.lambda, self.alpha);
        [
            2.0 * mu * u1xx + la * (u1xx + u2xy) - al * gp[0] + mu * (u1yy + u2xy),
            mu * (u1xy + u2xx) + 2.0 * mu * u2yy + la * (u1xy + u2yy) - al * gp[1],
        ]
    }

    fn displacement(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        self.jet(x, t).u
    }

    fn rotation(&self, x: [f64; 2], t: f64) -> f64 {
        let j = self.jet(x, t);
        0.5 * (j.du[0][1] - j.du[1][0])
    }
}

impl ProblemData for ManufacturedCase {
    fn body_force(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let d = self.stress_div(x, t);
        [-d[0], -d[1]]
    }

    /// Every field scales with `e^t`, so time derivatives equal values.
    fn source(&self, x: [f64; 2], t: f64) -> f64 {
        let j = self.jet(x, t);
        self.storativity * ExactSolution::pressure(self, x, t)
            + self.alpha * (j.du[0][0] + j.du[1][1])
            + self.velocity_div(x, t)
    }

    fn displacement(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        ExactSolution::displacement(self, x, t)
    }

    fn pressure(&self, x: [f64; 2], t: f64) -> f64 {
        ExactSolution::pressure(self, x, t)
    }

    fn traction(&self, x: [f64; 2], t: f64, n: [f64; 2]) -> [f64; 2] {
        let s = self.stress(x, t);
        [
            s[0][0] * n[0] + s[0][1] * n[1],
            s[1][0] * n[0] + s[1][1] * n[1],
        ]
    }

    fn normal_flux(&self, x: [f64; 2], t: f64, n: [f64; 2]) -> f64 {
        let z = self.velocity(x, t);
        z[0] * n[0] + z[1] * n[1]
    }

    fn initial_pressure(&self, x: [f64; 2]) -> f64 {
        ExactSolution::pressure(self, x, 0.0)
    }
}

/// Errors of one state, ordered as the reported columns: velocity
/// (H(div)), pressure, stress (H(div)), displacement.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepErrors {
    pub error: [f64; 4],
    pub exact: [f64; 4],
}

/// Evaluates discrete fields at a quadrature rule one order above the
/// assembly rule.
#[derive(Debug, Clone)]
pub struct ErrorEvaluator {
    cells: Vec<Vec<CellValues>>,
}

/// Degree of the error quadrature.
pub const ERROR_QUADRATURE_DEGREE: usize = 7;

impl ErrorEvaluator {
    pub fn new(disc: &Discretization) -> Result<Self> {
        let rule = QuadratureRule::with_degree(ERROR_QUADRATURE_DEGREE);
        let reference = ReferenceBdm1::new();
        let cells = disc
            .subdomains
            .iter()
            .map(|s| cell_values(&disc.mesh, &s.dofmap, &rule, &reference))
            .collect::<Result<_>>()?;
        Ok(Self { cells })
    }

    /// Squared absolute errors and squared exact norms at time `t`.
    pub fn evaluate(
        &self,
        disc: &Discretization,
        fields: &[Fields],
        exact: &dyn ExactSolution,
        t: f64,
    ) -> Result<StepErrors> {
        if fields.len() != disc.n_subdomains() {
            return Err(Error::DimensionMismatch {
                what: "subdomain fields",
                expected: disc.n_subdomains(),
                got: fields.len(),
            });
        }
        let mut out = StepErrors::default();
        for ((sub, cells), f) in disc.subdomains.iter().zip(&self.cells).zip(fields) {
            let d = &sub.dofmap;
            for (lc, cv) in cells.iter().enumerate() {
                let dofs = d.cell_bdm_dofs(lc);
                for q in 0..cv.points.len() {
                    let x = cv.points[q];
                    let w = cv.jxw[q];
                    let phi = &cv.basis[q];
                    let div = &cv.divergences[q];
                    let mut zh = [0.0; 2];
                    let mut zdiv = 0.0;
                    let mut sh = [[0.0; 2]; 2];
                    let mut sdiv = [0.0; 2];
                    for (a, &dof) in dofs.iter().enumerate() {
                        let zc = f.z[dof];
                        zh[0] += zc * phi[a][0];
                        zh[1] += zc * phi[a][1];
                        zdiv += zc * div[a];
                        for r in 0..2 {
                            let c = f.sigma[d.sigma(r, dof)];
                            sh[r][0] += c * phi[a][0];
                            sh[r][1] += c * phi[a][1];
                            sdiv[r] += c * div[a];
                        }
                    }
                    let z = exact.velocity(x, t);
                    let zd = exact.velocity_div(x, t);
                    out.error[0] += w * ((z[0] - zh[0]).powi(2) + (z[1] - zh[1]).powi(2) + (zd - zdiv).powi(2));
                    out.exact[0] += w * (z[0] * z[0] + z[1] * z[1] + zd * zd);
                    let p = exact.pressure(x, t);
                    out.error[1] += w * (p - f.p[lc]).powi(2);
                    out.exact[1] += w * p * p;
                    let s = exact.stress(x, t);
                    let sd = exact.stress_div(x, t);
                    for r in 0..2 {
                        out.error[2] += w
                            * ((s[r][0] - sh[r][0]).powi(2)
                                + (s[r][1] - sh[r][1]).powi(2)
                                + (sd[r] - sdiv[r]).powi(2));
                        out.exact[2] += w * (s[r][0].powi(2) + s[r][1].powi(2) + sd[r].powi(2));
                    }
                    let u = exact.displacement(x, t);
                    for c in 0..2 {
                        out.error[3] += w * (u[c] - f.u[2 * lc + c]).powi(2);
                        out.exact[3] += w * u[c] * u[c];
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Running `L∞` in time of the spatial errors, relative to the `L∞` norm
/// of the exact solution.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinfErrors {
    max_error: [f64; 4],
    max_exact: [f64; 4],
    steps: usize,
}

impl LinfErrors {
    pub fn push(&mut self, e: &StepErrors) {
        for i in 0..4 {
            self.max_error[i] = self.max_error[i].max(e.error[i].sqrt());
            self.max_exact[i] = self.max_exact[i].max(e.exact[i].sqrt());
        }
        self.steps += 1;
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Relative errors `[z, p, σ, u]`.
    pub fn relative(&self) -> Result<[f64; 4]> {
        if self.steps == 0 {
            return Err(Error::Degenerate("no snapshots recorded".into()));
        }
        Ok(std::array::from_fn(|i| {
            if self.max_exact[i] > 0.0 {
                self.max_error[i] / self.max_exact[i]
            } else {
                self.max_error[i]
            }
        }))
    }
}

/// Edge-moment interpolant of a vector field onto one subdomain's BDM1
/// space.
pub fn interpolate_hdiv(
    mesh: &Mesh,
    edges: &[usize],
    line: &QuadratureRule,
    f: impl Fn([f64; 2]) -> [f64; 2],
) -> Vec<f64> {
    let mut out = vec![0.0; 2 * edges.len()];
    for (le, &e) in edges.iter().enumerate() {
        let [p0, p1] = mesh.edge_coords(e);
        let n = mesh.edge_normal(e);
        let len = mesh.edge_length(e);
        for k in 0..2 {
            out[2 * le + k] = len
                * line
                    .line()
                    .map(|(s, w)| {
                        let v = f([p0[0] + s * (p1[0] - p0[0]), p0[1] + s * (p1[1] - p0[1])]);
                        w * (v[0] * n[0] + v[1] * n[1]) * edge_poly(k, s)
                    })
                    .sum::<f64>();
        }
    }
    out
}

/// `log2(e_coarse / e_fine)` between successive rows, assuming `h` halves.
pub fn rates(errors: &[f64]) -> Vec<Option<f64>> {
    errors
        .windows(2)
        .map(|w| (w[0] > 0.0 && w[1] > 0.0).then(|| (w[0] / w[1]).log2()))
        .collect()
}

/// Least-squares slope of `log(value)` against `log(size)`.
pub fn fit_growth(sizes: &[f64], values: &[f64]) -> Result<f64> {
    if sizes.len() != values.len() {
        return Err(Error::DimensionMismatch {
            what: "growth fit data",
            expected: sizes.len(),
            got: values.len(),
        });
    }
    if sizes.len() < 2 {
        return Err(Error::Degenerate("growth fit needs at least two points".into()));
    }
    if sizes.iter().chain(values).any(|v| !(*v > 0.0)) {
        return Err(Error::Degenerate("growth fit needs positive data".into()));
    }
    let xs: Vec<f64> = sizes.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("growth fit needs distinct sizes".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    /// Average iterations per step, one entry per interface solver.
    pub iterations: Vec<f64>,
    /// Relative errors `[z, p, σ, u]`.
    pub errors: [f64; 4],
}

/// Rows ordered from coarse to fine.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Rates of error column `k` between successive rows.
    pub fn rates(&self, k: usize) -> Vec<Option<f64>> {
        let e: Vec<f64> = self.rows.iter().map(|r| r.errors[k]).collect();
        rates(&e)
    }

    /// Rates of iteration column `k`, as `log2(it_fine / it_coarse)` with a
    /// sign so that growth like `h^-a` reports `-a`.
    pub fn iteration_rates(&self, k: usize) -> Vec<Option<f64>> {
        let it: Vec<f64> = self.rows.iter().map(|r| r.iterations[k]).collect();
        rates(&it)
    }

    /// Least-squares slope of the error in column `k` against `h`.
    pub fn fitted_rate(&self, k: usize) -> Result<f64> {
        let h: Vec<f64> = self.rows.iter().map(|r| r.h).collect();
        let e: Vec<f64> = self.rows.iter().map(|r| r.errors[k]).collect();
        fit_growth(&h, &e)
    }
}
