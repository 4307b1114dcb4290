//! Unpreconditioned Krylov solvers on abstract linear operators.

use crate::error::{Error, Result};

/// A square linear operator on `R^n`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// Dense row-major matrix as an operator (mainly for tests).
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub n: usize,
    pub data: Vec<f64>,
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((0..self.n)
            .map(|i| dot(&self.data[i * self.n..(i + 1) * self.n], x))
            .collect())
    }
}

/// Outcome of a Krylov solve.
#[derive(Debug, Clone, PartialEq)]
pub struct KrylovReport {
    pub iterations: usize,
    /// `|r_k| / |r_0|` for `k = 0..=iterations`.
    pub residuals: Vec<f64>,
    /// Weighted residual norms `|r_k|_* / |r_0|_*` when weights were given.
    pub star_residuals: Vec<f64>,
    pub converged: bool,
}

impl KrylovReport {
    fn trivial() -> Self {
        Self {
            iterations: 0,
            residuals: vec![0.0],
            star_residuals: Vec::new(),
            converged: true,
        }
    }

    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().unwrap_or(&0.0)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn weighted_norm(a: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(w).map(|(x, w)| w * x * x).sum::<f64>().sqrt()
}

fn check_dim(op: &dyn LinearOperator, rhs: &[f64]) -> Result<()> {
    if op.dim() != rhs.len() {
        return Err(Error::DimensionMismatch {
            what: "Krylov right-hand side",
            expected: op.dim(),
            got: rhs.len(),
        });
    }
    Ok(())
}

/// Non-restarted GMRES with modified Gram-Schmidt and Givens rotations,
/// zero initial guess. Stops when `|r_k| <= tol |b|`. If `weights` is
/// given, the weighted residual norm of every iterate is recorded too.
pub fn gmres(
    op: &dyn LinearOperator,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
    weights: Option<&[f64]>,
) -> Result<(Vec<f64>, KrylovReport)> {
    check_dim(op, rhs)?;
    if !(tol > 0.0) {
        return Err(Error::config("tol", "tolerance must be positive"));
    }
    let n = rhs.len();
    let beta = norm(rhs);
    if beta == 0.0 {
        return Ok((vec![0.0; n], KrylovReport::trivial()));
    }
    let mut basis: Vec<Vec<f64>> = vec![rhs.iter().map(|v| v / beta).collect()];
    // Columns of the Hessenberg matrix after rotation (upper triangular).
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut residuals = vec![1.0];
    let mut star_residuals = Vec::new();
    let star0 = weights.map(|w| weighted_norm(rhs, w));
    if star0.is_some() {
        star_residuals.push(1.0);
    }
    let mut converged = false;
    let limit = max_iter.min(n);
    for k in 0..limit {
        let mut w = op.apply(&basis[k])?;
        let mut h = vec![0.0; k + 2];
        for (j, v) in basis.iter().enumerate() {
            let hj = dot(&w, v);
            h[j] = hj;
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= hj * vi;
            }
        }
        let hnext = norm(&w);
        h[k + 1] = hnext;
        for (i, (&c, &s)) in cs.iter().zip(&sn).enumerate() {
            let (a, b) = (h[i], h[i + 1]);
            h[i] = c * a + s * b;
            h[i + 1] = -s * a + c * b;
        }
        let (a, b) = (h[k], h[k + 1]);
        let rho = a.hypot(b);
        let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (a / rho, b / rho) };
        h[k] = rho;
        h[k + 1] = 0.0;
        cs.push(c);
        sn.push(s);
        let gk = g[k];
        g[k] = c * gk;
        g.push(-s * gk);
        h.truncate(k + 1);
        r_cols.push(h);
        let rel = g[k + 1].abs() / beta;
        residuals.push(rel);
        if hnext > 0.0 {
            basis.push(w.into_iter().map(|v| v / hnext).collect());
        }
        if let (Some(wt), Some(s0)) = (weights, star0) {
            // r_k = V_{k+1} Q_k^T (g_{k+1} e_{k+1})
            let mut coeff = vec![0.0; k + 2];
            coeff[k + 1] = g[k + 1];
            for i in (0..=k).rev() {
                let (a, b) = (coeff[i], coeff[i + 1]);
                coeff[i] = cs[i] * a - sn[i] * b;
                coeff[i + 1] = sn[i] * a + cs[i] * b;
            }
            let mut r = vec![0.0; n];
            for (cf, v) in coeff.iter().zip(&basis) {
                for (ri, vi) in r.iter_mut().zip(v) {
                    *ri += cf * vi;
                }
            }
            star_residuals.push(weighted_norm(&r, wt) / s0);
        }
        if rel <= tol || hnext == 0.0 {
            converged = rel <= tol || hnext == 0.0;
            break;
        }
    }
    let m = r_cols.len();
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = g[i];
        for j in i + 1..m {
            s -= r_cols[j][i] * y[j];
        }
        y[i] = s / r_cols[i][i];
    }
    let mut x = vec![0.0; n];
    for (yj, v) in y.iter().zip(&basis) {
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi += yj * vi;
        }
    }
    Ok((
        x,
        KrylovReport {
            iterations: m,
            residuals,
            star_residuals,
            converged,
        },
    ))
}

/// Conjugate gradients with zero initial guess; errors on non-positive
/// curvature.
pub fn cg(
    op: &dyn LinearOperator,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, KrylovReport)> {
    check_dim(op, rhs)?;
    if !(tol > 0.0) {
        return Err(Error::config("tol", "tolerance must be positive"));
    }
    let n = rhs.len();
    let bnorm = norm(rhs);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], KrylovReport::trivial()));
    }
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut residuals = vec![1.0];
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..max_iter {
        let ap = op.apply(&p)?;
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::NotPositiveDefinite {
                iteration: k,
                curvature,
            });
        }
        let alpha = rr / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        iterations = k + 1;
        let rel = rr_new.sqrt() / bnorm;
        residuals.push(rel);
        if rel <= tol {
            converged = true;
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Ok((
        x,
        KrylovReport {
            iterations,
            residuals,
            star_residuals: Vec::new(),
            converged,
        },
    ))
}

/// Arnoldi with full modified Gram-Schmidt reorthogonalization started
/// from `start`; returns the leading `k x k` block of the Hessenberg
/// matrix `V^T A V` (row-major) for the subspace actually built.
pub fn arnoldi_projection(
    op: &dyn LinearOperator,
    start: &[f64],
    steps: usize,
) -> Result<(usize, Vec<f64>)> {
    let n = op.dim();
    let steps = steps.min(n);
    let s = norm(start);
    if s == 0.0 {
        return Err(Error::Degenerate("zero Arnoldi start vector".into()));
    }
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|v| v / s).collect()];
    let mut h = vec![0.0; steps * steps];
    for k in 0..steps {
        let mut w = op.apply(&basis[k])?;
        for _ in 0..2 {
            for (j, v) in basis.iter().enumerate() {
                let c = dot(&w, v);
                if j < steps {
                    h[j * steps + k] += c;
                }
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
        }
        let nw = norm(&w);
        if k + 1 == steps {
            break;
        }
        if nw <= 1e-13 * s.max(1.0) {
            // Invariant subspace reached.
            let m = k + 1;
            let mut hh = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..m {
                    hh[i * m + j] = h[i * steps + j];
                }
            }
            return Ok((m, hh));
        }
        h[(k + 1) * steps + k] = nw;
        basis.push(w.into_iter().map(|v| v / nw).collect());
    }
    Ok((steps, h))
}
