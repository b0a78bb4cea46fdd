//! Sparse linear algebra kernels shared by the eigenpencil estimators and the
//! Dirichlet solver.
//!
//! All reductions run over fixed-size chunks whose partial sums are combined
//! in chunk order, so results are bitwise identical for any worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridDomain, InteriorIndex};

const CHUNK: usize = 8192;

/// Deterministic chunked sum.
pub fn det_sum(values: &[f64]) -> f64 {
    if values.len() < 4 * CHUNK {
        return values.iter().sum();
    }
    let partials: Vec<f64> = values
        .par_chunks(CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .collect();
    partials.iter().sum()
}

/// Deterministic sum of a sequential iterator (masked reductions).
pub fn det_sum_iter(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = 0.0;
    for v in values {
        acc += v;
    }
    acc
}

/// Deterministic chunked dot product.
pub fn det_dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.len() < 4 * CHUNK {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let partials: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(ca, cb)| ca.iter().zip(cb).map(|(x, y)| x * y).sum::<f64>())
        .collect();
    partials.iter().sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    det_dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, &xi)| *yi += alpha * xi);
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    x.iter_mut().for_each(|xi| *xi *= alpha);
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct Csr {
    pub rows: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

/// Row-major builder; entries within a row accumulate.
pub struct CsrBuilder {
    rows: usize,
    entries: Vec<Vec<(usize, f64)>>,
}

impl CsrBuilder {
    pub fn new(rows: usize) -> Self {
        CsrBuilder {
            rows,
            entries: vec![Vec::new(); rows],
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        if value != 0.0 {
            self.entries[row].push((col, value));
        }
    }

    pub fn build(mut self) -> Csr {
        let mut indptr = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for row in self.entries.iter_mut() {
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let col = row[k].0;
                let mut v = 0.0;
                while k < row.len() && row[k].0 == col {
                    v += row[k].1;
                    k += 1;
                }
                indices.push(col);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        Csr {
            rows: self.rows,
            indptr,
            indices,
            data,
        }
    }
}

impl Csr {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        y.par_chunks_mut(CHUNK).enumerate().for_each(|(chunk, out)| {
            let base = chunk * CHUNK;
            for (k, slot) in out.iter_mut().enumerate() {
                let row = base + k;
                let mut acc = 0.0;
                for p in self.indptr[row]..self.indptr[row + 1] {
                    acc += self.data[p] * x[self.indices[p]];
                }
                *slot = acc;
            }
        });
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.rows];
        for row in 0..self.rows {
            for p in self.indptr[row]..self.indptr[row + 1] {
                if self.indices[p] == row {
                    diag[row] = self.data[p];
                }
            }
        }
        diag
    }
}

/// Matrix-free Dirichlet Laplacian over interior nodes, scaled as the
/// dimensionless `2d / -1` stencil (divide by `h^2` for the differential
/// operator). Boundary values are implicitly zero.
#[derive(Debug)]
pub struct DirichletLaplacian {
    dims: usize,
    interior_len: usize,
    /// `2d` neighbor interior ranks per interior node, -1 when the neighbor
    /// is a boundary node.
    neighbors: Vec<i32>,
}

impl DirichletLaplacian {
    pub fn new(domain: &GridDomain, interior: &InteriorIndex) -> Self {
        let d = domain.dimension();
        let n = domain.resolution();
        let mut neighbors = vec![-1i32; interior.len() * 2 * d];
        let mut multi = vec![0usize; d];
        for (rank, &node) in interior.nodes.iter().enumerate() {
            domain.multi_index(node, &mut multi);
            for axis in 0..d {
                let stride = domain.strides()[axis];
                if multi[axis] > 0 {
                    neighbors[rank * 2 * d + 2 * axis] =
                        interior.rank_of_node[node - stride] as i32;
                }
                if multi[axis] + 1 < n {
                    neighbors[rank * 2 * d + 2 * axis + 1] =
                        interior.rank_of_node[node + stride] as i32;
                }
            }
        }
        DirichletLaplacian {
            dims: d,
            interior_len: interior.len(),
            neighbors,
        }
    }

    pub fn len(&self) -> usize {
        self.interior_len
    }

    pub fn is_empty(&self) -> bool {
        self.interior_len == 0
    }

    /// `y = L x` with the dimensionless stencil (diagonal `2d`).
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let two_d = 2.0 * self.dims as f64;
        let width = 2 * self.dims;
        y.par_chunks_mut(CHUNK).enumerate().for_each(|(chunk, out)| {
            let base = chunk * CHUNK;
            for (k, slot) in out.iter_mut().enumerate() {
                let rank = base + k;
                let mut acc = two_d * x[rank];
                let nb = &self.neighbors[rank * width..(rank + 1) * width];
                for &r in nb {
                    if r >= 0 {
                        acc -= x[r as usize];
                    }
                }
                *slot = acc;
            }
        });
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IterStats {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradient for SPD operators.
///
/// `x` carries the initial guess and receives the solution. `precond_diag`,
/// when given, applies Jacobi preconditioning.
pub fn pcg<A>(
    apply: A,
    precond_diag: Option<&[f64]>,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> IterStats
where
    A: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return IterStats {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, (&bi, _)) in r.iter_mut().zip(b.iter().zip(0..)) {
        *ri = bi - *ri;
    }
    let prec = |r: &[f64], z: &mut [f64]| match precond_diag {
        Some(d) => z
            .iter_mut()
            .zip(r.iter().zip(d))
            .for_each(|(zi, (&ri, &di))| *zi = ri / di),
        None => z.copy_from_slice(r),
    };
    let mut z = vec![0.0; n];
    prec(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = det_dot(&r, &z);
    let mut res = norm2(&r) / bnorm;
    for it in 0..max_iter {
        if res <= rel_tol {
            return IterStats {
                iterations: it,
                relative_residual: res,
                converged: true,
            };
        }
        apply(&p, &mut ap);
        let pap = det_dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return IterStats {
                iterations: it,
                relative_residual: res,
                converged: false,
            };
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        res = norm2(&r) / bnorm;
        prec(&r, &mut z);
        let rz_new = det_dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, &zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    IterStats {
        iterations: max_iter,
        relative_residual: res,
        converged: res <= rel_tol,
    }
}

/// BiCGStab with Jacobi preconditioning for nonsymmetric systems.
pub fn bicgstab(
    matrix: &Csr,
    precond_diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<IterStats> {
    let n = b.len();
    if precond_diag.iter().any(|&d| d == 0.0) {
        return Err(Error::Singular(
            "zero pivot on the Jacobi diagonal".into(),
        ));
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(IterStats {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        });
    }
    let mut r = vec![0.0; n];
    matrix.matvec(x, &mut r);
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let r0 = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut res = norm2(&r) / bnorm;
    for it in 0..max_iter {
        if res <= rel_tol {
            return Ok(IterStats {
                iterations: it,
                relative_residual: res,
                converged: true,
            });
        }
        let rho_new = det_dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            return Err(Error::Solve {
                iterations: it,
                residual: res,
                reason: "BiCGStab breakdown (rho -> 0)".into(),
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for ((pi, &ri), &vi) in p.iter_mut().zip(&r).zip(&v) {
            *pi = ri + beta * (*pi - omega * vi);
        }
        for ((ph, &pi), &di) in phat.iter_mut().zip(&p).zip(precond_diag) {
            *ph = pi / di;
        }
        matrix.matvec(&phat, &mut v);
        let r0v = det_dot(&r0, &v);
        if r0v.abs() < 1e-300 {
            return Err(Error::Solve {
                iterations: it,
                residual: res,
                reason: "BiCGStab breakdown (r0.v -> 0)".into(),
            });
        }
        alpha = rho / r0v;
        for ((si, &ri), &vi) in s.iter_mut().zip(&r).zip(&v) {
            *si = ri - alpha * vi;
        }
        let snorm = norm2(&s) / bnorm;
        if snorm <= rel_tol {
            axpy(alpha, &phat, x);
            return Ok(IterStats {
                iterations: it + 1,
                relative_residual: snorm,
                converged: true,
            });
        }
        for ((sh, &si), &di) in shat.iter_mut().zip(&s).zip(precond_diag) {
            *sh = si / di;
        }
        matrix.matvec(&shat, &mut t);
        let tt = det_dot(&t, &t);
        if tt == 0.0 {
            return Err(Error::Solve {
                iterations: it,
                residual: res,
                reason: "BiCGStab breakdown (t = 0)".into(),
            });
        }
        omega = det_dot(&t, &s) / tt;
        if omega.abs() < 1e-300 {
            return Err(Error::Solve {
                iterations: it,
                residual: res,
                reason: "BiCGStab breakdown (omega -> 0)".into(),
            });
        }
        axpy(alpha, &phat, x);
        axpy(omega, &shat, x);
        for ((ri, &si), &ti) in r.iter_mut().zip(&s).zip(&t) {
            *ri = si - omega * ti;
        }
        res = norm2(&r) / bnorm;
        if !res.is_finite() {
            return Err(Error::Solve {
                iterations: it,
                residual: f64::INFINITY,
                reason: "BiCGStab diverged".into(),
            });
        }
    }
    Ok(IterStats {
        iterations: max_iter,
        relative_residual: res,
        converged: res <= rel_tol,
    })
}
