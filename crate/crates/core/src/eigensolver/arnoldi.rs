//! Thick-restarted complex Arnoldi iteration for the largest-magnitude
//! eigenvalues of a linear operator.
//!
//! After each sweep the wanted Ritz vectors are orthonormalized and kept; the
//! Krylov relation `A V = V H + h v eₘᵀ` is preserved because the kept Ritz
//! vectors span an invariant subspace of the projected matrix.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::c64;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct ArnoldiOptions {
    /// Krylov subspace dimension; `0` selects `max(20, 4 nev)`.
    pub subspace: usize,
    /// Relative Ritz residual tolerance `‖A y − θ y‖ ≤ tol |θ|`.
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
    /// Ritz values with `|θ|` below this are treated as images of infinite eigenvalues.
    pub zero_threshold: f64,
}

impl Default for ArnoldiOptions {
    fn default() -> Self {
        ArnoldiOptions { subspace: 0, tol: 1e-10, max_restarts: 300, seed: 0, zero_threshold: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct RitzPair {
    pub theta: c64,
    /// Unit-norm Ritz vector.
    pub vector: Vec<c64>,
    /// Relative Ritz residual.
    pub residual: f64,
}

fn dot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[c64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(y: &mut [c64], a: c64, x: &[c64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Two passes of classical Gram-Schmidt; returns the projection coefficients.
fn orthogonalize(basis: &[Vec<c64>], w: &mut [c64]) -> Vec<c64> {
    let mut h = vec![c64::new(0.0, 0.0); basis.len()];
    for _ in 0..2 {
        let coeffs: Vec<c64> = basis.iter().map(|v| dot(v, w)).collect();
        for (v, c) in basis.iter().zip(&coeffs) {
            axpy(w, -c, v);
        }
        for (hi, c) in h.iter_mut().zip(coeffs) {
            *hi += c;
        }
    }
    h
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<c64> {
    let mut v: Vec<c64> = (0..n).map(|_| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let s = norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Eigen-decomposition of a small dense complex matrix, eigenvectors normalized.
fn small_eigen(h: &Mat<c64>) -> Result<(Vec<c64>, Mat<c64>)> {
    let evd = h.eigen().map_err(|e| Error::LinearAlgebra(format!("dense eigensolver failed: {e:?}")))?;
    let n = h.nrows();
    let s = evd.S();
    let s = s.column_vector();
    let vals: Vec<c64> = (0..n).map(|i| s[i]).collect();
    let mut u = evd.U().to_owned();
    for j in 0..n {
        let nrm = (0..n).map(|i| u[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if nrm > 0.0 {
            for i in 0..n {
                u[(i, j)] /= nrm;
            }
        }
    }
    Ok((vals, u))
}

/// Order of Ritz values: decreasing modulus, ties by real then imaginary part.
fn wanted_order(vals: &[c64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| {
        vals[b]
            .norm()
            .partial_cmp(&vals[a].norm())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(vals[a].re.partial_cmp(&vals[b].re).unwrap_or(std::cmp::Ordering::Equal))
            .then(vals[a].im.partial_cmp(&vals[b].im).unwrap_or(std::cmp::Ordering::Equal))
    });
    idx
}

/// Computes the `nev` eigenvalues of largest modulus of the `n × n` operator `op`.
pub fn largest_magnitude(
    n: usize,
    nev: usize,
    mut op: impl FnMut(&[c64]) -> Vec<c64>,
    opts: &ArnoldiOptions,
) -> Result<Vec<RitzPair>> {
    if nev == 0 || n == 0 {
        return Ok(Vec::new());
    }
    let m = if opts.subspace == 0 { (4 * nev).max(20) } else { opts.subspace };
    if n <= m + 1 {
        return dense_fallback(n, nev, &mut op, opts);
    }
    let nev = nev.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v: Vec<Vec<c64>> = vec![random_unit(n, &mut rng)];
    // h is (m+1) × m
    let mut h = Mat::<c64>::zeros(m + 1, m);
    let mut start = 0;
    for restart in 0..=opts.max_restarts {
        for j in start..m {
            let mut w = op(&v[j]);
            let coeffs = orthogonalize(&v, &mut w);
            for (i, c) in coeffs.into_iter().enumerate() {
                h[(i, j)] += c;
            }
            let mut beta = norm(&w);
            if beta <= 1e-14 * h.col(j).iter().map(|x| x.norm()).fold(0.0, f64::max).max(1e-300) {
                // invariant subspace: continue with a fresh orthogonal direction
                beta = 0.0;
                let mut r = random_unit(n, &mut rng);
                orthogonalize(&v, &mut r);
                let s = norm(&r);
                r.iter_mut().for_each(|x| *x /= s);
                w = r;
            } else {
                w.iter_mut().for_each(|x| *x /= beta);
            }
            h[(j + 1, j)] = c64::new(beta, 0.0);
            v.push(w);
        }
        let hm = h.subrows(0, m).to_owned();
        let (vals, y) = small_eigen(&hm)?;
        let hlast = h[(m, m - 1)].norm();
        let order: Vec<usize> =
            wanted_order(&vals).into_iter().filter(|&i| vals[i].norm() > opts.zero_threshold).collect();
        let resid = |i: usize| hlast * y[(m - 1, i)].norm() / vals[i].norm();
        let last_residuals: Vec<f64> = order.iter().take(nev).map(|&i| resid(i)).collect();
        let converged = order.len() >= nev && last_residuals.iter().all(|&r| r <= opts.tol);
        if converged || restart == opts.max_restarts {
            if !converged {
                let worst = last_residuals.iter().cloned().fold(0.0, f64::max);
                return Err(Error::NoConvergence {
                    restarts: restart,
                    worst_residual: worst,
                    residuals: last_residuals,
                });
            }
            return Ok(order
                .into_iter()
                .take(nev)
                .map(|i| {
                    let mut x = vec![c64::new(0.0, 0.0); n];
                    for (j, vj) in v.iter().take(m).enumerate() {
                        axpy(&mut x, y[(j, i)], vj);
                    }
                    let s = norm(&x);
                    x.iter_mut().for_each(|e| *e /= s);
                    RitzPair { theta: vals[i], vector: x, residual: resid(i) }
                })
                .collect());
        }

        // thick restart with the k wanted Ritz vectors
        let k = (nev + (m - nev) / 2).min(m - 1).min(order.len()).max(1);
        let mut q: Vec<Vec<c64>> = Vec::with_capacity(k);
        for &i in order.iter().take(k) {
            let mut col: Vec<c64> = (0..m).map(|r| y[(r, i)]).collect();
            orthogonalize(&q, &mut col);
            let s = norm(&col);
            if s > 1e-10 {
                col.iter_mut().for_each(|x| *x /= s);
                q.push(col);
            }
        }
        let k = q.len();
        let qmat = Mat::<c64>::from_fn(m, k, |r, c| q[c][r]);
        let hk = qmat.adjoint() * &hm * &qmat;
        let mut new_v: Vec<Vec<c64>> = Vec::with_capacity(m + 1);
        for c in 0..k {
            let mut x = vec![c64::new(0.0, 0.0); n];
            for (j, vj) in v.iter().take(m).enumerate() {
                axpy(&mut x, qmat[(j, c)], vj);
            }
            new_v.push(x);
        }
        new_v.push(v[m].clone());
        let hsub = h[(m, m - 1)];
        h = Mat::<c64>::zeros(m + 1, m);
        for r in 0..k {
            for c in 0..k {
                h[(r, c)] = hk[(r, c)];
            }
        }
        for c in 0..k {
            h[(k, c)] = hsub * qmat[(m - 1, c)];
        }
        v = new_v;
        start = k;
    }
    unreachable!("loop returns on the final restart")
}

fn dense_fallback(
    n: usize,
    nev: usize,
    op: &mut impl FnMut(&[c64]) -> Vec<c64>,
    opts: &ArnoldiOptions,
) -> Result<Vec<RitzPair>> {
    let mut a = Mat::<c64>::zeros(n, n);
    for j in 0..n {
        let mut e = vec![c64::new(0.0, 0.0); n];
        e[j] = c64::new(1.0, 0.0);
        let col = op(&e);
        for i in 0..n {
            a[(i, j)] = col[i];
        }
    }
    let (vals, y) = small_eigen(&a)?;
    let order: Vec<usize> = wanted_order(&vals).into_iter().filter(|&i| vals[i].norm() > opts.zero_threshold).collect();
    Ok(order
        .into_iter()
        .take(nev)
        .map(|i| {
            let x: Vec<c64> = (0..n).map(|r| y[(r, i)]).collect();
            let ax = op(&x);
            let r: f64 = ax.iter().zip(&x).map(|(a, b)| (a - vals[i] * b).norm_sqr()).sum::<f64>().sqrt();
            RitzPair { theta: vals[i], vector: x, residual: r / vals[i].norm() }
        })
        .collect())
}
