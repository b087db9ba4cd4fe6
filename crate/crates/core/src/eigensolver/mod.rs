//! Generalized eigenproblems `K x = λ M̃ x` with a singular block-diagonal `M̃`,
//! solved by shift-invert Arnoldi; dense QZ reference; source-problem solves.
//!
//! `M̃` is nonzero only on one diagonal block (the "active" block). The
//! shift-invert operator is applied in the coordinates of that block,
//!
//! ```text
//! op(y) = P (K − s M̃)⁻¹ Pᵀ M_a y,
//! ```
//!
//! so the infinite eigenvalues of the pencil never enter the Krylov space. A
//! Ritz pair `(θ, y)` gives `λ = s + 1/θ` and `x = (K − s M̃)⁻¹ Pᵀ M_a y`.

pub mod arnoldi;
mod lu;

use faer::linalg::solvers::{GeneralizedEigen, Solve};
use faer::Mat;
use serde::Serialize;

pub use arnoldi::{ArnoldiOptions, RitzPair};
pub use lu::{Border, ShiftedLu};

use crate::assembly::SparseSystem;
use crate::c64;
use crate::error::{Error, Result};
use crate::sparse::{Coo, Csr};

/// `K x = λ M̃ x` with `M̃` zero outside the square block `mass` at `(offset, offset)`.
#[derive(Debug, Clone)]
pub struct EigenProblem {
    pub k: Csr,
    pub mass: Csr,
    pub mass_offset: usize,
    pub shift: c64,
    pub nev: usize,
    /// Dense multiplier row/column kept out of the sparse factorization.
    pub border: Option<Border>,
}

impl EigenProblem {
    /// The Oseen pencil: `M̃ = diag(0, 0, −M)`.
    pub fn from_system(sys: &SparseSystem, shift: c64, nev: usize) -> Self {
        EigenProblem {
            k: sys.global_matrix(),
            mass: sys.m.scale(-1.0),
            mass_offset: sys.u_offset(),
            shift,
            nev,
            border: Some(sys.border()),
        }
    }

    pub fn dim(&self) -> usize {
        self.k.nrows
    }

    /// `M̃` as a full-size matrix.
    pub fn mass_matrix(&self) -> Csr {
        let n = self.dim();
        let mut coo = Coo::new(n, n);
        coo.push_block(self.mass_offset, self.mass_offset, &self.mass, 1.0);
        coo.to_csr()
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.k.ncols != n {
            return Err(Error::InvalidArgument("K must be square".into()));
        }
        if self.mass.nrows != self.mass.ncols || self.mass_offset + self.mass.nrows > n {
            return Err(Error::InvalidArgument("mass block does not fit into K".into()));
        }
        if self.nev == 0 {
            return Err(Error::InvalidArgument("nev must be at least 1".into()));
        }
        if !(self.shift.re.is_finite() && self.shift.im.is_finite()) {
            return Err(Error::InvalidArgument(format!("shift {} is not finite", self.shift)));
        }
        Ok(())
    }

    /// `‖K x − λ M̃ x‖ / ‖x‖`.
    pub fn residual(&self, lambda: c64, x: &[c64]) -> f64 {
        let mut r = self.k.matvec_c(x);
        let off = self.mass_offset;
        let mx = self.mass.matvec_c(&x[off..off + self.mass.nrows]);
        for (i, v) in mx.into_iter().enumerate() {
            r[off + i] -= lambda * v;
        }
        norm_c(&r) / norm_c(x)
    }
}

fn norm_c(x: &[c64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// An eigenpair of a generic [`EigenProblem`].
#[derive(Debug, Clone)]
pub struct RawPair {
    pub lambda: c64,
    pub x: Vec<c64>,
    pub residual: f64,
}

/// An eigenpair of the Oseen pencil split into its blocks.
#[derive(Debug, Clone, Serialize)]
pub struct EigenPair {
    #[serde(serialize_with = "serialize_c64")]
    pub lambda: c64,
    #[serde(skip)]
    pub sigma_coeffs: Vec<c64>,
    #[serde(skip)]
    pub multiplier: c64,
    #[serde(skip)]
    pub u_coeffs: Vec<c64>,
    pub residual: f64,
}

pub(crate) fn serialize_c64<S: serde::Serializer>(z: &c64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&z.re)?;
    t.serialize_element(&z.im)?;
    t.end()
}

/// Sorts by modulus, then by imaginary part.
pub fn eigenvalue_order(a: &c64, b: &c64) -> std::cmp::Ordering {
    a.norm()
        .partial_cmp(&b.norm())
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
}

/// Eigenpairs nearest to `problem.shift`, sorted by `|λ|` then `Im λ`.
pub fn solve_shift_invert(problem: &EigenProblem, opts: &ArnoldiOptions) -> Result<Vec<RawPair>> {
    problem.validate()?;
    let n = problem.dim();
    let full_mass = problem.mass_matrix();
    let lu = match problem.border {
        Some(b) => ShiftedLu::with_border(&problem.k, &full_mass, -problem.shift, b)?,
        None => ShiftedLu::new(&problem.k, &full_mass, -problem.shift)?,
    };
    lu::verify_factorization(&lu, &problem.k, &full_mass, -problem.shift)?;
    let off = problem.mass_offset;
    let na = problem.mass.nrows;
    let lift = |y: &[c64]| {
        let my = problem.mass.matvec_c(y);
        let mut rhs = vec![c64::new(0.0, 0.0); n];
        rhs[off..off + na].copy_from_slice(&my);
        lu.solve(&mut rhs);
        rhs
    };
    let op = |y: &[c64]| lift(y)[off..off + na].to_vec();
    let ritz = arnoldi::largest_magnitude(na, problem.nev, op, opts)?;
    let mut pairs: Vec<RawPair> = ritz
        .into_iter()
        .map(|rp| {
            let lambda = problem.shift + rp.theta.inv();
            let mut x = lift(&rp.vector);
            let s = norm_c(&x);
            x.iter_mut().for_each(|v| *v /= s);
            let residual = problem.residual(lambda, &x);
            RawPair { lambda, x, residual }
        })
        .collect();
    if pairs.iter().any(|p| !p.residual.is_finite()) {
        return Err(Error::LinearAlgebra("non-finite eigenpair residual".into()));
    }
    pairs.sort_by(|a, b| eigenvalue_order(&a.lambda, &b.lambda));
    Ok(pairs)
}

/// Shift-invert solve of the Oseen pencil of `sys`.
pub fn solve_oseen(sys: &SparseSystem, shift: c64, nev: usize, opts: &ArnoldiOptions) -> Result<Vec<EigenPair>> {
    let problem = EigenProblem::from_system(sys, shift, nev);
    let raw = solve_shift_invert(&problem, opts)?;
    Ok(raw
        .into_iter()
        .map(|p| EigenPair {
            lambda: p.lambda,
            sigma_coeffs: p.x[..sys.n_sigma].to_vec(),
            multiplier: p.x[sys.n_sigma],
            u_coeffs: p.x[sys.u_offset()..].to_vec(),
            residual: p.residual,
        })
        .collect())
}

/// Largest matrix size accepted by the dense reference solver.
pub const DENSE_LIMIT: usize = 2000;

/// All finite eigenvalues of the pencil `(K, M̃)` from a dense QZ factorization,
/// sorted by `|λ|` then `Im λ`.
pub fn dense_eigenvalues(k: &Csr, m: &Csr) -> Result<Vec<c64>> {
    let n = k.nrows;
    if n > DENSE_LIMIT {
        return Err(Error::InvalidArgument(format!("dense solver limited to n ≤ {DENSE_LIMIT}, got {n}")));
    }
    let kd = k.to_dense();
    let md = m.to_dense();
    let a = Mat::<f64>::from_fn(n, n, |i, j| kd[i][j]);
    let b = Mat::<f64>::from_fn(n, n, |i, j| md[i][j]);
    qz_finite(a, b)
}

fn qz_finite(a: Mat<f64>, b: Mat<f64>) -> Result<Vec<c64>> {
    let n = a.nrows();
    let gevd = GeneralizedEigen::new_from_real(a.as_ref(), b.as_ref())
        .map_err(|e| Error::LinearAlgebra(format!("QZ failed: {e:?}")))?;
    let sa = gevd.S_a();
    let sb = gevd.S_b();
    let (sa, sb) = (sa.column_vector(), sb.column_vector());
    let mut out: Vec<c64> = (0..n)
        .filter_map(|i| {
            let (alpha, beta) = (sa[i], sb[i]);
            if beta.norm() <= 1e-10 * alpha.norm() || beta.norm() == 0.0 {
                None
            } else {
                Some(alpha / beta)
            }
        })
        .collect();
    out.sort_by(eigenvalue_order);
    Ok(out)
}

/// All finite eigenvalues of `K x = λ M̃ x` where `M̃` is zero outside the
/// block `mass` at `(offset, offset)` and `K` is nonsingular. With `W` the
/// restriction of `K⁻¹` to that block (from a dense LU), the finite eigenvalues
/// are those of `y = λ W mass y`; QZ runs on `(I, W mass)`, which is free of the
/// infinite eigenvalues that make QZ on the full pencil slow.
pub fn dense_condensed_eigenvalues(k: &Csr, mass: &Csr, offset: usize) -> Result<Vec<c64>> {
    let n = k.nrows;
    let na = mass.nrows;
    if n > DENSE_LIMIT {
        return Err(Error::InvalidArgument(format!("dense solver limited to n ≤ {DENSE_LIMIT}, got {n}")));
    }
    if k.ncols != n || mass.ncols != na || offset + na > n {
        return Err(Error::InvalidArgument("mass block does not fit the matrix".into()));
    }
    let kd = k.to_dense();
    let kk = Mat::<f64>::from_fn(n, n, |i, j| kd[i][j]);
    let md = mass.to_dense();
    let m = Mat::<f64>::from_fn(na, na, |i, j| md[i][j]);
    // columns of K⁻¹ Pᵀ mass
    let rhs =
        Mat::<f64>::from_fn(n, na, |i, j| if (offset..offset + na).contains(&i) { m[(i - offset, j)] } else { 0.0 });
    let x = kk.partial_piv_lu().solve(&rhs);
    let residual = (&kk * &x - &rhs).norm_max();
    if !residual.is_finite() || residual > 1e-8 * rhs.norm_max() * (1.0 + x.norm_max() * kk.norm_max()) {
        return Err(Error::Singular("dense reference needs a nonsingular K".into()));
    }
    let w = Mat::<f64>::from_fn(na, na, |i, j| x[(offset + i, j)]);
    qz_finite(Mat::<f64>::identity(na, na), w)
}

/// Dense reference eigenvalues of the Oseen pencil of `sys`.
pub fn dense_oseen_eigenvalues(sys: &SparseSystem) -> Result<Vec<c64>> {
    dense_condensed_eigenvalues(&sys.global_matrix(), &sys.m.scale(-1.0), sys.u_offset())
}

/// Reusable factorization of the saddle-point matrix for source problems.
pub struct SourceSolver {
    k: Csr,
    lu: ShiftedLu,
    n_sigma: usize,
    n_u: usize,
}

impl SourceSolver {
    pub fn new(sys: &SparseSystem) -> Result<Self> {
        let k = sys.global_matrix();
        let zero = Csr::zeros(k.nrows, k.ncols);
        let lu = ShiftedLu::with_border(&k, &zero, c64::new(0.0, 0.0), sys.border())?;
        lu::verify_factorization(&lu, &k, &zero, c64::new(0.0, 0.0))?;
        Ok(SourceSolver { k, lu, n_sigma: sys.n_sigma, n_u: sys.n_u })
    }

    /// Solves with velocity right-hand side `rhs` (e.g. `−∫ f·v`), returning `(σ, u)`.
    pub fn solve(&self, rhs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if rhs.len() != self.n_u {
            return Err(Error::InvalidArgument(format!(
                "right-hand side has length {}, expected {}",
                rhs.len(),
                self.n_u
            )));
        }
        let n = self.k.nrows;
        let mut b = vec![0.0; n];
        b[self.n_sigma + 1..].copy_from_slice(rhs);
        let mut x = b.clone();
        self.lu.solve_real(&mut x, false)?;
        let r = self.k.matvec(&x);
        let res: f64 = r.iter().zip(&b).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
        let bn: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if res > 1e-10 * bn.max(f64::MIN_POSITIVE) && bn > 0.0 {
            return Err(Error::Singular(format!("source solve residual {:.3e} relative", res / bn)));
        }
        Ok((x[..self.n_sigma].to_vec(), x[self.n_sigma + 1..].to_vec()))
    }

    /// Discrete solution operator on velocity coefficient vectors: `f ↦ u`.
    pub fn apply_solution_operator(&self, m: &Csr, f: &[f64]) -> Result<Vec<f64>> {
        let rhs: Vec<f64> = m.matvec(f).into_iter().map(|v| -v).collect();
        Ok(self.solve(&rhs)?.1)
    }
}

/// One-shot source solve.
pub fn solve_source(sys: &SparseSystem, rhs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    SourceSolver::new(sys)?.solve(rhs)
}

/// Greedy nearest-neighbour matching of `λ` against `conj(λ*)` over the common
/// prefix; returns the largest matched distance.
pub fn spectrum_adjoint_check(primal: &[c64], adjoint: &[c64]) -> f64 {
    let len = primal.len().min(adjoint.len());
    let mut used = vec![false; len];
    let mut worst: f64 = 0.0;
    for lam in &primal[..len] {
        let (best, dist) = adjoint[..len]
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, mu)| (j, (lam - mu.conj()).norm()))
            .fold((usize::MAX, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        if best != usize::MAX {
            used[best] = true;
            worst = worst.max(dist);
        }
    }
    worst
}
