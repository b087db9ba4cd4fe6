//! Sparse LU factorization of `K + s M` for real or complex shifts.
//!
//! A single dense row/column (the trace multiplier) would make the fill-reducing
//! ordering useless, so it can be split off as a border: with `b` the border
//! index, `ĝ` its off-diagonal row and `K₀` the rest,
//!
//! ```text
//! [K₀  ĝ] [x]   [r ]
//! [ĝᵀ  0] [μ] = [r_b]
//! ```
//!
//! is solved through the factorization of `K₁ = K₀ + α e_p e_pᵀ`, which is
//! nonsingular when `K₀` has a one-dimensional kernel not orthogonal to `e_p`.
//! Writing `x = K₁⁻¹(r + α x_p e_p − μ ĝ)` leaves a 2×2 system for `(x_p, μ)`.

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat};

use crate::c64;
use crate::error::{Error, Result};
use crate::sparse::Csr;

/// A dense row/column of the matrix to be handled outside the sparse factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Border {
    /// Index of the bordering row and column; its diagonal entry must vanish.
    pub index: usize,
    /// Index of the diagonal entry regularizing the remaining block.
    pub pin: usize,
}

enum Factor {
    Real(Lu<usize, f64>),
    Complex(Lu<usize, c64>),
}

struct Plain {
    n: usize,
    factor: Factor,
}

impl Plain {
    fn new(n: usize, triplets: Vec<(usize, usize, c64)>, complex: bool) -> Result<Self> {
        faer::set_global_parallelism(faer::Par::Seq);
        let factor = if complex {
            let t: Vec<Triplet<usize, usize, c64>> =
                triplets.into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
            let mat = SparseColMat::<usize, c64>::try_new_from_triplets(n, n, &t)
                .map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
            Factor::Complex(mat.sp_lu().map_err(|e| Error::Singular(format!("{e:?}")))?)
        } else {
            let t: Vec<Triplet<usize, usize, f64>> =
                triplets.into_iter().map(|(r, c, v)| Triplet::new(r, c, v.re)).collect();
            let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &t)
                .map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
            Factor::Real(mat.sp_lu().map_err(|e| Error::Singular(format!("{e:?}")))?)
        };
        Ok(Plain { n, factor })
    }

    fn solve(&self, rhs: &mut [c64], transpose: bool) {
        assert_eq!(rhs.len(), self.n);
        match &self.factor {
            Factor::Real(lu) => {
                let mut b = Mat::<f64>::from_fn(self.n, 2, |i, j| if j == 0 { rhs[i].re } else { rhs[i].im });
                if transpose {
                    lu.solve_transpose_in_place_with_conj(Conj::No, b.as_mut());
                } else {
                    lu.solve_in_place_with_conj(Conj::No, b.as_mut());
                }
                for (i, r) in rhs.iter_mut().enumerate() {
                    *r = c64::new(b[(i, 0)], b[(i, 1)]);
                }
            }
            Factor::Complex(lu) => {
                let mut b = Mat::<c64>::from_fn(self.n, 1, |i, _| rhs[i]);
                if transpose {
                    lu.solve_transpose_in_place_with_conj(Conj::No, b.as_mut());
                } else {
                    lu.solve_in_place_with_conj(Conj::No, b.as_mut());
                }
                for (i, r) in rhs.iter_mut().enumerate() {
                    *r = b[(i, 0)];
                }
            }
        }
    }
}

/// Precomputed border data for one orientation (plain or transposed).
struct BorderSolve {
    /// `K₁⁻¹ (α e_p)`
    y1: Vec<c64>,
    /// `K₁⁻¹ ĝ`
    y2: Vec<c64>,
    g_y1: c64,
    g_y2: c64,
}

struct BorderData {
    border: Border,
    g: Vec<(usize, f64)>,
    plain: BorderSolve,
    transposed: BorderSolve,
}

/// Factorization of a real sparse matrix plus a complex multiple of another one.
pub struct ShiftedLu {
    base: Plain,
    border: Option<BorderData>,
}

impl ShiftedLu {
    /// Factors `k + shift * m`. Factorizations run sequentially; independent
    /// problems can be solved on separate threads.
    pub fn new(k: &Csr, m: &Csr, shift: c64) -> Result<Self> {
        Self::build(k, m, shift, None)
    }

    /// Factors `k + shift * m` with `border` split off.
    pub fn with_border(k: &Csr, m: &Csr, shift: c64, border: Border) -> Result<Self> {
        Self::build(k, m, shift, Some(border))
    }

    fn build(k: &Csr, m: &Csr, shift: c64, border: Option<Border>) -> Result<Self> {
        let n = k.nrows;
        if k.ncols != n || m.nrows != n || m.ncols != n {
            return Err(Error::InvalidArgument("shifted matrix must be square".into()));
        }
        let complex = shift.im != 0.0;
        let mut triplets: Vec<(usize, usize, c64)> = k.iter().map(|(r, c, v)| (r, c, c64::new(v, 0.0))).collect();
        triplets.extend(m.iter().map(|(r, c, v)| (r, c, shift * v)));
        let Some(border) = border else {
            return Ok(ShiftedLu { base: Plain::new(n, triplets, complex)?, border: None });
        };
        let Border { index: b, pin: p } = border;
        if b >= n || p >= n || b == p {
            return Err(Error::InvalidArgument(format!("invalid border {border:?} for size {n}")));
        }
        if m.iter().any(|(r, c, v)| (r == b || c == b) && v != 0.0) {
            return Err(Error::InvalidArgument("the shifted part must not touch the border".into()));
        }
        let mut row = Vec::new();
        let mut col = Vec::new();
        for (r, c, v) in k.iter() {
            if r == b && c == b && v != 0.0 {
                return Err(Error::InvalidArgument("border diagonal entry must vanish".into()));
            }
            if r == b && c != b {
                row.push((c, v));
            } else if c == b && r != b {
                col.push((r, v));
            }
        }
        row.sort_by_key(|e| e.0);
        col.sort_by_key(|e| e.0);
        if row != col {
            return Err(Error::InvalidArgument("border row and column must coincide".into()));
        }
        let alpha = triplets
            .iter()
            .filter(|(r, c, _)| r == c && *r != b)
            .map(|(_, _, v)| v.norm())
            .fold(0.0, f64::max)
            .max(1.0);
        triplets.retain(|(r, c, _)| *r != b && *c != b);
        triplets.push((b, b, c64::new(1.0, 0.0)));
        triplets.push((p, p, c64::new(alpha, 0.0)));
        let base = Plain::new(n, triplets, complex)?;
        let prepare = |transpose: bool| {
            let mut y1 = vec![c64::new(0.0, 0.0); n];
            y1[p] = c64::new(alpha, 0.0);
            base.solve(&mut y1, transpose);
            let mut y2 = vec![c64::new(0.0, 0.0); n];
            for &(i, v) in &row {
                y2[i] = c64::new(v, 0.0);
            }
            base.solve(&mut y2, transpose);
            let dot = |y: &[c64]| row.iter().map(|&(i, v)| y[i] * v).sum::<c64>();
            BorderSolve { g_y1: dot(&y1), g_y2: dot(&y2), y1, y2 }
        };
        let plain = prepare(false);
        let transposed = prepare(true);
        Ok(ShiftedLu { base, border: Some(BorderData { border, g: row, plain, transposed }) })
    }

    pub fn dim(&self) -> usize {
        self.base.n
    }

    /// Solves in place for a complex right-hand side.
    pub fn solve(&self, rhs: &mut [c64]) {
        self.solve_impl(rhs, false)
    }

    /// Solves the transposed system in place.
    pub fn solve_transpose(&self, rhs: &mut [c64]) {
        self.solve_impl(rhs, true)
    }

    fn solve_impl(&self, rhs: &mut [c64], transpose: bool) {
        let Some(bd) = &self.border else {
            return self.base.solve(rhs, transpose);
        };
        let (b, p) = (bd.border.index, bd.border.pin);
        let s = if transpose { &bd.transposed } else { &bd.plain };
        let rb = rhs[b];
        rhs[b] = c64::new(0.0, 0.0);
        self.base.solve(rhs, transpose);
        let g_y0: c64 = bd.g.iter().map(|&(i, v)| rhs[i] * v).sum();
        // x_p (1 − y1_p) + μ y2_p = y0_p
        // x_p ĝᵀy1 − μ ĝᵀy2 = r_b − ĝᵀy0
        let (a11, a12, f1) = (c64::new(1.0, 0.0) - s.y1[p], s.y2[p], rhs[p]);
        let (a21, a22, f2) = (s.g_y1, -s.g_y2, rb - g_y0);
        let det = a11 * a22 - a12 * a21;
        let xp = (f1 * a22 - a12 * f2) / det;
        let mu = (a11 * f2 - a21 * f1) / det;
        for ((x, y1), y2) in rhs.iter_mut().zip(&s.y1).zip(&s.y2) {
            *x += xp * y1 - mu * y2;
        }
        rhs[b] = mu;
    }

    /// Solves a real system in place.
    pub fn solve_real(&self, rhs: &mut [f64], transpose: bool) -> Result<()> {
        let mut c: Vec<c64> = rhs.iter().map(|&v| c64::new(v, 0.0)).collect();
        self.solve_impl(&mut c, transpose);
        for (r, v) in rhs.iter_mut().zip(c) {
            *r = v.re;
        }
        if rhs.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Singular("non-finite solution".into()))
        }
    }
}

/// Checks a factorization by solving against a fixed vector and measuring the error.
pub fn verify_factorization(lu: &ShiftedLu, k: &Csr, m: &Csr, shift: c64) -> Result<()> {
    let n = lu.dim();
    let x0: Vec<c64> = (0..n).map(|i| c64::new(1.0 + (i % 7) as f64 * 0.1, 0.0)).collect();
    let mut b = k.matvec_c(&x0);
    let mb = m.matvec_c(&x0);
    for (bi, mi) in b.iter_mut().zip(&mb) {
        *bi += shift * mi;
    }
    let mut x = b.clone();
    lu.solve(&mut x);
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Singular(format!("factorization at shift {shift} produced non-finite values")));
    }
    let err = x.iter().zip(&x0).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let norm = x0.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if err > 1e-4 * norm {
        return Err(Error::Singular(format!(
            "shifted matrix is numerically singular at shift {shift} (relative error {:.2e})",
            err / norm
        )));
    }
    Ok(())
}
