//! Compressed sparse row matrices, deterministic COO assembly and
//! MatrixMarket export.

use std::io::Write;

use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};

/// Coordinate-format accumulator. Duplicates are summed on compression.
#[derive(Debug, Clone, Default)]
pub struct Coo {
    pub nrows: usize,
    pub ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Coo {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Coo { nrows, ncols, entries: Vec::new() }
    }

    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.nrows && c < self.ncols);
        self.entries.push((r, c, v));
    }

    /// Appends all entries of `m` shifted by `(r0, c0)`, optionally scaled.
    pub fn push_block(&mut self, r0: usize, c0: usize, m: &Csr, scale: f64) {
        for (r, c, v) in m.iter() {
            self.push(r0 + r, c0 + c, scale * v);
        }
    }

    /// Appends `m` transposed at offset `(r0, c0)`.
    pub fn push_block_transposed(&mut self, r0: usize, c0: usize, m: &Csr, scale: f64) {
        for (r, c, v) in m.iter() {
            self.push(r0 + c, c0 + r, scale * v);
        }
    }

    pub fn extend(&mut self, other: Coo) {
        self.entries.extend(other.entries);
    }

    /// Sorts by `(row, col)` and sums duplicates; the result is independent of push order
    /// up to floating-point summation order within a duplicate group, which is fixed by a
    /// stable sort.
    pub fn to_csr(mut self) -> Csr {
        self.entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut data: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *data.last_mut().expect("nonempty") += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.nrows {
            indptr[i + 1] += indptr[i];
        }
        Csr { nrows: self.nrows, ncols: self.ncols, indptr, indices, data }
    }
}

/// Compressed sparse row matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Csr { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), data: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        let mut coo = Coo::new(n, n);
        for i in 0..n {
            coo.push(i, i, 1.0);
        }
        coo.to_csr()
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows)
            .flat_map(move |r| (self.indptr[r]..self.indptr[r + 1]).map(move |p| (r, self.indices[p], self.data[p])))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let cols = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        match cols.binary_search(&c) {
            Ok(p) => self.data[self.indptr[r] + p],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| (self.indptr[r]..self.indptr[r + 1]).map(|p| self.data[p] * x[self.indices[p]]).sum())
            .collect()
    }

    pub fn matvec_c(&self, x: &[crate::c64]) -> Vec<crate::c64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| (self.indptr[r]..self.indptr[r + 1]).map(|p| x[self.indices[p]] * self.data[p]).sum())
            .collect()
    }

    /// `Aᵀ x`.
    pub fn matvec_transposed(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (r, c, v) in self.iter() {
            y[c] += v * x[r];
        }
        y
    }

    pub fn transpose(&self) -> Csr {
        let mut coo = Coo::new(self.ncols, self.nrows);
        for (r, c, v) in self.iter() {
            coo.push(c, r, v);
        }
        coo.to_csr()
    }

    pub fn scale(&self, s: f64) -> Csr {
        Csr { data: self.data.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Csr, s: f64) -> Csr {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut coo = Coo::new(self.nrows, self.ncols);
        coo.push_block(0, 0, self, 1.0);
        coo.push_block(0, 0, other, s);
        coo.to_csr()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest entrywise difference `max |A_ij − B_ij|`.
    pub fn max_abs_diff(&self, other: &Csr) -> f64 {
        self.add_scaled(other, -1.0).max_abs()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.iter() {
            d[r][c] += v;
        }
        d
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let triplets: Vec<Triplet<usize, usize, f64>> = self.iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets)
            .map_err(|e| Error::LinearAlgebra(format!("sparse conversion failed: {e:?}")))
    }

    /// Writes the matrix in MatrixMarket coordinate real general format (1-based).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (r, c, v) in self.iter() {
            writeln!(w, "{} {} {:.16e}", r + 1, c + 1, v)?;
        }
        Ok(())
    }

    pub fn read_matrix_market<R: std::io::BufRead>(r: R) -> Result<Csr> {
        let mut lines = r.lines().filter(|l| !matches!(l, Ok(s) if s.starts_with('%')));
        let header = lines.next().ok_or_else(|| Error::Parse("empty MatrixMarket file".into()))??;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad size line '{header}'"))))
            .collect::<Result<_>>()?;
        if dims.len() != 3 {
            return Err(Error::Parse(format!("bad size line '{header}'")));
        }
        let mut coo = Coo::new(dims[0], dims[1]);
        for line in lines {
            let line = line?;
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.is_empty() {
                continue;
            }
            let parse_err = || Error::Parse(format!("bad entry '{line}'"));
            if t.len() != 3 {
                return Err(parse_err());
            }
            let r: usize = t[0].parse().map_err(|_| parse_err())?;
            let c: usize = t[1].parse().map_err(|_| parse_err())?;
            let v: f64 = t[2].parse().map_err(|_| parse_err())?;
            if r == 0 || c == 0 || r > dims[0] || c > dims[1] {
                return Err(parse_err());
            }
            coo.push(r - 1, c - 1, v);
        }
        Ok(coo.to_csr())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_sorted() {
        let mut coo = Coo::new(2, 3);
        coo.push(1, 2, 1.0);
        coo.push(0, 1, 2.0);
        coo.push(1, 2, 0.5);
        coo.push(1, 0, -1.0);
        let m = coo.to_csr();
        assert_eq!(m.indptr, vec![0, 1, 3]);
        assert_eq!(m.indices, vec![1, 0, 2]);
        assert_eq!(m.data, vec![2.0, -1.0, 1.5]);
        assert_eq!(m.get(1, 2), 1.5);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn transpose_and_matvec() {
        let mut coo = Coo::new(2, 3);
        coo.push(0, 0, 1.0);
        coo.push(0, 2, 2.0);
        coo.push(1, 1, 3.0);
        let m = coo.to_csr();
        let x = [1.0, 2.0, 3.0];
        assert_eq!(m.matvec(&x), vec![7.0, 6.0]);
        let y = [1.0, -1.0];
        assert_eq!(m.matvec_transposed(&y), m.transpose().matvec(&y));
    }

    #[test]
    fn matrix_market_round_trip() {
        let mut coo = Coo::new(3, 2);
        coo.push(0, 1, 0.1);
        coo.push(2, 0, -3.25e-7);
        let m = coo.to_csr();
        let mut buf = Vec::new();
        m.write_matrix_market(&mut buf).unwrap();
        let back = Csr::read_matrix_market(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, m);
    }
}
