//! Structured conforming triangulations with globally oriented edges.
//!
//! Local edge `i` of a cell is the edge opposite local vertex `i`; it is
//! traversed counterclockwise from local vertex `(i+1)%3` to `(i+2)%3`. The
//! global direction of an edge runs from its lower to its higher vertex index,
//! and `edge_signs[c][i]` is `+1` when the local traversal agrees with it.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Square,
    Lshape,
}

impl DomainKind {
    pub fn area(self) -> f64 {
        match self {
            DomainKind::Square => 1.0,
            DomainKind::Lshape => 3.0,
        }
    }
}

impl FromStr for DomainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "square" => Ok(DomainKind::Square),
            "lshape" | "l-shape" | "l" => Ok(DomainKind::Lshape),
            other => Err(Error::Config(format!("unknown domain '{other}'"))),
        }
    }
}

/// Orientation of the diagonal splitting each grid square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagonalPattern {
    /// Lower-left to upper-right.
    #[default]
    Right,
    /// Lower-right to upper-left.
    Left,
    /// Alternating in a checkerboard fashion.
    Alternating,
}

impl FromStr for DiagonalPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "right" => Ok(DiagonalPattern::Right),
            "left" => Ok(DiagonalPattern::Left),
            "alternating" | "alt" => Ok(DiagonalPattern::Alternating),
            other => Err(Error::Config(format!("unknown diagonal pattern '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub cells: Vec<[usize; 3]>,
    /// Vertex pairs `(lo, hi)` with `lo < hi`.
    pub edges: Vec<[usize; 2]>,
    pub cell_edges: Vec<[usize; 3]>,
    pub edge_signs: Vec<[i8; 3]>,
    /// Incident cells per edge; the second slot is `None` on the boundary.
    pub edge_cells: Vec<[Option<usize>; 2]>,
    pub boundary_edges: Vec<bool>,
    /// Largest cell diameter (longest edge; equals the circumdiameter of the
    /// right triangles produced by the generators).
    pub h_max: f64,
    pub domain: DomainKind,
}

impl Mesh {
    /// Structured mesh of `(0,1)^2` with `N` squares per side.
    pub fn build_square(n: usize, pattern: DiagonalPattern) -> Result<Mesh> {
        if n == 0 {
            return Err(Error::InvalidArgument("square mesh requires N >= 1".into()));
        }
        Ok(grid_mesh(n, [0.0, 0.0], 1.0, pattern, |_, _| true, DomainKind::Square))
    }

    /// Structured mesh of `(-1,1)^2 \ (-1,0]^2`; `N` squares per side of the
    /// bounding box, so `(0,0)` is a vertex when `N` is even.
    pub fn build_lshape(n: usize, pattern: DiagonalPattern) -> Result<Mesh> {
        if n == 0 || n % 2 != 0 {
            return Err(Error::InvalidArgument(format!("L-shape mesh requires a positive even N, got {n}")));
        }
        let half = n / 2;
        Ok(grid_mesh(n, [-1.0, -1.0], 2.0, pattern, move |i, j| !(i < half && j < half), DomainKind::Lshape))
    }

    pub fn build(domain: DomainKind, n: usize, pattern: DiagonalPattern) -> Result<Mesh> {
        match domain {
            DomainKind::Square => Self::build_square(n, pattern),
            DomainKind::Lshape => Self::build_lshape(n, pattern),
        }
    }

    /// Splits every triangle into four congruent children.
    pub fn uniform_refine(&self) -> Mesh {
        let nv = self.vertices.len();
        let mut vertices = self.vertices.clone();
        for e in &self.edges {
            let (a, b) = (self.vertices[e[0]], self.vertices[e[1]]);
            vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
        }
        let mut cells = Vec::with_capacity(4 * self.cells.len());
        for (c, tri) in self.cells.iter().enumerate() {
            // midpoint of local edge i sits opposite vertex i
            let m = |i: usize| nv + self.cell_edges[c][i];
            let [a, b, cc] = *tri;
            let (m_bc, m_ca, m_ab) = (m(0), m(1), m(2));
            cells.push([a, m_ab, m_ca]);
            cells.push([m_ab, b, m_bc]);
            cells.push([m_ca, m_bc, cc]);
            cells.push([m_ab, m_bc, m_ca]);
        }
        from_cells(vertices, cells, self.domain)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn cell_coords(&self, c: usize) -> [[f64; 2]; 3] {
        let t = self.cells[c];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn signed_area(&self, c: usize) -> f64 {
        let [p0, p1, p2] = self.cell_coords(c);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.signed_area(c)).sum()
    }

    /// Checks the structural invariants; returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        for c in 0..self.n_cells() {
            if self.signed_area(c) <= 0.0 {
                return fail(format!("cell {c} has non-positive signed area"));
            }
        }
        let mut count = vec![0usize; self.n_edges()];
        let mut sign_sum = vec![0i32; self.n_edges()];
        for (c, edges) in self.cell_edges.iter().enumerate() {
            for i in 0..3 {
                count[edges[i]] += 1;
                sign_sum[edges[i]] += i32::from(self.edge_signs[c][i]);
            }
        }
        for e in 0..self.n_edges() {
            let expected = if self.boundary_edges[e] { 1 } else { 2 };
            if count[e] != expected {
                return fail(format!("edge {e} has {} incident cells", count[e]));
            }
            if !self.boundary_edges[e] && sign_sum[e] != 0 {
                return fail(format!("edge {e} has inconsistent orientation"));
            }
        }
        let area = self.total_area();
        let want = self.domain.area();
        if ((area - want) / want).abs() > 1e-12 {
            return fail(format!("total area {area} differs from {want}"));
        }
        let euler = self.n_vertices() as i64 - self.n_edges() as i64 + self.n_cells() as i64;
        if euler != 1 {
            return fail(format!("Euler characteristic V - E + F = {euler}"));
        }
        Ok(())
    }

    /// Plain-text export: a header `V E C`, then `V` coordinate rows, then `C`
    /// rows of vertex indices. Floats use 17 significant digits.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {}", self.n_vertices(), self.n_edges(), self.n_cells())?;
        for v in &self.vertices {
            writeln!(w, "{:.16e} {:.16e}", v[0], v[1])?;
        }
        for t in &self.cells {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    /// Reads the format written by [`Mesh::write_text`].
    pub fn read_text<R: BufRead>(r: R, domain: DomainKind) -> Result<Mesh> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines.next().ok_or_else(|| Error::Parse("unexpected end of mesh file".into()))?.map_err(Error::from)
        };
        let header = next()?;
        let counts: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::Parse(format!("bad header '{header}'"))))
            .collect::<Result<_>>()?;
        if counts.len() != 3 {
            return Err(Error::Parse(format!("bad header '{header}'")));
        }
        let mut vertices = Vec::with_capacity(counts[0]);
        for _ in 0..counts[0] {
            let line = next()?;
            let xy: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| Error::Parse(format!("bad vertex '{line}'"))))
                .collect::<Result<_>>()?;
            vertices.push([xy[0], xy[1]]);
        }
        let mut cells = Vec::with_capacity(counts[2]);
        for _ in 0..counts[2] {
            let line = next()?;
            let idx: Vec<usize> = line
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| Error::Parse(format!("bad cell '{line}'"))))
                .collect::<Result<_>>()?;
            cells.push([idx[0], idx[1], idx[2]]);
        }
        let mesh = from_cells(vertices, cells, domain);
        if mesh.n_edges() != counts[1] {
            return Err(Error::Parse("edge count in header does not match cells".into()));
        }
        Ok(mesh)
    }
}

fn grid_mesh(
    n: usize,
    origin: [f64; 2],
    width: f64,
    pattern: DiagonalPattern,
    keep: impl Fn(usize, usize) -> bool,
    domain: DomainKind,
) -> Mesh {
    let stride = n + 1;
    let mut id = vec![usize::MAX; stride * stride];
    let mut vertices = Vec::new();
    // number only the vertices touched by a kept square, in grid order
    for j in 0..=n {
        for i in 0..=n {
            let used = [(i, j), (i.wrapping_sub(1), j), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j.wrapping_sub(1))]
                .iter()
                .any(|&(si, sj)| si < n && sj < n && keep(si, sj));
            if used {
                id[j * stride + i] = vertices.len();
                vertices.push([origin[0] + width * i as f64 / n as f64, origin[1] + width * j as f64 / n as f64]);
            }
        }
    }
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            if !keep(i, j) {
                continue;
            }
            let v00 = id[j * stride + i];
            let v10 = id[j * stride + i + 1];
            let v01 = id[(j + 1) * stride + i];
            let v11 = id[(j + 1) * stride + i + 1];
            let right = match pattern {
                DiagonalPattern::Right => true,
                DiagonalPattern::Left => false,
                DiagonalPattern::Alternating => (i + j) % 2 == 0,
            };
            if right {
                cells.push([v00, v10, v11]);
                cells.push([v00, v11, v01]);
            } else {
                cells.push([v00, v10, v01]);
                cells.push([v10, v11, v01]);
            }
        }
    }
    from_cells(vertices, cells, domain)
}

fn from_cells(vertices: Vec<[f64; 2]>, cells: Vec<[usize; 3]>, domain: DomainKind) -> Mesh {
    let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * cells.len() / 2 + 8);
    let mut edges = Vec::new();
    let mut edge_cells: Vec<[Option<usize>; 2]> = Vec::new();
    let mut cell_edges = Vec::with_capacity(cells.len());
    let mut edge_signs = Vec::with_capacity(cells.len());
    for (c, tri) in cells.iter().enumerate() {
        let mut ce = [0usize; 3];
        let mut cs = [0i8; 3];
        for i in 0..3 {
            let a = tri[(i + 1) % 3];
            let b = tri[(i + 2) % 3];
            let key = (a.min(b), a.max(b));
            let e = *lookup.entry(key).or_insert_with(|| {
                edges.push([key.0, key.1]);
                edge_cells.push([None, None]);
                edges.len() - 1
            });
            if edge_cells[e][0].is_none() {
                edge_cells[e][0] = Some(c);
            } else {
                edge_cells[e][1] = Some(c);
            }
            ce[i] = e;
            cs[i] = if a < b { 1 } else { -1 };
        }
        cell_edges.push(ce);
        edge_signs.push(cs);
    }
    let boundary_edges = edge_cells.iter().map(|ec| ec[1].is_none()).collect();
    let h_max = edges
        .iter()
        .map(|e| {
            let (p, q) = (vertices[e[0]], vertices[e[1]]);
            (p[0] - q[0]).hypot(p[1] - q[1])
        })
        .fold(0.0, f64::max);
    Mesh { vertices, cells, edges, cell_edges, edge_signs, edge_cells, boundary_edges, h_max, domain }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_square() {
        let m = Mesh::build_square(1, DiagonalPattern::Right).unwrap();
        assert_eq!(m.n_cells(), 2);
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_edges(), 5);
        assert!((m.signed_area(0) - 0.5).abs() < 1e-15);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
        m.check_invariants().unwrap();
    }

    #[test]
    fn square_counts_and_size() {
        let m = Mesh::build_square(20, DiagonalPattern::Right).unwrap();
        assert_eq!(m.n_cells(), 800);
        assert_eq!(m.n_vertices(), 441);
        let m4 = Mesh::build_square(4, DiagonalPattern::Right).unwrap();
        assert!((m4.h_max - 2f64.sqrt() / 4.0).abs() < 1e-15);
        for p in [DiagonalPattern::Left, DiagonalPattern::Alternating] {
            Mesh::build_square(5, p).unwrap().check_invariants().unwrap();
        }
    }

    #[test]
    fn rejects_bad_resolution() {
        assert!(Mesh::build_square(0, DiagonalPattern::Right).is_err());
        assert!(Mesh::build_lshape(3, DiagonalPattern::Right).is_err());
        assert!(Mesh::build_lshape(0, DiagonalPattern::Right).is_err());
    }

    #[test]
    fn lshape_counts_and_corner() {
        let m = Mesh::build_lshape(2, DiagonalPattern::Right).unwrap();
        assert_eq!(m.n_cells(), 6);
        assert!((m.total_area() - 3.0).abs() < 1e-14);
        m.check_invariants().unwrap();
        let big = Mesh::build_lshape(64, DiagonalPattern::Right).unwrap();
        assert_eq!(big.n_cells(), 6144);
        for n in [2, 4, 10] {
            let m = Mesh::build_lshape(n, DiagonalPattern::Right).unwrap();
            let corners = m.vertices.iter().filter(|v| v[0] == 0.0 && v[1] == 0.0).count();
            assert_eq!(corners, 1);
            m.check_invariants().unwrap();
        }
    }

    #[test]
    fn refinement() {
        let m = Mesh::build_square(1, DiagonalPattern::Right).unwrap();
        let r = m.uniform_refine();
        assert_eq!(r.n_cells(), 8);
        assert!((r.total_area() - m.total_area()).abs() < 1e-12);
        assert!((r.h_max - 0.5 * m.h_max).abs() < 1e-15);
        let nb = |m: &Mesh| m.boundary_edges.iter().filter(|&&b| b).count();
        assert_eq!(nb(&r), 2 * nb(&m));
        r.check_invariants().unwrap();
        let l = Mesh::build_lshape(4, DiagonalPattern::Right).unwrap().uniform_refine();
        l.check_invariants().unwrap();
    }

    #[test]
    fn deterministic_connectivity() {
        let a = Mesh::build_lshape(8, DiagonalPattern::Alternating).unwrap();
        let b = Mesh::build_lshape(8, DiagonalPattern::Alternating).unwrap();
        assert_eq!(a.cells, b.cells);
        assert_eq!(a.edges, b.edges);
        assert_eq!(a.edge_signs, b.edge_signs);
    }

    #[test]
    fn text_round_trip() {
        let m = Mesh::build_lshape(4, DiagonalPattern::Right).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let back = Mesh::read_text(buf.as_slice(), DomainKind::Lshape).unwrap();
        assert_eq!(back.cells, m.cells);
        assert_eq!(back.vertices, m.vertices);
    }
}
