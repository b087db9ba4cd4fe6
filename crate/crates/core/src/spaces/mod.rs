//! Discrete spaces: the row-wise tensor H(div) space and the discontinuous
//! vector `P_k` velocity space on a mesh.
//!
//! Global layout of the pseudostress coefficients: the scalar-vector space has
//! `n_scalar` DoFs (edge moments first, `k + 1` per edge in the global edge
//! direction, then interior moments cell by cell); tensor row `r` occupies the
//! block `r * n_scalar .. (r + 1) * n_scalar`.
//!
//! Velocity coefficients are ordered component-major: component `c`, cell `t`,
//! local monomial `i` lives at `c * n_cells * dim_pk + t * dim_pk + i`. The
//! local basis is `x̂^a ŷ^b` in reference coordinates.

mod element;

use std::sync::Arc;

pub use element::{local_edge, Family, ReferenceElement, REF_VERTICES};

use crate::error::Result;
use crate::mesh::Mesh;
use crate::polynomial::{monomial_count, Poly};
use crate::quadrature::{rule_for_degree, QuadRule};

/// Affine map `x = p0 + J x̂` of a mesh cell.
#[derive(Debug, Clone, Copy)]
pub struct CellMap {
    pub origin: [f64; 2],
    pub jac: [[f64; 2]; 2],
    pub det: f64,
}

impl CellMap {
    pub fn new(p: [[f64; 2]; 3]) -> Self {
        let jac = [[p[1][0] - p[0][0], p[2][0] - p[0][0]], [p[1][1] - p[0][1], p[2][1] - p[0][1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        CellMap { origin: p[0], jac, det }
    }

    pub fn to_physical(&self, xr: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.jac[0][0] * xr[0] + self.jac[0][1] * xr[1],
            self.origin[1] + self.jac[1][0] * xr[0] + self.jac[1][1] * xr[1],
        ]
    }

    /// Contravariant Piola push-forward `J v̂ / det J`.
    pub fn piola(&self, v: [f64; 2]) -> [f64; 2] {
        [
            (self.jac[0][0] * v[0] + self.jac[0][1] * v[1]) / self.det,
            (self.jac[1][0] * v[0] + self.jac[1][1] * v[1]) / self.det,
        ]
    }

    /// Inverse Piola pull-back `det J · J⁻¹ v`.
    pub fn piola_inverse(&self, v: [f64; 2]) -> [f64; 2] {
        // det J · J⁻¹ = adj(J)
        [self.jac[1][1] * v[0] - self.jac[0][1] * v[1], -self.jac[1][0] * v[0] + self.jac[0][0] * v[1]]
    }
}

/// Reference values of the H(div) basis and the velocity monomials at the
/// points of a quadrature rule.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub rule: &'static QuadRule,
    /// `sigma_vals[q][m]`
    pub sigma_vals: Vec<Vec<[f64; 2]>>,
    pub sigma_divs: Vec<Vec<f64>>,
    /// `u_vals[q][i]`
    pub u_vals: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SpacePair {
    pub mesh: Arc<Mesh>,
    pub element: ReferenceElement,
    pub velocity_degree: usize,
    pub n_scalar: usize,
    pub n_sigma: usize,
    pub n_u: usize,
    pub dim_pk: usize,
    /// Local-to-global scalar DoF map per cell.
    pub scalar_dofs: Vec<Vec<usize>>,
    /// Orientation factor per cell and local DoF (`±1`).
    pub scalar_signs: Vec<Vec<f64>>,
    /// `g` with `g · coeffs = ∫_Ω tr σ_h`.
    pub trace_vector: Vec<f64>,
    velocity_exponents: Vec<(usize, usize)>,
}

impl SpacePair {
    /// Builds `RT_k × P_k` or `BDM_k × P_{k-1}` on `mesh`; `degree` is the family index.
    pub fn new(mesh: Arc<Mesh>, family: Family, degree: usize) -> Result<Self> {
        let element = ReferenceElement::new(family, degree)?;
        let velocity_degree = match family {
            Family::Rt => degree,
            Family::Bdm => degree - 1,
        };
        let dim_pk = monomial_count(velocity_degree);
        let per_edge = element.dofs_per_edge;
        let n_int = element.interior_dofs;
        let n_edge_dofs = mesh.n_edges() * per_edge;
        let n_scalar = n_edge_dofs + mesh.n_cells() * n_int;

        let mut scalar_dofs = Vec::with_capacity(mesh.n_cells());
        let mut scalar_signs = Vec::with_capacity(mesh.n_cells());
        for c in 0..mesh.n_cells() {
            let mut dofs = Vec::with_capacity(element.dim());
            let mut signs = Vec::with_capacity(element.dim());
            for e in 0..3 {
                let ge = mesh.cell_edges[c][e];
                let flipped = mesh.edge_signs[c][e] < 0;
                for j in 0..per_edge {
                    dofs.push(ge * per_edge + j);
                    // reversing the edge flips the normal and maps P_j(s) to (-1)^j P_j(s)
                    let s = if !flipped {
                        1.0
                    } else if j % 2 == 0 {
                        -1.0
                    } else {
                        1.0
                    };
                    signs.push(s);
                }
            }
            for i in 0..n_int {
                dofs.push(n_edge_dofs + c * n_int + i);
                signs.push(1.0);
            }
            scalar_dofs.push(dofs);
            scalar_signs.push(signs);
        }

        let velocity_exponents = Poly::exponents(velocity_degree).collect();
        let mut space = SpacePair {
            n_sigma: 2 * n_scalar,
            n_u: 2 * mesh.n_cells() * dim_pk,
            mesh,
            element,
            velocity_degree,
            n_scalar,
            dim_pk,
            scalar_dofs,
            scalar_signs,
            trace_vector: Vec::new(),
            velocity_exponents,
        };
        space.trace_vector = space.assemble_trace_vector()?;
        Ok(space)
    }

    pub fn family(&self) -> Family {
        self.element.family
    }

    /// Total unknowns including the trace multiplier.
    pub fn n_total(&self) -> usize {
        self.n_sigma + 1 + self.n_u
    }

    pub fn cell_map(&self, c: usize) -> CellMap {
        CellMap::new(self.mesh.cell_coords(c))
    }

    pub fn sigma_index(&self, row: usize, scalar: usize) -> usize {
        row * self.n_scalar + scalar
    }

    pub fn u_index(&self, comp: usize, cell: usize, local: usize) -> usize {
        comp * self.mesh.n_cells() * self.dim_pk + cell * self.dim_pk + local
    }

    pub fn velocity_basis(&self, xr: [f64; 2]) -> Vec<f64> {
        self.velocity_exponents.iter().map(|&(a, b)| xr[0].powi(a as i32) * xr[1].powi(b as i32)).collect()
    }

    pub fn tabulate(&self, quad_degree: usize) -> Result<Tabulation> {
        let rule = rule_for_degree(quad_degree)?;
        let mut sigma_vals = Vec::with_capacity(rule.len());
        let mut sigma_divs = Vec::with_capacity(rule.len());
        let mut u_vals = Vec::with_capacity(rule.len());
        for p in &rule.points {
            sigma_vals.push(self.element.basis.iter().map(|b| b.eval(p[0], p[1])).collect());
            sigma_divs.push(self.element.divergence.iter().map(|d| d.eval(p[0], p[1])).collect());
            u_vals.push(self.velocity_basis(*p));
        }
        Ok(Tabulation { rule, sigma_vals, sigma_divs, u_vals })
    }

    fn assemble_trace_vector(&self) -> Result<Vec<f64>> {
        let tab = self.tabulate(self.element.poly_degree())?;
        let mut g = vec![0.0; self.n_sigma];
        for c in 0..self.mesh.n_cells() {
            let map = self.cell_map(c);
            for (q, w) in tab.rule.weights.iter().enumerate() {
                let wq = w * map.det.abs();
                for (m, v) in tab.sigma_vals[q].iter().enumerate() {
                    let phi = map.piola(*v);
                    let s = self.scalar_signs[c][m];
                    let gi = self.scalar_dofs[c][m];
                    // row r contributes its r-th component to the trace
                    g[self.sigma_index(0, gi)] += wq * s * phi[0];
                    g[self.sigma_index(1, gi)] += wq * s * phi[1];
                }
            }
        }
        Ok(g)
    }

    /// Physical value and row-wise divergence of `σ_h` at reference point `xr` of cell `c`.
    pub fn eval_sigma(&self, coeffs: &[f64], c: usize, xr: [f64; 2]) -> ([[f64; 2]; 2], [f64; 2]) {
        let map = self.cell_map(c);
        let mut val = [[0.0; 2]; 2];
        let mut div = [0.0; 2];
        for m in 0..self.element.dim() {
            let v = map.piola(self.element.basis[m].eval(xr[0], xr[1]));
            let d = self.element.divergence[m].eval(xr[0], xr[1]) / map.det;
            let s = self.scalar_signs[c][m];
            let gi = self.scalar_dofs[c][m];
            for r in 0..2 {
                let cf = s * coeffs[self.sigma_index(r, gi)];
                val[r][0] += cf * v[0];
                val[r][1] += cf * v[1];
                div[r] += cf * d;
            }
        }
        (val, div)
    }

    pub fn eval_u(&self, coeffs: &[f64], c: usize, xr: [f64; 2]) -> [f64; 2] {
        let basis = self.velocity_basis(xr);
        let mut out = [0.0; 2];
        for (comp, o) in out.iter_mut().enumerate() {
            *o = basis.iter().enumerate().map(|(i, b)| b * coeffs[self.u_index(comp, c, i)]).sum();
        }
        out
    }

    /// Largest coefficient of the identity interpolant, which spans the kernel of
    /// the stress blocks once the trace constraint is dropped.
    pub fn identity_pin(&self) -> usize {
        let id = self.interpolate_tensor(|_| [[1.0, 0.0], [0.0, 1.0]]);
        (0..id.len()).max_by(|&a, &b| id[a].abs().total_cmp(&id[b].abs())).unwrap_or(0)
    }

    /// Canonical interpolant of a physical tensor field (rows in the H(div) space).
    pub fn interpolate_tensor(&self, f: impl Fn([f64; 2]) -> [[f64; 2]; 2]) -> Vec<f64> {
        let mut coeffs = vec![0.0; self.n_sigma];
        for c in 0..self.mesh.n_cells() {
            let map = self.cell_map(c);
            for r in 0..2 {
                let local = self.element.functionals(|x, y| map.piola_inverse(f(map.to_physical([x, y]))[r]));
                for (m, v) in local.into_iter().enumerate() {
                    let gi = self.scalar_dofs[c][m];
                    coeffs[self.sigma_index(r, gi)] = self.scalar_signs[c][m] * v;
                }
            }
        }
        coeffs
    }

    /// L2 projection of a physical vector field onto the velocity space.
    pub fn project_velocity(&self, f: impl Fn([f64; 2]) -> [f64; 2], quad_degree: usize) -> Result<Vec<f64>> {
        let tab = self.tabulate(quad_degree)?;
        let mass = self.reference_velocity_mass()?;
        let mut out = vec![0.0; self.n_u];
        for c in 0..self.mesh.n_cells() {
            let map = self.cell_map(c);
            let mut rhs = vec![[0.0; 2]; self.dim_pk];
            for (q, w) in tab.rule.weights.iter().enumerate() {
                let v = f(map.to_physical(tab.rule.points[q]));
                for (i, b) in tab.u_vals[q].iter().enumerate() {
                    rhs[i][0] += w * v[0] * b;
                    rhs[i][1] += w * v[1] * b;
                }
            }
            for comp in 0..2 {
                let b: Vec<f64> = rhs.iter().map(|r| r[comp]).collect();
                let x = mass.solve(&b);
                for (i, xi) in x.into_iter().enumerate() {
                    out[self.u_index(comp, c, i)] = xi;
                }
            }
        }
        Ok(out)
    }

    /// Mass matrix of the velocity monomials on the reference triangle.
    pub fn reference_velocity_mass(&self) -> Result<SmallSpd> {
        let tab = self.tabulate(2 * self.velocity_degree)?;
        let n = self.dim_pk;
        let mut m = vec![vec![0.0; n]; n];
        for (q, w) in tab.rule.weights.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    m[i][j] += w * tab.u_vals[q][i] * tab.u_vals[q][j];
                }
            }
        }
        Ok(SmallSpd::new(m))
    }
}

/// Cholesky factor of a small dense SPD matrix.
#[derive(Debug, Clone)]
pub struct SmallSpd {
    l: Vec<Vec<f64>>,
}

impl SmallSpd {
    pub fn new(a: Vec<Vec<f64>>) -> Self {
        let n = a.len();
        let mut l = vec![vec![0.0; n]; n];
        for j in 0..n {
            let mut d = a[j][j];
            for k in 0..j {
                d -= l[j][k] * l[j][k];
            }
            let d = d.sqrt();
            l[j][j] = d;
            for i in j + 1..n {
                let mut s = a[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                l[i][j] = s / d;
            }
        }
        SmallSpd { l }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i][k] * y[k];
            }
            y[i] /= self.l[i][i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= self.l[k][i] * y[k];
            }
            y[i] /= self.l[i][i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::DiagonalPattern;

    fn square(n: usize) -> Arc<Mesh> {
        Arc::new(Mesh::build_square(n, DiagonalPattern::Right).unwrap())
    }

    const SUPPORTED: [(Family, usize); 6] =
        [(Family::Rt, 0), (Family::Rt, 1), (Family::Rt, 2), (Family::Bdm, 1), (Family::Bdm, 2), (Family::Bdm, 3)];

    #[test]
    fn counting_on_smallest_square() {
        let sp = SpacePair::new(square(1), Family::Rt, 0).unwrap();
        assert_eq!(sp.n_sigma, 10);
        assert_eq!(sp.n_u, 4);
    }

    #[test]
    fn bdm1_dof_count_matches_reference_tables() {
        // n_sigma + n_u for BDM_1 / P_0 at N = 20, 30
        for (n, dof) in [(20, 6560), (30, 14640)] {
            let sp = SpacePair::new(square(n), Family::Bdm, 1).unwrap();
            assert_eq!(sp.n_sigma + sp.n_u, dof);
        }
    }

    #[test]
    fn trace_of_identity_is_twice_the_area() {
        for (family, k) in SUPPORTED {
            for n in [1, 3] {
                let sp = SpacePair::new(square(n), family, k).unwrap();
                let id = sp.interpolate_tensor(|_| [[1.0, 0.0], [0.0, 1.0]]);
                let t: f64 = sp.trace_vector.iter().zip(&id).map(|(g, c)| g * c).sum();
                assert!((t - 2.0).abs() < 1e-12, "{family}_{k} N={n}: {t}");
            }
        }
        let lsp =
            SpacePair::new(Arc::new(Mesh::build_lshape(4, DiagonalPattern::Right).unwrap()), Family::Rt, 0).unwrap();
        let id = lsp.interpolate_tensor(|_| [[1.0, 0.0], [0.0, 1.0]]);
        let t: f64 = lsp.trace_vector.iter().zip(&id).map(|(g, c)| g * c).sum();
        assert!((t - 6.0).abs() < 1e-12);
    }

    #[test]
    fn normal_trace_is_continuous_across_edges() {
        for (family, k) in SUPPORTED {
            let sp = SpacePair::new(square(2), family, k).unwrap();
            let mesh = &sp.mesh;
            // a few scattered coefficient vectors
            for seed in 0..3u64 {
                let coeffs: Vec<f64> = (0..sp.n_sigma)
                    .map(|i| (((i as u64 * 2654435761 + seed * 97) % 1000) as f64 / 500.0) - 1.0)
                    .collect();
                for (e, cells) in mesh.edge_cells.iter().enumerate() {
                    let (Some(c0), Some(c1)) = (cells[0], cells[1]) else {
                        continue;
                    };
                    let [va, vb] = mesh.edges[e];
                    let (pa, pb) = (mesh.vertices[va], mesh.vertices[vb]);
                    let n = [pb[1] - pa[1], -(pb[0] - pa[0])];
                    for s in [0.1, 0.5, 0.83] {
                        let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                        let flux = |c: usize| {
                            let map = sp.cell_map(c);
                            let xr = to_reference(&map, x);
                            let (val, _) = sp.eval_sigma(&coeffs, c, xr);
                            [val[0][0] * n[0] + val[0][1] * n[1], val[1][0] * n[0] + val[1][1] * n[1]]
                        };
                        let (f0, f1) = (flux(c0), flux(c1));
                        for r in 0..2 {
                            assert!(
                                (f0[r] - f1[r]).abs() < 1e-12 * f0[r].abs().max(1.0),
                                "{family}_{k} edge {e}: {f0:?} vs {f1:?}"
                            );
                        }
                    }
                }
            }
        }
    }

    fn to_reference(map: &CellMap, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - map.origin[0], x[1] - map.origin[1]];
        let j = map.jac;
        [(j[1][1] * d[0] - j[0][1] * d[1]) / map.det, (-j[1][0] * d[0] + j[0][0] * d[1]) / map.det]
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        for (family, k) in SUPPORTED {
            let pdeg = match family {
                Family::Rt => k,
                Family::Bdm => k,
            };
            let sp = SpacePair::new(square(3), family, k).unwrap();
            let field = move |x: [f64; 2]| {
                let p = |a: f64, b: f64| a + b * x[0].powi(pdeg as i32) - 0.5 * x[1].powi(pdeg as i32);
                [[p(1.0, 2.0), p(-0.3, 1.0)], [p(0.7, -1.0), p(2.0, 0.25)]]
            };
            let coeffs = sp.interpolate_tensor(field);
            for c in [0, 5, 11] {
                for xr in [[0.2, 0.3], [0.6, 0.1]] {
                    let x = sp.cell_map(c).to_physical(xr);
                    let (val, _) = sp.eval_sigma(&coeffs, c, xr);
                    let want = field(x);
                    for r in 0..2 {
                        for col in 0..2 {
                            assert!((val[r][col] - want[r][col]).abs() < 1e-11, "{family}_{k}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn piola_preserves_divergence_pairing() {
        // ∫_T div φ q dx on the physical cell equals ∫_T̂ div̂ φ̂ q̂ dx̂ (up to the sign factor)
        let sp = SpacePair::new(square(2), Family::Rt, 1).unwrap();
        let tab = sp.tabulate(4).unwrap();
        for c in 0..sp.mesh.n_cells() {
            let map = sp.cell_map(c);
            for m in 0..sp.element.dim() {
                let mut phys = 0.0;
                let mut reference = 0.0;
                for (q, w) in tab.rule.weights.iter().enumerate() {
                    let qv = tab.u_vals[q][1];
                    phys += w * map.det * (tab.sigma_divs[q][m] / map.det) * qv;
                    reference += w * tab.sigma_divs[q][m] * qv;
                }
                assert!((phys - reference).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constraint_vector_is_nonzero() {
        let sp = SpacePair::new(square(2), Family::Bdm, 1).unwrap();
        let norm: f64 = sp.trace_vector.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm > 1e-3);
    }
}
