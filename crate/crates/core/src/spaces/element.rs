//! Reference H(div) elements on the triangle `(0,0), (1,0), (0,1)`.
//!
//! Bases are built as the dual of a set of functionals applied to a spanning
//! set of the polynomial space:
//!
//! * edge functionals: `∫_e φ·n P_j(s) ds`, outward unit normal, `s` running
//!   counterclockwise along the edge, `P_j` shifted Legendre, `j = 0..=k`;
//! * interior functionals: moments against `P_{k-1}^2` (RT) or against the
//!   first-kind Nédélec space of degree `k-1` (BDM).

use std::str::FromStr;

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polynomial::{Poly, VecPoly};
use crate::quadrature::{gauss_legendre_unit, rule_for_degree, shifted_legendre};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Rt,
    Bdm,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rt" => Ok(Family::Rt),
            "bdm" => Ok(Family::Bdm),
            other => Err(Error::Config(format!("unknown element family '{other}'"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Rt => write!(f, "RT"),
            Family::Bdm => write!(f, "BDM"),
        }
    }
}

/// Reference triangle vertices.
pub const REF_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Local edge `i` runs from vertex `(i+1)%3` to `(i+2)%3`.
pub fn local_edge(i: usize) -> (usize, usize) {
    ((i + 1) % 3, (i + 2) % 3)
}

#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub family: Family,
    /// Index in the family's own numbering (`RT_k`, `BDM_k`).
    pub degree: usize,
    /// Dual basis; `basis[m]` satisfies `functional_i(basis[m]) = δ_im`.
    pub basis: Vec<VecPoly>,
    pub divergence: Vec<Poly>,
    /// Edge functionals per edge (`k + 1` for both families).
    pub dofs_per_edge: usize,
    pub interior_dofs: usize,
}

impl ReferenceElement {
    pub fn new(family: Family, k: usize) -> Result<Self> {
        match (family, k) {
            (Family::Rt, 0..=2) | (Family::Bdm, 1..=3) => {}
            _ => {
                return Err(Error::Unsupported(format!("{family}_{k} is not supported")));
            }
        }
        let spanning = spanning_set(family, k);
        let dim = spanning.len();
        let dofs_per_edge = k + 1;
        let interior_tests = interior_test_functions(family, k);
        let interior_dofs = interior_tests.len();
        debug_assert_eq!(3 * dofs_per_edge + interior_dofs, dim);

        // D[i][j] = functional_i(spanning_j)
        let mut d = Mat::<f64>::zeros(dim, dim);
        for (j, p) in spanning.iter().enumerate() {
            let vals = apply_functionals(|x, y| p.eval(x, y), dofs_per_edge, &interior_tests, k + 2);
            for (i, v) in vals.into_iter().enumerate() {
                d[(i, j)] = v;
            }
        }
        let inv = d.partial_piv_lu().inverse();
        let basis: Vec<VecPoly> = (0..dim)
            .map(|m| {
                let mut phi = spanning[0].scale(inv[(0, m)]);
                for (j, p) in spanning.iter().enumerate().skip(1) {
                    phi = phi.axpy(inv[(j, m)], p);
                }
                phi
            })
            .collect();
        let divergence = basis.iter().map(VecPoly::div).collect();
        Ok(ReferenceElement { family, degree: k, basis, divergence, dofs_per_edge, interior_dofs })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Polynomial degree of the basis functions.
    pub fn poly_degree(&self) -> usize {
        match self.family {
            Family::Rt => self.degree + 1,
            Family::Bdm => self.degree,
        }
    }

    /// Local index of edge functional `j` on local edge `e`.
    pub fn edge_dof(&self, e: usize, j: usize) -> usize {
        e * self.dofs_per_edge + j
    }

    /// Applies all local functionals to a reference vector field.
    pub fn functionals(&self, f: impl Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
        let tests = interior_test_functions(self.family, self.degree);
        apply_functionals(f, self.dofs_per_edge, &tests, self.degree + 4)
    }

    /// Unisolvence check: the matrix `functional_i(basis_m)`.
    pub fn functional_matrix(&self) -> Vec<Vec<f64>> {
        self.basis.iter().map(|phi| self.functionals(|x, y| phi.eval(x, y))).collect()
    }
}

/// Spanning set of `RT_k` (`P_k^2 ⊕ x P̃_k`) or `BDM_k` (`P_k^2`).
fn spanning_set(family: Family, k: usize) -> Vec<VecPoly> {
    let mut out = Vec::new();
    for c in 0..2 {
        for (a, b) in Poly::exponents(k) {
            let m = Poly::monomial(a, b, 1.0);
            let z = Poly::zero(0);
            out.push(if c == 0 { VecPoly([m, z]) } else { VecPoly([z, m]) });
        }
    }
    if family == Family::Rt {
        for b in 0..=k {
            let a = k - b;
            out.push(VecPoly([Poly::monomial(a + 1, b, 1.0), Poly::monomial(a, b + 1, 1.0)]));
        }
    }
    out
}

/// Interior test functions: `P_{k-1}^2` for RT, Nédélec `P_{k-2}^2 ⊕ (-y, x) P̃_{k-2}` for BDM.
fn interior_test_functions(family: Family, k: usize) -> Vec<VecPoly> {
    let mut out = Vec::new();
    let vector_monomials = |deg: usize, out: &mut Vec<VecPoly>| {
        for c in 0..2 {
            for (a, b) in Poly::exponents(deg) {
                let m = Poly::monomial(a, b, 1.0);
                let z = Poly::zero(0);
                out.push(if c == 0 { VecPoly([m, z]) } else { VecPoly([z, m]) });
            }
        }
    };
    match family {
        Family::Rt => {
            if k >= 1 {
                vector_monomials(k - 1, &mut out);
            }
        }
        Family::Bdm => {
            if k >= 2 {
                vector_monomials(k - 2, &mut out);
                for b in 0..=(k - 2) {
                    let a = k - 2 - b;
                    out.push(VecPoly([Poly::monomial(a, b + 1, -1.0), Poly::monomial(a + 1, b, 1.0)]));
                }
            }
        }
    }
    out
}

fn apply_functionals(
    f: impl Fn(f64, f64) -> [f64; 2],
    dofs_per_edge: usize,
    interior: &[VecPoly],
    edge_points: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 * dofs_per_edge + interior.len());
    let (s_nodes, s_weights) = gauss_legendre_unit(edge_points);
    for e in 0..3 {
        let (a, b) = local_edge(e);
        let (pa, pb) = (REF_VERTICES[a], REF_VERTICES[b]);
        let t = [pb[0] - pa[0], pb[1] - pa[1]];
        // unnormalized outward normal; |n| = edge length absorbs ds
        let n = [t[1], -t[0]];
        let mut moments = vec![0.0; dofs_per_edge];
        for (s, w) in s_nodes.iter().zip(&s_weights) {
            let x = pa[0] + s * t[0];
            let y = pa[1] + s * t[1];
            let v = f(x, y);
            let flux = v[0] * n[0] + v[1] * n[1];
            for (j, p) in shifted_legendre(dofs_per_edge - 1, *s).iter().enumerate() {
                moments[j] += w * flux * p;
            }
        }
        out.extend(moments);
    }
    if !interior.is_empty() {
        let rule = rule_for_degree(10).expect("degree 10 rule");
        for q in interior {
            out.push(rule.integrate(|x, y| {
                let v = f(x, y);
                let w = q.eval(x, y);
                v[0] * w[0] + v[1] * w[1]
            }));
        }
    }
    out
}
