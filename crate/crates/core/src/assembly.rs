//! Assembly of the discrete forms
//!
//! ```text
//! a(ρ, τ) = 1/ν ∫ ρᵈ : τᵈ
//! b(τ, v) = ∫ div τ · v
//! c(v, τ) = 1/ν ∫ (v ⊗ β)ᵈ : τ
//! ```
//!
//! together with the velocity mass matrix and the trace functional, and the
//! global block operators built from them.

use crate::convection::ConvectionField;
use crate::eigensolver::Border;
use crate::error::{Error, Result};
use crate::quadrature::MAX_DEGREE;
use crate::spaces::{CellMap, SpacePair, Tabulation};
use crate::sparse::{Coo, Csr};

/// Which of the two mutually transposed systems a [`SparseSystem`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    /// `K = [[A, g, (B+C)ᵀ], [gᵀ, 0, 0], [B, 0, 0]]`
    Primal,
    /// `Kᵀ = [[A, g, Bᵀ], [gᵀ, 0, 0], [B+C, 0, 0]]`
    Adjoint,
}

/// Assembled blocks. `B` and `C` are `n_u × n_sigma` with
/// `B[v, τ] = b(τ, v)` and `C[v, τ] = c(v, τ)`.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub kind: SystemKind,
    pub a: Csr,
    pub b: Csr,
    pub c: Csr,
    pub m: Csr,
    pub g: Vec<f64>,
    pub nu: f64,
    pub n_sigma: usize,
    pub n_u: usize,
    /// Stress index where the identity interpolant is largest.
    pub pin: usize,
}

impl SparseSystem {
    /// The multiplier row/column as a border of the global matrix.
    pub fn border(&self) -> Border {
        Border { index: self.n_sigma, pin: self.pin }
    }

    /// `n_sigma + 1 + n_u`.
    pub fn n_total(&self) -> usize {
        self.n_sigma + 1 + self.n_u
    }

    /// Index of the trace multiplier.
    pub fn multiplier_index(&self) -> usize {
        self.n_sigma
    }

    /// First velocity index in the global ordering.
    pub fn u_offset(&self) -> usize {
        self.n_sigma + 1
    }

    /// The global saddle-point matrix of this system.
    pub fn global_matrix(&self) -> Csr {
        let n = self.n_total();
        let uo = self.u_offset();
        let mut coo = Coo::new(n, n);
        coo.push_block(0, 0, &self.a, 1.0);
        for (i, &gi) in self.g.iter().enumerate() {
            if gi != 0.0 {
                coo.push(i, self.n_sigma, gi);
                coo.push(self.n_sigma, i, gi);
            }
        }
        match self.kind {
            SystemKind::Primal => {
                coo.push_block_transposed(0, uo, &self.b, 1.0);
                coo.push_block_transposed(0, uo, &self.c, 1.0);
                coo.push_block(uo, 0, &self.b, 1.0);
            }
            SystemKind::Adjoint => {
                coo.push_block_transposed(0, uo, &self.b, 1.0);
                coo.push_block(uo, 0, &self.b, 1.0);
                coo.push_block(uo, 0, &self.c, 1.0);
            }
        }
        coo.to_csr()
    }

    /// `M̃ = diag(0, 0, −M)`.
    pub fn global_mass(&self) -> Csr {
        let n = self.n_total();
        let mut coo = Coo::new(n, n);
        coo.push_block(self.u_offset(), self.u_offset(), &self.m, -1.0);
        coo.to_csr()
    }

    /// The same blocks in the other arrangement.
    pub fn transposed(&self) -> SparseSystem {
        let kind = match self.kind {
            SystemKind::Primal => SystemKind::Adjoint,
            SystemKind::Adjoint => SystemKind::Primal,
        };
        SparseSystem { kind, ..self.clone() }
    }
}

/// Quadrature degree for a product of the given polynomial degrees, capped at the
/// highest available rule.
fn quad_degree(d: usize) -> usize {
    d.min(MAX_DEGREE)
}

/// Physical values of the local H(div) basis at one quadrature point, including
/// orientation signs.
fn physical_sigma(
    space: &SpacePair,
    tab: &Tabulation,
    map: &CellMap,
    cell: usize,
    q: usize,
) -> (Vec<[f64; 2]>, Vec<f64>) {
    let signs = &space.scalar_signs[cell];
    let vals = tab.sigma_vals[q]
        .iter()
        .zip(signs)
        .map(|(v, s)| {
            let p = map.piola(*v);
            [s * p[0], s * p[1]]
        })
        .collect();
    let divs = tab.sigma_divs[q].iter().zip(signs).map(|(d, s)| s * d / map.det).collect();
    (vals, divs)
}

fn check_nu(nu: f64) -> Result<()> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::InvalidArgument(format!("viscosity must be positive, got {nu}")));
    }
    Ok(())
}

/// Assembles the primal system.
pub fn assemble_forms(space: &SpacePair, beta: &ConvectionField, nu: f64) -> Result<SparseSystem> {
    check_nu(nu)?;
    let a = assemble_a(space, nu)?;
    let b = assemble_b(space)?;
    let c = assemble_c(space, beta, nu)?;
    let m = assemble_velocity_mass(space)?;
    Ok(SparseSystem {
        kind: SystemKind::Primal,
        a,
        b,
        c,
        m,
        g: space.trace_vector.clone(),
        nu,
        n_sigma: space.n_sigma,
        n_u: space.n_u,
        pin: space.identity_pin(),
    })
}

/// Assembles the adjoint system, whose global matrix is the transpose of the primal one.
pub fn assemble_adjoint(space: &SpacePair, beta: &ConvectionField, nu: f64) -> Result<SparseSystem> {
    Ok(assemble_forms(space, beta, nu)?.transposed())
}

pub fn assemble_a(space: &SpacePair, nu: f64) -> Result<Csr> {
    check_nu(nu)?;
    let p = space.element.poly_degree();
    let tab = space.tabulate(quad_degree(2 * p))?;
    let nl = space.element.dim();
    let mut coo = Coo::new(space.n_sigma, space.n_sigma);
    let mut local = vec![[[0.0; 4]; 1]; nl * nl];
    for cell in 0..space.mesh.n_cells() {
        let map = space.cell_map(cell);
        local.iter_mut().for_each(|l| *l = [[0.0; 4]]);
        for (q, w) in tab.rule.weights.iter().enumerate() {
            let wq = w * map.det.abs() / nu;
            let (phi, _) = physical_sigma(space, &tab, &map, cell, q);
            for m in 0..nl {
                for n in 0..nl {
                    let dot = phi[m][0] * phi[n][0] + phi[m][1] * phi[n][1];
                    let l = &mut local[m * nl + n][0];
                    // (r, s) blocks: δ_rs φ_m·φ_n − ½ φ_m[r] φ_n[s]
                    l[0] += wq * (dot - 0.5 * phi[m][0] * phi[n][0]);
                    l[1] += wq * (-0.5 * phi[m][0] * phi[n][1]);
                    l[2] += wq * (-0.5 * phi[m][1] * phi[n][0]);
                    l[3] += wq * (dot - 0.5 * phi[m][1] * phi[n][1]);
                }
            }
        }
        let dofs = &space.scalar_dofs[cell];
        for m in 0..nl {
            for n in 0..nl {
                let l = local[m * nl + n][0];
                for r in 0..2 {
                    for s in 0..2 {
                        coo.push(space.sigma_index(r, dofs[m]), space.sigma_index(s, dofs[n]), l[2 * r + s]);
                    }
                }
            }
        }
    }
    Ok(coo.to_csr())
}

pub fn assemble_b(space: &SpacePair) -> Result<Csr> {
    let tab = space.tabulate(quad_degree(space.element.poly_degree() + space.velocity_degree))?;
    let nl = space.element.dim();
    let np = space.dim_pk;
    let mut coo = Coo::new(space.n_u, space.n_sigma);
    for cell in 0..space.mesh.n_cells() {
        let map = space.cell_map(cell);
        let mut local = vec![0.0; np * nl];
        for (q, w) in tab.rule.weights.iter().enumerate() {
            let wq = w * map.det.abs();
            let (_, div) = physical_sigma(space, &tab, &map, cell, q);
            for (i, psi) in tab.u_vals[q].iter().enumerate() {
                for m in 0..nl {
                    local[i * nl + m] += wq * psi * div[m];
                }
            }
        }
        let dofs = &space.scalar_dofs[cell];
        for comp in 0..2 {
            for i in 0..np {
                for m in 0..nl {
                    coo.push(space.u_index(comp, cell, i), space.sigma_index(comp, dofs[m]), local[i * nl + m]);
                }
            }
        }
    }
    Ok(coo.to_csr())
}

pub fn assemble_c(space: &SpacePair, beta: &ConvectionField, nu: f64) -> Result<Csr> {
    check_nu(nu)?;
    let mut coo = Coo::new(space.n_u, space.n_sigma);
    if beta.is_zero() {
        return Ok(coo.to_csr());
    }
    let deg = space.element.poly_degree() + space.velocity_degree + beta.quadrature_degree();
    let tab = space.tabulate(quad_degree(deg))?;
    let nl = space.element.dim();
    let np = space.dim_pk;
    for cell in 0..space.mesh.n_cells() {
        let map = space.cell_map(cell);
        // local[(c, i), (r, m)]
        let mut local = vec![0.0; 4 * np * nl];
        let idx = |c: usize, i: usize, r: usize, m: usize| ((c * np + i) * 2 + r) * nl + m;
        for (q, w) in tab.rule.weights.iter().enumerate() {
            let wq = w * map.det.abs() / nu;
            let (phi, _) = physical_sigma(space, &tab, &map, cell, q);
            let bq = beta.eval(map.to_physical(tab.rule.points[q]));
            for (i, psi) in tab.u_vals[q].iter().enumerate() {
                for m in 0..nl {
                    let bdotphi = bq[0] * phi[m][0] + bq[1] * phi[m][1];
                    for c in 0..2 {
                        for r in 0..2 {
                            // (v⊗β):τ − ½ (v·β) tr τ with v = ψ e_c, τ = e_r ⊗ φ_m
                            let full = if c == r { bdotphi } else { 0.0 };
                            local[idx(c, i, r, m)] += wq * psi * (full - 0.5 * bq[c] * phi[m][r]);
                        }
                    }
                }
            }
        }
        let dofs = &space.scalar_dofs[cell];
        for c in 0..2 {
            for i in 0..np {
                for r in 0..2 {
                    for m in 0..nl {
                        coo.push(space.u_index(c, cell, i), space.sigma_index(r, dofs[m]), local[idx(c, i, r, m)]);
                    }
                }
            }
        }
    }
    Ok(coo.to_csr())
}

pub fn assemble_velocity_mass(space: &SpacePair) -> Result<Csr> {
    let tab = space.tabulate(quad_degree(2 * space.velocity_degree))?;
    let np = space.dim_pk;
    let mut coo = Coo::new(space.n_u, space.n_u);
    for cell in 0..space.mesh.n_cells() {
        let map = space.cell_map(cell);
        let mut local = vec![0.0; np * np];
        for (q, w) in tab.rule.weights.iter().enumerate() {
            let wq = w * map.det.abs();
            for i in 0..np {
                for j in 0..np {
                    local[i * np + j] += wq * tab.u_vals[q][i] * tab.u_vals[q][j];
                }
            }
        }
        for comp in 0..2 {
            for i in 0..np {
                for j in 0..np {
                    coo.push(space.u_index(comp, cell, i), space.u_index(comp, cell, j), local[i * np + j]);
                }
            }
        }
    }
    Ok(coo.to_csr())
}

/// `L²` mass `∫ ρ : τ` and `∫ div ρ · div τ` on the tensor space.
pub fn assemble_sigma_norms(space: &SpacePair) -> Result<(Csr, Csr)> {
    let p = space.element.poly_degree();
    let tab = space.tabulate(quad_degree(2 * p))?;
    let nl = space.element.dim();
    let mut mass = Coo::new(space.n_sigma, space.n_sigma);
    let mut divdiv = Coo::new(space.n_sigma, space.n_sigma);
    for cell in 0..space.mesh.n_cells() {
        let map = space.cell_map(cell);
        let mut lm = vec![0.0; nl * nl];
        let mut ld = vec![0.0; nl * nl];
        for (q, w) in tab.rule.weights.iter().enumerate() {
            let wq = w * map.det.abs();
            let (phi, div) = physical_sigma(space, &tab, &map, cell, q);
            for m in 0..nl {
                for n in 0..nl {
                    lm[m * nl + n] += wq * (phi[m][0] * phi[n][0] + phi[m][1] * phi[n][1]);
                    ld[m * nl + n] += wq * div[m] * div[n];
                }
            }
        }
        let dofs = &space.scalar_dofs[cell];
        for r in 0..2 {
            for m in 0..nl {
                for n in 0..nl {
                    let (gi, gj) = (space.sigma_index(r, dofs[m]), space.sigma_index(r, dofs[n]));
                    mass.push(gi, gj, lm[m * nl + n]);
                    divdiv.push(gi, gj, ld[m * nl + n]);
                }
            }
        }
    }
    Ok((mass.to_csr(), divdiv.to_csr()))
}

/// Right-hand side `−∫ f · v` for every velocity basis function.
pub fn assemble_source_rhs(space: &SpacePair, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Vec<f64>> {
    let tab = space.tabulate(quad_degree(2 * space.velocity_degree + 6))?;
    let mut rhs = vec![0.0; space.n_u];
    for cell in 0..space.mesh.n_cells() {
        let map = space.cell_map(cell);
        for (q, w) in tab.rule.weights.iter().enumerate() {
            let wq = w * map.det.abs();
            let fq = f(map.to_physical(tab.rule.points[q]));
            for (i, psi) in tab.u_vals[q].iter().enumerate() {
                for comp in 0..2 {
                    rhs[space.u_index(comp, cell, i)] -= wq * fq[comp] * psi;
                }
            }
        }
    }
    Ok(rhs)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::convection::BetaKind;
    use crate::mesh::{DiagonalPattern, DomainKind, Mesh};
    use crate::spaces::Family;

    const SUPPORTED: [(Family, usize); 6] =
        [(Family::Rt, 0), (Family::Rt, 1), (Family::Rt, 2), (Family::Bdm, 1), (Family::Bdm, 2), (Family::Bdm, 3)];

    fn space(n: usize, family: Family, k: usize) -> SpacePair {
        let mesh = Arc::new(Mesh::build_square(n, DiagonalPattern::Right).unwrap());
        SpacePair::new(mesh, family, k).unwrap()
    }

    fn beta1() -> ConvectionField {
        ConvectionField::normalized(BetaKind::Beta1, DomainKind::Square)
    }

    #[test]
    fn a_is_symmetric_and_kills_identity() {
        for (family, k) in SUPPORTED {
            let sp = space(2, family, k);
            let a = assemble_a(&sp, 0.5).unwrap();
            assert!(a.max_abs_diff(&a.transpose()) < 1e-12 * a.max_abs());
            let id = sp.interpolate_tensor(|_| [[1.0, 0.0], [0.0, 1.0]]);
            let r = a.matvec(&id);
            assert!(r.iter().all(|v| v.abs() < 1e-14 * a.max_abs().max(1.0)), "{family}_{k}");
            let b = assemble_b(&sp).unwrap();
            assert!(b.matvec(&id).iter().all(|v| v.abs() < 1e-13), "{family}_{k}");
        }
    }

    #[test]
    fn zero_beta_gives_zero_convection() {
        let sp = space(2, Family::Bdm, 1);
        let c = assemble_c(&sp, &ConvectionField::zero(DomainKind::Square), 0.5).unwrap();
        assert!(c.max_abs() <= 1e-14);
        let sys = assemble_forms(&sp, &ConvectionField::zero(DomainKind::Square), 0.5).unwrap();
        let adj = assemble_adjoint(&sp, &ConvectionField::zero(DomainKind::Square), 0.5).unwrap();
        assert!(sys.global_matrix().max_abs_diff(&adj.global_matrix()) == 0.0);
    }

    #[test]
    fn viscosity_scaling() {
        let sp = space(2, Family::Rt, 1);
        let b3 = ConvectionField::normalized(BetaKind::Beta3, DomainKind::Square);
        let s1 = assemble_forms(&sp, &b3, 0.5).unwrap();
        let s2 = assemble_forms(&sp, &b3, 1.0).unwrap();
        assert!(s1.a.scale(0.5).max_abs_diff(&s2.a) < 1e-14);
        assert!(s1.c.scale(0.5).max_abs_diff(&s2.c) < 1e-14);
        assert_eq!(s1.b, s2.b);
        assert_eq!(s1.m, s2.m);
        assert!(assemble_forms(&sp, &b3, 0.0).is_err());
        assert!(assemble_forms(&sp, &b3, -1.0).is_err());
    }

    #[test]
    fn adjoint_is_transpose() {
        for beta in [beta1(), ConvectionField::normalized(BetaKind::Beta3, DomainKind::Square)] {
            let sp = space(2, Family::Rt, 0);
            let k = assemble_forms(&sp, &beta, 0.5).unwrap().global_matrix();
            let kt = assemble_adjoint(&sp, &beta, 0.5).unwrap().global_matrix();
            assert!(k.transpose().max_abs_diff(&kt) <= 1e-13);
        }
    }

    #[test]
    fn velocity_mass_is_spd_block_diagonal() {
        for (family, k) in SUPPORTED {
            let sp = space(2, family, k);
            let m = assemble_velocity_mass(&sp).unwrap();
            assert!(m.max_abs_diff(&m.transpose()) < 1e-15);
            // each block is the reference mass scaled by |det J|, which is SPD
            let chol = sp.reference_velocity_mass().unwrap();
            let x = chol.solve(&vec![1.0; sp.dim_pk]);
            assert!(x.iter().all(|v| v.is_finite()));
            let total: f64 = m.data.iter().sum();
            // Σ_ij ∫ψ_i ψ_j over monomials is positive
            assert!(total > 0.0);
        }
    }

    #[test]
    fn source_rhs_for_constant_field() {
        let sp = space(1, Family::Rt, 0);
        let rhs = assemble_source_rhs(&sp, |_| [1.0, 0.0]).unwrap();
        assert_eq!(rhs.len(), 4);
        for cell in 0..2 {
            assert!((rhs[sp.u_index(0, cell, 0)] + 0.5).abs() < 1e-15);
            assert_eq!(rhs[sp.u_index(1, cell, 0)], 0.0);
        }
        let zero = assemble_source_rhs(&sp, |_| [0.0, 0.0]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn b_matches_direct_quadrature_for_polynomial_tensor() {
        for (family, k) in SUPPORTED {
            let sp = space(3, family, k);
            let pd = k as i32;
            let tau = move |x: [f64; 2]| {
                [
                    [x[0].powi(pd) + 0.5 * x[1], 2.0 - x[1].powi(pd)],
                    [x[0] * x[1].powi((pd - 1).max(0)), 1.0 + x[0].powi(pd)],
                ]
            };
            let div = move |x: [f64; 2]| {
                let d = |p: i32, v: f64| {
                    if p == 0 {
                        0.0
                    } else {
                        p as f64 * v.powi(p - 1)
                    }
                };
                let q = (pd - 1).max(0);
                [d(pd, x[0]) - d(pd, x[1]), x[1].powi(q) + 0.0]
            };
            let coeffs = sp.interpolate_tensor(tau);
            let b = assemble_b(&sp).unwrap();
            let got = b.matvec(&coeffs);
            let mut want = vec![0.0; sp.n_u];
            let rule = crate::quadrature::rule_for_degree(8).unwrap();
            for cell in 0..sp.mesh.n_cells() {
                let map = sp.cell_map(cell);
                for (p, w) in rule.points.iter().zip(&rule.weights) {
                    let dv = div(map.to_physical(*p));
                    for (i, psi) in sp.velocity_basis(*p).iter().enumerate() {
                        for c in 0..2 {
                            want[sp.u_index(c, cell, i)] += w * map.det * dv[c] * psi;
                        }
                    }
                }
            }
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-11, "{family}_{k}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn a_equals_deviatoric_norm() {
        let sp = space(2, Family::Bdm, 2);
        let nu = 0.7;
        let a = assemble_a(&sp, nu).unwrap();
        let coeffs: Vec<f64> = (0..sp.n_sigma).map(|i| ((i * 37 % 17) as f64 - 8.0) / 8.0).collect();
        let quad: f64 = coeffs.iter().zip(a.matvec(&coeffs)).map(|(x, y)| x * y).sum();
        let rule = crate::quadrature::rule_for_degree(6).unwrap();
        let mut direct = 0.0;
        for cell in 0..sp.mesh.n_cells() {
            let det = sp.cell_map(cell).det;
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                let (t, _) = sp.eval_sigma(&coeffs, cell, *p);
                let tr = 0.5 * (t[0][0] + t[1][1]);
                let d = [[t[0][0] - tr, t[0][1]], [t[1][0], t[1][1] - tr]];
                direct += w * det * (d[0][0].powi(2) + d[0][1].powi(2) + d[1][0].powi(2) + d[1][1].powi(2));
            }
        }
        direct /= nu;
        assert!(quad >= 0.0);
        assert!((quad - direct).abs() < 1e-12 * direct.abs());
    }

    #[test]
    fn c_matches_pointwise_formula() {
        let sp = space(2, Family::Rt, 1);
        let beta = ConvectionField::normalized(BetaKind::Beta3, DomainKind::Square);
        let nu = 0.5;
        let c = assemble_c(&sp, &beta, nu).unwrap();
        let sig: Vec<f64> = (0..sp.n_sigma).map(|i| ((i * 13 % 11) as f64 - 5.0) / 5.0).collect();
        let u: Vec<f64> = (0..sp.n_u).map(|i| ((i * 7 % 5) as f64 - 2.0) / 3.0).collect();
        let got: f64 = u.iter().zip(c.matvec(&sig)).map(|(x, y)| x * y).sum();
        let rule = crate::quadrature::rule_for_degree(6).unwrap();
        let mut want = 0.0;
        for cell in 0..sp.mesh.n_cells() {
            let map = sp.cell_map(cell);
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                let (t, _) = sp.eval_sigma(&sig, cell, *p);
                let v = sp.eval_u(&u, cell, *p);
                let b = beta.eval(map.to_physical(*p));
                let vb = [[v[0] * b[0], v[0] * b[1]], [v[1] * b[0], v[1] * b[1]]];
                let tr = 0.5 * (vb[0][0] + vb[1][1]);
                let d = [[vb[0][0] - tr, vb[0][1]], [vb[1][0], vb[1][1] - tr]];
                want += w * map.det * (d[0][0] * t[0][0] + d[0][1] * t[0][1] + d[1][0] * t[1][0] + d[1][1] * t[1][1]);
            }
        }
        want /= nu;
        assert!((got - want).abs() < 1e-12 * want.abs().max(1.0));
    }
}
