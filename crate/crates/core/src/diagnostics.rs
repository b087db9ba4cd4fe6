//! Computable surrogates for the stability constants of the mixed scheme.
//!
//! Both discrete constants come from small-magnitude eigenvalues of saddle-point
//! pencils solved with the shift-invert eigensolver at shift 0:
//!
//! * `γ_h²` is the smallest eigenvalue of `S w = γ² M w` with
//!   `S = B P Bᵀ`, where `P` is the `σ`-block of the inverse of
//!   `[[N, g], [gᵀ, 0]]` and `N` the `H(div)` Gram matrix. This is the squared
//!   discrete inf-sup constant of `b` on `H₀ × Q`.
//! * `c1_h` is the smallest Rayleigh quotient `(‖τᵈ‖² + ‖div τ‖²) / ‖τ‖²_div`
//!   on `ker B ∩ ker gᵀ`, with both constraints imposed by multipliers.
//!
//! The remaining quantities are closed-form combinations of these two:
//!
//! ```text
//! L      = (‖β‖∞ / γ) max(1/ν, 1/c1)
//! C_J    = 1 / min(c1 / (2ν), c1 γ² ν / 2)
//! ratio  = C_J ‖β‖∞ / ν
//! ```

use serde::Serialize;

use crate::assembly::{assemble_a, assemble_sigma_norms, assemble_velocity_mass, SparseSystem};
use crate::c64;
use crate::convection::ConvectionField;
use crate::eigensolver::{solve_shift_invert, ArnoldiOptions, Border, EigenProblem};
use crate::error::{Error, Result};
use crate::spaces::SpacePair;
use crate::sparse::{Coo, Csr};

/// Discrete constants that do not depend on `β` or `ν`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DiscreteConstants {
    pub gamma_h: f64,
    pub c1_h: f64,
}

/// Invariant region for the fixed-point map of the source problem.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct R0Window {
    pub f_norm: f64,
    pub h: f64,
    pub c1: f64,
    pub c2: f64,
    /// `2 H² C1 C2 < 1`.
    pub feasible: bool,
    /// Roots of `(H C1 / 2) R² − R + H C2`; the admissible radii lie between them.
    pub r0_min: Option<f64>,
    pub r0_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    pub gamma_h: f64,
    pub c1_h: f64,
    pub c_j: f64,
    pub contraction_l: f64,
    pub uniqueness_ratio: f64,
    pub contraction_ok: bool,
    pub uniqueness_ok: bool,
    pub nu: f64,
    pub beta_sup: f64,
    pub r0_window: Option<R0Window>,
    pub warnings: Vec<String>,
}

/// `[[top, g, Bᵀ], [gᵀ, 0, 0], [B, 0, 0]]`.
fn constrained_matrix(top: &Csr, g: &[f64], b: &Csr) -> Csr {
    let ns = top.nrows;
    let n = ns + 1 + b.nrows;
    let mut coo = Coo::new(n, n);
    coo.push_block(0, 0, top, 1.0);
    for (i, &gi) in g.iter().enumerate() {
        if gi != 0.0 {
            coo.push(i, ns, gi);
            coo.push(ns, i, gi);
        }
    }
    coo.push_block_transposed(0, ns + 1, b, 1.0);
    coo.push_block(ns + 1, 0, b, 1.0);
    coo.to_csr()
}

/// Smallest real eigenvalue near 0 of the given problem.
fn smallest_eigenvalue(k: Csr, mass: Csr, offset: usize, border: Border, opts: &ArnoldiOptions) -> Result<f64> {
    let nev = 2.min(mass.nrows);
    let problem = EigenProblem { k, mass, mass_offset: offset, shift: c64::new(0.0, 0.0), nev, border: Some(border) };
    let pairs = solve_shift_invert(&problem, opts)?;
    pairs
        .iter()
        .map(|p| p.lambda.re)
        .filter(|v| *v > 0.0)
        .reduce(f64::min)
        .ok_or_else(|| Error::LinearAlgebra("no positive eigenvalue found".into()))
}

/// Computes `γ_h` and `c1_h` for a space pair.
pub fn discrete_constants(space: &SpacePair, b: &Csr, opts: &ArnoldiOptions) -> Result<DiscreteConstants> {
    let (mass_s, divdiv) = assemble_sigma_norms(space)?;
    let gram = mass_s.add_scaled(&divdiv, 1.0);
    let g = &space.trace_vector;
    let m = assemble_velocity_mass(space)?;
    let border = Border { index: space.n_sigma, pin: space.identity_pin() };
    // N s + g μ + Bᵀ w = 0, gᵀ s = 0, B s = −λ M w  ⇒  S w = λ M w
    let k_gamma = constrained_matrix(&gram, g, b);
    let gamma_sq = smallest_eigenvalue(k_gamma, m.scale(-1.0), space.n_sigma + 1, border, opts)?;
    let dev = assemble_a(space, 1.0)?;
    let k_c1 = constrained_matrix(&dev.add_scaled(&divdiv, 1.0), g, b);
    let c1 = smallest_eigenvalue(k_c1, gram, 0, border, opts)?;
    Ok(DiscreteConstants { gamma_h: gamma_sq.sqrt(), c1_h: c1 })
}

/// Combines discrete constants with the problem data.
pub fn report_from_constants(
    consts: DiscreteConstants,
    nu: f64,
    beta_sup: f64,
    f_norm: Option<f64>,
) -> ConstantsReport {
    let DiscreteConstants { gamma_h: gamma, c1_h: c1 } = consts;
    let contraction_l = beta_sup / gamma * (1.0 / nu).max(1.0 / c1);
    let c_j = 1.0 / (c1 / (2.0 * nu)).min(c1 * gamma * gamma * nu / 2.0);
    let uniqueness_ratio = c_j * beta_sup / nu;
    let mut warnings = Vec::new();
    if c1 > 1.0 + 1e-8 {
        warnings.push(format!("kernel coercivity constant {c1} exceeds its upper bound 1"));
    }
    let r0_window = f_norm.map(|f_norm| r0_window(gamma, c1, nu, beta_sup, f_norm));
    ConstantsReport {
        gamma_h: gamma,
        c1_h: c1,
        c_j,
        contraction_l,
        uniqueness_ratio,
        contraction_ok: contraction_l < 1.0,
        uniqueness_ok: uniqueness_ratio < 1.0,
        nu,
        beta_sup,
        r0_window,
        warnings,
    }
}

/// The data-smallness window, with `‖a‖ = 1/ν`.
pub fn r0_window(gamma: f64, c1: f64, nu: f64, beta_sup: f64, f_norm: f64) -> R0Window {
    let a_norm = 1.0 / nu;
    let h = 1.0 + nu / c1 * a_norm;
    let cc1 = 1.0 / (2.0 * nu * gamma);
    let cc2 = cc1 / (2.0 * nu * gamma) * beta_sup * beta_sup + a_norm / (gamma * gamma) * f_norm;
    let disc = 1.0 - 2.0 * h * h * cc1 * cc2;
    let feasible = disc > 0.0;
    let (r0_min, r0_max) = if disc >= 0.0 {
        let s = disc.sqrt();
        (Some((1.0 - s) / (h * cc1)), Some((1.0 + s) / (h * cc1)))
    } else {
        (None, None)
    };
    R0Window { f_norm, h, c1: cc1, c2: cc2, feasible, r0_min, r0_max }
}

/// Full report for an assembled system. Eigensolver failures are recorded as
/// warnings with non-finite constants instead of aborting.
pub fn estimate_constants(
    space: &SpacePair,
    sys: &SparseSystem,
    beta: &ConvectionField,
    f_norm: Option<f64>,
) -> ConstantsReport {
    match discrete_constants(space, &sys.b, &ArnoldiOptions::default()) {
        Ok(c) => report_from_constants(c, sys.nu, beta.sup_norm(), f_norm),
        Err(e) => {
            let mut r = report_from_constants(
                DiscreteConstants { gamma_h: f64::NAN, c1_h: f64::NAN },
                sys.nu,
                beta.sup_norm(),
                f_norm,
            );
            r.contraction_ok = false;
            r.uniqueness_ok = false;
            r.warnings.push(format!("constant estimation failed: {e}"));
            r
        }
    }
}
