//! Pressure recovery, convergence-rate fitting and spectrum filtering.

use serde::Serialize;

use crate::c64;
use crate::convection::ConvectionField;
use crate::eigensolver::serialize_c64;
use crate::error::{Error, Result};
use crate::spaces::SpacePair;

/// Piecewise `P_k` pressure, `dim_pk` coefficients per cell in the velocity monomial basis.
#[derive(Debug, Clone, Serialize)]
pub struct PressureField {
    pub degree: usize,
    pub coeffs: Vec<f64>,
    /// `∫_Ω p_h`.
    pub mean: f64,
    /// `‖p_h‖_{0,Ω}`.
    pub l2_norm: f64,
}

/// `p = −½ (tr σ + u·β − mean(tr σ) − mean(u·β))`, projected cellwise onto `P_k`.
///
/// Subtracting the mean of `tr σ` as well makes the result independent of the
/// `ℝI` component of `σ`; for `σ` with zero mean trace it is the plain formula.
pub fn recover_pressure(space: &SpacePair, sigma: &[f64], u: &[f64], beta: &ConvectionField) -> Result<PressureField> {
    if sigma.len() != space.n_sigma || u.len() != space.n_u {
        return Err(Error::InvalidArgument("coefficient vectors do not match the space".into()));
    }
    let quad = (space.element.poly_degree() + space.velocity_degree + beta.quadrature_degree())
        .max(2 * space.velocity_degree)
        .min(crate::quadrature::MAX_DEGREE);
    let tab = space.tabulate(quad)?;
    let rule = tab.rule;
    let ncell = space.mesh.n_cells();
    // pointwise raw values tr σ + u·β
    let mut raw = vec![vec![0.0; rule.len()]; ncell];
    let mut integral = 0.0;
    for (cell, rc) in raw.iter_mut().enumerate() {
        let map = space.cell_map(cell);
        for (q, p) in rule.points.iter().enumerate() {
            let (t, _) = space.eval_sigma(sigma, cell, *p);
            let v = space.eval_u(u, cell, *p);
            let b = beta.eval(map.to_physical(*p));
            let val = t[0][0] + t[1][1] + v[0] * b[0] + v[1] * b[1];
            rc[q] = val;
            integral += rule.weights[q] * map.det.abs() * val;
        }
    }
    let mean_value = integral / space.mesh.total_area();
    let mass = space.reference_velocity_mass()?;
    let np = space.dim_pk;
    let mut coeffs = vec![0.0; ncell * np];
    let mut mean = 0.0;
    let mut l2 = 0.0;
    for (cell, rc) in raw.iter().enumerate() {
        let det = space.cell_map(cell).det.abs();
        let mut rhs = vec![0.0; np];
        for (q, w) in rule.weights.iter().enumerate() {
            let p = -0.5 * (rc[q] - mean_value);
            for (i, psi) in tab.u_vals[q].iter().enumerate() {
                rhs[i] += w * p * psi;
            }
        }
        let c = mass.solve(&rhs);
        for (q, w) in rule.weights.iter().enumerate() {
            let ph: f64 = c.iter().zip(&tab.u_vals[q]).map(|(a, b)| a * b).sum();
            mean += w * det * ph;
            l2 += w * det * ph * ph;
        }
        coeffs[cell * np..(cell + 1) * np].copy_from_slice(&c);
    }
    Ok(PressureField { degree: space.velocity_degree, coeffs, mean, l2_norm: l2.sqrt() })
}

/// Result of fitting `λ_h ≈ λ_extr + C h^α`.
#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    /// `None` encodes the all-equal sentinel `α = ∞`.
    pub alpha: Option<f64>,
    #[serde(serialize_with = "serialize_c64")]
    pub lambda_extr: c64,
    #[serde(serialize_with = "serialize_c64")]
    pub constant: c64,
    /// `sqrt(Σ |λ_i − λ_extr − C h_i^α|²)`.
    pub residual: f64,
    /// Set when `|λ_h − λ_extr|` does not decrease with `h`.
    pub non_monotone: bool,
}

/// Search interval for the order.
pub const ALPHA_RANGE: (f64, f64) = (0.5, 8.0);

/// Best `(λ_extr, C)` for a fixed order, and the residual norm.
fn linear_fit(hs: &[f64], ls: &[c64], alpha: f64) -> (c64, c64, f64) {
    let x: Vec<f64> = hs.iter().map(|h| h.powf(alpha)).collect();
    let n = hs.len() as f64;
    let sx: f64 = x.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sl: c64 = ls.iter().sum();
    let sxl: c64 = x.iter().zip(ls).map(|(a, l)| l * a).sum();
    let det = n * sxx - sx * sx;
    let c = (sxl * n - sl * sx) / det;
    let e = (sl - c * sx) / n;
    let r = x.iter().zip(ls).map(|(a, l)| (l - e - c * a).norm_sqr()).sum::<f64>().sqrt();
    (e, c, r)
}

/// Fits `λ_h ≈ λ_extr + C h^α` by golden-section search on `α` with an inner
/// linear least-squares solve. Input order does not matter.
pub fn fit_rate(levels: &[(f64, c64)]) -> Result<RateFit> {
    if levels.len() < 3 {
        return Err(Error::InvalidArgument(format!("rate fit needs at least 3 levels, got {}", levels.len())));
    }
    let mut sorted = levels.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) || sorted.iter().any(|l| !(l.0 > 0.0)) {
        return Err(Error::InvalidArgument("rate fit needs distinct positive mesh sizes".into()));
    }
    let hs: Vec<f64> = sorted.iter().map(|l| l.0).collect();
    let ls: Vec<c64> = sorted.iter().map(|l| l.1).collect();
    let scale = ls.iter().map(|l| l.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    if ls.iter().all(|l| (l - ls[0]).norm() <= 1e-15 * scale) {
        return Ok(RateFit {
            alpha: None,
            lambda_extr: ls[ls.len() - 1],
            constant: c64::new(0.0, 0.0),
            residual: 0.0,
            non_monotone: false,
        });
    }
    let obj = |a: f64| linear_fit(&hs, &ls, a).2;
    // coarse scan to bracket the global minimum, then golden-section refinement
    let samples = 301;
    let (lo, hi) = ALPHA_RANGE;
    let grid: Vec<f64> = (0..samples).map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&a| obj(a)).collect();
    let best = (0..samples).fold(0, |b, i| if vals[i] < vals[b] { i } else { b });
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(samples - 1)];
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (obj(c), obj(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-14 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = obj(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = obj(d);
        }
    }
    let alpha = 0.5 * (a + b);
    let (e, cst, r) = linear_fit(&hs, &ls, alpha);
    let errs: Vec<f64> = ls.iter().map(|l| (l - e).norm()).collect();
    let non_monotone = errs.windows(2).any(|w| w[1] > w[0]);
    Ok(RateFit { alpha: Some(alpha), lambda_extr: e, constant: cst, residual: r, non_monotone })
}

/// Rectangular window in the complex plane; `None` bounds are open.
#[derive(Debug, Clone, Copy, Default)]
pub struct Window {
    pub re_min: Option<f64>,
    pub re_max: Option<f64>,
    pub im_min: Option<f64>,
    pub im_max: Option<f64>,
}

impl Window {
    pub fn contains(&self, z: c64) -> bool {
        self.re_min.is_none_or(|v| z.re >= v)
            && self.re_max.is_none_or(|v| z.re <= v)
            && self.im_min.is_none_or(|v| z.im >= v)
            && self.im_max.is_none_or(|v| z.im <= v)
    }
}

/// Tolerance for treating `λ` and `μ` as a conjugate pair.
pub fn conjugate_tolerance(z: c64) -> f64 {
    1e-6 * z.norm().max(1.0)
}

pub fn is_conjugate_pair(a: c64, b: c64) -> bool {
    a.im != 0.0 && (a - b.conj()).norm() <= conjugate_tolerance(a)
}

/// Whether `z` is real up to the pairing tolerance.
pub fn is_real(z: c64) -> bool {
    z.im.abs() <= conjugate_tolerance(z)
}

/// Values inside `window`, sorted by real then imaginary part, with conjugate
/// partners adjacent (negative imaginary part first).
pub fn filter_spectrum(values: &[c64], window: &Window) -> Vec<c64> {
    let mut inside: Vec<c64> = values.iter().copied().filter(|z| window.contains(*z)).collect();
    inside.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut used = vec![false; inside.len()];
    let mut out = Vec::with_capacity(inside.len());
    for i in 0..inside.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let z = inside[i];
        if is_real(z) {
            out.push(z);
            continue;
        }
        let partner = (i + 1..inside.len()).find(|&j| !used[j] && is_conjugate_pair(z, inside[j]));
        match partner {
            Some(j) => {
                used[j] = true;
                let w = inside[j];
                if z.im <= w.im {
                    out.extend([z, w]);
                } else {
                    out.extend([w, z]);
                }
            }
            None => out.push(z),
        }
    }
    out
}

/// Number of conjugate pairs in a list.
pub fn count_conjugate_pairs(values: &[c64]) -> usize {
    let grouped = filter_spectrum(values, &Window::default());
    let mut count = 0;
    let mut i = 0;
    while i + 1 < grouped.len() {
        if !is_real(grouped[i]) && is_conjugate_pair(grouped[i], grouped[i + 1]) {
            count += 1;
            i += 2;
        } else {
            i += 1;
        }
    }
    count
}
