//! Symmetric quadrature rules on the reference triangle `(0,0), (1,0), (0,1)`.
//!
//! Rules up to degree 9 are the classical fully symmetric (Dunavant) rules with
//! positive weights; degree 10 uses a collapsed Gauss-Legendre product that is
//! symmetrized over the six vertex permutations.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Highest polynomial degree served by [`rule_for_degree`].
pub const MAX_DEGREE: usize = 10;

/// Quadrature rule on the reference triangle. Weights sum to the reference area 1/2.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integrates `f` over the reference triangle.
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p[0], p[1])).sum()
    }
}

/// Returns a rule exact for polynomials of total degree `d` (or higher).
pub fn rule_for_degree(d: usize) -> Result<&'static QuadRule> {
    if d > MAX_DEGREE {
        return Err(Error::Unsupported(format!("quadrature degree {d} exceeds maximum {MAX_DEGREE}")));
    }
    static RULES: OnceLock<Vec<QuadRule>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (0..=MAX_DEGREE).map(build_rule).collect());
    Ok(&rules[d])
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev-type initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes.push(0.5 * (1.0 - x));
        weights.push(0.5 * w);
    }
    (nodes, weights)
}

/// Legendre polynomial `P_n(x)` on `[-1, 1]` and its derivative.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shifted Legendre polynomials on `[0, 1]`, `P_0..=P_n` evaluated at `s`.
pub fn shifted_legendre(n: usize, s: f64) -> Vec<f64> {
    let x = 2.0 * s - 1.0;
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(x);
    }
    for k in 2..=n {
        let kf = k as f64;
        let v = ((2.0 * kf - 1.0) * x * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
        out.push(v);
    }
    out
}

enum Orbit {
    Centroid(f64),
    /// Barycentric `(1-2a, a, a)` and permutations.
    S21(f64, f64),
    /// Barycentric `(a, b, 1-a-b)` and all six permutations.
    S111(f64, f64, f64),
}

fn symmetric_rule(orbits: &[Orbit], exact_degree: usize) -> QuadRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for orbit in orbits {
        match *orbit {
            Orbit::Centroid(w) => {
                points.push([1.0 / 3.0, 1.0 / 3.0]);
                weights.push(w);
            }
            Orbit::S21(a, w) => {
                let b = 1.0 - 2.0 * a;
                for bary in [[b, a, a], [a, b, a], [a, a, b]] {
                    points.push([bary[1], bary[2]]);
                    weights.push(w);
                }
            }
            Orbit::S111(a, b, w) => {
                let c = 1.0 - a - b;
                for bary in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
                    points.push([bary[1], bary[2]]);
                    weights.push(w);
                }
            }
        }
    }
    // Tabulated weights are normalized to unit area.
    for w in &mut weights {
        *w *= 0.5;
    }
    QuadRule { points, weights, exact_degree }
}

fn symmetrized_collapsed_rule(exact_degree: usize) -> QuadRule {
    // x = s, y = t (1 - s), Jacobian (1 - s): degree d+1 in s, d in t.
    let n = (exact_degree + 3) / 2;
    let (nodes, wts) = gauss_legendre_unit(n);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (s, ws) in nodes.iter().zip(&wts) {
        for (t, wt) in nodes.iter().zip(&wts) {
            let x = *s;
            let y = t * (1.0 - s);
            let w = ws * wt * (1.0 - s);
            let l0 = 1.0 - x - y;
            for bary in [[l0, x, y], [l0, y, x], [x, l0, y], [x, y, l0], [y, l0, x], [y, x, l0]] {
                points.push([bary[1], bary[2]]);
                weights.push(w / 6.0);
            }
        }
    }
    QuadRule { points, weights, exact_degree }
}

fn build_rule(d: usize) -> QuadRule {
    use Orbit::*;
    match d {
        0 | 1 => symmetric_rule(&[Centroid(1.0)], 1),
        2 => symmetric_rule(&[S21(1.0 / 6.0, 1.0 / 3.0)], 2),
        3 | 4 => symmetric_rule(
            &[S21(0.445_948_490_915_965, 0.223_381_589_678_011), S21(0.091_576_213_509_771, 0.109_951_743_655_322)],
            4,
        ),
        5 => symmetric_rule(
            &[
                Centroid(0.225),
                S21(0.470_142_064_105_115, 0.132_394_152_788_506),
                S21(0.101_286_507_323_456, 0.125_939_180_544_827),
            ],
            5,
        ),
        6 => symmetric_rule(
            &[
                S21(0.249_286_745_170_910, 0.116_786_275_726_379),
                S21(0.063_089_014_491_502, 0.050_844_906_370_207),
                S111(0.053_145_049_844_817, 0.310_352_451_033_784, 0.082_851_075_618_374),
            ],
            6,
        ),
        7 | 8 => symmetric_rule(
            &[
                Centroid(0.144_315_607_677_787),
                S21(0.459_292_588_292_723, 0.095_091_634_267_285),
                S21(0.170_569_307_751_760, 0.103_217_370_534_718),
                S21(0.050_547_228_317_031, 0.032_458_497_623_198),
                S111(0.008_394_777_409_958, 0.263_112_829_634_638, 0.027_230_314_174_435),
            ],
            8,
        ),
        9 => symmetric_rule(
            &[
                Centroid(0.097_135_796_282_799),
                S21(0.489_682_519_198_738, 0.031_334_700_227_139),
                S21(0.437_089_591_492_937, 0.077_827_541_004_774),
                S21(0.188_203_535_619_033, 0.079_647_738_927_210),
                S21(0.044_729_513_394_453, 0.025_577_675_658_698),
                S111(0.036_838_412_054_736, 0.221_962_989_160_766, 0.043_283_539_377_289),
            ],
            9,
        ),
        _ => symmetrized_collapsed_rule(d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    fn monomial_exact(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn centroid_rule_for_degree_zero() {
        let r = rule_for_degree(0).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r.weights[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_and_x2y() {
        let r = rule_for_degree(3).unwrap();
        assert!((r.integrate(|_, _| 1.0) - 0.5).abs() < 1e-14);
        assert!((r.integrate(|x, y| x * x * y) - 1.0 / 60.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_degree_above_max() {
        assert!(rule_for_degree(MAX_DEGREE + 1).is_err());
    }

    #[test]
    fn all_rules_exact_with_positive_weights() {
        for d in 0..=MAX_DEGREE {
            let r = rule_for_degree(d).unwrap();
            assert!(r.exact_degree >= d);
            assert!(r.weights.iter().all(|&w| w > 0.0), "degree {d}");
            let sum: f64 = r.weights.iter().sum();
            assert!((sum - 0.5).abs() < 1e-14, "degree {d}: {sum}");
            for a in 0..=d as u32 {
                for b in 0..=(d as u32 - a) {
                    let got = r.integrate(|x, y| x.powi(a as i32) * y.powi(b as i32));
                    let want = monomial_exact(a, b);
                    assert!(((got - want) / want).abs() < 1e-13, "degree {d}, x^{a} y^{b}: {got} vs {want}");
                }
            }
            for p in &r.points {
                assert!(p[0] > 0.0 && p[1] > 0.0 && p[0] + p[1] < 1.0);
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..8 {
            let (x, w) = gauss_legendre_unit(n);
            for p in 0..(2 * n) as i32 {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
                assert!((got - 1.0 / (p as f64 + 1.0)).abs() < 1e-14);
            }
        }
    }
}
