//! Dense bivariate polynomials in the monomial basis `x^a y^b`.

use std::ops::{Add, Mul};

/// Polynomial of total degree at most `degree`, with coefficients ordered by
/// total degree and then by decreasing power of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    degree: usize,
    coeffs: Vec<f64>,
}

/// Number of monomials of total degree at most `d` in two variables.
pub fn monomial_count(d: usize) -> usize {
    (d + 1) * (d + 2) / 2
}

fn index(a: usize, b: usize) -> usize {
    let total = a + b;
    total * (total + 1) / 2 + b
}

impl Poly {
    pub fn zero(degree: usize) -> Self {
        Poly { degree, coeffs: vec![0.0; monomial_count(degree)] }
    }

    /// The single monomial `c x^a y^b`.
    pub fn monomial(a: usize, b: usize, c: f64) -> Self {
        let mut p = Poly::zero(a + b);
        p.coeffs[index(a, b)] = c;
        p
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Exponent pairs `(a, b)` in storage order.
    pub fn exponents(degree: usize) -> impl Iterator<Item = (usize, usize)> {
        (0..=degree).flat_map(|t| (0..=t).map(move |b| (t - b, b)))
    }

    pub fn coeff(&self, a: usize, b: usize) -> f64 {
        if a + b > self.degree {
            0.0
        } else {
            self.coeffs[index(a, b)]
        }
    }

    fn with_degree(&self, degree: usize) -> Poly {
        let mut p = Poly::zero(degree.max(self.degree));
        for (a, b) in Self::exponents(self.degree) {
            p.coeffs[index(a, b)] = self.coeff(a, b);
        }
        p
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut xp = [1.0; 16];
        let mut yp = [1.0; 16];
        for i in 1..=self.degree {
            xp[i] = xp[i - 1] * x;
            yp[i] = yp[i - 1] * y;
        }
        Self::exponents(self.degree).zip(&self.coeffs).map(|((a, b), c)| c * xp[a] * yp[b]).sum()
    }

    pub fn dx(&self) -> Poly {
        let mut p = Poly::zero(self.degree.saturating_sub(1));
        for (a, b) in Self::exponents(self.degree) {
            if a > 0 {
                p.coeffs[index(a - 1, b)] += a as f64 * self.coeff(a, b);
            }
        }
        p
    }

    pub fn dy(&self) -> Poly {
        let mut p = Poly::zero(self.degree.saturating_sub(1));
        for (a, b) in Self::exponents(self.degree) {
            if b > 0 {
                p.coeffs[index(a, b - 1)] += b as f64 * self.coeff(a, b);
            }
        }
        p
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly { degree: self.degree, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    /// Largest exponent sum with a non-negligible coefficient.
    pub fn effective_degree(&self, tol: f64) -> usize {
        Self::exponents(self.degree)
            .zip(&self.coeffs)
            .filter(|(_, c)| c.abs() > tol)
            .map(|((a, b), _)| a + b)
            .max()
            .unwrap_or(0)
    }
}

impl Add for &Poly {
    type Output = Poly;

    fn add(self, rhs: &Poly) -> Poly {
        let mut p = self.with_degree(rhs.degree);
        for (a, b) in Poly::exponents(rhs.degree) {
            p.coeffs[index(a, b)] += rhs.coeff(a, b);
        }
        p
    }
}

impl Mul for &Poly {
    type Output = Poly;

    fn mul(self, rhs: &Poly) -> Poly {
        let mut p = Poly::zero(self.degree + rhs.degree);
        for (a, b) in Poly::exponents(self.degree) {
            let c = self.coeff(a, b);
            if c == 0.0 {
                continue;
            }
            for (e, f) in Poly::exponents(rhs.degree) {
                p.coeffs[index(a + e, b + f)] += c * rhs.coeff(e, f);
            }
        }
        p
    }
}

/// A vector-valued polynomial `(p_x, p_y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VecPoly(pub [Poly; 2]);

impl VecPoly {
    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        [self.0[0].eval(x, y), self.0[1].eval(x, y)]
    }

    pub fn div(&self) -> Poly {
        &self.0[0].dx() + &self.0[1].dy()
    }

    pub fn scale(&self, s: f64) -> VecPoly {
        VecPoly([self.0[0].scale(s), self.0[1].scale(s)])
    }

    pub fn axpy(&self, s: f64, other: &VecPoly) -> VecPoly {
        VecPoly([&self.0[0] + &other.0[0].scale(s), &self.0[1] + &other.0[1].scale(s)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn storage_order_is_bijective() {
        let d = 5;
        let mut seen = vec![false; monomial_count(d)];
        for (a, b) in Poly::exponents(d) {
            assert!(!seen[index(a, b)]);
            seen[index(a, b)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn derivatives_and_products() {
        // p = 3 x^2 y + y, q = x - 2
        let p = &Poly::monomial(2, 1, 3.0) + &Poly::monomial(0, 1, 1.0);
        let q = &Poly::monomial(1, 0, 1.0) + &Poly::monomial(0, 0, -2.0);
        let (x, y) = (0.3, -0.7);
        assert!((p.eval(x, y) - (3.0 * x * x * y + y)).abs() < 1e-15);
        assert!((p.dx().eval(x, y) - 6.0 * x * y).abs() < 1e-15);
        assert!((p.dy().eval(x, y) - (3.0 * x * x + 1.0)).abs() < 1e-15);
        let pq = &p * &q;
        assert!((pq.eval(x, y) - p.eval(x, y) * q.eval(x, y)).abs() < 1e-14);
        assert_eq!(pq.effective_degree(1e-14), 4);
    }
}
