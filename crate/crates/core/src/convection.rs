//! Divergence-free convective velocity fields `β`.

use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::DomainKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaKind {
    Zero,
    /// `(1, 0)`
    Beta1,
    /// `(cos πx sin πy, −sin πx cos πy)`
    Beta2,
    /// `(y, −x)`
    Beta3,
    /// `curl φ` with `φ = 1000 (1 − x²)² (1 − y²)²`
    Beta4,
    /// A constant field `(a, b)`.
    Axis(f64, f64),
}

impl FromStr for BetaKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "zero" | "0" | "none" => Ok(BetaKind::Zero),
            "beta1" | "1" => Ok(BetaKind::Beta1),
            "beta2" | "2" => Ok(BetaKind::Beta2),
            "beta3" | "3" => Ok(BetaKind::Beta3),
            "beta4" | "4" => Ok(BetaKind::Beta4),
            "axis" | "axis-x" => Ok(BetaKind::Axis(1.0, 0.0)),
            "axis-y" => Ok(BetaKind::Axis(0.0, 1.0)),
            _ => {
                if let Some(rest) = s.strip_prefix("axis:") {
                    let parts: Vec<&str> = rest.split(',').collect();
                    if parts.len() == 2 {
                        let a = parts[0].trim().parse::<f64>();
                        let b = parts[1].trim().parse::<f64>();
                        if let (Ok(a), Ok(b)) = (a, b) {
                            return Ok(BetaKind::Axis(a, b));
                        }
                    }
                }
                Err(Error::Config(format!("unknown convection field '{s}'")))
            }
        }
    }
}

impl std::fmt::Display for BetaKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BetaKind::Zero => write!(f, "zero"),
            BetaKind::Beta1 => write!(f, "beta1"),
            BetaKind::Beta2 => write!(f, "beta2"),
            BetaKind::Beta3 => write!(f, "beta3"),
            BetaKind::Beta4 => write!(f, "beta4"),
            BetaKind::Axis(a, b) => write!(f, "axis:{a},{b}"),
        }
    }
}

impl BetaKind {
    fn raw(self, x: [f64; 2]) -> [f64; 2] {
        let [x, y] = x;
        match self {
            BetaKind::Zero => [0.0, 0.0],
            BetaKind::Beta1 => [1.0, 0.0],
            BetaKind::Beta2 => [(PI * x).cos() * (PI * y).sin(), -(PI * x).sin() * (PI * y).cos()],
            BetaKind::Beta3 => [y, -x],
            BetaKind::Beta4 => {
                let (ax, ay) = (1.0 - x * x, 1.0 - y * y);
                [-4000.0 * y * ax * ax * ay, 4000.0 * x * ax * ay * ay]
            }
            BetaKind::Axis(a, b) => [a, b],
        }
    }

    fn raw_divergence(self, x: [f64; 2]) -> f64 {
        let [x, y] = x;
        match self {
            BetaKind::Zero | BetaKind::Beta1 | BetaKind::Beta3 | BetaKind::Axis(..) => 0.0,
            BetaKind::Beta2 => -PI * (PI * x).sin() * (PI * y).sin() + PI * (PI * x).sin() * (PI * y).sin(),
            BetaKind::Beta4 => {
                let (ax, ay) = (1.0 - x * x, 1.0 - y * y);
                // ∂x(−4000 y ax² ay) + ∂y(4000 x ax ay²)
                -4000.0 * y * ay * (2.0 * ax * (-2.0 * x)) + 4000.0 * x * ax * (2.0 * ay * (-2.0 * y))
            }
        }
    }

    /// Polynomial degree of the field, `None` for trigonometric fields.
    pub fn polynomial_degree(self) -> Option<usize> {
        match self {
            BetaKind::Zero | BetaKind::Beta1 | BetaKind::Axis(..) => Some(0),
            BetaKind::Beta3 => Some(1),
            BetaKind::Beta4 => Some(7),
            BetaKind::Beta2 => None,
        }
    }

    /// `‖β‖_{∞,Ω}` of the raw field.
    pub fn sup_norm(self, domain: DomainKind) -> f64 {
        match self {
            BetaKind::Zero => 0.0,
            BetaKind::Beta1 | BetaKind::Beta2 => 1.0,
            // attained at (1, 1), which belongs to both domains
            BetaKind::Beta3 => 2f64.sqrt(),
            BetaKind::Axis(a, b) => a.hypot(b),
            BetaKind::Beta4 => sampled_sup_norm_beta4(domain),
        }
    }
}

/// Grid points per direction for sampled sup norms.
pub const SUP_SAMPLES: usize = 2001;

fn sampled_sup_norm_beta4(domain: DomainKind) -> f64 {
    static SQUARE: OnceLock<f64> = OnceLock::new();
    static LSHAPE: OnceLock<f64> = OnceLock::new();
    let cell = match domain {
        DomainKind::Square => &SQUARE,
        DomainKind::Lshape => &LSHAPE,
    };
    *cell.get_or_init(|| grid_sup(BetaKind::Beta4, domain, SUP_SAMPLES))
}

fn domain_box(domain: DomainKind) -> ([f64; 2], f64) {
    match domain {
        DomainKind::Square => ([0.0, 0.0], 1.0),
        DomainKind::Lshape => ([-1.0, -1.0], 2.0),
    }
}

fn in_closure(domain: DomainKind, x: [f64; 2]) -> bool {
    match domain {
        DomainKind::Square => true,
        DomainKind::Lshape => !(x[0] < 0.0 && x[1] < 0.0),
    }
}

fn grid_sup(kind: BetaKind, domain: DomainKind, n: usize) -> f64 {
    let (origin, width) = domain_box(domain);
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = [origin[0] + width * i as f64 / (n - 1) as f64, origin[1] + width * j as f64 / (n - 1) as f64];
            if in_closure(domain, x) {
                let v = kind.raw(x);
                best = best.max(v[0].hypot(v[1]));
            }
        }
    }
    best
}

/// A convective field with optional normalization and scaling:
/// `β = s β_raw / ‖β_raw‖_∞` if normalized, `β = s β_raw` otherwise, so a
/// normalized field has `‖β‖_∞ = |s|`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConvectionField {
    pub kind: BetaKind,
    pub domain: DomainKind,
    pub normalized: bool,
    pub scale: f64,
    factor: f64,
}

impl ConvectionField {
    pub fn new(kind: BetaKind, domain: DomainKind, normalized: bool, scale: f64) -> Result<Self> {
        if !scale.is_finite() {
            return Err(Error::InvalidArgument(format!("convection scale {scale} is not finite")));
        }
        let raw_sup = kind.sup_norm(domain);
        let factor = if normalized && raw_sup > 0.0 { scale / raw_sup } else { scale };
        Ok(ConvectionField { kind, domain, normalized, scale, factor })
    }

    pub fn zero(domain: DomainKind) -> Self {
        ConvectionField { kind: BetaKind::Zero, domain, normalized: false, scale: 1.0, factor: 0.0 }
    }

    /// Normalized field with unit scale, the default setting of the experiments.
    pub fn normalized(kind: BetaKind, domain: DomainKind) -> Self {
        Self::new(kind, domain, true, 1.0).expect("unit scale is finite")
    }

    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        let v = self.kind.raw(x);
        [self.factor * v[0], self.factor * v[1]]
    }

    pub fn divergence(&self, x: [f64; 2]) -> f64 {
        self.factor * self.kind.raw_divergence(x)
    }

    /// `‖β‖_{∞,Ω}` of the effective field.
    pub fn sup_norm(&self) -> f64 {
        self.factor.abs() * self.kind.sup_norm(self.domain)
    }

    pub fn is_zero(&self) -> bool {
        self.factor == 0.0 || self.kind == BetaKind::Zero
    }

    /// Extra quadrature degree needed to integrate products with `β`.
    pub fn quadrature_degree(&self) -> usize {
        if self.is_zero() {
            return 0;
        }
        self.kind.polynomial_degree().unwrap_or(8)
    }
}
