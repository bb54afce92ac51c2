use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, ScalarFn};

pub type Mat2 = [[f64; 2]; 2];

/// Smallest admissible eigenvalue of the diffusion tensor.
pub const SPD_FLOOR: f64 = 1e-12;

/// Diffusion tensor A, constant on each region tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Diffusion {
    /// A = α I
    Isotropic(f64),
    PerRegion { default: Mat2, regions: BTreeMap<i32, Mat2> },
}

impl Diffusion {
    pub fn tensor(&self, region: i32) -> Mat2 {
        match self {
            Diffusion::Isotropic(a) => [[*a, 0.0], [0.0, *a]],
            Diffusion::PerRegion { default, regions } => *regions.get(&region).unwrap_or(default),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |m: &Mat2| -> Result<()> {
            if m.iter().flatten().any(|v| !v.is_finite()) || (m[0][1] - m[1][0]).abs() > 1e-14 * (m[0][0].abs() + m[1][1].abs()) {
                return Err(Error::InvalidArgument(format!("diffusion tensor {m:?} is not symmetric and finite")));
            }
            let tr = m[0][0] + m[1][1];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let min_eig = 0.5 * tr - (0.25 * tr * tr - det).max(0.0).sqrt();
            if min_eig < SPD_FLOOR {
                return Err(Error::InvalidArgument(format!("diffusion tensor {m:?} is not positive definite")));
            }
            Ok(())
        };
        match self {
            Diffusion::Isotropic(a) => check(&[[*a, 0.0], [0.0, *a]]),
            Diffusion::PerRegion { default, regions } => {
                check(default)?;
                regions.values().try_for_each(check)
            }
        }
    }
}

/// Monomial coef · x^px · y^py.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub px: u32,
    pub py: u32,
}

/// Reaction coefficient c ≥ 0.
#[derive(Clone)]
pub enum Reaction {
    Constant(f64),
    Polynomial(Vec<Monomial>),
    /// c(x) = Σ_k a_k |x|^(2k)
    Radial(Vec<f64>),
    Function(ScalarFn),
}

impl fmt::Debug for Reaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reaction::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            Reaction::Polynomial(m) => f.debug_tuple("Polynomial").field(m).finish(),
            Reaction::Radial(a) => f.debug_tuple("Radial").field(a).finish(),
            Reaction::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl Reaction {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        match self {
            Reaction::Constant(c) => *c,
            Reaction::Polynomial(terms) => terms
                .iter()
                .map(|m| m.coef * p[0].powi(m.px as i32) * p[1].powi(m.py as i32))
                .sum(),
            Reaction::Radial(a) => {
                let r2 = p[0] * p[0] + p[1] * p[1];
                a.iter().rev().fold(0.0, |acc, &ak| acc * r2 + ak)
            }
            Reaction::Function(f) => f(p),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Reaction::Constant(c) => *c == 0.0,
            Reaction::Polynomial(t) => t.iter().all(|m| m.coef == 0.0),
            Reaction::Radial(a) => a.iter().all(|&v| v == 0.0),
            Reaction::Function(_) => false,
        }
    }

    /// Polynomial degree, used to raise quadrature orders so that mass-type
    /// integrals stay exact. Non-polynomial functions report 2.
    pub fn degree(&self) -> usize {
        match self {
            Reaction::Constant(_) => 0,
            Reaction::Polynomial(t) => t.iter().filter(|m| m.coef != 0.0).map(|m| (m.px + m.py) as usize).max().unwrap_or(0),
            Reaction::Radial(a) => a.iter().rposition(|&v| v != 0.0).map_or(0, |k| 2 * k),
            Reaction::Function(_) => 2,
        }
    }
}

/// Coefficients of a(u, v) = (A∇u, ∇v) + (c u, v).
#[derive(Clone, Debug)]
pub struct Coefficients {
    pub diffusion: Diffusion,
    pub reaction: Reaction,
}

impl Coefficients {
    pub fn laplace() -> Self {
        Self {
            diffusion: Diffusion::Isotropic(1.0),
            reaction: Reaction::Constant(0.0),
        }
    }

    pub fn new(diffusion: Diffusion, reaction: Reaction) -> Result<Self> {
        diffusion.validate()?;
        Ok(Self { diffusion, reaction })
    }

    /// Reaction value with the finiteness and sign checks applied.
    pub fn reaction_at(&self, p: [f64; 2]) -> Result<f64> {
        let c = self.reaction.eval(p);
        if !c.is_finite() {
            return Err(Error::NonFiniteCoefficient { x: p[0], y: p[1] });
        }
        if c < 0.0 {
            return Err(Error::InvalidArgument(format!("negative reaction coefficient {c} at {p:?}")));
        }
        Ok(c)
    }
}
