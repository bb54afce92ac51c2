//! Lagrange spaces of degree 1 and 2 and assembly of
//! a(u, v) = (A∇u, ∇v) + (c u, v) and b(u, v) = (u, v).

mod assembly;
mod coefficients;
mod space;

pub use assembly::{
    assemble_load, assemble_mass, assemble_mass_full, assemble_stiffness, assemble_stiffness_full, b_norm,
    energy_norm, evaluate, interpolate, interpolate_dirichlet, prolongate, PointValue,
};
pub use coefficients::{Coefficients, Diffusion, Mat2, Monomial, Reaction, SPD_FLOOR};
pub use space::{ElementGeometry, FeSpace, LocalBasis};

#[cfg(test)]
mod tests;
