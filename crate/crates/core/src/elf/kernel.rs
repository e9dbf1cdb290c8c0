//! Becke–Edgecombe localization kernel with the Thomas–Fermi reference.

use std::f64::consts::PI;

use crate::error::{MmmError, Result};

/// Densities at or below this (atomic units) are vacuum: ELF is defined as 0.
pub const DENSITY_FLOOR: f64 = 1e-10;

/// `D_h = (3/10)(3π²)^(2/3) ρ^(5/3)`.
pub fn thomas_fermi_reference(rho: f64) -> f64 {
    0.3 * (3.0 * PI * PI).powf(2.0 / 3.0) * rho.powf(5.0 / 3.0)
}

/// ELF at one point from density, density gradient and positive-definite
/// kinetic energy density.
pub fn elf_value(rho: f64, grad: [f64; 3], tau: f64) -> f64 {
    if rho <= DENSITY_FLOOR {
        return 0.0;
    }
    let grad_sq = grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2];
    let excess = (tau - grad_sq / (8.0 * rho)).max(0.0);
    let chi = excess / thomas_fermi_reference(rho);
    1.0 / (1.0 + chi * chi)
}

pub fn elf_kernel(rho: &[f64], grad: &[[f64; 3]], tau: &[f64]) -> Result<Vec<f64>> {
    if rho.len() != grad.len() || rho.len() != tau.len() {
        return Err(MmmError::Shape(format!(
            "field lengths differ: rho {}, grad {}, tau {}",
            rho.len(),
            grad.len(),
            tau.len()
        )));
    }
    if let Some(bad) = rho.iter().find(|r| !(**r >= 0.0)) {
        return Err(MmmError::Validation(format!("negative or NaN density {bad}")));
    }
    Ok(rho
        .iter()
        .zip(grad)
        .zip(tau)
        .map(|((&r, &g), &t)| elf_value(r, g, t))
        .collect())
}
