//! Sum-of-atoms Slater densities on a regular grid.

use std::f64::consts::PI;

use super::volume::SLICE_SPACING;
use crate::error::{MmmError, Result};

pub const ANGSTROM_TO_BOHR: f64 = 1.889_726_124_565_062;

/// Clearance required between atoms and the x/y faces of the grid, in Å.
pub const IN_PLANE_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub element: String,
    /// Å, relative to the grid centre.
    pub position: [f64; 3],
    /// Slater exponent in bohr⁻¹.
    pub zeta: f64,
    pub electrons: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMolecule {
    atoms: Vec<Atom>,
}

impl PseudoMolecule {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(MmmError::Validation("molecule has no atoms".into()));
        }
        for a in &atoms {
            if !(a.zeta > 0.0 && a.zeta.is_finite()) || !(a.electrons > 0.0 && a.electrons.is_finite()) {
                return Err(MmmError::Validation(format!(
                    "atom {} needs positive exponent and electron count (ζ={}, N={})",
                    a.element, a.zeta, a.electrons
                )));
            }
            if a.position.iter().any(|c| !c.is_finite()) {
                return Err(MmmError::Validation(format!("atom {} has a non-finite position", a.element)));
            }
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn translated(&self, shift: [f64; 3]) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                position: [
                    a.position[0] + shift[0],
                    a.position[1] + shift[1],
                    a.position[2] + shift[2],
                ],
                ..a.clone()
            })
            .collect();
        Self { atoms }
    }
}

/// Regular grid centred on the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dims: [usize; 3],
    /// Å per voxel.
    pub spacing: [f64; 3],
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            dims: [64, 64, 8],
            spacing: [0.25, 0.25, SLICE_SPACING],
        }
    }
}

impl Grid {
    pub fn n_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    /// Coordinate of voxel centre `i` along `axis`, in Å.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        (i as f64 - (self.dims[axis] as f64 - 1.0) / 2.0) * self.spacing[axis]
    }

    pub fn half_extent(&self, axis: usize) -> f64 {
        (self.dims[axis] as f64 - 1.0) / 2.0 * self.spacing[axis]
    }

    /// Atoms must clear the x/y faces by [`IN_PLANE_MARGIN`] and lie inside
    /// the slab along z (the slab is only a few planes thick).
    pub fn check_encloses(&self, mol: &PseudoMolecule) -> Result<()> {
        for a in mol.atoms() {
            for axis in 0..2 {
                let limit = self.half_extent(axis) - IN_PLANE_MARGIN;
                if a.position[axis].abs() > limit {
                    return Err(MmmError::Validation(format!(
                        "atom {} at {:?} is within {IN_PLANE_MARGIN} Å of the grid boundary",
                        a.element, a.position
                    )));
                }
            }
            let zlim = self.half_extent(2) + self.spacing[2] / 2.0;
            if a.position[2].abs() > zlim {
                return Err(MmmError::Validation(format!(
                    "atom {} at {:?} lies outside the slicing slab",
                    a.element, a.position
                )));
            }
        }
        Ok(())
    }
}

/// Density, its gradient and kinetic energy density on a grid (atomic units).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityFields {
    pub grid: Grid,
    pub rho: Vec<f64>,
    pub grad: Vec<[f64; 3]>,
    pub tau: Vec<f64>,
}

/// Evaluates `ρ = Σ N ζ³/π e^{-2ζr}`, its analytic gradient, and
/// `τ = Σ |∇ρ_A|²/(8ρ_A)`, which is exact for isolated single-orbital atoms.
pub fn promolecular_fields(mol: &PseudoMolecule, grid: Grid) -> Result<DensityFields> {
    if grid.dims.contains(&0) || grid.spacing.iter().any(|s| !(*s > 0.0)) {
        return Err(MmmError::InvalidArgument(format!("degenerate grid {grid:?}")));
    }
    grid.check_encloses(mol)?;
    let [nx, ny, nz] = grid.dims;
    let n = grid.n_voxels();
    let mut rho = vec![0.0; n];
    let mut grad = vec![[0.0; 3]; n];
    let mut tau = vec![0.0; n];

    let atoms: Vec<([f64; 3], f64, f64)> = mol
        .atoms()
        .iter()
        .map(|a| {
            let pos = a.position.map(|c| c * ANGSTROM_TO_BOHR);
            (pos, a.zeta, a.electrons * a.zeta.powi(3) / PI)
        })
        .collect();

    for z in 0..nz {
        let pz = grid.coord(2, z) * ANGSTROM_TO_BOHR;
        for y in 0..ny {
            let py = grid.coord(1, y) * ANGSTROM_TO_BOHR;
            for x in 0..nx {
                let px = grid.coord(0, x) * ANGSTROM_TO_BOHR;
                let idx = x + nx * (y + ny * z);
                let (mut r_sum, mut g_sum, mut t_sum) = (0.0, [0.0; 3], 0.0);
                for &(a, zeta, prefactor) in &atoms {
                    let d = [px - a[0], py - a[1], pz - a[2]];
                    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    let rho_a = prefactor * (-2.0 * zeta * r).exp();
                    if rho_a <= 0.0 {
                        continue;
                    }
                    r_sum += rho_a;
                    if r > 0.0 {
                        let scale = -2.0 * zeta * rho_a / r;
                        let g = [scale * d[0], scale * d[1], scale * d[2]];
                        for k in 0..3 {
                            g_sum[k] += g[k];
                        }
                        t_sum += (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]) / (8.0 * rho_a);
                    }
                }
                rho[idx] = r_sum;
                grad[idx] = g_sum;
                tau[idx] = t_sum;
            }
        }
    }
    Ok(DensityFields {
        grid,
        rho,
        grad,
        tau,
    })
}
