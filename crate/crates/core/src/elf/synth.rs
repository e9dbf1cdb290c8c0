use rand::Rng;

use super::kernel::elf_kernel;
use super::promolecular::{promolecular_fields, Atom, Grid, PseudoMolecule, IN_PLANE_MARGIN};
use super::volume::ElfVolume;
use crate::error::{MmmError, Result};
use crate::tensor::stream_rng;

const BOND_LENGTH: f64 = 1.4;

// (element, Slater exponent, valence electrons)
const ELEMENTS: [(&str, f64, f64); 6] = [
    ("C", 1.625, 4.0),
    ("C", 1.625, 4.0),
    ("N", 1.95, 5.0),
    ("O", 2.275, 6.0),
    ("S", 1.817, 6.0),
    ("H", 1.0, 1.0),
];

/// Seeded planar-ish random-walk molecule of 3–12 atoms that fits `grid`.
pub fn synth_molecule(drug_id: usize, seed: u64, grid: Grid) -> Result<PseudoMolecule> {
    let limit = grid.half_extent(0).min(grid.half_extent(1)) - IN_PLANE_MARGIN;
    if limit < 0.0 {
        return Err(MmmError::InvalidArgument(format!(
            "grid {:?} too small for a {IN_PLANE_MARGIN} Å margin",
            grid.dims
        )));
    }
    let zlim = grid.half_extent(2).min(0.4);
    let mut rng = stream_rng(seed, 0xE1F0_0000_0000 + drug_id as u64);
    let n_atoms = rng.random_range(3..=12);
    let mut atoms = Vec::with_capacity(n_atoms);
    let mut prev = [0.0f64, 0.0];
    for k in 0..n_atoms {
        let pos = if k == 0 {
            prev
        } else {
            let mut next = None;
            for _ in 0..32 {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let cand = [prev[0] + BOND_LENGTH * theta.cos(), prev[1] + BOND_LENGTH * theta.sin()];
                if cand[0].abs() <= limit && cand[1].abs() <= limit {
                    next = Some(cand);
                    break;
                }
            }
            next.unwrap_or([prev[0] * 0.5, prev[1] * 0.5])
        };
        prev = pos;
        let z = if zlim > 0.0 { rng.random_range(-zlim..=zlim) } else { 0.0 };
        let (element, zeta, electrons) = ELEMENTS[rng.random_range(0..ELEMENTS.len())];
        let jitter = rng.random_range(0.9..1.1);
        atoms.push(Atom {
            element: element.to_string(),
            position: [pos[0], pos[1], z],
            zeta: zeta * jitter,
            electrons,
        });
    }
    PseudoMolecule::new(atoms)
}

/// Deterministic synthetic ELF volume for `(drug_id, seed)`.
pub fn synth_elf(drug_id: usize, seed: u64, grid: Grid) -> Result<ElfVolume> {
    let mol = synth_molecule(drug_id, seed, grid)?;
    let fields = promolecular_fields(&mol, grid)?;
    let values = elf_kernel(&fields.rho, &fields.grad, &fields.tau)?;
    ElfVolume::new(grid.dims, grid.spacing, values)
}
