//! Electron localization function volumes: closed-form kernel, a promolecular
//! density model for synthetic molecules, slicing into patches and the
//! `.elfv` text format.

mod format;
mod kernel;
mod patches;
mod promolecular;
mod synth;
mod volume;

pub use format::{parse_elfv, read_elfv, render_elfv, write_elfv, ELFV_MAGIC};
pub use kernel::{elf_kernel, elf_value, thomas_fermi_reference, DENSITY_FLOOR};
pub use patches::{extract_patches, Patch, PatchSet, DEFAULT_PATCH_SIZE};
pub use promolecular::{
    promolecular_fields, Atom, DensityFields, Grid, PseudoMolecule, ANGSTROM_TO_BOHR, IN_PLANE_MARGIN,
};
pub use synth::{synth_elf, synth_molecule};
pub use volume::{ElfVolume, SLICE_SPACING};
