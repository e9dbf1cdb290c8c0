use super::volume::ElfVolume;
use crate::error::{MmmError, Result};

pub const DEFAULT_PATCH_SIZE: usize = 32;

/// One zero-padded `p × p` tile of a z-plane, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub slice: usize,
    pub tile_row: usize,
    pub tile_col: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub drug_id: usize,
    pub patch_size: usize,
    pub patches: Vec<Patch>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Tiles every z-plane into `p × p` patches ordered by (slice, tile row, tile col).
/// Tile rows run along y, tile columns along x; out-of-volume cells are 0.
pub fn extract_patches(vol: &ElfVolume, p: usize, drug_id: usize) -> Result<PatchSet> {
    let [nx, ny, nz] = vol.dims();
    if p == 0 {
        return Err(MmmError::InvalidArgument("patch size must be at least 1".into()));
    }
    if p > nx.max(ny) {
        return Err(MmmError::InvalidArgument(format!(
            "patch size {p} exceeds the larger in-plane dimension {}",
            nx.max(ny)
        )));
    }
    let rows = ny.div_ceil(p);
    let cols = nx.div_ceil(p);
    let mut patches = Vec::with_capacity(nz * rows * cols);
    for z in 0..nz {
        let plane = vol.slice(z);
        for tr in 0..rows {
            for tc in 0..cols {
                let mut values = vec![0.0; p * p];
                let (x0, y0) = (tc * p, tr * p);
                for py in 0..p.min(ny - y0) {
                    let src = &plane[(y0 + py) * nx + x0..];
                    let w = p.min(nx - x0);
                    values[py * p..py * p + w].copy_from_slice(&src[..w]);
                }
                patches.push(Patch {
                    slice: z,
                    tile_row: tr,
                    tile_col: tc,
                    values,
                });
            }
        }
    }
    Ok(PatchSet {
        drug_id,
        patch_size: p,
        patches,
    })
}
