use crate::error::{MmmError, Result};
use crate::tensor::Fnv;

/// Spacing between slicing planes along z, in Å.
pub const SLICE_SPACING: f64 = 0.25;

/// Scalar ELF grid, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ElfVolume {
    dims: [usize; 3],
    spacing: [f64; 3],
    values: Vec<f64>,
}

impl ElfVolume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], values: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(MmmError::Validation(format!("volume dims {dims:?} must be positive")));
        }
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(MmmError::Validation(format!("volume spacing {spacing:?} must be positive")));
        }
        if spacing[2] != SLICE_SPACING {
            return Err(MmmError::Validation(format!(
                "slice-axis spacing must be {SLICE_SPACING} Å, got {}",
                spacing[2]
            )));
        }
        let n = dims[0] * dims[1] * dims[2];
        if values.len() != n {
            return Err(MmmError::Shape(format!(
                "volume {dims:?} needs {n} values, got {}",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(MmmError::Validation(format!(
                "ELF value {v} at index {i} is outside [0, 1]"
            )));
        }
        Ok(Self {
            dims,
            spacing,
            values,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.index(x, y, z)]
    }

    /// One z-plane, x-fastest.
    pub fn slice(&self, z: usize) -> &[f64] {
        let plane = self.dims[0] * self.dims[1];
        &self.values[z * plane..(z + 1) * plane]
    }

    pub fn checksum(&self) -> u64 {
        let mut h = Fnv::new();
        for d in self.dims {
            h.write(&(d as u64).to_le_bytes());
        }
        for v in self.spacing.iter().chain(&self.values) {
            h.write(&v.to_bits().to_le_bytes());
        }
        h.finish()
    }
}
