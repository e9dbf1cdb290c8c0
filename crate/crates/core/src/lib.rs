//! Drug-combination recommendation from longitudinal diagnosis/procedure
//! histories, fusing ELF-volume drug features with substructure-masked
//! weights, trained under a fixed-weight accuracy + interaction loss.

pub mod bipartite;
pub mod checkpoint;
pub mod corpus;
pub mod elf;
pub mod drug;
pub mod error;
pub mod experiment;
pub mod features;
pub mod eval;
pub mod model;
pub mod objective;
pub mod optim;
pub mod patient;
pub mod tensor;
pub mod train;

pub use error::{MmmError, Result};
