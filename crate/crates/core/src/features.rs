//! Loading ELF volumes as patch sets and the `drug_features.csv` table.

use std::path::Path;

use crate::corpus::elf_path;
use crate::elf::{extract_patches, read_elfv, PatchSet};
use crate::error::{MmmError, Result};
use crate::tensor::Tensor;

fn bad(path: &Path, e: impl std::fmt::Display) -> MmmError {
    MmmError::format(path.display().to_string(), e.to_string())
}

pub const FEATURES_FILE: &str = "drug_features.csv";

/// Patches of `elf/<id>.elfv` for drugs `0..n_drugs`.
pub fn load_drug_patches(dir: impl AsRef<Path>, n_drugs: usize, patch_size: usize) -> Result<Vec<PatchSet>> {
    (0..n_drugs)
        .map(|i| extract_patches(&read_elfv(elf_path(dir.as_ref(), i))?, patch_size, i))
        .collect()
}

/// Columns `drug_id,f0,f1,...`, one row per drug in id order.
pub fn write_features_csv(path: impl AsRef<Path>, features: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| bad(path, e))?;
    let mut header = vec!["drug_id".to_string()];
    header.extend((0..features.cols()).map(|k| format!("f{k}")));
    w.write_record(&header).map_err(|e| bad(path, e))?;
    for i in 0..features.rows() {
        let mut rec = vec![i.to_string()];
        rec.extend(features.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| bad(path, e))?;
    }
    w.flush().map_err(|e| MmmError::io(path, e))
}

pub fn read_features_csv(path: impl AsRef<Path>, n_drugs: usize) -> Result<Tensor> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(MmmError::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(path, e))?;
    let cols = r.headers().map_err(|e| bad(path, e))?.len().saturating_sub(1);
    if cols == 0 {
        return Err(bad(path, "no feature columns"));
    }
    let mut data = Vec::with_capacity(n_drugs * cols);
    let mut rows = 0;
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(path, e))?;
        let id: usize = rec[0]
            .parse()
            .map_err(|_| bad(path, format!("row {}: bad drug_id {:?}", line + 1, &rec[0])))?;
        if id != rows {
            return Err(MmmError::Validation(format!(
                "{}: expected drug {rows}, found {id}",
                path.display()
            )));
        }
        for field in rec.iter().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|_| bad(path, format!("row {}: bad value {field:?}", line + 1)))?;
            if !v.is_finite() {
                return Err(MmmError::Validation(format!("{}: non-finite feature", path.display())));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows != n_drugs {
        return Err(MmmError::Validation(format!(
            "{}: {rows} drugs, registry has {n_drugs}",
            path.display()
        )));
    }
    Tensor::from_vec(&[rows, cols], data)
}
