//! Browser bindings. Each export returns a JSON string; the `*_json`
//! functions hold the logic so they can be tested natively.

use mmm_core::corpus::{stratified_split, synth_dataset, DdiMatrix, SynthSpec, TargetStats, DEFAULT_RATIOS};
use mmm_core::elf::{synth_elf, synth_molecule, Grid};
use mmm_core::model::{standardize_columns, Ablation, DrugFeatures};
use mmm_core::objective::total_loss;
use mmm_core::tensor::{stream_rng, Tensor};
use mmm_core::train::{fit_with, HyperParams};
use mmm_core::Result;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Vocabulary of the toy corpus used by `train_toy`.
pub const TOY_STATS: TargetStats = TargetStats {
    n_dx: 60,
    n_px: 30,
    n_drugs: 24,
    n_substructures: 30,
    ddi_pairs: 40,
    mean_visits: 2.6,
    max_visits: 6,
    mean_dx: 5.0,
    max_dx: 12,
    mean_px: 2.0,
    max_px: 6,
    mean_meds: 5.0,
    max_meds: 10,
};

const TOY_FEATURES: usize = 8;

/// One z-plane of a synthetic drug's ELF volume plus its atom positions.
pub fn elf_slice_json(drug_id: usize, seed: u64, z: usize) -> Result<String> {
    let grid = Grid::default();
    let vol = synth_elf(drug_id, seed, grid)?;
    let [nx, ny, nz] = vol.dims();
    let z = z.min(nz - 1);
    let atoms: Vec<_> = synth_molecule(drug_id, seed, grid)?
        .atoms()
        .iter()
        .map(|a| json!({ "element": a.element, "position": a.position }))
        .collect();
    Ok(json!({
        "nx": nx,
        "ny": ny,
        "nz": nz,
        "z": z,
        "spacing": vol.spacing(),
        "values": vol.slice(z),
        "atoms": atoms,
    })
    .to_string())
}

/// Loss terms and `∂total/∂o` for a hand-set prediction vector.
/// `pairs` is a flat list of interacting drug index pairs.
pub fn loss_json(o: &[f64], truth: &[usize], pairs: &[usize], alpha: f64, beta: f64) -> Result<String> {
    let pairs: Vec<(usize, usize)> = pairs.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    let ddi = DdiMatrix::from_drug_pairs(o.len(), &pairs)?;
    let (parts, grad) = total_loss(o, truth, &ddi, alpha, beta)?;
    Ok(json!({
        "bce": parts.bce,
        "multi": parts.multi,
        "ddi": parts.ddi,
        "total": parts.total,
        "grad": grad,
    })
    .to_string())
}

/// Trains on a small synthetic corpus with random drug features and
/// returns the per-epoch losses and validation metrics.
pub fn train_toy_json(n_patients: usize, epochs: usize, beta: f64, seed: u64) -> Result<String> {
    let data = synth_dataset(&SynthSpec {
        n_patients,
        seed,
        stats: TOY_STATS,
        elf_grid: None,
    })?;
    let mut rng = stream_rng(seed, 0xDE);
    let mut features = Tensor::uniform(&[TOY_STATS.n_drugs, TOY_FEATURES], 1.0, &mut rng);
    standardize_columns(&mut features);
    let features = DrugFeatures::Fixed(features);
    let hp = HyperParams {
        epochs,
        beta,
        seed,
        lr: 2e-3,
        emb_dim: 16,
        dim: 16,
        feat_dim: TOY_FEATURES,
        ..HyperParams::default()
    };
    let split = stratified_split(&data.corpus, DEFAULT_RATIOS, seed)?;
    let mut rows = Vec::new();
    fit_with(&data, &features, &split, &hp, Ablation::None, |r| {
        rows.push(json!({
            "epoch": r.epoch,
            "loss": r.losses.total,
            "ddi_loss": r.losses.ddi,
            "val_ddi_rate": r.val.ddi_rate,
            "val_jaccard": r.val.jaccard,
            "val_f1": r.val.f1,
            "val_avg_drugs": r.val.avg_drugs,
        }));
    })?;
    Ok(json!({ "beta": beta, "seed": seed, "epochs": rows }).to_string())
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn elf_slice(drug_id: usize, seed: u64, z: usize) -> std::result::Result<String, JsError> {
    js(elf_slice_json(drug_id, seed, z))
}

#[wasm_bindgen]
pub fn loss(o: Vec<f64>, truth: Vec<usize>, pairs: Vec<usize>, alpha: f64, beta: f64) -> std::result::Result<String, JsError> {
    js(loss_json(&o, &truth, &pairs, alpha, beta))
}

#[wasm_bindgen]
pub fn train_toy(n_patients: usize, epochs: usize, beta: f64, seed: u64) -> std::result::Result<String, JsError> {
    js(train_toy_json(n_patients, epochs, beta, seed))
}
