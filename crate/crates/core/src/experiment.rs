//! The ablation grid: the full model, without the ELF path and without the
//! bipartite path, trained from one seed and scored on the test split.

use std::fmt::Write as _;

use crate::corpus::{Dataset, SplitSpec};
use crate::error::Result;
use crate::eval::{bootstrap_seeds, bootstrap_summary, Metric, RunSummary};
use crate::model::{Ablation, DrugFeatures, Group, ModelParams, Recommender};
use crate::train::{fit, FitResult, HyperParams};

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub ablation: Ablation,
    pub best_epoch: usize,
    pub summary: RunSummary,
    /// Checksum of the CNN and MLP/head blocks at initialization and in the
    /// selected checkpoint.
    pub drug_side_init: u64,
    pub drug_side_final: u64,
    pub fit: FitResult,
}

impl AblationRow {
    pub fn drug_side_unchanged(&self) -> bool {
        self.drug_side_init == self.drug_side_final
    }
}

pub const DRUG_SIDE: [Group; 2] = [Group::Cnn, Group::Elf];

/// Trains the three variants in order: full, w/o ELF, w/o bipartite.
pub fn run_ablation_grid(
    data: &Dataset,
    features: &DrugFeatures,
    split: &SplitSpec,
    hp: &HyperParams,
    repeats: usize,
) -> Result<Vec<AblationRow>> {
    let init = ModelParams::init(hp.model_config(&data.corpus.vocab), hp.seed)?;
    let test = data.corpus.select(&split.test)?;
    let seeds = bootstrap_seeds(hp.seed, repeats);
    Ablation::ALL
        .iter()
        .map(|&ablation| {
            let fit = fit(data, features, split, hp, ablation)?;
            let rec = Recommender::new(&fit.best, features, &data.mask, ablation, hp.threshold)?;
            let summary = bootstrap_summary(&rec, &test, &data.registry, data.ddi.cid_pairs(), &seeds)?;
            Ok(AblationRow {
                ablation,
                best_epoch: fit.best_epoch,
                summary,
                drug_side_init: init.group_checksum(&DRUG_SIDE),
                drug_side_final: fit.best.group_checksum(&DRUG_SIDE),
                fit,
            })
        })
        .collect()
}

/// CSV with one row per variant: means and stds of every metric.
pub fn ablation_csv(rows: &[AblationRow], seed: u64) -> String {
    let mut s = String::from("seed,method,best_epoch");
    for m in Metric::ALL {
        write!(s, ",{0}_mean,{0}_std", m.name()).unwrap();
    }
    s.push_str(",drug_side_checksum_init,drug_side_checksum_final\n");
    for r in rows {
        write!(s, "{seed},{},{}", r.ablation.label(), r.best_epoch).unwrap();
        for m in Metric::ALL {
            let v = r.summary.metrics[m.name()];
            write!(s, ",{},{}", v.mean, v.std).unwrap();
        }
        writeln!(s, ",{:016x},{:016x}", r.drug_side_init, r.drug_side_final).unwrap();
    }
    s
}

/// Aligned text table for the terminal.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = format!(
        "{:<15} {:>17} {:>17} {:>17} {:>17}\n",
        "Method", "DDI rate", "Jaccard", "F1", "Avg. # drugs"
    );
    for r in rows {
        write!(s, "{:<15}", r.ablation.label()).unwrap();
        for m in Metric::ALL {
            let v = r.summary.metrics[m.name()];
            write!(s, " {:>8.4} ± {:<6.4}", v.mean, v.std).unwrap();
        }
        s.push('\n');
    }
    s
}
