use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate_patients, Metric, SplitMetrics, VisitMetrics};
use super::stats::{mean_sd, paired_t_test, TTest};
use crate::corpus::{CidPairSet, DrugRegistry, Patient};
use crate::error::{MmmError, Result};
use crate::model::Predictor;
use crate::tensor::stream_rng;

const STREAM_BOOTSTRAP: u64 = 0xB007;

pub const DEFAULT_REPEATS: usize = 10;

/// `n` consecutive seeds starting at `base`.
pub fn bootstrap_seeds(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|k| base.wrapping_add(k)).collect()
}

/// Patient indices drawn with replacement for one repeat.
pub fn resample(n_patients: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, STREAM_BOOTSTRAP);
    (0..n_patients).map(|_| rng.random_range(0..n_patients)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub repeats: usize,
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<String, MeanStd>,
    #[serde(skip)]
    pub per_repeat: Vec<SplitMetrics>,
}

fn repeat_metrics(per_patient: &[Vec<VisitMetrics>], seeds: &[u64]) -> Vec<SplitMetrics> {
    seeds
        .iter()
        .map(|&s| SplitMetrics::from_visits(resample(per_patient.len(), s).into_iter().flat_map(|i| &per_patient[i])))
        .collect()
}

fn summarize(per_repeat: Vec<SplitMetrics>, seeds: &[u64]) -> RunSummary {
    let metrics = Metric::ALL
        .iter()
        .map(|&m| {
            let vals: Vec<f64> = per_repeat.iter().map(|r| r.get(m)).collect();
            let (mean, std) = mean_sd(&vals);
            (m.name().to_string(), MeanStd { mean, std })
        })
        .collect();
    RunSummary {
        repeats: seeds.len(),
        seeds: seeds.to_vec(),
        metrics,
        per_repeat,
    }
}

fn check(patients: &[&Patient], seeds: &[u64]) -> Result<()> {
    if seeds.len() < 2 {
        return Err(MmmError::InvalidArgument(format!(
            "bootstrap needs at least 2 repeats, got {}",
            seeds.len()
        )));
    }
    if patients.is_empty() {
        return Err(MmmError::InvalidArgument("bootstrap over an empty split".into()));
    }
    Ok(())
}

/// Mean ± std of each metric over bootstrap resamples of the patients.
pub fn bootstrap_summary(
    model: &dyn Predictor,
    patients: &[&Patient],
    registry: &DrugRegistry,
    pairs: &CidPairSet,
    seeds: &[u64],
) -> Result<RunSummary> {
    check(patients, seeds)?;
    let per_patient = evaluate_patients(model, patients, registry, pairs)?;
    Ok(summarize(repeat_metrics(&per_patient, seeds), seeds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: RunSummary,
    pub b: RunSummary,
    /// Paired test of `a − b` per metric.
    pub tests: BTreeMap<String, TTest>,
}

/// Both models see the same resample in every repeat.
pub fn bootstrap_compare(
    a: &dyn Predictor,
    b: &dyn Predictor,
    patients: &[&Patient],
    registry: &DrugRegistry,
    pairs: &CidPairSet,
    seeds: &[u64],
) -> Result<Comparison> {
    check(patients, seeds)?;
    let ra = repeat_metrics(&evaluate_patients(a, patients, registry, pairs)?, seeds);
    let rb = repeat_metrics(&evaluate_patients(b, patients, registry, pairs)?, seeds);
    let mut tests = BTreeMap::new();
    for m in Metric::ALL {
        let diffs: Vec<f64> = ra.iter().zip(&rb).map(|(x, y)| x.get(m) - y.get(m)).collect();
        tests.insert(m.name().to_string(), paired_t_test(&diffs)?);
    }
    Ok(Comparison {
        a: summarize(ra, seeds),
        b: summarize(rb, seeds),
        tests,
    })
}
