use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{CidPairSet, DrugRegistry, Patient};
use crate::error::{MmmError, Result};
use crate::model::Predictor;

fn unique_cids(drugs: &[usize], registry: &DrugRegistry) -> Result<Vec<u64>> {
    let set: BTreeSet<u64> = drugs.iter().map(|&d| registry.cid(d)).collect::<Result<_>>()?;
    Ok(set.into_iter().collect())
}

fn atc3_set<'r>(drugs: &[usize], registry: &'r DrugRegistry) -> Result<BTreeSet<&'r str>> {
    drugs.iter().map(|&d| registry.atc3(d)).collect()
}

/// Interacting unordered CID pairs among the predicted drugs.
pub fn interacting_pairs(drugs: &[usize], registry: &DrugRegistry, pairs: &CidPairSet) -> Result<Vec<(u64, u64)>> {
    let cids = unique_cids(drugs, registry)?;
    let mut out = Vec::new();
    for (k, &a) in cids.iter().enumerate() {
        for &b in &cids[k + 1..] {
            if pairs.contains(a, b) {
                out.push((a, b));
            }
        }
    }
    Ok(out)
}

/// Fraction of unordered unique-CID pairs that interact; 0 below two CIDs.
pub fn ddi_rate(drugs: &[usize], registry: &DrugRegistry, pairs: &CidPairSet) -> Result<f64> {
    let n = unique_cids(drugs, registry)?.len();
    if n < 2 {
        return Ok(0.0);
    }
    let hits = interacting_pairs(drugs, registry, pairs)?.len();
    Ok(hits as f64 / (n * (n - 1) / 2) as f64)
}

fn atc3_overlap(pred: &[usize], truth: &[usize], registry: &DrugRegistry) -> Result<(usize, usize, usize)> {
    if truth.is_empty() {
        return Err(MmmError::InvalidArgument("truth set is empty".into()));
    }
    let p = atc3_set(pred, registry)?;
    let t = atc3_set(truth, registry)?;
    Ok((p.intersection(&t).count(), p.len(), t.len()))
}

/// `|P∩T| / |P∪T|` over ATC3 codes.
pub fn jaccard_atc3(pred: &[usize], truth: &[usize], registry: &DrugRegistry) -> Result<f64> {
    let (inter, p, t) = atc3_overlap(pred, truth, registry)?;
    if p == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / (p + t - inter) as f64)
}

/// `2|P∩T| / (|P|+|T|)` over ATC3 codes.
pub fn f1_atc3(pred: &[usize], truth: &[usize], registry: &DrugRegistry) -> Result<f64> {
    let (inter, p, t) = atc3_overlap(pred, truth, registry)?;
    if p == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * inter as f64 / (p + t) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitMetrics {
    pub patient_id: u64,
    pub visit: usize,
    pub ddi_rate: f64,
    pub jaccard: f64,
    pub f1: f64,
    pub n_drugs: usize,
}

/// Unweighted means over visits.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub n_visits: usize,
    pub ddi_rate: f64,
    pub jaccard: f64,
    pub f1: f64,
    pub avg_drugs: f64,
}

impl SplitMetrics {
    pub fn from_visits<'a>(rows: impl IntoIterator<Item = &'a VisitMetrics>) -> Self {
        let mut s = SplitMetrics::default();
        for r in rows {
            s.n_visits += 1;
            s.ddi_rate += r.ddi_rate;
            s.jaccard += r.jaccard;
            s.f1 += r.f1;
            s.avg_drugs += r.n_drugs as f64;
        }
        if s.n_visits > 0 {
            let n = s.n_visits as f64;
            s.ddi_rate /= n;
            s.jaccard /= n;
            s.f1 /= n;
            s.avg_drugs /= n;
        }
        s
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::DdiRate => self.ddi_rate,
            Metric::Jaccard => self.jaccard,
            Metric::F1 => self.f1,
            Metric::AvgDrugs => self.avg_drugs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    DdiRate,
    Jaccard,
    F1,
    AvgDrugs,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::DdiRate, Metric::Jaccard, Metric::F1, Metric::AvgDrugs];

    pub fn name(self) -> &'static str {
        match self {
            Metric::DdiRate => "ddi_rate",
            Metric::Jaccard => "jaccard",
            Metric::F1 => "f1",
            Metric::AvgDrugs => "avg_drugs",
        }
    }
}

pub fn visit_metrics(
    patient_id: u64,
    visit: usize,
    pred: &[usize],
    truth: &[usize],
    registry: &DrugRegistry,
    pairs: &CidPairSet,
) -> Result<VisitMetrics> {
    Ok(VisitMetrics {
        patient_id,
        visit,
        ddi_rate: ddi_rate(pred, registry, pairs)?,
        jaccard: jaccard_atc3(pred, truth, registry)?,
        f1: f1_atc3(pred, truth, registry)?,
        n_drugs: pred.len(),
    })
}

/// Per-visit metrics for every patient, in patient then visit order.
pub fn evaluate_patients(
    model: &dyn Predictor,
    patients: &[&Patient],
    registry: &DrugRegistry,
    pairs: &CidPairSet,
) -> Result<Vec<Vec<VisitMetrics>>> {
    patients
        .iter()
        .map(|p| {
            let preds = model.predict_patient(&p.visits)?;
            preds
                .iter()
                .zip(&p.visits)
                .enumerate()
                .map(|(t, (pred, v))| visit_metrics(p.id, t, &pred.m_hat, &v.medications, registry, pairs))
                .collect()
        })
        .collect()
}

pub fn evaluate_split(
    model: &dyn Predictor,
    patients: &[&Patient],
    registry: &DrugRegistry,
    pairs: &CidPairSet,
) -> Result<(Vec<VisitMetrics>, SplitMetrics)> {
    let rows: Vec<VisitMetrics> = evaluate_patients(model, patients, registry, pairs)?.into_iter().flatten().collect();
    let summary = SplitMetrics::from_visits(&rows);
    Ok((rows, summary))
}
