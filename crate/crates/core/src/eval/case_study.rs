use std::fmt::Write as _;

use serde::Serialize;

use super::metrics::{ddi_rate, f1_atc3, interacting_pairs, jaccard_atc3};
use crate::corpus::{CidPairSet, DrugRegistry, EhrCorpus};
use crate::error::{MmmError, Result};
use crate::model::Predictor;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseVisit {
    pub visit: usize,
    pub diagnoses: Vec<usize>,
    pub procedures: Vec<usize>,
    pub truth: Vec<usize>,
    pub predicted: Vec<usize>,
    pub truth_pairs: Vec<(u64, u64)>,
    pub predicted_pairs: Vec<(u64, u64)>,
    pub truth_ddi_rate: f64,
    pub predicted_ddi_rate: f64,
    pub jaccard: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseStudy {
    pub patient_id: u64,
    pub visits: Vec<CaseVisit>,
}

/// Ground truth against recommendations for every visit of one patient,
/// with interacting CID pairs flagged on both sides.
pub fn case_study_report(
    model: &dyn Predictor,
    corpus: &EhrCorpus,
    patient_id: u64,
    registry: &DrugRegistry,
    pairs: &CidPairSet,
) -> Result<CaseStudy> {
    let patient = corpus
        .patient(patient_id)
        .ok_or_else(|| MmmError::InvalidArgument(format!("unknown patient {patient_id}")))?;
    let preds = model.predict_patient(&patient.visits)?;
    let visits = patient
        .visits
        .iter()
        .zip(preds)
        .enumerate()
        .map(|(t, (v, p))| {
            Ok(CaseVisit {
                visit: t,
                diagnoses: v.diagnoses.clone(),
                procedures: v.procedures.clone(),
                truth: v.medications.clone(),
                truth_pairs: interacting_pairs(&v.medications, registry, pairs)?,
                predicted_pairs: interacting_pairs(&p.m_hat, registry, pairs)?,
                truth_ddi_rate: ddi_rate(&v.medications, registry, pairs)?,
                predicted_ddi_rate: ddi_rate(&p.m_hat, registry, pairs)?,
                jaccard: jaccard_atc3(&p.m_hat, &v.medications, registry)?,
                f1: f1_atc3(&p.m_hat, &v.medications, registry)?,
                predicted: p.m_hat,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CaseStudy { patient_id, visits })
}

fn drug_line(out: &mut String, drugs: &[usize], flagged: &[(u64, u64)], registry: &DrugRegistry) -> Result<()> {
    for &d in drugs {
        let e = registry.entry(d)?;
        let mark = if flagged.iter().any(|&(a, b)| a == e.cid || b == e.cid) {
            "!"
        } else {
            " "
        };
        writeln!(out, "    {mark} {} (drug {d}, CID {}, {})", e.name, e.cid, e.atc3).unwrap();
    }
    Ok(())
}

fn pair_lines(out: &mut String, flagged: &[(u64, u64)], registry: &DrugRegistry) {
    let by_cid = registry.drugs_by_cid();
    let name = |cid: u64| {
        by_cid
            .get(&cid)
            .and_then(|ds| ds.first())
            .and_then(|&d| registry.entry(d).ok())
            .map_or_else(|| cid.to_string(), |e| e.name.clone())
    };
    if flagged.is_empty() {
        writeln!(out, "    (none)").unwrap();
    }
    for &(a, b) in flagged {
        writeln!(out, "    {} <-> {} (CID {a} / {b})", name(a), name(b)).unwrap();
    }
}

impl CaseStudy {
    pub fn n_flagged(&self) -> (usize, usize) {
        self.visits
            .iter()
            .fold((0, 0), |(t, p), v| (t + v.truth_pairs.len(), p + v.predicted_pairs.len()))
    }

    /// Plain-text report; `!` marks drugs in an interacting pair.
    pub fn render(&self, registry: &DrugRegistry) -> Result<String> {
        let mut out = String::new();
        writeln!(out, "Patient {}: {} visit(s)", self.patient_id, self.visits.len()).unwrap();
        for v in &self.visits {
            writeln!(out).unwrap();
            writeln!(out, "Visit {}", v.visit + 1).unwrap();
            writeln!(out, "  Diagnoses: {:?}", v.diagnoses).unwrap();
            writeln!(out, "  Procedures: {:?}", v.procedures).unwrap();
            writeln!(out, "  Ground truth ({} drugs, DDI rate {:.4})", v.truth.len(), v.truth_ddi_rate).unwrap();
            drug_line(&mut out, &v.truth, &v.truth_pairs, registry)?;
            writeln!(out, "  Interacting pairs in ground truth:").unwrap();
            pair_lines(&mut out, &v.truth_pairs, registry);
            writeln!(
                out,
                "  Recommended ({} drugs, DDI rate {:.4}, Jaccard {:.4}, F1 {:.4})",
                v.predicted.len(),
                v.predicted_ddi_rate,
                v.jaccard,
                v.f1
            )
            .unwrap();
            drug_line(&mut out, &v.predicted, &v.predicted_pairs, registry)?;
            writeln!(out, "  Interacting pairs in recommendation:").unwrap();
            pair_lines(&mut out, &v.predicted_pairs, registry);
        }
        Ok(out)
    }
}
