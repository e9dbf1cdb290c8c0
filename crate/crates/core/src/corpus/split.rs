//! Patient-level stratified holdout split.

use rand::seq::SliceRandom;

use super::types::EhrCorpus;
use crate::error::{MmmError, Result};
use crate::tensor::stream_rng;

pub const DEFAULT_RATIOS: [f64; 3] = [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0];

/// Number of quantile strata over per-patient mean prescription size.
pub const N_STRATA: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl SplitSpec {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

fn bucket_sizes(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let val = (n as f64 * ratios[1]).round() as usize;
    let test = (n as f64 * ratios[2]).round() as usize;
    let val = val.min(n);
    let test = test.min(n - val);
    [n - val - test, val, test]
}

/// Splits patients into train/val/test.
///
/// Patients are ordered by stratum (quantile of mean medication-set size),
/// shuffled within each stratum, then dealt to partitions by largest
/// remaining quota so every partition samples all strata evenly and the
/// partition sizes are exact.
pub fn stratified_split(corpus: &EhrCorpus, ratios: [f64; 3], seed: u64) -> Result<SplitSpec> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(MmmError::InvalidArgument(format!(
            "split ratios {ratios:?} must be in [0,1] and sum to 1"
        )));
    }
    let n = corpus.patients.len();
    if n < N_STRATA {
        return Err(MmmError::InvalidArgument(format!(
            "{n} patients is fewer than the {N_STRATA} strata"
        )));
    }

    let mut keyed: Vec<(f64, u64)> = corpus
        .patients
        .iter()
        .map(|p| {
            let total: usize = p.visits.iter().map(|v| v.medications.len()).sum();
            (total as f64 / p.visits.len() as f64, p.id)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut rng = stream_rng(seed, 0x5911);
    let mut ordered = Vec::with_capacity(n);
    for s in 0..N_STRATA {
        let lo = s * n / N_STRATA;
        let hi = (s + 1) * n / N_STRATA;
        let mut stratum: Vec<u64> = keyed[lo..hi].iter().map(|k| k.1).collect();
        stratum.shuffle(&mut rng);
        ordered.extend(stratum);
    }

    let quota = bucket_sizes(n, ratios);
    let mut parts: [Vec<u64>; 3] = Default::default();
    for (k, pid) in ordered.into_iter().enumerate() {
        let pos = (k + 1) as f64;
        let pick = (0..3)
            .filter(|&b| parts[b].len() < quota[b])
            .max_by(|&a, &b| {
                let da = quota[a] as f64 * pos / n as f64 - parts[a].len() as f64;
                let db = quota[b] as f64 * pos / n as f64 - parts[b].len() as f64;
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("quotas sum to n");
        parts[pick].push(pid);
    }
    let [train, val, test] = parts;
    Ok(SplitSpec {
        train,
        val,
        test,
        ratios,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::types::{Patient, Visit, VocabSizes};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn corpus(n: usize) -> EhrCorpus {
        let patients = (0..n)
            .map(|i| Patient {
                id: i as u64 * 3 + 1,
                visits: vec![Visit {
                    diagnoses: vec![0],
                    procedures: vec![],
                    medications: (0..1 + i % 5).collect(),
                }],
            })
            .collect();
        EhrCorpus {
            patients,
            vocab: VocabSizes {
                n_dx: 1,
                n_px: 1,
                n_drugs: 5,
                n_substructures: 1,
            },
        }
    }

    #[test]
    fn six_patients() {
        let s = stratified_split(&corpus(6), DEFAULT_RATIOS, 7).unwrap();
        assert_eq!(s.sizes(), (4, 1, 1));
        assert_eq!(s, stratified_split(&corpus(6), DEFAULT_RATIOS, 7).unwrap());
    }

    #[test]
    fn six_hundred_patients() {
        let s = stratified_split(&corpus(600), DEFAULT_RATIOS, 1).unwrap();
        assert_eq!(s.sizes(), (400, 100, 100));
    }

    #[test]
    fn too_few_patients() {
        assert!(stratified_split(&corpus(2), DEFAULT_RATIOS, 1).is_err());
    }

    #[test]
    fn bad_ratios() {
        assert!(stratified_split(&corpus(9), [0.5, 0.5, 0.5], 1).is_err());
    }

    #[test]
    fn strata_are_spread_over_partitions() {
        let c = corpus(300);
        let s = stratified_split(&c, DEFAULT_RATIOS, 3).unwrap();
        let mean = |ids: &[u64]| {
            let ps = c.select(ids).unwrap();
            ps.iter().map(|p| p.visits[0].medications.len() as f64).sum::<f64>() / ps.len() as f64
        };
        assert!((mean(&s.train) - mean(&s.test)).abs() < 0.35);
        assert!((mean(&s.train) - mean(&s.val)).abs() < 0.35);
    }

    proptest! {
        #[test]
        fn partition_is_disjoint_and_covering(n in 3usize..200, seed in any::<u64>()) {
            let c = corpus(n);
            let s = stratified_split(&c, DEFAULT_RATIOS, seed).unwrap();
            let all: BTreeSet<u64> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            prop_assert_eq!(all.len(), n);
            prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), n);
            let want: BTreeSet<u64> = c.patients.iter().map(|p| p.id).collect();
            prop_assert_eq!(all, want);
            for (got, r) in [(s.train.len(), DEFAULT_RATIOS[0]), (s.val.len(), DEFAULT_RATIOS[1]), (s.test.len(), DEFAULT_RATIOS[2])] {
                prop_assert!((got as f64 - r * n as f64).abs() <= 1.0);
            }
        }
    }
}
