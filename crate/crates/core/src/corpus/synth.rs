//! Seeded synthetic corpus whose sizes and visit statistics follow a target
//! profile (by default the MIMIC-III cohort summary).
//!
//! Patients carry one or two latent conditions. Each condition owns a pool of
//! diagnosis codes, procedure codes and drugs, so prescriptions are
//! predictable from coded history. Drug choice also follows a Zipf(1.1)
//! popularity skew.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Poisson};

use super::io::{elf_path, write_corpus};
use super::types::{
    CidPairSet, Dataset, DdiMatrix, DrugRegistry, DrugRegistryEntry, EhrCorpus, MaskMatrix, Patient,
    Visit, VocabSizes,
};
use crate::elf::{synth_elf, write_elfv, Grid};
use crate::error::{MmmError, Result};
use crate::tensor::stream_rng;

const ZIPF_EXPONENT: f64 = 1.1;
const N_CONDITIONS: usize = 40;
const DX_POOL: usize = 25;
const PX_POOL: usize = 15;
const DRUG_POOL: usize = 12;
const DX_BOOST: f64 = 150.0;
const PX_BOOST: f64 = 150.0;
const DRUG_BOOST: f64 = 60.0;

const ATC_ANATOMICAL: &[u8] = b"ABCDGHJLMNPRSV";
const FRAGMENTS: [&str; 12] = [
    "C", "CC", "c1ccccc1", "O", "N", "C(=O)O", "C(=O)N", "Cl", "F", "S", "C1CCNCC1", "OC",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetStats {
    pub n_dx: usize,
    pub n_px: usize,
    pub n_drugs: usize,
    pub n_substructures: usize,
    pub ddi_pairs: usize,
    pub mean_visits: f64,
    pub max_visits: usize,
    pub mean_dx: f64,
    pub max_dx: usize,
    pub mean_px: f64,
    pub max_px: usize,
    pub mean_meds: f64,
    pub max_meds: usize,
}

impl Default for TargetStats {
    fn default() -> Self {
        Self {
            n_dx: 1942,
            n_px: 1399,
            n_drugs: 250,
            n_substructures: 442,
            ddi_pairs: 4918,
            mean_visits: 2.60,
            max_visits: 29,
            mean_dx: 10.38,
            max_dx: 128,
            mean_px: 3.85,
            max_px: 50,
            mean_meds: 7.67,
            max_meds: 68,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_patients: usize,
    pub seed: u64,
    pub stats: TargetStats,
    /// ELF grid for the per-drug volumes; `None` skips volume generation.
    pub elf_grid: Option<Grid>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_patients: 600,
            seed: 1,
            stats: TargetStats::default(),
            elf_grid: Some(Grid::default()),
        }
    }
}

impl SynthSpec {
    fn check(&self) -> Result<()> {
        let s = &self.stats;
        let bad = |msg: String| Err(MmmError::InvalidArgument(msg));
        if self.n_patients == 0 {
            return bad("n_patients must be at least 1".into());
        }
        if s.n_drugs < 2 || s.n_dx == 0 || s.n_px == 0 || s.n_substructures == 0 {
            return bad(format!("vocabulary sizes too small: {s:?}"));
        }
        let max_pairs = s.n_drugs * (s.n_drugs - 1) / 2;
        if s.ddi_pairs > max_pairs {
            return bad(format!("{} DDI pairs requested but only {max_pairs} exist", s.ddi_pairs));
        }
        let checks = [
            ("visits", s.mean_visits, s.max_visits, usize::MAX),
            ("diagnoses", s.mean_dx, s.max_dx, s.n_dx),
            ("procedures", s.mean_px, s.max_px, s.n_px),
            ("medications", s.mean_meds, s.max_meds, s.n_drugs),
        ];
        for (what, mean, max, vocab) in checks {
            if !(mean >= 1.0) || mean > max as f64 || mean > vocab as f64 {
                return bad(format!(
                    "infeasible mean {what} per visit {mean} (max {max}, vocabulary {vocab})"
                ));
            }
        }
        Ok(())
    }
}

fn zipf_weights(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let ranks = index::sample(rng, n, n).into_vec();
    ranks
        .into_iter()
        .map(|r| 1.0 / ((r + 1) as f64).powf(ZIPF_EXPONENT))
        .collect()
}

/// Draws `k` distinct indices with probability proportional to `weights`.
fn weighted_without_replacement(weights: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut w = weights.to_vec();
    let mut total: f64 = w.iter().sum();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k.min(w.len()) {
        let mut u = rng.random_range(0.0..total);
        let mut pick = w.len() - 1;
        for (i, &wi) in w.iter().enumerate() {
            if wi <= 0.0 {
                continue;
            }
            if u < wi {
                pick = i;
                break;
            }
            u -= wi;
        }
        // floating-point tail: fall back to the last positive weight
        if w[pick] <= 0.0 {
            pick = w.iter().rposition(|&x| x > 0.0).expect("weights remain");
        }
        out.push(pick);
        total -= w[pick];
        w[pick] = 0.0;
        if total <= 0.0 {
            total = w.iter().sum();
        }
    }
    out
}

/// `1 + Poisson(mean - 1)`, capped.
fn count(mean: f64, cap: usize, rng: &mut ChaCha8Rng) -> usize {
    let extra = if mean > 1.0 {
        Poisson::new(mean - 1.0).expect("positive rate").sample(rng) as usize
    } else {
        0
    };
    (1 + extra).min(cap)
}

fn atc3_codes(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut codes = Vec::with_capacity(n);
    while codes.len() < n {
        let a = ATC_ANATOMICAL[rng.random_range(0..ATC_ANATOMICAL.len())] as char;
        let d = rng.random_range(1..=16u32);
        let s = (b'A' + rng.random_range(0..8u8)) as char;
        let code = format!("{a}{d:02}{s}");
        if seen.insert(code.clone()) {
            codes.push(code);
        }
    }
    codes
}

fn synth_registry(spec: &SynthSpec) -> Result<DrugRegistry> {
    let s = &spec.stats;
    let mut rng = stream_rng(spec.seed, 1);
    let n_groups = (s.n_drugs * 2 / 5).max(1);
    let codes = atc3_codes(n_groups, &mut rng);
    let sub_weights = zipf_weights(s.n_substructures, &mut rng);
    let mut cid = 2000u64;
    let mut entries = Vec::with_capacity(s.n_drugs);
    for drug_id in 0..s.n_drugs {
        cid += rng.random_range(1..=500);
        let group = if drug_id < n_groups {
            drug_id
        } else {
            rng.random_range(0..n_groups)
        };
        let n_sub = rng.random_range(2..=10usize).min(s.n_substructures);
        let substructures: BTreeSet<usize> =
            weighted_without_replacement(&sub_weights, n_sub, &mut rng).into_iter().collect();
        let smiles: String = substructures.iter().map(|&j| FRAGMENTS[j % FRAGMENTS.len()]).collect();
        entries.push(DrugRegistryEntry {
            drug_id,
            name: format!("Synthdrug-{drug_id:03}"),
            smiles,
            cid,
            atc3: codes[group].clone(),
            substructures,
        });
    }
    DrugRegistry::new(entries)
}

fn synth_ddi(spec: &SynthSpec, registry: &DrugRegistry) -> Result<DdiMatrix> {
    let n = registry.len();
    let mut rng = stream_rng(spec.seed, 2);
    let all: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let mut cids = CidPairSet::new();
    for k in index::sample(&mut rng, all.len(), spec.stats.ddi_pairs).into_iter() {
        let (i, j) = all[k];
        cids.insert(registry.cid(i)?, registry.cid(j)?)?;
    }
    DdiMatrix::from_cid_pairs(registry, cids)
}

struct Condition {
    dx: Vec<usize>,
    px: Vec<usize>,
    drugs: Vec<usize>,
}

fn synth_patients(spec: &SynthSpec) -> Vec<Patient> {
    let s = &spec.stats;
    let mut rng = stream_rng(spec.seed, 3);
    let drug_pop = zipf_weights(s.n_drugs, &mut rng);
    let conditions: Vec<Condition> = (0..N_CONDITIONS)
        .map(|_| Condition {
            dx: index::sample(&mut rng, s.n_dx, DX_POOL.min(s.n_dx)).into_vec(),
            px: index::sample(&mut rng, s.n_px, PX_POOL.min(s.n_px)).into_vec(),
            drugs: weighted_without_replacement(&drug_pop, DRUG_POOL.min(s.n_drugs), &mut rng),
        })
        .collect();
    let extra_visits = Geometric::new(1.0 / s.mean_visits).expect("mean visits >= 1");

    let mut patients = Vec::with_capacity(spec.n_patients);
    for pid in 0..spec.n_patients {
        let n_cond = 1 + usize::from(rng.random_bool(0.5));
        let mine: Vec<&Condition> = index::sample(&mut rng, N_CONDITIONS, n_cond)
            .into_iter()
            .map(|c| &conditions[c])
            .collect();
        let boosted = |base: &[f64], pick: &dyn Fn(&Condition) -> &[usize], boost: f64| {
            let mut w = base.to_vec();
            for c in &mine {
                for &i in pick(c) {
                    w[i] = base[i] * boost;
                }
            }
            w
        };
        let dx_w = boosted(&vec![1.0; s.n_dx], &|c| &c.dx, DX_BOOST);
        let px_w = boosted(&vec![1.0; s.n_px], &|c| &c.px, PX_BOOST);
        let rx_w = boosted(&drug_pop, &|c| &c.drugs, DRUG_BOOST);

        let n_visits = (1 + extra_visits.sample(&mut rng) as usize).min(s.max_visits);
        let visits = (0..n_visits)
            .map(|_| {
                let nd = count(s.mean_dx, s.max_dx.min(s.n_dx), &mut rng);
                let np = count(s.mean_px, s.max_px.min(s.n_px), &mut rng);
                let nm = count(s.mean_meds, s.max_meds.min(s.n_drugs), &mut rng);
                let diagnoses = weighted_without_replacement(&dx_w, nd, &mut rng);
                let procedures = weighted_without_replacement(&px_w, np, &mut rng);
                let mut medications = weighted_without_replacement(&rx_w, nm, &mut rng);
                medications.sort_unstable();
                Visit {
                    diagnoses,
                    procedures,
                    medications,
                }
            })
            .collect();
        patients.push(Patient {
            id: pid as u64,
            visits,
        });
    }
    patients
}

/// Builds the in-memory dataset (no ELF volumes).
pub fn synth_dataset(spec: &SynthSpec) -> Result<Dataset> {
    spec.check()?;
    let s = &spec.stats;
    let registry = synth_registry(spec)?;
    let ddi = synth_ddi(spec, &registry)?;
    let mask = MaskMatrix::from_registry(&registry, s.n_substructures)?;
    let corpus = EhrCorpus {
        patients: synth_patients(spec),
        vocab: VocabSizes {
            n_dx: s.n_dx,
            n_px: s.n_px,
            n_drugs: s.n_drugs,
            n_substructures: s.n_substructures,
        },
    };
    corpus.validate()?;
    Ok(Dataset {
        corpus,
        registry,
        ddi,
        mask,
    })
}

/// Generates a complete corpus directory, including one ELF volume per drug
/// when `spec.elf_grid` is set.
pub fn synth_corpus(spec: &SynthSpec, dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let data = synth_dataset(spec)?;
    write_corpus(dir, &data)?;
    if let Some(grid) = spec.elf_grid {
        for drug_id in 0..data.registry.len() {
            let vol = synth_elf(drug_id, spec.seed, grid)?;
            write_elfv(elf_path(dir, drug_id), &vol)?;
        }
    }
    Ok(data)
}

/// Per-visit means (and per-patient visit mean) of a corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusStats {
    pub n_patients: usize,
    pub n_visits: usize,
    pub mean_visits: f64,
    pub max_visits: usize,
    pub mean_dx: f64,
    pub mean_px: f64,
    pub mean_meds: f64,
}

pub fn corpus_stats(corpus: &EhrCorpus) -> CorpusStats {
    let n_visits = corpus.n_visits();
    let visits = corpus.patients.iter().flat_map(|p| &p.visits);
    let (mut dx, mut px, mut rx) = (0usize, 0usize, 0usize);
    for v in visits {
        dx += v.diagnoses.len();
        px += v.procedures.len();
        rx += v.medications.len();
    }
    let nv = n_visits.max(1) as f64;
    CorpusStats {
        n_patients: corpus.patients.len(),
        n_visits,
        mean_visits: n_visits as f64 / corpus.patients.len().max(1) as f64,
        max_visits: corpus.patients.iter().map(|p| p.visits.len()).max().unwrap_or(0),
        mean_dx: dx as f64 / nv,
        mean_px: px as f64 / nv,
        mean_meds: rx as f64 / nv,
    }
}
