use std::collections::{BTreeMap, BTreeSet};

use crate::error::{MmmError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrugRegistryEntry {
    pub drug_id: usize,
    pub name: String,
    pub smiles: String,
    pub cid: u64,
    /// Third-level ATC code; several drugs may share one.
    pub atc3: String,
    pub substructures: BTreeSet<usize>,
}

/// Drug vocabulary linking drug ids to compound ids and therapeutic groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrugRegistry {
    entries: Vec<DrugRegistryEntry>,
}

impl DrugRegistry {
    /// Entries must carry dense, unique ids; they are stored in id order.
    pub fn new(mut entries: Vec<DrugRegistryEntry>) -> Result<Self> {
        entries.sort_by_key(|e| e.drug_id);
        for (i, e) in entries.iter().enumerate() {
            if e.drug_id != i {
                return Err(MmmError::Validation(format!(
                    "registry drug ids must be dense and unique; expected {i}, found {}",
                    e.drug_id
                )));
            }
            if e.atc3.trim().is_empty() {
                return Err(MmmError::Validation(format!(
                    "drug {} has an empty atc3 code",
                    e.drug_id
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[DrugRegistryEntry] {
        &self.entries
    }

    pub fn entry(&self, drug_id: usize) -> Result<&DrugRegistryEntry> {
        self.entries
            .get(drug_id)
            .ok_or_else(|| MmmError::Validation(format!("unknown drug id {drug_id}")))
    }

    pub fn cid(&self, drug_id: usize) -> Result<u64> {
        self.entry(drug_id).map(|e| e.cid)
    }

    pub fn atc3(&self, drug_id: usize) -> Result<&str> {
        self.entry(drug_id).map(|e| e.atc3.as_str())
    }

    pub fn check_substructures(&self, n_substructures: usize) -> Result<()> {
        for e in &self.entries {
            if let Some(&bad) = e.substructures.iter().find(|&&s| s >= n_substructures) {
                return Err(MmmError::Validation(format!(
                    "drug {} references substructure {bad} but only {n_substructures} exist",
                    e.drug_id
                )));
            }
        }
        Ok(())
    }

    /// Drugs grouped by compound id.
    pub fn drugs_by_cid(&self) -> BTreeMap<u64, Vec<usize>> {
        let mut map: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for e in &self.entries {
            map.entry(e.cid).or_default().push(e.drug_id);
        }
        map
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Visit {
    pub diagnoses: Vec<usize>,
    pub procedures: Vec<usize>,
    /// Ground-truth prescription, sorted and deduplicated.
    pub medications: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patient {
    pub id: u64,
    /// Temporal order.
    pub visits: Vec<Visit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct VocabSizes {
    pub n_dx: usize,
    pub n_px: usize,
    pub n_drugs: usize,
    pub n_substructures: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EhrCorpus {
    pub patients: Vec<Patient>,
    pub vocab: VocabSizes,
}

impl EhrCorpus {
    pub fn validate(&self) -> Result<()> {
        let v = &self.vocab;
        for p in &self.patients {
            if p.visits.is_empty() {
                return Err(MmmError::Validation(format!("patient {} has no visits", p.id)));
            }
            for (t, visit) in p.visits.iter().enumerate() {
                let ctx = |what: &str, code: usize, bound: usize| {
                    MmmError::Validation(format!(
                        "patient {} visit {t}: {what} code {code} outside vocabulary of size {bound}",
                        p.id
                    ))
                };
                if visit.diagnoses.is_empty() {
                    return Err(MmmError::Validation(format!(
                        "patient {} visit {t} has no diagnoses",
                        p.id
                    )));
                }
                if visit.medications.is_empty() {
                    return Err(MmmError::Validation(format!(
                        "patient {} visit {t} has no medications",
                        p.id
                    )));
                }
                if let Some(&c) = visit.diagnoses.iter().find(|&&c| c >= v.n_dx) {
                    return Err(ctx("diagnosis", c, v.n_dx));
                }
                if let Some(&c) = visit.procedures.iter().find(|&&c| c >= v.n_px) {
                    return Err(ctx("procedure", c, v.n_px));
                }
                if let Some(&c) = visit.medications.iter().find(|&&c| c >= v.n_drugs) {
                    return Err(ctx("medication", c, v.n_drugs));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for p in &self.patients {
            if !seen.insert(p.id) {
                return Err(MmmError::Validation(format!("duplicate patient id {}", p.id)));
            }
        }
        Ok(())
    }

    pub fn n_visits(&self) -> usize {
        self.patients.iter().map(|p| p.visits.len()).sum()
    }

    pub fn patient(&self, pid: u64) -> Option<&Patient> {
        self.patients.iter().find(|p| p.id == pid)
    }

    /// Patients in the order of `ids`; unknown ids are an error.
    pub fn select(&self, ids: &[u64]) -> Result<Vec<&Patient>> {
        let index: BTreeMap<u64, &Patient> = self.patients.iter().map(|p| (p.id, p)).collect();
        ids.iter()
            .map(|id| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| MmmError::Validation(format!("unknown patient id {id}")))
            })
            .collect()
    }
}

/// Unordered compound-id pairs, stored as `(min, max)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CidPairSet {
    pairs: BTreeSet<(u64, u64)>,
}

impl CidPairSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `false` for duplicates. Self pairs are rejected.
    pub fn insert(&mut self, a: u64, b: u64) -> Result<bool> {
        if a == b {
            return Err(MmmError::Validation(format!(
                "self-interaction pair ({a}, {b}) is not allowed"
            )));
        }
        Ok(self.pairs.insert((a.min(b), a.max(b))))
    }

    pub fn contains(&self, a: u64, b: u64) -> bool {
        self.pairs.contains(&(a.min(b), a.max(b)))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.pairs.iter().copied()
    }
}

/// Drug-level interaction adjacency derived from compound-level pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DdiMatrix {
    n: usize,
    dense: Vec<u8>,
    /// Interacting drug pairs with `i < j`.
    pairs: Vec<(usize, usize)>,
    cid_pairs: CidPairSet,
}

impl DdiMatrix {
    pub fn from_cid_pairs(registry: &DrugRegistry, cid_pairs: CidPairSet) -> Result<Self> {
        let by_cid = registry.drugs_by_cid();
        for (a, b) in cid_pairs.iter() {
            for c in [a, b] {
                if !by_cid.contains_key(&c) {
                    return Err(MmmError::Validation(format!(
                        "interaction pair ({a}, {b}) references unknown CID {c}"
                    )));
                }
            }
        }
        let n = registry.len();
        let mut dense = vec![0u8; n * n];
        for (a, b) in cid_pairs.iter() {
            for &i in &by_cid[&a] {
                for &j in &by_cid[&b] {
                    dense[i * n + j] = 1;
                    dense[j * n + i] = 1;
                }
            }
        }
        Ok(Self::from_dense(n, dense, cid_pairs))
    }

    /// Builds a matrix from drug-index pairs, treating each drug index as its own compound id.
    pub fn from_drug_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut dense = vec![0u8; n * n];
        let mut cids = CidPairSet::new();
        for &(i, j) in pairs {
            if i >= n || j >= n {
                return Err(MmmError::Validation(format!(
                    "drug pair ({i}, {j}) outside {n} drugs"
                )));
            }
            cids.insert(i as u64, j as u64)?;
            dense[i * n + j] = 1;
            dense[j * n + i] = 1;
        }
        Ok(Self::from_dense(n, dense, cids))
    }

    fn from_dense(n: usize, dense: Vec<u8>, cid_pairs: CidPairSet) -> Self {
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if dense[i * n + j] == 1 {
                    pairs.push((i, j));
                }
            }
        }
        Self {
            n,
            dense,
            pairs,
            cid_pairs,
        }
    }

    pub fn n_drugs(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.dense[i * self.n + j] == 1
    }

    pub fn drug_pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn cid_pairs(&self) -> &CidPairSet {
        &self.cid_pairs
    }

    pub fn is_symmetric_zero_diagonal(&self) -> bool {
        (0..self.n).all(|i| {
            self.dense[i * self.n + i] == 0
                && (0..self.n).all(|j| self.dense[i * self.n + j] == self.dense[j * self.n + i])
        })
    }
}

/// Binary drug × substructure containment matrix, stored by row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMatrix {
    n_substructures: usize,
    rows: Vec<Vec<usize>>,
}

impl MaskMatrix {
    pub fn from_registry(registry: &DrugRegistry, n_substructures: usize) -> Result<Self> {
        registry.check_substructures(n_substructures)?;
        let rows = registry
            .entries()
            .iter()
            .map(|e| e.substructures.iter().copied().collect())
            .collect();
        Ok(Self {
            n_substructures,
            rows,
        })
    }

    pub fn from_rows(n_substructures: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        let rows: Vec<Vec<usize>> = rows
            .into_iter()
            .map(|r| r.into_iter().collect::<BTreeSet<_>>().into_iter().collect())
            .collect();
        for (i, r) in rows.iter().enumerate() {
            if let Some(&bad) = r.iter().find(|&&s| s >= n_substructures) {
                return Err(MmmError::Validation(format!(
                    "mask row {i} references substructure {bad} of {n_substructures}"
                )));
            }
        }
        Ok(Self {
            n_substructures,
            rows,
        })
    }

    pub fn from_dense(n_drugs: usize, n_substructures: usize, dense: &[u8]) -> Result<Self> {
        if dense.len() != n_drugs * n_substructures {
            return Err(MmmError::Shape(format!(
                "dense mask needs {} entries, got {}",
                n_drugs * n_substructures,
                dense.len()
            )));
        }
        let rows = dense
            .chunks(n_substructures.max(1))
            .take(n_drugs)
            .map(|r| (0..n_substructures).filter(|&j| r[j] != 0).collect())
            .collect();
        Ok(Self {
            n_substructures,
            rows,
        })
    }

    pub fn n_drugs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_substructures(&self) -> usize {
        self.n_substructures
    }

    /// Sorted substructure indices contained in drug `i`.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.rows[i].binary_search(&j).is_ok()
    }

    pub fn to_dense(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.rows.len() * self.n_substructures];
        for (i, r) in self.rows.iter().enumerate() {
            for &j in r {
                out[i * self.n_substructures + j] = 1;
            }
        }
        out
    }

    pub fn substructure_sets(&self) -> Vec<BTreeSet<usize>> {
        self.rows.iter().map(|r| r.iter().copied().collect()).collect()
    }
}

/// Everything `load_corpus` produces.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub corpus: EhrCorpus,
    pub registry: DrugRegistry,
    pub ddi: DdiMatrix,
    pub mask: MaskMatrix,
}
