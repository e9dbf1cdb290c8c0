//! Reading and writing the on-disk corpus directory.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::types::{
    CidPairSet, Dataset, DdiMatrix, DrugRegistry, DrugRegistryEntry, EhrCorpus, MaskMatrix,
    Patient, Visit, VocabSizes,
};
use crate::error::{MmmError, Result};

pub const PATIENTS_FILE: &str = "patients.jsonl";
pub const REGISTRY_FILE: &str = "registry.csv";
pub const DDI_FILE: &str = "ddi_cid_pairs.csv";
pub const VOCAB_FILE: &str = "vocab.json";
pub const ELF_DIR: &str = "elf";

const REGISTRY_HEADER: [&str; 6] = ["drug_id", "name", "smiles", "cid", "atc3", "substructure_ids"];
const DDI_HEADER: [&str; 2] = ["cid_a", "cid_b"];

#[derive(Debug, Serialize, Deserialize)]
struct PatientRecord {
    pid: u64,
    visits: Vec<VisitRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VisitRecord {
    dx: Vec<usize>,
    px: Vec<usize>,
    rx: Vec<usize>,
}

fn require(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(MmmError::MissingFile(p))
    }
}

/// Loads and cross-validates a corpus directory.
///
/// Visits without prescriptions are dropped, and patients left without
/// visits are dropped with them.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(MmmError::MissingFile(dir.to_path_buf()));
    }
    let vocab_path = require(dir, VOCAB_FILE)?;
    let patients_path = require(dir, PATIENTS_FILE)?;
    let registry_path = require(dir, REGISTRY_FILE)?;
    let ddi_path = require(dir, DDI_FILE)?;

    let vocab_text = fs::read_to_string(&vocab_path).map_err(|e| MmmError::io(&vocab_path, e))?;
    let vocab: VocabSizes = serde_json::from_str(&vocab_text)
        .map_err(|e| MmmError::format(VOCAB_FILE, e.to_string()))?;

    let registry = read_registry(&registry_path)?;
    if registry.len() != vocab.n_drugs {
        return Err(MmmError::Validation(format!(
            "registry lists {} drugs but vocab.json declares {}",
            registry.len(),
            vocab.n_drugs
        )));
    }
    let mask = MaskMatrix::from_registry(&registry, vocab.n_substructures)?;
    let cid_pairs = read_cid_pairs(&ddi_path)?;
    let ddi = DdiMatrix::from_cid_pairs(&registry, cid_pairs)?;

    let patients = read_patients(&patients_path)?;
    if patients.is_empty() {
        return Err(MmmError::Validation("no patients".into()));
    }
    let corpus = EhrCorpus { patients, vocab };
    corpus.validate()?;

    Ok(Dataset {
        corpus,
        registry,
        ddi,
        mask,
    })
}

fn read_patients(path: &Path) -> Result<Vec<Patient>> {
    let file = fs::File::open(path).map_err(|e| MmmError::io(path, e))?;
    let mut patients = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| MmmError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PatientRecord = serde_json::from_str(&line)
            .map_err(|e| MmmError::format(format!("{PATIENTS_FILE} line {}", lineno + 1), e.to_string()))?;
        let visits: Vec<Visit> = rec
            .visits
            .into_iter()
            .filter(|v| !v.rx.is_empty())
            .map(|v| Visit {
                diagnoses: v.dx,
                procedures: v.px,
                medications: v.rx.into_iter().collect::<BTreeSet<_>>().into_iter().collect(),
            })
            .collect();
        if !visits.is_empty() {
            patients.push(Patient {
                id: rec.pid,
                visits,
            });
        }
    }
    Ok(patients)
}

fn check_header(rdr: &mut csv::Reader<fs::File>, expected: &[&str], ctx: &str) -> Result<()> {
    let headers = rdr.headers().map_err(|e| MmmError::format(ctx, e.to_string()))?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(MmmError::format(
            ctx,
            format!("expected header {expected:?}, found {got:?}"),
        ));
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(value: &str, what: &str, ctx: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| MmmError::format(ctx, format!("invalid {what} {value:?}")))
}

fn read_registry(path: &Path) -> Result<DrugRegistry> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| MmmError::format(REGISTRY_FILE, e.to_string()))?;
    check_header(&mut rdr, &REGISTRY_HEADER, REGISTRY_FILE)?;
    let mut entries = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let ctx = format!("{REGISTRY_FILE} record {}", i + 1);
        let rec = rec.map_err(|e| MmmError::format(&ctx, e.to_string()))?;
        if rec.len() != REGISTRY_HEADER.len() {
            return Err(MmmError::format(&ctx, "wrong field count"));
        }
        let substructures = rec[5]
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse_field::<usize>(s, "substructure id", &ctx))
            .collect::<Result<BTreeSet<_>>>()?;
        entries.push(DrugRegistryEntry {
            drug_id: parse_field(&rec[0], "drug_id", &ctx)?,
            name: rec[1].to_string(),
            smiles: rec[2].to_string(),
            cid: parse_field(&rec[3], "cid", &ctx)?,
            atc3: rec[4].trim().to_string(),
            substructures,
        });
    }
    DrugRegistry::new(entries)
}

fn read_cid_pairs(path: &Path) -> Result<CidPairSet> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| MmmError::format(DDI_FILE, e.to_string()))?;
    check_header(&mut rdr, &DDI_HEADER, DDI_FILE)?;
    let mut set = CidPairSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let ctx = format!("{DDI_FILE} record {}", i + 1);
        let rec = rec.map_err(|e| MmmError::format(&ctx, e.to_string()))?;
        if rec.len() != 2 {
            return Err(MmmError::format(&ctx, "wrong field count"));
        }
        let a: u64 = parse_field(&rec[0], "cid_a", &ctx)?;
        let b: u64 = parse_field(&rec[1], "cid_b", &ctx)?;
        set.insert(a, b)
            .map_err(|e| MmmError::Validation(format!("{ctx}: {e}")))?;
    }
    Ok(set)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| MmmError::io(path, e))
}

/// Writes the four tabular corpus files into `dir` (created if needed).
pub fn write_corpus(dir: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| MmmError::io(dir, e))?;

    let path = dir.join(VOCAB_FILE);
    let mut w = create(&path)?;
    let text = serde_json::to_string(&data.corpus.vocab).expect("vocab serializes");
    writeln!(w, "{text}").map_err(|e| MmmError::io(&path, e))?;
    w.flush().map_err(|e| MmmError::io(&path, e))?;

    let path = dir.join(PATIENTS_FILE);
    let mut w = create(&path)?;
    for p in &data.corpus.patients {
        let rec = PatientRecord {
            pid: p.id,
            visits: p
                .visits
                .iter()
                .map(|v| VisitRecord {
                    dx: v.diagnoses.clone(),
                    px: v.procedures.clone(),
                    rx: v.medications.clone(),
                })
                .collect(),
        };
        let line = serde_json::to_string(&rec).expect("patient serializes");
        writeln!(w, "{line}").map_err(|e| MmmError::io(&path, e))?;
    }
    w.flush().map_err(|e| MmmError::io(&path, e))?;

    let path = dir.join(REGISTRY_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| MmmError::format(REGISTRY_FILE, e.to_string()))?;
    let csv_err = |e: csv::Error| MmmError::format(REGISTRY_FILE, e.to_string());
    w.write_record(REGISTRY_HEADER).map_err(csv_err)?;
    for e in data.registry.entries() {
        let subs = e
            .substructures
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            e.drug_id.to_string(),
            e.name.clone(),
            e.smiles.clone(),
            e.cid.to_string(),
            e.atc3.clone(),
            subs,
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| MmmError::io(&path, e))?;

    let path = dir.join(DDI_FILE);
    let mut w = create(&path)?;
    writeln!(w, "{}", DDI_HEADER.join(",")).map_err(|e| MmmError::io(&path, e))?;
    for (a, b) in data.ddi.cid_pairs().iter() {
        writeln!(w, "{a},{b}").map_err(|e| MmmError::io(&path, e))?;
    }
    w.flush().map_err(|e| MmmError::io(&path, e))?;
    Ok(())
}

pub fn elf_path(dir: impl AsRef<Path>, drug_id: usize) -> PathBuf {
    dir.as_ref().join(ELF_DIR).join(format!("{drug_id}.elfv"))
}
