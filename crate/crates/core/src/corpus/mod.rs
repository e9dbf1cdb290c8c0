//! Patients, drugs, interaction and substructure matrices; file ingestion,
//! stratified splitting and a synthetic corpus generator.

mod io;
mod split;
mod synth;
mod types;

pub use io::{
    elf_path, load_corpus, write_corpus, DDI_FILE, ELF_DIR, PATIENTS_FILE, REGISTRY_FILE, VOCAB_FILE,
};
pub use split::{stratified_split, SplitSpec, DEFAULT_RATIOS, N_STRATA};
pub use synth::{corpus_stats, synth_corpus, synth_dataset, CorpusStats, SynthSpec, TargetStats};
pub use types::{
    CidPairSet, Dataset, DdiMatrix, DrugRegistry, DrugRegistryEntry, EhrCorpus, MaskMatrix, Patient,
    Visit, VocabSizes,
};
