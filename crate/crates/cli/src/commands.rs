use std::fs;
use std::path::Path;

use mmm_core::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use mmm_core::corpus::{load_corpus, stratified_split, synth_corpus, Dataset, Patient, SplitSpec, SynthSpec, DEFAULT_RATIOS};
use mmm_core::elf::Grid;
use mmm_core::eval::{bootstrap_compare, bootstrap_seeds, bootstrap_summary, case_study_report, evaluate_split};
use mmm_core::experiment::{ablation_csv, ablation_table, run_ablation_grid};
use mmm_core::features::{load_drug_patches, read_features_csv, write_features_csv, FEATURES_FILE};
use mmm_core::model::{Ablation, DrugFeatures, Recommender};
use mmm_core::train::{drug_features, fit_with, HyperParams};
use mmm_core::{MmmError, Result};
use serde_json::{json, Value};

use crate::{AblateArgs, CaseArgs, CompareArgs, EvalArgs, FeaturizeArgs, HyperArgs, SplitName, SynthArgs, TrainArgs};

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> MmmError {
    MmmError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    write(path, &text)
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(MmmError::MissingFile(path.to_path_buf()))
    }
}

impl HyperArgs {
    fn resolve(&self) -> Result<HyperParams> {
        let mut hp = HyperParams::default();
        if let Some(path) = &self.config {
            if !path.is_file() {
                return Err(MmmError::MissingFile(path.clone()));
            }
            hp.apply_config(&fs::read_to_string(path).map_err(|e| io_err(path, e))?)?;
        }
        if let Some(v) = self.seed {
            hp.seed = v;
        }
        if let Some(v) = self.epochs {
            hp.epochs = v;
        }
        if let Some(v) = self.alpha {
            hp.alpha = v;
        }
        if let Some(v) = self.beta {
            hp.beta = v;
        }
        if let Some(v) = self.threshold {
            hp.threshold = v;
        }
        if let Some(v) = self.lr {
            hp.lr = v;
        }
        hp.train_cnn |= self.train_cnn;
        hp.validate()?;
        Ok(hp)
    }
}

fn hyper_json(hp: &HyperParams) -> Value {
    Value::Object(hp.entries().into_iter().map(|(k, v)| (k.to_string(), Value::String(v))).collect())
}

/// Drug inputs for `hp`: a precomputed CSV if given, else the data
/// directory's ELF volumes. Sets `hp.feat_dim` from the CSV.
fn load_features(data_dir: &Path, data: &Dataset, hp: &mut HyperParams, csv: Option<&Path>) -> Result<DrugFeatures> {
    let n = data.registry.len();
    if let Some(path) = csv {
        if hp.train_cnn {
            return Err(MmmError::InvalidArgument("--features cannot be combined with CNN training".into()));
        }
        let t = read_features_csv(path, n)?;
        hp.feat_dim = t.cols();
        return Ok(DrugFeatures::Fixed(t));
    }
    let patches = load_drug_patches(data_dir, n, hp.patch_size)?;
    drug_features(&hp.model_config(&data.corpus.vocab), hp, patches)
}

fn load_data(dir: &Path) -> Result<Dataset> {
    require_dir(dir)?;
    load_corpus(dir)
}

fn pick<'a>(data: &'a Dataset, split: &SplitSpec, which: SplitName) -> Result<Vec<&'a Patient>> {
    data.corpus.select(match which {
        SplitName::Train => &split.train,
        SplitName::Val => &split.val,
        SplitName::Test => &split.test,
    })
}

fn split_name(which: SplitName) -> &'static str {
    match which {
        SplitName::Train => "train",
        SplitName::Val => "val",
        SplitName::Test => "test",
    }
}

fn split_json(split: &SplitSpec) -> Value {
    json!({
        "seed": split.seed,
        "ratios": split.ratios,
        "train": split.train,
        "val": split.val,
        "test": split.test,
    })
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut spec = SynthSpec {
        n_patients: a.n_patients,
        seed: a.seed,
        ..SynthSpec::default()
    };
    if a.no_elf {
        spec.elf_grid = None;
    } else if let Some(dims) = a.grid {
        spec.elf_grid = Some(Grid {
            dims,
            ..Grid::default()
        });
    }
    let data = synth_corpus(&spec, &a.out)?;
    println!(
        "wrote {} patients, {} visits, {} drugs, {} substructures, {} CID pairs to {} (seed {})",
        data.corpus.patients.len(),
        data.corpus.n_visits(),
        data.registry.len(),
        data.mask.n_substructures(),
        data.ddi.cid_pairs().len(),
        a.out.display(),
        a.seed
    );
    Ok(())
}

pub fn featurize(a: FeaturizeArgs) -> Result<()> {
    let mut hp = a.hyper.resolve()?;
    hp.train_cnn = false;
    let data = load_data(&a.data)?;
    let DrugFeatures::Fixed(t) = load_features(&a.data, &data, &mut hp, None)? else {
        unreachable!("CNN training is off")
    };
    let out = a.out.unwrap_or_else(|| a.data.join(FEATURES_FILE));
    write_features_csv(&out, &t)?;
    println!("wrote {}×{} features to {} (seed {})", t.rows(), t.cols(), out.display(), hp.seed);
    Ok(())
}

fn run_training(
    data_dir: &Path,
    out: &Path,
    hyper: &HyperArgs,
    ablation: Ablation,
    csv: Option<&Path>,
) -> Result<()> {
    let mut hp = hyper.resolve()?;
    let data = load_data(data_dir)?;
    let features = load_features(data_dir, &data, &mut hp, csv)?;
    let split = stratified_split(&data.corpus, DEFAULT_RATIOS, hp.seed)?;
    let fit = fit_with(&data, &features, &split, &hp, ablation, |r| {
        eprintln!(
            "epoch {:>4}  loss {:.6}  val ddi {:.4}  jaccard {:.4}  f1 {:.4}",
            r.epoch, r.losses.total, r.val.ddi_rate, r.val.jaccard, r.val.f1
        );
    })?;
    let ck = |params, epoch| Checkpoint {
        params,
        hyper: hp,
        ablation,
        epoch,
    };
    write_checkpoint(out.join("best.ckpt"), &ck(fit.best.clone(), fit.best_epoch))?;
    write_checkpoint(out.join("last.ckpt"), &ck(fit.last.clone(), hp.epochs))?;
    write(&out.join("train_log.csv"), &fit.log_csv(hp.seed))?;
    write_json(&out.join("split.json"), &split_json(&split))?;
    write_json(
        &out.join("run.json"),
        &json!({
            "seed": hp.seed,
            "ablation": ablation.as_str(),
            "hyper": hyper_json(&hp),
            "best_epoch": fit.best_epoch,
            "best_val": fit.trace[fit.best_epoch - 1].val,
            "features": csv.map_or("cnn".to_string(), |p| p.display().to_string()),
        }),
    )?;
    println!(
        "best epoch {} (val DDI rate {:.4}); checkpoints in {} (seed {})",
        fit.best_epoch,
        fit.trace[fit.best_epoch - 1].val.ddi_rate,
        out.display(),
        hp.seed
    );
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    run_training(
        &a.data,
        &a.out,
        &a.hyper,
        a.drop.unwrap_or(Ablation::None),
        a.features.as_deref(),
    )
}

struct Loaded {
    data: Dataset,
    ck: Checkpoint,
    features: DrugFeatures,
    split: SplitSpec,
}

fn load_model(data_dir: &Path, model: &Path, features: Option<&Path>) -> Result<Loaded> {
    let data = load_data(data_dir)?;
    let ck = read_checkpoint(model)?;
    let mut hp = ck.hyper;
    let feats = match features {
        Some(_) => load_features(data_dir, &data, &mut hp, features)?,
        None if ck.hyper.train_cnn => DrugFeatures::Patches(load_drug_patches(data_dir, data.registry.len(), hp.patch_size)?),
        None => load_features(data_dir, &data, &mut hp, None)?,
    };
    let split = stratified_split(&data.corpus, DEFAULT_RATIOS, ck.hyper.seed)?;
    Ok(Loaded {
        data,
        ck,
        features: feats,
        split,
    })
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let l = load_model(&a.data, &a.model, a.features.as_deref())?;
    let threshold = a.threshold.unwrap_or(l.ck.hyper.threshold);
    let rec = Recommender::new(&l.ck.params, &l.features, &l.data.mask, l.ck.ablation, threshold)?;
    let patients = pick(&l.data, &l.split, a.split)?;
    let pairs = l.data.ddi.cid_pairs();
    let (rows, means) = evaluate_split(&rec, &patients, &l.data.registry, pairs)?;
    let seed = a.seed.unwrap_or(l.ck.hyper.seed);
    let boot = bootstrap_summary(&rec, &patients, &l.data.registry, pairs, &bootstrap_seeds(seed, a.repeats))?;

    let mut csv = String::from("seed,patient_id,visit,ddi_rate,jaccard,f1,n_drugs\n");
    for r in &rows {
        csv.push_str(&format!(
            "{seed},{},{},{},{},{},{}\n",
            r.patient_id,
            r.visit + 1,
            r.ddi_rate,
            r.jaccard,
            r.f1,
            r.n_drugs
        ));
    }
    write(&a.out.join("metrics.csv"), &csv)?;
    write_json(
        &a.out.join("summary.json"),
        &json!({
            "seed": seed,
            "model": a.model.display().to_string(),
            "model_seed": l.ck.hyper.seed,
            "ablation": l.ck.ablation.as_str(),
            "split": split_name(a.split),
            "threshold": threshold,
            "means": means,
            "bootstrap": boot,
        }),
    )?;
    println!(
        "{} visits: DDI rate {:.4}, Jaccard {:.4}, F1 {:.4}, avg drugs {:.2} (seed {seed})",
        means.n_visits, means.ddi_rate, means.jaccard, means.f1, means.avg_drugs
    );
    Ok(())
}

pub fn compare(a: CompareArgs) -> Result<()> {
    let la = load_model(&a.data, &a.model, a.features.as_deref())?;
    let lb = load_model(&a.data, &a.model_b, a.features.as_deref())?;
    let ra = Recommender::new(&la.ck.params, &la.features, &la.data.mask, la.ck.ablation, la.ck.hyper.threshold)?;
    let rb = Recommender::new(&lb.ck.params, &lb.features, &lb.data.mask, lb.ck.ablation, lb.ck.hyper.threshold)?;
    // both models are scored on the first model's split
    let patients = pick(&la.data, &la.split, a.split)?;
    let seed = a.seed.unwrap_or(la.ck.hyper.seed);
    let seeds = bootstrap_seeds(seed, a.repeats);
    let c = bootstrap_compare(&ra, &rb, &patients, &la.data.registry, la.data.ddi.cid_pairs(), &seeds)?;
    for (m, t) in &c.tests {
        if let Some(w) = &t.warning {
            eprintln!("warning: {m}: {w}");
        }
    }
    write_json(
        &a.out.join("summary.json"),
        &json!({
            "seed": seed,
            "model_a": a.model.display().to_string(),
            "model_b": a.model_b.display().to_string(),
            "split": split_name(a.split),
            "split_seed": la.ck.hyper.seed,
            "comparison": c,
        }),
    )?;
    println!("{:<10} {:>10} {:>10} {:>12} {:>10}", "metric", "mean A", "mean B", "t", "p");
    for (m, t) in &c.tests {
        println!(
            "{:<10} {:>10.4} {:>10.4} {:>12.4} {:>10.4}",
            m, c.a.metrics[m].mean, c.b.metrics[m].mean, t.t, t.p
        );
    }
    Ok(())
}

pub fn case_study(a: CaseArgs) -> Result<()> {
    let l = load_model(&a.data, &a.model, a.features.as_deref())?;
    let threshold = a.threshold.unwrap_or(l.ck.hyper.threshold);
    let rec = Recommender::new(&l.ck.params, &l.features, &l.data.mask, l.ck.ablation, threshold)?;
    let report = case_study_report(&rec, &l.data.corpus, a.patient, &l.data.registry, l.data.ddi.cid_pairs())?;
    let text = format!(
        "Model {} (seed {}, threshold {threshold})\n{}",
        a.model.display(),
        l.ck.hyper.seed,
        report.render(&l.data.registry)?
    );
    print!("{text}");
    if let Some(out) = &a.out {
        write(out, &text)?;
    }
    Ok(())
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    let mut hp = a.hyper.resolve()?;
    let data = load_data(&a.data)?;
    let features = load_features(&a.data, &data, &mut hp, a.features.as_deref())?;
    let split = stratified_split(&data.corpus, DEFAULT_RATIOS, hp.seed)?;
    let rows = run_ablation_grid(&data, &features, &split, &hp, a.repeats)?;
    for r in &rows {
        let dir = a.out.join(r.ablation.as_str());
        write_checkpoint(
            dir.join("best.ckpt"),
            &Checkpoint {
                params: r.fit.best.clone(),
                hyper: hp,
                ablation: r.ablation,
                epoch: r.best_epoch,
            },
        )?;
        write(&dir.join("train_log.csv"), &r.fit.log_csv(hp.seed))?;
    }
    write(&a.out.join("ablation.csv"), &ablation_csv(&rows, hp.seed))?;
    let table = ablation_table(&rows);
    write(&a.out.join("ablation.txt"), &format!("seed {}\n{table}", hp.seed))?;
    print!("{table}");
    Ok(())
}
