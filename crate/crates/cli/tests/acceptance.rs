//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use mmm_core::bipartite::local_drug_vector;
use mmm_core::corpus::{
    corpus_stats, elf_path, load_corpus, stratified_split, CidPairSet, Dataset, DdiMatrix, DrugRegistry,
    DrugRegistryEntry, MaskMatrix, Visit, DEFAULT_RATIOS,
};
use mmm_core::elf::{
    elf_kernel, elf_value, promolecular_fields, read_elfv, thomas_fermi_reference, Atom, Grid, Patch, PatchSet,
    PseudoMolecule, DENSITY_FLOOR,
};
use mmm_core::eval::{bootstrap_compare, bootstrap_seeds, ddi_rate, f1_atc3, jaccard_atc3, paired_t_test, Metric};
use mmm_core::features::load_drug_patches;
use mmm_core::model::{visit_loss, visit_loss_and_grad, Ablation, Context, DrugFeatures, ModelConfig, ModelParams, Recommender};
use mmm_core::tensor::{stream_rng, Tensor};
use mmm_core::train::{drug_features, evaluate_params, fit, HyperParams};
use rand::Rng;

const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(10);
const METRIC_CASES: usize = 200;
const METRIC_MAX_DRUGS: usize = 12;
const METRIC_BUDGET: Duration = Duration::from_secs(5);
const W3_PERTURBATIONS: usize = 1000;
const ELF_ONE_TOL: f64 = 1e-9;
const OVERFIT_PATIENTS: usize = 50;
const OVERFIT_EPOCHS: usize = 300;
const OVERFIT_MIN: f64 = 0.90;
const OVERFIT_BUDGET: Duration = Duration::from_secs(600);
const DDI_ORDER_TOL: f64 = 0.005;
const T_TOL: f64 = 1e-9;
const P_TOL: f64 = 1e-6;
const SYNTH_MEAN_TOL: f64 = 0.10;

type Check = Result<String, String>;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mmm")
}

fn mmm(args: &[&str]) -> Result<String, String> {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "mmm {} exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e<T>(r: mmm_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// 1

fn gradient_suite() -> Check {
    let start = Instant::now();
    let config = ModelConfig {
        n_dx: 10,
        n_px: 10,
        n_drugs: 5,
        n_substructures: 7,
        emb_dim: 4,
        dim: 3,
        feat_dim: 4,
        patch_size: 4,
        channels: [2, 2],
    };
    let params = e(ModelParams::init(config, 3))?;
    let mut rng = stream_rng(4, 0);
    let sets = (0..5)
        .map(|i| PatchSet {
            drug_id: i,
            patch_size: 4,
            patches: (0..3)
                .map(|j| Patch {
                    slice: j,
                    tile_row: 0,
                    tile_col: 0,
                    values: (0..16).map(|_| rng.random_range(0.0..1.0)).collect(),
                })
                .collect(),
        })
        .collect();
    let features = DrugFeatures::Patches(sets);
    let mask = e(MaskMatrix::from_rows(7, vec![vec![0, 1], vec![2], vec![1, 3, 4], vec![5, 6], vec![0, 6]]))?;
    let ddi = e(DdiMatrix::from_drug_pairs(5, &[(0, 1), (2, 4), (1, 3)]))?;
    let visits = vec![
        Visit {
            diagnoses: vec![1, 4],
            procedures: vec![2],
            medications: vec![0, 3],
        },
        Visit {
            diagnoses: vec![7],
            procedures: vec![0, 9],
            medications: vec![1, 2, 4],
        },
    ];
    let ctx = Context {
        features: &features,
        mask: &mask,
        ddi: &ddi,
        ablation: Ablation::None,
    };
    let (alpha, beta) = (0.6, 0.7);
    let mut grads = params.zeros_like();
    e(visit_loss_and_grad(&params, &ctx, &visits, alpha, beta, &mut grads))?;
    let h = 1e-6;
    let n_blocks = params.blocks().len();
    let mut worst = (0.0f64, String::new());
    for bi in 0..n_blocks {
        let name = params.blocks()[bi].0.clone();
        let analytic = grads.blocks()[bi].2.data().to_vec();
        let mut num = vec![0.0; analytic.len()];
        for (k, slot) in num.iter_mut().enumerate() {
            let mut up = params.clone();
            up.blocks_mut()[bi].2.data_mut()[k] += h;
            let mut down = params.clone();
            down.blocks_mut()[bi].2.data_mut()[k] -= h;
            let fu = e(visit_loss(&up, &ctx, &visits, alpha, beta))?.total;
            let fd = e(visit_loss(&down, &ctx, &visits, alpha, beta))?.total;
            *slot = (fu - fd) / (2.0 * h);
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = num.iter().zip(&analytic).map(|(a, b)| a - b).collect();
        let scale = norm(&num).max(norm(&analytic));
        ensure(scale > 0.0, format!("{name}: gradient is identically zero"))?;
        let rel = norm(&diff) / scale;
        if rel > worst.0 {
            worst = (rel, name);
        }
    }
    let elapsed = start.elapsed();
    ensure(worst.0 < GRAD_REL_TOL, format!("worst block {} rel err {:.2e}", worst.1, worst.0))?;
    ensure(elapsed < GRAD_BUDGET, format!("took {elapsed:.1?}"))?;
    Ok(format!("{n_blocks} blocks, worst rel err {:.2e} ({}), {elapsed:.2?}", worst.0, worst.1))
}

// 2

fn random_registry(rng: &mut impl Rng, m: usize) -> (DrugRegistry, CidPairSet) {
    let codes = ["A01B", "A02C", "B01A", "C03D", "N02B"];
    let entries = (0..m)
        .map(|i| DrugRegistryEntry {
            drug_id: i,
            name: format!("d{i}"),
            smiles: "C".into(),
            cid: rng.random_range(1..=8),
            atc3: codes[rng.random_range(0..codes.len())].into(),
            substructures: BTreeSet::new(),
        })
        .collect();
    let mut pairs = CidPairSet::new();
    for a in 1..=8u64 {
        for b in a + 1..=8 {
            if rng.random_bool(0.3) {
                pairs.insert(a, b).unwrap();
            }
        }
    }
    (DrugRegistry::new(entries).unwrap(), pairs)
}

fn brute_force(pred: &[bool], truth: &[bool], reg: &DrugRegistry, pairs: &CidPairSet) -> (f64, f64, f64) {
    let m = pred.len();
    let mut seen = BTreeSet::new();
    let mut hits = BTreeSet::new();
    for i in 0..m {
        for j in 0..m {
            let (a, b) = (reg.cid(i).unwrap(), reg.cid(j).unwrap());
            if pred[i] && pred[j] && a < b {
                seen.insert((a, b));
                if pairs.contains(a, b) {
                    hits.insert((a, b));
                }
            }
        }
    }
    let ddi = if seen.is_empty() {
        0.0
    } else {
        hits.len() as f64 / seen.len() as f64
    };
    let codes: BTreeSet<&str> = (0..m).map(|i| reg.atc3(i).unwrap()).collect();
    let (mut inter, mut union, mut np, mut nt) = (0usize, 0usize, 0usize, 0usize);
    for c in codes {
        let in_p = (0..m).any(|i| pred[i] && reg.atc3(i).unwrap() == c);
        let in_t = (0..m).any(|i| truth[i] && reg.atc3(i).unwrap() == c);
        inter += (in_p && in_t) as usize;
        union += (in_p || in_t) as usize;
        np += in_p as usize;
        nt += in_t as usize;
    }
    if np == 0 {
        return (ddi, 0.0, 0.0);
    }
    (ddi, inter as f64 / union as f64, (2 * inter) as f64 / (np + nt) as f64)
}

fn metric_oracles() -> Check {
    let start = Instant::now();
    let mut rng = stream_rng(2, 0);
    for case in 0..METRIC_CASES {
        let m = rng.random_range(1..=METRIC_MAX_DRUGS);
        let (reg, pairs) = random_registry(&mut rng, m);
        let pred: Vec<bool> = (0..m).map(|_| rng.random_bool(0.5)).collect();
        let mut truth: Vec<bool> = (0..m).map(|_| rng.random_bool(0.5)).collect();
        if !truth.iter().any(|&t| t) {
            truth[rng.random_range(0..m)] = true;
        }
        let ids = |v: &[bool]| (0..m).filter(|&i| v[i]).collect::<Vec<_>>();
        let (p_ids, t_ids) = (ids(&pred), ids(&truth));
        let got = (
            e(ddi_rate(&p_ids, &reg, &pairs))?,
            e(jaccard_atc3(&p_ids, &t_ids, &reg))?,
            e(f1_atc3(&p_ids, &t_ids, &reg))?,
        );
        let want = brute_force(&pred, &truth, &reg, &pairs);
        ensure(got == want, format!("case {case}: got {got:?}, brute force {want:?}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < METRIC_BUDGET, format!("took {elapsed:.1?}"))?;
    Ok(format!("{METRIC_CASES} cases exact, {elapsed:.2?}"))
}

// 3

fn mask_absorption() -> Check {
    let mut rng = stream_rng(3, 0);
    let (m, s) = (40, 60);
    let rows: Vec<Vec<usize>> = (0..m)
        .map(|_| (0..s).filter(|_| rng.random_bool(0.15)).collect())
        .collect();
    let mask = e(MaskMatrix::from_rows(s, rows))?;
    let mut w3 = Tensor::uniform(&[m, s], 1.0, &mut rng);
    let b3: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let m_s: Vec<f64> = (0..s).map(|_| rng.random_range(0.0..1.0)).collect();
    let reference = e(local_drug_vector(&m_s, &w3, &mask, &b3))?;
    let zeros: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..s).map(move |j| (i, j))).filter(|&(i, j)| !mask.get(i, j)).collect();
    for k in 0..W3_PERTURBATIONS {
        let (i, j) = zeros[rng.random_range(0..zeros.len())];
        let v = match k % 4 {
            0 => rng.random_range(-1e6..1e6),
            1 => f64::NAN,
            2 => f64::INFINITY,
            _ => rng.random_range(-1.0..1.0),
        };
        w3.row_mut(i)[j] = v;
        let got = e(local_drug_vector(&m_s, &w3, &mask, &b3))?;
        let same = got.iter().zip(&reference).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, format!("perturbation {k} at ({i}, {j}) changed m_l"))?;
    }
    Ok(format!("{W3_PERTURBATIONS} cumulative perturbations at {} masked positions, m_l bit-identical", zeros.len()))
}

// 4

fn elf_identities(data_dir: &Path, n_drugs: usize) -> Check {
    let atom = Atom {
        element: "H".into(),
        position: [0.0; 3],
        zeta: 1.0,
        electrons: 1.0,
    };
    let mol = e(PseudoMolecule::new(vec![atom]))?;
    let f = e(promolecular_fields(&mol, Grid::default()))?;
    let elf = e(elf_kernel(&f.rho, &f.grad, &f.tau))?;
    let mut worst = 0.0f64;
    let mut counted = 0;
    for (v, r) in elf.iter().zip(&f.rho) {
        if *r > DENSITY_FLOOR {
            worst = worst.max((v - 1.0).abs());
            counted += 1;
        }
    }
    ensure(counted > 0, "no voxel above the density floor")?;
    ensure(worst <= ELF_ONE_TOL, format!("single atom: max |ELF-1| = {worst:.3e}"))?;

    for &rho in &[1e-6, 1e-3, 0.05, 0.7, 3.0, 42.0] {
        let v = elf_value(rho, [0.0; 3], thomas_fermi_reference(rho));
        ensure(v == 0.5, format!("χ=1 at ρ={rho} gave {v}"))?;
    }

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n_drugs {
        let vol = e(read_elfv(elf_path(data_dir, i)))?;
        for &v in vol.values() {
            ensure((0.0..=1.0).contains(&v), format!("drug {i}: ELF value {v} outside [0, 1]"))?;
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    Ok(format!(
        "1s atom max |ELF-1| {worst:.1e} over {counted} voxels; χ=1 gives 0.5; {n_drugs} volumes in [{lo:.3}, {hi:.3}]"
    ))
}

// 5, 6

struct Prepared {
    data: Dataset,
    features: DrugFeatures,
}

fn prepare(data_dir: &Path) -> Result<Prepared, String> {
    let data = e(load_corpus(data_dir))?;
    let hp = HyperParams::default();
    let patches = e(load_drug_patches(data_dir, data.registry.len(), hp.patch_size))?;
    let features = e(drug_features(&hp.model_config(&data.corpus.vocab), &hp, patches))?;
    Ok(Prepared { data, features })
}

fn overfit(prep: &Prepared) -> Check {
    let start = Instant::now();
    let hp = HyperParams {
        epochs: OVERFIT_EPOCHS,
        ..HyperParams::default()
    };
    let split = e(stratified_split(&prep.data.corpus, DEFAULT_RATIOS, hp.seed))?;
    let fit = e(fit(&prep.data, &prep.features, &split, &hp, Ablation::None))?;
    let train = e(prep.data.corpus.select(&split.train))?;
    let m = e(evaluate_params(&fit.last, &prep.data, &prep.features, &train, Ablation::None, hp.threshold))?;
    let elapsed = start.elapsed();
    ensure(
        m.jaccard >= OVERFIT_MIN && m.f1 >= OVERFIT_MIN,
        format!("train Jaccard {:.4}, F1 {:.4} after {OVERFIT_EPOCHS} epochs", m.jaccard, m.f1),
    )?;
    ensure(elapsed < OVERFIT_BUDGET, format!("took {elapsed:.0?}"))?;
    Ok(format!(
        "{} train visits: Jaccard {:.4}, F1 {:.4} after {OVERFIT_EPOCHS} epochs, {elapsed:.0?}",
        m.n_visits, m.jaccard, m.f1
    ))
}

fn ddi_pressure(prep: &Prepared) -> Check {
    let final_val_ddi = |beta: f64| -> Result<f64, String> {
        let hp = HyperParams {
            epochs: OVERFIT_EPOCHS,
            beta,
            ..HyperParams::default()
        };
        let split = e(stratified_split(&prep.data.corpus, DEFAULT_RATIOS, hp.seed))?;
        let fit = e(fit(&prep.data, &prep.features, &split, &hp, Ablation::None))?;
        Ok(fit.trace.last().expect("at least one epoch").val.ddi_rate)
    };
    let low = final_val_ddi(0.3)?;
    let high = final_val_ddi(1.0)?;
    let detail = format!("val DDI rate after {OVERFIT_EPOCHS} epochs: β=0.3 {low:.4}, β=1.0 {high:.4}");
    ensure(low <= high + DDI_ORDER_TOL, detail.clone())?;
    let note = if low < high { "strict" } else { "within tolerance" };
    Ok(format!("{detail} ({note})"))
}

// 7

fn ablation_structure(data_dir: &Path, tmp: &Path) -> Check {
    let out = tmp.join("ablate");
    mmm(&["ablate", "--data", p(data_dir), "--out", p(&out), "--epochs", "2", "--repeats", "3"])?;
    let csv = fs::read_to_string(out.join("ablation.csv")).map_err(|e| e.to_string())?;
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().ok_or("empty ablation.csv")?.split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or(format!("no {name} column"));
    let (method, init, fin) = (col("method")?, col("drug_side_checksum_init")?, col("drug_side_checksum_final")?);
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let methods: Vec<&str> = rows.iter().map(|r| r[method]).collect();
    ensure(methods == ["full", "w/o ELF", "w/o bipartite"], format!("rows {methods:?}"))?;
    let no_elf = &rows[1];
    ensure(no_elf[init] == no_elf[fin], format!("w/o ELF drug-side checksum {} -> {}", no_elf[init], no_elf[fin]))?;
    ensure(rows[0][init] != rows[0][fin], "full model did not move its drug-side parameters")?;
    Ok(format!("3 rows; w/o ELF drug-side checksum {} unchanged", no_elf[init]))
}

// 8

/// Two-sided p for Student t with 4 degrees of freedom by Simpson's rule on
/// the closed-form density 3/8 (1 + x²/4)^(-5/2).
fn simpson_p_df4(t: f64) -> f64 {
    let pdf = |x: f64| 0.375 * (1.0 + x * x / 4.0).powf(-2.5);
    let n = 20_000;
    let h = t.abs() / n as f64;
    let mut s = pdf(0.0) + pdf(t.abs());
    for k in 1..n {
        s += pdf(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}

fn statistics(prep: &Prepared) -> Check {
    let config = HyperParams::default().model_config(&prep.data.corpus.vocab);
    let params = e(ModelParams::init(config, 1))?;
    let rec = e(Recommender::new(&params, &prep.features, &prep.data.mask, Ablation::None, 0.5))?;
    let split = e(stratified_split(&prep.data.corpus, DEFAULT_RATIOS, 1))?;
    let test = e(prep.data.corpus.select(&split.test))?;
    let c = e(bootstrap_compare(&rec, &rec, &test, &prep.data.registry, prep.data.ddi.cid_pairs(), &bootstrap_seeds(1, 10)))?;
    for m in [Metric::DdiRate, Metric::Jaccard, Metric::F1, Metric::AvgDrugs] {
        let t = c.tests.get(m.name()).ok_or(format!("no test for {}", m.name()))?;
        ensure(t.p == 1.0, format!("self-comparison {}: p = {}", m.name(), t.p))?;
    }

    let diffs = [0.5, 0.7, 0.6, 0.8, 0.4];
    let t = e(paired_t_test(&diffs))?;
    // mean 0.6, sd √0.025, so t = 0.6 √5 / √0.025 = 6√2
    let closed = 6.0 * 2f64.sqrt();
    ensure((t.t - closed).abs() <= T_TOL, format!("t = {} vs closed form {closed}", t.t))?;
    let oracle = simpson_p_df4(closed);
    ensure((t.p - oracle).abs() <= P_TOL, format!("p = {} vs integration {oracle}", t.p))?;
    Ok(format!(
        "self-comparison p = 1 on 4 metrics; t = {:.12} (6√2), p = {:.3e} vs integration {:.3e}",
        t.t, t.p, oracle
    ))
}

// 9

fn data_fidelity(tmp: &Path) -> Check {
    let dir = tmp.join("table1");
    mmm(&["synth", "--out", p(&dir), "--seed", "1", "--no-elf"])?;
    let data = e(load_corpus(&dir))?;
    let n_drugs = data.registry.len();
    let n_sub = data.mask.n_substructures();
    let n_ddi = data.ddi.drug_pairs().len();
    ensure(
        (n_drugs, n_sub, n_ddi) == (250, 442, 4918),
        format!("{n_drugs} drugs, {n_sub} substructures, {n_ddi} DDI pairs"),
    )?;
    let s = corpus_stats(&data.corpus);
    let targets = [
        ("visits", s.mean_visits, 2.60),
        ("dx", s.mean_dx, 10.38),
        ("px", s.mean_px, 3.85),
        ("meds", s.mean_meds, 7.67),
    ];
    for (name, got, want) in targets {
        ensure(
            (got - want).abs() <= SYNTH_MEAN_TOL * want,
            format!("mean {name} {got:.3} vs target {want}"),
        )?;
    }
    Ok(format!(
        "250/442/4918 exact; means visits {:.2}, dx {:.2}, px {:.2}, meds {:.2}",
        s.mean_visits, s.mean_dx, s.mean_px, s.mean_meds
    ))
}

// 10

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism(data_dir: &Path, tmp: &Path) -> Check {
    let (s1, s2) = (tmp.join("synth1"), tmp.join("synth2"));
    for d in [&s1, &s2] {
        mmm(&["synth", "--out", p(d), "--seed", "7", "--n-patients", "20"])?;
    }
    let (a, b) = (tree(&s1), tree(&s2));
    ensure(!a.is_empty() && a == b, "synth outputs differ")?;

    let (t1, t2) = (tmp.join("train1"), tmp.join("train2"));
    for d in [&t1, &t2] {
        mmm(&["train", "--data", p(data_dir), "--out", p(d), "--epochs", "2", "--seed", "5"])?;
    }
    for f in ["best.ckpt", "last.ckpt", "train_log.csv"] {
        let x = fs::read(t1.join(f)).map_err(|e| e.to_string())?;
        let y = fs::read(t2.join(f)).map_err(|e| e.to_string())?;
        ensure(x == y, format!("{f} differs between runs"))?;
    }
    Ok(format!("synth: {} files identical; train: checkpoints and log identical", a.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let data_dir = tmp.path().join("data");
    let setup = mmm(&["synth", "--out", p(&data_dir), "--seed", "1", "--n-patients", &OVERFIT_PATIENTS.to_string()])
        .and_then(|_| prepare(&data_dir));

    let mut results: Vec<(usize, &str, Check)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &dyn Fn() -> Check| {
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match &r {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        println!("{tag} {id:>2} {name}: {detail}");
        results.push((id, name, r));
    };

    run(1, "gradient suite", &gradient_suite);
    run(2, "metric oracles", &metric_oracles);
    run(3, "mask absorption", &mask_absorption);
    match &setup {
        Ok(prep) => {
            let n = prep.data.registry.len();
            run(4, "ELF identities", &|| elf_identities(&data_dir, n));
            run(5, "overfit sanity", &|| overfit(prep));
            run(6, "DDI pressure", &|| ddi_pressure(prep));
            run(7, "ablation structure", &|| ablation_structure(&data_dir, tmp.path()));
            run(8, "statistics", &|| statistics(prep));
        }
        Err(err) => {
            for (id, name) in [(4, "ELF identities"), (5, "overfit sanity"), (6, "DDI pressure"), (7, "ablation structure"), (8, "statistics")] {
                run(id, name, &|| Err(format!("corpus setup failed: {err}")));
            }
        }
    }
    run(9, "data fidelity", &|| data_fidelity(tmp.path()));
    run(10, "determinism", &|| determinism(&data_dir, tmp.path()));

    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
