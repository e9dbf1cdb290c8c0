//! Training: one Adam step per visit in patient/visit order, validation DDI
//! rate after every epoch, best and last checkpoints.

use std::fmt::Write as _;

use crate::corpus::{Dataset, Patient, SplitSpec, VocabSizes};
use crate::elf::{PatchSet, DEFAULT_PATCH_SIZE};
use crate::error::{MmmError, Result};
use crate::eval::{evaluate_split, SplitMetrics};
use crate::model::{featurize, init_cnn, standardize_columns, visit_loss_and_grad, Ablation, Context, DrugFeatures, Group, ModelConfig, ModelParams, Recommender};
use crate::optim::{Adam, DEFAULT_LR};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub alpha: f64,
    pub beta: f64,
    pub lr: f64,
    pub epochs: usize,
    pub threshold: f64,
    pub seed: u64,
    /// Fine-tune the CNN on raw patches instead of using fixed features.
    pub train_cnn: bool,
    pub emb_dim: usize,
    pub dim: usize,
    pub feat_dim: usize,
    pub patch_size: usize,
    pub channels: [usize; 2],
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 0.95,
            beta: 0.9,
            lr: DEFAULT_LR,
            epochs: 20,
            threshold: 0.5,
            seed: 1,
            train_cnn: false,
            emb_dim: 64,
            dim: 64,
            feat_dim: 128,
            patch_size: DEFAULT_PATCH_SIZE,
            channels: [4, 8],
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| MmmError::InvalidArgument(format!("bad value {value:?} for {key}")))
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(MmmError::InvalidArgument(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("alpha", self.alpha)?;
        unit("beta", self.beta)?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(MmmError::InvalidArgument(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(MmmError::InvalidArgument(format!("lr must be positive, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(MmmError::InvalidArgument("epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn model_config(&self, vocab: &VocabSizes) -> ModelConfig {
        ModelConfig {
            emb_dim: self.emb_dim,
            dim: self.dim,
            feat_dim: self.feat_dim,
            patch_size: self.patch_size,
            channels: self.channels,
            ..ModelConfig::for_vocab(vocab)
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "alpha" => self.alpha = parse_num(key, value)?,
            "beta" => self.beta = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "threshold" => self.threshold = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "train_cnn" => self.train_cnn = parse_num(key, value)?,
            "emb_dim" => self.emb_dim = parse_num(key, value)?,
            "dim" => self.dim = parse_num(key, value)?,
            "feat_dim" => self.feat_dim = parse_num(key, value)?,
            "patch_size" => self.patch_size = parse_num(key, value)?,
            "conv1" => self.channels[0] = parse_num(key, value)?,
            "conv2" => self.channels[1] = parse_num(key, value)?,
            other => return Err(MmmError::InvalidArgument(format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    /// `key = value` lines; `#` starts a comment.
    pub fn apply_config(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| MmmError::InvalidArgument(format!("config line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn to_config(&self) -> String {
        self.entries().iter().fold(String::new(), |mut s, (k, v)| {
            writeln!(s, "{k} = {v}").unwrap();
            s
        })
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("lr", self.lr.to_string()),
            ("epochs", self.epochs.to_string()),
            ("threshold", self.threshold.to_string()),
            ("seed", self.seed.to_string()),
            ("train_cnn", self.train_cnn.to_string()),
            ("emb_dim", self.emb_dim.to_string()),
            ("dim", self.dim.to_string()),
            ("feat_dim", self.feat_dim.to_string()),
            ("patch_size", self.patch_size.to_string()),
            ("conv1", self.channels[0].to_string()),
            ("conv2", self.channels[1].to_string()),
        ]
    }
}

/// Groups Adam must not update.
pub fn frozen_groups(ablation: Ablation, train_cnn: bool) -> Vec<Group> {
    let mut out = Vec::new();
    if !train_cnn || ablation == Ablation::DropElf {
        out.push(Group::Cnn);
    }
    match ablation {
        Ablation::DropElf => out.push(Group::Elf),
        Ablation::DropBipartite => out.push(Group::Bipartite),
        Ablation::None => {}
    }
    out
}

/// Fixed (standardized) features from the seeded CNN, or raw patches when
/// the CNN trains.
pub fn drug_features(config: &ModelConfig, hp: &HyperParams, patches: Vec<PatchSet>) -> Result<DrugFeatures> {
    if hp.train_cnn {
        Ok(DrugFeatures::Patches(patches))
    } else {
        let mut c = featurize(&patches, &init_cnn(config, hp.seed)?)?;
        standardize_columns(&mut c);
        Ok(DrugFeatures::Fixed(c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpochLosses {
    pub n_visits: usize,
    pub bce: f64,
    pub multi: f64,
    pub ddi: f64,
    pub total: f64,
}

/// One pass over `patients`; returns mean per-visit losses.
pub fn train_epoch(
    params: &mut ModelParams,
    adam: &mut Adam,
    ctx: &Context,
    patients: &[&Patient],
    hp: &HyperParams,
) -> Result<EpochLosses> {
    ctx.check(params)?;
    let frozen = frozen_groups(ctx.ablation, ctx.features.trains_cnn());
    let mut grads = params.zeros_like();
    let mut acc = EpochLosses::default();
    for p in patients {
        for t in 0..p.visits.len() {
            grads.zero_grads();
            let parts = visit_loss_and_grad(params, ctx, &p.visits[..=t], hp.alpha, hp.beta, &mut grads)?;
            if !parts.total.is_finite() || !grads.is_finite() {
                return Err(MmmError::Numeric(format!(
                    "non-finite loss at patient {} visit {} (bce {}, multi {}, ddi {})",
                    p.id,
                    t + 1,
                    parts.bce,
                    parts.multi,
                    parts.ddi
                )));
            }
            adam.step(params, &grads, &frozen);
            if !params.is_finite() {
                return Err(MmmError::Numeric(format!(
                    "parameters became non-finite after patient {} visit {}",
                    p.id,
                    t + 1
                )));
            }
            acc.n_visits += 1;
            acc.bce += parts.bce;
            acc.multi += parts.multi;
            acc.ddi += parts.ddi;
            acc.total += parts.total;
        }
    }
    if acc.n_visits > 0 {
        let n = acc.n_visits as f64;
        acc.bce /= n;
        acc.multi /= n;
        acc.ddi /= n;
        acc.total /= n;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub losses: EpochLosses,
    pub val: SplitMetrics,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub best: ModelParams,
    pub best_epoch: usize,
    pub last: ModelParams,
    pub trace: Vec<EpochRecord>,
}

impl FitResult {
    /// Training log with a header row; `seed` is repeated on every row.
    pub fn log_csv(&self, seed: u64) -> String {
        let mut s = String::from("seed,epoch,l_bce,l_multi,l_ddi,l_total,val_ddi_rate,val_jaccard,val_f1,val_avg_drugs\n");
        for r in &self.trace {
            writeln!(
                s,
                "{seed},{},{},{},{},{},{},{},{},{}",
                r.epoch,
                r.losses.bce,
                r.losses.multi,
                r.losses.ddi,
                r.losses.total,
                r.val.ddi_rate,
                r.val.jaccard,
                r.val.f1,
                r.val.avg_drugs
            )
            .unwrap();
        }
        s
    }
}

pub fn evaluate_params(
    params: &ModelParams,
    data: &Dataset,
    features: &DrugFeatures,
    patients: &[&Patient],
    ablation: Ablation,
    threshold: f64,
) -> Result<SplitMetrics> {
    let rec = Recommender::new(params, features, &data.mask, ablation, threshold)?;
    Ok(evaluate_split(&rec, patients, &data.registry, data.ddi.cid_pairs())?.1)
}

/// Trains from a seeded initialization, keeping the epoch with the lowest
/// validation DDI rate (earliest on ties) and the final epoch.
pub fn fit(
    data: &Dataset,
    features: &DrugFeatures,
    split: &SplitSpec,
    hp: &HyperParams,
    ablation: Ablation,
) -> Result<FitResult> {
    fit_with(data, features, split, hp, ablation, |_| {})
}

/// `fit` with a callback after every epoch.
pub fn fit_with(
    data: &Dataset,
    features: &DrugFeatures,
    split: &SplitSpec,
    hp: &HyperParams,
    ablation: Ablation,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitResult> {
    hp.validate()?;
    let config = hp.model_config(&data.corpus.vocab);
    let mut params = ModelParams::init(config, hp.seed)?;
    let ctx = Context {
        features,
        mask: &data.mask,
        ddi: &data.ddi,
        ablation,
    };
    ctx.check(&params)?;
    let train = data.corpus.select(&split.train)?;
    let val = data.corpus.select(&split.val)?;
    let mut adam = Adam::new(&params, hp.lr);
    let mut trace = Vec::with_capacity(hp.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    for epoch in 1..=hp.epochs {
        let losses = train_epoch(&mut params, &mut adam, &ctx, &train, hp)?;
        let val_metrics = evaluate_params(&params, data, features, &val, ablation, hp.threshold)?;
        let rec = EpochRecord {
            epoch,
            losses,
            val: val_metrics,
        };
        on_epoch(&rec);
        trace.push(rec);
        if best.as_ref().is_none_or(|(d, _, _)| val_metrics.ddi_rate < *d) {
            best = Some((val_metrics.ddi_rate, epoch, params.clone()));
        }
    }
    let (_, best_epoch, best) = best.expect("at least one epoch");
    Ok(FitResult {
        best,
        best_epoch,
        last: params,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{stratified_split, synth_dataset, SynthSpec, TargetStats, DEFAULT_RATIOS};
    use crate::tensor::{stream_rng, Tensor};

    pub(crate) fn small_data() -> Dataset {
        let stats = TargetStats {
            n_dx: 40,
            n_px: 20,
            n_drugs: 12,
            n_substructures: 15,
            ddi_pairs: 6,
            max_meds: 6,
            mean_meds: 3.0,
            ..TargetStats::default()
        };
        synth_dataset(&SynthSpec {
            n_patients: 10,
            seed: 3,
            stats,
            elf_grid: None,
        })
        .unwrap()
    }

    fn small_hp() -> HyperParams {
        HyperParams {
            emb_dim: 8,
            dim: 8,
            feat_dim: 6,
            epochs: 2,
            lr: 1e-3,
            ..HyperParams::default()
        }
    }

    fn fixed_features(n: usize, k: usize) -> DrugFeatures {
        DrugFeatures::Fixed(Tensor::uniform(&[n, k], 1.0, &mut stream_rng(8, 0)))
    }

    #[test]
    fn config_round_trip_and_errors() {
        let mut hp = HyperParams::default();
        hp.apply_config("# comment\nalpha = 0.5\n beta=0.25 # inline\nepochs=3\ntrain_cnn=true\n").unwrap();
        assert_eq!((hp.alpha, hp.beta, hp.epochs, hp.train_cnn), (0.5, 0.25, 3, true));
        let mut back = HyperParams::default();
        back.apply_config(&hp.to_config()).unwrap();
        assert_eq!(back, hp);
        assert!(hp.apply_config("gamma = 1").is_err());
        assert!(hp.apply_config("alpha 1").is_err());
        hp.alpha = 1.5;
        assert!(hp.validate().is_err());
    }

    #[test]
    fn frozen_sets() {
        assert_eq!(frozen_groups(Ablation::None, false), vec![Group::Cnn]);
        assert!(frozen_groups(Ablation::None, true).is_empty());
        assert_eq!(frozen_groups(Ablation::DropElf, true), vec![Group::Cnn, Group::Elf]);
        assert_eq!(frozen_groups(Ablation::DropBipartite, true), vec![Group::Bipartite]);
    }

    #[test]
    fn empty_epoch_leaves_params_unchanged() {
        let data = small_data();
        let hp = small_hp();
        let mut params = ModelParams::init(hp.model_config(&data.corpus.vocab), 1).unwrap();
        let before = params.clone();
        let features = fixed_features(12, 6);
        let ctx = Context {
            features: &features,
            mask: &data.mask,
            ddi: &data.ddi,
            ablation: Ablation::None,
        };
        let mut adam = Adam::new(&params, hp.lr);
        let l = train_epoch(&mut params, &mut adam, &ctx, &[], &hp).unwrap();
        assert_eq!(l.n_visits, 0);
        assert_eq!(params, before);
    }

    #[test]
    fn one_epoch_changes_params_with_finite_loss() {
        let data = small_data();
        let hp = small_hp();
        let mut params = ModelParams::init(hp.model_config(&data.corpus.vocab), 1).unwrap();
        let before = params.checksum();
        let features = fixed_features(12, 6);
        let ctx = Context {
            features: &features,
            mask: &data.mask,
            ddi: &data.ddi,
            ablation: Ablation::None,
        };
        let patients: Vec<&Patient> = data.corpus.patients.iter().collect();
        let mut adam = Adam::new(&params, hp.lr);
        let l = train_epoch(&mut params, &mut adam, &ctx, &patients, &hp).unwrap();
        assert!(l.total.is_finite() && l.n_visits == data.corpus.n_visits());
        assert_ne!(params.checksum(), before);
    }

    #[test]
    fn nan_aborts_naming_the_visit() {
        let data = small_data();
        let hp = small_hp();
        let mut params = ModelParams::init(hp.model_config(&data.corpus.vocab), 1).unwrap();
        params.bipartite.bs.data_mut()[0] = f64::NAN;
        let features = fixed_features(12, 6);
        let ctx = Context {
            features: &features,
            mask: &data.mask,
            ddi: &data.ddi,
            ablation: Ablation::None,
        };
        let patients: Vec<&Patient> = data.corpus.patients.iter().collect();
        let mut adam = Adam::new(&params, hp.lr);
        let err = train_epoch(&mut params, &mut adam, &ctx, &patients, &hp).unwrap_err();
        let first = patients[0].id;
        assert!(matches!(&err, MmmError::Numeric(m) if m.contains(&format!("patient {first} visit 1"))), "{err}");
    }

    #[test]
    fn fit_is_deterministic_and_best_is_minimal() {
        let data = small_data();
        let hp = HyperParams { epochs: 4, ..small_hp() };
        let split = stratified_split(&data.corpus, DEFAULT_RATIOS, 1).unwrap();
        let features = fixed_features(12, 6);
        let a = fit(&data, &features, &split, &hp, Ablation::None).unwrap();
        let b = fit(&data, &features, &split, &hp, Ablation::None).unwrap();
        assert_eq!(a.last, b.last);
        assert_eq!(a.log_csv(1), b.log_csv(1));
        let best = a.trace[a.best_epoch - 1].val.ddi_rate;
        assert!(a.trace.iter().all(|r| best <= r.val.ddi_rate));
        let first_min = a.trace.iter().position(|r| r.val.ddi_rate == best).unwrap() + 1;
        assert_eq!(a.best_epoch, first_min);

        let one = fit(&data, &features, &split, &HyperParams { epochs: 1, ..hp }, Ablation::None).unwrap();
        assert_eq!(one.best_epoch, 1);
        assert_eq!(one.best, one.last);
    }

    #[test]
    fn drop_elf_keeps_drug_side_at_init() {
        let data = small_data();
        let hp = HyperParams { train_cnn: true, patch_size: 4, ..small_hp() };
        let split = stratified_split(&data.corpus, DEFAULT_RATIOS, 1).unwrap();
        let features = fixed_features(12, 6);
        let r = fit(&data, &features, &split, &hp, Ablation::DropElf).unwrap();
        let init = ModelParams::init(hp.model_config(&data.corpus.vocab), hp.seed).unwrap();
        let g = [Group::Cnn, Group::Elf];
        assert_eq!(r.last.group_checksum(&g), init.group_checksum(&g));
        assert_ne!(r.last.checksum(), init.checksum());
    }
}
