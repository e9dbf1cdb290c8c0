//! Full parameter set, the per-visit forward/backward pass, and inference.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bipartite::{bipartite_backward, local_drug_vector, substructure_importance, BipartiteParams};
use crate::corpus::{DdiMatrix, MaskMatrix, Visit, VocabSizes};
use crate::drug::{
    encode_drug, encode_drug_backward, global_backward, global_drug_vector, project, project_backward, CnnParams,
    DrugEncoding, ElfHeadParams, GlobalTrace, Projection,
};
use crate::elf::{PatchSet, DEFAULT_PATCH_SIZE};
use crate::error::{MmmError, Result};
use crate::objective::{predict, total_loss, LossParts, Prediction};
use crate::patient::{encode_patient_prefixes, encode_patient_traced, patient_backward, PatientEncoderParams};
use crate::tensor::{stream_rng, Tensor};

const STREAM_PATIENT: u64 = 0x10;
const STREAM_CNN: u64 = 0x11;
const STREAM_ELF: u64 = 0x12;
const STREAM_BIPARTITE: u64 = 0x13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_dx: usize,
    pub n_px: usize,
    pub n_drugs: usize,
    pub n_substructures: usize,
    pub emb_dim: usize,
    pub dim: usize,
    pub feat_dim: usize,
    pub patch_size: usize,
    pub channels: [usize; 2],
}

impl ModelConfig {
    pub fn for_vocab(v: &VocabSizes) -> Self {
        Self {
            n_dx: v.n_dx,
            n_px: v.n_px,
            n_drugs: v.n_drugs,
            n_substructures: v.n_substructures,
            emb_dim: 64,
            dim: 64,
            feat_dim: 128,
            patch_size: DEFAULT_PATCH_SIZE,
            channels: [4, 8],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("n_dx", self.n_dx),
            ("n_px", self.n_px),
            ("emb_dim", self.emb_dim),
            ("dim", self.dim),
            ("feat_dim", self.feat_dim),
            ("channels[0]", self.channels[0]),
            ("channels[1]", self.channels[1]),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(MmmError::InvalidArgument(format!("{name} must be positive")));
        }
        if self.n_drugs < 2 {
            return Err(MmmError::InvalidArgument("need at least 2 drugs".into()));
        }
        if self.patch_size < 4 {
            return Err(MmmError::InvalidArgument("patch_size must be at least 4".into()));
        }
        Ok(())
    }
}

/// Which fused vector, if any, is replaced by ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ablation {
    #[default]
    None,
    DropElf,
    DropBipartite,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::None, Ablation::DropElf, Ablation::DropBipartite];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::DropElf => "drop-elf",
            Ablation::DropBipartite => "drop-bipartite",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Ablation::None => "full",
            Ablation::DropElf => "w/o ELF",
            Ablation::DropBipartite => "w/o bipartite",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = MmmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "full" => Ok(Ablation::None),
            "elf" | "drop-elf" => Ok(Ablation::DropElf),
            "bipartite" | "drop-bipartite" => Ok(Ablation::DropBipartite),
            other => Err(MmmError::InvalidArgument(format!(
                "unknown ablation {other:?}; expected none, elf or bipartite"
            ))),
        }
    }
}

/// Parameter groups, used for naming and freezing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Patient,
    Cnn,
    Elf,
    Bipartite,
}

impl Group {
    pub fn prefix(self) -> &'static str {
        match self {
            Group::Patient => "patient",
            Group::Cnn => "cnn",
            Group::Elf => "elf",
            Group::Bipartite => "bipartite",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub patient: PatientEncoderParams,
    pub cnn: CnnParams,
    pub elf: ElfHeadParams,
    pub bipartite: BipartiteParams,
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = config;
        Ok(Self {
            config,
            patient: PatientEncoderParams::zeros(c.n_dx, c.n_px, c.emb_dim, c.dim),
            cnn: CnnParams::zeros(c.patch_size, c.channels, c.feat_dim)?,
            elf: ElfHeadParams::zeros(c.feat_dim, c.dim, c.n_drugs),
            bipartite: BipartiteParams::zeros(c.dim, c.n_drugs, c.n_substructures),
        })
    }

    /// Each group draws from its own stream of `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = config;
        Ok(Self {
            config,
            patient: PatientEncoderParams::init(c.n_dx, c.n_px, c.emb_dim, c.dim, &mut stream_rng(seed, STREAM_PATIENT)),
            cnn: init_cnn(&config, seed)?,
            elf: ElfHeadParams::init(c.feat_dim, c.dim, c.n_drugs, &mut stream_rng(seed, STREAM_ELF)),
            bipartite: BipartiteParams::init(c.dim, c.n_drugs, c.n_substructures, &mut stream_rng(seed, STREAM_BIPARTITE)),
        })
    }

    /// Same shapes, every entry 0 (a gradient buffer).
    pub fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(self.config).expect("config already validated");
        z.zero_grads();
        z
    }

    pub fn blocks(&self) -> Vec<(String, Group, &Tensor)> {
        let mut out = Vec::new();
        let groups: [(Group, Vec<(String, &Tensor)>); 4] = [
            (Group::Patient, self.patient.blocks()),
            (Group::Cnn, self.cnn.blocks()),
            (Group::Elf, self.elf.blocks()),
            (Group::Bipartite, self.bipartite.blocks()),
        ];
        for (g, blocks) in groups {
            for (name, t) in blocks {
                out.push((format!("{}.{name}", g.prefix()), g, t));
            }
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, Group, &mut Tensor)> {
        let mut out = Vec::new();
        let groups: [(Group, Vec<(String, &mut Tensor)>); 4] = [
            (Group::Patient, self.patient.blocks_mut()),
            (Group::Cnn, self.cnn.blocks_mut()),
            (Group::Elf, self.elf.blocks_mut()),
            (Group::Bipartite, self.bipartite.blocks_mut()),
        ];
        for (g, blocks) in groups {
            for (name, t) in blocks {
                out.push((format!("{}.{name}", g.prefix()), g, t));
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, _, t)| t.is_finite())
    }

    /// Checksum over the blocks of the given groups, in block order.
    pub fn group_checksum(&self, groups: &[Group]) -> u64 {
        let mut fnv = crate::tensor::Fnv::new();
        for (name, g, t) in self.blocks() {
            if groups.contains(&g) {
                fnv.write(name.as_bytes());
                fnv.write(&t.checksum().to_le_bytes());
            }
        }
        fnv.finish()
    }

    pub fn checksum(&self) -> u64 {
        self.group_checksum(&[Group::Patient, Group::Cnn, Group::Elf, Group::Bipartite])
    }

    pub fn zero_grads(&mut self) {
        for (_, _, t) in self.blocks_mut() {
            t.fill(0.0);
        }
    }
}

/// The CNN initialization for `seed`; `featurize` and training agree on it.
pub fn init_cnn(config: &ModelConfig, seed: u64) -> Result<CnnParams> {
    CnnParams::init(config.patch_size, config.channels, config.feat_dim, &mut stream_rng(seed, STREAM_CNN))
}

/// Pooled CNN features for every drug, `[|M|, feat_dim]`.
pub fn featurize(patches: &[PatchSet], cnn: &CnnParams) -> Result<Tensor> {
    let mut c = Tensor::zeros(&[patches.len(), cnn.feat_dim()]);
    for (i, set) in patches.iter().enumerate() {
        if set.drug_id != i {
            return Err(MmmError::Validation(format!(
                "patch set {i} belongs to drug {}",
                set.drug_id
            )));
        }
        c.row_mut(i).copy_from_slice(&encode_drug(set, cnn)?.features);
    }
    Ok(c)
}

/// Zero mean, unit variance per column across drugs; constant columns become 0.
pub fn standardize_columns(t: &mut Tensor) {
    let (rows, cols) = (t.rows(), t.cols());
    if rows == 0 {
        return;
    }
    for j in 0..cols {
        let mean = (0..rows).map(|i| t.row(i)[j]).sum::<f64>() / rows as f64;
        let var = (0..rows).map(|i| (t.row(i)[j] - mean).powi(2)).sum::<f64>() / rows as f64;
        let inv = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
        for i in 0..rows {
            let v = &mut t.row_mut(i)[j];
            *v = (*v - mean) * inv;
        }
    }
}

/// Drug-side inputs: either fixed features (CNN frozen) or raw patches
/// (CNN trained end to end).
#[derive(Debug, Clone)]
pub enum DrugFeatures {
    Fixed(Tensor),
    Patches(Vec<PatchSet>),
}

impl DrugFeatures {
    pub fn n_drugs(&self) -> usize {
        match self {
            DrugFeatures::Fixed(t) => t.rows(),
            DrugFeatures::Patches(p) => p.len(),
        }
    }

    pub fn trains_cnn(&self) -> bool {
        matches!(self, DrugFeatures::Patches(_))
    }

    fn resolve(&self, cnn: &CnnParams) -> Result<(Tensor, Option<Vec<DrugEncoding>>)> {
        match self {
            DrugFeatures::Fixed(t) => Ok((t.clone(), None)),
            DrugFeatures::Patches(sets) => {
                let encs = sets.iter().map(|s| encode_drug(s, cnn)).collect::<Result<Vec<_>>>()?;
                let mut c = Tensor::zeros(&[sets.len(), cnn.feat_dim()]);
                for (i, e) in encs.iter().enumerate() {
                    c.row_mut(i).copy_from_slice(&e.features);
                }
                Ok((c, Some(encs)))
            }
        }
    }
}

/// Everything a forward pass needs besides the parameters.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub features: &'a DrugFeatures,
    pub mask: &'a MaskMatrix,
    pub ddi: &'a DdiMatrix,
    pub ablation: Ablation,
}

impl Context<'_> {
    pub fn check(&self, params: &ModelParams) -> Result<()> {
        let c = &params.config;
        if self.features.n_drugs() != c.n_drugs || self.mask.n_drugs() != c.n_drugs || self.ddi.n_drugs() != c.n_drugs {
            return Err(MmmError::Shape(format!(
                "model has {} drugs; features {}, mask {}, DDI {}",
                c.n_drugs,
                self.features.n_drugs(),
                self.mask.n_drugs(),
                self.ddi.n_drugs()
            )));
        }
        if self.mask.n_substructures() != c.n_substructures {
            return Err(MmmError::Shape(format!(
                "model has {} substructures, mask {}",
                c.n_substructures,
                self.mask.n_substructures()
            )));
        }
        if let DrugFeatures::Fixed(t) = self.features {
            if t.cols() != c.feat_dim {
                return Err(MmmError::Shape(format!(
                    "drug features have {} columns, model expects {}",
                    t.cols(),
                    c.feat_dim
                )));
            }
        }
        Ok(())
    }
}

/// Loss of visit `history.last()` given the whole history, with gradients
/// accumulated into `grads`.
pub fn visit_loss_and_grad(
    params: &ModelParams,
    ctx: &Context,
    history: &[Visit],
    alpha: f64,
    beta: f64,
    grads: &mut ModelParams,
) -> Result<LossParts> {
    let truth = &history
        .last()
        .ok_or_else(|| MmmError::InvalidArgument("empty visit history".into()))?
        .medications;
    let ptrace = encode_patient_traced(history, &params.patient)?;
    let h = &ptrace.state.h;
    let m = params.config.n_drugs;

    let mut elf_state: Option<(Tensor, Option<Vec<DrugEncoding>>, Projection, GlobalTrace)> = None;
    let m_g = if ctx.ablation == Ablation::DropElf {
        vec![1.0; m]
    } else {
        let (c, encs) = ctx.features.resolve(&params.cnn)?;
        let proj = project(&c, &params.elf)?;
        let g = global_drug_vector(h, &proj.y, &params.elf)?;
        let m_g = g.m_g.clone();
        elf_state = Some((c, encs, proj, g));
        m_g
    };
    let mut m_s = None;
    let m_l = if ctx.ablation == Ablation::DropBipartite {
        vec![1.0; m]
    } else {
        let s = substructure_importance(h, &params.bipartite)?;
        let l = local_drug_vector(&s, &params.bipartite.w3, ctx.mask, params.bipartite.b3.data())?;
        m_s = Some(s);
        l
    };
    let pred = predict(&m_g, &m_l, 0.5)?;
    let (parts, d_o) = total_loss(&pred.o_hat, truth, ctx.ddi, alpha, beta)?;

    // ô = σ(z), z = m_g ⊙ m_l
    let dz: Vec<f64> = d_o.iter().zip(&pred.o_hat).map(|(g, o)| g * o * (1.0 - o)).collect();
    let mut dh = vec![0.0; h.len()];
    if let Some((c, encs, proj, g)) = &elf_state {
        let dm_g: Vec<f64> = dz.iter().zip(&m_l).map(|(d, l)| d * l).collect();
        let (dy, dh_g) = global_backward(h, &proj.y, &params.elf, g, &dm_g, &mut grads.elf);
        crate::tensor::add_assign(&mut dh, &dh_g);
        let dc = project_backward(c, &params.elf, proj, &dy, &mut grads.elf);
        if let (Some(encs), DrugFeatures::Patches(sets)) = (encs, ctx.features) {
            for (i, (set, enc)) in sets.iter().zip(encs).enumerate() {
                encode_drug_backward(set, &params.cnn, enc, dc.row(i), &mut grads.cnn);
            }
        }
    }
    if let Some(s) = &m_s {
        let dm_l: Vec<f64> = dz.iter().zip(&m_g).map(|(d, g)| d * g).collect();
        let dh_l = bipartite_backward(h, s, &params.bipartite, ctx.mask, &dm_l, &mut grads.bipartite);
        crate::tensor::add_assign(&mut dh, &dh_l);
    }
    patient_backward(&params.patient, &ptrace, &dh, &mut grads.patient);
    Ok(parts)
}

/// Loss only; used by finite-difference checks.
pub fn visit_loss(params: &ModelParams, ctx: &Context, history: &[Visit], alpha: f64, beta: f64) -> Result<LossParts> {
    let mut scratch = params.zeros_like();
    visit_loss_and_grad(params, ctx, history, alpha, beta, &mut scratch)
}

/// Anything that turns a visit history into one prediction per visit.
pub trait Predictor {
    fn n_drugs(&self) -> usize;
    /// Prediction for each prefix `visits[..=t]`.
    fn predict_patient(&self, visits: &[Visit]) -> Result<Vec<Prediction>>;
}

/// Inference wrapper with the drug embeddings computed once.
#[derive(Debug, Clone)]
pub struct Recommender<'a> {
    params: &'a ModelParams,
    mask: &'a MaskMatrix,
    y: Option<Tensor>,
    ablation: Ablation,
    threshold: f64,
}

impl<'a> Recommender<'a> {
    pub fn new(
        params: &'a ModelParams,
        features: &DrugFeatures,
        mask: &'a MaskMatrix,
        ablation: Ablation,
        threshold: f64,
    ) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(MmmError::InvalidArgument(format!("threshold must lie in (0, 1), got {threshold}")));
        }
        let y = if ablation == Ablation::DropElf {
            None
        } else {
            let (c, _) = features.resolve(&params.cnn)?;
            Some(project(&c, &params.elf)?.y)
        };
        Ok(Self {
            params,
            mask,
            y,
            ablation,
            threshold,
        })
    }

    pub fn predict_state(&self, h: &[f64]) -> Result<Prediction> {
        let m = self.params.config.n_drugs;
        let m_g = match &self.y {
            Some(y) => global_drug_vector(h, y, &self.params.elf)?.m_g,
            None => vec![1.0; m],
        };
        let m_l = if self.ablation == Ablation::DropBipartite {
            vec![1.0; m]
        } else {
            let b = &self.params.bipartite;
            let s = substructure_importance(h, b)?;
            local_drug_vector(&s, &b.w3, self.mask, b.b3.data())?
        };
        predict(&m_g, &m_l, self.threshold)
    }
}

impl Predictor for Recommender<'_> {
    fn n_drugs(&self) -> usize {
        self.params.config.n_drugs
    }

    fn predict_patient(&self, visits: &[Visit]) -> Result<Vec<Prediction>> {
        encode_patient_prefixes(visits, &self.params.patient)?
            .iter()
            .map(|s| self.predict_state(&s.h))
            .collect()
    }
}
