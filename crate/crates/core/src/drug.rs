//! ELF drug encoder: a small CNN over ELF patches with feature-wise max
//! pooling across patches, an MLP projection to the patient dimension, and
//! the residual + layer-norm head that turns patient–drug affinities into
//! the global drug vector.

use rand::Rng;

use crate::elf::PatchSet;
use crate::error::{MmmError, Result};
use crate::tensor::{add_assign, add_matvec_t, add_outer, affine, dot, sigmoid, Tensor};

/// Variance guard for layer normalization.
pub const LN_EPS: f64 = 1e-5;

/// Two 3×3 conv layers (stride 1, zero padding 1, ReLU, 2×2 max pool) and an
/// affine head to `feat_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams {
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    pub head_w: Tensor,
    pub head_b: Tensor,
    patch_size: usize,
}

fn pooled(p: usize) -> usize {
    (p / 2) / 2
}

impl CnnParams {
    pub fn zeros(patch_size: usize, channels: [usize; 2], feat_dim: usize) -> Result<Self> {
        if patch_size < 4 {
            return Err(MmmError::InvalidArgument(format!(
                "CNN needs patches of at least 4×4, got {patch_size}"
            )));
        }
        let [c1, c2] = channels;
        let q = pooled(patch_size);
        Ok(Self {
            conv1_w: Tensor::zeros(&[c1, 1, 3, 3]),
            conv1_b: Tensor::zeros(&[c1]),
            conv2_w: Tensor::zeros(&[c2, c1, 3, 3]),
            conv2_b: Tensor::zeros(&[c2]),
            head_w: Tensor::zeros(&[feat_dim, c2 * q * q]),
            head_b: Tensor::zeros(&[feat_dim]),
            patch_size,
        })
    }

    pub fn init(patch_size: usize, channels: [usize; 2], feat_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut p = Self::zeros(patch_size, channels, feat_dim)?;
        let [c1, c2] = channels;
        let k1 = 1.0 / 3.0;
        let k2 = 1.0 / ((9 * c1) as f64).sqrt();
        let k3 = 1.0 / (p.head_w.cols() as f64).sqrt();
        p.conv1_w = Tensor::uniform(&[c1, 1, 3, 3], k1, rng);
        p.conv1_b = Tensor::uniform(&[c1], k1, rng);
        p.conv2_w = Tensor::uniform(&[c2, c1, 3, 3], k2, rng);
        p.conv2_b = Tensor::uniform(&[c2], k2, rng);
        p.head_w = Tensor::uniform(&[feat_dim, c2 * pooled(patch_size).pow(2)], k3, rng);
        p.head_b = Tensor::uniform(&[feat_dim], k3, rng);
        Ok(p)
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn feat_dim(&self) -> usize {
        self.head_b.len()
    }

    fn channels(&self) -> (usize, usize) {
        (self.conv1_b.len(), self.conv2_b.len())
    }

    pub fn blocks(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("conv1_w".into(), &self.conv1_w),
            ("conv1_b".into(), &self.conv1_b),
            ("conv2_w".into(), &self.conv2_w),
            ("conv2_b".into(), &self.conv2_b),
            ("head_w".into(), &self.head_w),
            ("head_b".into(), &self.head_b),
        ]
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("conv1_w".into(), &mut self.conv1_w),
            ("conv1_b".into(), &mut self.conv1_b),
            ("conv2_w".into(), &mut self.conv2_w),
            ("conv2_b".into(), &mut self.conv2_b),
            ("head_w".into(), &mut self.head_w),
            ("head_b".into(), &mut self.head_b),
        ]
    }
}

fn conv3x3(input: &[f64], cin: usize, h: usize, w: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let cout = bias.len();
    let mut out = vec![0.0; cout * h * w];
    for o in 0..cout {
        let plane = &mut out[o * h * w..(o + 1) * h * w];
        plane.fill(bias[o]);
        for i in 0..cin {
            let src = &input[i * h * w..(i + 1) * h * w];
            let k = &weight[(o * cin + i) * 9..(o * cin + i) * 9 + 9];
            for ky in 0..3 {
                for kx in 0..3 {
                    let kv = k[ky * 3 + kx];
                    if kv == 0.0 {
                        continue;
                    }
                    // output (y, x) reads input (y + ky - 1, x + kx - 1)
                    let y0 = if ky == 0 { 1 } else { 0 };
                    let y1 = if ky == 2 { h - 1 } else { h };
                    let x0 = if kx == 0 { 1 } else { 0 };
                    let x1 = if kx == 2 { w - 1 } else { w };
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let orow = &mut plane[y * w..(y + 1) * w];
                        let srow = &src[sy * w..(sy + 1) * w];
                        for x in x0..x1 {
                            orow[x] += kv * srow[x + kx - 1];
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv3x3_backward(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    dout: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    let cout = dbias.len();
    for o in 0..cout {
        let g = &dout[o * h * w..(o + 1) * h * w];
        dbias[o] += g.iter().sum::<f64>();
        for i in 0..cin {
            let src = &input[i * h * w..(i + 1) * h * w];
            let kidx = (o * cin + i) * 9;
            for ky in 0..3 {
                for kx in 0..3 {
                    let y0 = if ky == 0 { 1 } else { 0 };
                    let y1 = if ky == 2 { h - 1 } else { h };
                    let x0 = if kx == 0 { 1 } else { 0 };
                    let x1 = if kx == 2 { w - 1 } else { w };
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        for x in x0..x1 {
                            acc += g[y * w + x] * src[sy * w + x + kx - 1];
                        }
                    }
                    dweight[kidx + ky * 3 + kx] += acc;
                    if let Some(din) = dinput.as_deref_mut() {
                        let kv = weight[kidx + ky * 3 + kx];
                        let dplane = &mut din[i * h * w..(i + 1) * h * w];
                        for y in y0..y1 {
                            let sy = y + ky - 1;
                            for x in x0..x1 {
                                dplane[sy * w + x + kx - 1] += kv * g[y * w + x];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2×2 max pool (floor); returns pooled values and the flat argmax into `input`.
fn maxpool2(input: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (ph, pw) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * ph * pw);
    let mut arg = Vec::with_capacity(c * ph * pw);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..ph {
            for x in 0..pw {
                let mut best = base + 2 * y * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * y + dy) * w + 2 * x + dx;
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                out.push(input[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

struct CnnTrace {
    a1: Vec<f64>,
    pool1: Vec<f64>,
    arg1: Vec<usize>,
    a2: Vec<f64>,
    arg2: Vec<usize>,
    flat: Vec<f64>,
}

fn relu_inplace(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

fn cnn_traced(cnn: &CnnParams, patch: &[f64]) -> (Vec<f64>, CnnTrace) {
    let p = cnn.patch_size;
    let (c1, c2) = cnn.channels();
    let mut a1 = conv3x3(patch, 1, p, p, cnn.conv1_w.data(), cnn.conv1_b.data());
    relu_inplace(&mut a1);
    let (pool1, arg1) = maxpool2(&a1, c1, p, p);
    let h2 = p / 2;
    let mut a2 = conv3x3(&pool1, c1, h2, h2, cnn.conv2_w.data(), cnn.conv2_b.data());
    relu_inplace(&mut a2);
    let (flat, arg2) = maxpool2(&a2, c2, h2, h2);
    let mut out = vec![0.0; cnn.feat_dim()];
    affine(cnn.head_w.data(), cnn.head_b.data(), &flat, &mut out);
    (
        out,
        CnnTrace {
            a1,
            pool1,
            arg1,
            a2,
            arg2,
            flat,
        },
    )
}

/// Feature vector of one `p × p` patch.
pub fn cnn_forward(cnn: &CnnParams, patch: &[f64]) -> Result<Vec<f64>> {
    let p = cnn.patch_size;
    if patch.len() != p * p {
        return Err(MmmError::Shape(format!(
            "CNN expects {p}×{p} patches, got {} values",
            patch.len()
        )));
    }
    Ok(cnn_traced(cnn, patch).0)
}

fn cnn_backward(cnn: &CnnParams, patch: &[f64], tr: &CnnTrace, dout: &[f64], grads: &mut CnnParams) {
    let p = cnn.patch_size;
    let (c1, c2) = cnn.channels();
    let h2 = p / 2;
    add_outer(grads.head_w.data_mut(), dout, &tr.flat);
    add_assign(grads.head_b.data_mut(), dout);
    let mut dflat = vec![0.0; tr.flat.len()];
    add_matvec_t(cnn.head_w.data(), dout, &mut dflat);
    let mut da2 = vec![0.0; c2 * h2 * h2];
    for (g, &i) in dflat.iter().zip(&tr.arg2) {
        if tr.a2[i] > 0.0 {
            da2[i] += g;
        }
    }
    let mut dpool1 = vec![0.0; tr.pool1.len()];
    conv3x3_backward(
        &tr.pool1,
        c1,
        h2,
        h2,
        cnn.conv2_w.data(),
        &da2,
        grads.conv2_w.data_mut(),
        grads.conv2_b.data_mut(),
        Some(&mut dpool1),
    );
    let mut da1 = vec![0.0; c1 * p * p];
    for (g, &i) in dpool1.iter().zip(&tr.arg1) {
        if tr.a1[i] > 0.0 {
            da1[i] += g;
        }
    }
    conv3x3_backward(
        patch,
        1,
        p,
        p,
        cnn.conv1_w.data(),
        &da1,
        grads.conv1_w.data_mut(),
        grads.conv1_b.data_mut(),
        None,
    );
}

/// Pooled drug feature `C_i` and, per feature, the index of the winning patch.
#[derive(Debug, Clone, PartialEq)]
pub struct DrugEncoding {
    pub features: Vec<f64>,
    pub argmax: Vec<usize>,
}

/// `C_i[k] = max_j CNN(I_i^(j))[k]`.
pub fn encode_drug(patches: &PatchSet, cnn: &CnnParams) -> Result<DrugEncoding> {
    if patches.is_empty() {
        return Err(MmmError::InvalidArgument(format!(
            "drug {} has no patches",
            patches.drug_id
        )));
    }
    if patches.patch_size != cnn.patch_size {
        return Err(MmmError::Shape(format!(
            "patch size {} does not match CNN input {}",
            patches.patch_size, cnn.patch_size
        )));
    }
    let mut features = vec![f64::NEG_INFINITY; cnn.feat_dim()];
    let mut argmax = vec![0; cnn.feat_dim()];
    for (j, patch) in patches.patches.iter().enumerate() {
        let out = cnn_forward(cnn, &patch.values)?;
        for k in 0..out.len() {
            if out[k] > features[k] {
                features[k] = out[k];
                argmax[k] = j;
            }
        }
    }
    Ok(DrugEncoding { features, argmax })
}

/// Routes `d_features` to the winning patches and backpropagates through the CNN.
pub fn encode_drug_backward(
    patches: &PatchSet,
    cnn: &CnnParams,
    enc: &DrugEncoding,
    d_features: &[f64],
    grads: &mut CnnParams,
) {
    let mut winners: Vec<usize> = enc.argmax.clone();
    winners.sort_unstable();
    winners.dedup();
    for j in winners {
        let dout: Vec<f64> = (0..d_features.len())
            .map(|k| if enc.argmax[k] == j { d_features[k] } else { 0.0 })
            .collect();
        if dout.iter().all(|&g| g == 0.0) {
            continue;
        }
        let patch = &patches.patches[j].values;
        let (_, tr) = cnn_traced(cnn, patch);
        cnn_backward(cnn, patch, &tr, &dout, grads);
    }
}

/// MLP projection plus the residual/LN head producing the global drug vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ElfHeadParams {
    pub mlp_w1: Tensor,
    pub mlp_b1: Tensor,
    pub mlp_w2: Tensor,
    pub mlp_b2: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub ln_gain: Tensor,
    pub ln_bias: Tensor,
}

impl ElfHeadParams {
    pub fn zeros(feat_dim: usize, dim: usize, n_drugs: usize) -> Self {
        Self {
            mlp_w1: Tensor::zeros(&[dim, feat_dim]),
            mlp_b1: Tensor::zeros(&[dim]),
            mlp_w2: Tensor::zeros(&[dim, dim]),
            mlp_b2: Tensor::zeros(&[dim]),
            w2: Tensor::zeros(&[n_drugs, n_drugs]),
            b2: Tensor::zeros(&[n_drugs]),
            ln_gain: Tensor::filled(&[n_drugs], 1.0),
            ln_bias: Tensor::zeros(&[n_drugs]),
        }
    }

    pub fn init(feat_dim: usize, dim: usize, n_drugs: usize, rng: &mut impl Rng) -> Self {
        let kf = 1.0 / (feat_dim as f64).sqrt();
        let kd = 1.0 / (dim as f64).sqrt();
        let km = 1.0 / (n_drugs as f64).sqrt();
        Self {
            mlp_w1: Tensor::uniform(&[dim, feat_dim], kf, rng),
            mlp_b1: Tensor::uniform(&[dim], kf, rng),
            mlp_w2: Tensor::uniform(&[dim, dim], kd, rng),
            mlp_b2: Tensor::uniform(&[dim], kd, rng),
            w2: Tensor::uniform(&[n_drugs, n_drugs], km, rng),
            b2: Tensor::uniform(&[n_drugs], km, rng),
            ln_gain: Tensor::filled(&[n_drugs], 1.0),
            ln_bias: Tensor::zeros(&[n_drugs]),
        }
    }

    pub fn dim(&self) -> usize {
        self.mlp_b2.len()
    }

    pub fn n_drugs(&self) -> usize {
        self.b2.len()
    }

    pub fn blocks(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("mlp_w1".into(), &self.mlp_w1),
            ("mlp_b1".into(), &self.mlp_b1),
            ("mlp_w2".into(), &self.mlp_w2),
            ("mlp_b2".into(), &self.mlp_b2),
            ("w2".into(), &self.w2),
            ("b2".into(), &self.b2),
            ("ln_gain".into(), &self.ln_gain),
            ("ln_bias".into(), &self.ln_bias),
        ]
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("mlp_w1".into(), &mut self.mlp_w1),
            ("mlp_b1".into(), &mut self.mlp_b1),
            ("mlp_w2".into(), &mut self.mlp_w2),
            ("mlp_b2".into(), &mut self.mlp_b2),
            ("w2".into(), &mut self.w2),
            ("b2".into(), &mut self.b2),
            ("ln_gain".into(), &mut self.ln_gain),
            ("ln_bias".into(), &mut self.ln_bias),
        ]
    }
}

/// Drug embeddings `Y = MLP(C)` with the hidden activations kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub hidden: Tensor,
    pub y: Tensor,
}

/// Row-wise `Y = W₂·ReLU(W₁c + b₁) + b₂`.
pub fn project(c: &Tensor, head: &ElfHeadParams) -> Result<Projection> {
    let feat = head.mlp_w1.cols();
    if c.cols() != feat {
        return Err(MmmError::Shape(format!(
            "drug features have {} columns, MLP expects {feat}",
            c.cols()
        )));
    }
    let m = c.rows();
    let d = head.dim();
    let mut hidden = Tensor::zeros(&[m, d]);
    let mut y = Tensor::zeros(&[m, d]);
    for i in 0..m {
        let hrow = hidden.row_mut(i);
        affine(head.mlp_w1.data(), head.mlp_b1.data(), c.row(i), hrow);
        relu_inplace(hrow);
        let hrow = hidden.row(i).to_vec();
        affine(head.mlp_w2.data(), head.mlp_b2.data(), &hrow, y.row_mut(i));
    }
    Ok(Projection { hidden, y })
}

/// Returns `dC`.
pub fn project_backward(c: &Tensor, head: &ElfHeadParams, proj: &Projection, dy: &Tensor, grads: &mut ElfHeadParams) -> Tensor {
    let m = c.rows();
    let mut dc = Tensor::zeros(&[m, c.cols()]);
    let mut dhid = vec![0.0; head.dim()];
    for i in 0..m {
        let g = dy.row(i);
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        add_outer(grads.mlp_w2.data_mut(), g, proj.hidden.row(i));
        add_assign(grads.mlp_b2.data_mut(), g);
        dhid.fill(0.0);
        add_matvec_t(head.mlp_w2.data(), g, &mut dhid);
        for (dh, &hv) in dhid.iter_mut().zip(proj.hidden.row(i)) {
            if hv <= 0.0 {
                *dh = 0.0;
            }
        }
        add_outer(grads.mlp_w1.data_mut(), &dhid, c.row(i));
        add_assign(grads.mlp_b1.data_mut(), &dhid);
        add_matvec_t(head.mlp_w1.data(), &dhid, dc.row_mut(i));
    }
    dc
}

/// Activations of the global-vector head for one patient state.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalTrace {
    pub m_a: Vec<f64>,
    pre_ff: Vec<f64>,
    normalized: Vec<f64>,
    inv_std: f64,
    pub m_g: Vec<f64>,
}

/// `m_a = σ(Y h)`, `m_g = LN(m_a + ReLU(W₂ m_a + b₂))`.
pub fn global_drug_vector(h: &[f64], y: &Tensor, head: &ElfHeadParams) -> Result<GlobalTrace> {
    if y.cols() != h.len() {
        return Err(MmmError::Shape(format!(
            "patient state has length {}, drug embeddings {}",
            h.len(),
            y.cols()
        )));
    }
    let m = y.rows();
    if head.n_drugs() != m {
        return Err(MmmError::Shape(format!(
            "head sized for {} drugs, embeddings have {m}",
            head.n_drugs()
        )));
    }
    let m_a: Vec<f64> = (0..m).map(|i| sigmoid(dot(y.row(i), h))).collect();
    let mut pre_ff = vec![0.0; m];
    affine(head.w2.data(), head.b2.data(), &m_a, &mut pre_ff);
    let s: Vec<f64> = m_a.iter().zip(&pre_ff).map(|(&a, &f)| a + f.max(0.0)).collect();
    let mean = s.iter().sum::<f64>() / m as f64;
    let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
    let inv_std = 1.0 / (var + LN_EPS).sqrt();
    let normalized: Vec<f64> = s.iter().map(|v| (v - mean) * inv_std).collect();
    let m_g = normalized
        .iter()
        .zip(head.ln_gain.data().iter().zip(head.ln_bias.data()))
        .map(|(&x, (&g, &b))| g * x + b)
        .collect();
    Ok(GlobalTrace {
        m_a,
        pre_ff,
        normalized,
        inv_std,
        m_g,
    })
}

/// Returns `(dY, dh)`.
pub fn global_backward(
    h: &[f64],
    y: &Tensor,
    head: &ElfHeadParams,
    tr: &GlobalTrace,
    dm_g: &[f64],
    grads: &mut ElfHeadParams,
) -> (Tensor, Vec<f64>) {
    let m = tr.m_a.len();
    let gain = head.ln_gain.data();
    let dxhat: Vec<f64> = dm_g.iter().zip(gain).map(|(d, g)| d * g).collect();
    for i in 0..m {
        grads.ln_gain.data_mut()[i] += dm_g[i] * tr.normalized[i];
        grads.ln_bias.data_mut()[i] += dm_g[i];
    }
    let mean_d = dxhat.iter().sum::<f64>() / m as f64;
    let mean_dx = dxhat.iter().zip(&tr.normalized).map(|(a, b)| a * b).sum::<f64>() / m as f64;
    let ds: Vec<f64> = dxhat
        .iter()
        .zip(&tr.normalized)
        .map(|(&d, &x)| tr.inv_std * (d - mean_d - x * mean_dx))
        .collect();
    let dff: Vec<f64> = ds
        .iter()
        .zip(&tr.pre_ff)
        .map(|(&d, &f)| if f > 0.0 { d } else { 0.0 })
        .collect();
    add_outer(grads.w2.data_mut(), &dff, &tr.m_a);
    add_assign(grads.b2.data_mut(), &dff);
    let mut dma = ds;
    add_matvec_t(head.w2.data(), &dff, &mut dma);
    let mut dy = Tensor::zeros(&[m, h.len()]);
    let mut dh = vec![0.0; h.len()];
    for i in 0..m {
        let da = dma[i] * tr.m_a[i] * (1.0 - tr.m_a[i]);
        if da == 0.0 {
            continue;
        }
        for (g, &hv) in dy.row_mut(i).iter_mut().zip(h) {
            *g = da * hv;
        }
        for (g, &yv) in dh.iter_mut().zip(y.row(i)) {
            *g += da * yv;
        }
    }
    (dy, dh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elf::{extract_patches, ElfVolume, Patch};
    use crate::tensor::stream_rng;

    fn patch_set(vals: Vec<Vec<f64>>, p: usize) -> PatchSet {
        PatchSet {
            drug_id: 0,
            patch_size: p,
            patches: vals
                .into_iter()
                .enumerate()
                .map(|(j, values)| Patch {
                    slice: j,
                    tile_row: 0,
                    tile_col: 0,
                    values,
                })
                .collect(),
        }
    }

    fn random_patches(n: usize, p: usize, seed: u64) -> PatchSet {
        let mut rng = stream_rng(seed, 9);
        patch_set(
            (0..n).map(|_| (0..p * p).map(|_| rng.random_range(0.0..1.0)).collect()).collect(),
            p,
        )
    }

    #[test]
    fn conv_matches_direct_definition() {
        let mut rng = stream_rng(1, 1);
        let (cin, h, w) = (2, 5, 4);
        let input: Vec<f64> = (0..cin * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let weight: Vec<f64> = (0..3 * cin * 9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias = [0.1, -0.2, 0.3];
        let out = conv3x3(&input, cin, h, w, &weight, &bias);
        for o in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = bias[o];
                    for i in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (sy, sx) = (y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                acc += weight[(o * cin + i) * 9 + ky * 3 + kx]
                                    * input[i * h * w + sy as usize * w + sx as usize];
                            }
                        }
                    }
                    assert!((out[o * h * w + y * w + x] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_patch_is_its_cnn_output() {
        let mut rng = stream_rng(2, 0);
        let cnn = CnnParams::init(8, [2, 3], 5, &mut rng).unwrap();
        let set = random_patches(1, 8, 3);
        let enc = encode_drug(&set, &cnn).unwrap();
        assert_eq!(enc.features, cnn_forward(&cnn, &set.patches[0].values).unwrap());
    }

    #[test]
    fn duplicated_patches_do_not_change_pooling() {
        let mut rng = stream_rng(3, 0);
        let cnn = CnnParams::init(8, [2, 3], 5, &mut rng).unwrap();
        let set = random_patches(4, 8, 4);
        let mut doubled = set.clone();
        doubled.patches.extend(set.patches.clone());
        assert_eq!(
            encode_drug(&set, &cnn).unwrap().features,
            encode_drug(&doubled, &cnn).unwrap().features
        );
    }

    #[test]
    fn pooled_feature_dominates_every_patch() {
        let mut rng = stream_rng(4, 0);
        let cnn = CnnParams::init(8, [2, 3], 6, &mut rng).unwrap();
        let set = random_patches(7, 8, 5);
        let c = encode_drug(&set, &cnn).unwrap().features;
        for patch in &set.patches {
            let out = cnn_forward(&cnn, &patch.values).unwrap();
            assert!(out.iter().zip(&c).all(|(o, m)| o <= m));
        }
    }

    #[test]
    fn empty_patch_set_errors() {
        let cnn = CnnParams::zeros(8, [1, 1], 2).unwrap();
        assert!(encode_drug(&patch_set(vec![], 8), &cnn).is_err());
        assert!(CnnParams::zeros(3, [1, 1], 2).is_err());
    }

    #[test]
    fn works_on_extracted_volume_patches() {
        let vol = ElfVolume::new([10, 10, 2], [0.25; 3], (0..200).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        let set = extract_patches(&vol, 8, 3).unwrap();
        let mut rng = stream_rng(5, 0);
        let cnn = CnnParams::init(8, [2, 2], 4, &mut rng).unwrap();
        let enc = encode_drug(&set, &cnn).unwrap();
        assert_eq!(enc.features.len(), 4);
        assert!(enc.features.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn identity_mlp_passes_nonnegative_features_through() {
        let mut head = ElfHeadParams::zeros(4, 4, 3);
        head.mlp_w1 = Tensor::eye(4, 4);
        head.mlp_w2 = Tensor::eye(4, 4);
        let c = Tensor::from_vec(&[3, 4], (0..12).map(|i| i as f64 * 0.5).collect()).unwrap();
        assert_eq!(project(&c, &head).unwrap().y, c);
        let zero = ElfHeadParams::zeros(4, 4, 3);
        assert_eq!(project(&c, &zero).unwrap().y, Tensor::zeros(&[3, 4]));
    }

    #[test]
    fn projection_is_row_equivariant() {
        let mut rng = stream_rng(6, 0);
        let head = ElfHeadParams::init(5, 3, 4, &mut rng);
        let c = Tensor::uniform(&[4, 5], 1.0, &mut rng);
        let perm = [2, 0, 3, 1];
        let mut pc = Tensor::zeros(&[4, 5]);
        for (dst, &src) in perm.iter().enumerate() {
            pc.row_mut(dst).copy_from_slice(c.row(src));
        }
        let y = project(&c, &head).unwrap().y;
        let py = project(&pc, &head).unwrap().y;
        for (dst, &src) in perm.iter().enumerate() {
            assert_eq!(py.row(dst), y.row(src));
        }
    }

    #[test]
    fn zero_state_gives_half_affinity_and_bias_output() {
        let head = ElfHeadParams::zeros(2, 3, 4);
        let mut rng = stream_rng(7, 0);
        let y = Tensor::uniform(&[4, 3], 1.0, &mut rng);
        let tr = global_drug_vector(&[0.0; 3], &y, &head).unwrap();
        assert_eq!(tr.m_a, vec![0.5; 4]);
        assert_eq!(tr.m_g, vec![0.0; 4]);
        assert!(global_drug_vector(&[0.0; 2], &y, &head).is_err());
    }

    #[test]
    fn affinity_is_monotone_in_score() {
        let head = ElfHeadParams::zeros(2, 2, 2);
        let h = [1.0, 0.5];
        let mut prev = 0.0;
        for k in 0..10 {
            let y = Tensor::from_vec(&[2, 2], vec![k as f64 * 0.3 - 1.0, 0.0, 0.2, 0.1]).unwrap();
            let a = global_drug_vector(&h, &y, &head).unwrap().m_a[0];
            assert!(a > prev && a > 0.0 && a < 1.0);
            prev = a;
        }
    }

    #[test]
    fn layer_norm_standardizes() {
        let mut rng = stream_rng(8, 0);
        let head = ElfHeadParams::init(3, 4, 9, &mut rng);
        let y = Tensor::uniform(&[9, 4], 2.0, &mut rng);
        let h = [0.3, -0.7, 0.2, 0.9];
        let tr = global_drug_vector(&h, &y, &head).unwrap();
        let mean = tr.normalized.iter().sum::<f64>() / 9.0;
        let var = tr.normalized.iter().map(|v| v * v).sum::<f64>() / 9.0;
        // the ε guard shrinks the variance by var_s / (var_s + ε)
        let var_s = 1.0 / (tr.inv_std * tr.inv_std) - LN_EPS;
        assert!(mean.abs() < 1e-6);
        assert!((var * (var_s + LN_EPS) / var_s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn global_vector_gradient_wrt_state() {
        let mut rng = stream_rng(9, 0);
        let mut head = ElfHeadParams::init(3, 4, 5, &mut rng);
        head.ln_gain = Tensor::uniform(&[5], 1.5, &mut rng);
        let y = Tensor::uniform(&[5, 4], 1.5, &mut rng);
        let h = vec![0.4, -0.2, 0.7, -0.9];
        let probe = [0.3, -1.0, 0.5, 0.8, -0.2];
        let f = |h: &[f64]| dot(&global_drug_vector(h, &y, &head).unwrap().m_g, &probe);
        let tr = global_drug_vector(&h, &y, &head).unwrap();
        let mut grads = ElfHeadParams::zeros(3, 4, 5);
        let (_, dh) = global_backward(&h, &y, &head, &tr, &probe, &mut grads);
        let eps = 1e-6;
        for k in 0..4 {
            let mut up = h.clone();
            up[k] += eps;
            let mut down = h.clone();
            down[k] -= eps;
            let num = (f(&up) - f(&down)) / (2.0 * eps);
            assert!((num - dh[k]).abs() <= 1e-4 * num.abs().max(dh[k].abs()).max(1e-8), "{num} vs {}", dh[k]);
        }
    }
}
