//! Diagnosis/procedure history encoder: mean-pooled code embeddings, one GRU
//! per code stream, and a tanh affine layer over the concatenated final
//! hidden states.

use rand::Rng;

use crate::corpus::Visit;
use crate::error::{MmmError, Result};
use crate::tensor::{add_assign, add_matvec_t, add_outer, affine, sigmoid, Tensor};

/// Single-layer GRU, gate order (reset, update, candidate).
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub b_ih: Tensor,
    pub b_hh: Tensor,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Tensor::zeros(&[3 * hidden, input]),
            w_hh: Tensor::zeros(&[3 * hidden, hidden]),
            b_ih: Tensor::zeros(&[3 * hidden]),
            b_hh: Tensor::zeros(&[3 * hidden]),
        }
    }

    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        Self {
            w_ih: Tensor::uniform(&[3 * hidden, input], k, rng),
            w_hh: Tensor::uniform(&[3 * hidden, hidden], k, rng),
            b_ih: Tensor::uniform(&[3 * hidden], k, rng),
            b_hh: Tensor::uniform(&[3 * hidden], k, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_ih.len() / 3
    }

    fn blocks(&self) -> [(&'static str, &Tensor); 4] {
        [("w_ih", &self.w_ih), ("w_hh", &self.w_hh), ("b_ih", &self.b_ih), ("b_hh", &self.b_hh)]
    }

    fn blocks_mut(&mut self) -> [(&'static str, &mut Tensor); 4] {
        [
            ("w_ih", &mut self.w_ih),
            ("w_hh", &mut self.w_hh),
            ("b_ih", &mut self.b_ih),
            ("b_hh", &mut self.b_hh),
        ]
    }
}

#[derive(Debug, Clone)]
struct GruStep {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    hn_lin: Vec<f64>,
}

/// Cached activations of one GRU pass.
#[derive(Debug, Clone, Default)]
pub struct GruTrace {
    steps: Vec<GruStep>,
    outputs: Vec<Vec<f64>>,
}

impl GruTrace {
    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    pub fn last(&self) -> &[f64] {
        self.outputs.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn gru_forward(p: &GruParams, inputs: &[Vec<f64>]) -> GruTrace {
    let hd = p.hidden();
    let mut h = vec![0.0; hd];
    let mut trace = GruTrace::default();
    let mut gi = vec![0.0; 3 * hd];
    let mut gh = vec![0.0; 3 * hd];
    for x in inputs {
        affine(p.w_ih.data(), p.b_ih.data(), x, &mut gi);
        affine(p.w_hh.data(), p.b_hh.data(), &h, &mut gh);
        let mut r = vec![0.0; hd];
        let mut z = vec![0.0; hd];
        let mut n = vec![0.0; hd];
        let hn_lin = gh[2 * hd..].to_vec();
        let mut next = vec![0.0; hd];
        for k in 0..hd {
            r[k] = sigmoid(gi[k] + gh[k]);
            z[k] = sigmoid(gi[hd + k] + gh[hd + k]);
            n[k] = (gi[2 * hd + k] + r[k] * hn_lin[k]).tanh();
            next[k] = (1.0 - z[k]) * n[k] + z[k] * h[k];
        }
        trace.steps.push(GruStep {
            x: x.clone(),
            h_prev: h,
            r,
            z,
            n,
            hn_lin,
        });
        trace.outputs.push(next.clone());
        h = next;
    }
    trace
}

/// Backpropagates `d_last` (gradient on the final hidden state) through the
/// whole sequence. Returns the gradient for every input vector.
pub fn gru_backward(p: &GruParams, trace: &GruTrace, d_last: &[f64], grads: &mut GruParams) -> Vec<Vec<f64>> {
    let hd = p.hidden();
    let input = p.w_ih.cols();
    let mut dh = d_last.to_vec();
    let mut dxs = vec![vec![0.0; input]; trace.steps.len()];
    let mut g_in = vec![0.0; 3 * hd];
    let mut g_hid = vec![0.0; 3 * hd];
    for (t, s) in trace.steps.iter().enumerate().rev() {
        let mut dh_prev = vec![0.0; hd];
        for k in 0..hd {
            let dn = dh[k] * (1.0 - s.z[k]);
            let dz = dh[k] * (s.h_prev[k] - s.n[k]);
            dh_prev[k] = dh[k] * s.z[k];
            let dn_pre = dn * (1.0 - s.n[k] * s.n[k]);
            let dr = dn_pre * s.hn_lin[k];
            let dr_pre = dr * s.r[k] * (1.0 - s.r[k]);
            let dz_pre = dz * s.z[k] * (1.0 - s.z[k]);
            g_in[k] = dr_pre;
            g_in[hd + k] = dz_pre;
            g_in[2 * hd + k] = dn_pre;
            g_hid[k] = dr_pre;
            g_hid[hd + k] = dz_pre;
            g_hid[2 * hd + k] = dn_pre * s.r[k];
        }
        add_outer(grads.w_ih.data_mut(), &g_in, &s.x);
        add_assign(grads.b_ih.data_mut(), &g_in);
        add_outer(grads.w_hh.data_mut(), &g_hid, &s.h_prev);
        add_assign(grads.b_hh.data_mut(), &g_hid);
        add_matvec_t(p.w_ih.data(), &g_in, &mut dxs[t]);
        add_matvec_t(p.w_hh.data(), &g_hid, &mut dh_prev);
        dh = dh_prev;
    }
    dxs
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientEncoderParams {
    pub emb_dx: Tensor,
    pub emb_px: Tensor,
    pub gru_dx: GruParams,
    pub gru_px: GruParams,
    pub w1: Tensor,
    pub b1: Tensor,
}

impl PatientEncoderParams {
    pub fn zeros(n_dx: usize, n_px: usize, emb_dim: usize, dim: usize) -> Self {
        Self {
            emb_dx: Tensor::zeros(&[n_dx, emb_dim]),
            emb_px: Tensor::zeros(&[n_px, emb_dim]),
            gru_dx: GruParams::zeros(emb_dim, emb_dim),
            gru_px: GruParams::zeros(emb_dim, emb_dim),
            w1: Tensor::zeros(&[dim, 2 * emb_dim]),
            b1: Tensor::zeros(&[dim]),
        }
    }

    pub fn init(n_dx: usize, n_px: usize, emb_dim: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let unit = 3f64.sqrt();
        let k1 = (6.0 / (2 * emb_dim + dim) as f64).sqrt();
        Self {
            emb_dx: Tensor::uniform(&[n_dx, emb_dim], unit, rng),
            emb_px: Tensor::uniform(&[n_px, emb_dim], unit, rng),
            gru_dx: GruParams::init(emb_dim, emb_dim, rng),
            gru_px: GruParams::init(emb_dim, emb_dim, rng),
            w1: Tensor::uniform(&[dim, 2 * emb_dim], k1, rng),
            b1: Tensor::zeros(&[dim]),
        }
    }

    pub fn emb_dim(&self) -> usize {
        self.emb_dx.cols()
    }

    pub fn dim(&self) -> usize {
        self.b1.len()
    }

    pub fn blocks(&self) -> Vec<(String, &Tensor)> {
        let mut v = vec![("emb_dx".to_string(), &self.emb_dx), ("emb_px".to_string(), &self.emb_px)];
        for (name, t) in self.gru_dx.blocks() {
            v.push((format!("gru_dx.{name}"), t));
        }
        for (name, t) in self.gru_px.blocks() {
            v.push((format!("gru_px.{name}"), t));
        }
        v.push(("w1".into(), &self.w1));
        v.push(("b1".into(), &self.b1));
        v
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v = vec![("emb_dx".to_string(), &mut self.emb_dx), ("emb_px".to_string(), &mut self.emb_px)];
        for (name, t) in self.gru_dx.blocks_mut() {
            v.push((format!("gru_dx.{name}"), t));
        }
        for (name, t) in self.gru_px.blocks_mut() {
            v.push((format!("gru_px.{name}"), t));
        }
        v.push(("w1".into(), &mut self.w1));
        v.push(("b1".into(), &mut self.b1));
        v
    }
}

/// Mean of the embedding rows of `codes`; an empty code list embeds to zero.
pub fn embed_visit(codes: &[usize], table: &Tensor) -> Result<Vec<f64>> {
    let mut out = vec![0.0; table.cols()];
    for &c in codes {
        if c >= table.rows() {
            return Err(MmmError::Validation(format!(
                "code {c} outside embedding table of {} rows",
                table.rows()
            )));
        }
        add_assign(&mut out, table.row(c));
    }
    if !codes.is_empty() {
        let inv = 1.0 / codes.len() as f64;
        out.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(out)
}

/// Patient state after visit `t` (1-based count of visits seen).
#[derive(Debug, Clone, PartialEq)]
pub struct PatientState {
    pub h: Vec<f64>,
    pub t: usize,
}

/// Forward activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct PatientTrace {
    dx_codes: Vec<Vec<usize>>,
    px_codes: Vec<Vec<usize>>,
    dx: GruTrace,
    px: GruTrace,
    concat: Vec<f64>,
    pub state: PatientState,
}

fn concat_state(p: &PatientEncoderParams, r_dx: &[f64], r_px: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut concat = Vec::with_capacity(r_dx.len() + r_px.len());
    concat.extend_from_slice(r_dx);
    concat.extend_from_slice(r_px);
    let mut h = vec![0.0; p.dim()];
    affine(p.w1.data(), p.b1.data(), &concat, &mut h);
    h.iter_mut().for_each(|v| *v = v.tanh());
    (concat, h)
}

pub fn encode_patient_traced(visits: &[Visit], p: &PatientEncoderParams) -> Result<PatientTrace> {
    if visits.is_empty() {
        return Err(MmmError::InvalidArgument("cannot encode a patient with no visits".into()));
    }
    let dx_in = visits
        .iter()
        .map(|v| embed_visit(&v.diagnoses, &p.emb_dx))
        .collect::<Result<Vec<_>>>()?;
    let px_in = visits
        .iter()
        .map(|v| embed_visit(&v.procedures, &p.emb_px))
        .collect::<Result<Vec<_>>>()?;
    let dx = gru_forward(&p.gru_dx, &dx_in);
    let px = gru_forward(&p.gru_px, &px_in);
    let (concat, h) = concat_state(p, dx.last(), px.last());
    Ok(PatientTrace {
        dx_codes: visits.iter().map(|v| v.diagnoses.clone()).collect(),
        px_codes: visits.iter().map(|v| v.procedures.clone()).collect(),
        dx,
        px,
        concat,
        state: PatientState { h, t: visits.len() },
    })
}

/// `h^(t)` from visits `1..=t`.
pub fn encode_patient(visits: &[Visit], p: &PatientEncoderParams) -> Result<PatientState> {
    encode_patient_traced(visits, p).map(|t| t.state)
}

/// States after every prefix of `visits`, sharing one pass of each GRU.
pub fn encode_patient_prefixes(visits: &[Visit], p: &PatientEncoderParams) -> Result<Vec<PatientState>> {
    if visits.is_empty() {
        return Err(MmmError::InvalidArgument("cannot encode a patient with no visits".into()));
    }
    let dx_in = visits
        .iter()
        .map(|v| embed_visit(&v.diagnoses, &p.emb_dx))
        .collect::<Result<Vec<_>>>()?;
    let px_in = visits
        .iter()
        .map(|v| embed_visit(&v.procedures, &p.emb_px))
        .collect::<Result<Vec<_>>>()?;
    let dx = gru_forward(&p.gru_dx, &dx_in);
    let px = gru_forward(&p.gru_px, &px_in);
    Ok(dx
        .outputs()
        .iter()
        .zip(px.outputs())
        .enumerate()
        .map(|(t, (a, b))| PatientState {
            h: concat_state(p, a, b).1,
            t: t + 1,
        })
        .collect())
}

fn scatter_embedding_grads(codes: &[Vec<usize>], dxs: &[Vec<f64>], table: &mut Tensor) {
    for (visit_codes, dx) in codes.iter().zip(dxs) {
        if visit_codes.is_empty() {
            continue;
        }
        let inv = 1.0 / visit_codes.len() as f64;
        for &c in visit_codes {
            for (g, &d) in table.row_mut(c).iter_mut().zip(dx) {
                *g += d * inv;
            }
        }
    }
}

pub fn patient_backward(p: &PatientEncoderParams, trace: &PatientTrace, dh: &[f64], grads: &mut PatientEncoderParams) {
    let h = &trace.state.h;
    let d_pre: Vec<f64> = dh.iter().zip(h).map(|(&g, &v)| g * (1.0 - v * v)).collect();
    add_outer(grads.w1.data_mut(), &d_pre, &trace.concat);
    add_assign(grads.b1.data_mut(), &d_pre);
    let mut d_concat = vec![0.0; trace.concat.len()];
    add_matvec_t(p.w1.data(), &d_pre, &mut d_concat);
    let e = p.emb_dim();
    let dx_in = gru_backward(&p.gru_dx, &trace.dx, &d_concat[..e], &mut grads.gru_dx);
    let px_in = gru_backward(&p.gru_px, &trace.px, &d_concat[e..], &mut grads.gru_px);
    scatter_embedding_grads(&trace.dx_codes, &dx_in, &mut grads.emb_dx);
    scatter_embedding_grads(&trace.px_codes, &px_in, &mut grads.emb_px);
}
