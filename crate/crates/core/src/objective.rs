//! Prediction from the fused drug vectors and the three training losses.

use crate::corpus::DdiMatrix;
use crate::error::{MmmError, Result};
use crate::tensor::sigmoid;

/// Probability clamp applied inside the cross-entropy.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub o_hat: Vec<f64>,
    /// Sorted drug ids with `o_hat ≥ threshold`.
    pub m_hat: Vec<usize>,
}

pub fn threshold_set(o_hat: &[f64], threshold: f64) -> Vec<usize> {
    (0..o_hat.len()).filter(|&i| o_hat[i] >= threshold).collect()
}

/// `ô = σ(m_g ⊙ m_l)` thresholded inclusively.
pub fn predict(m_g: &[f64], m_l: &[f64], threshold: f64) -> Result<Prediction> {
    if m_g.len() != m_l.len() {
        return Err(MmmError::Shape(format!(
            "global vector has {} entries, local {}",
            m_g.len(),
            m_l.len()
        )));
    }
    let o_hat: Vec<f64> = m_g.iter().zip(m_l).map(|(g, l)| sigmoid(g * l)).collect();
    let m_hat = threshold_set(&o_hat, threshold);
    Ok(Prediction { o_hat, m_hat })
}

pub fn multi_hot(set: &[usize], n: usize) -> Result<Vec<bool>> {
    let mut out = vec![false; n];
    for &i in set {
        if i >= n {
            return Err(MmmError::Validation(format!("drug {i} outside vocabulary of {n}")));
        }
        out[i] = true;
    }
    Ok(out)
}

/// Mean binary cross-entropy and its gradient in `o`.
pub fn loss_bce(o: &[f64], truth: &[bool]) -> (f64, Vec<f64>) {
    let n = o.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; o.len()];
    for (i, (&p, &y)) in o.iter().zip(truth).enumerate() {
        let c = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let inside = p > PROB_CLAMP && p < 1.0 - PROB_CLAMP;
        if y {
            loss -= c.ln();
            if inside {
                grad[i] = -1.0 / (c * n);
            }
        } else {
            loss -= (1.0 - c).ln();
            if inside {
                grad[i] = 1.0 / ((1.0 - c) * n);
            }
        }
    }
    (loss / n, grad)
}

/// `(1/|M|) Σ_{i∈Y} Σ_{j∉Y} max(0, 1 − (o_i − o_j))`; zero when `Y` covers every drug.
pub fn loss_multi(o: &[f64], truth: &[bool]) -> Result<(f64, Vec<f64>)> {
    if !truth.iter().any(|&y| y) {
        return Err(MmmError::InvalidArgument("margin loss needs at least one positive".into()));
    }
    let n = o.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; o.len()];
    for i in (0..o.len()).filter(|&i| truth[i]) {
        for j in (0..o.len()).filter(|&j| !truth[j]) {
            let margin = 1.0 - (o[i] - o[j]);
            if margin > 0.0 {
                loss += margin;
                grad[i] -= 1.0 / n;
                grad[j] += 1.0 / n;
            }
        }
    }
    Ok((loss / n, grad))
}

/// Interacting-pair mass `Σ_{i<j} D_ij o_i o_j` over the number of drug pairs.
pub fn loss_ddi(o: &[f64], ddi: &DdiMatrix) -> Result<(f64, Vec<f64>)> {
    let m = o.len();
    if m < 2 {
        return Err(MmmError::InvalidArgument(format!("DDI loss needs at least 2 drugs, got {m}")));
    }
    if ddi.n_drugs() != m {
        return Err(MmmError::Shape(format!("DDI matrix covers {} drugs, o has {m}", ddi.n_drugs())));
    }
    let pairs = (m * (m - 1) / 2) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; m];
    for &(i, j) in ddi.drug_pairs() {
        loss += o[i] * o[j];
        grad[i] += o[j] / pairs;
        grad[j] += o[i] / pairs;
    }
    Ok((loss / pairs, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub bce: f64,
    pub multi: f64,
    pub ddi: f64,
    pub total: f64,
}

pub fn combine(bce: f64, multi: f64, ddi: f64, alpha: f64, beta: f64) -> f64 {
    beta * (alpha * bce + (1.0 - alpha) * multi) + (1.0 - beta) * ddi
}

/// All three losses, the weighted total, and `∂total/∂o`.
pub fn total_loss(o: &[f64], truth: &[usize], ddi: &DdiMatrix, alpha: f64, beta: f64) -> Result<(LossParts, Vec<f64>)> {
    if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) {
        return Err(MmmError::InvalidArgument(format!(
            "alpha and beta must lie in [0, 1], got {alpha} and {beta}"
        )));
    }
    let y = multi_hot(truth, o.len())?;
    let (bce, gb) = loss_bce(o, &y);
    let (multi, gm) = loss_multi(o, &y)?;
    let (d, gd) = loss_ddi(o, ddi)?;
    let grad = (0..o.len())
        .map(|i| beta * (alpha * gb[i] + (1.0 - alpha) * gm[i]) + (1.0 - beta) * gd[i])
        .collect();
    Ok((
        LossParts {
            bce,
            multi,
            ddi: d,
            total: combine(bce, multi, d, alpha, beta),
        },
        grad,
    ))
}
