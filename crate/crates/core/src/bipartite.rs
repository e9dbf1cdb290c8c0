//! Patient-conditioned substructure importance and the mask-constrained
//! local drug vector.

use rand::Rng;

use crate::corpus::MaskMatrix;
use crate::error::{MmmError, Result};
use crate::tensor::{add_assign, add_matvec_t, add_outer, affine, sigmoid, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteParams {
    /// `[|S|, dim]`
    pub ws: Tensor,
    pub bs: Tensor,
    /// `[|M|, |S|]`; entries where the mask is 0 are never read.
    pub w3: Tensor,
    pub b3: Tensor,
}

impl BipartiteParams {
    pub fn zeros(dim: usize, n_drugs: usize, n_substructures: usize) -> Self {
        Self {
            ws: Tensor::zeros(&[n_substructures, dim]),
            bs: Tensor::zeros(&[n_substructures]),
            w3: Tensor::zeros(&[n_drugs, n_substructures]),
            b3: Tensor::zeros(&[n_drugs]),
        }
    }

    pub fn init(dim: usize, n_drugs: usize, n_substructures: usize, rng: &mut impl Rng) -> Self {
        let kd = 1.0 / (dim as f64).sqrt();
        let ks = 1.0 / (n_substructures as f64).sqrt();
        Self {
            ws: Tensor::uniform(&[n_substructures, dim], kd, rng),
            bs: Tensor::uniform(&[n_substructures], kd, rng),
            w3: Tensor::uniform(&[n_drugs, n_substructures], ks, rng),
            b3: Tensor::zeros(&[n_drugs]),
        }
    }

    pub fn n_drugs(&self) -> usize {
        self.b3.len()
    }

    pub fn n_substructures(&self) -> usize {
        self.bs.len()
    }

    pub fn blocks(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("ws".into(), &self.ws),
            ("bs".into(), &self.bs),
            ("w3".into(), &self.w3),
            ("b3".into(), &self.b3),
        ]
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("ws".into(), &mut self.ws),
            ("bs".into(), &mut self.bs),
            ("w3".into(), &mut self.w3),
            ("b3".into(), &mut self.b3),
        ]
    }
}

/// `m_s = σ(W_s h + b_s)`.
pub fn substructure_importance(h: &[f64], p: &BipartiteParams) -> Result<Vec<f64>> {
    if p.ws.cols() != h.len() {
        return Err(MmmError::Shape(format!(
            "patient state has length {}, W_s expects {}",
            h.len(),
            p.ws.cols()
        )));
    }
    let mut m_s = vec![0.0; p.n_substructures()];
    affine(p.ws.data(), p.bs.data(), h, &mut m_s);
    m_s.iter_mut().for_each(|v| *v = sigmoid(*v));
    Ok(m_s)
}

/// `m_l = (W3 ⊙ H) m_s + b3`, reading only the mask's nonzero entries.
pub fn local_drug_vector(m_s: &[f64], w3: &Tensor, mask: &MaskMatrix, b3: &[f64]) -> Result<Vec<f64>> {
    let (m, s) = (mask.n_drugs(), mask.n_substructures());
    if w3.shape() != [m, s] || b3.len() != m || m_s.len() != s {
        return Err(MmmError::Shape(format!(
            "local vector needs W3 [{m}, {s}], b3 [{m}], m_s [{s}]; got {:?}, [{}], [{}]",
            w3.shape(),
            b3.len(),
            m_s.len()
        )));
    }
    Ok((0..m)
        .map(|i| {
            let row = w3.row(i);
            b3[i] + mask.row(i).iter().map(|&j| row[j] * m_s[j]).sum::<f64>()
        })
        .collect())
}

/// Backpropagates `dm_l` through the local vector and `m_s`; returns `dh`.
pub fn bipartite_backward(
    h: &[f64],
    m_s: &[f64],
    p: &BipartiteParams,
    mask: &MaskMatrix,
    dm_l: &[f64],
    grads: &mut BipartiteParams,
) -> Vec<f64> {
    let s = p.n_substructures();
    add_assign(grads.b3.data_mut(), dm_l);
    let mut dm_s = vec![0.0; s];
    for (i, &g) in dm_l.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let w = p.w3.row(i);
        let gw = grads.w3.row_mut(i);
        for &j in mask.row(i) {
            gw[j] += g * m_s[j];
            dm_s[j] += g * w[j];
        }
    }
    let d_pre: Vec<f64> = dm_s.iter().zip(m_s).map(|(&g, &v)| g * v * (1.0 - v)).collect();
    add_outer(grads.ws.data_mut(), &d_pre, h);
    add_assign(grads.bs.data_mut(), &d_pre);
    let mut dh = vec![0.0; h.len()];
    add_matvec_t(p.ws.data(), &d_pre, &mut dh);
    dh
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{dot, stream_rng};
    use proptest::prelude::*;
    use rand::Rng;

    fn fixture(seed: u64) -> (BipartiteParams, MaskMatrix) {
        let mut rng = stream_rng(seed, 0);
        let mut p = BipartiteParams::init(4, 5, 7, &mut rng);
        p.b3 = Tensor::uniform(&[5], 0.5, &mut rng);
        let dense: Vec<u8> = (0..35).map(|_| rng.random_range(0..2u8)).collect();
        (p, MaskMatrix::from_dense(5, 7, &dense).unwrap())
    }

    #[test]
    fn zero_weights_give_half_importance() {
        let p = BipartiteParams::zeros(3, 2, 4);
        assert_eq!(substructure_importance(&[1.0, -2.0, 0.3], &p).unwrap(), vec![0.5; 4]);
        assert!(substructure_importance(&[1.0], &p).is_err());
    }

    #[test]
    fn fully_masked_drug_gives_bias() {
        let (p, _) = fixture(1);
        let mut rows: Vec<Vec<usize>> = (0..5).map(|i| vec![i, 6]).collect();
        rows[2].clear();
        let mask = MaskMatrix::from_rows(7, rows).unwrap();
        let m_s = vec![0.3; 7];
        let m_l = local_drug_vector(&m_s, &p.w3, &mask, p.b3.data()).unwrap();
        assert_eq!(m_l[2], p.b3.data()[2]);
    }

    #[test]
    fn all_ones_mask_is_plain_affine() {
        let (p, _) = fixture(2);
        let mask = MaskMatrix::from_dense(5, 7, &[1; 35]).unwrap();
        let m_s: Vec<f64> = (0..7).map(|j| 0.1 * j as f64).collect();
        let m_l = local_drug_vector(&m_s, &p.w3, &mask, p.b3.data()).unwrap();
        let mut dense = vec![0.0; 5];
        affine(p.w3.data(), p.b3.data(), &m_s, &mut dense);
        for (a, b) in m_l.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_dense_masked_product() {
        let (p, mask) = fixture(3);
        let dense_mask = mask.to_dense();
        let m_s: Vec<f64> = (0..7).map(|j| 0.05 + 0.13 * j as f64).collect();
        let m_l = local_drug_vector(&m_s, &p.w3, &mask, p.b3.data()).unwrap();
        for i in 0..5 {
            let mut acc = p.b3.data()[i];
            for j in 0..7 {
                acc += p.w3.data()[i * 7 + j] * dense_mask[i * 7 + j] as f64 * m_s[j];
            }
            assert!((m_l[i] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_errors() {
        let (p, mask) = fixture(4);
        assert!(local_drug_vector(&[0.5; 6], &p.w3, &mask, p.b3.data()).is_err());
        assert!(local_drug_vector(&[0.5; 7], &Tensor::zeros(&[5, 6]), &mask, p.b3.data()).is_err());
    }

    #[test]
    fn different_patients_change_local_vector() {
        let (p, mask) = fixture(5);
        let a = substructure_importance(&[0.9, -0.4, 0.2, 0.1], &p).unwrap();
        let b = substructure_importance(&[-0.6, 0.8, -0.3, 0.5], &p).unwrap();
        assert_ne!(a, b);
        let la = local_drug_vector(&a, &p.w3, &mask, p.b3.data()).unwrap();
        let lb = local_drug_vector(&b, &p.w3, &mask, p.b3.data()).unwrap();
        assert!((0..5).any(|i| !mask.row(i).is_empty() && la[i] != lb[i]));
    }

    #[test]
    fn state_gradient_matches_finite_difference() {
        let (p, mask) = fixture(6);
        let h = vec![0.3, -0.5, 0.8, -0.1];
        let probe = [0.7, -1.2, 0.4, 0.9, -0.3];
        let f = |h: &[f64]| {
            let m_s = substructure_importance(h, &p).unwrap();
            dot(&local_drug_vector(&m_s, &p.w3, &mask, p.b3.data()).unwrap(), &probe)
        };
        let m_s = substructure_importance(&h, &p).unwrap();
        let mut grads = BipartiteParams::zeros(4, 5, 7);
        let dh = bipartite_backward(&h, &m_s, &p, &mask, &probe, &mut grads);
        for k in 0..4 {
            let eps = 1e-6;
            let (mut up, mut down) = (h.clone(), h.clone());
            up[k] += eps;
            down[k] -= eps;
            let num = (f(&up) - f(&down)) / (2.0 * eps);
            assert!((num - dh[k]).abs() <= 1e-4 * num.abs().max(1e-8), "{num} vs {}", dh[k]);
        }
        for i in 0..5 {
            for j in 0..7 {
                if !mask.get(i, j) {
                    assert_eq!(grads.w3.data()[i * 7 + j], 0.0);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn masked_weights_are_absorbed(seed in 0u64..500, value in -1e6f64..1e6) {
            let (mut p, mask) = fixture(seed);
            let m_s: Vec<f64> = (0..7).map(|j| 0.1 + 0.1 * j as f64).collect();
            let before = local_drug_vector(&m_s, &p.w3, &mask, p.b3.data()).unwrap();
            for i in 0..5 {
                for j in 0..7 {
                    if !mask.get(i, j) {
                        p.w3.data_mut()[i * 7 + j] = value;
                    }
                }
            }
            let after = local_drug_vector(&m_s, &p.w3, &mask, p.b3.data()).unwrap();
            prop_assert_eq!(before, after);
        }

        #[test]
        fn local_vector_reads_only_own_substructures(seed in 0u64..500, j in 0usize..7, delta in -1.0f64..1.0) {
            let (p, mask) = fixture(seed);
            let m_s: Vec<f64> = (0..7).map(|k| 0.2 + 0.05 * k as f64).collect();
            let mut moved = m_s.clone();
            moved[j] += delta;
            let a = local_drug_vector(&m_s, &p.w3, &mask, p.b3.data()).unwrap();
            let b = local_drug_vector(&moved, &p.w3, &mask, p.b3.data()).unwrap();
            for i in 0..5 {
                if !mask.get(i, j) {
                    prop_assert_eq!(a[i], b[i]);
                }
            }
        }
    }
}
