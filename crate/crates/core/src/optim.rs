//! Adam over named parameter blocks, with per-group freezing.

use crate::model::{Group, ModelParams};

pub const DEFAULT_LR: f64 = 5e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ModelParams, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.blocks().iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update; blocks in `frozen` groups are left untouched.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, frozen: &[Group]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = self.lr / c1;
        for (k, ((_, group, p), (_, _, g))) in params.blocks_mut().into_iter().zip(grads.blocks()).enumerate() {
            if frozen.contains(&group) {
                continue;
            }
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= step * *m / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn config() -> ModelConfig {
        ModelConfig {
            n_dx: 3,
            n_px: 3,
            n_drugs: 2,
            n_substructures: 2,
            emb_dim: 2,
            dim: 2,
            feat_dim: 2,
            patch_size: 4,
            channels: [1, 1],
        }
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut p = ModelParams::init(config(), 1).unwrap();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.bipartite.b3.data_mut().copy_from_slice(&[2.0, -0.5]);
        let mut adam = Adam::new(&p, 0.01);
        adam.step(&mut p, &g, &[]);
        let d: Vec<f64> = p.bipartite.b3.data().iter().zip(before.bipartite.b3.data()).map(|(a, b)| a - b).collect();
        assert!((d[0] + 0.01).abs() < 1e-9 && (d[1] - 0.01).abs() < 1e-9);
        assert_eq!(p.patient, before.patient);
    }

    #[test]
    fn frozen_groups_are_untouched() {
        let mut p = ModelParams::init(config(), 2).unwrap();
        let before = p.clone();
        let mut g = p.zeros_like();
        for (_, _, t) in g.blocks_mut() {
            t.fill(1.0);
        }
        let mut adam = Adam::new(&p, 0.1);
        adam.step(&mut p, &g, &[Group::Cnn, Group::Elf]);
        assert_eq!(p.cnn, before.cnn);
        assert_eq!(p.elf, before.elf);
        assert_ne!(p.bipartite, before.bipartite);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = ModelParams::zeros(config()).unwrap();
        let target = [3.0, -1.0];
        let mut adam = Adam::new(&p, 0.05);
        for _ in 0..2000 {
            let mut g = p.zeros_like();
            for k in 0..2 {
                g.bipartite.b3.data_mut()[k] = 2.0 * (p.bipartite.b3.data()[k] - target[k]);
            }
            adam.step(&mut p, &g, &[Group::Patient, Group::Cnn, Group::Elf]);
        }
        for k in 0..2 {
            assert!((p.bipartite.b3.data()[k] - target[k]).abs() < 1e-2);
        }
    }
}
