use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Gradients, ParamStore, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// AdamW with decoupled weight decay applied before the moment update.
#[derive(Clone, Debug)]
pub struct AdamW<F> {
    pub config: AdamWConfig,
    pub step: u64,
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
}

impl<F: Scalar> AdamW<F> {
    pub fn new(config: AdamWConfig, params: &ParamStore<F>) -> Self {
        let zeros: Vec<Tensor<F>> = params.iter().map(|(_, p)| p.value.zeros_like()).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(
        &mut self,
        params: &mut ParamStore<F>,
        grads: &Gradients<F>,
        lr: f64,
    ) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer state for {} parameters, got {} gradients for {}",
                self.m.len(),
                grads.len(),
                params.len()
            )));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (F::lit(c.beta1), F::lit(c.beta2));
        let (lr_f, decay) = (F::lit(lr), F::lit(1.0 - lr * c.weight_decay));
        let (inv_bc1, inv_bc2, eps) = (F::lit(1.0 / bc1), F::lit(1.0 / bc2), F::lit(c.eps));
        let ids: Vec<_> = params.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let g = grads.get(id);
            let p = &mut params.get_mut(id).value;
            if g.shape() != p.shape() {
                return Err(Error::shape(p.shape(), g.shape(), "AdamW gradient"));
            }
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            for (((pi, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *pi *= decay;
                *mi = b1 * *mi + (F::one() - b1) * gi;
                *vi = b2 * *vi + (F::one() - b2) * gi * gi;
                let mhat = *mi * inv_bc1;
                let vhat = *vi * inv_bc2;
                *pi -= lr_f * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Step learning rate: `lr0 · 0.5^floor(epoch / halving_period)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub lr0: f64,
    pub halving_period: usize,
}

impl Schedule {
    /// Initial rate 1e-4 halved every 50 epochs.
    pub const FULL_SCALE: Schedule = Schedule {
        lr0: 1e-4,
        halving_period: 50,
    };

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * 0.5f64.powi((epoch / self.halving_period.max(1)) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Graph;

    fn store(v: &[f64]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("p", Tensor::from_f64(vec![v.len()], v).unwrap())
            .unwrap();
        s
    }

    fn grads_of(s: &ParamStore<f64>, scale: f64) -> Gradients<f64> {
        let g = Graph::new();
        let id = s.id("p").unwrap();
        let loss = g.param(s, id).affine(scale, 0.0).sum_all();
        g.backward(loss, s).unwrap()
    }

    #[test]
    fn decay_only_when_gradient_is_zero() {
        let mut s = store(&[2.0, -4.0]);
        let grads = grads_of(&s, 0.0);
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        opt.update(&mut s, &grads, 0.1).unwrap();
        let p = s.value(s.id("p").unwrap()).data().to_vec();
        assert!((p[0] - 2.0 * 0.999).abs() < 1e-15 && (p[1] + 4.0 * 0.999).abs() < 1e-15);

        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut s = store(&[2.0]);
        let mut opt = AdamW::new(cfg, &s);
        let grads = grads_of(&s, 0.0);
        opt.update(&mut s, &grads, 0.1).unwrap();
        assert_eq!(s.value(s.id("p").unwrap()).data(), &[2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = g, v̂ = g², step = lr·g/(|g|+ε)
        let mut s = store(&[1.0]);
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        let grads = grads_of(&s, 0.5);
        opt.update(&mut s, &grads, 1e-3).unwrap();
        let expect = 1.0 * (1.0 - 1e-3 * 1e-2) - 1e-3 * 0.5 / (0.5 + 1e-8);
        assert!((s.value(s.id("p").unwrap()).data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn full_scale_schedule() {
        assert_eq!(Schedule::FULL_SCALE.lr_at(0), 1e-4);
        assert_eq!(Schedule::FULL_SCALE.lr_at(49), 1e-4);
        assert_eq!(Schedule::FULL_SCALE.lr_at(50), 5e-5);
        assert_eq!(Schedule::FULL_SCALE.lr_at(100), 2.5e-5);
    }
}
