use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive moment estimation over a named parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub cfg: AdamConfig,
    pub t: u64,
    pub m: BTreeMap<String, Vec<T>>,
    pub v: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// One update of every parameter named in `grads`.
    pub fn step(
        &mut self,
        params: &mut BTreeMap<String, Tensor<T>>,
        grads: &BTreeMap<String, Vec<T>>,
    ) -> Result<()> {
        self.t += 1;
        let c = self.cfg;
        let exp = i32::try_from(self.t).unwrap_or(i32::MAX);
        let bc1 = 1.0 - c.beta1.powi(exp);
        let bc2 = 1.0 - c.beta2.powi(exp);
        let f = T::from_f64_lossy;
        let (b1, b2, nb1, nb2) = (f(c.beta1), f(c.beta2), f(1.0 - c.beta1), f(1.0 - c.beta2));
        let (lr, eps, bc1, bc2) = (f(c.lr), f(c.eps), f(bc1), f(bc2));
        for (name, g) in grads {
            let p = params
                .get_mut(name)
                .ok_or_else(|| Error::Config(format!("optimizer got unknown parameter {name}")))?;
            let n = p.len();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![T::zero(); n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![T::zero(); n]);
            for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + nb1 * g;
                *v = b2 * *v + nb2 * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w = *w - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut params = BTreeMap::from([("w".to_string(), Tensor::from_vec(&[2], vec![1.0f64, 1.0]).unwrap())]);
        let grads = BTreeMap::from([("w".to_string(), vec![3.0, -0.5])]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut params, &grads).unwrap();
        let w = params["w"].data();
        assert!((w[0] - (1.0 - 2e-4)).abs() < 1e-10);
        assert!((w[1] - (1.0 + 2e-4)).abs() < 1e-10);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut params = BTreeMap::from([("w".to_string(), Tensor::from_vec(&[1], vec![3.0f64]).unwrap())]);
        let mut adam = Adam::new(AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        });
        for _ in 0..500 {
            let g = 2.0 * params["w"].data()[0];
            adam.step(&mut params, &BTreeMap::from([("w".to_string(), vec![g])])).unwrap();
        }
        assert!(params["w"].data()[0].abs() < 1e-2);
    }
}
