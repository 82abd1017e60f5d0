use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Backward, Scalar, Tape, Tensor, Var};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMode {
    Train,
    Eval,
}

/// Running statistics and hyperparameters of one batch-norm layer. The
/// affine `gamma`/`beta` live on the tape as ordinary parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
    pub mode: NormMode,
}

impl<T: Scalar> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
            mode: NormMode::Train,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }
}

struct BatchNormBack<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    dims: [usize; 4],
    train: bool,
}

impl<T: Scalar> Backward<T> for BatchNormBack<T> {
    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let [n, c, h, w] = self.dims;
        let plane = h * w;
        let m = T::from_usize(n * plane).expect("count fits");
        let gamma = inputs[1].data();
        let mut sum_g = vec![T::zero(); c];
        let mut sum_gx = vec![T::zero(); c];
        for ni in 0..n {
            for ci in 0..c {
                let off = (ni * c + ci) * plane;
                for k in off..off + plane {
                    sum_g[ci] = sum_g[ci] + g[k];
                    sum_gx[ci] = sum_gx[ci] + g[k] * self.xhat[k];
                }
            }
        }
        let gx = needs[0].then(|| {
            let mut gx = vec![T::zero(); g.len()];
            for ni in 0..n {
                for ci in 0..c {
                    let off = (ni * c + ci) * plane;
                    let k_scale = gamma[ci] * self.inv_std[ci];
                    for k in off..off + plane {
                        gx[k] = if self.train {
                            k_scale / m * (m * g[k] - sum_g[ci] - self.xhat[k] * sum_gx[ci])
                        } else {
                            k_scale * g[k]
                        };
                    }
                }
            }
            gx
        });
        vec![gx, needs[1].then(|| sum_gx.clone()), needs[2].then(|| sum_g.clone())]
    }
}

impl<T: Scalar> Tape<T> {
    /// Per-channel batch normalization of `x: [N, C, H, W]` with affine
    /// `gamma`, `beta: [C]`. Train mode normalizes with batch statistics and
    /// folds them into the running estimates; eval mode uses the estimates.
    pub fn batchnorm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        state: &mut BatchNormState<T>,
    ) -> Result<Var> {
        let dims @ [n, c, h, w] = self.value(x).dims4()?;
        if state.channels() != c || self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(shape_err!("batchnorm over {c} channels got mismatched parameters"));
        }
        let plane = h * w;
        let count = n * plane;
        let train = state.mode == NormMode::Train;
        if train && count < 2 {
            return Err(Error::Contract(format!(
                "batchnorm train mode needs N·H·W ≥ 2, got {count}"
            )));
        }
        let eps = T::from_f64_lossy(state.eps);
        let xd = self.value(x).data();
        let (gd, bd) = (self.value(gamma).data(), self.value(beta).data());

        let (mean, var) = if train {
            let m = T::from_usize(count).expect("count fits");
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ni in 0..n {
                for ci in 0..c {
                    let off = (ni * c + ci) * plane;
                    mean[ci] = xd[off..off + plane].iter().fold(mean[ci], |a, &v| a + v);
                }
            }
            mean.iter_mut().for_each(|v| *v = *v / m);
            for ni in 0..n {
                for ci in 0..c {
                    let off = (ni * c + ci) * plane;
                    var[ci] = xd[off..off + plane].iter().fold(var[ci], |a, &v| {
                        let d = v - mean[ci];
                        a + d * d
                    });
                }
            }
            var.iter_mut().for_each(|v| *v = *v / m);
            let mom = T::from_f64_lossy(state.momentum);
            let unbias = m / (m - T::one());
            for ci in 0..c {
                state.running_mean[ci] = (T::one() - mom) * state.running_mean[ci] + mom * mean[ci];
                state.running_var[ci] =
                    (T::one() - mom) * state.running_var[ci] + mom * var[ci] * unbias;
            }
            (mean, var)
        } else {
            (state.running_mean.clone(), state.running_var.clone())
        };

        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); xd.len()];
        let mut out = vec![T::zero(); xd.len()];
        for ni in 0..n {
            for ci in 0..c {
                let off = (ni * c + ci) * plane;
                for k in off..off + plane {
                    xhat[k] = (xd[k] - mean[ci]) * inv_std[ci];
                    out[k] = gd[ci] * xhat[k] + bd[ci];
                }
            }
        }
        let out = Tensor::from_vec(&dims, out)?;
        Ok(self.push(
            "batchnorm2d",
            &[x, gamma, beta],
            out,
            BatchNormBack {
                xhat,
                inv_std,
                dims,
                train,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(x: Tensor<f64>, state: &mut BatchNormState<f64>, beta: f64) -> Tensor<f64> {
        let c = x.shape()[1];
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let g = tape.constant(Tensor::ones(&[c]).unwrap());
        let b = tape.constant(Tensor::full(&[c], beta).unwrap());
        let y = tape.batchnorm2d(xv, g, b, state).unwrap();
        tape.value(y).clone()
    }

    #[test]
    fn train_mode_standardizes() {
        let x = Tensor::<f64>::randn(&[3, 2, 4, 4], 5, 3.0).unwrap();
        let mut st = BatchNormState::new(2);
        let y = run(x, &mut st, 0.0);
        let d = y.data();
        for ci in 0..2 {
            let vals: Vec<f64> = (0..3)
                .flat_map(|n| d[(n * 2 + ci) * 16..(n * 2 + ci + 1) * 16].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-5, "{mean}");
            assert!((var - 1.0).abs() < 1e-4, "{var}");
        }
        assert!(st.running_var.iter().all(|&v| v >= 0.0));
        assert!(st.running_mean.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn constant_channel_maps_to_beta() {
        let x = Tensor::<f64>::full(&[2, 1, 3, 3], 4.2).unwrap();
        let y = run(x, &mut BatchNormState::new(1), 0.7);
        assert!(y.data().iter().all(|&v| (v - 0.7).abs() < 1e-9));
    }

    #[test]
    fn eval_with_unit_stats_is_identity() {
        let x = Tensor::<f64>::randn(&[1, 2, 3, 3], 8, 1.0).unwrap();
        let mut st = BatchNormState::new(2);
        st.mode = NormMode::Eval;
        let y = run(x.clone(), &mut st, 0.0);
        let scale = 1.0 / (1.0 + BN_EPS).sqrt();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b * scale).abs() < 1e-15);
        }
        assert_eq!(st.running_mean, vec![0.0, 0.0]);
    }

    #[test]
    fn single_value_batch_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(&[1, 1, 1, 1]).unwrap());
        let g = tape.constant(Tensor::ones(&[1]).unwrap());
        let b = tape.constant(Tensor::zeros(&[1]).unwrap());
        let r = tape.batchnorm2d(x, g, b, &mut BatchNormState::new(1));
        assert!(matches!(r, Err(Error::Contract(_))));
    }
}
