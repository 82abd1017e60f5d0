use crate::error::{shape_err, Result};
use crate::tensor::{Backward, Scalar, Tape, Tensor, Var};

struct ConcatBack {
    n: usize,
    plane: usize,
    channels: Vec<usize>,
}

impl<T: Scalar> Backward<T> for ConcatBack {
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let total: usize = self.channels.iter().sum();
        let mut offset = 0;
        let mut grads = Vec::with_capacity(self.channels.len());
        for (&c, &need) in self.channels.iter().zip(needs) {
            grads.push(need.then(|| {
                let mut gi = Vec::with_capacity(self.n * c * self.plane);
                for ni in 0..self.n {
                    let start = (ni * total + offset) * self.plane;
                    gi.extend_from_slice(&g[start..start + c * self.plane]);
                }
                gi
            }));
            offset += c;
        }
        grads
    }
}

impl<T: Scalar> Tape<T> {
    /// Concatenates `[N, Ci, H, W]` tensors along the channel axis in
    /// argument order.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return Err(shape_err!("concat of zero tensors"));
        };
        let [n, _, h, w] = self.value(first).dims4()?;
        let mut channels = Vec::with_capacity(xs.len());
        for &x in xs {
            let [ni, ci, hi, wi] = self.value(x).dims4()?;
            if (ni, hi, wi) != (n, h, w) {
                return Err(shape_err!(
                    "concat: {:?} does not match batch/spatial dims of {:?}",
                    self.shape(x),
                    self.shape(first)
                ));
            }
            channels.push(ci);
        }
        let plane = h * w;
        let total: usize = channels.iter().sum();
        let mut out = Vec::with_capacity(n * total * plane);
        for ni in 0..n {
            for (&x, &c) in xs.iter().zip(&channels) {
                let d = self.value(x).data();
                out.extend_from_slice(&d[ni * c * plane..(ni + 1) * c * plane]);
            }
        }
        let out = Tensor::from_vec(&[n, total, h, w], out)?;
        Ok(self.push("concat_channels", xs, out, ConcatBack { n, plane, channels }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_split() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::<f64>::from_vec(&[1, 1, 1, 2], vec![1.0, 2.0]).unwrap());
        let b = tape.param(Tensor::from_vec(&[1, 2, 1, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap());
        let y = tape.concat_channels(&[a, b]).unwrap();
        assert_eq!(tape.shape(y), &[1, 3, 1, 2]);
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).unwrap(), &[1.0; 2]);
        assert_eq!(tape.grad(b).unwrap(), &[1.0; 4]);
    }

    #[test]
    fn batch_interleaving() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::<f64>::from_vec(&[2, 1, 1, 1], vec![1.0, 2.0]).unwrap());
        let b = tape.constant(Tensor::from_vec(&[2, 1, 1, 1], vec![10.0, 20.0]).unwrap());
        let y = tape.concat_channels(&[a, b]).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 10.0, 2.0, 20.0]);
    }

    #[test]
    fn single_is_identity_and_mismatch_fails() {
        let mut tape = Tape::new();
        let x = Tensor::<f64>::randn(&[2, 3, 2, 2], 4, 1.0).unwrap();
        let a = tape.constant(x.clone());
        let y = tape.concat_channels(&[a]).unwrap();
        assert_eq!(tape.value(y), &x);
        let b = tape.constant(Tensor::zeros(&[2, 1, 3, 2]).unwrap());
        assert!(tape.concat_channels(&[a, b]).is_err());
    }
}
