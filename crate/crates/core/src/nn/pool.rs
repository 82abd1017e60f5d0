use crate::error::{shape_err, Result};
use crate::tensor::{Backward, Scalar, Tape, Tensor, Var};

struct MaxPoolBack {
    argmax: Vec<usize>,
}

impl<T: Scalar> Backward<T> for MaxPoolBack {
    fn backward(&self, x: &[&Tensor<T>], _: &Tensor<T>, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![needs[0].then(|| {
            let mut gx = vec![T::zero(); x[0].len()];
            for (&src, &gv) in self.argmax.iter().zip(g) {
                gx[src] = gx[src] + gv;
            }
            gx
        })]
    }
}

impl<T: Scalar> Tape<T> {
    /// Max over `window × window` patches. Ties resolve to the first element
    /// in row-major order, which also receives the whole gradient.
    pub fn maxpool2d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4()?;
        if window == 0 || stride == 0 {
            return Err(shape_err!("maxpool window and stride must be positive"));
        }
        if window > h || window > w {
            return Err(shape_err!("maxpool window {window} larger than input {h}×{w}"));
        }
        if h % stride != 0 || w % stride != 0 {
            return Err(shape_err!("maxpool input {h}×{w} not divisible by stride {stride}"));
        }
        let (oh, ow) = ((h - window) / stride + 1, (w - window) / stride + 1);
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * stride * w + ox * stride;
                    for dy in 0..window {
                        for dx in 0..window {
                            let idx = base + (oy * stride + dy) * w + ox * stride + dx;
                            if xd[idx] > xd[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
        let out = Tensor::from_vec(&[n, c, oh, ow], out)?;
        Ok(self.push("maxpool2d", &[x], out, MaxPoolBack { argmax }))
    }
}
