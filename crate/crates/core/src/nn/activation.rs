use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Backward, Scalar, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    /// Negative-side slope in (0, 1).
    LeakyRelu(f64),
    Sigmoid,
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

struct ActivationBack(Activation);

impl<T: Scalar> Backward<T> for ActivationBack {
    fn backward(&self, x: &[&Tensor<T>], y: &Tensor<T>, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        if !needs[0] {
            return vec![None];
        }
        let gx = match self.0 {
            Activation::Relu => x[0]
                .data()
                .iter()
                .zip(g)
                .map(|(&v, &gv)| if v > T::zero() { gv } else { T::zero() })
                .collect(),
            Activation::LeakyRelu(slope) => {
                let slope = T::from_f64_lossy(slope);
                x[0].data()
                    .iter()
                    .zip(g)
                    .map(|(&v, &gv)| if v > T::zero() { gv } else { gv * slope })
                    .collect()
            }
            Activation::Sigmoid => y
                .data()
                .iter()
                .zip(g)
                .map(|(&s, &gv)| gv * s * (T::one() - s))
                .collect(),
        };
        vec![Some(gx)]
    }
}

impl<T: Scalar> Tape<T> {
    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let (name, f): (&'static str, Box<dyn Fn(T) -> T>) = match kind {
            Activation::Relu => ("relu", Box::new(|v: T| v.max(T::zero()))),
            Activation::LeakyRelu(slope) => {
                if !(slope > 0.0 && slope < 1.0) {
                    return Err(Error::Param(format!("leaky relu slope {slope} not in (0,1)")));
                }
                let s = T::from_f64_lossy(slope);
                ("leaky_relu", Box::new(move |v: T| if v > T::zero() { v } else { v * s }))
            }
            Activation::Sigmoid => ("sigmoid", Box::new(sigmoid)),
        };
        let xv = self.value(x);
        let out = Tensor::from_vec(xv.shape(), xv.data().iter().map(|&v| f(v)).collect())?;
        Ok(self.push(name, &[x], out, ActivationBack(kind)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu).expect("relu is total")
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid).expect("sigmoid is total")
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        self.activation(x, Activation::LeakyRelu(slope))
    }
}
