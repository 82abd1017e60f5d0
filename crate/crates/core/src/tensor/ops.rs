//! Elementwise arithmetic and reductions.

use crate::error::{shape_err, Error, Result};

use super::{Backward, Scalar, Tape, Tensor, Var};

fn same_shape<T: Scalar>(tape: &Tape<T>, a: Var, b: Var, op: &str) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return Err(shape_err!(
            "{op}: shapes {:?} and {:?} differ",
            tape.shape(a),
            tape.shape(b)
        ));
    }
    Ok(())
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape(), data).expect("shape preserved")
}

struct AddBack {
    sign_b: f64,
}

impl<T: Scalar> Backward<T> for AddBack {
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let sb = T::from_f64_lossy(self.sign_b);
        vec![
            needs[0].then(|| g.to_vec()),
            needs[1].then(|| g.iter().map(|&v| v * sb).collect()),
        ]
    }
}

struct MulBack;

impl<T: Scalar> Backward<T> for MulBack {
    fn backward(&self, x: &[&Tensor<T>], _: &Tensor<T>, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let prod = |other: &Tensor<T>| g.iter().zip(other.data()).map(|(&a, &b)| a * b).collect();
        vec![needs[0].then(|| prod(x[1])), needs[1].then(|| prod(x[0]))]
    }
}

struct ScaleBack<T>(T);

impl<T: Scalar> Backward<T> for ScaleBack<T> {
    fn backward(&self, _: &[&Tensor<T>], _: &Tensor<T>, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![needs[0].then(|| g.iter().map(|&v| v * self.0).collect())]
    }
}

/// Broadcast of a scalar upstream gradient times a constant factor.
struct ReduceBack<T> {
    factor: T,
}

impl<T: Scalar> Backward<T> for ReduceBack<T> {
    fn backward(&self, x: &[&Tensor<T>], _: &Tensor<T>, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![needs[0].then(|| vec![g[0] * self.factor; x[0].len()])]
    }
}

impl<T: Scalar> Tape<T> {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "add")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push("add", &[a, b], out, AddBack { sign_b: 1.0 }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "sub")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push("sub", &[a, b], out, AddBack { sign_b: -1.0 }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "mul")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push("mul", &[a, b], out, MulBack))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let x = self.value(a);
        let out = Tensor::from_vec(x.shape(), x.data().iter().map(|&v| v * s).collect())
            .expect("shape preserved");
        self.push("scale", &[a], out, ScaleBack(s))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().fold(T::zero(), |acc, &v| acc + v);
        self.push("sum", &[a], Tensor::scalar(total), ReduceBack { factor: T::one() })
    }

    /// Mean over all elements, as a one-element tensor.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::Shape("mean of empty tensor".into()));
        }
        let n = T::from_usize(x.len()).expect("length fits");
        let total = x.data().iter().fold(T::zero(), |acc, &v| acc + v);
        Ok(self.push(
            "mean",
            &[a],
            Tensor::scalar(total / n),
            ReduceBack { factor: T::one() / n },
        ))
    }
}
