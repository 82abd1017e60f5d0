use crate::error::{shape_err, Result};
use crate::tensor::{Backward, Scalar, Tape, Tensor, Var};

use super::activation::sigmoid;

struct L1Back;

impl<T: Scalar> Backward<T> for L1Back {
    fn backward(&self, x: &[&Tensor<T>], _: &Tensor<T>, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let n = T::from_usize(x[0].len()).expect("length fits");
        let scale = g[0] / n;
        let sign: Vec<T> = x[0]
            .data()
            .iter()
            .zip(x[1].data())
            .map(|(&p, &t)| {
                if p > t {
                    scale
                } else if p < t {
                    -scale
                } else {
                    T::zero()
                }
            })
            .collect();
        let neg = needs[1].then(|| sign.iter().map(|&v| -v).collect());
        vec![needs[0].then_some(sign), neg]
    }
}

struct BceBack;

impl<T: Scalar> Backward<T> for BceBack {
    fn backward(&self, x: &[&Tensor<T>], _: &Tensor<T>, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let n = T::from_usize(x[0].len()).expect("length fits");
        let scale = g[0] / n;
        let (logits, labels) = (x[0].data(), x[1].data());
        vec![
            needs[0].then(|| {
                logits
                    .iter()
                    .zip(labels)
                    .map(|(&z, &y)| (sigmoid(z) - y) * scale)
                    .collect()
            }),
            needs[1].then(|| logits.iter().map(|&z| -z * scale).collect()),
        ]
    }
}

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

impl<T: Scalar> Tape<T> {
    /// Mean absolute error.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        same_shape(self, pred, target, "l1_loss")?;
        let (p, t) = (self.value(pred), self.value(target));
        let n = T::from_usize(p.len()).expect("length fits");
        let total = p
            .data()
            .iter()
            .zip(t.data())
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b).abs());
        Ok(self.push("l1_loss", &[pred, target], Tensor::scalar(total / n), L1Back))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `labels`, in
    /// the form `max(z,0) − z·y + ln(1 + e^{−|z|})`, finite for any finite
    /// logit.
    pub fn bce_with_logits(&mut self, logits: Var, labels: Var) -> Result<Var> {
        same_shape(self, logits, labels, "bce_with_logits")?;
        let (z, y) = (self.value(logits), self.value(labels));
        let n = T::from_usize(z.len()).expect("length fits");
        let total = z.data().iter().zip(y.data()).fold(T::zero(), |acc, (&z, &y)| {
            acc + z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p()
        });
        Ok(self.push(
            "bce_with_logits",
            &[logits, labels],
            Tensor::scalar(total / n),
            BceBack,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec1(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn l1_values_and_grad() {
        let mut tape = Tape::new();
        let p = tape.param(vec1(&[2.0, 1.0]));
        let t = tape.constant(vec1(&[1.0, 3.0]));
        let l = tape.l1_loss(p, t).unwrap();
        assert_eq!(tape.value(l).item(), 1.5);
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(p).unwrap(), &[0.5, -0.5]);

        let mut tape = Tape::new();
        let p = tape.param(vec1(&[0.3, 0.4]));
        let t = tape.constant(vec1(&[0.3, 0.4]));
        let l = tape.l1_loss(p, t).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(p).unwrap(), &[0.0, 0.0]);
    }

    fn bce(z: &[f64], y: &[f64]) -> f64 {
        let mut tape = Tape::new();
        let a = tape.constant(vec1(z));
        let b = tape.constant(vec1(y));
        let l = tape.bce_with_logits(a, b).unwrap();
        tape.value(l).item()
    }

    #[test]
    fn bce_reference_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((bce(&[0.0], &[1.0]) - ln2).abs() < 1e-15);
        assert!(bce(&[30.0], &[1.0]) < 1e-12);
        assert!((bce(&[0.0, 0.0], &[1.0, 0.0]) - ln2).abs() < 1e-15);
    }

    #[test]
    fn bce_matches_naive_and_stays_finite() {
        let z: Vec<f64> = (0..41).map(|i| -10.0 + 0.5 * i as f64).collect();
        let y: Vec<f64> = (0..41).map(|i| (i % 3) as f64 / 2.0).collect();
        let naive = -z
            .iter()
            .zip(&y)
            .map(|(&z, &y)| {
                let s = 1.0 / (1.0 + (-z).exp());
                y * s.ln() + (1.0 - y) * (1.0 - s).ln()
            })
            .sum::<f64>()
            / z.len() as f64;
        assert!((bce(&z, &y) - naive).abs() < 1e-6);
        let v = bce(&[1000.0, -1000.0], &[0.0, 1.0]);
        assert!(v.is_finite() && (v - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        let mut tape = Tape::new();
        let a = tape.constant(vec1(&[1.0]));
        let b = tape.constant(vec1(&[1.0, 2.0]));
        assert!(tape.l1_loss(a, b).is_err());
        assert!(tape.bce_with_logits(a, b).is_err());
    }
}
