use crate::error::Result;
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Default weight of the L1 term in the generator objective.
pub const LAMBDA_L1: f64 = 100.0;

/// Handles of the generator objective and its two components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorLoss {
    pub total: Var,
    pub adv: Var,
    pub l1: Var,
}

fn labels<T: Scalar>(tape: &mut Tape<T>, like: Var, value: T) -> Result<Var> {
    let t = Tensor::full(tape.shape(like), value)?;
    Ok(tape.constant(t))
}

/// `adv = BCE(d_fake, 1)`, `l1 = mean|fake − target|`, `total = adv + λ·l1`.
pub fn generator_loss<T: Scalar>(
    tape: &mut Tape<T>,
    d_logits_fake: Var,
    fake: Var,
    target: Var,
    lambda: f64,
) -> Result<GeneratorLoss> {
    let ones = labels(tape, d_logits_fake, T::one())?;
    let adv = tape.bce_with_logits(d_logits_fake, ones)?;
    let l1 = tape.l1_loss(fake, target)?;
    let weighted = tape.scale(l1, T::from_f64_lossy(lambda));
    let total = tape.add(adv, weighted)?;
    Ok(GeneratorLoss { total, adv, l1 })
}

/// `(BCE(real, 1) + BCE(fake, 0)) / 2`.
pub fn discriminator_loss<T: Scalar>(tape: &mut Tape<T>, d_logits_real: Var, d_logits_fake: Var) -> Result<Var> {
    let ones = labels(tape, d_logits_real, T::one())?;
    let zeros = labels(tape, d_logits_fake, T::zero())?;
    let real = tape.bce_with_logits(d_logits_real, ones)?;
    let fake = tape.bce_with_logits(d_logits_fake, zeros)?;
    let sum = tape.add(real, fake)?;
    Ok(tape.scale(sum, T::from_f64_lossy(0.5)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(tape: &mut Tape<f64>, shape: &[usize], v: f64) -> Var {
        tape.constant(Tensor::full(shape, v).unwrap())
    }

    #[test]
    fn identity_fake_with_zero_logits_is_ln2() {
        let mut tape = Tape::new();
        let d = constant(&mut tape, &[1, 1, 2, 2], 0.0);
        let f = constant(&mut tape, &[1, 3, 2, 2], 0.4);
        let t = constant(&mut tape, &[1, 3, 2, 2], 0.4);
        let l = generator_loss(&mut tape, d, f, t, LAMBDA_L1).unwrap();
        assert!((tape.value(l.total).item() - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(tape.value(l.l1).item(), 0.0);
    }

    #[test]
    fn zero_lambda_total_is_adv() {
        let mut tape = Tape::new();
        let d = constant(&mut tape, &[1, 1, 2, 2], 0.3);
        let f = constant(&mut tape, &[1, 3, 2, 2], 0.1);
        let t = constant(&mut tape, &[1, 3, 2, 2], 0.9);
        let l = generator_loss(&mut tape, d, f, t, 0.0).unwrap();
        assert_eq!(tape.value(l.total).item(), tape.value(l.adv).item());
    }

    #[test]
    fn discriminator_loss_cases() {
        let mut tape = Tape::new();
        let z = constant(&mut tape, &[1, 1, 3, 3], 0.0);
        let l = discriminator_loss(&mut tape, z, z).unwrap();
        assert!((tape.value(l).item() - std::f64::consts::LN_2).abs() < 1e-12);
        let r = constant(&mut tape, &[1, 1, 3, 3], 40.0);
        let f = constant(&mut tape, &[1, 1, 3, 3], -40.0);
        let l = discriminator_loss(&mut tape, r, f).unwrap();
        assert!(tape.value(l).item() < 1e-15);
    }
}
