//! Finite-difference verification of every differentiable op and of the
//! generator end to end, in double precision.

use serde::Serialize;

use crate::error::Result;
use crate::model::{generator_forward, Bound, GeneratorConfig, ModelConfig};
use crate::nn::{Activation, BatchNormState, ConvSpec, NormMode};
use crate::rng::RngStream;
use crate::tensor::{finite_diff_check_probes, Tape, Tensor, Var};

/// Threshold for single ops.
pub const OP_TOLERANCE: f64 = 1e-4;
/// Threshold for the end-to-end generator check.
pub const END_TO_END_TOLERANCE: f64 = 1e-3;
/// Central-difference step.
pub const STEP: f64 = 1e-6;
/// Parameters probed by the end-to-end check.
pub const END_TO_END_PROBES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradRow {
    pub name: String,
    pub probes: usize,
    pub max_rel_error: f64,
    pub threshold: f64,
    pub passed: bool,
}

struct Suite {
    rng: RngStream,
    rows: Vec<GradRow>,
}

/// Random values in `±[lo, hi]`, kept away from zero so ReLU-type kinks
/// are never within a step of an input.
fn away_from_zero(rng: &mut RngStream, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.uniform(lo, hi);
            if rng.index(2) == 0 { m } else { -m }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("shape matches")
}

fn normal(rng: &mut RngStream, shape: &[usize], std: f64) -> Tensor<f64> {
    Tensor::randn_from(shape, rng, std).expect("valid shape")
}

/// `sum(y ⊙ r)` for a fixed random `r`, so every output element matters
/// with a distinct weight.
fn project(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let r = Tensor::randn(tape.shape(y), seed, 1.0)?;
    let r = tape.constant(r);
    let p = tape.mul(y, r)?;
    Ok(tape.sum(p))
}

impl Suite {
    fn record(&mut self, name: &str, probes: usize, err: f64, threshold: f64) {
        self.rows.push(GradRow {
            name: name.into(),
            probes,
            max_rel_error: err,
            threshold,
            passed: err < threshold,
        });
    }

    /// Checks every element of every input of `f`.
    fn check<F>(&mut self, name: &str, inputs: Vec<Tensor<f64>>, mut f: F) -> Result<()>
    where
        F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
    {
        let probes: Vec<(usize, usize)> = inputs
            .iter()
            .enumerate()
            .flat_map(|(i, t)| (0..t.len()).map(move |j| (i, j)))
            .collect();
        let seed = self.rng.next_u64();
        let err = finite_diff_check_probes(
            |tape, v| {
                let y = f(tape, v)?;
                if tape.value(y).len() == 1 { Ok(y) } else { project(tape, y, seed) }
            },
            &inputs,
            &probes,
            STEP,
        )?;
        self.record(name, probes.len(), err, OP_TOLERANCE);
        Ok(())
    }

    fn conv_cases(&mut self) -> Result<()> {
        let cases = [
            ("conv2d 3x3 pad 1", ConvSpec::same(2, 3, 3, 3), [2, 2, 5, 6]),
            ("conv2d 4x4 stride 2 pad 1", ConvSpec::new(2, 3, 4, 4).stride(2).padding(1, 1), [1, 2, 8, 6]),
            ("conv2d 1x3", ConvSpec::same(3, 2, 1, 3), [1, 3, 4, 5]),
        ];
        for (name, spec, xs) in cases {
            let x = normal(&mut self.rng, &xs, 1.0);
            let w = normal(&mut self.rng, &[spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w], 0.5);
            let b = normal(&mut self.rng, &[spec.out_channels], 0.5);
            self.check(name, vec![x, w, b], |t, v| t.conv2d(v[0], v[1], v[2], &spec))?;
        }
        let spec = ConvSpec::new(3, 2, 2, 2).stride(2);
        let x = normal(&mut self.rng, &[2, 3, 3, 4], 1.0);
        let w = normal(&mut self.rng, &[3, 2, 2, 2], 0.5);
        let b = normal(&mut self.rng, &[2], 0.5);
        self.check("conv_transpose2d 2x2 stride 2", vec![x, w, b], |t, v| {
            t.conv_transpose2d(v[0], v[1], v[2], &spec)
        })?;
        let spec = ConvSpec::new(2, 3, 3, 3).stride(2).padding(1, 1);
        let x = normal(&mut self.rng, &[1, 2, 3, 3], 1.0);
        let w = normal(&mut self.rng, &[2, 3, 3, 3], 0.5);
        let b = normal(&mut self.rng, &[3], 0.5);
        self.check("conv_transpose2d 3x3 stride 2 pad 1", vec![x, w, b], |t, v| {
            t.conv_transpose2d(v[0], v[1], v[2], &spec)
        })
    }

    fn elementwise_cases(&mut self) -> Result<()> {
        let shape = [2, 3, 4];
        let (a, b) = (normal(&mut self.rng, &shape, 1.0), normal(&mut self.rng, &shape, 1.0));
        self.check("add", vec![a.clone(), b.clone()], |t, v| t.add(v[0], v[1]))?;
        self.check("sub", vec![a.clone(), b.clone()], |t, v| t.sub(v[0], v[1]))?;
        self.check("mul", vec![a.clone(), b], |t, v| t.mul(v[0], v[1]))?;
        self.check("scale", vec![a.clone()], |t, v| Ok(t.scale(v[0], -1.7)))?;
        self.check("sum", vec![a.clone()], |t, v| Ok(t.sum(v[0])))?;
        self.check("mean", vec![a], |t, v| t.mean(v[0]))?;

        let x = away_from_zero(&mut self.rng, &[2, 3, 4, 4], 0.05, 2.0);
        self.check("relu", vec![x.clone()], |t, v| t.activation(v[0], Activation::Relu))?;
        self.check("leaky_relu 0.2", vec![x.clone()], |t, v| t.activation(v[0], Activation::LeakyRelu(0.2)))?;
        self.check("sigmoid", vec![x], |t, v| t.activation(v[0], Activation::Sigmoid))?;

        // Distinct values spaced well beyond the step keep the argmax fixed.
        let mut vals: Vec<f64> = (0..2 * 2 * 6 * 6).map(|i| i as f64 * 0.01).collect();
        self.rng.shuffle(&mut vals);
        let x = Tensor::from_vec(&[2, 2, 6, 6], vals)?;
        self.check("maxpool2d 2x2", vec![x.clone()], |t, v| t.maxpool2d(v[0], 2, 2))?;
        self.check("maxpool2d 3x3 stride 3", vec![x], |t, v| t.maxpool2d(v[0], 3, 3))?;

        let xs = [
            normal(&mut self.rng, &[2, 1, 3, 3], 1.0),
            normal(&mut self.rng, &[2, 2, 3, 3], 1.0),
            normal(&mut self.rng, &[2, 3, 3, 3], 1.0),
        ];
        self.check("concat_channels", xs.to_vec(), |t, v| t.concat_channels(v))
    }

    fn norm_cases(&mut self) -> Result<()> {
        let x = normal(&mut self.rng, &[3, 2, 3, 4], 1.5);
        let g = normal(&mut self.rng, &[2], 1.0);
        let b = normal(&mut self.rng, &[2], 1.0);
        self.check("batchnorm2d train", vec![x.clone(), g.clone(), b.clone()], |t, v| {
            let mut state = BatchNormState::new(2);
            t.batchnorm2d(v[0], v[1], v[2], &mut state)
        })?;
        let mut eval_state = BatchNormState::new(2);
        eval_state.running_mean = vec![0.3, -0.2];
        eval_state.running_var = vec![1.7, 0.4];
        eval_state.mode = NormMode::Eval;
        self.check("batchnorm2d eval", vec![x, g, b], move |t, v| {
            let mut state = eval_state.clone();
            t.batchnorm2d(v[0], v[1], v[2], &mut state)
        })
    }

    fn loss_cases(&mut self) -> Result<()> {
        let pred = normal(&mut self.rng, &[2, 3, 4], 1.0);
        let gap = away_from_zero(&mut self.rng, &[2, 3, 4], 0.05, 1.0);
        let target = Tensor::from_vec(
            &[2, 3, 4],
            pred.data().iter().zip(gap.data()).map(|(p, g)| p + g).collect(),
        )?;
        self.check("l1_loss", vec![pred, target], |t, v| t.l1_loss(v[0], v[1]))?;
        let logits = normal(&mut self.rng, &[2, 1, 3, 3], 3.0);
        let labels = Tensor::uniform_from(&[2, 1, 3, 3], &mut self.rng, 0.0, 1.0)?;
        self.check("bce_with_logits", vec![logits, labels], |t, v| t.bce_with_logits(v[0], v[1]))
    }

    fn block_cases(&mut self) -> Result<()> {
        let cfg = ModelConfig::with_width(4, 1)?;
        let params = cfg.init_params::<f64>(self.rng.next_u64())?;
        let names: Vec<String> = params.names_with_prefix("gen.enc.0.inc").cloned().collect();
        let mut inputs: Vec<Tensor<f64>> = names.iter().map(|n| normal(&mut self.rng, params.get(n).expect("named").shape(), 0.5)).collect();
        inputs.push(normal(&mut self.rng, &[1, 3, 5, 5], 1.0));
        let n = names.len();
        self.check("inception_block", inputs, |t, v| {
            let bound = Bound {
                vars: names.iter().cloned().zip(v[..n].iter().copied()).collect(),
            };
            crate::model::inception_block(t, &bound, "gen.enc.0.inc", v[n], 4)
        })
    }

    /// L1 loss of a width-4, one-stage generator on a 1×3×8×8 input,
    /// probing [`END_TO_END_PROBES`] random parameter coordinates.
    fn end_to_end(&mut self) -> Result<()> {
        let gcfg = GeneratorConfig::new(4, 1)?;
        let names: Vec<String> = gcfg.param_specs().into_iter().map(|s| s.name).collect();
        // Larger than the training initializer so that no gradient is
        // near the relative-error floor.
        let inputs: Vec<Tensor<f64>> = gcfg
            .param_specs()
            .iter()
            .map(|s| normal(&mut self.rng, &s.shape, 0.4))
            .collect();
        let x = Tensor::uniform_from(&[1, 3, 8, 8], &mut self.rng, 0.0, 1.0)?;
        let target = Tensor::uniform_from(&[1, 3, 8, 8], &mut self.rng, 0.0, 1.0)?;
        let total: usize = inputs.iter().map(Tensor::len).sum();
        let mut flat: Vec<(usize, usize)> = inputs
            .iter()
            .enumerate()
            .flat_map(|(i, t)| (0..t.len()).map(move |j| (i, j)))
            .collect();
        self.rng.shuffle(&mut flat);
        flat.truncate(END_TO_END_PROBES.min(total));
        let err = finite_diff_check_probes(
            |t, v| {
                let bound = Bound {
                    vars: names.iter().cloned().zip(v.iter().copied()).collect(),
                };
                let xv = t.constant(x.clone());
                let tv = t.constant(target.clone());
                let y = generator_forward(t, &bound, &gcfg, xv)?;
                t.l1_loss(y, tv)
            },
            &inputs,
            &flat,
            STEP,
        )?;
        self.record("generator end-to-end (l1)", flat.len(), err, END_TO_END_TOLERANCE);
        Ok(())
    }
}

/// Runs every check; one row per case.
pub fn run_suite(seed: u64) -> Result<Vec<GradRow>> {
    let mut s = Suite {
        rng: RngStream::new(seed, 0x6772_6164),
        rows: Vec::new(),
    };
    s.elementwise_cases()?;
    s.conv_cases()?;
    s.norm_cases()?;
    s.loss_cases()?;
    s.block_cases()?;
    s.end_to_end()?;
    Ok(s.rows)
}

/// Fixed-width text table of `rows`.
pub fn format_table(rows: &[GradRow]) -> String {
    let mut out = format!("{:<36} {:>7} {:>13} {:>10}  status\n", "check", "probes", "max rel err", "threshold");
    for r in rows {
        out.push_str(&format!(
            "{:<36} {:>7} {:>13.3e} {:>10.0e}  {}\n",
            r.name,
            r.probes,
            r.max_rel_error,
            r.threshold,
            if r.passed { "ok" } else { "FAIL" }
        ));
    }
    out
}
