use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::BatchNormState;
use crate::rng::{hash_str, RngStream};
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Standard deviation of the normal initializer for kernels followed by
/// batch normalization or an output nonlinearity.
pub const INIT_STDDEV: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Zero-mean normal with the given standard deviation.
    Normal(f64),
    Zeros,
    Ones,
}

impl Init {
    /// [`INIT_STDDEV`] normal.
    pub const SMALL: Init = Init::Normal(INIT_STDDEV);

    /// Variance-preserving normal for a ReLU layer whose outputs each see
    /// `fan_in` inputs: stddev `sqrt(2 / fan_in)`.
    pub fn he(fan_in: usize) -> Init {
        Init::Normal((2.0 / fan_in as f64).sqrt())
    }
}

/// Name, shape and initializer of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub(crate) fn new(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }
}

/// Weight and bias specs of a conv layer named `prefix`.
pub(crate) fn conv_specs(prefix: &str, w_shape: [usize; 4], bias: usize, w_init: Init) -> [ParamSpec; 2] {
    [
        ParamSpec::new(format!("{prefix}.w"), &w_shape, w_init),
        ParamSpec::new(format!("{prefix}.b"), &[bias], Init::Zeros),
    ]
}

/// Named trainable tensors plus the batch-norm running statistics, keyed by
/// layer path. Iteration order is the lexicographic order of names.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub tensors: BTreeMap<String, Tensor<T>>,
    pub norms: BTreeMap<String, BatchNormState<T>>,
}

impl<T: Scalar> Default for ModelParams<T> {
    fn default() -> Self {
        Self {
            tensors: BTreeMap::new(),
            norms: BTreeMap::new(),
        }
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Draws every spec from its own stream `(seed, hash(name))`, so a
    /// tensor's initial value does not depend on which others exist.
    pub fn init(specs: &[ParamSpec], seed: u64) -> Result<Self> {
        let mut out = Self::default();
        for s in specs {
            let t = match s.init {
                Init::Normal(stddev) => {
                    let mut rng = RngStream::derive(seed, &[hash_str(&s.name)]);
                    Tensor::randn_from(&s.shape, &mut rng, stddev)?
                }
                Init::Zeros => Tensor::zeros(&s.shape)?,
                Init::Ones => Tensor::ones(&s.shape)?,
            };
            if out.tensors.insert(s.name.clone(), t.with_requires_grad(true)).is_some() {
                return Err(Error::Config(format!("duplicate parameter {}", s.name)));
            }
        }
        Ok(out)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))
    }

    pub fn names_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a String> + 'a {
        self.tensors.keys().filter(move |k| k.starts_with(prefix))
    }

    /// Total scalar count of the tensors under `prefix`.
    pub fn count(&self, prefix: &str) -> usize {
        self.tensors
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Records the tensors under `prefix` on `tape`, as trainable leaves or
    /// as constants.
    pub fn bind(&self, tape: &mut Tape<T>, prefix: &str, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(k, t)| {
                let v = if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (k.clone(), v)
            })
            .collect();
        Bound { vars }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let cast_vec = |v: &[T]| v.iter().map(|x| U::from_f64_lossy(x.as_f64())).collect();
        ModelParams {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), t.cast::<U>().with_requires_grad(true)))
                .collect(),
            norms: self
                .norms
                .iter()
                .map(|(k, s)| {
                    (
                        k.clone(),
                        BatchNormState {
                            running_mean: cast_vec(&s.running_mean),
                            running_var: cast_vec(&s.running_var),
                            momentum: s.momentum,
                            eps: s.eps,
                            mode: s.mode,
                        },
                    )
                })
                .collect(),
        }
    }
}

/// Tape handles of a bound parameter subset.
#[derive(Debug, Clone, Default)]
pub struct Bound {
    pub vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("parameter {name} is not bound")))
    }

    pub fn extend(&mut self, other: Bound) {
        self.vars.extend(other.vars);
    }
}
