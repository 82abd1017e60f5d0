use crate::error::{Error, Result};

use super::{Scalar, Tensor};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule of a recorded op.
///
/// Given the op's inputs, its output, and dL/d(output), returns dL/d(input)
/// for each input whose `needs` flag is set (and `None` elsewhere).
pub trait Backward<T>: Send + Sync {
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad_out: &[T],
        needs: &[bool],
    ) -> Vec<Option<Vec<T>>>;
}

struct Node<T> {
    value: Tensor<T>,
    inputs: Vec<Var>,
    op: Option<Box<dyn Backward<T>>>,
    name: &'static str,
}

/// Define-by-run recording of a computation. Build one per training step.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    recording: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// A tape that computes values only: every leaf is treated as constant
    /// and no backward rules are kept.
    pub fn no_grad() -> Self {
        Self {
            nodes: Vec::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf, keeping the tensor's own `requires_grad` flag.
    pub fn leaf(&mut self, mut t: Tensor<T>) -> Var {
        t.requires_grad &= self.recording;
        self.nodes.push(Node {
            value: t,
            inputs: Vec::new(),
            op: None,
            name: "leaf",
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t.with_requires_grad(true))
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    pub fn take_value(&mut self, v: Var) -> Tensor<T> {
        self.nodes[v.0].value.clone()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    /// Name of the op that produced `v`.
    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].name
    }

    /// Appends the result of an op. `op` is dropped when nothing upstream
    /// needs a gradient or the tape is not recording.
    pub fn push(
        &mut self,
        name: &'static str,
        inputs: &[Var],
        mut output: Tensor<T>,
        op: impl Backward<T> + 'static,
    ) -> Var {
        let needs_grad = self.recording && inputs.iter().any(|&v| self.requires_grad(v));
        output.requires_grad = needs_grad;
        output.grad = None;
        let op: Option<Box<dyn Backward<T>>> = if needs_grad {
            Some(Box::new(op))
        } else {
            None
        };
        self.nodes.push(Node {
            value: output,
            inputs: inputs.to_vec(),
            op,
            name,
        });
        Var(self.nodes.len() - 1)
    }

    /// Propagates d(loss)/d(node) to every `requires_grad` node, adding to
    /// any gradient already present.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.requires_grad(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Some(op) = &node.op {
                let inputs: Vec<&Tensor<T>> =
                    node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
                let needs: Vec<bool> = inputs.iter().map(|t| t.requires_grad).collect();
                let input_grads = op.backward(&inputs, &node.value, &g, &needs);
                debug_assert_eq!(input_grads.len(), node.inputs.len());
                for (v, ig) in node.inputs.iter().zip(input_grads) {
                    let Some(ig) = ig else { continue };
                    match &mut grads[v.0] {
                        Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, &b)| *a = *a + b),
                        slot => *slot = Some(ig),
                    }
                }
            }
            self.nodes[i].value.accumulate_grad(&g);
        }
        Ok(())
    }

    /// First op node holding a NaN or infinity, with its op name. Falls back
    /// to the first non-finite leaf when no op produced one.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        let mut bad = self.nodes.iter().enumerate().filter(|(_, n)| !n.value.is_finite());
        let first = bad.next();
        match first {
            Some((_, n)) if n.name == "leaf" => bad
                .find(|(_, n)| n.name != "leaf")
                .or(first)
                .map(|(i, n)| (i, n.name)),
            other => other.map(|(i, n)| (i, n.name)),
        }
    }

    /// Fails with [`Error::NonFinite`] naming the first offending op.
    pub fn ensure_finite(&self) -> Result<()> {
        match self.first_non_finite() {
            Some((node, op)) => Err(Error::NonFinite { op, node }),
            None => Ok(()),
        }
    }
}
