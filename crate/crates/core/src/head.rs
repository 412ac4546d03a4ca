//! Light classification head over pooled RoI features: a hidden affine layer
//! with ReLU, then per-class sigmoid scores and per-class box deltas.

use crate::anchors::BoxDelta;
use crate::error::{contract, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, WeightLoader};

/// Dense layer `y = W x + b` with `W` stored row-major as `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub inputs: usize,
}

impl<T: Scalar> Affine<T> {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Self {
            weight: vec![T::zero(); outputs * inputs],
            bias: vec![T::zero(); outputs],
            inputs,
        }
    }

    /// Reads `{prefix}.weight` as `(out, in, 1, 1)` and `{prefix}.bias`.
    pub fn load(w: &mut WeightLoader<'_>, prefix: &str, inputs: usize, outputs: usize) -> Result<Self> {
        Ok(Self {
            weight: w.tensor(&format!("{prefix}.weight"), [outputs, inputs, 1, 1])?.into_data(),
            bias: w.vector(&format!("{prefix}.bias"), outputs)?,
            inputs,
        })
    }

    pub fn outputs(&self) -> usize {
        self.bias.len()
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        contract!(
            x.len() == self.inputs,
            "affine layer expects {} inputs, got {}",
            self.inputs,
            x.len()
        );
        Ok(self
            .weight
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| {
                let acc = row.iter().zip(x).fold(b.widen(), |acc, (w, v)| acc + w.widen() * v.widen());
                T::narrow(acc)
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams<T> {
    pub fc1: Affine<T>,
    pub cls: Affine<T>,
    pub reg: Affine<T>,
}

/// Per-class scores in `[0, 1]` and refinement deltas for one RoI.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput<T> {
    pub scores: Vec<T>,
    pub deltas: Vec<BoxDelta<T>>,
}

impl<T: Scalar> HeadParams<T> {
    pub fn zeros(inputs: usize, hidden: usize, classes: usize) -> Self {
        Self {
            fc1: Affine::zeros(hidden, inputs),
            cls: Affine::zeros(classes, hidden),
            reg: Affine::zeros(5 * classes, hidden),
        }
    }

    /// Reads `head.{fc1,cls,reg}.{weight,bias}`.
    pub fn load(w: &mut WeightLoader<'_>, inputs: usize, hidden: usize, classes: usize) -> Result<Self> {
        Ok(Self {
            fc1: Affine::load(w, "head.fc1", inputs, hidden)?,
            cls: Affine::load(w, "head.cls", hidden, classes)?,
            reg: Affine::load(w, "head.reg", hidden, 5 * classes)?,
        })
    }

    pub fn classes(&self) -> usize {
        self.cls.outputs()
    }

    /// `pooled` is a `(1, C, rows, cols)` tensor, flattened channel-major.
    pub fn forward(&self, pooled: &Tensor<T>) -> Result<HeadOutput<T>> {
        let hidden: Vec<T> = self
            .fc1
            .forward(pooled.data())?
            .into_iter()
            .map(|v| v.max(T::zero()))
            .collect();
        let scores = self
            .cls
            .forward(&hidden)?
            .into_iter()
            .map(crate::tensor::sigmoid_scalar)
            .collect();
        let deltas = self.reg.forward(&hidden)?.chunks_exact(5).map(BoxDelta::from_slice).collect();
        Ok(HeadOutput { scores, deltas })
    }
}
