//! Small single-shot backbone: a full-resolution stem followed by
//! max-pool + conv stages, each stage halving the resolution.
//!
//! Every conv block is conv -> batch norm -> ReLU. Stage `k` (1-based) has
//! stride `2^(k+1)` relative to the input.

use crate::error::{contract, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{conv2d, maxpool2, relu, BatchNorm, ConvParams, Tensor, WeightLoader};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBnRelu<T> {
    pub conv: ConvParams<T>,
    pub bn: BatchNorm<T>,
}

impl<T: Scalar> ConvBnRelu<T> {
    pub fn zeros(in_c: usize, out_c: usize, k: usize) -> Self {
        Self {
            conv: ConvParams::zeros(out_c, in_c, k),
            bn: BatchNorm::identity(out_c),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(relu(&self.bn.apply(&conv2d(x, &self.conv)?)?))
    }
}

/// Loads `{prefix}.{weight,bias}` for a size-preserving conv.
pub fn load_conv<T: Scalar>(
    w: &mut WeightLoader<'_>,
    prefix: &str,
    in_c: usize,
    out_c: usize,
    k: usize,
) -> Result<ConvParams<T>> {
    ConvParams::same(
        w.tensor(&format!("{prefix}.weight"), [out_c, in_c, k, k])?,
        w.vector(&format!("{prefix}.bias"), out_c)?,
    )
}

/// Loads `{prefix}.{mean,var,gamma,beta}`; eps is fixed at 1e-5.
pub fn load_bn<T: Scalar>(w: &mut WeightLoader<'_>, prefix: &str, c: usize) -> Result<BatchNorm<T>> {
    Ok(BatchNorm {
        mean: w.vector(&format!("{prefix}.mean"), c)?,
        var: w.vector(&format!("{prefix}.var"), c)?,
        gamma: w.vector(&format!("{prefix}.gamma"), c)?,
        beta: w.vector(&format!("{prefix}.beta"), c)?,
        eps: T::of(BatchNorm::<T>::DEFAULT_EPS),
    })
}

fn load_block<T: Scalar>(w: &mut WeightLoader<'_>, prefix: &str, in_c: usize, out_c: usize) -> Result<ConvBnRelu<T>> {
    Ok(ConvBnRelu {
        conv: load_conv(w, prefix, in_c, out_c, 3)?,
        bn: load_bn(w, &format!("{prefix}.bn"), out_c)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneConfig {
    pub stem_channels: usize,
    /// One entry per stage.
    pub stage_channels: Vec<usize>,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            stem_channels: 32,
            stage_channels: vec![64, 128, 128, 128],
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.is_empty() {
            return Err(Error::Config("backbone needs at least one stage".into()));
        }
        if self.stem_channels == 0 || self.stage_channels.contains(&0) {
            return Err(Error::Config("backbone channel counts must be >= 1".into()));
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.stage_channels.len()
    }

    /// Stride of 1-based stage `k`.
    pub fn stride(stage: usize) -> usize {
        1 << (stage + 1)
    }

    /// Inputs must be a multiple of this on both axes.
    pub fn alignment(&self) -> usize {
        Self::stride(self.stages())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backbone<T> {
    pub stem: ConvBnRelu<T>,
    pub stages: Vec<ConvBnRelu<T>>,
}

impl<T: Scalar> Backbone<T> {
    pub fn zeros(in_c: usize, cfg: &BackboneConfig) -> Self {
        let mut prev = cfg.stem_channels;
        let stages = cfg
            .stage_channels
            .iter()
            .map(|&c| {
                let b = ConvBnRelu::zeros(prev, c, 3);
                prev = c;
                b
            })
            .collect();
        Self {
            stem: ConvBnRelu::zeros(in_c, cfg.stem_channels, 3),
            stages,
        }
    }

    /// Reads `ssd.stem.*` and `ssd.stage{k}.*`.
    pub fn load(w: &mut WeightLoader<'_>, in_c: usize, cfg: &BackboneConfig) -> Result<Self> {
        let stem = load_block(w, "ssd.stem", in_c, cfg.stem_channels)?;
        let mut prev = cfg.stem_channels;
        let mut stages = Vec::with_capacity(cfg.stages());
        for (i, &c) in cfg.stage_channels.iter().enumerate() {
            stages.push(load_block(w, &format!("ssd.stage{}", i + 1), prev, c)?);
            prev = c;
        }
        Ok(Self { stem, stages })
    }

    /// Output of every stage, shallowest first.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let align = BackboneConfig::stride(self.stages.len());
        contract!(
            x.height().is_multiple_of(align) && x.width().is_multiple_of(align),
            "backbone input {:?} must be a multiple of {align}",
            x.shape()
        );
        let mut cur = maxpool2(&self.stem.forward(x)?)?;
        let mut outs = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            cur = stage.forward(&maxpool2(&cur)?)?;
            outs.push(cur.clone());
        }
        Ok(outs)
    }
}
