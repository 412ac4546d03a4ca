//! Per-stage fusion of a pyramid level with a backbone stage.
//!
//! ```text
//! ipn  -> conv3x3 -> conv1x1 -> BN -> resize to ssd grid --+
//!                                                          (+) -> ReLU -> conv3x3 -> conv1x1 -> d
//! ssd  -> conv1x1 -> BN -----------------------------------+
//! ```

use crate::backbone::{load_bn, load_conv};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{add, conv2d, relu, resize_bilinear, BatchNorm, ConvParams, Tensor, WeightLoader};

#[derive(Debug, Clone, PartialEq)]
pub struct FusionStage<T> {
    /// 1-based stage index, used in error messages and weight names.
    pub index: usize,
    pub ipn_conv3: ConvParams<T>,
    pub ipn_conv1: ConvParams<T>,
    pub ipn_bn: BatchNorm<T>,
    pub ssd_conv1: ConvParams<T>,
    pub ssd_bn: BatchNorm<T>,
    pub head_conv3: ConvParams<T>,
    pub head_conv1: ConvParams<T>,
}

/// Intermediate tensors of one fusion call.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionTaps<T> {
    /// IPN branch after resizing onto the SSD grid.
    pub ipn_branch: Tensor<T>,
    pub ssd_branch: Tensor<T>,
    /// Sum of both branches before the ReLU.
    pub sum: Tensor<T>,
    pub detection: Tensor<T>,
}

impl<T: Scalar> FusionStage<T> {
    pub fn zeros(index: usize, ipn_c: usize, ssd_c: usize, common: usize) -> Self {
        Self {
            index,
            ipn_conv3: ConvParams::zeros(common, ipn_c, 3),
            ipn_conv1: ConvParams::zeros(common, common, 1),
            ipn_bn: BatchNorm::identity(common),
            ssd_conv1: ConvParams::zeros(common, ssd_c, 1),
            ssd_bn: BatchNorm::identity(common),
            head_conv3: ConvParams::zeros(common, common, 3),
            head_conv1: ConvParams::zeros(common, common, 1),
        }
    }

    /// Reads `ffn.stage{k}.{ipn,ssd,head}.*`.
    pub fn load(w: &mut WeightLoader<'_>, index: usize, ipn_c: usize, ssd_c: usize, common: usize) -> Result<Self> {
        let p = format!("ffn.stage{index}");
        Ok(Self {
            index,
            ipn_conv3: load_conv(w, &format!("{p}.ipn.conv3"), ipn_c, common, 3)?,
            ipn_conv1: load_conv(w, &format!("{p}.ipn.conv1"), common, common, 1)?,
            ipn_bn: load_bn(w, &format!("{p}.ipn.bn"), common)?,
            ssd_conv1: load_conv(w, &format!("{p}.ssd.conv1"), ssd_c, common, 1)?,
            ssd_bn: load_bn(w, &format!("{p}.ssd.bn"), common)?,
            head_conv3: load_conv(w, &format!("{p}.head.conv3"), common, common, 3)?,
            head_conv1: load_conv(w, &format!("{p}.head.conv1"), common, common, 1)?,
        })
    }

    pub fn common_channels(&self) -> usize {
        self.head_conv1.out_channels()
    }

    fn check(&self, what: &str, t: &Tensor<T>, want: usize) -> Result<()> {
        if t.batch() != 1 || t.channels() != want {
            return Err(Error::Contract(format!(
                "fusion stage {}: {what} input {:?} needs batch 1 and {want} channels",
                self.index,
                t.shape()
            )));
        }
        Ok(())
    }

    pub fn forward_taps(&self, ipn_feat: &Tensor<T>, ssd_feat: &Tensor<T>) -> Result<FusionTaps<T>> {
        self.check("IPN", ipn_feat, self.ipn_conv3.in_channels())?;
        self.check("SSD", ssd_feat, self.ssd_conv1.in_channels())?;
        let ipn = conv2d(&conv2d(ipn_feat, &self.ipn_conv3)?, &self.ipn_conv1)?;
        let ipn = self.ipn_bn.apply(&ipn)?;
        let ipn_branch = resize_bilinear(&ipn, ssd_feat.height(), ssd_feat.width());
        let ssd_branch = self.ssd_bn.apply(&conv2d(ssd_feat, &self.ssd_conv1)?)?;
        let sum = add(&ipn_branch, &ssd_branch)?;
        let fused = relu(&sum);
        let detection = conv2d(&conv2d(&fused, &self.head_conv3)?, &self.head_conv1)?;
        Ok(FusionTaps {
            ipn_branch,
            ssd_branch,
            sum,
            detection,
        })
    }
}

/// Detection features for one stage; spatial size follows `ssd_feat`.
pub fn ffn_fuse<T: Scalar>(ipn_feat: &Tensor<T>, ssd_feat: &Tensor<T>, stage: &FusionStage<T>) -> Result<Tensor<T>> {
    Ok(stage.forward_taps(ipn_feat, ssd_feat)?.detection)
}
