//! Image pyramid and the shared per-level feature extractor.

use crate::error::{contract, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{conv2d, relu, resize_bilinear, ConvParams, Tensor, WeightLoader};

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidConfig {
    pub levels: usize,
    /// Per-level down-scale ratio in `(0, 1)`.
    pub scale_factor: f64,
    pub ipn_channels: usize,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            scale_factor: 0.5,
            ipn_channels: 32,
        }
    }
}

impl PyramidConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::Config("pyramid.levels must be >= 1".into()));
        }
        if !(self.scale_factor > 0.0 && self.scale_factor < 1.0) {
            return Err(Error::Config(format!(
                "pyramid.scale_factor must lie in (0, 1), got {}",
                self.scale_factor
            )));
        }
        if self.ipn_channels == 0 {
            return Err(Error::Config("pyramid.ipn_channels must be >= 1".into()));
        }
        Ok(())
    }

    /// Smallest image side that keeps every level at least 4 pixels wide
    /// (`4 * 2^levels` for the default halving).
    pub fn min_image_size(&self) -> usize {
        (4.0 / self.scale_factor.powi(self.levels as i32) - 1e-9).ceil() as usize
    }

    pub fn level_sizes(&self, h: usize, w: usize) -> Vec<(usize, usize)> {
        let mut sizes = vec![(h, w)];
        for _ in 1..self.levels {
            let (ph, pw) = *sizes.last().unwrap();
            sizes.push((
                ((ph as f64 * self.scale_factor).floor() as usize).max(1),
                ((pw as f64 * self.scale_factor).floor() as usize).max(1),
            ));
        }
        sizes
    }
}

/// Level 1 is the input; each further level is a bilinear down-scale of the previous one.
pub fn build_pyramid<T: Scalar>(image: &Tensor<T>, cfg: &PyramidConfig) -> Result<Vec<Tensor<T>>> {
    cfg.validate()?;
    contract!(
        image.batch() == 1,
        "build_pyramid expects a single image, got batch {}",
        image.batch()
    );
    let min = cfg.min_image_size();
    if image.height() < min || image.width() < min {
        return Err(Error::Config(format!(
            "image {}x{} too small for {} pyramid levels; minimum side is {min}",
            image.height(),
            image.width(),
            cfg.levels
        )));
    }
    let sizes = cfg.level_sizes(image.height(), image.width());
    let mut levels = vec![image.clone()];
    for &(h, w) in &sizes[1..] {
        let next = resize_bilinear(levels.last().unwrap(), h, w);
        levels.push(next);
    }
    Ok(levels)
}

/// Four-layer extractor shared by all levels: 1x1, 3x3, 3x3, 1x1.
#[derive(Debug, Clone, PartialEq)]
pub struct IpnParams<T> {
    pub conv1: ConvParams<T>,
    pub conv2: ConvParams<T>,
    pub conv3: ConvParams<T>,
    pub conv4: ConvParams<T>,
}

impl<T: Scalar> IpnParams<T> {
    pub fn zeros(in_channels: usize, channels: usize) -> Self {
        Self {
            conv1: ConvParams::zeros(channels, in_channels, 1),
            conv2: ConvParams::zeros(channels, channels, 3),
            conv3: ConvParams::zeros(channels, channels, 3),
            conv4: ConvParams::zeros(channels, channels, 1),
        }
    }

    /// Reads `ipn.conv{1..4}.{weight,bias}`.
    pub fn load(w: &mut WeightLoader<'_>, in_channels: usize, channels: usize) -> Result<Self> {
        let mut conv = |i: usize, ic: usize, k: usize| -> Result<ConvParams<T>> {
            ConvParams::same(
                w.tensor(&format!("ipn.conv{i}.weight"), [channels, ic, k, k])?,
                w.vector(&format!("ipn.conv{i}.bias"), channels)?,
            )
        };
        Ok(Self {
            conv1: conv(1, in_channels, 1)?,
            conv2: conv(2, channels, 3)?,
            conv3: conv(3, channels, 3)?,
            conv4: conv(4, channels, 1)?,
        })
    }

    pub fn channels(&self) -> usize {
        self.conv4.out_channels()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let x = relu(&conv2d(x, &self.conv1)?);
        let x = relu(&conv2d(&x, &self.conv2)?);
        let x = relu(&conv2d(&x, &self.conv3)?);
        conv2d(&x, &self.conv4)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLevel<T> {
    pub features: Tensor<T>,
    /// Level size relative to the input image.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidFeatures<T> {
    pub levels: Vec<PyramidLevel<T>>,
}

pub fn ipn_forward<T: Scalar>(levels: &[Tensor<T>], params: &IpnParams<T>) -> Result<PyramidFeatures<T>> {
    let base = levels.first().map(|t| t.height()).unwrap_or(1) as f64;
    let levels = levels
        .iter()
        .map(|x| {
            Ok(PyramidLevel {
                features: params.forward(x)?,
                scale: x.height() as f64 / base,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PyramidFeatures { levels })
}
