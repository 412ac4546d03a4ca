//! Pipeline configuration and its flat `key = value` file format.
//!
//! ```text
//! # comment
//! pyramid.levels = 4
//! anchors.scales = 16, 32, 64
//! weights.path = model.rdw
//! classes = plane, ship
//! ```
//!
//! Angles are given in degrees; relative `weights.path` values resolve
//! against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::anchors::AnchorConfig;
use crate::backbone::BackboneConfig;
use crate::error::{Error, Result};
use crate::eval::IouMode;
use crate::pooling::PoolSpec;
use crate::pyramid::PyramidConfig;
use crate::rpn::ProposalConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub pyramid: PyramidConfig,
    pub backbone: BackboneConfig,
    /// Channel width shared by every fused detection map.
    pub common_channels: usize,
    /// Anchors for the first stage; deeper stages double the scales.
    pub anchors: AnchorConfig<f64>,
    pub rpn_channels: usize,
    pub proposals: ProposalConfig,
    pub pool: PoolSpec,
    pub head_hidden: usize,
    /// Detections need a class score strictly above this.
    pub score_threshold: f64,
    /// Per-class NMS threshold on final detections.
    pub detect_nms_iou: f64,
    pub weights_path: Option<PathBuf>,
    pub classes: Vec<String>,
    pub eval_iou: f64,
    pub eval_mode: IouMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            pyramid: PyramidConfig::default(),
            backbone: BackboneConfig::default(),
            common_channels: 64,
            anchors: AnchorConfig::default(),
            rpn_channels: 512,
            proposals: ProposalConfig::default(),
            pool: PoolSpec::default(),
            head_hidden: 256,
            score_threshold: 0.6,
            detect_nms_iou: 0.3,
            weights_path: None,
            classes: vec!["object".into()],
            eval_iou: 0.5,
            eval_mode: IouMode::Obb,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(config_err(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.pyramid.validate()?;
        self.backbone.validate()?;
        if self.backbone.stages() != self.pyramid.levels {
            return Err(config_err(format!(
                "backbone has {} stages but the pyramid has {} levels; each stage fuses one level",
                self.backbone.stages(),
                self.pyramid.levels
            )));
        }
        self.anchors.validate().map_err(|e| config_err(e.to_string()))?;
        self.pool.validate().map_err(|e| config_err(e.to_string()))?;
        for (name, v) in [
            ("fusion.common_channels", self.common_channels),
            ("rpn.channels", self.rpn_channels),
            ("head.hidden", self.head_hidden),
            ("proposals.post_nms_k", self.proposals.post_nms_k),
            ("proposals.pre_nms_k", self.proposals.pre_nms_k),
        ] {
            if v == 0 {
                return Err(config_err(format!("{name} must be >= 1")));
            }
        }
        unit_interval("proposals.nms_iou", self.proposals.nms_iou)?;
        unit_interval("detect.nms_iou", self.detect_nms_iou)?;
        unit_interval("detect.score_threshold", self.score_threshold)?;
        unit_interval("eval.iou", self.eval_iou)?;
        if self.classes.is_empty() {
            return Err(config_err("at least one class name is required"));
        }
        if self.classes.iter().any(|c| c.is_empty() || c.contains(char::is_whitespace)) {
            return Err(config_err("class names must be non-empty and free of whitespace"));
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.backbone.stages()
    }

    /// Anchor layout of 1-based stage `k`.
    pub fn stage_anchors(&self, k: usize) -> AnchorConfig<f64> {
        self.anchors
            .scaled((1u64 << (k - 1)) as f64, BackboneConfig::stride(k))
    }

    pub fn head_inputs(&self) -> usize {
        self.common_channels * self.pool.rows * self.pool.cols
    }

    /// Parses config text; `base` resolves a relative weight path.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected `key = value`", i + 1)))?;
            let key = k.trim().to_owned();
            if entries.insert(key.clone(), (i + 1, v.trim().to_owned())).is_some() {
                return Err(config_err(format!("line {}: duplicate key {key}", i + 1)));
            }
        }
        let mut cfg = Self::default();
        for (key, (line, value)) in entries {
            cfg.set(&key, &value, base)
                .map_err(|e| config_err(format!("line {line}: {key}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("invalid value {v:?}"))
        }
        fn list<T: std::str::FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
            v.split(',').map(|s| num(s.trim())).collect()
        }
        match key {
            "pyramid.levels" => self.pyramid.levels = num(value)?,
            "pyramid.scale_factor" => self.pyramid.scale_factor = num(value)?,
            "pyramid.ipn_channels" => self.pyramid.ipn_channels = num(value)?,
            "backbone.stem_channels" => self.backbone.stem_channels = num(value)?,
            "backbone.channels" => self.backbone.stage_channels = list(value)?,
            "fusion.common_channels" => self.common_channels = num(value)?,
            "anchors.scales" => self.anchors.scales = list(value)?,
            "anchors.ratios" => self.anchors.ratios = list(value)?,
            "anchors.angles_deg" => {
                self.anchors.angles = list::<f64>(value)?.into_iter().map(f64::to_radians).collect()
            }
            "rpn.channels" => self.rpn_channels = num(value)?,
            "proposals.pre_nms_k" => self.proposals.pre_nms_k = num(value)?,
            "proposals.nms_iou" => self.proposals.nms_iou = num(value)?,
            "proposals.post_nms_k" => self.proposals.post_nms_k = num(value)?,
            "pool.h" => self.pool.rows = num(value)?,
            "pool.w" => self.pool.cols = num(value)?,
            "pool.samples" => self.pool.samples = num(value)?,
            "head.hidden" => self.head_hidden = num(value)?,
            "detect.score_threshold" => self.score_threshold = num(value)?,
            "detect.nms_iou" => self.detect_nms_iou = num(value)?,
            "weights.path" => {
                let p = PathBuf::from(value);
                self.weights_path = Some(match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p,
                });
            }
            "classes" => self.classes = value.split(',').map(|s| s.trim().to_owned()).collect(),
            "eval.iou" => self.eval_iou = num(value)?,
            "eval.mode" => self.eval_mode = value.parse().map_err(|e: Error| e.to_string())?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Inverse of [`PipelineConfig::parse`] (weight path written as given).
    pub fn to_text(&self) -> String {
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
        }
        let degrees: Vec<f64> = self.anchors.angles.iter().map(|a| a.to_degrees()).collect();
        let mut lines = vec![
            format!("pyramid.levels = {}", self.pyramid.levels),
            format!("pyramid.scale_factor = {}", self.pyramid.scale_factor),
            format!("pyramid.ipn_channels = {}", self.pyramid.ipn_channels),
            format!("backbone.stem_channels = {}", self.backbone.stem_channels),
            format!("backbone.channels = {}", join(&self.backbone.stage_channels)),
            format!("fusion.common_channels = {}", self.common_channels),
            format!("anchors.scales = {}", join(&self.anchors.scales)),
            format!("anchors.ratios = {}", join(&self.anchors.ratios)),
            format!("anchors.angles_deg = {}", join(&degrees)),
            format!("rpn.channels = {}", self.rpn_channels),
            format!("proposals.pre_nms_k = {}", self.proposals.pre_nms_k),
            format!("proposals.nms_iou = {}", self.proposals.nms_iou),
            format!("proposals.post_nms_k = {}", self.proposals.post_nms_k),
            format!("pool.h = {}", self.pool.rows),
            format!("pool.w = {}", self.pool.cols),
            format!("pool.samples = {}", self.pool.samples),
            format!("head.hidden = {}", self.head_hidden),
            format!("detect.score_threshold = {}", self.score_threshold),
            format!("detect.nms_iou = {}", self.detect_nms_iou),
            format!("classes = {}", self.classes.join(", ")),
            format!("eval.iou = {}", self.eval_iou),
            format!("eval.mode = {}", self.eval_mode),
        ];
        if let Some(p) = &self.weights_path {
            lines.push(format!("weights.path = {}", p.display()));
        }
        lines.join("\n") + "\n"
    }
}
