//! End-to-end forward pass: pyramid and backbone streams, per-stage fusion,
//! oriented proposals, rotation pooling, classification and per-class NMS.

use std::time::Instant;

use crate::anchors::{decode_delta, generate_anchors};
use crate::backbone::{Backbone, BackboneConfig};
use crate::config::PipelineConfig;
use crate::dataio::{write_detections, Detection, Image};
use crate::error::{Error, Result};
use crate::fusion::FusionStage;
use crate::geometry::RotatedBox;
use crate::head::HeadParams;
use crate::pooling::rotation_pool_forward;
use crate::pyramid::{build_pyramid, ipn_forward, IpnParams};
use crate::rpn::{decode_candidates, nms_rotated_indices, rpn_heads, select_proposal_indices, Proposal, RpnParams};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor, WeightStore};

/// Input image channels.
pub const IMAGE_CHANNELS: usize = 3;

/// Every weight the network reads, with its shape, in load order.
pub fn weight_manifest(cfg: &PipelineConfig) -> Vec<(String, Shape)> {
    let mut m = Vec::new();
    let conv = |m: &mut Vec<(String, Shape)>, p: &str, out: usize, inp: usize, k: usize| {
        m.push((format!("{p}.weight"), [out, inp, k, k]));
        m.push((format!("{p}.bias"), [out, 1, 1, 1]));
    };
    let bn = |m: &mut Vec<(String, Shape)>, p: &str, c: usize| {
        for f in ["mean", "var", "gamma", "beta"] {
            m.push((format!("{p}.{f}"), [c, 1, 1, 1]));
        }
    };
    let ic = cfg.pyramid.ipn_channels;
    conv(&mut m, "ipn.conv1", ic, IMAGE_CHANNELS, 1);
    conv(&mut m, "ipn.conv2", ic, ic, 3);
    conv(&mut m, "ipn.conv3", ic, ic, 3);
    conv(&mut m, "ipn.conv4", ic, ic, 1);

    let sc = cfg.backbone.stem_channels;
    conv(&mut m, "ssd.stem", sc, IMAGE_CHANNELS, 3);
    bn(&mut m, "ssd.stem.bn", sc);
    let mut prev = sc;
    for (i, &c) in cfg.backbone.stage_channels.iter().enumerate() {
        let p = format!("ssd.stage{}", i + 1);
        conv(&mut m, &p, c, prev, 3);
        bn(&mut m, &format!("{p}.bn"), c);
        prev = c;
    }

    let cc = cfg.common_channels;
    for (i, &c) in cfg.backbone.stage_channels.iter().enumerate() {
        let p = format!("ffn.stage{}", i + 1);
        conv(&mut m, &format!("{p}.ipn.conv3"), cc, ic, 3);
        conv(&mut m, &format!("{p}.ipn.conv1"), cc, cc, 1);
        bn(&mut m, &format!("{p}.ipn.bn"), cc);
        conv(&mut m, &format!("{p}.ssd.conv1"), cc, c, 1);
        bn(&mut m, &format!("{p}.ssd.bn"), cc);
        conv(&mut m, &format!("{p}.head.conv3"), cc, cc, 3);
        conv(&mut m, &format!("{p}.head.conv1"), cc, cc, 1);
    }

    let a = cfg.anchors.per_cell();
    conv(&mut m, "rpn.conv", cfg.rpn_channels, cc, 3);
    conv(&mut m, "rpn.score", a, cfg.rpn_channels, 1);
    conv(&mut m, "rpn.bbox", 5 * a, cfg.rpn_channels, 1);

    let n = cfg.classes.len();
    conv(&mut m, "head.fc1", cfg.head_hidden, cfg.head_inputs(), 1);
    conv(&mut m, "head.cls", n, cfg.head_hidden, 1);
    conv(&mut m, "head.reg", 5 * n, cfg.head_hidden, 1);
    m
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    /// Input after zero-padding to the backbone alignment.
    pub input: Tensor<T>,
    pub pyramid: Vec<Tensor<T>>,
    pub ipn: Vec<Tensor<T>>,
    pub ssd: Vec<Tensor<T>>,
    pub fused: Vec<Tensor<T>>,
    pub scores: Vec<Tensor<T>>,
    pub deltas: Vec<Tensor<T>>,
    pub anchors_per_stage: Vec<usize>,
    /// Selected proposals with their 0-based source stage.
    pub proposals: Vec<(usize, Proposal<T>)>,
    pub pooled_shape: Option<Shape>,
    pub detections: Vec<(usize, T, RotatedBox<T>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub cfg: PipelineConfig,
    pub ipn: IpnParams<T>,
    pub backbone: Backbone<T>,
    pub fusion: Vec<FusionStage<T>>,
    pub rpn: RpnParams<T>,
    pub head: HeadParams<T>,
}

impl<T: Scalar> Network<T> {
    pub fn zeros(cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let ic = cfg.pyramid.ipn_channels;
        let cc = cfg.common_channels;
        Ok(Self {
            cfg: cfg.clone(),
            ipn: IpnParams::zeros(IMAGE_CHANNELS, ic),
            backbone: Backbone::zeros(IMAGE_CHANNELS, &cfg.backbone),
            fusion: (0..cfg.stages())
                .map(|i| FusionStage::zeros(i + 1, ic, cfg.backbone.stage_channels[i], cc))
                .collect(),
            rpn: RpnParams::zeros(cc, cfg.rpn_channels, cfg.anchors.per_cell()),
            head: HeadParams::zeros(cfg.head_inputs(), cfg.head_hidden, cfg.classes.len()),
        })
    }

    /// Builds the network from a store; all missing names are reported together.
    pub fn from_store(cfg: &PipelineConfig, store: &WeightStore) -> Result<Self> {
        cfg.validate()?;
        let mut w = store.loader();
        let ic = cfg.pyramid.ipn_channels;
        let cc = cfg.common_channels;
        let ipn = IpnParams::load(&mut w, IMAGE_CHANNELS, ic)?;
        let backbone = Backbone::load(&mut w, IMAGE_CHANNELS, &cfg.backbone)?;
        let fusion = (0..cfg.stages())
            .map(|i| FusionStage::load(&mut w, i + 1, ic, cfg.backbone.stage_channels[i], cc))
            .collect::<Result<_>>()?;
        let rpn = RpnParams::load(&mut w, cc, cfg.rpn_channels, cfg.anchors.per_cell())?;
        let head = HeadParams::load(&mut w, cfg.head_inputs(), cfg.head_hidden, cfg.classes.len())?;
        w.finish()?;
        Ok(Self { cfg: cfg.clone(), ipn, backbone, fusion, rpn, head })
    }

    /// Reads the weight file named by the config.
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let path = cfg
            .weights_path
            .as_ref()
            .ok_or_else(|| Error::Config("weights.path is not set".into()))?;
        Self::from_store(cfg, &WeightStore::read(path)?)
    }

    pub fn forward_trace(&self, image: &Tensor<T>) -> Result<ForwardTrace<T>> {
        let cfg = &self.cfg;
        crate::error::contract!(
            image.batch() == 1 && image.channels() == IMAGE_CHANNELS,
            "pipeline expects a (1, {IMAGE_CHANNELS}, H, W) image, got {:?}",
            image.shape()
        );
        let align = cfg.backbone.alignment();
        let input = image.pad_to(image.height().div_ceil(align) * align, image.width().div_ceil(align) * align)?;

        let pyramid = build_pyramid(&input, &cfg.pyramid)?;
        let ipn: Vec<_> = ipn_forward(&pyramid, &self.ipn)?.levels.into_iter().map(|l| l.features).collect();
        let ssd = self.backbone.forward(&input)?;

        let mut fused = Vec::with_capacity(ssd.len());
        let mut scores = Vec::with_capacity(ssd.len());
        let mut deltas = Vec::with_capacity(ssd.len());
        let mut anchors_per_stage = Vec::with_capacity(ssd.len());
        let mut candidates = Vec::new();
        let mut origin = Vec::new();
        for (k, stage) in self.fusion.iter().enumerate() {
            let d = stage.forward_taps(&ipn[k], &ssd[k])?.detection;
            let (s, dl) = rpn_heads(&d, &self.rpn)?;
            let acfg = cfg.stage_anchors(k + 1);
            let anchors: Vec<RotatedBox<T>> =
                generate_anchors(&acfg, d.height(), d.width()).iter().map(RotatedBox::cast).collect();
            let c = decode_candidates(&s, &dl, &anchors)?;
            anchors_per_stage.push(anchors.len());
            origin.extend(std::iter::repeat_n(k, c.len()));
            candidates.extend(c);
            fused.push(d);
            scores.push(s);
            deltas.push(dl);
        }

        let proposals: Vec<(usize, Proposal<T>)> = select_proposal_indices(&candidates, &cfg.proposals)
            .into_iter()
            .map(|i| (origin[i], candidates[i]))
            .collect();

        let n_cls = cfg.classes.len();
        let mut per_class: Vec<Vec<Proposal<T>>> = vec![Vec::new(); n_cls];
        let mut pooled_shape = None;
        let threshold = T::of(cfg.score_threshold);
        for (stage, p) in &proposals {
            if p.rbox.validate().is_err() {
                continue;
            }
            let stride = T::of_usize(BackboneConfig::stride(stage + 1));
            let (pooled, _) = rotation_pool_forward(&fused[*stage], stride, &p.rbox, &cfg.pool)?;
            pooled_shape = Some(pooled.shape());
            let out = self.head.forward(&pooled)?;
            for (c, bucket) in per_class.iter_mut().enumerate() {
                if out.scores[c] > threshold {
                    let rbox = decode_delta(&p.rbox, &out.deltas[c]);
                    if rbox.validate().is_ok() {
                        bucket.push(Proposal { rbox, score: out.scores[c] });
                    }
                }
            }
        }
        let mut detections = Vec::new();
        for (c, dets) in per_class.iter().enumerate() {
            for i in nms_rotated_indices(dets, cfg.detect_nms_iou) {
                detections.push((c, dets[i].score, dets[i].rbox));
            }
        }
        Ok(ForwardTrace {
            input,
            pyramid,
            ipn,
            ssd,
            fused,
            scores,
            deltas,
            anchors_per_stage,
            proposals,
            pooled_shape,
            detections,
        })
    }

    /// Class-labelled detections for one image tensor.
    pub fn detect(&self, image: &Tensor<T>, source_id: &str) -> Result<Vec<Detection>> {
        Ok(self
            .forward_trace(image)?
            .detections
            .into_iter()
            .map(|(c, score, rbox)| Detection {
                source_id: source_id.to_owned(),
                class: self.cfg.classes[c].clone(),
                score: score.widen(),
                rbox: rbox.cast(),
            })
            .collect())
    }
}

/// Loads weights from the config and runs one image in `f32`.
pub fn run_pipeline(image: &Image, source_id: &str, cfg: &PipelineConfig) -> Result<Vec<Detection>> {
    Network::<f32>::load(cfg)?.detect(&image.to_tensor(), source_id)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub images: usize,
    pub repeats: usize,
    /// Frames per second of each repeat, network only.
    pub fps_exclusive: Vec<f64>,
    /// Frames per second of each repeat including decode and serialization.
    pub fps_inclusive: Vec<f64>,
    /// Every repeat produced byte-identical detection output.
    pub deterministic: bool,
    pub threads: usize,
}

/// Median and 95th percentile (nearest rank) of a non-empty sample.
pub fn median_p95(samples: &[f64]) -> (f64, f64) {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    (median, v[rank - 1])
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let (em, ep) = median_p95(&self.fps_exclusive);
        let (im, ip) = median_p95(&self.fps_inclusive);
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
        format!(
            "images = {}\nrepeats = {}\nthreads = {}\nfps_exclusive_median = {em:.3}\nfps_exclusive_p95 = {ep:.3}\n\
             fps_inclusive_median = {im:.3}\nfps_inclusive_p95 = {ip:.3}\nfps_exclusive_samples = {}\n\
             fps_inclusive_samples = {}\ndeterministic = {}\n",
            self.images,
            self.repeats,
            self.threads,
            list(&self.fps_exclusive),
            list(&self.fps_inclusive),
            self.deterministic
        )
    }
}

/// Times `repeats` passes over encoded PNM images on one thread.
///
/// The exclusive timing covers the network only; the inclusive timing adds
/// image decoding and detection serialization. File reads are excluded.
pub fn bench(net: &Network<f32>, images: &[(String, Vec<u8>)], repeats: usize) -> Result<BenchReport> {
    crate::error::contract!(repeats >= 3, "bench needs at least 3 repeats, got {repeats}");
    crate::error::contract!(!images.is_empty(), "bench needs at least one image");
    let mut fps_exclusive = Vec::with_capacity(repeats);
    let mut fps_inclusive = Vec::with_capacity(repeats);
    let mut first: Option<Vec<u8>> = None;
    let mut deterministic = true;
    for _ in 0..repeats {
        let mut net_time = 0.0;
        let mut out = Vec::new();
        let start = Instant::now();
        for (id, bytes) in images {
            let tensor = Image::from_pnm(bytes)?.to_tensor::<f32>();
            let t0 = Instant::now();
            let dets = net.detect(&tensor, id)?;
            net_time += t0.elapsed().as_secs_f64();
            write_detections(&dets, &mut out)?;
        }
        let total = start.elapsed().as_secs_f64();
        let n = images.len() as f64;
        fps_exclusive.push(n / net_time.max(f64::MIN_POSITIVE));
        fps_inclusive.push(n / total.max(f64::MIN_POSITIVE));
        match &first {
            None => first = Some(out),
            Some(f) => deterministic &= *f == out,
        }
    }
    Ok(BenchReport {
        images: images.len(),
        repeats,
        fps_exclusive,
        fps_inclusive,
        deterministic,
        threads: 1,
    })
}
