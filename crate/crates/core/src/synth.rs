//! Synthetic scenes and hand-set weights for end-to-end checks.
//!
//! The template network carries image brightness through every stream
//! unchanged: the pyramid extractor and the backbone act as channel-averaging
//! identities, each fusion branch contributes half, the proposal head scores
//! bright anchor centers, and the classification head penalizes every pooled
//! cell that is not fully bright. With anchors shaped like the planted
//! rectangles, only anchors lying on a rectangle survive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::dataio::{GroundTruth, Image};
use crate::error::{contract, Result};
use crate::geometry::{Point, RotatedBox};
use crate::pipeline::weight_manifest;
use crate::tensor::{BatchNorm, Shape, Tensor, WeightStore};

pub const PLANTED_SIZE: usize = 128;
pub const PLANTED_SOURCE: &str = "planted";
pub const PLANTED_CLASS: &str = "object";

/// Three 64x16 rectangles at 0, 90 and 45 degrees, edges on the 4-pixel grid
/// where the orientation allows it.
pub fn planted_boxes() -> Vec<RotatedBox<f64>> {
    vec![
        RotatedBox::new(36.0, 28.0, 64.0, 16.0, 0.0),
        RotatedBox::new(92.0, 44.0, 64.0, 16.0, 90f64.to_radians()),
        RotatedBox::new(60.0, 92.0, 64.0, 16.0, 45f64.to_radians()),
    ]
}

/// Gray image: a pixel is 255 when its center lies inside any box.
pub fn render_boxes(width: usize, height: usize, boxes: &[RotatedBox<f64>]) -> Image {
    let mut data = vec![0u8; width * height];
    for y in 0..height {
        for x in 0..width {
            let p = Point::new(x as f64 + 0.5, y as f64 + 0.5);
            if boxes.iter().any(|b| b.contains(p)) {
                data[y * width + x] = 255;
            }
        }
    }
    Image { width, height, channels: 1, data }
}

pub fn planted_scene() -> (Image, Vec<GroundTruth>) {
    let boxes = planted_boxes();
    let image = render_boxes(PLANTED_SIZE, PLANTED_SIZE, &boxes);
    let gts = boxes
        .into_iter()
        .map(|rbox| GroundTruth {
            source_id: PLANTED_SOURCE.into(),
            class: PLANTED_CLASS.into(),
            rbox,
            difficult: false,
        })
        .collect();
    (image, gts)
}

/// Single-channel configuration matching [`template_weights`].
pub fn template_config() -> PipelineConfig {
    let text = "\
pyramid.levels = 2
pyramid.scale_factor = 0.5
pyramid.ipn_channels = 1
backbone.stem_channels = 1
backbone.channels = 1, 1
fusion.common_channels = 1
anchors.scales = 32
anchors.ratios = 4
anchors.angles_deg = 0, 45, 90, 135
rpn.channels = 1
proposals.pre_nms_k = 100000
proposals.nms_iou = 1.0
proposals.post_nms_k = 100000
pool.h = 8
pool.w = 2
pool.samples = 1
head.hidden = 1
detect.score_threshold = 0.6
detect.nms_iou = 0.3
classes = object
";
    PipelineConfig::parse(text, None).expect("template config is valid")
}

fn center_tap(out: usize, inp: usize, value: f32) -> Tensor<f32> {
    Tensor::from_fn([out, inp, 3, 3], |_, _, y, x| if y == 1 && x == 1 { value } else { 0.0 })
}

/// Hand-set weights for [`template_config`]-shaped networks (every internal
/// width 1, one class).
pub fn template_weights(cfg: &PipelineConfig) -> Result<WeightStore> {
    contract!(
        cfg.pyramid.ipn_channels == 1
            && cfg.backbone.stem_channels == 1
            && cfg.backbone.stage_channels.iter().all(|&c| c == 1)
            && cfg.common_channels == 1
            && cfg.rpn_channels == 1
            && cfg.head_hidden == 1
            && cfg.classes.len() == 1,
        "template weights need single-channel layers and one class"
    );
    let mut ws = WeightStore::new();
    let third = 1.0 / 3.0;
    let mut put = |name: &str, t: Tensor<f32>| ws.insert(name, t);
    let one = |v: f32| Tensor::full([1, 1, 1, 1], v);

    put("ipn.conv1.weight", Tensor::full([1, 3, 1, 1], third));
    put("ipn.conv2.weight", center_tap(1, 1, 1.0));
    put("ipn.conv3.weight", center_tap(1, 1, 1.0));
    put("ipn.conv4.weight", one(1.0));
    put("ssd.stem.weight", center_tap(1, 3, third));
    for k in 1..=cfg.stages() {
        put(&format!("ssd.stage{k}.weight"), center_tap(1, 1, 1.0));
        let p = format!("ffn.stage{k}");
        put(&format!("{p}.ipn.conv3.weight"), center_tap(1, 1, 0.5));
        put(&format!("{p}.ipn.conv1.weight"), one(1.0));
        put(&format!("{p}.ssd.conv1.weight"), one(0.5));
        put(&format!("{p}.head.conv3.weight"), center_tap(1, 1, 1.0));
        put(&format!("{p}.head.conv1.weight"), one(1.0));
    }
    let a = cfg.anchors.per_cell();
    put("rpn.conv.weight", center_tap(1, 1, 1.0));
    put("rpn.score.weight", Tensor::full([a, 1, 1, 1], 10.0));
    put("rpn.score.bias", Tensor::full([a, 1, 1, 1], -5.0));
    let cells = cfg.head_inputs() as f32;
    put("head.fc1.weight", Tensor::full([1, cfg.head_inputs(), 1, 1], -1.0));
    put("head.fc1.bias", one(cells));
    put("head.cls.weight", one(-8.0));
    put("head.cls.bias", one(6.0));

    // everything else: zero weights, zero biases, identity batch norm
    let identity_var = (1.0 - BatchNorm::<f64>::DEFAULT_EPS) as f32;
    for (name, shape) in weight_manifest(cfg) {
        if ws.get(&name).is_none() {
            let fill = match name.rsplit('.').next() {
                Some("var") => identity_var,
                Some("gamma") => 1.0,
                _ => 0.0,
            };
            ws.insert(name, Tensor::full(shape, fill));
        }
    }
    Ok(ws)
}

/// Random weights with `1/sqrt(fan_in)` scaling and positive variances.
pub fn random_weights(cfg: &PipelineConfig, seed: u64) -> WeightStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ws = WeightStore::new();
    for (name, shape) in weight_manifest(cfg) {
        let fan_in = (shape[1] * shape[2] * shape[3]).max(1) as f32;
        let bound = 1.0 / fan_in.sqrt();
        let t = Tensor::from_fn(shape, |_, _, _, _| {
            if name.ends_with(".var") {
                rng.gen_range(0.5..1.5)
            } else if name.ends_with(".gamma") {
                rng.gen_range(0.8..1.2)
            } else if name.ends_with(".weight") {
                rng.gen_range(-bound..bound)
            } else {
                rng.gen_range(-0.1..0.1)
            }
        });
        ws.insert(name, t);
    }
    ws
}

/// Shapes every stage should produce for an `h x w` input, derived from the
/// module contracts alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeTable {
    pub input: Shape,
    pub pyramid: Vec<Shape>,
    pub ipn: Vec<Shape>,
    pub ssd: Vec<Shape>,
    pub fused: Vec<Shape>,
    pub scores: Vec<Shape>,
    pub deltas: Vec<Shape>,
    pub anchors: Vec<usize>,
    pub pooled: Shape,
}

pub fn shape_table(cfg: &PipelineConfig, h: usize, w: usize) -> ShapeTable {
    let align = 1usize << (cfg.stages() + 1);
    let (ph, pw) = (h.div_ceil(align) * align, w.div_ceil(align) * align);
    let mut pyramid = Vec::new();
    let (mut lh, mut lw) = (ph, pw);
    for _ in 0..cfg.pyramid.levels {
        pyramid.push([1, 3, lh, lw]);
        lh = ((lh as f64 * cfg.pyramid.scale_factor).floor() as usize).max(1);
        lw = ((lw as f64 * cfg.pyramid.scale_factor).floor() as usize).max(1);
    }
    let ipn = pyramid.iter().map(|s| [1, cfg.pyramid.ipn_channels, s[2], s[3]]).collect();
    let grids: Vec<(usize, usize)> = (1..=cfg.stages()).map(|k| (ph >> (k + 1), pw >> (k + 1))).collect();
    let a = cfg.anchors.per_cell();
    let cc = cfg.common_channels;
    ShapeTable {
        input: [1, 3, ph, pw],
        pyramid,
        ipn,
        ssd: grids
            .iter()
            .zip(&cfg.backbone.stage_channels)
            .map(|(&(gh, gw), &c)| [1, c, gh, gw])
            .collect(),
        fused: grids.iter().map(|&(gh, gw)| [1, cc, gh, gw]).collect(),
        scores: grids.iter().map(|&(gh, gw)| [1, a, gh, gw]).collect(),
        deltas: grids.iter().map(|&(gh, gw)| [1, 5 * a, gh, gw]).collect(),
        anchors: grids.iter().map(|&(gh, gw)| gh * gw * a).collect(),
        pooled: [1, cc, cfg.pool.rows, cfg.pool.cols],
    }
}
