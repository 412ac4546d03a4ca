//! Oriented region proposal head, proposal selection and rotated NMS.

use crate::anchors::{decode_delta, BoxDelta};
use crate::backbone::load_conv;
use crate::error::{contract, Result};
use crate::geometry::{iou_rotated, to_horizontal, RotatedBox};
use crate::scalar::Scalar;
use crate::tensor::{conv2d, relu, sigmoid, ConvParams, Tensor, WeightLoader};

/// Shared 3x3 "reg-conv" trunk plus 1x1 score and box predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct RpnParams<T> {
    pub conv: ConvParams<T>,
    pub score: ConvParams<T>,
    pub bbox: ConvParams<T>,
}

impl<T: Scalar> RpnParams<T> {
    pub fn zeros(in_c: usize, hidden: usize, anchors_per_cell: usize) -> Self {
        Self {
            conv: ConvParams::zeros(hidden, in_c, 3),
            score: ConvParams::zeros(anchors_per_cell, hidden, 1),
            bbox: ConvParams::zeros(5 * anchors_per_cell, hidden, 1),
        }
    }

    /// Reads `rpn.{conv,score,bbox}.{weight,bias}`.
    pub fn load(w: &mut WeightLoader<'_>, in_c: usize, hidden: usize, anchors_per_cell: usize) -> Result<Self> {
        Ok(Self {
            conv: load_conv(w, "rpn.conv", in_c, hidden, 3)?,
            score: load_conv(w, "rpn.score", hidden, anchors_per_cell, 1)?,
            bbox: load_conv(w, "rpn.bbox", hidden, 5 * anchors_per_cell, 1)?,
        })
    }

    pub fn anchors_per_cell(&self) -> usize {
        self.score.out_channels()
    }
}

/// Objectness `(1, A, h, w)` and deltas `(1, 5A, h, w)`.
pub fn rpn_heads<T: Scalar>(feat: &Tensor<T>, params: &RpnParams<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    contract!(
        feat.channels() == params.conv.in_channels(),
        "rpn head expects {} input channels, got {:?}",
        params.conv.in_channels(),
        feat.shape()
    );
    let hidden = relu(&conv2d(feat, &params.conv)?);
    let scores = sigmoid(&conv2d(&hidden, &params.score)?);
    let deltas = conv2d(&hidden, &params.bbox)?;
    Ok((scores, deltas))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal<T> {
    pub rbox: RotatedBox<T>,
    pub score: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalConfig {
    pub pre_nms_k: usize,
    pub nms_iou: f64,
    pub post_nms_k: usize,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            pre_nms_k: 2000,
            nms_iou: 0.7,
            post_nms_k: 300,
        }
    }
}

/// Decodes every anchor of one map, in anchor order.
///
/// Anchor `n` is cell `n / A` (row-major) and slot `n % A`; its deltas live in
/// channels `5 * slot .. 5 * slot + 5`.
pub fn decode_candidates<T: Scalar>(
    scores: &Tensor<T>,
    deltas: &Tensor<T>,
    anchors: &[RotatedBox<T>],
) -> Result<Vec<Proposal<T>>> {
    let [_, a, h, w] = scores.shape();
    contract!(
        scores.batch() == 1 && deltas.shape() == [1, 5 * a, h, w],
        "score map {:?} and delta map {:?} disagree",
        scores.shape(),
        deltas.shape()
    );
    contract!(
        anchors.len() == h * w * a,
        "{} anchors for a {h}x{w} map with {a} per cell",
        anchors.len()
    );
    let mut out = Vec::with_capacity(anchors.len());
    for (n, anchor) in anchors.iter().enumerate() {
        let (cell, slot) = (n / a, n % a);
        let (y, x) = (cell / w, cell % w);
        let d: Vec<T> = (0..5).map(|i| deltas.at(0, 5 * slot + i, y, x)).collect();
        out.push(Proposal {
            rbox: decode_delta(anchor, &BoxDelta::from_slice(&d)),
            score: scores.at(0, slot, y, x),
        });
    }
    Ok(out)
}

/// Descending score, ties by ascending position; NaN scores sort last.
fn by_score<T: Scalar>(props: &[Proposal<T>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..props.len()).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (props[i].score, props[j].score);
        b.partial_cmp(&a)
            .unwrap_or_else(|| a.is_nan().cmp(&b.is_nan()))
            .then(i.cmp(&j))
    });
    idx
}

/// Indices kept by greedy rotated NMS, in score order.
///
/// A box is dropped when its IoU with an already kept box exceeds `iou_thresh`.
pub fn nms_rotated_indices<T: Scalar>(props: &[Proposal<T>], iou_thresh: f64) -> Vec<usize> {
    if iou_thresh >= 1.0 {
        // IoU never exceeds 1, so nothing can be suppressed
        return by_score(props);
    }
    let hbbs: Vec<_> = props.iter().map(|p| to_horizontal(&p.rbox)).collect();
    let mut kept: Vec<usize> = Vec::new();
    for i in by_score(props) {
        let clash = kept.iter().any(|&k| {
            hbbs[k].intersects(&hbbs[i]) && iou_rotated(&props[k].rbox, &props[i].rbox).widen() > iou_thresh
        });
        if !clash {
            kept.push(i);
        }
    }
    kept
}

pub fn nms_rotated<T: Scalar>(props: &[Proposal<T>], iou_thresh: f64) -> Vec<Proposal<T>> {
    nms_rotated_indices(props, iou_thresh).into_iter().map(|i| props[i]).collect()
}

/// Indices into `candidates` that survive selection, in output order.
pub fn select_proposal_indices<T: Scalar>(candidates: &[Proposal<T>], cfg: &ProposalConfig) -> Vec<usize> {
    let top: Vec<usize> = by_score(candidates).into_iter().take(cfg.pre_nms_k).collect();
    let pool: Vec<_> = top.iter().map(|&i| candidates[i]).collect();
    nms_rotated_indices(&pool, cfg.nms_iou)
        .into_iter()
        .take(cfg.post_nms_k)
        .map(|j| top[j])
        .collect()
}

/// Top `pre_nms_k` by score, rotated NMS, then the first `post_nms_k`.
pub fn select_proposals<T: Scalar>(candidates: &[Proposal<T>], cfg: &ProposalConfig) -> Vec<Proposal<T>> {
    select_proposal_indices(candidates, cfg).into_iter().map(|i| candidates[i]).collect()
}

pub fn generate_proposals<T: Scalar>(
    scores: &Tensor<T>,
    deltas: &Tensor<T>,
    anchors: &[RotatedBox<T>],
    cfg: &ProposalConfig,
) -> Result<Vec<Proposal<T>>> {
    Ok(select_proposals(&decode_candidates(scores, deltas, anchors)?, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchors::{generate_anchors, AnchorConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prop(x: f64, y: f64, s: f64) -> Proposal<f64> {
        Proposal {
            rbox: RotatedBox::new(x, y, 10.0, 6.0, 0.3),
            score: s,
        }
    }

    #[test]
    fn zero_weights_give_half_scores() {
        let p = RpnParams::<f32>::zeros(4, 8, 3);
        let (s, d) = rpn_heads(&Tensor::full([1, 4, 5, 6], 1.0), &p).unwrap();
        assert_eq!(s.shape(), [1, 3, 5, 6]);
        assert_eq!(d.shape(), [1, 15, 5, 6]);
        assert!(s.data().iter().all(|&v| v == 0.5));
        assert!(d.data().iter().all(|&v| v == 0.0));
        assert!(rpn_heads(&Tensor::zeros([1, 5, 5, 6]), &p).is_err());
    }

    #[test]
    fn heads_match_composed_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = RpnParams::<f64>::zeros(3, 6, 2);
        for c in [&mut p.conv, &mut p.score, &mut p.bbox] {
            c.weight.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
            c.bias.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        }
        let x = Tensor::from_fn([1, 3, 7, 5], |_, _, _, _| rng.gen_range(-1.0..1.0));
        let (s, d) = rpn_heads(&x, &p).unwrap();
        let h = relu(&conv2d(&x, &p.conv).unwrap());
        let logits = conv2d(&h, &p.score).unwrap();
        for (a, l) in s.data().iter().zip(logits.data()) {
            assert!((a - 1.0 / (1.0 + (-l).exp())).abs() < 1e-6);
        }
        assert_eq!(d, conv2d(&h, &p.bbox).unwrap());
    }

    #[test]
    fn single_anchor_single_proposal() {
        let cfg = AnchorConfig { scales: vec![16.0], ratios: vec![1.0], angles: vec![0.0], stride: 8 };
        let anchors = generate_anchors(&cfg, 1, 1);
        let s = Tensor::full([1, 1, 1, 1], 0.5);
        let d = Tensor::zeros([1, 5, 1, 1]);
        let out = generate_proposals(&s, &d, &anchors, &ProposalConfig::default()).unwrap();
        assert_eq!(out, vec![Proposal { rbox: anchors[0], score: 0.5 }]);
    }

    #[test]
    fn identical_boxes_keep_higher_score() {
        let out = nms_rotated(&[prop(0.0, 0.0, 0.8), prop(0.0, 0.0, 0.9)], 0.5);
        assert_eq!(out, vec![prop(0.0, 0.0, 0.9)]);
    }

    #[test]
    fn empty_and_disjoint() {
        assert!(nms_rotated::<f64>(&[], 0.5).is_empty());
        let ps = [prop(0.0, 0.0, 0.2), prop(100.0, 0.0, 0.7), prop(0.0, 100.0, 0.5)];
        assert_eq!(nms_rotated(&ps, 0.5), vec![ps[1], ps[2], ps[0]]);
    }

    #[test]
    fn equal_scores_follow_anchor_order() {
        let ps = [prop(0.0, 0.0, 0.5), prop(1.0, 0.0, 0.5), prop(50.0, 0.0, 0.5)];
        assert_eq!(nms_rotated_indices(&ps, 0.3), vec![0, 2]);
        let cfg = ProposalConfig { pre_nms_k: 2, nms_iou: 1.0, post_nms_k: 10 };
        assert_eq!(select_proposals(&ps, &cfg), vec![ps[0], ps[1]]);
    }

    #[test]
    fn mismatched_anchor_count_rejected() {
        let s = Tensor::<f64>::zeros([1, 2, 3, 3]);
        let d = Tensor::zeros([1, 10, 3, 3]);
        let anchors = vec![RotatedBox::new(0.0, 0.0, 1.0, 1.0, 0.0); 17];
        assert!(decode_candidates(&s, &d, &anchors).is_err());
    }

    #[test]
    fn delta_channels_follow_slot() {
        let cfg = AnchorConfig { scales: vec![8.0], ratios: vec![1.0], angles: vec![0.0, 1.0], stride: 4 };
        let anchors = generate_anchors(&cfg, 2, 2);
        let s = Tensor::from_fn([1, 2, 2, 2], |_, c, y, x| (c + 2 * y + 4 * x) as f64 / 10.0);
        // dx = 0.5 for slot 1 of cell (1, 0)
        let d = Tensor::from_fn([1, 10, 2, 2], |_, c, y, x| if c == 5 && y == 1 && x == 0 { 0.5 } else { 0.0 });
        let out = decode_candidates(&s, &d, &anchors).unwrap();
        assert_eq!(out[5].rbox.x, anchors[5].x + 4.0);
        assert_eq!(out[5].score, 0.3);
        assert_eq!(out[4].rbox, anchors[4]);
    }

    fn proposals_strategy() -> impl proptest::strategy::Strategy<Value = Vec<Proposal<f64>>> {
        use proptest::prelude::*;
        prop::collection::vec(
            (0.0..50.0, 0.0..50.0, 2.0..20.0, 2.0..20.0, 0.0..std::f64::consts::PI, 0u8..8),
            0..40,
        )
        .prop_map(|v| {
            v.into_iter()
                .map(|(x, y, h, w, t, s)| Proposal { rbox: RotatedBox::new(x, y, h, w, t), score: s as f64 / 8.0 })
                .collect()
        })
    }

    proptest::proptest! {
        #[test]
        fn nms_keeps_a_non_overlapping_subset(props in proposals_strategy(), thr in 0.05..0.95f64) {
            let kept = nms_rotated_indices(&props, thr);
            let mut sorted = kept.clone();
            sorted.sort_unstable();
            sorted.dedup();
            proptest::prop_assert_eq!(sorted.len(), kept.len());
            proptest::prop_assert!(kept.iter().all(|&i| i < props.len()));
            for (n, &i) in kept.iter().enumerate() {
                for &j in &kept[n + 1..] {
                    proptest::prop_assert!(iou_rotated(&props[i].rbox, &props[j].rbox) <= thr);
                    proptest::prop_assert!(props[i].score >= props[j].score);
                }
            }
            // every dropped box overlaps some kept box with at least its score
            for i in (0..props.len()).filter(|i| !kept.contains(i)) {
                let covered = kept.iter().any(|&k| {
                    props[k].score >= props[i].score && iou_rotated(&props[k].rbox, &props[i].rbox) > thr
                });
                proptest::prop_assert!(covered, "box {} dropped without a cause", i);
            }
        }

        #[test]
        fn selection_is_deterministic(props in proposals_strategy(), pre in 1usize..50, post in 1usize..50) {
            let cfg = ProposalConfig { pre_nms_k: pre, nms_iou: 0.5, post_nms_k: post };
            let a = select_proposals(&props, &cfg);
            proptest::prop_assert!(a.len() <= post.min(pre));
            proptest::prop_assert_eq!(a, select_proposals(&props, &cfg));
        }
    }
}
