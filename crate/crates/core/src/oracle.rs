//! Slow, independently written reference implementations.
//!
//! Each function recomputes a result the straightforward way so that the
//! optimized code paths can be checked against it.

use std::collections::BTreeMap;

use num_rational::Ratio;

use crate::dataio::{Detection, GroundTruth};
use crate::eval::IouMode;
use crate::geometry::{iou_rotated, RotatedBox};
use crate::rpn::{Proposal, ProposalConfig};
use crate::tensor::Tensor;

/// Greedy NMS by repeated selection: take the best remaining box (highest
/// score, then lowest index), drop everything overlapping it, repeat.
pub fn brute_nms(props: &[Proposal<f64>], iou_thresh: f64) -> Vec<usize> {
    let mut alive: Vec<usize> = (0..props.len()).collect();
    let mut kept = Vec::new();
    while !alive.is_empty() {
        let mut best = 0;
        for (pos, &i) in alive.iter().enumerate() {
            if props[i].score > props[alive[best]].score {
                best = pos;
            }
        }
        let winner = alive.remove(best);
        kept.push(winner);
        alive.retain(|&i| iou_rotated(&props[winner].rbox, &props[i].rbox) <= iou_thresh);
    }
    kept
}

/// Proposal selection by repeated selection of the best remaining candidate.
pub fn brute_proposals(cands: &[Proposal<f64>], cfg: &ProposalConfig) -> Vec<Proposal<f64>> {
    let mut order = Vec::new();
    let mut used = vec![false; cands.len()];
    while order.len() < cfg.pre_nms_k.min(cands.len()) {
        let mut best: Option<usize> = None;
        for i in 0..cands.len() {
            if !used[i] && best.is_none_or(|b| cands[i].score > cands[b].score) {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        used[b] = true;
        order.push(cands[b]);
    }
    let mut out: Vec<_> = brute_nms(&order, cfg.nms_iou).into_iter().map(|i| order[i]).collect();
    out.truncate(cfg.post_nms_k);
    out
}

/// Exact per-class AP by re-evaluating every prefix of the ranked detections.
///
/// For each prefix the matching is redone from scratch; AP is then the sum
/// over recall increments of the best precision at that recall or beyond.
pub fn brute_ap(dets: &[Detection], gts: &[GroundTruth], iou_thresh: f64, mode: IouMode) -> BTreeMap<String, Ratio<i64>> {
    let mut classes: Vec<&str> = gts.iter().map(|g| g.class.as_str()).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut out = BTreeMap::new();
    for class in classes {
        let g: Vec<&GroundTruth> = gts.iter().filter(|x| x.class == class).collect();
        let npos = g.iter().filter(|x| !x.difficult).count() as i64;
        if npos == 0 {
            continue;
        }
        // insertion sort keeps equal scores in input order
        let mut ranked: Vec<&Detection> = Vec::new();
        for d in dets.iter().filter(|d| d.class == class) {
            let pos = ranked.iter().position(|r| r.score < d.score).unwrap_or(ranked.len());
            ranked.insert(pos, d);
        }
        // (recall, precision) after each counted prefix
        let mut points: Vec<(Ratio<i64>, Ratio<i64>)> = Vec::new();
        for k in 1..=ranked.len() {
            let (tp, counted, last_counted) = evaluate_prefix(&ranked[..k], &g, iou_thresh, mode);
            if last_counted {
                points.push((Ratio::new(tp, npos), Ratio::new(tp, counted)));
            }
        }
        let mut ap = Ratio::from_integer(0);
        let mut prev_recall = Ratio::from_integer(0);
        for (i, &(r, _)) in points.iter().enumerate() {
            if r > prev_recall {
                let best = points[i..].iter().map(|p| p.1).max().unwrap();
                ap += (r - prev_recall) * best;
                prev_recall = r;
            }
        }
        out.insert(class.to_owned(), ap);
    }
    out
}

/// `(true positives, counted detections, whether the last one counted)`.
fn evaluate_prefix(dets: &[&Detection], gts: &[&GroundTruth], iou_thresh: f64, mode: IouMode) -> (i64, i64, bool) {
    let mut matched = vec![false; gts.len()];
    let (mut tp, mut counted, mut last) = (0, 0, false);
    for d in dets {
        let candidates: Vec<(usize, f64)> = (0..gts.len())
            .filter(|&j| !matched[j] && gts[j].source_id == d.source_id)
            .map(|j| (j, mode.iou(&d.rbox, &gts[j].rbox)))
            .filter(|&(_, iou)| iou >= iou_thresh)
            .collect();
        let best = candidates
            .iter()
            .fold(None::<(usize, f64)>, |acc, &(j, iou)| match acc {
                Some((_, b)) if b >= iou => acc,
                _ => Some((j, iou)),
            });
        last = true;
        match best {
            Some((j, _)) if gts[j].difficult => last = false,
            Some((j, _)) => {
                matched[j] = true;
                tp += 1;
                counted += 1;
            }
            None => counted += 1,
        }
    }
    (tp, counted, last)
}

/// Axis-aligned max pooling of a `θ = 0` box with one sample per cell,
/// sampling with the tent-function form of bilinear interpolation.
pub fn axis_aligned_pool(feat: &Tensor<f64>, stride: f64, roi: &RotatedBox<f64>, rows: usize, cols: usize) -> Tensor<f64> {
    let [_, channels, h, w] = feat.shape();
    let (cell_x, cell_y) = (roi.h / rows as f64, roi.w / cols as f64);
    let (x0, y0) = (roi.x - roi.h / 2.0, roi.y - roi.w / 2.0);
    Tensor::from_fn([1, channels, rows, cols], |_, c, u, v| {
        let gx = (x0 + (u as f64 + 0.5) * cell_x) / stride - 0.5;
        let gy = (y0 + (v as f64 + 0.5) * cell_y) / stride - 0.5;
        let mut acc = 0.0;
        for i in 0..h {
            let wy = (1.0 - (gy - i as f64).abs()).max(0.0);
            if wy == 0.0 {
                continue;
            }
            for j in 0..w {
                let wx = (1.0 - (gx - j as f64).abs()).max(0.0);
                acc += wx * wy * feat.at(0, c, i, j);
            }
        }
        acc
    })
}
