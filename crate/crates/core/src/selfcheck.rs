//! Quick seeded comparisons of the fast paths against [`crate::oracle`],
//! run by the `selfcheck` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::anchors::{decode_delta, encode_delta};
use crate::dataio::{tile_image, Detection, GroundTruth};
use crate::eval::{compute_ap, compute_ap_exact, IouMode};
use crate::geometry::{iou_raster_oracle, iou_rotated, RotatedBox};
use crate::oracle::{axis_aligned_pool, brute_ap, brute_nms, brute_proposals};
use crate::pipeline::Network;
use crate::pooling::{rotation_pool_forward, PoolSpec};
use crate::rpn::{nms_rotated_indices, select_proposals, Proposal, ProposalConfig};
use crate::synth::{planted_scene, template_config, template_weights, PLANTED_SOURCE};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub fn random_box(rng: &mut impl Rng, extent: f64, min_side: f64, max_side: f64) -> RotatedBox<f64> {
    RotatedBox::new(
        rng.gen_range(0.0..extent),
        rng.gen_range(0.0..extent),
        rng.gen_range(min_side..max_side),
        rng.gen_range(min_side..max_side),
        rng.gen_range(0.0..std::f64::consts::PI),
    )
}

/// Proposals with scores drawn from a few levels so that ties occur.
pub fn random_proposals(rng: &mut impl Rng, n: usize) -> Vec<Proposal<f64>> {
    (0..n)
        .map(|_| Proposal {
            rbox: random_box(rng, 60.0, 4.0, 30.0),
            score: rng.gen_range(0..20) as f64 / 20.0,
        })
        .collect()
}

/// A small detection/ground-truth fixture over two classes and two sources.
pub fn random_micro_fixture(rng: &mut impl Rng) -> (Vec<Detection>, Vec<GroundTruth>) {
    let classes = ["a", "b"];
    let sources = ["s0", "s1"];
    let n_gt = rng.gen_range(1..=4);
    let gts: Vec<GroundTruth> = (0..n_gt)
        .map(|_| GroundTruth {
            source_id: sources[rng.gen_range(0..2)].into(),
            class: classes[rng.gen_range(0..2)].into(),
            rbox: random_box(rng, 40.0, 8.0, 20.0),
            difficult: rng.gen_bool(0.25),
        })
        .collect();
    let n_det = rng.gen_range(0..=6);
    let dets = (0..n_det)
        .map(|_| {
            // mostly jittered copies of ground truth so matches happen
            let (source_id, class, rbox) = if rng.gen_bool(0.7) {
                let g = &gts[rng.gen_range(0..gts.len())];
                let b = g.rbox;
                let j = rng.gen_range(0.0..4.0);
                (g.source_id.clone(), g.class.clone(), RotatedBox::new(b.x + j, b.y - j / 2.0, b.h, b.w, b.theta))
            } else {
                (
                    sources[rng.gen_range(0..2)].to_owned(),
                    classes[rng.gen_range(0..2)].to_owned(),
                    random_box(rng, 40.0, 8.0, 20.0),
                )
            };
            Detection {
                source_id,
                class,
                score: rng.gen_range(1..6) as f64 / 5.0,
                rbox,
            }
        })
        .collect();
    (dets, gts)
}

fn check_iou(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let a = random_box(rng, 100.0, 1.0, 100.0);
        let b = random_box(rng, 100.0, 1.0, 100.0);
        worst = worst.max((iou_rotated(&a, &b) - iou_raster_oracle(&a, &b, 500)).abs());
    }
    CheckResult::new("rotated IoU vs raster", worst < 0.02, format!("max error {worst:.5} over 50 pairs"))
}

fn check_nms(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut bad = 0;
    for _ in 0..40 {
        let n = rng.gen_range(0..=60);
        let props = random_proposals(rng, n);
        let thr = rng.gen_range(0.1..0.9);
        bad += (nms_rotated_indices(&props, thr) != brute_nms(&props, thr)) as usize;
        let cfg = ProposalConfig {
            pre_nms_k: rng.gen_range(1..80),
            nms_iou: thr,
            post_nms_k: rng.gen_range(1..80),
        };
        bad += (select_proposals(&props, &cfg) != brute_proposals(&props, &cfg)) as usize;
    }
    CheckResult::new("NMS and proposals vs brute force", bad == 0, format!("{bad} mismatches in 80 comparisons"))
}

fn check_ap(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut bad = 0;
    for _ in 0..50 {
        let (dets, gts) = random_micro_fixture(rng);
        for mode in [IouMode::Obb, IouMode::Hbb] {
            let exact = compute_ap_exact(&dets, &gts, 0.5, mode);
            let fast = compute_ap(&dets, &gts, 0.5, mode);
            let agree = exact == brute_ap(&dets, &gts, 0.5, mode)
                && exact.iter().all(|(c, r)| {
                    let want = *r.numer() as f64 / *r.denom() as f64;
                    (fast.per_class[c].ap - want).abs() < 1e-12
                });
            bad += (!agree) as usize;
        }
    }
    CheckResult::new("AP vs exhaustive evaluator", bad == 0, format!("{bad} mismatches over 100 evaluations"))
}

fn check_pool(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let feat = Tensor::from_fn([1, 2, 12, 12], |_, _, _, _| rng.gen_range(-1.0..1.0));
        let stride = [1.0, 2.0, 4.0][rng.gen_range(0..3)];
        let extent = 12.0 * stride;
        let roi = RotatedBox::new(
            rng.gen_range(0.0..extent),
            rng.gen_range(0.0..extent),
            rng.gen_range(1.0..extent),
            rng.gen_range(1.0..extent),
            0.0,
        );
        let spec = PoolSpec { rows: rng.gen_range(1..5), cols: rng.gen_range(1..5), samples: 1 };
        let Ok((fast, _)) = rotation_pool_forward(&feat, stride, &roi, &spec) else {
            return CheckResult::new("axis-aligned pooling", false, "forward failed".into());
        };
        let slow = axis_aligned_pool(&feat, stride, &roi, spec.rows, spec.cols);
        for (x, y) in fast.data().iter().zip(slow.data()) {
            worst = worst.max((x - y).abs());
        }
    }
    CheckResult::new("axis-aligned pooling", worst < 1e-6, format!("max error {worst:.2e} over 30 RoIs"))
}

fn check_deltas(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let a = random_box(rng, 200.0, 2.0, 100.0);
        let t = random_box(rng, 200.0, 2.0, 100.0);
        let Ok(d) = encode_delta(&a, &t) else {
            return CheckResult::new("delta round trip", false, "encode failed".into());
        };
        let back = decode_delta(&a, &d);
        let dt = (back.theta - t.theta).abs();
        let dt = dt.min(std::f64::consts::PI - dt);
        for e in [back.x - t.x, back.y - t.y, back.h - t.h, back.w - t.w, dt] {
            worst = worst.max(e.abs());
        }
    }
    CheckResult::new("delta round trip", worst < 1e-5, format!("max error {worst:.2e} over 200 pairs"))
}

/// Every pixel of a `w x h` image lies in some patch and every patch fits.
pub fn tiling_covers(w: usize, h: usize, patch: usize, overlap: usize) -> bool {
    let Ok(patches) = tile_image(w, h, patch, overlap) else {
        return false;
    };
    let fits = patches
        .iter()
        .all(|p| p.origin_x + p.width <= w && p.origin_y + p.height <= h);
    let mut col = vec![false; w];
    let mut row = vec![false; h];
    for p in &patches {
        col[p.origin_x..p.origin_x + p.width].iter_mut().for_each(|c| *c = true);
        row[p.origin_y..p.origin_y + p.height].iter_mut().for_each(|r| *r = true);
    }
    // patches form a full grid, so covering both projections covers the image
    let xs: std::collections::BTreeSet<_> = patches.iter().map(|p| p.origin_x).collect();
    let ys: std::collections::BTreeSet<_> = patches.iter().map(|p| p.origin_y).collect();
    fits && col.iter().all(|&c| c) && row.iter().all(|&r| r) && patches.len() == xs.len() * ys.len()
}

fn check_tiling(rng: &mut ChaCha8Rng) -> CheckResult {
    let failures = (0..50)
        .filter(|_| !tiling_covers(rng.gen_range(1..3000), rng.gen_range(1..3000), 600, 100))
        .count();
    CheckResult::new("tiling coverage", failures == 0, format!("{failures} of 50 sizes uncovered"))
}

fn check_planted() -> CheckResult {
    let cfg = template_config();
    let run = || -> crate::Result<f64> {
        let net = Network::<f32>::from_store(&cfg, &template_weights(&cfg)?)?;
        let (image, gts) = planted_scene();
        let dets = net.detect(&image.to_tensor(), PLANTED_SOURCE)?;
        Ok(compute_ap(&dets, &gts, 0.5, IouMode::Obb).map)
    };
    match run() {
        Ok(map) => CheckResult::new("planted objects", map >= 0.9, format!("mAP {map:.4}")),
        Err(e) => CheckResult::new("planted objects", false, e.to_string()),
    }
}

pub fn run_selfcheck(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        check_iou(&mut rng),
        check_nms(&mut rng),
        check_ap(&mut rng),
        check_pool(&mut rng),
        check_deltas(&mut rng),
        check_tiling(&mut rng),
        check_planted(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selfcheck_passes() {
        for r in run_selfcheck(1) {
            assert!(r.passed, "{}", r.line());
        }
    }

    #[test]
    fn coverage_detects_the_standard_grid() {
        assert!(tiling_covers(1100, 1100, 600, 100));
        assert!(tiling_covers(5, 700, 600, 100));
    }
}
