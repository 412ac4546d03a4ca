//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6, PI};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rotdet::anchors::{decode_delta, encode_delta, generate_anchors, AnchorConfig, BoxDelta};
use rotdet::dataio::{tile_image, Detection, GroundTruth, Image};
use rotdet::eval::{all_point_ap, compute_ap, compute_ap_exact, pr_curve, IouMode, MatchOutcome};
use rotdet::geometry::{
    iou_raster_oracle, iou_rotated, rotate_point, subregion_corner, Point, RotatedBox, RotationMode, SubGrid,
};
use rotdet::oracle::{axis_aligned_pool, brute_ap, brute_nms, brute_proposals};
use rotdet::pipeline::run_pipeline;
use rotdet::pooling::{
    bilinear_taps, pool_with_argmax, rotation_pool_backward, rotation_pool_forward, sample_points, PoolSpec,
};
use rotdet::rpn::{generate_proposals, nms_rotated, Proposal, ProposalConfig};
use rotdet::selfcheck::random_micro_fixture;
use rotdet::synth::{planted_scene, render_boxes, template_config, template_weights, PLANTED_CLASS, PLANTED_SIZE};
use rotdet::Tensor64;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rb(x: f64, y: f64, h: f64, w: f64, t: f64) -> RotatedBox<f64> {
    RotatedBox::new(x, y, h, w, t)
}

fn close(p: Point<f64>, x: f64, y: f64, tol: f64) -> bool {
    (p.x - x).abs() <= tol && (p.y - y).abs() <= tol
}

/// Axis-aligned IoU from interval overlaps; `qa`/`qb` mark quarter-turned boxes.
fn interval_iou(a: &RotatedBox<f64>, b: &RotatedBox<f64>, qa: bool, qb: bool) -> f64 {
    let ext = |r: &RotatedBox<f64>, q: bool| {
        let (ex, ey) = if q { (r.w, r.h) } else { (r.h, r.w) };
        (r.x - ex / 2.0, r.x + ex / 2.0, r.y - ey / 2.0, r.y + ey / 2.0)
    };
    let (a0, a1, a2, a3) = ext(a, qa);
    let (b0, b1, b2, b3) = ext(b, qb);
    let ix = (a1.min(b1) - a0.max(b0)).max(0.0);
    let iy = (a3.min(b3) - a2.max(b2)).max(0.0);
    let inter = ix * iy;
    inter / (a.h * a.w + b.h * b.w - inter)
}

fn iou_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let pairs = 1000;
    for _ in 0..pairs {
        let a = rb(
            rng.gen_range(0.0..100.0),
            rng.gen_range(0.0..100.0),
            rng.gen_range(1.0..100.0),
            rng.gen_range(1.0..100.0),
            rng.gen_range(0.0..PI),
        );
        let b = rb(
            a.x + rng.gen_range(-60.0..60.0),
            a.y + rng.gen_range(-60.0..60.0),
            rng.gen_range(1.0..100.0),
            rng.gen_range(1.0..100.0),
            rng.gen_range(0.0..PI),
        );
        worst = worst.max((iou_rotated(&a, &b) - iou_raster_oracle(&a, &b, 1000)).abs());
        ensure(iou_rotated(&a, &a) == 1.0, || format!("iou(a, a) != 1 for {a:?}"))?;
    }
    ensure(worst < 0.01, || format!("max |iou - raster| = {worst}"))?;

    let mut worst_axis: f64 = 0.0;
    for _ in 0..1000 {
        let (qa, qb) = (rng.gen_bool(0.5), rng.gen_bool(0.5));
        let angle = |q: bool| if q { FRAC_PI_2 } else { 0.0 };
        let a = rb(
            rng.gen_range(0.0..50.0),
            rng.gen_range(0.0..50.0),
            rng.gen_range(1.0..100.0),
            rng.gen_range(1.0..100.0),
            angle(qa),
        );
        let b = rb(
            rng.gen_range(0.0..50.0),
            rng.gen_range(0.0..50.0),
            rng.gen_range(1.0..100.0),
            rng.gen_range(1.0..100.0),
            angle(qb),
        );
        worst_axis = worst_axis.max((iou_rotated(&a, &b) - interval_iou(&a, &b, qa, qb)).abs());
    }
    ensure(worst_axis <= 1e-9, || format!("axis-aligned error {worst_axis}"))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "{pairs} pairs, max raster error {worst:.5}; axis-aligned error {worst_axis:.1e}; {secs:.1} s"
    ))
}

fn sub_region_geometry() -> Outcome {
    let b = rb(10.0, 10.0, 4.0, 4.0, 0.0);
    let g = SubGrid::new(&b, 2, 2).map_err(|e| e.to_string())?;
    let c00 = subregion_corner(&b, &g, 0, 0).map_err(|e| e.to_string())?;
    let c11 = subregion_corner(&b, &g, 1, 1).map_err(|e| e.to_string())?;
    ensure(c00 == Point::new(8.0, 8.0), || format!("corner (0,0) = {c00:?}"))?;
    ensure(c11 == Point::new(10.0, 10.0), || format!("corner (1,1) = {c11:?}"))?;
    let q = rb(0.0, 0.0, 2.0, 4.0, FRAC_PI_2);
    let g1 = SubGrid::new(&q, 1, 1).map_err(|e| e.to_string())?;
    let cq = subregion_corner(&q, &g1, 0, 0).map_err(|e| e.to_string())?;
    ensure(close(cq, 2.0, -1.0, 1e-12), || format!("quarter-turn corner = {cq:?}"))?;
    ensure(subregion_corner(&b, &g, 2, 0).is_err(), || "out-of-range index accepted".into())?;

    let o = Point::new(0.0, 0.0);
    let r = rotate_point(Point::new(2.0, 0.0), o, FRAC_PI_6, RotationMode::Standard);
    ensure(close(r, 3f64.sqrt(), 1.0, 1e-12), || format!("pi/6 rotation = {r:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = Point::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
        let c = Point::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
        let t = rng.gen_range(0.0..PI);
        let r = rotate_point(p, c, t, RotationMode::Standard);
        worst = worst.max((r.dist(c) - p.dist(c)).abs());
    }
    ensure(worst <= 1e-6, || format!("standard rotation moved a distance by {worst}"))?;

    let p = Point::new(1.0, 1.0);
    let skew = rotate_point(p, o, FRAC_PI_4, RotationMode::SameSignCrossTerms);
    let (before, after) = (p.dist(o), skew.dist(o));
    ensure((after - 2.0).abs() < 1e-12 && (before - after).abs() > 0.5, || {
        format!("literal-matrix mode at pi/4 maps |p| {before} to {after}")
    })?;
    Ok(format!(
        "three corner examples exact; isometry error {worst:.1e}; literal-matrix mode stretches {before:.4} to {after:.4}"
    ))
}

struct PoolCase {
    feat: Tensor64,
    stride: f64,
    roi: RotatedBox<f64>,
    spec: PoolSpec,
}

fn random_pool_case(rng: &mut ChaCha8Rng, theta: Option<f64>, samples: Option<usize>) -> PoolCase {
    let (c, h, w) = (rng.gen_range(1..=8), rng.gen_range(2..=16), rng.gen_range(2..=16));
    let feat = Tensor64::from_fn([1, c, h, w], |_, _, _, _| rng.gen_range(-1.0..1.0));
    let stride = [1.0, 2.0, 4.0, 8.0][rng.gen_range(0..4)];
    let (fw, fh) = (w as f64 * stride, h as f64 * stride);
    let roi = rb(
        rng.gen_range(0.0..fw),
        rng.gen_range(0.0..fh),
        rng.gen_range(stride..fw.max(fh)),
        rng.gen_range(stride..fw.max(fh)),
        theta.unwrap_or_else(|| rng.gen_range(0.0..PI)),
    );
    let spec = PoolSpec {
        rows: rng.gen_range(1..=7),
        cols: rng.gen_range(1..=7),
        samples: samples.unwrap_or_else(|| rng.gen_range(1..=3)),
    };
    PoolCase { feat, stride, roi, spec }
}

fn pooling_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let eps = 1e-3;
    let (mut accepted, mut skipped, mut checked) = (0, 0, 0usize);
    let (mut worst_rel, mut worst_adj): (f64, f64) = (0.0, 0.0);
    while accepted < 100 {
        let case = random_pool_case(&mut rng, None, None);
        let PoolCase { feat, stride, roi, spec } = &case;
        let shape = feat.shape();
        let [_, c, h, w] = shape;
        let (out, argmax) = rotation_pool_forward(feat, *stride, roi, spec).map_err(|e| e.to_string())?;
        let g = Tensor64::from_fn(out.shape(), |_, _, _, _| rng.gen_range(-1.0..1.0));
        let grad = rotation_pool_backward(&g, &argmax, *stride, roi, spec, shape).map_err(|e| e.to_string())?;
        let loss = |f: &Tensor64| -> Result<(f64, Vec<u32>), String> {
            let (o, am) = rotation_pool_forward(f, *stride, roi, spec).map_err(|e| e.to_string())?;
            let l = o.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
            let winners = (0..c)
                .flat_map(|ch| (0..spec.rows).flat_map(move |u| (0..spec.cols).map(move |v| (ch, u, v))))
                .map(|(ch, u, v)| am.get(ch, u, v))
                .collect();
            Ok((l, winners))
        };
        let (_, base_winners) = loss(feat)?;

        // every element a sample reads, plus a few it does not
        let mut elems: Vec<usize> = Vec::new();
        for p in sample_points(roi, spec, *stride).map_err(|e| e.to_string())? {
            for (i, _) in bilinear_taps::<f64>(h, w, p) {
                for ch in 0..c {
                    elems.push(ch * h * w + i);
                }
            }
        }
        for _ in 0..10 {
            elems.push(rng.gen_range(0..c * h * w));
        }
        elems.sort_unstable();
        elems.dedup();

        let mut tie = false;
        let mut rel_here: f64 = 0.0;
        for &i in &elems {
            let mut plus = feat.clone();
            plus.data_mut()[i] += eps;
            let mut minus = feat.clone();
            minus.data_mut()[i] -= eps;
            let (lp, wp) = loss(&plus)?;
            let (lm, wm) = loss(&minus)?;
            if wp != base_winners || wm != base_winners {
                tie = true;
                break;
            }
            let fd = (lp - lm) / (2.0 * eps);
            let an = grad.data()[i];
            let scale = fd.abs().max(an.abs());
            if scale > 0.0 {
                rel_here = rel_here.max((fd - an).abs() / scale.max(1e-6));
            }
        }
        if tie {
            skipped += 1;
            continue;
        }
        checked += elems.len();
        worst_rel = worst_rel.max(rel_here);

        let delta = Tensor64::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0));
        let jd = pool_with_argmax(&delta, *stride, roi, &argmax).map_err(|e| e.to_string())?;
        let lhs: f64 = g.data().iter().zip(jd.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = grad.data().iter().zip(delta.data()).map(|(a, b)| a * b).sum();
        worst_adj = worst_adj.max((lhs - rhs).abs());
        accepted += 1;
    }
    ensure(worst_rel <= 1e-4, || format!("finite-difference relative error {worst_rel:.2e}"))?;
    ensure(worst_adj <= 1e-5, || format!("adjoint mismatch {worst_adj:.2e}"))?;
    Ok(format!(
        "{accepted} instances ({skipped} skipped at argmax ties), {checked} elements; max rel error {worst_rel:.1e}, adjoint gap {worst_adj:.1e}"
    ))
}

fn axis_aligned_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let PoolCase { feat, stride, roi, spec } = random_pool_case(&mut rng, Some(0.0), Some(1));
        let (fast, _) = rotation_pool_forward(&feat, stride, &roi, &spec).map_err(|e| e.to_string())?;
        let slow = axis_aligned_pool(&feat, stride, &roi, spec.rows, spec.cols);
        ensure(fast.shape() == slow.shape(), || "shape mismatch".into())?;
        for (a, b) in fast.data().iter().zip(slow.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-6, || format!("max error {worst:.2e}"))?;
    Ok(format!("200 instances, max error {worst:.1e}"))
}

fn nms_and_proposals() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut sets = 0;
    for _ in 0..250 {
        let n = rng.gen_range(0..=100);
        let props: Vec<Proposal<f64>> = (0..n)
            .map(|_| Proposal {
                rbox: rb(
                    rng.gen_range(0.0..80.0),
                    rng.gen_range(0.0..80.0),
                    rng.gen_range(3.0..40.0),
                    rng.gen_range(3.0..40.0),
                    rng.gen_range(0.0..PI),
                ),
                score: rng.gen_range(0..25) as f64 / 25.0,
            })
            .collect();
        let thr = rng.gen_range(0.05..0.95);
        let want: Vec<_> = brute_nms(&props, thr).into_iter().map(|i| props[i]).collect();
        ensure(nms_rotated(&props, thr) == want, || format!("NMS differs on set {sets}"))?;
        sets += 1;
    }

    for case in 0..250 {
        let (h, w) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let acfg = AnchorConfig {
            scales: vec![rng.gen_range(8.0..24.0)],
            ratios: vec![1.0, 2.0],
            angles: vec![0.0, FRAC_PI_4, FRAC_PI_2],
            stride: 8,
        };
        let anchors = generate_anchors(&acfg, h, w);
        let a = acfg.per_cell();
        let scores = Tensor64::from_fn([1, a, h, w], |_, _, _, _| rng.gen_range(0..10) as f64 / 10.0);
        let deltas = Tensor64::from_fn([1, 5 * a, h, w], |_, _, _, _| rng.gen_range(-0.5..0.5));
        // decode by walking the maps directly
        let mut cands = Vec::new();
        for y in 0..h {
            for x in 0..w {
                for s in 0..a {
                    let anchor = anchors[(y * w + x) * a + s];
                    let d = BoxDelta {
                        dx: deltas.at(0, 5 * s, y, x),
                        dy: deltas.at(0, 5 * s + 1, y, x),
                        dh: deltas.at(0, 5 * s + 2, y, x),
                        dw: deltas.at(0, 5 * s + 3, y, x),
                        dtheta: deltas.at(0, 5 * s + 4, y, x),
                    };
                    cands.push(Proposal { rbox: decode_delta(&anchor, &d), score: scores.at(0, s, y, x) });
                }
            }
        }
        let cfg = ProposalConfig {
            pre_nms_k: rng.gen_range(1..=100),
            nms_iou: rng.gen_range(0.1..0.9),
            post_nms_k: rng.gen_range(1..=100),
        };
        let got = generate_proposals(&scores, &deltas, &anchors, &cfg).map_err(|e| e.to_string())?;
        ensure(got == brute_proposals(&cands, &cfg), || format!("proposals differ on case {case}"))?;
        sets += 1;
    }
    Ok(format!("{sets} random sets matched exactly"))
}

fn delta_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mut draw = || {
            rb(
                rng.gen_range(-500.0..500.0),
                rng.gen_range(-500.0..500.0),
                rng.gen_range(1.0..200.0),
                rng.gen_range(1.0..200.0),
                rng.gen_range(0.0..PI),
            )
        };
        let (anchor, target) = (draw(), draw());
        let d = encode_delta(&anchor, &target).map_err(|e| e.to_string())?;
        let back = decode_delta(&anchor, &d);
        let dt = (back.theta - target.theta).rem_euclid(PI);
        let dt = dt.min(PI - dt);
        for e in [back.x - target.x, back.y - target.y, back.h - target.h, back.w - target.w, dt] {
            worst = worst.max(e.abs());
        }
    }
    ensure(worst <= 1e-5, || format!("max error {worst:.2e}"))?;
    Ok(format!("1000 pairs, max error {worst:.1e}"))
}

fn tiling_protocol() -> Outcome {
    let p = tile_image(1100, 1100, 600, 100).map_err(|e| e.to_string())?;
    let mut origins: Vec<_> = p.iter().map(|s| (s.origin_x, s.origin_y)).collect();
    origins.sort_unstable();
    ensure(origins == [(0, 0), (0, 500), (500, 0), (500, 500)], || format!("origins {origins:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let expected_count = |len: usize| if len <= 600 { 1 } else { 1 + (len - 600).div_ceil(500) };
    for _ in 0..100 {
        let (w, h) = (rng.gen_range(1..=2500), rng.gen_range(1..=2500));
        let patches = tile_image(w, h, 600, 100).map_err(|e| e.to_string())?;
        ensure(patches.len() == expected_count(w) * expected_count(h), || {
            format!("{w}x{h}: {} patches", patches.len())
        })?;
        let mut covered = vec![false; w * h];
        for s in &patches {
            ensure(s.origin_x + s.width <= w && s.origin_y + s.height <= h, || {
                format!("{w}x{h}: patch {:?} leaves the image", (s.origin_x, s.origin_y))
            })?;
            for y in s.origin_y..s.origin_y + s.height {
                covered[y * w + s.origin_x..y * w + s.origin_x + s.width].fill(true);
            }
        }
        ensure(covered.iter().all(|&c| c), || format!("{w}x{h}: pixels left uncovered"))?;
    }
    Ok("1100x1100 gives origins {0,500}^2; 100 random sizes fully covered".into())
}

fn det(score: f64, rbox: RotatedBox<f64>) -> Detection {
    Detection { source_id: "img".into(), class: "car".into(), score, rbox }
}

fn map_harness() -> Outcome {
    let g1 = rb(20.0, 20.0, 10.0, 6.0, 0.3);
    let g2 = rb(60.0, 60.0, 12.0, 8.0, 1.2);
    let gts: Vec<GroundTruth> = [g1, g2]
        .into_iter()
        .map(|rbox| GroundTruth { source_id: "img".into(), class: "car".into(), rbox, difficult: false })
        .collect();
    let dets = vec![det(0.9, g1), det(0.8, rb(100.0, 20.0, 10.0, 6.0, 0.0)), det(0.7, g2)];
    let exact = compute_ap_exact(&dets, &gts, 0.5, IouMode::Obb);
    ensure(exact["car"] == Ratio::new(5, 6), || format!("exact AP {}", exact["car"]))?;
    let outcomes = [MatchOutcome::TruePositive, MatchOutcome::FalsePositive, MatchOutcome::TruePositive];
    let curve = pr_curve::<Ratio<i64>>(&outcomes, 2);
    let r = |n, d| Ratio::new(n, d);
    ensure(curve == [(r(1, 2), r(1, 1)), (r(1, 2), r(1, 2)), (r(1, 1), r(2, 3))], || format!("curve {curve:?}"))?;
    ensure(all_point_ap(&curve) == r(5, 6), || "rational AP".into())?;
    let report = compute_ap(&dets, &gts, 0.5, IouMode::Obb);
    let float_gap = (report.per_class["car"].ap - 5.0 / 6.0).abs();
    ensure(float_gap <= 2.0 * f64::EPSILON, || format!("f64 AP off by {float_gap:e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut fixtures = 0;
    for _ in 0..200 {
        let (dets, gts) = random_micro_fixture(&mut rng);
        for mode in [IouMode::Obb, IouMode::Hbb] {
            let fast = compute_ap_exact(&dets, &gts, 0.5, mode);
            let slow = brute_ap(&dets, &gts, 0.5, mode);
            ensure(fast == slow, || format!("fixture {fixtures} ({mode}): {fast:?} vs {slow:?}"))?;
        }
        fixtures += 1;
    }
    Ok(format!("AP = 5/6 exactly (f64 gap {float_gap:.1e}); {fixtures} micro-fixtures x 2 modes match exactly"))
}

/// Quarter turn of a square scene: `(x, y) -> (S - y, x)`.
fn turned_scene(boxes: &[RotatedBox<f64>]) -> Vec<RotatedBox<f64>> {
    let s = PLANTED_SIZE as f64;
    boxes.iter().map(|b| rb(s - b.y, b.x, b.h, b.w, b.theta + FRAC_PI_2)).collect()
}

fn planted_objects() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = template_config();
    let weights = dir.path().join("template.rdw");
    template_weights(&cfg).map_err(|e| e.to_string())?.write(&weights).map_err(|e| e.to_string())?;
    cfg.weights_path = Some(weights);

    let (image, gts) = planted_scene();
    let planted: Vec<_> = gts.iter().map(|g| g.rbox).collect();
    let turned = turned_scene(&planted);
    let scenes = [
        ("upright", image, planted),
        ("turned", render_boxes(PLANTED_SIZE, PLANTED_SIZE, &turned), turned),
    ];
    let mut summary = Vec::new();
    for (id, image, boxes) in scenes {
        let dets = run_pipeline(&image, id, &cfg).map_err(|e| e.to_string())?;
        ensure(dets.len() >= 3, || format!("{id}: {} detections", dets.len()))?;
        let ious: Vec<f64> = dets
            .iter()
            .map(|d| boxes.iter().map(|b| iou_rotated(&d.rbox, b)).fold(0.0, f64::max))
            .collect();
        ensure(ious.iter().all(|&v| v >= 0.5), || format!("{id}: IoUs {ious:?}"))?;
        let gts: Vec<GroundTruth> = boxes
            .iter()
            .map(|&rbox| GroundTruth { source_id: id.into(), class: PLANTED_CLASS.into(), rbox, difficult: false })
            .collect();
        let map = compute_ap(&dets, &gts, 0.5, IouMode::Obb).map;
        ensure(map >= 0.9, || format!("{id}: mAP {map}"))?;
        let min_iou = ious.iter().copied().fold(1.0, f64::min);
        summary.push(format!("{id}: {} detections, min IoU {min_iou:.3}, mAP {map:.3}", dets.len()));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{}; {secs:.2} s", summary.join("; ")))
}

fn cli(args: &[&str], dir: &Path) -> Result<std::process::Output, String> {
    Command::new(env!("CARGO_BIN_EXE_rotdet"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = template_config();
    template_weights(&cfg)
        .map_err(|e| e.to_string())?
        .write(dir.path().join("template.rdw"))
        .map_err(|e| e.to_string())?;
    let text = cfg.to_text() + "weights.path = template.rdw\n";
    std::fs::write(dir.path().join("model.cfg"), text).map_err(|e| e.to_string())?;
    let (image, _): (Image, _) = planted_scene();
    image.write(dir.path().join("scene.pgm")).map_err(|e| e.to_string())?;

    let mut outputs = Vec::new();
    for name in ["a.txt", "b.txt"] {
        let out = cli(&["detect", "--config", "model.cfg", "scene.pgm", "--out", name], dir.path())?;
        ensure(out.status.success(), || format!("detect failed: {}", String::from_utf8_lossy(&out.stderr)))?;
        outputs.push(std::fs::read(dir.path().join(name)).map_err(|e| e.to_string())?);
    }
    ensure(!outputs[0].is_empty() && outputs[0] == outputs[1], || "detect outputs differ or are empty".into())?;

    let out = cli(&["bench", "--config", "model.cfg", "scene.pgm", "--repeats", "3"], dir.path())?;
    ensure(out.status.success(), || format!("bench failed: {}", String::from_utf8_lossy(&out.stderr)))?;
    let report = String::from_utf8_lossy(&out.stdout).into_owned();
    let field = |k: &str| -> Result<String, String> {
        report
            .lines()
            .find_map(|l| l.strip_prefix(k).and_then(|r| r.trim_start().strip_prefix('=')).map(|v| v.trim().to_owned()))
            .ok_or_else(|| format!("bench report lacks {k}"))
    };
    let num = |k: &str| -> Result<f64, String> { field(k)?.parse().map_err(|_| format!("{k} is not a number")) };
    ensure(field("repeats")? == "3", || "repeats != 3".into())?;
    for k in ["fps_exclusive", "fps_inclusive"] {
        let (median, p95) = (num(&format!("{k}_median"))?, num(&format!("{k}_p95"))?);
        ensure(median.is_finite() && median > 0.0 && p95 >= median, || format!("{k}: median {median}, p95 {p95}"))?;
        ensure(field(&format!("{k}_samples"))?.split_whitespace().count() == 3, || format!("{k} sample count"))?;
    }
    ensure(field("deterministic")? == "true", || "bench saw differing outputs".into())?;
    let short = cli(&["bench", "--config", "model.cfg", "scene.pgm", "--repeats", "2"], dir.path())?;
    ensure(!short.status.success(), || "bench accepted 2 repeats".into())?;
    Ok(format!(
        "two detect runs identical ({} bytes); bench median {:.1} fps over 3 repeats",
        outputs[0].len(),
        num("fps_exclusive_median")?
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("rotated IoU against raster oracle", iou_oracle),
        ("sub-region corners and rotation modes", sub_region_geometry),
        ("rotation pooling gradient", pooling_gradient),
        ("axis-aligned pooling reduction", axis_aligned_reduction),
        ("NMS and proposal selection oracle", nms_and_proposals),
        ("delta coding round trip", delta_round_trip),
        ("patch tiling protocol", tiling_protocol),
        ("mAP harness", map_harness),
        ("planted-object end to end", planted_objects),
        ("determinism and bench report", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
