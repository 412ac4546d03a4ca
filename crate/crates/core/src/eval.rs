//! VOC-style evaluation: greedy score-ordered matching and all-point AP.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num};

use crate::dataio::{Detection, GroundTruth};
use crate::error::{Error, Result};
use crate::geometry::{iou_rotated, to_horizontal, RotatedBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IouMode {
    /// Axis-aligned envelopes.
    Hbb,
    #[default]
    Obb,
}

impl IouMode {
    pub fn iou(self, a: &RotatedBox<f64>, b: &RotatedBox<f64>) -> f64 {
        match self {
            IouMode::Hbb => to_horizontal(a).iou(&to_horizontal(b)),
            IouMode::Obb => iou_rotated(a, b),
        }
    }
}

impl FromStr for IouMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hbb" => Ok(IouMode::Hbb),
            "obb" => Ok(IouMode::Obb),
            _ => Err(Error::Config(format!("unknown IoU mode {s:?}; use hbb or obb"))),
        }
    }
}

impl fmt::Display for IouMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IouMode::Hbb => "hbb",
            IouMode::Obb => "obb",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    TruePositive,
    FalsePositive,
    /// Best match was a difficult object; left out of the curve.
    Ignored,
}

/// Greedy matching for one class. `dets` must already be in descending
/// score order; the result is aligned with it.
pub fn match_detections(dets: &[&Detection], gts: &[&GroundTruth], iou_thresh: f64, mode: IouMode) -> Vec<MatchOutcome> {
    let mut taken = vec![false; gts.len()];
    dets.iter()
        .map(|d| {
            let mut best: Option<(f64, usize)> = None;
            for (j, g) in gts.iter().enumerate() {
                if taken[j] || g.source_id != d.source_id {
                    continue;
                }
                let iou = mode.iou(&d.rbox, &g.rbox);
                if iou >= iou_thresh && best.is_none_or(|(b, _)| iou > b) {
                    best = Some((iou, j));
                }
            }
            match best {
                None => MatchOutcome::FalsePositive,
                Some((_, j)) if gts[j].difficult => MatchOutcome::Ignored,
                Some((_, j)) => {
                    taken[j] = true;
                    MatchOutcome::TruePositive
                }
            }
        })
        .collect()
}

/// Precision/recall after each counted detection.
pub fn pr_curve<R>(outcomes: &[MatchOutcome], npos: usize) -> Vec<(R, R)>
where
    R: Num + Copy + FromPrimitive,
{
    let total = R::from_usize(npos).expect("count fits");
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut out = Vec::new();
    for o in outcomes {
        match o {
            MatchOutcome::Ignored => continue,
            MatchOutcome::TruePositive => tp += 1,
            MatchOutcome::FalsePositive => {}
        }
        seen += 1;
        let tp_r = R::from_usize(tp).expect("count fits");
        out.push((tp_r / total, tp_r / R::from_usize(seen).expect("count fits")));
    }
    out
}

/// All-point interpolated area under a `(recall, precision)` curve: the
/// precision envelope integrated over every recall step.
pub fn all_point_ap<R>(curve: &[(R, R)]) -> R
where
    R: Num + Copy + PartialOrd,
{
    let mut mrec = vec![R::zero()];
    let mut mpre = vec![R::zero()];
    for &(r, p) in curve {
        mrec.push(r);
        mpre.push(p);
    }
    mrec.push(R::one());
    mpre.push(R::zero());
    for i in (0..mpre.len() - 1).rev() {
        if mpre[i + 1] > mpre[i] {
            mpre[i] = mpre[i + 1];
        }
    }
    let mut ap = R::zero();
    for i in 0..mrec.len() - 1 {
        if mrec[i + 1] != mrec[i] {
            ap = ap + (mrec[i + 1] - mrec[i]) * mpre[i + 1];
        }
    }
    ap
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub ap: f64,
    /// `(recall, precision)` after each counted detection.
    pub curve: Vec<(f64, f64)>,
    pub tp: usize,
    pub fp: usize,
    pub ignored: usize,
    /// Non-difficult ground-truth objects.
    pub npos: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_class: BTreeMap<String, ClassReport>,
    /// Mean AP over classes with at least one non-difficult object.
    pub map: f64,
    pub iou_threshold: f64,
    pub mode: IouMode,
    /// Detections whose class never occurs in the ground truth.
    pub unknown_class_detections: usize,
}

/// Detections of one class, stably sorted by descending score.
pub fn class_detections<'a>(dets: &'a [Detection], class: &str) -> Vec<&'a Detection> {
    let mut v: Vec<&Detection> = dets.iter().filter(|d| d.class == class).collect();
    v.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
    v
}

pub fn compute_ap(dets: &[Detection], gts: &[GroundTruth], iou_thresh: f64, mode: IouMode) -> EvalReport {
    let classes: BTreeSet<&str> = gts.iter().map(|g| g.class.as_str()).collect();
    let unknown: BTreeMap<&str, usize> = dets
        .iter()
        .filter(|d| !classes.contains(d.class.as_str()))
        .fold(BTreeMap::new(), |mut m, d| {
            *m.entry(d.class.as_str()).or_default() += 1;
            m
        });
    for (class, n) in &unknown {
        log::warn!("{n} detection(s) of class {class:?} which has no ground truth; not scored");
    }

    let mut per_class = BTreeMap::new();
    for &class in &classes {
        let cls_gts: Vec<&GroundTruth> = gts.iter().filter(|g| g.class == class).collect();
        let npos = cls_gts.iter().filter(|g| !g.difficult).count();
        if npos == 0 {
            continue;
        }
        let cls_dets = class_detections(dets, class);
        let outcomes = match_detections(&cls_dets, &cls_gts, iou_thresh, mode);
        let curve = pr_curve::<f64>(&outcomes, npos);
        let count = |o: MatchOutcome| outcomes.iter().filter(|&&x| x == o).count();
        per_class.insert(
            class.to_owned(),
            ClassReport {
                ap: all_point_ap(&curve),
                curve,
                tp: count(MatchOutcome::TruePositive),
                fp: count(MatchOutcome::FalsePositive),
                ignored: count(MatchOutcome::Ignored),
                npos,
            },
        );
    }
    let map = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().map(|c| c.ap).sum::<f64>() / per_class.len() as f64
    };
    EvalReport {
        per_class,
        map,
        iou_threshold: iou_thresh,
        mode,
        unknown_class_detections: unknown.values().sum(),
    }
}

/// Per-class AP in exact rational arithmetic, same matching as [`compute_ap`].
pub fn compute_ap_exact(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_thresh: f64,
    mode: IouMode,
) -> BTreeMap<String, Ratio<i64>> {
    let classes: BTreeSet<&str> = gts.iter().map(|g| g.class.as_str()).collect();
    let mut out = BTreeMap::new();
    for class in classes {
        let cls_gts: Vec<&GroundTruth> = gts.iter().filter(|g| g.class == class).collect();
        let npos = cls_gts.iter().filter(|g| !g.difficult).count();
        if npos == 0 {
            continue;
        }
        let outcomes = match_detections(&class_detections(dets, class), &cls_gts, iou_thresh, mode);
        out.insert(class.to_owned(), all_point_ap(&pr_curve::<Ratio<i64>>(&outcomes, npos)));
    }
    out
}

impl EvalReport {
    /// Line-oriented `key = value` report.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "mode = {}", self.mode).unwrap();
        writeln!(s, "iou_threshold = {}", self.iou_threshold).unwrap();
        writeln!(s, "interpolation = all-point").unwrap();
        writeln!(s, "classes = {}", self.per_class.len()).unwrap();
        writeln!(s, "map = {:.6}", self.map).unwrap();
        writeln!(s, "unknown_class_detections = {}", self.unknown_class_detections).unwrap();
        for (name, c) in &self.per_class {
            writeln!(s, "class.{name}.ap = {:.6}", c.ap).unwrap();
            writeln!(s, "class.{name}.npos = {}", c.npos).unwrap();
            writeln!(s, "class.{name}.tp = {}", c.tp).unwrap();
            writeln!(s, "class.{name}.fp = {}", c.fp).unwrap();
            writeln!(s, "class.{name}.ignored = {}", c.ignored).unwrap();
            let pr: Vec<String> = c.curve.iter().map(|(r, p)| format!("{r:.6}:{p:.6}")).collect();
            writeln!(s, "class.{name}.recall_precision = {}", pr.join(" ")).unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gt(x: f64, class: &str, difficult: bool) -> GroundTruth {
        GroundTruth {
            source_id: "img".into(),
            class: class.into(),
            rbox: RotatedBox::new(x, 50.0, 20.0, 10.0, 0.3),
            difficult,
        }
    }

    fn det(x: f64, class: &str, score: f64) -> Detection {
        Detection {
            source_id: "img".into(),
            class: class.into(),
            score,
            rbox: RotatedBox::new(x, 50.0, 20.0, 10.0, 0.3),
        }
    }

    #[test]
    fn perfect_detections() {
        let gts = [gt(10.0, "a", false), gt(100.0, "a", false), gt(200.0, "b", false)];
        let dets: Vec<_> = gts.iter().map(|g| det(g.rbox.x, &g.class, 1.0)).collect();
        let r = compute_ap(&dets, &gts, 0.5, IouMode::Obb);
        assert!(r.per_class.values().all(|c| c.ap == 1.0));
        assert_eq!(r.map, 1.0);
    }

    #[test]
    fn no_detections() {
        let r = compute_ap(&[], &[gt(10.0, "a", false)], 0.5, IouMode::Hbb);
        assert_eq!(r.per_class["a"].ap, 0.0);
        assert_eq!(r.map, 0.0);
    }

    #[test]
    fn five_sixths_fixture() {
        let gts = [gt(10.0, "a", false), gt(100.0, "a", false)];
        let dets = [det(10.0, "a", 0.9), det(300.0, "a", 0.8), det(100.0, "a", 0.7)];
        let r = compute_ap(&dets, &gts, 0.5, IouMode::Obb);
        let c = &r.per_class["a"];
        assert_eq!(c.curve.iter().map(|p| p.0).collect::<Vec<_>>(), [0.5, 0.5, 1.0]);
        assert_eq!(c.curve.iter().map(|p| p.1).collect::<Vec<_>>(), [1.0, 0.5, 2.0 / 3.0]);
        assert!((c.ap - 5.0 / 6.0).abs() < 1e-12);

        let refs: Vec<_> = dets.iter().collect();
        let outcomes = match_detections(&refs, &gts.iter().collect::<Vec<_>>(), 0.5, IouMode::Obb);
        let exact = all_point_ap(&pr_curve::<Ratio<i64>>(&outcomes, 2));
        assert_eq!(exact, Ratio::new(5, 6));
    }

    #[test]
    fn difficult_objects_neither_reward_nor_punish() {
        let gts = [gt(10.0, "a", false), gt(100.0, "a", true)];
        let dets = [det(100.0, "a", 0.9), det(10.0, "a", 0.8)];
        let r = compute_ap(&dets, &gts, 0.5, IouMode::Obb);
        let c = &r.per_class["a"];
        assert_eq!((c.tp, c.fp, c.ignored, c.npos), (1, 0, 1, 1));
        assert_eq!(c.ap, 1.0);
        // only-difficult classes do not enter the mean
        let r = compute_ap(&dets, &[gt(10.0, "a", false), gt(100.0, "b", true)], 0.5, IouMode::Obb);
        assert_eq!(r.per_class.len(), 1);
    }

    #[test]
    fn duplicates_and_unknown_classes() {
        let gts = [gt(10.0, "a", false)];
        let dets = [det(10.0, "a", 0.9), det(10.0, "a", 0.8), det(10.0, "zzz", 0.99)];
        let r = compute_ap(&dets, &gts, 0.5, IouMode::Hbb);
        let c = &r.per_class["a"];
        assert_eq!((c.tp, c.fp), (1, 1));
        assert_eq!(c.ap, 1.0);
        assert_eq!(r.unknown_class_detections, 1);
        assert!(r.to_text().contains("unknown_class_detections = 1"));
    }

    #[test]
    fn other_source_does_not_match() {
        let mut d = det(10.0, "a", 0.9);
        d.source_id = "other".into();
        let r = compute_ap(&[d], &[gt(10.0, "a", false)], 0.5, IouMode::Obb);
        assert_eq!(r.per_class["a"].fp, 1);
    }

    #[test]
    fn shuffle_invariance_with_distinct_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gts: Vec<_> = (0..6).map(|i| gt(i as f64 * 15.0, ["a", "b"][i % 2], i == 4)).collect();
        let mut dets: Vec<_> = (0..12)
            .map(|i| det(i as f64 * 7.5, ["a", "b"][i % 3 % 2], 0.05 + i as f64 * 0.07))
            .collect();
        let base = compute_ap(&dets, &gts, 0.3, IouMode::Obb);
        for _ in 0..10 {
            dets.shuffle(&mut rng);
            assert_eq!(compute_ap(&dets, &gts, 0.3, IouMode::Obb), base);
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("HBB".parse::<IouMode>().unwrap(), IouMode::Hbb);
        assert!("xyz".parse::<IouMode>().is_err());
    }
}
