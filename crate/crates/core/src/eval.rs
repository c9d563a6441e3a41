//! Detection evaluation: IoU matching, precision–recall curves, and average
//! precision under the continuous precision-envelope interpolation.

use std::collections::HashSet;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BoundingBox, Config, GroundTruth};

/// Intersection over union of two boxes; 0 when disjoint.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a.area() + b.area() - inter)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDetection {
    pub bbox: BoundingBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageDetections {
    pub image_id: String,
    pub detections: Vec<ScoredDetection>,
}

#[derive(Debug, Clone)]
pub struct MatchOutcome {
    /// True-positive flag per detection, aligned with the input order.
    pub tp: Vec<bool>,
    pub gt_matched: Vec<bool>,
}

/// Greedy matching: detections in score-descending order (ties by input
/// order) each claim the unmatched ground truth of highest IoU at or above
/// the threshold; every ground truth matches at most once.
pub fn match_detections(
    dets: &[ScoredDetection],
    gts: &[BoundingBox],
    iou_threshold: f64,
) -> MatchOutcome {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));

    let mut tp = vec![false; dets.len()];
    let mut gt_matched = vec![false; gts.len()];
    for &d in &order {
        let mut best: Option<usize> = None;
        let mut best_iou = 0.0;
        for (g, gt) in gts.iter().enumerate() {
            if gt_matched[g] {
                continue;
            }
            let overlap = iou(&dets[d].bbox, gt);
            if overlap >= iou_threshold && overlap > best_iou {
                best_iou = overlap;
                best = Some(g);
            }
        }
        if let Some(g) = best {
            gt_matched[g] = true;
            tp[d] = true;
        }
    }
    MatchOutcome { tp, gt_matched }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision–recall curve ordered by score threshold descending, plus the
/// area under the precision envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub ap: f64,
}

/// Average precision over pooled `(score, is_tp)` flags.
///
/// Detections are ranked by score descending (stable for ties); precision at
/// each recall is raised to the envelope (the maximum precision at that
/// recall or higher) and integrated over recall.
pub fn average_precision(flags: &[(f64, bool)], total_gt: usize) -> Result<PrCurve> {
    if total_gt == 0 {
        return Err(Error::UndefinedMetric(
            "average precision needs at least one ground-truth box".into(),
        ));
    }
    let mut order: Vec<usize> = (0..flags.len()).collect();
    order.sort_by(|&a, &b| flags[b].0.total_cmp(&flags[a].0).then(a.cmp(&b)));

    let mut points = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    let mut fp = 0usize;
    for &i in &order {
        if flags[i].1 {
            tp += 1;
        } else {
            fp += 1;
        }
        points.push(PrPoint {
            threshold: flags[i].0,
            recall: tp as f64 / total_gt as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }

    let ap = integrate(&points);
    Ok(PrCurve { points, ap })
}

/// Area under the precision envelope as a function of recall.
fn integrate(points: &[PrPoint]) -> f64 {
    // Envelope precision at each point, computed right to left.
    let mut env = vec![0.0; points.len()];
    let mut running = 0.0f64;
    for (i, p) in points.iter().enumerate().rev() {
        running = running.max(p.precision);
        env[i] = running;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, &e) in points.iter().zip(&env) {
        if p.recall > prev_recall {
            ap += (p.recall - prev_recall) * e;
            prev_recall = p.recall;
        }
    }
    ap
}

/// Pools per-image matches over the corpus and computes one AP.
pub fn corpus_average_precision(
    dets: &[ImageDetections],
    gts: &[GroundTruth],
    cfg: &Config,
) -> Result<PrCurve> {
    let gt_by_id: std::collections::HashMap<&str, &GroundTruth> =
        gts.iter().map(|g| (g.image_id.as_str(), g)).collect();
    let total_gt: usize = gts.iter().map(|g| g.boxes.len()).sum();
    let mut flags = Vec::new();
    for image in dets {
        let empty: &[BoundingBox] = &[];
        let boxes = gt_by_id
            .get(image.image_id.as_str())
            .map_or(empty, |g| g.boxes.as_slice());
        let outcome = match_detections(&image.detections, boxes, cfg.iou_threshold);
        for (d, &is_tp) in image.detections.iter().zip(&outcome.tp) {
            flags.push((d.score, is_tp));
        }
    }
    average_precision(&flags, total_gt)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub ap_baseline: f64,
    pub ap_refined: f64,
    pub delta: f64,
    pub n_images: usize,
    pub n_gt: usize,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: CompareReport,
    pub baseline_curve: PrCurve,
    pub refined_curve: PrCurve,
}

/// Evaluates baseline and refined detections against the same ground truth.
/// The two sides must cover the same image ids.
pub fn compare(
    baseline: &[ImageDetections],
    refined: &[ImageDetections],
    gts: &[GroundTruth],
    cfg: &Config,
) -> Result<Comparison> {
    let ids = |side: &[ImageDetections]| -> HashSet<String> {
        side.iter().map(|d| d.image_id.clone()).collect()
    };
    let base_ids = ids(baseline);
    let refined_ids = ids(refined);
    if base_ids != refined_ids {
        let mut missing: Vec<&String> = base_ids.symmetric_difference(&refined_ids).collect();
        missing.sort();
        return Err(Error::InputMismatch(format!(
            "baseline and refined image ids differ: {missing:?}"
        )));
    }
    let baseline_curve = corpus_average_precision(baseline, gts, cfg)?;
    let refined_curve = corpus_average_precision(refined, gts, cfg)?;
    let report = CompareReport {
        ap_baseline: baseline_curve.ap,
        ap_refined: refined_curve.ap,
        delta: refined_curve.ap - baseline_curve.ap,
        n_images: baseline.len(),
        n_gt: gts.iter().map(|g| g.boxes.len()).sum(),
    };
    Ok(Comparison {
        report,
        baseline_curve,
        refined_curve,
    })
}

pub fn write_report(report: &CompareReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string(report).map_err(|e| Error::Schema {
        context: "report".into(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

/// CSV export of a PR curve: `threshold,recall,precision` per point.
pub fn write_pr_csv(curve: &PrCurve, path: &Path) -> Result<()> {
    let mut text = String::from("threshold,recall,precision\n");
    for p in &curve.points {
        text.push_str(&format!("{},{},{}\n", p.threshold, p.recall, p.precision));
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h)
    }

    fn det(x: f64, y: f64, w: f64, h: f64, score: f64) -> ScoredDetection {
        ScoredDetection {
            bbox: bx(x, y, w, h),
            score,
        }
    }

    #[test]
    fn iou_hand_values() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        let disjoint = bx(10.0, 10.0, 2.0, 2.0);
        assert_eq!(iou(&a, &disjoint), 0.0);
        let shifted = bx(1.0, 0.0, 2.0, 2.0);
        assert!((iou(&a, &shifted) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn match_simple_cases() {
        let gt = vec![bx(0.0, 0.0, 10.0, 10.0)];

        let exact = vec![det(0.0, 0.0, 10.0, 10.0, 0.9)];
        let m = match_detections(&exact, &gt, 0.5);
        assert_eq!(m.tp, vec![true]);

        // Two identical detections: only the higher-scored one matches.
        let twins = vec![
            det(0.0, 0.0, 10.0, 10.0, 0.7),
            det(0.0, 0.0, 10.0, 10.0, 0.9),
        ];
        let m = match_detections(&twins, &gt, 0.5);
        assert_eq!(m.tp, vec![false, true]);

        // IoU below the threshold is a false positive.
        let weak = vec![det(6.0, 0.0, 10.0, 10.0, 0.9)];
        let m = match_detections(&weak, &gt, 0.5);
        assert_eq!(m.tp, vec![false]);
    }

    #[test]
    fn ap_perfect_and_all_false() {
        let perfect = vec![(0.9, true), (0.8, true)];
        assert_eq!(average_precision(&perfect, 2).unwrap().ap, 1.0);

        let wrong = vec![(0.9, false), (0.8, false)];
        assert_eq!(average_precision(&wrong, 2).unwrap().ap, 0.0);
    }

    #[test]
    fn fp_after_full_recall_does_not_reduce_ap() {
        let flags = vec![(0.9, true), (0.5, false)];
        assert_eq!(average_precision(&flags, 1).unwrap().ap, 1.0);
    }

    #[test]
    fn ap_of_zero_ground_truths_is_undefined() {
        assert!(matches!(
            average_precision(&[(0.5, false)], 0),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn recall_is_non_decreasing_along_curve() {
        let flags = vec![
            (0.9, true),
            (0.8, false),
            (0.7, true),
            (0.6, false),
            (0.5, true),
        ];
        let curve = average_precision(&flags, 4).unwrap();
        for pair in curve.points.windows(2) {
            assert!(pair[1].recall >= pair[0].recall);
        }
        assert!(curve.ap > 0.0 && curve.ap <= 1.0);
    }

    fn fixture_corpus() -> (Vec<ImageDetections>, Vec<GroundTruth>) {
        let gts = vec![GroundTruth {
            image_id: "a".into(),
            boxes: vec![bx(0.0, 0.0, 10.0, 10.0), bx(50.0, 50.0, 10.0, 10.0)],
        }];
        let dets = vec![ImageDetections {
            image_id: "a".into(),
            detections: vec![
                det(0.0, 0.0, 10.0, 10.0, 0.95),
                det(100.0, 100.0, 10.0, 10.0, 0.9), // false positive
                det(50.0, 50.0, 10.0, 10.0, 0.6),
                det(200.0, 0.0, 5.0, 5.0, 0.4), // false positive
                det(0.0, 200.0, 5.0, 5.0, 0.2), // false positive
            ],
        }];
        (dets, gts)
    }

    #[test]
    fn removing_a_false_positive_never_lowers_ap() {
        let (dets, gts) = fixture_corpus();
        let cfg = Config::default();
        let base = corpus_average_precision(&dets, &gts, &cfg).unwrap().ap;
        let mut pruned = dets.clone();
        pruned[0].detections.remove(1);
        let better = corpus_average_precision(&pruned, &gts, &cfg).unwrap().ap;
        assert!(better >= base, "{better} < {base}");
    }

    #[test]
    fn removing_a_true_positive_never_raises_ap() {
        let (dets, gts) = fixture_corpus();
        let cfg = Config::default();
        let base = corpus_average_precision(&dets, &gts, &cfg).unwrap().ap;
        let mut pruned = dets.clone();
        pruned[0].detections.remove(2); // the only match for the second gt
        let worse = corpus_average_precision(&pruned, &gts, &cfg).unwrap().ap;
        assert!(worse <= base, "{worse} > {base}");
    }

    #[test]
    fn compare_identical_sides_gives_zero_delta() {
        let (dets, gts) = fixture_corpus();
        let cfg = Config::default();
        let cmp = compare(&dets, &dets, &gts, &cfg).unwrap();
        assert_eq!(cmp.report.delta, 0.0);
        assert_eq!(cmp.report.n_images, 1);
        assert_eq!(cmp.report.n_gt, 2);
    }

    #[test]
    fn compare_rejects_mismatched_ids() {
        let (dets, gts) = fixture_corpus();
        let mut other = dets.clone();
        other[0].image_id = "b".into();
        assert!(matches!(
            compare(&dets, &other, &gts, &Config::default()),
            Err(Error::InputMismatch(_))
        ));
    }

    #[test]
    fn tp_count_never_exceeds_either_side() {
        let gt = vec![bx(0.0, 0.0, 4.0, 4.0), bx(20.0, 0.0, 4.0, 4.0)];
        let dets = vec![
            det(0.0, 0.0, 4.0, 4.0, 0.9),
            det(0.1, 0.0, 4.0, 4.0, 0.8),
            det(20.0, 0.0, 4.0, 4.0, 0.7),
            det(40.0, 0.0, 4.0, 4.0, 0.6),
        ];
        let m = match_detections(&dets, &gt, 0.5);
        let tp = m.tp.iter().filter(|&&t| t).count();
        assert!(tp <= dets.len().min(gt.len()));
        assert_eq!(tp, 2);
    }

    proptest! {
        #[test]
        fn prop_iou_symmetric_bounded(
            ax in -50.0..50.0f64, ay in -50.0..50.0f64,
            aw in 0.1..30.0f64, ah in 0.1..30.0f64,
            bx_ in -50.0..50.0f64, by in -50.0..50.0f64,
            bw in 0.1..30.0f64, bh in 0.1..30.0f64,
        ) {
            let a = bx(ax, ay, aw, ah);
            let b = bx(bx_, by, bw, bh);
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        // AP depends only on the ranking, not the score values.
        #[test]
        fn prop_ap_invariant_under_monotone_rescoring(
            flags in proptest::collection::vec((0.0..1.0f64, any::<bool>()), 1..20),
            total_gt in 1usize..10,
        ) {
            let ap = average_precision(&flags, total_gt).unwrap().ap;
            // Halving every score is strictly increasing and exact in
            // floating point, so the ranking cannot change.
            let squashed: Vec<(f64, bool)> = flags.iter().map(|&(s, t)| (0.5 * s, t)).collect();
            let ap2 = average_precision(&squashed, total_gt).unwrap().ap;
            prop_assert!((ap - ap2).abs() < 1e-12);
        }
    }
}
