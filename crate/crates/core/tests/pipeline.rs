//! Library-level pipeline integration: synthetic corpus in, refined
//! detections and evaluation out, all through the public API and the file
//! formats.

use detrefine::eval::{compare, corpus_average_precision, ImageDetections, ScoredDetection};
use detrefine::metric::{train_metric, MetricModel};
use detrefine::model::{read_candidate_sets, write_candidate_sets, CandidateSet, Config};
use detrefine::pairs::build_training_pairs;
use detrefine::refine::{read_refined, refine_corpus, write_refined, RefinedDetections};
use detrefine::synthgen::{generate, GenSpec};

fn standard_config() -> Config {
    Config {
        delta: 0.12,
        ..Config::default()
    }
}

fn kept_as_detections(
    refined: &[RefinedDetections],
    sets: &[CandidateSet],
) -> Vec<ImageDetections> {
    refined
        .iter()
        .map(|r| {
            let set = sets.iter().find(|s| s.image_id == r.image_id).unwrap();
            ImageDetections {
                image_id: r.image_id.clone(),
                detections: r
                    .kept
                    .iter()
                    .map(|&(idx, score)| ScoredDetection {
                        bbox: set.candidates[idx].bbox,
                        score,
                    })
                    .collect(),
            }
        })
        .collect()
}

fn threshold_baseline(sets: &[CandidateSet], tau: f64) -> Vec<ImageDetections> {
    sets.iter()
        .map(|set| ImageDetections {
            image_id: set.image_id.clone(),
            detections: set
                .candidates
                .iter()
                .filter(|c| c.score >= tau)
                .map(|c| ScoredDetection {
                    bbox: c.bbox,
                    score: c.score,
                })
                .collect(),
        })
        .collect()
}

#[test]
fn full_pipeline_on_synthetic_corpus() {
    let spec = GenSpec {
        n_images: 6,
        seed: 3,
        ..GenSpec::default()
    };
    let corpus = generate(&spec).unwrap();
    let cfg = standard_config();

    let samples = build_training_pairs(&corpus.sets, &cfg).unwrap();
    let model = train_metric(&samples, &cfg).unwrap();
    let result = refine_corpus(&corpus.sets, &model, &cfg);
    assert!(result.failures.is_empty());
    assert_eq!(result.refined.len(), corpus.sets.len());

    let refined = kept_as_detections(&result.refined, &corpus.sets);
    let baseline = threshold_baseline(&corpus.sets, cfg.vote_threshold);
    let comparison = compare(&baseline, &refined, &corpus.ground_truth, &cfg).unwrap();
    assert!(comparison.report.ap_baseline > 0.0);
    assert!(comparison.report.ap_refined > 0.0);
    assert!(comparison.report.delta.is_finite());
    assert_eq!(comparison.report.n_images, 6);
}

#[test]
fn pipeline_files_round_trip() {
    let spec = GenSpec {
        n_images: 3,
        seed: 8,
        ..GenSpec::default()
    };
    let corpus = generate(&spec).unwrap();
    let cfg = standard_config();
    let dir = tempfile::tempdir().unwrap();

    let cands_path = dir.path().join("candidates.jsonl");
    write_candidate_sets(&corpus.sets, &cands_path).unwrap();
    let sets = read_candidate_sets(&cands_path).unwrap();
    assert_eq!(sets, corpus.sets);

    let samples = build_training_pairs(&sets, &cfg).unwrap();
    let model = train_metric(&samples, &cfg).unwrap();
    let model_path = dir.path().join("model.json");
    model.save(&model_path).unwrap();
    assert_eq!(MetricModel::load(&model_path).unwrap(), model);

    let result = refine_corpus(&sets, &model, &cfg);
    let refined_path = dir.path().join("refined.jsonl");
    write_refined(&result.refined, &sets, &refined_path).unwrap();
    let read_back = read_refined(&refined_path).unwrap();
    assert_eq!(read_back, kept_as_detections(&result.refined, &sets));
}

#[test]
fn refinement_is_reproducible() {
    let spec = GenSpec {
        n_images: 4,
        seed: 5,
        ..GenSpec::default()
    };
    let corpus = generate(&spec).unwrap();
    let cfg = standard_config();
    let samples = build_training_pairs(&corpus.sets, &cfg).unwrap();
    let m1 = train_metric(&samples, &cfg).unwrap();
    let m2 = train_metric(&samples, &cfg).unwrap();
    assert_eq!(m1, m2);
    let r1 = refine_corpus(&corpus.sets, &m1, &cfg);
    let r2 = refine_corpus(&corpus.sets, &m1, &cfg);
    assert_eq!(r1.refined, r2.refined);
}

/// Builds one test image in the training corpus's style: ten coherent face
/// candidates around one latent (exactly three scoring below the vote
/// threshold) and ten scattered backgrounds (exactly three above it).
fn rescue_image(source: &CandidateSet, labels: &[u8]) -> (CandidateSet, Vec<usize>, Vec<usize>) {
    let mut set = source.clone();
    let faces: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let bgs: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    assert_eq!(faces.len(), 10);
    assert_eq!(bgs.len(), 10);

    // Keep each candidate's rank but remap scores onto fixed grids so the
    // low-face / high-bg counts are exact.
    let mut face_order = faces.clone();
    face_order.sort_by(|&a, &b| {
        source.candidates[a]
            .score
            .total_cmp(&source.candidates[b].score)
    });
    for (rank, &idx) in face_order.iter().enumerate() {
        set.candidates[idx].score = if rank < 3 {
            0.40 + 0.03 * rank as f64
        } else {
            0.55 + 0.04 * (rank - 3) as f64
        };
    }
    let mut bg_order = bgs.clone();
    bg_order.sort_by(|&a, &b| {
        source.candidates[a]
            .score
            .total_cmp(&source.candidates[b].score)
    });
    for (rank, &idx) in bg_order.iter().enumerate() {
        set.candidates[idx].score = if rank < 7 {
            0.05 + 0.05 * rank as f64
        } else {
            0.51 + 0.02 * (rank - 7) as f64
        };
    }
    let low_faces = face_order[..3].to_vec();
    let high_bgs = bg_order[7..].to_vec();
    (set, low_faces, high_bgs)
}

// Low-score faces ride along with their coherent group while high-score
// backgrounds are voted out; measured over 50 generated images.
#[test]
fn rescues_low_faces_and_rejects_high_backgrounds() {
    let spec = GenSpec {
        n_images: 70,
        faces_per_image: 10,
        bg_per_image: 10,
        seed: 42,
        ..GenSpec::default()
    };
    let corpus = generate(&spec).unwrap();
    let cfg = standard_config();

    let train_sets = &corpus.sets[..20];
    let samples = build_training_pairs(train_sets, &cfg).unwrap();
    let model = train_metric(&samples, &cfg).unwrap();

    let mut successes = 0;
    for i in 20..70 {
        let (set, low_faces, high_bgs) = rescue_image(&corpus.sets[i], &corpus.labels[i].labels);
        let refined = detrefine::refine::refine_image(&set, &model, &cfg).unwrap();
        let kept: std::collections::HashSet<usize> =
            refined.kept.iter().map(|&(idx, _)| idx).collect();
        let rescued = low_faces.iter().all(|i| kept.contains(i));
        let rejected = high_bgs.iter().all(|i| !kept.contains(i));
        if rescued && rejected {
            successes += 1;
        }
    }
    assert!(
        successes >= 40,
        "rescue succeeded in only {successes}/50 images"
    );
}

#[test]
fn refined_ap_beats_threshold_baseline_on_one_corpus() {
    let corpus = generate(&GenSpec::default()).unwrap();
    let cfg = standard_config();
    let samples = build_training_pairs(&corpus.sets, &cfg).unwrap();
    let model = train_metric(&samples, &cfg).unwrap();
    let result = refine_corpus(&corpus.sets, &model, &cfg);
    assert!(result.failures.is_empty());

    let refined = kept_as_detections(&result.refined, &corpus.sets);
    let baseline = threshold_baseline(&corpus.sets, cfg.vote_threshold);
    let ap_refined = corpus_average_precision(&refined, &corpus.ground_truth, &cfg)
        .unwrap()
        .ap;
    let ap_baseline = corpus_average_precision(&baseline, &corpus.ground_truth, &cfg)
        .unwrap()
        .ap;
    assert!(
        ap_refined > ap_baseline,
        "refined {ap_refined} <= baseline {ap_baseline}"
    );
}
