//! Command-line pipeline: `generate`, `train`, `refine`, `eval`.
//!
//! Exit codes: 0 on success, 1 on input errors, 2 on internal errors.
//! Identical arguments, files, and seeds produce byte-identical outputs,
//! including under `--jobs N` for any N.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use detrefine::error::Error;
use detrefine::eval::{compare, write_pr_csv, write_report, ImageDetections, ScoredDetection};
use detrefine::metric::MetricModel;
use detrefine::model::{read_candidate_sets, read_ground_truth, CandidateSet, Config};
use detrefine::pairs::{build_training_pairs, write_pair_samples};
use detrefine::refine::{
    read_refined, refine_image_diag, write_refined, CorpusResult, ImageDiagnostics, ImageFailure,
    RefinedDetections,
};
use detrefine::synthgen::{generate, write_labels, GenSpec};

#[derive(Parser)]
#[command(
    name = "detrefine",
    version,
    about = "Refine candidate detections with learned pairwise similarity and spectral grouping"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (candidates, ground truth, labels).
    Generate {
        /// Generator spec JSON; absent fields take defaults.
        #[arg(long)]
        spec: PathBuf,
        /// Directory for candidates.jsonl, ground_truth.jsonl, labels.jsonl.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the pairwise similarity model from a candidates file.
    Train {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model_out: PathBuf,
        /// Optionally dump the labeled training pairs as JSONL.
        #[arg(long)]
        dump_pairs: Option<PathBuf>,
    },
    /// Refine a candidates file with a trained model.
    Refine {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dump ascending Laplacian eigenvalues per image as JSONL.
        #[arg(long)]
        dump_eigvals: Option<PathBuf>,
        /// Dump similarity/weight/Laplacian matrices per image into a directory.
        #[arg(long)]
        dump_matrices: Option<PathBuf>,
        /// Worker threads for per-image refinement.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compare refined detections against the score-threshold baseline.
    Eval {
        /// Candidates file; the baseline keeps candidates scoring at least
        /// the configured vote threshold.
        #[arg(long)]
        baseline: PathBuf,
        /// Refined detections file produced by `refine`.
        #[arg(long)]
        refined: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Optionally export the refined PR curve as CSV.
        #[arg(long)]
        pr_csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_internal() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(command: Command) -> detrefine::Result<()> {
    match command {
        Command::Generate { spec, out_dir } => cmd_generate(&spec, &out_dir),
        Command::Train {
            candidates,
            config,
            model_out,
            dump_pairs,
        } => cmd_train(&candidates, &config, &model_out, dump_pairs.as_deref()),
        Command::Refine {
            candidates,
            model,
            config,
            out,
            dump_eigvals,
            dump_matrices,
            jobs,
        } => cmd_refine(
            &candidates,
            &model,
            &config,
            &out,
            dump_eigvals.as_deref(),
            dump_matrices.as_deref(),
            jobs,
        ),
        Command::Eval {
            baseline,
            refined,
            gt,
            config,
            report,
            pr_csv,
        } => cmd_eval(
            &baseline,
            &refined,
            &gt,
            &config,
            &report,
            pr_csv.as_deref(),
        ),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.into(),
        source: e,
    }
}

fn cmd_generate(spec_path: &Path, out_dir: &Path) -> detrefine::Result<()> {
    let spec = GenSpec::from_file(spec_path)?;
    let corpus = generate(&spec)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    detrefine::model::write_candidate_sets(&corpus.sets, &out_dir.join("candidates.jsonl"))?;
    detrefine::model::write_ground_truth(
        &corpus.ground_truth,
        &out_dir.join("ground_truth.jsonl"),
    )?;
    write_labels(&corpus.labels, &out_dir.join("labels.jsonl"))?;
    println!(
        "generated {} images into {}",
        corpus.sets.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_train(
    candidates: &Path,
    config: &Path,
    model_out: &Path,
    dump_pairs: Option<&Path>,
) -> detrefine::Result<()> {
    let cfg = Config::from_file(config)?;
    let sets = read_candidate_sets(candidates)?;
    let samples = build_training_pairs(&sets, &cfg)?;
    if let Some(path) = dump_pairs {
        write_pair_samples(&samples, path)?;
    }
    let model = detrefine::metric::train_metric(&samples, &cfg)?;
    model.save(model_out)?;
    println!(
        "trained on {} pairs from {} images; model written to {}",
        samples.len(),
        sets.len(),
        model_out.display()
    );
    Ok(())
}

/// Runs per-image refinement on `jobs` workers; output order and content
/// are identical for every worker count because images are independent and
/// every image derives its own RNG stream.
fn refine_parallel(
    sets: &[CandidateSet],
    model: &MetricModel,
    cfg: &Config,
    jobs: usize,
    capture_matrices: bool,
) -> detrefine::Result<(CorpusResult, Vec<ImageDiagnostics>)> {
    type PerImage = Result<(RefinedDetections, ImageDiagnostics), Error>;
    let run_one = |set: &CandidateSet| refine_image_diag(set, model, cfg, capture_matrices);

    let outcomes: Vec<PerImage> = if jobs <= 1 {
        sets.iter().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Parameter(format!("cannot build worker pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            sets.par_iter().map(run_one).collect()
        })
    };

    let mut result = CorpusResult::default();
    let mut diagnostics = Vec::new();
    for (set, outcome) in sets.iter().zip(outcomes) {
        match outcome {
            Ok((refined, diag)) => {
                result.refined.push(refined);
                diagnostics.push(diag);
            }
            Err(error) => result.failures.push(ImageFailure {
                image_id: set.image_id.clone(),
                error,
            }),
        }
    }
    Ok((result, diagnostics))
}

fn cmd_refine(
    candidates: &Path,
    model_path: &Path,
    config: &Path,
    out: &Path,
    dump_eigvals: Option<&Path>,
    dump_matrices: Option<&Path>,
    jobs: usize,
) -> detrefine::Result<()> {
    let cfg = Config::from_file(config)?;
    let model = MetricModel::load(model_path)?;
    let sets = read_candidate_sets(candidates)?;
    let (result, diagnostics) =
        refine_parallel(&sets, &model, &cfg, jobs, dump_matrices.is_some())?;

    write_refined(&result.refined, &sets, out)?;

    if let Some(path) = dump_eigvals {
        let mut lines = String::new();
        for (r, diag) in result.refined.iter().zip(&diagnostics) {
            let line = serde_json::json!({
                "image_id": r.image_id,
                "eigenvalues": diag.eigenvalues,
            });
            lines.push_str(&line.to_string());
            lines.push('\n');
        }
        std::fs::write(path, lines).map_err(io_err(path))?;
    }

    if let Some(dir) = dump_matrices {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (r, diag) in result.refined.iter().zip(&diagnostics) {
            if let Some(m) = &diag.matrices {
                let stem = dir.join(&r.image_id);
                let write = |suffix: &str, text: String| -> detrefine::Result<()> {
                    let path = stem.with_extension(suffix);
                    std::fs::write(&path, text).map_err(io_err(&path))
                };
                write("similarity.txt", m.similarity.dump_text())?;
                write("weights.txt", m.weights.dump_text())?;
                write("laplacian.txt", m.laplacian.dump_text())?;
            }
        }
    }

    for failure in &result.failures {
        eprintln!("error: image {}: {}", failure.image_id, failure.error);
    }
    println!(
        "refined {} of {} images into {}",
        result.refined.len(),
        sets.len(),
        out.display()
    );
    if let Some(first) = result.failures.first() {
        return Err(Error::InputMismatch(format!(
            "{} image(s) failed, first: {}",
            result.failures.len(),
            first.image_id
        )));
    }
    Ok(())
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

fn cmd_eval(
    baseline: &Path,
    refined: &Path,
    gt: &Path,
    config: &Path,
    report_path: &Path,
    pr_csv: Option<&Path>,
) -> detrefine::Result<()> {
    let cfg = Config::from_file(config)?;
    let sets = read_candidate_sets(baseline)?;
    let baseline_dets = threshold_baseline(&sets, cfg.vote_threshold);
    let refined_dets = read_refined(refined)?;
    let gts = read_ground_truth(gt)?;
    let comparison = compare(&baseline_dets, &refined_dets, &gts, &cfg)?;
    write_report(&comparison.report, report_path)?;
    if let Some(path) = pr_csv {
        write_pr_csv(&comparison.refined_curve, path)?;
    }
    let r = &comparison.report;
    println!(
        "ap_baseline={} ap_refined={} delta={} over {} images, {} ground truths",
        r.ap_baseline, r.ap_refined, r.delta, r.n_images, r.n_gt
    );
    Ok(())
}
