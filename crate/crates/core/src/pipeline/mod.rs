//! The benchmark harness: a grid of synthesizers × ε × rounds, each round
//! training a classifier on synthetic data and scoring it on real and
//! synthetic test sets.

mod config;
mod output;
mod report;
mod round;

use std::path::Path;

use rayon::prelude::*;

use crate::classifier::{train, Hyper};
use crate::data::{load_csv, one_hot, split_train_test, Dataset, LoadReport, Recipe};
use crate::error::{invalid, Result};
use crate::fairness::{massage_labels, MassageReport};
use crate::seed::derive_rng;

pub use config::{EvalMode, ExperimentConfig, SyntheticTestSource};
pub use output::{results_csv, series_csv, write_report, REPORT_JSON, RESULTS_CSV, SERIES_DIR};
pub use report::{rank_synthesizers, BenchmarkReport, CellSummary, RankTask, Ranking, Stat};
pub use round::{
    evaluate_model, run_baseline, run_round, EvalMetrics, HeldOut, Phase, RoundResult, RoundSpec, BASELINE,
    BUDGET_TOLERANCE,
};

/// A loaded dataset, massaged when the recipe asks for it.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: Dataset,
    pub load: LoadReport,
    pub massage: Option<MassageReport>,
}

/// Applies the recipe's post-load steps to an already loaded dataset. The
/// massaging ranker is a logistic model trained on the whole dataset.
pub fn finish_preparation(recipe: &Recipe, data: Dataset, load: LoadReport, hyper: Hyper) -> Result<Prepared> {
    if !recipe.massage {
        return Ok(Prepared {
            data,
            load,
            massage: None,
        });
    }
    let (x, y) = one_hot(&data, true);
    let ranker = train(&x, &y, hyper)?;
    let (data, report) = massage_labels(&data, &ranker)?;
    Ok(Prepared {
        data,
        load,
        massage: Some(report),
    })
}

pub fn prepare(recipe: &Recipe, path: impl AsRef<Path>, hyper: Hyper) -> Result<Prepared> {
    let (data, load) = load_csv(path, recipe)?;
    finish_preparation(recipe, data, load, hyper)
}

/// Loads the configured dataset and runs the grid with `jobs` worker
/// threads (0 picks the number of cores).
pub fn run_benchmark(cfg: &ExperimentConfig, jobs: usize) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let recipe = Recipe::resolve(&cfg.dataset)?;
    let prepared = prepare(&recipe, &cfg.data, cfg.classifier)?;
    run_benchmark_on(cfg, prepared, jobs)
}

/// The benchmark's fixed train/test partition, drawn once from the root
/// seed.
pub fn real_split(cfg: &ExperimentConfig, data: &Dataset) -> Result<(Dataset, Dataset)> {
    split_train_test(data, cfg.split_fraction, &mut derive_rng(cfg.seed, &["split"]))
}

/// Runs the grid on an already prepared dataset. Only synthesis randomness
/// varies across rounds; the split is shared.
pub fn run_benchmark_on(cfg: &ExperimentConfig, prepared: Prepared, jobs: usize) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let (train_set, test_set) = real_split(cfg, &prepared.data)?;
    let baseline = run_baseline(&train_set, &test_set, cfg.classifier);

    let mut specs = Vec::with_capacity(cfg.cell_count());
    for s in &cfg.synthesizers {
        for &epsilon in &cfg.epsilons {
            for round in 0..cfg.rounds {
                specs.push(RoundSpec {
                    synthesizer: s,
                    epsilon,
                    delta: cfg.delta,
                    round,
                    root_seed: cfg.seed,
                    hyper: cfg.classifier,
                    settings: &cfg.synth,
                    modes: &cfg.modes,
                    source: cfg.synthetic_test_source,
                });
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    let rounds: Vec<RoundResult> =
        pool.install(|| specs.par_iter().map(|sp| run_round(&train_set, &test_set, sp)).collect());

    Ok(BenchmarkReport::assemble(
        cfg.clone(),
        prepared.load,
        prepared.massage,
        train_set.n(),
        test_set.n(),
        baseline,
        rounds,
    ))
}
