use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::data::LoadReport;
use crate::error::{invalid, Error, Result};
use crate::fairness::MassageReport;

use super::config::ExperimentConfig;
use super::round::{RoundResult, BASELINE};

/// Summary of one metric over the rounds of a cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stat {
    pub mean: Option<f64>,
    /// Sample standard deviation; needs two values.
    pub std: Option<f64>,
    pub stderr: Option<f64>,
    /// Values that entered the mean.
    pub count: usize,
    /// Rounds that ran but left this metric undefined.
    pub undefined: usize,
}

impl Stat {
    pub fn of(values: &[Option<f64>]) -> Self {
        let xs: Vec<f64> = values.iter().flatten().copied().collect();
        let n = xs.len();
        let mean = (n > 0).then(|| xs.iter().sum::<f64>() / n as f64);
        let std = (n > 1).then(|| {
            let m = mean.expect("n > 0");
            (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Self {
            mean,
            std,
            stderr: std.map(|s| s / (n as f64).sqrt()),
            count: n,
            undefined: values.len() - n,
        }
    }
}

/// Aggregate of all rounds for one (synthesizer, ε).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub synthesizer: String,
    pub epsilon: Option<f64>,
    pub rounds: usize,
    pub failed: usize,
    /// Rounds whose downstream model predicted a constant class.
    pub degenerate: usize,
    /// Means cover non-degenerate rounds only, unless every completed round
    /// was degenerate; then they cover the degenerate rounds and this is set.
    pub all_degenerate: bool,
    pub budget_exact: bool,
    pub metrics: BTreeMap<String, Stat>,
    /// Failure messages, deduplicated.
    pub errors: Vec<String>,
}

impl CellSummary {
    pub fn from_rounds(synthesizer: &str, epsilon: Option<f64>, rounds: &[&RoundResult]) -> Self {
        let ok: Vec<&RoundResult> = rounds.iter().copied().filter(|r| !r.failed()).collect();
        let degenerate = ok.iter().filter(|r| r.degenerate).count();
        let all_degenerate = !ok.is_empty() && degenerate == ok.len();
        let used: Vec<&RoundResult> = ok.iter().copied().filter(|r| all_degenerate || !r.degenerate).collect();
        let mut metrics = BTreeMap::new();
        if let Some(first) = rounds.first() {
            for (name, _) in first.metrics() {
                let vals: Vec<Option<f64>> = used.iter().map(|r| r.metric(&name)).collect();
                metrics.insert(name, Stat::of(&vals));
            }
        }
        let mut errors: Vec<String> = rounds.iter().filter_map(|r| r.error.clone()).collect();
        errors.sort();
        errors.dedup();
        Self {
            synthesizer: synthesizer.to_string(),
            epsilon,
            rounds: rounds.len(),
            failed: rounds.len() - ok.len(),
            degenerate,
            all_degenerate,
            budget_exact: ok.iter().all(|r| r.budget_exact),
            metrics,
            errors,
        }
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).and_then(|s| s.mean)
    }

    /// Most completed rounds were degenerate.
    pub fn mostly_degenerate(&self) -> bool {
        let ok = self.rounds - self.failed;
        ok > 0 && 2 * self.degenerate > ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankTask {
    /// Mean AUC(R), higher first.
    TrainUtility,
    /// |AUC(R) − AUC(S)|, smaller first.
    EvalUtility,
    /// Mean per-group accuracy distance to the real-trained model.
    SubgroupAccuracy,
    /// |DSP(R) − DSP of the real-trained model|.
    DspFidelity,
    /// |DEO(R) − DEO of the real-trained model|.
    DeoFidelity,
}

impl RankTask {
    pub const ALL: [RankTask; 5] = [
        RankTask::TrainUtility,
        RankTask::EvalUtility,
        RankTask::SubgroupAccuracy,
        RankTask::DspFidelity,
        RankTask::DeoFidelity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RankTask::TrainUtility => "train-utility",
            RankTask::EvalUtility => "eval-utility",
            RankTask::SubgroupAccuracy => "subgroup-accuracy",
            RankTask::DspFidelity => "dsp-fidelity",
            RankTask::DeoFidelity => "deo-fidelity",
        }
    }
}

impl fmt::Display for RankTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RankTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown ranking task `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranking {
    pub task: RankTask,
    pub epsilon: f64,
    pub order: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub config: ExperimentConfig,
    pub load: LoadReport,
    pub massage: Option<MassageReport>,
    pub n_train: usize,
    pub n_test: usize,
    pub baseline: RoundResult,
    pub rounds: Vec<RoundResult>,
    /// Baseline cell first, then synthesizers in config order, ε ascending
    /// in config order.
    pub cells: Vec<CellSummary>,
    pub rankings: Vec<Ranking>,
}

impl BenchmarkReport {
    /// Aggregates rounds and computes every ranking the grid supports.
    pub fn assemble(
        config: ExperimentConfig,
        load: LoadReport,
        massage: Option<MassageReport>,
        n_train: usize,
        n_test: usize,
        baseline: RoundResult,
        rounds: Vec<RoundResult>,
    ) -> Self {
        let mut cells = vec![CellSummary::from_rounds(BASELINE, None, &[&baseline])];
        for s in &config.synthesizers {
            for &e in &config.epsilons {
                let rs: Vec<&RoundResult> = rounds
                    .iter()
                    .filter(|r| &r.synthesizer == s && r.epsilon == Some(e))
                    .collect();
                cells.push(CellSummary::from_rounds(s, Some(e), &rs));
            }
        }
        let mut report = Self {
            config,
            load,
            massage,
            n_train,
            n_test,
            baseline,
            rounds,
            cells,
            rankings: Vec::new(),
        };
        if report.config.synthesizers.len() >= 2 {
            for &e in &report.config.epsilons {
                for task in RankTask::ALL {
                    let order = rank_synthesizers(&report, task, e).expect("grid has >= 2 synthesizers");
                    report.rankings.push(Ranking { task, epsilon: e, order });
                }
            }
        }
        report
    }

    pub fn cell(&self, synthesizer: &str, epsilon: Option<f64>) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.synthesizer == synthesizer && c.epsilon == epsilon)
    }

    pub fn baseline_cell(&self) -> &CellSummary {
        &self.cells[0]
    }

    pub fn failed_rounds(&self) -> usize {
        self.rounds.iter().filter(|r| r.failed()).count()
    }

    pub fn ranking(&self, task: RankTask, epsilon: f64) -> Option<&[String]> {
        self.rankings
            .iter()
            .find(|r| r.task == task && r.epsilon == epsilon)
            .map(|r| r.order.as_slice())
    }
}

fn score(cell: &CellSummary, base: &CellSummary, task: RankTask) -> Option<f64> {
    let dist = |m: &str| Some((cell.mean(m)? - base.mean(m)?).abs());
    match task {
        RankTask::TrainUtility => cell.mean("r_auc").map(|a| -a),
        RankTask::EvalUtility => Some((cell.mean("r_auc")? - cell.mean("s_auc")?).abs()),
        RankTask::SubgroupAccuracy => {
            Some((dist("r_accuracy_minority")? + dist("r_accuracy_privileged")?) / 2.0)
        }
        RankTask::DspFidelity => dist("r_dsp"),
        RankTask::DeoFidelity => dist("r_deo"),
    }
}

/// Orders the synthesizers of `report` at `epsilon` for `task`, best first.
/// Mostly degenerate synthesizers go last, then those with no score; ties
/// keep config order.
pub fn rank_synthesizers(report: &BenchmarkReport, task: RankTask, epsilon: f64) -> Result<Vec<String>> {
    let names = &report.config.synthesizers;
    if names.len() < 2 {
        return Err(invalid("ranking needs at least 2 synthesizers"));
    }
    if !report.config.epsilons.contains(&epsilon) {
        return Err(invalid(format!("epsilon {epsilon} is not part of the grid")));
    }
    let base = report.baseline_cell();
    let mut keyed: Vec<(u8, f64, usize, &String)> = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let cell = report.cell(name, Some(epsilon)).expect("cell for every grid point");
            match (cell.mostly_degenerate(), score(cell, base, task)) {
                (true, s) => (2, s.unwrap_or(f64::INFINITY), i, name),
                (false, Some(s)) => (0, s, i, name),
                (false, None) => (1, 0.0, i, name),
            }
        })
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    Ok(keyed.into_iter().map(|k| k.3.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::round::EvalMetrics;

    #[test]
    fn stat_examples() {
        let s = Stat::of(&[Some(1.0), Some(3.0), None]);
        assert_eq!(s.mean, Some(2.0));
        assert!((s.std.unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!((s.stderr.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!((s.count, s.undefined), (2, 1));
        let one = Stat::of(&[Some(4.0)]);
        assert_eq!((one.mean, one.std), (Some(4.0), None));
        assert_eq!(Stat::of(&[]).mean, None);
    }

    fn round(name: &str, eps: f64, auc_r: f64, auc_s: f64, degenerate: bool) -> RoundResult {
        let m = |auc| EvalMetrics {
            auc: Some(auc),
            dsp: Some(if degenerate { 0.0 } else { 0.1 }),
            constant_prediction: degenerate,
            ..EvalMetrics::default()
        };
        RoundResult {
            synthesizer: name.into(),
            epsilon: Some(eps),
            round: 0,
            error: None,
            real: Some(m(auc_r)),
            synthetic: Some(m(auc_s)),
            degenerate,
            constant_score: degenerate,
            epsilon_spent: vec![eps],
            budget_exact: true,
        }
    }

    fn report(rounds: Vec<RoundResult>, synths: &[&str]) -> BenchmarkReport {
        let cfg = ExperimentConfig {
            dataset: "compas".into(),
            data: "x.csv".into(),
            synthesizers: synths.iter().map(|s| s.to_string()).collect(),
            epsilons: vec![1.0],
            delta: 1e-5,
            rounds: 2,
            seed: 0,
            split_fraction: 0.8,
            modes: vec![],
            synthetic_test_source: super::super::config::SyntheticTestSource::SameFit,
            classifier: Default::default(),
            synth: Default::default(),
        };
        let mut base = round(BASELINE, 0.0, 0.7, 0.7, false);
        base.epsilon = None;
        base.synthetic = None;
        BenchmarkReport::assemble(cfg, LoadReport::default(), None, 80, 20, base, rounds)
    }

    #[test]
    fn ranking_by_train_utility() {
        let r = report(
            vec![
                round("b", 1.0, 0.66, 0.6, false),
                round("b", 1.0, 0.66, 0.6, false),
                round("a", 1.0, 0.85, 0.6, false),
                round("a", 1.0, 0.85, 0.6, false),
            ],
            &["b", "a"],
        );
        assert_eq!(rank_synthesizers(&r, RankTask::TrainUtility, 1.0).unwrap(), ["a", "b"]);
        assert_eq!(rank_synthesizers(&r, RankTask::EvalUtility, 1.0).unwrap(), ["b", "a"]);
        assert!(rank_synthesizers(&r, RankTask::TrainUtility, 2.0).is_err());
        assert_eq!(r.ranking(RankTask::TrainUtility, 1.0).unwrap(), ["a", "b"]);
    }

    #[test]
    fn degenerate_ranks_last_even_with_best_score() {
        let r = report(
            vec![
                round("deg", 1.0, 0.5, 0.5, true),
                round("deg", 1.0, 0.5, 0.5, true),
                round("x", 1.0, 0.6, 0.1, false),
                round("x", 1.0, 0.6, 0.1, false),
            ],
            &["deg", "x"],
        );
        // deg has |AUC(R) - AUC(S)| = 0 yet still ranks last
        for task in RankTask::ALL {
            assert_eq!(rank_synthesizers(&r, task, 1.0).unwrap(), ["x", "deg"], "{task}");
        }
        let deg = r.cell("deg", Some(1.0)).unwrap();
        assert!(deg.all_degenerate);
        assert_eq!(deg.mean("r_dsp"), Some(0.0));
    }

    #[test]
    fn degenerate_rounds_excluded_from_means() {
        let r = report(
            vec![round("x", 1.0, 0.5, 0.5, true), round("x", 1.0, 0.7, 0.6, false)],
            &["x", "y"],
        );
        let c = r.cell("x", Some(1.0)).unwrap();
        assert_eq!(c.degenerate, 1);
        assert!(!c.all_degenerate);
        assert_eq!(c.mean("r_auc"), Some(0.7));
        assert_eq!(c.metrics["r_auc"].count, 1);
    }

    #[test]
    fn failures_counted() {
        let mut bad = round("x", 1.0, 0.5, 0.5, false);
        bad.error = Some("boom".into());
        bad.real = None;
        bad.synthetic = None;
        let r = report(vec![bad, round("x", 1.0, 0.7, 0.6, false)], &["x", "y"]);
        let c = r.cell("x", Some(1.0)).unwrap();
        assert_eq!((c.failed, c.errors.len()), (1, 1));
        assert_eq!(r.failed_rounds(), 1);
        // y has no rounds at all: scoreless, ranked after x
        assert_eq!(rank_synthesizers(&r, RankTask::TrainUtility, 1.0).unwrap(), ["x", "y"]);
    }

    #[test]
    fn task_names_round_trip() {
        for t in RankTask::ALL {
            assert_eq!(t.as_str().parse::<RankTask>().unwrap(), t);
        }
        assert!("fastest".parse::<RankTask>().is_err());
    }
}
