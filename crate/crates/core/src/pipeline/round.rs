use serde::{Deserialize, Serialize};

use crate::classifier::{auc_roc, train, Hyper, LogisticModel};
use crate::data::{one_hot, Dataset};
use crate::dp::PrivacyBudget;
use crate::error::{Error, Result};
use crate::fairness::evaluate;
use crate::seed::{derive_rng, epsilon_label};
use crate::synth::{build, SynthSettings};

use super::config::{EvalMode, SyntheticTestSource};

/// Accountant totals may differ from the requested ε by this much.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

/// Name used for the train-on-real baseline rows.
pub const BASELINE: &str = "real";

/// Stages of a round, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Fit,
    Sample,
    Train,
    EvalSynthetic,
    EvalReal,
}

/// The held-out real test set. A round may ask for its size at any time but
/// reads its rows only after announcing [`Phase::EvalReal`].
pub trait HeldOut {
    fn len(&self) -> usize;

    fn data(&self) -> &Dataset;

    fn on_phase(&self, _phase: Phase) {}

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl HeldOut for Dataset {
    fn len(&self) -> usize {
        self.n()
    }

    fn data(&self) -> &Dataset {
        self
    }
}

/// Metrics of one trained model on one evaluation set. Values that are not
/// defined on that set (e.g. AUC with a single label class) are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub auc: Option<f64>,
    pub accuracy: Option<f64>,
    pub accuracy_minority: Option<f64>,
    pub accuracy_privileged: Option<f64>,
    pub dsp: Option<f64>,
    pub deo: Option<f64>,
    pub tpr_minority: Option<f64>,
    pub tpr_privileged: Option<f64>,
    pub ppv_minority: Option<f64>,
    pub ppv_privileged: Option<f64>,
    pub positive_rate_minority: Option<f64>,
    pub positive_rate_privileged: Option<f64>,
    pub label_ratio_minority: Option<f64>,
    pub label_ratio_privileged: Option<f64>,
    pub constant_prediction: bool,
}

impl EvalMetrics {
    pub const NAMES: [&'static str; 14] = [
        "auc",
        "accuracy",
        "accuracy_minority",
        "accuracy_privileged",
        "dsp",
        "deo",
        "tpr_minority",
        "tpr_privileged",
        "ppv_minority",
        "ppv_privileged",
        "positive_rate_minority",
        "positive_rate_privileged",
        "label_ratio_minority",
        "label_ratio_privileged",
    ];

    pub fn values(&self) -> [Option<f64>; 14] {
        [
            self.auc,
            self.accuracy,
            self.accuracy_minority,
            self.accuracy_privileged,
            self.dsp,
            self.deo,
            self.tpr_minority,
            self.tpr_privileged,
            self.ppv_minority,
            self.ppv_privileged,
            self.positive_rate_minority,
            self.positive_rate_privileged,
            self.label_ratio_minority,
            self.label_ratio_privileged,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES.iter().position(|n| *n == name).and_then(|i| self.values()[i])
    }
}

/// Scores `model` on `data`. Signed fairness gaps are privileged minus
/// minority.
pub fn evaluate_model(model: &LogisticModel, data: &Dataset) -> Result<EvalMetrics> {
    let (x, labels) = one_hot(data, true);
    let scores = model.predict_proba(&x)?;
    let pred: Vec<u8> = scores.iter().map(|&s| u8::from(s >= model.hyper.threshold)).collect();
    let groups = data.groups();
    let auc = match auc_roc(&scores, &labels) {
        Ok(a) => Some(a),
        Err(Error::SingleClass) => None,
        Err(e) => return Err(e),
    };
    let correct = pred.iter().zip(&labels).filter(|(p, y)| p == y).count();
    let mut m = EvalMetrics {
        auc,
        accuracy: (!pred.is_empty()).then(|| correct as f64 / pred.len() as f64),
        constant_prediction: pred.iter().all(|&p| p == pred[0]),
        ..EvalMetrics::default()
    };
    match evaluate(&pred, &labels, &groups) {
        Ok(r) => {
            m.accuracy_minority = r.minority.accuracy;
            m.accuracy_privileged = r.privileged.accuracy;
            m.dsp = Some(r.dsp_signed);
            m.deo = r.deo_signed;
            m.tpr_minority = r.minority.tpr;
            m.tpr_privileged = r.privileged.tpr;
            m.ppv_minority = r.minority.ppv;
            m.ppv_privileged = r.privileged.ppv;
            m.positive_rate_minority = r.minority.positive_rate;
            m.positive_rate_privileged = r.privileged.positive_rate;
            m.label_ratio_minority = r.minority.label_positive_ratio;
            m.label_ratio_privileged = r.privileged.label_positive_ratio;
        }
        // a sampled test set can miss a group entirely; group metrics stay undefined
        Err(Error::EmptyGroup(_)) => {}
        Err(e) => return Err(e),
    }
    Ok(m)
}

/// Outcome of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub synthesizer: String,
    /// `None` for the baseline.
    pub epsilon: Option<f64>,
    pub round: usize,
    /// Failure message; all metrics are absent when set.
    pub error: Option<String>,
    /// Evaluation on the real test set.
    pub real: Option<EvalMetrics>,
    /// Evaluation on the synthetic test set.
    pub synthetic: Option<EvalMetrics>,
    /// The downstream model predicts one class for every real test row.
    pub degenerate: bool,
    /// The synthetic training labels had a single class.
    pub constant_score: bool,
    /// ε charged by each fit made for this round.
    pub epsilon_spent: Vec<f64>,
    /// Every fit charged exactly its budget.
    pub budget_exact: bool,
}

impl RoundResult {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    /// Flat (metric, value) list: `r_*` on real test, `s_*` on synthetic
    /// test, and the R−S deltas.
    pub fn metrics(&self) -> Vec<(String, Option<f64>)> {
        let mut out = Vec::with_capacity(2 * EvalMetrics::NAMES.len() + 3);
        for (prefix, m) in [("r_", &self.real), ("s_", &self.synthetic)] {
            for (i, name) in EvalMetrics::NAMES.iter().enumerate() {
                out.push((format!("{prefix}{name}"), m.as_ref().and_then(|m| m.values()[i])));
            }
        }
        let delta = |name: &str| {
            let r = self.real.as_ref()?.get(name)?;
            let s = self.synthetic.as_ref()?.get(name)?;
            Some(r - s)
        };
        out.push(("auc_gap".into(), delta("auc")));
        out.push(("dsp_delta".into(), delta("dsp")));
        out.push(("deo_delta".into(), delta("deo")));
        out
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics().into_iter().find(|(n, _)| n == name).and_then(|(_, v)| v)
    }
}

/// Everything a round needs besides the data.
#[derive(Debug, Clone)]
pub struct RoundSpec<'a> {
    pub synthesizer: &'a str,
    pub epsilon: f64,
    pub delta: f64,
    pub round: usize,
    pub root_seed: u64,
    pub hyper: Hyper,
    pub settings: &'a SynthSettings,
    pub modes: &'a [EvalMode],
    pub source: SyntheticTestSource,
}

impl RoundSpec<'_> {
    fn rng(&self, stage: &str) -> crate::seed::Rng {
        let eps = epsilon_label(self.epsilon);
        let round = self.round.to_string();
        derive_rng(self.root_seed, &[self.synthesizer, &eps, &round, stage])
    }
}

/// Fit, sample, train on synthetic data, then evaluate on synthetic and real
/// test sets. Failures are captured in the result rather than returned.
pub fn run_round<H: HeldOut + ?Sized>(real_train: &Dataset, real_test: &H, spec: &RoundSpec) -> RoundResult {
    let mut result = RoundResult {
        synthesizer: spec.synthesizer.to_string(),
        epsilon: Some(spec.epsilon),
        round: spec.round,
        error: None,
        real: None,
        synthetic: None,
        degenerate: false,
        constant_score: false,
        epsilon_spent: Vec::new(),
        budget_exact: false,
    };
    if let Err(e) = fill_round(real_train, real_test, spec, &mut result) {
        result.error = Some(e.to_string());
        result.real = None;
        result.synthetic = None;
        result.degenerate = false;
    }
    result
}

fn fill_round<H: HeldOut + ?Sized>(
    real_train: &Dataset,
    real_test: &H,
    spec: &RoundSpec,
    out: &mut RoundResult,
) -> Result<()> {
    let synth = build(spec.synthesizer, spec.settings)?;
    let budget = PrivacyBudget::new(spec.epsilon, spec.delta)?;
    let schema = real_train.schema();

    real_test.on_phase(Phase::Fit);
    let fitted = synth.fit(real_train, budget, &mut spec.rng("fit"))?;
    let mut fits = vec![fitted.accountant.spent_epsilon()];
    let second = match spec.source {
        SyntheticTestSource::SeparateFit if spec.modes.contains(&EvalMode::SyntheticTest) => {
            let f = synth.fit(real_train, budget, &mut spec.rng("fit-test"))?;
            fits.push(f.accountant.spent_epsilon());
            Some(f)
        }
        _ => None,
    };
    out.budget_exact = fits.iter().all(|s| (s - spec.epsilon).abs() <= BUDGET_TOLERANCE);
    out.epsilon_spent = fits;

    real_test.on_phase(Phase::Sample);
    let synth_train = fitted.model.sample(schema, real_train.n(), &mut spec.rng("sample-train"))?;
    let synth_test = if spec.modes.contains(&EvalMode::SyntheticTest) {
        let model = second.as_ref().map_or(&fitted.model, |f| &f.model);
        Some(model.sample(schema, real_test.len(), &mut spec.rng("sample-test"))?)
    } else {
        None
    };

    real_test.on_phase(Phase::Train);
    let (x, y) = one_hot(&synth_train, true);
    let model = train(&x, &y, spec.hyper)?;
    out.constant_score = model.constant_score;

    real_test.on_phase(Phase::EvalSynthetic);
    if let Some(t) = &synth_test {
        out.synthetic = Some(evaluate_model(&model, t)?);
    }

    if spec.modes.contains(&EvalMode::RealTest) {
        real_test.on_phase(Phase::EvalReal);
        let m = evaluate_model(&model, real_test.data())?;
        out.degenerate = m.constant_prediction;
        out.real = Some(m);
    } else if let Some(s) = &out.synthetic {
        out.degenerate = s.constant_prediction;
    }
    Ok(())
}

/// Train on real train, evaluate on real test.
pub fn run_baseline(real_train: &Dataset, real_test: &Dataset, hyper: Hyper) -> RoundResult {
    let run = || -> Result<EvalMetrics> {
        let (x, y) = one_hot(real_train, true);
        let model = train(&x, &y, hyper)?;
        evaluate_model(&model, real_test)
    };
    let (real, error) = match run() {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    RoundResult {
        synthesizer: BASELINE.to_string(),
        epsilon: None,
        round: 0,
        error,
        degenerate: real.as_ref().is_some_and(|m| m.constant_prediction),
        real,
        synthetic: None,
        constant_score: false,
        epsilon_spent: Vec::new(),
        budget_exact: true,
    }
}

#[cfg(test)]
mod tests {
    use std::cell::{Cell, RefCell};

    use super::*;
    use crate::data::fixtures::schema;
    use crate::seed::rng_from_u64;
    use rand::Rng as _;

    fn toy(seed: u64, n: usize) -> Dataset {
        let s = schema(&[3, 2, 2], 1);
        let mut rng = rng_from_u64(seed);
        let rows = (0..n)
            .map(|_| {
                let a = rng.random_range(0..3u32);
                let g = u32::from(rng.random::<f64>() < 0.6);
                let p = 0.2 + 0.25 * a as f64 + 0.1 * g as f64;
                vec![a, g, u32::from(rng.random::<f64>() < p)]
            })
            .collect();
        Dataset::new(s, rows).unwrap()
    }

    /// Records the phase of every row access.
    struct Tracing {
        inner: Dataset,
        phase: Cell<Option<Phase>>,
        reads: RefCell<Vec<Option<Phase>>>,
    }

    impl HeldOut for Tracing {
        fn len(&self) -> usize {
            self.inner.n()
        }
        fn data(&self) -> &Dataset {
            self.reads.borrow_mut().push(self.phase.get());
            &self.inner
        }
        fn on_phase(&self, phase: Phase) {
            self.phase.set(Some(phase));
        }
    }

    fn spec<'a>(name: &'a str, settings: &'a SynthSettings, modes: &'a [EvalMode]) -> RoundSpec<'a> {
        RoundSpec {
            synthesizer: name,
            epsilon: 5.0,
            delta: 1e-5,
            round: 0,
            root_seed: 7,
            hyper: Hyper {
                epochs: 200,
                ..Hyper::default()
            },
            settings,
            modes,
            source: SyntheticTestSource::SameFit,
        }
    }

    const BOTH: [EvalMode; 2] = [EvalMode::RealTest, EvalMode::SyntheticTest];

    #[test]
    fn real_test_rows_read_only_during_real_evaluation() {
        let settings = SynthSettings::default();
        for name in crate::synth::REGISTERED {
            for source in [SyntheticTestSource::SameFit, SyntheticTestSource::SeparateFit] {
                let test = Tracing {
                    inner: toy(2, 300),
                    phase: Cell::new(None),
                    reads: RefCell::new(Vec::new()),
                };
                let mut sp = spec(name, &settings, &BOTH);
                sp.source = source;
                let r = run_round(&toy(1, 1200), &test, &sp);
                assert!(r.error.is_none(), "{name}: {:?}", r.error);
                let reads = test.reads.borrow();
                assert!(!reads.is_empty());
                assert!(reads.iter().all(|p| *p == Some(Phase::EvalReal)), "{name}: {reads:?}");
            }
        }
    }

    #[test]
    fn synthetic_only_mode_never_reads_real_test() {
        let settings = SynthSettings::default();
        let test = Tracing {
            inner: toy(2, 300),
            phase: Cell::new(None),
            reads: RefCell::new(Vec::new()),
        };
        let modes = [EvalMode::SyntheticTest];
        let r = run_round(&toy(1, 1200), &test, &spec("mst", &settings, &modes));
        assert!(r.real.is_none() && r.synthetic.is_some());
        assert!(test.reads.borrow().is_empty());
    }

    #[test]
    fn same_seed_same_result() {
        let settings = SynthSettings::default();
        let (train, test) = (toy(1, 800), toy(2, 200));
        for name in crate::synth::REGISTERED {
            let a = run_round(&train, &test, &spec(name, &settings, &BOTH));
            let b = run_round(&train, &test, &spec(name, &settings, &BOTH));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn degenerate_round_is_flagged_with_zero_gaps() {
        let settings = SynthSettings::default();
        let r = run_round(&toy(1, 800), &toy(2, 400), &spec("degenerate", &settings, &BOTH));
        assert!(r.degenerate && r.constant_score);
        let m = r.real.unwrap();
        assert_eq!(m.auc, Some(0.5));
        assert_eq!(m.dsp, Some(0.0));
        assert_eq!(m.deo, Some(0.0));
        // synthetic test labels are all one class
        assert_eq!(r.synthetic.unwrap().auc, None);
    }

    #[test]
    fn budget_spent_per_fit() {
        let settings = SynthSettings::default();
        let mut sp = spec("privbayes", &settings, &BOTH);
        sp.source = SyntheticTestSource::SeparateFit;
        let r = run_round(&toy(1, 800), &toy(2, 200), &sp);
        assert_eq!(r.epsilon_spent.len(), 2);
        assert!(r.budget_exact);
    }

    #[test]
    fn failure_is_recorded() {
        let settings = SynthSettings::default();
        let r = run_round(&toy(1, 800), &toy(2, 200), &spec("dp-gan", &settings, &BOTH));
        assert!(r.failed() && r.real.is_none());
        let mut sp = spec("mst", &settings, &BOTH);
        sp.epsilon = -1.0;
        assert!(run_round(&toy(1, 800), &toy(2, 200), &sp).failed());
    }

    #[test]
    fn metric_list_has_deltas() {
        let settings = SynthSettings::default();
        let r = run_round(&toy(1, 800), &toy(2, 200), &spec("mst", &settings, &BOTH));
        let m = r.metrics();
        assert_eq!(m.len(), 31);
        let want = r.real.as_ref().unwrap().dsp.unwrap() - r.synthetic.as_ref().unwrap().dsp.unwrap();
        assert_eq!(r.metric("dsp_delta"), Some(want));
    }

    #[test]
    fn baseline_on_real_data() {
        let b = run_baseline(&toy(1, 2000), &toy(2, 1000), Hyper::default());
        assert!(b.error.is_none() && !b.degenerate);
        assert!(b.real.unwrap().auc.unwrap() > 0.6);
    }
}
