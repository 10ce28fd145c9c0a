//! Group fairness metrics and the label-massaging preprocessor.
//!
//! Group encoding throughout: 1 = privileged, 0 = minority. Signed metrics
//! are privileged minus minority.

use serde::{Deserialize, Serialize};

use crate::classifier::LogisticModel;
use crate::data::{one_hot, Dataset};
use crate::error::{Error, Result};

/// Confusion counts and derived rates for one group. Rates whose
/// denominator is zero are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n: usize,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tpr: Option<f64>,
    pub ppv: Option<f64>,
    pub accuracy: Option<f64>,
    pub positive_rate: Option<f64>,
    /// Fraction of true labels that are positive.
    pub label_positive_ratio: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl GroupStats {
    fn count(pred: &[u8], labels: &[u8], groups: &[u8], g: u8) -> Self {
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for ((&p, &y), _) in pred.iter().zip(labels).zip(groups).filter(|(_, &gi)| gi == g) {
            match (p, y) {
                (1, 1) => tp += 1,
                (1, _) => fp += 1,
                (_, 1) => fn_ += 1,
                _ => tn += 1,
            }
        }
        let n = tp + fp + tn + fn_;
        Self {
            n,
            tp,
            fp,
            tn,
            fn_,
            tpr: ratio(tp, tp + fn_),
            ppv: ratio(tp, tp + fp),
            accuracy: ratio(tp + tn, n),
            positive_rate: ratio(tp + fp, n),
            label_positive_ratio: ratio(tp + fn_, n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerGroup {
    pub minority: f64,
    pub privileged: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub privileged: GroupStats,
    pub minority: GroupStats,
    /// P(Y'=1 | privileged) - P(Y'=1 | minority).
    pub dsp_signed: f64,
    pub dsp_abs: f64,
    /// TPR(privileged) - TPR(minority); `None` when either group has no
    /// positive labels.
    pub deo_signed: Option<f64>,
    pub deo_abs: Option<f64>,
    /// Every prediction has the same value.
    pub constant_prediction: bool,
}

fn check_lengths(pred: &[u8], labels: &[u8], groups: &[u8]) -> Result<()> {
    if pred.len() != labels.len() || pred.len() != groups.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions, {} labels, {} groups",
            pred.len(),
            labels.len(),
            groups.len()
        )));
    }
    Ok(())
}

pub fn evaluate(pred: &[u8], labels: &[u8], groups: &[u8]) -> Result<FairnessReport> {
    check_lengths(pred, labels, groups)?;
    let privileged = GroupStats::count(pred, labels, groups, 1);
    let minority = GroupStats::count(pred, labels, groups, 0);
    let (pp, pm) = match (privileged.positive_rate, minority.positive_rate) {
        (Some(a), Some(b)) => (a, b),
        (None, _) => return Err(Error::EmptyGroup("privileged")),
        (_, None) => return Err(Error::EmptyGroup("minority")),
    };
    let dsp_signed = pp - pm;
    let deo_signed = match (privileged.tpr, minority.tpr) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    };
    Ok(FairnessReport {
        privileged,
        minority,
        dsp_signed,
        dsp_abs: dsp_signed.abs(),
        deo_signed,
        deo_abs: deo_signed.map(f64::abs),
        constant_prediction: pred.iter().all(|&p| p == pred[0]),
    })
}

pub fn subgroup_accuracy(pred: &[u8], labels: &[u8], groups: &[u8]) -> Result<PerGroup> {
    let r = evaluate(pred, labels, groups)?;
    Ok(PerGroup {
        minority: r.minority.accuracy.expect("non-empty group"),
        privileged: r.privileged.accuracy.expect("non-empty group"),
    })
}

/// Fraction of positive labels within each protected group.
pub fn positive_label_ratio(data: &Dataset) -> Result<PerGroup> {
    let labels = data.labels();
    let groups = data.groups();
    let rate = |g: u8| {
        let (pos, n) = labels
            .iter()
            .zip(&groups)
            .filter(|(_, &gi)| gi == g)
            .fold((0usize, 0usize), |(p, n), (&y, _)| (p + usize::from(y), n + 1));
        ratio(pos, n)
    };
    Ok(PerGroup {
        minority: rate(0).ok_or(Error::EmptyGroup("minority"))?,
        privileged: rate(1).ok_or(Error::EmptyGroup("privileged"))?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassageReport {
    /// Flips requested per direction.
    pub m: usize,
    pub promoted: usize,
    pub demoted: usize,
    /// m minus the flips that had candidates, per direction, summed.
    pub shortfall: usize,
    /// Group whose negatives were promoted (1 = privileged, 0 = minority).
    pub promoted_group: u8,
    pub label_gap_before: f64,
    pub label_gap_after: f64,
}

/// Flips labels to close the positive-label-rate gap between the groups
/// while keeping the total number of positives. With n_a, n_b the group
/// sizes and gap the difference of their positive-label rates,
/// M = ceil(|gap| * n_a * n_b / n). The M highest-scored negatives of the
/// lower-rate group become positive and the M lowest-scored positives of
/// the higher-rate group become negative. Scores come from `ranker`
/// applied to the non-label attributes.
pub fn massage_labels(data: &Dataset, ranker: &LogisticModel) -> Result<(Dataset, MassageReport)> {
    let labels = data.labels();
    let groups = data.groups();
    let (x, _) = one_hot(data, true);
    let scores = ranker.predict_proba(&x)?;
    let count = |g: u8| {
        labels
            .iter()
            .zip(&groups)
            .filter(|(_, &gi)| gi == g)
            .fold((0usize, 0usize), |(p, n), (&y, _)| (p + usize::from(y), n + 1))
    };
    let (pos_p, n_p) = count(1);
    let (pos_m, n_m) = count(0);
    if n_p == 0 {
        return Err(Error::EmptyGroup("privileged"));
    }
    if n_m == 0 {
        return Err(Error::EmptyGroup("minority"));
    }
    let n = n_p + n_m;
    let gap = pos_p as f64 / n_p as f64 - pos_m as f64 / n_m as f64;
    // |gap| * n_p * n_m / n in exact integer arithmetic
    let num = (pos_p * n_m).abs_diff(pos_m * n_p);
    let m = num.div_ceil(n);
    let (high, low) = if gap >= 0.0 { (1u8, 0u8) } else { (0u8, 1u8) };

    let mut promote: Vec<usize> = (0..n).filter(|&i| groups[i] == low && labels[i] == 0).collect();
    let mut demote: Vec<usize> = (0..n).filter(|&i| groups[i] == high && labels[i] == 1).collect();
    // stable sorts keep row order among equal scores
    promote.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    demote.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let k = m.min(promote.len()).min(demote.len());
    let mut out = labels.clone();
    for &i in &promote[..k] {
        out[i] = 1;
    }
    for &i in &demote[..k] {
        out[i] = 0;
    }
    let massaged = data.with_labels(&out);
    let after = positive_label_ratio(&massaged)?;
    Ok((
        massaged,
        MassageReport {
            m,
            promoted: k,
            demoted: k,
            shortfall: 2 * (m - k),
            promoted_group: low,
            label_gap_before: gap,
            label_gap_after: after.privileged - after.minority,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{train, Hyper};
    use crate::data::fixtures::schema;
    use proptest::prelude::*;

    #[test]
    fn equal_rates_zero_dsp() {
        let r = evaluate(&[1, 0, 1, 0], &[1, 0, 0, 1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(r.dsp_signed, 0.0);
    }

    #[test]
    fn hand_dsp() {
        // privileged: 2 of 4 predicted positive, minority: 1 of 4
        let pred = [1, 1, 0, 0, 1, 0, 0, 0];
        let labels = [1, 0, 1, 0, 1, 1, 0, 0];
        let groups = [1, 1, 1, 1, 0, 0, 0, 0];
        let r = evaluate(&pred, &labels, &groups).unwrap();
        assert_eq!(r.dsp_signed, 0.25);
        // TPR: privileged 1/2, minority 1/2
        assert_eq!(r.deo_signed, Some(0.0));
        assert_eq!(r.privileged.ppv, Some(0.5));
        assert_eq!(r.minority.ppv, Some(1.0));
    }

    #[test]
    fn undefined_tpr_is_flagged() {
        let r = evaluate(&[1, 0, 0], &[0, 1, 0], &[1, 0, 1]).unwrap();
        assert_eq!(r.privileged.tpr, None);
        assert_eq!(r.deo_signed, None);
        assert_eq!(r.deo_abs, None);
    }

    #[test]
    fn errors() {
        assert!(matches!(evaluate(&[1], &[1, 0], &[1, 0]), Err(Error::LengthMismatch(_))));
        assert!(matches!(evaluate(&[1, 0], &[1, 0], &[1, 1]), Err(Error::EmptyGroup("minority"))));
        assert!(matches!(evaluate(&[1, 0], &[1, 0], &[0, 0]), Err(Error::EmptyGroup("privileged"))));
    }

    #[test]
    fn constant_predictor_is_exactly_fair() {
        let labels = [1, 0, 1, 1, 0, 1];
        let groups = [1, 1, 1, 0, 0, 0];
        for c in [0u8, 1] {
            let r = evaluate(&[c; 6], &labels, &groups).unwrap();
            assert_eq!(r.dsp_signed, 0.0);
            assert_eq!(r.deo_signed, Some(0.0));
            assert!(r.constant_prediction);
        }
    }

    #[test]
    fn subgroup_accuracy_cases() {
        let acc = subgroup_accuracy(&[1, 0, 1, 0], &[1, 0, 1, 0], &[1, 1, 0, 0]).unwrap();
        assert_eq!((acc.minority, acc.privileged), (1.0, 1.0));
        // one error among the three minority rows
        let acc = subgroup_accuracy(&[1, 0, 1, 1, 0, 0], &[1, 0, 1, 1, 0, 1], &[1, 1, 1, 0, 0, 0]).unwrap();
        assert_eq!(acc.privileged, 1.0);
        assert!((acc.minority - 2.0 / 3.0).abs() < 1e-15);
    }

    fn dataset(rows: &[[u32; 3]]) -> Dataset {
        // attributes: a0 feature (3 values), a1 protected, a2 label
        Dataset::new(schema(&[3, 2, 2], 1), rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn label_ratios() {
        let d = dataset(&[[0, 1, 1], [1, 1, 1], [2, 1, 0], [0, 1, 0], [1, 0, 1], [2, 0, 0], [0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 0, 0]]);
        let r = positive_label_ratio(&d).unwrap();
        assert_eq!(r.privileged, 0.5);
        assert_eq!(r.minority, 1.0 / 6.0);
        let all = dataset(&[[0, 1, 1], [0, 0, 1]]);
        let r = positive_label_ratio(&all).unwrap();
        assert_eq!((r.minority, r.privileged), (1.0, 1.0));
        assert!(positive_label_ratio(&dataset(&[[0, 1, 1]])).is_err());
    }

    fn ranker(d: &Dataset) -> LogisticModel {
        let (x, y) = one_hot(d, true);
        // constant labels would give a constant ranker; train on a varied copy
        train(&x, &y, Hyper::default()).unwrap()
    }

    #[test]
    fn zero_gap_no_flips() {
        let d = dataset(&[[0, 1, 1], [1, 1, 0], [2, 0, 1], [0, 0, 0]]);
        let (out, rep) = massage_labels(&d, &ranker(&d)).unwrap();
        assert_eq!(rep.m, 0);
        assert_eq!(out, d);
    }

    #[test]
    fn hand_massage_case() {
        // privileged 5 rows with 3 positives (0.6), minority 5 rows with 1
        // positive (0.2): gap 0.4, M = ceil(0.4 * 5 * 5 / 10) = 1
        let d = dataset(&[
            [2, 1, 1],
            [2, 1, 1],
            [0, 1, 1],
            [0, 1, 0],
            [1, 1, 0],
            [2, 0, 1],
            [2, 0, 0],
            [1, 0, 0],
            [0, 0, 0],
            [0, 0, 0],
        ]);
        let r = ranker(&d);
        let (out, rep) = massage_labels(&d, &r).unwrap();
        assert_eq!(rep.m, 1);
        assert_eq!((rep.promoted, rep.demoted, rep.shortfall), (1, 1, 0));
        let before = d.labels();
        let after = out.labels();
        let changed: Vec<usize> = (0..10).filter(|&i| before[i] != after[i]).collect();
        assert_eq!(changed.len(), 2);
        // the promoted row is the minority negative with a0 = 2 (highest
        // score); the demoted one is the privileged positive with a0 = 0
        assert_eq!(changed, vec![2, 6]);
        assert_eq!(after.iter().map(|&v| v as usize).sum::<usize>(), 4);
        assert!((rep.label_gap_after - 0.0).abs() < 1e-12);
    }

    #[test]
    fn reversed_gap_flips_the_other_way() {
        let d = dataset(&[[2, 0, 1], [2, 0, 1], [0, 0, 1], [0, 0, 0], [1, 1, 1], [2, 1, 0], [0, 1, 0], [1, 1, 0]]);
        let (out, rep) = massage_labels(&d, &ranker(&d)).unwrap();
        assert_eq!(rep.promoted_group, 1);
        assert!(rep.m >= 1);
        let r = positive_label_ratio(&out).unwrap();
        assert!((r.privileged - r.minority).abs() < rep.label_gap_before.abs());
        assert_eq!(out.labels().iter().filter(|&&v| v == 1).count(), 4);
    }

    proptest! {
        #[test]
        fn invariants(rows in proptest::collection::vec((0u8..2, 0u8..2, 0u8..2), 2..60), perm_seed in 0u64..100) {
            let pred: Vec<u8> = rows.iter().map(|r| r.0).collect();
            let labels: Vec<u8> = rows.iter().map(|r| r.1).collect();
            let mut groups: Vec<u8> = rows.iter().map(|r| r.2).collect();
            groups[0] = 0;
            groups[1] = 1;
            let r = evaluate(&pred, &labels, &groups).unwrap();
            prop_assert_eq!(r.dsp_abs, r.dsp_signed.abs());
            // swapping the group encoding negates the signed metrics
            let swapped: Vec<u8> = groups.iter().map(|g| 1 - g).collect();
            let s = evaluate(&pred, &labels, &swapped).unwrap();
            prop_assert!((s.dsp_signed + r.dsp_signed).abs() < 1e-15);
            prop_assert_eq!(s.dsp_abs, r.dsp_abs);
            prop_assert_eq!(s.deo_abs, r.deo_abs);
            // row order does not matter
            let n = pred.len();
            let perm: Vec<usize> = (0..n).map(|i| (i * (2 * perm_seed as usize + 1) + 7) % n).collect();
            let mut seen = perm.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() == n {
                let p2: Vec<u8> = perm.iter().map(|&i| pred[i]).collect();
                let l2: Vec<u8> = perm.iter().map(|&i| labels[i]).collect();
                let g2: Vec<u8> = perm.iter().map(|&i| groups[i]).collect();
                let t = evaluate(&p2, &l2, &g2).unwrap();
                prop_assert_eq!(t.privileged, r.privileged);
                prop_assert_eq!(t.minority, r.minority);
            }
        }

        #[test]
        fn massage_keeps_class_skew(rows in proptest::collection::vec((0u32..3, 0u32..2, 0u32..2), 4..50)) {
            let mut rows: Vec<[u32; 3]> = rows.into_iter().map(|(a, b, c)| [a, b, c]).collect();
            rows[0] = [0, 0, 0];
            rows[1] = [1, 1, 1];
            let d = dataset(&rows);
            let (out, rep) = massage_labels(&d, &ranker(&d)).unwrap();
            let pos = |d: &Dataset| d.labels().iter().filter(|&&v| v == 1).count();
            prop_assert_eq!(pos(&out), pos(&d));
            prop_assert_eq!(rep.promoted, rep.demoted);
        }
    }
}
