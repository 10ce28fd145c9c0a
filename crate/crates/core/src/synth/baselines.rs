use super::{accountant_for, measure, Fitted};
use crate::data::Dataset;
use crate::dp::{NoiseKind, PrivacyBudget};
use crate::error::Result;
use crate::marginals::MarginalQuery;
use crate::model::{ConditionalTable, JointModel, Network};
use crate::seed::Rng;

/// Every 1-way marginal measured at ε/d; attributes sampled independently.
pub fn independent_fit(data: &Dataset, budget: PrivacyBudget, rng: &mut Rng) -> Result<Fitted> {
    let d = data.schema().len();
    let mut acc = accountant_for(budget, NoiseKind::Laplace)?;
    let each = PrivacyBudget::pure(budget.epsilon() / d as f64)?;
    let mut conditionals = Vec::with_capacity(d);
    for a in 0..d {
        let q = MarginalQuery::new([a])?;
        let t = measure(data, &q, each, NoiseKind::Laplace, &mut acc, format!("independent/{a}"), rng)?;
        conditionals.push(ConditionalTable::root(a, &t.cells));
    }
    Ok(Fitted {
        model: JointModel::BayesNet {
            network: Network { conditionals },
        },
        accountant: acc,
    })
}

/// A constant-label model: the label is fixed to the (noisily measured)
/// majority class and every other attribute is uniform. Spends the whole
/// budget on the label count.
pub fn degenerate_fit(data: &Dataset, budget: PrivacyBudget, rng: &mut Rng) -> Result<Fitted> {
    let schema = data.schema();
    let label = schema.label().attribute;
    let mut acc = accountant_for(budget, NoiseKind::Laplace)?;
    let q = MarginalQuery::new([label])?;
    let b = PrivacyBudget::pure(budget.epsilon())?;
    let counts = measure(data, &q, b, NoiseKind::Laplace, &mut acc, "degenerate/label".into(), rng)?;
    let majority = counts
        .cells
        .iter()
        .enumerate()
        .fold(0, |best, (i, &c)| if c > counts.cells[best] { i } else { best });
    let conditionals = (0..schema.len())
        .map(|a| {
            let card = schema.cardinality(a);
            let weights: Vec<f64> = if a == label {
                (0..card).map(|v| f64::from(u8::from(v == majority))).collect()
            } else {
                vec![1.0; card]
            };
            ConditionalTable::root(a, &weights)
        })
        .collect();
    Ok(Fitted {
        model: JointModel::BayesNet {
            network: Network { conditionals },
        },
        accountant: acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::schema;
    use crate::marginals::{marginal, mutual_information, to_distribution, total_variation};
    use crate::seed::rng_from_u64;

    fn correlated() -> Dataset {
        let s = schema(&[3, 2, 2], 1);
        let rows = (0..900u32).map(|i| vec![i % 3, u32::from(i % 3 == 0), u32::from(i % 3 == 0 && i % 2 == 0)]).collect();
        Dataset::new(s, rows).unwrap()
    }

    #[test]
    fn independent_matches_one_way_and_drops_dependence() {
        let d = correlated();
        let s = d.schema().clone();
        let f = independent_fit(&d, PrivacyBudget::pure(1e6).unwrap(), &mut rng_from_u64(0)).unwrap();
        assert!(f.accountant.is_exhausted());
        for a in 0..3 {
            let q = MarginalQuery::new([a]).unwrap();
            let want = to_distribution(&marginal(&d, &q).unwrap());
            let got = f.model.marginal(&s, &q, 100).unwrap();
            assert!(total_variation(&want.cells, &got.cells) < 0.01);
        }
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let q = MarginalQuery::new([i, j]).unwrap();
            let pair = f.model.marginal(&s, &q, 100).unwrap();
            assert!(mutual_information(&pair).unwrap() < 0.01);
            let pi = f.model.marginal(&s, &MarginalQuery::new([i]).unwrap(), 100).unwrap();
            let pj = f.model.marginal(&s, &MarginalQuery::new([j]).unwrap(), 100).unwrap();
            let product: Vec<f64> = pi.cells.iter().flat_map(|a| pj.cells.iter().map(move |b| a * b)).collect();
            assert!(total_variation(&pair.cells, &product) < 1e-12);
        }
    }

    #[test]
    fn degenerate_labels_are_majority() {
        let d = correlated();
        let s = d.schema().clone();
        let mut rng = rng_from_u64(1);
        let f = degenerate_fit(&d, PrivacyBudget::pure(1.0).unwrap(), &mut rng).unwrap();
        assert!(f.accountant.is_exhausted());
        let out = f.model.sample(&s, 1000, &mut rng).unwrap();
        // 150 of 900 rows are positive, so the majority is 0
        assert!(out.labels().iter().all(|&y| y == 0));
        let x = marginal(&out, &MarginalQuery::new([0]).unwrap()).unwrap();
        assert!(x.cells.iter().all(|&c| c > 250.0));
    }
}
