use std::collections::HashMap;

use itertools::Itertools;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{accountant_for, measure, Fitted};
use crate::data::Dataset;
use crate::dp::{exponential_choice, NoiseKind, PrivacyBudget};
use crate::error::{invalid, Result};
use crate::marginals::{marginal, mi_sensitivity, MarginalQuery};
use crate::model::{ConditionalTable, JointModel, Network};
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivBayesConfig {
    /// Parent-set size once enough attributes have been placed.
    pub k: usize,
}

impl Default for PrivBayesConfig {
    fn default() -> Self {
        Self { k: 2 }
    }
}

/// Mutual information between one attribute and a parent set, computed on
/// demand and cached.
struct MiCache<'a> {
    data: &'a Dataset,
    cache: HashMap<(usize, Vec<usize>), f64>,
}

impl MiCache<'_> {
    fn get(&mut self, child: usize, parents: &[usize]) -> Result<f64> {
        let key = (child, parents.to_vec());
        if let Some(&v) = self.cache.get(&key) {
            return Ok(v);
        }
        let q = MarginalQuery::wide(parents.iter().copied().chain([child]))?;
        let v = marginal(self.data, &q)?.mutual_information_split(&[child])?;
        self.cache.insert(key, v);
        Ok(v)
    }
}

/// Half the budget builds the network greedily: a uniformly random first
/// attribute, then at each step an (attribute, parent set) pair drawn by the
/// exponential mechanism on I(attribute; parents), with parent sets of size
/// min(k, #placed). The other half measures each attribute's family
/// marginal and conditions it on the parents.
pub fn privbayes_fit(data: &Dataset, cfg: &PrivBayesConfig, budget: PrivacyBudget, rng: &mut Rng) -> Result<Fitted> {
    let schema = data.schema();
    let d = schema.len();
    if cfg.k == 0 || cfg.k >= d {
        return Err(invalid(format!("privbayes k must be in [1, {}), got {}", d, cfg.k)));
    }
    let mut acc = accountant_for(budget, NoiseKind::Laplace)?;
    let step = PrivacyBudget::pure(budget.epsilon() / (2.0 * (d - 1) as f64))?;
    let sens = mi_sensitivity(data.n());
    let mut mi = MiCache {
        data,
        cache: HashMap::new(),
    };

    let first = rng.random_range(0..d);
    let mut placed = vec![false; d];
    placed[first] = true;
    let mut families: Vec<(usize, Vec<usize>)> = vec![(first, Vec::new())];
    for s in 1..d {
        let chosen: Vec<usize> = families.iter().map(|(a, _)| *a).sorted().collect();
        let size = cfg.k.min(chosen.len());
        let mut candidates = Vec::new();
        let mut scores = Vec::new();
        for a in (0..d).filter(|&a| !placed[a]) {
            for parents in chosen.iter().copied().combinations(size) {
                scores.push(mi.get(a, &parents)?);
                candidates.push((a, parents));
            }
        }
        acc.charge(format!("privbayes/structure/{s}"), step)?;
        let k = exponential_choice(&scores, sens, step.epsilon(), rng)?;
        let (a, parents) = candidates.swap_remove(k);
        placed[a] = true;
        families.push((a, parents));
    }

    let per_table = PrivacyBudget::pure(budget.epsilon() / (2.0 * d as f64))?;
    let mut conditionals = Vec::with_capacity(d);
    for (a, parents) in &families {
        let q = MarginalQuery::wide(parents.iter().copied().chain([*a]))?;
        let t = measure(data, &q, per_table, NoiseKind::Laplace, &mut acc, format!("privbayes/measure/{a}"), rng)?;
        conditionals.push(ConditionalTable::from_joint(&t, *a)?);
    }
    Ok(Fitted {
        model: JointModel::BayesNet {
            network: Network { conditionals },
        },
        accountant: acc,
    })
}
