use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ipf::{ipf_fit, IpfConfig};
use super::{accountant_for, measure, Fitted};
use crate::data::{Dataset, Schema};
use crate::dp::{exponential_choice, NoiseKind, PrivacyBudget};
use crate::error::{invalid, Result};
use crate::marginals::{advance, marginal, ContingencyTable, MarginalQuery};
use crate::model::JointModel;
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MwemConfig {
    pub iterations: usize,
    /// Largest full domain handled as an explicit joint.
    pub domain_cap: u64,
    /// Passes of multiplicative-weights updates over all measurements so far,
    /// per iteration (explicit path).
    pub repetitions: usize,
    pub noise: NoiseKind,
    /// IPF sweeps per refit (factored path).
    pub ipf_sweeps: usize,
    pub ipf_tol: f64,
    /// Rows drawn from the current factored model to answer queries that no
    /// single clique contains.
    pub answer_samples: usize,
}

impl Default for MwemConfig {
    fn default() -> Self {
        Self {
            iterations: 30,
            domain_cap: 1_000_000,
            repetitions: 20,
            noise: NoiseKind::Laplace,
            ipf_sweeps: 50,
            ipf_tol: 1e-6,
            answer_samples: 10_000,
        }
    }
}

impl MwemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(invalid("mwem iterations must be >= 1"));
        }
        if self.domain_cap < 2 {
            return Err(invalid("mwem domain cap must be >= 2"));
        }
        if self.repetitions == 0 || self.answer_samples == 0 || self.ipf_sweeps == 0 {
            return Err(invalid("mwem repetitions, ipf sweeps and answer samples must be >= 1"));
        }
        Ok(())
    }
}

/// Every 2-way query, then every 3-way query containing the label.
pub fn default_workload(schema: &Schema) -> Vec<MarginalQuery> {
    let d = schema.len();
    let label = schema.label().attribute;
    let mut w = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            w.push(MarginalQuery::new([i, j]).expect("distinct pair"));
        }
    }
    let others: Vec<usize> = (0..d).filter(|&a| a != label).collect();
    for (x, &i) in others.iter().enumerate() {
        for &j in &others[x + 1..] {
            w.push(MarginalQuery::new([i, j, label]).expect("distinct triple"));
        }
    }
    w
}

/// Fits by repeatedly picking the workload query the current model answers
/// worst (exponential mechanism), measuring it, and updating the model.
/// Spends ε/(2T) on each selection and each measurement.
pub fn mwem_fit(
    data: &Dataset,
    workload: &[MarginalQuery],
    budget: PrivacyBudget,
    cfg: &MwemConfig,
    rng: &mut Rng,
) -> Result<Fitted> {
    cfg.validate()?;
    if workload.is_empty() {
        return Err(invalid("mwem workload is empty"));
    }
    let schema = data.schema();
    let mut seen = BTreeSet::new();
    for q in workload {
        q.validate(schema)?;
        if !seen.insert(q) {
            return Err(invalid(format!("workload repeats query {:?}", q.attrs())));
        }
    }
    let mut acc = accountant_for(budget, cfg.noise)?;
    let t = cfg.iterations as f64;
    let select = PrivacyBudget::pure(budget.epsilon() / (2.0 * t))?;
    let meas_delta = if cfg.noise == NoiseKind::Gaussian { budget.delta() / t } else { 0.0 };
    let meas = PrivacyBudget::new(budget.epsilon() / (2.0 * t), meas_delta)?;
    let exact: Vec<ContingencyTable> = workload.iter().map(|q| marginal(data, q)).collect::<Result<_>>()?;
    let mut ctx = Loop {
        data,
        workload,
        exact: &exact,
        select,
        meas,
        cfg,
        acc: &mut acc,
    };
    let model = if schema.domain_size() <= cfg.domain_cap as u128 {
        ctx.explicit(rng)?
    } else {
        ctx.factored(rng)?
    };
    Ok(Fitted { model, accountant: acc })
}

struct Loop<'a> {
    data: &'a Dataset,
    workload: &'a [MarginalQuery],
    exact: &'a [ContingencyTable],
    select: PrivacyBudget,
    meas: PrivacyBudget,
    cfg: &'a MwemConfig,
    acc: &'a mut crate::dp::Accountant,
}

impl Loop<'_> {
    /// Chooses a query index given the model's answers (as counts).
    fn choose(&mut self, answers: &[Vec<f64>], round: usize, rng: &mut Rng) -> Result<usize> {
        let scores: Vec<f64> = answers
            .iter()
            .zip(self.exact)
            .map(|(a, e)| a.iter().zip(&e.cells).map(|(x, y)| (x - y).abs()).sum())
            .collect();
        self.acc.charge(format!("mwem/select/{round}"), self.select)?;
        exponential_choice(&scores, 1.0, self.select.epsilon(), rng)
    }

    fn measure(&mut self, i: usize, round: usize, rng: &mut Rng) -> Result<ContingencyTable> {
        measure(
            self.data,
            &self.workload[i],
            self.meas,
            self.cfg.noise,
            self.acc,
            format!("mwem/measure/{round}"),
            rng,
        )
    }

    fn explicit(&mut self, rng: &mut Rng) -> Result<JointModel> {
        let schema = self.data.schema();
        let shape = schema.cardinalities();
        let size: usize = shape.iter().product();
        let n = self.data.n() as f64;
        let mut p = vec![1.0 / size as f64; size];
        let mut measured: Vec<(usize, Vec<f64>)> = Vec::new();
        for round in 0..self.cfg.iterations {
            let answers: Vec<Vec<f64>> = self
                .workload
                .iter()
                .map(|q| project(&p, &shape, q).into_iter().map(|v| v * n).collect())
                .collect();
            let i = self.choose(&answers, round, rng)?;
            let m = self.measure(i, round, rng)?;
            measured.push((i, m.cells));
            for _ in 0..self.cfg.repetitions {
                for (i, m) in &measured {
                    mw_update(&mut p, &shape, &self.workload[*i], m, n);
                }
            }
        }
        Ok(JointModel::Explicit {
            shape,
            probs: p,
            fit: None,
        })
    }

    fn factored(&mut self, rng: &mut Rng) -> Result<JointModel> {
        let schema = self.data.schema().clone();
        let n = self.data.n() as f64;
        let ipf = IpfConfig {
            max_sweeps: self.cfg.ipf_sweeps,
            tol: self.cfg.ipf_tol,
            domain_cap: 0,
        };
        let mut measured: Vec<ContingencyTable> = Vec::new();
        let mut model: Option<JointModel> = None;
        for round in 0..self.cfg.iterations {
            let answers = match &model {
                None => self
                    .workload
                    .iter()
                    .map(|q| {
                        let k: usize = q.shape(&schema).iter().product();
                        vec![n / k as f64; k]
                    })
                    .collect(),
                Some(m) => self.factored_answers(m, n, rng)?,
            };
            let i = self.choose(&answers, round, rng)?;
            measured.push(self.measure(i, round, rng)?);
            let mut tables = measured.clone();
            let mut covered = vec![false; schema.len()];
            for t in &measured {
                t.attrs().iter().for_each(|&a| covered[a] = true);
            }
            for a in (0..schema.len()).filter(|&a| !covered[a]) {
                let q = MarginalQuery::new([a])?;
                tables.push(ContingencyTable::uniform(q, vec![schema.cardinality(a)]));
            }
            model = Some(ipf_fit(&tables, &schema, &ipf)?);
        }
        Ok(model.expect("at least one iteration"))
    }

    /// Exact answers for queries inside one clique, sampled answers for the
    /// rest.
    fn factored_answers(&self, model: &JointModel, n: f64, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
        let JointModel::Factored { cliques, .. } = model else {
            unreachable!("factored loop only builds factored models")
        };
        let schema = self.data.schema();
        let mut sample: Option<Dataset> = None;
        let mut out = Vec::with_capacity(self.workload.len());
        for q in self.workload {
            let t = match cliques.iter().find(|c| q.is_subset_of(&c.query)) {
                Some(c) => c.project(q)?,
                None => {
                    if sample.is_none() {
                        sample = Some(model.sample(schema, self.cfg.answer_samples, rng)?);
                    }
                    let s = sample.as_ref().unwrap();
                    let mut t = marginal(s, q)?;
                    t.cells.iter_mut().for_each(|v| *v /= s.n() as f64);
                    t
                }
            };
            out.push(t.cells.into_iter().map(|v| v * n).collect());
        }
        Ok(out)
    }
}

/// Marginal of an explicit joint over `q`.
fn project(p: &[f64], shape: &[usize], q: &MarginalQuery) -> Vec<f64> {
    let k: usize = q.attrs().iter().map(|&a| shape[a]).product();
    let mut out = vec![0.0; k];
    let mut coords = vec![0usize; shape.len()];
    for &v in p {
        out[cell(q, shape, &coords)] += v;
        advance(&mut coords, shape);
    }
    out
}

fn cell(q: &MarginalQuery, shape: &[usize], coords: &[usize]) -> usize {
    q.attrs().iter().fold(0, |acc, &a| acc * shape[a] + coords[a])
}

/// p(x) ∝ p(x)·exp((m_c − n·p_c) / (2n)) for the cell c containing x.
fn mw_update(p: &mut [f64], shape: &[usize], q: &MarginalQuery, m: &[f64], n: f64) {
    let factor: Vec<f64> = project(p, shape, q)
        .iter()
        .zip(m)
        .map(|(a, mc)| ((mc - a * n) / (2.0 * n)).exp())
        .collect();
    let mut coords = vec![0usize; shape.len()];
    for v in p.iter_mut() {
        *v *= factor[cell(q, shape, &coords)];
        advance(&mut coords, shape);
    }
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::schema;
    use crate::marginals::{to_distribution, total_variation};
    use crate::seed::rng_from_u64;
    use rand::Rng as _;

    #[test]
    fn workload_sizes() {
        // 5 attributes: 10 pairs + 6 label triples
        assert_eq!(default_workload(&schema(&[2, 3, 3, 2, 2], 3)).len(), 16);
        // 15 attributes: 105 pairs + 91 label triples
        let cards = vec![2; 15];
        let w = default_workload(&schema(&cards, 0));
        assert_eq!(w.len(), 196);
        assert!(w.iter().filter(|q| q.len() == 3).all(|q| q.contains(14)));
    }

    fn skewed_data(seed: u64, n: usize) -> Dataset {
        let s = schema(&[2, 2, 2], 1);
        let mut rng = rng_from_u64(seed);
        let rows = (0..n)
            .map(|_| {
                let a = u32::from(rng.random::<f64>() < 0.8);
                let b = if rng.random::<f64>() < 0.9 { a } else { 1 - a };
                vec![a, b, u32::from(rng.random::<f64>() < 0.3)]
            })
            .collect();
        Dataset::new(s, rows).unwrap()
    }

    #[test]
    fn huge_budget_matches_one_way_marginals() {
        let s = schema(&[2, 2], 0);
        let rows = (0..400u32).map(|i| vec![u32::from(i % 5 == 0), u32::from(i % 3 != 0)]).collect();
        let d = Dataset::new(s.clone(), rows).unwrap();
        let w = vec![MarginalQuery::new([0]).unwrap(), MarginalQuery::new([1]).unwrap()];
        let cfg = MwemConfig {
            iterations: 20,
            ..MwemConfig::default()
        };
        let f = mwem_fit(&d, &w, PrivacyBudget::pure(1e6).unwrap(), &cfg, &mut rng_from_u64(1)).unwrap();
        for q in &w {
            let want = to_distribution(&marginal(&d, q).unwrap());
            let got = f.model.marginal(&s, q, 100).unwrap();
            assert!(total_variation(&want.cells, &got.cells) < 0.01);
        }
        assert!(f.accountant.is_exhausted());
    }

    #[test]
    fn uniform_data_stays_uniform() {
        let s = schema(&[2, 2, 2], 1);
        let rows = (0..100_000u32).map(|i| vec![i % 2, (i / 2) % 2, (i / 4) % 2]).collect();
        let d = Dataset::new(s.clone(), rows).unwrap();
        let w = default_workload(&s);
        for (seed, eps) in [(0, 0.5), (1, 1.0), (2, 5.0), (3, 10.0)] {
            let f = mwem_fit(&d, &w, PrivacyBudget::pure(eps).unwrap(), &MwemConfig::default(), &mut rng_from_u64(seed))
                .unwrap();
            let p = f.model.dense_joint(&s, 100).unwrap();
            assert!(total_variation(&p, &[0.125; 8]) < 0.05);
        }
    }

    #[test]
    fn normalization_is_preserved() {
        let d = skewed_data(3, 500);
        let f = mwem_fit(&d, &default_workload(d.schema()), PrivacyBudget::pure(0.5).unwrap(), &MwemConfig::default(), &mut rng_from_u64(2))
            .unwrap();
        let JointModel::Explicit { probs, .. } = &f.model else { panic!() };
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(probs.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn single_update_normalizes() {
        let shape = [2, 2];
        let mut p = vec![0.25; 4];
        let q = MarginalQuery::new([0]).unwrap();
        mw_update(&mut p, &shape, &q, &[90.0, 10.0], 100.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // factor exp((90-50)/200) vs exp((10-50)/200)
        let ratio = p[0] / p[2];
        assert!((ratio - (0.4f64).exp()).abs() < 1e-12);
    }

    fn max_l1_error(d: &Dataset, m: &JointModel, w: &[MarginalQuery]) -> f64 {
        w.iter()
            .map(|q| {
                let want = to_distribution(&marginal(d, q).unwrap());
                let got = m.marginal(d.schema(), q, 1000).unwrap();
                want.cells.iter().zip(&got.cells).map(|(a, b)| (a - b).abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn error_shrinks_with_budget() {
        let d = skewed_data(5, 1000);
        let w = default_workload(d.schema());
        let mean = |eps: f64| {
            (0..20)
                .map(|seed| {
                    let f = mwem_fit(&d, &w, PrivacyBudget::pure(eps).unwrap(), &MwemConfig::default(), &mut rng_from_u64(seed))
                        .unwrap();
                    max_l1_error(&d, &f.model, &w)
                })
                .sum::<f64>()
                / 20.0
        };
        assert!(mean(10.0) <= mean(0.5));
    }

    #[test]
    fn factored_path_when_domain_exceeds_cap() {
        let d = skewed_data(6, 2000);
        let s = d.schema().clone();
        let cfg = MwemConfig {
            domain_cap: 4,
            iterations: 10,
            ..MwemConfig::default()
        };
        let w = default_workload(&s);
        let f = mwem_fit(&d, &w, PrivacyBudget::pure(1e4).unwrap(), &cfg, &mut rng_from_u64(8)).unwrap();
        assert_eq!(f.model.kind(), "factored");
        assert!(f.accountant.is_exhausted());
        f.model.validate(&s).unwrap();
        // the strong a-b dependency is learned
        let ab = f.model.marginal(&s, &MarginalQuery::new([0, 1]).unwrap(), 1000).unwrap();
        let want = to_distribution(&marginal(&d, &MarginalQuery::new([0, 1]).unwrap()).unwrap());
        assert!(total_variation(&ab.cells, &want.cells) < 0.05);
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = skewed_data(1, 50);
        let b = PrivacyBudget::pure(1.0).unwrap();
        let mut rng = rng_from_u64(0);
        assert!(mwem_fit(&d, &[], b, &MwemConfig::default(), &mut rng).is_err());
        let q = MarginalQuery::new([0]).unwrap();
        assert!(mwem_fit(&d, &[q.clone(), q], b, &MwemConfig::default(), &mut rng).is_err());
        let cfg = MwemConfig {
            iterations: 0,
            ..MwemConfig::default()
        };
        assert!(mwem_fit(&d, &default_workload(d.schema()), b, &cfg, &mut rng).is_err());
    }
}
