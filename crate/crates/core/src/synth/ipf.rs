use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Schema;
use crate::error::{invalid, Error, Result};
use crate::marginals::{advance, to_distribution, ContingencyTable, MarginalQuery};
use crate::model::{ConditionalTable, FitInfo, JointModel, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IpfConfig {
    pub max_sweeps: usize,
    /// Stop once every target is matched within this L1 gap.
    pub tol: f64,
    /// Largest full domain fitted as an explicit joint.
    pub domain_cap: u64,
}

impl Default for IpfConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 500,
            tol: 1e-7,
            domain_cap: 1_000_000,
        }
    }
}

/// Fits a distribution whose marginals match the measured tables.
///
/// Small domains get true IPF on an explicit joint starting from uniform.
/// Larger ones keep one table per maximal measured attribute set, rescale
/// those cliques towards every contained measurement, and pull overlapping
/// cliques together by averaging their shared marginals; the result is
/// sampled attribute by attribute from the clique that overlaps most with
/// what is already drawn.
pub fn ipf_fit(measured: &[ContingencyTable], schema: &Schema, cfg: &IpfConfig) -> Result<JointModel> {
    if measured.is_empty() {
        return Err(invalid("ipf needs at least one measured table"));
    }
    let mut covered = vec![false; schema.len()];
    for t in measured {
        t.query.validate(schema)?;
        if t.shape != t.query.shape(schema) {
            return Err(Error::LengthMismatch(format!(
                "table over {:?} has shape {:?}, schema says {:?}",
                t.attrs(),
                t.shape,
                t.query.shape(schema)
            )));
        }
        if t.cells.len() != t.shape.iter().product::<usize>() {
            return Err(Error::LengthMismatch(format!("table over {:?} has {} cells", t.attrs(), t.cells.len())));
        }
        for &a in t.attrs() {
            covered[a] = true;
        }
    }
    if let Some(a) = covered.iter().position(|&c| !c) {
        return Err(invalid(format!("attribute {a} is not covered by any measured table")));
    }
    let targets = merge_duplicates(measured);
    if schema.domain_size() <= cfg.domain_cap as u128 {
        Ok(explicit_ipf(&targets, schema, cfg))
    } else {
        factored_ipf(targets, schema, cfg)
    }
}

/// Normalizes and averages repeated measurements of the same query.
fn merge_duplicates(measured: &[ContingencyTable]) -> Vec<ContingencyTable> {
    let mut by_query: BTreeMap<MarginalQuery, (ContingencyTable, usize)> = BTreeMap::new();
    for t in measured {
        let t = to_distribution(t);
        by_query
            .entry(t.query.clone())
            .and_modify(|(acc, k)| {
                acc.cells.iter_mut().zip(&t.cells).for_each(|(a, b)| *a += b);
                *k += 1;
            })
            .or_insert((t, 1));
    }
    by_query
        .into_values()
        .map(|(mut t, k)| {
            t.cells.iter_mut().for_each(|c| *c /= k as f64);
            t.total = 1.0;
            t
        })
        .collect()
}

fn explicit_ipf(targets: &[ContingencyTable], schema: &Schema, cfg: &IpfConfig) -> JointModel {
    let shape = schema.cardinalities();
    let size: usize = shape.iter().product();
    let mut p = vec![1.0 / size as f64; size];
    // joint cell -> target cell, one column per target
    let index: Vec<Vec<u32>> = targets
        .iter()
        .map(|t| {
            let mut out = Vec::with_capacity(size);
            let mut coords = vec![0usize; shape.len()];
            for _ in 0..size {
                let idx = t.attrs().iter().fold(0, |acc, &a| acc * shape[a] + coords[a]);
                out.push(idx as u32);
                advance(&mut coords, &shape);
            }
            out
        })
        .collect();
    let project = |p: &[f64], k: usize| {
        let mut m = vec![0.0; targets[k].cells.len()];
        for (x, &c) in index[k].iter().enumerate() {
            m[c as usize] += p[x];
        }
        m
    };
    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        for (k, t) in targets.iter().enumerate() {
            let m = project(&p, k);
            for (x, &c) in index[k].iter().enumerate() {
                let c = c as usize;
                p[x] = if m[c] > 0.0 { p[x] * t.cells[c] / m[c] } else { 0.0 };
            }
        }
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= z);
        residual = (0..targets.len())
            .map(|k| l1(&project(&p, k), &targets[k].cells))
            .fold(0.0, f64::max);
        if residual < cfg.tol {
            break;
        }
    }
    JointModel::Explicit {
        shape,
        probs: p,
        fit: Some(FitInfo { residual, sweeps }),
    }
}

fn factored_ipf(targets: Vec<ContingencyTable>, schema: &Schema, cfg: &IpfConfig) -> Result<JointModel> {
    // a measured set strictly inside another one constrains that clique
    // instead of becoming a clique of its own
    let all: Vec<MarginalQuery> = targets.iter().map(|t| t.query.clone()).collect();
    let (mut cliques, inner): (Vec<_>, Vec<_>) = targets
        .into_iter()
        .partition(|t| !all.iter().any(|q| q != &t.query && t.query.is_subset_of(q)));

    let mut overlaps = Vec::new();
    for i in 0..cliques.len() {
        for j in i + 1..cliques.len() {
            let shared: Vec<usize> = cliques[i]
                .attrs()
                .iter()
                .copied()
                .filter(|&a| cliques[j].query.contains(a))
                .collect();
            if !shared.is_empty() {
                overlaps.push((i, j, MarginalQuery::wide(shared)?));
            }
        }
    }

    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        for t in &inner {
            for c in cliques.iter_mut().filter(|c| t.query.is_subset_of(&c.query)) {
                rescale(c, t)?;
            }
        }
        for (i, j, s) in &overlaps {
            let a = cliques[*i].project(s)?;
            let b = cliques[*j].project(s)?;
            let mut avg = a.clone();
            avg.cells.iter_mut().zip(&b.cells).for_each(|(x, y)| *x = 0.5 * (*x + y));
            rescale(&mut cliques[*i], &avg)?;
            rescale(&mut cliques[*j], &avg)?;
        }
        residual = 0.0f64;
        for t in &inner {
            for c in cliques.iter().filter(|c| t.query.is_subset_of(&c.query)) {
                residual = residual.max(l1(&c.project(&t.query)?.cells, &t.cells));
            }
        }
        for (i, j, s) in &overlaps {
            residual = residual.max(l1(&cliques[*i].project(s)?.cells, &cliques[*j].project(s)?.cells));
        }
        if residual < cfg.tol {
            break;
        }
    }
    let network = network_from_cliques(&cliques, schema)?;
    Ok(JointModel::Factored {
        cliques,
        network,
        fit: FitInfo { residual, sweeps },
    })
}

/// Scales `clique` so its projection onto `target`'s attributes equals
/// `target`. Target mass on a projected-zero cell is spread evenly.
fn rescale(clique: &mut ContingencyTable, target: &ContingencyTable) -> Result<()> {
    let m = clique.project(&target.query)?;
    let axes: Vec<usize> = target
        .attrs()
        .iter()
        .map(|a| clique.attrs().iter().position(|b| b == a).unwrap())
        .collect();
    let rest: usize = clique.cells.len() / target.cells.len();
    let mut coords = vec![0usize; clique.shape.len()];
    for v in clique.cells.iter_mut() {
        let c = axes.iter().fold(0, |acc, &k| acc * clique.shape[k] + coords[k]);
        *v = if m.cells[c] > 0.0 {
            *v * target.cells[c] / m.cells[c]
        } else {
            target.cells[c] / rest as f64
        };
        advance(&mut coords, &clique.shape);
    }
    let z: f64 = clique.cells.iter().sum();
    clique.cells.iter_mut().for_each(|v| *v /= z);
    clique.total = 1.0;
    Ok(())
}

/// Orders attributes greedily: next is the attribute whose best clique
/// shares the most already-placed attributes (ties: larger clique, then
/// lower index), conditioned on that shared set.
pub(crate) fn network_from_cliques(cliques: &[ContingencyTable], schema: &Schema) -> Result<Network> {
    let d = schema.len();
    let mut placed = vec![false; d];
    let mut conditionals = Vec::with_capacity(d);
    for _ in 0..d {
        // (overlap, clique size, attribute, clique index)
        let mut best: Option<(usize, usize, usize, usize)> = None;
        for (ci, c) in cliques.iter().enumerate() {
            let overlap = c.attrs().iter().filter(|&&a| placed[a]).count();
            for &a in c.attrs().iter().filter(|&&a| !placed[a]) {
                let better = match best {
                    None => true,
                    Some((o, sz, ba, _)) => {
                        (overlap, c.query.len()) > (o, sz) || ((overlap, c.query.len()) == (o, sz) && a < ba)
                    }
                };
                if better {
                    best = Some((overlap, c.query.len(), a, ci));
                }
            }
        }
        let (_, _, a, ci) = best.ok_or_else(|| invalid("cliques do not cover every attribute"))?;
        let c = &cliques[ci];
        let keep = MarginalQuery::wide(c.attrs().iter().copied().filter(|&b| placed[b] || b == a))?;
        conditionals.push(ConditionalTable::from_joint(&c.project(&keep)?, a)?);
        placed[a] = true;
    }
    Ok(Network { conditionals })
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
