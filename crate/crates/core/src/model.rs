//! Fitted synthetic-data distributions and sampling from them.
//!
//! Sampling takes only the model and the public schema, never the private
//! data it was fitted on.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Schema};
use crate::error::{invalid, Error, Result};
use crate::marginals::{advance, ContingencyTable, MarginalQuery};

/// Tolerance for "sums to one" checks on probability vectors.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// p(child | parents), stored row-major: one row of `child_card` entries per
/// parent configuration, parent configurations ordered row-major over
/// `parents` (ascending attribute order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable {
    pub child: usize,
    pub parents: Vec<usize>,
    pub parent_shape: Vec<usize>,
    pub child_card: usize,
    pub probs: Vec<f64>,
}

impl ConditionalTable {
    /// Conditions a table over `parents ∪ {child}` on its parents. The input
    /// is clamp-normalized first; parent configurations with no mass get a
    /// uniform row.
    pub fn from_joint(table: &ContingencyTable, child: usize) -> Result<Self> {
        let child_axis = table
            .attrs()
            .iter()
            .position(|&a| a == child)
            .ok_or_else(|| invalid(format!("child {child} not in table {:?}", table.attrs())))?;
        let parents: Vec<usize> = table.attrs().iter().copied().filter(|&a| a != child).collect();
        let parent_shape: Vec<usize> = table
            .shape
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != child_axis)
            .map(|(_, &d)| d)
            .collect();
        let child_card = table.shape[child_axis];
        let rows: usize = parent_shape.iter().product();
        let mut probs = vec![0.0; rows * child_card];
        let mut coords = vec![0usize; table.shape.len()];
        for &v in &table.cells {
            let mut pi = 0;
            for (k, &c) in coords.iter().enumerate() {
                if k != child_axis {
                    pi = pi * table.shape[k] + c;
                }
            }
            probs[pi * child_card + coords[child_axis]] += v.max(0.0);
            advance(&mut coords, &table.shape);
        }
        for row in probs.chunks_mut(child_card) {
            let z: f64 = row.iter().sum();
            if z > 0.0 && z.is_finite() {
                row.iter_mut().for_each(|p| *p /= z);
            } else {
                row.iter_mut().for_each(|p| *p = 1.0 / child_card as f64);
            }
        }
        Ok(Self {
            child,
            parents,
            parent_shape,
            child_card,
            probs,
        })
    }

    /// A parentless table from a (possibly unnormalized) 1-way vector.
    pub fn root(child: usize, weights: &[f64]) -> Self {
        let q = MarginalQuery::wide([child]).expect("single attribute");
        let t = ContingencyTable {
            query: q,
            shape: vec![weights.len()],
            cells: weights.to_vec(),
            total: weights.iter().sum(),
        };
        Self::from_joint(&t, child).expect("child is in its own table")
    }

    pub fn row(&self, parent_index: usize) -> &[f64] {
        &self.probs[parent_index * self.child_card..(parent_index + 1) * self.child_card]
    }

    pub fn parent_index(&self, record: &[u32]) -> usize {
        self.parents
            .iter()
            .zip(&self.parent_shape)
            .fold(0, |acc, (&a, &d)| acc * d + record[a] as usize)
    }

    fn check(&self, schema: &Schema) -> Result<()> {
        if self.child >= schema.len() || schema.cardinality(self.child) != self.child_card {
            return Err(invalid(format!("conditional for attribute {} does not fit schema", self.child)));
        }
        for (&p, &d) in self.parents.iter().zip(&self.parent_shape) {
            if p >= schema.len() || schema.cardinality(p) != d {
                return Err(invalid(format!("parent {p} does not fit schema")));
            }
        }
        let rows: usize = self.parent_shape.iter().product();
        if self.probs.len() != rows * self.child_card {
            return Err(Error::LengthMismatch(format!(
                "conditional for attribute {} has {} entries",
                self.child,
                self.probs.len()
            )));
        }
        for row in self.probs.chunks(self.child_card) {
            let z: f64 = row.iter().sum();
            if (z - 1.0).abs() > NORMALIZATION_TOLERANCE || row.iter().any(|&p| p < 0.0) {
                return Err(invalid(format!("row of p(a{} | parents) sums to {z}", self.child)));
            }
        }
        Ok(())
    }
}

/// An ordered list of conditionals; each parent precedes its child.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub conditionals: Vec<ConditionalTable>,
}

impl Network {
    pub fn ordering(&self) -> Vec<usize> {
        self.conditionals.iter().map(|c| c.child).collect()
    }

    /// Every attribute appears once and every parent is placed before its
    /// child.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        let mut placed = vec![false; schema.len()];
        for c in &self.conditionals {
            c.check(schema)?;
            if placed[c.child] {
                return Err(invalid(format!("attribute {} placed twice", c.child)));
            }
            if let Some(p) = c.parents.iter().find(|&&p| !placed[p]) {
                return Err(invalid(format!("parent {p} of {} is not placed before it", c.child)));
            }
            placed[c.child] = true;
        }
        if let Some(missing) = placed.iter().position(|&p| !p) {
            return Err(invalid(format!("attribute {missing} has no conditional")));
        }
        Ok(())
    }

    fn sample_into<R: Rng + ?Sized>(&self, width: usize, n: usize, rng: &mut R) -> Vec<u32> {
        let cdfs: Vec<Vec<f64>> = self.conditionals.iter().map(|c| cumulative(&c.probs, c.child_card)).collect();
        let mut cells = vec![0u32; n * width];
        for record in cells.chunks_mut(width) {
            for (c, cdf) in self.conditionals.iter().zip(&cdfs) {
                let pi = c.parent_index(record);
                let row = &cdf[pi * c.child_card..(pi + 1) * c.child_card];
                record[c.child] = draw(row, rng) as u32;
            }
        }
        cells
    }

    /// Probability of one full record.
    pub fn probability(&self, record: &[u32]) -> f64 {
        self.conditionals
            .iter()
            .map(|c| c.row(c.parent_index(record))[record[c.child] as usize])
            .product()
    }
}

/// Structure of a tree-factored model; edges are (parent, child) in the
/// order children are sampled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanningTree {
    pub root: usize,
    pub edges: Vec<(usize, usize)>,
}

impl SpanningTree {
    /// Exactly d-1 edges, connected and acyclic over `d` attributes.
    pub fn is_valid(&self, d: usize) -> bool {
        if self.root >= d || self.edges.len() + 1 != d {
            return false;
        }
        let mut reached = vec![false; d];
        reached[self.root] = true;
        for &(p, c) in &self.edges {
            if p >= d || c >= d || !reached[p] || reached[c] {
                return false;
            }
            reached[c] = true;
        }
        reached.iter().all(|&r| r)
    }

    /// Undirected edges with the smaller index first, sorted.
    pub fn undirected(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self.edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        e.sort_unstable();
        e
    }
}

/// Fit metadata for a clique-based model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    /// Largest L1 gap between a clique table and a target it should match.
    pub residual: f64,
    pub sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JointModel {
    /// A probability for every cell of the full cross-product domain,
    /// row-major over all attributes.
    Explicit {
        shape: Vec<usize>,
        probs: Vec<f64>,
        fit: Option<FitInfo>,
    },
    /// Normalized clique tables plus the conditionals used to sample them.
    Factored {
        cliques: Vec<ContingencyTable>,
        network: Network,
        fit: FitInfo,
    },
    Tree {
        tree: SpanningTree,
        network: Network,
    },
    BayesNet {
        network: Network,
    },
}

impl JointModel {
    pub fn kind(&self) -> &'static str {
        match self {
            JointModel::Explicit { .. } => "explicit",
            JointModel::Factored { .. } => "factored",
            JointModel::Tree { .. } => "tree",
            JointModel::BayesNet { .. } => "bayes_net",
        }
    }

    pub fn network(&self) -> Option<&Network> {
        match self {
            JointModel::Explicit { .. } => None,
            JointModel::Factored { network, .. }
            | JointModel::Tree { network, .. }
            | JointModel::BayesNet { network } => Some(network),
        }
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        match self {
            JointModel::Explicit { shape, probs, .. } => {
                if *shape != schema.cardinalities() {
                    return Err(invalid("explicit joint shape does not match schema"));
                }
                if probs.len() != shape.iter().product::<usize>() {
                    return Err(Error::LengthMismatch("explicit joint size".into()));
                }
                let z: f64 = probs.iter().sum();
                if (z - 1.0).abs() > NORMALIZATION_TOLERANCE || probs.iter().any(|&p| p < 0.0) {
                    return Err(invalid(format!("explicit joint sums to {z}")));
                }
                Ok(())
            }
            JointModel::Tree { tree, network } => {
                if !tree.is_valid(schema.len()) {
                    return Err(invalid("invalid spanning tree"));
                }
                network.validate(schema)
            }
            JointModel::Factored { cliques, network, .. } => {
                for c in cliques {
                    let z: f64 = c.cells.iter().sum();
                    if (z - 1.0).abs() > 1e-6 {
                        return Err(invalid(format!("clique {:?} sums to {z}", c.attrs())));
                    }
                }
                network.validate(schema)
            }
            JointModel::BayesNet { network } => network.validate(schema),
        }
    }

    /// Draws `n` i.i.d. records.
    pub fn sample<R: Rng + ?Sized>(&self, schema: &Arc<Schema>, n: usize, rng: &mut R) -> Result<Dataset> {
        if n == 0 {
            return Err(invalid("sample size must be >= 1"));
        }
        self.validate(schema)?;
        let width = schema.len();
        let cells = match self {
            JointModel::Explicit { shape, probs, .. } => {
                let cdf = cumulative(probs, probs.len());
                let mut cells = Vec::with_capacity(n * width);
                for _ in 0..n {
                    let mut flat = draw(&cdf, rng);
                    let start = cells.len();
                    cells.resize(start + width, 0);
                    for k in (0..width).rev() {
                        cells[start + k] = (flat % shape[k]) as u32;
                        flat /= shape[k];
                    }
                }
                cells
            }
            other => other.network().unwrap().sample_into(width, n, rng),
        };
        Ok(Dataset::from_flat(schema.clone(), cells))
    }

    /// The full joint as a probability vector; refuses domains above `cap`.
    pub fn dense_joint(&self, schema: &Schema, cap: u128) -> Result<Vec<f64>> {
        if let JointModel::Explicit { probs, .. } = self {
            return Ok(probs.clone());
        }
        if schema.domain_size() > cap {
            return Err(invalid(format!("domain of {} cells exceeds {cap}", schema.domain_size())));
        }
        let network = self.network().unwrap();
        let shape = schema.cardinalities();
        let size: usize = shape.iter().product();
        let mut out = Vec::with_capacity(size);
        let mut coords = vec![0usize; shape.len()];
        let mut record = vec![0u32; shape.len()];
        for _ in 0..size {
            for (r, &c) in record.iter_mut().zip(&coords) {
                *r = c as u32;
            }
            out.push(network.probability(&record));
            advance(&mut coords, &shape);
        }
        Ok(out)
    }

    /// Exact marginal of the model for domains up to `cap` cells.
    pub fn marginal(&self, schema: &Schema, q: &MarginalQuery, cap: u128) -> Result<ContingencyTable> {
        let joint = self.dense_joint(schema, cap)?;
        let all = MarginalQuery::wide(0..schema.len())?;
        ContingencyTable::new(all, schema.cardinalities(), joint)?.project(q)
    }
}

/// Per-row cumulative sums, each row forced to end at exactly 1.
fn cumulative(probs: &[f64], row_len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(probs.len());
    for row in probs.chunks(row_len) {
        let z: f64 = row.iter().sum();
        let mut acc = 0.0;
        for &p in row {
            acc += p / z;
            out.push(acc);
        }
        // never step past a trailing run of zero-probability cells
        let last_nonzero = row.iter().rposition(|&p| p > 0.0).unwrap_or(row_len - 1);
        let base = out.len() - row_len;
        for v in &mut out[base + last_nonzero..] {
            *v = 1.0;
        }
    }
    out
}

fn draw<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}
