//! Contingency tables over small attribute sets.
//!
//! Cells are laid out row-major over the query's attributes in ascending
//! attribute order (the last attribute varies fastest). This ordering is the
//! serialized form too.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Schema};
use crate::dp::{NoiseMechanism, PrivacyBudget};
use crate::error::{Error, Result};

/// Largest attribute set accepted by [`MarginalQuery::new`].
pub const MAX_QUERY_ARITY: usize = 3;

/// Sorted, distinct attribute indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MarginalQuery(Vec<usize>);

impl MarginalQuery {
    /// A workload query of 1 to 3 attributes.
    pub fn new(attrs: impl IntoIterator<Item = usize>) -> Result<Self> {
        let q = Self::wide(attrs)?;
        if q.0.len() > MAX_QUERY_ARITY {
            return Err(Error::InvalidQuery(format!(
                "{} attributes exceed the maximum arity {MAX_QUERY_ARITY}",
                q.0.len()
            )));
        }
        Ok(q)
    }

    /// Any non-empty attribute set; used for model cliques and conditional
    /// tables that may exceed the workload arity.
    pub fn wide(attrs: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut v: Vec<usize> = attrs.into_iter().collect();
        if v.is_empty() {
            return Err(Error::InvalidQuery("empty attribute set".into()));
        }
        v.sort_unstable();
        if v.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidQuery(format!("repeated attribute in {v:?}")));
        }
        Ok(Self(v))
    }

    pub fn attrs(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, attr: usize) -> bool {
        self.0.binary_search(&attr).is_ok()
    }

    pub fn is_subset_of(&self, other: &MarginalQuery) -> bool {
        self.0.iter().all(|a| other.contains(*a))
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        match self.0.iter().find(|&&a| a >= schema.len()) {
            Some(a) => Err(Error::InvalidQuery(format!(
                "attribute {a} out of range for {} attributes",
                schema.len()
            ))),
            None => Ok(()),
        }
    }

    pub fn shape(&self, schema: &Schema) -> Vec<usize> {
        self.0.iter().map(|&a| schema.cardinality(a)).collect()
    }

    /// Row-major cell index of a full record projected onto this query.
    pub fn cell_of(&self, row: &[u32], shape: &[usize]) -> usize {
        let mut idx = 0;
        for (&a, &d) in self.0.iter().zip(shape) {
            idx = idx * d + row[a] as usize;
        }
        idx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub query: MarginalQuery,
    pub shape: Vec<usize>,
    pub cells: Vec<f64>,
    pub total: f64,
}

impl ContingencyTable {
    pub fn new(query: MarginalQuery, shape: Vec<usize>, cells: Vec<f64>) -> Result<Self> {
        if shape.len() != query.len() {
            return Err(Error::LengthMismatch(format!(
                "shape has {} axes, query has {}",
                shape.len(),
                query.len()
            )));
        }
        let size: usize = shape.iter().product();
        if cells.len() != size {
            return Err(Error::LengthMismatch(format!(
                "{} cells for shape {shape:?}",
                cells.len()
            )));
        }
        let total = cells.iter().sum();
        Ok(Self {
            query,
            shape,
            cells,
            total,
        })
    }

    pub fn uniform(query: MarginalQuery, shape: Vec<usize>) -> Self {
        let size: usize = shape.iter().product();
        let cells = vec![1.0 / size as f64; size];
        Self {
            query,
            shape,
            cells,
            total: 1.0,
        }
    }

    pub fn attrs(&self) -> &[usize] {
        self.query.attrs()
    }

    /// Sums out every attribute not in `onto`, which must be a subset of
    /// this table's attributes.
    pub fn project(&self, onto: &MarginalQuery) -> Result<ContingencyTable> {
        if !onto.is_subset_of(&self.query) {
            return Err(Error::InvalidQuery(format!(
                "{:?} is not a subset of {:?}",
                onto.attrs(),
                self.attrs()
            )));
        }
        let keep: Vec<usize> = onto
            .attrs()
            .iter()
            .map(|a| self.attrs().iter().position(|b| b == a).unwrap())
            .collect();
        let out_shape: Vec<usize> = keep.iter().map(|&k| self.shape[k]).collect();
        let mut out = vec![0.0; out_shape.iter().product()];
        let mut coords = vec![0usize; self.shape.len()];
        for &v in &self.cells {
            let mut idx = 0;
            for (&k, &d) in keep.iter().zip(&out_shape) {
                idx = idx * d + coords[k];
            }
            out[idx] += v;
            advance(&mut coords, &self.shape);
        }
        ContingencyTable::new(onto.clone(), out_shape, out)
    }

    /// Mutual information I(A; B) in nats, where A is `left` and B is the
    /// remaining attributes of this table. Uses the clamped, normalized
    /// cells; 0 ln 0 = 0.
    pub fn mutual_information_split(&self, left: &[usize]) -> Result<f64> {
        let left_axes: Vec<usize> = left
            .iter()
            .map(|a| {
                self.attrs().iter().position(|b| b == a).ok_or_else(|| {
                    Error::InvalidQuery(format!("attribute {a} not in {:?}", self.attrs()))
                })
            })
            .collect::<Result<_>>()?;
        if left_axes.is_empty() || left_axes.len() == self.shape.len() {
            return Err(Error::InvalidQuery(
                "mutual information needs a proper non-empty split".into(),
            ));
        }
        let p = to_distribution(self);
        let right_axes: Vec<usize> = (0..self.shape.len())
            .filter(|k| !left_axes.contains(k))
            .collect();
        let size_of = |axes: &[usize]| axes.iter().map(|&k| self.shape[k]).product::<usize>();
        let index_of = |axes: &[usize], coords: &[usize]| {
            axes.iter().fold(0, |acc, &k| acc * self.shape[k] + coords[k])
        };
        let mut pa = vec![0.0; size_of(&left_axes)];
        let mut pb = vec![0.0; size_of(&right_axes)];
        let mut coords = vec![0usize; self.shape.len()];
        let mut pairs = Vec::with_capacity(p.cells.len());
        for &v in &p.cells {
            let ia = index_of(&left_axes, &coords);
            let ib = index_of(&right_axes, &coords);
            pa[ia] += v;
            pb[ib] += v;
            pairs.push((ia, ib));
            advance(&mut coords, &self.shape);
        }
        let mut mi = 0.0;
        for (&v, &(ia, ib)) in p.cells.iter().zip(&pairs) {
            if v > 0.0 {
                mi += v * (v / (pa[ia] * pb[ib])).ln();
            }
        }
        Ok(mi.max(0.0))
    }
}

/// Increments a row-major multi-index.
pub(crate) fn advance(coords: &mut [usize], shape: &[usize]) {
    for k in (0..shape.len()).rev() {
        coords[k] += 1;
        if coords[k] < shape[k] {
            return;
        }
        coords[k] = 0;
    }
}

/// Exact counts of each category combination of `q`.
pub fn marginal(data: &Dataset, q: &MarginalQuery) -> Result<ContingencyTable> {
    let schema = data.schema();
    q.validate(schema)?;
    let shape = q.shape(schema);
    let mut cells = vec![0.0; shape.iter().product()];
    for row in data.rows() {
        cells[q.cell_of(row, &shape)] += 1.0;
    }
    ContingencyTable::new(q.clone(), shape, cells)
}

/// Exact marginal plus per-cell noise. The raw (possibly negative)
/// measurement is returned unclamped.
pub fn noisy_marginal<R: Rng + ?Sized>(
    data: &Dataset,
    q: &MarginalQuery,
    budget: PrivacyBudget,
    mech: NoiseMechanism,
    rng: &mut R,
) -> Result<ContingencyTable> {
    let exact = marginal(data, q)?;
    noisy_from_exact(&exact, budget, mech, rng)
}

pub(crate) fn noisy_from_exact<R: Rng + ?Sized>(
    exact: &ContingencyTable,
    budget: PrivacyBudget,
    mech: NoiseMechanism,
    rng: &mut R,
) -> Result<ContingencyTable> {
    let cells = mech.apply(&exact.cells, budget, rng)?;
    ContingencyTable::new(exact.query.clone(), exact.shape.clone(), cells)
}

/// Clamps negative cells to zero and normalizes; falls back to uniform when
/// no cell is positive.
pub fn to_distribution(t: &ContingencyTable) -> ContingencyTable {
    let clamped: Vec<f64> = t.cells.iter().map(|&c| c.max(0.0)).collect();
    let z: f64 = clamped.iter().sum();
    let cells = if z > 0.0 && z.is_finite() {
        clamped.into_iter().map(|c| c / z).collect()
    } else {
        vec![1.0 / t.cells.len() as f64; t.cells.len()]
    };
    ContingencyTable {
        query: t.query.clone(),
        shape: t.shape.clone(),
        total: 1.0,
        cells,
    }
}

/// Plug-in mutual information (nats) of a two-attribute table.
pub fn mutual_information(t: &ContingencyTable) -> Result<f64> {
    if t.query.len() != 2 {
        return Err(Error::InvalidQuery(format!(
            "mutual information needs a 2-way table, got {}-way",
            t.query.len()
        )));
    }
    if !(t.total > 0.0) {
        return Err(Error::InvalidArgument("table total must be positive".into()));
    }
    t.mutual_information_split(&[t.attrs()[0]])
}

/// Upper bound on how much plug-in mutual information over `n` records can
/// change when one record changes:
/// (2/n) ln((n+1)/2) + ((n-1)/n) ln((n+1)/(n-1)).
pub fn mi_sensitivity(n: usize) -> f64 {
    let n = n.max(2) as f64;
    (2.0 / n) * ((n + 1.0) / 2.0).ln() + ((n - 1.0) / n) * ((n + 1.0) / (n - 1.0)).ln()
}

/// Total-variation distance between two normalized vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
