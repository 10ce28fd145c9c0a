use rand::seq::SliceRandom;
use rand::Rng;

use super::schema::Dataset;
use crate::error::{invalid, Result};

/// Random disjoint train/test partition with `round(fraction * n)` training
/// rows, clamped so both sides are non-empty.
pub fn split_train_test<R: Rng + ?Sized>(
    data: &Dataset,
    fraction: f64,
    rng: &mut R,
) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid(format!("split fraction must be in (0,1), got {fraction}")));
    }
    let n = data.n();
    if n < 2 {
        return Err(invalid(format!("cannot split {n} rows")));
    }
    let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (train, test) = idx.split_at(n_train);
    Ok((data.select(train), data.select(test)))
}

/// One-hot design matrix over categorical attributes. Each row has exactly
/// one active column per encoded attribute, so it is stored as the list of
/// active column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    per_row: usize,
    active: Vec<u32>,
    /// Column offset of each encoded attribute block: (attribute, offset).
    blocks: Vec<(usize, usize)>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn active(&self, row: usize) -> &[u32] {
        &self.active[row * self.per_row..(row + 1) * self.per_row]
    }

    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        (0..self.n_rows)
            .map(|i| {
                let mut r = vec![0u8; self.n_cols];
                for &c in self.active(i) {
                    r[c as usize] = 1;
                }
                r
            })
            .collect()
    }

    /// Recovers the category index of each encoded attribute per row.
    pub fn decode(&self) -> Vec<Vec<u32>> {
        (0..self.n_rows)
            .map(|i| {
                self.active(i)
                    .iter()
                    .zip(&self.blocks)
                    .map(|(&c, &(_, off))| c - off as u32)
                    .collect()
            })
            .collect()
    }

    /// Builds from dense 0/1 rows. Each row must be a valid one-hot pattern
    /// for the given block widths.
    pub fn from_dense(rows: &[Vec<u8>], widths: &[usize]) -> Result<Self> {
        let n_cols: usize = widths.iter().sum();
        let mut blocks = Vec::with_capacity(widths.len());
        let mut off = 0;
        for (j, &w) in widths.iter().enumerate() {
            blocks.push((j, off));
            off += w;
        }
        let mut active = Vec::with_capacity(rows.len() * widths.len());
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(invalid(format!("row {i} has width {}, expected {n_cols}", r.len())));
            }
            for (&(_, off), &w) in blocks.iter().zip(widths) {
                let hot: Vec<usize> = (off..off + w).filter(|&c| r[c] == 1).collect();
                if hot.len() != 1 || r[off..off + w].iter().any(|&v| v > 1) {
                    return Err(invalid(format!("row {i} is not one-hot in block at {off}")));
                }
                active.push(hot[0] as u32);
            }
        }
        Ok(Self {
            n_rows: rows.len(),
            n_cols,
            per_row: widths.len(),
            active,
            blocks,
        })
    }
}

/// Encodes every attribute (optionally excluding the label) with all `d_j`
/// columns per attribute, and returns the 0/1 label vector.
pub fn one_hot(data: &Dataset, exclude_label: bool) -> (FeatureMatrix, Vec<u8>) {
    let label = data.schema().label().attribute;
    encode(data, |j| exclude_label && j == label)
}

fn encode(data: &Dataset, skip: impl Fn(usize) -> bool) -> (FeatureMatrix, Vec<u8>) {
    let schema = data.schema();
    let mut blocks = Vec::new();
    let mut off = 0;
    for (j, a) in schema.attributes().iter().enumerate() {
        if skip(j) {
            continue;
        }
        blocks.push((j, off));
        off += a.cardinality();
    }
    let per_row = blocks.len();
    let mut active = Vec::with_capacity(data.n() * per_row);
    for row in data.rows() {
        for &(j, o) in &blocks {
            active.push(o as u32 + row[j]);
        }
    }
    (
        FeatureMatrix {
            n_rows: data.n(),
            n_cols: off,
            per_row,
            active,
            blocks,
        },
        data.labels(),
    )
}
