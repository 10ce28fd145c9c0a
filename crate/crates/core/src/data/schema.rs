use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A categorical attribute and its ordered category labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDomain {
    pub name: String,
    pub values: Vec<String>,
}

impl AttributeDomain {
    pub fn new(name: impl Into<String>, values: Vec<String>) -> Result<Self> {
        let name = name.into();
        if values.len() < 2 {
            return Err(Error::Recipe(format!(
                "attribute `{name}` needs at least 2 categories, got {}",
                values.len()
            )));
        }
        let mut seen = HashSet::new();
        for v in &values {
            if !seen.insert(v.as_str()) {
                return Err(Error::Recipe(format!(
                    "attribute `{name}` repeats category `{v}`"
                )));
            }
        }
        Ok(Self { name, values })
    }

    pub fn cardinality(&self) -> usize {
        self.values.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.values.iter().position(|v| v == label)
    }
}

/// Attribute index plus the index of one designated category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Designation {
    pub attribute: usize,
    pub value: usize,
}

/// Ordered attribute domains with the protected attribute (C) and the
/// binary label (Y) designated. Every other attribute is a decision
/// variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    attributes: Vec<AttributeDomain>,
    /// Protected attribute and its privileged value.
    protected: Designation,
    /// Label attribute and its positive value.
    label: Designation,
}

impl Schema {
    pub fn new(
        attributes: Vec<AttributeDomain>,
        protected: Designation,
        label: Designation,
    ) -> Result<Self> {
        let n = attributes.len();
        for (what, d) in [("protected", protected), ("label", label)] {
            if d.attribute >= n {
                return Err(Error::Recipe(format!(
                    "{what} attribute index {} out of range",
                    d.attribute
                )));
            }
            let dom = &attributes[d.attribute];
            if dom.cardinality() != 2 {
                return Err(Error::Recipe(format!(
                    "{what} attribute `{}` must be binary, has {} categories",
                    dom.name,
                    dom.cardinality()
                )));
            }
            if d.value >= 2 {
                return Err(Error::Recipe(format!(
                    "{what} value index {} out of range",
                    d.value
                )));
            }
        }
        if protected.attribute == label.attribute {
            return Err(Error::Recipe(
                "protected and label attribute must differ".into(),
            ));
        }
        let mut names = HashSet::new();
        for a in &attributes {
            if !names.insert(a.name.as_str()) {
                return Err(Error::Recipe(format!("duplicate attribute `{}`", a.name)));
            }
        }
        Ok(Self {
            attributes,
            protected,
            label,
        })
    }

    pub fn attributes(&self) -> &[AttributeDomain] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.cardinality()).collect()
    }

    pub fn cardinality(&self, attr: usize) -> usize {
        self.attributes[attr].cardinality()
    }

    pub fn protected(&self) -> Designation {
        self.protected
    }

    pub fn label(&self) -> Designation {
        self.label
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Size of the full cross-product domain, saturating at `u128::MAX`.
    pub fn domain_size(&self) -> u128 {
        self.attributes
            .iter()
            .fold(1u128, |acc, a| acc.saturating_mul(a.cardinality() as u128))
    }
}

/// Immutable categorical dataset. Rows are stored flat, one category index
/// per attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Arc<Schema>,
    width: usize,
    cells: Vec<u32>,
}

impl Dataset {
    pub fn new(schema: Arc<Schema>, rows: Vec<Vec<u32>>) -> Result<Self> {
        let width = schema.len();
        let mut cells = Vec::with_capacity(rows.len() * width);
        let cards = schema.cardinalities();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::LengthMismatch(format!(
                    "row {i} has {} cells, schema has {width} attributes",
                    row.len()
                )));
            }
            for (j, (&v, &d)) in row.iter().zip(&cards).enumerate() {
                if v as usize >= d {
                    return Err(Error::InvalidArgument(format!(
                        "row {i}: index {v} out of range for attribute {j} (cardinality {d})"
                    )));
                }
            }
            cells.extend_from_slice(row);
        }
        Ok(Self {
            schema,
            width,
            cells,
        })
    }

    /// Builds from already-validated flat storage.
    pub(crate) fn from_flat(schema: Arc<Schema>, cells: Vec<u32>) -> Self {
        let width = schema.len();
        debug_assert!(width == 0 || cells.len().is_multiple_of(width));
        Self {
            schema,
            width,
            cells,
        }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn n(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.cells.len() / self.width
        }
    }

    pub fn is_empty(&self) -> bool {
        self.n() == 0
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.cells[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.cells.chunks_exact(self.width.max(1))
    }

    pub fn column(&self, attr: usize) -> impl ExactSizeIterator<Item = u32> + '_ {
        self.rows().map(move |r| r[attr])
    }

    /// New dataset holding the given rows (by index), in order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut cells = Vec::with_capacity(indices.len() * self.width);
        for &i in indices {
            cells.extend_from_slice(self.row(i));
        }
        Dataset::from_flat(self.schema.clone(), cells)
    }

    /// 1 for rows whose label is the positive value.
    pub fn labels(&self) -> Vec<u8> {
        let l = self.schema.label();
        self.column(l.attribute)
            .map(|v| u8::from(v as usize == l.value))
            .collect()
    }

    /// 1 for rows in the privileged group, 0 for the minority group.
    pub fn groups(&self) -> Vec<u8> {
        let p = self.schema.protected();
        self.column(p.attribute)
            .map(|v| u8::from(v as usize == p.value))
            .collect()
    }

    /// Copy with the label column replaced by the given 0/1 vector.
    pub(crate) fn with_labels(&self, labels: &[u8]) -> Dataset {
        let l = self.schema.label();
        let negative = 1 - l.value as u32;
        let mut cells = self.cells.clone();
        for (i, &y) in labels.iter().enumerate() {
            cells[i * self.width + l.attribute] = if y == 1 { l.value as u32 } else { negative };
        }
        Dataset::from_flat(self.schema.clone(), cells)
    }
}
