//! Declarative dataset recipes: attribute vocabularies, numeric binning,
//! and protected/label designations, read from TOML.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use super::schema::{AttributeDomain, Designation, Schema};
use crate::error::{Error, Result};

const BUILTIN: &[(&str, &str)] = &[
    ("adult", include_str!("../../recipes/adult.toml")),
    ("compas", include_str!("../../recipes/compas.toml")),
    ("compas-fair", include_str!("../../recipes/compas-fair.toml")),
];

/// How raw cell text maps onto an attribute's categories.
#[derive(Debug, Clone, PartialEq)]
pub enum Binning {
    /// Cell text must equal one of the category labels.
    Categorical,
    /// Numeric cell `x` falls in bucket `i` when `cuts[i-1] <= x < cuts[i]`.
    /// Cell text equal to a bucket label is accepted as-is, so binned output
    /// loads back unchanged.
    Numeric { cuts: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeRecipe {
    pub domain: AttributeDomain,
    /// Source column in the input CSV.
    pub column: String,
    pub binning: Binning,
}

impl AttributeRecipe {
    pub fn map_cell(&self, raw: &str) -> Option<u32> {
        let cell = raw.trim();
        if let Some(i) = self.domain.index_of(cell) {
            return Some(i as u32);
        }
        match &self.binning {
            Binning::Categorical => None,
            Binning::Numeric { cuts } => {
                let x: f64 = cell.parse().ok()?;
                if !x.is_finite() {
                    return None;
                }
                Some(cuts.partition_point(|&c| c <= x) as u32)
            }
        }
    }
}

/// A resolved recipe. Built-in ids: `adult`, `compas`, `compas-fair`.
#[derive(Debug, Clone)]
pub struct Recipe {
    pub id: String,
    pub attributes: Vec<AttributeRecipe>,
    /// Apply label massaging after loading (fair variant of a dataset).
    pub massage: bool,
    schema: Arc<Schema>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecipeFile {
    id: String,
    #[serde(default)]
    #[allow(dead_code)]
    description: Option<String>,
    #[serde(default)]
    extends: Option<String>,
    #[serde(default)]
    massage: Option<bool>,
    #[serde(default)]
    attributes: Vec<AttributeFile>,
    #[serde(default)]
    protected: Option<DesignationFile>,
    #[serde(default)]
    label: Option<LabelFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttributeFile {
    name: String,
    #[serde(default)]
    column: Option<String>,
    kind: AttributeKind,
    #[serde(default)]
    values: Vec<String>,
    #[serde(default)]
    cuts: Vec<f64>,
    #[serde(default)]
    labels: Vec<String>,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq)]
#[serde(rename_all = "lowercase")]
enum AttributeKind {
    Categorical,
    Numeric,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignationFile {
    attribute: String,
    privileged: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelFile {
    attribute: String,
    positive: String,
}

fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn bucket_labels(cuts: &[f64]) -> Vec<String> {
    let mut out = Vec::with_capacity(cuts.len() + 1);
    out.push(format!("<{}", fmt_num(cuts[0])));
    for w in cuts.windows(2) {
        out.push(format!("{}-{}", fmt_num(w[0]), fmt_num(w[1])));
    }
    out.push(format!(">={}", fmt_num(cuts[cuts.len() - 1])));
    out
}

impl Recipe {
    pub fn builtin_ids() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(id, _)| *id)
    }

    pub fn builtin(id: &str) -> Result<Self> {
        let text = BUILTIN
            .iter()
            .find(|(k, _)| *k == id)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::Recipe(format!("no built-in recipe `{id}`")))?;
        Self::from_toml_str(text)
    }

    /// Built-in id, or a path to a recipe file.
    pub fn resolve(id_or_path: &str) -> Result<Self> {
        if BUILTIN.iter().any(|(k, _)| *k == id_or_path) {
            return Self::builtin(id_or_path);
        }
        let path = Path::new(id_or_path);
        if !path.exists() {
            return Err(Error::Recipe(format!(
                "`{id_or_path}` is neither a built-in recipe ({}) nor a file",
                Self::builtin_ids().collect::<Vec<_>>().join(", ")
            )));
        }
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: RecipeFile =
            toml::from_str(text).map_err(|e| Error::Recipe(e.to_string()))?;
        if let Some(base) = &file.extends {
            if !file.attributes.is_empty() || file.protected.is_some() || file.label.is_some() {
                return Err(Error::Recipe(format!(
                    "recipe `{}` extends `{base}` and may only override `massage`",
                    file.id
                )));
            }
            let mut recipe = Self::builtin(base)?;
            recipe.id = file.id;
            if let Some(m) = file.massage {
                recipe.massage = m;
            }
            return Ok(recipe);
        }
        Self::build(file)
    }

    fn build(file: RecipeFile) -> Result<Self> {
        let mut attributes = Vec::with_capacity(file.attributes.len());
        for a in file.attributes {
            let (values, binning) = match a.kind {
                AttributeKind::Categorical => {
                    if !a.cuts.is_empty() || !a.labels.is_empty() {
                        return Err(Error::Recipe(format!(
                            "categorical attribute `{}` cannot have cuts or labels",
                            a.name
                        )));
                    }
                    (a.values, Binning::Categorical)
                }
                AttributeKind::Numeric => {
                    if a.cuts.is_empty() {
                        return Err(Error::Recipe(format!(
                            "numeric attribute `{}` needs at least one cut point",
                            a.name
                        )));
                    }
                    if a.cuts.iter().any(|c| !c.is_finite())
                        || a.cuts.windows(2).any(|w| w[0] >= w[1])
                    {
                        return Err(Error::Recipe(format!(
                            "cut points of `{}` must be finite and strictly increasing",
                            a.name
                        )));
                    }
                    let labels = if a.labels.is_empty() {
                        bucket_labels(&a.cuts)
                    } else if a.labels.len() == a.cuts.len() + 1 {
                        a.labels
                    } else {
                        return Err(Error::Recipe(format!(
                            "`{}` has {} cuts but {} labels",
                            a.name,
                            a.cuts.len(),
                            a.labels.len()
                        )));
                    };
                    (labels, Binning::Numeric { cuts: a.cuts })
                }
            };
            let column = a.column.unwrap_or_else(|| a.name.clone());
            attributes.push(AttributeRecipe {
                domain: AttributeDomain::new(a.name, values)?,
                column,
                binning,
            });
        }
        let find = |name: &str| {
            attributes
                .iter()
                .position(|a: &AttributeRecipe| a.domain.name == name)
                .ok_or_else(|| Error::Recipe(format!("designated attribute `{name}` not declared")))
        };
        let designate = |attr: &str, value: &str| -> Result<Designation> {
            let attribute = find(attr)?;
            let value = attributes[attribute]
                .domain
                .index_of(value)
                .ok_or_else(|| Error::Recipe(format!("`{attr}` has no value `{value}`")))?;
            Ok(Designation { attribute, value })
        };
        let protected = file
            .protected
            .ok_or_else(|| Error::Recipe("missing [protected] designation".into()))?;
        let label = file
            .label
            .ok_or_else(|| Error::Recipe("missing [label] designation".into()))?;
        let protected = designate(&protected.attribute, &protected.privileged)?;
        let label = designate(&label.attribute, &label.positive)?;
        let schema = Schema::new(
            attributes.iter().map(|a| a.domain.clone()).collect(),
            protected,
            label,
        )?;
        Ok(Self {
            id: file.id,
            attributes,
            massage: file.massage.unwrap_or(false),
            schema: Arc::new(schema),
        })
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for id in Recipe::builtin_ids() {
            let r = Recipe::builtin(id).unwrap();
            assert_eq!(r.id, id);
        }
        assert!(Recipe::builtin("compas-fair").unwrap().massage);
        assert!(!Recipe::builtin("compas").unwrap().massage);
    }

    #[test]
    fn numeric_binning_maps_each_value_to_one_bucket() {
        let a = AttributeRecipe {
            domain: AttributeDomain::new("x", bucket_labels(&[1.0, 4.0])).unwrap(),
            column: "x".into(),
            binning: Binning::Numeric {
                cuts: vec![1.0, 4.0],
            },
        };
        assert_eq!(a.domain.values, vec!["<1", "1-4", ">=4"]);
        assert_eq!(a.map_cell("0"), Some(0));
        assert_eq!(a.map_cell("1"), Some(1));
        assert_eq!(a.map_cell(" 3.99 "), Some(1));
        assert_eq!(a.map_cell("4"), Some(2));
        assert_eq!(a.map_cell("1-4"), Some(1));
        assert_eq!(a.map_cell("nope"), None);
        assert_eq!(a.map_cell("NaN"), None);
    }

    #[test]
    fn rejects_unsorted_cuts() {
        let text = r#"
id = "t"
[[attributes]]
name = "x"
kind = "numeric"
cuts = [3.0, 1.0]
"#;
        assert!(Recipe::from_toml_str(text).is_err());
    }

    #[test]
    fn rejects_extends_with_body() {
        let text = r#"
id = "t"
extends = "compas"
[protected]
attribute = "race"
privileged = "Caucasian"
"#;
        assert!(Recipe::from_toml_str(text).is_err());
    }
}
