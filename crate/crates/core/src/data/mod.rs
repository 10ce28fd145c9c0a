//! Categorical tabular data: schemas, recipes, CSV loading, splitting and
//! one-hot encoding.

mod encode;
mod io;
mod recipe;
mod schema;

pub use encode::{one_hot, split_train_test, FeatureMatrix};
pub use io::{load_csv, read_csv, write_csv, write_csv_file, LoadReport};
pub use recipe::{AttributeRecipe, Binning, Recipe};
pub use schema::{AttributeDomain, Dataset, Designation, Schema};

#[cfg(test)]
pub(crate) use schema::fixtures;
