//! Differential-privacy primitives: additive noise mechanisms, the
//! exponential mechanism, and a basic-composition budget accountant.

mod budget;
mod mechanisms;

pub use budget::{budget_split, Accountant, Allotment, Charge, PrivacyBudget, BUDGET_TOLERANCE};
pub use mechanisms::{
    exponential_choice, exponential_probabilities, gaussian, gaussian_sigma, geometric, laplace,
    laplace_scale, sample_laplace, NoiseKind, NoiseMechanism,
};
