//! Differentially private synthesizers. Each one fits a [`JointModel`] to a
//! private dataset under a privacy budget, recording every charge in its own
//! accountant.

mod baselines;
mod ipf;
mod mst;
mod mwem;
mod privbayes;

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dp::{Accountant, NoiseKind, NoiseMechanism, PrivacyBudget};
use crate::error::{Error, Result};
use crate::marginals::{noisy_marginal, ContingencyTable, MarginalQuery};
use crate::model::JointModel;
use crate::seed::Rng;

pub use baselines::{degenerate_fit, independent_fit};
pub use ipf::{ipf_fit, IpfConfig};
pub use mst::{mst_fit, select_tree};
pub use mwem::{default_workload, mwem_fit, MwemConfig};
pub use privbayes::{privbayes_fit, PrivBayesConfig};

/// Names accepted by [`build`], in the order used for reports.
pub const REGISTERED: [&str; 5] = ["mwem", "mst", "privbayes", "independent", "degenerate"];

/// A fitted model together with the ledger of what the fit spent.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: JointModel,
    pub accountant: Accountant,
}

pub trait Synthesizer: Debug + Send + Sync {
    fn name(&self) -> &str;

    fn fit(&self, data: &Dataset, budget: PrivacyBudget, rng: &mut Rng) -> Result<Fitted>;
}

/// Per-synthesizer settings as they appear in experiment configs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub mwem: MwemConfig,
    pub privbayes: PrivBayesConfig,
}

#[derive(Debug, Clone)]
struct Mwem(MwemConfig);

#[derive(Debug, Clone)]
struct Mst;

#[derive(Debug, Clone)]
struct PrivBayes(PrivBayesConfig);

#[derive(Debug, Clone)]
struct Independent;

#[derive(Debug, Clone)]
struct Degenerate;

impl Synthesizer for Mwem {
    fn name(&self) -> &str {
        "mwem"
    }

    fn fit(&self, data: &Dataset, budget: PrivacyBudget, rng: &mut Rng) -> Result<Fitted> {
        let w = default_workload(data.schema());
        mwem_fit(data, &w, budget, &self.0, rng)
    }
}

impl Synthesizer for Mst {
    fn name(&self) -> &str {
        "mst"
    }

    fn fit(&self, data: &Dataset, budget: PrivacyBudget, rng: &mut Rng) -> Result<Fitted> {
        mst_fit(data, budget, rng)
    }
}

impl Synthesizer for PrivBayes {
    fn name(&self) -> &str {
        "privbayes"
    }

    fn fit(&self, data: &Dataset, budget: PrivacyBudget, rng: &mut Rng) -> Result<Fitted> {
        privbayes_fit(data, &self.0, budget, rng)
    }
}

impl Synthesizer for Independent {
    fn name(&self) -> &str {
        "independent"
    }

    fn fit(&self, data: &Dataset, budget: PrivacyBudget, rng: &mut Rng) -> Result<Fitted> {
        independent_fit(data, budget, rng)
    }
}

impl Synthesizer for Degenerate {
    fn name(&self) -> &str {
        "degenerate"
    }

    fn fit(&self, data: &Dataset, budget: PrivacyBudget, rng: &mut Rng) -> Result<Fitted> {
        degenerate_fit(data, budget, rng)
    }
}

/// Looks up a registered synthesizer by name.
pub fn build(name: &str, settings: &SynthSettings) -> Result<Box<dyn Synthesizer>> {
    Ok(match name {
        "mwem" => Box::new(Mwem(settings.mwem.clone())),
        "mst" => Box::new(Mst),
        "privbayes" => Box::new(PrivBayes(settings.privbayes.clone())),
        "independent" => Box::new(Independent),
        "degenerate" => Box::new(Degenerate),
        other => return Err(Error::UnknownSynthesizer(other.to_string())),
    })
}

/// The accountant total for a fit: pure-DP mechanisms never spend delta, so
/// the delta component is dropped for them.
pub(crate) fn accountant_for(budget: PrivacyBudget, noise: NoiseKind) -> Result<Accountant> {
    let total = match noise {
        NoiseKind::Gaussian => budget,
        NoiseKind::Laplace | NoiseKind::Geometric => PrivacyBudget::pure(budget.epsilon())?,
    };
    Ok(Accountant::new(total))
}

/// Charges `budget` and releases a noisy marginal with sensitivity 1.
pub(crate) fn measure(
    data: &Dataset,
    q: &MarginalQuery,
    budget: PrivacyBudget,
    noise: NoiseKind,
    acc: &mut Accountant,
    label: String,
    rng: &mut Rng,
) -> Result<ContingencyTable> {
    q.validate(data.schema())?;
    acc.charge(label, budget)?;
    let mech = NoiseMechanism {
        kind: noise,
        sensitivity: 1.0,
    };
    noisy_marginal(data, q, budget, mech, rng)
}
