use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Absolute slack for floating-point budget comparisons.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

/// An (epsilon, delta) privacy-loss pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    /// Used when approximate DP is requested without an explicit delta.
    pub const DEFAULT_DELTA: f64 = 1e-5;

    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid(format!("epsilon must be > 0, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(invalid(format!("delta must be in [0,1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Basic-composition split: child i gets `weights[i]` of both epsilon and
    /// delta. Zero weights yield no child (a zero-epsilon budget is invalid)
    /// and are reported as `None`.
    pub fn split(&self, weights: &[f64]) -> Result<Vec<Option<PrivacyBudget>>> {
        if weights.is_empty() {
            return Err(invalid("budget split needs at least one weight"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(invalid("budget weights must be finite and >= 0"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > BUDGET_TOLERANCE {
            return Err(invalid(format!("budget weights sum to {total}, expected 1")));
        }
        Ok(weights
            .iter()
            .map(|&w| {
                (w > 0.0).then_some(PrivacyBudget {
                    epsilon: self.epsilon * w,
                    delta: self.delta * w,
                })
            })
            .collect())
    }

    /// `n` equal parts.
    pub fn even(&self, n: usize) -> Result<PrivacyBudget> {
        if n == 0 {
            return Err(invalid("cannot divide a budget into 0 parts"));
        }
        Ok(PrivacyBudget {
            epsilon: self.epsilon / n as f64,
            delta: self.delta / n as f64,
        })
    }
}

/// Splits a budget by weights; every weight must be positive.
pub fn budget_split(parent: PrivacyBudget, weights: &[f64]) -> Result<Vec<PrivacyBudget>> {
    parent
        .split(weights)?
        .into_iter()
        .map(|b| b.ok_or_else(|| invalid("zero budget weight")))
        .collect()
}

/// A portion of an accountant's total, consumable once.
#[derive(Debug, Clone, PartialEq)]
pub struct Allotment {
    id: usize,
    budget: PrivacyBudget,
}

impl Allotment {
    pub fn budget(&self) -> PrivacyBudget {
        self.budget
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Charge {
    pub label: String,
    pub epsilon: f64,
    pub delta: f64,
}

/// Single-writer ledger under basic composition. Refuses any charge that
/// would push the running total past the budget.
#[derive(Debug, Clone)]
pub struct Accountant {
    total: PrivacyBudget,
    spent_epsilon: f64,
    spent_delta: f64,
    consumed: Vec<bool>,
    ledger: Vec<Charge>,
}

impl Accountant {
    pub fn new(total: PrivacyBudget) -> Self {
        Self {
            total,
            spent_epsilon: 0.0,
            spent_delta: 0.0,
            consumed: Vec::new(),
            ledger: Vec::new(),
        }
    }

    pub fn total(&self) -> PrivacyBudget {
        self.total
    }

    pub fn spent_epsilon(&self) -> f64 {
        self.spent_epsilon
    }

    pub fn spent_delta(&self) -> f64 {
        self.spent_delta
    }

    pub fn remaining_epsilon(&self) -> f64 {
        (self.total.epsilon - self.spent_epsilon).max(0.0)
    }

    pub fn ledger(&self) -> &[Charge] {
        &self.ledger
    }

    /// True when the whole budget has been spent, up to `BUDGET_TOLERANCE`.
    pub fn is_exhausted(&self) -> bool {
        (self.spent_epsilon - self.total.epsilon).abs() <= BUDGET_TOLERANCE
            && (self.spent_delta - self.total.delta).abs() <= BUDGET_TOLERANCE
    }

    pub fn charge(&mut self, label: impl Into<String>, b: PrivacyBudget) -> Result<()> {
        let eps = self.spent_epsilon + b.epsilon;
        let delta = self.spent_delta + b.delta;
        if eps > self.total.epsilon + BUDGET_TOLERANCE || delta > self.total.delta + BUDGET_TOLERANCE
        {
            return Err(Error::BudgetExceeded {
                requested: b.epsilon,
                remaining: self.remaining_epsilon(),
            });
        }
        self.spent_epsilon = eps;
        self.spent_delta = delta;
        self.ledger.push(Charge {
            label: label.into(),
            epsilon: b.epsilon,
            delta: b.delta,
        });
        Ok(())
    }

    /// Divides the total into consumable allotments.
    pub fn allot(&mut self, weights: &[f64]) -> Result<Vec<Allotment>> {
        let parts = budget_split(self.total, weights)?;
        Ok(parts
            .into_iter()
            .map(|budget| {
                self.consumed.push(false);
                Allotment {
                    id: self.consumed.len() - 1,
                    budget,
                }
            })
            .collect())
    }

    /// Charges an allotment in full. A second consume of the same allotment
    /// is an error.
    pub fn consume(&mut self, a: &Allotment, label: impl Into<String>) -> Result<PrivacyBudget> {
        match self.consumed.get(a.id) {
            None => return Err(invalid(format!("allotment #{} not issued here", a.id))),
            Some(true) => return Err(Error::AlreadyConsumed(a.id)),
            Some(false) => {}
        }
        self.charge(label, a.budget)?;
        self.consumed[a.id] = true;
        Ok(a.budget)
    }
}
