//! Logistic regression over one-hot features, and AUC-ROC.

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyper {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Strength of the (λ/2)·|w|² penalty; the intercept is not penalized.
    pub l2: f64,
    /// Probability at or above which a row is predicted positive.
    pub threshold: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 2000,
            l2: 1e-4,
            threshold: 0.5,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning rate must be > 0"));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs must be >= 1"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(invalid("l2 must be >= 0"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(invalid("threshold must be in (0,1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub hyper: Hyper,
    /// (attribute, column offset) of each one-hot block the model was
    /// trained on.
    pub layout: Vec<(usize, usize)>,
    /// Set when the training labels had a single class. Such a model fits
    /// the intercept only, so it scores every row identically.
    pub constant_score: bool,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn margin(w: &[f64], b: f64, active: &[u32]) -> f64 {
    b + active.iter().map(|&c| w[c as usize]).sum::<f64>()
}

/// Mean log-loss plus the L2 penalty.
pub fn loss(w: &[f64], b: f64, x: &FeatureMatrix, y: &[u8], l2: f64) -> f64 {
    let n = x.n_rows() as f64;
    let data: f64 = (0..x.n_rows())
        .map(|i| {
            let z = margin(w, b, x.active(i));
            softplus(z) - f64::from(y[i]) * z
        })
        .sum();
    data / n + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

/// Gradient of [`loss`] with respect to (weights, intercept).
pub fn gradient(w: &[f64], b: f64, x: &FeatureMatrix, y: &[u8], l2: f64) -> (Vec<f64>, f64) {
    let n = x.n_rows() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for i in 0..x.n_rows() {
        let active = x.active(i);
        let r = sigmoid(margin(w, b, active)) - f64::from(y[i]);
        gb += r;
        for &c in active {
            gw[c as usize] += r;
        }
    }
    for (g, &wi) in gw.iter_mut().zip(w) {
        *g = *g / n + l2 * wi;
    }
    (gw, gb / n)
}

/// Full-batch gradient descent from zero weights.
pub fn train(x: &FeatureMatrix, y: &[u8], hyper: Hyper) -> Result<LogisticModel> {
    train_traced(x, y, hyper, |_, _| {})
}

/// Like [`train`], calling `trace(epoch, loss)` before every update and once
/// after the last.
pub fn train_traced(
    x: &FeatureMatrix,
    y: &[u8],
    hyper: Hyper,
    mut trace: impl FnMut(usize, f64),
) -> Result<LogisticModel> {
    hyper.validate()?;
    if x.n_rows() == 0 || x.n_cols() == 0 {
        return Err(invalid("training needs at least one row and one feature column"));
    }
    if y.len() != x.n_rows() {
        return Err(Error::LengthMismatch(format!("{} labels for {} rows", y.len(), x.n_rows())));
    }
    let positives = y.iter().filter(|&&v| v == 1).count();
    let constant_score = positives == 0 || positives == y.len();
    let mut w = vec![0.0; x.n_cols()];
    let mut b = 0.0;
    for epoch in 0..hyper.epochs {
        if constant_score {
            // intercept-only: the weights carry no signal when every label agrees
            let p = sigmoid(b);
            let target = positives as f64 / y.len() as f64;
            trace(epoch, softplus(b) - target * b);
            b -= hyper.learning_rate * (p - target);
            continue;
        }
        trace(epoch, loss(&w, b, x, y, hyper.l2));
        let (gw, gb) = gradient(&w, b, x, y, hyper.l2);
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= hyper.learning_rate * g;
        }
        b -= hyper.learning_rate * gb;
    }
    trace(hyper.epochs, loss(&w, b, x, y, hyper.l2));
    Ok(LogisticModel {
        weights: w,
        intercept: b,
        hyper,
        layout: x.blocks().to_vec(),
        constant_score,
    })
}

impl LogisticModel {
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.weights.len() || x.blocks() != self.layout.as_slice() {
            return Err(Error::LengthMismatch(format!(
                "model expects {} feature columns, got {}",
                self.weights.len(),
                x.n_cols()
            )));
        }
        Ok((0..x.n_rows())
            .map(|i| sigmoid(margin(&self.weights, self.intercept, x.active(i))))
            .collect())
    }

    /// Hard 0/1 predictions at the configured threshold.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<u8>> {
        Ok(self
            .predict_proba(x)?
            .into_iter()
            .map(|p| u8::from(p >= self.hyper.threshold))
            .collect())
    }
}

/// Area under the ROC curve as the Mann-Whitney statistic: the probability a
/// random positive outscores a random negative, ties counting one half.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(format!("{} scores, {} labels", scores.len(), labels.len())));
    }
    let n_pos = labels.iter().filter(|&&v| v == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tie groups, 1-based
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64 * mid;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}
