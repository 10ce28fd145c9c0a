use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use super::budget::PrivacyBudget;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Laplace,
    Gaussian,
    Geometric,
}

/// Additive noise calibrated to an L1 (Laplace, geometric) or L2 (Gaussian)
/// sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseMechanism {
    pub kind: NoiseKind,
    pub sensitivity: f64,
}

impl NoiseMechanism {
    pub fn laplace(sensitivity: f64) -> Self {
        Self {
            kind: NoiseKind::Laplace,
            sensitivity,
        }
    }

    pub fn gaussian(sensitivity: f64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            sensitivity,
        }
    }

    pub fn apply<R: Rng + ?Sized>(
        &self,
        values: &[f64],
        budget: PrivacyBudget,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        match self.kind {
            NoiseKind::Laplace => laplace(values, self.sensitivity, budget.epsilon(), rng),
            NoiseKind::Gaussian => gaussian(
                values,
                self.sensitivity,
                budget.epsilon(),
                budget.delta(),
                rng,
            ),
            NoiseKind::Geometric => geometric(values, self.sensitivity, budget.epsilon(), rng),
        }
    }
}

fn check_positive(what: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{what} must be positive and finite, got {x}")))
    }
}

/// b = sensitivity / eps.
pub fn laplace_scale(sensitivity: f64, eps: f64) -> Result<f64> {
    check_positive("sensitivity", sensitivity)?;
    check_positive("epsilon", eps)?;
    Ok(sensitivity / eps)
}

/// Classical calibration: sigma = sensitivity * sqrt(2 ln(1.25/delta)) / eps,
/// valid for eps in (0, 1].
pub fn gaussian_sigma(sensitivity: f64, eps: f64, delta: f64) -> Result<f64> {
    check_positive("sensitivity", sensitivity)?;
    check_positive("epsilon", eps)?;
    if eps > 1.0 {
        return Err(invalid(format!(
            "classical Gaussian calibration needs epsilon <= 1, got {eps}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!(
            "Gaussian mechanism needs delta in (0,1), got {delta}; use Laplace for pure DP"
        )));
    }
    Ok(sensitivity * (2.0 * (1.25 / delta).ln()).sqrt() / eps)
}

/// One Laplace(0, scale) draw by inverse CDF.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    loop {
        let r: f64 = rng.random();
        if r == 0.0 {
            continue;
        }
        let u = r - 0.5;
        return -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln();
    }
}

pub fn laplace<R: Rng + ?Sized>(
    values: &[f64],
    sensitivity: f64,
    eps: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let b = laplace_scale(sensitivity, eps)?;
    Ok(values.iter().map(|v| v + sample_laplace(b, rng)).collect())
}

pub fn gaussian<R: Rng + ?Sized>(
    values: &[f64],
    sensitivity: f64,
    eps: f64,
    delta: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let sigma = gaussian_sigma(sensitivity, eps, delta)?;
    Ok(values
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(rng);
            v + sigma * z
        })
        .collect())
}

/// Two-sided geometric (discrete Laplace) noise on rounded values, with
/// P(k) proportional to exp(-eps |k| / sensitivity).
pub fn geometric<R: Rng + ?Sized>(
    values: &[f64],
    sensitivity: f64,
    eps: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let b = laplace_scale(sensitivity, eps)?;
    let alpha = (-1.0 / b).exp();
    let dist = Geometric::new(1.0 - alpha).map_err(|e| invalid(e.to_string()))?;
    Ok(values
        .iter()
        .map(|v| {
            let up = dist.sample(rng) as f64;
            let down = dist.sample(rng) as f64;
            v.round() + up - down
        })
        .collect())
}

/// Selection probabilities exp(eps * s_i / (2 sensitivity)), normalized after
/// subtracting the maximum score.
pub fn exponential_probabilities(scores: &[f64], sensitivity: f64, eps: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(invalid("exponential mechanism needs at least one candidate"));
    }
    check_positive("sensitivity", sensitivity)?;
    check_positive("epsilon", eps)?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(invalid("exponential mechanism scores must be finite"));
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let k = eps / (2.0 * sensitivity);
    let w: Vec<f64> = scores.iter().map(|s| (k * (s - max)).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

pub fn exponential_choice<R: Rng + ?Sized>(
    scores: &[f64],
    sensitivity: f64,
    eps: f64,
    rng: &mut R,
) -> Result<usize> {
    let p = exponential_probabilities(scores, sensitivity, eps)?;
    Ok(sample_index(&p, rng))
}

/// Inverse-CDF draw from a normalized probability vector.
pub(crate) fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final partial sum; take the last non-zero cell
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_u64;

    #[test]
    fn laplace_scale_is_sensitivity_over_eps() {
        assert_eq!(laplace_scale(1.0, 0.5).unwrap(), 2.0);
        assert!(laplace_scale(1.0, 0.0).is_err());
        assert!(laplace_scale(0.0, 1.0).is_err());
        assert!(laplace(&[0.0], 1.0, 0.0, &mut rng_from_u64(0)).is_err());
    }

    #[test]
    fn laplace_variance_matches_two_b_squared() {
        let mut rng = rng_from_u64(42);
        let n = 1_000_000;
        let b = 2.0;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = sample_laplace(b, &mut rng);
            s += x;
            s2 += x * x;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((var - 8.0).abs() < 0.2, "variance {var}");
    }

    /// Kolmogorov-Smirnov against the analytic Laplace CDF, alpha = 0.01.
    #[test]
    fn laplace_passes_ks() {
        let mut rng = rng_from_u64(7);
        let b = 1.5;
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n).map(|_| sample_laplace(b, &mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let cdf = |x: f64| {
            if x < 0.0 {
                0.5 * (x / b).exp()
            } else {
                1.0 - 0.5 * (-x / b).exp()
            }
        };
        let mut d: f64 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let f = cdf(x);
            d = d.max((f - i as f64 / n as f64).abs());
            d = d.max(((i + 1) as f64 / n as f64 - f).abs());
        }
        let critical = 1.628 / (n as f64).sqrt();
        assert!(d < critical, "KS D = {d}, critical {critical}");
    }

    #[test]
    fn gaussian_sigma_closed_form() {
        let s = gaussian_sigma(1.0, 1.0, 1e-5).unwrap();
        assert!((s - (2.0f64 * 125_000f64.ln()).sqrt()).abs() < 1e-12);
        assert!((s - 4.8448).abs() < 1e-3);
        assert!(gaussian(&[0.0], 1.0, 1.0, 0.0, &mut rng_from_u64(0)).is_err());
        assert!(gaussian_sigma(1.0, 2.0, 1e-5).is_err());
    }

    #[test]
    fn gaussian_empirical_sigma() {
        let mut rng = rng_from_u64(9);
        let n = 1_000_000;
        let zeros = vec![0.0; n];
        let xs = gaussian(&zeros, 1.0, 1.0, 1e-5, &mut rng).unwrap();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let target = gaussian_sigma(1.0, 1.0, 1e-5).unwrap();
        assert!((var.sqrt() / target - 1.0).abs() < 0.02);
    }

    #[test]
    fn geometric_is_integer_valued_and_centered() {
        let mut rng = rng_from_u64(5);
        let xs = geometric(&vec![10.0; 50_000], 1.0, 1.0, &mut rng).unwrap();
        assert!(xs.iter().all(|x| x.fract() == 0.0));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 10.0).abs() < 0.05);
        // Var = 2 alpha / (1 - alpha)^2 with alpha = e^-1
        let a = (-1.0f64).exp();
        let var = xs.iter().map(|x| (x - 10.0).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((var / (2.0 * a / (1.0 - a).powi(2)) - 1.0).abs() < 0.05);
    }

    #[test]
    fn exponential_symmetric_and_two_point() {
        let p = exponential_probabilities(&[0.0, 0.0], 1.0, 3.0).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        let p = exponential_probabilities(&[1.0, 0.0], 1.0, 2.0).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((p[0] - 0.731).abs() < 1e-3);
        assert!(exponential_choice(&[], 1.0, 1.0, &mut rng_from_u64(0)).is_err());
    }

    #[test]
    fn exponential_handles_huge_scores() {
        let p = exponential_probabilities(&[1e300, 1e300 - 1e290, 0.0], 1.0, 1.0).unwrap();
        assert!(p.iter().all(|x| x.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_monte_carlo_two_point() {
        let mut rng = rng_from_u64(13);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| exponential_choice(&[1.0, 0.0], 1.0, 2.0, &mut rng).unwrap() == 0)
            .count();
        let e = std::f64::consts::E;
        assert!((hits as f64 / n as f64 - e / (e + 1.0)).abs() < 0.01);
    }

    #[test]
    fn exponential_matches_softmax_l1() {
        let mut rng = rng_from_u64(21);
        let scores = [0.3, -1.2, 2.5, 0.0, 1.1];
        let p = exponential_probabilities(&scores, 0.5, 0.7).unwrap();
        let n = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[exponential_choice(&scores, 0.5, 0.7, &mut rng).unwrap()] += 1;
        }
        let l1: f64 = counts
            .iter()
            .zip(&p)
            .map(|(&c, &q)| (c as f64 / n as f64 - q).abs())
            .sum();
        assert!(l1 < 0.02, "L1 {l1}");
    }

    #[test]
    fn identical_seeds_identical_noise() {
        let a = laplace(&[0.0; 8], 1.0, 1.0, &mut rng_from_u64(99)).unwrap();
        let b = laplace(&[0.0; 8], 1.0, 1.0, &mut rng_from_u64(99)).unwrap();
        assert_eq!(a, b);
    }
}
