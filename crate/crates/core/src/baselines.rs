//! Competing weight-selection rules: Bayesian model averaging, adaptive
//! variable selection (an exponentiated-score model probability), and the
//! equal-weight pool. BMA and AVS share a panel of per-time, per-component
//! evidence and apply the same geometric discounting as the dynamic risk.

use crate::dist::SimplexWeights;
use crate::error::{Error, Result};

/// Floor applied to log-likelihood entries; `exp(-745)` is the smallest
/// positive double, so anything below it is effectively −∞.
const LOGLIK_FLOOR: f64 = -745.0;

/// Per-time, per-component evidence feeding BMA and AVS.
#[derive(Clone, Debug)]
pub struct ModelEvidencePanel {
    /// T×C log predictive densities (−∞ allowed).
    loglik: Vec<Vec<f64>>,
    /// T×C scores (CRPS in this crate's pipelines; lower is better).
    score: Vec<Vec<f64>>,
    prior: SimplexWeights,
    discount: f64,
}

impl ModelEvidencePanel {
    pub fn new(
        loglik: Vec<Vec<f64>>,
        score: Vec<Vec<f64>>,
        prior: SimplexWeights,
        discount: f64,
    ) -> Result<Self> {
        if loglik.is_empty() || loglik.len() != score.len() {
            return Err(Error::dimension(format!(
                "loglik ({} rows) and score ({} rows) must be nonempty and equal",
                loglik.len(),
                score.len()
            )));
        }
        let c = prior.len();
        for (t, (ll, sc)) in loglik.iter().zip(&score).enumerate() {
            if ll.len() != c || sc.len() != c {
                return Err(Error::dimension(format!(
                    "row {t} has {} loglik / {} score entries for {c} components",
                    ll.len(),
                    sc.len()
                )));
            }
            if ll.iter().any(|v| v.is_nan()) || sc.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "row {t}: loglik must not be NaN and scores must be finite"
                )));
            }
        }
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(Error::invalid(format!(
                "discount must lie in (0,1], got {discount}"
            )));
        }
        Ok(Self {
            loglik,
            score,
            prior,
            discount,
        })
    }

    pub fn n_times(&self) -> usize {
        self.loglik.len()
    }

    pub fn n_components(&self) -> usize {
        self.prior.len()
    }

    /// Discounted column sum `Σ_t α^(T−t) · m[t][c]`.
    fn discounted_column(&self, matrix: &[Vec<f64>], c: usize) -> f64 {
        let t_len = matrix.len();
        matrix
            .iter()
            .enumerate()
            .map(|(t, row)| self.discount.powi((t_len - 1 - t) as i32) * row[c])
            .sum()
    }
}

fn normalize_log_weights(log_w: Vec<f64>) -> Result<SimplexWeights> {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numerical(
            "all candidate log weights are -inf; panel is degenerate".into(),
        ));
    }
    SimplexWeights::normalized(log_w.iter().map(|&l| (l - max).exp()).collect())
}

/// Posterior model probabilities from discounted log likelihoods:
/// `w_c ∝ prior_c · exp(Σ_t α^(T−t) loglik[t,c])`, computed in log space.
pub fn bma_weights(panel: &ModelEvidencePanel) -> Result<SimplexWeights> {
    let c = panel.n_components();
    // A panel whose every entry is -inf carries no evidence at all.
    if panel
        .loglik
        .iter()
        .all(|row| row.iter().all(|&v| v == f64::NEG_INFINITY))
    {
        return Err(Error::invalid(
            "degenerate panel: every log likelihood is -inf",
        ));
    }
    let floored: Vec<Vec<f64>> = panel
        .loglik
        .iter()
        .map(|row| row.iter().map(|&v| v.max(LOGLIK_FLOOR)).collect())
        .collect();
    let log_w: Vec<f64> = (0..c)
        .map(|j| {
            let evidence: f64 = floored
                .iter()
                .enumerate()
                .map(|(t, row)| panel.discount.powi((floored.len() - 1 - t) as i32) * row[j])
                .sum();
            ln_or_neg_inf(panel.prior[j]) + evidence
        })
        .collect();
    normalize_log_weights(log_w)
}

/// Gibbs-style model probabilities from discounted cumulative scores:
/// `w_c ∝ prior_c · exp(−η Σ_t α^(T−t) score[t,c])`.
pub fn avs_weights(panel: &ModelEvidencePanel, eta: f64) -> Result<SimplexWeights> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::invalid(format!("eta must be finite and >= 0, got {eta}")));
    }
    let c = panel.n_components();
    let log_w: Vec<f64> = (0..c)
        .map(|j| ln_or_neg_inf(panel.prior[j]) - eta * panel.discounted_column(&panel.score, j))
        .collect();
    normalize_log_weights(log_w)
}

/// The equal-weight vector `(1/C, ..., 1/C)`.
pub fn eqw_weights(c: usize) -> Result<SimplexWeights> {
    SimplexWeights::uniform(c)
}

fn ln_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}
