//! Omniprediction regret of smoothed predictors.
//!
//! Each evaluator computes the exact expected loss of the smoothed predictor,
//! the exact expected loss of a benchmark, and the bound expression the regret
//! is compared against. The bound constants are not derived from first
//! principles: they are fixed artifact constants collected in [`OmniConfig`].

use serde::Serialize;

use crate::error::{CalibError, Result};
use crate::losses::{
    expected_loss, expected_loss_smoothed, expected_loss_smoothed_post,
    expected_loss_smoothed_relabeled, PostProcessing, VMixtureLoss,
};
use crate::metrics::smce;
use crate::pld::Pld;
use crate::smoothing::{smooth, SmoothedPld};
use crate::transport::{wasserstein, wasserstein_label_preserving, TAU_TOLERANCE};

/// Calibration tolerance a benchmark must meet in [`omni_regret_calibrated`].
pub const BENCHMARK_CALIBRATION_TOL: f64 = 1e-8;

/// Constants multiplying the bound expressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmniConfig {
    /// Multiplier for upper bounds.
    pub upper_constant: f64,
    /// Multiplier for the lower-bound scaling check.
    pub lower_constant: f64,
}

impl Default for OmniConfig {
    fn default() -> Self {
        Self {
            upper_constant: 20.0,
            lower_constant: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmniReport {
    /// Expected loss of the smoothed predictor.
    pub lhs: f64,
    /// Expected loss of the benchmark.
    pub rhs: f64,
    pub regret: f64,
    pub smce: f64,
    /// Earth mover's distance between predictor and benchmark (zero when the
    /// benchmark is a post-processing of the predictor itself).
    pub w: f64,
    pub sigma: f64,
    pub bound: f64,
    /// `regret / bound`, absent when the bound is zero.
    pub ratio: Option<f64>,
}

impl OmniReport {
    fn new(lhs: f64, rhs: f64, smce: f64, w: f64, sigma: f64, bound: f64) -> Self {
        let regret = lhs - rhs;
        Self {
            lhs,
            rhs,
            regret,
            smce,
            w,
            sigma,
            bound,
            ratio: (bound > 0.0).then(|| regret / bound),
        }
    }
}

fn check_tau(mu: &Pld, nu: &Pld) -> Result<()> {
    let (a, b) = (mu.tau(), nu.tau());
    if (a - b).abs() > TAU_TOLERANCE {
        return Err(CalibError::TauMismatch { left: a, right: b });
    }
    Ok(())
}

/// Regret of smoothed `mu` against the smoothed, post-processed benchmark
/// `nu`, with bound `C·(σ + (smCE(μ) + W(μ,ν))/σ)`.
pub fn omni_regret(
    mu: &Pld,
    nu: &Pld,
    loss: &VMixtureLoss,
    kappa: &PostProcessing,
    sigma: f64,
    config: &OmniConfig,
) -> Result<OmniReport> {
    check_tau(mu, nu)?;
    let lhs = expected_loss_smoothed(&smooth(mu, sigma)?, loss);
    let rhs = expected_loss_smoothed_post(&smooth(nu, sigma)?, kappa, loss);
    let (w, _) = wasserstein_label_preserving(mu, nu)?;
    let (s, _) = smce(mu)?;
    let bound = config.upper_constant * (sigma + (s + w) / sigma);
    Ok(OmniReport::new(lhs, rhs, s, w, sigma, bound))
}

/// Regret of smoothed `mu` against an unsmoothed calibrated benchmark `nu`,
/// with bound `C·(σ + smCE(μ)/σ + W(μ,ν))`.
pub fn omni_regret_calibrated(
    mu: &Pld,
    nu: &Pld,
    loss: &VMixtureLoss,
    sigma: f64,
    config: &OmniConfig,
) -> Result<OmniReport> {
    let gap = nu.max_calibration_gap();
    if gap > BENCHMARK_CALIBRATION_TOL {
        return Err(CalibError::NotCalibratedBenchmark { gap });
    }
    check_tau(mu, nu)?;
    let lhs = expected_loss_smoothed(&smooth(mu, sigma)?, loss);
    let rhs = expected_loss(nu, loss);
    let (w, _) = wasserstein(mu, nu)?;
    let (s, _) = smce(mu)?;
    let bound = config.upper_constant * (sigma + s / sigma + w);
    Ok(OmniReport::new(lhs, rhs, s, w, sigma, bound))
}

/// Largest regret of the smoothed predictor against any post-processing of
/// itself, attained by the posterior mean `κ*(t) = E[y | p_z = t]`.
pub fn best_post_regret(spld: &SmoothedPld, loss: &VMixtureLoss) -> (f64, PostProcessing) {
    let kappa = spld.posterior().to_postprocessing();
    let lhs = expected_loss_smoothed(spld, loss);
    let rhs = expected_loss_smoothed_post(spld, &kappa, loss);
    (lhs - rhs, kappa)
}

/// [`best_post_regret`] as a report with bound `C·(σ + smCE(μ)/σ)`.
pub fn best_post_report(
    spld: &SmoothedPld,
    loss: &VMixtureLoss,
    config: &OmniConfig,
) -> Result<OmniReport> {
    let (_, kappa) = best_post_regret(spld, loss);
    let lhs = expected_loss_smoothed(spld, loss);
    let rhs = expected_loss_smoothed_post(spld, &kappa, loss);
    let (s, _) = smce(spld.base())?;
    let sigma = spld.sigma();
    let bound = config.upper_constant * (sigma + s / sigma);
    Ok(OmniReport::new(lhs, rhs, s, 0.0, sigma, bound))
}

/// `|E ℓ(p_z, y) − E ℓ(p_z, ỹ)|` with `ỹ ~ Ber(p_z)`: how far the smoothed
/// predictor's loss is from what it would be if it were calibrated.
pub fn relabeled_gap(spld: &SmoothedPld, loss: &VMixtureLoss) -> f64 {
    (expected_loss_smoothed(spld, loss) - expected_loss_smoothed_relabeled(spld, loss)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_point_has_no_regret() {
        let mu = Pld::bernoulli(0.5).unwrap();
        let l = VMixtureLoss::v_shaped(0.5).unwrap();
        let r = omni_regret(
            &mu,
            &mu,
            &l,
            &PostProcessing::identity(),
            0.1,
            &OmniConfig::default(),
        )
        .unwrap();
        assert!(r.regret.abs() < 1e-12);
    }

    #[test]
    fn lower_bound_one_exact() {
        let eps = 0.05;
        let mu = Pld::bernoulli(0.5).unwrap();
        let nu = Pld::new([(0.5 - eps, 0, 0.5), (0.5 + eps, 1, 0.5)]).unwrap();
        let l = VMixtureLoss::v_shaped(0.5).unwrap();
        let r = omni_regret(
            &mu,
            &nu,
            &l,
            &PostProcessing::identity(),
            0.2,
            &OmniConfig::default(),
        )
        .unwrap();
        assert!((r.regret - 0.125).abs() < 1e-12);
        assert!((r.w - eps).abs() < 1e-12);
    }

    #[test]
    fn bad_predictor_best_post() {
        let eps = 0.02;
        let bad = Pld::new([(0.5 + eps, 0, 0.5), (0.5 - eps, 1, 0.5)]).unwrap();
        let spld = smooth(&bad, 0.2).unwrap();
        let (v, _) = best_post_regret(&spld, &VMixtureLoss::v_shaped(0.5).unwrap());
        assert!((v - 0.1).abs() < 1e-12, "{v}");
    }

    #[test]
    fn calibrated_benchmark_checked() {
        let mu = Pld::point(0.3, 1).unwrap();
        let r = omni_regret_calibrated(
            &mu,
            &mu,
            &VMixtureLoss::v_shaped(0.5).unwrap(),
            0.1,
            &OmniConfig::default(),
        );
        assert!(matches!(r, Err(CalibError::NotCalibratedBenchmark { .. })));
    }
}
