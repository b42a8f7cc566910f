//! Expected and realized KL divergence between the private and non-private
//! models, in nats.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::mechanisms::{self, sample_uniform_lattice};
use crate::model::{GmmParams, WeightCounts};
use crate::planner::NoisePlan;
use crate::rng::{self, Purpose};

/// Lattice draws used to estimate the smoothing-branch correction.
pub const LAMBDA_DRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    /// Weight term plus component terms minus the dimension constant, over
    /// the restricted support.
    pub analytic_expected_kl: f64,
    pub weight_term: f64,
    pub per_component_terms: Vec<f64>,
    pub constant_term: f64,
    /// `λ · (E_uniform[g] − E_restricted[g])`, estimated by sampling.
    pub lambda_correction: Option<f64>,
    pub lambda_stderr: Option<f64>,
    pub mc_estimate: Option<f64>,
    pub mc_stderr: Option<f64>,
}

/// `(d ln 2 + ψ_d((d+1)/2)) / 2`, the part of the expected KL that only
/// depends on the dimension.
pub fn kl_constant(d: usize) -> Result<f64> {
    let psi = linalg::multivariate_digamma((d as f64 + 1.0) / 2.0, d)?;
    Ok((d as f64 * std::f64::consts::LN_2 + psi) / 2.0)
}

/// Per-class `½(d ln γ_k + (d+1) tr(Σ_k⁻¹)/γ_k + tr(Σ_k⁻¹ Γ_k⁻¹))`.
pub fn component_terms(fit: &GmmParams, gammas: &[f64], gamma_invs: &[SymMatrix]) -> Result<Vec<f64>> {
    let k = fit.k();
    if gammas.len() != k || gamma_invs.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: gammas.len().min(gamma_invs.len()),
        });
    }
    let d = fit.d() as f64;
    fit.covs
        .iter()
        .zip(gammas.iter().zip(gamma_invs))
        .map(|(cov, (&gamma, gamma_inv))| {
            if !(gamma > 0.0) {
                return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
            }
            let prec = linalg::inverse_spd(cov)?;
            Ok(0.5 * (d * gamma.ln() + (d + 1.0) * prec.trace() / gamma + prec.trace_product(gamma_inv)))
        })
        .collect()
}

/// `Σ_k π̃_k ln(π̃_k / π_k)` with weights as fractions.
pub fn weight_term(pi_tilde: &WeightCounts, pi: &WeightCounts) -> f64 {
    pi_tilde
        .weights()
        .iter()
        .zip(pi.weights())
        .map(|(t, p)| t * (t / p).ln())
        .sum()
}

/// `g(π̃)` given precomputed component terms.
pub fn g_from_terms(pi_tilde: &WeightCounts, pi: &WeightCounts, terms: &[f64]) -> f64 {
    weight_term(pi_tilde, pi) + pi_tilde.weights().iter().zip(terms).map(|(w, t)| w * t).sum::<f64>()
}

/// The planner's objective for one candidate output `π̃`, excluding the
/// dimension-only constant.
pub fn g_value(pi_tilde: &WeightCounts, fit: &GmmParams, gammas: &[f64], gamma_invs: &[SymMatrix]) -> Result<f64> {
    if pi_tilde.k() != fit.k() {
        return Err(Error::DimensionMismatch {
            expected: fit.k(),
            got: pi_tilde.k(),
        });
    }
    let terms = component_terms(fit, gammas, gamma_invs)?;
    Ok(g_from_terms(pi_tilde, &fit.counts, &terms))
}

fn plan_terms(fit: &GmmParams, plan: &NoisePlan) -> Result<Vec<f64>> {
    let gammas: Vec<f64> = plan.classes.iter().map(|c| c.gamma_k).collect();
    let invs: Vec<SymMatrix> = plan.classes.iter().map(|c| c.gamma_inv.clone()).collect();
    component_terms(fit, &gammas, &invs)
}

/// Closed-form expected KL over the restricted support, with the smoothing
/// branch reported separately from `lambda_draws` uniform lattice samples.
pub fn expected_kl(fit: &GmmParams, plan: &NoisePlan, lambda_draws: usize, seed: u64) -> Result<KlReport> {
    let terms = plan_terms(fit, plan)?;
    let pi = &fit.counts;
    let (support, pmf): (Vec<WeightCounts>, Vec<f64>) = match &plan.transition {
        Some(t) => (t.support.clone(), t.column_pmf()),
        None => (vec![pi.clone()], vec![1.0]),
    };
    let mut weight = 0.0;
    let mut per_component = vec![0.0; fit.k()];
    for (s, p) in support.iter().zip(&pmf) {
        weight += p * weight_term(s, pi);
        for (acc, (w, t)) in per_component.iter_mut().zip(s.weights().iter().zip(&terms)) {
            *acc += p * w * t;
        }
    }
    let constant = kl_constant(fit.d())?;
    let restricted = weight + per_component.iter().sum::<f64>();
    let (lambda_correction, lambda_stderr) = match &plan.transition {
        Some(t) if plan.lambda > 0.0 && lambda_draws >= 2 => {
            let mut r = rng::stream(seed, Purpose::Lambda, 0);
            let values: Vec<f64> = (0..lambda_draws)
                .map(|_| sample_uniform_lattice(t.n(), t.k(), &mut r).map(|s| g_from_terms(&s, pi, &terms)))
                .collect::<Result<_>>()?;
            let (mean, stderr) = mean_and_stderr(&values);
            (Some(plan.lambda * (mean - restricted)), Some(plan.lambda * stderr))
        }
        _ => (None, None),
    };
    Ok(KlReport {
        analytic_expected_kl: restricted - constant,
        weight_term: weight,
        per_component_terms: per_component,
        constant_term: constant,
        lambda_correction,
        lambda_stderr,
        mc_estimate: None,
        mc_stderr: None,
    })
}

/// KL between two Gaussians `N(μ̃, Σ̃) ‖ N(μ, Σ)`.
pub fn gaussian_kl(mean_tilde: &[f64], cov_tilde: &SymMatrix, mean: &[f64], cov: &SymMatrix) -> Result<f64> {
    let l = linalg::cholesky(cov)?;
    let lt = linalg::cholesky(cov_tilde)?;
    let diff: Vec<f64> = mean_tilde.iter().zip(mean).map(|(a, b)| a - b).collect();
    let prec = l.inverse();
    let d = mean.len() as f64;
    Ok(0.5 * (l.inverse_quad_form(&diff) - d - (lt.logdet() - l.logdet()) + prec.trace_product(cov_tilde)))
}

/// KL of one released model against the fit, pairing component `k` with
/// component `k` and weighting by the released weights.
pub fn realized_kl(released: &GmmParams, fit: &GmmParams) -> Result<f64> {
    if released.k() != fit.k() || released.d() != fit.d() {
        return Err(Error::DimensionMismatch {
            expected: fit.k(),
            got: released.k(),
        });
    }
    let mut total = weight_term(&released.counts, &fit.counts);
    for (c, w) in released.counts.weights().iter().enumerate() {
        total += w * gaussian_kl(&released.means[c], &released.covs[c], &fit.means[c], &fit.covs[c])?;
    }
    Ok(total)
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Average realized KL over `trials` independent releases.
pub fn monte_carlo_expected_kl(fit: &GmmParams, plan: &NoisePlan, trials: usize, seed: u64) -> Result<(f64, f64)> {
    if trials < 2 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least 2 trials".into()));
    }
    let values: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let released = mechanisms::release(fit, plan, rng::derive_seed(seed, i))?;
            realized_kl(&released.as_gmm(), fit)
        })
        .collect::<Result<_>>()?;
    Ok(mean_and_stderr(&values))
}
