//! Privacy-budget allocation and noise calibration.
//!
//! Alternates three blocks until the objective settles: Wishart scales
//! `γ_k`, Gaussian covariances `Γ_k⁻¹` (one SDP per class) and the weight
//! transition matrix `F′` with its budget `ε₀`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjacency::{self, AdjacencyKind, AdjacencyMode, AdjacencySet};
use crate::divergence;
use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::mechanisms::TransitionPlan;
use crate::model::{GmmParams, WeightCounts};
use crate::sdp::{self, SdpProblem};

/// Relative tolerance for every per-class SDP.
pub const SDP_TOLERANCE: f64 = 1e-9;

/// Slack allowed on ledger margins (floating-point rounding only).
pub const LEDGER_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacySpec {
    pub epsilon: f64,
    pub delta: f64,
    pub lambda: f64,
    pub mode: AdjacencyMode,
}

impl PrivacySpec {
    pub fn new(epsilon: f64, delta: f64, lambda: f64, mode: AdjacencyMode) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidArgument(format!("lambda must lie in (0, 1), got {lambda}")));
        }
        Ok(Self {
            epsilon,
            delta,
            lambda,
            mode,
        })
    }

    /// `2 ln(2/δ)`.
    pub fn log_term(&self) -> f64 {
        2.0 * (2.0 / self.delta).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassNoise {
    pub eps_k: f64,
    pub gamma_k: f64,
    pub gamma_inv: SymMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePlan {
    pub epsilon: f64,
    pub delta: f64,
    pub lambda: f64,
    pub eps0: f64,
    pub adjacency: AdjacencyKind,
    pub clip_bound: Option<f64>,
    pub uniform_bound: bool,
    pub classes: Vec<ClassNoise>,
    /// Absent when the weights are not data-dependent (feature changes).
    pub transition: Option<TransitionPlan>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

impl NoisePlan {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text)?;
        for (i, c) in plan.classes.iter().enumerate() {
            if !linalg::is_positive_definite(&c.gamma_inv) {
                return Err(Error::Schema {
                    path: format!("classes[{i}].gamma_inv"),
                    message: "not positive definite".into(),
                });
            }
            if !(c.gamma_k > 0.0) {
                return Err(Error::Schema {
                    path: format!("classes[{i}].gamma_k"),
                    message: "must be positive".into(),
                });
            }
        }
        if let Some(t) = &plan.transition {
            TransitionPlan::new(t.support.clone(), t.j_star, t.matrix.clone(), t.lambda).map_err(|e| Error::Schema {
                path: "transition".into(),
                message: e.to_string(),
            })?;
        }
        Ok(plan)
    }

    /// Rebuilds the privacy specification the plan was made for.
    pub fn spec(&self) -> Result<PrivacySpec> {
        PrivacySpec::new(
            self.epsilon,
            self.delta,
            self.lambda,
            AdjacencyMode::new(self.adjacency, self.clip_bound)?,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOptions {
    pub max_iter: usize,
    /// Initial share of ε given to the weight mechanism and to each `ε_k`.
    pub eps0_frac: f64,
    /// Replace per-record constraints by the data-independent radius.
    pub uniform_bound: bool,
    /// Early-stop threshold on the objective change.
    pub tol: f64,
    /// Constraints kept in the first active-set round of each SDP.
    pub active_set_keep: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            eps0_frac: 1.0 / 3.0,
            uniform_bound: false,
            tol: 1e-3,
            active_set_keep: 24,
        }
    }
}

/// Wishart scale update: `γ_k = min{(d+1)/d · tr(Σ_k⁻¹), 2N_k(ε − ε₀ − ε_k)/3}`.
pub fn update_gamma(fit: &GmmParams, epsilon: f64, eps0: f64, eps_k: &[f64]) -> Result<Vec<f64>> {
    let d = fit.d() as f64;
    let sizes = fit.counts.counts();
    fit.covs
        .iter()
        .zip(eps_k)
        .enumerate()
        .map(|(class, (cov, &ek))| {
            let room = epsilon - eps0 - ek;
            if !(room > 0.0) {
                return Err(Error::InfeasibleBudget {
                    class: class + 1,
                    detail: format!("ε − ε₀ − ε_k = {room} leaves nothing for the Wishart noise"),
                });
            }
            let free = (d + 1.0) / d * linalg::inverse_spd(cov)?.trace();
            let cap = 2.0 * sizes[class] as f64 * room / 3.0;
            Ok(free.min(cap))
        })
        .collect()
}

/// The closed-form optimal transition matrix for fixed `g` values.
///
/// Row `i` puts `1/(1 + m e^{±ε₀})` on `j_star` (sign `+` when `g_i ≥ 0`)
/// and `e^{±ε₀}` times that on every other column.
pub fn update_transition(
    support: Vec<WeightCounts>,
    j_star: usize,
    g_values: &[f64],
    eps0: f64,
    lambda: f64,
) -> Result<TransitionPlan> {
    let size = support.len();
    if g_values.len() != size {
        return Err(Error::DimensionMismatch {
            expected: size,
            got: g_values.len(),
        });
    }
    let m = (size - 1) as f64;
    let matrix = g_values
        .iter()
        .map(|&g| {
            let ratio = if g >= 0.0 { eps0.exp() } else { (-eps0).exp() };
            let stay = 1.0 / (1.0 + m * ratio);
            (0..size).map(|j| if j == j_star { stay } else { ratio * stay }).collect()
        })
        .collect();
    TransitionPlan::new(support, j_star, matrix, lambda)
}

/// `{π(D)} ∪ S′(D)` with `π(D)` first and duplicates removed.
pub fn transition_support(pi: &WeightCounts, neighbors: &[WeightCounts]) -> Vec<WeightCounts> {
    let mut support = vec![pi.clone()];
    for n in neighbors {
        if !support.contains(n) {
            support.push(n.clone());
        }
    }
    support
}

/// Per-class mean-shift radius used for the isotropic constraint, if any.
fn class_radius(adj: &AdjacencySet, spec: &PrivacySpec, uniform: bool, class: usize) -> Option<f64> {
    if uniform {
        let b = spec.mode.clip_bound?;
        return Some(adjacency::uniform_mean_shift_radius(spec.mode.kind, adj.class_sizes[class], b));
    }
    adj.norm_bounds[class]
}

/// Solves the Gaussian-noise subproblem for one class at a fixed `ε_k`.
fn solve_class(
    fit: &GmmParams,
    adj: &AdjacencySet,
    spec: &PrivacySpec,
    options: &PlanOptions,
    class: usize,
    eps_k: f64,
) -> Result<SymMatrix> {
    let c = spec.log_term() / (eps_k * eps_k);
    let d = fit.d();
    let radius = class_radius(adj, spec, options.uniform_bound, class);
    let diffs: &[Vec<f64>] = if options.uniform_bound { &[] } else { &adj.mean_diffs[class] };
    let has_diffs = diffs.iter().any(|v| v.iter().any(|x| *x != 0.0));
    match (has_diffs, radius) {
        (false, None) => Err(Error::DegenerateAdjacency { class: class + 1 }),
        (false, Some(r)) => Ok(SymMatrix::scaled_identity(d, c * r * r)),
        (true, radius) => {
            let objective = linalg::inverse_spd(&fit.covs[class])?;
            let problem = SdpProblem::new(objective, diffs.to_vec(), c).with_floor(radius.map_or(0.0, |r| c * r * r));
            Ok(sdp::solve_active_set(&problem, SDP_TOLERANCE, options.active_set_keep)?.x)
        }
    }
}

/// Runs the alternating optimization and returns a calibrated plan.
pub fn plan(fit: &GmmParams, adj: &AdjacencySet, spec: &PrivacySpec, options: &PlanOptions) -> Result<NoisePlan> {
    let k = fit.k();
    if adj.k() != k {
        return Err(Error::DimensionMismatch { expected: k, got: adj.k() });
    }
    if options.uniform_bound && spec.mode.clip_bound.is_none() {
        return Err(Error::InvalidArgument("the uniform bound needs a clip bound B".into()));
    }
    if !(options.eps0_frac > 0.0 && options.eps0_frac < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "eps0 fraction must lie in (0, 1/2), got {}",
            options.eps0_frac
        )));
    }
    if options.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be positive".into()));
    }
    let eps = spec.epsilon;
    let weights_private = spec.mode.kind != AdjacencyKind::FeatureChange;
    let (mut eps0, mut eps_k) = if weights_private {
        (eps * options.eps0_frac, vec![eps * options.eps0_frac; k])
    } else {
        (0.0, vec![eps / 2.0; k])
    };
    let sizes: Vec<f64> = fit.counts.counts().iter().map(|&n| n as f64).collect();
    let support = transition_support(&fit.counts, &adj.weight_neighbors);

    let mut gammas = vec![0.0; k];
    let mut gamma_invs = vec![SymMatrix::zeros(fit.d()); k];
    let mut transition = None;
    let mut trace: Vec<f64> = Vec::new();
    let mut iterations = 0;
    for _ in 0..options.max_iter {
        iterations += 1;
        gammas = update_gamma(fit, eps, eps0, &eps_k)?;
        // Each ε_k takes everything the ledger leaves after ε₀ and the Wishart
        // share 3γ_k/(2N_k).
        for c in 0..k {
            eps_k[c] = eps - eps0 - 3.0 * gammas[c] / (2.0 * sizes[c]);
            if !(eps_k[c] > 0.0) {
                return Err(Error::InfeasibleBudget {
                    class: c + 1,
                    detail: format!("no budget left for the Gaussian noise (ε_k = {})", eps_k[c]),
                });
            }
        }
        gamma_invs = (0..k)
            .into_par_iter()
            .map(|c| solve_class(fit, adj, spec, options, c, eps_k[c]))
            .collect::<Result<_>>()?;
        let terms = divergence::component_terms(fit, &gammas, &gamma_invs)?;
        let objective = if weights_private {
            eps0 = eps
                - (0..k)
                    .map(|c| eps_k[c] + 3.0 * gammas[c] / (2.0 * sizes[c]))
                    .fold(f64::NEG_INFINITY, f64::max);
            let g: Vec<f64> = support
                .iter()
                .map(|s| divergence::g_from_terms(s, &fit.counts, &terms))
                .collect();
            let t = update_transition(support.clone(), 0, &g, eps0, spec.lambda)?;
            let value = g.iter().zip(&t.matrix).map(|(gi, row)| gi * row[t.j_star]).sum();
            transition = Some(t);
            value
        } else {
            divergence::g_from_terms(&fit.counts, &fit.counts, &terms)
        };
        let settled = trace.last().is_some_and(|last: &f64| (last - objective).abs() <= options.tol);
        trace.push(objective);
        if settled {
            break;
        }
    }
    Ok(NoisePlan {
        epsilon: eps,
        delta: spec.delta,
        lambda: spec.lambda,
        eps0,
        adjacency: spec.mode.kind,
        clip_bound: spec.mode.clip_bound,
        uniform_bound: options.uniform_bound,
        classes: (0..k)
            .map(|c| ClassNoise {
                eps_k: eps_k[c],
                gamma_k: gammas[c],
                gamma_inv: gamma_invs[c].clone(),
            })
            .collect(),
        transition,
        objective_trace: trace,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerCheck {
    pub name: String,
    pub passed: bool,
    /// Smallest margin found; negative means violated.
    pub worst_margin: f64,
    /// Class (1-based) where the worst margin occurred, if per-class.
    pub worst_class: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub checks: Vec<LedgerCheck>,
    pub passed: bool,
}

impl LedgerReport {
    pub fn check(&self, name: &str) -> Option<&LedgerCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn per_class_check(name: &str, margins: &[f64], slack: &[f64]) -> LedgerCheck {
    let mut worst = f64::INFINITY;
    let mut worst_class = None;
    let mut passed = true;
    for (c, (&m, &s)) in margins.iter().zip(slack).enumerate() {
        if m < worst {
            worst = m;
            worst_class = Some(c + 1);
        }
        passed &= m >= -s;
    }
    LedgerCheck {
        name: name.into(),
        passed,
        worst_margin: worst,
        worst_class,
    }
}

/// Worst `dᵀ Γ d` over the explicit differences and the isotropic radius.
pub fn worst_quadratic_form(gamma_inv: &SymMatrix, diffs: &[Vec<f64>], radius: Option<f64>) -> Result<f64> {
    let l = linalg::cholesky(gamma_inv)?;
    let mut worst = diffs.iter().map(|d| l.inverse_quad_form(d)).fold(0.0, f64::max);
    if let Some(r) = radius {
        let (vals, _) = linalg::jacobi_eigen(gamma_inv);
        worst = worst.max(r * r / vals[0]);
    }
    Ok(worst)
}

/// Re-derives every privacy condition from the plan and reports margins.
pub fn verify_ledger(plan: &NoisePlan, adj: &AdjacencySet, spec: &PrivacySpec) -> Result<LedgerReport> {
    let k = plan.classes.len();
    if adj.k() != k {
        return Err(Error::DimensionMismatch { expected: k, got: adj.k() });
    }
    let sizes: Vec<f64> = adj.class_sizes.iter().map(|&n| n as f64).collect();
    let mut checks = Vec::new();

    let budget: Vec<f64> = (0..k)
        .map(|c| {
            let cl = &plan.classes[c];
            spec.epsilon - (cl.eps_k + 3.0 * cl.gamma_k / (2.0 * sizes[c]) + plan.eps0)
        })
        .collect();
    checks.push(per_class_check("budget", &budget, &vec![LEDGER_SLACK; k]));

    let mut schur = Vec::with_capacity(k);
    let mut schur_slack = Vec::with_capacity(k);
    for c in 0..k {
        let cl = &plan.classes[c];
        let bound = cl.eps_k * cl.eps_k / spec.log_term();
        let radius = class_radius(adj, spec, plan.uniform_bound, c);
        let diffs: &[Vec<f64>] = if plan.uniform_bound { &[] } else { &adj.mean_diffs[c] };
        let worst = worst_quadratic_form(&cl.gamma_inv, diffs, radius)?;
        schur.push(bound - worst);
        schur_slack.push(LEDGER_SLACK * bound);
    }
    checks.push(per_class_check("gaussian_schur", &schur, &schur_slack));

    if let Some(t) = &plan.transition {
        let target = plan.eps0;
        let mut worst_dev: f64 = 0.0;
        for row in &t.matrix {
            let stay = row[t.j_star];
            let sum: f64 = row.iter().sum();
            worst_dev = worst_dev.max((sum - 1.0).abs());
            for (j, v) in row.iter().enumerate() {
                if j != t.j_star {
                    worst_dev = worst_dev.max(((stay / v).ln().abs() - target).abs());
                }
            }
        }
        checks.push(LedgerCheck {
            name: "transition_ratio".into(),
            passed: worst_dev <= 1e-12,
            worst_margin: -worst_dev,
            worst_class: None,
        });
    } else if spec.mode.kind != AdjacencyKind::FeatureChange {
        checks.push(LedgerCheck {
            name: "transition_ratio".into(),
            passed: false,
            worst_margin: f64::NEG_INFINITY,
            worst_class: None,
        });
    }

    if spec.mode.kind == AdjacencyKind::FeatureChange {
        let b = spec.mode.clip_bound.unwrap_or(f64::NAN);
        let mut margins = Vec::with_capacity(k);
        let mut slack = Vec::with_capacity(k);
        for c in 0..k {
            let cl = &plan.classes[c];
            let required = 8.0 * b * b * (2.0 / spec.delta).ln() / (sizes[c] * sizes[c] * cl.eps_k * cl.eps_k);
            let (vals, _) = linalg::jacobi_eigen(&cl.gamma_inv);
            margins.push(vals[0] - required);
            slack.push(LEDGER_SLACK * required);
        }
        checks.push(per_class_check("feature_uniform_bound", &margins, &slack));
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(LedgerReport { checks, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fit_gmm, LabeledDataset};
    use crate::rng::{self, Purpose};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn wc(v: &[u64]) -> WeightCounts {
        WeightCounts::new(v.to_vec()).unwrap()
    }

    fn blob_data(seed: u64, sizes: &[usize], d: usize) -> LabeledDataset {
        let mut r = rng::stream(seed, Purpose::Synthetic, 0);
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (c, &n) in sizes.iter().enumerate() {
            for _ in 0..n {
                points.push((0..d).map(|j| 3.0 * (c + j) as f64 + r.sample::<f64, _>(StandardNormal)).collect());
                labels.push(c + 1);
            }
        }
        LabeledDataset::new(points, labels, sizes.len()).unwrap()
    }

    fn spec(mode: AdjacencyMode) -> PrivacySpec {
        PrivacySpec::new(1.0, 1e-5, 1e-3, mode).unwrap()
    }

    #[test]
    fn gamma_update_examples() {
        let fit = GmmParams {
            counts: wc(&[1_000_000]),
            means: vec![vec![0.0]],
            covs: vec![SymMatrix::identity(1)],
            regularization: 0.0,
        };
        assert_eq!(update_gamma(&fit, 1.0, 1.0 / 3.0, &[1.0 / 3.0]).unwrap(), vec![2.0]);

        let small = GmmParams {
            counts: wc(&[10]),
            means: vec![vec![0.0, 0.0]],
            covs: vec![SymMatrix::identity(2)],
            regularization: 0.0,
        };
        // tr branch (3/2)·2 = 3; cap 2·10·0.3/3 = 2.
        let g = update_gamma(&small, 1.0, 0.35, &[0.35]).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-12);

        let mut scaled = fit.clone();
        scaled.covs[0] = SymMatrix::scaled_identity(1, 4.0);
        assert_eq!(update_gamma(&scaled, 1.0, 1.0 / 3.0, &[1.0 / 3.0]).unwrap(), vec![0.5]);

        assert!(matches!(
            update_gamma(&fit, 1.0, 0.5, &[0.5]),
            Err(Error::InfeasibleBudget { class: 1, .. })
        ));
    }

    #[test]
    fn transition_examples() {
        let support: Vec<WeightCounts> = (0..7).map(|i| wc(&[10 + i, 20 - i])).collect();
        let t = update_transition(support.clone(), 0, &[1.0; 7], 2f64.ln(), 0.0).unwrap();
        for row in &t.matrix {
            assert!((row[0] - 1.0 / 13.0).abs() < 1e-15);
            for v in &row[1..] {
                assert!((v - 2.0 / 13.0).abs() < 1e-15);
            }
        }
        let flat = update_transition(support.clone(), 0, &[1.0; 7], 1e-14, 0.0).unwrap();
        assert!(flat.matrix.iter().flatten().all(|v| (v - 1.0 / 7.0).abs() < 1e-12));
        let mixed = update_transition(support, 0, &[1.0, -1.0, 0.0, 2.0, -3.0, 1.0, 1.0], 2f64.ln(), 0.0).unwrap();
        assert!((mixed.matrix[1][0] - 1.0 / (1.0 + 6.0 * 0.5)).abs() < 1e-15);
        assert!((mixed.matrix[2][0] - 1.0 / 13.0).abs() < 1e-15);
    }

    #[test]
    fn appendix_j_is_nonincreasing() {
        let mut r = rng::stream(3, Purpose::Audit, 0);
        for _ in 0..100 {
            let a: f64 = r.random_range(0.0..10.0);
            let b: f64 = -r.random_range(0.0..10.0);
            let m = r.random_range(1..50) as f64;
            let j = |e: f64| a / (1.0 + m * e.exp()) + b / (1.0 + m * (-e).exp());
            let mut last = j(0.0);
            for i in 1..100 {
                let v = j(i as f64 * 0.05);
                assert!(v <= last + 1e-12);
                last = v;
            }
        }
    }

    #[test]
    fn plan_label_mode_passes_ledger_and_freezes() {
        let data = blob_data(1, &[40, 60, 50], 2);
        let fit = fit_gmm(&data).unwrap();
        let adj = adjacency::enumerate(&data, &fit, AdjacencyMode::label_flip()).unwrap();
        let s = spec(AdjacencyMode::label_flip());
        let p = plan(&fit, &adj, &s, &PlanOptions::default()).unwrap();
        assert_eq!(p.iterations, 2);
        assert!((p.eps0 - 1.0 / 3.0).abs() < 1e-12);
        for w in p.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        let report = verify_ledger(&p, &adj, &s).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.checks.iter().all(|c| c.worst_margin >= -1e-9));

        let mut inflated = p.clone();
        inflated.classes[1].gamma_k *= 1.1;
        let r2 = verify_ledger(&inflated, &adj, &s).unwrap();
        assert!(!r2.check("budget").unwrap().passed);
        assert!(r2.check("budget").unwrap().worst_margin < 0.0);

        let halved = PrivacySpec::new(1.0, 0.5e-5, 1e-3, AdjacencyMode::label_flip()).unwrap();
        let r3 = verify_ledger(&p, &adj, &halved).unwrap();
        assert!(r3.check("gaussian_schur").unwrap().worst_margin < report.check("gaussian_schur").unwrap().worst_margin);

        let back = NoisePlan::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn feature_mode_closed_form() {
        let data = adjacency::clip_dataset(&blob_data(2, &[30, 30], 3), 1.0).unwrap();
        let fit = fit_gmm(&data).unwrap();
        let mode = AdjacencyMode::new(AdjacencyKind::FeatureChange, Some(1.0)).unwrap();
        let adj = adjacency::enumerate(&data, &fit, mode).unwrap();
        let s = spec(mode);
        let p = plan(&fit, &adj, &s, &PlanOptions::default()).unwrap();
        assert!(p.transition.is_none());
        assert_eq!(p.eps0, 0.0);
        for (c, cl) in p.classes.iter().enumerate() {
            let n = fit.counts.counts()[c] as f64;
            let want = 8.0 * (2.0 / 1e-5f64).ln() / (n * n * cl.eps_k * cl.eps_k);
            for i in 0..3 {
                assert!((cl.gamma_inv.get(i, i) - want).abs() <= 1e-12 * want);
            }
        }
        let report = verify_ledger(&p, &adj, &s).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.check("feature_uniform_bound").unwrap().worst_margin.abs() <= 1e-9);
    }

    #[test]
    fn uniform_bound_gives_isotropic_noise() {
        let data = adjacency::clip_dataset(&blob_data(3, &[25, 35], 2), 1.0).unwrap();
        let fit = fit_gmm(&data).unwrap();
        let mode = AdjacencyMode::new(AdjacencyKind::LabelFlip, Some(1.0)).unwrap();
        let adj = adjacency::enumerate(&data, &fit, mode).unwrap();
        let s = spec(mode);
        let opts = PlanOptions {
            uniform_bound: true,
            ..PlanOptions::default()
        };
        let p = plan(&fit, &adj, &s, &opts).unwrap();
        for cl in &p.classes {
            assert_eq!(cl.gamma_inv.get(0, 1), 0.0);
            assert_eq!(cl.gamma_inv.get(0, 0), cl.gamma_inv.get(1, 1));
        }
        assert!(verify_ledger(&p, &adj, &s).unwrap().passed);
        // The uniform radius covers every explicit difference too.
        let explicit = PlanOptions::default();
        let p2 = plan(&fit, &adj, &s, &explicit).unwrap();
        for c in 0..2 {
            assert!(p.classes[c].gamma_inv.trace() >= p2.classes[c].gamma_inv.trace());
        }
    }

    #[test]
    fn degenerate_adjacency_is_reported() {
        let data = blob_data(4, &[20], 2);
        let fit = fit_gmm(&data).unwrap();
        let adj = adjacency::enumerate(&data, &fit, AdjacencyMode::label_flip()).unwrap();
        let err = plan(&fit, &adj, &spec(AdjacencyMode::label_flip()), &PlanOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateAdjacency { class: 1 }));
    }

    #[test]
    fn spec_validation() {
        let m = AdjacencyMode::label_flip();
        assert!(PrivacySpec::new(0.0, 1e-5, 1e-3, m).is_err());
        assert!(PrivacySpec::new(1.0, 1.0, 1e-3, m).is_err());
        assert!(PrivacySpec::new(1.0, 1e-5, 0.0, m).is_err());
    }
}
