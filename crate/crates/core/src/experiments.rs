//! Synthetic data generation and parameter sweeps over ε, N, K and d.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjacency::{self, AdjacencyMode};
use crate::divergence;
use crate::error::{Error, Result};
use crate::linalg;
use crate::mechanisms::sample_wishart;
use crate::model::{fit_gmm, GmmParams, LabeledDataset, WeightCounts};
use crate::planner::{self, PlanOptions, PrivacySpec};
use crate::rng::{self, Purpose};

/// Label redraws before the mixing weights themselves are redrawn.
const LABEL_ATTEMPTS: usize = 100;

/// Extra attempts, with fresh seeds, for a failing sweep trial.
pub const TRIAL_RETRIES: usize = 3;

/// Draws `n` labeled points from a random `k`-component GMM: Dirichlet(1)
/// weights, means uniform on `[−10, 10]^d`, covariances `W_d(I, d+1)`.
///
/// Returns the dataset and the generating model (with the realized counts).
pub fn generate_synthetic(k: usize, d: usize, n: usize, seed: u64) -> Result<(LabeledDataset, GmmParams)> {
    if k == 0 || d == 0 {
        return Err(Error::InvalidArgument("k and d must be positive".into()));
    }
    if n < 2 * k {
        return Err(Error::InvalidArgument(format!("need n ≥ 2k, got n = {n}, k = {k}")));
    }
    let mut r = rng::stream(seed, Purpose::Synthetic, 0);
    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..d).map(|_| r.random_range(-10.0..=10.0)).collect())
        .collect();
    let covs: Vec<_> = (0..k).map(|_| sample_wishart(1.0, d, &mut r)).collect();
    let mut weight_draws = 0;
    let labels = 'draw: loop {
        weight_draws += 1;
        let raw: Vec<f64> = (0..k).map(|_| -(1.0 - r.random::<f64>()).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        for _ in 0..LABEL_ATTEMPTS {
            // After many rejected weight vectors (only plausible when n is
            // close to 2k), seed every class with two points up front.
            let seeded = if weight_draws > LABEL_ATTEMPTS { 2 * k } else { 0 };
            let labels: Vec<usize> = (0..n)
                .map(|i| {
                    if i < seeded {
                        return i % k + 1;
                    }
                    let u: f64 = r.random();
                    let mut acc = 0.0;
                    for (c, w) in weights.iter().enumerate() {
                        acc += w;
                        if u < acc {
                            return c + 1;
                        }
                    }
                    k
                })
                .collect();
            let mut sizes = vec![0usize; k];
            for &l in &labels {
                sizes[l - 1] += 1;
            }
            if sizes.iter().all(|&s| s >= 2) {
                break 'draw labels;
            }
        }
    };
    let factors = covs.iter().map(linalg::cholesky).collect::<Result<Vec<_>>>()?;
    let points: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| {
            let z: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
            factors[l - 1].mul_vec(&z).iter().zip(&means[l - 1]).map(|(a, b)| a + b).collect()
        })
        .collect();
    let data = LabeledDataset::new(points, labels, k)?;
    let truth = GmmParams {
        counts: WeightCounts::new(data.class_sizes())?,
        means,
        covs,
        regularization: 0.0,
    };
    Ok((data, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    Epsilon,
    N,
    K,
    D,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Epsilon => "epsilon",
            Self::N => "n",
            Self::K => "k",
            Self::D => "d",
        }
    }

    fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "epsilon" | "eps" => Ok(Self::Epsilon),
            "n" => Ok(Self::N),
            "k" => Ok(Self::K),
            "d" => Ok(Self::D),
            other => Err(Error::InvalidArgument(format!(
                "unknown sweep variable '{other}' (expected epsilon, n, k or d)"
            ))),
        }
    }
}

/// Fixed parameters of a sweep; the swept variable overrides one of them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseConfig {
    pub k: usize,
    pub d: usize,
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub lambda: f64,
}

impl Default for BaseConfig {
    fn default() -> Self {
        Self {
            k: 5,
            d: 3,
            n: 1000,
            epsilon: 1.0,
            delta: 1e-5,
            lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub base: BaseConfig,
    pub seed: u64,
}

impl SweepSpec {
    pub fn new(variable: SweepVariable, grid: Vec<f64>, trials: usize) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidArgument("sweep grid is empty".into()));
        }
        if trials == 0 {
            return Err(Error::InvalidArgument("trials must be positive".into()));
        }
        for &v in &grid {
            let ok = match variable {
                SweepVariable::Epsilon => v > 0.0 && v.is_finite(),
                _ => v >= 1.0 && v.fract() == 0.0,
            };
            if !ok {
                return Err(Error::InvalidArgument(format!("invalid {variable} grid value {v}")));
            }
        }
        Ok(Self {
            variable,
            grid,
            trials,
            base: BaseConfig::default(),
            seed: 0,
        })
    }

    fn config(&self, value: f64) -> BaseConfig {
        let mut c = self.base;
        match self.variable {
            SweepVariable::Epsilon => c.epsilon = value,
            SweepVariable::N => c.n = value as usize,
            SweepVariable::K => c.k = value as usize,
            SweepVariable::D => c.d = value as usize,
        }
        c
    }

    /// Seed for a trial; shared by every grid value so that the grid points
    /// see common random numbers.
    fn trial_seed(&self, trial: usize, attempt: usize) -> u64 {
        let s = rng::derive_seed(self.seed, self.variable.index());
        let s = rng::derive_seed(s, trial as u64);
        rng::derive_seed(s, attempt as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variable: SweepVariable,
    pub value: f64,
    pub trial: usize,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variable: SweepVariable,
    pub value: f64,
    pub trials: usize,
    pub mean_kl: f64,
    pub ci95_half_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub value: f64,
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<SweepFailure>,
}

impl SweepResult {
    pub fn means(&self) -> Vec<f64> {
        self.summary.iter().map(|s| s.mean_kl).collect()
    }
}

/// Analytic expected KL of the planned release for one synthetic dataset.
pub fn trial_kl(config: &BaseConfig, seed: u64) -> Result<f64> {
    let (data, _) = generate_synthetic(config.k, config.d, config.n, seed)?;
    let fit = fit_gmm(&data)?;
    let mode = AdjacencyMode::label_flip();
    let adj = adjacency::enumerate(&data, &fit, mode)?;
    let spec = PrivacySpec::new(config.epsilon, config.delta, config.lambda, mode)?;
    let plan = planner::plan(&fit, &adj, &spec, &PlanOptions::default())?;
    Ok(divergence::expected_kl(&fit, &plan, 0, seed)?.analytic_expected_kl)
}

/// Runs every (grid value, trial) pair in parallel with deterministic
/// aggregation.
pub fn run_sweep_with<F>(spec: &SweepSpec, kl: F) -> SweepResult
where
    F: Fn(&BaseConfig, u64) -> Result<f64> + Sync,
{
    let jobs: Vec<(usize, usize)> = (0..spec.grid.len())
        .flat_map(|v| (0..spec.trials).map(move |t| (v, t)))
        .collect();
    let outcomes: Vec<(usize, usize, std::result::Result<f64, String>)> = jobs
        .par_iter()
        .map(|&(v, t)| {
            let config = spec.config(spec.grid[v]);
            let mut last = String::new();
            for attempt in 0..=TRIAL_RETRIES {
                match kl(&config, spec.trial_seed(t, attempt)) {
                    Ok(value) => return (v, t, Ok(value)),
                    Err(e) => last = e.to_string(),
                }
            }
            (v, t, Err(last))
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (v, t, outcome) in outcomes {
        match outcome {
            Ok(kl) => rows.push(SweepRow {
                variable: spec.variable,
                value: spec.grid[v],
                trial: t,
                kl,
            }),
            Err(error) => failures.push(SweepFailure {
                value: spec.grid[v],
                trial: t,
                error,
            }),
        }
    }
    let summary = spec
        .grid
        .iter()
        .map(|&value| {
            let vals: Vec<f64> = rows.iter().filter(|r| r.value == value).map(|r| r.kl).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let half = if vals.len() > 1 {
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                1.96 * (var / n).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                variable: spec.variable,
                value,
                trials: vals.len(),
                mean_kl: mean,
                ci95_half_width: half,
            }
        })
        .collect();
    SweepResult {
        rows,
        summary,
        failures,
    }
}

pub fn run_sweep(spec: &SweepSpec) -> SweepResult {
    run_sweep_with(spec, trial_kl)
}

/// Writes `raw.csv` and `summary.csv` into `dir` (created if missing).
pub fn write_sweep(result: &SweepResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut raw = csv::Writer::from_path(dir.join("raw.csv")).map_err(csv_err)?;
    for row in &result.rows {
        raw.serialize(row).map_err(csv_err)?;
    }
    raw.flush()?;
    let mut summary = csv::Writer::from_path(dir.join("summary.csv")).map_err(csv_err)?;
    for row in &result.summary {
        summary.serialize(row).map_err(csv_err)?;
    }
    summary.flush()?;
    Ok(())
}

/// Number of strict inversions of the requested direction between adjacent
/// values.
pub fn inversions(values: &[f64], increasing: bool) -> usize {
    values
        .windows(2)
        .filter(|w| if increasing { w[1] <= w[0] } else { w[1] >= w[0] })
        .count()
}
