//! Randomized release primitives: Gaussian mean noise, Wishart covariance
//! noise and the smoothed discrete weight mapper.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjacency::AdjacencyKind;
use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::model::{self, GmmParams, LabeledDataset, ModelFile, WeightCounts};
use crate::planner::NoisePlan;
use crate::rng::{self, Purpose};

/// Transition matrix `F′` over the restricted support `{π(D)} ∪ S′(D)`.
///
/// Rows are indexed like `support`; `j_star` is the column of `π(D)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionPlan {
    pub support: Vec<WeightCounts>,
    pub j_star: usize,
    pub matrix: Vec<Vec<f64>>,
    pub lambda: f64,
    /// `ln |S|` for the full lattice of weight vectors.
    pub log_s_cardinality: f64,
}

impl TransitionPlan {
    pub fn new(support: Vec<WeightCounts>, j_star: usize, matrix: Vec<Vec<f64>>, lambda: f64) -> Result<Self> {
        let m = support.len();
        if m == 0 || j_star >= m {
            return Err(Error::InvalidArgument("transition support must contain π(D)".into()));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidArgument(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        if matrix.len() != m || matrix.iter().any(|r| r.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: matrix.len(),
            });
        }
        // Record-level neighbors may hold N ± 1 records; only K must agree.
        let (n, k) = (support[j_star].total(), support[j_star].k());
        if support.iter().any(|s| s.k() != k) {
            return Err(Error::InvalidArgument("support elements disagree on K".into()));
        }
        for (i, row) in matrix.iter().enumerate() {
            if row.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(Self {
            log_s_cardinality: model::ln_lattice_cardinality(n, k as u64),
            support,
            j_star,
            matrix,
            lambda,
        })
    }

    /// The plan that always outputs `π(D)` (ignoring smoothing).
    pub fn identity(pi: WeightCounts, lambda: f64) -> Result<Self> {
        Self::new(vec![pi], 0, vec![vec![1.0]], lambda)
    }

    /// Total of `π(D)`, which fixes the smoothing lattice `S`.
    pub fn n(&self) -> u64 {
        self.support[self.j_star].total()
    }

    pub fn k(&self) -> usize {
        self.support[self.j_star].k()
    }

    /// Whether support element `i` lies on the smoothing lattice `S`.
    pub fn on_lattice(&self, i: usize) -> bool {
        self.support[i].total() == self.n()
    }

    /// Column `j_star` of `F′` renormalized to a PMF over the support.
    pub fn column_pmf(&self) -> Vec<f64> {
        let column: Vec<f64> = self.matrix.iter().map(|r| r[self.j_star]).collect();
        let total: f64 = column.iter().sum();
        column.iter().map(|v| v / total).collect()
    }

    /// Probability of each support element under the full smoothed
    /// mechanism, plus the probability of landing outside the support.
    pub fn smoothed_pmf(&self) -> (Vec<f64>, f64) {
        let uniform = (-self.log_s_cardinality).exp();
        let pmf: Vec<f64> = self
            .column_pmf()
            .iter()
            .enumerate()
            .map(|(i, p)| (1.0 - self.lambda) * p + if self.on_lattice(i) { self.lambda * uniform } else { 0.0 })
            .collect();
        let on_lattice = (0..self.support.len()).filter(|&i| self.on_lattice(i)).count();
        let outside = self.lambda * (1.0 - on_lattice as f64 * uniform).max(0.0);
        (pmf, outside)
    }
}

/// `μ + L z` with `L Lᵀ = Γ⁻¹` and `z` standard normal.
pub fn sample_gaussian_mean<R: Rng + ?Sized>(mu: &[f64], gamma_inv: &SymMatrix, rng: &mut R) -> Result<Vec<f64>> {
    if mu.len() != gamma_inv.dim() {
        return Err(Error::DimensionMismatch {
            expected: gamma_inv.dim(),
            got: mu.len(),
        });
    }
    let l = linalg::cholesky(gamma_inv)?;
    let z: Vec<f64> = (0..mu.len()).map(|_| rng.sample(StandardNormal)).collect();
    Ok(l.mul_vec(&z).iter().zip(mu).map(|(a, b)| a + b).collect())
}

/// One draw from `W_d(I/γ, d+1)` by the Bartlett decomposition.
pub fn sample_wishart<R: Rng + ?Sized>(gamma: f64, d: usize, rng: &mut R) -> SymMatrix {
    let dof = d + 1;
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        let chi2: f64 = (0..dof - i)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z * z
            })
            .sum();
        a[i * d + i] = chi2.sqrt();
        for j in 0..i {
            a[i * d + j] = rng.sample(StandardNormal);
        }
    }
    SymMatrix::from_fn(d, |i, j| {
        (0..=i.min(j)).map(|k| a[i * d + k] * a[j * d + k]).sum::<f64>() / gamma
    })
}

/// Uniform element of the lattice `S` of positive compositions of `n` into
/// `k` parts, via `k − 1` distinct cut points in `{1, …, n−1}`.
pub fn sample_uniform_lattice<R: Rng + ?Sized>(n: u64, k: usize, rng: &mut R) -> Result<WeightCounts> {
    if k == 0 || n < k as u64 {
        return Err(Error::InvalidArgument(format!("no composition of {n} into {k} positive parts")));
    }
    let slots = usize::try_from(n - 1).map_err(|_| Error::InvalidArgument("N too large".into()))?;
    let mut cuts: Vec<u64> = index::sample(rng, slots, k - 1)
        .into_iter()
        .map(|c| c as u64 + 1)
        .collect();
    cuts.sort_unstable();
    let mut counts = Vec::with_capacity(k);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(n)) {
        counts.push(c - prev);
        prev = c;
    }
    WeightCounts::new(counts)
}

/// Draws `π̃`: with probability `λ` uniform over `S`, otherwise from the
/// normalized `j_star` column of `F′`.
pub fn sample_weights<R: Rng + ?Sized>(plan: &TransitionPlan, rng: &mut R) -> Result<WeightCounts> {
    let u: f64 = rng.random();
    if u < plan.lambda {
        return sample_uniform_lattice(plan.n(), plan.k(), rng);
    }
    let pmf = plan.column_pmf();
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in pmf.iter().enumerate() {
        acc += p;
        if r < acc {
            return Ok(plan.support[i].clone());
        }
    }
    // Rounding left `r` past the last cumulative sum.
    let last = pmf.iter().rposition(|p| *p > 0.0).unwrap_or(plan.j_star);
    Ok(plan.support[last].clone())
}

/// Metadata attached to a released model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseMeta {
    pub epsilon: f64,
    pub delta: f64,
    pub epsilon0: f64,
    pub lambda: f64,
    pub seed: u64,
    pub adjacency: AdjacencyKind,
}

/// A differentially private GMM `(π̃, μ̃, Σ̃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReleasedGmm {
    pub weights: WeightCounts,
    pub means: Vec<Vec<f64>>,
    pub covs: Vec<SymMatrix>,
    pub meta: ReleaseMeta,
}

#[derive(Serialize, Deserialize)]
struct ReleasedFile {
    #[serde(flatten)]
    model: ModelFile,
    meta: ReleaseMeta,
}

impl ReleasedGmm {
    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn d(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// The released parameters viewed as an ordinary GMM.
    pub fn as_gmm(&self) -> GmmParams {
        GmmParams {
            counts: self.weights.clone(),
            means: self.means.clone(),
            covs: self.covs.clone(),
            regularization: 0.0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ReleasedFile {
            model: ModelFile::from(&self.as_gmm()),
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ReleasedFile = serde_json::from_str(text)?;
        let gmm = GmmParams::try_from(file.model)?;
        Ok(Self {
            weights: gmm.counts,
            means: gmm.means,
            covs: gmm.covs,
            meta: file.meta,
        })
    }
}

/// Draws every noise term of a plan and assembles the released model.
///
/// Class `k` uses its own mean and Wishart sub-streams, so the result does not
/// depend on how classes are scheduled.
pub fn release(fit: &GmmParams, plan: &NoisePlan, seed: u64) -> Result<ReleasedGmm> {
    let k = fit.k();
    let d = fit.d();
    if plan.classes.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: plan.classes.len(),
        });
    }
    let components: Vec<(Vec<f64>, SymMatrix)> = (0..k)
        .into_par_iter()
        .map(|c| {
            let noise = &plan.classes[c];
            let mut mean_rng = rng::stream(seed, Purpose::MeanNoise, c as u64);
            let mean = sample_gaussian_mean(&fit.means[c], &noise.gamma_inv, &mut mean_rng)?;
            let mut wishart_rng = rng::stream(seed, Purpose::WishartNoise, c as u64);
            let cov = fit.covs[c].add(&sample_wishart(noise.gamma_k, d, &mut wishart_rng));
            Ok((mean, cov))
        })
        .collect::<Result<_>>()?;
    let weights = match &plan.transition {
        Some(t) => sample_weights(t, &mut rng::stream(seed, Purpose::Weights, 0))?,
        None => fit.counts.clone(),
    };
    let (means, covs) = components.into_iter().unzip();
    Ok(ReleasedGmm {
        weights,
        means,
        covs,
        meta: ReleaseMeta {
            epsilon: plan.epsilon,
            delta: plan.delta,
            epsilon0: plan.eps0,
            lambda: plan.lambda,
            seed,
            adjacency: plan.adjacency,
        },
    })
}

/// Ancestral sampling of `n` labeled points: class by weight, then Gaussian.
pub fn sample_dataset(gmm: &GmmParams, n: usize, seed: u64) -> Result<LabeledDataset> {
    let factors = gmm
        .covs
        .iter()
        .map(linalg::cholesky)
        .collect::<Result<Vec<_>>>()?;
    let weights = gmm.counts.weights();
    let mut rng = rng::stream(seed, Purpose::Sampling, 0);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let r: f64 = rng.random();
        let mut acc = 0.0;
        let mut class = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if r < acc {
                class = i;
                break;
            }
        }
        let z: Vec<f64> = (0..gmm.d()).map(|_| rng.sample(StandardNormal)).collect();
        let x: Vec<f64> = factors[class].mul_vec(&z).iter().zip(&gmm.means[class]).map(|(a, b)| a + b).collect();
        points.push(x);
        labels.push(class + 1);
    }
    LabeledDataset::new(points, labels, gmm.k())
}
