//! Adjacent-dataset enumeration.
//!
//! For a dataset `D` this module lists how each class mean can move under a
//! single-record change, and which weight vectors the neighbors of `D` map to.
//! Label flips are the default; record-level modes rely on a feature-norm
//! clip bound `B`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::model::{GmmParams, LabeledDataset, WeightCounts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdjacencyKind {
    /// Flip exactly one class label; features fixed.
    #[serde(rename = "label")]
    LabelFlip,
    /// Remove one record.
    #[serde(rename = "remove")]
    RemoveOne,
    /// Add one record of norm at most `B`.
    #[serde(rename = "add")]
    AddOne,
    /// Replace the features of one record, labels fixed.
    #[serde(rename = "feature")]
    FeatureChange,
}

impl AdjacencyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::LabelFlip => "label",
            Self::RemoveOne => "remove",
            Self::AddOne => "add",
            Self::FeatureChange => "feature",
        }
    }

    pub fn needs_clip_bound(self) -> bool {
        matches!(self, Self::AddOne | Self::FeatureChange)
    }
}

impl fmt::Display for AdjacencyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdjacencyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "label" => Ok(Self::LabelFlip),
            "remove" => Ok(Self::RemoveOne),
            "add" => Ok(Self::AddOne),
            "feature" => Ok(Self::FeatureChange),
            other => Err(Error::InvalidArgument(format!(
                "unknown adjacency {other:?}; expected label, remove, add or feature"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyMode {
    pub kind: AdjacencyKind,
    pub clip_bound: Option<f64>,
}

impl AdjacencyMode {
    pub fn new(kind: AdjacencyKind, clip_bound: Option<f64>) -> Result<Self> {
        if let Some(b) = clip_bound {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidArgument(format!("clip bound must be positive and finite, got {b}")));
            }
        }
        if kind.needs_clip_bound() && clip_bound.is_none() {
            return Err(Error::InvalidArgument(format!(
                "adjacency {kind} requires a clip bound"
            )));
        }
        Ok(Self { kind, clip_bound })
    }

    pub fn label_flip() -> Self {
        Self {
            kind: AdjacencyKind::LabelFlip,
            clip_bound: None,
        }
    }
}

/// Everything the planner needs to know about the neighbors of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencySet {
    pub mode: AdjacencyMode,
    /// Per class, the explicit differences `μ_k(D) − μ_k(D′)`.
    pub mean_diffs: Vec<Vec<Vec<f64>>>,
    /// Per class, a radius `r` such that every admissible mean shift
    /// satisfies `‖μ_k(D) − μ_k(D′)‖ ≤ r` in any direction.
    pub norm_bounds: Vec<Option<f64>>,
    /// The neighbor weight set `S′(D)`.
    pub weight_neighbors: Vec<WeightCounts>,
    pub class_sizes: Vec<u64>,
    /// Neighbor datasets enumerated.
    pub admissible: usize,
    /// Neighbors skipped because they would empty a class.
    pub excluded: usize,
}

impl AdjacencySet {
    pub fn k(&self) -> usize {
        self.class_sizes.len()
    }

    pub fn constraint_count(&self) -> usize {
        self.mean_diffs.iter().map(Vec::len).sum()
    }

    pub fn summary(&self) -> AdjacencySummary {
        AdjacencySummary {
            adjacency: self.mode.kind,
            clip_bound: self.mode.clip_bound,
            class_sizes: self.class_sizes.clone(),
            mean_constraints: self.mean_diffs.iter().map(Vec::len).collect(),
            norm_bounds: self.norm_bounds.clone(),
            weight_neighbors: self.weight_neighbors.len(),
            admissible: self.admissible,
            excluded: self.excluded,
        }
    }
}

/// JSON-friendly digest of an [`AdjacencySet`] for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencySummary {
    pub adjacency: AdjacencyKind,
    pub clip_bound: Option<f64>,
    pub class_sizes: Vec<u64>,
    pub mean_constraints: Vec<usize>,
    pub norm_bounds: Vec<Option<f64>>,
    pub weight_neighbors: usize,
    pub admissible: usize,
    pub excluded: usize,
}

fn removal_diff(mean: &[f64], size: u64, x: &[f64]) -> Vec<f64> {
    let n = size as f64;
    mean.iter()
        .zip(x)
        .map(|(m, xi)| m - (n * m - xi) / (n - 1.0))
        .collect()
}

fn addition_diff(mean: &[f64], size: u64, x: &[f64]) -> Vec<f64> {
    let n = size as f64;
    mean.iter()
        .zip(x)
        .map(|(m, xi)| m - (n * m + xi) / (n + 1.0))
        .collect()
}

fn shifted(counts: &WeightCounts, dec: Option<usize>, inc: Option<usize>) -> WeightCounts {
    let mut c = counts.counts().to_vec();
    if let Some(i) = dec {
        c[i] -= 1;
    }
    if let Some(i) = inc {
        c[i] += 1;
    }
    WeightCounts::new(c).expect("neighbor keeps every class nonempty")
}

fn check_dims(data: &LabeledDataset, fit: &GmmParams) -> Result<()> {
    if fit.k() != data.k() {
        return Err(Error::DimensionMismatch { expected: data.k(), got: fit.k() });
    }
    if fit.d() != data.d() {
        return Err(Error::DimensionMismatch { expected: data.d(), got: fit.d() });
    }
    if fit.counts.counts() != data.class_sizes().as_slice() {
        return Err(Error::InvalidArgument("model counts do not match the dataset".into()));
    }
    Ok(())
}

/// Label-flip neighbors: every point moved to every other class, except
/// moves that would empty their source class.
///
/// Each admissible flip `(n, k′)` contributes one removal difference to the
/// source class and one addition difference to the target class, in
/// `(n, k′)` order.
pub fn enumerate_label_flip(data: &LabeledDataset, fit: &GmmParams) -> Result<AdjacencySet> {
    check_dims(data, fit)?;
    let k = data.k();
    let sizes = data.class_sizes();
    let mut mean_diffs = vec![Vec::new(); k];
    let mut admissible = 0;
    let mut excluded = 0;
    for (x, &label) in data.points().iter().zip(data.labels()) {
        let src = label - 1;
        for dst in (0..k).filter(|&c| c != src) {
            if sizes[src] < 2 {
                excluded += 1;
                continue;
            }
            admissible += 1;
            mean_diffs[src].push(removal_diff(&fit.means[src], sizes[src], x));
            mean_diffs[dst].push(addition_diff(&fit.means[dst], sizes[dst], x));
        }
    }
    let mut weight_neighbors = Vec::new();
    for src in (0..k).filter(|&c| sizes[c] >= 2) {
        for dst in (0..k).filter(|&c| c != src) {
            weight_neighbors.push(shifted(&fit.counts, Some(src), Some(dst)));
        }
    }
    Ok(AdjacencySet {
        mode: AdjacencyMode::label_flip(),
        mean_diffs,
        norm_bounds: vec![None; k],
        weight_neighbors,
        class_sizes: sizes,
        admissible,
        excluded,
    })
}

/// Record-level neighbors for `RemoveOne`, `AddOne` and `FeatureChange`.
pub fn enumerate_record_level(
    data: &LabeledDataset,
    fit: &GmmParams,
    mode: AdjacencyMode,
) -> Result<AdjacencySet> {
    check_dims(data, fit)?;
    if let Some(b) = mode.clip_bound {
        check_clip(data, b)?;
    }
    let k = data.k();
    let sizes = data.class_sizes();
    let mut mean_diffs = vec![Vec::new(); k];
    let mut norm_bounds = vec![None; k];
    let mut weight_neighbors = Vec::new();
    let mut admissible = 0;
    let mut excluded = 0;
    match mode.kind {
        AdjacencyKind::LabelFlip => return enumerate_label_flip(data, fit),
        AdjacencyKind::RemoveOne => {
            for (x, &label) in data.points().iter().zip(data.labels()) {
                let c = label - 1;
                if sizes[c] < 2 {
                    excluded += 1;
                    continue;
                }
                admissible += 1;
                mean_diffs[c].push(removal_diff(&fit.means[c], sizes[c], x));
            }
            for c in (0..k).filter(|&c| sizes[c] >= 2) {
                weight_neighbors.push(shifted(&fit.counts, Some(c), None));
            }
        }
        AdjacencyKind::AddOne => {
            let b = mode.clip_bound.expect("validated by AdjacencyMode::new");
            for c in 0..k {
                norm_bounds[c] = Some((b + norm2(&fit.means[c])) / (sizes[c] as f64 + 1.0));
                weight_neighbors.push(shifted(&fit.counts, None, Some(c)));
            }
            admissible = k;
        }
        AdjacencyKind::FeatureChange => {
            let b = mode.clip_bound.expect("validated by AdjacencyMode::new");
            for c in 0..k {
                norm_bounds[c] = Some(2.0 * b / sizes[c] as f64);
            }
            admissible = data.n();
        }
    }
    Ok(AdjacencySet {
        mode,
        mean_diffs,
        norm_bounds,
        weight_neighbors,
        class_sizes: sizes,
        admissible,
        excluded,
    })
}

/// Dispatches on the adjacency kind.
pub fn enumerate(data: &LabeledDataset, fit: &GmmParams, mode: AdjacencyMode) -> Result<AdjacencySet> {
    match mode.kind {
        AdjacencyKind::LabelFlip => {
            if let Some(b) = mode.clip_bound {
                check_clip(data, b)?;
            }
            let mut set = enumerate_label_flip(data, fit)?;
            set.mode = mode;
            Ok(set)
        }
        _ => enumerate_record_level(data, fit, mode),
    }
}

/// Data-independent radius bounding every mean shift of a class of size
/// `class_size` when all features satisfy `‖x‖ ≤ b`.
pub fn uniform_mean_shift_radius(kind: AdjacencyKind, class_size: u64, b: f64) -> f64 {
    let n = class_size as f64;
    match kind {
        AdjacencyKind::FeatureChange => 2.0 * b / n,
        AdjacencyKind::AddOne => 2.0 * b / (n + 1.0),
        // A removal moves the mean by (x − μ)/(n − 1); classes that cannot
        // lose a member only see additions, (x − μ)/(n + 1).
        AdjacencyKind::LabelFlip | AdjacencyKind::RemoveOne => {
            if class_size >= 2 {
                2.0 * b / (n - 1.0)
            } else {
                2.0 * b / (n + 1.0)
            }
        }
    }
}

fn check_clip(data: &LabeledDataset, b: f64) -> Result<()> {
    for (index, x) in data.points().iter().enumerate() {
        let norm = norm2(x);
        // Clipping rescales to exactly B, which may round a hair above it.
        if norm > b * (1.0 + 1e-12) {
            return Err(Error::ClipViolation { index, norm, bound: b });
        }
    }
    Ok(())
}

/// Scales every point with `‖x‖ > b` onto the sphere of radius `b`.
pub fn clip_points(points: &[Vec<f64>], b: f64) -> Result<Vec<Vec<f64>>> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("clip bound must be positive, got {b}")));
    }
    Ok(points
        .iter()
        .map(|x| {
            let norm = norm2(x);
            if norm > b {
                x.iter().map(|v| v * (b / norm)).collect()
            } else {
                x.clone()
            }
        })
        .collect())
}

/// [`clip_points`] applied to a labeled dataset.
pub fn clip_dataset(data: &LabeledDataset, b: f64) -> Result<LabeledDataset> {
    Ok(data.with_points(clip_points(data.points(), b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fit_gmm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_class() -> (LabeledDataset, GmmParams) {
        let data = LabeledDataset::new(
            vec![vec![0.0], vec![2.0], vec![5.0], vec![9.0]],
            vec![1, 1, 2, 2],
            2,
        )
        .unwrap();
        let fit = fit_gmm(&data).unwrap();
        (data, fit)
    }

    #[test]
    fn label_flip_neighbors_small() {
        let (data, fit) = two_class();
        let adj = enumerate_label_flip(&data, &fit).unwrap();
        let got: Vec<Vec<u64>> = adj.weight_neighbors.iter().map(|w| w.counts().to_vec()).collect();
        assert_eq!(got, vec![vec![1, 3], vec![3, 1]]);
        assert_eq!(adj.admissible, 4);
        assert_eq!(adj.constraint_count(), 2 * adj.admissible);
        // Removing 0 from {0, 2}: mean 1 becomes 2.
        assert_eq!(adj.mean_diffs[0][0], vec![-1.0]);
    }

    #[test]
    fn label_flip_excludes_emptying_moves() {
        let data = LabeledDataset::new(
            vec![vec![0.0], vec![1.0], vec![2.0], vec![7.0]],
            vec![1, 1, 1, 2],
            2,
        )
        .unwrap();
        let fit = crate::model::GmmParams {
            counts: WeightCounts::new(vec![3, 1]).unwrap(),
            means: vec![vec![1.0], vec![7.0]],
            covs: vec![crate::linalg::SymMatrix::identity(1); 2],
            regularization: 0.0,
        };
        let adj = enumerate_label_flip(&data, &fit).unwrap();
        assert_eq!(adj.excluded, 1);
        assert_eq!(adj.admissible, 3);
        assert_eq!(adj.weight_neighbors.len(), 1);
        assert_eq!(adj.weight_neighbors[0].counts(), &[2, 2]);
    }

    #[test]
    fn label_flip_matches_refit_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = 3;
        let n = 30;
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..2).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|i| i % k + 1).collect();
        let data = LabeledDataset::new(points.clone(), labels.clone(), k).unwrap();
        let fit = fit_gmm(&data).unwrap();
        let adj = enumerate_label_flip(&data, &fit).unwrap();

        // Recompute means on the literally flipped dataset.
        let mean_of = |pts: &[Vec<f64>], labs: &[usize], c: usize| -> Vec<f64> {
            let members: Vec<&Vec<f64>> = pts.iter().zip(labs).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            (0..2).map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64).collect()
        };
        // Each class list holds its removal and addition differences in
        // enumeration order.
        let mut idx = vec![0usize; k];
        let mut checked = 0;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let src = labels[i];
            for dst in (1..=k).filter(|&c| c != src) {
                let mut flipped = labels.clone();
                flipped[i] = dst;
                let removal = &adj.mean_diffs[src - 1][idx[src - 1]];
                idx[src - 1] += 1;
                let addition = &adj.mean_diffs[dst - 1][idx[dst - 1]];
                idx[dst - 1] += 1;
                let new_src = mean_of(&points, &flipped, src);
                let new_dst = mean_of(&points, &flipped, dst);
                for j in 0..2 {
                    worst = worst.max((fit.means[src - 1][j] - new_src[j] - removal[j]).abs());
                    worst = worst.max((fit.means[dst - 1][j] - new_dst[j] - addition[j]).abs());
                }
                checked += 1;
            }
        }
        assert!(checked >= 50);
        assert!(worst <= 1e-10, "worst deviation {worst}");
    }

    #[test]
    fn remove_one_has_k_neighbors() {
        let data = LabeledDataset::new(
            (0..9).map(|i| vec![i as f64]).collect(),
            vec![1, 1, 1, 2, 2, 2, 3, 3, 3],
            3,
        )
        .unwrap();
        let fit = fit_gmm(&data).unwrap();
        let mode = AdjacencyMode::new(AdjacencyKind::RemoveOne, None).unwrap();
        let adj = enumerate_record_level(&data, &fit, mode).unwrap();
        assert_eq!(adj.weight_neighbors.len(), 3);
        for w in &adj.weight_neighbors {
            assert_eq!(w.total(), 8);
            let diff: u64 = w.counts().iter().zip(fit.counts.counts()).map(|(a, b)| b - a).sum();
            assert_eq!(diff, 1);
        }
        assert_eq!(adj.constraint_count(), 9);
    }

    #[test]
    fn feature_change_bounds() {
        let points: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64) / 40.0]).collect();
        let labels: Vec<usize> = (0..20).map(|i| if i < 10 { 1 } else { 2 }).collect();
        let data = LabeledDataset::new(points, labels, 2).unwrap();
        let fit = fit_gmm(&data).unwrap();
        let mode = AdjacencyMode::new(AdjacencyKind::FeatureChange, Some(1.0)).unwrap();
        let adj = enumerate_record_level(&data, &fit, mode).unwrap();
        assert!(adj.weight_neighbors.is_empty());
        assert_eq!(adj.norm_bounds, vec![Some(0.2), Some(0.2)]);
    }

    #[test]
    fn clip_violation_detected() {
        let (data, fit) = two_class();
        let mode = AdjacencyMode::new(AdjacencyKind::FeatureChange, Some(1.0)).unwrap();
        assert!(matches!(
            enumerate_record_level(&data, &fit, mode),
            Err(Error::ClipViolation { index: 1, .. })
        ));
    }

    #[test]
    fn mode_validation() {
        assert!(AdjacencyMode::new(AdjacencyKind::FeatureChange, None).is_err());
        assert!(AdjacencyMode::new(AdjacencyKind::AddOne, Some(0.0)).is_err());
        assert!(AdjacencyMode::new(AdjacencyKind::RemoveOne, None).is_ok());
        assert_eq!("feature".parse::<AdjacencyKind>().unwrap(), AdjacencyKind::FeatureChange);
    }

    #[test]
    fn clipping_examples() {
        let data = LabeledDataset::new(vec![vec![3.0, 4.0], vec![0.0, 0.0]], vec![1, 1], 1).unwrap();
        let same = clip_dataset(&data, 5.0).unwrap();
        assert_eq!(same.points(), data.points());
        let unit = clip_dataset(&data, 1.0).unwrap();
        assert!((unit.points()[0][0] - 0.6).abs() < 1e-15);
        assert!((unit.points()[0][1] - 0.8).abs() < 1e-15);
        assert_eq!(unit.points()[1], vec![0.0, 0.0]);
    }

    #[test]
    fn uniform_radius_covers_label_flips() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let points: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..40).map(|i| i % 4 + 1).collect();
        let data = clip_dataset(&LabeledDataset::new(points, labels, 4).unwrap(), 1.5).unwrap();
        let fit = fit_gmm(&data).unwrap();
        let adj = enumerate_label_flip(&data, &fit).unwrap();
        for (c, diffs) in adj.mean_diffs.iter().enumerate() {
            let r = uniform_mean_shift_radius(AdjacencyKind::LabelFlip, adj.class_sizes[c], 1.5);
            assert!(diffs.iter().all(|v| norm2(v) <= r * (1.0 + 1e-12)));
        }
    }
}
