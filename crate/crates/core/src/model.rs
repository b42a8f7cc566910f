//! Labeled datasets, the non-private GMM fit and the mixture-weight lattice.

use std::fmt::Write as _;
use std::path::Path;

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::rng;

/// N labeled points in R^d with labels in `1..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
    k: usize,
    d: usize,
}

impl LabeledDataset {
    /// Validates dimensions, label range and that every class is nonempty.
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be positive".into()));
        }
        if points.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: labels.len(),
            });
        }
        let d = points.first().map_or(0, Vec::len);
        if d == 0 {
            return Err(Error::InvalidArgument("dataset has no points or no features".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(Error::Parse {
                    line: i + 2,
                    message: format!("expected {d} features, found {}", p.len()),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    line: i + 2,
                    message: "non-finite feature value".into(),
                });
            }
        }
        for (i, &l) in labels.iter().enumerate() {
            if l == 0 || l > k {
                return Err(Error::LabelOutOfRange {
                    line: i + 2,
                    label: l as i64,
                    k,
                });
            }
        }
        let ds = Self { points, labels, k, d };
        if let Some(class) = ds.class_sizes().iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass { class: class + 1 });
        }
        Ok(ds)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// 1-based labels.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn class_sizes(&self) -> Vec<u64> {
        let mut sizes = vec![0u64; self.k];
        for &l in &self.labels {
            sizes[l - 1] += 1;
        }
        sizes
    }

    /// Replaces the points, keeping labels. Used by clipping.
    pub(crate) fn with_points(&self, points: Vec<Vec<f64>>) -> Self {
        Self {
            points,
            labels: self.labels.clone(),
            k: self.k,
            d: self.d,
        }
    }

    /// Serializes in the dataset CSV format (header `f0,...,label`, LF endings).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.d {
            let _ = write!(out, "f{j},");
        }
        out.push_str("label\n");
        for (p, l) in self.points.iter().zip(&self.labels) {
            for v in p {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{l}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Raw CSV contents: features plus the label column when present.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub points: Vec<Vec<f64>>,
    pub labels: Option<Vec<i64>>,
}

/// Reads a dataset CSV. The `label` column is optional here so that
/// unlabeled files can go through k-means first.
pub fn read_table(path: impl AsRef<Path>) -> Result<RawTable> {
    let text = std::fs::read_to_string(path)?;
    parse_table(&text)
}

pub fn parse_table(text: &str) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    let has_label = names.last() == Some(&"label");
    let d = if has_label { names.len() - 1 } else { names.len() };
    if d == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "header has no feature columns".into(),
        });
    }
    for (j, name) in names.iter().take(d).enumerate() {
        if *name != format!("f{j}") {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header column f{j}, found {name:?}"),
            });
        }
    }

    let mut points = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != names.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", names.len(), record.len()),
            });
        }
        let mut row = Vec::with_capacity(d);
        for field in record.iter().take(d) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid number {field:?}"),
            })?;
            row.push(v);
        }
        points.push(row);
        if has_label {
            let field = &record[d];
            let l: i64 = field.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid label {field:?}"),
            })?;
            labels.push(l);
        }
    }
    Ok(RawTable {
        points,
        labels: has_label.then_some(labels),
    })
}

/// Loads a labeled dataset and checks labels lie in `1..=k` with every class present.
pub fn load_dataset(path: impl AsRef<Path>, k: usize) -> Result<LabeledDataset> {
    let table = read_table(path)?;
    dataset_from_table(table, k)
}

pub fn dataset_from_table(table: RawTable, k: usize) -> Result<LabeledDataset> {
    let labels = table.labels.ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing label column".into(),
    })?;
    let mut checked = Vec::with_capacity(labels.len());
    for (i, &l) in labels.iter().enumerate() {
        if l < 1 || l as u64 > k as u64 {
            return Err(Error::LabelOutOfRange { line: i + 2, label: l, k });
        }
        checked.push(l as usize);
    }
    LabeledDataset::new(table.points, checked, k)
}

/// Class counts; `counts[k] / total` is the mixture weight of class `k`.
///
/// Kept as integers so that lattice membership is exact.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightCounts(Vec<u64>);

impl WeightCounts {
    /// Every count must be at least one.
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() || counts.contains(&0) {
            return Err(Error::Domain(format!(
                "weight counts must be positive, got {counts:?}"
            )));
        }
        Ok(Self(counts))
    }

    pub fn counts(&self) -> &[u64] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn weight(&self, class: usize) -> f64 {
        self.0[class] as f64 / self.total() as f64
    }

    pub fn weights(&self) -> Vec<f64> {
        let n = self.total() as f64;
        self.0.iter().map(|&c| c as f64 / n).collect()
    }
}

/// Number of points of the 1/N lattice with K positive coordinates,
/// `C(n − 1, k − 1)`.
pub fn lattice_cardinality(n: u64, k: u64) -> BigUint {
    assert!(n >= k && k >= 1, "lattice requires n >= k >= 1");
    let r = k - 1;
    let mut acc = BigUint::from(1u32);
    for i in 0..r {
        acc *= n - 1 - i;
        acc /= i + 1;
    }
    acc
}

/// `ln C(n − 1, k − 1)`.
pub fn ln_lattice_cardinality(n: u64, k: u64) -> f64 {
    assert!(n >= k && k >= 1, "lattice requires n >= k >= 1");
    let r = (k - 1).min(n - k);
    (0..r)
        .map(|i| ((n - 1 - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}

/// Non-private GMM fitted by class histograms and sample statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    pub counts: WeightCounts,
    pub means: Vec<Vec<f64>>,
    pub covs: Vec<SymMatrix>,
    /// Largest diagonal loading applied to make a covariance PD (0 if none).
    pub regularization: f64,
}

impl GmmParams {
    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn d(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn n(&self) -> u64 {
        self.counts.total()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct ComponentFile {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// On-disk model schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct ModelFile {
    pub k: usize,
    pub d: usize,
    pub n: u64,
    pub counts: Vec<u64>,
    pub components: Vec<ComponentFile>,
    pub regularization: f64,
}

impl From<&GmmParams> for ModelFile {
    fn from(p: &GmmParams) -> Self {
        Self {
            k: p.k(),
            d: p.d(),
            n: p.n(),
            counts: p.counts.counts().to_vec(),
            components: p
                .means
                .iter()
                .zip(&p.covs)
                .map(|(m, c)| ComponentFile {
                    mean: m.clone(),
                    cov: c.to_rows(),
                })
                .collect(),
            regularization: p.regularization,
        }
    }
}

pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

/// Validates components against `k`/`d` and returns `(means, covs)`.
pub(crate) fn parse_components(
    components: &[ComponentFile],
    k: usize,
    d: usize,
    require_pd: bool,
) -> Result<(Vec<Vec<f64>>, Vec<SymMatrix>)> {
    if components.len() != k {
        return Err(schema(
            "components",
            format!("expected {k} components, found {}", components.len()),
        ));
    }
    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for (i, c) in components.iter().enumerate() {
        if c.mean.len() != d {
            return Err(schema(
                format!("components[{i}].mean"),
                format!("expected length {d}, found {}", c.mean.len()),
            ));
        }
        if c.cov.len() != d || c.cov.iter().any(|r| r.len() != d) {
            return Err(schema(format!("components[{i}].cov"), format!("expected {d}x{d}")));
        }
        let cov = SymMatrix::from_rows(&c.cov)
            .map_err(|e| schema(format!("components[{i}].cov"), e.to_string()))?;
        if require_pd && !linalg::is_positive_definite(&cov) {
            return Err(schema(format!("components[{i}].cov"), "not positive definite"));
        }
        means.push(c.mean.clone());
        covs.push(cov);
    }
    Ok((means, covs))
}

impl TryFrom<ModelFile> for GmmParams {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.counts.len() != f.k {
            return Err(schema("counts", format!("expected {} entries", f.k)));
        }
        let counts = WeightCounts::new(f.counts).map_err(|e| schema("counts", e.to_string()))?;
        if counts.total() != f.n {
            return Err(schema("n", "counts do not sum to n"));
        }
        let (means, covs) = parse_components(&f.components, f.k, f.d, true)?;
        Ok(Self {
            counts,
            means,
            covs,
            regularization: f.regularization,
        })
    }
}

/// Makes `cov` PD by diagonal loading when the Cholesky check fails.
/// Returns the loaded matrix and the loading used (0 when untouched).
pub(crate) fn regularize(cov: SymMatrix) -> (SymMatrix, f64) {
    if linalg::is_positive_definite(&cov) {
        return (cov, 0.0);
    }
    let d = cov.dim() as f64;
    let mut rho = (1e-8 * cov.trace() / d).max(1e-12);
    loop {
        let loaded = cov.add_diagonal(rho);
        if linalg::is_positive_definite(&loaded) {
            return (loaded, rho);
        }
        rho *= 10.0;
    }
}

/// Class frequencies, class means and class sample covariances
/// (denominator `N_k − 1`).
pub fn fit_gmm(data: &LabeledDataset) -> Result<GmmParams> {
    let sizes = data.class_sizes();
    if let Some(class) = sizes.iter().position(|&s| s < 2) {
        return Err(Error::DegenerateClass {
            class: class + 1,
            size: sizes[class] as usize,
        });
    }
    let (k, d) = (data.k(), data.d());
    let mut means = vec![vec![0.0; d]; k];
    for (p, &l) in data.points().iter().zip(data.labels()) {
        for (m, v) in means[l - 1].iter_mut().zip(p) {
            *m += v;
        }
    }
    for (m, &s) in means.iter_mut().zip(&sizes) {
        m.iter_mut().for_each(|v| *v /= s as f64);
    }
    let mut scatter = vec![vec![0.0; d * d]; k];
    for (p, &l) in data.points().iter().zip(data.labels()) {
        let c = &means[l - 1];
        let s = &mut scatter[l - 1];
        for i in 0..d {
            let di = p[i] - c[i];
            for j in i..d {
                s[i * d + j] += di * (p[j] - c[j]);
            }
        }
    }
    let mut covs = Vec::with_capacity(k);
    let mut regularization: f64 = 0.0;
    for (s, &size) in scatter.iter().zip(&sizes) {
        let denom = (size - 1) as f64;
        let cov = SymMatrix::from_fn(d, |i, j| s[i * d + j] / denom);
        let (cov, rho) = regularize(cov);
        regularization = regularization.max(rho);
        covs.push(cov);
    }
    Ok(GmmParams {
        counts: WeightCounts::new(sizes)?,
        means,
        covs,
        regularization,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding. Returns 1-based labels, numbered
/// in order of first appearance; every cluster is nonempty.
pub fn kmeans_label(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || n < k {
        return Err(Error::InvalidArgument(format!(
            "k-means needs 1 <= k <= N, got k = {k}, N = {n}"
        )));
    }
    let mut rng = rng::stream(seed, rng::Purpose::KMeans, 0);

    // k-means++ seeding; falls back to the farthest point when all
    // remaining points coincide with a center.
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            centers.len()
        };
        centers.push(points[idx].clone());
        for (dv, p) in dist.iter_mut().zip(points) {
            *dv = dv.min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(p, &centers[a]).total_cmp(&sq_dist(p, &centers[b])))
                .unwrap_or(0);
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        // Re-seed empty clusters with the point farthest from its center.
        loop {
            let mut sizes = vec![0usize; k];
            assign.iter().for_each(|&a| sizes[a] += 1);
            let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                break;
            };
            let far = (0..n)
                .filter(|&i| sizes[assign[i]] > 1)
                .max_by(|&a, &b| {
                    sq_dist(&points[a], &centers[assign[a]])
                        .total_cmp(&sq_dist(&points[b], &centers[assign[b]]))
                })
                .expect("n >= k guarantees a cluster with two members");
            assign[far] = empty;
            centers[empty] = points[far].clone();
            changed = true;
        }
        let d = points[0].len();
        let mut sums = vec![vec![0.0; d]; k];
        let mut sizes = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            sizes[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            centers[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
        }
        if !changed {
            break;
        }
    }

    let mut relabel = vec![0usize; k];
    let mut next = 1;
    Ok(assign
        .iter()
        .map(|&a| {
            if relabel[a] == 0 {
                relabel[a] = next;
                next += 1;
            }
            relabel[a]
        })
        .collect())
}
