//! Dense symmetric kernels for small dimensions.
//!
//! Everything here is deterministic and permutation-free: the same input
//! always produces bit-identical output, which the seeded release depends on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pivot tolerance for Cholesky, scaled by the largest diagonal.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// A real symmetric matrix stored densely in row-major order.
///
/// Every constructor mirrors or validates so that `get(i, j) == get(j, i)`
/// holds bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = scale;
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * dim + i] = v;
        }
        m
    }

    /// Builds a matrix from the upper triangle of `f(i, j)` (`i <= j`).
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds a matrix from rows, rejecting anything not exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
        }
        for i in 0..dim {
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::Domain(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            dim,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    /// Symmetrizes an arbitrary square matrix as `(m + mᵀ) / 2`.
    pub fn symmetrize(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Domain("matrix is not square".into()));
        }
        Ok(Self::from_fn(dim, |i, j| 0.5 * (rows[i][j] + rows[j][i])))
    }

    /// `scale * v vᵀ`.
    pub fn outer(v: &[f64], scale: f64) -> Self {
        Self::from_fn(v.len(), |i, j| scale * v[i] * v[j])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.dim + j] = value;
        self.data[j * self.dim + i] = value;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.get(i, i))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// Adds `scale` to every diagonal entry.
    pub fn add_diagonal(&self, scale: f64) -> Self {
        let mut m = self.clone();
        for i in 0..self.dim {
            m.data[i * self.dim + i] += scale;
        }
        m
    }

    /// `tr(self · other)` for two symmetric matrices.
    pub fn trace_product(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.dim)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `vᵀ M v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.mul_vec(v))
    }

    /// `A M A` for symmetric `A`; the result is symmetric.
    pub fn sandwich(&self, a: &Self) -> Self {
        let d = self.dim;
        let am = matmul(&a.data, &self.data, d);
        let ama = matmul(&am, &a.data, d);
        Self::from_fn(d, |i, j| 0.5 * (ama[i * d + j] + ama[j * d + i]))
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.to_rows()
    }
}

/// Dense row-major product of two `d × d` matrices.
pub(crate) fn matmul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = M`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular {
    dim: usize,
    data: Vec<f64>,
}

impl LowerTriangular {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// `L z`.
    pub fn mul_vec(&self, z: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..=i).map(|j| self.get(i, j) * z[j]).sum())
            .collect()
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        let d = self.dim;
        SymMatrix::from_fn(d, |i, j| (0..=i.min(j)).map(|k| self.get(i, k) * self.get(j, k)).sum())
    }

    /// Solves `L y = b`.
    pub fn forward_solve(&self, b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut y = vec![0.0; d];
        for i in 0..d {
            let s: f64 = (0..i).map(|j| self.get(i, j) * y[j]).sum();
            y[i] = (b[i] - s) / self.get(i, i);
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn backward_solve(&self, y: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut x = vec![0.0; d];
        for i in (0..d).rev() {
            let s: f64 = (i + 1..d).map(|j| self.get(j, i) * x[j]).sum();
            x[i] = (y[i] - s) / self.get(i, i);
        }
        x
    }

    /// Solves `L Lᵀ x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward_solve(&self.forward_solve(b))
    }

    /// `bᵀ (L Lᵀ)⁻¹ b` computed as `‖L⁻¹ b‖²`.
    pub fn inverse_quad_form(&self, b: &[f64]) -> f64 {
        let y = self.forward_solve(b);
        dot(&y, &y)
    }

    pub fn logdet(&self) -> f64 {
        2.0 * self.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// `(L Lᵀ)⁻¹`.
    pub fn inverse(&self) -> SymMatrix {
        let d = self.dim;
        let mut cols = Vec::with_capacity(d);
        for j in 0..d {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            cols.push(self.solve(&e));
        }
        SymMatrix::from_fn(d, |i, j| 0.5 * (cols[j][i] + cols[i][j]))
    }
}

/// Cholesky factorization without pivoting.
///
/// Fails with `NotPositiveDefinite` as soon as a pivot drops to
/// `PIVOT_TOLERANCE · max diagonal` or below.
pub fn cholesky(m: &SymMatrix) -> Result<LowerTriangular> {
    let d = m.dim();
    let max_diag = m.max_diagonal();
    if d == 0 {
        return Ok(LowerTriangular { dim: 0, data: vec![] });
    }
    if !(max_diag > 0.0) || !max_diag.is_finite() {
        return Err(Error::NotPositiveDefinite { pivot: 0 });
    }
    let tol = PIVOT_TOLERANCE * max_diag;
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let mut pivot = m.get(j, j);
        for k in 0..j {
            pivot -= l[j * d + k] * l[j * d + k];
        }
        if !(pivot > tol) {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = pivot.sqrt();
        l[j * d + j] = ljj;
        for i in j + 1..d {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = s / ljj;
        }
    }
    Ok(LowerTriangular { dim: d, data: l })
}

pub fn is_positive_definite(m: &SymMatrix) -> bool {
    cholesky(m).is_ok()
}

/// Inverse of a PD matrix. PD-ness is checked with Cholesky; the inverse
/// itself comes from a square-root-free `L D Lᵀ` factorization so that
/// diagonal inputs invert exactly.
pub fn inverse_spd(m: &SymMatrix) -> Result<SymMatrix> {
    cholesky(m)?;
    let d = m.dim();
    let mut l = vec![0.0; d * d];
    let mut diag = vec![0.0; d];
    for j in 0..d {
        let mut dj = m.get(j, j);
        for k in 0..j {
            dj -= l[j * d + k] * l[j * d + k] * diag[k];
        }
        diag[j] = dj;
        l[j * d + j] = 1.0;
        for i in j + 1..d {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k] * diag[k];
            }
            l[i * d + j] = s / dj;
        }
    }
    let mut cols = Vec::with_capacity(d);
    for c in 0..d {
        let mut y = vec![0.0; d];
        for i in 0..d {
            let s: f64 = (0..i).map(|k| l[i * d + k] * y[k]).sum();
            y[i] = if i == c { 1.0 } else { 0.0 } - s;
        }
        for (yi, di) in y.iter_mut().zip(&diag) {
            *yi /= di;
        }
        let mut x = vec![0.0; d];
        for i in (0..d).rev() {
            let s: f64 = (i + 1..d).map(|k| l[k * d + i] * x[k]).sum();
            x[i] = y[i] - s;
        }
        cols.push(x);
    }
    Ok(SymMatrix::from_fn(d, |i, j| 0.5 * (cols[j][i] + cols[i][j])))
}

pub fn logdet_spd(m: &SymMatrix) -> Result<f64> {
    Ok(cholesky(m)?.logdet())
}

/// Scalar digamma for `x > 0`: upward recurrence to `x ≥ 10`, then the
/// asymptotic series through the `x⁻¹⁴` term.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("digamma requires x > 0, got {x}")));
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let f = 1.0 / (x * x);
    let series = f
        * (1.0 / 12.0
            - f * (1.0 / 120.0
                - f * (1.0 / 252.0
                    - f * (1.0 / 240.0
                        - f * (1.0 / 132.0 - f * (691.0 / 32760.0 - f / 12.0))))));
    Ok(acc + x.ln() - 0.5 / x - series)
}

/// Multivariate digamma `ψ_d(a) = Σ_{j=1..d} ψ(a + (1 − j)/2)`, defined for
/// `a > (d − 1)/2`.
pub fn multivariate_digamma(a: f64, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::Domain("multivariate digamma needs d ≥ 1".into()));
    }
    if !(a > (d as f64 - 1.0) / 2.0) {
        return Err(Error::Domain(format!(
            "multivariate digamma requires a > (d-1)/2, got a = {a}, d = {d}"
        )));
    }
    (1..=d).map(|j| digamma(a + (1.0 - j as f64) / 2.0)).sum()
}

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order with matching unit eigenvectors.
/// Only used for audits and as a test oracle.
pub fn jacobi_eigen(m: &SymMatrix) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = m.dim();
    let mut a = m.as_slice().to_vec();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * d + j] * a[i * d + j])
            .sum();
        let scale: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[i * d + i].total_cmp(&a[j * d + j]));
    let values = order.iter().map(|&i| a[i * d + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..d).map(|k| v[k * d + i]).collect())
        .collect();
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut impl Rng, d: usize) -> SymMatrix {
        let a: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        SymMatrix::from_fn(d, |i, j| {
            (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum::<f64>() + if i == j { 0.1 } else { 0.0 }
        })
    }

    #[test]
    fn cholesky_identity() {
        let l = cholesky(&SymMatrix::identity(3)).unwrap();
        assert_eq!(l.reconstruct(), SymMatrix::identity(3));
        assert_eq!(l.diagonal(), vec![1.0; 3]);
    }

    #[test]
    fn cholesky_two_by_two() {
        let m = SymMatrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let l = cholesky(&m).unwrap();
        assert_eq!(l.get(0, 0), 2.0);
        assert_eq!(l.get(1, 0), 1.0);
        assert!((l.get(1, 1) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(l.get(0, 1), 0.0);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&m), Err(Error::NotPositiveDefinite { pivot: 1 })));
    }

    #[test]
    fn pivot_tolerance_is_relative() {
        // Same rank deficiency at two very different scales.
        let tiny = SymMatrix::from_rows(&[vec![1e-20, 0.0], vec![0.0, 1e-40]]).unwrap();
        assert!(cholesky(&tiny).is_err());
        let small = SymMatrix::diagonal(&[1e-20, 1e-25]);
        assert!(cholesky(&small).is_ok());
    }

    #[test]
    fn from_rows_rejects_asymmetry() {
        assert!(SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.5, 1.0]]).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(inverse_spd(&SymMatrix::identity(4)).unwrap(), SymMatrix::identity(4));
        let inv = inverse_spd(&SymMatrix::diagonal(&[2.0, 4.0])).unwrap();
        assert_eq!(inv, SymMatrix::diagonal(&[0.5, 0.25]));
    }

    #[test]
    fn inverse_multiplies_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in 1..=8 {
            let a = random_spd(&mut rng, d);
            let b = inverse_spd(&a).unwrap();
            let ab = matmul(a.as_slice(), b.as_slice(), d);
            for i in 0..d {
                for j in 0..d {
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((ab[i * d + j] - target).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn logdet_examples() {
        assert_eq!(logdet_spd(&SymMatrix::identity(5)).unwrap(), 0.0);
        let m = SymMatrix::diagonal(&[1f64.exp(), 2f64.exp()]);
        assert!((logdet_spd(&m).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn logdet_matches_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in 1..=6 {
            let a = random_spd(&mut rng, d);
            let (vals, _) = jacobi_eigen(&a);
            let oracle: f64 = vals.iter().map(|v| v.ln()).sum();
            assert!((logdet_spd(&a).unwrap() - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn jacobi_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spd(&mut rng, 5);
        let (vals, vecs) = jacobi_eigen(&a);
        let rebuilt = SymMatrix::from_fn(5, |i, j| {
            (0..5).map(|k| vals[k] * vecs[k][i] * vecs[k][j]).sum()
        });
        assert!(rebuilt.sub(&a).max_abs() < 1e-12);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn digamma_reference_values() {
        let euler = 0.577_215_664_901_532_9;
        assert!((multivariate_digamma(1.0, 1).unwrap() + euler).abs() < 1e-10);
        let psi_half = 2.0 - euler - 2.0 * 2f64.ln();
        assert!((multivariate_digamma(1.5, 1).unwrap() - psi_half).abs() < 1e-10);
        assert!((multivariate_digamma(1.5, 1).unwrap() - 0.036_489_974_0).abs() < 1e-10);
        assert!((multivariate_digamma(1.5, 2).unwrap() - (-0.540_725_690_9)).abs() < 1e-10);
    }

    #[test]
    fn digamma_domain() {
        assert!(matches!(multivariate_digamma(0.5, 2), Err(Error::Domain(_))));
        assert!(multivariate_digamma(0.51, 2).is_ok());
        assert!(digamma(0.0).is_err());
    }

    #[test]
    fn sandwich_and_trace_product() {
        let a = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let m = SymMatrix::identity(2);
        let s = m.sandwich(&a);
        // A·I·A = A²
        assert_eq!(s.to_rows(), vec![vec![5.0, 5.0], vec![5.0, 10.0]]);
        assert_eq!(a.trace_product(&m), 5.0);
    }

    #[test]
    fn digamma_matches_reference_implementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let a: f64 = rng.random_range(0.5..20.0);
            let oracle = statrs::function::gamma::digamma(a);
            assert!((multivariate_digamma(a, 1).unwrap() - oracle).abs() < 1e-10, "a = {a}");
        }
    }

    /// Random SPD matrix with eigenvalues spread over `[1, cond]`.
    fn conditioned_spd(rng: &mut impl Rng, d: usize, cond: f64) -> SymMatrix {
        let g = random_spd(rng, d);
        let (_, q) = jacobi_eigen(&g);
        let vals: Vec<f64> = (0..d)
            .map(|i| if d == 1 { 1.0 } else { cond.powf(i as f64 / (d - 1) as f64) })
            .collect();
        SymMatrix::from_fn(d, |i, j| (0..d).map(|k| vals[k] * q[k][i] * q[k][j]).sum())
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn cholesky_multiply_back(seed in proptest::prelude::any::<u64>(), d in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_spd(&mut rng, d);
            let rebuilt = cholesky(&a).unwrap().reconstruct();
            proptest::prop_assert!(rebuilt.sub(&a).frobenius() <= 1e-10 * a.frobenius());
        }

        #[test]
        fn logdet_of_inverse_cancels(seed in proptest::prelude::any::<u64>(), d in 1usize..8, log_cond in 0.0f64..6.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = conditioned_spd(&mut rng, d, 10f64.powf(log_cond));
            let inv = inverse_spd(&a).unwrap();
            let sum = logdet_spd(&a).unwrap() + logdet_spd(&inv).unwrap();
            proptest::prop_assert!(sum.abs() <= 1e-8, "sum = {}", sum);
        }
    }
}
