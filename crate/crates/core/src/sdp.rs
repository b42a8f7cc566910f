//! Log-barrier interior-point solver for the per-class noise subproblem
//!
//! ```text
//! minimize    tr(A X)
//! subject to  X ⪰ c · dᵢ dᵢᵀ   for every constraint vector dᵢ
//!             X ⪰ β · I         (optional isotropic floor)
//! ```
//!
//! The problem is first preconditioned by `Y = Rᵀ X R` with `A = R Rᵀ`, which
//! turns the objective into `tr(Y)` and keeps the solver insensitive to the
//! conditioning of `A`. Each rank-one LMI is handled through
//! `ln det(X − c d dᵀ) = ln det X + ln(1 − c dᵀ X⁻¹ d)`. Newton steps are taken
//! in the congruence-scaled variable `Z = L⁻¹ X L⁻ᵀ` (with `X = L Lᵀ`), which
//! keeps the `ln det` part of the Hessian at the identity.

use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm2, SymMatrix};

/// Total Newton-step budget across all barrier stages.
pub const MAX_NEWTON_STEPS: usize = 200;

/// Barrier growth factor between centering stages.
const BARRIER_GROWTH: f64 = 10.0;

/// Centering stops once half the squared Newton decrement drops below this.
const CENTERING_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    /// Objective weight `A` (PD).
    pub objective: SymMatrix,
    /// Constraint vectors `dᵢ`.
    pub constraints: Vec<Vec<f64>>,
    /// Scale `c` of every rank-one bound.
    pub bound_c: f64,
    /// Isotropic lower bound `β` (0 disables it).
    pub floor: f64,
}

impl SdpProblem {
    pub fn new(objective: SymMatrix, constraints: Vec<Vec<f64>>, bound_c: f64) -> Self {
        Self {
            objective,
            constraints,
            bound_c,
            floor: 0.0,
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    fn max_sq_norm(&self) -> f64 {
        self.constraints.iter().map(|d| dot(d, d)).fold(0.0, f64::max)
    }

    /// `c · dᵀ X⁻¹ d` for every constraint; feasibility means every value ≤ 1.
    pub fn constraint_loads(&self, x: &SymMatrix) -> Result<Vec<f64>> {
        let l = linalg::cholesky(x)?;
        Ok(self
            .constraints
            .iter()
            .map(|d| self.bound_c * l.inverse_quad_form(d))
            .collect())
    }

    /// Largest violation of any constraint at `x`, relative to the
    /// problem's scale `c · max‖dᵢ‖²` (or `β`). Nonpositive means feasible.
    pub fn max_violation(&self, x: &SymMatrix) -> Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        let scale = (self.bound_c * self.max_sq_norm()).max(self.floor);
        for d in &self.constraints {
            let s = x.sub(&SymMatrix::outer(d, self.bound_c));
            let (vals, _) = linalg::jacobi_eigen(&s);
            worst = worst.max(-vals[0] / scale);
        }
        if self.floor > 0.0 {
            let (vals, _) = linalg::jacobi_eigen(x);
            worst = worst.max((self.floor - vals[0]) / scale);
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub x: SymMatrix,
    /// `tr(A X)`.
    pub objective: f64,
    /// Duality-gap bound `θ / t` at the final barrier stage.
    pub gap: f64,
    pub newton_steps: usize,
    /// Number of constraints in the problem actually handed to the barrier.
    pub constraints_used: usize,
}

/// Symmetric basis `E_p` indexed by pairs `(a, b)` with `a ≤ b`.
fn basis(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|a| (a..d).map(move |b| (a, b))).collect()
}

fn pairs(p: (usize, usize)) -> ([(usize, usize); 2], usize) {
    if p.0 == p.1 {
        ([p, p], 1)
    } else {
        ([p, (p.1, p.0)], 2)
    }
}

/// `tr(P E_p Q E_q)` for every pair of basis elements.
fn kron_trace(p: &SymMatrix, q: &SymMatrix, basis: &[(usize, usize)]) -> Vec<f64> {
    let n = basis.len();
    let mut out = vec![0.0; n * n];
    for (i, &bp) in basis.iter().enumerate() {
        let (tp, np) = pairs(bp);
        for (j, &bq) in basis.iter().enumerate() {
            let (tq, nq) = pairs(bq);
            let mut acc = 0.0;
            for &(r, s) in &tp[..np] {
                for &(u, v) in &tq[..nq] {
                    acc += p.get(v, r) * q.get(s, u);
                }
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// `tr(M E_p)`.
fn basis_trace(m: &SymMatrix, basis: &[(usize, usize)]) -> Vec<f64> {
    basis
        .iter()
        .map(|&(a, b)| if a == b { m.get(a, a) } else { 2.0 * m.get(a, b) })
        .collect()
}

fn from_coords(coords: &[f64], basis: &[(usize, usize)], d: usize) -> SymMatrix {
    let mut m = SymMatrix::zeros(d);
    for (&v, &(a, b)) in coords.iter().zip(basis) {
        m.set(a, b, v);
    }
    m
}

/// Dense SPD solve with Jacobi scaling and a ridge fallback.
fn solve_newton_system(h: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    let n = g.len();
    let scale: Vec<f64> = (0..n).map(|i| 1.0 / h[i * n + i].max(f64::MIN_POSITIVE).sqrt()).collect();
    let scaled = SymMatrix::from_fn(n, |i, j| {
        0.5 * (h[i * n + j] + h[j * n + i]) * scale[i] * scale[j]
    });
    let rhs: Vec<f64> = g.iter().zip(&scale).map(|(v, s)| v * s).collect();
    let mut ridge = 0.0;
    for _ in 0..8 {
        let m = if ridge > 0.0 { scaled.add_diagonal(ridge) } else { scaled.clone() };
        if let Some(y) = plain_cholesky_solve(&m, &rhs) {
            return Ok(y.iter().zip(&scale).map(|(v, s)| v * s).collect());
        }
        ridge = if ridge == 0.0 { 1e-14 } else { ridge * 100.0 };
    }
    Err(Error::NumericalFailure("Newton system is not positive definite".into()))
}

/// Cholesky solve accepting any strictly positive pivot.
fn plain_cholesky_solve(m: &SymMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = m.dim();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut pivot = m.get(j, j);
        for k in 0..j {
            pivot -= l[j * n + k] * l[j * n + k];
        }
        if !(pivot > 0.0) || !pivot.is_finite() {
            return None;
        }
        let ljj = pivot.sqrt();
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    Some(x)
}

/// Barrier for the preconditioned problem `min tr(Y)` s.t. `Y ⪰ c eᵢeᵢᵀ`,
/// `Y ⪰ F`.
struct Barrier<'a> {
    constraints: &'a [Vec<f64>],
    c: f64,
    floor: Option<&'a SymMatrix>,
}

impl Barrier<'_> {
    /// Barrier value `t·tr(Y) − Σ ln det(Y − c eᵢeᵢᵀ) − ln det(Y − F)`,
    /// or `None` outside the domain.
    fn value(&self, x: &SymMatrix, t: f64) -> Option<f64> {
        let l = linalg::cholesky(x).ok()?;
        let logdet = l.logdet();
        let mut f = t * x.trace();
        for d in self.constraints {
            let s = 1.0 - self.c * l.inverse_quad_form(d);
            if !(s > 0.0) {
                return None;
            }
            f -= logdet + s.ln();
        }
        if let Some(floor) = self.floor {
            let lf = linalg::cholesky(&x.sub(floor)).ok()?;
            f -= lf.logdet();
        }
        f.is_finite().then_some(f)
    }
}

/// Solves the problem to relative accuracy `tol` on the objective.
pub fn solve(problem: &SdpProblem, tol: f64) -> Result<SdpSolution> {
    let d = problem.dim();
    if !(problem.bound_c > 0.0) || !problem.bound_c.is_finite() {
        return Err(Error::InvalidArgument(format!("bound c must be positive, got {}", problem.bound_c)));
    }
    linalg::cholesky(&problem.objective)?;
    let constraints: Vec<Vec<f64>> = problem
        .constraints
        .iter()
        .filter(|v| v.iter().any(|x| *x != 0.0))
        .cloned()
        .collect();
    if let Some(v) = constraints.iter().find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: v.len() });
    }
    let floor = problem.floor.max(0.0);
    if constraints.is_empty() {
        if floor > 0.0 {
            // tr(AX) ≥ β tr(A) whenever X ⪰ βI and A ⪰ 0.
            let x = SymMatrix::scaled_identity(d, floor);
            return Ok(SdpSolution {
                objective: problem.objective.trace_product(&x),
                x,
                gap: 0.0,
                newton_steps: 0,
                constraints_used: 0,
            });
        }
        return Err(Error::InvalidArgument(
            "problem has no nonzero constraints; the optimum is the zero-noise limit".into(),
        ));
    }

    // Precondition with A = R Rᵀ and Y = Rᵀ X R, so the objective becomes
    // tr(Y), the constraints Y ⪰ c (Rᵀd)(Rᵀd)ᵀ and the floor Y ⪰ β RᵀR.
    let r = linalg::cholesky(&problem.objective)?;
    let rt_mul = |v: &[f64]| -> Vec<f64> { (0..d).map(|i| (i..d).map(|k| r.get(k, i) * v[k]).sum()).collect() };
    let constraints: Vec<Vec<f64>> = constraints.iter().map(|v| rt_mul(v)).collect();
    let floor_matrix = (floor > 0.0)
        .then(|| SymMatrix::from_fn(d, |i, j| floor * (i.max(j)..d).map(|k| r.get(k, i) * r.get(k, j)).sum::<f64>()));
    let (y, steps, t) = solve_preconditioned(&constraints, problem.bound_c, floor_matrix.as_ref(), tol)?;
    // X = R⁻ᵀ Y R⁻¹, so X_ij = uᵢᵀ Y uⱼ with uᵢ = R⁻¹ eᵢ.
    let u: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            r.forward_solve(&e)
        })
        .collect();
    let x = SymMatrix::from_fn(d, |i, j| dot(&u[i], &y.mul_vec(&u[j])));
    let theta = (constraints.len() * d + if floor > 0.0 { d } else { 0 }) as f64;
    Ok(SdpSolution {
        objective: problem.objective.trace_product(&x),
        x,
        gap: theta / t,
        newton_steps: steps,
        constraints_used: constraints.len(),
    })
}

/// Barrier method on the preconditioned problem. Returns `Y`, the Newton
/// steps used and the final barrier parameter `t`.
fn solve_preconditioned(
    constraints: &[Vec<f64>],
    c: f64,
    floor: Option<&SymMatrix>,
    tol: f64,
) -> Result<(SymMatrix, usize, f64)> {
    let d = constraints[0].len();
    let m = constraints.len();
    let theta = (m * d + if floor.is_some() { d } else { 0 }) as f64;
    let start = 2.0 * c * constraints.iter().map(|v| dot(v, v)).fold(0.0, f64::max) + 2.0 * floor.map_or(0.0, |f| f.trace());
    let mut x = SymMatrix::scaled_identity(d, start);
    let barrier = Barrier { constraints, c, floor };
    let basis = basis(d);
    let nb = basis.len();
    let identity = SymMatrix::identity(d);
    let id_kron = kron_trace(&identity, &identity, &basis);

    let mut t = (theta / x.trace()).max(f64::MIN_POSITIVE);
    let mut steps = 0;
    loop {
        // Centering.
        let mut prev_decrement = f64::INFINITY;
        loop {
            let l = linalg::cholesky(&x)?;
            // Scaled objective Lᵀ L.
            let a_scaled = SymMatrix::from_fn(d, |i, j| (i.max(j)..d).map(|k| l.get(k, i) * l.get(k, j)).sum());

            let mut u = SymMatrix::zeros(d);
            let mut hess = id_kron.iter().map(|v| v * m as f64).collect::<Vec<f64>>();
            let mut grad_barrier = basis_trace(&identity, &basis)
                .iter()
                .map(|v| v * m as f64)
                .collect::<Vec<f64>>();
            for v in constraints {
                let w = l.forward_solve(v);
                let s = 1.0 - c * dot(&w, &w);
                let alpha = c / s;
                for i in 0..d {
                    for j in i..d {
                        let val = u.get(i, j) + alpha * w[i] * w[j];
                        u.set(i, j, val);
                    }
                }
                let ww: Vec<f64> = basis
                    .iter()
                    .map(|&(a, b)| if a == b { w[a] * w[a] } else { 2.0 * w[a] * w[b] })
                    .collect();
                let a2 = alpha * alpha;
                for p in 0..nb {
                    let sp = a2 * ww[p];
                    for q in 0..nb {
                        hess[p * nb + q] += sp * ww[q];
                    }
                }
            }
            let cross = kron_trace(&u, &identity, &basis);
            for p in 0..nb {
                for q in 0..nb {
                    hess[p * nb + q] += cross[p * nb + q] + cross[q * nb + p];
                }
            }
            for (gb, ut) in grad_barrier.iter_mut().zip(basis_trace(&u, &basis)) {
                *gb += ut;
            }
            if let Some(f) = floor {
                // Z ⪰ L⁻¹ F L⁻ᵀ in scaled coordinates.
                let w: Vec<Vec<f64>> = (0..d)
                    .map(|j| l.forward_solve(&(0..d).map(|i| f.get(i, j)).collect::<Vec<f64>>()))
                    .collect();
                let rows: Vec<Vec<f64>> = (0..d)
                    .map(|i| l.forward_solve(&(0..d).map(|j| w[j][i]).collect::<Vec<f64>>()))
                    .collect();
                let g = SymMatrix::from_fn(d, |i, j| 0.5 * (rows[i][j] + rows[j][i]));
                let pf = linalg::inverse_spd(&identity.sub(&g))
                    .map_err(|_| Error::NumericalFailure("left the floor constraint's domain".into()))?;
                let kf = kron_trace(&pf, &pf, &basis);
                for (h, k) in hess.iter_mut().zip(&kf) {
                    *h += k;
                }
                for (gb, ft) in grad_barrier.iter_mut().zip(basis_trace(&pf, &basis)) {
                    *gb += ft;
                }
            }
            let grad: Vec<f64> = basis_trace(&a_scaled, &basis)
                .iter()
                .zip(&grad_barrier)
                .map(|(a, b)| t * a - b)
                .collect();
            let neg: Vec<f64> = grad.iter().map(|v| -v).collect();
            let step = solve_newton_system(&hess, &neg)?;
            let decrement = -dot(&grad, &step);
            // Stagnation at a tiny decrement means rounding noise dominates.
            if decrement / 2.0 <= CENTERING_TOL || (decrement < 1e-6 && decrement >= 0.5 * prev_decrement) {
                break;
            }
            prev_decrement = decrement;
            steps += 1;
            if steps > MAX_NEWTON_STEPS {
                return Err(Error::NumericalFailure(format!(
                    "barrier Newton did not converge within {MAX_NEWTON_STEPS} steps"
                )));
            }
            // Map the scaled step back: ΔX = L ΔZ Lᵀ.
            let dz = from_coords(&step, &basis, d);
            let mut ldz = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    ldz[i * d + j] = (0..=i).map(|k| l.get(i, k) * dz.get(k, j)).sum();
                }
            }
            let dx = SymMatrix::from_fn(d, |i, j| (0..=j).map(|k| ldz[i * d + k] * l.get(j, k)).sum());

            let f0 = barrier
                .value(&x, t)
                .ok_or_else(|| Error::NumericalFailure("iterate left the barrier domain".into()))?;
            let slope = dot(&grad, &step);
            let mut alpha = 1.0;
            let mut accepted = false;
            if decrement < 0.0625 {
                // Inside the quadratic-convergence region a full step is
                // taken whenever it stays in the domain.
                let trial = x.add(&dx);
                if barrier.value(&trial, t).is_some() {
                    x = trial;
                    continue;
                }
            }
            for _ in 0..60 {
                let trial = x.add(&dx.scaled(alpha));
                if let Some(f1) = barrier.value(&trial, t) {
                    if f1 <= f0 + 0.25 * alpha * slope {
                        x = trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                // No further decrease is representable; treat as centered.
                break;
            }
        }
        if theta / t <= tol * x.trace() {
            return Ok((x, steps, t));
        }
        t *= BARRIER_GROWTH;
    }
}

/// Canonical sign for a direction: first nonzero entry positive.
fn canonical(v: &[f64]) -> Vec<f64> {
    let sign = v.iter().find(|x| **x != 0.0).map_or(1.0, |x| x.signum());
    v.iter().map(|x| x * sign).collect()
}

/// Drops zero, duplicate and dominated constraints.
///
/// `dⱼ = α dᵢ` with `|α| ≤ 1` gives `c dⱼdⱼᵀ ⪯ c dᵢdᵢᵀ`, so `dⱼ` can never
/// be binding.
pub fn dedup_constraints(constraints: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut vs: Vec<Vec<f64>> = constraints
        .iter()
        .filter(|v| v.iter().any(|x| *x != 0.0))
        .map(|v| canonical(v))
        .collect();
    // Longest first so that dominated vectors meet their dominator early.
    vs.sort_by(|a, b| dot(b, b).total_cmp(&dot(a, a)).then_with(|| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    }));
    vs.dedup();
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    let mut units: Vec<(Vec<f64>, f64)> = Vec::new();
    'outer: for v in vs {
        let n = norm2(&v);
        let unit: Vec<f64> = v.iter().map(|x| x / n).collect();
        for (u, un) in &units {
            if *un >= n && (dot(u, &unit) - 1.0).abs() <= 1e-14 {
                continue 'outer;
            }
        }
        units.push((unit, n));
        kept.push(v);
    }
    kept
}

/// Keeps the `keep` constraints with the largest load `c · dᵢᵀ X⁻¹ dᵢ` at
/// `x_current`, after removing duplicates and dominated vectors.
pub fn prune_constraints(problem: &SdpProblem, x_current: &SymMatrix, keep: usize) -> Result<SdpProblem> {
    let unique = dedup_constraints(&problem.constraints);
    let l = linalg::cholesky(x_current)?;
    let mut scored: Vec<(f64, Vec<f64>)> = unique
        .into_iter()
        .map(|v| (problem.bound_c * l.inverse_quad_form(&v), v))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.truncate(keep.max(problem.dim()));
    Ok(SdpProblem {
        objective: problem.objective.clone(),
        constraints: scored.into_iter().map(|(_, v)| v).collect(),
        bound_c: problem.bound_c,
        floor: problem.floor,
    })
}

/// Active-set wrapper around [`solve`]: solve on a pruned subset, then
/// re-add every violated constraint and re-solve until all original
/// constraints hold strictly.
pub fn solve_active_set(problem: &SdpProblem, tol: f64, keep: usize) -> Result<SdpSolution> {
    let unique = dedup_constraints(&problem.constraints);
    let full = SdpProblem {
        constraints: unique,
        ..problem.clone()
    };
    let d = full.dim();
    let keep = keep.max(d * (d + 1));
    if full.constraints.len() <= keep {
        return solve(&full, tol);
    }
    // Rank by c·dᵀ A d, the optimum each constraint would reach on its own.
    let start = linalg::inverse_spd(&full.objective)?;
    let mut active = prune_constraints(&full, &start, keep)?;
    let mut steps = 0;
    loop {
        let mut sol = solve(&active, tol)?;
        steps += sol.newton_steps;
        let l = linalg::cholesky(&sol.x)?;
        let mut violated: Vec<(f64, &Vec<f64>)> = full
            .constraints
            .iter()
            .map(|v| (full.bound_c * l.inverse_quad_form(v), v))
            .filter(|(load, _)| *load >= 1.0)
            .collect();
        if violated.is_empty() {
            sol.newton_steps = steps;
            return Ok(sol);
        }
        violated.sort_by(|a, b| b.0.total_cmp(&a.0));
        for (_, v) in violated.into_iter().take(keep.max(d)) {
            if !active.constraints.contains(v) {
                active.constraints.push(v.clone());
            }
        }
    }
}
