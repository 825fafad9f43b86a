//! Generalized symmetric eigenproblem `K φ = λ M φ` for the eigenvalues
//! nearest a shift `σ`.
//!
//! Small systems use a dense Cholesky reduction; larger ones use shift-invert
//! Lanczos on `(K − σM)⁻¹M` in the M-inner product with full
//! reorthogonalization. Both paths factor `K − σM` first so that a shift
//! sitting on an eigenvalue is reported instead of silently returning noise.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::sparse::{reverse_cuthill_mckee, CsrMatrix, SkylineLdl};
use super::FemError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Systems with fewer DOFs than this are solved densely.
    pub dense_threshold: usize,
    /// Acceptance bound on the relative residual of every returned pair.
    pub tolerance: f64,
    /// Seed of the Lanczos start vector.
    pub seed: u64,
    /// Initial Lanczos subspace size; zero picks `max(2k + 20, k + 40)`.
    pub initial_subspace: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { dense_threshold: 3000, tolerance: 1e-8, seed: 0x5eed, initial_subspace: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    /// `ω²` (rad²/s²).
    pub lambda: f64,
    /// M-normalized eigenvector on the reduced DOFs; its largest-magnitude
    /// component is positive.
    pub vector: Vec<f64>,
    /// `‖Kφ − λMφ‖ / (‖Kφ‖ + (|λ| + |σ|)‖Mφ‖)`.
    pub residual: f64,
}

impl EigenPair {
    pub fn omega(&self) -> f64 {
        self.lambda.max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSolution {
    /// Sorted ascending in `λ`.
    pub pairs: Vec<EigenPair>,
    pub path: SolverPath,
    /// Final Lanczos subspace size (the full dimension on the dense path).
    pub subspace: usize,
    /// Eigenvalues of the pencil below the shift (Sylvester inertia).
    pub below_shift: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn residual(k: &CsrMatrix, m: &CsrMatrix, lambda: f64, shift: f64, phi: &[f64]) -> f64 {
    let kp = k.mul(phi);
    let mp = m.mul(phi);
    let r: Vec<f64> = kp.iter().zip(&mp).map(|(a, b)| a - lambda * b).collect();
    let denom = norm(&kp) + (lambda.abs() + shift.abs()) * norm(&mp);
    if denom == 0.0 {
        return norm(&r);
    }
    norm(&r) / denom
}

fn fix_sign(v: &mut [f64]) {
    let idx = v.iter().enumerate().fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
    if v[idx] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Returns the `n_modes` eigenpairs nearest `shift` (rad²/s²), sorted
/// ascending.
pub fn solve_eigenmodes(k: &CsrMatrix, m: &CsrMatrix, n_modes: usize, shift: f64, opts: &SolverOptions) -> Result<EigenSolution, FemError> {
    let n = k.dim();
    if m.dim() != n {
        return Err(FemError::ShapeMismatch { expected: n, got: m.dim() });
    }
    if n_modes == 0 || n_modes > n {
        return Err(FemError::InvalidRequest(format!("cannot compute {n_modes} modes of a {n}-DOF system")));
    }
    if !shift.is_finite() {
        return Err(FemError::InvalidRequest("shift must be finite".into()));
    }
    let op = Operator::new(k, m, shift)?;
    let below = op.ldl.negative_pivots();
    if n < opts.dense_threshold {
        dense(k, m, n_modes, shift, opts, below)
    } else {
        lanczos(k, m, op, n_modes, shift, opts, below)
    }
}

fn finish(
    k: &CsrMatrix,
    m: &CsrMatrix,
    mut candidates: Vec<(f64, Vec<f64>)>,
    n_modes: usize,
    shift: f64,
    opts: &SolverOptions,
) -> (Vec<EigenPair>, usize, f64) {
    candidates.sort_by(|a, b| (a.0 - shift).abs().total_cmp(&(b.0 - shift).abs()));
    candidates.truncate(n_modes);
    let mut pairs: Vec<EigenPair> = candidates
        .into_iter()
        .map(|(lambda, mut v)| {
            let mn = m.quad_form(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= mn);
            fix_sign(&mut v);
            let res = residual(k, m, lambda, shift, &v);
            EigenPair { lambda, vector: v, residual: res }
        })
        .collect();
    pairs.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let converged = pairs.iter().filter(|p| p.residual < opts.tolerance).count();
    let worst = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
    (pairs, converged, worst)
}

fn dense(k: &CsrMatrix, m: &CsrMatrix, n_modes: usize, shift: f64, opts: &SolverOptions, below: usize) -> Result<EigenSolution, FemError> {
    let n = k.dim();
    let chol = m.to_dense().cholesky().ok_or_else(|| FemError::NotPositiveDefinite("mass matrix Cholesky failed".into()))?;
    let l = chol.l();
    // A = L⁻¹ K L⁻ᵀ
    let kd = k.to_dense();
    let x = l.solve_lower_triangular(&kd).expect("nonsingular Cholesky factor");
    let a = l.solve_lower_triangular(&x.transpose()).expect("nonsingular Cholesky factor");
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let lt = l.transpose();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| (eig.eigenvalues[i] - shift).abs().total_cmp(&(eig.eigenvalues[j] - shift).abs()));
    let candidates: Vec<(f64, Vec<f64>)> = order[..n_modes]
        .iter()
        .map(|&i| {
            let y: DVector<f64> = eig.eigenvectors.column(i).into_owned();
            let phi = lt.solve_upper_triangular(&y).expect("nonsingular Cholesky factor");
            (eig.eigenvalues[i], phi.as_slice().to_vec())
        })
        .collect();
    let (pairs, converged, worst) = finish(k, m, candidates, n_modes, shift, opts);
    if converged < n_modes {
        return Err(FemError::ConvergenceFailure { requested: n_modes, converged, worst_residual: worst, subspace: n, attempts: 1 });
    }
    Ok(EigenSolution { pairs, path: SolverPath::Dense, subspace: n, below_shift: below })
}

/// Factorization of `K − σM` used as the shift-invert operator.
struct Operator {
    ldl: SkylineLdl,
    center: f64,
}

impl Operator {
    fn new(k: &CsrMatrix, m: &CsrMatrix, center: f64) -> Result<Self, FemError> {
        let shifted = k.add_scaled(-center, m);
        let perm = reverse_cuthill_mckee(&shifted);
        Ok(Operator { ldl: SkylineLdl::factor(&shifted, perm)?, center })
    }

    fn solve(&self, b: &[f64], x: &mut [f64]) {
        self.ldl.solve(b, x);
    }
}

/// A new operator center halfway between the Ritz value closest to the
/// current center and its nearest neighbour, when that Ritz value sits so
/// close to the center that the operator norm swamps the other modes.
fn recenter(candidates: &[(f64, Vec<f64>)], center: f64) -> Option<f64> {
    let mut lambdas: Vec<f64> = candidates.iter().map(|c| c.0).collect();
    lambdas.sort_by(f64::total_cmp);
    let (i, &near) = lambdas.iter().enumerate().min_by(|a, b| (a.1 - center).abs().total_cmp(&(b.1 - center).abs()))?;
    let neighbour = [i.checked_sub(1), (i + 1 < lambdas.len()).then_some(i + 1)]
        .into_iter()
        .flatten()
        .map(|j| lambdas[j])
        .min_by(|a, b| (a - near).abs().total_cmp(&(b - near).abs()))?;
    let gap = (neighbour - near).abs();
    ((near - center).abs() < 0.1 * gap).then_some(0.5 * (near + neighbour))
}

fn lanczos(
    k: &CsrMatrix,
    m: &CsrMatrix,
    initial: Operator,
    n_modes: usize,
    shift: f64,
    opts: &SolverOptions,
    below: usize,
) -> Result<EigenSolution, FemError> {
    let n = k.dim();
    let mut size = if opts.initial_subspace > 0 { opts.initial_subspace } else { (2 * n_modes + 20).max(n_modes + 40) };
    size = size.min(n);
    let mut op = initial;
    let mut recentered = false;
    let mut attempts = 0;
    loop {
        attempts += 1;
        let candidates = lanczos_run(m, &op, size, opts.seed)?;
        let center = op.center;
        let (pairs, converged, worst) = finish(k, m, candidates.clone(), n_modes, shift, opts);
        if converged == n_modes {
            return Ok(EigenSolution { pairs, path: SolverPath::Lanczos, subspace: size, below_shift: below });
        }
        if !recentered {
            if let Some(c) = recenter(&candidates, center) {
                recentered = true;
                if let Ok(next) = Operator::new(k, m, c) {
                    op = next;
                    continue;
                }
            }
        }
        if size == n || attempts >= 8 {
            return Err(FemError::ConvergenceFailure { requested: n_modes, converged, worst_residual: worst, subspace: size, attempts });
        }
        size = (2 * size).min(n);
    }
}

/// One Lanczos pass of `size` steps; returns Ritz pairs `(λ, φ)`.
fn lanczos_run(m: &CsrMatrix, ldl: &Operator, size: usize, seed: u64) -> Result<Vec<(f64, Vec<f64>)>, FemError> {
    let n = m.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(size);
    let mut mq: Vec<Vec<f64>> = Vec::with_capacity(size);
    let mut alpha = Vec::with_capacity(size);
    let mut beta: Vec<f64> = Vec::with_capacity(size);

    let orthogonalize = |w: &mut Vec<f64>, q: &[Vec<f64>], mq: &[Vec<f64>]| {
        for _ in 0..2 {
            for (qi, mqi) in q.iter().zip(mq) {
                let c = dot(mqi, w);
                w.iter_mut().zip(qi).for_each(|(x, y)| *x -= c * y);
            }
        }
    };
    let mut fresh = |q: &[Vec<f64>], mq: &[Vec<f64>]| -> Option<(Vec<f64>, Vec<f64>)> {
        for _ in 0..5 {
            let mut w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            orthogonalize(&mut w, q, mq);
            let mw = m.mul(&w);
            let b = dot(&w, &mw);
            if b > 0.0 && b.is_finite() {
                let s = b.sqrt();
                return Some((w.iter().map(|x| x / s).collect(), mw.iter().map(|x| x / s).collect()));
            }
        }
        None
    };

    let (q0, mq0) = fresh(&q, &mq).ok_or_else(|| FemError::NotPositiveDefinite("mass matrix has no positive direction".into()))?;
    q.push(q0);
    mq.push(mq0);
    let mut w = vec![0.0; n];
    for j in 0..size {
        ldl.solve(&mq[j], &mut w);
        let a = dot(&mq[j], &w);
        alpha.push(a);
        if j + 1 == size {
            break;
        }
        w.iter_mut().zip(&q[j]).for_each(|(x, y)| *x -= a * y);
        if j > 0 {
            let b = beta[j - 1];
            w.iter_mut().zip(&q[j - 1]).for_each(|(x, y)| *x -= b * y);
        }
        orthogonalize(&mut w, &q, &mq);
        let mw = m.mul(&w);
        let b2 = dot(&w, &mw);
        let scale = a.abs().max(beta.last().copied().unwrap_or(0.0));
        if b2 > (1e-10 * scale).powi(2) {
            let b = b2.sqrt();
            beta.push(b);
            q.push(w.iter().map(|x| x / b).collect());
            mq.push(mw.iter().map(|x| x / b).collect());
        } else {
            // invariant subspace found: continue with a new orthogonal block
            match fresh(&q, &mq) {
                Some((qn, mqn)) => {
                    beta.push(0.0);
                    q.push(qn);
                    mq.push(mqn);
                }
                None => break,
            }
        }
    }
    let steps = alpha.len();
    let mut t = DMatrix::zeros(steps, steps);
    for i in 0..steps {
        t[(i, i)] = alpha[i];
        if i + 1 < steps {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut out = Vec::with_capacity(steps);
    for i in 0..steps {
        let theta = eig.eigenvalues[i];
        if theta == 0.0 {
            continue;
        }
        let s = eig.eigenvectors.column(i);
        let mut phi = vec![0.0; n];
        for (qj, &sj) in q.iter().zip(s.iter()) {
            phi.iter_mut().zip(qj).for_each(|(x, y)| *x += sj * y);
        }
        out.push((ldl.center + 1.0 / theta, phi));
    }
    Ok(out)
}
