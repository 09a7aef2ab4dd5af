//! Deterministic thin singular value decomposition.
//!
//! The factorization runs Householder QR first, then orthogonalizes the
//! columns of the triangular factor with a cyclic one-sided Jacobi sweep.
//! Every loop visits pairs in a fixed order and ties break by index, so the
//! same input always produces bit-identical factors — a property the rest of
//! the crate leans on for reproducible pipelines.
//!
//! A symmetric Jacobi eigensolver ([`sym_eigen_desc`]) is exposed as well; it
//! backs the Gram-matrix fast paths where forming the smaller of MMᵀ / MᵀM is
//! cheaper than a full SVD.

use crate::matrix::{dot, DenseMatrix};
use crate::{Error, Result};

/// Upper bound on cyclic Jacobi sweeps before giving up.
const MAX_SWEEPS: usize = 64;

/// A column pair counts as orthogonal once |⟨b_i, b_j⟩| ≤ PAIR_TOL·‖b_i‖‖b_j‖.
const PAIR_TOL: f64 = 1e-14;

/// Thin SVD M = U · diag(σ) · Vᵀ with σ non-increasing and non-negative.
///
/// For an m×n input with r = min(m, n): `u` is m×r, `sigma` has length r,
/// `v` is n×r. Both factor matrices have orthonormal columns even when M is
/// rank deficient (null directions are completed deterministically).
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdFactors {
    /// U · diag(σ) · Vᵀ.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for j in 0..us.cols() {
            let s = self.sigma[j];
            for x in us.col_mut(j) {
                *x *= s;
            }
        }
        us.matmul_transpose(&self.v)
    }

    /// max-norm deviation of UᵀU and VᵀV from the identity.
    pub fn orthogonality_error(&self) -> f64 {
        gram_identity_error(&self.u).max(gram_identity_error(&self.v))
    }

    /// ‖U·diag(σ)·Vᵀ − M‖_F.
    pub fn reconstruction_error(&self, m: &DenseMatrix) -> f64 {
        self.reconstruct().diff_norm_sq(m).sqrt()
    }
}

fn gram_identity_error(m: &DenseMatrix) -> f64 {
    let g = m.transpose_matmul(m);
    let mut worst = 0.0f64;
    for j in 0..g.cols() {
        for i in 0..g.rows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g.get(i, j) - target).abs());
        }
    }
    worst
}

/// Deterministic thin SVD.
pub fn svd(m: &DenseMatrix) -> Result<SvdFactors> {
    svd_warm(m, None)
}

/// Thin SVD that reuses the right factor of a previous decomposition as the
/// Jacobi starting basis. When the input is a small perturbation of the
/// matrix behind `prev` (the iterate-to-iterate situation inside ALM loops),
/// most column pairs are already orthogonal and the sweep count drops
/// sharply. Results satisfy the same invariants as [`svd`]; only the
/// round-off-level details of the factors may differ from a cold start.
pub fn svd_warm(m: &DenseMatrix, prev: Option<&SvdFactors>) -> Result<SvdFactors> {
    if let Some(bad) = m.data().iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "svd input entries must be finite, found {bad}"
        )));
    }
    if m.rows() >= m.cols() {
        let v0 = prev.and_then(|p| {
            (p.v.rows() == m.cols() && p.v.cols() == m.cols()).then_some(&p.v)
        });
        svd_tall(m, v0)
    } else {
        // Wide inputs go through the transpose; the roles of U and V swap.
        let mt = m.transpose();
        let v0 = prev.and_then(|p| {
            (p.u.rows() == m.rows() && p.u.cols() == m.rows()).then_some(&p.u)
        });
        let f = svd_tall(&mt, v0)?;
        Ok(SvdFactors {
            u: f.v,
            sigma: f.sigma,
            v: f.u,
        })
    }
}

/// SVD for rows ≥ cols. `v0`, when given, must be an n×n orthogonal matrix.
fn svd_tall(m: &DenseMatrix, v0: Option<&DenseMatrix>) -> Result<SvdFactors> {
    match v0 {
        Some(v_start) => {
            // Warm path: rotate M into the previous right basis and finish the
            // job directly on the (nearly orthogonal) m×n product.
            let mut b = m.matmul(v_start);
            let mut v = v_start.clone();
            jacobi_orthogonalize(&mut b, &mut v)?;
            finish_factors(b, v)
        }
        None => {
            let (q, r) = householder_qr(m);
            let mut b = r;
            let mut v = DenseMatrix::identity(m.cols());
            jacobi_orthogonalize(&mut b, &mut v)?;
            // Columns of q·b keep their norms, so the singular values survive.
            finish_factors(q.matmul(&b), v)
        }
    }
}

/// One-sided Jacobi: right-rotates `b` until its columns are pairwise
/// orthogonal, accumulating the rotations into `v`. Pairs are visited
/// row-cyclically (i < j), squared column norms are cached per sweep and
/// updated in closed form after each rotation.
fn jacobi_orthogonalize(b: &mut DenseMatrix, v: &mut DenseMatrix) -> Result<()> {
    let n = b.cols();
    let dims = b.rows().max(n) as f64;
    let mut worst = 0.0f64;
    for _sweep in 0..MAX_SWEEPS {
        let mut norms: Vec<f64> = (0..n).map(|j| dot(b.col(j), b.col(j))).collect();
        // Columns at round-off scale can never satisfy the relative
        // orthogonality criterion; they become null directions downstream,
        // so rotating against them would only spin the sweep counter.
        let max_norm = norms.iter().fold(0.0f64, |a, &x| a.max(x)).sqrt();
        let negligible = max_norm * dims * f64::EPSILON;
        let negligible_sq = negligible * negligible;
        let mut rotated = false;
        worst = 0.0;
        for i in 0..n.saturating_sub(1) {
            for j in i + 1..n {
                let alpha = norms[i];
                let beta = norms[j];
                let scale = (alpha * beta).sqrt();
                if scale == 0.0 || alpha <= negligible_sq || beta <= negligible_sq {
                    continue;
                }
                let gamma = dot(b.col(i), b.col(j));
                let ratio = gamma.abs() / scale;
                worst = worst.max(ratio);
                if ratio <= PAIR_TOL {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta == 0.0 {
                    1.0
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(b, i, j, c, s);
                rotate_columns(v, i, j, c, s);
                norms[i] = c * c * alpha - 2.0 * c * s * gamma + s * s * beta;
                norms[j] = s * s * alpha + 2.0 * c * s * gamma + c * c * beta;
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(Error::SvdNoConvergence {
        off_diagonal: worst,
        sweeps: MAX_SWEEPS,
    })
}

/// In-place plane rotation of columns i < j:
/// (col_i, col_j) ← (c·col_i − s·col_j, s·col_i + c·col_j).
fn rotate_columns(m: &mut DenseMatrix, i: usize, j: usize, c: f64, s: f64) {
    let rows = m.rows();
    let (ci, cj) = two_cols_mut(m, i, j);
    for k in 0..rows {
        let x = ci[k];
        let y = cj[k];
        ci[k] = c * x - s * y;
        cj[k] = s * x + c * y;
    }
}

/// Disjoint mutable views of columns i < j.
fn two_cols_mut(m: &mut DenseMatrix, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(i < j);
    let rows = m.rows();
    let data = m.data_mut();
    let (left, right) = data.split_at_mut(j * rows);
    (&mut left[i * rows..(i + 1) * rows], &mut right[..rows])
}

/// Turns a column-orthogonal `b` (columns σ_j·u_j) plus accumulated `v` into
/// sorted, sign-normalized factors. Numerically null columns of `b` are
/// replaced by deterministic Gram–Schmidt completions so U stays orthonormal.
fn finish_factors(b: DenseMatrix, v: DenseMatrix) -> Result<SvdFactors> {
    let rows = b.rows();
    let n = b.cols();
    let raw_sigma: Vec<f64> = (0..n).map(|j| dot(b.col(j), b.col(j)).sqrt()).collect();

    // Stable descending order: equal norms keep their original positions.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| raw_sigma[c].partial_cmp(&raw_sigma[a]).unwrap());

    let sigma_max = raw_sigma[order[0]];
    let zero_tol = sigma_max * rows.max(n) as f64 * f64::EPSILON;

    let mut u = DenseMatrix::zeros(rows, n);
    let mut v_sorted = DenseMatrix::zeros(n, n);
    let mut sigma = vec![0.0; n];
    let mut null_cols: Vec<usize> = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        sigma[dst] = raw_sigma[src];
        v_sorted.col_mut(dst).copy_from_slice(v.col(src));
        if raw_sigma[src] > zero_tol {
            let bc = b.col(src);
            let uc = u.col_mut(dst);
            let inv = 1.0 / raw_sigma[src];
            for k in 0..rows {
                uc[k] = bc[k] * inv;
            }
        } else {
            null_cols.push(dst);
        }
    }
    for &dst in &null_cols {
        complete_column(&mut u, dst)?;
    }
    apply_sign_convention(&mut u, &mut v_sorted);
    Ok(SvdFactors {
        u,
        sigma,
        v: v_sorted,
    })
}

/// Fills column `dst` of `u` with a unit vector orthogonal to every other
/// column. Candidates are the standard basis vectors in index order; the
/// first whose residual after projection stays above 1/2 is accepted (fast
/// path). When the complement is low-dimensional and spread out no candidate
/// clears 1/2, so the largest residual wins instead — for an orthonormal
/// basis missing c directions the best candidate is guaranteed at least
/// √(c/rows). The accepted vector is re-orthogonalized once and normalized.
/// Unfilled columns are all-zero, so projecting against every other column
/// is safe.
fn complete_column(u: &mut DenseMatrix, dst: usize) -> Result<()> {
    let rows = u.rows();
    let cols = u.cols();
    let mut best: Option<(f64, usize)> = None;
    for k in 0..rows {
        let mut w = vec![0.0; rows];
        w[k] = 1.0;
        project_out(&mut w, u, dst, cols);
        let norm = dot(&w, &w).sqrt();
        if norm > 0.5 {
            accept_completion(u, dst, w, norm);
            return Ok(());
        }
        if best.is_none_or(|(bn, _)| norm > bn) {
            best = Some((norm, k));
        }
    }
    let floor = 0.5 / (rows as f64).sqrt();
    if let Some((norm, k)) = best {
        if norm > floor {
            let mut w = vec![0.0; rows];
            w[k] = 1.0;
            project_out(&mut w, u, dst, cols);
            let norm = dot(&w, &w).sqrt();
            accept_completion(u, dst, w, norm);
            return Ok(());
        }
    }
    Err(Error::InvalidInput(
        "could not complete an orthonormal basis for a rank-deficient factor".into(),
    ))
}

/// Second-pass re-orthogonalization and normalization of an accepted
/// completion candidate.
fn accept_completion(u: &mut DenseMatrix, dst: usize, mut w: Vec<f64>, first_norm: f64) {
    for x in &mut w {
        *x /= first_norm;
    }
    project_out(&mut w, u, dst, u.cols());
    let norm = dot(&w, &w).sqrt();
    for x in &mut w {
        *x /= norm;
    }
    u.col_mut(dst).copy_from_slice(&w);
}

fn project_out(w: &mut [f64], u: &DenseMatrix, skip: usize, cols: usize) {
    for j in 0..cols {
        if j == skip {
            continue;
        }
        let p = dot(w, u.col(j));
        if p != 0.0 {
            for (x, &uc) in w.iter_mut().zip(u.col(j)) {
                *x -= p * uc;
            }
        }
    }
}

/// Makes the largest-magnitude entry of each U column non-negative (first
/// index wins ties), flipping the paired V column so the product is unchanged.
fn apply_sign_convention(u: &mut DenseMatrix, v: &mut DenseMatrix) {
    for j in 0..u.cols() {
        let uc = u.col(j);
        let mut best = 0usize;
        let mut best_abs = uc[0].abs();
        for (k, x) in uc.iter().enumerate().skip(1) {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = k;
            }
        }
        if uc[best] < 0.0 {
            for x in u.col_mut(j) {
                *x = -*x;
            }
            for x in v.col_mut(j) {
                *x = -*x;
            }
        }
    }
}

/// Householder QR for rows ≥ cols: returns (Q thin rows×n, R n×n).
fn householder_qr(m: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let rows = m.rows();
    let n = m.cols();
    debug_assert!(rows >= n);
    let mut a = m.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let col = a.col(k);
        let norm_x = dot(&col[k..], &col[k..]).sqrt();
        if norm_x == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if col[k] >= 0.0 { -norm_x } else { norm_x };
        let mut refl: Vec<f64> = col[k..].to_vec();
        refl[0] -= alpha;
        let refl_norm = dot(&refl, &refl).sqrt();
        if refl_norm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        for x in &mut refl {
            *x /= refl_norm;
        }
        for j in k + 1..n {
            let cj = &mut a.col_mut(j)[k..];
            let p = 2.0 * dot(cj, &refl);
            for (x, &r) in cj.iter_mut().zip(&refl) {
                *x -= p * r;
            }
        }
        // The pivot column maps to α·e₁ exactly; write that instead of the
        // rounded reflection.
        let ck = a.col_mut(k);
        ck[k] = alpha;
        for x in ck[k + 1..].iter_mut() {
            *x = 0.0;
        }
        reflectors.push(refl);
    }

    let mut r = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let src = a.col(j);
        let dstc = r.col_mut(j);
        dstc[..=j].copy_from_slice(&src[..=j]);
    }

    // Q = H₀·H₁·…·H_{n−1} applied to the first n identity columns.
    let mut q = DenseMatrix::zeros(rows, n);
    for j in 0..n {
        q.set(j, j, 1.0);
    }
    for k in (0..n).rev() {
        let refl = &reflectors[k];
        if refl.is_empty() {
            continue;
        }
        for j in 0..n {
            let cj = &mut q.col_mut(j)[k..];
            let p = 2.0 * dot(cj, refl);
            for (x, &rv) in cj.iter_mut().zip(refl) {
                *x -= p * rv;
            }
        }
    }
    (q, r)
}

/// Eigendecomposition of a symmetric matrix by cyclic two-sided Jacobi:
/// returns eigenvalues in non-increasing order and the matching orthonormal
/// eigenvector columns, deterministically sign-normalized like the SVD
/// factors. Intended for Gram matrices; only symmetry is assumed.
pub fn sym_eigen_desc(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if a.rows() != a.cols() {
        return Err(Error::InvalidInput(format!(
            "symmetric eigendecomposition needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut vecs = DenseMatrix::identity(n);
    let mut converged = false;
    let mut worst = 0.0f64;
    for _sweep in 0..MAX_SWEEPS {
        // Off-diagonal mass at round-off scale relative to the dominant
        // eigenvalue cannot be annihilated under the relative criterion;
        // treat it as zero (same reasoning as the SVD sweep).
        let max_diag = (0..n).fold(0.0f64, |acc, i| acc.max(m.get(i, i).abs()));
        let negligible = max_diag * n as f64 * f64::EPSILON;
        let mut rotated = false;
        worst = 0.0;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let apq = m.get(p, q);
                let scale = (app.abs() * aqq.abs()).sqrt();
                if apq == 0.0 || apq.abs() <= negligible {
                    continue;
                }
                worst = worst.max(if scale > 0.0 { apq.abs() / scale } else { apq.abs() });
                if apq.abs() <= PAIR_TOL * scale {
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                // Contiguous column update (A ← A·J) …
                rotate_columns(&mut m, p, q, c, s);
                // … strided row update (A ← Jᵀ·A) …
                {
                    let data = m.data_mut();
                    for k in 0..n {
                        let ip = k * n + p;
                        let iq = k * n + q;
                        let x = data[ip];
                        let y = data[iq];
                        data[ip] = c * x - s * y;
                        data[iq] = s * x + c * y;
                    }
                }
                // … and the 2×2 pivot block written in closed form so the
                // annihilated entries are exactly zero.
                m.set(p, p, app - t * apq);
                m.set(q, q, aqq + t * apq);
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);
                rotate_columns(&mut vecs, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence {
            off_diagonal: worst,
            sweeps: MAX_SWEEPS,
        });
    }
    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| diag[b].partial_cmp(&diag[a]).unwrap());
    let mut vals = vec![0.0; n];
    let mut sorted_vecs = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vals[dst] = diag[src];
        sorted_vecs.col_mut(dst).copy_from_slice(vecs.col(src));
    }
    for j in 0..n {
        let col = sorted_vecs.col(j);
        let mut best = 0usize;
        let mut best_abs = col[0].abs();
        for (k, x) in col.iter().enumerate().skip(1) {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = k;
            }
        }
        if col[best] < 0.0 {
            for x in sorted_vecs.col_mut(j) {
                *x = -*x;
            }
        }
    }
    Ok((vals, sorted_vecs))
}
