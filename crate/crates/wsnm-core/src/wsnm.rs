//! Weighted Schatten p-norm and its proximal operator.
//!
//! The weighted Schatten p-norm of X with weights w is Σᵢ wᵢ·σᵢ(X)^p, the
//! singular values taken in non-increasing order. The proximal problem
//!
//! ```text
//!   minimize over X:   a·‖X − Y‖_F² + Σᵢ wᵢ·σᵢ(X)^p
//! ```
//!
//! decouples across singular values when the weights are non-descending:
//! factor Y = U·diag(σ)·Vᵀ, shrink each σᵢ with scalar GST at λᵢ = wᵢ/(2a),
//! and rebuild. That ordering condition is what certifies the decoupled
//! solution as a global optimum, so [`wsnm_prox`] demands it; the explicitly
//! named [`wsnm_prox_unordered`] escape hatch computes the same decoupled
//! shrinkage without the guarantee.

use crate::gst::{gst_solve, SOLVER_ITERS};
use crate::matrix::DenseMatrix;
use crate::svd::{svd_warm, SvdFactors};
use crate::{Error, Result};

/// Singular-value weights plus a record of whether the non-descending
/// ordering (the optimality certificate for the decoupled prox) was checked.
#[derive(Clone, Debug)]
pub struct WeightVector {
    weights: Vec<f64>,
    certified: bool,
}

impl WeightVector {
    /// Validates that the weights are finite, non-negative, and
    /// non-descending; the result is certified for [`wsnm_prox`].
    pub fn non_descending(weights: Vec<f64>) -> Result<Self> {
        validate_non_negative(&weights)?;
        if let Some(i) = first_order_violation(&weights) {
            return Err(Error::WeightOrder {
                index: i,
                previous: weights[i - 1],
                value: weights[i],
            });
        }
        Ok(WeightVector {
            weights,
            certified: true,
        })
    }

    /// Accepts weights in any order. The decoupled prox can still be
    /// evaluated but its global-optimality certificate is forfeited, which
    /// [`is_certified`](Self::is_certified) reports.
    pub fn unordered(weights: Vec<f64>) -> Result<Self> {
        validate_non_negative(&weights)?;
        let certified = first_order_violation(&weights).is_none();
        Ok(WeightVector { weights, certified })
    }

    /// `len` copies of one weight; trivially certified.
    pub fn uniform(len: usize, weight: f64) -> Result<Self> {
        Self::non_descending(vec![weight; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// True when the weights are known to be non-descending.
    pub fn is_certified(&self) -> bool {
        self.certified
    }
}

fn validate_non_negative(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidInput("weight vector must be non-empty".into()));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidInput(format!(
            "weights must be finite and non-negative, got {w}"
        )));
    }
    Ok(())
}

fn first_order_violation(weights: &[f64]) -> Option<usize> {
    (1..weights.len()).find(|&i| weights[i] < weights[i - 1])
}

/// Σᵢ wᵢ·σᵢ(M)^p with σ in non-increasing order. `weights` must have one
/// entry per singular value, i.e. min(rows, cols).
pub fn weighted_schatten_norm_p(m: &DenseMatrix, weights: &WeightVector, p: f64) -> Result<f64> {
    if !p.is_finite() || p <= 0.0 || p > 1.0 {
        return Err(Error::InvalidInput(format!(
            "p must be in (0, 1], got {p}"
        )));
    }
    let r = m.rows().min(m.cols());
    if weights.len() != r {
        return Err(Error::InvalidInput(format!(
            "expected {r} weights for a {}x{} matrix, got {}",
            m.rows(),
            m.cols(),
            weights.len()
        )));
    }
    let f = svd_warm(m, None)?;
    Ok(f.sigma
        .iter()
        .zip(weights.values())
        .map(|(s, w)| w * s.powf(p))
        .sum())
}

/// Everything the proximal step produces: the minimizer, the SVD of the
/// input, and the shrunk spectrum (σᵢ of the output, still non-increasing
/// when the weights were non-descending).
#[derive(Clone, Debug)]
pub struct ProxOutcome {
    pub x: DenseMatrix,
    /// Factorization of the *input* Y; `factors.sigma` is the spectrum
    /// before shrinkage.
    pub factors: SvdFactors,
    /// Per-singular-value GST outputs δᵢ.
    pub shrunk: Vec<f64>,
}

/// Proximal operator of the weighted Schatten p-norm: minimizes
/// a·‖X−Y‖_F² + Σ wᵢ σᵢ(X)^p. Requires certified (non-descending) weights.
pub fn wsnm_prox(
    y: &DenseMatrix,
    weights: &WeightVector,
    p: f64,
    fidelity_scale: f64,
) -> Result<DenseMatrix> {
    require_certificate(weights)?;
    Ok(prox_inner(y, weights, p, fidelity_scale, None)?.x)
}

/// Same shrinkage rule as [`wsnm_prox`] but for weights in arbitrary order.
/// The result is the decoupled stationary point, not necessarily the global
/// minimizer — callers opt into that explicitly by choosing this function.
pub fn wsnm_prox_unordered(
    y: &DenseMatrix,
    weights: &WeightVector,
    p: f64,
    fidelity_scale: f64,
) -> Result<DenseMatrix> {
    Ok(prox_inner(y, weights, p, fidelity_scale, None)?.x)
}

/// [`wsnm_prox`] variant that also returns the input factorization and the
/// shrunk spectrum, and can reuse a previous factorization to warm-start the
/// SVD (the iterate-to-iterate case inside ALM solvers).
pub fn wsnm_prox_with_factors(
    y: &DenseMatrix,
    weights: &WeightVector,
    p: f64,
    fidelity_scale: f64,
    warm: Option<&SvdFactors>,
) -> Result<ProxOutcome> {
    require_certificate(weights)?;
    prox_inner(y, weights, p, fidelity_scale, warm)
}

fn require_certificate(weights: &WeightVector) -> Result<()> {
    if weights.is_certified() {
        return Ok(());
    }
    // Reconstruct the first violation for the error payload.
    let w = weights.values();
    let i = first_order_violation(w).expect("uncertified weights must contain a violation");
    Err(Error::WeightOrder {
        index: i,
        previous: w[i - 1],
        value: w[i],
    })
}

fn prox_inner(
    y: &DenseMatrix,
    weights: &WeightVector,
    p: f64,
    fidelity_scale: f64,
    warm: Option<&SvdFactors>,
) -> Result<ProxOutcome> {
    let r = y.rows().min(y.cols());
    if weights.len() != r {
        return Err(Error::InvalidInput(format!(
            "expected {r} weights for a {}x{} matrix, got {}",
            y.rows(),
            y.cols(),
            weights.len()
        )));
    }
    let factors = svd_warm(y, warm)?;
    let (x, shrunk) = shrink_factors(&factors, weights, p, fidelity_scale)?;
    Ok(ProxOutcome { x, factors, shrunk })
}

/// Core shrinkage step shared with the ALM solvers: given an existing
/// factorization of the prox target, apply per-singular-value GST at
/// λᵢ = wᵢ/(2a) and rebuild. Returns the minimizer and the shrunk spectrum.
pub(crate) fn shrink_factors(
    factors: &SvdFactors,
    weights: &WeightVector,
    p: f64,
    fidelity_scale: f64,
) -> Result<(DenseMatrix, Vec<f64>)> {
    if !fidelity_scale.is_finite() || fidelity_scale <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "fidelity_scale must be finite and positive, got {fidelity_scale}"
        )));
    }
    if weights.len() != factors.sigma.len() {
        return Err(Error::InvalidInput(format!(
            "expected {} weights, got {}",
            factors.sigma.len(),
            weights.len()
        )));
    }
    let mut shrunk = Vec::with_capacity(factors.sigma.len());
    for (sigma, w) in factors.sigma.iter().zip(weights.values()) {
        let lambda = w / (2.0 * fidelity_scale);
        shrunk.push(gst_solve(*sigma, lambda, p, SOLVER_ITERS)?);
    }
    let mut us = factors.u.clone();
    for j in 0..us.cols() {
        let d = shrunk[j];
        for x in us.col_mut(j) {
            *x *= d;
        }
    }
    Ok((us.matmul_transpose(&factors.v), shrunk))
}

/// Von Neumann trace pair for equally shaped A and B: returns
/// (tr(AᵀB), Σᵢ σᵢ(A)·σᵢ(B)). The first component never exceeds the second.
pub fn von_neumann_gap(a: &DenseMatrix, b: &DenseMatrix) -> Result<(f64, f64)> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::InvalidInput(format!(
            "von Neumann bound needs equal shapes, got {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let inner = a.elementwise_dot(b);
    let fa = svd_warm(a, None)?;
    let fb = svd_warm(b, None)?;
    let bound = fa
        .sigma
        .iter()
        .zip(&fb.sigma)
        .map(|(x, y)| x * y)
        .sum();
    Ok((inner, bound))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_vector_rejects_descending_order() {
        let err = WeightVector::non_descending(vec![2.0, 1.0]).unwrap_err();
        match err {
            Error::WeightOrder {
                index,
                previous,
                value,
            } => {
                assert_eq!(index, 1);
                assert_eq!(previous, 2.0);
                assert_eq!(value, 1.0);
            }
            other => panic!("expected WeightOrder, got {other:?}"),
        }
    }

    #[test]
    fn weight_vector_unordered_is_uncertified() {
        let w = WeightVector::unordered(vec![2.0, 1.0]).unwrap();
        assert!(!w.is_certified());
        let sorted = WeightVector::unordered(vec![1.0, 2.0]).unwrap();
        assert!(sorted.is_certified());
    }

    #[test]
    fn weight_vector_rejects_negative_and_empty() {
        assert!(WeightVector::non_descending(vec![-0.5, 1.0]).is_err());
        assert!(WeightVector::unordered(vec![f64::NAN]).is_err());
        assert!(WeightVector::non_descending(vec![]).is_err());
    }

    #[test]
    fn norm_of_diagonal_matrix() {
        // σ = (4, 1); w = (1, 2); p = ½ → 1·2 + 2·1 = 4.
        let m = DenseMatrix::from_diag(&[4.0, 1.0]);
        let w = WeightVector::non_descending(vec![1.0, 2.0]).unwrap();
        let v = weighted_schatten_norm_p(&m, &w, 0.5).unwrap();
        assert!((v - 4.0).abs() < 1e-12, "norm = {v}");
    }

    #[test]
    fn uniform_p_one_is_nuclear_norm() {
        let m = DenseMatrix::from_fn(4, 3, |i, j| ((i + 2 * j) as f64).sin());
        let w = WeightVector::uniform(3, 1.0).unwrap();
        let nuclear: f64 = crate::svd::svd(&m).unwrap().sigma.iter().sum();
        let v = weighted_schatten_norm_p(&m, &w, 1.0).unwrap();
        assert!((v - nuclear).abs() < 1e-10);
    }

    #[test]
    fn prox_of_diagonal_with_p_one_soft_thresholds() {
        // a = ½ makes λᵢ = wᵢ, so diag(5, 3) with w = 1 shrinks to diag(4, 2).
        let y = DenseMatrix::from_diag(&[5.0, 3.0]);
        let w = WeightVector::uniform(2, 1.0).unwrap();
        let x = wsnm_prox(&y, &w, 1.0, 0.5).unwrap();
        assert!((x.get(0, 0) - 4.0).abs() < 1e-10);
        assert!((x.get(1, 1) - 2.0).abs() < 1e-10);
        assert!(x.get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn prox_with_zero_weights_is_identity() {
        let y = DenseMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 * 0.5 - 2.0);
        let w = WeightVector::uniform(3, 0.0).unwrap();
        let x = wsnm_prox(&y, &w, 0.7, 1.0).unwrap();
        assert!(x.diff_norm_sq(&y).sqrt() < 1e-9);
    }

    #[test]
    fn prox_validates_weight_count_and_scale() {
        let y = DenseMatrix::zeros(3, 2);
        let w = WeightVector::uniform(3, 1.0).unwrap();
        assert!(wsnm_prox(&y, &w, 0.5, 1.0).is_err());
        let w2 = WeightVector::uniform(2, 1.0).unwrap();
        assert!(wsnm_prox(&y, &w2, 0.5, 0.0).is_err());
        assert!(wsnm_prox(&y, &w2, 0.5, -1.0).is_err());
    }

    #[test]
    fn prox_refuses_uncertified_weights_but_unordered_path_runs() {
        let y = DenseMatrix::from_diag(&[5.0, 3.0]);
        let w = WeightVector::unordered(vec![2.0, 0.5]).unwrap();
        assert!(matches!(
            wsnm_prox(&y, &w, 1.0, 0.5),
            Err(Error::WeightOrder { .. })
        ));
        let x = wsnm_prox_unordered(&y, &w, 1.0, 0.5).unwrap();
        // δ₁ = 5 − 2 = 3, δ₂ = 3 − 0.5 = 2.5 — order no longer preserved.
        assert!((x.get(0, 0) - 3.0).abs() < 1e-10);
        assert!((x.get(1, 1) - 2.5).abs() < 1e-10);
    }

    #[test]
    fn shrunk_spectrum_matches_output_singular_values() {
        let y = DenseMatrix::from_fn(5, 4, |i, j| ((i * 7 + j * 2) as f64).cos() * 3.0);
        let w = WeightVector::non_descending(vec![0.1, 0.5, 1.0, 2.0]).unwrap();
        let out = wsnm_prox_with_factors(&y, &w, 0.7, 1.0, None).unwrap();
        let check = crate::svd::svd(&out.x).unwrap();
        for (a, b) in out.shrunk.iter().zip(&check.sigma) {
            assert!((a - b).abs() < 1e-9, "spectrum mismatch {a} vs {b}");
        }
        // Non-descending weights keep the shrunk spectrum non-ascending.
        for pair in out.shrunk.windows(2) {
            assert!(pair[0] >= pair[1] - 1e-12);
        }
    }

    #[test]
    fn von_neumann_identity_pair() {
        let eye = DenseMatrix::identity(2);
        let neg = eye.scale(-1.0);
        let (inner, bound) = von_neumann_gap(&eye, &neg).unwrap();
        assert!((inner + 2.0).abs() < 1e-12);
        assert!((bound - 2.0).abs() < 1e-12);
        assert!(inner <= bound + 1e-9);
    }

    #[test]
    fn von_neumann_equality_on_equal_arguments() {
        let a = DenseMatrix::from_fn(4, 3, |i, j| ((i + j * j) as f64).sin());
        let (inner, bound) = von_neumann_gap(&a, &a).unwrap();
        assert!((inner - bound).abs() <= 1e-9, "{inner} vs {bound}");
    }

    #[test]
    fn von_neumann_rejects_shape_mismatch() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(3, 2);
        assert!(von_neumann_gap(&a, &b).is_err());
    }
}
