//! Generalized soft-thresholding (GST) for the scalar problem
//!
//! ```text
//!   minimize over δ:   f(δ) = ½·(δ − σ)² + λ·|δ|^p,   0 < p ≤ 1.
//! ```
//!
//! For p = 1 this is ordinary soft thresholding. For p < 1 the penalty is
//! non-convex but the global minimizer still has a closed structure: below a
//! threshold τ(λ, p) the answer is exactly zero, above it the answer is the
//! larger root of the stationarity equation, found here by a fixed-point
//! iteration started at |σ|.

use crate::{Error, Result};

/// Fixed-point iteration count used by the matrix solvers.
pub const SOLVER_ITERS: usize = 8;

/// Higher iteration count for diagnostics and reference computations.
pub const ORACLE_ITERS: usize = 30;

/// Iterates are clamped from below so δ^{p−1} stays finite.
const ITERATE_FLOOR: f64 = 1e-12;

fn validate_penalty(lambda: f64, p: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidInput(format!(
            "lambda must be finite and non-negative, got {lambda}"
        )));
    }
    if !p.is_finite() || p <= 0.0 || p > 1.0 {
        return Err(Error::InvalidInput(format!(
            "p must be in (0, 1], got {p}"
        )));
    }
    Ok(())
}

/// The GST threshold τ(λ, p): inputs with |σ| ≤ τ shrink to exactly zero.
///
/// τ = (2λ(1−p))^{1/(2−p)} + λp·(2λ(1−p))^{(p−1)/(2−p)}; for p = 1 it
/// reduces to λ, and λ = 0 disables shrinkage entirely (τ = 0).
pub fn gst_threshold(lambda: f64, p: f64) -> Result<f64> {
    validate_penalty(lambda, p)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(lambda);
    }
    let base = 2.0 * lambda * (1.0 - p);
    let tau = base.powf(1.0 / (2.0 - p)) + lambda * p * base.powf((p - 1.0) / (2.0 - p));
    Ok(tau)
}

/// Global minimizer of ½(δ−σ)² + λ|δ|^p, up to fixed-point accuracy.
///
/// Returns 0 exactly when |σ| ≤ τ(λ, p). Otherwise runs `iters` steps of
/// δ ← |σ| − λp·δ^{p−1} from δ = |σ| and restores the sign of σ.
/// [`SOLVER_ITERS`] steps suffice for the matrix solvers; use
/// [`ORACLE_ITERS`] when the value itself is the product.
pub fn gst_solve(sigma: f64, lambda: f64, p: f64, iters: usize) -> Result<f64> {
    validate_penalty(lambda, p)?;
    if !sigma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "sigma must be finite, got {sigma}"
        )));
    }
    if iters == 0 {
        return Err(Error::InvalidInput("iters must be at least 1".into()));
    }
    if lambda == 0.0 {
        return Ok(sigma);
    }
    let mag = sigma.abs();
    let sign = if sigma < 0.0 { -1.0 } else { 1.0 };
    if p == 1.0 {
        return Ok(sign * (mag - lambda).max(0.0));
    }
    let tau = gst_threshold(lambda, p)?;
    if mag <= tau {
        return Ok(0.0);
    }
    let mut delta = mag;
    for _ in 0..iters {
        delta = (mag - lambda * p * delta.powf(p - 1.0)).max(ITERATE_FLOOR);
    }
    Ok(sign * delta)
}

/// Residual of the interior stationarity condition at δ > 0:
/// r = δ − |σ| + λp·δ^{p−1}. Zero at any positive stationary point of f.
pub fn gst_stationarity_residual(delta: f64, sigma: f64, lambda: f64, p: f64) -> Result<f64> {
    validate_penalty(lambda, p)?;
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "delta must be positive to evaluate the stationarity residual, got {delta}"
        )));
    }
    Ok(delta - sigma.abs() + lambda * p * delta.powf(p - 1.0))
}

/// The objective f(δ) = ½(δ−σ)² + λ|δ|^p being minimized. Handy for
/// verifying solver output against alternatives.
pub fn shrinkage_objective(delta: f64, sigma: f64, lambda: f64, p: f64) -> f64 {
    0.5 * (delta - sigma) * (delta - sigma) + lambda * delta.abs().powf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_known_value() {
        // λ = 1, p = ½: base = 2·1·½ = 1, so τ = 1 + ½ = 1.5.
        let tau = gst_threshold(1.0, 0.5).unwrap();
        assert!((tau - 1.5).abs() < 1e-15, "tau = {tau}");
    }

    #[test]
    fn threshold_reduces_to_lambda_at_p_one() {
        assert_eq!(gst_threshold(0.7, 1.0).unwrap(), 0.7);
        assert_eq!(gst_threshold(0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn threshold_zero_lambda_is_zero() {
        assert_eq!(gst_threshold(0.0, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn solve_below_threshold_is_exactly_zero() {
        // τ(1, ½) = 1.5 and |σ| = 1 sits below it.
        assert_eq!(gst_solve(1.0, 1.0, 0.5, 3).unwrap(), 0.0);
        assert_eq!(gst_solve(-1.4, 1.0, 0.5, 3).unwrap(), 0.0);
    }

    #[test]
    fn solve_matches_soft_threshold_at_p_one() {
        assert_eq!(gst_solve(3.0, 1.0, 1.0, 8).unwrap(), 2.0);
        assert_eq!(gst_solve(-3.0, 1.0, 1.0, 8).unwrap(), -2.0);
        assert_eq!(gst_solve(0.5, 1.0, 1.0, 8).unwrap(), 0.0);
    }

    #[test]
    fn solve_with_zero_lambda_is_identity() {
        assert_eq!(gst_solve(5.0, 0.0, 0.7, 3).unwrap(), 5.0);
        assert_eq!(gst_solve(-5.0, 0.0, 0.3, 3).unwrap(), -5.0);
    }

    #[test]
    fn fixed_point_satisfies_stationarity() {
        let delta = gst_solve(4.0, 1.2, 0.7, ORACLE_ITERS).unwrap();
        assert!(delta > 0.0);
        let r = gst_stationarity_residual(delta, 4.0, 1.2, 0.7).unwrap();
        assert!(r.abs() <= 1e-9, "stationarity residual {r}");
    }

    #[test]
    fn solution_is_odd_in_sigma() {
        let pos = gst_solve(4.0, 1.2, 0.7, SOLVER_ITERS).unwrap();
        let neg = gst_solve(-4.0, 1.2, 0.7, SOLVER_ITERS).unwrap();
        assert_eq!(pos, -neg);
    }

    #[test]
    fn shrinkage_never_beats_solver_on_coarse_grid() {
        for &(sigma, lambda, p) in &[
            (2.0, 0.6, 0.5),
            (7.5, 3.0, 0.2),
            (1.9, 1.0, 0.9),
            (0.4, 0.2, 0.05),
        ] {
            let d = gst_solve(sigma, lambda, p, ORACLE_ITERS).unwrap();
            let fd = shrinkage_objective(d, sigma, lambda, p);
            let mut grid_best = f64::INFINITY;
            for k in 0..=2000 {
                let x = sigma * k as f64 / 2000.0;
                grid_best = grid_best.min(shrinkage_objective(x, sigma, lambda, p));
            }
            assert!(
                fd <= grid_best + 1e-6 * (1.0 + grid_best.abs()),
                "solver value {fd} worse than grid minimum {grid_best} at ({sigma}, {lambda}, {p})"
            );
        }
    }

    #[test]
    fn shrinkage_is_monotone_in_sigma() {
        let mut prev = 0.0;
        for k in 0..50 {
            let sigma = 2.0 + 0.2 * k as f64;
            let d = gst_solve(sigma, 1.0, 0.6, SOLVER_ITERS).unwrap();
            assert!(
                d >= prev - 1e-12,
                "shrinkage output decreased: {d} after {prev}"
            );
            prev = d;
        }
    }

    #[test]
    fn validation_names_the_offending_parameter() {
        let err = gst_solve(1.0, -1.0, 0.5, 8).unwrap_err().to_string();
        assert!(err.contains("lambda"), "message: {err}");
        let err = gst_solve(1.0, 1.0, 1.5, 8).unwrap_err().to_string();
        assert!(err.contains("p must"), "message: {err}");
        let err = gst_solve(f64::NAN, 1.0, 0.5, 8).unwrap_err().to_string();
        assert!(err.contains("sigma"), "message: {err}");
        let err = gst_solve(1.0, 1.0, 0.5, 0).unwrap_err().to_string();
        assert!(err.contains("iters"), "message: {err}");
    }

    #[test]
    fn stationarity_residual_requires_positive_delta() {
        assert!(gst_stationarity_residual(0.0, 1.0, 1.0, 0.5).is_err());
        assert!(gst_stationarity_residual(-1.0, 1.0, 1.0, 0.5).is_err());
    }
}
