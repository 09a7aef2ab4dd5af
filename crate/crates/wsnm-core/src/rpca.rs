//! Robust principal component analysis with a weighted Schatten p-norm
//! low-rank penalty, solved by inexact augmented Lagrange multipliers (ALM).
//!
//! The model splits an observation Y into X + E where X is low rank and E is
//! sparse:
//!
//! ```text
//!   minimize   ‖E‖₁ + ‖X‖^p_{w,Sp}   subject to   Y = X + E.
//! ```
//!
//! Each ALM iteration soft-thresholds E at 1/μ, applies the weighted
//! Schatten prox to X (per-singular-value GST at λᵢ = wᵢ/μ), updates the
//! multiplier Z ← Z + μ(Y − X − E), and inflates μ by ρ. A nuclear-norm
//! baseline ([`nnm_rpca`]) runs the identical loop with p = 1, unit
//! singular-value weights, and an ℓ₁ weight λ (E-step threshold λ/μ), which
//! reduces the X-step to singular value thresholding at 1/μ.

use crate::matrix::DenseMatrix;
use crate::svd::{svd, svd_warm, SvdFactors};
use crate::wsnm::{shrink_factors, WeightVector};
use crate::{Error, Result};

/// Additive guard in the reweighting rule wᵢ = C·√(mn)/(σᵢ + ε).
pub const WEIGHT_EPSILON: f64 = 1e-16;

/// Fraction of σ₁(Y) at which the default μ₀ places the first X-step's
/// GST dead zone for the leading direction (see [`RpcaConfig::default_mu0`]).
pub const SURVIVAL_MARGIN: f64 = 0.9;

/// Relative cutoff used when counting significant singular values.
pub const RANK_REL_TOL: f64 = 1e-6;

/// How the singular-value weights are chosen each iteration.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightMode {
    /// wᵢ = C√(mn)/(σᵢ(Y)+ε) computed once from the observation spectrum.
    FixedFromY,
    /// Recompute wᵢ = C√(mn)/(σᵢ+ε) from the spectrum of each X-step target
    /// (the current low-rank estimate before shrinkage). Default.
    ReweightedPerIteration,
    /// One constant weight for every singular value. With p = 1 and weight 1
    /// this reproduces nuclear-norm RPCA, making the two solvers directly
    /// comparable.
    UniformFixed(f64),
}

/// Solver parameters for [`wsnm_rpca`].
#[derive(Clone, Debug)]
pub struct RpcaConfig {
    /// Schatten power, in (0, 1].
    pub p: f64,
    /// Weight scale C in wᵢ = C√(mn)/(σᵢ+ε). Ignored by
    /// [`WeightMode::UniformFixed`].
    pub weight_c: f64,
    pub weight_mode: WeightMode,
    /// Initial penalty μ₀; `None` picks the survival-calibrated default
    /// (see [`RpcaConfig::default_mu0`]).
    pub mu0: Option<f64>,
    /// Penalty growth factor, > 1.
    pub rho: f64,
    /// Stop once ‖Y−X−E‖_F / ‖Y‖_F falls to this level.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for RpcaConfig {
    fn default() -> Self {
        RpcaConfig::for_power(0.7)
    }
}

impl RpcaConfig {
    /// Defaults for low-rank + sparse separation at a given power:
    /// C = 10^{1/p}, reweighting on, ρ = 1.2, tol = 1e−7.
    pub fn for_power(p: f64) -> Self {
        RpcaConfig {
            p,
            weight_c: 10f64.powf(1.0 / p),
            weight_mode: WeightMode::ReweightedPerIteration,
            mu0: None,
            rho: 1.2,
            tol: 1e-7,
            max_iters: 500,
        }
    }

    /// Defaults tuned for background subtraction on a rows×cols frame
    /// matrix: p = 0.7 with the dimension-scaled weight C = 2·max(rows, cols).
    ///
    /// The scale balances the two revival thresholds of the alternating
    /// minimization: C must be large enough that moving foreground lands in
    /// the sparse part (its ℓ₁ cost must undercut its weighted Schatten
    /// cost) yet small enough that the dominant background directions stay
    /// in the low-rank part rather than being absorbed entry-wise. Squaring
    /// the dimension factor — a scale sometimes quoted for this problem —
    /// overshoots the upper bound at any realistic frame size: the X-step
    /// then zeroes every singular value until after the E-step has already
    /// absorbed the whole observation, and the split degenerates to X = 0,
    /// E = Y. `weight_c` remains an ordinary config field for callers who
    /// want a different scale.
    ///
    /// Weights are held fixed from the observation spectrum — for video the
    /// spectrum of Y itself is the meaningful reference, and reweighting
    /// against iterates that still mix foreground into the low-rank part
    /// destabilizes the split.
    pub fn for_background(rows: usize, cols: usize) -> Self {
        let d = rows.max(cols) as f64;
        RpcaConfig {
            weight_c: 2.0 * d,
            weight_mode: WeightMode::FixedFromY,
            ..RpcaConfig::for_power(0.7)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.p.is_finite() || self.p <= 0.0 || self.p > 1.0 {
            return Err(Error::InvalidInput(format!(
                "p must be in (0, 1], got {}",
                self.p
            )));
        }
        if !self.weight_c.is_finite() || self.weight_c <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "weight_c must be finite and positive, got {}",
                self.weight_c
            )));
        }
        if let WeightMode::UniformFixed(f) = self.weight_mode {
            if !f.is_finite() || f < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "uniform weight must be finite and non-negative, got {f}"
                )));
            }
        }
        if let Some(mu) = self.mu0 {
            if !mu.is_finite() || mu <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "mu0 must be finite and positive, got {mu}"
                )));
            }
        }
        if !self.rho.is_finite() || self.rho <= 1.0 {
            return Err(Error::InvalidInput(format!(
                "rho must exceed 1, got {}",
                self.rho
            )));
        }
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "tol must be finite and positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    /// Initial penalty used when `mu0` is `None`: the value at which the
    /// leading singular value of the first X-step survives its GST dead
    /// zone with a margin.
    ///
    /// With X = Y, E = 0, Z = 0 the first X-step shrinks the spectrum of Y
    /// itself at λ₁ = w₁/μ, and the dead zone obeys the closed form
    /// τ(λ) = K_p·λ^{1/(2−p)} (τ = λ for p = 1). Solving τ(w₁/μ₀) =
    /// [`SURVIVAL_MARGIN`]·σ₁ gives μ₀ = w₁·(K_p/(γσ₁))^{2−p}. Any
    /// substantially smaller penalty zeroes the whole spectrum on the first
    /// iteration, and from that collapsed state the entrywise term — whose
    /// threshold 1/μ decays faster than the dead zone — absorbs mass the
    /// weighted prox never reclaims: the iteration reaches feasibility with
    /// a rank-starved X. A margin near 1 keeps μ₀ as small as the survival
    /// constraint allows, so the early entrywise threshold stays above the
    /// data scale and E starts from genuinely gross entries.
    pub fn default_mu0(&self, sigma1: f64, rows: usize, cols: usize) -> f64 {
        let w1 = match self.weight_mode {
            WeightMode::UniformFixed(w) => w,
            _ => self.weight_c * ((rows * cols) as f64).sqrt() / (sigma1 + WEIGHT_EPSILON),
        };
        let k_p = if self.p >= 1.0 {
            1.0
        } else {
            let q = 2.0 * (1.0 - self.p);
            q.powf(1.0 / (2.0 - self.p)) + self.p * q.powf((self.p - 1.0) / (2.0 - self.p))
        };
        let mu = w1 * (k_p / (SURVIVAL_MARGIN * sigma1)).powf(2.0 - self.p);
        if mu.is_finite() && mu > 0.0 {
            mu
        } else {
            1.0 / sigma1
        }
    }
}

/// Output of the ALM solvers, with per-iteration diagnostics.
#[derive(Clone, Debug)]
pub struct RpcaResult {
    /// Low-rank component.
    pub x: DenseMatrix,
    /// Sparse component.
    pub e: DenseMatrix,
    /// Iterations actually executed (also the history lengths).
    pub iterations: usize,
    /// Whether the residual tolerance was met within `max_iters`.
    pub converged: bool,
    /// ‖Y − X − E‖_F / ‖Y‖_F after each iteration.
    pub residual_history: Vec<f64>,
    /// ‖ΔX‖_F² + ‖ΔE‖_F² for each iteration.
    pub step_history: Vec<f64>,
    /// ‖Z‖_F after each multiplier update.
    pub multiplier_norm_history: Vec<f64>,
    /// Significant singular values of the final X (relative cutoff
    /// [`RANK_REL_TOL`]).
    pub estimated_rank: usize,
}

/// Elementwise soft thresholding: sgn(x)·max(|x| − τ, 0).
pub fn soft_threshold_matrix(m: &DenseMatrix, tau: f64) -> DenseMatrix {
    assert!(
        tau.is_finite() && tau >= 0.0,
        "soft threshold must be finite and non-negative, got {tau}"
    );
    let mut out = m.clone();
    for x in out.data_mut() {
        *x = x.signum() * (x.abs() - tau).max(0.0);
    }
    out
}

/// Reweighting rule wᵢ = c·√(rows·cols)/(σᵢ + eps). Non-increasing σ gives
/// non-descending weights, so the prox certificate holds by construction.
pub fn rpca_weights(sigma: &[f64], c: f64, rows: usize, cols: usize, eps: f64) -> Vec<f64> {
    let scale = c * ((rows * cols) as f64).sqrt();
    sigma.iter().map(|s| scale / (s + eps)).collect()
}

/// Number of singular values above `rel_tol` times the largest one.
/// The zero matrix has rank 0.
pub fn estimate_rank(x: &DenseMatrix, rel_tol: f64) -> Result<usize> {
    if !rel_tol.is_finite() || rel_tol <= 0.0 || rel_tol >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "rel_tol must be in (0, 1), got {rel_tol}"
        )));
    }
    let f = svd(x)?;
    Ok(rank_from_spectrum(&f.sigma, rel_tol))
}

pub(crate) fn rank_from_spectrum(sigma: &[f64], rel_tol: f64) -> usize {
    let s0 = sigma.first().copied().unwrap_or(0.0);
    if s0 <= 0.0 {
        return 0;
    }
    sigma.iter().filter(|&&s| s > rel_tol * s0).count()
}

/// Weighted Schatten p-norm RPCA by inexact ALM. The ℓ₁ term carries unit
/// weight (E-step threshold 1/μ); the balance against the low-rank term is
/// set entirely by the singular-value weights.
pub fn wsnm_rpca(y: &DenseMatrix, cfg: &RpcaConfig) -> Result<RpcaResult> {
    cfg.validate()?;
    alm_decompose(y, cfg, 1.0)
}

/// Nuclear-norm RPCA baseline: identical ALM loop with the X-step reduced to
/// singular value thresholding at 1/μ (p = 1, unit weights). `lambda` is the
/// ℓ₁ weight (E-step threshold λ/μ); 1/√max(rows, cols) is the standard
/// choice.
pub fn nnm_rpca(
    y: &DenseMatrix,
    lambda: f64,
    mu0: Option<f64>,
    rho: f64,
    tol: f64,
    max_iters: usize,
) -> Result<RpcaResult> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "lambda must be finite and positive, got {lambda}"
        )));
    }
    let cfg = RpcaConfig {
        p: 1.0,
        weight_c: 1.0,
        weight_mode: WeightMode::UniformFixed(1.0),
        mu0,
        rho,
        tol,
        max_iters,
    };
    cfg.validate()?;
    alm_decompose(y, &cfg, lambda)
}

fn alm_decompose(y: &DenseMatrix, cfg: &RpcaConfig, sparse_lambda: f64) -> Result<RpcaResult> {
    let rows = y.rows();
    let cols = y.cols();
    let r = rows.min(cols);
    let frob_y = y.frobenius_norm();
    if !frob_y.is_finite() {
        return Err(Error::InvalidInput(
            "observation entries must be finite".into(),
        ));
    }
    if frob_y == 0.0 {
        // Nothing to separate; report the trivial decomposition directly.
        return Ok(RpcaResult {
            x: DenseMatrix::zeros(rows, cols),
            e: DenseMatrix::zeros(rows, cols),
            iterations: 1,
            converged: true,
            residual_history: vec![0.0],
            step_history: vec![0.0],
            multiplier_norm_history: vec![0.0],
            estimated_rank: 0,
        });
    }

    let mut mu = match cfg.mu0 {
        Some(m) => m,
        None => cfg.default_mu0(y.spectral_norm(), rows, cols),
    };

    let fixed_weights = match cfg.weight_mode {
        WeightMode::FixedFromY => {
            let spectrum = svd(y)?.sigma;
            Some(WeightVector::non_descending(rpca_weights(
                &spectrum,
                cfg.weight_c,
                rows,
                cols,
                WEIGHT_EPSILON,
            ))?)
        }
        WeightMode::UniformFixed(w) => Some(WeightVector::uniform(r, w)?),
        WeightMode::ReweightedPerIteration => None,
    };

    let mut x = y.clone();
    let mut e = DenseMatrix::zeros(rows, cols);
    let mut z = DenseMatrix::zeros(rows, cols);
    let mut prev_factors: Option<SvdFactors> = None;
    let mut final_spectrum: Vec<f64> = Vec::new();
    let mut residual_history = Vec::new();
    let mut step_history = Vec::new();
    let mut multiplier_norm_history = Vec::new();
    let mut converged = false;

    for iter in 1..=cfg.max_iters {
        // E-step: soft threshold the sparse target Y + Z/μ − X.
        let mut t_e = y.clone();
        t_e.add_scaled_in_place(1.0 / mu, &z);
        t_e.sub_in_place(&x);
        let new_e = soft_threshold_matrix(&t_e, sparse_lambda / mu);

        // X-step: weighted Schatten prox of T = Y + Z/μ − E with a = μ/2,
        // i.e. per-singular-value GST at λᵢ = wᵢ/μ. The previous factors
        // warm-start the SVD.
        let mut t_x = y.clone();
        t_x.add_scaled_in_place(1.0 / mu, &z);
        t_x.sub_in_place(&new_e);
        let factors = svd_warm(&t_x, prev_factors.as_ref())?;
        let weights = match &fixed_weights {
            Some(w) => w.clone(),
            None => WeightVector::non_descending(rpca_weights(
                &factors.sigma,
                cfg.weight_c,
                rows,
                cols,
                WEIGHT_EPSILON,
            ))?,
        };
        let (new_x, shrunk) = shrink_factors(&factors, &weights, cfg.p, mu / 2.0)?;

        let step = new_x.diff_norm_sq(&x) + new_e.diff_norm_sq(&e);
        x = new_x;
        e = new_e;

        // Multiplier update and feasibility residual share one pass.
        let mut residual_m = y.clone();
        residual_m.sub_in_place(&x);
        residual_m.sub_in_place(&e);
        z.add_scaled_in_place(mu, &residual_m);
        let residual = residual_m.frobenius_norm() / frob_y;
        if !residual.is_finite() {
            return Err(Error::NonFinite {
                context: "feasibility residual",
                iteration: iter,
            });
        }

        residual_history.push(residual);
        step_history.push(step);
        multiplier_norm_history.push(z.frobenius_norm());
        final_spectrum = shrunk;
        prev_factors = Some(factors);
        mu *= cfg.rho;

        if residual <= cfg.tol {
            converged = true;
            break;
        }
    }

    let iterations = residual_history.len();
    let estimated_rank = rank_from_spectrum(&final_spectrum, RANK_REL_TOL);
    Ok(RpcaResult {
        x,
        e,
        iterations,
        converged,
        residual_history,
        step_history,
        multiplier_norm_history,
        estimated_rank,
    })
}
