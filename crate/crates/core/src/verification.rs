//! Independent oracles: grid-refinement scalar minimization and a generic
//! majorizer checker. None of this shares code with the update kernels.

use crate::divergence::{beta_div_scalar, decomposition_terms, BetaValue};
use crate::error::{Error, Result};

/// Points per refinement level.
const GRID_POINTS: usize = 1000;

/// Argmin of a unimodal `objective` on `[lo, hi]` by repeated grid
/// refinement: each level evaluates a uniform grid and shrinks the interval
/// to the two cells around the best point.
pub fn brute_force_scalar_min<F>(objective: F, lo: f64, hi: f64, levels: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Precondition(format!("invalid search interval [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    let mut best_x = 0.5 * (a + b);
    for _ in 0..levels.max(1) {
        let step = (b - a) / GRID_POINTS as f64;
        let mut best = (f64::INFINITY, 0usize);
        for k in 0..=GRID_POINTS {
            let x = if k == GRID_POINTS { b } else { a + step * k as f64 };
            let v = objective(x);
            if !v.is_finite() {
                return Err(Error::Numerical(format!("objective is {v} at x = {x}")));
            }
            if v < best.0 {
                best = (v, k);
            }
        }
        let k = best.1;
        best_x = a + step * k as f64;
        let na = a + step * k.saturating_sub(1) as f64;
        let nb = (a + step * (k + 1) as f64).min(b);
        if !(nb > na) {
            break;
        }
        a = na;
        b = nb;
    }
    Ok(best_x)
}

/// [`brute_force_scalar_min`] over `log x`, for positive arguments spread
/// over many decades. Returns `x`.
pub fn brute_force_log_min<F>(objective: F, lo: f64, hi: f64, levels: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(lo > 0.0) {
        return Err(Error::Precondition("log-scale search needs lo > 0".into()));
    }
    let s = brute_force_scalar_min(|s| objective(s.exp()), lo.ln(), hi.ln(), levels)?;
    Ok(s.exp())
}

/// Majorized scalar objectives of the intermediate-layer `W` update, up to
/// additive constants, in the coefficient form of each closed-form solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarProblem {
    /// `a w - b ln w + λ (w ln w - w)`
    Kl { a: f64, b: f64, lambda: f64 },
    /// `(2/3) a w^(3/2) - 2 b sqrt(w) - c w`
    ThreeHalves { a: f64, b: f64, c: f64 },
    /// `a / w - λ ln w + c w`
    ItakuraSaito { a: f64, c: f64, lambda: f64 },
    /// `2 Ā / sqrt(w) + C̄ w - 2 B̄ sqrt(w)`
    Half { a_bar: f64, b_bar: f64, c_bar: f64 },
}

impl ScalarProblem {
    pub fn objective(&self, w: f64) -> f64 {
        match *self {
            ScalarProblem::Kl { a, b, lambda } => a * w - b * w.ln() + lambda * (w * w.ln() - w),
            ScalarProblem::ThreeHalves { a, b, c } => {
                (2.0 / 3.0) * a * w * w.sqrt() - 2.0 * b * w.sqrt() - c * w
            }
            ScalarProblem::ItakuraSaito { a, c, lambda } => a / w - lambda * w.ln() + c * w,
            ScalarProblem::Half { a_bar, b_bar, c_bar } => {
                2.0 * a_bar / w.sqrt() + c_bar * w - 2.0 * b_bar * w.sqrt()
            }
        }
    }

    pub fn beta(&self) -> BetaValue {
        match self {
            ScalarProblem::Kl { .. } => BetaValue::One,
            ScalarProblem::ThreeHalves { .. } => BetaValue::ThreeHalves,
            ScalarProblem::ItakuraSaito { .. } => BetaValue::Zero,
            ScalarProblem::Half { .. } => BetaValue::Half,
        }
    }

    /// Log-scale brute-force minimizer over `[1e-12, 1e12]`.
    pub fn brute_force(&self) -> Result<f64> {
        brute_force_log_min(|w| self.objective(w), 1e-12, 1e12, 12)
    }
}

/// Per-entry majorized block objective of an intermediate-layer `W` entry
/// built directly from the convex-concave decomposition: for row `i` of `Y`, the
/// entry's `H` row, the current value `w_tilde`, the rest of the row's
/// product `rest_j = Σ_{k'≠k} W_ik' H_k'j` and the coupling term
/// `λ d_β(w, w̄)`. Only the `w`-dependent terms are returned.
#[allow(clippy::too_many_arguments)]
pub fn entry_majorizer(
    beta: BetaValue,
    y_row: &[f64],
    h_row: &[f64],
    rest: &[f64],
    w_tilde: f64,
    w_bar: f64,
    lambda: f64,
    w: f64,
) -> f64 {
    let terms = decomposition_terms(beta);
    let mut g = 0.0;
    for j in 0..y_row.len() {
        let v = rest[j] + w_tilde * h_row[j];
        let weight = w_tilde * h_row[j] / v;
        g += weight * terms.check(y_row[j], v * w / w_tilde)
            + terms.hat_prime(y_row[j], v) * h_row[j] * (w - w_tilde);
    }
    g + lambda * beta_div_scalar(w, w_bar, beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MajorizerReport {
    /// `|u(x_ref) - f(x_ref)|`, scaled by `max(1, |f(x_ref)|)`.
    pub tangency_gap: f64,
    /// Smallest `(u(y) - f(y)) / max(1, |f(y)|)` over the samples.
    pub worst_margin: f64,
    pub samples: usize,
    pub tol: f64,
}

impl MajorizerReport {
    pub fn passed(&self) -> bool {
        self.tangency_gap <= self.tol && self.worst_margin >= -self.tol
    }
}

/// Checks tangency `u(x_ref) = f(x_ref)` and domination `u(y) >= f(y)` on
/// `samples` draws from `sampler`.
pub fn check_majorizer<X, F, U, S>(
    f: F,
    u: U,
    x_ref: &X,
    samples: usize,
    mut sampler: S,
    tol: f64,
) -> MajorizerReport
where
    F: Fn(&X) -> f64,
    U: Fn(&X) -> f64,
    S: FnMut() -> X,
{
    let f_ref = f(x_ref);
    let tangency_gap = (u(x_ref) - f_ref).abs() / f_ref.abs().max(1.0);
    let mut worst_margin = f64::INFINITY;
    for _ in 0..samples {
        let y = sampler();
        let fy = f(&y);
        let margin = (u(&y) - fy) / fy.abs().max(1.0);
        // NaN margins count as failures.
        worst_margin = if margin.is_nan() { f64::NEG_INFINITY } else { worst_margin.min(margin) };
    }
    MajorizerReport {
        tangency_gap: if tangency_gap.is_nan() { f64::INFINITY } else { tangency_gap },
        worst_margin,
        samples,
        tol,
    }
}
