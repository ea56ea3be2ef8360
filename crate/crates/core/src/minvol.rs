//! Minimum-volume deep KL-NMF: column-simplex `W_l`, a `log det` volume
//! penalty on every layer, and an inner ADMM for intermediate layers.
//!
//! For an intermediate layer the `W` block objective (divided by `λ_l`) is
//! `G(W, W̃) + α g(W, W̃) + λ D_KL(W, W̄)` with `α = α_l / λ_l` and
//! `λ = λ_{l+1} / λ_l`. ADMM splits it as `W = Z`: the `W` step handles the
//! majorizers and the simplex constraint, the `Z` step handles the coupling
//! to the next layer.
//!
//! Stationarity of the `W` step for entry `(i, k)` is the quadratic
//! `q w^2 + c w - w̃ R = 0` with
//!
//! ```text
//! R = (Y / (W̃ H)) H^T
//! q = 2α (W̃ (A⁺ + A⁻))_ik / w̃_ik + ρ
//! c = (e H^T)_ik - 4α (W̃ A⁻)_ik - ρ (Z - U)_ik + μ_k
//! ```
//!
//! and one multiplier `μ_k` per column enforcing a unit column sum.

use std::time::Instant;

use crate::deep::{
    check_finite, layer_logdets, monotone_slack, multilayer_from, resolve_lambdas, should_stop,
    with_threads, RunDiagnostics, SolveOutput,
};
use crate::divergence::{beta_div_matrix, BetaValue};
use crate::error::{Error, Result};
use crate::linalg::{inverse_gram, logdet_gram};
use crate::matrix::{try_for_each_row_mut, DenseMatrix};
use crate::model::{
    eval_objective, init_random, simplex_residual, Constraint, ConvergenceTrace, DeepState, Model,
    ObjectiveWeights, SolverConfig, SweepRecord,
};
use crate::scalar::{expand_bracket, lambert_w0, lambert_w0_from_log, solve_monotone_from, Direction};
use crate::updates::update_h_free;

const COLUMN_ROOT_TOL: f64 = 1e-13;

/// `A = (W̃^T W̃ + δI)^{-1}` split into nonnegative parts.
#[derive(Debug, Clone, PartialEq)]
pub struct LogDetContext {
    pub a: DenseMatrix,
    pub a_plus: DenseMatrix,
    pub a_minus: DenseMatrix,
    pub delta: f64,
    /// `log det(W̃^T W̃ + δI)`
    pub logdet_ref: f64,
}

impl LogDetContext {
    pub fn new(w_ref: &DenseMatrix, delta: f64) -> Result<Self> {
        let a = inverse_gram(w_ref, delta)?;
        Ok(Self {
            a_plus: a.map(|v| v.max(0.0)),
            a_minus: a.map(|v| (-v).max(0.0)),
            a,
            delta,
            logdet_ref: logdet_gram(w_ref, delta)?,
        })
    }
}

/// Separable quadratic majorizer of `W -> log det(W^T W + δI)` built at `W̃`:
///
/// ```text
/// g(W, W̃) = log det(W̃^T W̃ + δI) - <A, W̃^T W̃>
///           + Σ_i [ l(w̃_i) + <Δw_i, 2 A w̃_i> + ½ Σ_k Φ_ik Δw_ik^2 ]
/// ```
///
/// with `l(w) = w^T A w`, rows `w_i`, `Δw_i = w_i - w̃_i` and
/// `Φ_ik = 2 ((A⁺ + A⁻) w̃_i)_k / w̃_ik`.
pub fn logdet_majorizer(w: &DenseMatrix, ctx: &LogDetContext, w_ref: &DenseMatrix) -> Result<f64> {
    w.ensure_same_shape(w_ref, "majorizer point vs reference")?;
    if !(w_ref.min_value() > 0.0) {
        return Err(Error::Precondition(
            "log-det majorizer needs an entrywise positive reference".into(),
        ));
    }
    let aw = w_ref.matmul(&ctx.a)?;
    let abs_sum = ctx.a_plus.zip_map(&ctx.a_minus, |p, m| p + m)?;
    let phi_w = w_ref.matmul(&abs_sum)?;
    let mut total = ctx.logdet_ref;
    for i in 0..w.rows() {
        for k in 0..w.cols() {
            let wt = w_ref.get(i, k);
            let dw = w.get(i, k) - wt;
            let phi = 2.0 * phi_w.get(i, k) / wt;
            // -<A, W̃^T W̃> + Σ l(w̃_i) cancel exactly; keep only the model terms.
            total += 2.0 * aw.get(i, k) * dw + 0.5 * phi * dw * dw;
        }
    }
    Ok(total)
}

/// Fixed parts of the `W`-step quadratic: `q`, `b = w̃ ⊙ R` and the part of
/// `c` that does not depend on `Z`, `U` or `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WStepCoefficients {
    pub q: DenseMatrix,
    pub b: DenseMatrix,
    pub c0: DenseMatrix,
    pub rho: f64,
}

impl WStepCoefficients {
    /// `alpha_ratio = α_l / λ_l`; `rho = 0` gives the last-layer update.
    pub fn new(
        y: &DenseMatrix,
        w_tilde: &DenseMatrix,
        h: &DenseMatrix,
        logdet: &LogDetContext,
        alpha_ratio: f64,
        rho: f64,
    ) -> Result<Self> {
        if !(w_tilde.min_value() > 0.0) {
            return Err(Error::Precondition("current W must be entrywise positive".into()));
        }
        let v = w_tilde.matmul(h)?;
        v.ensure_same_shape(y, "data vs product")?;
        let ratio = y.zip_map(&v, |a, b| a / b)?;
        let r = ratio.matmul_nt(h)?;
        let b = w_tilde.zip_map(&r, |w, r| w * r)?;
        let h_sums = h.row_sums();
        let abs_sum = logdet.a_plus.zip_map(&logdet.a_minus, |p, m| p + m)?;
        let wa_abs = w_tilde.matmul(&abs_sum)?;
        let wa_minus = w_tilde.matmul(&logdet.a_minus)?;
        let (m, rank) = w_tilde.shape();
        let q = DenseMatrix::from_fn(m, rank, |i, k| {
            2.0 * alpha_ratio * wa_abs.get(i, k) / w_tilde.get(i, k) + rho
        });
        let c0 = DenseMatrix::from_fn(m, rank, |i, k| h_sums[k] - 4.0 * alpha_ratio * wa_minus.get(i, k));
        Ok(Self { q, b, c0, rho })
    }
}

/// Positive root of `q w^2 + c w - b = 0` and its derivative in `c`.
fn quadratic_root(q: f64, b: f64, c: f64) -> (f64, f64) {
    if q == 0.0 {
        return if c > 0.0 {
            (b / c, -b / (c * c))
        } else {
            (f64::INFINITY, f64::NEG_INFINITY)
        };
    }
    let disc = (c * c + 4.0 * q * b).sqrt();
    let w = if c > 0.0 {
        2.0 * b / (c + disc)
    } else {
        (disc - c) / (2.0 * q)
    };
    let dw = if disc > 0.0 { -w / disc } else { 0.0 };
    (w, dw)
}

/// Solves every column's multiplier so that `Σ_i w_ik(μ_k) = 1`.
fn simplex_columns(q: &DenseMatrix, b: &DenseMatrix, c: &DenseMatrix) -> Result<DenseMatrix> {
    let (m, r) = c.shape();
    let mut out_t = DenseMatrix::zeros(r, m);
    try_for_each_row_mut(out_t.as_mut_slice(), m, |k, col| {
        let qs: Vec<f64> = (0..m).map(|i| q.get(i, k)).collect();
        let bs: Vec<f64> = (0..m).map(|i| b.get(i, k)).collect();
        let cs: Vec<f64> = (0..m).map(|i| c.get(i, k)).collect();
        solve_column(&qs, &bs, &cs, col).map_err(|e| match e {
            Error::NoRoot(msg) | Error::Numerical(msg) => {
                Error::Numerical(format!("column {k}: {msg}"))
            }
            other => other,
        })
    })?;
    Ok(out_t.transpose())
}

fn solve_column(q: &[f64], b: &[f64], c: &[f64], out: &mut [f64]) -> Result<()> {
    if q.iter().all(|&v| v == 0.0) {
        // No curvature: with a column-constant c the multiplier only rescales.
        let s: f64 = b.iter().sum();
        if !(s > 0.0) {
            return Err(Error::Numerical("vanishing MU numerator".into()));
        }
        for (o, &bv) in out.iter_mut().zip(b) {
            *o = bv / s;
        }
        return Ok(());
    }
    let phi = |mu: f64| -> (f64, f64) {
        let mut f = -1.0;
        let mut df = 0.0;
        for i in 0..q.len() {
            let (w, dw) = quadratic_root(q[i], b[i], c[i] + mu);
            f += w;
            df += dw;
        }
        (f, df)
    };
    let f0 = phi(0.0).0;
    let mu = if f0.abs() <= COLUMN_ROOT_TOL {
        0.0
    } else {
        let scale = (0..q.len())
            .map(|i| c[i].abs().max((4.0 * q[i] * b[i]).sqrt()).max(q[i]))
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let dir = if f0 > 0.0 { Direction::Up } else { Direction::Down };
        let bracket = expand_bracket(|x| phi(x).0, 0.0, scale, dir, 1100)?;
        solve_monotone_from(phi, bracket, 0.0, COLUMN_ROOT_TOL)?
    };
    let mut s = 0.0;
    for i in 0..q.len() {
        out[i] = quadratic_root(q[i], b[i], c[i] + mu).0;
        s += out[i];
    }
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Numerical(format!("column sum {s} after multiplier solve")));
    }
    out.iter_mut().for_each(|v| *v /= s);
    Ok(())
}

/// ADMM `W` step: the column-simplex minimizer of the majorized block plus
/// `(ρ/2) ||W - Z + U||_F^2`.
pub fn admm_w_step(coef: &WStepCoefficients, z: &DenseMatrix, u: &DenseMatrix) -> Result<DenseMatrix> {
    z.ensure_same_shape(&coef.c0, "Z vs W")?;
    u.ensure_same_shape(&coef.c0, "U vs W")?;
    let rho = coef.rho;
    let c = DenseMatrix::from_fn(coef.c0.rows(), coef.c0.cols(), |i, k| {
        coef.c0.get(i, k) - rho * (z.get(i, k) - u.get(i, k))
    });
    simplex_columns(&coef.q, &coef.b, &c)
}

/// Last-layer min-vol update: column-simplex minimizer of
/// `G(W, W̃) + α g(W, W̃)` with `α = α_L / λ_L`.
pub fn minvol_terminal_w(
    y: &DenseMatrix,
    w_tilde: &DenseMatrix,
    h: &DenseMatrix,
    alpha_ratio: f64,
    delta: f64,
) -> Result<DenseMatrix> {
    let ctx = LogDetContext::new(w_tilde, delta)?;
    let coef = WStepCoefficients::new(y, w_tilde, h, &ctx, alpha_ratio, 0.0)?;
    simplex_columns(&coef.q, &coef.b, &coef.c0)
}

/// Entrywise minimizer of `d_KL(z, w̄) + (ν/2)(z - v)^2`, the root of
/// `log(z / w̄) + ν (z - v) = 0`: `z = W0(ν w̄ e^(ν v)) / ν`.
pub fn z_min_entry(w_bar: f64, v: f64, nu: f64) -> Result<f64> {
    let log_arg = nu.ln() + w_bar.ln() + nu * v;
    if log_arg < -700.0 {
        // W0(x) = x to working precision.
        return Ok(w_bar * (nu * v).exp());
    }
    let u = if log_arg > 700.0 {
        lambert_w0_from_log(log_arg)?
    } else {
        lambert_w0(log_arg.exp())?
    };
    Ok(u / nu)
}

/// ADMM `Z` step over a whole matrix, `V = W + U`.
pub fn z_min_step(w_bar: &DenseMatrix, v: &DenseMatrix, nu: f64) -> Result<DenseMatrix> {
    w_bar.ensure_same_shape(v, "W_bar vs V")?;
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::Config(format!("nu must be positive, got {nu}")));
    }
    if !(w_bar.min_value() > 0.0) {
        return Err(Error::Precondition("W_bar must be entrywise positive".into()));
    }
    let cols = v.cols();
    let mut out = DenseMatrix::zeros(v.rows(), cols);
    try_for_each_row_mut(out.as_mut_slice(), cols, |i, row| {
        for (k, z) in row.iter_mut().enumerate() {
            *z = z_min_entry(w_bar.get(i, k), v.get(i, k), nu)?;
        }
        Ok(())
    })?;
    Ok(out)
}

/// `log(z / w̄) + ν (z - v)`, the `Z`-step stationarity residual.
pub fn z_kkt_residual(z: f64, w_bar: f64, v: f64, nu: f64) -> f64 {
    (z / w_bar).ln() + nu * (z - v)
}

/// Iterates of the inner ADMM.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub w: DenseMatrix,
    pub z: DenseMatrix,
    /// Scaled dual variables.
    pub u: DenseMatrix,
    pub iter: usize,
    /// `||W - Z||_F`
    pub primal_residual: f64,
}

impl AdmmState {
    /// `W^0 = Z^0 = W̃`, `U^0 = 0`.
    pub fn start(w_tilde: &DenseMatrix) -> Self {
        Self {
            w: w_tilde.clone(),
            z: w_tilde.clone(),
            u: DenseMatrix::zeros(w_tilde.rows(), w_tilde.cols()),
            iter: 0,
            primal_residual: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmOutcome {
    /// Column-simplex, ε-floored result.
    pub w: DenseMatrix,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub converged: bool,
}

/// Inputs of an intermediate-layer min-vol `W` update.
#[derive(Debug, Clone, Copy)]
pub struct AdmmProblem<'a> {
    /// `W_{l-1}`
    pub y: &'a DenseMatrix,
    pub w_tilde: &'a DenseMatrix,
    pub h: &'a DenseMatrix,
    /// `W_{l+1} H_{l+1}`
    pub w_bar: &'a DenseMatrix,
    /// `λ_{l+1} / λ_l`
    pub lambda_ratio: f64,
    /// `α_l / λ_l`
    pub alpha_ratio: f64,
    pub delta: f64,
}

/// Inner ADMM for an intermediate layer. `S`/`T`-type terms (`q`, `b`) are
/// built once from `W̃`; each iteration runs the `W` step, the `Z` step
/// with `ν = ρ / λ`, and the dual update `U <- U + W - Z`.
pub fn admm_solve_w(
    problem: &AdmmProblem<'_>,
    rho: f64,
    max_iter: usize,
    tol: f64,
    eps: f64,
) -> Result<AdmmOutcome> {
    if !(problem.lambda_ratio > 0.0) || !(rho > 0.0) {
        return Err(Error::Config("ADMM needs positive lambda ratio and rho".into()));
    }
    let ctx = LogDetContext::new(problem.w_tilde, problem.delta)?;
    let coef = WStepCoefficients::new(problem.y, problem.w_tilde, problem.h, &ctx, problem.alpha_ratio, rho)?;
    let nu = rho / problem.lambda_ratio;
    let mut st = AdmmState::start(problem.w_tilde);
    let mut residuals = Vec::with_capacity(max_iter);
    let mut converged = false;
    while st.iter < max_iter {
        st.w = admm_w_step(&coef, &st.z, &st.u)?;
        let v = st.w.zip_map(&st.u, |a, b| a + b)?;
        st.z = z_min_step(problem.w_bar, &v, nu)?;
        st.u = v.zip_map(&st.z, |v, z| v - z)?;
        st.primal_residual = st
            .w
            .zip_map(&st.z, |a, b| a - b)?
            .frobenius_norm();
        st.iter += 1;
        residuals.push(st.primal_residual);
        if st.primal_residual <= tol {
            converged = true;
            break;
        }
    }
    let mut w = st.w;
    w.floor_in_place(eps);
    w.normalize_cols();
    w.floor_in_place(eps);
    Ok(AdmmOutcome {
        w,
        iterations: st.iter,
        residuals,
        converged,
    })
}

/// True `W_l` block objective of the min-vol model (KL).
fn block_objective(
    y: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    coupling: Option<(&DenseMatrix, f64)>,
    lambda: f64,
    alpha: f64,
    delta: f64,
) -> Result<f64> {
    let mut f = lambda * beta_div_matrix(y, &w.matmul(h)?, BetaValue::One)?;
    if let Some((w_bar, lambda_next)) = coupling {
        f += lambda_next * beta_div_matrix(w, w_bar, BetaValue::One)?;
    }
    if alpha > 0.0 {
        f += alpha * logdet_gram(w, delta)?;
    }
    Ok(f)
}

/// Min-vol deep KL-NMF. Without `warm`, the run starts from
/// `warm_start_sweeps` of multilayer KL-NMF rescaled to column-simplex
/// `W_l` (or a random column-simplex state when that budget is zero).
pub fn minvol_factorize(
    x: &DenseMatrix,
    config: &SolverConfig,
    warm: Option<DeepState>,
) -> Result<SolveOutput> {
    config.validate()?;
    if config.beta != BetaValue::One {
        return Err(Error::Config(format!(
            "minimum-volume deep NMF requires beta = 1, got {}",
            config.beta
        )));
    }
    let ranks = config.ranks();
    with_threads(config.threads, || {
        let state = match warm {
            Some(w) => {
                if w.ranks() != ranks || w.x.shape() != x.shape() {
                    return Err(Error::RankMismatch(format!(
                        "warm start ranks {:?} vs configured {:?}",
                        w.ranks(),
                        ranks
                    )));
                }
                w
            }
            None if config.warm_start_sweeps > 0 => {
                let start = init_random(x, &ranks, config.seed, Constraint::RowSimplexH, config.eps_floor)?;
                multilayer_from(start, config, config.warm_start_sweeps)?
                    .state
                    .into_column_simplex(config.eps_floor)
            }
            None => init_random(x, &ranks, config.seed, Constraint::ColumnSimplexW, config.eps_floor)?,
        };
        minvol_from(state, config)
    })
}

fn minvol_from(mut state: DeepState, config: &SolverConfig) -> Result<SolveOutput> {
    let lambdas = resolve_lambdas(&state, config, BetaValue::One)?;
    let alphas = config.alphas();
    let weights = ObjectiveWeights {
        lambdas: lambdas.clone(),
        alphas: alphas.clone(),
        delta: config.delta,
    };
    let slack_scale = 10.0 * config.admm_tol * (alphas.iter().sum::<f64>() + lambdas.iter().sum::<f64>());
    let layers = state.num_layers();
    let eps = config.eps_floor;
    let clock = Instant::now();
    let mut diagnostics = RunDiagnostics::default();
    let mut trace = ConvergenceTrace::new(layers);
    let mut previous = eval_objective(&state, BetaValue::One, &weights, Model::MinVol)?.total;
    check_finite(previous, 0)?;
    for sweep in 1..=config.max_sweeps {
        for l in 0..layers {
            let target = state.target(l).clone();
            let mut h = update_h_free(&state.w[l], &target, &state.h[l], BetaValue::One)?;
            h.floor_in_place(eps);
            state.h[l] = h;

            let w_bar = if l + 1 < layers {
                Some(state.w[l + 1].matmul(&state.h[l + 1])?)
            } else {
                None
            };
            let candidate = match &w_bar {
                Some(w_bar) => {
                    let problem = AdmmProblem {
                        y: &target,
                        w_tilde: &state.w[l],
                        h: &state.h[l],
                        w_bar,
                        lambda_ratio: lambdas[l + 1] / lambdas[l],
                        alpha_ratio: alphas[l] / lambdas[l],
                        delta: config.delta,
                    };
                    let out = admm_solve_w(&problem, config.rho, config.admm_max_iter, config.admm_tol, eps)?;
                    if !out.converged {
                        diagnostics.admm_unconverged += 1;
                    }
                    out.w
                }
                None => {
                    let mut w = minvol_terminal_w(
                        &target,
                        &state.w[l],
                        &state.h[l],
                        alphas[l] / lambdas[l],
                        config.delta,
                    )?;
                    w.floor_in_place(eps);
                    w
                }
            };
            // The inner solve is inexact; keep the previous W if the
            // candidate does not decrease the true block objective.
            let coupling = w_bar.as_ref().map(|wb| (wb, lambdas[l + 1]));
            let block = |w: &DenseMatrix| {
                block_objective(&target, w, &state.h[l], coupling, lambdas[l], alphas[l], config.delta)
            };
            if block(&candidate)? <= block(&state.w[l])? {
                state.w[l] = candidate;
            } else {
                diagnostics.admm_rejected += 1;
            }
        }
        let obj = eval_objective(&state, BetaValue::One, &weights, Model::MinVol)?;
        check_finite(obj.total, sweep)?;
        let slack = slack_scale + monotone_slack(previous, 1e-10, &state, &lambdas);
        if obj.total > previous + slack {
            return Err(Error::NonMonotone {
                sweep,
                previous,
                current: obj.total,
            });
        }
        trace.push(SweepRecord {
            sweep,
            total_objective: obj.total,
            layer_errors: obj.divergences,
            logdets: layer_logdets(&state, config.delta)?,
            max_residual: simplex_residual(&state, Constraint::ColumnSimplexW),
            seconds: clock.elapsed().as_secs_f64(),
        })?;
        let stop = should_stop(config, previous, obj.total);
        previous = obj.total;
        if stop {
            break;
        }
    }
    if diagnostics.admm_unconverged > 0 {
        log::info!(
            "{} inner ADMM solves stopped at the iteration cap",
            diagnostics.admm_unconverged
        );
    }
    Ok(SolveOutput {
        state,
        trace,
        lambdas,
        diagnostics,
    })
}
