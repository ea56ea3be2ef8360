//! Multilayer NMF and the deep β-NMF block MM solver.

use std::time::Instant;

use crate::divergence::{beta_div_matrix, BetaValue};
use crate::error::{Error, Result};
use crate::linalg::logdet_gram;
use crate::matrix::DenseMatrix;
use crate::model::{
    auto_balance_weights, eval_objective, init_random, simplex_residual, Constraint,
    ConvergenceTrace, DeepState, Model, ObjectiveWeights, SolverConfig, SweepRecord, Weights,
};
use crate::updates::{update_h_simplex, update_w_inner, update_w_terminal, InnerWContext};

/// Result of a solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutput {
    pub state: DeepState,
    pub trace: ConvergenceTrace,
    /// Layer weights used by the run (all ones for multilayer).
    pub lambdas: Vec<f64>,
    pub diagnostics: RunDiagnostics,
}

/// Counters for events that do not stop a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunDiagnostics {
    /// Inner ADMM solves that hit the iteration cap above tolerance.
    pub admm_unconverged: usize,
    /// Inner ADMM results discarded because they increased the block
    /// objective (the previous `W` was kept).
    pub admm_rejected: usize,
}

/// Runs `f` inside a dedicated rayon pool when more than one thread is
/// requested.
pub(crate) fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if threads <= 1 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    pool.install(f)
}

/// `log det(W_l^T W_l + δI)` per layer; the plain model reports it as a
/// conditioning diagnostic.
pub(crate) fn layer_logdets(state: &DeepState, delta: f64) -> Result<Vec<f64>> {
    state.w.iter().map(|w| logdet_gram(w, delta)).collect()
}

/// Largest objective increase tolerated between sweeps. The relative part
/// covers the contract; the absolute part covers rounding in the objective
/// evaluation itself when the objective is near zero.
pub(crate) fn monotone_slack(previous: f64, relative: f64, state: &DeepState, lambdas: &[f64]) -> f64 {
    let mass: f64 = (0..state.num_layers())
        .map(|l| lambdas[l] * state.target(l).sum())
        .sum();
    relative * previous.abs() + 64.0 * f64::EPSILON * mass
}

pub(crate) fn check_finite(value: f64, sweep: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!("objective is {value} at sweep {sweep}")))
    }
}

pub(crate) fn should_stop(config: &SolverConfig, previous: f64, current: f64) -> bool {
    config.early_stop && (previous - current).abs() <= config.rel_obj_tol * previous.abs().max(1.0)
}

fn check_beta_supported(beta: BetaValue, layers: usize) -> Result<()> {
    if layers > 1 && !beta.has_inner_update() {
        return Err(Error::Config(format!(
            "deep beta-NMF supports beta in {{0, 0.5, 1, 1.5}}; beta = {beta} is supported for multilayer only"
        )));
    }
    Ok(())
}

fn check_warm(x: &DenseMatrix, warm: &DeepState, ranks: &[usize]) -> Result<()> {
    if warm.x.shape() != x.shape() {
        return Err(Error::Dimension(format!(
            "warm start built for {:?} data, got {:?}",
            warm.x.shape(),
            x.shape()
        )));
    }
    if warm.ranks() != ranks {
        return Err(Error::RankMismatch(format!(
            "warm start ranks {:?} vs configured {:?}",
            warm.ranks(),
            ranks
        )));
    }
    if warm.w.iter().chain(&warm.h).any(|f| !(f.min_value() > 0.0)) {
        return Err(Error::Precondition("warm start factors must be entrywise positive".into()));
    }
    Ok(())
}

/// Greedy layer-by-layer NMF: fit `X ≈ W_1 H_1`, then `W_1 ≈ W_2 H_2` with
/// `W_1` frozen, and so on. Each layer runs `config.max_sweeps` alternating
/// steps (row-simplex `H`, then standard MU on `W`).
///
/// One trace record is written per step; `total_objective` is the
/// divergence of the layer being fitted, which is what each step decreases.
pub fn multilayer_factorize(x: &DenseMatrix, config: &SolverConfig) -> Result<SolveOutput> {
    config.validate()?;
    let ranks = config.ranks();
    let start = init_random(x, &ranks, config.seed, Constraint::RowSimplexH, config.eps_floor)?;
    with_threads(config.threads, || multilayer_from(start, config, config.max_sweeps))
}

pub(crate) fn multilayer_from(
    mut state: DeepState,
    config: &SolverConfig,
    sweeps: usize,
) -> Result<SolveOutput> {
    let beta = config.beta;
    let eps = config.eps_floor;
    let layers = state.num_layers();
    let clock = Instant::now();
    let mut trace = ConvergenceTrace::new(layers);
    let mut step = 0;
    for l in 0..layers {
        for _ in 0..sweeps {
            let target = state.target(l).clone();
            let mut h = update_h_simplex(&state.w[l], &target, &state.h[l], beta)?;
            h.floor_in_place(eps);
            state.h[l] = h;
            let mut w = update_w_terminal(&target, &state.w[l], &state.h[l], beta)?;
            w.floor_in_place(eps);
            state.w[l] = w;

            step += 1;
            let layer_errors = state.layer_divergences(beta)?;
            let current = layer_errors[l];
            check_finite(current, step)?;
            trace.push(SweepRecord {
                sweep: step,
                total_objective: current,
                layer_errors,
                logdets: layer_logdets(&state, config.delta)?,
                max_residual: simplex_residual(&state, Constraint::RowSimplexH),
                seconds: clock.elapsed().as_secs_f64(),
            })?;
        }
    }
    Ok(SolveOutput {
        state,
        trace,
        lambdas: vec![1.0; layers],
        diagnostics: RunDiagnostics::default(),
    })
}

/// Deep β-NMF: block MM on `Σ λ_l D_β(W_{l-1}, W_l H_l)` with row-simplex
/// `H_l`. Without `warm`, the run starts from `warm_start_sweeps` of
/// multilayer NMF (or a random state when that budget is zero).
///
/// Fails with [`Error::NonMonotone`] if a sweep increases the objective
/// beyond a `1e-10` relative slack.
pub fn deep_factorize(
    x: &DenseMatrix,
    config: &SolverConfig,
    warm: Option<DeepState>,
) -> Result<SolveOutput> {
    config.validate()?;
    check_beta_supported(config.beta, config.layers.len())?;
    let ranks = config.ranks();
    with_threads(config.threads, || {
        let state = match warm {
            Some(w) => {
                check_warm(x, &w, &ranks)?;
                w
            }
            None => {
                let start =
                    init_random(x, &ranks, config.seed, Constraint::RowSimplexH, config.eps_floor)?;
                if config.warm_start_sweeps > 0 {
                    multilayer_from(start, config, config.warm_start_sweeps)?.state
                } else {
                    start
                }
            }
        };
        deep_from(state, config)
    })
}

pub(crate) fn resolve_lambdas(state: &DeepState, config: &SolverConfig, beta: BetaValue) -> Result<Vec<f64>> {
    match &config.lambda {
        Weights::Auto => Ok(auto_balance_weights(state, beta)?.weights),
        Weights::Fixed(v) => Ok(v.clone()),
    }
}

/// One sweep of the deep solver: for each layer, `H_l` then `W_l`.
pub fn deep_sweep(state: &mut DeepState, lambdas: &[f64], beta: BetaValue, eps: f64) -> Result<()> {
    let layers = state.num_layers();
    for l in 0..layers {
        let target = state.target(l).clone();
        let mut h = update_h_simplex(&state.w[l], &target, &state.h[l], beta)?;
        h.floor_in_place(eps);
        state.h[l] = h;
        let mut w = if l + 1 < layers {
            let w_bar = state.w[l + 1].matmul(&state.h[l + 1])?;
            let ctx = InnerWContext::new(
                &target,
                &state.w[l],
                &state.h[l],
                &w_bar,
                lambdas[l + 1] / lambdas[l],
            )?;
            update_w_inner(&ctx, beta)?
        } else {
            update_w_terminal(&target, &state.w[l], &state.h[l], beta)?
        };
        w.floor_in_place(eps);
        state.w[l] = w;
    }
    Ok(())
}

fn deep_from(mut state: DeepState, config: &SolverConfig) -> Result<SolveOutput> {
    let beta = config.beta;
    let lambdas = resolve_lambdas(&state, config, beta)?;
    let weights = ObjectiveWeights {
        lambdas: lambdas.clone(),
        alphas: vec![0.0; lambdas.len()],
        delta: config.delta,
    };
    let clock = Instant::now();
    let mut trace = ConvergenceTrace::new(state.num_layers());
    let mut previous = eval_objective(&state, beta, &weights, Model::Plain)?.total;
    check_finite(previous, 0)?;
    for sweep in 1..=config.max_sweeps {
        deep_sweep(&mut state, &lambdas, beta, config.eps_floor)?;
        let obj = eval_objective(&state, beta, &weights, Model::Plain)?;
        check_finite(obj.total, sweep)?;
        if obj.total > previous + monotone_slack(previous, 1e-10, &state, &lambdas) {
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
            max_residual: simplex_residual(&state, Constraint::RowSimplexH),
            seconds: clock.elapsed().as_secs_f64(),
        })?;
        let stop = should_stop(config, previous, obj.total);
        previous = obj.total;
        if stop {
            break;
        }
    }
    Ok(SolveOutput {
        state,
        trace,
        lambdas,
        diagnostics: RunDiagnostics::default(),
    })
}

/// `D_β(W_{l-1}, W_l H_l)` of the final state, per layer.
pub fn final_layer_errors(output: &SolveOutput, beta: BetaValue) -> Result<Vec<f64>> {
    (0..output.state.num_layers())
        .map(|l| beta_div_matrix(output.state.target(l), &output.state.product(l)?, beta))
        .collect()
}
