//! Factorization state, solver configuration, objectives and initialization.
//!
//! The chain is `X = W_0 ≈ W_1 H_1`, `W_1 ≈ W_2 H_2`, …, with `W_l` of size
//! `m x r_l` and `H_l` of size `r_l x r_{l-1}` (`r_0 = n`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::divergence::{beta_div_matrix, BetaValue};
use crate::error::{Error, Result};
use crate::linalg::logdet_gram;
use crate::matrix::DenseMatrix;

/// Machine epsilon of IEEE doubles; the default positivity floor.
pub const EPS_FLOOR: f64 = 2.220446049250313e-16;

/// Which factor carries the sum-to-one normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Rows of every `H_l` sum to one (plain deep model).
    RowSimplexH,
    /// Columns of every `W_l` sum to one (minimum-volume model).
    ColumnSimplexW,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Plain,
    MinVol,
}

impl Model {
    pub fn constraint(self) -> Constraint {
        match self {
            Model::Plain => Constraint::RowSimplexH,
            Model::MinVol => Constraint::ColumnSimplexW,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub rank: usize,
    /// Min-vol penalty weight; ignored by the plain model.
    pub alpha: f64,
}

impl LayerSpec {
    pub fn new(rank: usize) -> Self {
        Self { rank, alpha: 0.0 }
    }
}

/// Per-layer divergence weights.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    /// `λ_l = 1 / D_β(W_{l-1}, W_l H_l)` at the starting state.
    Auto,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub beta: BetaValue,
    pub layers: Vec<LayerSpec>,
    pub lambda: Weights,
    pub delta: f64,
    pub rho: f64,
    pub admm_max_iter: usize,
    pub admm_tol: f64,
    pub max_sweeps: usize,
    pub warm_start_sweeps: usize,
    pub eps_floor: f64,
    pub seed: u64,
    pub rel_obj_tol: f64,
    /// Stop once `|F_k - F_{k-1}| <= rel_obj_tol * max(1, F_{k-1})`.
    pub early_stop: bool,
    /// Worker threads for the row-parallel kernels; 1 runs sequentially.
    pub threads: usize,
}

impl SolverConfig {
    pub fn new(beta: BetaValue, ranks: &[usize]) -> Self {
        Self {
            beta,
            layers: ranks.iter().map(|&r| LayerSpec::new(r)).collect(),
            lambda: Weights::Auto,
            delta: 0.1,
            rho: 100.0,
            admm_max_iter: 50,
            admm_tol: 1e-6,
            max_sweeps: 500,
            warm_start_sweeps: 500,
            eps_floor: EPS_FLOOR,
            seed: 0,
            rel_obj_tol: 1e-9,
            early_stop: false,
            threads: 1,
        }
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.rank).collect()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.alpha).collect()
    }

    pub fn with_alphas(mut self, alphas: &[f64]) -> Self {
        for (l, &a) in self.layers.iter_mut().zip(alphas) {
            l.alpha = a;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        validate_ranks(&self.ranks())?;
        if let Weights::Fixed(l) = &self.lambda {
            if l.len() != self.layers.len() {
                return Err(Error::Config(format!(
                    "{} lambda weights for {} layers",
                    l.len(),
                    self.layers.len()
                )));
            }
            if l.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Config("lambda weights must be positive".into()));
            }
        }
        if self.layers.iter().any(|l| !(l.alpha >= 0.0) || !l.alpha.is_finite()) {
            return Err(Error::Config("alpha weights must be nonnegative".into()));
        }
        for (name, v) in [
            ("delta", self.delta),
            ("rho", self.rho),
            ("admm_tol", self.admm_tol),
            ("eps_floor", self.eps_floor),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.rel_obj_tol >= 0.0) {
            return Err(Error::Config("rel_obj_tol must be nonnegative".into()));
        }
        if self.admm_max_iter == 0 {
            return Err(Error::Config("admm_max_iter must be at least 1".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn validate_ranks(ranks: &[usize]) -> Result<()> {
    if ranks.is_empty() {
        return Err(Error::Config("at least one layer is required".into()));
    }
    if ranks.contains(&0) {
        return Err(Error::Config("ranks must be at least 1".into()));
    }
    if ranks.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(format!(
            "ranks must strictly decrease across layers, got {ranks:?}"
        )));
    }
    Ok(())
}

/// The factor chain `X = W_0`, `{W_l, H_l}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepState {
    pub x: DenseMatrix,
    pub w: Vec<DenseMatrix>,
    pub h: Vec<DenseMatrix>,
}

impl DeepState {
    pub fn new(x: DenseMatrix, w: Vec<DenseMatrix>, h: Vec<DenseMatrix>) -> Result<Self> {
        let s = Self { x, w, h };
        let issues = s.dimension_issues();
        if let Some(first) = issues.into_iter().next() {
            return Err(Error::Dimension(first));
        }
        Ok(s)
    }

    pub fn num_layers(&self) -> usize {
        self.w.len()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.w.iter().map(DenseMatrix::cols).collect()
    }

    /// `W_{l-1}` for the zero-based layer index `l` (so `target(0)` is X).
    pub fn target(&self, l: usize) -> &DenseMatrix {
        if l == 0 {
            &self.x
        } else {
            &self.w[l - 1]
        }
    }

    /// `W_l H_l` for the zero-based layer index `l`.
    pub fn product(&self, l: usize) -> Result<DenseMatrix> {
        self.w[l].matmul(&self.h[l])
    }

    /// Unweighted `D_β(W_{l-1}, W_l H_l)` per layer.
    pub fn layer_divergences(&self, beta: BetaValue) -> Result<Vec<f64>> {
        (0..self.num_layers())
            .map(|l| beta_div_matrix(self.target(l), &self.product(l)?, beta))
            .collect()
    }

    /// `H_l ⋯ H_1`, the layer-`l` features expressed in the columns of X.
    pub fn composite_features(&self, l: usize) -> Result<DenseMatrix> {
        let mut acc = self.h[0].clone();
        for k in 1..=l {
            acc = self.h[k].matmul(&acc)?;
        }
        Ok(acc)
    }

    fn dimension_issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.w.len() != self.h.len() {
            issues.push(format!("{} W factors vs {} H factors", self.w.len(), self.h.len()));
            return issues;
        }
        let m = self.x.rows();
        for l in 0..self.w.len() {
            let prev_cols = self.target(l).cols();
            let (wr, wc) = self.w[l].shape();
            let (hr, hc) = self.h[l].shape();
            if wr != m {
                issues.push(format!("W_{} has {wr} rows, expected {m}", l + 1));
            }
            if hr != wc {
                issues.push(format!("H_{} has {hr} rows, W_{} has {wc} columns", l + 1, l + 1));
            }
            if hc != prev_cols {
                issues.push(format!(
                    "H_{} has {hc} columns, expected {prev_cols}",
                    l + 1
                ));
            }
        }
        issues
    }

    /// Rescales so that every `W_l` has unit column sums while keeping each
    /// product `W_l H_l` proportional to its target, i.e. converts a
    /// row-simplex-H chain into a column-simplex-W one.
    pub fn into_column_simplex(mut self, eps: f64) -> Self {
        for l in 0..self.w.len() {
            let sums = self.w[l].col_sums();
            // W_l <- W_l D^-1, H_l <- D H_l, and the next layer sees W_l D^-1,
            // so its H_{l+1} absorbs D^-1 on the right.
            for (k, &s) in sums.iter().enumerate() {
                if s > 0.0 {
                    for i in 0..self.w[l].rows() {
                        let v = self.w[l].get(i, k) / s;
                        self.w[l].set(i, k, v);
                    }
                    for j in 0..self.h[l].cols() {
                        let v = self.h[l].get(k, j) * s;
                        self.h[l].set(k, j, v);
                    }
                    if l + 1 < self.h.len() {
                        for i in 0..self.h[l + 1].rows() {
                            let v = self.h[l + 1].get(i, k) / s;
                            self.h[l + 1].set(i, k, v);
                        }
                    }
                }
            }
            self.w[l].floor_in_place(eps);
            self.h[l].floor_in_place(eps);
        }
        self
    }
}

/// Random strictly positive chain with the constraint enforced exactly.
///
/// Entries are drawn uniformly from `(eps, 1]`; the draw order (W_1, H_1,
/// W_2, H_2, …) and the ChaCha8 stream make the result a pure function of
/// `seed`.
pub fn init_random(
    x: &DenseMatrix,
    ranks: &[usize],
    seed: u64,
    constraint: Constraint,
    eps: f64,
) -> Result<DeepState> {
    validate_ranks(ranks)?;
    if x.count_negative() > 0 {
        return Err(Error::Domain("input matrix has negative entries".into()));
    }
    if x.max_value() <= 0.0 {
        return Err(Error::Degenerate("input matrix is all zero".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize, cols: usize| {
        DenseMatrix::from_fn(rows, cols, |_, _| (1.0 - rng.random::<f64>()).max(eps))
    };
    let m = x.rows();
    let mut prev = x.cols();
    let mut w = Vec::with_capacity(ranks.len());
    let mut h = Vec::with_capacity(ranks.len());
    for &r in ranks {
        w.push(draw(m, r));
        h.push(draw(r, prev));
        prev = r;
    }
    match constraint {
        Constraint::RowSimplexH => h.iter_mut().for_each(DenseMatrix::normalize_rows),
        Constraint::ColumnSimplexW => w.iter_mut().for_each(DenseMatrix::normalize_cols),
    }
    w.iter_mut().chain(h.iter_mut()).for_each(|f| f.floor_in_place(eps));
    DeepState::new(x.clone(), w, h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalancedWeights {
    pub weights: Vec<f64>,
    /// Layers whose divergence was zero (or infinite) and got weight 1.
    pub degenerate_layers: Vec<usize>,
}

/// `λ_l = 1 / D_β(W_{l-1}, W_l H_l)` so every weighted term starts at one.
pub fn auto_balance_weights(state: &DeepState, beta: BetaValue) -> Result<BalancedWeights> {
    let divs = state.layer_divergences(beta)?;
    Ok(balance_from_divergences(&divs))
}

pub fn balance_from_divergences(divs: &[f64]) -> BalancedWeights {
    let mut degenerate_layers = Vec::new();
    let weights = divs
        .iter()
        .enumerate()
        .map(|(l, &d)| {
            if d > 0.0 && d.is_finite() {
                1.0 / d
            } else {
                log::warn!("layer {} has divergence {d} at initialization; using weight 1", l + 1);
                degenerate_layers.push(l);
                1.0
            }
        })
        .collect();
    BalancedWeights {
        weights,
        degenerate_layers,
    }
}

/// Weights needed to evaluate an objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveWeights {
    pub lambdas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveBreakdown {
    pub total: f64,
    /// Unweighted `D_β(W_{l-1}, W_l H_l)`.
    pub divergences: Vec<f64>,
    /// `λ_l D_β(…)`
    pub weighted: Vec<f64>,
    /// `log det(W_l^T W_l + δI)`; zero-weighted in the plain model.
    pub logdets: Vec<f64>,
}

/// Plain: `Σ λ_l D_β(W_{l-1}, W_l H_l)`.
/// MinVol: `Σ λ_l D_KL(W_{l-1}, W_l H_l) + α_l log det(W_l^T W_l + δI)`;
/// the min-vol model is defined for KL only, so `beta` is ignored there.
pub fn eval_objective(
    state: &DeepState,
    beta: BetaValue,
    weights: &ObjectiveWeights,
    model: Model,
) -> Result<ObjectiveBreakdown> {
    let layers = state.num_layers();
    if weights.lambdas.len() != layers {
        return Err(Error::Dimension(format!(
            "{} lambdas for {layers} layers",
            weights.lambdas.len()
        )));
    }
    let beta = match model {
        Model::Plain => beta,
        Model::MinVol => {
            if weights.alphas.len() != layers {
                return Err(Error::Dimension(format!(
                    "{} alphas for {layers} layers",
                    weights.alphas.len()
                )));
            }
            BetaValue::One
        }
    };
    let divergences = state.layer_divergences(beta)?;
    let weighted: Vec<f64> = divergences
        .iter()
        .zip(&weights.lambdas)
        .map(|(d, l)| d * l)
        .collect();
    let logdets = match model {
        Model::Plain => vec![0.0; layers],
        Model::MinVol => state
            .w
            .iter()
            .map(|w| logdet_gram(w, weights.delta))
            .collect::<Result<_>>()?,
    };
    let mut total: f64 = weighted.iter().sum();
    if model == Model::MinVol {
        total += logdets
            .iter()
            .zip(&weights.alphas)
            .map(|(v, a)| v * a)
            .sum::<f64>();
    }
    Ok(ObjectiveBreakdown {
        total,
        divergences,
        weighted,
        logdets,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub dimension_issues: Vec<String>,
    /// `max(0, -min entry)` over all factors.
    pub max_negativity: f64,
    pub min_entry: f64,
    pub max_simplex_residual: f64,
    pub tol: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.dimension_issues.is_empty()
            && self.max_negativity <= self.tol
            && self.max_simplex_residual <= self.tol
    }
}

/// Largest `|sum - 1|` over the constrained rows/columns.
pub fn simplex_residual(state: &DeepState, constraint: Constraint) -> f64 {
    let sums: Vec<f64> = match constraint {
        Constraint::RowSimplexH => state.h.iter().flat_map(DenseMatrix::row_sums).collect(),
        Constraint::ColumnSimplexW => state.w.iter().flat_map(DenseMatrix::col_sums).collect(),
    };
    sums.into_iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
}

/// Read-only consistency report.
pub fn validate_state(state: &DeepState, constraint: Constraint, tol: f64) -> ValidationReport {
    let dimension_issues = state.dimension_issues();
    let min_entry = state
        .w
        .iter()
        .chain(&state.h)
        .map(DenseMatrix::min_value)
        .fold(f64::INFINITY, f64::min);
    let max_simplex_residual = if dimension_issues.is_empty() {
        simplex_residual(state, constraint)
    } else {
        f64::NAN
    };
    ValidationReport {
        dimension_issues,
        max_negativity: (-min_entry).max(0.0),
        min_entry,
        max_simplex_residual,
        tol,
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub sweep: usize,
    pub total_objective: f64,
    pub layer_errors: Vec<f64>,
    pub logdets: Vec<f64>,
    pub max_residual: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTrace {
    pub num_layers: usize,
    pub records: Vec<SweepRecord>,
}

impl ConvergenceTrace {
    pub fn new(num_layers: usize) -> Self {
        Self {
            num_layers,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, record: SweepRecord) -> Result<()> {
        if record.layer_errors.len() != self.num_layers || record.logdets.len() != self.num_layers {
            return Err(Error::Dimension(format!(
                "trace record with {} errors / {} logdets for {} layers",
                record.layer_errors.len(),
                record.logdets.len(),
                self.num_layers
            )));
        }
        if let Some(last) = self.records.last() {
            if record.sweep <= last.sweep {
                return Err(Error::Precondition(format!(
                    "sweep indices must increase ({} after {})",
                    record.sweep, last.sweep
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.total_objective).collect()
    }

    pub fn last(&self) -> Option<&SweepRecord> {
        self.records.last()
    }
}
