use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use dbnmf_core::dataio::{
    self, read_factors, read_image_sidecar, read_matrix, write_factors, write_mosaic_pgm, write_trace,
    MatrixFormat,
};
use dbnmf_core::metrics::{compare_runs, default_zero_tol, hoyer_sparsity, mean_row_sparsity, ssc_row_zero_check};
use dbnmf_core::{
    deep_factorize, minvol_factorize, multilayer_factorize, BetaValue, SolveOutput, SolverConfig, Weights,
    EPS_FLOOR,
};

use crate::args::{CompareArgs, FactorizeArgs, InputFormat, MetricsArgs, Method, RenderArgs};

/// A problem with the invocation itself; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub const THREADS_VAR: &str = "DBNMF_THREADS";

fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(usage(format!("{THREADS_VAR} must be a positive integer, got {v:?}"))),
        },
    }
}

fn parse_beta(s: &str) -> Result<BetaValue> {
    s.parse::<BetaValue>().map_err(|e| usage(format!("--beta: {e}")))
}

fn parse_lambda(s: &str, layers: usize) -> Result<Weights> {
    if s.trim().eq_ignore_ascii_case("auto") {
        return Ok(Weights::Auto);
    }
    let values = s
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| usage(format!("--lambda must be `auto` or a list of numbers, got {s:?}")))?;
    if values.len() != layers {
        return Err(usage(format!("--lambda has {} values for {layers} layers", values.len())));
    }
    Ok(Weights::Fixed(values))
}

fn parse_tile(s: &str) -> Result<(usize, usize)> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| usage(format!("--tile must look like HxW, got {s:?}")))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| usage(format!("invalid tile size {s:?}")));
    Ok((parse(h)?, parse(w)?))
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Checks method/β combinations before any data is read.
fn check_method(method: Method, beta: BetaValue, layers: usize) -> Result<()> {
    match method {
        Method::Deep if layers > 1 && !beta.has_inner_update() => Err(usage(format!(
            "deep with beta = {beta} is not available: beta = 2 is supported for multilayer only"
        ))),
        Method::Minvol if beta != BetaValue::One => Err(usage(format!(
            "minvol requires beta = 1 (min-vol deep NMF is KL only), got beta = {beta}"
        ))),
        _ => Ok(()),
    }
}

fn build_config(args: &FactorizeArgs, beta: BetaValue, threads: usize) -> Result<SolverConfig> {
    let layers = args.ranks.len();
    let mut config = SolverConfig::new(beta, &args.ranks);
    if !args.alpha.is_empty() {
        if args.alpha.len() != layers {
            return Err(usage(format!("--alpha has {} values for {layers} layers", args.alpha.len())));
        }
        if args.method != Method::Minvol {
            return Err(usage("--alpha only applies to --method minvol"));
        }
        config = config.with_alphas(&args.alpha);
    }
    config.lambda = parse_lambda(&args.lambda, layers)?;
    config.delta = args.delta;
    config.rho = args.rho;
    config.admm_max_iter = args.admm_iters;
    config.admm_tol = args.admm_tol;
    config.max_sweeps = args.sweeps;
    config.warm_start_sweeps = args.warm_sweeps;
    config.seed = args.seed;
    config.eps_floor = args.eps_floor.unwrap_or(EPS_FLOOR);
    config.rel_obj_tol = args.rel_obj_tol;
    config.early_stop = args.early_stop;
    config.threads = threads;
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn manifest(args: &FactorizeArgs, config: &SolverConfig, shape: (usize, usize), out: &SolveOutput) -> String {
    let lambda_mode = match config.lambda {
        Weights::Auto => "auto",
        Weights::Fixed(_) => "fixed",
    };
    let last = out.trace.last();
    let mut m = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(m, "{k}={v}");
    };
    kv("input", args.input.display().to_string());
    kv("transpose", args.transpose.to_string());
    kv("rows", shape.0.to_string());
    kv("cols", shape.1.to_string());
    kv("method", args.method.name().into());
    kv("beta", config.beta.to_string());
    kv("ranks", join(&config.ranks()));
    kv("lambda_mode", lambda_mode.into());
    kv("lambda", join(&out.lambdas));
    kv("alpha", join(&config.alphas()));
    kv("delta", config.delta.to_string());
    kv("rho", config.rho.to_string());
    kv("admm_iters", config.admm_max_iter.to_string());
    kv("admm_tol", config.admm_tol.to_string());
    kv("sweeps", config.max_sweeps.to_string());
    kv("warm_sweeps", config.warm_start_sweeps.to_string());
    kv("seed", config.seed.to_string());
    kv("eps_floor", config.eps_floor.to_string());
    kv("rel_obj_tol", config.rel_obj_tol.to_string());
    kv("early_stop", config.early_stop.to_string());
    kv("threads", config.threads.to_string());
    kv("timing", args.timing.to_string());
    kv("trace_records", out.trace.len().to_string());
    kv("final_objective", last.map_or("nan".into(), |r| dataio::format_value(r.total_objective)));
    kv("admm_unconverged", out.diagnostics.admm_unconverged.to_string());
    kv("admm_rejected", out.diagnostics.admm_rejected.to_string());
    m
}

pub fn factorize(args: &FactorizeArgs) -> Result<()> {
    let beta = parse_beta(&args.beta)?;
    check_method(args.method, beta, args.ranks.len())?;
    let threads = threads_from_env()?;
    let config = build_config(args, beta, threads)?;

    let x = match args.format {
        InputFormat::Auto => dataio::read_matrix_auto(&args.input),
        InputFormat::Csv => read_matrix(&args.input, MatrixFormat::Csv),
        InputFormat::Binary => read_matrix(&args.input, MatrixFormat::Binary),
    }
    .with_context(|| format!("reading {}", args.input.display()))?;
    let x = if args.transpose { x.transpose() } else { x };
    log::info!("{} input {}x{}, {} thread(s)", args.method.name(), x.rows(), x.cols(), threads);

    let mut out = match args.method {
        Method::Multilayer => multilayer_factorize(&x, &config),
        Method::Deep => deep_factorize(&x, &config, None),
        Method::Minvol => minvol_factorize(&x, &config, None),
    }?;
    if out.diagnostics.admm_unconverged > 0 {
        log::warn!(
            "{} inner ADMM solves stopped at the iteration cap",
            out.diagnostics.admm_unconverged
        );
    }
    if !args.timing {
        for r in &mut out.trace.records {
            r.seconds = 0.0;
        }
    }

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_factors(&args.out, &out.state)?;
    write_trace(&out.trace, &args.out.join("trace.csv"))?;
    fs::write(args.out.join("manifest.txt"), manifest(args, &config, x.shape(), &out))?;
    Ok(())
}

/// `beta=` line of a run manifest.
fn manifest_beta(dir: &Path) -> Result<BetaValue> {
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("no --beta given and {} is unreadable", path.display()))?;
    let value = text
        .lines()
        .find_map(|l| l.strip_prefix("beta="))
        .with_context(|| format!("{} has no beta entry", path.display()))?;
    parse_beta(value.trim())
}

pub fn compare(args: &CompareArgs) -> Result<()> {
    let beta = match &args.beta {
        Some(b) => parse_beta(b)?,
        None => manifest_beta(&args.deep)?,
    };
    let deep = read_factors(&args.deep).with_context(|| format!("reading {}", args.deep.display()))?;
    let base = read_factors(&args.baseline).with_context(|| format!("reading {}", args.baseline.display()))?;
    let csv = compare_runs(&deep, &base, beta)?.to_csv();
    match &args.out {
        Some(p) => fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

pub fn render(args: &RenderArgs) -> Result<()> {
    let (tile_h, tile_w) = match (&args.tile, &args.sidecar) {
        (Some(t), _) => parse_tile(t)?,
        (None, Some(p)) => {
            let (w, h) = read_image_sidecar(p)?;
            (h, w)
        }
        (None, None) => return Err(usage("one of --tile or --sidecar is required")),
    };
    let state = read_factors(&args.factors).with_context(|| format!("reading {}", args.factors.display()))?;
    if args.layer == 0 || args.layer > state.num_layers() {
        return Err(usage(format!(
            "--layer must be between 1 and {}, got {}",
            state.num_layers(),
            args.layer
        )));
    }
    let features = state.composite_features(args.layer - 1)?;
    let mosaic = write_mosaic_pgm(&features, tile_h, tile_w, args.grid, &args.out)?;
    log::info!("wrote {}x{} mosaic to {}", mosaic.width, mosaic.height, args.out.display());
    Ok(())
}

pub fn metrics(args: &MetricsArgs) -> Result<()> {
    let h = dataio::read_matrix_auto(&args.h_file).with_context(|| format!("reading {}", args.h_file.display()))?;
    let tol = args.zero_tol.unwrap_or_else(|| default_zero_tol(&h));
    let ssc = ssc_row_zero_check(&h, tol);
    let mut out = String::new();
    let _ = writeln!(out, "# rows={} cols={} zero_tol={tol:e}", h.rows(), h.cols());
    let _ = writeln!(out, "# mean_hoyer={}", mean_row_sparsity(&h));
    let _ = writeln!(out, "# ssc_necessary={}", ssc.passes());
    for (a, b) in &ssc.contained_supports {
        let _ = writeln!(out, "# support of row {a} is contained in row {b}");
    }
    out.push_str("row,hoyer,zeros,passes\n");
    for (i, row) in ssc.rows.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{},{}", hoyer_sparsity(h.row(i)), row.zeros, row.passes);
    }
    print!("{out}");
    Ok(())
}
