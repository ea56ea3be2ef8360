use dbnmf_core::metrics::compare_runs;
use dbnmf_core::model::{simplex_residual, validate_state};
use dbnmf_core::synthetic::{exact_chain, hyperspectral_mixture, uniform_matrix};
use dbnmf_core::{
    deep_factorize, minvol_factorize, multilayer_factorize, BetaValue, Constraint, Error, SolverConfig, Weights,
};

fn config(beta: BetaValue, ranks: &[usize], sweeps: usize) -> SolverConfig {
    let mut c = SolverConfig::new(beta, ranks);
    c.max_sweeps = sweeps;
    c.warm_start_sweeps = sweeps;
    c
}

#[test]
fn multilayer_trace_has_one_record_per_layer_sweep() {
    let x = uniform_matrix(15, 12, 1);
    let out = multilayer_factorize(&x, &config(BetaValue::Two, &[5, 3, 2], 30)).unwrap();
    assert_eq!(out.trace.len(), 90);
    assert_eq!(out.lambdas, vec![1.0; 3]);
    assert!(validate_state(&out.state, Constraint::RowSimplexH, 1e-10).is_valid());
}

#[test]
fn deep_improves_on_its_warm_start() {
    let x = uniform_matrix(20, 15, 2);
    for beta in [BetaValue::Zero, BetaValue::Half, BetaValue::One, BetaValue::ThreeHalves] {
        let c = config(beta, &[6, 3], 40);
        let out = deep_factorize(&x, &c, None).unwrap();
        let obj = out.trace.objectives();
        assert!(obj.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-10)), "{beta}");
        assert!(simplex_residual(&out.state, Constraint::RowSimplexH) <= 1e-10);
        assert!(out.lambdas.iter().all(|l| *l > 0.0));
    }
}

#[test]
fn fixed_lambdas_are_used_verbatim() {
    let x = uniform_matrix(12, 10, 3);
    let mut c = config(BetaValue::One, &[4, 2], 5);
    c.lambda = Weights::Fixed(vec![4.0, 2.0]);
    let out = deep_factorize(&x, &c, None).unwrap();
    assert_eq!(out.lambdas, vec![4.0, 2.0]);
}

#[test]
fn deep_rejects_beta_two_with_several_layers() {
    let x = uniform_matrix(12, 10, 3);
    let err = deep_factorize(&x, &config(BetaValue::Two, &[4, 2], 5), None).unwrap_err();
    assert!(matches!(err, Error::Config(ref m) if m.contains("multilayer only")), "{err}");
    // A single layer has no intermediate W update, so β = 2 is fine.
    assert!(deep_factorize(&x, &config(BetaValue::Two, &[4], 5), None).is_ok());
}

#[test]
fn invalid_configurations_are_rejected() {
    let x = uniform_matrix(12, 10, 3);
    assert!(matches!(
        multilayer_factorize(&x, &config(BetaValue::One, &[2, 4], 5)),
        Err(Error::Config(_))
    ));
    let mut c = config(BetaValue::One, &[4, 2], 5);
    c.lambda = Weights::Fixed(vec![1.0]);
    assert!(matches!(deep_factorize(&x, &c, None), Err(Error::Config(_))));
    assert!(matches!(
        minvol_factorize(&x, &config(BetaValue::Half, &[4, 2], 5), None),
        Err(Error::Config(_))
    ));
}

#[test]
fn exact_chain_is_kept_by_the_deep_solver() {
    let chain = exact_chain(12, 10, &[4, 2], 5).unwrap();
    let mut c = config(BetaValue::One, &[4, 2], 10);
    c.lambda = Weights::Fixed(vec![1.0, 1.0]);
    let out = deep_factorize(&chain.x, &c, Some(chain.clone())).unwrap();
    for l in 0..2 {
        assert!(out.state.h[l].relative_distance(&chain.h[l]).unwrap() < 1e-8);
        assert!(out.state.w[l].relative_distance(&chain.w[l]).unwrap() < 1e-8);
    }
}

#[test]
fn minvol_keeps_columns_on_the_simplex() {
    let hsi = hyperspectral_mixture(12, 8, 8, 3, 0.5, 4).unwrap();
    let mut c = config(BetaValue::One, &[3, 2], 30).with_alphas(&[0.1, 0.1]);
    c.admm_max_iter = 20;
    let out = minvol_factorize(&hsi.x, &c, None).unwrap();
    assert!(simplex_residual(&out.state, Constraint::ColumnSimplexW) <= 1e-10);
    assert_eq!(out.trace.records[0].logdets.len(), 2);
    assert!(out.trace.records.iter().all(|r| r.logdets.iter().all(|v| v.is_finite())));
}

#[test]
fn parallel_runs_are_bitwise_identical() {
    let x = uniform_matrix(40, 30, 6);
    let mut c = config(BetaValue::Half, &[6, 3], 15);
    let seq = deep_factorize(&x, &c, None).unwrap();
    c.threads = 4;
    let par = deep_factorize(&x, &c, None).unwrap();
    assert_eq!(seq.state, par.state);
    assert_eq!(seq.trace.objectives(), par.trace.objectives());

    let hsi = hyperspectral_mixture(10, 6, 6, 3, 0.5, 1).unwrap();
    let mut c = config(BetaValue::One, &[3, 2], 10).with_alphas(&[0.1, 0.1]);
    let seq = minvol_factorize(&hsi.x, &c, None).unwrap();
    c.threads = 3;
    let par = minvol_factorize(&hsi.x, &c, None).unwrap();
    assert_eq!(seq.state, par.state);
}

#[test]
fn seeds_control_the_run() {
    let x = uniform_matrix(12, 10, 7);
    let mut c = config(BetaValue::One, &[4, 2], 10);
    let a = deep_factorize(&x, &c, None).unwrap();
    let b = deep_factorize(&x, &c, None).unwrap();
    assert_eq!(a.state, b.state);
    assert_eq!(a.trace.objectives(), b.trace.objectives());
    c.seed = 1;
    let d = deep_factorize(&x, &c, None).unwrap();
    assert_ne!(a.state, d.state);
    let report = compare_runs(&a.state, &d.state, BetaValue::One).unwrap();
    assert_eq!(report.layers.len(), 2);
}

#[test]
fn early_stop_shortens_converged_runs() {
    let chain = exact_chain(12, 10, &[4, 2], 8).unwrap();
    let mut c = config(BetaValue::One, &[4, 2], 50);
    c.lambda = Weights::Fixed(vec![1.0, 1.0]);
    c.early_stop = true;
    let out = deep_factorize(&chain.x.clone(), &c, Some(chain)).unwrap();
    assert!(out.trace.len() < 50);
}
