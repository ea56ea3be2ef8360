//! Multiplicative-update kernels for one block of the deep β-NMF objective.
//!
//! Every kernel minimizes the convex-concave majorizer of its block. With the
//! current approximation `Ṽ` the majorizer's stationarity condition for an
//! entry reads, in terms of the ratio `t = new / current`,
//!
//! ```text
//! P t^(β-1) - Q t^(β-2) + μ = 0            (β in [1, 2])
//! P + μ = Q t^(β-2)                          (β < 1)
//! ```
//!
//! where `P = Σ W Ṽ^(β-1)` and `Q = Σ W (Y ⊙ Ṽ^(β-2))` are the usual MU
//! numerator/denominator sums and `μ` is a Lagrange multiplier (zero when
//! the block is unconstrained).

use crate::divergence::{decomposition_terms, BetaValue};
use crate::error::{Error, Result};
use crate::matrix::{try_for_each_row_mut, DenseMatrix};
use crate::scalar::{
    cubic_one_real_root, expand_bracket, lambert_w0, lambert_w0_from_log, solve_monotone_from,
    Bracket, Direction,
};

/// Residual tolerance for the per-row simplex multiplier.
const SIMPLEX_ROOT_TOL: f64 = 1e-13;

/// `Ṽ^(β-1)` and `Y ⊙ Ṽ^(β-2)`, entrywise.
fn mu_parts(y: &DenseMatrix, v: &DenseMatrix, beta: BetaValue) -> Result<(DenseMatrix, DenseMatrix)> {
    let e1 = match beta {
        BetaValue::One => DenseMatrix::filled(v.rows(), v.cols(), 1.0),
        _ => v.map(|x| pow_minus_one(x, beta)),
    };
    let e2 = y.zip_map(v, |yv, x| yv * pow_minus_two(x, beta))?;
    Ok((e1, e2))
}

fn pow_minus_one(x: f64, beta: BetaValue) -> f64 {
    match beta {
        BetaValue::Zero => 1.0 / x,
        BetaValue::Half => 1.0 / x.sqrt(),
        BetaValue::One => 1.0,
        BetaValue::ThreeHalves => x.sqrt(),
        BetaValue::Two => x,
    }
}

fn pow_minus_two(x: f64, beta: BetaValue) -> f64 {
    match beta {
        BetaValue::Zero => 1.0 / (x * x),
        BetaValue::Half => 1.0 / (x * x.sqrt()),
        BetaValue::One => 1.0 / x,
        BetaValue::ThreeHalves => 1.0 / x.sqrt(),
        BetaValue::Two => 1.0,
    }
}

/// Sums `(P, Q)` for an update of `H` in `Y ≈ W H` (both `r x n`).
pub fn mu_sums_h(
    w: &DenseMatrix,
    y: &DenseMatrix,
    h: &DenseMatrix,
    beta: BetaValue,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let v = w.matmul(h)?;
    v.ensure_same_shape(y, "data vs product")?;
    let (e1, e2) = mu_parts(y, &v, beta)?;
    Ok((w.matmul_tn(&e1)?, w.matmul_tn(&e2)?))
}

/// Sums `(P, Q)` for an update of `W` in `Y ≈ W H` (both `m x r`).
pub fn mu_sums_w(
    y: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    beta: BetaValue,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let v = w.matmul(h)?;
    v.ensure_same_shape(y, "data vs product")?;
    let (e1, e2) = mu_parts(y, &v, beta)?;
    Ok((e1.matmul_nt(h)?, e2.matmul_nt(h)?))
}

/// Ratio `t(μ)` solving the entry's stationarity equation and `dt/dμ`.
///
/// `d = P + μ` is passed separately so callers can form it without
/// cancellation near the pole of the `β < 1` branch.
fn ratio(beta: BetaValue, p: f64, q: f64, mu: f64, d: f64) -> (f64, f64) {
    match beta {
        BetaValue::Two => {
            let t = (q - mu) / p;
            if t > 0.0 {
                (t, -1.0 / p)
            } else {
                (0.0, 0.0)
            }
        }
        _ if q == 0.0 => (0.0, 0.0),
        BetaValue::One => {
            let t = q / d;
            (t, -t / d)
        }
        BetaValue::Zero => {
            let t = (q / d).sqrt();
            (t, -0.5 * t / d)
        }
        BetaValue::Half => {
            let t = (q / d).powf(2.0 / 3.0);
            (t, -(2.0 / 3.0) * t / d)
        }
        BetaValue::ThreeHalves => {
            // P s^2 + μ s - Q = 0 for s = sqrt(t), taken in the form that
            // does not cancel for the sign of μ at hand.
            let disc = (mu * mu + 4.0 * p * q).sqrt();
            let s = if mu >= 0.0 {
                2.0 * q / (mu + disc)
            } else {
                (disc - mu) / (2.0 * p)
            };
            (s * s, -2.0 * s * s / disc)
        }
    }
}

/// Solves for the multiplier of one row and writes the new row into `out`.
/// Returns `false` when the row's MU numerator vanishes (row left as is).
fn simplex_row(beta: BetaValue, p: &[f64], q: &[f64], ht: &[f64], out: &mut [f64]) -> Result<bool> {
    if beta == BetaValue::One {
        let mut s = 0.0;
        for ((o, &h), &qv) in out.iter_mut().zip(ht).zip(q) {
            *o = h * qv;
            s += *o;
        }
        if !(s > 0.0) || !s.is_finite() {
            out.copy_from_slice(ht);
            return Ok(false);
        }
        out.iter_mut().for_each(|v| *v /= s);
        return Ok(true);
    }
    let active = |j: usize| ht[j] > 0.0 && (q[j] > 0.0 || beta == BetaValue::Two);
    let n = ht.len();
    if !(0..n).any(active) {
        out.copy_from_slice(ht);
        return Ok(false);
    }
    // Shift so that x = 0 sits at the pole for β < 1; then every denominator
    // (P_j - shift) + x is exact for the entry closest to the pole.
    let shift = if matches!(beta, BetaValue::Zero | BetaValue::Half) {
        (0..n)
            .filter(|&j| active(j))
            .map(|j| p[j])
            .fold(f64::INFINITY, f64::min)
    } else {
        0.0
    };
    let phi = |x: f64| -> (f64, f64) {
        let mu = x - shift;
        let mut f = -1.0;
        let mut df = 0.0;
        for j in 0..n {
            if ht[j] == 0.0 {
                continue;
            }
            let (t, dt) = ratio(beta, p[j], q[j], mu, (p[j] - shift) + x);
            f += ht[j] * t;
            df += ht[j] * dt;
        }
        (f, df)
    };
    let x0 = shift;
    let f0 = phi(x0).0;
    let x = if f0.abs() <= SIMPLEX_ROOT_TOL {
        x0
    } else {
        let scale = (0..n)
            .filter(|&j| active(j))
            .map(|j| p[j].max(q[j]))
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let bracket = if f0 > 0.0 {
            expand_bracket(|x| phi(x).0, x0, scale, Direction::Up, 1100)?
        } else if shift > 0.0 {
            // Approach the pole geometrically: x = shift * 2^-k.
            let mut prev = x0;
            let mut found = None;
            let mut x = x0;
            for _ in 0..1100 {
                x *= 0.5;
                if !(x > 0.0) {
                    break;
                }
                if phi(x).0 >= 0.0 {
                    found = Some(Bracket::new(x, prev)?);
                    break;
                }
                prev = x;
            }
            found.ok_or_else(|| Error::NoRoot("simplex multiplier below the pole".into()))?
        } else {
            expand_bracket(|x| phi(x).0, x0, scale, Direction::Down, 1100)?
        };
        solve_monotone_from(phi, bracket, x0, SIMPLEX_ROOT_TOL)?
    };
    let mu = x - shift;
    let mut s = 0.0;
    for j in 0..n {
        out[j] = if ht[j] == 0.0 {
            0.0
        } else {
            ht[j] * ratio(beta, p[j], q[j], mu, (p[j] - shift) + x).0
        };
        s += out[j];
    }
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Numerical(format!("simplex row sum {s} after multiplier solve")));
    }
    out.iter_mut().for_each(|v| *v /= s);
    Ok(true)
}

/// Minimizer of the convex-concave majorizer of `H -> D_β(Y, W H)` subject to
/// `H >= 0` and unit row sums.
pub fn update_h_simplex(
    w: &DenseMatrix,
    y: &DenseMatrix,
    h_tilde: &DenseMatrix,
    beta: BetaValue,
) -> Result<DenseMatrix> {
    Ok(update_h_simplex_report(w, y, h_tilde, beta)?.0)
}

/// As [`update_h_simplex`], also returning the rows left unchanged because
/// their MU numerator vanished.
pub fn update_h_simplex_report(
    w: &DenseMatrix,
    y: &DenseMatrix,
    h_tilde: &DenseMatrix,
    beta: BetaValue,
) -> Result<(DenseMatrix, Vec<usize>)> {
    let (p, q) = mu_sums_h(w, y, h_tilde, beta)?;
    let n = h_tilde.cols();
    let mut out = DenseMatrix::zeros(h_tilde.rows(), n);
    let locked = std::sync::Mutex::new(Vec::new());
    try_for_each_row_mut(out.as_mut_slice(), n, |k, row| {
        if !simplex_row(beta, p.row(k), q.row(k), h_tilde.row(k), row)? {
            locked.lock().expect("lock poisoned").push(k);
        }
        Ok(())
    })?;
    let mut locked = locked.into_inner().expect("lock poisoned");
    locked.sort_unstable();
    for k in &locked {
        log::warn!("row {k} of H has a vanishing MU numerator; left unchanged");
    }
    Ok((out, locked))
}

/// One β-MU step on `H` in `Y ≈ W H` with no constraint.
pub fn update_h_free(
    w: &DenseMatrix,
    y: &DenseMatrix,
    h_tilde: &DenseMatrix,
    beta: BetaValue,
) -> Result<DenseMatrix> {
    let (p, q) = mu_sums_h(w, y, h_tilde, beta)?;
    apply_unconstrained(h_tilde, &p, &q, beta)
}

/// One β-MU step on the last layer's `W` in `Y ≈ W H`.
pub fn update_w_terminal(
    y: &DenseMatrix,
    w_tilde: &DenseMatrix,
    h: &DenseMatrix,
    beta: BetaValue,
) -> Result<DenseMatrix> {
    let (p, q) = mu_sums_w(y, w_tilde, h, beta)?;
    apply_unconstrained(w_tilde, &p, &q, beta)
}

fn apply_unconstrained(
    current: &DenseMatrix,
    p: &DenseMatrix,
    q: &DenseMatrix,
    beta: BetaValue,
) -> Result<DenseMatrix> {
    let cols = current.cols();
    let mut out = current.clone();
    try_for_each_row_mut(out.as_mut_slice(), cols, |i, row| {
        for (j, v) in row.iter_mut().enumerate() {
            let (pv, qv) = (p.get(i, j), q.get(i, j));
            *v *= ratio(beta, pv, qv, 0.0, pv).0;
        }
        Ok(())
    })?;
    Ok(out)
}

/// Entrywise `max(M, eps)`; signed zeros map to `eps`.
pub fn epsilon_floor(m: &DenseMatrix, eps: f64) -> DenseMatrix {
    let mut out = m.clone();
    out.floor_in_place(eps);
    out
}

/// Inputs of an intermediate-layer `W` update: minimize
/// `G(W, W̃) + λ D_β(W, W̄)` where `G` majorizes `D_β(Y, W H)`.
#[derive(Debug, Clone, Copy)]
pub struct InnerWContext<'a> {
    /// `W_{l-1}`
    pub y: &'a DenseMatrix,
    /// Current `W_l`
    pub w_tilde: &'a DenseMatrix,
    /// `H_l`
    pub h: &'a DenseMatrix,
    /// `W_{l+1} H_{l+1}`
    pub w_bar: &'a DenseMatrix,
    /// `λ_{l+1} / λ_l`
    pub lambda_ratio: f64,
}

impl<'a> InnerWContext<'a> {
    pub fn new(
        y: &'a DenseMatrix,
        w_tilde: &'a DenseMatrix,
        h: &'a DenseMatrix,
        w_bar: &'a DenseMatrix,
        lambda_ratio: f64,
    ) -> Result<Self> {
        let ctx = Self {
            y,
            w_tilde,
            h,
            w_bar,
            lambda_ratio,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w_tilde.cols() != self.h.rows()
            || self.y.rows() != self.w_tilde.rows()
            || self.y.cols() != self.h.cols()
        {
            return Err(Error::Dimension(format!(
                "Y {:?} vs W {:?} H {:?}",
                self.y.shape(),
                self.w_tilde.shape(),
                self.h.shape()
            )));
        }
        self.w_bar.ensure_same_shape(self.w_tilde, "W_bar vs W")?;
        if !(self.lambda_ratio > 0.0) || !self.lambda_ratio.is_finite() {
            return Err(Error::Config(format!(
                "lambda ratio must be positive, got {}",
                self.lambda_ratio
            )));
        }
        if !(self.w_tilde.min_value() > 0.0) {
            return Err(Error::Precondition("current W must be entrywise positive".into()));
        }
        if !(self.w_bar.min_value() > 0.0) {
            return Err(Error::Precondition("W_bar must be entrywise positive".into()));
        }
        Ok(())
    }
}

/// Closed-form intermediate-layer `W` update for β in {0, 1/2, 1, 3/2}.
pub fn update_w_inner(ctx: &InnerWContext<'_>, beta: BetaValue) -> Result<DenseMatrix> {
    if !beta.has_inner_update() {
        return Err(Error::Config(format!(
            "no intermediate-layer W update for beta = {beta}"
        )));
    }
    ctx.validate()?;
    let (p, q) = mu_sums_w(ctx.y, ctx.w_tilde, ctx.h, beta)?;
    let lambda = ctx.lambda_ratio;
    let cols = ctx.w_tilde.cols();
    let mut out = DenseMatrix::zeros(ctx.w_tilde.rows(), cols);
    try_for_each_row_mut(out.as_mut_slice(), cols, |i, row| {
        for (k, v) in row.iter_mut().enumerate() {
            *v = inner_w_entry(
                beta,
                p.get(i, k),
                q.get(i, k),
                ctx.w_tilde.get(i, k),
                ctx.w_bar.get(i, k),
                lambda,
            )?;
        }
        Ok(())
    })?;
    Ok(out)
}

/// Minimizer of the per-entry majorized objective given the MU sums
/// `p`, `q`, the current value `w_tilde`, the next layer's reconstruction
/// `w_bar` and the weight ratio `lambda`.
pub fn inner_w_entry(
    beta: BetaValue,
    p: f64,
    q: f64,
    w_tilde: f64,
    w_bar: f64,
    lambda: f64,
) -> Result<f64> {
    match beta {
        BetaValue::One => inner_root_kl(p - lambda * w_bar.ln(), w_tilde * q, lambda),
        BetaValue::ThreeHalves => Ok(inner_root_three_halves(
            p / w_tilde.sqrt() + 2.0 * lambda,
            w_tilde.sqrt() * q,
            2.0 * lambda * w_bar.sqrt(),
        )),
        BetaValue::Zero => Ok(inner_root_is(w_tilde * w_tilde * q, p + lambda / w_bar, lambda)),
        BetaValue::Half => inner_root_half(
            w_tilde * w_tilde.sqrt() * q,
            2.0 * lambda,
            p + 2.0 * lambda / w_bar.sqrt(),
        ),
        BetaValue::Two => Err(Error::Config(
            "no intermediate-layer W update for beta = 2".into(),
        )),
    }
}

/// Minimizer of `a w - b ln w + λ (w ln w - w)`, i.e. the root of
/// `a + λ ln w = b / w`: `w = b / (λ W0((b/λ) e^(a/λ)))`.
pub fn inner_root_kl(a: f64, b: f64, lambda: f64) -> Result<f64> {
    if b == 0.0 {
        return Ok((-a / lambda).exp());
    }
    let log_z = (b / lambda).ln() + a / lambda;
    let u = if log_z > 700.0 {
        lambert_w0_from_log(log_z)?
    } else if log_z < -700.0 {
        // W0(z) = z to working precision.
        return Ok((-a / lambda).exp());
    } else {
        lambert_w0(log_z.exp())?
    };
    // b/(λu) = e^(u - a/λ); use whichever form does not cancel.
    if u > 1.0 {
        Ok(b / (lambda * u))
    } else {
        Ok((u - a / lambda).exp())
    }
}

/// Minimizer of `(2/3) a w^(3/2) - 2 b sqrt(w) - c w`:
/// `w = ((c + sqrt(c^2 + 4ab)) / (2a))^2`.
pub fn inner_root_three_halves(a: f64, b: f64, c: f64) -> f64 {
    let s = (c + (c * c + 4.0 * a * b).sqrt()) / (2.0 * a);
    s * s
}

/// Minimizer of `a / w - λ ln w + c w`: `w = (λ + sqrt(λ^2 + 4ac)) / (2c)`.
pub fn inner_root_is(a: f64, c: f64, lambda: f64) -> f64 {
    (lambda + (lambda * lambda + 4.0 * a * c).sqrt()) / (2.0 * c)
}

/// Minimizer of `2 Ā w^(-1/2) + C̄ w - 2 B̄ sqrt(w)`, i.e. `w = x^2` with `x`
/// the positive root of `C̄ x^3 - B̄ x^2 - Ā = 0`.
pub fn inner_root_half(a_bar: f64, b_bar: f64, c_bar: f64) -> Result<f64> {
    if !(c_bar > 0.0) {
        return Err(Error::Domain(format!("cubic leading coefficient {c_bar} must be positive")));
    }
    if a_bar == 0.0 {
        let x = b_bar / c_bar;
        return Ok(x * x);
    }
    let p = -b_bar / c_bar;
    let r = -a_bar / c_bar;
    let f = |x: f64| (x * x * x + p * x * x + r, 3.0 * x * x + 2.0 * p * x);
    // Depressed form z^3 + a z + b with x = z - p/3.
    let a = -p * p / 3.0;
    let b = (2.0 * p * p * p + 27.0 * r) / 27.0;
    let lo = -p;
    let cardano = cubic_one_real_root(a, b).ok().map(|z| z - p / 3.0);
    let x = match cardano {
        Some(mut x) if x > 0.0 && x.is_finite() => {
            for _ in 0..3 {
                let (fx, dfx) = f(x);
                let next = x - fx / dfx;
                if !(next > 0.0) || !next.is_finite() || next == x {
                    break;
                }
                x = next;
            }
            x
        }
        _ => {
            // On [B̄/C̄, B̄/C̄ + (Ā/C̄)^(1/3)] the cubic is increasing and changes
            // sign exactly once.
            let hi = lo + (-r).cbrt();
            if hi > lo {
                solve_monotone_from(f, Bracket::new(lo, hi)?, 0.5 * (lo + hi), 1e-300)?
            } else {
                lo
            }
        }
    };
    Ok(x * x)
}

/// Convex-concave majorizer of `B -> D_β(Y, A B)` at `B̃`, evaluated at `B`.
///
/// `G(B, B̃) = Σ_ij [ Σ_k (A_ik B̃_kj / Ṽ_ij) ď(Y_ij, Ṽ_ij B_kj / B̃_kj)
///   + d̂'(Y_ij, Ṽ_ij) Σ_k A_ik (B_kj - B̃_kj) + d̂(Y_ij, Ṽ_ij) + d̄(Y_ij) ]`.
pub fn majorizer_h(
    a: &DenseMatrix,
    y: &DenseMatrix,
    b: &DenseMatrix,
    b_tilde: &DenseMatrix,
    beta: BetaValue,
) -> Result<f64> {
    b.ensure_same_shape(b_tilde, "majorizer point vs reference")?;
    let v = a.matmul(b_tilde)?;
    v.ensure_same_shape(y, "data vs product")?;
    let terms = decomposition_terms(beta);
    let (m, n, r) = (y.rows(), y.cols(), a.cols());
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..n {
            let (yv, vv) = (y.get(i, j), v.get(i, j));
            let mut s = 0.0;
            let mut lin = 0.0;
            for k in 0..r {
                let (aik, bt, bv) = (a.get(i, k), b_tilde.get(k, j), b.get(k, j));
                if aik == 0.0 || bt == 0.0 {
                    continue;
                }
                s += aik * bt / vv * terms.check(yv, vv * bv / bt);
                lin += aik * (bv - bt);
            }
            let hat = terms.hat(yv, vv);
            let bar = terms.bar(yv);
            total += s + terms.hat_prime(yv, vv) * lin + hat + bar;
        }
    }
    Ok(total)
}

/// Convex-concave majorizer of `W -> D_β(Y, W H)` at `W̃`, evaluated at `W`.
pub fn majorizer_w(
    y: &DenseMatrix,
    w: &DenseMatrix,
    w_tilde: &DenseMatrix,
    h: &DenseMatrix,
    beta: BetaValue,
) -> Result<f64> {
    majorizer_h(
        &h.transpose(),
        &y.transpose(),
        &w.transpose(),
        &w_tilde.transpose(),
        beta,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::beta_div_matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
        DenseMatrix::from_fn(r, c, |_, _| rng.random_range(0.1..1.0))
    }

    fn row_simplex(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
        let mut h = rand_matrix(rng, r, c);
        h.normalize_rows();
        h
    }

    const INNER_BETAS: [BetaValue; 4] = [
        BetaValue::Zero,
        BetaValue::Half,
        BetaValue::One,
        BetaValue::ThreeHalves,
    ];

    #[test]
    fn kl_simplex_example() {
        let w = DenseMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let ht = DenseMatrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        let y = DenseMatrix::from_rows(&[vec![0.6, 0.4], vec![0.6, 0.4]]).unwrap();
        let h = update_h_simplex(&w, &y, &ht, BetaValue::One).unwrap();
        assert!((h.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((h.get(0, 1) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn simplex_fixed_point_at_exact_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = rand_matrix(&mut rng, 5, 3);
        let ht = row_simplex(&mut rng, 3, 4);
        let y = w.matmul(&ht).unwrap();
        for beta in BetaValue::ALL {
            let h = update_h_simplex(&w, &y, &ht, beta).unwrap();
            assert!(h.max_abs_diff(&ht).unwrap() < 1e-10, "{beta}");
        }
    }

    #[test]
    fn simplex_rows_sum_to_one_and_majorizer_descends() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for beta in BetaValue::ALL {
            for _ in 0..100 {
                let w = rand_matrix(&mut rng, 5, 3);
                let ht = row_simplex(&mut rng, 3, 4);
                let y = rand_matrix(&mut rng, 5, 4);
                let h = update_h_simplex(&w, &y, &ht, beta).unwrap();
                for s in h.row_sums() {
                    assert!((s - 1.0).abs() <= 1e-10);
                }
                assert_eq!(h.count_negative(), 0);
                let g_new = majorizer_h(&w, &y, &h, &ht, beta).unwrap();
                let g_old = majorizer_h(&w, &y, &ht, &ht, beta).unwrap();
                assert!(g_new <= g_old + 1e-10 * g_old.abs().max(1.0), "{beta}");
                let f_new = beta_div_matrix(&y, &w.matmul(&h).unwrap(), beta).unwrap();
                let f_old = beta_div_matrix(&y, &w.matmul(&ht).unwrap(), beta).unwrap();
                assert!(f_new <= f_old + 1e-10 * f_old.max(1.0), "{beta}");
            }
        }
    }

    #[test]
    fn simplex_handles_tiny_entries_near_pole() {
        // A row whose current mass sits almost entirely on one entry forces
        // the multiplier close to the pole for β < 1.
        let w = DenseMatrix::from_rows(&[vec![1.0, 0.2], vec![0.3, 1.0]]).unwrap();
        let ht = DenseMatrix::from_rows(&[vec![1.0 - 1e-15, 1e-15], vec![0.5, 0.5]]).unwrap();
        let y = DenseMatrix::from_rows(&[vec![1e-3, 5.0], vec![2.0, 0.1]]).unwrap();
        for beta in [BetaValue::Zero, BetaValue::Half] {
            let h = update_h_simplex(&w, &y, &ht, beta).unwrap();
            for s in h.row_sums() {
                assert!((s - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_numerator_row_is_left_unchanged() {
        let w = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let ht = DenseMatrix::from_rows(&[vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        let y = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 2.0]]).unwrap();
        let (h, locked) = update_h_simplex_report(&w, &y, &ht, BetaValue::One).unwrap();
        assert_eq!(locked, vec![0]);
        assert_eq!(h.row(0), ht.row(0));
    }

    #[test]
    fn terminal_examples() {
        let one = |v: f64| DenseMatrix::from_rows(&[vec![v]]).unwrap();
        let w = update_w_terminal(&one(2.0), &one(1.0), &one(1.0), BetaValue::One).unwrap();
        assert!((w.get(0, 0) - 2.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let wt = rand_matrix(&mut rng, 4, 2);
        let h = rand_matrix(&mut rng, 2, 5);
        let y = wt.matmul(&h).unwrap();
        for beta in BetaValue::ALL {
            let w = update_w_terminal(&y, &wt, &h, beta).unwrap();
            assert!(w.relative_distance(&wt).unwrap() < 1e-12, "{beta}");
        }
    }

    #[test]
    fn terminal_descends_majorizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for beta in BetaValue::ALL {
            for _ in 0..50 {
                let wt = rand_matrix(&mut rng, 4, 3);
                let h = rand_matrix(&mut rng, 3, 5);
                let y = rand_matrix(&mut rng, 4, 5);
                let w = update_w_terminal(&y, &wt, &h, beta).unwrap();
                let g_new = majorizer_w(&y, &w, &wt, &h, beta).unwrap();
                let g_old = majorizer_w(&y, &wt, &wt, &h, beta).unwrap();
                assert!(g_new <= g_old + 1e-12 * g_old.abs().max(1.0));
            }
        }
    }

    #[test]
    fn epsilon_floor_examples() {
        let m = DenseMatrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let f = epsilon_floor(&m, 1e-16);
        assert_eq!(f.row(0), &[1e-16, 1.0]);
        let m = DenseMatrix::from_rows(&[vec![0.5, 2.0]]).unwrap();
        assert_eq!(epsilon_floor(&m, 1e-16), m);
        let m = DenseMatrix::from_rows(&[vec![-0.0]]).unwrap();
        assert_eq!(epsilon_floor(&m, 1e-16).get(0, 0), 1e-16);
    }

    #[test]
    fn kl_scalar_probe() {
        let w = inner_root_kl(0.0, 1.0, 1.0).unwrap();
        assert!((w - 1.763222834351897).abs() < 1e-12);
        assert!((0.0 - (1.0 / w - w.ln())).abs() < 1e-12);
    }

    #[test]
    fn kl_limit_without_numerator() {
        let a: f64 = 0.7;
        let lambda = 2.0;
        let target = (-a / lambda).exp();
        assert_eq!(inner_root_kl(a, 0.0, lambda).unwrap(), target);
        let near = inner_root_kl(a, 1e-300, lambda).unwrap();
        assert!((near - target).abs() < 1e-12);
    }

    #[test]
    fn kl_large_argument_uses_log_path() {
        let (a, b, lambda) = (2000.0, 3.0, 1.0);
        let w = inner_root_kl(a, b, lambda).unwrap();
        assert!(w.is_finite() && w > 0.0);
        let resid = a + lambda * w.ln() - b / w;
        assert!(resid.abs() < 1e-9 * a);
    }

    #[test]
    fn is_and_three_halves_root_forms_agree() {
        let (a, c, lambda) = (0.3, 2.0, 0.7);
        let w = inner_root_is(a, c, lambda);
        let other = -2.0 * a / (lambda - (lambda * lambda + 4.0 * a * c).sqrt());
        assert!((w - other).abs() < 1e-12 * w);
        assert!((c * w * w - lambda * w - a).abs() < 1e-12);

        let (a, b, c) = (1.5, 0.4, 0.8);
        let w = inner_root_three_halves(a, b, c);
        let s = w.sqrt();
        assert!((a * s * s - c * s - b).abs() < 1e-12);
    }

    #[test]
    fn half_root_solves_cubic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a = 10f64.powf(rng.random_range(-8.0..3.0));
            let b = 10f64.powf(rng.random_range(-3.0..3.0));
            let c = 10f64.powf(rng.random_range(-3.0..3.0));
            let w = inner_root_half(a, b, c).unwrap();
            let x = w.sqrt();
            let resid = c * x * x * x - b * x * x - a;
            let scale = c * x * x * x + b * x * x + a;
            assert!(resid.abs() <= 1e-12 * scale, "{a} {b} {c}");
        }
        assert_eq!(inner_root_half(0.0, 2.0, 4.0).unwrap(), 0.25);
    }

    #[test]
    fn inner_fixed_point_at_exact_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let wt = rand_matrix(&mut rng, 5, 3);
        let h = rand_matrix(&mut rng, 3, 4);
        let y = wt.matmul(&h).unwrap();
        for beta in INNER_BETAS {
            let ctx = InnerWContext::new(&y, &wt, &h, &wt, 0.8).unwrap();
            let w = update_w_inner(&ctx, beta).unwrap();
            assert!(w.relative_distance(&wt).unwrap() < 1e-8, "{beta}");
        }
    }

    #[test]
    fn inner_update_descends_block_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for beta in INNER_BETAS {
            for _ in 0..100 {
                let wt = rand_matrix(&mut rng, 4, 3);
                let h = rand_matrix(&mut rng, 3, 5);
                let y = rand_matrix(&mut rng, 4, 5);
                let wbar = rand_matrix(&mut rng, 4, 3);
                let lambda = rng.random_range(0.1..3.0);
                let ctx = InnerWContext::new(&y, &wt, &h, &wbar, lambda).unwrap();
                let w = update_w_inner(&ctx, beta).unwrap();
                let obj = |w: &DenseMatrix, g: f64| g + lambda * beta_div_matrix(w, &wbar, beta).unwrap();
                let g_new = majorizer_w(&y, &w, &wt, &h, beta).unwrap();
                let g_old = majorizer_w(&y, &wt, &wt, &h, beta).unwrap();
                let (m_new, m_old) = (obj(&w, g_new), obj(&wt, g_old));
                assert!(m_new <= m_old + 1e-10 * m_old.abs().max(1.0), "{beta}");
                let f = |w: &DenseMatrix| {
                    beta_div_matrix(&y, &w.matmul(&h).unwrap(), beta).unwrap()
                        + lambda * beta_div_matrix(w, &wbar, beta).unwrap()
                };
                assert!(f(&w) <= f(&wt) + 1e-10 * f(&wt).max(1.0), "{beta}");
            }
        }
    }

    #[test]
    fn inner_rejects_beta_two_and_zero_entries() {
        let y = DenseMatrix::filled(2, 2, 1.0);
        let w = DenseMatrix::filled(2, 1, 1.0);
        let h = DenseMatrix::filled(1, 2, 1.0);
        let ctx = InnerWContext::new(&y, &w, &h, &w, 1.0).unwrap();
        assert!(matches!(update_w_inner(&ctx, BetaValue::Two), Err(Error::Config(_))));
        let zero = DenseMatrix::zeros(2, 1);
        assert!(InnerWContext::new(&y, &zero, &h, &w, 1.0).is_err());
    }

    #[test]
    fn parallel_kernels_match_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = rand_matrix(&mut rng, 40, 6);
        let ht = row_simplex(&mut rng, 6, 30);
        let y = rand_matrix(&mut rng, 40, 30);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        for beta in BetaValue::ALL {
            let seq = update_h_simplex(&w, &y, &ht, beta).unwrap();
            let par = pool.install(|| update_h_simplex(&w, &y, &ht, beta).unwrap());
            assert_eq!(seq, par);
        }
    }
}
