//! Scalar kernels behind the closed-form updates: the principal branch of
//! the Lambert W function, the one-real-root cubic, and a bracketed
//! Newton/bisection solver for monotone equations.

use std::f64::consts::E;

use crate::error::{Error, Result};

const LAMBERT_MAX_ITER: usize = 64;
const ROOT_MAX_ITER: usize = 2000;

/// Above this argument the direct Halley iteration risks overflowing `exp`.
const DIRECT_LAMBERT_LIMIT: f64 = 1e300;

/// Default tolerance for scalar roots, relative to `max(1, |rhs|)`.
pub const DEFAULT_ROOT_TOL: f64 = 1e-12;

/// Principal branch `W0(x)` for `x >= 0`, i.e. the `w >= 0` with `w e^w = x`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("lambert_w0 needs x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    if x > DIRECT_LAMBERT_LIMIT {
        return lambert_w0_from_log(x.ln());
    }
    let mut w = if x <= E {
        x.ln_1p()
    } else {
        let l = x.ln();
        l - l.ln()
    };
    for _ in 0..LAMBERT_MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        // Halley step
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs() {
            break;
        }
    }
    Ok(w)
}

/// `W0(exp(log_x))` without forming `exp(log_x)`: solves `w + ln w = log_x`.
///
/// Arguments below 1 (x < e) are exponentiated and routed to [`lambert_w0`].
pub fn lambert_w0_from_log(log_x: f64) -> Result<f64> {
    if log_x.is_nan() {
        return Err(Error::Domain("lambert_w0_from_log got NaN".into()));
    }
    if log_x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    if log_x < 1.0 {
        return lambert_w0(log_x.exp());
    }
    let mut w = log_x - log_x.ln();
    for _ in 0..LAMBERT_MAX_ITER {
        let g = w + w.ln() - log_x;
        let g1 = 1.0 + 1.0 / w;
        let g2 = -1.0 / (w * w);
        let step = 2.0 * g * g1 / (2.0 * g1 * g1 - g * g2);
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs() {
            break;
        }
    }
    Ok(w)
}

/// Unique real root of the depressed cubic `z^3 + a z + b = 0`, valid when
/// the discriminant `b^2/4 + a^3/27` is positive.
///
/// Uses the Cardano form with the cancellation-free pairing of the two
/// cube roots (their product is `-a/3`), then one Newton polish.
pub fn cubic_one_real_root(a: f64, b: f64) -> Result<f64> {
    let disc = b * b / 4.0 + a * a * a / 27.0;
    if !(disc > 0.0) || !disc.is_finite() {
        return Err(Error::Precondition(format!(
            "cubic discriminant b^2/4 + a^3/27 = {disc} is not positive"
        )));
    }
    let sq = disc.sqrt();
    let u = if b >= 0.0 {
        (-0.5 * b - sq).cbrt()
    } else {
        (-0.5 * b + sq).cbrt()
    };
    let mut z = u - a / (3.0 * u);
    let resid = |z: f64| z * z * z + a * z + b;
    let r0 = resid(z);
    let d = 3.0 * z * z + a;
    if d != 0.0 {
        let polished = z - r0 / d;
        if resid(polished).abs() < r0.abs() {
            z = polished;
        }
    }
    Ok(z)
}

/// Closed interval `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Precondition(format!("bracket needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

/// Solves `f(x) = 0` for a continuous, strictly monotone `f` on `bracket`.
///
/// `f` returns the value and derivative. Newton steps are used while they
/// stay inside the shrinking bracket and keep halving the residual;
/// otherwise the step is a bisection. Non-finite values are allowed: only
/// their sign is used.
pub fn solve_monotone_scalar<F>(f: F, bracket: Bracket, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> (f64, f64),
{
    solve_monotone_from(f, bracket, bracket.midpoint(), tol)
}

/// As [`solve_monotone_scalar`], starting Newton from `x0` (clamped to the
/// bracket midpoint when outside it).
pub fn solve_monotone_from<F>(mut f: F, bracket: Bracket, x0: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> (f64, f64),
{
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tolerance must be positive, got {tol}")));
    }
    let (mut lo, mut hi) = (bracket.lo, bracket.hi);
    let flo = f(lo).0;
    let fhi = f(hi).0;
    if flo.is_nan() || fhi.is_nan() {
        return Err(Error::NoRoot(format!("NaN at bracket ends [{lo}, {hi}]")));
    }
    if flo.abs() <= tol {
        return Ok(lo);
    }
    if fhi.abs() <= tol {
        return Ok(hi);
    }
    if (flo > 0.0) == (fhi > 0.0) {
        return Err(Error::NoRoot(format!(
            "no sign change on [{lo}, {hi}]: f = {flo}, {fhi}"
        )));
    }
    let increasing = flo < 0.0;
    let mut x = if x0 > lo && x0 < hi { x0 } else { 0.5 * (lo + hi) };
    let mut last_resid = f64::INFINITY;
    let mut use_newton = true;

    for _ in 0..ROOT_MAX_ITER {
        let (fx, dfx) = f(x);
        if fx.is_nan() {
            return Err(Error::Numerical(format!("NaN residual at x = {x}")));
        }
        if fx.abs() <= tol {
            return Ok(x);
        }
        if (fx < 0.0) == increasing {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) || hi - lo <= f64::MIN_POSITIVE {
            // Bracket at machine resolution.
            return Ok(x);
        }
        if fx.abs() > 0.5 * last_resid {
            use_newton = false;
        }
        last_resid = fx.abs();
        let newton = x - fx / dfx;
        x = if use_newton && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            use_newton = true;
            0.5 * (lo + hi)
        };
    }
    Err(Error::Numerical(format!(
        "root solver did not converge on [{lo}, {hi}]"
    )))
}

/// Walks from `start` in `direction` with doubling steps until `f` changes
/// sign, returning the bracket of the last two probes.
pub fn expand_bracket<F>(
    mut f: F,
    start: f64,
    initial_step: f64,
    direction: Direction,
    max_doublings: usize,
) -> Result<Bracket>
where
    F: FnMut(f64) -> f64,
{
    if !(initial_step > 0.0) {
        return Err(Error::Precondition("expansion step must be positive".into()));
    }
    let f0 = f(start);
    if f0.is_nan() {
        return Err(Error::NoRoot(format!("NaN at expansion start {start}")));
    }
    let mut prev = start;
    let mut step = initial_step;
    for _ in 0..max_doublings {
        let x = match direction {
            Direction::Up => start + step,
            Direction::Down => start - step,
        };
        let fx = f(x);
        if fx == 0.0 || (fx > 0.0) != (f0 > 0.0) {
            return match direction {
                Direction::Up => Bracket::new(prev, x),
                Direction::Down => Bracket::new(x, prev),
            };
        }
        prev = x;
        step *= 2.0;
    }
    Err(Error::NoRoot(format!(
        "no sign change within {max_doublings} doublings from {start}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Plain bisection on w e^w = x; independent of the Halley path.
    fn lambert_by_bisection(x: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64.max(x.ln() + 1.0));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lambert_examples() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(E).unwrap() - 1.0).abs() < 1e-15);
        let omega = lambert_by_bisection(1.0);
        assert!((omega - 0.567_143_3).abs() < 1e-7);
        assert!((lambert_w0(1.0).unwrap() - omega).abs() < 1e-12);
        assert!(matches!(lambert_w0(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn lambert_residual_on_decades() {
        for k in -8..=8 {
            let x = 10f64.powi(k);
            let w = lambert_w0(x).unwrap();
            assert!(w >= 0.0);
            let r = (w * w.exp() - x).abs();
            assert!(r <= 1e-12 * x.max(1.0), "x={x} w={w} resid={r}");
        }
    }

    #[test]
    fn lambert_log_entry_handles_huge_arguments() {
        // exp(1000) overflows; w + ln w = 1000
        let w = lambert_w0_from_log(1000.0).unwrap();
        assert!((w + w.ln() - 1000.0).abs() < 1e-12);
        assert!((lambert_w0_from_log(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(lambert_w0_from_log(f64::NEG_INFINITY).unwrap(), 0.0);
    }

    #[test]
    fn lambert_nondecreasing_on_grid() {
        let mut prev = 0.0;
        for i in 0..2000 {
            let x = 10f64.powf(-10.0 + i as f64 * 0.01);
            let w = lambert_w0(x).unwrap();
            assert!(w >= prev);
            prev = w;
        }
    }

    #[test]
    fn cubic_examples() {
        assert!((cubic_one_real_root(0.0, -8.0).unwrap() - 2.0).abs() < 1e-14);
        assert!(matches!(
            cubic_one_real_root(-1.0, 0.0),
            Err(Error::Precondition(_))
        ));
        // discriminant 1 + 1/27 > 0: one real root
        assert!((cubic_one_real_root(1.0, -2.0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn monotone_solver_examples() {
        let b = Bracket::new(0.0, 10.0).unwrap();
        let x = solve_monotone_scalar(|x| (x - 3.0, 1.0), b, 1e-12).unwrap();
        assert!((x - 3.0).abs() < 1e-12);
        let b = Bracket::new(-1.0, 1.0).unwrap();
        let x = solve_monotone_scalar(|x| (x.exp() - 1.0, x.exp()), b, 1e-12).unwrap();
        assert!(x.abs() < 1e-12);
    }

    #[test]
    fn monotone_solver_errors() {
        let b = Bracket::new(0.0, 1.0).unwrap();
        assert!(matches!(
            solve_monotone_scalar(|x| (x + 5.0, 1.0), b, 1e-12),
            Err(Error::NoRoot(_))
        ));
        assert!(Bracket::new(1.0, 1.0).is_err());
        assert!(expand_bracket(|x| x.exp(), 0.0, 1.0, Direction::Up, 20).is_err());
    }

    #[test]
    fn expansion_finds_one_sided_root() {
        let b = expand_bracket(|x| 100.0 - x, 0.0, 1.0, Direction::Up, 60).unwrap();
        assert!(b.lo <= 100.0 && 100.0 <= b.hi);
        let b = expand_bracket(|x| -x - 37.0, 0.0, 1.0, Direction::Down, 60).unwrap();
        assert!(b.lo <= -37.0 && -37.0 <= b.hi);
    }

    #[test]
    fn handles_infinite_values_by_sign() {
        // 1/x - 2 is +inf at 0
        let b = Bracket::new(0.0, 10.0).unwrap();
        let x = solve_monotone_scalar(|x| (1.0 / x - 2.0, -1.0 / (x * x)), b, 1e-13).unwrap();
        assert!((x - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn lambert_direct_and_log_agree(e in 0.0f64..300.0) {
            let x = 10f64.powf(e);
            let direct = lambert_w0(x).unwrap();
            let via_log = lambert_w0_from_log(x.ln()).unwrap();
            prop_assert!((direct - via_log).abs() <= 1e-10 * direct.abs().max(1e-300));
        }

        #[test]
        fn lambert_relative_residual(e in -300.0f64..300.0) {
            let x = 10f64.powf(e);
            let w = lambert_w0(x).unwrap();
            // w e^w = x  <=>  ln w + w = ln x
            if x < 1e300 {
                prop_assert!((w * w.exp() - x).abs() <= 1e-12 * x.max(1.0) + 1e-12 * x);
            }
        }

        #[test]
        fn cubic_residual(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            prop_assume!(b * b / 4.0 + a * a * a / 27.0 > 1e-9);
            let z = cubic_one_real_root(a, b).unwrap();
            prop_assert!((z * z * z + a * z + b).abs() <= 1e-9 * b.abs().max(1.0));
        }

        #[test]
        fn solver_independent_of_start(root in -5.0f64..5.0, t in 0.01f64..0.99) {
            let f = |x: f64| ((x - root).powi(3) + (x - root), 3.0 * (x - root).powi(2) + 1.0);
            let b = Bracket::new(-10.0, 10.0).unwrap();
            let tol = 1e-12;
            let x0 = -10.0 + 20.0 * t;
            let a = solve_monotone_from(f, b, x0, tol).unwrap();
            let c = solve_monotone_scalar(f, b, tol).unwrap();
            prop_assert!((a - c).abs() <= 2.0 * tol + 1e-15);
        }
    }
}
