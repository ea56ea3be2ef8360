//! β-divergences for the supported β values and their
//! convex + concave + constant split in the second argument.

use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Value returned where the divergence is infinite (zero model entry, or a
/// zero data entry under Itakura–Saito). Ordered above every finite value.
pub const INFINITE_DIVERGENCE: f64 = f64::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BetaValue {
    /// Itakura–Saito
    Zero,
    Half,
    /// Kullback–Leibler
    One,
    ThreeHalves,
    /// Half squared Euclidean distance
    Two,
}

impl BetaValue {
    pub const ALL: [BetaValue; 5] = [
        BetaValue::Zero,
        BetaValue::Half,
        BetaValue::One,
        BetaValue::ThreeHalves,
        BetaValue::Two,
    ];

    pub fn value(self) -> f64 {
        match self {
            BetaValue::Zero => 0.0,
            BetaValue::Half => 0.5,
            BetaValue::One => 1.0,
            BetaValue::ThreeHalves => 1.5,
            BetaValue::Two => 2.0,
        }
    }

    pub fn from_f64(beta: f64) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.value() == beta)
            .ok_or_else(|| {
                Error::Config(format!(
                    "beta = {beta} is not supported (expected one of 0, 0.5, 1, 1.5, 2)"
                ))
            })
    }

    /// Whether the closed-form inner-layer W update exists for this β.
    pub fn has_inner_update(self) -> bool {
        !matches!(self, BetaValue::Two)
    }
}

impl fmt::Display for BetaValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl std::str::FromStr for BetaValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("cannot parse beta from {s:?}")))?;
        Self::from_f64(v)
    }
}

/// `d_beta(x, y)`; returns [`INFINITE_DIVERGENCE`] when the value is infinite.
pub fn beta_div_scalar(x: f64, y: f64, beta: BetaValue) -> f64 {
    if !(y > 0.0) || x < 0.0 || x.is_nan() {
        return INFINITE_DIVERGENCE;
    }
    match beta {
        BetaValue::One => {
            if x == 0.0 {
                return y;
            }
            // y * ((1+d) ln(1+d) - d) with d = (x-y)/y keeps accuracy near x = y
            let d = (x - y) / y;
            let v = y * ((1.0 + d) * d.ln_1p() - d);
            v.max(0.0)
        }
        BetaValue::Zero => {
            if x == 0.0 {
                return INFINITE_DIVERGENCE;
            }
            let d = (x - y) / y;
            (d - d.ln_1p()).max(0.0)
        }
        BetaValue::Two => 0.5 * (x - y) * (x - y),
        BetaValue::Half => {
            // -4 (sqrt x - sqrt y / 2 - x / (2 sqrt y)) = 2 (sqrt x - sqrt y)^2 / sqrt y
            let (sx, sy) = (x.sqrt(), y.sqrt());
            2.0 * (sx - sy) * (sx - sy) / sy
        }
        BetaValue::ThreeHalves => {
            // (4/3)(x^1.5 + 0.5 y^1.5 - 1.5 x sqrt y)
            //   = (4/3)(sqrt x - sqrt y)^2 (sqrt x + sqrt y / 2)
            let (sx, sy) = (x.sqrt(), y.sqrt());
            (4.0 / 3.0) * (sx - sy) * (sx - sy) * (sx + 0.5 * sy)
        }
    }
}

/// Partial derivative of `d_beta(x, y)` with respect to the first argument.
pub fn beta_div_dx(x: f64, y: f64, beta: BetaValue) -> f64 {
    match beta {
        BetaValue::One => (x / y).ln(),
        BetaValue::Zero => 1.0 / y - 1.0 / x,
        BetaValue::Two => x - y,
        BetaValue::Half => 2.0 * (1.0 / y.sqrt() - 1.0 / x.sqrt()),
        BetaValue::ThreeHalves => 2.0 * (x.sqrt() - y.sqrt()),
    }
}

/// Sum of entrywise divergences `D_beta(A, B)`.
pub fn beta_div_matrix(a: &DenseMatrix, b: &DenseMatrix, beta: BetaValue) -> Result<f64> {
    a.ensure_same_shape(b, "beta divergence")?;
    Ok(a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| beta_div_scalar(x, y, beta))
        .sum())
}

/// `d_beta(v, u) = check(v, u) + hat(v, u) + bar(v)` with `check` convex and
/// `hat` concave in `u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecompositionTerms {
    beta: BetaValue,
}

pub fn decomposition_terms(beta: BetaValue) -> DecompositionTerms {
    DecompositionTerms { beta }
}

impl DecompositionTerms {
    pub fn beta(&self) -> BetaValue {
        self.beta
    }

    /// Convex part `ď(v, u)`.
    pub fn check(&self, v: f64, u: f64) -> f64 {
        match self.beta {
            BetaValue::Zero => v / u,
            BetaValue::Half => 2.0 * v / u.sqrt(),
            BetaValue::One | BetaValue::ThreeHalves | BetaValue::Two => {
                beta_div_scalar(v, u, self.beta)
            }
        }
    }

    /// `∂ď/∂u`
    pub fn check_prime(&self, v: f64, u: f64) -> f64 {
        match self.beta {
            BetaValue::Zero => -v / (u * u),
            BetaValue::Half => -v / (u * u.sqrt()),
            BetaValue::One => 1.0 - v / u,
            BetaValue::ThreeHalves => u.sqrt() - v / u.sqrt(),
            BetaValue::Two => u - v,
        }
    }

    /// Concave part `d̂(v, u)`.
    pub fn hat(&self, _v: f64, u: f64) -> f64 {
        match self.beta {
            BetaValue::Zero => u.ln(),
            BetaValue::Half => 2.0 * u.sqrt(),
            _ => 0.0,
        }
    }

    /// `∂d̂/∂u`
    pub fn hat_prime(&self, _v: f64, u: f64) -> f64 {
        match self.beta {
            BetaValue::Zero => 1.0 / u,
            BetaValue::Half => 1.0 / u.sqrt(),
            _ => 0.0,
        }
    }

    /// Constant part `d̄(v)`.
    pub fn bar(&self, v: f64) -> f64 {
        match self.beta {
            BetaValue::Zero => -v.ln() - 1.0,
            BetaValue::Half => -4.0 * v.sqrt(),
            _ => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook formula, evaluated without any rearrangement.
    fn reference(x: f64, y: f64, beta: f64) -> f64 {
        if beta == 0.0 {
            x / y - (x / y).ln() - 1.0
        } else if beta == 1.0 {
            x * (x / y).ln() - x + y
        } else {
            (x.powf(beta) + (beta - 1.0) * y.powf(beta) - beta * x * y.powf(beta - 1.0))
                / (beta * (beta - 1.0))
        }
    }

    fn grid() -> Vec<f64> {
        (1..=20).map(|i| i as f64 * 0.5).collect()
    }

    #[test]
    fn scalar_examples() {
        assert_eq!(beta_div_scalar(2.0, 2.0, BetaValue::One), 0.0);
        assert_eq!(beta_div_scalar(3.0, 1.0, BetaValue::Two), 2.0);
        let is = beta_div_scalar(1.0, 2.0, BetaValue::Zero);
        assert!((is - (0.5 - 0.5f64.ln() - 1.0)).abs() < 1e-15);
        assert!((is - 0.193147).abs() < 1e-6);
    }

    #[test]
    fn sentinel_instead_of_panic() {
        assert_eq!(beta_div_scalar(1.0, 0.0, BetaValue::One), INFINITE_DIVERGENCE);
        assert_eq!(beta_div_scalar(0.0, 1.0, BetaValue::Zero), INFINITE_DIVERGENCE);
        assert_eq!(beta_div_scalar(0.0, 3.0, BetaValue::One), 3.0);
        assert!(INFINITE_DIVERGENCE.is_infinite());
    }

    #[test]
    fn matrix_examples() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let v = beta_div_matrix(&a, &b, BetaValue::One).unwrap();
        assert!((v - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-15);
        assert!((v - 0.386294).abs() < 1e-6);
        for beta in BetaValue::ALL {
            assert_eq!(beta_div_matrix(&a, &a, beta).unwrap(), 0.0);
        }
        let a = DenseMatrix::from_rows(&[vec![4.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![1.0]]).unwrap();
        let v = beta_div_matrix(&a, &b, BetaValue::ThreeHalves).unwrap();
        assert!((v - (4.0 / 3.0) * (8.0 + 0.5 - 6.0)).abs() < 1e-14);
        let c = DenseMatrix::zeros(2, 1);
        assert!(matches!(beta_div_matrix(&a, &c, BetaValue::One), Err(Error::Dimension(_))));
    }

    #[test]
    fn matches_reference_formula_on_grid() {
        for beta in BetaValue::ALL {
            for &x in &grid() {
                for &y in &grid() {
                    let d = beta_div_scalar(x, y, beta);
                    let r = reference(x, y, beta.value());
                    assert!((d - r).abs() <= 1e-12 * r.abs().max(1.0), "{beta} {x} {y}");
                }
            }
        }
    }

    #[test]
    fn nonnegative_and_zero_only_on_diagonal() {
        for beta in BetaValue::ALL {
            for &x in &grid() {
                for &y in &grid() {
                    let d = beta_div_scalar(x, y, beta);
                    if x == y {
                        assert_eq!(d, 0.0);
                    } else {
                        assert!(d > 0.0, "{beta} {x} {y}");
                    }
                }
            }
        }
    }

    #[test]
    fn decomposition_identity() {
        for beta in BetaValue::ALL {
            let t = decomposition_terms(beta);
            for &v in &grid() {
                for &u in &grid() {
                    let s = t.check(v, u) + t.hat(v, u) + t.bar(v);
                    let d = beta_div_scalar(v, u, beta);
                    assert!((s - d).abs() < 1e-10, "{beta} v={v} u={u}: {s} vs {d}");
                }
            }
        }
    }

    #[test]
    fn decomposition_examples() {
        let kl = decomposition_terms(BetaValue::One);
        assert_eq!(kl.hat(2.0, 3.0), 0.0);
        assert_eq!(kl.bar(2.0), 0.0);
        assert_eq!(kl.check(2.0, 3.0), beta_div_scalar(2.0, 3.0, BetaValue::One));

        let is = decomposition_terms(BetaValue::Zero);
        assert_eq!(is.check(2.0, 3.0), 2.0 / 3.0);
        assert_eq!(is.hat(2.0, 3.0), 3f64.ln());
        let sum = is.check(2.0, 3.0) + is.hat(2.0, 3.0) + is.bar(2.0);
        assert!((sum - beta_div_scalar(2.0, 3.0, BetaValue::Zero)).abs() < 1e-15);

        let half = decomposition_terms(BetaValue::Half);
        assert_eq!(half.check(4.0, 1.0), 8.0);
        assert_eq!(half.hat(4.0, 1.0), 2.0);
        let sum = half.check(4.0, 1.0) + half.hat(4.0, 1.0) + half.bar(4.0);
        assert!((sum - beta_div_scalar(4.0, 1.0, BetaValue::Half)).abs() < 1e-15);
    }

    #[test]
    fn convex_and_concave_parts() {
        for beta in BetaValue::ALL {
            let t = decomposition_terms(beta);
            for &v in &grid() {
                for &u1 in &grid() {
                    for &u2 in &grid() {
                        let m = 0.5 * (u1 + u2);
                        let c = 0.5 * (t.check(v, u1) + t.check(v, u2));
                        assert!(t.check(v, m) <= c + 1e-12);
                        let h = 0.5 * (t.hat(v, u1) + t.hat(v, u2));
                        assert!(t.hat(v, m) >= h - 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for beta in BetaValue::ALL {
            let t = decomposition_terms(beta);
            for &(v, u) in &[(1.3, 0.7), (2.0, 3.0), (0.2, 5.0)] {
                let h = 1e-6;
                let fd = (t.check(v, u + h) - t.check(v, u - h)) / (2.0 * h);
                assert!((fd - t.check_prime(v, u)).abs() < 1e-6);
                let fd = (t.hat(v, u + h) - t.hat(v, u - h)) / (2.0 * h);
                assert!((fd - t.hat_prime(v, u)).abs() < 1e-6);
                let fd = (beta_div_scalar(u + h, v, beta) - beta_div_scalar(u - h, v, beta)) / (2.0 * h);
                assert!((fd - beta_div_dx(u, v, beta)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn parse_beta() {
        assert_eq!("1.5".parse::<BetaValue>().unwrap(), BetaValue::ThreeHalves);
        assert!("0.7".parse::<BetaValue>().is_err());
    }
}
