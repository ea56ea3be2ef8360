//! Seeded synthetic data used by the tests, the benchmarks and the
//! acceptance experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::model::{validate_ranks, DeepState};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries drawn uniformly from `(0, 1]`.
pub fn uniform_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut r = rng(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| 1.0 - r.random::<f64>())
}

/// An exactly factorized chain: random positive `W_L`, row-simplex `H_l`
/// with entries bounded away from zero, and `W_{l-1} = W_l H_l` computed
/// in floating point so every layer is reproduced exactly.
pub fn exact_chain(m: usize, n: usize, ranks: &[usize], seed: u64) -> Result<DeepState> {
    validate_ranks(ranks)?;
    if ranks[0] >= n {
        return Err(Error::Config(format!("first rank {} must be below n = {n}", ranks[0])));
    }
    let mut r = rng(seed);
    let layers = ranks.len();
    let mut h = Vec::with_capacity(layers);
    let mut prev = n;
    for &rank in ranks {
        let mut hl = DenseMatrix::from_fn(rank, prev, |_, _| r.random_range(0.2..1.0));
        hl.normalize_rows();
        h.push(hl);
        prev = rank;
    }
    let w_last = DenseMatrix::from_fn(m, ranks[layers - 1], |_, _| r.random_range(0.5..2.0));
    let mut w = vec![w_last];
    for l in (1..layers).rev() {
        let below = w[0].matmul(&h[l])?;
        w.insert(0, below);
    }
    let x = w[0].matmul(&h[0])?;
    DeepState::new(x, w, h)
}

/// Sparse nonnegative data with a hierarchical structure: `X = W_L H_L ⋯ H_1`
/// where each `H_l` keeps about `density` of its entries, plus
/// multiplicative noise of relative size `noise`. Entries are floored at a
/// small positive value so every β-divergence is finite.
pub fn sparse_hierarchical(
    m: usize,
    n: usize,
    ranks: &[usize],
    density: f64,
    noise: f64,
    seed: u64,
) -> Result<DenseMatrix> {
    validate_ranks(ranks)?;
    let mut r = rng(seed);
    let layers = ranks.len();
    let mut acc = DenseMatrix::from_fn(m, ranks[layers - 1], |_, _| {
        if r.random::<f64>() < density {
            r.random_range(0.0..1.0)
        } else {
            0.0
        }
    });
    for l in (0..layers).rev() {
        let cols = if l == 0 { n } else { ranks[l - 1] };
        let mut hl = DenseMatrix::from_fn(ranks[l], cols, |_, _| {
            if r.random::<f64>() < density {
                r.random_range(0.0..1.0)
            } else {
                0.0
            }
        });
        // Every column used at least once so no data column is empty.
        for j in 0..cols {
            let k = j % ranks[l];
            if hl.get(k, j) == 0.0 {
                hl.set(k, j, r.random_range(0.5..1.0));
            }
        }
        acc = acc.matmul(&hl)?;
    }
    let scale = acc.max_value().max(f64::MIN_POSITIVE);
    let noise = DenseMatrix::from_fn(m, n, |_, _| 1.0 + noise * (2.0 * r.random::<f64>() - 1.0));
    acc.zip_map(&noise, |v, e| (v / scale * e).max(1e-6))
}

/// A linear mixture of a few smooth spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperspectralMixture {
    /// `bands x pixels`; column `j` is the spectrum of pixel `j`.
    pub x: DenseMatrix,
    /// `bands x materials`, unit column sums.
    pub endmembers: DenseMatrix,
    /// `materials x pixels`, unit column sums.
    pub abundances: DenseMatrix,
    pub width: usize,
    pub height: usize,
}

/// `materials` smooth positive spectra over `bands` bands mixed with
/// Dirichlet(`concentration`) abundances on a `width x height` image.
pub fn hyperspectral_mixture(
    bands: usize,
    width: usize,
    height: usize,
    materials: usize,
    concentration: f64,
    seed: u64,
) -> Result<HyperspectralMixture> {
    if materials == 0 || bands < materials {
        return Err(Error::Config("need at least as many bands as materials".into()));
    }
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::Config(format!("invalid concentration: {e}")))?;
    let mut r = rng(seed);
    // Each material: a baseline plus one Gaussian bump at its own band.
    let mut endmembers = DenseMatrix::from_fn(bands, materials, |b, k| {
        let center = (k as f64 + 0.5) * bands as f64 / materials as f64;
        let width = bands as f64 / (2.0 * materials as f64);
        let t = (b as f64 - center) / width;
        0.05 + (-0.5 * t * t).exp()
    });
    for b in 0..bands {
        for k in 0..materials {
            let v = endmembers.get(b, k) * r.random_range(0.9..1.1);
            endmembers.set(b, k, v);
        }
    }
    endmembers.normalize_cols();
    let pixels = width * height;
    let mut abundances = DenseMatrix::from_fn(materials, pixels, |_, _| {
        gamma.sample(&mut r).max(1e-12)
    });
    abundances.normalize_cols();
    let x = endmembers.matmul(&abundances)?;
    Ok(HyperspectralMixture {
        x,
        endmembers,
        abundances,
        width,
        height,
    })
}
