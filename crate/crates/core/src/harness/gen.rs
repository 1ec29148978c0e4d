use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::block::{BlockShape, BlockVector, SensingMatrix};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::rip::{block_rip_constant_with, RipReport};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-mode sub-seed for `(master, cell, trial)`; independent of the
/// order in which trials are executed.
pub fn derive_seed(master: u64, cell: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ cell) ^ trial)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // column-major fill keeps the stream layout independent of nalgebra internals
    let data: Vec<f64> = (0..rows * cols).map(|_| r.sample(StandardNormal)).collect();
    DMatrix::from_column_slice(rows, cols, &data)
}

/// i.i.d. `N(0, 1/m)` entries, optionally scaled to unit columns.
pub fn gen_gaussian_matrix(m: usize, shape: BlockShape, seed: u64, normalize_columns: bool) -> Result<SensingMatrix> {
    if m == 0 {
        return Err(Error::invalid("m must be >= 1"));
    }
    let mut r = rng(seed);
    let mut a = gaussian_matrix(&mut r, m, shape.len()) / (m as f64).sqrt();
    if normalize_columns {
        for mut col in a.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= n;
            }
        }
    }
    SensingMatrix::new(shape, a)
}

/// Block-norm profile of a planted signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Flat,
    /// Norms `alpha^{-(j-1)}`, `j = 1..K`.
    Decaying(f64),
    /// Explicit norms, weakly decreasing, one per support block.
    Custom(Vec<f64>),
}

impl Profile {
    pub fn norms(&self, k: usize) -> Result<Vec<f64>> {
        match self {
            Profile::Flat => Ok(vec![1.0; k]),
            Profile::Decaying(alpha) => {
                if !(*alpha >= 1.0) {
                    return Err(Error::invalid(format!("decay factor must be >= 1, got {alpha}")));
                }
                Ok((0..k).map(|j| alpha.powi(-(j as i32))).collect())
            }
            Profile::Custom(norms) => {
                if norms.len() != k {
                    return Err(Error::invalid(format!("custom profile has {} norms, K = {k}", norms.len())));
                }
                if norms.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(Error::invalid("custom norms must be positive and finite"));
                }
                if norms.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::invalid("custom norms must be weakly decreasing"));
                }
                Ok(norms.clone())
            }
        }
    }
}

/// `K`-block signal on a uniformly random support with random unit
/// directions per block. Which support block receives which norm is also
/// random.
pub fn gen_planted_signal(shape: BlockShape, k: usize, profile: &Profile, seed: u64) -> Result<BlockVector> {
    if k == 0 || k > shape.blocks() {
        return Err(Error::invalid(format!("K = {k} must lie in 1..={}", shape.blocks())));
    }
    let norms = profile.norms(k)?;
    let mut r = rng(seed);
    let support = rand::seq::index::sample(&mut r, shape.blocks(), k).into_vec();
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut r);
    let d = shape.block_size();
    let mut x = DVector::zeros(shape.len());
    for (slot, &blk) in support.iter().enumerate() {
        let dir = loop {
            let v = DVector::from_fn(d, |_, _| r.sample::<f64, _>(StandardNormal));
            let n = v.norm();
            if n > 1e-300 {
                break v / n;
            }
        };
        x.rows_mut(blk * d, d).copy_from(&(dir * norms[order[slot]]));
    }
    BlockVector::new(shape, x)
}

/// Uniformly random direction scaled to `||v||_2 = eps`.
pub fn gen_bounded_noise(m: usize, eps: f64, seed: u64) -> Result<DVector<f64>> {
    if !(eps >= 0.0) {
        return Err(Error::invalid("eps must be >= 0"));
    }
    if eps == 0.0 {
        return Ok(DVector::zeros(m));
    }
    let mut r = rng(seed);
    loop {
        let v = DVector::from_fn(m, |_, _| r.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-300 {
            return Ok(v * (eps / n));
        }
    }
}

/// A generated matrix together with its certificate.
#[derive(Debug, Clone)]
pub struct CertifiedMatrix {
    pub matrix: SensingMatrix,
    pub report: RipReport,
    /// Perturbation size that produced the matrix.
    pub eta: f64,
}

/// Perturbed orthonormal matrix `Q + eta G / sqrt(m)` whose exact
/// `delta_order` lies in `[lo, hi)`. `eta` is found by bisection, starting
/// from a bracket that is grown or shrunk as needed.
pub fn gen_certified_matrix(
    m: usize,
    shape: BlockShape,
    order: usize,
    range: (f64, f64),
    seed: u64,
    budget: u64,
    exec: Exec,
) -> Result<CertifiedMatrix> {
    let (lo, hi) = range;
    if !(0.0 <= lo && lo < hi) {
        return Err(Error::invalid(format!("empty delta range [{lo}, {hi})")));
    }
    let n = shape.len();
    if m < n {
        return Err(Error::invalid(format!("need m >= n = {n} for an orthonormal base, got m = {m}")));
    }
    let mut r = rng(seed);
    let q = gaussian_matrix(&mut r, m, n).qr().q();
    let g = gaussian_matrix(&mut r, m, n) / (m as f64).sqrt();

    let eval = |eta: f64| -> Result<(SensingMatrix, RipReport)> {
        let a = SensingMatrix::new(shape, &q + &g * eta)?;
        let rep = block_rip_constant_with(&a, order, budget, exec)?;
        Ok((a, rep))
    };
    let inside = |d: f64| d >= lo && d < hi;

    let (mut below, mut above) = (0.0_f64, None::<f64>);
    let mut eta = 1.0;
    for _ in 0..200 {
        let (a, rep) = eval(eta)?;
        if inside(rep.delta) {
            return Ok(CertifiedMatrix {
                matrix: a,
                report: rep,
                eta,
            });
        }
        if rep.delta < lo {
            below = eta;
        } else {
            above = Some(eta);
        }
        eta = match above {
            Some(up) => 0.5 * (below + up),
            None => 2.0 * eta,
        };
    }
    Err(Error::invalid(format!(
        "could not place delta_{order} in [{lo}, {hi}) for seed {seed}"
    )))
}
