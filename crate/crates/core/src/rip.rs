//! Exact block restricted-isometry constants.
//!
//! `delta_K` is the smallest `delta` with
//! `(1 - delta) ||x||^2 <= ||A x||^2 <= (1 + delta) ||x||^2` for every
//! `K`-block-sparse `x`. It equals the largest deviation from 1 of an extreme
//! eigenvalue of a Gram submatrix `A[S]^T A[S]` over all `|S| = K`, which is
//! what [`block_rip_constant`] enumerates.
//!
//! The module also carries numeric checkers for the inequalities the recovery
//! guarantees are built from (sandwich bounds and the main correlation-gap
//! inequality).

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::block::{block_l2p_norm, BlockShape, BlockSupport, BlockVector, MixedNorm, SensingMatrix};
use crate::bomp::full_rank_qr;
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::tol;

/// Certified block-RIC of one order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RipReport {
    pub order: usize,
    pub delta: f64,
    /// First support, in lexicographic order, that attains `delta`.
    pub attaining_support: BlockSupport,
    /// The Gram eigenvalue on `attaining_support` that sets `delta`.
    pub attaining_eigenvalue: f64,
    pub supports_checked: u64,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// The `rank`-th `k`-subset of `0..n` in lexicographic order.
fn unrank_combination(mut rank: u128, n: usize, k: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for pos in 0..k {
        let rest = k - pos - 1;
        let mut c = next;
        loop {
            let count = binomial(n - c - 1, rest);
            if rank < count {
                break;
            }
            rank -= count;
            c += 1;
        }
        out.push(c);
        next = c + 1;
    }
    out
}

/// Advances `c` to the next `k`-subset of `0..n`; false once exhausted.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[derive(Debug, Clone, Copy)]
struct Extremes {
    min: f64,
    max: f64,
}

impl Extremes {
    fn deviation(self) -> f64 {
        (self.max - 1.0).max(1.0 - self.min)
    }

    fn attaining(self) -> f64 {
        if 1.0 - self.min > self.max - 1.0 {
            self.min
        } else {
            self.max
        }
    }
}

fn extremes(m: DMatrix<f64>) -> Extremes {
    let ev = m.symmetric_eigenvalues();
    Extremes {
        min: ev.iter().copied().fold(f64::INFINITY, f64::min),
        max: ev.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Gram submatrix `A[S]^T A[S]` cut from the full Gram matrix.
fn gram_block(gram: &DMatrix<f64>, shape: BlockShape, support: &[usize]) -> DMatrix<f64> {
    let d = shape.block_size();
    let k = support.len() * d;
    DMatrix::from_fn(k, k, |r, c| {
        let (br, ir) = (support[r / d], r % d);
        let (bc, ic) = (support[c / d], c % d);
        gram[(br * d + ir, bc * d + ic)]
    })
}

#[derive(Debug, Clone)]
struct Best {
    rank: u128,
    support: Vec<usize>,
    ext: Extremes,
}

fn better(a: Best, b: Best) -> Best {
    let (da, db) = (a.ext.deviation(), b.ext.deviation());
    if db > da || (db == da && b.rank < a.rank) {
        b
    } else {
        a
    }
}

const CHUNK: u128 = 512;

/// Exact `delta_K` by enumerating every `K`-block support. Fails when the
/// number of supports exceeds `budget`.
pub fn block_rip_constant(a: &SensingMatrix, order: usize, budget: u64) -> Result<RipReport> {
    block_rip_constant_with(a, order, budget, Exec::default())
}

pub fn block_rip_constant_with(
    a: &SensingMatrix,
    order: usize,
    budget: u64,
    exec: Exec,
) -> Result<RipReport> {
    let shape = a.shape();
    let blocks = shape.blocks();
    if order == 0 || order > blocks {
        return Err(Error::invalid(format!(
            "RIP order {order} must lie in 1..={blocks}"
        )));
    }
    let count = binomial(blocks, order);
    if count > budget as u128 {
        return Err(Error::BudgetExceeded {
            blocks,
            order,
            count,
            budget,
        });
    }

    let gram = a.entries().tr_mul(a.entries());
    let chunks = count.div_ceil(CHUNK) as usize;
    let best = par::map_reduce(
        exec,
        chunks,
        |chunk| {
            let start = chunk as u128 * CHUNK;
            let end = (start + CHUNK).min(count);
            let mut comb = unrank_combination(start, blocks, order);
            let mut best: Option<Best> = None;
            let mut rank = start;
            loop {
                let ext = extremes(gram_block(&gram, shape, &comb));
                let cand = Best {
                    rank,
                    support: comb.clone(),
                    ext,
                };
                best = Some(match best {
                    None => cand,
                    Some(b) => better(b, cand),
                });
                rank += 1;
                if rank >= end || !next_combination(&mut comb, blocks) {
                    break;
                }
            }
            best.expect("chunk is non-empty")
        },
        better,
    )
    .expect("at least one support");

    Ok(RipReport {
        order,
        delta: best.ext.deviation(),
        attaining_support: BlockSupport::from_sorted_unchecked(best.support),
        attaining_eigenvalue: best.ext.attaining(),
        supports_checked: count as u64,
    })
}

/// Unit-norm block vector on the attaining support whose Rayleigh quotient
/// `||A x||^2` equals the attaining eigenvalue.
pub fn attaining_vector(a: &SensingMatrix, report: &RipReport) -> BlockVector {
    extremal_vector(a, &report.attaining_support, report.attaining_eigenvalue)
}

/// Eigenvector of `A[S]^T A[S]` for the eigenvalue closest to `target`,
/// embedded as a block vector.
pub fn extremal_vector(a: &SensingMatrix, support: &BlockSupport, target: f64) -> BlockVector {
    let sub = a.submatrix(support);
    let eig = sub.tr_mul(&sub).symmetric_eigen();
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &v)| (i, (v - target).abs()))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let v: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
    BlockVector::embed(a.shape(), support, &v).expect("eigenvector matches support size")
}

/// One sample that broke the sandwich bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichWitness {
    pub support: BlockSupport,
    pub energy_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub trials: usize,
    pub violations: Vec<SandwichWitness>,
    /// Distance of the attaining eigenvector's energy ratio from the nearer bound.
    pub attainment_gap: f64,
    pub attained: bool,
}

impl SandwichReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.attained
    }
}

/// `(1 - delta) ||x||^2 <= ||A x||^2 <= (1 + delta) ||x||^2` with relative slack.
pub fn sandwich_holds(a: &SensingMatrix, x: &BlockVector, delta: f64) -> Result<bool> {
    let energy = a.apply(x)?.norm_squared();
    let xx = x.values().norm_squared();
    let slack = tol::INEQUALITY_SLACK * xx;
    Ok((1.0 - delta) * xx - slack <= energy && energy <= (1.0 + delta) * xx + slack)
}

/// Samples `trials` random `K`-block-sparse vectors against a certified
/// constant and checks the bound is attained by the extremal eigenvector.
pub fn verify_rip_sandwich(
    a: &SensingMatrix,
    report: &RipReport,
    trials: usize,
    seed: u64,
) -> Result<SandwichReport> {
    let shape = a.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    for _ in 0..trials {
        let mut idx = sample(&mut rng, shape.blocks(), report.order).into_vec();
        idx.sort_unstable();
        let support = BlockSupport::from_sorted_unchecked(idx);
        let coeffs = DVector::from_fn(report.order * shape.block_size(), |_, _| {
            StandardNormal.sample(&mut rng)
        });
        let x = BlockVector::embed(shape, &support, &coeffs)?;
        if !sandwich_holds(a, &x, report.delta)? {
            let ratio = a.apply(&x)?.norm_squared() / x.values().norm_squared();
            violations.push(SandwichWitness {
                support,
                energy_ratio: ratio,
            });
        }
    }
    let v = attaining_vector(a, report);
    let ratio = a.apply(&v)?.norm_squared() / v.values().norm_squared();
    let gap = (ratio - (1.0 - report.delta))
        .abs()
        .min((ratio - (1.0 + report.delta)).abs());
    if !sandwich_holds(a, &v, report.delta)? {
        violations.push(SandwichWitness {
            support: report.attaining_support.clone(),
            energy_ratio: ratio,
        });
    }
    Ok(SandwichReport {
        trials,
        violations,
        attainment_gap: gap,
        attained: gap <= 1e-6,
    })
}

/// `P^perp[S] = I - A[S] (A[S]^T A[S])^{-1} A[S]^T`, built from a thin QR.
pub fn orth_complement_projector(a: &SensingMatrix, support: &BlockSupport) -> Result<DMatrix<f64>> {
    let m = a.rows();
    let (q, _) = full_rank_qr(a, support)?;
    Ok(DMatrix::identity(m, m) - &q * q.transpose())
}

/// Both sides of the correlation-gap inequality for one `(Omega, S, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaMainCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub nu: f64,
    pub holds: bool,
}

/// Checks
///
/// `||A^T[Omega\S] P u||_{2,inf} - ||A^T[Omega^c] P u||_{2,inf}
///     >= (1 - sqrt(nu + 1) delta) ||x[Omega\S]||_2 / sqrt(nu)`
///
/// with `u = A[Omega\S] x[Omega\S]`, `P = P^perp[S]` and the tightest
/// `nu = ||x[Omega\S]||_{2,1}^2 / ||x[Omega\S]||_2^2`.
pub fn verify_lemma_main(
    a: &SensingMatrix,
    omega: &BlockSupport,
    s: &BlockSupport,
    x: &BlockVector,
    delta: f64,
) -> Result<LemmaMainCheck> {
    let shape = a.shape();
    if x.shape() != shape {
        return Err(Error::invalid("signal and matrix use different block shapes"));
    }
    if !s.is_subset_of(omega) {
        return Err(Error::invalid(format!("S = {s} is not a subset of Omega = {omega}")));
    }
    if s.len() >= omega.len() {
        return Err(Error::invalid("need |S| < |Omega|"));
    }
    let off = omega.complement(shape.blocks());
    if off.indices().iter().any(|&i| x.block_norm(i) != 0.0) {
        return Err(Error::invalid("signal has mass outside Omega"));
    }
    let rest = omega.difference(s);
    let x_rest = BlockVector::embed(shape, &rest, &x.restrict(&rest))?;
    let norm2 = x_rest.values().norm();
    if rest.indices().iter().any(|&i| x.block_norm(i) == 0.0) {
        return Err(Error::invalid("signal must be nonzero on every block of Omega \\ S"));
    }
    let l21 = block_l2p_norm(&x_rest, MixedNorm::L1);
    let nu = (l21 * l21) / (norm2 * norm2);

    let proj = orth_complement_projector(a, s)?;
    let u = &proj * a.apply(&x_rest)?;
    let corr = a.block_correlations(&u);
    let max_over = |set: &BlockSupport| {
        set.indices()
            .iter()
            .map(|&i| corr[i])
            .fold(0.0, f64::max)
    };
    let lhs = max_over(&rest) - max_over(&off);
    let rhs = (1.0 - (nu + 1.0).sqrt() * delta) * norm2 / nu.sqrt();
    Ok(LemmaMainCheck {
        lhs,
        rhs,
        nu,
        holds: lhs >= rhs - tol::INEQUALITY_SLACK,
    })
}
