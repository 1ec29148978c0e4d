//! Adversarial instances at and beyond the recovery thresholds.
//!
//! Each construction prescribes a Gram matrix `C` on `K + 1` blocks, factors
//! it as `C = A^T A` with `A` upper triangular, and plants a `K`-block signal
//! whose first-iteration correlation with an off-support block matches or
//! beats every on-support correlation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::block::{block_support, BlockShape, BlockSupport, BlockVector, SensingMatrix};
use crate::bomp::first_pick_correlations;
use crate::conditions::SQRT2_2;
use crate::error::{Error, Result};
use crate::rip::block_rip_constant;
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// General block-sparse signals, `1/sqrt(K+1) <= t < 1`.
    Nr,
    /// Decaying signals, `sqrt(2)/2 <= t < 1`.
    Sdnr,
    /// Decaying-condition boundary, `alpha = g_K^{-1}(K) = 1`.
    Sdnr2,
    /// Partial-recovery boundary, `||x[1]|| = h_{K-1}(K) ||x[2]||`.
    Sdnrp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub family: Family,
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleInstance {
    pub matrix: SensingMatrix,
    pub signal: BlockVector,
    pub measurements: DVector<f64>,
    pub gram: DMatrix<f64>,
    pub meta: InstanceMeta,
}

impl CounterexampleInstance {
    pub fn support(&self) -> BlockSupport {
        block_support(&self.signal, tol::SUPPORT_TOL)
    }

    fn assemble(gram: DMatrix<f64>, shape: BlockShape, x: DVector<f64>, meta: InstanceMeta) -> Result<Self> {
        let a = factor_gram(&gram)?;
        let matrix = SensingMatrix::new(shape, a)?;
        let signal = BlockVector::new(shape, x)?;
        let measurements = matrix.apply(&signal)?;
        Ok(Self {
            matrix,
            signal,
            measurements,
            gram,
            meta,
        })
    }
}

/// Upper-triangular `A` with positive diagonal and `A^T A = C`.
pub fn factor_gram(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !c.is_square() || c.nrows() == 0 {
        return Err(Error::invalid("Gram matrix must be square and non-empty"));
    }
    let scale = c.amax().max(f64::MIN_POSITIVE);
    if (c - c.transpose()).amax() > 1e-14 * scale {
        return Err(Error::invalid("Gram matrix is not symmetric"));
    }
    let ev = c.symmetric_eigenvalues();
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(0.0, |acc: f64, v| acc.max(v.abs()));
    if !(lo > tol::PD_MARGIN * hi) {
        return Err(Error::NotPositiveDefinite(lo));
    }
    let chol = c
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite(lo))?;
    Ok(chol.l().transpose())
}

fn check_regime(family: &'static str, t: f64, lo: f64) -> Result<()> {
    // the lower end gets a little room for values like 1/sqrt(K+1) parsed from text
    if !(t >= lo - 1e-15 && t < 1.0) {
        return Err(Error::OutsideRegime {
            family,
            t,
            lo,
            hi: 1.0,
        });
    }
    Ok(())
}

fn check_dims(k: usize, d: usize) -> Result<BlockShape> {
    if k == 0 {
        return Err(Error::invalid("K must be >= 1"));
    }
    BlockShape::new(k + 1, d)
}

/// `B(d)`: `K/(K+1) I` on the first `K` blocks, `(K+2)/(K+1) I` on the last,
/// coupled through `E / (K+1)` with `E` a stack of `K` identity blocks.
pub fn nr_base_gram(k: usize, d: usize) -> DMatrix<f64> {
    let kf = k as f64;
    let n = (k + 1) * d;
    let mut b = DMatrix::zeros(n, n);
    for i in 0..k * d {
        b[(i, i)] = kf / (kf + 1.0);
    }
    for i in k * d..n {
        b[(i, i)] = (kf + 2.0) / (kf + 1.0);
    }
    for blk in 0..k {
        for j in 0..d {
            let (r, c) = (blk * d + j, k * d + j);
            b[(r, c)] = 1.0 / (kf + 1.0);
            b[(c, r)] = 1.0 / (kf + 1.0);
        }
    }
    b
}

/// Instance realizing `delta_{K+1} = t` on which the first pick can leave
/// the support.
pub fn build_nr(k: usize, d: usize, t: f64) -> Result<CounterexampleInstance> {
    let shape = check_dims(k, d)?;
    let boundary = 1.0 / ((k + 1) as f64).sqrt();
    check_regime("NR", t, boundary)?;
    let shift = (t - boundary).max(0.0);
    let n = shape.len();
    let gram = nr_base_gram(k, d) - DMatrix::identity(n, n) * shift;
    let x = DVector::from_fn(n, |i, _| if i < k * d { 1.0 } else { 0.0 });
    CounterexampleInstance::assemble(
        gram,
        shape,
        x,
        InstanceMeta {
            family: Family::Nr,
            k,
            d,
            t,
            alpha: None,
            a1: None,
        },
    )
}

/// Decaying-signal instance realizing `delta_{K+1} = t >= sqrt(2)/2`. The
/// planted signal is `(a1 1, 0, a2 1, ..., aK 1)` with `a_{j+1} = a_j / alpha`.
pub fn build_sdnr(k: usize, d: usize, t: f64, alpha: f64, a1: f64) -> Result<CounterexampleInstance> {
    let shape = check_dims(k, d)?;
    check_regime("SDNR", t, SQRT2_2)?;
    if !(alpha > 1.0) || !(a1 > 0.0) {
        return Err(Error::invalid("SDNR needs alpha > 1 and a1 > 0"));
    }
    let diag = (1.0 + 2f64.sqrt() - 2.0 * t) / 2.0;
    assert!(diag > 0.0, "diagonal stays positive for t < (1 + sqrt 2)/2");
    let n = shape.len();
    let mut gram = DMatrix::identity(n, n) * diag;
    for j in 0..d {
        gram[(d + j, d + j)] = diag + 1.0;
        gram[(j, d + j)] = 0.5;
        gram[(d + j, j)] = 0.5;
    }
    let mut x = DVector::zeros(n);
    let mut a = a1;
    for (pos, blk) in std::iter::once(0).chain(2..=k).enumerate() {
        if pos > 0 {
            a /= alpha;
        }
        x.rows_mut(blk * d, d).fill(a);
    }
    CounterexampleInstance::assemble(
        gram,
        shape,
        x,
        InstanceMeta {
            family: Family::Sdnr,
            k,
            d,
            t,
            alpha: Some(alpha),
            a1: Some(a1),
        },
    )
}

/// The general construction at `t = 1/sqrt(K+1)` with equal block norms,
/// tagged as the decaying-condition or partial-recovery boundary instance.
pub fn build_boundary(k: usize, d: usize, family: Family) -> Result<CounterexampleInstance> {
    if !matches!(family, Family::Sdnr2 | Family::Sdnrp) {
        return Err(Error::invalid("boundary family must be sdnr2 or sdnrp"));
    }
    let mut inst = build_nr(k, d, 1.0 / ((k + 1) as f64).sqrt())?;
    inst.meta.family = family;
    if family == Family::Sdnr2 {
        inst.meta.alpha = Some(1.0);
    }
    Ok(inst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FailureReport {
    pub delta: f64,
    pub max_on_support: f64,
    pub max_off_support: f64,
    pub failure_witnessed: bool,
}

impl FailureReport {
    pub fn margin(&self) -> f64 {
        self.max_off_support - self.max_on_support
    }
}

/// Recertifies `delta_{K+1}` and compares first-iteration correlations on and
/// off the support.
pub fn verify_failure(a: &SensingMatrix, x: &BlockVector) -> Result<FailureReport> {
    let omega = block_support(x, tol::SUPPORT_TOL);
    if omega.is_empty() {
        return Err(Error::EmptySupport);
    }
    let order = (omega.len() + 1).min(a.shape().blocks());
    let rip = block_rip_constant(a, order, tol::DEFAULT_RIP_BUDGET)?;
    let y = a.apply(x)?;
    let fp = first_pick_correlations(a, &y)?;
    let (mut on, mut off) = (0.0_f64, 0.0_f64);
    for (i, &c) in fp.correlations.iter().enumerate() {
        if omega.contains(i) {
            on = on.max(c);
        } else {
            off = off.max(c);
        }
    }
    Ok(FailureReport {
        delta: rip.delta,
        max_on_support: on,
        max_off_support: off,
        failure_witnessed: off >= on - 1e-12,
    })
}

impl CounterexampleInstance {
    pub fn verify(&self) -> Result<FailureReport> {
        verify_failure(&self.matrix, &self.signal)
    }
}
