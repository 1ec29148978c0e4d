//! Block Orthogonal Matching Pursuit.
//!
//! Each iteration picks the block whose columns correlate most with the
//! current residual (largest `||A[i]^T r||_2`), adds it to the support,
//! refits `y` by least squares on the support and updates the residual.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::block::{BlockSupport, BlockVector, SensingMatrix};
use crate::error::{Error, Result};
use crate::tol;

/// When the pursuit stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Run exactly `k` iterations.
    FixedIterations(usize),
    /// Stop as soon as `||r^k||_2 <= eps`, giving up after `max_iter` picks.
    ResidualNorm { eps: f64, max_iter: usize },
}

impl StopRule {
    /// Residual-norm rule with the default iteration cap: every block, or as
    /// many as the row count can keep full rank, whichever is smaller.
    pub fn residual(eps: f64, a: &SensingMatrix) -> Self {
        let shape = a.shape();
        StopRule::ResidualNorm {
            eps,
            max_iter: shape.blocks().min(a.rows() / shape.block_size()).max(1),
        }
    }
}

/// How the argmax in the selection step resolves ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    Lowest,
    Highest,
}

/// Full trace of one pursuit run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BompResult {
    /// Chosen blocks in pick order.
    #[serde(serialize_with = "one_based")]
    pub picks: Vec<usize>,
    /// `||r^k||_2` for `k = 0..=iterations`.
    pub residual_norms: Vec<f64>,
    pub support: BlockSupport,
    #[serde(serialize_with = "values")]
    pub estimate: BlockVector,
    /// Per-iteration block correlations `||A[i]^T r^{k-1}||_2`, if requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlation_trace: Option<Vec<Vec<f64>>>,
    /// Set when a residual-norm rule hit its iteration cap without firing.
    pub max_iter_reached: bool,
}

impl BompResult {
    pub fn iterations(&self) -> usize {
        self.picks.len()
    }

    pub fn final_residual(&self) -> f64 {
        *self.residual_norms.last().expect("residual_norms always holds r^0")
    }
}

fn one_based<S: serde::Serializer>(v: &[usize], s: S) -> std::result::Result<S::Ok, S::Error> {
    v.iter().map(|i| i + 1).collect::<Vec<_>>().serialize(s)
}

fn values<S: serde::Serializer>(x: &BlockVector, s: S) -> std::result::Result<S::Ok, S::Error> {
    x.values().as_slice().serialize(s)
}

/// Options beyond the stop rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct BompOptions {
    pub tie_break: TieBreak,
    pub trace_correlations: bool,
}

/// Block correlations of `y` together with every index attaining the maximum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstPick {
    pub correlations: Vec<f64>,
    /// Blocks within [`tol::TIE_TOL`] (relative) of the maximum, ascending.
    pub argmax: BlockSupport,
}

impl FirstPick {
    pub fn max(&self) -> f64 {
        self.correlations.iter().copied().fold(0.0, f64::max)
    }
}

/// `||A[i]^T y||_2` for each block and the tied-maximum set.
pub fn first_pick_correlations(a: &SensingMatrix, y: &DVector<f64>) -> Result<FirstPick> {
    check_measurements(a, y)?;
    let correlations = a.block_correlations(y);
    let argmax = tied_argmax(&correlations, &BlockSupport::empty());
    Ok(FirstPick {
        correlations,
        argmax,
    })
}

/// Indices (outside `exclude`) whose value is within the tie tolerance of the
/// largest such value.
fn tied_argmax(values: &[f64], exclude: &BlockSupport) -> BlockSupport {
    let best = values
        .iter()
        .enumerate()
        .filter(|(i, _)| !exclude.contains(*i))
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return BlockSupport::empty();
    }
    let cut = best - tol::TIE_TOL * best.abs().max(f64::MIN_POSITIVE);
    BlockSupport::from_sorted_unchecked(
        values
            .iter()
            .enumerate()
            .filter(|(i, &v)| !exclude.contains(*i) && v >= cut)
            .map(|(i, _)| i)
            .collect(),
    )
}

fn check_measurements(a: &SensingMatrix, y: &DVector<f64>) -> Result<()> {
    if y.len() != a.rows() {
        return Err(Error::invalid(format!(
            "measurement vector has length {}, matrix has {} rows",
            y.len(),
            a.rows()
        )));
    }
    Ok(())
}

/// Thin QR of `A[S]` with a rank check on the diagonal of `R`.
pub(crate) fn full_rank_qr(
    a: &SensingMatrix,
    support: &BlockSupport,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let sub = a.submatrix(support);
    let (m, k) = sub.shape();
    if k > m {
        return Err(Error::DegenerateSupport(support.one_based()));
    }
    if k == 0 {
        return Ok((DMatrix::zeros(m, 0), DMatrix::zeros(0, 0)));
    }
    let qr = sub.qr();
    let q = qr.q();
    let r = qr.r();
    let diag: Vec<f64> = (0..k).map(|i| r[(i, i)].abs()).collect();
    let largest = diag.iter().copied().fold(0.0, f64::max);
    if largest == 0.0 || diag.iter().any(|&v| v <= tol::RANK_TOL * largest) {
        return Err(Error::DegenerateSupport(support.one_based()));
    }
    Ok((q, r))
}

/// Minimizer of `||y - A[S] z||_2`, with `z` stacked in ascending block order.
pub fn least_squares_on_support(
    a: &SensingMatrix,
    support: &BlockSupport,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_measurements(a, y)?;
    let (q, r) = full_rank_qr(a, support)?;
    if r.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    let qty = q.tr_mul(y);
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| Error::DegenerateSupport(support.one_based()))
}

/// Runs the pursuit on `y = A x + v`.
pub fn bomp_run(
    a: &SensingMatrix,
    y: &DVector<f64>,
    stop: StopRule,
    tie_break: TieBreak,
) -> Result<BompResult> {
    bomp_run_with(
        a,
        y,
        stop,
        BompOptions {
            tie_break,
            trace_correlations: false,
        },
    )
}

pub fn bomp_run_with(
    a: &SensingMatrix,
    y: &DVector<f64>,
    stop: StopRule,
    opts: BompOptions,
) -> Result<BompResult> {
    check_measurements(a, y)?;
    let shape = a.shape();
    let blocks = shape.blocks();
    let (limit, eps) = match stop {
        StopRule::FixedIterations(k) => {
            if k == 0 || k > blocks {
                return Err(Error::invalid(format!(
                    "iteration count {k} must lie in 1..={blocks}"
                )));
            }
            if k * shape.block_size() > a.rows() {
                return Err(Error::invalid(format!(
                    "{k} blocks of size {} need at least {} rows, matrix has {}",
                    shape.block_size(),
                    k * shape.block_size(),
                    a.rows()
                )));
            }
            (k, None)
        }
        StopRule::ResidualNorm { eps, max_iter } => {
            if max_iter == 0 || !(eps >= 0.0) {
                return Err(Error::invalid("residual rule needs eps >= 0 and max_iter >= 1"));
            }
            (max_iter.min(blocks), Some(eps))
        }
    };

    let mut picks = Vec::with_capacity(limit);
    let mut support = BlockSupport::empty();
    let mut residual = y.clone();
    let mut residual_norms = vec![residual.norm()];
    let mut coefficients = DVector::zeros(0);
    let mut trace = opts.trace_correlations.then(Vec::new);
    let mut fired = eps.is_some_and(|e| residual_norms[0] <= e);

    while !fired && picks.len() < limit {
        let correlations = a.block_correlations(&residual);
        let tied = tied_argmax(&correlations, &support);
        let pick = match opts.tie_break {
            TieBreak::Lowest => tied.indices().first(),
            TieBreak::Highest => tied.indices().last(),
        }
        .copied()
        .expect("at least one unselected block remains");
        if let Some(t) = trace.as_mut() {
            t.push(correlations);
        }

        picks.push(pick);
        support = support.union(&BlockSupport::from_sorted_unchecked(vec![pick]));
        coefficients = least_squares_on_support(a, &support, y)?;
        residual = y - a.submatrix(&support) * &coefficients;
        let norm = residual.norm();
        residual_norms.push(norm);
        fired = eps.is_some_and(|e| norm <= e);
    }

    let estimate = BlockVector::embed(shape, &support, &coefficients)?;
    Ok(BompResult {
        picks,
        residual_norms,
        support,
        estimate,
        correlation_trace: trace,
        max_iter_reached: eps.is_some() && !fired,
    })
}
