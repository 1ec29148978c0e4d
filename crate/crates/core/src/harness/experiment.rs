use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::gen::{derive_seed, gen_bounded_noise, gen_certified_matrix, gen_gaussian_matrix, gen_planted_signal, Profile};
use crate::block::{block_support, BlockShape, BlockSupport, SensingMatrix};
use crate::bomp::{bomp_run, StopRule, TieBreak};
use crate::conditions::{
    check_decaying, check_general_sharp, g_inverse, noise_min_magnitude_decaying, noise_min_magnitude_general,
    partial_recovery_prefix, partial_threshold, SQRT2_2,
};
use crate::counterexample::{build_nr, build_sdnr, CounterexampleInstance};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::rip::block_rip_constant_with;
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentFamily {
    GaussianRecovery,
    DecayingRecovery,
    NoisyRecovery,
    NrSweep,
    SdnrSweep,
    PartialRecovery,
}

impl ExperimentFamily {
    pub fn name(self) -> &'static str {
        match self {
            Self::GaussianRecovery => "gaussian_recovery",
            Self::DecayingRecovery => "decaying_recovery",
            Self::NoisyRecovery => "noisy_recovery",
            Self::NrSweep => "nr_sweep",
            Self::SdnrSweep => "sdnr_sweep",
            Self::PartialRecovery => "partial_recovery",
        }
    }

    fn is_sweep(self) -> bool {
        matches!(self, Self::NrSweep | Self::SdnrSweep)
    }
}

fn default_factor() -> f64 {
    1.01
}

fn default_true() -> bool {
    true
}

fn default_budget() -> u64 {
    tol::DEFAULT_RIP_BUDGET
}

/// Grid of experiment cells. Unused grid axes for a family are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: ExperimentFamily,
    pub k: Vec<usize>,
    pub d: Vec<usize>,
    /// Number of blocks for random families.
    #[serde(default)]
    pub l: Option<usize>,
    /// Number of measurements for random families.
    #[serde(default)]
    pub m: Option<usize>,
    /// Counterexample parameter for the sweeps.
    #[serde(default)]
    pub t: Vec<f64>,
    /// When set, random matrices are perturbed orthonormal matrices whose
    /// exact `delta_{K+1}` lies in `[lo, hi)`.
    #[serde(default)]
    pub delta_range: Option<(f64, f64)>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    /// Read `alpha` as multipliers of the smallest admissible decay factor
    /// for the certified `delta`.
    #[serde(default)]
    pub alpha_relative: bool,
    #[serde(default)]
    pub eps: Vec<f64>,
    /// Noisy runs scale the signal so its smallest block norm is this multiple
    /// of the guaranteed-recovery bound.
    #[serde(default = "default_factor")]
    pub magnitude_factor: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub tie_break: TieBreak,
    #[serde(default = "default_true")]
    pub certify: bool,
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default)]
    pub normalize_columns: bool,
    /// Lift the desk-scale caps `L <= 24`, `d <= 4`, `K <= 6`.
    #[serde(default)]
    pub allow_large: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

const MAX_L: usize = 24;
const MAX_D: usize = 4;
const MAX_K: usize = 6;

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.k.is_empty() || self.d.is_empty() {
            return bad("k and d grids must be non-empty".into());
        }
        if self.k.contains(&0) || self.d.contains(&0) {
            return bad("k and d values must be >= 1".into());
        }
        let fam = self.family;
        let need = |axis: &[f64], name: &str| -> Result<()> {
            if axis.is_empty() {
                return Err(Error::invalid(format!("{} needs a non-empty {name} grid", fam.name())));
            }
            Ok(())
        };
        match fam {
            ExperimentFamily::NrSweep => need(&self.t, "t")?,
            ExperimentFamily::SdnrSweep => {
                need(&self.t, "t")?;
                need(&self.alpha, "alpha")?;
            }
            ExperimentFamily::DecayingRecovery | ExperimentFamily::PartialRecovery => need(&self.alpha, "alpha")?,
            ExperimentFamily::NoisyRecovery => need(&self.eps, "eps")?,
            ExperimentFamily::GaussianRecovery => {}
        }
        if self.eps.iter().any(|&e| !(e >= 0.0)) {
            return bad("eps values must be >= 0".into());
        }
        if !(self.magnitude_factor >= 1.0) {
            return bad("magnitude_factor must be >= 1".into());
        }
        let kmax = *self.k.iter().max().expect("non-empty");
        let dmax = *self.d.iter().max().expect("non-empty");
        if !fam.is_sweep() {
            let (Some(l), Some(m)) = (self.l, self.m) else {
                return bad(format!("{} needs l and m", fam.name()));
            };
            if kmax > l {
                return bad(format!("K = {kmax} exceeds L = {l}"));
            }
            if m == 0 {
                return bad("m must be >= 1".into());
            }
            if (self.certify || self.delta_range.is_some()) && kmax + 1 > l {
                return bad(format!("certifying delta_(K+1) needs K + 1 <= L, got K = {kmax}, L = {l}"));
            }
            if !self.allow_large && l > MAX_L {
                return bad(format!("L = {l} above the cap {MAX_L}; set allow_large"));
            }
        }
        if self.alpha_relative && !self.certify && self.delta_range.is_none() {
            return bad("alpha_relative needs a certified delta".into());
        }
        if !self.allow_large && (kmax > MAX_K || dmax > MAX_D) {
            return bad(format!("K <= {MAX_K} and d <= {MAX_D} unless allow_large is set"));
        }
        Ok(())
    }

    fn cells(&self) -> Vec<Cell> {
        let opt = |v: &[f64], used: bool| -> Vec<Option<f64>> {
            if used && !v.is_empty() {
                v.iter().copied().map(Some).collect()
            } else {
                vec![None]
            }
        };
        let fam = self.family;
        let ts = opt(&self.t, fam.is_sweep());
        let alphas = opt(
            &self.alpha,
            !matches!(fam, ExperimentFamily::GaussianRecovery | ExperimentFamily::NrSweep),
        );
        let epss = opt(&self.eps, fam == ExperimentFamily::NoisyRecovery);
        let mut out = Vec::new();
        for &k in &self.k {
            for &d in &self.d {
                for &t in &ts {
                    for &alpha in &alphas {
                        for &eps in &epss {
                            out.push(Cell { k, d, t, alpha, eps });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    k: usize,
    d: usize,
    t: Option<f64>,
    alpha: Option<f64>,
    eps: Option<f64>,
}

/// Certificate state of one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Cert {
    NotRequested,
    Over,
    Delta(f64),
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    success: bool,
    residual: f64,
    support_errors: usize,
    cert: Cert,
    condition: Option<bool>,
    l: usize,
    m: usize,
}

/// One aggregated grid cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub family: ExperimentFamily,
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub m: usize,
    pub t_or_delta: Option<f64>,
    pub alpha: Option<f64>,
    pub eps: Option<f64>,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_residual: f64,
    pub mean_support_errors: f64,
    /// Largest certified `delta_{K+1}` over the trials.
    pub certified_delta: Option<f64>,
    /// Some trial exceeded the enumeration budget.
    pub uncertified: bool,
    /// Every trial met the applicable recovery condition; `None` when not
    /// evaluated.
    pub condition_satisfied: Option<bool>,
}

pub const CSV_COLUMNS: [&str; 13] = [
    "family",
    "K",
    "d",
    "L",
    "m",
    "t_or_delta",
    "alpha",
    "eps",
    "trials",
    "success_rate",
    "mean_residual",
    "certified_delta",
    "condition_satisfied",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl ExperimentRecord {
    fn csv_row(&self) -> [String; 13] {
        let cond = if self.uncertified {
            "uncertified".to_string()
        } else {
            self.condition_satisfied.map(|b| b.to_string()).unwrap_or_default()
        };
        [
            self.family.name().to_string(),
            self.k.to_string(),
            self.d.to_string(),
            self.l.to_string(),
            self.m.to_string(),
            fmt_opt(self.t_or_delta),
            fmt_opt(self.alpha),
            fmt_opt(self.eps),
            self.trials.to_string(),
            self.success_rate.to_string(),
            self.mean_residual.to_string(),
            fmt_opt(self.certified_delta),
            cond,
        ]
    }
}

pub fn write_records_csv<W: Write>(w: W, records: &[ExperimentRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_COLUMNS)?;
    for r in records {
        out.write_record(r.csv_row())?;
    }
    out.flush()?;
    Ok(())
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    run_experiment_with(cfg, Exec::default())
}

/// Runs every `(cell, trial)` pair, in parallel when `exec` allows, and
/// aggregates in cell-major order.
pub fn run_experiment_with(cfg: &ExperimentConfig, exec: Exec) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let cells = cfg.cells();
    let trials = cfg.trials;
    let outcomes = par::map_indexed(exec, cells.len() * trials, |idx| {
        let (c, t) = (idx / trials, idx % trials);
        run_trial(cfg, &cells[c], derive_seed(cfg.seed, c as u64, t as u64))
    });
    let mut outcomes = outcomes.into_iter();
    let mut records = Vec::with_capacity(cells.len());
    for cell in &cells {
        let batch = outcomes.by_ref().take(trials).collect::<Result<Vec<_>>>()?;
        records.push(aggregate(cfg, cell, &batch));
    }
    Ok(records)
}

fn aggregate(cfg: &ExperimentConfig, cell: &Cell, batch: &[Outcome]) -> ExperimentRecord {
    let n = batch.len();
    let successes = batch.iter().filter(|o| o.success).count();
    let uncertified = batch.iter().any(|o| o.cert == Cert::Over);
    let deltas: Vec<f64> = batch
        .iter()
        .filter_map(|o| match o.cert {
            Cert::Delta(d) => Some(d),
            _ => None,
        })
        .collect();
    let certified_delta = if uncertified || deltas.is_empty() {
        None
    } else {
        deltas.iter().copied().reduce(f64::max)
    };
    let condition_satisfied = if batch.iter().any(|o| o.condition.is_none()) {
        None
    } else {
        Some(batch.iter().all(|o| o.condition == Some(true)))
    };
    let t_or_delta = if cfg.family.is_sweep() {
        cell.t
    } else {
        cfg.delta_range.map(|r| r.1)
    };
    ExperimentRecord {
        family: cfg.family,
        k: cell.k,
        d: cell.d,
        l: batch[0].l,
        m: batch[0].m,
        t_or_delta,
        alpha: cell.alpha,
        eps: cell.eps,
        trials: n,
        successes,
        success_rate: successes as f64 / n as f64,
        mean_residual: batch.iter().map(|o| o.residual).sum::<f64>() / n as f64,
        mean_support_errors: batch.iter().map(|o| o.support_errors as f64).sum::<f64>() / n as f64,
        certified_delta,
        uncertified,
        condition_satisfied,
    }
}

fn support_errors(found: &BlockSupport, truth: &BlockSupport) -> usize {
    found.difference(truth).len() + truth.difference(found).len()
}

fn certify(a: &SensingMatrix, order: usize, budget: u64) -> Result<Cert> {
    match block_rip_constant_with(a, order, budget, Exec::Sequential) {
        Ok(r) => Ok(Cert::Delta(r.delta)),
        Err(Error::BudgetExceeded { .. }) => Ok(Cert::Over),
        Err(e) => Err(e),
    }
}

fn run_trial(cfg: &ExperimentConfig, cell: &Cell, seed: u64) -> Result<Outcome> {
    match cfg.family {
        ExperimentFamily::NrSweep => {
            let inst = build_nr(cell.k, cell.d, cell.t.expect("sweep cell has t"))?;
            sweep_trial(cfg, &inst, |delta| Some(check_general_sharp(cell.k, delta).satisfied))
        }
        ExperimentFamily::SdnrSweep => {
            let alpha = cell.alpha.expect("sdnr cell has alpha");
            let inst = build_sdnr(cell.k, cell.d, cell.t.expect("sweep cell has t"), alpha, 1.0)?;
            sweep_trial(cfg, &inst, |delta| {
                check_decaying(cell.k, delta, alpha).ok().map(|v| v.satisfied)
            })
        }
        _ => random_trial(cfg, cell, seed),
    }
}

fn sweep_trial(
    cfg: &ExperimentConfig,
    inst: &CounterexampleInstance,
    condition: impl Fn(f64) -> Option<bool>,
) -> Result<Outcome> {
    let k = inst.meta.k;
    let omega = inst.support();
    let res = bomp_run(&inst.matrix, &inst.measurements, StopRule::FixedIterations(k), cfg.tie_break)?;
    let cert = if cfg.certify {
        certify(&inst.matrix, k + 1, cfg.budget)?
    } else {
        Cert::NotRequested
    };
    let cond = match cert {
        Cert::Delta(d) => condition(d),
        _ => None,
    };
    Ok(Outcome {
        success: res.support == omega,
        residual: res.final_residual(),
        support_errors: support_errors(&res.support, &omega),
        cert,
        condition: cond,
        l: inst.matrix.shape().blocks(),
        m: inst.matrix.rows(),
    })
}

fn random_trial(cfg: &ExperimentConfig, cell: &Cell, seed: u64) -> Result<Outcome> {
    let (l, m) = (cfg.l.expect("validated"), cfg.m.expect("validated"));
    let k = cell.k;
    let shape = BlockShape::new(l, cell.d)?;
    let (seed_a, seed_x, seed_v) = (derive_seed(seed, 1, 0), derive_seed(seed, 2, 0), derive_seed(seed, 3, 0));

    let (a, cert) = match cfg.delta_range {
        Some(range) => {
            let c = gen_certified_matrix(m, shape, k + 1, range, seed_a, cfg.budget, Exec::Sequential)?;
            (c.matrix, Cert::Delta(c.report.delta))
        }
        None => {
            let a = gen_gaussian_matrix(m, shape, seed_a, cfg.normalize_columns)?;
            let cert = if cfg.certify {
                certify(&a, k + 1, cfg.budget)?
            } else {
                Cert::NotRequested
            };
            (a, cert)
        }
    };
    let delta = match cert {
        Cert::Delta(d) => Some(d),
        _ => None,
    };

    let alpha = match cell.alpha {
        Some(f) if cfg.alpha_relative => {
            let delta = delta.ok_or_else(|| Error::invalid("alpha_relative needs a certified delta"))?;
            Some(f * relative_base(cfg.family, k, delta)?)
        }
        other => other,
    };

    let profile = match (cfg.family, alpha) {
        (ExperimentFamily::GaussianRecovery, _) | (ExperimentFamily::NoisyRecovery, None) => Profile::Flat,
        (_, Some(a)) => Profile::Decaying(a),
        (_, None) => unreachable!("validated: family needs alpha"),
    };
    let mut x = gen_planted_signal(shape, k, &profile, seed_x)?;
    let omega = block_support(&x, tol::SUPPORT_TOL);

    let mut condition = None;
    let (y, stop, eps) = if cfg.family == ExperimentFamily::NoisyRecovery {
        let eps = cell.eps.expect("validated");
        if let Some(delta) = delta {
            let bound = match alpha {
                None => noise_min_magnitude_general(k, delta, eps).ok(),
                Some(al) => noise_min_magnitude_decaying(k, delta, al, eps).ok().map(|b| b.bound),
            };
            condition = Some(bound.is_some());
            if let Some(bound) = bound {
                let min_norm = x.block_norms().into_iter().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
                x = x.scaled(cfg.magnitude_factor * bound / min_norm);
            }
        }
        let v = gen_bounded_noise(m, eps, seed_v)?;
        (a.apply(&x)? + v, StopRule::residual(eps, &a), Some(eps))
    } else {
        if let Some(delta) = delta {
            condition = match (cfg.family, alpha) {
                (ExperimentFamily::GaussianRecovery, _) => Some(check_general_sharp(k, delta).satisfied),
                (ExperimentFamily::DecayingRecovery, Some(al)) => check_decaying(k, delta, al).ok().map(|v| v.satisfied),
                (ExperimentFamily::PartialRecovery, _) => Some(delta < SQRT2_2 && partial_recovery_prefix(&x, delta)?.prefix >= 1),
                _ => None,
            };
        }
        (a.apply(&x)?, StopRule::FixedIterations(k), None)
    };

    let res = bomp_run(&a, &y, stop, cfg.tie_break)?;
    let success = match cfg.family {
        ExperimentFamily::PartialRecovery => {
            let prefix = match delta {
                Some(d) if d < SQRT2_2 => partial_recovery_prefix(&x, d)?.prefix,
                _ => k,
            };
            res.picks.iter().take(prefix).all(|&p| omega.contains(p))
        }
        _ => {
            let exact = res.support == omega;
            match eps {
                Some(e) => exact && (res.estimate.values() - x.values()).norm() <= e,
                None => exact,
            }
        }
    };
    Ok(Outcome {
        success,
        residual: res.final_residual(),
        support_errors: support_errors(&res.support, &omega),
        cert,
        condition,
        l,
        m,
    })
}

/// Decay factor that `alpha_relative` multiplies: the smallest admissible
/// factor for recovery, or the largest partial-recovery ratio threshold.
fn relative_base(family: ExperimentFamily, k: usize, delta: f64) -> Result<f64> {
    match family {
        ExperimentFamily::PartialRecovery => {
            let mut best: f64 = 1.0;
            for j in 1..=k {
                best = best.max(partial_threshold(k, j, delta)?);
            }
            Ok(best)
        }
        _ => g_inverse(k, delta.powi(-2) - 1.0),
    }
}
