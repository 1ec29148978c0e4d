use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use bsr::bomp::{bomp_run_with, BompOptions};
use bsr::conditions::{
    check_decaying, check_general_sharp, g, g_inverse, noise_min_magnitude_decaying, noise_min_magnitude_general,
    partial_recovery_prefix,
};
use bsr::counterexample::{build_boundary, build_nr, build_sdnr, verify_failure, Family};
use bsr::harness::{run_experiment, write_records_csv, ExperimentConfig};
use bsr::io::{load_instance, read_json, write_json, InstanceDoc};
use bsr::{block_rip_constant, BlockShape, Error, Result, StopRule, TieBreak};

#[derive(Parser)]
#[command(name = "bsr", version, about = "Block-sparse recovery with BOMP")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the pursuit on an instance.
    Bomp(BompArgs),
    /// Exact block-RIP constant of an instance matrix.
    Rip(RipArgs),
    /// Recovery-condition calculus.
    #[command(subcommand)]
    Cond(CondCmd),
    /// Build or check adversarial instances.
    #[command(subcommand)]
    Counterexample(CexCmd),
    /// Seeded Monte-Carlo experiment grid.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct InstanceArgs {
    /// Instance JSON, or a headerless CSV matrix.
    #[arg(long)]
    instance: PathBuf,
    /// Block count for CSV matrices without a sidecar.
    #[arg(long, requires = "block_size")]
    blocks: Option<usize>,
    #[arg(long, requires = "blocks")]
    block_size: Option<usize>,
}

impl InstanceArgs {
    fn load(&self) -> Result<bsr::io::Instance> {
        let shape = match (self.blocks, self.block_size) {
            (Some(l), Some(d)) => Some(BlockShape::new(l, d)?),
            _ => None,
        };
        load_instance(&self.instance, shape)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TieArg {
    Lowest,
    Highest,
}

impl From<TieArg> for TieBreak {
    fn from(t: TieArg) -> Self {
        match t {
            TieArg::Lowest => TieBreak::Lowest,
            TieArg::Highest => TieBreak::Highest,
        }
    }
}

#[derive(Args)]
struct BompArgs {
    #[command(flatten)]
    inst: InstanceArgs,
    /// Run exactly K iterations.
    #[arg(long, conflicts_with = "eps")]
    k: Option<usize>,
    /// Stop once the residual norm is at most E.
    #[arg(long)]
    eps: Option<f64>,
    /// Iteration cap for the residual rule.
    #[arg(long, requires = "eps")]
    max_iter: Option<usize>,
    #[arg(long, value_enum, default_value = "lowest")]
    tie_break: TieArg,
    /// Record per-iteration block correlations.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RipArgs {
    #[command(flatten)]
    inst: InstanceArgs,
    #[arg(long)]
    order: usize,
    #[arg(long, default_value_t = bsr::tol::DEFAULT_RIP_BUDGET)]
    budget: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CondCmd {
    /// g_i(t).
    G {
        #[arg(long)]
        i: usize,
        #[arg(long)]
        t: f64,
    },
    /// g_K^{-1}(s).
    GInverse {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        s: f64,
    },
    CheckGeneral {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        delta: f64,
    },
    CheckDecaying {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        alpha: f64,
    },
    /// Smallest block norm with guaranteed noisy recovery.
    NoiseBound {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        eps: f64,
    },
    /// Guaranteed leading picks for the instance signal.
    Partial {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        delta: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundaryArg {
    Sdnr2,
    Sdnrp,
}

#[derive(Subcommand)]
enum CexCmd {
    Nr {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Sdnr {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        a1: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Boundary {
        #[arg(long, value_enum)]
        family: BoundaryArg,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Verify {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// CSV destination; defaults to the config's output, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value)?;
            writeln!(stdout)?;
            Ok(())
        }
    }
}

fn line<T: Serialize>(value: &T) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer(&mut stdout, value)?;
    writeln!(stdout)?;
    Ok(())
}

#[derive(Serialize)]
struct Scalar {
    value: f64,
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Bomp(a) => {
            let inst = a.inst.load()?;
            let y = inst.measurements()?;
            let stop = match (a.k, a.eps.or(inst.eps)) {
                (Some(k), _) => StopRule::FixedIterations(k),
                (None, Some(eps)) => match a.max_iter {
                    Some(max_iter) => StopRule::ResidualNorm { eps, max_iter },
                    None => StopRule::residual(eps, &inst.matrix),
                },
                (None, None) => return Err(Error::invalid("pass --k or --eps (or put eps in the instance)")),
            };
            let opts = BompOptions {
                tie_break: a.tie_break.into(),
                trace_correlations: a.trace,
            };
            let res = bomp_run_with(&inst.matrix, &y, stop, opts)?;
            emit(a.out.as_deref(), &res)
        }
        Cmd::Rip(a) => {
            let inst = a.inst.load()?;
            let rep = block_rip_constant(&inst.matrix, a.order, a.budget)?;
            emit(a.out.as_deref(), &rep)
        }
        Cmd::Cond(c) => match c {
            CondCmd::G { i, t } => line(&Scalar { value: g(i, t)? }),
            CondCmd::GInverse { k, s } => line(&Scalar { value: g_inverse(k, s)? }),
            CondCmd::CheckGeneral { k, delta } => line(&check_general_sharp(k, delta)),
            CondCmd::CheckDecaying { k, delta, alpha } => line(&check_decaying(k, delta, alpha)?),
            CondCmd::NoiseBound { k, delta, alpha, eps } => match alpha {
                None => line(&Scalar {
                    value: noise_min_magnitude_general(k, delta, eps)?,
                }),
                Some(alpha) => line(&noise_min_magnitude_decaying(k, delta, alpha, eps)?),
            },
            CondCmd::Partial { inst, delta } => {
                let inst = inst.load()?;
                let x = inst.x.ok_or_else(|| Error::invalid("instance has no signal x"))?;
                line(&partial_recovery_prefix(&x, delta)?)
            }
        },
        Cmd::Counterexample(c) => match c {
            CexCmd::Nr { k, d, t, out } => emit(out.as_deref(), &InstanceDoc::from(&build_nr(k, d, t)?)),
            CexCmd::Sdnr { k, d, t, alpha, a1, out } => {
                emit(out.as_deref(), &InstanceDoc::from(&build_sdnr(k, d, t, alpha, a1)?))
            }
            CexCmd::Boundary { family, k, d, out } => {
                let fam = match family {
                    BoundaryArg::Sdnr2 => Family::Sdnr2,
                    BoundaryArg::Sdnrp => Family::Sdnrp,
                };
                emit(out.as_deref(), &InstanceDoc::from(&build_boundary(k, d, fam)?))
            }
            CexCmd::Verify { inst, out } => {
                let inst = inst.load()?;
                let x = inst.x.ok_or_else(|| Error::invalid("instance has no signal x"))?;
                emit(out.as_deref(), &verify_failure(&inst.matrix, &x)?)
            }
        },
        Cmd::Experiment(a) => {
            let mut cfg: ExperimentConfig = read_json(&a.config)?;
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            let records = run_experiment(&cfg)?;
            match a.out.or(cfg.output) {
                Some(p) => write_records_csv(std::fs::File::create(p)?, &records),
                None => write_records_csv(std::io::stdout().lock(), &records),
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bsr: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
