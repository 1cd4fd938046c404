use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cowseg::losses::LossConfig;
use cowseg::scheme::{default_cow_adjacency, load_adjacency, load_scheme};
use cowseg::{AdjacencyMatrix, ClassScheme};

mod commands;
mod stats;

/// Topology-aware losses, metrics and phantoms for multiclass vessel
/// segmentation.
#[derive(Parser, Debug)]
#[command(name = "cowseg", version)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Shared {
    /// Class scheme JSON; the built-in 21-class Circle of Willis scheme when absent.
    #[arg(long, global = true)]
    scheme: Option<PathBuf>,
    /// Adjacency JSON (`pairs` or `matrix`); the built-in prior when absent.
    #[arg(long, global = true)]
    adjacency: Option<PathBuf>,
    /// Loss configuration JSON.
    #[arg(long = "loss-config", global = true)]
    loss_config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score prediction volumes against ground truth, paired by file stem.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Per-(case, class) CSV.
        #[arg(long)]
        out: PathBuf,
        /// Per-size-group summary CSV.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Minimum predicted voxels counted as a hallucinated absent artery.
        #[arg(long = "fpr-threshold", default_value_t = 1)]
        fpr_threshold: usize,
        /// Worker threads (defaults to the number of cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Evaluate the composite loss; prints the per-term breakdown as JSON.
    Loss {
        /// Probabilities (4D float) or labels.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Write the gradient of the total as a float volume.
        #[arg(long)]
        grad: Option<PathBuf>,
    },
    /// Finite-difference check of every loss gradient on random input.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        size: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 256)]
        samples: usize,
    },
    /// Generate a synthetic label volume.
    Phantom {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
        /// Delete an artery, e.g. `no-pcom-left` or `no-acom` (repeatable).
        #[arg(long)]
        variant: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        radius: usize,
        /// Isotropic voxel size in mm.
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
    },
    /// Apply a controlled error to one class of a label volume.
    Perturb {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Class name.
        #[arg(long)]
        class: String,
        #[arg(long, value_enum)]
        op: PerturbOp,
        /// Slab width for `break`.
        #[arg(long, default_value_t = 1)]
        width: usize,
        /// Voxels flipped by `jitter`/`shrink`.
        #[arg(long, default_value_t = 20)]
        voxels: usize,
        /// Class the `swap` relabels to.
        #[arg(long)]
        to: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mean diameter per class.
    Diameters {
        #[arg(long)]
        seg: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reliability and group statistics on CSV tables.
    Stats {
        #[arg(value_enum)]
        test: StatsTest,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PerturbOp {
    /// Cut the class at its centerline midpoint.
    Break,
    /// Move boundary voxels in and out, keeping the component count.
    Jitter,
    /// Remove boundary voxels, keeping the component count.
    Shrink,
    /// Relabel the whole class as `--to`.
    Swap,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum StatsTest {
    /// Rows are subjects, numeric columns are repeated scans.
    Icc,
    /// Long format with `group,value`; exactly two groups.
    Permtest,
    /// Column `p`, optional `name`.
    Fdr,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad input or arguments; exit 1.
    Validation(String),
    /// A check the tool itself guarantees failed; exit 2.
    Invariant(String),
}

impl From<cowseg::Error> for CliError {
    fn from(e: cowseg::Error) -> Self {
        match e {
            cowseg::Error::Invariant(m) => CliError::Invariant(m),
            other => CliError::Validation(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub struct Context {
    pub scheme: ClassScheme,
    adjacency_path: Option<PathBuf>,
    loss_config_path: Option<PathBuf>,
}

impl Context {
    fn new(shared: Shared) -> CliResult<Self> {
        let scheme = match &shared.scheme {
            Some(p) => load_scheme(p)?,
            None => ClassScheme::circle_of_willis(),
        };
        Ok(Self {
            scheme,
            adjacency_path: shared.adjacency,
            loss_config_path: shared.loss_config,
        })
    }

    pub fn adjacency(&self) -> CliResult<AdjacencyMatrix> {
        Ok(match &self.adjacency_path {
            Some(p) => load_adjacency(p, &self.scheme)?,
            None => default_cow_adjacency(&self.scheme)?,
        })
    }

    pub fn loss_config(&self) -> CliResult<LossConfig> {
        Ok(match &self.loss_config_path {
            Some(p) => LossConfig::load(p)?,
            None => LossConfig::default(),
        })
    }
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Validation(format!("writing {}: {e}", path.display())))
}

fn run(cli: Cli) -> CliResult<()> {
    let ctx = Context::new(cli.shared)?;
    match cli.command {
        Command::Metrics {
            pred,
            gt,
            out,
            summary,
            json,
            fpr_threshold,
            jobs,
        } => commands::metrics(
            &ctx,
            &commands::MetricsArgs {
                pred_dir: pred,
                gt_dir: gt,
                out,
                summary,
                json,
                fpr_threshold,
                jobs,
            },
        ),
        Command::Loss { pred, gt, grad } => commands::loss(&ctx, &pred, &gt, grad.as_deref()),
        Command::Gradcheck {
            seed,
            size,
            classes,
            samples,
        } => commands::gradcheck(seed, size, classes, samples),
        Command::Phantom {
            kind,
            out,
            variant,
            seed,
            radius,
            spacing,
        } => commands::phantom(&ctx, &kind, &out, &variant, seed, radius, spacing),
        Command::Perturb {
            input,
            out,
            class,
            op,
            width,
            voxels,
            to,
            seed,
        } => {
            let op = match op {
                PerturbOp::Break => commands::Perturbation::Break { width },
                PerturbOp::Jitter => commands::Perturbation::Jitter {
                    voxels,
                    seed,
                    shrink: false,
                },
                PerturbOp::Shrink => commands::Perturbation::Jitter {
                    voxels,
                    seed,
                    shrink: true,
                },
                PerturbOp::Swap => commands::Perturbation::Swap {
                    to: to.ok_or_else(|| CliError::Validation("swap needs --to".into()))?,
                },
            };
            commands::perturb(&ctx, &input, &out, &class, op)
        }
        Command::Diameters { seg, out } => commands::diameters(&ctx, &seg, &out),
        Command::Stats {
            test,
            input,
            out,
            iterations,
            seed,
        } => match test {
            StatsTest::Icc => stats::icc(&input, &out),
            StatsTest::Permtest => stats::permtest(&input, &out, iterations, seed),
            StatsTest::Fdr => stats::fdr(&input, &out),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Invariant(m)) => {
            eprintln!("invariant violated: {m}");
            ExitCode::from(2)
        }
    }
}
