mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Compactness diagnostics for sampled kernels, functions and semigroups.
#[derive(Debug, Parser)]
#[command(name = "mcx", version)]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrientationArg {
    Rows,
    Cols,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GalleryName {
    Remark2,
    Indicator,
    SinInv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Covering-number profile of a kernel spec (CSV).
    Covering {
        spec: PathBuf,
        /// Radii, strictly decreasing.
        #[arg(long, value_delimiter = ',', default_value = "0.1")]
        eps: Vec<f64>,
        /// Grid sizes of the refinement levels; without them the spec is
        /// profiled as a single level.
        #[arg(long, value_delimiter = ',')]
        levels: Vec<usize>,
        #[arg(long, value_enum, default_value_t = OrientationArg::Both)]
        orientation: OrientationArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Iterated limits along row and column sequences (JSON).
    DoubleLimit {
        spec: PathBuf,
        /// Row positions, e.g. `0,2,5..9`; default all rows in order.
        #[arg(long)]
        rows: Option<String>,
        /// Column positions; default all columns in order.
        #[arg(long)]
        cols: Option<String>,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Upper and lower envelopes of a function spec at target points (CSV).
    Envelope {
        spec: PathBuf,
        /// Targets such as `0.5`, `1/3`.
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<String>,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extend a dyadically sampled semigroup to other times (JSON).
    ExtendSemigroup {
        spec: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1/3,1/6,1/7")]
        times: Vec<String>,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Pairs checked for the semigroup identity after extension.
        #[arg(long, default_value_t = 20)]
        verify_pairs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Covering profile of the translation kernel f(x + y) over growing
    /// windows (CSV).
    Ap {
        /// Function of `x`.
        function: String,
        #[arg(long, default_value = "real")]
        group: String,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
        windows: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.5")]
        eps: Vec<f64>,
        /// Sample points per unit length.
        #[arg(long, default_value_t = 8.0)]
        density: f64,
        /// Also profile the three groupings of f(x + y + z) at this density.
        #[arg(long)]
        triple_density: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a named fixture's spec files and expected results.
    Gallery {
        #[arg(long, value_enum)]
        name: GalleryName,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        /// Directory for the files; without it one JSON bundle is printed.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

/// A failure with its exit code: 2 for bad input, 3 for numerical or
/// invariant failures.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<matrix_compactness::Error> for Failure {
    fn from(e: matrix_compactness::Error) -> Self {
        if e.is_input_error() {
            Failure::input(e.to_string())
        } else {
            Failure::numerical(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli.seed;
    let result = match cli.command {
        Command::Covering {
            spec,
            eps,
            levels,
            orientation,
            out,
        } => commands::covering(&spec, &eps, &levels, orientation).and_then(|s| commands::emit(&s, out.as_deref())),
        Command::DoubleLimit {
            spec,
            rows,
            cols,
            tol,
            out,
        } => commands::double_limit(&spec, rows.as_deref(), cols.as_deref(), tol)
            .and_then(|s| commands::emit(&s, out.as_deref())),
        Command::Envelope { spec, targets, tol, out } => {
            commands::envelope(&spec, &targets, tol).and_then(|s| commands::emit(&s, out.as_deref()))
        }
        Command::ExtendSemigroup {
            spec,
            times,
            tol,
            verify_pairs,
            out,
        } => commands::extend_semigroup(&spec, &times, tol, verify_pairs, seed)
            .and_then(|s| commands::emit(&s, out.as_deref())),
        Command::Ap {
            function,
            group,
            windows,
            eps,
            density,
            triple_density,
            out,
        } => commands::ap(&function, &group, &windows, &eps, density, triple_density)
            .and_then(|s| commands::emit(&s, out.as_deref())),
        Command::Gallery { name, dim, out_dir } => commands::gallery(name, dim, out_dir.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("mcx: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
