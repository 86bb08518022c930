//! `wirtinger` command-line tool.
//!
//! Human-readable text goes to stdout; `--out FILE` additionally writes a
//! JSON report. Exit codes: 0 success, 1 check or demo failure (or a
//! numerical failure), 2 parse error, 3 shape / declaration / invalid
//! problem, 4 infeasible problem, 5 solver did not converge.

/// `println!` that tolerates a closed stdout (e.g. piping into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

mod commands;
mod demo;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use wirtinger::Error;

#[derive(Parser)]
#[command(name = "wirtinger", version, about = "Symbolic Wirtinger derivatives of matrix expressions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Declarations, from a file and/or inline.
#[derive(clap::Args, Clone)]
pub struct DeclArgs {
    /// Declaration file: one `name dim structure [const]` per line.
    #[arg(long)]
    pub decls: Option<PathBuf>,
    /// Inline declaration line, e.g. `--decl "Z 3 hermitian"`; repeatable.
    #[arg(long = "decl")]
    pub decl: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Print dF/dZ and dF/dZ* for a scalar expression.
    Derive {
        expr: String,
        #[command(flatten)]
        decls: DeclArgs,
        #[arg(long)]
        var: String,
        /// Apply the corrections for the variable's declared structure.
        #[arg(long)]
        structure_aware: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a scalar expression with matrices bound from files.
    Eval {
        expr: String,
        #[command(flatten)]
        decls: DeclArgs,
        /// `NAME=FILE` matrix binding; repeatable.
        #[arg(long = "bind")]
        bind: Vec<String>,
        /// `NAME=VALUE` real parameter; repeatable.
        #[arg(long = "param")]
        param: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare symbolic derivatives against finite differences.
    Check {
        expr: String,
        #[command(flatten)]
        decls: DeclArgs,
        #[arg(long)]
        var: String,
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a problem file.
    Optimize {
        problem: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
        method: MethodArg,
        #[arg(long, default_value_t = 1e-7)]
        gtol: f64,
        #[arg(long, default_value_t = 1e-8)]
        ctol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the closed-form vs iterative comparison on the built-in examples.
    Demo {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Closed form when the file names one, iterative otherwise.
    Auto,
    Closed,
    Iterative,
}

/// Command failure carrying its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Syntax { .. } => 2,
            Error::Undeclared(_)
            | Error::Shape(_)
            | Error::Unsupported(_)
            | Error::Unbound { .. }
            | Error::StructureViolation { .. }
            | Error::InvalidProblem(_)
            | Error::Input(_) => 3,
            Error::Infeasible(_) => 4,
            Error::Singular { .. } | Error::Domain(_) | Error::NonFinite(_) => 1,
        };
        Failure { code, msg: e.to_string() }
    }
}

impl Failure {
    pub fn new(code: u8, msg: impl Into<String>) -> Self {
        Self { code, msg: msg.into() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Derive { expr, decls, var, structure_aware, out } => {
            commands::derive(&expr, &decls, &var, structure_aware, out.as_deref())
        }
        Command::Eval { expr, decls, bind, param, out } => commands::eval(&expr, &decls, &bind, &param, out.as_deref()),
        Command::Check { expr, decls, var, points, seed, h, tol, out } => {
            commands::check(&expr, &decls, &var, points, seed, h, tol, out.as_deref())
        }
        Command::Optimize { problem, method, gtol, ctol, seed, out } => {
            commands::optimize(&problem, method, gtol, ctol, seed, out.as_deref())
        }
        Command::Demo { seed, out } => demo::run(seed, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
