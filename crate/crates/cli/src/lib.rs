//! The `cubesig` command line: compute, compare, kernel and verify.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use cubesig_core::engine::{signature_budgeted, DEFAULT_BUDGET};
use cubesig_core::map::{lifted_field, metric_mu, MetricKind};
use cubesig_core::tensor::{inner_product, normalize};
use cubesig_core::verify::{self, Hooks, VerifyConfig};
use cubesig_core::{jacobian_field, Error, GradedTensor, GridMap, NormalizationConfig, Quadrature};

/// The committed verification table.
pub const DEFAULT_VERIFY_CONFIG: &str = include_str!("../config/verify.toml");

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;
pub const EXIT_VERIFY_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cubesig", version, about = "Mapping space signatures of gridded maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Signature of one GridMap file.
    Compute {
        input: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Use the parametrized signature of s -> (s, x(s)).
        #[arg(long)]
        parametrized: bool,
    },
    /// Jacobian metrics and parametrized-signature distance of two maps.
    Compare {
        first: PathBuf,
        second: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Gram matrix of normalized parametrized signatures over a directory of maps.
    Kernel {
        dir: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Runs the identity-verification suite.
    Verify {
        /// Sizes and tolerances; defaults to the committed table.
        #[arg(long)]
        tolerances: Option<PathBuf>,
        /// Overrides the table's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QuadratureArg {
    /// Strictly ordered cells (default).
    Grid,
    /// Exact integral of the piecewise-constant field.
    Exact,
    /// Monte-Carlo with sorted uniforms.
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Truncation level M.
    #[arg(long, default_value_t = 2)]
    pub level: usize,
    #[arg(long, value_enum, default_value_t = QuadratureArg::Grid)]
    pub quadrature: QuadratureArg,
    #[arg(long, default_value_t = 100_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Graded normalization cap C.
    #[arg(long)]
    pub normalize: Option<f64>,
    /// Refuse runs needing more coefficients than this.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn quadrature(&self) -> Result<Quadrature, CliError> {
        let q = match self.quadrature {
            QuadratureArg::Grid => Quadrature::StrictGrid,
            QuadratureArg::Exact => Quadrature::CellExact,
            QuadratureArg::Mc => Quadrature::MonteCarlo {
                samples: self.mc_samples,
                seed: self.seed,
            },
        };
        q.validate()?;
        Ok(q)
    }

    fn normalization(&self) -> Result<Option<NormalizationConfig>, CliError> {
        match self.normalize {
            None => Ok(None),
            Some(c) if c > 0.0 && c.is_finite() => Ok(Some(NormalizationConfig::with_cap(c))),
            Some(c) => Err(CliError::Invalid(format!("--normalize must be positive, got {c}"))),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] Error),
    /// The suite ran but some entries failed; the report is still written.
    #[error("verification failed: {failed}")]
    VerifyFailed { failed: String, report: Output },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::BudgetExceeded { .. }) => EXIT_BUDGET,
            CliError::VerifyFailed { .. } => EXIT_VERIFY_FAILED,
            _ => EXIT_INVALID,
        }
    }
}

/// Finished output, written once at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub text: String,
    pub path: Option<PathBuf>,
}

pub fn read_map(path: &Path) -> Result<GridMap, CliError> {
    let raw = fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&raw)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    GridMap::from_json(&value)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

pub fn load_verify_config(path: Option<&Path>) -> Result<VerifyConfig, CliError> {
    let (raw, origin) = match path {
        Some(p) => (
            fs::read_to_string(p).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?,
            p.display().to_string(),
        ),
        None => (DEFAULT_VERIFY_CONFIG.to_string(), "built-in table".to_string()),
    };
    toml::from_str(&raw).map_err(|e| CliError::Invalid(format!("{origin}: {e}")))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// Runs one command to completion, returning what should be written.
pub fn run(cli: &Cli) -> Result<Output, CliError> {
    match &cli.command {
        Command::Compute {
            input,
            run,
            parametrized,
        } => run_compute(input, run, *parametrized),
        Command::Compare { first, second, run } => run_compare(first, second, run),
        Command::Kernel { dir, run } => run_kernel(dir, run),
        Command::Verify {
            tolerances,
            seed,
            out,
        } => run_verify(tolerances.as_deref(), *seed, out.clone(), &Hooks::default()),
    }
}

pub fn run_compute(input: &Path, run: &RunArgs, parametrized: bool) -> Result<Output, CliError> {
    let quad = run.quadrature()?;
    let norm = run.normalization()?;
    let x = read_map(input)?;
    let field = if parametrized {
        lifted_field(&x)?
    } else {
        jacobian_field(&x)?
    };
    let sig = signature_budgeted(&field, run.level, &quad, run.budget)?;
    let (sig, lambda) = match &norm {
        Some(cfg) => normalize(&sig, cfg)?,
        None => (sig, 1.0),
    };
    let meta = json!({
        "d": x.d(),
        "n": x.n(),
        "level": run.level,
        "parametrized": parametrized,
        "quadrature": quad.name(),
        "mc_samples": matches!(quad, Quadrature::MonteCarlo { .. }).then_some(run.mc_samples),
        "seed": run.seed,
        "normalize": run.normalize,
        "lambda": lambda,
    });
    let text = match run.format {
        Format::Json => pretty(&json!({ "metadata": meta, "signature": sig.to_json() })),
        Format::Csv => {
            let mut s = String::new();
            let obj = meta.as_object().expect("object literal");
            for (k, v) in obj {
                writeln!(s, "# {k}={v}").expect("string write");
            }
            s.push_str(&sig.to_csv());
            s
        }
    };
    Ok(Output {
        text,
        path: run.out.clone(),
    })
}

fn parametrized(x: &GridMap, run: &RunArgs, quad: &Quadrature) -> Result<GradedTensor, CliError> {
    Ok(signature_budgeted(&lifted_field(x)?, run.level, quad, run.budget)?)
}

pub fn run_compare(first: &Path, second: &Path, run: &RunArgs) -> Result<Output, CliError> {
    let quad = run.quadrature()?;
    let x = read_map(first)?;
    let y = read_map(second)?;
    let mu1 = metric_mu(&x, &y, MetricKind::One)?;
    let mu_inf = metric_mu(&x, &y, MetricKind::Inf)?;
    let dist = parametrized(&x, run, &quad)?
        .sub(&parametrized(&y, run, &quad)?)
        .norm();
    let report = json!({
        "level": run.level,
        "quadrature": quad.name(),
        "seed": run.seed,
        "mu_1": mu1,
        "mu_inf": mu_inf,
        "signature_distance": dist,
    });
    let text = match run.format {
        Format::Json => pretty(&report),
        Format::Csv => format!("mu_1,mu_inf,signature_distance\n{mu1:e},{mu_inf:e},{dist:e}\n"),
    };
    Ok(Output {
        text,
        path: run.out.clone(),
    })
}

pub fn run_kernel(dir: &Path, run: &RunArgs) -> Result<Output, CliError> {
    let quad = run.quadrature()?;
    let cfg = run.normalization()?.unwrap_or_default();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Invalid(format!("{}: no .json maps found", dir.display())));
    }
    let mut maps = Vec::new();
    let mut bad = Vec::new();
    for f in &files {
        match read_map(f) {
            Ok(m) => maps.push(m),
            Err(e) => bad.push(e.to_string()),
        }
    }
    if !bad.is_empty() {
        return Err(CliError::Invalid(format!("invalid inputs:\n  {}", bad.join("\n  "))));
    }
    let mut features = Vec::new();
    for x in &maps {
        features.push(normalize(&parametrized(x, run, &quad)?, &cfg)?.0);
    }
    let k = features.len();
    let mut gram = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let v = inner_product(&features[i], &features[j]);
            gram[i][j] = v;
            gram[j][i] = v;
        }
    }
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let text = match run.format {
        Format::Json => pretty(&json!({
            "level": run.level,
            "quadrature": quad.name(),
            "seed": run.seed,
            "cap": cfg.cap,
            "files": names,
            "gram": gram,
        })),
        Format::Csv => {
            let mut s = format!("file,{}\n", names.join(","));
            for (name, row) in names.iter().zip(&gram) {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                writeln!(s, "{name},{}", cells.join(",")).expect("string write");
            }
            s
        }
    };
    Ok(Output {
        text,
        path: run.out.clone(),
    })
}

/// Runs the suite. A failing suite still yields its report, carried in the
/// error so the caller can write it before exiting.
pub fn run_verify(
    tolerances: Option<&Path>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    hooks: &Hooks,
) -> Result<Output, CliError> {
    let mut cfg = load_verify_config(tolerances)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = verify::run(&cfg, hooks)?;
    let output = Output {
        text: pretty(&report.to_json()),
        path: out,
    };
    if report.all_pass() {
        Ok(output)
    } else {
        let failed: Vec<&str> = report
            .entries
            .iter()
            .filter(|e| !e.pass)
            .map(|e| e.name.as_str())
            .collect();
        Err(CliError::VerifyFailed {
            failed: failed.join(", "),
            report: output,
        })
    }
}
