use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;
use talu_core::activations::ActivationKind;
use talu_core::gradcheck::{self, CheckResult};
use talu_core::models::build_model;
use talu_core::{with_precision, Precision};
use talu_cli::compare::{run_compare, Grid, Parallelism};
use talu_cli::config::RunConfig;
use talu_cli::{run_train, CliError, EXIT_CHECK_FAILED, EXIT_DIVERGED, EXIT_OK, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "talu", version, about = "Train and compare CNNs with TaLU and other activations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write runs/<name>/metrics.csv.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Exit with status 3 if training diverged.
        #[arg(long)]
        fail_on_diverge: bool,
    },
    /// Run an activation × BatchNorm × learning-rate grid and tabulate it.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Number of cells run concurrently, each in its own process.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check tape gradients against central finite differences.
    Gradcheck {
        /// Activation name, or `all` for every activation and layer suite.
        #[arg(default_value = "all")]
        target: String,
        /// Overrides every suite's tolerance.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the layer table and parameter totals of a model.
    Summary {
        #[command(flatten)]
        run: RunArgs,
    },
}

/// Settings shared by the run commands. Flags override `--config`, which
/// overrides `--preset`. Lists are comma-separated (only `compare` accepts
/// more than one activation or learning rate).
#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    leaky_slope: Option<f64>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    bn: bool,
    #[arg(long)]
    no_bn: bool,
    /// Weight of the old value in the BatchNorm running averages.
    #[arg(long)]
    bn_momentum: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Training images per class (0 = full split).
    #[arg(long)]
    subset: Option<usize>,
    /// Test images per class (0 = full split).
    #[arg(long)]
    test_subset: Option<usize>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Arithmetic of the matrix kernels: f64 or f32.
    #[arg(long)]
    precision: Option<Precision>,
    /// Runs are always single-threaded and seeded; accepted for explicitness.
    #[arg(long)]
    deterministic: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.preset {
            Some(p) => RunConfig::preset(p)?,
            None => RunConfig::default(),
        };
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let mut set = |k: &str, v: Option<String>| match v {
            Some(v) => cfg.set(k, &v),
            None => Ok(()),
        };
        set("name", self.name.clone())?;
        set("arch", self.arch.clone())?;
        set("dataset", self.dataset.clone())?;
        set("activation", self.activation.clone())?;
        set("leaky_slope", self.leaky_slope.map(|v| v.to_string()))?;
        set("lr", self.lr.clone())?;
        set("bn_momentum", self.bn_momentum.map(|v| v.to_string()))?;
        set("epochs", self.epochs.map(|v| v.to_string()))?;
        set("batch_size", self.batch_size.map(|v| v.to_string()))?;
        set("momentum", self.momentum.map(|v| v.to_string()))?;
        set("seed", self.seed.map(|v| v.to_string()))?;
        set("subset", self.subset.map(|v| v.to_string()))?;
        set("test_subset", self.test_subset.map(|v| v.to_string()))?;
        set("data_dir", self.data_dir.as_ref().map(|p| p.display().to_string()))?;
        set("out", self.out.as_ref().map(|p| p.display().to_string()))?;
        set("precision", self.precision.map(|p| p.to_string()))?;
        match (self.bn, self.no_bn) {
            (true, true) => return Err(CliError::Usage("--bn and --no-bn are exclusive".into())),
            (true, false) => cfg.bn = true,
            (false, true) => cfg.bn = false,
            (false, false) => {}
        }
        if self.deterministic {
            cfg.deterministic = true;
        }
        Ok(cfg)
    }

    /// Like [`RunArgs::resolve`] but reading `--activation` and `--lr` as lists.
    fn resolve_grid(&self) -> Result<Grid, CliError> {
        let single = RunArgs {
            activation: None,
            lr: None,
            bn: false,
            no_bn: false,
            ..self.clone()
        };
        let base = single.resolve()?;
        let activations = match &self.activation {
            Some(list) => split(list)
                .map(|s| s.parse::<ActivationKind>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Usage(e.to_string()))?,
            None => vec![base.activation],
        };
        let learning_rates = match &self.lr {
            Some(list) => split(list)
                .map(|s| s.parse::<f64>().map_err(|_| CliError::Usage(format!("invalid learning rate {s:?}"))))
                .collect::<Result<Vec<_>, _>>()?,
            None => vec![base.lr],
        };
        // neither or both flags: run both BatchNorm groups
        let batchnorm = match (self.bn, self.no_bn) {
            (true, false) => vec![true],
            (false, true) => vec![false],
            _ => vec![false, true],
        };
        Ok(Grid {
            base,
            activations,
            batchnorm,
            learning_rates,
        })
    }
}

fn split(list: &str) -> impl Iterator<Item = &str> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn cmd_train(run: &RunArgs, fail_on_diverge: bool) -> Result<i32, CliError> {
    let cfg = run.resolve()?;
    let outcome = run_train(&cfg)?;
    println!("{}", outcome.run_dir.join("metrics.csv").display());
    match outcome.report.diverged_at {
        Some(epoch) => {
            println!("diverged at epoch {epoch}");
            Ok(if fail_on_diverge { EXIT_DIVERGED } else { EXIT_OK })
        }
        None => Ok(EXIT_OK),
    }
}

fn cmd_compare(run: &RunArgs, jobs: usize) -> Result<i32, CliError> {
    let grid = run.resolve_grid()?;
    let parallelism = if jobs > 1 {
        let exe = std::env::current_exe().map_err(|e| CliError::io("current executable", e))?;
        Parallelism::Processes { exe, jobs }
    } else {
        Parallelism::Sequential
    };
    let results = run_compare(&grid, &parallelism)?;
    print!("{}", talu_cli::compare::render_markdown(&grid, &results));
    Ok(EXIT_OK)
}

fn cmd_gradcheck(target: &str, tol: Option<f64>, seed: u64) -> Result<i32, CliError> {
    let results: Vec<CheckResult> = with_precision(Precision::F64, || {
        if target.eq_ignore_ascii_case("all") {
            gradcheck::check_all(seed)
        } else {
            let kind: ActivationKind = target.parse()?;
            Ok(vec![gradcheck::check_activation(kind, gradcheck::DEFAULT_POINTS, seed)?])
        }
    })
    .map_err(|e| match e {
        talu_core::Error::Contract(msg) => CliError::Usage(msg),
        other => other.into(),
    })?;
    let mut failed = false;
    for r in results {
        let r = match tol {
            Some(t) => r.with_tolerance(t),
            None => r,
        };
        failed |= !r.passed();
        println!("{r}");
    }
    Ok(if failed { EXIT_CHECK_FAILED } else { EXIT_OK })
}

fn cmd_summary(run: &RunArgs) -> Result<i32, CliError> {
    let cfg = run.resolve()?;
    let model = build_model(&cfg.model_config())?;
    println!("{}", model.summary()?);
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { EXIT_OK as u8 });
        }
    };
    let result = match &cli.command {
        Command::Train { run, fail_on_diverge } => cmd_train(run, *fail_on_diverge),
        Command::Compare { run, jobs } => cmd_compare(run, *jobs),
        Command::Gradcheck { target, tol, seed } => cmd_gradcheck(target, *tol, *seed),
        Command::Summary { run } => cmd_summary(run),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
