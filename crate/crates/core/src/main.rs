use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use prefelicit::dataset::{load_csv, DatasetConfig};
use prefelicit::experiments::{
    median_ratio, run_gradient_variance_study, run_inference_study, run_policy_study, write_csv, GradientVariancePlan,
    InferencePlan, PolicyPlan, RunManifest,
};
use prefelicit::inference::{fit_posterior, DirichletParams, Estimator, Evidence, OptimizerConfig, PosteriorExport};
use prefelicit::model::{Design, PreferenceSet, PreferenceStatement};
use prefelicit::server::{serve, ServerConfig};
use prefelicit::{Error, Result};

#[derive(Parser)]
#[command(name = "prefelicit", version, about = "Bayesian preference elicitation engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StudyArgs {
    /// JSON plan; omitted fields take their defaults.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Use the full-size plan instead of the quick default.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Accuracy of posterior inference against synthetic ground truth.
    InferStudy(StudyArgs),
    /// Uncertainty reduction of questioning policies with simulated answers.
    PolicyStudy(StudyArgs),
    /// Per-coordinate variance of the two gradient estimators.
    Gradvar(StudyArgs),
    /// Fits a posterior to a CSV table and a list of preferences.
    Fit {
        #[arg(long)]
        table: PathBuf,
        /// Optional JSON sidecar with criterion directions and scales.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Preferences as `better>worse` alternative ids, comma separated.
        #[arg(long, value_delimiter = ',')]
        prefer: Vec<String>,
        #[arg(long, default_value = "rt")]
        estimator: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Runs the session HTTP service. Flags override the PREFELICIT_BIND,
    /// PREFELICIT_DATA_DIR, PREFELICIT_SEED and PREFELICIT_CORS_ORIGIN
    /// environment variables.
    Serve {
        #[arg(long)]
        bind: Option<std::net::SocketAddr>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        cors_origin: Option<String>,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn load_plan<P: DeserializeOwned>(args: &StudyArgs, default: P, full: P) -> Result<P> {
    match &args.plan {
        Some(path) => Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?),
        None if args.full => Ok(full),
        None => Ok(default),
    }
}

fn finish<P: Serialize, R: Serialize>(
    args: &StudyArgs,
    study: &str,
    plan: &P,
    seed: u64,
    records: &[R],
    errors: usize,
) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let csv = args.out.join(format!("{study}.csv"));
    write_csv(records, &csv)?;
    RunManifest::new(study, plan, seed, args.workers, records.len(), errors)
        .write(args.out.join(format!("{study}.manifest.json")))?;
    println!("wrote {} records to {}", records.len(), csv.display());
    if errors > 0 {
        eprintln!("{errors} records carry errors");
    }
    Ok(())
}

fn parse_preference(s: &str, table: &prefelicit::model::PerformanceTable) -> Result<PreferenceStatement> {
    let (a, b) = s
        .split_once('>')
        .ok_or_else(|| Error::InvalidInput(format!("`{s}` is not of the form better>worse")))?;
    let idx = |id: &str| {
        table
            .index_of(id.trim())
            .ok_or_else(|| Error::InvalidInput(format!("unknown alternative `{}`", id.trim())))
    };
    PreferenceStatement::new(idx(a)?, idx(b)?)
}

fn fit_command(table: &Path, dataset: Option<&Path>, prefer: &[String], estimator: &str, seed: u64) -> Result<()> {
    let cfg = match dataset {
        Some(p) => DatasetConfig::from_path(p)?,
        None => DatasetConfig::default(),
    };
    let table = load_csv(table, &cfg)?;
    let estimator: Estimator = serde_json::from_value(serde_json::Value::String(estimator.to_owned()))?;
    let q = PreferenceSet::from_statements(
        prefer
            .iter()
            .filter(|s| !s.trim().is_empty())
            .map(|s| parse_preference(s, &table))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let design = Design::new(&table);
    let alpha = DirichletParams::uniform(design.dimension());
    let config = OptimizerConfig::default().with_seed(seed);
    let fit = fit_posterior(&Evidence::new(&design, &q)?, &alpha, &config, estimator, None)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&PosteriorExport::new(&fit, &alpha, &config))?
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::InferStudy(args) => {
            let mut plan = load_plan(&args, InferencePlan::default(), InferencePlan::full())?;
            if let Some(s) = args.seed {
                plan.base_seed = s;
            }
            let records = run_inference_study(&plan, args.workers)?;
            let errors = records.iter().filter(|r| !r.error.is_empty()).count();
            finish(&args, "inference", &plan, plan.base_seed, &records, errors)
        }
        Command::PolicyStudy(args) => {
            let mut plan = load_plan(&args, PolicyPlan::default(), PolicyPlan::full())?;
            if let Some(s) = args.seed {
                plan.base_seed = s;
            }
            let records = run_policy_study(&plan, args.workers)?;
            let errors = records.iter().filter(|r| !r.error.is_empty()).count();
            finish(&args, "policy", &plan, plan.base_seed, &records, errors)
        }
        Command::Gradvar(args) => {
            let mut plan = load_plan(&args, GradientVariancePlan::default(), GradientVariancePlan::default())?;
            if let Some(s) = args.seed {
                plan.base_seed = s;
            }
            let records = run_gradient_variance_study(&plan, args.workers)?;
            println!("median variance ratio (rt / score): {:.4}", median_ratio(&records));
            finish(&args, "gradvar", &plan, plan.base_seed, &records, 0)
        }
        Command::Fit {
            table,
            dataset,
            prefer,
            estimator,
            seed,
        } => fit_command(&table, dataset.as_deref(), &prefer, &estimator, seed),
        Command::Serve {
            bind,
            data_dir,
            seed,
            cors_origin,
        } => {
            let mut cfg = ServerConfig::from_env()?;
            cfg.bind = bind.unwrap_or(cfg.bind);
            cfg.data_dir = data_dir.or(cfg.data_dir);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.cors_origin = cors_origin.or(cfg.cors_origin);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(cfg))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
