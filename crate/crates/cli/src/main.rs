//! Command line front end: batch runs, cost sweeps, brute-force instance
//! audits, and dataset replica checks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use feature_market::config::{AgentKind, CostSection, ExperimentConfig, Overrides};
use feature_market::engine::InfoSetting;
use feature_market::fixtures::{adult_like, credit_like, titanic_like, Fixture};
use feature_market::harness::{run_experiment, write_artifacts};
use feature_market::verifier::{full_audit, SmallInstance};

#[derive(Parser)]
#[command(
    name = "fmkt",
    version,
    about = "Bargaining simulator for pricing machine-learning feature bundles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch experiment described by a config file
    Run(RunArgs),
    /// Audit a saved instance by brute force and print the JSON report
    Verify(VerifyArgs),
    /// Run the experiment once per bargaining-cost model
    Sweep(SweepArgs),
    /// Generate the bundled dataset replicas and check their encoded widths
    Datasets(DatasetsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the seed base
    #[arg(long)]
    seed: Option<u64>,
    /// Override the agent kind: strategic, increase_price or random_bundle
    #[arg(long)]
    agent: Option<String>,
    /// Override the information setting: perfect or imperfect
    #[arg(long)]
    setting: Option<String>,
    /// Directory for raw.csv, summary.json and the other artifacts
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Instance description (JSON)
    #[arg(long)]
    instance: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated cost models, e.g. none,constant:0.5,linear:0.1:10,exp:1.01
    #[arg(long)]
    costs: String,
    /// Directory for the per-cost artifact folders
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DatasetsArgs {
    /// Also write each replica's CSV and schema here
    #[arg(long)]
    out: Option<PathBuf>,
    /// Generation seed
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Verify(args) => verify(args),
        Command::Sweep(args) => sweep(args),
        Command::Datasets(args) => datasets(args),
    }
}

fn parse_agent(s: &str) -> Result<AgentKind> {
    match s {
        "strategic" => Ok(AgentKind::Strategic),
        "increase_price" => Ok(AgentKind::IncreasePrice),
        "random_bundle" => Ok(AgentKind::RandomBundle),
        other => bail!("unknown agent {other:?} (strategic, increase_price, random_bundle)"),
    }
}

fn parse_setting(s: &str) -> Result<InfoSetting> {
    match s {
        "perfect" => Ok(InfoSetting::Perfect),
        "imperfect" => Ok(InfoSetting::Imperfect),
        other => bail!("unknown setting {other:?} (perfect, imperfect)"),
    }
}

/// `none`, `constant:c[:scale]`, `linear:a[:scale]` or `exp:a[:scale]`.
fn parse_cost(spec: &str) -> Result<CostSection> {
    let mut parts = spec.split(':');
    let kind = parts.next().unwrap_or_default();
    let mut num = |name: &str| -> Result<f64> {
        let field = parts
            .next()
            .with_context(|| format!("cost {spec:?} is missing its {name}"))?;
        field.parse().with_context(|| format!("cost {spec:?}: bad {name} {field:?}"))
    };
    let section = match kind {
        "none" => CostSection::None,
        "constant" => {
            let c = num("coefficient")?;
            CostSection::Constant { c, scale: num("scale").unwrap_or(1.0) }
        }
        "linear" => {
            let a = num("coefficient")?;
            CostSection::Linear { a, scale: num("scale").unwrap_or(1.0) }
        }
        "exp" => {
            let a = num("coefficient")?;
            CostSection::Exponential { a, scale: num("scale").unwrap_or(1.0) }
        }
        other => bail!("unknown cost kind {other:?} (none, constant, linear, exp)"),
    };
    if let Some(extra) = parts.next() {
        bail!("cost {spec:?} has a trailing field {extra:?}");
    }
    Ok(section)
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)
        .with_context(|| format!("loading config {}", path.display()))?;
    cfg.apply(overrides);
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.experiment.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn execute(cfg: &ExperimentConfig) -> Result<ExitCode> {
    let result = run_experiment(cfg)?;
    let dir = out_dir(cfg);
    write_artifacts(&result, &dir)?;
    for batch in &result.batches {
        let s = &batch.summary;
        let net = s
            .final_state
            .as_ref()
            .map_or_else(|| "-".into(), |f| format!("{:.4}", f.net.mean));
        println!(
            "{}: runs={} successes={} failure_rate={:.3} mean_net={}",
            batch.label, s.runs, s.successes, s.failure_rate, net
        );
    }
    println!("artifacts written to {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let overrides = Overrides {
        seed: args.seed,
        agent: args.agent.as_deref().map(parse_agent).transpose()?,
        setting: args.setting.as_deref().map(parse_setting).transpose()?,
        out_dir: args.out,
        repetitions: None,
        costs: None,
    };
    execute(&load_config(&args.config, &overrides)?)
}

fn sweep(args: SweepArgs) -> Result<ExitCode> {
    let costs = args
        .costs
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_cost)
        .collect::<Result<Vec<_>>>()?;
    if costs.is_empty() {
        bail!("--costs lists no cost models");
    }
    let overrides = Overrides {
        seed: None,
        agent: None,
        setting: None,
        out_dir: args.out,
        repetitions: None,
        costs: Some(costs),
    };
    execute(&load_config(&args.config, &overrides)?)
}

fn verify(args: VerifyArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.instance)
        .with_context(|| format!("reading instance {}", args.instance.display()))?;
    let instance: SmallInstance =
        serde_json::from_str(&text).context("parsing the instance description")?;
    instance.validate().context("invalid instance")?;
    let report = full_audit(&instance);
    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("verification failed");
        Ok(ExitCode::FAILURE)
    }
}

fn datasets(args: DatasetsArgs) -> Result<ExitCode> {
    // replicas of the published encodings: (name, one-hot task/data widths)
    let expected: [(Fixture, usize, usize); 3] = [
        (titanic_like(args.seed), 10, 19),
        (credit_like(args.seed, 1000), 9, 21),
        (adult_like(args.seed, 2000), 52, 36),
    ];
    let mut all_ok = true;
    for (fixture, task_width, data_width) in &expected {
        let ds = fixture.dataset().with_context(|| format!("encoding {}", fixture.name))?;
        let ok = ds.task.width() == *task_width && ds.data.width() == *data_width;
        all_ok &= ok;
        println!(
            "{} {}: rows={} task_width={}/{} data_width={}/{}",
            if ok { "ok" } else { "MISMATCH" },
            fixture.name,
            ds.n_rows,
            ds.task.width(),
            task_width,
            ds.data.width(),
            data_width,
        );
        if let Some(dir) = &args.out {
            std::fs::create_dir_all(dir)?;
            let (csv, schema) = fixture.write_to(dir)?;
            println!("   wrote {} and {}", csv.display(), schema.display());
        }
    }
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
