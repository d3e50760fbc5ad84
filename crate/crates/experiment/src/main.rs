use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use fdd_core::scenario::ScenarioConfig;
use fdd_extrap::dataset::{evaluate_job, extract_dataset, generate_dataset, load_model, predict_job, save_model, train_job, JobConfig};
use fdd_extrap::plan::{ExperimentPlan, LinkSettings};
use fdd_extrap::run::{run_experiment, write_csv};

#[derive(Parser)]
#[command(name = "fdd-extrap", version, about = "FDD downlink extrapolation experiments")]
struct Cli {
    /// Overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset directory from a scenario config.
    Generate { config: PathBuf },
    /// Extract path gains from every snapshot of a dataset.
    Extract {
        dataset: PathBuf,
        #[arg(long, default_value_t = 2)]
        q: usize,
        /// Link settings JSON; defaults to 30 dBm on both sides.
        #[arg(long)]
        link: Option<PathBuf>,
        #[arg(long)]
        noiseless_tpg: bool,
    },
    /// Train one model from a job config.
    Train { job: PathBuf },
    /// Write DL predictions for the held-out sets of a job.
    Predict {
        job: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Score a trained model on the held-out sets of a job.
    Evaluate {
        job: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run a full sweep from an experiment plan.
    Experiment { plan: PathBuf },
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_job(path: &Path, seed: Option<u64>) -> Result<JobConfig> {
    let mut job: JobConfig = read(path)?;
    if let Some(s) = seed {
        job.seed = s;
        job.train.seed = s;
    }
    if job.dataset.is_relative() {
        if let Some(parent) = path.parent() {
            job.dataset = parent.join(&job.dataset);
        }
    }
    Ok(job)
}

fn model_path(job: &JobConfig, flag: Option<PathBuf>, out: &Path) -> PathBuf {
    flag.or_else(|| job.model.clone()).unwrap_or_else(|| out.join("model.json"))
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    match cli.command {
        Command::Generate { config } => {
            let mut cfg: ScenarioConfig = read(&config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let m = generate_dataset(&cfg, &out)?;
            log::info!("wrote {} sets x {} snapshots to {}", m.sample_sets, m.snapshots_per_set, out.display());
        }
        Command::Extract { dataset, q, link, noiseless_tpg } => {
            let link: LinkSettings = match link {
                Some(p) => read(&p)?,
                None => LinkSettings::default(),
            };
            let n = extract_dataset(&dataset, &out, q, &link, cli.seed.unwrap_or(0), !noiseless_tpg)?;
            log::info!("extracted {n} snapshots into {}", out.display());
        }
        Command::Train { job } => {
            let job = read_job(&job, cli.seed)?;
            fs::create_dir_all(&out).with_context(|| format!("[output] creating {}", out.display()))?;
            let model = train_job(&job)?;
            let path = out.join("model.json");
            save_model(&model, &path)?;
            log::info!("saved {}", path.display());
        }
        Command::Predict { job, model } => {
            let job = read_job(&job, cli.seed)?;
            let mut m = load_model(&model_path(&job, model, &out))?;
            let n = predict_job(&job, &mut m, &out)?;
            log::info!("wrote {n} predictions to {}", out.display());
        }
        Command::Evaluate { job, model } => {
            let job = read_job(&job, cli.seed)?;
            let mut m = load_model(&model_path(&job, model, &out))?;
            let rows = evaluate_job(&job, &mut m)?;
            fs::create_dir_all(&out).with_context(|| format!("[output] creating {}", out.display()))?;
            write_csv(&out.join("evaluate.csv"), &rows)?;
            for r in &rows {
                println!("{} {} {:.6} +/- {:.6} (n = {})", r.method, r.metric, r.mean, r.stderr, r.n);
            }
        }
        Command::Experiment { plan } => {
            let mut p: ExperimentPlan = read(&plan)?;
            if let Some(s) = cli.seed {
                p.seed = s;
                p.scenario.seed = s;
                p.train.seed = s;
            }
            let dir = cli.out.clone().or_else(|| p.output.clone()).unwrap_or(out);
            let summary = run_experiment(&p, &dir)?;
            println!("{} rows -> {}", summary.rows.len(), summary.csv_path.display());
            println!("manifest -> {}", summary.manifest_path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: [setup] thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
