//! Subcommand implementations behind the `slrl` binary.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use slrl_core::envs::{scripted_demos, EnvId, EnvSpec, Variant};
use slrl_core::nn::{streams, Checkpoint, Rng};
use slrl_core::replay::DatasetFile;
use slrl_core::report::{aggregate_all, format_table, render_visitation, AggregateReport, ColorBy};
use slrl_core::runner::{
    build_prior, parse_trace_csv, prior_states, run_single_life, target_env, trace_to_csv, Method, MethodConfig,
    PriorBundle, PriorSource, RunRecord,
};
use slrl_core::sac::SacAgent;

pub use config::ExperimentConfig;

const PRIOR_FILE: &str = "prior.slrl.jsonl";
const AGENT_FILE: &str = "agent.json";
const PRIOR_META_FILE: &str = "prior_meta.json";

#[derive(Debug, Parser)]
#[command(name = "slrl", version, about = "Single-life reinforcement learning lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON experiment config; `slrl --help` and `slrl defaults` list every key and default.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config value by dotted path, e.g. `life.sac.lr=1e-4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    #[arg(long)]
    pub env: Option<EnvId>,
    /// Output directory (config key `out_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pretrain in the source variant and write the prior dataset and agent.
    Pretrain {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run one single life in the target variant.
    Deploy {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        method: Method,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Prior directory written by `pretrain` (config key `prior_dir`).
        #[arg(long)]
        prior: Option<PathBuf>,
    },
    /// Run every method for every seed and write the aggregate report.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated method names.
        #[arg(long)]
        methods: Option<String>,
        /// Inclusive range `a..b` or a comma list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        prior: Option<PathBuf>,
    },
    /// Write scripted source-variant demonstrations as a dataset file.
    DemoGen {
        #[arg(long)]
        env: EnvId,
        /// Defaults to 3 for pointmass, 10 for tabletop.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a trace CSV as an SVG state-visitation plot.
    Plot {
        trace: PathBuf,
        #[arg(long, default_value = "timestep")]
        color_by: ColorBy,
        /// Defaults to the trace path with an `.svg` extension.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dataset whose states are drawn underneath.
        #[arg(long)]
        prior: Option<PathBuf>,
        /// Inferred from the observation width when omitted.
        #[arg(long)]
        env: Option<EnvId>,
    },
    /// Print the full default configuration.
    Defaults,
}

/// Parses `argv` and runs the subcommand. Usage errors return 2, runtime
/// errors 1.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let defaults = format!(
        "Configuration keys and their defaults (override with --set key=value):\n{}",
        ExperimentConfig::default().to_pretty_json()
    );
    let parsed = Cli::command()
        .after_long_help(defaults)
        .try_get_matches_from(argv)
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut sets = Vec::new();
    if let Some(env) = args.env {
        sets.push(format!("env={env}"));
    }
    if let Some(out) = &args.out {
        sets.push(format!("out_dir={}", serde_json::to_string(out)?));
    }
    sets.extend(args.sets.iter().cloned());
    ExperimentConfig::load(args.config.as_deref(), &sets)
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Pretrain { cfg } => {
            let cfg = load_config(&cfg)?;
            let dir = cfg.out_dir.join(cfg.env.as_str()).join("prior");
            let bundle = build_prior_for(&cfg)?;
            save_prior(&bundle, &dir)?;
            println!("wrote {} prior transitions to {}", bundle.dataset.len(), dir.display());
        }
        Command::Deploy { cfg, method, seed, prior } => {
            let mut cfg = load_config(&cfg)?;
            if prior.is_some() {
                cfg.prior_dir = prior;
            }
            let bundle = prior_for(&cfg)?;
            let rec = deploy(&cfg, &bundle, method, seed)?;
            println!(
                "{} seed {seed}: {} at step {}",
                method,
                if rec.success { "success" } else { "failure" },
                rec.completion_step
            );
        }
        Command::Sweep { cfg, methods, seeds, prior } => {
            let mut cfg = load_config(&cfg)?;
            if let Some(m) = methods {
                cfg.methods = config::parse_methods(&m)?;
            }
            if let Some(s) = seeds {
                cfg.seeds = config::parse_seeds(&s)?;
            }
            if prior.is_some() {
                cfg.prior_dir = prior;
            }
            cfg.validate()?;
            let bundle = prior_for(&cfg)?;
            let (_, report) = sweep(&cfg, &bundle)?;
            print!("{}", format_table(&report));
        }
        Command::DemoGen { env, count, seed, out } => {
            let ds = demo_dataset(env, count.unwrap_or(env.default_demo_count()), seed)?;
            ds.save(&out)?;
            println!("wrote {} demo transitions to {}", ds.len(), out.display());
        }
        Command::Plot {
            trace,
            color_by,
            out,
            prior,
            env,
        } => {
            let out = out.unwrap_or_else(|| trace.with_extension("svg"));
            plot(&trace, color_by, &out, prior.as_deref(), env)?;
            println!("wrote {}", out.display());
        }
        Command::Defaults => println!("{}", ExperimentConfig::default().to_pretty_json()),
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PriorMeta {
    env_id: EnvId,
    source: PriorSource,
    hidden_dims: Vec<usize>,
}

/// Pretrains (and collects demos if asked) as configured.
pub fn build_prior_for(cfg: &ExperimentConfig) -> Result<PriorBundle> {
    let prior = cfg.resolved_prior();
    log::info!(
        "pretraining {} for {} steps (prior seed {})",
        cfg.env,
        prior.pretrain.steps,
        cfg.prior_seed
    );
    Ok(build_prior(
        cfg.env,
        cfg.prior_source,
        &prior,
        &cfg.pretrain_sac,
        &Rng::new(cfg.prior_seed),
    )?)
}

pub fn save_prior(bundle: &PriorBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    bundle.dataset.save(&dir.join(PRIOR_FILE))?;
    let mut hidden_dims = Vec::new();
    if let Some(agent) = &bundle.pretrained {
        agent.save(&dir.join(AGENT_FILE))?;
        hidden_dims = agent.config().hidden_dims.clone();
    }
    let meta = PriorMeta {
        env_id: bundle.dataset.header.env_id,
        source: bundle.source,
        hidden_dims,
    };
    write(&dir.join(PRIOR_META_FILE), &serde_json::to_string_pretty(&meta)?)
}

pub fn load_prior(dir: &Path, cfg: &ExperimentConfig) -> Result<PriorBundle> {
    let meta_path = dir.join(PRIOR_META_FILE);
    let meta: PriorMeta = serde_json::from_str(&read(&meta_path)?)
        .with_context(|| format!("{} is not a prior description", meta_path.display()))?;
    if meta.env_id != cfg.env {
        return Err(anyhow!("{} holds a {} prior, config asks for {}", dir.display(), meta.env_id, cfg.env));
    }
    let dataset = DatasetFile::load(&dir.join(PRIOR_FILE))?;
    let agent_path = dir.join(AGENT_FILE);
    let pretrained = if meta.hidden_dims.is_empty() {
        None
    } else {
        let mut sac = cfg.pretrain_sac.clone();
        sac.hidden_dims = meta.hidden_dims.clone();
        let id = meta.env_id;
        let mut agent = SacAgent::new(id.obs_dim(), id.action_dim(), id.obs_scale(), sac, &mut Rng::new(0))?;
        agent.load_checkpoint(&Checkpoint::load(&agent_path)?)?;
        Some(agent)
    };
    Ok(PriorBundle {
        dataset,
        pretrained,
        source: meta.source,
    })
}

/// Loads `prior_dir` when configured, otherwise pretrains in memory.
pub fn prior_for(cfg: &ExperimentConfig) -> Result<PriorBundle> {
    match &cfg.prior_dir {
        Some(dir) => load_prior(dir, cfg),
        None => build_prior_for(cfg),
    }
}

fn run_dir(cfg: &ExperimentConfig, method: Method) -> PathBuf {
    cfg.out_dir.join(cfg.env.as_str()).join(method.as_str())
}

pub fn trace_file(cfg: &ExperimentConfig, method: Method, seed: u64) -> PathBuf {
    run_dir(cfg, method).join(format!("seed{seed}.trace.csv"))
}

pub fn record_file(cfg: &ExperimentConfig, method: Method, seed: u64) -> PathBuf {
    run_dir(cfg, method).join(format!("seed{seed}.json"))
}

/// One life; writes the run record and, if enabled, the trace.
pub fn deploy(cfg: &ExperimentConfig, prior: &PriorBundle, method: Method, seed: u64) -> Result<RunRecord> {
    let mc = MethodConfig::new(method, cfg.prior_source, cfg.budget, seed);
    let out = run_single_life(&mc, &cfg.life, prior, target_env(cfg.env, seed))?;
    let mut record = out.record;
    fs::create_dir_all(run_dir(cfg, method)).with_context(|| format!("cannot create {}", run_dir(cfg, method).display()))?;
    if cfg.write_traces {
        let path = trace_file(cfg, method, seed);
        write(&path, &trace_to_csv(&out.trace, cfg.env.obs_dim(), cfg.env.action_dim()))?;
        record.trace_path = Some(path.display().to_string());
    }
    write(&record_file(cfg, method, seed), &serde_json::to_string_pretty(&record)?)?;
    log::info!(
        "{} {method} seed {seed}: success={} step={} ({:.1}s)",
        cfg.env,
        record.success,
        record.completion_step,
        record.wall_clock_secs
    );
    Ok(record)
}

#[derive(Debug, Serialize)]
struct ReportFile<'a> {
    generated_at_unix: u64,
    budget: usize,
    seeds: &'a [u64],
    report: &'a AggregateReport,
}

/// All methods × seeds spread over worker threads, then aggregated. Records
/// come back in (method, seed) order whatever the scheduling.
pub fn sweep(cfg: &ExperimentConfig, prior: &PriorBundle) -> Result<(Vec<RunRecord>, AggregateReport)> {
    let jobs: Vec<(Method, u64)> = cfg
        .methods
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..cfg.worker_count().min(jobs.len()) {
            let tx = tx.clone();
            let (jobs, next) = (&jobs, &next);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(m, s)) = jobs.get(i) else { break };
                if tx.send((i, deploy(cfg, prior, m, s))).is_err() {
                    break;
                }
            });
        }
    });
    drop(tx);
    let mut slots: Vec<Option<RunRecord>> = vec![None; jobs.len()];
    for (i, res) in rx {
        let (m, s) = jobs[i];
        slots[i] = Some(res.with_context(|| format!("{m} seed {s}"))?);
    }
    let records: Vec<RunRecord> = slots.into_iter().map(|r| r.expect("every job reports")).collect();
    let report = aggregate_all(&records)?;
    let dir = cfg.out_dir.join(cfg.env.as_str());
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let file = ReportFile {
        generated_at_unix: stamp,
        budget: cfg.budget,
        seeds: &cfg.seeds,
        report: &report,
    };
    write(&dir.join("report.json"), &serde_json::to_string_pretty(&file)?)?;
    write(&dir.join("report.txt"), &format_table(&report))?;
    Ok((records, report))
}

pub fn demo_dataset(env: EnvId, count: usize, seed: u64) -> Result<DatasetFile> {
    let spec = EnvSpec::new(env, Variant::Source, seed);
    let demos = scripted_demos(&spec, count, &mut Rng::new(seed).fork(streams::DEMO))?;
    Ok(DatasetFile::new(env, Variant::Source, demos.into_iter().flatten().collect())?)
}

/// Maximum prior states drawn in a plot.
const PLOT_PRIOR_POINTS: usize = 2000;

pub fn plot(trace: &Path, color_by: ColorBy, out: &Path, prior: Option<&Path>, env: Option<EnvId>) -> Result<()> {
    let (header, rows) = parse_trace_csv(trace, &read(trace)?)?;
    let obs_dim = header.iter().filter(|c| c.starts_with("obs_")).count();
    let env = match env {
        Some(e) => e,
        None => [EnvId::Pointmass, EnvId::Tabletop]
            .into_iter()
            .find(|e| e.obs_dim() == obs_dim)
            .ok_or_else(|| anyhow!("{}: no environment has {obs_dim}-dim observations", trace.display()))?,
    };
    let (ix, iy) = env.projection_indices();
    let prior_pts: Vec<[f64; 2]> = match prior {
        Some(p) => {
            let states = prior_states(&DatasetFile::load(p)?, PLOT_PRIOR_POINTS);
            (0..states.rows()).map(|r| [states.get(r, ix), states.get(r, iy)]).collect()
        }
        None => Vec::new(),
    };
    let svg = render_visitation(&rows, (ix, iy), color_by, &prior_pts)?;
    write(out, &svg)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
