use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use spatial_match::engines::{self, Model, SimConfig};
use spatial_match::experiments::{capacity_plan, fit_sweep, geometric_grid, sweep};
use spatial_match::verify::{self, Suite};

mod config;
mod output;

use config::{ConfigFile, Fields};
use output::{OutDir, RunManifest};

#[derive(Parser)]
#[command(name = "spatial-match", version, about = "Spatial matching simulations")]
struct Cli {
    /// Worker threads for replications.
    #[arg(long, global = true, env = "SPATIAL_MATCH_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration.
    Simulate(RunArgs),
    /// Run a grid described by the `[sweep]` or `[plan]` section.
    Sweep(RunArgs),
    /// Run an acceptance suite.
    Verify {
        /// oracles, invariants, exponents-fast, exponents-full or capacity
        suite: String,
        #[arg(long, default_value_t = 20_240_601)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Write per-period distances to periods.csv.
    #[arg(long)]
    periods_csv: bool,
    #[command(flatten)]
    fields: FieldArgs,
}

#[derive(Args)]
struct FieldArgs {
    /// static, semi_dynamic, fully_dynamic or capacity
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "N")]
    horizon: Option<u64>,
    #[arg(long = "M")]
    excess: Option<u64>,
    #[arg(long)]
    m: Option<u64>,
    #[arg(long)]
    n: Option<u64>,
    /// hg or greedy
    #[arg(long)]
    policy: Option<String>,
    /// nearest or last_inserted
    #[arg(long)]
    in_leaf: Option<String>,
    /// uniform_random or even_grid
    #[arg(long)]
    init: Option<String>,
    /// euclidean, l1 or linf
    #[arg(long)]
    norm: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<u32>,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    l0: Option<u32>,
    /// Audit the threshold invariants every period.
    #[arg(long)]
    audit: bool,
}

impl FieldArgs {
    fn to_fields(&self) -> Fields {
        Fields {
            model: self.model.clone(),
            d: self.d,
            horizon: self.horizon,
            excess: self.excess,
            m: self.m,
            n: self.n,
            policy: self.policy.clone(),
            in_leaf: self.in_leaf.clone(),
            init: self.init.clone(),
            norm: self.norm.clone(),
            seed: self.seed,
            reps: self.reps,
            warmup: self.warmup,
            beta: self.beta,
            l0: self.l0,
            audit: self.audit.then_some(true),
            exact_cap: None,
        }
    }
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Check(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Check(_) => 3,
        }
    }
}

type Outcome = Result<(), Failure>;

trait Classify<T> {
    fn config_err(self) -> Result<T, Failure>;
    fn runtime_err(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config_err(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }
    fn runtime_err(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let args: Vec<String> = std::env::args().collect();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a, &args),
        Command::Sweep(a) => run_sweep(a, &args),
        Command::Verify { suite, seed } => run_verify(suite, *seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(e) => eprintln!("config error: {e:#}"),
                Failure::Runtime(e) => eprintln!("error: {e:#}"),
                Failure::Check(msg) => eprintln!("check failed: {msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn load(a: &RunArgs, base: bool) -> Result<(ConfigFile, SimConfig), Failure> {
    let file = match &a.config {
        Some(p) => ConfigFile::load(p).config_err()?,
        None => ConfigFile::default(),
    };
    let flags = a.fields.to_fields();
    let resolved = if base { file.resolve_base(&flags) } else { file.resolve(&flags) };
    let mut cfg = resolved.config_err()?;
    cfg.record_samples = a.periods_csv;
    Ok((file, cfg))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn manifest(command: &str, args: &[String], config: &serde_json::Value, seed: u64, started_at: String) -> RunManifest {
    RunManifest {
        command: command.into(),
        args: args.to_vec(),
        config_sha256: output::config_hash(config),
        config: config.clone(),
        seed,
        version: env!("CARGO_PKG_VERSION"),
        started_at,
        finished_at: now(),
        outputs: Vec::new(),
    }
}

fn simulate(a: &RunArgs, args: &[String]) -> Outcome {
    let started = now();
    let (_, cfg) = load(a, false)?;
    cfg.validate().config_err()?;
    if a.periods_csv && cfg.model == Model::Static {
        return Err(Failure::Config(anyhow!("--periods-csv is not available for the static model")));
    }
    let report = engines::run(&cfg).runtime_err()?;
    let mut out = OutDir::create(&a.out_dir).runtime_err()?;
    if a.periods_csv {
        let mut w = out.csv("periods.csv").runtime_err()?;
        output::write_periods(&mut w, &report).runtime_err()?;
    }
    out.json("summary.json", &output::simulate_summary(&cfg, &report))
        .runtime_err()?;
    println!(
        "{:?} d={} N={}: mean cost {:.6e} over {} replication(s)",
        cfg.model, cfg.d, cfg.horizon, report.mean_cost, report.replications
    );
    let resolved = serde_json::to_value(&cfg).runtime_err()?;
    out.finish(manifest("simulate", args, &resolved, cfg.seed, started))
        .runtime_err()
}

fn run_sweep(a: &RunArgs, args: &[String]) -> Outcome {
    let started = now();
    let (file, base) = load(a, true)?;
    match (&file.sweep, &file.plan) {
        (Some(_), Some(_)) => Err(Failure::Config(anyhow!(
            "config has both [sweep] and [plan]; use one per run"
        ))),
        (Some(section), None) => {
            let spec = section.spec().config_err()?;
            let configs: Vec<SimConfig> = spec.values.iter().map(|&v| spec.config_for(&base, v)).collect();
            for c in &configs {
                c.validate().config_err()?;
            }
            let points = sweep(&base, &spec).runtime_err()?;
            let fit = fit_sweep(&points, base.seed).runtime_err()?;
            let fit_json = serde_json::to_value(&fit).runtime_err()?;
            let mut out = OutDir::create(&a.out_dir).runtime_err()?;
            let mut w = out.csv("sweep.csv").runtime_err()?;
            output::write_sweep(&mut w, spec.param.name(), &points).runtime_err()?;
            out.json("fit.json", &fit).runtime_err()?;
            out.json(
                "summary.json",
                &output::sweep_summary(&base, spec.param.name(), &points, &fit_json),
            )
            .runtime_err()?;
            println!(
                "sweep over {} ({} points): exponent {:.4} (se {:.4})",
                spec.param.name(),
                points.len(),
                fit.exponent,
                fit.stderr
            );
            let resolved = serde_json::json!({ "base": base, "sweep": section });
            out.finish(manifest("sweep", args, &resolved, base.seed, started))
                .runtime_err()
        }
        (None, Some(plan)) => {
            let n_grid = plan.n_grid().config_err()?;
            if plan.points < 2 || !(plan.lo > 0.0 && plan.lo < plan.hi) {
                return Err(Failure::Config(anyhow!("plan needs points >= 2 and 0 < lo < hi")));
            }
            let probe = SimConfig {
                model: Model::Capacity,
                free_supply: Some(2),
                load: Some(1),
                ..base.clone()
            };
            probe.validate().config_err()?;
            let d = base.d as f64;
            let (lo, hi, count) = (plan.lo, plan.hi, plan.points);
            let m_grid = |n: u64| {
                let g = (n as f64).powf(d / (d + 1.0));
                let a = (lo * g).max(4.0) as u64;
                let b = ((hi * g) as u64).max(a + 1);
                geometric_grid(a, b, count)
            };
            let result = capacity_plan(&base, &n_grid, m_grid, plan.horizon_per_free)
                .context("capacity plan")
                .runtime_err()?;
            let mut out = OutDir::create(&a.out_dir).runtime_err()?;
            let mut w = out.csv("plan.csv").runtime_err()?;
            output::write_plan(&mut w, &result).runtime_err()?;
            out.json("fit.json", &result.fit).runtime_err()?;
            out.json("summary.json", &output::plan_summary(&base, &result))
                .runtime_err()?;
            println!(
                "capacity plan over {} loads: m* exponent {:.4}{}",
                result.rows.len(),
                result.fit.exponent,
                if result.boundary_hit { " (optimum on grid boundary)" } else { "" }
            );
            if result.boundary_hit {
                eprintln!("warning: optimum hit the grid boundary for at least one load");
            }
            let resolved = serde_json::json!({ "base": base, "plan": plan });
            out.finish(manifest("sweep", args, &resolved, base.seed, started))
                .runtime_err()
        }
        (None, None) => Err(Failure::Config(anyhow!(
            "sweep needs a [sweep] or [plan] section in --config"
        ))),
    }
}

fn run_verify(suite: &str, seed: u64) -> Outcome {
    let suite: Suite = suite.parse().config_err()?;
    let mut failed = Vec::new();
    for &id in suite.criteria() {
        let r = verify::run_criterion(id, seed).runtime_err()?;
        println!("{r}");
        if !r.passed {
            failed.push(format!("criterion {} ({})", r.id, r.name));
        }
    }
    if suite == Suite::ExponentsFull {
        println!("{}", verify::NOT_REPRODUCIBLE);
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(failed.join(", ")))
    }
}
