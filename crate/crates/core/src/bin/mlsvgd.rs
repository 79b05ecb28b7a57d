use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mlsvgd::experiment::{
    estimate_beta, fit_cost_rmse_slopes, parse_sweep_csv, write_sweep_csv, Experiment,
    ExperimentConfig,
};
use mlsvgd::multilevel::{run_ml, run_sl};
use mlsvgd::svgd::Ensemble;
use mlsvgd::{Error, Result};

#[derive(Parser)]
#[command(
    name = "mlsvgd",
    version,
    about = "Multilevel Stein variational gradient descent experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute (or load from cache) the reference value for every step count.
    Reference(Common),
    /// One single-level estimate.
    RunSl(Single),
    /// One multilevel estimate with a per-level report.
    RunMl(Single),
    /// Full error-versus-cost sweep.
    Sweep(Common),
    /// Level-difference rate and, if a sweep CSV exists, cost-error slopes.
    Rates(Rates),
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    parallel: Option<usize>,
    /// Write final ensembles as CSV.
    #[arg(long)]
    dump_particles: bool,
}

#[derive(Args)]
struct Single {
    #[command(flatten)]
    common: Common,
    /// Tolerance; the first grid value by default.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Step count; the first configured value by default.
    #[arg(long)]
    n_steps: Option<usize>,
}

#[derive(Args)]
struct Rates {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 4)]
    min_level: u32,
    #[arg(long, default_value_t = 9)]
    max_level: u32,
    #[arg(long, default_value_t = 50)]
    samples: usize,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.outputs.dir = out.clone();
    }
    cfg.validate()?;
    if let Some(k) = common.parallel {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    fs::create_dir_all(&cfg.outputs.dir)?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn dump(dir: &Path, name: &str, e: &Ensemble) -> Result<()> {
    let f = fs::File::create(dir.join(format!("{name}.csv")))?;
    e.write_csv(std::io::BufWriter::new(f))?;
    Ok(())
}

fn reference(common: Common) -> Result<()> {
    let cfg = load(&common)?;
    let x = Experiment::new(cfg)?;
    let refs = x.references(Some(&x.config.outputs.cache_dir()))?;
    for r in &refs {
        println!(
            "n_steps={} reference={} cached={}",
            r.n_steps, r.value, r.cached
        );
    }
    write_json(&x.config.outputs.dir.join("references.json"), &refs)
}

fn single(args: Single, multilevel: bool) -> Result<()> {
    let cfg = load(&args.common)?;
    let epsilon = args.epsilon.unwrap_or(cfg.epsilons[0]);
    let n_steps = args.n_steps.unwrap_or(cfg.n_steps[0]);
    let x = Experiment::new(cfg)?;
    let (sl, ml) = x.config.schedules(epsilon)?;
    let run = x.run_config(n_steps)?;
    let dir = x.config.outputs.dir.clone();
    let seed = x.config.seed;
    if multilevel {
        let out = run_ml(&ml, &x.target, &x.phi, &run, seed, true)?;
        println!("estimate={} cost={}", out.value, out.ledger.total());
        if args.common.dump_particles {
            dump(
                &dir,
                &format!("particles_ml_level{}", ml.base_level),
                &out.ensembles[0],
            )?;
            for (pair, r) in out.ensembles[1..].chunks(2).zip(&out.levels[1..]) {
                dump(
                    &dir,
                    &format!("particles_ml_level{}_fine", r.level),
                    &pair[0],
                )?;
                dump(
                    &dir,
                    &format!("particles_ml_level{}_aux", r.level),
                    &pair[1],
                )?;
            }
        }
        write_json(
            &dir.join("run_ml.json"),
            &json!({
                "epsilon": epsilon,
                "n_steps": n_steps,
                "seed": seed,
                "schedule": ml,
                "estimate": out.value,
                "levels": out.levels,
                "ledger": out.ledger,
            }),
        )
    } else {
        let out = run_sl(&sl, &x.target, &x.phi, &run, seed)?;
        println!("estimate={} cost={}", out.value, out.ledger.total());
        if let (true, Some(e)) = (args.common.dump_particles, &out.ensemble) {
            dump(&dir, &format!("particles_sl_level{}", sl.max_level), e)?;
        }
        write_json(
            &dir.join("run_sl.json"),
            &json!({
                "epsilon": epsilon,
                "n_steps": n_steps,
                "seed": seed,
                "schedule": sl,
                "estimate": out.value,
                "ledger": out.ledger,
            }),
        )
    }
}

fn sweep(common: Common) -> Result<()> {
    let cfg = load(&common)?;
    let x = Experiment::new(cfg)?;
    let refs = x.references(Some(&x.config.outputs.cache_dir()))?;
    let rows = x.run_sweep(&refs)?;
    let dir = &x.config.outputs.dir;
    write_sweep_csv(&dir.join("sweep.csv"), &rows)?;
    for r in &rows {
        println!("{}", r.to_csv_line());
    }
    write_json(&dir.join("report.json"), &x.report(refs, rows)?)
}

fn rates(args: Rates) -> Result<()> {
    let cfg = load(&args.common)?;
    let dir = cfg.outputs.dir.clone();
    let n_steps = cfg.n_steps.clone();
    let mut t = cfg.target.clone();
    t.max_level = t.max_level.max(args.max_level);
    let target = t.build()?;
    let levels: Vec<u32> = (args.min_level..=args.max_level).collect();
    let beta = estimate_beta(&target, &levels, args.samples, cfg.seed)?;
    println!(
        "level-difference slope={} r2={}",
        beta.slope, beta.r_squared
    );
    let csv = dir.join("sweep.csv");
    let slopes = match fs::read_to_string(&csv) {
        Ok(text) => {
            let rows = parse_sweep_csv(&text)?;
            let s: Vec<_> = n_steps
                .iter()
                .map(|&n| fit_cost_rmse_slopes(&rows, n))
                .collect();
            for f in &s {
                println!(
                    "n_steps={} sl_slope={} ml_slope={}",
                    f.n_steps,
                    f.sl.map_or(f64::NAN, |l| l.slope),
                    f.ml.map_or(f64::NAN, |l| l.slope)
                );
            }
            Some(s)
        }
        Err(_) => None,
    };
    write_json(
        &dir.join("rates.json"),
        &json!({ "beta": beta, "cost_slopes": slopes }),
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Reference(c) => reference(c),
        Command::RunSl(s) => single(s, false),
        Command::RunMl(s) => single(s, true),
        Command::Sweep(c) => sweep(c),
        Command::Rates(r) => rates(r),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_)
                | Error::InvalidArgument(_)
                | Error::Json(_)
                | Error::LevelNotAvailable(_) => 2,
                Error::NumericalFailure { .. } => 3,
                _ => 1,
            })
        }
    }
}
