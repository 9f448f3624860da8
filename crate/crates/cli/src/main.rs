use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abm_calib::framework::{run_framework_with, write_best_params_csv, write_trail_csv, CalibrationState, DefaultClusterer, FrameworkConfig};
use abm_calib::io::{read_validation, write_validation};
use abm_calib::presets::{preset_with_base, run_preset, PresetName, DEFAULT_TRIALS};
use abm_calib::regime::{write_dynamic_log_csv, GenerationRule};
use abm_calib::report::generate_report;
use abm_calib::surrogate::write_heterogeneous_log_csv;
use abm_calib::wealth::{generate_validation, synthetic_assignment, synthetic_schedule, WealthModel};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

/// Calibrate dynamic and heterogeneous parameters of the wealth model.
#[derive(Debug, Parser)]
#[command(name = "abm-calib", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// JSON configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Independent trials for presets.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Average the synthetic-parameter runs into a validation CSV.
    GenerateValidation {
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Run one framework calibration.
    Calibrate {
        /// Validation CSV; generated from the synthetic parameters when omitted.
        #[arg(long)]
        validation: Option<PathBuf>,
        #[arg(long)]
        rule: Option<GenerationRule>,
        #[arg(long)]
        replications: Option<usize>,
        /// Continue from a snapshot written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run a named experiment over independent trials.
    RunPreset { name: PresetName },
    /// Compare methods found under a run directory.
    Report { run_dir: PathBuf },
}

fn load_config(g: &Global) -> Result<FrameworkConfig> {
    let mut cfg = match &g.config {
        Some(p) => FrameworkConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => FrameworkConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
        cfg.validation.seed = s;
    }
    Ok(cfg)
}

fn generate(g: &Global, replications: Option<usize>) -> Result<()> {
    let mut cfg = load_config(g)?;
    if let Some(r) = replications {
        cfg.validation.replications = r;
    }
    cfg.validate()?;
    let model = WealthModel::new(cfg.model.clone())?;
    let data = generate_validation(
        &model,
        &synthetic_schedule(cfg.model.horizon),
        &synthetic_assignment(cfg.model.num_agents),
        cfg.validation.replications,
        cfg.validation.seed,
    )?;
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from("validation.csv"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_validation(&out, &data)?;
    println!("wrote {} ({} stats x {} steps)", out.display(), data.trace.num_stats(), data.trace.horizon());
    Ok(())
}

fn calibrate(g: &Global, validation: Option<&Path>, rule: Option<GenerationRule>, replications: Option<usize>, resume: Option<&Path>) -> Result<()> {
    let mut cfg = load_config(g)?;
    if let Some(r) = rule {
        cfg.rule = r;
    }
    if let Some(r) = replications {
        cfg.replications = r;
    }
    cfg.validate()?;
    let model = WealthModel::new(cfg.model.clone())?;
    let data = match validation {
        Some(p) => read_validation(p).with_context(|| format!("reading validation {}", p.display()))?,
        None => generate_validation(
            &model,
            &synthetic_schedule(cfg.model.horizon),
            &synthetic_assignment(cfg.model.num_agents),
            cfg.validation.replications,
            cfg.validation.seed,
        )?,
    };
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from("calibration"));
    fs::create_dir_all(&out)?;
    let snapshot = out.join("state.json");
    let resumed = resume.map(CalibrationState::load).transpose()?;
    let res = run_framework_with(&model, &cfg, &data, &mut DefaultClusterer, Some(&snapshot), resumed)
        .with_context(|| format!("calibration stopped; resume from {}", snapshot.display()))?;
    write_trail_csv(&out.join("trail.csv"), &res.state.trail, &data.trace.names)?;
    write_best_params_csv(&out.join("best_params.csv"), &res.best_schedule, &res.best_assignment)?;
    res.report.write_csv(&out.join("report.csv"))?;
    if !res.state.dynamic_log.is_empty() {
        write_dynamic_log_csv(&out.join("dynamic_log.csv"), &res.state.dynamic_log)?;
    }
    if !res.state.heterogeneous_log.is_empty() {
        write_heterogeneous_log_csv(&out.join("heterogeneous_log.csv"), &res.state.heterogeneous_log, res.state.het.log.dim())?;
    }
    fs::write(out.join("config.json"), cfg.to_json()?)?;
    println!("total MAPE {:.6} at iteration {}", res.report.total_mape, res.state.trail[res.best_index].iter);
    println!("wrote {}", out.display());
    Ok(())
}

fn preset_run(g: &Global, name: PresetName) -> Result<()> {
    let base = load_config(g)?;
    let seed = base.seed;
    let trials = g.trials.unwrap_or(DEFAULT_TRIALS);
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(name.as_str()));
    let res = run_preset(&preset_with_base(name, base), trials, seed, Some(&out))?;
    println!("{:<24} {:<28} {:>12} {:>12}", "method", "metric", "mean", "sd");
    for a in &res.aggregates {
        println!("{:<24} {:<28} {:>12.6} {:>12.6}", a.method, a.metric, a.mean, a.sd);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn report(g: &Global, run_dir: &Path) -> Result<()> {
    if !run_dir.exists() {
        bail!("run directory {} does not exist", run_dir.display());
    }
    let out = g.out.clone().unwrap_or_else(|| run_dir.join("report"));
    let res = generate_report(run_dir, &out)?;
    println!("{:<24} {:<14} {:<24} {:>10} {:>10} {:>8} {:>10}", "method", "baseline", "metric", "mean", "base", "t", "p");
    for c in &res.comparisons {
        println!(
            "{:<24} {:<14} {:<24} {:>10.5} {:>10.5} {:>8.3} {:>10.4}",
            c.method, c.baseline, c.metric, c.method_mean, c.baseline_mean, c.t, c.p_value
        );
    }
    if res.comparisons.is_empty() {
        println!("no method/baseline pairs found among: {}", res.methods.join(", "));
    }
    for f in &res.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    let res = match &cli.command {
        Command::GenerateValidation { replications } => generate(g, *replications),
        Command::Calibrate {
            validation,
            rule,
            replications,
            resume,
        } => calibrate(g, validation.as_deref(), *rule, *replications, resume.as_deref()),
        Command::RunPreset { name } => preset_run(g, *name),
        Command::Report { run_dir } => report(g, run_dir),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
