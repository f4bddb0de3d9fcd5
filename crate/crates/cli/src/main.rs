use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use coachnet::env::EnvKind;
use coachnet::harness::{
    compare_runs, evaluate_checkpoint, run_dir, run_selftest, run_stage1, run_stage2, ExperimentConfig, Mode, EVAL_HEADER,
};

#[derive(Parser)]
#[command(name = "coachnet", version, about = "Failure-predictor guided adversarial sampling experiments")]
struct Cli {
    /// Experiment config (key=value lines). Defaults to the built-in TiltPole setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run a single training seed instead of the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,

    /// Config override, e.g. `--set sampler.alpha=2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Threshold training, sequence harvest and predictor training.
    Stage1,
    /// Stage-2 training from the stage-1 policy, then checkpoint evaluation.
    Stage2 {
        #[arg(long)]
        mode: Mode,
    },
    /// Evaluate one policy checkpoint on the paired evaluation set.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Aggregate VMC and ADV runs into comparison.csv and SVG plots.
    Compare {
        /// Compare one explicit pair of run directories instead of the seed list.
        #[arg(long, requires = "adv")]
        vmc: Option<PathBuf>,
        #[arg(long, requires = "vmc")]
        adv: Option<PathBuf>,
    },
    /// Quick invariant checks.
    Selftest,
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::for_env(EnvKind::TiltPole),
    };
    for kv in &cli.overrides {
        let Some((k, v)) = kv.split_once('=') else {
            return Err(coachnet::Error::Config(format!("override `{kv}` is not KEY=VALUE")).into());
        };
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn seeds(cli: &Cli, cfg: &ExperimentConfig) -> Vec<u64> {
    cli.seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s])
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Command::Selftest = cli.command {
        let results = run_selftest();
        let mut failed = 0;
        for r in &results {
            println!("{} {} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            failed += usize::from(!r.passed);
        }
        if failed > 0 {
            bail!("{failed} of {} checks failed", results.len());
        }
        return Ok(());
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Stage1 => {
            for seed in seeds(cli, &cfg) {
                let r = run_stage1(&cfg, seed, &cli.out).with_context(|| format!("stage1, seed {seed}"))?;
                println!(
                    "seed {seed}: threshold at age {} ({} episodes), harvested {} ({} failed), subsample {} ({} failed)",
                    r.threshold.ctx.age_timesteps,
                    r.threshold.episodes,
                    r.harvested,
                    r.harvested_failures,
                    r.subsample_size,
                    r.subsample_failures
                );
                for (name, rep) in [("primary", &r.primary), ("ablation", &r.ablation)] {
                    if let Some(h) = rep {
                        println!(
                            "  {name}: auc {:.3}, mean p failed {:.3}, success {:.3}",
                            h.auc, h.mean_failed, h.mean_success
                        );
                    }
                }
            }
        }
        Command::Stage2 { mode } => {
            for seed in seeds(cli, &cfg) {
                let dir = run_stage2(&cfg, seed, &cli.out, *mode).with_context(|| format!("stage2 {mode}, seed {seed}"))?;
                println!("seed {seed}: wrote {}", dir.display());
            }
        }
        Command::Eval { checkpoint } => {
            let row = evaluate_checkpoint(&cfg, checkpoint)?;
            println!("{EVAL_HEADER}\n{}", row.to_csv());
        }
        Command::Compare { vmc, adv } => {
            let (pairs, dest) = match (vmc, adv) {
                (Some(v), Some(a)) => (vec![("pair".to_string(), v.clone(), a.clone())], cli.out.join("compare")),
                _ => (
                    seeds(cli, &cfg)
                        .into_iter()
                        .map(|s| (format!("seed-{s}"), run_dir(&cli.out, s, Mode::Vmc), run_dir(&cli.out, s, Mode::Adv)))
                        .collect(),
                    cli.out.join("compare"),
                ),
            };
            let cmp = compare_runs(&pairs, &dest)?;
            print!("{}", cmp.summary_text());
            println!("wrote {}", dest.display());
        }
        Command::Selftest => unreachable!(),
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<coachnet::Error>())
        .map_or(1, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
