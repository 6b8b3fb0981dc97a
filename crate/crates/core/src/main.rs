use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use advmm::adversary::{AdversaryKind, AdversarySpec};
use advmm::checkpoint::Checkpoint;
use advmm::env::AgentKind;
use advmm::eval::{emit_csv, write_episode_dump, MarketMakerPolicy, ResultRow};
use advmm::pipeline::{self, PipelineConfig};
use advmm::selftest;

#[derive(Parser)]
#[command(name = "advmm", version, about = "Adversarial market-making simulator and trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON pipeline configuration; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Volatility: training σ for train commands, test σ for `evaluate`.
    #[arg(long)]
    vol: Option<f64>,
    #[arg(long, value_parser = parse_adversary)]
    adversary: Option<AdversaryKind>,
    /// Multiplies every training episode count.
    #[arg(long)]
    scale: Option<f64>,
}

fn parse_adversary(s: &str) -> Result<AdversaryKind, String> {
    s.parse().map_err(|e: advmm::Error| e.to_string())
}

fn parse_kind(s: &str) -> Result<AgentKind, String> {
    s.parse().map_err(|e: advmm::Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Train a strategic adversary against a fixed-offset market maker.
    TrainAdversary {
        #[command(flatten)]
        common: Common,
    },
    /// Train a market maker against a fixed, random or trained adversary.
    TrainMm {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_kind)]
        kind: AgentKind,
        /// Adversary checkpoint, required for strategic adversaries.
        #[arg(long)]
        adversary_ckpt: Option<PathBuf>,
        /// Always-quote checkpoint that prices the discrete agents' quotes.
        #[arg(long)]
        always_ckpt: Option<PathBuf>,
    },
    /// Evaluate a market-maker checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        adversary_ckpt: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Write one CSV row per episode to this file.
        #[arg(long)]
        dump_episodes: Option<PathBuf>,
    },
    /// Train and evaluate every cell of one results table.
    ReproduceTable {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(pipeline::TABLE_IDS))]
        table: String,
        /// Also write per-episode dumps for every cell.
        #[arg(long)]
        dump_episodes: bool,
    },
    /// Run the quick numerical checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(c: &Common) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    if let Some(a) = c.adversary {
        cfg.adversary = a;
    }
    if let Some(f) = c.scale {
        cfg = cfg.scaled(f)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn vol_tag(v: f64) -> String {
    format!("{v}").replace('.', "p")
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::TrainAdversary { common } => {
            let mut cfg = load_config(&common)?;
            if let Some(v) = common.vol {
                cfg.train_vol = v;
            }
            if !cfg.adversary.is_strategic() {
                bail!("--adversary must be one of a, b, k, all to train an adversary");
            }
            let trained = pipeline::train_adversary(&cfg)?;
            let dir = cfg.out_dir.join(format!("adversary-{}-train{}", cfg.adversary, vol_tag(cfg.train_vol)));
            trained.save(&dir)?;
            println!("adversary checkpoint written to {}", dir.display());
        }
        Command::TrainMm { common, kind, adversary_ckpt, always_ckpt } => {
            let mut cfg = load_config(&common)?;
            if let Some(v) = common.vol {
                cfg.train_vol = v;
            }
            let hash = cfg.hash();
            let adv_ck = adversary_ckpt.map(|p| Checkpoint::load_checked(&p, &hash)).transpose()?;
            if cfg.adversary.is_strategic() && adv_ck.is_none() {
                bail!("--adversary {} needs --adversary-ckpt", cfg.adversary);
            }
            let spec = pipeline::adversary_spec(&cfg, adv_ck.as_ref())?;
            let trained = match kind {
                AgentKind::Always => pipeline::train_always_mm(&cfg, &spec)?,
                _ => {
                    let quoter = match always_ckpt {
                        Some(p) => {
                            let ck = Checkpoint::load_checked(&p, &hash)?;
                            if ck.agent_kind()? != AgentKind::Always {
                                bail!("{} is not an always-quote checkpoint", p.display());
                            }
                            Some(ck.sac()?.policy.clone())
                        }
                        None => None,
                    };
                    pipeline::train_multiaction_mm(&cfg, &spec, quoter.as_ref(), kind)?
                }
            };
            let dir = cfg
                .out_dir
                .join(format!("mm-{kind}-{}-train{}", cfg.adversary, vol_tag(cfg.train_vol)));
            trained.save(&dir)?;
            println!("market-maker checkpoint written to {}", dir.display());
        }
        Command::Evaluate { common, checkpoint, adversary_ckpt, runs, episodes, dump_episodes } => {
            let mut cfg = load_config(&common)?;
            if let Some(v) = common.vol {
                cfg.test_vol = v;
            }
            if let Some(r) = runs {
                cfg.evaluation.runs = r;
            }
            if let Some(e) = episodes {
                cfg.evaluation.episodes = e;
            }
            cfg.validate()?;
            let hash = cfg.hash();
            let ck = Checkpoint::load_checked(&checkpoint, &hash)?;
            let policy = ck.mm_policy()?;
            let adversary = match adversary_ckpt {
                Some(p) => pipeline::adversary_spec(&cfg, Some(&Checkpoint::load_checked(&p, &hash)?))?,
                None if cfg.adversary.is_strategic() => bail!("--adversary {} needs --adversary-ckpt", cfg.adversary),
                None => AdversarySpec::new(cfg.adversary, None)?,
            };
            let ev = pipeline::evaluate_policy(&cfg, &policy, &adversary, cfg.test_vol)?;
            let r = &ev.report;
            println!(
                "wealth {:.4} ± {:.4}  sharpe {}  inventory {:.4} ± {:.4}  quoting {}  ({} runs x {} episodes)",
                r.wealth_mean,
                r.wealth_std,
                r.sharpe.map_or("undefined".to_string(), |s| format!("{s:.4}")),
                r.inventory_mean,
                r.inventory_std,
                r.quoting,
                r.runs,
                r.episodes_per_run
            );
            std::fs::create_dir_all(&cfg.out_dir)?;
            let row = ResultRow {
                table: "custom".into(),
                adversary: cfg.adversary,
                agent: policy.kind(),
                vol_train: ck.manifest.train_vol,
                vol_test: cfg.test_vol,
                report: ev.report.clone(),
                seed: cfg.seed,
            };
            let csv = cfg.out_dir.join("results.csv");
            emit_csv(&csv, &[row])?;
            println!("results written to {}", csv.display());
            if let Some(p) = dump_episodes {
                write_episode_dump(&p, &ev.episodes)?;
                println!("episode dump written to {}", p.display());
            }
        }
        Command::ReproduceTable { common, table, dump_episodes } => {
            let mut cfg = load_config(&common)?;
            if let Some(v) = common.vol {
                cfg.train_vol = v;
            }
            let rows = pipeline::reproduce_table(&cfg, &table, dump_episodes)?;
            for r in &rows {
                println!(
                    "{:<7} {:<8} train {:<5} test {:<5} {:.4}±{:.4}  sharpe {}  {}",
                    r.adversary.label(),
                    r.agent,
                    r.vol_train,
                    r.vol_test,
                    r.report.wealth_mean,
                    r.report.wealth_std,
                    r.report.sharpe.map_or("-".to_string(), |s| format!("{s:.4}")),
                    r.report.quoting
                );
            }
            println!("results written to {}", cfg.out_dir.join(&table).join("results.csv").display());
        }
        Command::Selftest { seed } => {
            let checks = selftest::run_all(seed)?;
            for c in &checks {
                println!("{c}");
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
