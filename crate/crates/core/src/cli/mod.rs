//! `nat` command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or config error,
//! 3 numeric failure. Every error is reported on one stderr line shaped like
//! `error[<category>]: <message>`.

pub mod check;
pub mod config;
pub mod train;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;

use crate::data::{gen_split, mix_multi, read_dataset, write_dataset, Utterance, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{error_rate, export_emission_probs, render_trace, write_emission_csv};
use crate::network::checkpoint::Checkpoint;
use crate::numerics::Rng;

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "nat", version, about = "Online sequence transducer trained with policy gradients")]
pub struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (file for `mix`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Checkpoint to resume from or evaluate.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Worker threads for sample-parallel work; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model.
    Train,
    /// Greedy-decode a dataset and report the token error rate.
    Eval {
        /// Dataset to score; defaults to the configured dev split.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Score the references against themselves.
        #[arg(long, hide = true)]
        self_reference: bool,
    },
    /// Print the emission trace of one utterance and export its emission probabilities.
    Trace {
        #[arg(long)]
        utterance: String,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        chars_per_step: usize,
    },
    /// Generate synthetic train and dev splits.
    Gen,
    /// Mix two datasets at a fixed proportion.
    Mix {
        primary: PathBuf,
        secondary: PathBuf,
        #[arg(long)]
        proportion: f64,
        /// Independent pairings to concatenate; 1 keeps a single fixed pairing.
        #[arg(long, default_value_t = 1)]
        pairings: usize,
    },
    /// Run the verification battery.
    Check {
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

/// Non-error outcomes that still map to a nonzero exit.
enum Outcome {
    Done,
    ChecksFailed(String),
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite { .. } => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let first = e.to_string();
            eprintln!("error[usage]: {}", one_line(first.lines().next().unwrap_or("bad arguments").trim_start_matches("error: ")));
            return EXIT_USAGE;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("NAT_LOG", "info")).try_init();
    if cli.threads > 0 {
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match dispatch(&cli) {
        Ok(Outcome::Done) => EXIT_OK,
        Ok(Outcome::ChecksFailed(names)) => {
            eprintln!("error[check]: failed checks: {names}");
            EXIT_CHECK_FAILED
        }
        Err(e) => {
            let msg = e.to_string();
            let msg = msg.strip_prefix("config: ").unwrap_or(&msg);
            eprintln!("error[{}]: {}", e.category(), one_line(msg));
            exit_code(&e)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.gen.task.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn require_file(p: &Path, what: &str) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} does not exist", p.display())))
    }
}

fn load_checkpoint(cli: &Cli) -> Result<Checkpoint> {
    let p = cli
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("--checkpoint is required for this command".into()))?;
    require_file(p, "checkpoint")?;
    Checkpoint::load(p)
}

fn dataset_or_dev(data: &Option<PathBuf>, cfg: &RunConfig) -> Result<Vec<Utterance>> {
    let p = data
        .clone()
        .or_else(|| cfg.data.dev.clone())
        .ok_or_else(|| Error::Config("no dataset given and data.dev is not set".into()))?;
    require_file(&p, "dataset")?;
    read_dataset(p)
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Train => {
            let cfg = load_config(cli)?;
            if let Some(p) = &cli.checkpoint {
                require_file(p, "checkpoint")?;
            }
            let sum = train::run_training(&cfg, cli.checkpoint.as_deref())?;
            println!(
                "finished at step {}; dev PER {}; metrics {}",
                sum.final_step,
                sum.last_dev_per.map_or("n/a".into(), |p| format!("{p:.4}")),
                sum.metrics.display()
            );
            Ok(Outcome::Done)
        }
        Command::Eval { data, self_reference } => cmd_eval(cli, data, *self_reference),
        Command::Trace {
            utterance,
            data,
            chars_per_step,
        } => cmd_trace(cli, utterance, data, *chars_per_step),
        Command::Gen => cmd_gen(cli),
        Command::Mix {
            primary,
            secondary,
            proportion,
            pairings,
        } => {
            require_file(primary, "dataset")?;
            require_file(secondary, "dataset")?;
            let out = cli
                .out
                .as_ref()
                .ok_or_else(|| Error::Config("--out is required for mix".into()))?;
            let p = read_dataset(primary)?;
            let s = read_dataset(secondary)?;
            let mixed = mix_multi(&p, &s, *proportion, *pairings, cli.seed.unwrap_or(0))?;
            write_dataset(&mixed, out)?;
            println!("wrote {} utterances to {}", mixed.len(), out.display());
            Ok(Outcome::Done)
        }
        Command::Check { inject_fault } => {
            let seed = cli.seed.unwrap_or_else(|| {
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map_or(0, |d| d.as_nanos() as u64)
            });
            println!("verification battery, seed {seed}");
            let results = check::run_checks(&check::CheckOptions {
                seed,
                inject_fault: *inject_fault,
            });
            print!("{}", check::format_table(&results));
            let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
            if failed.is_empty() {
                Ok(Outcome::Done)
            } else {
                Ok(Outcome::ChecksFailed(failed.join(",")))
            }
        }
    }
}

fn cmd_eval(cli: &Cli, data: &Option<PathBuf>, self_reference: bool) -> Result<Outcome> {
    let cfg = load_config(cli)?;
    let utts = dataset_or_dev(data, &cfg)?;
    let ckpt = load_checkpoint(cli)?;
    let trainer = train::Trainer::with_params(&cfg, ckpt.to_params()?, &[], &utts)?;
    let episodes = trainer.dev_episodes();
    let (report, hyps): (_, Vec<Vec<usize>>) = if self_reference {
        let refs: Vec<Vec<usize>> = episodes.iter().map(|e| e.targets.clone()).collect();
        (
            crate::eval::score(&refs, &refs, &crate::eval::CollapseMap::identity(ckpt.to_params()?.config().vocab_size))?,
            refs,
        )
    } else {
        let r = trainer.decode(episodes)?;
        (r.report, r.hyps.into_iter().map(|h| h.tokens).collect())
    };
    let vocab = cfg.data.vocab.as_ref().map(Vocabulary::load).transpose()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("eval.csv");
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "id,ref_len,substitutions,insertions,deletions,error_rate,hypothesis")?;
    for ((u, (c, len)), h) in utts.iter().zip(&report.per_utterance).zip(&hyps) {
        let text = match &vocab {
            Some(v) => v.render(h),
            None => h.iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            u.id,
            len,
            c.substitutions,
            c.insertions,
            c.deletions,
            error_rate(c.distance, *len),
            text
        )?;
    }
    w.flush()?;
    println!(
        "PER {:.6} (S {} I {} D {} over {} tokens); per-utterance report {}",
        report.error_rate,
        report.substitutions,
        report.insertions,
        report.deletions,
        report.reference_len,
        path.display()
    );
    Ok(Outcome::Done)
}

fn cmd_trace(cli: &Cli, id: &str, data: &Option<PathBuf>, cps: usize) -> Result<Outcome> {
    let cfg = load_config(cli)?;
    let utts = dataset_or_dev(data, &cfg)?;
    let utt = utts
        .iter()
        .find(|u| u.id == id)
        .ok_or_else(|| Error::Config(format!("utterance {id} not found")))?;
    let params = load_checkpoint(cli)?.to_params()?;
    let ep = utt.to_episode(cfg.data.stack)?;
    let (traj, rows) = export_emission_probs(&params, &ep, &mut Rng::new(cfg.seed, 0x7ace))?;
    println!("{}", render_trace(&traj, cps)?);
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join(format!("trace-{id}.csv"));
    let mut w = BufWriter::new(File::create(&path)?);
    write_emission_csv(&rows, &mut w)?;
    w.flush()?;
    info!("emission probabilities written to {}", path.display());
    Ok(Outcome::Done)
}

fn cmd_gen(cli: &Cli) -> Result<Outcome> {
    let cfg = load_config(cli)?;
    let g = &cfg.gen;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let train = gen_split(&g.task, g.train_count, 0)?;
    let dev = gen_split(&g.task, g.dev_count, 1)?;
    write_dataset(&train, cfg.output_dir.join("train.natd"))?;
    write_dataset(&dev, cfg.output_dir.join("dev.natd"))?;
    Vocabulary::synthetic(g.task.vocab_size).save(cfg.output_dir.join("vocab.txt"))?;
    println!(
        "wrote {} train and {} dev utterances to {}",
        train.len(),
        dev.len(),
        cfg.output_dir.display()
    );
    Ok(Outcome::Done)
}
