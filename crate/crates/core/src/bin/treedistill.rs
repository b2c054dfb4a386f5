use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use treedistill::experiments::{self, Experiment, ExperimentConfig, Report, ReportFormat};
use treedistill::teacher::checkpoint;

#[derive(Parser)]
#[command(
    name = "treedistill",
    version,
    about = "Distill neural-network teachers into regression trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured teacher and save its checkpoint.
    TrainTeacher(Common),
    /// Write the teacher's training-set logits as CSV.
    ExtractLogits {
        #[command(flatten)]
        common: Common,
        /// Destination file (default: the logit cache path in the output directory).
        #[arg(long)]
        logits: Option<PathBuf>,
    },
    /// Compare student, gini and entropy trees over a list of depths.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated depths, overriding the config.
        #[arg(long, value_delimiter = ',')]
        depths: Option<Vec<usize>>,
        /// Fit students on these logits instead of the teacher's.
        #[arg(long)]
        logits: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
    /// Compare student and gini trees grown without a depth limit.
    Unbounded {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        logits: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
    /// Render a saved JSON report.
    Report {
        /// Report written by `sweep` or `unbounded`.
        report: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
        /// Output file; prints to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        Ok(cfg)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_report(report: &Report, dir: &Path, stem: &str, format: ReportFormat) -> Result<()> {
    let json = dir.join(format!("{stem}.json"));
    report.save_json(&json)?;
    let table = dir.join(format!("{stem}.{}", format.extension()));
    report.emit(format, &table)?;
    print!("{}", report.render(format));
    info!("wrote {} and {}", json.display(), table.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainTeacher(common) => {
            let cfg = common.load()?;
            let data = cfg.dataset.load()?;
            let (net, history) = experiments::train_teacher(&cfg, &data.train)?;
            create_dir(&cfg.out_dir)?;
            let path = cfg.checkpoint_path();
            checkpoint::save(&net, &path)?;
            for e in &history {
                info!(
                    "epoch {}: loss {:.4}, train accuracy {:.4}",
                    e.epoch, e.mean_loss, e.train_accuracy
                );
            }
            let acc = net.accuracy(&data.test)?;
            println!("{}\ttest_accuracy={acc:.4}", path.display());
        }
        Command::ExtractLogits { common, logits } => {
            let cfg = common.load()?;
            let out_dir = cfg.out_dir.clone();
            let exp = Experiment::prepare(cfg, None)?;
            let path = match logits {
                Some(p) => p,
                None => out_dir.join(format!("logits-{}.csv", &checkpoint::fingerprint(exp.teacher())[..12])),
            };
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                create_dir(parent)?;
            }
            exp.logits().save_csv(&path)?;
            println!("{}\t{}", path.display(), exp.logits().content_hash());
        }
        Command::Sweep {
            common,
            depths,
            logits,
            format,
        } => {
            let mut cfg = common.load()?;
            if let Some(d) = depths {
                cfg.depths = d;
                cfg.validate()?;
            }
            let depths = cfg.depths.clone();
            let out_dir = cfg.out_dir.clone();
            let exp = Experiment::prepare(cfg, logits.as_deref())?;
            let (report, students) = exp.depth_sweep(&depths)?;
            create_dir(&out_dir)?;
            for (d, s) in depths.iter().zip(&students) {
                s.save(out_dir.join(format!("student-depth-{d}.tree")))?;
            }
            write_report(&report, &out_dir, "sweep", format)?;
        }
        Command::Unbounded { common, logits, format } => {
            let cfg = common.load()?;
            let out_dir = cfg.out_dir.clone();
            let exp = Experiment::prepare(cfg, logits.as_deref())?;
            let (report, student) = exp.unbounded()?;
            create_dir(&out_dir)?;
            student.save(out_dir.join("student-unbounded.tree"))?;
            write_report(&report, &out_dir, "unbounded", format)?;
        }
        Command::Report { report, format, out } => {
            let r = Report::load_json(&report)?;
            if r.rows.is_empty() {
                bail!("{} has no rows", report.display());
            }
            match out {
                Some(path) => r.emit(format, path)?,
                None => print!("{}", r.render(format)),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
