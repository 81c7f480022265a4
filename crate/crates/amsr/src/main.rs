use std::path::PathBuf;
use std::process::ExitCode;

use amsr::commands::{self, EvalOptions, Method};
use amsr::error::{AppError, EXIT_IO};
use amsr::runconfig::RunConfig;
use amsr_core::OpKind;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "amsr", version, about = "Attention + multi-scale fusion super-resolution toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Bicubic,
    Model,
}

#[derive(Subcommand)]
enum Command {
    /// Write modcropped HR copies and bicubic LR images for a manifest.
    Degrade {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        scale: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score bicubic or model upscaling on a manifest (luma PSNR/SSIM).
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        scale: usize,
        #[arg(long, value_enum, default_value = "bicubic")]
        method: MethodArg,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// JSON report path; the text table goes next to it as .txt.
        #[arg(long)]
        report: Option<PathBuf>,
        /// LR tile side for model inference.
        #[arg(long, default_value_t = 48)]
        tile: usize,
    },
    /// Train from a key=value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from a checkpoint and its .state file.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Super-resolve one PNG with a checkpoint.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long, default_value_t = 48)]
        tile: usize,
    },
    /// Train the four branch variants and print the comparison table.
    Ablate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check every backward pass against central finite differences.
    Gradcheck {
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Print the per-channel RGB mean of a manifest.
    Mean {
        #[arg(long)]
        manifest: PathBuf,
        /// Also write `mean = r,g,b` to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<i32, AppError> {
    match cli.command {
        Command::Degrade {
            manifest,
            scale,
            out_dir,
        } => {
            let out = commands::degrade(&manifest, scale, &out_dir)?;
            for (_, lr) in &out.written {
                println!("{}", lr.display());
            }
            for (path, err) in &out.failures {
                eprintln!("error: {}: {err}", path.display());
            }
            Ok(if out.failures.is_empty() { 0 } else { EXIT_IO })
        }
        Command::Eval {
            manifest,
            scale,
            method,
            checkpoint,
            report,
            tile,
        } => {
            let method = match (method, checkpoint) {
                (MethodArg::Bicubic, _) => Method::Bicubic,
                (MethodArg::Model, Some(checkpoint)) => Method::Model { checkpoint },
                (MethodArg::Model, None) => {
                    return Err(AppError::Usage("--method model requires --checkpoint".into()));
                }
            };
            let opts = EvalOptions {
                manifest,
                scale,
                method,
                tile,
                report,
            };
            let r = commands::eval(&opts)?;
            let json = amsr::report::to_json(&r)?;
            let value = serde_json::from_str(&json).map_err(|e| AppError::Failed(e.to_string()))?;
            print!("{}", amsr::report::render_eval(&value));
            Ok(0)
        }
        Command::Train { config, resume } => {
            let cfg = RunConfig::load(&config)?;
            for w in commands::train_warnings(&cfg) {
                eprintln!("{w}");
            }
            let out = commands::train(&cfg, resume.as_deref())?;
            if let Some(last) = out.steps.last() {
                println!("epoch {} iter {} loss {}", last.epoch + 1, last.iter, last.loss);
            }
            for c in &out.checkpoints {
                println!("{}", c.display());
            }
            Ok(0)
        }
        Command::Infer {
            checkpoint,
            input,
            output,
            tile,
        } => {
            let sr = commands::infer(&checkpoint, &input, &output, tile)?;
            println!("{} ({}x{})", output.display(), sr.width(), sr.height());
            Ok(0)
        }
        Command::Ablate { config } => {
            let cfg = RunConfig::load(&config)?;
            let (_, table, path) = commands::ablate(&cfg)?;
            print!("{table}");
            println!("report: {}", path.display());
            Ok(0)
        }
        Command::Gradcheck { inject_fault } => {
            let fault = match inject_fault {
                None => None,
                Some(name) => Some(
                    OpKind::from_name(&name).ok_or_else(|| AppError::Usage(format!("unknown op `{name}`")))?,
                ),
            };
            let report = commands::gradcheck(fault)?;
            for r in &report.results {
                println!(
                    "{} {:<20} {:<28} {:<22} max rel err {:.3e} (tol {:.0e}, {} probes, {} skipped)",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.case,
                    r.input,
                    r.max_rel_err,
                    r.tol,
                    r.probes,
                    r.skipped
                );
            }
            match report
                .failures()
                .max_by(|a, b| (a.max_rel_err / a.tol).total_cmp(&(b.max_rel_err / b.tol)))
            {
                None => {
                    println!("all {} checks passed", report.results.len());
                    Ok(0)
                }
                Some(worst) => Err(AppError::Failed(format!(
                    "{} of {} checks failed; worst offender {} ({}, {}) rel err {:.3e}",
                    report.failures().count(),
                    report.results.len(),
                    worst.name,
                    worst.case,
                    worst.input,
                    worst.max_rel_err
                ))),
            }
        }
        Command::Mean { manifest, out } => {
            let stats = commands::mean(&manifest)?;
            println!("{}", commands::format_mean(&stats));
            if let Some(path) = out {
                let [r, g, b] = stats.mean_rgb;
                std::fs::write(&path, format!("mean = {r},{g},{b}\n")).map_err(|e| AppError::io(&path, e))?;
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = amsr::init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
