//! `aud`: acoustic unit discovery pipeline.

mod commands;
mod failure;
mod manifest;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use failure::{Failure, EXIT_USAGE};
use manifest::Settings;

#[derive(Parser, Debug)]
#[command(name = "aud", version, about = "Acoustic unit discovery with a Bayesian phone loop")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Flat `key = value` file supplying defaults for any option
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Seed for every random choice of the subcommand [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads [default: available parallelism]
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Also write the report to this file
    #[arg(long, global = true)]
    report: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus with known units, words and topics
    Synth(commands::SynthArgs),
    /// Train a phone-loop model with variational Bayes
    Train(commands::TrainArgs),
    /// Viterbi-decode features into unit tokens
    Decode(commands::DecodeArgs),
    /// Write unit or state posteriorgrams
    Postgram(commands::PostgramArgs),
    /// Estimate an LDA transform from first-pass state labels
    LdaEstimate(commands::LdaEstimateArgs),
    /// Splice and project features with an LDA transform
    LdaApply(commands::LdaApplyArgs),
    /// Self-trained LDA followed by a seeded second-pass model
    SecondPass(commands::SecondPassArgs),
    /// NMI between decoded tokens and a reference phone transcript
    EvalNmi(commands::EvalNmiArgs),
    /// Same-different average precision over word segments
    EvalSamediff(commands::EvalSamediffArgs),
    /// Cross-validated topic classification of bag-of-units documents
    DocClassify(commands::DocClassifyArgs),
    /// Repeated-bisection clustering of bag-of-units documents
    DocCluster(commands::DocClusterArgs),
    /// Summarize a saved model
    ModelInfo(commands::ModelInfoArgs),
}

fn run(cli: Cli) -> Result<Vec<(String, String)>, Failure> {
    let settings = Settings::load(cli.global.manifest.as_deref())?;
    let seed = settings.or(cli.global.seed, "seed", 0u64)?;
    if let Some(jobs) = settings.opt(cli.global.jobs, "jobs")? {
        if jobs == 0 {
            return Err(Failure::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::usage(format!("--jobs: {e}")))?;
    }
    let ctx = commands::Context { settings, seed };
    match cli.command {
        Command::Synth(a) => commands::synth(a, &ctx),
        Command::Train(a) => commands::train(a, &ctx),
        Command::Decode(a) => commands::decode(a, &ctx),
        Command::Postgram(a) => commands::postgram(a, &ctx),
        Command::LdaEstimate(a) => commands::lda_estimate(a, &ctx),
        Command::LdaApply(a) => commands::lda_apply(a, &ctx),
        Command::SecondPass(a) => commands::second_pass(a, &ctx),
        Command::EvalNmi(a) => commands::eval_nmi(a, &ctx),
        Command::EvalSamediff(a) => commands::eval_samediff(a, &ctx),
        Command::DocClassify(a) => commands::doc_classify(a, &ctx),
        Command::DocCluster(a) => commands::doc_cluster(a, &ctx),
        Command::ModelInfo(a) => commands::model_info(a, &ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE as u8) } else { ExitCode::SUCCESS };
        }
    };
    let report_path = cli.global.report.clone();
    match run(cli) {
        Ok(report) => {
            let text: String = report.iter().map(|(k, v)| format!("{k}\t{v}\n")).collect();
            print!("{text}");
            let _ = std::io::stdout().flush();
            if let Some(path) = report_path {
                if let Err(e) = std::fs::write(&path, &text) {
                    let f = Failure::io("write report", &path, e);
                    eprintln!("error: {f}");
                    return ExitCode::from(f.code as u8);
                }
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}
