use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cogbias::pipeline::{self, PipelineError, RunManifest, RunOptions};
use cogbias::scoring::Dimension;
use cogbias::stats::CovariateTest;

/// Cognitive-bias evaluation harness.
#[derive(Parser)]
#[command(name = "cogbias", version)]
struct Cli {
    /// Run manifest (TOML).
    #[arg(short, long, global = true, default_value = "manifest.toml")]
    manifest: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check templates against the lexicon.
    Validate,
    /// Fill templates and render prompts at every level.
    Expand,
    /// Collect model responses.
    Run(RunArgs),
    /// Extract the implicit answer from every response.
    Extract,
    /// Classify responses and write resistance scores.
    Score {
        /// Grouping dimensions: model, bias, level, temperature.
        #[arg(long, value_delimiter = ',', default_value = "model,bias")]
        group_by: Vec<Dimension>,
    },
    /// Covariate significance tests per bias.
    Analyze {
        #[arg(long, value_parser = parse_test)]
        test: CovariateTest,
    },
    /// Write model/level/temperature by bias tables.
    Report,
    /// Every stage in order, reusing stored responses.
    Pipeline(RunArgs),
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Only these model ids.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Override every model's temperatures.
    #[arg(long, value_delimiter = ',')]
    temperatures: Option<Vec<f64>>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Keep stored responses and submit only missing ones.
    #[arg(long)]
    resume: bool,
    /// Answer with the seeded simulator instead of live endpoints.
    #[arg(long)]
    simulate: bool,
    /// Simulator profile (TOML); implies --simulate.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Simulator seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl From<RunArgs> for RunOptions {
    fn from(a: RunArgs) -> Self {
        RunOptions {
            models: a.models,
            temperatures: a.temperatures,
            parallelism: a.parallelism,
            resume: a.resume,
            simulate: a.simulate,
            profile: a.profile,
            seed: a.seed,
        }
    }
}

fn parse_test(s: &str) -> Result<CovariateTest, String> {
    s.parse()
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let manifest = RunManifest::load(&cli.manifest)?;
    match cli.command {
        Command::Validate => {
            let (corpus, _) = pipeline::cmd_validate(&manifest)?;
            println!("{} templates valid (corpus {})", corpus.templates.len(), &corpus.hash[..12]);
        }
        Command::Expand => {
            let s = pipeline::cmd_expand(&manifest)?;
            println!("{s}");
            println!("templates: {}, instances: {}, prompts: {}", s.templates, s.instances, s.prompts);
        }
        Command::Run(args) => {
            let s = pipeline::cmd_run(&manifest, &args.into())?;
            println!("submitted: {}, skipped: {}, failed: {}", s.submitted, s.skipped, s.failed);
        }
        Command::Extract => {
            let s = pipeline::cmd_extract(&manifest)?;
            println!(
                "extracted: {}, unrelated: {}, error records skipped: {}",
                s.responses, s.unrelated, s.skipped_errors
            );
        }
        Command::Score { group_by } => {
            let cs = pipeline::cmd_score(&manifest, &group_by)?;
            let rows = cogbias::scoring::resistance(&cs, &group_by);
            print!("{}", cogbias::scoring::resistance_csv(&rows, &group_by));
        }
        Command::Analyze { test } => {
            print!("{}", pipeline::cmd_analyze(&manifest, test)?);
        }
        Command::Report => {
            for p in pipeline::cmd_report(&manifest)? {
                println!("{}", p.display());
            }
        }
        Command::Pipeline(args) => {
            let s = pipeline::cmd_pipeline(&manifest, &args.into())?;
            println!("{}", s.expand);
            println!(
                "submitted: {}, skipped: {}, failed: {}; classified: {}",
                s.run.submitted, s.run.skipped, s.run.failed, s.classified
            );
            println!("outputs in {}", manifest.output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
