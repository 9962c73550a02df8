use std::process::ExitCode;

use clap::Parser;
use epi_cli::args::{Cli, Command};
use epi_cli::stages;
use epi_cli::{CliError, Result};

fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    match cli.command {
        Command::GenScenes(a) => stages::gen_scenes(&a.resolve()?, argv),
        Command::GenPairs(a) => stages::gen_pairs(&a.resolve()?, argv),
        Command::GenPool(a) => stages::gen_pool(&a.resolve()?, argv),
        Command::Score(a) => stages::score(&a.resolve()?, argv),
        Command::Train(a) => {
            let out = stages::train(&a.resolve()?, argv)?;
            if let Some(last) = out.log.last() {
                println!("{}", serde_json::json!({ "steps": out.log.len(), "final_loss": last.loss }));
            }
            Ok(())
        }
        Command::Eval(a) => {
            let report = stages::eval(&a.resolve()?, argv)?;
            for s in &report.summaries {
                println!(
                    "{}",
                    serde_json::json!({
                        "scorer": s.scorer,
                        "maa_r": s.overall.maa_r,
                        "maa_t": s.overall.maa_t,
                        "maa_max": s.overall.maa_max,
                    })
                );
            }
            Ok(())
        }
        Command::Gradcheck(a) => {
            let lines = stages::gradcheck(&a.resolve()?)?;
            for l in &lines {
                println!("{}", serde_json::to_string(l)?);
            }
            match lines.iter().find(|l| !l.pass) {
                Some(l) => Err(CliError::Numeric(format!(
                    "{} gradient check: max relative error {:e}",
                    l.loss, l.max_rel_error
                ))),
                None => Ok(()),
            }
        }
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", serde_json::to_string(&e.report()).expect("error report serializes"));
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    // silent unless RUST_LOG is set, so stderr stays a single JSON error
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("off")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::Usage(e.to_string().trim_end().to_string())),
    };
    match epi_core::par::with_env_pool(|| run(cli, argv)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
