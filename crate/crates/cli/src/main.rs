mod args;
mod commands;
mod config;
mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;
use std::process::ExitCode;

use clap::{CommandFactory, Parser};
use leakaudit::corpus_io::{file_digest, sha256_hex};
use leakaudit::par;
use serde_json::json;

use args::{Cli, Format};
use commands::Failure;
use manifest::Manifest;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Invalid(format!("cli: {}: {e}", path.display()))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn run(argv: Vec<OsString>) -> Result<(), Failure> {
    let command_line = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join(" ");
    let merged = config::merge(argv).map_err(Failure::Usage)?;
    let cli = Cli::try_parse_from(&merged.argv).unwrap_or_else(|e| e.exit());
    let Some(out) = cli.global.out.clone() else {
        Cli::command()
            .error(clap::error::ErrorKind::MissingRequiredArgument, "--out <OUT> is required")
            .exit()
    };
    std::fs::create_dir_all(&out).map_err(|e| io_failure(&out, e))?;

    let seed = cli.global.seed;
    let threads = cli.global.threads.map(usize::from);
    let outcome = par::with_threads(threads, || commands::run(&cli.command, seed, &out))?;

    let mut inputs = outcome.inputs.clone();
    inputs.extend(merged.config.clone());
    for (name, _) in &outcome.files {
        let target = out.join(name);
        if let Some(p) = inputs.iter().find(|p| same_file(p, &target)) {
            return Err(Failure::Invalid(format!("cli: output {} would overwrite input {}", target.display(), p.display())));
        }
    }
    let mut input_digests = BTreeMap::new();
    for p in &inputs {
        input_digests.insert(p.display().to_string(), file_digest(p)?);
    }

    let mut output_digests = outcome.written.clone();
    for (name, bytes) in &outcome.files {
        let path = out.join(name);
        std::fs::write(&path, bytes).map_err(|e| io_failure(&path, e))?;
        output_digests.insert(name.clone(), sha256_hex(bytes));
    }

    let effective = json!({ "command": &cli.command, "seed": seed });
    let manifest = Manifest {
        command: command_line,
        config_digest: sha256_hex(effective.to_string().as_bytes()),
        input_digests,
        output_digests,
        seed,
        tool_version: format!("leakaudit {}", env!("CARGO_PKG_VERSION")),
        timestamp: manifest::timestamp(),
        details: json!({
            "subcommand": cli.command.name(),
            "stage_seed": commands::stage_seed(seed, &cli.command),
            "result": outcome.report,
        }),
    };
    manifest.write(&out).map_err(|e| io_failure(&out, e))?;

    match cli.global.format {
        Format::Table => print!("{}", outcome.table),
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&manifest.details["result"]).expect("JSON values serialize")
        ),
    }
    Ok(())
}
