//! Thin batch runner: `mhdlab <subcommand> <config.toml> [--out DIR]`.
//! All logic lives in the library; see the crate's `examples/` directory for
//! programmatic entry points.

use std::path::PathBuf;
use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() || args[0] == "--help" || args[0] == "-h" {
        eprintln!("{}", mhd_carleman::cli::usage());
        return ExitCode::from(if args.is_empty() { 2 } else { 0 });
    }
    let subcommand = args[0].as_str();
    let mut config: Option<PathBuf> = None;
    let mut out: Option<PathBuf> = None;
    let mut i = 1;
    while i < args.len() {
        match args[i].as_str() {
            "--out" => {
                if i + 1 >= args.len() {
                    eprintln!("--out needs a directory argument");
                    return ExitCode::from(2);
                }
                out = Some(PathBuf::from(&args[i + 1]));
                i += 2;
            }
            other if config.is_none() => {
                config = Some(PathBuf::from(other));
                i += 1;
            }
            other => {
                eprintln!("unexpected argument `{other}`\n{}", mhd_carleman::cli::usage());
                return ExitCode::from(2);
            }
        }
    }
    let Some(config) = config else {
        eprintln!("{}", mhd_carleman::cli::usage());
        return ExitCode::from(2);
    };
    match mhd_carleman::cli::run(subcommand, &config, out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mhdlab {subcommand}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
