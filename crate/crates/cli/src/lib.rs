//! Command-line driver: TOML configuration, subcommand dispatch and the
//! output manifest.

pub mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Arg, ArgAction, ArgMatches};

use crate::commands::{dispatch, CliError};
use crate::config::{keys_for, qualified, Command};

/// Environment variable giving the worker thread count.
pub const THREADS_ENV: &str = "FLATGRAV_THREADS";

const EXIT_CODES: &str = "\
Exit codes:
  0  success, all checks passed
  1  a check failed or the computation did not converge
  2  usage error: bad configuration, missing inputs or unwritable output";

/// Help text listing every configuration key `command` reads.
pub fn keys_help(command: Command) -> String {
    let mut s = String::from("Configuration keys:\n");
    let keys: Vec<_> = keys_for(command).collect();
    let width = keys.iter().map(|k| qualified(k).len()).max().unwrap_or(0);
    for k in keys {
        let _ = writeln!(s, "  {:width$}  {} (default: {})", qualified(k), k.help, k.default);
    }
    let _ = write!(s, "\nRequired sections: {}\n\n{EXIT_CODES}", command.sections().join(", "));
    s
}

pub fn build_cli() -> clap::Command {
    let mut cli = clap::Command::new("flatgrav")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Steady states and stability of flat self-gravitating systems")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .after_help(format!(
            "Each subcommand reads a TOML file given with --config; see `flatgrav <command> --help` for its keys.\n\
             Set {THREADS_ENV} to fix the number of worker threads.\n\n{EXIT_CODES}"
        ));
    for command in Command::ALL {
        cli = cli.subcommand(
            clap::Command::new(command.name())
                .about(command.about())
                .arg(
                    Arg::new("config")
                        .short('c')
                        .long("config")
                        .value_name("FILE")
                        .value_parser(clap::value_parser!(PathBuf))
                        .required(true)
                        .action(ArgAction::Set)
                        .help("TOML configuration file"),
                )
                .after_help(keys_help(command)),
        );
    }
    cli
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, found `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure {n} threads: {e}")))
}

fn run_matches(matches: &ArgMatches) -> Result<i32, CliError> {
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let command = Command::from_name(name).expect("registered subcommand");
    let path = sub.get_one::<PathBuf>("config").expect("required");
    configure_threads()?;
    let outcome = dispatch(command, path)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    println!(
        "{}: {} (output in {})",
        command,
        if outcome.passed { "ok" } else { "checks failed" },
        outcome.output_dir.display()
    );
    Ok(outcome.exit_code())
}

/// Parses `args` and runs the selected subcommand, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match build_cli().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run_matches(&matches) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::KEYS;

    #[test]
    fn cli_definition_is_consistent() {
        build_cli().debug_assert();
    }

    #[test]
    fn every_key_appears_in_some_help() {
        let all: String = Command::ALL.into_iter().map(keys_help).collect();
        for k in KEYS {
            assert!(all.contains(&qualified(k)), "{}", qualified(k));
        }
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["flatgrav", "solve"]), 2);
        assert_eq!(run(["flatgrav", "frobnicate"]), 2);
        assert_eq!(run(["flatgrav", "solve", "-c", "/nonexistent/x.toml"]), 2);
    }
}
