use std::path::Path;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Arg, ArgAction, ArgMatches};

use zollab::commands::{self, is_inconclusive};
use zollab::config::{self, Settings, COMMANDS, COMMON};
use zollab::output::resolve_out_dir;

fn flag(name: &str) -> String {
    name.replace('_', "-")
}

fn cli() -> clap::Command {
    let mut app = clap::Command::new("zollab")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Systolic and capacity computations for contact forms on the three-sphere")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for c in COMMANDS {
        let mut sub = clap::Command::new(c.name).about(c.about).arg(
            Arg::new("config").long("config").value_name("FILE").help("flat key = value file; flags override it"),
        );
        for k in c.keys.iter().chain(COMMON) {
            let mut help = k.help.to_string();
            if let Some(d) = k.default {
                help.push_str(&format!(" [default: {d}]"));
            }
            sub = sub.arg(Arg::new(k.name).long(flag(k.name)).value_name("VALUE").help(help).allow_hyphen_values(true).action(ArgAction::Set));
        }
        app = app.subcommand(sub);
    }
    app
}

fn settings(name: &str, m: &ArgMatches) -> Result<Settings> {
    let cmd = config::command(name).expect("subcommand comes from the schema");
    let mut pairs = match m.get_one::<String>("config") {
        Some(p) => config::read_file(Path::new(p))?,
        None => Vec::new(),
    };
    for k in cmd.keys.iter().chain(COMMON) {
        if let Some(v) = m.get_one::<String>(k.name) {
            pairs.push((k.name.to_string(), v.clone()));
        }
    }
    Settings::new(name, &pairs)
}

fn run(name: &str, m: &ArgMatches) -> Result<commands::Outcome> {
    let s = settings(name, m)?;
    let dir = resolve_out_dir(s.raw("out"));
    let outcome = commands::run(&s, &dir)?;
    println!("output: {}", dir.display());
    Ok(outcome)
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (name, m) = matches.subcommand().expect("subcommand required");
    match run(name, m) {
        Ok(o) => {
            for line in &o.summary {
                println!("{line}");
            }
            if o.status == commands::Status::Inconclusive {
                eprintln!("result: inconclusive");
            }
            ExitCode::from(o.status.exit_code())
        }
        Err(e) if is_inconclusive(&e) => {
            eprintln!("inconclusive: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_builds_a_valid_cli() {
        cli().debug_assert();
    }
}
