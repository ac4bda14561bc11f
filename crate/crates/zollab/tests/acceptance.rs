//! Runs every acceptance criterion at its stated tolerance and prints one
//! PASS/FAIL line per criterion. Exits non-zero if any criterion fails.
use std::process::ExitCode;

use zollab::suite::run_all;

fn main() -> ExitCode {
    let results = run_all(7);
    for c in &results {
        println!("{}", c.line());
    }
    let failed: Vec<_> = results.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    if results.len() != 10 || !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        return ExitCode::FAILURE;
    }
    println!("acceptance: all {} criteria passed", results.len());
    ExitCode::SUCCESS
}
