//! Runs every acceptance criterion and prints one pass/fail line each.

use std::process::ExitCode;

use yule_core::acceptance::{run_all, CRITERIA};

fn main() -> ExitCode {
    let outcomes = run_all(20_240_601, |o| println!("{}", o.line()));
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.criterion.id).collect();
    println!("{} of {} criteria passed", CRITERIA.len() - failed.len(), CRITERIA.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
