//! `mirforge gradcheck`: finite-difference audit of every backward rule.

use clap::Args;
use mirforge::check::run_gradient_suite;

use crate::{InStage, StageError};

#[derive(Args)]
pub struct GradcheckArgs {
    /// Scale every analytic gradient by 1.01 before comparing, proving the
    /// checker catches a broken backward rule.
    #[arg(long)]
    pub corrupt: bool,
}

pub fn run(args: &GradcheckArgs) -> Result<i32, StageError> {
    let reports = run_gradient_suite(args.corrupt).stage("gradcheck")?;
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for report in &reports {
        println!(
            "{:<width$}  max rel err {:>9.3e}  {}",
            report.name,
            report.max_rel_err,
            if report.passed() { "ok" } else { "FAIL" },
        );
    }
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.name)
        .collect();
    if failed.is_empty() {
        Ok(0)
    } else {
        eprintln!("error: gradient check failed: {}", failed.join(", "));
        Ok(1)
    }
}
