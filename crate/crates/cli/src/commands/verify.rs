//! `empref verify`

use empref::report::{read_per_example, verify_report, MetricReportFile};

use crate::commands::report::resolve_per_example;
use crate::io_util::{open, read_to_string};
use crate::{CliError, CliResult, VerifyArgs};

pub fn run(args: VerifyArgs) -> CliResult {
    let report = MetricReportFile::from_json_str(&read_to_string(&args.report)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.report.display())))?;
    let per_example_path = resolve_per_example(&args.report, &report);
    let records = read_per_example(open(&per_example_path)?)?;
    let problems = verify_report(&report, &records);
    if problems.is_empty() {
        println!(
            "verify ok: aggregates recompute from {} per-example records",
            records.len()
        );
        Ok(())
    } else {
        for p in &problems {
            eprintln!("mismatch: {p}");
        }
        Err(CliError::Data(format!(
            "{} aggregate(s) failed verification",
            problems.len()
        )))
    }
}
