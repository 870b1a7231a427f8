//! `empref report`

use std::path::{Path, PathBuf};

use empref::report::{
    read_per_example, render_csv, render_markdown, render_plotdata, MetricReportFile,
};

use crate::io_util::{open, read_to_string, write_string};
use crate::{CliError, CliResult, ReportArgs, ReportFormat};

/// The per-example path inside a report is relative to the report file.
pub fn resolve_per_example(report_path: &Path, report: &MetricReportFile) -> PathBuf {
    let p = PathBuf::from(&report.per_example_path);
    if p.is_absolute() {
        p
    } else {
        report_path
            .parent()
            .map(|d| d.join(&p))
            .unwrap_or(p)
    }
}

pub fn run(args: ReportArgs) -> CliResult {
    let report = MetricReportFile::from_json_str(&read_to_string(&args.input)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.input.display())))?;
    let rendered = match args.format {
        ReportFormat::Md => render_markdown(&report),
        ReportFormat::Csv => render_csv(&report)?,
        ReportFormat::Plotdata => {
            let per_example_path = resolve_per_example(&args.input, &report);
            let records = read_per_example(open(&per_example_path)?)?;
            render_plotdata(&records, &report.config.model_label)
        }
    };
    match &args.out {
        Some(path) => write_string(path, &rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}
