//! Every acceptance criterion at its stated tolerance, one line each, then
//! the same report with a corrupted boundary coefficient, which must fail.

use std::process::ExitCode;

use batchps::report::{compare, ComparisonReport, ReportOptions};
use batchps::ModelParams;

fn print(title: &str, report: &ComparisonReport) {
    println!("{title}");
    for c in report.criteria.iter().chain(&report.checks) {
        println!("{}", c.line());
    }
}

fn main() -> ExitCode {
    let mut ok = true;

    let opts = ReportOptions::new(ModelParams::new(0.5, 0.2).unwrap(), 20_261_014);
    let report = compare(&opts);
    print("acceptance criteria", &report);
    let failed: Vec<usize> = report.criteria.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    if report.criteria.len() != 10 || !failed.is_empty() || !report.checks.iter().all(|c| c.passed) {
        println!("FAILED: criteria {failed:?}");
        ok = false;
    }

    let mut opts = ReportOptions::new(ModelParams::new(0.5, 0.2).unwrap(), 7);
    opts.corrupt_e1 = Some(1.01);
    opts.sim_batches = 100_000;
    let report = compare(&opts);
    print("E_1(s, q) scaled by 1.01", &report);
    let detected = !report.passed && !report.criteria[2].passed && !report.checks[0].passed && !report.checks[1].passed;
    println!("[{}] corrupted boundary coefficient detected", if detected { "PASS" } else { "FAIL" });
    ok &= detected;

    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
