use std::fs;
use std::path::Path;

use effchan::info::{budget_report, DiscreteJoint, JointFile};

use crate::error::{CliError, CliResult};
use crate::output::{to_csv, to_json, Format};

/// Usable evidence, increments and both ceilings for a joint distribution
/// file. `n_calls` defaults to every call variable in the joint.
pub fn run(path: &Path, n_calls: Option<usize>, format: Format) -> CliResult<Vec<u8>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let file: JointFile = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let joint = DiscreteJoint::from_file(&file).map_err(CliError::validation)?;
    let n = n_calls.unwrap_or(joint.num_calls());
    let report =
        budget_report(&joint, n, file.types.as_deref()).map_err(CliError::validation)?;
    match format {
        Format::Json => to_json(&report),
        Format::Csv => to_csv(
            &["call", "increment", "cumulative", "h_y_given_x", "ceiling_parallel", "ceiling_sequential"],
            &report
                .increments
                .iter()
                .scan(0.0, |acc, d| {
                    *acc += d;
                    Some((*d, *acc))
                })
                .enumerate()
                .map(|(i, (d, cum))| {
                    vec![
                        (i + 1).to_string(),
                        d.to_string(),
                        cum.to_string(),
                        report.h_y_given_x.to_string(),
                        report.ceiling_parallel.to_string(),
                        report.ceiling_sequential.to_string(),
                    ]
                })
                .collect::<Vec<_>>(),
        ),
    }
}
