use std::path::Path;

use effchan::coverage::fit_alpha;
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::output::{to_csv, to_json, Format};

#[derive(Deserialize)]
struct Point {
    k: f64,
    recovered_fraction: f64,
}

/// Fits α to a CSV with header `k,recovered_fraction`.
pub fn run(path: &Path, format: Format) -> CliResult<Vec<u8>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let mut points = Vec::new();
    for (i, rec) in reader.deserialize::<Point>().enumerate() {
        // line 1 is the header
        let p = rec.map_err(|e| CliError::validation(format!("{}:{}: {e}", path.display(), i + 2)))?;
        points.push((p.k, p.recovered_fraction));
    }
    let fit = fit_alpha(&points).map_err(CliError::validation)?;
    match format {
        Format::Json => to_json(&fit),
        Format::Csv => to_csv(
            &["alpha_hat", "rss", "label"],
            &[vec![fit.alpha_hat.to_string(), fit.rss.to_string(), fit.label.clone()]],
        ),
    }
}
