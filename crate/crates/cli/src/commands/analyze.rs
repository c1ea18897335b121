use std::path::{Path, PathBuf};

use effchan::analysis::{build_report, load_stores, write_report, KStarMode, ReportOptions};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::output::to_json;

pub struct AnalyzeArgs {
    pub stores: Vec<PathBuf>,
    pub pooled: bool,
    pub ordinal_layers: bool,
    pub shuffles: usize,
    pub seed: u64,
}

#[derive(Serialize)]
struct Written {
    files: Vec<PathBuf>,
    summaries: usize,
    warnings: Vec<String>,
}

/// Writes the report bundle into `out_dir` (default: `report/` inside the
/// first store) and returns a short JSON receipt.
pub fn run(args: &AnalyzeArgs, out_dir: Option<&Path>) -> CliResult<Vec<u8>> {
    for s in &args.stores {
        if !s.is_dir() {
            return Err(CliError::validation(format!("{} is not a directory", s.display())));
        }
    }
    let store = load_stores(&args.stores).map_err(CliError::validation)?;
    if store.entries.is_empty() {
        return Err(CliError::validation("store contains no transcripts"));
    }
    let opts = ReportOptions {
        kstar_mode: if args.pooled {
            KStarMode::Pooled
        } else {
            KStarMode::PerQuestion
        },
        ordinal_layers: args.ordinal_layers,
        shuffles: args.shuffles,
        seed: args.seed,
        ..ReportOptions::default()
    };
    let report = build_report(&store, &opts).map_err(CliError::validation)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| args.stores[0].join("report"));
    let files = write_report(&dir, &report).map_err(CliError::backend)?;
    to_json(&Written {
        files,
        summaries: report.summaries.len(),
        warnings: report.warnings,
    })
}
