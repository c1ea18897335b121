use effchan::coverage::{simulate_coverage_with, CoverageParams};
use effchan::exec::Execution;

use crate::error::{CliError, CliResult};
use crate::output::{to_json, Format};

pub struct SimulateArgs {
    pub alpha: f64,
    pub m: usize,
    pub h: f64,
    pub k_max: u32,
    pub trials: usize,
    pub seed: u64,
    pub sequential: bool,
}

pub fn run(args: &SimulateArgs, format: Format) -> CliResult<Vec<u8>> {
    let params = CoverageParams::uniform(args.m, args.h, args.alpha, args.k_max, args.seed)
        .map_err(CliError::validation)?;
    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let curve = simulate_coverage_with(&params, args.trials, exec).map_err(CliError::validation)?;
    match format {
        Format::Json => to_json(&curve),
        Format::Csv => {
            let mut buf = Vec::new();
            curve.write_csv(&mut buf).map_err(CliError::validation)?;
            Ok(buf)
        }
    }
}
