//! Loading transcript stores and assembling the report bundle.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ols::{ols_fit, ols_incremental_r2, FeatureMatrix, RegressionReport};
use super::stats::{pearson_r, permutation_test_with, spearman_rho, PermutationReport};
use super::summary::{
    agents_to_match, boundary_classification, marginal_gains, summarize_runs, BoundaryReport,
    KStarMode, RunSummary, TranscriptEntry,
};
use super::AnalysisError;
use crate::exec::Execution;
use crate::harness::{Layer, WorkflowKind};
use crate::store::{embeddings_path, list_transcript_files, read_embeddings, read_transcripts};

#[derive(Debug, Clone, Default)]
pub struct LoadedStore {
    pub entries: Vec<TranscriptEntry>,
    pub warnings: Vec<String>,
}

/// Reads every transcript file in `dir` together with its sibling
/// embeddings file, when present.
pub fn load_store(dir: &Path) -> Result<LoadedStore, AnalysisError> {
    let mut out = LoadedStore::default();
    for path in list_transcript_files(dir)? {
        let transcripts = read_transcripts(&path)?;
        let emb_path = embeddings_path(&path);
        let mut by_task: Option<BTreeMap<String, BTreeMap<usize, Vec<f64>>>> = None;
        if emb_path.exists() {
            let mut map: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
            for rec in read_embeddings(&emb_path)? {
                let parsed = rec
                    .id
                    .rsplit_once(':')
                    .and_then(|(task, idx)| Some((task.to_string(), idx.parse::<usize>().ok()?)));
                match parsed {
                    Some((task, idx)) => {
                        map.entry(task).or_default().insert(idx, rec.vector);
                    }
                    None => out.warnings.push(format!(
                        "{}: ignoring embedding with malformed id {:?}",
                        emb_path.display(),
                        rec.id
                    )),
                }
            }
            by_task = Some(map);
        } else {
            out.warnings.push(format!(
                "{}: no embeddings file; K* columns will be absent",
                path.display()
            ));
        }
        for t in transcripts {
            let embeddings = by_task
                .as_ref()
                .map(|m| m.get(&t.task_id).cloned().unwrap_or_default());
            out.entries.push(TranscriptEntry {
                transcript: t,
                embeddings,
            });
        }
    }
    Ok(out)
}

/// Concatenates several stores; summaries recompute accuracy from the
/// merged task counts.
pub fn load_stores(dirs: &[PathBuf]) -> Result<LoadedStore, AnalysisError> {
    let mut out = LoadedStore::default();
    for d in dirs {
        let s = load_store(d)?;
        out.entries.extend(s.entries);
        out.warnings.extend(s.warnings);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct ReportOptions {
    pub kstar_mode: KStarMode,
    /// Encode layers as a single ordinal column instead of one-hot dummies.
    pub ordinal_layers: bool,
    pub shuffles: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            kstar_mode: KStarMode::PerQuestion,
            ordinal_layers: false,
            shuffles: 1000,
            seed: 0,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalGainRow {
    pub dataset: String,
    pub layer: Layer,
    pub workflow: WorkflowKind,
    pub n_agents: usize,
    pub delta_per_agent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRow {
    pub dataset: String,
    pub workflow: WorkflowKind,
    pub layer: Layer,
    pub baseline_n: usize,
    pub baseline_accuracy: f64,
    pub n_match: Option<usize>,
    pub accuracy_at_match: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r: f64,
    pub spearman: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kstar_mode: KStarMode,
    pub layer_encoding: String,
    pub summaries: Vec<RunSummary>,
    pub marginal_gains: Vec<MarginalGainRow>,
    pub agents_to_match: Vec<MatchRow>,
    pub boundary: BoundaryReport,
    pub kstar_fit: Option<LineFit>,
    pub permutation: Option<PermutationReport>,
    pub regression_k_star: Option<RegressionReport>,
    pub regression_components: Option<RegressionReport>,
    pub warnings: Vec<String>,
}

type Series = BTreeMap<(String, Layer, WorkflowKind), Vec<(usize, f64)>>;

fn accuracy_series(summaries: &[RunSummary]) -> Series {
    let mut series: Series = BTreeMap::new();
    for s in summaries {
        series
            .entry((s.dataset.clone(), s.layer, s.workflow))
            .or_default()
            .push((s.n_agents, s.accuracy));
    }
    series
}

/// Configuration-label features for the regression baseline. Levels absent
/// from `rows` and constant columns are dropped; the first present level of
/// each categorical is the reference.
fn config_features(rows: &[&RunSummary], ordinal_layers: bool) -> FeatureMatrix {
    let mut names: Vec<String> = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();

    if ordinal_layers {
        names.push("layer_ordinal".into());
        cols.push(rows.iter().map(|s| f64::from(s.layer.ordinal())).collect());
    } else {
        let levels: BTreeSet<Layer> = rows.iter().map(|s| s.layer).collect();
        for l in levels.iter().skip(1) {
            names.push(format!("layer_{l}"));
            cols.push(rows.iter().map(|s| f64::from(u8::from(s.layer == *l))).collect());
        }
    }
    let workflows: BTreeSet<WorkflowKind> = rows.iter().map(|s| s.workflow).collect();
    for w in workflows.iter().skip(1) {
        names.push(format!("workflow_{w}"));
        cols.push(rows.iter().map(|s| f64::from(u8::from(s.workflow == *w))).collect());
    }
    let datasets: BTreeSet<&str> = rows.iter().map(|s| s.dataset.as_str()).collect();
    for d in datasets.iter().skip(1) {
        names.push(format!("dataset_{d}"));
        cols.push(rows.iter().map(|s| f64::from(u8::from(s.dataset == *d))).collect());
    }
    names.push("n_agents".into());
    cols.push(rows.iter().map(|s| s.n_agents as f64).collect());

    let keep: Vec<usize> = (0..cols.len())
        .filter(|&j| cols[j].iter().any(|v| *v != cols[j][0]))
        .collect();
    FeatureMatrix {
        names: keep.iter().map(|&j| names[j].clone()).collect(),
        rows: (0..rows.len())
            .map(|i| keep.iter().map(|&j| cols[j][i]).collect())
            .collect(),
    }
}

fn regression(
    rows: &[&RunSummary],
    extra_names: &[&str],
    extra: impl Fn(&RunSummary) -> Vec<f64>,
    opts: &ReportOptions,
) -> Result<RegressionReport, AnalysisError> {
    let base = config_features(rows, opts.ordinal_layers);
    let extra = FeatureMatrix::new(
        extra_names.iter().map(|s| s.to_string()).collect(),
        rows.iter().map(|s| extra(s)).collect(),
    )?;
    let target: Vec<f64> = rows.iter().map(|s| s.accuracy).collect();
    ols_incremental_r2(&base, &extra, &target)
}

/// Builds every report table. Sections that the data cannot support are
/// left empty and explained in `warnings`.
pub fn build_report(store: &LoadedStore, opts: &ReportOptions) -> Result<Report, AnalysisError> {
    if store.entries.is_empty() {
        return Err(AnalysisError::EmptyStore);
    }
    let summaries = summarize_runs(&store.entries, opts.kstar_mode, opts.exec)?;
    let mut warnings = store.warnings.clone();
    let series = accuracy_series(&summaries);

    let mut gains = Vec::new();
    for ((dataset, layer, workflow), pts) in &series {
        if pts.len() < 2 {
            continue;
        }
        for (n, d) in marginal_gains(pts)? {
            gains.push(MarginalGainRow {
                dataset: dataset.clone(),
                layer: *layer,
                workflow: *workflow,
                n_agents: n,
                delta_per_agent: d,
            });
        }
    }

    let mut matches = Vec::new();
    for ((dataset, layer, workflow), pts) in &series {
        if *layer == Layer::L1 {
            continue;
        }
        let Some(base) = series.get(&(dataset.clone(), Layer::L1, *workflow)) else {
            continue;
        };
        let m = agents_to_match(base, pts)?;
        matches.push(MatchRow {
            dataset: dataset.clone(),
            workflow: *workflow,
            layer: *layer,
            baseline_n: m.baseline_n,
            baseline_accuracy: m.baseline_accuracy,
            n_match: m.n_match,
            accuracy_at_match: m.accuracy_at_match,
        });
    }
    if matches.is_empty() {
        warnings.push("agents-to-match needs an L1 series and at least one other layer".into());
    }

    let boundary = boundary_classification(&summaries);

    let with_k: Vec<&RunSummary> = summaries.iter().filter(|s| s.k_star.is_some()).collect();
    let xs: Vec<f64> = with_k.iter().filter_map(|s| s.k_star).collect();
    let ys: Vec<f64> = with_k.iter().map(|s| s.accuracy).collect();

    let kstar_fit = match (
        pearson_r(&xs, &ys),
        spearman_rho(&xs, &ys),
        FeatureMatrix::new(vec!["k_star".into()], xs.iter().map(|x| vec![*x]).collect())
            .and_then(|f| ols_fit(&f, &ys)),
    ) {
        (Ok(r), Ok(rho), Ok(fit)) => Some(LineFit {
            slope: fit.coefficients[0].1,
            intercept: fit.intercept,
            r,
            spearman: rho,
            n_points: xs.len(),
        }),
        (r, ..) => {
            warnings.push(format!(
                "K*-vs-accuracy fit skipped: {}",
                r.err().map_or_else(|| "degenerate data".into(), |e| e.to_string())
            ));
            None
        }
    };

    let permutation = match permutation_test_with(&xs, &ys, opts.shuffles, opts.seed, opts.exec) {
        Ok(p) => Some(p),
        Err(e) => {
            warnings.push(format!("permutation test skipped: {e}"));
            None
        }
    };

    let regression_k_star = match regression(&with_k, &["k_star"], |s| vec![s.k_star.unwrap_or(0.0)], opts) {
        Ok(r) => Some(r),
        Err(e) => {
            warnings.push(format!("K* regression skipped: {e}"));
            None
        }
    };
    let with_parts: Vec<&RunSummary> = summaries
        .iter()
        .filter(|s| s.k_star_c.is_some() && s.k_star_w.is_some())
        .collect();
    let regression_components = match regression(
        &with_parts,
        &["k_star_c", "k_star_w"],
        |s| vec![s.k_star_c.unwrap_or(0.0), s.k_star_w.unwrap_or(0.0)],
        opts,
    ) {
        Ok(r) => Some(r),
        Err(e) => {
            warnings.push(format!("K*_c/K*_w regression skipped: {e}"));
            None
        }
    };

    Ok(Report {
        kstar_mode: opts.kstar_mode,
        layer_encoding: if opts.ordinal_layers { "ordinal" } else { "one-hot" }.into(),
        summaries,
        marginal_gains: gains,
        agents_to_match: matches,
        boundary,
        kstar_fit,
        permutation,
        regression_k_star,
        regression_components,
        warnings,
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| AnalysisError::Io(e.to_string()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), AnalysisError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| AnalysisError::Io(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| AnalysisError::Io(format!("{}: {e}", path.display())))
}

pub const SUMMARY_HEADER: &[&str] = &[
    "dataset", "layer", "workflow", "n_agents", "rounds", "task_count", "correct_count",
    "invalid_count", "accuracy", "k_star", "k_star_c", "k_star_w", "mean_cosine", "kstar_mode",
];

/// Writes the bundle into `dir` and returns the files written.
pub fn write_report(dir: &Path, report: &Report) -> Result<Vec<PathBuf>, AnalysisError> {
    fs::create_dir_all(dir).map_err(|e| AnalysisError::Io(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    let mut emit = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };

    let mode = serde_json::to_value(report.kstar_mode)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default();
    write_csv(
        &emit("summaries.csv"),
        SUMMARY_HEADER,
        report
            .summaries
            .iter()
            .map(|s| {
                vec![
                    s.dataset.clone(),
                    s.layer.to_string(),
                    s.workflow.to_string(),
                    s.n_agents.to_string(),
                    s.rounds.to_string(),
                    s.task_count.to_string(),
                    s.correct_count.to_string(),
                    s.invalid_count.to_string(),
                    s.accuracy.to_string(),
                    opt(s.k_star),
                    opt(s.k_star_c),
                    opt(s.k_star_w),
                    opt(s.mean_cosine),
                    mode.clone(),
                ]
            })
            .collect(),
    )?;
    write_csv(
        &emit("accuracy_vs_n.csv"),
        &["dataset", "layer", "workflow", "n_agents", "accuracy"],
        report
            .summaries
            .iter()
            .map(|s| {
                vec![
                    s.dataset.clone(),
                    s.layer.to_string(),
                    s.workflow.to_string(),
                    s.n_agents.to_string(),
                    s.accuracy.to_string(),
                ]
            })
            .collect(),
    )?;
    write_csv(
        &emit("marginal_gains.csv"),
        &["dataset", "layer", "workflow", "n_agents", "delta_per_agent"],
        report
            .marginal_gains
            .iter()
            .map(|g| {
                vec![
                    g.dataset.clone(),
                    g.layer.to_string(),
                    g.workflow.to_string(),
                    g.n_agents.to_string(),
                    g.delta_per_agent.to_string(),
                ]
            })
            .collect(),
    )?;
    write_csv(
        &emit("agents_to_match.csv"),
        &[
            "dataset", "workflow", "layer", "baseline_n", "baseline_accuracy", "n_match",
            "accuracy_at_match",
        ],
        report
            .agents_to_match
            .iter()
            .map(|m| {
                vec![
                    m.dataset.clone(),
                    m.workflow.to_string(),
                    m.layer.to_string(),
                    m.baseline_n.to_string(),
                    m.baseline_accuracy.to_string(),
                    opt(m.n_match),
                    opt(m.accuracy_at_match),
                ]
            })
            .collect(),
    )?;
    write_csv(
        &emit("boundary.csv"),
        &["dataset", "layer", "workflow", "n_agents", "k_star_c", "k_star_w", "side", "tie"],
        report
            .boundary
            .rows
            .iter()
            .map(|b| {
                let side = serde_json::to_value(b.side)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default();
                vec![
                    b.dataset.clone(),
                    b.layer.to_string(),
                    b.workflow.to_string(),
                    b.n_agents.to_string(),
                    b.k_star_c.to_string(),
                    b.k_star_w.to_string(),
                    side,
                    b.tie.to_string(),
                ]
            })
            .collect(),
    )?;
    write_csv(
        &emit("kstar_vs_accuracy.csv"),
        &["dataset", "layer", "workflow", "n_agents", "k_star", "accuracy"],
        report
            .summaries
            .iter()
            .filter_map(|s| {
                Some(vec![
                    s.dataset.clone(),
                    s.layer.to_string(),
                    s.workflow.to_string(),
                    s.n_agents.to_string(),
                    s.k_star?.to_string(),
                    s.accuracy.to_string(),
                ])
            })
            .collect(),
    )?;
    write_json(&emit("permutation.json"), &report.permutation)?;
    write_json(
        &emit("regression.json"),
        &serde_json::json!({
            "layer_encoding": report.layer_encoding,
            "k_star": report.regression_k_star,
            "components": report.regression_components,
        }),
    )?;
    write_json(&emit("report.json"), report)?;
    Ok(written)
}
