//! One function per subcommand. Each checks its input paths before doing
//! any work, writes its artifacts under the output directory, and finishes
//! with `<command>_manifest.json`. The returned list names every file
//! written, manifest last.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hedonic::dataset::{self, YearBucket};
use hedonic::eval::{self, EvalConfig};
use hedonic::explain::{self, ShapSummary};
use hedonic::listing_parser::{self, ListingParser, ParsedPage};
use hedonic::models::{self, Family, HyperParams, Model};
use hedonic::preprocess::{self, Dataset};
use hedonic::synthetic;
use hedonic::{Error, Result};
use serde_json::json;

use crate::config::{require_existing, RunConfig};
use crate::manifest::Manifest;
use crate::report;

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn finish(
    cfg: &RunConfig,
    command: &str,
    settings: serde_json::Value,
    inputs: &[PathBuf],
    mut outputs: Vec<PathBuf>,
) -> Result<Vec<PathBuf>> {
    let manifest = Manifest::new(command, settings, inputs, &outputs)?;
    let path = cfg.out_dir.join(format!("{command}_manifest.json"));
    manifest.write(&path)?;
    outputs.push(path);
    Ok(outputs)
}

pub fn model_path(dir: &Path, family: Family, bucket: YearBucket) -> PathBuf {
    dir.join(format!("{}_{}.json", family.name(), bucket.label()))
}

fn html_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_html = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("html") || e.eq_ignore_ascii_case("htm"));
        if is_html && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub html_dir: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Record pages that are not listings in the report instead of failing.
    pub skip_invalid: bool,
}

/// Listing pages in a directory to the listings CSV plus `parse_report.json`.
pub fn cmd_parse(cfg: &RunConfig, opts: &ParseOptions) -> Result<Vec<PathBuf>> {
    let html_dir = opts
        .html_dir
        .clone()
        .or_else(|| cfg.inputs.html_dir.clone())
        .ok_or_else(|| Error::Param("no html directory given (--html-dir)".into()))?;
    let rules = opts.rules.clone().or_else(|| cfg.inputs.rules.clone());
    let mut required = vec![html_dir.as_path()];
    if let Some(r) = &rules {
        required.push(r);
    }
    require_existing(&required)?;
    let parser = match &rules {
        Some(r) => ListingParser::from_path(r)?,
        None => ListingParser::default(),
    };
    let output = opts.output.clone().unwrap_or_else(|| cfg.listings_path());
    ensure_dir(&cfg.out_dir)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }

    let files = html_files(&html_dir)?;
    if files.is_empty() {
        eprintln!("warning: no .html files in {}", html_dir.display());
    }
    let mut pages: Vec<ParsedPage> = Vec::new();
    let mut skipped = Vec::new();
    for f in &files {
        match parser.parse_listing_file(f) {
            Ok(p) => pages.push(p),
            Err(e @ Error::Parse(_)) if opts.skip_invalid => skipped.push(e.to_string()),
            Err(e) => return Err(e),
        }
    }
    listing_parser::export_csv(&pages, &output)?;

    let mut missing: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &pages {
        for m in &p.missing_fields {
            *missing.entry(m.as_str()).or_default() += 1;
        }
    }
    let report_path = cfg.out_dir.join("parse_report.json");
    write_json(
        &report_path,
        &json!({
            "files": files.len(),
            "parsed": pages.len(),
            "skipped": skipped,
            "missing_fields": missing,
        }),
    )?;
    let mut inputs = files.clone();
    inputs.extend(rules);
    finish(cfg, "parse", cfg.settings(), &inputs, vec![output, report_path])
}

fn keep_buckets(cfg: &RunConfig, mut buckets: BTreeMap<YearBucket, Dataset>) -> BTreeMap<YearBucket, Dataset> {
    buckets.retain(|b, _| cfg.buckets.contains(b));
    buckets
}

fn load_cleaned(cfg: &RunConfig, path: &Path) -> Result<BTreeMap<YearBucket, Dataset>> {
    let buckets = keep_buckets(cfg, preprocess::read_cleaned_file(path)?);
    if buckets.is_empty() {
        return Err(Error::Data(format!(
            "{} holds no rows for the selected buckets",
            path.display()
        )));
    }
    Ok(buckets)
}

/// Listings CSV to the cleaned, encoded CSV plus `clean_report.json`.
pub fn cmd_clean(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let input = cfg.listings_path();
    require_existing(&[&input])?;
    let table = dataset::load_listings(&input)?;
    let validation = dataset::validate(&table.records);
    let (buckets, summary) = preprocess::clean_listings(&table.records)?;
    let buckets = keep_buckets(cfg, buckets);

    ensure_dir(&cfg.out_dir)?;
    let cleaned = cfg.cleaned_path();
    preprocess::write_cleaned_file(&cleaned, &buckets)?;
    let report_path = cfg.out_dir.join("clean_report.json");
    write_json(
        &report_path,
        &json!({
            "summary": summary,
            "unreadable_rows": table.rejected,
            "missing_counts": validation.missing_counts,
            "rejected_rows": validation.rejected_rows,
        }),
    )?;
    finish(cfg, "clean", cfg.settings(), &[input], vec![cleaned, report_path])
}

/// Per-bucket averages table and the pooled correlation matrix.
pub fn cmd_stats(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let input = cfg.cleaned_path();
    require_existing(&[&input])?;
    let buckets = load_cleaned(cfg, &input)?;
    let table = preprocess::summary_stats(&buckets)?;
    let pooled = Dataset::concat(buckets.values())?;
    let corr = preprocess::correlation_matrix(&pooled)?;

    ensure_dir(&cfg.out_dir)?;
    let stats_path = cfg.out_dir.join("stats.csv");
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    fs::write(&stats_path, buf).map_err(|e| Error::io(&stats_path, e))?;
    let corr_path = cfg.correlation_path();
    let mut buf = Vec::new();
    corr.write_csv(&mut buf)?;
    fs::write(&corr_path, buf).map_err(|e| Error::io(&corr_path, e))?;
    finish(cfg, "stats", cfg.settings(), &[input], vec![stats_path, corr_path])
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub model: String,
    /// JSON object of hyperparameters; defaults when absent.
    pub params: Option<String>,
    /// Grid-search the configured grid on the train split first.
    pub tune: bool,
}

/// Fits one family per bucket on the train split and saves the models.
pub fn cmd_train(cfg: &RunConfig, opts: &TrainOptions) -> Result<Vec<PathBuf>> {
    let family: Family = opts.model.parse()?;
    let fixed = match &opts.params {
        Some(text) => {
            let v: serde_json::Value = serde_json::from_str(text)
                .map_err(|e| Error::Param(format!("--params is not valid json: {e}")))?;
            Some(HyperParams::from_value(family, v)?)
        }
        None => None,
    };
    let input = cfg.cleaned_path();
    let mut inputs = vec![input.clone()];
    inputs.extend(cfg.grids.clone().filter(|_| opts.tune));
    require_existing(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    let grids = cfg.grid_spec()?;
    let buckets = load_cleaned(cfg, &input)?;

    let dir = cfg.models_dir();
    ensure_dir(&dir)?;
    let mut outputs = Vec::new();
    let mut chosen = BTreeMap::new();
    for (bucket, ds) in &buckets {
        let (train, _) = eval::train_test_split(ds, cfg.test_fraction, cfg.seed)?;
        let params = match (&fixed, opts.tune) {
            (Some(p), _) => p.clone(),
            (None, true) => {
                eval::grid_search(family, &grids.for_family(family), &train, cfg.folds, cfg.seed)?.best
            }
            (None, false) => family.default_params(),
        };
        let model = Model::fit(&params, &train, cfg.seed)?;
        let path = model_path(&dir, family, *bucket);
        models::save_model(&model, &path)?;
        chosen.insert(bucket.label(), params.to_value());
        outputs.push(path);
    }
    let mut settings = cfg.settings();
    settings["model"] = json!(family.name());
    settings["params"] = json!(chosen);
    finish(cfg, "train", settings, &inputs, outputs)
}

/// Tunes, refits and scores every selected family on every bucket.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let input = cfg.cleaned_path();
    let mut inputs = vec![input.clone()];
    inputs.extend(cfg.grids.clone());
    require_existing(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    let grids = cfg.grid_spec()?;
    let buckets = load_cleaned(cfg, &input)?;
    let config = EvalConfig {
        families: cfg.families.clone(),
        grids: grids.clone(),
        test_fraction: cfg.test_fraction,
        folds: cfg.folds,
        seed: cfg.seed,
    };
    let run = eval::run_evaluation(&buckets, &config)?;

    ensure_dir(&cfg.out_dir)?;
    let results = cfg.results_path();
    run.report.write_csv_file(&results)?;
    let report_path = cfg.out_dir.join("eval_report.json");
    write_json(&report_path, &serde_json::to_value(&run.report)?)?;
    let dir = cfg.models_dir();
    ensure_dir(&dir)?;
    let mut outputs = vec![results, report_path];
    for ((family, bucket), model) in &run.models {
        let path = model_path(&dir, *family, *bucket);
        models::save_model(model, &path)?;
        outputs.push(path);
    }
    let mut settings = cfg.settings();
    let searched: BTreeMap<&str, serde_json::Value> = cfg
        .families
        .iter()
        .map(|f| {
            let grid: Vec<_> = grids.for_family(*f).iter().map(HyperParams::to_value).collect();
            (f.name(), json!(grid))
        })
        .collect();
    settings["grid"] = json!(searched);
    settings["chosen"] = json!(run
        .report
        .cells
        .iter()
        .map(|c| json!({"model": c.family.name(), "year": c.bucket.label(), "params": c.params}))
        .collect::<Vec<_>>());
    finish(cfg, "evaluate", settings, &inputs, outputs)
}

/// Shapley attributions of the saved models on each bucket's test split.
pub fn cmd_explain(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let input = cfg.cleaned_path();
    let dir = cfg.models_dir();
    let family = cfg.explain_model;
    let buckets = {
        require_existing(&[&input])?;
        load_cleaned(cfg, &input)?
    };
    let model_files: Vec<PathBuf> = buckets.keys().map(|b| model_path(&dir, family, *b)).collect();
    require_existing(&model_files.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;

    let mut summaries: Vec<(YearBucket, ShapSummary)> = Vec::new();
    for ((bucket, ds), path) in buckets.iter().zip(&model_files) {
        let model = models::load_model(path)?;
        let (train, test) = eval::train_test_split(ds, cfg.test_fraction, cfg.seed)?;
        let background = explain::sample_background(&train, cfg.background_size, cfg.seed);
        let rows = explain::select_rows(&test, cfg.explain_budget, cfg.seed);
        summaries.push((*bucket, explain::shap_summary(&model, &rows, &background)?));
    }

    ensure_dir(&cfg.out_dir)?;
    let shap = cfg.shap_path();
    let summary = cfg.out_dir.join("shap_summary.csv");
    explain::write_shap_files(&summaries, &shap, &summary)?;
    let mut inputs = vec![input];
    inputs.extend(model_files);
    finish(cfg, "explain", cfg.settings(), &inputs, vec![shap, summary])
}

/// Heatmap, one beeswarm per bucket, and a text summary under `report/`.
pub fn cmd_report(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let results_path = cfg.results_path();
    let corr_path = cfg.correlation_path();
    let shap_path = cfg.shap_path();
    require_existing(&[&results_path, &corr_path, &shap_path])?;
    let results = report::read_results(report::open(&results_path)?)?;
    let corr = preprocess::CorrMatrix::read_csv(report::open(&corr_path)?)?;
    let shap = report::read_shap(report::open(&shap_path)?)?;

    let dir = cfg.out_dir.join("report");
    ensure_dir(&dir)?;
    let mut outputs = Vec::new();
    let heatmap = dir.join("heatmap.svg");
    write_text(&heatmap, &report::heatmap_svg(&corr))?;
    outputs.push(heatmap);
    for (bucket, records) in report::by_bucket(&shap) {
        let path = dir.join(format!("shap_{bucket}.svg"));
        write_text(&path, &report::beeswarm_svg(&bucket, &records))?;
        outputs.push(path);
    }
    let text = dir.join("summary.txt");
    write_text(&text, &report::summary_text(&results, &corr, &shap))?;
    outputs.push(text);
    finish(cfg, "report", cfg.settings(), &[results_path, corr_path, shap_path], outputs)
}

/// Writes seeded surrogate listings to the listings CSV.
pub fn cmd_synthetic(cfg: &RunConfig, rows: usize) -> Result<Vec<PathBuf>> {
    ensure_dir(&cfg.out_dir)?;
    let output = cfg.listings_path();
    dataset::write_listings(&output, &synthetic::generate(rows, cfg.seed))?;
    let mut settings = cfg.settings();
    settings["rows"] = json!(rows);
    finish(cfg, "synthetic", settings, &[], vec![output])
}
