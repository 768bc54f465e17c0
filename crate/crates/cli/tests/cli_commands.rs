use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hedonic::preprocess::CorrMatrix;
use hedonic_cli::report::{beeswarm_svg, by_bucket, heatmap_svg, read_shap};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hedonic"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn html_fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures/html")
        .join(name)
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn assert_single_error_line(o: &Output, code: &str) {
    assert_eq!(o.status.code(), Some(1), "stderr: {}", stderr(o));
    let err = stderr(o);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with(&format!("error[{code}]: ")), "{err}");
}

#[test]
fn parse_directory_of_pages() {
    let tmp = tempfile::tempdir().unwrap();
    let pages = tmp.path().join("pages");
    fs::create_dir(&pages).unwrap();
    for f in ["listing_full.html", "listing_no_basement.html", "not_a_listing.html"] {
        fs::copy(html_fixture(f), pages.join(f)).unwrap();
    }

    let o = run_in(tmp.path(), &["parse", "--html-dir", "pages", "--out", "out"]);
    assert_single_error_line(&o, "E_PARSE");
    assert!(stderr(&o).contains("not_a_listing.html"));
    assert!(stderr(&o).contains("street-address"));

    let o = run_in(tmp.path(), &["parse", "--html-dir", "pages", "--out", "out", "--skip-invalid"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = hedonic::dataset::load_listings(tmp.path().join("out/listings.csv")).unwrap();
    assert_eq!(table.records.len(), 2);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/parse_report.json")).unwrap()).unwrap();
    assert_eq!(report["files"], 3);
    assert_eq!(report["parsed"], 2);
    assert_eq!(report["skipped"].as_array().unwrap().len(), 1);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/parse_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "parse");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn parse_empty_directory_warns() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("pages")).unwrap();
    let o = run_in(tmp.path(), &["parse", "--html-dir", "pages", "--out", "out"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("warning:"));
    let csv = fs::read_to_string(tmp.path().join("out/listings.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("sqft,property_type,"));
}

#[test]
fn parse_missing_inputs_name_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["parse", "--html-dir", "nowhere", "--out", "out"]);
    assert_single_error_line(&o, "E_IO");
    assert!(stderr(&o).contains("nowhere"));

    fs::create_dir(tmp.path().join("pages")).unwrap();
    let o = run_in(
        tmp.path(),
        &["parse", "--html-dir", "pages", "--rules", "missing_rules.toml", "--out", "out"],
    );
    assert_single_error_line(&o, "E_IO");
    assert!(stderr(&o).contains("missing_rules.toml"));

    fs::write(tmp.path().join("bad.toml"), "this is = = not toml").unwrap();
    let o = run_in(tmp.path(), &["parse", "--html-dir", "pages", "--rules", "bad.toml", "--out", "out"]);
    assert_single_error_line(&o, "E_SCHEMA");
    assert!(stderr(&o).contains("bad.toml"), "{}", stderr(&o));
}

#[test]
fn unknown_model_lists_valid_names() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["train", "--model", "xgboost", "--out", "out"]);
    assert_single_error_line(&o, "E_PARAM");
    for name in ["linear", "svr", "tree", "forest", "gbt"] {
        assert!(stderr(&o).contains(name), "{}", stderr(&o));
    }
}

#[test]
fn report_rejects_wrong_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("results.csv"), "model,year,rmse,mae\nlinear,2018,1.00,1.00\n").unwrap();
    fs::copy(fixture("report/correlation.csv"), out.join("correlation.csv")).unwrap();
    fs::copy(fixture("report/shap.csv"), out.join("shap.csv")).unwrap();
    let o = run_in(tmp.path(), &["report", "--out", "out"]);
    assert_single_error_line(&o, "E_SCHEMA");
    assert!(stderr(&o).contains("r_square"), "{}", stderr(&o));
}

#[test]
fn config_file_and_flags_combine() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("run.toml"), "seed = 11\nout_dir = \"from_config\"\n").unwrap();
    let o = run_in(tmp.path(), &["synthetic", "--rows", "20", "--config", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = fs::read(tmp.path().join("from_config/listings.csv")).unwrap();
    let o = run_in(tmp.path(), &["synthetic", "--rows", "20", "--config", "run.toml", "--out", "flag"]);
    assert!(o.status.success());
    assert_eq!(fs::read(tmp.path().join("flag/listings.csv")).unwrap(), a);
    let o = run_in(tmp.path(), &["synthetic", "--rows", "20", "--config", "run.toml", "--seed", "12", "--out", "other"]);
    assert!(o.status.success());
    assert_ne!(fs::read(tmp.path().join("other/listings.csv")).unwrap(), a);

    fs::write(tmp.path().join("typo.toml"), "sed = 1\n").unwrap();
    let o = run_in(tmp.path(), &["synthetic", "--config", "typo.toml"]);
    assert_single_error_line(&o, "E_PARAM");
}

const SMALL_GRIDS: &str = r#"{
  "linear": [{}],
  "tree": {"max_depth": [4, 6], "min_samples_leaf": [5]},
  "gbt": {"n_rounds": [40], "max_depth": [3], "learning_rate": [0.2]}
}"#;

fn evaluate_run(dir: &Path) {
    fs::write(dir.join("grids.json"), SMALL_GRIDS).unwrap();
    let steps: [&[&str]; 3] = [
        &["synthetic", "--rows", "400", "--seed", "3", "--out", "out"],
        &["clean", "--seed", "3", "--out", "out"],
        &["evaluate", "--seed", "3", "--out", "out", "--grids", "grids.json", "--models", "linear,tree,gbt"],
    ];
    for args in steps {
        let o = run_in(dir, args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    }
}

fn without_timestamp(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

#[test]
fn evaluate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    evaluate_run(a.path());
    evaluate_run(b.path());
    let out_a = a.path().join("out");
    let out_b = b.path().join("out");
    for f in ["results.csv", "eval_report.json", "cleaned.csv"] {
        assert_eq!(fs::read(out_a.join(f)).unwrap(), fs::read(out_b.join(f)).unwrap(), "{f}");
    }
    let mut models: Vec<_> = fs::read_dir(out_a.join("models"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    models.sort();
    assert_eq!(models.len(), 12);
    for m in &models {
        assert_eq!(
            fs::read(out_a.join("models").join(m)).unwrap(),
            fs::read(out_b.join("models").join(m)).unwrap()
        );
    }
    for m in ["synthetic", "clean", "evaluate"] {
        let name = format!("{m}_manifest.json");
        assert_eq!(without_timestamp(&out_a.join(&name)), without_timestamp(&out_b.join(&name)));
    }
    let results = fs::read_to_string(out_a.join("results.csv")).unwrap();
    assert!(results.starts_with("model,year,rmse,mae,r_square\n"));
    assert_eq!(results.lines().count(), 13);
}

fn check_golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("{} missing; rerun with UPDATE_GOLDEN=1", path.display()));
    assert!(expected == actual, "{name} differs from the golden file");
}

#[test]
fn heatmap_matches_golden() {
    let corr = CorrMatrix::read_csv(fs::File::open(fixture("report/correlation.csv")).unwrap()).unwrap();
    check_golden("heatmap.svg", &heatmap_svg(&corr));
}

#[test]
fn beeswarm_matches_golden() {
    let shap = read_shap(fs::File::open(fixture("report/shap.csv")).unwrap()).unwrap();
    let groups = by_bucket(&shap);
    assert_eq!(groups.len(), 1);
    let (bucket, records) = &groups[0];
    check_golden("shap_2018.svg", &beeswarm_svg(bucket, records));
}
