//! Plain SVG and text renderings of the results, correlation and Shapley
//! tables. Output is a pure function of the input tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use hedonic::explain::rank_by_mean;
use hedonic::preprocess::CorrMatrix;
use hedonic::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub model: String,
    pub year: String,
    pub rmse: f64,
    pub mae: f64,
    pub r_square: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapRecord {
    pub bucket: String,
    pub row: usize,
    pub feature: String,
    pub value: f64,
    pub phi: f64,
}

fn columns(headers: &csv::StringRecord, required: &[&str], file: &str) -> Result<Vec<usize>> {
    required
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| Error::Schema(format!("missing column `{name}` in {file}")))
        })
        .collect()
}

fn number(cell: &str, column: &str, file: &str) -> Result<f64> {
    cell.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{file}: column `{column}` has non-numeric value {cell:?}")))
}

pub fn read_results(reader: impl Read) -> Result<Vec<ResultRow>> {
    const FILE: &str = "results csv";
    let mut rdr = csv::Reader::from_reader(reader);
    let idx = columns(rdr.headers()?, &["model", "year", "rmse", "mae", "r_square"], FILE)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let cell = |k: usize| rec.get(idx[k]).unwrap_or("");
        let r2 = cell(4).trim();
        out.push(ResultRow {
            model: cell(0).trim().to_string(),
            year: cell(1).trim().to_string(),
            rmse: number(cell(2), "rmse", FILE)?,
            mae: number(cell(3), "mae", FILE)?,
            r_square: if r2 == "undefined" { None } else { Some(number(r2, "r_square", FILE)?) },
        });
    }
    Ok(out)
}

pub fn read_shap(reader: impl Read) -> Result<Vec<ShapRecord>> {
    const FILE: &str = "shap csv";
    let mut rdr = csv::Reader::from_reader(reader);
    let idx = columns(rdr.headers()?, &["bucket", "row", "feature", "value", "phi"], FILE)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let cell = |k: usize| rec.get(idx[k]).unwrap_or("");
        out.push(ShapRecord {
            bucket: cell(0).trim().to_string(),
            row: number(cell(1), "row", FILE)? as usize,
            feature: cell(2).trim().to_string(),
            value: number(cell(3), "value", FILE)?,
            phi: number(cell(4), "phi", FILE)?,
        });
    }
    Ok(out)
}

pub fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

type Rgb = (u8, u8, u8);

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    let t = t.clamp(0.0, 1.0);
    let mix = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * t).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn hex((r, g, b): Rgb) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

const NEG: Rgb = (0x21, 0x66, 0xac);
const MID: Rgb = (0xf7, 0xf7, 0xf7);
const POS: Rgb = (0xb2, 0x18, 0x2b);

/// Blue at −1, near-white at 0, red at +1.
pub fn diverging(v: f64) -> String {
    if v < 0.0 {
        hex(lerp(MID, NEG, -v))
    } else {
        hex(lerp(MID, POS, v))
    }
}

const LOW: Rgb = (0x00, 0x8b, 0xfb);
const HIGH: Rgb = (0xff, 0x00, 0x52);

pub fn heatmap_svg(corr: &CorrMatrix) -> String {
    let n = corr.names.len();
    let cell = 24.0;
    let left = 150.0;
    let top = 150.0;
    let grid = cell * n as f64;
    let width = left + grid + 90.0;
    let height = top + grid.max(220.0) + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, "<title>Correlation heatmap</title>");
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    for (i, a) in corr.names.iter().enumerate() {
        for (j, b) in corr.names.iter().enumerate() {
            let v = corr.values[i][j];
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{cell}" height="{cell}" fill="{}"><title>{} / {}: {v:.3}</title></rect>"#,
                left + cell * j as f64,
                top + cell * i as f64,
                diverging(v),
                escape(a),
                escape(b)
            );
        }
    }
    for (i, name) in corr.names.iter().enumerate() {
        let c = cell * i as f64 + cell / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            left - 4.0,
            top + c,
            escape(name)
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate({:.1},{:.1}) rotate(-90)" dominant-baseline="middle">{}</text>"#,
            left + c,
            top - 4.0,
            escape(name)
        );
    }
    let lx = left + grid + 30.0;
    let steps = 20;
    let step_h = 200.0 / steps as f64;
    for k in 0..steps {
        let v = 1.0 - 2.0 * (k as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.1}" y="{:.1}" width="14" height="{step_h:.1}" fill="{}"/>"#,
            top + step_h * k as f64,
            diverging(v)
        );
    }
    for (label, y) in [("1", 0.0), ("0", 100.0), ("-1", 200.0)] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" dominant-baseline="middle">{label}</text>"#,
            lx + 18.0,
            top + y
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Feature order for one bucket: descending mean |φ|, ties alphabetical.
pub fn feature_ranking(records: &[&ShapRecord]) -> Vec<String> {
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = sums.entry(r.feature.as_str()).or_default();
        e.0 += r.phi.abs();
        e.1 += 1;
    }
    let names: Vec<String> = sums.keys().map(|s| s.to_string()).collect();
    let means: Vec<f64> = sums.values().map(|(s, c)| s / *c as f64).collect();
    rank_by_mean(&names, &means)
}

fn tick_label(v: f64) -> String {
    let r = v.round();
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r:.0}")
    }
}

/// One row per feature, points placed by φ and nudged vertically so that
/// points falling in the same horizontal bin do not overlap.
pub fn beeswarm_svg(bucket: &str, records: &[&ShapRecord]) -> String {
    let ranking = feature_ranking(records);
    let left = 160.0;
    let plot_w = 520.0;
    let row_h = 30.0;
    let top = 40.0;
    let height = top + row_h * ranking.len() as f64 + 60.0;
    let width = left + plot_w + 110.0;
    let extent = records.iter().map(|r| r.phi.abs()).fold(0.0, f64::max);
    let extent = if extent > 0.0 { extent } else { 1.0 };
    let x_of = |phi: f64| left + plot_w * (phi + extent) / (2.0 * extent);
    let radius = 2.5;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, "<title>SHAP values {}</title>", escape(bucket));
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="13">SHAP values, {}</text>"#,
        left + plot_w / 2.0,
        escape(bucket)
    );
    let axis_y = top + row_h * ranking.len() as f64;
    let _ = writeln!(
        s,
        r##"<line x1="{0:.1}" y1="{top:.1}" x2="{0:.1}" y2="{axis_y:.1}" stroke="#999999"/>"##,
        x_of(0.0)
    );
    let _ = writeln!(
        s,
        r##"<line x1="{left:.1}" y1="{axis_y:.1}" x2="{:.1}" y2="{axis_y:.1}" stroke="#333333"/>"##,
        left + plot_w
    );
    for k in 0..=4 {
        let v = -extent + 2.0 * extent * k as f64 / 4.0;
        let x = x_of(v);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            axis_y + 16.0,
            tick_label(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">SHAP value (USD)</text>"#,
        left + plot_w / 2.0,
        axis_y + 34.0
    );

    for (i, feature) in ranking.iter().enumerate() {
        let cy = top + row_h * i as f64 + row_h / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{cy:.1}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            left - 6.0,
            escape(feature)
        );
        let mut pts: Vec<&&ShapRecord> = records.iter().filter(|r| &r.feature == feature).collect();
        pts.sort_by(|a, b| a.phi.total_cmp(&b.phi).then(a.row.cmp(&b.row)));
        let lo = pts.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
        let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
        let max_level = ((row_h / 2.0 - radius) / (2.0 * radius)).floor().max(0.0) as usize;
        for r in pts {
            let x = x_of(r.phi);
            let count = bins.entry((x / (2.0 * radius)).floor() as i64).or_default();
            let level = *count % (2 * max_level + 1);
            *count += 1;
            let offset = if level == 0 {
                0.0
            } else if level % 2 == 1 {
                -(level.div_ceil(2) as f64) * 2.0 * radius
            } else {
                (level / 2) as f64 * 2.0 * radius
            };
            let t = if hi > lo { (r.value - lo) / (hi - lo) } else { 0.5 };
            let _ = writeln!(
                s,
                r#"<circle cx="{x:.2}" cy="{:.2}" r="{radius}" fill="{}" fill-opacity="0.85"/>"#,
                cy + offset,
                hex(lerp(LOW, HIGH, t))
            );
        }
    }

    let lx = left + plot_w + 40.0;
    let steps = 10;
    for k in 0..steps {
        let t = 1.0 - (k as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.1}" y="{:.1}" width="10" height="12" fill="{}"/>"#,
            top + 12.0 * k as f64,
            hex(lerp(LOW, HIGH, t))
        );
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" dominant-baseline="middle">high</text>"#, lx + 14.0, top + 6.0);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" dominant-baseline="middle">low</text>"#,
        lx + 14.0,
        top + 12.0 * steps as f64 - 6.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate({:.1},{:.1}) rotate(90)" text-anchor="middle">feature value</text>"#,
        lx + 48.0,
        top + 60.0
    );
    s.push_str("</svg>\n");
    s
}

/// Records grouped by bucket in first-seen order.
pub fn by_bucket(records: &[ShapRecord]) -> Vec<(String, Vec<&ShapRecord>)> {
    let mut out: Vec<(String, Vec<&ShapRecord>)> = Vec::new();
    for r in records {
        match out.iter_mut().find(|(b, _)| *b == r.bucket) {
            Some((_, v)) => v.push(r),
            None => out.push((r.bucket.clone(), vec![r])),
        }
    }
    out
}

pub fn summary_text(results: &[ResultRow], corr: &CorrMatrix, shap: &[ShapRecord]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Model performance on held-out rows (USD)");
    let _ = writeln!(s, "{:<8} {:<8} {:>12} {:>12} {:>10}", "model", "year", "rmse", "mae", "r_square");
    for r in results {
        let r2 = r.r_square.map_or("undefined".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(s, "{:<8} {:<8} {:>12.2} {:>12.2} {:>10}", r.model, r.year, r.rmse, r.mae, r2);
    }

    let mut years: Vec<&str> = Vec::new();
    for r in results {
        if !years.contains(&r.year.as_str()) {
            years.push(&r.year);
        }
    }
    if !years.is_empty() {
        let _ = writeln!(s, "\nBest model per year (highest r_square)");
        for y in years {
            let best = results
                .iter()
                .filter(|r| r.year == y && r.r_square.is_some())
                .fold(None::<&ResultRow>, |acc, r| match acc {
                    Some(a) if a.r_square >= r.r_square => Some(a),
                    _ => Some(r),
                });
            if let Some(b) = best {
                let _ = writeln!(s, "  {y}: {} ({:.4})", b.model, b.r_square.unwrap_or(f64::NAN));
            }
        }
    }

    if let Some(p) = corr.names.iter().position(|n| n == "price") {
        let mut pairs: Vec<(&str, f64)> = corr
            .names
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != p)
            .map(|(j, n)| (n.as_str(), corr.values[p][j]))
            .collect();
        pairs.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(b.0)));
        let _ = writeln!(s, "\nStrongest correlations with price");
        for (name, v) in pairs.iter().take(5) {
            let _ = writeln!(s, "  {name:<16} {v:>8.4}");
        }
    }

    let groups = by_bucket(shap);
    if !groups.is_empty() {
        let _ = writeln!(s, "\nTop features by mean |SHAP value|");
        for (bucket, recs) in &groups {
            let ranking = feature_ranking(recs);
            let top: Vec<&str> = ranking.iter().take(5).map(String::as_str).collect();
            let _ = writeln!(s, "  {bucket}: {}", top.join(", "));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(bucket: &str, row: usize, feature: &str, value: f64, phi: f64) -> ShapRecord {
        ShapRecord {
            bucket: bucket.into(),
            row,
            feature: feature.into(),
            value,
            phi,
        }
    }

    #[test]
    fn two_by_two_heatmap() {
        let corr = CorrMatrix {
            names: vec!["a".into(), "b".into()],
            values: vec![vec![1.0, -0.5], vec![-0.5, 1.0]],
            zero_variance: vec![false, false],
        };
        let svg = heatmap_svg(&corr);
        let cells: Vec<&str> = svg.lines().filter(|l| l.contains("<title>a /") || l.contains("<title>b /")).collect();
        assert_eq!(cells.len(), 4);
        let max = diverging(1.0);
        assert_eq!(max, "#b2182b");
        assert!(cells[0].contains(&max) && cells[3].contains(&max));
        assert!(!cells[1].contains(&max));
    }

    #[test]
    fn single_feature_beeswarm() {
        let recs = [rec("2018", 0, "sqft", 1.0, 5.0), rec("2018", 1, "sqft", 3.0, -2.0)];
        let refs: Vec<&ShapRecord> = recs.iter().collect();
        let svg = beeswarm_svg("2018", &refs);
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(svg.matches(">sqft</text>").count(), 1);
    }

    #[test]
    fn ranking_from_records() {
        let recs = [
            rec("2018", 0, "b", 0.0, 1.0),
            rec("2018", 0, "a", 0.0, -3.0),
            rec("2018", 0, "c", 0.0, 1.0),
        ];
        let refs: Vec<&ShapRecord> = recs.iter().collect();
        assert_eq!(feature_ranking(&refs), ["a", "b", "c"]);
    }

    #[test]
    fn schema_errors_name_the_column() {
        let err = read_shap("bucket,row,feature,value\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("`phi`"), "{err}");
        assert_eq!(err.code(), "E_SCHEMA");
        let err = read_results("model,year,rmse,mae\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("`r_square`"), "{err}");
    }

    #[test]
    fn results_roundtrip_undefined() {
        let rows = read_results("model,year,rmse,mae,r_square\nlinear,2018,1.00,0.50,undefined\n".as_bytes()).unwrap();
        assert_eq!(rows[0].r_square, None);
        assert_eq!(rows[0].rmse, 1.0);
    }
}
