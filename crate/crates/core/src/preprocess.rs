//! Cleaning and encoding of raw listings into a numeric model matrix, plus
//! the descriptive statistics computed over the cleaned data.
//!
//! Column order of the model matrix is fixed by [`FEATURE_NAMES`]:
//! nine numeric attributes followed by four one-hot groups (property type,
//! heating, cooling, basement). Within each group exactly one indicator is 1.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{accepted, format_number, partition_by_year, RawListing, YearBucket};
use crate::error::{Error, Result};

pub const FEATURE_NAMES: [&str; 23] = [
    "sqft",
    "year_built",
    "car_spaces",
    "beds",
    "baths_full",
    "baths_half",
    "total_rooms",
    "basement_sqft",
    "tax_annual",
    "prop_single_family",
    "prop_condo",
    "prop_townhouse",
    "heat_natural_gas",
    "heat_baseboard",
    "heat_other",
    "cool_central_air",
    "cool_zoned",
    "cool_other",
    "bsmt_none",
    "bsmt_full",
    "bsmt_partial",
    "bsmt_english",
    "bsmt_walkout",
];

/// Room counts kept alongside the matrix for reporting; not model inputs.
pub const AUX_NAMES: [&str; 2] = ["carpet_rooms", "hardwood_rooms"];

/// One-hot groups as (first column, width).
pub const ONE_HOT_GROUPS: [(usize, usize); 4] = [(9, 3), (12, 3), (15, 3), (18, 5)];

pub const PRICE_CEILING: f64 = 2_500_000.0;
pub const SQFT_LIMIT: f64 = 10_000.0;

const IMPUTED: [&str; 8] = [
    "sqft",
    "year_built",
    "car_spaces",
    "beds",
    "baths_full",
    "baths_half",
    "basement_sqft",
    "tax_annual",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropertyType {
    SingleFamily,
    Condo,
    Townhouse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heating {
    NaturalGas,
    Baseboard,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cooling {
    CentralAir,
    Zoned,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basement {
    None,
    Full,
    Partial,
    English,
    Walkout,
}

fn lower(text: Option<&str>) -> String {
    text.unwrap_or_default().to_lowercase()
}

/// Condo and co-op map to condo; anything that is neither a condo nor a
/// townhouse (including absent) counts as single family.
pub fn categorize_property_type(text: Option<&str>) -> PropertyType {
    let t = lower(text);
    if t.contains("condo") || t.contains("co-op") || t.contains("coop") {
        PropertyType::Condo
    } else if t.contains("townhouse") || t.contains("townhome") {
        PropertyType::Townhouse
    } else {
        PropertyType::SingleFamily
    }
}

pub fn categorize_heating(text: Option<&str>) -> Heating {
    let t = lower(text);
    if t.contains("natural gas") {
        Heating::NaturalGas
    } else if t.contains("baseboard") {
        Heating::Baseboard
    } else {
        Heating::Other
    }
}

/// "zoned" wins over "central air" when both appear.
pub fn categorize_cooling(text: Option<&str>) -> Cooling {
    let t = lower(text);
    if t.contains("zoned") {
        Cooling::Zoned
    } else if t.contains("central air") {
        Cooling::CentralAir
    } else {
        Cooling::Other
    }
}

/// Priority walk-out, english, full, partial; anything else is none.
pub fn categorize_basement(text: Option<&str>) -> Basement {
    let t = lower(text);
    if t.contains("walk-out") || t.contains("walkout") || t.contains("walk out") {
        Basement::Walkout
    } else if t.contains("english") {
        Basement::English
    } else if t.contains("full") {
        Basement::Full
    } else if t.contains("partial") {
        Basement::Partial
    } else {
        Basement::None
    }
}

pub fn combine_rooms(carpet: Option<f64>, hardwood: Option<f64>) -> f64 {
    carpet.unwrap_or(0.0) + hardwood.unwrap_or(0.0)
}

fn keeps(r: &RawListing) -> bool {
    let price_ok = r.price.is_some_and(|p| p < PRICE_CEILING);
    let sqft_ok = r.sqft.is_none_or(|s| s <= SQFT_LIMIT);
    price_ok && sqft_ok
}

/// Drops rows without a price, priced at or above the ceiling, or larger
/// than the square-footage limit. Returns the kept rows and the drop count.
pub fn filter_outliers(records: &[RawListing]) -> (Vec<RawListing>, usize) {
    let kept: Vec<RawListing> = records.iter().filter(|r| keeps(r)).cloned().collect();
    let dropped = records.len() - kept.len();
    (kept, dropped)
}

/// Cleaned numeric matrix with prices as the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub target: Vec<f64>,
    #[serde(default)]
    pub aux_names: Vec<String>,
    #[serde(default)]
    pub aux: Vec<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset without auxiliary columns, checking shapes and
    /// finiteness.
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>, target: Vec<f64>) -> Result<Self> {
        let ds = Dataset {
            feature_names,
            aux: vec![Vec::new(); rows.len()],
            rows,
            target,
            aux_names: Vec::new(),
        };
        ds.check()?;
        Ok(ds)
    }

    /// Generic `x0, x1, ...` names.
    pub fn from_matrix(rows: Vec<Vec<f64>>, target: Vec<f64>) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        Self::new((0..m).map(|j| format!("x{j}")).collect(), rows, target)
    }

    pub fn check(&self) -> Result<()> {
        if self.rows.len() != self.target.len() || self.aux.len() != self.rows.len() {
            return Err(Error::Data(format!(
                "{} rows but {} targets",
                self.rows.len(),
                self.target.len()
            )));
        }
        let m = self.feature_names.len();
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Dimension {
                    expected: m,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) || !self.target[i].is_finite() {
                return Err(Error::Data(format!("non-finite value in row {i}")));
            }
        }
        for a in &self.aux {
            if a.len() != self.aux_names.len() {
                return Err(Error::Data("auxiliary column count mismatch".into()));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            target: indices.iter().map(|&i| self.target[i]).collect(),
            aux_names: self.aux_names.clone(),
            aux: indices.iter().map(|&i| self.aux[i].clone()).collect(),
        }
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn feature_column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// A feature, auxiliary column, or `price`, by name.
    pub fn named_column(&self, name: &str) -> Option<Vec<f64>> {
        if name == "price" {
            return Some(self.target.clone());
        }
        if let Some(j) = self.feature_index(name) {
            return Some(self.feature_column(j));
        }
        let k = self.aux_names.iter().position(|n| n == name)?;
        Some(self.aux.iter().map(|a| a[k]).collect())
    }

    /// Concatenates datasets with identical column layouts.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Dataset>) -> Result<Dataset> {
        let mut iter = parts.into_iter();
        let mut out = iter
            .next()
            .cloned()
            .ok_or_else(|| Error::Data("no rows".into()))?;
        for d in iter {
            if d.feature_names != out.feature_names || d.aux_names != out.aux_names {
                return Err(Error::Schema("datasets have different columns".into()));
            }
            out.rows.extend(d.rows.iter().cloned());
            out.target.extend_from_slice(&d.target);
            out.aux.extend(d.aux.iter().cloned());
        }
        Ok(out)
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Counts from [`clean_listings`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CleanSummary {
    pub input_rows: usize,
    pub rejected: usize,
    pub out_of_range_dates: usize,
    pub outliers: usize,
    /// Rows kept per bucket label.
    pub kept: BTreeMap<String, usize>,
}

/// Validation, year bucketing, outlier filtering and encoding in one pass.
/// Buckets left empty after filtering are omitted.
pub fn clean_listings(
    records: &[RawListing],
) -> Result<(BTreeMap<YearBucket, Dataset>, CleanSummary)> {
    let good = accepted(records);
    let mut summary = CleanSummary {
        input_rows: records.len(),
        rejected: records.len() - good.len(),
        ..Default::default()
    };
    let partition = partition_by_year(&good);
    summary.out_of_range_dates = partition.dropped;
    let mut buckets = BTreeMap::new();
    for (bucket, rows) in partition.buckets {
        let (kept, dropped) = filter_outliers(&rows);
        summary.outliers += dropped;
        if kept.is_empty() {
            continue;
        }
        summary.kept.insert(bucket.label().to_string(), kept.len());
        buckets.insert(bucket, build_dataset(&kept)?);
    }
    Ok((buckets, summary))
}

fn one_hot(index: usize, width: usize) -> impl Iterator<Item = f64> {
    (0..width).map(move |k| if k == index { 1.0 } else { 0.0 })
}

/// Encodes an outlier-filtered table. Absent numerics take the column median
/// of this table (0 when the column has no values at all); absent room
/// counts count as 0; absent categoricals fall into their catch-all bucket.
pub fn build_dataset(records: &[RawListing]) -> Result<Dataset> {
    if records.is_empty() {
        return Err(Error::Data("no rows".into()));
    }
    let medians: BTreeMap<&str, f64> = IMPUTED
        .iter()
        .map(|&c| {
            let mut present: Vec<f64> = records.iter().filter_map(|r| r.numeric(c)).collect();
            (c, median(&mut present).unwrap_or(0.0))
        })
        .collect();

    let mut rows = Vec::with_capacity(records.len());
    let mut target = Vec::with_capacity(records.len());
    let mut aux = Vec::with_capacity(records.len());
    for r in records {
        let price = r
            .price
            .ok_or_else(|| Error::Data("row without price reached build_dataset".into()))?;
        let num = |c: &str| r.numeric(c).unwrap_or(medians[c]);

        let mut row = Vec::with_capacity(FEATURE_NAMES.len());
        row.extend(
            ["sqft", "year_built", "car_spaces", "beds", "baths_full", "baths_half"]
                .iter()
                .map(|c| num(c)),
        );
        row.push(combine_rooms(r.carpet_rooms, r.hardwood_rooms));
        row.push(num("basement_sqft"));
        row.push(num("tax_annual"));

        let prop = match categorize_property_type(r.property_type.as_deref()) {
            PropertyType::SingleFamily => 0,
            PropertyType::Condo => 1,
            PropertyType::Townhouse => 2,
        };
        let heat = match categorize_heating(r.heating.as_deref()) {
            Heating::NaturalGas => 0,
            Heating::Baseboard => 1,
            Heating::Other => 2,
        };
        let cool = match categorize_cooling(r.cooling.as_deref()) {
            Cooling::CentralAir => 0,
            Cooling::Zoned => 1,
            Cooling::Other => 2,
        };
        let description = r
            .basement_description
            .as_deref()
            .or(r.basement.as_deref());
        let bsmt = match categorize_basement(description) {
            Basement::None => 0,
            Basement::Full => 1,
            Basement::Partial => 2,
            Basement::English => 3,
            Basement::Walkout => 4,
        };
        row.extend(one_hot(prop, 3));
        row.extend(one_hot(heat, 3));
        row.extend(one_hot(cool, 3));
        row.extend(one_hot(bsmt, 5));

        rows.push(row);
        target.push(price);
        aux.push(vec![
            r.carpet_rooms.unwrap_or(0.0),
            r.hardwood_rooms.unwrap_or(0.0),
        ]);
    }

    let ds = Dataset {
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        rows,
        target,
        aux_names: AUX_NAMES.iter().map(|s| s.to_string()).collect(),
        aux,
    };
    ds.check()?;
    Ok(ds)
}

/// Writes per-bucket cleaned datasets as one CSV with a leading
/// `year_bucket` column and a trailing `price` column.
pub fn write_cleaned(writer: impl Write, buckets: &BTreeMap<YearBucket, Dataset>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let Some(first) = buckets.values().next() else {
        let mut header = vec!["year_bucket".to_string()];
        header.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
        header.extend(AUX_NAMES.iter().map(|s| s.to_string()));
        header.push("price".into());
        wtr.write_record(&header)?;
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        return Ok(());
    };
    let mut header = vec!["year_bucket".to_string()];
    header.extend(first.feature_names.iter().cloned());
    header.extend(first.aux_names.iter().cloned());
    header.push("price".into());
    wtr.write_record(&header)?;
    for (bucket, ds) in buckets {
        for i in 0..ds.n_rows() {
            let mut rec = vec![bucket.label().to_string()];
            rec.extend(ds.rows[i].iter().map(|v| format_number(*v)));
            rec.extend(ds.aux[i].iter().map(|v| format_number(*v)));
            rec.push(format_number(ds.target[i]));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_cleaned_file(
    path: impl AsRef<Path>,
    buckets: &BTreeMap<YearBucket, Dataset>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_cleaned(file, buckets)
}

pub fn read_cleaned(reader: impl Read) -> Result<BTreeMap<YearBucket, Dataset>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("year_bucket") {
        return Err(Error::Schema("missing column \"year_bucket\"".into()));
    }
    if header.last().map(String::as_str) != Some("price") {
        return Err(Error::Schema("missing column \"price\"".into()));
    }
    let body = &header[1..header.len() - 1];
    let n_aux = body
        .iter()
        .rev()
        .take_while(|h| AUX_NAMES.contains(&h.as_str()))
        .count();
    let features = body[..body.len() - n_aux].to_vec();
    let aux_names = body[body.len() - n_aux..].to_vec();

    let mut out: BTreeMap<YearBucket, Dataset> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bucket: YearBucket = rec[0].parse()?;
        let values = rec
            .iter()
            .skip(1)
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {line}: bad number {c:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let ds = out.entry(bucket).or_insert_with(|| Dataset {
            feature_names: features.clone(),
            rows: Vec::new(),
            target: Vec::new(),
            aux_names: aux_names.clone(),
            aux: Vec::new(),
        });
        let m = features.len();
        ds.rows.push(values[..m].to_vec());
        ds.aux.push(values[m..m + n_aux].to_vec());
        ds.target.push(values[m + n_aux]);
    }
    for ds in out.values() {
        ds.check()?;
    }
    Ok(out)
}

pub fn read_cleaned_file(path: impl AsRef<Path>) -> Result<BTreeMap<YearBucket, Dataset>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_cleaned(file)
}

/// Attributes of the averages table: (column key, display label).
pub const STATS_ATTRIBUTES: [(&str, &str); 13] = [
    ("year_built", "Year Built"),
    ("price", "Price"),
    ("car_spaces", "Car Spaces"),
    ("beds", "Beds"),
    ("baths", "Baths"),
    ("sqft", "Sqft"),
    ("baths_full", "Full Baths"),
    ("baths_half", "Half Baths"),
    ("carpet_rooms", "Carpet Rooms"),
    ("hardwood_rooms", "Hardwood Rooms"),
    ("total_rooms", "Total Number of Rooms"),
    ("basement_sqft", "Basement Sqft"),
    ("tax_annual", "Tax Annual Amount"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub key: String,
    pub label: String,
    /// One mean per bucket, aligned with [`StatsTable::buckets`].
    pub means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub buckets: Vec<YearBucket>,
    pub rows: Vec<StatsRow>,
}

impl StatsTable {
    pub fn mean(&self, key: &str, bucket: YearBucket) -> Option<f64> {
        let b = self.buckets.iter().position(|x| *x == bucket)?;
        self.rows.iter().find(|r| r.key == key).map(|r| r.means[b])
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["attribute".to_string()];
        header.extend(self.buckets.iter().map(|b| b.label().to_string()));
        wtr.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.label.clone()];
            rec.extend(row.means.iter().map(|m| format!("{m:.2}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-bucket arithmetic means of the averages-table attributes. `baths`
/// is full baths plus half of the half baths.
pub fn summary_stats(buckets: &BTreeMap<YearBucket, Dataset>) -> Result<StatsTable> {
    let mut rows: Vec<StatsRow> = STATS_ATTRIBUTES
        .iter()
        .map(|(key, label)| StatsRow {
            key: key.to_string(),
            label: label.to_string(),
            means: Vec::with_capacity(buckets.len()),
        })
        .collect();
    for (bucket, ds) in buckets {
        if ds.is_empty() {
            return Err(Error::Data(format!("bucket {bucket} has no rows")));
        }
        let column = |name: &str| {
            ds.named_column(name)
                .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
        };
        for row in &mut rows {
            let values = if row.key == "baths" {
                let full = column("baths_full")?;
                let half = column("baths_half")?;
                full.iter().zip(&half).map(|(f, h)| f + 0.5 * h).collect()
            } else {
                column(&row.key)?
            };
            row.means.push(mean(&values));
        }
    }
    Ok(StatsTable {
        buckets: buckets.keys().copied().collect(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Columns with zero variance; their off-diagonal entries are 0.
    pub zero_variance: Vec<bool>,
}

impl CorrMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.values[i][j])
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend(self.names.iter().cloned());
        wtr.write_record(&header)?;
        for (name, row) in self.names.iter().zip(&self.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| format!("{v:.6}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn read_csv(reader: impl Read) -> Result<CorrMatrix> {
        let mut rdr = csv::Reader::from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.get(0) != names.get(i).map(String::as_str) {
                return Err(Error::Schema(format!(
                    "correlation row {i} label {:?} does not match column {:?}",
                    rec.get(0).unwrap_or(""),
                    names.get(i).map(String::as_str).unwrap_or("")
                )));
            }
            let row = rec
                .iter()
                .skip(1)
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad correlation {c:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != names.len() {
                return Err(Error::Schema("correlation matrix is not square".into()));
            }
            values.push(row);
        }
        if values.len() != names.len() {
            return Err(Error::Schema("correlation matrix is not square".into()));
        }
        Ok(CorrMatrix {
            zero_variance: vec![false; names.len()],
            names,
            values,
        })
    }
}

/// Pearson correlations over every feature column plus `price`.
pub fn correlation_matrix(ds: &Dataset) -> Result<CorrMatrix> {
    let n = ds.n_rows();
    if n < 2 {
        return Err(Error::Data(format!("correlation needs at least 2 rows, got {n}")));
    }
    let mut names = ds.feature_names.clone();
    names.push("price".into());
    let mut columns: Vec<Vec<f64>> = (0..ds.n_features()).map(|j| ds.feature_column(j)).collect();
    columns.push(ds.target.clone());

    let centered: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let m = mean(c);
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let norms: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let zero_variance: Vec<bool> = norms.iter().map(|s| *s == 0.0).collect();

    let k = names.len();
    let mut values = vec![vec![0.0; k]; k];
    for i in 0..k {
        values[i][i] = 1.0;
        for j in i + 1..k {
            let r = if zero_variance[i] || zero_variance[j] {
                0.0
            } else {
                let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrMatrix {
        names,
        values,
        zero_variance,
    })
}
