//! Listing record schema, CSV interchange, validation and year bucketing.
//!
//! The CSV header vocabulary is fixed (see [`COLUMNS`]); column order in a
//! file is free. Empty cells are absent values. Numeric cells may carry a
//! leading `$` and thousands separators, both stripped before parsing.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CSV header names in canonical write order.
pub const COLUMNS: [&str; 20] = [
    "sqft",
    "property_type",
    "year_built",
    "price",
    "car_spaces",
    "address",
    "high_school",
    "beds",
    "baths_full",
    "baths_half",
    "heating",
    "cooling",
    "carpet_rooms",
    "hardwood_rooms",
    "basement",
    "basement_sqft",
    "basement_description",
    "tax_annual",
    "sold_date",
    "city",
];

const NUMERIC_COLUMNS: [&str; 11] = [
    "sqft",
    "year_built",
    "price",
    "car_spaces",
    "beds",
    "baths_full",
    "baths_half",
    "carpet_rooms",
    "hardwood_rooms",
    "basement_sqft",
    "tax_annual",
];

pub fn is_numeric_column(column: &str) -> bool {
    NUMERIC_COLUMNS.contains(&column)
}

/// One scraped property sale. Every attribute except address and city may be
/// absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawListing {
    pub sqft: Option<f64>,
    pub property_type: Option<String>,
    pub year_built: Option<f64>,
    pub price: Option<f64>,
    pub car_spaces: Option<f64>,
    pub address: String,
    pub high_school: Option<String>,
    pub beds: Option<f64>,
    pub baths_full: Option<f64>,
    pub baths_half: Option<f64>,
    pub heating: Option<String>,
    pub cooling: Option<String>,
    pub carpet_rooms: Option<f64>,
    pub hardwood_rooms: Option<f64>,
    pub basement: Option<String>,
    pub basement_sqft: Option<f64>,
    pub basement_description: Option<String>,
    pub tax_annual: Option<f64>,
    pub sold_date: Option<NaiveDate>,
    pub city: String,
}

impl RawListing {
    pub fn numeric(&self, column: &str) -> Option<f64> {
        match column {
            "sqft" => self.sqft,
            "year_built" => self.year_built,
            "price" => self.price,
            "car_spaces" => self.car_spaces,
            "beds" => self.beds,
            "baths_full" => self.baths_full,
            "baths_half" => self.baths_half,
            "carpet_rooms" => self.carpet_rooms,
            "hardwood_rooms" => self.hardwood_rooms,
            "basement_sqft" => self.basement_sqft,
            "tax_annual" => self.tax_annual,
            _ => None,
        }
    }

    fn numeric_slot(&mut self, column: &str) -> Option<&mut Option<f64>> {
        Some(match column {
            "sqft" => &mut self.sqft,
            "year_built" => &mut self.year_built,
            "price" => &mut self.price,
            "car_spaces" => &mut self.car_spaces,
            "beds" => &mut self.beds,
            "baths_full" => &mut self.baths_full,
            "baths_half" => &mut self.baths_half,
            "carpet_rooms" => &mut self.carpet_rooms,
            "hardwood_rooms" => &mut self.hardwood_rooms,
            "basement_sqft" => &mut self.basement_sqft,
            "tax_annual" => &mut self.tax_annual,
            _ => return None,
        })
    }

    fn text_slot(&mut self, column: &str) -> Option<&mut Option<String>> {
        Some(match column {
            "property_type" => &mut self.property_type,
            "high_school" => &mut self.high_school,
            "heating" => &mut self.heating,
            "cooling" => &mut self.cooling,
            "basement" => &mut self.basement,
            "basement_description" => &mut self.basement_description,
            _ => return None,
        })
    }

    /// Whether the named column holds a value.
    pub fn is_present(&self, column: &str) -> bool {
        match column {
            "address" => !self.address.is_empty(),
            "city" => !self.city.is_empty(),
            "sold_date" => self.sold_date.is_some(),
            "property_type" => self.property_type.is_some(),
            "high_school" => self.high_school.is_some(),
            "heating" => self.heating.is_some(),
            "cooling" => self.cooling.is_some(),
            "basement" => self.basement.is_some(),
            "basement_description" => self.basement_description.is_some(),
            other => self.numeric(other).is_some(),
        }
    }

    /// Sets a column from its raw cell text, applying the CSV normalization
    /// rules. Unknown columns are a schema error.
    pub fn set_from_text(&mut self, column: &str, cell: &str) -> Result<()> {
        let cell = cell.trim();
        if let Some(slot) = self.numeric_slot(column) {
            *slot = parse_numeric(cell).map_err(|_| {
                Error::Parse(format!("unparseable numeric in column {column}: {cell:?}"))
            })?;
            return Ok(());
        }
        if let Some(slot) = self.text_slot(column) {
            *slot = (!cell.is_empty()).then(|| cell.to_string());
            return Ok(());
        }
        match column {
            "address" => self.address = cell.to_string(),
            "city" => self.city = cell.to_string(),
            "sold_date" => {
                self.sold_date = if cell.is_empty() {
                    None
                } else {
                    Some(NaiveDate::parse_from_str(cell, "%Y-%m-%d").map_err(|_| {
                        Error::Parse(format!("unparseable date in column sold_date: {cell:?}"))
                    })?)
                }
            }
            other => return Err(Error::Schema(format!("unknown column {other:?}"))),
        }
        Ok(())
    }

    /// Cell text for the named column as written to CSV.
    pub fn cell_text(&self, column: &str) -> String {
        let text = |v: &Option<String>| v.clone().unwrap_or_default();
        match column {
            "address" => self.address.clone(),
            "city" => self.city.clone(),
            "sold_date" => self
                .sold_date
                .map(|d| d.format("%Y-%m-%d").to_string())
                .unwrap_or_default(),
            "property_type" => text(&self.property_type),
            "high_school" => text(&self.high_school),
            "heating" => text(&self.heating),
            "cooling" => text(&self.cooling),
            "basement" => text(&self.basement),
            "basement_description" => text(&self.basement_description),
            other => self.numeric(other).map(format_number).unwrap_or_default(),
        }
    }
}

/// Strips `$`, thousands separators and whitespace, then parses. An empty
/// cell is `Ok(None)`.
pub fn parse_numeric(cell: &str) -> std::result::Result<Option<f64>, ()> {
    let cleaned: String = cell
        .trim()
        .chars()
        .filter(|c| *c != '$' && *c != ',' && !c.is_whitespace())
        .collect();
    if cleaned.is_empty() {
        return Ok(None);
    }
    match f64::from_str(&cleaned) {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(()),
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    format!("{v}")
}

/// Sale-year bucket. 2021 and 2022 share one bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum YearBucket {
    #[serde(rename = "2018")]
    Y2018,
    #[serde(rename = "2019")]
    Y2019,
    #[serde(rename = "2020")]
    Y2020,
    #[serde(rename = "2021-22")]
    Y2021To22,
}

impl YearBucket {
    pub const ALL: [YearBucket; 4] = [
        YearBucket::Y2018,
        YearBucket::Y2019,
        YearBucket::Y2020,
        YearBucket::Y2021To22,
    ];

    pub fn label(self) -> &'static str {
        match self {
            YearBucket::Y2018 => "2018",
            YearBucket::Y2019 => "2019",
            YearBucket::Y2020 => "2020",
            YearBucket::Y2021To22 => "2021-22",
        }
    }

    pub fn for_date(date: NaiveDate) -> Option<YearBucket> {
        match date.year() {
            2018 => Some(YearBucket::Y2018),
            2019 => Some(YearBucket::Y2019),
            2020 => Some(YearBucket::Y2020),
            2021 | 2022 => Some(YearBucket::Y2021To22),
            _ => None,
        }
    }
}

impl fmt::Display for YearBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for YearBucket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        YearBucket::ALL
            .into_iter()
            .find(|b| b.label() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown year bucket {s:?}")))
    }
}

/// Output of [`load_listings`]: the accepted records plus the data rows that
/// could not be parsed (by 0-based data row index).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ListingTable {
    pub records: Vec<RawListing>,
    pub rejected: Vec<(usize, String)>,
}

pub fn load_listings(path: impl AsRef<Path>) -> Result<ListingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_listings(file)
}

pub fn read_listings(reader: impl Read) -> Result<ListingTable> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();

    for name in &header {
        if !COLUMNS.contains(&name.as_str()) {
            return Err(Error::Schema(format!("unknown column {name:?}")));
        }
    }
    for required in COLUMNS {
        if !header.iter().any(|h| h == required) {
            return Err(Error::Schema(format!("missing column {required:?}")));
        }
    }

    let mut table = ListingTable::default();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let mut listing = RawListing::default();
        let mut failure = None;
        for (name, cell) in header.iter().zip(record.iter()) {
            if let Err(e) = listing.set_from_text(name, cell) {
                failure = Some(match e {
                    Error::Parse(msg) => msg,
                    other => other.to_string(),
                });
                break;
            }
        }
        match failure {
            Some(reason) => table.rejected.push((row, reason)),
            None => table.records.push(listing),
        }
    }
    Ok(table)
}

pub fn write_listings(path: impl AsRef<Path>, records: &[RawListing]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_listings_to(file, records)
}

pub fn write_listings_to(writer: impl Write, records: &[RawListing]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(COLUMNS)?;
    for r in records {
        wtr.write_record(COLUMNS.iter().map(|c| r.cell_text(c)))?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub row_count: usize,
    /// Absent-value counts per column, in [`COLUMNS`] order.
    pub missing_counts: Vec<(String, usize)>,
    pub rejected_rows: Vec<(usize, String)>,
}

impl ValidationReport {
    pub fn missing(&self, column: &str) -> usize {
        self.missing_counts
            .iter()
            .find(|(c, _)| c == column)
            .map_or(0, |(_, n)| *n)
    }

    pub fn is_rejected(&self, row: usize) -> bool {
        self.rejected_rows.iter().any(|(r, _)| *r == row)
    }
}

pub fn validate(records: &[RawListing]) -> ValidationReport {
    let missing_counts = COLUMNS
        .iter()
        .map(|c| {
            let n = records.iter().filter(|r| !r.is_present(c)).count();
            (c.to_string(), n)
        })
        .collect();

    let mut rejected_rows = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let negative = NUMERIC_COLUMNS
            .iter()
            .find(|c| r.numeric(c).is_some_and(|v| v < 0.0));
        if let Some(column) = negative {
            rejected_rows.push((i, format!("negative value in {column}")));
        } else if r.sold_date.is_none() {
            rejected_rows.push((i, "missing or unparseable sold_date".to_string()));
        } else if r.city.is_empty() {
            rejected_rows.push((i, "empty city".to_string()));
        }
    }

    ValidationReport {
        row_count: records.len(),
        missing_counts,
        rejected_rows,
    }
}

/// Records that pass [`validate`], in input order.
pub fn accepted(records: &[RawListing]) -> Vec<RawListing> {
    let report = validate(records);
    records
        .iter()
        .enumerate()
        .filter(|(i, _)| !report.is_rejected(*i))
        .map(|(_, r)| r.clone())
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Partition {
    pub buckets: BTreeMap<YearBucket, Vec<RawListing>>,
    /// Rows sold outside 2018-2022 or lacking a sale date.
    pub dropped: usize,
}

pub fn partition_by_year(records: &[RawListing]) -> Partition {
    let mut out = Partition::default();
    for r in records {
        match r.sold_date.and_then(YearBucket::for_date) {
            Some(b) => out.buckets.entry(b).or_default().push(r.clone()),
            None => out.dropped += 1,
        }
    }
    out
}
