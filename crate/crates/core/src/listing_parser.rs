//! Offline extraction of listing records from saved HTML pages.
//!
//! Extraction is driven by a [`RuleTable`] loaded from TOML, so selectors and
//! labels can follow a site redesign without code changes. The bundled
//! default lives in `rules/listing_rules.toml`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use regex::Regex;
use scraper::{ElementRef, Html, Selector};
use serde::Deserialize;

use crate::dataset::{self, parse_numeric, RawListing, COLUMNS};
use crate::error::{Error, Result};

pub const DEFAULT_RULES: &str = include_str!("../rules/listing_rules.toml");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleTable {
    pub version: u32,
    pub detail_link_pattern: String,
    #[serde(default)]
    pub date_formats: Vec<String>,
    #[serde(default)]
    pub anchors: Vec<AnchorRule>,
    pub fields: BTreeMap<String, FieldRule>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorRule {
    pub name: String,
    pub selector: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldRule {
    pub selector: Option<String>,
    pub attr: Option<String>,
    pub scope: Option<String>,
    pub label: Option<String>,
    pub label_selector: Option<String>,
    pub value_selector: Option<String>,
    pub pattern: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPage {
    pub source_path: PathBuf,
    pub record: RawListing,
    pub missing_fields: Vec<String>,
}

#[derive(Debug)]
enum Locator {
    Direct {
        selector: Selector,
        attr: Option<String>,
    },
    Labeled {
        scope: Selector,
        label: String,
        pair: Option<(Selector, Selector)>,
    },
}

#[derive(Debug)]
struct CompiledField {
    column: String,
    locator: Locator,
    pattern: Option<Regex>,
}

/// A rule table compiled into selectors and regexes.
#[derive(Debug)]
pub struct ListingParser {
    link_pattern: Regex,
    date_formats: Vec<String>,
    anchors: Vec<(String, Selector)>,
    fields: Vec<CompiledField>,
    link_selector: Selector,
    number: Regex,
}

fn selector(css: &str) -> Result<Selector> {
    Selector::parse(css).map_err(|e| Error::Schema(format!("bad selector {css:?}: {e}")))
}

fn regex(pattern: &str) -> Result<Regex> {
    Regex::new(pattern).map_err(|e| Error::Schema(format!("bad pattern {pattern:?}: {e}")))
}

fn element_text(el: ElementRef<'_>) -> String {
    el.text()
        .flat_map(str::split_whitespace)
        .collect::<Vec<_>>()
        .join(" ")
}

impl ListingParser {
    pub fn new(rules: &RuleTable) -> Result<Self> {
        if rules.version != 1 {
            return Err(Error::Schema(format!(
                "unsupported rule table version {}",
                rules.version
            )));
        }
        let anchors = rules
            .anchors
            .iter()
            .map(|a| Ok((a.name.clone(), selector(&a.selector)?)))
            .collect::<Result<Vec<_>>>()?;

        let mut fields = Vec::with_capacity(rules.fields.len());
        for (column, rule) in &rules.fields {
            if !COLUMNS.contains(&column.as_str()) {
                return Err(Error::Schema(format!("rule for unknown column {column:?}")));
            }
            let locator = match (&rule.selector, &rule.scope, &rule.label) {
                (Some(css), None, None) => Locator::Direct {
                    selector: selector(css)?,
                    attr: rule.attr.clone(),
                },
                (None, Some(scope), Some(label)) => {
                    let pair = match (&rule.label_selector, &rule.value_selector) {
                        (Some(l), Some(v)) => Some((selector(l)?, selector(v)?)),
                        (None, None) => None,
                        _ => {
                            return Err(Error::Schema(format!(
                                "rule {column:?}: label_selector and value_selector go together"
                            )))
                        }
                    };
                    Locator::Labeled {
                        scope: selector(scope)?,
                        label: label.to_lowercase(),
                        pair,
                    }
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "rule {column:?} needs either selector or scope + label"
                    )))
                }
            };
            let pattern = rule.pattern.as_deref().map(regex).transpose()?;
            fields.push(CompiledField {
                column: column.clone(),
                locator,
                pattern,
            });
        }

        Ok(ListingParser {
            link_pattern: regex(&rules.detail_link_pattern)?,
            date_formats: rules.date_formats.clone(),
            anchors,
            fields,
            link_selector: selector("a[href]")?,
            number: regex(r"-?\$?\d[\d,]*(?:\.\d+)?")?,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let rules: RuleTable =
            toml::from_str(text).map_err(|e| Error::Schema(format!("rule table: {e}")))?;
        Self::new(&rules)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Detail-page links in document order, without duplicates.
    pub fn parse_index_page(&self, document: &str) -> Vec<String> {
        let html = Html::parse_document(document);
        let mut seen = HashSet::new();
        html.select(&self.link_selector)
            .filter_map(|a| a.value().attr("href"))
            .map(str::trim)
            .filter(|href| self.link_pattern.is_match(href))
            .filter(|href| seen.insert(href.to_string()))
            .map(str::to_string)
            .collect()
    }

    pub fn parse_listing_page(&self, document: &str) -> Result<ParsedPage> {
        let html = Html::parse_document(document);
        for (name, sel) in &self.anchors {
            if html.select(sel).next().is_none() {
                return Err(Error::Parse(format!(
                    "not a listing page: anchor rule {name:?} matched nothing"
                )));
            }
        }

        let mut record = RawListing::default();
        for field in &self.fields {
            let Some(raw) = self.locate(&html, field) else {
                continue;
            };
            let text = match &field.pattern {
                Some(re) => match re.captures(&raw).and_then(|c| c.get(1)) {
                    Some(m) => m.as_str().trim().to_string(),
                    None => continue,
                },
                None => raw,
            };
            self.assign(&mut record, &field.column, &text);
        }

        let missing_fields = COLUMNS
            .iter()
            .filter(|c| !record.is_present(c))
            .map(|c| c.to_string())
            .collect();
        Ok(ParsedPage {
            source_path: PathBuf::new(),
            record,
            missing_fields,
        })
    }

    pub fn parse_listing_file(&self, path: impl AsRef<Path>) -> Result<ParsedPage> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut page = self
            .parse_listing_page(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        page.source_path = path.to_path_buf();
        Ok(page)
    }

    fn locate(&self, html: &Html, field: &CompiledField) -> Option<String> {
        match &field.locator {
            Locator::Direct { selector, attr } => {
                let el = html.select(selector).next()?;
                match attr {
                    Some(a) => el.value().attr(a).map(|v| v.trim().to_string()),
                    None => Some(element_text(el)),
                }
            }
            Locator::Labeled { scope, label, pair } => {
                for el in html.select(scope) {
                    match pair {
                        Some((label_sel, value_sel)) => {
                            let hit = el
                                .select(label_sel)
                                .next()
                                .is_some_and(|l| element_text(l).to_lowercase() == *label);
                            if hit {
                                return el.select(value_sel).next().map(element_text);
                            }
                        }
                        None => {
                            let text = element_text(el);
                            let Some((head, rest)) = text.split_once(':') else {
                                continue;
                            };
                            if head.trim().to_lowercase() == *label {
                                return Some(rest.trim().to_string());
                            }
                        }
                    }
                }
                None
            }
        }
    }

    fn assign(&self, record: &mut RawListing, column: &str, text: &str) {
        let text = text.trim();
        if text.is_empty() {
            return;
        }
        if column == "sold_date" {
            record.sold_date = self
                .date_formats
                .iter()
                .find_map(|f| NaiveDate::parse_from_str(text, f).ok());
            return;
        }
        if dataset::is_numeric_column(column) {
            let value = self
                .number
                .find(text)
                .and_then(|m| parse_numeric(m.as_str()).ok().flatten());
            if let Some(v) = value {
                let _ = record.set_from_text(column, &dataset::format_number(v));
            }
            return;
        }
        let _ = record.set_from_text(column, text);
    }
}

impl Default for ListingParser {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_RULES).expect("bundled rule table is valid")
    }
}

/// Detail links from an index page using the bundled rules.
pub fn parse_index_page(document: &str) -> Vec<String> {
    ListingParser::default().parse_index_page(document)
}

/// Parses a listing page using the bundled rules.
pub fn parse_listing_page(document: &str) -> Result<ParsedPage> {
    ListingParser::default().parse_listing_page(document)
}

pub fn export_csv(pages: &[ParsedPage], path: impl AsRef<Path>) -> Result<()> {
    let records: Vec<RawListing> = pages.iter().map(|p| p.record.clone()).collect();
    dataset::write_listings(path, &records)
}
