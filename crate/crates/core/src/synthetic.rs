//! Seeded surrogate listings with a known, nonlinear hedonic price.
//!
//! Each house gets an assessed value linear in floor area and full baths.
//! The annual tax is 2% of that assessment times a log-normal location
//! factor. The noiseless price ([`hedonic_value`]) combines a linear
//! floor-area term, a sharp logistic premium above 2,800 sq ft, a bathroom
//! slope that depends on size, a saturating location premium read from the
//! tax-to-assessment ratio, a U-shaped age effect around 1975, and fixed
//! effects for property type, basement, cooling and garage, floored at
//! [`MIN_VALUE`]. Sale prices then
//! apply a per-year market index and multiplicative log-normal noise.
//!
//! A small share of records is deliberately dirty: missing attributes, no
//! price, prices above the ceiling, oversized floor areas, and sales in 2017.

use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::dataset::RawListing;
use crate::rng;

pub const DEFAULT_LISTINGS: usize = 2400;

/// Structural attributes that drive the price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HouseTraits {
    pub sqft: f64,
    pub year_built: f64,
    pub baths_full: f64,
    pub baths_half: f64,
    pub car_spaces: f64,
    /// 0 single family, 1 condo, 2 townhouse.
    pub kind: u8,
    /// 0 none, 1 full, 2 partial, 3 english, 4 walk-out.
    pub basement: u8,
    /// 0 other, 1 central air, 2 zoned.
    pub cooling: u8,
    /// Log of the tax-to-assessment ratio relative to the 2% base rate.
    pub location: f64,
}

/// Assessed value behind the annual tax.
pub fn assessed_value(h: &HouseTraits) -> f64 {
    50_000.0 + 110.0 * h.sqft + 20_000.0 * h.baths_full
}

/// Annual tax implied by the assessment and location factor.
pub fn annual_tax(h: &HouseTraits) -> f64 {
    0.02 * assessed_value(h) * h.location.exp()
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Floor on the noiseless price; small condos in the weakest locations
/// would otherwise come out negative.
pub const MIN_VALUE: f64 = 30_000.0;

/// Noiseless price in dollars before the market index.
pub fn hedonic_value(h: &HouseTraits) -> f64 {
    let size = 60.0 * h.sqft + 250_000.0 * logistic((h.sqft - 2800.0) / 150.0);
    let bath_slope = if h.sqft > 2000.0 { 25_000.0 } else { 5_000.0 };
    let baths = bath_slope * h.baths_full + 12_000.0 * h.baths_half;
    let location = 200_000.0 * (3.0 * h.location).tanh();
    let age = 3_000.0 * (h.year_built - 1975.0).abs();
    let kind = [0.0, -45_000.0, -20_000.0][h.kind as usize];
    let basement = [0.0, 15_000.0, 8_000.0, 10_000.0, 35_000.0][h.basement as usize];
    let cooling = [0.0, 8_000.0, 20_000.0][h.cooling as usize];
    let total = 40_000.0 + size + baths + location + age + kind + basement + cooling + 8_000.0 * h.car_spaces;
    total.max(MIN_VALUE)
}

/// Price index by sale year, 2018 = 1.
pub fn market_index(year: i32) -> f64 {
    match year {
        ..=2018 => 1.0,
        2019 => 1.03,
        2020 => 1.08,
        2021 => 1.18,
        _ => 1.25,
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, options: &[&'a str]) -> &'a str {
    options[rng.random_range(0..options.len())]
}

fn maybe(rng: &mut ChaCha8Rng, p_missing: f64, v: f64) -> Option<f64> {
    (!rng.random_bool(p_missing)).then_some(v)
}

fn traits(rng: &mut ChaCha8Rng) -> HouseTraits {
    let u: f64 = rng.random();
    let kind = if u < 0.65 { 0 } else if u < 0.8 { 1 } else { 2 };
    let median = [2300.0, 1100.0, 1700.0][kind as usize];
    let sqft = LogNormal::new(f64::ln(median), 0.35)
        .expect("valid log-normal")
        .sample(rng)
        .clamp(450.0, 9000.0)
        .round();
    let rooms = (sqft / 900.0).floor();
    HouseTraits {
        sqft,
        year_built: rng.random_range(1920..=2021) as f64,
        baths_full: (rooms + rng.random_range(0..=1) as f64).clamp(1.0, 5.0),
        baths_half: rng.random_range(0..=2) as f64,
        car_spaces: if kind == 1 { rng.random_range(0..=1) } else { rng.random_range(0..=3) } as f64,
        kind,
        basement: if kind == 1 { 0 } else { rng.random_range(0..5) },
        cooling: rng.random_range(0..3),
        location: Normal::new(0.0, 0.3).expect("valid normal").sample(rng),
    }
}

/// `n` listings from stream 0 of `seed`.
pub fn generate(n: usize, seed: u64) -> Vec<RawListing> {
    let mut rng = rng::stream(seed, 0);
    let price_noise = LogNormal::new(0.0, 0.06).expect("valid log-normal");
    let jitter = Normal::<f64>::new(0.0, 1.0).expect("valid normal");

    (0..n)
        .map(|i| {
            let h = traits(&mut rng);
            let value = hedonic_value(&h);
            let year = if rng.random_bool(0.03) { 2017 } else { rng.random_range(2018..=2022) };
            let date = NaiveDate::from_ymd_opt(year, rng.random_range(1..=12), rng.random_range(1..=28))
                .expect("valid date");
            let mut price = (value * market_index(year) * price_noise.sample(&mut rng)).round();
            if rng.random_bool(0.01) {
                price = 2_500_000.0 + (jitter.sample(&mut rng).abs() * 400_000.0).round();
            }
            let sqft = if rng.random_bool(0.005) { h.sqft + 10_000.0 } else { h.sqft };
            let beds = (h.sqft / 600.0).round().clamp(1.0, 6.0);
            let rooms = beds + 2.0;
            let hardwood = rng.random_range(0..=rooms as u32) as f64;
            let tax = annual_tax(&h).round();

            let basement = match h.basement {
                0 => None,
                1 => Some(pick(&mut rng, &["Full, Finished", "Full, Unfinished"])),
                2 => Some("Partial"),
                3 => Some("English Basement"),
                _ => Some(pick(&mut rng, &["Walk-Out Access", "Full, Walkout"])),
            };
            let basement_sqft = basement.map(|_| (h.sqft * rng.random_range(0.3..0.8)).round());
            let cooling = match h.cooling {
                0 => pick(&mut rng, &["Window Unit(s)", "Ceiling Fan(s)"]),
                1 => "Central Air",
                _ => "Central Air, Zoned",
            };

            RawListing {
                sqft: Some(sqft),
                property_type: Some(
                    ["Single Family Residence", "Condo/Co-op", "Townhouse"][h.kind as usize].into(),
                ),
                year_built: maybe(&mut rng, 0.03, h.year_built),
                price: if rng.random_bool(0.02) { None } else { Some(price) },
                car_spaces: maybe(&mut rng, 0.05, h.car_spaces),
                address: format!("{} Synthetic Way", 100 + i),
                high_school: Some(pick(&mut rng, &["North High", "South High", "Central High"]).into()),
                beds: maybe(&mut rng, 0.04, beds),
                baths_full: Some(h.baths_full),
                baths_half: maybe(&mut rng, 0.05, h.baths_half),
                heating: Some(pick(&mut rng, &["Natural Gas, Forced Air", "Electric Baseboard", "Heat Pump"]).into()),
                cooling: Some(cooling.into()),
                carpet_rooms: Some(rooms - hardwood),
                hardwood_rooms: Some(hardwood),
                basement: Some(if basement.is_some() { "Yes" } else { "No" }.into()),
                basement_sqft,
                basement_description: basement.map(str::to_string),
                tax_annual: maybe(&mut rng, 0.03, tax),
                sold_date: Some(date),
                city: "Springfield".into(),
            }
        })
        .collect()
}
