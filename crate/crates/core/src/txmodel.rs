//! Transaction hierarchy: categories, purchased lines, baskets and customer
//! histories, together with receipt-file ingestion.
//!
//! Money is kept as integer minor units (cents) from parsing until a feature
//! vector is built, so value totals can be conserved exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Column header of the receipts file.
pub const RECEIPT_HEADER: [&str; 8] = [
    "basket_id",
    "customer_id",
    "timestamp",
    "product_id",
    "category_id",
    "unit_price",
    "quantity",
    "promo_flag",
];

/// Column header of the category table.
pub const CATEGORY_HEADER: [&str; 2] = ["category_id", "label"];

/// Monetary amount in cents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Money(pub i64);

impl Money {
    pub fn cents(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl FromStr for Money {
    type Err = String;

    /// Parses a decimal with at most two significant fractional digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(format!("`{s}` is not a decimal amount"));
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("`{s}` is not a decimal amount"));
        }
        let (kept, rest) = frac_part.split_at(frac_part.len().min(2));
        if rest.bytes().any(|b| b != b'0') {
            return Err(format!("`{s}` has sub-cent precision"));
        }
        let units: i64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| format!("`{s}` is out of range"))?
        };
        let mut frac: i64 = if kept.is_empty() { 0 } else { kept.parse().unwrap() };
        if kept.len() == 1 {
            frac *= 10;
        }
        let cents = units
            .checked_mul(100)
            .and_then(|c| c.checked_add(frac))
            .ok_or_else(|| format!("`{s}` is out of range"))?;
        Ok(Money(if negative { -cents } else { cents }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: String,
    pub label: String,
}

/// One receipt line. Repeated products accumulate through `quantity`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PurchasedLine {
    pub product_id: String,
    pub category_id: String,
    pub unit_price: Money,
    pub quantity: u32,
    pub promo_flag: bool,
}

impl PurchasedLine {
    pub fn value(&self) -> Money {
        Money(self.unit_price.0 * i64::from(self.quantity))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basket {
    pub basket_id: String,
    pub customer_id: String,
    pub timestamp: NaiveDateTime,
    pub lines: Vec<PurchasedLine>,
}

impl Basket {
    pub fn value(&self) -> Money {
        Money(self.lines.iter().map(|l| l.value().0).sum())
    }

    pub fn date(&self) -> NaiveDate {
        self.timestamp.date()
    }
}

/// All baskets of one customer inside the analysis window.
#[derive(Debug, Clone)]
pub struct CustomerHistory<'a> {
    pub customer_id: &'a str,
    pub baskets: Vec<&'a Basket>,
}

impl CustomerHistory<'_> {
    pub fn value(&self) -> Money {
        Money(self.baskets.iter().map(|b| b.value().0).sum())
    }
}

/// Closed date interval `[start, end]` used for recency and the per-day
/// normalization of frequency and monetary value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisWindow {
    start: NaiveDate,
    end: NaiveDate,
}

impl AnalysisWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end <= start {
            return Err(Error::Validation(format!(
                "window end {end} must be after start {start}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.end
    }

    pub fn length_days(&self) -> i64 {
        (self.end - self.start).num_days()
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

/// Validated, immutable set of baskets and the category table.
///
/// Categories are kept sorted by id (this is the feature axis order) and
/// baskets sorted by basket id.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    categories: Vec<Category>,
    baskets: Vec<Basket>,
    dropped_outside_window: usize,
}

impl Dataset {
    /// Builds a dataset from already-parsed parts, applying the same
    /// validation as file ingestion.
    pub fn new(mut categories: Vec<Category>, mut baskets: Vec<Basket>) -> Result<Self> {
        categories.sort_by(|a, b| a.id.cmp(&b.id));
        if categories.len() < 2 {
            return Err(Error::Validation(format!(
                "at least 2 categories are required, got {}",
                categories.len()
            )));
        }
        if let Some(w) = categories.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Validation(format!("duplicate category id `{}`", w[0].id)));
        }
        let known: BTreeSet<&str> = categories.iter().map(|c| c.id.as_str()).collect();

        baskets.sort_by(|a, b| a.basket_id.cmp(&b.basket_id));
        if let Some(w) = baskets.windows(2).find(|w| w[0].basket_id == w[1].basket_id) {
            return Err(Error::Validation(format!("duplicate basket id `{}`", w[0].basket_id)));
        }
        for basket in &mut baskets {
            if basket.lines.is_empty() {
                return Err(Error::Validation(format!("basket `{}` has no lines", basket.basket_id)));
            }
            for line in &basket.lines {
                if !known.contains(line.category_id.as_str()) {
                    return Err(Error::Validation(format!(
                        "basket `{}` references unknown category `{}`",
                        basket.basket_id, line.category_id
                    )));
                }
                if line.unit_price.0 < 0 || line.quantity == 0 {
                    return Err(Error::Validation(format!(
                        "basket `{}` has a line with negative price or zero quantity",
                        basket.basket_id
                    )));
                }
            }
            if basket.value().0 <= 0 {
                return Err(Error::Validation(format!(
                    "basket `{}` has non-positive total value",
                    basket.basket_id
                )));
            }
            basket.lines.sort();
        }
        Ok(Self {
            categories,
            baskets,
            dropped_outside_window: 0,
        })
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn category_ids(&self) -> Vec<String> {
        self.categories.iter().map(|c| c.id.clone()).collect()
    }

    pub fn baskets(&self) -> &[Basket] {
        &self.baskets
    }

    /// Baskets discarded during ingestion because they fell outside the window.
    pub fn dropped_outside_window(&self) -> usize {
        self.dropped_outside_window
    }

    pub fn total_value(&self) -> Money {
        Money(self.baskets.iter().map(|b| b.value().0).sum())
    }

    pub fn n_lines(&self) -> usize {
        self.baskets.iter().map(|b| b.lines.len()).sum()
    }

    /// SHA-256 over a canonical rendering of the dataset content.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for c in &self.categories {
            hasher.update(format!("C\x1f{}\x1f{}\n", c.id, c.label));
        }
        for b in &self.baskets {
            hasher.update(format!(
                "B\x1f{}\x1f{}\x1f{}\n",
                b.basket_id, b.customer_id, b.timestamp
            ));
            for l in &b.lines {
                hasher.update(format!(
                    "L\x1f{}\x1f{}\x1f{}\x1f{}\x1f{}\n",
                    l.product_id, l.category_id, l.unit_price.0, l.quantity, l.promo_flag as u8
                ));
            }
        }
        hex::encode(hasher.finalize())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses an ISO-8601 date or date-time. A missing time of day means 00:00.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_local()))
        .or_else(|| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .map(|d| d.and_time(NaiveTime::MIN))
        })
}

fn check_header(path: &Path, headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    if found != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), found.join(",")),
        });
    }
    Ok(())
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader)
}

/// Reads a `category_id,label` table.
pub fn read_categories(path: &Path) -> Result<Vec<Category>> {
    let file = std::fs::File::open(path)?;
    read_categories_from(path, file)
}

fn read_categories_from<R: Read>(path: &Path, reader: R) -> Result<Vec<Category>> {
    let mut rdr = csv_reader(reader);
    check_header(path, rdr.headers()?, &CATEGORY_HEADER)?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record_line(&record);
        if record.len() != CATEGORY_HEADER.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} columns, found {}", CATEGORY_HEADER.len(), record.len()),
            });
        }
        out.push(Category {
            id: record[0].trim().to_string(),
            label: record[1].trim().to_string(),
        });
    }
    Ok(out)
}

struct ReceiptRow {
    line: u64,
    basket_id: String,
    customer_id: String,
    timestamp: NaiveDateTime,
    item: PurchasedLine,
}

fn parse_receipt_row(path: &Path, record: &csv::StringRecord) -> Result<ReceiptRow> {
    let line = record_line(record);
    let fail = |message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    if record.len() != RECEIPT_HEADER.len() {
        return Err(fail(format!(
            "expected {} columns, found {}",
            RECEIPT_HEADER.len(),
            record.len()
        )));
    }
    let field = |i: usize| -> Result<&str> {
        let v = record[i].trim();
        if v.is_empty() {
            Err(fail(format!("missing value for `{}`", RECEIPT_HEADER[i])))
        } else {
            Ok(v)
        }
    };
    let timestamp = parse_timestamp(field(2)?).ok_or_else(|| fail(format!("bad timestamp `{}`", &record[2])))?;
    let unit_price: Money = field(5)?.parse().map_err(|e| fail(format!("bad unit_price: {e}")))?;
    if unit_price.0 < 0 {
        return Err(fail(format!("negative unit_price `{}`", &record[5])));
    }
    let quantity: u32 = field(6)?
        .parse()
        .map_err(|_| fail(format!("bad quantity `{}`", &record[6])))?;
    if quantity == 0 {
        return Err(fail("quantity must be at least 1".to_string()));
    }
    let promo_flag = match field(7)? {
        "0" => false,
        "1" => true,
        other => return Err(fail(format!("promo_flag must be 0 or 1, found `{other}`"))),
    };
    Ok(ReceiptRow {
        line,
        basket_id: field(0)?.to_string(),
        customer_id: field(1)?.to_string(),
        timestamp,
        item: PurchasedLine {
            product_id: field(3)?.to_string(),
            category_id: field(4)?.to_string(),
            unit_price,
            quantity,
            promo_flag,
        },
    })
}

/// Reads, validates and groups a receipts file into baskets.
///
/// Baskets dated outside `window` are dropped and counted. Rows referencing
/// unknown categories are collected and reported together.
pub fn ingest_receipts(receipts: &Path, categories: &Path, window: AnalysisWindow) -> Result<Dataset> {
    let categories = read_categories(categories)?;
    let file = std::fs::File::open(receipts)?;
    ingest_from_reader(receipts, file, categories, window)
}

/// Same as [`ingest_receipts`] but over an arbitrary reader; `path` is only
/// used in error messages.
pub fn ingest_from_reader<R: Read>(
    path: &Path,
    reader: R,
    categories: Vec<Category>,
    window: AnalysisWindow,
) -> Result<Dataset> {
    let known: BTreeSet<String> = categories.iter().map(|c| c.id.clone()).collect();
    let mut rdr = csv_reader(reader);
    check_header(path, rdr.headers()?, &RECEIPT_HEADER)?;

    struct Pending {
        customer_id: String,
        timestamp: NaiveDateTime,
        first_line: u64,
        lines: Vec<PurchasedLine>,
    }
    let mut grouped: BTreeMap<String, Pending> = BTreeMap::new();
    let mut unknown_rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = parse_receipt_row(path, &record)?;
        if !known.contains(&row.item.category_id) {
            unknown_rows.push(row.line);
            continue;
        }
        match grouped.get_mut(&row.basket_id) {
            Some(pending) => {
                if pending.customer_id != row.customer_id {
                    return Err(Error::Validation(format!(
                        "basket `{}` has conflicting customer ids `{}` (line {}) and `{}` (line {})",
                        row.basket_id, pending.customer_id, pending.first_line, row.customer_id, row.line
                    )));
                }
                if pending.timestamp != row.timestamp {
                    return Err(Error::Validation(format!(
                        "basket `{}` has conflicting timestamps on lines {} and {}",
                        row.basket_id, pending.first_line, row.line
                    )));
                }
                pending.lines.push(row.item);
            }
            None => {
                grouped.insert(
                    row.basket_id,
                    Pending {
                        customer_id: row.customer_id,
                        timestamp: row.timestamp,
                        first_line: row.line,
                        lines: vec![row.item],
                    },
                );
            }
        }
    }
    if !unknown_rows.is_empty() {
        return Err(Error::UnknownCategories { rows: unknown_rows });
    }

    let mut baskets = Vec::with_capacity(grouped.len());
    let mut dropped = 0;
    for (basket_id, pending) in grouped {
        let basket = Basket {
            basket_id,
            customer_id: pending.customer_id,
            timestamp: pending.timestamp,
            lines: pending.lines,
        };
        if basket.value().0 <= 0 {
            return Err(Error::Validation(format!(
                "basket `{}` (first seen on line {}) has zero total value",
                basket.basket_id, pending.first_line
            )));
        }
        if window.contains(basket.date()) {
            baskets.push(basket);
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::info!(
            "dropped {dropped} baskets outside {} .. {}",
            window.start(),
            window.end()
        );
    }
    let mut dataset = Dataset::new(categories, baskets)?;
    dataset.dropped_outside_window = dropped;
    Ok(dataset)
}

/// Partitions baskets by customer id. Histories come back sorted by id.
pub fn build_histories(dataset: &Dataset) -> Vec<CustomerHistory<'_>> {
    let mut by_customer: BTreeMap<&str, Vec<&Basket>> = BTreeMap::new();
    for basket in dataset.baskets() {
        by_customer.entry(basket.customer_id.as_str()).or_default().push(basket);
    }
    by_customer
        .into_iter()
        .map(|(customer_id, baskets)| CustomerHistory { customer_id, baskets })
        .collect()
}

/// Writes baskets in the receipts file format, one row per line item.
pub fn write_receipts<W: Write>(writer: W, baskets: &[Basket]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(RECEIPT_HEADER)?;
    for b in baskets {
        let ts = b.timestamp.format("%Y-%m-%dT%H:%M:%S").to_string();
        for l in &b.lines {
            wtr.write_record([
                b.basket_id.as_str(),
                b.customer_id.as_str(),
                ts.as_str(),
                l.product_id.as_str(),
                l.category_id.as_str(),
                &l.unit_price.to_string(),
                &l.quantity.to_string(),
                if l.promo_flag { "1" } else { "0" },
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_categories<W: Write>(writer: W, categories: &[Category]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CATEGORY_HEADER)?;
    for c in categories {
        wtr.write_record([c.id.as_str(), c.label.as_str()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cats() -> Vec<Category> {
        ["face", "hair", "body"]
            .iter()
            .map(|id| Category {
                id: id.to_string(),
                label: id.to_uppercase(),
            })
            .collect()
    }

    fn window() -> AnalysisWindow {
        AnalysisWindow::new(
            NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2024, 3, 31).unwrap(),
        )
        .unwrap()
    }

    fn ingest(text: &str) -> Result<Dataset> {
        ingest_from_reader(Path::new("receipts.csv"), text.as_bytes(), cats(), window())
    }

    const HEADER: &str = "basket_id,customer_id,timestamp,product_id,category_id,unit_price,quantity,promo_flag\n";

    #[test]
    fn money_parsing() {
        assert_eq!("12.34".parse::<Money>().unwrap(), Money(1234));
        assert_eq!("7".parse::<Money>().unwrap(), Money(700));
        assert_eq!("0.5".parse::<Money>().unwrap(), Money(50));
        assert_eq!("3.100".parse::<Money>().unwrap(), Money(310));
        assert_eq!("-1.0".parse::<Money>().unwrap(), Money(-100));
        assert!("1.005".parse::<Money>().is_err());
        assert!("abc".parse::<Money>().is_err());
        assert!(".".parse::<Money>().is_err());
        assert_eq!(Money(-105).to_string(), "-1.05");
        assert_eq!(Money(1234).to_string(), "12.34");
    }

    #[test]
    fn groups_rows_by_basket() {
        let text = format!(
            "{HEADER}b1,a,2024-02-01T10:00:00,p1,hair,5.00,1,0\n\
             b1,a,2024-02-01T10:00:00,p2,body,1.50,2,1\n\
             b1,a,2024-02-01T10:00:00,p3,face,0.25,1,0\n"
        );
        let ds = ingest(&text).unwrap();
        assert_eq!(ds.baskets().len(), 1);
        assert_eq!(ds.baskets()[0].lines.len(), 3);
        assert_eq!(ds.baskets()[0].value(), Money(825));
    }

    #[test]
    fn negative_price_names_row() {
        let text = format!("{HEADER}b1,a,2024-02-01,p1,hair,-1.0,1,0\n");
        match ingest(&text) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("negative"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = format!("{HEADER}b1,a,2024-02-01,p1,hair,1.0,1,0\nb2,a,2024-02-01,p1,hair,x,1,0\n");
        assert!(matches!(ingest(&text), Err(Error::Parse { line: 3, .. })));
        let text = format!("{HEADER}b1,a,2024-02-01,p1,hair,1.0,1\n");
        assert!(matches!(ingest(&text), Err(Error::Parse { line: 2, .. })));
        let text = format!("{HEADER}b1,a,2024-02-01,p1,hair,1.0,0,0\n");
        assert!(matches!(ingest(&text), Err(Error::Parse { line: 2, .. })));
        let text = format!("{HEADER}b1,a,yesterday,p1,hair,1.0,1,0\n");
        assert!(matches!(ingest(&text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn wrong_header_is_rejected() {
        let text = "basket,customer\nb1,a\n";
        assert!(matches!(ingest(text), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn unknown_categories_listed() {
        let text = format!(
            "{HEADER}b1,a,2024-02-01,p1,toys,1.0,1,0\nb2,a,2024-02-01,p1,hair,1.0,1,0\nb3,a,2024-02-01,p1,garden,1.0,1,0\n"
        );
        match ingest(&text) {
            Err(Error::UnknownCategories { rows }) => assert_eq!(rows, vec![2, 4]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_value_basket_rejected() {
        let text = format!("{HEADER}b1,a,2024-02-01,p1,hair,0.00,3,1\n");
        assert!(matches!(ingest(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn conflicting_customer_rejected() {
        let text = format!("{HEADER}b1,a,2024-02-01,p1,hair,1.0,1,0\nb1,b,2024-02-01,p2,hair,1.0,1,0\n");
        assert!(matches!(ingest(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn window_filter_counts_drops() {
        let text = format!(
            "{HEADER}b1,a,2023-12-31T23:59:59,p1,hair,1.0,1,0\nb2,a,2024-03-31T23:00:00,p1,hair,1.0,1,0\nb3,a,2024-04-01,p1,hair,1.0,1,0\n"
        );
        let ds = ingest(&text).unwrap();
        assert_eq!(ds.baskets().len(), 1);
        assert_eq!(ds.dropped_outside_window(), 2);
    }

    #[test]
    fn date_only_timestamp_is_midnight() {
        let ts = parse_timestamp("2024-02-03").unwrap();
        assert_eq!(ts.time(), NaiveTime::MIN);
        assert!(parse_timestamp("2024-02-03T04:05:06Z").is_some());
        assert!(parse_timestamp("2024-02-03 04:05").is_some());
    }

    #[test]
    fn read_order_does_not_matter() {
        let rows = [
            "b1,a,2024-02-01,p1,hair,1.0,1,0",
            "b2,b,2024-02-02,p2,body,2.0,1,0",
            "b1,a,2024-02-01,p3,face,3.0,2,1",
            "b3,a,2024-02-03,p1,hair,1.0,1,0",
        ];
        let forward = ingest(&format!("{HEADER}{}\n", rows.join("\n"))).unwrap();
        let mut rev = rows.to_vec();
        rev.reverse();
        let backward = ingest(&format!("{HEADER}{}\n", rev.join("\n"))).unwrap();
        assert_eq!(forward, backward);
        assert_eq!(forward.fingerprint(), backward.fingerprint());
    }

    #[test]
    fn histories_partition_baskets() {
        let text = format!(
            "{HEADER}b1,a,2024-02-01,p1,hair,1.0,1,0\nb2,a,2024-02-01,p1,hair,1.0,1,0\n\
             b3,b,2024-02-01,p1,hair,1.0,1,0\nb4,b,2024-02-01,p1,hair,1.0,1,0\nb5,b,2024-02-01,p1,hair,1.0,1,0\n"
        );
        let ds = ingest(&text).unwrap();
        let h = build_histories(&ds);
        let sizes: Vec<usize> = h.iter().map(|h| h.baskets.len()).collect();
        assert_eq!(sizes, vec![2, 3]);
        assert!(h[0].baskets.iter().all(|b| b.customer_id == "a"));
    }

    #[test]
    fn empty_dataset_has_no_histories() {
        let ds = ingest(HEADER).unwrap();
        assert!(build_histories(&ds).is_empty());
    }

    #[test]
    fn window_must_be_ordered() {
        let d = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        assert!(AnalysisWindow::new(d, d).is_err());
        assert_eq!(window().length_days(), 90);
    }

    #[test]
    fn dataset_requires_two_categories() {
        let one = vec![Category {
            id: "x".into(),
            label: "x".into(),
        }];
        assert!(Dataset::new(one, vec![]).is_err());
    }

    #[test]
    fn write_then_ingest_round_trips() {
        let text =
            format!("{HEADER}b1,a,2024-02-01T10:11:12,p1,hair,5.05,2,0\nb1,a,2024-02-01T10:11:12,p3,face,3.00,1,1\n");
        let ds = ingest(&text).unwrap();
        let mut buf = Vec::new();
        write_receipts(&mut buf, ds.baskets()).unwrap();
        let again = ingest_from_reader(Path::new("x"), buf.as_slice(), cats(), window()).unwrap();
        assert_eq!(ds, again);
    }
}
