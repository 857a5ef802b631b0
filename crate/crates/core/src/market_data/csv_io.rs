use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::{HourlyRecord, MarketDataset};
use crate::error::{Error, Result};

const FIXED_COLUMNS: [&str; 4] = ["date", "hour", "load", "wavg_price"];

/// Reads a market CSV file. See [`read_csv`].
pub fn load_csv(path: impl AsRef<Path>) -> Result<MarketDataset> {
    read_csv(File::open(path)?)
}

/// Parses `date,hour,load,wavg_price,cap_1,...,cap_G`. Row numbers in
/// errors count data rows from 1 (the header is not counted).
pub fn read_csv<R: Read>(reader: R) -> Result<MarketDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    for (i, name) in FIXED_COLUMNS.iter().enumerate() {
        if headers.get(i) != Some(*name) {
            return Err(Error::MalformedRow {
                row: 0,
                field: name.to_string(),
                message: format!("header column {} must be `{name}`", i + 1),
            });
        }
    }
    let n_caps = headers.len().saturating_sub(FIXED_COLUMNS.len());
    if n_caps == 0 {
        return Err(Error::MalformedRow {
            row: 0,
            field: "cap_1".into(),
            message: "at least one capacity column is required".into(),
        });
    }

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        if row.len() != headers.len() {
            return Err(Error::CapacityLength {
                row: row_no,
                expected: n_caps,
                found: row.len().saturating_sub(FIXED_COLUMNS.len()),
            });
        }
        let bad = |field: &str, message: String| Error::MalformedRow {
            row: row_no,
            field: field.to_string(),
            message,
        };
        let date = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d")
            .map_err(|e| bad("date", format!("`{}`: {e}", &row[0])))?;
        let hour: u8 = row[1].parse().map_err(|e| bad("hour", format!("`{}`: {e}", &row[1])))?;
        let parse_f = |col: usize, field: &str| -> Result<f64> {
            row[col].parse::<f64>().map_err(|e| bad(field, format!("`{}`: {e}", &row[col])))
        };
        let load = parse_f(2, "load")?;
        let wavg_price = parse_f(3, "wavg_price")?;
        let capacities = (0..n_caps)
            .map(|g| parse_f(FIXED_COLUMNS.len() + g, &headers[FIXED_COLUMNS.len() + g]))
            .collect::<Result<Vec<_>>>()?;
        let rec = HourlyRecord { date, hour, load, wavg_price, capacities };
        rec.check().map_err(|(field, message)| bad(field, message))?;
        records.push(rec);
    }
    MarketDataset::new(records)
}

/// Writes the dataset in the canonical CSV schema.
pub fn write_csv<W: Write>(data: &MarketDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((1..=data.n_generators()).map(|g| format!("cap_{g}")));
    wtr.write_record(&header)?;
    for r in data.records() {
        let mut row = vec![
            r.date.format("%Y-%m-%d").to_string(),
            r.hour.to_string(),
            r.load.to_string(),
            r.wavg_price.to_string(),
        ];
        row.extend(r.capacities.iter().map(|c| c.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
