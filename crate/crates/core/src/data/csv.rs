use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::PriceSeries;
use crate::error::{Error, Result};

pub const HEADER: &str = "symbol,timestamp,price";

/// Reads `symbol,timestamp,price` rows, grouping by symbol in order of first
/// appearance.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<PriceSeries>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_csv(&text)
}

pub fn read_csv(text: &str) -> Result<Vec<PriceSeries>> {
    let mut lines = text
        .split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        Some((line, h)) => {
            return Err(Error::Parse {
                line,
                msg: format!("expected header `{HEADER}`, got `{h}`"),
            })
        }
        None => unreachable!("split always yields one item"),
    }

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, (Vec<i64>, Vec<f64>)> = HashMap::new();
    for (line, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line, msg };
        let fields: Vec<&str> = raw.split(',').collect();
        let [symbol, ts, price] = fields[..] else {
            return Err(parse_err(format!("expected 3 fields, got {}", fields.len())));
        };
        let symbol = symbol.trim();
        if symbol.is_empty() {
            return Err(parse_err("empty symbol".into()));
        }
        let ts: i64 = ts
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad timestamp `{ts}`")))?;
        let price: f64 = price
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad price `{price}`")))?;
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::Validation {
                symbol: symbol.to_string(),
                msg: format!("line {line}: price {price} must be positive"),
            });
        }
        let entry = rows.entry(symbol.to_string()).or_insert_with(|| {
            order.push(symbol.to_string());
            (Vec::new(), Vec::new())
        });
        if entry.0.last().is_some_and(|&last| ts <= last) {
            return Err(Error::Validation {
                symbol: symbol.to_string(),
                msg: format!("line {line}: timestamp {ts} not after previous row"),
            });
        }
        entry.0.push(ts);
        entry.1.push(price);
    }

    order
        .into_iter()
        .map(|s| {
            let (ts, ps) = rows.remove(&s).unwrap();
            PriceSeries::new(s, ts, ps)
        })
        .collect()
}

/// Writes all series one after another under a single header. Prices use the
/// shortest representation that parses back to the same `f64`.
pub fn write_csv(path: impl AsRef<Path>, series: &[PriceSeries]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(HEADER);
    out.push('\n');
    for s in series {
        for (t, p) in s.timestamps().iter().zip(s.prices()) {
            writeln!(out, "{},{t},{p}", s.symbol()).unwrap();
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
