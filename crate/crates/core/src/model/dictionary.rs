use std::path::Path;

use ndarray::Array2;

use crate::{Error, Real, Result};

/// Parse a dense nonnegative matrix: a `rows,cols` header line followed by
/// `rows` lines of `cols` comma-separated values.
pub fn parse_dictionary_csv<T: Real>(text: &str) -> Result<Array2<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Dictionary("empty dictionary file".into()))?
        .map_err(|e| Error::Dictionary(e.to_string()))?;
    let dims: Vec<usize> = header
        .iter()
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Dictionary("header must be `rows,cols`".into()))?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Dictionary("header must be `rows,cols`".into()));
    };
    let mut out = Array2::<T>::zeros((rows, cols));
    let mut r = 0;
    for rec in records {
        let rec = rec.map_err(|e| Error::Dictionary(e.to_string()))?;
        if rec.iter().all(|s| s.is_empty()) {
            continue;
        }
        if r >= rows {
            return Err(Error::Dictionary(format!("more than {rows} data rows")));
        }
        if rec.len() != cols {
            return Err(Error::Dictionary(format!(
                "row {} has {} values, expected {cols}",
                r + 1,
                rec.len()
            )));
        }
        for (c, s) in rec.iter().enumerate() {
            let x: f64 = s
                .parse()
                .map_err(|_| Error::Dictionary(format!("row {}: `{s}` is not a number", r + 1)))?;
            if !(x >= 0.0) || !x.is_finite() {
                return Err(Error::Dictionary(format!("row {}: negative or non-finite entry", r + 1)));
            }
            out[[r, c]] = T::lit(x);
        }
        r += 1;
    }
    if r != rows {
        return Err(Error::Dictionary(format!("expected {rows} data rows, found {r}")));
    }
    Ok(out)
}

pub fn load_dictionary_csv<T: Real>(path: &Path) -> Result<Array2<T>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Dictionary(format!("{}: {e}", path.display())))?;
    parse_dictionary_csv(&text)
}
