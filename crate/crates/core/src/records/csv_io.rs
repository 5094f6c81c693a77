//! Ingestion CSV: `id,company,domain,<attributes...>,<outcomes...>`.
//!
//! The `id` column is optional on input; rows without one are numbered from 1
//! in file order. Empty outcome cells mean the outcome was not recorded.

use std::io::{Read, Write};
use std::path::Path;

use super::{validate_record, AccidentRecord, Lexicon, OutcomeKind, RawRecord, Taxonomy};
use crate::error::{Error, Result};

fn header(lexicon: &Lexicon) -> Vec<String> {
    let mut h = vec!["id".to_string(), "company".to_string(), "domain".to_string()];
    h.extend(lexicon.names().iter().cloned());
    h.extend(OutcomeKind::ALL.iter().map(|o| o.as_str().to_string()));
    h
}

/// Field values in [`write_pool`] column order.
pub fn record_to_fields(record: &AccidentRecord, lexicon: &Lexicon) -> Result<Vec<String>> {
    if record.attributes.len() != lexicon.len() {
        return Err(Error::FeatureMismatch {
            expected: lexicon.len(),
            got: record.attributes.len(),
        });
    }
    let mut out = Vec::with_capacity(lexicon.len() + 8);
    out.push(record.id.to_string());
    out.push(record.company.clone());
    out.push(record.domain.as_str().to_string());
    out.extend(record.attributes.flags().iter().map(|&b| if b { "1" } else { "0" }.to_string()));
    for o in OutcomeKind::ALL {
        out.push(record.label(o).unwrap_or("").to_string());
    }
    Ok(out)
}

pub fn read_pool_from<R: Read>(reader: R, lexicon: &Lexicon, taxonomy: &Taxonomy) -> Result<Vec<AccidentRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::Headers).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let has_id = headers.iter().any(|h| h == "id");
    let mut out = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let row_data = result?;
        let mut raw: RawRecord = headers
            .iter()
            .cloned()
            .zip(row_data.iter().map(str::to_string))
            .collect();
        if !has_id {
            raw.insert("id".to_string(), (row + 1).to_string());
        }
        out.push(validate_record(&raw, lexicon, taxonomy)?);
    }
    Ok(out)
}

pub fn read_pool(path: &Path, lexicon: &Lexicon, taxonomy: &Taxonomy) -> Result<Vec<AccidentRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_pool_from(std::io::BufReader::new(file), lexicon, taxonomy)
}

/// Lexicon named by the header of a pool CSV.
pub fn header_lexicon_from<R: Read>(reader: R) -> Result<Lexicon> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    Lexicon::from_header(&headers)
}

pub fn header_lexicon(path: &Path) -> Result<Lexicon> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    header_lexicon_from(file)
}

pub fn write_pool_to<W: Write>(writer: W, records: &[AccidentRecord], lexicon: &Lexicon) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header(lexicon))?;
    for r in records {
        w.write_record(record_to_fields(r, lexicon)?)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_pool(path: &Path, records: &[AccidentRecord], lexicon: &Lexicon) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_pool_to(std::io::BufWriter::new(file), records, lexicon)
}
