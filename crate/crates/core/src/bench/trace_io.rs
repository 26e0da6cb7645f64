//! Trace files: CSV with a fixed header, or a JSON array of rows.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nova::TraceRow;

pub const TRACE_HEADER: &str = "nu,U,gamma,bestresp_dist,max_g,descent_lhs,descent_rhs,kkt,inner_iters,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for TraceFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TraceFormat::Csv),
            "json" => Ok(TraceFormat::Json),
            other => Err(Error::Config(format!("unknown trace format '{other}' (csv or json)"))),
        }
    }
}

/// Write rows with shortest round-trip float formatting.
pub fn write_trace_to<W: Write>(rows: &[TraceRow], out: W, format: TraceFormat) -> Result<()> {
    match format {
        TraceFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
            w.write_record(TRACE_HEADER.split(','))?;
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        TraceFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, rows)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn write_trace(rows: &[TraceRow], path: &Path, format: TraceFormat) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    write_trace_to(rows, file, format)
}

pub fn read_trace(path: &Path, format: TraceFormat) -> Result<Vec<TraceRow>> {
    let file = BufReader::new(File::open(path)?);
    match format {
        TraceFormat::Csv => {
            let mut r = csv::Reader::from_reader(file);
            let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
            if header.join(",") != TRACE_HEADER {
                return Err(Error::Input(format!("unexpected trace header '{}'", header.join(","))));
            }
            Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
        }
        TraceFormat::Json => Ok(serde_json::from_reader(file)?),
    }
}
