//! CSV exports of accuracy vectors and probe tables.

use std::io::Write;

use crate::error::{Error, Result};
use crate::nesprindt::{BaRecord, ProbeRecord};

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Csv(e.to_string())
}

/// Header `outer,inner,percent,ba`, one line per record.
pub fn write_ba_csv<W: Write>(records: &[BaRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["outer", "inner", "percent", "ba"])
        .map_err(io_err)?;
    for r in records {
        w.write_record([
            r.outer.to_string(),
            r.inner.to_string(),
            r.percent.to_string(),
            r.ba.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn write_probe_csv<W: Write>(records: &[ProbeRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "part",
        "start",
        "end",
        "first_row",
        "last_row",
        "ba",
        "single_class",
    ])
    .map_err(io_err)?;
    for r in records {
        w.write_record([
            r.part.to_string(),
            r.start.to_string(),
            r.end.to_string(),
            r.first_row.to_string(),
            r.last_row.to_string(),
            r.ba.to_string(),
            r.single_class.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
