//! CSV trace export and violation records.

use std::io::{self, Write};

use crate::engine::{Trace, Violation};

pub const CSV_HEADER: &str = "trial,seed,algorithm,model,n,d,round,diameter,rate,decided_count";

/// Writes the header and one row per round of every trace.
pub fn write_csv<'a, W, I>(mut out: W, traces: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Trace>,
{
    writeln!(out, "{CSV_HEADER}")?;
    for trace in traces {
        write_rows(&mut out, trace)?;
    }
    Ok(())
}

pub fn write_rows<W: Write>(out: &mut W, trace: &Trace) -> io::Result<()> {
    for row in &trace.rows {
        write!(
            out,
            "{},{},{},{},{},{},{},{},",
            trace.trial, trace.seed, trace.algorithm, trace.model, trace.n, trace.d, row.round, row.diameter
        )?;
        if let Some(rate) = row.rate {
            write!(out, "{rate}")?;
        }
        writeln!(out, ",{}", row.decided_count)?;
    }
    Ok(())
}

pub fn csv_string<'a>(traces: impl IntoIterator<Item = &'a Trace>) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, traces).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV is ASCII")
}

/// One line per violation.
pub fn write_violations<W: Write>(mut out: W, violations: &[Violation]) -> io::Result<()> {
    for v in violations {
        writeln!(out, "{v}")?;
    }
    Ok(())
}
