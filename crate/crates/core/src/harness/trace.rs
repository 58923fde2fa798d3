use super::{write_atomic, ErrorTrace, HarnessError, TraceRow};
use std::io::{Read, Write};
use std::path::Path;

pub const TRACE_HEADER: [&str; 4] = [
    "iteration",
    "max_rel_error",
    "residual_pbvi",
    "residual_dpbvi",
];

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trace<W: Write>(trace: &ErrorTrace, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in trace.rows() {
        w.write_record([
            r.iteration.to_string(),
            num(r.max_rel_error),
            num(r.residual_pbvi),
            num(r.residual_dpbvi),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<ErrorTrace, HarnessError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?;
    if header.iter().ne(TRACE_HEADER) {
        return Err(HarnessError::Format(format!(
            "unexpected trace header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<&str, HarnessError> {
            rec.get(i)
                .ok_or_else(|| HarnessError::Format(format!("line {line}: missing field {i}")))
        };
        let real = |i: usize| -> Result<f64, HarnessError> {
            let f = field(i)?;
            f.parse()
                .map_err(|_| HarnessError::Format(format!("line {line}: bad number `{f}`")))
        };
        let it = field(0)?;
        rows.push(TraceRow {
            iteration: it
                .parse()
                .map_err(|_| HarnessError::Format(format!("line {line}: bad iteration `{it}`")))?,
            max_rel_error: real(1)?,
            residual_pbvi: real(2)?,
            residual_dpbvi: real(3)?,
        });
    }
    ErrorTrace::new(rows)
}

/// Writes the trace as CSV, replacing `path` atomically.
pub fn export_trace(trace: &ErrorTrace, path: &Path) -> Result<(), HarnessError> {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf)?;
    write_atomic(path, &buf)?;
    Ok(())
}

pub fn import_trace(path: &Path) -> Result<ErrorTrace, HarnessError> {
    read_trace(std::fs::File::open(path)?)
}
