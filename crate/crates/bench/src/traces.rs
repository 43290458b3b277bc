//! Trace CSV files.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use span_core::TraceRecord;

use crate::BenchError;

pub const TRACE_HEADER: &str = "iteration,wall_clock_s,loss,grad_norm,hessian_err,lambda_used";

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    iteration: usize,
    wall_clock_s: f64,
    loss: f64,
    grad_norm: f64,
    hessian_err: Option<f64>,
    lambda_used: Option<f64>,
}

impl From<&TraceRecord> for Row {
    fn from(r: &TraceRecord) -> Self {
        Self {
            iteration: r.iteration,
            wall_clock_s: r.wall_clock_s,
            loss: r.loss,
            grad_norm: r.grad_norm,
            hessian_err: r.hessian_err,
            lambda_used: r.lambda_used,
        }
    }
}

impl From<Row> for TraceRecord {
    fn from(r: Row) -> Self {
        Self {
            iteration: r.iteration,
            wall_clock_s: r.wall_clock_s,
            loss: r.loss,
            grad_norm: r.grad_norm,
            hessian_err: r.hessian_err,
            lambda_used: r.lambda_used,
        }
    }
}

/// Writes the header even for an empty trace.
pub fn write_trace<W: Write>(out: W, trace: &[TraceRecord]) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRACE_HEADER.split(','))?;
    for r in trace {
        w.serialize(Row::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRecord>, BenchError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != TRACE_HEADER {
        return Err(BenchError::IncompatibleTraces(format!("unexpected header {:?}", header.join(","))));
    }
    r.deserialize::<Row>()
        .map(|row| Ok(row?.into()))
        .collect()
}

pub fn save_trace(path: &Path, trace: &[TraceRecord]) -> Result<(), BenchError> {
    write_trace(std::fs::File::create(path)?, trace)
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceRecord>, BenchError> {
    read_trace(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(iteration: usize, err: Option<f64>) -> TraceRecord {
        TraceRecord {
            iteration,
            wall_clock_s: 0.25 * iteration as f64,
            loss: 1.0 / (1 + iteration) as f64,
            grad_norm: 0.1,
            hessian_err: err,
            lambda_used: None,
        }
    }

    #[test]
    fn header_and_empty_cells() {
        let mut buf = Vec::new();
        write_trace(&mut buf, &[rec(1, None), rec(2, Some(0.5))]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines[1], "1,0.25,0.5,0.1,,");
        assert_eq!(lines[2], "2,0.5,0.3333333333333333,0.1,0.5,");
    }

    #[test]
    fn round_trip() {
        let trace = vec![rec(1, None), rec(2, Some(1e-300)), rec(3, Some(7.5))];
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        assert_eq!(read_trace(buf.as_slice()).unwrap(), trace);
    }

    #[test]
    fn empty_trace_keeps_header() {
        let mut buf = Vec::new();
        write_trace(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), TRACE_HEADER);
    }

    #[test]
    fn foreign_header_is_rejected() {
        let r = read_trace("a,b\n1,2\n".as_bytes());
        assert!(matches!(r, Err(BenchError::IncompatibleTraces(_))));
    }
}
