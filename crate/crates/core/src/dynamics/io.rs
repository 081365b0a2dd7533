//! Trace CSV and schedule files.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::game::{Color, MoveRecord, Vertex};

use super::Schedule;

pub const TRACE_HEADER: &str = "step,vertex,from,to,b,g,delta,bad_edges_after";

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn parse_err(line: usize, msg: impl Into<String>) -> TraceIoError {
    TraceIoError::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn write_trace_csv<W: Write>(mut out: W, moves: &[MoveRecord]) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for m in moves {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            m.step, m.vertex, m.from, m.to, m.b, m.g, m.delta_bad_edges, m.bad_edges_after
        )?;
    }
    Ok(())
}

pub fn read_trace_csv<R: BufRead>(input: R) -> Result<Vec<MoveRecord>, TraceIoError> {
    let mut moves = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if i == 0 {
            if line.trim() != TRACE_HEADER {
                return Err(parse_err(
                    lineno,
                    format!("expected header {TRACE_HEADER:?}"),
                ));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 8 {
            return Err(parse_err(
                lineno,
                format!("expected 8 fields, got {}", fields.len()),
            ));
        }
        let num = |j: usize| -> Result<i64, TraceIoError> {
            fields[j]
                .parse::<i64>()
                .map_err(|_| parse_err(lineno, format!("bad integer {:?}", fields[j])))
        };
        let color = |j: usize| -> Result<Color, TraceIoError> {
            let mut chars = fields[j].chars();
            match (chars.next().and_then(Color::from_char), chars.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(parse_err(lineno, format!("bad color {:?}", fields[j]))),
            }
        };
        let nonneg = |j: usize| -> Result<i64, TraceIoError> {
            let v = num(j)?;
            if v < 0 {
                return Err(parse_err(lineno, format!("negative value in column {j}")));
            }
            Ok(v)
        };
        moves.push(MoveRecord {
            step: nonneg(0)? as usize,
            vertex: nonneg(1)? as Vertex,
            from: color(2)?,
            to: color(3)?,
            b: nonneg(4)? as u32,
            g: nonneg(5)? as u32,
            delta_bad_edges: num(6)?,
            bad_edges_after: nonneg(7)? as u64,
        });
    }
    Ok(moves)
}

/// One vertex id per line.
pub fn write_schedule<W: Write>(mut out: W, schedule: &Schedule) -> std::io::Result<()> {
    for v in schedule.iter() {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

pub fn read_schedule<R: BufRead>(input: R) -> Result<Schedule, TraceIoError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(
            t.parse::<Vertex>()
                .map_err(|_| parse_err(i + 1, format!("bad vertex id {t:?}")))?,
        );
    }
    Ok(Schedule(out))
}
