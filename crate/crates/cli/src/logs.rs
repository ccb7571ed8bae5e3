//! JSONL log files.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use adlift::model::{
    parse_log_line, BidOppRecord, EventRecord, ImpressionRecord, LogKind, LogRecord, ParseError,
};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: ParseError,
    },
}

/// Parses every non-blank line. On failure reports the first bad line.
pub fn read_log(path: &Path, kind: LogKind) -> Result<Vec<LogRecord>, LogError> {
    let text = fs::read_to_string(path).map_err(|source| LogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let parsed: Vec<Result<LogRecord, ParseError>> = lines
        .par_iter()
        .map(|(_, l)| parse_log_line(l, kind))
        .collect();
    parsed
        .into_iter()
        .zip(&lines)
        .map(|(r, (i, _))| {
            r.map_err(|source| LogError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                source,
            })
        })
        .collect()
}

pub fn read_impressions(path: &Path) -> Result<Vec<ImpressionRecord>, LogError> {
    Ok(read_log(path, LogKind::Impression)?
        .into_iter()
        .filter_map(|r| match r {
            LogRecord::Impression(i) => Some(i),
            _ => None,
        })
        .collect())
}

pub fn read_events(path: &Path) -> Result<Vec<EventRecord>, LogError> {
    Ok(read_log(path, LogKind::Event)?
        .into_iter()
        .filter_map(|r| match r {
            LogRecord::Event(e) => Some(e),
            _ => None,
        })
        .collect())
}

pub fn read_bid_opps(path: &Path) -> Result<Vec<BidOppRecord>, LogError> {
    Ok(read_log(path, LogKind::BidOpp)?
        .into_iter()
        .filter_map(|r| match r {
            LogRecord::BidOpp(b) => Some(b),
            _ => None,
        })
        .collect())
}

pub fn write_log<I>(path: &Path, records: I) -> Result<(), LogError>
where
    I: IntoIterator<Item = LogRecord>,
{
    let io_err = |source| LogError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    for record in records {
        out.write_all(record.to_json_line().as_bytes())
            .map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
