//! Result files: per-mission and per-query CSVs plus `metrics.json`.
//!
//! Each CSV starts with a `# header: {json}` line carrying the run
//! configuration so metrics can be recomputed from the file alone. Indices are
//! written 1-based.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MetricsReport, MissionRecord, QueryRecord, QueryStatus};
use crate::error::ExperimentError;

pub const MISSIONS_FILE: &str = "exp1_missions.csv";
pub const EXP1_QUERIES_FILE: &str = "exp1_queries.csv";
pub const EXP2_QUERIES_FILE: &str = "exp2_queries.csv";
pub const METRICS_FILE: &str = "metrics.json";

const HEADER_PREFIX: &str = "# header: ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultHeader {
    pub experiment: String,
    pub method: String,
    pub tolerance: f64,
    pub seed: Option<u64>,
    /// Manifest file written alongside the results.
    pub manifest: String,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub header: ResultHeader,
    pub metrics: MetricsReport,
}

fn io_err(path: &Path, source: std::io::Error) -> ExperimentError {
    ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path, header: &ResultHeader) -> Result<csv::Writer<BufWriter<File>>, ExperimentError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{HEADER_PREFIX}{}", serde_json::to_string(header)?).map_err(|e| io_err(path, e))?;
    Ok(csv::Writer::from_writer(w))
}

fn read_header(path: &Path) -> Result<ResultHeader, ExperimentError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut line = String::new();
    BufReader::new(file).read_line(&mut line).map_err(|e| io_err(path, e))?;
    let json = line
        .trim_end()
        .strip_prefix(HEADER_PREFIX)
        .ok_or_else(|| ExperimentError::InvalidInput(format!("{}: missing header line", path.display())))?;
    Ok(serde_json::from_str(json)?)
}

fn reader(path: &Path) -> Result<csv::Reader<File>, ExperimentError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file))
}

fn parse_index(s: &str, what: &str) -> Result<usize, ExperimentError> {
    match s.parse::<usize>() {
        Ok(i) if i >= 1 => Ok(i - 1),
        _ => Err(ExperimentError::InvalidInput(format!("bad {what} index {s:?}"))),
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64, ExperimentError> {
    s.parse::<f64>()
        .map_err(|_| ExperimentError::InvalidInput(format!("bad {what} value {s:?}")))
}

pub fn write_missions(path: &Path, header: &ResultHeader, missions: &[MissionRecord]) -> Result<(), ExperimentError> {
    let mut w = create(path, header)?;
    w.write_record(["start", "goal", "method", "arrived", "goal_error", "arrival_query"])?;
    for m in missions {
        w.write_record([
            (m.start + 1).to_string(),
            m.goal.to_string(),
            m.method.clone(),
            m.arrived.to_string(),
            m.goal_error.to_string(),
            m.arrival_query.map(|k| (k + 1).to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Missions and the header they were written with. Completion is recomputed
/// from the header tolerance.
pub fn read_missions(path: &Path) -> Result<(ResultHeader, Vec<MissionRecord>), ExperimentError> {
    let header = read_header(path)?;
    let mut out = Vec::new();
    for row in reader(path)?.records() {
        let row = row?;
        if row.len() < 5 {
            return Err(ExperimentError::InvalidInput(format!("{}: short row", path.display())));
        }
        let arrived = match &row[3] {
            "true" => true,
            "false" => false,
            s => return Err(ExperimentError::InvalidInput(format!("bad arrived flag {s:?}"))),
        };
        let goal_error = parse_f64(&row[4], "goal_error")?;
        let arrival_query = match row.get(5) {
            Some(s) if !s.is_empty() => Some(parse_index(s, "arrival query")?),
            _ => None,
        };
        out.push(MissionRecord {
            start: parse_index(&row[0], "start")?,
            goal: parse_f64(&row[1], "goal")?,
            method: row[2].to_string(),
            arrived,
            arrival_query,
            goal_error,
            completed: arrived && goal_error <= header.tolerance,
        });
    }
    Ok((header, out))
}

pub fn write_queries(path: &Path, header: &ResultHeader, queries: &[QueryRecord]) -> Result<(), ExperimentError> {
    let mut w = create(path, header)?;
    w.write_record(["query", "method", "status", "error"])?;
    for q in queries {
        w.write_record([
            (q.query + 1).to_string(),
            q.method.clone(),
            q.status.as_str().to_string(),
            q.error.map(|e| e.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_queries(path: &Path) -> Result<(ResultHeader, Vec<QueryRecord>), ExperimentError> {
    let header = read_header(path)?;
    let mut out = Vec::new();
    for row in reader(path)?.records() {
        let row = row?;
        if row.len() < 4 {
            return Err(ExperimentError::InvalidInput(format!("{}: short row", path.display())));
        }
        let status = QueryStatus::parse(&row[2])
            .ok_or_else(|| ExperimentError::InvalidInput(format!("bad status {:?}", &row[2])))?;
        let error = if row[3].is_empty() {
            None
        } else {
            Some(parse_f64(&row[3], "error")?)
        };
        out.push(QueryRecord {
            query: parse_index(&row[0], "query")?,
            method: row[1].to_string(),
            status,
            error,
        });
    }
    Ok((header, out))
}

pub fn write_metrics(path: &Path, file: &MetricsFile) -> Result<(), ExperimentError> {
    let text = serde_json::to_string_pretty(file)?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn read_metrics(path: &Path) -> Result<MetricsFile, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
