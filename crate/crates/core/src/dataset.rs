//! On-disk dataset formats.
//!
//! A dataset directory holds:
//!
//! * `poses.csv` with header `index,x,y,theta[,odom]` (1-based index),
//! * `features.bin`: magic `VPRF`, `u32` version, `u32` rows, `u32` dim,
//!   then `rows * dim` little-endian `f32`,
//! * optionally `provenance.csv` with the synthetic ground-truth flags.
//!
//! A single-file CSV variant (`index,x,y,theta[,odom],f1..fm`) is also
//! accepted for small hand-written traverses.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::DatasetError;
use crate::types::{Pose2D, QueryStream, Traverse};

pub const FEATURE_MAGIC: &[u8; 4] = b"VPRF";
pub const FEATURE_VERSION: u32 = 1;

pub const POSES_FILE: &str = "poses.csv";
pub const FEATURES_FILE: &str = "features.bin";
pub const PROVENANCE_FILE: &str = "provenance.csv";

/// Supported dataset layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// Directory with `poses.csv` + `features.bin`.
    Directory,
    /// One CSV file with poses and feature columns on each row.
    Csv,
}

/// Ground-truth provenance of one synthetic query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryProvenance {
    /// Reference the query was actually captured at.
    pub gt_index: usize,
    /// Whether the query features were copied from a wrong reference.
    pub aliased: bool,
    /// Reference whose features the query was built from.
    pub source_index: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> DatasetError {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => DatasetError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => DatasetError::MalformedRow {
            row,
            reason: format!("{other:?}"),
        },
    }
}

struct PoseTable {
    poses: Vec<Pose2D>,
    odom: Option<Vec<f64>>,
    features: Vec<f32>,
    dim: usize,
}

fn parse_f64(field: &str, row: usize, what: &str) -> Result<f64, DatasetError> {
    let v: f64 = field.trim().parse().map_err(|_| DatasetError::MalformedRow {
        row,
        reason: format!("cannot parse {what} '{field}'"),
    })?;
    if !v.is_finite() {
        return Err(DatasetError::NonFinite { row });
    }
    Ok(v)
}

/// Parse a pose table. Rows are reported 1-based, matching the index column.
fn read_pose_table(path: &Path, with_features: bool) -> Result<PoseTable, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(BufReader::new(file));
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let names: Vec<String> = header.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    let malformed = |reason: String| DatasetError::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    if names.len() < 4 || names[..4] != ["index", "x", "y", "theta"] {
        return Err(malformed(format!(
            "expected leading columns index,x,y,theta, found {}",
            names.join(",")
        )));
    }
    let has_odom = names.get(4).map(|n| n == "odom").unwrap_or(false);
    let feat_start = if has_odom { 5 } else { 4 };
    let header_dim = names.len() - feat_start;
    if !with_features && header_dim != 0 {
        return Err(malformed(format!("unexpected columns after {}", names[feat_start - 1])));
    }
    if with_features && header_dim == 0 {
        return Err(malformed("no feature columns".into()));
    }

    let mut poses = Vec::new();
    let mut odom = Vec::new();
    let mut features = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() < feat_start {
            return Err(DatasetError::MalformedRow {
                row,
                reason: format!("expected at least {feat_start} fields, found {}", rec.len()),
            });
        }
        let index = parse_f64(&rec[0], row, "index")?;
        if index != row as f64 {
            return Err(DatasetError::MalformedRow {
                row,
                reason: format!("index column is {index}, expected {row}"),
            });
        }
        let x = parse_f64(&rec[1], row, "x")?;
        let y = parse_f64(&rec[2], row, "y")?;
        let theta = parse_f64(&rec[3], row, "theta")?;
        poses.push(Pose2D::new(x, y, theta));
        if has_odom {
            let w = parse_f64(&rec[4], row, "odom")?;
            if let Some(prev) = odom.last() {
                if w < *prev {
                    return Err(DatasetError::NonMonotoneOdometry {
                        row,
                        previous: *prev,
                        current: w,
                    });
                }
            }
            odom.push(w);
        }
        let dim = rec.len() - feat_start;
        if with_features {
            if dim != header_dim {
                return Err(DatasetError::DimensionMismatch {
                    row,
                    expected: header_dim,
                    found: dim,
                });
            }
            for f in rec.iter().skip(feat_start) {
                let v: f32 = f.trim().parse().map_err(|_| DatasetError::MalformedRow {
                    row,
                    reason: format!("cannot parse feature '{f}'"),
                })?;
                if !v.is_finite() {
                    return Err(DatasetError::NonFinite { row });
                }
                features.push(v);
            }
        } else if dim != 0 {
            return Err(DatasetError::MalformedRow {
                row,
                reason: format!("{dim} unexpected trailing fields"),
            });
        }
    }
    Ok(PoseTable {
        poses,
        odom: has_odom.then_some(odom),
        features,
        dim: header_dim,
    })
}

fn write_pose_table(
    path: &Path,
    poses: &[Pose2D],
    odom: Option<&[f64]>,
    features: Option<(&[f32], usize)>,
) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut header = String::from("index,x,y,theta");
    if odom.is_some() {
        header.push_str(",odom");
    }
    if let Some((_, dim)) = features {
        for j in 1..=dim {
            header.push_str(&format!(",f{j}"));
        }
    }
    let mut out = header;
    out.push('\n');
    for (i, p) in poses.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}", i + 1, p.x, p.y, p.theta));
        if let Some(o) = odom {
            out.push_str(&format!(",{}", o[i]));
        }
        if let Some((f, dim)) = features {
            for v in &f[i * dim..(i + 1) * dim] {
                out.push_str(&format!(",{v}"));
            }
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Encode a feature matrix in the `VPRF` binary layout.
pub fn encode_features(features: &[f32], rows: usize, dim: usize) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + features.len() * 4);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(rows as u32).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for v in features {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

/// Decode a `VPRF` buffer into `(features, rows, dim)`.
pub fn decode_features(bytes: &[u8]) -> Result<(Vec<f32>, usize, usize), DatasetError> {
    let bad = |m: &str| DatasetError::FeatureFile(m.to_string());
    if bytes.len() < 16 {
        return Err(bad("file shorter than header"));
    }
    if &bytes[..4] != FEATURE_MAGIC {
        return Err(bad("bad magic bytes"));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = word(4);
    if version != FEATURE_VERSION {
        return Err(DatasetError::FeatureFile(format!("unsupported version {version}")));
    }
    let rows = word(8) as usize;
    let dim = word(12) as usize;
    let expected = rows
        .checked_mul(dim)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| bad("size overflow"))?;
    if bytes.len() - 16 != expected {
        return Err(DatasetError::FeatureFile(format!(
            "payload of {} bytes, expected {} for {}x{}",
            bytes.len() - 16,
            expected,
            rows,
            dim
        )));
    }
    let features = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((features, rows, dim))
}

fn read_features(path: &Path) -> Result<(Vec<f32>, usize, usize), DatasetError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    decode_features(&bytes)
}

fn write_features(path: &Path, features: &[f32], rows: usize, dim: usize) -> Result<(), DatasetError> {
    fs::write(path, encode_features(features, rows, dim)).map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn label_of(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn read_directory(dir: &Path) -> Result<PoseTable, DatasetError> {
    let mut table = read_pose_table(&dir.join(POSES_FILE), false)?;
    let (features, rows, dim) = read_features(&dir.join(FEATURES_FILE))?;
    if rows != table.poses.len() {
        return Err(DatasetError::Inconsistent(format!(
            "{} pose rows but {} feature rows",
            table.poses.len(),
            rows
        )));
    }
    table.features = features;
    table.dim = dim;
    Ok(table)
}

/// Load a reference traverse.
pub fn load_traverse(path: &Path, format: DatasetFormat) -> Result<Traverse, DatasetError> {
    let table = match format {
        DatasetFormat::Directory => read_directory(path)?,
        DatasetFormat::Csv => read_pose_table(path, true)?,
    };
    Traverse::new(table.poses, table.odom, table.features, table.dim, label_of(path))
}

/// Save a traverse. Odometry is always written explicitly.
pub fn save_traverse(traverse: &Traverse, path: &Path, format: DatasetFormat) -> Result<(), DatasetError> {
    match format {
        DatasetFormat::Directory => {
            ensure_dir(path)?;
            write_pose_table(&path.join(POSES_FILE), traverse.poses(), Some(traverse.odom()), None)?;
            write_features(
                &path.join(FEATURES_FILE),
                traverse.features_flat(),
                traverse.len(),
                traverse.dim(),
            )
        }
        DatasetFormat::Csv => write_pose_table(
            path,
            traverse.poses(),
            Some(traverse.odom()),
            Some((traverse.features_flat(), traverse.dim())),
        ),
    }
}

/// Load a query stream stored in the directory layout; the `odom` column
/// holds the odometer reading.
pub fn load_queries(dir: &Path) -> Result<QueryStream, DatasetError> {
    let table = read_directory(dir)?;
    QueryStream::new(table.poses, table.odom, table.features, table.dim, 10.0)
}

pub fn save_queries(queries: &QueryStream, dir: &Path) -> Result<(), DatasetError> {
    ensure_dir(dir)?;
    write_pose_table(
        &dir.join(POSES_FILE),
        queries.ground_truth_poses(),
        Some(queries.odometer()),
        None,
    )?;
    write_features(&dir.join(FEATURES_FILE), queries.features_flat(), queries.len(), queries.dim())
}

pub fn save_provenance(provenance: &[QueryProvenance], dir: &Path) -> Result<(), DatasetError> {
    let path = dir.join(PROVENANCE_FILE);
    let mut out = String::from("index,gt_index,aliased,source_index\n");
    for (i, p) in provenance.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            i + 1,
            p.gt_index + 1,
            u8::from(p.aliased),
            p.source_index + 1
        ));
    }
    fs::write(&path, out).map_err(io_err(&path))
}

/// Returns `Ok(None)` when the directory carries no provenance file.
pub fn load_provenance(dir: &Path) -> Result<Option<Vec<QueryProvenance>>, DatasetError> {
    let path = dir.join(PROVENANCE_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(&path)
        .map_err(|e| csv_err(&path, e))?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| csv_err(&path, e))?;
        let field = |k: usize| -> Result<usize, DatasetError> {
            rec.get(k)
                .and_then(|s| s.trim().parse::<usize>().ok())
                .ok_or_else(|| DatasetError::MalformedRow {
                    row,
                    reason: format!("bad provenance field {k}"),
                })
        };
        let gt = field(1)?;
        let aliased = field(2)?;
        let src = field(3)?;
        if gt == 0 || src == 0 || aliased > 1 {
            return Err(DatasetError::MalformedRow {
                row,
                reason: "provenance indices are 1-based and the flag is 0/1".into(),
            });
        }
        out.push(QueryProvenance {
            gt_index: gt - 1,
            aliased: aliased == 1,
            source_index: src - 1,
        });
    }
    Ok(Some(out))
}

/// Paths of the reference and query halves of a generated dataset.
pub fn dataset_paths(root: &Path) -> (PathBuf, PathBuf) {
    (root.join("reference"), root.join("query"))
}
