//! Line-oriented file formats. Paths ending in `.gz` are compressed
//! transparently on read and write.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mobfuse_core::staypoint::GpsPoint;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

pub fn open(path: &Path) -> Result<Box<dyn BufRead>, IoError> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut r = BufReader::new(f);
    // Sniff the gzip magic so that misnamed files still work.
    let gz = r
        .fill_buf()
        .map_err(io_err(path))?
        .starts_with(&[0x1f, 0x8b]);
    Ok(if gz {
        Box::new(BufReader::new(MultiGzDecoder::new(r)))
    } else {
        Box::new(r)
    })
}

pub fn read_to_string(path: &Path) -> Result<String, IoError> {
    let mut s = String::new();
    open(path)?.read_to_string(&mut s).map_err(io_err(path))?;
    Ok(s)
}

/// Buffered writer that creates parent directories and compresses `.gz`.
pub struct Output {
    path: PathBuf,
    inner: Box<dyn Write>,
}

impl Output {
    pub fn create(path: &Path) -> Result<Self, IoError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let f = BufWriter::new(File::create(path).map_err(io_err(path))?);
        let inner: Box<dyn Write> = if is_gz(path) {
            // Fixed header fields (no mtime, no name) keep the bytes stable.
            Box::new(GzEncoder::new(f, Compression::default()))
        } else {
            Box::new(f)
        };
        Ok(Self {
            path: path.to_path_buf(),
            inner,
        })
    }

    pub fn write_all(&mut self, bytes: &[u8]) -> Result<(), IoError> {
        self.inner.write_all(bytes).map_err(io_err(&self.path))
    }

    pub fn finish(mut self) -> Result<(), IoError> {
        self.inner.flush().map_err(io_err(&self.path))
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let mut out = Output::create(path)?;
    out.write_all(bytes)?;
    out.finish()
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    let mut out = Output::create(path)?;
    for item in items {
        let mut line = serde_json::to_vec(item).map_err(|e| IoError::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        line.push(b'\n');
        out.write_all(&line)?;
    }
    out.finish()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut s = serde_json::to_vec_pretty(value).map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    s.push(b'\n');
    write_bytes(path, &s)
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        out.push(rec.map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| IoError::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    write_bytes(path, &bytes)
}

fn stem_is(path: &Path, ext: &str) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    let name = name.strip_suffix(".gz").unwrap_or(name);
    name.ends_with(ext)
}

/// GPS points from CSV (`agent_id,timestamp,lat,lon`) or JSON lines, chosen
/// by extension.
pub fn read_gps(path: &Path) -> Result<Vec<GpsPoint>, IoError> {
    if stem_is(path, ".csv") {
        read_csv(path)
    } else {
        read_jsonl(path)
    }
}

pub fn write_gps(path: &Path, points: &[GpsPoint]) -> Result<(), IoError> {
    if stem_is(path, ".csv") {
        write_csv(path, points)
    } else {
        write_jsonl(path, points)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TravelTime {
    pub from_zone: String,
    pub to_zone: String,
    pub minutes: f64,
}

pub fn read_travel_times(path: &Path) -> Result<Vec<(String, String, f64)>, IoError> {
    let rows: Vec<TravelTime> = read_csv(path)?;
    Ok(rows
        .into_iter()
        .map(|r| (r.from_zone, r.to_zone, r.minutes))
        .collect())
}

/// One OD cell as stored in `origin,destination,count` CSV files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdCell {
    pub origin: String,
    pub destination: String,
    pub count: f64,
}

/// Dense matrix over the sorted union of region names.
pub fn read_od(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), IoError> {
    let cells: Vec<OdCell> = read_csv(path)?;
    let mut regions: Vec<String> = cells
        .iter()
        .flat_map(|c| [c.origin.clone(), c.destination.clone()])
        .collect();
    regions.sort();
    regions.dedup();
    let mut m = vec![vec![0.0; regions.len()]; regions.len()];
    for c in &cells {
        let i = regions.binary_search(&c.origin).expect("collected above");
        let j = regions
            .binary_search(&c.destination)
            .expect("collected above");
        m[i][j] += c.count;
    }
    Ok((regions, m))
}

pub fn write_od(path: &Path, regions: &[String], counts: &[Vec<f64>]) -> Result<(), IoError> {
    let mut cells = Vec::new();
    for (i, row) in counts.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            cells.push(OdCell {
                origin: regions[i].clone(),
                destination: regions[j].clone(),
                count,
            });
        }
    }
    write_csv(path, &cells)
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    read_csv(path)
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IoError> {
    write_csv(path, rows)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the file's stored bytes (not the decompressed content).
pub fn file_sha256(path: &Path) -> Result<String, IoError> {
    Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
}
