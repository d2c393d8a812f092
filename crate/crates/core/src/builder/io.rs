//! Document-side file formats: embedding matrix, document days, per-document
//! events and cluster assignments.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::event::Day;

use super::{BuildError, DocEvent, DocRecord};

fn io_err(path: &Path, source: std::io::Error) -> BuildError {
    BuildError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> BuildError {
    BuildError::Malformed {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

/// Header `N: u64`, `D: u64`, then `N·D` little-endian `f32` values.
pub fn read_embeddings(path: &Path) -> Result<Vec<Vec<f64>>, BuildError> {
    let mut r = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut word = [0u8; 8];
    r.read_exact(&mut word).map_err(|e| io_err(path, e))?;
    let n = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word).map_err(|e| io_err(path, e))?;
    let d = u64::from_le_bytes(word) as usize;
    let mut rows = Vec::with_capacity(n);
    let mut buf = vec![0u8; d * 4];
    for _ in 0..n {
        r.read_exact(&mut buf).map_err(|e| io_err(path, e))?;
        rows.push(
            buf.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect(),
        );
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(|e| io_err(path, e))?;
    if !rest.is_empty() {
        return Err(malformed(path, 0, format!("{} trailing bytes", rest.len())));
    }
    Ok(rows)
}

pub fn write_embeddings(path: &Path, rows: &[Vec<f64>]) -> Result<(), BuildError> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(BuildError::Invalid("embedding rows differ in length".into()));
    }
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| io_err(path, e));
    put(&(rows.len() as u64).to_le_bytes())?;
    put(&(d as u64).to_le_bytes())?;
    for row in rows {
        for &x in row {
            put(&(x as f32).to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn data_lines(path: &Path) -> Result<Vec<(usize, String)>, BuildError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// `doc_id\tday` lines.
pub fn read_docs(path: &Path) -> Result<Vec<DocRecord>, BuildError> {
    data_lines(path)?
        .into_iter()
        .map(|(n, line)| {
            let mut parts = line.split('\t');
            let (Some(id), Some(day), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(malformed(path, n, "expected doc_id<TAB>day"));
            };
            let day: Day = day
                .trim()
                .parse()
                .map_err(|_| malformed(path, n, format!("bad day {day:?}")))?;
            Ok(DocRecord { id: id.to_string(), day })
        })
        .collect()
}

pub fn write_docs(path: &Path, docs: &[DocRecord]) -> Result<(), BuildError> {
    let mut text = String::new();
    for d in docs {
        text.push_str(&format!("{}\t{}\n", d.id, d.day));
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// `doc_id\tsubject\trelation\tobject` lines with names, not ids.
pub fn read_doc_events(path: &Path) -> Result<Vec<DocEvent>, BuildError> {
    data_lines(path)?
        .into_iter()
        .map(|(n, line)| {
            let parts: Vec<&str> = line.split('\t').collect();
            let [doc, s, r, o] = parts.as_slice() else {
                return Err(malformed(path, n, "expected 4 tab-separated fields"));
            };
            Ok(DocEvent {
                doc_id: doc.to_string(),
                subject: s.to_string(),
                relation: r.to_string(),
                object: o.to_string(),
            })
        })
        .collect()
}

pub fn write_doc_events<W: Write>(mut w: W, events: &[DocEvent]) -> std::io::Result<()> {
    for e in events {
        writeln!(w, "{}\t{}\t{}\t{}", e.doc_id, e.subject, e.relation, e.object)?;
    }
    Ok(())
}

/// `doc_id\tcluster_id`, `-1` for outliers.
pub fn write_assignment(path: &Path, docs: &[DocRecord], labels: &[Option<usize>]) -> Result<(), BuildError> {
    let mut text = String::new();
    for (d, l) in docs.iter().zip(labels) {
        match l {
            Some(c) => text.push_str(&format!("{}\t{c}\n", d.id)),
            None => text.push_str(&format!("{}\t-1\n", d.id)),
        }
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}
