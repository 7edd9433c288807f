//! Per-project feature cache.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! magic "BLFC" | version u32 | project str | channel count u32 | channel strs
//! row count u64 | rows: bug_id str, path str, 70 x f64, label u8, year i32
//! ```
//!
//! where `str` is a u32 byte length followed by UTF-8 bytes. The CSV export
//! carries the same columns; floats are written in shortest round-trip form
//! so the text export is lossless.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::{channel_manifest, grid_manifest, PairFeatureVector, GRID_CELLS};

pub const MAGIC: &[u8; 4] = b"BLFC";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("not a feature cache (bad magic)")]
    BadMagic,
    #[error("unsupported feature cache version {0}")]
    UnsupportedVersion(u32),
    #[error("feature cache channel manifest does not match this build")]
    ChannelMismatch,
    #[error("malformed feature cache: {0}")]
    Malformed(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_str<R: Read>(r: &mut R) -> Result<String, CacheError> {
    let len = u32::from_le_bytes(read_array(r)?) as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| CacheError::Malformed("non-UTF-8 string".into()))
}

/// Writes one project's rows in binary form.
pub fn write_binary<W: Write>(
    mut w: W,
    project: &str,
    rows: &[PairFeatureVector],
) -> Result<(), CacheError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_str(&mut w, project)?;
    let channels = channel_manifest();
    w.write_all(&(channels.len() as u32).to_le_bytes())?;
    for c in &channels {
        write_str(&mut w, c)?;
    }
    w.write_all(&(rows.len() as u64).to_le_bytes())?;
    for row in rows {
        if row.scores.len() != GRID_CELLS {
            return Err(CacheError::Malformed(format!(
                "row {}:{} has {} scores",
                row.bug_id,
                row.file_path,
                row.scores.len()
            )));
        }
        write_str(&mut w, &row.bug_id)?;
        write_str(&mut w, &row.file_path)?;
        for s in &row.scores {
            w.write_all(&s.to_le_bytes())?;
        }
        w.write_all(&[row.label as u8])?;
        w.write_all(&row.year.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a binary cache; returns the project name and rows.
pub fn read_binary<R: Read>(mut r: R) -> Result<(String, Vec<PairFeatureVector>), CacheError> {
    let magic: [u8; 4] = read_array(&mut r).map_err(|_| CacheError::BadMagic)?;
    if &magic != MAGIC {
        return Err(CacheError::BadMagic);
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(CacheError::UnsupportedVersion(version));
    }
    let project = read_str(&mut r)?;
    let n_channels = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let channels = (0..n_channels)
        .map(|_| read_str(&mut r))
        .collect::<Result<Vec<_>, _>>()?;
    if channels != channel_manifest() {
        return Err(CacheError::ChannelMismatch);
    }
    let n_rows = u64::from_le_bytes(read_array(&mut r)?);
    let mut rows = Vec::new();
    for _ in 0..n_rows {
        let bug_id = read_str(&mut r)?;
        let file_path = read_str(&mut r)?;
        let mut scores = Vec::with_capacity(GRID_CELLS);
        for _ in 0..GRID_CELLS {
            scores.push(f64::from_le_bytes(read_array(&mut r)?));
        }
        let label = match read_array::<1, _>(&mut r)?[0] {
            0 => false,
            1 => true,
            b => return Err(CacheError::Malformed(format!("label byte {b}"))),
        };
        let year = i32::from_le_bytes(read_array(&mut r)?);
        rows.push(PairFeatureVector {
            project: project.clone(),
            bug_id,
            file_path,
            scores,
            label,
            year,
        });
    }
    Ok((project, rows))
}

fn csv_header() -> Vec<String> {
    let mut h = vec!["project".to_string(), "bug_id".into(), "path".into()];
    h.extend(grid_manifest());
    h.push("label".into());
    h.push("year".into());
    h
}

pub fn write_csv<W: Write>(w: W, rows: &[PairFeatureVector]) -> Result<(), CacheError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(csv_header())?;
    for row in rows {
        let mut rec = vec![row.project.clone(), row.bug_id.clone(), row.file_path.clone()];
        rec.extend(row.scores.iter().map(|s| s.to_string()));
        rec.push((row.label as u8).to_string());
        rec.push(row.year.to_string());
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<PairFeatureVector>, CacheError> {
    let mut input = csv::Reader::from_reader(r);
    let header: Vec<String> = input.headers()?.iter().map(str::to_string).collect();
    if header != csv_header() {
        return Err(CacheError::ChannelMismatch);
    }
    let bad = |what: &str, line: u64| CacheError::Malformed(format!("bad {what} on record {line}"));
    let mut rows = Vec::new();
    for (i, rec) in input.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 1;
        let scores = (3..3 + GRID_CELLS)
            .map(|k| rec[k].parse::<f64>().map_err(|_| bad("score", line)))
            .collect::<Result<Vec<_>, _>>()?;
        let label = match &rec[3 + GRID_CELLS] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("label", line)),
        };
        let year = rec[4 + GRID_CELLS].parse().map_err(|_| bad("year", line))?;
        rows.push(PairFeatureVector {
            project: rec[0].to_string(),
            bug_id: rec[1].to_string(),
            file_path: rec[2].to_string(),
            scores,
            label,
            year,
        });
    }
    Ok(rows)
}
