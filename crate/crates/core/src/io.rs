//! Columnar CSV and JSON output with atomic writes.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! values always produce equal bytes.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::engine::{EventKind, TrajectoryRecord};
use crate::error::Result;

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json(value)?)
}

/// Builds a CSV document from a header and rows of already formatted cells.
pub fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| std::io::Error::other(e.to_string()).into())
}

pub fn fmt(x: f64) -> String {
    format!("{x}")
}

fn coord_header(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}{i}")).collect()
}

/// `trajectory,t,x1..xd,v1..vd,energy`; energy is empty in reservoir mode.
pub fn samples_csv(records: &[TrajectoryRecord]) -> Result<Vec<u8>> {
    let d = records.first().map_or(0, |r| r.dim);
    let mut header = vec!["trajectory".to_string(), "t".to_string()];
    header.extend(coord_header("x", d));
    header.extend(coord_header("v", d));
    header.push("energy".into());
    let rows = records.iter().flat_map(|r| {
        (0..r.sample_times.len()).map(move |k| {
            let mut row = vec![r.meta.index.to_string(), fmt(r.sample_times[k])];
            row.extend(r.x_samples[k].iter().map(|&x| fmt(x)));
            row.extend(r.v_samples[k].iter().map(|&v| fmt(v)));
            row.push(r.energy.get(k).map(|&e| fmt(e)).unwrap_or_default());
            row
        })
    });
    csv_bytes(&header, rows)
}

/// `trajectory,particle,entry,exit,rel_speed,kind,left_censored`; `exit` is
/// empty for interactions still open at the horizon.
pub fn events_csv(records: &[TrajectoryRecord]) -> Result<Vec<u8>> {
    let header: Vec<String> = [
        "trajectory",
        "particle",
        "entry",
        "exit",
        "rel_speed",
        "kind",
        "left_censored",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows = records.iter().flat_map(|r| {
        r.events.iter().map(move |e| {
            vec![
                r.meta.index.to_string(),
                e.particle.to_string(),
                fmt(e.entry),
                e.exit.map(fmt).unwrap_or_default(),
                fmt(e.rel_speed),
                match e.kind {
                    EventKind::FirstInteraction => "first_interaction".into(),
                    EventKind::Recollision => "recollision".into(),
                },
                e.left_censored.to_string(),
            ]
        })
    });
    csv_bytes(&header, rows)
}

/// Velocity samples `label,index,v1..vd`.
pub fn velocity_table_csv(label: &str, tau: f64, samples: &[Vec<f64>]) -> Result<Vec<u8>> {
    let d = samples.first().map_or(0, |v| v.len());
    let mut header = vec![label.to_string(), "index".to_string()];
    header.extend(coord_header("v", d));
    let rows = samples.iter().enumerate().map(|(i, v)| {
        let mut row = vec![fmt(tau), i.to_string()];
        row.extend(v.iter().map(|&x| fmt(x)));
        row
    });
    csv_bytes(&header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
