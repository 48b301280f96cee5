//! Event stream files.
//!
//! CSV: one `t,x,y,p` row per event (seconds, ints, ±1), optional header.
//! Binary: packed little-endian records of f64 t, u16 x, u16 y, i8 p.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dsi::Event;
use crate::error::{Error, Result};

fn fmt_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: format!("line {line}: {}", reason.into()),
    }
}

pub fn write_events_csv(events: &[Event], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "t,x,y,p")?;
    for e in events {
        writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.polarity)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events_csv(path: impl AsRef<Path>) -> Result<Vec<Event>> {
    let path = path.as_ref();
    let r = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if i == 0 && line.starts_with('t') {
            continue; // header
        }
        let mut parts = line.split(',');
        let mut next = |name: &str| {
            parts
                .next()
                .ok_or_else(|| fmt_err(path, i + 1, format!("missing {name}")))
        };
        let t: f64 = next("t")?
            .trim()
            .parse()
            .map_err(|_| fmt_err(path, i + 1, "bad t"))?;
        let x: u16 = next("x")?
            .trim()
            .parse()
            .map_err(|_| fmt_err(path, i + 1, "bad x"))?;
        let y: u16 = next("y")?
            .trim()
            .parse()
            .map_err(|_| fmt_err(path, i + 1, "bad y"))?;
        let p: i8 = next("p")?
            .trim()
            .parse()
            .map_err(|_| fmt_err(path, i + 1, "bad p"))?;
        if p != 1 && p != -1 {
            return Err(fmt_err(
                path,
                i + 1,
                format!("polarity must be ±1, got {p}"),
            ));
        }
        events.push(Event {
            t,
            x,
            y,
            polarity: p,
        });
    }
    Ok(events)
}

pub fn write_events_bin(events: &[Event], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    for e in events {
        w.write_all(&e.t.to_le_bytes())?;
        w.write_all(&e.x.to_le_bytes())?;
        w.write_all(&e.y.to_le_bytes())?;
        w.write_all(&e.polarity.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events_bin(path: impl AsRef<Path>) -> Result<Vec<Event>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    const REC: usize = 13;
    if bytes.len() % REC != 0 {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: format!(
                "file size {} is not a multiple of the 13-byte record",
                bytes.len()
            ),
        });
    }
    bytes
        .chunks_exact(REC)
        .enumerate()
        .map(|(i, c)| {
            let polarity = c[12] as i8;
            if polarity != 1 && polarity != -1 {
                return Err(fmt_err(
                    path,
                    i + 1,
                    format!("polarity must be ±1, got {polarity}"),
                ));
            }
            Ok(Event {
                t: f64::from_le_bytes(c[0..8].try_into().unwrap()),
                x: u16::from_le_bytes(c[8..10].try_into().unwrap()),
                y: u16::from_le_bytes(c[10..12].try_into().unwrap()),
                polarity,
            })
        })
        .collect()
}

/// Dispatches on the extension: `.csv` is text, everything else binary.
pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<Event>> {
    let path = path.as_ref();
    if path.extension().map(|e| e == "csv").unwrap_or(false) {
        read_events_csv(path)
    } else {
        read_events_bin(path)
    }
}
