//! Selected-pixel lists: CSV rows `x,y`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::select::PixelCoord;

pub fn write_pixel_list(pixels: &[PixelCoord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "x,y")?;
    for p in pixels {
        writeln!(w, "{},{}", p.x, p.y)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pixel_list(path: impl AsRef<Path>) -> Result<Vec<PixelCoord>> {
    let path = path.as_ref();
    let r = BufReader::new(File::open(path)?);
    let mut pixels = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with('x')) {
            continue;
        }
        let mut parts = line.split(',');
        let bad = || Error::Format {
            path: path.display().to_string(),
            reason: format!("line {}: expected 'x,y'", i + 1),
        };
        let x: usize = parts
            .next()
            .ok_or_else(bad)?
            .trim()
            .parse()
            .map_err(|_| bad())?;
        let y: usize = parts
            .next()
            .ok_or_else(bad)?
            .trim()
            .parse()
            .map_err(|_| bad())?;
        pixels.push(PixelCoord { x, y });
    }
    Ok(pixels)
}
