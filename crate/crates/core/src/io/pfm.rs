//! PFM depth maps: grayscale `Pf`, negative scale (little-endian), rows
//! stored bottom-to-top per the format convention. Invalid pixels are NaN.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::select::DepthMap;

fn fmt_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub fn write_pfm(dm: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write!(w, "Pf\n{} {}\n-1.0\n", dm.width(), dm.height())?;
    for y in (0..dm.height()).rev() {
        for x in 0..dm.width() {
            let v = dm.get(x, y).map(|z| z as f32).unwrap_or(f32::NAN);
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;

    // Header: whitespace-separated tokens ("Pf", width, height, scale).
    fn next_token(bytes: &[u8], pos: &mut usize, path: &Path) -> Result<String> {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(fmt_err(path, "truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).to_string())
    }
    let mut pos = 0usize;
    let magic = next_token(&bytes, &mut pos, path)?;
    if magic != "Pf" {
        return Err(fmt_err(
            path,
            format!("expected grayscale 'Pf', got '{magic}'"),
        ));
    }
    let width: usize = next_token(&bytes, &mut pos, path)?
        .parse()
        .map_err(|_| fmt_err(path, "bad width"))?;
    let height: usize = next_token(&bytes, &mut pos, path)?
        .parse()
        .map_err(|_| fmt_err(path, "bad height"))?;
    let scale: f64 = next_token(&bytes, &mut pos, path)?
        .parse()
        .map_err(|_| fmt_err(path, "bad scale"))?;
    if scale >= 0.0 {
        return Err(fmt_err(path, "big-endian PFM not supported"));
    }
    pos += 1; // single whitespace after the scale
    let need = width * height * 4;
    if bytes.len() < pos + need {
        return Err(fmt_err(path, "truncated pixel data"));
    }
    let mut dm = DepthMap::empty(width, height);
    for row in 0..height {
        let y = height - 1 - row;
        for x in 0..width {
            let o = pos + (row * width + x) * 4;
            let v = f32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
            if v.is_finite() {
                dm.set(x, y, v as f64);
            }
        }
    }
    Ok(dm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_preserves_validity() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pfm");
        let mut dm = DepthMap::empty(5, 4);
        dm.set(0, 0, 1.5);
        dm.set(4, 3, 2.25);
        dm.set(2, 1, 6.5);
        write_pfm(&dm, &p).unwrap();
        let back = read_pfm(&p).unwrap();
        assert_eq!(back.valid_count(), 3);
        assert_eq!(back.get(0, 0), Some(1.5));
        assert_eq!(back.get(4, 3), Some(2.25));
        assert_eq!(back.get(2, 1), Some(6.5));
        assert_eq!(back.get(1, 1), None);
    }

    #[test]
    fn pfm_rejects_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pfm");
        std::fs::write(&p, b"PF\n2 2\n-1.0\n").unwrap();
        assert!(read_pfm(&p).is_err());
    }
}
