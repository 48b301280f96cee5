//! Pseudo-color depth renders, blue (near) to red (far) over [z_min, z_max].
//! Invalid pixels are black. PNG or PPM depending on the extension.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::select::DepthMap;

fn jet(u: f64) -> [u8; 3] {
    let clamp = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let r = (4.0 * u - 1.5).min(-4.0 * u + 4.5);
    let g = (4.0 * u - 0.5).min(-4.0 * u + 3.5);
    let b = (4.0 * u + 0.5).min(-4.0 * u + 2.5);
    [clamp(r), clamp(g), clamp(b)]
}

fn rgb_buffer(dm: &DepthMap, z_min: f64, z_max: f64) -> Vec<u8> {
    let mut buf = Vec::with_capacity(dm.width() * dm.height() * 3);
    for y in 0..dm.height() {
        for x in 0..dm.width() {
            match dm.get(x, y) {
                Some(z) => {
                    let u = ((z - z_min) / (z_max - z_min)).clamp(0.0, 1.0);
                    buf.extend_from_slice(&jet(u));
                }
                None => buf.extend_from_slice(&[0, 0, 0]),
            }
        }
    }
    buf
}

pub fn render_depth(dm: &DepthMap, z_min: f64, z_max: f64, path: impl AsRef<Path>) -> Result<()> {
    if !(z_max > z_min) {
        return Err(Error::Config(format!(
            "render range [{z_min}, {z_max}] is empty"
        )));
    }
    let path = path.as_ref();
    let buf = rgb_buffer(dm, z_min, z_max);
    match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => {
            let mut w = BufWriter::new(File::create(path)?);
            write!(w, "P6\n{} {}\n255\n", dm.width(), dm.height())?;
            w.write_all(&buf)?;
            w.flush()?;
            Ok(())
        }
        _ => image::save_buffer(
            path,
            &buf,
            dm.width() as u32,
            dm.height() as u32,
            image::ColorType::Rgb8,
        )
        .map_err(|e| Error::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn near_is_blue_far_is_red_invalid_black() {
        let mut dm = DepthMap::empty(3, 1);
        dm.set(0, 0, 1.0);
        dm.set(1, 0, 4.0);
        let buf = rgb_buffer(&dm, 1.0, 4.0);
        let near = &buf[0..3];
        let far = &buf[3..6];
        let invalid = &buf[6..9];
        assert!(
            near[2] > near[0],
            "near pixel should be blue-dominant: {near:?}"
        );
        assert!(far[0] > far[2], "far pixel should be red-dominant: {far:?}");
        assert_eq!(invalid, &[0, 0, 0]);
    }

    #[test]
    fn writes_png_and_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let mut dm = DepthMap::empty(4, 2);
        dm.set(1, 1, 2.0);
        render_depth(&dm, 1.0, 4.0, dir.path().join("d.png")).unwrap();
        render_depth(&dm, 1.0, 4.0, dir.path().join("d.ppm")).unwrap();
        assert!(dir.path().join("d.png").exists());
        let ppm = std::fs::read(dir.path().join("d.ppm")).unwrap();
        assert!(ppm.starts_with(b"P6\n4 2\n255\n"));
    }
}
