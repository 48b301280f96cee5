//! Model file format, little-endian throughout:
//!
//! ```text
//! magic "DERD" | u32 version | u32 member_count
//! per member:
//!   u32 d, r_w, r_h, conv_channels, hidden, out_dim
//!   u32 kernel[3], pad_depth, stride_depth
//!   u32 tensor_count
//!   per tensor: u32 name_len | name utf-8 | u32 rank | u32 dims... | f32 data
//! ```
//!
//! Parameters are stored as f32; save → load → save is byte-identical.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{
    Head, ModelParams, NetworkConfig, Tensor, CONV_KERNEL, CONV_PAD_DEPTH, CONV_STRIDE_DEPTH,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"DERD";

fn fmt_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| fmt_err(path, "truncated file"))?;
    Ok(u32::from_le_bytes(buf))
}

fn write_member(w: &mut impl Write, params: &ModelParams, cfg: &NetworkConfig) -> Result<()> {
    for v in [
        cfg.d as u32,
        cfg.r_w as u32,
        cfg.r_h as u32,
        cfg.conv_channels as u32,
        cfg.hidden as u32,
        cfg.head.out_dim() as u32,
        CONV_KERNEL[0] as u32,
        CONV_KERNEL[1] as u32,
        CONV_KERNEL[2] as u32,
        CONV_PAD_DEPTH as u32,
        CONV_STRIDE_DEPTH as u32,
        ModelParams::NAMES.len() as u32,
    ] {
        write_u32(w, v)?;
    }
    for i in 0..ModelParams::NAMES.len() {
        let name = ModelParams::NAMES[i].as_bytes();
        write_u32(w, name.len() as u32)?;
        w.write_all(name)?;
        let t = params.field(i);
        write_u32(w, t.shape().len() as u32)?;
        for &dim in t.shape() {
            write_u32(w, dim as u32)?;
        }
        for &v in t.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_member(r: &mut impl Read, path: &Path) -> Result<(ModelParams, NetworkConfig)> {
    let d = read_u32(r, path)? as usize;
    let r_w = read_u32(r, path)? as usize;
    let r_h = read_u32(r, path)? as usize;
    let conv_channels = read_u32(r, path)? as usize;
    let hidden = read_u32(r, path)? as usize;
    let out_dim = read_u32(r, path)? as usize;
    let head = match out_dim {
        1 => Head::Single,
        9 => Head::Multi3x3,
        other => {
            return Err(fmt_err(
                path,
                format!("unsupported output dimension {other}"),
            ))
        }
    };
    let kernel = [read_u32(r, path)?, read_u32(r, path)?, read_u32(r, path)?];
    let pad = read_u32(r, path)? as usize;
    let stride = read_u32(r, path)? as usize;
    if kernel != [3, 3, 3] || pad != CONV_PAD_DEPTH || stride != CONV_STRIDE_DEPTH {
        return Err(fmt_err(path, "unsupported convolution geometry"));
    }
    let cfg = NetworkConfig {
        d,
        r_w,
        r_h,
        conv_channels,
        hidden,
        head,
    };
    cfg.validate().map_err(|e| fmt_err(path, e.to_string()))?;

    let tensor_count = read_u32(r, path)? as usize;
    if tensor_count != ModelParams::NAMES.len() {
        return Err(fmt_err(
            path,
            format!("expected 10 tensors, found {tensor_count}"),
        ));
    }
    let mut params = ModelParams::zeros(&cfg);
    for i in 0..tensor_count {
        let name_len = read_u32(r, path)? as usize;
        if name_len > 256 {
            return Err(fmt_err(path, "tensor name too long"));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)
            .map_err(|_| fmt_err(path, "truncated tensor name"))?;
        let name = String::from_utf8(name).map_err(|_| fmt_err(path, "tensor name not utf-8"))?;
        if name != ModelParams::NAMES[i] {
            return Err(fmt_err(
                path,
                format!("unexpected tensor '{name}' at position {i}"),
            ));
        }
        let rank = read_u32(r, path)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(r, path)? as usize);
        }
        if shape != params.field(i).shape() {
            return Err(fmt_err(
                path,
                format!(
                    "tensor '{name}' shape {shape:?} inconsistent with config {:?}",
                    params.field(i).shape()
                ),
            ));
        }
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)
            .map_err(|_| fmt_err(path, "truncated tensor data"))?;
        let data: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let tensor = Tensor::from_vec(&shape, data)?;
        if !tensor.is_finite() {
            return Err(Error::NonFinite(format!(
                "tensor '{name}' in {}",
                path.display()
            )));
        }
        *params.field_mut(i) = tensor;
    }
    Ok((params, cfg))
}

/// Writes one or more (ensemble) members into a single self-describing file.
pub fn save_models(members: &[(ModelParams, NetworkConfig)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if members.is_empty() {
        return Err(Error::Config("refusing to save an empty model file".into()));
    }
    for (params, cfg) in members {
        params.matches_config(cfg)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, MODEL_FORMAT_VERSION)?;
    write_u32(&mut w, members.len() as u32)?;
    for (params, cfg) in members {
        write_member(&mut w, params, cfg)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_models(path: impl AsRef<Path>) -> Result<Vec<(ModelParams, NetworkConfig)>> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| fmt_err(path, "truncated file"))?;
    if &magic != MAGIC {
        return Err(fmt_err(path, "bad magic, not a model file"));
    }
    let version = read_u32(&mut r, path)?;
    if version != MODEL_FORMAT_VERSION {
        return Err(fmt_err(
            path,
            format!("unsupported format version {version}"),
        ));
    }
    let count = read_u32(&mut r, path)? as usize;
    if count == 0 || count > 16 {
        return Err(fmt_err(path, format!("implausible member count {count}")));
    }
    let mut members = Vec::with_capacity(count);
    for _ in 0..count {
        members.push(read_member(&mut r, path)?);
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(fmt_err(path, "trailing bytes after last member"));
    }
    Ok(members)
}

pub fn save_model(params: &ModelParams, cfg: &NetworkConfig, path: impl AsRef<Path>) -> Result<()> {
    save_models(std::slice::from_ref(&(params.clone(), *cfg)), path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(ModelParams, NetworkConfig)> {
    let path = path.as_ref();
    let mut members = load_models(path)?;
    if members.len() != 1 {
        return Err(fmt_err(
            path,
            format!("expected a single model, found {}", members.len()),
        ));
    }
    Ok(members.remove(0))
}
