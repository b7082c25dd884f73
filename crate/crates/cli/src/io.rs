use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use pap_core::diffusion::ToyModel;
use pap_core::{Image, Tensor};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{io_err, CliError, CliResult};

pub fn require<'a, T>(value: &'a Option<T>, flag: &str) -> CliResult<&'a T> {
    value.as_ref().ok_or_else(|| CliError::missing(flag))
}

pub fn require_path(path: &Option<PathBuf>, flag: &str) -> CliResult<PathBuf> {
    let p = require(path, flag)?;
    if !p.exists() {
        return Err(CliError::Validation(format!("{flag} {}: no such file or directory", p.display())));
    }
    Ok(p.clone())
}

pub fn load_model(path: &Path) -> CliResult<ToyModel> {
    Ok(ToyModel::load(path)?.0)
}

/// A vector stored as a PAPT tensor of any shape.
pub fn load_vector(path: &Path) -> CliResult<Vec<f64>> {
    Ok(Tensor::read(path)?.into_f64_vec())
}

pub fn save_vector(path: &Path, v: &[f64]) -> CliResult<()> {
    Ok(Tensor::from_f64(vec![v.len()], v.to_vec())?.write(path)?)
}

/// Images from a PAPT tensor (H x W or N x H x W), a grayscale PNG, or a
/// directory of either, read in file-name order.
pub fn load_images(path: &Path) -> CliResult<Vec<Image>> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| io_err(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(ext(p).as_deref(), Some("papt" | "png")))
            .collect();
        entries.sort();
        if entries.is_empty() {
            return Err(CliError::Validation(format!("{}: no .papt or .png images", path.display())));
        }
        let mut out = Vec::new();
        for p in entries {
            out.extend(load_images(&p)?);
        }
        return Ok(out);
    }
    match ext(path).as_deref() {
        Some("png") => Ok(vec![read_png(path)?]),
        _ => Ok(Image::batch_from_tensor(&Tensor::read(path)?)?),
    }
}

fn ext(p: &Path) -> Option<String> {
    p.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

pub fn read_png(path: &Path) -> CliResult<Image> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut decoder = png::Decoder::new(file);
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| io_err(path, e))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| io_err(path, e))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let gray: Vec<u8> = buf[..info.buffer_size()]
        .chunks(channels)
        .map(|px| match channels {
            1 | 2 => px[0],
            _ => ((u32::from(px[0]) + u32::from(px[1]) + u32::from(px[2]) + 1) / 3) as u8,
        })
        .collect();
    Ok(Image::from_u8(h, w, &gray)?)
}

/// 8-bit grayscale PNG, pixels rounded to the nearest level.
pub fn write_png(path: &Path, image: &Image) -> CliResult<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), image.width as u32, image.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(|e| io_err(path, e))?;
    w.write_image_data(&image.to_u8()).map_err(|e| io_err(path, e))?;
    w.finish().map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}
