//! IDX container (MNIST, Fashion-MNIST). Gzip-compressed files are
//! accepted transparently.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder};
use flate2::read::GzDecoder;

use super::ImageSample;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn header(bytes: &[u8], magic: u32, n_dims: usize) -> Result<Vec<usize>> {
    let need = 4 + 4 * n_dims;
    if bytes.len() < need {
        return Err(Error::format(bytes.len() as u64, format!("truncated header, need {need} bytes")));
    }
    let found = BigEndian::read_u32(&bytes[0..4]);
    if found != magic {
        return Err(Error::format(0, format!("bad magic {found:#010x}, expected {magic:#010x}")));
    }
    Ok((0..n_dims).map(|d| BigEndian::read_u32(&bytes[4 + 4 * d..8 + 4 * d]) as usize).collect())
}

/// Decodes an image file into `(rows, cols, pixel bytes per image)`.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, Vec<&[u8]>)> {
    let dims = header(bytes, IMAGES_MAGIC, 3)?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let size = rows * cols;
    let body = &bytes[16..];
    if body.len() < n * size {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated image data: {n} images of {size} bytes need {} bytes", 16 + n * size),
        ));
    }
    Ok((rows, cols, body.chunks_exact(size.max(1)).take(n).collect()))
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let n = header(bytes, LABELS_MAGIC, 1)?[0];
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated label data: {n} labels need {} bytes", 8 + n),
        ));
    }
    Ok(body[..n].to_vec())
}

/// Loads paired image and label files; intensities are divided by 255.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Vec<ImageSample>> {
    let image_bytes = read_maybe_gz(images)?;
    let label_bytes = read_maybe_gz(labels)?;
    let (_, _, pixels) = parse_images(&image_bytes)?;
    let labels = parse_labels(&label_bytes)?;
    if pixels.len() != labels.len() {
        return Err(Error::format(
            0,
            format!("{} images but {} labels", pixels.len(), labels.len()),
        ));
    }
    Ok(pixels
        .into_iter()
        .zip(labels)
        .map(|(p, label)| ImageSample {
            pixels: p.iter().map(|&b| b as f32 / 255.0).collect(),
            label,
        })
        .collect())
}
