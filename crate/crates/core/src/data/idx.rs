//! Big-endian IDX image and label files.

use std::fs;
use std::path::Path;

use crate::error::{Result, SsbError};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Pixels are stored as bytes; `scale` maps them to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxDataset {
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub scale: f64,
}

impl IdxDataset {
    pub fn new(images: Vec<u8>, labels: Vec<u8>, rows: usize, cols: usize) -> Result<Self> {
        let count = labels.len();
        if images.len() != count * rows * cols {
            return Err(SsbError::shape(
                format!("{count}x{rows}x{cols} pixels"),
                format!("{}", images.len()),
            ));
        }
        Ok(IdxDataset {
            images,
            labels,
            count,
            rows,
            cols,
            scale: 1.0 / 255.0,
        })
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let p = self.pixels();
        &self.images[i * p..(i + 1) * p]
    }

    /// Image `i` scaled to `[0, 1]`, raster order.
    pub fn image_f64(&self, i: usize) -> Vec<f64> {
        self.image(i).iter().map(|&b| b as f64 * self.scale).collect()
    }

    /// The examples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> IdxDataset {
        let mut images = Vec::with_capacity(indices.len() * self.pixels());
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        IdxDataset {
            images,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            count: indices.len(),
            rows: self.rows,
            cols: self.cols,
            scale: self.scale,
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(SsbError::Format {
                offset: self.bytes.len() as u64,
                message: format!(
                    "truncated {what}: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ),
            }),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(SsbError::Format {
                offset: self.pos as u64,
                message: format!("{} trailing bytes", self.bytes.len() - self.pos),
            });
        }
        Ok(())
    }
}

fn check_magic(cur: &mut Cursor, expected: u32) -> Result<()> {
    let magic = cur.u32("magic")?;
    if magic != expected {
        return Err(SsbError::Format {
            offset: 0,
            message: format!("bad magic {magic:#010x}, expected {expected:#010x}"),
        });
    }
    Ok(())
}

/// Parses an image file; returns `(count, rows, cols, pixels)`.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut cur = Cursor { bytes, pos: 0 };
    check_magic(&mut cur, IMAGE_MAGIC)?;
    let count = cur.u32("image count")? as usize;
    let rows = cur.u32("row count")? as usize;
    let cols = cur.u32("column count")? as usize;
    let n = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| SsbError::Format {
            offset: 4,
            message: "declared dimensions overflow".into(),
        })?;
    let pixels = cur.take(n, "pixel data")?.to_vec();
    cur.finish()?;
    Ok((count, rows, cols, pixels))
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut cur = Cursor { bytes, pos: 0 };
    check_magic(&mut cur, LABEL_MAGIC)?;
    let count = cur.u32("label count")? as usize;
    let labels = cur.take(count, "label data")?.to_vec();
    cur.finish()?;
    Ok(labels)
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<IdxDataset> {
    let img = fs::read(images).map_err(|e| SsbError::io(images, e))?;
    let lab = fs::read(labels).map_err(|e| SsbError::io(labels, e))?;
    let (count, rows, cols, pixels) = parse_images(&img)?;
    let labels = parse_labels(&lab)?;
    if labels.len() != count {
        return Err(SsbError::Format {
            offset: 4,
            message: format!("{count} images but {} labels", labels.len()),
        });
    }
    IdxDataset::new(pixels, labels, rows, cols)
}

pub fn encode_images(ds: &IdxDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + ds.images.len());
    for v in [IMAGE_MAGIC, ds.count as u32, ds.rows as u32, ds.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&ds.images);
    out
}

pub fn encode_labels(ds: &IdxDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + ds.count);
    for v in [LABEL_MAGIC, ds.count as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&ds.labels);
    out
}

pub fn write_idx(ds: &IdxDataset, images: &Path, labels: &Path) -> Result<()> {
    fs::write(images, encode_images(ds)).map_err(|e| SsbError::io(images, e))?;
    fs::write(labels, encode_labels(ds)).map_err(|e| SsbError::io(labels, e))
}

/// Standard `train`/`t10k` file pair inside `dir`.
pub fn load_split(dir: &Path, train: bool) -> Result<IdxDataset> {
    let prefix = if train { "train" } else { "t10k" };
    load_idx(
        &dir.join(format!("{prefix}-images-idx3-ubyte")),
        &dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}
