use std::path::Path;

use crate::error::{Error, Result};

pub const SIMG_MAGIC: &[u8; 4] = b"SIMG";
pub const SIMG_VERSION: u32 = 1;
const SIMG_HEADER: usize = 16;

/// File name of the image for one sample.
pub fn image_file_name(sample_id: u64) -> String {
    format!("{sample_id:08}.simg")
}

/// Inverse of [`image_file_name`].
pub fn parse_image_file_name(name: &str) -> Option<u64> {
    name.strip_suffix(".simg")?.parse().ok()
}

/// Single-channel `f32` image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatImage {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl HeatImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::LengthMismatch {
                expected: height * width,
                actual: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.data[row * self.width + col] = v;
    }

    /// Value at signed coordinates, `None` outside the image.
    pub fn get_checked(&self, row: i64, col: i64) -> Option<f32> {
        if row < 0 || col < 0 || row >= self.height as i64 || col >= self.width as i64 {
            None
        } else {
            Some(self.get(row as usize, col as usize))
        }
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SIMG_HEADER + 4 * self.data.len());
        out.extend_from_slice(SIMG_MAGIC);
        out.extend_from_slice(&SIMG_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < SIMG_HEADER || &bytes[..4] != SIMG_MAGIC {
            return Err(Error::format(path, "missing SIMG header"));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = word(4);
        if version != SIMG_VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let (height, width) = (word(8) as usize, word(12) as usize);
        let expected = SIMG_HEADER + 4 * height * width;
        if bytes.len() != expected {
            return Err(Error::format(
                path,
                format!("expected {expected} bytes, found {}", bytes.len()),
            ));
        }
        let data = bytes[SIMG_HEADER..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
