//! Reader for the big-endian IDX files MNIST ships in.

use std::path::Path;

use plasticity_core::network::Batch;
use plasticity_core::numerics::DenseMatrix;

use crate::error::{LabError, LabResult};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

fn header(bytes: &[u8], magic: u32, ndim: usize, what: &str) -> LabResult<Vec<usize>> {
    let m = be_u32(bytes, 0).ok_or_else(|| LabError::Format(format!("{what}: file shorter than its header")))?;
    if m != magic {
        return Err(LabError::Format(format!("{what}: bad magic 0x{m:08x}, expected 0x{magic:08x}")));
    }
    (0..ndim)
        .map(|i| {
            be_u32(bytes, 4 + 4 * i)
                .map(|v| v as usize)
                .ok_or_else(|| LabError::Format(format!("{what}: truncated header")))
        })
        .collect()
}

/// Parses an image file into one row per image, pixels scaled to [0, 1].
pub fn parse_images(bytes: &[u8]) -> LabResult<DenseMatrix> {
    let dims = header(bytes, IMAGES_MAGIC, 3, "images")?;
    let (n, h, w) = (dims[0], dims[1], dims[2]);
    let body = &bytes[16..];
    let need = n * h * w;
    if body.len() != need {
        return Err(LabError::Format(format!("images: expected {need} pixel bytes, found {}", body.len())));
    }
    let data = body.iter().map(|&b| b as f64 / 255.0).collect();
    Ok(DenseMatrix::new(n, h * w, data)?)
}

pub fn parse_labels(bytes: &[u8]) -> LabResult<Vec<usize>> {
    let dims = header(bytes, LABELS_MAGIC, 1, "labels")?;
    let body = &bytes[8..];
    if body.len() != dims[0] {
        return Err(LabError::Format(format!("labels: expected {} bytes, found {}", dims[0], body.len())));
    }
    Ok(body.iter().map(|&b| b as usize).collect())
}

fn read(path: &Path) -> LabResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| LabError::MissingData(format!("{}: {e}", path.display())))
}

/// Loads `<prefix>-images-idx3-ubyte` and `<prefix>-labels-idx1-ubyte` from `dir`.
pub fn load_split(dir: &Path, prefix: &str) -> LabResult<Batch> {
    let x = parse_images(&read(&dir.join(format!("{prefix}-images-idx3-ubyte")))?)?;
    let y = parse_labels(&read(&dir.join(format!("{prefix}-labels-idx1-ubyte")))?)?;
    if x.rows() != y.len() {
        return Err(LabError::Format(format!("{prefix}: {} images but {} labels", x.rows(), y.len())));
    }
    Ok(Batch::classification(x, y)?)
}

/// MNIST train and test splits from `dir`.
pub fn load_mnist(dir: &Path) -> LabResult<(Batch, Batch)> {
    Ok((load_split(dir, "train")?, load_split(dir, "t10k")?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_file(n: u32, h: u32, w: u32, px: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IMAGES_MAGIC, n, h, w] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(px);
        b
    }

    #[test]
    fn pixels_scale_to_unit_interval() {
        let x = parse_images(&image_file(1, 1, 3, &[0, 255, 51])).unwrap();
        assert_eq!(x.row(0), &[0.0, 1.0, 0.2]);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut f = image_file(1, 2, 2, &[1, 2, 3, 4]);
        assert!(parse_images(&f[..f.len() - 1]).is_err());
        f[3] = 0x01;
        assert!(matches!(parse_images(&f), Err(LabError::Format(_))));
        assert!(parse_labels(&[0, 0, 8, 1, 0, 0, 0, 2, 7]).is_err());
        assert_eq!(parse_labels(&[0, 0, 8, 1, 0, 0, 0, 2, 7, 3]).unwrap(), vec![7, 3]);
    }
}
