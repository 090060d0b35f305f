//! IDX container reader (big-endian, unsigned byte payloads).

use std::path::Path;

use crate::datasets::ImageCorpus;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse {
            offset: bytes.len(),
            detail: format!("header truncated: need {} bytes, file has {}", offset + 4, bytes.len()),
        })
}

fn payload(bytes: &[u8], start: usize, len: usize) -> Result<&[u8]> {
    if bytes.len() < start + len {
        return Err(Error::Parse {
            offset: bytes.len(),
            detail: format!("payload truncated: expected {} bytes, found {}", len, bytes.len() - start.min(bytes.len())),
        });
    }
    Ok(&bytes[start..start + len])
}

/// Decodes an image file into `[N, 1, H, W]` scaled by 1/255.
pub fn parse_images(bytes: &[u8]) -> Result<Tensor> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Parse { offset: 0, detail: format!("bad image magic {magic:#010x}") });
    }
    let n = be_u32(bytes, 4)? as usize;
    let h = be_u32(bytes, 8)? as usize;
    let w = be_u32(bytes, 12)? as usize;
    let raw = payload(bytes, 16, n * h * w)?;
    Tensor::new([n, 1, h, w], raw.iter().map(|&b| b as f64 / 255.0).collect())
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Parse { offset: 0, detail: format!("bad label magic {magic:#010x}") });
    }
    let n = be_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, n)?.to_vec())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_idx(images: &Path, labels: Option<&Path>) -> Result<ImageCorpus> {
    let imgs = parse_images(&read(images)?)?;
    let labels = labels.map(|p| read(p).and_then(|b| parse_labels(&b))).transpose()?;
    if let Some(l) = &labels {
        if l.len() != imgs.batch() {
            return Err(Error::Config(format!(
                "{} holds {} images but {} labels",
                images.display(),
                imgs.batch(),
                l.len()
            )));
        }
    }
    ImageCorpus::new(imgs, labels, format!("idx:{}", images.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2];
        b.extend([0, 255, 51, 204]);
        b
    }

    #[test]
    fn decodes_hand_encoded_image() {
        let t = parse_images(&fixture()).unwrap();
        assert_eq!(t.shape(), &[1, 1, 2, 2]);
        assert_eq!(t.data(), &[0.0, 1.0, 0.2, 0.8]);
    }

    #[test]
    fn truncated_payload_reports_sizes() {
        let mut b = fixture();
        b.pop();
        let err = parse_images(&b).unwrap_err().to_string();
        assert!(err.contains("expected 4 bytes, found 3"), "{err}");
        assert!(parse_images(&b[..10]).is_err());
    }

    #[test]
    fn bad_magic_and_labels() {
        let mut b = fixture();
        b[3] = 1;
        assert!(matches!(parse_images(&b), Err(Error::Parse { offset: 0, .. })));
        let l = parse_labels(&[0, 0, 8, 1, 0, 0, 0, 2, 7, 3]).unwrap();
        assert_eq!(l, vec![7, 3]);
    }
}
