//! `MVNF` image feature files: a header with per-image row counts followed
//! by little-endian `f32` rows, row 0 of each image being the global feature.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image_encoder::ImageFeatureSet;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MVNF";
pub const VERSION: u32 = 1;

pub fn encode_features(sets: &[ImageFeatureSet]) -> Result<Vec<u8>> {
    let dim = sets.first().map_or(0, ImageFeatureSet::dim);
    if let Some(bad) = sets.iter().position(|s| s.dim() != dim) {
        return Err(Error::Data(format!("image {bad} has dim {} instead of {dim}", sets[bad].dim())));
    }
    let rows: usize = sets.iter().map(ImageFeatureSet::len).sum();
    let mut out = Vec::with_capacity(16 + 4 * sets.len() + 4 * rows * dim);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(sets.len() as u32).to_le_bytes());
    for s in sets {
        out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    }
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for s in sets {
        for &v in s.tensor().data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Integrity {
                path: self.path.into(),
                msg: format!("truncated at byte {}", self.bytes.len()),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<Vec<ImageFeatureSet>> {
    let format = |msg: String| Error::Format { path: path.into(), msg };
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(format("missing MVNF magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let rows = (0..count).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let dim = r.u32()? as usize;
    if count > 0 && dim == 0 {
        return Err(format("zero feature dimension".into()));
    }
    if let Some(i) = rows.iter().position(|&l| l == 0) {
        return Err(format(format!("image {i} has no rows")));
    }
    let expected: usize = rows.iter().map(|l| l * dim * 4).sum();
    let remaining = bytes.len() - r.pos;
    if remaining != expected {
        return Err(Error::Integrity {
            path: path.into(),
            msg: format!("payload is {remaining} bytes, header implies {expected}"),
        });
    }
    let mut sets = Vec::with_capacity(count);
    for l in rows {
        let raw = r.take(l * dim * 4)?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("{}: non-finite feature value", path.display())));
        }
        sets.push(ImageFeatureSet::new(Tensor::new(vec![l, dim], data)?)?);
    }
    Ok(sets)
}

pub fn write_features(path: &Path, sets: &[ImageFeatureSet]) -> Result<()> {
    super::write_atomic(path, &encode_features(sets)?)
}

pub fn read_features(path: &Path) -> Result<Vec<ImageFeatureSet>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<ImageFeatureSet> {
        vec![
            ImageFeatureSet::from_rows(&[vec![1.0, 0.5, -2.0]]).unwrap(),
            ImageFeatureSet::from_rows(&[vec![0.25, 0.0, 3.0], vec![1.0, 1.0, 1.0]]).unwrap(),
        ]
    }

    #[test]
    fn layout() {
        let bytes = encode_features(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"MVNF");
        assert_eq!(bytes.len(), 4 + 4 + 4 + 2 * 4 + 4 + 3 * 3 * 4);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 2);
    }

    #[test]
    fn round_trip() {
        let bytes = encode_features(&sample()).unwrap();
        let back = decode_features(&bytes, Path::new("x")).unwrap();
        assert_eq!(back, sample());
        assert_eq!(encode_features(&back).unwrap(), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode_features(&sample()).unwrap();
        let p = Path::new("x");
        assert!(matches!(decode_features(&bytes[..bytes.len() - 1], p), Err(Error::Integrity { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_features(&bad, p), Err(Error::Format { .. })));
        let mut bad = bytes;
        bad[4] = 9;
        assert!(matches!(decode_features(&bad, p), Err(Error::Format { .. })));
    }
}
