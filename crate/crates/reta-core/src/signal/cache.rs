//! Per-clip feature cache.
//!
//! Flat binary layout: magic `LFCC`, version u32 LE, rows u32 LE, cols u32
//! LE, then rows*cols IEEE-754 32-bit LE values, row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::FeatureMatrix;

const MAGIC: &[u8; 4] = b"LFCC";
const VERSION: u32 = 1;

pub fn write_feature_cache(features: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::with_capacity(16 + features.values().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(features.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(features.cols() as u32).to_le_bytes());
    for &v in features.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut file = fs::File::create(path.as_ref())?;
    file.write_all(&out)?;
    Ok(())
}

pub fn read_feature_cache(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let fail = |detail: String| Error::Format {
        what: "feature cache",
        detail,
    };
    if bytes.len() < 16 {
        return Err(fail("file too short for header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(fail("bad magic".into()));
    }
    let word = |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]);
    let version = word(4);
    if version != VERSION {
        return Err(fail(format!("version {version}, want {VERSION}")));
    }
    let rows = word(8) as usize;
    let cols = word(12) as usize;
    let expected = 16 + rows * cols * 4;
    if bytes.len() != expected {
        return Err(fail(format!(
            "payload is {} bytes, want {expected} for {rows}x{cols}",
            bytes.len()
        )));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    FeatureMatrix::new(rows, cols, values, path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn roundtrip_preserves_shape_and_values_at_f32() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("clip.lfcc");
        let values: Vec<f64> = (0..12).map(|i| i as f64 * 0.37 - 2.0).collect();
        let f = FeatureMatrix::new(3, 4, values.clone(), "orig".into()).unwrap();
        write_feature_cache(&f, &path).unwrap();
        let back = read_feature_cache(&path).unwrap();
        assert_eq!((back.rows(), back.cols()), (3, 4));
        for (a, b) in values.iter().zip(back.values()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.lfcc");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(
            read_feature_cache(&path),
            Err(Error::Format { .. })
        ));

        let f = FeatureMatrix::new(1, 1, vec![0.5], String::new()).unwrap();
        write_feature_cache(&f, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_feature_cache(&path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn rejects_truncated_payload() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trunc.lfcc");
        let f = FeatureMatrix::new(2, 2, vec![1.0; 4], String::new()).unwrap();
        write_feature_cache(&f, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(
            read_feature_cache(&path),
            Err(Error::Format { .. })
        ));
    }
}
