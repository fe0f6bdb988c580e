//! Minimal RIFF/WAVE reader and writer.
//!
//! Only the encoding the corpus uses is supported: PCM (format tag 1),
//! mono, 16-bit little-endian. Amplitudes map as `sample / 32768` on read
//! and `clamp(round(a * 32768), -32768, 32767)` on write.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::AudioClip;

fn format_err(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "wav",
        detail: detail.into(),
    }
}

fn unsupported(detail: impl Into<String>) -> Error {
    Error::Unsupported {
        what: "wav encoding",
        detail: detail.into(),
    }
}

fn le_u16(b: &[u8], at: usize) -> Result<u16> {
    b.get(at..at + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or_else(|| format_err("truncated chunk"))
}

fn le_u32(b: &[u8], at: usize) -> Result<u32> {
    b.get(at..at + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| format_err("truncated chunk"))
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let bytes = fs::read(path.as_ref())?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(format_err("missing RIFF/WAVE header"));
    }

    let mut sample_rate = None;
    let mut data: Option<&[u8]> = None;
    let mut at = 12;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = le_u32(&bytes, at + 4)? as usize;
        let body_start = at + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| format_err("chunk overruns file"))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(format_err("fmt chunk too short"));
                }
                let format_tag = le_u16(body, 0)?;
                let channels = le_u16(body, 2)?;
                let rate = le_u32(body, 4)?;
                let bits = le_u16(body, 14)?;
                if format_tag != 1 {
                    return Err(unsupported(format!("format tag {format_tag}, want PCM (1)")));
                }
                if channels != 1 {
                    return Err(unsupported(format!("{channels} channels, want mono")));
                }
                if bits != 16 {
                    return Err(unsupported(format!("{bits}-bit samples, want 16")));
                }
                if rate == 0 {
                    return Err(format_err("sample rate 0"));
                }
                sample_rate = Some(rate);
            }
            b"data" => data = Some(body),
            _ => {} // skip unknown chunks
        }
        // chunks are word-aligned
        at = body_end + (size & 1);
    }

    let sample_rate = sample_rate.ok_or_else(|| format_err("no fmt chunk"))?;
    let data = data.ok_or_else(|| format_err("no data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(format_err("odd data chunk length for 16-bit samples"));
    }
    let samples = data
        .chunks_exact(2)
        .map(|c| f64::from(i16::from_le_bytes([c[0], c[1]])) / 32768.0)
        .collect();
    AudioClip::new(samples, sample_rate)
}

/// Encode one amplitude as a 16-bit PCM sample.
pub fn encode_sample(a: f64) -> i16 {
    (a * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let data_len = (clip.samples.len() * 2) as u32;
    let byte_rate = clip.sample_rate * 2;

    let mut out = Vec::with_capacity(44 + clip.samples.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &clip.samples {
        out.extend_from_slice(&encode_sample(s).to_le_bytes());
    }

    let mut file = fs::File::create(path.as_ref())?;
    file.write_all(&out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn clamp_at_full_scale() {
        assert_eq!(encode_sample(1.0), 32767);
        assert_eq!(encode_sample(-1.0), -32768);
        assert_eq!(encode_sample(0.0), 0);
        assert_eq!(encode_sample(0.5), 16384);
    }

    #[test]
    fn roundtrip_within_quantization() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("clip.wav");
        let clip = AudioClip::new(vec![0.5; 100], 16000).unwrap();
        write_wav(&clip, &path).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16000);
        assert_eq!(back.samples.len(), 100);
        for (a, b) in clip.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn full_scale_sample_reads_back_as_32767_over_32768() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("full.wav");
        let clip = AudioClip::new(vec![1.0, 0.0], 8000).unwrap();
        write_wav(&clip, &path).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.samples[0], 32767.0 / 32768.0);
        assert_eq!(back.samples[1], 0.0);
    }

    #[test]
    fn malformed_header_is_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        std::fs::write(&path, b"NOT A WAV FILE AT ALL........").unwrap();
        match read_wav(&path) {
            Err(Error::Format { .. }) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_encodings_are_rejected() {
        let dir = tempdir().unwrap();
        let clip = AudioClip::new(vec![0.0; 4], 16000).unwrap();
        let path = dir.path().join("stereo.wav");
        write_wav(&clip, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[22] = 2; // channel count
        std::fs::write(&path, &bytes).unwrap();
        match read_wav(&path) {
            Err(Error::Unsupported { .. }) => {}
            other => panic!("expected unsupported error, got {other:?}"),
        }

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[22] = 1;
        bytes[20] = 3; // IEEE float format tag
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_wav(&path), Err(Error::Unsupported { .. })));

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[20] = 1;
        bytes[34] = 8; // bits per sample
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_wav(&path), Err(Error::Unsupported { .. })));
    }

    #[test]
    fn truncated_file_is_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trunc.wav");
        let clip = AudioClip::new(vec![0.1; 50], 16000).unwrap();
        write_wav(&clip, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..40]).unwrap();
        assert!(matches!(read_wav(&path), Err(Error::Format { .. })));
    }
}
