//! Interchange container: `"EEGC"`, version u32, header length u32, JSON
//! header, channel-major f32 payload. All integers little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::recording::{Annotation, EegRecording, TrialInfo};
use crate::bytes::{magic_str, ByteReader};
use crate::error::{FormatError, Result};
use crate::tensor::Tensor;

pub const CONTAINER_MAGIC: &[u8; 4] = b"EEGC";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    subject: String,
    sample_rate_hz: f64,
    n_channels: usize,
    n_samples: usize,
    channel_names: Vec<String>,
    #[serde(default)]
    annotations: Vec<Annotation>,
    #[serde(default)]
    trials: Vec<TrialInfo>,
}

pub fn encode_container(rec: &EegRecording) -> Result<Vec<u8>> {
    rec.validate()?;
    let (t, c) = rec.samples.dims2()?;
    let header = serde_json::to_vec(&Header {
        subject: rec.subject.clone(),
        sample_rate_hz: rec.sample_rate_hz,
        n_channels: c,
        n_samples: t,
        channel_names: rec.channel_names.clone(),
        annotations: rec.annotations.clone(),
        trials: rec.trials.clone(),
    })?;
    let mut out = Vec::with_capacity(12 + header.len() + 4 * t * c);
    out.extend_from_slice(CONTAINER_MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    let data = rec.samples.data();
    for ch in 0..c {
        for i in 0..t {
            out.extend_from_slice(&data[i * c + ch].to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_container(bytes: &[u8]) -> Result<EegRecording> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(4, "container magic")?;
    if magic != CONTAINER_MAGIC {
        return Err(FormatError::BadMagic {
            expected: "EEGC".into(),
            found: magic_str(magic),
        }
        .into());
    }
    let version = r.u32("container version")?;
    if version != CONTAINER_VERSION {
        return Err(FormatError::UnsupportedVersion {
            format: "container",
            version,
        }
        .into());
    }
    let hlen = r.u32("header length")? as usize;
    let header: Header = serde_json::from_slice(r.take(hlen, "container header")?)
        .map_err(|e| FormatError::InvalidHeader(e.to_string()))?;
    if header.channel_names.len() != header.n_channels {
        return Err(FormatError::InvalidHeader(format!(
            "{} channel names for {} channels",
            header.channel_names.len(),
            header.n_channels
        ))
        .into());
    }
    let (t, c) = (header.n_samples, header.n_channels);
    let declared = t
        .checked_mul(c)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| FormatError::InvalidHeader("sample count overflows".into()))?;
    if declared != r.remaining() || t == 0 || c == 0 {
        return Err(FormatError::SizeMismatch {
            declared,
            actual: r.remaining(),
        }
        .into());
    }
    let payload = r.f32_vec(t * c, "container payload")?;
    let mut data = vec![0.0f32; t * c];
    for ch in 0..c {
        for i in 0..t {
            data[i * c + ch] = payload[ch * t + i];
        }
    }
    let rec = EegRecording {
        subject: header.subject,
        sample_rate_hz: header.sample_rate_hz,
        channel_names: header.channel_names,
        samples: Tensor::new(vec![t, c], data)?,
        annotations: header.annotations,
        trials: header.trials,
    };
    rec.validate()?;
    Ok(rec)
}

pub fn write_container(rec: &EegRecording, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_container(rec)?)?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>) -> Result<EegRecording> {
    decode_container(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    fn sample() -> EegRecording {
        let samples = Tensor::from_fn(&[5, 2], |i| i as f32 * 0.5 - 1.0);
        let mut rec = EegRecording::new("s01", 128.0, vec!["Fp1".into(), "Fp2".into()], samples).unwrap();
        rec.annotations.push(Annotation {
            label: "seizure".into(),
            start_s: 0.0,
            end_s: 0.01,
        });
        rec
    }

    #[test]
    fn payload_is_channel_major() {
        let bytes = encode_container(&sample()).unwrap();
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let payload = &bytes[12 + hlen..];
        let first = f32::from_le_bytes(payload[0..4].try_into().unwrap());
        let second = f32::from_le_bytes(payload[4..8].try_into().unwrap());
        // channel 0 holds rows 0, 1, ... which are elements 0, 2 of row-major data
        assert_eq!((first, second), (-1.0, 0.0));
    }

    #[test]
    fn bad_magic_and_size_mismatch() {
        let mut bytes = encode_container(&sample()).unwrap();
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            decode_container(&bad),
            Err(Error::Format(FormatError::BadMagic { .. }))
        ));
        bytes.truncate(bytes.len() - 4);
        assert!(matches!(
            decode_container(&bytes),
            Err(Error::Format(FormatError::SizeMismatch { .. }))
        ));
        assert!(matches!(
            decode_container(&bytes[..10]),
            Err(Error::Format(FormatError::Truncated { .. }))
        ));
    }
}
