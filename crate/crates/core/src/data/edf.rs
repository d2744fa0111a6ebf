//! Strict reader for plain EDF files (no EDF+ annotation channels).

use std::path::Path;

use super::recording::EegRecording;
use crate::bytes::ByteReader;
use crate::error::{Error, FormatError, Result};
use crate::tensor::Tensor;

const FIXED_HEADER: usize = 256;
const PER_SIGNAL: usize = 256;

/// Per-signal header fields needed for decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct EdfSignal {
    pub label: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub samples_per_record: usize,
}

impl EdfSignal {
    /// Linear map from the digital range onto the physical range.
    pub fn to_physical(&self, digital: i16) -> f64 {
        let scale = (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min) as f64;
        (digital as f64 - self.digital_min as f64) * scale + self.physical_min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdfHeader {
    pub patient: String,
    pub recording: String,
    pub n_records: usize,
    pub record_duration_s: f64,
    pub signals: Vec<EdfSignal>,
}

fn ascii_field<'a>(r: &mut ByteReader<'a>, len: usize, field: &str) -> Result<String> {
    let raw = r.take(len, field)?;
    if !raw.is_ascii() {
        return Err(FormatError::NonAscii { field: field.into() }.into());
    }
    Ok(String::from_utf8_lossy(raw).trim().to_string())
}

fn number<T: std::str::FromStr>(text: &str, field: &str) -> Result<T> {
    text.parse()
        .map_err(|_| FormatError::InvalidHeader(format!("field `{field}` is not a number: {text:?}")).into())
}

fn parse_header(r: &mut ByteReader) -> Result<(EdfHeader, i64)> {
    ascii_field(r, 8, "version")?;
    let patient = ascii_field(r, 80, "patient")?;
    let recording = ascii_field(r, 80, "recording")?;
    ascii_field(r, 8, "start date")?;
    ascii_field(r, 8, "start time")?;
    let header_bytes: usize = number(&ascii_field(r, 8, "header bytes")?, "header bytes")?;
    ascii_field(r, 44, "reserved")?;
    let declared: i64 = number(&ascii_field(r, 8, "number of records")?, "number of records")?;
    let record_duration_s: f64 = number(&ascii_field(r, 8, "record duration")?, "record duration")?;
    let ns: usize = number(&ascii_field(r, 4, "number of signals")?, "number of signals")?;
    if ns == 0 || header_bytes != FIXED_HEADER + ns * PER_SIGNAL {
        return Err(FormatError::InvalidHeader(format!("{ns} signals but header of {header_bytes} bytes")).into());
    }
    if !(record_duration_s > 0.0) {
        return Err(FormatError::InvalidHeader(format!("record duration {record_duration_s}")).into());
    }

    // per-signal fields are stored field-major: all labels, then all transducers, ...
    let mut column = |len: usize, field: &str| -> Result<Vec<String>> {
        (0..ns).map(|i| ascii_field(r, len, &format!("{field}[{i}]"))).collect()
    };
    let labels = column(16, "label")?;
    column(80, "transducer")?;
    column(8, "physical dimension")?;
    let pmin = column(8, "physical minimum")?;
    let pmax = column(8, "physical maximum")?;
    let dmin = column(8, "digital minimum")?;
    let dmax = column(8, "digital maximum")?;
    column(80, "prefiltering")?;
    let nsamp = column(8, "samples per record")?;
    column(32, "signal reserved")?;

    let signals = (0..ns)
        .map(|i| {
            let s = EdfSignal {
                label: labels[i].clone(),
                physical_min: number(&pmin[i], "physical minimum")?,
                physical_max: number(&pmax[i], "physical maximum")?,
                digital_min: number(&dmin[i], "digital minimum")?,
                digital_max: number(&dmax[i], "digital maximum")?,
                samples_per_record: number(&nsamp[i], "samples per record")?,
            };
            if s.digital_max == s.digital_min {
                return Err(FormatError::ZeroDigitalRange {
                    signal: i,
                    digital_min: s.digital_min,
                    digital_max: s.digital_max,
                }
                .into());
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        EdfHeader {
            patient,
            recording,
            n_records: 0,
            record_duration_s,
            signals,
        },
        declared,
    ))
}

/// Decodes EDF bytes into physical values. Signals sharing the first signal's
/// sample rate become the channels; others are dropped with a warning.
pub fn parse_edf(bytes: &[u8], subject: &str) -> Result<(EdfHeader, EegRecording)> {
    let mut r = ByteReader::new(bytes);
    let (mut header, declared) = parse_header(&mut r)?;
    let record_len: usize = header.signals.iter().map(|s| s.samples_per_record * 2).sum();
    if record_len == 0 {
        return Err(FormatError::InvalidHeader("data records are empty".into()).into());
    }
    let full = r.remaining() / record_len;
    if !r.remaining().is_multiple_of(record_len) {
        return Err(FormatError::TruncatedRecord { index: full }.into());
    }
    if declared != -1 && declared != full as i64 {
        return Err(FormatError::RecordCount { declared, actual: full }.into());
    }
    header.n_records = full;

    let rate_of = |s: &EdfSignal| s.samples_per_record;
    let keep: Vec<usize> = (0..header.signals.len())
        .filter(|&i| rate_of(&header.signals[i]) == rate_of(&header.signals[0]))
        .collect();
    if keep.len() < header.signals.len() {
        log::warn!(
            "{subject}: dropping {} signals with a different sample rate",
            header.signals.len() - keep.len()
        );
    }
    let spr = header.signals[0].samples_per_record;
    let c = keep.len();
    let t = full * spr;
    if t == 0 {
        return Err(FormatError::RecordCount { declared, actual: 0 }.into());
    }
    let mut data = vec![0.0f32; t * c];
    for rec_idx in 0..full {
        for (si, sig) in header.signals.iter().enumerate() {
            let raw = r.take(sig.samples_per_record * 2, "data record")?;
            let Some(col) = keep.iter().position(|&k| k == si) else {
                continue;
            };
            for (j, pair) in raw.chunks_exact(2).enumerate() {
                let d = i16::from_le_bytes([pair[0], pair[1]]);
                data[(rec_idx * spr + j) * c + col] = sig.to_physical(d) as f32;
            }
        }
    }
    let rec = EegRecording::new(
        subject,
        spr as f64 / header.record_duration_s,
        keep.iter().map(|&i| header.signals[i].label.clone()).collect(),
        Tensor::new(vec![t, c], data)?,
    )?;
    Ok((header, rec))
}

pub fn read_edf(path: impl AsRef<Path>) -> Result<EegRecording> {
    let path = path.as_ref();
    let subject = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Validation(format!("bad EDF path {}", path.display())))?;
    Ok(parse_edf(&std::fs::read(path)?, subject)?.1)
}

/// Builds an EDF byte stream. Used by tests and fixtures.
pub fn encode_edf(header: &EdfHeader, records: &[Vec<Vec<i16>>]) -> Vec<u8> {
    fn field(out: &mut Vec<u8>, text: &str, len: usize) {
        let mut b = text.as_bytes().to_vec();
        b.resize(len, b' ');
        out.extend_from_slice(&b[..len]);
    }
    let ns = header.signals.len();
    let mut out = Vec::new();
    field(&mut out, "0", 8);
    field(&mut out, &header.patient, 80);
    field(&mut out, &header.recording, 80);
    field(&mut out, "01.01.00", 8);
    field(&mut out, "00.00.00", 8);
    field(&mut out, &(FIXED_HEADER + ns * PER_SIGNAL).to_string(), 8);
    field(&mut out, "", 44);
    field(&mut out, &records.len().to_string(), 8);
    field(&mut out, &header.record_duration_s.to_string(), 8);
    field(&mut out, &ns.to_string(), 4);
    let sigs = &header.signals;
    sigs.iter().for_each(|s| field(&mut out, &s.label, 16));
    sigs.iter().for_each(|_| field(&mut out, "", 80));
    sigs.iter().for_each(|_| field(&mut out, "uV", 8));
    sigs.iter().for_each(|s| field(&mut out, &s.physical_min.to_string(), 8));
    sigs.iter().for_each(|s| field(&mut out, &s.physical_max.to_string(), 8));
    sigs.iter().for_each(|s| field(&mut out, &s.digital_min.to_string(), 8));
    sigs.iter().for_each(|s| field(&mut out, &s.digital_max.to_string(), 8));
    sigs.iter().for_each(|_| field(&mut out, "", 80));
    sigs.iter().for_each(|s| field(&mut out, &s.samples_per_record.to_string(), 8));
    sigs.iter().for_each(|_| field(&mut out, "", 32));
    for rec in records {
        for sig in rec {
            for v in sig {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}
