//! Sensor log parsing, transition trimming, and dataset assembly.
//!
//! Raw per-subject logs are plain comma-separated rows of six fields in the
//! order `ac_x,ac_y,ac_z,gy_x,gy_y,gy_z` (an optional header line with exactly
//! those names is skipped). An empty field or `nan` (any case) marks a
//! missing reading.
//!
//! The merged dataset uses the canonical CSV schema
//! `subject_id,label,ac_x,ac_y,ac_z,gy_x,gy_y,gy_z`, one row per sample,
//! grouped by subject in temporal order.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 6;

/// Accelerometer axes in m/s², then gyroscope axes in rad/s.
pub const CHANNEL_NAMES: [&str; CHANNELS] = ["ac_x", "ac_y", "ac_z", "gy_x", "gy_y", "gy_z"];

pub const CANONICAL_HEADER: &str = "subject_id,label,ac_x,ac_y,ac_z,gy_x,gy_y,gy_z";

/// One time step across all six channels. `None` marks a missing reading.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sample {
    pub channels: [Option<f64>; CHANNELS],
}

impl Sample {
    pub fn new(values: [f64; CHANNELS]) -> Self {
        Self {
            channels: values.map(Some),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.channels.iter().all(Option::is_some)
    }

    /// Channel values with missing slots as NaN.
    pub fn values_or_nan(&self) -> [f64; CHANNELS] {
        self.channels.map(|c| c.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaitLabel {
    Normal,
    Abnormal,
}

impl GaitLabel {
    pub const ALL: [GaitLabel; 2] = [GaitLabel::Normal, GaitLabel::Abnormal];

    /// Normal = 0, Abnormal = 1. Abnormal is the positive class.
    pub fn encode(self) -> u8 {
        match self {
            GaitLabel::Normal => 0,
            GaitLabel::Abnormal => 1,
        }
    }

    pub fn decode(code: u8) -> Option<Self> {
        match code {
            0 => Some(GaitLabel::Normal),
            1 => Some(GaitLabel::Abnormal),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GaitLabel::Normal => "normal",
            GaitLabel::Abnormal => "abnormal",
        }
    }
}

impl fmt::Display for GaitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GaitLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(GaitLabel::Normal),
            "abnormal" => Ok(GaitLabel::Abnormal),
            other => Err(Error::invalid(format!(
                "label must be `normal` or `abnormal`, got `{other}`"
            ))),
        }
    }
}

/// One subject's labeled recording at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub label: GaitLabel,
    pub sample_rate_hz: u32,
    pub samples: Vec<Sample>,
}

impl Recording {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Values of one channel, missing slots as NaN.
    pub fn channel(&self, index: usize) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| s.channels[index].unwrap_or(f64::NAN))
            .collect()
    }

    /// Rebuilds a recording from per-channel columns, keeping label and metadata.
    pub fn with_channels(&self, columns: &[Vec<f64>; CHANNELS]) -> Recording {
        let n = columns[0].len();
        let samples = (0..n)
            .map(|i| Sample::new(std::array::from_fn(|c| columns[c][i])))
            .collect();
        Recording {
            subject_id: self.subject_id.clone(),
            label: self.label,
            sample_rate_hz: self.sample_rate_hz,
            samples,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelCounts {
    pub normal: usize,
    pub abnormal: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.normal + self.abnormal
    }

    pub fn add(&mut self, label: GaitLabel, n: usize) {
        match label {
            GaitLabel::Normal => self.normal += n,
            GaitLabel::Abnormal => self.abnormal += n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub recordings: Vec<Recording>,
    pub provenance: Vec<String>,
}

impl Dataset {
    pub fn sample_rate_hz(&self) -> u32 {
        self.recordings[0].sample_rate_hz
    }

    pub fn total_rows(&self) -> usize {
        self.recordings.iter().map(Recording::len).sum()
    }

    pub fn rows_per_label(&self) -> LabelCounts {
        let mut counts = LabelCounts::default();
        for rec in &self.recordings {
            counts.add(rec.label, rec.len());
        }
        counts
    }
}

fn parse_field(token: &str) -> std::result::Result<Option<f64>, String> {
    let t = token.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    let v: f64 = t.parse().map_err(|_| format!("non-numeric value `{t}`"))?;
    if !v.is_finite() {
        return Err(format!("non-finite value `{t}`"));
    }
    Ok(Some(v))
}

fn parse_sample_fields<'a>(fields: impl Iterator<Item = &'a str>) -> std::result::Result<Sample, String> {
    let fields: Vec<&str> = fields.collect();
    if fields.len() != CHANNELS {
        return Err(format!("expected {CHANNELS} fields, found {}", fields.len()));
    }
    let mut sample = Sample::default();
    for (slot, token) in sample.channels.iter_mut().zip(fields) {
        *slot = parse_field(token)?;
    }
    Ok(sample)
}

fn is_raw_header(line: &str) -> bool {
    let names: Vec<&str> = line.split(',').map(str::trim).collect();
    names == CHANNEL_NAMES
}

/// Parses a raw six-column sensor log from any reader. `path` is used for diagnostics only.
pub fn parse_recording_from<R: Read>(
    reader: R,
    path: &Path,
    subject_id: &str,
    label: GaitLabel,
    rate_hz: u32,
) -> Result<Recording> {
    if rate_hz == 0 {
        return Err(Error::invalid("sample rate must be positive"));
    }
    let mut samples = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        if samples.is_empty() && is_raw_header(line) {
            continue;
        }
        let sample = parse_sample_fields(line.split(',')).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        })?;
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    Ok(Recording {
        subject_id: subject_id.to_string(),
        label,
        sample_rate_hz: rate_hz,
        samples,
    })
}

pub fn parse_recording(path: &Path, subject_id: &str, label: GaitLabel, rate_hz: u32) -> Result<Recording> {
    let file = File::open(path)?;
    parse_recording_from(file, path, subject_id, label, rate_hz)
}

/// A raw log to ingest: the subject id defaults to the file stem.
#[derive(Debug, Clone)]
pub struct RawSource {
    pub path: PathBuf,
    pub subject_id: String,
    pub label: GaitLabel,
}

impl RawSource {
    pub fn from_path(path: impl Into<PathBuf>, label: GaitLabel) -> Self {
        let path = path.into();
        let subject_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.to_string_lossy().into_owned());
        Self {
            path,
            subject_id,
            label,
        }
    }
}

/// Parses several logs in parallel, preserving input order.
pub fn parse_many(sources: &[RawSource], rate_hz: u32) -> Result<Vec<Recording>> {
    sources
        .par_iter()
        .map(|s| parse_recording(&s.path, &s.subject_id, s.label, rate_hz))
        .collect()
}

/// Drops `head_s` leading and `tail_s` trailing seconds.
pub fn trim_transitions(rec: &Recording, head_s: f64, tail_s: f64) -> Result<Recording> {
    if !(head_s >= 0.0 && tail_s >= 0.0) {
        return Err(Error::invalid("trim durations must be non-negative"));
    }
    let rate = rec.sample_rate_hz as f64;
    let head = (head_s * rate).round() as usize;
    let tail = (tail_s * rate).round() as usize;
    let required = head + tail;
    // an all-trimmed recording is useless, so the remainder must be nonempty
    if rec.len() <= required && required > 0 {
        return Err(Error::TooShort {
            context: format!("trimming recording `{}`", rec.subject_id),
            required: required + 1,
            actual: rec.len(),
        });
    }
    Ok(Recording {
        subject_id: rec.subject_id.clone(),
        label: rec.label,
        sample_rate_hz: rec.sample_rate_hz,
        samples: rec.samples[head..rec.len() - tail].to_vec(),
    })
}

/// Checks the fixed-duration invariant (e.g. 60 s after trimming).
pub fn check_duration(rec: &Recording, duration_s: f64) -> Result<()> {
    let expected = (duration_s * rec.sample_rate_hz as f64).round() as usize;
    if rec.len() != expected {
        return Err(Error::invalid(format!(
            "recording `{}` has {} samples, expected {} ({} s at {} Hz); pass --variable-length to accept",
            rec.subject_id,
            rec.len(),
            expected,
            duration_s,
            rec.sample_rate_hz
        )));
    }
    Ok(())
}

pub fn assemble_dataset(recordings: Vec<Recording>, provenance: Vec<String>) -> Result<Dataset> {
    let Some(first) = recordings.first() else {
        return Err(Error::invalid("cannot assemble an empty dataset"));
    };
    let rate = first.sample_rate_hz;
    let mut seen = HashSet::new();
    for rec in &recordings {
        if rec.sample_rate_hz != rate {
            return Err(Error::MixedSampleRate {
                first: rate,
                other: rec.sample_rate_hz,
            });
        }
        if !seen.insert(rec.subject_id.as_str()) {
            return Err(Error::DuplicateSubject(rec.subject_id.clone()));
        }
    }
    Ok(Dataset { recordings, provenance })
}

fn format_value(v: Option<f64>) -> String {
    match v {
        // Display for f64 is the shortest string that round-trips
        Some(x) => x.to_string(),
        None => String::new(),
    }
}

pub fn write_canonical_csv<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    writeln!(out, "{CANONICAL_HEADER}")?;
    for rec in &dataset.recordings {
        write_recording_rows(rec, &mut out)?;
    }
    out.flush()?;
    Ok(())
}

fn write_recording_rows<W: Write>(rec: &Recording, out: &mut W) -> Result<()> {
    let mut line = String::with_capacity(96);
    for s in &rec.samples {
        line.clear();
        line.push_str(&rec.subject_id);
        line.push(',');
        line.push_str(rec.label.as_str());
        for v in s.channels {
            line.push(',');
            line.push_str(&format_value(v));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn canonical_csv_string(dataset: &Dataset) -> String {
    let mut buf = Vec::new();
    write_canonical_csv(dataset, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("canonical CSV is UTF-8")
}

/// Reads a canonical CSV. Rows of one subject must be contiguous.
pub fn read_canonical_csv_from<R: Read>(reader: R, path: &Path, rate_hz: u32) -> Result<Dataset> {
    if rate_hz == 0 {
        return Err(Error::invalid("sample rate must be positive"));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut recordings: Vec<Recording> = Vec::new();
    let mut header_seen = false;
    for result in rdr.records() {
        let record = result?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if !header_seen {
            let header: Vec<&str> = record.iter().collect();
            if header.join(",") != CANONICAL_HEADER {
                return Err(parse_err(line, format!("expected header `{CANONICAL_HEADER}`")));
            }
            header_seen = true;
            continue;
        }
        if record.len() != CHANNELS + 2 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", CHANNELS + 2, record.len()),
            ));
        }
        let subject = &record[0];
        let label: GaitLabel = record[1].parse().map_err(|e: Error| parse_err(line, e.to_string()))?;
        let sample = parse_sample_fields(record.iter().skip(2)).map_err(|m| parse_err(line, m))?;
        match recordings.last_mut() {
            Some(rec) if rec.subject_id == subject => {
                if rec.label != label {
                    return Err(parse_err(
                        line,
                        format!("subject `{subject}` changes label mid-recording"),
                    ));
                }
                rec.samples.push(sample);
            }
            _ => {
                if recordings.iter().any(|r| r.subject_id == subject) {
                    return Err(parse_err(
                        line,
                        format!("rows for subject `{subject}` are not contiguous"),
                    ));
                }
                recordings.push(Recording {
                    subject_id: subject.to_string(),
                    label,
                    sample_rate_hz: rate_hz,
                    samples: vec![sample],
                });
            }
        }
    }
    if recordings.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    assemble_dataset(recordings, vec![path.display().to_string()])
}

pub fn read_canonical_csv(path: &Path, rate_hz: u32) -> Result<Dataset> {
    let file = File::open(path)?;
    read_canonical_csv_from(file, path, rate_hz)
}
