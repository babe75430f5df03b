//! Fixed-length sliding-window segmentation and row-major flattening.

use std::io::Write;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{GaitLabel, Recording, CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowPlan {
    pub window_len: usize,
    pub hop: usize,
}

impl Default for WindowPlan {
    /// 4 s at 50 Hz, non-overlapping.
    fn default() -> Self {
        Self {
            window_len: 200,
            hop: 200,
        }
    }
}

impl WindowPlan {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.hop == 0 {
            return Err(Error::invalid("window_len and hop must be at least 1"));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.window_len * CHANNELS
    }

    /// `floor((len - window_len) / hop) + 1`, or 0 when the recording is too short.
    pub fn count(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }

    pub fn starts(&self, len: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.count(len)).map(move |i| i * self.hop)
    }
}

/// A `window_len x 6` segment (rows = time, columns = channels).
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub values: Array2<f64>,
    pub label: GaitLabel,
    pub subject_id: String,
    pub start_index: usize,
}

impl Window {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Row-major: sample 0's six channels, then sample 1's, and so on.
    pub fn flatten(&self) -> Array1<f64> {
        self.values.iter().copied().collect()
    }

    pub fn from_flat(
        flat: &[f64],
        label: GaitLabel,
        subject_id: impl Into<String>,
        start_index: usize,
    ) -> Result<Self> {
        if flat.is_empty() || !flat.len().is_multiple_of(CHANNELS) {
            return Err(Error::invalid(format!(
                "flattened window length {} is not a positive multiple of {CHANNELS}",
                flat.len()
            )));
        }
        let values =
            Array2::from_shape_vec((flat.len() / CHANNELS, CHANNELS), flat.to_vec()).expect("length checked above");
        Ok(Self {
            values,
            label,
            subject_id: subject_id.into(),
            start_index,
        })
    }
}

pub fn flatten(w: &Window) -> Array1<f64> {
    w.flatten()
}

/// Slices a fully imputed recording into windows at offsets `0, hop, 2 hop, ...`.
/// A trailing partial window is dropped.
pub fn slide(rec: &Recording, plan: &WindowPlan) -> Result<Vec<Window>> {
    plan.validate()?;
    if rec.len() < plan.window_len {
        return Err(Error::TooShort {
            context: format!("windowing recording `{}`", rec.subject_id),
            required: plan.window_len,
            actual: rec.len(),
        });
    }
    plan.starts(rec.len())
        .map(|start| window_at(rec, plan.window_len, start))
        .collect()
}

pub(crate) fn window_at(rec: &Recording, window_len: usize, start: usize) -> Result<Window> {
    let mut values = Array2::zeros((window_len, CHANNELS));
    for (t, s) in rec.samples[start..start + window_len].iter().enumerate() {
        for c in 0..CHANNELS {
            match s.channels[c] {
                Some(v) if v.is_finite() => values[[t, c]] = v,
                _ => {
                    return Err(Error::invalid(format!(
                        "recording `{}` has a missing or non-finite value at sample {}",
                        rec.subject_id,
                        start + t
                    )))
                }
            }
        }
    }
    Ok(Window {
        values,
        label: rec.label,
        subject_id: rec.subject_id.clone(),
        start_index: start,
    })
}

/// Stacks flattened windows into an `n x (window_len * 6)` matrix.
pub fn flatten_all(windows: &[Window]) -> Array2<f64> {
    let dim = windows.first().map_or(0, |w| w.values.len());
    let mut out = Array2::zeros((windows.len(), dim));
    for (mut row, w) in out.rows_mut().into_iter().zip(windows) {
        row.assign(&Array1::from_iter(w.values.iter().copied()));
    }
    out
}

/// Debug dump: canonical dataset columns plus `window_id,start_index`.
pub fn write_windows_csv<W: Write>(windows: &[Window], mut out: W) -> Result<()> {
    writeln!(out, "{},window_id,start_index", crate::ingest::CANONICAL_HEADER)?;
    for (id, w) in windows.iter().enumerate() {
        for (t, row) in w.values.rows().into_iter().enumerate() {
            write!(out, "{},{}", w.subject_id, w.label)?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out, ",{id},{}", w.start_index + t)?;
        }
    }
    Ok(())
}
