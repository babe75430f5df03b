use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Recording, Sample, CHANNELS, CHANNEL_NAMES};
use crate::PartitionId;

/// Per-channel medians used to fill missing readings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationParams {
    pub medians: [f64; CHANNELS],
    pub fitted_on: PartitionId,
}

pub(crate) fn median_of(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Median of the non-missing values of each channel.
pub fn fit_median<'a, I>(samples: I, fitted_on: PartitionId) -> Result<ImputationParams>
where
    I: IntoIterator<Item = &'a Sample>,
{
    let mut columns: [Vec<f64>; CHANNELS] = Default::default();
    for s in samples {
        for (col, v) in columns.iter_mut().zip(s.channels) {
            if let Some(v) = v {
                col.push(v);
            }
        }
    }
    let mut medians = [0.0; CHANNELS];
    for (c, col) in columns.iter_mut().enumerate() {
        medians[c] = median_of(col).ok_or(Error::ChannelAllMissing(CHANNEL_NAMES[c]))?;
    }
    Ok(ImputationParams { medians, fitted_on })
}

pub fn impute(samples: &[Sample], params: &ImputationParams) -> Vec<Sample> {
    samples
        .iter()
        .map(|s| Sample {
            channels: std::array::from_fn(|c| Some(s.channels[c].unwrap_or(params.medians[c]))),
        })
        .collect()
}

pub fn impute_recording(rec: &Recording, params: &ImputationParams) -> Recording {
    Recording {
        subject_id: rec.subject_id.clone(),
        label: rec.label,
        sample_rate_hz: rec.sample_rate_hz,
        samples: impute(&rec.samples, params),
    }
}
