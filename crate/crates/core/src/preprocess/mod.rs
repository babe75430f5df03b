//! Pre-windowing chain: median imputation, low-pass filtering, label encoding.

mod filter;
pub(crate) mod impute;

pub use filter::{design_butterworth, filter_recording, filter_signal, FilterCoefficients, FilterSpec};
pub use impute::{fit_median, impute, impute_recording, ImputationParams};

use crate::ingest::GaitLabel;

pub fn encode_label(label: GaitLabel) -> u8 {
    label.encode()
}

pub fn decode_label(code: u8) -> Option<GaitLabel> {
    GaitLabel::decode(code)
}
