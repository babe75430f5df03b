//! Seeded synthetic gait recordings for exercising the pipeline end to end.
//!
//! Each channel is a per-axis offset (gravity and posture) plus a cadence
//! fundamental and two harmonics, scaled by a step envelope
//! `1 + asymmetry * cos(pi * cadence * t)` that alternates between left and
//! right steps, plus Gaussian noise. Abnormal profiles walk slower, with
//! smaller and lopsided steps, a tilted posture, and more noise.
//!
//! This is a software test fixture, not a biomechanical model.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{assemble_dataset, Dataset, GaitLabel, Recording, Sample, CHANNELS};

/// Number of sinusoids per channel: the fundamental and two harmonics.
pub const HARMONICS: usize = 3;

/// Relative weight of each harmonic per channel (acc in m/s², gyro in rad/s).
const HARMONIC_WEIGHTS: [[f64; HARMONICS]; CHANNELS] = [
    [1.0, 0.4, 0.2],
    [1.6, 0.7, 0.3],
    [0.8, 0.3, 0.15],
    [0.5, 0.25, 0.1],
    [0.35, 0.15, 0.08],
    [0.45, 0.2, 0.1],
];

const PHASE_OFFSETS: [f64; CHANNELS] = [0.0, PI / 2.0, PI / 4.0, PI / 3.0, 2.0 * PI / 3.0, PI / 6.0];

const NORMAL_OFFSETS: [f64; CHANNELS] = [0.0, 9.81, 0.0, 0.0, 0.0, 0.0];
/// Forward-stooped posture tips gravity out of the vertical axis.
const ABNORMAL_OFFSETS: [f64; CHANNELS] = [1.0, 9.5, 2.2, 0.05, 0.0, -0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitProfile {
    pub label: GaitLabel,
    /// Step frequency in Hz.
    pub cadence_hz: f64,
    pub step_amplitude: f64,
    pub harmonic_weights: [[f64; HARMONICS]; CHANNELS],
    pub phase_offsets: [f64; CHANNELS],
    /// Constant per-axis level.
    pub offsets: [f64; CHANNELS],
    /// Left/right step amplitude imbalance in `[0, 1)`.
    pub asymmetry: f64,
    /// Noise standard deviation in units of `step_amplitude`.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl GaitProfile {
    pub fn normal(seed: u64) -> Self {
        Self {
            label: GaitLabel::Normal,
            cadence_hz: 1.9,
            step_amplitude: 1.0,
            harmonic_weights: HARMONIC_WEIGHTS,
            phase_offsets: PHASE_OFFSETS,
            offsets: NORMAL_OFFSETS,
            asymmetry: 0.0,
            noise_sigma: 0.05,
            seed,
        }
    }

    pub fn abnormal(seed: u64) -> Self {
        Self {
            label: GaitLabel::Abnormal,
            cadence_hz: 1.1,
            step_amplitude: 0.6,
            offsets: ABNORMAL_OFFSETS,
            asymmetry: 0.35,
            noise_sigma: 0.15,
            ..Self::normal(seed)
        }
    }

    pub fn for_label(label: GaitLabel, seed: u64) -> Self {
        match label {
            GaitLabel::Normal => Self::normal(seed),
            GaitLabel::Abnormal => Self::abnormal(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cadence_hz > 0.5 && self.cadence_hz < 4.0) {
            return Err(Error::invalid(format!(
                "cadence_hz must lie in (0.5, 4), got {}",
                self.cadence_hz
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.asymmetry) {
            return Err(Error::invalid(format!(
                "asymmetry must lie in [0, 1), got {}",
                self.asymmetry
            )));
        }
        if !(self.step_amplitude >= 0.0 && self.step_amplitude.is_finite()) {
            return Err(Error::invalid("step_amplitude must be non-negative"));
        }
        Ok(())
    }

    /// Small per-subject variation of cadence, amplitude, and posture.
    fn jittered(mut self, rng: &mut ChaCha8Rng) -> Self {
        let mut n = || -> f64 { StandardNormal.sample(rng) };
        self.cadence_hz *= 1.0 + 0.04 * n();
        self.step_amplitude *= 1.0 + 0.08 * n();
        for o in &mut self.offsets {
            *o += 0.15 * n();
        }
        self
    }
}

/// Synthesizes `duration_s` seconds at `rate_hz`. Deterministic in `profile.seed`.
pub fn generate_recording(profile: &GaitProfile, subject_id: &str, duration_s: f64, rate_hz: u32) -> Result<Recording> {
    profile.validate()?;
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::invalid("duration_s must be positive"));
    }
    let highest = HARMONICS as f64 * profile.cadence_hz;
    if rate_hz as f64 <= 2.0 * highest {
        return Err(Error::invalid(format!(
            "sample rate {rate_hz} Hz does not exceed twice the highest harmonic ({highest} Hz)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let start_phase = rng.random_range(0.0..2.0 * PI);
    let n = (duration_s * rate_hz as f64).round() as usize;
    let w = 2.0 * PI * profile.cadence_hz;
    let noise_sd = profile.noise_sigma * profile.step_amplitude;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate_hz as f64;
            let envelope = 1.0 + profile.asymmetry * (0.5 * w * t + 0.5 * start_phase).cos();
            let values: [f64; CHANNELS] = std::array::from_fn(|c| {
                let periodic: f64 = (0..HARMONICS)
                    .map(|h| {
                        let k = (h + 1) as f64;
                        profile.harmonic_weights[c][h] * (k * (w * t + start_phase + profile.phase_offsets[c])).sin()
                    })
                    .sum();
                let noise: f64 = if noise_sd > 0.0 {
                    noise_sd * Distribution::<f64>::sample(&StandardNormal, &mut rng)
                } else {
                    0.0
                };
                profile.offsets[c] + profile.step_amplitude * envelope * periodic + noise
            });
            Sample::new(values)
        })
        .collect();
    Ok(Recording {
        subject_id: subject_id.to_string(),
        label: profile.label,
        sample_rate_hz: rate_hz,
        samples,
    })
}

pub fn generate_benchmark(n_normal: usize, n_abnormal: usize, seed: u64) -> Result<Dataset> {
    generate_benchmark_with(n_normal, n_abnormal, seed, 60.0, 50)
}

/// `n_normal` then `n_abnormal` recordings with ids `normal_01`, ..., `abnormal_01`, ...
/// Per-recording seeds are drawn from a stream seeded by `seed`.
pub fn generate_benchmark_with(
    n_normal: usize,
    n_abnormal: usize,
    seed: u64,
    duration_s: f64,
    rate_hz: u32,
) -> Result<Dataset> {
    if n_normal == 0 || n_abnormal == 0 {
        return Err(Error::invalid("benchmark needs at least one recording of each class"));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let plan: Vec<(String, GaitProfile)> = (0..n_normal)
        .map(|i| (GaitLabel::Normal, i))
        .chain((0..n_abnormal).map(|i| (GaitLabel::Abnormal, i)))
        .map(|(label, i)| {
            let rec_seed = master.next_u64();
            let mut jitter_rng = ChaCha8Rng::seed_from_u64(rec_seed ^ 0x9e37_79b9_7f4a_7c15);
            let profile = GaitProfile::for_label(label, rec_seed).jittered(&mut jitter_rng);
            (format!("{}_{:02}", label.as_str(), i + 1), profile)
        })
        .collect();
    let recordings: Vec<Recording> = plan
        .par_iter()
        .map(|(id, profile)| generate_recording(profile, id, duration_s, rate_hz))
        .collect::<Result<_>>()?;
    assemble_dataset(recordings, vec![format!("synthetic benchmark, seed {seed}")])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_symmetric_is_periodic() {
        let profile = GaitProfile {
            cadence_hz: 2.0,
            noise_sigma: 0.0,
            asymmetry: 0.0,
            ..GaitProfile::normal(5)
        };
        let rec = generate_recording(&profile, "p", 10.0, 50).unwrap();
        let period = 25;
        for i in 0..rec.len() - period {
            for c in 0..CHANNELS {
                let a = rec.samples[i].channels[c].unwrap();
                let b = rec.samples[i + period].channels[c].unwrap();
                assert!((a - b).abs() < 1e-9, "sample {i} channel {c}");
            }
        }
    }

    #[test]
    fn same_seed_same_recording() {
        let p = GaitProfile::abnormal(11);
        assert_eq!(
            generate_recording(&p, "x", 5.0, 50).unwrap(),
            generate_recording(&p, "x", 5.0, 50).unwrap()
        );
    }

    #[test]
    fn sixty_seconds_at_50hz() {
        let rec = generate_recording(&GaitProfile::normal(0), "x", 60.0, 50).unwrap();
        assert_eq!(rec.len(), 3000);
    }

    #[test]
    fn nyquist_violation() {
        let p = GaitProfile {
            cadence_hz: 3.0,
            ..GaitProfile::normal(0)
        };
        assert!(generate_recording(&p, "x", 1.0, 18).is_err());
        assert!(generate_recording(&p, "x", 1.0, 19).is_ok());
    }

    #[test]
    fn profile_invariants() {
        assert!(GaitProfile {
            cadence_hz: 0.4,
            ..GaitProfile::normal(0)
        }
        .validate()
        .is_err());
        assert!(GaitProfile {
            asymmetry: 1.0,
            ..GaitProfile::normal(0)
        }
        .validate()
        .is_err());
        assert!(GaitProfile {
            noise_sigma: -0.1,
            ..GaitProfile::normal(0)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn benchmark_counts() {
        let ds = generate_benchmark(14, 9, 42).unwrap();
        assert_eq!(ds.recordings.len(), 23);
        let counts = ds.rows_per_label();
        assert_eq!((counts.normal, counts.abnormal), (42000, 27000));
        let two = generate_benchmark(1, 1, 7).unwrap();
        assert_ne!(two.recordings[0].label, two.recordings[1].label);
    }
}
