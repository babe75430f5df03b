use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::GaitLabel;
use crate::pipeline::WindowRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Windows are assigned individually; one subject's windows can be split
    /// across train and test.
    #[default]
    WindowLevel,
    /// All windows of a recording go to the same fold.
    SubjectLevel,
}

impl SplitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitMode::WindowLevel => "window_level",
            SplitMode::SubjectLevel => "subject_level",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// `k_folds`-fold cross-validation; every window is tested exactly once.
    #[default]
    KFold,
    /// One seeded split at `train_fraction`.
    Holdout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitPlan {
    pub mode: SplitMode,
    pub protocol: Protocol,
    pub train_fraction: f64,
    pub k_folds: usize,
    pub stratified: bool,
    /// Set from the pipeline's global seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self {
            mode: SplitMode::default(),
            protocol: Protocol::default(),
            train_fraction: 0.8,
            k_folds: 5,
            stratified: true,
            seed: 0,
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.k_folds < 2 {
            return Err(Error::invalid(format!(
                "k_folds must be at least 2, got {}",
                self.k_folds
            )));
        }
        Ok(())
    }
}

/// Indices into the window list; both sides sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// A split unit: one window (window level) or all windows of a recording.
struct Unit {
    label: GaitLabel,
    members: Vec<usize>,
}

fn units(windows: &[WindowRef], mode: SplitMode) -> Result<Vec<Unit>> {
    match mode {
        SplitMode::WindowLevel => Ok(windows
            .iter()
            .enumerate()
            .map(|(i, w)| Unit {
                label: w.label,
                members: vec![i],
            })
            .collect()),
        SplitMode::SubjectLevel => {
            let mut out: Vec<(usize, Unit)> = Vec::new();
            for (i, w) in windows.iter().enumerate() {
                match out.iter_mut().find(|(rec, _)| *rec == w.recording) {
                    Some((_, unit)) => {
                        if unit.label != w.label {
                            return Err(Error::invalid(format!(
                                "recording {} has windows with different labels",
                                w.recording
                            )));
                        }
                        unit.members.push(i);
                    }
                    None => out.push((
                        w.recording,
                        Unit {
                            label: w.label,
                            members: vec![i],
                        },
                    )),
                }
            }
            Ok(out.into_iter().map(|(_, u)| u).collect())
        }
    }
}

fn unit_noun(mode: SplitMode) -> &'static str {
    match mode {
        SplitMode::WindowLevel => "windows",
        SplitMode::SubjectLevel => "subjects",
    }
}

/// Assigns windows to folds.
///
/// Units are shuffled with a seeded RNG (per class when stratified) and dealt
/// round-robin, continuing the deal position across classes, so every fold's
/// per-class count is within one of the expected share.
///
/// k-fold needs at least `k` units overall and, when stratified, at least two
/// units of each class.
pub fn split(windows: &[WindowRef], plan: &SplitPlan) -> Result<Vec<Fold>> {
    plan.validate()?;
    let units = units(windows, plan.mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let groups: Vec<Vec<usize>> = if plan.stratified {
        GaitLabel::ALL
            .iter()
            .map(|&class| {
                let mut g: Vec<usize> = (0..units.len()).filter(|&u| units[u].label == class).collect();
                g.shuffle(&mut rng);
                g
            })
            .collect()
    } else {
        let mut g: Vec<usize> = (0..units.len()).collect();
        g.shuffle(&mut rng);
        vec![g]
    };

    let test_units: Vec<Vec<usize>> = match plan.protocol {
        Protocol::KFold => {
            let k = plan.k_folds;
            if units.len() < k {
                return Err(Error::invalid(format!(
                    "{k}-fold split needs at least {k} {}, found {}",
                    unit_noun(plan.mode),
                    units.len()
                )));
            }
            if plan.stratified {
                for (g, class) in groups.iter().zip(GaitLabel::ALL) {
                    if g.len() < 2 {
                        return Err(Error::invalid(format!(
                            "stratified split needs at least 2 {} of class {class}, found {}",
                            unit_noun(plan.mode),
                            g.len()
                        )));
                    }
                }
            }
            let mut folds = vec![Vec::new(); k];
            let mut pos = 0;
            for g in &groups {
                for &u in g {
                    folds[pos % k].push(u);
                    pos += 1;
                }
            }
            folds
        }
        Protocol::Holdout => {
            let mut test = Vec::new();
            for (g, class) in groups.iter().zip(GaitLabel::ALL) {
                let n_test = ((1.0 - plan.train_fraction) * g.len() as f64).round() as usize;
                if n_test == 0 || n_test == g.len() {
                    let what = if plan.stratified {
                        format!("class {class}")
                    } else {
                        "the dataset".to_string()
                    };
                    return Err(Error::invalid(format!(
                        "holdout at train_fraction {} leaves an empty side for {what} ({} {})",
                        plan.train_fraction,
                        g.len(),
                        unit_noun(plan.mode)
                    )));
                }
                test.extend_from_slice(&g[..n_test]);
            }
            vec![test]
        }
    };

    Ok(test_units
        .into_iter()
        .map(|fold_units| {
            let mut in_test = vec![false; windows.len()];
            for u in fold_units {
                for &w in &units[u].members {
                    in_test[w] = true;
                }
            }
            let (test, train): (Vec<usize>, Vec<usize>) = (0..windows.len()).partition(|&i| in_test[i]);
            Fold { train, test }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use GaitLabel::*;

    fn refs(labels: &[GaitLabel], per_recording: usize) -> Vec<WindowRef> {
        labels
            .iter()
            .enumerate()
            .flat_map(|(r, &label)| {
                (0..per_recording).map(move |i| WindowRef {
                    recording: r,
                    start: i * 200,
                    label,
                })
            })
            .collect()
    }

    #[test]
    fn ten_windows_five_folds_of_two() {
        let mut labels = vec![Normal; 6];
        labels.extend([Abnormal; 4]);
        let w = refs(&labels, 1);
        let folds = split(&w, &SplitPlan::default()).unwrap();
        assert_eq!(folds.len(), 5);
        for f in &folds {
            assert_eq!(f.test.len(), 2);
            let ab = f.test.iter().filter(|&&i| w[i].label == Abnormal).count();
            // expected 0.8 abnormal per fold
            assert!(ab <= 1);
        }
    }

    #[test]
    fn kfold_tests_each_window_once() {
        let mut labels = vec![Normal; 14];
        labels.extend([Abnormal; 9]);
        let w = refs(&labels, 15);
        for mode in [SplitMode::WindowLevel, SplitMode::SubjectLevel] {
            let plan = SplitPlan {
                mode,
                seed: 9,
                ..Default::default()
            };
            let folds = split(&w, &plan).unwrap();
            let mut seen = vec![0; w.len()];
            for f in &folds {
                assert_eq!(f.train.len() + f.test.len(), w.len());
                for &i in &f.test {
                    seen[i] += 1;
                }
            }
            assert!(seen.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn subject_level_keeps_subjects_together() {
        let mut labels = vec![Normal; 14];
        labels.extend([Abnormal; 9]);
        let w = refs(&labels, 15);
        let plan = SplitPlan {
            mode: SplitMode::SubjectLevel,
            seed: 3,
            ..Default::default()
        };
        let folds = split(&w, &plan).unwrap();
        for rec in 0..23 {
            let holding: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(_, f)| f.test.iter().any(|&i| w[i].recording == rec))
                .map(|(k, _)| k)
                .collect();
            assert_eq!(holding.len(), 1);
            let k = holding[0];
            assert!(folds[k].train.iter().all(|&i| w[i].recording != rec));
        }
    }

    #[test]
    fn holdout_345_windows() {
        let mut labels = vec![Normal; 14];
        labels.extend([Abnormal; 9]);
        let w = refs(&labels, 15);
        assert_eq!(w.len(), 345);
        for stratified in [true, false] {
            let plan = SplitPlan {
                protocol: Protocol::Holdout,
                stratified,
                ..Default::default()
            };
            let folds = split(&w, &plan).unwrap();
            assert_eq!(folds.len(), 1);
            assert_eq!(folds[0].train.len(), 276);
            assert_eq!(folds[0].test.len(), 69);
        }
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let w = refs(&[Normal, Normal, Normal, Normal, Normal, Abnormal], 1);
        assert!(split(&w, &SplitPlan::default()).is_err());
        let w = refs(&[Normal, Normal, Abnormal, Abnormal], 1);
        assert!(split(&w, &SplitPlan::default()).is_err());
        let w = refs(&[Normal, Normal, Normal, Abnormal, Abnormal], 1);
        assert!(split(&w, &SplitPlan::default()).is_ok());
    }

    #[test]
    fn seeded_and_deterministic() {
        let mut labels = vec![Normal; 12];
        labels.extend([Abnormal; 8]);
        let w = refs(&labels, 1);
        let a = split(
            &w,
            &SplitPlan {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let b = split(
            &w,
            &SplitPlan {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let c = split(
            &w,
            &SplitPlan {
                seed: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
