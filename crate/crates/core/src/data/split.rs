use super::LabeledWindow;
use crate::error::{Error, Result};

/// Fractions of each series assigned to train, validation, and test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    /// Last quarter held out; the rest split 80:20 into train and validation.
    fn default() -> Self {
        SplitRatios {
            train: 0.6,
            validation: 0.15,
            test: 0.25,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.validation, self.test];
        if all.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Split(format!("ratios must be positive, got {all:?}")));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Split(format!("ratios must sum to 1, got {all:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct DatasetSplit {
    pub train: Vec<LabeledWindow>,
    pub validation: Vec<LabeledWindow>,
    pub test: Vec<LabeledWindow>,
    /// Seed the split is later shuffled with; the split itself is not random.
    pub seed: u64,
}

// floor, tolerant of representation error such as 0.29 * 100 = 28.999…
fn floor_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 1e-9).floor() as usize
}

/// Splits each series by time: the latest `test` fraction is test, the
/// `validation` fraction before it is validation, and the rest is train.
/// Test and validation counts are floored; train takes the remainder.
pub fn chronological_split(per_series: &[Vec<LabeledWindow>], ratios: SplitRatios) -> Result<DatasetSplit> {
    ratios.validate()?;
    let mut split = DatasetSplit::default();
    for (i, windows) in per_series.iter().enumerate() {
        let n = windows.len();
        if n < 3 {
            return Err(Error::Split(format!(
                "series {i} has only {n} windows, need at least 3"
            )));
        }
        let mut ordered: Vec<&LabeledWindow> = windows.iter().collect();
        ordered.sort_by_key(|w| w.end_index);
        let n_test = floor_count(ratios.test, n);
        let n_val = floor_count(ratios.validation, n);
        let n_train = n - n_test - n_val;
        split.train.extend(ordered[..n_train].iter().map(|w| (*w).clone()));
        split
            .validation
            .extend(ordered[n_train..n_train + n_val].iter().map(|w| (*w).clone()));
        split
            .test
            .extend(ordered[n_train + n_val..].iter().map(|w| (*w).clone()));
    }
    Ok(split)
}
