//! Dialog-level train/validation/test split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dialog::Dialog;
use crate::error::{DicrError, Result};

#[derive(Debug, Clone, Default)]
pub struct DatasetSplit {
    pub train: Vec<Dialog>,
    pub valid: Vec<Dialog>,
    pub test: Vec<Dialog>,
}

/// Split sizes for `n` dialogs: train and validation are rounded, test takes the rest.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(DicrError::config(format!(
            "split ratios must all be positive, got {ratios:?}"
        )));
    }
    if n < 3 {
        return Err(DicrError::config(format!(
            "need at least 3 dialogs to split, got {n}"
        )));
    }
    let total: f64 = ratios.iter().sum();
    let mut train = ((n as f64) * ratios[0] / total).round() as usize;
    let mut valid = ((n as f64) * ratios[1] / total).round() as usize;
    train = train.clamp(1, n - 2);
    valid = valid.clamp(1, n - train - 1);
    Ok([train, valid, n - train - valid])
}

pub fn split_dialogs(
    mut dialogs: Vec<Dialog>,
    ratios: [f64; 3],
    seed: u64,
) -> Result<DatasetSplit> {
    let [n_train, n_valid, _] = split_sizes(dialogs.len(), ratios)?;
    dialogs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = dialogs.split_off(n_train + n_valid);
    let valid = dialogs.split_off(n_train);
    Ok(DatasetSplit {
        train: dialogs,
        valid,
        test,
    })
}
