use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

/// Seeded shuffle of `ids`, then val, test and the remainder as train.
pub fn make_split(ids: &[String], seed: u64, val_n: usize, test_n: usize) -> Result<DatasetSplit> {
    let requested = val_n + test_n;
    if requested > ids.len() {
        return Err(Error::NotEnoughIds {
            requested,
            available: ids.len(),
        });
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train = shuffled.split_off(requested);
    let test = shuffled.split_off(val_n);
    Ok(DatasetSplit {
        train,
        val: shuffled,
        test,
        seed,
    })
}
