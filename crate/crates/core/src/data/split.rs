use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::graph::{GraphDataset, Task};
use crate::error::{Error, Result};
use crate::ratio::floor_count;
use crate::rng;

/// One cross-validation fold: disjoint train/validation/test graph ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

/// k-fold split. Fold `f` tests on chunk `f` and validates on chunk `f + 1`
/// (mod k); the other `k - 2` chunks train. With k = 10 that is 80/10/10.
///
/// Classification chunks are stratified: each class is shuffled and dealt
/// round-robin, continuing the dealer position across classes, so every chunk
/// holds floor or ceil of its class share.
pub fn stratified_kfold(ds: &GraphDataset, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!("k = {k}; need at least 3 folds")));
    }
    if ds.len() < k {
        return Err(Error::Dataset(format!(
            "{}: {} graphs cannot fill {k} folds",
            ds.name,
            ds.len()
        )));
    }
    let mut rng = rng::rng(seed);
    let mut chunks: Vec<Vec<usize>> = vec![Vec::new(); k];
    match ds.task {
        Task::Classification { num_classes } => {
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
            for (i, g) in ds.graphs.iter().enumerate() {
                by_class[g.target().class().expect("classification target")].push(i);
            }
            let mut dealer = 0;
            for (c, members) in by_class.iter_mut().enumerate() {
                if members.len() < k {
                    return Err(Error::Dataset(format!(
                        "{}: class {c} has {} graphs, fewer than {k} folds",
                        ds.name,
                        members.len()
                    )));
                }
                members.shuffle(&mut rng);
                for &id in members.iter() {
                    chunks[dealer % k].push(id);
                    dealer += 1;
                }
            }
        }
        Task::Regression => {
            let mut ids: Vec<usize> = (0..ds.len()).collect();
            ids.shuffle(&mut rng);
            for (p, id) in ids.into_iter().enumerate() {
                chunks[p % k].push(id);
            }
        }
    }
    for c in &mut chunks {
        c.sort_unstable();
    }

    Ok((0..k)
        .map(|f| {
            let v = (f + 1) % k;
            let mut train: Vec<usize> = (0..k)
                .filter(|&c| c != f && c != v)
                .flat_map(|c| chunks[c].iter().copied())
                .collect();
            train.sort_unstable();
            FoldSplit {
                fold_index: f,
                train_ids: train,
                val_ids: chunks[v].clone(),
                test_ids: chunks[f].clone(),
            }
        })
        .collect())
}

/// Single random 80/10/10 split (unstratified); used for the regression runs.
pub fn holdout_split(len: usize, seed: u64) -> Result<FoldSplit> {
    if len < 3 {
        return Err(Error::Dataset(format!("{len} graphs cannot be split three ways")));
    }
    let mut ids: Vec<usize> = (0..len).collect();
    ids.shuffle(&mut rng::rng(seed));
    let n_test = floor_count(0.1, len).max(1);
    let n_val = floor_count(0.1, len).max(1);
    let mut test = ids[..n_test].to_vec();
    let mut val = ids[n_test..n_test + n_val].to_vec();
    let mut train = ids[n_test + n_val..].to_vec();
    test.sort_unstable();
    val.sort_unstable();
    train.sort_unstable();
    Ok(FoldSplit {
        fold_index: 0,
        train_ids: train,
        val_ids: val,
        test_ids: test,
    })
}
