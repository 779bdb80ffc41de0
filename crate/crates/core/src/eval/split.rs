use rand::seq::SliceRandom;

use crate::{seed, Error, Result};

/// Partitions `ids` into `k` disjoint test sets whose sizes differ by at
/// most one. The first `n mod k` sets carry the extra element.
pub fn kfold_split<T: Clone>(ids: &[T], k: usize, seed_value: u64) -> Result<Vec<Vec<T>>> {
    if k == 0 || k > ids.len() {
        return Err(Error::Config(format!(
            "k-fold needs 1 ≤ k ≤ n, got k = {k} with n = {}",
            ids.len()
        )));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut seed::rng(seed_value));
    let base = ids.len() / k;
    let extra = ids.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].iter().map(|&i| ids[i].clone()).collect());
        start += len;
    }
    Ok(folds)
}
