use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset};

/// Number of training rows: `ceil(n * frac)`, ignoring float noise such as
/// `10 * 0.7 = 7.000000000000001`.
fn train_size(n: usize, frac: f64) -> usize {
    let t = n as f64 * frac;
    let r = t.round();
    if (t - r).abs() < 1e-9 * n.max(1) as f64 {
        r as usize
    } else {
        t.ceil() as usize
    }
}

/// Random partition into train and test folds. Rows inside each fold keep
/// their original relative order.
pub fn split(ds: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(DataError::Config(format!("train fraction {train_frac} must lie in (0, 1)")));
    }
    let n = ds.len();
    let k = train_size(n, train_frac);
    if k == 0 || k >= n {
        return Err(DataError::DegenerateSplit(format!(
            "{n} rows at fraction {train_frac} leave an empty fold"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (mut train, mut test) = (idx[..k].to_vec(), idx[k..].to_vec());
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.select_rows(&train), ds.select_rows(&test)))
}
