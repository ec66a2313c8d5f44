use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Disjoint train/validation/test stroke ids. Each list is sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Seeded uniform partition. Ids are sorted before shuffling so the result
/// depends only on the id set and the seed. Validation and test sizes are
/// the rounded fractions, at least one each.
pub fn make_split(stroke_ids: &[String], seed: u64, val_frac: f64, test_frac: f64) -> Result<Split, CorpusError> {
    let n = stroke_ids.len();
    if n < 3 {
        return Err(CorpusError::TooFewStrokes(n));
    }
    if !(val_frac >= 0.0 && test_frac >= 0.0 && val_frac + test_frac < 1.0) {
        return Err(CorpusError::Fractions {
            val: val_frac,
            test: test_frac,
        });
    }
    let n_val = ((val_frac * n as f64).round() as usize).max(1);
    let n_test = ((test_frac * n as f64).round() as usize).max(1);
    if n_val + n_test >= n {
        return Err(CorpusError::EmptyTrain {
            n,
            val: n_val,
            test: n_test,
        });
    }
    let mut ids = stroke_ids.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() != n {
        return Err(CorpusError::DuplicateStroke(String::from("(in split input)")));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = ids[..n_test].to_vec();
    let mut validation = ids[n_test..n_test + n_val].to_vec();
    let mut train = ids[n_test + n_val..].to_vec();
    test.sort();
    validation.sort();
    train.sort();
    Ok(Split {
        seed,
        train,
        validation,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:04}")).collect()
    }

    #[test]
    fn thousand_strokes() {
        let s = make_split(&ids(1000), 7, 0.04, 0.015).unwrap();
        assert_eq!((s.validation.len(), s.test.len(), s.train.len()), (40, 15, 945));
        assert_eq!(make_split(&ids(1000), 7, 0.04, 0.015).unwrap(), s);
        assert_ne!(make_split(&ids(1000), 8, 0.04, 0.015).unwrap(), s);
    }

    #[test]
    fn three_strokes() {
        let s = make_split(&ids(3), 1, 0.04, 0.015).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (1, 1, 1));
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(make_split(&ids(2), 1, 0.04, 0.015), Err(CorpusError::TooFewStrokes(2))));
        assert!(matches!(make_split(&ids(50), 1, 0.6, 0.4), Err(CorpusError::Fractions { .. })));
    }

    proptest! {
        #[test]
        fn partition_independent_of_order(n in 3usize..300, seed in any::<u64>(), rot in 0usize..300) {
            let base = ids(n);
            let mut rotated = base.clone();
            rotated.rotate_left(rot % n);
            let a = make_split(&base, seed, 0.04, 0.015).unwrap();
            let b = make_split(&rotated, seed, 0.04, 0.015).unwrap();
            prop_assert_eq!(&a, &b);
            let all: BTreeSet<&String> = a.train.iter().chain(&a.validation).chain(&a.test).collect();
            prop_assert_eq!(all.len(), n);
        }
    }
}
