//! Coalescing of additive updates.
//!
//! Updates to the same row commute, so a worker ships one summed delta per row
//! at the end of each clock. Summation order is canonicalised (deltas sorted
//! by their bit patterns) so the output does not depend on the order in which
//! the updates were produced.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::{RowKey, Update};

fn cmp_delta(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Sums the deltas of one row in canonical order.
pub fn coalesce_row(row: RowKey, deltas: &[&[f64]]) -> Result<Vec<f64>> {
    let Some(first) = deltas.first() else {
        return Ok(Vec::new());
    };
    let width = first.len();
    if let Some(bad) = deltas.iter().find(|d| d.len() != width) {
        return Err(Error::LengthMismatch { row, expected: width, got: bad.len() });
    }
    let mut order: Vec<&[f64]> = deltas.to_vec();
    order.sort_by(|a, b| cmp_delta(a, b));
    let mut sum = order[0].to_vec();
    for d in &order[1..] {
        for (s, v) in sum.iter_mut().zip(d.iter()) {
            *s += *v;
        }
    }
    Ok(sum)
}

/// One output update per distinct row, sorted by row key.
pub fn coalesce(updates: &[Update]) -> Result<Vec<Update>> {
    let Some(head) = updates.first() else {
        return Ok(Vec::new());
    };
    let (worker, clock) = (head.worker, head.clock);
    let mut by_row: BTreeMap<RowKey, Vec<&[f64]>> = BTreeMap::new();
    for u in updates {
        if u.worker != worker || u.clock != clock {
            return Err(Error::MixedBatch(worker, clock, u.worker, u.clock));
        }
        by_row.entry(u.row).or_default().push(&u.delta);
    }
    by_row.into_iter().map(|(row, deltas)| Ok(Update::new(worker, clock, row, coalesce_row(row, &deltas)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn up(row: u64, d: &[f64]) -> Update {
        Update::new(0, 0, RowKey(row), d.to_vec())
    }

    #[test]
    fn sums_same_row() {
        let out = coalesce(&[up(3, &[1.0, 2.0]), up(3, &[0.5, -1.0])]).unwrap();
        assert_eq!(out, vec![up(3, &[1.5, 1.0])]);
    }

    #[test]
    fn empty_batch() {
        assert!(coalesce(&[]).unwrap().is_empty());
    }

    #[test]
    fn sorted_by_row() {
        let out = coalesce(&[up(9, &[1.0]), up(2, &[1.0]), up(9, &[1.0])]).unwrap();
        let rows: Vec<_> = out.iter().map(|u| u.row.0).collect();
        assert_eq!(rows, vec![2, 9]);
        assert_eq!(out[1].delta, vec![2.0]);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let err = coalesce(&[up(1, &[1.0, 2.0]), up(1, &[1.0])]).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { .. }));
    }

    #[test]
    fn mixed_tags_rejected() {
        let mut b = up(1, &[1.0]);
        b.clock = 4;
        assert!(matches!(coalesce(&[up(1, &[1.0]), b]), Err(Error::MixedBatch(..))));
    }

    fn batch_strategy() -> impl Strategy<Value = Vec<Update>> {
        prop::collection::vec((0u64..6, prop::collection::vec(-1e3f64..1e3, 3)).prop_map(|(r, d)| up(r, &d)), 0..40)
    }

    proptest! {
        #[test]
        fn permutation_invariant(batch in batch_strategy(), seed in any::<u64>()) {
            let mut shuffled = batch.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(coalesce(&batch).unwrap(), coalesce(&shuffled).unwrap());
        }

        #[test]
        fn matches_one_by_one_application(batch in batch_strategy(), seed in any::<u64>()) {
            let mut one_by_one: BTreeMap<RowKey, Vec<f64>> = BTreeMap::new();
            let mut shuffled = batch.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            for u in &shuffled {
                let row = one_by_one.entry(u.row).or_insert_with(|| vec![0.0; 3]);
                for (a, b) in row.iter_mut().zip(&u.delta) { *a += b; }
            }
            let mut coalesced: BTreeMap<RowKey, Vec<f64>> = BTreeMap::new();
            for u in coalesce(&batch).unwrap() {
                coalesced.insert(u.row, u.delta);
            }
            prop_assert_eq!(one_by_one.len(), coalesced.len());
            for (k, v) in &one_by_one {
                for (a, b) in v.iter().zip(&coalesced[k]) {
                    prop_assert!((a - b).abs() <= 1e-9);
                }
            }
        }
    }
}
