//! Deterministic splitting of a row count or sample count into balanced
//! shards.
//!
//! The rule is fixed so every node computes the same plan: each shard
//! gets `total / shards` items and the first `total % shards` shards get
//! one extra. Shares therefore differ by at most one and are
//! non-increasing, and a shard's item range follows from its index
//! alone.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PartitionError {
    #[error("cannot partition into zero shards")]
    ZeroShards,
    #[error("shard index {index} out of range for {shards} shards")]
    ShardIndexOutOfRange { index: usize, shards: usize },
}

/// Balanced assignment of `total` items to an ordered list of shards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    shares: Vec<u64>,
    total: u64,
}

impl PartitionPlan {
    /// Per-shard item counts, in shard order.
    pub fn shares(&self) -> &[u64] {
        &self.shares
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn shard_count(&self) -> usize {
        self.shares.len()
    }
}

/// Splits `total` items into `shards` balanced shares.
///
/// Zero-size shares are legal when `shards > total`; they sit at the
/// tail of the plan.
pub fn partition(total: u64, shards: usize) -> Result<PartitionPlan, PartitionError> {
    if shards == 0 {
        return Err(PartitionError::ZeroShards);
    }
    let n = shards as u64;
    let base = total / n;
    let extra = (total % n) as usize;
    let shares = (0..shards)
        .map(|i| if i < extra { base + 1 } else { base })
        .collect();
    Ok(PartitionPlan { shares, total })
}

/// Returns `(start, count)` of the contiguous item range owned by shard
/// `shard_index`. Ranges of consecutive shards tile `[0, total)` exactly.
pub fn shard_row_range(
    plan: &PartitionPlan,
    shard_index: usize,
) -> Result<(u64, u64), PartitionError> {
    if shard_index >= plan.shares.len() {
        return Err(PartitionError::ShardIndexOutOfRange {
            index: shard_index,
            shards: plan.shares.len(),
        });
    }
    let start: u64 = plan.shares[..shard_index].iter().sum();
    Ok((start, plan.shares[shard_index]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn even_split() {
        assert_eq!(
            partition(3000, 4).unwrap().shares(),
            &[750, 750, 750, 750]
        );
    }

    #[test]
    fn remainder_goes_to_leading_shards() {
        assert_eq!(partition(10, 3).unwrap().shares(), &[4, 3, 3]);
    }

    #[test]
    fn more_shards_than_items_yields_empty_tail() {
        assert_eq!(partition(3, 7).unwrap().shares(), &[1, 1, 1, 0, 0, 0, 0]);
    }

    #[test]
    fn seven_way_split_of_3000() {
        assert_eq!(
            partition(3000, 7).unwrap().shares(),
            &[429, 429, 429, 429, 428, 428, 428]
        );
    }

    #[test]
    fn zero_shards_is_an_error() {
        assert_eq!(partition(10, 0), Err(PartitionError::ZeroShards));
    }

    #[test]
    fn ranges_match_examples() {
        let plan = partition(10, 3).unwrap();
        assert_eq!(shard_row_range(&plan, 0).unwrap(), (0, 4));
        assert_eq!(shard_row_range(&plan, 1).unwrap(), (4, 3));
        assert_eq!(shard_row_range(&plan, 2).unwrap(), (7, 3));

        let plan = partition(3000, 4).unwrap();
        assert_eq!(shard_row_range(&plan, 3).unwrap(), (2250, 750));
    }

    #[test]
    fn out_of_range_index_is_an_error() {
        let plan = partition(10, 3).unwrap();
        assert_eq!(
            shard_row_range(&plan, 3),
            Err(PartitionError::ShardIndexOutOfRange {
                index: 3,
                shards: 3
            })
        );
    }

    proptest! {
        #[test]
        fn shares_sum_balance_and_order(total in 0u64..100_000, shards in 1usize..64) {
            let plan = partition(total, shards).unwrap();
            prop_assert_eq!(plan.shares().len(), shards);
            prop_assert_eq!(plan.shares().iter().sum::<u64>(), total);

            let max = *plan.shares().iter().max().unwrap();
            let min_nonzero = plan.shares().iter().copied().filter(|&s| s > 0).min();
            if let Some(min_nonzero) = min_nonzero {
                prop_assert!(max - min_nonzero <= 1);
            }
            for pair in plan.shares().windows(2) {
                prop_assert!(pair[0] >= pair[1]);
            }
        }

        #[test]
        fn ranges_tile_the_whole_input(total in 0u64..100_000, shards in 1usize..64) {
            let plan = partition(total, shards).unwrap();
            let mut next = 0u64;
            for i in 0..plan.shard_count() {
                let (start, count) = shard_row_range(&plan, i).unwrap();
                prop_assert_eq!(start, next);
                next = start + count;
            }
            prop_assert_eq!(next, total);
        }
    }
}
