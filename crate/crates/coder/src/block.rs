//! Contiguous block partitions of the coordinate set.

use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PartitionError {
    #[error("dimension must be positive")]
    EmptyDimension,
    #[error("block size must be positive")]
    EmptyBlockSize,
    #[error("invalid boundaries: {0}")]
    InvalidBoundaries(String),
    #[error("block index {index} out of range (m = {blocks})")]
    BlockOutOfRange { index: usize, blocks: usize },
}

/// An ordered split of the coordinates `0..d` into `m` contiguous blocks.
///
/// `boundaries` holds `m + 1` nondecreasing offsets with `boundaries[0] == 0`
/// and `boundaries[m] == d`; block `j` (0-based) spans
/// `boundaries[j]..boundaries[j + 1]`. Every coordinate belongs to exactly one
/// block and every block is nonempty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    boundaries: Vec<usize>,
}

impl BlockPartition {
    /// Builds a partition from explicit boundaries.
    pub fn from_boundaries(boundaries: Vec<usize>) -> Result<Self, PartitionError> {
        if boundaries.len() < 2 {
            return Err(PartitionError::InvalidBoundaries(
                "need at least two offsets".into(),
            ));
        }
        if boundaries[0] != 0 {
            return Err(PartitionError::InvalidBoundaries(
                "first offset must be 0".into(),
            ));
        }
        for w in boundaries.windows(2) {
            if w[1] <= w[0] {
                return Err(PartitionError::InvalidBoundaries(format!(
                    "offsets must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { boundaries })
    }

    /// `ceil(d / block_size)` contiguous blocks; all of size `block_size`
    /// except possibly a shorter trailing block.
    pub fn uniform(d: usize, block_size: usize) -> Result<Self, PartitionError> {
        if d == 0 {
            return Err(PartitionError::EmptyDimension);
        }
        if block_size == 0 || block_size > d {
            return Err(PartitionError::EmptyBlockSize);
        }
        let mut boundaries = Vec::with_capacity(d / block_size + 2);
        let mut at = 0;
        while at < d {
            boundaries.push(at);
            at += block_size;
        }
        boundaries.push(d);
        Ok(Self { boundaries })
    }

    /// One block covering all coordinates (full-gradient mode).
    pub fn single(d: usize) -> Result<Self, PartitionError> {
        Self::uniform(d, d)
    }

    /// One block per coordinate.
    pub fn coordinates(d: usize) -> Result<Self, PartitionError> {
        Self::uniform(d, 1)
    }

    pub fn dim(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    pub fn num_blocks(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Coordinate range of block `j`.
    pub fn range(&self, j: usize) -> Range<usize> {
        assert!(
            j < self.num_blocks(),
            "block index {j} out of range (m = {})",
            self.num_blocks()
        );
        self.boundaries[j]..self.boundaries[j + 1]
    }

    pub fn checked_range(&self, j: usize) -> Result<Range<usize>, PartitionError> {
        if j < self.num_blocks() {
            Ok(self.boundaries[j]..self.boundaries[j + 1])
        } else {
            Err(PartitionError::BlockOutOfRange {
                index: j,
                blocks: self.num_blocks(),
            })
        }
    }

    pub fn block_size(&self, j: usize) -> usize {
        let r = self.range(j);
        r.end - r.start
    }

    /// Immutable view of block `j` of a vector.
    pub fn slice<'a>(&self, x: &'a [f64], j: usize) -> &'a [f64] {
        debug_assert_eq!(x.len(), self.dim());
        &x[self.range(j)]
    }

    /// Mutable view of block `j`; writes through the view mutate `x`.
    pub fn slice_mut<'a>(&self, x: &'a mut [f64], j: usize) -> &'a mut [f64] {
        debug_assert_eq!(x.len(), self.dim());
        &mut x[self.range(j)]
    }

    /// Block that contains coordinate `i`.
    pub fn block_of(&self, i: usize) -> usize {
        debug_assert!(i < self.dim());
        // boundaries are sorted; partition_point returns the first offset > i
        self.boundaries.partition_point(|&b| b <= i) - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_even_split() {
        let p = BlockPartition::uniform(6, 2).unwrap();
        assert_eq!(p.boundaries(), &[0, 2, 4, 6]);
        assert_eq!(p.num_blocks(), 3);
    }

    #[test]
    fn uniform_remainder_block() {
        let p = BlockPartition::uniform(5, 2).unwrap();
        assert_eq!(p.boundaries(), &[0, 2, 4, 5]);
        assert_eq!(p.num_blocks(), 3);
        assert_eq!(p.block_size(2), 1);
    }

    #[test]
    fn uniform_single_block() {
        let p = BlockPartition::uniform(4, 4).unwrap();
        assert_eq!(p.boundaries(), &[0, 4]);
        assert_eq!(p.num_blocks(), 1);
    }

    #[test]
    fn uniform_rejects_degenerate_inputs() {
        assert_eq!(
            BlockPartition::uniform(0, 1).unwrap_err(),
            PartitionError::EmptyDimension
        );
        assert_eq!(
            BlockPartition::uniform(4, 0).unwrap_err(),
            PartitionError::EmptyBlockSize
        );
    }

    #[test]
    fn slice_reads_and_writes_through() {
        let p = BlockPartition::uniform(4, 2).unwrap();
        let mut x = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(p.slice(&x, 1), &[3.0, 4.0]);
        p.slice_mut(&mut x, 1)[0] = 9.0;
        assert_eq!(x, vec![1.0, 2.0, 9.0, 4.0]);
    }

    #[test]
    fn single_block_slice_is_whole_vector() {
        let p = BlockPartition::single(3).unwrap();
        let x = vec![5.0, 6.0, 7.0];
        assert_eq!(p.slice(&x, 0), x.as_slice());
    }

    #[test]
    fn checked_range_rejects_out_of_range() {
        let p = BlockPartition::uniform(4, 2).unwrap();
        assert!(p.checked_range(2).is_err());
    }

    #[test]
    fn block_of_matches_ranges() {
        let p = BlockPartition::from_boundaries(vec![0, 1, 4, 6]).unwrap();
        let want = [0, 1, 1, 1, 2, 2];
        for (i, &b) in want.iter().enumerate() {
            assert_eq!(p.block_of(i), b);
        }
    }

    proptest! {
        // Concatenating all block slices reconstructs the vector exactly.
        #[test]
        fn partition_round_trip(d in 1usize..64, bs in 1usize..64, seed in 0u64..1000) {
            let bs = bs.min(d);
            let p = BlockPartition::uniform(d, bs).unwrap();
            let x: Vec<f64> = (0..d).map(|i| (i as f64) + (seed as f64) * 0.5).collect();
            let mut rebuilt = Vec::new();
            for j in 0..p.num_blocks() {
                rebuilt.extend_from_slice(p.slice(&x, j));
            }
            prop_assert_eq!(rebuilt, x);
        }

        #[test]
        fn blocks_are_disjoint_and_cover(d in 1usize..64, bs in 1usize..64) {
            let bs = bs.min(d);
            let p = BlockPartition::uniform(d, bs).unwrap();
            let mut seen = vec![0u32; d];
            for j in 0..p.num_blocks() {
                prop_assert!(p.block_size(j) > 0);
                for i in p.range(j) {
                    seen[i] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }
    }
}
