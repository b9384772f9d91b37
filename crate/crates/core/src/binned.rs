//! Binned approximations and their streaming evaluation.
//!
//! Given a base matrix `L` and a binning `B`, the approximation `L̂` takes, on
//! row `i` and interval `[a, b] ∈ Bⁱ`, the value `(L_{i,a} + L_{i,b})/2`. Only
//! two base entries per interval are read, which keeps each streamed output
//! at `O(|B|)` work.
//!
//! The streaming evaluator keeps one running sum of inputs per interval of
//! the current partition. Moving from `Bⁱ⁻¹` to `Bⁱ` only merges adjacent
//! sums (and folds the new input into the last one), so the buffer is updated
//! in place with a forward scan.

use crate::binning::{
    merge_scan, Binning, BinningParams, Interval, MergeTrigger, Partition, RowSource,
};
use crate::error::{Error, Result};
use crate::matrix::LowerTriangularMatrix;

/// `L̂_{i,[a,b]} = (L_{i,a} + L_{i,b})/2`.
pub fn approx_value(row: impl Fn(usize) -> f64, interval: &Interval) -> f64 {
    if interval.start == interval.end {
        row(interval.start)
    } else {
        0.5 * (row(interval.start) + row(interval.end))
    }
}

/// A base matrix seen through a binning.
#[derive(Debug, Clone)]
pub struct BinnedMatrixView<S> {
    base: S,
    binning: Binning,
}

impl<S: RowSource> BinnedMatrixView<S> {
    pub fn new(base: S, binning: Binning) -> Result<Self> {
        if base.dim() != binning.n() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                actual: binning.n(),
            });
        }
        Ok(Self { base, binning })
    }

    pub fn n(&self) -> usize {
        self.binning.n()
    }

    pub fn base(&self) -> &S {
        &self.base
    }

    pub fn binning(&self) -> &Binning {
        &self.binning
    }

    /// `L̂_{i,j}` (1-based); zero above the diagonal.
    pub fn approx_entry(&self, i: usize, j: usize) -> f64 {
        if j > i {
            return 0.0;
        }
        let (_, interval) = self
            .binning
            .partition(i)
            .find(j)
            .expect("binning row covers every column up to the diagonal");
        approx_value(|col| self.base.entry(i, col), &interval)
    }

    pub fn materialize(&self) -> LowerTriangularMatrix {
        let n = self.n();
        let mut out = LowerTriangularMatrix::zeros(n);
        for i in 1..=n {
            for interval in self.binning.partition(i) {
                let v = approx_value(|col| self.base.entry(i, col), interval);
                for j in interval.start..=interval.end {
                    out.set(i - 1, j - 1, v);
                }
            }
        }
        out
    }

    /// `|B|`, the number of buffer cells the streaming evaluator needs.
    pub fn space_complexity(&self) -> usize {
        self.binning.size()
    }
}

/// Live memory of the streaming evaluator: one input sum per interval of the
/// current partition.
#[derive(Debug, Clone, Default)]
pub struct StreamState {
    buffer: Vec<f64>,
    partition: Partition,
    step: usize,
    peak_len: usize,
}

impl StreamState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rows processed so far.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn buffer(&self) -> &[f64] {
        &self.buffer
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// Largest buffer length held at any point.
    pub fn peak_len(&self) -> usize {
        self.peak_len
    }

    /// Folds `z_i` in under the new partition `Bⁱ` and returns `(L̂z)_i`.
    ///
    /// `new_partition` must be obtained by merging adjacent intervals of the
    /// current partition together with `[i, i]`. `row(j)` gives `L_{i,j}`.
    pub fn advance(
        &mut self,
        new_partition: Partition,
        z_i: f64,
        row: impl Fn(usize) -> f64,
    ) -> Result<f64> {
        let i = self.step + 1;
        let old = self.partition.intervals();
        let new = new_partition.intervals();
        if new_partition.covered() != i {
            return Err(Error::contract(format!(
                "partition for row {i} covers [1, {}]",
                new_partition.covered()
            )));
        }
        // Writes never overtake reads (each finished new interval consumed at
        // least one old one), so the merge runs in place. The last interval
        // may consume nothing, hence at most one extra slot.
        let needed = old.len().max(new.len());
        if self.buffer.len() < needed {
            self.buffer.resize(needed, 0.0);
        }
        self.peak_len = self.peak_len.max(self.buffer.len());
        let mut read = 0;
        for (write, target) in new.iter().enumerate() {
            let mut sum = 0.0;
            let mut next_col = target.start;
            while read < old.len() && old[read].end <= target.end {
                if old[read].start != next_col {
                    return Err(self.mismatch(i, target));
                }
                sum += self.buffer[read];
                next_col = old[read].end + 1;
                read += 1;
            }
            if target.end == i {
                sum += z_i;
                next_col = i + 1;
            }
            if next_col != target.end + 1 {
                return Err(self.mismatch(i, target));
            }
            self.buffer[write] = sum;
        }
        if read != old.len() {
            return Err(Error::contract(format!(
                "row {i}: partition does not cover the previous one"
            )));
        }
        self.buffer.truncate(new.len());
        let output = new
            .iter()
            .zip(&self.buffer)
            .map(|(iv, s)| approx_value(&row, iv) * s)
            .sum();
        self.partition = new_partition;
        self.step = i;
        Ok(output)
    }

    fn mismatch(&self, i: usize, target: &Interval) -> Error {
        Error::contract(format!(
            "row {i}: interval {target} is not a union of previous intervals"
        ))
    }
}

/// Computes `L̂z` one entry at a time, generating the binning on the fly.
///
/// Besides the base row accessor, the only state is the current partition
/// and its buffer of interval sums.
pub struct StreamingEvaluator<S> {
    source: S,
    params: BinningParams,
    state: StreamState,
}

impl<S: RowSource> StreamingEvaluator<S> {
    pub fn new(source: S, params: BinningParams) -> Self {
        Self {
            source,
            params,
            state: StreamState::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.source.dim()
    }

    pub fn state(&self) -> &StreamState {
        &self.state
    }

    /// Consumes `z_i` and returns `(L̂z)_i`.
    pub fn push(&mut self, z_i: f64) -> Result<f64> {
        let i = self.state.step() + 1;
        if i > self.source.dim() {
            return Err(Error::StreamTooLong {
                n: self.source.dim(),
            });
        }
        let source = &self.source;
        let row = |j: usize| source.entry(i, j);
        let next = merge_scan(
            self.state.partition(),
            i,
            row,
            &self.params,
            MergeTrigger::Strict,
        );
        self.state.advance(next, z_i, row)
    }

    /// Streams a whole vector.
    pub fn run(mut self, z: &[f64]) -> Result<(Vec<f64>, StreamState)> {
        let out = z
            .iter()
            .map(|&v| self.push(v))
            .collect::<Result<Vec<_>>>()?;
        Ok((out, self.state))
    }
}
