//! Partitions, binnings and the greedy binning scan.
//!
//! A binning of `[n]` is a sequence of partitions `B¹ … Bⁿ`, where `Bⁱ`
//! partitions the columns `[1, i]` and every interval of `Bⁱ` sits inside some
//! interval of `Bⁱ⁺¹`. Its size `max_i |Bⁱ|` is the number of buffer cells a
//! streaming evaluator needs.
//!
//! All intervals and row accessors here are 1-based and inclusive.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::LowerTriangularMatrix;

/// Random access to the lower triangle of an `n×n` matrix, 1-based.
pub trait RowSource {
    fn dim(&self) -> usize;

    /// `L_{i,j}` for `1 ≤ j ≤ i ≤ dim()`.
    fn entry(&self, i: usize, j: usize) -> f64;
}

impl RowSource for LowerTriangularMatrix {
    fn dim(&self) -> usize {
        self.n()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self[(i - 1, j - 1)]
    }
}

impl<S: RowSource + ?Sized> RowSource for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        (**self).entry(i, j)
    }
}

/// Closed integer interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start == 0 || start > end {
            return Err(Error::param(format!("invalid interval [{start}, {end}]")));
        }
        Ok(Self { start, end })
    }

    pub fn singleton(i: usize) -> Self {
        Self { start: i, end: i }
    }

    /// Number of columns covered.
    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn contains(&self, j: usize) -> bool {
        self.start <= j && j <= self.end
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

/// Sorted, disjoint intervals whose union is `[1, i]` (empty for `i = 0`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    intervals: Vec<Interval>,
}

impl Partition {
    /// Validates that `intervals` tile `[1, i]` for some `i`.
    pub fn new(intervals: Vec<Interval>) -> Result<Self> {
        let mut next = 1;
        for iv in &intervals {
            if iv.start != next || iv.end < iv.start {
                return Err(Error::contract(format!(
                    "intervals must tile [1, i] in order; found [{}, {}] where {next} was expected",
                    iv.start, iv.end
                )));
            }
            next = iv.end + 1;
        }
        Ok(Self { intervals })
    }

    pub(crate) fn from_sorted_unchecked(intervals: Vec<Interval>) -> Self {
        Self { intervals }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// All singletons `{[1,1], …, [i,i]}`.
    pub fn trivial(i: usize) -> Self {
        Self {
            intervals: (1..=i).map(Interval::singleton).collect(),
        }
    }

    /// The row index `i` this partition covers, i.e. its right end.
    pub fn covered(&self) -> usize {
        self.intervals.last().map_or(0, |iv| iv.end)
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Interval> {
        self.intervals.iter()
    }

    /// Position and interval containing column `j`.
    pub fn find(&self, j: usize) -> Option<(usize, Interval)> {
        let k = self.intervals.partition_point(|iv| iv.end < j);
        self.intervals
            .get(k)
            .filter(|iv| iv.contains(j))
            .map(|iv| (k, *iv))
    }

    /// True when every interval of `self` lies inside an interval of `next`.
    pub fn is_coarsened_by(&self, next: &Partition) -> bool {
        // Both sides are sorted, so a single forward scan suffices.
        let mut k = 0;
        for iv in &self.intervals {
            while k < next.intervals.len() && next.intervals[k].end < iv.start {
                k += 1;
            }
            match next.intervals.get(k) {
                Some(outer) if outer.contains_interval(iv) => {}
                _ => return false,
            }
        }
        true
    }
}

impl<'a> IntoIterator for &'a Partition {
    type Item = &'a Interval;
    type IntoIter = std::slice::Iter<'a, Interval>;

    fn into_iter(self) -> Self::IntoIter {
        self.intervals.iter()
    }
}

/// Text form `a1-b1,a2-b2,…`.
impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, iv) in self.intervals.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{iv}")?;
        }
        Ok(())
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self::empty());
        }
        let intervals = s
            .split(',')
            .map(|part| {
                let (a, b) = part
                    .trim()
                    .split_once('-')
                    .ok_or_else(|| Error::param(format!("malformed interval {part:?}")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::param(format!("malformed interval {part:?}")))
                };
                Interval::new(parse(a)?, parse(b)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(intervals)
    }
}

/// The partitions `B¹ … Bⁿ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binning {
    partitions: Vec<Partition>,
}

impl Binning {
    /// Does not check the binning invariants; see [`verify_binning`].
    pub fn from_partitions(partitions: Vec<Partition>) -> Self {
        Self { partitions }
    }

    pub fn trivial(n: usize) -> Self {
        Self {
            partitions: (1..=n).map(Partition::trivial).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.partitions.len()
    }

    /// `|B| = max_i |Bⁱ|`.
    pub fn size(&self) -> usize {
        self.partitions
            .iter()
            .map(Partition::len)
            .max()
            .unwrap_or(0)
    }

    /// `Bⁱ`, 1-based.
    pub fn partition(&self, i: usize) -> &Partition {
        &self.partitions[i - 1]
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }
}

/// Merge threshold `c` and small-entry threshold `τ`, both in `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningParams {
    c: f64,
    tau: f64,
}

impl BinningParams {
    pub fn new(c: f64, tau: f64) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::param(format!("c must lie in (0, 1), got {c}")));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::param(format!("tau must lie in (0, 1), got {tau}")));
        }
        Ok(Self { c, tau })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// Comparison used when deciding whether to start a merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) enum MergeTrigger {
    /// `ratio > c`.
    #[default]
    Strict,
    /// `ratio ≥ c`. Only used to check that the verification suites notice.
    Inclusive,
}

/// Computes `Bⁱ` from `Bⁱ⁻¹` with one pass of the greedy merge scan.
///
/// `row(j)` must return `L_{i,j}` for `j ∈ [1, i]`. `prev` must partition
/// `[1, i−1]` (empty when `i = 1`).
pub fn next_partition(
    prev: &Partition,
    i: usize,
    row: impl Fn(usize) -> f64,
    params: &BinningParams,
) -> Result<Partition> {
    if i == 0 || prev.covered() != i - 1 {
        return Err(Error::contract(format!(
            "previous partition covers [1, {}] but row {i} needs [1, {}]",
            prev.covered(),
            i.saturating_sub(1)
        )));
    }
    Ok(merge_scan(prev, i, row, params, MergeTrigger::Strict))
}

/// The scan proper; `prev` is trusted to partition `[1, i−1]`.
///
/// Intervals of `prev` are visited right to left. An interval `[a, b]` starts
/// a merge when its left end is within a factor `c` of the entry just right
/// of it (`L_{i,a}/L_{i,b+1} > c`); it then absorbs intervals to its left as
/// long as their left ends stay within `c²`. Once the right end of a candidate
/// is at most `τ`, everything remaining collapses into `[1, b]`.
pub(crate) fn merge_scan(
    prev: &Partition,
    i: usize,
    row: impl Fn(usize) -> f64,
    params: &BinningParams,
    trigger: MergeTrigger,
) -> Partition {
    let c = params.c;
    let c_sq = c * c;
    let iv = prev.intervals();
    let mut out = Vec::with_capacity(iv.len() + 1);
    // k and k' count intervals 1-based, so B^{i-1}_k is iv[k - 1].
    let mut k = iv.len();
    while k > 0 {
        let Interval { start, end: b } = iv[k - 1];
        let mut a = start;
        let mut k_prime = k;
        let right = row(b + 1);
        let ratio = row(a) / right;
        let triggered = match trigger {
            MergeTrigger::Strict => ratio > c,
            MergeTrigger::Inclusive => ratio >= c,
        };
        if k > 1 && right > 0.0 && triggered {
            let mut a_prime = iv[k_prime - 2].start;
            while k_prime > 1 && row(a_prime) / right >= c_sq {
                a = a_prime;
                k_prime -= 1;
                // At k' = 1 there is no interval further left; a' keeps its
                // last value.
                if k_prime > 1 {
                    a_prime = iv[k_prime - 2].start;
                }
            }
            if k_prime == 1 && row(a_prime) / right >= c_sq {
                a = a_prime;
            }
        }
        if row(b) <= params.tau {
            out.push(Interval { start: 1, end: b });
            k = 0;
        } else {
            out.push(Interval { start: a, end: b });
            k = k_prime - 1;
        }
    }
    out.reverse();
    out.push(Interval::singleton(i));
    Partition::from_sorted_unchecked(out)
}

/// Online generator of `B¹, B², …` over a row source. Only the previous
/// partition is kept.
pub struct BinningStream<S> {
    source: S,
    params: BinningParams,
    prev: Partition,
    trigger: MergeTrigger,
}

impl<S: RowSource> BinningStream<S> {
    pub fn new(source: S, params: BinningParams) -> Self {
        Self {
            source,
            params,
            prev: Partition::empty(),
            trigger: MergeTrigger::Strict,
        }
    }

    pub(crate) fn with_trigger(mut self, trigger: MergeTrigger) -> Self {
        self.trigger = trigger;
        self
    }

    pub fn params(&self) -> &BinningParams {
        &self.params
    }

    pub fn source(&self) -> &S {
        &self.source
    }
}

impl<S: RowSource> Iterator for BinningStream<S> {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        let i = self.prev.covered() + 1;
        if i > self.source.dim() {
            return None;
        }
        let source = &self.source;
        let next = merge_scan(
            &self.prev,
            i,
            |j| source.entry(i, j),
            &self.params,
            self.trigger,
        );
        self.prev = next.clone();
        Some(next)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.source.dim() - self.prev.covered();
        (left, Some(left))
    }
}

/// Runs the scan over all rows and collects the binning.
pub fn build_binning<S: RowSource>(source: S, params: &BinningParams) -> Binning {
    Binning::from_partitions(BinningStream::new(source, *params).collect())
}

pub(crate) fn build_binning_with<S: RowSource>(
    source: S,
    params: &BinningParams,
    trigger: MergeTrigger,
) -> Binning {
    Binning::from_partitions(
        BinningStream::new(source, *params)
            .with_trigger(trigger)
            .collect(),
    )
}

/// True iff each `Bⁱ` tiles `[1, i]` and each partition is coarsened by the next.
pub fn verify_binning(binning: &Binning) -> bool {
    let parts = binning.partitions();
    for (idx, p) in parts.iter().enumerate() {
        if Partition::new(p.intervals().to_vec()).is_err() || p.covered() != idx + 1 {
            return false;
        }
    }
    parts.windows(2).all(|w| w[0].is_coarsened_by(&w[1]))
}

/// Checks the monotone-ratio conditions up to `tol`:
///
/// 1. `0 < L_{i,j} ≤ 1` on the lower triangle,
/// 2. every row is nondecreasing in the column index,
/// 3. for `j < j'`, `x ↦ L_{x,j}/L_{x,j'}` is nondecreasing on `[j', n]`.
///
/// Condition 3 is checked for consecutive column pairs, which implies it for
/// all pairs since the ratio over `j < j'` telescopes into a product of
/// consecutive ratios.
pub fn is_mrm(m: &LowerTriangularMatrix, tol: f64) -> bool {
    let n = m.n();
    for i in 0..n {
        let row = &m.row(i)[..=i];
        if row.iter().any(|&v| !(v > 0.0 && v <= 1.0 + tol)) {
            return false;
        }
        if row.windows(2).any(|w| w[1] < w[0] - tol) {
            return false;
        }
    }
    for j in 0..n.saturating_sub(1) {
        let mut last = f64::NEG_INFINITY;
        for x in (j + 1)..n {
            let ratio = m[(x, j)] / m[(x, j + 1)];
            if ratio < last - tol {
                return false;
            }
            last = ratio;
        }
    }
    true
}
