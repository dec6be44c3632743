//! Two-sided dominance between index sets and milestone-driven bucket
//! construction.
//!
//! Variables are sorted by probability, so position encodes probability.
//! `V` dominates `V*` when every prefix `[h]` and every suffix `[-h]` of the
//! positions holds at least as many members of `V` as of `V*`. Equivalently
//! there are injections `V* -> V` that never increase and never decrease the
//! position, which is what makes `V` at least as good as `V*` at certifying
//! both function values.

use serde::Serialize;

use crate::error::{Error, Result};

/// Granularity `eps = 1 / inverse` with integer `inverse >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Epsilon {
    inverse: u32,
}

impl Epsilon {
    pub fn from_inverse(inverse: u32) -> Result<Self> {
        if inverse == 0 {
            return Err(Error::InvalidArgument("1/eps must be a positive integer".into()));
        }
        Ok(Self { inverse })
    }

    /// Accepts `eps` whose reciprocal is an integer (within 1e-9).
    pub fn from_value(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidArgument(format!("eps = {eps} is not in (0, 1]")));
        }
        let inv = 1.0 / eps;
        let rounded = inv.round();
        if (inv - rounded).abs() > 1e-9 * inv.max(1.0) || rounded > u32::MAX as f64 {
            return Err(Error::InvalidArgument(format!(
                "eps = {eps} does not have an integer reciprocal"
            )));
        }
        Self::from_inverse(rounded as u32)
    }

    pub fn inverse(self) -> u32 {
        self.inverse
    }

    pub fn value(self) -> f64 {
        1.0 / self.inverse as f64
    }
}

impl std::fmt::Display for Epsilon {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "1/{}", self.inverse)
    }
}

/// Sorted set of distinct positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize)]
pub struct IndexSet {
    members: Vec<usize>,
}

impl IndexSet {
    /// Sorts and removes duplicates.
    pub fn new(members: impl IntoIterator<Item = usize>) -> Self {
        let mut members: Vec<usize> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        Self { members }
    }

    pub fn from_one_based(members: &[usize]) -> Result<Self> {
        if members.contains(&0) {
            return Err(Error::InvalidArgument("indices are 1-based; got 0".into()));
        }
        Ok(Self::new(members.iter().map(|&i| i - 1)))
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.members.iter().map(|&i| i + 1).collect()
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        IndexSet::new(self.members.iter().chain(&other.members).copied())
    }
}

impl FromIterator<usize> for IndexSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        IndexSet::new(iter)
    }
}

/// `|V ∩ [h]| >= |V* ∩ [h]|` for every prefix.
pub fn left_dominates(v: &IndexSet, vstar: &IndexSet) -> bool {
    // The slack only drops at members of V*, so checking there suffices.
    let mut below = 0;
    let vm = v.members();
    for (rank, &s) in vstar.members().iter().enumerate() {
        while below < vm.len() && vm[below] <= s {
            below += 1;
        }
        if below < rank + 1 {
            return false;
        }
    }
    true
}

/// `|V ∩ [-h]| >= |V* ∩ [-h]|` for every suffix.
pub fn right_dominates(v: &IndexSet, vstar: &IndexSet) -> bool {
    let mut above = 0;
    let vm = v.members();
    for (rank, &s) in vstar.members().iter().rev().enumerate() {
        while above < vm.len() && vm[vm.len() - 1 - above] >= s {
            above += 1;
        }
        if above < rank + 1 {
            return false;
        }
    }
    true
}

/// Two-sided dominance `V ⪰ V*`.
pub fn dominates(v: &IndexSet, vstar: &IndexSet) -> bool {
    left_dominates(v, vstar) && right_dominates(v, vstar)
}

/// The `j`-th milestone of a set `V*` is its `floor(j * eps * |V*|)`-th
/// smallest member, for `j = 1 .. 1/eps - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct MilestoneVector {
    pub eps: Epsilon,
    pub size: usize,
    pub positions: Vec<usize>,
}

impl MilestoneVector {
    /// 1-based ranks of the milestones inside a set of `size` elements.
    pub fn ranks(eps: Epsilon, size: usize) -> Vec<usize> {
        let inv = eps.inverse() as usize;
        (1..inv).map(|j| j * size / inv).collect()
    }
}

pub fn milestones(vstar: &IndexSet, eps: Epsilon) -> Result<MilestoneVector> {
    let size = vstar.len();
    if size < eps.inverse() as usize {
        return Err(Error::Precondition(format!(
            "set of size {size} is smaller than 1/eps = {}",
            eps.inverse()
        )));
    }
    let positions = MilestoneVector::ranks(eps, size)
        .into_iter()
        .map(|r| vstar.members()[r - 1])
        .collect();
    Ok(MilestoneVector {
        eps,
        size,
        positions,
    })
}

/// Disjoint buckets `(V_1, ..., V_b)`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct BucketTuple {
    pub buckets: Vec<IndexSet>,
}

impl BucketTuple {
    pub fn is_disjoint(&self) -> bool {
        let mut all: Vec<usize> = self.buckets.iter().flat_map(|b| b.members().iter().copied()).collect();
        let total = all.len();
        all.sort_unstable();
        all.dedup();
        all.len() == total
    }

    /// `V_1 ∪ ... ∪ V_i` for `i = 1..=b`.
    pub fn prefix_unions(&self) -> Vec<IndexSet> {
        let mut acc = IndexSet::default();
        self.buckets
            .iter()
            .map(|b| {
                acc = acc.union(b);
                acc.clone()
            })
            .collect()
    }
}

/// Builds buckets from bucket sizes and (guessed) milestones.
///
/// For each bucket a counter starts at `eps * |V*_i|`. A forward sweep over
/// positions adds the counter increment `eps * |V*_i|` at each milestone and
/// takes every free position while the counter is at least 1, paying 1 per
/// position. The counter then gains `ceil(eps * |V*_i|)` and a backward
/// sweep does the same from the top. The counter is kept in units of
/// `1 / (1/eps)` so all comparisons are exact.
///
/// With the true milestones of disjoint `V*_i`, every prefix union of the
/// output dominates the corresponding union of the `V*_i`, and
/// `|V_i| <= (1 + 2 eps) |V*_i|`.
pub fn build_buckets(
    n: usize,
    sizes: &[usize],
    milestone_vectors: &[MilestoneVector],
    eps: Epsilon,
) -> Result<BucketTuple> {
    if sizes.len() != milestone_vectors.len() {
        return Err(Error::InvalidArgument(format!(
            "{} bucket sizes but {} milestone vectors",
            sizes.len(),
            milestone_vectors.len()
        )));
    }
    let inv = eps.inverse() as usize;
    for (i, (&s, mv)) in sizes.iter().zip(milestone_vectors).enumerate() {
        if s < inv {
            return Err(Error::Precondition(format!(
                "bucket {} has size {s} < 1/eps = {inv}",
                i + 1
            )));
        }
        if mv.eps != eps || mv.size != s {
            return Err(Error::InvalidArgument(format!(
                "milestone vector {} does not match size {s} and eps {eps}",
                i + 1
            )));
        }
    }
    assemble_buckets(n, milestone_vectors)
}

/// Shared assembly; each vector carries its own size and granularity.
pub(crate) fn assemble_buckets(n: usize, milestone_vectors: &[MilestoneVector]) -> Result<BucketTuple> {
    let mut used = vec![false; n];
    let mut buckets = Vec::with_capacity(milestone_vectors.len());
    for (i, mv) in milestone_vectors.iter().enumerate() {
        let inv = mv.eps.inverse() as u64;
        if mv.positions.len() + 1 != inv as usize {
            return Err(Error::InvalidArgument(format!(
                "milestone vector {} has {} entries, expected 1/eps - 1 = {}",
                i + 1,
                mv.positions.len(),
                inv - 1
            )));
        }
        if let Some(&bad) = mv.positions.iter().find(|&&m| m >= n) {
            return Err(Error::InvalidArgument(format!(
                "milestone {} is outside [1, {n}]",
                bad + 1
            )));
        }
        let mut marks = mv.positions.clone();
        marks.sort_unstable();
        marks.dedup();
        let size = mv.size as u64;
        // Counter value times 1/eps.
        let mut counter = size;
        let mut bucket = Vec::new();
        let mut next_mark = 0;
        for f in 0..n {
            if next_mark < marks.len() && marks[next_mark] == f {
                counter += size;
                next_mark += 1;
            }
            if counter >= inv && !used[f] {
                used[f] = true;
                bucket.push(f);
                counter -= inv;
            }
        }
        counter += size.div_ceil(inv) * inv;
        for f in (0..n).rev() {
            if counter >= inv && !used[f] {
                used[f] = true;
                bucket.push(f);
                counter -= inv;
            }
        }
        buckets.push(IndexSet::new(bucket));
    }
    Ok(BucketTuple { buckets })
}
