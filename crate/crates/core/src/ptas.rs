//! Approximation scheme for the optimal non-adaptive order under unit costs.
//!
//! The cost range is cut at thresholds `1 = a_0 < a_1 < ... < a_{h+1}`
//! spaced by factors of at most `2^{1/eps}`. For every consecutive pair a
//! bounded problem is solved: find a partial order of `a'` tests whose tail
//! `Pr[cost >= i]`, `a <= i <= a'`, is small. The per-level orders are then
//! composed. Below a size threshold the bounded problem is solved by trying
//! every ordered sequence; above it the order is split into buckets and
//! The bucket assembly rebuilds dominating buckets from guessed milestones.
//!
//! Guided mode replaces guessing with reading the buckets and milestones
//! off a reference order, which makes the bucket machinery usable on large
//! instances and gives a checkable certificate against that reference.

use itertools::Itertools;
use serde::Serialize;

use crate::dominance::{assemble_buckets, milestones, Epsilon, IndexSet, MilestoneVector};
use crate::error::{Error, Result};
use crate::eval::{bounded_score_from_tail, cost_tail, expected_cost, Offset, TailDistribution};
use crate::instance::{Instance, PartialPolicy};

/// Default cap on the number of candidate orders per bounded problem.
pub const DEFAULT_BUDGET: u64 = 100_000_000;

const TIE_EPS: f64 = 1e-12;

/// Granularity used internally for a target accuracy: `1 / ceil(56 / target)`.
pub fn internal_epsilon(eps_target: f64) -> Result<Epsilon> {
    if !(eps_target > 0.0 && eps_target <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target accuracy {eps_target} is not in (0, 1]"
        )));
    }
    let inv = (56.0 / eps_target - 1e-9).ceil();
    if inv > u32::MAX as f64 {
        return Err(Error::InvalidArgument(format!(
            "target accuracy {eps_target} is too small"
        )));
    }
    Epsilon::from_inverse(inv as u32)
}

/// Thresholds `a_0 = 1` followed by the powers `2^{j/eps + ell}`, `j >= 0`,
/// that exceed 1, up to the first one reaching `n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ShiftSchedule {
    pub ell: u32,
    pub thresholds: Vec<u64>,
    /// Number of levels minus one.
    pub h: usize,
}

impl ShiftSchedule {
    pub fn new(ell: u32, eps: Epsilon, n: usize) -> Result<Self> {
        if ell >= eps.inverse() {
            return Err(Error::InvalidArgument(format!(
                "shift {ell} is not below 1/eps = {}",
                eps.inverse()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidArgument("shift schedules need n >= 2".into()));
        }
        let mut thresholds = vec![1u64];
        for j in 0u64.. {
            let e = eps.inverse() as u64 * j + ell as u64;
            let a = if e >= 64 { u64::MAX } else { 1u64 << e };
            if a > *thresholds.last().unwrap() {
                thresholds.push(a);
            }
            if a >= n as u64 {
                break;
            }
        }
        let h = thresholds.len() - 2;
        Ok(Self { ell, thresholds, h })
    }

    /// Consecutive `(a_j, a_{j+1})` pairs.
    pub fn levels(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.thresholds.windows(2).map(|w| (w[0], w[1]))
    }

    /// Thresholds with anything beyond `n` collapsed to `n + 1`; schedules
    /// with equal keys produce the same policy.
    fn key(&self, n: usize) -> Vec<u64> {
        self.thresholds.iter().map(|&a| a.min(n as u64 + 1)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CaseTag {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2a")]
    TwoA,
    #[serde(rename = "2b")]
    TwoB,
}

impl std::fmt::Display for CaseTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CaseTag::One => "1",
            CaseTag::TwoA => "2a",
            CaseTag::TwoB => "2b",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct BucketSizePlan {
    pub sizes: Vec<usize>,
}

/// Smallest `a` handled by buckets: `4(1 + eps)/eps^2 + 1`, rounded up.
pub fn case_two_threshold(eps: Epsilon) -> u64 {
    let inv = eps.inverse() as u64;
    4 * inv * (inv + 1) + 1
}

pub fn bucket_size_plan(a: u64, a_prime: u64, eps: Epsilon) -> (BucketSizePlan, CaseTag) {
    bucket_size_plan_with_threshold(a, a_prime, eps, case_two_threshold(eps))
}

/// As [`bucket_size_plan`] with an explicit case boundary.
pub fn bucket_size_plan_with_threshold(
    a: u64,
    a_prime: u64,
    eps: Epsilon,
    threshold: u64,
) -> (BucketSizePlan, CaseTag) {
    if a < threshold {
        return (BucketSizePlan::default(), CaseTag::One);
    }
    case_two_plan(a, a_prime, eps)
}

/// First bucket `floor((a-1)/(1+2eps))`, then either one remainder bucket
/// (2a) or buckets of `1/eps` until at most `2/eps` remain (2b).
fn case_two_plan(a: u64, a_prime: u64, eps: Epsilon) -> (BucketSizePlan, CaseTag) {
    let inv = eps.inverse() as u128;
    let first = ((a.saturating_sub(1)) as u128 * inv / (inv + 2)) as u64;
    let mut rest = a_prime.saturating_sub(first);
    let inv = inv as u64;
    let mut sizes = vec![first as usize];
    if rest < 2 * inv {
        sizes.push(rest as usize);
        return (BucketSizePlan { sizes }, CaseTag::TwoA);
    }
    while rest > 2 * inv {
        sizes.push(inv as usize);
        rest -= inv;
    }
    sizes.push(rest as usize);
    (BucketSizePlan { sizes }, CaseTag::TwoB)
}

/// One bounded problem: cover the cost range `[a, a']`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundedSpec {
    pub a: u64,
    /// May exceed `n` for the top level; emitted orders have length
    /// `min(a', n)`.
    pub a_prime: u64,
    pub eps: Epsilon,
    /// Replaces the case-1/case-2 boundary, for exercising case 2 on small
    /// instances.
    pub case_threshold: Option<u64>,
    pub budget: u64,
}

impl BoundedSpec {
    pub fn new(a: u64, a_prime: u64, eps: Epsilon) -> Self {
        Self {
            a,
            a_prime,
            eps,
            case_threshold: None,
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn with_case_threshold(mut self, threshold: Option<u64>) -> Self {
        self.case_threshold = threshold;
        self
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    fn threshold(&self) -> u64 {
        self.case_threshold.unwrap_or_else(|| case_two_threshold(self.eps))
    }

    fn length(&self, n: usize) -> usize {
        self.a_prime.min(n as u64) as usize
    }

    /// With an overridden threshold, levels whose first bucket would be
    /// smaller than `1/eps` stay in case 1.
    pub fn plan(&self, n: usize) -> (BucketSizePlan, CaseTag) {
        let out = bucket_size_plan_with_threshold(self.a, self.length(n) as u64, self.eps, self.threshold());
        if self.case_threshold.is_some() && out.1 != CaseTag::One && out.0.sizes[0] < self.eps.inverse() as usize {
            return (BucketSizePlan::default(), CaseTag::One);
        }
        out
    }

    fn validate(&self, inst: &Instance) -> Result<()> {
        if !inst.is_unit_cost() {
            return Err(Error::NonUnitCost("bounded enumeration"));
        }
        if self.a < 1 || self.a >= self.a_prime || self.a >= inst.n() as u64 {
            return Err(Error::InvalidArgument(format!(
                "bounded problem needs 1 <= a < a' and a < n = {}, got a = {}, a' = {}",
                inst.n(),
                self.a,
                self.a_prime
            )));
        }
        Ok(())
    }
}

/// Number of candidates [`enumerate_bounded`] would produce.
pub fn enumeration_estimate(n: usize, spec: &BoundedSpec) -> f64 {
    let len = spec.length(n);
    let (plan, case) = spec.plan(n);
    match case {
        CaseTag::One => (0..len).map(|i| (n - i) as f64).product(),
        CaseTag::TwoB => plan
            .sizes
            .iter()
            .map(|&s| milestone_count(n, s, spec.eps))
            .product(),
        CaseTag::TwoA => milestone_count(n, plan.sizes[0], spec.eps) * binomial_f64(n, plan.sizes[1]),
    }
}

fn binomial_f64(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product()
}

/// Feasible milestone vectors of a bucket of size `s`: with `u_j` the
/// position minus the rank, they are the nondecreasing sequences of length
/// `1/eps - 1` over `[0, n - s]`.
fn milestone_count(n: usize, s: usize, eps: Epsilon) -> f64 {
    let len = eps.inverse() as usize - 1;
    binomial_f64(n - s + len, len)
}

/// All strictly increasing milestone candidates for one bucket, in
/// lexicographic order.
#[derive(Debug, Clone)]
struct MilestoneCandidates {
    eps: Epsilon,
    size: usize,
    /// 0-based rank of each milestone within the bucket.
    ranks: Vec<usize>,
    /// Largest allowed shift `position - rank`.
    slack: usize,
    shifts: Option<Vec<usize>>,
    done: bool,
}

impl MilestoneCandidates {
    fn new(n: usize, size: usize, eps: Epsilon) -> Self {
        let ranks = MilestoneVector::ranks(eps, size).into_iter().map(|r| r - 1).collect();
        Self {
            eps,
            size,
            ranks,
            slack: n - size,
            shifts: None,
            done: false,
        }
    }
}

impl Iterator for MilestoneCandidates {
    type Item = MilestoneVector;

    fn next(&mut self) -> Option<MilestoneVector> {
        if self.done {
            return None;
        }
        let len = self.ranks.len();
        match &mut self.shifts {
            None => self.shifts = Some(vec![0; len]),
            Some(u) => match (0..len).rev().find(|&j| u[j] < self.slack) {
                Some(j) => {
                    let v = u[j] + 1;
                    u[j..].iter_mut().for_each(|x| *x = v);
                }
                None => {
                    self.done = true;
                    return None;
                }
            },
        }
        let u = self.shifts.as_ref().unwrap();
        if len == 0 {
            self.done = true;
        }
        Some(MilestoneVector {
            eps: self.eps,
            size: self.size,
            positions: u.iter().zip(&self.ranks).map(|(s, r)| s + r).collect(),
        })
    }
}

/// Concatenates buckets (each ascending) and fixes the length to `len`,
/// cutting or appending the lowest untested indices.
fn buckets_to_policy(n: usize, buckets: &[IndexSet], len: usize) -> PartialPolicy {
    let mut order: Vec<usize> = buckets.iter().flat_map(|b| b.members().iter().copied()).collect();
    order.truncate(len);
    if order.len() < len {
        let mut used = vec![false; n];
        order.iter().for_each(|&i| used[i] = true);
        order.extend((0..n).filter(|&i| !used[i]).take(len - order.len()));
    }
    PartialPolicy::new(order).expect("buckets are disjoint")
}

/// Candidate partial orders of length `min(a', n)` for one bounded problem.
///
/// Fails with [`Error::BudgetExceeded`] before producing anything when the
/// candidate count exceeds `spec.budget`.
pub fn enumerate_bounded(
    inst: &Instance,
    spec: &BoundedSpec,
) -> Result<Box<dyn Iterator<Item = PartialPolicy> + Send>> {
    spec.validate(inst)?;
    let n = inst.n();
    let estimate = enumeration_estimate(n, spec);
    if estimate > spec.budget as f64 {
        return Err(Error::BudgetExceeded {
            estimate,
            budget: spec.budget,
        });
    }
    let len = spec.length(n);
    let (plan, case) = spec.plan(n);
    let inv = spec.eps.inverse() as usize;
    if case != CaseTag::One && plan.sizes[0] < inv {
        return Err(Error::Precondition(format!(
            "first bucket has size {} < 1/eps = {inv}",
            plan.sizes[0]
        )));
    }
    let eps = spec.eps;
    Ok(match case {
        CaseTag::One => Box::new(
            (0..n)
                .permutations(len)
                .map(|o| PartialPolicy::new(o).expect("permutations are distinct")),
        ),
        CaseTag::TwoB => Box::new(
            plan.sizes
                .iter()
                .map(|&s| MilestoneCandidates::new(n, s, eps))
                .multi_cartesian_product()
                .map(move |mvs| {
                    let tuple = assemble_buckets(n, &mvs).expect("candidates are well formed");
                    buckets_to_policy(n, &tuple.buckets, len)
                }),
        ),
        CaseTag::TwoA => {
            let second = plan.sizes[1];
            Box::new(MilestoneCandidates::new(n, plan.sizes[0], eps).flat_map(move |mv| {
                let first = assemble_buckets(n, &[mv]).expect("candidates are well formed").buckets;
                let free: Vec<usize> = (0..n).filter(|&i| !first[0].contains(i)).collect();
                let k = second.min(free.len());
                free.into_iter().combinations(k).map(move |rest| {
                    let buckets = [first[0].clone(), IndexSet::new(rest)];
                    buckets_to_policy(n, &buckets, len)
                })
            }))
        }
    })
}

/// Candidate minimizing the bounded score; ties go to the
/// lexicographically smallest order.
pub fn best_bounded(inst: &Instance, spec: &BoundedSpec) -> Result<(PartialPolicy, f64)> {
    let mut best: Option<(PartialPolicy, f64)> = None;
    for pi in enumerate_bounded(inst, spec)? {
        let tail = cost_tail(inst, &pi, Offset::NONE)?;
        let score = bounded_score_from_tail(inst, &tail, spec.a, spec.a_prime)?;
        let better = match &best {
            None => true,
            Some((b, s)) => score < s - TIE_EPS || (score <= s + TIE_EPS && pi < *b),
        };
        if better {
            best = Some((pi, score));
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("bounded problem has no candidates".into()))
}

/// Most predictable variables first: descending `max(p, 1 - p)`, ties by
/// index.
pub fn extreme_probability_order(inst: &Instance) -> PartialPolicy {
    let mut order: Vec<usize> = (0..inst.n()).collect();
    let key = |i: usize| {
        let p = inst.prob(i);
        p.max(1.0 - p)
    };
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    PartialPolicy::new(order).expect("identity permutation")
}

/// One row of a certificate: `Pr[cost(pi) >= l]` against
/// `Pr[(1 + 2eps)^3 cost(reference) >= l]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificationRow {
    pub ell: u64,
    pub policy_tail: f64,
    pub reference_tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationReport {
    pub a: u64,
    pub a_prime: u64,
    pub eps: Epsilon,
    pub case: CaseTag,
    /// Bucket sizes taken from the reference (empty when the reference
    /// prefix itself is used).
    pub sizes: Vec<usize>,
    pub rows: Vec<CertificationRow>,
    pub passed: bool,
}

/// `Pr[(1 + 2eps)^3 X >= l] = Pr[X >= ceil(l inv^3 / (inv + 2)^3)]`.
fn scaled_tail(tail: &TailDistribution, ell: u64, eps: Epsilon) -> f64 {
    let inv = eps.inverse() as u128;
    let num = ell as u128 * inv * inv * inv;
    let den = (inv + 2) * (inv + 2) * (inv + 2);
    let idx = num.div_ceil(den);
    tail.at(u64::try_from(idx).unwrap_or(u64::MAX))
}

fn build_report(
    inst: &Instance,
    policy_tail: &TailDistribution,
    reference_tail: &TailDistribution,
    spec: &BoundedSpec,
    case: CaseTag,
    sizes: Vec<usize>,
) -> CertificationReport {
    let top = spec.a_prime.min(inst.n() as u64);
    let rows: Vec<CertificationRow> = (spec.a..=top)
        .map(|ell| CertificationRow {
            ell,
            policy_tail: policy_tail.at(ell),
            reference_tail: scaled_tail(reference_tail, ell, spec.eps),
        })
        .collect();
    let passed = rows.iter().all(|r| r.policy_tail <= r.reference_tail + TIE_EPS);
    CertificationReport {
        a: spec.a,
        a_prime: spec.a_prime,
        eps: spec.eps,
        case,
        sizes,
        rows,
        passed,
    }
}

/// Rebuilds a bounded order from the buckets and milestones of `reference`
/// and reports the tail comparison at every `l` in `[a, min(a', n)]`.
///
/// Requires `2(1 + eps)^2 / eps <= a`. The bucket plan always follows case
/// 2 here, whatever the size threshold.
pub fn certify_bounded(
    inst: &Instance,
    reference: &PartialPolicy,
    spec: &BoundedSpec,
) -> Result<(PartialPolicy, CertificationReport)> {
    spec.validate(inst)?;
    reference.validate_for(inst)?;
    let n = inst.n();
    let inv = spec.eps.inverse() as u64;
    if 2 * (inv + 1) * (inv + 1) > spec.a.saturating_mul(inv) {
        return Err(Error::Precondition(format!(
            "certification needs a >= 2(1+eps)^2/eps; a = {} with eps = {}",
            spec.a, spec.eps
        )));
    }
    let len = spec.length(n);
    if reference.len() < len {
        return Err(Error::Precondition(format!(
            "reference has {} tests, fewer than a' = {len}",
            reference.len()
        )));
    }
    let (plan, case) = case_two_plan(spec.a, len as u64, spec.eps);
    let mut vectors = Vec::with_capacity(plan.sizes.len());
    let mut start = 0;
    for &s in &plan.sizes {
        let bucket = IndexSet::new(reference.as_slice()[start..start + s].iter().copied());
        start += s;
        // A short remainder bucket gets its own granularity.
        let eps = if s < inv as usize {
            Epsilon::from_inverse(s as u32)?
        } else {
            spec.eps
        };
        vectors.push(milestones(&bucket, eps)?);
    }
    let tuple = assemble_buckets(n, &vectors)?;
    let pi = buckets_to_policy(n, &tuple.buckets, len);
    let policy_tail = cost_tail(inst, &pi, Offset::NONE)?;
    let reference_tail = cost_tail(inst, &reference.pad_complete(n), Offset::NONE)?;
    let report = build_report(inst, &policy_tail, &reference_tail, spec, case, plan.sizes);
    Ok((pi, report))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PtasMode {
    Enumerate,
    /// Bucket data are read off this reference order.
    Guided(PartialPolicy),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PtasConfig {
    pub eps_target: f64,
    /// Overrides the granularity derived from `eps_target`.
    pub eps_int: Option<Epsilon>,
    pub budget: u64,
    pub case_threshold: Option<u64>,
}

impl PtasConfig {
    pub fn new(eps_target: f64) -> Self {
        Self {
            eps_target,
            eps_int: None,
            budget: DEFAULT_BUDGET,
            case_threshold: None,
        }
    }

    pub fn resolved_eps(&self) -> Result<Epsilon> {
        match self.eps_int {
            Some(e) => Ok(e),
            None => internal_epsilon(self.eps_target),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelOutcome {
    pub a: u64,
    pub a_prime: u64,
    pub case: CaseTag,
    pub policy: PartialPolicy,
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certification: Option<CertificationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftOutcome {
    pub ell: u32,
    pub thresholds: Vec<u64>,
    pub levels: Vec<LevelOutcome>,
    pub policy: PartialPolicy,
    pub expected_cost: f64,
    /// Sum of the level scores, an upper bound on `expected_cost`.
    pub score_sum: f64,
}

/// `sum_j a_j Pr[(1 + eps) cost(reference) >= a_j]` for one shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftContribution {
    pub ell: u32,
    pub contribution: f64,
}

/// Checks of the composition bound against a reference order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainCheck {
    pub reference_cost: f64,
    /// `(1 + 2eps)^3 - 1`.
    pub eps_cor: f64,
    /// `(1 + 4 eps_cor) * reference_cost`.
    pub bound: f64,
    pub all_certified: bool,
    pub within_bound: bool,
    /// Every shift's cost is at most its score sum.
    pub scores_dominate_costs: bool,
    pub contributions: Vec<ShiftContribution>,
    /// `2 eps (1 + eps) * reference_cost`.
    pub contribution_budget: f64,
    pub some_shift_within_budget: bool,
}

impl ChainCheck {
    pub fn holds(&self) -> bool {
        self.all_certified && self.within_bound && self.scores_dominate_costs && self.some_shift_within_budget
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PtasOutcome {
    pub policy: PartialPolicy,
    pub expected_cost: f64,
    pub eps_int: Epsilon,
    pub best_shift: u32,
    pub shifts: Vec<ShiftOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainCheck>,
}

/// Contribution of every shift for the reference tail.
pub fn shift_contributions(
    reference_tail: &TailDistribution,
    eps: Epsilon,
    n: usize,
) -> Vec<ShiftContribution> {
    let inv = eps.inverse() as u128;
    (0..eps.inverse())
        .map(|ell| {
            let mut contribution = 0.0;
            for j in 0u32.. {
                let e = eps.inverse() as u64 * j as u64 + ell as u64;
                if e >= 64 || (1u64 << e) > n as u64 {
                    break;
                }
                let a = 1u128 << e;
                let idx = (a * inv).div_ceil(inv + 1);
                contribution += a as f64 * reference_tail.at(idx as u64);
            }
            ShiftContribution { ell, contribution }
        })
        .collect()
}

/// Runs every shift, composes the per-level orders and returns the
/// cheapest complete order.
pub fn ptas(inst: &Instance, config: &PtasConfig, mode: &PtasMode) -> Result<PtasOutcome> {
    if !inst.is_unit_cost() {
        return Err(Error::NonUnitCost("approximation scheme"));
    }
    let eps = config.resolved_eps()?;
    let n = inst.n();
    let reference = match mode {
        PtasMode::Enumerate => None,
        PtasMode::Guided(r) => {
            r.validate_for(inst)?;
            Some(r.pad_complete(n))
        }
    };
    if n == 1 {
        let policy = PartialPolicy::identity(1);
        let cost = expected_cost(inst, &policy, Offset::NONE)?;
        return Ok(PtasOutcome {
            policy,
            expected_cost: cost,
            eps_int: eps,
            best_shift: 0,
            shifts: Vec::new(),
            chain: None,
        });
    }

    let mut seen = std::collections::HashSet::new();
    let mut shifts = Vec::new();
    for ell in 0..eps.inverse() {
        let schedule = ShiftSchedule::new(ell, eps, n)?;
        if !seen.insert(schedule.key(n)) {
            continue;
        }
        shifts.push(run_shift(inst, &schedule, eps, config, reference.as_ref())?);
    }

    let best = shifts
        .iter()
        .enumerate()
        .min_by(|(i, x), (j, y)| {
            if (x.expected_cost - y.expected_cost).abs() <= TIE_EPS {
                i.cmp(j)
            } else {
                x.expected_cost.total_cmp(&y.expected_cost)
            }
        })
        .map(|(i, _)| i)
        .expect("at least one shift");
    let policy = shifts[best].policy.clone();
    let cost = shifts[best].expected_cost;

    let chain = match &reference {
        None => None,
        Some(r) => {
            let tail = cost_tail(inst, r, Offset::NONE)?;
            let reference_cost = tail.expected;
            let e = eps.value();
            let eps_cor = (1.0 + 2.0 * e).powi(3) - 1.0;
            let bound = (1.0 + 4.0 * eps_cor) * reference_cost;
            let contributions = shift_contributions(&tail, eps, n);
            let contribution_budget = 2.0 * e * (1.0 + e) * reference_cost;
            Some(ChainCheck {
                reference_cost,
                eps_cor,
                bound,
                all_certified: shifts
                    .iter()
                    .flat_map(|s| &s.levels)
                    .all(|l| l.certification.as_ref().is_none_or(|c| c.passed)),
                within_bound: cost <= bound + TIE_EPS,
                scores_dominate_costs: shifts.iter().all(|s| s.expected_cost <= s.score_sum + 1e-9),
                some_shift_within_budget: contributions
                    .iter()
                    .any(|c| c.contribution <= contribution_budget + TIE_EPS),
                contributions,
                contribution_budget,
            })
        }
    };

    Ok(PtasOutcome {
        policy,
        expected_cost: cost,
        eps_int: eps,
        best_shift: shifts[best].ell,
        shifts,
        chain,
    })
}

fn run_shift(
    inst: &Instance,
    schedule: &ShiftSchedule,
    eps: Epsilon,
    config: &PtasConfig,
    reference: Option<&PartialPolicy>,
) -> Result<ShiftOutcome> {
    let n = inst.n();
    let mut levels = Vec::new();
    for (a, a_prime) in schedule.levels() {
        let spec = BoundedSpec::new(a, a_prime, eps)
            .with_case_threshold(config.case_threshold)
            .with_budget(config.budget);
        let (_, case) = spec.plan(n);
        let level = match reference {
            None => {
                let (policy, score) = best_bounded(inst, &spec)?;
                LevelOutcome {
                    a,
                    a_prime,
                    case,
                    policy,
                    score,
                    certification: None,
                }
            }
            Some(r) => {
                let (policy, report) = if case == CaseTag::One {
                    let policy = r.prefix(spec.length(n));
                    let policy_tail = cost_tail(inst, &policy, Offset::NONE)?;
                    let reference_tail = cost_tail(inst, r, Offset::NONE)?;
                    let report = build_report(inst, &policy_tail, &reference_tail, &spec, case, Vec::new());
                    (policy, report)
                } else {
                    certify_bounded(inst, r, &spec)?
                };
                let tail = cost_tail(inst, &policy, Offset::NONE)?;
                let score = bounded_score_from_tail(inst, &tail, a, a_prime)?;
                LevelOutcome {
                    a,
                    a_prime,
                    case: report.case,
                    policy,
                    score,
                    certification: Some(report),
                }
            }
        };
        levels.push(level);
    }
    let composed = levels
        .iter()
        .fold(PartialPolicy::empty(), |acc, l| acc.compose(&l.policy))
        .pad_complete(n);
    let expected = expected_cost(inst, &composed, Offset::NONE)?;
    Ok(ShiftOutcome {
        ell: schedule.ell,
        thresholds: schedule.thresholds.clone(),
        score_sum: levels.iter().map(|l| l.score).sum(),
        levels,
        policy: composed,
        expected_cost: expected,
    })
}
