//! The lower-bound family `L_{m,t,eps}` for the adaptivity gap.
//!
//! `n = 2m + 2t`, `k = m + t`. Variables `1..=t` are 0-variables (cost 1,
//! probability `eps`), the next `2m` are free (cost 0, probability 1/2) and
//! the last `t` are 1-variables (cost 1, probability `1 - eps`). Let `X` be
//! the number of free 1s. Outside `X - m in [-t, t-1]` the free tests alone
//! decide the value, so economical policies (free tests first) only pay in
//! that band. There the adaptive policy knows which side it is on, while a
//! fixed order must hedge; the conditional costs tend to `(t+1)/2` and
//! `(2t+1)/2`.

use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{expected_cost, Observation, Offset, Strategy};
use crate::instance::{Instance, PartialPolicy};

/// Largest supported `m`.
pub const MAX_M: usize = 100_000;

pub const CSV_HEADER: [&str; 7] = ["t", "m", "eps", "e_adaptive", "e_nonadaptive", "ratio", "limit"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapParams {
    pub m: usize,
    pub t: usize,
    pub eps: f64,
}

impl GapParams {
    pub fn new(m: usize, t: usize, eps: f64) -> Result<Self> {
        if m < 1 || t < 1 {
            return Err(Error::InvalidArgument(format!(
                "m and t must be positive, got m = {m}, t = {t}"
            )));
        }
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::InvalidArgument(format!("eps = {eps} is not in (0, 1/2)")));
        }
        if m > MAX_M {
            return Err(Error::CapExceeded {
                what: "gap benchmark (m)",
                n: m,
                cap: MAX_M,
            });
        }
        Ok(Self { m, t, eps })
    }

    pub fn n(&self) -> usize {
        2 * self.m + 2 * self.t
    }

    pub fn k(&self) -> usize {
        self.m + self.t
    }

    pub fn zero_vars(&self) -> Range<usize> {
        0..self.t
    }

    pub fn free_vars(&self) -> Range<usize> {
        self.t..self.t + 2 * self.m
    }

    pub fn one_vars(&self) -> Range<usize> {
        self.t + 2 * self.m..self.n()
    }

    /// Values of `X` for which the free tests leave the function open.
    pub fn band(&self) -> Range<usize> {
        self.m - self.t.min(self.m)..self.m + self.t
    }

    /// `(2t + 1) / (t + 1)`.
    pub fn limit_ratio(&self) -> f64 {
        (2 * self.t + 1) as f64 / (self.t + 1) as f64
    }
}

pub fn build_l(params: &GapParams) -> Result<Instance> {
    let GapParams { m, t, eps } = *params;
    let mut p = vec![eps; t];
    p.extend(std::iter::repeat(0.5).take(2 * m));
    p.extend(std::iter::repeat(1.0 - eps).take(t));
    let mut c = vec![1; t];
    c.extend(std::iter::repeat(0).take(2 * m));
    c.extend(std::iter::repeat(1).take(t));
    Instance::new(m + t, p, c)
}

/// `Binom(trials, 1/2)` pmf, built outward from the mode and renormalized.
pub fn binomial_pmf(trials: usize) -> Vec<f64> {
    let mut w = vec![0.0; trials + 1];
    let mid = trials / 2;
    w[mid] = 1.0;
    for i in mid..trials {
        w[i + 1] = w[i] * (trials - i) as f64 / (i + 1) as f64;
    }
    for i in (1..=mid).rev() {
        w[i - 1] = w[i] * i as f64 / (trials - i + 1) as f64;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// `Pr[X_{2a} - a = i | X_{2a} - a in [-c, c-1]]`, from ratios of binomial
/// coefficients.
pub fn conditional_binomial(a: usize, c: usize, i: i64) -> Result<f64> {
    if c < 1 || c > a || i < -(c as i64) || i >= c as i64 {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= c <= a and i in [-c, c-1], got a = {a}, c = {c}, i = {i}"
        )));
    }
    // C(2a, a + j) / C(2a, a) for j in [-c, c-1].
    let ratio = |j: i64| -> f64 {
        let steps = j.unsigned_abs() as usize;
        let mut r = 1.0;
        for s in 0..steps {
            r *= (a - s) as f64 / (a + s + 1) as f64;
        }
        r
    };
    let total: f64 = (-(c as i64)..c as i64).map(ratio).sum();
    Ok(ratio(i) / total)
}

/// Paid variables alternating 1-variable, 0-variable.
pub fn alternating_paid_order(params: &GapParams) -> PartialPolicy {
    let order = params
        .one_vars()
        .zip(params.zero_vars())
        .flat_map(|(one, zero)| [one, zero])
        .collect();
    PartialPolicy::new(order).expect("distinct paid variables")
}

/// Paid order of the adaptive policy after seeing `x` free 1s.
pub fn adaptive_paid_order(params: &GapParams, x: usize) -> PartialPolicy {
    let order = if x >= params.m {
        params.one_vars().chain(params.zero_vars()).collect()
    } else {
        params.zero_vars().chain(params.one_vars()).collect()
    };
    PartialPolicy::new(order).expect("distinct paid variables")
}

fn validate_paid_order(params: &GapParams, paid: &PartialPolicy) -> Result<()> {
    for &i in paid.as_slice() {
        if params.free_vars().contains(&i) || i >= params.n() {
            return Err(Error::InvalidPolicy(format!(
                "index {} is not a paid variable",
                i + 1
            )));
        }
    }
    if paid.len() != 2 * params.t {
        return Err(Error::InvalidPolicy(format!(
            "paid order has {} entries, expected 2t = {}",
            paid.len(),
            2 * params.t
        )));
    }
    Ok(())
}

/// Full economical order: all free variables, then `paid`.
pub fn economical_order(params: &GapParams, paid: &PartialPolicy) -> Result<PartialPolicy> {
    validate_paid_order(params, paid)?;
    let order = params.free_vars().chain(paid.as_slice().iter().copied()).collect();
    PartialPolicy::new(order)
}

/// Expected cost of `paid` after `x` free 1s and `2m - x` free 0s.
pub fn conditional_cost(inst: &Instance, params: &GapParams, paid: &PartialPolicy, x: usize) -> Result<f64> {
    if x > 2 * params.m {
        return Err(Error::InvalidArgument(format!("x = {x} exceeds 2m = {}", 2 * params.m)));
    }
    if x >= params.k() || 2 * params.m - x >= params.n() - params.k() + 1 {
        return Ok(0.0);
    }
    expected_cost(inst, paid, Offset::new(x, 2 * params.m - x))
}

/// Exact expected cost of the adaptive policy: free tests, then 1-variables
/// first if `X >= m`, else 0-variables first.
pub fn adaptive_l_cost(params: &GapParams) -> Result<f64> {
    let inst = build_l(params)?;
    let pmf = binomial_pmf(2 * params.m);
    // Outside the band the offset alone determines the value and costs 0.
    params.band().try_fold(0.0, |acc, x| {
        Ok(acc + pmf[x] * conditional_cost(&inst, params, &adaptive_paid_order(params, x), x)?)
    })
}

/// Exact expected cost of the economical fixed order with paid part
/// `paid`, by the dynamic program on the full instance.
pub fn na_l_cost(params: &GapParams, paid: &PartialPolicy) -> Result<f64> {
    let inst = build_l(params)?;
    expected_cost(&inst, &economical_order(params, paid)?, Offset::NONE)
}

/// Same quantity as [`na_l_cost`], summed over the free-count `X`.
pub fn na_l_cost_by_conditioning(params: &GapParams, paid: &PartialPolicy) -> Result<f64> {
    validate_paid_order(params, paid)?;
    let inst = build_l(params)?;
    let pmf = binomial_pmf(2 * params.m);
    params
        .band()
        .try_fold(0.0, |acc, x| Ok(acc + pmf[x] * conditional_cost(&inst, params, paid, x)?))
}

/// Expectations conditioned on `X - m in [-t, t-1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalCosts {
    pub band_probability: f64,
    pub adaptive: f64,
    pub nonadaptive: f64,
}

pub fn conditional_costs(params: &GapParams, paid: &PartialPolicy) -> Result<ConditionalCosts> {
    validate_paid_order(params, paid)?;
    let inst = build_l(params)?;
    let pmf = binomial_pmf(2 * params.m);
    let (mut mass, mut ad, mut na) = (0.0, 0.0, 0.0);
    for x in params.band() {
        mass += pmf[x];
        ad += pmf[x] * conditional_cost(&inst, params, &adaptive_paid_order(params, x), x)?;
        na += pmf[x] * conditional_cost(&inst, params, paid, x)?;
    }
    Ok(ConditionalCosts {
        band_probability: mass,
        adaptive: ad / mass,
        nonadaptive: na / mass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapRecord {
    pub t: usize,
    pub m: usize,
    pub eps: f64,
    pub e_adaptive: f64,
    pub e_nonadaptive: f64,
    pub ratio: f64,
    pub limit: f64,
}

pub fn gap_record(params: &GapParams) -> Result<GapRecord> {
    let e_adaptive = adaptive_l_cost(params)?;
    let e_nonadaptive = na_l_cost(params, &alternating_paid_order(params))?;
    Ok(GapRecord {
        t: params.t,
        m: params.m,
        eps: params.eps,
        e_adaptive,
        e_nonadaptive,
        ratio: e_nonadaptive / e_adaptive,
        limit: params.limit_ratio(),
    })
}

/// One record per `t`, computed in parallel, returned in input order.
pub fn gap_table(t_values: &[usize], m: usize, eps: f64) -> Result<Vec<GapRecord>> {
    let params = t_values
        .iter()
        .map(|&t| GapParams::new(m, t, eps))
        .collect::<Result<Vec<_>>>()?;
    params.par_iter().map(gap_record).collect()
}

pub fn write_csv<W: Write>(records: &[GapRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in records {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

/// Position (1-based) in `paid` of the `j`-th variable from `class`.
fn nth_position(paid: &PartialPolicy, class: Range<usize>, j: usize) -> Option<u64> {
    paid.as_slice()
        .iter()
        .enumerate()
        .filter(|(_, i)| class.contains(i))
        .nth(j.checked_sub(1)?)
        .map(|(pos, _)| pos as u64 + 1)
}

/// `n_1(j)`: tests of `paid` needed to see `j` 1-variables.
pub fn n1(params: &GapParams, paid: &PartialPolicy, j: usize) -> Option<u64> {
    nth_position(paid, params.one_vars(), j)
}

/// `n_0(j)`: tests of `paid` needed to see `j` 0-variables.
pub fn n0(params: &GapParams, paid: &PartialPolicy, j: usize) -> Option<u64> {
    nth_position(paid, params.zero_vars(), j)
}

/// Cost of the adaptive policy when every paid variable takes its likely
/// value and `X = x` is in the band.
pub fn band_adaptive_cost(params: &GapParams, x: usize) -> u64 {
    if x >= params.m {
        (params.k() - x) as u64
    } else {
        (params.n() - params.k() + 1 - (2 * params.m - x)) as u64
    }
}

/// Cost of the economical order with paid part `paid` on the same outcomes.
pub fn band_na_cost(params: &GapParams, paid: &PartialPolicy, x: usize) -> Option<u64> {
    if x >= params.m {
        n1(params, paid, params.k() - x)
    } else {
        n0(params, paid, params.n() - params.k() + 1 - (2 * params.m - x))
    }
}

/// Cost of running `paid` after `x` free 1s when paid variable `i` takes
/// value `value(i)`.
pub fn paid_cost_on_outcome(
    params: &GapParams,
    paid: &PartialPolicy,
    x: usize,
    value: impl Fn(usize) -> bool,
) -> u64 {
    let (mut ones, mut zeros) = (x, 2 * params.m - x);
    let mut cost = 0;
    for &i in paid.as_slice() {
        if ones >= params.k() || zeros >= params.n() - params.k() + 1 {
            break;
        }
        cost += 1;
        if value(i) {
            ones += 1;
        } else {
            zeros += 1;
        }
    }
    cost
}

/// The adaptive policy as a simulation strategy.
#[derive(Debug, Clone)]
pub struct AdaptiveLStrategy {
    params: GapParams,
}

impl AdaptiveLStrategy {
    pub fn new(params: GapParams) -> Self {
        Self { params }
    }
}

impl Strategy for AdaptiveLStrategy {
    fn next_test(&mut self, history: &[Observation]) -> usize {
        let free = 2 * self.params.m;
        if history.len() < free {
            return self.params.t + history.len();
        }
        let x = history[..free].iter().filter(|o| o.value).count();
        adaptive_paid_order(&self.params, x)
            .as_slice()
            .get(history.len() - free)
            .copied()
            .unwrap_or(usize::MAX)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{simulate, FixedOrder};
    use crate::oracle::tail_by_enumeration;
    use itertools::Itertools;

    fn params(m: usize, t: usize, eps: f64) -> GapParams {
        GapParams::new(m, t, eps).unwrap()
    }

    #[test]
    fn build_small_instance() {
        let inst = build_l(&params(1, 1, 0.1)).unwrap();
        assert_eq!(inst.n(), 4);
        assert_eq!(inst.k(), 2);
        assert_eq!(inst.probs(), &[0.1, 0.5, 0.5, 0.9]);
        assert_eq!(inst.costs(), &[1, 0, 0, 1]);
        for (m, t) in [(3, 2), (10, 4)] {
            let p = params(m, t, 0.01);
            let inst = build_l(&p).unwrap();
            assert_eq!(inst.k(), m + t);
            assert_eq!(inst.costs().iter().filter(|&&c| c == 0).count(), 2 * m);
        }
    }

    #[test]
    fn params_are_validated() {
        assert!(GapParams::new(0, 1, 0.1).is_err());
        assert!(GapParams::new(1, 0, 0.1).is_err());
        assert!(GapParams::new(1, 1, 0.5).is_err());
        assert!(GapParams::new(MAX_M + 1, 1, 0.1).is_err());
    }

    #[test]
    fn limits() {
        assert_eq!(params(5, 1, 0.1).limit_ratio(), 1.5);
        assert_eq!(params(5, 4, 0.1).limit_ratio(), 1.8);
    }

    #[test]
    fn binomial_matches_coefficients() {
        let pmf = binomial_pmf(4);
        let exact = [1.0, 4.0, 6.0, 4.0, 1.0].map(|c| c / 16.0);
        for (a, b) in pmf.iter().zip(exact) {
            assert!((a - b).abs() < 1e-15);
        }
        let big = binomial_pmf(200_000);
        assert!((big.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(big.iter().all(|x| x.is_finite() && *x >= 0.0));
    }

    #[test]
    fn conditional_binomial_values() {
        assert!((conditional_binomial(2, 1, -1).unwrap() - 0.4).abs() < 1e-15);
        assert!((conditional_binomial(2, 1, 0).unwrap() - 0.6).abs() < 1e-15);
        for c in [1usize, 2, 4] {
            for i in -(c as i64)..c as i64 {
                let dev: Vec<f64> = [10, 100, 1000]
                    .iter()
                    .map(|&a| (conditional_binomial(a, c, i).unwrap() - 1.0 / (2 * c) as f64).abs())
                    .collect();
                assert!(dev[0] > dev[1] && dev[1] > dev[2], "c = {c}, i = {i}: {dev:?}");
            }
        }
    }

    #[test]
    fn outside_band_costs_nothing() {
        let p = params(5, 2, 0.1);
        let inst = build_l(&p).unwrap();
        let paid = alternating_paid_order(&p);
        for x in (0..=2 * p.m).filter(|x| !p.band().contains(x)) {
            assert_eq!(conditional_cost(&inst, &p, &paid, x).unwrap(), 0.0);
        }
    }

    #[test]
    fn conditioning_route_matches_full_program() {
        for (m, t, eps) in [(1, 1, 0.1), (4, 2, 0.01), (50, 3, 0.2), (2000, 4, 1e-6)] {
            let p = params(m, t, eps);
            let paid = alternating_paid_order(&p);
            let full = na_l_cost(&p, &paid).unwrap();
            let cond = na_l_cost_by_conditioning(&p, &paid).unwrap();
            assert!((full - cond).abs() <= 1e-10 * full.max(1e-3), "{full} vs {cond}");
        }
    }

    #[test]
    fn exact_costs_match_enumeration() {
        let p = params(3, 2, 0.1);
        let inst = build_l(&p).unwrap();
        let paid = alternating_paid_order(&p);
        let full = economical_order(&p, &paid).unwrap();
        let by_outcomes = tail_by_enumeration(&inst, &full).unwrap().expected;
        assert!((na_l_cost(&p, &paid).unwrap() - by_outcomes).abs() < 1e-12);
    }

    #[test]
    fn simulation_cross_check() {
        let p = params(4, 1, 0.01);
        let inst = build_l(&p).unwrap();
        let exact = adaptive_l_cost(&p).unwrap();
        let s = simulate(&inst, &mut AdaptiveLStrategy::new(p), 1_000_000, 11).unwrap();
        let sigma = s.half_width / 1.96;
        assert!((s.mean - exact).abs() <= 3.0 * sigma, "{s:?} vs {exact}");
        let order = economical_order(&p, &alternating_paid_order(&p)).unwrap();
        let exact = na_l_cost(&p, &alternating_paid_order(&p)).unwrap();
        let s = simulate(&inst, &mut FixedOrder(&order), 1_000_000, 12).unwrap();
        assert!((s.mean - exact).abs() <= 3.0 * s.half_width / 1.96);
    }

    #[test]
    fn band_closed_forms() {
        for (m, t) in [(3, 1), (5, 2), (8, 3)] {
            let p = params(m, t, 0.05);
            let likely = |i: usize| p.one_vars().contains(&i);
            for paid in p.zero_vars().chain(p.one_vars()).permutations(2 * t) {
                let paid = PartialPolicy::new(paid).unwrap();
                for x in p.band() {
                    assert_eq!(
                        paid_cost_on_outcome(&p, &adaptive_paid_order(&p, x), x, likely),
                        band_adaptive_cost(&p, x)
                    );
                    assert_eq!(paid_cost_on_outcome(&p, &paid, x, likely), band_na_cost(&p, &paid, x).unwrap());
                }
            }
        }
    }

    #[test]
    fn small_eps_matches_closed_forms() {
        let p = params(3, 2, 1e-9);
        let pmf = binomial_pmf(2 * p.m);
        let paid = alternating_paid_order(&p);
        let (mut ad, mut na) = (0.0, 0.0);
        for x in p.band() {
            ad += pmf[x] * band_adaptive_cost(&p, x) as f64;
            na += pmf[x] * band_na_cost(&p, &paid, x).unwrap() as f64;
        }
        assert!((adaptive_l_cost(&p).unwrap() - ad).abs() < 1e-6);
        assert!((na_l_cost(&p, &paid).unwrap() - na).abs() < 1e-6);
    }

    #[test]
    fn every_paid_order_has_the_same_limit() {
        let p = params(2, 1, 1e-9);
        for paid in p.zero_vars().chain(p.one_vars()).permutations(2) {
            let paid = PartialPolicy::new(paid).unwrap();
            let c = conditional_costs(&p, &paid).unwrap();
            let weights: Vec<f64> = p.band().map(|x| binomial_pmf(4)[x] / c.band_probability).collect();
            let expected: f64 = p
                .band()
                .zip(&weights)
                .map(|(x, w)| w * band_na_cost(&p, &paid, x).unwrap() as f64)
                .sum();
            assert!((c.nonadaptive - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn alternating_order_at_t_one() {
        let p = params(10_000, 1, 1e-6);
        let r = gap_record(&p).unwrap();
        assert!((r.ratio - 1.5).abs() / 1.5 < 0.02, "{r:?}");
    }

    #[test]
    fn economical_orders_are_no_worse() {
        // Moving a free variable ahead of a paid one never hurts.
        for (m, t) in [(1, 1), (2, 1), (1, 2), (2, 2), (3, 1)] {
            let p = params(m, t, 0.2);
            let inst = build_l(&p).unwrap();
            for order in (0..p.n()).permutations(p.n()) {
                let base = expected_cost(&inst, &PartialPolicy::new(order.clone()).unwrap(), Offset::NONE).unwrap();
                for pos in 1..order.len() {
                    if p.free_vars().contains(&order[pos]) && !p.free_vars().contains(&order[pos - 1]) {
                        let mut moved = order.clone();
                        moved.swap(pos - 1, pos);
                        let c = expected_cost(&inst, &PartialPolicy::new(moved).unwrap(), Offset::NONE).unwrap();
                        assert!(c <= base + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn csv_layout() {
        let records = gap_table(&[1, 2], 50, 0.01).unwrap();
        assert_eq!(records[0].t, 1);
        assert_eq!(records[1].t, 2);
        let mut buf = Vec::new();
        write_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,m,eps,e_adaptive,e_nonadaptive,ratio,limit");
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn paid_order_validation() {
        let p = params(2, 1, 0.1);
        assert!(na_l_cost(&p, &PartialPolicy::new(vec![0]).unwrap()).is_err());
        assert!(na_l_cost(&p, &PartialPolicy::new(vec![0, 1]).unwrap()).is_err());
        assert!(na_l_cost(&p, &PartialPolicy::new(vec![5, 0]).unwrap()).is_ok());
    }
}
