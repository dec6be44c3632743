//! Brute-force ground truth for small instances.
//!
//! Everything here is exhaustive and deliberately independent of the
//! dynamic program in [`crate::eval`], so the two can check each other.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::TailDistribution;
use crate::instance::{Instance, PartialPolicy};

pub const DEFAULT_NA_CAP: usize = 8;
pub const DEFAULT_ADAPTIVE_CAP: usize = 15;
pub const ENUMERATION_CAP: usize = 20;

/// Comparison slack for floating-point ties between candidate orders.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub best_policy: PartialPolicy,
    pub best_cost: f64,
}

/// Optimal non-adaptive order by exhaustive search over all permutations,
/// with branch-and-bound on the cost of prefixes. Ties go to the
/// lexicographically smallest order.
pub fn opt_na_bruteforce(inst: &Instance) -> Result<OracleResult> {
    opt_na_bruteforce_capped(inst, DEFAULT_NA_CAP)
}

pub fn opt_na_bruteforce_capped(inst: &Instance, cap: usize) -> Result<OracleResult> {
    let n = inst.n();
    if n > cap {
        return Err(Error::CapExceeded {
            what: "brute-force non-adaptive search",
            n,
            cap,
        });
    }
    let mut search = NaSearch {
        inst,
        used: vec![false; n],
        order: Vec::with_capacity(n),
        best: None,
    };
    let mut start = vec![0.0; n + 1];
    start[0] = 1.0;
    search.descend(&start, 0.0);
    let (best_policy, best_cost) = search.best.expect("n >= 1 yields at least one order");
    Ok(OracleResult {
        best_policy: PartialPolicy::new(best_policy)?,
        best_cost,
    })
}

struct NaSearch<'a> {
    inst: &'a Instance,
    used: Vec<bool>,
    order: Vec<usize>,
    best: Option<(Vec<usize>, f64)>,
}

impl NaSearch<'_> {
    /// `open[r]`: probability of `r` ones among the tested prefix with the
    /// value still undetermined.
    fn descend(&mut self, open: &[f64], cost: f64) {
        let n = self.inst.n();
        if let Some((_, best)) = &self.best {
            if cost > best + TIE_EPS {
                return;
            }
        }
        let mass: f64 = open.iter().sum();
        if self.order.len() == n || mass == 0.0 {
            // Remaining tests are never paid; finish lexicographically.
            let mut full = self.order.clone();
            full.extend((0..n).filter(|&i| !self.used[i]));
            let better = match &self.best {
                None => true,
                Some((_, best)) => cost < best - TIE_EPS,
            };
            if better {
                self.best = Some((full, cost));
            }
            return;
        }
        let tested = self.order.len();
        for i in 0..n {
            if self.used[i] {
                continue;
            }
            let p = self.inst.prob(i);
            let step_cost = cost + self.inst.cost(i) as f64 * mass;
            let mut next = vec![0.0; n + 1];
            for (r, &m) in open.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                for (ones, w) in [(r + 1, p), (r, 1.0 - p)] {
                    let zeros = tested + 1 - ones;
                    if ones < self.inst.ones_needed() && zeros < self.inst.zeros_needed() {
                        next[ones] += m * w;
                    }
                }
            }
            self.used[i] = true;
            self.order.push(i);
            self.descend(&next, step_cost);
            self.order.pop();
            self.used[i] = false;
        }
    }
}

/// Optimal adaptive expected cost by exhaustive recursion over
/// (tested set, number of ones).
pub fn opt_adaptive_dp(inst: &Instance) -> Result<f64> {
    opt_adaptive_dp_capped(inst, DEFAULT_ADAPTIVE_CAP)
}

pub fn opt_adaptive_dp_capped(inst: &Instance, cap: usize) -> Result<f64> {
    let n = inst.n();
    if n > cap {
        return Err(Error::CapExceeded {
            what: "adaptive dynamic program",
            n,
            cap,
        });
    }
    let width = n + 1;
    let full = (1usize << n) - 1;
    let mut value = vec![0.0f64; (full + 1) * width];
    for mask in (0..=full).rev() {
        let tested = mask.count_ones() as usize;
        for ones in 0..=tested {
            let zeros = tested - ones;
            if ones >= inst.ones_needed() || zeros >= inst.zeros_needed() {
                continue;
            }
            let mut best = f64::INFINITY;
            for i in (0..n).filter(|i| mask & (1 << i) == 0) {
                let next = (mask | (1 << i)) * width;
                let p = inst.prob(i);
                let v = inst.cost(i) as f64
                    + p * value[next + ones + 1]
                    + (1.0 - p) * value[next + ones];
                best = best.min(v);
            }
            value[mask * width + ones] = best;
        }
    }
    Ok(value[0])
}

/// Exact cost tail of `pi` by summing the product-form probability of every
/// outcome in `{0,1}^n`.
pub fn tail_by_enumeration(inst: &Instance, pi: &PartialPolicy) -> Result<TailDistribution> {
    let n = inst.n();
    if n > ENUMERATION_CAP {
        return Err(Error::CapExceeded {
            what: "outcome enumeration",
            n,
            cap: ENUMERATION_CAP,
        });
    }
    pi.validate_for(inst)?;
    let total = inst.total_cost() as usize;
    let mut pmf = vec![0.0; total + 1];
    for x in 0u32..(1u32 << n) {
        let bit = |i: usize| x & (1 << i) != 0;
        let pr: f64 = (0..n)
            .map(|i| if bit(i) { inst.prob(i) } else { 1.0 - inst.prob(i) })
            .product();
        let (mut ones, mut zeros, mut cost) = (0, 0, 0usize);
        let mut done = false;
        for &i in pi.as_slice() {
            if ones >= inst.ones_needed() || zeros >= inst.zeros_needed() {
                done = true;
                break;
            }
            cost += inst.cost(i) as usize;
            if bit(i) {
                ones += 1;
            } else {
                zeros += 1;
            }
        }
        done |= ones >= inst.ones_needed() || zeros >= inst.zeros_needed();
        pmf[if done { cost } else { total }] += pr;
    }
    Ok(TailDistribution::from_pmf(&pmf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{expected_cost, Offset};
    use itertools::Itertools;

    fn pp(one_based: &[usize]) -> PartialPolicy {
        PartialPolicy::from_one_based(one_based).unwrap()
    }

    #[test]
    fn single_variable() {
        let inst = Instance::unit(1, vec![0.3]).unwrap();
        let r = opt_na_bruteforce(&inst).unwrap();
        assert_eq!(r.best_policy, pp(&[1]));
        assert_eq!(r.best_cost, 1.0);
        assert_eq!(opt_adaptive_dp(&inst).unwrap(), 1.0);
        let t = tail_by_enumeration(&inst, &pp(&[1])).unwrap();
        assert_eq!(t.tail, vec![1.0, 1.0]);
        assert_eq!(t.expected, 1.0);
    }

    #[test]
    fn three_variable_optimum() {
        let inst = Instance::unit(2, vec![0.1, 0.5, 0.9]).unwrap();
        let r = opt_na_bruteforce(&inst).unwrap();
        assert!((r.best_cost - 2.5).abs() < 1e-12);
        // Every order starting with {1,2} or {2,3} attains 2.5.
        assert_eq!(r.best_policy, pp(&[1, 2, 3]));
        for order in [[2, 1, 3], [2, 3, 1], [3, 2, 1]] {
            let c = expected_cost(&inst, &pp(&order), Offset::NONE).unwrap();
            assert!((c - 2.5).abs() < 1e-12);
        }
        for order in [[1, 3, 2], [3, 1, 2]] {
            let c = expected_cost(&inst, &pp(&order), Offset::NONE).unwrap();
            assert!(c > 2.5 + 1e-9);
        }
    }

    #[test]
    fn two_variable_optimum_tests_likely_one_first() {
        let inst = Instance::unit(1, vec![0.2, 0.8]).unwrap();
        let r = opt_na_bruteforce(&inst).unwrap();
        assert_eq!(r.best_policy, pp(&[2, 1]));
        assert!((r.best_cost - 1.2).abs() < 1e-12);
    }

    #[test]
    fn coin_pair_adaptive() {
        let inst = Instance::unit(1, vec![0.5, 0.5]).unwrap();
        assert!((opt_adaptive_dp(&inst).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn caps_are_enforced() {
        let inst = Instance::unit(3, vec![0.5; 9]).unwrap();
        assert!(matches!(opt_na_bruteforce(&inst), Err(Error::CapExceeded { .. })));
        let inst = Instance::unit(3, vec![0.5; 16]).unwrap();
        assert!(opt_adaptive_dp(&inst).is_err());
        let inst = Instance::unit(3, vec![0.5; 21]).unwrap();
        assert!(tail_by_enumeration(&inst, &PartialPolicy::identity(21)).is_err());
    }

    #[test]
    fn branch_and_bound_matches_plain_enumeration() {
        let mut seed = 17u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64) / ((1u64 << 53) as f64)
        };
        for n in 1..=6 {
            for _ in 0..10 {
                let mut p: Vec<f64> = (0..n).map(|_| 0.02 + 0.96 * next()).collect();
                p.sort_by(f64::total_cmp);
                let k = 1 + (next() * n as f64) as usize % n;
                let c: Vec<u64> = (0..n).map(|_| (next() * 3.0) as u64).collect();
                let inst = Instance::new(k, p, c).unwrap();
                let r = opt_na_bruteforce(&inst).unwrap();
                let plain = (0..n)
                    .permutations(n)
                    .map(|o| expected_cost(&inst, &PartialPolicy::new(o).unwrap(), Offset::NONE).unwrap())
                    .fold(f64::INFINITY, f64::min);
                assert!((r.best_cost - plain).abs() < 1e-12);
                let own = expected_cost(&inst, &r.best_policy, Offset::NONE).unwrap();
                assert!((own - r.best_cost).abs() < 1e-12);
                let ad = opt_adaptive_dp(&inst).unwrap();
                assert!(ad <= r.best_cost + 1e-12);
                assert!(r.best_cost <= 2.0 * ad + 1e-12);
            }
        }
    }
}
