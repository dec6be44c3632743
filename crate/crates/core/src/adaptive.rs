//! Optimal adaptive policy for k-of-n functions.
//!
//! With `k'` ones and `z'` zeros still needed, sort the untested variables
//! by `c/p` and by `c/(1-p)`. The first `k'` of the former and the first `z'`
//! of the latter always intersect (`k' + z'` exceeds the number of untested
//! variables by one), and testing any common element is optimal.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::eval::{Observation, Strategy};
use crate::instance::{is_determined, Determination, DeterminationState, Instance};

pub const DEFAULT_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdaptiveState {
    /// Untested variables.
    pub remaining: Vec<usize>,
    pub ones: usize,
    pub zeros: usize,
}

impl AdaptiveState {
    pub fn initial(inst: &Instance) -> Self {
        Self {
            remaining: (0..inst.n()).collect(),
            ones: 0,
            zeros: 0,
        }
    }
}

/// Both ratio orders of an instance, ties broken by index.
#[derive(Debug, Clone)]
pub struct RatioOrders {
    /// Ascending `c_i / p_i`.
    by_one_ratio: Vec<usize>,
    /// Ascending `c_i / (1 - p_i)`.
    by_zero_ratio: Vec<usize>,
}

impl RatioOrders {
    pub fn new(inst: &Instance) -> Self {
        let sorted = |key: &dyn Fn(usize) -> f64| {
            let mut v: Vec<usize> = (0..inst.n()).collect();
            v.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
            v
        };
        Self {
            by_one_ratio: sorted(&|i| inst.cost(i) as f64 / inst.prob(i)),
            by_zero_ratio: sorted(&|i| inst.cost(i) as f64 / (1.0 - inst.prob(i))),
        }
    }

    /// Smallest index in the intersection of the two prefixes, restricted
    /// to variables with `is_open(i)`.
    fn choose(&self, is_open: impl Fn(usize) -> bool, ones_left: usize, zeros_left: usize) -> Option<usize> {
        let n = self.by_one_ratio.len();
        let mut in_a = vec![false; n];
        for &i in self.by_one_ratio.iter().filter(|&&i| is_open(i)).take(ones_left) {
            in_a[i] = true;
        }
        self.by_zero_ratio
            .iter()
            .filter(|&&i| is_open(i))
            .take(zeros_left)
            .filter(|&&i| in_a[i])
            .min()
            .copied()
    }
}

/// The variable the ratio-prefix rule tests next in `state`.
pub fn ratio_prefix_choice(inst: &Instance, state: &AdaptiveState) -> Result<usize> {
    ratio_prefix_choice_with(inst, &RatioOrders::new(inst), state)
}

pub fn ratio_prefix_choice_with(
    inst: &Instance,
    orders: &RatioOrders,
    state: &AdaptiveState,
) -> Result<usize> {
    let n = inst.n();
    if state.remaining.is_empty() {
        return Err(Error::InvalidArgument("no untested variables remain".into()));
    }
    if state.ones + state.zeros + state.remaining.len() != n {
        return Err(Error::InvalidArgument(format!(
            "state counts ({} ones, {} zeros, {} untested) do not add up to n = {n}",
            state.ones,
            state.zeros,
            state.remaining.len()
        )));
    }
    let det = is_determined(DeterminationState::new(state.ones, state.zeros), inst);
    if det != Determination::Undetermined {
        return Err(Error::InvalidArgument(format!(
            "state is already determined ({det:?})"
        )));
    }
    let mut open = vec![false; n];
    for &i in &state.remaining {
        if i >= n || std::mem::replace(&mut open[i], true) {
            return Err(Error::InvalidArgument(format!(
                "invalid untested variable {}",
                i + 1
            )));
        }
    }
    let ones_left = inst.ones_needed() - state.ones;
    let zeros_left = inst.zeros_needed() - state.zeros;
    orders
        .choose(|i| open[i], ones_left, zeros_left)
        .ok_or_else(|| Error::InvalidArgument("ratio prefixes do not intersect".into()))
}

/// Exact expected cost of the ratio-prefix policy, by memoized recursion
/// over (untested set, ones seen).
pub fn adaptive_expected_cost(inst: &Instance) -> Result<f64> {
    adaptive_expected_cost_capped(inst, DEFAULT_CAP)
}

pub fn adaptive_expected_cost_capped(inst: &Instance, cap: usize) -> Result<f64> {
    let n = inst.n();
    if n > cap.min(32) {
        return Err(Error::CapExceeded {
            what: "exact adaptive evaluation",
            n,
            cap: cap.min(32),
        });
    }
    let mut eval = AdaptiveEval {
        inst,
        orders: RatioOrders::new(inst),
        memo: HashMap::new(),
    };
    let all = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    Ok(eval.value(all, 0))
}

struct AdaptiveEval<'a> {
    inst: &'a Instance,
    orders: RatioOrders,
    memo: HashMap<(u32, u32), f64>,
}

impl AdaptiveEval<'_> {
    fn value(&mut self, remaining: u32, ones: u32) -> f64 {
        let n = self.inst.n() as u32;
        let zeros = n - remaining.count_ones() - ones;
        let ones_left = (self.inst.ones_needed() as u32).saturating_sub(ones);
        let zeros_left = (self.inst.zeros_needed() as u32).saturating_sub(zeros);
        if ones_left == 0 || zeros_left == 0 {
            return 0.0;
        }
        if let Some(&v) = self.memo.get(&(remaining, ones)) {
            return v;
        }
        let i = self
            .orders
            .choose(|i| remaining & (1 << i) != 0, ones_left as usize, zeros_left as usize)
            .expect("prefixes of an open state intersect");
        let rest = remaining & !(1 << i);
        let p = self.inst.prob(i);
        let v = self.inst.cost(i) as f64 + p * self.value(rest, ones + 1) + (1.0 - p) * self.value(rest, ones);
        self.memo.insert((remaining, ones), v);
        v
    }
}

/// The ratio-prefix policy as a simulation strategy.
#[derive(Debug, Clone)]
pub struct RatioPrefixStrategy<'a> {
    inst: &'a Instance,
    orders: RatioOrders,
}

impl<'a> RatioPrefixStrategy<'a> {
    pub fn new(inst: &'a Instance) -> Self {
        Self {
            inst,
            orders: RatioOrders::new(inst),
        }
    }
}

impl Strategy for RatioPrefixStrategy<'_> {
    fn next_test(&mut self, history: &[Observation]) -> usize {
        let mut open = vec![true; self.inst.n()];
        let mut state = DeterminationState::default();
        for o in history {
            open[o.index] = false;
            state.observe(o.value);
        }
        self.orders
            .choose(
                |i| open[i],
                self.inst.ones_needed().saturating_sub(state.ones),
                self.inst.zeros_needed().saturating_sub(state.zeros),
            )
            .unwrap_or(usize::MAX)
    }
}
