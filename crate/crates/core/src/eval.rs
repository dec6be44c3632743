//! Exact cost distributions of fixed test orders.
//!
//! Walking a (partial) order, the policy stops as soon as the number of
//! observed 1s reaches `k` or the number of observed 0s reaches `n - k + 1`.
//! Because the stopping rule only depends on the count of 1s, a dynamic
//! program over `(step, ones)` with absorbing determination gives the exact
//! stopping-time distribution in `O(len * min(k, n - k + 1))` time and
//! `O(k)` memory.
//!
//! A partial order that ends while the value is still open is charged the
//! total cost of the instance (`n` under unit costs).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{is_determined, Determination, DeterminationState, Instance, PartialPolicy};

/// Variables revealed before the policy starts (outside the policy).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Offset {
    pub ones: usize,
    pub zeros: usize,
}

impl Offset {
    pub const NONE: Offset = Offset { ones: 0, zeros: 0 };

    pub fn new(ones: usize, zeros: usize) -> Self {
        Self { ones, zeros }
    }
}

/// `tail[i] = Pr[cost >= i]` for `i = 0..=total_cost`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailDistribution {
    pub tail: Vec<f64>,
    pub expected: f64,
}

impl TailDistribution {
    /// `Pr[cost >= i]`, zero past the support.
    pub fn at(&self, i: u64) -> f64 {
        usize::try_from(i)
            .ok()
            .and_then(|i| self.tail.get(i).copied())
            .unwrap_or(0.0)
    }

    /// `Pr[cost > i]`.
    pub fn exceeds(&self, i: u64) -> f64 {
        self.at(i.saturating_add(1))
    }

    pub(crate) fn from_pmf(pmf: &[f64]) -> Self {
        let mut tail = vec![0.0; pmf.len()];
        let mut acc = 0.0;
        for i in (0..pmf.len()).rev() {
            acc += pmf[i];
            tail[i] = acc.min(1.0);
        }
        if let Some(t0) = tail.first_mut() {
            *t0 = 1.0;
        }
        let expected = pmf.iter().enumerate().map(|(v, &m)| v as f64 * m).sum();
        Self { tail, expected }
    }
}

/// Expected paid cost of a fixed order and the probability it ends
/// undetermined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyCost {
    /// Sum over positions of `c_{pi(j)} * Pr[still undetermined before j]`.
    /// Does not include any charge for the undetermined mass.
    pub expected: f64,
    /// `Pr[undetermined after all tests of the order]`.
    pub undetermined: f64,
}

/// Per-step stopping probabilities of an order.
#[derive(Debug, Clone)]
pub(crate) struct StopProfile {
    /// `alive[j]`: probability the value is open before test `j`.
    pub alive: Vec<f64>,
    /// `stop[j]`: probability the policy stops right after test `j`.
    pub stop: Vec<f64>,
    /// Probability the value is still open after the last test.
    pub undetermined: f64,
    /// The offset alone already determines the value.
    pub determined_at_start: bool,
}

pub(crate) fn stop_profile(
    inst: &Instance,
    pi: &PartialPolicy,
    offset: Offset,
) -> Result<StopProfile> {
    pi.validate_for(inst)?;
    let need1 = inst.ones_needed().checked_sub(offset.ones).ok_or_else(|| {
        Error::InvalidOffset(format!(
            "{} revealed ones exceed k = {}",
            offset.ones,
            inst.k()
        ))
    })?;
    let need0 = inst.zeros_needed().checked_sub(offset.zeros).ok_or_else(|| {
        Error::InvalidOffset(format!(
            "{} revealed zeros exceed n - k + 1 = {}",
            offset.zeros,
            inst.zeros_needed()
        ))
    })?;
    if offset.ones + offset.zeros + pi.len() > inst.n() {
        return Err(Error::InvalidOffset(format!(
            "offset ({}, {}) plus {} tests exceeds n = {}",
            offset.ones,
            offset.zeros,
            pi.len(),
            inst.n()
        )));
    }

    let len = pi.len();
    if need1 == 0 || need0 == 0 {
        return Ok(StopProfile {
            alive: vec![0.0; len],
            stop: vec![0.0; len],
            undetermined: 0.0,
            determined_at_start: true,
        });
    }

    // mass[r]: probability of r additional ones seen and value still open.
    let mut mass = vec![0.0f64; need1];
    mass[0] = 1.0;
    let mut alive = Vec::with_capacity(len);
    let mut stop = Vec::with_capacity(len);
    let mut open = 1.0;
    for (j, &var) in pi.as_slice().iter().enumerate() {
        alive.push(open);
        // Open states before this test: r <= need1 - 1 and j - r <= need0 - 1.
        let lo = (j + 1).saturating_sub(need0);
        let hi = j.min(need1 - 1);
        if lo > hi || open == 0.0 {
            stop.push(0.0);
            continue;
        }
        let p = inst.prob(var);
        let mut stopped = 0.0;
        for r in (lo..=hi).rev() {
            let v = mass[r];
            if r + 1 == need1 {
                stopped += p * v;
            } else {
                mass[r + 1] += p * v;
            }
            mass[r] = (1.0 - p) * v;
        }
        // The state with the fewest ones may have just hit the zero bound.
        if j + 1 >= need0 {
            let r = j + 1 - need0;
            if r < need1 {
                stopped += mass[r];
                mass[r] = 0.0;
            }
        }
        let lo_next = (j + 2).saturating_sub(need0);
        let hi_next = (j + 1).min(need1 - 1);
        open = if lo_next <= hi_next {
            mass[lo_next..=hi_next].iter().sum()
        } else {
            0.0
        };
        stop.push(stopped);
    }
    Ok(StopProfile {
        alive,
        stop,
        undetermined: open,
        determined_at_start: false,
    })
}

/// Exact distribution of the cost of `pi` over integer thresholds.
pub fn cost_tail(inst: &Instance, pi: &PartialPolicy, offset: Offset) -> Result<TailDistribution> {
    let profile = stop_profile(inst, pi, offset)?;
    let total = inst.total_cost() as usize;
    let mut pmf = vec![0.0; total + 1];
    if profile.determined_at_start {
        pmf[0] = 1.0;
    } else {
        let mut spent = 0usize;
        for (&var, &s) in pi.as_slice().iter().zip(&profile.stop) {
            spent += inst.cost(var) as usize;
            pmf[spent] += s;
        }
        pmf[total] += profile.undetermined;
    }
    Ok(TailDistribution::from_pmf(&pmf))
}

/// Expected paid cost and residual undetermined probability.
pub fn evaluate(inst: &Instance, pi: &PartialPolicy, offset: Offset) -> Result<PolicyCost> {
    let profile = stop_profile(inst, pi, offset)?;
    let expected = pi
        .as_slice()
        .iter()
        .zip(&profile.alive)
        .map(|(&var, &a)| inst.cost(var) as f64 * a)
        .sum();
    Ok(PolicyCost {
        expected,
        undetermined: profile.undetermined,
    })
}

/// Expected cost paid by `pi` (see [`PolicyCost::expected`]).
pub fn expected_cost(inst: &Instance, pi: &PartialPolicy, offset: Offset) -> Result<f64> {
    evaluate(inst, pi, offset).map(|c| c.expected)
}

/// `sum_{i=a}^{a'-1} Pr[cost >= i] + a' * Pr[cost >= a']` for a unit-cost
/// instance. `a'` may exceed `n`, in which case the last term vanishes.
pub fn bounded_score(inst: &Instance, pi: &PartialPolicy, a: u64, a_prime: u64) -> Result<f64> {
    let tail = cost_tail(inst, pi, Offset::NONE)?;
    bounded_score_from_tail(inst, &tail, a, a_prime)
}

pub(crate) fn bounded_score_from_tail(
    inst: &Instance,
    tail: &TailDistribution,
    a: u64,
    a_prime: u64,
) -> Result<f64> {
    if !inst.is_unit_cost() {
        return Err(Error::NonUnitCost("bounded score"));
    }
    if a < 1 || a >= a_prime {
        return Err(Error::InvalidArgument(format!(
            "bounded score needs 1 <= a < a', got a = {a}, a' = {a_prime}"
        )));
    }
    let last = a_prime.min(inst.n() as u64 + 1);
    let body: f64 = (a..last).map(|i| tail.at(i)).sum();
    Ok(body + a_prime as f64 * tail.at(a_prime))
}

/// One revealed test in a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub index: usize,
    pub value: bool,
}

/// Chooses the next variable from the history of the current run.
pub trait Strategy {
    fn next_test(&mut self, history: &[Observation]) -> usize;
}

impl<F> Strategy for F
where
    F: FnMut(&[Observation]) -> usize,
{
    fn next_test(&mut self, history: &[Observation]) -> usize {
        self(history)
    }
}

/// Runs a fixed order as a strategy.
#[derive(Debug, Clone)]
pub struct FixedOrder<'a>(pub &'a PartialPolicy);

impl Strategy for FixedOrder<'_> {
    fn next_test(&mut self, history: &[Observation]) -> usize {
        self.0.as_slice().get(history.len()).copied().unwrap_or(usize::MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub trials: u64,
    pub mean: f64,
    /// 95% normal-approximation half-width of the mean.
    pub half_width: f64,
}

/// Monte Carlo estimate of the expected cost of a strategy. Deterministic
/// for a given seed.
pub fn simulate<S: Strategy + ?Sized>(
    inst: &Instance,
    strategy: &mut S,
    trials: u64,
    seed: u64,
) -> Result<SimulationSummary> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let n = inst.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history = Vec::with_capacity(n);
    let mut tested = vec![false; n];
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for trial in 0..trials {
        history.clear();
        tested.iter_mut().for_each(|t| *t = false);
        let mut state = DeterminationState::default();
        let mut cost = 0u64;
        while is_determined(state, inst) == Determination::Undetermined {
            let i = strategy.next_test(&history);
            if i >= n {
                return Err(Error::Strategy(format!(
                    "strategy chose index {i} outside [0, {n}) while the value is open"
                )));
            }
            if std::mem::replace(&mut tested[i], true) {
                return Err(Error::Strategy(format!(
                    "strategy chose variable {} twice",
                    i + 1
                )));
            }
            let value = rng.gen::<f64>() < inst.prob(i);
            cost += inst.cost(i);
            state.observe(value);
            history.push(Observation { index: i, value });
        }
        // Welford update.
        let x = cost as f64;
        let delta = x - mean;
        mean += delta / (trial + 1) as f64;
        m2 += delta * (x - mean);
    }
    let half_width = if trials > 1 {
        let var = m2 / (trials - 1) as f64;
        1.96 * (var / trials as f64).sqrt()
    } else {
        0.0
    };
    Ok(SimulationSummary {
        trials,
        mean,
        half_width,
    })
}
