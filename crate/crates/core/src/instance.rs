//! Instance model, determination semantics and partial policies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A k-of-n evaluation problem: `n` variables with success probabilities
/// `p` (nondecreasing, each strictly inside (0,1)) and nonnegative integer
/// test costs `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    k: usize,
    p: Vec<f64>,
    c: Vec<u64>,
}

impl Instance {
    /// Builds an instance whose probabilities are already sorted ascending.
    ///
    /// Use [`normalize`] for unsorted input.
    pub fn new(k: usize, p: Vec<f64>, c: Vec<u64>) -> Result<Self> {
        validate_raw(k, &p, &c)?;
        if p.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInstance(
                "probabilities must be nondecreasing (use normalize)".into(),
            ));
        }
        Ok(Self { k, p, c })
    }

    /// Unit-cost instance.
    pub fn unit(k: usize, p: Vec<f64>) -> Result<Self> {
        let c = vec![1; p.len()];
        Self::new(k, p, c)
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn costs(&self) -> &[u64] {
        &self.c
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.p[i]
    }

    pub fn cost(&self, i: usize) -> u64 {
        self.c[i]
    }

    /// Number of 1s that certifies value 1.
    pub fn ones_needed(&self) -> usize {
        self.k
    }

    /// Number of 0s that certifies value 0, `n - k + 1`.
    pub fn zeros_needed(&self) -> usize {
        self.n() - self.k + 1
    }

    pub fn is_unit_cost(&self) -> bool {
        self.c.iter().all(|&c| c == 1)
    }

    /// Sum of all test costs. This is the cost charged to a partial policy
    /// that ends without determining the function (`n` under unit costs).
    pub fn total_cost(&self) -> u64 {
        self.c.iter().sum()
    }
}

fn validate_raw(k: usize, p: &[f64], c: &[u64]) -> Result<()> {
    let n = p.len();
    if n == 0 {
        return Err(Error::InvalidInstance("instance has no variables".into()));
    }
    if c.len() != n {
        return Err(Error::InvalidInstance(format!(
            "cost vector has length {} but there are {} probabilities",
            c.len(),
            n
        )));
    }
    if k < 1 || k > n {
        return Err(Error::InvalidInstance(format!(
            "k = {k} is outside [1, {n}]"
        )));
    }
    for (i, &pi) in p.iter().enumerate() {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::InvalidInstance(format!(
                "p[{}] = {} is not in the open interval (0, 1)",
                i + 1,
                pi
            )));
        }
    }
    Ok(())
}

/// Sorts raw input by probability (stable) and returns the instance with
/// the permutation `index_map`, where `index_map[sorted] = original`.
pub fn normalize(raw_p: &[f64], raw_c: &[u64], k: usize) -> Result<(Instance, Vec<usize>)> {
    validate_raw(k, raw_p, raw_c)?;
    let mut index_map: Vec<usize> = (0..raw_p.len()).collect();
    index_map.sort_by(|&a, &b| raw_p[a].total_cmp(&raw_p[b]));
    let p = index_map.iter().map(|&i| raw_p[i]).collect();
    let c = index_map.iter().map(|&i| raw_c[i]).collect();
    Ok((Instance { k, p, c }, index_map))
}

/// On-disk instance format: `{"k": int, "p": [float...], "c": [int...]}`,
/// with `c` optional (all ones).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub k: usize,
    pub p: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<u64>>,
}

impl InstanceFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInstance(format!("bad JSON: {e}")))
    }

    /// Validates and sorts; see [`normalize`].
    pub fn normalize(&self) -> Result<(Instance, Vec<usize>)> {
        let c = self.c.clone().unwrap_or_else(|| vec![1; self.p.len()]);
        normalize(&self.p, &c, self.k)
    }
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        Self {
            k: inst.k,
            p: inst.p.clone(),
            c: Some(inst.c.clone()),
        }
    }
}

/// Outcome of the determination test on a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Determination {
    Undetermined,
    Value0,
    Value1,
}

/// Counts of observed 1s and 0s. For k-of-n functions this is a sufficient
/// statistic for whether the value is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DeterminationState {
    pub ones: usize,
    pub zeros: usize,
}

impl DeterminationState {
    pub fn new(ones: usize, zeros: usize) -> Self {
        Self { ones, zeros }
    }

    pub fn observe(&mut self, value: bool) {
        if value {
            self.ones += 1;
        } else {
            self.zeros += 1;
        }
    }
}

pub fn is_determined(state: DeterminationState, inst: &Instance) -> Determination {
    if state.ones >= inst.ones_needed() {
        Determination::Value1
    } else if state.zeros >= inst.zeros_needed() {
        Determination::Value0
    } else {
        Determination::Undetermined
    }
}

/// A fixed test order over a subset of the variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PartialPolicy {
    order: Vec<usize>,
}

impl PartialPolicy {
    /// Rejects repeated indices.
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.iter().max().map_or(0, |&m| m + 1)];
        for &i in &order {
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPolicy(format!(
                    "index {} appears more than once",
                    i + 1
                )));
            }
        }
        Ok(Self { order })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// The identity order `0, 1, ..., n-1`.
    pub fn identity(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
        }
    }

    pub fn from_one_based(order: &[usize]) -> Result<Self> {
        if order.contains(&0) {
            return Err(Error::InvalidPolicy("indices are 1-based; got 0".into()));
        }
        Self::new(order.iter().map(|&i| i - 1).collect())
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.order.iter().map(|&i| i + 1).collect()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.order
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn is_complete(&self, n: usize) -> bool {
        self.order.len() == n
    }

    /// Checks every index is a variable of `inst`.
    pub fn validate_for(&self, inst: &Instance) -> Result<()> {
        match self.order.iter().find(|&&i| i >= inst.n()) {
            Some(&i) => Err(Error::InvalidPolicy(format!(
                "index {} is out of range for n = {}",
                i + 1,
                inst.n()
            ))),
            None => Ok(()),
        }
    }

    /// The first `len` tests (or all of them if shorter).
    pub fn prefix(&self, len: usize) -> Self {
        Self {
            order: self.order[..len.min(self.order.len())].to_vec(),
        }
    }

    /// Tests `self` in order, then `other`, skipping tests already made.
    pub fn compose(&self, other: &PartialPolicy) -> PartialPolicy {
        let mut order = self.order.clone();
        let bound = order
            .iter()
            .chain(&other.order)
            .max()
            .map_or(0, |&m| m + 1);
        let mut seen = vec![false; bound];
        for &i in &order {
            seen[i] = true;
        }
        for &i in &other.order {
            if !std::mem::replace(&mut seen[i], true) {
                order.push(i);
            }
        }
        PartialPolicy { order }
    }

    /// Appends all untested variables in ascending index order.
    pub fn pad_complete(&self, n: usize) -> PartialPolicy {
        let mut seen = vec![false; n.max(self.order.iter().max().map_or(0, |&m| m + 1))];
        for &i in &self.order {
            seen[i] = true;
        }
        let mut order = self.order.clone();
        order.extend((0..n).filter(|&i| !seen[i]));
        PartialPolicy { order }
    }

    /// Mapping of a policy on the sorted instance back to input indices.
    pub fn map_indices(&self, index_map: &[usize]) -> PartialPolicy {
        PartialPolicy {
            order: self.order.iter().map(|&i| index_map[i]).collect(),
        }
    }
}

/// Serialized as a 1-based index array.
impl Serialize for PartialPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_one_based().serialize(s)
    }
}

/// Inverse of a permutation.
pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (pos, &i) in perm.iter().enumerate() {
        inv[i] = pos;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pp(one_based: &[usize]) -> PartialPolicy {
        PartialPolicy::from_one_based(one_based).unwrap()
    }

    #[test]
    fn normalize_sorts_two_elements() {
        let (inst, map) = normalize(&[0.9, 0.1], &[1, 1], 1).unwrap();
        assert_eq!(inst.probs(), &[0.1, 0.9]);
        assert_eq!(map, vec![1, 0]);
    }

    #[test]
    fn normalize_is_stable_on_ties() {
        let (_, map) = normalize(&[0.5, 0.5, 0.5], &[1, 1, 1], 2).unwrap();
        assert_eq!(map, vec![0, 1, 2]);
    }

    #[test]
    fn normalize_three() {
        let (inst, map) = normalize(&[0.3, 0.1, 0.2], &[3, 1, 2], 2).unwrap();
        assert_eq!(inst.probs(), &[0.1, 0.2, 0.3]);
        assert_eq!(map, vec![1, 2, 0]);
        assert_eq!(inst.costs(), &[1, 2, 3]);
    }

    #[test]
    fn normalize_rejects_bad_input() {
        assert!(normalize(&[0.0, 0.5], &[1, 1], 1).is_err());
        assert!(normalize(&[1.0, 0.5], &[1, 1], 1).is_err());
        assert!(normalize(&[0.5, 0.5], &[1, 1], 0).is_err());
        assert!(normalize(&[0.5, 0.5], &[1, 1], 3).is_err());
        assert!(normalize(&[0.5, 0.5], &[1], 1).is_err());
        assert!(normalize(&[f64::NAN], &[1], 1).is_err());
    }

    #[test]
    fn new_requires_sorted() {
        assert!(Instance::unit(1, vec![0.9, 0.1]).is_err());
        assert!(Instance::unit(1, vec![0.1, 0.9]).is_ok());
    }

    #[test]
    fn json_parses_and_defaults_costs() {
        let f = InstanceFile::from_json(r#"{"k": 2, "p": [0.3, 0.1, 0.2]}"#).unwrap();
        let (inst, map) = f.normalize().unwrap();
        assert_eq!(inst.costs(), &[1, 1, 1]);
        assert_eq!(map, vec![1, 2, 0]);
        assert!(InstanceFile::from_json(r#"{"k": 1, "p": [0.0]}"#)
            .unwrap()
            .normalize()
            .is_err());
        assert!(InstanceFile::from_json(r#"{"k": 1, "p": [1]}"#)
            .unwrap()
            .normalize()
            .is_err());
        assert!(InstanceFile::from_json(r#"{"k": 1}"#).is_err());
    }

    #[test]
    fn determination_examples() {
        let inst = Instance::unit(2, vec![0.5; 3]).unwrap();
        let d = |o, z| is_determined(DeterminationState::new(o, z), &inst);
        assert_eq!(d(2, 0), Determination::Value1);
        assert_eq!(d(0, 2), Determination::Value0);
        assert_eq!(d(1, 1), Determination::Undetermined);
    }

    #[test]
    fn compose_examples() {
        assert_eq!(pp(&[1, 2]).compose(&pp(&[2, 3])), pp(&[1, 2, 3]));
        assert_eq!(pp(&[3, 1]).compose(&PartialPolicy::empty()), pp(&[3, 1]));
        assert_eq!(PartialPolicy::empty().compose(&pp(&[3, 1])), pp(&[3, 1]));
    }

    #[test]
    fn pad_complete_examples() {
        assert_eq!(pp(&[3, 1]).pad_complete(4), pp(&[3, 1, 2, 4]));
        assert_eq!(pp(&[1, 2]).pad_complete(2), pp(&[1, 2]));
        assert_eq!(PartialPolicy::empty().pad_complete(3), pp(&[1, 2, 3]));
    }

    #[test]
    fn policy_rejects_repeats() {
        assert!(PartialPolicy::new(vec![0, 1, 0]).is_err());
        assert!(PartialPolicy::from_one_based(&[0]).is_err());
        let inst = Instance::unit(1, vec![0.5, 0.5]).unwrap();
        assert!(pp(&[3]).validate_for(&inst).is_err());
    }

    fn arb_policy(n: usize) -> impl Strategy<Value = PartialPolicy> {
        (Just((0..n).collect::<Vec<_>>()).prop_shuffle(), 0..=n)
            .prop_map(|(v, len)| PartialPolicy::new(v[..len].to_vec()).unwrap())
    }

    proptest! {
        #[test]
        fn full_outcome_is_always_determined(k in 1usize..10, extra in 0usize..10, ones_frac in 0.0f64..1.0) {
            let n = k + extra;
            let inst = Instance::unit(k, vec![0.5; n]).unwrap();
            let ones = ((n as f64) * ones_frac) as usize;
            let d = is_determined(DeterminationState::new(ones, n - ones), &inst);
            prop_assert_ne!(d, Determination::Undetermined);
        }

        #[test]
        fn compose_is_associative_and_idempotent(a in arb_policy(7), b in arb_policy(7), c in arb_policy(7)) {
            prop_assert_eq!(a.compose(&b).compose(&c), a.compose(&b.compose(&c)));
            prop_assert_eq!(a.compose(&a), a.clone());
        }

        #[test]
        fn pad_complete_keeps_prefix(a in arb_policy(9)) {
            let full = a.pad_complete(9);
            prop_assert_eq!(full.len(), 9);
            prop_assert_eq!(&full.as_slice()[..a.len()], a.as_slice());
            prop_assert!(PartialPolicy::new(full.into_vec()).is_ok());
        }
    }
}
