//! Agent identifiers and compact agent sets.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Largest supported agent count; agent sets are 64-bit masks.
pub const MAX_AGENTS: usize = 64;

/// A 1-based agent index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(u8);

impl AgentId {
    /// Panics if `index` is 0 or above [`MAX_AGENTS`].
    pub fn new(index: usize) -> Self {
        assert!(
            (1..=MAX_AGENTS).contains(&index),
            "agent index {index} outside 1..={MAX_AGENTS}"
        );
        AgentId(index as u8)
    }

    pub fn try_new(index: usize) -> Option<Self> {
        (1..=MAX_AGENTS).contains(&index).then_some(AgentId(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Zero-based slot, for indexing per-agent vectors.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }

    /// All agents `1..=n` in ascending order.
    pub fn all(n: usize) -> impl DoubleEndedIterator<Item = AgentId> + Clone {
        (1..=n).map(AgentId::new)
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A set of agents stored as a bitmask.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentSet(u64);

impl AgentSet {
    pub const EMPTY: AgentSet = AgentSet(0);

    pub fn from_bits(bits: u64) -> Self {
        AgentSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn singleton(a: AgentId) -> Self {
        AgentSet(1 << a.slot())
    }

    pub fn all(n: usize) -> Self {
        if n >= 64 {
            AgentSet(u64::MAX)
        } else {
            AgentSet((1u64 << n) - 1)
        }
    }

    pub fn contains(self, a: AgentId) -> bool {
        self.0 & (1 << a.slot()) != 0
    }

    pub fn insert(&mut self, a: AgentId) -> bool {
        let fresh = !self.contains(a);
        self.0 |= 1 << a.slot();
        fresh
    }

    pub fn remove(&mut self, a: AgentId) {
        self.0 &= !(1 << a.slot());
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: AgentSet) -> AgentSet {
        AgentSet(self.0 | other.0)
    }

    pub fn intersection(self, other: AgentSet) -> AgentSet {
        AgentSet(self.0 & other.0)
    }

    pub fn difference(self, other: AgentSet) -> AgentSet {
        AgentSet(self.0 & !other.0)
    }

    pub fn is_disjoint(self, other: AgentSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn is_subset(self, other: AgentSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Members in ascending id order.
    pub fn iter(self) -> impl Iterator<Item = AgentId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let slot = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            Some(AgentId::new(slot + 1))
        })
    }

    pub fn to_vec(self) -> Vec<AgentId> {
        self.iter().collect()
    }
}

impl FromIterator<AgentId> for AgentSet {
    fn from_iter<I: IntoIterator<Item = AgentId>>(iter: I) -> Self {
        let mut s = AgentSet::EMPTY;
        for a in iter {
            s.insert(a);
        }
        s
    }
}

impl fmt::Debug for AgentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|a| a.index())).finish()
    }
}

impl fmt::Display for AgentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, a) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "}}")
    }
}

impl Serialize for AgentSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for AgentSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let ids = Vec::<usize>::deserialize(d)?;
        ids.into_iter()
            .map(|i| {
                AgentId::try_new(i)
                    .ok_or_else(|| serde::de::Error::custom(format!("agent id {i} out of range")))
            })
            .collect()
    }
}
