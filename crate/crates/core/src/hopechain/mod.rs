//! Hope chains: extraction from local histories via a trust table, set
//! difference by agents, and maximum disjoint packing.

mod packing;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentId, AgentSet};
use crate::epistemics::Formula;
use crate::error::{Error, Result};
use crate::model::{Hap, LocalHistory, MessageId};

pub use packing::{max_disjoint, pairwise_disjoint, Packing, DEFAULT_CHAIN_CAP};

/// A non-empty agent sequence, relaying sender first, origin last.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HopeChain(Vec<AgentId>);

impl HopeChain {
    pub fn new(seq: Vec<AgentId>) -> Self {
        assert!(!seq.is_empty(), "hope chain must be non-empty");
        HopeChain(seq)
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.0
    }

    pub fn agent_set(&self) -> AgentSet {
        self.0.iter().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn head(&self) -> AgentId {
        self.0[0]
    }

    pub fn is_repetition_free(&self) -> bool {
        self.agent_set().len() == self.0.len()
    }

    pub fn contains(&self, a: AgentId) -> bool {
        self.0.contains(&a)
    }
}

impl fmt::Debug for HopeChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for HopeChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (k, a) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

pub type ChainSet = BTreeSet<HopeChain>;

/// `H_{σ1} H_{σ2} … H_{σk} φ`; the empty sequence gives `φ`.
pub fn nested_hope(seq: &[AgentId], phi: &Formula) -> Formula {
    seq.iter()
        .rev()
        .fold(phi.clone(), |acc, &i| Formula::hope(i, acc))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustEntry {
    pub formula: Formula,
    /// Carried chain, possibly empty.
    pub chain: Vec<AgentId>,
}

/// Which messages are trustworthy for which nested hope: an entry
/// `(j, i, μ) ↦ (φ, σ̄)` says `j` sends `μ` to `i` only while believing
/// `H̄_σ̄ φ`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrustTable {
    entries: BTreeMap<(AgentId, AgentId, MessageId), TrustEntry>,
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    from: AgentId,
    to: AgentId,
    msg: MessageId,
    formula: Formula,
    #[serde(default)]
    chain: Vec<AgentId>,
}

impl TrustTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry; a conflicting redeclaration is an error.
    pub fn insert(&mut self, from: AgentId, to: AgentId, msg: MessageId, entry: TrustEntry) -> Result<()> {
        match self.entries.get(&(from, to, msg.clone())) {
            Some(old) if *old != entry => Err(Error::Precondition(format!(
                "conflicting trust entries for ({from},{to},{msg})"
            ))),
            _ => {
                self.entries.insert((from, to, msg), entry);
                Ok(())
            }
        }
    }

    pub fn get(&self, from: AgentId, to: AgentId, msg: &MessageId) -> Option<&TrustEntry> {
        self.entries.get(&(from, to, msg.clone()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(AgentId, AgentId, MessageId), &TrustEntry)> {
        self.entries.iter()
    }

    /// Distinct base formulas, in order.
    pub fn formulas(&self) -> BTreeSet<&Formula> {
        self.entries.values().map(|e| &e.formula).collect()
    }
}

impl Serialize for TrustTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.entries.iter().map(|((from, to, msg), e)| EntryRecord {
            from: *from,
            to: *to,
            msg: msg.clone(),
            formula: e.formula.clone(),
            chain: e.chain.clone(),
        }))
    }
}

impl<'de> Deserialize<'de> for TrustTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let mut t = TrustTable::new();
        for r in Vec::<EntryRecord>::deserialize(d)? {
            t.insert(
                r.from,
                r.to,
                r.msg,
                TrustEntry {
                    formula: r.formula,
                    chain: r.chain,
                },
            )
            .map_err(serde::de::Error::custom)?;
        }
        Ok(t)
    }
}

/// Every chain `(j)∘σ̄` such that `recv(j,μ)` is in `h` and the trust table
/// maps `(j, i, μ)` to `(φ, σ̄)`.
pub fn extract_chains_all(h: &LocalHistory, i: AgentId, phi: &Formula, trust: &TrustTable) -> ChainSet {
    let mut out = ChainSet::new();
    for hap in h.haps() {
        if let Hap::Recv { from, msg } = hap {
            if let Some(e) = trust.get(*from, i, msg) {
                if e.formula == *phi {
                    let mut seq = Vec::with_capacity(e.chain.len() + 1);
                    seq.push(*from);
                    seq.extend_from_slice(&e.chain);
                    out.insert(HopeChain(seq));
                }
            }
        }
    }
    out
}

/// The repetition-free part of [`extract_chains_all`].
pub fn extract_chains(h: &LocalHistory, i: AgentId, phi: &Formula, trust: &TrustTable) -> ChainSet {
    extract_chains_all(h, i, phi, trust)
        .into_iter()
        .filter(HopeChain::is_repetition_free)
        .collect()
}

/// Chains that avoid every agent of `s`.
pub fn chains_minus(chains: &ChainSet, s: AgentSet) -> ChainSet {
    chains
        .iter()
        .filter(|c| c.agent_set().is_disjoint(s))
        .cloned()
        .collect()
}

/// Whether at least `f − |F| + 1` disjoint chains survive removing `F`.
pub fn threshold_belief(chains: &ChainSet, believed_faulty: AgentSet, f: usize) -> Result<bool> {
    if believed_faulty.len() > f {
        return Err(Error::Precondition(format!(
            "|F| = {} exceeds f = {f}",
            believed_faulty.len()
        )));
    }
    let p = max_disjoint(&chains_minus(chains, believed_faulty), DEFAULT_CHAIN_CAP)?;
    Ok(p.size > f - believed_faulty.len())
}
