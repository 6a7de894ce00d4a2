//! Exact maximum set packing over hope chains.

use super::{ChainSet, HopeChain};
use crate::error::{Error, Result};

/// Largest chain set accepted by [`max_disjoint`] unless a caller passes
/// another cap.
pub const DEFAULT_CHAIN_CAP: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Packing {
    pub size: usize,
    /// Pairwise agent-disjoint chains, in chain-set order.
    pub witness: Vec<HopeChain>,
}

/// Maximum number of pairwise agent-disjoint chains, with a witness.
///
/// Among optimal packings the witness is the lexicographically first one
/// with respect to the chain-set order.
pub fn max_disjoint(chains: &ChainSet, cap: usize) -> Result<Packing> {
    if chains.len() > cap {
        return Err(Error::CapExceeded {
            what: "chain set",
            count: chains.len() as u64,
            cap: cap as u64,
        });
    }
    let items: Vec<&HopeChain> = chains.iter().collect();
    let masks: Vec<u64> = items.iter().map(|c| c.agent_set().bits()).collect();

    let mut search = Search {
        masks: &masks,
        best: greedy_size(&masks).saturating_sub(1),
        best_pick: Vec::new(),
        pick: Vec::new(),
    };
    search.dfs(0, 0);
    let witness: Vec<HopeChain> = search.best_pick.iter().map(|&k| items[k].clone()).collect();
    Ok(Packing {
        size: witness.len(),
        witness,
    })
}

fn greedy_size(masks: &[u64]) -> usize {
    let mut order: Vec<usize> = (0..masks.len()).collect();
    order.sort_by_key(|&k| (masks[k].count_ones(), k));
    let mut used = 0u64;
    let mut n = 0;
    for k in order {
        if masks[k] & used == 0 {
            used |= masks[k];
            n += 1;
        }
    }
    n
}

struct Search<'a> {
    masks: &'a [u64],
    best: usize,
    best_pick: Vec<usize>,
    pick: Vec<usize>,
}

impl Search<'_> {
    /// Upper bound on chains addable from `from` on: compatible chains
    /// left, capped by the free agents they cover.
    fn bound(&self, from: usize, used: u64) -> usize {
        let mut count = 0;
        let mut cover = 0u64;
        for &m in &self.masks[from..] {
            if m & used == 0 {
                count += 1;
                cover |= m;
            }
        }
        count.min(cover.count_ones() as usize)
    }

    fn dfs(&mut self, from: usize, used: u64) {
        if self.pick.len() > self.best {
            self.best = self.pick.len();
            self.best_pick = self.pick.clone();
        }
        for k in from..self.masks.len() {
            let m = self.masks[k];
            if m & used != 0 {
                continue;
            }
            if self.pick.len() + self.bound(k, used) <= self.best {
                return;
            }
            self.pick.push(k);
            self.dfs(k + 1, used | m);
            self.pick.pop();
        }
    }
}

/// Independent disjointness check on agent sequences.
pub fn pairwise_disjoint(chains: &[HopeChain]) -> bool {
    for (k, a) in chains.iter().enumerate() {
        for b in &chains[k + 1..] {
            if a.agents().iter().any(|x| b.agents().contains(x)) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentId;

    fn ch(xs: &[usize]) -> HopeChain {
        HopeChain::new(xs.iter().map(|&i| AgentId::new(i)).collect())
    }

    fn cs(v: &[&[usize]]) -> ChainSet {
        v.iter().map(|x| ch(x)).collect()
    }

    #[test]
    fn small_cases() {
        assert_eq!(max_disjoint(&cs(&[&[2, 3], &[3, 4]]), 64).unwrap().size, 1);
        assert_eq!(max_disjoint(&cs(&[&[2], &[3], &[4]]), 64).unwrap().size, 3);
        assert_eq!(max_disjoint(&ChainSet::new(), 64).unwrap().size, 0);
        let p = max_disjoint(&cs(&[&[1, 2], &[2, 3], &[3, 4]]), 64).unwrap();
        assert_eq!(p.size, 2);
        assert_eq!(p.witness, vec![ch(&[1, 2]), ch(&[3, 4])]);
    }

    #[test]
    fn greedy_is_not_optimal_here() {
        // shortest-first greedy takes (2,3) and blocks both others
        let s = cs(&[&[1, 2, 6], &[2, 3], &[3, 4, 5]]);
        assert_eq!(greedy_size(&s.iter().map(|c| c.agent_set().bits()).collect::<Vec<_>>()), 1);
        assert_eq!(max_disjoint(&s, 64).unwrap().size, 2);
    }

    #[test]
    fn cap_is_enforced() {
        let s = cs(&[&[1], &[2], &[3]]);
        assert!(matches!(max_disjoint(&s, 2), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn witness_is_lexicographically_first_optimum() {
        let s = cs(&[&[1], &[2], &[1, 3]]);
        let p = max_disjoint(&s, 64).unwrap();
        assert_eq!(p.witness, vec![ch(&[1]), ch(&[2])]);
        assert!(pairwise_disjoint(&p.witness));
    }
}
