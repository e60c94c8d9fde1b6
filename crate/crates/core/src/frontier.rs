//! Loss-ranked frontier of the search tree and rank sampling.
//!
//! The frontier holds the `capacity` lowest-loss node ids in ascending loss
//! order (ties by id). Node losses never change after insertion, so the
//! frontier is refreshed by merging only the nodes added since the last
//! update.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::SearchTree;

/// How a rank is drawn from the frontier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FrontierPolicy {
    /// `p(k) ∝ kappa^k` over the current ranks.
    TruncGeometric { kappa: f64 },
    Uniform,
    /// Uniform over the best `k` ranks.
    TopK { k: usize },
}

impl Default for FrontierPolicy {
    fn default() -> Self {
        FrontierPolicy::TruncGeometric { kappa: 0.9 }
    }
}

/// Probability of rank `k` under the truncated geometric distribution with
/// ratio `kappa` over `m` ranks. `kappa = 0` puts all mass on rank 0.
pub fn p_frontier(k: usize, kappa: f64, m: usize) -> Result<f64> {
    if k >= m {
        return Err(Error::RankOutOfRange { rank: k, size: m });
    }
    if !(0.0..1.0).contains(&kappa) {
        return Err(Error::InvalidParam(format!("kappa = {kappa} must lie in [0, 1)")));
    }
    Ok((1.0 - kappa) * kappa.powi(k as i32) / (1.0 - kappa.powi(m as i32)))
}

/// Inverse-CDF draw of a rank in `0..m`.
fn sample_trunc_geometric<R: Rng + ?Sized>(kappa: f64, m: usize, rng: &mut R) -> usize {
    if kappa <= 0.0 || m <= 1 {
        return 0;
    }
    // P(rank <= k) = (1 - kappa^(k+1)) / (1 - kappa^m)
    let u: f64 = rng.random();
    let mass = 1.0 - kappa.powi(m as i32);
    let k = ((1.0 - u * mass).ln() / kappa.ln()).floor();
    if k.is_finite() && k > 0.0 {
        (k as usize).min(m - 1)
    } else {
        0
    }
}

#[derive(Debug, Clone)]
pub struct FrontierSet {
    ranked: Vec<usize>,
    losses: Vec<f64>,
    capacity: usize,
    policy: FrontierPolicy,
    seen: usize,
}

impl FrontierSet {
    pub fn new(capacity: usize, policy: FrontierPolicy) -> Self {
        FrontierSet {
            ranked: Vec::with_capacity(capacity),
            losses: Vec::with_capacity(capacity),
            capacity: capacity.max(1),
            policy,
            seen: 0,
        }
    }

    pub fn ranked(&self) -> &[usize] {
        &self.ranked
    }

    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn policy(&self) -> FrontierPolicy {
        self.policy
    }

    pub fn contains(&self, id: usize) -> bool {
        self.ranked.contains(&id)
    }

    /// Loss of the rank-0 node.
    pub fn best_loss(&self) -> Option<f64> {
        self.losses.first().copied()
    }

    pub fn best(&self) -> Option<usize> {
        self.ranked.first().copied()
    }

    /// Merges nodes added to `tree` since the previous update.
    pub fn update(&mut self, tree: &SearchTree) {
        let nodes = tree.nodes();
        if self.seen > nodes.len() {
            // a different (smaller) tree: rebuild from scratch
            self.ranked.clear();
            self.losses.clear();
            self.seen = 0;
        }
        if self.seen == nodes.len() {
            return;
        }
        let mut merged: Vec<(f64, usize)> = self
            .losses
            .iter()
            .copied()
            .zip(self.ranked.iter().copied())
            .chain(nodes[self.seen..].iter().map(|n| (n.loss, n.id)))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if merged.len() > self.capacity {
            merged.select_nth_unstable_by(self.capacity - 1, cmp);
            merged.truncate(self.capacity);
        }
        merged.sort_unstable_by(cmp);
        self.losses = merged.iter().map(|e| e.0).collect();
        self.ranked = merged.iter().map(|e| e.1).collect();
        self.seen = nodes.len();
    }

    /// Rank drawn according to the policy, over the current size.
    pub fn sample_rank<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let n = self.ranked.len();
        if n == 0 {
            return Err(Error::EmptyFrontier);
        }
        Ok(match self.policy {
            FrontierPolicy::TruncGeometric { kappa } => sample_trunc_geometric(kappa, n, rng),
            FrontierPolicy::Uniform => rng.random_range(0..n),
            FrontierPolicy::TopK { k } => rng.random_range(0..k.clamp(1, n)),
        })
    }

    /// Node id at a sampled rank.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        Ok(self.ranked[self.sample_rank(rng)?])
    }
}
