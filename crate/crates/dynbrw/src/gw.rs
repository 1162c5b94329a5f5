//! Galton--Watson trees, static and dynamical, with a fixed breadth-first
//! enumeration.
//!
//! Node ids are dense integers assigned in BFS order, so ids within a level
//! increase left to right and the enumeration is stable: it is chosen once
//! when the tree is built and never changes, which is what the tie-breaking
//! in the walk engine relies on.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::dynamics::RandomStream;
use crate::{Error, Result};

/// Default cap on materialized nodes; `m^depth` grows fast and an explicit
/// refusal beats silent memory exhaustion.
pub const DEFAULT_NODE_BUDGET: usize = 10_000_000;

/// Offspring distribution on {1, 2, ...} with mean > 1. Mass at 0 is
/// excluded so the process survives, and mean 1 (the deterministic chain)
/// is excluded as trivial.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OffspringLaw {
    support: Vec<u32>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
    mean: f64,
}

impl OffspringLaw {
    pub fn new(support: Vec<u32>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(Error::InvalidLaw(
                "offspring support and probabilities must be nonempty and of equal length".into(),
            ));
        }
        if support.contains(&0) {
            return Err(Error::InvalidLaw(
                "offspring support excludes 0 (the process must survive)".into(),
            ));
        }
        if probs.iter().any(|&p| p <= 0.0 || !p.is_finite()) {
            return Err(Error::InvalidLaw("probabilities must be strictly positive".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidLaw(format!(
                "offspring probabilities sum to {total}, expected 1 within 1e-12"
            )));
        }
        let mean: f64 = support
            .iter()
            .zip(&probs)
            .map(|(&k, &p)| k as f64 * p)
            .sum();
        if mean <= 1.0 {
            return Err(Error::InvalidLaw(format!(
                "offspring mean {mean} must exceed 1"
            )));
        }
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cumulative.push(acc);
        }
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(OffspringLaw {
            support,
            probs,
            cumulative,
            mean,
        })
    }

    pub fn point_mass(k: u32) -> Result<Self> {
        OffspringLaw::new(vec![k], vec![1.0])
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn support(&self) -> &[u32] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.support[idx.min(self.support.len() - 1)]
    }
}

/// A finite-depth rooted tree with BFS node ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GwTree {
    parents: Vec<u32>, // parents[0] is unused (root sentinel 0)
    depths: Vec<u32>,
    children: Vec<Vec<u32>>,
    levels: Vec<Vec<u32>>,
}

pub const ROOT: u32 = 0;

impl GwTree {
    /// Builds a tree from a parent array. Node 0 must be the root
    /// (parent `None`), parents must precede children, and ids must be in
    /// BFS order (depths nondecreasing).
    pub fn from_parents(parents: &[Option<u32>]) -> Result<GwTree> {
        if parents.is_empty() || parents[0].is_some() {
            return Err(Error::InvalidParameter(
                "node 0 must be the parentless root".into(),
            ));
        }
        let n = parents.len();
        let mut depths = vec![0u32; n];
        let mut children: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut flat_parents = vec![0u32; n];
        for (i, p) in parents.iter().enumerate().skip(1) {
            let p = p.ok_or_else(|| {
                Error::InvalidParameter(format!("node {i} has no parent but is not the root"))
            })? as usize;
            if p >= i {
                return Err(Error::InvalidParameter(format!(
                    "node {i} has parent {p} >= its own id"
                )));
            }
            depths[i] = depths[p] + 1;
            flat_parents[i] = p as u32;
            children[p].push(i as u32);
        }
        if depths.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter(
                "ids are not in BFS order: depths decrease".into(),
            ));
        }
        let max_depth = *depths.last().unwrap_or(&0) as usize;
        let mut levels: Vec<Vec<u32>> = vec![Vec::new(); max_depth + 1];
        for (i, &d) in depths.iter().enumerate() {
            levels[d as usize].push(i as u32);
        }
        Ok(GwTree {
            parents: flat_parents,
            depths,
            children,
            levels,
        })
    }

    pub fn node_count(&self) -> usize {
        self.parents.len()
    }

    /// Number of levels below the root (the deepest generated generation).
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// Node ids at depth n, in BFS order.
    pub fn level(&self, n: usize) -> &[u32] {
        &self.levels[n]
    }

    pub fn levels(&self) -> &[Vec<u32>] {
        &self.levels
    }

    pub fn parent(&self, v: u32) -> Option<u32> {
        (v != ROOT).then(|| self.parents[v as usize])
    }

    pub fn node_depth(&self, v: u32) -> usize {
        self.depths[v as usize] as usize
    }

    pub fn children(&self, v: u32) -> &[u32] {
        &self.children[v as usize]
    }

    /// The k-th predecessor v^{-k}: the ancestor at depth |v| - k.
    pub fn kth_predecessor(&self, v: u32, k: usize) -> Result<u32> {
        if k > self.node_depth(v) {
            return Err(Error::OutOfRange(format!(
                "k={k} exceeds depth {} of node {v}",
                self.node_depth(v)
            )));
        }
        let mut cur = v;
        for _ in 0..k {
            cur = self.parents[cur as usize];
        }
        Ok(cur)
    }

    /// The depth-(|v|+k) nodes whose geodesic to the root passes through v,
    /// in BFS order.
    pub fn descendants_at(&self, v: u32, k: usize) -> Result<Vec<u32>> {
        if self.node_depth(v) + k > self.depth() {
            return Err(Error::OutOfRange(format!(
                "level {} out of range (tree depth {})",
                self.node_depth(v) + k,
                self.depth()
            )));
        }
        let mut frontier = vec![v];
        for _ in 0..k {
            let mut next = Vec::with_capacity(frontier.len() * 2);
            for &u in &frontier {
                next.extend_from_slice(self.children(u));
            }
            frontier = next;
        }
        Ok(frontier)
    }

    /// Flat (id, parent, depth) rows; the root's parent column is empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,parent,depth\n");
        for i in 0..self.node_count() {
            let parent = self
                .parent(i as u32)
                .map(|p| p.to_string())
                .unwrap_or_default();
            out.push_str(&format!("{i},{parent},{}\n", self.depths[i]));
        }
        out
    }
}

/// Samples a Galton--Watson tree of exactly `depth` levels.
pub fn sample_tree<R: Rng + ?Sized>(
    mu: &OffspringLaw,
    depth: usize,
    budget: usize,
    rng: &mut R,
) -> Result<GwTree> {
    let mut parents: Vec<Option<u32>> = vec![None];
    let mut level_start = 0usize;
    let mut level_end = 1usize;
    for level in 0..depth {
        for v in level_start..level_end {
            let offspring = mu.sample(rng);
            for _ in 0..offspring {
                parents.push(Some(v as u32));
                if parents.len() > budget {
                    return Err(Error::NodeBudgetExceeded {
                        budget,
                        level: level + 1,
                    });
                }
            }
        }
        level_start = level_end;
        level_end = parents.len();
    }
    GwTree::from_parents(&parents)
}

/// Piecewise-constant offspring-count history of one prospective node.
#[derive(Clone, Debug)]
struct CountHistory {
    events: Vec<f64>,
    values: Vec<u32>,
}

impl CountHistory {
    fn sample<R: Rng + ?Sized>(mu: &OffspringLaw, horizon: f64, rng: &mut R) -> Self {
        let mut events = Vec::new();
        let mut values = vec![mu.sample(rng)];
        let mut t: f64 = rng.sample::<f64, _>(Exp1);
        while t <= horizon {
            events.push(t);
            values.push(mu.sample(rng));
            t += rng.sample::<f64, _>(Exp1);
        }
        CountHistory { events, values }
    }

    fn count_at(&self, t: f64) -> u32 {
        self.values[self.events.partition_point(|&e| e <= t)]
    }

    fn max_count(&self) -> u32 {
        *self.values.iter().max().expect("nonempty")
    }
}

/// A dynamical Galton--Watson tree over a finite horizon: every prospective
/// node carries a Poisson-refreshed offspring count, and the tree induced at
/// any fixed time t is a static realization with the same law.
///
/// Storage materializes the union over all event times (each node keeps its
/// maximal offspring count worth of children), so subtree identities are
/// stable across t; `tree_at` carves out the snapshot in force at t.
#[derive(Clone, Debug)]
pub struct DynamicalGwTree {
    horizon: f64,
    parents: Vec<u32>,
    children: Vec<Vec<u32>>,
    depths: Vec<u32>,
    counts: Vec<CountHistory>,
    depth: usize,
}

impl DynamicalGwTree {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Supertree node count (union over event times).
    pub fn node_count(&self) -> usize {
        self.parents.len()
    }

    /// Poisson events of one node's offspring clock.
    pub fn clock_events(&self, v: u32) -> &[f64] {
        &self.counts[v as usize].events
    }

    /// Generation of a supertree node.
    pub fn node_depth(&self, v: u32) -> usize {
        self.depths[v as usize] as usize
    }

    /// The static tree in force at time t.
    pub fn tree_at(&self, t: f64) -> Result<GwTree> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfRange(format!(
                "t={t} outside [0, {}]",
                self.horizon
            )));
        }
        // BFS over active nodes, assigning fresh dense ids
        let mut parents: Vec<Option<u32>> = vec![None];
        let mut frontier: Vec<(u32, u32)> = vec![(0, 0)]; // (super id, new id)
        for _ in 0..self.depth {
            let mut next = Vec::new();
            for &(sup, new_id) in &frontier {
                let count = self.counts[sup as usize].count_at(t) as usize;
                for &child in self.children[sup as usize].iter().take(count) {
                    let id = parents.len() as u32;
                    parents.push(Some(new_id));
                    next.push((child, id));
                }
            }
            frontier = next;
        }
        GwTree::from_parents(&parents)
    }
}

/// Samples a dynamical Galton--Watson tree of `depth` levels over
/// [0, horizon]. Per-node clock streams are derived from the node's
/// supertree id, so the realization does not depend on traversal order.
pub fn sample_dynamical_tree(
    mu: &OffspringLaw,
    depth: usize,
    horizon: f64,
    budget: usize,
    stream: &RandomStream,
) -> Result<DynamicalGwTree> {
    let mut parents: Vec<u32> = vec![0];
    let mut depths: Vec<u32> = vec![0];
    let mut children: Vec<Vec<u32>> = vec![Vec::new()];
    let mut counts: Vec<CountHistory> = Vec::new();
    let mut level_start = 0usize;
    let mut level_end = 1usize;
    for level in 0..depth {
        for v in level_start..level_end {
            let mut rng = stream.derive("gw-node", v as u64).rng();
            let history = CountHistory::sample(mu, horizon, &mut rng);
            let max = history.max_count();
            counts.push(history);
            for _ in 0..max {
                let id = parents.len() as u32;
                parents.push(v as u32);
                depths.push(level as u32 + 1);
                children.push(Vec::new());
                children[v].push(id);
                if parents.len() > budget {
                    return Err(Error::NodeBudgetExceeded {
                        budget,
                        level: level + 1,
                    });
                }
            }
        }
        level_start = level_end;
        level_end = parents.len();
    }
    // leaves at the final level need histories too so every node has a clock
    for v in level_start..level_end {
        let mut rng = stream.derive("gw-node", v as u64).rng();
        counts.push(CountHistory::sample(mu, horizon, &mut rng));
    }
    Ok(DynamicalGwTree {
        horizon,
        parents,
        children,
        depths,
        counts,
        depth,
    })
}
