//! The tree-indexed walk and its dynamical machinery: positions, level
//! return counts, the occupation integral, first-hit times, freeze events,
//! the embedded process observed every k levels, the interval-infimum
//! process, and the supercriticality certificate.
//!
//! Every "for all t" statement is decided at breakpoint-sweep points only.
//! This is exact, not approximate: positions, return counts and surviving
//! sets are piecewise constant in t with breakpoints contained in the label
//! event times.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{sweep, DynamicalLabel, RandomStream};
use crate::group::{return_probabilities, GroupElement, GroupFamily, StepLaw};
use crate::gw::{sample_tree, GwTree, OffspringLaw, ROOT};
use crate::{Error, Result};

/// 99% one-sided normal quantile, used for certificate lower bounds.
const Z_99: f64 = 2.3263478740408408;

/// Per-edge label histories for a tree; the label at index v belongs to the
/// edge (parent(v), v). All labels share a common horizon.
#[derive(Clone, Debug)]
pub struct LabelSet {
    labels: Vec<Option<DynamicalLabel>>,
    horizon: f64,
}

impl LabelSet {
    /// Samples one label per tree edge, streams derived from the child node
    /// id so the realization is independent of sampling order.
    pub fn sample(law: &StepLaw, tree: &GwTree, horizon: f64, stream: &RandomStream) -> LabelSet {
        let labels = (0..tree.node_count() as u32)
            .map(|v| {
                (v != ROOT).then(|| {
                    DynamicalLabel::sample(v as u64, law, horizon, &stream.derive("edge", v as u64))
                })
            })
            .collect();
        LabelSet { labels, horizon }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn get(&self, v: u32) -> Result<&DynamicalLabel> {
        self.labels
            .get(v as usize)
            .and_then(|l| l.as_ref())
            .ok_or(Error::MissingLabel(v))
    }

    /// Extends every label to the new horizon; already-sampled history is
    /// unchanged.
    pub fn extend_all(&mut self, new_horizon: f64, law: &StepLaw) {
        if new_horizon <= self.horizon {
            return;
        }
        for label in self.labels.iter_mut().flatten() {
            label.extend(new_horizon, law);
        }
        self.horizon = new_horizon;
    }

    /// Labels of all edges into nodes at depth 1..=max_depth.
    pub fn to_depth<'a>(
        &'a self,
        tree: &'a GwTree,
        max_depth: usize,
    ) -> impl Iterator<Item = &'a DynamicalLabel> {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(v, l)| l.is_some() && tree.node_depth(*v as u32) <= max_depth)
            .map(|(_, l)| l.as_ref().unwrap())
    }

    pub fn iter(&self) -> impl Iterator<Item = &DynamicalLabel> {
        self.labels.iter().flatten()
    }
}

/// Positions and return count of one tree level at a fixed time.
#[derive(Clone, Debug)]
pub struct LevelSnapshot {
    pub level: usize,
    pub time: f64,
    /// S_v(t) for v in BFS order within the level.
    pub positions: Vec<GroupElement>,
    /// Number of level nodes at the identity.
    pub returns: usize,
}

/// S_v(t) for every node of depth <= max_depth, indexed by node id.
/// BFS ids put parents before children, so one forward pass suffices.
fn positions_vec(
    family: &GroupFamily,
    tree: &GwTree,
    labels: &LabelSet,
    t: f64,
    max_depth: usize,
) -> Result<Vec<GroupElement>> {
    let mut pos = Vec::with_capacity(tree.node_count());
    pos.push(family.identity());
    for v in 1..tree.node_count() as u32 {
        if tree.node_depth(v) > max_depth {
            break;
        }
        let parent = tree.parent(v).expect("non-root");
        let step = labels.get(v)?.value_at(t)?;
        pos.push(family.multiply(&pos[parent as usize], step)?);
    }
    Ok(pos)
}

/// Snapshots of every level at time t.
pub fn positions_at(
    family: &GroupFamily,
    tree: &GwTree,
    labels: &LabelSet,
    t: f64,
) -> Result<Vec<LevelSnapshot>> {
    let pos = positions_vec(family, tree, labels, t, tree.depth())?;
    let mut out = Vec::with_capacity(tree.depth() + 1);
    for (level, ids) in tree.levels().iter().enumerate() {
        let positions: Vec<GroupElement> =
            ids.iter().map(|&v| pos[v as usize].clone()).collect();
        let returns = positions.iter().filter(|p| p.is_identity()).count();
        out.push(LevelSnapshot {
            level,
            time: t,
            positions,
            returns,
        });
    }
    Ok(out)
}

/// Number of level-n nodes at the identity at time t.
pub fn returns_at(
    family: &GroupFamily,
    tree: &GwTree,
    labels: &LabelSet,
    t: f64,
    n: usize,
) -> Result<usize> {
    if n > tree.depth() {
        return Err(Error::OutOfRange(format!(
            "level {n} out of range (tree depth {})",
            tree.depth()
        )));
    }
    let pos = positions_vec(family, tree, labels, t, n)?;
    Ok(tree
        .level(n)
        .iter()
        .filter(|&&v| pos[v as usize].is_identity())
        .count())
}

/// The occupation integral of level n over [0, tau] with tau ~ Exp(1):
/// the exact integral of the return count, evaluated segment by segment on
/// the breakpoint sweep of the ancestral labels. Labels are extended in
/// place until they cover the drawn tau.
pub fn zeta_n<R: Rng + ?Sized>(
    family: &GroupFamily,
    law: &StepLaw,
    tree: &GwTree,
    labels: &mut LabelSet,
    n: usize,
    rng: &mut R,
) -> Result<f64> {
    let tau: f64 = rng.sample::<f64, _>(Exp1);
    labels.extend_all(tau, law);
    let sweep_points = sweep(labels.to_depth(tree, n), 0.0, tau)?;
    let mut total = 0.0;
    for (a, b) in sweep_points.segments() {
        let count = returns_at(family, tree, labels, a, n)?;
        total += (b - a) * count as f64;
    }
    Ok(total)
}

/// Exact first time in [0, horizon] at which some level-n node sits at the
/// identity; None if this never happens. Occupation can only switch on at a
/// label event on an ancestral path, so the answer is 0 or a sweep point.
pub fn sigma_first_hit(
    family: &GroupFamily,
    tree: &GwTree,
    labels: &LabelSet,
    n: usize,
    horizon: f64,
) -> Result<Option<f64>> {
    let sweep_points = sweep(labels.to_depth(tree, n), 0.0, horizon)?;
    for &t in sweep_points.points() {
        if returns_at(family, tree, labels, t, n)? > 0 {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// The BFS-least element of R = {v at level n : S_v(sigma) = e}.
pub fn smallest_hitting_node(
    family: &GroupFamily,
    tree: &GwTree,
    labels: &LabelSet,
    sigma: f64,
    n: usize,
) -> Result<u32> {
    let pos = positions_vec(family, tree, labels, sigma, n)?;
    tree.level(n)
        .iter()
        .copied()
        .find(|&v| pos[v as usize].is_identity())
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "no level-{n} node at the identity at t={sigma}"
            ))
        })
}

/// True iff every edge label on the geodesic from the root to v keeps its
/// value throughout [a, a+length].
pub fn a_event_holds(
    tree: &GwTree,
    labels: &LabelSet,
    v: u32,
    a: f64,
    length: f64,
) -> Result<bool> {
    let mut cur = v;
    while cur != ROOT {
        if !labels.get(cur)?.constant_on(a, a + length)? {
            return Ok(false);
        }
        cur = tree.parent(cur).expect("non-root");
    }
    Ok(true)
}

/// Smallest period k <= k_max with p^(k)(e,e) m^k > 1, from exact return
/// probabilities.
pub fn embedded_pick_k(
    family: &GroupFamily,
    law: &StepLaw,
    m: f64,
    k_max: usize,
) -> Result<usize> {
    if !(m > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mean offspring m={m} must exceed 1"
        )));
    }
    if k_max < 2 {
        return Err(Error::InvalidParameter("k_max must be >= 2".into()));
    }
    let p = return_probabilities(family, law, k_max, crate::group::DEFAULT_DEPTH_CAP)?;
    (1..=k_max)
        .find(|&k| p[k] * m.powi(k as i32) > 1.0)
        .ok_or(Error::NoEmbeddingPeriod { k_max })
}

/// The embedded process at one time: particles still alive after killing
/// everything off the identity at level multiples of k.
#[derive(Clone, Debug, Serialize)]
pub struct EmbeddedState {
    pub period: usize,
    /// 1-based index n; the surviving set lives at tree depth (n-1)k.
    pub level_index: usize,
    pub surviving: Vec<u32>,
    pub count: usize,
}

/// H_1(t) = {root}; H_{n+1}(t) = descendants k levels further down that sit
/// at the identity at time t and descend from a survivor.
pub fn embedded_process(
    family: &GroupFamily,
    tree: &GwTree,
    labels: &LabelSet,
    t: f64,
    k: usize,
    levels: usize,
) -> Result<Vec<EmbeddedState>> {
    if levels == 0 || k == 0 {
        return Err(Error::InvalidParameter("k and levels must be >= 1".into()));
    }
    let need = (levels - 1) * k;
    if need > tree.depth() {
        return Err(Error::OutOfRange(format!(
            "embedded process needs tree depth {need}, have {}",
            tree.depth()
        )));
    }
    let pos = positions_vec(family, tree, labels, t, need)?;
    let mut out = Vec::with_capacity(levels);
    let mut current = vec![ROOT];
    out.push(EmbeddedState {
        period: k,
        level_index: 1,
        surviving: current.clone(),
        count: 1,
    });
    for n in 2..=levels {
        let mut next = Vec::new();
        for &v in &current {
            for w in tree.descendants_at(v, k)? {
                if pos[w as usize].is_identity() {
                    next.push(w);
                }
            }
        }
        next.sort_unstable();
        out.push(EmbeddedState {
            period: k,
            level_index: n,
            surviving: next.clone(),
            count: next.len(),
        });
        current = next;
    }
    Ok(out)
}

/// Checks that the k-step path product from v to each of its depth-k
/// descendants equals the identity at every sweep point of the subtree
/// labels in [a, b]; returns the surviving descendants.
fn inf_surviving_descendants(
    family: &GroupFamily,
    tree: &GwTree,
    labels: &LabelSet,
    v: u32,
    k: usize,
    a: f64,
    b: f64,
) -> Result<Vec<u32>> {
    // collect the subtree of v down to depth k (excluding v), whose edge
    // labels are the only breakpoint sources for the path products
    let mut subtree = Vec::new();
    let mut frontier = vec![v];
    for _ in 0..k {
        let mut next = Vec::new();
        for &u in &frontier {
            next.extend_from_slice(tree.children(u));
        }
        subtree.extend_from_slice(&next);
        frontier = next;
    }
    let leaves = frontier;
    let sweep_points = sweep(
        subtree.iter().map(|&u| labels.get(u)).collect::<Result<Vec<_>>>()?,
        a,
        b,
    )?;
    let mut alive: Vec<u32> = leaves;
    for &t in sweep_points.points() {
        if alive.is_empty() {
            break;
        }
        // relative positions within the subtree at time t
        let mut rel: std::collections::HashMap<u32, GroupElement> =
            std::collections::HashMap::with_capacity(subtree.len() + 1);
        rel.insert(v, family.identity());
        for &u in &subtree {
            let parent = tree.parent(u).expect("non-root");
            let base = rel[&parent].clone();
            let step = labels.get(u)?.value_at(t)?;
            rel.insert(u, family.multiply(&base, step)?);
        }
        alive.retain(|w| rel[w].is_identity());
    }
    Ok(alive)
}

/// inf over [a, b] of Y_v: the number of depth-k descendants of v whose
/// position agrees with v's throughout the interval.
pub fn inf_y(
    family: &GroupFamily,
    tree: &GwTree,
    labels: &LabelSet,
    v: u32,
    k: usize,
    a: f64,
    b: f64,
) -> Result<usize> {
    Ok(inf_surviving_descendants(family, tree, labels, v, k, a, b)?.len())
}

/// Particles that survive the embedded killing throughout [a, b].
#[derive(Clone, Debug, Serialize)]
pub struct InfProcessState {
    pub interval: (f64, f64),
    pub level_index: usize,
    pub surviving: Vec<u32>,
    pub count: usize,
}

/// The interval-infimum process by the definitional recursion: survivors at
/// level index n+1 are descendants of interval-survivors whose path product
/// stays at the identity over the whole interval.
pub fn inf_embedded(
    family: &GroupFamily,
    tree: &GwTree,
    labels: &LabelSet,
    a: f64,
    b: f64,
    k: usize,
    levels: usize,
) -> Result<Vec<InfProcessState>> {
    if levels == 0 || k == 0 {
        return Err(Error::InvalidParameter("k and levels must be >= 1".into()));
    }
    let need = (levels - 1) * k;
    if need > tree.depth() {
        return Err(Error::OutOfRange(format!(
            "inf process needs tree depth {need}, have {}",
            tree.depth()
        )));
    }
    let mut out = Vec::with_capacity(levels);
    let mut current = vec![ROOT];
    out.push(InfProcessState {
        interval: (a, b),
        level_index: 1,
        surviving: current.clone(),
        count: 1,
    });
    for n in 2..=levels {
        let mut next = Vec::new();
        for &v in &current {
            next.extend(inf_surviving_descendants(family, tree, labels, v, k, a, b)?);
        }
        next.sort_unstable();
        out.push(InfProcessState {
            interval: (a, b),
            level_index: n,
            surviving: next.clone(),
            count: next.len(),
        });
        current = next;
    }
    Ok(out)
}

/// The same process computed the other way: intersect the time-t surviving
/// sets over every sweep point of all relevant labels. Kept as an
/// independent route for cross-checking the recursion.
pub fn inf_embedded_by_intersection(
    family: &GroupFamily,
    tree: &GwTree,
    labels: &LabelSet,
    a: f64,
    b: f64,
    k: usize,
    levels: usize,
) -> Result<Vec<InfProcessState>> {
    let need = (levels.max(1) - 1) * k;
    let sweep_points = sweep(labels.to_depth(tree, need), a, b)?;
    let mut intersected: Option<Vec<Vec<u32>>> = None;
    for &t in sweep_points.points() {
        let states = embedded_process(family, tree, labels, t, k, levels)?;
        let sets: Vec<Vec<u32>> = states.into_iter().map(|s| s.surviving).collect();
        intersected = Some(match intersected {
            None => sets,
            Some(prev) => prev
                .into_iter()
                .zip(sets)
                .map(|(p, s)| p.into_iter().filter(|v| s.binary_search(v).is_ok()).collect())
                .collect(),
        });
    }
    let sets = intersected.expect("sweep has at least the endpoints");
    Ok(sets
        .into_iter()
        .enumerate()
        .map(|(i, surviving)| InfProcessState {
            interval: (a, b),
            level_index: i + 1,
            count: surviving.len(),
            surviving,
        })
        .collect())
}

/// One Monte Carlo attempt of the certificate search.
#[derive(Clone, Debug, Serialize)]
pub struct EpsAttempt {
    pub epsilon: f64,
    pub estimate: f64,
    pub lower_bound: f64,
}

/// Monte Carlo certificate that E[inf over [0, epsilon] of Y] > 1, which
/// makes the interval-infimum process supercritical.
#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub certified: bool,
    pub epsilon: Option<f64>,
    pub estimate: f64,
    pub lower_bound: f64,
    pub replicates: usize,
    pub attempts: Vec<EpsAttempt>,
}

/// Draws one realization of inf over [0, epsilon] of Y: a fresh depth-k
/// Galton--Watson generation with labels on [0, epsilon].
pub fn sample_inf_y(
    family: &GroupFamily,
    law: &StepLaw,
    mu: &OffspringLaw,
    k: usize,
    epsilon: f64,
    stream: &RandomStream,
) -> Result<usize> {
    let mut tree_rng = stream.derive("tree", 0).rng();
    let tree = sample_tree(mu, k, crate::gw::DEFAULT_NODE_BUDGET, &mut tree_rng)?;
    let labels = LabelSet::sample(law, &tree, epsilon, &stream.derive("labels", 0));
    inf_y(family, &tree, &labels, ROOT, k, 0.0, epsilon)
}

/// Searches epsilon over the geometric grid 2^-j, j = 0..=20, largest
/// first, and returns the first (largest) epsilon whose 99% lower
/// confidence bound on E[inf Y] exceeds 1. Not-certified is a valid
/// outcome; the confidence machinery refuses fewer than 1000 replicates.
pub fn stability_certificate(
    family: &GroupFamily,
    law: &StepLaw,
    mu: &OffspringLaw,
    k: usize,
    replicates: usize,
    stream: &RandomStream,
) -> Result<Certificate> {
    if replicates < 1000 {
        return Err(Error::InvalidParameter(
            "certificates require at least 1000 replicates".into(),
        ));
    }
    let mut attempts = Vec::new();
    for j in 0..=20u32 {
        let epsilon = 0.5f64.powi(j as i32);
        let eps_stream = stream.derive("epsilon", j as u64);
        let values: Vec<Result<usize>> = (0..replicates as u64)
            .into_par_iter()
            .map(|i| {
                sample_inf_y(family, law, mu, k, epsilon, &eps_stream.derive("replicate", i))
                    .map_err(|e| e.in_replicate(i))
            })
            .collect();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for v in values {
            let y = v? as f64;
            sum += y;
            sum_sq += y * y;
        }
        let n = replicates as f64;
        let mean = sum / n;
        let var = (sum_sq - n * mean * mean).max(0.0) / (n - 1.0);
        let lower_bound = mean - Z_99 * (var / n).sqrt();
        attempts.push(EpsAttempt {
            epsilon,
            estimate: mean,
            lower_bound,
        });
        if lower_bound > 1.0 {
            return Ok(Certificate {
                certified: true,
                epsilon: Some(epsilon),
                estimate: mean,
                lower_bound,
                replicates,
                attempts,
            });
        }
    }
    let last = attempts.last().expect("at least one attempt");
    Ok(Certificate {
        certified: false,
        epsilon: None,
        estimate: last.estimate,
        lower_bound: last.lower_bound,
        replicates,
        attempts,
    })
}

/// One piece of the gap-free return-count record.
#[derive(Clone, Debug, Serialize)]
pub struct ScanSegment {
    pub start: f64,
    pub end: f64,
    /// Return counts for levels 1..=n, constant on the segment.
    pub returns: Vec<usize>,
}

/// Exact evaluation of t -> return counts of levels 1..=n over every sweep
/// segment of the ancestral labels on [0, horizon].
pub fn exceptional_scan(
    family: &GroupFamily,
    tree: &GwTree,
    labels: &LabelSet,
    horizon: f64,
    n: usize,
) -> Result<Vec<ScanSegment>> {
    if n > tree.depth() {
        return Err(Error::OutOfRange(format!(
            "level {n} out of range (tree depth {})",
            tree.depth()
        )));
    }
    let sweep_points = sweep(labels.to_depth(tree, n), 0.0, horizon)?;
    let mut out = Vec::with_capacity(sweep_points.points().len());
    for (a, b) in sweep_points.segments() {
        let pos = positions_vec(family, tree, labels, a, n)?;
        let returns: Vec<usize> = (1..=n)
            .map(|level| {
                tree.level(level)
                    .iter()
                    .filter(|&&v| pos[v as usize].is_identity())
                    .count()
            })
            .collect();
        out.push(ScanSegment {
            start: a,
            end: b,
            returns,
        });
    }
    Ok(out)
}
