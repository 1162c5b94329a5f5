//! Poisson-refresh machinery: hierarchical random streams, per-edge
//! piecewise-constant label histories, and breakpoint sweeps.
//!
//! Everything here is event-exact. A label stores its Poisson event times
//! and the value in force on each inter-event interval; "for all t" questions
//! over an interval reduce to finitely many sweep points because every
//! derived quantity is piecewise constant with breakpoints contained in the
//! label events.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::Exp1;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::group::{GroupElement, StepLaw};
use crate::{Error, Result};

/// A reproducible random stream identified by a seed and a derivation path.
///
/// Identical (seed, path) pairs yield identical draws; distinct paths yield
/// streams that are independent for practical purposes. Derivation hashes
/// the parent key with a tag and an index, so per-edge histories do not
/// depend on the order in which sibling streams are created or consumed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RandomStream {
    key: [u8; 32],
}

impl RandomStream {
    pub fn from_seed(seed: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"dynbrw-root");
        hasher.update(seed.to_le_bytes());
        RandomStream {
            key: hasher.finalize().into(),
        }
    }

    /// Child stream for (tag, index), e.g. `derive("replicate", 17)`.
    pub fn derive(&self, tag: &str, idx: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(self.key);
        hasher.update([tag.len() as u8]);
        hasher.update(tag.as_bytes());
        hasher.update(idx.to_le_bytes());
        RandomStream {
            key: hasher.finalize().into(),
        }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        ChaCha12Rng::from_seed(self.key)
    }
}

/// One edge's piecewise-constant label history: rate-1 Poisson event times
/// in (0, horizon] and the values in force between them. `values[j]` holds
/// on `[events[j-1], events[j])` with `events[-1] = 0`; queries are
/// right-continuous at event times.
#[derive(Clone, Debug)]
pub struct DynamicalLabel {
    edge: u64,
    horizon: f64,
    events: Vec<f64>,
    values: Vec<GroupElement>,
    // first Poisson point beyond the horizon, kept so the history can be
    // extended without resampling what is already fixed
    next_event: f64,
    rng: ChaCha12Rng,
}

/// Serializable snapshot of a label history, for failure reproduction.
#[derive(Debug, Serialize)]
pub struct LabelDump<'a> {
    pub edge: u64,
    pub horizon: f64,
    pub events: &'a [f64],
    pub values: Vec<String>,
}

impl DynamicalLabel {
    /// Samples a fresh history on (0, horizon].
    pub fn sample(edge: u64, law: &StepLaw, horizon: f64, stream: &RandomStream) -> Self {
        let mut rng = stream.rng();
        let first = law.sample(&mut rng).clone();
        let mut label = DynamicalLabel {
            edge,
            horizon: 0.0,
            events: Vec::new(),
            values: vec![first],
            next_event: rng.sample::<f64, _>(Exp1),
            rng,
        };
        label.extend(horizon, law);
        label
    }

    /// Extends the history to a larger horizon by appending Poisson gaps;
    /// the part already sampled is unchanged.
    pub fn extend(&mut self, new_horizon: f64, law: &StepLaw) {
        if new_horizon <= self.horizon {
            return;
        }
        while self.next_event <= new_horizon {
            self.events.push(self.next_event);
            self.values.push(law.sample(&mut self.rng).clone());
            self.next_event += self.rng.sample::<f64, _>(Exp1);
        }
        self.horizon = new_horizon;
    }

    pub fn edge(&self) -> u64 {
        self.edge
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self) -> &[f64] {
        &self.events
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    /// The value in force at time t (right-continuous at events).
    pub fn value_at(&self, t: f64) -> Result<&GroupElement> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfRange(format!(
                "t={t} outside [0, {}]",
                self.horizon
            )));
        }
        let idx = self.events.partition_point(|&e| e <= t);
        Ok(&self.values[idx])
    }

    /// True iff the label does not change on [a, b], i.e. no event lies in
    /// (a, b].
    pub fn constant_on(&self, a: f64, b: f64) -> Result<bool> {
        if !(0.0 <= a && a <= b && b <= self.horizon) {
            return Err(Error::OutOfRange(format!(
                "[{a}, {b}] outside [0, {}]",
                self.horizon
            )));
        }
        let lo = self.events.partition_point(|&e| e <= a);
        let hi = self.events.partition_point(|&e| e <= b);
        Ok(lo == hi)
    }

    /// Event times in the open interval (a, b).
    pub fn events_in(&self, a: f64, b: f64) -> &[f64] {
        let lo = self.events.partition_point(|&e| e <= a);
        let hi = self.events.partition_point(|&e| e < b);
        &self.events[lo..hi]
    }

    pub fn dump(&self, format: impl Fn(&GroupElement) -> String) -> LabelDump<'_> {
        LabelDump {
            edge: self.edge,
            horizon: self.horizon,
            events: &self.events,
            values: self.values.iter().map(format).collect(),
        }
    }
}

/// Merged, sorted, deduplicated event times of a set of labels restricted to
/// an interval, with the interval endpoints included.
#[derive(Clone, Debug)]
pub struct BreakpointSweep {
    points: Vec<f64>,
}

impl BreakpointSweep {
    /// All sweep points: `a`, the interior label events, `b`.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn interior_count(&self) -> usize {
        self.points.len() - 2
    }

    /// Consecutive (start, end) segments; every swept label is constant on
    /// each of them.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Builds the breakpoint sweep of `labels` over [a, b]. All labels must
/// share the horizon and [a, b] must lie within it.
pub fn sweep<'a, I>(labels: I, a: f64, b: f64) -> Result<BreakpointSweep>
where
    I: IntoIterator<Item = &'a DynamicalLabel>,
{
    if a > b {
        return Err(Error::OutOfRange(format!("empty interval [{a}, {b}]")));
    }
    let mut points = vec![a];
    let mut horizon: Option<f64> = None;
    for label in labels {
        match horizon {
            None => horizon = Some(label.horizon()),
            Some(h) if h != label.horizon() => {
                return Err(Error::OutOfRange(format!(
                    "mixed horizons in sweep: {h} vs {}",
                    label.horizon()
                )));
            }
            _ => {}
        }
        points.extend_from_slice(label.events_in(a, b));
    }
    if let Some(h) = horizon {
        if !(0.0 <= a && b <= h) {
            return Err(Error::OutOfRange(format!("[{a}, {b}] outside [0, {h}]")));
        }
    }
    points.push(b);
    points.sort_by(|x, y| x.partial_cmp(y).expect("finite times"));
    // exact floating-point ties have probability 0; dedup if they occur
    points.dedup();
    Ok(BreakpointSweep { points })
}
