//! Group arithmetic on the supported Cayley-graph families, step laws, and
//! exact n-step distributions.
//!
//! Three families are supported: the lattice `Z^d`, the free group `F_k`
//! (2k generator symbols, symbol `i` has inverse `i ^ 1`), and the
//! homogeneous tree of degree `q` modeled as the free product of `q` copies
//! of `Z_2` (q self-inverse symbols). Elements of the word families are kept
//! in reduced form at all times.
//!
//! Exact n-step distributions are computed by iterated convolution over a
//! hash map keyed by the element. For isotropic nearest-neighbor laws on the
//! word families the distance-from-origin birth--death chain gives the same
//! return probabilities in O(n^2) instead of exponential ball enumeration.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of steps above which convolution on exponential-support families
/// is refused unless the caller raises the cap.
pub const DEFAULT_DEPTH_CAP: usize = 18;

/// A supported Cayley-graph family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupFamily {
    /// The lattice Z^d with generators +-e_i.
    LatticeZd { d: usize },
    /// The free group on k generators; 2k symbols, inverse of symbol i is i ^ 1.
    FreeGroup { k: usize },
    /// The homogeneous tree of degree q >= 3; q self-inverse symbols.
    HomTree { degree: usize },
}

/// A point of the Cayley graph: an integer vector for lattices, a reduced
/// word of generator symbols for the word families.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupElement {
    Lattice(Vec<i64>),
    Word(Vec<u16>),
}

impl GroupFamily {
    pub fn lattice(d: usize) -> Result<Self> {
        if d < 1 {
            return Err(Error::InvalidParameter("lattice dimension must be >= 1".into()));
        }
        Ok(GroupFamily::LatticeZd { d })
    }

    pub fn free_group(k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidParameter("free group rank must be >= 1".into()));
        }
        Ok(GroupFamily::FreeGroup { k })
    }

    pub fn hom_tree(degree: usize) -> Result<Self> {
        if degree < 3 {
            return Err(Error::InvalidParameter("tree degree must be >= 3".into()));
        }
        Ok(GroupFamily::HomTree { degree })
    }

    /// The group identity: zero vector or empty word.
    pub fn identity(&self) -> GroupElement {
        match self {
            GroupFamily::LatticeZd { d } => GroupElement::Lattice(vec![0; *d]),
            _ => GroupElement::Word(Vec::new()),
        }
    }

    /// Number of generator symbols (= vertex degree of the Cayley graph for
    /// the nearest-neighbor step law).
    pub fn symbol_count(&self) -> usize {
        match self {
            GroupFamily::LatticeZd { d } => 2 * d,
            GroupFamily::FreeGroup { k } => 2 * k,
            GroupFamily::HomTree { degree } => *degree,
        }
    }

    fn symbol_inverse(&self, s: u16) -> u16 {
        match self {
            GroupFamily::HomTree { .. } => s,
            _ => s ^ 1,
        }
    }

    /// All generators and inverses, one element per symbol.
    pub fn generators(&self) -> Vec<GroupElement> {
        match self {
            GroupFamily::LatticeZd { d } => {
                let mut out = Vec::with_capacity(2 * d);
                for i in 0..*d {
                    for sign in [1i64, -1] {
                        let mut v = vec![0i64; *d];
                        v[i] = sign;
                        out.push(GroupElement::Lattice(v));
                    }
                }
                out
            }
            _ => (0..self.symbol_count() as u16)
                .map(|s| GroupElement::Word(vec![s]))
                .collect(),
        }
    }

    /// Checks that an element is well formed for this family (dimension
    /// match, symbols in range, word fully reduced).
    pub fn validate_element(&self, el: &GroupElement) -> Result<()> {
        match (self, el) {
            (GroupFamily::LatticeZd { d }, GroupElement::Lattice(v)) => {
                if v.len() != *d {
                    return Err(Error::InvalidElement(format!(
                        "expected vector of length {d}, got {}",
                        v.len()
                    )));
                }
                Ok(())
            }
            (GroupFamily::LatticeZd { .. }, GroupElement::Word(_)) => Err(Error::FamilyMismatch(
                "word element given for a lattice family".into(),
            )),
            (_, GroupElement::Lattice(_)) => Err(Error::FamilyMismatch(
                "lattice element given for a word family".into(),
            )),
            (_, GroupElement::Word(w)) => {
                let n = self.symbol_count() as u16;
                if let Some(&s) = w.iter().find(|&&s| s >= n) {
                    return Err(Error::InvalidElement(format!(
                        "symbol {s} out of range (family has {n} symbols)"
                    )));
                }
                for pair in w.windows(2) {
                    if pair[1] == self.symbol_inverse(pair[0]) {
                        return Err(Error::InvalidElement(
                            "word is not reduced: adjacent symbol and inverse".into(),
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    /// Group product; word results are fully reduced.
    pub fn multiply(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        match (a, b) {
            (GroupElement::Lattice(x), GroupElement::Lattice(y)) => {
                if x.len() != y.len() {
                    return Err(Error::FamilyMismatch(
                        "lattice elements of different dimension".into(),
                    ));
                }
                Ok(GroupElement::Lattice(
                    x.iter().zip(y).map(|(a, b)| a + b).collect(),
                ))
            }
            (GroupElement::Word(x), GroupElement::Word(y)) => {
                let mut acc = x.clone();
                for &s in y {
                    if acc.last() == Some(&self.symbol_inverse(s)) {
                        acc.pop();
                    } else {
                        acc.push(s);
                    }
                }
                Ok(GroupElement::Word(acc))
            }
            _ => Err(Error::FamilyMismatch(
                "cannot multiply lattice and word elements".into(),
            )),
        }
    }

    /// Group inverse: negation for lattices, reversal plus symbol inversion
    /// for words.
    pub fn inverse(&self, a: &GroupElement) -> GroupElement {
        match a {
            GroupElement::Lattice(v) => GroupElement::Lattice(v.iter().map(|x| -x).collect()),
            GroupElement::Word(w) => GroupElement::Word(
                w.iter().rev().map(|&s| self.symbol_inverse(s)).collect(),
            ),
        }
    }

    /// Reduces an arbitrary symbol sequence to its normal form.
    pub fn reduce(&self, symbols: &[u16]) -> Vec<u16> {
        let mut acc: Vec<u16> = Vec::with_capacity(symbols.len());
        for &s in symbols {
            if acc.last() == Some(&self.symbol_inverse(s)) {
                acc.pop();
            } else {
                acc.push(s);
            }
        }
        acc
    }

    /// Canonical textual form: `"(1,-2)"` for lattices, letters with an
    /// apostrophe marking the inverse for words (`"ab'a"`), `"e"` for the
    /// identity word. Generator indices beyond `z` are bracketed (`"[27]'"`).
    pub fn format_element(&self, el: &GroupElement) -> String {
        match el {
            GroupElement::Lattice(v) => {
                let mut s = String::from("(");
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        s.push(',');
                    }
                    let _ = write!(s, "{x}");
                }
                s.push(')');
                s
            }
            GroupElement::Word(w) => {
                if w.is_empty() {
                    return "e".to_string();
                }
                let mut s = String::new();
                for &sym in w {
                    let (idx, inv) = self.symbol_name(sym);
                    if idx < 26 {
                        s.push((b'a' + idx as u8) as char);
                    } else {
                        let _ = write!(s, "[{idx}]");
                    }
                    if inv {
                        s.push('\'');
                    }
                }
                // a bare generator letter 'e' (index 4) would collide with
                // the identity token; bracket it
                if s == "e" {
                    return "[4]".to_string();
                }
                s
            }
        }
    }

    /// (generator index, is-inverse) of a symbol.
    fn symbol_name(&self, sym: u16) -> (usize, bool) {
        match self {
            GroupFamily::HomTree { .. } => (sym as usize, false),
            _ => ((sym / 2) as usize, sym & 1 == 1),
        }
    }

    fn symbol_of(&self, idx: usize, inv: bool) -> Result<u16> {
        match self {
            GroupFamily::HomTree { degree } => {
                if idx >= *degree {
                    return Err(Error::InvalidElement(format!(
                        "generator index {idx} out of range"
                    )));
                }
                // self-inverse generators: the apostrophe is accepted but redundant
                Ok(idx as u16)
            }
            GroupFamily::FreeGroup { k } => {
                if idx >= *k {
                    return Err(Error::InvalidElement(format!(
                        "generator index {idx} out of range"
                    )));
                }
                Ok((idx * 2 + usize::from(inv)) as u16)
            }
            GroupFamily::LatticeZd { .. } => Err(Error::FamilyMismatch(
                "word syntax given for a lattice family".into(),
            )),
        }
    }

    /// Parses the canonical textual form produced by [`format_element`].
    ///
    /// [`format_element`]: GroupFamily::format_element
    pub fn parse_element(&self, text: &str) -> Result<GroupElement> {
        let text = text.trim();
        match self {
            GroupFamily::LatticeZd { d } => {
                let inner = text
                    .strip_prefix('(')
                    .and_then(|t| t.strip_suffix(')'))
                    .ok_or_else(|| {
                        Error::InvalidElement(format!("expected \"(x1,...,x{d})\", got {text:?}"))
                    })?;
                let coords: Vec<i64> = inner
                    .split(',')
                    .map(|p| {
                        p.trim().parse::<i64>().map_err(|_| {
                            Error::InvalidElement(format!("bad coordinate {p:?} in {text:?}"))
                        })
                    })
                    .collect::<Result<_>>()?;
                let el = GroupElement::Lattice(coords);
                self.validate_element(&el)?;
                Ok(el)
            }
            _ => {
                if text == "e" {
                    return Ok(self.identity());
                }
                let mut symbols = Vec::new();
                let mut chars = text.chars().peekable();
                while let Some(c) = chars.next() {
                    let idx = if c.is_ascii_lowercase() {
                        (c as u8 - b'a') as usize
                    } else if c == '[' {
                        let mut digits = String::new();
                        for d in chars.by_ref() {
                            if d == ']' {
                                break;
                            }
                            digits.push(d);
                        }
                        digits.parse::<usize>().map_err(|_| {
                            Error::InvalidElement(format!("bad bracketed index in {text:?}"))
                        })?
                    } else {
                        return Err(Error::InvalidElement(format!(
                            "unexpected character {c:?} in {text:?}"
                        )));
                    };
                    let inv = chars.peek() == Some(&'\'');
                    if inv {
                        chars.next();
                    }
                    symbols.push(self.symbol_of(idx, inv)?);
                }
                let el = GroupElement::Word(self.reduce(&symbols));
                self.validate_element(&el)?;
                Ok(el)
            }
        }
    }
}

impl GroupElement {
    pub fn is_identity(&self) -> bool {
        match self {
            GroupElement::Lattice(v) => v.iter().all(|&x| x == 0),
            GroupElement::Word(w) => w.is_empty(),
        }
    }

    /// Word length / l^1 norm: graph distance to the identity under the
    /// nearest-neighbor generating set.
    pub fn length(&self) -> usize {
        match self {
            GroupElement::Lattice(v) => v.iter().map(|x| x.unsigned_abs() as usize).sum(),
            GroupElement::Word(w) => w.len(),
        }
    }
}

/// A finite-support step law q on the generating set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepLaw {
    support: Vec<GroupElement>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl StepLaw {
    pub fn new(family: &GroupFamily, support: Vec<GroupElement>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(Error::InvalidLaw(
                "support and probability lists must be nonempty and of equal length".into(),
            ));
        }
        for el in &support {
            family.validate_element(el)?;
        }
        if probs.iter().any(|&p| p <= 0.0 || !p.is_finite()) {
            return Err(Error::InvalidLaw("probabilities must be strictly positive".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidLaw(format!(
                "probabilities sum to {total}, expected 1 within 1e-12"
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
        Ok(StepLaw {
            support,
            probs,
            cumulative,
        })
    }

    /// The simple random walk: uniform over all generators and inverses.
    pub fn srw(family: &GroupFamily) -> StepLaw {
        let support = family.generators();
        let n = support.len();
        let probs = vec![1.0 / n as f64; n];
        StepLaw::new(family, support, probs).expect("uniform generator law is valid")
    }

    pub fn support(&self) -> &[GroupElement] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Draws one step by inverse-cdf lookup.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &GroupElement {
        let u: f64 = rng.random();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        &self.support[idx.min(self.support.len() - 1)]
    }

    /// True when the law is the isotropic nearest-neighbor law: every
    /// generator symbol exactly once, all with equal mass. This is the
    /// precondition for the radial birth--death reduction on word families.
    pub fn is_isotropic_nn(&self, family: &GroupFamily) -> bool {
        let gens = family.generators();
        if self.support.len() != gens.len() {
            return false;
        }
        let p0 = 1.0 / gens.len() as f64;
        if self.probs.iter().any(|&p| (p - p0).abs() > 1e-12) {
            return false;
        }
        let mut seen: Vec<&GroupElement> = self.support.iter().collect();
        seen.sort_by_key(|el| format!("{el:?}"));
        let mut expect: Vec<&GroupElement> = gens.iter().collect();
        expect.sort_by_key(|el| format!("{el:?}"));
        seen.iter().zip(&expect).all(|(a, b)| a == b)
    }
}

/// Probability masses of an n-step distribution: element-keyed for the
/// convolution route, distance-class-keyed for the radial reduction.
#[derive(Clone, Debug)]
pub enum Masses {
    Elements(HashMap<GroupElement, f64>),
    Radial(Vec<f64>),
}

/// Exact distribution of `S_n` started at the identity.
#[derive(Clone, Debug)]
pub struct NStepDistribution {
    pub n: usize,
    pub masses: Masses,
}

impl NStepDistribution {
    pub fn total_mass(&self) -> f64 {
        match &self.masses {
            Masses::Elements(m) => m.values().sum(),
            Masses::Radial(v) => v.iter().sum(),
        }
    }

    /// Mass at the identity, i.e. the n-step return probability.
    pub fn mass_at_identity(&self, family: &GroupFamily) -> f64 {
        match &self.masses {
            Masses::Elements(m) => m.get(&family.identity()).copied().unwrap_or(0.0),
            Masses::Radial(v) => v.first().copied().unwrap_or(0.0),
        }
    }

    pub fn mass_at(&self, el: &GroupElement) -> f64 {
        match &self.masses {
            Masses::Elements(m) => m.get(el).copied().unwrap_or(0.0),
            Masses::Radial(v) => {
                // radial route only resolves distance classes
                v.get(el.length()).copied().unwrap_or(0.0)
            }
        }
    }
}

fn has_exponential_support(family: &GroupFamily) -> bool {
    !matches!(family, GroupFamily::LatticeZd { .. })
}

/// One convolution step: distribution after one more draw from `law`.
pub fn convolve_step(
    family: &GroupFamily,
    dist: &HashMap<GroupElement, f64>,
    law: &StepLaw,
) -> Result<HashMap<GroupElement, f64>> {
    let mut out = HashMap::with_capacity(dist.len() * 2);
    for (el, &p) in dist {
        for (step, &q) in law.support().iter().zip(law.probs()) {
            let next = family.multiply(el, step)?;
            *out.entry(next).or_insert(0.0) += p * q;
        }
    }
    Ok(out)
}

/// Convolution of two element-keyed distributions.
pub fn convolve(
    family: &GroupFamily,
    a: &HashMap<GroupElement, f64>,
    b: &HashMap<GroupElement, f64>,
) -> Result<HashMap<GroupElement, f64>> {
    let mut out = HashMap::with_capacity(a.len().max(b.len()));
    for (x, &p) in a {
        for (y, &q) in b {
            let next = family.multiply(x, y)?;
            *out.entry(next).or_insert(0.0) += p * q;
        }
    }
    Ok(out)
}

/// Exact n-step distribution by iterated convolution, element-keyed.
/// Refused beyond `cap` steps on the word families, whose support grows
/// exponentially.
pub fn n_step_convolution(
    family: &GroupFamily,
    law: &StepLaw,
    n: usize,
    cap: usize,
) -> Result<NStepDistribution> {
    if has_exponential_support(family) && n > cap {
        return Err(Error::DepthCapExceeded { n, cap });
    }
    let mut dist = HashMap::new();
    dist.insert(family.identity(), 1.0);
    for _ in 0..n {
        dist = convolve_step(family, &dist, law)?;
    }
    Ok(NStepDistribution {
        n,
        masses: Masses::Elements(dist),
    })
}

/// Distance-from-origin distributions of the isotropic nearest-neighbor walk
/// on a regular tree of the given degree, for steps `0..=n_max`.
///
/// From distance r >= 1 the walk steps outward with probability
/// (degree-1)/degree and inward with probability 1/degree; from 0 it steps
/// outward with probability 1.
pub fn radial_distributions(degree: usize, n_max: usize) -> Vec<Vec<f64>> {
    let out_p = (degree - 1) as f64 / degree as f64;
    let in_p = 1.0 / degree as f64;
    let mut all = Vec::with_capacity(n_max + 1);
    let mut p = vec![0.0; n_max + 2];
    p[0] = 1.0;
    all.push(p[..1].to_vec());
    for n in 1..=n_max {
        let mut q = vec![0.0; n_max + 2];
        q[1] += p[0];
        for r in 1..=n {
            if p[r] != 0.0 {
                q[r + 1] += p[r] * out_p;
                q[r - 1] += p[r] * in_p;
            }
        }
        p = q;
        all.push(p[..=n].to_vec());
    }
    all
}

/// Exact n-step distribution; picks the radial reduction when available.
pub fn n_step_distribution(
    family: &GroupFamily,
    law: &StepLaw,
    n: usize,
    cap: usize,
) -> Result<NStepDistribution> {
    if has_exponential_support(family) && law.is_isotropic_nn(family) {
        let degree = family.symbol_count();
        let radial = radial_distributions(degree, n).pop().expect("n+1 entries");
        return Ok(NStepDistribution {
            n,
            masses: Masses::Radial(radial),
        });
    }
    n_step_convolution(family, law, n, cap)
}

/// Return probabilities p^(n)(e,e) for n = 0..=n_max, exact up to rounding.
pub fn return_probabilities(
    family: &GroupFamily,
    law: &StepLaw,
    n_max: usize,
    cap: usize,
) -> Result<Vec<f64>> {
    if has_exponential_support(family) && law.is_isotropic_nn(family) {
        return Ok(radial_distributions(family.symbol_count(), n_max)
            .into_iter()
            .map(|dist| dist[0])
            .collect());
    }
    if has_exponential_support(family) && n_max > cap {
        return Err(Error::DepthCapExceeded { n: n_max, cap });
    }
    let identity = family.identity();
    let mut dist = HashMap::new();
    dist.insert(identity.clone(), 1.0);
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(1.0);
    for _ in 1..=n_max {
        dist = convolve_step(family, &dist, law)?;
        out.push(dist.get(&identity).copied().unwrap_or(0.0));
    }
    Ok(out)
}

/// p^(n)(e,e) for a single n.
pub fn return_probability(
    family: &GroupFamily,
    law: &StepLaw,
    n: usize,
    cap: usize,
) -> Result<f64> {
    Ok(n_step_distribution(family, law, n, cap)?.mass_at_identity(family))
}
