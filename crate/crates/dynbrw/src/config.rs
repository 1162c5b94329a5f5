//! Experiment configuration: TOML parsing, validation with key-path
//! diagnostics, and construction of the domain objects.
//!
//! Unknown keys are rejected rather than ignored, and the seed is mandatory:
//! every run must be reproducible from its config alone.

use serde::{Deserialize, Serialize};

use crate::group::{GroupElement, GroupFamily, StepLaw};
use crate::gw::OffspringLaw;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Classify,
    Rho,
    Series,
    Tree,
    Simulate,
    Zeta,
    Embedded,
    Certify,
    Scan,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Classify => "classify",
            ExperimentKind::Rho => "rho",
            ExperimentKind::Series => "series",
            ExperimentKind::Tree => "tree",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Zeta => "zeta",
            ExperimentKind::Embedded => "embedded",
            ExperimentKind::Certify => "certify",
            ExperimentKind::Scan => "scan",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroupSpec {
    Lattice { d: usize },
    Free { k: usize },
    Tree { degree: usize },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    #[default]
    Srw,
    Explicit {
        support: Vec<String>,
        probs: Vec<f64>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuSpec {
    pub support: Vec<u32>,
    pub probs: Vec<f64>,
}

/// A validated experiment description. Optional fields are per-kind; see
/// [`ExperimentConfig::validate`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Mandatory: there is no default-entropy mode.
    pub seed: u64,
    pub group: GroupSpec,
    #[serde(default)]
    pub law: LawSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<MuSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub dump_labels: bool,
}

fn default_replicates() -> usize {
    1
}

/// Parses and validates a TOML experiment config.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config {
        path: "<document>".into(),
        message: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    pub fn family(&self) -> Result<GroupFamily> {
        match self.group {
            GroupSpec::Lattice { d } => GroupFamily::lattice(d),
            GroupSpec::Free { k } => GroupFamily::free_group(k),
            GroupSpec::Tree { degree } => GroupFamily::hom_tree(degree),
        }
        .map_err(|e| Error::config("group", e.to_string()))
    }

    pub fn step_law(&self) -> Result<StepLaw> {
        let family = self.family()?;
        match &self.law {
            LawSpec::Srw => Ok(StepLaw::srw(&family)),
            LawSpec::Explicit { support, probs } => {
                let elements: Vec<GroupElement> = support
                    .iter()
                    .map(|s| family.parse_element(s))
                    .collect::<Result<_>>()
                    .map_err(|e| Error::config("law.support", e.to_string()))?;
                StepLaw::new(&family, elements, probs.clone())
                    .map_err(|e| Error::config("law", e.to_string()))
            }
        }
    }

    pub fn offspring_law(&self) -> Result<OffspringLaw> {
        let spec = self
            .mu
            .as_ref()
            .ok_or_else(|| Error::config("mu", "required for this experiment kind"))?;
        OffspringLaw::new(spec.support.clone(), spec.probs.clone())
            .map_err(|e| Error::config("mu", e.to_string()))
    }

    fn require<T: Copy>(&self, field: Option<T>, path: &str) -> Result<T> {
        field.ok_or_else(|| Error::config(path, "required for this experiment kind"))
    }

    pub fn required_m(&self) -> Result<f64> {
        self.require(self.m, "m")
    }

    pub fn required_depth(&self) -> Result<usize> {
        self.require(self.depth, "depth")
    }

    pub fn required_horizon(&self) -> Result<f64> {
        self.require(self.horizon, "horizon")
    }

    pub fn required_k(&self) -> Result<usize> {
        self.require(self.k, "k")
    }

    pub fn n_max_or_default(&self) -> usize {
        self.n_max.unwrap_or(200)
    }

    pub fn delta_or_default(&self) -> f64 {
        self.delta.unwrap_or(0.1)
    }

    pub fn levels_or_default(&self) -> usize {
        self.levels.unwrap_or(2)
    }

    /// Level to observe; defaults to the tree depth.
    pub fn observed_level(&self, depth: usize) -> usize {
        self.n.unwrap_or(depth)
    }

    /// Per-kind validation; every failure names the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::config("replicates", "must be >= 1"));
        }
        self.family()?;
        self.step_law()?;
        if self.mu.is_some() {
            self.offspring_law()?;
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0) {
                return Err(Error::config("horizon", "must be positive"));
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 0.5) {
                return Err(Error::config("delta", "must lie in (0, 0.5)"));
            }
        }
        match self.kind {
            ExperimentKind::Classify => {
                self.required_m()?;
            }
            ExperimentKind::Rho => {}
            ExperimentKind::Series => {
                self.required_m()?;
            }
            ExperimentKind::Tree => {
                self.offspring_law()?;
                self.required_depth()?;
            }
            ExperimentKind::Simulate | ExperimentKind::Scan => {
                self.offspring_law()?;
                let depth = self.required_depth()?;
                self.required_horizon()?;
                if self.observed_level(depth) > depth {
                    return Err(Error::config("n", "observed level exceeds depth"));
                }
            }
            ExperimentKind::Zeta => {
                self.offspring_law()?;
                let depth = self.required_depth()?;
                if self.observed_level(depth) > depth {
                    return Err(Error::config("n", "observed level exceeds depth"));
                }
            }
            ExperimentKind::Embedded => {
                self.offspring_law()?;
                let k = self.required_k()?;
                let levels = self.levels_or_default();
                if levels < 1 {
                    return Err(Error::config("levels", "must be >= 1"));
                }
                let need = (levels - 1) * k;
                if let Some(depth) = self.depth {
                    if depth < need {
                        return Err(Error::config(
                            "depth",
                            format!("must be >= (levels-1)*k = {need}"),
                        ));
                    }
                }
            }
            ExperimentKind::Certify => {
                self.offspring_law()?;
                self.required_k()?;
                if self.replicates < 1000 {
                    return Err(Error::config(
                        "replicates",
                        "certificates require at least 1000 replicates",
                    ));
                }
            }
        }
        Ok(())
    }
}
