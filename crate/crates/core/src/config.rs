//! JSON experiment configuration: a single document with topology, mode,
//! drop rate, transmit fraction, horizon, seed, and initial vectors.
//!
//! ```json
//! {
//!   "topology": {"type": "random_regular_out", "p": 5, "d": 2, "seed": 0},
//!   "mode": "sync",
//!   "drop_rate": 0.2,
//!   "s": "classic",
//!   "steps": 20000,
//!   "seed": 1,
//!   "x0": "random_positive",
//!   "w0": "average"
//! }
//! ```
//!
//! `topology.seed` only shapes the random graph; the top-level `seed` drives
//! drop masks, wake-ups, and random initial vectors, so sweeping seeds keeps
//! the network fixed.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::experiments::{EstimatorSet, ExperimentConfig, VectorInit};
use crate::process_gen::{random_regular_out_digraph, ProcessConfig};
use crate::protocol::{Mode, NetworkTopology, TransmitFraction};

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    RandomRegularOut {
        p: usize,
        d: usize,
        #[serde(default)]
        seed: u64,
    },
    Complete {
        p: usize,
    },
    EdgeList {
        path: String,
    },
}

impl TopologySpec {
    pub fn build(&self) -> Result<NetworkTopology> {
        match self {
            TopologySpec::RandomRegularOut { p, d, seed } => {
                random_regular_out_digraph(*p, *d, *seed)
            }
            TopologySpec::Complete { p } => NetworkTopology::complete(*p),
            TopologySpec::EdgeList { path } => {
                let text = std::fs::read_to_string(path)?;
                NetworkTopology::from_edge_list(&text)
            }
        }
    }
}

/// `s` accepts a number in (0, 1] or the string `"classic"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TransmitSpec {
    Fixed(f64),
    Named(String),
}

impl TransmitSpec {
    pub fn build(&self) -> Result<TransmitFraction> {
        let s = match self {
            TransmitSpec::Fixed(v) => TransmitFraction::Fixed(*v),
            TransmitSpec::Named(name) if name == "classic" => TransmitFraction::Classic,
            TransmitSpec::Named(other) => {
                return Err(Error::InvalidConfig(format!(
                    "unknown transmit fraction '{other}' (expected a number or \"classic\")"
                )))
            }
        };
        s.validate()?;
        Ok(s)
    }
}

fn default_w0() -> VectorInit {
    VectorInit::Preset(crate::experiments::Preset::Average)
}

fn default_s() -> TransmitSpec {
    TransmitSpec::Named("classic".to_string())
}

fn default_x0() -> VectorInit {
    VectorInit::Preset(crate::experiments::Preset::RandomPositive)
}

/// The on-disk configuration document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub topology: TopologySpec,
    pub mode: Mode,
    #[serde(default)]
    pub drop_rate: f64,
    /// Defaults to the classic equal split when omitted.
    #[serde(default = "default_s")]
    pub s: TransmitSpec,
    pub steps: u64,
    pub seed: u64,
    #[serde(default = "default_x0")]
    pub x0: VectorInit,
    #[serde(default = "default_w0")]
    pub w0: VectorInit,
    /// Subset of {"qr", "birkhoff", "empirical", "compound"}; the default
    /// enables the first three.
    #[serde(default)]
    pub estimators: Option<Vec<String>>,
    #[serde(default)]
    pub birkhoff_sample_points: Option<usize>,
}

impl FileConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn build(&self) -> Result<ExperimentConfig> {
        let process = ProcessConfig {
            topology: self.topology.build()?,
            mode: self.mode,
            drop_rate: self.drop_rate,
            s: self.s.build()?,
            seed: self.seed,
        };
        process.validate()?;
        let estimators = match &self.estimators {
            Some(names) => EstimatorSet::from_names(names)?,
            None => EstimatorSet::default(),
        };
        Ok(ExperimentConfig {
            process,
            n_steps: self.steps,
            x0: self.x0.clone(),
            w0: self.w0.clone(),
            estimators,
            birkhoff_sample_points: self.birkhoff_sample_points.unwrap_or(256),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let cfg = FileConfig::from_json(
            r#"{
                "topology": {"type": "complete", "p": 4},
                "mode": "sync",
                "drop_rate": 0.25,
                "s": 0.5,
                "steps": 5000,
                "seed": 42
            }"#,
        )
        .unwrap();
        let exp = cfg.build().unwrap();
        assert_eq!(exp.process.topology.node_count(), 4);
        assert_eq!(exp.n_steps, 5000);
        assert_eq!(exp.process.s, TransmitFraction::Fixed(0.5));
        assert!(exp.estimators.qr && !exp.estimators.compound);
    }

    #[test]
    fn parses_classic_s_and_presets() {
        let cfg = FileConfig::from_json(
            r#"{
                "topology": {"type": "random_regular_out", "p": 5, "d": 2},
                "mode": "async",
                "drop_rate": 0.1,
                "s": "classic",
                "steps": 1000,
                "seed": 7,
                "x0": [1.0, 2.0, 3.0, 4.0, 5.0],
                "w0": "sum",
                "estimators": ["qr", "compound"]
            }"#,
        )
        .unwrap();
        let exp = cfg.build().unwrap();
        assert_eq!(exp.process.s, TransmitFraction::Classic);
        assert_eq!(exp.x0, VectorInit::Values(vec![1.0, 2.0, 3.0, 4.0, 5.0]));
        assert!(exp.estimators.compound && !exp.estimators.birkhoff);
    }

    #[test]
    fn omitted_s_defaults_to_classic() {
        let cfg = FileConfig::from_json(
            r#"{
                "topology": {"type": "complete", "p": 3},
                "mode": "sync",
                "steps": 100,
                "seed": 1
            }"#,
        )
        .unwrap();
        let exp = cfg.build().unwrap();
        assert_eq!(exp.process.s, TransmitFraction::Classic);
        assert_eq!(exp.process.drop_rate, 0.0);
    }

    #[test]
    fn rejects_bad_transmit_name() {
        let cfg = FileConfig::from_json(
            r#"{
                "topology": {"type": "complete", "p": 3},
                "mode": "sync",
                "s": "half",
                "steps": 100,
                "seed": 1
            }"#,
        )
        .unwrap();
        assert!(cfg.build().is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(FileConfig::from_json(
            r#"{
                "topology": {"type": "complete", "p": 3},
                "mode": "sync",
                "s": 0.5,
                "steps": 100,
                "seed": 1,
                "typo_field": true
            }"#,
        )
        .is_err());
    }

    #[test]
    fn edge_list_topology_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.txt");
        std::fs::write(&path, "0 1\n1 0\n").unwrap();
        let cfg = FileConfig::from_json(&format!(
            r#"{{
                "topology": {{"type": "edge_list", "path": "{}"}},
                "mode": "sync",
                "drop_rate": 0.0,
                "s": 0.5,
                "steps": 100,
                "seed": 1
            }}"#,
            path.display()
        ))
        .unwrap();
        let exp = cfg.build().unwrap();
        assert_eq!(exp.process.topology.edge_count(), 2);
    }
}
