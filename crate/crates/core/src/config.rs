//! Experiment configuration: one JSON document describes the system, the
//! dictionary, the training-data protocol, the uncertainty set, and the
//! propagation/comparison settings. Ships four ready-made presets.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dictionary::DictionarySpec;
use crate::dynamics::{builtin_names, builtin_system, DynamicalSystem};
use crate::error::{Error, Result};
use crate::geometry::{BoxDomain, Region};
use crate::quadrature::QuadratureSpec;

fn default_substeps() -> usize {
    10
}

fn default_support_threshold() -> f64 {
    1e-3
}

/// Training-data generation: where initial points come from and how long
/// each pair trajectory runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n_points: usize,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    pub seed: u64,
    /// Region to draw initial points from; defaults to the whole domain box.
    #[serde(default)]
    pub sample_region: Option<Region>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationConfig {
    pub steps: usize,
    /// Times (multiples of dt) at which marginals/supports are reported.
    pub report_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub system: String,
    /// Optional override of the system's default domain box.
    #[serde(default)]
    pub domain: Option<Vec<(f64, f64)>>,
    pub dictionary: DictionarySpec,
    pub data: DataConfig,
    pub uncertainty_set: Region,
    pub propagation: PropagationConfig,
    pub mc: McConfig,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default = "default_support_threshold")]
    pub support_threshold: f64,
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        Ok(std::fs::write(path, text)?)
    }

    /// One seed drives everything: data gets `seed`, MC gets `seed + 1`.
    pub fn override_seed(&mut self, seed: u64) {
        self.data.seed = seed;
        self.mc.seed = seed.wrapping_add(1);
    }

    pub fn validate(&self, registry: &Registry) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        let system = registry.get(&self.system)?;
        let dim = system.dim;
        if let Some(bounds) = &self.domain {
            let b = BoxDomain::new(bounds.clone())
                .map_err(|e| Error::config("domain", e.to_string()))?;
            if b.dim() != dim {
                return Err(Error::config(
                    "domain",
                    format!(
                        "has {} axes but system {} has dim {dim}",
                        b.dim(),
                        self.system
                    ),
                ));
            }
        }
        if self.data.n_points == 0 {
            return Err(Error::config("data.n_points", "must be positive"));
        }
        if !(self.data.dt.is_finite() && self.data.dt > 0.0) {
            return Err(Error::config("data.dt", "must be a positive finite step"));
        }
        if !(self.data.horizon.is_finite() && self.data.horizon >= self.data.dt) {
            return Err(Error::config(
                "data.horizon",
                "must be finite and at least one step long",
            ));
        }
        if self.data.substeps == 0 {
            return Err(Error::config("data.substeps", "must be positive"));
        }
        if let Some(region) = &self.data.sample_region {
            region
                .validate()
                .map_err(|e| Error::config("data.sample_region", e.to_string()))?;
            if region.dim() != dim {
                return Err(Error::config(
                    "data.sample_region",
                    format!("dim {} does not match system dim {dim}", region.dim()),
                ));
            }
        }
        self.uncertainty_set
            .validate()
            .map_err(|e| Error::config("uncertainty_set", e.to_string()))?;
        if self.uncertainty_set.dim() != dim {
            return Err(Error::config(
                "uncertainty_set",
                format!(
                    "dim {} does not match system dim {dim}",
                    self.uncertainty_set.dim()
                ),
            ));
        }
        if self.propagation.steps == 0 {
            return Err(Error::config("propagation.steps", "must be positive"));
        }
        self.report_step_indices()?;
        if self.mc.n_samples < 2 {
            return Err(Error::config("mc.n_samples", "need at least 2 samples"));
        }
        self.quadrature
            .validate()
            .map_err(|e| Error::config("quadrature", e.to_string()))?;
        if !(self.support_threshold > 0.0 && self.support_threshold < 1.0) {
            return Err(Error::config(
                "support_threshold",
                "must lie strictly between 0 and 1",
            ));
        }
        Ok(())
    }

    /// Map each report time onto its step index, requiring an exact
    /// multiple of dt inside the propagation window.
    pub fn report_step_indices(&self) -> Result<Vec<usize>> {
        let dt = self.data.dt;
        self.propagation
            .report_times
            .iter()
            .map(|&t| {
                if !(t.is_finite() && t >= 0.0) {
                    return Err(Error::config(
                        "propagation.report_times",
                        format!("time {t} must be finite and nonnegative"),
                    ));
                }
                let idx = (t / dt).round() as usize;
                if (idx as f64 * dt - t).abs() > 1e-9 * t.abs().max(1.0) {
                    return Err(Error::config(
                        "propagation.report_times",
                        format!("time {t} is not a multiple of dt = {dt}"),
                    ));
                }
                if idx > self.propagation.steps {
                    return Err(Error::config(
                        "propagation.report_times",
                        format!(
                            "time {t} lies beyond step {} (the propagation horizon)",
                            self.propagation.steps
                        ),
                    ));
                }
                Ok(idx)
            })
            .collect()
    }
}

/// Named dynamical systems available to configs. Starts with the built-ins;
/// library users can register their own.
pub struct Registry {
    systems: HashMap<String, DynamicalSystem>,
}

impl Registry {
    pub fn with_builtins() -> Self {
        let mut systems = HashMap::new();
        for name in builtin_names() {
            systems.insert(name.to_string(), builtin_system(name).unwrap());
        }
        Self { systems }
    }

    pub fn register(&mut self, system: DynamicalSystem) {
        self.systems.insert(system.name.clone(), system);
    }

    pub fn get(&self, name: &str) -> Result<&DynamicalSystem> {
        self.systems.get(name).ok_or_else(|| {
            let mut known: Vec<&str> = self.systems.keys().map(String::as_str).collect();
            known.sort_unstable();
            Error::config(
                "system",
                format!("unknown system {name:?}; known: {}", known.join(", ")),
            )
        })
    }

    /// System named by the config, with its domain override applied.
    pub fn resolve(&self, config: &ExperimentConfig) -> Result<DynamicalSystem> {
        let system = self.get(&config.system)?;
        match &config.domain {
            Some(bounds) => system.with_domain(BoxDomain::new(bounds.clone())?),
            None => Ok(system.clone()),
        }
    }
}

pub const PRESET_NAMES: [&str; 4] = ["example1", "example2a", "example2b", "example3"];

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    match name {
        "example1" => Some(example1()),
        "example2a" => Some(example2a()),
        "example2b" => Some(example2b()),
        "example3" => Some(example3()),
        _ => None,
    }
}

/// Planar polynomial system, degree-2 monomials, box uncertainty set.
pub fn example1() -> ExperimentConfig {
    ExperimentConfig {
        name: "example1".into(),
        system: "example1".into(),
        domain: None,
        dictionary: DictionarySpec::Monomial {
            max_degree: 2,
            scale: vec![3.0, 3.0],
        },
        data: DataConfig {
            n_points: 300,
            dt: 0.2,
            horizon: 10.0,
            substeps: 10,
            seed: 101,
            sample_region: Some(Region::Ball {
                center: vec![0.0, 0.0],
                radius: 3.0,
            }),
        },
        uncertainty_set: Region::Box {
            bounds: vec![(-1.5, -1.1), (0.4, 0.8)],
        },
        propagation: PropagationConfig {
            steps: 50,
            report_times: vec![5.0, 10.0],
        },
        mc: McConfig {
            n_samples: 1000,
            seed: 901,
        },
        quadrature: QuadratureSpec::default(),
        support_threshold: 1e-3,
    }
}

/// Genetic toggle switch, disc uncertainty set in the upper basin.
pub fn example2a() -> ExperimentConfig {
    ExperimentConfig {
        name: "example2a".into(),
        system: "toggle_switch".into(),
        domain: None,
        dictionary: DictionarySpec::Monomial {
            max_degree: 4,
            scale: vec![3.0, 3.0],
        },
        data: DataConfig {
            n_points: 300,
            dt: 0.2,
            horizon: 10.0,
            substeps: 10,
            seed: 102,
            sample_region: None,
        },
        uncertainty_set: Region::Ball {
            center: vec![0.4, 0.8],
            radius: 0.2,
        },
        propagation: PropagationConfig {
            steps: 50,
            report_times: vec![5.0, 10.0],
        },
        mc: McConfig {
            n_samples: 1000,
            seed: 902,
        },
        quadrature: QuadratureSpec::default(),
        support_threshold: 1e-3,
    }
}

/// Toggle switch again, square uncertainty set in the lower basin; shares
/// the fitted operator with example2a (same system, dictionary, data seed).
pub fn example2b() -> ExperimentConfig {
    let mut config = example2a();
    config.name = "example2b".into();
    config.uncertainty_set = Region::Box {
        bounds: vec![(1.2, 1.4), (0.5, 0.7)],
    };
    config.mc.seed = 903;
    config
}

/// Dubins-type vehicle in 3-D, RBF dictionary, cylindrical uncertainty set.
pub fn example3() -> ExperimentConfig {
    ExperimentConfig {
        name: "example3".into(),
        system: "dubins".into(),
        domain: None,
        dictionary: DictionarySpec::Rbf1d {
            centers_per_axis: 12,
            width: Default::default(),
        },
        data: DataConfig {
            n_points: 1000,
            dt: 0.2,
            horizon: 4.0,
            substeps: 10,
            seed: 103,
            sample_region: None,
        },
        uncertainty_set: Region::Cylinder {
            disc_axes: (0, 1),
            disc_center: (0.0, 0.0),
            radius: 1.0,
            interval_axis: 2,
            interval: (-1.0, 1.0),
        },
        propagation: PropagationConfig {
            steps: 20,
            report_times: vec![0.0, 2.0, 4.0],
        },
        mc: McConfig {
            n_samples: 3000,
            seed: 904,
        },
        quadrature: QuadratureSpec::default(),
        support_threshold: 1e-3,
    }
}
