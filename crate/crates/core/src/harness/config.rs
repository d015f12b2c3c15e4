use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::schedule::Schedule;
use crate::error::{Error, Result};
use crate::spectra::SpectrumParams;
use crate::transport::{Observable, ObservableKind, Role};

/// Knobs of the particle simulations in one sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    /// Final time `t` of every run.
    pub horizon: f64,
    /// Largest time step; the horizon is split into equal steps.
    pub dt: f64,
    pub replicas: usize,
    pub shells: usize,
    pub dirs_per_shell: usize,
    /// Midpoint-grid spacing for `<T, theta>`.
    pub grid_spacing: f64,
    /// Feynman-Kac paths per grid point (only matters when `kappa > 0`).
    pub fk_samples: usize,
    pub pairs: usize,
    pub pair_separation: f64,
    pub pair_times: Vec<f64>,
    /// Replicas (the first ones) that also evaluate the grid energy.
    pub energy_replicas: usize,
    pub energy_spacing: f64,
    pub oracle_samples: usize,
    pub max_step_fraction: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            horizon: 1.0,
            dt: 0.04,
            replicas: 10_000,
            shells: 18,
            dirs_per_shell: 4,
            grid_spacing: 0.5,
            fk_samples: 1,
            pairs: 8,
            pair_separation: 0.5,
            pair_times: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            energy_replicas: 2,
            energy_spacing: 0.1,
            oracle_samples: 10_000,
            max_step_fraction: crate::transport::DEFAULT_STEP_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablesConfig {
    pub initial: ObservableKind,
    pub test_function: ObservableKind,
}

impl Default for ObservablesConfig {
    fn default() -> Self {
        ObservablesConfig {
            initial: ObservableKind::GaussianBlob {
                center: vec![0.0, 0.0],
                width: 1.0,
                height: 1.0,
            },
            test_function: ObservableKind::Bump {
                center: vec![0.0, 0.0],
                radius: 2.0,
                height: 1.0,
            },
        }
    }
}

impl ObservablesConfig {
    pub fn initial(&self) -> Result<Observable> {
        Observable::new(self.initial.clone(), Role::InitialData)
    }

    pub fn test_function(&self) -> Result<Observable> {
        Observable::new(self.test_function.clone(), Role::TestFunction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            formats: vec!["csv".into(), "json".into(), "plot".into()],
        }
    }
}

/// Whole experiment description, one TOML section per part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub spectrum: SpectrumParams,
    pub schedule: Schedule,
    pub transport: TransportConfig,
    pub observables: ObservablesConfig,
    pub output: OutputConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Static consistency checks; schedule soundness is checked separately.
    pub fn check(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        self.spectrum.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.schedule.check()?;
        let t = &self.transport;
        if !(t.horizon > 0.0) || !(t.dt > 0.0) {
            return cfg("transport.horizon and transport.dt must be positive".into());
        }
        if t.replicas == 0 || t.shells == 0 || t.fk_samples == 0 {
            return cfg("transport.replicas, shells and fk_samples must be positive".into());
        }
        if !(t.grid_spacing > 0.0) || !(t.energy_spacing > 0.0) || !(t.pair_separation > 0.0) {
            return cfg("grid spacings and pair_separation must be positive".into());
        }
        if t.pair_times.iter().any(|&s| !(s > 0.0 && s <= t.horizon))
            || t.pair_times.windows(2).any(|w| w[1] <= w[0])
        {
            return cfg("pair_times must increase within (0, horizon]".into());
        }
        if !(t.max_step_fraction > 0.0) {
            return cfg("max_step_fraction must be positive".into());
        }
        let d = self.spectrum.dim;
        for (name, kind) in [
            ("initial", &self.observables.initial),
            ("test_function", &self.observables.test_function),
        ] {
            let dim_ok = match kind {
                ObservableKind::GaussianBlob { center, .. } | ObservableKind::Bump { center, .. } => center.len() == d,
                ObservableKind::Constant { .. } => true,
            };
            if !dim_ok {
                return cfg(format!("observables.{name} center must have {d} components"));
            }
        }
        self.observables
            .initial()
            .and(self.observables.test_function())
            .map_err(|e| Error::Config(e.to_string()))?;
        for f in &self.output.formats {
            if !["csv", "json", "plot"].contains(&f.as_str()) {
                return cfg(format!("unknown output format {f:?}"));
            }
        }
        Ok(())
    }
}
