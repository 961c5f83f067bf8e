//! Run configuration: TOML file with CLI overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::plant::{self, LtiSystem};
use crate::prediction::{GprMode, KernelParams};
use crate::scheduler::{SchedulerKind, SchedulerParams};

pub fn dbm_to_linear(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Number of control systems M.
    pub systems: usize,
    /// Horizon K in slots.
    pub slots: usize,
    pub seed: u64,
    pub scheduler: SchedulerKind,
    pub out_dir: Option<PathBuf>,
    pub plant: PlantConfig,
    pub channel: ChannelConfig,
    pub gpr: GprConfig,
    pub scheduler_params: SchedParamsConfig,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            systems: 2,
            slots: 90,
            seed: 0,
            scheduler: SchedulerKind::StabilityAware,
            out_dir: None,
            plant: PlantConfig::default(),
            channel: ChannelConfig::default(),
            gpr: GprConfig::default(),
            scheduler_params: SchedParamsConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    /// Named preset; "pendulum" is the only built-in.
    pub preset: Option<String>,
    /// Explicit matrices override the preset.
    pub a: Option<Vec<Vec<f64>>>,
    pub b: Option<Vec<Vec<f64>>>,
    pub zs: Option<Vec<Vec<f64>>>,
    pub zu: Option<Vec<Vec<f64>>>,
    /// Plant-noise standard deviation per state component.
    pub noise_std: f64,
    /// Required per-slot Lyapunov decay rate.
    pub zeta: f64,
    pub x0: Option<Vec<f64>>,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            preset: Some("cartpole".into()),
            a: None,
            b: None,
            zs: None,
            zu: None,
            noise_std: plant::DEFAULT_NOISE_STD,
            zeta: plant::DEFAULT_ZETA,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    /// Receiver noise floor in dBm.
    pub n0_dbm: f64,
    /// Success threshold in dB, both directions.
    pub snr_threshold_db: f64,
    /// Scale on the per-entry channel variance (1 keeps unit mean gain).
    pub variance_scale: f64,
    /// Amplitude reference of the analog state transmission: samples are
    /// scaled to roughly unit power before the channel and scaled back at
    /// the receiver, so estimation errors are proportional to it.
    pub amp_state: f64,
    /// Amplitude reference of the analog action transmission.
    pub amp_action: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            n0_dbm: -20.0,
            snr_threshold_db: 26.0,
            variance_scale: 100.0,
            amp_state: 0.02,
            amp_action: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GprConfig {
    pub h_q: f64,
    pub h_k: f64,
    pub nu: f64,
    pub sigma_n2: f64,
    /// "direct" trains on receptions only; "recursive" also on predictions.
    pub mode: String,
    /// Sliding-window size; 0 keeps the training set unbounded.
    pub window: usize,
}

impl Default for GprConfig {
    fn default() -> Self {
        Self {
            h_q: 1.0,
            h_k: 1.0,
            nu: 1.0,
            sigma_n2: 0.01,
            mode: "recursive".into(),
            window: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedParamsConfig {
    pub v: f64,
    pub omega_beta: f64,
    pub omega_p: f64,
    /// AoI auxiliary cap; 0 defaults to the horizon length.
    pub b_max: f64,
    pub p_max_dbm: f64,
    /// Event-trigger discrepancy threshold (baselines).
    pub trigger_threshold: f64,
}

impl Default for SchedParamsConfig {
    fn default() -> Self {
        Self {
            v: 1000.0,
            omega_beta: 1.0,
            omega_p: 1.0,
            b_max: 0.0,
            p_max_dbm: 20.0,
            trigger_threshold: 0.02,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Keep per-slot theta and AoI traces in the summary.
    pub traces: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { traces: true }
    }
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.systems == 0 {
            return Err(Error::Config("systems must be at least 1".into()));
        }
        if self.slots == 0 {
            return Err(Error::Config("slots must be at least 1".into()));
        }
        if self.plant.noise_std < 0.0 {
            return Err(Error::Config("plant.noise_std must be non-negative".into()));
        }
        if !(self.plant.zeta > 0.0 && self.plant.zeta <= 1.0) {
            return Err(Error::Config("plant.zeta must lie in (0, 1]".into()));
        }
        if self.channel.variance_scale <= 0.0 {
            return Err(Error::Config("channel.variance_scale must be positive".into()));
        }
        if self.channel.amp_state <= 0.0 || self.channel.amp_action <= 0.0 {
            return Err(Error::Config("channel amplitude references must be positive".into()));
        }
        if self.gpr.h_q <= 0.0 || self.gpr.h_k <= 0.0 || self.gpr.nu <= 0.0 {
            return Err(Error::Config("gpr hyperparameters must be positive".into()));
        }
        if self.gpr.sigma_n2 < 0.0 {
            return Err(Error::Config("gpr.sigma_n2 must be non-negative".into()));
        }
        self.gpr_mode()?;
        if self.scheduler_params.v < 0.0 {
            return Err(Error::Config("scheduler_params.v must be non-negative".into()));
        }
        if self.scheduler_params.omega_beta <= 0.0 || self.scheduler_params.omega_p <= 0.0 {
            return Err(Error::Config("scheduler cost weights must be positive".into()));
        }
        if self.scheduler_params.trigger_threshold < 0.0 {
            return Err(Error::Config("trigger_threshold must be non-negative".into()));
        }
        self.build_system()?;
        Ok(())
    }

    pub fn gpr_mode(&self) -> Result<GprMode> {
        match self.gpr.mode.as_str() {
            "direct" => Ok(GprMode::Direct),
            "recursive" => Ok(GprMode::Recursive),
            other => Err(Error::Config(format!(
                "gpr.mode must be 'direct' or 'recursive', got '{other}'"
            ))),
        }
    }

    pub fn kernel_params(&self) -> KernelParams {
        KernelParams {
            h_q: self.gpr.h_q,
            h_k: self.gpr.h_k,
            nu: self.gpr.nu,
            sigma_n2: self.gpr.sigma_n2,
        }
    }

    pub fn gpr_window(&self) -> Option<usize> {
        if self.gpr.window == 0 {
            None
        } else {
            Some(self.gpr.window)
        }
    }

    pub fn n0_linear(&self) -> f64 {
        dbm_to_linear(self.channel.n0_dbm)
    }

    pub fn snr_threshold_linear(&self) -> f64 {
        db_to_linear(self.channel.snr_threshold_db)
    }

    pub fn p_max_linear(&self) -> f64 {
        dbm_to_linear(self.scheduler_params.p_max_dbm)
    }

    pub fn scheduler_params(&self) -> SchedulerParams {
        let p_max = self.p_max_linear();
        SchedulerParams {
            v: self.scheduler_params.v,
            omega_beta: self.scheduler_params.omega_beta,
            omega_p: self.scheduler_params.omega_p,
            b_max: if self.scheduler_params.b_max > 0.0 {
                self.scheduler_params.b_max
            } else {
                self.slots as f64
            },
            p_max_u: p_max,
            p_max_d: p_max,
        }
    }

    fn matrix_from(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::Config(format!("{what}: empty matrix literal")));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Config(format!("{what}: ragged matrix literal")));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("{what}: non-finite entry")));
        }
        Ok(Matrix::from_row_slice(rows.len(), cols, &flat))
    }

    /// Builds the (shared) control system this run simulates.
    pub fn build_system(&self) -> Result<LtiSystem> {
        let (a, b) = match (&self.plant.a, &self.plant.b) {
            (Some(a_rows), Some(b_rows)) => (
                Self::matrix_from(a_rows, "plant.a")?,
                Self::matrix_from(b_rows, "plant.b")?,
            ),
            (None, None) => match self.plant.preset.as_deref() {
                Some("cartpole") | None => plant::cartpole_matrices(),
                Some("pendulum") => plant::pendulum_matrices(),
                Some(other) => return Err(Error::Config(format!("unknown plant preset '{other}'"))),
            },
            _ => {
                return Err(Error::Config(
                    "plant.a and plant.b must be given together".into(),
                ))
            }
        };
        let d = a.nrows();
        let p = b.ncols();
        let zs = match &self.plant.zs {
            Some(rows) => Self::matrix_from(rows, "plant.zs")?,
            None => Matrix::identity(d, d),
        };
        let zu = match &self.plant.zu {
            Some(rows) => Self::matrix_from(rows, "plant.zu")?,
            None => Matrix::identity(p, p),
        };
        let w = Matrix::identity(d, d) * self.plant.noise_std * self.plant.noise_std;
        LtiSystem::new(a, b, w, zs, zu, self.plant.zeta)
    }

    /// Initial state: explicit, else the standard tilt for the 4-state
    /// presets, else the origin.
    pub fn initial_state(&self, state_dim: usize) -> Result<crate::numerics::Vector> {
        match &self.plant.x0 {
            Some(values) => {
                if values.len() != state_dim {
                    return Err(Error::Config(format!(
                        "x0 has {} entries, plant expects {state_dim}",
                        values.len()
                    )));
                }
                Ok(crate::numerics::Vector::from_row_slice(values))
            }
            None => {
                if self.plant.a.is_none() && state_dim == 4 {
                    Ok(crate::numerics::Vector::from_row_slice(&plant::PENDULUM_X0))
                } else {
                    Ok(crate::numerics::Vector::zeros(state_dim))
                }
            }
        }
    }
}
