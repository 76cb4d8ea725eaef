//! `key = value` run configuration.

use std::fmt::Write as _;

use thiserror::Error;

use crate::association::GateConfig;
use crate::netproto::Assembler;
use crate::tracker::ProcessModel;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// seconds between frames
    pub dt: f64,
    /// m²
    pub q_position: f64,
    /// (m/s)²
    pub q_velocity: f64,
    /// px², diagonal of the per-camera observation covariance
    pub r_pixel: f64,
    pub gate: GateConfig,
    /// seconds
    pub wait_budget: f64,
    pub seed: u64,
    /// worker threads for per-target stages; 0 or 1 runs inline
    pub threads: usize,
    /// capacity of the packet queue between network readers and the hub
    pub queue_capacity: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            q_position: ProcessModel::DEFAULT_Q_POSITION,
            q_velocity: ProcessModel::DEFAULT_Q_VELOCITY,
            r_pixel: 1.0,
            gate: GateConfig::default(),
            wait_budget: Assembler::DEFAULT_WAIT_BUDGET,
            seed: 0,
            threads: 1,
            queue_capacity: 1024,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("dt", self.dt),
            ("r_pixel", self.r_pixel),
            ("wait_budget", self.wait_budget),
        ] {
            if !(v > 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be > 0")));
            }
        }
        for (name, v) in [("q_position", self.q_position), ("q_velocity", self.q_velocity)] {
            if !(v >= 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be >= 0")));
            }
        }
        if self.queue_capacity == 0 {
            return Err(ConfigError::Invalid("queue_capacity must be > 0".into()));
        }
        self.gate
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn process_model(&self) -> ProcessModel {
        ProcessModel::new(self.dt, self.q_position, self.q_velocity)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ConfigError::Parse { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
                v.parse().map_err(|_| format!("invalid value {v:?}"))
            }
            let r: Result<(), String> = (|| {
                match key {
                    "dt" => c.dt = num(value)?,
                    "fps" => c.dt = 1.0 / num::<f64>(value)?,
                    "q_position" => c.q_position = num(value)?,
                    "q_velocity" => c.q_velocity = num(value)?,
                    "r_pixel" => c.r_pixel = num(value)?,
                    "dist2d_threshold" => c.gate.dist2d_threshold = num(value)?,
                    "area_threshold" => c.gate.area_threshold = num(value)?,
                    "mahalanobis_gate" => c.gate.mahalanobis_gate = num(value)?,
                    "birth_reprojection_threshold" => c.gate.birth_reprojection_threshold = num(value)?,
                    "death_covariance_threshold" => c.gate.death_covariance_threshold = num(value)?,
                    "min_birth_cameras" => c.gate.min_birth_cameras = num(value)?,
                    "sigma_birth" => c.gate.sigma_birth = num(value)?,
                    "sigma_vbirth" => c.gate.sigma_vbirth = num(value)?,
                    "wait_budget" => c.wait_budget = num(value)?,
                    "seed" => c.seed = num(value)?,
                    "threads" => c.threads = num(value)?,
                    "queue_capacity" => c.queue_capacity = num(value)?,
                    _ => return Err(format!("unknown key {key:?}")),
                }
                Ok(())
            })();
            r.map_err(err)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Text form that [`TrackerConfig::parse`] reads back unchanged.
    pub fn to_text(&self) -> String {
        let g = &self.gate;
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("dt", &self.dt);
        kv("q_position", &self.q_position);
        kv("q_velocity", &self.q_velocity);
        kv("r_pixel", &self.r_pixel);
        kv("dist2d_threshold", &g.dist2d_threshold);
        kv("area_threshold", &g.area_threshold);
        kv("mahalanobis_gate", &g.mahalanobis_gate);
        kv("birth_reprojection_threshold", &g.birth_reprojection_threshold);
        kv("death_covariance_threshold", &g.death_covariance_threshold);
        kv("min_birth_cameras", &g.min_birth_cameras);
        kv("sigma_birth", &g.sigma_birth);
        kv("sigma_vbirth", &g.sigma_vbirth);
        kv("wait_budget", &self.wait_budget);
        kv("seed", &self.seed);
        kv("threads", &self.threads);
        kv("queue_capacity", &self.queue_capacity);
        s
    }
}
