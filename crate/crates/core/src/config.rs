//! Flat TOML experiment configuration with `key=value` overrides.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::plant::{LtiSystem, PlantLabel};
use crate::sketch::SketchConfig;
use crate::subspace::LqrWeights;

/// Which measured state the refreshed gain acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StatePolicy {
    /// `u*(t+1) = -K_t x(t+1)`: the gain learned from the newest sample acts on
    /// the state that sample produced.
    #[default]
    Current,
    /// `u*(t+1) = -K_t x(t)`, reusing the state the gain was learned at.
    Stale,
}

/// Every knob of the comparison experiment. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub seeds: usize,
    pub actual_a: Vec<Vec<f64>>,
    pub actual_b: Vec<Vec<f64>>,
    pub similar_a: Vec<Vec<f64>>,
    pub similar_b: Vec<Vec<f64>>,
    /// Prediction horizon `k_p`.
    pub horizon: usize,
    pub q: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    /// Historical record length `N_t`.
    pub record_length: usize,
    /// `σ²_ud`.
    pub record_input_variance: f64,
    /// Process noise variance of the similar plant during the historical run.
    pub record_noise_variance: f64,
    /// Process noise variance of the actual plant, `η = v·I`.
    pub noise_variance: f64,
    /// `σ²_uE` grid, one table case each.
    pub explore_variances: Vec<f64>,
    pub t_explore: usize,
    pub t_exploit: usize,
    /// MOESP block depth.
    pub moesp_depth: usize,
    /// Sketch oversampling `l`.
    pub oversampling: usize,
    /// Weight `γ` of online columns.
    pub gamma: f64,
    pub state_policy: StatePolicy,
    pub x0: Vec<f64>,
    pub pinv_tol: f64,
    pub out_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            seed: 2024,
            seeds: 20,
            actual_a: vec![vec![1.0, 0.4], vec![0.005, -0.99]],
            actual_b: vec![vec![0.2], vec![0.5]],
            similar_a: vec![vec![0.8, 0.3], vec![0.105, -0.89]],
            similar_b: vec![vec![0.21], vec![0.6]],
            horizon: 4,
            q: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            p: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            r: vec![vec![1.0]],
            record_length: 100_000,
            record_input_variance: 1.0,
            record_noise_variance: 1e-4,
            noise_variance: 1e-4,
            explore_variances: vec![1.15, 0.83, 0.08, 0.001, 3.2e-5, 9.5e-8, 1.1e-10],
            t_explore: 50,
            t_exploit: 150,
            moesp_depth: 5,
            oversampling: 10,
            gamma: 1.0,
            state_policy: StatePolicy::Current,
            x0: vec![s, s],
            pinv_tol: crate::linalg::DEFAULT_PINV_TOL,
            out_dir: "results".into(),
        }
    }
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{name} must be a non-empty rectangular matrix")));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("{name} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl ExperimentConfig {
    /// Parse TOML; missing keys take their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Apply `key=value` overrides. Values are read as TOML (`1e-3`,
    /// `[1.0, 2.0]`, `true`); anything that does not parse is taken as a string.
    pub fn with_overrides<S: AsRef<str>>(&self, pairs: &[S]) -> Result<Self> {
        if pairs.is_empty() {
            return Ok(self.clone());
        }
        let mut table = toml::Table::try_from(self)?;
        for pair in pairs {
            let pair = pair.as_ref();
            let (key, raw) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{pair}` is not key=value")))?;
            let key = key.trim();
            if !table.contains_key(key) {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
            let value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
                Ok(mut t) => t.remove("v").expect("parsed key"),
                Err(_) => toml::Value::String(raw.trim().to_string()),
            };
            table.insert(key.to_string(), value);
        }
        let cfg: Self = table.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `T_iter = T_explore + T_exploit`.
    pub fn t_iter(&self) -> usize {
        self.t_explore + self.t_exploit
    }

    pub fn validate(&self) -> Result<()> {
        let actual = self.actual()?;
        let similar = self.similar()?;
        if actual.state_dim() != similar.state_dim() || actual.input_dim() != similar.input_dim() {
            return Err(Error::Config("actual and similar plants differ in shape".into()));
        }
        self.weights()?;
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if i64::try_from(self.seed).is_err() {
            return Err(Error::Config(format!("seed {} exceeds the TOML integer range", self.seed)));
        }
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        let variances = [
            self.record_input_variance,
            self.record_noise_variance,
            self.noise_variance,
        ];
        if variances
            .iter()
            .chain(&self.explore_variances)
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(Error::Config("variances must be finite and non-negative".into()));
        }
        if self.explore_variances.is_empty() {
            return Err(Error::Config("explore_variances is empty".into()));
        }
        if self.x0.len() != actual.state_dim() || self.x0.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config(format!(
                "x0 must hold {} finite values",
                actual.state_dim()
            )));
        }
        let k = self.horizon + 1;
        if self.record_length < 2 * k + 1 {
            return Err(Error::Config(format!(
                "record_length {} is too short for horizon {}",
                self.record_length, self.horizon
            )));
        }
        if self.moesp_depth < 2 {
            return Err(Error::Config("moesp_depth must be at least 2".into()));
        }
        if !(self.pinv_tol > 0.0 && self.pinv_tol < 1.0) {
            return Err(Error::Config("pinv_tol must lie in (0, 1)".into()));
        }
        self.sketch(0).validate()
    }

    fn system(&self, a: &[Vec<f64>], b: &[Vec<f64>], var: f64, label: PlantLabel) -> Result<LtiSystem> {
        let a = matrix("a", a)?;
        let b = matrix("b", b)?;
        let n = a.nrows();
        LtiSystem::new(a, b, DMatrix::identity(n, n) * var, label)
    }

    /// The plant under control, with `η = noise_variance · I`.
    pub fn actual(&self) -> Result<LtiSystem> {
        self.system(&self.actual_a, &self.actual_b, self.noise_variance, PlantLabel::Actual)
    }

    /// The plant behind the historical record.
    pub fn similar(&self) -> Result<LtiSystem> {
        self.system(
            &self.similar_a,
            &self.similar_b,
            self.record_noise_variance,
            PlantLabel::Similar,
        )
    }

    pub fn weights(&self) -> Result<LqrWeights> {
        LqrWeights::new(
            matrix("q", &self.q)?,
            matrix("p", &self.p)?,
            matrix("r", &self.r)?,
            self.horizon,
        )
    }

    pub fn initial_state(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x0)
    }

    pub fn sketch(&self, seed: u64) -> SketchConfig {
        SketchConfig {
            oversampling: self.oversampling,
            seed,
            gamma: self.gamma,
        }
    }

    /// First 12 hex digits of the SHA-256 of the serialized config. The output
    /// directory is not part of the identity.
    pub fn run_id(&self) -> Result<String> {
        let mut h = Sha256::new();
        let keyed = Self {
            out_dir: String::new(),
            ..self.clone()
        };
        h.update(keyed.to_toml()?.as_bytes());
        h.update(self.seed.to_le_bytes());
        Ok(hex::encode(h.finalize())[..12].to_string())
    }
}
