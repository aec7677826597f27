//! Seeded LTI plants with process noise, trajectory logs and realized costs.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::hankel::SignalRecord;
use crate::rng::{stream_rng, Stream};
use crate::subspace::LqrWeights;

/// State norm beyond which a run is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantLabel {
    Actual,
    Similar,
}

/// `x(t+1) = A x(t) + B u(t) + e(t)`, `y(t) = x(t)`, `e ~ N(0, η)`.
#[derive(Debug, Clone)]
pub struct LtiSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub noise_cov: DMatrix<f64>,
    pub label: PlantLabel,
    noise_factor: DMatrix<f64>,
}

impl LtiSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        noise_cov: DMatrix<f64>,
        label: PlantLabel,
    ) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || b.nrows() != n || noise_cov.shape() != (n, n) {
            return Err(dim_err(format!(
                "plant matrices A {:?}, B {:?}, η {:?} are inconsistent",
                a.shape(),
                b.shape(),
                noise_cov.shape()
            )));
        }
        if (&noise_cov - noise_cov.transpose()).norm() > 1e-12 * noise_cov.norm().max(1.0) {
            return Err(Error::Config("noise covariance must be symmetric".into()));
        }
        // η = V Λ Vᵀ, factor V Λ^{1/2} tolerates singular η
        let eig = SymmetricEigen::new(noise_cov.clone());
        if eig.eigenvalues.iter().any(|&l| l < -1e-12 * noise_cov.norm().max(1.0)) {
            return Err(Error::Config("noise covariance must be PSD".into()));
        }
        let sqrt_l = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let noise_factor = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_l);
        Ok(Self {
            a,
            b,
            noise_cov,
            label,
            noise_factor,
        })
    }

    /// The controlled plant of the numerical study with `η = noise_var · I`.
    pub fn benchmark_actual(noise_var: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.40, 0.005, -0.99]),
            DMatrix::from_column_slice(2, 1, &[0.2, 0.5]),
            DMatrix::identity(2, 2) * noise_var,
            PlantLabel::Actual,
        )
    }

    /// The perturbed twin that produced the historical record.
    pub fn benchmark_similar(noise_var: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[0.80, 0.30, 0.105, -0.89]),
            DMatrix::from_column_slice(2, 1, &[0.21, 0.6]),
            DMatrix::identity(2, 2) * noise_var,
            PlantLabel::Similar,
        )
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Output matrix, always the identity.
    pub fn c(&self) -> DMatrix<f64> {
        DMatrix::identity(self.state_dim(), self.state_dim())
    }

    /// Eigenvalues of `A` as `(re, im)` pairs sorted by real part, descending.
    pub fn eigenvalues(&self) -> Vec<(f64, f64)> {
        sorted_eigenvalues(&self.a)
    }

    pub fn sample_noise<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.state_dim(), |_, _| StandardNormal.sample(rng));
        &self.noise_factor * z
    }
}

pub fn sorted_eigenvalues(a: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let mut ev: Vec<(f64, f64)> = a
        .complex_eigenvalues()
        .iter()
        .map(|c| (c.re, c.im))
        .collect();
    ev.sort_by(|x, y| y.0.total_cmp(&x.0).then(y.1.total_cmp(&x.1)));
    ev
}

/// Logged trajectory: `states[t] = x(t)` for `t = 0..=T`, `inputs[t]` and
/// `noise[t]` for `t < T`. Outputs are the states.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryLog {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub noise: Vec<DVector<f64>>,
}

impl TrajectoryLog {
    /// Number of applied inputs.
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Largest deviation from the plant recursion given the logged noise.
    pub fn recursion_residual(&self, sys: &LtiSystem) -> f64 {
        (0..self.len())
            .map(|t| {
                let pred = &sys.a * &self.states[t] + &sys.b * &self.inputs[t] + &self.noise[t];
                (pred - &self.states[t + 1]).amax()
            })
            .fold(0.0, f64::max)
    }

    /// `(u(t), y(t))` pairs for `t` in `range` as a record.
    pub fn io_record(&self, range: std::ops::Range<usize>) -> Result<SignalRecord> {
        SignalRecord::from_samples(&self.inputs[range.clone()], &self.states[range])
    }

    /// CSV with header `t,x1..xn,u1..um,cost_stage`, one row per applied input.
    pub fn write_csv<W: Write>(&self, writer: W, weights: &LqrWeights) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let n = self.states.first().map_or(0, |x| x.len());
        let m = self.inputs.first().map_or(0, |u| u.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=m).map(|i| format!("u{i}")));
        header.push("cost_stage".into());
        wtr.write_record(&header)?;
        for t in 0..self.len() {
            let mut row = vec![t.to_string()];
            row.extend(self.states[t].iter().map(|v| format!("{v:e}")));
            row.extend(self.inputs[t].iter().map(|v| format!("{v:e}")));
            row.push(format!("{:e}", weights.stage_cost(&self.states[t], &self.inputs[t])));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>, weights: &LqrWeights) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?), weights)
    }
}

/// A plant instance advancing in time with its own noise stream.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    sys: &'a LtiSystem,
    noise_rng: ChaCha8Rng,
    log: TrajectoryLog,
}

impl<'a> Simulator<'a> {
    pub fn new(sys: &'a LtiSystem, x0: DVector<f64>, noise_rng: ChaCha8Rng) -> Result<Self> {
        if x0.len() != sys.state_dim() {
            return Err(dim_err(format!(
                "initial state has length {}, expected {}",
                x0.len(),
                sys.state_dim()
            )));
        }
        Ok(Self {
            sys,
            noise_rng,
            log: TrajectoryLog {
                states: vec![x0],
                ..TrajectoryLog::default()
            },
        })
    }

    /// Simulator on the plant-noise stream of `seed`.
    pub fn seeded(sys: &'a LtiSystem, x0: DVector<f64>, seed: u64) -> Result<Self> {
        Self::new(sys, x0, stream_rng(seed, Stream::PlantNoise))
    }

    pub fn time(&self) -> usize {
        self.log.inputs.len()
    }

    pub fn state(&self) -> &DVector<f64> {
        self.log.states.last().expect("log holds the initial state")
    }

    /// Apply `u` at the current time; returns the next state (the output at
    /// the next time index).
    pub fn step(&mut self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.sys.input_dim() {
            return Err(dim_err(format!(
                "input has length {}, expected {}",
                u.len(),
                self.sys.input_dim()
            )));
        }
        if !u.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("plant input"));
        }
        let e = self.sys.sample_noise(&mut self.noise_rng);
        let x_next = &self.sys.a * self.state() + &self.sys.b * u + &e;
        let norm = x_next.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Diverged {
                step: self.time(),
                norm,
            });
        }
        self.log.inputs.push(u.clone());
        self.log.noise.push(e);
        self.log.states.push(x_next.clone());
        Ok(x_next)
    }

    pub fn log(&self) -> &TrajectoryLog {
        &self.log
    }

    pub fn into_log(self) -> TrajectoryLog {
        self.log
    }
}

/// Realized costs, split at the end of exploration.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CostLedger {
    pub j_explore: f64,
    pub j_exploit: f64,
    pub j_total: f64,
    #[serde(skip)]
    pub stage_costs: Vec<f64>,
}

/// Sum the stage costs `x(t)ᵀQx(t) + u(t)ᵀRu(t)` over every applied input;
/// steps before `explore_steps` count as exploration. No terminal term.
pub fn realized_cost(log: &TrajectoryLog, w: &LqrWeights, explore_steps: usize) -> CostLedger {
    let stage_costs: Vec<f64> = (0..log.len())
        .map(|t| w.stage_cost(&log.states[t], &log.inputs[t]))
        .collect();
    let split = explore_steps.min(stage_costs.len());
    let j_explore: f64 = stage_costs[..split].iter().sum();
    let j_exploit: f64 = stage_costs[split..].iter().sum();
    CostLedger {
        j_explore,
        j_exploit,
        j_total: j_explore + j_exploit,
        stage_costs,
    }
}

/// Drive `sys` open loop for `len` steps from `x0` with iid `N(0, σ²)` inputs.
pub fn simulate_open_loop(
    sys: &LtiSystem,
    x0: DVector<f64>,
    len: usize,
    input_var: f64,
    input_rng: &mut ChaCha8Rng,
    noise_rng: ChaCha8Rng,
) -> Result<TrajectoryLog> {
    if !(input_var >= 0.0) {
        return Err(Error::Config(format!("input variance {input_var} is negative")));
    }
    let std = input_var.sqrt();
    let m = sys.input_dim();
    let mut sim = Simulator::new(sys, x0, noise_rng)?;
    for _ in 0..len {
        let u = DVector::from_fn(m, |_, _| {
            let z: f64 = StandardNormal.sample(input_rng);
            std * z
        });
        sim.step(&u)?;
    }
    Ok(sim.into_log())
}

/// Historical open-loop experiment on `sys` from `x(0) = 0`: `len` samples
/// with white Gaussian inputs of variance `input_var`.
pub fn generate_similar_record(
    sys: &LtiSystem,
    len: usize,
    input_var: f64,
    seed: u64,
) -> Result<SignalRecord> {
    if len == 0 {
        return Err(Error::RecordTooShort { len, min: 1 });
    }
    let log = simulate_open_loop(
        sys,
        DVector::zeros(sys.state_dim()),
        len,
        input_var,
        &mut stream_rng(seed, Stream::HistoricalInput),
        stream_rng(seed, Stream::HistoricalNoise),
    )?;
    log.io_record(0..len)
}
