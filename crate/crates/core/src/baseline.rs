//! Explore/exploit comparator: ordinary MOESP identification from an
//! open-loop exploration record, then model-based receding-horizon LQR.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::hankel::{build_hankel, SignalRecord};
use crate::linalg::{least_squares, qr_r_factor, singular_values, svd};
use crate::plant::{realized_cost, sorted_eigenvalues, CostLedger, LtiSystem, Simulator, TrajectoryLog};
use crate::rng::{stream_rng, Stream};
use crate::subspace::{batch_predictors, lqr_gain, GainMatrix, LqrWeights};

/// Relative singular-value floor used for rank decisions in MOESP.
const RANK_TOL: f64 = 1e-10;

/// Identified `(Â, B̂, Ĉ)`, defined up to a similarity transform.
#[derive(Debug, Clone)]
pub struct MoespEstimate {
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    pub c_hat: DMatrix<f64>,
    /// Singular values of the output block used to pick the order.
    pub singular_values: DVector<f64>,
    /// Condition number of the input block of the LQ factor.
    pub input_condition: f64,
}

impl MoespEstimate {
    pub fn eigenvalues(&self) -> Vec<(f64, f64)> {
        sorted_eigenvalues(&self.a_hat)
    }

    /// The model in the measured-state basis (`C = I`):
    /// `(Ĉ Â Ĉ⁻¹, Ĉ B̂)`.
    pub fn output_coordinates(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let lu = self.c_hat.transpose().lu();
        // Ĉ Â Ĉ⁻¹ = (Ĉ⁻ᵀ (Ĉ Â)ᵀ)ᵀ
        let ca = &self.c_hat * &self.a_hat;
        let a = lu
            .solve(&ca.transpose())
            .ok_or_else(|| Error::SingularTransform(f64::INFINITY))?
            .transpose();
        Ok((a, &self.c_hat * &self.b_hat))
    }
}

/// Ordinary MOESP with block depth `k` and model order `order`.
///
/// `Â` comes from the shift invariance of the extended observability matrix,
/// `B̂` from the input-output block of the LQ factor projected onto the
/// orthogonal complement of that matrix, with zero feedthrough.
pub fn moesp_identify(record: &SignalRecord, k: usize, order: usize) -> Result<MoespEstimate> {
    let (m, p, len) = (record.input_dim(), record.output_dim(), record.len());
    if k < 2 || order == 0 || order > (k - 1) * p {
        return Err(dim_err(format!(
            "depth {k} cannot resolve order {order} from {p} outputs"
        )));
    }
    if len < 2 * k + order {
        return Err(Error::RecordTooShort {
            len,
            min: 2 * k + order,
        });
    }
    let width = len - k + 1;
    let rows = k * (m + p);
    if width < rows {
        return Err(Error::RecordTooShort {
            len,
            min: rows + k - 1,
        });
    }

    let u_h = build_hankel(record.inputs(), 0, k, width)?;
    let y_h = build_hankel(record.outputs(), 0, k, width)?;
    let mut z = DMatrix::zeros(rows, width);
    z.rows_mut(0, k * m).copy_from(&u_h);
    z.rows_mut(k * m, k * p).copy_from(&y_h);
    let l = qr_r_factor(&z.transpose())?.transpose();

    let l11 = l.view((0, 0), (k * m, k * m)).into_owned();
    let sv11 = singular_values(&l11);
    let input_condition = if sv11.min() > 0.0 {
        sv11.max() / sv11.min()
    } else {
        f64::INFINITY
    };
    if !(sv11.max() > 0.0) || input_condition > 1.0 / RANK_TOL {
        return Err(Error::InsufficientExcitation(format!(
            "exploration input block has condition number {input_condition:e}"
        )));
    }

    let l22 = l.view((k * m, k * m), (k * p, k * p)).into_owned();
    let d = svd(&l22);
    let sv = d.sigma.clone();
    let rank = d.rank(RANK_TOL);
    if rank < order {
        return Err(Error::OrderExceedsRank { order, rank });
    }
    let u1 = d.u.columns(0, order).into_owned();
    let gamma = &u1 * DMatrix::from_diagonal(&sv.rows(0, order).map(f64::sqrt));

    let c_hat = gamma.rows(0, p).into_owned();
    let upper = gamma.rows(0, (k - 1) * p).into_owned();
    let lower = gamma.rows(p, (k - 1) * p).into_owned();
    let a_hat = least_squares(&upper, &lower, RANK_TOL)?;

    // Γ⊥ᵀ L21 L11⁻¹ = Γ⊥ᵀ T(B): the orthogonal complement removes the state
    // term, leaving a system linear in vec B (feedthrough fixed at zero)
    let gamma_perp = d.u.columns(order, k * p - order).transpose();
    let l21 = l.view((k * m, 0), (k * p, k * m));
    let g = l11
        .transpose()
        .solve_upper_triangular(&l21.transpose())
        .ok_or_else(|| Error::InsufficientExcitation("input block is singular".into()))?
        .transpose();
    let lhs = &gamma_perp * g;
    let mut markov = Vec::with_capacity(k);
    let mut ca = c_hat.clone();
    for _ in 0..k {
        markov.push(ca.clone());
        ca = &ca * &a_hat;
    }
    let mut design = DMatrix::zeros(lhs.len(), order * m);
    for b in 0..m {
        for a in 0..order {
            let mut t = DMatrix::zeros(k * p, k * m);
            for i in 1..k {
                for j in 0..i {
                    t.view_mut((i * p, j * m + b), (p, 1))
                        .copy_from(&markov[i - j - 1].column(a));
                }
            }
            let col = &gamma_perp * t;
            design.set_column(b * order + a, &DVector::from_column_slice(col.as_slice()));
        }
    }
    let target = DMatrix::from_column_slice(lhs.len(), 1, lhs.as_slice());
    let theta = least_squares(&design, &target, RANK_TOL)?;
    let b_hat = DMatrix::from_column_slice(order, m, theta.as_slice());

    Ok(MoespEstimate {
        a_hat,
        b_hat,
        c_hat,
        singular_values: sv,
        input_condition,
    })
}

/// Parameters of one explore/exploit run.
#[derive(Debug, Clone)]
pub struct MlqrConfig {
    /// Exploration input variance `σ²_uE`.
    pub explore_variance: f64,
    pub t_explore: usize,
    pub t_exploit: usize,
    /// MOESP block depth.
    pub depth: usize,
    pub weights: LqrWeights,
    pub x0: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct MlqrOutcome {
    pub ledger: CostLedger,
    pub log: TrajectoryLog,
    pub estimate: MoespEstimate,
    pub gain: GainMatrix,
    pub snr: f64,
}

/// Variance of the input-driven (noise-free, zero initial state) response over
/// the exploration, relative to the per-state noise variance `tr η / n`.
pub fn exploration_snr(sys: &LtiSystem, inputs: &[DVector<f64>]) -> f64 {
    let n = sys.state_dim();
    let mut x = DVector::zeros(n);
    let mut samples = Vec::with_capacity(inputs.len() * n);
    for u in inputs {
        x = &sys.a * &x + &sys.b * u;
        samples.extend(x.iter().cloned());
    }
    let count = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / count;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
    let noise = sys.noise_cov.trace() / n as f64;
    if noise > 0.0 {
        var / noise
    } else {
        f64::INFINITY
    }
}

/// Explore open loop with white inputs, identify with MOESP, then exploit with
/// the model-based receding-horizon gain. Uses the plant-noise and exploration
/// streams of `seed`.
pub fn run_mlqr(actual: &LtiSystem, cfg: &MlqrConfig, seed: u64) -> Result<MlqrOutcome> {
    if !(cfg.explore_variance >= 0.0) {
        return Err(Error::Config("exploration variance must be non-negative".into()));
    }
    let m = actual.input_dim();
    let n = actual.state_dim();
    let std = cfg.explore_variance.sqrt();
    let mut explore_rng = stream_rng(seed, Stream::Exploration);
    let mut sim = Simulator::seeded(actual, cfg.x0.clone(), seed)?;
    for _ in 0..cfg.t_explore {
        let u = DVector::from_fn(m, |_, _| {
            let z: f64 = StandardNormal.sample(&mut explore_rng);
            std * z
        });
        sim.step(&u)?;
    }
    let record = sim.log().io_record(0..cfg.t_explore)?;
    let snr = exploration_snr(actual, &sim.log().inputs);
    let estimate = moesp_identify(&record, cfg.depth, n)?;
    let (a, b) = estimate.output_coordinates()?;
    let gain = lqr_gain(&batch_predictors(&a, &b, cfg.weights.horizon), &cfg.weights)?;
    for _ in 0..cfg.t_exploit {
        let u = gain.control(sim.state());
        sim.step(&u)?;
    }
    let log = sim.into_log();
    Ok(MlqrOutcome {
        ledger: realized_cost(&log, &cfg.weights, cfg.t_explore),
        log,
        estimate,
        gain,
        snr,
    })
}

/// Summary of an identification for reporting.
#[derive(Debug, Clone, Serialize)]
pub struct IdentificationSummary {
    pub eigenvalues: Vec<(f64, f64)>,
    pub input_condition: f64,
}

impl From<&MoespEstimate> for IdentificationSummary {
    fn from(e: &MoespEstimate) -> Self {
        Self {
            eigenvalues: e.eigenvalues(),
            input_condition: e.input_condition,
        }
    }
}
