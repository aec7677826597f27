//! Algorithm 1 (learn from the similar record), Algorithm 2 (refine online on
//! the actual plant), the explore/exploit comparison grid, and timing harnesses.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::baseline::{run_mlqr, MlqrConfig, MlqrOutcome};
use crate::config::{ExperimentConfig, StatePolicy};
use crate::error::{Error, Result};
use crate::hankel::{assemble_stack, SignalRecord, UpdateColumnBuilder};
use crate::linalg::qr_decompose;
use crate::plant::{generate_similar_record, realized_cost, CostLedger, LtiSystem, Simulator, TrajectoryLog};
use crate::rng::{replica_seed, stream_rng, Stream};
use crate::sketch::{compress_initial, CompressedStack, SketchConfig};
use crate::subspace::{
    extract_predictors, extract_rblocks, lqr_gain, oblique_projection, EstimateDiagnostics,
    GainMatrix, LqrWeights, SubspaceEstimate, ORDER_GAP_WARN, TRAILING_BLOCK_WARN,
};

/// Controller settings shared by both algorithms.
#[derive(Debug, Clone)]
pub struct RilqrSettings {
    pub sketch: SketchConfig,
    pub weights: LqrWeights,
    pub pinv_tol: f64,
    pub t_iter: usize,
    pub state_policy: StatePolicy,
}

impl RilqrSettings {
    /// Block depth `k = k_p + 1` of the data stack.
    pub fn depth(&self) -> usize {
        self.weights.horizon + 1
    }

    pub fn from_config(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            sketch: cfg.sketch(seed),
            weights: cfg.weights()?,
            pinv_tol: cfg.pinv_tol,
            t_iter: cfg.t_iter(),
            state_policy: cfg.state_policy,
        })
    }
}

/// Extract the predictors from the current compressed stack and solve for the
/// receding-horizon gain in the measured-state basis.
pub fn learn_gain(
    compressed: &CompressedStack,
    weights: &LqrWeights,
    tol: f64,
) -> Result<(SubspaceEstimate, GainMatrix)> {
    let layout = compressed.layout();
    let blocks = extract_rblocks(compressed.factorization(), layout)?;
    let projection = oblique_projection(&blocks, &compressed.wp_bar(), tol)?;
    let estimate = extract_predictors(&blocks, &projection, layout.n)?;
    let gain = lqr_gain(&estimate.predictors()?, weights)?;
    Ok((estimate, gain))
}

/// State carried from Algorithm 1 into Algorithm 2.
#[derive(Debug, Clone)]
pub struct Algorithm1Output {
    pub estimate: SubspaceEstimate,
    pub gain: GainMatrix,
    pub compressed: CompressedStack,
    /// Holds `h_{-1}`, the newest historical window.
    pub builder: UpdateColumnBuilder,
    /// `u*(0)`.
    pub u0: DVector<f64>,
}

/// Algorithm 1: stack, compress and factor the historical record, extract
/// the predictors and the first input at `x0`.
pub fn run_algorithm1(
    record: &SignalRecord,
    settings: &RilqrSettings,
    x0: &DVector<f64>,
) -> Result<Algorithm1Output> {
    let k = settings.depth();
    let stack = assemble_stack(record, k)?;
    let builder = UpdateColumnBuilder::from_record(record, k)?;
    let compressed = compress_initial(&stack, &settings.sketch)?;
    drop(stack);
    let (estimate, gain) = learn_gain(&compressed, &settings.weights, settings.pinv_tol)?;
    let u0 = gain.control(x0);
    Ok(Algorithm1Output {
        estimate,
        gain,
        compressed,
        builder,
        u0,
    })
}

/// One closed-loop RiLQR run.
#[derive(Debug, Clone)]
pub struct RilqrRun {
    pub ledger: CostLedger,
    pub log: TrajectoryLog,
    /// First gain block before the run and after every update.
    pub gain_trace: Vec<DMatrix<f64>>,
    pub diagnostics: Vec<EstimateDiagnostics>,
    /// Iterations where re-extraction failed and the previous gain was kept.
    pub held_steps: usize,
    /// Wall time of update + re-extraction per iteration.
    pub step_times: Vec<Duration>,
}

impl RilqrRun {
    pub fn mean_step_time(&self) -> Duration {
        if self.step_times.is_empty() {
            return Duration::ZERO;
        }
        self.step_times.iter().sum::<Duration>() / self.step_times.len() as u32
    }

    pub fn median_step_time(&self) -> Duration {
        let mut t = self.step_times.clone();
        t.sort();
        t.get(t.len() / 2).copied().unwrap_or_default()
    }
}

/// Algorithm 2: apply `u*(t)`, fold the sample `(u*(t), y(t))` into the
/// compressed stack with a rank-one QR update, re-extract the gain and form
/// `u*(t+1)`. Plant noise comes from the `seed` streams.
pub fn run_algorithm2(
    init: Algorithm1Output,
    actual: &LtiSystem,
    settings: &RilqrSettings,
    x0: &DVector<f64>,
    seed: u64,
) -> Result<RilqrRun> {
    let Algorithm1Output {
        mut gain,
        mut compressed,
        mut builder,
        u0,
        estimate,
    } = init;
    if compressed.layout().n != actual.state_dim() || compressed.layout().m != actual.input_dim() {
        return Err(Error::Dimension(
            "historical record and actual plant differ in shape".into(),
        ));
    }
    let mut sim = Simulator::seeded(actual, x0.clone(), seed)?;
    let mut gain_trace = vec![gain.first_block()];
    let mut diagnostics = vec![estimate.diagnostics];
    let mut step_times = Vec::with_capacity(settings.t_iter);
    let mut held_steps = 0;
    let mut u = u0;
    for t in 0..settings.t_iter {
        let x_t = sim.state().clone();
        sim.step(&u)?;

        let started = Instant::now();
        let h = builder.next_column(&u, &x_t)?;
        compressed.streaming_update(&h, settings.sketch.gamma)?;
        match learn_gain(&compressed, &settings.weights, settings.pinv_tol) {
            Ok((est, g)) => {
                gain = g;
                diagnostics.push(est.diagnostics);
            }
            Err(e @ (Error::InsufficientExcitation(_)
            | Error::SingularTransform(_)
            | Error::NotPositiveDefinite(_))) => {
                log::debug!("step {t}: keeping previous gain ({e})");
                held_steps += 1;
            }
            Err(e) => return Err(e),
        }
        step_times.push(started.elapsed());
        gain_trace.push(gain.first_block());

        u = match settings.state_policy {
            StatePolicy::Current => gain.control(sim.state()),
            StatePolicy::Stale => gain.control(&x_t),
        };
    }
    let weak = diagnostics
        .iter()
        .filter(|d| d.order_gap < ORDER_GAP_WARN || d.trailing_block_ratio > TRAILING_BLOCK_WARN)
        .count();
    if weak > 0 || held_steps > 0 {
        log::warn!(
            "{weak} of {} gain extractions were poorly conditioned; gain held at {held_steps} steps",
            settings.t_iter
        );
    }
    let log = sim.into_log();
    Ok(RilqrRun {
        ledger: realized_cost(&log, &settings.weights, 0),
        log,
        gain_trace,
        diagnostics,
        held_steps,
        step_times,
    })
}

/// Generate the historical record for `seed` and run both algorithms.
pub fn run_rilqr_replica(cfg: &ExperimentConfig, seed: u64) -> Result<RilqrRun> {
    let similar = cfg.similar()?;
    let record = generate_similar_record(
        &similar,
        cfg.record_length,
        cfg.record_input_variance,
        seed,
    )?;
    let settings = RilqrSettings::from_config(cfg, seed)?;
    let x0 = cfg.initial_state();
    let init = run_algorithm1(&record, &settings, &x0)?;
    run_algorithm2(init, &cfg.actual()?, &settings, &x0, seed)
}

pub fn mlqr_config(cfg: &ExperimentConfig, explore_variance: f64) -> Result<MlqrConfig> {
    Ok(MlqrConfig {
        explore_variance,
        t_explore: cfg.t_explore,
        t_exploit: cfg.t_exploit,
        depth: cfg.moesp_depth,
        weights: cfg.weights()?,
        x0: cfg.initial_state(),
    })
}

pub fn run_mlqr_replica(cfg: &ExperimentConfig, explore_variance: f64, seed: u64) -> Result<MlqrOutcome> {
    run_mlqr(&cfg.actual()?, &mlqr_config(cfg, explore_variance)?, seed)
}

/// Which controllers a grid run evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Methods {
    Both,
    MlqrOnly,
    RilqrOnly,
}

impl Methods {
    fn mlqr(self) -> bool {
        self != Methods::RilqrOnly
    }

    fn rilqr(self) -> bool {
        self != Methods::MlqrOnly
    }
}

/// One seed of one case.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicaRow {
    pub case: usize,
    pub explore_variance: f64,
    pub replica: usize,
    pub seed: u64,
    pub snr: Option<f64>,
    pub j_explore: Option<f64>,
    pub j_exploit: Option<f64>,
    pub j_mlqr: Option<f64>,
    pub j_rilqr: Option<f64>,
    pub mlqr_eig_re1: Option<f64>,
    pub mlqr_eig_re2: Option<f64>,
    pub rilqr_held_steps: Option<usize>,
    pub mlqr_error: Option<String>,
    pub rilqr_error: Option<String>,
}

/// Mean and sample standard deviation over the successful replicas.
#[derive(Debug, Clone, Copy, Default, Serialize, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let count = v.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                count,
            };
        }
        let mean = v.iter().sum::<f64>() / count as f64;
        let std = if count > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, count }
    }
}

/// Seed-averaged row of the comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct CaseSummary {
    pub case: usize,
    pub explore_variance: f64,
    pub snr: Stat,
    pub j_explore: Stat,
    pub j_exploit: Stat,
    pub j_mlqr: Stat,
    pub j_rilqr: Stat,
    pub mlqr_failures: usize,
    pub rilqr_failures: usize,
}

#[derive(Debug, Clone, Serialize)]
struct CsvRow {
    case: usize,
    explore_variance: f64,
    snr: f64,
    j_explore: f64,
    j_exploit: f64,
    j_mlqr: f64,
    j_rilqr: f64,
    j_mlqr_std: f64,
    j_rilqr_std: f64,
    mlqr_ok: usize,
    rilqr_ok: usize,
    mlqr_failures: usize,
    rilqr_failures: usize,
}

impl From<&CaseSummary> for CsvRow {
    fn from(c: &CaseSummary) -> Self {
        Self {
            case: c.case,
            explore_variance: c.explore_variance,
            snr: c.snr.mean,
            j_explore: c.j_explore.mean,
            j_exploit: c.j_exploit.mean,
            j_mlqr: c.j_mlqr.mean,
            j_rilqr: c.j_rilqr.mean,
            j_mlqr_std: c.j_mlqr.std,
            j_rilqr_std: c.j_rilqr.std,
            mlqr_ok: c.j_mlqr.count,
            rilqr_ok: c.j_rilqr.count,
            mlqr_failures: c.mlqr_failures,
            rilqr_failures: c.rilqr_failures,
        }
    }
}

/// First-replica trajectories of one case, for plotting.
#[derive(Debug, Clone)]
pub struct CaseTrajectories {
    pub case: usize,
    pub mlqr: Option<TrajectoryLog>,
    pub rilqr: Option<TrajectoryLog>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub config: ExperimentConfig,
    pub run_id: String,
    pub cases: Vec<CaseSummary>,
    pub replicas: Vec<ReplicaRow>,
    pub trajectories: Vec<CaseTrajectories>,
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    run_id: &'a str,
    config: &'a ExperimentConfig,
    cases: &'a [CaseSummary],
    failures: usize,
}

impl GridResult {
    /// Failed replicas over all cases and methods.
    pub fn failures(&self) -> usize {
        self.cases
            .iter()
            .map(|c| c.mlqr_failures + c.rilqr_failures)
            .sum()
    }

    pub fn table_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.cases {
            w.serialize(CsvRow::from(c))?;
        }
        csv_string(w)
    }

    pub fn replicas_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.replicas {
            w.serialize(r)?;
        }
        csv_string(w)
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SummaryJson {
            run_id: &self.run_id,
            config: &self.config,
            cases: &self.cases,
            failures: self.failures(),
        })?)
    }

    /// Write `table2.csv`, `replicas.csv`, `summary.json` and
    /// `trajectories/case{c}_{method}.csv` under `<root>/<run_id>/`.
    pub fn write(&self, root: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = root.as_ref().join(&self.run_id);
        let traj = dir.join("trajectories");
        fs::create_dir_all(&traj)?;
        fs::write(dir.join("table2.csv"), self.table_csv()?)?;
        fs::write(dir.join("replicas.csv"), self.replicas_csv()?)?;
        fs::write(dir.join("summary.json"), self.summary_json()?)?;
        let weights = self.config.weights()?;
        for t in &self.trajectories {
            if let Some(log) = &t.mlqr {
                log.write_csv_file(traj.join(format!("case{}_mlqr.csv", t.case)), &weights)?;
            }
            if let Some(log) = &t.rilqr {
                log.write_csv_file(traj.join(format!("case{}_rilqr.csv", t.case)), &weights)?;
            }
        }
        Ok(dir)
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Run every case of the `σ²_uE` grid over `cfg.seeds` replicas. Case `c`,
/// replica `r` uses `replica_seed(cfg.seed, c, r)` for both controllers, so
/// they face the same plant noise. Failures are recorded, not propagated.
pub fn run_grid(cfg: &ExperimentConfig, methods: Methods) -> Result<GridResult> {
    cfg.validate()?;
    let mut cases = Vec::new();
    let mut replicas = Vec::new();
    let mut trajectories = Vec::new();
    for (ci, &variance) in cfg.explore_variances.iter().enumerate() {
        let case = ci + 1;
        let mut rows = Vec::with_capacity(cfg.seeds);
        let mut traj = CaseTrajectories {
            case,
            mlqr: None,
            rilqr: None,
        };
        for r in 0..cfg.seeds {
            let seed = replica_seed(cfg.seed, case, r);
            let mut row = ReplicaRow {
                case,
                explore_variance: variance,
                replica: r,
                seed,
                snr: None,
                j_explore: None,
                j_exploit: None,
                j_mlqr: None,
                j_rilqr: None,
                mlqr_eig_re1: None,
                mlqr_eig_re2: None,
                rilqr_held_steps: None,
                mlqr_error: None,
                rilqr_error: None,
            };
            if methods.mlqr() {
                match run_mlqr_replica(cfg, variance, seed) {
                    Ok(out) => {
                        row.snr = Some(out.snr);
                        row.j_explore = Some(out.ledger.j_explore);
                        row.j_exploit = Some(out.ledger.j_exploit);
                        row.j_mlqr = Some(out.ledger.j_total);
                        let ev = out.estimate.eigenvalues();
                        row.mlqr_eig_re1 = ev.first().map(|e| e.0);
                        row.mlqr_eig_re2 = ev.get(1).map(|e| e.0);
                        if r == 0 {
                            traj.mlqr = Some(out.log);
                        }
                    }
                    Err(e) => {
                        log::warn!("case {case} replica {r}: mLQR failed: {e}");
                        row.mlqr_error = Some(e.to_string());
                    }
                }
            }
            if methods.rilqr() {
                match run_rilqr_replica(cfg, seed) {
                    Ok(run) => {
                        row.j_rilqr = Some(run.ledger.j_total);
                        row.rilqr_held_steps = Some(run.held_steps);
                        if r == 0 {
                            traj.rilqr = Some(run.log);
                        }
                    }
                    Err(e) => {
                        log::warn!("case {case} replica {r}: RiLQR failed: {e}");
                        row.rilqr_error = Some(e.to_string());
                    }
                }
            }
            rows.push(row);
        }
        let stat = |f: fn(&ReplicaRow) -> Option<f64>| Stat::of(rows.iter().filter_map(f));
        cases.push(CaseSummary {
            case,
            explore_variance: variance,
            snr: stat(|r| r.snr),
            j_explore: stat(|r| r.j_explore),
            j_exploit: stat(|r| r.j_exploit),
            j_mlqr: stat(|r| r.j_mlqr),
            j_rilqr: stat(|r| r.j_rilqr),
            mlqr_failures: rows.iter().filter(|r| r.mlqr_error.is_some()).count(),
            rilqr_failures: rows.iter().filter(|r| r.rilqr_error.is_some()).count(),
        });
        replicas.extend(rows);
        trajectories.push(traj);
    }
    Ok(GridResult {
        config: cfg.clone(),
        run_id: cfg.run_id()?,
        cases,
        replicas,
        trajectories,
    })
}

/// The full comparison table.
pub fn reproduce_table2(cfg: &ExperimentConfig) -> Result<GridResult> {
    run_grid(cfg, Methods::Both)
}

const BENCH_BATCHES: usize = 40;

/// Timing of the rank-one QR update at one problem size.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BenchPoint {
    pub s: usize,
    pub nc: usize,
    pub seconds_per_update: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub points: Vec<BenchPoint>,
    /// Least-squares slope of log(time) against log(s).
    pub exponent: f64,
}

/// Time `updates` rank-one updates of the QR factorization of a random
/// `(s + oversampling) x s` matrix for each `s`. The updates run in short
/// batches and the median batch sets the per-update time.
pub fn bench_qr_update(sizes: &[usize], updates: usize, oversampling: usize, seed: u64) -> Result<BenchReport> {
    if sizes.len() < 2 || updates == 0 {
        return Err(Error::Config("need at least two sizes and one update".into()));
    }
    let mut rng = stream_rng(seed, Stream::Sketch);
    let mut normal = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
    let mut points = Vec::new();
    for &s in sizes {
        let nc = s + oversampling;
        let mut f = qr_decompose(&normal(nc, s))?;
        let us: Vec<DVector<f64>> = (0..updates).map(|_| normal(nc, 1).column(0).into_owned()).collect();
        let vs: Vec<DVector<f64>> = (0..updates).map(|_| normal(s, 1).column(0).into_owned()).collect();
        f.rank1_update(&us[0], &vs[0])?;
        let chunk = updates.div_ceil(BENCH_BATCHES);
        let mut per_update = Vec::new();
        for (cu, cv) in us.chunks(chunk).zip(vs.chunks(chunk)) {
            let started = Instant::now();
            for (u, v) in cu.iter().zip(cv) {
                f.rank1_update(u, v)?;
            }
            per_update.push(started.elapsed().as_secs_f64() / cu.len() as f64);
        }
        per_update.sort_by(f64::total_cmp);
        let median = per_update[per_update.len() / 2];
        points.push(BenchPoint {
            s,
            nc,
            seconds_per_update: median,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.s as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds_per_update.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(BenchReport {
        points,
        exponent: sxy / sxx,
    })
}
