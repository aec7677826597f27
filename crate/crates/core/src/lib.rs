//! Compressed data-driven receding-horizon LQR.
//!
//! A controller is learned from a long input/output record of a *similar*
//! plant: the record's block-Hankel stack is sketched to a fixed width,
//! factored, and the batch predictors `S^x`, `S^u` are read off an oblique
//! projection. On the actual plant each new sample enters through a rank-one
//! QR update, so refreshing the gain costs the same whatever the record length.
//!
//! | module | contents |
//! |---|---|
//! | [`linalg`] | Householder QR, Givens rank-one update, Jacobi SVD, pseudo-inverse |
//! | [`hankel`] | signal records, block-Hankel stacks, the online column builder |
//! | [`sketch`] | Gaussian sketch and the streaming compressed stack |
//! | [`subspace`] | predictor extraction and the receding-horizon gain |
//! | [`plant`] | seeded LTI simulation and cost ledgers |
//! | [`baseline`] | MOESP identification and the explore/exploit controller |
//! | [`experiment`] | Algorithms 1 and 2, comparison grid, timing harness |
//! | [`config`] | flat TOML configuration |

pub mod baseline;
pub mod config;
pub mod error;
pub mod experiment;
pub mod hankel;
pub mod linalg;
pub mod plant;
pub mod rng;
pub mod sketch;
pub mod subspace;

pub use baseline::{moesp_identify, run_mlqr, MlqrConfig, MoespEstimate};
pub use config::{ExperimentConfig, StatePolicy};
pub use error::{Error, Result};
pub use experiment::{
    bench_qr_update, reproduce_table2, run_algorithm1, run_algorithm2, run_grid, GridResult,
    Methods, RilqrRun, RilqrSettings,
};
pub use hankel::{assemble_stack, HankelStack, SignalRecord, StackLayout};
pub use linalg::QrFactorization;
pub use plant::{CostLedger, LtiSystem, Simulator, TrajectoryLog};
pub use sketch::{compress_initial, CompressedStack, SketchConfig};
pub use subspace::{batch_predictors, lqr_gain, GainMatrix, LqrWeights, Predictors};
