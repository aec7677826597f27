//! Gaussian compression of the data stack and the streaming compressed update
//! `H̄_t = H̄_{t-1} + γ h_t c_tᵀ`, carried out directly on the QR factors of `H̄ᵀ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::hankel::{HankelStack, StackLayout};
use crate::linalg::{qr_decompose, QrFactorization};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchConfig {
    /// Oversampling `l`; the sketch width is `N_c = s + l`.
    pub oversampling: usize,
    pub seed: u64,
    /// Weight `γ` of the online rank-one updates.
    pub gamma: f64,
}

impl Default for SketchConfig {
    fn default() -> Self {
        Self {
            oversampling: 10,
            seed: 0,
            gamma: 1.0,
        }
    }
}

impl SketchConfig {
    pub fn width(&self, layout: &StackLayout) -> usize {
        layout.s() + self.oversampling
    }

    pub fn validate(&self) -> Result<()> {
        if self.oversampling == 0 {
            return Err(Error::Config("oversampling must be positive".into()));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!(
                "update weight must be non-negative, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// `rows x cols` matrix of iid `N(0, 1/cols)` entries from the sketch stream of `seed`.
pub fn draw_sketch(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    draw_sketch_from(&mut stream_rng(seed, Stream::Sketch), rows, cols)
}

pub(crate) fn draw_sketch_from<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let scale = 1.0 / (cols as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

/// The compressed stack `H̄ ∈ R^{s x N_c}`, held as the QR factorization of `H̄ᵀ`.
#[derive(Debug, Clone)]
pub struct CompressedStack {
    layout: StackLayout,
    factorization: QrFactorization,
    rng: ChaCha8Rng,
    step: usize,
}

impl CompressedStack {
    pub fn layout(&self) -> StackLayout {
        self.layout
    }

    pub fn factorization(&self) -> &QrFactorization {
        &self.factorization
    }

    /// Sketch width `N_c`; constant over the whole run.
    pub fn width(&self) -> usize {
        self.factorization.nc()
    }

    /// Number of streaming updates applied.
    pub fn step(&self) -> usize {
        self.step
    }

    /// `H̄` reconstructed from the factors.
    pub fn h_bar(&self) -> DMatrix<f64> {
        self.factorization.reconstruct().transpose()
    }

    /// Compressed past data `W̄_p`, the `Wp` rows of `H̄`.
    pub fn wp_bar(&self) -> DMatrix<f64> {
        let rows = self.layout.wp_rows();
        let r_cols = self.factorization.r().columns(rows.start, rows.len());
        (self.factorization.q() * r_cols).transpose()
    }

    /// Apply `H̄ <- H̄ + γ h cᵀ` with a fresh `c ~ N(0, I/N_c)`; returns `c`.
    ///
    /// `c` is drawn even when `γ = 0` so the sketch stream stays aligned.
    pub fn streaming_update(&mut self, h: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
        if h.len() != self.layout.s() {
            return Err(dim_err(format!(
                "update column has length {}, expected {}",
                h.len(),
                self.layout.s()
            )));
        }
        if !h.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("update column"));
        }
        if !gamma.is_finite() {
            return Err(Error::NonFinite("update weight"));
        }
        let nc = self.width();
        let c = draw_sketch_from(&mut self.rng, nc, 1).column(0).into_owned();
        // H̄ᵀ + γ c hᵀ
        self.factorization.rank1_update(&(&c * gamma), h)?;
        self.step += 1;
        Ok(c)
    }
}

/// Compress a stack with a sketch drawn from `cfg.seed` and factor `H̄ᵀ`.
/// The sketch stream continues into the streaming updates.
pub fn compress_initial(stack: &HankelStack, cfg: &SketchConfig) -> Result<CompressedStack> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, Stream::Sketch);
    let nc = cfg.width(&stack.layout);
    let sketch = draw_sketch_from(&mut rng, stack.width(), nc);
    let h_bar = stack.stacked() * sketch;
    Ok(CompressedStack {
        layout: stack.layout,
        factorization: qr_decompose(&h_bar.transpose())?,
        rng,
        step: 0,
    })
}

/// Compress with an explicitly supplied `N x N_c` sketch.
pub fn compress_with_sketch(
    stack: &HankelStack,
    sketch: &DMatrix<f64>,
    seed: u64,
) -> Result<CompressedStack> {
    if sketch.nrows() != stack.width() || sketch.ncols() < stack.s() {
        return Err(dim_err(format!(
            "sketch is {}x{}, stack is {}x{}",
            sketch.nrows(),
            sketch.ncols(),
            stack.s(),
            stack.width()
        )));
    }
    let h_bar = stack.stacked() * sketch;
    Ok(CompressedStack {
        layout: stack.layout,
        factorization: qr_decompose(&h_bar.transpose())?,
        rng: stream_rng(seed, Stream::Sketch),
        step: 0,
    })
}
