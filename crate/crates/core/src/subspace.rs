//! Data-driven predictors from the triangular factor of the (compressed) data
//! stack, and the receding-horizon LQR gain built from any pair of predictors.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::hankel::StackLayout;
use crate::linalg::{
    condition_number, pinv_apply_with_rank, singular_values, truncated_svd, QrFactorization,
};

/// Condition-number ceiling for `R11` (future-input excitation).
pub const MAX_R11_CONDITION: f64 = 1e12;
/// Condition-number ceiling for the similarity transform `T`.
pub const MAX_T_CONDITION: f64 = 1e12;
/// Relative size of the dropped input block above which a mismatch is reported.
pub const TRAILING_BLOCK_WARN: f64 = 0.1;
/// Singular-value gap `σ_n / σ_{n+1}` below which the order choice is flagged.
pub const ORDER_GAP_WARN: f64 = 10.0;

/// Blocks of the lower-triangular factor `L` of `H = [Uf; Wp; Yf] = L Qᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RBlocks {
    pub r11: DMatrix<f64>,
    pub r21: DMatrix<f64>,
    pub r22: DMatrix<f64>,
    pub r31: DMatrix<f64>,
    pub r32: DMatrix<f64>,
    /// Residual block of the `Yf` rows; zero for noiseless data.
    pub r33: DMatrix<f64>,
    pub layout: StackLayout,
}

impl RBlocks {
    /// Partition an `s x s` lower-triangular factor by the row groups
    /// `Uf` (`km`), `Wp` (`k(m+n)`) and `Yf` (`kn`).
    pub fn from_lower(l: &DMatrix<f64>, layout: StackLayout) -> Result<Self> {
        let s = layout.s();
        if l.shape() != (s, s) {
            return Err(dim_err(format!(
                "lower factor is {:?}, expected {s}x{s}",
                l.shape()
            )));
        }
        let uf = layout.uf_rows();
        let wp = layout.wp_rows();
        let yf = layout.yf_rows();
        let block = |r: &std::ops::Range<usize>, c: &std::ops::Range<usize>| {
            l.view((r.start, c.start), (r.len(), c.len())).into_owned()
        };
        Ok(Self {
            r11: block(&uf, &uf),
            r21: block(&wp, &uf),
            r22: block(&wp, &wp),
            r31: block(&yf, &uf),
            r32: block(&yf, &wp),
            r33: block(&yf, &yf),
            layout,
        })
    }

    /// Reassemble the lower-triangular factor.
    pub fn restack(&self) -> DMatrix<f64> {
        let l = self.layout;
        let s = l.s();
        let (uf, wp, yf) = (l.uf_rows(), l.wp_rows(), l.yf_rows());
        let mut out = DMatrix::zeros(s, s);
        for (r, c, b) in [
            (&uf, &uf, &self.r11),
            (&wp, &uf, &self.r21),
            (&wp, &wp, &self.r22),
            (&yf, &uf, &self.r31),
            (&yf, &wp, &self.r32),
            (&yf, &yf, &self.r33),
        ] {
            out.view_mut((r.start, c.start), (r.len(), c.len())).copy_from(b);
        }
        out
    }
}

/// Split `L = rᵀ` (top `s x s` block) of a factorization of `H̄ᵀ` or `Hᵀ`.
pub fn extract_rblocks(fact: &QrFactorization, layout: StackLayout) -> Result<RBlocks> {
    if fact.s() != layout.s() {
        return Err(dim_err(format!(
            "factorization has {} columns, layout expects {}",
            fact.s(),
            layout.s()
        )));
    }
    RBlocks::from_lower(&fact.r_top().transpose(), layout)
}

/// Oblique projection of `Yf` onto `Wp` along `Uf`, with the map `L̄_p`.
#[derive(Debug, Clone)]
pub struct Projection {
    /// `ζ = L̄_p Wp`, `kn x (columns of Wp)`.
    pub zeta: DMatrix<f64>,
    /// `L̄_p = R32 R22†`.
    pub lp_bar: DMatrix<f64>,
    /// Effective rank of `R22` at the cutoff used.
    pub r22_rank: usize,
}

pub fn oblique_projection(blocks: &RBlocks, wp: &DMatrix<f64>, tol: f64) -> Result<Projection> {
    let (lp_bar, rank) = pinv_apply_with_rank(&blocks.r22, &blocks.r32, tol)?;
    let n = blocks.layout.n;
    if rank < n {
        return Err(Error::InsufficientExcitation(format!(
            "past-data block has effective rank {rank}, below the state dimension {n}"
        )));
    }
    if wp.nrows() != lp_bar.ncols() {
        return Err(dim_err(format!(
            "past data has {} rows, expected {}",
            wp.nrows(),
            lp_bar.ncols()
        )));
    }
    Ok(Projection {
        zeta: &lp_bar * wp,
        lp_bar,
        r22_rank: rank,
    })
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct EstimateDiagnostics {
    pub r11_condition: f64,
    /// `‖trailing block‖ / ‖S^u‖`.
    pub trailing_block_ratio: f64,
    /// `σ_n / σ_{n+1}` of `ζ`.
    pub order_gap: f64,
    pub t_condition: f64,
}

/// Predictor estimates in the basis fixed by the singular vectors of `ζ`.
#[derive(Debug, Clone)]
pub struct SubspaceEstimate {
    /// `kn x n`, `U₁ Σ₁^{1/2}`.
    pub sx: DMatrix<f64>,
    /// `kn x k_p m`.
    pub su: DMatrix<f64>,
    /// Top `n x n` block of `sx`.
    pub t_matrix: DMatrix<f64>,
    pub lp_bar: DMatrix<f64>,
    /// All singular values of `ζ`.
    pub singular_values: DVector<f64>,
    pub diagnostics: EstimateDiagnostics,
}

impl SubspaceEstimate {
    /// Predictors in the measured-state basis: `(S^x T⁻¹, S^u)`.
    pub fn predictors(&self) -> Result<Predictors> {
        let cond = self.diagnostics.t_condition;
        if !(cond < MAX_T_CONDITION) {
            return Err(Error::SingularTransform(cond));
        }
        // sx T⁻¹ = (T⁻ᵀ sxᵀ)ᵀ
        let lu = self.t_matrix.transpose().lu();
        let sx = lu
            .solve(&self.sx.transpose())
            .ok_or(Error::SingularTransform(cond))?
            .transpose();
        Ok(Predictors {
            sx,
            su: self.su.clone(),
        })
    }
}

/// Recover `S^x` (up to similarity) and `S^u` from the projection.
pub fn extract_predictors(
    blocks: &RBlocks,
    projection: &Projection,
    order: usize,
) -> Result<SubspaceEstimate> {
    let l = blocks.layout;
    let (m, n, kp) = (l.m, l.n, l.horizon());
    if order != n {
        return Err(dim_err(format!(
            "model order {order} must equal the measured state dimension {n}"
        )));
    }

    let sv = singular_values(&projection.zeta);
    let svd = truncated_svd(&projection.zeta, order)?;
    let sx = &svd.u * DMatrix::from_diagonal(&svd.sigma.map(f64::sqrt));
    let order_gap = if sv.len() > order {
        sv[order - 1] / sv[order]
    } else {
        f64::INFINITY
    };
    if order_gap < ORDER_GAP_WARN {
        log::debug!("weak singular-value gap at order {order}: ratio {order_gap:.3}");
    }

    let r11_condition = condition_number(&blocks.r11);
    if !(r11_condition <= MAX_R11_CONDITION) {
        return Err(Error::InsufficientExcitation(format!(
            "future-input block condition number {r11_condition:e}"
        )));
    }

    // [S^u 0] = (R31 - L̄p R21) R11⁻¹, solved as R11ᵀ Xᵀ = (...)ᵀ
    let rhs = &blocks.r31 - &projection.lp_bar * &blocks.r21;
    let full = blocks
        .r11
        .transpose()
        .solve_upper_triangular(&rhs.transpose())
        .ok_or_else(|| Error::InsufficientExcitation("future-input block is singular".into()))?
        .transpose();
    let su = full.columns(0, kp * m).into_owned();
    let trailing = full.columns(kp * m, m);
    let su_norm = su.norm();
    let trailing_block_ratio = if su_norm > 0.0 {
        trailing.norm() / su_norm
    } else {
        f64::INFINITY
    };
    if trailing_block_ratio > TRAILING_BLOCK_WARN {
        log::debug!("input block that should vanish is {trailing_block_ratio:.3} of the predictor");
    }

    let t_matrix = sx.rows(0, n).into_owned();
    let t_condition = condition_number(&t_matrix);

    Ok(SubspaceEstimate {
        sx,
        su,
        t_matrix,
        lp_bar: projection.lp_bar.clone(),
        singular_values: sv,
        diagnostics: EstimateDiagnostics {
            r11_condition,
            trailing_block_ratio,
            order_gap,
            t_condition,
        },
    })
}

/// Batch predictors `X = S^x x(0) + S^u U` over a horizon `k_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictors {
    /// `n(k_p+1) x n`.
    pub sx: DMatrix<f64>,
    /// `n(k_p+1) x k_p m`.
    pub su: DMatrix<f64>,
}

impl Predictors {
    pub fn state_dim(&self) -> usize {
        self.sx.ncols()
    }

    pub fn horizon(&self) -> usize {
        self.sx.nrows() / self.sx.ncols() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.su.ncols() / self.horizon()
    }
}

/// `S^x = [I; A; ..; A^{k_p}]` and the lower block-triangular `S^u` with
/// blocks `A^{i-j-1} B`.
pub fn batch_predictors(a: &DMatrix<f64>, b: &DMatrix<f64>, horizon: usize) -> Predictors {
    let n = a.nrows();
    let m = b.ncols();
    let mut sx = DMatrix::zeros(n * (horizon + 1), n);
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut impulse = Vec::with_capacity(horizon);
    for i in 0..=horizon {
        sx.view_mut((i * n, 0), (n, n)).copy_from(&power);
        if i < horizon {
            impulse.push(&power * b);
        }
        power = a * &power;
    }
    let mut su = DMatrix::zeros(n * (horizon + 1), horizon * m);
    for i in 1..=horizon {
        for j in 0..i {
            su.view_mut((i * n, j * m), (n, m))
                .copy_from(&impulse[i - j - 1]);
        }
    }
    Predictors { sx, su }
}

fn is_symmetric(a: &DMatrix<f64>) -> bool {
    a.is_square() && (a - a.transpose()).norm() <= 1e-12 * a.norm().max(1.0)
}

fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Stage, terminal and input weights of the horizon cost.
#[derive(Debug, Clone)]
pub struct LqrWeights {
    pub q: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub horizon: usize,
}

impl LqrWeights {
    pub fn new(q: DMatrix<f64>, p: DMatrix<f64>, r: DMatrix<f64>, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if q.shape() != p.shape() || !q.is_square() || !r.is_square() {
            return Err(dim_err("weights must be square with Q and P of equal size"));
        }
        for (name, w) in [("Q", &q), ("P", &p)] {
            if !is_symmetric(w) || min_eigenvalue(w) < -1e-12 * w.norm().max(1.0) {
                return Err(Error::Config(format!("{name} must be symmetric PSD")));
            }
        }
        if !is_symmetric(&r) || min_eigenvalue(&r) <= 0.0 {
            return Err(Error::Config("R must be symmetric positive definite".into()));
        }
        Ok(Self { q, p, r, horizon })
    }

    /// `Q = P = I_n`, `R = I_m`.
    pub fn identity(n: usize, m: usize, horizon: usize) -> Result<Self> {
        Self::new(
            DMatrix::identity(n, n),
            DMatrix::identity(n, n),
            DMatrix::identity(m, m),
            horizon,
        )
    }

    /// `blockdiag(Q, .., Q, P)` with `k_p` copies of `Q`.
    pub fn qbar(&self) -> DMatrix<f64> {
        let n = self.q.nrows();
        let mut out = DMatrix::zeros(n * (self.horizon + 1), n * (self.horizon + 1));
        for i in 0..self.horizon {
            out.view_mut((i * n, i * n), (n, n)).copy_from(&self.q);
        }
        let last = self.horizon * n;
        out.view_mut((last, last), (n, n)).copy_from(&self.p);
        out
    }

    /// `blockdiag(R, .., R)` with `k_p` copies.
    pub fn rbar(&self) -> DMatrix<f64> {
        let m = self.r.nrows();
        let mut out = DMatrix::zeros(m * self.horizon, m * self.horizon);
        for i in 0..self.horizon {
            out.view_mut((i * m, i * m), (m, m)).copy_from(&self.r);
        }
        out
    }

    /// `x ᵀ Q x + uᵀ R u`.
    pub fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (x.transpose() * &self.q * x)[0] + (u.transpose() * &self.r * u)[0]
    }
}

/// Horizon gain: the optimal input sequence is `U* = -K x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    /// `k_p m x n`.
    pub kgain: DMatrix<f64>,
    pub input_dim: usize,
}

impl GainMatrix {
    /// The applied feedback, the leading `m x n` block.
    pub fn first_block(&self) -> DMatrix<f64> {
        self.kgain.rows(0, self.input_dim).into_owned()
    }

    /// `u = -K₁ x`.
    pub fn control(&self, x: &DVector<f64>) -> DVector<f64> {
        -(self.kgain.rows(0, self.input_dim) * x)
    }

    /// Full optimal input sequence `-K x`.
    pub fn sequence(&self, x: &DVector<f64>) -> DVector<f64> {
        -(&self.kgain * x)
    }
}

/// `K = (S^uᵀ Q̄ S^u + R̄)⁻¹ S^uᵀ Q̄ S^x` via a Cholesky solve.
pub fn lqr_gain(pred: &Predictors, w: &LqrWeights) -> Result<GainMatrix> {
    let qbar = w.qbar();
    let rbar = w.rbar();
    if pred.sx.nrows() != qbar.nrows() || pred.su.nrows() != qbar.nrows() {
        return Err(dim_err(format!(
            "predictors have {} rows, weights expect {}",
            pred.sx.nrows(),
            qbar.nrows()
        )));
    }
    if pred.su.ncols() != rbar.ncols() {
        return Err(dim_err(format!(
            "input predictor has {} columns, weights expect {}",
            pred.su.ncols(),
            rbar.ncols()
        )));
    }
    let qsu = &qbar * &pred.su;
    let mut normal = pred.su.tr_mul(&qsu) + rbar;
    // symmetrize rounding
    normal = (&normal + normal.transpose()) * 0.5;
    let rhs = qsu.tr_mul(&pred.sx);
    let chol = Cholesky::new(normal.clone())
        .ok_or_else(|| Error::NotPositiveDefinite(min_eigenvalue(&normal)))?;
    Ok(GainMatrix {
        kgain: chol.solve(&rhs),
        input_dim: w.r.nrows(),
    })
}
