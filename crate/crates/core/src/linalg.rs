//! Dense kernels: Householder QR with a full orthogonal factor, the Givens
//! rank-one QR update, a cutoff pseudo-inverse and a truncated SVD.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};

/// Default relative singular-value cutoff for pseudo-inverses.
pub const DEFAULT_PINV_TOL: f64 = 1e-10;

/// Number of rank-one updates between re-orthonormalizations of `q`.
pub const REFRESH_INTERVAL: usize = 1000;

/// QR factorization `a = q * r` of a tall matrix `a` (`nc x s`, `nc >= s`).
///
/// `q` is the full `nc x nc` orthogonal factor. `r` is `nc x s`; its top `s x s`
/// block is upper triangular with a non-negative diagonal and the rows below
/// it are zero.
#[derive(Debug, Clone)]
pub struct QrFactorization {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    updates_since_refresh: usize,
}

impl QrFactorization {
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Column count of the factored matrix.
    pub fn s(&self) -> usize {
        self.r.ncols()
    }

    /// Row count of the factored matrix (the sketch width when factoring `H̄ᵀ`).
    pub fn nc(&self) -> usize {
        self.r.nrows()
    }

    /// The upper-triangular `s x s` block of `r`.
    pub fn r_top(&self) -> DMatrix<f64> {
        self.r.rows(0, self.s()).into_owned()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.q * &self.r
    }

    /// `‖qᵀq − I‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        let n = self.nc();
        (self.q.tr_mul(&self.q) - DMatrix::<f64>::identity(n, n)).norm()
    }

    /// Replace the factorization with the one of `self + u vᵀ`.
    ///
    /// A bottom-up Givens sweep reduces `w = qᵀu` to a multiple of `e1`, which
    /// turns `r` upper Hessenberg; the rank-one term then lands in the first
    /// row and a top-down sweep restores triangular form. Both sweeps are
    /// accumulated into `q`, so the cost is `O(nc²)`.
    pub fn rank1_update(&mut self, u: &DVector<f64>, v: &DVector<f64>) -> Result<()> {
        let (nc, s) = self.r.shape();
        if u.len() != nc || v.len() != s {
            return Err(dim_err(format!(
                "rank-one update expects u of length {nc} and v of length {s}, got {} and {}",
                u.len(),
                v.len()
            )));
        }
        if !u.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("rank-one update vector u"));
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("rank-one update vector v"));
        }
        if u.iter().all(|&x| x == 0.0) || v.iter().all(|&x| x == 0.0) {
            return Ok(());
        }

        let mut w = self.q.tr_mul(u);
        let down = GivensPlan::reduce_to_first(&mut w);
        down.apply_rows(&mut self.r);
        down.apply_to_columns(&mut self.q);

        let w0 = w[0];
        for (col, vj) in self.r.as_mut_slice().chunks_exact_mut(nc).zip(v.iter()) {
            col[0] += w0 * vj;
        }

        let up = GivensPlan::retriangularize(&mut self.r);
        up.apply_to_columns(&mut self.q);

        normalize_signs(&mut self.q, &mut self.r);

        self.updates_since_refresh += 1;
        if self.updates_since_refresh >= REFRESH_INTERVAL {
            self.refresh()?;
        }
        Ok(())
    }

    /// Re-factor the represented matrix from scratch to shed orthogonality drift.
    pub fn refresh(&mut self) -> Result<()> {
        *self = qr_decompose(&self.reconstruct())?;
        Ok(())
    }
}

/// Order in which a plan's rotations were generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDirection {
    BottomUp,
    TopDown,
}

/// Plane rotation acting on coordinates `(plane, plane + 1)`:
/// `[c s; -s c]` applied to the pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GivensRotation {
    pub plane: usize,
    pub c: f64,
    pub s: f64,
}

impl GivensRotation {
    /// Rotation mapping `(a, b)` onto `(hypot(a, b), 0)`.
    pub fn zeroing(plane: usize, a: f64, b: f64) -> Self {
        if b == 0.0 {
            return Self { plane, c: 1.0, s: 0.0 };
        }
        let h = a.hypot(b);
        Self {
            plane,
            c: a / h,
            s: b / h,
        }
    }

    #[inline]
    fn rotate(&self, x: f64, y: f64) -> (f64, f64) {
        (self.c * x + self.s * y, -self.s * x + self.c * y)
    }
}

/// An ordered sequence of adjacent-plane rotations.
#[derive(Debug, Clone)]
pub struct GivensPlan {
    pub rotations: Vec<GivensRotation>,
    pub direction: SweepDirection,
}

impl GivensPlan {
    /// Rotate `w` from the bottom up until only `w[0]` is nonzero.
    pub fn reduce_to_first(w: &mut DVector<f64>) -> Self {
        let n = w.len();
        let mut rotations = Vec::with_capacity(n.saturating_sub(1));
        for k in (0..n.saturating_sub(1)).rev() {
            let g = GivensRotation::zeroing(k, w[k], w[k + 1]);
            w[k] = g.c * w[k] + g.s * w[k + 1];
            w[k + 1] = 0.0;
            rotations.push(g);
        }
        Self {
            rotations,
            direction: SweepDirection::BottomUp,
        }
    }

    /// Eliminate the subdiagonal of an upper-Hessenberg `r` from the top down.
    pub fn retriangularize(r: &mut DMatrix<f64>) -> Self {
        let (rows, cols) = r.shape();
        let steps = cols.min(rows.saturating_sub(1));
        let mut rotations = Vec::with_capacity(steps);
        let data = r.as_mut_slice();
        for k in 0..steps {
            let mut it = data.chunks_exact_mut(rows).skip(k);
            let first = it.next().expect("column k exists");
            let g = GivensRotation::zeroing(k, first[k], first[k + 1]);
            first[k] = g.c * first[k] + g.s * first[k + 1];
            first[k + 1] = 0.0;
            for col in it {
                let (a, b) = g.rotate(col[k], col[k + 1]);
                col[k] = a;
                col[k + 1] = b;
            }
            rotations.push(g);
        }
        Self {
            rotations,
            direction: SweepDirection::TopDown,
        }
    }

    /// Apply the plan to the rows of an upper-triangular `r` (left multiplication).
    /// Rows at or below the column count are known to be zero and are skipped.
    fn apply_rows(&self, r: &mut DMatrix<f64>) {
        let (rows, cols) = r.shape();
        let data = r.as_mut_slice();
        for g in &self.rotations {
            let k = g.plane;
            if k >= cols {
                continue;
            }
            for col in data.chunks_exact_mut(rows).skip(k) {
                let (a, b) = g.rotate(col[k], col[k + 1]);
                col[k] = a;
                col[k + 1] = b;
            }
        }
    }

    /// `q <- q * Gᵀ` for every rotation, keeping `q * r` invariant.
    fn apply_to_columns(&self, q: &mut DMatrix<f64>) {
        let n = q.nrows();
        let data = q.as_mut_slice();
        for g in &self.rotations {
            let k = g.plane;
            let (left, right) = data[k * n..(k + 2) * n].split_at_mut(n);
            for (x, y) in left.iter_mut().zip(right.iter_mut()) {
                let (a, b) = g.rotate(*x, *y);
                *x = a;
                *y = b;
            }
        }
    }
}

fn normalize_signs(q: &mut DMatrix<f64>, r: &mut DMatrix<f64>) {
    let s = r.ncols().min(r.nrows());
    for i in 0..s {
        if r[(i, i)] < 0.0 {
            for j in i..r.ncols() {
                r[(i, j)] = -r[(i, j)];
            }
            q.column_mut(i).neg_mut();
        }
    }
}

/// Householder triangularization in place. Accumulates the reflectors into
/// `q` when given. Entries below the diagonal are set to exactly zero.
fn householder(a: &mut DMatrix<f64>, mut q: Option<&mut DMatrix<f64>>) {
    let (rows, cols) = a.shape();
    let steps = cols.min(rows.saturating_sub(1));
    let mut v = vec![0.0; rows];
    for j in 0..steps {
        let len = rows - j;
        let norm = a.view((j, j), (len, 1)).norm();
        if norm == 0.0 {
            continue;
        }
        let x0 = a[(j, j)];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        v[0] = x0 - alpha;
        for i in 1..len {
            v[i] = a[(j + i, j)];
        }
        let vnorm2: f64 = v[..len].iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;

        a[(j, j)] = alpha;
        for i in 1..len {
            a[(j + i, j)] = 0.0;
        }
        for c in (j + 1)..cols {
            let col = &mut a.column_mut(c);
            let dot: f64 = (0..len).map(|i| v[i] * col[j + i]).sum();
            let f = beta * dot;
            for i in 0..len {
                col[j + i] -= f * v[i];
            }
        }
        if let Some(q) = q.as_deref_mut() {
            // q <- q * (I - beta v vᵀ), acting on columns j..rows
            let n = q.nrows();
            let mut qv = vec![0.0; n];
            for i in 0..len {
                let col = q.column(j + i);
                for (acc, x) in qv.iter_mut().zip(col.iter()) {
                    *acc += x * v[i];
                }
            }
            for i in 0..len {
                let f = beta * v[i];
                let mut col = q.column_mut(j + i);
                for (x, acc) in col.iter_mut().zip(qv.iter()) {
                    *x -= f * acc;
                }
            }
        }
    }
}

/// Full QR factorization of a tall matrix with a non-negative diagonal in `r`.
pub fn qr_decompose(matrix: &DMatrix<f64>) -> Result<QrFactorization> {
    let (nc, s) = matrix.shape();
    if nc < s {
        return Err(dim_err(format!(
            "QR needs at least as many rows as columns, got {nc}x{s}"
        )));
    }
    if !matrix.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("matrix to factor"));
    }
    let mut r = matrix.clone();
    let mut q = DMatrix::<f64>::identity(nc, nc);
    householder(&mut r, Some(&mut q));
    normalize_signs(&mut q, &mut r);
    Ok(QrFactorization {
        q,
        r,
        updates_since_refresh: 0,
    })
}

/// Triangular factor only (`s x s`, non-negative diagonal) of a tall matrix.
/// Used where the orthogonal factor would be too large to form.
pub fn qr_r_factor(matrix: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = matrix.shape();
    if rows < cols {
        return Err(dim_err(format!(
            "QR needs at least as many rows as columns, got {rows}x{cols}"
        )));
    }
    let mut r = matrix.clone();
    householder(&mut r, None);
    let mut top = r.rows(0, cols).into_owned();
    for i in 0..cols {
        if top[(i, i)] < 0.0 {
            top.row_mut(i).neg_mut();
        }
    }
    Ok(top)
}

/// Thin singular value decomposition `a = u · diag(sigma) · vᵀ` with
/// `sigma` non-increasing and `u`, `v` having orthonormal columns.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    /// Number of singular values above `tol · σ_max`.
    pub fn rank(&self, tol: f64) -> usize {
        let max = self.sigma.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            return 0;
        }
        self.sigma.iter().filter(|&&x| x > tol * max).count()
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD. Columns of `u` belonging to numerically
/// zero singular values are completed to an orthonormal set.
pub fn svd(matrix: &DMatrix<f64>) -> Svd {
    let (rows, cols) = matrix.shape();
    if rows < cols {
        let t = svd(&matrix.transpose());
        return Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
    }
    let mut w = matrix.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut w, &mut v] {
                    for i in 0..m.nrows() {
                        let (a, b) = (m[(i, p)], m[(i, q)]);
                        m[(i, p)] = c * a - s * b;
                        m[(i, q)] = s * a + c * b;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..cols).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let sigma = DVector::from_iterator(cols, order.iter().map(|&j| norms[j]));
    let floor = rows as f64 * f64::EPSILON * sigma.get(0).cloned().unwrap_or(0.0);
    let mut u = DMatrix::zeros(rows, cols);
    let mut vs = DMatrix::zeros(cols, cols);
    for (dst, &src) in order.iter().enumerate() {
        vs.set_column(dst, &v.column(src));
        if norms[src] > floor {
            u.set_column(dst, &(w.column(src) / norms[src]));
        } else {
            complete_column(&mut u, dst);
        }
    }
    Svd { u, sigma, v: vs }
}

/// Fill column `dst` with a unit vector orthogonal to columns `0..dst`.
fn complete_column(u: &mut DMatrix<f64>, dst: usize) {
    let rows = u.nrows();
    let mut best = DVector::zeros(rows);
    for e in 0..rows {
        let mut cand = DVector::zeros(rows);
        cand[e] = 1.0;
        for _ in 0..2 {
            for j in 0..dst {
                let proj = u.column(j).dot(&cand);
                cand -= u.column(j) * proj;
            }
        }
        if cand.norm() > best.norm() {
            best = cand;
        }
        if best.norm() > 0.5 {
            break;
        }
    }
    let norm = best.norm();
    u.set_column(dst, &(best / norm));
}

/// Minimum-norm least-squares solution of `a x ≈ b`, dropping singular values
/// below `tol · σ_max`.
pub fn least_squares(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(dim_err(format!(
            "least squares with {} equations but {} right-hand rows",
            a.nrows(),
            b.nrows()
        )));
    }
    let d = svd(a);
    let mut x = DMatrix::zeros(a.ncols(), b.ncols());
    for i in 0..d.rank(tol) {
        let coeff = d.u.column(i).transpose() * b / d.sigma[i];
        x += d.v.column(i) * coeff;
    }
    Ok(x)
}

/// `b · a†` with singular values below `tol · σ_max` treated as zero.
pub fn pinv_apply(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    pinv_apply_with_rank(a, b, tol).map(|(m, _)| m)
}

/// As [`pinv_apply`], also returning the effective rank of `a`.
pub fn pinv_apply_with_rank(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    tol: f64,
) -> Result<(DMatrix<f64>, usize)> {
    if b.ncols() != a.ncols() {
        return Err(dim_err(format!(
            "b·a† needs b with {} columns, got {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let d = svd(a);
    let rank = d.rank(tol);
    let mut out = DMatrix::zeros(b.nrows(), a.nrows());
    for i in 0..rank {
        // a† = Σ v_i u_iᵀ / σ_i
        let bv = b * d.v.column(i);
        out += (bv / d.sigma[i]) * d.u.column(i).transpose();
    }
    Ok((out, rank))
}

/// Leading singular triplets of a matrix.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// Left factors, `rows x order`, orthonormal columns.
    pub u: DMatrix<f64>,
    /// Non-increasing singular values, length `order`.
    pub sigma: DVector<f64>,
    /// Right factors, `cols x order`.
    pub v: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.sigma) * self.v.transpose()
    }
}

pub fn truncated_svd(matrix: &DMatrix<f64>, order: usize) -> Result<TruncatedSvd> {
    let (rows, cols) = matrix.shape();
    if order == 0 || order > rows.min(cols) {
        return Err(dim_err(format!(
            "truncation order {order} out of range for a {rows}x{cols} matrix"
        )));
    }
    let d = svd(matrix);
    Ok(TruncatedSvd {
        u: d.u.columns(0, order).into_owned(),
        sigma: d.sigma.rows(0, order).into_owned(),
        v: d.v.columns(0, order).into_owned(),
    })
}

/// All singular values in non-increasing order.
pub fn singular_values(matrix: &DMatrix<f64>) -> DVector<f64> {
    svd(matrix).sigma
}

/// 2-norm condition number; infinite for a singular matrix.
pub fn condition_number(matrix: &DMatrix<f64>) -> f64 {
    let sv = singular_values(matrix);
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Principal angles (radians, largest first) between the ranges of the leading
/// `dim` left singular vectors of `a` and `b`.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>, dim: usize) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return Err(dim_err("principal angles need matrices with equal row counts"));
    }
    let ua = truncated_svd(a, dim)?.u;
    let ub = truncated_svd(b, dim)?.u;
    // sines of the angles are the singular values of (I - Ua Uaᵀ) Ub
    let residual = &ub - &ua * ua.tr_mul(&ub);
    let mut angles: Vec<f64> = singular_values(&residual)
        .iter()
        .map(|s| s.min(1.0).asin())
        .collect();
    angles.sort_by(|x, y| y.total_cmp(x));
    Ok(angles)
}
