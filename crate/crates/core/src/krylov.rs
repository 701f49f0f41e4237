//! Action of the matrix exponential `e^{tA} V` by block Arnoldi projection.
//!
//! `V` is split into column blocks of at most `block_width` columns, each
//! block spans its own Krylov space `span{V_b, A V_b, A² V_b, ...}`, and the
//! small projected exponential `e^{tH}` is evaluated densely. Iteration stops
//! once the a-posteriori estimate `‖H_{j+1,j} E_jᵀ e^{tH} E_1 R_0‖_F` drops
//! below `tol · ‖V_b‖_F`.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

use crate::error::{Error, Result};
use crate::expm::expm;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpmConfig {
    /// Residual-norm stopping tolerance, relative to `‖V‖_F` per block.
    pub tol: f64,
    /// Cap on the Krylov basis dimension (columns) per block.
    pub max_basis: usize,
    /// Orthogonalize against the whole basis (twice). When off, only the
    /// two previous blocks are used, which is exact in exact arithmetic for
    /// symmetric `A` only.
    pub reorthogonalize: bool,
    /// Widest column block handled by one Krylov space.
    pub block_width: usize,
}

impl Default for ExpmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_basis: 200,
            reorthogonalize: true,
            block_width: 4,
        }
    }
}

impl ExpmConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::ParameterOutOfRange(format!("Krylov tol = {}", self.tol)));
        }
        if self.block_width == 0 || self.max_basis < self.block_width {
            return Err(Error::ParameterOutOfRange(format!(
                "max_basis = {} must be >= block_width = {} >= 1",
                self.max_basis, self.block_width
            )));
        }
        Ok(())
    }
}

/// Sparse times dense block.
pub(crate) fn spmm(a: &CsrMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), x.ncols());
    for c in 0..x.ncols() {
        let xc = x.column(c);
        let mut oc = out.column_mut(c);
        for (i, row) in a.row_iter().enumerate() {
            let mut acc = 0.0;
            for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                acc += v * xc[j];
            }
            oc[i] = acc;
        }
    }
    out
}

/// `W ≈ e^{tA} V`.
pub fn expm_action(
    a: &CsrMatrix<f64>,
    v: &DMatrix<f64>,
    t: f64,
    cfg: &ExpmConfig,
) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    if a.nrows() != a.ncols() || a.ncols() != v.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            got: v.nrows(),
            context: "exponential action operand rows",
        });
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::ParameterOutOfRange(format!("time t = {t} must be >= 0")));
    }
    if t == 0.0 {
        return Ok(v.clone());
    }
    let mut out = DMatrix::zeros(v.nrows(), v.ncols());
    let mut start = 0;
    while start < v.ncols() {
        let width = cfg.block_width.min(v.ncols() - start);
        let block = v.columns(start, width).into_owned();
        let w = block_arnoldi(a, &block, t, cfg)?;
        out.columns_mut(start, width).copy_from(&w);
        start += width;
    }
    Ok(out)
}

/// Like [`expm_action`], but on a basis-cap failure splits `t` into
/// `2^k` equal substeps. `substeps` carries the split count between calls.
pub fn expm_action_substepped(
    a: &CsrMatrix<f64>,
    v: &DMatrix<f64>,
    t: f64,
    cfg: &ExpmConfig,
    substeps: &mut usize,
) -> Result<DMatrix<f64>> {
    const MAX_SUBSTEPS: usize = 1 << 14;
    *substeps = (*substeps).max(1);
    loop {
        let dt = t / *substeps as f64;
        let mut w = v.clone();
        let mut failed = None;
        for _ in 0..*substeps {
            match expm_action(a, &w, dt, cfg) {
                Ok(next) => w = next,
                Err(e @ Error::NonConvergence { .. }) => {
                    failed = Some(e);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        match failed {
            None => return Ok(w),
            Some(e) if *substeps >= MAX_SUBSTEPS => return Err(e),
            Some(_) => *substeps *= 2,
        }
    }
}

fn block_arnoldi(
    a: &CsrMatrix<f64>,
    v: &DMatrix<f64>,
    t: f64,
    cfg: &ExpmConfig,
) -> Result<DMatrix<f64>> {
    let (n, p) = (v.nrows(), v.ncols());
    let v_norm = v.norm();
    if v_norm == 0.0 {
        return Ok(DMatrix::zeros(n, p));
    }
    // Once the basis would exceed `n` the space is exhausted and the last
    // block is allowed to overshoot.
    let max_blocks = if cfg.max_basis >= n {
        n.div_ceil(p)
    } else {
        cfg.max_basis / p
    }
    .max(1);
    let mut basis = DMatrix::<f64>::zeros(n, (max_blocks + 1) * p);
    let mut hess = DMatrix::<f64>::zeros((max_blocks + 1) * p, max_blocks * p);

    let (q0, r0) = orthonormalize_block(v, &basis, 0);
    basis.columns_mut(0, p).copy_from(&q0);

    let mut next_check = p;
    let mut last_residual = f64::INFINITY;
    let mut prev_y: Option<DMatrix<f64>> = None;
    for j in 0..max_blocks {
        let k = (j + 1) * p;
        let qj = basis.columns(j * p, p).into_owned();
        let mut w = spmm(a, &qj);
        let first = if cfg.reorthogonalize {
            0
        } else {
            j.saturating_sub(1) * p
        };
        let passes = if cfg.reorthogonalize { 2 } else { 1 };
        for _ in 0..passes {
            let prev = basis.columns(first, k - first);
            let coeffs = prev.tr_mul(&w);
            w -= prev * &coeffs;
            let mut hv = hess.view_mut((first, j * p), (k - first, p));
            hv += coeffs;
        }
        let (qn, rn) = orthonormalize_block(&w, &basis, k);
        let breakdown = rn.norm() <= 1e-13 * hess.view((0, j * p), (k, p)).norm().max(f64::MIN_POSITIVE)
            || k >= n;
        hess.view_mut((k, j * p), (p, p)).copy_from(&rn);
        basis.columns_mut(k, p).copy_from(&qn);

        let last = j + 1 == max_blocks;
        if k >= next_check || breakdown || last {
            next_check = k + p.max(k / 4);
            // exp of [[H, E₁], [0, 0]] carries e^{tH}E₁ and tφ₁(tH)E₁.
            let mut aug = DMatrix::zeros(k + p, k + p);
            aug.view_mut((0, 0), (k, k)).copy_from(&hess.view((0, 0), (k, k)));
            aug.view_mut((0, k), (p, p)).fill_with_identity();
            let f = expm(&aug, t)?;
            let y = f.view((0, 0), (k, p)) * &r0;
            // The residual at time t alone can be tiny long before the
            // slow modes are resolved (stiff H), so the residual is
            // integrated over [0, t] and the change since the previous
            // check has to be small as well.
            let residual = if breakdown {
                0.0
            } else {
                let integrated = f.view((k - p, k), (p, p)) * &r0;
                let est = (&rn * integrated).norm();
                let change = match &prev_y {
                    Some(prev) => {
                        let kp = prev.nrows();
                        ((y.rows(0, kp) - prev).norm_squared() + y.rows(kp, k - kp).norm_squared()).sqrt()
                    }
                    None => f64::INFINITY,
                };
                est.max(change)
            };
            last_residual = residual;
            if residual <= cfg.tol * v_norm {
                return Ok(basis.columns(0, k) * y);
            }
            prev_y = Some(y);
        }
    }
    Err(Error::NonConvergence {
        residual: last_residual / v_norm,
        max_basis: cfg.max_basis,
    })
}

/// Orthonormalizes the columns of `w` against each other (modified
/// Gram-Schmidt, two passes) and, for deflated columns, replaces the
/// direction by a fresh unit vector orthogonal to `basis[:, ..used]`.
fn orthonormalize_block(
    w: &DMatrix<f64>,
    basis: &DMatrix<f64>,
    used: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, p) = (w.nrows(), w.ncols());
    let mut q = w.clone();
    let mut r = DMatrix::zeros(p, p);
    for c in 0..p {
        let scale = w.column(c).norm();
        for _ in 0..2 {
            for l in 0..c {
                let d = q.column(l).dot(&q.column(c));
                let ql = q.column(l).into_owned();
                q.column_mut(c).axpy(-d, &ql, 1.0);
                r[(l, c)] += d;
            }
        }
        let nrm = q.column(c).norm();
        if nrm > 1e-13 * scale && nrm > 0.0 {
            q.column_mut(c).scale_mut(1.0 / nrm);
            r[(c, c)] = nrm;
        } else {
            r[(c, c)] = 0.0;
            let fresh = fresh_direction(n, basis, used, &q, c);
            q.set_column(c, &fresh);
        }
    }
    (q, r)
}

fn fresh_direction(
    n: usize,
    basis: &DMatrix<f64>,
    used: usize,
    q: &DMatrix<f64>,
    c: usize,
) -> DVector<f64> {
    for attempt in 0..n {
        let mut e = DVector::zeros(n);
        e[(attempt * 7919 + c * 104_729) % n] = 1.0;
        for _ in 0..2 {
            if used > 0 {
                let prev = basis.columns(0, used);
                let coeffs = prev.tr_mul(&e);
                e -= prev * coeffs;
            }
            for l in 0..c {
                let d = q.column(l).dot(&e);
                e.axpy(-d, &q.column(l).into_owned(), 1.0);
            }
        }
        let nrm = e.norm();
        if nrm > 0.5 {
            return e / nrm;
        }
    }
    DVector::zeros(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use nalgebra_sparse::CooMatrix;

    fn csr(d: &DMatrix<f64>) -> CsrMatrix<f64> {
        let mut coo = CooMatrix::new(d.nrows(), d.ncols());
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                if d[(i, j)] != 0.0 {
                    coo.push(i, j, d[(i, j)]);
                }
            }
        }
        CsrMatrix::from(&coo)
    }

    #[test]
    fn diagonal_exact() {
        let a = csr(&dmatrix![-1.0, 0.0; 0.0, -2.0]);
        let w = expm_action(&a, &DMatrix::identity(2, 2), 1.0, &ExpmConfig::default()).unwrap();
        let want = dmatrix![(-1f64).exp(), 0.0; 0.0, (-2f64).exp()];
        assert!((w - want).amax() < 1e-10);
    }

    #[test]
    fn nilpotent_exact() {
        let a = csr(&dmatrix![0.0, 1.0; 0.0, 0.0]);
        for t in [0.5, 3.0, 40.0] {
            let w = expm_action(&a, &DMatrix::identity(2, 2), t, &ExpmConfig::default()).unwrap();
            assert!((w - dmatrix![1.0, t; 0.0, 1.0]).amax() < 1e-12 * t);
            let col = expm_action(&a, &dmatrix![1.0; 1.0], t, &ExpmConfig::default()).unwrap();
            assert!((col - dmatrix![1.0 + t; 1.0]).amax() < 1e-12 * t);
        }
    }

    #[test]
    fn zero_time_is_identity_map() {
        let a = csr(&dmatrix![-3.0, 1.0; 1.0, -3.0]);
        let v = dmatrix![0.3, -2.0; 1.5, 0.25];
        assert_eq!(expm_action(&a, &v, 0.0, &ExpmConfig::default()).unwrap(), v);
    }

    #[test]
    fn zero_block_maps_to_zero() {
        let a = csr(&dmatrix![-3.0, 1.0; 1.0, -3.0]);
        let w = expm_action(&a, &DMatrix::zeros(2, 3), 1.0, &ExpmConfig::default()).unwrap();
        assert_eq!(w, DMatrix::zeros(2, 3));
    }

    #[test]
    fn dependent_columns_in_block() {
        let d = dmatrix![-2.0, 1.0, 0.0; 1.0, -2.0, 1.0; 0.0, 1.0, -2.0];
        let a = csr(&d);
        let v = dmatrix![1.0, 2.0; 0.0, 0.0; 1.0, 2.0];
        let cfg = ExpmConfig::default().with_tol(1e-12);
        let w = expm_action(&a, &v, 0.7, &cfg).unwrap();
        let want = expm(&d, 0.7).unwrap() * &v;
        assert!((w - want).amax() < 1e-12);
    }

    #[test]
    fn basis_cap_reports_non_convergence() {
        let n = 200;
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            if i + 1 < n {
                d[(i, i + 1)] = 50.0;
                d[(i + 1, i)] = -50.0;
            }
        }
        let a = csr(&d);
        let v = DMatrix::from_fn(n, 1, |i, _| ((i * 37 % 11) as f64) - 5.0);
        let cfg = ExpmConfig {
            max_basis: 10,
            ..ExpmConfig::default().with_tol(1e-10)
        };
        match expm_action(&a, &v, 1.0, &cfg) {
            Err(Error::NonConvergence { residual, max_basis }) => {
                assert_eq!(max_basis, 10);
                assert!(residual > 1e-10);
            }
            other => panic!("{other:?}"),
        }
        let mut substeps = 1;
        let w = expm_action_substepped(&a, &v, 1.0, &cfg, &mut substeps).unwrap();
        assert!(substeps > 1);
        let want = expm(&d, 1.0).unwrap() * &v;
        assert!((w - &want).norm() <= 1e-8 * v.norm());
    }

    #[test]
    fn bad_config() {
        let a = csr(&dmatrix![-1.0]);
        let v = dmatrix![1.0];
        let cfg = ExpmConfig { tol: 0.0, ..Default::default() };
        assert!(expm_action(&a, &v, 1.0, &cfg).is_err());
        let cfg = ExpmConfig { block_width: 0, ..Default::default() };
        assert!(expm_action(&a, &v, 1.0, &cfg).is_err());
        assert!(expm_action(&a, &v, -1.0, &ExpmConfig::default()).is_err());
        assert!(expm_action(&a, &dmatrix![1.0; 2.0], 1.0, &ExpmConfig::default()).is_err());
    }
}
