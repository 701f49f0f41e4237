//! Symmetric low-rank factors `P = Z S Zᵀ`.
//!
//! The core `S` may be indefinite. Every operation returns a new value; a
//! factor with zero columns is a valid representation of the zero operator.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactor {
    z: DMatrix<f64>,
    s: DMatrix<f64>,
}

impl LowRankFactor {
    /// Builds a factor from `Z` (n × r) and a symmetric `S` (r × r).
    ///
    /// `S` is accepted when `‖S − Sᵀ‖_max ≤ 1e-12 ‖S‖_max` and stored exactly
    /// symmetrized.
    pub fn new(z: DMatrix<f64>, s: DMatrix<f64>) -> Result<Self> {
        if s.nrows() != s.ncols() {
            return Err(Error::InvalidInput(format!(
                "core must be square, got {}x{}",
                s.nrows(),
                s.ncols()
            )));
        }
        if z.ncols() != s.nrows() {
            return Err(Error::DimensionMismatch {
                expected: z.ncols(),
                got: s.nrows(),
                context: "core size vs factor columns",
            });
        }
        if !all_finite(&z) || !all_finite(&s) {
            return Err(Error::InvalidInput("non-finite factor entry".into()));
        }
        let scale = s.amax();
        let asym = (&s - s.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "core not symmetric: ‖S − Sᵀ‖_max = {asym:e}"
            )));
        }
        Ok(Self::from_parts(z, s))
    }

    /// `Z Zᵀ`, i.e. identity core.
    pub fn from_columns(z: DMatrix<f64>) -> Result<Self> {
        let r = z.ncols();
        Self::new(z, DMatrix::identity(r, r))
    }

    /// Zero operator on `R^n` (rank 0).
    pub fn zero(n: usize) -> Self {
        Self {
            z: DMatrix::zeros(n, 0),
            s: DMatrix::zeros(0, 0),
        }
    }

    pub(crate) fn from_parts(z: DMatrix<f64>, s: DMatrix<f64>) -> Self {
        let s = symmetrize(s);
        Self { z, s }
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn dim(&self) -> usize {
        self.z.nrows()
    }

    pub fn rank(&self) -> usize {
        self.z.ncols()
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.z) && all_finite(&self.s)
    }

    /// Dense `Z S Zᵀ`. Only meant for small `n`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        if self.rank() == 0 {
            return DMatrix::zeros(self.dim(), self.dim());
        }
        symmetrize(&self.z * (&self.s * self.z.transpose()))
    }

    /// Same `Z`, new core.
    pub(crate) fn with_core(&self, s: DMatrix<f64>) -> Self {
        Self::from_parts(self.z.clone(), s)
    }

    /// New `Z`, same core.
    pub(crate) fn with_z(&self, z: DMatrix<f64>) -> Self {
        Self {
            z,
            s: self.s.clone(),
        }
    }

    /// `Z (S (Zᵀ X))` without forming the n × n product.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.nrows(),
                context: "apply operand rows",
            });
        }
        if self.rank() == 0 {
            return Ok(DMatrix::zeros(x.nrows(), x.ncols()));
        }
        let zt_x = self.z.tr_mul(x);
        Ok(&self.z * (&self.s * zt_x))
    }

    /// Exact sum: `Z = [Z1 | Z2]`, `S = blockdiag(S1, S2)`.
    pub fn concat(&self, other: &LowRankFactor) -> Result<LowRankFactor> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
                context: "concat row dimension",
            });
        }
        let (n, r1, r2) = (self.dim(), self.rank(), other.rank());
        let mut z = DMatrix::zeros(n, r1 + r2);
        z.columns_mut(0, r1).copy_from(&self.z);
        z.columns_mut(r1, r2).copy_from(&other.z);
        let mut s = DMatrix::zeros(r1 + r2, r1 + r2);
        s.view_mut((0, 0), (r1, r1)).copy_from(&self.s);
        s.view_mut((r1, r1), (r2, r2)).copy_from(&other.s);
        Ok(Self::from_parts(z, s))
    }

    /// Eigen-pairs of `P` restricted to the column space of `Z`: returns an
    /// orthonormal basis `Q U` and the eigenvalues, ordered by decreasing
    /// magnitude.
    fn spectral_parts(&self) -> (DMatrix<f64>, Vec<f64>) {
        let (n, r) = (self.dim(), self.rank());
        if r == 0 || n == 0 {
            return (DMatrix::zeros(n, 0), Vec::new());
        }
        let scale = self.z.amax();
        if scale == 0.0 {
            return (DMatrix::zeros(n, 0), Vec::new());
        }
        let (q, rr) = thin_qr(&(&self.z / scale));
        let core = symmetrize(&rr * (&self.s * rr.transpose()) * (scale * scale));
        let (vals, u) = sym_eigen(&core);
        (q * u, vals)
    }

    /// Signed eigenvalues of `P` on the range of `Z`, by decreasing magnitude.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.spectral_parts().1
    }

    /// Nonzero singular values of `Z S Zᵀ`, decreasing.
    pub fn singular_values(&self) -> Vec<f64> {
        self.spectral_parts()
            .1
            .into_iter()
            .map(f64::abs)
            .filter(|&v| v > 0.0)
            .collect()
    }

    /// Drops eigenvalues with magnitude `≤ rel_tol · max|λ|`.
    ///
    /// The result has orthonormal `Z` and diagonal `S`, with
    /// `‖P − P'‖₂ ≤ rel_tol ‖P‖₂`.
    pub fn compress(&self, rel_tol: f64) -> Result<LowRankFactor> {
        self.compress_capped(rel_tol, usize::MAX)
    }

    /// [`compress`](Self::compress), keeping at most `max_rank` terms.
    pub fn compress_capped(&self, rel_tol: f64, max_rank: usize) -> Result<LowRankFactor> {
        if !(0.0..1.0).contains(&rel_tol) {
            return Err(Error::ParameterOutOfRange(format!(
                "compression tolerance {rel_tol} not in [0, 1)"
            )));
        }
        if !self.is_finite() {
            return Err(Error::InvalidInput("non-finite factor entry".into()));
        }
        let (basis, vals) = self.spectral_parts();
        let largest = vals.first().map_or(0.0, |v| v.abs());
        let keep = vals
            .iter()
            .take_while(|v| v.abs() > rel_tol * largest)
            .count()
            .min(max_rank);
        let z = basis.columns(0, keep).into_owned();
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&vals[..keep]));
        Ok(Self::from_parts(z, s))
    }
}

fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m.read(i, j))
}

/// Householder QR with `Q` of size `n × min(n, r)`. Used instead of
/// nalgebra's, which loses accuracy on wide matrices with strongly graded
/// columns.
pub(crate) fn thin_qr(z: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = to_faer(z).qr();
    (
        from_faer(qr.compute_thin_q().as_ref()),
        from_faer(qr.compute_thin_r().as_ref()),
    )
}

/// Eigenpairs of a symmetric matrix, sorted by decreasing magnitude.
pub(crate) fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = to_faer(m).selfadjoint_eigendecomposition(faer::Side::Lower);
    let (s, u) = (eig.s().column_vector(), eig.u());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s.read(b).abs().total_cmp(&s.read(a).abs()).then(a.cmp(&b)));
    let vals = order.iter().map(|&i| s.read(i)).collect();
    let vecs = DMatrix::from_fn(n, n, |i, j| u.read(i, order[j]));
    (vals, vecs)
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn compress_merges_duplicate_columns() {
        let z = dmatrix![1.0, 1.0; 0.0, 0.0; 0.0, 0.0];
        let f = LowRankFactor::from_columns(z).unwrap();
        let c = f.compress(1e-10).unwrap();
        assert_eq!(c.rank(), 1);
        let p = c.to_dense();
        assert!((p[(0, 0)] - 2.0).abs() < 1e-14);
        assert!(p.iter().enumerate().all(|(i, v)| i == 0 || v.abs() < 1e-14));
    }

    #[test]
    fn compress_keeps_everything_at_zero_tolerance() {
        let z = dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0];
        let f = LowRankFactor::new(z, dmatrix![1.0, 0.0; 0.0, 1e-3]).unwrap();
        let c = f.compress(0.0).unwrap();
        assert_eq!(c.rank(), 2);
        assert!((c.to_dense() - f.to_dense()).amax() < 1e-15);
    }

    #[test]
    fn singular_values_of_diagonal_core() {
        let f = LowRankFactor::new(DMatrix::identity(2, 2), dmatrix![3.0, 0.0; 0.0, -2.0]).unwrap();
        assert_eq!(f.singular_values(), vec![3.0, 2.0]);
    }

    #[test]
    fn zero_core_has_empty_spectrum() {
        let f = LowRankFactor::new(dmatrix![1.0; 0.0], dmatrix![0.0]).unwrap();
        assert!(f.singular_values().is_empty());
        assert!(LowRankFactor::zero(5).singular_values().is_empty());
    }

    #[test]
    fn concat_with_zero_is_identity() {
        let f = LowRankFactor::from_columns(dmatrix![1.0; 2.0; 3.0]).unwrap();
        let g = f.concat(&LowRankFactor::zero(3)).unwrap();
        assert_eq!(g, f);
    }

    #[test]
    fn concat_cancellation() {
        let f = LowRankFactor::new(dmatrix![1.0, 0.5; 2.0, 0.0; 3.0, -1.0], dmatrix![2.0, 0.3; 0.3, 1.0])
            .unwrap();
        let neg = LowRankFactor::new(f.z().clone(), -f.s().clone()).unwrap();
        let sum = f.concat(&neg).unwrap().compress(0.0).unwrap();
        let s1 = f.singular_values()[0];
        assert!(sum.singular_values().iter().all(|&v| v <= 1e-12 * s1));
    }

    #[test]
    fn apply_rank_one_scales_column() {
        let f = LowRankFactor::new(dmatrix![0.6; 0.8], dmatrix![5.0]).unwrap();
        let y = f.apply(&dmatrix![0.6; 0.8]).unwrap();
        assert!((y - dmatrix![3.0; 4.0]).amax() < 1e-14);
        let zero = f.apply(&DMatrix::zeros(2, 3)).unwrap();
        assert_eq!(zero, DMatrix::zeros(2, 3));
    }

    #[test]
    fn errors() {
        assert!(LowRankFactor::new(dmatrix![f64::NAN], dmatrix![1.0]).is_err());
        assert!(LowRankFactor::new(dmatrix![1.0, 1.0], dmatrix![1.0, 2.0; 0.0, 1.0]).is_err());
        let f = LowRankFactor::from_columns(dmatrix![1.0; 1.0]).unwrap();
        assert!(f.concat(&LowRankFactor::zero(3)).is_err());
        assert!(f.apply(&DMatrix::zeros(3, 1)).is_err());
        assert!(f.compress(1.0).is_err());
        assert!(f.compress(-0.1).is_err());
    }

    #[test]
    fn wide_graded_factor_keeps_accuracy() {
        // Many more columns than rows, with column norms spanning 60 decades.
        let (n, r) = (12, 80);
        let z = DMatrix::from_fn(n, r, |i, j| {
            let smooth = (((i + 1) * (j % 7 + 1)) as f64 * 0.37).sin();
            smooth * 10f64.powf(-(j as f64) * 0.75)
        });
        let f = LowRankFactor::from_columns(z).unwrap();
        let dense = f.to_dense();
        let c = f.compress(0.0).unwrap();
        assert!(c.rank() <= n);
        assert!((c.to_dense() - &dense).norm() <= 1e-13 * dense.norm());
        let e = c.eigenvalues();
        assert!(e.iter().all(|&v| v.is_finite() && v >= 0.0));
    }
}
