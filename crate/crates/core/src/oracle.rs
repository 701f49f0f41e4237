//! Dense brute-force references for small systems.
//!
//! Nothing here touches the Krylov or sinc machinery: the DLE reference uses
//! graded composite Gauss–Legendre quadrature with dense exponentials, and the
//! DRE reference integrates the matrix ODE with an adaptive Dormand–Prince
//! 5(4) pair.

use nalgebra::DMatrix;
use nalgebra_sparse::CsrMatrix;

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::grid::DiscretizedSystem;
use crate::krylov::spmm;
use crate::lowrank::{sym_eigen, symmetrize};

pub const EXPM_CAP: usize = 400;
pub const DLE_CAP: usize = 256;
pub const DRE_CAP: usize = 256;

const GAUSS_POINTS: usize = 8;
const DLE_SELF_TOL: f64 = 1e-8;
const DLE_MAX_PANELS: usize = 1 << 13;

/// `exp(tA)` by scaling and squaring.
pub fn dense_expm(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if a.nrows() > EXPM_CAP {
        return Err(Error::SizeCap {
            n: a.nrows(),
            cap: EXPM_CAP,
        });
    }
    expm(a, t)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; k];
    let mut w = vec![0.0; k];
    for i in 0..k {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..k {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            let dp = k as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (mut q0, mut q1) = (1.0, 0.0);
                for j in 0..k {
                    let q2 = q1;
                    q1 = q0;
                    q0 = ((2 * j + 1) as f64 * z * q1 - j as f64 * q2) / (j + 1) as f64;
                }
                let dq = k as f64 * (z * q0 - q1) / (z * z - 1.0);
                w[i] = 2.0 / ((1.0 - z * z) * dq * dq);
                break;
            }
        }
        x[i] = z;
    }
    (x, w)
}

fn is_symmetric(a: &DMatrix<f64>) -> bool {
    (a - a.transpose()).amax() <= 1e-14 * a.amax()
}

/// `s ↦ e^{sAᵀ} X` evaluated densely, through an eigendecomposition when
/// `A` is symmetric.
enum DenseFlow {
    Eigen { q: DMatrix<f64>, lambda: Vec<f64> },
    Pade { at: DMatrix<f64> },
}

impl DenseFlow {
    fn new(a: &DMatrix<f64>) -> Self {
        if is_symmetric(a) {
            let (lambda, q) = sym_eigen(a);
            Self::Eigen { q, lambda }
        } else {
            Self::Pade { at: a.transpose() }
        }
    }

    fn apply(&self, x: &DMatrix<f64>, s: f64) -> Result<DMatrix<f64>> {
        match self {
            Self::Eigen { q, lambda } => {
                let mut y = q.tr_mul(x);
                for (i, l) in lambda.iter().enumerate() {
                    y.row_mut(i).scale_mut((l * s).exp());
                }
                Ok(q * y)
            }
            Self::Pade { at } => Ok(expm(at, s)? * x),
        }
    }
}

fn dle_quadrature(
    flow: &DenseFlow,
    ct: &DMatrix<f64>,
    t: f64,
    panels: usize,
    grading: f64,
) -> Result<DMatrix<f64>> {
    let n = ct.nrows();
    let (gx, gw) = gauss_legendre(GAUSS_POINTS);
    let mut acc = DMatrix::zeros(n, n);
    let edge = |i: usize| t * (i as f64 / panels as f64).powf(grading);
    for i in 0..panels {
        let (lo, hi) = (edge(i), edge(i + 1));
        let half = 0.5 * (hi - lo);
        for (x, w) in gx.iter().zip(&gw) {
            let s = lo + half * (x + 1.0);
            let v = flow.apply(ct, s)?;
            acc.ger(half * w, &v.column(0), &v.column(0), 1.0);
            for c in 1..v.ncols() {
                acc.ger(half * w, &v.column(c), &v.column(c), 1.0);
            }
        }
    }
    Ok(acc)
}

/// `e^{tAᵀ}GᵀG e^{tA} + ∫₀ᵗ e^{sAᵀ}CᵀC e^{sA} ds`, with the panel count
/// doubled from `n_quad` until the relative change is below `1e-8`.
pub fn dense_dle(sys: &DiscretizedSystem, t: f64, n_quad: usize) -> Result<DMatrix<f64>> {
    let n = sys.n();
    if n > DLE_CAP {
        return Err(Error::SizeCap { n, cap: DLE_CAP });
    }
    if !(t >= 0.0) {
        return Err(Error::ParameterOutOfRange(format!("time t = {t}")));
    }
    let a = sys.a_dense();
    let flow = DenseFlow::new(&a);
    let mut p = DMatrix::zeros(n, n);
    if sys.g.nrows() > 0 {
        let eg = flow.apply(&sys.g.transpose(), t)?;
        p += &eg * eg.transpose();
    }
    let c_zero = sys.c.iter().all(|&v| v == 0.0);
    if t > 0.0 && sys.c.nrows() > 0 && !c_zero {
        let ct = sys.c.transpose();
        let grading = 2.0 / (1.0 - 2.0 * sys.alpha.clamp(0.0, 0.45));
        let mut panels = n_quad.max(1);
        let mut prev = dle_quadrature(&flow, &ct, t, panels, grading)?;
        loop {
            panels *= 2;
            let next = dle_quadrature(&flow, &ct, t, panels, grading)?;
            let change = (&next - &prev).norm() / next.norm().max(f64::MIN_POSITIVE);
            prev = next;
            if change < DLE_SELF_TOL {
                break;
            }
            if panels >= DLE_MAX_PANELS {
                return Err(Error::OracleNonConvergence { change });
            }
        }
        p += prev;
    }
    Ok(symmetrize(p))
}

fn pack_upper(p: &DMatrix<f64>) -> Vec<f64> {
    let n = p.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in 0..=j {
            out.push(p[(i, j)]);
        }
    }
    out
}

fn unpack_upper(v: &[f64], n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            p[(i, j)] = v[k];
            p[(j, i)] = v[k];
            k += 1;
        }
    }
    p
}

struct RiccatiRhs {
    at: CsrMatrix<f64>,
    ctc: DMatrix<f64>,
    b: DMatrix<f64>,
    n: usize,
}

impl RiccatiRhs {
    fn eval(&self, y: &[f64]) -> Vec<f64> {
        let p = unpack_upper(y, self.n);
        let x = spmm(&self.at, &p);
        let mut f = &x + x.transpose() + &self.ctc;
        if self.b.ncols() > 0 {
            let pb = &p * &self.b;
            f -= &pb * pb.transpose();
        }
        pack_upper(&f)
    }
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Matrix Riccati ODE `Ṗ = AᵀP + PA + CᵀC − PBBᵀP`, `P(0) = GᵀG`, integrated
/// on the packed upper triangle with relative step control `rtol`.
pub fn dense_dre(sys: &DiscretizedSystem, t: f64, rtol: f64) -> Result<DMatrix<f64>> {
    let n = sys.n();
    if n > DRE_CAP {
        return Err(Error::SizeCap { n, cap: DRE_CAP });
    }
    if !(t >= 0.0) || !(rtol > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("t = {t}, rtol = {rtol}")));
    }
    let rhs = RiccatiRhs {
        at: sys.a.transpose(),
        ctc: sys.c.transpose() * &sys.c,
        b: sys.b.clone(),
        n,
    };
    let mut y = pack_upper(&(sys.g.transpose() * &sys.g));
    if t == 0.0 {
        return Ok(unpack_upper(&y, n));
    }
    let len = y.len();
    let mut time = 0.0;
    let mut h = t * 1e-3;
    let mut k: Vec<Vec<f64>> = vec![rhs.eval(&y)];
    let mut stage = vec![0.0; len];
    while time < t {
        if time + h > t {
            h = t - time;
        }
        if h <= 1e-14 * t {
            return Err(Error::Stiffness { t: time });
        }
        k.truncate(1);
        for s in 1..7 {
            stage.copy_from_slice(&y);
            for (j, kj) in k.iter().enumerate() {
                let a = DP_A[s][j];
                if a != 0.0 {
                    for (st, kv) in stage.iter_mut().zip(kj) {
                        *st += h * a * kv;
                    }
                }
            }
            let _ = DP_C[s];
            k.push(rhs.eval(&stage));
        }
        // stage now holds the 5th-order solution (FSAL row).
        let mut err = vec![0.0; len];
        for (s, ks) in k.iter().enumerate() {
            let e = DP_E[s];
            if e != 0.0 {
                for (ev, kv) in err.iter_mut().zip(ks) {
                    *ev += h * e * kv;
                }
            }
        }
        let scale = rtol * max_abs(&y).max(max_abs(&stage)).max(f64::MIN_POSITIVE);
        let ratio = max_abs(&err) / scale;
        if !ratio.is_finite() {
            h *= 0.2;
            continue;
        }
        if ratio <= 1.0 {
            time += h;
            y.copy_from_slice(&stage);
            let last = k.pop().unwrap();
            k.clear();
            k.push(last);
        }
        let factor = if ratio == 0.0 {
            5.0
        } else {
            (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    Ok(unpack_upper(&y, n))
}
