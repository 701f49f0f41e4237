//! Low-rank factor of the differential Lyapunov solution by sinc quadrature
//! of its integral representation.

use nalgebra::DMatrix;
use nalgebra_sparse::CsrMatrix;

use crate::error::{Error, Result};
use crate::grid::DiscretizedSystem;
use crate::krylov::{expm_action_substepped, ExpmConfig};
use crate::lowrank::LowRankFactor;
use crate::sinc::{error_scale, SincRule, DEFAULT_STRIP};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DleSincParams {
    /// Negative-side node count; `m + n_pos + 1` nodes in total.
    pub m: usize,
    /// Strip half-width.
    pub d: f64,
    /// Endpoint exponent the rule is matched to.
    pub alpha: f64,
    pub expm: ExpmConfig,
}

impl DleSincParams {
    pub fn new(m: usize, alpha: f64) -> Self {
        Self {
            m,
            d: DEFAULT_STRIP,
            alpha,
            expm: ExpmConfig::default(),
        }
    }
}

/// Column count of the factor produced for `m` nodes on the negative side,
/// `dim_y` outputs and `dim_z` terminal rows.
pub fn rank_bound(m: usize, dim_y: usize, dim_z: usize) -> usize {
    (2 * m + 2) * dim_y + dim_z
}

/// `e^{dt Aᵀ} V`, skipping empty steps.
fn propagate(
    at: &CsrMatrix<f64>,
    v: &DMatrix<f64>,
    dt: f64,
    cfg: &ExpmConfig,
    substeps: &mut usize,
) -> Result<DMatrix<f64>> {
    if dt == 0.0 {
        return Ok(v.clone());
    }
    expm_action_substepped(at, v, dt, cfg, substeps)
}

/// `P(t) ≈ Z Zᵀ` with columns `√(h w_k) e^{z_k Aᵀ} Cᵀ` and, when `G ≠ 0`,
/// `e^{tAᵀ} Gᵀ`. The Krylov tolerance is tightened to a tenth of the
/// quadrature error scale.
pub fn dle_sinc_factor(
    sys: &DiscretizedSystem,
    t: f64,
    params: &DleSincParams,
) -> Result<LowRankFactor> {
    if !(0.0..0.5).contains(&params.alpha) {
        return Err(Error::IllPosed {
            alpha: params.alpha,
        });
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::ParameterOutOfRange(format!("time t = {t}")));
    }
    let n = sys.n();
    let has_c = sys.c.nrows() > 0 && sys.c.iter().any(|&v| v != 0.0);
    let has_g = sys.has_terminal();
    if t == 0.0 {
        return Ok(if has_g {
            sys.terminal_factor()
        } else {
            LowRankFactor::zero(n)
        });
    }

    let rho = 1.0 - 2.0 * params.alpha;
    let tol = params
        .expm
        .tol
        .min(0.1 * error_scale(params.d, rho, params.m));
    let cfg = params.expm.with_tol(tol);
    let at = sys.a.transpose();
    let mut substeps = 1;
    let mut blocks: Vec<DMatrix<f64>> = Vec::new();

    if has_c {
        let rule = SincRule::for_dle(t, params.d, params.alpha, params.m)?;
        let mut v = sys.c.transpose();
        let mut prev = 0.0;
        for (z, w) in rule.nodes.iter().zip(rule.scaled_weights()) {
            v = propagate(&at, &v, z - prev, &cfg, &mut substeps)?;
            prev = *z;
            blocks.push(&v * w.sqrt());
        }
    }
    if has_g {
        blocks.push(propagate(&at, &sys.g.transpose(), t, &cfg, &mut substeps)?);
    }
    if blocks.is_empty() {
        return Ok(LowRankFactor::zero(n));
    }
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut z = DMatrix::zeros(n, cols);
    let mut at_col = 0;
    for b in &blocks {
        z.columns_mut(at_col, b.ncols()).copy_from(b);
        at_col += b.ncols();
    }
    LowRankFactor::from_columns(z)
}
