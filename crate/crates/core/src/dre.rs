//! Strang splitting for the differential Riccati equation in low-rank
//! `Z S Zᵀ` form.
//!
//! The affine part `Ṗ = AᵀP + PA + CᵀC` is advanced exactly (up to the
//! quadrature and Krylov errors) as `e^{τAᵀ} P e^{τA} + Q(τ)` where `Q(τ)` is
//! the DLE solution from zero, computed once. The quadratic part
//! `Ṗ = −PBBᵀP` has the closed-form flow `P ↦ P (I + sBBᵀP)⁻¹`, which acts
//! on the core only.

use nalgebra::DMatrix;
use nalgebra_sparse::CsrMatrix;

use crate::dle::{dle_sinc_factor, DleSincParams};
use crate::error::{Error, Result};
use crate::grid::DiscretizedSystem;
use crate::krylov::{expm_action_substepped, ExpmConfig};
use crate::lowrank::{symmetrize, LowRankFactor};
use crate::sinc::DEFAULT_STRIP;

#[derive(Debug, Clone, PartialEq)]
pub struct SplittingConfig {
    pub n_steps: usize,
    /// Relative eigenvalue cut applied after every linear substep.
    pub compress_tol: f64,
    pub sinc_m: usize,
    pub sinc_d: f64,
    /// Exponent the step quadrature is matched to; the system's `α` when unset.
    pub sinc_alpha: Option<f64>,
    pub max_rank: Option<usize>,
    pub expm: ExpmConfig,
    /// Times at which snapshots are kept (rounded to the nearest step).
    /// Only the final time is kept when empty.
    pub sample_times: Vec<f64>,
}

impl Default for SplittingConfig {
    fn default() -> Self {
        Self {
            n_steps: 256,
            compress_tol: 1e-14,
            sinc_m: 64,
            sinc_d: DEFAULT_STRIP,
            sinc_alpha: None,
            max_rank: None,
            expm: ExpmConfig::default(),
            sample_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolutionTrajectory {
    pub times: Vec<f64>,
    pub factors: Vec<LowRankFactor>,
}

impl SolutionTrajectory {
    pub fn last(&self) -> Option<(f64, &LowRankFactor)> {
        self.times.last().copied().zip(self.factors.last())
    }
}

/// Exact flow of `Ṗ = −PBBᵀP` over time `s`, acting on the core.
pub fn nonlinear_flow(f: &LowRankFactor, b: &DMatrix<f64>, s: f64) -> Result<LowRankFactor> {
    if b.nrows() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: b.nrows(),
            context: "input map rows",
        });
    }
    if s == 0.0 || b.ncols() == 0 || f.rank() == 0 {
        return Ok(f.clone());
    }
    let k = f.z().tr_mul(b);
    let r = f.rank();
    let m = &k * k.transpose();
    let lhs = DMatrix::identity(r, r) + f.s() * &m * s;
    let core = lhs
        .lu()
        .solve(f.s())
        .ok_or(Error::SingularSolve("Riccati core update"))?;
    Ok(f.with_core(symmetrize(core)))
}

/// Propagator `Z ↦ e^{τAᵀ} Z` that remembers how many substeps the Krylov
/// solver needed.
struct Propagator<'a> {
    at: CsrMatrix<f64>,
    cfg: &'a ExpmConfig,
    substeps: usize,
}

impl<'a> Propagator<'a> {
    fn new(sys: &DiscretizedSystem, cfg: &'a ExpmConfig) -> Self {
        Self {
            at: sys.a.transpose(),
            cfg,
            substeps: 1,
        }
    }

    fn linear(
        &mut self,
        f: &LowRankFactor,
        tau: f64,
        inhomog: &LowRankFactor,
        tol: f64,
        max_rank: usize,
    ) -> Result<LowRankFactor> {
        let moved = if f.rank() == 0 {
            f.clone()
        } else {
            let z = expm_action_substepped(&self.at, f.z(), tau, self.cfg, &mut self.substeps)?;
            f.with_z(z)
        };
        moved.concat(inhomog)?.compress_capped(tol, max_rank)
    }
}

fn cap(max_rank: Option<usize>) -> usize {
    max_rank.unwrap_or(usize::MAX)
}

/// `e^{τAᵀ} P e^{τA} + Q(τ)`, compressed. `inhomog` is `Q(τ)`.
pub fn linear_flow(
    f: &LowRankFactor,
    sys: &DiscretizedSystem,
    tau: f64,
    inhomog: &LowRankFactor,
    cfg: &SplittingConfig,
) -> Result<LowRankFactor> {
    Propagator::new(sys, &cfg.expm).linear(f, tau, inhomog, cfg.compress_tol, cap(cfg.max_rank))
}

/// `Q(τ)` for the linear substep: the DLE solution from `P = 0`.
pub fn step_inhomogeneity(
    sys: &DiscretizedSystem,
    tau: f64,
    cfg: &SplittingConfig,
) -> Result<LowRankFactor> {
    let mut no_terminal = sys.clone();
    no_terminal.g = DMatrix::zeros(0, sys.n());
    let params = DleSincParams {
        m: cfg.sinc_m,
        d: cfg.sinc_d,
        alpha: cfg.sinc_alpha.unwrap_or(sys.alpha),
        expm: cfg.expm,
    };
    dle_sinc_factor(&no_terminal, tau, &params)?.compress_capped(cfg.compress_tol, cap(cfg.max_rank))
}

/// One Strang step: half nonlinear, full linear, half nonlinear.
pub fn strang_step(
    f: &LowRankFactor,
    sys: &DiscretizedSystem,
    tau: f64,
    inhomog: &LowRankFactor,
    cfg: &SplittingConfig,
) -> Result<LowRankFactor> {
    let mut prop = Propagator::new(sys, &cfg.expm);
    step(&mut prop, f, sys, tau, inhomog, cfg)
}

fn step(
    prop: &mut Propagator,
    f: &LowRankFactor,
    sys: &DiscretizedSystem,
    tau: f64,
    inhomog: &LowRankFactor,
    cfg: &SplittingConfig,
) -> Result<LowRankFactor> {
    let tol = cfg.compress_tol;
    let max_rank = cap(cfg.max_rank);
    if !sys.has_input() {
        return prop.linear(f, tau, inhomog, tol, max_rank);
    }
    let half = nonlinear_flow(f, &sys.b, 0.5 * tau)?;
    let lin = prop.linear(&half, tau, inhomog, tol, max_rank)?;
    nonlinear_flow(&lin, &sys.b, 0.5 * tau)
}

/// Integrates from `P(0) = g_factor` to `t_final` in `cfg.n_steps` equal
/// Strang steps.
pub fn solve(
    sys: &DiscretizedSystem,
    g_factor: &LowRankFactor,
    t_final: f64,
    cfg: &SplittingConfig,
) -> Result<SolutionTrajectory> {
    if g_factor.dim() != sys.n() {
        return Err(Error::DimensionMismatch {
            expected: sys.n(),
            got: g_factor.dim(),
            context: "initial factor dimension",
        });
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::ParameterOutOfRange(format!("final time {t_final}")));
    }
    if cfg.n_steps == 0 {
        return Err(Error::ParameterOutOfRange("n_steps must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.compress_tol) {
        return Err(Error::ParameterOutOfRange(format!(
            "compress_tol = {}",
            cfg.compress_tol
        )));
    }
    let initial = g_factor.compress_capped(cfg.compress_tol, cap(cfg.max_rank))?;
    if t_final == 0.0 {
        return Ok(SolutionTrajectory {
            times: vec![0.0],
            factors: vec![initial],
        });
    }

    let tau = t_final / cfg.n_steps as f64;
    let mut wanted: Vec<usize> = if cfg.sample_times.is_empty() {
        vec![cfg.n_steps]
    } else {
        cfg.sample_times
            .iter()
            .map(|&s| {
                if !(0.0..=t_final).contains(&s) {
                    Err(Error::ParameterOutOfRange(format!(
                        "sample time {s} outside [0, {t_final}]"
                    )))
                } else {
                    Ok((s / tau).round() as usize)
                }
            })
            .collect::<Result<_>>()?
    };
    wanted.sort_unstable();
    wanted.dedup();

    let mut out = SolutionTrajectory {
        times: Vec::with_capacity(wanted.len()),
        factors: Vec::with_capacity(wanted.len()),
    };
    let mut next = wanted.iter().peekable();
    if next.peek() == Some(&&0) {
        out.times.push(0.0);
        out.factors.push(initial.clone());
        next.next();
    }
    if next.peek().is_none() {
        return Ok(out);
    }

    let inhomog = step_inhomogeneity(sys, tau, cfg)?;
    let mut prop = Propagator::new(sys, &cfg.expm);
    let mut f = initial;
    let last = *wanted.last().unwrap();
    for k in 1..=last {
        f = step(&mut prop, &f, sys, tau, &inhomog, cfg)?;
        if !f.is_finite() {
            return Err(Error::Divergence { step: k });
        }
        if next.peek() == Some(&&k) {
            out.times.push(k as f64 * tau);
            out.factors.push(f.clone());
            next.next();
        }
    }
    Ok(out)
}
