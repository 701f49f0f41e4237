//! Batch runs of the four benchmark examples over a refinement ladder.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::decay::{
    check_thm_bound, default_window, fit_sqrt_decay, fit_time_power, DecayFit, SingularSpectrum,
    DEFAULT_FLOOR,
};
use crate::dle::{dle_sinc_factor, DleSincParams};
use crate::dre::{solve, SplittingConfig};
use crate::error::{Error, Result};
use crate::grid::{assemble_example, DiscretizedSystem};
use crate::krylov::ExpmConfig;
use crate::lowrank::{sym_eigen, LowRankFactor};
use crate::oracle::{dense_dle, dense_dre};
use crate::sinc::DEFAULT_STRIP;

/// Largest quadrature exponent used when the system's own `α` is ill-posed.
pub const TOLERANT_ALPHA: f64 = 0.45;
pub const TOLERANT_MAX_RANK: usize = 200;
pub const ORACLE_MAX_NX: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub example_id: u32,
    pub levels: Vec<usize>,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub n_steps: usize,
    /// Defaults to `T·2^{-j}`, `j = 0..=8`.
    pub time_sweep: Option<Vec<f64>>,
    pub compress_tol: f64,
    pub expm_tol: f64,
    pub sinc_m: usize,
    pub d: f64,
    pub max_rank: Option<usize>,
    pub bound_tol_factor: f64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            example_id: 1,
            levels: vec![8, 16, 32, 64, 128],
            t_final: 0.1,
            n_steps: 256,
            time_sweep: None,
            compress_tol: 1e-14,
            expm_tol: 1e-8,
            sinc_m: 128,
            d: DEFAULT_STRIP,
            max_rank: None,
            bound_tol_factor: 0.5,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.example_id) {
            return Err(Error::UnknownExample(self.example_id));
        }
        if self.levels.is_empty() || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("levels must be nonempty and strictly increasing".into()));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("T = {} must be positive", self.t_final)));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be positive".into()));
        }
        if let Some(sweep) = &self.time_sweep {
            if sweep.iter().any(|&t| !(t > 0.0 && t <= self.t_final)) {
                return Err(Error::Config("time_sweep values must lie in (0, T]".into()));
            }
        }
        Ok(())
    }

    pub fn sweep_times(&self) -> Vec<f64> {
        match &self.time_sweep {
            Some(s) => s.clone(),
            None => (0..=8).map(|j| self.t_final * 0.5f64.powi(j)).collect(),
        }
    }

    /// Single-column Krylov spaces; the short recurrence suffices for
    /// symmetric `A`.
    fn expm(&self, sys: &DiscretizedSystem) -> ExpmConfig {
        ExpmConfig {
            tol: self.expm_tol,
            block_width: 1,
            reorthogonalize: !is_symmetric(sys),
            ..ExpmConfig::default()
        }
    }

    /// Splitting settings for `sys`; ill-posed systems get a clamped
    /// quadrature exponent and a rank cap.
    pub fn splitting(&self, sys: &DiscretizedSystem) -> SplittingConfig {
        let tolerant = sys.alpha >= 0.5;
        SplittingConfig {
            n_steps: self.n_steps,
            compress_tol: self.compress_tol,
            sinc_m: self.sinc_m,
            sinc_d: self.d,
            sinc_alpha: Some(sys.alpha.min(TOLERANT_ALPHA)),
            max_rank: self
                .max_rank
                .or(tolerant.then_some(TOLERANT_MAX_RANK)),
            expm: self.expm(sys),
            sample_times: Vec::new(),
        }
    }

    fn dle_params(&self, sys: &DiscretizedSystem) -> DleSincParams {
        DleSincParams {
            m: self.sinc_m,
            d: self.d,
            alpha: sys.alpha,
            expm: self.expm(sys),
        }
    }
}

fn is_symmetric(sys: &DiscretizedSystem) -> bool {
    let t = sys.a.transpose();
    t.row_offsets() == sys.a.row_offsets()
        && t.col_indices() == sys.a.col_indices()
        && t.values() == sys.a.values()
}

/// Solution factors at the requested times, by the DLE quadrature when the
/// system has no input and by Strang splitting otherwise.
pub fn solve_at_times(
    sys: &DiscretizedSystem,
    cfg: &ExperimentConfig,
    times: &[f64],
) -> Result<Vec<(f64, LowRankFactor)>> {
    if !sys.has_input() {
        let params = cfg.dle_params(sys);
        return times
            .iter()
            .map(|&t| {
                let f = dle_sinc_factor(sys, t, &params)?.compress(cfg.compress_tol)?;
                Ok((t, f))
            })
            .collect();
    }
    let mut split = cfg.splitting(sys);
    split.sample_times = times.to_vec();
    let tr = solve(sys, &sys.terminal_factor(), cfg.t_final, &split)?;
    // Snapshots come back sorted and deduplicated; map each request to its step.
    let tau = cfg.t_final / cfg.n_steps as f64;
    times
        .iter()
        .map(|&t| {
            let step_t = (t / tau).round() * tau;
            let i = tr
                .times
                .iter()
                .position(|&s| (s - step_t).abs() <= 1e-12 * cfg.t_final)
                .ok_or_else(|| Error::InvalidInput(format!("no snapshot for t = {t}")))?;
            Ok((t, tr.factors[i].clone()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSummary {
    pub nx: usize,
    pub n: usize,
    pub rank: Option<usize>,
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    pub fit: Option<DecayFit>,
    /// `None` when no bound is claimed (ill-posed system) or no fit exists.
    pub bound_passed: Option<bool>,
    pub flagged: Vec<usize>,
    pub error: Option<String>,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub example_id: u32,
    pub alpha: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub n_steps: usize,
    pub levels: Vec<LevelSummary>,
    pub sweep_level: Option<usize>,
    pub sweep: Vec<(f64, f64)>,
    pub time_power: Option<f64>,
    /// `σ₁` ratios between successive levels.
    pub growth: Vec<f64>,
    pub bound_failures: bool,
    pub runtime_errors: bool,
    pub runtime_s: f64,
}

impl ExperimentSummary {
    /// 0 on all-pass, 1 on a bound-check failure, 2 on a runtime error.
    pub fn exit_code(&self) -> i32 {
        if self.runtime_errors {
            2
        } else if self.bound_failures {
            1
        } else {
            0
        }
    }
}

pub fn spectra_path(dir: &Path, example: u32, level: usize) -> PathBuf {
    dir.join(format!("spectra_{example}_{level}.csv"))
}

pub fn sweep_path(dir: &Path, example: u32) -> PathBuf {
    dir.join(format!("sweep_{example}.csv"))
}

pub fn summary_path(dir: &Path, example: u32) -> PathBuf {
    dir.join(format!("summary_{example}.json"))
}

pub fn write_spectrum_csv(path: &Path, sigmas: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "sigma"])?;
    for (k, s) in sigmas.iter().enumerate() {
        w.write_record([(k + 1).to_string(), format!("{s:e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `k,sigma` file, checking `k = 1, 2, …` and nonincreasing values.
pub fn read_spectrum_csv(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["k", "sigma"] {
        return Err(Error::InvalidInput(format!(
            "{}: expected header k,sigma",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<(usize, f64)>().enumerate() {
        let (k, s) = rec?;
        if k != i + 1 {
            return Err(Error::InvalidInput(format!(
                "{}: row {} has k = {k}",
                path.display(),
                i + 1
            )));
        }
        out.push(s);
    }
    SingularSpectrum::new(0.0, 0, out.len(), out.clone())?;
    Ok(out)
}

pub fn write_sweep_csv(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "sigma1"])?;
    for (t, s) in points {
        w.write_record([format!("{t:e}"), format!("{s:e}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().collect::<Vec<_>>() != ["t", "sigma1"] {
        return Err(Error::InvalidInput(format!(
            "{}: expected header t,sigma1",
            path.display()
        )));
    }
    r.deserialize::<(f64, f64)>()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Output rows and terminal rows of `sys`.
fn dims(sys: &DiscretizedSystem) -> (usize, usize) {
    let dim_z = if sys.has_terminal() { sys.g.nrows() } else { 0 };
    (sys.c.nrows(), dim_z)
}

fn analyse(
    level: &mut LevelSummary,
    spec: &SingularSpectrum,
    sys: &DiscretizedSystem,
    cfg: &ExperimentConfig,
) {
    level.rank = Some(spec.len());
    level.sigma1 = spec.sigmas.first().copied();
    level.sigma2 = spec.sigmas.get(1).copied();
    let (dim_y, dim_z) = dims(sys);
    let Some((shift, k_min, k_max)) = default_window(spec, dim_y, dim_z, DEFAULT_FLOOR) else {
        return;
    };
    let floor = DEFAULT_FLOOR * spec.largest();
    if let Ok(fit) = fit_sqrt_decay(spec, shift, k_min, k_max, floor) {
        level.fit = Some(fit);
        if sys.alpha < 0.5 {
            let rep = check_thm_bound(
                spec,
                &fit,
                cfg.t_final,
                sys.alpha,
                dim_y,
                dim_z,
                cfg.bound_tol_factor,
            );
            level.bound_passed = Some(rep.passed());
            level.flagged = rep.flagged;
        }
    }
}

/// Runs every level, writes spectra, the time sweep of the finest
/// successful level and the summary into `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let start = Instant::now();
    fs::create_dir_all(&cfg.output_dir)?;
    let finest = *cfg.levels.last().unwrap();
    let sweep_times = cfg.sweep_times();

    let mut summary = ExperimentSummary {
        example_id: cfg.example_id,
        alpha: 0.0,
        t_final: cfg.t_final,
        n_steps: cfg.n_steps,
        levels: Vec::new(),
        sweep_level: None,
        sweep: Vec::new(),
        time_power: None,
        growth: Vec::new(),
        bound_failures: false,
        runtime_errors: false,
        runtime_s: 0.0,
    };

    for &nx in &cfg.levels {
        let level_start = Instant::now();
        let mut level = LevelSummary {
            nx,
            n: nx * nx,
            rank: None,
            sigma1: None,
            sigma2: None,
            fit: None,
            bound_passed: None,
            flagged: Vec::new(),
            error: None,
            runtime_s: 0.0,
        };
        let result = (|| -> Result<Vec<(f64, f64)>> {
            let sys = assemble_example(cfg.example_id, nx, nx)?;
            summary.alpha = sys.alpha;
            let mut times = vec![cfg.t_final];
            if nx == finest {
                times.extend(sweep_times.iter().copied());
            }
            let sols = solve_at_times(&sys, cfg, &times)?;
            let spec = SingularSpectrum::from_factor(&sols[0].1, cfg.t_final, nx);
            write_spectrum_csv(&spectra_path(&cfg.output_dir, cfg.example_id, nx), &spec.sigmas)?;
            analyse(&mut level, &spec, &sys, cfg);
            Ok(sols[1..]
                .iter()
                .map(|(t, f)| (*t, f.singular_values().first().copied().unwrap_or(0.0)))
                .collect())
        })();
        match result {
            Ok(points) if !points.is_empty() => {
                summary.sweep_level = Some(nx);
                summary.sweep = points;
            }
            Ok(_) => {}
            Err(e) => {
                level.error = Some(e.to_string());
                summary.runtime_errors = true;
            }
        }
        if level.bound_passed == Some(false) {
            summary.bound_failures = true;
        }
        level.runtime_s = level_start.elapsed().as_secs_f64();
        summary.levels.push(level);
    }

    summary.sweep.sort_by(|a, b| a.0.total_cmp(&b.0));
    if !summary.sweep.is_empty() {
        write_sweep_csv(&sweep_path(&cfg.output_dir, cfg.example_id), &summary.sweep)?;
        summary.time_power = fit_time_power(&summary.sweep).ok();
    }
    let sig: Vec<Option<f64>> = summary.levels.iter().map(|l| l.sigma1).collect();
    summary.growth = sig
        .windows(2)
        .filter_map(|w| Some(w[1]? / w[0]?))
        .collect();
    summary.runtime_s = start.elapsed().as_secs_f64();

    let mut file = fs::File::create(summary_path(&cfg.output_dir, cfg.example_id))?;
    serde_json::to_writer_pretty(&mut file, &summary)?;
    writeln!(file)?;
    Ok(summary)
}

/// `σ₁(t)` at the sweep times for a single level; writes the sweep file.
pub fn sweep_time(cfg: &ExperimentConfig, nx: usize) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let sys = assemble_example(cfg.example_id, nx, nx)?;
    let mut points: Vec<(f64, f64)> = solve_at_times(&sys, cfg, &cfg.sweep_times())?
        .iter()
        .map(|(t, f)| (*t, f.singular_values().first().copied().unwrap_or(0.0)))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    write_sweep_csv(&sweep_path(&cfg.output_dir, cfg.example_id), &points)?;
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub example_id: u32,
    pub nx: usize,
    /// `"dle"` or `"dre"`, the oracle used.
    pub path: &'static str,
    /// `‖P − P_ref‖₂ / ‖P_ref‖₂`.
    pub rel_error: f64,
    pub top_sigma_abs_errors: Vec<f64>,
}

fn spectral_norm(m: &nalgebra::DMatrix<f64>) -> f64 {
    sym_eigen(m).0.first().map_or(0.0, |v| v.abs())
}

/// Low-rank solution at `T` against the dense reference.
pub fn compare_oracle(cfg: &ExperimentConfig, nx: usize) -> Result<OracleReport> {
    if nx > ORACLE_MAX_NX {
        return Err(Error::ParameterOutOfRange(format!(
            "oracle comparison limited to nx <= {ORACLE_MAX_NX}, got {nx}"
        )));
    }
    let sys = assemble_example(cfg.example_id, nx, nx)?;
    let (path, reference) = if sys.has_input() {
        ("dre", dense_dre(&sys, cfg.t_final, 1e-8)?)
    } else {
        ("dle", dense_dle(&sys, cfg.t_final, 16)?)
    };
    let sols = solve_at_times(&sys, cfg, &[cfg.t_final])?;
    let p = sols[0].1.to_dense();
    let rel_error = spectral_norm(&(&p - &reference)) / spectral_norm(&reference);
    let mine = sols[0].1.singular_values();
    let refs: Vec<f64> = sym_eigen(&reference).0.iter().map(|v| v.abs()).collect();
    let top_sigma_abs_errors = (0..10)
        .map(|i| (mine.get(i).copied().unwrap_or(0.0) - refs.get(i).copied().unwrap_or(0.0)).abs())
        .collect();
    Ok(OracleReport {
        example_id: cfg.example_id,
        nx,
        path,
        rel_error,
        top_sigma_abs_errors,
    })
}
