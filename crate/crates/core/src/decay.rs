//! Fits and checks for singular-value decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lowrank::LowRankFactor;

/// Relative floor below which singular values count as round-off.
pub const DEFAULT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularSpectrum {
    pub t: f64,
    pub level: usize,
    pub n: usize,
    /// Nonincreasing, nonnegative.
    pub sigmas: Vec<f64>,
}

impl SingularSpectrum {
    pub fn new(t: f64, level: usize, n: usize, sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput("singular values must be finite and nonnegative".into()));
        }
        if sigmas.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidInput("singular values must be nonincreasing".into()));
        }
        Ok(Self { t, level, n, sigmas })
    }

    pub fn from_factor(f: &LowRankFactor, t: f64, level: usize) -> Self {
        Self {
            t,
            level,
            n: f.dim(),
            sigmas: f.singular_values(),
        }
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    /// 1-based access; missing entries are zero.
    pub fn sigma(&self, k: usize) -> f64 {
        self.sigmas.get(k - 1).copied().unwrap_or(0.0)
    }

    pub fn largest(&self) -> f64 {
        self.sigma(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    #[serde(rename = "M")]
    pub m: f64,
    pub eta: f64,
    pub shift: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub r2: f64,
}

/// `(shift, k_min, k_max)` for `dim_y` outputs and `dim_z` terminal rows:
/// `shift = 2 dim_y + dim_z`, `k_min = max(1, 4 dim_y + dim_z)` and `k_max`
/// the last index above `floor · σ₁`. `None` if the window is empty.
pub fn default_window(
    spec: &SingularSpectrum,
    dim_y: usize,
    dim_z: usize,
    floor: f64,
) -> Option<(usize, usize, usize)> {
    let shift = 2 * dim_y + dim_z;
    let k_min = (4 * dim_y + dim_z).max(1).max(shift + 1);
    let cut = floor * spec.largest();
    let k_max = spec.sigmas.iter().take_while(|&&s| s > cut).count();
    (k_max >= k_min).then_some((shift, k_min, k_max))
}

struct LineFit {
    intercept: f64,
    slope: f64,
    r2: f64,
}

fn least_squares(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    LineFit {
        intercept,
        slope,
        r2,
    }
}

/// Least-squares fit of `ln σ_k = ln M − η √(k − shift)` over
/// `k ∈ [k_min, k_max]`, skipping `σ_k ≤ floor`.
pub fn fit_sqrt_decay(
    spec: &SingularSpectrum,
    shift: usize,
    k_min: usize,
    k_max: usize,
    floor: f64,
) -> Result<DecayFit> {
    if k_min <= shift || k_min > k_max || k_max > spec.len() {
        return Err(Error::InvalidInput(format!(
            "fit window [{k_min}, {k_max}] with shift {shift} invalid for {} values",
            spec.len()
        )));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = (k_min..=k_max)
        .filter(|&k| spec.sigma(k) > floor)
        .map(|k| (((k - shift) as f64).sqrt(), spec.sigma(k).ln()))
        .unzip();
    if x.len() < 4 {
        return Err(Error::TooFewPoints {
            got: x.len(),
            needed: 4,
        });
    }
    let fit = least_squares(&x, &y);
    Ok(DecayFit {
        m: fit.intercept.exp(),
        eta: -fit.slope,
        shift,
        k_min,
        k_max,
        r2: fit.r2,
    })
}

/// Log-log slope of `σ₁(t)` over the smaller half of the `t` values.
pub fn fit_time_power(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            got: points.len(),
            needed: 3,
        });
    }
    if points
        .iter()
        .any(|&(t, s)| !(t > 0.0 && t.is_finite() && s > 0.0 && s.is_finite()))
    {
        return Err(Error::DegenerateTimes(
            "times and values must be positive and finite".into(),
        ));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::DegenerateTimes("repeated time value".into()));
    }
    let used = sorted.len().div_ceil(2).max(2);
    let (x, y): (Vec<f64>, Vec<f64>) = sorted[..used].iter().map(|(t, s)| (t.ln(), s.ln())).unzip();
    Ok(least_squares(&x, &y).slope)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeylViolation {
    pub j: usize,
    pub k: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct WeylReport {
    pub checked: usize,
    pub violations: Vec<WeylViolation>,
}

impl WeylReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `σ_{j+k−1}(F1 + F2) ≤ σ_j(F1) + σ_k(F2) + slack` for every pair
/// with `j + k − 1` within `s_sum`. Missing trailing values count as zero.
pub fn verify_weyl(s_a: &[f64], s_b: &[f64], s_sum: &[f64], slack: f64) -> WeylReport {
    let get = |s: &[f64], i: usize| s.get(i - 1).copied().unwrap_or(0.0);
    let len = s_sum.len();
    let mut report = WeylReport::default();
    for j in 1..=len {
        for k in 1..=(len + 1 - j) {
            let lhs = s_sum[j + k - 2];
            let rhs = get(s_a, j) + get(s_b, k);
            report.checked += 1;
            if lhs > rhs + slack {
                report.violations.push(WeylViolation { j, k, lhs, rhs });
            }
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundEntry {
    pub k: usize,
    pub sigma: f64,
    pub bound: f64,
    /// `(bound − σ_k) / bound`; negative when violated.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BoundReport {
    pub entries: Vec<BoundEntry>,
    pub flagged: Vec<usize>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// Compares `σ_k` with `M t^{1−2α} e^{−η√(k−shift)} (1 + tol_factor)`,
/// `shift = 2 dim_y + dim_z`, for `k` from `max(1, 4 dim_y + dim_z)` to the
/// end of the fit window. The fitted `M` already contains the time factor of
/// the spectrum it was fitted to, so the constant in front of the time
/// factor is `fit.m / t^{1−2α}`.
pub fn check_thm_bound(
    spec: &SingularSpectrum,
    fit: &DecayFit,
    t: f64,
    alpha: f64,
    dim_y: usize,
    dim_z: usize,
    tol_factor: f64,
) -> BoundReport {
    let shift = 2 * dim_y + dim_z;
    let start = (4 * dim_y + dim_z).max(1).max(shift);
    let time_factor = t.powf(1.0 - 2.0 * alpha);
    let m_const = fit.m / time_factor;
    let mut report = BoundReport::default();
    for k in start..=fit.k_max.min(spec.len()) {
        let sigma = spec.sigma(k);
        let bound =
            m_const * time_factor * (-fit.eta * ((k - shift) as f64).sqrt()).exp() * (1.0 + tol_factor);
        let margin = (bound - sigma) / bound;
        if sigma > bound {
            report.flagged.push(k);
        }
        report.entries.push(BoundEntry {
            k,
            sigma,
            bound,
            margin,
        });
    }
    report
}
