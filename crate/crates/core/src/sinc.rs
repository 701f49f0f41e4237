//! Sinc quadrature on a finite interval `(0, t)`.
//!
//! The trapezoid rule with mesh `h` on the real line is pulled back through
//! `z = t e^w / (e^w + 1)`. Nodes cluster geometrically at both endpoints,
//! which gives exponential convergence in `√m` for integrands with
//! algebraic endpoint singularities such as `s^{-2α}`.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};

/// Strip half-width used for the Laplacian examples.
pub const DEFAULT_STRIP: f64 = PI / 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SincRule {
    pub t: f64,
    pub d: f64,
    pub rho: f64,
    pub mu: f64,
    pub m: usize,
    pub n_pos: usize,
    pub h: f64,
    /// `z_k` for `k = -m..=n_pos`, increasing.
    pub nodes: Vec<f64>,
    /// `w_k = z_k (t - z_k) / t`.
    pub weights: Vec<f64>,
}

fn check_params(d: f64, rho: f64) -> Result<()> {
    if !(d > 0.0 && d < PI / 2.0) {
        return Err(Error::ParameterOutOfRange(format!(
            "strip half-width d = {d} not in (0, π/2)"
        )));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::ParameterOutOfRange(format!(
            "left decay rate rho = {rho} must be positive"
        )));
    }
    Ok(())
}

/// Smallest `m ≥ 1` with `√(2πd/(ρm)) ≤ 2πd/ln 2`.
pub fn min_m(d: f64, rho: f64) -> Result<usize> {
    check_params(d, rho)?;
    let bound = LN_2 * LN_2 / (2.0 * PI * d * rho);
    Ok((bound.ceil() as usize).max(1))
}

/// Expected error decay `exp(-√(2πρdm))` of the rule.
pub fn error_scale(d: f64, rho: f64, m: usize) -> f64 {
    (-(2.0 * PI * rho * d * m as f64).sqrt()).exp()
}

impl SincRule {
    pub fn new(t: f64, d: f64, rho: f64, mu: f64, m: usize) -> Result<Self> {
        check_params(d, rho)?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::ParameterOutOfRange(format!("interval length t = {t}")));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::ParameterOutOfRange(format!(
                "right decay rate mu = {mu} must be positive"
            )));
        }
        let required = min_m(d, rho)?;
        if m < required {
            return Err(Error::NodeCountTooSmall { required, got: m });
        }
        // Guard the ceiling against products like 0.8 * 5 = 4.000000000000001.
        let raw = rho / mu * m as f64 + 1.0;
        let n_pos = (raw - 1e-9 * raw).ceil() as usize;
        let h = (2.0 * PI * d / (rho * m as f64)).sqrt();

        let count = m + n_pos + 1;
        let mut nodes = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for k in -(m as i64)..=(n_pos as i64) {
            let kh = k as f64 * h;
            // Overflow-free forms of t e^{kh}/(e^{kh}+1) and t e^{kh}/(e^{kh}+1)².
            let z = if kh >= 0.0 {
                t / (1.0 + (-kh).exp())
            } else {
                let e = kh.exp();
                t * e / (1.0 + e)
            };
            let tail = if kh >= 0.0 {
                let e = (-kh).exp();
                t * e / (1.0 + e)
            } else {
                t / (1.0 + kh.exp())
            };
            nodes.push(z);
            weights.push(z * tail / t);
        }
        Ok(Self {
            t,
            d,
            rho,
            mu,
            m,
            n_pos,
            h,
            nodes,
            weights,
        })
    }

    /// Rule with `ρ = 1 − 2α`, `μ = 1`, matched to an `s^{-2α}` singularity.
    pub fn for_dle(t: f64, d: f64, alpha: f64, m: usize) -> Result<Self> {
        if !(0.0..0.5).contains(&alpha) {
            return Err(Error::IllPosed { alpha });
        }
        Self::new(t, d, 1.0 - 2.0 * alpha, 1.0, m)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Signed index `k` of the `i`-th node.
    pub fn index_of(&self, i: usize) -> i64 {
        i as i64 - self.m as i64
    }

    /// Effective weights `h·w_k`.
    pub fn scaled_weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().map(move |w| self.h * w)
    }

    /// `h Σ w_k f(z_k)`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for (i, (&z, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let v = f(z);
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand {
                    index: self.index_of(i),
                    node: z,
                });
            }
            acc += w * v;
        }
        Ok(self.h * acc)
    }
}
