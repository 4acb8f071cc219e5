//! Analytic first-detection moments: the two-level system for any interval
//! density, and tight-binding rings under exponential intervals.
//!
//! Ring formulas take the particle to start at site 0 and be detected at
//! `x_d`; other pairs map onto this by translation and reflection. They are
//! conjectured closed forms checked numerically for 3 ≤ L ≤ 16, and values
//! outside that range carry `conjectural = true`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::intervals::IntervalDistribution;

pub const VERIFIED_L: std::ops::RangeInclusive<usize> = 3..=16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RingCase {
    OddReturn,
    OddArrival,
    EvenReturn,
    EvenArrival,
    EvenAntipode,
}

/// Ring geometry reduced by reflection to `0 <= x_d <= L/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RingGeometry {
    pub l: usize,
    pub x_d: usize,
    pub case: RingCase,
}

impl RingGeometry {
    pub fn new(l: usize, x_d: usize) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidArgument(format!("ring needs L >= 2, got {l}")));
        }
        if x_d >= l {
            return Err(Error::InvalidArgument(format!("x_d must lie in 0..{l}, got {x_d}")));
        }
        let x = x_d.min(l - x_d);
        let case = match (l % 2 == 0, x) {
            (false, 0) => RingCase::OddReturn,
            (false, _) => RingCase::OddArrival,
            (true, 0) => RingCase::EvenReturn,
            (true, x) if 2 * x == l => RingCase::EvenAntipode,
            (true, _) => RingCase::EvenArrival,
        };
        Ok(Self { l, x_d: x, case })
    }

    pub fn is_return(&self) -> bool {
        matches!(self.case, RingCase::OddReturn | RingCase::EvenReturn)
    }

    /// Reduced dimension `⌊L/2⌋ + 1`.
    pub fn reduced_dim(&self) -> usize {
        self.l / 2 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RingValue {
    pub value: f64,
    /// Evaluated outside the numerically verified range of L.
    pub conjectural: bool,
}

fn check_scales(gamma: f64, mean_tau: f64) -> Result<()> {
    if !(gamma > 0.0 && mean_tau > 0.0) || !gamma.is_finite() || !mean_tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "gamma and mean_tau must be > 0, got {gamma}, {mean_tau}"
        )));
    }
    Ok(())
}

fn ring_value(g: &RingGeometry, value: f64) -> RingValue {
    RingValue {
        value,
        conjectural: !VERIFIED_L.contains(&g.l),
    }
}

/// Conditional mean attempt count on a ring, exponential intervals.
pub fn ring_nbar_exp(l: usize, x_d: usize, gamma: f64, mean_tau: f64) -> Result<RingValue> {
    check_scales(gamma, mean_tau)?;
    let g = RingGeometry::new(l, x_d)?;
    let (lf, x) = (l as f64, g.x_d as f64);
    let z = 8.0 * gamma * gamma * mean_tau * mean_tau;
    let value = match g.case {
        RingCase::OddReturn | RingCase::EvenReturn => g.reduced_dim() as f64,
        RingCase::OddArrival => x * (lf - x) / z + (2.0 * lf + 3.0) / 4.0,
        RingCase::EvenArrival => x * lf / z + (lf + 3.0) / 2.0,
        RingCase::EvenAntipode => lf * lf / (4.0 * z) + (lf + 2.0) / 2.0,
    };
    Ok(ring_value(&g, value))
}

/// Conditional mean squared attempt count on a ring, exponential intervals.
pub fn ring_nsq_exp(l: usize, x_d: usize, gamma: f64, mean_tau: f64) -> Result<RingValue> {
    check_scales(gamma, mean_tau)?;
    let g = RingGeometry::new(l, x_d)?;
    let (lf, x) = (l as f64, g.x_d as f64);
    let inv2 = 1.0 / (gamma * gamma * mean_tau * mean_tau);
    let inv4 = inv2 * inv2;
    let value = match g.case {
        RingCase::OddReturn => {
            lf * (lf + 1.0) * (lf - 1.0) / 48.0 * inv2 + (2.0 * lf * lf + 3.0 * lf - 1.0) / 4.0
        }
        RingCase::OddArrival => {
            let s = x * (lf - x);
            lf * s * (s + 2.0) / 192.0 * inv4
                + (lf.powi(3) + 2.0 * s * (lf + 7.0) - lf) / 32.0 * inv2
                + (4.0 * lf * lf + 10.0 * lf - 3.0) / 8.0
        }
        RingCase::EvenReturn => lf.powi(3) / 32.0 * inv2 + lf * (lf + 4.0) / 2.0,
        RingCase::EvenArrival => {
            (3.0 * x * x * lf.powi(3) - 4.0 * x * (x * x - 1.0) * lf * lf) / 384.0 * inv4
                + (9.0 * lf.powi(3) + 12.0 * x * lf * lf + 24.0 * x * (x + 4.0) * lf
                    - 16.0 * x * (2.0 * x * x + 1.0))
                    / 192.0
                    * inv2
                + (lf * lf + 6.0 * lf) / 2.0
        }
        RingCase::EvenAntipode => {
            lf.powi(3) * (lf * lf + 8.0) / 3072.0 * inv4
                + (5.0 * lf.powi(3) + 12.0 * lf * lf - 2.0 * lf) / 96.0 * inv2
                + (lf * lf + 4.0 * lf) / 2.0
        }
    };
    Ok(ring_value(&g, value))
}

/// Conditional mean squared detection time on a ring, exponential intervals.
///
/// Arrival branches carry `γ⁴` on the `1/μ²` term and `γ²` on the constant
/// term (restored by dimensional analysis). Return problems use
/// `μ² <n²> + N_r Var(τ)` with `Var(τ) = μ²`.
pub fn ring_tsq_exp(l: usize, x_d: usize, gamma: f64, mean_tau: f64) -> Result<RingValue> {
    check_scales(gamma, mean_tau)?;
    let g = RingGeometry::new(l, x_d)?;
    let (lf, x) = (l as f64, g.x_d as f64);
    let mu2 = mean_tau * mean_tau;
    let g2 = gamma * gamma;
    let value = match g.case {
        RingCase::OddReturn | RingCase::EvenReturn => {
            let nsq = ring_nsq_exp(l, x_d, gamma, mean_tau)?.value;
            mu2 * nsq + g.reduced_dim() as f64 * mu2
        }
        RingCase::OddArrival => {
            let s = x * (lf - x);
            lf * s * (s + 2.0) / (192.0 * g2 * g2 * mu2)
                + (lf.powi(3) + 2.0 * s * (lf + 1.0) - lf) / (32.0 * g2)
                + (4.0 * lf * lf + 14.0 * lf + 3.0) / 8.0 * mu2
        }
        RingCase::EvenArrival => {
            (3.0 * x * x * lf.powi(3) - 4.0 * x * (x * x - 1.0) * lf * lf) / (384.0 * g2 * g2 * mu2)
                + (9.0 * lf.powi(3) + 12.0 * x * lf * lf + 24.0 * x * (x + 1.0) * lf
                    - 16.0 * x * (2.0 * x * x + 1.0))
                    / (192.0 * g2)
                + (lf * lf + 7.0 * lf + 3.0) / 2.0 * mu2
        }
        RingCase::EvenAntipode => {
            lf.powi(3) * (lf * lf + 8.0) / (3072.0 * g2 * g2 * mu2)
                + (5.0 * lf.powi(3) + 3.0 * lf * lf - 2.0 * lf) / (96.0 * g2)
                + (lf * lf + 5.0 * lf + 2.0) / 2.0 * mu2
        }
    };
    Ok(ring_value(&g, value))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TlsProblem {
    Return,
    Arrival,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TlsStats {
    pub p_det: f64,
    pub n_mean: f64,
    pub n_sq: f64,
    pub t_mean: f64,
    pub t_sq: f64,
    /// Interval-ensemble variance of the per-realization mean attempt
    /// number; known in closed form for the return problem only.
    pub nbar_variance: Option<f64>,
}

/// Exact moments of the symmetric two-level system `H = -γσ_x`.
pub fn tls_stats(problem: TlsProblem, dist: &IntervalDistribution, gamma: f64) -> Result<TlsStats> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("gamma must be > 0, got {gamma}")));
    }
    let mean = dist.mean();
    let second = dist.second_moment();
    // <cos² γτ> = (1 + <cos 2γτ>)/2, and likewise with a factor τ.
    let c = 0.5 * (1.0 + dist.charfn(2.0 * gamma).re);
    let c_t = 0.5 * (mean + dist.weighted_charfn(2.0 * gamma, 1).re);
    let one_minus_c = 1.0 - c;
    if one_minus_c <= 1e-12 {
        return Err(Error::Divergent(format!(
            "<cos^2(gamma tau)> = 1 for {dist}: detection moments diverge (gamma tau = k pi)"
        )));
    }
    Ok(match problem {
        TlsProblem::Return => {
            let n_sq = 2.0 + 2.0 / one_minus_c;
            // cos⁴x = (3 + 4cos2x + cos4x)/8
            let c4 = (3.0 + 4.0 * dist.charfn(2.0 * gamma).re + dist.charfn(4.0 * gamma).re) / 8.0;
            let var_cos2 = (c4 - c * c).max(0.0);
            TlsStats {
                p_det: 1.0,
                n_mean: 2.0,
                n_sq,
                t_mean: 2.0 * mean,
                t_sq: 2.0 * dist.variance() + mean * mean * n_sq,
                nbar_variance: Some(2.0 * var_cos2 / ((1.0 - c4) * one_minus_c)),
            }
        }
        TlsProblem::Arrival => TlsStats {
            p_det: 1.0,
            n_mean: 1.0 / one_minus_c,
            n_sq: (1.0 + c) / (one_minus_c * one_minus_c),
            t_mean: mean / one_minus_c,
            t_sq: second / one_minus_c + 2.0 * mean * c_t / (one_minus_c * one_minus_c),
            nbar_variance: None,
        },
    })
}
