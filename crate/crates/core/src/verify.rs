//! Self-check suites run by `qprobe verify`.
//!
//! `Quick` covers the exact identities and small oracles (seconds); `Full`
//! adds the ring closed-form grid and the Monte Carlo comparisons.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::closedform::{ring_nbar_exp, ring_nsq_exp, ring_tsq_exp, tls_stats, TlsProblem};
use crate::error::Result;
use crate::intervals::IntervalDistribution;
use crate::model::{QuantumModel, DEFAULT_DEGENERACY_TOL};
use crate::superop::{DetectionStatistics, SolveOptions, SuperoperatorSet, DEFAULT_ZERO_TOL};
use crate::trajectory::{run_per_realization, MomentEstimate, Records};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Quick,
    Full,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

pub fn stats_for(model: &QuantumModel, dist: &IntervalDistribution) -> Result<DetectionStatistics> {
    let spec = model.spectral_reduce(DEFAULT_DEGENERACY_TOL)?;
    SuperoperatorSet::build(&spec, dist)?.detection_stats(&SolveOptions::default())
}

/// `F_1..F_n` for fixed `tau`, propagating the full state with the matrix
/// exponential of `-iHτ` and projecting after each attempt.
pub fn stroboscopic_series(model: &QuantumModel, tau: f64, n_max: usize) -> Vec<f64> {
    let u: DMatrix<C64> = (model.hamiltonian() * C64::new(0.0, -tau)).exp();
    let d = model.psi_d();
    let mut phi = model.psi_in().clone();
    let mut out = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        phi = &u * phi;
        let a = d.dotc(&phi);
        out.push(a.norm_sqr());
        phi.axpy(-a, d, C64::new(1.0, 0.0));
    }
    out
}

/// The four interval laws of the return-quantization grid.
pub fn quantization_distributions() -> Vec<IntervalDistribution> {
    vec![
        IntervalDistribution::exponential(0.6).unwrap(),
        IntervalDistribution::gamma(5.0, 0.6).unwrap(),
        IntervalDistribution::gamma(25.0, 0.6).unwrap(),
        IntervalDistribution::fixed(0.7).unwrap(),
    ]
}

fn check(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name: name.into(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn tls_return_mean() -> Result<(bool, String)> {
    let model = QuantumModel::two_level(1.0, false)?;
    let mut worst: f64 = 0.0;
    for d in [
        IntervalDistribution::fixed(0.6)?,
        IntervalDistribution::exponential(0.6)?,
        IntervalDistribution::gamma(5.0, 0.6)?,
    ] {
        worst = worst.max((stats_for(&model, &d)?.n_mean - 2.0).abs());
    }
    Ok((worst < 1e-8, format!("max |n_mean - 2| = {worst:.2e}")))
}

fn return_quantization() -> Result<(bool, String)> {
    let (mut dp, mut dn): (f64, f64) = (0.0, 0.0);
    for l in 2..=16 {
        let model = QuantumModel::ring(l, 1.0, 0, 0)?;
        for d in quantization_distributions() {
            let s = stats_for(&model, &d)?;
            dp = dp.max((s.p_det - 1.0).abs());
            dn = dn.max((s.n_mean - (l / 2 + 1) as f64).abs());
        }
    }
    Ok((dp <= 1e-9 && dn <= 1e-7, format!("max |P_det - 1| = {dp:.2e}, max |n_mean - N_r| = {dn:.2e}")))
}

fn identities() -> Result<(bool, String)> {
    let dists = [
        IntervalDistribution::exponential(0.6)?,
        IntervalDistribution::gamma(25.0, 0.6)?,
        IntervalDistribution::gamma(2.5, 1.3)?,
        IntervalDistribution::fixed(0.7)?,
    ];
    let mut models = vec![QuantumModel::two_level(1.0, false)?, QuantumModel::two_level(1.0, true)?];
    for l in [3, 5, 6, 8, 11] {
        for x in [0, 1, l / 2] {
            models.push(QuantumModel::ring(l, 1.0, 0, x)?);
        }
    }
    let (mut worst, mut cases) = (0.0f64, 0);
    for m in &models {
        let spec = m.spectral_reduce(DEFAULT_DEGENERACY_TOL)?;
        for d in &dists {
            let set = SuperoperatorSet::build(&spec, d)?;
            let s = set.detection_stats(&SolveOptions::default())?;
            let r = set.universal_identity_check(&s, m.is_return());
            worst = worst.max(r.time_residual / r.tolerance);
            if let Some(rr) = r.return_residual {
                worst = worst.max(rr / r.tolerance);
            }
            cases += 1;
        }
    }
    Ok((worst <= 1.0, format!("{cases} cases, worst residual/tolerance = {worst:.2e}")))
}

fn zero_modes() -> Result<(bool, String)> {
    let mut cases = 0;
    for l in 2..=9 {
        for x in 0..=l / 2 {
            let spec = QuantumModel::ring(l, 1.0, 0, x)?.spectral_reduce(DEFAULT_DEGENERACY_TOL)?;
            let nr = spec.reduced_dim;
            for d in [IntervalDistribution::exponential(0.6)?, IntervalDistribution::gamma(5.0, 1.1)?] {
                let c = SuperoperatorSet::build(&spec, &d)?.zero_mode_census(DEFAULT_ZERO_TOL)?;
                if c.n_zero < 2 * nr - 1 || c.n_nonzero > (nr - 1) * (nr - 1) {
                    return Ok((false, format!("L={l} x_d={x} {d}: {} zero, {} nonzero", c.n_zero, c.n_nonzero)));
                }
                cases += 1;
            }
        }
    }
    Ok((true, format!("{cases} models")))
}

fn tls_closed_forms() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for d in [
        IntervalDistribution::exponential(0.6)?,
        IntervalDistribution::gamma(5.0, 0.6)?,
        IntervalDistribution::fixed(0.6)?,
    ] {
        for (problem, arrival) in [(TlsProblem::Return, false), (TlsProblem::Arrival, true)] {
            let s = stats_for(&QuantumModel::two_level(1.0, arrival)?, &d)?;
            let c = tls_stats(problem, &d, 1.0)?;
            for (a, b) in [(s.n_mean, c.n_mean), (s.n_sq, c.n_sq), (s.t_mean, c.t_mean), (s.t_sq, c.t_sq)] {
                worst = worst.max((a - b).abs() / b.abs());
            }
        }
    }
    Ok((worst < 1e-9, format!("max relative error {worst:.2e}")))
}

fn stroboscopic() -> Result<(bool, String)> {
    let models = [
        QuantumModel::two_level(1.0, false)?,
        QuantumModel::ring(5, 1.0, 2, 0)?,
        QuantumModel::ring(8, 1.0, 3, 0)?,
    ];
    let mut worst: f64 = 0.0;
    for m in &models {
        let spec = m.spectral_reduce(DEFAULT_DEGENERACY_TOL)?;
        for tau in [0.3, 0.6, 1.1] {
            let f = SuperoperatorSet::build(&spec, &IntervalDistribution::fixed(tau)?)?.fn_series(50)?;
            let g = stroboscopic_series(m, tau, 50);
            worst = f.iter().zip(&g).fold(worst, |w, (a, b)| w.max((a - b).abs()));
        }
    }
    Ok((worst <= 1e-10, format!("max |dF_n| = {worst:.2e}")))
}

fn antipode_l24() -> Result<(bool, String)> {
    let m = QuantumModel::ring(24, 1.0, 12, 0)?;
    let e = stats_for(&m, &IntervalDistribution::exponential(0.6)?)?.n_mean;
    let f = stats_for(&m, &IntervalDistribution::fixed(0.6)?)?.n_mean;
    let ok = (e - 63.0).abs() / 63.0 <= 1e-6 && (f - 101.4).abs() / 101.4 <= 5e-3;
    Ok((ok, format!("exponential {e:.8}, fixed {f:.4}")))
}

fn ring_oracles() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut at = String::new();
    for l in 3..=16 {
        for x in 0..=l / 2 {
            let spec = QuantumModel::ring(l, 1.0, 0, x)?.spectral_reduce(DEFAULT_DEGENERACY_TOL)?;
            for mu in [0.4, 0.6, 1.0, 2.0] {
                let d = IntervalDistribution::exponential(mu)?;
                let s = SuperoperatorSet::build(&spec, &d)?.detection_stats(&SolveOptions::default())?;
                let pairs = [
                    (s.n_mean, ring_nbar_exp(l, x, 1.0, mu)?.value),
                    (s.n_sq, ring_nsq_exp(l, x, 1.0, mu)?.value),
                    (s.t_sq, ring_tsq_exp(l, x, 1.0, mu)?.value),
                ];
                for (a, b) in pairs {
                    let r = (a - b).abs() / b.abs();
                    if r > worst {
                        worst = r;
                        at = format!(" (L={l} x_d={x} mu={mu})");
                    }
                }
            }
        }
    }
    Ok((worst <= 1e-6, format!("max relative error {worst:.2e}{at}")))
}

fn mc_series() -> Result<(bool, String)> {
    let model = QuantumModel::ring(6, 1.0, 1, 0)?;
    let d = IntervalDistribution::exponential(0.6)?;
    let exact = SuperoperatorSet::build(&model.spectral_reduce(DEFAULT_DEGENERACY_TOL)?, &d)?.fn_series(30)?;
    let ens = run_per_realization(&model, &d, 100_000, 30, 2024, false)?;
    let worst = exact
        .iter()
        .zip(ens.fn_mean.iter().zip(&ens.fn_stderr))
        .map(|(e, (m, se))| (m - e).abs() / se.max(1e-300))
        .fold(0.0f64, f64::max);
    Ok((worst <= 4.0, format!("max deviation {worst:.2} standard errors over n <= 30")))
}

fn tls_variance() -> Result<(bool, String)> {
    let model = QuantumModel::two_level(1.0, false)?;
    let d = IntervalDistribution::exponential(0.6)?;
    let want = tls_stats(TlsProblem::Return, &d, 1.0)?.nbar_variance.unwrap_or(f64::NAN);
    let ens = run_per_realization(&model, &d, 1_000_000, 2000, 7, false)?;
    let Records::PerRealization(r) = &ens.records else { unreachable!() };
    let est = MomentEstimate::from_samples(r.iter().map(|x| x.nbar));
    let z = (est.variance - want).abs() / est.variance_stderr;
    Ok((z <= 3.0, format!("Var = {:.4} +- {:.4}, exact {want:.4} ({z:.2} SE)", est.variance, est.variance_stderr)))
}

pub fn run(level: Level) -> Vec<CheckResult> {
    let mut out = vec![
        check("tls_return_mean", tls_return_mean),
        check("return_quantization", return_quantization),
        check("universal_identities", identities),
        check("zero_mode_census", zero_modes),
        check("tls_closed_forms", tls_closed_forms),
        check("stroboscopic_series", stroboscopic),
        check("ring24_antipode", antipode_l24),
    ];
    if level == Level::Full {
        out.push(check("ring_closed_forms", ring_oracles));
        out.push(check("mc_series_ring6", mc_series));
        out.push(check("mc_tls_variance", tls_variance));
    }
    out
}
