//! Monte Carlo trajectories of the randomly probed system.
//!
//! States live in the full Hilbert space, expressed in the eigenbasis of H,
//! so free evolution is a phase multiplication and dark components survive.
//! Realization `i` draws from its own ChaCha stream `(seed, i)`, and
//! reductions run over fixed-size chunks in index order, so results are
//! bit-identical for any thread count.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::intervals::{IntervalDistribution, IntervalSampler};
use crate::model::{QuantumModel, DEFAULT_DARK_TOL, DEFAULT_DEGENERACY_TOL};
use crate::C64;

pub const DEFAULT_N_ABORT: u64 = 1_000_000;
/// Per-realization propagation stops once the detectable weight left is below this.
pub const TAIL_CUTOFF: f64 = 1e-20;
/// Bernoulli realizations whose bright weight relative to survival falls
/// below this are censored early: they would otherwise run to `n_abort`.
const DARK_TRAP_RATIO: f64 = 1e-14;
const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Bernoulli,
    PerRealization,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BernoulliRecord {
    /// Attempt of first detection, or attempts made when censored.
    pub n: u64,
    /// Elapsed time, the sum of the `n` sampled intervals.
    pub t: f64,
    pub censored: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RealizationRecord {
    /// `Σ n F_n / Σ F_n` for this interval sequence.
    pub nbar: f64,
    /// `Σ F_n` over the propagated attempts.
    pub p_det: f64,
    /// Detectable weight left when propagation stopped.
    pub tail_bound: f64,
    /// Attempts actually propagated (`<= n_cut`).
    pub steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub enum Records {
    Bernoulli(Vec<BernoulliRecord>),
    PerRealization(Vec<RealizationRecord>),
}

#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    pub mode: Mode,
    pub n_real: usize,
    pub seed: u64,
    pub n_cut: usize,
    pub n_abort: u64,
    pub records: Records,
    /// Ensemble mean of `F_n`, `n = 1..=n_cut` (per-realization mode), or
    /// the empirical first-detection histogram (Bernoulli mode, `n_cut` bins).
    pub fn_mean: Vec<f64>,
    /// Standard error of each `fn_mean` entry.
    pub fn_stderr: Vec<f64>,
}

/// Full-space propagator in the eigenbasis of H.
#[derive(Debug, Clone)]
pub struct Propagator {
    energies: Vec<f64>,
    /// `<E_i|psi_d>`.
    detector: DVector<C64>,
    /// `<E_i|psi_in>`.
    initial: DVector<C64>,
    /// Bright-state coefficients in the eigenbasis, grouped by cluster.
    bright: Vec<(Vec<usize>, Vec<C64>)>,
}

impl Propagator {
    pub fn new(model: &QuantumModel) -> Self {
        let spectrum = model.spectrum();
        let detector = spectrum.coordinates(model.psi_d());
        let initial = spectrum.coordinates(model.psi_in());
        let n = spectrum.energies.len();
        let mut bright = Vec::new();
        let mut start = 0;
        for i in 1..=n {
            if i == n || spectrum.energies[i] - spectrum.energies[i - 1] > DEFAULT_DEGENERACY_TOL {
                let idx: Vec<usize> = (start..i).collect();
                let weight: f64 = idx.iter().map(|&k| detector[k].norm_sqr()).sum();
                if weight > DEFAULT_DARK_TOL {
                    let coeffs = idx.iter().map(|&k| detector[k] / weight.sqrt()).collect();
                    bright.push((idx, coeffs));
                }
                start = i;
            }
        }
        Self {
            energies: spectrum.energies,
            detector,
            initial,
            bright,
        }
    }

    pub fn initial(&self) -> DVector<C64> {
        self.initial.clone()
    }

    /// Free evolution for time `tau`.
    #[inline]
    pub fn evolve(&self, state: &mut DVector<C64>, tau: f64) {
        for (c, &e) in state.iter_mut().zip(&self.energies) {
            *c *= C64::from_polar(1.0, -e * tau);
        }
    }

    /// `<psi_d|state>`.
    #[inline]
    pub fn detection_amplitude(&self, state: &DVector<C64>) -> C64 {
        self.detector.dotc(state)
    }

    /// Apply `I - |psi_d><psi_d|` given the precomputed amplitude.
    #[inline]
    pub fn project_out(&self, state: &mut DVector<C64>, amplitude: C64) {
        state.axpy(-amplitude, &self.detector, C64::new(1.0, 0.0));
    }

    /// Squared norm of the projection onto the bright subspace.
    pub fn bright_weight(&self, state: &DVector<C64>) -> f64 {
        self.bright
            .iter()
            .map(|(idx, coeffs)| {
                idx.iter()
                    .zip(coeffs)
                    .map(|(&k, b)| b.conj() * state[k])
                    .sum::<C64>()
                    .norm_sqr()
            })
            .sum()
    }

    /// Deterministic `F_1..F_n` for a given interval sequence.
    pub fn detection_series(&self, taus: &[f64]) -> Vec<f64> {
        let mut state = self.initial();
        taus.iter()
            .map(|&tau| {
                self.evolve(&mut state, tau);
                let a = self.detection_amplitude(&state);
                self.project_out(&mut state, a);
                a.norm_sqr()
            })
            .collect()
    }
}

fn stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn bernoulli_one<R: Rng>(prop: &Propagator, sampler: &IntervalSampler, n_abort: u64, rng: &mut R) -> BernoulliRecord {
    let mut state = prop.initial();
    let mut t = 0.0;
    let mut n = 0u64;
    while n < n_abort {
        n += 1;
        let tau = sampler.sample(rng);
        t += tau;
        prop.evolve(&mut state, tau);
        let a = prop.detection_amplitude(&state);
        let survival = state.norm_squared();
        let p = if survival > 0.0 { a.norm_sqr() / survival } else { 0.0 };
        let u: f64 = rng.random();
        if u < p {
            return BernoulliRecord { n, t, censored: false };
        }
        prop.project_out(&mut state, a);
        if n % 64 == 0 {
            let s = state.norm_squared();
            if s <= 0.0 || prop.bright_weight(&state) < DARK_TRAP_RATIO * s {
                break;
            }
        }
    }
    BernoulliRecord { n, t, censored: true }
}

fn per_realization_one<R: Rng>(
    prop: &Propagator,
    sampler: &IntervalSampler,
    n_cut: usize,
    keep_series: bool,
    rng: &mut R,
    fn_sum: &mut [f64],
    fn_sq_sum: &mut [f64],
) -> RealizationRecord {
    let mut state = prop.initial();
    let mut total = 0.0;
    let mut weighted = 0.0;
    let mut series = keep_series.then(|| Vec::with_capacity(n_cut));
    let mut steps = 0;
    let mut tail = prop.bright_weight(&state);
    for n in 1..=n_cut {
        let tau = sampler.sample(rng);
        prop.evolve(&mut state, tau);
        let a = prop.detection_amplitude(&state);
        prop.project_out(&mut state, a);
        let f = a.norm_sqr();
        total += f;
        weighted += n as f64 * f;
        fn_sum[n - 1] += f;
        fn_sq_sum[n - 1] += f * f;
        if let Some(s) = series.as_mut() {
            s.push(f);
        }
        steps = n;
        tail = (tail - f).max(0.0);
        if n % 16 == 0 {
            tail = prop.bright_weight(&state);
            if tail < TAIL_CUTOFF {
                break;
            }
        }
    }
    if steps == n_cut {
        tail = prop.bright_weight(&state);
    }
    if let Some(s) = series.as_mut() {
        s.resize(n_cut, 0.0);
    }
    RealizationRecord {
        nbar: if total > 0.0 { weighted / total } else { f64::NAN },
        p_det: total,
        tail_bound: tail,
        steps,
        series,
    }
}

fn chunks(n_real: usize) -> Vec<(usize, usize)> {
    (0..n_real.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(n_real)))
        .collect()
}

/// Direct simulation: measure, collapse with the conditional detection
/// probability, repeat until success or `n_abort` attempts.
///
/// The stored amplitude is never renormalized, so its squared norm is the
/// survival probability. `hist_bins` sets the length of the empirical
/// histogram stored in `fn_mean`.
pub fn run_bernoulli(
    model: &QuantumModel,
    dist: &IntervalDistribution,
    n_real: usize,
    seed: u64,
    n_abort: u64,
    hist_bins: usize,
) -> Result<TrajectoryEnsemble> {
    if n_abort == 0 {
        return Err(Error::InvalidArgument("n_abort must be >= 1".into()));
    }
    let prop = Propagator::new(model);
    let sampler = dist.sampler();
    let parts: Vec<Vec<BernoulliRecord>> = chunks(n_real)
        .into_par_iter()
        .map(|(lo, hi)| {
            (lo..hi)
                .map(|i| bernoulli_one(&prop, &sampler, n_abort, &mut stream(seed, i)))
                .collect()
        })
        .collect();
    let records: Vec<BernoulliRecord> = parts.into_iter().flatten().collect();

    let mut counts = vec![0u64; hist_bins];
    for r in records.iter().filter(|r| !r.censored) {
        if let Some(c) = counts.get_mut(r.n as usize - 1) {
            *c += 1;
        }
    }
    let nf = n_real.max(1) as f64;
    let fn_mean: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
    let fn_stderr = fn_mean.iter().map(|&p| (p * (1.0 - p) / nf).sqrt()).collect();
    Ok(TrajectoryEnsemble {
        mode: Mode::Bernoulli,
        n_real,
        seed,
        n_cut: hist_bins,
        n_abort,
        records: Records::Bernoulli(records),
        fn_mean,
        fn_stderr,
    })
}

/// Deterministic `F_n` per sampled interval sequence, averaged over
/// realizations.
pub fn run_per_realization(
    model: &QuantumModel,
    dist: &IntervalDistribution,
    n_real: usize,
    n_cut: usize,
    seed: u64,
    keep_series: bool,
) -> Result<TrajectoryEnsemble> {
    if n_cut < 2 {
        return Err(Error::InvalidArgument("n_cut must be >= 2".into()));
    }
    let prop = Propagator::new(model);
    let sampler = dist.sampler();
    let parts: Vec<(Vec<RealizationRecord>, Vec<f64>, Vec<f64>)> = chunks(n_real)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut s = vec![0.0; n_cut];
            let mut s2 = vec![0.0; n_cut];
            let recs = (lo..hi)
                .map(|i| per_realization_one(&prop, &sampler, n_cut, keep_series, &mut stream(seed, i), &mut s, &mut s2))
                .collect();
            (recs, s, s2)
        })
        .collect();

    let mut fn_sum = vec![0.0; n_cut];
    let mut fn_sq_sum = vec![0.0; n_cut];
    let mut records = Vec::with_capacity(n_real);
    for (recs, s, s2) in parts {
        records.extend(recs);
        for k in 0..n_cut {
            fn_sum[k] += s[k];
            fn_sq_sum[k] += s2[k];
        }
    }
    let nf = n_real.max(1) as f64;
    let fn_mean: Vec<f64> = fn_sum.iter().map(|s| s / nf).collect();
    let fn_stderr = fn_sq_sum
        .iter()
        .zip(&fn_mean)
        .map(|(s2, m)| {
            let var = (s2 / nf - m * m).max(0.0) * nf / (nf - 1.0).max(1.0);
            (var / nf).sqrt()
        })
        .collect();
    Ok(TrajectoryEnsemble {
        mode: Mode::PerRealization,
        n_real,
        seed,
        n_cut,
        n_abort: 0,
        records: Records::PerRealization(records),
        fn_mean,
        fn_stderr,
    })
}

/// Sample mean, unbiased variance and their standard errors.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MomentEstimate {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub mean_stderr: f64,
    pub variance_stderr: f64,
}

impl MomentEstimate {
    pub fn from_samples(xs: impl Iterator<Item = f64> + Clone) -> Self {
        let (count, sum) = xs.clone().fold((0usize, 0.0), |(c, s), x| (c + 1, s + x));
        if count == 0 {
            return Self { count, mean: f64::NAN, variance: f64::NAN, mean_stderr: f64::NAN, variance_stderr: f64::NAN };
        }
        let n = count as f64;
        let mean = sum / n;
        let (m2, m4) = xs.fold((0.0, 0.0), |(a, b), x| {
            let d = x - mean;
            (a + d * d, b + d * d * d * d)
        });
        let variance = if count > 1 { m2 / (n - 1.0) } else { 0.0 };
        let m4 = m4 / n;
        let pop_var = m2 / n;
        Self {
            count,
            mean,
            variance,
            mean_stderr: (variance / n).sqrt(),
            variance_stderr: ((m4 - pop_var * pop_var).max(0.0) / n).sqrt(),
        }
    }
}

/// Fixed-width histogram of finite values; bins start at `origin`.
/// Returns `(bin lower edge, count)` pairs covering the data.
pub fn histogram(values: impl Iterator<Item = f64>, origin: f64, bin_width: f64) -> Result<Vec<(f64, u64)>> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::InvalidArgument(format!("bin width must be > 0, got {bin_width}")));
    }
    let mut counts: Vec<u64> = Vec::new();
    for v in values.filter(|v| v.is_finite() && *v >= origin) {
        let k = ((v - origin) / bin_width) as usize;
        if k >= counts.len() {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (origin + k as f64 * bin_width, c))
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleSummary {
    pub mode: Mode,
    pub n_real: usize,
    pub seed: u64,
    pub n_cut: usize,
    pub n_abort: u64,
    pub censored: usize,
    pub censored_fraction: f64,
    /// Detection attempt (Bernoulli) or per-realization `n̄`.
    pub n: MomentEstimate,
    /// Detection time, Bernoulli mode only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<MomentEstimate>,
    /// Mean per-realization detection probability, per-realization mode only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_det: Option<f64>,
}

impl TrajectoryEnsemble {
    pub fn summary(&self) -> EnsembleSummary {
        let (censored, n, t, p_det) = match &self.records {
            Records::Bernoulli(r) => {
                let detected = r.iter().filter(|x| !x.censored);
                (
                    r.len() - detected.clone().count(),
                    MomentEstimate::from_samples(detected.clone().map(|x| x.n as f64)),
                    Some(MomentEstimate::from_samples(detected.map(|x| x.t))),
                    None,
                )
            }
            Records::PerRealization(r) => {
                let valid = r.iter().filter(|x| x.nbar.is_finite());
                let p = r.iter().map(|x| x.p_det).sum::<f64>() / r.len().max(1) as f64;
                (0, MomentEstimate::from_samples(valid.map(|x| x.nbar)), None, Some(p))
            }
        };
        EnsembleSummary {
            mode: self.mode,
            n_real: self.n_real,
            seed: self.seed,
            n_cut: self.n_cut,
            n_abort: self.n_abort,
            censored,
            censored_fraction: censored as f64 / self.n_real.max(1) as f64,
            n,
            t,
            p_det,
        }
    }
}
