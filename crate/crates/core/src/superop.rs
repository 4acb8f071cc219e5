//! Interval-averaged superoperators and first-detection statistics.
//!
//! Compound indices `(j,k)` over the reduced energy basis are flattened as
//! `j * n + k`, with `(A ⊗ B)_{(jk)(lm)} = A_{jl} B_{km}` and the hat map
//! `Â = A* ⊗ A`. The rank-one product `Θ̂B̂ = d 1ᵀ` turns every trace into
//! `1ᵀ X d`, so only matrix-vector products and linear solves are needed.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, ExceptionalPair, Result};
use crate::intervals::IntervalDistribution;
use crate::linalg::{truncated_pseudo_inverse, LuSolver};
use crate::model::SpectralData;
use crate::C64;

/// Resolvents with a 1-norm condition estimate above this are rejected.
pub const CONDITION_LIMIT: f64 = 1e12;
/// An energy pair is reported as exceptional when its averaged phase factor
/// lies within this distance of 1. The condition of `J` grows like the
/// inverse square of that distance.
pub const EXCEPTIONAL_DISTANCE: f64 = 1e-4;
pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

/// All averaged superoperators for one (spectral data, distribution) pair.
#[derive(Debug, Clone)]
pub struct SuperoperatorSet {
    dim: usize,
    energies: Vec<f64>,
    distribution: IntervalDistribution,
    /// Diagonal of `<D̂>`, entry `(jk)` = `charfn(E_j - E_k)`.
    pub davg: DVector<C64>,
    /// Diagonal of `<τD̂>`.
    pub davg_t: DVector<C64>,
    /// Diagonal of `<τ²D̂>`.
    pub davg_tt: DVector<C64>,
    /// `C = I - Π E`, real.
    pub c: DMatrix<f64>,
    /// Diagonal of `Θ̂`: `d_(jk) = conj(θ_j) θ_k`.
    pub theta_vec: DVector<C64>,
    /// `M = <D̂> Ĉ`.
    pub m: DMatrix<C64>,
    /// `J = I - M`.
    pub j: DMatrix<C64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Fall back to a truncated-SVD pseudo-inverse instead of failing on an
    /// ill-conditioned resolvent.
    pub pseudo_inverse: bool,
    pub condition_limit: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            pseudo_inverse: false,
            condition_limit: CONDITION_LIMIT,
        }
    }
}

/// Conditional moments of the first-detection attempt number and time.
#[derive(Debug, Clone, Serialize)]
pub struct DetectionStatistics {
    pub p_det: f64,
    pub n_mean: f64,
    pub n_sq: f64,
    pub t_mean: f64,
    pub t_sq: f64,
    pub n_var: f64,
    pub t_var: f64,
    pub j_condition: f64,
    pub reduced_dim: usize,
    pub pseudo_inverse: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ZeroModeCensus {
    pub n_zero: usize,
    pub n_nonzero: usize,
    /// Eigenvalue of `M` with the largest modulus.
    #[serde(serialize_with = "serialize_complex")]
    pub slowest_decay: C64,
}

fn serialize_complex<S: serde::Serializer>(z: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&z.re)?;
    t.serialize_element(&z.im)?;
    t.end()
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    /// `|<t> - <τ><n>|`.
    pub time_residual: f64,
    /// `|<t²> - <τ>²<n²> - N_r Var(τ)|`, return problems only.
    pub return_residual: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

enum Resolvent {
    Lu(LuSolver),
    Pinv(DMatrix<C64>),
}

impl Resolvent {
    fn apply(&self, b: &DVector<C64>) -> Result<DVector<C64>> {
        match self {
            Self::Lu(lu) => lu
                .solve(b)
                .ok_or_else(|| Error::DegenerateProblem("resolvent is exactly singular".into())),
            Self::Pinv(p) => Ok(p * b),
        }
    }
}

impl SuperoperatorSet {
    pub fn build(spec: &SpectralData, dist: &IntervalDistribution) -> Result<Self> {
        let n = spec.reduced_dim;
        if n == 0 || spec.p.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidArgument(
                "spectral data must be reduced (all p_i > 0)".into(),
            ));
        }
        let nn = n * n;
        let e = &spec.energies;
        let diag = |power: u32| {
            DVector::from_fn(nn, |idx, _| {
                let (j, k) = (idx / n, idx % n);
                if j == k {
                    // exact: zero energy difference
                    C64::new(dist.weighted_charfn(0.0, power).re, 0.0)
                } else {
                    dist.weighted_charfn(e[j] - e[k], power)
                }
            })
        };
        let davg = diag(0);
        let davg_t = diag(1);
        let davg_tt = diag(2);
        let c = DMatrix::from_fn(n, n, |j, l| f64::from(u8::from(j == l)) - spec.p[j]);
        let theta_vec = DVector::from_fn(nn, |idx, _| spec.theta[idx / n].conj() * spec.theta[idx % n]);
        let m = DMatrix::from_fn(nn, nn, |row, col| {
            let (j, k) = (row / n, row % n);
            let (l, mm) = (col / n, col % n);
            davg[row] * (c[(j, l)] * c[(k, mm)])
        });
        let j = DMatrix::identity(nn, nn) - &m;
        Ok(Self {
            dim: n,
            energies: e.clone(),
            distribution: *dist,
            davg,
            davg_t,
            davg_tt,
            c,
            theta_vec,
            m,
            j,
        })
    }

    /// Reduced Hilbert-space dimension `N_r`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn distribution(&self) -> &IntervalDistribution {
        &self.distribution
    }

    /// Dense `Ĉ = C ⊗ C` (C is real).
    pub fn chat(&self) -> DMatrix<C64> {
        let n = self.dim;
        DMatrix::from_fn(n * n, n * n, |row, col| {
            C64::new(self.c[(row / n, col / n)] * self.c[(row % n, col % n)], 0.0)
        })
    }

    /// `Ĉ x` without forming `Ĉ`: reshaping `x` as `X`, this is `C X Cᵀ`.
    pub fn apply_chat(&self, x: &DVector<C64>) -> DVector<C64> {
        let n = self.dim;
        let xm = DMatrix::from_fn(n, n, |l, m| x[l * n + m]);
        let c = self.c.map(|v| C64::new(v, 0.0));
        let y = &c * xm * c.transpose();
        DVector::from_fn(n * n, |idx, _| y[(idx / n, idx % n)])
    }

    /// `M x`.
    pub fn apply_m(&self, x: &DVector<C64>) -> DVector<C64> {
        self.apply_chat(x).component_mul(&self.davg)
    }

    /// `<D̂> d`, the first column of `<D̂>Θ̂B̂`.
    fn source(&self) -> DVector<C64> {
        self.davg.component_mul(&self.theta_vec)
    }

    /// Complex values `1ᵀ M^{n-1} <D̂> d` for `n = 1..=n_max`.
    pub fn fn_series_complex(&self, n_max: usize) -> Result<Vec<C64>> {
        if n_max == 0 {
            return Err(Error::InvalidArgument("n_max must be >= 1".into()));
        }
        let mut v = self.source();
        let mut out = Vec::with_capacity(n_max);
        for step in 0..n_max {
            if step > 0 {
                v = self.apply_m(&v);
            }
            out.push(v.sum());
        }
        Ok(out)
    }

    /// Averaged detection probabilities `<F_1> .. <F_{n_max}>`.
    ///
    /// Values are raw; tiny negative roundoff is not clamped here.
    pub fn fn_series(&self, n_max: usize) -> Result<Vec<f64>> {
        Ok(self.fn_series_complex(n_max)?.into_iter().map(|z| z.re).collect())
    }

    /// Energy pairs whose averaged phase factor is within
    /// `EXCEPTIONAL_DISTANCE` of 1, closest first.
    pub fn exceptional_pairs(&self) -> Vec<ExceptionalPair> {
        let mut pairs = Vec::new();
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let gap = self.energies[i] - self.energies[j];
                let phase = self.distribution.charfn(gap);
                let distance = (C64::new(1.0, 0.0) - phase).norm();
                if distance < EXCEPTIONAL_DISTANCE {
                    pairs.push(ExceptionalPair {
                        i,
                        j,
                        energy_gap: gap.abs(),
                        charfn_modulus: phase.norm(),
                        distance,
                    });
                }
            }
        }
        pairs.sort_by(|a, b| a.distance.total_cmp(&b.distance));
        pairs
    }

    /// Condition estimate of `J` in the 1-norm.
    pub fn j_condition(&self) -> f64 {
        LuSolver::new(self.j.clone()).condition_estimate()
    }

    fn resolvent(&self, opts: &SolveOptions) -> Result<(Resolvent, f64, bool)> {
        let lu = LuSolver::new(self.j.clone());
        let condition = lu.condition_estimate();
        if condition.is_finite() && condition <= opts.condition_limit {
            return Ok((Resolvent::Lu(lu), condition, false));
        }
        if opts.pseudo_inverse {
            return Ok((Resolvent::Pinv(truncated_pseudo_inverse(&self.j)), condition, true));
        }
        Err(Error::IllConditioned {
            condition,
            pairs: self.exceptional_pairs(),
        })
    }

    /// Detection probability and conditional moments via geometric sums.
    pub fn detection_stats(&self, opts: &SolveOptions) -> Result<DetectionStatistics> {
        let (res, condition, pinv) = self.resolvent(opts)?;
        let d = &self.theta_vec;
        let u = self.source();

        let s_f = res.apply(&u)?;
        let p_det = s_f.sum().re;
        if !(p_det > 1e-14) {
            return Err(Error::DegenerateProblem(format!(
                "initial state is undetectable (P_det = {p_det:.3e})"
            )));
        }
        let s_f2 = res.apply(&s_f)?;
        let n_mean = s_f2.sum().re / p_det;

        // J^{-3}(I+M)<D̂>d = J^{-2}(I+M) s_F
        let w = &s_f + self.apply_m(&s_f);
        let n_sq = res.apply(&res.apply(&w)?)?.sum().re / p_det;

        let c_sf = self.apply_chat(&s_f);
        let s_n = res.apply(&(self.davg_t.component_mul(&c_sf) + self.davg_t.component_mul(d)))?;
        let t_mean = s_n.sum().re / p_det;

        let c_sn = self.apply_chat(&s_n);
        let rhs = self.davg_tt.component_mul(&c_sf)
            + self.davg_t.component_mul(&c_sn) * C64::new(2.0, 0.0)
            + self.davg_tt.component_mul(d);
        let t_sq = res.apply(&rhs)?.sum().re / p_det;

        Ok(DetectionStatistics {
            p_det,
            n_mean,
            n_sq,
            t_mean,
            t_sq,
            n_var: n_sq - n_mean * n_mean,
            t_var: t_sq - t_mean * t_mean,
            j_condition: condition,
            reduced_dim: self.dim,
            pseudo_inverse: pinv,
        })
    }

    /// Eigenvalues of the dense `M` (Schur form).
    pub fn m_eigenvalues(&self) -> Vec<C64> {
        let schur = self.m.clone().schur();
        let t = schur.unpack().1;
        (0..t.nrows()).map(|i| t[(i, i)]).collect()
    }

    /// Eigenvalues of `M` restricted to the range of `Ĉ`.
    ///
    /// `M = <D̂>Ĉ` shares its nonzero spectrum with `Ĉ<D̂>`, whose range is
    /// `V ⊗ V` with `V = {x : Σx = 0}`; the remaining `2N_r - 1` eigenvalues
    /// are exactly zero. Compressing to that `(N_r-1)²` block avoids the
    /// ill-conditioning of the defective zero eigenvalue in the full matrix.
    pub fn compressed_spectrum(&self) -> Vec<C64> {
        let n = self.dim;
        if n == 1 {
            return Vec::new();
        }
        // Orthonormal basis of {x : Σx = 0} (Helmert contrasts).
        let q = DMatrix::from_fn(n, n - 1, |i, k| {
            let k1 = k + 1;
            let norm = ((k1 * (k1 + 1)) as f64).sqrt();
            if i < k1 {
                1.0 / norm
            } else if i == k1 {
                -(k1 as f64) / norm
            } else {
                0.0
            }
        });
        let qc = q.map(|v| C64::new(v, 0.0));
        let qhat = qc.kronecker(&qc);
        let a = qhat.transpose() * self.chat() * DMatrix::from_diagonal(&self.davg) * &qhat;
        let t = a.schur().unpack().1;
        (0..t.nrows()).map(|i| t[(i, i)]).collect()
    }

    /// Count eigenvalues of `M` below `tol` in modulus.
    pub fn zero_mode_census(&self, tol: f64) -> Result<ZeroModeCensus> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be > 0, got {tol}")));
        }
        let eig = self.m_eigenvalues();
        let n_zero = eig.iter().filter(|z| z.norm() < tol).count();
        let slowest_decay = eig
            .iter()
            .copied()
            .fold(C64::new(0.0, 0.0), |acc, z| if z.norm() > acc.norm() { z } else { acc });
        Ok(ZeroModeCensus {
            n_zero,
            n_nonzero: eig.len() - n_zero,
            slowest_decay,
        })
    }

    /// Residuals of the mean-time identity and, for return problems, the
    /// second-moment identity.
    pub fn universal_identity_check(&self, stats: &DetectionStatistics, is_return: bool) -> IdentityReport {
        let dist = &self.distribution;
        let tolerance = 1e-8 * stats.t_sq.abs().max(1.0);
        let time_residual = (stats.t_mean - dist.mean() * stats.n_mean).abs();
        let return_residual = is_return.then(|| {
            (stats.t_sq - dist.mean().powi(2) * stats.n_sq - self.dim as f64 * dist.variance()).abs()
        });
        let passed = time_residual <= tolerance && return_residual.is_none_or(|r| r <= tolerance);
        IdentityReport {
            time_residual,
            return_residual,
            tolerance,
            passed,
        }
    }
}

/// Treat a spectral data set as a return problem when `θ = p` exactly.
pub fn is_return_data(spec: &SpectralData) -> bool {
    spec.q == spec.p && spec.theta.iter().zip(&spec.p).all(|(t, p)| t.re == *p && t.im == 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::QuantumModel;

    fn tls(arrival: bool) -> SpectralData {
        QuantumModel::two_level(1.0, arrival).unwrap().spectral_reduce(1e-9).unwrap()
    }

    fn exp06() -> IntervalDistribution {
        IntervalDistribution::exponential(0.6).unwrap()
    }

    #[test]
    fn tls_chat_matches_closed_matrix() {
        let s = SuperoperatorSet::build(&tls(false), &exp06()).unwrap();
        let sign = [1.0, -1.0, -1.0, 1.0];
        let chat = s.chat();
        for r in 0..4 {
            for c in 0..4 {
                let want = 0.25 * sign[r] * sign[c];
                assert!((chat[(r, c)] - C64::new(want, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn tls_davg_is_cos_sin_average() {
        let d = exp06();
        let s = SuperoperatorSet::build(&tls(false), &d).unwrap();
        // energies ascending: E_0 = -1, E_1 = +1, so (01) carries Δ = -2.
        let cs = d.charfn(2.0);
        assert_eq!(s.davg[0], C64::new(1.0, 0.0));
        assert_eq!(s.davg[3], C64::new(1.0, 0.0));
        assert!((s.davg[1] - cs.conj()).norm() < 1e-15);
        assert!((s.davg[2] - cs).norm() < 1e-15);
    }

    #[test]
    fn fixed_distribution_gives_unimodular_phases() {
        let spec = QuantumModel::ring(5, 1.0, 2, 0).unwrap().spectral_reduce(1e-9).unwrap();
        let s = SuperoperatorSet::build(&spec, &IntervalDistribution::fixed(0.3).unwrap()).unwrap();
        let n = s.dim();
        for j in 0..n {
            for k in 0..n {
                let z = s.davg[j * n + k];
                let want = C64::from_polar(1.0, (spec.energies[j] - spec.energies[k]) * 0.3);
                assert!((z - want).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn tls_series_closed_form() {
        let s = SuperoperatorSet::build(&tls(false), &exp06()).unwrap();
        let c = exp06().charfn(2.0).re;
        let f = s.fn_series(40).unwrap();
        assert!((f[0] - (1.0 + c) / 2.0).abs() < 1e-14);
        for n in 2..=40 {
            let want = ((1.0 + c) / 2.0).powi(n as i32 - 2) * ((1.0 - c) / 2.0).powi(2);
            assert!((f[n - 1] - want).abs() < 1e-14, "n={n}");
        }
    }

    #[test]
    fn fn_series_rejects_zero_length() {
        let s = SuperoperatorSet::build(&tls(false), &exp06()).unwrap();
        assert!(matches!(s.fn_series(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn tls_return_moments() {
        let s = SuperoperatorSet::build(&tls(false), &exp06()).unwrap();
        let st = s.detection_stats(&SolveOptions::default()).unwrap();
        let big_c = 0.5 * (1.0 + 1.0 / (1.0 + 4.0 * 0.36));
        assert!((st.p_det - 1.0).abs() < 1e-12);
        assert!((st.n_mean - 2.0).abs() < 1e-12);
        assert!((st.n_sq - (2.0 + 2.0 / (1.0 - big_c))).abs() < 1e-10);
        assert!((st.n_sq - 8.777_777_777_777_78).abs() < 1e-9, "{}", st.n_sq);
        assert!((st.t_sq - 0.36 * st.n_sq - 0.72).abs() < 1e-10);
        let report = s.universal_identity_check(&st, true);
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn exceptional_fixed_interval_is_rejected() {
        let d = IntervalDistribution::fixed(std::f64::consts::PI).unwrap();
        let s = SuperoperatorSet::build(&tls(false), &d).unwrap();
        match s.detection_stats(&SolveOptions::default()) {
            Err(Error::IllConditioned { condition, pairs }) => {
                assert!(condition > CONDITION_LIMIT);
                assert_eq!(pairs.len(), 1);
                assert!((pairs[0].energy_gap - 2.0).abs() < 1e-12);
            }
            other => panic!("expected ill-conditioning, got {other:?}"),
        }
        let st = s
            .detection_stats(&SolveOptions {
                pseudo_inverse: true,
                ..SolveOptions::default()
            })
            .unwrap();
        assert!(st.pseudo_inverse);
        assert!(st.p_det.is_finite());
    }

    #[test]
    fn only_resonant_pair_is_flagged() {
        let spec = QuantumModel::ring(5, 1.0, 2, 0).unwrap().spectral_reduce(1e-9).unwrap();
        let gap = spec.energies[2] - spec.energies[0];
        let on = IntervalDistribution::fixed(2.0 * std::f64::consts::PI / gap).unwrap();
        let pairs = SuperoperatorSet::build(&spec, &on).unwrap().exceptional_pairs();
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].i, pairs[0].j), (0, 2));
        assert!((pairs[0].charfn_modulus - 1.0).abs() < 1e-15);
        let off = IntervalDistribution::fixed(0.6).unwrap();
        assert!(SuperoperatorSet::build(&spec, &off).unwrap().exceptional_pairs().is_empty());
    }

    #[test]
    fn trivial_space_has_zero_superoperator() {
        let spec = SpectralData::from_parts(vec![0.3], vec![1.0], vec![1.0], vec![C64::new(1.0, 0.0)]).unwrap();
        let d = IntervalDistribution::gamma(3.0, 0.5).unwrap();
        let s = SuperoperatorSet::build(&spec, &d).unwrap();
        assert_eq!(s.m[(0, 0)], C64::new(0.0, 0.0));
        let census = s.zero_mode_census(1e-8).unwrap();
        assert_eq!((census.n_zero, census.n_nonzero), (1, 0));
        let st = s.detection_stats(&SolveOptions::default()).unwrap();
        assert!((st.n_mean - 1.0).abs() < 1e-15);
        assert!((st.t_sq - d.second_moment()).abs() < 1e-15);
    }

    #[test]
    fn tls_nonzero_mode_is_cos_squared_average() {
        let s = SuperoperatorSet::build(&tls(false), &exp06()).unwrap();
        let census = s.zero_mode_census(1e-8).unwrap();
        let big_c = (1.0 + exp06().charfn(2.0).re) / 2.0;
        assert_eq!(census.n_zero, 3);
        assert_eq!(census.n_nonzero, 1);
        assert!((census.slowest_decay - C64::new(big_c, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn compressed_spectrum_matches_dense_nonzero_modes() {
        let spec = QuantumModel::ring(7, 1.0, 1, 0).unwrap().spectral_reduce(1e-9).unwrap();
        let s = SuperoperatorSet::build(&spec, &IntervalDistribution::gamma(5.0, 0.8).unwrap()).unwrap();
        let mut dense: Vec<C64> = s.m_eigenvalues().into_iter().filter(|z| z.norm() > 1e-6).collect();
        let mut comp = s.compressed_spectrum();
        assert_eq!(comp.len(), 9);
        let key = |z: &C64| (z.norm() * 1e6).round() as i64 * 10_000_000 + (z.arg() * 1e6).round() as i64;
        dense.sort_by_key(key);
        comp.sort_by_key(key);
        assert_eq!(dense.len(), comp.len());
        for (a, b) in dense.iter().zip(&comp) {
            assert!((a - b).norm() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn m_hermiticity_pairing() {
        let spec = QuantumModel::ring(6, 1.0, 2, 0).unwrap().spectral_reduce(1e-9).unwrap();
        let s = SuperoperatorSet::build(&spec, &IntervalDistribution::gamma(2.5, 0.4).unwrap()).unwrap();
        let n = s.dim();
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    for m in 0..n {
                        let a = s.m[(j * n + k, l * n + m)];
                        let b = s.m[(k * n + j, m * n + l)];
                        assert!((a - b.conj()).norm() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn structured_chat_matches_dense() {
        let spec = QuantumModel::ring(5, 1.0, 1, 0).unwrap().spectral_reduce(1e-9).unwrap();
        let s = SuperoperatorSet::build(&spec, &exp06()).unwrap();
        let x = DVector::from_fn(s.dim() * s.dim(), |i, _| C64::new(i as f64 * 0.3 - 1.0, (i % 3) as f64));
        assert!((s.apply_chat(&x) - s.chat() * &x).norm() < 1e-12);
        assert!((s.apply_m(&x) - &s.m * &x).norm() < 1e-12);
    }
}
