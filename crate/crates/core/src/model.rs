//! Quantum models and their dark-state-free spectral representation.
//!
//! Hamiltonians are dense Hermitian matrices in units with ħ = 1. The ring
//! uses `H = -γ · adjacency` with periodic boundary, so its spectrum is
//! `{-2γ cos(2πk/L)}`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::C64;

const HERMITIAN_TOL: f64 = 1e-12;
const NORM_TOL: f64 = 1e-12;

/// Default absolute energy gap below which eigenvalues are grouped.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-9;
/// Clusters whose projected detection weight is at or below this are dark.
pub const DEFAULT_DARK_TOL: f64 = 1e-12;

/// Hamiltonian plus initial and detection states.
#[derive(Debug, Clone)]
pub struct QuantumModel {
    hamiltonian: DMatrix<C64>,
    psi_in: DVector<C64>,
    psi_d: DVector<C64>,
    pub label: String,
}

impl QuantumModel {
    pub fn new(
        hamiltonian: DMatrix<C64>,
        psi_in: DVector<C64>,
        psi_d: DVector<C64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let n = hamiltonian.nrows();
        if n == 0 || hamiltonian.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "hamiltonian must be square and non-empty, got {}x{}",
                hamiltonian.nrows(),
                hamiltonian.ncols()
            )));
        }
        if psi_in.len() != n || psi_d.len() != n {
            return Err(Error::InvalidModel(format!(
                "state dimensions ({}, {}) do not match hamiltonian dimension {n}",
                psi_in.len(),
                psi_d.len()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let diff = hamiltonian[(i, j)] - hamiltonian[(j, i)].conj();
                if diff.norm() > HERMITIAN_TOL {
                    return Err(Error::InvalidModel(format!(
                        "hamiltonian is not Hermitian at ({i},{j}): deviation {:.3e}",
                        diff.norm()
                    )));
                }
            }
        }
        for (name, v) in [("psi_in", &psi_in), ("psi_d", &psi_d)] {
            let norm = v.norm();
            if (norm - 1.0).abs() > NORM_TOL {
                return Err(Error::InvalidModel(format!(
                    "{name} must have unit norm, got {norm}"
                )));
            }
        }
        Ok(Self {
            hamiltonian,
            psi_in,
            psi_d,
            label: label.into(),
        })
    }

    /// Tight-binding ring of `l` sites with hopping `gamma`, particle
    /// starting at `x_in` and detected at `x_d`.
    pub fn ring(l: usize, gamma: f64, x_in: usize, x_d: usize) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidModel(format!("ring needs L >= 2, got {l}")));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidModel(format!("gamma must be > 0, got {gamma}")));
        }
        if x_in >= l || x_d >= l {
            return Err(Error::InvalidModel(format!(
                "sites must lie in 0..{l}, got x_in={x_in}, x_d={x_d}"
            )));
        }
        let mut h = DMatrix::<C64>::zeros(l, l);
        for k in 0..l {
            // L = 2 picks up both bonds between the two sites.
            h[(k, (k + l - 1) % l)] -= C64::new(gamma, 0.0);
            h[(k, (k + 1) % l)] -= C64::new(gamma, 0.0);
        }
        Self::new(
            h,
            basis_state(l, x_in),
            basis_state(l, x_d),
            format!("ring L={l} gamma={gamma} {x_in}->{x_d}"),
        )
    }

    /// Symmetric two-level system `H = -γ(|0><1| + |1><0|)`, detected in `|0>`.
    ///
    /// Its energies are `±γ`, so it matches `ring(2, γ/2, ..)`.
    pub fn two_level(gamma: f64, arrival: bool) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidModel(format!("gamma must be > 0, got {gamma}")));
        }
        let g = C64::new(-gamma, 0.0);
        let h = DMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), g, g, C64::new(0.0, 0.0)]);
        let x_in = usize::from(arrival);
        Self::new(
            h,
            basis_state(2, x_in),
            basis_state(2, 0),
            format!("tls gamma={gamma} {}", if arrival { "arrival" } else { "return" }),
        )
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn hamiltonian(&self) -> &DMatrix<C64> {
        &self.hamiltonian
    }

    pub fn psi_in(&self) -> &DVector<C64> {
        &self.psi_in
    }

    pub fn psi_d(&self) -> &DVector<C64> {
        &self.psi_d
    }

    /// True when the initial and detection states coincide.
    pub fn is_return(&self) -> bool {
        (&self.psi_in - &self.psi_d).norm() < 1e-14
    }

    /// Full eigendecomposition of the Hamiltonian, energies ascending.
    pub fn spectrum(&self) -> Spectrum {
        Spectrum::of(&self.hamiltonian)
    }

    pub fn spectral_reduce(&self, degeneracy_tol: f64) -> Result<SpectralData> {
        spectral_reduce(self, degeneracy_tol, DEFAULT_DARK_TOL)
    }
}

pub fn basis_state(n: usize, site: usize) -> DVector<C64> {
    let mut v = DVector::zeros(n);
    v[site] = C64::new(1.0, 0.0);
    v
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub energies: Vec<f64>,
    /// Column `i` is the eigenvector for `energies[i]`.
    pub vectors: DMatrix<C64>,
}

impl Spectrum {
    pub fn of(h: &DMatrix<C64>) -> Self {
        let eig = SymmetricEigen::new(h.clone());
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let energies = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(h.nrows(), order.len(), |r, c| {
            eig.eigenvectors[(r, order[c])]
        });
        Self { energies, vectors }
    }

    /// Coordinates `<E_i|v>` of a state in the eigenbasis.
    pub fn coordinates(&self, v: &DVector<C64>) -> DVector<C64> {
        self.vectors.adjoint() * v
    }
}

/// Energy-representation data after removing dark states.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralData {
    /// Strictly increasing bright energies `E_i`.
    pub energies: Vec<f64>,
    /// `p_i = |<E_i|psi_d>|^2`, all positive, summing to one.
    pub p: Vec<f64>,
    /// `q_i = |<E_i|psi_in>|^2`; their sum is the detection probability.
    pub q: Vec<f64>,
    /// `theta_i = <psi_d|E_i><E_i|psi_in>`.
    #[serde(skip)]
    pub theta: Vec<C64>,
    pub reduced_dim: usize,
    pub degeneracy_tol: f64,
    /// Bright states in the original basis, one per kept energy cluster.
    #[serde(skip)]
    pub bright_states: Vec<DVector<C64>>,
}

impl SpectralData {
    /// Assemble directly from energy-representation data (no model).
    ///
    /// Used for synthetic inputs; `p` must be positive.
    pub fn from_parts(energies: Vec<f64>, p: Vec<f64>, q: Vec<f64>, theta: Vec<C64>) -> Result<Self> {
        let n = energies.len();
        if n == 0 || p.len() != n || q.len() != n || theta.len() != n {
            return Err(Error::InvalidModel("spectral data lengths disagree".into()));
        }
        if p.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidModel("all p_i must be positive".into()));
        }
        Ok(Self {
            energies,
            p,
            q,
            theta,
            reduced_dim: n,
            degeneracy_tol: DEFAULT_DEGENERACY_TOL,
            bright_states: Vec::new(),
        })
    }

    pub fn detection_probability(&self) -> f64 {
        self.q.iter().sum()
    }

    /// `<psi_d| e^{-iHt} |psi_in>` restricted to the bright subspace.
    pub fn amplitude(&self, t: f64) -> C64 {
        self.energies
            .iter()
            .zip(&self.theta)
            .map(|(&e, &th)| th * C64::from_polar(1.0, -e * t))
            .sum()
    }
}

/// Group the spectrum into degenerate clusters and keep one bright state
/// (the normalized projection of `psi_d`) per cluster.
pub fn spectral_reduce(model: &QuantumModel, degeneracy_tol: f64, dark_tol: f64) -> Result<SpectralData> {
    reduce_spectrum(model, &model.spectrum(), degeneracy_tol, dark_tol)
}

/// As [`spectral_reduce`], with a caller-supplied eigendecomposition of the
/// model's Hamiltonian (any eigenvector phases).
pub fn reduce_spectrum(
    model: &QuantumModel,
    spectrum: &Spectrum,
    degeneracy_tol: f64,
    dark_tol: f64,
) -> Result<SpectralData> {
    if !(degeneracy_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "degeneracy_tol must be > 0, got {degeneracy_tol}"
        )));
    }
    let n = model.dim();

    let mut clusters: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 1..=n {
        if i == n || spectrum.energies[i] - spectrum.energies[i - 1] > degeneracy_tol {
            clusters.push((start, i));
            start = i;
        }
    }

    let mut data = SpectralData {
        energies: Vec::new(),
        p: Vec::new(),
        q: Vec::new(),
        theta: Vec::new(),
        reduced_dim: 0,
        degeneracy_tol,
        bright_states: Vec::new(),
    };
    for (lo, hi) in clusters {
        let basis = spectrum.vectors.columns(lo, hi - lo);
        let proj = &basis * (basis.adjoint() * model.psi_d());
        let weight = proj.norm_squared();
        if weight <= dark_tol {
            continue;
        }
        let bright = proj.unscale(weight.sqrt());
        let overlap_d = bright.dotc(model.psi_d());
        let overlap_in = bright.dotc(model.psi_in());
        let energy = spectrum.energies[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        data.energies.push(energy);
        data.p.push(overlap_d.norm_sqr());
        data.q.push(overlap_in.norm_sqr());
        data.theta.push(overlap_d.conj() * overlap_in);
        data.bright_states.push(bright);
    }
    if data.energies.is_empty() {
        return Err(Error::DegenerateProblem(
            "detection state is orthogonal to every eigenspace".into(),
        ));
    }
    data.reduced_dim = data.energies.len();

    if model.is_return() {
        // Exact by construction; remove roundoff so return-problem identities hold bitwise.
        for i in 0..data.reduced_dim {
            data.q[i] = data.p[i];
            data.theta[i] = C64::new(data.p[i], 0.0);
        }
    }
    Ok(data)
}
