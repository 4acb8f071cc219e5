use serde::Serialize;
use thiserror::Error;

/// Energy pair whose averaged phase factor `<e^{iΔE τ}>` is close to 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExceptionalPair {
    pub i: usize,
    pub j: usize,
    pub energy_gap: f64,
    pub charfn_modulus: f64,
    /// `|1 - charfn(ΔE)|`.
    pub distance: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate problem: {0}")]
    DegenerateProblem(String),

    #[error(
        "ill-conditioned resolvent (condition estimate {condition:.3e}); \
         {} near-exceptional energy pair(s){}",
        pairs.len(),
        describe_pairs(pairs)
    )]
    IllConditioned {
        condition: f64,
        pairs: Vec<ExceptionalPair>,
    },

    #[error("divergent moment: {0}")]
    Divergent(String),

    #[error("config error: {0}")]
    Config(String),
}

fn describe_pairs(pairs: &[ExceptionalPair]) -> String {
    if pairs.is_empty() {
        return String::new();
    }
    let list: Vec<String> = pairs
        .iter()
        .map(|p| format!("({},{}) dE={:.6}", p.i, p.j, p.energy_gap))
        .collect();
    format!(": {}", list.join(", "))
}

pub type Result<T> = std::result::Result<T, Error>;
