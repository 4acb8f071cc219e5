//! Flat `key = value` configuration for models and interval distributions.
//!
//! ```text
//! # ring arrival
//! kind = ring
//! L = 24
//! gamma = 1
//! x_in = 12
//! x_d = 0
//! dist = exp
//! mean = 0.6
//! seed = 42
//! ```
//!
//! Dense models give `matrix` as `2N²` reals, row-major with real and
//! imaginary parts interleaved; states are basis sites (`x_in`, `x_d`) or
//! explicit `psi_in` / `psi_d` vectors of `2N` interleaved reals.

use std::collections::BTreeMap;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::intervals::IntervalDistribution;
use crate::model::{basis_state, QuantumModel, DEFAULT_DEGENERACY_TOL};
use crate::C64;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

fn canonical(key: &str) -> String {
    let k = key.trim().to_ascii_lowercase().replace('-', "_");
    match k.as_str() {
        "xin" => "x_in".into(),
        "xd" => "x_d".into(),
        "model" => "kind".into(),
        _ => k,
    }
}

impl FromStr for Config {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k, v.trim());
        }
        Ok(cfg)
    }
}

impl Config {
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(canonical(key), value.into());
    }

    /// Entries of `other` replace ours.
    pub fn merge(&mut self, other: &Config) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(&canonical(key)).map(String::as_str)
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("cannot parse {key} = {v:?}"))),
        }
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parse(key)?
            .ok_or_else(|| Error::Config(format!("missing required key {key}")))
    }

    fn reals(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|_| Error::Config(format!("bad number {s:?} in {key}")))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn degeneracy_tol(&self) -> Result<f64> {
        Ok(self.parse("degeneracy_tol")?.unwrap_or(DEFAULT_DEGENERACY_TOL))
    }

    pub fn seed(&self) -> Result<u64> {
        Ok(self.parse("seed")?.unwrap_or(0))
    }

    pub fn model(&self) -> Result<QuantumModel> {
        let kind = self.get("kind").unwrap_or("ring");
        let gamma = || -> Result<f64> { Ok(self.parse("gamma")?.unwrap_or(1.0)) };
        match kind {
            "ring" => {
                let l: usize = self.require("l")?;
                let x_in = self.parse("x_in")?.unwrap_or(0);
                let x_d = self.parse("x_d")?.unwrap_or(0);
                QuantumModel::ring(l, gamma()?, x_in, x_d)
            }
            "tls" => {
                let arrival = match self.get("problem").unwrap_or("return") {
                    "return" => false,
                    "arrival" => true,
                    other => return Err(Error::Config(format!("unknown problem {other:?}"))),
                };
                QuantumModel::two_level(gamma()?, arrival)
            }
            "dense" => self.dense_model(),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
        .map_err(|e| match e {
            Error::InvalidModel(m) => Error::Config(format!("invalid model: {m}")),
            other => other,
        })
    }

    fn dense_model(&self) -> Result<QuantumModel> {
        let raw = self
            .reals("matrix")?
            .ok_or_else(|| Error::Config("dense model needs matrix".into()))?;
        let n2 = raw.len() / 2;
        let n = (n2 as f64).sqrt().round() as usize;
        if raw.len() % 2 != 0 || n * n != n2 || n == 0 {
            return Err(Error::Config(format!(
                "matrix needs 2N^2 reals, got {}",
                raw.len()
            )));
        }
        let h = DMatrix::from_row_iterator(n, n, raw.chunks(2).map(|p| C64::new(p[0], p[1])));
        let state = |vec_key: &str, site_key: &str| -> Result<DVector<C64>> {
            if let Some(v) = self.reals(vec_key)? {
                if v.len() != 2 * n {
                    return Err(Error::Config(format!("{vec_key} needs {} reals", 2 * n)));
                }
                return Ok(DVector::from_iterator(n, v.chunks(2).map(|p| C64::new(p[0], p[1]))));
            }
            let site: usize = self.parse(site_key)?.unwrap_or(0);
            if site >= n {
                return Err(Error::Config(format!("{site_key} = {site} out of range")));
            }
            Ok(basis_state(n, site))
        };
        QuantumModel::new(h, state("psi_in", "x_in")?, state("psi_d", "x_d")?, format!("dense N={n}"))
    }

    pub fn distribution(&self) -> Result<IntervalDistribution> {
        let dist = self.get("dist").unwrap_or("exp");
        let value = |keys: &[&str]| -> Result<f64> {
            for k in keys {
                if let Some(v) = self.parse(k)? {
                    return Ok(v);
                }
            }
            Err(Error::Config(format!("{dist} distribution needs {}", keys.join(" or "))))
        };
        match dist {
            "fixed" => IntervalDistribution::fixed(value(&["tau", "mean"])?),
            "exp" | "exponential" => IntervalDistribution::exponential(value(&["mean", "tau"])?),
            "gamma" => IntervalDistribution::gamma(value(&["alpha"])?, value(&["mean", "tau"])?),
            other => Err(Error::Config(format!("unknown distribution {other:?}"))),
        }
        .map_err(|e| match e {
            Error::InvalidDistribution(m) => Error::Config(m),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_ring_and_distribution() {
        let cfg: Config = "kind = ring\nL=24  # sites\nxin = 12\nx_d=0\ndist=gamma\nalpha=5\nmean=0.6\nseed=7"
            .parse()
            .unwrap();
        let m = cfg.model().unwrap();
        assert_eq!(m.dim(), 24);
        assert_eq!(cfg.distribution().unwrap(), IntervalDistribution::gamma(5.0, 0.6).unwrap());
        assert_eq!(cfg.seed().unwrap(), 7);
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut cfg: Config = "L=5\nmean=0.6".parse().unwrap();
        let mut flags = Config::default();
        flags.set("mean", "1.5");
        cfg.merge(&flags);
        assert_eq!(cfg.distribution().unwrap().mean(), 1.5);
    }

    #[test]
    fn dense_matrix_interleaved() {
        let cfg: Config = "kind=dense\nmatrix=0 0, -1 0, -1 0, 0 0\nx_in=1\nx_d=0\ndist=fixed\ntau=0.5"
            .parse()
            .unwrap();
        let m = cfg.model().unwrap();
        let tls = QuantumModel::two_level(1.0, true).unwrap();
        assert_eq!(m.hamiltonian(), tls.hamiltonian());
        assert_eq!(m.psi_in(), tls.psi_in());
    }

    #[test]
    fn errors_are_config_errors() {
        for text in ["L=1", "kind=blob", "L=x", "kind=dense\nmatrix=1 0 0", "L=4\ndist=gamma\nmean=1", "garbage"] {
            let r = text.parse::<Config>().and_then(|c| c.model().and_then(|_| c.distribution()));
            assert!(matches!(r, Err(Error::Config(_))), "{text}: {r:?}");
        }
    }
}
