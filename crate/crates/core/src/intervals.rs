//! Waiting-time densities between detection attempts.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Open01};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::C64;

/// IID density of the intervals between successive probes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum IntervalDistribution {
    Fixed { tau: f64 },
    #[serde(rename = "exp")]
    Exponential { mean: f64 },
    /// Shape `alpha`, rate `alpha / mean`.
    Gamma { alpha: f64, mean: f64 },
}

fn positive(name: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::InvalidDistribution(format!("{name} must be > 0, got {x}")))
    }
}

impl IntervalDistribution {
    pub fn fixed(tau: f64) -> Result<Self> {
        Ok(Self::Fixed { tau: positive("tau", tau)? })
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        Ok(Self::Exponential { mean: positive("mean", mean)? })
    }

    pub fn gamma(alpha: f64, mean: f64) -> Result<Self> {
        Ok(Self::Gamma {
            alpha: positive("alpha", alpha)?,
            mean: positive("mean", mean)?,
        })
    }

    /// Same family with a different mean interval.
    pub fn with_mean(&self, mean: f64) -> Result<Self> {
        match *self {
            Self::Fixed { .. } => Self::fixed(mean),
            Self::Exponential { .. } => Self::exponential(mean),
            Self::Gamma { alpha, .. } => Self::gamma(alpha, mean),
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, Self::Fixed { .. })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Fixed { tau } => tau,
            Self::Exponential { mean } | Self::Gamma { mean, .. } => mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Fixed { .. } => 0.0,
            Self::Exponential { mean } => mean * mean,
            Self::Gamma { alpha, mean } => mean * mean / alpha,
        }
    }

    pub fn second_moment(&self) -> f64 {
        let m = self.mean();
        self.variance() + m * m
    }

    /// Shape parameter, with the exponential as `alpha = 1`.
    fn shape(&self) -> Option<(f64, f64)> {
        match *self {
            Self::Fixed { .. } => None,
            Self::Exponential { mean } => Some((1.0, mean)),
            Self::Gamma { alpha, mean } => Some((alpha, mean)),
        }
    }

    /// Characteristic function `<e^{i delta tau}>`.
    pub fn charfn(&self, delta: f64) -> C64 {
        self.weighted_charfn(delta, 0)
    }

    /// `<tau^power e^{i delta tau}>` for `power` in 0..=2.
    ///
    /// For the gamma family this is `mean^p (1+1/α)^{[p=2]} (1 - iΔmean/α)^{-(α+p)}`.
    /// `|arg(1 - ix)| < π/2`, so the principal branch is continuous in Δ.
    pub fn weighted_charfn(&self, delta: f64, power: u32) -> C64 {
        assert!(power <= 2, "weighted_charfn supports powers 0, 1, 2");
        match self.shape() {
            None => {
                let tau = self.mean();
                C64::from_polar(tau.powi(power as i32), delta * tau)
            }
            Some((alpha, mean)) => {
                let x = delta * mean / alpha;
                // ln(1 - ix), accurate for small x
                let log_base = C64::new(0.5 * (x * x).ln_1p(), -x.atan());
                let exponent = alpha + f64::from(power);
                let prefactor = match power {
                    0 => 1.0,
                    1 => mean,
                    _ => mean * mean * (1.0 + 1.0 / alpha),
                };
                (-exponent * log_base).exp() * prefactor
            }
        }
    }

    /// Draw one interval, strictly positive.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Fixed { tau } => tau,
            Self::Exponential { mean } => {
                let u: f64 = Open01.sample(rng);
                -mean * u.ln()
            }
            Self::Gamma { alpha, mean } => {
                // Parameters were validated on construction.
                let g = Gamma::new(alpha, mean / alpha).expect("valid gamma parameters");
                loop {
                    let t = g.sample(rng);
                    if t > 0.0 {
                        return t;
                    }
                }
            }
        }
    }

    /// A reusable sampler; avoids re-validating gamma parameters per draw.
    pub fn sampler(&self) -> IntervalSampler {
        IntervalSampler {
            dist: *self,
            gamma: match *self {
                Self::Gamma { alpha, mean } => Gamma::new(alpha, mean / alpha).ok(),
                _ => None,
            },
        }
    }
}

impl fmt::Display for IntervalDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed { tau } => write!(f, "fixed(tau={tau})"),
            Self::Exponential { mean } => write!(f, "exp(mean={mean})"),
            Self::Gamma { alpha, mean } => write!(f, "gamma(alpha={alpha}, mean={mean})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IntervalSampler {
    dist: IntervalDistribution,
    gamma: Option<Gamma<f64>>,
}

impl IntervalSampler {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match (&self.dist, &self.gamma) {
            (IntervalDistribution::Gamma { .. }, Some(g)) => loop {
                let t = g.sample(rng);
                if t > 0.0 {
                    return t;
                }
            },
            (d, _) => d.sample(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Adaptive Simpson quadrature of `<tau^p e^{i delta tau}>` against the
    /// density; independent of the closed forms above.
    fn quad(dist: &IntervalDistribution, delta: f64, power: i32) -> C64 {
        let density = |t: f64| -> f64 {
            match *dist {
                IntervalDistribution::Exponential { mean } => (-t / mean).exp() / mean,
                IntervalDistribution::Gamma { alpha, mean } => {
                    let beta = alpha / mean;
                    let ln = alpha * beta.ln() + (alpha - 1.0) * t.ln() - beta * t - ln_gamma(alpha);
                    if t == 0.0 { 0.0 } else { ln.exp() }
                }
                IntervalDistribution::Fixed { .. } => unreachable!(),
            }
        };
        let f = |t: f64| C64::from_polar(density(t) * t.powi(power), delta * t);
        let upper = 80.0 * dist.mean() * (1.0 + 1.0 / dist.shape().unwrap().0);
        let pieces = 400;
        let h = upper / pieces as f64;
        (0..pieces)
            .map(|k| {
                let a = k as f64 * h;
                let b = a + h;
                simpson(&f, a, b, f(a), f(0.5 * (a + b)), f(b), 1e-14, 30)
            })
            .sum()
    }

    #[allow(clippy::too_many_arguments)]
    fn simpson(f: &dyn Fn(f64) -> C64, a: f64, b: f64, fa: C64, fm: C64, fb: C64, tol: f64, depth: u32) -> C64 {
        let m = 0.5 * (a + b);
        let whole = (fa + fm * 4.0 + fb) * ((b - a) / 6.0);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (fa + flm * 4.0 + fm) * ((m - a) / 6.0);
        let right = (fm + frm * 4.0 + fb) * ((b - m) / 6.0);
        if depth == 0 || (left + right - whole).norm() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            simpson(f, a, m, fa, flm, fm, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, tol / 2.0, depth - 1)
        }
    }

    // Lanczos approximation, only used by the quadrature oracle.
    fn ln_gamma(x: f64) -> f64 {
        const G: [f64; 9] = [
            0.999_999_999_999_809_9,
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_1,
            -176.615_029_162_140_6,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_572e-6,
            1.505_632_735_149_311_6e-7,
        ];
        let x = x - 1.0;
        let mut a = G[0];
        let t = x + 7.5;
        for (i, g) in G.iter().enumerate().skip(1) {
            a += g / (x + i as f64);
        }
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }

    #[test]
    fn exponential_charfn_value() {
        let d = IntervalDistribution::exponential(0.6).unwrap();
        let z = d.charfn(2.0);
        assert!((z - C64::new(1.0, 0.0) / C64::new(1.0, -1.2)).norm() < 1e-15);
        assert!((z.re - 0.409_836_065_573_770_5).abs() < 1e-12);
        assert!((z.im - 0.491_803_278_688_524_6).abs() < 1e-12);
        assert!((z - quad(&d, 2.0, 0)).norm() < 1e-10);
    }

    #[test]
    fn charfn_at_zero_is_one() {
        for d in [
            IntervalDistribution::fixed(0.3).unwrap(),
            IntervalDistribution::exponential(0.6).unwrap(),
            IntervalDistribution::gamma(0.4, 2.0).unwrap(),
            IntervalDistribution::gamma(125.0, 1.7).unwrap(),
        ] {
            assert_eq!(d.charfn(0.0), C64::new(1.0, 0.0));
            assert!((d.weighted_charfn(0.0, 1).re - d.mean()).abs() < 1e-12);
            assert!((d.weighted_charfn(0.0, 2).re - d.second_moment()).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_closed_form_matches_quadrature() {
        let d = IntervalDistribution::gamma(3.0, 0.8).unwrap();
        for delta in [-2.5, 0.7, 4.0] {
            for p in 0..=2 {
                let q = quad(&d, delta, p as i32);
                assert!((d.weighted_charfn(delta, p) - q).norm() < 1e-10, "delta={delta} p={p}");
            }
            let x = C64::new(1.0, -delta * 0.8 / 3.0);
            let expected = x.powf(-3.0);
            assert!((d.charfn(delta) - expected).norm() < 1e-13);
            let e2 = x.powf(-5.0) * 0.64 * (1.0 + 1.0 / 3.0);
            assert!((d.weighted_charfn(delta, 2) - e2).norm() < 1e-13);
        }
    }

    #[test]
    fn exponential_first_weighted_moment() {
        let mu = 0.6;
        let d = IntervalDistribution::exponential(mu).unwrap();
        for delta in [0.3, 2.0, -5.0] {
            let expected = C64::new(mu, 0.0) / (C64::new(1.0, -delta * mu)).powi(2);
            assert!((d.weighted_charfn(delta, 1) - expected).norm() < 1e-14);
            assert!((d.weighted_charfn(delta, 1) - quad(&d, delta, 1)).norm() < 1e-10);
        }
    }

    #[test]
    fn fixed_weighted_moment() {
        let d = IntervalDistribution::fixed(0.7).unwrap();
        let z = d.weighted_charfn(1.3, 2);
        assert!((z - C64::from_polar(0.49, 0.91)).norm() < 1e-15);
    }

    #[test]
    fn exponential_is_gamma_with_unit_shape() {
        let e = IntervalDistribution::exponential(0.9).unwrap();
        let g = IntervalDistribution::gamma(1.0, 0.9).unwrap();
        assert!((e.variance() - g.variance()).abs() < 1e-12);
        for delta in [-3.0, 0.1, 2.2] {
            for p in 0..=2 {
                assert!((e.weighted_charfn(delta, p) - g.weighted_charfn(delta, p)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn large_shape_approaches_stroboscopic_phase() {
        let (delta, mu) = (2.0, 0.6);
        let target = C64::from_polar(1.0, delta * mu);
        let alphas = [5.0, 25.0, 125.0];
        let errs: Vec<f64> = alphas
            .iter()
            .map(|&a| (IntervalDistribution::gamma(a, mu).unwrap().charfn(delta) - target).norm())
            .collect();
        let slope = -((errs[2] / errs[0]).ln() / (alphas[2] / alphas[0]).ln());
        assert!(slope >= 0.9, "slope {slope} errs {errs:?}");
    }

    #[test]
    fn rejects_non_positive_parameters() {
        assert!(IntervalDistribution::fixed(0.0).is_err());
        assert!(IntervalDistribution::exponential(-1.0).is_err());
        assert!(IntervalDistribution::gamma(0.0, 1.0).is_err());
        assert!(IntervalDistribution::gamma(1.0, f64::NAN).is_err());
    }

    #[test]
    fn samplers_match_moments() {
        let n = 1_000_000;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let fixed = IntervalDistribution::fixed(0.6).unwrap();
        assert!((0..100).all(|_| fixed.sample(&mut rng) == 0.6));

        let exp = IntervalDistribution::exponential(0.6).unwrap().sampler();
        let xs: Vec<f64> = (0..n).map(|_| exp.sample(&mut rng)).collect();
        assert!(xs.iter().all(|&x| x > 0.0));
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.6).abs() < 5.0 * 0.6 / 1000.0, "mean {mean}");

        let gamma = IntervalDistribution::gamma(25.0, 0.6).unwrap().sampler();
        let xs: Vec<f64> = (0..n).map(|_| gamma.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n as f64;
        let se = ((m4 - var * var) / n as f64).sqrt();
        assert!((var - 0.0144).abs() < 5.0 * se, "var {var} se {se}");
    }

    proptest::proptest! {
        #[test]
        fn conjugate_symmetry(delta in -50.0f64..50.0, alpha in 0.2f64..200.0, mean in 0.01f64..5.0) {
            for d in [
                IntervalDistribution::gamma(alpha, mean).unwrap(),
                IntervalDistribution::exponential(mean).unwrap(),
                IntervalDistribution::fixed(mean).unwrap(),
            ] {
                let a = d.charfn(delta).conj();
                let b = d.charfn(-delta);
                proptest::prop_assert!((a - b).norm() < 1e-13);
                let m = d.charfn(delta).norm();
                proptest::prop_assert!(m <= 1.0 + 1e-15);
                if d.is_continuous() && delta.abs() * mean > 1e-3 {
                    proptest::prop_assert!(m < 1.0);
                }
            }
        }
    }
}
