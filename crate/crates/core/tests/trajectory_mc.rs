use qprobe_core::superop::SolveOptions;
use qprobe_core::trajectory::{histogram, run_bernoulli, run_per_realization, Records};
use qprobe_core::{IntervalDistribution, QuantumModel, SuperoperatorSet};

fn exp06() -> IntervalDistribution {
    IntervalDistribution::exponential(0.6).unwrap()
}

fn exact_series(m: &QuantumModel, d: &IntervalDistribution, n: usize) -> Vec<f64> {
    SuperoperatorSet::build(&m.spectral_reduce(1e-9).unwrap(), d).unwrap().fn_series(n).unwrap()
}

#[test]
fn tls_return_bernoulli_mean_is_two() {
    let m = QuantumModel::two_level(1.0, false).unwrap();
    let s = run_bernoulli(&m, &exp06(), 1_000_000, 11, 1_000_000, 0).unwrap().summary();
    assert_eq!(s.censored, 0);
    assert!((s.n.mean - 2.0).abs() <= 3.0 * s.n.mean_stderr, "{:?}", s.n);
    let t = s.t.unwrap();
    assert!((t.mean - 1.2).abs() <= 3.0 * t.mean_stderr, "{t:?}");
}

#[test]
fn dark_overlap_censors_half() {
    let m = QuantumModel::ring(6, 1.0, 1, 0).unwrap();
    let n = 20_000;
    let s = run_bernoulli(&m, &exp06(), n, 4, 1_000_000, 0).unwrap().summary();
    let sigma = (0.25 / n as f64).sqrt();
    assert!((s.censored_fraction - 0.5).abs() <= 3.0 * sigma, "{}", s.censored_fraction);
    let exact = SuperoperatorSet::build(&m.spectral_reduce(1e-9).unwrap(), &exp06())
        .unwrap()
        .detection_stats(&SolveOptions::default())
        .unwrap();
    assert!((s.n.mean - exact.n_mean).abs() <= 4.0 * s.n.mean_stderr);
}

#[test]
fn bernoulli_times_sum_sampled_intervals() {
    let m = QuantumModel::ring(4, 1.0, 1, 0).unwrap();
    let d = IntervalDistribution::fixed(0.3).unwrap();
    let ens = run_bernoulli(&m, &d, 500, 2, 10_000, 0).unwrap();
    let Records::Bernoulli(r) = &ens.records else { unreachable!() };
    for x in r {
        assert!((x.t - 0.3 * x.n as f64).abs() < 1e-9 * x.n as f64);
    }
}

#[test]
fn modes_agree_bin_by_bin() {
    let cases = [
        (QuantumModel::two_level(1.0, false).unwrap(), exp06()),
        (QuantumModel::ring(5, 1.0, 2, 0).unwrap(), IntervalDistribution::gamma(3.0, 0.7).unwrap()),
        (QuantumModel::ring(6, 1.0, 1, 0).unwrap(), exp06()),
    ];
    for (m, d) in &cases {
        let a = run_bernoulli(m, d, 100_000, 21, 1_000_000, 20).unwrap();
        let b = run_per_realization(m, d, 50_000, 20, 22, false).unwrap();
        for n in 0..20 {
            let se = (a.fn_stderr[n].powi(2) + b.fn_stderr[n].powi(2)).sqrt();
            let diff = (a.fn_mean[n] - b.fn_mean[n]).abs();
            assert!(diff <= 4.0 * se.max(1e-12), "{} n={}: {} vs {}", m.label, n + 1, a.fn_mean[n], b.fn_mean[n]);
        }
    }
}

#[test]
fn per_realization_matches_exact_series() {
    for (m, d) in [
        (QuantumModel::ring(4, 1.0, 1, 0).unwrap(), IntervalDistribution::gamma(3.0, 0.5).unwrap()),
        (QuantumModel::ring(8, 1.0, 3, 0).unwrap(), exp06()),
    ] {
        let exact = exact_series(&m, &d, 30);
        let ens = run_per_realization(&m, &d, 100_000, 30, 8, false).unwrap();
        for n in 0..30 {
            let z = (ens.fn_mean[n] - exact[n]).abs() / ens.fn_stderr[n];
            assert!(z <= 4.0, "{} n={}: z={z}", m.label, n + 1);
        }
    }
}

#[test]
fn bernoulli_histogram_matches_exact_series() {
    let m = QuantumModel::ring(5, 1.0, 1, 0).unwrap();
    let exact = exact_series(&m, &exp06(), 30);
    let ens = run_bernoulli(&m, &exp06(), 100_000, 3, 1_000_000, 30).unwrap();
    for n in 0..30 {
        let z = (ens.fn_mean[n] - exact[n]).abs() / ens.fn_stderr[n].max(1e-12);
        assert!(z <= 4.0, "n={}: z={z}", n + 1);
    }
}

#[test]
fn return_realizations_account_for_their_tail() {
    let m = QuantumModel::ring(6, 1.0, 0, 0).unwrap();
    let ens = run_per_realization(&m, &exp06(), 2000, 200, 6, true).unwrap();
    let Records::PerRealization(r) = &ens.records else { unreachable!() };
    for x in r {
        let series = x.series.as_ref().unwrap();
        assert_eq!(series.len(), 200);
        assert!((series.iter().sum::<f64>() - x.p_det).abs() < 1e-12);
        assert!(x.p_det <= 1.0 + 1e-10 && x.p_det >= 1.0 - x.tail_bound - 1e-10);
    }
}

#[test]
fn tls_nbar_histogram_has_square_root_edge() {
    let m = QuantumModel::two_level(1.0, false).unwrap();
    let ens = run_per_realization(&m, &exp06(), 200_000, 2000, 12, false).unwrap();
    let Records::PerRealization(r) = &ens.records else { unreachable!() };
    let mass = |w: f64| histogram(r.iter().map(|x| x.nbar), 1.0, w).unwrap()[0].1 as f64;
    let ratio = mass(0.04) / mass(0.01);
    assert!((1.7..2.3).contains(&ratio), "ratio {ratio}");
}
