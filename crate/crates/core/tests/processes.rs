//! Statistical checks of the simulators against oracles built here from the
//! coefficient arrays and closed forms.

use bahadur_core::*;

fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let c0: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    let c1: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    c1 / c0
}

#[test]
fn geometric_lag_one_autocorrelation() {
    let schedule = CoefficientSchedule::geometric(0.5).unwrap();
    let path = simulate_path(&schedule, &InnovationModel::gaussian(1.0).unwrap(), 100_000, &TruncationPolicy::default(), 21)
        .unwrap();
    let a: Vec<f64> = (0..200).map(|i| 0.5f64.powi(i)).collect();
    let gamma0: f64 = a.iter().map(|x| x * x).sum();
    let gamma1: f64 = a.windows(2).map(|w| w[0] * w[1]).sum();
    let target = gamma1 / gamma0;
    assert!((target - 0.5).abs() < 1e-12);
    let r = lag1_autocorrelation(&path.values);
    assert!((r - target).abs() < 0.01, "{r}");
}

#[test]
fn ar1_map_lag_one_autocorrelation() {
    let model = IteratedMapModel::new(MapKind::Ar1 { a: 0.6 }, InnovationModel::gaussian(1.0).unwrap(), 256).unwrap();
    let x = simulate_chain(&model, 100_000, 4).unwrap();
    assert!((lag1_autocorrelation(&x) - 0.6).abs() < 0.01);
}

/// `sum_k (sum_{i=1}^n a_{i-k} 1{0 <= i-k <= M})^2` by prefix sums over the coefficient array.
fn truncated_sum_variance(a: &[f64], n: usize) -> f64 {
    let m = a.len() - 1;
    let mut prefix = vec![0.0; a.len() + 1];
    for (t, c) in a.iter().enumerate() {
        prefix[t + 1] = prefix[t] + c;
    }
    // Innovation k (1 - M <= k <= n) hits X_i for i in [max(1, k), min(n, k + M)].
    let mut total = 0.0;
    for k in (1 - m as i64)..=(n as i64) {
        let lo = (1 - k).max(0) as usize;
        let hi = ((n as i64 - k) as usize).min(m);
        let s = prefix[hi + 1] - prefix[lo];
        total += s * s;
    }
    total
}

#[test]
fn lrd_partial_sum_variance_matches_the_finite_sum_formula() {
    let n = 1 << 14;
    let beta = 0.75;
    let schedule = CoefficientSchedule::Lrd { beta, l_const: 1.0, l_log_power: 0.0 };
    let sim = PathSimulator::new(schedule, InnovationModel::gaussian(1.0).unwrap(), n, &TruncationPolicy::default())
        .unwrap();
    let lag = sim.truncation().lag;
    let a: Vec<f64> = (0..=lag).map(|i| if i == 0 { 1.0 } else { (i as f64).powf(-beta) }).collect();
    let exact = truncated_sum_variance(&a, n);
    let replicates = 4000;
    let second_moment = (0..replicates)
        .map(|r| {
            let s: f64 = sim.simulate(derive_seed(99, "partial-sum", r)).values.iter().sum();
            s * s
        })
        .sum::<f64>()
        / replicates as f64;
    let rel = second_moment / exact - 1.0;
    assert!(rel.abs() < 0.05, "relative error {rel}, exact {exact}");
}

#[test]
fn stationary_map_marginal_passes_ks() {
    // One draw per independent chain, so the classical critical value applies.
    let a: f64 = 0.5;
    let model = IteratedMapModel::new(MapKind::Ar1 { a }, InnovationModel::gaussian(1.0).unwrap(), 256).unwrap();
    let draws: Vec<f64> = (0..4000).map(|k| *simulate_chain(&model, 1, derive_seed(5, "ks", k)).unwrap().last().unwrap()).collect();
    let sample = EmpiricalSample::new(draws).unwrap();
    let law = InnovationModel::gaussian(1.0 / (1.0 - a * a).sqrt()).unwrap();
    let d = ks_distance(&sample, |x| law.cdf(x));
    assert!(d * (sample.len() as f64).sqrt() < ks_critical(0.01), "{d}");
}

#[test]
fn linear_marginal_matches_mixture_oracle() {
    let schedule = CoefficientSchedule::PolynomialSrd { r: 3.0 };
    let innov = InnovationModel::Logistic { scale: 1.0 };
    let sim = PathSimulator::new(schedule, innov, 1, &TruncationPolicy::default()).unwrap();
    let oracle = build_marginal_oracle(&schedule, &innov, 200_000, sim.truncation().lag, 8).unwrap();
    let draws: Vec<f64> = (0..4000).map(|k| sim.simulate(derive_seed(6, "ks", k)).values[0]).collect();
    let sample = EmpiricalSample::new(draws).unwrap();
    let d = ks_distance(&sample, |x| oracle.cdf(x));
    assert!(d * (sample.len() as f64).sqrt() < ks_critical(0.01), "{d}");
}

#[test]
fn experiment_outputs_reaggregate_from_disk() {
    let process = ProcessSection { rho: Some(0.3), ..ProcessSection::new(ProcessKind::Geometric) };
    let mut experiment = ExperimentSection::new(vec![128, 256, 512, 1024], 30);
    experiment.id = Some("disk".into());
    experiment.window_exponent = -0.3;
    let config = ExperimentConfig::new(process, InnovationModel::gaussian(1.0).unwrap(), experiment);
    let outcome = run_experiment(ExperimentKind::Oscillation, &config, RunOptions { jobs: Some(2) }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = outcome.write(dir.path()).unwrap();
    assert_eq!(written.len(), 1 + outcome.reports.len());
    let rows = read_rows(&dir.path().join("disk.csv")).unwrap();
    for report in &outcome.reports {
        assert_eq!(&reaggregate(report, &rows).unwrap(), report);
        let r = report.as_rate().unwrap();
        assert!((r.theoretical_exponent.unwrap() + 0.65).abs() < 1e-12);
    }
}
