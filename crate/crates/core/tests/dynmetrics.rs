use dynbias::dynmetrics::*;
use dynbias::dynsys::{init_state, EncodingConfig, SystemSpec, Trajectory};
use dynbias::rng::named;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn traj_from_series(series: &[f64], dt: f64) -> Trajectory {
    let n = series.len();
    let mut data = Vec::with_capacity(n * 3);
    for &v in series {
        data.extend_from_slice(&[v, v, v]);
    }
    Trajectory { data, d: 1, n, dt_frame: dt, spec_used: SystemSpec::duffing(0.0) }
}

fn sine(n: usize, f: f64, fs: f64) -> Vec<f64> {
    (0..n).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin()).collect()
}

#[test]
fn linear_decay_has_unit_negative_exponents() {
    let jac = |_: &[f64; 3]| [[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
    let step = |s: &[f64; 3], h: f64| {
        let f = (-h).exp();
        [s[0] * f, s[1] * f, s[2] * f]
    };
    let cfg = LyapunovConfig { t_total: 50.0, ..Default::default() };
    let r = lyapunov_generic(jac, step, &[1.0, 1.0, 1.0], &cfg).unwrap();
    for l in r.exponents {
        // second-order tangent propagator: per-step factor 1 − dt + dt²/2
        assert!((l + 1.0).abs() < 1e-4, "{l}");
    }
}

#[test]
fn duffing_transition_regime() {
    let (r, fallback) = lyapunov_with_fallback(&SystemSpec::duffing(2.0), &init_state(1.0).unwrap(), &LyapunovConfig::default()).unwrap();
    assert!(!fallback);
    assert!((r.sum + 4.0).abs() <= 0.4, "{r:?}");
    assert!(r.exponents[0] < 0.0);
    assert!(r.exponents.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn duffing_expansive_regime_uses_origin_fallback() {
    let spec = SystemSpec::duffing(-1.5);
    let x0 = init_state(1.0).unwrap();
    assert!(matches!(lyapunov_spectrum(&spec, &x0, &LyapunovConfig::default()), Err(dynbias::Error::Diverged { .. })));
    let (r, fallback) = lyapunov_with_fallback(&spec, &x0, &LyapunovConfig::default()).unwrap();
    assert!(fallback);
    assert!((r.sum - 3.0).abs() <= 0.45, "{r:?}");
    assert!(r.exponents[0] > 0.0);
}

#[test]
fn thomas_sum_matches_divergence() {
    let b = 0.25;
    let cfg = LyapunovConfig { t_total: 300.0, ..Default::default() };
    let r = lyapunov_spectrum(&SystemSpec::thomas(b), &init_state(1.0).unwrap(), &cfg).unwrap();
    assert!((r.sum + 3.0 * b).abs() <= 0.1 * 3.0 * b, "{r:?}");
}

#[test]
fn ais_of_constant_is_zero() {
    let tr = traj_from_series(&[0.5; 40], 0.1);
    assert_eq!(ais(&tr, 16).unwrap().value, 0.0);
}

#[test]
fn ais_of_independent_noise_is_small() {
    let mut rng = named(11, "ais-noise", &[]);
    let n = 10_001;
    let series: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let mut data = Vec::with_capacity(n * 3);
    for &v in &series {
        data.extend_from_slice(&[v, rng.gen(), rng.gen()]);
    }
    let tr = Trajectory { data, d: 1, n, dt_frame: 1.0, spec_used: SystemSpec::duffing(0.0) };
    let a = ais(&tr, 16).unwrap();
    assert!(a.value < 0.15, "{a:?}");
    assert_eq!(a.n_samples, n - 1);
}

#[test]
fn ais_of_deterministic_ramp_is_high() {
    // X_t fully determines X_{t−1}: MI close to the entropy of the marginal
    let series: Vec<f64> = (0..4000).map(|i| (i % 16) as f64).collect();
    let a = ais(&traj_from_series(&series, 1.0), 16).unwrap();
    assert!(a.value > 3.0 && a.value <= 4.0, "{a:?}");
}

#[test]
fn welch_sine_peak() {
    let fs = 1.0;
    let x = sine(1024, 0.1, fs);
    let seg = welch_segment_len(1024);
    assert_eq!(seg, 512);
    let (f, p) = psd_welch(&x, fs, seg, 0.5).unwrap();
    let imax = p.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
    let df = f[1] - f[0];
    assert!((f[imax] - 0.1).abs() <= df, "{} vs 0.1", f[imax]);
}

#[test]
fn welch_zero_signal() {
    let (_, p) = psd_welch(&[0.0; 256], 2.0, 64, 0.5).unwrap();
    assert!(p.iter().all(|&v| v == 0.0));
}

#[test]
fn welch_white_noise_parseval() {
    let mut total = 0.0;
    for seed in 0..20 {
        let mut rng = named(seed, "white", &[]);
        let x: Vec<f64> = (0..1024).map(|_| rng.sample(StandardNormal)).collect();
        let fs = 4.0;
        let (f, p) = psd_welch(&x, fs, 256, 0.5).unwrap();
        total += p.iter().sum::<f64>() * (f[1] - f[0]);
    }
    let mean = total / 20.0;
    assert!((mean - 1.0).abs() < 0.2, "{mean}");
}

#[test]
fn welch_short_series_falls_back_to_one_segment() {
    let x = [1.0, -1.0, 2.0, 0.5, -0.3];
    let (f, p) = psd_welch(&x, 1.0, 8, 0.5).unwrap();
    assert_eq!(f.len(), 5 / 2 + 1);
    assert_eq!(p.len(), f.len());
}

#[test]
fn signature_of_sine_and_noise() {
    let fs = 1.0;
    let s = spectral_signature(&traj_from_series(&sine(1024, 0.1, fs), 1.0 / fs), DimsPolicy::All).unwrap();
    assert!(s.entropy < 0.2, "{s:?}");
    assert!((s.centroid - 0.1).abs() < 0.01, "{s:?}");
    let mut rng = named(5, "white", &[]);
    let noise: Vec<f64> = (0..1024).map(|_| rng.sample(StandardNormal)).collect();
    let s = spectral_signature(&traj_from_series(&noise, 1.0), DimsPolicy::Only(0)).unwrap();
    assert!(s.entropy > 0.85, "{s:?}");
}

#[test]
fn signature_of_constant_is_zero() {
    let s = spectral_signature(&traj_from_series(&[3.0; 64], 0.5), DimsPolicy::All).unwrap();
    assert_eq!((s.centroid, s.entropy, s.dominant_freq), (0.0, 0.0, 0.0));
}

#[test]
fn single_cell_scan_has_one_row() {
    let cfg = SpectralScanConfig { deltas: vec![2.0], t_max: vec![8.0], n_steps: vec![32], seeds: vec![0], n_features: 4 };
    let rows = spectral_scan(&cfg).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].n_diverged, 0);
    let _ = EncodingConfig::with_default_substeps(8.0, 32).unwrap();
}

proptest! {
    #[test]
    fn ais_is_bounded(values in prop::collection::vec(-5.0..5.0f64, 30..200), bins in 2usize..32) {
        let a = ais(&traj_from_series(&values, 0.1), bins).unwrap();
        prop_assert!(a.value >= 0.0);
        prop_assert!(a.value <= (bins as f64).log2() + 1e-12);
    }

    #[test]
    fn welch_output_length(n in 16usize..600, seg_pow in 3u32..7) {
        let seg = 1usize << seg_pow;
        prop_assume!(seg <= n);
        let x: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64).collect();
        let (f, p) = psd_welch(&x, 1.0, seg, 0.5).unwrap();
        prop_assert_eq!(f.len(), seg / 2 + 1);
        prop_assert_eq!(p.len(), seg / 2 + 1);
    }

    #[test]
    fn entropy_is_scale_invariant(seed in 0u64..1000, c in 0.01..100.0f64) {
        let mut rng = named(seed, "scale", &[]);
        let x: Vec<f64> = (0..128).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = x.iter().map(|v| v * c).collect();
        let a = spectral_signature(&traj_from_series(&x, 0.25), DimsPolicy::All).unwrap();
        let b = spectral_signature(&traj_from_series(&y, 0.25), DimsPolicy::All).unwrap();
        prop_assert!((a.entropy - b.entropy).abs() < 1e-9);
        prop_assert!((a.centroid - b.centroid).abs() < 1e-9);
        prop_assert!(a.entropy >= 0.0 && a.entropy <= 1.0 + 1e-12);
    }
}
