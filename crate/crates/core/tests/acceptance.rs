use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use dynbias::dynmetrics::*;
use dynbias::dynsys::{encode_features, init_state, EncodingConfig, SystemSpec};
use dynbias::exp_autoencoder::*;
use dynbias::exp_classify::*;
use dynbias::exp_rl::*;
use dynbias::pacbayes::*;
use dynbias::{rng, Error};
use rand::Rng;
use serde_json::json;

/// Collects criterion outcomes; each line goes straight to the stderr handle
/// so it is visible even when the test passes.
#[derive(Default)]
struct Sheet {
    failed: Vec<String>,
}

impl Sheet {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        let _ = writeln!(std::io::stderr(), "{tag} {name}: {detail}");
        if !pass {
            self.failed.push(name.to_string());
        }
    }

    fn timed(&mut self, name: &str, pass: bool, detail: String, elapsed: Duration, budget: Duration) {
        let in_time = elapsed <= budget;
        self.record(name, pass && in_time, format!("{detail} [{:.1} s, budget {} s]", elapsed.as_secs_f64(), budget.as_secs()));
    }

    fn finish(self) {
        assert!(self.failed.is_empty(), "failed criteria: {:?}", self.failed);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn lyapunov_oracle() {
    let mut sheet = Sheet::default();
    let t0 = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (delta, positive) in [(-1.5, true), (0.0, true), (2.0, false), (10.0, false)] {
        let x0 = init_state(1.0).unwrap();
        let (r, _) = lyapunov_with_fallback(&SystemSpec::duffing(delta), &x0, &LyapunovConfig::default()).unwrap();
        let want = -2.0 * delta;
        let tol = if delta == 0.0 { 0.1 } else { 0.1 * want.abs() };
        let sum_ok = (r.sum - want).abs() <= tol;
        let sign_ok = (r.exponents[0] > 0.0) == positive;
        ok &= sum_ok && sign_ok;
        parts.push(format!("δ={delta}: Σλ={:.4} (want {want}±{tol:.2}), λmax={:.4}", r.sum, r.exponents[0]));
    }
    sheet.timed("lyapunov oracle", ok, parts.join("; "), t0.elapsed(), secs(30));
    sheet.finish();
}

#[test]
fn ais_dip() {
    let mut sheet = Sheet::default();
    let t0 = Instant::now();
    let enc = EncodingConfig::with_default_substeps(4.0, 30).unwrap();
    let mut r = rng::named(0, "ais-inputs", &[]);
    let inputs: Vec<f64> = (0..100).map(|_| r.gen_range(-1.0..1.0)).collect();
    let ais_at = |delta: f64| {
        let spec = SystemSpec::duffing(delta);
        let trajs: Vec<_> = inputs
            .iter()
            .filter_map(|&x| match encode_features(&[x], &spec, &enc) {
                Ok(t) => Some(t),
                Err(Error::Diverged { .. }) => None,
                Err(e) => panic!("{e}"),
            })
            .collect();
        ais_pooled(&trajs, 16).unwrap().value
    };
    let (exp, tr, dis) = (ais_at(-1.5), ais_at(2.0), ais_at(10.0));
    sheet.timed(
        "AIS dip",
        tr < exp.min(dis),
        format!("AIS(-1.5)={exp:.3}, AIS(2)={tr:.3}, AIS(10)={dis:.3} bits"),
        t0.elapsed(),
        secs(60),
    );
    sheet.finish();
}

#[test]
fn spectral_signature() {
    let mut sheet = Sheet::default();
    let t0 = Instant::now();
    let cfg = SpectralScanConfig::default();
    let rows = spectral_scan(&cfg).unwrap();
    let cell = |delta: f64, t: f64, n: usize, f: fn(&ScanRow) -> f64| {
        mean(&rows.iter().filter(|r| r.delta == delta && r.t == t && r.n == n).map(f).collect::<Vec<_>>())
    };
    let mut bad = Vec::new();
    let mut cells = 0;
    for &t in &cfg.t_max {
        for &n in &cfg.n_steps {
            cells += 1;
            let c_ok = cell(2.0, t, n, |r| r.centroid) < cell(-1.5, t, n, |r| r.centroid);
            let e_ok = cell(2.0, t, n, |r| r.entropy) > cell(10.0, t, n, |r| r.entropy);
            if !c_ok {
                bad.push(format!("centroid at (T={t}, N={n})"));
            }
            if !e_ok {
                bad.push(format!("entropy at (T={t}, N={n})"));
            }
        }
    }
    let detail = if bad.is_empty() { format!("orderings hold in {cells}/{cells} cells") } else { format!("violated: {}", bad.join(", ")) };
    sheet.timed("spectral signature", bad.is_empty(), detail, t0.elapsed(), secs(300));
    sheet.finish();
}

#[test]
fn gradient_integrity() {
    let mut sheet = Sheet::default();
    let t0 = Instant::now();
    let checks = dynbias::selftest::gradient_checks();
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let has_snn = checks.iter().any(|c| c.name.contains("two_layer_snn"));
    sheet.timed(
        "gradient integrity",
        failed.is_empty() && has_snn,
        format!("{} checks, failed {failed:?}", checks.len()),
        t0.elapsed(),
        secs(60),
    );
    sheet.finish();
}

fn digits() -> DataSource {
    DataSource::Csv { path: Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/digits.csv"), split_seed: 0 }
}

#[test]
fn exp1_asymmetry_and_cv() {
    let mut sheet = Sheet::default();
    let t0 = Instant::now();
    let cfg = ClassifyConfig {
        data: digits(),
        archs: vec![Arch::Snn],
        ..ClassifyConfig::default()
    };
    let out = cross_matrix(&cfg).unwrap();
    let elapsed = t0.elapsed();
    let (ood_t, ood_e) = (mean_ood(&out.matrix, Arch::Snn, 2.0), mean_ood(&out.matrix, Arch::Snn, -1.5));
    sheet.timed(
        "exp1 OOD asymmetry",
        ood_t - ood_e >= 20.0,
        format!("OOD(train 2)={ood_t:.1}, OOD(train -1.5)={ood_e:.1}, diff {:.1} (need ≥ 20)", ood_t - ood_e),
        elapsed,
        secs(1800),
    );
    let diag = cell_mean(&out.matrix, Arch::Snn, -1.5, -1.5);
    let cross = cell_mean(&out.matrix, Arch::Snn, -1.5, 10.0);
    sheet.timed(
        "exp1 expansive collapse",
        diag - cross >= 30.0,
        format!("SNN(-1.5) diagonal {diag:.1}, at δ=10 {cross:.1}, drop {:.1} (need ≥ 30)", diag - cross),
        elapsed,
        secs(1800),
    );
    let (r, n) = cv_cell_correlation(&out, Arch::Snn, 1);
    sheet.record("CV anti-correlation", r <= -0.4, format!("layer-1 Pearson r={r:.3} over {n} cells (need ≤ -0.4)"));
    sheet.finish();
}

fn patches() -> PatchDataset {
    extract_patches(&PatchSource::Synthetic, 5000, 0).unwrap()
}

#[test]
fn exp2_emergence() {
    let mut sheet = Sheet::default();
    let t0 = Instant::now();
    let data = patches();
    let kinds = EncoderKind::standard_set();
    let labels: Vec<String> = kinds.iter().map(|k| k.label()).collect();
    let cells = sae_grid(&data, &kinds, &[1.0, 0.0], &[0, 1, 2], &SaeConfig::default());
    let rows: Vec<SaeRow> = cells.into_iter().map(|c| c.row).collect();
    let elapsed = t0.elapsed();
    let transition = "Transition(delta=2)";

    let (st, sb) = (mean_sigma(&rows, transition, 1.0), mean_sigma(&rows, "Baseline", 1.0));
    sheet.timed(
        "exp2 transition σ_RF",
        st >= 2.5 * sb,
        format!("σ_RF Transition {st:.4}, Baseline {sb:.4}, ratio {:.2} (need ≥ 2.5)", st / sb),
        elapsed,
        secs(2700),
    );

    let sp = mean_sparsity(&rows, "Poisson", 1.0);
    let others: Vec<(String, f64)> = labels.iter().filter(|l| *l != "Poisson").map(|l| (l.clone(), mean_sparsity(&rows, l, 1.0))).collect();
    let worst = others.iter().map(|(_, s)| sp / s).fold(f64::NEG_INFINITY, f64::max);
    sheet.timed(
        "exp2 poisson sparsity",
        others.iter().all(|(_, s)| sp <= 0.1 * s),
        format!("Poisson {sp:.6}, largest ratio to another encoder {worst:.3} (need ≤ 0.1)"),
        elapsed,
        secs(2700),
    );

    let s0 = mean_sigma(&rows, transition, 0.0);
    let rival = labels
        .iter()
        .filter(|l| *l != transition)
        .map(|l| (l.as_str(), mean_sigma(&rows, l, 0.0)))
        .fold(("", f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    sheet.timed(
        "exp2 λ=0 ablation",
        s0 >= 2.0 * rival.1,
        format!("σ_RF Transition {s0:.4}, largest other {} {:.4}, ratio {:.2} (need ≥ 2)", rival.0, rival.1, s0 / rival.1),
        elapsed,
        secs(2700),
    );
    sheet.finish();
}

#[test]
fn universality_orderings() {
    let mut sheet = Sheet::default();
    let t0 = Instant::now();
    let data = patches();
    let cfg = SaeConfig::default();
    let seeds = [0, 1, 2];
    let lorenz = universality_run(&data, UniversalSystem::Lorenz, &[0.5, 28.0], 1.0, &seeds, &cfg).unwrap();
    let thomas = universality_run(&data, UniversalSystem::Thomas, &[0.1, 1.0], 1.0, &seeds, &cfg).unwrap();
    let elapsed = t0.elapsed();
    let sigma = |cells: &[SaeCell], c: f64| mean(&cells.iter().filter(|x| x.row.control == c).map(|x| x.row.sigma_rf).collect::<Vec<_>>());
    let (l_lo, l_hi) = (sigma(&lorenz, 0.5), sigma(&lorenz, 28.0));
    let (t_lo, t_hi) = (sigma(&thomas, 0.1), sigma(&thomas, 1.0));
    sheet.timed("universality lorenz", l_lo > l_hi, format!("σ_RF ρ=0.5 {l_lo:.4}, ρ=28 {l_hi:.4}"), elapsed, secs(2700));
    sheet.timed("universality thomas", t_hi > t_lo, format!("σ_RF b=1 {t_hi:.4}, b=0.1 {t_lo:.4}"), elapsed, secs(2700));
    sheet.finish();
}

#[test]
fn exp3_gaps() {
    let mut sheet = Sheet::default();
    let t0 = Instant::now();
    let specs: Vec<AgentSpec> = [
        AgentKind::MlpRaw,
        AgentKind::SnnLeaky { beta: 0.5 },
        AgentKind::SnnLeaky { beta: 0.1 },
        AgentKind::SnnEncoded { delta: 2.0 },
        AgentKind::SnnEncoded { delta: -1.5 },
    ]
    .into_iter()
    .map(AgentSpec::default_for)
    .collect();
    let cfg = RlExperimentConfig { train: RlTrainConfig::fixed_budget(800), eval_episodes: 100 };
    let runs = run_agents(&specs, &[0, 1, 2, 3, 4], &cfg);
    let rows: Vec<RlRunRow> = runs.into_iter().map(|r| r.row).collect();
    let elapsed = t0.elapsed();

    let (g_mlp, n_mlp) = mean_gap(&rows, "MLP_raw", f64::NAN);
    let (g_leaky, n_leaky) = mean_gap(&rows, "SNN_leaky", 0.5);
    sheet.timed(
        "exp3 leaky vs MLP gap",
        n_mlp > 0 && n_leaky > 0 && g_leaky < 0.5 * g_mlp,
        format!("gap SNN_leaky(0.5) {g_leaky:.1} ({n_leaky}/5 converged), MLP_raw {g_mlp:.1} ({n_mlp}/5 converged) (need < 0.5×)"),
        elapsed,
        secs(7200),
    );
    let (g_t, n_t) = mean_gap(&rows, "SNN_encoded", 2.0);
    let (g_e, n_e) = mean_gap(&rows, "SNN_encoded", -1.5);
    sheet.timed(
        "exp3 encoding gap",
        n_t > 0 && n_e > 0 && g_t < g_e,
        format!("gap SNN_encoded(2) {g_t:.1} ({n_t}/5 converged), SNN_encoded(-1.5) {g_e:.1} ({n_e}/5 converged)"),
        elapsed,
        secs(7200),
    );
    let n01 = rows.iter().filter(|r| r.kind == "SNN_leaky" && r.delta_or_beta == 0.1 && r.converged).count();
    sheet.timed("exp3 β=0.1 non-converged", n01 == 0, format!("{n01}/5 seeds converged"), elapsed, secs(7200));
    sheet.finish();
}

#[test]
fn pacbayes_arithmetic_and_orderings() {
    let mut sheet = Sheet::default();
    let b = pac_bound(0.061, 2300.0, 1257, 0.05);
    let hand = [
        (kl_gaussian(&[0.0; 4], &[1.0; 4], 1.0), 0.0),
        (kl_gaussian(&[1.0], &[1.0], 1.0), 0.5),
        (kl_gaussian(&[0.0], &[1.0], 2.0), 0.5 * 2f64.ln() - 0.25),
        (kl_gaussian(&[2.0, -2.0], &[0.5, 0.5], 0.5), 8.0),
    ];
    let kl_ok = hand.iter().all(|(a, b)| (a - b).abs() <= 1e-12);
    sheet.record(
        "PAC-Bayes arithmetic",
        (b - 1.019).abs() <= 0.005 && kl_ok,
        format!("pac_bound(0.061, 2300, 1257, 0.05)={b:.4}; KL hand cases exact: {kl_ok}"),
    );

    let t0 = Instant::now();
    let deltas = [-1.5, 2.0];
    let seeds = [0, 1, 2];
    let pac_cfg = PacConfig { data: digits(), ..PacConfig::default() };
    let grad_cfg = GradStatsConfig { data: digits(), ..GradStatsConfig::default() };
    let pac: Vec<PacRow> = pacbayes_grid(&pac_cfg, &deltas, &seeds).unwrap().into_iter().map(|r| r.row).collect();
    let grads = gradstats_grid(&grad_cfg, &deltas, &seeds).unwrap();
    let elapsed = t0.elapsed();
    let (kl_t, kl_e) = (mean_at(&pac, 2.0, |r| (r.delta, r.kl)), mean_at(&pac, -1.5, |r| (r.delta, r.kl)));
    sheet.timed("PAC-Bayes KL ordering", kl_t < kl_e, format!("KL(2)={kl_t:.4e}, KL(-1.5)={kl_e:.4e}"), elapsed, secs(1800));
    let (cv_t, cv_e) = (mean_at(&grads, 2.0, |r| (r.delta, r.cv_grad)), mean_at(&grads, -1.5, |r| (r.delta, r.cv_grad)));
    sheet.timed("gradient CV ordering", cv_t < cv_e, format!("CV_grad(2)={cv_t:.3}, CV_grad(-1.5)={cv_e:.3}"), elapsed, secs(1800));
    sheet.finish();
}

fn replay_configs() -> Vec<(&'static str, serde_json::Value)> {
    let blobs = json!({"kind": "blobs", "seed": 5, "n": 120, "d": 64, "sigma": 0.35});
    let sae = json!({"hidden": 8, "epochs": 1, "batch": 16});
    let rl = json!({"train": {"protocol": "fixed_budget", "episodes": 6, "eval_every": 3, "eval_episodes": 2}, "eval_episodes": 3});
    vec![
        ("encode", json!({"inputs": [0.5, -0.2, 0.9], "n_steps": 8})),
        ("lyapunov", json!({"deltas": [-1.5, 2.0], "method": {"t_total": 20.0}})),
        ("ais", json!({"deltas": [2.0, 10.0], "n_inputs": 12})),
        ("spectral-scan", json!({"deltas": [2.0, -1.5], "t_max": [4.0], "n_steps": [32], "seeds": [0, 1], "n_features": 4})),
        (
            "classify-matrix",
            json!({"data": blobs, "archs": ["SNN", "MLP_AvgPool"], "deltas_train": [2.0], "deltas_test": [2.0, 0.0],
                   "seeds": [0, 1], "n_steps": 4, "train": {"max_epochs": 2, "patience": 1, "hidden": 8}}),
        ),
        ("sae-train", json!({"n_patches": 24, "encoders": [{"kind": "linear"}, {"kind": "poisson"}], "seeds": [0, 1], "sae": sae})),
        ("rf-scan", json!({"n_patches": 24, "deltas": [2.0, 10.0], "lambdas": [1.0], "seeds": [0], "sae": sae})),
        ("universality", json!({"n_patches": 24, "lorenz_rho": [28.0], "thomas_b": [0.1], "seeds": [0], "sae": sae, "rf_images": false})),
        ("rl-train", json!({"agents": [{"kind": {"kind": "SNN_leaky", "beta": 0.5}, "pathway": "architecture", "hidden": 8, "lr": 1e-3, "grad_clip": 1.0, "snn_beta": 0.95}],
                            "seeds": [0], "experiment": rl})),
        ("beta-sweep", json!({"betas": [0.3], "seeds": [0], "mlp_baseline": true, "experiment": rl})),
        ("pacbayes", json!({"deltas": [-1.5], "seeds": [0], "model": {"data": blobs, "hidden": 8, "epochs": 1}})),
        ("gradstats", json!({"deltas": [-1.5], "seeds": [0], "model": {"data": blobs, "hidden": 8, "epochs": 1}})),
    ]
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn runs_ok(args: &[&str], cwd: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_dynbias")).args(args).current_dir(cwd).output().is_ok_and(|o| o.status.success())
}

fn replays(args_a: &[&str], args_b: &[&str], a: &Path, b: &Path, cwd: &Path) -> bool {
    runs_ok(args_a, cwd) && runs_ok(args_b, cwd) && {
        let (ca, cb) = (csv_bytes(a), csv_bytes(b));
        !ca.is_empty() && ca == cb
    }
}

#[test]
fn determinism() {
    let mut sheet = Sheet::default();
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let mut bad = Vec::new();
    let mut n = 0;
    for (sub, cfg) in replay_configs() {
        let c = d.join(format!("{sub}.json"));
        std::fs::write(&c, serde_json::to_vec(&cfg).unwrap()).unwrap();
        let (a, b) = (d.join(format!("{sub}-a")), d.join(format!("{sub}-b")));
        let (sa, sb) = (a.to_str().unwrap(), b.to_str().unwrap());
        let m = a.join("manifest.json");
        n += 1;
        if !replays(&[sub, "--config", c.to_str().unwrap(), "--out", sa, "--seed", "23"], &[sub, "--config", m.to_str().unwrap(), "--out", sb], &a, &b, d) {
            bad.push(sub.to_string());
            continue;
        }
        if sub == "classify-matrix" {
            n += 1;
            let (x, y) = (d.join("cv-a"), d.join("cv-b"));
            let ok = replays(
                &["cv-analyze", "--input", sa, "--out", x.to_str().unwrap()],
                &["cv-analyze", "--config", x.join("manifest.json").to_str().unwrap(), "--out", y.to_str().unwrap()],
                &x,
                &y,
                d,
            );
            if !ok {
                bad.push("cv-analyze".into());
            }
        }
        if sub == "rl-train" {
            n += 1;
            let (x, y) = (d.join("eval-a"), d.join("eval-b"));
            let ok = replays(
                &["rl-eval", "--agents", a.join("agents").to_str().unwrap(), "--out", x.to_str().unwrap()],
                &["rl-eval", "--config", x.join("manifest.json").to_str().unwrap(), "--out", y.to_str().unwrap()],
                &x,
                &y,
                d,
            );
            if !ok {
                bad.push("rl-eval".into());
            }
        }
    }
    sheet.record("determinism", bad.is_empty(), format!("{} of {n} subcommands replay byte-identically from their manifests; differing {bad:?}", n - bad.len()));
    sheet.finish();
}
