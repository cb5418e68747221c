//! Command-line front end: one subcommand per experiment step, JSON configs
//! with full defaults, CSV outputs with a manifest, and replay from a
//! manifest.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dynmetrics::{ais_pooled, lyapunov_with_fallback, spectral_scan, LyapunovConfig, SpectralScanConfig};
use crate::dynsys::{encode_features, init_state, EncodingConfig, SystemSpec};
use crate::error::Error;
use crate::exp_autoencoder::{
    extract_patches, rf_scan, sae_grid, universality_run, write_rf_images, EncoderKind, PatchSource, SaeCell, SaeConfig, SaeRow,
    UniversalSystem,
};
use crate::exp_classify::{cross_matrix, cv_cell_correlation, cv_model_correlation, Arch, ClassifyConfig, CvRow, MatrixRow};
use crate::exp_rl::{
    evaluate_zero_shot, run_agents, AgentKind, AgentSpec, DifficultyConfig, RlExperimentConfig, RlRun, RlRunRow, RlTrainConfig,
    SavedAgent, BETA_GRID,
};
use crate::io::{read_csv, Manifest, RunDir, MANIFEST_FILE};
use crate::pacbayes::{gradstats_grid, pacbayes_grid, GradStatsConfig, PacConfig};
use crate::rng;
use crate::{selftest, stats};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_MISSING_INPUT: i32 = 4;
pub const EXIT_SELFTEST: i32 = 5;

#[derive(Parser, Debug)]
#[command(name = "dynbias", version, about = "Dissipative encodings, spiking networks and generalization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON config, or a manifest.json from an earlier run to replay it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Global seed; replicate seeds are derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Encode scalar inputs as trajectories.
    Encode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Lyapunov spectrum per damping.
    Lyapunov {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Pooled active information storage per damping.
    Ais {
        #[command(flatten)]
        common: Common,
    },
    /// Welch spectral signature over a (δ, T, N) grid.
    SpectralScan {
        #[command(flatten)]
        common: Common,
    },
    /// Cross-encoding accuracy matrix and firing-rate CV.
    ClassifyMatrix {
        #[command(flatten)]
        common: Common,
    },
    /// CV / accuracy correlation from a classify-matrix output directory.
    CvAnalyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Sparse spiking autoencoder per encoder.
    SaeTrain {
        #[command(flatten)]
        common: Common,
    },
    /// Autoencoder over a (δ, λ) grid.
    RfScan {
        #[command(flatten)]
        common: Common,
    },
    /// Autoencoder with Lorenz and Thomas encoders.
    Universality {
        #[command(flatten)]
        common: Common,
    },
    /// REINFORCE training and zero-shot evaluation.
    RlTrain {
        #[command(flatten)]
        common: Common,
    },
    /// Zero-shot evaluation of saved agents.
    RlEval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        agents: Option<PathBuf>,
    },
    /// Leaky SNN agents over a β grid.
    BetaSweep {
        #[command(flatten)]
        common: Common,
    },
    /// Bayesian SNN, KL and PAC-Bayes bound.
    Pacbayes {
        #[command(flatten)]
        common: Common,
    },
    /// Gradient-norm statistics under plain SGD.
    Gradstats {
        #[command(flatten)]
        common: Common,
    },
    /// Gradient checks and reference oracles.
    Selftest,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Encode { .. } => "encode",
            Command::Lyapunov { .. } => "lyapunov",
            Command::Ais { .. } => "ais",
            Command::SpectralScan { .. } => "spectral-scan",
            Command::ClassifyMatrix { .. } => "classify-matrix",
            Command::CvAnalyze { .. } => "cv-analyze",
            Command::SaeTrain { .. } => "sae-train",
            Command::RfScan { .. } => "rf-scan",
            Command::Universality { .. } => "universality",
            Command::RlTrain { .. } => "rl-train",
            Command::RlEval { .. } => "rl-eval",
            Command::BetaSweep { .. } => "beta-sweep",
            Command::Pacbayes { .. } => "pacbayes",
            Command::Gradstats { .. } => "gradstats",
            Command::Selftest => "selftest",
        }
    }

    fn common(&self) -> Option<&Common> {
        match self {
            Command::Encode { common, .. }
            | Command::Lyapunov { common, .. }
            | Command::Ais { common }
            | Command::SpectralScan { common }
            | Command::ClassifyMatrix { common }
            | Command::CvAnalyze { common, .. }
            | Command::SaeTrain { common }
            | Command::RfScan { common }
            | Command::Universality { common }
            | Command::RlTrain { common }
            | Command::RlEval { common, .. }
            | Command::BetaSweep { common }
            | Command::Pacbayes { common }
            | Command::Gradstats { common } => Some(common),
            Command::Selftest => None,
        }
    }
}

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    MissingInput(PathBuf),
    Runtime(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::MissingInput(_) => EXIT_MISSING_INPUT,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "malformed config: {m}"),
            CliError::MissingInput(p) => write!(f, "missing input file: {}", p.display()),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `argv` and runs the subcommand; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

/// Effective config and seed: defaults, overlaid by a config file or the
/// config of a replayed manifest, with an explicit `--seed` taking priority.
fn load_config<C: DeserializeOwned + Serialize + Default>(sub: &str, common: &Common) -> CliResult<(C, u64)> {
    let mut seed = common.seed;
    let cfg = match &common.config {
        None => C::default(),
        Some(path) => {
            require_file(path)?;
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(e.into()))?;
            let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let body = match value.get("subcommand").and_then(Value::as_str) {
                Some(s) => {
                    if s != sub {
                        return Err(CliError::Config(format!("manifest is for `{s}`, not `{sub}`")));
                    }
                    if seed.is_none() {
                        seed = value.get("seed").and_then(Value::as_u64);
                    }
                    value.get("config").cloned().ok_or_else(|| CliError::Config("manifest has no config".into()))?
                }
                None => value,
            };
            serde_json::from_value(body).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
    };
    Ok((cfg, seed.unwrap_or(0)))
}

fn out_dir(common: &Common, sub: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from("out").join(sub))
}

/// Replicate ids → run seeds derived from the global seed.
struct Seeds {
    run: Vec<u64>,
    id_of: HashMap<u64, u64>,
}

impl Seeds {
    fn new(global: u64, ids: &[u64]) -> Self {
        let run: Vec<u64> = ids.iter().map(|&i| rng::derive(global, &[rng::label("replicate"), i])).collect();
        let id_of = run.iter().cloned().zip(ids.iter().cloned()).collect();
        Seeds { run, id_of }
    }

    fn id(&self, run_seed: u64) -> u64 {
        self.id_of[&run_seed]
    }
}

fn decisions(sub: &str) -> BTreeMap<String, Value> {
    let mut d: BTreeMap<String, Value> = BTreeMap::new();
    let mut put = |k: &str, v: Value| {
        d.insert(k.into(), v);
    };
    put("integrator", json!("fixed-step RK4, substeps = max(20, ceil(dt_frame / 0.032))"));
    put("divergence_limit", json!(crate::dynsys::DIVERGENCE_LIMIT));
    put("init_state", json!("(x, 0.2x, -x)"));
    match sub {
        "lyapunov" => put("lyapunov_fallback", json!("origin when the reference orbit diverges")),
        "ais" => put("ais_estimator", json!("pooled pairs, global equal-width bins, add-one smoothing, bits")),
        "spectral-scan" => put("welch", json!("Hann, 50% overlap, density scaling, segment = largest power of two <= N/2")),
        _ => {}
    }
    if ["classify-matrix", "sae-train", "rf-scan", "universality", "rl-train", "beta-sweep", "pacbayes", "gradstats"].contains(&sub) {
        put("surrogate", json!({"kind": "fast sigmoid", "slope": crate::diffcore::SURROGATE_SLOPE}));
        put("reset", json!("subtract threshold"));
        put("threshold_init", json!(crate::snn::THRESHOLD_INIT));
        put("spiking_bias", json!(false));
    }
    if ["classify-matrix", "rl-train", "beta-sweep", "pacbayes", "gradstats"].contains(&sub) {
        put("hidden_gain", json!(crate::snn::HIDDEN_GAIN));
        put("output_gain", json!(crate::snn::OUTPUT_GAIN));
    }
    if sub == "classify-matrix" || sub == "pacbayes" || sub == "gradstats" {
        put("blob_noise", json!("isotropic, RMS norm sigma"));
    }
    if ["sae-train", "rf-scan", "universality"].contains(&sub) {
        put("dynamic_drive", json!("x + y + z per frame"));
        put("sae_enc_gain", json!(crate::exp_autoencoder::SAE_ENC_GAIN));
        put("sae_dec_gain", json!(crate::exp_autoencoder::SAE_DEC_GAIN));
        put("poisson_rate_dt", json!(crate::exp_autoencoder::POISSON_RATE_DT));
    }
    if ["rl-train", "rl-eval", "beta-sweep"].contains(&sub) {
        put("force_noise", json!("multiplicative gaussian on force magnitude"));
        put("physics", json!("semi-implicit Euler, dt 0.02"));
        put("returns", json!("per-episode standardized, no baseline"));
        put("membrane", json!("persists across env steps, reset per episode"));
    }
    if sub == "pacbayes" {
        put("pac_objective", json!("cross-entropy on sampled weights; KL measured, not penalized"));
        put("kl_scope", json!("weights of both layers, thresholds excluded"));
    }
    d
}

fn start(sub: &str, common: &Common, config: &impl Serialize, seed: u64) -> CliResult<RunDir> {
    let manifest = Manifest::new(sub, serde_json::to_value(config).map_err(Error::from)?, seed, decisions(sub))?;
    Ok(RunDir::create(&out_dir(common, sub), manifest)?)
}

fn finish(run: RunDir) -> CliResult<i32> {
    let dir = run.dir.clone();
    let files: Vec<String> = run.manifest.outputs.keys().cloned().collect();
    run.finish()?;
    for f in files {
        println!("wrote {}", dir.join(f).display());
    }
    println!("wrote {}", dir.join(MANIFEST_FILE).display());
    Ok(EXIT_OK)
}

fn dispatch(cmd: &Command) -> CliResult<i32> {
    if let Some(n) = cmd.common().and_then(|c| c.threads) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let sub = cmd.name();
    match cmd {
        Command::Encode { common, delta } => cmd_encode(sub, common, *delta),
        Command::Lyapunov { common, delta } => cmd_lyapunov(sub, common, *delta),
        Command::Ais { common } => cmd_ais(sub, common),
        Command::SpectralScan { common } => cmd_spectral(sub, common),
        Command::ClassifyMatrix { common } => cmd_classify(sub, common),
        Command::CvAnalyze { common, input } => cmd_cv_analyze(sub, common, input.clone()),
        Command::SaeTrain { common } => cmd_sae(sub, common),
        Command::RfScan { common } => cmd_rf_scan(sub, common),
        Command::Universality { common } => cmd_universality(sub, common),
        Command::RlTrain { common } => cmd_rl_train(sub, common),
        Command::RlEval { common, agents } => cmd_rl_eval(sub, common, agents.clone()),
        Command::BetaSweep { common } => cmd_beta_sweep(sub, common),
        Command::Pacbayes { common } => cmd_pacbayes(sub, common),
        Command::Gradstats { common } => cmd_gradstats(sub, common),
        Command::Selftest => cmd_selftest(),
    }
}

// ---------------------------------------------------------------- dynamics

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeConfig {
    pub system: SystemSpec,
    pub t_total: f64,
    pub n_steps: usize,
    pub inputs: Vec<f64>,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig { system: SystemSpec::duffing(2.0), t_total: 4.0, n_steps: 30, inputs: vec![-1.0, -0.5, 0.0, 0.5, 1.0] }
    }
}

#[derive(Serialize)]
struct EncodeRow {
    feature: usize,
    input: f64,
    frame: usize,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
}

fn cmd_encode(sub: &str, common: &Common, delta: Option<f64>) -> CliResult<i32> {
    let (mut cfg, seed): (EncodeConfig, u64) = load_config(sub, common)?;
    if let Some(d) = delta {
        cfg.system = SystemSpec::duffing(d);
    }
    cfg.system.validate()?;
    let enc = EncodingConfig::with_default_substeps(cfg.t_total, cfg.n_steps)?;
    let tr = encode_features(&cfg.inputs, &cfg.system, &enc)?;
    let mut rows = Vec::new();
    for (f, &input) in cfg.inputs.iter().enumerate() {
        for k in 0..tr.n {
            rows.push(EncodeRow {
                feature: f,
                input,
                frame: k,
                t: k as f64 * enc.dt_frame(),
                x: tr.get(f, k, 0),
                y: tr.get(f, k, 1),
                z: tr.get(f, k, 2),
            });
        }
    }
    let mut run = start(sub, common, &cfg, seed)?;
    run.write_csv("encode.csv", &rows, &["feature", "input", "frame", "t", "x", "y", "z"])?;
    finish(run)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovCmdConfig {
    pub deltas: Vec<f64>,
    /// Scalar input whose initial state starts the reference orbit.
    pub x0_input: f64,
    pub method: LyapunovConfig,
}

impl Default for LyapunovCmdConfig {
    fn default() -> Self {
        LyapunovCmdConfig { deltas: vec![-1.5, 0.0, 2.0, 10.0], x0_input: 1.0, method: LyapunovConfig::default() }
    }
}

#[derive(Serialize)]
struct LyapunovRow {
    delta: f64,
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
    sum: f64,
    converged: bool,
    used_origin: bool,
}

fn cmd_lyapunov(sub: &str, common: &Common, delta: Option<f64>) -> CliResult<i32> {
    let (mut cfg, seed): (LyapunovCmdConfig, u64) = load_config(sub, common)?;
    if let Some(d) = delta {
        cfg.deltas = vec![d];
    }
    let x0 = init_state(cfg.x0_input)?;
    let rows = cfg
        .deltas
        .iter()
        .map(|&d| {
            let (r, used_origin) = lyapunov_with_fallback(&SystemSpec::duffing(d), &x0, &cfg.method)?;
            let [lambda1, lambda2, lambda3] = r.exponents;
            Ok(LyapunovRow { delta: d, lambda1, lambda2, lambda3, sum: r.sum, converged: r.converged, used_origin })
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let mut run = start(sub, common, &cfg, seed)?;
    run.write_csv("lyapunov.csv", &rows, &["delta", "lambda1", "lambda2", "lambda3", "sum", "converged", "used_origin"])?;
    finish(run)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AisConfig {
    pub deltas: Vec<f64>,
    pub n_inputs: usize,
    pub bins: usize,
    pub t_total: f64,
    pub n_steps: usize,
}

impl Default for AisConfig {
    fn default() -> Self {
        AisConfig { deltas: vec![-1.5, 0.0, 2.0, 10.0], n_inputs: 100, bins: 16, t_total: 4.0, n_steps: 30 }
    }
}

#[derive(Serialize)]
struct AisRow {
    delta: f64,
    ais_bits: f64,
    n_inputs: usize,
    n_diverged: usize,
}

fn cmd_ais(sub: &str, common: &Common) -> CliResult<i32> {
    let (cfg, seed): (AisConfig, u64) = load_config(sub, common)?;
    let enc = EncodingConfig::with_default_substeps(cfg.t_total, cfg.n_steps)?;
    let mut r = rng::named(seed, "ais-inputs", &[]);
    let inputs: Vec<f64> = (0..cfg.n_inputs).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut rows = Vec::new();
    for &d in &cfg.deltas {
        let spec = SystemSpec::duffing(d);
        let mut trajs = Vec::new();
        let mut n_diverged = 0;
        for &x in &inputs {
            match encode_features(&[x], &spec, &enc) {
                Ok(t) => trajs.push(t),
                Err(Error::Diverged { .. }) => n_diverged += 1,
                Err(e) => return Err(e.into()),
            }
        }
        let ais_bits = if trajs.is_empty() { f64::NAN } else { ais_pooled(&trajs, cfg.bins)?.value };
        rows.push(AisRow { delta: d, ais_bits, n_inputs: cfg.n_inputs, n_diverged });
    }
    let mut run = start(sub, common, &cfg, seed)?;
    run.write_csv("ais.csv", &rows, &["delta", "ais_bits", "n_inputs", "n_diverged"])?;
    finish(run)
}

fn cmd_spectral(sub: &str, common: &Common) -> CliResult<i32> {
    let (cfg, seed): (SpectralScanConfig, u64) = load_config(sub, common)?;
    let seeds = Seeds::new(seed, &cfg.seeds);
    let rows = spectral_scan(&SpectralScanConfig { seeds: seeds.run.clone(), ..cfg.clone() })?;
    let mut run = start(sub, common, &cfg, seed)?;
    run.write_csv("spectral.csv", &rows, &["delta", "t", "n", "centroid", "entropy", "dominant_freq", "n_diverged"])?;
    finish(run)
}

// ---------------------------------------------------------- classification

#[derive(Serialize)]
struct HistoryRow {
    arch: Arch,
    delta_train: f64,
    seed: u64,
    epoch: usize,
    train_loss: f64,
    val_accuracy: f64,
}

fn cmd_classify(sub: &str, common: &Common) -> CliResult<i32> {
    let (cfg, seed): (ClassifyConfig, u64) = load_config(sub, common)?;
    let seeds = Seeds::new(seed, &cfg.seeds);
    let mut out = cross_matrix(&ClassifyConfig { seeds: seeds.run.clone(), ..cfg.clone() })?;
    out.matrix.iter_mut().for_each(|r| r.seed = seeds.id(r.seed));
    out.cv.iter_mut().for_each(|r| r.seed = seeds.id(r.seed));
    let mut history = Vec::new();
    for (arch, dt, s, h) in &out.histories {
        for e in h {
            history.push(HistoryRow {
                arch: *arch,
                delta_train: *dt,
                seed: seeds.id(*s),
                epoch: e.epoch,
                train_loss: e.train_loss,
                val_accuracy: e.val_accuracy,
            });
        }
    }
    let mut run = start(sub, common, &cfg, seed)?;
    run.write_csv("matrix.csv", &out.matrix, &["arch", "delta_train", "delta_test", "seed", "accuracy", "n_diverged"])?;
    run.write_csv("cv.csv", &out.cv, &["arch", "delta_train", "seed", "layer", "cv", "ood_accuracy"])?;
    run.write_csv("history.csv", &history, &["arch", "delta_train", "seed", "epoch", "train_loss", "val_accuracy"])?;
    finish(run)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvAnalyzeConfig {
    pub input: PathBuf,
    pub layers: Vec<usize>,
}

impl Default for CvAnalyzeConfig {
    fn default() -> Self {
        CvAnalyzeConfig { input: PathBuf::from("out/classify-matrix"), layers: vec![1, 2] }
    }
}

#[derive(Serialize)]
struct CvAnalysisRow {
    arch: Arch,
    layer: usize,
    r_cells: f64,
    n_cells: usize,
    p_cells: f64,
    r_models: f64,
    n_models: usize,
}

fn cmd_cv_analyze(sub: &str, common: &Common, input: Option<PathBuf>) -> CliResult<i32> {
    let (mut cfg, seed): (CvAnalyzeConfig, u64) = load_config(sub, common)?;
    if let Some(i) = input {
        cfg.input = i;
    }
    let (mpath, cpath) = (cfg.input.join("matrix.csv"), cfg.input.join("cv.csv"));
    require_file(&mpath)?;
    require_file(&cpath)?;
    let matrix: Vec<MatrixRow> = read_csv(&mpath)?;
    let cv: Vec<CvRow> = read_csv(&cpath)?;
    let out = crate::exp_classify::ClassifyOutput { matrix, cv, histories: vec![] };
    let mut archs: Vec<Arch> = out.cv.iter().map(|c| c.arch).collect();
    archs.sort();
    archs.dedup();
    let mut rows = Vec::new();
    for arch in archs {
        for &layer in &cfg.layers {
            let (r_cells, n_cells) = cv_cell_correlation(&out, arch, layer);
            if n_cells == 0 {
                continue;
            }
            let (r_models, n_models) = cv_model_correlation(&out, arch, layer);
            let p_cells = if r_cells.is_finite() { stats::pearson_p(r_cells, n_cells) } else { f64::NAN };
            rows.push(CvAnalysisRow { arch, layer, r_cells, n_cells, p_cells, r_models, n_models });
        }
    }
    let mut run = start(sub, common, &cfg, seed)?;
    run.write_csv("cv_analysis.csv", &rows, &["arch", "layer", "r_cells", "n_cells", "p_cells", "r_models", "n_models"])?;
    finish(run)
}

// ------------------------------------------------------------- autoencoder

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaeTrainConfig {
    pub data: PatchSource,
    pub n_patches: usize,
    pub encoders: Vec<EncoderKind>,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub sae: SaeConfig,
    pub rf_images: bool,
}

impl Default for SaeTrainConfig {
    fn default() -> Self {
        SaeTrainConfig {
            data: PatchSource::default(),
            n_patches: 5000,
            encoders: EncoderKind::standard_set(),
            lambdas: vec![1.0],
            seeds: vec![0],
            sae: SaeConfig::default(),
            rf_images: true,
        }
    }
}

fn check_sources(source: &PatchSource) -> CliResult<()> {
    if let PatchSource::CifarBinary { paths } = source {
        for p in paths {
            require_file(p)?;
        }
    }
    Ok(())
}

const SAE_HEADER: [&str; 10] = ["encoder", "system", "control", "lambda", "seed", "sigma_rf", "recon", "sparsity", "total", "status"];

fn sae_rows(cells: &mut [SaeCell], seeds: &Seeds) -> Vec<SaeRow> {
    cells.iter_mut().for_each(|c| c.row.seed = seeds.id(c.row.seed));
    cells.iter().map(|c| c.row.clone()).collect()
}

fn save_rf_images(run: &RunDir, cells: &[SaeCell]) -> CliResult<()> {
    for c in cells {
        if let Some(w) = &c.w_enc {
            let name = format!("{}_lambda{}_seed{}", c.kind.slug(), c.row.lambda, c.row.seed);
            write_rf_images(&run.dir.join("rf_images").join(name), w)?;
        }
    }
    Ok(())
}

fn cmd_sae(sub: &str, common: &Common) -> CliResult<i32> {
    let (cfg, seed): (SaeTrainConfig, u64) = load_config(sub, common)?;
    check_sources(&cfg.data)?;
    let seeds = Seeds::new(seed, &cfg.seeds);
    let data = extract_patches(&cfg.data, cfg.n_patches, rng::derive(seed, &[rng::label("patches")]))?;
    let mut cells = sae_grid(&data, &cfg.encoders, &cfg.lambdas, &seeds.run, &cfg.sae);
    let rows = sae_rows(&mut cells, &seeds);
    let mut run = start(sub, common, &cfg, seed)?;
    run.write_csv("sae.csv", &rows, &SAE_HEADER)?;
    if cfg.rf_images {
        save_rf_images(&run, &cells)?;
    }
    finish(run)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfScanConfig {
    pub data: PatchSource,
    pub n_patches: usize,
    pub deltas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub sae: SaeConfig,
    pub rf_images: bool,
}

impl Default for RfScanConfig {
    fn default() -> Self {
        RfScanConfig {
            data: PatchSource::default(),
            n_patches: 5000,
            deltas: crate::exp_classify::DELTA_GRID.to_vec(),
            lambdas: vec![1.0],
            seeds: vec![0],
            sae: SaeConfig::default(),
            rf_images: false,
        }
    }
}

#[derive(Serialize)]
struct RfScanRow {
    delta: f64,
    lambda: f64,
    seed: u64,
    sigma_rf: f64,
    recon: f64,
    sparsity: f64,
    status: String,
}

fn cmd_rf_scan(sub: &str, common: &Common) -> CliResult<i32> {
    let (cfg, seed): (RfScanConfig, u64) = load_config(sub, common)?;
    check_sources(&cfg.data)?;
    let seeds = Seeds::new(seed, &cfg.seeds);
    let data = extract_patches(&cfg.data, cfg.n_patches, rng::derive(seed, &[rng::label("patches")]))?;
    let mut cells = rf_scan(&data, &cfg.deltas, &cfg.lambdas, &seeds.run, &cfg.sae);
    let rows: Vec<RfScanRow> = sae_rows(&mut cells, &seeds)
        .into_iter()
        .map(|r| RfScanRow {
            delta: r.control,
            lambda: r.lambda,
            seed: r.seed,
            sigma_rf: r.sigma_rf,
            recon: r.recon,
            sparsity: r.sparsity,
            status: r.status,
        })
        .collect();
    let mut run = start(sub, common, &cfg, seed)?;
    run.write_csv("rf_scan.csv", &rows, &["delta", "lambda", "seed", "sigma_rf", "recon", "sparsity", "status"])?;
    if cfg.rf_images {
        save_rf_images(&run, &cells)?;
    }
    finish(run)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniversalityConfig {
    pub data: PatchSource,
    pub n_patches: usize,
    pub lorenz_rho: Vec<f64>,
    pub thomas_b: Vec<f64>,
    pub lambda: f64,
    pub seeds: Vec<u64>,
    pub sae: SaeConfig,
    pub rf_images: bool,
}

impl Default for UniversalityConfig {
    fn default() -> Self {
        UniversalityConfig {
            data: PatchSource::default(),
            n_patches: 5000,
            lorenz_rho: vec![0.5, 28.0],
            thomas_b: vec![0.1, 1.0],
            lambda: 1.0,
            seeds: vec![0],
            sae: SaeConfig::default(),
            rf_images: true,
        }
    }
}

fn cmd_universality(sub: &str, common: &Common) -> CliResult<i32> {
    let (cfg, seed): (UniversalityConfig, u64) = load_config(sub, common)?;
    check_sources(&cfg.data)?;
    let seeds = Seeds::new(seed, &cfg.seeds);
    let data = extract_patches(&cfg.data, cfg.n_patches, rng::derive(seed, &[rng::label("patches")]))?;
    let mut cells = universality_run(&data, UniversalSystem::Lorenz, &cfg.lorenz_rho, cfg.lambda, &seeds.run, &cfg.sae)?;
    cells.extend(universality_run(&data, UniversalSystem::Thomas, &cfg.thomas_b, cfg.lambda, &seeds.run, &cfg.sae)?);
    let rows = sae_rows(&mut cells, &seeds);
    let mut run = start(sub, common, &cfg, seed)?;
    run.write_csv("universality.csv", &rows, &SAE_HEADER)?;
    if cfg.rf_images {
        save_rf_images(&run, &cells)?;
    }
    finish(run)
}

// ---------------------------------------------------------------------- rl

const RL_HEADER: [&str; 13] = [
    "pathway",
    "kind",
    "delta_or_beta",
    "seed",
    "protocol",
    "easy_mean",
    "easy_std",
    "vhard_mean",
    "vhard_std",
    "gap",
    "converged",
    "convergence_episode",
    "status",
];

#[derive(Serialize)]
struct CurveRow {
    run_id: String,
    episode: usize,
    reward: f64,
}

fn run_id(row: &RlRunRow) -> String {
    if row.delta_or_beta.is_nan() {
        format!("{}_seed{}", row.kind, row.seed)
    } else {
        format!("{}_{}_seed{}", row.kind, row.delta_or_beta, row.seed)
    }
}

fn write_rl(run: &mut RunDir, runs: &mut [RlRun], seeds: &Seeds, save_agents: bool) -> CliResult<()> {
    runs.iter_mut().for_each(|r| r.row.seed = seeds.id(r.row.seed));
    let rows: Vec<RlRunRow> = runs.iter().map(|r| r.row.clone()).collect();
    let mut curves = Vec::new();
    for r in runs.iter() {
        let id = run_id(&r.row);
        curves.extend(r.curve.iter().enumerate().map(|(e, &reward)| CurveRow { run_id: id.clone(), episode: e + 1, reward }));
    }
    run.write_csv("rl_runs.csv", &rows, &RL_HEADER)?;
    run.write_csv("learning_curves.csv", &curves, &["run_id", "episode", "reward"])?;
    if save_agents {
        for r in runs.iter() {
            if let Some(s) = &r.saved {
                let bytes = serde_json::to_vec(s).map_err(Error::from)?;
                run.write_bytes(&format!("agents/{}.json", run_id(&r.row)), &bytes)?;
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlTrainCmdConfig {
    pub agents: Vec<AgentSpec>,
    pub seeds: Vec<u64>,
    pub experiment: RlExperimentConfig,
    pub save_agents: bool,
}

impl Default for RlTrainCmdConfig {
    fn default() -> Self {
        RlTrainCmdConfig {
            agents: vec![
                AgentSpec::default_for(AgentKind::MlpRaw),
                AgentSpec::default_for(AgentKind::SnnEncoded { delta: 2.0 }),
                AgentSpec::default_for(AgentKind::SnnEncoded { delta: -1.5 }),
                AgentSpec::default_for(AgentKind::SnnLeaky { beta: 0.5 }),
            ],
            seeds: vec![0],
            experiment: RlExperimentConfig { train: RlTrainConfig::fixed_budget(800), eval_episodes: 100 },
            save_agents: true,
        }
    }
}

fn cmd_rl_train(sub: &str, common: &Common) -> CliResult<i32> {
    let (cfg, seed): (RlTrainCmdConfig, u64) = load_config(sub, common)?;
    let seeds = Seeds::new(seed, &cfg.seeds);
    let mut runs = run_agents(&cfg.agents, &seeds.run, &cfg.experiment);
    let mut run = start(sub, common, &cfg, seed)?;
    write_rl(&mut run, &mut runs, &seeds, cfg.save_agents)?;
    finish(run)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlEvalConfig {
    pub agents: PathBuf,
    pub episodes: usize,
    pub ladder: Vec<DifficultyConfig>,
}

impl Default for RlEvalConfig {
    fn default() -> Self {
        RlEvalConfig { agents: PathBuf::from("out/rl-train/agents"), episodes: 100, ladder: DifficultyConfig::ladder() }
    }
}

#[derive(Serialize)]
struct RlEvalRow {
    run_id: String,
    difficulty: String,
    mean: f64,
    std: f64,
    success_rate: f64,
    converged: bool,
    gap: Option<f64>,
}

fn cmd_rl_eval(sub: &str, common: &Common, agents: Option<PathBuf>) -> CliResult<i32> {
    let (mut cfg, seed): (RlEvalConfig, u64) = load_config(sub, common)?;
    if let Some(a) = agents {
        cfg.agents = a;
    }
    if !cfg.agents.is_dir() {
        return Err(CliError::MissingInput(cfg.agents.clone()));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(&cfg.agents)
        .map_err(Error::from)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut rows = Vec::new();
    for f in files {
        let saved: SavedAgent =
            serde_json::from_slice(&std::fs::read(&f).map_err(Error::from)?).map_err(|e| CliError::Config(format!("{}: {e}", f.display())))?;
        let agent = saved.restore()?;
        let eval_seed = rng::derive(seed, &[rng::label("rl-eval"), saved.job_seed]);
        let report = evaluate_zero_shot(&agent, &cfg.ladder, cfg.episodes, eval_seed)?;
        let id = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for d in &report.per_difficulty {
            rows.push(RlEvalRow {
                run_id: id.clone(),
                difficulty: d.name.clone(),
                mean: d.mean,
                std: d.std,
                success_rate: d.success_rate,
                converged: report.converged,
                gap: report.gap,
            });
        }
    }
    let mut run = start(sub, common, &cfg, seed)?;
    run.write_csv("rl_eval.csv", &rows, &["run_id", "difficulty", "mean", "std", "success_rate", "converged", "gap"])?;
    finish(run)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaSweepConfig {
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Also sweep the recurrent variant.
    pub rleaky: bool,
    /// Include the raw-observation MLP reference.
    pub mlp_baseline: bool,
    pub experiment: RlExperimentConfig,
    pub save_agents: bool,
}

impl Default for BetaSweepConfig {
    fn default() -> Self {
        BetaSweepConfig {
            betas: BETA_GRID.to_vec(),
            seeds: vec![0],
            rleaky: false,
            mlp_baseline: true,
            experiment: RlExperimentConfig { train: RlTrainConfig::fixed_budget(800), eval_episodes: 100 },
            save_agents: false,
        }
    }
}

fn cmd_beta_sweep(sub: &str, common: &Common) -> CliResult<i32> {
    let (cfg, seed): (BetaSweepConfig, u64) = load_config(sub, common)?;
    let seeds = Seeds::new(seed, &cfg.seeds);
    let mut specs: Vec<AgentSpec> = cfg.betas.iter().map(|&b| AgentSpec::default_for(AgentKind::SnnLeaky { beta: b })).collect();
    if cfg.rleaky {
        specs.extend(cfg.betas.iter().map(|&b| AgentSpec::default_for(AgentKind::RLeaky { beta: b })));
    }
    if cfg.mlp_baseline {
        specs.push(AgentSpec::default_for(AgentKind::MlpRaw));
    }
    let mut runs = run_agents(&specs, &seeds.run, &cfg.experiment);
    let mut run = start(sub, common, &cfg, seed)?;
    write_rl(&mut run, &mut runs, &seeds, cfg.save_agents)?;
    finish(run)
}

// ---------------------------------------------------------------- pacbayes

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacbayesCmdConfig {
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub model: PacConfig,
}

impl Default for PacbayesCmdConfig {
    fn default() -> Self {
        PacbayesCmdConfig { deltas: vec![-1.5, 0.0, 2.0, 10.0], seeds: vec![0, 1, 2], model: PacConfig::default() }
    }
}

fn cmd_pacbayes(sub: &str, common: &Common) -> CliResult<i32> {
    let (cfg, seed): (PacbayesCmdConfig, u64) = load_config(sub, common)?;
    let seeds = Seeds::new(seed, &cfg.seeds);
    let mut rows: Vec<_> = pacbayes_grid(&cfg.model, &cfg.deltas, &seeds.run)?.into_iter().map(|r| r.row).collect();
    rows.iter_mut().for_each(|r| r.seed = seeds.id(r.seed));
    let mut run = start(sub, common, &cfg, seed)?;
    run.write_csv("pacbayes.csv", &rows, &["delta", "seed", "kl", "train_err", "test_err", "gap", "bound", "bound_valid"])?;
    finish(run)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradstatsCmdConfig {
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub model: GradStatsConfig,
}

impl Default for GradstatsCmdConfig {
    fn default() -> Self {
        GradstatsCmdConfig { deltas: vec![-1.5, 0.0, 2.0, 10.0], seeds: vec![0, 1, 2], model: GradStatsConfig::default() }
    }
}

fn cmd_gradstats(sub: &str, common: &Common) -> CliResult<i32> {
    let (cfg, seed): (GradstatsCmdConfig, u64) = load_config(sub, common)?;
    let seeds = Seeds::new(seed, &cfg.seeds);
    let mut rows = gradstats_grid(&cfg.model, &cfg.deltas, &seeds.run)?;
    rows.iter_mut().for_each(|r| r.seed = seeds.id(r.seed));
    let mut run = start(sub, common, &cfg, seed)?;
    run.write_csv("gradstats.csv", &rows, &["delta", "seed", "mu_grad", "cv_grad"])?;
    finish(run)
}

fn cmd_selftest() -> CliResult<i32> {
    let checks = selftest::run_all();
    let mut failed = 0;
    for c in &checks {
        println!("{} {:<28} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.passed);
    }
    println!("{}/{} checks passed", checks.len() - failed, checks.len());
    Ok(if failed == 0 { EXIT_OK } else { EXIT_SELFTEST })
}
