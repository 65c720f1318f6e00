//! `sgb`: train and serve two-party secure gradient boosted trees.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O or data error,
//! 4 protocol failure.

mod config;
mod jobs;
mod net;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sgb_core::binning::Dataset;
use sgb_core::sumgrad::Backend;
use sgb_core::synth::{generate, SynthSpec};
use sgb_core::train::Objective;
use sgb_core::transport::Role;

use config::{Mode, RunConfig};
use jobs::{load_data, load_model, predict_job, run_job, train_job, write_scores, PartyInput, Report};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Io(_) => 3,
            Self::Protocol(_) => 4,
        }
    }
}

/// A core error's message without its category prefix.
pub fn detail(e: &sgb_core::Error) -> String {
    use sgb_core::Error as E;
    match e {
        E::Config(m) | E::Data(m) | E::Protocol(m) => m.clone(),
        E::Io(e) => e.to_string(),
        e => e.to_string(),
    }
}

impl From<sgb_core::Error> for CliError {
    fn from(e: sgb_core::Error) -> Self {
        use sgb_core::Error as E;
        let msg = detail(&e);
        match e {
            E::Config(_) => Self::Config(msg),
            E::Data(_) | E::Io(_) => Self::Io(msg),
            E::Protocol(_) | E::Ring(_) | E::Transport(_) | E::Decode(_) => Self::Protocol(msg),
        }
    }
}

#[derive(Parser)]
#[command(name = "sgb", version, about = "Two-party secure gradient boosted trees with a dealer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes one model half per party and a report.
    Train(TrainArgs),
    /// Score rows with a trained model; the recipient writes the scores.
    Predict(PredictArgs),
    /// Sweep one parameter on synthetic data and report costs per variant.
    Bench(BenchArgs),
    /// Run the dealer for one tcp session.
    Dealer(DealerArgs),
    /// Run one party of a tcp session (same as `--mode tcp`).
    #[command(subcommand)]
    Party(PartyJob),
    /// Write a seeded synthetic dataset split between the two parties.
    Synth(SynthArgs),
}

#[derive(Subcommand)]
enum PartyJob {
    Train(TrainArgs),
    Predict(PredictArgs),
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Local role in tcp mode: a or b.
    #[arg(long)]
    role: Option<String>,
    /// tcp: address party A listens on and party B connects to.
    #[arg(long)]
    peer: Option<String>,
    /// tcp: dealer address.
    #[arg(long)]
    dealer: Option<String>,
    /// Makes every random choice deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated bandwidth, e.g. 100Mbps.
    #[arg(long)]
    bandwidth: Option<String>,
    /// Simulated one-way latency, e.g. 5ms.
    #[arg(long)]
    latency: Option<String>,
    /// Seconds to wait for the network.
    #[arg(long)]
    timeout: Option<f64>,
    /// Report JSON path (stdout if absent).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Label column in party A's files.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args, Clone, Default)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    data_a: Option<PathBuf>,
    #[arg(long)]
    data_b: Option<PathBuf>,
    /// tcp: the local party's data.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    eval_a: Option<PathBuf>,
    #[arg(long)]
    eval_b: Option<PathBuf>,
    #[arg(long)]
    eval: Option<PathBuf>,
    #[arg(long)]
    model_a: Option<PathBuf>,
    #[arg(long)]
    model_b: Option<PathBuf>,
    /// tcp: where the local model half goes.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Eval scores CSV, written by party A.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    buckets: Option<usize>,
    /// squared_error or logistic.
    #[arg(long)]
    objective: Option<Objective>,
    /// ss, crp or hep.
    #[arg(long)]
    variant: Option<Backend>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Paillier modulus size for the hep variant.
    #[arg(long)]
    he_bits: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct PredictArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    data_a: Option<PathBuf>,
    #[arg(long)]
    data_b: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    model_a: Option<PathBuf>,
    #[arg(long)]
    model_b: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Scores CSV written by the recipient.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Party that learns the scores.
    #[arg(long, default_value = "a")]
    recipient: String,
}

#[derive(Args, Clone)]
struct DealerArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Address to accept both parties on (defaults to network.dealer).
    #[arg(long)]
    listen: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Sweep {
    M,
    N,
    K,
    Bandwidth,
    Latency,
}

#[derive(Args, Clone)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Parameter to vary.
    #[arg(long, value_enum)]
    vary: Sweep,
    /// Comma-separated values of the varied parameter.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "ss,crp")]
    variants: Vec<Backend>,
    /// Rows (M) when not varied.
    #[arg(long, default_value_t = 1000)]
    rows: usize,
    /// Total features (N), split evenly, when not varied.
    #[arg(long, default_value_t = 10)]
    features: usize,
    /// Buckets (K) when not varied.
    #[arg(long, default_value_t = 16)]
    buckets: usize,
    #[arg(long, default_value_t = 1)]
    trees: usize,
    #[arg(long, default_value_t = 3)]
    max_depth: usize,
    #[arg(long, default_value = "squared_error")]
    objective: Objective,
    /// Paillier modulus size for hep points.
    #[arg(long)]
    he_bits: Option<usize>,
    /// Write the sweep as JSON here (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    rows: usize,
    #[arg(long, default_value_t = 3)]
    features_a: usize,
    #[arg(long, default_value_t = 3)]
    features_b: usize,
    #[arg(long, default_value = "logistic")]
    objective: Objective,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "label")]
    label: String,
    /// Party A's file (features plus label).
    #[arg(long)]
    out_a: PathBuf,
    /// Party B's file (features only).
    #[arg(long)]
    out_b: PathBuf,
}

fn base_config(c: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = c.mode {
        cfg.mode = m;
    }
    macro_rules! over {
        ($($src:expr => $dst:expr),* $(,)?) => {$(
            if let Some(v) = $src.clone() {
                $dst = Some(v);
            }
        )*};
    }
    over!(
        c.role => cfg.role,
        c.peer => cfg.network.peer,
        c.dealer => cfg.network.dealer,
        c.seed => cfg.seed,
        c.bandwidth => cfg.network.bandwidth,
        c.latency => cfg.network.latency,
        c.timeout => cfg.network.timeout,
        c.report => cfg.report,
    );
    if let Some(l) = &c.label {
        cfg.label = l.clone();
    }
    Ok(cfg)
}

/// Paths for A, B and "the local party" (tcp only).
fn apply_paths(
    cfg: &RunConfig,
    set: &mut config::PerParty,
    a: &Option<PathBuf>,
    b: &Option<PathBuf>,
    own: &Option<PathBuf>,
) -> Result<(), CliError> {
    if let Some(p) = a {
        set.a = Some(p.clone());
    }
    if let Some(p) = b {
        set.b = Some(p.clone());
    }
    if let Some(p) = own {
        if cfg.mode != Mode::Tcp {
            return Err(CliError::Config("--data/--model/--eval name the local party's file; use them in tcp mode".into()));
        }
        set.set(cfg.role()?, p.clone());
    }
    Ok(())
}

fn train_config(args: &TrainArgs, force_tcp: bool) -> Result<RunConfig, CliError> {
    let mut cfg = base_config(&args.common)?;
    if force_tcp {
        cfg.mode = Mode::Tcp;
    }
    let t = &mut cfg.train;
    macro_rules! set {
        ($($f:ident),*) => {$(
            if let Some(v) = args.$f.clone() {
                t.$f = v;
            }
        )*};
    }
    set!(trees, max_depth, lambda, gamma, buckets, objective, variant, learning_rate, he_bits);
    let mut data = cfg.data.clone();
    apply_paths(&cfg, &mut data, &args.data_a, &args.data_b, &args.data)?;
    let mut eval = cfg.eval.clone();
    apply_paths(&cfg, &mut eval, &args.eval_a, &args.eval_b, &args.eval)?;
    let mut model = cfg.model.clone();
    apply_paths(&cfg, &mut model, &args.model_a, &args.model_b, &args.model)?;
    cfg.data = data;
    cfg.eval = eval;
    cfg.model = model;
    if let Some(o) = &args.out {
        cfg.scores = Some(o.clone());
    }
    Ok(cfg)
}

fn local_roles(cfg: &RunConfig) -> Result<Vec<Role>, CliError> {
    Ok(match cfg.mode {
        Mode::Sim => vec![Role::PartyA, Role::PartyB],
        Mode::Tcp => vec![cfg.role()?],
    })
}

fn cmd_train(args: &TrainArgs, force_tcp: bool) -> Result<(), CliError> {
    let cfg = train_config(args, force_tcp)?;
    cfg.train.validate()?;
    for role in local_roles(&cfg)? {
        cfg.model.require(role, "model output")?;
    }
    let label = cfg.label.clone();
    let inputs = |role: Role| -> Result<PartyInput, CliError> {
        let data = load_data(cfg.data.require(role, "data")?, role, &label, role == Role::PartyA)?;
        let eval = cfg.eval.get(role).map(|p| load_data(p, role, &label, false)).transpose()?;
        Ok(PartyInput { data, eval, model: None })
    };
    let tc = cfg.train.clone();
    let mut res = run_job("train", &cfg, inputs, |p, input| train_job(p, &tc, input))?;
    for (role, input, out) in &res.outputs {
        let model = out.model.as_ref().expect("training yields a model");
        let path = cfg.model.require(*role, "model output")?;
        let text = model.to_json()?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let Some(scores) = &out.scores else { continue };
        if let Some(path) = &cfg.scores {
            write_scores(path, tc.objective, scores)?;
        }
        if let Some(labels) = input.eval.as_ref().and_then(|e| e.label.as_ref()) {
            res.report.add_metrics("eval", tc.objective, scores, labels)?;
        }
    }
    res.report.write(cfg.report.as_deref())
}

fn cmd_predict(args: &PredictArgs, force_tcp: bool) -> Result<(), CliError> {
    let mut cfg = base_config(&args.common)?;
    if force_tcp {
        cfg.mode = Mode::Tcp;
    }
    let mut data = cfg.data.clone();
    apply_paths(&cfg, &mut data, &args.data_a, &args.data_b, &args.data)?;
    let mut model = cfg.model.clone();
    apply_paths(&cfg, &mut model, &args.model_a, &args.model_b, &args.model)?;
    cfg.data = data;
    cfg.model = model;
    if let Some(o) = &args.out {
        cfg.scores = Some(o.clone());
    }
    let recipient: Role = args.recipient.parse().map_err(CliError::Config)?;
    if recipient == Role::Dealer {
        return Err(CliError::Config("the dealer never receives predictions".into()));
    }
    let roles = local_roles(&cfg)?;
    if roles.contains(&recipient) && cfg.scores.is_none() {
        return Err(CliError::Config("the recipient needs a scores path (--out)".into()));
    }
    let label = cfg.label.clone();
    let inputs = |role: Role| -> Result<PartyInput, CliError> {
        let model = load_model(cfg.model.require(role, "model")?)?;
        let data = load_data(cfg.data.require(role, "data")?, role, &label, false)?;
        Ok(PartyInput {
            data,
            eval: None,
            model: Some(model),
        })
    };
    let mut res = run_job("predict", &cfg, inputs, |p, input| predict_job(p, input, recipient))?;
    for (_, input, out) in &res.outputs {
        let Some(scores) = &out.scores else { continue };
        let objective = input.model.as_ref().unwrap().config.objective;
        write_scores(cfg.scores.as_deref().unwrap(), objective, scores)?;
        if let Some(labels) = &input.data.label {
            if !scores.is_empty() {
                res.report.add_metrics("predict", objective, scores, labels)?;
            }
        }
    }
    res.report.write(cfg.report.as_deref())
}

fn cmd_dealer(args: &DealerArgs) -> Result<(), CliError> {
    let cfg = base_config(&args.common)?;
    cfg.ring.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let addr = args
        .listen
        .clone()
        .or(cfg.network.dealer.clone())
        .ok_or_else(|| CliError::Config("dealer needs --listen or network.dealer".into()))?;
    let stats = net::serve_dealer(&addr, cfg.ring, cfg.seed, cfg.timeout())?;
    eprintln!("dealer done: {} requests, {} bytes", stats.requests, stats.bytes_sent);
    Ok(())
}

#[derive(Serialize)]
struct BenchRow {
    variant: Backend,
    value: String,
    rows: usize,
    features: usize,
    buckets: usize,
    report: Report,
}

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let base = base_config(&args.common)?;
    if base.mode != Mode::Sim {
        return Err(CliError::Config("bench runs in sim mode".into()));
    }
    let mut rows = Vec::new();
    for value in &args.values {
        let mut cfg = base.clone();
        let (mut m, mut n, mut k) = (args.rows, args.features, args.buckets);
        let bad = |e: std::num::ParseIntError| CliError::Config(format!("bad sweep value {value:?}: {e}"));
        match args.vary {
            Sweep::M => m = value.parse().map_err(bad)?,
            Sweep::N => n = value.parse().map_err(bad)?,
            Sweep::K => k = value.parse().map_err(bad)?,
            Sweep::Bandwidth => cfg.network.bandwidth = Some(value.clone()),
            Sweep::Latency => cfg.network.latency = Some(value.clone()),
        }
        let data = generate(&SynthSpec {
            rows: m,
            features: [n / 2, n - n / 2],
            objective: args.objective,
            seed: cfg.seed.unwrap_or(1),
        })?;
        for &variant in &args.variants {
            cfg.train.trees = args.trees;
            cfg.train.max_depth = args.max_depth;
            cfg.train.buckets = k;
            cfg.train.objective = args.objective;
            cfg.train.variant = variant;
            if let Some(bits) = args.he_bits {
                cfg.train.he_bits = bits;
            }
            let tc = cfg.train.clone();
            let inputs = |role: Role| -> Result<PartyInput, CliError> {
                let d = if role == Role::PartyA { &data.a } else { &data.b };
                Ok(PartyInput {
                    data: d.clone(),
                    eval: None,
                    model: None,
                })
            };
            let res = run_job("train", &cfg, inputs, |p, input| train_job(p, &tc, input))?;
            let sum = res.report.phases.iter().find(|p| p.name == "sum_gradients");
            eprintln!(
                "{:>10} {:>5} {:>10}: sum_gradients {:>12} B, total {:>12} B, {:>8} rounds, {:>9.3} virtual s",
                format!("{:?}", args.vary).to_lowercase(),
                variant,
                value,
                sum.map_or(0, |p| p.bytes),
                res.report.totals.bytes,
                res.report.totals.rounds,
                res.report.totals.virtual_seconds
            );
            rows.push(BenchRow {
                variant,
                value: value.clone(),
                rows: m,
                features: n,
                buckets: k,
                report: res.report,
            });
        }
    }
    let out = serde_json::json!({ "vary": args.vary, "points": rows });
    let text = serde_json::to_string_pretty(&out).map_err(|e| CliError::Io(e.to_string()))?;
    match &args.out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let data = generate(&SynthSpec {
        rows: args.rows,
        features: [args.features_a, args.features_b],
        objective: args.objective,
        seed: args.seed,
    })?;
    let write = |d: &Dataset, p: &PathBuf| {
        d.write_csv(p, &args.label)
            .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
    };
    write(&data.a, &args.out_a)?;
    write(&data.b, &args.out_b)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(a) => cmd_train(a, false),
        Command::Predict(a) => cmd_predict(a, false),
        Command::Bench(a) => cmd_bench(a),
        Command::Dealer(a) => cmd_dealer(a),
        Command::Party(PartyJob::Train(a)) => cmd_train(a, true),
        Command::Party(PartyJob::Predict(a)) => cmd_predict(a, true),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sgb: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
