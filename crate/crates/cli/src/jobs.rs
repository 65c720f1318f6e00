//! Train and predict jobs, written once per party and run either in one
//! process (sim) or one role per process (tcp).

use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sgb_core::binning::Dataset;
use sgb_core::oracle::{auc, link, rmse};
use sgb_core::predict::secure_predict;
use sgb_core::protocols::Party;
use sgb_core::session::{merge_phases, run_session, PartyStats, PhaseSummary};
use sgb_core::train::{train, ModelHalf, Objective, TrainConfig};
use sgb_core::transport::{NetProfile, Role};

use crate::config::{Mode, RunConfig};
use crate::{detail, net, CliError};

/// Inputs one party brings to a job.
pub struct PartyInput {
    pub data: Dataset,
    pub eval: Option<Dataset>,
    pub model: Option<ModelHalf>,
}

/// What one party takes away from a job.
#[derive(Default)]
pub struct PartyOutput {
    pub model: Option<ModelHalf>,
    /// Revealed raw scores; only the recipient has them.
    pub scores: Option<Vec<f64>>,
}

/// Loads a party's rows. Party A's label column is required for training
/// and optional for prediction; party B's files must not carry it.
pub fn load_data(path: &Path, role: Role, label: &str, need_label: bool) -> Result<Dataset, CliError> {
    let data = match (role, need_label) {
        (Role::PartyA, true) => Dataset::load(path, Some(label)),
        (Role::PartyA, false) => Dataset::load_optional_label(path, label),
        _ => Dataset::load(path, None),
    }
    .map_err(|e| CliError::Io(format!("{}: {}", path.display(), detail(&e))))?;
    if role == Role::PartyB && data.names.iter().any(|n| n == label) {
        return Err(CliError::Config(format!(
            "{}: party B's data must not contain the label column {label:?}",
            path.display()
        )));
    }
    Ok(data)
}

pub fn load_model(path: &Path) -> Result<ModelHalf, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    ModelHalf::from_json(&text).map_err(|e| CliError::Io(format!("{}: {}", path.display(), detail(&e))))
}

pub fn train_job(p: &mut Party, cfg: &TrainConfig, input: &PartyInput) -> sgb_core::Result<PartyOutput> {
    let out = train(p, cfg, &input.data)?;
    let scores = match &input.eval {
        Some(eval) => secure_predict(p, &out.model, eval, Some(Role::PartyA))?,
        None => None,
    };
    Ok(PartyOutput {
        model: Some(out.model),
        scores,
    })
}

pub fn predict_job(p: &mut Party, input: &PartyInput, recipient: Role) -> sgb_core::Result<PartyOutput> {
    let model = input.model.as_ref().expect("predict job needs a model");
    let scores = secure_predict(p, model, &input.data, Some(recipient))?;
    Ok(PartyOutput { model: None, scores })
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub mode: Mode,
    /// `both` in sim mode, otherwise the local role.
    pub view: String,
    pub seed: Option<u64>,
    pub profile: NetProfile,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    pub phases: Vec<PhaseSummary>,
    pub totals: Totals,
    pub metrics: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Default, Serialize)]
pub struct Totals {
    pub bytes: u64,
    pub rounds: u64,
    pub virtual_seconds: f64,
    pub offline_bytes: u64,
    pub ciphertexts: u64,
    pub wall_seconds: f64,
}

impl Report {
    fn new(command: &str, cfg: &RunConfig, view: String, phases: Vec<PhaseSummary>, stats: &[PartyStats]) -> Result<Self, CliError> {
        let totals = Totals {
            bytes: stats.iter().map(|s| s.bytes_sent).sum(),
            rounds: stats.iter().map(|s| s.rounds).max().unwrap_or(0),
            virtual_seconds: stats.iter().map(|s| s.virtual_seconds).fold(0.0, f64::max),
            offline_bytes: stats.iter().map(|s| s.offline_bytes).sum(),
            ciphertexts: stats.iter().map(|s| s.ciphertexts_sent).sum(),
            wall_seconds: 0.0,
        };
        Ok(Self {
            command: command.into(),
            mode: cfg.mode,
            view,
            seed: cfg.seed,
            profile: cfg.profile()?,
            train: (command == "train").then(|| cfg.train.clone()),
            phases,
            totals,
            metrics: Default::default(),
        })
    }

    /// AUC for logistic models, RMSE for regression, on revealed raw scores.
    pub fn add_metrics(&mut self, prefix: &str, objective: Objective, scores: &[f64], labels: &[f64]) -> Result<(), CliError> {
        let (name, value) = match objective {
            Objective::Logistic => ("auc", auc(scores, labels)?),
            Objective::SquaredError => ("rmse", rmse(scores, labels)?),
        };
        self.metrics.insert(format!("{prefix}_{name}"), value.into());
        self.metrics.insert(format!("{prefix}_rows"), scores.len().into());
        Ok(())
    }

    pub fn write(&self, path: Option<&Path>) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        match path {
            Some(p) => std::fs::write(p, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
            None => {
                println!("{text}");
                Ok(())
            }
        }
    }
}

/// Writes `row,score` with scores on the prediction scale of `objective`.
pub fn write_scores(path: &Path, objective: Objective, scores: &[f64]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    w.write_record(["row", "score"]).map_err(io)?;
    for (i, &s) in scores.iter().enumerate() {
        w.write_record([i.to_string(), link(objective, s, true).to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

/// Inputs and outputs of both parties (sim) or of the local one (tcp).
pub struct JobResult {
    pub outputs: Vec<(Role, PartyInput, PartyOutput)>,
    pub report: Report,
}

/// Runs `job` in the configured mode. `inputs` yields the input of a role.
pub fn run_job<J, I>(command: &str, cfg: &RunConfig, inputs: I, job: J) -> Result<JobResult, CliError>
where
    I: Fn(Role) -> Result<PartyInput, CliError>,
    J: Fn(&mut Party, &PartyInput) -> sgb_core::Result<PartyOutput> + Sync,
{
    let opts = cfg.session()?;
    let start = Instant::now();
    let mut result = match cfg.mode {
        Mode::Sim => {
            let (ia, ib) = (inputs(Role::PartyA)?, inputs(Role::PartyB)?);
            let out = run_session(&opts, |p| job(p, &ia), |p| job(p, &ib))?;
            let report = Report::new(command, cfg, "both".into(), out.phases, &out.stats)?;
            JobResult {
                outputs: vec![(Role::PartyA, ia, out.a), (Role::PartyB, ib, out.b)],
                report,
            }
        }
        Mode::Tcp => {
            let role = cfg.role()?;
            let input = inputs(role)?;
            let peer = cfg.network.peer.as_deref().ok_or_else(|| CliError::Config("tcp mode needs network.peer".into()))?;
            let dealer = cfg
                .network
                .dealer
                .as_deref()
                .ok_or_else(|| CliError::Config("tcp mode needs network.dealer".into()))?;
            let mut party = net::connect_party(role, peer, dealer, &opts)?;
            let out = job(&mut party, &input)?;
            let stats = PartyStats::of(&party);
            let phases = merge_phases(party.phases(), &[]);
            let report = Report::new(command, cfg, role.to_string(), phases, &[stats])?;
            JobResult {
                outputs: vec![(role, input, out)],
                report,
            }
        }
    };
    result.report.totals.wall_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}
