//! Run configuration: a TOML file whose keys mirror [`RunConfig`], with
//! command-line flags applied on top.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sgb_core::ring::RingConfig;
use sgb_core::session::SessionOptions;
use sgb_core::train::TrainConfig;
use sgb_core::transport::{NetProfile, Role};

use crate::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// All three roles in this process.
    #[default]
    Sim,
    /// One role per process over TCP.
    Tcp,
}

/// A path per party. In TCP mode only the local role's entry is used.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerParty {
    pub a: Option<PathBuf>,
    pub b: Option<PathBuf>,
}

impl PerParty {
    pub fn get(&self, role: Role) -> Option<&PathBuf> {
        match role {
            Role::PartyA => self.a.as_ref(),
            _ => self.b.as_ref(),
        }
    }

    pub fn set(&mut self, role: Role, path: PathBuf) {
        match role {
            Role::PartyA => self.a = Some(path),
            _ => self.b = Some(path),
        }
    }

    pub fn require(&self, role: Role, what: &str) -> Result<&PathBuf, CliError> {
        self.get(role)
            .ok_or_else(|| CliError::Config(format!("missing {what} path for {role}")))
    }

    fn rebase(&mut self, base: &Path) {
        for p in [&mut self.a, &mut self.b].into_iter().flatten() {
            *p = rebase(base, p);
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Simulated bandwidth such as `100Mbps`; absent means unlimited.
    pub bandwidth: Option<String>,
    /// Simulated one-way latency such as `5ms`.
    pub latency: Option<String>,
    /// TCP: party A listens here, party B connects here.
    pub peer: Option<String>,
    /// TCP: address of the dealer.
    pub dealer: Option<String>,
    /// TCP: seconds to wait for connections and messages.
    pub timeout: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// Local role in TCP mode.
    pub role: Option<String>,
    pub seed: Option<u64>,
    /// Name of the label column in party A's files.
    pub label: String,
    pub data: PerParty,
    /// Optional held-out data scored after training.
    pub eval: PerParty,
    pub model: PerParty,
    /// Scores CSV written by the recipient of predictions.
    pub scores: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub ring: RingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Sim,
            role: None,
            seed: None,
            label: "label".into(),
            data: PerParty::default(),
            eval: PerParty::default(),
            model: PerParty::default(),
            scores: None,
            report: None,
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            ring: RingConfig::default(),
        }
    }
}

fn rebase(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads a TOML file. Relative paths inside it are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for set in [&mut cfg.data, &mut cfg.eval, &mut cfg.model] {
            set.rebase(base);
        }
        for p in [&mut cfg.scores, &mut cfg.report].into_iter().flatten() {
            *p = rebase(base, p);
        }
        Ok(cfg)
    }

    pub fn role(&self) -> Result<Role, CliError> {
        let r = self
            .role
            .as_deref()
            .ok_or_else(|| CliError::Config("tcp mode needs a role (a or b)".into()))?;
        match Role::from_str(r).map_err(CliError::Config)? {
            Role::Dealer => Err(CliError::Config("use the dealer command for the dealer role".into())),
            role => Ok(role),
        }
    }

    pub fn profile(&self) -> Result<NetProfile, CliError> {
        let bw = match self.network.bandwidth.as_deref() {
            None => None,
            Some(s) => parse_bandwidth(s)?,
        };
        let lat = match self.network.latency.as_deref() {
            None => 0.0,
            Some(s) => parse_duration(s)?,
        };
        NetProfile::new(bw, lat).map_err(CliError::Config)
    }

    pub fn timeout(&self) -> Option<Duration> {
        self.network.timeout.map(Duration::from_secs_f64)
    }

    pub fn session(&self) -> Result<SessionOptions, CliError> {
        self.ring.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate()?;
        Ok(SessionOptions {
            ring: self.ring,
            profile: self.profile()?,
            seed: self.seed,
            timeout: self.timeout(),
            ..SessionOptions::default()
        })
    }
}

/// Bits per second from strings like `100Mbps`, `1.5 Gbps`, `8000` or
/// `unlimited`.
pub fn parse_bandwidth(s: &str) -> Result<Option<f64>, CliError> {
    let t = s.trim().to_ascii_lowercase();
    if t == "unlimited" || t == "inf" {
        return Ok(None);
    }
    let units = [("gbps", 1e9), ("mbps", 1e6), ("kbps", 1e3), ("bps", 1.0)];
    let (num, mult) = units
        .iter()
        .find_map(|(u, m)| t.strip_suffix(u).map(|n| (n.trim(), *m)))
        .unwrap_or((t.as_str(), 1.0));
    let v: f64 = num
        .parse()
        .map_err(|_| CliError::Config(format!("cannot parse bandwidth {s:?}")))?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(CliError::Config(format!("bandwidth must be positive, got {s:?}")));
    }
    Ok(Some(v * mult))
}

/// Seconds from strings like `5ms`, `0.2s`, `150us` or a bare number of
/// seconds.
pub fn parse_duration(s: &str) -> Result<f64, CliError> {
    let t = s.trim().to_ascii_lowercase();
    let units = [("ms", 1e-3), ("us", 1e-6), ("s", 1.0)];
    let (num, mult) = units
        .iter()
        .find_map(|(u, m)| t.strip_suffix(u).map(|n| (n.trim(), *m)))
        .unwrap_or((t.as_str(), 1.0));
    let v: f64 = num
        .parse()
        .map_err(|_| CliError::Config(format!("cannot parse duration {s:?}")))?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(CliError::Config(format!("duration must be non-negative, got {s:?}")));
    }
    Ok(v * mult)
}
