//! Effective configuration: flags, then environment, then `leash.toml`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use leash_core::gateway::{Cassette, CassetteMode, Gateway, HttpConfig, HttpTransport, Provider};
use leash_core::model::RunParams;
use leash_core::orchestrator::{AuditStore, Orchestrator};
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_CONFIG: &str = "leash.toml";
pub const DEFAULT_AUDIT_DIR: &str = ".leash/audit";

/// Global options. Each may also come from its environment variable.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Config file; `leash.toml` in the working directory is used when present.
    #[arg(long, global = true, env = "LEASH_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "LEASH_AUDIT_DIR")]
    pub audit_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "LEASH_CASSETTE")]
    pub cassette: Option<PathBuf>,
    /// record | replay | live
    #[arg(long, global = true, env = "LEASH_MODE")]
    pub mode: Option<String>,
    /// openai | deepseek | generic
    #[arg(long, global = true, env = "LEASH_PROVIDER")]
    pub provider: Option<String>,
    #[arg(long, global = true, env = "LEASH_BASE_URL")]
    pub base_url: Option<String>,
    /// Name of the environment variable that holds the API key.
    #[arg(long, global = true, env = "LEASH_CREDENTIAL_ENV")]
    pub credential_env: Option<String>,
    #[arg(long, global = true, env = "LEASH_MAX_IN_FLIGHT")]
    pub max_in_flight: Option<usize>,
    #[arg(long, global = true, env = "LEASH_MODEL")]
    pub model: Option<String>,
    /// TOML file with run parameters (model, temperature, ...).
    #[arg(long, global = true, env = "LEASH_PARAMS")]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    audit_dir: Option<PathBuf>,
    cassette: Option<PathBuf>,
    mode: Option<String>,
    max_in_flight: Option<usize>,
    #[serde(default)]
    provider: FileProvider,
    params: Option<RunParams>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileProvider {
    name: Option<String>,
    base_url: Option<String>,
    credential_env: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CliConfig {
    pub audit_dir: PathBuf,
    pub cassette: Option<PathBuf>,
    pub mode: CassetteMode,
    pub provider: Provider,
    pub base_url: Option<String>,
    pub credential_env: String,
    pub max_in_flight: usize,
    pub params: Option<RunParams>,
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

impl CliConfig {
    pub fn resolve(args: &GlobalArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => Some(read_file(p)?),
            None if Path::new(DEFAULT_CONFIG).exists() => Some(read_file(Path::new(DEFAULT_CONFIG))?),
            None => None,
        };
        let file: FileConfig = match file {
            Some(text) => toml::from_str(&text).map_err(|e| CliError::config(format!("config file: {e}")))?,
            None => FileConfig::default(),
        };
        let mode: CassetteMode = args
            .mode
            .clone()
            .or(file.mode)
            .as_deref()
            .unwrap_or("replay")
            .parse()
            .map_err(CliError::config)?;
        let provider: Provider = args
            .provider
            .clone()
            .or(file.provider.name)
            .as_deref()
            .unwrap_or("generic")
            .parse()
            .map_err(CliError::config)?;
        let max_in_flight = args
            .max_in_flight
            .or(file.max_in_flight)
            .unwrap_or(leash_core::gateway::DEFAULT_MAX_IN_FLIGHT);
        if max_in_flight == 0 {
            return Err(CliError::config("max_in_flight must be at least 1"));
        }
        let mut params = match &args.params {
            Some(p) => Some(
                toml::from_str::<RunParams>(&read_file(p)?).map_err(|e| CliError::config(format!("params: {e}")))?,
            ),
            None => file.params,
        };
        if let Some(model) = &args.model {
            match &mut params {
                Some(p) => p.model = model.clone(),
                None => params = Some(RunParams::new(model.clone())),
            }
        }
        Ok(Self {
            audit_dir: args
                .audit_dir
                .clone()
                .or(file.audit_dir)
                .unwrap_or_else(|| DEFAULT_AUDIT_DIR.into()),
            cassette: args.cassette.clone().or(file.cassette),
            mode,
            provider,
            base_url: args.base_url.clone().or(file.provider.base_url),
            credential_env: args
                .credential_env
                .clone()
                .or(file.provider.credential_env)
                .unwrap_or_else(|| provider.default_key_env().to_string()),
            max_in_flight,
            params,
        })
    }

    pub fn params(&self) -> Result<RunParams, CliError> {
        self.params.clone().ok_or_else(|| {
            CliError::config("no run parameters: pass --model or --params, or set [params] in leash.toml")
        })
    }

    pub fn store(&self) -> Result<AuditStore, CliError> {
        Ok(AuditStore::new(&self.audit_dir)?)
    }

    /// Gateway per the cassette mode. Replay never touches credentials or the network.
    pub fn gateway(&self) -> Result<Gateway, CliError> {
        let cassette = match (self.mode, &self.cassette) {
            (CassetteMode::Live, _) => Cassette::in_memory(CassetteMode::Live),
            (mode, Some(path)) => Cassette::open(path, mode).map_err(|e| CliError::config(e.to_string()))?,
            (_, None) => return Err(CliError::config("record and replay modes need --cassette")),
        };
        let cassette = Arc::new(cassette);
        let gw = if self.mode == CassetteMode::Replay {
            Gateway::replay(cassette)
        } else {
            let base_url = self
                .base_url
                .clone()
                .ok_or_else(|| CliError::config("live and record modes need a provider base URL"))?;
            if std::env::var_os(&self.credential_env).is_none() {
                return Err(CliError::config(format!(
                    "credential variable {} is not set",
                    self.credential_env
                )));
            }
            let mut http = HttpConfig::new(self.provider, base_url);
            http.api_key_env = self.credential_env.clone();
            let t = HttpTransport::new(http).map_err(|e| CliError::config(e.to_string()))?;
            Gateway::new(cassette, Arc::new(t))
        };
        Ok(gw.with_max_in_flight(self.max_in_flight))
    }

    pub fn orchestrator(&self) -> Result<Orchestrator, CliError> {
        Ok(Orchestrator::new(self.store()?, self.gateway()?))
    }

    /// Orchestrator for commands that only read trails or record decisions.
    pub fn offline_orchestrator(&self) -> Result<Orchestrator, CliError> {
        let gw = Gateway::replay(Arc::new(Cassette::in_memory(CassetteMode::Replay)));
        Ok(Orchestrator::new(self.store()?, gw))
    }
}
