use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("bad config file {path}: {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
    #[error("{0} must be positive")]
    ZeroRate(&'static str),
    #[error("publish rate {publish_hz} exceeds tick rate {tick_hz}")]
    PublishFasterThanTicks { publish_hz: u32, tick_hz: u32 },
}

/// Effective server settings. The config file uses the same keys as the
/// long flags, with dashes replaced by underscores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub host: IpAddr,
    pub port: u16,
    pub scenes_dir: Option<PathBuf>,
    pub attachments_dir: Option<PathBuf>,
    pub tick_hz: u32,
    pub publish_hz: u32,
    pub seed: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 8080,
            scenes_dir: None,
            attachments_dir: None,
            tick_hz: 1000,
            publish_hz: 30,
            seed: 0,
        }
    }
}

impl ServerConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.tick_hz == 0 {
            return Err(ConfigError::ZeroRate("tick_hz"));
        }
        if self.publish_hz == 0 {
            return Err(ConfigError::ZeroRate("publish_hz"));
        }
        if self.publish_hz > self.tick_hz {
            return Err(ConfigError::PublishFasterThanTicks {
                publish_hz: self.publish_hz,
                tick_hz: self.tick_hz,
            });
        }
        Ok(())
    }

    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.host, self.port)
    }
}

#[derive(Debug, Clone, Default, Parser)]
#[command(
    name = "webhaptics-server",
    version,
    about = "Serves the linac, electrolysis and hydraulics simulations"
)]
pub struct Cli {
    /// TOML file with defaults for any of the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<IpAddr>,
    /// Listening port (default 8080; 0 picks a free port).
    #[arg(long)]
    pub port: Option<u16>,
    /// Directory of `.x3d` scenes served under /api/scene/{name}.
    #[arg(long)]
    pub scenes_dir: Option<PathBuf>,
    /// Directory of `.x3d` attachments, listed on every request.
    #[arg(long)]
    pub attachments_dir: Option<PathBuf>,
    /// Simulation ticks per second (default 1000).
    #[arg(long)]
    pub tick_hz: Option<u32>,
    /// Snapshots per second (default 30).
    #[arg(long)]
    pub publish_hz: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Cli {
    /// Flags override the config file, which overrides the defaults.
    pub fn resolve(&self) -> Result<ServerConfig, ConfigError> {
        let base = match &self.config {
            Some(path) => ServerConfig::from_file(path)?,
            None => ServerConfig::default(),
        };
        let config = ServerConfig {
            host: self.host.unwrap_or(base.host),
            port: self.port.unwrap_or(base.port),
            scenes_dir: self.scenes_dir.clone().or(base.scenes_dir),
            attachments_dir: self.attachments_dir.clone().or(base.attachments_dir),
            tick_hz: self.tick_hz.unwrap_or(base.tick_hz),
            publish_hz: self.publish_hz.unwrap_or(base.publish_hz),
            seed: self.seed.unwrap_or(base.seed),
        };
        config.validate()?;
        Ok(config)
    }
}
