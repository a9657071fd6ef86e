//! HTTP and WebSocket server for the webhaptics simulations.
//!
//! One thread runs the simulation at a fixed tick rate and owns all of its
//! state. Request handlers push commands onto a queue and read the most
//! recently published snapshot.

pub mod api;
pub mod config;
pub mod engine;

use std::future::Future;
use std::net::SocketAddr;

use thiserror::Error;
use tokio::net::TcpListener;

pub use api::{router, AppState, SnapshotFeed};
pub use config::{Cli, ServerConfig};
pub use engine::{Ack, CommandSink, Engine, Published, SimThread};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Engine(#[from] engine::EngineError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Serve(std::io::Error),
}

/// A started server: the simulation thread plus a bound listener.
#[derive(Debug)]
pub struct Server {
    listener: TcpListener,
    app: AppState,
    sim: SimThread,
}

impl Server {
    pub async fn bind(config: &ServerConfig) -> Result<Self, ServerError> {
        config.validate()?;
        let engine = Engine::from_config(config)?;
        let app = AppState {
            sink: engine.sink(),
            feed: engine.subscribe(),
            attachments_dir: config.attachments_dir.clone(),
        };
        let addr = config.addr();
        let listener = TcpListener::bind(addr)
            .await
            .map_err(|source| ServerError::Bind { addr, source })?;
        Ok(Server {
            listener,
            app,
            sim: SimThread::spawn(engine),
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves until `shutdown` resolves, then stops the simulation.
    pub async fn run(
        self,
        shutdown: impl Future<Output = ()> + Send + 'static,
    ) -> Result<(), ServerError> {
        let Server { listener, app, sim } = self;
        let result = axum::serve(listener, router(app))
            .with_graceful_shutdown(shutdown)
            .await
            .map_err(ServerError::Serve);
        drop(sim);
        result
    }
}
