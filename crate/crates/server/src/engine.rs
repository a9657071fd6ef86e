//! The simulation thread and the two ways other threads talk to it: a
//! command queue going in and a latest-value snapshot channel coming out.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::watch;
use webhaptics::sim::{CommandEnvelope, SimConfig, Simulation, StateSnapshot};
use webhaptics::x3d::{parse_x3d, Document};

use crate::config::ServerConfig;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("cannot read scenes directory {path}: {source}")]
    ScenesUnreadable {
        path: String,
        source: std::io::Error,
    },
}

/// What the simulation thread publishes: a snapshot plus the scene
/// documents as of that tick.
#[derive(Debug, Clone)]
pub struct Published {
    pub snapshot: StateSnapshot,
    pub scenes: Arc<BTreeMap<String, Document>>,
}

/// Reply to an accepted command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    /// First tick whose snapshot reflects the command.
    pub apply_tick: u64,
    pub client_tick: u64,
}

#[derive(Debug)]
struct Queue {
    pending: Vec<CommandEnvelope>,
    next_apply_tick: u64,
}

#[derive(Debug)]
struct Shared {
    queue: Mutex<Queue>,
}

impl Shared {
    fn queue(&self) -> MutexGuard<'_, Queue> {
        // A panic while holding this lock cannot leave the queue half
        // written, so a poisoned lock is still usable.
        self.queue.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Enqueues commands for the simulation thread. Cheap to clone.
#[derive(Debug, Clone)]
pub struct CommandSink {
    shared: Arc<Shared>,
}

impl CommandSink {
    /// Queues a validated command. Commands apply between ticks in the
    /// order they were submitted.
    pub fn submit(&self, envelope: CommandEnvelope) -> Ack {
        let mut q = self.shared.queue();
        let ack = Ack {
            apply_tick: q.next_apply_tick,
            client_tick: envelope.client_tick,
        };
        q.pending.push(envelope);
        ack
    }
}

/// Owns the simulation. Drive it with [`Engine::tick`] directly or hand
/// it to [`SimThread::spawn`].
#[derive(Debug)]
pub struct Engine {
    sim: Simulation,
    shared: Arc<Shared>,
    publisher: watch::Sender<Arc<Published>>,
    scenes: Arc<BTreeMap<String, Document>>,
    scene_revisions: BTreeMap<String, u64>,
}

impl Engine {
    pub fn new(sim: Simulation) -> Self {
        let shared = Arc::new(Shared {
            queue: Mutex::new(Queue {
                pending: Vec::new(),
                next_apply_tick: sim.tick() + 1,
            }),
        });
        let scenes = Arc::new(collect_scenes(&sim));
        let snapshot = sim.snapshot();
        let (publisher, _) = watch::channel(Arc::new(Published {
            snapshot: snapshot.clone(),
            scenes: scenes.clone(),
        }));
        Engine {
            scene_revisions: snapshot.scene_revisions,
            sim,
            shared,
            publisher,
            scenes,
        }
    }

    /// Builds the simulation described by a server config, loading every
    /// `.x3d` file in the scenes directory under its file stem.
    pub fn from_config(config: &ServerConfig) -> Result<Self, EngineError> {
        let mut sim = Simulation::new(SimConfig {
            tick_hz: config.tick_hz,
            publish_hz: config.publish_hz,
            seed: config.seed,
            ..SimConfig::default()
        });
        if let Some(dir) = &config.attachments_dir {
            sim = sim.with_attachments_dir(dir);
        }
        if let Some(dir) = &config.scenes_dir {
            for (name, doc) in load_scenes(dir)? {
                sim.add_scene(name, doc);
            }
        }
        Ok(Engine::new(sim))
    }

    pub fn sink(&self) -> CommandSink {
        CommandSink {
            shared: self.shared.clone(),
        }
    }

    pub fn subscribe(&self) -> watch::Receiver<Arc<Published>> {
        self.publisher.subscribe()
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    /// Applies every queued command, advances one tick, and publishes if
    /// a snapshot is due. Returns the new tick.
    pub fn tick(&mut self) -> u64 {
        let pending = {
            let mut q = self.shared.queue();
            q.next_apply_tick += 1;
            std::mem::take(&mut q.pending)
        };
        for envelope in &pending {
            if let Err(e) = self.sim.apply(&envelope.command) {
                tracing::debug!(tick = self.sim.tick(), "command rejected: {e}");
            }
        }
        self.sim.step();
        let tick = self.sim.tick();
        if self.sim.config.publish_due(tick) {
            self.publish();
        }
        tick
    }

    fn publish(&mut self) {
        let snapshot = self.sim.snapshot();
        if snapshot.scene_revisions != self.scene_revisions {
            self.scenes = Arc::new(collect_scenes(&self.sim));
            self.scene_revisions = snapshot.scene_revisions.clone();
        }
        self.publisher.send_replace(Arc::new(Published {
            snapshot,
            scenes: self.scenes.clone(),
        }));
    }
}

fn collect_scenes(sim: &Simulation) -> BTreeMap<String, Document> {
    sim.snapshot()
        .scene_revisions
        .keys()
        .filter_map(|name| sim.scene(name).map(|doc| (name.clone(), doc.clone())))
        .collect()
}

/// Parses every `.x3d` file in `dir`. Files that fail to parse are logged
/// and skipped so one bad scene does not take the server down.
pub fn load_scenes(dir: &Path) -> Result<Vec<(String, Document)>, EngineError> {
    let unreadable = |source| EngineError::ScenesUnreadable {
        path: dir.display().to_string(),
        source,
    };
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(unreadable)? {
        let path = entry.map_err(unreadable)?.path();
        let is_scene = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("x3d"));
        let Some(stem) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .filter(|_| is_scene && path.is_file())
        else {
            continue;
        };
        match std::fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|text| parse_x3d(&text).map_err(|e| e.to_string()))
        {
            Ok(parsed) => {
                for d in &parsed.diagnostics {
                    tracing::warn!(scene = stem, "{d}");
                }
                out.push((stem.to_string(), parsed.document));
            }
            Err(e) => tracing::warn!(scene = stem, "skipping unreadable scene: {e}"),
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Runs an [`Engine`] on its own thread at its configured tick rate.
/// Dropping the handle stops and joins the thread.
#[derive(Debug)]
pub struct SimThread {
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<Engine>>,
}

impl SimThread {
    pub fn spawn(mut engine: Engine) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let period = Duration::from_secs_f64(engine.sim.config.dt());
        let thread = std::thread::Builder::new()
            .name("simulation".into())
            .spawn(move || {
                let mut deadline = Instant::now();
                while !flag.load(Ordering::Relaxed) {
                    engine.tick();
                    deadline += period;
                    let now = Instant::now();
                    if deadline > now {
                        std::thread::sleep(deadline - now);
                    } else if now - deadline > period * 100 {
                        // Far behind: drop the backlog instead of racing.
                        deadline = now;
                    }
                }
                engine
            })
            .expect("failed to spawn the simulation thread");
        SimThread {
            stop,
            thread: Some(thread),
        }
    }

    /// Stops the loop and hands the engine back.
    pub fn stop(mut self) -> Engine {
        self.halt().expect("simulation thread already joined")
    }

    fn halt(&mut self) -> Option<Engine> {
        self.stop.store(true, Ordering::Relaxed);
        let thread = self.thread.take()?;
        match thread.join() {
            Ok(engine) => Some(engine),
            Err(panic) => std::panic::resume_unwind(panic),
        }
    }
}

impl Drop for SimThread {
    fn drop(&mut self) {
        if !std::thread::panicking() {
            self.halt();
        } else {
            self.stop.store(true, Ordering::Relaxed);
        }
    }
}
