//! Concurrent session registry with an append-only event log and a
//! latest-state snapshot per session.
//!
//! Writes to one session go through its mutex; reads take the most recently
//! published `Arc<Session>` from a watch channel and never wait on a fit.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tokio::sync::{watch, Mutex};

use super::{session_seed, AnswerOutcome, FieldError, Session, SessionConfig, SessionEvent, SessionView};
use crate::error::{Error, Result};
use crate::model::{PerformanceTable, PreferenceStatement};

#[derive(Debug, Clone, Default)]
pub struct StoreConfig {
    /// Sessions are kept in memory only when unset.
    pub data_dir: Option<PathBuf>,
    pub server_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    /// Number of log events folded into `session`.
    events: usize,
    session: Session,
}

struct Writer {
    session: Session,
    events: usize,
}

struct Slot {
    writer: Mutex<Writer>,
    published: watch::Sender<Arc<Session>>,
    dir: Option<PathBuf>,
}

impl Slot {
    fn new(session: Session, events: usize, dir: Option<PathBuf>) -> Arc<Self> {
        let (published, _) = watch::channel(Arc::new(session.clone()));
        Arc::new(Slot {
            writer: Mutex::new(Writer { session, events }),
            published,
            dir,
        })
    }

    fn snapshot(&self) -> Arc<Session> {
        self.published.borrow().clone()
    }

    /// Logs `new_events`, rewrites the snapshot, and publishes.
    fn commit(&self, w: &mut Writer, new_events: &[SessionEvent]) -> Result<()> {
        if let Some(dir) = &self.dir {
            append_events(dir, new_events)?;
            w.events += new_events.len();
            write_snapshot(dir, w)?;
        } else {
            w.events += new_events.len();
        }
        self.published.send_replace(Arc::new(w.session.clone()));
        Ok(())
    }
}

#[derive(Clone)]
pub struct SessionStore {
    inner: Arc<Inner>,
}

struct Inner {
    config: StoreConfig,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn append_events(dir: &Path, events: &[SessionEvent]) -> Result<()> {
    if events.is_empty() {
        return Ok(());
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("events.jsonl"))?;
    let mut buf = Vec::new();
    for e in events {
        serde_json::to_writer(&mut buf, e)?;
        buf.push(b'\n');
    }
    f.write_all(&buf)?;
    f.sync_data()?;
    Ok(())
}

fn write_snapshot(dir: &Path, w: &Writer) -> Result<()> {
    let tmp = dir.join("snapshot.json.tmp");
    fs::write(
        &tmp,
        serde_json::to_vec(&Snapshot {
            events: w.events,
            session: w.session.clone(),
        })?,
    )?;
    fs::rename(tmp, dir.join("snapshot.json"))?;
    Ok(())
}

fn read_events(dir: &Path) -> Result<Vec<SessionEvent>> {
    let f = fs::File::open(dir.join("events.jsonl"))?;
    let lines: Vec<String> = BufReader::new(f).lines().collect::<std::io::Result<_>>()?;
    let mut out = Vec::with_capacity(lines.len());
    for (k, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(e) => out.push(e),
            // a torn final line from a crash mid-append is dropped
            Err(_) if k + 1 == lines.len() => log::warn!("{}: ignoring partial last event", dir.display()),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

/// Rebuilds one session from disk, preferring the snapshot and replaying
/// any events logged after it.
fn recover(dir: &Path) -> Result<(Session, usize)> {
    let events = read_events(dir)?;
    let snap: Option<Snapshot> = fs::read(dir.join("snapshot.json"))
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .filter(|s: &Snapshot| s.events >= 1 && s.events <= events.len());
    let session = match snap {
        Some(s) => {
            let mut session = s.session;
            for e in &events[s.events..] {
                session.replay_event(e)?;
            }
            session
        }
        None => Session::replay(&events)?,
    };
    Ok((session, events.len()))
}

impl SessionStore {
    /// Opens the store, recovering every session found in the data
    /// directory. Call [`SessionStore::resume`] from a runtime afterwards.
    pub fn open(config: StoreConfig) -> Result<Self> {
        let mut sessions = HashMap::new();
        if let Some(root) = &config.data_dir {
            let dir = root.join("sessions");
            fs::create_dir_all(&dir)?;
            let mut entries: Vec<PathBuf> = fs::read_dir(&dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.join("events.jsonl").exists())
                .collect();
            entries.sort();
            for path in entries {
                match recover(&path) {
                    Ok((session, events)) => {
                        let w = Writer { session, events };
                        write_snapshot(&path, &w)?;
                        sessions.insert(w.session.id.clone(), Slot::new(w.session, w.events, Some(path)));
                    }
                    Err(e) => log::error!("cannot recover {}: {e}", path.display()),
                }
            }
        }
        Ok(SessionStore {
            inner: Arc::new(Inner {
                config,
                sessions: RwLock::new(sessions),
            }),
        })
    }

    pub fn in_memory(server_seed: u64) -> Self {
        SessionStore::open(StoreConfig {
            data_dir: None,
            server_seed,
        })
        .expect("in-memory store needs no I/O")
    }

    /// Restarts owed work for recovered sessions.
    pub fn resume(&self) {
        let slots: Vec<Arc<Slot>> = self.inner.sessions.read().unwrap().values().cloned().collect();
        for slot in slots {
            if slot.snapshot().pending_job().is_some() {
                tokio::spawn(drive(slot));
            }
        }
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.inner.sessions.read().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>> {
        self.inner
            .sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::SessionNotFound(id.to_owned()))
    }

    /// Creates a session and selects its first question before returning.
    pub async fn create(
        &self,
        table: PerformanceTable,
        horizon: usize,
        config: SessionConfig,
    ) -> std::result::Result<SessionView, CreateError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let seed = session_seed(self.inner.config.server_seed, &id, config.seed);
        let session = Session::new(id.clone(), table, horizon, config, seed, now_ms()).map_err(CreateError::Fields)?;
        let dir = match &self.inner.config.data_dir {
            Some(root) => {
                let d = root.join("sessions").join(&id);
                fs::create_dir_all(&d)?;
                Some(d)
            }
            None => None,
        };
        let created = session.created_event();
        let slot = Slot::new(session, 0, dir);
        {
            let mut w = slot.writer.lock().await;
            slot.commit(&mut w, &[created])?;
        }
        self.inner.sessions.write().unwrap().insert(id.clone(), slot.clone());
        drive(slot.clone()).await;
        Ok(slot.snapshot().view())
    }

    pub fn get(&self, id: &str) -> Result<Arc<Session>> {
        Ok(self.slot(id)?.snapshot())
    }

    /// Records an answer and starts the refit in the background. The
    /// returned view is `fitting` when the answer was accepted.
    pub async fn answer(
        &self,
        id: &str,
        statement: PreferenceStatement,
        idempotency_key: Option<&str>,
    ) -> Result<(AnswerOutcome, SessionView)> {
        let slot = self.slot(id)?;
        let mut w = slot.writer.lock().await;
        let now = now_ms();
        let event = w.session.answer_event(statement, idempotency_key, now);
        let outcome = w.session.submit_answer(statement, idempotency_key, now)?;
        if outcome == AnswerOutcome::Accepted {
            if let Err(e) = slot.commit(&mut w, &[event]) {
                // keep memory consistent with the log
                let (session, events) = match &slot.dir {
                    Some(dir) => recover(dir)?,
                    None => return Err(e),
                };
                w.session = session;
                w.events = events;
                return Err(e);
            }
            tokio::spawn(drive(slot.clone()));
        }
        Ok((outcome, w.session.view()))
    }

    /// Resolves once the session has no owed work (or its work failed).
    pub async fn wait_idle(&self, id: &str) -> Result<Arc<Session>> {
        let slot = self.slot(id)?;
        let mut rx = slot.published.subscribe();
        let s = rx
            .wait_for(|s| s.pending_job().is_none() || s.last_error.is_some())
            .await
            .map_err(|_| Error::SessionNotFound(id.to_owned()))?;
        Ok(s.clone())
    }
}

/// Runs the session's owed job off the async runtime and applies it.
async fn drive(slot: Arc<Slot>) {
    let job = {
        let w = slot.writer.lock().await;
        match w.session.pending_job() {
            Some(j) => j,
            None => return,
        }
    };
    let result = tokio::task::spawn_blocking(move || job.run())
        .await
        .unwrap_or_else(|e| Err(Error::InvalidInput(format!("fit task panicked: {e}"))));
    let mut w = slot.writer.lock().await;
    let now = now_ms();
    let applied = result.and_then(|outcome| w.session.apply(outcome, now));
    let committed = match applied {
        Ok(event) => slot.commit(&mut w, &event.into_iter().collect::<Vec<_>>()),
        Err(e) => Err(e),
    };
    if let Err(e) = committed {
        log::error!("session {}: {e}", w.session.id);
        w.session.record_failure(&e, now);
        slot.published.send_replace(Arc::new(w.session.clone()));
    }
}

#[derive(Debug)]
pub enum CreateError {
    Fields(Vec<FieldError>),
    Engine(Error),
}

impl From<Error> for CreateError {
    fn from(e: Error) -> Self {
        CreateError::Engine(e)
    }
}

impl From<std::io::Error> for CreateError {
    fn from(e: std::io::Error) -> Self {
        CreateError::Engine(e.into())
    }
}
