use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use mer_core::corpus::CorpusManifest;
use mer_core::ranking::{ComparisonKey, Dimension};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::export::{self, ExportKind, Progress};
use crate::state::{
    Applied, CampaignConfig, CampaignSpec, Event, GoldPair, NextDecision, Phase, ServiceState,
    SessionEvent, SubmitOutcome,
};
use crate::store::EventLog;
use crate::{Result, ServiceError};

/// A gold comparison as supplied by an operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldInput {
    pub left: String,
    pub right: String,
    pub winner: String,
}

/// Builds a campaign from a manifest. Relative clip paths are resolved
/// against `base_dir`. Clips used by gold pairs are not ranked.
pub fn campaign_spec(
    id: &str,
    manifest: &CorpusManifest,
    base_dir: &Path,
    dimension: Dimension,
    gold: &[GoldInput],
    seed: u64,
    config: CampaignConfig,
) -> Result<CampaignSpec> {
    let clips: BTreeMap<String, PathBuf> = manifest
        .clips
        .iter()
        .map(|c| {
            let path = if c.path.is_absolute() {
                c.path.clone()
            } else {
                base_dir.join(&c.path)
            };
            (c.id.clone(), path)
        })
        .collect();
    let gold = gold
        .iter()
        .map(|g| {
            Ok(GoldPair {
                key: ComparisonKey::new(&g.left, &g.right, dimension)?,
                winner: g.winner.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = CampaignSpec {
        id: id.to_string(),
        dimension,
        clips,
        gold,
        seed,
        config,
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub campaign: String,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipRef {
    pub id: String,
    pub audio: String,
}

/// A task as the client sees it; quiz, gold and real tasks look alike.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TaskResponse {
    Task {
        task_id: String,
        clips: [ClipRef; 2],
        expires_ms: u64,
    },
    Drained,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResponse {
    #[serde(flatten)]
    pub outcome: SubmitOutcome,
    pub phase: Phase,
}

#[derive(Debug, Clone, Copy)]
pub struct ServiceOptions {
    /// Snapshot after every this many events; 0 turns snapshots off.
    pub snapshot_every: u64,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            snapshot_every: 500,
        }
    }
}

struct Inner {
    state: ServiceState,
    log: EventLog,
}

impl Inner {
    /// Persists, then applies. Nothing is applied that was not logged.
    fn commit(&mut self, event: Event) -> Result<Applied> {
        let seq = self.log.append(&event)?;
        let applied = self.state.apply(seq, &event)?;
        if let (Some(resolution), Event::Judgment { session, .. }) = (&applied.resolution, &event) {
            let campaign = self.state.session(session)?.campaign.clone();
            let record = Event::Resolution {
                campaign,
                resolution: resolution.clone(),
            };
            let seq = self.log.append(&record)?;
            self.state.apply(seq, &record)?;
        }
        self.log.maybe_snapshot(&self.state)?;
        Ok(applied)
    }
}

/// The annotation service. Every state change goes through one lock, so the
/// log order is the order in which changes were applied.
pub struct Service {
    inner: Mutex<Inner>,
    clock: Arc<dyn Clock>,
    dir: PathBuf,
}

impl Service {
    /// Opens the service on a log directory, replaying any existing log.
    pub fn open(dir: &Path, clock: Arc<dyn Clock>, options: ServiceOptions) -> Result<Self> {
        let (log, state) = EventLog::open(dir, options.snapshot_every)?;
        Ok(Self {
            inner: Mutex::new(Inner { state, log }),
            clock,
            dir: dir.to_path_buf(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        // a panic while holding the lock leaves state and log consistent:
        // events are applied only after they are durable
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn state(&self) -> ServiceState {
        self.lock().state.clone()
    }

    pub fn create_campaign(&self, spec: CampaignSpec) -> Result<Progress> {
        spec.validate()?;
        let mut inner = self.lock();
        if inner.state.campaigns.contains_key(&spec.id) {
            return Err(ServiceError::Conflict(format!(
                "campaign {:?} already exists",
                spec.id
            )));
        }
        let id = spec.id.clone();
        inner.commit(Event::CampaignCreated(spec))?;
        export::progress(&inner.state, &id)
    }

    pub fn open_session(&self, campaign: &str, annotator: &str) -> Result<SessionInfo> {
        if annotator.is_empty() {
            return Err(ServiceError::Invalid("annotator id is empty".into()));
        }
        let mut inner = self.lock();
        inner.state.campaign(campaign)?;
        let session = format!("s{}", inner.log.next_seq());
        inner.commit(Event::SessionEvent(SessionEvent::Opened {
            session: session.clone(),
            campaign: campaign.to_string(),
            annotator: annotator.to_string(),
        }))?;
        Ok(SessionInfo {
            session_id: session,
            campaign: campaign.to_string(),
            phase: Phase::Quiz,
        })
    }

    pub fn next_task(&self, session: &str) -> Result<TaskResponse> {
        let now = self.clock.now_ms();
        let mut inner = self.lock();
        let task_id = format!("t{}", inner.log.next_seq());
        let assignment = match inner.state.decide_next(session, now, task_id)? {
            NextDecision::Current(a) => a,
            NextDecision::Assign(a) => {
                inner.commit(Event::SessionEvent(SessionEvent::Assigned {
                    session: session.to_string(),
                    assignment: a.clone(),
                }))?;
                a
            }
            NextDecision::Drained => return Ok(TaskResponse::Drained),
            NextDecision::Done => {
                if inner.state.session(session)?.phase != Phase::Done {
                    inner.commit(Event::SessionEvent(SessionEvent::Closed {
                        session: session.to_string(),
                    }))?;
                }
                return Ok(TaskResponse::Done);
            }
        };
        let clip = |id: &str| ClipRef {
            id: id.to_string(),
            audio: format!("/clips/{id}/audio"),
        };
        Ok(TaskResponse::Task {
            task_id: assignment.task_id,
            clips: [clip(assignment.key.left()), clip(assignment.key.right())],
            expires_ms: assignment.expires_ms,
        })
    }

    pub fn submit(&self, session: &str, task_id: &str, winner: &str) -> Result<SubmitResponse> {
        let now = self.clock.now_ms();
        let mut inner = self.lock();
        let event = inner.state.decide_submit(session, task_id, winner, now)?;
        let applied = inner.commit(event)?;
        Ok(SubmitResponse {
            outcome: applied.outcome.unwrap_or(SubmitOutcome::Continue),
            phase: inner.state.session(session)?.phase,
        })
    }

    pub fn export(&self, campaign: &str, kind: ExportKind) -> Result<String> {
        export::export(&self.lock().state, campaign, kind)
    }

    pub fn progress(&self, campaign: &str) -> Result<Progress> {
        export::progress(&self.lock().state, campaign)
    }

    /// Audio file of a clip in any campaign.
    pub fn clip_path(&self, clip: &str) -> Result<PathBuf> {
        let inner = self.lock();
        inner
            .state
            .campaigns
            .values()
            .find_map(|c| c.spec.clips.get(clip).cloned())
            .ok_or_else(|| ServiceError::NotFound(format!("clip {clip:?}")))
    }

    /// Writes a snapshot of the current state.
    pub fn snapshot(&self) -> Result<()> {
        let inner = self.lock();
        inner.log.snapshot(&inner.state)
    }
}
