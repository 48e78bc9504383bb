//! Campaign and session state, and the events that change it.
//!
//! The service decides what to do by inspecting a [`ServiceState`], records
//! the decision as an [`Event`], and only then applies it. Replaying the same
//! events from an empty state rebuilds the same value.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use mer_core::ranking::{ComparisonKey, Dimension, Judgment, RankingState, Resolution};
use serde::{Deserialize, Serialize};

use crate::{Result, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub quiz_size: usize,
    /// Fraction of quiz answers that must be correct.
    pub quiz_pass_threshold: f64,
    /// Every `gold_interval`-th task of an active session is a gold check.
    pub gold_interval: usize,
    pub lease_ms: u64,
    /// Concurrent leases allowed on one pending comparison.
    pub max_leases: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            quiz_size: 5,
            quiz_pass_threshold: 0.7,
            gold_interval: 10,
            lease_ms: 10 * 60 * 1000,
            max_leases: 3,
        }
    }
}

impl CampaignConfig {
    /// Correct quiz answers needed to pass.
    pub fn quiz_pass_mark(&self) -> usize {
        // tolerance keeps 0.7 · 10 from rounding up to 8
        (self.quiz_pass_threshold * self.quiz_size as f64 - 1e-9)
            .ceil()
            .max(0.0) as usize
    }

    fn validate(&self) -> Result<()> {
        if self.quiz_size == 0 {
            return Err(ServiceError::Invalid("quiz size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.quiz_pass_threshold) {
            return Err(ServiceError::Invalid(
                "quiz pass threshold outside [0, 1]".into(),
            ));
        }
        if self.gold_interval < 2 {
            return Err(ServiceError::Invalid(
                "gold interval must be at least 2".into(),
            ));
        }
        if self.lease_ms == 0 || self.max_leases == 0 {
            return Err(ServiceError::Invalid(
                "lease length and lease cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldPair {
    pub key: ComparisonKey,
    pub winner: String,
}

/// Everything needed to create a campaign; logged verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub id: String,
    pub dimension: Dimension,
    /// Audio file of every clip, gold clips included.
    pub clips: BTreeMap<String, PathBuf>,
    /// The first `quiz_size` pairs form the quiz; the rest are in-task checks.
    pub gold: Vec<GoldPair>,
    pub seed: u64,
    pub config: CampaignConfig,
}

impl CampaignSpec {
    /// Clips that are ranked: every clip not used by a gold pair.
    pub fn ranked_items(&self) -> Vec<String> {
        let gold: BTreeSet<&str> = self
            .gold
            .iter()
            .flat_map(|g| [g.key.left(), g.key.right()])
            .collect();
        self.clips
            .keys()
            .filter(|id| !gold.contains(id.as_str()))
            .cloned()
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.id.is_empty() || self.id.contains('/') {
            return Err(ServiceError::Invalid(format!(
                "bad campaign id {:?}",
                self.id
            )));
        }
        if self.gold.len() < self.config.quiz_size {
            return Err(ServiceError::Invalid(format!(
                "{} gold pairs, the quiz alone needs {}",
                self.gold.len(),
                self.config.quiz_size
            )));
        }
        let mut seen = BTreeSet::new();
        for g in &self.gold {
            if g.key.dimension() != self.dimension {
                return Err(ServiceError::Invalid(format!(
                    "gold pair {} is on another dimension",
                    g.key
                )));
            }
            if !g.key.contains(&g.winner) {
                return Err(ServiceError::Invalid(format!(
                    "gold winner {:?} not in {}",
                    g.winner, g.key
                )));
            }
            for id in [g.key.left(), g.key.right()] {
                if !self.clips.contains_key(id) {
                    return Err(ServiceError::Invalid(format!(
                        "gold clip {id:?} not in the manifest"
                    )));
                }
            }
            if !seen.insert(&g.key) {
                return Err(ServiceError::Invalid(format!(
                    "gold pair {} listed twice",
                    g.key
                )));
            }
        }
        if self.ranked_items().len() < 2 {
            return Err(ServiceError::Invalid(
                "fewer than two clips left to rank".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignStatus {
    Active,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub spec: CampaignSpec,
    pub ranking: RankingState,
    pub status: CampaignStatus,
}

impl Campaign {
    fn quiz(&self) -> &[GoldPair] {
        &self.spec.gold[..self.spec.config.quiz_size]
    }

    fn checks(&self) -> &[GoldPair] {
        &self.spec.gold[self.spec.config.quiz_size..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Quiz,
    Active,
    Blocked,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Quiz,
    Gold,
    Real,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub task_id: String,
    pub key: ComparisonKey,
    pub kind: TaskKind,
    pub expires_ms: u64,
}

impl Assignment {
    pub fn is_live(&self, now_ms: u64) -> bool {
        now_ms < self.expires_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub campaign: String,
    pub annotator: String,
    pub phase: Phase,
    pub quiz_answered: usize,
    pub quiz_correct: usize,
    /// Tasks answered since the quiz, gold checks included.
    pub tasks_answered: usize,
    pub checks_served: usize,
    pub current: Option<Assignment>,
    /// Sequence number of the event that blocked the session.
    pub blocked_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Opened {
        session: String,
        campaign: String,
        annotator: String,
    },
    Assigned {
        session: String,
        assignment: Assignment,
    },
    /// Answer to a quiz or gold task.
    Answered {
        session: String,
        task_id: String,
        winner: String,
    },
    Closed {
        session: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    CampaignCreated(CampaignSpec),
    SessionEvent(SessionEvent),
    Judgment {
        session: String,
        task_id: String,
        judgment: Judgment,
    },
    /// Consequence of the preceding judgment, kept for auditing.
    Resolution {
        campaign: String,
        resolution: Resolution,
    },
}

/// What `next_task` decided.
#[derive(Debug, Clone, PartialEq)]
pub enum NextDecision {
    /// The session already holds a live task.
    Current(Assignment),
    Assign(Assignment),
    /// Nothing can be handed out right now.
    Drained,
    /// The campaign is finished.
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SubmitOutcome {
    Continue,
    QuizPassed { correct: usize },
    QuizFailed { correct: usize },
    GoldFailed,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ServiceState {
    pub campaigns: BTreeMap<String, Campaign>,
    pub sessions: BTreeMap<String, Session>,
    /// Sequence number of the last applied event.
    pub last_seq: u64,
}

impl ServiceState {
    pub fn campaign(&self, id: &str) -> Result<&Campaign> {
        self.campaigns
            .get(id)
            .ok_or_else(|| ServiceError::NotFound(format!("campaign {id:?}")))
    }

    pub fn session(&self, id: &str) -> Result<&Session> {
        self.sessions
            .get(id)
            .ok_or_else(|| ServiceError::NotFound(format!("session {id:?}")))
    }

    fn live_leases<'a>(
        &'a self,
        campaign: &'a str,
        now_ms: u64,
    ) -> impl Iterator<Item = (&'a Session, &'a Assignment)> {
        self.sessions.values().filter_map(move |s| {
            let a = s.current.as_ref()?;
            (s.campaign == campaign && a.kind == TaskKind::Real && a.is_live(now_ms))
                .then_some((s, a))
        })
    }

    /// Leased comparison for `annotator`: the pending key closest to
    /// resolving, ties broken by key order.
    fn pick_comparison(
        &self,
        campaign: &Campaign,
        annotator: &str,
        now_ms: u64,
    ) -> Option<ComparisonKey> {
        let mut leases: BTreeMap<&ComparisonKey, (usize, bool)> = BTreeMap::new();
        for (s, a) in self.live_leases(&campaign.spec.id, now_ms) {
            let e = leases.entry(&a.key).or_default();
            e.0 += 1;
            e.1 |= s.annotator == annotator;
        }
        let votes_needed = mer_core::ranking::VOTES_PER_COMPARISON;
        campaign
            .ranking
            .pending_comparisons()
            .into_iter()
            .filter_map(|key| {
                let votes = campaign.ranking.judgments_for(&key);
                if votes.iter().any(|j| j.annotator == annotator) {
                    return None;
                }
                let (leased, mine) = leases.get(&key).copied().unwrap_or_default();
                let cap = campaign
                    .spec
                    .config
                    .max_leases
                    .min(votes_needed - votes.len());
                (!mine && leased < cap).then_some((votes.len(), key))
            })
            .max_by(|(va, ka), (vb, kb)| va.cmp(vb).then_with(|| kb.cmp(ka)))
            .map(|(_, key)| key)
    }

    /// Decides the next task for a session. `task_id` names a new assignment.
    pub fn decide_next(
        &self,
        session_id: &str,
        now_ms: u64,
        task_id: String,
    ) -> Result<NextDecision> {
        let session = self.session(session_id)?;
        let campaign = self.campaign(&session.campaign)?;
        match session.phase {
            Phase::Blocked => return Err(ServiceError::Blocked(session_id.to_string())),
            Phase::Done => return Ok(NextDecision::Done),
            _ => {}
        }
        if let Some(a) = &session.current {
            if a.is_live(now_ms) {
                return Ok(NextDecision::Current(a.clone()));
            }
        }
        let expires_ms = now_ms + campaign.spec.config.lease_ms;
        let assign = |key: ComparisonKey, kind| {
            Ok(NextDecision::Assign(Assignment {
                task_id,
                key,
                kind,
                expires_ms,
            }))
        };
        if session.phase == Phase::Quiz {
            return assign(
                campaign.quiz()[session.quiz_answered].key.clone(),
                TaskKind::Quiz,
            );
        }
        if campaign.status == CampaignStatus::Complete {
            return Ok(NextDecision::Done);
        }
        let checks = campaign.checks();
        if !checks.is_empty()
            && (session.tasks_answered + 1) % campaign.spec.config.gold_interval == 0
        {
            return assign(
                checks[session.checks_served % checks.len()].key.clone(),
                TaskKind::Gold,
            );
        }
        match self.pick_comparison(campaign, &session.annotator, now_ms) {
            Some(key) => assign(key, TaskKind::Real),
            None => Ok(NextDecision::Drained),
        }
    }

    /// Validates an answer and returns the event recording it.
    pub fn decide_submit(
        &self,
        session_id: &str,
        task_id: &str,
        winner: &str,
        now_ms: u64,
    ) -> Result<Event> {
        let session = self.session(session_id)?;
        let campaign = self.campaign(&session.campaign)?;
        match session.phase {
            Phase::Blocked => return Err(ServiceError::Blocked(session_id.to_string())),
            Phase::Done => {
                return Err(ServiceError::Conflict(format!(
                    "session {session_id:?} is finished"
                )))
            }
            _ => {}
        }
        let a = session
            .current
            .as_ref()
            .filter(|a| a.task_id == task_id)
            .ok_or_else(|| {
                ServiceError::Conflict(format!("session does not hold task {task_id:?}"))
            })?;
        if !a.is_live(now_ms) {
            return Err(ServiceError::LeaseExpired(task_id.to_string()));
        }
        if !a.key.contains(winner) {
            return Err(ServiceError::Invalid(format!(
                "{winner:?} is not part of task {task_id:?}"
            )));
        }
        if a.kind != TaskKind::Real {
            return Ok(Event::SessionEvent(SessionEvent::Answered {
                session: session_id.to_string(),
                task_id: task_id.to_string(),
                winner: winner.to_string(),
            }));
        }
        let ranking = &campaign.ranking;
        if !ranking.is_pending(&a.key)
            || ranking
                .judgments_for(&a.key)
                .iter()
                .any(|j| j.annotator == session.annotator)
        {
            return Err(ServiceError::Conflict(format!(
                "task {task_id:?} is no longer open"
            )));
        }
        Ok(Event::Judgment {
            session: session_id.to_string(),
            task_id: task_id.to_string(),
            judgment: Judgment {
                key: a.key.clone(),
                annotator: session.annotator.clone(),
                winner: winner.to_string(),
                timestamp_ms: now_ms,
            },
        })
    }

    /// Applies the event numbered `seq`. Returns the resolution a judgment
    /// caused, and the outcome for answers and judgments.
    pub fn apply(&mut self, seq: u64, event: &Event) -> Result<Applied> {
        if seq != self.last_seq + 1 {
            return Err(ServiceError::Replay(format!(
                "event {seq} follows {}",
                self.last_seq
            )));
        }
        let applied = self.apply_inner(seq, event)?;
        self.last_seq = seq;
        Ok(applied)
    }

    fn session_mut(&mut self, id: &str) -> Result<&mut Session> {
        self.sessions
            .get_mut(id)
            .ok_or_else(|| ServiceError::NotFound(format!("session {id:?}")))
    }

    fn apply_inner(&mut self, seq: u64, event: &Event) -> Result<Applied> {
        match event {
            Event::CampaignCreated(spec) => {
                if self.campaigns.contains_key(&spec.id) {
                    return Err(ServiceError::Conflict(format!(
                        "campaign {:?} already exists",
                        spec.id
                    )));
                }
                spec.validate()?;
                let ranking = RankingState::new(&spec.ranked_items(), spec.dimension, spec.seed)?;
                self.campaigns.insert(
                    spec.id.clone(),
                    Campaign {
                        spec: spec.clone(),
                        ranking,
                        status: CampaignStatus::Active,
                    },
                );
                Ok(Applied::default())
            }
            Event::SessionEvent(SessionEvent::Opened {
                session,
                campaign,
                annotator,
            }) => {
                self.campaign(campaign)?;
                if self.sessions.contains_key(session) {
                    return Err(ServiceError::Conflict(format!(
                        "session {session:?} already exists"
                    )));
                }
                self.sessions.insert(
                    session.clone(),
                    Session {
                        id: session.clone(),
                        campaign: campaign.clone(),
                        annotator: annotator.clone(),
                        phase: Phase::Quiz,
                        quiz_answered: 0,
                        quiz_correct: 0,
                        tasks_answered: 0,
                        checks_served: 0,
                        current: None,
                        blocked_at: None,
                    },
                );
                Ok(Applied::default())
            }
            Event::SessionEvent(SessionEvent::Assigned {
                session,
                assignment,
            }) => {
                self.session_mut(session)?.current = Some(assignment.clone());
                Ok(Applied::default())
            }
            Event::SessionEvent(SessionEvent::Closed { session }) => {
                self.session_mut(session)?.phase = Phase::Done;
                Ok(Applied::default())
            }
            Event::SessionEvent(SessionEvent::Answered {
                session,
                task_id,
                winner,
            }) => {
                let campaign_id = self.session(session)?.campaign.clone();
                let campaign = self.campaign(&campaign_id)?;
                let (quiz_size, pass_mark) = (
                    campaign.spec.config.quiz_size,
                    campaign.spec.config.quiz_pass_mark(),
                );
                let gold = campaign.spec.gold.clone();
                let s = self.session_mut(session)?;
                let a = take_task(s, task_id)?;
                let correct = gold.iter().any(|g| g.key == a.key && &g.winner == winner);
                let outcome = match a.kind {
                    TaskKind::Quiz => {
                        s.quiz_answered += 1;
                        s.quiz_correct += usize::from(correct);
                        if s.quiz_answered < quiz_size {
                            SubmitOutcome::Continue
                        } else if s.quiz_correct >= pass_mark {
                            s.phase = Phase::Active;
                            SubmitOutcome::QuizPassed {
                                correct: s.quiz_correct,
                            }
                        } else {
                            s.phase = Phase::Blocked;
                            s.blocked_at = Some(seq);
                            SubmitOutcome::QuizFailed {
                                correct: s.quiz_correct,
                            }
                        }
                    }
                    TaskKind::Gold if correct => {
                        s.tasks_answered += 1;
                        s.checks_served += 1;
                        SubmitOutcome::Continue
                    }
                    TaskKind::Gold => {
                        s.phase = Phase::Blocked;
                        s.blocked_at = Some(seq);
                        SubmitOutcome::GoldFailed
                    }
                    TaskKind::Real => {
                        return Err(ServiceError::Replay(format!(
                            "task {task_id:?} needs a judgment"
                        )));
                    }
                };
                Ok(Applied {
                    outcome: Some(outcome),
                    resolution: None,
                })
            }
            Event::Judgment {
                session,
                task_id,
                judgment,
            } => {
                let s = self.session(session)?;
                if s.annotator != judgment.annotator {
                    return Err(ServiceError::Replay(format!(
                        "judgment annotator differs from session {session:?}"
                    )));
                }
                let held = s
                    .current
                    .as_ref()
                    .filter(|a| &a.task_id == task_id && a.kind == TaskKind::Real);
                if held.map(|a| &a.key) != Some(&judgment.key) {
                    return Err(ServiceError::Replay(format!(
                        "session {session:?} does not hold {task_id:?}"
                    )));
                }
                let campaign_id = s.campaign.clone();
                let campaign = self
                    .campaigns
                    .get_mut(&campaign_id)
                    .expect("session campaign exists");
                let resolution = campaign.ranking.submit_judgment(judgment.clone())?;
                if campaign.ranking.is_complete() {
                    campaign.status = CampaignStatus::Complete;
                }
                let s = self.session_mut(session)?;
                s.current = None;
                s.tasks_answered += 1;
                Ok(Applied {
                    outcome: Some(SubmitOutcome::Continue),
                    resolution,
                })
            }
            Event::Resolution {
                campaign,
                resolution,
            } => {
                let c = self.campaign(campaign)?;
                let recorded = c
                    .ranking
                    .resolved()
                    .find(|(k, _)| *k == &resolution.key)
                    .map(|(_, w)| w);
                if recorded != Some(resolution.winner.as_str()) {
                    return Err(ServiceError::Replay(format!(
                        "logged resolution of {} disagrees with the ranking",
                        resolution.key
                    )));
                }
                Ok(Applied::default())
            }
        }
    }
}

fn take_task(s: &mut Session, task_id: &str) -> Result<Assignment> {
    match s.current.take() {
        Some(a) if a.task_id == task_id => Ok(a),
        other => {
            s.current = other;
            Err(ServiceError::Replay(format!(
                "session {:?} does not hold {task_id:?}",
                s.id
            )))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Applied {
    pub outcome: Option<SubmitOutcome>,
    pub resolution: Option<Resolution>,
}
