//! Campaign exports and progress, computed from state alone so that two
//! exports of the same state are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::str::FromStr;

use mer_core::ranking::{self, Judgment};
use serde::Serialize;

use crate::state::{Campaign, Phase, ServiceState};
use crate::{Result, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    /// `rank,clip_id,rating`
    Rankings,
    /// `clip_id,<dimension>` in clip order
    Ratings,
    /// Agreement statistics as JSON
    Reliability,
    /// One JSON judgment per line, in comparison order
    Judgments,
}

impl ExportKind {
    pub const ALL: [ExportKind; 4] = [
        Self::Rankings,
        Self::Ratings,
        Self::Reliability,
        Self::Judgments,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rankings => "rankings",
            Self::Ratings => "ratings",
            Self::Reliability => "reliability",
            Self::Judgments => "judgments",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Self::Rankings => "rankings.csv",
            Self::Ratings => "ratings.csv",
            Self::Reliability => "reliability.json",
            Self::Judgments => "judgments.jsonl",
        }
    }

    pub fn content_type(self) -> &'static str {
        match self {
            Self::Rankings | Self::Ratings => "text/csv",
            Self::Reliability => "application/json",
            Self::Judgments => "application/x-ndjson",
        }
    }
}

impl FromStr for ExportKind {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ServiceError::NotFound(format!("export {s:?}")))
    }
}

fn final_order(c: &Campaign) -> Result<Vec<String>> {
    c.ranking.final_ranking().map_err(|_| {
        ServiceError::Conflict(format!(
            "campaign {:?} is incomplete: {} of {} clips placed",
            c.spec.id,
            c.ranking.placed_count(),
            c.ranking.items().len()
        ))
    })
}

/// Judgments of resolved comparisons only; gold answers are never judgments.
fn resolved_judgments(c: &Campaign) -> Vec<&Judgment> {
    c.ranking
        .resolved()
        .flat_map(|(k, _)| c.ranking.judgments_for(k))
        .collect()
}

pub fn export(state: &ServiceState, campaign: &str, kind: ExportKind) -> Result<String> {
    let c = state.campaign(campaign)?;
    match kind {
        ExportKind::Rankings => Ok(ranking::ranking_csv(&final_order(c)?)),
        ExportKind::Ratings => {
            let order = final_order(c)?;
            let n = order.len();
            let mut ratings = BTreeMap::new();
            for (i, id) in order.iter().enumerate() {
                ratings.insert(id.as_str(), ranking::rank_to_rating(i + 1, n)?);
            }
            let mut out = format!("clip_id,{}\n", c.spec.dimension);
            for (id, r) in ratings {
                writeln!(out, "{id},{r}").expect("string write");
            }
            Ok(out)
        }
        ExportKind::Reliability => {
            let report = ranking::reliability(resolved_judgments(c))?;
            Ok(serde_json::to_string_pretty(&report)
                .map_err(|e| ServiceError::Internal(e.to_string()))?
                + "\n")
        }
        ExportKind::Judgments => {
            let mut out = String::new();
            for j in c.ranking.all_judgments() {
                out.push_str(
                    &serde_json::to_string(j).map_err(|e| ServiceError::Internal(e.to_string()))?,
                );
                out.push('\n');
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Progress {
    pub campaign: String,
    pub dimension: String,
    pub items: usize,
    pub placed: usize,
    pub resolved: usize,
    pub pending: usize,
    pub complete: bool,
    pub sessions: BTreeMap<String, usize>,
}

pub fn progress(state: &ServiceState, campaign: &str) -> Result<Progress> {
    let c = state.campaign(campaign)?;
    let mut sessions = BTreeMap::new();
    for s in state.sessions.values().filter(|s| s.campaign == campaign) {
        let name = match s.phase {
            Phase::Quiz => "quiz",
            Phase::Active => "active",
            Phase::Blocked => "blocked",
            Phase::Done => "done",
        };
        *sessions.entry(name.to_string()).or_insert(0) += 1;
    }
    Ok(Progress {
        campaign: campaign.to_string(),
        dimension: c.spec.dimension.to_string(),
        items: c.ranking.items().len(),
        placed: c.ranking.placed_count(),
        resolved: c.ranking.resolved_count(),
        pending: c.ranking.pending_comparisons().len(),
        complete: c.ranking.is_complete(),
        sessions,
    })
}
