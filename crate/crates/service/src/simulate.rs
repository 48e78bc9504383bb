//! Simulated campaigns: a synthetic clip set with a known order, and
//! annotators that answer from that order.

use std::collections::BTreeMap;
use std::path::Path;

use mer_core::corpus::{self, ClipRecord, Corpus, CorpusManifest, SampleFormat};
use mer_core::ranking::Dimension;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::clock::ManualClock;
use crate::service::{campaign_spec, GoldInput, Service, TaskResponse};
use crate::state::{CampaignConfig, CampaignSpec};
use crate::{Result, ServiceError};

#[derive(Debug, Clone)]
pub struct SimCorpus {
    pub manifest: CorpusManifest,
    pub gold: Vec<GoldInput>,
    /// True value of every clip; higher wins.
    pub values: BTreeMap<String, u64>,
    /// Ranked clips, highest value first.
    pub truth: Vec<String>,
}

pub fn item_id(i: usize) -> String {
    format!("clip{i:04}")
}

/// `items` ranked clips plus `2 · gold_pairs` gold clips with a seeded
/// hidden order. When `audio_dir` is given, a short silent WAV is written for
/// every clip and the manifest points at it.
pub fn synth_corpus(
    items: usize,
    gold_pairs: usize,
    seed: u64,
    audio_dir: Option<&Path>,
) -> Result<SimCorpus> {
    let mut rng = mer_core::rng::stream(seed, &[0x53494d]);
    let ids: Vec<String> = (0..items)
        .map(item_id)
        .chain((0..2 * gold_pairs).map(|i| format!("gold{i:02}")))
        .collect();
    let mut ranks: Vec<u64> = (0..ids.len() as u64).collect();
    ranks.shuffle(&mut rng);
    let values: BTreeMap<String, u64> = ids.iter().cloned().zip(ranks).collect();

    let mut manifest = CorpusManifest::new(Corpus::Custom);
    let silence = vec![0.0; 441];
    for id in &ids {
        let path = match audio_dir {
            Some(dir) => {
                let p = dir.join(format!("{id}.wav"));
                corpus::write_wav(
                    &p,
                    &silence,
                    corpus::REQUIRED_SAMPLE_RATE,
                    1,
                    SampleFormat::Int16,
                )?;
                p
            }
            None => format!("{id}.wav").into(),
        };
        manifest.push(ClipRecord {
            id: id.clone(),
            corpus: Corpus::Custom,
            path,
            duration_s: 0.01,
            sample_rate: corpus::REQUIRED_SAMPLE_RATE,
            channels: 1,
            valence: None,
            arousal: None,
        })?;
    }
    let gold = (0..gold_pairs)
        .map(|i| {
            let (a, b) = (format!("gold{:02}", 2 * i), format!("gold{:02}", 2 * i + 1));
            let winner = if values[&a] > values[&b] {
                a.clone()
            } else {
                b.clone()
            };
            GoldInput {
                left: a,
                right: b,
                winner,
            }
        })
        .collect();
    let mut truth: Vec<String> = ids[..items].to_vec();
    truth.sort_by_key(|id| std::cmp::Reverse(values[id]));
    Ok(SimCorpus {
        manifest,
        gold,
        values,
        truth,
    })
}

impl SimCorpus {
    pub fn spec(
        &self,
        id: &str,
        dimension: Dimension,
        seed: u64,
        config: CampaignConfig,
    ) -> Result<CampaignSpec> {
        campaign_spec(
            id,
            &self.manifest,
            Path::new(""),
            dimension,
            &self.gold,
            seed,
            config,
        )
    }

    pub fn is_gold_clip(&self, id: &str) -> bool {
        self.gold.iter().any(|g| g.left == id || g.right == id)
    }
}

#[derive(Debug, Clone)]
struct SimAnnotator {
    name: String,
    session: Option<String>,
    finished: bool,
}

/// Round-robin annotators driving a [`Service`] in process. Each step is one
/// request by one annotator, after which the clock moves on by `step_ms`.
pub struct Driver {
    annotators: Vec<SimAnnotator>,
    turn: usize,
    values: BTreeMap<String, u64>,
    gold_clips: Vec<String>,
    /// Probability of reporting the wrong winner on a ranked comparison.
    noise: f64,
    rng: ChaCha8Rng,
    clock: ManualClock,
    step_ms: u64,
    pub steps: usize,
}

impl Driver {
    pub fn new(
        corpus: &SimCorpus,
        annotators: usize,
        noise: f64,
        seed: u64,
        clock: ManualClock,
    ) -> Self {
        let gold_clips = corpus
            .gold
            .iter()
            .flat_map(|g| [g.left.clone(), g.right.clone()])
            .collect();
        Self {
            annotators: (0..annotators)
                .map(|i| SimAnnotator {
                    name: format!("annotator{i:02}"),
                    session: None,
                    finished: false,
                })
                .collect(),
            turn: 0,
            values: corpus.values.clone(),
            gold_clips,
            noise,
            rng: mer_core::rng::stream(seed, &[0x445256]),
            clock,
            step_ms: 1_000,
            steps: 0,
        }
    }

    pub fn finished(&self) -> bool {
        self.annotators.iter().all(|a| a.finished)
    }

    /// One request by the next unfinished annotator.
    pub fn step(&mut self, svc: &Service, campaign: &str) -> Result<()> {
        let n = self.annotators.len();
        let Some(i) = (0..n)
            .map(|k| (self.turn + k) % n)
            .find(|&i| !self.annotators[i].finished)
        else {
            return Ok(());
        };
        self.turn = (i + 1) % n;
        self.steps += 1;
        self.clock.advance(self.step_ms);
        let Some(session) = self.annotators[i].session.clone() else {
            let info = svc.open_session(campaign, &self.annotators[i].name)?;
            self.annotators[i].session = Some(info.session_id);
            return Ok(());
        };
        match svc.next_task(&session) {
            Ok(TaskResponse::Task { task_id, clips, .. }) => {
                let (a, b) = (&clips[0].id, &clips[1].id);
                let (win, lose) = if self.values[a] > self.values[b] {
                    (a, b)
                } else {
                    (b, a)
                };
                let checked = self.gold_clips.contains(a);
                let pick = if !checked && self.rng.random::<f64>() < self.noise {
                    lose
                } else {
                    win
                };
                svc.submit(&session, &task_id, pick)?;
            }
            Ok(TaskResponse::Drained) => {}
            Ok(TaskResponse::Done) | Err(ServiceError::Blocked(_)) => {
                self.annotators[i].finished = true
            }
            Err(e) => return Err(e),
        }
        Ok(())
    }

    /// Steps until every annotator is finished or `max_steps` more steps ran.
    pub fn run(&mut self, svc: &Service, campaign: &str, max_steps: usize) -> Result<()> {
        for _ in 0..max_steps {
            if self.finished() {
                return Ok(());
            }
            self.step(svc, campaign)?;
        }
        Ok(())
    }
}
