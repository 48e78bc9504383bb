use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use mer_core::ranking::Dimension;
use mer_service::simulate::{synth_corpus, Driver, SimCorpus};
use mer_service::store::{self, LOG_FILE};
use mer_service::{CampaignConfig, ExportKind, ManualClock, Service, ServiceOptions};
use rand::{Rng, SeedableRng};

const CAMPAIGN: &str = "kill";

fn open(dir: &Path, clock: &ManualClock) -> Service {
    Service::open(
        dir,
        Arc::new(clock.clone()),
        ServiceOptions { snapshot_every: 64 },
    )
    .unwrap()
}

fn exports(svc: &Service) -> BTreeMap<&'static str, String> {
    ExportKind::ALL
        .into_iter()
        .map(|k| (k.as_str(), svc.export(CAMPAIGN, k).unwrap()))
        .collect()
}

/// Runs a full campaign. With `kill_at`, the service is dropped after that
/// many driver steps, a half-written record is left at the end of the log,
/// and a fresh service is opened on the same directory.
fn campaign(
    corpus: &SimCorpus,
    seed: u64,
    kill_at: Option<usize>,
) -> BTreeMap<&'static str, String> {
    let dir = tempfile::tempdir().unwrap();
    let clock = ManualClock::new(1_000_000);
    let mut svc = open(dir.path(), &clock);
    svc.create_campaign(
        corpus
            .spec(
                CAMPAIGN,
                Dimension::Arousal,
                seed,
                CampaignConfig::default(),
            )
            .unwrap(),
    )
    .unwrap();
    let mut driver = Driver::new(corpus, 5, 0.1, seed, clock.clone());
    if let Some(k) = kill_at {
        driver.run(&svc, CAMPAIGN, k).unwrap();
        let before = svc.state();
        drop(svc);
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(dir.path().join(LOG_FILE))
            .unwrap();
        f.write_all(b"{\"seq\":999999,\"kind\":\"judg").unwrap();
        drop(f);
        svc = open(dir.path(), &clock);
        assert_eq!(
            svc.state(),
            before,
            "replay differs from the state before the kill"
        );
    }
    driver.run(&svc, CAMPAIGN, 200_000).unwrap();
    assert!(driver.finished());
    // the snapshot path and the log-only path agree
    assert_eq!(store::replay_log(dir.path()).unwrap(), svc.state());
    drop(svc);
    let reopened = open(dir.path(), &clock);
    let out = exports(&reopened);
    assert_eq!(out, exports(&reopened), "exports are not repeatable");
    out
}

#[test]
fn kill_and_replay_reproduces_exports() {
    for seed in 0..10u64 {
        let corpus = synth_corpus(40, 7, seed, None).unwrap();
        let clean = campaign(&corpus, seed, None);
        let kill_at = rand_chacha::ChaCha8Rng::seed_from_u64(seed).random_range(20..600);
        let killed = campaign(&corpus, seed, Some(kill_at));
        assert_eq!(clean, killed, "seed {seed}, killed after {kill_at} steps");
        assert_eq!(clean["rankings"].lines().count(), 41);
    }
}

#[test]
fn export_before_completion() {
    let dir = tempfile::tempdir().unwrap();
    let clock = ManualClock::new(0);
    let svc = open(dir.path(), &clock);
    let corpus = synth_corpus(20, 5, 1, None).unwrap();
    svc.create_campaign(
        corpus
            .spec(CAMPAIGN, Dimension::Valence, 1, CampaignConfig::default())
            .unwrap(),
    )
    .unwrap();
    let mut driver = Driver::new(&corpus, 3, 0.0, 1, clock);
    driver.run(&svc, CAMPAIGN, 40).unwrap();
    assert!(svc.export(CAMPAIGN, ExportKind::Rankings).is_err());
    assert!(svc.export(CAMPAIGN, ExportKind::Ratings).is_err());
    assert!(svc.export(CAMPAIGN, ExportKind::Reliability).is_ok());
    assert!(svc.export(CAMPAIGN, ExportKind::Judgments).is_ok());
    let p = svc.progress(CAMPAIGN).unwrap();
    assert!(!p.complete);
    assert_eq!(p.items, 20);
}

#[test]
fn duplicate_campaign_is_rejected_and_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let clock = ManualClock::new(0);
    let corpus = synth_corpus(10, 5, 2, None).unwrap();
    let spec = corpus
        .spec(CAMPAIGN, Dimension::Arousal, 2, CampaignConfig::default())
        .unwrap();
    {
        let svc = open(dir.path(), &clock);
        svc.create_campaign(spec.clone()).unwrap();
        assert!(svc.create_campaign(spec.clone()).is_err());
    }
    let svc = open(dir.path(), &clock);
    assert!(svc.create_campaign(spec).is_err());
    assert_eq!(svc.progress(CAMPAIGN).unwrap().pending, 9);
}
