//! Simulated campaigns, the HTTP server, and exports from an event log.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use mer_core::corpus;
use mer_core::ranking::Dimension;
use mer_service::simulate::{synth_corpus, Driver};
use mer_service::{
    export, http, store, CampaignConfig, ExportKind, ManualClock, Service, ServiceOptions,
    SystemClock,
};

use crate::config::Settings;

pub const LOG_DIR: &str = "log";
pub const TRUTH_FILE: &str = "truth.csv";

pub struct SimulateArgs {
    pub items: usize,
    pub noise: f64,
    pub annotators: usize,
    pub gold_pairs: usize,
    pub campaign: String,
}

/// Upper bound on driver steps, far above what any finishing campaign needs.
fn step_budget(items: usize, annotators: usize) -> usize {
    200 * (items + 10) * (items + 10) * annotators.max(1)
}

/// Runs a whole campaign in process with simulated annotators. Writes the
/// synthetic clips, their manifest, the true order and the service log under
/// `out`.
pub fn simulate(s: &Settings, args: &SimulateArgs) -> Result<()> {
    let seed: u64 = s.require("seed")?;
    let dimension = s.get_or("dimension", Dimension::Arousal)?;
    let out = s.path("out")?;
    if !(0.0..=1.0).contains(&args.noise) {
        bail!("--noise {} must lie in [0, 1]", args.noise);
    }
    if args.items < 2 || args.annotators < 3 {
        bail!("need at least 2 clips and 3 annotators");
    }
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let out = std::fs::canonicalize(&out)?;
    let log_dir = out.join(LOG_DIR);
    if log_dir.join(store::LOG_FILE).exists() {
        bail!("{} already holds an event log", log_dir.display());
    }
    let audio = out.join("audio");
    std::fs::create_dir_all(&audio)?;
    let sim = synth_corpus(args.items, args.gold_pairs, seed, Some(&audio))?;
    corpus::write_manifest(&sim.manifest, &out.join(crate::data::MANIFEST_FILE))?;
    let mut truth = String::from("rank,clip_id\n");
    for (i, id) in sim.truth.iter().enumerate() {
        truth.push_str(&format!("{},{id}\n", i + 1));
    }
    std::fs::write(out.join(TRUTH_FILE), truth)?;

    let clock = ManualClock::new(0);
    let svc = Service::open(&log_dir, Arc::new(clock.clone()), service_options(s)?)?;
    svc.create_campaign(sim.spec(&args.campaign, dimension, seed, CampaignConfig::default())?)?;
    let mut driver = Driver::new(&sim, args.annotators, args.noise, seed, clock);
    driver.run(
        &svc,
        &args.campaign,
        step_budget(args.items, args.annotators),
    )?;
    let progress = svc.progress(&args.campaign)?;
    if !driver.finished() || !progress.complete {
        bail!(
            "campaign did not finish within the step budget ({} steps)",
            driver.steps
        );
    }
    svc.snapshot()?;
    println!(
        "campaign {} complete: {} clips, {} resolved comparisons, {} requests; log in {}",
        args.campaign,
        progress.items,
        progress.resolved,
        driver.steps,
        log_dir.display()
    );
    Ok(())
}

fn service_options(s: &Settings) -> Result<ServiceOptions> {
    Ok(ServiceOptions {
        snapshot_every: s.get_or(
            "service.snapshot_every",
            ServiceOptions::default().snapshot_every,
        )?,
    })
}

/// Serves the HTTP API until interrupted, then writes a final snapshot.
pub fn serve(s: &Settings) -> Result<()> {
    let log_dir = s.path("log")?;
    let addr: String = s.get_or("service.addr", "127.0.0.1:8080".to_string())?;
    let svc = Arc::new(Service::open(
        &log_dir,
        Arc::new(SystemClock),
        service_options(s)?,
    )?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        log::info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, http::router(svc.clone()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
                log::info!("shutting down");
            })
            .await?;
        anyhow::Ok(())
    })?;
    svc.snapshot()?;
    Ok(())
}

/// Replays the log read-only and writes the requested exports. With no
/// explicit kinds, exports that need a complete campaign are skipped while
/// it is still running.
pub fn export_campaign(s: &Settings, campaign: &str, kinds: &[ExportKind]) -> Result<Vec<PathBuf>> {
    let log_dir = s.path("log")?;
    let out = s.path("out")?;
    let state =
        store::replay_log(&log_dir).with_context(|| format!("replaying {}", log_dir.display()))?;
    let progress = export::progress(&state, campaign)?;
    let explicit = !kinds.is_empty();
    let kinds = if explicit {
        kinds.to_vec()
    } else {
        ExportKind::ALL.to_vec()
    };
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = Vec::new();
    for kind in kinds {
        let needs_complete = matches!(kind, ExportKind::Rankings | ExportKind::Ratings);
        if needs_complete && !progress.complete && !explicit {
            log::warn!(
                "skipping {}: campaign {campaign} has placed {} of {} clips",
                kind.as_str(),
                progress.placed,
                progress.items
            );
            continue;
        }
        let body = export::export(&state, campaign, kind)?;
        let path = out.join(kind.file_name());
        write(&path, &body)?;
        written.push(path);
    }
    for p in &written {
        println!("{}", p.display());
    }
    Ok(written)
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}
