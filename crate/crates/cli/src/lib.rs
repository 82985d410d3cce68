//! Batch evaluation and export behind the `evalharness` and `facebreed`
//! binaries.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use facebreed_core::axes::AxisRegistry;
use facebreed_core::eval::{
    generate_lineup, recognition_rate, run_scripted_session, PolicyKind, ScriptedConstructorPolicy,
    Vote,
};
use facebreed_core::evolution::{EngineConfig, StartupProfile};
use facebreed_core::generator::{Generator, GeneratorDescriptor};
use facebreed_core::latent::{sample_standard, LatentVector, RandomStream};
use facebreed_core::session::{export_animation, Session, SessionSettings, WitnessType};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Seed of the synthetic generator used for scripted runs.
pub const HARNESS_GENERATOR_SEED: u64 = 7;

const TARGET_STREAM: u64 = 10_000;
const POLICY_STREAM: u64 = 20_000;

#[derive(Debug, Clone)]
pub struct ConvergenceOptions {
    pub seeds: u64,
    pub generations: usize,
    pub policy: PolicyKind,
    pub dim: usize,
    /// Also write each finished session and its hidden target here.
    pub sessions_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub seed: u64,
    pub generation: usize,
    pub best_distance: f64,
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub initial_distance: f64,
    pub final_distance: f64,
    pub composite_distance: f64,
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub policy: PolicyKind,
    pub seeds: u64,
    pub generations: usize,
    pub dim: usize,
    pub median_reduction: f64,
    pub mean_reduction: f64,
    pub runs: Vec<SeedResult>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<TraceRow>,
    pub summary: ConvergenceSummary,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Settings and axes of the scripted session for `seed`.
pub fn scripted_settings(seed: u64, dim: usize) -> Result<(SessionSettings, AxisRegistry)> {
    let descriptor = GeneratorDescriptor::synthetic(HARNESS_GENERATOR_SEED, dim);
    let generator = Generator::from_descriptor(&descriptor)?;
    let synthetic = generator.as_synthetic().expect("synthetic descriptor");
    let registry = AxisRegistry::new(dim, synthetic.feature_axes()?)?;
    let settings = SessionSettings {
        id: format!("seed{seed}"),
        seed,
        profile: StartupProfile::default(),
        generator: descriptor,
        engine: EngineConfig::default(),
        witness_type: WitnessType::Active,
    };
    Ok((settings, registry))
}

pub fn hidden_target(seed: u64, dim: usize) -> Result<LatentVector> {
    let mut rng = RandomStream::new(TARGET_STREAM + seed);
    Ok(sample_standard(&mut rng, dim)?)
}

fn policy_tag(kind: PolicyKind) -> &'static str {
    match kind {
        PolicyKind::GreedyLatentDistance => "greedy",
        PolicyKind::RandomBaseline => "random",
    }
}

/// Path of the hidden-target file stored next to a session file.
pub fn target_path(session: &Path) -> PathBuf {
    let stem = session.file_stem().and_then(|s| s.to_str()).unwrap_or("session");
    session.with_file_name(format!("{stem}.target.json"))
}

pub fn run_convergence(opts: &ConvergenceOptions) -> Result<ConvergenceReport> {
    if opts.seeds == 0 {
        bail!("need at least one seed");
    }
    let policy = match opts.policy {
        PolicyKind::GreedyLatentDistance => ScriptedConstructorPolicy::greedy(opts.generations),
        PolicyKind::RandomBaseline => ScriptedConstructorPolicy::random_baseline(opts.generations),
    };
    if let Some(dir) = &opts.sessions_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let per_seed: Vec<(Vec<TraceRow>, SeedResult)> = (0..opts.seeds)
        .into_par_iter()
        .map(|seed| -> Result<_> {
            let target = hidden_target(seed, opts.dim)?;
            let (mut settings, registry) = scripted_settings(seed, opts.dim)?;
            settings.id = format!("{}-seed{seed}", policy_tag(opts.policy));
            let mut rng = RandomStream::new(POLICY_STREAM + seed);
            let (run, mut session) = run_scripted_session(&policy, &target, settings, registry, &mut rng)?;
            let initial = run.trace[0];
            let rows = run
                .trace
                .iter()
                .enumerate()
                .map(|(generation, &d)| TraceRow {
                    seed,
                    generation,
                    best_distance: d,
                    reduction: 1.0 - d / initial,
                })
                .collect();
            let final_distance = *run.trace.last().expect("non-empty trace");
            if let Some(dir) = &opts.sessions_dir {
                let slot = session
                    .population()
                    .latents()
                    .position(|z| *z == run.composite)
                    .expect("composite is a slot");
                session.apply(facebreed_core::session::Action::Finish {
                    selected: vec![slot],
                    frames_per_segment: 2,
                })?;
                let path = dir.join(format!("{}.json", session.id()));
                session.save(&path)?;
                fs::write(target_path(&path), serde_json::to_string(&target)?)?;
            }
            Ok((
                rows,
                SeedResult {
                    seed,
                    initial_distance: initial,
                    final_distance,
                    composite_distance: run.composite.distance(&target)?,
                    reduction: 1.0 - final_distance / initial,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for (r, s) in per_seed {
        rows.extend(r);
        runs.push(s);
    }
    let reductions: Vec<f64> = runs.iter().map(|r| r.reduction).collect();
    Ok(ConvergenceReport {
        rows,
        summary: ConvergenceSummary {
            policy: opts.policy,
            seeds: opts.seeds,
            generations: opts.generations,
            dim: opts.dim,
            median_reduction: median(&reductions),
            mean_reduction: reductions.iter().sum::<f64>() / reductions.len() as f64,
            runs,
        },
    })
}

/// Summary path for a CSV report: `trace.csv` → `trace.summary.json`.
pub fn summary_path(report: &Path) -> PathBuf {
    let stem = report.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    report.with_file_name(format!("{stem}.summary.json"))
}

/// Writes the per-generation CSV to `report` and the summary next to it.
pub fn write_convergence_report(report: &ConvergenceReport, path: &Path) -> Result<PathBuf> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    let summary = summary_path(path);
    fs::write(&summary, serde_json::to_string_pretty(&report.summary)?)
        .with_context(|| format!("writing {}", summary.display()))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineupTrial {
    pub session: String,
    pub trial: usize,
    pub target_index: usize,
    pub chosen: usize,
    pub correct: bool,
    pub permutation: Vec<usize>,
    /// Latent distance from the composite to each candidate, in lineup order.
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineupReport {
    pub sigma: f64,
    pub trials: Vec<LineupTrial>,
    pub recognition_rate: f64,
}

fn read_latent(path: &Path) -> Result<LatentVector> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Judges each finished session's composite against `trials` lineups built
/// around its target. Without `target`, each session's sibling
/// `<stem>.target.json` is used.
pub fn run_lineups(
    sessions: &[PathBuf],
    target: Option<&Path>,
    sigma: f64,
    trials: usize,
    seed: u64,
) -> Result<LineupReport> {
    if sigma.is_nan() || sigma <= 0.0 {
        bail!("sigma must be positive");
    }
    let explicit = target.map(read_latent).transpose()?;
    let mut out = Vec::new();
    let mut votes = Vec::new();
    let mut rng = RandomStream::new(seed);
    for path in sessions {
        let session = Session::load(path).with_context(|| format!("loading {}", path.display()))?;
        let composite = session
            .finish_record()
            .map(|f| f.composite.clone())
            .with_context(|| format!("{} is not finished", path.display()))?;
        let target = match &explicit {
            Some(t) => t.clone(),
            None => read_latent(&target_path(path))?,
        };
        for trial in 0..trials {
            let lineup = generate_lineup(&target, sigma, &mut rng)?;
            let vote: Vote = lineup.vote(&composite)?;
            out.push(LineupTrial {
                session: session.id().to_string(),
                trial,
                target_index: lineup.target_index,
                chosen: vote.chosen,
                correct: vote.is_correct(),
                permutation: lineup.permutation.clone(),
                distances: lineup
                    .candidates
                    .iter()
                    .map(|c| c.distance(&composite))
                    .collect::<Result<_, _>>()?,
            });
            votes.push(vote);
        }
    }
    Ok(LineupReport {
        sigma,
        recognition_rate: recognition_rate(&votes)?,
        trials: out,
    })
}

/// Renders a finished session to `out`: `merged.png`, the frames and, for
/// several selections, `animation.gif`.
pub fn export_session(session: &Path, frames: usize, out: &Path, frame_delay_ms: u32) -> Result<Vec<PathBuf>> {
    let session = Session::load(session).with_context(|| format!("loading {}", session.display()))?;
    let finish = session
        .finish_record()
        .context("session is not finished; finish it before exporting")?;
    let generator = Generator::from_descriptor(&session.settings().generator)?;
    let bundle = export_animation(&finish.latents, frames, &generator)?;
    Ok(bundle.write_to_dir(out, frame_delay_ms)?)
}

/// Writes the synthetic generator's feature axes as an axis file.
pub fn write_synthetic_axes(seed: u64, dim: usize, out: &Path) -> Result<()> {
    let generator = Generator::from_descriptor(&GeneratorDescriptor::synthetic(seed, dim))?;
    let synthetic = generator.as_synthetic().expect("synthetic descriptor");
    AxisRegistry::new(dim, synthetic.feature_axes()?)?.save(out)?;
    Ok(())
}
