//! Desk-scale evaluation: lineups, recognition rate, similarity scores and
//! scripted constructors that stand in for human users.
//!
//! The scripted constructors drive a real [`Session`], so every run is a
//! replayable action log. The greedy policy sees the hidden target only
//! through a distance oracle; the random baseline sees nothing.

use serde::{Deserialize, Serialize};

use crate::axes::AxisRegistry;
use crate::error::{Error, Result};
use crate::evolution::{MutationMode, MutationSettings};
use crate::latent::{add_gaussian_noise, LatentVector, RandomStream};
use crate::session::{Action, Session, SessionSettings};

pub const LINEUP_VARIANTS: usize = 4;
pub const LINEUP_SIZE: usize = LINEUP_VARIANTS + 1;
pub const DEFAULT_LINEUP_SIGMA: f64 = 3.0;
pub const SCREENING_ATTEMPTS: usize = 100;

/// A target face hidden among noisy variants of itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineup {
    pub target: LatentVector,
    /// Shuffled candidates: the target plus four variants.
    pub candidates: Vec<LatentVector>,
    /// `permutation[i]` is the unshuffled index of candidate `i`; the
    /// unshuffled order is target first, then variants.
    pub permutation: Vec<usize>,
    pub target_index: usize,
    pub composite: Option<LatentVector>,
}

/// Variants closer to the target than this are resampled.
pub fn screening_distance(dim: usize) -> f64 {
    0.5 * DEFAULT_LINEUP_SIGMA * (dim as f64).sqrt()
}

/// Builds a lineup of the target plus four `N(0, sigma²I)` variants, each
/// at least [`screening_distance`] from the target.
pub fn generate_lineup(target: &LatentVector, sigma: f64, rng: &mut RandomStream) -> Result<Lineup> {
    let min_distance = screening_distance(target.dim());
    let mut unshuffled = vec![target.clone()];
    for _ in 0..LINEUP_VARIANTS {
        let mut accepted = None;
        for _ in 0..SCREENING_ATTEMPTS {
            let v = add_gaussian_noise(target, sigma, rng)?;
            if v.distance(target)? >= min_distance {
                accepted = Some(v);
                break;
            }
        }
        unshuffled.push(accepted.ok_or(Error::ScreeningFailure(SCREENING_ATTEMPTS))?);
    }
    let mut permutation: Vec<usize> = (0..LINEUP_SIZE).collect();
    rng.shuffle(&mut permutation);
    let candidates = permutation.iter().map(|&i| unshuffled[i].clone()).collect();
    let target_index = permutation.iter().position(|&i| i == 0).expect("target present");
    Ok(Lineup {
        target: target.clone(),
        candidates,
        permutation,
        target_index,
        composite: None,
    })
}

impl Lineup {
    /// Candidate indices ordered by latent distance to the composite,
    /// nearest first. This is the synthetic evaluator.
    pub fn rank(&self, composite: &LatentVector) -> Result<Vec<usize>> {
        let mut scored = self
            .candidates
            .iter()
            .enumerate()
            .map(|(i, c)| Ok((i, c.distance(composite)?)))
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        Ok(scored.into_iter().map(|(i, _)| i).collect())
    }

    pub fn vote(&self, composite: &LatentVector) -> Result<Vote> {
        Ok(Vote {
            chosen: self.rank(composite)?[0],
            target: self.target_index,
        })
    }
}

/// A rank-1 choice on one lineup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub chosen: usize,
    pub target: usize,
}

impl Vote {
    pub fn is_correct(&self) -> bool {
        self.chosen == self.target
    }
}

/// Percentage of votes naming the true target first.
pub fn recognition_rate(votes: &[Vote]) -> Result<f64> {
    if votes.is_empty() {
        return Err(Error::NoVotes);
    }
    let correct = votes.iter().filter(|v| v.is_correct()).count();
    Ok((100 * correct) as f64 / votes.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionResult {
    pub votes: Vec<Vote>,
    pub rate: f64,
}

impl RecognitionResult {
    pub fn from_votes(votes: Vec<Vote>) -> Result<Self> {
        let rate = recognition_rate(&votes)?;
        Ok(Self { votes, rate })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySummary {
    pub mean: f64,
    /// Counts for `[0,10), [10,20), …, [90,100]`.
    pub histogram: [usize; 10],
}

pub fn similarity_summary(scores: &[f64]) -> Result<SimilaritySummary> {
    if scores.is_empty() {
        return Err(Error::Validation("no similarity scores".into()));
    }
    let mut histogram = [0usize; 10];
    for &s in scores {
        if !(0.0..=100.0).contains(&s) {
            return Err(Error::Validation(format!("similarity score {s} outside [0, 100]")));
        }
        histogram[((s / 10.0) as usize).min(9)] += 1;
    }
    Ok(SimilaritySummary {
        mean: scores.iter().sum::<f64>() / scores.len() as f64,
        histogram,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    GreedyLatentDistance,
    RandomBaseline,
}

/// When the greedy constructor locks its incumbent best slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LockSchedule {
    Never,
    /// Lock the best slot on every `n`-th generation, starting with the first.
    Every(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedConstructorPolicy {
    pub kind: PolicyKind,
    pub generations: usize,
    pub lock_schedule: LockSchedule,
    /// Random-changes amount is `gain · best_distance / dim`, clamped to
    /// `[0.01, 1]`.
    pub amount_gain: f64,
}

impl ScriptedConstructorPolicy {
    pub fn greedy(generations: usize) -> Self {
        Self {
            kind: PolicyKind::GreedyLatentDistance,
            generations,
            lock_schedule: LockSchedule::Every(5),
            amount_gain: 3.0,
        }
    }

    pub fn random_baseline(generations: usize) -> Self {
        Self {
            kind: PolicyKind::RandomBaseline,
            generations,
            lock_schedule: LockSchedule::Never,
            amount_gain: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedRun {
    pub composite: LatentVector,
    /// Best slot distance to the target: initial population first, then
    /// one entry per generation.
    pub trace: Vec<f64>,
    pub session: SessionSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub actions: usize,
    pub generation: u64,
}

fn distances(session: &Session, target: &LatentVector) -> Result<Vec<f64>> {
    session.population().latents().map(|z| z.distance(target)).collect()
}

fn ranked(d: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    order
}

/// Runs a scripted constructor against a hidden target inside a real
/// session. `rng` drives only the policy's own choices.
pub fn run_scripted_session(
    policy: &ScriptedConstructorPolicy,
    hidden_target: &LatentVector,
    settings: SessionSettings,
    axes: AxisRegistry,
    rng: &mut RandomStream,
) -> Result<(ScriptedRun, Session)> {
    if policy.generations == 0 {
        return Err(Error::Validation("generation budget must be at least 1".into()));
    }
    let mut session = Session::new(settings, axes)?;
    hidden_target.check_dim(session.dim())?;
    let dim = session.dim() as f64;
    let best = |d: &[f64]| d.iter().copied().fold(f64::INFINITY, f64::min);
    let mut trace = vec![best(&distances(&session, hidden_target)?)];

    for g in 0..policy.generations {
        let d = distances(&session, hidden_target)?;
        let action = match policy.kind {
            PolicyKind::GreedyLatentDistance => {
                let order = ranked(&d);
                let lock_now = match policy.lock_schedule {
                    LockSchedule::Never => false,
                    LockSchedule::Every(n) => n > 0 && g % n as usize == 0,
                };
                let (selected, locked) = if lock_now {
                    (vec![order[1], order[2]], vec![order[0]])
                } else {
                    (vec![order[0], order[1]], vec![])
                };
                let amount = (policy.amount_gain * d[order[0]] / dim).clamp(0.01, 1.0);
                Action::Step {
                    selected,
                    locked,
                    settings: MutationSettings::new(MutationMode::RandomChanges, amount)?,
                }
            }
            PolicyKind::RandomBaseline => Action::Randomize {
                selected: vec![],
                locked: vec![],
            },
        };
        session.apply(action)?;
        trace.push(best(&distances(&session, hidden_target)?));
    }

    let d = distances(&session, hidden_target)?;
    let pick = match policy.kind {
        PolicyKind::GreedyLatentDistance => ranked(&d)[0],
        PolicyKind::RandomBaseline => rng.index(d.len()),
    };
    let composite = session.population().slots[pick].latent.clone();
    Ok((
        ScriptedRun {
            composite,
            trace,
            session: SessionSummary {
                actions: session.actions().len(),
                generation: session.population().generation,
            },
        },
        session,
    ))
}
