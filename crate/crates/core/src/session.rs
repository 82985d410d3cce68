//! Sessions, exports and multi-witness merging.
//!
//! A [`Session`] is an append-only log of user actions over a seeded
//! engine. Everything else it stores (the current population, generation
//! history, lock history) is derivable by replaying that log from the seed,
//! and [`Session::replay`] does exactly that. Images are never persisted;
//! latents are the source of truth and frames are re-rendered on demand.

use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::axes::{AxisFile, AxisRegistry};
use crate::error::{Error, Result};
use crate::evolution::{
    edit_feature, initialize_population, randomize_free, step_generation, EditDirection,
    EngineConfig, MutationSettings, Population, StartupProfile,
};
use crate::generator::{Generator, GeneratorDescriptor, ImageBuffer};
use crate::latent::{average, interpolate, weighted_average, LatentVector, RandomState, RandomStream};

pub const SESSION_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WitnessType {
    Active,
    Passive,
    #[default]
    Inactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Open,
    Finished,
}

/// One user action. The log of these, replayed from the seed, reproduces
/// the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Step {
        selected: Vec<usize>,
        locked: Vec<usize>,
        settings: MutationSettings,
    },
    Randomize {
        selected: Vec<usize>,
        locked: Vec<usize>,
    },
    /// Replaces the feature lock set, in acquisition order.
    SetLocks { features: Vec<String> },
    Edit {
        slot: usize,
        feature: String,
        direction: EditDirection,
        step: f64,
    },
    SavePreset { name: String, slot: usize },
    LoadPreset { name: String, slot: usize },
    Finish {
        selected: Vec<usize>,
        frames_per_segment: usize,
    },
}

/// Snapshot recorded after every step or randomize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub action_index: usize,
    pub settings: Option<MutationSettings>,
    pub population: Population,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockRecord {
    pub action_index: usize,
    pub locked: Vec<String>,
}

/// What `finish` produced: the chosen latents and their merged composite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinishRecord {
    pub selected: Vec<usize>,
    pub latents: Vec<LatentVector>,
    pub frames_per_segment: usize,
    pub composite: LatentVector,
}

/// Parameters fixed at session creation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSettings {
    pub id: String,
    pub seed: u64,
    pub profile: StartupProfile,
    pub generator: GeneratorDescriptor,
    pub engine: EngineConfig,
    pub witness_type: WitnessType,
}

/// On-disk form of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFile {
    pub version: u32,
    pub id: String,
    pub seed: u64,
    pub dim: usize,
    pub profile: StartupProfile,
    pub generator: GeneratorDescriptor,
    pub engine: EngineConfig,
    pub witness_type: WitnessType,
    pub status: SessionStatus,
    pub axes: AxisFile,
    pub actions: Vec<Action>,
    pub history: Vec<GenerationRecord>,
    pub lock_history: Vec<LockRecord>,
    pub presets: IndexMap<String, LatentVector>,
    pub population: Population,
    pub finish: Option<FinishRecord>,
    pub rng: RandomState,
}

#[derive(Debug, Clone)]
pub struct Session {
    settings: SessionSettings,
    base_registry: AxisRegistry,
    registry: AxisRegistry,
    rng: RandomStream,
    status: SessionStatus,
    actions: Vec<Action>,
    history: Vec<GenerationRecord>,
    lock_history: Vec<LockRecord>,
    presets: IndexMap<String, LatentVector>,
    population: Population,
    finish: Option<FinishRecord>,
}

impl Session {
    /// Starts a session: seeds the stream and samples the first nine faces.
    pub fn new(settings: SessionSettings, axes: AxisRegistry) -> Result<Self> {
        if settings.generator.dim != axes.dim() {
            return Err(Error::DimensionMismatch {
                expected: axes.dim(),
                found: settings.generator.dim,
            });
        }
        let base_registry = axes.set_locks::<&str>(&[])?;
        let mut rng = RandomStream::new(settings.seed);
        let population = initialize_population(&settings.profile, &base_registry, &settings.engine, &mut rng)?;
        Ok(Self {
            history: vec![GenerationRecord {
                action_index: 0,
                settings: None,
                population: population.clone(),
            }],
            registry: base_registry.clone(),
            base_registry,
            rng,
            status: SessionStatus::Open,
            actions: Vec::new(),
            lock_history: Vec::new(),
            presets: IndexMap::new(),
            population,
            finish: None,
            settings,
        })
    }

    pub fn id(&self) -> &str {
        &self.settings.id
    }

    pub fn settings(&self) -> &SessionSettings {
        &self.settings
    }

    pub fn seed(&self) -> u64 {
        self.settings.seed
    }

    pub fn dim(&self) -> usize {
        self.base_registry.dim()
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn registry(&self) -> &AxisRegistry {
        &self.registry
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn history(&self) -> &[GenerationRecord] {
        &self.history
    }

    pub fn lock_history(&self) -> &[LockRecord] {
        &self.lock_history
    }

    pub fn presets(&self) -> &IndexMap<String, LatentVector> {
        &self.presets
    }

    pub fn finish_record(&self) -> Option<&FinishRecord> {
        self.finish.as_ref()
    }

    pub fn rng_state(&self) -> RandomState {
        self.rng.state()
    }

    pub fn witness_type(&self) -> WitnessType {
        self.settings.witness_type
    }

    /// Applies one action. On error nothing changes.
    pub fn apply(&mut self, action: Action) -> Result<()> {
        if self.status == SessionStatus::Finished {
            return Err(Error::SessionFinished);
        }
        let index = self.actions.len();
        let mut rng = self.rng.clone();
        let config = self.settings.engine;
        let mut population = self.population.clone();
        let mut registry = None;
        let mut record = None;
        let mut preset = None;
        let mut finish = None;

        match &action {
            Action::Step {
                selected,
                locked,
                settings,
            } => {
                let marked = population.with_marks(selected, locked)?;
                population = step_generation(&marked, settings, &self.registry, &config, &mut rng)?;
                record = Some(Some(*settings));
            }
            Action::Randomize { selected, locked } => {
                let marked = population.with_marks(selected, locked)?;
                let mut next = randomize_free(&marked, &self.settings.profile, &self.registry, &config, &mut rng)?;
                for slot in &mut next.slots {
                    if slot.status != crate::evolution::SlotStatus::Locked {
                        slot.status = crate::evolution::SlotStatus::Free;
                    }
                }
                population = next;
                record = Some(None);
            }
            Action::SetLocks { features } => {
                registry = Some(self.registry.set_locks(features)?);
            }
            Action::Edit {
                slot,
                feature,
                direction,
                step,
            } => {
                let target = population.slots.get_mut(*slot).ok_or(Error::InvalidSlot(*slot))?;
                target.latent = edit_feature(&target.latent, feature, *direction, *step, &self.registry, &config)?;
            }
            Action::SavePreset { name, slot } => {
                let latent = population.slots.get(*slot).ok_or(Error::InvalidSlot(*slot))?.latent.clone();
                preset = Some((name.clone(), latent));
            }
            Action::LoadPreset { name, slot } => {
                let latent = self
                    .presets
                    .get(name)
                    .ok_or_else(|| Error::Validation(format!("no preset named '{name}'")))?
                    .clone();
                population.slots.get_mut(*slot).ok_or(Error::InvalidSlot(*slot))?.latent = latent;
            }
            Action::Finish {
                selected,
                frames_per_segment,
            } => {
                if selected.is_empty() {
                    return Err(Error::EmptySelection);
                }
                if selected.len() >= 2 && *frames_per_segment < 2 {
                    return Err(Error::Validation(
                        "animations need at least 2 frames per segment".into(),
                    ));
                }
                let latents = selected
                    .iter()
                    .map(|&i| population.slots.get(i).map(|s| s.latent.clone()).ok_or(Error::InvalidSlot(i)))
                    .collect::<Result<Vec<_>>>()?;
                finish = Some(FinishRecord {
                    selected: selected.clone(),
                    composite: average(&latents)?,
                    latents,
                    frames_per_segment: *frames_per_segment,
                });
            }
        }

        self.rng = rng;
        self.population = population;
        if let Some(r) = registry {
            self.lock_history.push(LockRecord {
                action_index: index,
                locked: r.locked().to_vec(),
            });
            self.registry = r;
        }
        if let Some(settings) = record {
            self.history.push(GenerationRecord {
                action_index: index,
                settings,
                population: self.population.clone(),
            });
        }
        if let Some((name, latent)) = preset {
            self.presets.insert(name, latent);
        }
        if let Some(f) = finish {
            self.finish = Some(f);
            self.status = SessionStatus::Finished;
        }
        self.actions.push(action);
        Ok(())
    }

    /// Rebuilds the session from its seed and action log.
    pub fn replay(&self) -> Result<Session> {
        let mut fresh = Session::new(self.settings.clone(), self.base_registry.clone())?;
        for action in &self.actions {
            fresh.apply(action.clone())?;
        }
        Ok(fresh)
    }

    /// Renders the finished session's export bundle.
    pub fn export(&self, generator: &Generator) -> Result<ExportBundle> {
        let finish = self
            .finish
            .as_ref()
            .ok_or_else(|| Error::Validation("session has not been finished".into()))?;
        export_animation(&finish.latents, finish.frames_per_segment, generator)
    }

    pub fn to_file(&self) -> SessionFile {
        SessionFile {
            version: SESSION_FILE_VERSION,
            id: self.settings.id.clone(),
            seed: self.settings.seed,
            dim: self.dim(),
            profile: self.settings.profile,
            generator: self.settings.generator.clone(),
            engine: self.settings.engine,
            witness_type: self.settings.witness_type,
            status: self.status,
            axes: self.base_registry.to_file(),
            actions: self.actions.clone(),
            history: self.history.clone(),
            lock_history: self.lock_history.clone(),
            presets: self.presets.clone(),
            population: self.population.clone(),
            finish: self.finish.clone(),
            rng: self.rng.state(),
        }
    }

    pub fn from_file(file: SessionFile) -> Result<Self> {
        if file.version != SESSION_FILE_VERSION {
            return Err(Error::UnsupportedVersion {
                found: file.version,
                supported: SESSION_FILE_VERSION,
            });
        }
        let base_registry = AxisRegistry::from_file(&file.axes)?;
        if base_registry.dim() != file.dim || file.generator.dim != file.dim {
            return Err(Error::DimensionMismatch {
                expected: file.dim,
                found: base_registry.dim(),
            });
        }
        let registry = match file.lock_history.last() {
            Some(rec) => base_registry.set_locks(&rec.locked)?,
            None => base_registry.clone(),
        };
        for z in file.population.latents() {
            z.check_dim(file.dim)?;
        }
        let mut last = None;
        for rec in &file.history {
            if let Some(prev) = last {
                if rec.population.generation <= prev {
                    return Err(Error::Validation(
                        "generation indices must be strictly increasing".into(),
                    ));
                }
            }
            last = Some(rec.population.generation);
        }
        if file.rng.seed != file.seed {
            return Err(Error::Validation("random stream seed does not match session seed".into()));
        }
        Ok(Self {
            settings: SessionSettings {
                id: file.id,
                seed: file.seed,
                profile: file.profile,
                generator: file.generator,
                engine: file.engine,
                witness_type: file.witness_type,
            },
            base_registry,
            registry,
            rng: RandomStream::from_state(file.rng),
            status: file.status,
            actions: file.actions,
            history: file.history,
            lock_history: file.lock_history,
            presets: file.presets,
            population: file.population,
            finish: file.finish,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SessionFile = serde_json::from_str(text)?;
        Self::from_file(file)
    }

    /// Writes to a sibling temp file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        let tmp = temp_sibling(path);
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Rendered result of finishing a session.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportBundle {
    pub selected: Vec<LatentVector>,
    pub frames: Vec<ImageBuffer>,
    pub merged: ImageBuffer,
}

impl ExportBundle {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Writes `merged.png`, one `frame_NNN.png` per frame and, for more than
    /// one frame, `animation.gif`. Returns the written paths.
    pub fn write_to_dir(&self, dir: &Path, frame_delay_ms: u32) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let merged = dir.join("merged.png");
        fs::write(&merged, self.merged.to_png()?).map_err(|e| Error::io(&merged, e))?;
        written.push(merged);
        for (i, frame) in self.frames.iter().enumerate() {
            let p = dir.join(format!("frame_{i:03}.png"));
            fs::write(&p, frame.to_png()?).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
        if self.frames.len() > 1 {
            let p = dir.join("animation.gif");
            fs::write(&p, self.to_gif(frame_delay_ms)?).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
        Ok(written)
    }

    /// Looping animated GIF of the frames.
    pub fn to_gif(&self, frame_delay_ms: u32) -> Result<Vec<u8>> {
        use image::codecs::gif::{GifEncoder, Repeat};
        let mut out = Vec::new();
        {
            let mut enc = GifEncoder::new(&mut out);
            enc.set_repeat(Repeat::Infinite)?;
            for f in &self.frames {
                let frame = image::Frame::from_parts(
                    f.to_rgba_image(),
                    0,
                    0,
                    image::Delay::from_numer_denom_ms(frame_delay_ms, 1),
                );
                enc.encode_frame(frame)?;
            }
        }
        Ok(out)
    }
}

/// Keyframe latents of the piecewise-linear animation through `selected`,
/// with uniform spacing. Consecutive segments share their keyframe, so `n`
/// latents give `(n - 1)·(frames_per_segment - 1) + 1` frames; a single
/// latent gives one.
pub fn animation_latents(selected: &[LatentVector], frames_per_segment: usize) -> Result<Vec<LatentVector>> {
    let first = selected.first().ok_or(Error::EmptySelection)?;
    if selected.len() == 1 {
        return Ok(vec![first.clone()]);
    }
    if frames_per_segment < 2 {
        return Err(Error::Validation(
            "animations need at least 2 frames per segment".into(),
        ));
    }
    let mut frames = vec![first.clone()];
    for pair in selected.windows(2) {
        for k in 1..frames_per_segment {
            let t = k as f64 / (frames_per_segment - 1) as f64;
            frames.push(interpolate(&pair[0], &pair[1], t)?);
        }
    }
    Ok(frames)
}

/// Renders [`animation_latents`]. The merged still renders the mean of all
/// latents.
pub fn export_animation(
    selected: &[LatentVector],
    frames_per_segment: usize,
    generator: &Generator,
) -> Result<ExportBundle> {
    let latents = animation_latents(selected, frames_per_segment)?;
    let merged = generator.generate(&average(selected)?)?;
    let frames = latents
        .iter()
        .map(|z| generator.generate(z))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExportBundle {
        selected: selected.to_vec(),
        frames,
        merged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Simple,
    Weighted,
}

/// Per-witness-type merge weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessWeights {
    pub active: f64,
    pub passive: f64,
    pub inactive: f64,
}

impl Default for WitnessWeights {
    fn default() -> Self {
        Self {
            active: 3.0,
            passive: 2.0,
            inactive: 1.0,
        }
    }
}

impl WitnessWeights {
    pub fn weight(&self, witness: WitnessType) -> f64 {
        match witness {
            WitnessType::Active => self.active,
            WitnessType::Passive => self.passive,
            WitnessType::Inactive => self.inactive,
        }
    }
}

/// Combines several witnesses' composites into one latent.
pub fn merge_witness_sessions(
    composites: &[(LatentVector, WitnessType)],
    weighting: Weighting,
    weights: &WitnessWeights,
) -> Result<LatentVector> {
    if composites.is_empty() {
        return Err(Error::EmptySelection);
    }
    if composites.len() < 2 {
        return Err(Error::Validation("merging needs at least two composites".into()));
    }
    let latents: Vec<LatentVector> = composites.iter().map(|(z, _)| z.clone()).collect();
    match weighting {
        Weighting::Simple => average(&latents),
        Weighting::Weighted => {
            let w: Vec<f64> = composites.iter().map(|(_, t)| weights.weight(*t)).collect();
            weighted_average(&latents, &w)
        }
    }
}

/// Merges finished sessions using their composite latents.
pub fn merge_sessions(sessions: &[Session], weighting: Weighting, weights: &WitnessWeights) -> Result<LatentVector> {
    let composites = sessions
        .iter()
        .map(|s| {
            let f = s.finish_record().ok_or_else(|| {
                Error::Validation(format!("session '{}' is not finished", s.id()))
            })?;
            Ok((f.composite.clone(), s.witness_type()))
        })
        .collect::<Result<Vec<_>>>()?;
    merge_witness_sessions(&composites, weighting, weights)
}
