//! The interactive breeding loop.
//!
//! A [`Population`] is an immutable snapshot of nine slots. Each step keeps
//! locked and selected slots, writes the crossover (mean of the selected
//! latents) into the first free slot and fills the remaining free slots with
//! mutated offspring. Feature-mode mutations and manual edits move only along
//! effective axes, so locked projections stay put.

use serde::{Deserialize, Serialize};

use crate::axes::AxisRegistry;
use crate::error::{Error, Result};
use crate::generator::{image_key, GeneratorDescriptor};
use crate::latent::{add_gaussian_noise, average, sample_standard, LatentVector, RandomStream};

pub const POPULATION_SIZE: usize = 9;

/// Offset along the gender/age axis applied at initialization.
pub const PROFILE_SHIFT: f64 = 2.0;

/// Latent units per unit of mutation amount.
pub const STEP_SCALE: f64 = 0.05;

/// Per-component noise sigma per unit of amount in random-changes mode.
pub const RANDOM_SIGMA_PER_AMOUNT: f64 = 0.4;

/// Full-strength single-feature step count.
pub const MAGNITUDE_BASE: f64 = 20.0;

pub const GENDER_AXIS: &str = "gender";
pub const AGE_AXIS: &str = "age";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotStatus {
    Free,
    Selected,
    Locked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub latent: LatentVector,
    pub status: SlotStatus,
}

impl Individual {
    pub fn free(latent: LatentVector) -> Self {
        Self {
            latent,
            status: SlotStatus::Free,
        }
    }

    pub fn image_key(&self, descriptor: &GeneratorDescriptor) -> String {
        image_key(descriptor, &self.latent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub slots: Vec<Individual>,
    pub generation: u64,
}

impl Population {
    pub fn latents(&self) -> impl Iterator<Item = &LatentVector> {
        self.slots.iter().map(|s| &s.latent)
    }

    pub fn indices_with(&self, status: SlotStatus) -> Vec<usize> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.status == status)
            .map(|(i, _)| i)
            .collect()
    }

    /// Returns a copy with the given slots marked; every other slot is Free.
    pub fn with_marks(&self, selected: &[usize], locked: &[usize]) -> Result<Population> {
        let mut next = self.clone();
        for slot in &mut next.slots {
            slot.status = SlotStatus::Free;
        }
        for &i in selected.iter().chain(locked) {
            if i >= next.slots.len() {
                return Err(Error::InvalidSlot(i));
            }
        }
        if let Some(&i) = selected.iter().find(|i| locked.contains(i)) {
            return Err(Error::Validation(format!(
                "slot {i} cannot be both selected and locked"
            )));
        }
        for &i in selected {
            next.slots[i].status = SlotStatus::Selected;
        }
        for &i in locked {
            next.slots[i].status = SlotStatus::Locked;
        }
        Ok(next)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MutationMode {
    RandomChanges,
    OneUnlockedFeature,
    EveryUnlockedFeature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationSettings {
    pub mode: MutationMode,
    pub amount: f64,
}

impl MutationSettings {
    pub fn new(mode: MutationMode, amount: f64) -> Result<Self> {
        check_amount(amount)?;
        Ok(Self { mode, amount })
    }
}

fn check_amount(amount: f64) -> Result<()> {
    if !(amount > 0.0 && amount <= 1.0) {
        return Err(Error::OutOfRange {
            what: "changes amount",
            value: amount,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    #[default]
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Age {
    Young,
    Old,
    #[default]
    Unspecified,
}

/// Start-up panel choices. Axis orientation: `gender` points toward male,
/// `age` toward old.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StartupProfile {
    #[serde(default)]
    pub gender: Gender,
    #[serde(default)]
    pub age: Age,
}

/// Tunable engine constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub population_size: usize,
    pub step_scale: f64,
    pub random_sigma_per_amount: f64,
    pub profile_shift: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            population_size: POPULATION_SIZE,
            step_scale: STEP_SCALE,
            random_sigma_per_amount: RANDOM_SIGMA_PER_AMOUNT,
            profile_shift: PROFILE_SHIFT,
        }
    }
}

/// Mean and spread of the per-feature mutation magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnitudeParameters {
    pub features_factor: f64,
    pub mu: f64,
    pub sigma: f64,
}

/// `F = 1` for one-feature mode, `min(max(1, 0.8·n), 8)` for every-feature
/// mode; `μ = 20·amount/F`, `σ = μ/3`.
pub fn magnitude_parameters(mode: MutationMode, amount: f64, unlocked_count: usize) -> Result<MagnitudeParameters> {
    check_amount(amount)?;
    let features_factor = match mode {
        MutationMode::OneUnlockedFeature => 1.0,
        MutationMode::EveryUnlockedFeature => {
            if unlocked_count == 0 {
                return Err(Error::NoUnlockedFeatures);
            }
            (0.8 * unlocked_count as f64).clamp(1.0, 8.0)
        }
        MutationMode::RandomChanges => {
            return Err(Error::Unsupported(
                "random changes are driven by a noise sigma, not feature amounts",
            ))
        }
    };
    let mu = MAGNITUDE_BASE * amount / features_factor;
    Ok(MagnitudeParameters {
        features_factor,
        mu,
        sigma: mu / 3.0,
    })
}

/// Truncated, randomly signed magnitude draw.
fn signed_magnitude(params: &MagnitudeParameters, rng: &mut RandomStream) -> f64 {
    let magnitude = rng.normal(params.mu, params.sigma).max(0.0);
    magnitude * rng.sign()
}

pub fn mutate(
    parent: &LatentVector,
    settings: &MutationSettings,
    registry: &AxisRegistry,
    config: &EngineConfig,
    rng: &mut RandomStream,
) -> Result<LatentVector> {
    check_amount(settings.amount)?;
    match settings.mode {
        MutationMode::RandomChanges => add_gaussian_noise(
            parent,
            config.random_sigma_per_amount * settings.amount,
            rng,
        ),
        MutationMode::OneUnlockedFeature => {
            parent.check_dim(registry.dim())?;
            let available: Vec<&[f64]> = registry.available().map(|(_, d)| d).collect();
            if available.is_empty() {
                return Err(Error::NoUnlockedFeatures);
            }
            let params = magnitude_parameters(settings.mode, settings.amount, available.len())?;
            let axis = available[rng.index(available.len())];
            let step = signed_magnitude(&params, rng);
            parent.add_scaled(axis, config.step_scale * step)
        }
        MutationMode::EveryUnlockedFeature => {
            parent.check_dim(registry.dim())?;
            let available: Vec<&[f64]> = registry.available().map(|(_, d)| d).collect();
            let params = magnitude_parameters(settings.mode, settings.amount, available.len())?;
            let mut child = parent.clone();
            for axis in available {
                let step = signed_magnitude(&params, rng);
                child = child.add_scaled(axis, config.step_scale * step)?;
            }
            Ok(child)
        }
    }
}

fn profile_offset<'a>(
    profile: &StartupProfile,
    registry: &'a AxisRegistry,
    shift: f64,
) -> Result<Vec<(&'a [f64], f64)>> {
    let mut offsets = Vec::new();
    let sign = match profile.gender {
        Gender::Male => Some(1.0),
        Gender::Female => Some(-1.0),
        Gender::Unspecified => None,
    };
    if let Some(s) = sign {
        offsets.push((axis_or_config_error(registry, GENDER_AXIS)?, s * shift));
    }
    let sign = match profile.age {
        Age::Old => Some(1.0),
        Age::Young => Some(-1.0),
        Age::Unspecified => None,
    };
    if let Some(s) = sign {
        offsets.push((axis_or_config_error(registry, AGE_AXIS)?, s * shift));
    }
    Ok(offsets)
}

fn axis_or_config_error<'a>(registry: &'a AxisRegistry, name: &str) -> Result<&'a [f64]> {
    registry
        .axis(name)
        .map(|a| a.direction().as_slice())
        .map_err(|_| Error::Configuration(format!("profile needs a '{name}' axis")))
}

fn fresh_latent(
    offsets: &[(&[f64], f64)],
    dim: usize,
    rng: &mut RandomStream,
) -> Result<LatentVector> {
    let mut z = sample_standard(rng, dim)?;
    for (axis, c) in offsets {
        z = z.add_scaled(axis, *c)?;
    }
    Ok(z)
}

/// Nine standard-normal latents shifted toward the chosen gender and age.
pub fn initialize_population(
    profile: &StartupProfile,
    registry: &AxisRegistry,
    config: &EngineConfig,
    rng: &mut RandomStream,
) -> Result<Population> {
    let offsets = profile_offset(profile, registry, config.profile_shift)?;
    let slots = (0..config.population_size)
        .map(|_| fresh_latent(&offsets, registry.dim(), rng).map(Individual::free))
        .collect::<Result<Vec<_>>>()?;
    Ok(Population {
        slots,
        generation: 0,
    })
}

/// Advances one generation. Statuses on `pop` are the user's marks.
pub fn step_generation(
    pop: &Population,
    settings: &MutationSettings,
    registry: &AxisRegistry,
    config: &EngineConfig,
    rng: &mut RandomStream,
) -> Result<Population> {
    check_amount(settings.amount)?;
    let parents: Vec<&LatentVector> = pop
        .slots
        .iter()
        .filter(|s| s.status == SlotStatus::Selected)
        .map(|s| &s.latent)
        .collect();
    let crossover = if parents.is_empty() {
        None
    } else {
        Some(average(&parents.iter().map(|p| (*p).clone()).collect::<Vec<_>>())?)
    };

    let mut crossover_placed = false;
    let mut slots = Vec::with_capacity(pop.slots.len());
    for slot in &pop.slots {
        let next = match slot.status {
            SlotStatus::Locked => slot.clone(),
            SlotStatus::Selected => Individual::free(slot.latent.clone()),
            SlotStatus::Free => match &crossover {
                Some(child) if !crossover_placed => {
                    crossover_placed = true;
                    Individual::free(child.clone())
                }
                Some(_) => {
                    let parent = parents[rng.index(parents.len())];
                    Individual::free(mutate(parent, settings, registry, config, rng)?)
                }
                None => Individual::free(mutate(&slot.latent, settings, registry, config, rng)?),
            },
        };
        slots.push(next);
    }
    Ok(Population {
        slots,
        generation: pop.generation + 1,
    })
}

/// Replaces Free slots with fresh profile-conditioned samples.
pub fn randomize_free(
    pop: &Population,
    profile: &StartupProfile,
    registry: &AxisRegistry,
    config: &EngineConfig,
    rng: &mut RandomStream,
) -> Result<Population> {
    let offsets = profile_offset(profile, registry, config.profile_shift)?;
    let slots = pop
        .slots
        .iter()
        .map(|slot| match slot.status {
            SlotStatus::Free => fresh_latent(&offsets, registry.dim(), rng).map(Individual::free),
            _ => Ok(slot.clone()),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Population {
        slots,
        generation: pop.generation + 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditDirection {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl EditDirection {
    fn sign(self) -> f64 {
        match self {
            EditDirection::Plus => 1.0,
            EditDirection::Minus => -1.0,
        }
    }
}

/// Deterministic move of `±κ·20·step` along the feature's effective axis.
pub fn edit_feature(
    latent: &LatentVector,
    feature: &str,
    direction: EditDirection,
    step: f64,
    registry: &AxisRegistry,
    config: &EngineConfig,
) -> Result<LatentVector> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::OutOfRange {
            what: "edit step",
            value: step,
        });
    }
    let axis = registry.effective(feature)?;
    latent.add_scaled(axis, direction.sign() * config.step_scale * MAGNITUDE_BASE * step)
}
