use std::sync::Arc;

use facebreed_core::axes::Effective;
use facebreed_core::evolution::{EngineConfig, SlotStatus, StartupProfile};
use facebreed_core::generator::{Generator, GeneratorDescriptor};
use facebreed_core::session::{animation_latents, Session, SessionStatus, WitnessType};
use serde::{Deserialize, Serialize};

use crate::state::ImageStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotView {
    pub index: usize,
    pub status: SlotStatus,
    pub image_key: String,
    pub image_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureView {
    pub name: String,
    pub locked: bool,
    /// Unlocked but inside the span of the locked axes.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingsView {
    pub seed: u64,
    pub profile: StartupProfile,
    pub generator: GeneratorDescriptor,
    pub engine: EngineConfig,
    pub witness_type: WitnessType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinishView {
    pub selected: Vec<usize>,
    pub frames_per_segment: usize,
    pub composite_key: String,
    pub composite_url: String,
    pub frame_urls: Vec<String>,
    pub animation_url: String,
}

/// What a client sees of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub generation: u64,
    pub status: SessionStatus,
    pub slots: Vec<SlotView>,
    pub locks: Vec<String>,
    pub features: Vec<FeatureView>,
    pub presets: Vec<String>,
    pub actions: usize,
    pub settings: SettingsView,
    pub finish: Option<FinishView>,
}

pub fn image_url(key: &str) -> String {
    format!("/images/{key}")
}

/// Builds the view, registering every referenced image with the store.
/// Returns the keys that must be renderable for the view to be served.
pub(crate) fn session_view(
    session: &Session,
    generator: &Arc<Generator>,
    images: &ImageStore,
) -> facebreed_core::Result<(SessionView, Vec<String>)> {
    let descriptor = &session.settings().generator;
    let mut keys = Vec::new();
    let slots = session
        .population()
        .slots
        .iter()
        .enumerate()
        .map(|(index, slot)| {
            let key = images.register(generator, descriptor, &slot.latent);
            keys.push(key.clone());
            SlotView {
                index,
                status: slot.status,
                image_url: image_url(&key),
                image_key: key,
            }
        })
        .collect();
    let registry = session.registry();
    let features = registry
        .names()
        .map(|name| FeatureView {
            name: name.to_string(),
            locked: registry.is_locked(name),
            degenerate: registry
                .effective_states()
                .any(|(n, e)| n == name && *e == Effective::Degenerate),
        })
        .collect();
    let finish = match session.finish_record() {
        Some(f) => {
            let composite_key = images.register(generator, descriptor, &f.composite);
            keys.push(composite_key.clone());
            let frame_urls = animation_latents(&f.latents, f.frames_per_segment)?
                .iter()
                .map(|z| {
                    let key = images.register(generator, descriptor, z);
                    keys.push(key.clone());
                    image_url(&key)
                })
                .collect();
            Some(FinishView {
                selected: f.selected.clone(),
                frames_per_segment: f.frames_per_segment,
                composite_url: image_url(&composite_key),
                composite_key,
                frame_urls,
                animation_url: format!("/sessions/{}/animation.gif", session.id()),
            })
        }
        None => None,
    };
    let settings = session.settings();
    let view = SessionView {
        id: session.id().to_string(),
        generation: session.population().generation,
        status: session.status(),
        slots,
        locks: registry.locked().to_vec(),
        features,
        presets: session.presets().keys().cloned().collect(),
        actions: session.actions().len(),
        settings: SettingsView {
            seed: settings.seed,
            profile: settings.profile,
            generator: settings.generator.clone(),
            engine: settings.engine,
            witness_type: settings.witness_type,
        },
        finish,
    };
    Ok((view, keys))
}
