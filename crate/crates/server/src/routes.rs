use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{middleware, Json, Router};
use facebreed_core::evolution::{EditDirection, MutationMode, MutationSettings, StartupProfile};
use facebreed_core::generator::GeneratorDescriptor;
use facebreed_core::latent::LatentVector;
use facebreed_core::session::{
    merge_sessions, Action, Session, SessionFile, SessionSettings, Weighting, WitnessType,
    WitnessWeights,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::idempotency;
use crate::state::{AppState, SharedEntry};
use crate::view::{image_url, session_view, SessionView};

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/step", post(step))
        .route("/sessions/{id}/randomize", post(randomize))
        .route("/sessions/{id}/edit", post(edit))
        .route("/sessions/{id}/locks", post(locks))
        .route("/sessions/{id}/presets/save", post(save_preset))
        .route("/sessions/{id}/presets/load", post(load_preset))
        .route("/sessions/{id}/finish", post(finish))
        .route("/sessions/{id}/file", get(session_file))
        .route("/sessions/{id}/animation.gif", get(animation))
        .route("/sessions/{id}/debug/latents", get(debug_latents))
        .route("/images/{key}", get(image))
        .route("/merge", post(merge))
        .route("/features", get(features))
        .layer(middleware::from_fn_with_state(state.clone(), idempotency::middleware))
        .with_state(state)
}

/// JSON body extractor reporting the offending field on failure. An empty
/// body reads as `{}`.
pub struct JsonBody<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        let text: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) {
            b"{}"
        } else {
            &bytes
        };
        let de = &mut serde_json::Deserializer::from_slice(text);
        serde_path_to_error::deserialize(de).map(JsonBody).map_err(|e| {
            let field = e.path().to_string();
            let err = ApiError::bad_request(format!("{}: {}", field, e.inner()));
            if field == "." {
                err
            } else {
                err.with_field(field)
            }
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    #[serde(default)]
    profile: StartupProfile,
    seed: Option<u64>,
    generator: Option<GeneratorDescriptor>,
    #[serde(default = "default_witness")]
    witness_type: WitnessType,
}

fn default_witness() -> WitnessType {
    WitnessType::Passive
}

fn fresh_id(state: &AppState) -> String {
    loop {
        let id = format!("{:016x}", rand::random::<u64>());
        if !state.contains(&id) {
            return id;
        }
    }
}

async fn respond(state: &AppState, entry: &crate::state::SessionEntry) -> Result<SessionView, ApiError> {
    let (view, keys) = session_view(&entry.session, &entry.generator, state.images())?;
    state.images().render(&keys).await?;
    Ok(view)
}

async fn create_session(
    State(state): State<AppState>,
    JsonBody(req): JsonBody<CreateRequest>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let (generator, axes) = state.backend_for(req.generator.as_ref())?;
    let settings = SessionSettings {
        id: fresh_id(&state),
        seed: req.seed.unwrap_or_else(rand::random),
        profile: req.profile,
        generator: generator.descriptor(),
        engine: Default::default(),
        witness_type: req.witness_type,
    };
    let session = Session::new(settings, axes)?;
    let entry = crate::state::SessionEntry { session, generator };
    let view = respond(&state, &entry).await?;
    state.persist(&entry.session).await?;
    state.insert(entry.session, entry.generator);
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionView>, ApiError> {
    let entry = state.session(&id).await?;
    let guard = entry.lock().await;
    Ok(Json(respond(&state, &guard).await?))
}

/// Applies `actions` to a copy of the session and commits only if every
/// action succeeds and the resulting images render.
async fn mutate(
    state: &AppState,
    id: &str,
    actions: impl FnOnce(&Session) -> Result<Vec<Action>, ApiError>,
) -> Result<Json<SessionView>, ApiError> {
    let entry: SharedEntry = state.session(id).await?;
    let mut guard = entry.lock().await;
    let mut next = guard.session.clone();
    for action in actions(&next)? {
        next.apply(action)?;
    }
    let (view, keys) = session_view(&next, &guard.generator, state.images())?;
    state.images().render(&keys).await?;
    state.persist(&next).await?;
    guard.session = next;
    Ok(Json(view))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepRequest {
    #[serde(default)]
    selected: Vec<usize>,
    #[serde(default)]
    locked: Vec<usize>,
    mode: MutationMode,
    amount: f64,
}

async fn step(
    State(state): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<StepRequest>,
) -> Result<Json<SessionView>, ApiError> {
    mutate(&state, &id, |_| {
        Ok(vec![Action::Step {
            selected: req.selected,
            locked: req.locked,
            settings: MutationSettings::new(req.mode, req.amount)?,
        }])
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomizeRequest {
    #[serde(default)]
    selected: Vec<usize>,
    #[serde(default)]
    locked: Vec<usize>,
}

async fn randomize(
    State(state): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<RandomizeRequest>,
) -> Result<Json<SessionView>, ApiError> {
    mutate(&state, &id, |_| {
        Ok(vec![Action::Randomize {
            selected: req.selected,
            locked: req.locked,
        }])
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EditRequest {
    slot: usize,
    feature: String,
    direction: EditDirection,
    step: f64,
    /// Lock set to hold during the edit; omitted keeps the current one.
    locks: Option<Vec<String>>,
}

async fn edit(
    State(state): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<EditRequest>,
) -> Result<Json<SessionView>, ApiError> {
    mutate(&state, &id, |session| {
        let mut actions = Vec::new();
        if let Some(locks) = req.locks {
            if locks.as_slice() != session.registry().locked() {
                actions.push(Action::SetLocks { features: locks });
            }
        }
        actions.push(Action::Edit {
            slot: req.slot,
            feature: req.feature,
            direction: req.direction,
            step: req.step,
        });
        Ok(actions)
    })
    .await
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LocksRequest {
    feature: String,
    /// Also (un)lock every feature whose similarity with `feature` exceeds
    /// the smart-lock threshold.
    #[serde(default)]
    smart: bool,
    #[serde(default = "default_true")]
    locked: bool,
}

async fn locks(
    State(state): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<LocksRequest>,
) -> Result<Json<SessionView>, ApiError> {
    mutate(&state, &id, |session| {
        let registry = session.registry();
        let targets = if req.smart {
            registry.smart_lock_set(&req.feature)?
        } else {
            registry.axis(&req.feature)?;
            vec![req.feature.clone()]
        };
        let mut features = registry.locked().to_vec();
        if req.locked {
            for t in targets {
                if !features.contains(&t) {
                    features.push(t);
                }
            }
        } else {
            features.retain(|f| !targets.contains(f));
        }
        Ok(vec![Action::SetLocks { features }])
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetRequest {
    name: String,
    slot: usize,
}

async fn save_preset(
    State(state): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<PresetRequest>,
) -> Result<Json<SessionView>, ApiError> {
    mutate(&state, &id, |_| {
        Ok(vec![Action::SavePreset {
            name: req.name,
            slot: req.slot,
        }])
    })
    .await
}

async fn load_preset(
    State(state): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<PresetRequest>,
) -> Result<Json<SessionView>, ApiError> {
    mutate(&state, &id, |_| {
        Ok(vec![Action::LoadPreset {
            name: req.name,
            slot: req.slot,
        }])
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FinishRequest {
    selected: Vec<usize>,
    /// Frames per animation segment, endpoints included.
    #[serde(default = "default_frames")]
    frames: usize,
}

fn default_frames() -> usize {
    12
}

async fn finish(
    State(state): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<FinishRequest>,
) -> Result<Json<SessionView>, ApiError> {
    mutate(&state, &id, |_| {
        Ok(vec![Action::Finish {
            selected: req.selected,
            frames_per_segment: req.frames,
        }])
    })
    .await
}

async fn session_file(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionFile>, ApiError> {
    let entry = state.session(&id).await?;
    let guard = entry.lock().await;
    Ok(Json(guard.session.to_file()))
}

const FRAME_DELAY_MS: u32 = 80;

async fn animation(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let entry = state.session(&id).await?;
    let (session, generator) = {
        let guard = entry.lock().await;
        (guard.session.clone(), guard.generator.clone())
    };
    let gif = tokio::task::spawn_blocking(move || session.export(&generator)?.to_gif(FRAME_DELAY_MS))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "image/gif")], gif).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LatentsView {
    pub generation: u64,
    pub slots: Vec<Vec<f64>>,
}

async fn debug_latents(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<LatentsView>, ApiError> {
    let entry = state.session(&id).await?;
    let guard = entry.lock().await;
    let pop = guard.session.population();
    Ok(Json(LatentsView {
        generation: pop.generation,
        slots: pop.latents().map(|z| z.as_slice().to_vec()).collect(),
    }))
}

async fn image(State(state): State<AppState>, Path(key): Path<String>) -> Result<Response, ApiError> {
    let png = state
        .images()
        .png(&key)
        .await?
        .ok_or_else(|| ApiError::not_found(format!("unknown image '{key}'")))?;
    Ok((
        [
            (header::CONTENT_TYPE, "image/png"),
            (header::CACHE_CONTROL, "public, max-age=31536000, immutable"),
        ],
        png.as_ref().clone(),
    )
        .into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MergeRequest {
    /// Ids of finished sessions held by this server.
    #[serde(default)]
    sessions: Vec<String>,
    /// Finished session files supplied inline.
    #[serde(default)]
    files: Vec<SessionFile>,
    weighting: Weighting,
    weights: Option<WitnessWeights>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MergeView {
    pub image_key: String,
    pub image_url: String,
    pub latent: Vec<f64>,
    pub weighting: Weighting,
    pub weights: WitnessWeights,
    pub witness_types: Vec<WitnessType>,
    pub note: String,
}

async fn merge(
    State(state): State<AppState>,
    JsonBody(req): JsonBody<MergeRequest>,
) -> Result<Json<MergeView>, ApiError> {
    let mut sessions = Vec::new();
    for id in &req.sessions {
        let entry = state.session(id).await?;
        sessions.push(entry.lock().await.session.clone());
    }
    for file in req.files {
        sessions.push(Session::from_file(file)?);
    }
    let first = sessions
        .first()
        .ok_or_else(|| ApiError::from(facebreed_core::Error::EmptySelection))?;
    let descriptor = first.settings().generator.clone();
    if sessions.iter().any(|s| s.settings().generator != descriptor) {
        return Err(ApiError::from(facebreed_core::Error::Validation(
            "merged sessions must share one generator".into(),
        )));
    }
    let weights = req.weights.unwrap_or_default();
    let latent: LatentVector = merge_sessions(&sessions, req.weighting, &weights)?;
    let (generator, _) = state.backend_for(Some(&descriptor))?;
    let key = state.images().register(&generator, &descriptor, &latent);
    state.images().render(std::slice::from_ref(&key)).await?;
    Ok(Json(MergeView {
        image_url: image_url(&key),
        image_key: key,
        latent: latent.into_inner(),
        weighting: req.weighting,
        weights,
        witness_types: sessions.iter().map(Session::witness_type).collect(),
        note: "per-witness weights are configurable defaults, not calibrated values".into(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FeaturesView {
    pub dim: usize,
    pub features: Vec<String>,
    /// Pairwise cosine similarity, rows and columns in `features` order.
    pub similarity: Vec<Vec<f64>>,
}

async fn features(State(state): State<AppState>) -> Json<FeaturesView> {
    let axes = &state.inner.axes;
    Json(FeaturesView {
        dim: axes.dim(),
        features: axes.names().map(str::to_string).collect(),
        similarity: axes.similarity_matrix().to_vec(),
    })
}
