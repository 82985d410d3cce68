//! HTTP front end for facial composite sessions.
//!
//! Every mutating route takes the session's mutex, applies the change to a
//! copy, renders the resulting images and only then commits, so a failed
//! request leaves the session untouched. POST routes honour an
//! `Idempotency-Key` header.

mod error;
mod idempotency;
mod routes;
mod state;
mod view;

pub use error::ApiError;
pub use idempotency::{HEADER as IDEMPOTENCY_HEADER, REPLAYED_HEADER};
pub use routes::{router, FeaturesView, LatentsView, MergeView};
pub use state::{AppState, ServerConfig};
pub use view::{FeatureView, FinishView, SessionView, SettingsView, SlotView};

/// Builds the router for `config`.
pub fn app(config: ServerConfig) -> facebreed_core::Result<axum::Router> {
    Ok(router(AppState::new(config)?))
}
