//! Replay cache for POST requests carrying an `Idempotency-Key` header.
//!
//! The first response for a (path, key) pair is stored and returned again
//! for every retry with the same body. Requests sharing a key wait for the
//! first one to finish. Server errors are not cached, so a retry after a
//! backend outage runs again.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{Request, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};

use crate::error::ApiError;
use crate::state::AppState;

pub const HEADER: &str = "idempotency-key";
pub const REPLAYED_HEADER: &str = "idempotent-replayed";

const MAX_BODY: usize = 64 * 1024 * 1024;

struct Stored {
    request: Bytes,
    status: StatusCode,
    content_type: Option<HeaderValue>,
    body: Bytes,
}

type Slot = Arc<tokio::sync::Mutex<Option<Stored>>>;

#[derive(Default)]
pub(crate) struct IdempotencyCache {
    slots: Mutex<HashMap<String, Slot>>,
}

impl IdempotencyCache {
    fn slot(&self, scope: String) -> Slot {
        self.slots.lock().unwrap().entry(scope).or_default().clone()
    }
}

fn rebuild(status: StatusCode, content_type: Option<HeaderValue>, body: Bytes) -> Response {
    let mut resp = Response::new(Body::from(body));
    *resp.status_mut() = status;
    if let Some(ct) = content_type {
        resp.headers_mut().insert(axum::http::header::CONTENT_TYPE, ct);
    }
    resp
}

pub(crate) async fn middleware(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if req.method() != Method::POST {
        return next.run(req).await;
    }
    let Some(key) = req.headers().get(HEADER).cloned() else {
        return next.run(req).await;
    };
    let Ok(key) = key.to_str().map(str::to_owned) else {
        return ApiError::bad_request("idempotency key must be visible ASCII").into_response();
    };
    let scope = format!("{} {}", req.uri().path(), key);
    let (parts, body) = req.into_parts();
    let request = match to_bytes(body, MAX_BODY).await {
        Ok(b) => b,
        Err(e) => return ApiError::bad_request(e.to_string()).into_response(),
    };

    let slot = state.inner.idempotency.slot(scope);
    let mut stored = slot.lock().await;
    if let Some(s) = stored.as_ref() {
        if s.request != request {
            return ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "idempotency_key_reused",
                "idempotency key was already used with a different body",
            )
            .into_response();
        }
        let mut resp = rebuild(s.status, s.content_type.clone(), s.body.clone());
        resp.headers_mut()
            .insert(REPLAYED_HEADER, HeaderValue::from_static("true"));
        return resp;
    }

    let resp = next
        .run(Request::from_parts(parts, Body::from(request.clone())))
        .await;
    let status = resp.status();
    let content_type = resp.headers().get(axum::http::header::CONTENT_TYPE).cloned();
    let body = match to_bytes(resp.into_body(), MAX_BODY).await {
        Ok(b) => b,
        Err(e) => return ApiError::internal(e.to_string()).into_response(),
    };
    if !status.is_server_error() {
        *stored = Some(Stored {
            request,
            status,
            content_type: content_type.clone(),
            body: body.clone(),
        });
    }
    rebuild(status, content_type, body)
}
