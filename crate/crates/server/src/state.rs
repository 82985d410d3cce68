use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use facebreed_core::axes::AxisRegistry;
use facebreed_core::generator::{image_key, Generator, GeneratorDescriptor};
use facebreed_core::latent::LatentVector;
use facebreed_core::session::Session;
use facebreed_core::{Error, Result};
use tokio::task::JoinSet;

use crate::error::ApiError;
use crate::idempotency::IdempotencyCache;

/// Startup configuration.
#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub generator: GeneratorDescriptor,
    /// Axes for the configured generator. Required unless it is synthetic.
    pub axes: Option<AxisRegistry>,
    /// Where sessions are persisted, one `<id>.json` per session.
    pub data_dir: Option<PathBuf>,
}

impl ServerConfig {
    pub fn new(generator: GeneratorDescriptor) -> Self {
        Self {
            generator,
            axes: None,
            data_dir: None,
        }
    }

    /// Reads the descriptor and axis files, if given.
    pub fn from_paths(
        generator: Option<&Path>,
        axes: Option<&Path>,
        data_dir: Option<PathBuf>,
    ) -> Result<Self> {
        let generator = match generator {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                    path: p.to_path_buf(),
                    source: e,
                })?;
                serde_json::from_str(&text)?
            }
            None => GeneratorDescriptor::synthetic(0, facebreed_core::latent::DEFAULT_DIM),
        };
        let axes = axes.map(AxisRegistry::load).transpose()?;
        Ok(Self {
            generator,
            axes,
            data_dir,
        })
    }
}

pub(crate) struct SessionEntry {
    pub session: Session,
    pub generator: Arc<Generator>,
}

pub(crate) type SharedEntry = Arc<tokio::sync::Mutex<SessionEntry>>;

struct StoredImage {
    latent: LatentVector,
    generator: Arc<Generator>,
    png: Option<Arc<Vec<u8>>>,
}

/// Content-addressed renderings. Keys are registered with their latent so
/// a PNG can be produced on first request.
#[derive(Default)]
pub(crate) struct ImageStore {
    images: Mutex<HashMap<String, StoredImage>>,
}

impl ImageStore {
    pub fn register(&self, generator: &Arc<Generator>, descriptor: &GeneratorDescriptor, latent: &LatentVector) -> String {
        let key = image_key(descriptor, latent);
        self.images
            .lock()
            .unwrap()
            .entry(key.clone())
            .or_insert_with(|| StoredImage {
                latent: latent.clone(),
                generator: generator.clone(),
                png: None,
            });
        key
    }

    /// Renders every listed key not yet cached, concurrently.
    pub async fn render(&self, keys: &[String]) -> Result<(), ApiError> {
        let mut jobs = JoinSet::new();
        {
            let images = self.images.lock().unwrap();
            let mut seen = std::collections::HashSet::new();
            for key in keys {
                let Some(img) = images.get(key) else { continue };
                if img.png.is_some() || !seen.insert(key.clone()) {
                    continue;
                }
                let (key, latent, generator) = (key.clone(), img.latent.clone(), img.generator.clone());
                jobs.spawn_blocking(move || {
                    let png = generator.generate(&latent).and_then(|b| b.to_png());
                    (key, png)
                });
            }
        }
        let mut first_error = None;
        while let Some(done) = jobs.join_next().await {
            let (key, png) = done.map_err(|e| ApiError::internal(e.to_string()))?;
            match png {
                Ok(png) => {
                    if let Some(img) = self.images.lock().unwrap().get_mut(&key) {
                        img.png = Some(Arc::new(png));
                    }
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        match first_error {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    }

    pub async fn png(&self, key: &str) -> Result<Option<Arc<Vec<u8>>>, ApiError> {
        let known = self.images.lock().unwrap().contains_key(key);
        if !known {
            return Ok(None);
        }
        self.render(&[key.to_string()]).await?;
        Ok(self.images.lock().unwrap().get(key).and_then(|i| i.png.clone()))
    }
}

pub(crate) struct Inner {
    pub config: ServerConfig,
    pub generator: Arc<Generator>,
    pub axes: AxisRegistry,
    pub sessions: Mutex<HashMap<String, SharedEntry>>,
    pub images: ImageStore,
    pub idempotency: IdempotencyCache,
}

/// Shared server state.
#[derive(Clone)]
pub struct AppState {
    pub(crate) inner: Arc<Inner>,
}

impl AppState {
    pub fn new(config: ServerConfig) -> Result<Self> {
        let generator = Generator::from_descriptor(&config.generator)?;
        let axes = match (&config.axes, &generator) {
            (Some(axes), _) => axes.clone(),
            (None, Generator::Synthetic(g)) => AxisRegistry::new(g.dim(), g.feature_axes()?)?,
            (None, Generator::External(_)) => {
                return Err(Error::Configuration(
                    "an axis file is required for an external generator".into(),
                ))
            }
        };
        if axes.dim() != config.generator.dim {
            return Err(Error::DimensionMismatch {
                expected: config.generator.dim,
                found: axes.dim(),
            });
        }
        if let Some(dir) = &config.data_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
        }
        Ok(Self {
            inner: Arc::new(Inner {
                generator: Arc::new(generator),
                axes,
                config,
                sessions: Mutex::new(HashMap::new()),
                images: ImageStore::default(),
                idempotency: IdempotencyCache::default(),
            }),
        })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.inner.config
    }

    /// Generator and axes for a session asking for `descriptor`.
    pub(crate) fn backend_for(&self, descriptor: Option<&GeneratorDescriptor>) -> Result<(Arc<Generator>, AxisRegistry)> {
        let inner = &self.inner;
        let Some(d) = descriptor.filter(|d| **d != inner.config.generator) else {
            return Ok((inner.generator.clone(), inner.axes.clone()));
        };
        let generator = Generator::from_descriptor(d)?;
        let axes = match &generator {
            Generator::Synthetic(g) => AxisRegistry::new(g.dim(), g.feature_axes()?)?,
            Generator::External(_) if inner.axes.dim() == d.dim => inner.axes.clone(),
            Generator::External(_) => {
                return Err(Error::Configuration(format!(
                    "no axes configured for a {}-dimensional external generator",
                    d.dim
                )))
            }
        };
        Ok((Arc::new(generator), axes))
    }

    pub(crate) fn insert(&self, session: Session, generator: Arc<Generator>) -> SharedEntry {
        let id = session.id().to_string();
        let entry = Arc::new(tokio::sync::Mutex::new(SessionEntry { session, generator }));
        self.inner.sessions.lock().unwrap().insert(id, entry.clone());
        entry
    }

    pub(crate) fn contains(&self, id: &str) -> bool {
        self.inner.sessions.lock().unwrap().contains_key(id)
            || self.session_path(id).is_some_and(|p| p.exists())
    }

    pub(crate) fn session_path(&self, id: &str) -> Option<PathBuf> {
        let valid = !id.is_empty()
            && id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        let dir = self.inner.config.data_dir.as_ref()?;
        valid.then(|| dir.join(format!("{id}.json")))
    }

    /// Looks a session up in memory, then in the data directory.
    pub(crate) async fn session(&self, id: &str) -> Result<SharedEntry, ApiError> {
        if let Some(entry) = self.inner.sessions.lock().unwrap().get(id) {
            return Ok(entry.clone());
        }
        let missing = || ApiError::not_found(format!("unknown session '{id}'"));
        let path = self.session_path(id).ok_or_else(missing)?;
        if !path.exists() {
            return Err(missing());
        }
        let session = tokio::task::spawn_blocking(move || Session::load(&path))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??;
        let generator = Arc::new(Generator::from_descriptor(&session.settings().generator)?);
        let mut sessions = self.inner.sessions.lock().unwrap();
        let entry = sessions
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(tokio::sync::Mutex::new(SessionEntry { session, generator })));
        Ok(entry.clone())
    }

    pub(crate) async fn persist(&self, session: &Session) -> Result<(), ApiError> {
        let Some(path) = self.session_path(session.id()) else {
            return Ok(());
        };
        let session = session.clone();
        tokio::task::spawn_blocking(move || session.save(&path))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??;
        Ok(())
    }

    pub(crate) fn images(&self) -> &ImageStore {
        &self.inner.images
    }
}
